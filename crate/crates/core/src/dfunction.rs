//! Closed-form algebra of dominating functions.
//!
//! A dominating function is a nondecreasing map `psi: R+ -> R+` with
//! `psi(0) = 0` that bounds an operator's modulus of continuity on comparable
//! pairs: `||Tx - Ty|| <= psi(||x - y||)`. When additionally `psi(r) < r` for
//! every `r > 0`, the operator is a nonlinear contraction and monotone
//! iteration converges.
//!
//! The expression grammar below is closed under exactly the combinators the
//! block construction needs: every leaf is nondecreasing with value 0 at 0,
//! and sums, compositions and nonnegative scalings preserve both properties,
//! so the axioms hold by construction for every representable tree.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::grammar::Cursor;

/// Dominating function as an expression tree.
///
/// Leaves: `Linear(slope)` is `r -> slope * r` (slope >= 0) and
/// `Hyperbolic(l, k)` is `r -> l * r / (k + r)` (l > 0, k > 0).
/// Subtrees are shared via `Arc`, so clones are cheap.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub enum DFunction {
    Linear { slope: f64 },
    Hyperbolic { l: f64, k: f64 },
    Sum(Arc<DFunction>, Arc<DFunction>),
    Compose { outer: Arc<DFunction>, inner: Arc<DFunction> },
    Scale { factor: f64, inner: Arc<DFunction> },
}

impl DFunction {
    pub fn linear(slope: f64) -> Result<Self, DFunctionError> {
        if !slope.is_finite() || slope < 0.0 {
            return Err(DFunctionError::InvalidParameter(format!(
                "linear slope must be finite and >= 0, got {slope}"
            )));
        }
        Ok(DFunction::Linear { slope })
    }

    pub fn hyperbolic(l: f64, k: f64) -> Result<Self, DFunctionError> {
        if !(l.is_finite() && k.is_finite() && l > 0.0 && k > 0.0) {
            return Err(DFunctionError::InvalidParameter(format!(
                "hyperbolic parameters must be finite and positive, got l = {l}, k = {k}"
            )));
        }
        Ok(DFunction::Hyperbolic { l, k })
    }

    pub fn sum(left: DFunction, right: DFunction) -> Self {
        DFunction::Sum(Arc::new(left), Arc::new(right))
    }

    pub fn compose(outer: DFunction, inner: DFunction) -> Self {
        DFunction::Compose {
            outer: Arc::new(outer),
            inner: Arc::new(inner),
        }
    }

    pub fn scale(factor: f64, inner: DFunction) -> Result<Self, DFunctionError> {
        if !factor.is_finite() || factor < 0.0 {
            return Err(DFunctionError::InvalidParameter(format!(
                "scale factor must be finite and >= 0, got {factor}"
            )));
        }
        Ok(DFunction::Scale {
            factor,
            inner: Arc::new(inner),
        })
    }

    /// Evaluate at `r >= 0`. By construction `eval(0) == 0` exactly.
    pub fn eval(&self, r: f64) -> Result<f64, DFunctionError> {
        if !r.is_finite() || r < 0.0 {
            return Err(DFunctionError::NegativeInput(r));
        }
        Ok(self.eval_unchecked(r))
    }

    fn eval_unchecked(&self, r: f64) -> f64 {
        match self {
            DFunction::Linear { slope } => slope * r,
            DFunction::Hyperbolic { l, k } => l * r / (k + r),
            DFunction::Sum(a, b) => a.eval_unchecked(r) + b.eval_unchecked(r),
            DFunction::Compose { outer, inner } => outer.eval_unchecked(inner.eval_unchecked(r)),
            DFunction::Scale { factor, inner } => factor * inner.eval_unchecked(r),
        }
    }
}

/// Certificate of the block fixed-point construction: with blocks A, B, C
/// carrying dominating functions `psi_a`, `psi_b`, `psi_c` and an inner
/// contraction constant `k < 1`, the composed map inherits
///
/// ```text
/// psi(r) = psi_b( psi_c(r) / (1 - k) ) + psi_a(r)
/// ```
///
/// where `1 / (1 - k)` is the Lipschitz gain of the inner resolvent.
/// Fails when `k >= 1`: no resolvent certificate exists then.
pub fn compose_block_psi(
    psi_a: &DFunction,
    psi_b: &DFunction,
    psi_c: &DFunction,
    k: f64,
) -> Result<DFunction, DFunctionError> {
    if !(0.0..1.0).contains(&k) {
        return Err(DFunctionError::ResolventUnavailable { k });
    }
    let resolvent_gain = DFunction::linear(1.0 / (1.0 - k))?;
    Ok(DFunction::sum(
        DFunction::compose(
            psi_b.clone(),
            DFunction::compose(resolvent_gain, psi_c.clone()),
        ),
        psi_a.clone(),
    ))
}

/// Which fixed-point condition a contraction check certifies.
///
/// `Hybrid` is the condition for `x = Ax * Bx + Cx` with the caller packaging
/// `psi = M * psi_a + psi_c` and `m = 1`; `Block` is `m * psi(r) < r` for the
/// block map. Both are checked with strict inequality at every sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum ContractionForm {
    Hybrid,
    Block,
}

/// Result of sampling `m * psi(r) - r` over `(0, r_max]`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ContractionReport {
    pub form: ContractionForm,
    pub holds: bool,
    /// `min over sampled r of (r - m * psi(r))`; positive iff the check holds.
    pub margin: f64,
    /// Sample point where the margin is attained.
    pub witness_r: f64,
    pub r_max: f64,
    /// Number of sampled points; 0 when the exact fast path decided.
    pub samples: usize,
    /// True when a leaf-level inequality decided without sampling.
    pub exact: bool,
}

impl fmt::Display for ContractionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} contraction check ({}): {}; margin {:.3e} at r = {:.3e} (r_max = {:.3e}); \
             strict inequality m*psi(r) < r required at every point",
            match self.form {
                ContractionForm::Hybrid => "hybrid",
                ContractionForm::Block => "block",
            },
            if self.exact {
                "exact leaf inequality".to_string()
            } else {
                format!("{} log-spaced samples", self.samples)
            },
            if self.holds { "holds" } else { "FAILS" },
            self.margin,
            self.witness_r,
            self.r_max,
        )
    }
}

pub const CONTRACTION_R_MIN: f64 = 1e-8;
pub const CONTRACTION_SAMPLES: usize = 2048;

/// Check `m * psi(r) < r` strictly over `(0, r_max]`.
///
/// For a bare `Linear` leaf with `m * slope < 1` and a bare `Hyperbolic` leaf
/// with `m * l <= k` the inequality holds for every `r > 0` by algebra, so
/// those cases short-circuit without sampling; everything else is sampled on
/// a logarithmic grid between [`CONTRACTION_R_MIN`] and `r_max`.
pub fn check_contraction(
    psi: &DFunction,
    m: f64,
    form: ContractionForm,
    r_max: f64,
    samples: usize,
) -> Result<ContractionReport, DFunctionError> {
    validate_check_args(m, r_max, samples)?;
    match psi {
        DFunction::Linear { slope } if m * slope < 1.0 => {
            let margin = CONTRACTION_R_MIN * (1.0 - m * slope);
            Ok(exact_report(form, margin, r_max))
        }
        DFunction::Hyperbolic { l, k } if m * l <= *k => {
            // r - m*l*r/(k+r) = r * (k + r - m*l) / (k + r) > 0 for all r > 0.
            let r = CONTRACTION_R_MIN;
            let margin = r * (k + r - m * l) / (k + r);
            Ok(exact_report(form, margin, r_max))
        }
        _ => check_contraction_sampled(psi, m, form, r_max, samples),
    }
}

/// The sampled check, always evaluated; exposed so the exact fast path can be
/// cross-validated against it.
pub fn check_contraction_sampled(
    psi: &DFunction,
    m: f64,
    form: ContractionForm,
    r_max: f64,
    samples: usize,
) -> Result<ContractionReport, DFunctionError> {
    validate_check_args(m, r_max, samples)?;
    let r_min = CONTRACTION_R_MIN.min(r_max / 2.0);
    let ratio = r_max / r_min;
    let mut margin = f64::INFINITY;
    let mut witness_r = r_min;
    for i in 0..samples {
        let frac = i as f64 / (samples - 1) as f64;
        let r = r_min * ratio.powf(frac);
        let gap = r - m * psi.eval(r)?;
        if gap < margin {
            margin = gap;
            witness_r = r;
        }
    }
    Ok(ContractionReport {
        form,
        holds: margin > 0.0,
        margin,
        witness_r,
        r_max,
        samples,
        exact: false,
    })
}

fn exact_report(form: ContractionForm, margin: f64, r_max: f64) -> ContractionReport {
    ContractionReport {
        form,
        holds: true,
        margin,
        witness_r: CONTRACTION_R_MIN,
        r_max,
        samples: 0,
        exact: true,
    }
}

fn validate_check_args(m: f64, r_max: f64, samples: usize) -> Result<(), DFunctionError> {
    if !m.is_finite() || m < 0.0 {
        return Err(DFunctionError::InvalidParameter(format!(
            "m must be finite and >= 0, got {m}"
        )));
    }
    if !r_max.is_finite() || r_max <= 0.0 {
        return Err(DFunctionError::InvalidParameter(format!(
            "r_max must be positive, got {r_max}"
        )));
    }
    if samples < 2 {
        return Err(DFunctionError::InvalidParameter(format!(
            "need at least 2 samples, got {samples}"
        )));
    }
    Ok(())
}

#[derive(Debug, Error, PartialEq)]
pub enum DFunctionError {
    #[error("dominating functions are defined on nonnegative reals, got {0}")]
    NegativeInput(f64),
    #[error("{0}")]
    InvalidParameter(String),
    #[error("resolvent certificate unavailable: contraction constant k = {k} is not below 1")]
    ResolventUnavailable { k: f64 },
    #[error("parse error {0}")]
    Parse(#[from] crate::grammar::GrammarError),
}

// Prefix-notation serialization, e.g. `sum(compose(hyp(1,1), lin(0.5)), hyp(1,2))`.

impl fmt::Display for DFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DFunction::Linear { slope } => write!(f, "lin({slope})"),
            DFunction::Hyperbolic { l, k } => write!(f, "hyp({l},{k})"),
            DFunction::Sum(a, b) => write!(f, "sum({a},{b})"),
            DFunction::Compose { outer, inner } => write!(f, "compose({outer},{inner})"),
            DFunction::Scale { factor, inner } => write!(f, "scale({factor},{inner})"),
        }
    }
}

impl FromStr for DFunction {
    type Err = DFunctionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut cur = Cursor::new(s);
        let out = parse_expr(&mut cur)?;
        cur.expect_end()?;
        Ok(out)
    }
}

fn parse_expr(cur: &mut Cursor<'_>) -> Result<DFunction, DFunctionError> {
    let name = cur.ident()?;
    cur.eat('(')?;
    let out = match name {
        "lin" => DFunction::linear(cur.number()?)?,
        "hyp" => {
            let l = cur.number()?;
            cur.eat(',')?;
            let k = cur.number()?;
            DFunction::hyperbolic(l, k)?
        }
        "sum" => {
            let a = parse_expr(cur)?;
            cur.eat(',')?;
            let b = parse_expr(cur)?;
            DFunction::sum(a, b)
        }
        "compose" => {
            let outer = parse_expr(cur)?;
            cur.eat(',')?;
            let inner = parse_expr(cur)?;
            DFunction::compose(outer, inner)
        }
        "scale" => {
            let factor = cur.number()?;
            cur.eat(',')?;
            let inner = parse_expr(cur)?;
            DFunction::scale(factor, inner)?
        }
        other => {
            return Err(DFunctionError::Parse(
                cur.error(format!("unknown dominating-function form '{other}'")),
            ))
        }
    };
    cur.eat(')')?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_hyperbolic_and_linear() {
        let hyp = DFunction::hyperbolic(1.0, 1.0).unwrap();
        assert_eq!(hyp.eval(1.0).unwrap(), 0.5);
        let lin = DFunction::linear(0.3).unwrap();
        assert_eq!(lin.eval(2.0).unwrap(), 0.6);
    }

    #[test]
    fn eval_is_zero_at_zero() {
        let psi = DFunction::sum(
            DFunction::compose(
                DFunction::hyperbolic(2.0, 0.5).unwrap(),
                DFunction::linear(3.0).unwrap(),
            ),
            DFunction::scale(4.0, DFunction::hyperbolic(1.0, 2.0).unwrap()).unwrap(),
        );
        assert_eq!(psi.eval(0.0).unwrap(), 0.0);
    }

    #[test]
    fn eval_rejects_negative_input() {
        let psi = DFunction::linear(1.0).unwrap();
        assert!(matches!(
            psi.eval(-0.1),
            Err(DFunctionError::NegativeInput(_))
        ));
    }

    #[test]
    fn compose_block_psi_hand_evaluated() {
        // psi_a = psi_b = hyp(1,1), psi_c = lin(0.2), k = 0.5:
        // psi(1) = psi_b(0.2 / 0.5) + psi_a(1) = 0.4/1.4 + 0.5 = 11/14.
        let hyp = DFunction::hyperbolic(1.0, 1.0).unwrap();
        let psi_c = DFunction::linear(0.2).unwrap();
        let psi = compose_block_psi(&hyp, &hyp, &psi_c, 0.5).unwrap();
        let expected = 0.4 / 1.4 + 0.5;
        assert!((psi.eval(1.0).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn compose_block_psi_degenerate_branch() {
        let hyp_a = DFunction::hyperbolic(0.7, 1.3).unwrap();
        let hyp_b = DFunction::hyperbolic(1.0, 1.0).unwrap();
        let zero_c = DFunction::linear(0.0).unwrap();
        let psi = compose_block_psi(&hyp_a, &hyp_b, &zero_c, 0.5).unwrap();
        for r in [0.0, 0.3, 1.0, 7.5] {
            assert_eq!(psi.eval(r).unwrap(), hyp_a.eval(r).unwrap());
        }
    }

    #[test]
    fn compose_block_psi_identity_gain_at_k_zero() {
        let hyp_a = DFunction::hyperbolic(0.5, 1.0).unwrap();
        let hyp_b = DFunction::hyperbolic(0.8, 2.0).unwrap();
        let lin_c = DFunction::linear(0.4).unwrap();
        let psi = compose_block_psi(&hyp_a, &hyp_b, &lin_c, 0.0).unwrap();
        for r in [0.1, 1.0, 4.2] {
            let expected =
                hyp_b.eval(lin_c.eval(r).unwrap()).unwrap() + hyp_a.eval(r).unwrap();
            assert!((psi.eval(r).unwrap() - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn compose_block_psi_rejects_k_at_or_above_one() {
        let hyp = DFunction::hyperbolic(1.0, 1.0).unwrap();
        let lin = DFunction::linear(0.1).unwrap();
        assert!(matches!(
            compose_block_psi(&hyp, &hyp, &lin, 1.0),
            Err(DFunctionError::ResolventUnavailable { .. })
        ));
    }

    #[test]
    fn contraction_hyperbolic_fast_path() {
        let psi = DFunction::hyperbolic(1.0, 2.0).unwrap();
        let report =
            check_contraction(&psi, 1.0, ContractionForm::Block, 10.0, CONTRACTION_SAMPLES)
                .unwrap();
        assert!(report.holds);
        assert!(report.exact);
        let sampled =
            check_contraction_sampled(&psi, 1.0, ContractionForm::Block, 10.0, CONTRACTION_SAMPLES)
                .unwrap();
        assert!(sampled.holds);
    }

    #[test]
    fn contraction_expanding_linear_fails() {
        let psi = DFunction::linear(1.5).unwrap();
        let report =
            check_contraction(&psi, 1.0, ContractionForm::Hybrid, 10.0, 64).unwrap();
        assert!(!report.holds);
        assert!(report.margin < 0.0);
    }

    #[test]
    fn contraction_linear_margin_at_smallest_sample() {
        let psi = DFunction::linear(0.9).unwrap();
        let report = check_contraction(&psi, 1.0, ContractionForm::Hybrid, 10.0, 64).unwrap();
        assert!(report.holds);
        assert!((report.margin - 0.1 * CONTRACTION_R_MIN).abs() < 1e-18);
        let sampled =
            check_contraction_sampled(&psi, 1.0, ContractionForm::Hybrid, 10.0, 64).unwrap();
        assert!(sampled.holds);
        assert!((sampled.margin - 0.1 * CONTRACTION_R_MIN).abs() < 1e-18);
        assert_eq!(sampled.witness_r, CONTRACTION_R_MIN);
    }

    #[test]
    fn grammar_round_trip() {
        let text = "sum(compose(hyp(1,1),lin(0.5)),hyp(1,2))";
        let psi: DFunction = text.parse().unwrap();
        assert_eq!(psi.to_string(), text);
        let again: DFunction = psi.to_string().parse().unwrap();
        assert_eq!(again, psi);
    }

    #[test]
    fn grammar_rejects_unknown_form() {
        let err = "exp(1)".parse::<DFunction>().unwrap_err();
        assert!(err.to_string().contains("unknown"));
    }
}
