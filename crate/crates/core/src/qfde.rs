//! End-to-end treatment of the coupled quadratic system: problem instances,
//! the hypothesis audit gating a run, lower-solution handling, assembly into
//! the block engine, and the solution report.
//!
//! A run solves the integral form of the system,
//!
//! ```text
//! x(t) = f1(t, x(t)) + f2(t, y(t)) * ( c e^(-lambda t)
//!        + e^(-lambda t) int_0^t e^(lambda s) g(s, y(s)) ds )
//! y(t) = 1/(1 - b(t)|x(t)|) - p(t, 1/(1 - b(t)|x(t)|)) + p(t, y(t))
//! ```
//!
//! by monotone fixed-point iteration of `x -> Ax + Tx * T'x` with
//! `T = B (I-D)^{-1} C` and `T' = B' (I-D)^{-1} C`, starting from a lower
//! solution.

use thiserror::Error;

use crate::dfunction::{
    check_contraction, compose_block_psi, ContractionForm, ContractionReport, DFunction,
    CONTRACTION_SAMPLES,
};
use crate::engine::{estimate_m, run_block, Direction, EngineConfig, EngineError, IterationTrace};
use crate::fields::{ScalarField2, TimePoly};
use crate::operators::{
    apply_a, apply_b, apply_c, apply_d, volterra_offset, weighted_volterra, BlockKind,
    OperatorBlock, OperatorError,
};
use crate::ordered_space::{Grid, GridFunction};
use crate::resolvent::{resolvent_closed_form, ResolventError};
use crate::verify::{
    comparable_pair, smooth_profile, verify_dlipschitz, verify_monotone, CertificateReport,
    DomainBox, VerifyError,
};

/// Default singularity floor for the reciprocal weight `1/(1 - b|x|)`.
pub const DEFAULT_SINGULARITY_FLOOR: f64 = 1e-6;

/// A lower (or, for downward runs, upper) solution pair.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct LowerPair {
    pub u: GridFunction,
    pub v: GridFunction,
}

/// The full problem datum.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ProblemInstance {
    pub lambda: f64,
    pub grid: Grid,
    /// Coefficient of the reciprocal weight, a function of `t` alone.
    pub b: TimePoly,
    pub f1: ScalarField2,
    pub f2: ScalarField2,
    pub g: ScalarField2,
    pub p: ScalarField2,
    pub x0: f64,
    pub y0: f64,
    /// Numerator constant of the hyperbolic dominating function for f1, f2.
    pub hyp_l: f64,
    /// Denominator constant of the same; audits require `hyp_l <= hyp_k`.
    pub hyp_k: f64,
    /// Claimed contraction constant of `p`.
    pub contraction_k: f64,
    /// Claimed uniform bound for `g`, also capping the range-norm estimate.
    pub g_bound: f64,
    pub singularity_floor: f64,
    pub lower: Option<LowerPair>,
}

impl ProblemInstance {
    /// The canonical smoke instance: `lambda = 1` and every coefficient
    /// trivial, so the exact solution is `x(t) = e^(-t)`, `y = 1`.
    pub fn trivial(n_points: usize) -> ProblemInstance {
        ProblemInstance {
            lambda: 1.0,
            grid: Grid::new(1.0, n_points).expect("valid grid"),
            b: TimePoly::constant(0.0).unwrap(),
            f1: ScalarField2::zero(),
            f2: ScalarField2::constant(1.0).unwrap(),
            g: ScalarField2::zero(),
            p: ScalarField2::zero(),
            x0: 1.0,
            y0: 1.0,
            hyp_l: 1.0,
            hyp_k: 1.0,
            contraction_k: 0.0,
            g_bound: 0.0,
            singularity_floor: DEFAULT_SINGULARITY_FLOOR,
            lower: None,
        }
    }

    /// Pure integration instance: `lambda = 0`, `g = 1`, everything else
    /// trivial, `x0 = 0`. The exact solution `x(t) = t` is reproduced exactly
    /// at the nodes because the quadrature is exact for linear data.
    pub fn pure_integration(n_points: usize) -> ProblemInstance {
        let mut inst = ProblemInstance::trivial(n_points);
        inst.lambda = 0.0;
        inst.g = ScalarField2::constant(1.0).unwrap();
        inst.x0 = 0.0;
        inst.hyp_l = 0.5;
        inst.g_bound = 1.0;
        inst
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        let check = |name: &str, v: f64, pred: bool| -> Result<(), SolveError> {
            if !v.is_finite() || !pred {
                return Err(SolveError::Instance(format!("{name} = {v} is invalid")));
            }
            Ok(())
        };
        check("lambda", self.lambda, self.lambda >= 0.0)?;
        check("x0", self.x0, true)?;
        check("y0", self.y0, true)?;
        check("L", self.hyp_l, self.hyp_l > 0.0)?;
        check("K", self.hyp_k, self.hyp_k > 0.0)?;
        check("k", self.contraction_k, self.contraction_k >= 0.0)?;
        check("h_l1", self.g_bound, self.g_bound >= 0.0)?;
        check(
            "singularity_floor",
            self.singularity_floor,
            self.singularity_floor > 0.0,
        )?;
        if let Some(pair) = &self.lower {
            if pair.u.grid() != self.grid || pair.v.grid() != self.grid {
                return Err(SolveError::Instance(
                    "lower solution pair is not on the instance grid".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn sup_b(&self) -> f64 {
        self.b.sup_on_grid(&self.grid)
    }

    /// Bound used for sampled audits of the coefficient fields.
    fn audit_box(&self) -> DomainBox {
        let hi = 2.0f64.max(2.0 * self.x0.abs());
        DomainBox::new(0.0, hi).expect("valid audit box")
    }

    /// Audit box kept clear of the reciprocal-weight pole.
    fn safe_audit_box(&self) -> DomainBox {
        let plain = self.audit_box();
        let sup_b = self.sup_b();
        if sup_b <= 0.0 {
            return plain;
        }
        let hi = (0.8 / sup_b).min(plain.hi).max(1e-3);
        DomainBox::new(0.0, hi).expect("valid safe box")
    }
}

// ---------------------------------------------------------------------------
// Block assembly

pub fn a_block(inst: &ProblemInstance) -> OperatorBlock {
    let owned = inst.clone();
    let mut block = OperatorBlock::new(BlockKind::A, move |x| apply_a(&owned, x)).monotone();
    if let Ok(psi) = DFunction::hyperbolic(inst.hyp_l, inst.hyp_k) {
        block = block.with_certificate(psi);
    }
    block
}

pub fn b_block(inst: &ProblemInstance) -> OperatorBlock {
    let owned = inst.clone();
    let mut block = OperatorBlock::new(BlockKind::B, move |y| apply_b(&owned, y))
        .monotone()
        .positive();
    if let Ok(psi) = DFunction::hyperbolic(inst.hyp_l, inst.hyp_k) {
        block = block.with_certificate(psi);
    }
    block
}

pub fn c_block(inst: &ProblemInstance) -> OperatorBlock {
    let owned = inst.clone();
    OperatorBlock::new(BlockKind::C, move |x| apply_c(&owned, x)).monotone()
}

pub fn d_block(inst: &ProblemInstance) -> OperatorBlock {
    let owned = inst.clone();
    let mut block = OperatorBlock::new(BlockKind::D, move |y| apply_d(&owned, y)).monotone();
    if let Ok(psi) = DFunction::linear(inst.contraction_k) {
        block = block.with_certificate(psi);
    }
    block
}

pub fn bprime_block(inst: &ProblemInstance) -> OperatorBlock {
    let owned = inst.clone();
    let positive = matches!(volterra_offset(inst), Ok(c) if c >= 0.0);
    let block =
        OperatorBlock::new(BlockKind::BPrime, move |y| weighted_volterra(&owned, y)).monotone();
    if positive {
        block.positive()
    } else {
        block
    }
}

/// `T = B (I - D)^{-1} C`, evaluated through the closed-form resolvent.
pub fn t_block(inst: &ProblemInstance) -> OperatorBlock {
    let owned = inst.clone();
    let mut block = OperatorBlock::new(BlockKind::Composite, move |x| {
        let w = resolvent_closed_form(&owned, x)?;
        apply_b(&owned, &w)
    })
    .monotone()
    .positive();
    if let Some(psi) = t_certificate(inst) {
        block = block.with_certificate(psi);
    }
    block
}

/// `T' = B' (I - D)^{-1} C`. Positive whenever the integral offset `c` and
/// the integrand are nonnegative; the flag carries only the `c` part, the
/// sign of `g` is audited.
pub fn tprime_block(inst: &ProblemInstance) -> OperatorBlock {
    let owned = inst.clone();
    let positive = matches!(volterra_offset(inst), Ok(c) if c >= 0.0);
    let block = OperatorBlock::new(BlockKind::Composite, move |x| {
        let w = resolvent_closed_form(&owned, x)?;
        weighted_volterra(&owned, &w)
    })
    .monotone();
    if positive {
        block.positive()
    } else {
        block
    }
}

fn t_certificate(inst: &ProblemInstance) -> Option<DFunction> {
    let psi_b = DFunction::hyperbolic(inst.hyp_l, inst.hyp_k).ok()?;
    let psi_c = DFunction::linear((1.0 + inst.contraction_k) * inst.sup_b()).ok()?;
    if inst.contraction_k >= 1.0 {
        return None;
    }
    let gain = DFunction::linear(1.0 / (1.0 - inst.contraction_k)).ok()?;
    Some(DFunction::compose(psi_b, DFunction::compose(gain, psi_c)))
}

// ---------------------------------------------------------------------------
// Hypothesis audit

#[derive(Debug, Clone, serde::Serialize)]
pub struct HypothesisEntry {
    pub id: &'static str,
    pub label: &'static str,
    pub holds: bool,
    /// Largest violation observed (checks differ; the detail explains).
    pub worst_case: f64,
    pub detail: String,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct AdmissibilityCheck {
    /// `L * (|c| + h_l1)`.
    pub lhs: f64,
    /// `K`.
    pub rhs: f64,
    pub holds: bool,
    pub c: Option<f64>,
    pub detail: String,
}

/// Outcome of the full instance audit. `overall` requires every hypothesis
/// row, the admissibility inequality and the composed contraction check (in
/// its reported form) to hold.
#[derive(Debug, Clone, serde::Serialize)]
pub struct HypothesisReport {
    pub entries: Vec<HypothesisEntry>,
    pub admissibility: AdmissibilityCheck,
    /// The companion inequality `M1 ||gamma|| + K <= 1 - k` is displayed, not
    /// checked: the constants M1 and gamma have no definition in this model.
    pub secondary_inequality: String,
    /// Composed contraction check with the reported linear weight bound.
    pub composed: Option<ContractionReport>,
    /// Same check with the pole-corrected weight bound (`w_max^2` factor).
    pub composed_corrected: Option<ContractionReport>,
    pub composed_note: Option<String>,
    /// Sampled audit of the C block against the corrected linear bound.
    pub c_block_audit: Option<CertificateReport>,
    pub m_used: Option<f64>,
    pub overall: bool,
}

impl HypothesisReport {
    pub fn entry(&self, id: &str) -> Option<&HypothesisEntry> {
        self.entries.iter().find(|e| e.id == id)
    }
}

impl std::fmt::Display for HypothesisReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "hypothesis audit")?;
        for e in &self.entries {
            writeln!(
                f,
                "  {:<3} {:<44} {}  worst {:+.3e}  {}",
                e.id,
                e.label,
                if e.holds { "PASS" } else { "FAIL" },
                e.worst_case,
                e.detail,
            )?;
        }
        writeln!(
            f,
            "  admissibility L(|c| + h_l1) <= K: {:.6} <= {:.6}  {}  {}",
            self.admissibility.lhs,
            self.admissibility.rhs,
            if self.admissibility.holds { "PASS" } else { "FAIL" },
            self.admissibility.detail,
        )?;
        writeln!(f, "  secondary inequality: {}", self.secondary_inequality)?;
        match &self.composed {
            Some(r) => writeln!(f, "  composed contraction (reported bound): {r}")?,
            None => writeln!(
                f,
                "  composed contraction: unavailable ({})",
                self.composed_note.as_deref().unwrap_or("see rows above")
            )?,
        }
        if let Some(r) = &self.composed_corrected {
            writeln!(f, "  composed contraction (pole-corrected bound): {r}")?;
        }
        writeln!(f, "overall: {}", if self.overall { "PASS" } else { "FAIL" })
    }
}

fn entry(
    id: &'static str,
    label: &'static str,
    holds: bool,
    worst_case: f64,
    detail: String,
) -> HypothesisEntry {
    HypothesisEntry {
        id,
        label,
        holds,
        worst_case,
        detail,
    }
}

fn audit_failure(id: &'static str, label: &'static str, err: impl std::fmt::Display) -> HypothesisEntry {
    entry(id, label, false, f64::INFINITY, format!("audit error: {err}"))
}

/// Deterministic range scan of a field over the grid times a value linspace.
fn scan_field(
    inst: &ProblemInstance,
    field: &ScalarField2,
    domain: DomainBox,
    samples: usize,
) -> (f64, f64) {
    let mut min_v = f64::INFINITY;
    let mut max_v = f64::NEG_INFINITY;
    let step = (domain.hi - domain.lo) / (samples - 1) as f64;
    for t in inst.grid.nodes() {
        for j in 0..samples {
            let x = domain.lo + j as f64 * step;
            let v = field.eval(t, x);
            min_v = min_v.min(v);
            max_v = max_v.max(v);
        }
    }
    (min_v, max_v)
}

/// Audit every hypothesis the existence argument needs, on sampled data.
/// Evaluation failures are recorded in the affected row; the report is always
/// produced in full.
pub fn check_instance(inst: &ProblemInstance, trials: usize, rng_seed: u64) -> HypothesisReport {
    let grid = inst.grid;
    let plain_box = inst.audit_box();
    let safe_box = inst.safe_audit_box();
    let trials = trials.max(1);
    let mut entries = Vec::with_capacity(7);

    // H0: b evaluable and finite on the grid. Catalog members are continuous
    // by construction, so only finiteness is structural here.
    let sup_b = inst.sup_b();
    entries.push(entry(
        "H0",
        "coefficient b is continuous on the grid",
        sup_b.is_finite(),
        0.0,
        format!("sup|b| = {sup_b:.6}"),
    ));

    // H1: t -> f1(t, 0) bounded; report the bound.
    let f0 = grid
        .nodes()
        .fold(0.0f64, |m, t| m.max(inst.f1.eval(t, 0.0).abs()));
    entries.push(entry(
        "H1",
        "f1(., 0) is bounded",
        f0.is_finite(),
        0.0,
        format!("F0 = {f0:.6}"),
    ));

    // H2: f2 maps into the positive reals and is nondecreasing in x.
    let (min_f2, _) = scan_field(inst, &inst.f2, plain_box, 65);
    let b_blk = b_block(inst);
    match verify_monotone(&b_blk, grid, plain_box, trials, rng_seed ^ 0x01) {
        Ok(mono) => {
            let holds = mono.holds_on_sample && min_f2 > 0.0;
            let worst = mono.worst_violation.max(-min_f2);
            entries.push(entry(
                "H2",
                "f2 is positive and nondecreasing in x",
                holds,
                worst,
                format!("min f2 = {min_f2:.6}, monotone excess {:.2e}", mono.worst_violation),
            ));
        }
        Err(e) => entries.push(audit_failure("H2", "f2 is positive and nondecreasing in x", e)),
    }

    // H3: hyperbolic dominating bound for f1 and f2, plus L <= K.
    const H3_LABEL: &str = "f1, f2 obey the hyperbolic bound; L <= K";
    let h3 = match DFunction::hyperbolic(inst.hyp_l, inst.hyp_k) {
        Err(e) => audit_failure("H3", H3_LABEL, e),
        Ok(psi) => (|| -> Result<HypothesisEntry, VerifyError> {
            let a_blk = a_block(inst);
            let lip_a = verify_dlipschitz(&a_blk, &psi, grid, plain_box, trials, rng_seed ^ 0x02)?;
            let lip_b = verify_dlipschitz(&b_blk, &psi, grid, plain_box, trials, rng_seed ^ 0x03)?;
            let mono_a = verify_monotone(&a_blk, grid, plain_box, trials, rng_seed ^ 0x04)?;
            let l_le_k = inst.hyp_l <= inst.hyp_k;
            let holds =
                l_le_k && lip_a.holds_on_sample && lip_b.holds_on_sample && mono_a.holds_on_sample;
            let worst = lip_a
                .worst_violation
                .max(lip_b.worst_violation)
                .max(mono_a.worst_violation);
            Ok(entry(
                "H3",
                H3_LABEL,
                holds,
                worst,
                format!(
                    "L = {}, K = {}, L <= K: {}; lipschitz excess (f1, f2) = ({:.2e}, {:.2e})",
                    inst.hyp_l, inst.hyp_k, l_le_k, lip_a.worst_violation, lip_b.worst_violation
                ),
            ))
        })()
        .unwrap_or_else(|e| audit_failure("H3", H3_LABEL, e)),
    };
    entries.push(h3);

    // H4: p nondecreasing and a contraction with constant k < 1.
    let h4 = (|| -> Result<HypothesisEntry, VerifyError> {
        let d_blk = d_block(inst);
        let mono = verify_monotone(&d_blk, grid, plain_box, trials, rng_seed ^ 0x05)?;
        let k_ok = inst.contraction_k >= 0.0 && inst.contraction_k < 1.0;
        let lip = if k_ok {
            let psi = DFunction::linear(inst.contraction_k).expect("k >= 0");
            Some(verify_dlipschitz(&d_blk, &psi, grid, plain_box, trials, rng_seed ^ 0x06)?)
        } else {
            None
        };
        let lip_excess = lip.as_ref().map(|r| r.worst_violation).unwrap_or(f64::INFINITY);
        let holds = k_ok
            && mono.holds_on_sample
            && lip.as_ref().map(|r| r.holds_on_sample).unwrap_or(false);
        Ok(entry(
            "H4",
            "p is nondecreasing and a k-contraction, k < 1",
            holds,
            mono.worst_violation.max(if k_ok { lip_excess } else { 0.0 }),
            format!(
                "k = {}, k < 1: {k_ok}; monotone excess {:.2e}, lipschitz excess {:.2e}",
                inst.contraction_k, mono.worst_violation, lip_excess
            ),
        ))
    })();
    entries.push(h4.unwrap_or_else(|e| audit_failure("H4", "p is nondecreasing and a k-contraction, k < 1", e)));

    // H5: g nonnegative, nondecreasing in x and uniformly bounded by h_l1.
    let (min_g, max_g) = scan_field(inst, &inst.g, plain_box, 65);
    let h5 = (|| -> Result<HypothesisEntry, VerifyError> {
        let owned = inst.clone();
        let g_blk = OperatorBlock::new(BlockKind::Composite, move |x: &GridFunction| {
            let values: Vec<f64> = owned
                .grid
                .nodes()
                .zip(x.values())
                .map(|(t, v)| owned.g.eval(t, *v))
                .collect();
            Ok(GridFunction::new(owned.grid, values)?)
        });
        let mono = verify_monotone(&g_blk, grid, plain_box, trials, rng_seed ^ 0x07)?;
        let holds = min_g >= 0.0 && max_g <= inst.g_bound + 1e-12 && mono.holds_on_sample;
        let worst = (-min_g).max(max_g - inst.g_bound).max(mono.worst_violation);
        Ok(entry(
            "H5",
            "g is nonnegative, nondecreasing, bounded by h_l1",
            holds,
            worst,
            format!(
                "g range [{min_g:.6}, {max_g:.6}], bound h_l1 = {}, monotone excess {:.2e}",
                inst.g_bound, mono.worst_violation
            ),
        ))
    })();
    entries.push(h5.unwrap_or_else(|e| audit_failure("H5", "g is nonnegative, nondecreasing, bounded by h_l1", e)));

    // H6: a lower solution exists: supplied, or found among constants.
    let h6 = match &inst.lower {
        Some(pair) => match verify_lower_solution(inst, &pair.u, &pair.v) {
            Ok(check) => entry(
                "H6",
                "a lower solution is available",
                check.holds,
                check.worst_excess,
                format!("supplied pair, excess {:.2e} (slack {:.2e})", check.worst_excess, check.slack),
            ),
            Err(e) => audit_failure("H6", "a lower solution is available", e),
        },
        None => match scan_constant_start(inst, Direction::FromLower) {
            Ok((_, gamma)) => entry(
                "H6",
                "a lower solution is available",
                true,
                0.0,
                format!("constant start u = {gamma} found (v from the resolvent)"),
            ),
            Err(e) => audit_failure("H6", "a lower solution is available", e),
        },
    };
    entries.push(h6);

    // Admissibility inequality L(|c| + h_l1) <= K.
    let admissibility = match volterra_offset(inst) {
        Ok(c) => {
            let lhs = inst.hyp_l * (c.abs() + inst.g_bound);
            AdmissibilityCheck {
                lhs,
                rhs: inst.hyp_k,
                holds: lhs <= inst.hyp_k,
                c: Some(c),
                detail: format!("c = {c}"),
            }
        }
        Err(e) => AdmissibilityCheck {
            lhs: f64::INFINITY,
            rhs: inst.hyp_k,
            holds: false,
            c: None,
            detail: format!("c undefined: {e}"),
        },
    };

    // Composed contraction check of the block map.
    let mut composed = None;
    let mut composed_corrected = None;
    let mut composed_note = None;
    let mut m_used = None;
    match build_composed_checks(inst, rng_seed, safe_box) {
        Ok((m, reported, corrected)) => {
            m_used = Some(m);
            composed = Some(reported);
            composed_corrected = corrected;
        }
        Err(note) => composed_note = Some(note),
    }

    // Informational audit of the C block against the corrected linear bound.
    let c_block_audit = (|| {
        let w_max = safe_w_max(inst, safe_box)?;
        let slope = (1.0 + inst.contraction_k.max(0.0)) * inst.sup_b() * w_max * w_max;
        let psi = DFunction::linear(slope).ok()?;
        verify_dlipschitz(&c_block(inst), &psi, grid, safe_box, trials, rng_seed ^ 0x08).ok()
    })();

    let overall = entries.iter().all(|e| e.holds)
        && admissibility.holds
        && composed.as_ref().map(|r| r.holds).unwrap_or(false);

    HypothesisReport {
        entries,
        admissibility,
        secondary_inequality:
            "M1*||gamma|| + K <= 1 - k is displayed only: the constants M1 and gamma are undefined in this model, so it is not evaluated"
                .into(),
        composed,
        composed_corrected,
        composed_note,
        c_block_audit,
        m_used,
        overall,
    }
}

/// `w_max` over a box that stays clear of the pole; None when even the safe
/// box touches it.
fn safe_w_max(inst: &ProblemInstance, safe_box: DomainBox) -> Option<f64> {
    let denom = 1.0 - inst.sup_b() * safe_box.hi.abs().max(safe_box.lo.abs());
    if denom < inst.singularity_floor {
        return None;
    }
    Some(1.0 / denom)
}

fn build_composed_checks(
    inst: &ProblemInstance,
    rng_seed: u64,
    safe_box: DomainBox,
) -> Result<(f64, ContractionReport, Option<ContractionReport>), String> {
    let psi_ab = DFunction::hyperbolic(inst.hyp_l, inst.hyp_k)
        .map_err(|e| format!("L, K do not define a dominating function: {e}"))?;
    let psi_c = DFunction::linear((1.0 + inst.contraction_k) * inst.sup_b())
        .map_err(|e| format!("invalid reciprocal-weight slope: {e}"))?;
    let psi = compose_block_psi(&psi_ab, &psi_ab, &psi_c, inst.contraction_k)
        .map_err(|e| e.to_string())?;

    let c = volterra_offset(inst).map_err(|e| e.to_string())?;
    let probes = default_probes(inst, rng_seed, safe_box);
    let est = estimate_m(&tprime_block(inst), &probes).map_err(|e| e.to_string())?;
    // Sampled estimate, capped at the analytic range bound |c| + h_l1.
    let m = est.min(c.abs() + inst.g_bound);

    let r_max = 2.0f64.max(2.0 * safe_box.hi);
    let reported = check_contraction(&psi, m, ContractionForm::Block, r_max, CONTRACTION_SAMPLES)
        .map_err(|e| e.to_string())?;

    let corrected = safe_w_max(inst, safe_box).and_then(|w_max| {
        let slope = (1.0 + inst.contraction_k) * inst.sup_b() * w_max * w_max;
        let psi_c_corr = DFunction::linear(slope).ok()?;
        let psi_corr = compose_block_psi(&psi_ab, &psi_ab, &psi_c_corr, inst.contraction_k).ok()?;
        check_contraction(&psi_corr, m, ContractionForm::Block, r_max, CONTRACTION_SAMPLES).ok()
    });

    Ok((m, reported, corrected))
}

fn default_probes(inst: &ProblemInstance, rng_seed: u64, safe_box: DomainBox) -> Vec<GridFunction> {
    use rand::SeedableRng;
    let mut probes = vec![
        GridFunction::constant(inst.grid, safe_box.lo).unwrap(),
        GridFunction::constant(inst.grid, 0.5 * (safe_box.lo + safe_box.hi)).unwrap(),
        GridFunction::constant(inst.grid, safe_box.hi).unwrap(),
    ];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(rng_seed ^ 0x5eed);
    for _ in 0..2 {
        probes.push(smooth_profile(inst.grid, &mut rng, safe_box));
    }
    probes
}

// ---------------------------------------------------------------------------
// Lower solutions

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct LowerSolutionCheck {
    pub holds: bool,
    /// Largest pointwise excess over both inequalities of the pair.
    pub worst_excess: f64,
    pub slack: f64,
}

/// Check the integral-form lower-solution inequalities
/// `u <= A u + B w * B' w` (with `w = (I-D)^{-1} C u`) and `v <= C u + D v`,
/// both within a roundoff-scaled slack.
pub fn verify_lower_solution(
    inst: &ProblemInstance,
    u: &GridFunction,
    v: &GridFunction,
) -> Result<LowerSolutionCheck, OperatorError> {
    verify_solution_bracket(inst, u, v, Direction::FromLower)
}

/// Direction-aware version: for `FromUpper` the inequalities are reversed.
pub fn verify_solution_bracket(
    inst: &ProblemInstance,
    u: &GridFunction,
    v: &GridFunction,
    direction: Direction,
) -> Result<LowerSolutionCheck, OperatorError> {
    let w = resolvent_closed_form(inst, u)?;
    let rhs_x = apply_a(inst, u)?
        .add(&apply_b(inst, &w)?.mul_pointwise(&weighted_volterra(inst, &w)?)?)?;
    let rhs_y = apply_c(inst, u)?.add(&apply_d(inst, v)?)?;

    let signed = |lhs: &GridFunction, rhs: &GridFunction| {
        lhs.values()
            .iter()
            .zip(rhs.values())
            .fold(f64::NEG_INFINITY, |m, (l, r)| {
                m.max(match direction {
                    Direction::FromLower => l - r,
                    Direction::FromUpper => r - l,
                })
            })
    };
    let worst = signed(u, &rhs_x).max(signed(v, &rhs_y));
    let scale = [u, v, &rhs_x, &rhs_y]
        .iter()
        .fold(1.0f64, |m, f| m.max(f.sup_norm()));
    let slack = 100.0 * f64::EPSILON * scale;
    Ok(LowerSolutionCheck {
        holds: worst <= slack,
        worst_excess: worst,
        slack,
    })
}

/// Scan constant starts `u = gamma` moving away from `x0` until the bracket
/// inequality holds, taking `v` from the closed-form resolvent. Candidates
/// that touch the singularity floor are skipped.
pub fn scan_constant_start(
    inst: &ProblemInstance,
    direction: Direction,
) -> Result<(LowerPair, f64), SolveError> {
    let base = 1.0f64.max(inst.x0.abs());
    let sign = match direction {
        Direction::FromLower => -1.0,
        Direction::FromUpper => 1.0,
    };
    let mut candidates: Vec<f64> = Vec::new();
    for j in 0..=8 {
        candidates.push(inst.x0 + sign * base * j as f64 / 8.0);
    }
    for m in 1..5 {
        candidates.push(inst.x0 + sign * base * (1 << m) as f64);
    }
    let mut tried = 0usize;
    for gamma in candidates {
        tried += 1;
        let u = match GridFunction::constant(inst.grid, gamma) {
            Ok(u) => u,
            Err(_) => continue,
        };
        let v = match resolvent_closed_form(inst, &u) {
            Ok(v) => v,
            Err(_) => continue, // singular candidate, try the next one
        };
        match verify_solution_bracket(inst, &u, &v, direction) {
            Ok(check) if check.holds => return Ok((LowerPair { u, v }, gamma)),
            Ok(_) => continue,
            Err(_) => continue,
        }
    }
    Err(SolveError::NoStartingPoint {
        tried,
        direction: match direction {
            Direction::FromLower => "lower",
            Direction::FromUpper => "upper",
        },
    })
}

// ---------------------------------------------------------------------------
// Solve

#[derive(Debug, Clone, Copy)]
pub struct SolveConfig {
    pub engine: EngineConfig,
    pub audit_trials: usize,
    pub audit_seed: u64,
    pub override_gate: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            engine: EngineConfig::default(),
            audit_trials: 32,
            audit_seed: 42,
            override_gate: false,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SolutionReport {
    pub x_star: GridFunction,
    pub y_star: GridFunction,
    pub trace: IterationTrace,
    /// Max absolute defect of the differential form over interior nodes,
    /// with second-order finite differences.
    pub ode_residual: f64,
    /// `|x*(0) - x0| + |y*(0) - y_ic|` where `y_ic` is the second equation's
    /// own value at `t = 0`.
    pub initial_condition_error: f64,
    /// `|y0 - y_ic|`: how far the supplied `y0` is from the value the second
    /// equation forces at `t = 0`. Reported, not enforced.
    pub y0_gap: f64,
    pub oracle_gap: Option<f64>,
    pub gate_overridden: bool,
    pub hypothesis_report: HypothesisReport,
}

/// Gate on the hypothesis audit, assemble the block operators, run the
/// monotone iteration from a lower solution and post-verify the result.
pub fn solve(inst: &ProblemInstance, cfg: &SolveConfig) -> Result<SolutionReport, SolveError> {
    inst.validate()?;
    let report = check_instance(inst, cfg.audit_trials, cfg.audit_seed);
    if !report.overall && !cfg.override_gate {
        return Err(SolveError::GateRefused {
            report: Box::new(report),
        });
    }

    let (start, _) = match &inst.lower {
        Some(pair) => (pair.clone(), f64::NAN),
        None => scan_constant_start(inst, cfg.engine.direction)?,
    };

    let a = a_block(inst);
    let t = t_block(inst);
    let tprime = tprime_block(inst);
    let trace = run_block(&a, &t, &tprime, &start.u, &cfg.engine)?;
    if !trace.converged {
        let iterations = trace.iterations;
        return Err(SolveError::NonConvergence {
            iterations,
            trace: Box::new(trace),
        });
    }

    let x_star = trace.final_iterate.clone();
    let y_star = resolvent_closed_form(inst, &x_star)?;
    let residuals = ode_residual_profile(inst, &x_star, &y_star);
    let ode_residual = max_interior_abs(&residuals);

    let y_ic = 1.0 / (1.0 - inst.b.eval(0.0) * x_star.first().abs());
    let initial_condition_error =
        (x_star.first() - inst.x0).abs() + (y_star.first() - y_ic).abs();
    let y0_gap = (inst.y0 - y_ic).abs();

    Ok(SolutionReport {
        x_star,
        y_star,
        trace,
        ode_residual,
        initial_condition_error,
        y0_gap,
        oracle_gap: None,
        gate_overridden: cfg.override_gate && !report.overall,
        hypothesis_report: report,
    })
}

/// Signed defect of the differential form at every node:
/// `d/dt[(x - f1)/f2] + lambda (x - f1)/f2 - g(t, y)`, with central
/// differences inside and one-sided second-order stencils at the endpoints.
pub fn ode_residual_profile(
    inst: &ProblemInstance,
    x: &GridFunction,
    y: &GridFunction,
) -> Vec<f64> {
    let n = inst.grid.n_points();
    let h = inst.grid.step();
    let z: Vec<f64> = inst
        .grid
        .nodes()
        .zip(x.values().iter().zip(y.values()))
        .map(|(t, (xi, yi))| (xi - inst.f1.eval(t, *xi)) / inst.f2.eval(t, *yi))
        .collect();
    let dz = |i: usize| -> f64 {
        if i == 0 {
            (-3.0 * z[0] + 4.0 * z[1] - z[2]) / (2.0 * h)
        } else if i == n - 1 {
            (3.0 * z[n - 1] - 4.0 * z[n - 2] + z[n - 3]) / (2.0 * h)
        } else {
            (z[i + 1] - z[i - 1]) / (2.0 * h)
        }
    };
    inst.grid
        .nodes()
        .enumerate()
        .map(|(i, t)| dz(i) + inst.lambda * z[i] - inst.g.eval(t, y.values()[i]))
        .collect()
}

pub fn max_interior_abs(residuals: &[f64]) -> f64 {
    residuals[1..residuals.len() - 1]
        .iter()
        .fold(0.0f64, |m, r| m.max(r.abs()))
}

/// Generate a seeded comparable chain inside a box: a smooth base plus
/// cumulative nonnegative increments.
pub fn seeded_chain(
    grid: Grid,
    domain: DomainBox,
    len: usize,
    seed: u64,
) -> Vec<GridFunction> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(len);
    let (mut current, _) = comparable_pair(grid, &mut rng, domain);
    out.push(current.clone());
    for _ in 1..len {
        let bump = smooth_profile(grid, &mut rng, DomainBox::new(0.0, 1.0).unwrap());
        let headroom = (domain.hi - current.max_value()).max(1e-6);
        let scale = 0.3 * headroom;
        let values: Vec<f64> = current
            .values()
            .iter()
            .zip(bump.values())
            .map(|(v, s)| v + scale * s)
            .collect();
        current = GridFunction::new(grid, values).expect("finite chain element");
        out.push(current.clone());
    }
    out
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("hypothesis audit failed; refusing to iterate without an override")]
    GateRefused { report: Box<HypothesisReport> },
    #[error("no constant {direction} start found after {tried} candidates")]
    NoStartingPoint { tried: usize, direction: &'static str },
    #[error("iteration did not converge within budget ({iterations} iterations)")]
    NonConvergence {
        iterations: usize,
        trace: Box<IterationTrace>,
    },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Resolvent(#[from] ResolventError),
    #[error("invalid instance: {0}")]
    Instance(String),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_instance_passes_every_hypothesis() {
        let inst = ProblemInstance::trivial(201);
        let report = check_instance(&inst, 16, 42);
        for e in &report.entries {
            assert!(e.holds, "{}: {}", e.id, e.detail);
        }
        assert!(report.admissibility.holds);
        assert_eq!(report.admissibility.c, Some(1.0));
        // Equality case: lhs = 1 * (1 + 0) = 1 = K exactly.
        assert_eq!(report.admissibility.lhs, 1.0);
        assert_eq!(report.admissibility.rhs, 1.0);
        assert!(report.composed.as_ref().unwrap().holds);
        assert!(report.overall);
    }

    #[test]
    fn swapped_constants_fail_h3_and_admissibility() {
        let mut inst = ProblemInstance::trivial(101);
        inst.hyp_l = 2.0;
        inst.hyp_k = 1.0;
        let report = check_instance(&inst, 16, 42);
        assert!(!report.entry("H3").unwrap().holds);
        assert!(!report.admissibility.holds);
        assert!(!report.overall);
    }

    #[test]
    fn unit_contraction_fails_h4_and_composed_check() {
        let mut inst = ProblemInstance::trivial(101);
        inst.contraction_k = 1.0;
        let report = check_instance(&inst, 16, 42);
        assert!(!report.entry("H4").unwrap().holds);
        assert!(report.composed.is_none());
        assert!(report.composed_note.is_some());
        assert!(!report.overall);
    }

    #[test]
    fn lower_solution_checks_on_the_trivial_instance() {
        let inst = ProblemInstance::trivial(101);
        let u = GridFunction::constant(inst.grid, 0.0).unwrap();
        let v = GridFunction::constant(inst.grid, 1.0).unwrap();
        let check = verify_lower_solution(&inst, &u, &v).unwrap();
        assert!(check.holds);

        let too_high = GridFunction::constant(inst.grid, 2.0).unwrap();
        let check = verify_lower_solution(&inst, &too_high, &v).unwrap();
        assert!(!check.holds);
        assert!(check.worst_excess > 1.0);

        // The exact solution saturates the first inequality.
        let exact = GridFunction::sample(inst.grid, |t| (-t).exp()).unwrap();
        let check = verify_lower_solution(&inst, &exact, &v).unwrap();
        assert!(check.holds);
        assert!(check.worst_excess.abs() <= check.slack);
    }

    #[test]
    fn scan_finds_a_constant_lower_start() {
        let inst = ProblemInstance::trivial(101);
        let (pair, gamma) = scan_constant_start(&inst, Direction::FromLower).unwrap();
        assert!(gamma <= (-1.0f64).exp());
        assert!(verify_lower_solution(&inst, &pair.u, &pair.v).unwrap().holds);
    }

    #[test]
    fn solve_trivial_matches_the_exponential() {
        let inst = ProblemInstance::trivial(1001);
        let report = solve(&inst, &SolveConfig::default()).unwrap();
        let err = inst
            .grid
            .nodes()
            .zip(report.x_star.values())
            .fold(0.0f64, |m, (t, v)| m.max((v - (-t).exp()).abs()));
        assert!(err <= 1e-6, "sup error {err:.3e}");
        for v in report.y_star.values() {
            assert!((v - 1.0).abs() <= 1e-12);
        }
        assert!(report.initial_condition_error <= 1e-12);
        assert_eq!(report.y0_gap, 0.0);
        // Central differencing of e^(-t) leaves an O(h^2) defect.
        assert!(report.ode_residual <= 2e-6, "residual {:.3e}", report.ode_residual);
        assert!(report.trace.iterations <= 5);
    }

    #[test]
    fn solve_pure_integration_is_exact_at_nodes() {
        let inst = ProblemInstance::pure_integration(1001);
        let report = solve(&inst, &SolveConfig::default()).unwrap();
        for (t, v) in inst.grid.nodes().zip(report.x_star.values()) {
            assert!((v - t).abs() <= 1e-12, "t = {t}, x = {v}");
        }
    }

    #[test]
    fn solve_refuses_failed_gate_without_override() {
        let mut inst = ProblemInstance::trivial(101);
        inst.x0 = 1.5; // c = 1.5, admissibility fails
        let err = solve(&inst, &SolveConfig::default()).unwrap_err();
        match err {
            SolveError::GateRefused { report } => {
                assert!(!report.admissibility.holds);
                assert_eq!(report.admissibility.c, Some(1.5));
            }
            other => panic!("expected gate refusal, got {other}"),
        }
        // With the override the run itself still succeeds.
        let cfg = SolveConfig {
            override_gate: true,
            ..SolveConfig::default()
        };
        let report = solve(&inst, &cfg).unwrap();
        assert!(report.gate_overridden);
    }

    #[test]
    fn range_norm_estimate_matches_the_offset_for_zero_integrand() {
        // g = 0 makes T' x = c e^(-lambda t); the norm is |c|, at t = 0.
        let inst = ProblemInstance::trivial(101);
        let tp = tprime_block(&inst);
        let probes = [
            GridFunction::constant(inst.grid, 0.0).unwrap(),
            GridFunction::sample(inst.grid, |t| 0.5 * t).unwrap(),
        ];
        let m = estimate_m(&tp, &probes).unwrap();
        assert_eq!(m, 1.0);
    }

    #[test]
    fn y_star_satisfies_the_resolvent_identity() {
        let mut inst = ProblemInstance::trivial(201);
        inst.b = "0.1".parse().unwrap();
        inst.p = "poly(0,0.3)".parse().unwrap();
        inst.contraction_k = 0.3;
        inst.hyp_l = 0.5;
        inst.x0 = 0.4;
        inst.y0 = 1.0 / (1.0 - 0.1 * 0.4);
        let report = solve(&inst, &SolveConfig::default()).unwrap();
        let rhs = apply_c(&inst, &report.x_star)
            .unwrap()
            .add(&apply_d(&inst, &report.y_star).unwrap())
            .unwrap();
        assert!(report.y_star.distance(&rhs).unwrap() <= 1e-10);
    }
}
