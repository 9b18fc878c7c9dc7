//! Empirical audits of the operator certificates: monotonicity,
//! dominating-function Lipschitz bounds, positivity and uniform boundedness,
//! each checked on seeded samples of comparable pairs.
//!
//! Audited claims never become proofs, only reports. A failing report is
//! sound (it exhibits a violating sample); a passing report says the claim
//! survived the configured number of trials.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dfunction::DFunction;
use crate::exec;
use crate::operators::{OperatorBlock, OperatorError};
use crate::ordered_space::{Grid, GridFunction};

/// Absolute slack absorbing roundoff in certificate audits.
pub const CERT_SLACK: f64 = 1e-9;

/// Value bounds for sampled inputs.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct DomainBox {
    pub lo: f64,
    pub hi: f64,
}

impl DomainBox {
    pub fn new(lo: f64, hi: f64) -> Result<Self, VerifyError> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(VerifyError::InvalidDomain { lo, hi });
        }
        Ok(DomainBox { lo, hi })
    }

    fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum CertificateProperty {
    Monotone,
    DLipschitz,
    Positive,
    PartiallyBounded,
}

/// Outcome of a sampled audit. `worst_violation` is the largest positive
/// excess observed (values <= 0 mean no violation at all); the audit passes
/// when it stays within [`CERT_SLACK`].
#[derive(Debug, Clone, serde::Serialize)]
pub struct CertificateReport {
    pub property: CertificateProperty,
    pub holds_on_sample: bool,
    pub trials: usize,
    pub worst_violation: f64,
    pub slack: f64,
    /// Digest of the inputs that produced the worst violation.
    pub worst_pair: Option<String>,
}

impl CertificateReport {
    fn from_trials(
        property: CertificateProperty,
        slack: f64,
        outcomes: Vec<(f64, String)>,
    ) -> Self {
        let trials = outcomes.len();
        let mut worst_violation = f64::NEG_INFINITY;
        let mut worst_pair = None;
        for (violation, digest) in outcomes {
            if violation > worst_violation {
                worst_violation = violation;
                worst_pair = Some(digest);
            }
        }
        CertificateReport {
            property,
            holds_on_sample: worst_violation <= slack,
            trials,
            worst_violation,
            slack,
            worst_pair,
        }
    }
}

/// Derives a per-trial RNG from the audit seed; SplitMix-style mixing keeps
/// trials independent and the result identical in serial and parallel runs.
fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut z = seed ^ (trial as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
}

/// A smooth random profile with values inside `[lo, hi]`: a low-order
/// Fourier-type sum about a random base level, rescaled into the box.
pub fn smooth_profile(grid: Grid, rng: &mut impl Rng, domain: DomainBox) -> GridFunction {
    let t_end = grid.t_end();
    let base: f64 = rng.gen_range(0.2..0.7);
    let mut modes = Vec::new();
    for m in 1..=4u32 {
        let a: f64 = rng.gen_range(-1.0..1.0);
        let b: f64 = rng.gen_range(-1.0..1.0);
        modes.push((m as f64, a, b));
    }
    let raw = |t: f64| -> f64 {
        modes
            .iter()
            .map(|(m, a, b)| {
                let phase = 2.0 * std::f64::consts::PI * m * t / t_end;
                (a * phase.sin() + b * phase.cos()) / m
            })
            .sum()
    };
    let max_abs = grid.nodes().fold(1e-12f64, |acc, t| acc.max(raw(t).abs()));
    let values: Vec<f64> = grid
        .nodes()
        .map(|t| {
            let unit = (base + 0.2 * raw(t) / max_abs).clamp(0.0, 1.0);
            domain.lo + unit * domain.width()
        })
        .collect();
    GridFunction::new(grid, values).expect("profile values are finite")
}

/// A comparable pair `x <= y` inside the box: `x` is a smooth profile, `y`
/// adds a smooth nonnegative bump scaled to the remaining headroom.
pub fn comparable_pair(
    grid: Grid,
    rng: &mut impl Rng,
    domain: DomainBox,
) -> (GridFunction, GridFunction) {
    let x = smooth_profile(grid, rng, domain);
    let headroom = domain.hi - x.max_value();
    let height = headroom * rng.gen_range(0.2..0.9);
    let bump_shape = smooth_profile(grid, rng, DomainBox { lo: 0.0, hi: 1.0 });
    let values: Vec<f64> = x
        .values()
        .iter()
        .zip(bump_shape.values())
        .map(|(v, s)| v + height * s)
        .collect();
    let y = GridFunction::new(grid, values).expect("bumped values are finite");
    (x, y)
}

fn pair_digest(trial: usize, x: &GridFunction, y: &GridFunction) -> String {
    format!(
        "trial {trial}: x in [{:.4}, {:.4}] (||x|| = {:.4}), y in [{:.4}, {:.4}] (||y|| = {:.4})",
        x.min_value(),
        x.max_value(),
        x.sup_norm(),
        y.min_value(),
        y.max_value(),
        y.sup_norm(),
    )
}

fn run_pair_trials(
    property: CertificateProperty,
    grid: Grid,
    domain: DomainBox,
    trials: usize,
    seed: u64,
    trial_fn: impl Fn(&GridFunction, &GridFunction) -> Result<f64, OperatorError> + Sync,
) -> Result<CertificateReport, VerifyError> {
    if trials == 0 {
        return Err(VerifyError::ZeroTrials);
    }
    let outcomes = exec::map_indexed(trials, |trial| {
        let mut rng = trial_rng(seed, trial);
        let (x, y) = comparable_pair(grid, &mut rng, domain);
        match trial_fn(&x, &y) {
            Ok(violation) => Ok((violation, pair_digest(trial, &x, &y))),
            Err(source) => Err(VerifyError::Evaluation {
                trial,
                digest: pair_digest(trial, &x, &y),
                source,
            }),
        }
    });
    let mut collected = Vec::with_capacity(trials);
    for outcome in outcomes {
        collected.push(outcome?);
    }
    Ok(CertificateReport::from_trials(property, CERT_SLACK, collected))
}

/// Audit `x <= y  =>  op(x) <= op(y)` on sampled comparable pairs. The
/// violation of a pair is the largest pointwise excess of `op(x)` over
/// `op(y)`.
pub fn verify_monotone(
    op: &OperatorBlock,
    grid: Grid,
    domain: DomainBox,
    trials: usize,
    seed: u64,
) -> Result<CertificateReport, VerifyError> {
    run_pair_trials(
        CertificateProperty::Monotone,
        grid,
        domain,
        trials,
        seed,
        |x, y| {
            let fx = op.apply(x)?;
            let fy = op.apply(y)?;
            let excess = fx
                .values()
                .iter()
                .zip(fy.values())
                .fold(f64::NEG_INFINITY, |m, (a, b)| m.max(a - b));
            Ok(excess)
        },
    )
}

/// Audit `||op(x) - op(y)|| <= psi(||x - y||)` on sampled comparable pairs.
pub fn verify_dlipschitz(
    op: &OperatorBlock,
    psi: &DFunction,
    grid: Grid,
    domain: DomainBox,
    trials: usize,
    seed: u64,
) -> Result<CertificateReport, VerifyError> {
    run_pair_trials(
        CertificateProperty::DLipschitz,
        grid,
        domain,
        trials,
        seed,
        |x, y| {
            let fx = op.apply(x)?;
            let fy = op.apply(y)?;
            let lhs = fx.distance(&fy)?;
            let r = x.distance(y)?;
            let bound = psi.eval(r).expect("sup-norm distance is nonnegative");
            Ok(lhs - bound)
        },
    )
}

/// Audit that outputs stay pointwise nonnegative on sampled inputs.
pub fn verify_positive(
    op: &OperatorBlock,
    grid: Grid,
    domain: DomainBox,
    trials: usize,
    seed: u64,
) -> Result<CertificateReport, VerifyError> {
    run_pair_trials(
        CertificateProperty::Positive,
        grid,
        domain,
        trials,
        seed,
        |x, y| {
            let fx = op.apply(x)?;
            let fy = op.apply(y)?;
            Ok((-fx.min_value()).max(-fy.min_value()))
        },
    )
}

/// Audit `||op(x)|| <= bound` on sampled inputs.
pub fn verify_bounded(
    op: &OperatorBlock,
    bound: f64,
    grid: Grid,
    domain: DomainBox,
    trials: usize,
    seed: u64,
) -> Result<CertificateReport, VerifyError> {
    run_pair_trials(
        CertificateProperty::PartiallyBounded,
        grid,
        domain,
        trials,
        seed,
        |x, y| {
            let fx = op.apply(x)?;
            let fy = op.apply(y)?;
            Ok(fx.sup_norm().max(fy.sup_norm()) - bound)
        },
    )
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("domain box [{lo}, {hi}] is invalid")]
    InvalidDomain { lo: f64, hi: f64 },
    #[error("audits need at least one trial")]
    ZeroTrials,
    #[error("evaluation failed on {digest}: {source}")]
    Evaluation {
        trial: usize,
        digest: String,
        source: OperatorError,
    },
}
