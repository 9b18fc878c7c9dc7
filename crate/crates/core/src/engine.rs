//! Generic monotone fixed-point engines.
//!
//! Two update shapes are supported: the hybrid map `x -> Ax * Bx + Cx` and
//! the block map `x -> Ax + Tx * T'x`. Both assume a starting point on the
//! correct side of the fixed point (a lower solution for nondecreasing runs,
//! an upper solution for nonincreasing ones) and track that every realized
//! step keeps the expected order.
//!
//! Monotonicity breaks are errors, not warnings: the convergence guarantee
//! these engines certify is conditional on monotone iterates, so a break
//! invalidates the run rather than silently continuing to some limit.
//!
//! Operator-inverse formulations of the same fixed-point problems (solving
//! `(I - C)/A` or `(I - A)/T` equations per step) have no separate
//! constructive content at the fixed point; they are realized through the
//! same iteration loop rather than coded as distinct drivers.

use thiserror::Error;

use crate::operators::{OperatorBlock, OperatorError};
use crate::ordered_space::{GridFunction, OrderRel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Direction {
    FromLower,
    FromUpper,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct EngineConfig {
    pub tol_outer: f64,
    pub max_outer: usize,
    /// Absolute floor of the order slack; the effective per-step slack is
    /// `max(monotonicity_slack, 100 * eps * ||iterate||)`, scaling with the
    /// iterate magnitude.
    pub monotonicity_slack: f64,
    pub direction: Direction,
    pub record_full_iterates: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            tol_outer: 1e-10,
            max_outer: 200,
            monotonicity_slack: 0.0,
            direction: Direction::FromLower,
            record_full_iterates: false,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if !(self.tol_outer.is_finite() && self.tol_outer > 0.0) {
            return Err(EngineError::InvalidConfig(format!(
                "tol_outer must be positive, got {}",
                self.tol_outer
            )));
        }
        if self.max_outer == 0 {
            return Err(EngineError::InvalidConfig("max_outer must be at least 1".into()));
        }
        if !(self.monotonicity_slack.is_finite() && self.monotonicity_slack >= 0.0) {
            return Err(EngineError::InvalidConfig(format!(
                "monotonicity_slack must be nonnegative, got {}",
                self.monotonicity_slack
            )));
        }
        Ok(())
    }

    fn effective_slack(&self, scale: f64) -> f64 {
        self.monotonicity_slack.max(100.0 * f64::EPSILON * scale)
    }
}

/// Compact per-iterate summary kept even when full snapshots are off.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct IterateDigest {
    pub sup_norm: f64,
    pub min: f64,
    pub max: f64,
    pub first: f64,
    pub last: f64,
}

impl IterateDigest {
    pub fn of(f: &GridFunction) -> Self {
        IterateDigest {
            sup_norm: f.sup_norm(),
            min: f.min_value(),
            max: f.max_value(),
            first: f.first(),
            last: f.last(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum StopReason {
    ToleranceMet,
    MaxIterations,
    MonotonicityBroken,
    OperatorError,
}

/// Record of a fixed-point run. Entry `n` of `deltas`, `monotone_flags` and
/// `slacks` describes the step from iterate `n` to iterate `n + 1`; `digests`
/// has one entry per iterate including the start.
#[derive(Debug, Clone, serde::Serialize)]
pub struct IterationTrace {
    pub deltas: Vec<f64>,
    pub monotone_flags: Vec<OrderRel>,
    /// Effective order slack used at each step.
    pub slacks: Vec<f64>,
    pub digests: Vec<IterateDigest>,
    /// Full iterate snapshots; kept only when requested, to bound memory.
    pub iterates: Option<Vec<GridFunction>>,
    pub final_iterate: GridFunction,
    /// `||Phi(x*) - x*||` measured after convergence, when the extra operator
    /// application succeeds.
    pub final_residual: Option<f64>,
    pub converged: bool,
    pub reason: StopReason,
    pub iterations: usize,
}

impl IterationTrace {
    pub fn last_delta(&self) -> Option<f64> {
        self.deltas.last().copied()
    }

    pub fn max_slack(&self) -> f64 {
        self.slacks.iter().fold(0.0f64, |m, s| m.max(*s))
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("starting point is not a {direction} solution: worst excess {worst_excess:.3e} beyond slack {slack:.3e}")]
    LowerSolutionRejected {
        direction: &'static str,
        worst_excess: f64,
        slack: f64,
    },
    #[error("operator failed at iteration {iteration}: {source}")]
    Operator {
        iteration: usize,
        source: OperatorError,
        trace: Box<IterationTrace>,
    },
    #[error("monotonicity broken at iteration {iteration}: step compared as {flag}")]
    MonotonicityBroken {
        iteration: usize,
        flag: OrderRel,
        trace: Box<IterationTrace>,
    },
    #[error("block {which} must be positive-flagged for the quadratic factor")]
    MissingPositivity { which: &'static str },
    #[error("estimate over an empty probe set")]
    EmptyProbeSet,
    #[error("probe {index} failed: {source}")]
    Probe { index: usize, source: OperatorError },
    #[error("invalid engine config: {0}")]
    InvalidConfig(String),
}

struct RunState {
    deltas: Vec<f64>,
    flags: Vec<OrderRel>,
    slacks: Vec<f64>,
    digests: Vec<IterateDigest>,
    iterates: Option<Vec<GridFunction>>,
}

impl RunState {
    fn new(x0: &GridFunction, record_full: bool) -> Self {
        RunState {
            deltas: Vec::new(),
            flags: Vec::new(),
            slacks: Vec::new(),
            digests: vec![IterateDigest::of(x0)],
            iterates: record_full.then(|| vec![x0.clone()]),
        }
    }

    fn record(&mut self, next: &GridFunction, delta: f64, flag: OrderRel, slack: f64) {
        self.deltas.push(delta);
        self.flags.push(flag);
        self.slacks.push(slack);
        self.digests.push(IterateDigest::of(next));
        if let Some(iterates) = &mut self.iterates {
            iterates.push(next.clone());
        }
    }

    fn into_trace(
        self,
        final_iterate: GridFunction,
        final_residual: Option<f64>,
        converged: bool,
        reason: StopReason,
    ) -> IterationTrace {
        IterationTrace {
            iterations: self.deltas.len(),
            deltas: self.deltas,
            monotone_flags: self.flags,
            slacks: self.slacks,
            digests: self.digests,
            iterates: self.iterates,
            final_iterate,
            final_residual,
            converged,
            reason,
        }
    }
}

fn run_iteration(
    update: impl Fn(&GridFunction) -> Result<GridFunction, OperatorError>,
    x0: &GridFunction,
    cfg: &EngineConfig,
) -> Result<IterationTrace, EngineError> {
    cfg.validate()?;
    let mut state = RunState::new(x0, cfg.record_full_iterates);

    // Starting-point admissibility: x0 must lie on the approach side of its
    // own image, within slack.
    let first = match update(x0) {
        Ok(v) => v,
        Err(source) => {
            let trace = state.into_trace(x0.clone(), None, false, StopReason::OperatorError);
            return Err(EngineError::Operator {
                iteration: 0,
                source,
                trace: Box::new(trace),
            });
        }
    };
    let start_slack = cfg.effective_slack(x0.sup_norm().max(first.sup_norm()));
    let excess = x0
        .values()
        .iter()
        .zip(first.values())
        .fold(f64::NEG_INFINITY, |m, (x, fx)| {
            m.max(match cfg.direction {
                Direction::FromLower => x - fx,
                Direction::FromUpper => fx - x,
            })
        });
    if excess > start_slack {
        return Err(EngineError::LowerSolutionRejected {
            direction: match cfg.direction {
                Direction::FromLower => "lower",
                Direction::FromUpper => "upper",
            },
            worst_excess: excess,
            slack: start_slack,
        });
    }

    let mut current = x0.clone();
    let mut next = first;
    for iteration in 1..=cfg.max_outer {
        let delta = next
            .distance(&current)
            .expect("iterates share the grid by construction");
        let slack = cfg.effective_slack(current.sup_norm().max(next.sup_norm()));
        let flag = current
            .order_cmp_slack(&next, slack)
            .expect("iterates share the grid by construction");
        let in_order = match cfg.direction {
            Direction::FromLower => flag.is_nondecreasing_step(),
            Direction::FromUpper => flag.is_nonincreasing_step(),
        };
        state.record(&next, delta, flag, slack);
        if !in_order {
            let trace = state.into_trace(next, None, false, StopReason::MonotonicityBroken);
            return Err(EngineError::MonotonicityBroken {
                iteration,
                flag,
                trace: Box::new(trace),
            });
        }
        if delta <= cfg.tol_outer {
            let residual = update(&next)
                .ok()
                .map(|fx| fx.distance(&next).expect("shared grid"));
            return Ok(state.into_trace(next, residual, true, StopReason::ToleranceMet));
        }
        if iteration == cfg.max_outer {
            break;
        }
        current = next;
        next = match update(&current) {
            Ok(v) => v,
            Err(source) => {
                let trace =
                    state.into_trace(current.clone(), None, false, StopReason::OperatorError);
                return Err(EngineError::Operator {
                    iteration,
                    source,
                    trace: Box::new(trace),
                });
            }
        };
    }
    Ok(state.into_trace(next, None, false, StopReason::MaxIterations))
}

/// Run the hybrid iteration `x_{n+1} = A x_n * B x_n + C x_n` from `x0`.
pub fn run_hybrid(
    a: &OperatorBlock,
    b: &OperatorBlock,
    c: &OperatorBlock,
    x0: &GridFunction,
    cfg: &EngineConfig,
) -> Result<IterationTrace, EngineError> {
    run_iteration(
        |x| {
            let ax = a.apply(x)?;
            let bx = b.apply(x)?;
            let cx = c.apply(x)?;
            Ok(ax.mul_pointwise(&bx)?.add(&cx)?)
        },
        x0,
        cfg,
    )
}

/// Run the block iteration `x_{n+1} = A x_n + T x_n * T' x_n` from `x0`.
/// `t` and `tprime` must carry the positive flag: the quadratic factor only
/// preserves order between functions in the positive cone.
pub fn run_block(
    a: &OperatorBlock,
    t: &OperatorBlock,
    tprime: &OperatorBlock,
    x0: &GridFunction,
    cfg: &EngineConfig,
) -> Result<IterationTrace, EngineError> {
    if !t.is_positive() {
        return Err(EngineError::MissingPositivity { which: "T" });
    }
    if !tprime.is_positive() {
        return Err(EngineError::MissingPositivity { which: "T'" });
    }
    run_iteration(
        |x| {
            let ax = a.apply(x)?;
            let tx = t.apply(x)?;
            let tpx = tprime.apply(x)?;
            Ok(ax.add(&tx.mul_pointwise(&tpx)?)?)
        },
        x0,
        cfg,
    )
}

/// `max over probes of ||T' probe||`: a lower estimate of the operator range
/// norm. Callers combine it with an analytic bound when one is available.
pub fn estimate_m(
    tprime: &OperatorBlock,
    probes: &[GridFunction],
) -> Result<f64, EngineError> {
    if probes.is_empty() {
        return Err(EngineError::EmptyProbeSet);
    }
    let mut m: f64 = 0.0;
    for (index, probe) in probes.iter().enumerate() {
        let image = tprime
            .apply(probe)
            .map_err(|source| EngineError::Probe { index, source })?;
        m = m.max(image.sup_norm());
    }
    Ok(m)
}
