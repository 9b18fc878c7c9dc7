//! Independent reference path for a solved instance.
//!
//! The differential form of the system is equivalent to the scalar problem
//! `z' = g(t, y) - lambda z` with `z = (x - f1(t, x)) / f2(t, y)` and
//! `y = 1/(1 - b(t)|x|)`. The oracle integrates `z` with a classic one-step
//! fourth-order method on a grid several times finer than the instance grid,
//! recovering `x` (and through it `y`) at every stage by a monotone scalar
//! root-find on
//!
//! ```text
//! F(x) = x - f1(t, x) - z * f2(t, 1/(1 - b(t)|x|)) = 0
//! ```
//!
//! `x - f1(t, x)` is strictly increasing when the hyperbolic slope bound
//! `L/K <= 1` holds, so the root is unique there; at `L = K` the slope can
//! degenerate to zero and bisection just slows down.
//!
//! Nothing here shares code with the fixed-point path: different
//! discretization, different algorithm, separate failure modes.

use thiserror::Error;

use crate::operators::OperatorError;
use crate::ordered_space::GridFunction;
use crate::qfde::{ProblemInstance, SolutionReport};

/// Oracle grid refinement relative to the instance grid.
pub const ORACLE_REFINEMENT: usize = 4;

const ROOT_TOL: f64 = 1e-13;
const MAX_BRACKET_GROWTH: usize = 60;
const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Clone)]
pub struct OracleResult {
    /// Reference x at the instance grid nodes.
    pub x_reference: GridFunction,
    /// Sup-node gap against the compared solution.
    pub gap: f64,
    pub refinement: usize,
}

/// Sup-node gap between `report.x_star` and the independently integrated
/// reference solution.
pub fn oracle_compare(
    inst: &ProblemInstance,
    report: &SolutionReport,
) -> Result<f64, OracleError> {
    Ok(oracle_run(inst, &report.x_star)?.gap)
}

pub fn oracle_run(
    inst: &ProblemInstance,
    x_star: &GridFunction,
) -> Result<OracleResult, OracleError> {
    let reference = reference_solution(inst)?;
    let gap = reference
        .distance(x_star)
        .map_err(|e| OracleError::Operator(OperatorError::from(e)))?;
    Ok(OracleResult {
        x_reference: reference,
        gap,
        refinement: ORACLE_REFINEMENT,
    })
}

/// Integrate the equivalent scalar problem on a grid `ORACLE_REFINEMENT`
/// times finer and return the recovered `x` at the coarse nodes.
pub fn reference_solution(inst: &ProblemInstance) -> Result<GridFunction, OracleError> {
    let n_coarse = inst.grid.n_points();
    let steps = (n_coarse - 1) * ORACLE_REFINEMENT;
    let h = inst.grid.t_end() / steps as f64;

    let f2_at_start = inst.f2.eval(0.0, inst.y0);
    if f2_at_start == 0.0 {
        return Err(OracleError::Operator(OperatorError::InstanceDefinition(
            "f2(0, y0) = 0; the scalar reformulation is undefined".into(),
        )));
    }
    let mut z = (inst.x0 - inst.f1.eval(0.0, inst.x0)) / f2_at_start;

    // Warm start for the per-stage recovery; updated as integration advances.
    let mut warm = inst.x0;
    let mut coarse = Vec::with_capacity(n_coarse);
    coarse.push(recover_x(inst, 0.0, z, warm)?);
    warm = coarse[0];

    let rhs = |t: f64, z: f64, warm: f64| -> Result<(f64, f64), OracleError> {
        let x = recover_x(inst, t, z, warm)?;
        let y = reciprocal_scalar(inst, t, x)?;
        Ok((inst.g.eval(t, y) - inst.lambda * z, x))
    };

    for step in 0..steps {
        let t = step as f64 * h;
        let (k1, x1) = rhs(t, z, warm)?;
        let (k2, _) = rhs(t + 0.5 * h, z + 0.5 * h * k1, x1)?;
        let (k3, _) = rhs(t + 0.5 * h, z + 0.5 * h * k2, x1)?;
        let (k4, _) = rhs(t + h, z + h * k3, x1)?;
        z += h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
        let t_next = (step + 1) as f64 * h;
        warm = recover_x(inst, t_next, z, warm)?;
        if (step + 1) % ORACLE_REFINEMENT == 0 {
            coarse.push(warm);
        }
    }
    debug_assert_eq!(coarse.len(), n_coarse);
    GridFunction::new(inst.grid, coarse)
        .map_err(|e| OracleError::Operator(OperatorError::from(e)))
}

fn reciprocal_scalar(inst: &ProblemInstance, t: f64, x: f64) -> Result<f64, OracleError> {
    let denom = 1.0 - inst.b.eval(t) * x.abs();
    if denom < inst.singularity_floor {
        return Err(OracleError::Singular { t, denominator: denom });
    }
    Ok(1.0 / denom)
}

/// Solve `x - f1(t, x) = z * f2(t, 1/(1 - b(t)|x|))` by bracketed bisection
/// around a warm start. Bracket ends are clamped to the admissible region, so
/// the residual is always evaluable on them.
fn recover_x(inst: &ProblemInstance, t: f64, z: f64, warm: f64) -> Result<f64, OracleError> {
    let residual = |x: f64| -> Result<f64, OracleError> {
        let y = reciprocal_scalar(inst, t, x)?;
        Ok(x - inst.f1.eval(t, x) - z * inst.f2.eval(t, y))
    };

    let mut step = 0.1f64.max(0.1 * warm.abs());
    let mut lo = singular_boundary(inst, t, warm - step);
    let mut hi = singular_boundary(inst, t, warm + step);
    let mut f_lo = residual(lo)?;
    let mut f_hi = residual(hi)?;

    // Expand the bracket until the residual changes sign. The residual is
    // increasing in x for admissible data, so growth is one-sided.
    let mut growth = 0;
    while f_lo > 0.0 {
        growth += 1;
        if growth > MAX_BRACKET_GROWTH {
            return Err(OracleError::RootBracket {
                t,
                detail: format!("no sign change below x = {lo}"),
            });
        }
        hi = lo;
        f_hi = f_lo;
        step *= 2.0;
        let next = singular_boundary(inst, t, lo - step);
        if next == lo {
            return Err(OracleError::RootBracket {
                t,
                detail: "residual stays positive down to the singularity floor".into(),
            });
        }
        lo = next;
        f_lo = residual(lo)?;
    }
    growth = 0;
    while f_hi < 0.0 {
        growth += 1;
        if growth > MAX_BRACKET_GROWTH {
            return Err(OracleError::RootBracket {
                t,
                detail: format!("no sign change above x = {hi}"),
            });
        }
        lo = hi;
        step *= 2.0;
        let next = singular_boundary(inst, t, hi + step);
        if next == hi {
            return Err(OracleError::RootBracket {
                t,
                detail: "residual stays negative up to the singularity floor".into(),
            });
        }
        hi = next;
        f_hi = residual(hi)?;
    }

    let scale = 1.0f64.max(warm.abs());
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= ROOT_TOL * scale {
            return Ok(mid);
        }
        let f_mid = residual(mid)?;
        if f_mid < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Largest |x| of the given sign that keeps `1 - b|x|` above the floor.
fn singular_boundary(inst: &ProblemInstance, t: f64, x: f64) -> f64 {
    let b = inst.b.eval(t);
    if b <= 0.0 {
        return x;
    }
    let limit = (1.0 - 2.0 * inst.singularity_floor) / b;
    x.clamp(-limit, limit)
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("root bracketing failed at t = {t}: {detail}")]
    RootBracket { t: f64, detail: String },
    #[error("singular reciprocal weight at t = {t}: denominator {denominator:.3e}")]
    Singular { t: f64, denominator: f64 },
    #[error(transparent)]
    Operator(#[from] OperatorError),
}
