//! The inner resolvent `(I - D)^{-1}`: the solution operator of
//! `y = C x + D y` for a fixed `x`.
//!
//! Two routes are provided and cross-validated against each other. The Picard
//! route iterates `y <- C x + D y`, which contracts geometrically when `p` has
//! contraction constant `k < 1`. The closed-form route uses the structural
//! identity of the C block: with `w = 1/(1 - b|x|)` and `C x = w - p(t, w)`,
//! the function `w` itself satisfies `w = C x + p(t, w)` exactly, so
//! `(I - D)^{-1} C x = w` whenever the fixed point is unique.
//!
//! The closed form is tied to that specific structure of C; for a modified C
//! block only the Picard route is meaningful, so the cross-check is gated on
//! the canonical operator.

use thiserror::Error;

use crate::operators::{apply_c, apply_d, reciprocal_weight, OperatorError};
use crate::ordered_space::GridFunction;
use crate::qfde::ProblemInstance;

pub const DEFAULT_TOL_INNER: f64 = 1e-12;
pub const DEFAULT_MAX_INNER: usize = 200;

#[derive(Debug, Clone)]
pub struct ResolventResult {
    pub y: GridFunction,
    pub iterations: usize,
    /// Sup-norm change at the last step.
    pub final_delta: f64,
    pub converged: bool,
    /// Sup-norm deltas of every step, for rate diagnostics.
    pub deltas: Vec<f64>,
}

/// Picard iteration `y_{m+1} = C x + D y_m` until the sup-norm step falls
/// below `tol_inner`. `y_init` defaults to `C x`, one step ahead of a zero
/// start. Deltas contract like `delta_{m+1} <= k * delta_m` plus roundoff;
/// hitting `max_iter` with a large delta signals `k >= 1` in practice.
pub fn resolvent_picard(
    inst: &ProblemInstance,
    x: &GridFunction,
    y_init: Option<&GridFunction>,
    tol_inner: f64,
    max_iter: usize,
) -> Result<ResolventResult, ResolventError> {
    let cx = apply_c(inst, x)?;
    let mut y = match y_init {
        Some(y0) => y0.clone(),
        None => cx.clone(),
    };
    let mut deltas = Vec::new();
    for m in 1..=max_iter {
        let next = cx.add(&apply_d(inst, &y)?).map_err(OperatorError::from)?;
        let delta = next.distance(&y).map_err(OperatorError::from)?;
        deltas.push(delta);
        y = next;
        if delta <= tol_inner {
            return Ok(ResolventResult {
                y,
                iterations: m,
                final_delta: delta,
                converged: true,
                deltas,
            });
        }
    }
    Err(ResolventError::NonConvergence {
        iterations: max_iter,
        final_delta: deltas.last().copied().unwrap_or(f64::INFINITY),
    })
}

/// Closed form `(I - D)^{-1} C x = 1 / (1 - b|x|)`, valid for the canonical
/// C block.
pub fn resolvent_closed_form(
    inst: &ProblemInstance,
    x: &GridFunction,
) -> Result<GridFunction, OperatorError> {
    reciprocal_weight(inst, x)
}

/// Sup-norm gap between the Picard and closed-form routes. For the canonical
/// C block this is bounded by `max(10 * tol_inner, 1e-10)` whenever the
/// Picard route converges.
pub fn crosscheck_resolvent(
    inst: &ProblemInstance,
    x: &GridFunction,
    tol_inner: f64,
) -> Result<f64, ResolventError> {
    let picard = resolvent_picard(inst, x, None, tol_inner, DEFAULT_MAX_INNER)?;
    let closed = resolvent_closed_form(inst, x)?;
    Ok(picard.y.distance(&closed).map_err(OperatorError::from)?)
}

#[derive(Debug, Error)]
pub enum ResolventError {
    #[error("inner iteration did not converge after {iterations} steps (last delta {final_delta:.3e}); is the contraction constant below 1?")]
    NonConvergence { iterations: usize, final_delta: f64 },
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qfde::ProblemInstance;

    #[test]
    fn converges_in_one_step_without_inner_coupling() {
        // p = 0 means D = 0: the first iterate is already the fixed point.
        let inst = ProblemInstance::trivial(41);
        let x = GridFunction::sample(inst.grid, |t| 0.5 * t).unwrap();
        let res = resolvent_picard(&inst, &x, None, 1e-12, 50).unwrap();
        assert_eq!(res.iterations, 1);
        assert_eq!(res.final_delta, 0.0);
        let cx = apply_c(&inst, &x).unwrap();
        assert_eq!(res.y, cx);
    }

    #[test]
    fn linear_inner_map_has_unit_fixed_point() {
        // b = 0, p(t, y) = k y: the fixed point solves y = 1 - k + k y, so
        // y = 1 exactly for any k < 1.
        let mut inst = ProblemInstance::trivial(41);
        inst.p = "poly(0,0.5)".parse().unwrap();
        inst.contraction_k = 0.5;
        let x = GridFunction::sample(inst.grid, |t| t * t).unwrap();
        let zero = GridFunction::constant(inst.grid, 0.0).unwrap();
        let res = resolvent_picard(&inst, &x, Some(&zero), 1e-13, 200).unwrap();
        for v in res.y.values() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_ratios_match_the_contraction_constant() {
        let mut inst = ProblemInstance::trivial(41);
        inst.p = "poly(0,0.5)".parse().unwrap();
        inst.contraction_k = 0.5;
        let x = GridFunction::sample(inst.grid, |t| 0.3 + 0.2 * t).unwrap();
        let zero = GridFunction::constant(inst.grid, 0.0).unwrap();
        let res = resolvent_picard(&inst, &x, Some(&zero), 1e-12, 200).unwrap();
        assert!(res.converged);
        // Expected iteration count for geometric decay at ratio 1/2.
        let d0 = res.deltas[0];
        let predicted = ((1e-12f64 / d0).ln() / 0.5f64.ln()).ceil() as usize + 1;
        assert!(
            (res.iterations as i64 - predicted as i64).abs() <= 2,
            "iterations {} vs predicted {predicted}",
            res.iterations
        );
        for pair in res.deltas.windows(2) {
            if pair[0] > 1e-13 {
                let ratio = pair[1] / pair[0];
                assert!((ratio - 0.5).abs() < 1e-6, "ratio {ratio}");
            }
        }
    }

    #[test]
    fn closed_form_cases() {
        let mut inst = ProblemInstance::trivial(21);
        let x = GridFunction::sample(inst.grid, |t| 1.0 - t).unwrap();
        let w = resolvent_closed_form(&inst, &x).unwrap();
        assert!(w.values().iter().all(|v| *v == 1.0));

        inst.b = "0.5".parse().unwrap();
        let one = GridFunction::constant(inst.grid, 1.0).unwrap();
        let w = resolvent_closed_form(&inst, &one).unwrap();
        assert!(w.values().iter().all(|v| *v == 2.0));

        let mut ramp_b = ProblemInstance::trivial(21);
        ramp_b.grid = crate::Grid::new(0.5, 21).unwrap();
        ramp_b.b = "t".parse().unwrap();
        let one = GridFunction::constant(ramp_b.grid, 1.0).unwrap();
        let w = resolvent_closed_form(&ramp_b, &one).unwrap();
        for (t, v) in ramp_b.grid.nodes().zip(w.values()) {
            assert!((v - 1.0 / (1.0 - t)).abs() < 1e-15);
        }
    }

    #[test]
    fn fixed_point_identity_of_the_closed_form() {
        // w = C x + D w holds nodewise up to roundoff by construction of C.
        let mut inst = ProblemInstance::trivial(41);
        inst.b = "0.3".parse().unwrap();
        inst.p = "sin(0.4)".parse().unwrap();
        inst.contraction_k = 0.4;
        let x = GridFunction::sample(inst.grid, |t| 0.8 * (1.0 + (3.0 * t).sin()) / 2.0).unwrap();
        let w = resolvent_closed_form(&inst, &x).unwrap();
        let rhs = apply_c(&inst, &x)
            .unwrap()
            .add(&apply_d(&inst, &w).unwrap())
            .unwrap();
        assert!(w.distance(&rhs).unwrap() < 1e-12);
    }

    #[test]
    fn closed_form_is_monotone_on_nonnegative_inputs() {
        use crate::operators::{BlockKind, OperatorBlock};
        use crate::verify::{verify_monotone, DomainBox};
        let mut inst = ProblemInstance::trivial(41);
        inst.b = "0.3".parse().unwrap();
        let grid = inst.grid;
        let block = OperatorBlock::new(BlockKind::Composite, move |x| {
            resolvent_closed_form(&inst, x)
        });
        let report =
            verify_monotone(&block, grid, DomainBox::new(0.0, 1.5).unwrap(), 32, 9).unwrap();
        assert!(report.holds_on_sample, "{report:?}");
    }

    #[test]
    fn crosscheck_is_zero_without_inner_coupling() {
        let inst = ProblemInstance::trivial(41);
        let x = GridFunction::sample(inst.grid, |t| t).unwrap();
        assert_eq!(crosscheck_resolvent(&inst, &x, 1e-12).unwrap(), 0.0);
    }

    #[test]
    fn crosscheck_small_for_sine_coupling() {
        let mut inst = ProblemInstance::trivial(81);
        inst.b = "0.2".parse().unwrap();
        inst.p = "sin(0.3)".parse().unwrap();
        inst.contraction_k = 0.3;
        let x = GridFunction::sample(inst.grid, |t| 0.5 + 0.3 * (2.0 * t).cos()).unwrap();
        let gap = crosscheck_resolvent(&inst, &x, 1e-12).unwrap();
        assert!(gap <= 1e-10, "gap = {gap:.3e}");
    }

    #[test]
    fn expanding_inner_map_reports_nonconvergence() {
        let mut inst = ProblemInstance::trivial(21);
        inst.p = "poly(0,1.2)".parse().unwrap();
        inst.contraction_k = 1.2;
        let x = GridFunction::constant(inst.grid, 0.5).unwrap();
        let err = resolvent_picard(&inst, &x, None, 1e-12, 60).unwrap_err();
        assert!(matches!(err, ResolventError::NonConvergence { .. }));
    }
}
