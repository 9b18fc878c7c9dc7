//! Monotone fixed-point solver and verification harness for coupled
//! quadratic functional differential systems of the form
//!
//! ```text
//! d/dt[(x - f1(t,x)) / f2(t,y)] + lambda (x - f1(t,x)) / f2(t,y) = g(t, y)
//! y = 1/(1 - b(t)|x|) - p(t, 1/(1 - b(t)|x|)) + p(t, y)
//! x(0) = x0, y(0) = y0
//! ```
//!
//! The system is treated as a fixed-point problem for a 2x2 block of
//! nondecreasing operators on the partially ordered algebra of continuous
//! functions, discretized on a uniform grid. The crate provides:
//!
//! - [`ordered_space`]: grid functions with the pointwise order, sup norm,
//!   pointwise product and chain utilities;
//! - [`dfunction`]: closed-form dominating functions with composition and
//!   contraction-condition checking;
//! - [`operators`]: the concrete operator blocks, including the
//!   exponentially weighted Volterra quadrature;
//! - [`verify`]: sampled audits of monotonicity, Lipschitz certificates,
//!   positivity and boundedness;
//! - [`resolvent`]: the inner fixed point `y = Cx + Dy` by Picard iteration
//!   and by its closed form, cross-validated;
//! - [`engine`]: the generic monotone iteration drivers with full traces;
//! - [`qfde`]: problem instances, the hypothesis audit that gates a run,
//!   and the end-to-end solve;
//! - [`oracle`]: an independent fourth-order reference integration of the
//!   equivalent scalar problem, for cross-validation;
//! - [`testing`]: seeded generators used by tests and benches.
//!
//! Sampled audits and study sweeps run their trials on a rayon pool when the
//! `parallel` feature (default) is enabled, and sequentially otherwise;
//! results are identical either way.
//!
//! ```
//! use qfde_core::{solve, ProblemInstance, SolveConfig};
//!
//! // lambda = 1 with trivial coefficients: the exact solution is e^(-t).
//! let inst = ProblemInstance::trivial(201);
//! let report = solve(&inst, &SolveConfig::default())?;
//! assert!(report.trace.converged);
//! let err = inst
//!     .grid
//!     .nodes()
//!     .zip(report.x_star.values())
//!     .fold(0.0f64, |m, (t, x)| m.max((x - (-t).exp()).abs()));
//! assert!(err < 1e-9);
//! # Ok::<(), qfde_core::SolveError>(())
//! ```

pub mod dfunction;
pub mod engine;
pub mod fields;
pub mod operators;
pub mod oracle;
pub mod ordered_space;
pub mod qfde;
pub mod resolvent;
pub mod testing;
pub mod verify;

mod exec;
mod grammar;

pub use dfunction::{
    check_contraction, check_contraction_sampled, compose_block_psi, ContractionForm,
    ContractionReport, DFunction,
};
pub use engine::{
    estimate_m, run_block, run_hybrid, Direction, EngineConfig, EngineError, IterationTrace,
    StopReason,
};
pub use fields::{ScalarField2, TimePoly};
pub use operators::{
    apply_a, apply_b, apply_c, apply_d, volterra_offset, weighted_volterra, BlockKind,
    OperatorBlock, OperatorError,
};
pub use oracle::{oracle_compare, reference_solution, OracleError};
pub use ordered_space::{chain_diameter, ChainSample, Grid, GridFunction, OrderRel, SpaceError};
pub use qfde::{
    check_instance, solve, verify_lower_solution, HypothesisReport, LowerPair, ProblemInstance,
    SolutionReport, SolveConfig, SolveError,
};
pub use resolvent::{crosscheck_resolvent, resolvent_closed_form, resolvent_picard};
pub use verify::{
    verify_bounded, verify_dlipschitz, verify_monotone, verify_positive, CertificateReport,
    DomainBox,
};
