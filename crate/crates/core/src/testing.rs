//! Seeded generators shared by tests, benches and the acceptance suite.
//!
//! The instance family below is tuned to sit inside the admissible region
//! with margin: hyperbolic coefficient fields with `L <= K`, a small
//! reciprocal-weight coefficient, a time-only integrand and initial data
//! keeping `|c| + h_l1` below one. Every member passes the hypothesis audit,
//! and the composed dominating function genuinely bounds the iteration map on
//! the ranges the runs visit.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::fields::{ScalarField2, TimePoly};
use crate::ordered_space::{Grid, GridFunction};
use crate::qfde::ProblemInstance;
use crate::verify::DomainBox;

pub use crate::verify::{comparable_pair, smooth_profile};

/// A gate-passing instance drawn from the tuned family.
pub fn seeded_instance(seed: u64, n_points: usize) -> ProblemInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lambda = rng.gen_range(0.2..1.2);
    let hyp_l = rng.gen_range(0.35..0.6);
    let hyp_k = 1.0;
    let k = rng.gen_range(0.25..0.45);
    let beta = rng.gen_range(0.05..0.15);
    let a1 = hyp_l * rng.gen_range(0.6..1.0);
    let a2 = hyp_l * rng.gen_range(0.5..0.9);
    let g0 = rng.gen_range(0.05..0.2);
    let g1 = rng.gen_range(0.0..0.15);
    let x0 = rng.gen_range(0.25..0.45);

    // atan is nondecreasing on all of R with Lipschitz constant 1, so both
    // forms are genuine k-contractions on any audit box.
    let p = if seed.is_multiple_of(2) {
        ScalarField2::poly_x(vec![0.0, k]).unwrap()
    } else {
        ScalarField2::atan(k).unwrap()
    };

    let mut inst = ProblemInstance::trivial(n_points);
    inst.lambda = lambda;
    inst.grid = Grid::new(1.0, n_points).unwrap();
    inst.b = TimePoly::constant(beta).unwrap();
    inst.f1 = ScalarField2::bounded(a1, hyp_k).unwrap();
    inst.f2 = ScalarField2::sum(
        ScalarField2::constant(1.0).unwrap(),
        ScalarField2::bounded(a2, hyp_k).unwrap(),
    );
    inst.g = ScalarField2::PolyT(TimePoly::new(vec![g0, g1]).unwrap());
    inst.p = p;
    inst.x0 = x0;
    inst.y0 = 1.0 / (1.0 - beta * x0);
    inst.hyp_l = hyp_l;
    inst.hyp_k = hyp_k;
    inst.contraction_k = k;
    inst.g_bound = g0 + g1;
    inst
}

/// A smooth random input inside the instance's safe range, for resolvent and
/// operator exercises.
pub fn seeded_input(inst: &ProblemInstance, seed: u64) -> GridFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd_ef01);
    let domain = DomainBox::new(0.0, 1.2).unwrap();
    smooth_profile(inst.grid, &mut rng, domain)
}

/// The five hand-built smooth instances the oracle comparison runs on:
/// the trivial one, the pure-integration one, a curved time-only integrand,
/// a state-coupled integrand, and the hyperbolic slope boundary `L = K`.
pub fn oracle_suite(n_points: usize) -> Vec<(&'static str, ProblemInstance)> {
    let mut suite = Vec::new();
    suite.push(("trivial", ProblemInstance::trivial(n_points)));
    suite.push(("pure-integration", ProblemInstance::pure_integration(n_points)));

    let mut curved = ProblemInstance::trivial(n_points);
    curved.lambda = 0.8;
    curved.b = TimePoly::constant(0.1).unwrap();
    curved.f1 = ScalarField2::bounded(0.3, 1.0).unwrap();
    curved.f2 = ScalarField2::sum(
        ScalarField2::constant(1.0).unwrap(),
        ScalarField2::bounded(0.25, 1.0).unwrap(),
    );
    curved.p = ScalarField2::poly_x(vec![0.0, 0.3]).unwrap();
    curved.g = ScalarField2::PolyT(TimePoly::new(vec![0.1, 0.0, 0.2]).unwrap());
    curved.x0 = 0.4;
    curved.y0 = 1.0 / (1.0 - 0.1 * 0.4);
    curved.hyp_l = 0.35;
    curved.contraction_k = 0.3;
    curved.g_bound = 0.3;
    suite.push(("curved-integrand", curved));

    let mut coupled = ProblemInstance::trivial(n_points);
    coupled.lambda = 0.5;
    coupled.b = TimePoly::constant(0.12).unwrap();
    coupled.f1 = ScalarField2::bounded(0.25, 1.0).unwrap();
    coupled.p = ScalarField2::poly_x(vec![0.0, 0.25]).unwrap();
    coupled.g = ScalarField2::sum(
        ScalarField2::constant(0.1).unwrap(),
        ScalarField2::bounded(0.15, 1.0).unwrap(),
    );
    coupled.x0 = 0.3;
    coupled.y0 = 1.0 / (1.0 - 0.12 * 0.3);
    coupled.hyp_l = 0.3;
    coupled.contraction_k = 0.25;
    coupled.g_bound = 0.25;
    suite.push(("state-coupled", coupled));

    let mut boundary = ProblemInstance::trivial(n_points);
    boundary.f1 = ScalarField2::bounded(1.0, 1.0).unwrap();
    boundary.g = ScalarField2::PolyT(TimePoly::new(vec![0.0, 0.0, 0.3]).unwrap());
    boundary.g_bound = 0.3;
    boundary.x0 = 0.5;
    suite.push(("slope-boundary", boundary));

    suite
}
