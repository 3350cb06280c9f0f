//! Seeded fixtures shared by the benchmarks.

use adsbqp::channel::{generate_channel, SeededRng};
use adsbqp::{EsrProblem, QpProblem, ScenarioConfig};
use nalgebra::{DMatrix, DVector};

/// Strictly convex QP on the unit box with `m` random rows through a point
/// inside the box, so it is always feasible.
pub fn random_qp(n: usize, m: usize, seed: u64) -> QpProblem {
    let mut rng = SeededRng::new(seed);
    let b = DMatrix::from_fn(n, n, |_, _| rng.normal_pair().0);
    let q = &b * b.transpose() + DMatrix::identity(n, n) * 0.1;
    let g = DVector::from_fn(n, |_, _| rng.normal_pair().0);
    let a = DMatrix::from_fn(m, n, |_, _| rng.normal_pair().0);
    let center = DVector::from_element(n, 0.5);
    let u = &a * center + DVector::from_fn(m, |_, _| rng.uniform());
    QpProblem::new(q, g, a, u, DVector::zeros(n), DVector::from_element(n, 1.0)).unwrap()
}

/// Convex box QP whose linear term pulls coordinates toward both ends.
pub fn random_bqp(n: usize, seed: u64) -> QpProblem {
    let mut rng = SeededRng::new(seed);
    let b = DMatrix::from_fn(n, n, |_, _| rng.normal_pair().0 * 0.3);
    let q = &b * b.transpose() + DMatrix::identity(n, n) * 0.05;
    let g = DVector::from_fn(n, |_, _| rng.normal_pair().0);
    QpProblem::boxed(q, g, DVector::zeros(n), DVector::from_element(n, 1.0)).unwrap()
}

/// Default seeded scenario of the given size.
pub fn scenario(n_tx: usize, n_users: usize, seed: u64) -> EsrProblem {
    let mut cfg = ScenarioConfig::with_size(n_tx, n_users);
    cfg.seed = seed;
    let channel = generate_channel(&cfg).unwrap();
    EsrProblem::new(channel, cfg).unwrap()
}
