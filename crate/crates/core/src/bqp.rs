//! Penalty-homotopy method for Boolean QPs.
//!
//! ```text
//!     minimize    1/2 x'Qx + g'x
//!     subject to  Ax <= u,   0 <= x  perp  (1 - x) >= 0
//! ```
//!
//! The complementarity condition is handled through the penalty
//! `phi(x) = x'(1 - x)`. Adding `rho * phi` to the objective would make the QP
//! concave for large `rho`; instead each local search adds only the
//! linearization `rho * (1 - 2 x_hat)'x` around the current iterate, so every
//! subproblem keeps the original (convex) `Q`:
//!
//! 1. global search: solve the QP without complementarity, once;
//! 2. local search: solve the QP with the linearized penalty at `x_hat`;
//! 3. Armijo line search on `psi = 1/2 x'Qx + g'x + rho phi(x)` between the
//!    two, then stop if `|phi(x_hat)| <= eps_comp`;
//! 4. otherwise `rho <- beta rho` and go back to 2.
//!
//! Only the first `n_boolean` variables carry the complementarity condition;
//! any trailing variables (e.g. elastic slacks) are continuous.

use nalgebra::DVector;
use serde::Serialize;

use crate::qp::{self, QpProblem, QpStatus};
use crate::Result;

/// Added to the linearized penalty of a coordinate stuck exactly at 1/2,
/// where the penalty gradient vanishes.
const SADDLE_NUDGE: f64 = 1e-7;

#[derive(Debug, Clone, Serialize)]
pub struct BqpConfig {
    pub rho0: f64,
    pub beta: f64,
    pub eps_comp: f64,
    pub max_penalty: f64,
    pub armijo_c1: f64,
    pub backtrack_factor: f64,
    pub min_step: f64,
    pub max_outer: usize,
    pub qp_tol: f64,
    pub qp_max_iter: usize,
}

impl Default for BqpConfig {
    fn default() -> Self {
        Self {
            rho0: 1.0,
            beta: 2.0,
            eps_comp: 1e-10,
            max_penalty: 2f64.powi(32),
            armijo_c1: 1e-4,
            backtrack_factor: 0.5,
            min_step: 1e-12,
            max_outer: 64,
            qp_tol: qp::DEFAULT_TOL,
            qp_max_iter: qp::DEFAULT_MAX_ITER,
        }
    }
}

impl BqpConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.beta > 1.0 && self.rho0 > 0.0 && self.eps_comp > 0.0;
        if ok {
            Ok(())
        } else {
            Err(crate::Error::InvalidConfig(
                "BQP needs beta > 1, rho0 > 0 and eps_comp > 0".into(),
            ))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BqpIterate {
    pub rho: f64,
    /// `1/2 x'Qx + g'x` at the updated iterate.
    pub objective: f64,
    pub complementarity: f64,
    pub step: f64,
    pub qp_iterations: usize,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct BqpTrace {
    pub global_objective: f64,
    pub global_complementarity: f64,
    pub global_qp_iterations: usize,
    pub iterations: Vec<BqpIterate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BqpStatus {
    Converged,
    /// Penalty or iteration cap reached with `|phi|` still above tolerance.
    ComplementarityNotMet { phi: f64 },
    /// The relaxation (and hence the Boolean problem) has no feasible point.
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct BqpResult {
    pub x: DVector<f64>,
    pub status: BqpStatus,
    pub trace: BqpTrace,
}

/// `sum_i x_i (1 - x_i)` over the first `n_boolean` entries.
pub fn penalty_phi(x: &DVector<f64>, n_boolean: usize) -> f64 {
    x.iter().take(n_boolean).map(|&v| v * (1.0 - v)).sum()
}

/// `1 - 2x` on the Boolean block, zero elsewhere.
pub fn penalty_grad(x: &DVector<f64>, n_boolean: usize) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| if i < n_boolean { 1.0 - 2.0 * x[i] } else { 0.0 })
}

fn solve(qp: &QpProblem, cfg: &BqpConfig) -> Result<qp::QpSolution> {
    qp::solve_qp(qp, cfg.qp_tol, cfg.qp_max_iter)
}

/// The relaxation without complementarity.
pub fn global_search(qp: &QpProblem, cfg: &BqpConfig) -> Result<qp::QpSolution> {
    solve(qp, cfg)
}

/// Minimizer of the QP plus the penalty linearized at `x_hat`, with weight
/// `rho`.
pub fn local_search(
    qp: &QpProblem,
    x_hat: &DVector<f64>,
    rho: f64,
    n_boolean: usize,
    cfg: &BqpConfig,
) -> Result<qp::QpSolution> {
    let mut lin = penalty_grad(x_hat, n_boolean) * rho;
    for i in 0..n_boolean {
        if x_hat[i] == 0.5 {
            lin[i] += SADDLE_NUDGE;
        }
    }
    solve(&qp.with_linear_term(&qp.g + lin), cfg)
}

/// Penalty merit `psi` and its gradient.
pub fn merit(qp: &QpProblem, x: &DVector<f64>, rho: f64, n_boolean: usize) -> (f64, DVector<f64>) {
    let value = qp.objective(x) + rho * penalty_phi(x, n_boolean);
    let grad = &qp.q * x + &qp.g + penalty_grad(x, n_boolean) * rho;
    (value, grad)
}

/// Largest `alpha` in `{1, b, b^2, ...}` (b = `backtrack_factor`) satisfying
/// the Armijo condition on `psi` along `x_tilde - x_hat`; `min_step` when
/// the direction is not a descent direction or backtracking runs out.
pub fn armijo_step(
    qp: &QpProblem,
    x_hat: &DVector<f64>,
    x_tilde: &DVector<f64>,
    rho: f64,
    n_boolean: usize,
    cfg: &BqpConfig,
) -> f64 {
    let d = x_tilde - x_hat;
    let (psi0, grad) = merit(qp, x_hat, rho, n_boolean);
    let slope = grad.dot(&d);
    if !(slope < 0.0) {
        return cfg.min_step;
    }
    let mut alpha = 1.0;
    while alpha >= cfg.min_step {
        let (psi, _) = merit(qp, &(x_hat + &d * alpha), rho, n_boolean);
        if psi <= psi0 + cfg.armijo_c1 * alpha * slope {
            return alpha;
        }
        alpha *= cfg.backtrack_factor;
    }
    cfg.min_step
}

pub fn solve_bqp(qp: &QpProblem, cfg: &BqpConfig) -> Result<BqpResult> {
    solve_bqp_mixed(qp, qp.dim(), cfg)
}

/// BQP where only the first `n_boolean` variables must be Boolean. The
/// caller's bounds on those variables should be `[0, 1]`.
pub fn solve_bqp_mixed(qp: &QpProblem, n_boolean: usize, cfg: &BqpConfig) -> Result<BqpResult> {
    cfg.validate()?;
    let global = global_search(qp, cfg)?;
    let mut x_hat = global.x;
    let mut trace = BqpTrace {
        global_objective: qp.objective(&x_hat),
        global_complementarity: penalty_phi(&x_hat, n_boolean).abs(),
        global_qp_iterations: global.iterations,
        iterations: Vec::new(),
    };
    if global.status == QpStatus::Infeasible {
        return Ok(BqpResult {
            x: x_hat,
            status: BqpStatus::Infeasible,
            trace,
        });
    }
    if trace.global_complementarity <= cfg.eps_comp {
        return Ok(BqpResult {
            x: x_hat,
            status: BqpStatus::Converged,
            trace,
        });
    }

    let mut rho = cfg.rho0;
    for _ in 0..cfg.max_outer {
        if rho > cfg.max_penalty {
            break;
        }
        let local = local_search(qp, &x_hat, rho, n_boolean, cfg)?;
        if local.status == QpStatus::Infeasible {
            return Ok(BqpResult {
                x: x_hat,
                status: BqpStatus::Infeasible,
                trace,
            });
        }
        if !local.x.iter().all(|v| v.is_finite()) {
            break;
        }
        let alpha = armijo_step(qp, &x_hat, &local.x, rho, n_boolean, cfg);
        if alpha == 1.0 {
            // Exact assignment keeps the QP solution's exact bound values.
            x_hat = local.x;
        } else {
            x_hat += (&local.x - &x_hat) * alpha;
        }
        let phi = penalty_phi(&x_hat, n_boolean).abs();
        trace.iterations.push(BqpIterate {
            rho,
            objective: qp.objective(&x_hat),
            complementarity: phi,
            step: alpha,
            qp_iterations: local.iterations,
        });
        if phi <= cfg.eps_comp {
            return Ok(BqpResult {
                x: x_hat,
                status: BqpStatus::Converged,
                trace,
            });
        }
        rho *= cfg.beta;
    }
    let phi = penalty_phi(&x_hat, n_boolean).abs();
    Ok(BqpResult {
        x: x_hat,
        status: BqpStatus::ComplementarityNotMet { phi },
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn vec(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    fn boxed(q: DMatrix<f64>, g: &[f64]) -> QpProblem {
        let n = g.len();
        QpProblem::boxed(q, vec(g), DVector::zeros(n), DVector::from_element(n, 1.0)).unwrap()
    }

    #[test]
    fn penalty_values() {
        assert_eq!(penalty_phi(&DVector::zeros(5), 5), 0.0);
        assert_eq!(penalty_phi(&DVector::from_element(5, 1.0), 5), 0.0);
        assert_eq!(penalty_phi(&DVector::from_element(64, 0.5), 64), 16.0);
        assert_relative_eq!(penalty_phi(&vec(&[0.3, 0.8]), 2), 0.37, epsilon = 1e-15);
        assert_eq!(penalty_grad(&vec(&[0.25, 1.0, 0.7]), 2).as_slice(), &[0.5, -1.0, 0.0]);
    }

    #[test]
    fn global_search_cases() {
        let cfg = BqpConfig::default();
        let sol = global_search(&boxed(DMatrix::identity(2, 2), &[-0.6, 0.4]), &cfg).unwrap();
        assert_relative_eq!(sol.x[0], 0.6, epsilon = 1e-10);
        assert_eq!(sol.x[1], 0.0);
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let sol = global_search(&boxed(q, &[0.0, 0.0]), &cfg).unwrap();
        assert!(sol.x.amax() <= 1e-10);
    }

    #[test]
    fn infeasible_rows_surface_unchanged() {
        let qp = QpProblem::new(
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            vec(&[-1.0]),
            DVector::zeros(2),
            DVector::from_element(2, 1.0),
        )
        .unwrap();
        let res = solve_bqp(&qp, &BqpConfig::default()).unwrap();
        assert_eq!(res.status, BqpStatus::Infeasible);
    }

    #[test]
    fn local_search_cases() {
        let cfg = BqpConfig::default();
        let qp = boxed(DMatrix::identity(2, 2), &[-0.6, 0.4]);
        let global = global_search(&qp, &cfg).unwrap();
        let zero_rho = local_search(&qp, &vec(&[0.9, 0.1]), 0.0, 2, &cfg).unwrap();
        assert!((zero_rho.x - &global.x).amax() <= 1e-10);
        let saddle = local_search(&qp, &vec(&[0.5, 0.5]), 3.0, 2, &cfg).unwrap();
        assert!((saddle.x - &global.x).amax() <= 1e-6);

        let qp = boxed(DMatrix::identity(1, 1), &[-0.5]);
        let sol = local_search(&qp, &vec(&[0.4]), 1.0, 1, &cfg).unwrap();
        assert_relative_eq!(sol.x[0], 0.3, epsilon = 1e-10);
    }

    #[test]
    fn armijo_cases() {
        let cfg = BqpConfig::default();
        let qp = boxed(DMatrix::identity(1, 1), &[-1.0]);
        // Descent to the exact minimizer of a convex quadratic.
        assert_eq!(armijo_step(&qp, &vec(&[0.0]), &vec(&[1.0]), 0.0, 1, &cfg), 1.0);

        // Steep curvature: the full step from 0.1 to 0.9 overshoots the
        // minimizer at 0.19 and increases psi.
        let qp_steep = boxed(DMatrix::identity(1, 1) * 100.0, &[-20.0]);
        let (x0, x1, rho) = (vec(&[0.1]), vec(&[0.9]), 1.0);
        let alpha = armijo_step(&qp_steep, &x0, &x1, rho, 1, &cfg);
        let d = &x1 - &x0;
        let (psi0, grad) = merit(&qp_steep, &x0, rho, 1);
        let (psi_full, _) = merit(&qp_steep, &x1, rho, 1);
        let (psi_a, _) = merit(&qp_steep, &(&x0 + &d * alpha), rho, 1);
        assert!(psi_full > psi0 + cfg.armijo_c1 * grad.dot(&d));
        assert!(alpha < 1.0);
        assert!(psi_a <= psi0 + cfg.armijo_c1 * alpha * grad.dot(&d));

        // Zero directional derivative falls back to min_step.
        let qp = boxed(DMatrix::identity(2, 2), &[0.0, 0.0]);
        let x = vec(&[0.5, 0.5]);
        let alpha = armijo_step(&qp, &x, &vec(&[0.0, 1.0]), 1.0, 2, &cfg);
        assert_eq!(alpha, cfg.min_step);
    }

    #[test]
    fn two_variable_enumerated_optimum() {
        let qp = boxed(DMatrix::identity(2, 2), &[-0.6, 0.4]);
        let res = solve_bqp(&qp, &BqpConfig::default()).unwrap();
        assert_eq!(res.status, BqpStatus::Converged);
        assert_eq!(res.x.as_slice(), &[1.0, 0.0]);
        assert_relative_eq!(qp.objective(&res.x), -0.1, epsilon = 1e-12);
    }

    #[test]
    fn strongly_negative_g_selects_everything() {
        let qp = boxed(DMatrix::identity(4, 4) * 0.5, &[-5.0; 4]);
        let res = solve_bqp(&qp, &BqpConfig::default()).unwrap();
        assert_eq!(res.status, BqpStatus::Converged);
        assert_eq!(res.x.as_slice(), &[1.0; 4]);
        // Already Boolean after the global search: no penalty iterations.
        assert!(res.trace.iterations.is_empty());
    }

    #[test]
    fn penalty_schedule_is_geometric() {
        let q = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 1.0]);
        let qp = boxed(q, &[-0.7, -0.4, -0.5]);
        let cfg = BqpConfig::default();
        let res = solve_bqp(&qp, &cfg).unwrap();
        assert_eq!(res.status, BqpStatus::Converged);
        assert!(res.x.iter().all(|&v| v == 0.0 || v == 1.0));
        let rhos: Vec<f64> = res.trace.iterations.iter().map(|it| it.rho).collect();
        assert_eq!(rhos[0], cfg.rho0);
        for w in rhos.windows(2) {
            assert_eq!(w[1], w[0] * cfg.beta);
        }
    }
}
