#![allow(dead_code)]

use adsbqp::channel::{generate_channel, SeededRng};
use adsbqp::qp::{QpProblem, QpSolution};
use adsbqp::{EsrProblem, PowerAllocation, ScenarioConfig, SwitchVector};
use nalgebra::{DMatrix, DVector};

pub fn scenario(n_tx: usize, n_users: usize, seed: u64) -> EsrProblem {
    let mut cfg = ScenarioConfig::with_size(n_tx, n_users);
    cfg.seed = seed;
    EsrProblem::new(generate_channel(&cfg).unwrap(), cfg).unwrap()
}

/// Strictly convex QP with `m` rows and box bounds; the box center is
/// strictly feasible. Some coordinates are left unbounded above.
pub fn random_qp(n: usize, m: usize, seed: u64) -> QpProblem {
    let mut rng = SeededRng::new(seed);
    let b = DMatrix::from_fn(n, n, |_, _| rng.normal_pair().0);
    let q = &b * b.transpose() / n as f64 + DMatrix::identity(n, n) * 0.5;
    let g = DVector::from_fn(n, |_, _| 2.0 * rng.normal_pair().0);
    let a = DMatrix::from_fn(m, n, |_, _| rng.normal_pair().0);
    let lower = DVector::from_fn(n, |_, _| -rng.uniform());
    let upper = DVector::from_fn(n, |i, _| if i % 4 == 3 { f64::INFINITY } else { 1.0 + rng.uniform() });
    let center = DVector::from_fn(n, |i, _| {
        if upper[i].is_finite() {
            0.5 * (lower[i] + upper[i])
        } else {
            lower[i] + 1.0
        }
    });
    let u = &a * center + DVector::from_fn(m, |_, _| 0.1 + rng.uniform());
    QpProblem::new(q, g, a, u, lower, upper).unwrap()
}

/// Box-constrained Boolean QP, possibly with indefinite `Q` shifted to be
/// convex, plus an optional knapsack row that `x = 0` satisfies.
pub fn random_bqp(n: usize, with_row: bool, seed: u64) -> QpProblem {
    let mut rng = SeededRng::new(seed);
    let b = DMatrix::from_fn(n, n, |_, _| rng.normal_pair().0 * 0.4);
    let q = &b * b.transpose() + DMatrix::identity(n, n) * 0.05;
    let g = DVector::from_fn(n, |_, _| rng.normal_pair().0);
    let (a, u) = if with_row {
        let a = DMatrix::from_fn(1, n, |_, _| 0.2 + rng.uniform());
        let u = DVector::from_element(1, 0.4 * a.sum());
        (a, u)
    } else {
        (DMatrix::zeros(0, n), DVector::zeros(0))
    };
    QpProblem::new(q, g, a, u, DVector::zeros(n), DVector::from_element(n, 1.0)).unwrap()
}

/// Best feasible vertex of `{0,1}^n` by brute force.
pub fn enumerate_vertices(qp: &QpProblem) -> (f64, DVector<f64>) {
    let n = qp.dim();
    let mut best = (f64::INFINITY, DVector::zeros(n));
    for mask in 0u32..(1 << n) {
        let x = DVector::from_fn(n, |i, _| ((mask >> i) & 1) as f64);
        if qp.primal_violation(&x) > 1e-12 {
            continue;
        }
        let v = qp.objective(&x);
        if v < best.0 {
            best = (v, x);
        }
    }
    best
}

/// Optimal value of a strictly convex QP from restarted accelerated projected
/// gradient ascent on its dual (projection onto `y >= 0`).
pub fn dual_gradient_oracle(qp: &QpProblem, iterations: usize) -> f64 {
    let n = qp.dim();
    let mut rows: Vec<DVector<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    for r in 0..qp.rows() {
        rows.push(qp.a.row(r).transpose());
        rhs.push(qp.u[r]);
    }
    for i in 0..n {
        if qp.lower[i].is_finite() {
            let mut e = DVector::zeros(n);
            e[i] = -1.0;
            rows.push(e);
            rhs.push(-qp.lower[i]);
        }
        if qp.upper[i].is_finite() {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            rows.push(e);
            rhs.push(qp.upper[i]);
        }
    }
    let m = rows.len();
    let g_mat = DMatrix::from_fn(m, n, |r, c| rows[r][c]);
    let h = DVector::from_vec(rhs);
    let chol = qp.q.clone().cholesky().expect("strictly convex");
    let q_inv = chol.inverse();
    let lipschitz = (&g_mat * &q_inv * g_mat.transpose()).symmetric_eigenvalues().max();

    let primal = |y: &DVector<f64>| -(&q_inv * (g_mat.transpose() * y + &qp.g));
    let dual = |y: &DVector<f64>| {
        let x = primal(y);
        qp.objective(&x) + y.dot(&(&g_mat * &x - &h))
    };
    let mut y = DVector::zeros(m);
    let mut z = y.clone();
    let mut t = 1.0f64;
    let mut value = dual(&y);
    for _ in 0..iterations {
        let grad = &g_mat * primal(&z) - &h;
        let y_next = (&z + grad / lipschitz).map(|v| v.max(0.0));
        let next_value = dual(&y_next);
        if next_value < value {
            // Function-value restart.
            z = y.clone();
            t = 1.0;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = &y_next + (&y_next - &y) * ((t - 1.0) / t_next);
        y = y_next;
        t = t_next;
        value = next_value;
    }
    value
}

/// Independent KKT residual: stationarity, primal feasibility, dual sign and
/// complementarity, all in the infinity norm.
pub fn kkt_residual(qp: &QpProblem, sol: &QpSolution) -> f64 {
    let x = &sol.x;
    let stat = &qp.q * x + &qp.g + qp.a.transpose() * &sol.duals_ineq - &sol.duals_lower
        + &sol.duals_upper;
    let mut worst = stat.amax();
    worst = worst.max(qp.primal_violation(x));
    for r in 0..qp.rows() {
        let y = sol.duals_ineq[r];
        let slack = qp.u[r] - qp.a.row(r).dot(&x.transpose());
        worst = worst.max(-y).max((y * slack).abs());
    }
    for i in 0..qp.dim() {
        let (zl, zu) = (sol.duals_lower[i], sol.duals_upper[i]);
        worst = worst.max(-zl).max(-zu);
        if qp.lower[i].is_finite() {
            worst = worst.max((zl * (x[i] - qp.lower[i])).abs());
        } else {
            worst = worst.max(zl.abs());
        }
        if qp.upper[i].is_finite() {
            worst = worst.max((zu * (qp.upper[i] - x[i])).abs());
        } else {
            worst = worst.max(zu.abs());
        }
    }
    worst
}

/// Random strictly interior point: powers below the row cap, switches in
/// (0.1, 0.9).
pub fn interior_point(prob: &EsrProblem, seed: u64) -> (PowerAllocation, SwitchVector) {
    let mut rng = SeededRng::new(seed);
    let (n, k) = (prob.n_tx(), prob.n_users());
    let cap = prob.cfg.p_th / k as f64;
    let p = DMatrix::from_fn(n, k, |_, _| cap * (0.1 + 0.8 * rng.uniform()));
    let x = DVector::from_fn(n, |_, _| 0.1 + 0.8 * rng.uniform());
    (PowerAllocation::new(p), SwitchVector::new(x))
}

/// Entrywise relative error, with entries far below the largest magnitude
/// compared on that scale.
pub fn rel_err(analytic: &[f64], reference: &[f64]) -> f64 {
    let scale = analytic
        .iter()
        .chain(reference)
        .fold(0.0f64, |m, v| m.max(v.abs()));
    analytic
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1e-6 * scale).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

/// Worst relative error of the power gradient, switch gradient and switch
/// Hessian against central differences.
pub fn derivative_error(prob: &EsrProblem, p: &PowerAllocation, x: &SwitchVector) -> f64 {
    let (n, k) = (prob.n_tx(), prob.n_users());
    let hp = 1e-6 * prob.cfg.p_th / k as f64;
    let hx = 1e-5;
    let mut worst = 0.0f64;

    let gp = prob.grad_rate_wrt_power(p, x);
    let mut fd = Vec::new();
    for i in 0..n {
        for j in 0..k {
            let mut hi = p.clone();
            hi.entries[(i, j)] += hp;
            let mut lo = p.clone();
            lo.entries[(i, j)] -= hp;
            fd.push((prob.sum_rate(&hi, x) - prob.sum_rate(&lo, x)) / (2.0 * hp));
        }
    }
    let analytic: Vec<f64> = (0..n).flat_map(|i| (0..k).map(move |j| (i, j))).map(|(i, j)| gp[(i, j)]).collect();
    worst = worst.max(rel_err(&analytic, &fd));

    let gx = prob.grad_rate_wrt_switch(p, x);
    let hess = prob.hess_rate_wrt_switch(p, x);
    let mut fd_grad = Vec::new();
    let mut fd_hess = Vec::new();
    for i in 0..n {
        let mut hi = x.clone();
        hi.entries[i] += hx;
        let mut lo = x.clone();
        lo.entries[i] -= hx;
        fd_grad.push((prob.sum_rate(p, &hi) - prob.sum_rate(p, &lo)) / (2.0 * hx));
        let dg = (prob.grad_rate_wrt_switch(p, &hi) - prob.grad_rate_wrt_switch(p, &lo)) / (2.0 * hx);
        fd_hess.extend(dg.iter().copied());
    }
    worst = worst.max(rel_err(gx.as_slice(), &fd_grad));
    // Column i of the Hessian against the difference of gradients along e_i.
    worst.max(rel_err(hess.as_slice(), &fd_hess))
}
