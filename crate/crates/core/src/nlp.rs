//! Log-barrier interior-point solver for smooth inequality-constrained NLPs.
//!
//! ```text
//!     minimize    f(z)
//!     subject to  c_k(z) <= 0       k = 1..m
//!                 lower <= z <= upper
//! ```
//!
//! The outer loop drives the barrier parameter `mu` from `mu0` down by
//! `mu_factor` until it drops below `tol / 10`. Each stage runs damped Newton
//! on
//!
//! ```text
//!     B(z) = f(z) - mu sum_k ln(-c_k(z)) - mu sum_i ln(z_i - l_i) - mu sum_i ln(u_i - z_i)
//! ```
//!
//! with Armijo backtracking. If the Newton matrix has an eigenvalue below
//! `hessian_floor` it is shifted by a multiple of the identity, so every
//! direction is a descent direction even for nonconvex objectives. Once the
//! predicted decrease falls below the rounding level of the barrier value,
//! steps are accepted when they shrink the gradient instead.
//!
//! Multipliers are recovered as `mu / slack`, then refit by least squares on
//! the near-active set when that lowers the KKT residual.
//!
//! Like IPOPT, finite bounds are relaxed by `bound_relax` (relative to
//! `max(1, |bound|)`) before the barrier is formed; set it to zero for exact
//! bounds. Constraint curvature can be reported in low-rank form, in which case
//! large systems are solved without forming the Newton matrix.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::newton::NewtonSystem;
use crate::{Error, Result};

/// Second-derivative information for the objective or one constraint.
#[derive(Debug, Clone)]
pub enum Curvature {
    Zero,
    Dense(DMatrix<f64>),
    /// `sum_k w_k v_k v_k'`
    LowRank(Vec<(f64, DVector<f64>)>),
}

impl Curvature {
    fn accumulate(self, sys: &mut NewtonSystem, scale: f64) {
        match self {
            Curvature::Zero => {}
            Curvature::Dense(m) => sys.add_dense(&m, scale),
            Curvature::LowRank(terms) => {
                for (w, v) in terms {
                    sys.add_rank_one(w * scale, v);
                }
            }
        }
    }

    /// Pads with `extra` trailing zero rows/columns.
    fn padded(self, extra: usize) -> Self {
        match self {
            Curvature::Zero => Curvature::Zero,
            Curvature::Dense(m) => {
                let n = m.nrows();
                Curvature::Dense(m.resize(n + extra, n + extra, 0.0))
            }
            Curvature::LowRank(terms) => Curvature::LowRank(
                terms
                    .into_iter()
                    .map(|(w, v)| {
                        let n = v.len();
                        (w, v.resize_vertically(n + extra, 0.0))
                    })
                    .collect(),
            ),
        }
    }
}

pub trait NlpProblem {
    fn dim(&self) -> usize;
    fn num_constraints(&self) -> usize;
    fn lower(&self) -> DVector<f64>;
    fn upper(&self) -> DVector<f64>;
    fn objective(&self, z: &DVector<f64>) -> f64;
    fn gradient(&self, z: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, z: &DVector<f64>) -> Curvature;
    /// All constraint values `c(z)`; feasible means every entry `<= 0`.
    fn constraints(&self, z: &DVector<f64>) -> DVector<f64>;
    /// `m x n` Jacobian of `c`.
    fn jacobian(&self, z: &DVector<f64>) -> DMatrix<f64>;
    fn constraint_curvature(&self, z: &DVector<f64>, k: usize) -> Curvature;
}

#[derive(Debug, Clone)]
pub struct NlpOptions {
    pub tol: f64,
    pub mu0: f64,
    pub mu_factor: f64,
    pub max_newton_per_stage: usize,
    pub hessian_floor: f64,
    pub armijo_c1: f64,
    pub min_step: f64,
    pub bound_relax: f64,
    /// Distance (relative to the box width) by which a start sitting on a
    /// double bound is pushed inside.
    pub bound_push: f64,
    pub record_barrier: bool,
}

impl Default for NlpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            mu0: 1.0,
            mu_factor: 10.0,
            max_newton_per_stage: 200,
            hessian_floor: 1e-8,
            armijo_c1: 1e-4,
            min_step: 1e-14,
            bound_relax: 1e-8,
            bound_push: 1e-2,
            record_barrier: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NlpStatus {
    Optimal,
    MaxIter,
    Stalled,
    /// A caller-supplied stopping predicate fired.
    Stopped,
}

#[derive(Debug, Clone)]
pub struct NlpSolution {
    pub z: DVector<f64>,
    pub duals: DVector<f64>,
    pub duals_lower: DVector<f64>,
    pub duals_upper: DVector<f64>,
    pub status: NlpStatus,
    pub iterations: usize,
    pub mu: f64,
    /// Max of stationarity (relative to `max(1, |grad f|_inf)`),
    /// complementarity and primal infeasibility.
    pub kkt_residual: f64,
    pub objective: f64,
    /// Barrier value after every accepted step, tagged with its stage, when
    /// `record_barrier` is set.
    pub barrier_history: Vec<(usize, f64)>,
}

struct Relaxed {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

fn relaxed_bounds<P: NlpProblem + ?Sized>(prob: &P, relax: f64) -> Relaxed {
    let widen = |b: f64| relax * b.abs().max(1.0);
    Relaxed {
        lower: prob.lower().map(|l| if l.is_finite() { l - widen(l) } else { l }),
        upper: prob.upper().map(|u| if u.is_finite() { u + widen(u) } else { u }),
    }
}

/// Moves `z` strictly inside the relaxed box.
fn push_inside(z: &DVector<f64>, b: &Relaxed, push: f64) -> DVector<f64> {
    DVector::from_fn(z.len(), |i, _| {
        let (l, u) = (b.lower[i], b.upper[i]);
        let mut v = z[i];
        let width = u - l;
        let margin = if width.is_finite() {
            push * width
        } else {
            push * l.abs().max(u.abs()).clamp(1.0, 1e300)
        };
        if l.is_finite() && (v <= l || (width.is_finite() && v < l + margin)) {
            v = l + margin.min(0.5 * width);
        }
        if u.is_finite() && (v >= u || (width.is_finite() && v > u - margin)) {
            v = u - margin.min(0.5 * width);
        }
        v
    })
}

fn strictly_inside(z: &DVector<f64>, b: &Relaxed) -> bool {
    (0..z.len()).all(|i| z[i] > b.lower[i] && z[i] < b.upper[i])
}

struct Barrier<'a, P: NlpProblem + ?Sized> {
    prob: &'a P,
    bounds: Relaxed,
    mu: f64,
}

impl<P: NlpProblem + ?Sized> Barrier<'_, P> {
    /// `None` outside the strict interior.
    fn value(&self, z: &DVector<f64>) -> Option<f64> {
        let mut v = self.prob.objective(z);
        for c in self.prob.constraints(z).iter() {
            if !(*c < 0.0) {
                return None;
            }
            v -= self.mu * (-c).ln();
        }
        for i in 0..z.len() {
            for gap in [z[i] - self.bounds.lower[i], self.bounds.upper[i] - z[i]] {
                if gap.is_finite() {
                    if !(gap > 0.0) {
                        return None;
                    }
                    v -= self.mu * gap.ln();
                }
            }
        }
        v.is_finite().then_some(v)
    }

    fn gradient_and_system(&self, z: &DVector<f64>) -> (DVector<f64>, NewtonSystem) {
        let n = z.len();
        let mut grad = self.prob.gradient(z);
        let mut sys = NewtonSystem::new(n);
        self.prob.hessian(z).accumulate(&mut sys, 1.0);
        let c = self.prob.constraints(z);
        if !c.is_empty() {
            let jac = self.prob.jacobian(z);
            for k in 0..c.len() {
                let slack = -c[k];
                let row = jac.row(k).transpose();
                grad.axpy(self.mu / slack, &row, 1.0);
                sys.add_rank_one(self.mu / (slack * slack), row);
                self.prob
                    .constraint_curvature(z, k)
                    .accumulate(&mut sys, self.mu / slack);
            }
        }
        for i in 0..n {
            let gl = z[i] - self.bounds.lower[i];
            if gl.is_finite() {
                grad[i] -= self.mu / gl;
                sys.add_diag(i, self.mu / (gl * gl));
            }
            let gu = self.bounds.upper[i] - z[i];
            if gu.is_finite() {
                grad[i] += self.mu / gu;
                sys.add_diag(i, self.mu / (gu * gu));
            }
        }
        (grad, sys)
    }

    /// Largest step keeping `z + a d` strictly inside the relaxed box.
    fn max_step(&self, z: &DVector<f64>, d: &DVector<f64>) -> f64 {
        let mut alpha = 1.0f64;
        for i in 0..z.len() {
            if d[i] < 0.0 && self.bounds.lower[i].is_finite() {
                alpha = alpha.min(-0.995 * (z[i] - self.bounds.lower[i]) / d[i]);
            }
            if d[i] > 0.0 && self.bounds.upper[i].is_finite() {
                alpha = alpha.min(0.995 * (self.bounds.upper[i] - z[i]) / d[i]);
            }
        }
        alpha
    }
}

fn multipliers<P: NlpProblem + ?Sized>(
    prob: &P,
    bounds: &Relaxed,
    z: &DVector<f64>,
    mu: f64,
) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    let duals = prob.constraints(z).map(|c| mu / (-c));
    let lo = DVector::from_fn(z.len(), |i, _| {
        let g = z[i] - bounds.lower[i];
        if g.is_finite() { mu / g } else { 0.0 }
    });
    let up = DVector::from_fn(z.len(), |i, _| {
        let g = bounds.upper[i] - z[i];
        if g.is_finite() { mu / g } else { 0.0 }
    });
    (duals, lo, up)
}

/// First-order multiplier estimate at termination.
///
/// Barrier multipliers `mu / slack` inherit the rounding error of slacks
/// that are differences of nearly equal numbers, which caps the attainable
/// stationarity. Here the multipliers of near-active constraints (barrier
/// value above `sqrt(mu)`) are refit by least squares on the stationarity
/// rows of the variables with no near-active bound; bound multipliers then
/// absorb the remaining gradient. Returns `None` if any estimate comes out
/// negative.
fn least_squares_multipliers<P: NlpProblem + ?Sized>(
    prob: &P,
    bounds: &Relaxed,
    z: &DVector<f64>,
    duals: &DVector<f64>,
    lo: &DVector<f64>,
    up: &DVector<f64>,
    mu: f64,
) -> Option<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    let n = z.len();
    let threshold = mu.sqrt();
    let active: Vec<usize> = (0..duals.len()).filter(|&k| duals[k] > threshold).collect();
    let bound_active: Vec<bool> = (0..n).map(|i| lo[i] > threshold || up[i] > threshold).collect();
    let free: Vec<usize> = (0..n).filter(|&i| !bound_active[i]).collect();
    let grad_f = prob.gradient(z);
    let jac = if duals.is_empty() { DMatrix::zeros(0, n) } else { prob.jacobian(z) };

    // Gradient with the inactive multipliers kept at their barrier values.
    let mut base = grad_f.clone();
    for k in 0..duals.len() {
        if !active.contains(&k) {
            base.axpy(duals[k], &jac.row(k).transpose(), 1.0);
        }
    }
    let mut new_duals = duals.clone();
    if !active.is_empty() {
        if free.len() < active.len() {
            return None;
        }
        let m = DMatrix::from_fn(free.len(), active.len(), |r, c| jac[(active[c], free[r])]);
        let rhs = DVector::from_fn(free.len(), |r, _| -base[free[r]]);
        let fit = m.svd(true, true).solve(&rhs, 1e-14).ok()?;
        for (c, &k) in active.iter().enumerate() {
            if !(fit[c] >= 0.0) {
                return None;
            }
            new_duals[k] = fit[c];
        }
    }
    let stat = if duals.is_empty() { base } else { grad_f + jac.transpose() * &new_duals };
    let mut new_lo = lo.clone();
    let mut new_up = up.clone();
    for i in 0..n {
        if !bound_active[i] {
            continue;
        }
        // stat - lo + up = 0 on the active side.
        let near_lower = (z[i] - bounds.lower[i]) <= (bounds.upper[i] - z[i]);
        if near_lower {
            new_up[i] = up[i];
            new_lo[i] = stat[i] + new_up[i];
            if !(new_lo[i] >= 0.0) {
                return None;
            }
        } else {
            new_lo[i] = lo[i];
            new_up[i] = new_lo[i] - stat[i];
            if !(new_up[i] >= 0.0) {
                return None;
            }
        }
    }
    Some((new_duals, new_lo, new_up))
}

/// KKT residual of `z` with the given multipliers, measured against the
/// relaxed bounds the barrier actually used.
fn residual<P: NlpProblem + ?Sized>(
    prob: &P,
    bounds: &Relaxed,
    z: &DVector<f64>,
    duals: &DVector<f64>,
    lo: &DVector<f64>,
    up: &DVector<f64>,
) -> f64 {
    let grad_f = prob.gradient(z);
    let scale = grad_f.amax().max(1.0);
    let c = prob.constraints(z);
    let mut stat = grad_f - lo + up;
    if !c.is_empty() {
        stat += prob.jacobian(z).transpose() * duals;
    }
    let mut comp = 0.0f64;
    let mut infeas = 0.0f64;
    for k in 0..c.len() {
        comp = comp.max((duals[k] * c[k]).abs());
        infeas = infeas.max(c[k]);
    }
    for i in 0..z.len() {
        let gl = z[i] - bounds.lower[i];
        let gu = bounds.upper[i] - z[i];
        if gl.is_finite() {
            comp = comp.max(lo[i] * gl);
            infeas = infeas.max(-gl);
        }
        if gu.is_finite() {
            comp = comp.max(up[i] * gu);
            infeas = infeas.max(-gu);
        }
    }
    (stat.amax() / scale).max(comp).max(infeas)
}

/// Barrier solve from a start that is strictly feasible for the nonlinear
/// constraints. Starts sitting on a bound are pushed inside first.
pub fn solve_barrier<P: NlpProblem + ?Sized>(
    prob: &P,
    start: &DVector<f64>,
    opts: &NlpOptions,
) -> Result<NlpSolution> {
    solve_barrier_until(prob, start, opts, &|_| false)
}

/// As [`solve_barrier`], returning early with status `Stopped` as soon as
/// `stop` accepts an iterate.
pub fn solve_barrier_until<P: NlpProblem + ?Sized>(
    prob: &P,
    start: &DVector<f64>,
    opts: &NlpOptions,
    stop: &dyn Fn(&DVector<f64>) -> bool,
) -> Result<NlpSolution> {
    let n = prob.dim();
    if start.len() != n {
        return Err(Error::Dimension(format!("start has {} entries, expected {n}", start.len())));
    }
    let bounds = relaxed_bounds(prob, opts.bound_relax);
    let mut z = push_inside(start, &bounds, opts.bound_push);
    if !prob.constraints(&z).iter().all(|&c| c < 0.0) && strictly_inside(start, &bounds) {
        // Pushing broke a nonlinear constraint the caller's start satisfied.
        z = start.clone();
    }
    let c0 = prob.constraints(&z);
    if let Some(k) = (0..c0.len()).find(|&k| !(c0[k] < 0.0)) {
        return Err(Error::NoInteriorPoint {
            constraint: k,
            value: c0[k],
        });
    }

    let mut barrier = Barrier {
        prob,
        bounds,
        mu: opts.mu0,
    };
    let final_mu = 0.1 * opts.tol;
    let mut status = NlpStatus::Optimal;
    let mut iterations = 0;
    let mut history = Vec::new();
    let mut stage = 0;
    'outer: loop {
        let last_stage = barrier.mu <= final_mu * (1.0 + 1e-12);
        let stage_tol = if last_stage { opts.tol } else { barrier.mu.max(opts.tol) };
        let mut current = barrier.value(&z).expect("iterate left the interior");
        let mut converged = false;
        for _ in 0..opts.max_newton_per_stage {
            let (grad, sys) = barrier.gradient_and_system(&z);
            let scale = prob.gradient(&z).amax().max(1.0);
            if grad.amax() <= stage_tol * scale {
                converged = true;
                break;
            }
            let step = sys.solve(&(-&grad), opts.hessian_floor);
            let d = step.direction;
            let slope = grad.dot(&d);
            if !(slope < 0.0) {
                // Numerically flat: nothing left to gain at this mu.
                converged = true;
                break;
            }
            if -slope <= 1e-15 * (1.0 + current.abs()) && grad.amax() <= 1e3 * stage_tol * scale {
                converged = true;
                break;
            }
            let mut alpha = barrier.max_step(&z, &d);
            let accepted = loop {
                if alpha < opts.min_step {
                    break None;
                }
                let trial = &z + &d * alpha;
                if let Some(v) = barrier.value(&trial) {
                    if v <= current + opts.armijo_c1 * alpha * slope && v < current {
                        break Some((trial, v));
                    }
                    // The predicted decrease is below the rounding level of
                    // the barrier value, so compare gradients instead.
                    let noise = 1e-13 * (1.0 + current.abs());
                    if -alpha * slope <= noise
                        && v <= current
                        && barrier.gradient_and_system(&trial).0.amax() < grad.amax()
                    {
                        break Some((trial, v));
                    }
                }
                alpha *= 0.5;
            };
            iterations += 1;
            match accepted {
                Some((trial, v)) => {
                    z = trial;
                    current = v;
                    if opts.record_barrier {
                        history.push((stage, v));
                    }
                    if stop(&z) {
                        status = NlpStatus::Stopped;
                        break 'outer;
                    }
                }
                None => {
                    // The merit cannot decrease any further along a descent
                    // direction: treat as centred when the gradient is already
                    // tiny relative to the curvature, otherwise give up.
                    if grad.amax() <= 1e3 * stage_tol * scale {
                        converged = true;
                        break;
                    }
                    status = NlpStatus::Stalled;
                    break 'outer;
                }
            }
        }
        if !converged {
            status = NlpStatus::MaxIter;
            if last_stage {
                break;
            }
        }
        if last_stage {
            break;
        }
        barrier.mu = (barrier.mu / opts.mu_factor).max(final_mu);
        stage += 1;
    }

    let (mut duals, mut lo, mut up) = multipliers(prob, &barrier.bounds, &z, barrier.mu);
    let mut kkt = residual(prob, &barrier.bounds, &z, &duals, &lo, &up);
    if let Some((d, l, u)) = least_squares_multipliers(prob, &barrier.bounds, &z, &duals, &lo, &up, barrier.mu) {
        let refined = residual(prob, &barrier.bounds, &z, &d, &l, &u);
        if refined < kkt {
            (duals, lo, up, kkt) = (d, l, u, refined);
        }
    }
    if status == NlpStatus::Optimal && kkt > opts.tol {
        status = NlpStatus::MaxIter;
    }
    Ok(NlpSolution {
        objective: prob.objective(&z),
        z,
        duals,
        duals_lower: lo,
        duals_upper: up,
        status,
        iterations,
        mu: barrier.mu,
        kkt_residual: kkt,
        barrier_history: history,
    })
}

/// Phase-1 problem: minimize `s` subject to `c_k(z) - s <= 0`, `s >= -1`.
struct PhaseOne<'a, P: NlpProblem + ?Sized> {
    inner: &'a P,
}

impl<P: NlpProblem + ?Sized> NlpProblem for PhaseOne<'_, P> {
    fn dim(&self) -> usize {
        self.inner.dim() + 1
    }
    fn num_constraints(&self) -> usize {
        self.inner.num_constraints()
    }
    fn lower(&self) -> DVector<f64> {
        let n = self.inner.dim();
        self.inner.lower().resize_vertically(n + 1, -1.0)
    }
    fn upper(&self) -> DVector<f64> {
        let n = self.inner.dim();
        self.inner.upper().resize_vertically(n + 1, f64::INFINITY)
    }
    fn objective(&self, z: &DVector<f64>) -> f64 {
        z[z.len() - 1]
    }
    fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(z.len());
        g[z.len() - 1] = 1.0;
        g
    }
    fn hessian(&self, _: &DVector<f64>) -> Curvature {
        Curvature::Zero
    }
    fn constraints(&self, z: &DVector<f64>) -> DVector<f64> {
        let n = self.inner.dim();
        let s = z[n];
        self.inner.constraints(&z.rows(0, n).into_owned()).map(|c| c - s)
    }
    fn jacobian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let n = self.inner.dim();
        let jac = self.inner.jacobian(&z.rows(0, n).into_owned());
        let m = jac.nrows();
        let mut out = jac.resize_horizontally(n + 1, 0.0);
        for k in 0..m {
            out[(k, n)] = -1.0;
        }
        out
    }
    fn constraint_curvature(&self, z: &DVector<f64>, k: usize) -> Curvature {
        let n = self.inner.dim();
        self.inner
            .constraint_curvature(&z.rows(0, n).into_owned(), k)
            .padded(1)
    }
}

/// A point strictly inside the box with every `c_k < 0`.
///
/// Box-only problems get the box midpoint (or `hint` pushed inside, when the
/// box is unbounded). Otherwise `hint` (or the midpoint) is returned if it is
/// already strictly feasible, and a phase-1 barrier solve on the slack
/// problem is run if not. Failure names the constraint that stayed violated.
pub fn find_strictly_feasible<P: NlpProblem + ?Sized>(
    prob: &P,
    hint: Option<&DVector<f64>>,
    opts: &NlpOptions,
) -> Result<DVector<f64>> {
    let n = prob.dim();
    let (lower, upper) = (prob.lower(), prob.upper());
    let midpoint = DVector::from_fn(n, |i, _| match (lower[i].is_finite(), upper[i].is_finite()) {
        (true, true) => 0.5 * (lower[i] + upper[i]),
        (true, false) => lower[i] + 1.0,
        (false, true) => upper[i] - 1.0,
        (false, false) => 0.0,
    });
    if prob.num_constraints() == 0 {
        return Ok(match hint {
            Some(h) => push_inside(h, &relaxed_bounds(prob, 0.0), opts.bound_push),
            None => midpoint,
        });
    }
    let exact = relaxed_bounds(prob, 0.0);
    let start = push_inside(hint.unwrap_or(&midpoint), &exact, opts.bound_push);
    let c = prob.constraints(&start);
    if c.iter().all(|&v| v < 0.0) {
        return Ok(start);
    }
    let phase = PhaseOne { inner: prob };
    let s0 = c.max().max(0.0) + 1.0;
    let z0 = start.clone().resize_vertically(n + 1, s0);
    let phase_opts = NlpOptions {
        bound_relax: 0.0,
        ..opts.clone()
    };
    let strictly_feasible = |z: &DVector<f64>| {
        let x = z.rows(0, n).into_owned();
        prob.constraints(&x).iter().all(|&v| v < 0.0)
    };
    let sol = solve_barrier_until(&phase, &z0, &phase_opts, &strictly_feasible)?;
    let x = sol.z.rows(0, n).into_owned();
    let c = prob.constraints(&x);
    match (0..c.len()).max_by(|&a, &b| c[a].total_cmp(&c[b])) {
        Some(k) if !(c[k] < 0.0) => Err(Error::NoInteriorPoint {
            constraint: k,
            value: c[k],
        }),
        _ => Ok(x),
    }
}

/// Convex QP posed as an NLP, for cross-checking against [`crate::qp`].
pub struct QpAsNlp<'a> {
    pub qp: &'a crate::qp::QpProblem,
}

impl NlpProblem for QpAsNlp<'_> {
    fn dim(&self) -> usize {
        self.qp.dim()
    }
    fn num_constraints(&self) -> usize {
        self.qp.rows()
    }
    fn lower(&self) -> DVector<f64> {
        self.qp.lower.clone()
    }
    fn upper(&self) -> DVector<f64> {
        self.qp.upper.clone()
    }
    fn objective(&self, z: &DVector<f64>) -> f64 {
        self.qp.objective(z)
    }
    fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.qp.q * z + &self.qp.g
    }
    fn hessian(&self, _: &DVector<f64>) -> Curvature {
        Curvature::Dense(self.qp.q.clone())
    }
    fn constraints(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.qp.a * z - &self.qp.u
    }
    fn jacobian(&self, _: &DVector<f64>) -> DMatrix<f64> {
        self.qp.a.clone()
    }
    fn constraint_curvature(&self, _: &DVector<f64>, _: usize) -> Curvature {
        Curvature::Zero
    }
}
