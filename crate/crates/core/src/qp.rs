//! Dense convex QP solver.
//!
//! Solves
//!
//! ```text
//!     minimize    1/2 x'Qx + g'x
//!     subject to  Ax <= u
//!                 lower <= x <= upper
//! ```
//!
//! with an infeasible-start primal-dual path-following method (fixed
//! centering `sigma = 0.1`, fraction-to-boundary `0.995`). Each iteration
//! eliminates the slack and dual blocks and factors the condensed `n x n`
//! system `Q + A' S^-1 Lambda A + bound terms` with a dense Cholesky.
//!
//! Once the path-following loop stops, the active set it identifies is
//! polished: the equality-constrained QP on that set is solved directly, and
//! the result replaces the interior iterate when it is primal and dual
//! feasible. Active bounds are then hit exactly rather than to within the
//! barrier parameter, which matters when callers test complementarity of
//! Boolean variables. Infinite bounds are allowed.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100;

const SIGMA: f64 = 0.1;
const STEP_TO_BOUNDARY: f64 = 0.995;

#[derive(Debug, Clone)]
pub struct QpProblem {
    pub q: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a: DMatrix<f64>,
    pub u: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub duals_ineq: DVector<f64>,
    pub duals_lower: DVector<f64>,
    pub duals_upper: DVector<f64>,
    pub status: QpStatus,
    pub iterations: usize,
    pub kkt_residual: f64,
    /// For `Infeasible`: how far the normalized dual ray is from an exact
    /// Farkas certificate.
    pub certificate_residual: Option<f64>,
}

impl QpProblem {
    pub fn new(
        q: DMatrix<f64>,
        g: DVector<f64>,
        a: DMatrix<f64>,
        u: DVector<f64>,
        lower: DVector<f64>,
        upper: DVector<f64>,
    ) -> Result<Self> {
        let n = g.len();
        if q.shape() != (n, n) || a.ncols() != n || a.nrows() != u.len() {
            return Err(Error::Dimension(format!(
                "Q {:?}, g {}, A {:?}, u {}",
                q.shape(),
                n,
                a.shape(),
                u.len()
            )));
        }
        if lower.len() != n || upper.len() != n {
            return Err(Error::Dimension("bound vectors must have length n".into()));
        }
        let asym = (&q - q.transpose()).amax();
        if asym > 1e-12 * q.amax().max(1.0) {
            return Err(Error::Domain(format!("Q is not symmetric ({asym:e})")));
        }
        if let Some(i) = (0..n).find(|&i| !(lower[i] <= upper[i])) {
            return Err(Error::Domain(format!("bound {i}: lower > upper")));
        }
        Ok(Self {
            q,
            g,
            a,
            u,
            lower,
            upper,
        })
    }

    /// QP with only box constraints.
    pub fn boxed(q: DMatrix<f64>, g: DVector<f64>, lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        let n = g.len();
        Self::new(q, g, DMatrix::zeros(0, n), DVector::zeros(0), lower, upper)
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn rows(&self) -> usize {
        self.u.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.q * x)) + self.g.dot(x)
    }

    /// Same problem with a different linear term.
    pub fn with_linear_term(&self, g: DVector<f64>) -> Self {
        Self { g, ..self.clone() }
    }

    /// Largest violation of the rows and bounds.
    pub fn primal_violation(&self, x: &DVector<f64>) -> f64 {
        if !x.iter().all(|v| v.is_finite()) {
            return f64::INFINITY;
        }
        let rows = (&self.a * x - &self.u).iter().fold(0.0f64, |m, &r| m.max(r));
        let bounds = (0..self.dim()).fold(0.0f64, |m, i| {
            m.max(self.lower[i] - x[i]).max(x[i] - self.upper[i])
        });
        rows.max(bounds)
    }

    /// Lagrangian dual objective for the given multipliers (infinite bounds
    /// contribute nothing).
    pub fn dual_objective(&self, sol: &QpSolution) -> f64 {
        let x = &sol.x;
        let mut d = -0.5 * x.dot(&(&self.q * x)) - sol.duals_ineq.dot(&self.u);
        for i in 0..self.dim() {
            if self.lower[i].is_finite() {
                d += sol.duals_lower[i] * self.lower[i];
            }
            if self.upper[i].is_finite() {
                d -= sol.duals_upper[i] * self.upper[i];
            }
        }
        d
    }

    fn check_convex(&self) -> Result<()> {
        let n = self.dim();
        if n == 0 || self.q.clone().cholesky().is_some() {
            return Ok(());
        }
        let shift = 1e-12 * self.q.amax().max(1.0);
        let shifted = &self.q + DMatrix::identity(n, n) * shift;
        if shifted.cholesky().is_some() {
            return Ok(());
        }
        let min_eigenvalue = self.q.clone().symmetric_eigenvalues().min();
        Err(Error::NotConvex { min_eigenvalue })
    }
}

/// Max of stationarity, primal feasibility and complementarity violations,
/// computed from the problem data alone.
pub fn kkt_residual(qp: &QpProblem, sol: &QpSolution) -> f64 {
    let x = &sol.x;
    let n = qp.dim();
    let mut stationarity = &qp.q * x + &qp.g + qp.a.transpose() * &sol.duals_ineq;
    stationarity -= &sol.duals_lower;
    stationarity += &sol.duals_upper;
    let slack = &qp.u - &qp.a * x;
    let mut comp = 0.0f64;
    let mut dual_sign = 0.0f64;
    for k in 0..qp.rows() {
        comp = comp.max((sol.duals_ineq[k] * slack[k]).abs());
        dual_sign = dual_sign.max(-sol.duals_ineq[k]);
    }
    for i in 0..n {
        for (dual, gap) in [
            (sol.duals_lower[i], x[i] - qp.lower[i]),
            (sol.duals_upper[i], qp.upper[i] - x[i]),
        ] {
            dual_sign = dual_sign.max(-dual);
            if gap.is_finite() {
                comp = comp.max((dual * gap).abs());
            } else {
                comp = comp.max(dual.abs());
            }
        }
    }
    let finite = [x, &sol.duals_ineq, &sol.duals_lower, &sol.duals_upper]
        .iter()
        .all(|v| v.iter().all(|e| e.is_finite()));
    if !finite {
        return f64::INFINITY;
    }
    stationarity
        .amax()
        .max(qp.primal_violation(x))
        .max(comp)
        .max(dual_sign)
}

struct Iterate {
    x: DVector<f64>,
    s: DVector<f64>,
    lam: DVector<f64>,
    zl: DVector<f64>,
    zu: DVector<f64>,
}

/// Runs the path-following method on the objective divided by
/// `max(1, |Q|, |g|)` so that penalty terms of any size leave the iteration
/// well scaled. `tol` applies to the scaled problem; the reported KKT residual
/// is measured on the original data.
pub fn solve_qp(qp: &QpProblem, tol: f64, max_iter: usize) -> Result<QpSolution> {
    qp.check_convex()?;
    let scale = qp.q.amax().max(qp.g.amax()).max(1.0);
    if !scale.is_finite() {
        return Err(Error::Domain("QP data must be finite".into()));
    }
    if scale == 1.0 {
        return Ok(path_following(qp, tol, max_iter));
    }
    let scaled = QpProblem {
        q: &qp.q / scale,
        g: &qp.g / scale,
        ..qp.clone()
    };
    let mut sol = path_following(&scaled, tol, max_iter);
    if sol.status != QpStatus::Infeasible {
        sol.duals_ineq *= scale;
        sol.duals_lower *= scale;
        sol.duals_upper *= scale;
    }
    sol.kkt_residual = kkt_residual(qp, &sol);
    Ok(sol)
}

fn path_following(qp: &QpProblem, tol: f64, max_iter: usize) -> QpSolution {
    let n = qp.dim();
    let m = qp.rows();
    let has_lo: Vec<bool> = qp.lower.iter().map(|l| l.is_finite()).collect();
    let has_up: Vec<bool> = qp.upper.iter().map(|u| u.is_finite()).collect();
    let n_comp = m + has_lo.iter().filter(|&&b| b).count() + has_up.iter().filter(|&&b| b).count();

    let x = DVector::from_fn(n, |i, _| match (has_lo[i], has_up[i]) {
        (true, true) => 0.5 * (qp.lower[i] + qp.upper[i]),
        (true, false) => qp.lower[i] + 1.0,
        (false, true) => qp.upper[i] - 1.0,
        (false, false) => 0.0,
    });
    let s = (&qp.u - &qp.a * &x).map(|r| r.max(1.0));
    let mut it = Iterate {
        x,
        s,
        lam: DVector::from_element(m, 1.0),
        zl: DVector::from_fn(n, |i, _| if has_lo[i] { 1.0 } else { 0.0 }),
        zu: DVector::from_fn(n, |i, _| if has_up[i] { 1.0 } else { 0.0 }),
    };

    let mut status = QpStatus::MaxIter;
    let mut certificate = None;
    let mut iterations = 0;
    for k in 0..=max_iter {
        iterations = k;
        let tl = DVector::from_fn(n, |i, _| if has_lo[i] { it.x[i] - qp.lower[i] } else { 1.0 });
        let tu = DVector::from_fn(n, |i, _| if has_up[i] { qp.upper[i] - it.x[i] } else { 1.0 });
        let rd = &qp.q * &it.x + &qp.g + qp.a.transpose() * &it.lam - &it.zl + &it.zu;
        let rp = &qp.a * &it.x + &it.s - &qp.u;
        let gap = it.s.dot(&it.lam) + tl.dot(&it.zl) + tu.dot(&it.zu);
        let max_product = it
            .s
            .component_mul(&it.lam)
            .iter()
            .chain(tl.component_mul(&it.zl).iter())
            .chain(tu.component_mul(&it.zu).iter())
            .fold(0.0f64, |a, &b| a.max(b));
        if rd.amax() <= tol && rp.amax() <= tol && max_product <= tol {
            status = QpStatus::Optimal;
            break;
        }
        if let Some(res) = farkas_certificate(qp, &it, &has_lo, &has_up) {
            status = QpStatus::Infeasible;
            certificate = Some(res);
            break;
        }
        if k == max_iter {
            break;
        }
        let mu = if n_comp > 0 { gap / n_comp as f64 } else { 0.0 };
        let target = SIGMA * mu;

        // Condensed Newton system in dx.
        let row_w = it.lam.component_div(&it.s);
        let mut mat = qp.q.clone();
        if m > 0 {
            let scaled = DMatrix::from_fn(m, n, |r, c| qp.a[(r, c)] * row_w[r]);
            mat += qp.a.transpose() * scaled;
        }
        let mut rhs = -&rd;
        if m > 0 {
            let row_rhs = DVector::from_fn(m, |r, _| {
                (target - it.s[r] * it.lam[r] + it.lam[r] * rp[r]) / it.s[r]
            });
            rhs -= qp.a.transpose() * row_rhs;
        }
        for i in 0..n {
            if has_lo[i] {
                mat[(i, i)] += it.zl[i] / tl[i];
                rhs[i] += (target - tl[i] * it.zl[i]) / tl[i];
            }
            if has_up[i] {
                mat[(i, i)] += it.zu[i] / tu[i];
                rhs[i] -= (target - tu[i] * it.zu[i]) / tu[i];
            }
        }
        let dx = solve_spd(mat, &rhs);
        if !dx.iter().all(|v| v.is_finite()) {
            break;
        }
        let ds = -&rp - &qp.a * &dx;
        let dlam = DVector::from_fn(m, |r, _| {
            (target - it.s[r] * it.lam[r] - it.lam[r] * ds[r]) / it.s[r]
        });
        let dzl = DVector::from_fn(n, |i, _| {
            if has_lo[i] {
                (target - tl[i] * it.zl[i] - it.zl[i] * dx[i]) / tl[i]
            } else {
                0.0
            }
        });
        let dzu = DVector::from_fn(n, |i, _| {
            if has_up[i] {
                (target - tu[i] * it.zu[i] + it.zu[i] * dx[i]) / tu[i]
            } else {
                0.0
            }
        });

        let mut alpha = 1.0f64;
        let mut limit = |v: f64, dv: f64| {
            if dv < 0.0 {
                alpha = alpha.min(-STEP_TO_BOUNDARY * v / dv);
            }
        };
        for r in 0..m {
            limit(it.s[r], ds[r]);
            limit(it.lam[r], dlam[r]);
        }
        for i in 0..n {
            if has_lo[i] {
                limit(tl[i], dx[i]);
                limit(it.zl[i], dzl[i]);
            }
            if has_up[i] {
                limit(tu[i], -dx[i]);
                limit(it.zu[i], dzu[i]);
            }
        }
        it.x += &dx * alpha;
        it.s += &ds * alpha;
        it.lam += &dlam * alpha;
        it.zl += &dzl * alpha;
        it.zu += &dzu * alpha;
    }

    let mut sol = QpSolution {
        x: it.x.clone(),
        duals_ineq: it.lam.clone(),
        duals_lower: it.zl.clone(),
        duals_upper: it.zu.clone(),
        status,
        iterations,
        kkt_residual: f64::INFINITY,
        certificate_residual: certificate,
    };
    if status == QpStatus::Infeasible {
        sol.kkt_residual = kkt_residual(qp, &sol);
        return sol;
    }
    clip_to_bounds(qp, &mut sol.x);
    sol.kkt_residual = kkt_residual(qp, &sol);
    if let Some(polished) = polish(qp, &it, &has_lo, &has_up) {
        let res = kkt_residual(qp, &polished);
        if res <= sol.kkt_residual.max(tol) {
            sol.x = polished.x;
            sol.duals_ineq = polished.duals_ineq;
            sol.duals_lower = polished.duals_lower;
            sol.duals_upper = polished.duals_upper;
            sol.kkt_residual = res;
        }
    }
    if sol.status == QpStatus::MaxIter && sol.kkt_residual <= tol {
        sol.status = QpStatus::Optimal;
    }
    if sol.status == QpStatus::MaxIter && qp.primal_violation(&sol.x) > tol {
        if let Some(residual) = phase_one_certificate(qp, tol, max_iter) {
            sol.status = QpStatus::Infeasible;
            sol.certificate_residual = Some(residual);
        }
    }
    sol
}

/// Weight of `|x|^2` in the phase-1 objective; makes it strictly convex.
const PHASE_ONE_REG: f64 = 1e-10;

/// Fallback infeasibility test for runs that stalled against a bound before
/// the dual ray grew long enough to certify anything.
///
/// Solves `min 1/2 |t|^2 + eps/2 |x|^2` s.t. `A x - t <= u`, `t >= 0` within
/// the box, which always has an interior. A clearly positive optimal `t`
/// means the original rows cannot be met; its row multipliers (equal to `t`)
/// with the bound multipliers form a Farkas ray whose normalized residual is
/// returned.
fn phase_one_certificate(qp: &QpProblem, tol: f64, max_iter: usize) -> Option<f64> {
    let (n, m) = (qp.dim(), qp.rows());
    if m == 0 {
        return None;
    }
    let mut q = DMatrix::zeros(n + m, n + m);
    for i in 0..n + m {
        q[(i, i)] = if i < n { PHASE_ONE_REG } else { 1.0 };
    }
    let mut a = DMatrix::zeros(m, n + m);
    a.view_mut((0, 0), (m, n)).copy_from(&qp.a);
    for r in 0..m {
        a[(r, n + r)] = -1.0;
    }
    let lower = DVector::from_fn(n + m, |i, _| if i < n { qp.lower[i] } else { 0.0 });
    let upper = DVector::from_fn(n + m, |i, _| if i < n { qp.upper[i] } else { f64::INFINITY });
    let aux = QpProblem {
        q,
        g: DVector::zeros(n + m),
        a,
        u: qp.u.clone(),
        lower,
        upper,
    };
    let sol = path_following(&aux, tol, max_iter);
    if sol.status != QpStatus::Optimal {
        return None;
    }
    let shortfall = sol.x.rows(n, m).amax();
    if !(shortfall > 1e3 * tol * qp.u.amax().max(1.0)) {
        return None;
    }
    let lam = &sol.duals_ineq;
    let zl = sol.duals_lower.rows(0, n);
    let zu = sol.duals_upper.rows(0, n);
    let scale = lam.sum() + zl.sum() + zu.sum();
    let ray = qp.a.transpose() * lam - zl + zu;
    Some(ray.amax() / scale)
}

fn clip_to_bounds(qp: &QpProblem, x: &mut DVector<f64>) {
    for i in 0..qp.dim() {
        x[i] = x[i].clamp(qp.lower[i], qp.upper[i]);
    }
}

/// Cholesky with a diagonal nudge and an LU fallback for singular systems.
fn solve_spd(mat: DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    if let Some(chol) = mat.clone().cholesky() {
        return chol.solve(rhs);
    }
    let n = mat.nrows();
    let shift = 1e-14 * mat.amax().max(1.0);
    if let Some(chol) = (&mat + DMatrix::identity(n, n) * shift).cholesky() {
        return chol.solve(rhs);
    }
    mat.lu().solve(rhs).unwrap_or_else(|| DVector::zeros(n))
}

/// Detects a diverging dual ray `y >= 0` with `A'lam - zl + zu ~ 0` and
/// `u'lam - l'zl + b'zu < 0`, which proves the feasible set empty.
fn farkas_certificate(qp: &QpProblem, it: &Iterate, has_lo: &[bool], has_up: &[bool]) -> Option<f64> {
    let scale = it.lam.iter().chain(it.zl.iter()).chain(it.zu.iter()).map(|v| v.abs()).sum::<f64>();
    if !(scale > 1e8) {
        return None;
    }
    let lam = &it.lam / scale;
    let zl = &it.zl / scale;
    let zu = &it.zu / scale;
    let ray = qp.a.transpose() * &lam - &zl + &zu;
    let mut value = lam.dot(&qp.u);
    for i in 0..qp.dim() {
        if has_lo[i] {
            value -= zl[i] * qp.lower[i];
        }
        if has_up[i] {
            value += zu[i] * qp.upper[i];
        }
    }
    let residual = ray.amax();
    (residual <= 1e-6 && value <= -1e-6).then_some(residual)
}

/// Active set read off the interior iterate: bounds and rows whose slack is
/// below their multiplier.
struct ActiveSet {
    fixed: Vec<Option<f64>>,
    at_lower: Vec<bool>,
    rows: Vec<usize>,
}

/// Solves the equality-constrained QP on the active set read off the final
/// interior iterate.
fn polish(qp: &QpProblem, it: &Iterate, has_lo: &[bool], has_up: &[bool]) -> Option<QpSolution> {
    let n = qp.dim();
    let m = qp.rows();
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    let mut at_lower = vec![false; n];
    for i in 0..n {
        let tl = it.x[i] - qp.lower[i];
        let tu = qp.upper[i] - it.x[i];
        if has_lo[i] && tl < it.zl[i] && (!has_up[i] || tl <= tu) {
            fixed[i] = Some(qp.lower[i]);
            at_lower[i] = true;
        } else if has_up[i] && tu < it.zu[i] {
            fixed[i] = Some(qp.upper[i]);
        }
    }
    let rows: Vec<usize> = (0..m).filter(|&r| it.s[r] < it.lam[r]).collect();
    let set = ActiveSet { fixed, at_lower, rows };
    if let Some(sol) = solve_on_active_set(qp, &set) {
        return Some(sol);
    }
    // Near-degenerate vertices can make the identified set over-determined;
    // try each set with one member released and keep the best.
    let mut best: Option<(f64, QpSolution)> = None;
    let mut consider = |cand: ActiveSet| {
        if let Some(sol) = solve_on_active_set(qp, &cand) {
            let res = kkt_residual(qp, &sol);
            if best.as_ref().is_none_or(|(r, _)| res < *r) {
                best = Some((res, sol));
            }
        }
    };
    for i in 0..n {
        if set.fixed[i].is_some() {
            let mut fixed = set.fixed.clone();
            fixed[i] = None;
            consider(ActiveSet { fixed, at_lower: set.at_lower.clone(), rows: set.rows.clone() });
        }
    }
    for c in 0..set.rows.len() {
        let mut rows = set.rows.clone();
        rows.remove(c);
        consider(ActiveSet { fixed: set.fixed.clone(), at_lower: set.at_lower.clone(), rows });
    }
    best.map(|(_, sol)| sol)
}

fn solve_on_active_set(qp: &QpProblem, set: &ActiveSet) -> Option<QpSolution> {
    let n = qp.dim();
    let m = qp.rows();
    let fixed = &set.fixed;
    let at_lower = &set.at_lower;
    let active = &set.rows;
    let free: Vec<usize> = (0..n).filter(|&i| fixed[i].is_none()).collect();
    let nf = free.len();
    let na = active.len();
    let _ = m;

    let mut x = DVector::from_fn(n, |i, _| fixed[i].unwrap_or(0.0));
    let mut lam = DVector::zeros(m);
    if nf + na > 0 {
        let mut kkt = DMatrix::zeros(nf + na, nf + na);
        let mut rhs = DVector::zeros(nf + na);
        for (a, &i) in free.iter().enumerate() {
            for (b, &j) in free.iter().enumerate() {
                kkt[(a, b)] = qp.q[(i, j)];
            }
            rhs[a] = -qp.g[i] - (0..n).filter(|&j| fixed[j].is_some()).map(|j| qp.q[(i, j)] * x[j]).sum::<f64>();
        }
        for (c, &r) in active.iter().enumerate() {
            for (a, &i) in free.iter().enumerate() {
                kkt[(nf + c, a)] = qp.a[(r, i)];
                kkt[(a, nf + c)] = qp.a[(r, i)];
            }
            rhs[nf + c] = qp.u[r] - (0..n).filter(|&j| fixed[j].is_some()).map(|j| qp.a[(r, j)] * x[j]).sum::<f64>();
        }
        let scale = kkt.amax().max(1.0);
        let sol = kkt.clone().lu().solve(&rhs)?;
        if !sol.iter().all(|v| v.is_finite()) || (&kkt * &sol - &rhs).amax() > 1e-9 * scale {
            return None;
        }
        for (a, &i) in free.iter().enumerate() {
            x[i] = sol[a];
        }
        for (c, &r) in active.iter().enumerate() {
            lam[r] = sol[nf + c];
        }
    }
    if lam.iter().any(|&l| l < 0.0) {
        if lam.iter().any(|&l| l < -1e-12) {
            return None;
        }
        lam.apply(|l| *l = l.max(0.0));
    }
    // Bound duals from stationarity on the fixed coordinates.
    let grad = &qp.q * &x + &qp.g + qp.a.transpose() * &lam;
    let mut zl = DVector::zeros(n);
    let mut zu = DVector::zeros(n);
    for i in 0..n {
        if fixed[i].is_some() {
            if at_lower[i] {
                zl[i] = grad[i].max(0.0);
            } else {
                zu[i] = (-grad[i]).max(0.0);
            }
        }
    }
    if qp.primal_violation(&x) > 1e-12 {
        return None;
    }
    Some(QpSolution {
        x,
        duals_ineq: lam,
        duals_lower: zl,
        duals_upper: zu,
        status: QpStatus::Optimal,
        iterations: 0,
        kkt_residual: 0.0,
        certificate_residual: None,
    })
}
