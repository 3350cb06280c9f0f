//! Alternating-direction driver.
//!
//! Each iteration runs
//!
//! 1. **AD1**: the power allocation `P*` at fixed switches `x_bar`, solved as a
//!    log-barrier NLP in `P` ([`ad1`]). Its rate-constraint multiplier
//!    `lambda` is kept.
//! 2. **AD2**: a Boolean QP in `x` at fixed `P*` ([`build_ad2_subproblem`]),
//!    built from the second-order model of the Lagrangian
//!    `L(x) = f(P*, x) + lambda (r_th - R(P*, x))` over the linearized rate
//!    constraint, and solved by the penalty method of [`crate::bqp`].
//!
//! until `||[P* | x*] - [P_bar | x_bar]|| <= eps_term`, with `P_bar` the
//! previous AD1 output.
//!
//! Internally the rate constraint is handled in the relative form
//! `1 - R / r_th <= 0`; multipliers are reported for `r_th - R <= 0`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::bqp::{self, BqpConfig, BqpStatus, BqpTrace};
use crate::nlp::{self, Curvature, NlpOptions, NlpProblem, NlpStatus};
use crate::qp::QpProblem;
use crate::rate::{EsrProblem, PowerAllocation, SwitchVector, BOOLEAN_TOL};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct AdConfig {
    pub eps_term: f64,
    pub max_ad_iter: usize,
    pub hessian_shift_floor: f64,
    /// Cost per unit of relative rate shortfall on the AD2 elastic slack.
    pub elastic_weight: f64,
    /// AD2 re-runs allowed when its selection cannot reach the threshold.
    pub max_recoveries: usize,
    /// Extra relative rate demanded from the linearized constraint per
    /// recovery attempt.
    pub recovery_margin: f64,
    /// Share of the reachable rate AD1 targets at a fractional start that
    /// cannot reach `r_th`.
    pub start_rate_fraction: f64,
    pub bqp: BqpConfig,
    pub nlp: NlpOptions,
    /// Record wall-clock stage times in the trace. Off by default so traces
    /// are reproducible byte for byte.
    pub timing: bool,
}

impl Default for AdConfig {
    fn default() -> Self {
        Self {
            eps_term: 1e-6,
            max_ad_iter: 20,
            hessian_shift_floor: 1e-8,
            elastic_weight: 1e4,
            max_recoveries: 4,
            recovery_margin: 0.05,
            start_rate_fraction: 0.9,
            bqp: BqpConfig::default(),
            nlp: NlpOptions::default(),
            timing: false,
        }
    }
}

impl AdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_term > 0.0) {
            return Err(Error::InvalidConfig("eps_term must be positive".into()));
        }
        if self.max_ad_iter == 0 {
            return Err(Error::InvalidConfig("max_ad_iter must be at least 1".into()));
        }
        if !(self.start_rate_fraction > 0.0 && self.start_rate_fraction < 1.0) {
            return Err(Error::InvalidConfig("start_rate_fraction must lie in (0, 1)".into()));
        }
        if !(self.hessian_shift_floor > 0.0) {
            return Err(Error::InvalidConfig("hessian_shift_floor must be positive".into()));
        }
        self.bqp.validate()
    }
}

/// One AD iteration.
#[derive(Debug, Clone, Serialize)]
pub struct AdRecord {
    pub iter: usize,
    /// `f(P*, x*)`
    pub objective: f64,
    pub complementarity: f64,
    /// `R(P*, x*) - r_th`
    pub rate_residual: f64,
    pub dp_norm: f64,
    pub dx_norm: f64,
    /// Rate-constraint multiplier from AD1.
    pub lambda: f64,
    /// Rate AD1 was asked for; below `r_th` only while the switches are
    /// still fractional and `r_th` is out of their reach.
    pub ad1_target: f64,
    /// Seconds spent in AD1 + AD2; zero unless timing is enabled.
    pub stage_time: f64,
    /// Elastic slack left in the accepted AD2 solution.
    pub elastic_slack: f64,
    /// AD2 re-runs needed before a reachable selection was found.
    pub recoveries: usize,
    pub ad2: BqpTrace,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct AdTrace {
    /// Switch value all entries start from.
    pub initial_switch: f64,
    pub records: Vec<AdRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdStatus {
    Converged,
    /// Converged in the AD sense but the last switch step left
    /// `|phi|` above its tolerance.
    ComplementarityNotMet { phi: f64 },
    MaxIter { residual: f64 },
    /// No switch step could be made to reach the rate threshold.
    InfeasibleSelection { selection: Vec<f64> },
}

impl AdStatus {
    pub fn label(&self) -> &'static str {
        match self {
            AdStatus::Converged => "converged",
            AdStatus::ComplementarityNotMet { .. } => "complementarity_not_met",
            AdStatus::MaxIter { .. } => "max_iter",
            AdStatus::InfeasibleSelection { .. } => "infeasible_selection",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Solution {
    pub power: PowerAllocation,
    pub switches: SwitchVector,
    pub objective: f64,
    pub complementarity: f64,
    pub rate: f64,
    pub rate_residual: f64,
    /// Largest row-sum excess over `p_th` (zero when within the cap).
    pub power_violation: f64,
    pub status: AdStatus,
    pub iterations: usize,
}

impl Solution {
    pub fn evaluate(
        prob: &EsrProblem,
        power: PowerAllocation,
        switches: SwitchVector,
        status: AdStatus,
        iterations: usize,
    ) -> Self {
        let rate = prob.sum_rate(&power, &switches);
        Self {
            objective: prob.economic_objective(&power, &switches),
            complementarity: bqp::penalty_phi(&switches.entries, switches.len()).abs(),
            rate,
            rate_residual: rate - prob.r_th,
            power_violation: power.violation(prob.cfg.p_th),
            power,
            switches,
            status,
            iterations,
        }
    }
}

// ---------------------------------------------------------------------------
// Water-filling

/// Effective per-user gains `sum_i |h_ij|^2 x_i^2 / N0B` and the total power
/// budget `p_th sum_i x_i` available to the users at switches `x`.
///
/// The rate depends on `P` only through the user totals `sum_i p_ij x_i`, and
/// any split of the budget between users is reachable within the row caps.
pub fn user_gains_and_budget(prob: &EsrProblem, x: &SwitchVector) -> (Vec<f64>, f64) {
    let g = prob.gains();
    let a = (0..prob.n_users())
        .map(|j| {
            (0..prob.n_tx())
                .map(|i| g[(i, j)] * x.entries[i] * x.entries[i])
                .sum::<f64>()
                / prob.cfg.noise
        })
        .collect();
    let budget = prob.cfg.p_th * x.entries.iter().map(|v| v.max(0.0)).sum::<f64>();
    (a, budget)
}

fn order_by_gain(a: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..a.len()).filter(|&j| a[j] > 0.0).collect();
    idx.sort_by(|&l, &j| a[j].total_cmp(&a[l]).then(l.cmp(&j)));
    idx
}

/// Water-filling maximizing `sum_j ln(1 + a_j P_j)` subject to
/// `sum_j P_j <= budget`. Returns per-user totals.
pub fn water_filling_max_rate(a: &[f64], budget: f64) -> Vec<f64> {
    let order = order_by_gain(a);
    let mut p = vec![0.0; a.len()];
    let levels = |m: usize| -> Vec<f64> {
        // P_j = (budget + sum_l (1/a_l - 1/a_j)) / m, differences formed
        // without cancellation.
        order[..m]
            .iter()
            .map(|&j| {
                let s: f64 = order[..m]
                    .iter()
                    .map(|&l| (a[j] - a[l]) / (a[l] * a[j]))
                    .sum();
                (budget + s) / m as f64
            })
            .collect()
    };
    let mut best = 0;
    for m in 1..=order.len() {
        if levels(m)[m - 1] > 0.0 {
            best = m;
        } else {
            break;
        }
    }
    if best > 0 {
        for (pos, v) in levels(best).into_iter().enumerate() {
            p[order[pos]] = v;
        }
    }
    p
}

/// Minimum-power allocation reaching `sum_j ln(1 + a_j P_j) = target` nats,
/// ignoring any budget.
pub fn water_filling_min_power(a: &[f64], target: f64) -> Vec<f64> {
    let order = order_by_gain(a);
    let mut p = vec![0.0; a.len()];
    if target <= 0.0 || order.is_empty() {
        return p;
    }
    // ln(a_j nu) = (target - sum_l ln(a_l / a_j)) / m over the active users.
    let exponent = |m: usize, j: usize| {
        let s: f64 = order[..m].iter().map(|&l| (a[l] / a[j]).ln()).sum();
        (target - s) / m as f64
    };
    let mut best = 1;
    for m in 1..=order.len() {
        if exponent(m, order[m - 1]) > 0.0 {
            best = m;
        } else {
            break;
        }
    }
    for &j in &order[..best] {
        p[j] = exponent(best, j).exp_m1() / a[j];
    }
    p
}

/// Largest sum rate reachable at switches `x` within the row caps.
pub fn max_sum_rate(prob: &EsrProblem, x: &SwitchVector) -> Result<f64> {
    if x.len() != prob.n_tx() {
        return Err(Error::Dimension(format!(
            "switch vector has {} entries, expected {}",
            x.len(),
            prob.n_tx()
        )));
    }
    let (a, budget) = user_gains_and_budget(prob, x);
    let p = water_filling_max_rate(&a, budget);
    let nats: f64 = a.iter().zip(&p).map(|(a, p)| (a * p).ln_1p()).sum();
    Ok(prob.cfg.bandwidth * nats / std::f64::consts::LN_2)
}

/// Closed-form AD1 objective at `x` (minimum cost with the threshold met),
/// or `None` if the threshold is out of reach.
pub fn water_filling_cost(prob: &EsrProblem, x: &SwitchVector) -> Option<f64> {
    let (a, budget) = user_gains_and_budget(prob, x);
    let target = prob.r_th * std::f64::consts::LN_2 / prob.cfg.bandwidth;
    let p = water_filling_min_power(&a, target);
    let total: f64 = p.iter().sum();
    (total <= budget * (1.0 + 1e-12))
        .then(|| total + prob.cfg.p_rf * x.entries.iter().sum::<f64>())
}

// ---------------------------------------------------------------------------
// AD1

/// Powers on the active rows, flattened row-major (`a * K + j`). Rows are
/// capped through `sum_j p_aj / p_th - 1 <= 0`; the last constraint is
/// `1 - R / r_th <= 0`.
struct PowerProblem<'a> {
    prob: &'a EsrProblem,
    x: &'a SwitchVector,
    rows: Vec<usize>,
}

impl PowerProblem<'_> {
    fn k(&self) -> usize {
        self.prob.n_users()
    }

    fn expand(&self, z: &DVector<f64>) -> PowerAllocation {
        let k = self.k();
        let mut p = PowerAllocation::zeros(self.prob.n_tx(), k);
        for (a, &i) in self.rows.iter().enumerate() {
            for j in 0..k {
                p.entries[(i, j)] = z[a * k + j];
            }
        }
        p
    }

    fn compress(&self, m: &DMatrix<f64>) -> DVector<f64> {
        let k = self.k();
        DVector::from_fn(self.rows.len() * k, |idx, _| m[(self.rows[idx / k], idx % k)])
    }
}

impl NlpProblem for PowerProblem<'_> {
    fn dim(&self) -> usize {
        self.rows.len() * self.k()
    }
    fn num_constraints(&self) -> usize {
        self.rows.len() + 1
    }
    fn lower(&self) -> DVector<f64> {
        DVector::zeros(self.dim())
    }
    fn upper(&self) -> DVector<f64> {
        DVector::from_element(self.dim(), self.prob.cfg.p_th)
    }
    fn objective(&self, z: &DVector<f64>) -> f64 {
        self.gradient(z).dot(z)
    }
    fn gradient(&self, _: &DVector<f64>) -> DVector<f64> {
        let k = self.k();
        DVector::from_fn(self.dim(), |idx, _| self.x.entries[self.rows[idx / k]])
    }
    fn hessian(&self, _: &DVector<f64>) -> Curvature {
        Curvature::Zero
    }
    fn constraints(&self, z: &DVector<f64>) -> DVector<f64> {
        let k = self.k();
        let n = self.rows.len();
        let p_th = self.prob.cfg.p_th;
        let mut c = DVector::zeros(n + 1);
        for a in 0..n {
            c[a] = z.rows(a * k, k).sum() / p_th - 1.0;
        }
        c[n] = 1.0 - self.prob.sum_rate(&self.expand(z), self.x) / self.prob.r_th;
        c
    }
    fn jacobian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let k = self.k();
        let n = self.rows.len();
        let mut jac = DMatrix::zeros(n + 1, self.dim());
        let inv = 1.0 / self.prob.cfg.p_th;
        for a in 0..n {
            for j in 0..k {
                jac[(a, a * k + j)] = inv;
            }
        }
        let grad = self.prob.grad_rate_wrt_power(&self.expand(z), self.x);
        let g = self.compress(&grad);
        for idx in 0..self.dim() {
            jac[(n, idx)] = -g[idx] / self.prob.r_th;
        }
        jac
    }
    fn constraint_curvature(&self, z: &DVector<f64>, k: usize) -> Curvature {
        if k < self.rows.len() {
            return Curvature::Zero;
        }
        let users = self.k();
        let factors = self.prob.power_curvature_factors(&self.expand(z), self.x);
        Curvature::LowRank(
            factors
                .into_iter()
                .enumerate()
                .map(|(j, (w, u))| {
                    let v = DVector::from_fn(self.dim(), |idx, _| {
                        if idx % users == j {
                            u[self.rows[idx / users]]
                        } else {
                            0.0
                        }
                    });
                    (w / self.prob.r_th, v)
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone)]
pub struct Ad1Output {
    pub power: PowerAllocation,
    /// Multiplier of `r_th - R <= 0`.
    pub lambda: f64,
    /// Multiplier of `1 - R / r_th <= 0` (`lambda * r_th`).
    pub lambda_relative: f64,
    pub status: NlpStatus,
    pub iterations: usize,
    pub kkt_residual: f64,
}

fn infeasible_at(prob: &EsrProblem, x: &SwitchVector) -> Error {
    Error::Infeasible {
        r_th: prob.r_th,
        achievable: max_sum_rate(prob, x).unwrap_or(0.0),
    }
}

/// Strictly feasible AD1 start: uniform power scaled between the smallest
/// level meeting the threshold and 99% of the cap, then a water-filled
/// profile, then a phase-1 solve.
fn ad1_start(pp: &PowerProblem<'_>, opts: &NlpOptions) -> Result<DVector<f64>> {
    let prob = pp.prob;
    let k = pp.k();
    let p_th = prob.cfg.p_th;
    let uniform = |s: f64| DVector::from_element(pp.dim(), s * p_th / k as f64);
    let strictly = |z: &DVector<f64>| pp.constraints(z).iter().all(|&c| c < 0.0);
    let top = 0.99;
    if strictly(&uniform(top)) {
        let (mut lo, mut hi) = (0.0, top);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if strictly(&uniform(mid)) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let z = uniform(0.5 * (hi + top));
        if strictly(&z) {
            return Ok(z);
        }
        return Ok(uniform(top));
    }
    let (a, budget) = user_gains_and_budget(prob, pp.x);
    let totals = water_filling_max_rate(&a, budget);
    let sum: f64 = totals.iter().sum();
    if sum > 0.0 {
        let z = DVector::from_fn(pp.dim(), |idx, _| {
            let share = 0.98 * totals[idx % k] / sum + 0.02 / k as f64;
            top * p_th * share
        });
        if strictly(&z) {
            return Ok(z);
        }
    }
    nlp::find_strictly_feasible(pp, Some(&uniform(top)), opts).map_err(|e| match e {
        Error::NoInteriorPoint { .. } => infeasible_at(prob, pp.x),
        other => other,
    })
}

/// Optimal power allocation at fixed switches.
///
/// Antennas with `x_i <= BOOLEAN_TOL` get zero power and are left out of the
/// solve. Fails with [`Error::Infeasible`] when the threshold cannot be met
/// strictly at `x_bar`.
pub fn ad1(prob: &EsrProblem, x_bar: &SwitchVector, opts: &NlpOptions) -> Result<Ad1Output> {
    if x_bar.len() != prob.n_tx() {
        return Err(Error::Dimension(format!(
            "switch vector has {} entries, expected {}",
            x_bar.len(),
            prob.n_tx()
        )));
    }
    let rows: Vec<usize> = (0..prob.n_tx()).filter(|&i| x_bar.entries[i] > BOOLEAN_TOL).collect();
    if rows.is_empty() || max_sum_rate(prob, x_bar)? <= prob.r_th {
        return Err(infeasible_at(prob, x_bar));
    }
    let pp = PowerProblem {
        prob,
        x: x_bar,
        rows,
    };
    // Unrelaxed bounds: relaxed ones let hundreds of tiny negative powers
    // through, and clipping them afterwards shifts the rate measurably.
    let opts = &NlpOptions {
        bound_relax: 0.0,
        ..opts.clone()
    };
    let start = ad1_start(&pp, opts)?;
    let sol = nlp::solve_barrier(&pp, &start, opts)?;
    let mut power = pp.expand(&sol.z);
    power.entries.apply(|v| *v = v.max(0.0));
    let lambda_relative = sol.duals[pp.rows.len()];
    Ok(Ad1Output {
        power,
        lambda: lambda_relative / prob.r_th,
        lambda_relative,
        status: sol.status,
        iterations: sol.iterations,
        kkt_residual: sol.kkt_residual,
    })
}

// ---------------------------------------------------------------------------
// AD2

/// Boolean QP over `(x, s)` with `s >= 0` the elastic slack of the
/// linearized rate constraint.
#[derive(Debug, Clone)]
pub struct Ad2Subproblem {
    pub qp: QpProblem,
    /// `QP(x, 0) - F~(x)`
    pub offset: f64,
    pub n_switch: usize,
    /// Cost coefficients `sum_j p*_ij + p_rf`.
    pub cost: DVector<f64>,
    /// Relative constraint value `1 - R(P*, x_bar) / r_th`.
    pub c_bar: f64,
    /// Gradient of the relative constraint at `x_bar`.
    pub grad_c: DVector<f64>,
    /// Unshifted Lagrangian Hessian `lambda * d2(r_th - R)/dx2`.
    pub hessian: DMatrix<f64>,
    pub hessian_shift: f64,
}

impl Ad2Subproblem {
    /// `F~(x) = 1/2 (x - x_bar)' H (x - x_bar) + cost'(x - x_bar) + F(x_bar)`
    /// with the shifted Hessian.
    pub fn model(&self, x: &DVector<f64>, x_bar: &DVector<f64>) -> f64 {
        let n = self.n_switch;
        let h = self.qp.q.view((0, 0), (n, n));
        let d = x - x_bar;
        0.5 * d.dot(&(h * &d)) + self.cost.dot(&d) + self.cost.dot(x_bar)
    }

    /// QP variables for switches `x` with zero slack.
    pub fn lift(&self, x: &DVector<f64>) -> DVector<f64> {
        x.clone().resize_vertically(self.n_switch + 1, 0.0)
    }
}

/// Smallest eigenvalue shift taking `h` to at least `floor`.
pub fn eigen_shift(h: &DMatrix<f64>, floor: f64) -> f64 {
    let min = h.clone().symmetric_eigenvalues().min();
    if min < floor {
        floor - min
    } else {
        0.0
    }
}

/// Builds the AD2 quadratic model at `(P*, x_bar)` with rate multiplier
/// `lambda` (for `r_th - R <= 0`). `margin` tightens the linearized
/// constraint to `c_lin(x) <= -margin` in relative units.
pub fn build_ad2_subproblem(
    prob: &EsrProblem,
    power: &PowerAllocation,
    x_bar: &SwitchVector,
    lambda: f64,
    cfg: &AdConfig,
    margin: f64,
) -> Result<Ad2Subproblem> {
    let n = prob.n_tx();
    let cost = prob.objective_grad_wrt_switch(power);
    let hessian = -prob.hess_rate_wrt_switch(power, x_bar) * lambda;
    let shift = eigen_shift(&hessian, cfg.hessian_shift_floor);
    let mut h = hessian.clone();
    for i in 0..n {
        h[(i, i)] += shift;
    }
    let xb = &x_bar.entries;
    let hx = &h * xb;
    let offset = -0.5 * xb.dot(&hx);
    let c_bar = 1.0 - prob.sum_rate(power, x_bar) / prob.r_th;
    let grad_c = -prob.grad_rate_wrt_switch(power, x_bar) / prob.r_th;

    let mut q = DMatrix::zeros(n + 1, n + 1);
    q.view_mut((0, 0), (n, n)).copy_from(&h);
    let mut g = DVector::zeros(n + 1);
    g.rows_mut(0, n).copy_from(&(&cost - &hx));
    g[n] = cfg.elastic_weight;
    let mut a = DMatrix::zeros(1, n + 1);
    for i in 0..n {
        a[(0, i)] = grad_c[i];
    }
    a[(0, n)] = -1.0;
    let u = DVector::from_element(1, grad_c.dot(xb) - c_bar - margin);
    let mut lower = DVector::zeros(n + 1);
    let mut upper = DVector::from_element(n + 1, 1.0);
    lower[n] = 0.0;
    upper[n] = f64::INFINITY;
    let qp = QpProblem::new(q, g, a, u, lower, upper)?;
    Ok(Ad2Subproblem {
        qp,
        offset,
        n_switch: n,
        cost,
        c_bar,
        grad_c,
        hessian,
        hessian_shift: shift,
    })
}

/// Outcome of one switch update.
#[derive(Debug, Clone)]
pub struct SwitchStep {
    pub x: DVector<f64>,
    pub slack: f64,
    pub complementarity_met: bool,
    pub trace: BqpTrace,
}

/// The switch update used by AD2. AD-SBQP uses [`Sbqp`]; the penalty
/// baselines plug in their own.
pub trait SwitchSolver: Sync {
    fn solve_switches(
        &self,
        prob: &EsrProblem,
        sub: &Ad2Subproblem,
        power: &PowerAllocation,
        x_bar: &SwitchVector,
        bqp: &BqpConfig,
    ) -> Result<SwitchStep>;
}

/// Sequential Boolean QP step.
pub struct Sbqp;

impl SwitchSolver for Sbqp {
    fn solve_switches(
        &self,
        _: &EsrProblem,
        sub: &Ad2Subproblem,
        _: &PowerAllocation,
        _: &SwitchVector,
        bqp: &BqpConfig,
    ) -> Result<SwitchStep> {
        let res = bqp::solve_bqp_mixed(&sub.qp, sub.n_switch, bqp)?;
        let n = sub.n_switch;
        Ok(SwitchStep {
            x: res.x.rows(0, n).into_owned(),
            slack: res.x[n],
            complementarity_met: res.status == BqpStatus::Converged,
            trace: res.trace,
        })
    }
}

/// Runs AD-SBQP.
pub fn solve(prob: &EsrProblem, cfg: &AdConfig) -> Result<(Solution, AdTrace)> {
    solve_with(prob, cfg, &Sbqp)
}

/// Threshold AD1 works with at `x_bar`: `r_th` when reachable, otherwise
/// (fractional starts only) a fixed fraction of the largest reachable rate.
fn ad1_target(prob: &EsrProblem, x_bar: &SwitchVector, cfg: &AdConfig) -> Result<f64> {
    let reach = max_sum_rate(prob, x_bar)?;
    if reach > prob.r_th * (1.0 + 1e-9) {
        Ok(prob.r_th)
    } else if !x_bar.is_boolean(BOOLEAN_TOL) && reach > 0.0 {
        Ok(cfg.start_rate_fraction * reach)
    } else {
        Err(infeasible_at(prob, x_bar))
    }
}

/// AD loop with a caller-chosen switch update.
pub fn solve_with(
    prob: &EsrProblem,
    cfg: &AdConfig,
    switches: &dyn SwitchSolver,
) -> Result<(Solution, AdTrace)> {
    cfg.validate()?;
    let n = prob.n_tx();
    if max_sum_rate(prob, &SwitchVector::ones(n))? <= prob.r_th * (1.0 + 1e-9) {
        return Err(infeasible_at(prob, &SwitchVector::ones(n)));
    }
    let mut trace = AdTrace {
        initial_switch: 0.5,
        records: Vec::new(),
    };
    let mut x_bar = SwitchVector::constant(n, trace.initial_switch);
    let mut p_bar = PowerAllocation::uniform(n, prob.n_users(), prob.cfg.p_th);
    let mut residual = f64::INFINITY;

    for iter in 1..=cfg.max_ad_iter {
        let clock = Instant::now();
        let target = ad1_target(prob, &x_bar, cfg)?;
        let ad1_out = if target == prob.r_th {
            ad1(prob, &x_bar, &cfg.nlp)?
        } else {
            ad1(&prob.with_threshold(target), &x_bar, &cfg.nlp)?
        };
        let power = ad1_out.power;

        let mut accepted = None;
        let mut recoveries = 0;
        for attempt in 0..=cfg.max_recoveries {
            let margin = cfg.recovery_margin * attempt as f64;
            let sub = build_ad2_subproblem(prob, &power, &x_bar, ad1_out.lambda, cfg, margin)?;
            let bqp_cfg = BqpConfig {
                rho0: cfg.bqp.rho0 * 2f64.powi(attempt as i32),
                ..cfg.bqp.clone()
            };
            let step = switches.solve_switches(prob, &sub, &power, &x_bar, &bqp_cfg)?;
            let candidate = SwitchVector::new(step.x.clone());
            if max_sum_rate(prob, &candidate)? > prob.r_th * (1.0 + 1e-9) {
                accepted = Some((candidate, step));
                break;
            }
            recoveries += 1;
            if attempt == cfg.max_recoveries {
                let selection = step.x.iter().copied().collect();
                let sol = Solution::evaluate(
                    prob,
                    power.clone(),
                    x_bar.clone(),
                    AdStatus::InfeasibleSelection { selection },
                    iter,
                );
                return Ok((sol, trace));
            }
        }
        let (x_star, step) = accepted.expect("loop returns on exhaustion");

        let dp_norm = (&power.entries - &p_bar.entries).norm();
        let dx_norm = (&x_star.entries - &x_bar.entries).norm();
        residual = dp_norm.hypot(dx_norm);
        let rate = prob.sum_rate(&power, &x_star);
        trace.records.push(AdRecord {
            iter,
            objective: prob.economic_objective(&power, &x_star),
            complementarity: bqp::penalty_phi(&x_star.entries, n).abs(),
            rate_residual: rate - prob.r_th,
            dp_norm,
            dx_norm,
            lambda: ad1_out.lambda,
            ad1_target: target,
            stage_time: if cfg.timing { clock.elapsed().as_secs_f64() } else { 0.0 },
            elastic_slack: step.slack,
            recoveries,
            ad2: step.trace,
        });

        if residual <= cfg.eps_term {
            let status = if step.complementarity_met {
                AdStatus::Converged
            } else {
                AdStatus::ComplementarityNotMet {
                    phi: bqp::penalty_phi(&x_star.entries, n).abs(),
                }
            };
            return Ok((Solution::evaluate(prob, power, x_star, status, iter), trace));
        }
        p_bar = power;
        x_bar = x_star;
    }
    // Report the last AD1 point, which satisfies the rate constraint.
    let last = ad1(prob, &x_bar, &cfg.nlp)?;
    let sol = Solution::evaluate(
        prob,
        last.power,
        x_bar,
        AdStatus::MaxIter { residual },
        cfg.max_ad_iter,
    );
    Ok((sol, trace))
}

/// Every antenna on, powers from AD1: the reference the selection has to
/// beat.
pub fn full_activation(prob: &EsrProblem, opts: &NlpOptions) -> Result<Solution> {
    let x = SwitchVector::ones(prob.n_tx());
    let out = ad1(prob, &x, opts)?;
    Ok(Solution::evaluate(prob, out.power, x, AdStatus::Converged, 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ChannelMatrix, RateThreshold, ScenarioConfig};
    use crate::rate::tests::random_problem;
    use num_complex::Complex64;

    fn single_link(r_th: f64) -> EsrProblem {
        let mut cfg = ScenarioConfig::with_size(1, 1);
        cfg.p_th = 2.0;
        cfg.p_rf = 0.0;
        cfg.r_th = RateThreshold::Absolute(r_th);
        let h = DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
        EsrProblem::unchecked(ChannelMatrix::from_entries(h).unwrap(), cfg, r_th).unwrap()
    }

    #[test]
    fn single_link_inverts_the_rate() {
        let prob = single_link(1.0);
        let out = ad1(&prob, &SwitchVector::ones(1), &NlpOptions::default()).unwrap();
        assert!((out.power.entries[(0, 0)] - 1.0).abs() < 1e-6);
        // dP/dR = ln 2 (1 + p) = 2 ln 2 at p = 1.
        assert!((out.lambda - 2.0 * std::f64::consts::LN_2).abs() < 1e-5);
    }

    #[test]
    fn tiny_threshold_needs_tiny_power() {
        let prob = single_link(1e-6);
        let out = ad1(&prob, &SwitchVector::ones(1), &NlpOptions::default()).unwrap();
        assert!(out.power.entries[(0, 0)] < 1e-5);
    }

    #[test]
    fn unreachable_threshold_is_reported() {
        let prob = single_link(10.0);
        match ad1(&prob, &SwitchVector::ones(1), &NlpOptions::default()) {
            Err(Error::Infeasible { achievable, .. }) => {
                assert!((achievable - 3f64.log2()).abs() < 1e-12)
            }
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn water_filling_matches_equal_gain_split() {
        let p = water_filling_max_rate(&[1.0, 1.0], 2.0);
        assert!((p[0] - 1.0).abs() < 1e-15 && (p[1] - 1.0).abs() < 1e-15);
        // A user too weak to be worth any power.
        let p = water_filling_max_rate(&[1.0, 0.1], 1.0);
        assert_eq!(p, vec![1.0, 0.0]);
        let need = water_filling_min_power(&[1.0], 2f64.ln());
        assert!((need[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ad1_matches_water_filling_on_random_instances() {
        for seed in 0..4 {
            let mut prob = random_problem(4, 3, seed);
            let x = SwitchVector::new(DVector::from_column_slice(&[1.0, 0.7, 0.0, 1.0]));
            prob.r_th = 0.6 * max_sum_rate(&prob, &x).unwrap();
            let out = ad1(&prob, &x, &NlpOptions::default()).unwrap();
            let cost = prob.economic_objective(&out.power, &x);
            let oracle = water_filling_cost(&prob, &x).unwrap();
            assert!((cost - oracle).abs() <= 1e-6 * oracle.max(1.0), "{cost} vs {oracle}");
            assert!(prob.sum_rate(&out.power, &x) >= prob.r_th - 1e-6);
            assert!(out.power.violation(prob.cfg.p_th) <= 1e-8);
            assert!(out.power.entries.row(2).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn ad2_model_matches_taylor_expansion() {
        let mut prob = random_problem(5, 3, 11);
        let x_bar = SwitchVector::constant(5, 0.6);
        prob.r_th = 0.5 * max_sum_rate(&prob, &x_bar).unwrap();
        let out = ad1(&prob, &x_bar, &NlpOptions::default()).unwrap();
        let cfg = AdConfig::default();
        let sub = build_ad2_subproblem(&prob, &out.power, &x_bar, out.lambda, &cfg, 0.0).unwrap();
        let mut rng = crate::channel::SeededRng::new(3);
        for _ in 0..10 {
            let x = DVector::from_fn(5, |_, _| rng.uniform());
            let qp_val = sub.qp.objective(&sub.lift(&x));
            assert!((qp_val - (sub.model(&x, &x_bar.entries) + sub.offset)).abs() < 1e-10);
        }
        let at_center = sub.qp.objective(&sub.lift(&x_bar.entries)) - sub.offset;
        let f = prob.economic_objective(&out.power, &x_bar);
        assert!((at_center - f).abs() < 1e-10);
    }

    #[test]
    fn zero_multiplier_leaves_only_the_floor() {
        let prob = random_problem(3, 2, 5);
        let p = PowerAllocation::uniform(3, 2, 1.0);
        let x = SwitchVector::constant(3, 0.5);
        let cfg = AdConfig::default();
        let sub = build_ad2_subproblem(&prob, &p, &x, 0.0, &cfg, 0.0).unwrap();
        let h = sub.qp.q.view((0, 0), (3, 3)).into_owned();
        assert!((h - DMatrix::identity(3, 3) * cfg.hessian_shift_floor).amax() < 1e-20);
    }

    #[test]
    fn single_antenna_stays_on() {
        let prob = single_link(1.0);
        let (sol, trace) = solve(&prob, &AdConfig::default()).unwrap();
        assert_eq!(sol.status, AdStatus::Converged);
        assert_eq!(sol.switches.entries[0], 1.0);
        assert!((sol.power.entries[(0, 0)] - 1.0).abs() < 1e-6);
        assert!(trace.records.len() <= 20);
    }
}
