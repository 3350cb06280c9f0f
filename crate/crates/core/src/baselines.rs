//! Penalty baselines and the exhaustive enumeration oracle.
//!
//! Both baselines reuse the AD loop of [`crate::ad`] and replace only the
//! switch update:
//!
//! * **AD-SPen** minimizes the AD2 quadratic model plus the exact penalty
//!   `rho x'(1 - x)` (Hessian `Q - 2 rho I`, generally indefinite);
//! * **AD-NSPen** minimizes `f(P*, x) + rho x'(1 - x)` subject to the
//!   nonlinear rate constraint itself.
//!
//! Each subproblem is solved with the barrier NLP solver, warm started from
//! the previous penalty level, with the same `rho` schedule as the Boolean QP
//! method: `rho = 0` first, then `rho0, beta rho0, ...` up to `max_penalty`,
//! stopping once `|phi| <= eps_comp`.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::ad::{self, AdConfig, AdStatus, AdTrace, Ad2Subproblem, Solution, SwitchSolver, SwitchStep};
use crate::bqp::{penalty_grad, penalty_phi, BqpConfig, BqpIterate, BqpTrace};
use crate::nlp::{self, Curvature, NlpOptions, NlpProblem};
use crate::rate::{EsrProblem, PowerAllocation, SwitchVector};
use crate::{Error, Result};

/// Largest antenna count [`enumerate_selections`] accepts by default.
pub const DEFAULT_ENUM_LIMIT: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Method {
    #[serde(rename = "AD-SBQP")]
    AdSbqp,
    #[serde(rename = "AD-SPen")]
    AdSpen,
    #[serde(rename = "AD-NSPen")]
    AdNspen,
    #[serde(rename = "ENUM")]
    Enum,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::AdSbqp, Method::AdSpen, Method::AdNspen, Method::Enum];

    pub fn name(self) -> &'static str {
        match self {
            Method::AdSbqp => "AD-SBQP",
            Method::AdSpen => "AD-SPen",
            Method::AdNspen => "AD-NSPen",
            Method::Enum => "ENUM",
        }
    }

    /// Lower-case form used in file names.
    pub fn slug(self) -> String {
        self.name().to_ascii_lowercase()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "adsbqp" | "sbqp" => Ok(Method::AdSbqp),
            "adspen" | "spen" => Ok(Method::AdSpen),
            "adnspen" | "nspen" => Ok(Method::AdNspen),
            "enum" | "enumerate" => Ok(Method::Enum),
            _ => Err(Error::UnknownMethod(s.to_string())),
        }
    }
}

/// One row of the comparison table.
#[derive(Debug, Clone, Serialize)]
pub struct MethodReport {
    pub method: Method,
    pub objective: f64,
    pub complementarity: f64,
    pub iterations: usize,
    /// Seconds; informational only.
    pub wall_time: f64,
    pub status: String,
}

impl MethodReport {
    pub fn from_solution(method: Method, sol: &Solution, wall_time: f64) -> Self {
        Self {
            method,
            objective: sol.objective,
            complementarity: sol.complementarity,
            iterations: sol.iterations,
            wall_time,
            status: sol.status.label().to_string(),
        }
    }
}

/// Penalty levels shared by both baselines: `0, rho0, beta rho0, ...`.
fn penalty_levels(cfg: &BqpConfig) -> Vec<f64> {
    let mut levels = vec![0.0];
    let mut rho = cfg.rho0;
    while rho <= cfg.max_penalty && levels.len() <= cfg.max_outer {
        levels.push(rho);
        rho *= cfg.beta;
    }
    levels
}

/// Runs the penalty homotopy on `make(rho)`, recording the iterates in the
/// same shape as a Boolean QP trace. `eval` gives the reported model value.
fn penalty_homotopy<P: NlpProblem>(
    n: usize,
    start: DVector<f64>,
    cfg: &BqpConfig,
    opts: &NlpOptions,
    make: impl Fn(f64) -> P,
    eval: impl Fn(&DVector<f64>) -> f64,
) -> Result<SwitchStep> {
    let mut z = start;
    let mut trace = BqpTrace::default();
    let mut met = false;
    for (k, rho) in penalty_levels(cfg).into_iter().enumerate() {
        let prob = make(rho);
        let sol = nlp::solve_barrier(&prob, &z, opts)?;
        z = sol.z;
        let phi = penalty_phi(&z, n).abs();
        if k == 0 {
            trace.global_objective = eval(&z);
            trace.global_complementarity = phi;
            trace.global_qp_iterations = sol.iterations;
        } else {
            trace.iterations.push(BqpIterate {
                rho,
                objective: eval(&z),
                complementarity: phi,
                step: 1.0,
                qp_iterations: sol.iterations,
            });
        }
        if phi <= cfg.eps_comp {
            met = true;
            break;
        }
    }
    Ok(SwitchStep {
        x: z.rows(0, n).into_owned(),
        slack: z[n],
        complementarity_met: met,
        trace,
    })
}

/// Start with the switches at `x_bar` and enough slack to be strictly
/// feasible for `c_lin`.
fn elastic_start(x_bar: &SwitchVector, violation: f64) -> DVector<f64> {
    let n = x_bar.len();
    x_bar.entries.clone().resize_vertically(n + 1, violation.max(0.0) + 1.0)
}

/// AD2 quadratic model plus `rho x'(1 - x)`.
struct PenalizedModel<'a> {
    sub: &'a Ad2Subproblem,
    rho: f64,
}

impl NlpProblem for PenalizedModel<'_> {
    fn dim(&self) -> usize {
        self.sub.qp.dim()
    }
    fn num_constraints(&self) -> usize {
        self.sub.qp.rows()
    }
    fn lower(&self) -> DVector<f64> {
        self.sub.qp.lower.clone()
    }
    fn upper(&self) -> DVector<f64> {
        self.sub.qp.upper.clone()
    }
    fn objective(&self, z: &DVector<f64>) -> f64 {
        self.sub.qp.objective(z) + self.rho * penalty_phi(z, self.sub.n_switch)
    }
    fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.sub.qp.q * z + &self.sub.qp.g + penalty_grad(z, self.sub.n_switch) * self.rho
    }
    fn hessian(&self, _: &DVector<f64>) -> Curvature {
        let mut h = self.sub.qp.q.clone();
        for i in 0..self.sub.n_switch {
            h[(i, i)] -= 2.0 * self.rho;
        }
        Curvature::Dense(h)
    }
    fn constraints(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.sub.qp.a * z - &self.sub.qp.u
    }
    fn jacobian(&self, _: &DVector<f64>) -> DMatrix<f64> {
        self.sub.qp.a.clone()
    }
    fn constraint_curvature(&self, _: &DVector<f64>, _: usize) -> Curvature {
        Curvature::Zero
    }
}

/// Switch update of AD-SPen.
pub struct SmoothPenalty {
    pub nlp: NlpOptions,
}

impl SwitchSolver for SmoothPenalty {
    fn solve_switches(
        &self,
        _: &EsrProblem,
        sub: &Ad2Subproblem,
        _: &PowerAllocation,
        x_bar: &SwitchVector,
        bqp: &BqpConfig,
    ) -> Result<SwitchStep> {
        let lifted = sub.lift(&x_bar.entries);
        let violation = (&sub.qp.a * &lifted - &sub.qp.u)[0];
        penalty_homotopy(
            sub.n_switch,
            elastic_start(x_bar, violation),
            bqp,
            &self.nlp,
            |rho| PenalizedModel { sub, rho },
            |z| sub.qp.objective(z),
        )
    }
}

/// `f(P*, x) + rho x'(1 - x) + w s` subject to `1 - R(P*, x) / r_th - s <= 0`.
struct PenalizedNonlinear<'a> {
    prob: &'a EsrProblem,
    power: &'a PowerAllocation,
    cost: &'a DVector<f64>,
    weight: f64,
    rho: f64,
}

impl PenalizedNonlinear<'_> {
    fn switches(&self, z: &DVector<f64>) -> SwitchVector {
        SwitchVector::new(z.rows(0, z.len() - 1).into_owned())
    }
}

impl NlpProblem for PenalizedNonlinear<'_> {
    fn dim(&self) -> usize {
        self.cost.len() + 1
    }
    fn num_constraints(&self) -> usize {
        1
    }
    fn lower(&self) -> DVector<f64> {
        DVector::zeros(self.dim())
    }
    fn upper(&self) -> DVector<f64> {
        let mut u = DVector::from_element(self.dim(), 1.0);
        u[self.dim() - 1] = f64::INFINITY;
        u
    }
    fn objective(&self, z: &DVector<f64>) -> f64 {
        let n = self.cost.len();
        self.cost.dot(&z.rows(0, n)) + self.weight * z[n] + self.rho * penalty_phi(z, n)
    }
    fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        let n = self.cost.len();
        let mut g = penalty_grad(z, n) * self.rho;
        g.rows_mut(0, n).axpy(1.0, self.cost, 1.0);
        g[n] = self.weight;
        g
    }
    fn hessian(&self, _: &DVector<f64>) -> Curvature {
        let n = self.cost.len();
        let mut h = DMatrix::zeros(n + 1, n + 1);
        for i in 0..n {
            h[(i, i)] = -2.0 * self.rho;
        }
        Curvature::Dense(h)
    }
    fn constraints(&self, z: &DVector<f64>) -> DVector<f64> {
        let rate = self.prob.sum_rate(self.power, &self.switches(z));
        DVector::from_element(1, 1.0 - rate / self.prob.r_th - z[z.len() - 1])
    }
    fn jacobian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let n = self.cost.len();
        let grad = self.prob.grad_rate_wrt_switch(self.power, &self.switches(z));
        let mut jac = DMatrix::zeros(1, n + 1);
        for i in 0..n {
            jac[(0, i)] = -grad[i] / self.prob.r_th;
        }
        jac[(0, n)] = -1.0;
        jac
    }
    fn constraint_curvature(&self, z: &DVector<f64>, _: usize) -> Curvature {
        let n = self.cost.len();
        let h = -self.prob.hess_rate_wrt_switch(self.power, &self.switches(z)) / self.prob.r_th;
        Curvature::Dense(h.resize(n + 1, n + 1, 0.0))
    }
}

/// Switch update of AD-NSPen.
pub struct NonsmoothPenalty {
    pub nlp: NlpOptions,
    pub elastic_weight: f64,
}

impl SwitchSolver for NonsmoothPenalty {
    fn solve_switches(
        &self,
        prob: &EsrProblem,
        sub: &Ad2Subproblem,
        power: &PowerAllocation,
        x_bar: &SwitchVector,
        bqp: &BqpConfig,
    ) -> Result<SwitchStep> {
        let n = sub.n_switch;
        let make = |rho| PenalizedNonlinear {
            prob,
            power,
            cost: &sub.cost,
            weight: self.elastic_weight,
            rho,
        };
        let start = elastic_start(x_bar, sub.c_bar);
        let eval = |z: &DVector<f64>| sub.cost.dot(&z.rows(0, n)) + self.elastic_weight * z[n];
        penalty_homotopy(n, start, bqp, &self.nlp, make, eval)
    }
}

pub fn solve_ad_spen(prob: &EsrProblem, cfg: &AdConfig) -> Result<(Solution, AdTrace)> {
    let step = SmoothPenalty {
        nlp: cfg.nlp.clone(),
    };
    ad::solve_with(prob, cfg, &step)
}

pub fn solve_ad_nspen(prob: &EsrProblem, cfg: &AdConfig) -> Result<(Solution, AdTrace)> {
    let step = NonsmoothPenalty {
        nlp: cfg.nlp.clone(),
        elastic_weight: cfg.elastic_weight,
    };
    ad::solve_with(prob, cfg, &step)
}

#[derive(Debug, Clone)]
pub struct Enumeration {
    pub report: MethodReport,
    pub solution: Solution,
    /// Selections for which the threshold is reachable.
    pub feasible: usize,
}

/// Exhaustive search over all `2^N` selections with AD1 powers.
pub fn enumerate_selections(prob: &EsrProblem, n_limit: usize, opts: &NlpOptions) -> Result<Enumeration> {
    let n = prob.n_tx();
    if n > n_limit {
        return Err(Error::TooLarge { n, limit: n_limit });
    }
    let order: Vec<u64> = (0..1u64 << n).collect();
    enumerate_in_order(prob, &order, n_limit, opts)
}

/// As [`enumerate_selections`], visiting the masks in the given order (bit
/// `i` set means antenna `i` on). The winner is the lowest objective, ties
/// going to the numerically smallest mask, so the result does not depend on
/// the order.
pub fn enumerate_in_order(
    prob: &EsrProblem,
    order: &[u64],
    n_limit: usize,
    opts: &NlpOptions,
) -> Result<Enumeration> {
    let n = prob.n_tx();
    if n > n_limit {
        return Err(Error::TooLarge { n, limit: n_limit });
    }
    let clock = Instant::now();
    let mask_vector = |mask: u64| {
        let bits: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
        SwitchVector::from_mask(&bits)
    };
    let results: Vec<Option<(u64, f64, PowerAllocation)>> = order
        .par_iter()
        .map(|&mask| -> Result<Option<(u64, f64, PowerAllocation)>> {
            let x = mask_vector(mask);
            if ad::max_sum_rate(prob, &x)? <= prob.r_th * (1.0 + 1e-9) {
                return Ok(None);
            }
            match ad::ad1(prob, &x, opts) {
                Ok(out) => {
                    let cost = prob.economic_objective(&out.power, &x);
                    Ok(Some((mask, cost, out.power)))
                }
                Err(Error::Infeasible { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let feasible = results.iter().filter(|r| r.is_some()).count();
    let best = results
        .into_iter()
        .flatten()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .ok_or_else(|| Error::Infeasible {
            r_th: prob.r_th,
            achievable: ad::max_sum_rate(prob, &SwitchVector::ones(n)).unwrap_or(0.0),
        })?;
    let (mask, _, power) = best;
    let solution = Solution::evaluate(prob, power, mask_vector(mask), AdStatus::Converged, order.len());
    let report = MethodReport::from_solution(Method::Enum, &solution, clock.elapsed().as_secs_f64());
    Ok(Enumeration {
        report,
        solution,
        feasible,
    })
}

/// Output of one method run.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub report: MethodReport,
    pub solution: Solution,
    /// Absent for enumeration.
    pub trace: Option<AdTrace>,
}

pub fn run_method(prob: &EsrProblem, method: Method, cfg: &AdConfig) -> Result<MethodRun> {
    let clock = Instant::now();
    let (solution, trace) = match method {
        Method::AdSbqp => {
            let (s, t) = ad::solve(prob, cfg)?;
            (s, Some(t))
        }
        Method::AdSpen => {
            let (s, t) = solve_ad_spen(prob, cfg)?;
            (s, Some(t))
        }
        Method::AdNspen => {
            let (s, t) = solve_ad_nspen(prob, cfg)?;
            (s, Some(t))
        }
        Method::Enum => {
            let e = enumerate_selections(prob, DEFAULT_ENUM_LIMIT, &cfg.nlp)?;
            (e.solution, None)
        }
    };
    let report = MethodReport::from_solution(method, &solution, clock.elapsed().as_secs_f64());
    Ok(MethodRun {
        report,
        solution,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ChannelMatrix, RateThreshold, ScenarioConfig};
    use crate::rate::tests::random_problem;
    use num_complex::Complex64;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            assert_eq!(m.slug().parse::<Method>().unwrap(), m);
        }
        assert!("qp".parse::<Method>().is_err());
    }

    #[test]
    fn penalty_schedule_matches_bqp() {
        let levels = penalty_levels(&BqpConfig::default());
        assert_eq!(levels[0], 0.0);
        assert_eq!(levels[1], 1.0);
        assert_eq!(*levels.last().unwrap(), 2f64.powi(32));
        assert_eq!(levels.len(), 34);
    }

    #[test]
    fn single_antenna_is_selected() {
        let mut cfg = ScenarioConfig::with_size(1, 1);
        cfg.r_th = RateThreshold::Absolute(0.5);
        let h = DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
        let prob = EsrProblem::unchecked(ChannelMatrix::from_entries(h).unwrap(), cfg, 0.5).unwrap();
        let e = enumerate_selections(&prob, 16, &NlpOptions::default()).unwrap();
        assert_eq!(e.solution.switches.entries[0], 1.0);
        assert_eq!(e.feasible, 1);
    }

    #[test]
    fn useless_antenna_is_never_selected() {
        let mut cfg = ScenarioConfig::with_size(2, 1);
        cfg.p_th = 1.0;
        cfg.r_th = RateThreshold::Absolute(0.5);
        let mut h = DMatrix::from_element(2, 1, Complex64::new(1.0, 0.0));
        h[(1, 0)] = Complex64::new(1e-30, 0.0);
        let prob = EsrProblem::unchecked(ChannelMatrix::from_entries(h).unwrap(), cfg, 0.5).unwrap();
        let e = enumerate_selections(&prob, 16, &NlpOptions::default()).unwrap();
        assert_eq!(e.solution.switches.entries.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn enumeration_refuses_large_instances() {
        let prob = random_problem(5, 2, 1);
        assert!(matches!(
            enumerate_selections(&prob, 4, &NlpOptions::default()),
            Err(Error::TooLarge { n: 5, limit: 4 })
        ));
    }
}
