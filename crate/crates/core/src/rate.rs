//! Sum-rate and cost model with analytic derivatives.
//!
//! With switches `x` and powers `P`, user `j` sees
//!
//! ```text
//!     SNR_j = (sum_i p_ij x_i) * (sum_i |h_ij|^2 x_i^2) / N0B
//! ```
//!
//! i.e. the power reaching the user through active antennas times the MRT
//! array gain of the active sub-array `||h_j .* x||^2`. For Boolean `x` this
//! is the plain MRT SNR restricted to the active antennas; for fractional `x`
//! the squared switch values are used literally. The sum rate is
//! `R = sum_j B log2(1 + SNR_j)`, evaluated with `ln_1p` so that the very low
//! SNRs produced by realistic path loss keep full relative precision.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::channel::{ChannelMatrix, RateThreshold, ScenarioConfig};
use crate::{Error, Result};

/// Switch values within this distance of 0 or 1 count as Boolean.
pub const BOOLEAN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerAllocation {
    /// `n_tx x n_users` per-link powers.
    pub entries: DMatrix<f64>,
}

impl PowerAllocation {
    pub fn new(entries: DMatrix<f64>) -> Self {
        Self { entries }
    }

    pub fn zeros(n_tx: usize, n_users: usize) -> Self {
        Self::new(DMatrix::zeros(n_tx, n_users))
    }

    /// Every antenna's cap `p_th` split evenly over the users.
    pub fn uniform(n_tx: usize, n_users: usize, p_th: f64) -> Self {
        Self::new(DMatrix::from_element(n_tx, n_users, p_th / n_users as f64))
    }

    pub fn row_sums(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.entries.nrows(),
            self.entries.row_iter().map(|r| r.sum()),
        )
    }

    /// Largest violation of `P >= 0` and `row sums <= p_th`.
    pub fn violation(&self, p_th: f64) -> f64 {
        let neg = self.entries.iter().fold(0.0f64, |m, &p| m.max(-p));
        let cap = self.row_sums().iter().fold(0.0f64, |m, &s| m.max(s - p_th));
        neg.max(cap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwitchVector {
    pub entries: DVector<f64>,
}

impl SwitchVector {
    pub fn new(entries: DVector<f64>) -> Self {
        Self { entries }
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self::new(DVector::from_element(n, value))
    }

    pub fn ones(n: usize) -> Self {
        Self::constant(n, 1.0)
    }

    pub fn from_mask(mask: &[bool]) -> Self {
        Self::new(DVector::from_iterator(
            mask.len(),
            mask.iter().map(|&on| if on { 1.0 } else { 0.0 }),
        ))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `max_i min(x_i, 1 - x_i)`: zero exactly at Boolean points.
    pub fn boolean_distance(&self) -> f64 {
        self.entries
            .iter()
            .fold(0.0f64, |m, &x| m.max(x.min(1.0 - x).abs()))
    }

    pub fn is_boolean(&self, tol: f64) -> bool {
        self.boolean_distance() <= tol
    }

    /// Antennas whose switch is at least one half.
    pub fn selected(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.entries[i] >= 0.5).collect()
    }
}

/// Economic sum rate instance: channel, constants and the resolved absolute
/// rate threshold.
#[derive(Debug, Clone)]
pub struct EsrProblem {
    pub channel: ChannelMatrix,
    pub cfg: ScenarioConfig,
    pub r_th: f64,
    gains: DMatrix<f64>,
}

/// Per-user intermediate sums shared by the rate and its derivatives.
struct UserTerms {
    /// `sum_i p_ij x_i`
    power: DVector<f64>,
    /// `sum_i |h_ij|^2 x_i^2`
    array_gain: DVector<f64>,
    snr: DVector<f64>,
}

impl EsrProblem {
    /// Resolves the threshold and checks that it is reachable with every
    /// antenna switched on.
    pub fn new(channel: ChannelMatrix, cfg: ScenarioConfig) -> Result<Self> {
        let prob = Self::unchecked(channel, cfg, 1.0)?;
        let full_capacity = prob.full_activation_capacity();
        let r_th = match prob.cfg.r_th {
            RateThreshold::Absolute(v) => v,
            RateThreshold::Fraction(f) => f * full_capacity,
        };
        let prob = Self { r_th, ..prob };
        if !(r_th > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "r_th_value: resolved threshold {r_th:e} is not positive"
            )));
        }
        if r_th >= full_capacity {
            // Even spreading is not optimal in general, so look harder before
            // declaring the instance infeasible.
            let best = crate::ad::max_sum_rate(&prob, &SwitchVector::ones(prob.n_tx()))?;
            if r_th >= best {
                return Err(Error::Infeasible {
                    r_th,
                    achievable: best,
                });
            }
        }
        Ok(prob)
    }

    /// Builds the problem with an explicit absolute threshold and no
    /// feasibility check.
    pub fn unchecked(channel: ChannelMatrix, cfg: ScenarioConfig, r_th: f64) -> Result<Self> {
        cfg.validate()?;
        if channel.n_tx() != cfg.n_tx || channel.n_users() != cfg.n_users {
            return Err(Error::Dimension(format!(
                "channel is {}x{}, scenario says {}x{}",
                channel.n_tx(),
                channel.n_users(),
                cfg.n_tx,
                cfg.n_users
            )));
        }
        let gains = channel.gains();
        Ok(Self {
            channel,
            cfg,
            r_th,
            gains,
        })
    }

    /// Same instance with a different absolute threshold.
    pub fn with_threshold(&self, r_th: f64) -> Self {
        Self {
            r_th,
            ..self.clone()
        }
    }

    pub fn n_tx(&self) -> usize {
        self.cfg.n_tx
    }

    pub fn n_users(&self) -> usize {
        self.cfg.n_users
    }

    /// `|h_ij|^2`
    pub fn gains(&self) -> &DMatrix<f64> {
        &self.gains
    }

    /// `B / ln 2`, the factor turning natural logs into rates.
    fn rate_scale(&self) -> f64 {
        self.cfg.bandwidth / LN_2
    }

    /// Rate with all antennas on and uniform power at the per-antenna cap.
    pub fn full_activation_capacity(&self) -> f64 {
        let p = PowerAllocation::uniform(self.n_tx(), self.n_users(), self.cfg.p_th);
        self.sum_rate(&p, &SwitchVector::ones(self.n_tx()))
    }

    fn user_terms(&self, p: &PowerAllocation, x: &SwitchVector) -> UserTerms {
        let (n, k) = (self.n_tx(), self.n_users());
        let mut power = DVector::zeros(k);
        let mut array_gain = DVector::zeros(k);
        for j in 0..k {
            for i in 0..n {
                let xi = x.entries[i];
                power[j] += p.entries[(i, j)] * xi;
                array_gain[j] += self.gains[(i, j)] * xi * xi;
            }
        }
        let snr = power.component_mul(&array_gain) / self.cfg.noise;
        UserTerms {
            power,
            array_gain,
            snr,
        }
    }

    pub fn snr_user(&self, p: &PowerAllocation, x: &SwitchVector, j: usize) -> f64 {
        self.user_terms(p, x).snr[j]
    }

    pub fn sum_rate(&self, p: &PowerAllocation, x: &SwitchVector) -> f64 {
        let terms = self.user_terms(p, x);
        self.rate_scale() * terms.snr.iter().map(|s| s.ln_1p()).sum::<f64>()
    }

    /// Rate with every antenna active, evaluated from the column norms
    /// directly rather than through the switched form.
    pub fn sum_rate_all_active(&self, p: &PowerAllocation) -> f64 {
        (0..self.n_users())
            .map(|j| {
                let snr = p.entries.column(j).sum() * self.channel.column_norm_sqr(j)
                    / self.cfg.noise;
                self.cfg.bandwidth * snr.ln_1p() / LN_2
            })
            .sum()
    }

    /// Transmit power through active antennas plus their standby draw.
    pub fn economic_objective(&self, p: &PowerAllocation, x: &SwitchVector) -> f64 {
        p.row_sums()
            .iter()
            .zip(x.entries.iter())
            .map(|(row, xi)| (row + self.cfg.p_rf) * xi)
            .sum()
    }

    /// Gradient of the cost in `x`: `sum_j p_ij + p_rf` per antenna.
    pub fn objective_grad_wrt_switch(&self, p: &PowerAllocation) -> DVector<f64> {
        p.row_sums().add_scalar(self.cfg.p_rf)
    }

    pub fn grad_rate_wrt_power(&self, p: &PowerAllocation, x: &SwitchVector) -> DMatrix<f64> {
        let t = self.user_terms(p, x);
        let c = self.rate_scale() / self.cfg.noise;
        DMatrix::from_fn(self.n_tx(), self.n_users(), |i, j| {
            c * x.entries[i] * t.array_gain[j] / (1.0 + t.snr[j])
        })
    }

    /// Factors of the (negative semidefinite) power Hessian:
    /// `d2R/dP2 = -sum_j w_j (u_j e_j')(u_j e_j')'` where `u_j` lives in
    /// column `j`. Returns `(w_j, u_j)` per user.
    pub fn power_curvature_factors(
        &self,
        p: &PowerAllocation,
        x: &SwitchVector,
    ) -> Vec<(f64, DVector<f64>)> {
        let t = self.user_terms(p, x);
        let c = self.rate_scale();
        (0..self.n_users())
            .map(|j| {
                let w = c / (1.0 + t.snr[j]).powi(2);
                let u = x.entries.map(|xi| xi * t.array_gain[j] / self.cfg.noise);
                (w, u)
            })
            .collect()
    }

    /// `dSNR_j / dx_i` for every user (columns) and antenna (rows).
    fn snr_switch_jacobian(&self, p: &PowerAllocation, x: &SwitchVector, t: &UserTerms) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_tx(), self.n_users(), |i, j| {
            (p.entries[(i, j)] * t.array_gain[j]
                + 2.0 * t.power[j] * self.gains[(i, j)] * x.entries[i])
                / self.cfg.noise
        })
    }

    pub fn grad_rate_wrt_switch(&self, p: &PowerAllocation, x: &SwitchVector) -> DVector<f64> {
        let t = self.user_terms(p, x);
        let d = self.snr_switch_jacobian(p, x, &t);
        let weights = t.snr.map(|s| self.rate_scale() / (1.0 + s));
        d * weights
    }

    /// Exact Hessian of the rate in `x`. Only the upper triangle is computed
    /// and mirrored, so the result is symmetric bit for bit.
    pub fn hess_rate_wrt_switch(&self, p: &PowerAllocation, x: &SwitchVector) -> DMatrix<f64> {
        let n = self.n_tx();
        let t = self.user_terms(p, x);
        let d = self.snr_switch_jacobian(p, x, &t);
        let c = self.rate_scale();
        let noise = self.cfg.noise;
        let mut h = DMatrix::zeros(n, n);
        for j in 0..self.n_users() {
            let first = c / (1.0 + t.snr[j]);
            let second = c / (1.0 + t.snr[j]).powi(2);
            for i in 0..n {
                for k in i..n {
                    let mut d2 = 2.0
                        * (p.entries[(i, j)] * self.gains[(k, j)] * x.entries[k]
                            + p.entries[(k, j)] * self.gains[(i, j)] * x.entries[i]);
                    if i == k {
                        d2 += 2.0 * t.power[j] * self.gains[(i, j)];
                    }
                    h[(i, k)] += first * d2 / noise - second * d[(i, j)] * d[(k, j)];
                }
            }
        }
        for i in 0..n {
            for k in (i + 1)..n {
                h[(k, i)] = h[(i, k)];
            }
        }
        h
    }
}
