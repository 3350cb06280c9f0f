//! Scenario geometry, path loss and Rayleigh-faded channel generation.
//!
//! Randomness comes from one ChaCha20 stream per scenario, seeded with
//! `ChaCha20Rng::seed_from_u64(seed)`. Uniform variates take the top 53 bits
//! of each `u64` draw, so a given seed yields the same channel on every
//! platform. The stream is consumed in a fixed order: two uniforms per user
//! for the position (radius, then angle), then one Box-Muller pair per channel
//! entry, column by column.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Threshold used for the default 64x64 network.
pub const DEFAULT_ABSOLUTE_R_TH: f64 = 82.71;
/// Fraction of full-activation capacity used for scaled scenarios.
pub const DEFAULT_R_TH_FRACTION: f64 = 0.5;

/// How the sum-rate threshold is specified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum RateThreshold {
    /// Absolute rate in the same units as the capacity.
    Absolute(f64),
    /// Fraction in (0, 1) of the rate reached with every antenna on and each
    /// antenna's power cap spread evenly over the users.
    Fraction(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_tx: usize,
    pub n_users: usize,
    pub bandwidth: f64,
    pub noise: f64,
    pub pathloss_t0_db: f64,
    pub pathloss_exponent: f64,
    pub cell_center: [f64; 2],
    pub cell_radius: f64,
    pub bs_position: [f64; 2],
    pub seed: u64,
    pub p_rf: f64,
    pub p_th: f64,
    pub r_th: RateThreshold,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::with_size(64, 64)
    }
}

impl ScenarioConfig {
    /// Default scenario with `n_tx` antennas and `n_users` users. Total power
    /// is normalized to one, so each antenna may carry `1 / n_tx`.
    pub fn with_size(n_tx: usize, n_users: usize) -> Self {
        Self {
            n_tx,
            n_users,
            bandwidth: 1.0,
            noise: 1.0,
            pathloss_t0_db: -30.0,
            pathloss_exponent: 3.67,
            cell_center: [100.0, 0.0],
            cell_radius: 20.0,
            bs_position: [0.0, 0.0],
            seed: 0,
            p_rf: 0.0078,
            p_th: if n_tx > 0 { 1.0 / n_tx as f64 } else { 1.0 },
            r_th: default_r_th(n_tx, n_users),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, key: &str, why: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{key}: {why}")))
            }
        };
        check(self.n_tx >= 1, "n_tx", "must be at least 1")?;
        check(self.n_users >= 1, "n_users", "must be at least 1")?;
        check(positive(self.bandwidth), "bandwidth", "must be positive")?;
        check(positive(self.noise), "noise", "must be positive")?;
        check(self.p_rf.is_finite() && self.p_rf >= 0.0, "p_rf", "must be nonnegative")?;
        check(positive(self.p_th), "p_th", "must be positive")?;
        check(positive(self.cell_radius), "cell_radius", "must be positive")?;
        check(self.pathloss_t0_db.is_finite(), "pathloss_t0_db", "must be finite")?;
        check(
            self.pathloss_exponent.is_finite() && self.pathloss_exponent >= 0.0,
            "pathloss_exponent",
            "must be nonnegative",
        )?;
        check(
            self.cell_center.iter().chain(&self.bs_position).all(|c| c.is_finite()),
            "cell_center",
            "coordinates must be finite",
        )?;
        match self.r_th {
            RateThreshold::Absolute(v) => check(positive(v), "r_th_value", "must be positive"),
            RateThreshold::Fraction(v) => {
                check(v > 0.0 && v < 1.0, "r_th_value", "fraction must lie in (0, 1)")
            }
        }
    }
}

/// 82.71 for the default 64x64 network, half of full-activation capacity
/// otherwise (no threshold is known for other sizes).
pub fn default_r_th(n_tx: usize, n_users: usize) -> RateThreshold {
    if n_tx == 64 && n_users == 64 {
        RateThreshold::Absolute(DEFAULT_ABSOLUTE_R_TH)
    } else {
        RateThreshold::Fraction(DEFAULT_R_TH_FRACTION)
    }
}

fn positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

/// Seeded uniform and Gaussian variates on top of ChaCha20.
#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha20Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    /// Uniform on [0, 1) with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// One Box-Muller pair of independent standard normals.
    pub fn normal_pair(&mut self) -> (f64, f64) {
        // 1 - u lies in (0, 1], keeping the logarithm finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * PI * u2;
        (r * theta.cos(), r * theta.sin())
    }

    /// Circularly-symmetric complex Gaussian with unit variance.
    pub fn complex_normal(&mut self) -> Complex64 {
        let (re, im) = self.normal_pair();
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    }
}

/// User positions drawn area-uniformly on the cell disk (radius `R sqrt(u)`).
pub fn sample_user_positions(cfg: &ScenarioConfig, rng: &mut SeededRng) -> Vec<[f64; 2]> {
    (0..cfg.n_users)
        .map(|_| {
            let r = cfg.cell_radius * rng.uniform().sqrt();
            let theta = 2.0 * PI * rng.uniform();
            [
                cfg.cell_center[0] + r * theta.cos(),
                cfg.cell_center[1] + r * theta.sin(),
            ]
        })
        .collect()
}

pub fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Linear power gain `10^(t0_db / 10) * delta^(-eta)`.
pub fn path_loss(delta: f64, t0_db: f64, eta: f64) -> Result<f64> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::Domain(format!(
            "path loss needs a positive distance, got {delta}"
        )));
    }
    Ok(10f64.powf(t0_db / 10.0) * delta.powf(-eta))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    /// `n_tx x n_users` complex gains, column `j` belonging to user `j`.
    pub entries: DMatrix<Complex64>,
    pub user_distances: Vec<f64>,
    pub user_positions: Vec<[f64; 2]>,
}

impl ChannelMatrix {
    /// Wraps explicit gains, e.g. for hand-built instances.
    pub fn from_entries(entries: DMatrix<Complex64>) -> Result<Self> {
        let k = entries.ncols();
        let channel = Self {
            entries,
            user_distances: vec![1.0; k],
            user_positions: vec![[1.0, 0.0]; k],
        };
        channel.check()?;
        Ok(channel)
    }

    pub fn n_tx(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n_users(&self) -> usize {
        self.entries.ncols()
    }

    /// Squared magnitudes `|h_ij|^2`.
    pub fn gains(&self) -> DMatrix<f64> {
        self.entries.map(|h| h.norm_sqr())
    }

    pub fn column_norm_sqr(&self, j: usize) -> f64 {
        self.entries.column(j).iter().map(|h| h.norm_sqr()).sum()
    }

    fn check(&self) -> Result<()> {
        if self.entries.iter().any(|h| !h.re.is_finite() || !h.im.is_finite()) {
            return Err(Error::Domain("channel has non-finite entries".into()));
        }
        if let Some(j) = (0..self.n_users()).find(|&j| !(self.column_norm_sqr(j) > 0.0)) {
            return Err(Error::Domain(format!("channel column {j} is zero")));
        }
        Ok(())
    }

    /// SHA-256 over the little-endian bytes of every entry (column-major).
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update((self.n_tx() as u64).to_le_bytes());
        hasher.update((self.n_users() as u64).to_le_bytes());
        for h in self.entries.iter() {
            hasher.update(h.re.to_le_bytes());
            hasher.update(h.im.to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

/// Raw unit-variance Rayleigh fading, `n_tx x n_users`, drawn column by column.
pub fn rayleigh_fading(n_tx: usize, n_users: usize, rng: &mut SeededRng) -> DMatrix<Complex64> {
    let mut h = DMatrix::zeros(n_tx, n_users);
    for j in 0..n_users {
        for i in 0..n_tx {
            h[(i, j)] = rng.complex_normal();
        }
    }
    h
}

/// Draws user positions and fading for `cfg`, scaling column `j` by the
/// square root of user `j`'s path loss.
pub fn generate_channel(cfg: &ScenarioConfig) -> Result<ChannelMatrix> {
    let mut rng = SeededRng::new(cfg.seed);
    let positions = sample_user_positions(cfg, &mut rng);
    let distances: Vec<f64> = positions.iter().map(|&p| distance(p, cfg.bs_position)).collect();
    let mut entries = rayleigh_fading(cfg.n_tx, cfg.n_users, &mut rng);
    for (j, &delta) in distances.iter().enumerate() {
        let scale = path_loss(delta, cfg.pathloss_t0_db, cfg.pathloss_exponent)?.sqrt();
        entries.column_mut(j).iter_mut().for_each(|h| *h *= scale);
    }
    let channel = ChannelMatrix {
        entries,
        user_distances: distances,
        user_positions: positions,
    };
    channel.check()?;
    Ok(channel)
}
