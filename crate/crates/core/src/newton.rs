//! Symmetric Newton systems of the form `D + sum_k w_k v_k v_k' (+ dense)`.
//!
//! Barrier Hessians of the power-allocation problem are a positive diagonal
//! plus a few hundred rank-one terms over thousands of variables. When no
//! dense block is present and all weights are nonnegative the system is
//! solved through the Woodbury identity at `O(n r^2)` cost; anything else is
//! assembled densely, shifted until its smallest eigenvalue reaches the
//! requested floor, and factored.

use nalgebra::{DMatrix, DVector};

/// Above this size the eigenvalue shift is searched with trial Cholesky
/// factorizations instead of a full eigendecomposition.
const EIGEN_LIMIT: usize = 400;

const PCG_STEPS: usize = 30;

#[derive(Debug, Clone)]
pub(crate) struct NewtonSystem {
    diag: DVector<f64>,
    dense: Option<DMatrix<f64>>,
    factors: Vec<(f64, DVector<f64>)>,
}

#[derive(Debug, Clone)]
pub(crate) struct NewtonStep {
    pub direction: DVector<f64>,
    /// Multiple of the identity added to reach the eigenvalue floor.
    #[cfg_attr(not(test), allow(dead_code))]
    pub shift: f64,
}

impl NewtonSystem {
    pub fn new(n: usize) -> Self {
        Self {
            diag: DVector::zeros(n),
            dense: None,
            factors: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn add_diag(&mut self, i: usize, v: f64) {
        self.diag[i] += v;
    }

    pub fn add_dense(&mut self, m: &DMatrix<f64>, scale: f64) {
        match &mut self.dense {
            Some(d) => *d += m * scale,
            None => self.dense = Some(m * scale),
        }
    }

    pub fn add_rank_one(&mut self, weight: f64, v: DVector<f64>) {
        if weight != 0.0 {
            self.factors.push((weight, v));
        }
    }

    /// `M z` without forming `M`.
    pub fn apply(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut out = self.diag.component_mul(z);
        if let Some(d) = &self.dense {
            out += d * z;
        }
        for (w, v) in &self.factors {
            out.axpy(w * v.dot(z), v, 1.0);
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = self.dense.clone().unwrap_or_else(|| DMatrix::zeros(n, n));
        for i in 0..n {
            m[(i, i)] += self.diag[i];
        }
        for (w, v) in &self.factors {
            m.ger(*w, v, v, 1.0);
        }
        m
    }

    fn low_rank_applicable(&self) -> bool {
        self.dense.is_none()
            && self.diag.iter().all(|&d| d > 0.0 && d.is_finite())
            && self.factors.iter().all(|(w, _)| *w >= 0.0)
            // Dense is cheaper when the rank rivals the dimension.
            && self.factors.len() * 2 < self.dim()
    }

    pub fn solve(&self, rhs: &DVector<f64>, floor: f64) -> NewtonStep {
        if self.low_rank_applicable() {
            if let Some(direction) = self.woodbury(rhs) {
                return NewtonStep {
                    direction,
                    shift: 0.0,
                };
            }
        }
        self.solve_dense(rhs, floor)
    }

    fn woodbury(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let n = self.dim();
        let r = self.factors.len();
        // With S = D^{-1/2} and W = S V, M = S^{-1} (I + W W') S^{-1}. The thin
        // SVD W = U diag(sigma) Y' gives (I + W W')^{-1} = (I - U U') +
        // U diag(1 / (1 + sigma^2)) U' without squaring W.
        let s_half = self.diag.map(|d| 1.0 / d.sqrt());
        let w = DMatrix::from_fn(n, r, |i, k| {
            let (wk, f) = &self.factors[k];
            s_half[i] * f[i] * wk.sqrt()
        });
        let svd = w.svd(true, false);
        let u = svd.u?;
        let damp = svd.singular_values.map(|sv| 1.0 / (1.0 + sv * sv));
        let solve = |b: &DVector<f64>| {
            let bs = s_half.component_mul(b);
            let coef = u.transpose() * &bs;
            let mut out = &bs - &u * &coef;
            // Second projection: rounding leaves a residue in range(U) that the
            // large singular values would amplify.
            out -= &u * (u.transpose() * &out);
            out += &u * coef.component_mul(&damp);
            s_half.component_mul(&out)
        };
        let norm_m = self.diag.amax() + self.factors.iter().map(|(w, f)| w * f.norm_squared()).sum::<f64>();
        // Preconditioned conjugate gradients polish the rounding error; a
        // solve that still misses hands over to the dense factorization.
        let mut z = solve(rhs);
        let mut r_vec = rhs - self.apply(&z);
        let mut s_vec = solve(&r_vec);
        let mut d = s_vec.clone();
        let mut rs = r_vec.dot(&s_vec);
        let mut resid = r_vec.norm();
        for _ in 0..PCG_STEPS {
            if resid <= 1e-10 * (norm_m * z.norm() + rhs.norm()) {
                break;
            }
            let md = self.apply(&d);
            let curv = d.dot(&md);
            if !(curv > 0.0) || !(rs > 0.0) {
                break;
            }
            let alpha = rs / curv;
            z.axpy(alpha, &d, 1.0);
            r_vec.axpy(-alpha, &md, 1.0);
            s_vec = solve(&r_vec);
            let rs_next = r_vec.dot(&s_vec);
            d = &s_vec + &d * (rs_next / rs);
            rs = rs_next;
            resid = r_vec.norm();
        }
        let resid = (rhs - self.apply(&z)).norm();
        let backward = resid <= 1e-10 * (norm_m * z.norm() + rhs.norm());
        let ok = z.iter().all(|x| x.is_finite()) && backward && z.dot(rhs) > 0.0;
        ok.then_some(z)
    }

    fn solve_dense(&self, rhs: &DVector<f64>, floor: f64) -> NewtonStep {
        let n = self.dim();
        let m = self.to_dense();
        let scale = m.amax().max(1.0);
        let mut shift = 0.0;
        if n <= EIGEN_LIMIT {
            let min_eig = m.clone().symmetric_eigenvalues().min();
            if min_eig < floor {
                shift = floor - min_eig;
            }
        } else {
            let mut trial = 0.0;
            loop {
                let shifted = &m + DMatrix::identity(n, n) * (trial + floor);
                if shifted.cholesky().is_some() {
                    shift = trial + floor;
                    break;
                }
                trial = if trial == 0.0 { 1e-8 * scale } else { trial * 10.0 };
            }
        }
        let mut shifted = m;
        for i in 0..n {
            shifted[(i, i)] += shift;
        }
        let direction = match shifted.clone().cholesky() {
            Some(chol) => chol.solve(rhs),
            None => {
                // Rounding left the shifted matrix marginally indefinite.
                let extra = 1e-12 * scale;
                for i in 0..n {
                    shifted[(i, i)] += extra;
                }
                shift += extra;
                shifted
                    .clone()
                    .cholesky()
                    .map(|c| c.solve(rhs))
                    .or_else(|| shifted.lu().solve(rhs))
                    .unwrap_or_else(|| rhs / scale)
            }
        };
        NewtonStep { direction, shift }
    }
}
