//! Robust adaptive random-walk Metropolis transition kernel.
//!
//! Proposals are `z' = z + S u` with `u` standard normal and `S` a
//! lower-triangular scale factor. After every proposal the factor receives a
//! rank-one update steering the long-run acceptance probability toward the
//! target rate; the update weight decays like `min(1, d n^{-2/3})`, so the
//! chain is ergodic for the fixed target.

use rand::Rng;
use rand_distr::StandardNormal;

use super::LogDensity;

/// Dense lower-triangular matrix with a strictly positive diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerTriangular {
    n: usize,
    // row-major n x n, entries above the diagonal stay zero
    data: Vec<f64>,
}

impl LowerTriangular {
    pub fn scaled_identity(n: usize, scale: f64) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = scale;
        }
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.at(i, i)).collect()
    }

    /// `L u`.
    pub fn matvec(&self, u: &[f64]) -> Vec<f64> {
        debug_assert_eq!(u.len(), self.n);
        (0..self.n)
            .map(|i| (0..=i).map(|j| self.at(i, j) * u[j]).sum())
            .collect()
    }

    /// `L L^T` as a dense row-major matrix.
    pub fn gram(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..=i.min(j) {
                    acc += self.at(i, k) * self.at(j, k);
                }
                out[i * n + j] = acc;
            }
        }
        out
    }

    /// Cholesky factor of a dense symmetric positive-definite matrix.
    pub fn cholesky(matrix: &[f64], n: usize) -> Option<Self> {
        let mut l = Self { n, data: vec![0.0; n * n] };
        for i in 0..n {
            for j in 0..=i {
                let mut acc = matrix[i * n + j];
                for k in 0..j {
                    acc -= l.at(i, k) * l.at(j, k);
                }
                if i == j {
                    if acc <= 0.0 || !acc.is_finite() {
                        return None;
                    }
                    *l.at_mut(i, j) = acc.sqrt();
                } else {
                    *l.at_mut(i, j) = acc / l.at(j, j);
                }
            }
        }
        Some(l)
    }

    /// In-place rank-one update (`sign = +1`) or downdate (`sign = -1`) of
    /// the factor: afterwards `L L^T` equals the old value plus
    /// `sign * v v^T`. Fails without modifying guarantees when a downdate
    /// loses positive-definiteness numerically.
    pub fn rank_one(&mut self, v: &[f64], sign: f64) -> Result<(), ()> {
        debug_assert_eq!(v.len(), self.n);
        let n = self.n;
        let mut work = v.to_vec();
        for k in 0..n {
            let lkk = self.at(k, k);
            let d2 = lkk * lkk + sign * work[k] * work[k];
            if d2 <= 0.0 || !d2.is_finite() {
                return Err(());
            }
            let r = d2.sqrt();
            let c = r / lkk;
            let s = work[k] / lkk;
            *self.at_mut(k, k) = r;
            for i in k + 1..n {
                let lik = (self.at(i, k) + sign * s * work[i]) / c;
                *self.at_mut(i, k) = lik;
                work[i] = c * work[i] - s * lik;
            }
        }
        Ok(())
    }
}

/// Tuning constants of the adaptive kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RamOptions {
    /// Long-run acceptance rate the adaptation steers toward.
    pub target_accept: f64,
    /// Initial proposal scale: `S_0 = initial_scale * I`.
    pub initial_scale: f64,
    /// Decay exponent of the adaptation weight `min(1, d n^-exponent)`.
    pub decay_exponent: f64,
    /// Disable to freeze the proposal shape (plain Metropolis).
    pub adapt: bool,
}

impl Default for RamOptions {
    fn default() -> Self {
        Self { target_accept: 0.234, initial_scale: 0.1, decay_exponent: 2.0 / 3.0, adapt: true }
    }
}

/// Mutable kernel state for one chain.
#[derive(Debug, Clone)]
pub struct RamState {
    pub z: Vec<f64>,
    pub log_post: f64,
    scale: LowerTriangular,
    pub iter: u64,
    pub accept_count: u64,
    /// Times the rank-one update failed and the factor was rebuilt with a
    /// jittered re-factorisation.
    pub chol_rebuilds: u64,
}

impl RamState {
    pub fn new(z: Vec<f64>, log_post: f64, opts: &RamOptions) -> Self {
        let scale = LowerTriangular::scaled_identity(z.len(), opts.initial_scale);
        Self { z, log_post, scale, iter: 0, accept_count: 0, chol_rebuilds: 0 }
    }

    pub fn scale(&self) -> &LowerTriangular {
        &self.scale
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.iter == 0 {
            0.0
        } else {
            self.accept_count as f64 / self.iter as f64
        }
    }
}

/// Advance the chain by one proposal, adapting the scale factor in place.
pub fn ram_step<T, R>(state: &mut RamState, target: &T, rng: &mut R, opts: &RamOptions)
where
    T: LogDensity + ?Sized,
    R: Rng,
{
    let d = state.z.len();
    let u: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let step = state.scale.matvec(&u);
    let proposal: Vec<f64> = state.z.iter().zip(&step).map(|(zi, si)| zi + si).collect();
    let lp_new = target.log_density(&proposal);

    let alpha = if state.log_post == f64::NEG_INFINITY {
        // initialization edge: escape as soon as any finite density appears
        if lp_new > f64::NEG_INFINITY {
            1.0
        } else {
            0.0
        }
    } else {
        let log_ratio = lp_new - state.log_post;
        if log_ratio >= 0.0 {
            1.0
        } else {
            log_ratio.exp()
        }
    };

    let accept = alpha >= 1.0 || rng.gen::<f64>() < alpha;
    state.iter += 1;
    if accept {
        state.z = proposal;
        state.log_post = lp_new;
        state.accept_count += 1;
    }

    if opts.adapt {
        let eta = 1.0f64.min(d as f64 * (state.iter as f64).powf(-opts.decay_exponent));
        let c = eta * (alpha - opts.target_accept);
        let u_norm_sq: f64 = u.iter().map(|x| x * x).sum();
        if c != 0.0 && u_norm_sq > 0.0 {
            let w_scale = (c.abs() / u_norm_sq).sqrt();
            let w: Vec<f64> = step.iter().map(|s| s * w_scale).collect();
            if state.scale.rank_one(&w, c.signum()).is_err() {
                rebuild_jittered(&mut state.scale, &w, c.signum());
                state.chol_rebuilds += 1;
            }
        }
    }
}

/// Recover the factor from `S S^T + sign w w^T` with growing diagonal jitter.
fn rebuild_jittered(scale: &mut LowerTriangular, w: &[f64], sign: f64) {
    let n = scale.dim();
    let mut gram = scale.gram();
    for i in 0..n {
        for j in 0..n {
            gram[i * n + j] += sign * w[i] * w[j];
        }
    }
    let trace: f64 = (0..n).map(|i| gram[i * n + i]).sum();
    let mut jitter = 1e-12 * (trace / n as f64).abs().max(1e-12);
    for _ in 0..64 {
        let mut jittered = gram.clone();
        for i in 0..n {
            jittered[i * n + i] += jitter;
        }
        if let Some(l) = LowerTriangular::cholesky(&jittered, n) {
            *scale = l;
            return;
        }
        jitter *= 10.0;
    }
    // ultimate fallback: keep the previous factor
}
