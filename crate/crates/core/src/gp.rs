//! Single-output Gaussian process regression with the exponential quadratic
//! kernel `k(x, x') = σ² exp(-Σ_i (x_i - x'_i)² / l_i)`.
//!
//! Lengthscales divide the squared distance directly (not `l_i²`). Targets
//! are standardized before fitting and predictions are returned in the
//! original units; the prior mean is zero in standardized units.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky, JitterPolicy, Matrix};
use crate::optim::{self, Bounds, LbfgsOptions};
use crate::rng::{self, RngState};
use crate::scalar::{c, to_f64, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams<T> {
    pub variance: T,
    pub lengthscales: Vec<T>,
}

impl<T: Scalar> KernelParams<T> {
    pub fn new(variance: T, lengthscales: Vec<T>) -> Result<Self> {
        if !(variance > T::zero()) || lengthscales.iter().any(|l| !(*l > T::zero())) {
            return Err(Error::config("kernel", "variance and lengthscales must be strictly positive"));
        }
        Ok(KernelParams { variance, lengthscales })
    }

    pub fn isotropic(variance: T, lengthscale: T, dim: usize) -> Self {
        KernelParams {
            variance,
            lengthscales: vec![lengthscale; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// `exp(-Σ (a_i - b_i)² / l_i)`, without the variance. No length checks.
    #[inline]
    pub(crate) fn correlation(&self, a: &[T], b: &[T]) -> T {
        let mut s = T::zero();
        for ((&x, &y), &l) in a.iter().zip(b).zip(&self.lengthscales) {
            let d = x - y;
            s = s + d * d / l;
        }
        (-s).exp()
    }

    /// Gram matrix `k(X_a, X_b)`.
    pub fn cross(&self, xa: &[Vec<T>], xb: &[Vec<T>]) -> Matrix<T> {
        Matrix::from_fn(xa.len(), xb.len(), |i, j| self.variance * self.correlation(&xa[i], &xb[j]))
    }
}

/// Kernel value `k(a, b)`.
pub fn kernel_eval<T: Scalar>(a: &[T], b: &[T], theta: &KernelParams<T>) -> Result<T> {
    if a.len() != theta.dim() || b.len() != theta.dim() {
        return Err(Error::DimensionMismatch {
            expected: theta.dim(),
            got: if a.len() != theta.dim() { a.len() } else { b.len() },
        });
    }
    Ok(theta.variance * theta.correlation(a, b))
}

fn check_inputs<T: Scalar>(x: &[Vec<T>], y: &[T], dim: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if let Some(bad) = x.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.len(),
        });
    }
    Ok(())
}

/// Factorization of a covariance matrix and `K⁻¹y`, plus the negative log
/// marginal likelihood. Shared by the single- and multi-output models.
#[derive(Clone, Debug)]
pub(crate) struct Factored<T> {
    pub chol: Cholesky<T>,
    pub alpha: Vec<T>,
    pub nll: T,
}

pub(crate) fn factor<T: Scalar>(cov: &Matrix<T>, y: &[T], jitter: JitterPolicy<T>) -> Result<Factored<T>> {
    let chol = Cholesky::factor_jittered(cov, jitter)?;
    let alpha = chol.solve(y);
    let n = y.len();
    let half = c::<T>(0.5);
    let nll = half * dot(y, &alpha) + half * chol.log_det() + c::<T>(0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln());
    if !nll.is_finite() {
        return Err(Error::numerical("non-finite likelihood"));
    }
    Ok(Factored { chol, alpha, nll })
}

impl<T: Scalar> Factored<T> {
    /// `½ (K⁻¹ - α αᵀ)`: the gradient of the negative log likelihood with
    /// respect to each covariance entry.
    pub fn grad_weights(&self) -> Matrix<T> {
        let mut w = self.chol.inverse();
        let n = self.alpha.len();
        let half = c::<T>(0.5);
        for i in 0..n {
            for j in 0..n {
                w[(i, j)] = half * (w[(i, j)] - self.alpha[i] * self.alpha[j]);
            }
        }
        w
    }
}

/// Log density of `y` under `N(0, K(X, X) + σ² I)`.
pub fn log_marginal_likelihood<T: Scalar>(x: &[Vec<T>], y: &[T], theta: &KernelParams<T>, noise: T) -> Result<T> {
    check_inputs(x, y, theta.dim())?;
    let mut k = theta.cross(x, x);
    k.add_diagonal(noise);
    Ok(-factor(&k, y, JitterPolicy::default())?.nll)
}

/// Target standardization `(y - mean) / scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer<T> {
    pub mean: T,
    pub scale: T,
}

impl<T: Scalar> Standardizer<T> {
    pub fn identity() -> Self {
        Standardizer {
            mean: T::zero(),
            scale: T::one(),
        }
    }

    pub fn fit(y: &[T]) -> Self {
        if y.is_empty() {
            return Self::identity();
        }
        let n = c::<T>(y.len() as f64);
        let mean = y.iter().copied().sum::<T>() / n;
        let var = y.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let sd = var.sqrt();
        let scale = if sd > T::epsilon() * mean.abs().max(T::one()) && sd.is_finite() { sd } else { T::one() };
        Standardizer { mean, scale }
    }

    pub fn apply(&self, y: &[T]) -> Vec<T> {
        y.iter().map(|&v| (v - self.mean) / self.scale).collect()
    }
}

/// Hyperparameter fitting options shared by the GP and LCM fitters.
#[derive(Clone, Debug)]
pub struct FitOptions {
    /// Random restarts (in addition to any warm start).
    pub restarts: usize,
    pub lengthscale_init: (f64, f64),
    pub lengthscale_bounds: (f64, f64),
    pub variance_bounds: (f64, f64),
    pub noise_init: f64,
    pub noise_floor: f64,
    pub noise_max: f64,
    pub standardize: bool,
    pub lbfgs: LbfgsOptions,
    pub seed: RngState,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            restarts: 10,
            lengthscale_init: (1e-2, 1e1),
            lengthscale_bounds: (1e-4, 1e3),
            variance_bounds: (1e-6, 1e3),
            noise_init: 1e-2,
            noise_floor: 1e-10,
            noise_max: 10.0,
            standardize: true,
            lbfgs: LbfgsOptions::default(),
            seed: RngState::new(0),
        }
    }
}

impl FitOptions {
    pub fn with_seed(mut self, seed: RngState) -> Self {
        self.seed = seed;
        self
    }

    /// Log-space starting point for restart `r`: `[log σ², log l_1.., log noise]`.
    pub(crate) fn kernel_start(&self, r: usize, dim: usize) -> Vec<f64> {
        let mut rng = self.seed.derive(r as u64).rng();
        let mut v = Vec::with_capacity(dim + 2);
        v.push(0.0);
        for _ in 0..dim {
            v.push(rng::log_uniform(&mut rng, self.lengthscale_init.0, self.lengthscale_init.1).ln());
        }
        v.push(self.noise_init.max(self.noise_floor).ln());
        v
    }

    pub(crate) fn kernel_bounds(&self, dim: usize) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![self.variance_bounds.0.ln()];
        let mut hi = vec![self.variance_bounds.1.ln()];
        lo.extend(std::iter::repeat_n(self.lengthscale_bounds.0.ln(), dim));
        hi.extend(std::iter::repeat_n(self.lengthscale_bounds.1.ln(), dim));
        lo.push(self.noise_floor.ln());
        hi.push(self.noise_max.ln());
        (lo, hi)
    }
}

/// Run L-BFGS from every start and keep the lowest objective.
pub(crate) fn multistart<T, F>(mut f: F, starts: Vec<Vec<f64>>, lo: &[f64], hi: &[f64], opts: &LbfgsOptions) -> Option<(Vec<T>, T)>
where
    T: Scalar,
    F: FnMut(&[T]) -> Option<(T, Vec<T>)>,
{
    let bounds = Bounds {
        lower: lo.iter().map(|&v| c(v)).collect(),
        upper: hi.iter().map(|&v| c(v)).collect(),
    };
    let mut best: Option<(Vec<T>, T)> = None;
    for s in starts {
        let x0: Vec<T> = s.iter().map(|&v| c(v)).collect();
        if let Some(m) = optim::minimize(&mut f, &x0, &bounds, opts) {
            if m.value.is_finite() && best.as_ref().is_none_or(|(_, v)| m.value < *v) {
                best = Some((m.x, m.value));
            }
        }
    }
    best
}

#[derive(Clone, Debug)]
pub struct GpModel<T> {
    x: Vec<Vec<T>>,
    y: Vec<T>,
    kernel: KernelParams<T>,
    noise: T,
    standardizer: Standardizer<T>,
    chol: Cholesky<T>,
    alpha: Vec<T>,
    seed: Option<RngState>,
}

/// Serializable state of a [`GpModel`]; the factorization is rebuilt on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpSnapshot<T> {
    pub x: Vec<Vec<T>>,
    pub y: Vec<T>,
    pub kernel: KernelParams<T>,
    pub noise: T,
    pub standardizer: Standardizer<T>,
    pub seed: Option<RngState>,
}

/// Covariance and its gradient pieces for log-space parameters.
fn gp_nll_grad<T: Scalar>(x: &[Vec<T>], y: &[T], p: &[T], jitter: JitterPolicy<T>) -> Option<(T, Vec<T>)> {
    let d = p.len() - 2;
    let variance = p[0].exp();
    let ls: Vec<T> = p[1..=d].iter().map(|v| v.exp()).collect();
    let noise = p[d + 1].exp();
    let kp = KernelParams { variance, lengthscales: ls };
    let n = x.len();
    let kf = kp.cross(x, x);
    let mut k = kf.clone();
    k.add_diagonal(noise);
    let f = factor(&k, y, jitter).ok()?;
    let w = f.grad_weights();
    let mut g = vec![T::zero(); d + 2];
    for i in 0..n {
        for j in 0..n {
            let wk = w[(i, j)] * kf[(i, j)];
            g[0] = g[0] + wk;
            for (dim, l) in kp.lengthscales.iter().enumerate() {
                let diff = x[i][dim] - x[j][dim];
                g[1 + dim] = g[1 + dim] + wk * diff * diff / *l;
            }
        }
        g[d + 1] = g[d + 1] + w[(i, i)] * noise;
    }
    Some((f.nll, g))
}

impl<T: Scalar> GpModel<T> {
    /// Condition on data with fixed hyperparameters.
    pub fn new(x: Vec<Vec<T>>, y: Vec<T>, kernel: KernelParams<T>, noise: T, standardize: bool) -> Result<Self> {
        let st = if standardize { Standardizer::fit(&y) } else { Standardizer::identity() };
        Self::with_standardizer(x, y, kernel, noise, st, None)
    }

    /// Model with no data.
    pub fn prior(kernel: KernelParams<T>, noise: T) -> Self {
        Self::new(Vec::new(), Vec::new(), kernel, noise, false).expect("empty factorization")
    }

    fn with_standardizer(
        x: Vec<Vec<T>>,
        y: Vec<T>,
        kernel: KernelParams<T>,
        noise: T,
        standardizer: Standardizer<T>,
        seed: Option<RngState>,
    ) -> Result<Self> {
        check_inputs(&x, &y, kernel.dim())?;
        let ys = standardizer.apply(&y);
        let mut k = kernel.cross(&x, &x);
        k.add_diagonal(noise);
        let f = factor(&k, &ys, JitterPolicy::default())?;
        Ok(GpModel {
            x,
            y,
            kernel,
            noise,
            standardizer,
            chol: f.chol,
            alpha: f.alpha,
            seed,
        })
    }

    pub fn kernel(&self) -> &KernelParams<T> {
        &self.kernel
    }

    pub fn noise(&self) -> T {
        self.noise
    }

    pub fn inputs(&self) -> &[Vec<T>] {
        &self.x
    }

    pub fn targets(&self) -> &[T] {
        &self.y
    }

    pub fn standardizer(&self) -> Standardizer<T> {
        self.standardizer
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Log marginal likelihood of the (standardized) training targets.
    pub fn log_likelihood(&self) -> T {
        let ys = self.standardizer.apply(&self.y);
        let n = ys.len();
        let half = c::<T>(0.5);
        -(half * dot(&ys, &self.alpha) + half * self.chol.log_det() + c::<T>(0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()))
    }

    /// Posterior mean and latent (noise-free) variance at `x`.
    pub fn predict(&self, x: &[T]) -> Result<(T, T)> {
        if x.len() != self.kernel.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.kernel.dim(),
                got: x.len(),
            });
        }
        let kx: Vec<T> = self.x.iter().map(|xi| self.kernel.variance * self.kernel.correlation(x, xi)).collect();
        let mean = dot(&kx, &self.alpha);
        let v = self.chol.solve_lower(&kx);
        let var = (self.kernel.variance - dot(&v, &v)).max(T::zero());
        let s = self.standardizer;
        Ok((s.mean + s.scale * mean, s.scale * s.scale * var))
    }

    pub fn snapshot(&self) -> GpSnapshot<T> {
        GpSnapshot {
            x: self.x.clone(),
            y: self.y.clone(),
            kernel: self.kernel.clone(),
            noise: self.noise,
            standardizer: self.standardizer,
            seed: self.seed,
        }
    }

    pub fn from_snapshot(s: GpSnapshot<T>) -> Result<Self> {
        Self::with_standardizer(s.x, s.y, s.kernel, s.noise, s.standardizer, s.seed)
    }
}

/// Posterior mean and variance of `model` at `x`.
pub fn gp_predict<T: Scalar>(model: &GpModel<T>, x: &[T]) -> Result<(T, T)> {
    model.predict(x)
}

/// Fit hyperparameters by multi-start L-BFGS on the log marginal likelihood.
pub fn fit_gp<T: Scalar>(x: Vec<Vec<T>>, y: Vec<T>, opts: &FitOptions) -> Result<GpModel<T>> {
    fit_gp_warm(x, y, opts, None)
}

/// As [`fit_gp`], additionally starting one run from `warm`.
pub fn fit_gp_warm<T: Scalar>(x: Vec<Vec<T>>, y: Vec<T>, opts: &FitOptions, warm: Option<(&KernelParams<T>, T)>) -> Result<GpModel<T>> {
    let dim = x.first().map_or(0, Vec::len);
    if x.len() < 2 {
        return Err(Error::InsufficientData(format!("a GP fit needs at least 2 points, got {}", x.len())));
    }
    if dim == 0 {
        return Err(Error::InsufficientData("inputs have no dimensions".into()));
    }
    check_inputs(&x, &y, dim)?;
    let st = if opts.standardize { Standardizer::fit(&y) } else { Standardizer::identity() };
    let ys = st.apply(&y);
    let mut starts = Vec::new();
    if let Some((k, noise)) = warm {
        let mut s = vec![to_f64(k.variance).ln()];
        s.extend(k.lengthscales.iter().map(|l| to_f64(*l).ln()));
        s.push(to_f64(noise).max(opts.noise_floor).ln());
        starts.push(s);
    }
    starts.extend((0..opts.restarts).map(|r| opts.kernel_start(r, dim)));
    let (lo, hi) = opts.kernel_bounds(dim);
    let jitter = JitterPolicy::default();
    let (p, _) = multistart(|p: &[T]| gp_nll_grad(&x, &ys, p, jitter), starts, &lo, &hi, &opts.lbfgs)
        .ok_or_else(|| Error::numerical("every hyperparameter restart failed"))?;
    let kernel = KernelParams {
        variance: p[0].exp(),
        lengthscales: p[1..=dim].iter().map(|v| v.exp()).collect(),
    };
    let noise = p[dim + 1].exp();
    GpModel::with_standardizer(x, y, kernel, noise, st, Some(opts.seed))
}
