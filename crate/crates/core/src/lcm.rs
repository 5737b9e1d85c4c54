//! Linear coregionalization model over several tasks.
//!
//! Task `i` is modelled as `f_i = Σ_q W_q[i] u_q` with independent latent
//! GPs `u_q`. Data are stacked task-major and may differ between tasks
//! (heterotropic), so the covariance is assembled block-wise:
//!
//! ```text
//! block(i, i') = Σ_q W_q[i] W_q[i'] k_q(X_i, X_i') + [i = i'] D_i I
//! ```
//!
//! which equals `Σ_q B_q ⊗ k_q(X, X) + D ⊗ I` with `B_q = W_q W_qᵀ` when all
//! tasks share the same inputs.
//!
//! Fitting learns `W`, the latent lengthscales and `D` with `σ_q² = 1`
//! (the scale of `u_q` is not identifiable separately from `W_q`). With a
//! single task and a single latent function the model is pinned to `W = [1]`
//! and learns `σ²` instead, which makes it the plain GP of [`crate::gp`].

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{self, FitOptions, KernelParams, Standardizer};
use crate::linalg::{dot, Cholesky, JitterPolicy, Matrix};
use crate::optim::{self, Bounds};
use crate::rng::{self, RngState};
use crate::scalar::{c, to_f64, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LcmHyper<T> {
    /// One kernel per latent function.
    pub kernels: Vec<KernelParams<T>>,
    /// `w[q][i]`: weight of latent `q` in task `i`.
    pub w: Vec<Vec<T>>,
    /// Per-task noise.
    pub d: Vec<T>,
}

impl<T: Scalar> LcmHyper<T> {
    pub fn latents(&self) -> usize {
        self.kernels.len()
    }

    pub fn tasks(&self) -> usize {
        self.d.len()
    }

    pub fn validate(&self) -> Result<()> {
        let q = self.kernels.len();
        if q == 0 || self.w.len() != q {
            return Err(Error::DimensionMismatch {
                expected: q.max(1),
                got: self.w.len(),
            });
        }
        if let Some(bad) = self.w.iter().find(|w| w.len() != self.d.len()) {
            return Err(Error::DimensionMismatch {
                expected: self.d.len(),
                got: bad.len(),
            });
        }
        Ok(())
    }

    /// `B_q = W_q W_qᵀ`.
    pub fn coregionalization(&self, q: usize) -> Matrix<T> {
        let w = &self.w[q];
        Matrix::from_fn(w.len(), w.len(), |i, j| w[i] * w[j])
    }

    /// Same marginal covariance per task but no cross-task covariance:
    /// latent `(q, i)` has kernel `k_q` and weight `W_q[i]` on task `i` only.
    pub fn decoupled(&self) -> Self {
        let n = self.tasks();
        let mut kernels = Vec::new();
        let mut w = Vec::new();
        for (k, wq) in self.kernels.iter().zip(&self.w) {
            for i in 0..n {
                kernels.push(k.clone());
                let mut row = vec![T::zero(); n];
                row[i] = wq[i];
                w.push(row);
            }
        }
        LcmHyper { kernels, w, d: self.d.clone() }
    }

    /// Prior variance of task `i`'s latent function.
    fn prior_variance(&self, i: usize) -> T {
        let mut s = T::zero();
        for (k, w) in self.kernels.iter().zip(&self.w) {
            s = s + w[i] * w[i] * k.variance;
        }
        s
    }
}

/// Row ranges of each task in the stacked system.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskBlockIndex {
    offsets: Vec<usize>,
}

impl TaskBlockIndex {
    pub fn from_sizes(sizes: impl IntoIterator<Item = usize>) -> Self {
        let mut offsets = vec![0];
        for s in sizes {
            let last = *offsets.last().expect("non-empty");
            offsets.push(last + s);
        }
        TaskBlockIndex { offsets }
    }

    pub fn tasks(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn range(&self, task: usize) -> Range<usize> {
        self.offsets[task]..self.offsets[task + 1]
    }

    pub fn total(&self) -> usize {
        *self.offsets.last().expect("non-empty")
    }

    /// Task owning each stacked row.
    pub fn row_tasks(&self) -> Vec<usize> {
        (0..self.tasks()).flat_map(|t| self.range(t).map(move |_| t)).collect()
    }
}

fn stack<T: Clone>(parts: &[Vec<T>]) -> Vec<T> {
    parts.iter().flatten().cloned().collect()
}

/// Stacked covariance of the heterotropic data `x[task][point]`.
pub fn assemble_cov<T: Scalar>(x: &[Vec<Vec<T>>], hyper: &LcmHyper<T>) -> Result<Matrix<T>> {
    hyper.validate()?;
    if x.len() != hyper.tasks() {
        return Err(Error::DimensionMismatch {
            expected: hyper.tasks(),
            got: x.len(),
        });
    }
    let pts = stack(x);
    let rows = TaskBlockIndex::from_sizes(x.iter().map(Vec::len)).row_tasks();
    Ok(cov_from(&pts, &rows, hyper))
}

fn cov_from<T: Scalar>(pts: &[Vec<T>], rows: &[usize], hyper: &LcmHyper<T>) -> Matrix<T> {
    let n = pts.len();
    let mut k = Matrix::zeros(n, n);
    for (kq, wq) in hyper.kernels.iter().zip(&hyper.w) {
        for i in 0..n {
            for j in 0..=i {
                let v = (wq[rows[i]] * wq[rows[j]]) * (kq.variance * kq.correlation(&pts[i], &pts[j]));
                k[(i, j)] = k[(i, j)] + v;
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            k[(j, i)] = k[(i, j)];
        }
        k[(i, i)] = k[(i, i)] + hyper.d[rows[i]];
    }
    k
}

fn standardized<T: Scalar>(y: &[Vec<T>], standardize: bool) -> (Vec<Standardizer<T>>, Vec<T>) {
    let st: Vec<Standardizer<T>> = y
        .iter()
        .map(|yi| if standardize { Standardizer::fit(yi) } else { Standardizer::identity() })
        .collect();
    let ys = y.iter().zip(&st).flat_map(|(yi, s)| s.apply(yi)).collect();
    (st, ys)
}

/// Log marginal likelihood of the stacked data (targets as given).
pub fn lcm_likelihood<T: Scalar>(x: &[Vec<Vec<T>>], y: &[Vec<T>], hyper: &LcmHyper<T>) -> Result<T> {
    check_data(x, y)?;
    let k = assemble_cov(x, hyper)?;
    Ok(-gp::factor(&k, &stack(y), JitterPolicy::default())?.nll)
}

fn check_data<T: Scalar>(x: &[Vec<Vec<T>>], y: &[Vec<T>]) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let dim = x.iter().flatten().next().map_or(0, Vec::len);
    for (xi, yi) in x.iter().zip(y) {
        if xi.len() != yi.len() {
            return Err(Error::DimensionMismatch {
                expected: xi.len(),
                got: yi.len(),
            });
        }
        if let Some(p) = xi.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
        }
    }
    Ok(dim)
}

/// Layout of the free parameter vector for the general (unpinned) case:
/// `[log l_q,k for q, k] ++ [W_q[i] for q, i] ++ [log D_i for i]`.
struct Layout {
    q: usize,
    tasks: usize,
    dim: usize,
}

impl Layout {
    fn len(&self) -> usize {
        self.q * self.dim + self.q * self.tasks + self.tasks
    }

    fn w_at(&self, q: usize, i: usize) -> usize {
        self.q * self.dim + q * self.tasks + i
    }

    fn d_at(&self, i: usize) -> usize {
        self.q * self.dim + self.q * self.tasks + i
    }

    fn unpack<T: Scalar>(&self, p: &[T]) -> LcmHyper<T> {
        LcmHyper {
            kernels: (0..self.q)
                .map(|q| KernelParams {
                    variance: T::one(),
                    lengthscales: p[q * self.dim..(q + 1) * self.dim].iter().map(|v| v.exp()).collect(),
                })
                .collect(),
            w: (0..self.q).map(|q| (0..self.tasks).map(|i| p[self.w_at(q, i)]).collect()).collect(),
            d: (0..self.tasks).map(|i| p[self.d_at(i)].exp()).collect(),
        }
    }

    /// Inverse of `unpack`; kernel variances are folded into `W`.
    fn pack<T: Scalar>(&self, h: &LcmHyper<T>) -> Vec<f64> {
        let mut p = vec![0.0; self.len()];
        for q in 0..self.q {
            for k in 0..self.dim {
                p[q * self.dim + k] = to_f64(h.kernels[q].lengthscales[k]).ln();
            }
            let s = to_f64(h.kernels[q].variance).sqrt();
            for i in 0..self.tasks {
                p[self.w_at(q, i)] = to_f64(h.w[q][i]) * s;
            }
        }
        for i in 0..self.tasks {
            p[self.d_at(i)] = to_f64(h.d[i]).ln();
        }
        p
    }
}

fn lcm_nll_grad<T: Scalar>(pts: &[Vec<T>], rows: &[usize], y: &[T], layout: &Layout, p: &[T]) -> Option<(T, Vec<T>)> {
    let h = layout.unpack(p);
    let n = pts.len();
    let corr: Vec<Matrix<T>> = h
        .kernels
        .iter()
        .map(|k| {
            let mut m = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..=i {
                    let v = k.correlation(&pts[i], &pts[j]);
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
            m
        })
        .collect();
    let mut k = Matrix::zeros(n, n);
    for (cq, wq) in corr.iter().zip(&h.w) {
        for i in 0..n {
            for j in 0..n {
                k[(i, j)] = k[(i, j)] + wq[rows[i]] * wq[rows[j]] * cq[(i, j)];
            }
        }
    }
    for i in 0..n {
        k[(i, i)] = k[(i, i)] + h.d[rows[i]];
    }
    let f = gp::factor(&k, y, JitterPolicy::default()).ok()?;
    let g_k = f.grad_weights();
    let two = c::<T>(2.0);
    let mut g = vec![T::zero(); layout.len()];
    for (q, (cq, wq)) in corr.iter().zip(&h.w).enumerate() {
        let ls = &h.kernels[q].lengthscales;
        for i in 0..n {
            let ti = rows[i];
            let mut dw = T::zero();
            for j in 0..n {
                let gc = g_k[(i, j)] * cq[(i, j)];
                dw = dw + gc * wq[rows[j]];
                let wgc = gc * wq[ti] * wq[rows[j]];
                for (dim, l) in ls.iter().enumerate() {
                    let diff = pts[i][dim] - pts[j][dim];
                    g[q * layout.dim + dim] = g[q * layout.dim + dim] + wgc * diff * diff / *l;
                }
            }
            let at = layout.w_at(q, ti);
            g[at] = g[at] + two * dw;
        }
    }
    for i in 0..n {
        let at = layout.d_at(rows[i]);
        g[at] = g[at] + g_k[(i, i)] * h.d[rows[i]];
    }
    Some((f.nll, g))
}

#[derive(Clone, Debug)]
pub struct LcmModel<T> {
    tasks: Vec<Vec<f64>>,
    x: Vec<Vec<Vec<T>>>,
    y: Vec<Vec<T>>,
    hyper: LcmHyper<T>,
    standardizers: Vec<Standardizer<T>>,
    index: TaskBlockIndex,
    pts: Vec<Vec<T>>,
    rows: Vec<usize>,
    chol: Cholesky<T>,
    alpha: Vec<T>,
}

/// Full model state, including the factor so reloads reproduce predictions
/// exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LcmSnapshot<T> {
    pub tasks: Vec<Vec<f64>>,
    pub x: Vec<Vec<Vec<T>>>,
    pub y: Vec<Vec<T>>,
    pub hyper: LcmHyper<T>,
    pub standardizers: Vec<Standardizer<T>>,
    pub factor: Cholesky<T>,
}

/// Options for [`extend_model`].
#[derive(Clone, Debug)]
pub struct ExtendOptions {
    pub restarts: usize,
    pub noise_init: f64,
    pub noise_floor: f64,
    pub noise_max: f64,
    pub weight_bound: f64,
    pub standardize: bool,
    pub lbfgs: optim::LbfgsOptions,
    pub seed: RngState,
}

impl Default for ExtendOptions {
    fn default() -> Self {
        ExtendOptions {
            restarts: 5,
            noise_init: 1e-2,
            noise_floor: 1e-10,
            noise_max: 10.0,
            weight_bound: 20.0,
            standardize: true,
            lbfgs: optim::LbfgsOptions::default(),
            seed: RngState::new(0),
        }
    }
}

const WEIGHT_BOUND: f64 = 20.0;

impl<T: Scalar> LcmModel<T> {
    /// Condition on data with fixed hyperparameters.
    pub fn new(tasks: Vec<Vec<f64>>, x: Vec<Vec<Vec<T>>>, y: Vec<Vec<T>>, hyper: LcmHyper<T>, standardize: bool) -> Result<Self> {
        let (st, _) = standardized(&y, standardize);
        Self::build(tasks, x, y, hyper, st)
    }

    fn build(tasks: Vec<Vec<f64>>, x: Vec<Vec<Vec<T>>>, y: Vec<Vec<T>>, hyper: LcmHyper<T>, standardizers: Vec<Standardizer<T>>) -> Result<Self> {
        check_data(&x, &y)?;
        let k = assemble_cov(&x, &hyper)?;
        let ys: Vec<T> = y.iter().zip(&standardizers).flat_map(|(yi, s)| s.apply(yi)).collect();
        let f = gp::factor(&k, &ys, JitterPolicy::default())?;
        Self::from_factor(tasks, x, y, hyper, standardizers, f.chol)
    }

    fn from_factor(
        tasks: Vec<Vec<f64>>,
        x: Vec<Vec<Vec<T>>>,
        y: Vec<Vec<T>>,
        hyper: LcmHyper<T>,
        standardizers: Vec<Standardizer<T>>,
        chol: Cholesky<T>,
    ) -> Result<Self> {
        let index = TaskBlockIndex::from_sizes(x.iter().map(Vec::len));
        if tasks.len() != x.len() || standardizers.len() != x.len() || chol.dim() != index.total() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: tasks.len(),
            });
        }
        let ys: Vec<T> = y.iter().zip(&standardizers).flat_map(|(yi, s)| s.apply(yi)).collect();
        let alpha = chol.solve(&ys);
        let rows = index.row_tasks();
        let pts = stack(&x);
        Ok(LcmModel {
            tasks,
            x,
            y,
            hyper,
            standardizers,
            index,
            pts,
            rows,
            chol,
            alpha,
        })
    }

    pub fn hyper(&self) -> &LcmHyper<T> {
        &self.hyper
    }

    pub fn tasks(&self) -> &[Vec<f64>] {
        &self.tasks
    }

    pub fn task_count(&self) -> usize {
        self.x.len()
    }

    pub fn inputs(&self, task: usize) -> &[Vec<T>] {
        &self.x[task]
    }

    pub fn targets(&self, task: usize) -> &[T] {
        &self.y[task]
    }

    pub fn index(&self) -> &TaskBlockIndex {
        &self.index
    }

    pub fn factor(&self) -> &Cholesky<T> {
        &self.chol
    }

    pub fn standardizers(&self) -> &[Standardizer<T>] {
        &self.standardizers
    }

    /// Log marginal likelihood of the standardized stacked targets, from the
    /// cached factor.
    pub fn log_likelihood(&self) -> T {
        let ys: Vec<T> = self.y.iter().zip(&self.standardizers).flat_map(|(yi, s)| s.apply(yi)).collect();
        let n = ys.len();
        let half = c::<T>(0.5);
        -(half * dot(&ys, &self.alpha) + half * self.chol.log_det() + c::<T>(0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()))
    }

    /// Posterior mean and latent (noise-free) variance of task `task` at `x`.
    pub fn predict(&self, task: usize, x: &[T]) -> Result<(T, T)> {
        if task >= self.task_count() {
            return Err(Error::TaskMismatch(format!("task index {task} out of range ({} tasks)", self.task_count())));
        }
        let dim = self.hyper.kernels[0].dim();
        if x.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: x.len() });
        }
        let mut kx = vec![T::zero(); self.pts.len()];
        for (kq, wq) in self.hyper.kernels.iter().zip(&self.hyper.w) {
            for (j, p) in self.pts.iter().enumerate() {
                kx[j] = kx[j] + (wq[task] * wq[self.rows[j]]) * (kq.variance * kq.correlation(x, p));
            }
        }
        let mean = dot(&kx, &self.alpha);
        let v = self.chol.solve_lower(&kx);
        let var = (self.hyper.prior_variance(task) - dot(&v, &v)).max(T::zero());
        let s = self.standardizers[task];
        Ok((s.mean + s.scale * mean, s.scale * s.scale * var))
    }

    pub fn snapshot(&self) -> LcmSnapshot<T> {
        LcmSnapshot {
            tasks: self.tasks.clone(),
            x: self.x.clone(),
            y: self.y.clone(),
            hyper: self.hyper.clone(),
            standardizers: self.standardizers.clone(),
            factor: self.chol.clone(),
        }
    }

    pub fn from_snapshot(s: LcmSnapshot<T>) -> Result<Self> {
        Self::from_factor(s.tasks, s.x, s.y, s.hyper, s.standardizers, s.factor)
    }
}

/// Posterior mean and variance for task `task` at `x`.
pub fn lcm_predict<T: Scalar>(model: &LcmModel<T>, task: usize, x: &[T]) -> Result<(T, T)> {
    model.predict(task, x)
}

/// Fit an LCM with `q` latent functions by multi-start L-BFGS. `warm`, when
/// given, adds one start at those hyperparameters.
pub fn fit_lcm<T: Scalar>(
    tasks: Vec<Vec<f64>>,
    x: Vec<Vec<Vec<T>>>,
    y: Vec<Vec<T>>,
    q: usize,
    opts: &FitOptions,
    warm: Option<&LcmHyper<T>>,
) -> Result<LcmModel<T>> {
    let dim = check_data(&x, &y)?;
    if x.is_empty() || q == 0 {
        return Err(Error::config("latents", "need at least one task and one latent function"));
    }
    if tasks.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: tasks.len(),
        });
    }
    let total: usize = x.iter().map(Vec::len).sum();
    if total < 2 || dim == 0 {
        return Err(Error::InsufficientData(format!("an LCM fit needs at least 2 points, got {total}")));
    }
    if let Some(h) = warm {
        if h.latents() != q || h.tasks() != x.len() {
            return Err(Error::DimensionMismatch {
                expected: q,
                got: h.latents(),
            });
        }
    }
    let (st, ys) = standardized(&y, opts.standardize);
    let pts = stack(&x);
    let rows = TaskBlockIndex::from_sizes(x.iter().map(Vec::len)).row_tasks();

    let hyper = if x.len() == 1 && q == 1 {
        // pinned: identical parametrization and restarts to the plain GP
        let warm_gp = warm.map(|h| (&h.kernels[0], h.d[0]));
        let gp = gp::fit_gp_warm(pts.clone(), ys.clone(), &FitOptions { standardize: false, ..opts.clone() }, warm_gp)?;
        LcmHyper {
            kernels: vec![gp.kernel().clone()],
            w: vec![vec![T::one()]],
            d: vec![gp.noise()],
        }
    } else {
        let layout = Layout { q, tasks: x.len(), dim };
        let mut starts = Vec::new();
        if let Some(h) = warm {
            starts.push(layout.pack(h));
        }
        for r in 0..opts.restarts {
            let mut rng = opts.seed.derive(r as u64).rng();
            let mut p = vec![0.0; layout.len()];
            for v in p.iter_mut().take(q * dim) {
                *v = rng::log_uniform(&mut rng, opts.lengthscale_init.0, opts.lengthscale_init.1).ln();
            }
            for qq in 0..q {
                for i in 0..layout.tasks {
                    p[layout.w_at(qq, i)] = rng::standard_normal(&mut rng);
                }
            }
            for i in 0..layout.tasks {
                p[layout.d_at(i)] = opts.noise_init.max(opts.noise_floor).ln();
            }
            starts.push(p);
        }
        let mut lo = vec![opts.lengthscale_bounds.0.ln(); q * dim];
        let mut hi = vec![opts.lengthscale_bounds.1.ln(); q * dim];
        lo.extend(std::iter::repeat_n(-WEIGHT_BOUND, q * layout.tasks));
        hi.extend(std::iter::repeat_n(WEIGHT_BOUND, q * layout.tasks));
        lo.extend(std::iter::repeat_n(opts.noise_floor.ln(), layout.tasks));
        hi.extend(std::iter::repeat_n(opts.noise_max.ln(), layout.tasks));
        let (p, _) = gp::multistart(|p: &[T]| lcm_nll_grad(&pts, &rows, &ys, &layout, p), starts, &lo, &hi, &opts.lbfgs)
            .ok_or_else(|| Error::numerical("every LCM hyperparameter restart failed"))?;
        layout.unpack(&p)
    };
    LcmModel::build(tasks, x, y, hyper, st)
}

/// Add a task to a fitted model. Only the new task's weights `W_q[δ]` and
/// noise `D_δ` are optimized; everything else is copied bit for bit, and the
/// factor is extended by a bordered Cholesky append.
pub fn extend_model<T: Scalar>(
    model: &LcmModel<T>,
    task: Vec<f64>,
    x_new: Vec<Vec<T>>,
    y_new: Vec<T>,
    opts: &ExtendOptions,
    warm: Option<(&[T], T)>,
) -> Result<LcmModel<T>> {
    if x_new.is_empty() {
        return Err(Error::InsufficientData("the new task has no observations".into()));
    }
    let dim = model.hyper.kernels[0].dim();
    check_data(&[x_new.clone()], &[y_new.clone()])?;
    if x_new[0].len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: x_new[0].len(),
        });
    }
    let nq = model.hyper.latents();
    let n = model.pts.len();
    let m = x_new.len();
    let st = if opts.standardize { Standardizer::fit(&y_new) } else { Standardizer::identity() };
    let y2 = st.apply(&y_new);
    let y_old: Vec<T> = model.y.iter().zip(&model.standardizers).flat_map(|(yi, s)| s.apply(yi)).collect();
    let z1 = model.chol.solve_lower(&y_old);
    let quad1 = dot(&z1, &z1);
    let logdet1 = model.chol.log_det();

    // L⁻¹ B_q with B_q[j, k] = W_q[t_j] σ_q² k_q(x_j, x*_k); the border is Σ_q w_q P_q.
    let p_q: Vec<Matrix<T>> = (0..nq)
        .map(|q| {
            let kq = &model.hyper.kernels[q];
            let wq = &model.hyper.w[q];
            let b = Matrix::from_fn(n, m, |j, k| wq[model.rows[j]] * kq.variance * kq.correlation(&model.pts[j], &x_new[k]));
            model.chol.solve_lower_matrix(&b)
        })
        .collect();
    let c_q: Vec<Matrix<T>> = model.hyper.kernels.iter().map(|k| k.cross(&x_new, &x_new)).collect();
    let jitter = JitterPolicy::default();
    let half = c::<T>(0.5);
    let log2pi = c::<T>((2.0 * std::f64::consts::PI).ln());
    let total = c::<T>((n + m) as f64);

    // params: [w_0..w_{Q-1}, log D]
    let objective = |p: &[T]| -> Option<T> {
        let d = p[nq].exp();
        let mut l21t: Matrix<T> = Matrix::zeros(n, m);
        for (q, pq) in p_q.iter().enumerate() {
            let w = p[q];
            for j in 0..n {
                for k in 0..m {
                    l21t[(j, k)] = l21t[(j, k)] + w * pq[(j, k)];
                }
            }
        }
        let mut s: Matrix<T> = Matrix::zeros(m, m);
        for (q, cq) in c_q.iter().enumerate() {
            let ww = p[q] * p[q];
            for a in 0..m {
                for b in 0..m {
                    s[(a, b)] = s[(a, b)] + ww * cq[(a, b)];
                }
            }
        }
        for a in 0..m {
            s[(a, a)] = s[(a, a)] + d;
            for b in 0..=a {
                let mut acc = T::zero();
                for j in 0..n {
                    acc = acc + l21t[(j, a)] * l21t[(j, b)];
                }
                s[(a, b)] = s[(a, b)] - acc;
                if b != a {
                    s[(b, a)] = s[(a, b)];
                }
            }
        }
        let l22 = Cholesky::factor_jittered(&s, jitter).ok()?;
        // r = y2 - L21 z1
        let r: Vec<T> = (0..m).map(|k| y2[k] - (0..n).map(|j| l21t[(j, k)] * z1[j]).sum::<T>()).collect();
        let z2 = l22.solve_lower(&r);
        let nll = half * (quad1 + dot(&z2, &z2)) + half * (logdet1 + l22.log_det()) + half * total * log2pi;
        nll.is_finite().then_some(nll)
    };

    let mut starts: Vec<Vec<f64>> = Vec::new();
    if let Some((w, d)) = warm {
        let mut s: Vec<f64> = w.iter().map(|v| to_f64(*v)).collect();
        s.push(to_f64(d).max(opts.noise_floor).ln());
        starts.push(s);
    }
    for r in 0..opts.restarts.max(usize::from(starts.is_empty())) {
        let mut rng = opts.seed.derive(r as u64).rng();
        let mut s: Vec<f64> = (0..nq).map(|_| rng::standard_normal(&mut rng)).collect();
        s.push(opts.noise_init.max(opts.noise_floor).ln());
        starts.push(s);
    }
    let mut lo = vec![-opts.weight_bound; nq];
    let mut hi = vec![opts.weight_bound; nq];
    lo.push(opts.noise_floor.ln());
    hi.push(opts.noise_max.ln());
    let bounds = Bounds {
        lower: lo.iter().map(|&v| c(v)).collect(),
        upper: hi.iter().map(|&v| c(v)).collect(),
    };
    let mut best: Option<(Vec<T>, T)> = None;
    let mut f = optim::with_fd_gradient(objective, 1e-6);
    for s in starts {
        let x0: Vec<T> = s.iter().map(|&v| c(v)).collect();
        if let Some(r) = optim::minimize(&mut f, &x0, &bounds, &opts.lbfgs) {
            if r.value.is_finite() && best.as_ref().is_none_or(|(_, v)| r.value < *v) {
                best = Some((r.x, r.value));
            }
        }
    }
    let (p, _) = best.ok_or_else(|| Error::numerical("could not extend the model to the new task"))?;

    let mut hyper = model.hyper.clone();
    for (q, wq) in hyper.w.iter_mut().enumerate() {
        wq.push(p[q]);
    }
    hyper.d.push(p[nq].exp());
    let border = Matrix::from_fn(n, m, |j, k| {
        let mut v = T::zero();
        for (kq, wq) in hyper.kernels.iter().zip(&hyper.w) {
            v = v + (wq[model.rows[j]] * wq[model.task_count()]) * (kq.variance * kq.correlation(&model.pts[j], &x_new[k]));
        }
        v
    });
    let mut corner = Matrix::zeros(m, m);
    for (q, cq) in c_q.iter().enumerate() {
        let ww = hyper.w[q][model.task_count()] * hyper.w[q][model.task_count()];
        for a in 0..m {
            for b in 0..m {
                corner[(a, b)] = corner[(a, b)] + ww * cq[(a, b)];
            }
        }
    }
    corner.add_diagonal(hyper.d[model.task_count()]);
    let chol = model.chol.append(&border, &corner, jitter)?;

    let mut tasks = model.tasks.clone();
    tasks.push(task);
    let mut xs = model.x.clone();
    xs.push(x_new);
    let mut ys = model.y.clone();
    ys.push(y_new);
    let mut sts = model.standardizers.clone();
    sts.push(st);
    LcmModel::from_factor(tasks, xs, ys, hyper, sts, chol)
}
