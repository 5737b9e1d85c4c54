//! Box-constrained L-BFGS used for hyperparameter fitting.
//!
//! Projected two-loop recursion with an Armijo backtracking line search.
//! The objective returns `None` when it cannot be evaluated (for example a
//! covariance that will not factor); such points are treated as `+∞`.

use std::collections::VecDeque;

use crate::scalar::{c, Scalar};

#[derive(Clone, Copy, Debug)]
pub struct LbfgsOptions {
    pub max_iter: usize,
    pub memory: usize,
    /// Stop when the projected gradient's max-norm drops below this.
    pub gtol: f64,
    /// Stop when the relative decrease of the objective drops below this.
    pub ftol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            max_iter: 200,
            memory: 8,
            gtol: 1e-6,
            ftol: 1e-12,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Bounds<T> {
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Scalar> Bounds<T> {
    pub fn project(&self, x: &mut [T]) {
        for ((v, &lo), &hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.max(lo).min(hi);
        }
    }
}

#[derive(Clone, Debug)]
pub struct Minimum<T> {
    pub x: Vec<T>,
    pub value: T,
    pub iterations: usize,
    pub evaluations: usize,
}

fn projected_gradient<T: Scalar>(x: &[T], g: &[T], b: &Bounds<T>) -> Vec<T> {
    x.iter()
        .zip(g)
        .enumerate()
        .map(|(i, (&xi, &gi))| {
            if (xi <= b.lower[i] && gi > T::zero()) || (xi >= b.upper[i] && gi < T::zero()) {
                T::zero()
            } else {
                gi
            }
        })
        .collect()
}

/// Minimize `f` from `x0` inside `bounds`. Returns `None` if `f` cannot be
/// evaluated at the (projected) starting point.
pub fn minimize<T, F>(mut f: F, x0: &[T], bounds: &Bounds<T>, opts: &LbfgsOptions) -> Option<Minimum<T>>
where
    T: Scalar,
    F: FnMut(&[T]) -> Option<(T, Vec<T>)>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    bounds.project(&mut x);
    let (mut fx, mut g) = f(&x)?;
    if !fx.is_finite() {
        return None;
    }
    let mut evaluations = 1;
    let mut memory: VecDeque<(Vec<T>, Vec<T>, T)> = VecDeque::with_capacity(opts.memory);
    let (gtol, ftol): (T, T) = (c(opts.gtol), c(opts.ftol));
    let c1: T = c(1e-4);
    let mut iterations = 0;

    while iterations < opts.max_iter {
        let pg = projected_gradient(&x, &g, bounds);
        if pg.iter().fold(T::zero(), |m, v| m.max(v.abs())) < gtol {
            break;
        }
        iterations += 1;

        // two-loop recursion on the projected gradient
        let mut q = pg.clone();
        let mut alphas = Vec::with_capacity(memory.len());
        for (s, y, rho) in memory.iter().rev() {
            let a = *rho * crate::linalg::dot(s, &q);
            for (qi, &yi) in q.iter_mut().zip(y) {
                *qi = *qi - a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = memory.back() {
            let gamma = crate::linalg::dot(s, y) / crate::linalg::dot(y, y);
            for qi in q.iter_mut() {
                *qi = *qi * gamma;
            }
        } else {
            let norm = pg.iter().fold(T::zero(), |m, v| m.max(v.abs()));
            let scale = T::one() / norm.max(T::one());
            for qi in q.iter_mut() {
                *qi = *qi * scale;
            }
        }
        for ((s, y, rho), a) in memory.iter().zip(alphas.into_iter().rev()) {
            let b = *rho * crate::linalg::dot(y, &q);
            for (qi, &si) in q.iter_mut().zip(s) {
                *qi = *qi + (a - b) * si;
            }
        }
        let mut d: Vec<T> = q.iter().map(|&v| -v).collect();
        // do not push against active bounds
        for i in 0..n {
            if (x[i] <= bounds.lower[i] && d[i] < T::zero()) || (x[i] >= bounds.upper[i] && d[i] > T::zero()) {
                d[i] = T::zero();
            }
        }
        if crate::linalg::dot(&d, &g) >= T::zero() {
            memory.clear();
            d = pg.iter().map(|&v| -v).collect();
        }

        let mut step = T::one();
        let mut accepted = None;
        for _ in 0..40 {
            let mut xn: Vec<T> = x.iter().zip(&d).map(|(&xi, &di)| xi + step * di).collect();
            bounds.project(&mut xn);
            let dx: Vec<T> = xn.iter().zip(&x).map(|(&a, &b)| a - b).collect();
            let decrease = crate::linalg::dot(&g, &dx);
            if dx.iter().all(|v| *v == T::zero()) {
                break;
            }
            evaluations += 1;
            if let Some((fn_, gn)) = f(&xn) {
                if fn_.is_finite() && fn_ <= fx + c1 * decrease {
                    accepted = Some((xn, fn_, gn));
                    break;
                }
            }
            step = step * c(0.5);
        }
        let Some((xn, fn_, gn)) = accepted else {
            if memory.is_empty() {
                break;
            }
            memory.clear();
            continue;
        };

        let s: Vec<T> = xn.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let y: Vec<T> = gn.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        let sy = crate::linalg::dot(&s, &y);
        if sy > c::<T>(1e-12) * crate::linalg::dot(&y, &y).sqrt() * crate::linalg::dot(&s, &s).sqrt() {
            if memory.len() == opts.memory {
                memory.pop_front();
            }
            memory.push_back((s, y, T::one() / sy));
        }
        let rel = (fx - fn_).abs() / fx.abs().max(T::one());
        x = xn;
        fx = fn_;
        g = gn;
        if rel < ftol {
            break;
        }
    }

    Some(Minimum {
        x,
        value: fx,
        iterations,
        evaluations,
    })
}

/// Central finite-difference gradient wrapper for objectives without an
/// analytic gradient.
pub fn with_fd_gradient<T, F>(mut f: F, h: f64) -> impl FnMut(&[T]) -> Option<(T, Vec<T>)>
where
    T: Scalar,
    F: FnMut(&[T]) -> Option<T>,
{
    move |x: &[T]| {
        let fx = f(x)?;
        let mut g = Vec::with_capacity(x.len());
        let mut xp = x.to_vec();
        let h: T = c(h);
        for i in 0..x.len() {
            let xi = xp[i];
            xp[i] = xi + h;
            let fp = f(&xp)?;
            xp[i] = xi - h;
            let fm = f(&xp)?;
            xp[i] = xi;
            g.push((fp - fm) / (h + h));
        }
        Some((fx, g))
    }
}
