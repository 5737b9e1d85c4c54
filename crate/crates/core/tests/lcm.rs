use lcmtune::gp::{fit_gp, log_marginal_likelihood, FitOptions, GpModel, KernelParams};
use lcmtune::lcm::{assemble_cov, extend_model, fit_lcm, lcm_likelihood, ExtendOptions, LcmHyper, LcmModel};
use lcmtune::linalg::{chol_append, Cholesky, Matrix};
use lcmtune::rng::{self, RngState};
use nalgebra::DMatrix;

fn points(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = RngState::new(seed).rng();
    (0..n).map(|_| (0..d).map(|_| rng::uniform(&mut r)).collect()).collect()
}

fn smooth(x: &[f64], shift: f64) -> f64 {
    (3.0 * x[0] + shift).sin() + 0.5 * x.get(1).map_or(0.0, |v| (2.0 * v).cos())
}

fn rbf(a: &[f64], b: &[f64], k: &KernelParams<f64>) -> f64 {
    let r: f64 = a.iter().zip(b).zip(&k.lengthscales).map(|((x, y), l)| (x - y) * (x - y) / l).sum();
    k.variance * (-r).exp()
}

/// Covariance of stacked heterotropic data straight from the definition.
fn dense_cov(x: &[Vec<Vec<f64>>], h: &LcmHyper<f64>) -> DMatrix<f64> {
    let rows: Vec<(usize, &Vec<f64>)> = x.iter().enumerate().flat_map(|(t, xs)| xs.iter().map(move |p| (t, p))).collect();
    DMatrix::from_fn(rows.len(), rows.len(), |i, j| {
        let (ti, pi) = rows[i];
        let (tj, pj) = rows[j];
        let mut v: f64 = h.kernels.iter().zip(&h.w).map(|(k, w)| w[ti] * w[tj] * rbf(pi, pj, k)).sum();
        if i == j {
            v += h.d[ti];
        }
        v
    })
}

fn dense_ll(k: DMatrix<f64>, y: &[f64]) -> f64 {
    let n = y.len();
    let ch = k.cholesky().expect("spd");
    let yv = nalgebra::DVector::from_column_slice(y);
    let a = ch.solve(&yv);
    let logdet: f64 = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    -0.5 * yv.dot(&a) - 0.5 * logdet - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
}

#[test]
fn single_task_single_latent_is_a_gp() {
    for seed in 0..5 {
        let x = points(12, 2, seed);
        let y: Vec<f64> = x.iter().map(|p| smooth(p, 0.0)).collect();
        let opts = FitOptions::default().with_seed(RngState::new(seed));
        let gp = fit_gp(x.clone(), y.clone(), &opts).unwrap();
        let lcm = fit_lcm(vec![vec![0.0]], vec![x], vec![y], 1, &opts, None).unwrap();
        assert!((gp.log_likelihood() - lcm.log_likelihood()).abs() < 1e-8);
        for p in points(10, 2, 100 + seed) {
            let (a, va) = gp.predict(&p).unwrap();
            let (b, vb) = lcm.predict(0, &p).unwrap();
            assert!((a - b).abs() < 1e-8 && (va - vb).abs() < 1e-8, "{a} {b} {va} {vb}");
        }
    }
}

#[test]
fn zero_coupling_splits_into_independent_gps() {
    let k0 = KernelParams::new(1.3, vec![0.2, 0.7]).unwrap();
    let k1 = KernelParams::new(0.6, vec![1.5, 0.4]).unwrap();
    let h = LcmHyper {
        kernels: vec![k0.clone(), k1.clone()],
        w: vec![vec![1.1, 0.0], vec![0.0, 0.8]],
        d: vec![0.02, 0.05],
    };
    let x = vec![points(7, 2, 1), points(5, 2, 2)];
    let y: Vec<Vec<f64>> = x.iter().enumerate().map(|(t, xs)| xs.iter().map(|p| smooth(p, t as f64)).collect()).collect();
    let joint = lcm_likelihood(&x, &y, &h).unwrap();
    let scaled = |k: &KernelParams<f64>, w: f64| KernelParams::new(w * w * k.variance, k.lengthscales.clone()).unwrap();
    let split = log_marginal_likelihood(&x[0], &y[0], &scaled(&k0, 1.1), 0.02).unwrap()
        + log_marginal_likelihood(&x[1], &y[1], &scaled(&k1, 0.8), 0.05).unwrap();
    assert!((joint - split).abs() < 1e-8, "{joint} vs {split}");

    let m = LcmModel::new(vec![vec![0.0], vec![1.0]], x.clone(), y.clone(), h, false).unwrap();
    let g = GpModel::new(x[1].clone(), y[1].clone(), scaled(&k1, 0.8), 0.05, false).unwrap();
    for p in points(20, 2, 9) {
        let (a, va) = m.predict(1, &p).unwrap();
        let (b, vb) = g.predict(&p).unwrap();
        assert!((a - b).abs() < 1e-8 && (va - vb).abs() < 1e-8);
    }
}

#[test]
fn isotopic_covariance_is_a_kronecker_sum() {
    // shared inputs, one latent: K = B ⊗ K_x + diag(D) ⊗ I in task-major order
    let k = KernelParams::isotropic(0.9, 0.35, 3);
    let w = vec![0.7, -1.2, 0.4];
    let d = vec![1e-3, 2e-3, 3e-3];
    let xs = points(6, 3, 4);
    let h = LcmHyper { kernels: vec![k.clone()], w: vec![w.clone()], d: d.clone() };
    let got = assemble_cov(&vec![xs.clone(); 3], &h).unwrap();
    let kx = DMatrix::from_fn(6, 6, |i, j| rbf(&xs[i], &xs[j], &k));
    let b = DMatrix::from_fn(3, 3, |i, j| w[i] * w[j]);
    let want = b.kronecker(&kx) + DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d)).kronecker(&DMatrix::identity(6, 6));
    for i in 0..18 {
        for j in 0..18 {
            assert!((got[(i, j)] - want[(i, j)]).abs() < 1e-12);
        }
    }
}

#[test]
fn heterotropic_covariance_matches_definition() {
    let h = LcmHyper {
        kernels: vec![KernelParams::new(1.0, vec![0.3, 0.8]).unwrap(), KernelParams::new(0.5, vec![2.0, 0.1]).unwrap()],
        w: vec![vec![1.2, -0.4, 0.1], vec![0.3, 0.9, -0.7]],
        d: vec![1e-3, 5e-3, 1e-2],
    };
    let x = vec![points(4, 2, 1), points(2, 2, 2), points(5, 2, 3)];
    let got = assemble_cov(&x, &h).unwrap();
    let want = dense_cov(&x, &h);
    for i in 0..11 {
        for j in 0..11 {
            assert!((got[(i, j)] - want[(i, j)]).abs() < 1e-12);
        }
    }
}

#[test]
fn correlated_task_data_reduces_variance() {
    let k = KernelParams::isotropic(1.0, 0.1, 1);
    let h = LcmHyper { kernels: vec![k.clone()], w: vec![vec![1.0, 0.95]], d: vec![1e-2, 1e-2] };
    let x0 = points(3, 1, 11);
    let x1 = points(15, 1, 12);
    let y0: Vec<f64> = x0.iter().map(|p| smooth(p, 0.0)).collect();
    let y1: Vec<f64> = x1.iter().map(|p| smooth(p, 0.1)).collect();
    let tasks = vec![vec![0.0], vec![1.0]];
    let coupled = LcmModel::new(tasks.clone(), vec![x0.clone(), x1.clone()], vec![y0.clone(), y1.clone()], h.clone(), false).unwrap();
    let split = LcmModel::new(tasks, vec![x0, x1], vec![y0, y1], h.decoupled(), false).unwrap();
    let probes = points(100, 1, 13);
    let reduced = probes.iter().filter(|p| coupled.predict(0, p).unwrap().1 < split.predict(0, p).unwrap().1).count();
    assert!(reduced >= 90, "{reduced} of 100");
}

fn base_model() -> LcmModel<f64> {
    let h = LcmHyper {
        kernels: vec![KernelParams::new(1.0, vec![0.25, 0.6]).unwrap()],
        w: vec![vec![1.0, 0.8]],
        d: vec![1e-2, 2e-2],
    };
    let x = vec![points(8, 2, 21), points(8, 2, 22)];
    let y: Vec<Vec<f64>> = x.iter().enumerate().map(|(t, xs)| xs.iter().map(|p| smooth(p, 0.2 * t as f64)).collect()).collect();
    LcmModel::new(vec![vec![0.0], vec![1.0]], x, y, h, false).unwrap()
}

#[test]
fn extension_keeps_old_hyperparameters_and_matches_full_likelihood() {
    let base = base_model();
    let xn = points(5, 2, 23);
    let yn: Vec<f64> = xn.iter().map(|p| smooth(p, 0.3)).collect();
    let opts = ExtendOptions { standardize: false, ..ExtendOptions::default() };
    let ext = extend_model(&base, vec![2.0], xn.clone(), yn.clone(), &opts, None).unwrap();

    let (old, new) = (base.hyper(), ext.hyper());
    assert_eq!(old.kernels, new.kernels);
    for q in 0..old.latents() {
        assert_eq!(old.w[q][..], new.w[q][..2]);
    }
    assert_eq!(old.d[..], new.d[..2]);
    let (lo, ln) = (base.factor().l(), ext.factor().l());
    for i in 0..lo.rows() {
        assert_eq!(lo.row(i), &ln.row(i)[..lo.cols()]);
    }

    let mut x: Vec<Vec<Vec<f64>>> = (0..2).map(|t| base.inputs(t).to_vec()).collect();
    let mut y: Vec<Vec<f64>> = (0..2).map(|t| base.targets(t).to_vec()).collect();
    x.push(xn);
    y.push(yn);
    let stacked: Vec<f64> = y.iter().flatten().copied().collect();
    let ll = dense_ll(dense_cov(&x, new), &stacked);
    assert!((ext.log_likelihood() - ll).abs() < 1e-6, "{} vs {ll}", ext.log_likelihood());

    // a brute-force search over the same free parameters never does better
    let mut best = f64::NEG_INFINITY;
    for i in 0..=120 {
        for j in 0..=60 {
            let mut h = old.clone();
            h.w[0].push(-3.0 + 6.0 * i as f64 / 120.0);
            h.d.push(1e-4 * 1e4f64.powf(j as f64 / 60.0));
            best = best.max(dense_ll(dense_cov(&x, &h), &stacked));
        }
    }
    assert!(ext.log_likelihood() >= best - 1e-6, "{} < {best}", ext.log_likelihood());
}

#[test]
fn extension_factor_matches_refactorization() {
    let base = base_model();
    let xn = points(4, 2, 31);
    let yn: Vec<f64> = xn.iter().map(|p| smooth(p, -0.4)).collect();
    let opts = ExtendOptions { standardize: false, ..ExtendOptions::default() };
    let ext = extend_model(&base, vec![2.0], xn, yn, &opts, None).unwrap();
    let x: Vec<Vec<Vec<f64>>> = (0..3).map(|t| ext.inputs(t).to_vec()).collect();
    let y: Vec<Vec<f64>> = (0..3).map(|t| ext.targets(t).to_vec()).collect();
    let full = Cholesky::factor_with(&assemble_cov(&x, ext.hyper()).unwrap(), 0.0).unwrap();
    assert!(ext.factor().l().max_abs_diff(full.l()) < 1e-8);
    let rebuilt = LcmModel::new(ext.tasks().to_vec(), x, y, ext.hyper().clone(), false).unwrap();
    for p in points(10, 2, 32) {
        let (a, va) = ext.predict(2, &p).unwrap();
        let (b, vb) = rebuilt.predict(2, &p).unwrap();
        assert!((a - b).abs() < 1e-6 && (va - vb).abs() < 1e-6, "{a} {b}");
    }
    let n = ext.factor().dim();
    assert_eq!(n, 20);
}

#[test]
fn bordered_append_matches_full_factorization() {
    let mut r = RngState::new(5).rng();
    let a = DMatrix::from_fn(8, 8, |_, _| rng::standard_normal(&mut r));
    let spd = &a * a.transpose() + DMatrix::identity(8, 8) * 0.5;
    let m = |rows: std::ops::Range<usize>, cols: std::ops::Range<usize>| {
        let (r0, c0) = (rows.start, cols.start);
        Matrix::from_fn(rows.len(), cols.len(), |i, j| spd[(r0 + i, c0 + j)])
    };
    let lead = Cholesky::factor(&m(0..6, 0..6)).unwrap();
    let grown = chol_append(&lead, &m(0..6, 6..8), &m(6..8, 6..8)).unwrap();
    // the new block carries the base jitter; the oracle adds the same
    let jit = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(grown.jitter()));
    assert!(grown.jitter()[..6].iter().all(|&j| j == 0.0));
    let want = (spd + jit).cholesky().unwrap().l();
    for i in 0..8 {
        for j in 0..8 {
            assert!((grown.l()[(i, j)] - want[(i, j)]).abs() < 1e-10);
        }
    }
}
