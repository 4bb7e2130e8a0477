use super::*;
use crate::kernels::KernelFamily;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_inputs(r: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| r.gen_range(-2.0..2.0))
}

fn dense_oracle(k: &KernelSpec, noise: f64, x: &DMatrix<f64>, y: &DVector<f64>, t: &DMatrix<f64>) -> (DVector<f64>, DVector<f64>, f64) {
    let n = x.nrows();
    let mut kxx = DMatrix::from_fn(n, n, |i, j| {
        let a: Vec<f64> = x.row(i).iter().copied().collect();
        let b: Vec<f64> = x.row(j).iter().copied().collect();
        k.eval(&a, &b).unwrap()
    });
    for i in 0..n {
        kxx[(i, i)] += noise;
    }
    let inv = kxx.clone().try_inverse().unwrap();
    let ks = k.kernel_matrix(x, t).unwrap();
    let mean = ks.transpose() * &inv * y;
    let var = DVector::from_fn(t.nrows(), |j, _| k.scale - (ks.column(j).transpose() * &inv * ks.column(j))[(0, 0)]);
    let lml = -0.5 * (y.transpose() * &inv * y)[(0, 0)] - 0.5 * kxx.determinant().ln() - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    (mean, var, lml)
}

fn sample_gp(k: &KernelSpec, noise_std: f64, x: &DMatrix<f64>, r: &mut ChaCha8Rng) -> DVector<f64> {
    let n = x.nrows();
    let mut kxx = k.gram(x).unwrap();
    for i in 0..n {
        kxx[(i, i)] += 1e-8;
    }
    let l = cholesky_spd(&kxx).unwrap();
    let u = DVector::from_fn(n, |_, _| -> f64 { StandardNormal.sample(r) });
    let e = DVector::from_fn(n, |_, _| { let v: f64 = StandardNormal.sample(r); noise_std * v });
    l * u + e
}

#[test]
fn prior_when_no_data() {
    let m = GpModel::new(KernelSpec::iso(KernelFamily::Rbf, 2, 0.4, 1.7).unwrap(), 0.1).unwrap();
    let t = random_inputs(&mut rng(0), 4, 2);
    let (mu, var) = m.posterior(&DMatrix::zeros(0, 2), &DVector::zeros(0), &t).unwrap();
    assert!(mu.iter().all(|v| *v == 0.0));
    assert!(var.iter().all(|v| *v == 1.7));
}

#[test]
fn single_point_closed_form() {
    let s2 = 0.3;
    let m = GpModel::new(KernelSpec::iso(KernelFamily::Matern52, 1, 0.5, 1.0).unwrap(), s2).unwrap();
    let x = DMatrix::from_element(1, 1, 0.2);
    let y = DVector::from_element(1, 1.5);
    let (mu, var) = m.posterior(&x, &y, &x).unwrap();
    assert!((mu[0] - 1.5 / (1.0 + s2)).abs() < 1e-14);
    assert!((var[0] - s2 / (1.0 + s2)).abs() < 1e-14);
}

#[test]
fn matches_dense_inverse() {
    let mut r = rng(1);
    for f in KernelFamily::ALL {
        let x = random_inputs(&mut r, 8, 2);
        let y = DVector::from_fn(8, |_, _| r.gen_range(-1.0..1.0));
        let t = random_inputs(&mut r, 5, 2);
        let k = KernelSpec::new(f, vec![0.7, 1.2], 1.4).unwrap();
        let m = GpModel::new(k.clone(), 0.05).unwrap();
        let (mu, var) = m.posterior(&x, &y, &t).unwrap();
        let (mu0, var0, lml0) = dense_oracle(&k, 0.05, &x, &y, &t);
        assert!((mu - mu0).amax() < 1e-8);
        assert!((var - var0).amax() < 1e-8);
        assert!((m.log_marginal_likelihood(&x, &y).unwrap() - lml0).abs() < 1e-8);
    }
}

#[test]
fn scalar_lml() {
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let m = GpModel::new(KernelSpec::iso(KernelFamily::Rbf, 1, 1.0, 1.0).unwrap(), 1.0).unwrap();
    let x = DMatrix::from_element(1, 1, 0.0);
    let v = m.log_marginal_likelihood(&x, &DVector::from_element(1, 0.0)).unwrap();
    assert!((v - (-0.5 * 2f64.ln() - 0.5 * ln2pi)).abs() < 1e-14);
    let v = m.log_marginal_likelihood(&x, &DVector::from_element(1, 2.0)).unwrap();
    assert!((v - (-1.0 - 0.5 * 2f64.ln() - 0.5 * ln2pi)).abs() < 1e-14);
    assert!(m.log_marginal_likelihood(&DMatrix::zeros(0, 1), &DVector::zeros(0)).is_err());
}

#[test]
fn lml_matches_explicit_determinant() {
    let mut r = rng(2);
    let x = random_inputs(&mut r, 6, 3);
    let y = DVector::from_fn(6, |_, _| r.gen_range(-2.0..2.0));
    let k = KernelSpec::new(KernelFamily::Matern32, vec![0.5, 1.0, 2.0], 0.8).unwrap();
    let m = GpModel::new(k.clone(), 0.2).unwrap();
    let (_, _, lml0) = dense_oracle(&k, 0.2, &x, &y, &x);
    assert!((m.log_marginal_likelihood(&x, &y).unwrap() - lml0).abs() < 1e-10);
}

#[test]
fn variance_bounded_by_scale() {
    let mut r = rng(3);
    let x = random_inputs(&mut r, 20, 1);
    let y = DVector::from_fn(20, |_, _| r.gen_range(-1.0..1.0));
    let m = GpModel::new(KernelSpec::iso(KernelFamily::Rbf, 1, 0.3, 2.0).unwrap(), 1e-4).unwrap();
    let t = random_inputs(&mut r, 200, 1);
    let (_, var) = m.posterior(&x, &y, &t).unwrap();
    assert!(var.iter().all(|v| *v >= 0.0 && *v <= 2.0 + 1e-8));
}

#[test]
fn variance_non_increasing_with_data() {
    let mut r = rng(4);
    let m = GpModel::new(KernelSpec::iso(KernelFamily::Matern52, 2, 0.6, 1.0).unwrap(), 0.01).unwrap();
    let x = random_inputs(&mut r, 15, 2);
    let y = DVector::from_fn(15, |_, _| r.gen_range(-1.0..1.0));
    let t = random_inputs(&mut r, 50, 2);
    let mut prev = m.predict(&t).unwrap().1;
    for n in 1..=15 {
        let var = m.posterior(&x.rows(0, n).into_owned(), &y.rows(0, n).into_owned(), &t).unwrap().1;
        assert!(var.iter().zip(prev.iter()).all(|(a, b)| *a <= b + 1e-8));
        prev = var;
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let mut r = rng(5);
    for inst in 0..8 {
        let f = KernelFamily::ALL[inst % 4];
        let d = 1 + inst % 3;
        let x = random_inputs(&mut r, 12, d);
        let y = DVector::from_fn(12, |_, _| r.gen_range(-1.0..1.0));
        let ls: Vec<f64> = (0..d).map(|_| r.gen_range(0.3..2.0)).collect();
        let m = GpModel::new(KernelSpec::new(f, ls, r.gen_range(0.5..2.0)).unwrap(), r.gen_range(0.01..0.3)).unwrap();
        let (_, g) = m.lml_with_gradient(&x, &y).unwrap();
        let p = m.log_params();
        for i in 0..p.len() {
            let h = 1e-5;
            let mut pp = p.clone();
            pp[i] += h;
            let up = m.with_log_params(&pp).unwrap().log_marginal_likelihood(&x, &y).unwrap();
            pp[i] -= 2.0 * h;
            let dn = m.with_log_params(&pp).unwrap().log_marginal_likelihood(&x, &y).unwrap();
            let fd = (up - dn) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-4 * fd.abs().max(1.0), "{f:?} param {i}: {fd} vs {}", g[i]);
        }
    }
}

#[test]
fn fit_recovers_lengthscale() {
    let mut r = rng(6);
    let truth = KernelSpec::iso(KernelFamily::Matern52, 1, 0.5, 1.0).unwrap();
    let x = random_inputs(&mut r, 200, 1);
    let y = sample_gp(&truth, 0.1, &x, &mut r);
    let start = GpModel::new(KernelSpec::iso(KernelFamily::Matern52, 1, 1.0, 1.0).unwrap(), 0.1).unwrap();
    let before = start.log_marginal_likelihood(&x, &y).unwrap();
    let fit = start.fit(&x, &y, &FitOptions::default()).unwrap();
    let l = fit.kernel.lengthscales[0];
    assert!(l > 0.25 && l < 1.0, "lengthscale {l}");
    assert!(fit.is_conditioned());
    assert!(fit.log_marginal_likelihood(&x, &y).unwrap() >= before - 1e-9);
}

#[test]
fn fit_is_deterministic() {
    let mut r = rng(7);
    let x = random_inputs(&mut r, 30, 2);
    let y = DVector::from_fn(30, |i, _| (x[(i, 0)] * 2.0).sin() + 0.1 * x[(i, 1)]);
    let m = GpModel::new(KernelSpec::iso(KernelFamily::Rbf, 2, 1.0, 1.0).unwrap(), 0.1).unwrap();
    let opts = FitOptions { seed: 11, ..Default::default() };
    let a = m.fit(&x, &y, &opts).unwrap();
    let b = m.fit(&x, &y, &opts).unwrap();
    assert_eq!(a.log_params(), b.log_params());
}

#[test]
fn constant_targets_push_noise_to_lower_bound() {
    let mut r = rng(8);
    let x = random_inputs(&mut r, 20, 1);
    let y = DVector::zeros(20);
    let m = GpModel::new(KernelSpec::iso(KernelFamily::Matern52, 1, 0.5, 1.0).unwrap(), 0.1).unwrap();
    let fit = m.fit(&x, &y, &FitOptions::default()).unwrap();
    assert!(fit.noise_variance <= 1e-6 * 1.01, "{}", fit.noise_variance);
    assert!(fit.log_marginal_likelihood(&x, &y).unwrap().is_finite());
}

#[test]
fn fixed_parameters_stay_fixed() {
    let mut r = rng(9);
    let x = random_inputs(&mut r, 25, 1);
    let y = DVector::from_fn(25, |i, _| (3.0 * x[(i, 0)]).sin());
    let m = GpModel::new(KernelSpec::iso(KernelFamily::Matern52, 1, 0.5, 1.0).unwrap(), 0.01).unwrap();
    let fit = m.fit(&x, &y, &FitOptions { fix_scale: true, fix_noise: true, ..Default::default() }).unwrap();
    assert_eq!(fit.kernel.scale, 1.0);
    assert!((fit.noise_variance - 0.01).abs() < 1e-15);
    assert_ne!(fit.kernel.lengthscales[0], 0.5);
}

#[test]
fn input_validation() {
    assert!(GpModel::new(KernelSpec::iso(KernelFamily::Rbf, 1, 1.0, 1.0).unwrap(), 0.0).is_err());
    let m = GpModel::new(KernelSpec::iso(KernelFamily::Rbf, 2, 1.0, 1.0).unwrap(), 0.1).unwrap();
    assert!(m.posterior(&DMatrix::zeros(3, 1), &DVector::zeros(3), &DMatrix::zeros(1, 2)).is_err());
    assert!(m.fit(&DMatrix::zeros(1, 2), &DVector::zeros(1), &FitOptions::default()).is_err());
}
