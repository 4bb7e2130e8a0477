use super::*;
use crate::gp::{FitOptions, GpModel};
use crate::kernels::{KernelFamily, TaskTag};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn inputs(r: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| r.gen_range(-2.0..2.0))
}

fn values(r: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| r.gen_range(-1.0..1.0))
}

fn ks(f: KernelFamily, d: usize, l: f64, s: f64) -> KernelSpec {
    KernelSpec::iso(f, d, l, s).unwrap()
}

fn hgp1(d: usize) -> TransferModel {
    TransferModel::new(
        MultiTaskKernel::hgp(vec![ks(KernelFamily::Matern52, d, 0.8, 1.2)], ks(KernelFamily::Rbf, d, 0.4, 0.3)).unwrap(),
        vec![0.02],
        0.05,
    )
    .unwrap()
}

fn lmc1(d: usize, r: &mut ChaCha8Rng) -> TransferModel {
    let lat = vec![ks(KernelFamily::Matern32, d, 0.7, 1.0), ks(KernelFamily::Rbf, d, 0.3, 1.0)];
    let w = (0..2).map(|_| (0..2).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
    TransferModel::new(MultiTaskKernel::lmc(lat, w, vec![0.2, 0.4]).unwrap(), vec![0.03], 0.04).unwrap()
}

/// Entrywise covariance and dense-inverse posterior.
fn dense_oracle(m: &TransferModel, data: &MultiTaskData, test: &DMatrix<f64>) -> (DVector<f64>, DVector<f64>, f64) {
    let p = m.n_sources();
    let n = data.len();
    let row = |x: &DMatrix<f64>, i: usize| -> Vec<f64> { x.row(i).iter().copied().collect() };
    let tag = |t: usize| TaskTag::from_index(t, p);
    let mut om = DMatrix::from_fn(n, n, |i, j| {
        m.kernel.eval(&row(&data.x, i), tag(data.tasks[i]), &row(&data.x, j), tag(data.tasks[j])).unwrap()
    });
    for i in 0..n {
        om[(i, i)] += m.noise(data.tasks[i]);
    }
    let inv = om.clone().try_inverse().unwrap();
    let mt = test.nrows();
    let v = DMatrix::from_fn(n, mt, |i, j| {
        m.kernel.eval(&row(&data.x, i), tag(data.tasks[i]), &row(test, j), TaskTag::Target).unwrap()
    });
    let mean = v.transpose() * &inv * &data.y;
    let var = DVector::from_fn(mt, |j, _| {
        let t = row(test, j);
        m.kernel.eval(&t, TaskTag::Target, &t, TaskTag::Target).unwrap() - (v.column(j).transpose() * &inv * v.column(j))[(0, 0)]
    });
    let lml = -0.5 * (data.y.transpose() * &inv * &data.y)[(0, 0)] - 0.5 * om.determinant().ln() - 0.5 * n as f64 * LN_2PI;
    (mean, var, lml)
}

fn random_data(r: &mut ChaCha8Rng, ns: &[usize], n: usize, d: usize) -> MultiTaskData {
    let xs: Vec<DMatrix<f64>> = ns.iter().map(|k| inputs(r, *k, d)).collect();
    let ys: Vec<DVector<f64>> = ns.iter().map(|k| values(r, *k)).collect();
    let parts: Vec<_> = xs.iter().zip(&ys).collect();
    let xt = inputs(r, n, d);
    let yt = values(r, n);
    MultiTaskData::new(&parts, (&xt, &yt)).unwrap()
}

#[test]
fn empty_source_covariance_is_single_task() {
    let m = hgp1(1);
    let xt = DMatrix::from_column_slice(2, 1, &[0.1, 0.7]);
    let om = m.joint_covariance(&[DMatrix::zeros(0, 1)], &xt).unwrap();
    let kdiag = ks(KernelFamily::Matern52, 1, 0.8, 1.2).gram(&xt).unwrap() + ks(KernelFamily::Rbf, 1, 0.4, 0.3).gram(&xt).unwrap();
    let want = kdiag + DMatrix::identity(2, 2) * 0.05;
    assert!((om - want).amax() < 1e-15);
}

#[test]
fn zero_w_gives_block_diagonal() {
    let m = TransferModel::new(MultiTaskKernel::lmc_default(KernelFamily::Rbf, 2, 1, 0.5).unwrap(), vec![0.1], 0.1).unwrap();
    let mut r = rng(1);
    let om = m.joint_covariance(&[inputs(&mut r, 4, 2)], &inputs(&mut r, 3, 2)).unwrap();
    assert!(om.view((0, 4), (4, 3)).iter().all(|v| *v == 0.0));
    assert!(om.view((4, 0), (3, 4)).iter().all(|v| *v == 0.0));
}

#[test]
fn two_source_covariance_matches_entrywise() {
    let mut r = rng(2);
    let data = random_data(&mut r, &[5, 4], 3, 2);
    for m in [
        TransferModel::new(
            MultiTaskKernel::hgp(
                vec![ks(KernelFamily::Matern52, 2, 0.6, 1.0), ks(KernelFamily::Matern32, 2, 0.9, 0.5)],
                ks(KernelFamily::Rbf, 2, 0.3, 0.2),
            )
            .unwrap(),
            vec![0.01, 0.02],
            0.03,
        )
        .unwrap(),
        {
            let lat = (0..3).map(|i| ks(KernelFamily::ALL[i], 2, 0.4 + 0.2 * i as f64, 1.0)).collect();
            let w = (0..3).map(|_| (0..3).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
            TransferModel::new(MultiTaskKernel::lmc(lat, w, vec![0.1, 0.2, 0.3]).unwrap(), vec![0.01, 0.02], 0.03).unwrap()
        },
    ] {
        let om = m.joint_covariance_data(&data).unwrap();
        let n = data.len();
        for i in 0..n {
            for j in 0..n {
                let a: Vec<f64> = data.x.row(i).iter().copied().collect();
                let b: Vec<f64> = data.x.row(j).iter().copied().collect();
                let mut want = m.kernel.eval(&a, TaskTag::from_index(data.tasks[i], 2), &b, TaskTag::from_index(data.tasks[j], 2)).unwrap();
                if i == j {
                    want += m.noise(data.tasks[i]);
                }
                assert!((om[(i, j)] - want).abs() < 1e-15);
            }
        }
    }
}

#[test]
fn zero_w_posterior_equals_single_task() {
    let mut r = rng(3);
    let lat = vec![ks(KernelFamily::Matern52, 1, 0.5, 1.0), ks(KernelFamily::Matern52, 1, 0.5, 1.0)];
    let m = TransferModel::new(MultiTaskKernel::lmc(lat, vec![vec![0.0; 2]; 2], vec![0.7, 0.3]).unwrap(), vec![0.1], 0.02).unwrap();
    let data = random_data(&mut r, &[10], 6, 1);
    let test = inputs(&mut r, 7, 1);
    let (mu, var) = m.condition(&data).unwrap().predict(&test).unwrap();
    let (_, _, _, xt, yt) = data.split();
    let gp = GpModel::new(ks(KernelFamily::Matern52, 1, 0.5, 0.6), 0.02).unwrap();
    let (mu0, var0) = gp.posterior(&xt, &yt, &test).unwrap();
    assert!((mu - mu0).amax() < 1e-12);
    assert!((var - var0).amax() < 1e-12);
}

#[test]
fn source_information_reaches_target() {
    let m = TransferModel::new(
        MultiTaskKernel::hgp(vec![ks(KernelFamily::Rbf, 1, 0.5, 1.0)], ks(KernelFamily::Rbf, 1, 0.5, 0.01)).unwrap(),
        vec![1e-6],
        0.01,
    )
    .unwrap();
    let xs = DMatrix::from_column_slice(5, 1, &[-1.0, -0.5, 0.0, 0.5, 1.0]);
    let ys = DVector::from_column_slice(&[0.3, -0.2, 0.8, 0.1, -0.4]);
    let data = MultiTaskData::new(&[(&xs, &ys)], (&DMatrix::zeros(0, 1), &DVector::zeros(0))).unwrap();
    let test = DMatrix::from_column_slice(1, 1, &[0.0]);
    let (mu, _) = m.condition(&data).unwrap().predict(&test).unwrap();
    let (mu0, _, _) = dense_oracle(&m, &data, &test);
    assert!((mu[0] - mu0[0]).abs() < 1e-8);
    assert!((mu[0] - 0.8).abs() < 1e-3);
}

#[test]
fn posterior_matches_dense_inverse() {
    let mut r = rng(4);
    for m in [hgp1(2), lmc1(2, &mut r)] {
        let data = random_data(&mut r, &[30], 5, 2);
        let test = inputs(&mut r, 9, 2);
        let (mu, var) = m.condition(&data).unwrap().predict(&test).unwrap();
        let (mu0, var0, lml0) = dense_oracle(&m, &data, &test);
        assert!((mu - mu0).amax() < 1e-8);
        assert!((var - var0).amax() < 1e-8);
        assert!((m.log_marginal_likelihood(&data).unwrap() - lml0).abs() < 1e-8);
    }
}

#[test]
fn two_step_decoupled_blocks() {
    let ls = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 1.5]);
    let kt = DMatrix::from_row_slice(2, 2, &[3.0, 0.5, 0.5, 2.0]);
    let l = two_step_cholesky(&ls, &DMatrix::zeros(2, 2), &kt).unwrap();
    let lt = cholesky_spd_ref(&kt);
    assert!((l.view((0, 0), (2, 2)) - &ls).amax() < 1e-15);
    assert!(l.view((2, 0), (2, 2)).iter().all(|v| *v == 0.0));
    assert!((l.view((2, 2), (2, 2)) - lt).amax() < 1e-15);
}

fn cholesky_spd_ref(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.clone().cholesky().unwrap().l()
}

#[test]
fn two_step_scalar_blocks() {
    let l = two_step_cholesky(
        &DMatrix::from_element(1, 1, 2.0),
        &DMatrix::from_element(1, 1, 2.0),
        &DMatrix::from_element(1, 1, 3.0),
    )
    .unwrap();
    let want = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 2f64.sqrt()]);
    assert!((l - want).amax() < 1e-15);
}

#[test]
fn two_step_matches_direct() {
    let mut r = rng(5);
    let (ns, n) = (200, 20);
    let b = DMatrix::from_fn(ns + n, ns + n, |_, _| r.gen_range(-1.0..1.0));
    let om = b.transpose() * &b + DMatrix::identity(ns + n, ns + n);
    let ls = linalg::cholesky_spd(&om.view((0, 0), (ns, ns)).into_owned()).unwrap();
    let l = two_step_cholesky(&ls, &om.view((0, ns), (ns, n)).into_owned(), &om.view((ns, ns), (n, n)).into_owned()).unwrap();
    let direct = linalg::cholesky_spd(&om).unwrap();
    assert!((l - direct).amax() < 1e-8);
}

#[test]
fn shape_mismatch_rejected() {
    assert!(two_step_cholesky(&DMatrix::identity(2, 2), &DMatrix::zeros(3, 1), &DMatrix::identity(1, 1)).is_err());
}

fn sample(k: &KernelSpec, x: &DMatrix<f64>, r: &mut ChaCha8Rng) -> DVector<f64> {
    let mut g = k.gram(x).unwrap();
    for i in 0..x.nrows() {
        g[(i, i)] += 1e-8;
    }
    let l = linalg::cholesky_spd(&g).unwrap();
    l * DVector::from_fn(x.nrows(), |_, _| -> f64 { StandardNormal.sample(r) })
}

fn noise(r: &mut ChaCha8Rng, n: usize, std: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| {
        let v: f64 = StandardNormal.sample(r);
        std * v
    })
}

/// Source and target data drawn from an HGP with the given kernels.
fn hgp_sample(r: &mut ChaCha8Rng, ns: usize, n: usize, k_s: &KernelSpec, k_t: &KernelSpec) -> MultiTaskData {
    let xs = inputs(r, ns, 1);
    let xt = inputs(r, n, 1);
    let mut all = DMatrix::zeros(ns + n, 1);
    all.view_mut((0, 0), (ns, 1)).copy_from(&xs);
    all.view_mut((ns, 0), (n, 1)).copy_from(&xt);
    let fs = sample(k_s, &all, r);
    let ft = sample(k_t, &xt, r);
    let ys = fs.rows(0, ns).into_owned() + noise(r, ns, 0.05);
    let yt = fs.rows(ns, n).into_owned() + ft + noise(r, n, 0.05);
    MultiTaskData::new(&[(&xs, &ys)], (&xt, &yt)).unwrap()
}

#[test]
fn precompute_recovers_source_lengthscale_and_is_deterministic() {
    let mut r = rng(6);
    let k_s = ks(KernelFamily::Matern52, 1, 0.5, 1.0);
    let k_t = ks(KernelFamily::Matern52, 1, 0.3, 0.1);
    let data = hgp_sample(&mut r, 200, 10, &k_s, &k_t);
    let start = TransferModel::new(
        MultiTaskKernel::hgp(vec![ks(KernelFamily::Matern52, 1, 1.0, 1.0)], ks(KernelFamily::Matern52, 1, 1.0, 0.5)).unwrap(),
        vec![0.01],
        0.01,
    )
    .unwrap();
    let opts = FitOptions { seed: 3, ..Default::default() };
    let a = precompute_source(&start, &data, &opts).unwrap();
    let b = precompute_source(&start, &data, &opts).unwrap();
    assert_eq!(a, b);
    let (src, _) = hgp_parts(&a.kernel).unwrap();
    let l = src[0].lengthscales[0];
    assert!(l > 0.25 && l < 1.0, "{l}");
    let cache = a.source_cache.as_ref().unwrap();
    let mut gram = src[0].gram(&cache.source_x).unwrap();
    for i in 0..cache.len() {
        gram[(i, i)] += a.source_noise[0];
    }
    let rec = &cache.l_source * cache.l_source.transpose();
    assert!((rec - &gram).norm() / gram.norm() < 1e-10);
}

#[test]
fn lmc_precompute_is_a_configuration_error() {
    let mut r = rng(7);
    let m = lmc1(1, &mut r);
    let data = random_data(&mut r, &[10], 5, 1);
    assert!(matches!(precompute_source(&m, &data, &FitOptions::default()), Err(Error::Config(_))));
}

#[test]
fn target_given_source_recovers_residual_and_matches_scratch_lml() {
    let mut r = rng(8);
    let k_s = ks(KernelFamily::Matern52, 1, 1.0, 1.0);
    let k_t = ks(KernelFamily::Matern52, 1, 0.3, 0.5);
    let data = hgp_sample(&mut r, 100, 100, &k_s, &k_t);
    let start = TransferModel::new(MultiTaskKernel::hgp(vec![k_s.clone()], ks(KernelFamily::Matern52, 1, 1.0, 1.0)).unwrap(), vec![0.0025], 0.0025)
        .unwrap();
    let opts = FitOptions { seed: 1, ..Default::default() };
    let pre = precompute_source(&start, &data, &opts).unwrap();
    let fitted = fit_target_given_source(&pre, &data, &opts).unwrap();
    let (_, kt) = hgp_parts(&fitted.kernel).unwrap();
    let l = kt.lengthscales[0];
    assert!(l > 0.15 && l < 0.6, "{l}");
    // same parameters, cache dropped, from scratch
    let mut scratch = fitted.clone();
    scratch.source_cache = None;
    let a = fitted.cached_log_marginal_likelihood(&data).unwrap();
    let b = scratch.log_marginal_likelihood(&data).unwrap();
    assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    // frozen source parameters untouched
    assert_eq!(hgp_parts(&fitted.kernel).unwrap().0, hgp_parts(&pre.kernel).unwrap().0);
    assert_eq!(fitted.source_noise, pre.source_noise);
}

#[test]
fn target_given_source_from_truth_does_not_decrease() {
    let mut r = rng(9);
    let k_s = ks(KernelFamily::Matern52, 1, 1.0, 1.0);
    let k_t = ks(KernelFamily::Matern52, 1, 0.3, 0.5);
    let data = hgp_sample(&mut r, 60, 40, &k_s, &k_t);
    let truth = TransferModel::new(MultiTaskKernel::hgp(vec![k_s], k_t).unwrap(), vec![0.0025], 0.0025).unwrap();
    let (x, tasks, y, _, _) = data.split();
    let mut m = truth.clone();
    m.source_cache = Some(Arc::new(SourceCache::build(&truth, x, tasks, y).unwrap()));
    let before = m.cached_log_marginal_likelihood(&data).unwrap();
    let after = fit_target_given_source(&m, &data, &FitOptions::default()).unwrap();
    assert!(after.cached_log_marginal_likelihood(&data).unwrap() >= before - 1e-9);
}

#[test]
fn cached_and_direct_posteriors_agree() {
    let mut r = rng(10);
    let m = hgp1(2);
    let data = random_data(&mut r, &[40], 12, 2);
    let (x, tasks, y, _, _) = data.split();
    let mut cached = m.clone();
    let cache = Arc::new(SourceCache::build(&m, x, tasks, y).unwrap());
    cached.source_cache = Some(cache.clone());
    let test = inputs(&mut r, 25, 2);
    let c = cached.condition(&data).unwrap();
    assert!(c.uses_source_cache());
    let (mu_c, var_c) = c.predict(&test).unwrap();
    let (mu_d, var_d) = m.condition(&data).unwrap().predict(&test).unwrap();
    assert!((&mu_c - &mu_d).amax() < 1e-8);
    assert!((&var_c - &var_d).amax() < 1e-8);
    let ws = cache.solve_test(&cached, &test).unwrap();
    let (mu_w, var_w) = c.predict_with_source_solve(&test, &ws).unwrap();
    assert!((mu_w - mu_c).amax() < 1e-12 && (var_w - var_c).amax() < 1e-12);
}

#[test]
fn cache_rejects_changed_parameters() {
    let mut r = rng(11);
    let m = hgp1(1);
    let data = random_data(&mut r, &[10], 4, 1);
    let (x, tasks, y, _, _) = data.split();
    let mut cached = m.clone();
    cached.source_cache = Some(Arc::new(SourceCache::build(&m, x, tasks, y).unwrap()));
    cached.source_noise = vec![0.5];
    assert!(matches!(cached.condition(&data), Err(Error::Config(_))));
}

#[test]
fn empty_sources_reduce_to_single_task() {
    let mut r = rng(12);
    let m = TransferModel::new(
        MultiTaskKernel::hgp(
            vec![ks(KernelFamily::Matern32, 1, 0.6, 0.7), ks(KernelFamily::Matern32, 1, 0.6, 0.2)],
            ks(KernelFamily::Matern32, 1, 0.6, 0.1),
        )
        .unwrap(),
        vec![0.1, 0.1],
        0.03,
    )
    .unwrap();
    let data = random_data(&mut r, &[0, 0], 8, 1);
    let test = inputs(&mut r, 6, 1);
    let (mu, var) = m.condition(&data).unwrap().predict(&test).unwrap();
    let (_, _, _, xt, yt) = data.split();
    let (mu0, var0) = GpModel::new(ks(KernelFamily::Matern32, 1, 0.6, 1.0), 0.03).unwrap().posterior(&xt, &yt, &test).unwrap();
    assert!((mu - mu0).amax() < 1e-10);
    assert!((var - var0).amax() < 1e-10);
}

#[test]
fn empty_second_source_matches_one_source() {
    let mut r = rng(13);
    let k0 = ks(KernelFamily::Matern52, 2, 0.7, 1.0);
    let two = TransferModel::new(
        MultiTaskKernel::hgp(vec![k0.clone(), ks(KernelFamily::Rbf, 2, 0.4, 0.3)], ks(KernelFamily::Rbf, 2, 0.4, 0.2)).unwrap(),
        vec![0.02, 0.5],
        0.01,
    )
    .unwrap();
    let one = TransferModel::new(MultiTaskKernel::hgp(vec![k0], ks(KernelFamily::Rbf, 2, 0.4, 0.5)).unwrap(), vec![0.02], 0.01).unwrap();
    let xs = inputs(&mut r, 15, 2);
    let ys = values(&mut r, 15);
    let xt = inputs(&mut r, 6, 2);
    let yt = values(&mut r, 6);
    let e = (DMatrix::zeros(0, 2), DVector::zeros(0));
    let d2 = MultiTaskData::new(&[(&xs, &ys), (&e.0, &e.1)], (&xt, &yt)).unwrap();
    let d1 = MultiTaskData::new(&[(&xs, &ys)], (&xt, &yt)).unwrap();
    let test = inputs(&mut r, 10, 2);
    let (m2, v2) = two.condition(&d2).unwrap().predict(&test).unwrap();
    let (m1, v1) = one.condition(&d1).unwrap().predict(&test).unwrap();
    assert!((m2 - m1).amax() < 1e-10);
    assert!((v2 - v1).amax() < 1e-10);
}

fn fd_check(m: &TransferModel, data: &MultiTaskData) {
    let (_, g) = m.lml_with_gradient(data).unwrap();
    let p = m.log_params();
    assert_eq!(p.len(), g.len());
    for i in 0..p.len() {
        let h = 1e-5;
        let mut pp = p.clone();
        pp[i] += h;
        let up = m.with_log_params(&pp).unwrap().log_marginal_likelihood(data).unwrap();
        pp[i] -= 2.0 * h;
        let dn = m.with_log_params(&pp).unwrap().log_marginal_likelihood(data).unwrap();
        let fd = (up - dn) / (2.0 * h);
        assert!((fd - g[i]).abs() <= 1e-4 * fd.abs().max(1.0), "param {i}: fd {fd} analytic {}", g[i]);
    }
}

#[test]
fn transfer_gradients_match_finite_differences() {
    let mut r = rng(14);
    fd_check(&hgp1(2), &random_data(&mut r, &[15], 8, 2));
    fd_check(&lmc1(2, &mut r), &random_data(&mut r, &[15], 8, 2));
    let lat = (0..3).map(|i| ks(KernelFamily::ALL[i + 1], 1, 0.5 + 0.1 * i as f64, 1.0)).collect();
    let w = (0..3).map(|_| (0..3).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
    let m = TransferModel::new(MultiTaskKernel::lmc(lat, w, vec![0.1, 0.2, 0.3]).unwrap(), vec![0.01, 0.02], 0.03).unwrap();
    fd_check(&m, &random_data(&mut r, &[6, 7], 5, 1));
}

#[test]
fn full_fit_improves_likelihood_and_is_deterministic() {
    let mut r = rng(15);
    let k_s = ks(KernelFamily::Matern52, 1, 0.6, 1.0);
    let k_t = ks(KernelFamily::Matern52, 1, 0.3, 0.2);
    let data = hgp_sample(&mut r, 50, 20, &k_s, &k_t);
    for m in [hgp1(1), lmc1(1, &mut r)] {
        let before = m.log_marginal_likelihood(&data).unwrap();
        let opts = FitOptions { restarts: 2, seed: 4, ..Default::default() };
        let a = fit_full(&m, &data, &opts).unwrap();
        let b = fit_full(&m, &data, &opts).unwrap();
        assert_eq!(a, b);
        assert!(a.log_marginal_likelihood(&data).unwrap() >= before - 1e-9);
    }
}
