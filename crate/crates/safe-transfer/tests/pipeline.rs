use safe_transfer::datasets::{build_benchmark, BenchmarkKind, BenchmarkOptions};
use safe_transfer::kernels::KernelFamily;
use safe_transfer::safe_loop::{check_exploration_bound, run, LoopConfig, Method, TraceStatus};
use safe_transfer::theory::exploration;

#[test]
fn toy_runs_end_to_end_through_public_api() {
    let b = build_benchmark(&BenchmarkOptions::new(BenchmarkKind::Toy1d, 3)).unwrap();
    for method in [Method::Sal, Method::EffHgp] {
        let cfg = LoopConfig { method, n_query: 15, seed: 3, ..LoopConfig::default() };
        let t = run(&b, &cfg).unwrap();
        assert_eq!(t.status, TraceStatus::Completed);
        assert_eq!(t.records.len(), 15);
        let idx: Vec<usize> = t.records.iter().map(|r| r.iteration).collect();
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
        assert!(t.records.iter().all(|r| r.safe_set_size > 0 && r.rmse.is_finite()));
        assert!(t.safe_query_ratio().unwrap() >= 0.9);
    }
    let t = run(&b, &LoopConfig { n_query: 15, seed: 3, ..LoopConfig::default() }).unwrap();
    assert!(check_exploration_bound(&t, KernelFamily::Matern52).unwrap().holds());
}

#[test]
fn bound_is_monotone_in_sample_count() {
    // more data shrinks the admissible covariance level
    let a = exploration(KernelFamily::Rbf, 4.0, 0.0, 10, 0.1, 1.0).unwrap();
    let b = exploration(KernelFamily::Rbf, 4.0, 0.0, 40, 0.1, 1.0).unwrap();
    assert!(b.delta < a.delta);
    assert!(b.unit_radius > a.unit_radius);
}
