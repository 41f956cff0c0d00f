use qmem_core::exact::{build_kernel, evolve_direct, evolve_path, StateDistribution};
use qmem_core::meanfield::{epochs_to_cross, mean_path};
use qmem_core::montecarlo::{run_batch, steady_fraction, TrajectoryBatch};
use qmem_core::ModelParams;

const SEED: u64 = 99;

fn within_3se(prm: ModelParams, beta: f64, t_max: u64, n_traj: u64) -> (usize, usize) {
    let n = prm.n;
    let kernel = build_kernel(&prm).unwrap();
    let path = evolve_path(&kernel, &StateDistribution::initial(n), t_max);
    let thr = n as f64 * beta;
    let est = run_batch(&TrajectoryBatch::new(prm, n_traj, t_max, SEED), thr).unwrap();
    let inside = path
        .iter()
        .enumerate()
        .filter(|(t, d)| {
            let exact = d.tail_prob(thr);
            (est.p_hat_by_t[*t] - exact).abs() <= 3.0 * est.standard_error(exact)
        })
        .count();
    (inside, path.len())
}

#[test]
fn monte_carlo_matches_oracle_with_static_noise() {
    let prm = ModelParams::new(60, 0.15, 0.05)
        .unwrap()
        .with_static_noise(0.05, 3)
        .unwrap();
    let (inside, total) = within_3se(prm, 0.4, 40, 20_000);
    assert!(inside + 1 >= total, "{inside}/{total}");
}

#[test]
fn monte_carlo_matches_oracle_depolarizing_high_rate() {
    let prm = ModelParams::new(40, 0.6, 0.3).unwrap();
    let (inside, total) = within_3se(prm, 0.4, 30, 20_000);
    assert!(inside + 1 >= total, "{inside}/{total}");
}

#[test]
fn direct_evolution_matches_kernel() {
    let prm = ModelParams::new(300, 0.3, 0.1)
        .unwrap()
        .with_static_noise(0.1, 2)
        .unwrap();
    let kernel = build_kernel(&prm).unwrap();
    let start = StateDistribution::initial(300);
    let via_kernel = evolve_path(&kernel, &start, 12);
    let direct = evolve_direct(&prm, &start, 12);
    let last = via_kernel.last().unwrap();
    let diff: f64 = last
        .mass
        .iter()
        .zip(&direct.mass)
        .map(|(a, b)| (a - b).abs())
        .sum();
    assert!(diff < 1e-10, "{diff}");
}

#[test]
fn mean_field_tracks_exact_mean_at_large_n() {
    let (n, p, alpha) = (10_000, 0.2, 0.05);
    let t_cross = epochs_to_cross(p, alpha, 0.5).unwrap().t;
    let prm = ModelParams::new(n, p, alpha).unwrap();
    let mf = mean_path(n as f64, p, alpha, t_cross);
    let mut dist = StateDistribution::initial(n);
    for (t, &x) in mf.iter().enumerate().skip(1) {
        dist = evolve_direct(&prm, &dist, 1);
        let gap = (dist.mean() - x).abs();
        assert!(
            gap <= 0.05 * n as f64,
            "t = {t}: exact {} vs mean field {x}",
            dist.mean()
        );
    }
}

#[test]
fn steady_fraction_converges_in_n() {
    let (p, alpha) = (0.3, 0.15);
    let target = (p - alpha) / p;
    let mut devs = Vec::new();
    for n in [1_000, 10_000, 100_000] {
        let spec = TrajectoryBatch::new(ModelParams::new(n, p, alpha).unwrap(), 200, 200, SEED);
        devs.push((steady_fraction(&spec, 100).unwrap().mean - target).abs());
    }
    assert!(devs[2] <= 0.01, "{devs:?}");
    assert!(devs[2] <= devs[0], "{devs:?}");
}

#[test]
fn ample_budget_keeps_memory_clean() {
    // alpha >= p
    for n in [10_000, 50_000] {
        let spec = TrajectoryBatch::new(ModelParams::new(n, 0.05, 0.06).unwrap(), 100, 100, SEED);
        let s = steady_fraction(&spec, 50).unwrap();
        assert!(s.mean < 0.01, "n = {n}: {}", s.mean);
    }
}
