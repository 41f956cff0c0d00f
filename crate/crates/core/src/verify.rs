//! Built-in cross-checks run by `qmem verify`.
//!
//! Each check compares two independent routes to the same quantity on a small
//! fixed grid. Everything is seeded, so a given seed always yields the same
//! report.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::hitting_prob_lb;
use crate::chain::{trajectory_rng, ModelParams};
use crate::exact::{build_kernel, check_h_monotone, evolve, evolve_path, StateDistribution};
use crate::meanfield::{
    crossing_formula, default_delta, g, mf_iterate, sketch_phase_bound, sketch_phase_count,
};
use crate::montecarlo::{run_batch, run_coupled, TrajectoryBatch};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub cases: u64,
    pub failures: u64,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, cases: u64, failures: u64, detail: String) -> Self {
        CheckResult {
            name: name.to_string(),
            passed: failures == 0,
            cases,
            failures,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub master_seed: u64,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

pub fn run_default(master_seed: u64) -> VerifyReport {
    let checks = vec![
        kernel_rows(),
        h_monotone(),
        tails_nondecreasing(),
        hitting_bound_dominance(),
        closed_form_vs_recursion(master_seed),
        crossing_formula_vs_iteration(),
        sketch_bound(),
        oracle_vs_monte_carlo(master_seed),
        coupling(master_seed),
    ];
    VerifyReport {
        master_seed,
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}

fn params(n: usize, p: f64, alpha: f64) -> ModelParams {
    ModelParams::new(n, p, alpha).expect("grid parameters are valid")
}

fn kernel_rows() -> CheckResult {
    let mut cases = 0;
    let mut failures = 0;
    let mut worst = 0.0f64;
    for n in [1, 10, 200] {
        for p in [0.0, 0.3, 1.0] {
            for alpha in [0.0, 0.1, 1.0] {
                let k = build_kernel(&params(n, p, alpha)).expect("below cap");
                let d = k.max_row_defect();
                worst = worst.max(d);
                cases += 1;
                failures += u64::from(d > 1e-12);
            }
        }
    }
    CheckResult::new(
        "kernel_row_sums",
        cases,
        failures,
        format!("max |row sum - 1| = {worst:e}"),
    )
}

fn h_monotone() -> CheckResult {
    let mut cases = 0;
    let mut failures = 0;
    for n in [10, 30, 60] {
        for p in [0.1, 0.5, 0.9] {
            for frac in [0.0, 0.25, 0.5] {
                let k = build_kernel(&params(n, p, frac * p)).expect("below cap");
                for m in [1, 2, 5] {
                    cases += 1;
                    failures += u64::from(!check_h_monotone(&k, m).is_empty());
                }
            }
        }
    }
    CheckResult::new(
        "h_monotone",
        cases,
        failures,
        "kernels with a decreasing h_k".into(),
    )
}

fn tails_nondecreasing() -> CheckResult {
    let mut cases = 0;
    let mut failures = 0;
    for (n, p, frac) in [(40, 0.2, 0.25), (60, 0.5, 0.5), (80, 0.9, 0.0)] {
        let k = build_kernel(&params(n, p, frac * p)).expect("below cap");
        let path = evolve_path(&k, &StateDistribution::initial(n), 60);
        for thr in 0..=n {
            cases += 1;
            let level = thr as f64 - 0.5;
            let ok = path
                .windows(2)
                .all(|w| w[1].tail_prob(level) >= w[0].tail_prob(level) - 1e-12);
            failures += u64::from(!ok);
        }
    }
    CheckResult::new(
        "tails_nondecreasing_in_t",
        cases,
        failures,
        "thresholds with a decreasing tail".into(),
    )
}

fn hitting_bound_dominance() -> CheckResult {
    let mut cases = 0;
    let mut failures = 0;
    let mut min_margin = f64::INFINITY;
    for n in [50, 100, 300] {
        for p in [0.2, 0.5] {
            for frac in [0.25, 0.5, 0.75] {
                let alpha = frac * p;
                let kernel = build_kernel(&params(n, p, alpha)).expect("below cap");
                for bf in [0.25, 0.5, 0.75] {
                    let beta = bf * (p - alpha) / p;
                    let bound = hitting_prob_lb(n as f64, p, alpha, beta).expect("feasible");
                    let dist = evolve(&kernel, &StateDistribution::initial(n), bound.t_cross);
                    // P[X_T > n beta] >= bound, compared through complements
                    let miss = dist.lower_prob(n as f64 * beta);
                    cases += 1;
                    min_margin = min_margin.min(bound.complement - miss);
                    failures += u64::from(miss > bound.complement);
                }
            }
        }
    }
    CheckResult::new(
        "hitting_bound_dominance",
        cases,
        failures,
        format!("min(bound miss - exact miss) = {min_margin:e}"),
    )
}

fn closed_form_vs_recursion(seed: u64) -> CheckResult {
    let mut rng = trajectory_rng(seed, u64::MAX);
    let mut failures = 0;
    let mut worst = 0.0f64;
    let draws = 200;
    for _ in 0..draws {
        let p: f64 = rng.random_range(0.01..1.0);
        let alpha = rng.random_range(0.0..p * 0.99);
        let delta = rng.random_range(0.0..(p - alpha)).max(1e-9);
        let n: f64 = rng.random_range(1.0..1e6);
        let k = rng.random_range(0..200u64);
        let mut x = 0.0;
        for _ in 0..k {
            x = g(n, p, alpha, delta, x);
        }
        let c = mf_iterate(n, p, alpha, delta, k).expect("valid draw");
        let err = (c - x).abs() / n;
        worst = worst.max(err);
        failures += u64::from(err > 1e-9);
    }
    CheckResult::new(
        "closed_form_vs_recursion",
        draws,
        failures,
        format!("max |closed - iterated|/n = {worst:e}"),
    )
}

/// Smallest `k` whose `g`-iterate exceeds `beta`, at unit scale.
pub fn crossing_by_recursion(p: f64, alpha: f64, beta: f64, delta: f64) -> u64 {
    let mut x = 0.0;
    let mut k = 0;
    while x <= beta {
        x = g(1.0, p, alpha, delta, x);
        k += 1;
    }
    k
}

fn crossing_formula_vs_iteration() -> CheckResult {
    let mut cases = 0;
    let mut failures = 0;
    for i in 1..=10 {
        let p = i as f64 / 10.5;
        for j in 0..10 {
            let alpha = p * j as f64 / 10.0;
            let limit = (p - alpha) / p;
            for b in 1..=10 {
                let beta = limit * b as f64 / 11.0;
                let delta = default_delta(p, alpha, beta);
                cases += 1;
                let formula = crossing_formula(p, alpha, beta, delta).max(1);
                failures += u64::from(formula != crossing_by_recursion(p, alpha, beta, delta));
            }
        }
    }
    CheckResult::new(
        "crossing_formula_vs_iteration",
        cases,
        failures,
        "grid points where T differs".into(),
    )
}

fn sketch_bound() -> CheckResult {
    let mut cases = 0;
    let mut failures = 0;
    for p in [0.05, 0.2, 0.5, 0.9] {
        for frac in [0.0, 0.3, 0.6] {
            let alpha = frac * p;
            let limit = (p - alpha) / p;
            for e in 1..10 {
                let eps = limit * e as f64 / 10.0;
                cases += 1;
                let bound = sketch_phase_bound(p, alpha, eps).expect("valid");
                let count = sketch_phase_count(p, alpha, eps).expect("valid");
                failures += u64::from(count as f64 > bound);
            }
        }
    }
    CheckResult::new(
        "sketch_bound_vs_phase_count",
        cases,
        failures,
        "points where phases exceed the bound".into(),
    )
}

fn oracle_vs_monte_carlo(seed: u64) -> CheckResult {
    let (n, p, alpha, beta, t_max) = (100, 0.2, 0.05, 0.5, 50);
    let prm = params(n, p, alpha);
    let kernel = build_kernel(&prm).expect("below cap");
    let path = evolve_path(&kernel, &StateDistribution::initial(n), t_max);
    let threshold = n as f64 * beta;
    let spec = TrajectoryBatch::new(prm, 20_000, t_max, seed);
    let est = run_batch(&spec, threshold).expect("valid batch");
    let mut outside = 0;
    for (t, dist) in path.iter().enumerate() {
        let exact = dist.tail_prob(threshold);
        let se = est.standard_error(exact);
        if (est.p_hat_by_t[t] - exact).abs() > 3.0 * se {
            outside += 1;
        }
    }
    let epochs = path.len() as u64;
    let allowed = epochs - (0.99 * epochs as f64).ceil() as u64;
    let mut r = CheckResult::new(
        "oracle_vs_monte_carlo",
        epochs,
        outside,
        format!("{outside} of {epochs} epochs outside 3 standard errors (allowed {allowed})"),
    );
    r.passed = outside <= allowed;
    r
}

fn coupling(seed: u64) -> CheckResult {
    let prm = params(50, 0.2, 0.05);
    let r = run_coupled(&prm, 0.01, 0.05, 1_000, 30, seed).expect("valid coupling");
    let failures = r.inclusion_violations + u64::from(r.marginal.p_value < 1e-3);
    CheckResult::new(
        "coupled_dominance",
        r.pairs_checked,
        failures,
        format!(
            "{} inclusion violations, marginal chi-square p = {:.4}",
            r.inclusion_violations, r.marginal.p_value
        ),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suite_is_green_and_deterministic() {
        let a = run_default(7);
        for c in &a.checks {
            assert!(c.passed, "{c:?}");
        }
        assert!(a.passed);
        assert_eq!(a, run_default(7));
    }
}
