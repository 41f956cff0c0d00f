//! Exact distribution evolution over the `n + 1` error counts.
//!
//! This is the brute-force reference for everything else in the crate: the
//! Monte Carlo engine, the mean-field analytics and the hitting-time bound
//! are all checked against it.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::ModelParams;
use crate::error::{Error, Result};
use crate::stats::binomial_pmf;

/// Largest `n` accepted by [`build_kernel`]; a dense kernel at this size is
/// about 200 MB.
pub const DEFAULT_EXACT_CAP: usize = 5000;

/// Tolerance used when looking for decreases in `h_k`.
pub const MONOTONE_TOL: f64 = 1e-10;

/// Row-stochastic one-epoch transition matrix, stored row-major.
///
/// When the parameters carry static-phase noise the kernel also holds the
/// static injection matrix, applied before every `q_period`-th epoch.
#[derive(Debug, Clone)]
pub struct TransitionKernel {
    params: ModelParams,
    k_batch: usize,
    probs: Vec<f64>,
    static_probs: Option<Vec<f64>>,
}

impl TransitionKernel {
    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn k_batch(&self) -> usize {
        self.k_batch
    }

    pub fn dim(&self) -> usize {
        self.params.n + 1
    }

    pub fn row(&self, x: usize) -> &[f64] {
        let d = self.dim();
        &self.probs[x * d..(x + 1) * d]
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.probs[from * self.dim() + to]
    }

    pub fn static_row(&self, x: usize) -> Option<&[f64]> {
        let d = self.dim();
        self.static_probs.as_ref().map(|s| &s[x * d..(x + 1) * d])
    }

    /// Largest deviation of a row sum from 1, over both matrices.
    pub fn max_row_defect(&self) -> f64 {
        let d = self.dim();
        let defect = |m: &[f64]| {
            m.chunks(d)
                .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
                .fold(0.0, f64::max)
        };
        let s = self.static_probs.as_deref().map(defect).unwrap_or(0.0);
        defect(&self.probs).max(s)
    }

    /// `m`-step matrix of the correction chain alone (no static phase).
    pub fn power(&self, m: usize) -> Vec<f64> {
        let d = self.dim();
        let mut acc = self.probs.clone();
        for _ in 1..m {
            acc = mat_mul(&acc, &self.probs, d);
        }
        if m == 0 {
            acc = identity(d);
        }
        acc
    }
}

fn identity(d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        out[i * d + i] = 1.0;
    }
    out
}

fn mat_mul(a: &[f64], b: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d * d];
    out.par_chunks_mut(d).enumerate().for_each(|(i, row)| {
        for (k, &aik) in a[i * d..(i + 1) * d].iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            for (o, &bkj) in row.iter_mut().zip(&b[k * d..(k + 1) * d]) {
                *o += aik * bkj;
            }
        }
    });
    out
}

/// Adds the correction-epoch transition row from state `x` into `out`,
/// scaled by `weight`.
fn accumulate_correction_row(out: &mut [f64], n: usize, k: usize, p: f64, x: usize, weight: f64) {
    for (y, &py) in binomial_pmf(n - x, p).iter().enumerate() {
        if py == 0.0 {
            continue;
        }
        out[(x + y).saturating_sub(k)] += weight * py;
    }
}

fn accumulate_static_row(out: &mut [f64], n: usize, q: f64, x: usize, weight: f64) {
    for (z, &pz) in binomial_pmf(n - x, q).iter().enumerate() {
        if pz != 0.0 {
            out[x + z] += weight * pz;
        }
    }
}

pub fn build_kernel(params: &ModelParams) -> Result<TransitionKernel> {
    build_kernel_with_cap(params, DEFAULT_EXACT_CAP)
}

pub fn build_kernel_with_cap(params: &ModelParams, cap: usize) -> Result<TransitionKernel> {
    params.validate()?;
    let n = params.n;
    if n > cap {
        return Err(Error::ExactCap { n, cap });
    }
    let d = n + 1;
    let k = params.correction_budget();
    let mut probs = vec![0.0; d * d];
    probs
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(x, row)| accumulate_correction_row(row, n, k, params.p, x, 1.0));
    let static_probs = (params.q > 0.0).then(|| {
        let mut s = vec![0.0; d * d];
        s.par_chunks_mut(d)
            .enumerate()
            .for_each(|(x, row)| accumulate_static_row(row, n, params.q, x, 1.0));
        s
    });
    Ok(TransitionKernel {
        params: *params,
        k_batch: k,
        probs,
        static_probs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDistribution {
    pub t: u64,
    pub mass: Vec<f64>,
}

impl StateDistribution {
    /// Point mass at `x` at epoch 0.
    pub fn point(n: usize, x: usize) -> Self {
        let mut mass = vec![0.0; n + 1];
        mass[x] = 1.0;
        StateDistribution { t: 0, mass }
    }

    /// The chain's starting distribution: no errors.
    pub fn initial(n: usize) -> Self {
        Self::point(n, 0)
    }

    pub fn n(&self) -> usize {
        self.mass.len() - 1
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.mass
            .iter()
            .enumerate()
            .map(|(x, m)| x as f64 * m)
            .sum()
    }

    /// `P[X <= threshold]`, summed directly so that it stays accurate when
    /// the upper tail is close to one.
    pub fn lower_prob(&self, threshold: f64) -> f64 {
        self.mass
            .iter()
            .enumerate()
            .take_while(|&(x, _)| x as f64 <= threshold)
            .map(|(_, m)| m)
            .sum()
    }

    pub fn tail_prob(&self, threshold: f64) -> f64 {
        tail_prob(self, threshold)
    }
}

/// `P[X > threshold]`, strict.
pub fn tail_prob(dist: &StateDistribution, threshold: f64) -> f64 {
    dist.mass
        .iter()
        .enumerate()
        .rev()
        .take_while(|(x, _)| *x as f64 > threshold)
        .map(|(_, m)| m)
        .sum()
}

fn push(matrix: &[f64], d: usize, mass: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; d];
    for (x, &w) in mass.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (o, &pr) in out.iter_mut().zip(&matrix[x * d..(x + 1) * d]) {
            *o += w * pr;
        }
    }
    out
}

impl TransitionKernel {
    /// One full epoch starting at epoch `t`.
    fn epoch(&self, t: u64, mass: &[f64]) -> Vec<f64> {
        let d = self.dim();
        match &self.static_probs {
            Some(s) if self.params.static_before_epoch(t) => {
                push(&self.probs, d, &push(s, d, mass))
            }
            _ => push(&self.probs, d, mass),
        }
    }
}

pub fn evolve(
    kernel: &TransitionKernel,
    dist0: &StateDistribution,
    steps: u64,
) -> StateDistribution {
    assert_eq!(
        dist0.mass.len(),
        kernel.dim(),
        "distribution and kernel sizes differ"
    );
    let mut mass = dist0.mass.clone();
    for s in 0..steps {
        mass = kernel.epoch(dist0.t + s, &mass);
    }
    StateDistribution {
        t: dist0.t + steps,
        mass,
    }
}

/// Every intermediate distribution from `dist0` through `steps` epochs.
pub fn evolve_path(
    kernel: &TransitionKernel,
    dist0: &StateDistribution,
    steps: u64,
) -> Vec<StateDistribution> {
    let mut path = Vec::with_capacity(steps as usize + 1);
    path.push(dist0.clone());
    for _ in 0..steps {
        let last = path.last().expect("non-empty");
        path.push(evolve(kernel, last, 1));
    }
    path
}

/// Kernel-free evolution: rows are generated on the fly for states that carry
/// mass. Needs O(n) memory, so it also works far above the exact-mode cap.
pub fn evolve_direct(
    params: &ModelParams,
    dist0: &StateDistribution,
    steps: u64,
) -> StateDistribution {
    let n = params.n;
    assert_eq!(dist0.mass.len(), n + 1);
    let k = params.correction_budget();
    let mut mass = dist0.mass.clone();
    for s in 0..steps {
        if params.static_before_epoch(dist0.t + s) {
            let mut next = vec![0.0; n + 1];
            for (x, &w) in mass.iter().enumerate().filter(|(_, w)| **w > 0.0) {
                accumulate_static_row(&mut next, n, params.q, x, w);
            }
            mass = next;
        }
        let mut next = vec![0.0; n + 1];
        for (x, &w) in mass.iter().enumerate().filter(|(_, w)| **w > 0.0) {
            accumulate_correction_row(&mut next, n, k, params.p, x, w);
        }
        mass = next;
    }
    StateDistribution {
        t: dist0.t + steps,
        mass,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotoneViolation {
    pub k: usize,
    pub x: usize,
    /// `h_k(x) - h_k(x + 1)`, positive.
    pub drop: f64,
}

/// Checks that `h_k^(m)(x) = P[X_{t+m} >= k | X_t = x]` is nondecreasing in
/// `x` for every `k`, using the correction chain's `m`-step matrix.
pub fn check_h_monotone(kernel: &TransitionKernel, m: usize) -> Vec<MonotoneViolation> {
    assert!(m >= 1, "m must be at least 1");
    let d = kernel.dim();
    let pm = kernel.power(m);
    // tails[x][k] = sum_{x' >= k} P^m[x][x']
    let tails: Vec<Vec<f64>> = pm
        .chunks(d)
        .map(|row| {
            let mut t = vec![0.0; d];
            let mut acc = 0.0;
            for k in (0..d).rev() {
                acc += row[k];
                t[k] = acc;
            }
            t
        })
        .collect();
    let mut violations = Vec::new();
    for (x, pair) in tails.windows(2).enumerate() {
        for (k, (lo, hi)) in pair[0].iter().zip(&pair[1]).enumerate() {
            let drop = lo - hi;
            if drop > MONOTONE_TOL {
                violations.push(MonotoneViolation { k, x, drop });
            }
        }
    }
    violations
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingTimeDistribution {
    pub threshold: f64,
    /// `pmf[t] = P[tau = t]` for `t = 0..=t_max`.
    pub pmf: Vec<f64>,
    /// `P[tau > t_max]`.
    pub survival: f64,
}

impl HittingTimeDistribution {
    /// `P[tau <= t]`.
    pub fn cdf(&self, t: usize) -> f64 {
        self.pmf[..=t.min(self.pmf.len() - 1)].iter().sum()
    }

    /// Smallest `t` with `P[tau <= t] >= 1/2`, if reached within the horizon.
    pub fn median(&self) -> Option<u64> {
        let mut acc = 0.0;
        for (t, &v) in self.pmf.iter().enumerate() {
            acc += v;
            if acc >= 0.5 {
                return Some(t as u64);
            }
        }
        None
    }
}

/// First-passage distribution of `tau = inf{t : X_t > threshold}` from
/// `X_0 = 0`, by evolving the sub-distribution that has not yet crossed.
pub fn hitting_time_distribution(
    kernel: &TransitionKernel,
    threshold: f64,
    t_max: u64,
) -> HittingTimeDistribution {
    assert!(t_max >= 1, "t_max must be at least 1");
    let d = kernel.dim();
    let mut pmf = vec![0.0; t_max as usize + 1];
    let mut taboo = vec![0.0; d];
    taboo[0] = 1.0;
    let kill = |mass: &mut Vec<f64>| -> f64 {
        let mut crossed = 0.0;
        for (x, m) in mass.iter_mut().enumerate() {
            if x as f64 > threshold {
                crossed += *m;
                *m = 0.0;
            }
        }
        crossed
    };
    pmf[0] = kill(&mut taboo);
    for t in 1..=t_max {
        taboo = kernel.epoch(t - 1, &taboo);
        pmf[t as usize] = kill(&mut taboo);
    }
    HittingTimeDistribution {
        threshold,
        pmf,
        survival: taboo.iter().sum(),
    }
}

/// Nonzero kernel entries as `from,to,probability` CSV.
pub fn write_kernel_csv<W: Write>(kernel: &TransitionKernel, mut out: W) -> io::Result<()> {
    writeln!(out, "from,to,probability")?;
    for x in 0..kernel.dim() {
        for (to, &pr) in kernel.row(x).iter().enumerate() {
            if pr != 0.0 {
                writeln!(out, "{x},{to},{pr:e}")?;
            }
        }
    }
    Ok(())
}

pub fn write_distribution_csv<W: Write>(dist: &StateDistribution, mut out: W) -> io::Result<()> {
    writeln!(out, "state,probability")?;
    for (x, m) in dist.mass.iter().enumerate() {
        writeln!(out, "{x},{m:e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize, p: f64, alpha: f64) -> ModelParams {
        ModelParams::new(n, p, alpha).unwrap()
    }

    #[test]
    fn lower_and_upper_tails_split_the_mass() {
        let k = build_kernel(&params(40, 0.3, 0.1)).unwrap();
        let d = evolve(&k, &StateDistribution::initial(40), 7);
        for thr in [0.0, 3.5, 12.0, 40.0] {
            assert!((d.lower_prob(thr) + d.tail_prob(thr) - d.total()).abs() < 1e-15);
        }
        assert_eq!(StateDistribution::point(5, 2).lower_prob(2.0), 1.0);
        assert_eq!(StateDistribution::point(5, 2).lower_prob(1.5), 0.0);
    }

    #[test]
    fn single_qubit_kernel() {
        let k = build_kernel(&params(1, 0.3, 0.0)).unwrap();
        assert!((k.get(0, 0) - 0.7).abs() < 1e-15);
        assert!((k.get(0, 1) - 0.3).abs() < 1e-15);
        assert_eq!(k.get(1, 0), 0.0);
        assert_eq!(k.get(1, 1), 1.0);
    }

    #[test]
    fn full_budget_sends_everything_to_zero() {
        let k = build_kernel(&params(12, 0.6, 1.0)).unwrap();
        for x in 0..=12 {
            assert!((k.get(x, 0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_qubit_row() {
        let k = build_kernel(&params(2, 0.5, 0.5)).unwrap();
        assert_eq!(k.k_batch(), 1);
        let row = k.row(0);
        assert!((row[0] - 0.75).abs() < 1e-15);
        assert!((row[1] - 0.25).abs() < 1e-15);
        assert_eq!(row[2], 0.0);
    }

    #[test]
    fn kernel_rows_and_lower_band() {
        let p = params(300, 0.37, 0.1).with_static_noise(0.02, 2).unwrap();
        let k = build_kernel(&p).unwrap();
        assert!(k.max_row_defect() < 1e-12);
        let kb = k.k_batch();
        for x in 0..=300usize {
            for to in 0..x.saturating_sub(kb) {
                assert_eq!(k.get(x, to), 0.0);
            }
        }
    }

    #[test]
    fn cap_is_enforced() {
        let err = build_kernel_with_cap(&params(11, 0.1, 0.1), 10).unwrap_err();
        assert_eq!(err, Error::ExactCap { n: 11, cap: 10 });
        assert!(err.to_string().contains("10"));
    }

    #[test]
    fn evolve_basics() {
        let k = build_kernel(&params(2, 0.5, 0.5)).unwrap();
        let d0 = StateDistribution::initial(2);
        assert_eq!(evolve(&k, &d0, 0), d0);
        let d1 = evolve(&k, &d0, 1);
        assert_eq!(d1.t, 1);
        assert!((d1.mass[0] - 0.75).abs() < 1e-15 && (d1.mass[1] - 0.25).abs() < 1e-15);
        assert!((tail_prob(&d1, 0.5) - 0.25).abs() < 1e-15);

        let k = build_kernel(&params(6, 1.0, 0.0)).unwrap();
        let d1 = evolve(&k, &StateDistribution::initial(6), 1);
        assert_eq!(d1.mass[6], 1.0);
    }

    #[test]
    fn tail_prob_edges() {
        let d = StateDistribution {
            t: 0,
            mass: vec![0.75, 0.25, 0.0],
        };
        assert_eq!(tail_prob(&d, 2.0), 0.0);
        assert_eq!(tail_prob(&d, -1.0), 1.0);
        assert_eq!(tail_prob(&d, 1.0), 0.0);
        assert_eq!(tail_prob(&d, 0.0), 0.25);
    }

    #[test]
    fn direct_evolution_matches_kernel() {
        let p = params(120, 0.25, 0.08).with_static_noise(0.03, 3).unwrap();
        let k = build_kernel(&p).unwrap();
        let d0 = StateDistribution::initial(120);
        let a = evolve(&k, &d0, 17);
        let b = evolve_direct(&p, &d0, 17);
        for (x, y) in a.mass.iter().zip(&b.mass) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn static_noise_interleaving() {
        // p = 0 and alpha = 0: only static injections, before epochs 0, 2, 4.
        let p = params(1, 0.0, 0.0).with_static_noise(0.5, 2).unwrap();
        let k = build_kernel(&p).unwrap();
        let path = evolve_path(&k, &StateDistribution::initial(1), 5);
        let ones: Vec<f64> = path.iter().map(|d| d.mass[1]).collect();
        assert_eq!(ones, vec![0.0, 0.5, 0.5, 0.75, 0.75, 0.875]);
    }

    #[test]
    fn h_monotone_small_cases() {
        let k = build_kernel(&params(2, 0.5, 0.5)).unwrap();
        assert!(check_h_monotone(&k, 1).is_empty());
        let k = build_kernel(&params(50, 0.2, 0.05)).unwrap();
        assert!(check_h_monotone(&k, 3).is_empty());
    }

    #[test]
    fn h_monotone_detects_a_decreasing_kernel() {
        // Swap rows so that higher states move lower: must be flagged.
        let mut k = build_kernel(&params(3, 0.4, 0.0)).unwrap();
        let d = k.dim();
        let (a, b) = k.probs.split_at_mut(3 * d);
        a[..d].swap_with_slice(&mut b[..d]);
        assert!(!check_h_monotone(&k, 1).is_empty());
    }

    #[test]
    fn geometric_hitting_time() {
        let k = build_kernel(&params(1, 0.3, 0.0)).unwrap();
        let h = hitting_time_distribution(&k, 0.5, 30);
        assert_eq!(h.pmf[0], 0.0);
        for t in 1..=30 {
            let expected = 0.7f64.powi(t - 1) * 0.3;
            assert!((h.pmf[t as usize] - expected).abs() < 1e-15);
        }
        let total: f64 = h.pmf.iter().sum::<f64>() + h.survival;
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(h.median(), Some(2));
    }

    #[test]
    fn unreachable_threshold() {
        let k = build_kernel(&params(8, 0.9, 0.1)).unwrap();
        let h = hitting_time_distribution(&k, 8.0, 10);
        assert_eq!(h.survival, 1.0);
        assert!(h.pmf.iter().all(|&v| v == 0.0));
        let h = hitting_time_distribution(&k, -1.0, 3);
        assert_eq!(h.pmf[0], 1.0);
    }

    #[test]
    fn csv_dumps() {
        let k = build_kernel(&params(1, 0.3, 0.0)).unwrap();
        let mut buf = Vec::new();
        write_kernel_csv(&k, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("from,to,probability\n"));
        let mut buf = Vec::new();
        write_distribution_csv(&StateDistribution::initial(2), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
    }
}
