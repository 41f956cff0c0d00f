//! Trajectory simulation.
//!
//! Trajectory `i` always draws from stream `i` of the master seed, and all
//! aggregates are integer counters merged by addition, so results are
//! bit-identical for a given seed whatever the worker count.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{
    advance, trajectory_rng, ChainState, CorrectionRule, ModelParams, UniformCorrection,
};
use crate::error::{check_probability, param, Result};
use crate::stats::{binomial_pmf, chi_square_sf, chi_square_uniform, Z_99};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Record {
    CountsOnly,
    Locations,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryBatch {
    pub params: ModelParams,
    pub n_traj: u64,
    pub t_max: u64,
    pub master_seed: u64,
    pub record: Record,
}

impl TrajectoryBatch {
    pub fn new(params: ModelParams, n_traj: u64, t_max: u64, master_seed: u64) -> Self {
        TrajectoryBatch {
            params,
            n_traj,
            t_max,
            master_seed,
            record: Record::CountsOnly,
        }
    }

    pub fn with_locations(mut self) -> Self {
        self.record = Record::Locations;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.n_traj == 0 {
            return Err(param("n_traj", "must be at least 1"));
        }
        if self.t_max == 0 {
            return Err(param("t_max", "must be at least 1"));
        }
        Ok(())
    }

    fn initial_state(&self) -> ChainState {
        match self.record {
            Record::CountsOnly => ChainState::initial(),
            Record::Locations => ChainState::initial_tracked(self.params.n),
        }
    }

    /// Runs trajectory `index` for `horizon` epochs, calling `visit` on every
    /// state including the initial one.
    fn run_one<C, F>(&self, index: u64, horizon: u64, rule: &C, mut visit: F)
    where
        C: CorrectionRule + ?Sized,
        F: FnMut(&ChainState),
    {
        let mut rng = trajectory_rng(self.master_seed, index);
        let mut state = self.initial_state();
        visit(&state);
        for _ in 0..horizon {
            state = advance(state, &self.params, rule, &mut rng);
            visit(&state);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingEstimate {
    pub threshold: f64,
    pub n_traj: u64,
    /// Trajectories with `X_t > threshold`, for `t = 0..=t_max`.
    pub exceed_counts: Vec<u64>,
    pub p_hat_by_t: Vec<f64>,
    /// Normal-approximation 99% half-widths.
    pub ci_halfwidth_by_t: Vec<f64>,
    pub mean_x_by_t: Vec<f64>,
    /// First epoch above the threshold per trajectory; `None` if it never
    /// crossed within the horizon.
    pub tau_samples: Option<Vec<Option<u64>>>,
}

impl HittingEstimate {
    /// Standard error of `p_hat` at `t` when the true probability is `p`.
    pub fn standard_error(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.n_traj as f64).sqrt()
    }

    /// Median hitting time; `None` if fewer than half the trajectories crossed.
    pub fn median_hitting_time(&self) -> Option<u64> {
        let taus = self.tau_samples.as_ref()?;
        let mut hit: Vec<u64> = taus.iter().flatten().copied().collect();
        let need = taus.len().div_ceil(2);
        if hit.len() < need {
            return None;
        }
        hit.sort_unstable();
        Some(hit[need - 1])
    }
}

#[derive(Clone)]
struct Tally {
    exceed: Vec<u64>,
    x_sum: Vec<u64>,
    taus: Vec<(u64, Option<u64>)>,
}

impl Tally {
    fn new(len: usize) -> Self {
        Tally {
            exceed: vec![0; len],
            x_sum: vec![0; len],
            taus: Vec::new(),
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        for (a, b) in self.exceed.iter_mut().zip(&other.exceed) {
            *a += b;
        }
        for (a, b) in self.x_sum.iter_mut().zip(&other.x_sum) {
            *a += b;
        }
        self.taus.extend(other.taus);
        self
    }
}

/// Empirical `P[X_t > threshold]` for every epoch up to the horizon.
pub fn run_batch(spec: &TrajectoryBatch, threshold: f64) -> Result<HittingEstimate> {
    run_batch_with(spec, threshold, &UniformCorrection)
}

pub fn run_batch_with<C>(
    spec: &TrajectoryBatch,
    threshold: f64,
    rule: &C,
) -> Result<HittingEstimate>
where
    C: CorrectionRule + Sync + ?Sized,
{
    spec.validate()?;
    let len = spec.t_max as usize + 1;
    let mut tally = (0..spec.n_traj)
        .into_par_iter()
        .fold(
            || Tally::new(len),
            |mut acc, i| {
                let mut tau = None;
                spec.run_one(i, spec.t_max, rule, |s| {
                    let t = s.t as usize;
                    acc.x_sum[t] += s.x as u64;
                    if s.x as f64 > threshold {
                        acc.exceed[t] += 1;
                        tau.get_or_insert(s.t);
                    }
                });
                acc.taus.push((i, tau));
                acc
            },
        )
        .reduce(|| Tally::new(len), Tally::merge);
    tally.taus.sort_unstable_by_key(|&(i, _)| i);

    let n = spec.n_traj as f64;
    let p_hat_by_t: Vec<f64> = tally.exceed.iter().map(|&c| c as f64 / n).collect();
    let ci_halfwidth_by_t = p_hat_by_t
        .iter()
        .map(|&p| Z_99 * (p * (1.0 - p) / n).sqrt())
        .collect();
    Ok(HittingEstimate {
        threshold,
        n_traj: spec.n_traj,
        exceed_counts: tally.exceed,
        p_hat_by_t,
        ci_halfwidth_by_t,
        mean_x_by_t: tally.x_sum.iter().map(|&s| s as f64 / n).collect(),
        tau_samples: Some(tally.taus.into_iter().map(|(_, t)| t).collect()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyFraction {
    pub mean: f64,
    /// Across-trajectory standard error; absent with a single trajectory.
    pub stderr: Option<f64>,
    pub burn_in: u64,
}

/// Time-and-ensemble average of `X_t / n` over `t` in `(burn_in, t_max]`.
pub fn steady_fraction(spec: &TrajectoryBatch, burn_in: u64) -> Result<SteadyFraction> {
    spec.validate()?;
    if burn_in >= spec.t_max {
        return Err(param(
            "burn_in",
            format!("{burn_in} must be below t_max = {}", spec.t_max),
        ));
    }
    let n = spec.params.n as f64;
    let window = (spec.t_max - burn_in) as f64;
    let per_traj: Vec<f64> = (0..spec.n_traj)
        .into_par_iter()
        .map(|i| {
            let mut sum = 0u64;
            spec.run_one(i, spec.t_max, &UniformCorrection, |s| {
                if s.t > burn_in {
                    sum += s.x as u64;
                }
            });
            sum as f64 / window / n
        })
        .collect();
    let m = per_traj.len() as f64;
    let mean = per_traj.iter().sum::<f64>() / m;
    let stderr = (per_traj.len() > 1).then(|| {
        let var = per_traj.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
        (var / m).sqrt()
    });
    Ok(SteadyFraction {
        mean,
        stderr,
        burn_in,
    })
}

/// Burn-in of half the horizon.
pub fn steady_fraction_default(spec: &TrajectoryBatch) -> Result<SteadyFraction> {
    steady_fraction(spec, spec.t_max / 2)
}

/// Number of probability-integral-transform bins in the marginal check.
pub const MARGINAL_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalCheck {
    pub samples: u64,
    pub bins: Vec<u64>,
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub n: usize,
    pub q_low: f64,
    pub q_high: f64,
    pub n_paths: u64,
    pub t_max: u64,
    /// `(path, t)` pairs inspected, `t = 0..=t_max`.
    pub pairs_checked: u64,
    /// Pairs where the low memory had an error the high memory did not.
    pub inclusion_violations: u64,
    /// Pairs with `X_low > X_high`.
    pub count_violations: u64,
    pub dominance_fraction: f64,
    /// Paths on which both memories agreed at every epoch.
    pub identical_paths: u64,
    /// Static-phase error counts of the low memory, tested against
    /// `Binomial(n - X_low, q_low)`.
    pub marginal: MarginalCheck,
}

struct CoupledPair {
    low: Vec<bool>,
    high: Vec<bool>,
}

struct PathTally {
    pairs: u64,
    inclusion: u64,
    count: u64,
    identical: u64,
    bins: Vec<u64>,
}

impl PathTally {
    fn new() -> Self {
        PathTally {
            pairs: 0,
            inclusion: 0,
            count: 0,
            identical: 0,
            bins: vec![0; MARGINAL_BINS],
        }
    }

    fn merge(mut self, o: PathTally) -> PathTally {
        self.pairs += o.pairs;
        self.inclusion += o.inclusion;
        self.count += o.count;
        self.identical += o.identical;
        for (a, b) in self.bins.iter_mut().zip(&o.bins) {
            *a += b;
        }
        self
    }
}

/// Uniformly random `k`-subset of `items`, moved to the front.
fn choose_front<R: Rng + ?Sized>(items: &mut [usize], k: usize, rng: &mut R) {
    for i in 0..k {
        let j = rng.random_range(i..items.len());
        items.swap(i, j);
    }
}

impl CoupledPair {
    fn new(n: usize) -> Self {
        CoupledPair {
            low: vec![false; n],
            high: vec![false; n],
        }
    }

    fn count(v: &[bool]) -> usize {
        v.iter().filter(|&&b| b).count()
    }

    /// Static phase; returns `(intact low qubits before, new low errors)`.
    fn static_phase<R: Rng + ?Sized>(
        &mut self,
        q_low: f64,
        q_high: f64,
        rng: &mut R,
    ) -> (usize, usize) {
        let intact = self.low.iter().filter(|&&b| !b).count();
        let copy = q_low / q_high;
        let mut new_low = 0;
        for (lo, hi) in self.low.iter_mut().zip(self.high.iter_mut()) {
            if !*hi {
                if rng.random::<f64>() < q_high {
                    *hi = true;
                    // Copied to the low memory with probability q_low/q_high.
                    if rng.random::<f64>() < copy {
                        *lo = true;
                        new_low += 1;
                    }
                }
            } else if !*lo && rng.random::<f64>() < q_low {
                // Already erroneous in the high memory: independent draw.
                *lo = true;
                new_low += 1;
            }
        }
        (intact, new_low)
    }

    /// Correction-phase noise from one shared uniform per qubit, then
    /// correction with the low memory's corrected set built from the high's.
    fn correction_phase<R: Rng + ?Sized>(&mut self, p: f64, k: usize, rng: &mut R) {
        for (lo, hi) in self.low.iter_mut().zip(self.high.iter_mut()) {
            let u = rng.random::<f64>();
            if u < p {
                *lo = true;
                *hi = true;
            }
        }
        let mut high_set: Vec<usize> = (0..self.high.len()).filter(|&i| self.high[i]).collect();
        let low_total = Self::count(&self.low);
        if high_set.len() <= k {
            self.high.iter_mut().for_each(|b| *b = false);
            self.low.iter_mut().for_each(|b| *b = false);
            return;
        }
        choose_front(&mut high_set, k, rng);
        let corrected_high = &high_set[..k];
        for &i in corrected_high {
            self.high[i] = false;
        }
        if low_total <= k {
            self.low.iter_mut().for_each(|b| *b = false);
            return;
        }
        let mut already = 0;
        for &i in corrected_high {
            if self.low[i] {
                self.low[i] = false;
                already += 1;
            }
        }
        let mut rest: Vec<usize> = (0..self.low.len()).filter(|&i| self.low[i]).collect();
        let extra = k - already;
        choose_front(&mut rest, extra, rng);
        for &i in &rest[..extra] {
            self.low[i] = false;
        }
    }
}

/// Randomized probability integral transform of `z ~ Binomial(m, q)`.
fn pit_bin<R: Rng + ?Sized>(
    cache: &mut HashMap<usize, Vec<f64>>,
    m: usize,
    q: f64,
    z: usize,
    rng: &mut R,
) -> usize {
    let pmf = cache.entry(m).or_insert_with(|| binomial_pmf(m, q));
    let below: f64 = pmf[..z].iter().sum();
    let u = (below + rng.random::<f64>() * pmf[z]).clamp(0.0, 1.0 - f64::EPSILON);
    (u * MARGINAL_BINS as f64) as usize
}

/// Simulates paired memories with static-phase probabilities `q_low` and
/// `q_high` on shared randomness and checks pathwise error-set inclusion.
/// `params.q` is ignored; `params.q_period` sets the static schedule.
pub fn run_coupled(
    params: &ModelParams,
    q_low: f64,
    q_high: f64,
    n_traj: u64,
    t_max: u64,
    master_seed: u64,
) -> Result<DominanceReport> {
    params.validate()?;
    check_probability("q_low", q_low)?;
    check_probability("q_high", q_high)?;
    if q_low > q_high {
        return Err(param("q_low", format!("{q_low} exceeds q_high = {q_high}")));
    }
    if q_high == 0.0 {
        return Err(param("q_high", "must be positive"));
    }
    if n_traj == 0 || t_max == 0 {
        return Err(param("n_traj", "n_traj and t_max must be at least 1"));
    }
    let n = params.n;
    let k = params.correction_budget();
    let period = params.q_period as u64;
    let tally = (0..n_traj)
        .into_par_iter()
        .fold(PathTally::new, |mut acc, i| {
            let mut rng = trajectory_rng(master_seed, i);
            let mut pair = CoupledPair::new(n);
            let mut cache = HashMap::new();
            let mut identical = true;
            let mut inspect = |pair: &CoupledPair, acc: &mut PathTally| {
                acc.pairs += 1;
                if pair.low.iter().zip(&pair.high).any(|(&l, &h)| l && !h) {
                    acc.inclusion += 1;
                }
                if CoupledPair::count(&pair.low) > CoupledPair::count(&pair.high) {
                    acc.count += 1;
                }
                identical &= pair.low == pair.high;
            };
            inspect(&pair, &mut acc);
            for t in 0..t_max {
                if t % period == 0 {
                    let (intact, z) = pair.static_phase(q_low, q_high, &mut rng);
                    acc.bins[pit_bin(&mut cache, intact, q_low, z, &mut rng)] += 1;
                }
                pair.correction_phase(params.p, k, &mut rng);
                inspect(&pair, &mut acc);
            }
            if identical {
                acc.identical += 1;
            }
            acc
        })
        .reduce(PathTally::new, PathTally::merge);

    let samples: u64 = tally.bins.iter().sum();
    let (statistic, dof, p_value) = chi_square_uniform(&tally.bins);
    Ok(DominanceReport {
        n,
        q_low,
        q_high,
        n_paths: n_traj,
        t_max,
        pairs_checked: tally.pairs,
        inclusion_violations: tally.inclusion,
        count_violations: tally.count,
        dominance_fraction: 1.0 - tally.inclusion as f64 / tally.pairs as f64,
        identical_paths: tally.identical,
        marginal: MarginalCheck {
            samples,
            bins: tally.bins,
            statistic,
            dof,
            p_value,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityReport {
    pub n: usize,
    pub n_traj: u64,
    pub t_probe: u64,
    /// Trajectories in which each qubit was erroneous at `t_probe`.
    pub counts: Vec<u64>,
    /// Every qubit always erroneous, or never: no test is possible.
    pub degenerate: bool,
    pub statistic: Option<f64>,
    pub dof: usize,
    pub p_value: Option<f64>,
}

/// Chi-square test of homogeneity of per-qubit error frequencies at
/// `t_probe`, pooled over trajectories.
pub fn uniformity_check(spec: &TrajectoryBatch, t_probe: u64) -> Result<UniformityReport> {
    uniformity_check_with(spec, t_probe, &UniformCorrection)
}

pub fn uniformity_check_with<C>(
    spec: &TrajectoryBatch,
    t_probe: u64,
    rule: &C,
) -> Result<UniformityReport>
where
    C: CorrectionRule + Sync + ?Sized,
{
    spec.validate()?;
    if spec.record != Record::Locations {
        return Err(param("record", "uniformity check needs location tracking"));
    }
    if t_probe == 0 || t_probe > spec.t_max {
        return Err(param(
            "t_probe",
            format!("{t_probe} is outside [1, {}]", spec.t_max),
        ));
    }
    let n = spec.params.n;
    let counts = (0..spec.n_traj)
        .into_par_iter()
        .fold(
            || vec![0u64; n],
            |mut acc, i| {
                spec.run_one(i, t_probe, rule, |s| {
                    if s.t == t_probe {
                        for q in s.error_set.as_ref().expect("tracked").iter() {
                            acc[q] += 1;
                        }
                    }
                });
                acc
            },
        )
        .reduce(
            || vec![0u64; n],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                a
            },
        );

    let trials = spec.n_traj as f64;
    let total: u64 = counts.iter().sum();
    let pooled = total as f64 / (trials * n as f64);
    let dof = n.saturating_sub(1);
    let degenerate = total == 0 || total == spec.n_traj * n as u64 || n < 2;
    let (statistic, p_value) = if degenerate {
        (None, None)
    } else {
        let expected = trials * pooled;
        let var = expected * (1.0 - pooled);
        let stat: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / var)
            .sum();
        (Some(stat), Some(chi_square_sf(stat, dof)))
    };
    Ok(UniformityReport {
        n,
        n_traj: spec.n_traj,
        t_probe,
        counts,
        degenerate,
        statistic,
        dof,
        p_value,
    })
}
