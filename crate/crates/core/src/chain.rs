//! The error-accumulation chain.
//!
//! One step is one correction epoch: every qubit that is still intact decoheres
//! independently with probability `p`, then at most `k = floor(n * alpha)`
//! erroneous qubits are corrected. Decohered qubits stay decohered until they
//! are corrected, which is what makes erasure and depolarizing noise
//! indistinguishable at the level of error counts.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{check_probability, param, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Erasure,
    Depolarizing,
}

impl std::str::FromStr for NoiseKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "erasure" => Ok(NoiseKind::Erasure),
            "depolarizing" | "depolarising" => Ok(NoiseKind::Depolarizing),
            other => Err(format!("unknown noise kind `{other}`")),
        }
    }
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NoiseKind::Erasure => "erasure",
            NoiseKind::Depolarizing => "depolarizing",
        })
    }
}

/// One memory instance.
///
/// `noise` only selects capacity functions downstream; the chain dynamics are
/// the same for both kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: usize,
    pub p: f64,
    pub alpha: f64,
    pub q: f64,
    pub q_period: usize,
    pub noise: NoiseKind,
}

impl ModelParams {
    pub fn new(n: usize, p: f64, alpha: f64) -> Result<Self> {
        let params = ModelParams {
            n,
            p,
            alpha,
            q: 0.0,
            q_period: 1,
            noise: NoiseKind::Erasure,
        };
        params.validate()?;
        Ok(params)
    }

    /// Enables static-phase noise: one injection with probability `q` before
    /// every `period`-th correction epoch.
    pub fn with_static_noise(mut self, q: f64, period: usize) -> Result<Self> {
        self.q = q;
        self.q_period = period;
        self.validate()?;
        Ok(self)
    }

    pub fn with_noise(mut self, noise: NoiseKind) -> Self {
        self.noise = noise;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(param("n", "must be at least 1"));
        }
        if self.n > u32::MAX as usize {
            return Err(param("n", "must fit in 32 bits"));
        }
        check_probability("p", self.p)?;
        check_probability("alpha", self.alpha)?;
        check_probability("q", self.q)?;
        if self.q_period == 0 {
            return Err(param("q_period", "must be at least 1"));
        }
        Ok(())
    }

    /// Gate budget per batch, `floor(n * alpha)`.
    pub fn correction_budget(&self) -> usize {
        // The 1e-9 absorbs products such as 100 * 0.29 = 28.999999999999996.
        let k = (self.n as f64 * self.alpha + 1e-9).floor();
        (k.max(0.0) as usize).min(self.n)
    }

    /// Whether a static-phase injection precedes correction epoch `t`
    /// (the epoch that maps `X_t` to `X_{t+1}`).
    pub fn static_before_epoch(&self, t: u64) -> bool {
        self.q > 0.0 && t.is_multiple_of(self.q_period as u64)
    }
}

pub fn correction_budget(params: &ModelParams) -> usize {
    params.correction_budget()
}

/// Positions of decohered qubits.
///
/// `slots[..len]` holds the erroneous qubit indices and `slots[len..]` the
/// intact ones; `pos` inverts `slots`. Both random-subset draws are partial
/// Fisher-Yates shuffles, so a step costs O(new errors + corrections).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorSet {
    slots: Vec<u32>,
    pos: Vec<u32>,
    len: usize,
}

impl ErrorSet {
    pub fn new(n: usize) -> Self {
        ErrorSet {
            slots: (0..n as u32).collect(),
            pos: (0..n as u32).collect(),
            len: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.slots.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, qubit: usize) -> bool {
        (self.pos[qubit] as usize) < self.len
    }

    /// Erroneous qubit indices, in no particular order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.slots[..self.len].iter().map(|&q| q as usize)
    }

    fn swap_slots(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        self.slots.swap(a, b);
        self.pos[self.slots[a] as usize] = a as u32;
        self.pos[self.slots[b] as usize] = b as u32;
    }

    /// Marks `count` uniformly chosen intact qubits as decohered.
    pub fn decohere_uniform<R: Rng + ?Sized>(&mut self, count: usize, rng: &mut R) {
        let n = self.n();
        assert!(self.len + count <= n, "more new errors than intact qubits");
        for i in 0..count {
            let j = rng.random_range(self.len + i..n);
            self.swap_slots(self.len + i, j);
        }
        self.len += count;
    }

    /// Corrects `count` uniformly chosen erroneous qubits.
    pub fn correct_uniform<R: Rng + ?Sized>(&mut self, count: usize, rng: &mut R) {
        assert!(count <= self.len, "more corrections than errors");
        for i in 0..count {
            let end = self.len - i;
            let j = rng.random_range(0..end);
            self.swap_slots(j, end - 1);
        }
        self.len -= count;
    }

    /// Corrects one specific qubit. Returns false if it was not erroneous.
    pub fn correct(&mut self, qubit: usize) -> bool {
        if !self.contains(qubit) {
            return false;
        }
        let at = self.pos[qubit] as usize;
        self.swap_slots(at, self.len - 1);
        self.len -= 1;
        true
    }
}

/// Chooses which erroneous qubits a batch corrects.
pub trait CorrectionRule {
    fn correct<R: Rng + ?Sized>(&self, errors: &mut ErrorSet, count: usize, rng: &mut R);
}

/// No prioritization: a uniformly random subset of the erroneous qubits.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformCorrection;

impl CorrectionRule for UniformCorrection {
    fn correct<R: Rng + ?Sized>(&self, errors: &mut ErrorSet, count: usize, rng: &mut R) {
        errors.correct_uniform(count, rng);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainState {
    pub t: u64,
    pub x: usize,
    pub error_set: Option<ErrorSet>,
}

impl ChainState {
    /// All qubits intact at epoch 0, counts only.
    pub fn initial() -> Self {
        ChainState {
            t: 0,
            x: 0,
            error_set: None,
        }
    }

    /// All qubits intact at epoch 0, with location tracking.
    pub fn initial_tracked(n: usize) -> Self {
        ChainState {
            t: 0,
            x: 0,
            error_set: Some(ErrorSet::new(n)),
        }
    }
}

pub(crate) fn sample_binomial<R: Rng + ?Sized>(trials: usize, p: f64, rng: &mut R) -> usize {
    if trials == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return trials;
    }
    Binomial::new(trials as u64, p)
        .expect("probability validated")
        .sample(rng) as usize
}

/// One correction epoch with uniform tie-breaking.
pub fn step<R: Rng + ?Sized>(state: ChainState, params: &ModelParams, rng: &mut R) -> ChainState {
    step_with(state, params, &UniformCorrection, rng)
}

/// One correction epoch with a caller-chosen correction rule. The rule only
/// matters when locations are tracked.
pub fn step_with<C, R>(
    mut state: ChainState,
    params: &ModelParams,
    rule: &C,
    rng: &mut R,
) -> ChainState
where
    C: CorrectionRule + ?Sized,
    R: Rng + ?Sized,
{
    debug_assert!(state.x <= params.n);
    let new_errors = sample_binomial(params.n - state.x, params.p, rng);
    let total = state.x + new_errors;
    let corrected = total.min(params.correction_budget());
    if let Some(set) = state.error_set.as_mut() {
        set.decohere_uniform(new_errors, rng);
        rule.correct(set, corrected, rng);
        debug_assert_eq!(set.len(), total - corrected);
    }
    state.x = total - corrected;
    state.t += 1;
    state
}

/// Static-phase decoherence with probability `q` per intact qubit; nothing is
/// corrected and `t` does not advance.
pub fn inject_static_noise<R: Rng + ?Sized>(
    mut state: ChainState,
    params: &ModelParams,
    rng: &mut R,
) -> ChainState {
    let new_errors = sample_binomial(params.n - state.x, params.q, rng);
    if let Some(set) = state.error_set.as_mut() {
        set.decohere_uniform(new_errors, rng);
    }
    state.x += new_errors;
    state
}

/// A full epoch: the scheduled static injection (if any) followed by one
/// correction step.
pub fn advance<C, R>(state: ChainState, params: &ModelParams, rule: &C, rng: &mut R) -> ChainState
where
    C: CorrectionRule + ?Sized,
    R: Rng + ?Sized,
{
    let state = if params.static_before_epoch(state.t) {
        inject_static_noise(state, params, rng)
    } else {
        state
    };
    step_with(state, params, rule, rng)
}

/// Random stream for trajectory `index` under `master_seed`.
///
/// Each trajectory gets its own ChaCha stream, so results do not depend on
/// how trajectories are scheduled across workers.
pub fn trajectory_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize, p: f64, alpha: f64) -> ModelParams {
        ModelParams::new(n, p, alpha).unwrap()
    }

    #[test]
    fn budget_is_floor_of_product() {
        assert_eq!(params(10, 0.5, 0.3).correction_budget(), 3);
        assert_eq!(params(10, 0.5, 0.35).correction_budget(), 3);
        assert_eq!(params(100, 0.5, 0.0).correction_budget(), 0);
        assert_eq!(params(100, 0.5, 0.29).correction_budget(), 29);
        assert_eq!(params(7, 0.5, 1.0).correction_budget(), 7);
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(ModelParams::new(0, 0.1, 0.1).is_err());
        assert!(ModelParams::new(5, 1.1, 0.1).is_err());
        assert!(ModelParams::new(5, 0.1, -0.1).is_err());
        assert!(params(5, 0.1, 0.1).with_static_noise(0.1, 0).is_err());
        assert!(params(5, 0.1, 0.1).with_static_noise(2.0, 1).is_err());
    }

    #[test]
    fn deterministic_corners() {
        let mut rng = trajectory_rng(1, 0);
        let s = step(ChainState::initial(), &params(5, 1.0, 0.0), &mut rng);
        assert_eq!((s.x, s.t), (5, 1));

        let start = ChainState {
            t: 0,
            x: 3,
            error_set: None,
        };
        let s = step(start, &params(5, 0.0, 1.0), &mut rng);
        assert_eq!(s.x, 0);

        let p = params(3, 0.0, 0.0).with_static_noise(1.0, 1).unwrap();
        let s = inject_static_noise(ChainState::initial(), &p, &mut rng);
        assert_eq!((s.x, s.t), (3, 0));
    }

    #[test]
    fn static_noise_noop_cases() {
        let mut rng = trajectory_rng(2, 0);
        let p = params(4, 0.3, 0.0);
        let s = inject_static_noise(
            ChainState {
                t: 5,
                x: 2,
                error_set: None,
            },
            &p,
            &mut rng,
        );
        assert_eq!((s.t, s.x), (5, 2));

        let p = p.with_static_noise(0.7, 1).unwrap();
        let s = inject_static_noise(
            ChainState {
                t: 5,
                x: 4,
                error_set: None,
            },
            &p,
            &mut rng,
        );
        assert_eq!(s.x, 4);
    }

    #[test]
    fn small_step_distribution() {
        // n=2, p=0.5, k=1 from x=0: {0: 0.75, 1: 0.25}.
        let p = params(2, 0.5, 0.5);
        let mut rng = trajectory_rng(3, 0);
        let trials = 200_000;
        let mut counts = [0usize; 3];
        for _ in 0..trials {
            counts[step(ChainState::initial(), &p, &mut rng).x] += 1;
        }
        assert_eq!(counts[2], 0);
        let f1 = counts[1] as f64 / trials as f64;
        let se = (0.25f64 * 0.75 / trials as f64).sqrt();
        assert!((f1 - 0.25).abs() < 4.0 * se, "f1 = {f1}");
    }

    #[test]
    fn tracked_set_matches_count() {
        let p = params(40, 0.3, 0.1).with_static_noise(0.05, 3).unwrap();
        let mut rng = trajectory_rng(4, 9);
        let mut s = ChainState::initial_tracked(40);
        for _ in 0..100 {
            s = advance(s, &p, &UniformCorrection, &mut rng);
            let set = s.error_set.as_ref().unwrap();
            assert_eq!(set.len(), s.x);
            let mut seen: Vec<usize> = set.iter().collect();
            seen.sort_unstable();
            seen.dedup();
            assert_eq!(seen.len(), s.x);
            assert!(seen.iter().all(|&q| set.contains(q)));
        }
    }

    #[test]
    fn correct_specific_qubit() {
        let mut set = ErrorSet::new(6);
        let mut rng = trajectory_rng(5, 0);
        set.decohere_uniform(6, &mut rng);
        assert!(set.correct(2));
        assert!(!set.correct(2));
        assert!(!set.contains(2));
        assert_eq!(set.len(), 5);
    }

    #[test]
    fn seeded_step_is_reproducible() {
        let p = params(1000, 0.2, 0.05);
        let run = || {
            let mut rng = trajectory_rng(42, 7);
            let mut s = ChainState::initial_tracked(1000);
            for _ in 0..20 {
                s = step(s, &p, &mut rng);
            }
            s
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn streams_differ_by_index() {
        let mut a = trajectory_rng(42, 0);
        let mut b = trajectory_rng(42, 1);
        let xa: u64 = a.random();
        let xb: u64 = b.random();
        assert_ne!(xa, xb);
    }
}
