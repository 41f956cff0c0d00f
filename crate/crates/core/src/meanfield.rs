//! Deterministic mean-field analytics.
//!
//! The recursion `g(x) = x + (n - x)(p - delta) - n alpha` started at zero has
//! the closed form `x_k = n(p - delta - alpha)/(p - delta) * (1 - (1 - p + delta)^k)`.
//! The number of epochs it needs to cross `n beta` does not depend on `n`.

use serde::{Deserialize, Serialize};

use crate::error::{check_probability, param, Error, Result};

/// Iteration cap when confirming a crossing count.
const MAX_CROSSING_ITERATIONS: u64 = 10_000_000;

/// One application of the lower-envelope recursion.
pub fn g(n: f64, p: f64, alpha: f64, delta: f64, x: f64) -> f64 {
    x + (n - x) * (p - delta) - n * alpha
}

fn check_delta(p: f64, alpha: f64, delta: f64) -> Result<()> {
    check_probability("p", p)?;
    check_probability("alpha", alpha)?;
    if !(delta > 0.0 && delta < p - alpha) {
        return Err(param(
            "delta",
            format!("{delta} is outside (0, p - alpha) = (0, {})", p - alpha),
        ));
    }
    Ok(())
}

/// Closed form of the `k`-th iterate.
pub fn mf_iterate(n: f64, p: f64, alpha: f64, delta: f64, k: u64) -> Result<f64> {
    check_delta(p, alpha, delta)?;
    Ok(closed_form(n, p, alpha, delta, k))
}

fn closed_form(n: f64, p: f64, alpha: f64, delta: f64, k: u64) -> f64 {
    let a = 1.0 - p + delta;
    let limit = n * (p - delta - alpha) / (p - delta);
    // 1 - a^k without cancellation for a close to 1.
    let growth = -((k as f64) * a.ln()).exp_m1();
    limit * growth
}

/// The iterates `x_k` together with their limit and the crossing epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldSequence {
    pub n: f64,
    pub p: f64,
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    /// Smallest `k` with `x_k > n beta`.
    pub t: u64,
    pub fixed_point: f64,
}

impl MeanFieldSequence {
    /// Uses the default slack `delta = (p - alpha/(1 - beta))/2`.
    pub fn new(n: f64, p: f64, alpha: f64, beta: f64) -> Result<Self> {
        Self::with_delta(n, p, alpha, beta, default_delta(p, alpha, beta))
    }

    pub fn with_delta(n: f64, p: f64, alpha: f64, beta: f64, delta: f64) -> Result<Self> {
        check_feasible(p, alpha, beta)?;
        let upper = p - alpha / (1.0 - beta);
        if !(delta > 0.0 && delta < upper) {
            return Err(param(
                "delta",
                format!("{delta} is outside (0, p - alpha/(1 - beta)) = (0, {upper})"),
            ));
        }
        let t = crossing_by_iteration(p, alpha, beta, delta);
        Ok(MeanFieldSequence {
            n,
            p,
            alpha,
            beta,
            delta,
            t,
            fixed_point: n * (p - delta - alpha) / (p - delta),
        })
    }

    pub fn iterate(&self, k: u64) -> f64 {
        closed_form(self.n, self.p, self.alpha, self.delta, k)
    }

    /// `x_0, x_1, ...` by repeated application of `g`.
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::successors(Some(0.0), move |&x| {
            Some(g(self.n, self.p, self.alpha, self.delta, x))
        })
    }
}

pub fn default_delta(p: f64, alpha: f64, beta: f64) -> f64 {
    0.5 * (p - alpha / (1.0 - beta))
}

fn check_feasible(p: f64, alpha: f64, beta: f64) -> Result<()> {
    check_probability("p", p)?;
    check_probability("alpha", alpha)?;
    if alpha >= p {
        return Err(param("alpha", format!("{alpha} must be below p = {p}")));
    }
    let limit = (p - alpha) / p;
    if beta.is_nan() || beta <= 0.0 {
        return Err(param("beta", format!("{beta} must be positive")));
    }
    if beta >= limit {
        return Err(Error::Infeasible { beta, limit });
    }
    Ok(())
}

/// The crossing epoch and the slack it was computed with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub t: u64,
    pub delta: f64,
}

/// The ceiling formula for the crossing epoch at slack `delta`, unverified.
pub fn crossing_formula(p: f64, alpha: f64, beta: f64, delta: f64) -> u64 {
    let num = (p - alpha - p * beta - delta * (1.0 - beta)).ln() - (p - alpha - delta).ln();
    let ratio = num / (1.0 - p + delta).ln();
    ratio.ceil().max(0.0) as u64
}

/// Smallest `k` with `x_k > beta` at unit scale, by integer iteration.
fn crossing_by_iteration(p: f64, alpha: f64, beta: f64, delta: f64) -> u64 {
    let mut x = 0.0;
    let mut k = 0;
    while x <= beta {
        x = g(1.0, p, alpha, delta, x);
        k += 1;
        assert!(
            k < MAX_CROSSING_ITERATIONS,
            "mean-field crossing did not converge"
        );
    }
    k
}

/// Epochs for the mean-field iterates to cross `n beta` at the default slack.
///
/// The ceiling formula is evaluated first and then confirmed against the
/// closed-form iterates, which settles floating-point ties at the ceiling.
pub fn epochs_to_cross(p: f64, alpha: f64, beta: f64) -> Result<Crossing> {
    epochs_to_cross_with_delta(p, alpha, beta, default_delta(p, alpha, beta))
}

pub fn epochs_to_cross_with_delta(p: f64, alpha: f64, beta: f64, delta: f64) -> Result<Crossing> {
    check_feasible(p, alpha, beta)?;
    let upper = p - alpha / (1.0 - beta);
    if !(delta > 0.0 && delta < upper) {
        return Err(param(
            "delta",
            format!("{delta} is outside (0, p - alpha/(1 - beta)) = (0, {upper})"),
        ));
    }
    let mut t = crossing_formula(p, alpha, beta, delta).max(1);
    let x = |k| closed_form(1.0, p, alpha, delta, k);
    while x(t) <= beta {
        t += 1;
    }
    while t > 1 && x(t - 1) > beta {
        t -= 1;
    }
    Ok(Crossing { t, delta })
}

/// The informal phase-count bound `(p - alpha)/(epsilon p^2)`.
pub fn sketch_phase_bound(p: f64, alpha: f64, epsilon: f64) -> Result<f64> {
    check_probability("p", p)?;
    check_probability("alpha", alpha)?;
    if alpha >= p {
        return Err(param("alpha", format!("{alpha} must be below p = {p}")));
    }
    let limit = (p - alpha) / p;
    if !(epsilon > 0.0 && epsilon < limit) {
        return Err(param(
            "epsilon",
            format!("{epsilon} is outside (0, {limit})"),
        ));
    }
    Ok((p - alpha) / (epsilon * p * p))
}

/// Phases the undamped mean-field recursion `x + max((1 - x)p - alpha, 0)`
/// takes to reach `(p - alpha)/p - epsilon` at unit scale.
pub fn sketch_phase_count(p: f64, alpha: f64, epsilon: f64) -> Result<u64> {
    sketch_phase_bound(p, alpha, epsilon)?;
    let target = (p - alpha) / p - epsilon;
    let mut x = 0.0;
    let mut k = 0;
    while x < target {
        x += ((1.0 - x) * p - alpha).max(0.0);
        k += 1;
    }
    Ok(k)
}

/// Mean-field trajectory with no slack (`delta = 0`), clamped at zero growth,
/// at scale `n`.
pub fn mean_path(n: f64, p: f64, alpha: f64, steps: u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(steps as usize + 1);
    let mut x = 0.0;
    out.push(x);
    for _ in 0..steps {
        x += ((n - x) * p - n * alpha).max(0.0);
        out.push(x);
    }
    out
}
