//! Closed-form overhead, threshold and hitting-probability bounds, and the
//! channel capacity functions behind them.
//!
//! Parameter regions where no finite overhead exists produce a
//! [`Verdict::Impossible`] rather than an infinite number.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::chain::NoiseKind;
use crate::error::{check_probability, param, Result};
use crate::meanfield::epochs_to_cross;
use crate::stats::binary_entropy;

/// `exp(-2 n eps^2)`: the Hoeffding bound on a binomial deviating by `n eps`.
pub fn conc_bound(n: f64, epsilon: f64) -> f64 {
    (-2.0 * n * epsilon * epsilon).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HittingBound {
    /// Lower bound on `P[X_t > n beta]` for every `t >= t_cross`.
    pub value: f64,
    /// `1 - value`, computed without cancellation.
    pub complement: f64,
    pub t_cross: u64,
    pub delta: f64,
}

/// `(1 - exp(-2 n (1 - beta) delta^2))^T` with `T` and `delta` from the
/// mean-field crossing.
pub fn hitting_prob_lb(n: f64, p: f64, alpha: f64, beta: f64) -> Result<HittingBound> {
    let crossing = epochs_to_cross(p, alpha, beta)?;
    let miss = conc_bound(n * (1.0 - beta), crossing.delta).min(1.0);
    let per_epoch = 1.0 - miss;
    Ok(HittingBound {
        value: per_epoch.powi(crossing.t as i32),
        complement: -(crossing.t as f64 * (-miss).ln_1p()).exp_m1(),
        t_cross: crossing.t,
        delta: crossing.delta,
    })
}

/// Capacity of an i.i.d. channel as a function of its error probability.
#[derive(Clone)]
pub enum CapacityFn {
    /// `max(0, 1 - 2 gamma)`.
    ErasureExact,
    /// Hashing bound of `rho -> (1 - gamma) rho + gamma I/2`.
    DepolarizingHashing,
    /// Hashing bound, forced to zero from `gamma = 1/3` on.
    DepolarizingPaperThreshold,
    UserSupplied {
        name: String,
        eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl fmt::Debug for CapacityFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl CapacityFn {
    pub fn name(&self) -> String {
        match self {
            CapacityFn::ErasureExact => "erasure-exact".into(),
            CapacityFn::DepolarizingHashing => "depolarizing-hashing".into(),
            CapacityFn::DepolarizingPaperThreshold => "depolarizing-threshold".into(),
            CapacityFn::UserSupplied { name, .. } => format!("user:{name}"),
        }
    }

    pub fn default_for(noise: NoiseKind) -> Self {
        match noise {
            NoiseKind::Erasure => CapacityFn::ErasureExact,
            NoiseKind::Depolarizing => CapacityFn::DepolarizingHashing,
        }
    }

    pub fn user(
        name: impl Into<String>,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        CapacityFn::UserSupplied {
            name: name.into(),
            eval: Arc::new(eval),
        }
    }
}

impl std::str::FromStr for CapacityFn {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "erasure-exact" | "erasure" => Ok(CapacityFn::ErasureExact),
            "depolarizing-hashing" | "hashing" => Ok(CapacityFn::DepolarizingHashing),
            "depolarizing-threshold" | "threshold" => Ok(CapacityFn::DepolarizingPaperThreshold),
            other => Err(format!("unknown capacity mode `{other}`")),
        }
    }
}

fn hashing(gamma: f64) -> f64 {
    let flip = 0.75 * gamma;
    1.0 - binary_entropy(flip) - flip * 3f64.log2()
}

pub fn capacity(f: &CapacityFn, gamma: f64) -> Result<f64> {
    check_probability("gamma", gamma)?;
    let c = match f {
        CapacityFn::ErasureExact => 1.0 - 2.0 * gamma,
        CapacityFn::DepolarizingHashing => hashing(gamma),
        CapacityFn::DepolarizingPaperThreshold if gamma >= 1.0 / 3.0 => 0.0,
        CapacityFn::DepolarizingPaperThreshold => hashing(gamma),
        CapacityFn::UserSupplied { eval, .. } => eval(gamma),
    };
    Ok(c.clamp(0.0, 1.0))
}

/// Either a finite value or the reason none exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    Finite { value: f64 },
    Impossible { violated: String, threshold: f64 },
}

impl Verdict {
    pub fn value(&self) -> Option<f64> {
        match self {
            Verdict::Finite { value } => Some(*value),
            Verdict::Impossible { .. } => None,
        }
    }

    pub fn is_impossible(&self) -> bool {
        matches!(self, Verdict::Impossible { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub l: f64,
    pub p: f64,
    pub alpha: f64,
    pub q: f64,
    pub theta: f64,
    pub noise: NoiseKind,
    pub capacity: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub inputs: BoundInputs,
    /// Residual error fraction `(p - alpha)/p - theta` the code must handle.
    pub beta: f64,
    /// Minimum physical qubit count `n`.
    pub n_min: Verdict,
    /// Minimum `n / l`.
    pub overhead_lb: Verdict,
    /// Parallelization below which no scheme works.
    pub alpha_threshold: f64,
    /// Largest `p` compatible with the given `alpha`.
    pub noise_threshold: f64,
    /// Epochs after which the residual errors are present w.h.p.
    pub c_time: u64,
    pub baseline_full_parallel: Verdict,
    pub crossover_alpha: f64,
}

pub fn alpha_threshold(p: f64, noise: NoiseKind) -> f64 {
    match noise {
        NoiseKind::Erasure => p / 2.0,
        NoiseKind::Depolarizing => 2.0 * p / 3.0,
    }
}

pub fn noise_threshold(alpha: f64, noise: NoiseKind) -> f64 {
    match noise {
        NoiseKind::Erasure => 2.0 * alpha,
        NoiseKind::Depolarizing => 1.5 * alpha,
    }
    .min(1.0)
}

/// Overhead bound with the default capacity function for `noise`.
pub fn overhead_bound(
    l: f64,
    p: f64,
    alpha: f64,
    theta: f64,
    noise: NoiseKind,
) -> Result<BoundReport> {
    overhead_bound_with(
        l,
        p,
        alpha,
        0.0,
        theta,
        noise,
        &CapacityFn::default_for(noise),
    )
}

/// Full bound report at static-phase probability `q`. The overhead bound
/// itself is the `q -> 0` one, valid for every `q`; `q` enters only the
/// full-parallelization baseline and the crossover.
pub fn overhead_bound_with(
    l: f64,
    p: f64,
    alpha: f64,
    q: f64,
    theta: f64,
    noise: NoiseKind,
    cap: &CapacityFn,
) -> Result<BoundReport> {
    check_probability("p", p)?;
    check_probability("alpha", alpha)?;
    check_probability("q", q)?;
    if l.is_nan() || l < 1.0 {
        return Err(param("l", format!("{l} must be at least 1")));
    }
    if alpha >= p {
        return Err(param("alpha", format!("{alpha} must be below p = {p}")));
    }
    let limit = (p - alpha) / p;
    if !(theta > 0.0 && theta < limit) {
        return Err(param("theta", format!("{theta} is outside (0, {limit})")));
    }
    let beta = limit - theta;
    let a_thr = alpha_threshold(p, noise);
    let n_min = if alpha < a_thr {
        Verdict::Impossible {
            violated: format!("alpha < {}", threshold_name(noise)),
            threshold: a_thr,
        }
    } else {
        let c = capacity(cap, beta)?;
        if c > 0.0 {
            Verdict::Finite { value: l / c }
        } else {
            Verdict::Impossible {
                violated: format!(
                    "capacity {} vanishes at residual error fraction",
                    cap.name()
                ),
                threshold: beta,
            }
        }
    };
    let overhead_lb = match &n_min {
        Verdict::Finite { value } => Verdict::Finite { value: value / l },
        other => other.clone(),
    };
    Ok(BoundReport {
        inputs: BoundInputs {
            l,
            p,
            alpha,
            q,
            theta,
            noise,
            capacity: cap.name(),
        },
        beta,
        n_min,
        overhead_lb,
        alpha_threshold: a_thr,
        noise_threshold: noise_threshold(alpha, noise),
        c_time: epochs_to_cross(p, alpha, beta)?.t,
        baseline_full_parallel: full_parallel_baseline(l, p, q)?,
        crossover_alpha: crossover_alpha(p, q, noise),
    })
}

fn threshold_name(noise: NoiseKind) -> &'static str {
    match noise {
        NoiseKind::Erasure => "p/2",
        NoiseKind::Depolarizing => "2p/3",
    }
}

/// Overhead lower bound `l / (1 - 2(1 - (1 - p)(1 - q)))` for fully parallel
/// gates, where the effective error rate is `1 - (1 - p)(1 - q)`.
pub fn full_parallel_baseline(l: f64, p: f64, q: f64) -> Result<Verdict> {
    check_probability("p", p)?;
    check_probability("q", q)?;
    let effective = 1.0 - (1.0 - p) * (1.0 - q);
    let denom = 1.0 - 2.0 * effective;
    Ok(if denom > 0.0 {
        Verdict::Finite { value: l / denom }
    } else {
        Verdict::Impossible {
            violated: "effective error rate 1 - (1-p)(1-q) >= 1/2".into(),
            threshold: 0.5,
        }
    })
}

/// Parallelization below which the constrained bound exceeds the fully
/// parallel one. The same value applies to both noise kinds.
pub fn crossover_alpha(p: f64, q: f64, _noise: NoiseKind) -> f64 {
    p * (1.0 - p) * (1.0 - q)
}

/// Decoherence model `p = 1 - exp(-kappa t_g)` for one batch of duration `t_g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaSurface {
    pub kappa: f64,
    pub t_g: f64,
    pub noise: NoiseKind,
    pub p: f64,
    pub alpha_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaOverhead {
    pub alpha: f64,
    /// `(1 - e^{-kappa t_g}) / (2 alpha - 1 + e^{-kappa t_g})`.
    pub overhead: Verdict,
    /// `2 alpha / (kappa t_g) - 1`, the small-`kappa t_g` expression.
    pub small_kt_expression: f64,
    /// Reciprocal of the expression above, which is what the exact fraction
    /// tends to as `kappa t_g -> 0`.
    pub small_kt_overhead: f64,
    /// `|exact - small_kt_overhead| / exact`.
    pub small_kt_relative_error: Option<f64>,
}

pub fn kappa_surface(kappa: f64, t_g: f64, noise: NoiseKind) -> Result<KappaSurface> {
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(param(
            "kappa",
            format!("{kappa} must be finite and nonnegative"),
        ));
    }
    if !(t_g > 0.0 && t_g.is_finite()) {
        return Err(param("t_g", format!("{t_g} must be finite and positive")));
    }
    let p = -(-kappa * t_g).exp_m1();
    Ok(KappaSurface {
        kappa,
        t_g,
        noise,
        p,
        alpha_min: match noise {
            NoiseKind::Erasure => p / 2.0,
            NoiseKind::Depolarizing => p / 1.5,
        },
    })
}

impl KappaSurface {
    /// Erasure overhead at parallelization `alpha`.
    pub fn overhead(&self, alpha: f64) -> Result<KappaOverhead> {
        check_probability("alpha", alpha)?;
        let kt = self.kappa * self.t_g;
        let small_kt_expression = 2.0 * alpha / kt - 1.0;
        let small_kt_overhead = 1.0 / small_kt_expression;
        let overhead = if alpha <= self.alpha_min {
            Verdict::Impossible {
                violated: "alpha <= alpha_min".into(),
                threshold: self.alpha_min,
            }
        } else {
            // p / (2 alpha - p), with p = 1 - e^{-kt}
            Verdict::Finite {
                value: self.p / (2.0 * alpha - self.p),
            }
        };
        let small_kt_relative_error = overhead
            .value()
            .filter(|_| small_kt_expression > 0.0)
            .map(|exact| (exact - small_kt_overhead).abs() / exact);
        Ok(KappaOverhead {
            alpha,
            overhead,
            small_kt_expression,
            small_kt_overhead,
            small_kt_relative_error,
        })
    }
}
