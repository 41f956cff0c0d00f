//! Numerical helpers shared by the exact oracle and the statistical checks.

use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::ln_gamma;

/// Entries below this are flushed to zero.
pub const PMF_FLOOR: f64 = 1e-300;

/// Two-sided 99% normal quantile.
pub const Z_99: f64 = 2.575_829_303_548_901;

/// `Binomial(trials, p)` probabilities over `0..=trials`.
///
/// The mode is evaluated through log-gamma and the rest by the ratio
/// recurrence in log space, so nothing overflows for large `trials`. The
/// result is renormalized to absorb the rounding of the log-gamma terms.
pub fn binomial_pmf(trials: usize, p: f64) -> Vec<f64> {
    let mut pmf = vec![0.0; trials + 1];
    if p <= 0.0 {
        pmf[0] = 1.0;
        return pmf;
    }
    if p >= 1.0 {
        pmf[trials] = 1.0;
        return pmf;
    }
    let m = trials as f64;
    let mode = (((m + 1.0) * p).floor() as usize).min(trials);
    let log_odds = (p / (1.0 - p)).ln();
    let log_mode =
        ln_gamma(m + 1.0) - ln_gamma(mode as f64 + 1.0) - ln_gamma(m - mode as f64 + 1.0)
            + mode as f64 * p.ln()
            + (m - mode as f64) * (1.0 - p).ln();

    let floor_ln = PMF_FLOOR.ln();
    let mut lp = log_mode;
    pmf[mode] = lp.exp();
    for y in mode..trials {
        lp += ((m - y as f64) / (y as f64 + 1.0)).ln() + log_odds;
        if lp < floor_ln {
            break;
        }
        pmf[y + 1] = lp.exp();
    }
    lp = log_mode;
    for y in (1..=mode).rev() {
        lp -= ((m - y as f64 + 1.0) / y as f64).ln() + log_odds;
        if lp < floor_ln {
            break;
        }
        pmf[y - 1] = lp.exp();
    }
    let total: f64 = pmf.iter().sum();
    pmf.iter_mut().for_each(|v| *v /= total);
    pmf
}

/// Upper tail of the chi-square distribution.
pub fn chi_square_sf(statistic: f64, dof: usize) -> f64 {
    if dof == 0 {
        return f64::NAN;
    }
    let dist = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
    dist.sf(statistic.max(0.0))
}

/// Pearson chi-square of observed counts against equal expected counts.
pub fn chi_square_uniform(counts: &[u64]) -> (f64, usize, f64) {
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    let statistic = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum::<f64>();
    let dof = counts.len() - 1;
    (statistic, dof, chi_square_sf(statistic, dof))
}

pub fn binary_entropy(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn choose(n: u64, k: u64) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    #[test]
    fn pmf_matches_direct_formula() {
        for &(n, p) in &[(0usize, 0.3), (1, 0.3), (7, 0.5), (30, 0.17), (60, 0.93)] {
            let pmf = binomial_pmf(n, p);
            for (y, &v) in pmf.iter().enumerate() {
                let direct =
                    choose(n as u64, y as u64) * p.powi(y as i32) * (1.0 - p).powi((n - y) as i32);
                assert!(
                    (v - direct).abs() < 1e-13,
                    "n={n} p={p} y={y}: {v} vs {direct}"
                );
            }
        }
    }

    #[test]
    fn pmf_large_trials_sums_to_one() {
        let pmf = binomial_pmf(5000, 0.37);
        let total: f64 = pmf.iter().sum();
        assert!((total - 1.0).abs() < 1e-13);
        let mean: f64 = pmf.iter().enumerate().map(|(y, v)| y as f64 * v).sum();
        assert!((mean - 1850.0).abs() < 1e-8);
    }

    #[test]
    fn pmf_degenerate_probabilities() {
        assert_eq!(binomial_pmf(3, 0.0), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(binomial_pmf(3, 1.0), vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn chi_square_tail_known_value() {
        // chi2(2) survival is exp(-x/2).
        assert!((chi_square_sf(3.0, 2) - (-1.5f64).exp()).abs() < 1e-12);
        let (stat, dof, pv) = chi_square_uniform(&[10, 10, 10, 10]);
        assert_eq!((stat, dof), (0.0, 3));
        assert!((pv - 1.0).abs() < 1e-12);
    }
}
