//! Normality and paired nonparametric tests, effect sizes and p-value correction.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Largest number of nonzero differences for which the exact signed-rank
/// distribution is computed.
pub const EXACT_WILCOXON_MAX_N: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestMethod {
    ShapiroWilk,
    WilcoxonSignedRank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub method: TestMethod,
    /// W for both tests (Shapiro-Wilk W, or min(W+, W-) for the signed-rank test).
    pub statistic: f64,
    /// Standardized statistic; for the signed-rank test its sign follows W+ - E[W+].
    pub z: f64,
    /// Two-sided p-value from the normal approximation (or the Royston transform).
    pub p: f64,
    /// Exact two-sided p-value, when computed.
    pub exact_p: Option<f64>,
    pub n_effective: usize,
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

fn poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Shapiro-Wilk W and p-value (Royston's approximation), for 3 <= n <= 5000.
pub fn shapiro_wilk(sample: &[f64]) -> Result<TestResult> {
    const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056];
    const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
    const G: [f64; 2] = [-2.273, 0.459];
    const C3: [f64; 4] = [0.544, -0.39978, 0.025054, -6.714e-4];
    const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
    const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
    const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];

    let n = sample.len();
    if !(3..=5000).contains(&n) {
        return Err(Error::invalid(format!("Shapiro-Wilk needs 3..=5000 values, got {n}")));
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("sample contains non-finite values"));
    }
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mean = x.iter().sum::<f64>() / nf;
    let ss: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    if ss <= 0.0 || x[n - 1] - x[0] <= f64::EPSILON * x[n - 1].abs().max(x[0].abs()) {
        return Err(Error::DegenerateSample("Shapiro-Wilk sample has zero variance".into()));
    }

    // antisymmetric coefficients for the lower half, largest first
    let half = n / 2;
    let mut a = vec![0.0; half];
    if n == 3 {
        a[0] = std::f64::consts::FRAC_1_SQRT_2;
    } else {
        let normal = std_normal();
        let m: Vec<f64> = (1..=half)
            .map(|i| normal.inverse_cdf((i as f64 - 0.375) / (nf + 0.25)))
            .collect();
        let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
        let ssumm2 = summ2.sqrt();
        let rsn = 1.0 / nf.sqrt();
        let a1 = poly(&C1, rsn) - m[0] / ssumm2;
        let (first, fac) = if n > 5 {
            let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
            let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2)).sqrt();
            a[1] = a2;
            (2, fac)
        } else {
            let fac = ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt();
            (1, fac)
        };
        a[0] = a1;
        for i in first..half {
            a[i] = -m[i] / fac;
        }
    }

    let numerator: f64 = (0..half).map(|i| a[i] * (x[n - 1 - i] - x[i])).sum();
    let w = (numerator * numerator / ss).min(1.0);

    let (z, p) = if n == 3 {
        let p = (6.0 / std::f64::consts::PI * (w.sqrt().asin() - 0.75f64.sqrt().asin())).max(0.0);
        (f64::NAN, p.min(1.0))
    } else {
        let w1 = (1.0 - w).ln();
        if n <= 11 {
            let gamma = poly(&G, nf);
            if w1 >= gamma {
                (f64::INFINITY, 1e-99)
            } else {
                let y = -(gamma - w1).ln();
                let m = poly(&C3, nf);
                let s = poly(&C4, nf).exp();
                let z = (y - m) / s;
                (z, std_normal().sf(z))
            }
        } else {
            let ln_n = nf.ln();
            let m = poly(&C5, ln_n);
            let s = poly(&C6, ln_n).exp();
            let z = (w1 - m) / s;
            (z, std_normal().sf(z))
        }
    };
    Ok(TestResult {
        method: TestMethod::ShapiroWilk,
        statistic: w,
        z,
        p: p.clamp(0.0, 1.0),
        exact_p: None,
        n_effective: n,
    })
}

/// Midranks (1-based) of `values`; tied values share the mean of their ranks.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Exact two-sided p of the signed-rank statistic, given doubled (hence
/// integral) ranks and the doubled positive rank sum. Counts every one of
/// the 2^n sign assignments whose rank sum is at least as extreme.
pub fn exact_signed_rank_p(doubled_ranks: &[u32], doubled_positive_sum: u32) -> f64 {
    let total: u32 = doubled_ranks.iter().sum();
    let mut counts = vec![0u64; total as usize + 1];
    counts[0] = 1;
    let mut reach = 0usize;
    for &r in doubled_ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] > 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let tail_edge = doubled_positive_sum.min(total - doubled_positive_sum) as usize;
    let extreme: u64 = counts[..=tail_edge].iter().sum();
    let patterns = 2f64.powi(doubled_ranks.len() as i32);
    (2.0 * extreme as f64 / patterns).min(1.0)
}

/// Paired two-sided Wilcoxon signed-rank test on `x - y`.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<TestResult> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "paired samples differ in length ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("paired samples contain non-finite values"));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|&v| v != 0.0).collect();
    let n = d.len();
    if n == 0 {
        return Err(Error::DegenerateSample("all paired differences are zero".into()));
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = midranks(&abs);
    let w_plus: f64 = ranks.iter().zip(&d).filter(|(_, &v)| v > 0.0).map(|(r, _)| r).sum();
    let nf = n as f64;
    let w_minus = nf * (nf + 1.0) / 2.0 - w_plus;

    let mut tie_term = 0.0;
    let mut sorted = abs.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let mean = nf * (nf + 1.0) / 4.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let diff = w_plus - mean;
    let corrected = diff.signum() * (diff.abs() - 0.5).max(0.0);
    let z = corrected / var.sqrt();
    let p = erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0);

    let exact_p = (n <= EXACT_WILCOXON_MAX_N).then(|| {
        let doubled: Vec<u32> = ranks.iter().map(|r| (2.0 * r).round() as u32).collect();
        exact_signed_rank_p(&doubled, (2.0 * w_plus).round() as u32)
    });
    Ok(TestResult {
        method: TestMethod::WilcoxonSignedRank,
        statistic: w_plus.min(w_minus),
        z,
        p,
        exact_p,
        n_effective: n,
    })
}

/// Effect size r = z / sqrt(n).
pub fn effect_size_r(z: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("effect size needs n >= 1"));
    }
    Ok(z / (n as f64).sqrt())
}

/// Bonferroni-adjusted p-values: min(1, p * m) with m the number of tests.
pub fn bonferroni(pvals: &[f64]) -> Result<Vec<f64>> {
    let m = pvals.len() as f64;
    pvals
        .iter()
        .map(|&p| {
            if (0.0..=1.0).contains(&p) {
                Ok((p * m).min(1.0))
            } else {
                Err(Error::invalid(format!("p-value {p} outside [0, 1]")))
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Significance {
    #[serde(rename = "ns")]
    NotSignificant,
    #[serde(rename = "*")]
    P05,
    #[serde(rename = "**")]
    P01,
    #[serde(rename = "***")]
    P001,
}

impl fmt::Display for Significance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Significance::NotSignificant => "ns",
            Significance::P05 => "*",
            Significance::P01 => "**",
            Significance::P001 => "***",
        })
    }
}

pub fn significance_flags(p: f64) -> Significance {
    if p < 0.001 {
        Significance::P001
    } else if p < 0.01 {
        Significance::P01
    } else if p < 0.05 {
        Significance::P05
    } else {
        Significance::NotSignificant
    }
}
