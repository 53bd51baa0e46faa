//! Monte Carlo aggregation and the statistical tests shared by experiments.

use statrs::distribution::{Beta, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Single-pass mean/variance accumulator with an associative merge.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Chan et al. pairwise combination. Callers merge in replicate-index order.
    pub fn merge(&mut self, other: &Welford) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * (self.count as f64) * (other.count as f64) / n;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }
}

impl FromIterator<f64> for Welford {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut w = Welford::new();
        for x in iter {
            w.push(x);
        }
        w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McSummary {
    pub count: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub std_error: f64,
    /// `(probability, value)` pairs, present when requested.
    pub quantiles: Option<Vec<(f64, f64)>>,
}

impl McSummary {
    /// Two-pass summary; summation runs in slice order.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                got: samples.len(),
            });
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
        let variance = ss / (n - 1.0);
        Ok(Self {
            count: samples.len(),
            mean,
            variance,
            std_error: (variance / n).sqrt(),
            quantiles: None,
        })
    }

    pub fn with_quantiles(mut self, samples: &[f64], probs: &[f64]) -> Self {
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q = probs
            .iter()
            .map(|&p| (p, quantile_sorted(&sorted, p)))
            .collect();
        self.quantiles = Some(q);
        self
    }

    /// `|mean - target| / SE`; infinite when SE is zero and the mean misses.
    pub fn z_against(&self, target: f64) -> f64 {
        let diff = (self.mean - target).abs();
        if self.std_error > 0.0 {
            diff / self.std_error
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Linear-interpolated quantile of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConfidenceLevel {
    P95,
    P99,
    ThreeSigma,
}

impl ConfidenceLevel {
    pub fn z(self) -> f64 {
        match self {
            ConfidenceLevel::P95 => normal_quantile(0.975),
            ConfidenceLevel::P99 => normal_quantile(0.995),
            ConfidenceLevel::ThreeSigma => 3.0,
        }
    }

    pub fn coverage(self) -> f64 {
        match self {
            ConfidenceLevel::P95 => 0.95,
            ConfidenceLevel::P99 => 0.99,
            ConfidenceLevel::ThreeSigma => 2.0 * normal_cdf(3.0) - 1.0,
        }
    }
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Normal-approximation interval: `(mean, z * SE)`.
pub fn mc_mean_ci(samples: &[f64], level: ConfidenceLevel) -> Result<(f64, f64)> {
    let s = McSummary::from_samples(samples)?;
    Ok((s.mean, level.z() * s.std_error))
}

/// `(p̂ - p₀) / sqrt(p₀(1-p₀)/n)`.
pub fn bernoulli_test(successes: u64, n: u64, p0: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if successes > n {
        return Err(Error::config(format!("{successes} successes out of {n} trials")));
    }
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(Error::config(format!("null probability {p0} outside (0, 1)")));
    }
    let n = n as f64;
    let p_hat = successes as f64 / n;
    Ok((p_hat - p0) / (p0 * (1.0 - p0) / n).sqrt())
}

/// Exact binomial interval, used when the normal approximation degenerates.
pub fn clopper_pearson(successes: u64, n: u64, level: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let alpha = 1.0 - level;
    let k = successes as f64;
    let nf = n as f64;
    let lo = if successes == 0 {
        0.0
    } else {
        Beta::new(k, nf - k + 1.0)
            .map_err(|e| Error::config(e.to_string()))?
            .inverse_cdf(alpha / 2.0)
    };
    let hi = if successes == n {
        1.0
    } else {
        Beta::new(k + 1.0, nf - k)
            .map_err(|e| Error::config(e.to_string()))?
            .inverse_cdf(1.0 - alpha / 2.0)
    };
    Ok((lo, hi))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceEstimate {
    pub lambda: f64,
    pub value: f64,
    pub std_error: f64,
}

/// Sample mean of `exp(-λ·x)` for each λ.
pub fn empirical_laplace(samples: &[f64], lambdas: &[f64]) -> Result<Vec<LaplaceEstimate>> {
    if let Some((i, &x)) = samples.iter().enumerate().find(|(_, x)| !(**x >= 0.0)) {
        return Err(Error::config(format!("sample {i} = {x} is negative")));
    }
    Ok(lambdas
        .iter()
        .map(|&lambda| {
            let w: Welford = samples.iter().map(|&x| (-lambda * x).exp()).collect();
            let se = if w.count() > 1 {
                (w.variance() / w.count() as f64).sqrt()
            } else {
                0.0
            };
            LaplaceEstimate {
                lambda,
                value: if w.count() == 0 { 1.0 } else { w.mean() },
                std_error: se,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub points: usize,
}

/// Ordinary least squares of `y` on `x`.
pub fn linear_regression(points: &[(f64, f64)]) -> Result<LineFit> {
    let n = points.len();
    if n < 3 {
        return Err(Error::InsufficientData { needed: 3, got: n });
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::config("regression abscissae are all equal"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = points
        .iter()
        .map(|p| {
            let r = p.1 - (intercept + slope * p.0);
            r * r
        })
        .sum();
    let slope_stderr = (rss / (nf - 2.0) / sxx).sqrt();
    Ok(LineFit {
        slope,
        intercept,
        slope_stderr,
        points: n,
    })
}

/// OLS on `(ln x, ln y)`.
pub fn loglog_regression(points: &[(f64, f64)]) -> Result<LineFit> {
    let mut logs = Vec::with_capacity(points.len());
    for (index, &(x, y)) in points.iter().enumerate() {
        if !(x > 0.0 && y > 0.0) {
            return Err(Error::NonPositive { index, x, y });
        }
        logs.push((x.ln(), y.ln()));
    }
    linear_regression(&logs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample Kolmogorov–Smirnov with the asymptotic p-value.
///
/// Both empirical CDFs are right-continuous, so tied values are consumed
/// together before the gap is measured.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = na * nb / (na + nb);
    let sq = ne.sqrt();
    let p_value = kolmogorov_survival((sq + 0.12 + 0.11 / sq) * d);
    Ok(KsResult {
        statistic: d,
        p_value,
    })
}

/// `P(K > λ)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = sign * (-2.0 * kf * kf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
