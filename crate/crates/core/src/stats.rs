//! Small statistics toolbox: running moments, Wilson score intervals,
//! two-sample Kolmogorov-Smirnov tests, and least-squares fits for the
//! experiment harness.

use serde::Serialize;

/// Welford running mean and variance.
#[derive(Clone, Debug, Default)]
pub struct RunningMoments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningMoments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero with fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.count > 1 {
            self.m2 / (self.count - 1) as f64
        } else {
            0.0
        }
    }

    pub fn standard_error(&self) -> f64 {
        if self.count > 0 {
            (self.variance() / self.count as f64).sqrt()
        } else {
            0.0
        }
    }
}

/// Wilson score interval for a binomial proportion.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct WilsonInterval {
    pub estimate: f64,
    pub low: f64,
    pub high: f64,
}

/// 95% Wilson interval (`z = 1.959964`); exactness matters near the 2/3
/// thresholds the experiments test against.
pub fn wilson_interval(successes: u64, trials: u64) -> WilsonInterval {
    assert!(trials > 0, "need at least one trial");
    let z = 1.959963984540054f64;
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = (z / denom) * ((p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt());
    WilsonInterval {
        estimate: p,
        low: (center - half).max(0.0),
        high: (center + half).min(1.0),
    }
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F1 - F2|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty());
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (mut i, mut j) = (0usize, 0usize);
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let mut d = 0.0f64;
    while i < xs.len() && j < ys.len() {
        if xs[i] <= ys[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Result of a two-sample KS test at a given significance level.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct KsTest {
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Accept the equal-distribution hypothesis when the statistic stays below
/// `c(alpha) sqrt((m+n)/(mn))` with `c(alpha) = sqrt(ln(2/alpha)/2)`.
pub fn ks_two_sample(a: &[f64], b: &[f64], alpha: f64) -> KsTest {
    let statistic = ks_statistic(a, b);
    let c = ((2.0 / alpha).ln() / 2.0).sqrt();
    let (m, n) = (a.len() as f64, b.len() as f64);
    let threshold = c * ((m + n) / (m * n)).sqrt();
    KsTest {
        statistic,
        threshold,
        pass: statistic <= threshold,
    }
}

/// Least-squares fit of `y = c x` through the origin, with the coefficient
/// of determination against the mean-centered total sum of squares.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct OriginFit {
    pub slope: f64,
    pub r_squared: f64,
}

pub fn fit_through_origin(x: &[f64], y: &[f64]) -> OriginFit {
    assert_eq!(x.len(), y.len());
    assert!(!x.is_empty());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let slope = sxy / sxx;
    let y_mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - y_mean).powi(2)).sum();
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a).powi(2)).sum();
    OriginFit {
        slope,
        r_squared: if ss_tot > 0.0 {
            1.0 - ss_res / ss_tot
        } else {
            1.0
        },
    }
}

/// Ordinary least squares `y = a + b x`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub r_squared: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> LineFit {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    LineFit {
        intercept,
        slope,
        r_squared: if ss_tot > 0.0 {
            1.0 - ss_res / ss_tot
        } else {
            1.0
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 2.0, 4.0, 8.0, 16.0];
        let mut m = RunningMoments::new();
        for &x in &xs {
            m.push(x);
        }
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((m.mean() - mean).abs() < 1e-12);
        assert!((m.variance() - var).abs() < 1e-12);
    }

    #[test]
    fn wilson_interval_brackets_the_estimate() {
        let w = wilson_interval(667, 1000);
        assert!(w.low < 0.667 && 0.667 < w.high);
        assert!(w.high - w.low < 0.06);
        // known value: 80/100 gives approximately [0.711, 0.867]
        let w = wilson_interval(80, 100);
        assert!((w.low - 0.7112).abs() < 2e-3, "low {}", w.low);
        assert!((w.high - 0.8666).abs() < 2e-3, "high {}", w.high);
    }

    #[test]
    fn ks_accepts_same_distribution_and_rejects_shifted() {
        let mut rng = crate::rng::seeded_rng(5);
        let a: Vec<f64> = (0..4000).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..4000).map(|_| rng.random::<f64>()).collect();
        let t = ks_two_sample(&a, &b, 0.001);
        assert!(t.pass, "stat {} threshold {}", t.statistic, t.threshold);
        let shifted: Vec<f64> = a.iter().map(|x| x + 0.15).collect();
        let t = ks_two_sample(&a, &shifted, 0.001);
        assert!(!t.pass);
    }

    #[test]
    fn fits_recover_planted_coefficients() {
        let x: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v).collect();
        let f = fit_through_origin(&x, &y);
        assert!((f.slope - 2.5).abs() < 1e-12);
        assert!(f.r_squared > 0.999999);

        let y: Vec<f64> = x.iter().map(|v| 1.0 + 0.5 * v).collect();
        let f = fit_line(&x, &y);
        assert!((f.intercept - 1.0).abs() < 1e-12);
        assert!((f.slope - 0.5).abs() < 1e-12);
    }
}
