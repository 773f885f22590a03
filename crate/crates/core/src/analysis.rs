//! Stylized-fact statistics of price and wealth series.
//!
//! Moments use population (biased) estimators throughout.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::StatsError;

type Result<T> = std::result::Result<T, StatsError>;

/// `r_k = log(S_{k+1}/S_k)`.
pub fn log_returns(prices: &[f64]) -> Result<Vec<f64>> {
    if prices.len() < 2 {
        return Err(StatsError::TooFewSamples { needed: 2, got: prices.len() });
    }
    if let Some(&p) = prices.iter().find(|&&p| !(p > 0.0)) {
        return Err(StatsError::NonPositivePrice(p));
    }
    Ok(prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population central moments `(m2, m4)` about the mean.
fn central_moments(xs: &[f64]) -> (f64, f64) {
    let mu = mean(xs);
    let (mut m2, mut m4) = (0.0, 0.0);
    for &x in xs {
        let d = x - mu;
        let d2 = d * d;
        m2 += d2;
        m4 += d2 * d2;
    }
    let n = xs.len() as f64;
    (m2 / n, m4 / n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryStats {
    pub mean: f64,
    pub variance: f64,
    /// `None` for zero variance or fewer than four samples.
    pub excess_kurtosis: Option<f64>,
    pub count: usize,
}

pub fn summary(samples: &[f64]) -> Result<SummaryStats> {
    if samples.is_empty() {
        return Err(StatsError::TooFewSamples { needed: 1, got: 0 });
    }
    let (m2, _) = central_moments(samples);
    Ok(SummaryStats {
        mean: mean(samples),
        variance: m2,
        excess_kurtosis: excess_kurtosis(samples).ok(),
        count: samples.len(),
    })
}

/// `m4 / m2² − 3`.
pub fn excess_kurtosis(samples: &[f64]) -> Result<f64> {
    if samples.len() < 4 {
        return Err(StatsError::TooFewSamples { needed: 4, got: samples.len() });
    }
    let (m2, m4) = central_moments(samples);
    if !(m2 > 0.0) {
        return Err(StatsError::ZeroVariance);
    }
    Ok(m4 / (m2 * m2) - 3.0)
}

/// `ρ(ℓ) = Σ (x_t − x̄)(x_{t+ℓ} − x̄) / Σ (x_t − x̄)²` for `ℓ = 0..=max_lag`.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if series.len() <= max_lag {
        return Err(StatsError::TooFewSamples { needed: max_lag + 1, got: series.len() });
    }
    let mu = mean(series);
    let centered: Vec<f64> = series.iter().map(|x| x - mu).collect();
    let denom: f64 = centered.iter().map(|d| d * d).sum();
    if !(denom > 0.0) {
        return Err(StatsError::ZeroVariance);
    }
    Ok((0..=max_lag)
        .map(|lag| centered.iter().zip(&centered[lag..]).map(|(a, b)| a * b).sum::<f64>() / denom)
        .collect())
}

/// Sorted standardised samples against standard normal quantiles at
/// plotting positions `(i − 0.5)/n`; pairs are `(theoretical, empirical)`.
pub fn qq_points(samples: &[f64]) -> Result<Vec<(f64, f64)>> {
    if samples.len() < 2 {
        return Err(StatsError::TooFewSamples { needed: 2, got: samples.len() });
    }
    let (m2, _) = central_moments(samples);
    if !(m2 > 0.0) {
        return Err(StatsError::ZeroVariance);
    }
    let (mu, sd) = (mean(samples), m2.sqrt());
    let mut z: Vec<f64> = samples.iter().map(|x| (x - mu) / sd).collect();
    z.sort_by(f64::total_cmp);
    let normal = Normal::standard();
    let n = z.len() as f64;
    Ok(z.into_iter().enumerate().map(|(i, e)| (normal.inverse_cdf((i as f64 + 0.5) / n), e)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

/// Equal-width bins over `[min, max]`; the maximum falls into the last bin.
pub fn histogram(samples: &[f64], bins: usize) -> Result<Histogram> {
    if samples.is_empty() {
        return Err(StatsError::TooFewSamples { needed: 1, got: 0 });
    }
    if bins == 0 {
        return Err(StatsError::TooFewSamples { needed: 1, got: 0 });
    }
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|i| if i == bins { hi } else { lo + i as f64 * width }).collect();
    let mut counts = vec![0u64; bins];
    for &x in samples {
        let idx = if width > 0.0 { (((x - lo) / width) as usize).min(bins - 1) } else { 0 };
        counts[idx] += 1;
    }
    Ok(Histogram { edges, counts })
}

/// Mean and standard error `s/√n` (sample standard deviation) of per-run
/// statistics. A single run has standard error 0.
pub fn aggregate_runs(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(StatsError::TooFewSamples { needed: 1, got: 0 });
    }
    let mu = mean(values);
    if values.len() == 1 {
        return Ok((mu, 0.0));
    }
    let n = values.len() as f64;
    let var = values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (n - 1.0);
    Ok((mu, (var / n).sqrt()))
}

/// Per-step wealth sums of each group. `wealth[k][i]` is agent `i` at step
/// `k`; `groups[i]` its group in `0..group_count`.
pub fn group_wealth_series(wealth: &[Vec<f64>], groups: &[usize], group_count: usize) -> Result<Vec<Vec<f64>>> {
    if let Some(&g) = groups.iter().find(|&&g| g >= group_count) {
        return Err(StatsError::InvalidPartition(format!("group {g} outside 0..{group_count}")));
    }
    let mut out = vec![Vec::with_capacity(wealth.len()); group_count];
    for (k, row) in wealth.iter().enumerate() {
        if row.len() != groups.len() {
            return Err(StatsError::InvalidPartition(format!(
                "step {k} has {} agents but {} are assigned",
                row.len(),
                groups.len()
            )));
        }
        let mut sums = vec![0.0; group_count];
        for (w, &g) in row.iter().zip(groups) {
            sums[g] += w;
        }
        for (series, s) in out.iter_mut().zip(sums) {
            series.push(s);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_return_examples() {
        assert_eq!(log_returns(&[2.0, 2.0, 2.0]).unwrap(), vec![0.0, 0.0]);
        let e = std::f64::consts::E;
        let r = log_returns(&[1.0, e, e * e]).unwrap();
        assert_close!(r[0], 1.0, 1e-15);
        assert_close!(r[1], 1.0, 1e-15);
        assert_close!(log_returns(&[1.0, 2.0]).unwrap()[0], std::f64::consts::LN_2, 1e-12);
        assert!(log_returns(&[1.0]).is_err());
        assert!(log_returns(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn kurtosis_examples() {
        assert_close!(excess_kurtosis(&[1.0, -1.0, 1.0, -1.0]).unwrap(), -2.0, 1e-15);
        assert_eq!(excess_kurtosis(&[3.0; 10]), Err(StatsError::ZeroVariance));
        assert!(excess_kurtosis(&[1.0, 2.0, 3.0]).is_err());
        let s = summary(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.count, 4);
        assert_close!(s.variance, 1.25, 1e-15);
    }

    #[test]
    fn autocorrelation_examples() {
        let x = [0.3, -1.2, 2.2, 0.1, 0.9];
        assert_close!(autocorrelation(&x, 2).unwrap()[0], 1.0, 1e-15);
        let alt: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let rho = autocorrelation(&alt, 1).unwrap();
        assert_close!(rho[1], -(999.0 / 1000.0), 1e-12);
        assert_eq!(autocorrelation(&[1.0; 5], 1), Err(StatsError::ZeroVariance));
        assert!(autocorrelation(&x, 5).is_err());
    }

    #[test]
    fn qq_examples() {
        let pts = qq_points(&[-3.0, 5.0]).unwrap();
        assert_eq!(pts.len(), 2);
        assert_close!(pts[0].0, -pts[1].0, 1e-12);
        assert_close!(pts[0].1, -1.0, 1e-15);
        assert_close!(pts[1].1, 1.0, 1e-15);
        assert_close!(pts[1].0, 0.6744897501960817, 1e-9);
        assert!(qq_points(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn histogram_examples() {
        let h = histogram(&[2.5], 4).unwrap();
        assert_eq!(h.counts.iter().sum::<u64>(), 1);
        let grid: Vec<f64> = (0..100).map(f64::from).collect();
        let h = histogram(&grid, 10).unwrap();
        assert_eq!(h.counts, vec![10; 10]);
        assert_eq!(h.edges.len(), 11);
        assert!(histogram(&[], 3).is_err());
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate_runs(&[4.2]).unwrap(), (4.2, 0.0));
        assert_eq!(aggregate_runs(&[1.5; 7]).unwrap(), (1.5, 0.0));
        let (m, se) = aggregate_runs(&[1.0, 3.0]).unwrap();
        assert_eq!((m, se), (2.0, 1.0));
    }

    #[test]
    fn group_wealth_examples() {
        let wealth = vec![vec![1.0, 2.0, 3.0], vec![2.0, 2.0, 5.0]];
        assert_eq!(group_wealth_series(&wealth, &[0, 0, 0], 1).unwrap(), vec![vec![6.0, 9.0]]);
        assert_eq!(group_wealth_series(&wealth, &[0, 1, 0], 2).unwrap(), vec![vec![4.0, 7.0], vec![2.0, 2.0]]);
        let even = vec![vec![1.0; 4]];
        let g = group_wealth_series(&even, &[0, 1, 0, 1], 2).unwrap();
        assert_eq!(g[0], g[1]);
        assert!(group_wealth_series(&wealth, &[0, 3, 0], 2).is_err());
        assert!(group_wealth_series(&wealth, &[0, 0], 1).is_err());
    }
}
