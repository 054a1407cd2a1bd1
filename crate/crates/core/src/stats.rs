//! Small statistics toolkit: seeds, compensated sums, fits, jackknife, KS.

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

/// SplitMix64 step; used to derive independent replica seeds.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for replica `r` of a run keyed by `seed`.
pub fn replica_seed(seed: u64, r: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ r.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Neumaier compensated summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, f64::NAN);
    }
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// Binomial proportion and its standard error.
pub fn proportion(k: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let p = k as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

/// Weighted least-squares line y = a + b x.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    /// Standard error of the slope from the residual scatter.
    pub slope_se: f64,
    pub n_points: usize,
}

pub fn weighted_line(x: &[f64], y: &[f64], w: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || y.len() != n || w.len() != n {
        return None;
    }
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(a, b)| b * (a - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = (0..n).map(|i| w[i] * (x[i] - mx) * (y[i] - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_se = if n > 2 {
        let rss: f64 = (0..n).map(|i| w[i] * (y[i] - intercept - slope * x[i]).powi(2)).sum();
        (rss / (n as f64 - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Some(LineFit { intercept, slope, slope_se, n_points: n })
}

pub fn ordinary_line(x: &[f64], y: &[f64]) -> Option<LineFit> {
    weighted_line(x, y, &vec![1.0; x.len()])
}

/// Two-sided Student-t quantile for confidence level `level`.
pub fn t_quantile(df: f64, level: f64) -> f64 {
    let q = 0.5 + level / 2.0;
    if df > 1000.0 {
        return Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(q);
    }
    StudentsT::new(0.0, 1.0, df.max(1.0)).expect("valid t distribution").inverse_cdf(q)
}

/// Delete-one-group jackknife standard error from leave-one-out estimates.
pub fn jackknife_se(loo: &[f64]) -> f64 {
    let g = loo.len() as f64;
    if loo.len() < 2 {
        return f64::NAN;
    }
    let m = loo.iter().sum::<f64>() / g;
    ((g - 1.0) / g * loo.iter().map(|x| (x - m).powi(2)).sum::<f64>()).sqrt()
}

/// Kolmogorov-Smirnov statistic against a continuous CDF and its asymptotic p-value.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    (d, kolmogorov_q(lambda))
}

fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..200 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_recovers_exact_slope() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let f = ordinary_line(&x, &y).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12 && (f.intercept - 2.0).abs() < 1e-12);
    }

    #[test]
    fn t_quantile_large_df_is_normal() {
        assert!((t_quantile(1e6, 0.95) - 1.959964).abs() < 1e-4);
        assert!((t_quantile(19.0, 0.95) - 2.093).abs() < 1e-3);
    }

    #[test]
    fn ks_on_uniform_grid_passes() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let (d, p) = ks_test(&xs, |x| x.clamp(0.0, 1.0));
        assert!(d < 1e-3 && p > 0.99);
    }

    #[test]
    fn kahan_beats_naive() {
        let mut k = KahanSum::default();
        k.add(1e16);
        for _ in 0..10 {
            k.add(1.0);
        }
        k.add(-1e16);
        assert_eq!(k.value(), 10.0);
    }

    #[test]
    fn replica_seeds_differ() {
        assert_ne!(replica_seed(1, 0), replica_seed(1, 1));
        assert_ne!(replica_seed(1, 0), replica_seed(2, 0));
    }
}
