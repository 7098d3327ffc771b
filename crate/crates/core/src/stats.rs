//! Small statistical helpers shared by the measurement harnesses.

use serde::Serialize;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance (unbiased).
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Standard error of the sample mean.
pub fn std_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Monte Carlo estimate of `E[xy]` together with its standard error,
/// for processes known to be centred.
pub fn mc_product_moment(products: &[f64]) -> (f64, f64) {
    (mean(products), std_error(products))
}

/// Ordinary least squares fit of `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
    pub points: usize,
}

impl LineFit {
    /// Two-sided confidence bounds on the slope at the given level,
    /// using the Student t quantile for the fit's residual degrees of freedom.
    pub fn slope_interval(&self, confidence: f64) -> (f64, f64) {
        let df = self.points.saturating_sub(2);
        let t = student_t_quantile(df, 0.5 + confidence / 2.0);
        (
            self.slope - t * self.slope_stderr,
            self.slope + t * self.slope_stderr,
        )
    }
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let xm = mean(xs);
    let ym = mean(ys);
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..n {
        sxx += (xs[i] - xm) * (xs[i] - xm);
        sxy += (xs[i] - xm) * (ys[i] - ym);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for i in 0..n {
        let fit = intercept + slope * xs[i];
        ss_res += (ys[i] - fit) * (ys[i] - fit);
        ss_tot += (ys[i] - ym) * (ys[i] - ym);
    }
    let df = n.saturating_sub(2);
    let slope_stderr = if df > 0 {
        (ss_res / df as f64 / sxx).sqrt()
    } else {
        f64::NAN
    };
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    Some(LineFit {
        slope,
        intercept,
        slope_stderr,
        r_squared,
        points: n,
    })
}

fn student_t_quantile(df: usize, p: f64) -> f64 {
    use statrs::distribution::ContinuousCDF;
    if df == 0 {
        return f64::INFINITY;
    }
    let t = statrs::distribution::StudentsT::new(0.0, 1.0, df as f64)
        .expect("valid Student t parameters");
    t.inverse_cdf(p)
}

/// Wilson score interval for a binomial proportion.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct WilsonInterval {
    pub lo: f64,
    pub hi: f64,
}

pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> WilsonInterval {
    if trials == 0 {
        return WilsonInterval { lo: 0.0, hi: 1.0 };
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = p + z2 / (2.0 * n);
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    WilsonInterval {
        lo: ((centre - half) / denom).max(0.0),
        hi: ((centre + half) / denom).min(1.0),
    }
}

/// Binomial standard error of an observed frequency.
pub fn binomial_stderr(successes: u64, trials: u64) -> f64 {
    if trials == 0 {
        return f64::NAN;
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    (p * (1.0 - p) / n).sqrt()
}

/// Checks that a frequency curve is nonincreasing, allowing `slack_sigmas`
/// binomial standard errors of Monte Carlo noise at each step.
pub fn nonincreasing_within_noise(counts: &[u64], trials: &[u64], slack_sigmas: f64) -> bool {
    for i in 1..counts.len() {
        let p_prev = counts[i - 1] as f64 / trials[i - 1].max(1) as f64;
        let p_cur = counts[i] as f64 / trials[i].max(1) as f64;
        let noise = binomial_stderr(counts[i - 1], trials[i - 1])
            .hypot(binomial_stderr(counts[i], trials[i]));
        let noise = if noise.is_nan() { 0.0 } else { noise };
        if p_cur > p_prev + slack_sigmas * noise {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_is_recovered() {
        let xs: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 1.5).collect();
        let fit = linear_fit(&xs, &ys).unwrap();
        assert!((fit.slope - 3.0).abs() < 1e-12);
        assert!((fit.intercept + 1.5).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!(fit.slope_stderr < 1e-12);
    }

    #[test]
    fn wilson_contains_point_estimate() {
        let w = wilson_interval(30, 200, 1.96);
        assert!(w.lo < 0.15 && 0.15 < w.hi);
        assert!(w.lo >= 0.0 && w.hi <= 1.0);
    }

    #[test]
    fn trend_check_tolerates_noise() {
        let counts = [100, 80, 81, 40, 10];
        let trials = [200; 5];
        assert!(nonincreasing_within_noise(&counts, &trials, 2.0));
        let bad = [100, 80, 140, 40, 10];
        assert!(!nonincreasing_within_noise(&bad, &trials, 2.0));
    }
}
