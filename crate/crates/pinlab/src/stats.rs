//! Shared statistics and scalar-solver helpers.

use crate::{Error, Result};
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; 0 for fewer than two points.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Standard error of the mean; 0 for fewer than two points.
pub fn stderr_of_mean(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    (sample_variance(xs) / xs.len() as f64).sqrt()
}

#[derive(Debug, Clone, Copy)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
}

/// Weighted least squares for y = intercept + slope * x. Weights must be
/// positive; pass all-ones for an ordinary fit.
pub fn linear_fit_weighted(x: &[f64], y: &[f64], w: &[f64]) -> LinearFit {
    assert!(x.len() == y.len() && x.len() == w.len() && x.len() >= 2);
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..x.len() {
        sxx += w[i] * (x[i] - mx) * (x[i] - mx);
        sxy += w[i] * (x[i] - mx) * (y[i] - my);
    }
    let slope = sxy / sxx;
    LinearFit {
        intercept: my - slope * mx,
        slope,
    }
}

/// Slope of log(y) against log(x). Errors if any coordinate is not strictly
/// positive (the fit window missed the asymptotic regime).
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::FitWindow("need at least two points".into()));
    }
    let mut lx = Vec::with_capacity(x.len());
    let mut ly = Vec::with_capacity(y.len());
    for (&a, &b) in x.iter().zip(y) {
        if !a.is_finite() || a <= 0.0 || !b.is_finite() || b <= 0.0 {
            return Err(Error::FitWindow(format!(
                "log-log fit needs positive data, got ({a}, {b})"
            )));
        }
        lx.push(a.ln());
        ly.push(b.ln());
    }
    let w = vec![1.0; lx.len()];
    Ok(linear_fit_weighted(&lx, &ly, &w).slope)
}

/// Wilson score interval for a binomial proportion at normal quantile z.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    assert!(trials > 0);
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Debug, Clone)]
pub struct Gof {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// categories after pooling low-expectation bins
    pub bins: usize,
}

/// Pearson chi-square goodness of fit. `expected` are absolute expected
/// counts on the same categories as `observed`; categories with expectation
/// below 5 are pooled into a single rest bin (Cochran's rule) before the
/// statistic is formed.
pub fn chi_square_gof(observed: &[u64], expected: &[f64]) -> Result<Gof> {
    if observed.len() != expected.len() || observed.is_empty() {
        return Err(Error::InvalidParameter {
            name: "observed",
            reason: "length mismatch or empty".into(),
        });
    }
    let mut obs = Vec::new();
    let mut exp = Vec::new();
    let mut pool_o = 0.0f64;
    let mut pool_e = 0.0f64;
    for (&o, &e) in observed.iter().zip(expected) {
        if e < 5.0 {
            pool_o += o as f64;
            pool_e += e;
        } else {
            obs.push(o as f64);
            exp.push(e);
        }
    }
    if pool_e > 0.0 {
        obs.push(pool_o);
        exp.push(pool_e);
    }
    if obs.len() < 2 {
        return Err(Error::InvalidParameter {
            name: "expected",
            reason: "fewer than two usable categories after pooling".into(),
        });
    }
    let stat: f64 = obs
        .iter()
        .zip(&exp)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    let dof = obs.len() - 1;
    let chi = ChiSquared::new(dof as f64).expect("dof >= 1");
    Ok(Gof {
        statistic: stat,
        dof,
        p_value: 1.0 - chi.cdf(stat),
        bins: obs.len(),
    })
}

/// Golden-section maximization of a unimodal function on [lo, hi].
/// Returns (argmax, max). `tol` is the final bracket width.
pub fn golden_section_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    const INVPHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INVPHI * (b - a);
    let mut d = a + INVPHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a) > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INVPHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INVPHI * (b - a);
            fd = f(d);
        }
    }
    let xm = 0.5 * (a + b);
    (xm, f(xm))
}

/// Bisection for the rightmost point of [lo, hi] where `pred` still holds.
/// `pred` must be true on a (possibly empty) left segment; if it fails at
/// `lo` the function returns `lo`, if it holds at `hi` it returns `hi`.
/// Plateaus therefore resolve to their right edge.
pub fn bisect_rightmost_true(pred: impl Fn(f64) -> bool, lo: f64, hi: f64, iters: u32) -> f64 {
    if !pred(lo) {
        return lo;
    }
    if pred(hi) {
        return hi;
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..iters {
        let m = 0.5 * (a + b);
        if pred(m) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}
