//! Triangular log-mass tables and the layer convolution that fills them.
//!
//! A table covers pairs (m, n) with 0 <= m <= n <= N. Storage is m-major:
//! row m holds the values for n = m..=N, so one layer is a contiguous slice
//! and layer m depends only on layer m-1. Total memory is N^2/2 doubles,
//! total work N^3/6 terms.

use crate::logspace::{exp_neg, EXP_CUTOFF, LOG_ZERO};
use crate::par;

#[derive(Debug, Clone)]
pub struct LogTriangle {
    n: usize,
    rows: Vec<Vec<f64>>,
}

impl LogTriangle {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Log value at (m, n). Requires m <= n <= N.
    #[inline]
    pub fn value(&self, m: usize, n: usize) -> f64 {
        debug_assert!(m <= n && n <= self.n);
        self.rows[m][n - m]
    }

    /// Row m as a slice over n = m..=N.
    pub fn row(&self, m: usize) -> &[f64] {
        &self.rows[m]
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let n = rows.len() - 1;
        for (m, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n - m + 1, "row {m} has wrong length");
        }
        LogTriangle { n, rows }
    }
}

/// Fills the triangle for the recursion
///
///   T[0][0] = 0,  T[0][n] = -inf  (n >= 1)
///   T[m][n] = w(n) + logsumexp_{l=1..n-m+1} ( log_k[l] + T[m-1][n-l] )
///
/// where `log_k[l]` is the log inter-arrival mass (index 0 unused) and
/// `w(n)` is the optional per-site log weight (beta * omega_n; index 0
/// unused). Entries with l > n-m+1 cannot complete the remaining m-1 steps
/// and are excluded by construction.
///
/// The inner sum uses a two-pass max shift with the EXP_CUTOFF skip and the
/// vectorizable `exp_neg`; layers parallelize over n.
pub fn build(log_k: &[f64], n: usize, site_log_weight: Option<&[f64]>) -> LogTriangle {
    assert!(log_k.len() > n, "log_k must cover gap lengths 1..=N");
    if let Some(w) = site_log_weight {
        assert!(w.len() > n, "site weights must cover sites 1..=N");
    }
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut row0 = vec![LOG_ZERO; n + 1];
    row0[0] = 0.0;
    rows.push(row0);
    for m in 1..=n {
        let prev = &rows[m - 1];
        let width = n - m + 1;
        let row = par::map_collect(width, |i| {
            // entry (m, m+i); terms prev[j] + log_k[i+1-j], j = 0..=i
            let mut mx = LOG_ZERO;
            for j in 0..=i {
                mx = mx.max(prev[j] + log_k[i + 1 - j]);
            }
            if mx == LOG_ZERO {
                return LOG_ZERO;
            }
            // Branchless second pass: arguments are clamped at -EXP_CUTOFF
            // instead of skipped, which adds at most (i+1) * exp(-60) to a sum
            // that is always >= 1 (the max term contributes exp(0)).
            let mut s = 0.0;
            for j in 0..=i {
                let t = prev[j] + log_k[i + 1 - j] - mx;
                s += exp_neg(t.max(-EXP_CUTOFF));
            }
            let mut v = mx + s.ln();
            if let Some(w) = site_log_weight {
                v += w[m + i];
            }
            v
        });
        rows.push(row);
    }
    LogTriangle { n, rows }
}
