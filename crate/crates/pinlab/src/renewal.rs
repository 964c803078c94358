//! Truncated power-law inter-arrival laws and exact renewal computations.
//!
//! K(n) = n^{-(1+alpha)} / Z on n = 1..n_max, with Z the exact normalization
//! over the truncated support. Masses are materialized only up to
//! `DENSE_CAP`; Laplace-type expectations beyond that use the analytic tail
//! machinery in [`crate::laplace`], so n_max can be astronomically large
//! (the exponent fits use 2^40) at no memory cost. Anything that walks the
//! support site by site (transfer tables, tilted sampling) requires its range
//! to lie inside the dense prefix.

use crate::laplace::{power_exp_sum, riemann_zeta};
use crate::logspace::LOG_ZERO;
use crate::rng::ChaCha8Rng;
use crate::triangle::{self, LogTriangle};
use crate::{Error, Result};
use rand::Rng;

/// Largest materialized support prefix: 2^16 masses (1 MiB).
pub const DENSE_CAP: u64 = 1 << 16;

#[derive(Debug, Clone)]
pub struct InterArrivalLaw {
    alpha: f64,
    n_max: u64,
    /// log of the exact truncated normalization
    log_norm: f64,
    /// log K(n) at index n for n = 1..=min(n_max, DENSE_CAP); index 0 unused
    dense_log_mass: Vec<f64>,
    mean: f64,
    rho_c_trunc: f64,
    rho_c_ideal: f64,
}

/// K(n) proportional to n^{-(1+alpha)} renormalized over 1..n_max.
pub fn build_power_law(alpha: f64, n_max: u64) -> Result<InterArrivalLaw> {
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "alpha",
            reason: format!("must be finite and > 0, got {alpha}"),
        });
    }
    if n_max < 1 {
        return Err(Error::InvalidParameter {
            name: "n_max",
            reason: "must be >= 1".into(),
        });
    }
    let norm = power_exp_sum(1.0 + alpha, 0.0, n_max);
    let log_norm = norm.ln();
    let dense_len = n_max.min(DENSE_CAP) as usize;
    let mut dense_log_mass = vec![LOG_ZERO; dense_len + 1];
    for (n, slot) in dense_log_mass.iter_mut().enumerate().skip(1) {
        *slot = -(1.0 + alpha) * (n as f64).ln() - log_norm;
    }
    let mean = power_exp_sum(alpha, 0.0, n_max) / norm;
    let rho_c_ideal = if alpha > 1.0 {
        riemann_zeta(1.0 + alpha) / riemann_zeta(alpha)
    } else {
        0.0
    };
    Ok(InterArrivalLaw {
        alpha,
        n_max,
        log_norm,
        dense_log_mass,
        mean,
        rho_c_trunc: 1.0 / mean,
        rho_c_ideal,
    })
}

impl InterArrivalLaw {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n_max(&self) -> u64 {
        self.n_max
    }

    /// E[eta] under the truncated law.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Critical contact density of the truncated law, 1/E[eta]. Strictly
    /// positive for every finite n_max.
    pub fn rho_c(&self) -> f64 {
        self.rho_c_trunc
    }

    /// Critical density of the untruncated law: zeta(1+alpha)/zeta(alpha) for
    /// alpha > 1, zero otherwise.
    pub fn rho_c_ideal(&self) -> f64 {
        self.rho_c_ideal
    }

    /// log K(n) for any 1 <= n <= n_max; analytic outside the dense prefix.
    #[inline]
    pub fn log_mass(&self, n: u64) -> f64 {
        debug_assert!(n >= 1 && n <= self.n_max);
        if (n as usize) < self.dense_log_mass.len() {
            self.dense_log_mass[n as usize]
        } else {
            -(1.0 + self.alpha) * (n as f64).ln() - self.log_norm
        }
    }

    #[inline]
    pub fn mass(&self, n: u64) -> f64 {
        self.log_mass(n).exp()
    }

    /// Dense slice of log masses covering gaps 1..=upto (index 0 is log 0).
    /// Errors when `upto` exceeds the materialized prefix.
    pub fn log_mass_slice(&self, upto: usize) -> Result<&[f64]> {
        if upto >= self.dense_log_mass.len() {
            return Err(Error::CapExceeded(format!(
                "need masses up to {upto} but only {} are materialized (DENSE_CAP {})",
                self.dense_log_mass.len() - 1,
                DENSE_CAP
            )));
        }
        Ok(&self.dense_log_mass[..=upto])
    }

    /// E[e^{-x eta}] over the truncated support, exact tail included.
    pub fn laplace_exp(&self, x: f64) -> f64 {
        power_exp_sum(1.0 + self.alpha, x, self.n_max) * (-self.log_norm).exp()
    }

    /// E[eta e^{-x eta}] over the truncated support.
    pub fn laplace_eta_exp(&self, x: f64) -> f64 {
        power_exp_sum(self.alpha, x, self.n_max) * (-self.log_norm).exp()
    }

    /// Mean of the x-tilted law, E[eta e^{-x eta}] / E[e^{-x eta}]. Strictly
    /// decreasing in x, from E[eta] at x = 0 toward 1.
    pub fn tilted_mean(&self, x: f64) -> f64 {
        self.laplace_eta_exp(x) / self.laplace_exp(x)
    }

    /// Structural checks: positivity, exact normalization (when the support
    /// is fully materialized), and the pure power-law tail shape over the
    /// last decade of the dense prefix.
    pub fn validate(&self) -> Result<()> {
        for (n, &lm) in self.dense_log_mass.iter().enumerate().skip(1) {
            if !(lm.is_finite()) {
                return Err(Error::LawInvariant(format!("log K({n}) not finite")));
            }
        }
        if self.n_max <= DENSE_CAP {
            let mut sum = 0.0f64;
            for &lm in self.dense_log_mass.iter().skip(1).rev() {
                sum += lm.exp();
            }
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::LawInvariant(format!(
                    "masses sum to {sum}, expected 1 within 1e-12"
                )));
            }
        }
        let hi = (self.dense_log_mass.len() - 1) as u64;
        let lo = (hi / 10).max(1);
        let c_lo = self.log_mass(lo) + (1.0 + self.alpha) * (lo as f64).ln();
        let c_hi = self.log_mass(hi) + (1.0 + self.alpha) * (hi as f64).ln();
        if (c_lo - c_hi).abs() > 0.01 {
            return Err(Error::LawInvariant(format!(
                "tail shape drifts: n^(1+alpha) K(n) varies by {:.3e} over the last decade",
                (c_lo - c_hi).abs()
            )));
        }
        Ok(())
    }

    #[cfg(test)]
    pub(crate) fn corrupt_mass_for_tests(&mut self, n: usize, log_delta: f64) {
        self.dense_log_mass[n] += log_delta;
    }
}

/// Exponentially tilted law K_q(n) = K(n) e^{-qn} / c(q), fully materialized.
#[derive(Debug, Clone)]
pub struct TiltedLaw {
    q: f64,
    mass: Vec<f64>,
    cdf: Vec<f64>,
    mean: f64,
    variance: f64,
}

/// Finds q >= 0 such that the tilted mean equals 1/rho, to 1e-10 in the mean.
/// Requires 1/rho in (1, E[eta]], i.e. rho in [rho_c, 1), and a fully
/// materialized law.
pub fn tilt_for_density(law: &InterArrivalLaw, rho: f64) -> Result<TiltedLaw> {
    if law.n_max > DENSE_CAP {
        return Err(Error::CapExceeded(
            "tilted laws need a fully materialized support".into(),
        ));
    }
    let target = 1.0 / rho;
    if !target.is_finite() || target <= 1.0 || target > law.mean() {
        return Err(Error::InvalidParameter {
            name: "rho",
            reason: format!(
                "1/rho = {target} must lie in (1, E[eta] = {}]",
                law.mean()
            ),
        });
    }
    let n_max = law.n_max;
    let mean_q = |q: f64| -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for n in (1..=n_max).rev() {
            let w = law.mass(n) * (-q * n as f64).exp();
            num += n as f64 * w;
            den += w;
        }
        num / den
    };
    // mean_q decreases from E[eta] toward 1; bracket by doubling.
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut guard = 0;
    while mean_q(hi) > target {
        lo = hi;
        hi *= 2.0;
        guard += 1;
        if guard > 60 {
            return Err(Error::Bracket {
                context: "tilt_for_density",
                lo,
                hi,
            });
        }
    }
    let mut q = 0.5 * (lo + hi);
    for _ in 0..200 {
        q = 0.5 * (lo + hi);
        let m = mean_q(q);
        if (m - target).abs() <= 1e-10 {
            break;
        }
        if m > target {
            lo = q;
        } else {
            hi = q;
        }
    }
    let mut mass = vec![0.0; n_max as usize + 1];
    let mut total = 0.0;
    for n in 1..=n_max {
        let w = law.mass(n) * (-q * n as f64).exp();
        mass[n as usize] = w;
        total += w;
    }
    let mut cdf = vec![0.0; n_max as usize + 1];
    let mut acc = 0.0;
    let mut mean = 0.0;
    let mut second = 0.0;
    for n in 1..=n_max as usize {
        mass[n] /= total;
        acc += mass[n];
        cdf[n] = acc;
        mean += n as f64 * mass[n];
        second += (n as f64) * (n as f64) * mass[n];
    }
    Ok(TiltedLaw {
        q,
        mass,
        cdf,
        mean,
        variance: second - mean * mean,
    })
}

impl TiltedLaw {
    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn mass(&self, n: u64) -> f64 {
        self.mass[n as usize]
    }

    /// Inverse-CDF draw.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> u64 {
        let u: f64 = rng.gen();
        // first index with cdf >= u
        let mut lo = 1usize;
        let mut hi = self.cdf.len() - 1;
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.cdf[mid] >= u {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        lo as u64
    }
}

/// Exact renewal mass table: logP[m][n] = log P(tau_m = n) for
/// 0 <= m <= n <= N.
#[derive(Debug, Clone)]
pub struct RenewalTable {
    tri: LogTriangle,
}

pub fn renewal_mass_table(law: &InterArrivalLaw, n: usize) -> Result<RenewalTable> {
    let log_k = law.log_mass_slice(n)?;
    Ok(RenewalTable {
        tri: triangle::build(log_k, n, None),
    })
}

impl RenewalTable {
    pub fn n(&self) -> usize {
        self.tri.n()
    }

    /// log P(tau_m = n).
    #[inline]
    pub fn log_mass(&self, m: usize, n: usize) -> f64 {
        self.tri.value(m, n)
    }

    pub fn triangle(&self) -> &LogTriangle {
        &self.tri
    }
}

/// Draws contact positions tau_1 < ... < tau_m = N conditioned on tau_m = N,
/// by sampling each increment from its exact conditional law
/// P(l | at n with k steps left) = K(l) P(tau_{k-1} = n - l) / P(tau_k = n).
pub fn sample_conditioned_with(
    table: &RenewalTable,
    law: &InterArrivalLaw,
    m: usize,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<u32>> {
    if m < 1 || m > n || n > table.n() {
        return Err(Error::InvalidParameter {
            name: "m",
            reason: format!("need 1 <= m <= n <= table size, got m={m} n={n}"),
        });
    }
    let mut jumps = Vec::with_capacity(m);
    let mut rem = n;
    let mut k = m;
    while k >= 1 {
        let log_parent = table.log_mass(k, rem);
        let max_l = rem - (k - 1);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut chosen = max_l;
        for l in 1..=max_l {
            let lp = law.log_mass(l as u64) + table.log_mass(k - 1, rem - l) - log_parent;
            acc += lp.exp();
            if acc >= u {
                chosen = l;
                break;
            }
        }
        jumps.push(chosen as u32);
        rem -= chosen;
        k -= 1;
    }
    debug_assert_eq!(rem, 0);
    // positions are the running sums of the jumps
    let mut pos = 0u32;
    Ok(jumps
        .into_iter()
        .map(|j| {
            pos += j;
            pos
        })
        .collect())
}

/// Convenience wrapper that builds the needed mass table internally.
pub fn sample_conditioned(
    law: &InterArrivalLaw,
    m: usize,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<u32>> {
    let table = renewal_mass_table(law, n)?;
    sample_conditioned_with(&table, law, m, n, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::stats::chi_square_gof;
    use approx::assert_relative_eq;

    /// alpha = 1, n_max = 2 gives exactly K(1) = 0.8, K(2) = 0.2.
    fn two_atom() -> InterArrivalLaw {
        build_power_law(1.0, 2).unwrap()
    }

    #[test]
    fn two_atom_masses_and_density() {
        let law = two_atom();
        assert_relative_eq!(law.mass(1), 0.8, max_relative = 1e-14);
        assert_relative_eq!(law.mass(2), 0.2, max_relative = 1e-14);
        assert_relative_eq!(law.mean(), 1.2, max_relative = 1e-14);
        assert_relative_eq!(law.rho_c(), 5.0 / 6.0, max_relative = 1e-14);
    }

    #[test]
    fn truncated_critical_densities() {
        let cases = [
            (2.5, 16384u64, 1.190598, 0.839914),
            (1.5, 4096, 1.924082, 0.519728),
            (0.7, 4096, 18.361511, 0.054462),
        ];
        for (alpha, n_max, mean, rho_c) in cases {
            let law = build_power_law(alpha, n_max).unwrap();
            assert_relative_eq!(law.mean(), mean, epsilon = 1e-6);
            assert_relative_eq!(law.rho_c(), rho_c, epsilon = 1e-6);
        }
    }

    #[test]
    fn ideal_density_is_huge_support_limit() {
        let law = build_power_law(2.5, 1 << 40).unwrap();
        assert_relative_eq!(law.rho_c(), law.rho_c_ideal(), epsilon = 1e-11);
        let heavy = build_power_law(0.7, 1 << 40).unwrap();
        assert_eq!(heavy.rho_c_ideal(), 0.0);
        assert!(heavy.rho_c() > 0.0);
    }

    #[test]
    fn analytic_mass_matches_dense_formula_past_cap() {
        let law = build_power_law(0.7, 1 << 40).unwrap();
        let n = 2 * DENSE_CAP;
        let lm = law.log_mass(n);
        assert!(lm.is_finite());
        let within = law.log_mass(DENSE_CAP - 1);
        let expected_gap = -(1.0 + 0.7) * ((n as f64).ln() - ((DENSE_CAP - 1) as f64).ln());
        assert_relative_eq!(lm - within, expected_gap, epsilon = 1e-12);
        assert!(law.log_mass_slice(DENSE_CAP as usize + 1).is_err());
    }

    #[test]
    fn laplace_moments_match_direct_sums() {
        let law = build_power_law(1.5, 4096).unwrap();
        for &x in &[0.0, 1e-4, 0.03, 1.0] {
            let mut e = 0.0;
            let mut ee = 0.0;
            for n in (1..=4096u64).rev() {
                let w = law.mass(n) * (-x * n as f64).exp();
                e += w;
                ee += n as f64 * w;
            }
            assert_relative_eq!(law.laplace_exp(x), e, max_relative = 1e-12);
            assert_relative_eq!(law.laplace_eta_exp(x), ee, max_relative = 1e-12);
        }
        assert_relative_eq!(law.tilted_mean(0.0), law.mean(), max_relative = 1e-12);
    }

    #[test]
    fn tilted_mean_decreases_toward_one() {
        let law = build_power_law(1.5, 4096).unwrap();
        let mut prev = law.tilted_mean(0.0);
        for &x in &[1e-3, 1e-2, 0.1, 1.0, 10.0] {
            let m = law.tilted_mean(x);
            assert!(m < prev);
            assert!(m >= 1.0);
            prev = m;
        }
        assert!(law.tilted_mean(30.0) < 1.0 + 1e-8);
    }

    #[test]
    fn tilt_hits_requested_density() {
        let law = build_power_law(1.5, 4096).unwrap();
        for &rho in &[0.52, 0.7, 0.95] {
            let tilted = tilt_for_density(&law, rho).unwrap();
            assert_relative_eq!(tilted.mean(), 1.0 / rho, epsilon = 1e-9);
            assert!(tilted.q() > 0.0);
        }
        assert!(tilt_for_density(&law, 0.3).is_err());
        assert!(tilt_for_density(&law, 1.0).is_err());
    }

    #[test]
    fn tilted_sampler_matches_mass_function() {
        let law = build_power_law(1.5, 512).unwrap();
        let tilted = tilt_for_density(&law, 0.7).unwrap();
        let mut rng = stream_rng(7, &[1]);
        let draws = 40_000usize;
        let bins = 12usize;
        let mut observed = vec![0u64; bins];
        for _ in 0..draws {
            let v = tilted.sample(&mut rng) as usize;
            observed[v.min(bins) - 1] += 1;
        }
        let mut expected: Vec<f64> = (1..bins).map(|n| tilted.mass(n as u64)).collect();
        let head: f64 = expected.iter().sum();
        expected.push(1.0 - head);
        let expected: Vec<f64> = expected.iter().map(|p| p * draws as f64).collect();
        let gof = chi_square_gof(&observed, &expected).unwrap();
        assert!(gof.p_value > 1e-4, "p = {}", gof.p_value);
    }

    /// Direct-space m-fold convolution, an independent route to the mass
    /// table (no logs, no shared kernels).
    fn convolution_oracle(law: &InterArrivalLaw, n: usize) -> Vec<Vec<f64>> {
        let mut p = vec![vec![0.0f64; n + 1]; n + 1];
        p[0][0] = 1.0;
        for m in 1..=n {
            for t in m..=n {
                let mut s = 0.0;
                for l in 1..=(t - m + 1) {
                    s += law.mass(l as u64) * p[m - 1][t - l];
                }
                p[m][t] = s;
            }
        }
        p
    }

    #[test]
    fn mass_table_matches_convolution_oracle() {
        let law = build_power_law(1.5, 40).unwrap();
        let n = 40;
        let table = renewal_mass_table(&law, n).unwrap();
        let oracle = convolution_oracle(&law, n);
        for m in 0..=n {
            for t in m..=n {
                let got = table.log_mass(m, t);
                if oracle[m][t] > 0.0 {
                    assert_relative_eq!(got.exp(), oracle[m][t], max_relative = 1e-12);
                } else {
                    assert!(got.exp() < 1e-300);
                }
            }
        }
        // hand check against the two-atom law: tau_2 = 4 forces jumps 2+2
        let law2 = two_atom();
        let t2 = renewal_mass_table(&law2, 4).unwrap();
        assert_relative_eq!(t2.log_mass(2, 4).exp(), 0.04, max_relative = 1e-13);
        assert_relative_eq!(t2.log_mass(2, 3).exp(), 0.32, max_relative = 1e-13);
        assert_relative_eq!(t2.log_mass(2, 2).exp(), 0.64, max_relative = 1e-13);
    }

    #[test]
    fn renewal_function_satisfies_recursion() {
        let law = build_power_law(0.7, 64).unwrap();
        let n = 64;
        let table = renewal_mass_table(&law, n).unwrap();
        let u: Vec<f64> = (0..=n)
            .map(|t| (0..=t).map(|m| table.log_mass(m, t).exp()).sum::<f64>())
            .collect();
        assert_relative_eq!(u[0], 1.0, max_relative = 1e-14);
        for t in 1..=n {
            let mut s = 0.0;
            for l in 1..=t {
                s += law.mass(l as u64) * u[t - l];
            }
            assert_relative_eq!(u[t], s, max_relative = 1e-11);
        }
    }

    #[test]
    fn conditioned_paths_have_exact_pattern_law() {
        // m = 3 contacts in n = 4 steps of the two-atom law: the three
        // position patterns are equally likely by symmetry.
        let law = two_atom();
        let mut rng = stream_rng(11, &[2]);
        let mut counts = [0u64; 3];
        for _ in 0..3000 {
            let pos = sample_conditioned(&law, 3, 4, &mut rng).unwrap();
            assert_eq!(pos.len(), 3);
            assert_eq!(*pos.last().unwrap(), 4);
            assert!(pos.windows(2).all(|w| w[0] < w[1]));
            let idx = match (pos[0], pos[1]) {
                (1, 2) => 0,
                (1, 3) => 1,
                (2, 3) => 2,
                other => panic!("impossible pattern {other:?}"),
            };
            counts[idx] += 1;
        }
        let expected = [1000.0, 1000.0, 1000.0];
        let gof = chi_square_gof(&counts, &expected).unwrap();
        assert!(gof.p_value > 1e-4, "p = {}", gof.p_value);
    }

    #[test]
    fn validate_flags_corrupted_masses() {
        let mut law = build_power_law(1.5, 4096).unwrap();
        law.validate().unwrap();
        law.corrupt_mass_for_tests(2048, 0.5);
        assert!(law.validate().is_err());

        // shape detector path: support larger than the dense prefix, so the
        // normalization check cannot fire
        let mut big = build_power_law(1.5, 1 << 20).unwrap();
        big.validate().unwrap();
        big.corrupt_mass_for_tests(DENSE_CAP as usize, 0.02);
        assert!(big.validate().is_err());

        let mut broken = build_power_law(1.5, 64).unwrap();
        broken.corrupt_mass_for_tests(3, f64::INFINITY);
        assert!(broken.validate().is_err());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(build_power_law(0.0, 100).is_err());
        assert!(build_power_law(f64::NAN, 100).is_err());
        assert!(build_power_law(1.5, 0).is_err());
    }
}
