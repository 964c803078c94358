//! Exact finite-size partition functions.
//!
//! The contact-resolved table logZ[n][m] is the inner factor of the
//! contact-number decomposition: the weight of paths with exactly m contacts
//! ending in a contact at n, disorder included. The full partition function
//! then couples each m-slice to exp(h m) Psi(m, N). Everything here is
//! deterministic given (law, field); estimators stack replicas on top.

use crate::disorder::{DisorderField, DisorderSpec};
use crate::logspace::{log_sum_exp, LOG_ZERO};
use crate::potential::PsiFactor;
use crate::renewal::InterArrivalLaw;
use crate::rng::replica_seed;
use crate::stats::{linear_fit_weighted, mean, stderr_of_mean};
use crate::triangle::{self, LogTriangle};
use crate::{par, Error, Result};

/// Hard size cap on table builds (N^2/2 doubles; 8192 is ~268 MB).
pub const DEFAULT_MAX_TABLE_N: usize = 8192;

/// Contact-resolved partition table for one environment.
#[derive(Debug, Clone)]
pub struct ConstrainedDP {
    n: usize,
    law_alpha: f64,
    law_n_max: u64,
    field: Option<DisorderField>,
    /// log K(l) for l = 1..=n (index 0 is log 0), copied out of the law so
    /// samplers need no law handle
    log_k: Vec<f64>,
    tri: LogTriangle,
}

/// Builds the table with the default size cap.
pub fn build_constrained(
    law: &InterArrivalLaw,
    n: usize,
    field: Option<&DisorderField>,
) -> Result<ConstrainedDP> {
    build_constrained_with_cap(law, n, field, DEFAULT_MAX_TABLE_N)
}

/// Full O(N^2) table in O(N^3) time via
/// logZ[n][m] = logsumexp_l(logZ[n-l][m-1] + log K(l)) + beta omega_n.
pub fn build_constrained_with_cap(
    law: &InterArrivalLaw,
    n: usize,
    field: Option<&DisorderField>,
    max_n: usize,
) -> Result<ConstrainedDP> {
    if n < 1 {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: "need n >= 1".into(),
        });
    }
    if n > max_n {
        return Err(Error::CapExceeded(format!(
            "table size {n} exceeds cap {max_n} (about {} MB of log-weights)",
            n * (n + 2) * 4 / (1 << 20)
        )));
    }
    if (n as u64) > law.n_max() {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: format!("n = {n} exceeds the law support n_max = {}", law.n_max()),
        });
    }
    if let Some(f) = field {
        if f.len() < n {
            return Err(Error::InvalidParameter {
                name: "field",
                reason: format!("covers {} sites, table needs {n}", f.len()),
            });
        }
    }
    let log_k = law.log_mass_slice(n)?.to_vec();
    let weights: Option<Vec<f64>> = field.map(|f| {
        let mut w = Vec::with_capacity(n + 1);
        w.push(0.0);
        for site in 1..=n {
            w.push(f.site_log_weight(site));
        }
        w
    });
    let tri = triangle::build(&log_k, n, weights.as_deref());
    Ok(ConstrainedDP {
        n,
        law_alpha: law.alpha(),
        law_n_max: law.n_max(),
        field: field.cloned(),
        log_k,
        tri,
    })
}

impl ConstrainedDP {
    /// Reassembles a table from cached rows; used by the table cache.
    pub(crate) fn from_parts(
        law: &InterArrivalLaw,
        field: Option<DisorderField>,
        tri: LogTriangle,
    ) -> Result<Self> {
        let n = tri.n();
        let log_k = law.log_mass_slice(n)?.to_vec();
        Ok(ConstrainedDP {
            n,
            law_alpha: law.alpha(),
            law_n_max: law.n_max(),
            field,
            log_k,
            tri,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn law_alpha(&self) -> f64 {
        self.law_alpha
    }

    pub fn law_n_max(&self) -> u64 {
        self.law_n_max
    }

    pub fn beta(&self) -> f64 {
        self.field.as_ref().map_or(0.0, |f| f.beta())
    }

    pub fn field(&self) -> Option<&DisorderField> {
        self.field.as_ref()
    }

    /// log Z_{n,m}; -inf off support (m > n, or m = 0 with n > 0).
    #[inline]
    pub fn log_z(&self, n: usize, m: usize) -> f64 {
        if m > n || n > self.n {
            return LOG_ZERO;
        }
        self.tri.value(m, n)
    }

    /// log K(l) for l = 1..=N as built.
    pub fn log_k(&self) -> &[f64] {
        &self.log_k
    }

    /// beta omega_site, or 0 for the homogeneous model.
    #[inline]
    pub fn site_log_weight(&self, site: usize) -> f64 {
        self.field.as_ref().map_or(0.0, |f| f.site_log_weight(site))
    }

    pub fn triangle(&self) -> &LogTriangle {
        &self.tri
    }
}

/// log Z^Psi at one h, with the m-resolved weights kept for samplers.
#[derive(Debug, Clone)]
pub struct FullPartition {
    pub log_z: f64,
    /// index m = 0..=N; entry m is h m + log Psi(m,N) + logZ[N][m]
    pub log_weight_by_m: Vec<f64>,
}

/// logsumexp over m of exp(h m) Psi(m, N) Z_{N,m}.
pub fn full_partition(dp: &ConstrainedDP, psi: &PsiFactor, h: f64) -> Result<FullPartition> {
    let n = dp.n();
    let psi_row = psi.log_psi_row(n)?;
    let mut log_weight_by_m = Vec::with_capacity(n + 1);
    log_weight_by_m.push(LOG_ZERO);
    for (m, &lp) in psi_row.iter().enumerate().skip(1) {
        log_weight_by_m.push(h * m as f64 + lp + dp.log_z(n, m));
    }
    Ok(FullPartition {
        log_z: log_sum_exp(&log_weight_by_m),
        log_weight_by_m,
    })
}

/// Finite-size correction model for the extrapolation in 1/N.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrectionModel {
    /// logZ/N = f + a (log N)/N; boundary effects of the constrained endpoint
    LogNOverN,
    /// logZ/N = f + a/N
    OneOverN,
}

impl CorrectionModel {
    fn regressor(self, n: usize) -> f64 {
        match self {
            CorrectionModel::LogNOverN => (n as f64).ln() / n as f64,
            CorrectionModel::OneOverN => 1.0 / n as f64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EstimateOptions {
    /// ascending system sizes
    pub sizes: Vec<usize>,
    /// None or beta = 0 means a single homogeneous build
    pub disorder: Option<DisorderSpec>,
    pub correction: CorrectionModel,
    pub max_table_n: usize,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            sizes: vec![256, 512, 1024],
            disorder: None,
            correction: CorrectionModel::LogNOverN,
            max_table_n: DEFAULT_MAX_TABLE_N,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EstimatePoint {
    pub n: usize,
    pub replica: usize,
    pub log_z_over_n: f64,
}

/// A finite-size free-energy estimate with its replica scatter.
#[derive(Debug, Clone)]
pub struct FreeEnergyEstimate {
    pub h: Option<f64>,
    pub rho: Option<f64>,
    pub beta: f64,
    pub estimates: Vec<EstimatePoint>,
    pub extrapolated: f64,
    pub stderr: f64,
}

/// The (size, replica)-indexed tables an estimator runs over. Building these
/// is the O(N^3) part; everything downstream is cheap, so a TableSet is
/// built once and reused across h or rho grids.
#[derive(Debug)]
pub struct TableSet {
    sizes: Vec<usize>,
    replicas: usize,
    disorder: Option<DisorderSpec>,
    /// entry (r, s) at index r * sizes.len() + s
    tables: Vec<ConstrainedDP>,
}

impl TableSet {
    pub fn build(law: &InterArrivalLaw, opts: &EstimateOptions) -> Result<TableSet> {
        if opts.sizes.is_empty() {
            return Err(Error::InvalidParameter {
                name: "sizes",
                reason: "need at least one system size".into(),
            });
        }
        if opts.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter {
                name: "sizes",
                reason: "sizes must be strictly ascending".into(),
            });
        }
        let quenched = opts.disorder.as_ref().filter(|d| d.beta > 0.0);
        let replicas = quenched.map_or(1, |d| d.replicas.max(1));
        let jobs: Vec<(usize, usize)> = (0..replicas)
            .flat_map(|r| opts.sizes.iter().map(move |&n| (r, n)))
            .collect();
        let built = par::map_collect(jobs.len(), |j| -> Result<ConstrainedDP> {
            let (r, n) = jobs[j];
            let field = match quenched {
                Some(d) => Some(DisorderField::generate(
                    d.dist,
                    d.beta,
                    n,
                    replica_seed(d.master_seed, r as u64),
                )?),
                None => None,
            };
            build_constrained_with_cap(law, n, field.as_ref(), opts.max_table_n)
        });
        let mut tables = Vec::with_capacity(built.len());
        for t in built {
            tables.push(t?);
        }
        Ok(TableSet {
            sizes: opts.sizes.clone(),
            replicas,
            disorder: quenched.cloned(),
            tables,
        })
    }

    /// Wraps prebuilt tables (e.g. loaded from the on-disk cache). Tables
    /// must be given replica-major in the same (r, s) order the builder uses.
    pub fn from_tables(
        sizes: Vec<usize>,
        replicas: usize,
        disorder: Option<DisorderSpec>,
        tables: Vec<ConstrainedDP>,
    ) -> Result<TableSet> {
        if tables.len() != sizes.len() * replicas {
            return Err(Error::InvalidParameter {
                name: "tables",
                reason: format!(
                    "got {} tables for {} sizes x {} replicas",
                    tables.len(),
                    sizes.len(),
                    replicas
                ),
            });
        }
        Ok(TableSet {
            sizes,
            replicas,
            disorder,
            tables,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn replicas(&self) -> usize {
        self.replicas
    }

    pub fn beta(&self) -> f64 {
        self.disorder.as_ref().map_or(0.0, |d| d.beta)
    }

    pub fn get(&self, replica: usize, n: usize) -> Option<&ConstrainedDP> {
        let s = self.sizes.iter().position(|&x| x == n)?;
        self.tables.get(replica * self.sizes.len() + s)
    }

    pub fn tables(&self) -> &[ConstrainedDP] {
        &self.tables
    }

    /// Extrapolates per-replica series y(N) to N = inf under the correction
    /// model, then averages replicas. With one size there is nothing to fit
    /// and the plain replica mean is reported.
    fn extrapolate(
        &self,
        y: impl Fn(&ConstrainedDP) -> Result<f64>,
        correction: CorrectionModel,
    ) -> Result<(Vec<EstimatePoint>, f64, f64)> {
        let mut points = Vec::with_capacity(self.tables.len());
        let mut per_replica = Vec::with_capacity(self.replicas);
        for r in 0..self.replicas {
            let mut xs = Vec::with_capacity(self.sizes.len());
            let mut ys = Vec::with_capacity(self.sizes.len());
            let mut ws = Vec::with_capacity(self.sizes.len());
            for (s, &n) in self.sizes.iter().enumerate() {
                let v = y(&self.tables[r * self.sizes.len() + s])?;
                points.push(EstimatePoint {
                    n,
                    replica: r,
                    log_z_over_n: v,
                });
                xs.push(correction.regressor(n));
                ys.push(v);
                ws.push(n as f64);
            }
            per_replica.push(if xs.len() >= 2 {
                linear_fit_weighted(&xs, &ys, &ws).intercept
            } else {
                ys[0]
            });
        }
        Ok((points, mean(&per_replica), stderr_of_mean(&per_replica)))
    }

    /// f_H(beta, h) from these tables.
    pub fn estimate_f(
        &self,
        psi: &PsiFactor,
        h: f64,
        correction: CorrectionModel,
    ) -> Result<FreeEnergyEstimate> {
        let (estimates, extrapolated, stderr) = self.extrapolate(
            |dp| Ok(full_partition(dp, psi, h)?.log_z / dp.n() as f64),
            correction,
        )?;
        Ok(FreeEnergyEstimate {
            h: Some(h),
            rho: None,
            beta: self.beta(),
            estimates,
            extrapolated,
            stderr,
        })
    }

    /// g(beta, rho) from the constrained slice m = round(rho N).
    pub fn estimate_g(&self, rho: f64, correction: CorrectionModel) -> Result<FreeEnergyEstimate> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::InvalidParameter {
                name: "rho",
                reason: format!("must lie in [0,1], got {rho}"),
            });
        }
        let (estimates, extrapolated, stderr) = self.extrapolate(
            |dp| {
                let n = dp.n();
                let m = ((rho * n as f64).round() as usize).clamp(1, n);
                Ok(dp.log_z(n, m) / n as f64)
            },
            correction,
        )?;
        Ok(FreeEnergyEstimate {
            h: None,
            rho: Some(rho),
            beta: self.beta(),
            estimates,
            extrapolated,
            stderr,
        })
    }
}

/// One-shot f_H(beta, h) estimate: builds tables and extrapolates.
pub fn estimate_f(
    law: &InterArrivalLaw,
    psi: &PsiFactor,
    h: f64,
    opts: &EstimateOptions,
) -> Result<FreeEnergyEstimate> {
    TableSet::build(law, opts)?.estimate_f(psi, h, opts.correction)
}

/// One-shot g(beta, rho) estimate.
pub fn estimate_g(
    law: &InterArrivalLaw,
    rho: f64,
    opts: &EstimateOptions,
) -> Result<FreeEnergyEstimate> {
    TableSet::build(law, opts)?.estimate_g(rho, opts.correction)
}

/// Exhaustive enumeration over contact sets for N <= 16: site N is always a
/// contact, sites 1..N-1 are free, giving 2^(N-1) configurations.
#[derive(Debug, Clone)]
pub struct OracleResult {
    pub log_z: f64,
    /// (mask, probability); bit s-1 of the mask means site s is a contact,
    /// indexed so that configs[i].0 == i | 1 << (n-1)
    pub configs: Vec<(u32, f64)>,
}

impl OracleResult {
    /// Probability of an exact ascending contact set ending at N.
    pub fn prob_of(&self, contacts: &[u32]) -> f64 {
        let mut mask = 0u32;
        for &c in contacts {
            mask |= 1 << (c - 1);
        }
        // bit N-1 (always set) equals configs.len(), so masking it off
        // recovers the enumeration index
        let low = (mask as usize) & (self.configs.len() - 1);
        debug_assert_eq!(self.configs[low].0, mask, "contact set must include N");
        self.configs[low].1
    }
}

pub const ORACLE_MAX_N: usize = 16;

/// Direct expansion of the contact-set sum: per configuration, the product
/// of inter-arrival masses over gaps times exp(h m + beta sum omega) times
/// Psi(m, N). No recursion shared with the DP.
pub fn brute_force_oracle(
    law: &InterArrivalLaw,
    psi: &PsiFactor,
    field: Option<&DisorderField>,
    h: f64,
    n: usize,
) -> Result<OracleResult> {
    if !(1..=ORACLE_MAX_N).contains(&n) {
        return Err(Error::CapExceeded(format!(
            "oracle enumerates 2^(N-1) configurations; N = {n} exceeds {ORACLE_MAX_N}"
        )));
    }
    let count = 1usize << (n - 1);
    let mut log_w = Vec::with_capacity(count);
    let mut masks = Vec::with_capacity(count);
    for low in 0..count {
        let mask = (low as u32) | (1 << (n - 1));
        let mut m = 0usize;
        let mut prev = 0u32;
        let mut lw = 0.0f64;
        for site in 1..=n as u32 {
            if mask & (1 << (site - 1)) != 0 {
                m += 1;
                lw += law.log_mass((site - prev) as u64);
                if let Some(f) = field {
                    lw += f.site_log_weight(site as usize);
                }
                prev = site;
            }
        }
        lw += h * m as f64 + psi.log_psi(m, n)?;
        log_w.push(lw);
        masks.push(mask);
    }
    let log_z = log_sum_exp(&log_w);
    let configs = masks
        .into_iter()
        .zip(log_w)
        .map(|(mask, lw)| (mask, (lw - log_z).exp()))
        .collect();
    Ok(OracleResult { log_z, configs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::DisorderDist;
    use crate::potential::{Potential, QMode};
    use crate::renewal::{build_power_law, renewal_mass_table};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn law15() -> InterArrivalLaw {
        build_power_law(1.5, 4096).unwrap()
    }

    fn gaussian_field(n: usize, seed: u64) -> DisorderField {
        DisorderField::generate(DisorderDist::Gaussian, 1.0, n, seed).unwrap()
    }

    #[test]
    fn homogeneous_table_is_renewal_mass_table() {
        let law = law15();
        let dp = build_constrained(&law, 24, None).unwrap();
        let ren = renewal_mass_table(&law, 24).unwrap();
        for n in 0..=24 {
            for m in 0..=n {
                assert_eq!(dp.log_z(n, m), ren.log_mass(m, n));
            }
        }
        assert_eq!(dp.log_z(0, 0), 0.0);
        assert_eq!(dp.log_z(5, 0), LOG_ZERO);
        assert_eq!(dp.log_z(3, 7), LOG_ZERO);
    }

    #[test]
    fn constant_field_shifts_by_beta_c_m() {
        let law = law15();
        let c = 0.37;
        let beta = 0.8;
        let field =
            DisorderField::from_values(DisorderDist::Gaussian, beta, 99, vec![c; 20]).unwrap();
        let dp = build_constrained(&law, 20, Some(&field)).unwrap();
        let ren = renewal_mass_table(&law, 20).unwrap();
        for n in 1..=20 {
            for m in 1..=n {
                assert_relative_eq!(
                    dp.log_z(n, m),
                    ren.log_mass(m, n) + beta * c * m as f64,
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn disordered_slice_matches_subset_enumeration() {
        // independent enumeration of each m-slice at N = 12
        let law = build_power_law(1.0, 4096).unwrap();
        let field = gaussian_field(12, 7);
        let dp = build_constrained(&law, 12, Some(&field)).unwrap();
        let n = 12usize;
        let mut by_m = vec![Vec::new(); n + 1];
        for low in 0..(1usize << (n - 1)) {
            let mask = (low as u32) | (1 << (n - 1));
            let mut m = 0;
            let mut prev = 0u32;
            let mut w = 1.0f64;
            for site in 1..=n as u32 {
                if mask & (1 << (site - 1)) != 0 {
                    m += 1;
                    w *= law.mass((site - prev) as u64)
                        * (field.beta() * field.omega(site as usize)).exp();
                    prev = site;
                }
            }
            by_m[m].push(w);
        }
        for m in 1..=n {
            let direct: f64 = by_m[m].iter().sum();
            assert_relative_eq!(dp.log_z(n, m), direct.ln(), epsilon = 1e-10);
        }
    }

    #[test]
    fn full_partition_unweighted_is_renewal_function() {
        let law = law15();
        let dp = build_constrained(&law, 32, None).unwrap();
        let psi = PsiFactor::exact(Potential::Zero).unwrap();
        let fp = full_partition(&dp, &psi, 0.0).unwrap();
        // u(n) by the one-dimensional renewal recursion, no m-resolution
        let mut u = vec![0.0f64; 33];
        u[0] = 1.0;
        for t in 1..=32 {
            for l in 1..=t {
                u[t] += law.mass(l as u64) * u[t - l];
            }
        }
        assert_relative_eq!(fp.log_z, u[32].ln(), epsilon = 1e-12);
    }

    #[test]
    fn tiny_closed_forms() {
        let law = law15();
        let psi = PsiFactor::exact(Potential::Overtwist { chi: 1.0 }).unwrap();
        let h = 0.4;
        let field = gaussian_field(2, 3);

        let dp1 = build_constrained(&law, 1, Some(&field)).unwrap();
        let z1 = full_partition(&dp1, &psi, h).unwrap().log_z;
        let direct1 = h + field.beta() * field.omega(1) + law.log_mass(1);
        assert_relative_eq!(z1, direct1, epsilon = 1e-12);

        let dp2 = build_constrained(&law, 2, Some(&field)).unwrap();
        let z2 = full_partition(&dp2, &psi, h).unwrap().log_z;
        let b = field.beta();
        let term_one = (h + b * field.omega(2) + psi.log_psi(1, 2).unwrap()).exp()
            * law.mass(2);
        let term_two = (2.0 * h + b * (field.omega(1) + field.omega(2))).exp()
            * law.mass(1)
            * law.mass(1);
        assert_relative_eq!(z2, (term_one + term_two).ln(), epsilon = 1e-12);

        let oracle = brute_force_oracle(&law, &psi, Some(&field), h, 2).unwrap();
        assert_relative_eq!(oracle.log_z, z2, epsilon = 1e-12);
    }

    #[test]
    fn oracle_equivalence_grid() {
        let law = law15();
        let field14 = gaussian_field(14, 21);
        let pots = [
            Potential::Zero,
            Potential::Affine { a: -0.5, b: 0.2 },
            Potential::Overtwist { chi: 1.0 },
            Potential::Supercoil { chi: 1.0, w: 1.0 },
        ];
        for pot in pots {
            let psi = PsiFactor::exact(pot).unwrap();
            for n in [6usize, 10, 14] {
                for quenched in [false, true] {
                    let field = quenched.then_some(&field14);
                    let dp = build_constrained(&law, n, field).unwrap();
                    let z = full_partition(&dp, &psi, 0.3).unwrap().log_z;
                    let oracle = brute_force_oracle(&law, &psi, field, 0.3, n).unwrap();
                    assert!(
                        (z - oracle.log_z).abs() <= 1e-9,
                        "{pot:?} N={n} quenched={quenched}: dp {z} vs oracle {}",
                        oracle.log_z
                    );
                }
            }
        }
        assert!(brute_force_oracle(
            &law,
            &PsiFactor::exact(Potential::Zero).unwrap(),
            None,
            0.0,
            17
        )
        .is_err());
    }

    #[test]
    fn unit_q_custom_zero_table_agree() {
        // Custom with a zero log-Q table must reproduce UnitQ exactly
        let law = law15();
        let dp = build_constrained(&law, 10, None).unwrap();
        let pot = Potential::ConcaveQuadratic { a: 1.0, c_h: 1.0 };
        let unit = PsiFactor::exact(pot).unwrap();
        let custom = PsiFactor::new(
            pot,
            QMode::Custom(std::sync::Arc::new(|_m, _n| 0.0)),
        )
        .unwrap();
        for h in [-0.5, 0.0, 0.8] {
            let a = full_partition(&dp, &unit, h).unwrap().log_z;
            let b = full_partition(&dp, &custom, h).unwrap().log_z;
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn estimates_monotone_in_h() {
        let law = law15();
        let opts = EstimateOptions {
            sizes: vec![64, 128],
            ..Default::default()
        };
        let tables = TableSet::build(&law, &opts).unwrap();
        let psi = PsiFactor::exact(Potential::Zero).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for &h in &[-0.5, -0.1, 0.0, 0.1, 0.5] {
            let est = tables.estimate_f(&psi, h, opts.correction).unwrap();
            assert!(est.extrapolated >= prev - 1e-12);
            assert!(est.stderr >= 0.0);
            prev = est.extrapolated;
        }
    }

    #[test]
    fn annealed_bound_on_quenched_mean() {
        let law = law15();
        let psi = PsiFactor::exact(Potential::Zero).unwrap();
        let beta = 0.8;
        let h = 0.2;
        let opts = EstimateOptions {
            sizes: vec![96, 192],
            disorder: Some(DisorderSpec {
                dist: DisorderDist::Gaussian,
                beta,
                replicas: 6,
                master_seed: 5,
            }),
            ..Default::default()
        };
        let quenched = estimate_f(&law, &psi, h, &opts).unwrap();
        let annealed_opts = EstimateOptions {
            sizes: vec![96, 192],
            ..Default::default()
        };
        let lambda = crate::disorder::lambda(DisorderDist::Gaussian, beta);
        let annealed = estimate_f(&law, &psi, h + lambda, &annealed_opts).unwrap();
        assert!(
            quenched.extrapolated <= annealed.extrapolated + 2.0 * quenched.stderr,
            "quenched {} vs annealed {}",
            quenched.extrapolated,
            annealed.extrapolated
        );
    }

    #[test]
    fn quenched_g_beats_homogeneous_and_is_concave() {
        let law = law15();
        let opts = EstimateOptions {
            sizes: vec![64, 128],
            disorder: Some(DisorderSpec {
                dist: DisorderDist::Gaussian,
                beta: 0.5,
                replicas: 4,
                master_seed: 11,
            }),
            ..Default::default()
        };
        let tables = TableSet::build(&law, &opts).unwrap();
        let homog_opts = EstimateOptions {
            sizes: vec![64, 128],
            ..Default::default()
        };
        let homog = TableSet::build(&law, &homog_opts).unwrap();

        let grid: Vec<f64> = (1..=9).map(|i| 0.1 * i as f64).collect();
        let mut g_q = Vec::new();
        for &rho in &grid {
            let q = tables.estimate_g(rho, opts.correction).unwrap();
            let h0 = homog.estimate_g(rho, opts.correction).unwrap();
            assert!(
                q.extrapolated >= h0.extrapolated - 2.0 * q.stderr,
                "rho {rho}: quenched {} vs homogeneous {}",
                q.extrapolated,
                h0.extrapolated
            );
            g_q.push((q.extrapolated, q.stderr));
        }
        for w in g_q.windows(3) {
            let second_diff = w[0].0 - 2.0 * w[1].0 + w[2].0;
            let band = 2.0 * (w[0].1 + 2.0 * w[1].1 + w[2].1);
            assert!(second_diff <= band, "convexity violation {second_diff}");
        }
    }

    #[test]
    fn cap_errors_are_loud() {
        let law = law15();
        assert!(matches!(
            build_constrained_with_cap(&law, 512, None, 256),
            Err(Error::CapExceeded(_))
        ));
        let opts = EstimateOptions {
            sizes: vec![128, 64],
            ..Default::default()
        };
        assert!(TableSet::build(&law, &opts).is_err());
        assert!(build_constrained(&law, 8192, None).is_err()); // exceeds law n_max 4096
    }

    static SUPERMULT_TABLE: OnceLock<crate::renewal::RenewalTable> = OnceLock::new();

    proptest! {
        #[test]
        fn renewal_slices_are_supermultiplicative(
            m1 in 1usize..8,
            m2 in 1usize..8,
            pad1 in 0usize..16,
            pad2 in 0usize..16,
        ) {
            let table = SUPERMULT_TABLE.get_or_init(|| {
                renewal_mass_table(&law15(), 48).unwrap()
            });
            let n1 = m1 + pad1;
            let n2 = m2 + pad2;
            let joint = table.log_mass(m1 + m2, n1 + n2);
            let split = table.log_mass(m1, n1) + table.log_mass(m2, n2);
            prop_assert!(joint >= split - 1e-9);
        }
    }
}
