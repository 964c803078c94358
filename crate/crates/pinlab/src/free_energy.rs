//! The semi-analytic layer: g(rho) via the infimum formula, the Legendre
//! machinery f_H(h) = sup_rho(h rho + H(rho) + g(rho)), critical points,
//! phase diagrams and exponent extraction.
//!
//! All expectations go through the Laplace-sum evaluator, so laws here can
//! carry astronomically large supports (the exponent fits default to 2^40)
//! without materializing anything. The variational problems are solved by
//! sign bisection on strictly monotone derivatives; the localized branch is
//! parametrized by the tilt x rather than rho, which keeps full relative
//! precision when the maximizer sits within 1e-10 of a phase boundary.

use crate::potential::Potential;
use crate::renewal::InterArrivalLaw;
use crate::stats::{golden_section_max, log_log_slope};
use crate::{par, Error, Result};
use std::collections::HashMap;
use std::sync::Mutex;

/// One solved point of the constrained free energy g.
#[derive(Debug, Clone, Copy)]
pub struct GPoint {
    pub g: f64,
    /// g'(rho) = log E[exp(-x_rho eta)]
    pub g_prime: f64,
    /// minimizer of x + rho log E[exp(-x eta)] over x >= 0
    pub x_rho: f64,
}

/// Evaluator of g(rho) = inf_{x>=0} (x + rho log E[exp(-x eta)]) with a
/// point cache. Immutable after construction; safe to share across threads.
#[derive(Debug)]
pub struct GRhoEvaluator {
    law: InterArrivalLaw,
    cache: Mutex<HashMap<u64, GPoint>>,
}

impl GRhoEvaluator {
    pub fn new(law: InterArrivalLaw) -> Self {
        GRhoEvaluator {
            law,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn law(&self) -> &InterArrivalLaw {
        &self.law
    }

    /// g, g' and the minimizing tilt at rho in [0,1].
    pub fn eval(&self, rho: f64) -> Result<GPoint> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::InvalidParameter {
                name: "rho",
                reason: format!("must lie in [0,1], got {rho}"),
            });
        }
        if let Some(p) = self.cache.lock().unwrap().get(&rho.to_bits()) {
            return Ok(*p);
        }
        let p = self.eval_uncached(rho)?;
        self.cache.lock().unwrap().insert(rho.to_bits(), p);
        Ok(p)
    }

    fn eval_uncached(&self, rho: f64) -> Result<GPoint> {
        if rho == 0.0 {
            return Ok(GPoint {
                g: 0.0,
                g_prime: 0.0,
                x_rho: 0.0,
            });
        }
        if rho == 1.0 {
            // the infimum runs off to x = inf and leaves log K(1)
            return Ok(GPoint {
                g: self.law.log_mass(1),
                g_prime: f64::NEG_INFINITY,
                x_rho: f64::INFINITY,
            });
        }
        if rho <= self.law.rho_c() {
            // d/dx at x=0 is 1 - rho E[eta] >= 0: the minimum sits at x = 0
            return Ok(GPoint {
                g: rho * self.law.laplace_exp(0.0).ln(),
                g_prime: self.law.laplace_exp(0.0).ln(),
                x_rho: 0.0,
            });
        }
        let x = self.solve_tilt(rho)?;
        let le = self.law.laplace_exp(x).ln();
        Ok(GPoint {
            g: x + rho * le,
            g_prime: le,
            x_rho: x,
        })
    }

    /// x > 0 with rho E_x[eta] = 1; the tilted mean is strictly decreasing
    /// in x, so sign bisection converges to the last representable double.
    fn solve_tilt(&self, rho: f64) -> Result<f64> {
        let target = 1.0 / rho;
        let mut lo = 0.0f64;
        let mut hi = 1.0f64;
        let mut guard = 0;
        while self.law.tilted_mean(hi) > target {
            lo = hi;
            hi *= 2.0;
            guard += 1;
            if guard > 200 {
                return Err(Error::Bracket {
                    context: "solve_tilt",
                    lo,
                    hi,
                });
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if self.law.tilted_mean(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// The three path regimes of the localization trichotomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Delocalized,
    BigJumpLocalized,
    FullyLocalized,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::Delocalized => "delocalized",
            Regime::BigJumpLocalized => "big-jump-localized",
            Regime::FullyLocalized => "fully-localized",
        }
    }

    pub fn classify(rho_h: f64, rho_c: f64) -> Regime {
        if rho_h == 0.0 {
            Regime::Delocalized
        } else if rho_h < rho_c {
            Regime::BigJumpLocalized
        } else {
            Regime::FullyLocalized
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CriticalPoints {
    /// -H'(0); -inf when H'(0) = +inf (always-localized potentials)
    pub h_c: f64,
    /// -H'(rho_c); defined when rho_c is interior
    pub h_b: Option<f64>,
    pub rho_c: f64,
}

pub fn critical_points(potential: &Potential, ev: &GRhoEvaluator) -> Result<CriticalPoints> {
    let rho_c = ev.law().rho_c();
    let h_c = -potential.h_prime_at_0();
    let h_b = if rho_c > 0.0 && rho_c < 1.0 {
        Some(-potential.h_prime(rho_c)?)
    } else {
        None
    };
    Ok(CriticalPoints { h_c, h_b, rho_c })
}

/// One solved point of the Legendre problem.
#[derive(Debug, Clone, Copy)]
pub struct LegendrePoint {
    pub f: f64,
    pub rho_h: f64,
    /// set when the maximizer is a whole plateau (first-order tie at h_b for
    /// potentials with H'' = 0); rho_h then reports the right edge
    pub tie: bool,
}

/// f_H(h) = sup_rho (h rho + H(rho) + g(rho)) and its argmax.
///
/// The objective's derivative h + H'(rho) + g'(rho) is strictly decreasing
/// wherever it matters, and g' vanishes on [0, rho_c], so the problem splits:
/// below h_b the maximizer solves H'(rho) = -h inside [0, rho_c]; above h_b
/// it is parametrized by the tilt x through rho(x) = 1/E_x[eta].
pub fn legendre_f(potential: &Potential, ev: &GRhoEvaluator, h: f64) -> Result<LegendrePoint> {
    let law = ev.law();
    let rho_c = law.rho_c();
    let h_b = -potential.h_prime(rho_c)?;
    if h < h_b {
        let hp0 = potential.h_prime_at_0();
        if hp0.is_finite() && h <= -hp0 {
            // delocalized: the derivative is already nonpositive at 0+
            return Ok(LegendrePoint {
                f: potential.h_at_0(),
                rho_h: 0.0,
                tie: false,
            });
        }
        // interior solution of H'(rho) = -h on (0, rho_c); H' decreasing
        let mut lo = 0.0;
        let mut hi = rho_c;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if potential.h_prime(mid)? + h > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let rho = 0.5 * (lo + hi);
        return Ok(LegendrePoint {
            f: h * rho + potential.h(rho)?,
            rho_h: rho,
            tie: false,
        });
    }
    if h == h_b {
        // boundary case; flat objective on [0, rho_c] iff H is affine there
        let tie = matches!(potential, Potential::Zero | Potential::Affine { .. });
        return Ok(LegendrePoint {
            f: h * rho_c + potential.h(rho_c)?,
            rho_h: rho_c,
            tie,
        });
    }
    // big-jump side: solve h + H'(rho(x)) + log E[exp(-x eta)] = 0 in x
    let objective = |x: f64| -> Result<f64> {
        let rho = 1.0 / law.tilted_mean(x);
        Ok(h + potential.h_prime(rho)? + law.laplace_exp(x).ln())
    };
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    let mut guard = 0;
    while objective(hi)? > 0.0 {
        lo = hi;
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::Bracket {
                context: "legendre_f",
                lo,
                hi,
            });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if objective(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    let le = law.laplace_exp(x).ln();
    let rho = 1.0 / law.tilted_mean(x);
    let g = x + rho * le;
    Ok(LegendrePoint {
        f: h * rho + potential.h(rho)? + g,
        rho_h: rho,
        tie: false,
    })
}

/// The regular branch f_H^reg(h) = sup_rho (h rho + H(rho)), i.e. the
/// variational problem with g dropped. Above h_b the true f_H peels off
/// below this curve with the kink order kappa.
pub fn legendre_f_reg(potential: &Potential, h: f64) -> Result<LegendrePoint> {
    let hp0 = potential.h_prime_at_0();
    if hp0.is_finite() && h <= -hp0 {
        return Ok(LegendrePoint {
            f: potential.h_at_0(),
            rho_h: 0.0,
            tie: false,
        });
    }
    if h + potential.h_prime(1.0 - 1e-12)? >= 0.0 {
        return Ok(LegendrePoint {
            f: h + potential.h_at_1(),
            rho_h: 1.0,
            tie: false,
        });
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if potential.h_prime(mid)? + h > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let rho = 0.5 * (lo + hi);
    Ok(LegendrePoint {
        f: h * rho + potential.h(rho)?,
        rho_h: rho,
        tie: false,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct PhasePoint {
    pub h: f64,
    pub f: f64,
    pub f_reg: f64,
    pub rho_h: f64,
    pub regime: Regime,
}

#[derive(Debug, Clone)]
pub struct PhaseDiagram {
    pub potential: Potential,
    pub rho_c: f64,
    pub h_c: f64,
    pub h_b: Option<f64>,
    pub grid: Vec<PhasePoint>,
}

/// Sweeps the h grid; points evaluate independently and in parallel.
pub fn phase_diagram(
    potential: &Potential,
    ev: &GRhoEvaluator,
    h_grid: &[f64],
) -> Result<PhaseDiagram> {
    let cp = critical_points(potential, ev)?;
    let points = par::map_collect(h_grid.len(), |i| -> Result<PhasePoint> {
        let h = h_grid[i];
        let lp = legendre_f(potential, ev, h)?;
        let reg = legendre_f_reg(potential, h)?;
        Ok(PhasePoint {
            h,
            f: lp.f,
            f_reg: reg.f,
            rho_h: lp.rho_h,
            regime: Regime::classify(lp.rho_h, cp.rho_c),
        })
    });
    let mut grid = Vec::with_capacity(points.len());
    for p in points {
        grid.push(p?);
    }
    Ok(PhaseDiagram {
        potential: *potential,
        rho_c: cp.rho_c,
        h_c: cp.h_c,
        h_b: cp.h_b,
        grid,
    })
}

/// Free energy of the plain pinning model (Psi identically 1): for h > 0 the
/// unique x with E[exp(-x eta)] = exp(-h); zero otherwise. This closed
/// characterization is an oracle for legendre_f with the Zero potential.
pub fn pinning_f(ev: &GRhoEvaluator, h: f64) -> Result<f64> {
    if h <= 0.0 {
        return Ok(0.0);
    }
    let law = ev.law();
    let shortfall = |x: f64| law.laplace_exp(x).ln() + h;
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    let mut guard = 0;
    while shortfall(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::Bracket {
                context: "pinning_f",
                lo,
                hi,
            });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if shortfall(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// A fixed geometric fit window (log-spaced points, endpoints included).
#[derive(Debug, Clone, Copy)]
pub struct GeomWindow {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GeomWindow {
    pub fn new(lo: f64, hi: f64) -> Self {
        GeomWindow { lo, hi, points: 12 }
    }

    pub fn values(&self) -> Vec<f64> {
        let k = self.points.max(2);
        let ratio = (self.hi / self.lo).ln() / (k - 1) as f64;
        (0..k).map(|i| self.lo * (ratio * i as f64).exp()).collect()
    }
}

/// Which asymptotic regime a g-exponent fit anchors on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GAnchor {
    /// -g against delta = rho - rho_c (the kappa regime, alpha > 1)
    DeltaAboveRhoC,
    /// -g against rho from zero (the 1/(1-alpha) regime, alpha < 1)
    RhoFromZero,
}

/// Log-log slope of -g on the window, no parameter gating; diagnostics for
/// the log-corrected alphas go through here.
pub fn g_exponent_slope(ev: &GRhoEvaluator, anchor: GAnchor, window: GeomWindow) -> Result<f64> {
    let rho_c = ev.law().rho_c();
    let xs = window.values();
    let mut ys = Vec::with_capacity(xs.len());
    for &x in &xs {
        let rho = match anchor {
            GAnchor::DeltaAboveRhoC => rho_c + x,
            GAnchor::RhoFromZero => x,
        };
        if rho >= 1.0 {
            return Err(Error::FitWindow(format!(
                "window point rho = {rho} leaves (0,1)"
            )));
        }
        ys.push(-ev.eval(rho)?.g);
    }
    log_log_slope(&xs, &ys)
}

/// Fitted growth exponent of -g near its critical anchor, with the default
/// windows. Expected: kappa = max(alpha/(alpha-1), 2) for alpha > 1, and
/// 1/(1-alpha) for alpha < 1. The log-corrected alphas 1 and 2 are refused.
pub fn g_asymptotic_exponent(ev: &GRhoEvaluator) -> Result<f64> {
    let alpha = ev.law().alpha();
    if (alpha - 1.0).abs() < 1e-9 || (alpha - 2.0).abs() < 1e-9 {
        return Err(Error::InvalidParameter {
            name: "alpha",
            reason: format!(
                "alpha = {alpha} carries a logarithmic correction; fit excluded"
            ),
        });
    }
    if alpha > 1.0 {
        g_exponent_slope(ev, GAnchor::DeltaAboveRhoC, GeomWindow::new(1e-4, 1e-2))
    } else {
        g_exponent_slope(ev, GAnchor::RhoFromZero, GeomWindow::new(1e-3, 1e-1))
    }
}

/// Expected kink order kappa for alpha > 1.
pub fn kappa(alpha: f64) -> f64 {
    (alpha / (alpha - 1.0)).max(2.0)
}

/// Expected pinning growth exponent max(1, 1/alpha).
pub fn pinning_exponent_expected(alpha: f64) -> f64 {
    (1.0 / alpha).max(1.0)
}

/// Expected delocalization exponent: 2 for alpha > 1/2, 1/alpha below.
pub fn deloc_exponent_expected(alpha: f64) -> f64 {
    if alpha > 0.5 {
        2.0
    } else {
        1.0 / alpha
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PinningCheck {
    /// log-log slope of f(0,h) over the window
    pub slope: f64,
    /// f/h at the window's small end; tends to rho_c when alpha > 1
    pub f_over_h_small: f64,
}

/// Fits f(0,h) ~ c h^{max(1, 1/alpha)} on a geometric window via the
/// Legendre machinery with the Zero potential.
pub fn pinning_exponent_check(ev: &GRhoEvaluator, window: GeomWindow) -> Result<PinningCheck> {
    let alpha = ev.law().alpha();
    if (alpha - 1.0).abs() < 1e-9 {
        return Err(Error::InvalidParameter {
            name: "alpha",
            reason: "alpha = 1 carries a logarithmic correction; fit excluded".into(),
        });
    }
    let zero = Potential::Zero;
    let hs = window.values();
    let mut fs = Vec::with_capacity(hs.len());
    for &h in &hs {
        fs.push(legendre_f(&zero, ev, h)?.f);
    }
    Ok(PinningCheck {
        slope: log_log_slope(&hs, &fs)?,
        f_over_h_small: fs[0] / hs[0],
    })
}

/// f_H(h) - H(0) near the delocalization point, assembled term by term so
/// that no large quantities are subtracted: with eps = h - h_c,
/// excess = eps rho_h + [H(rho) - H(0) - H'(0) rho] + g(rho).
pub fn delocalization_excess(
    potential: &Potential,
    ev: &GRhoEvaluator,
    h: f64,
) -> Result<f64> {
    let hp0 = potential.h_prime_at_0();
    if !hp0.is_finite() {
        return Err(Error::InvalidParameter {
            name: "potential",
            reason: "needs finite H'(0) (a delocalized phase)".into(),
        });
    }
    let eps = h + hp0;
    if eps <= 0.0 {
        return Ok(0.0);
    }
    let rho = legendre_f(potential, ev, h)?.rho_h;
    let bracket = match *potential {
        Potential::Zero | Potential::Affine { .. } => 0.0,
        Potential::ConcaveQuadratic { c_h, .. } => -0.5 * c_h * rho * rho,
        // no closed form: assembled directly (safe while rho is not tiny)
        _ => potential.h(rho)? - potential.h_at_0() - hp0 * rho,
    };
    Ok(eps * rho + bracket + ev.eval(rho)?.g)
}

/// (f_H(h) - H(0)) * 2 c_H / (h - h_c)^2; tends to 1 as h drops to h_c when
/// alpha > 1/2.
pub fn deloc_quadratic_ratio(
    potential: &Potential,
    ev: &GRhoEvaluator,
    h: f64,
) -> Result<f64> {
    let c_h = potential.curvature_at_0().ok_or(Error::InvalidParameter {
        name: "potential",
        reason: "quadratic ratio needs the curvature c_H at 0".into(),
    })?;
    let eps = h + potential.h_prime_at_0();
    if eps <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "h",
            reason: "need h above h_c".into(),
        });
    }
    Ok(delocalization_excess(potential, ev, h)? * 2.0 * c_h / (eps * eps))
}

/// Log-log slope of the delocalization excess in eps = h - h_c.
pub fn deloc_exponent_fit(
    potential: &Potential,
    ev: &GRhoEvaluator,
    window: GeomWindow,
) -> Result<f64> {
    let h_c = -potential.h_prime_at_0();
    if !h_c.is_finite() {
        return Err(Error::InvalidParameter {
            name: "potential",
            reason: "needs finite h_c".into(),
        });
    }
    let eps = window.values();
    let mut ys = Vec::with_capacity(eps.len());
    for &e in &eps {
        ys.push(delocalization_excess(potential, ev, h_c + e)?);
    }
    log_log_slope(&eps, &ys)
}

/// Log-log slope of f_H^reg - f_H in h - h_b above the big-jump point;
/// expected kappa.
pub fn kink_exponent_fit(
    potential: &Potential,
    ev: &GRhoEvaluator,
    window: GeomWindow,
) -> Result<f64> {
    let h_b = critical_points(potential, ev)?
        .h_b
        .ok_or(Error::InvalidParameter {
            name: "potential",
            reason: "kink fit needs an interior rho_c".into(),
        })?;
    let dh = window.values();
    let mut ys = Vec::with_capacity(dh.len());
    for &d in &dh {
        let h = h_b + d;
        ys.push(legendre_f_reg(potential, h)?.f - legendre_f(potential, ev, h)?.f);
    }
    log_log_slope(&dh, &ys)
}

/// The conjugate transform pushed back: inf_h (f_H(h) - rho h) - H(rho),
/// found by golden section around the stationary h. Recovers g(rho).
pub fn conjugate_g(potential: &Potential, ev: &GRhoEvaluator, rho: f64) -> Result<f64> {
    check_unit_open(rho)?;
    let h_star = -(potential.h_prime(rho)? + ev.eval(rho)?.g_prime);
    let lo = h_star - 0.5;
    let hi = h_star + 0.5;
    let (_, neg_min) = golden_section_max(
        |h| match legendre_f(potential, ev, h) {
            Ok(lp) => -(lp.f - rho * h),
            Err(_) => f64::NEG_INFINITY,
        },
        lo,
        hi,
        1e-10,
    );
    Ok(-neg_min - potential.h(rho)?)
}

fn check_unit_open(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidParameter {
            name: "rho",
            reason: format!("must lie in (0,1), got {rho}"),
        });
    }
    Ok(())
}
