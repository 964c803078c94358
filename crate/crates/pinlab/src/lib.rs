//! Numerical laboratory for one-dimensional generalized pinning models.
//!
//! The crate is organized around one object: the constrained partition
//! function of a heavy-tailed renewal pinned at both endpoints, with an
//! optional quenched disorder field and a macroscopic `Psi(m, N)` reward for
//! the number of contacts. Everything else is built on top of it:
//!
//! * [`renewal`]: truncated power-law inter-arrival laws, exact renewal mass
//!   tables, exponential tilting, bridge sampling.
//! * [`potential`]: the contact-fraction potentials `H(rho)` and their
//!   finite-size factors `Psi(m, N)`.
//! * [`partition`]: the O(N^3) transfer recursion for `log Z[n][m]`, full
//!   partition functions, finite-size free-energy estimators, and a
//!   brute-force enumeration oracle.
//! * [`free_energy`]: the variational free energy `g(rho)`, Legendre
//!   transforms, phase boundaries, and critical-exponent fits, all
//!   semi-analytic (no transfer tables involved).
//! * [`disorder`]: IID disorder fields with deterministic replica streams.
//! * [`sampler`]: exact two-stage Gibbs sampling of contact sets and the
//!   excursion observables (big-jump diagnostics).
//! * [`cache`]: a small binary format for persisting transfer tables.
//!
//! All probability-like arithmetic is carried in natural-log space; see
//! [`logspace`]. With the default `parallel` feature the table recursion and
//! Monte Carlo loops fan out over rayon; without it the same code runs
//! sequentially.

pub mod cache;
pub mod disorder;
pub mod error;
pub mod free_energy;
pub mod laplace;
pub mod logspace;
pub mod partition;
pub mod potential;
pub mod renewal;
pub mod rng;
pub mod sampler;
pub mod stats;
pub mod triangle;

mod par;

pub use error::{Error, Result};

/// Configures the global thread pool used by the `parallel` feature.
///
/// Call once, before any parallel work. Returns an error if the pool was
/// already initialized with a different size. A no-op without the feature.
pub fn configure_threads(threads: usize) -> Result<()> {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidParameter {
                name: "threads",
                reason: e.to_string(),
            })?;
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    Ok(())
}
