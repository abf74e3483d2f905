//! Simulation and analysis toolkit for the coupled electron–nuclear spin system
//! of the nitrogen-vacancy center in diamond.
//!
//! The crate models a spin-1 electron hyperfine-coupled to one nucleus (¹⁴N,
//! ¹⁵N, or a single ¹³C) in both orbital ground and excited states, and builds
//! everything the accompanying tools need on top of that Hamiltonian:
//!
//! - [`spin`]: operators, Hamiltonian assembly, exact diagonalization,
//!   transition catalogs, and location of the excited-state level
//!   anticrossing (ESLAC);
//! - [`dynamics`]: lab-frame propagation under a monochromatic drive (no
//!   rotating-wave approximation baked in), pulse sequences, and the
//!   square-pulse / enhanced-nuclear-Rabi analytics;
//! - [`floquet`]: time-averaged transition probabilities of the driven system
//!   from the Floquet quasi-energy matrix;
//! - [`pumping`]: optical-cycle nuclear polarization at the ESLAC and the
//!   rate-equation steady state fed by Floquet probabilities;
//! - [`fitting`]: Levenberg–Marquardt fits of the standard lineshapes and
//!   hyperfine-parameter extraction from measured line positions;
//! - [`spectrum`]: the plain (x, y) record the scan producers and fitters
//!   exchange.
//!
//! # Conventions
//!
//! Energies and frequencies are in MHz, magnetic fields in Gauss, times in µs.
//! The propagator is `U(t) = exp(−2πi·H·t)` for `H` in MHz and `t` in µs, so a
//! level pair split by `f` MHz beats with period `1/f` µs and no stray 2π ever
//! appears in user-facing quantities.
//!
//! The product basis is ordered electron-major: `m_s ∈ {+1, 0, −1}` outermost,
//! nuclear projection descending innermost, giving dimension 6 (I=1/2) or 9
//! (I=1). [`spin::BasisLabel`] spells out the `(m_s, m_I)` pair of each index.

pub mod dynamics;
pub mod fitting;
pub mod floquet;
pub mod pumping;
pub mod spectrum;
pub mod spin;

use thiserror::Error;

/// Complex double — the element type of every operator in the crate.
pub type C64 = num_complex::Complex64;

/// Crate-wide error type.
///
/// Physics and convergence failures are errors; questionable-but-answerable
/// requests (a drive resonant with nothing, say) are warnings left to the
/// caller's logging.
#[derive(Debug, Error)]
pub enum Error {
    /// A matrix or vector had the wrong shape for the operation.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// An operator that must be Hermitian was not, beyond tolerance.
    #[error("matrix not Hermitian: max |H - H†| element {deviation:.3e}")]
    NotHermitian { deviation: f64 },

    /// A parameter was rejected before any computation ran.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// Spin value outside the supported set.
    #[error("unsupported spin: {0}")]
    UnsupportedSpin(String),

    /// A basis label referred to a state outside the system.
    #[error("no such basis state: {0}")]
    NoSuchState(String),

    /// Root-finding or iteration failed to converge.
    #[error("{what} did not converge within {limit}")]
    Convergence { what: String, limit: String },

    /// A bracketing search found no sign change.
    #[error("no level crossing between {lo} G and {hi} G")]
    NoCrossing { lo: f64, hi: f64 },

    /// The requested pair has no direct coupling element.
    #[error("states {0} and {1} are not flip-flop coupled")]
    NotCoupled(String, String),

    /// The fit problem is underdetermined or otherwise ill-posed.
    #[error("ill-posed fit: {0}")]
    IllPosedFit(String),

    /// LAPACK failure surfaced by the linear-algebra backend.
    #[error("linear algebra backend: {0}")]
    Linalg(String),

    /// Non-finite number encountered where one must not appear.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Check that every element of a slice is finite; used at public entry points.
pub(crate) fn ensure_finite(what: &'static str, xs: &[f64]) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
