//! Certification toolkit for the strategic non-shareability of mediated
//! Bell correlations.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`qkernel`]: dense complex linear algebra for two- and three-qubit
//!   strategies (states, binary observables, Born-rule behaviors).
//! * [`behaviors`]: finite-alphabet conditional behaviors, no-signalling
//!   checks, scoring kernels, hidden-variable models and copied-seed
//!   extensions.
//! * [`frontier`]: closed-form CHSH frontier, certification records and the
//!   Werner-noise scan.
//! * [`finitedata`]: trial simulation, correlator estimation and Hoeffding
//!   lower confidence bounds.
//! * [`extlp`]: a dense simplex solver and the extension-polytope linear
//!   programs (collusive vulnerability, shadow distance, capacity).
//! * [`npa`]: the reduced length-2 moment relaxation for tilted CHSH with an
//!   interior-point SDP solver and its diagnostics.
//!
//! Batch workloads (Monte Carlo coverage, verification corpora, SDP grids)
//! go through [`exec`], which runs on rayon when the `parallel` feature is
//! enabled and falls back to a plain loop otherwise.

pub mod behaviors;
pub mod error;
pub mod exec;
pub mod extlp;
pub mod finitedata;
pub mod frontier;
pub mod npa;
pub mod qkernel;

pub use error::{Error, Result};

/// Tool version string embedded in emitted certificates.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// 2√2, the Tsirelson bound on the CHSH score.
pub const TSIRELSON: f64 = 2.0 * std::f64::consts::SQRT_2;

/// Decimal rendering of `x` with `digits` significant digits, switching to
/// exponent notation for very large or small magnitudes.
pub fn format_sig(x: f64, digits: usize) -> String {
    let digits = digits.max(1);
    if !x.is_finite() || x == 0.0 {
        return x.to_string();
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let exp: i32 = sci[sci.find('e').expect("exponent marker") + 1..].parse().expect("integer exponent");
    if (-5..15).contains(&exp) {
        format!("{:.*}", (digits as i32 - 1 - exp).max(0) as usize, x)
    } else {
        sci
    }
}
