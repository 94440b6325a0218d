//! Closed-form CHSH anti-collusion frontier.
//!
//! All square roots of `8 − s²` are evaluated as `(2√2 − s)(2√2 + s)` to keep
//! precision near the Tsirelson endpoint.

use serde::{Deserialize, Serialize};

use crate::behaviors::{game_score, lhv_behavior, Behavior, GameKernel, LhvModel, ResponseTable};
use crate::error::{check_range, Error, Result};
use crate::qkernel::{born_behavior, QuantumStrategy};
use crate::TSIRELSON;

/// `8 − s²` without cancellation near `s = 2√2`.
fn eight_minus_square(s: f64) -> f64 {
    ((TSIRELSON - s) * (TSIRELSON + s)).max(0.0)
}

/// Largest collusive CHSH score compatible with an authorized score `s`:
/// `√(8 − s²)`.
pub fn s13_max(s: f64) -> Result<f64> {
    let s = check_range("s", s, 0.0, TSIRELSON)?;
    Ok(eight_minus_square(s).sqrt())
}

/// Score-certified anti-collusion power `[(s − √(8 − s²))/8]₊`.
pub fn gamma_plus(s: f64) -> Result<f64> {
    let s = check_range("s", s, 0.0, TSIRELSON)?;
    // s ≤ 2 ⇔ s ≤ √(8 − s²); decide the onset exactly rather than by rounding.
    if s <= 2.0 {
        return Ok(0.0);
    }
    Ok(((s - eight_minus_square(s).sqrt()) / 8.0).max(0.0))
}

/// CHSH winning probability `1/2 + s/8`.
pub fn omega_from_s(s: f64) -> Result<f64> {
    let s = check_range("s", s, -TSIRELSON, TSIRELSON)?;
    Ok(0.5 + s / 8.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NearTsirelsonBound {
    pub exact: f64,
    pub loose: f64,
}

/// Bound on `|S₁₃|` when `S₁₂ = 2√2 − δ`: exact `√(4√2 δ − δ²)` and the
/// looser `2^{5/4} √δ`.
pub fn near_tsirelson_bound(delta: f64) -> Result<NearTsirelsonBound> {
    let delta = check_range("delta", delta, 0.0, TSIRELSON)?;
    // 4√2 δ − δ² = δ (2·2√2 − δ)
    let exact = (delta * (2.0 * TSIRELSON - delta)).max(0.0).sqrt();
    let loose = 2f64.powf(1.25) * delta.sqrt();
    Ok(NearTsirelsonBound { exact, loose })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `s ≤ 2`: a classical colluder can match the authorized score.
    BelowLocal,
    Certified,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Analytic,
    FiniteData { confidence: f64, n_min: u64 },
}

/// Output of the four-step certification protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateRecord {
    pub s12: f64,
    pub s13_max: f64,
    pub omega12: f64,
    pub omega13_max: f64,
    pub gamma_plus: f64,
    pub regime: Regime,
    pub provenance: Provenance,
}

/// Certifies an authorized CHSH score. Scores above 2√2 are rejected, not
/// clipped.
pub fn certify(s12: f64) -> Result<CertificateRecord> {
    certify_with(s12, Provenance::Analytic)
}

pub(crate) fn certify_with(s12: f64, provenance: Provenance) -> Result<CertificateRecord> {
    let s13 = s13_max(s12)?;
    let gamma = gamma_plus(s12)?;
    Ok(CertificateRecord {
        s12,
        s13_max: s13,
        omega12: omega_from_s(s12)?,
        omega13_max: 0.5 + s13 / 8.0,
        gamma_plus: gamma,
        regime: if gamma > 0.0 { Regime::Certified } else { Regime::BelowLocal },
        provenance,
    })
}

/// One row of the Werner-noise scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WernerRecord {
    pub eta: f64,
    pub s12: f64,
    pub a12: f64,
    pub c13_max_bound: f64,
    pub gap: f64,
}

pub fn werner_record(eta: f64) -> Result<WernerRecord> {
    let eta = check_range("eta", eta, 0.0, 1.0)?;
    let s12 = TSIRELSON * eta;
    let a12 = 0.5 + eta / TSIRELSON;
    // √(1 − η²) = √((1 − η)(1 + η))
    let root = ((1.0 - eta) * (1.0 + eta)).sqrt();
    let c13_max_bound = 0.5 + root / TSIRELSON;
    let gap = if eta <= std::f64::consts::FRAC_1_SQRT_2 {
        0.0
    } else {
        ((eta - root) / TSIRELSON).max(0.0)
    };
    Ok(WernerRecord { eta, s12, a12, c13_max_bound, gap })
}

pub fn werner_scan(eta_grid: &[f64]) -> Result<Vec<WernerRecord>> {
    eta_grid.iter().map(|&eta| werner_record(eta)).collect()
}

/// `n` evenly spaced points on `[lo, hi]`, both ends included.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| if i == n - 1 { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
            .collect(),
    }
}

/// Robust-decoupling constant `(2√2 + 2)√ε`.
pub fn robust_decoupling_bound(eps: f64) -> Result<f64> {
    let eps = check_range("eps", eps, 0.0, 1.0)?;
    Ok((TSIRELSON + 2.0) * eps.sqrt())
}

/// Gentle-projection bound `2√α + α`.
pub fn gentle_bound(alpha: f64) -> Result<f64> {
    let alpha = check_range("alpha", alpha, 0.0, 1.0)?;
    Ok(2.0 * alpha.sqrt() + alpha)
}

/// Payoff perturbation bound `(1 + λ)·d`.
pub fn payoff_norm_bound(lambda: f64, trace_dist: f64) -> Result<f64> {
    let lambda = check_range("lambda", lambda, 0.0, f64::MAX)?;
    let trace_dist = check_range("trace_dist", trace_dist, 0.0, f64::MAX)?;
    Ok((1.0 + lambda) * trace_dist)
}

/// Payoff separation at `λ = 1`: `U₁ = A₁₂ − V₁₃`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayoffSeparation {
    pub a12: f64,
    /// Colluder value used for `U₁`: the copied-seed score for classical
    /// models, the exact worst case for the Bell strategy.
    pub v13: f64,
    pub u1: f64,
}

/// Classical side with the colluder copying player 2's response rule on the
/// shared seed. `C₁₃ = A₁₂`, so `U₁ ≤ 0`.
pub fn classical_separation(model: &LhvModel) -> Result<PayoffSeparation> {
    if model.n_parties() != 2 {
        return Err(Error::InvalidModel(format!("expected a bipartite model, got {} parties", model.n_parties())));
    }
    let chsh = GameKernel::chsh();
    let a12 = game_score(&lhv_behavior(model)?, &chsh)?;
    // The (1,3) marginal of the copied-seed extension is the model with the
    // colluder's rule in place of player 2's; built directly it carries no
    // rounding from summing player 2 out.
    let colluder = copied_seed_marginal(model, &model.responses()[1])?;
    let c13 = game_score(&colluder, &chsh)?;
    Ok(PayoffSeparation { a12, v13: c13, u1: a12 - c13 })
}

/// `(1,3)` marginal of [`copied_seed_extension`] with colluder rule `p3`.
pub fn copied_seed_marginal(model: &LhvModel, p3: &ResponseTable) -> Result<Behavior> {
    let first = model.responses()[0].clone();
    lhv_behavior(&LhvModel::new(model.weights().to_vec(), vec![first, p3.clone()])?)
}

/// Quantum side for a bipartite strategy: the colluder's best win
/// probability is bounded by monogamy at the attained score.
pub fn quantum_separation(strategy: &QuantumStrategy) -> Result<PayoffSeparation> {
    let p = born_behavior(strategy)?;
    let a12 = game_score(&p, &GameKernel::chsh())?;
    let s12 = 8.0 * (a12 - 0.5);
    // The square root amplifies rounding at the endpoint.
    let s = if (s12 - TSIRELSON).abs() < 1e-12 { TSIRELSON } else { s12 };
    let v13 = 0.5 + s13_max(s.abs())? / 8.0;
    Ok(PayoffSeparation { a12, v13, u1: a12 - v13 })
}
