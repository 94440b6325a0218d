//! Finite-data certification from i.i.d. CHSH trials.
//!
//! Settings are drawn uniformly, outcomes are ±1, and the failure budget `α`
//! is split evenly over the four correlators (hence `ln(8/α)`).

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::behaviors::{lhv_behavior, Behavior, LhvModel};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::frontier::gamma_plus;
use crate::qkernel::{born_behavior, QuantumStrategy};
use crate::TSIRELSON;

/// Generator recorded in every batch.
pub const RNG_ALGORITHM: &str = "chacha20";

/// Assumptions under which the confidence statement holds.
pub const ASSUMPTIONS: &str = "iid,uniform-settings";

/// One CHSH round: settings `x, y ∈ {0,1}` and outcomes `a, b ∈ {−1,+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trial {
    pub x: u8,
    pub y: u8,
    pub a: i8,
    pub b: i8,
}

impl Trial {
    pub fn new(x: u8, y: u8, a: i8, b: i8) -> Result<Self> {
        if x > 1 || y > 1 {
            return Err(Error::InvalidTrials(format!("settings ({x}, {y}) must be 0 or 1")));
        }
        if a.abs() != 1 || b.abs() != 1 {
            return Err(Error::InvalidTrials(format!("outcomes ({a}, {b}) must be ±1")));
        }
        Ok(Self { x, y, a, b })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialBatch {
    pub trials: Vec<Trial>,
    pub seed: u64,
    pub stream: u64,
    pub rng: String,
    pub source: String,
}

impl TrialBatch {
    pub fn from_trials(trials: Vec<Trial>, source: impl Into<String>) -> Self {
        Self {
            trials,
            seed: 0,
            stream: 0,
            rng: "none".into(),
            source: source.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// Writes the `x,y,a,b` CSV format.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for t in &self.trials {
            w.serialize(t).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, source: impl Into<String>) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = r.headers().map_err(csv_error)?;
        if header != vec!["x", "y", "a", "b"] {
            return Err(Error::InvalidTrials(format!("expected header x,y,a,b, found {header:?}")));
        }
        let mut trials = Vec::new();
        for (i, row) in r.deserialize::<Trial>().enumerate() {
            let t = row.map_err(|e| Error::InvalidTrials(format!("row {}: {e}", i + 1)))?;
            trials.push(Trial::new(t.x, t.y, t.a, t.b).map_err(|e| Error::InvalidTrials(format!("row {}: {e}", i + 1)))?);
        }
        Ok(Self::from_trials(trials, source))
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::InvalidTrials(e.to_string())
}

/// Where simulated trials come from.
#[derive(Debug, Clone)]
pub enum TrialSource {
    Quantum(QuantumStrategy),
    Lhv(LhvModel),
    Behavior(Behavior),
}

impl TrialSource {
    fn behavior(&self) -> Result<Behavior> {
        let b = match self {
            TrialSource::Quantum(s) => born_behavior(s)?,
            TrialSource::Lhv(m) => lhv_behavior(m)?,
            TrialSource::Behavior(b) => b.clone(),
        };
        if b.inputs() != [2, 2] || b.outputs() != [2, 2] {
            return Err(Error::InvalidModel(format!(
                "trial source must be a bipartite binary behavior, got inputs {:?} outputs {:?}",
                b.inputs(),
                b.outputs()
            )));
        }
        Ok(b)
    }

    fn describe(&self) -> String {
        match self {
            TrialSource::Quantum(_) => "quantum".into(),
            TrialSource::Lhv(_) => "lhv".into(),
            TrialSource::Behavior(_) => "behavior".into(),
        }
    }
}

fn sample_batch(p: &Behavior, n: usize, seed: u64, stream: u64, source: String) -> TrialBatch {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let trials = (0..n)
        .map(|_| {
            let x: usize = rng.gen_range(0..2);
            let y: usize = rng.gen_range(0..2);
            let row = p.row(2 * x + y);
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut cell = row.len() - 1;
            for (c, &q) in row.iter().enumerate() {
                acc += q;
                if u < acc {
                    cell = c;
                    break;
                }
            }
            let sign = |bit: usize| if bit == 0 { 1 } else { -1 };
            Trial {
                x: x as u8,
                y: y as u8,
                a: sign(cell >> 1),
                b: sign(cell & 1),
            }
        })
        .collect();
    TrialBatch {
        trials,
        seed,
        stream,
        rng: RNG_ALGORITHM.into(),
        source,
    }
}

/// Draws `n` i.i.d. trials with uniform settings. Deterministic in `seed`.
pub fn simulate_trials(source: &TrialSource, n: usize, seed: u64) -> Result<TrialBatch> {
    simulate_trials_stream(source, n, seed, 0)
}

/// As [`simulate_trials`] on an independent generator stream, so many
/// batches can share one seed.
pub fn simulate_trials_stream(source: &TrialSource, n: usize, seed: u64, stream: u64) -> Result<TrialBatch> {
    if n == 0 {
        return Err(Error::InvalidTrials("need at least one trial".into()));
    }
    let p = source.behavior()?;
    Ok(sample_batch(&p, n, seed, stream, source.describe()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorStats {
    pub e_hat: [[f64; 2]; 2],
    pub n: [[u64; 2]; 2],
    pub n_min: u64,
    pub s_hat: f64,
}

/// Per-setting empirical correlators `Ê_xy`. An empty cell is an error.
pub fn estimate_correlators(batch: &TrialBatch) -> Result<CorrelatorStats> {
    let mut sum = [[0i64; 2]; 2];
    let mut n = [[0u64; 2]; 2];
    for t in &batch.trials {
        sum[t.x as usize][t.y as usize] += (t.a * t.b) as i64;
        n[t.x as usize][t.y as usize] += 1;
    }
    let mut e_hat = [[0.0; 2]; 2];
    for x in 0..2 {
        for y in 0..2 {
            if n[x][y] == 0 {
                return Err(Error::EmptyCell { x: x as u8, y: y as u8 });
            }
            e_hat[x][y] = sum[x][y] as f64 / n[x][y] as f64;
        }
    }
    let n_min = n.iter().flatten().copied().min().unwrap_or(0);
    let s_hat = e_hat[0][0] + e_hat[0][1] + e_hat[1][0] - e_hat[1][1];
    Ok(CorrelatorStats { e_hat, n, n_min, s_hat })
}

fn check_alpha(alpha: f64) -> Result<f64> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(alpha)
    } else {
        Err(Error::OutOfRange { what: "alpha", value: alpha, lo: 0.0, hi: 1.0 })
    }
}

fn check_count(n: u64) -> Result<u64> {
    if n >= 1 {
        Ok(n)
    } else {
        Err(Error::OutOfRange { what: "n_min", value: 0.0, lo: 1.0, hi: f64::INFINITY })
    }
}

/// Correlator-wise Hoeffding radius `4 √(2 ln(8/α) / N_min)`.
pub fn hoeffding_radius(n_min: u64, alpha: f64) -> Result<f64> {
    let n = check_count(n_min)? as f64;
    let alpha = check_alpha(alpha)?;
    Ok(4.0 * (2.0 * (8.0 / alpha).ln() / n).sqrt())
}

/// Single-trial radius `4 √(2 ln(1/α) / N)`.
pub fn single_trial_radius(n: u64, alpha: f64) -> Result<f64> {
    let n = check_count(n)? as f64;
    let alpha = check_alpha(alpha)?;
    Ok(4.0 * (2.0 * (1.0 / alpha).ln() / n).sqrt())
}

/// Clamps a score to the physical interval `[0, 2√2]`.
pub fn clip(s: f64) -> f64 {
    s.clamp(0.0, TSIRELSON)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    CorrelatorWise,
    SingleTrial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiniteDataCertificate {
    pub s_hat: f64,
    pub radius: f64,
    pub s_lcb: f64,
    pub s_cert: f64,
    pub gamma_lcb: f64,
    pub confidence: f64,
    pub alpha: f64,
    /// Samples per setting (correlator-wise) or total trials (single-trial).
    pub n_min: u64,
    pub estimator: Estimator,
}

impl FiniteDataCertificate {
    fn assemble(s_hat: f64, radius: f64, alpha: f64, n_min: u64, estimator: Estimator) -> Result<Self> {
        let s_lcb = s_hat - radius;
        let s_cert = clip(s_lcb);
        Ok(Self {
            s_hat,
            radius,
            s_lcb,
            s_cert,
            gamma_lcb: gamma_plus(s_cert)?,
            confidence: 1.0 - alpha,
            alpha,
            n_min,
            estimator,
        })
    }

    /// Certificate JSON with tool version and the assumption string.
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Emitted<'a> {
            #[serde(flatten)]
            cert: &'a FiniteDataCertificate,
            tool_version: &'static str,
            assumptions: &'static str,
        }
        Ok(serde_json::to_string_pretty(&Emitted {
            cert: self,
            tool_version: crate::VERSION,
            assumptions: ASSUMPTIONS,
        })?)
    }
}

/// Lower confidence bound from correlator statistics.
pub fn lower_confidence_bound(stats: &CorrelatorStats, alpha: f64) -> Result<FiniteDataCertificate> {
    lcb_from_estimate(stats.s_hat, stats.n_min, alpha)
}

/// Lower confidence bound from a reported `Ŝ` and `N_min`.
pub fn lcb_from_estimate(s_hat: f64, n_min: u64, alpha: f64) -> Result<FiniteDataCertificate> {
    let radius = hoeffding_radius(n_min, alpha)?;
    FiniteDataCertificate::assemble(s_hat, radius, alpha, n_min, Estimator::CorrelatorWise)
}

/// Lower confidence bound from the unbiased single-trial estimator
/// `Z = 4 (−1)^{xy} a b`, valid for uniform settings.
pub fn single_trial_lcb(batch: &TrialBatch, alpha: f64) -> Result<FiniteDataCertificate> {
    let n = batch.len() as u64;
    let radius = single_trial_radius(n, alpha)?;
    let total: f64 = batch
        .trials
        .iter()
        .map(|t| {
            let sign = if t.x & t.y == 1 { -1.0 } else { 1.0 };
            4.0 * sign * (t.a * t.b) as f64
        })
        .sum();
    FiniteDataCertificate::assemble(total / n as f64, radius, alpha, n, Estimator::SingleTrial)
}

/// Smallest `N_min` for which `Ŝ = s_true` gives `S_LCB > 2`.
pub fn samples_for_onset(s_true: f64, alpha: f64) -> Result<u64> {
    let alpha = check_alpha(alpha)?;
    if !(s_true > 2.0) {
        return Err(Error::OnsetUnreachable(s_true));
    }
    let n = 32.0 * (8.0 / alpha).ln() / ((s_true - 2.0) * (s_true - 2.0));
    let mut k = n.ceil() as u64;
    // The closed form can land one short of the strict inequality after rounding.
    while hoeffding_radius(k, alpha)? >= s_true - 2.0 {
        k += 1;
    }
    Ok(k.max(1))
}

/// Outcome of repeated simulate-and-certify runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub runs: usize,
    pub covered: usize,
    pub fraction: f64,
    pub mean_n_min: f64,
    /// Runs where `S_LCB ≤ S` but `Γ_LCB > Γ⁺(S)`; must be zero.
    pub gamma_violations: usize,
}

/// Simulates `runs` batches of `n_trials` on independent streams of `seed`
/// and counts how often the correlator-wise bound covers `true_s`.
pub fn coverage_experiment(
    source: &TrialSource,
    true_s: f64,
    n_trials: usize,
    runs: usize,
    alpha: f64,
    seed: u64,
    exec: Execution,
) -> Result<CoverageReport> {
    let p = source.behavior()?;
    let gamma_true = gamma_plus(clip(true_s))?;
    let outcomes: Vec<Result<(bool, bool, u64)>> = exec.map_indexed(runs, |i| {
        let batch = sample_batch(&p, n_trials, seed, i as u64, String::new());
        let cert = lower_confidence_bound(&estimate_correlators(&batch)?, alpha)?;
        let covered = cert.s_lcb <= true_s;
        let violation = covered && cert.gamma_lcb > gamma_true;
        Ok((covered, violation, cert.n_min))
    });
    let mut covered = 0;
    let mut gamma_violations = 0;
    let mut n_sum = 0u64;
    for o in outcomes {
        let (c, v, n) = o?;
        covered += c as usize;
        gamma_violations += v as usize;
        n_sum += n;
    }
    Ok(CoverageReport {
        runs,
        covered,
        fraction: covered as f64 / runs as f64,
        mean_n_min: n_sum as f64 / runs as f64,
        gamma_violations,
    })
}
