//! Moment-matrix relaxation for tilted CHSH between a referee-facing pair
//! `(A, B)` and a colluding pair `(A, C)`.
//!
//! Each party holds two binary observables (`X² = I`). Rows and columns of
//! the moment matrix are indexed by 22 words of length at most two; entry
//! `(u, v)` is the real part of `⟨u†v⟩`. Words that are adjoints of each
//! other share one real variable, which makes the matrix real symmetric by
//! construction and the relaxation an outer bound on the complex one.
//!
//! For a tilt `α ∈ [0, 2]` and threshold `s` the program is
//!
//! ```text
//!   maximize   I₁₃ = α⟨A0⟩ + ⟨A0C0⟩ + ⟨A0C1⟩ + ⟨A1C0⟩ − ⟨A1C1⟩
//!   subject to Γ ⪰ 0,  Γ_{I,I} = 1,  I₁₂ ≥ s
//! ```
//!
//! with `I₁₂` the same expression on `(A, B)`.

pub mod sdp;

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use sdp::{SdpProblem, SdpResult, SolverSettings, SolverStatus, SparseSym};

use crate::error::{check_range, Error, Result};
use crate::exec::Execution;
use crate::format_sig;
use crate::frontier::linspace;

/// Certification thresholds on the duality gap, the affine residual and the
/// smallest moment-matrix eigenvalue.
pub const CERT_GAP: f64 = 1e-6;
pub const CERT_RESIDUAL: f64 = 1e-5;
pub const CERT_MIN_EIG: f64 = -1e-7;
/// Slack allowed above the quantum maximum when assembling.
pub const ENDPOINT_EPS: f64 = 1e-9;
pub const DEFAULT_GRID_POINTS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Letter {
    party: u8,
    setting: u8,
}

impl Letter {
    /// `party` is 0, 1, 2 for A, B, C; `setting` is 0 or 1.
    pub fn new(party: u8, setting: u8) -> Result<Self> {
        if party > 2 || setting > 1 {
            return Err(Error::InvalidBehavior(format!("no letter for party {party}, setting {setting}")));
        }
        Ok(Self { party, setting })
    }

    const fn of(party: u8, setting: u8) -> Self {
        Self { party, setting }
    }

    pub fn party(self) -> u8 {
        self.party
    }

    pub fn setting(self) -> u8 {
        self.setting
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", ['A', 'B', 'C'][self.party as usize], self.setting)
    }
}

/// Product of letters; the empty word is the identity.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Word(Vec<Letter>);

impl Word {
    pub fn identity() -> Self {
        Self(Vec::new())
    }

    pub fn from_letters(letters: Vec<Letter>) -> Self {
        Self(letters)
    }

    pub fn letters(&self) -> &[Letter] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Reversed letter order (all letters are Hermitian).
    pub fn adjoint(&self) -> Self {
        Self(self.0.iter().rev().copied().collect())
    }

    pub fn concat(&self, other: &Word) -> Self {
        Self(self.0.iter().chain(&other.0).copied().collect())
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("I");
        }
        self.0.iter().try_for_each(|l| write!(f, "{l}"))
    }
}

impl FromStr for Word {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "I" {
            return Ok(Self::identity());
        }
        let chars: Vec<char> = s.chars().collect();
        if chars.is_empty() || chars.len() % 2 != 0 {
            return Err(Error::InvalidBehavior(format!("cannot parse word {s:?}")));
        }
        chars
            .chunks(2)
            .map(|c| {
                let party = match c[0] {
                    'A' => 0,
                    'B' => 1,
                    'C' => 2,
                    _ => return Err(Error::InvalidBehavior(format!("bad party in word {s:?}"))),
                };
                let setting = c[1].to_digit(10).ok_or_else(|| Error::InvalidBehavior(format!("bad setting in word {s:?}")))?;
                Letter::new(party, setting as u8)
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }
}

impl Serialize for Word {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Word {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Canonical {
    pub word: Word,
    /// Whether the key is the adjoint of the reduced word.
    pub adjoint_flipped: bool,
}

/// Stable sort by party, cancel adjacent equal letters within each party,
/// then key on the smaller of the word and its adjoint.
pub fn canonicalize(w: &Word) -> Canonical {
    let mut letters = w.0.clone();
    letters.sort_by_key(|l| l.party);
    let mut reduced: Vec<Letter> = Vec::with_capacity(letters.len());
    for l in letters {
        match reduced.last() {
            Some(top) if *top == l => {
                reduced.pop();
            }
            _ => reduced.push(l),
        }
    }
    let word = Word(reduced);
    let mut adj = word.adjoint().0;
    adj.sort_by_key(|l| l.party);
    let adj = Word(adj);
    if adj < word {
        Canonical { word: adj, adjoint_flipped: true }
    } else {
        Canonical { word, adjoint_flipped: false }
    }
}

/// The 22 row/column words: identity, six letters, the three same-party
/// products and the twelve cross-party products.
pub fn build_word_set() -> Vec<Word> {
    let l = Letter::of;
    let mut words = vec![Word::identity()];
    for p in 0..3 {
        for x in 0..2 {
            words.push(Word(vec![l(p, x)]));
        }
    }
    for p in 0..3 {
        words.push(Word(vec![l(p, 0), l(p, 1)]));
    }
    for (p, q) in [(0, 1), (0, 2), (1, 2)] {
        for x in 0..2 {
            for y in 0..2 {
                words.push(Word(vec![l(p, x), l(q, y)]));
            }
        }
    }
    words
}

/// Identity plus the six letters.
pub fn level1_word_set() -> Vec<Word> {
    build_word_set().into_iter().take(7).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentVariable {
    pub key: Word,
    /// `key = key†`, i.e. a genuine expectation of a Hermitian product.
    pub hermitian: bool,
}

/// Entry map of the moment matrix: `None` marks the constant identity
/// entries, `Some(k)` variable `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentStructure {
    words: Vec<Word>,
    entries: Vec<Option<usize>>,
    variables: Vec<MomentVariable>,
    index: HashMap<Word, usize>,
}

impl MomentStructure {
    pub fn new(words: Vec<Word>) -> Result<Self> {
        if words.first().is_none_or(|w| !w.is_empty()) {
            return Err(Error::InvalidBehavior("word list must start with the identity".into()));
        }
        let n = words.len();
        let mut entries = vec![None; n * n];
        let mut variables = Vec::new();
        let mut index = HashMap::new();
        for r in 0..n {
            for c in r..n {
                let key = canonicalize(&words[r].adjoint().concat(&words[c])).word;
                if key.is_empty() {
                    continue;
                }
                let id = *index.entry(key.clone()).or_insert_with(|| {
                    let mut adj = key.adjoint().0;
                    adj.sort_by_key(|l| l.party);
                    variables.push(MomentVariable { hermitian: Word(adj) == key, key: key.clone() });
                    variables.len() - 1
                });
                entries[r * n + c] = Some(id);
                entries[c * n + r] = Some(id);
            }
        }
        Ok(Self { words, entries, variables, index })
    }

    pub fn level2() -> Self {
        Self::new(build_word_set()).expect("shipped word set starts with the identity")
    }

    pub fn level1() -> Self {
        Self::new(level1_word_set()).expect("shipped word set starts with the identity")
    }

    pub fn size(&self) -> usize {
        self.words.len()
    }

    pub fn words(&self) -> &[Word] {
        &self.words
    }

    pub fn variables(&self) -> &[MomentVariable] {
        &self.variables
    }

    pub fn entry(&self, r: usize, c: usize) -> Option<usize> {
        self.entries[r * self.size() + c]
    }

    /// Variable holding `Re⟨w⟩`, if `w` occurs in the matrix.
    pub fn variable_of(&self, w: &Word) -> Option<usize> {
        self.index.get(&canonicalize(w).word).copied()
    }

    /// `Γ(y)`.
    pub fn moment_matrix(&self, y: &[f64]) -> DMatrix<f64> {
        let n = self.size();
        DMatrix::from_fn(n, n, |r, c| self.entry(r, c).map_or(1.0, |k| y[k]))
    }

    /// Coefficients of `α⟨A0⟩ + ⟨A0X0⟩ + ⟨A0X1⟩ + ⟨A1X0⟩ − ⟨A1X1⟩` with `X`
    /// the given party (1 for B, 2 for C).
    pub fn tilted_chsh(&self, alpha: f64, party: u8) -> Result<Vec<f64>> {
        let mut coef = vec![0.0; self.variables.len()];
        let l = Letter::of;
        let mut add = |w: Word, v: f64| -> Result<()> {
            let k = self
                .variable_of(&w)
                .ok_or_else(|| Error::Unsupported(format!("word {w} does not occur in the moment matrix")))?;
            coef[k] += v;
            Ok(())
        };
        add(Word(vec![l(0, 0)]), alpha)?;
        for (x, z, sign) in [(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, -1.0)] {
            add(Word(vec![l(0, x), l(party, z)]), sign)?;
        }
        Ok(coef)
    }
}

/// Quantum maximum `√(8 + 2α²)` of tilted CHSH.
pub fn quantum_max(alpha: f64) -> f64 {
    (8.0 + 2.0 * alpha * alpha).sqrt()
}

/// Local bound `2 + α`.
pub fn classical_max(alpha: f64) -> f64 {
    2.0 + alpha
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentProblem {
    structure: MomentStructure,
    alpha: f64,
    s: f64,
    objective: Vec<f64>,
    constraint: Vec<f64>,
}

/// Level-2 problem for tilt `alpha ∈ [0, 2]` and threshold
/// `s ≤ √(8+2α²) + 1e-9`.
pub fn assemble(alpha: f64, s: f64) -> Result<MomentProblem> {
    assemble_with(MomentStructure::level2(), alpha, s)
}

pub fn assemble_with(structure: MomentStructure, alpha: f64, s: f64) -> Result<MomentProblem> {
    check_range("alpha", alpha, 0.0, 2.0)?;
    check_range("s", s, f64::MIN, quantum_max(alpha) + ENDPOINT_EPS)?;
    let objective = structure.tilted_chsh(alpha, 2)?;
    let constraint = structure.tilted_chsh(alpha, 1)?;
    Ok(MomentProblem { structure, alpha, s, objective, constraint })
}

impl MomentProblem {
    pub fn structure(&self) -> &MomentStructure {
        &self.structure
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn constraint(&self) -> &[f64] {
        &self.constraint
    }

    /// Block-diagonal LMI: the moment matrix followed by the 1×1 block
    /// `I₁₂(y) − s`.
    pub fn to_sdp(&self) -> SdpProblem {
        let n = self.structure.size();
        let mut f0 = DMatrix::zeros(n + 1, n + 1);
        let mut f = vec![SparseSym::new(); self.structure.variables.len()];
        for r in 0..n {
            for c in r..n {
                match self.structure.entry(r, c) {
                    None => {
                        f0[(r, c)] = 1.0;
                        f0[(c, r)] = 1.0;
                    }
                    Some(k) => f[k].add(r, c, 1.0),
                }
            }
        }
        f0[(n, n)] = -self.s;
        for (fk, a) in f.iter_mut().zip(&self.constraint) {
            if *a != 0.0 {
                fk.add(n, n, *a);
            }
        }
        SdpProblem { c: self.objective.clone(), f0, f }
    }

    /// JSON description of words, variables, entry map and constraint blocks.
    pub fn dump(&self) -> ProblemDump {
        let n = self.structure.size();
        ProblemDump {
            alpha: self.alpha,
            s: self.s,
            words: self.structure.words.clone(),
            variables: self.structure.variables.clone(),
            entry_map: (0..n).map(|r| (0..n).map(|c| self.structure.entry(r, c).map_or(-1, |k| k as i64)).collect()).collect(),
            objective: self.objective.clone(),
            authorized_constraint: AffineConstraint { coefficients: self.constraint.clone(), sense: ">=".into(), rhs: self.s },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineConstraint {
    pub coefficients: Vec<f64>,
    pub sense: String,
    pub rhs: f64,
}

/// Entry map uses `-1` for the constant identity entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemDump {
    pub alpha: f64,
    pub s: f64,
    pub words: Vec<Word>,
    pub variables: Vec<MomentVariable>,
    pub entry_map: Vec<Vec<i64>>,
    pub objective: Vec<f64>,
    pub authorized_constraint: AffineConstraint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSolution {
    /// Relaxation value `I₁₃(y)` at the returned moments.
    pub primal: f64,
    /// Upper bound from the dual iterate; non-finite when unavailable.
    pub dual: f64,
    pub gap: f64,
    pub max_residual: f64,
    pub min_eig: f64,
    pub status: SolverStatus,
    pub certified: bool,
    pub iterations: usize,
    #[serde(skip)]
    pub moments: Vec<f64>,
}

/// Solver status optimal, dual bound present, gap below 1e-6, affine
/// residual below 1e-5 and smallest moment-matrix eigenvalue at least −1e-7.
pub fn certify_point(sol: &MomentSolution) -> bool {
    sol.status == SolverStatus::Optimal
        && sol.dual.is_finite()
        && sol.gap < CERT_GAP
        && sol.max_residual < CERT_RESIDUAL
        && sol.min_eig >= CERT_MIN_EIG
}

pub fn sdp_solve(prob: &MomentProblem, settings: &SolverSettings) -> Result<MomentSolution> {
    let sdp = prob.to_sdp();
    let r = sdp::solve(&sdp, settings)?;
    let gamma = prob.structure.moment_matrix(&r.y);
    let min_eig = gamma.symmetric_eigenvalues().min();
    let i12: f64 = prob.constraint.iter().zip(&r.y).map(|(a, y)| a * y).sum();
    // Moment-side affine constraints other than the threshold hold exactly by
    // construction; the dual side contributes its equality residual.
    let max_residual = (prob.s - i12).max(0.0).max(r.dual_residual);
    let mut sol = MomentSolution {
        primal: r.objective,
        dual: r.bound,
        gap: (r.objective - r.bound).abs(),
        max_residual,
        min_eig,
        status: r.status,
        certified: false,
        iterations: r.iterations,
        moments: r.y,
    };
    sol.certified = certify_point(&sol);
    Ok(sol)
}

/// One row of a scan in the tabular diagnostic schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub alpha: f64,
    pub s: f64,
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub max_residual: f64,
    pub min_eig: f64,
    pub status: SolverStatus,
    pub certified: bool,
}

impl ScanRow {
    fn from_solution(alpha: f64, s: f64, sol: &MomentSolution) -> Self {
        Self {
            alpha,
            s,
            primal: sol.primal,
            dual: sol.dual,
            gap: sol.gap,
            max_residual: sol.max_residual,
            min_eig: sol.min_eig,
            status: sol.status,
            certified: sol.certified,
        }
    }
}

/// Threshold grid from `2 + α` to `√(8+2α²)` inclusive.
pub fn threshold_grid(alpha: f64, grid_points: usize) -> Result<Vec<f64>> {
    check_range("alpha", alpha, 0.0, 2.0)?;
    if grid_points < 2 {
        return Err(Error::InvalidBehavior(format!("grid needs at least 2 points, got {grid_points}")));
    }
    Ok(linspace(classical_max(alpha), quantum_max(alpha), grid_points))
}

/// Solves every `(α, s)` pair; points are independent.
pub fn solve_points(points: &[(f64, f64)], settings: &SolverSettings, exec: Execution) -> Result<Vec<ScanRow>> {
    exec.map(points, |&(alpha, s)| {
        let sol = sdp_solve(&assemble(alpha, s)?, settings)?;
        Ok(ScanRow::from_solution(alpha, s, &sol))
    })
    .into_iter()
    .collect()
}

pub fn scan(alphas: &[f64], grid_points: usize, settings: &SolverSettings, exec: Execution) -> Result<Vec<ScanRow>> {
    let mut points = Vec::new();
    for &alpha in alphas {
        points.extend(threshold_grid(alpha, grid_points)?.into_iter().map(|s| (alpha, s)));
    }
    solve_points(&points, settings, exec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alpha0Sanity {
    pub max_dev: f64,
    pub mean_dev: f64,
    pub certified_mask: Vec<bool>,
    pub rows: Vec<ScanRow>,
}

/// Deviation of certified untilted bounds from `√(8 − s²)`.
pub fn alpha0_sanity(grid_points: usize, settings: &SolverSettings, exec: Execution) -> Result<Alpha0Sanity> {
    Ok(alpha0_sanity_from_rows(scan(&[0.0], grid_points, settings, exec)?))
}

/// As [`alpha0_sanity`] on rows that were already solved at `α = 0`.
pub fn alpha0_sanity_from_rows(rows: Vec<ScanRow>) -> Alpha0Sanity {
    let devs: Vec<f64> = rows
        .iter()
        .filter(|r| r.certified)
        .map(|r| (r.primal - crate::frontier::s13_max(r.s.min(crate::TSIRELSON)).unwrap_or(f64::NAN)).abs())
        .collect();
    let max_dev = devs.iter().fold(0.0f64, |a, d| a.max(*d));
    let mean_dev = if devs.is_empty() { f64::NAN } else { devs.iter().sum::<f64>() / devs.len() as f64 };
    Alpha0Sanity { max_dev, mean_dev, certified_mask: rows.iter().map(|r| r.certified).collect(), rows }
}

pub const SCAN_HEADER: [&str; 9] = ["alpha", "s", "primal", "dual", "gap", "max_residual", "min_eig", "status", "certified"];

/// CSV with 9 significant digits per number.
pub fn write_scan_csv<W: Write>(rows: &[ScanRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SCAN_HEADER).map_err(csv_err)?;
    for r in rows {
        let nums = [r.alpha, r.s, r.primal, r.dual, r.gap, r.max_residual, r.min_eig].map(|v| format_sig(v, 9));
        let mut rec: Vec<String> = nums.to_vec();
        rec.push(r.status.to_string());
        rec.push(if r.certified { "yes" } else { "no" }.to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scan_csv<R: Read>(input: R) -> Result<Vec<ScanRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().ne(SCAN_HEADER) {
        return Err(Error::InvalidTrials(format!("unexpected scan header {:?}", header)));
    }
    rdr.records()
        .map(|rec| {
            let rec = rec.map_err(csv_err)?;
            let num = |i: usize| -> Result<f64> {
                rec[i].parse().map_err(|_| Error::InvalidTrials(format!("bad number {:?} in column {}", &rec[i], SCAN_HEADER[i])))
            };
            Ok(ScanRow {
                alpha: num(0)?,
                s: num(1)?,
                primal: num(2)?,
                dual: num(3)?,
                gap: num(4)?,
                max_residual: num(5)?,
                min_eig: num(6)?,
                status: rec[7].parse()?,
                certified: match &rec[8] {
                    "yes" => true,
                    "no" => false,
                    other => return Err(Error::InvalidTrials(format!("bad certified flag {other:?}"))),
                },
            })
        })
        .collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidTrials(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn w(s: &str) -> Word {
        s.parse().unwrap()
    }

    #[test]
    fn word_set_shape() {
        let words = build_word_set();
        assert_eq!(words.len(), 22);
        let names: Vec<String> = words.iter().map(|x| x.to_string()).collect();
        assert_eq!(&names[..10], ["I", "A0", "A1", "B0", "B1", "C0", "C1", "A0A1", "B0B1", "C0C1"]);
        assert!(names.contains(&"A0A1".to_string()));
        assert!(!names.contains(&"A1A0".to_string()));
        for ac in ["A0C0", "A0C1", "A1C0", "A1C1"] {
            assert!(names.contains(&ac.to_string()));
        }
    }

    #[test]
    fn canonicalization_examples() {
        assert_eq!(canonicalize(&w("B0A0")).word, w("A0B0"));
        assert_eq!(canonicalize(&w("A0A0")).word, Word::identity());
        let c = canonicalize(&w("A1A0"));
        assert_eq!(c.word, w("A0A1"));
        assert!(c.adjoint_flipped);
        assert_eq!(canonicalize(&w("A1B0A1")).word, w("B0"));
        // Same-party order is kept: B1A0B0 → A0B1B0 → adjoint key A0B0B1.
        let c = canonicalize(&w("B1A0B0"));
        assert_eq!(c.word, w("A0B0B1"));
        assert!(c.adjoint_flipped);
    }

    #[test]
    fn entry_map_properties() {
        let m = MomentStructure::level2();
        assert_eq!(m.size(), 22);
        assert_eq!(m.entry(0, 0), None);
        for r in 0..22 {
            // Every diagonal entry reduces to the identity.
            assert_eq!(m.entry(r, r), None, "diagonal {}", m.words()[r]);
            for c in 0..22 {
                assert_eq!(m.entry(r, c), m.entry(c, r));
            }
        }
        let a0 = m.words().iter().position(|x| *x == w("A0")).unwrap();
        let b0 = m.words().iter().position(|x| *x == w("B0")).unwrap();
        assert_eq!(m.entry(a0, b0), m.variable_of(&w("A0B0")));
        assert!(m.variables().iter().any(|v| v.key == w("A0A1") && !v.hermitian));
        assert!(m.variables().iter().any(|v| v.key == w("A0B0") && v.hermitian));
    }

    #[test]
    fn objective_touches_only_correlators() {
        let p = assemble(0.7, 2.5).unwrap();
        let m = p.structure();
        let allowed: Vec<usize> = ["A0", "A0B0", "A0B1", "A1B0", "A1B1", "A0C0", "A0C1", "A1C0", "A1C1"]
            .iter()
            .map(|s| m.variable_of(&w(s)).unwrap())
            .collect();
        for (k, (o, c)) in p.objective().iter().zip(p.constraint()).enumerate() {
            if *o != 0.0 || *c != 0.0 {
                assert!(allowed.contains(&k), "{}", m.variables()[k].key);
            }
        }
        let p0 = assemble(0.0, 2.0).unwrap();
        assert_eq!(p0.objective()[m.variable_of(&w("A0")).unwrap()], 0.0);
    }

    #[test]
    fn assemble_range_checks() {
        assert!(assemble(-0.1, 2.0).is_err());
        assert!(assemble(2.1, 2.0).is_err());
        assert!(assemble(0.0, 2.9).is_err());
        assert!(assemble(1.0, 10f64.sqrt()).is_ok());
    }

    #[test]
    fn untilted_interior_points_match_the_circle() {
        for s in [2.0, 2.3, 2.6, 2.8] {
            let sol = sdp_solve(&assemble(0.0, s).unwrap(), &SolverSettings::default()).unwrap();
            assert!(sol.certified, "s = {s}: {sol:?}");
            assert_abs_diff_eq!(sol.primal, (8.0 - s * s).sqrt(), epsilon = 1e-6);
        }
    }

    #[test]
    fn level1_is_looser_at_interior_points() {
        for s in [2.3, 2.6] {
            let l1 = sdp_solve(&assemble_with(MomentStructure::level1(), 0.0, s).unwrap(), &SolverSettings::default()).unwrap();
            let l2 = sdp_solve(&assemble(0.0, s).unwrap(), &SolverSettings::default()).unwrap();
            assert!(l1.certified && l2.certified);
            assert!(l1.primal > l2.primal + 1e-3, "level 1 {} vs level 2 {}", l1.primal, l2.primal);
        }
    }

    #[test]
    fn b_c_relabelling_swaps_scores() {
        let p = assemble(0.5, 2.7).unwrap();
        let m = p.structure();
        let sol = sdp_solve(&p, &SolverSettings::default()).unwrap();
        let swap = |word: &Word| {
            Word::from_letters(
                word.letters()
                    .iter()
                    .map(|l| Letter::of(match l.party() { 1 => 2, 2 => 1, q => q }, l.setting()))
                    .collect(),
            )
        };
        let y2: Vec<f64> = m.variables().iter().map(|v| sol.moments[m.variable_of(&swap(&v.key)).unwrap()]).collect();
        let dot = |a: &[f64], y: &[f64]| a.iter().zip(y).map(|(a, y)| a * y).sum::<f64>();
        assert_abs_diff_eq!(dot(p.constraint(), &y2), dot(p.objective(), &sol.moments), epsilon = 1e-12);
        assert_abs_diff_eq!(dot(p.objective(), &y2), dot(p.constraint(), &sol.moments), epsilon = 1e-12);
        assert!(m.moment_matrix(&y2).symmetric_eigenvalues().min() > -1e-7);
    }

    #[test]
    fn certification_rule() {
        let good = MomentSolution {
            primal: 1.0,
            dual: 1.0,
            gap: 1e-9,
            max_residual: 1e-9,
            min_eig: 0.0,
            status: SolverStatus::Optimal,
            certified: false,
            iterations: 10,
            moments: vec![],
        };
        assert!(certify_point(&good));
        assert!(!certify_point(&MomentSolution { min_eig: -1e-6, ..good.clone() }));
        assert!(!certify_point(&MomentSolution { gap: 1.7e-4, ..good.clone() }));
        assert!(!certify_point(&MomentSolution { status: SolverStatus::OptimalInaccurate, ..good.clone() }));
        assert!(!certify_point(&MomentSolution { dual: f64::NAN, ..good.clone() }));
        assert!(!certify_point(&MomentSolution { max_residual: 2e-5, ..good }));
    }

    #[test]
    fn csv_and_dump_round_trip() {
        let rows = solve_points(&[(0.0, 2.0), (1.0, 3.05)], &SolverSettings::default(), Execution::Sequential).unwrap();
        let mut buf = Vec::new();
        write_scan_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("alpha,s,primal,dual,gap,max_residual,min_eig,status,certified\n"));
        let back = read_scan_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in rows.iter().zip(&back) {
            assert!((a.primal - b.primal).abs() <= 1e-8 * a.primal.abs().max(1.0));
            assert_eq!(a.status, b.status);
            assert_eq!(a.certified, b.certified);
        }
        let dump = serde_json::to_value(assemble(0.5, 2.6).unwrap().dump()).unwrap();
        assert_eq!(dump["words"].as_array().unwrap().len(), 22);
        assert_eq!(dump["entry_map"][0][0], -1);
        assert_eq!(dump["words"][7], "A0A1");
    }

    proptest! {
        #[test]
        fn canonicalization_is_idempotent(letters in prop::collection::vec((0u8..3, 0u8..2), 0..6)) {
            let word = Word::from_letters(letters.into_iter().map(|(p, s)| Letter::of(p, s)).collect());
            let once = canonicalize(&word).word;
            prop_assert_eq!(canonicalize(&once).word, once.clone());
            prop_assert_eq!(canonicalize(&word.adjoint()).word, once);
        }
    }
}
