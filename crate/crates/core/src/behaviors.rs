//! Finite-alphabet conditional behaviors `P(x₁..x_k | t₁..t_k)`.
//!
//! Tables are dense and row-major: one row per joint input, one column per
//! joint output. Joint indices are mixed-radix and big-endian in party order
//! (party 0 is the most significant digit).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-12;
const MARGINAL_TOL: f64 = 1e-9;

pub(crate) fn encode(digits: &[usize], radices: &[usize]) -> usize {
    digits.iter().zip(radices).fold(0, |acc, (&d, &r)| acc * r + d)
}

pub(crate) fn decode(mut index: usize, radices: &[usize]) -> Vec<usize> {
    let mut digits = vec![0; radices.len()];
    for (d, &r) in digits.iter_mut().zip(radices).rev() {
        *d = index % r;
        index /= r;
    }
    digits
}

fn product(radices: &[usize]) -> usize {
    radices.iter().product()
}

/// Conditional probability table over a finite multi-party scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BehaviorJson", into = "BehaviorJson")]
pub struct Behavior {
    inputs: Vec<usize>,
    outputs: Vec<usize>,
    table: Vec<f64>,
}

/// Wire form: `{parties, inputs, outputs, table}` with one table row per
/// joint input.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct BehaviorJson {
    parties: usize,
    inputs: Vec<usize>,
    outputs: Vec<usize>,
    table: Vec<Vec<f64>>,
}

impl TryFrom<BehaviorJson> for Behavior {
    type Error = Error;

    fn try_from(j: BehaviorJson) -> Result<Self> {
        if j.parties != j.inputs.len() {
            return Err(Error::InvalidBehavior(format!(
                "parties = {} but {} input alphabets given",
                j.parties,
                j.inputs.len()
            )));
        }
        let cols = product(&j.outputs);
        if j.table.iter().any(|row| row.len() != cols) {
            return Err(Error::InvalidBehavior(format!("every row must have {cols} entries")));
        }
        Behavior::new(j.inputs, j.outputs, j.table.concat())
    }
}

impl From<Behavior> for BehaviorJson {
    fn from(b: Behavior) -> Self {
        let cols = b.n_joint_outputs();
        BehaviorJson {
            parties: b.n_parties(),
            table: b.table.chunks(cols).map(<[f64]>::to_vec).collect(),
            inputs: b.inputs,
            outputs: b.outputs,
        }
    }
}

impl Behavior {
    pub fn new(inputs: Vec<usize>, outputs: Vec<usize>, table: Vec<f64>) -> Result<Self> {
        if inputs.is_empty() || inputs.len() != outputs.len() {
            return Err(Error::InvalidBehavior(format!(
                "{} input alphabets vs {} output alphabets",
                inputs.len(),
                outputs.len()
            )));
        }
        if inputs.iter().chain(&outputs).any(|&n| n == 0) {
            return Err(Error::InvalidBehavior("empty alphabet".into()));
        }
        let rows = product(&inputs);
        let cols = product(&outputs);
        if table.len() != rows * cols {
            return Err(Error::InvalidBehavior(format!(
                "table has {} entries, expected {}",
                table.len(),
                rows * cols
            )));
        }
        if let Some(p) = table.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::InvalidBehavior(format!("entry {p} is not a probability")));
        }
        for (r, row) in table.chunks(cols).enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidBehavior(format!("row {r} sums to {s}")));
            }
        }
        Ok(Self { inputs, outputs, table })
    }

    /// Behavior with every output independent and uniform.
    pub fn uniform(inputs: Vec<usize>, outputs: Vec<usize>) -> Result<Self> {
        let rows = product(&inputs);
        let cols = product(&outputs);
        Self::new(inputs, outputs, vec![1.0 / cols as f64; rows * cols])
    }

    /// Builds a table from a closure `(t, x) ↦ P(x|t)`.
    pub fn from_fn(inputs: Vec<usize>, outputs: Vec<usize>, f: impl Fn(&[usize], &[usize]) -> f64) -> Result<Self> {
        let rows = product(&inputs);
        let cols = product(&outputs);
        let mut table = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let t = decode(r, &inputs);
            for c in 0..cols {
                table.push(f(&t, &decode(c, &outputs)));
            }
        }
        Self::new(inputs, outputs, table)
    }

    pub fn n_parties(&self) -> usize {
        self.inputs.len()
    }

    pub fn inputs(&self) -> &[usize] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[usize] {
        &self.outputs
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn n_joint_inputs(&self) -> usize {
        product(&self.inputs)
    }

    pub fn n_joint_outputs(&self) -> usize {
        product(&self.outputs)
    }

    pub fn row(&self, joint_input: usize) -> &[f64] {
        let cols = self.n_joint_outputs();
        &self.table[joint_input * cols..(joint_input + 1) * cols]
    }

    pub fn prob(&self, t: &[usize], x: &[usize]) -> f64 {
        let r = encode(t, &self.inputs);
        let c = encode(x, &self.outputs);
        self.table[r * self.n_joint_outputs() + c]
    }

    fn same_alphabets(&self, other: &Behavior) -> Result<()> {
        if self.inputs != other.inputs || self.outputs != other.outputs {
            return Err(Error::AlphabetMismatch(format!(
                "inputs {:?}/{:?}, outputs {:?}/{:?}",
                self.inputs, other.inputs, self.outputs, other.outputs
            )));
        }
        Ok(())
    }

    /// Marginal on `parties` together with the largest discrepancy seen across
    /// choices of the dropped parties' inputs.
    fn marginal_with_residual(&self, parties: &[usize]) -> Result<(Behavior, f64)> {
        let n = self.n_parties();
        if parties.is_empty() || parties.windows(2).any(|w| w[0] >= w[1]) || parties.iter().any(|&p| p >= n) {
            return Err(Error::InvalidBehavior(format!("bad party subset {parties:?}")));
        }
        let dropped: Vec<usize> = (0..n).filter(|p| !parties.contains(p)).collect();
        let kin: Vec<usize> = parties.iter().map(|&p| self.inputs[p]).collect();
        let kout: Vec<usize> = parties.iter().map(|&p| self.outputs[p]).collect();
        let din: Vec<usize> = dropped.iter().map(|&p| self.inputs[p]).collect();
        let dout: Vec<usize> = dropped.iter().map(|&p| self.outputs[p]).collect();
        let (nki, nko, ndi, ndo) = (product(&kin), product(&kout), product(&din), product(&dout));

        let mut t = vec![0; n];
        let mut x = vec![0; n];
        let mut table = vec![0.0; nki * nko];
        let mut residual: f64 = 0.0;
        for ki in 0..nki {
            for (p, d) in parties.iter().zip(decode(ki, &kin)) {
                t[*p] = d;
            }
            for ko in 0..nko {
                for (p, d) in parties.iter().zip(decode(ko, &kout)) {
                    x[*p] = d;
                }
                for di in 0..ndi {
                    for (p, d) in dropped.iter().zip(decode(di, &din)) {
                        t[*p] = d;
                    }
                    let mut s = 0.0;
                    for dx in 0..ndo {
                        for (p, d) in dropped.iter().zip(decode(dx, &dout)) {
                            x[*p] = d;
                        }
                        s += self.prob(&t, &x);
                    }
                    if di == 0 {
                        table[ki * nko + ko] = s;
                    } else {
                        residual = residual.max((s - table[ki * nko + ko]).abs());
                    }
                }
            }
        }
        Ok((Behavior { inputs: kin, outputs: kout, table }, residual))
    }

    /// Marginal on the listed parties (ascending). Fails when the dropped
    /// parties' inputs influence the result by more than 1e-9.
    pub fn marginal(&self, parties: &[usize]) -> Result<Behavior> {
        let (m, residual) = self.marginal_with_residual(parties)?;
        if residual > MARGINAL_TOL {
            return Err(Error::Signalling { residual });
        }
        Ok(m)
    }

    pub fn check_no_signalling(&self, tol: f64) -> NoSignallingReport {
        let n = self.n_parties();
        let mut max_residual: f64 = 0.0;
        for mask in 1..(1usize << n) - 1 {
            let subset: Vec<usize> = (0..n).filter(|p| mask >> p & 1 == 1).collect();
            let (_, r) = self.marginal_with_residual(&subset).expect("subset is valid");
            max_residual = max_residual.max(r);
        }
        NoSignallingReport { max_residual, pass: max_residual <= tol }
    }

    /// Convex combination `Σ wᵢ Pᵢ` of behaviors on identical alphabets.
    pub fn mixture(parts: &[(f64, &Behavior)]) -> Result<Behavior> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidBehavior("empty mixture".into()))?
            .1;
        let mut table = vec![0.0; first.table.len()];
        for (w, b) in parts {
            first.same_alphabets(b)?;
            for (acc, p) in table.iter_mut().zip(&b.table) {
                *acc += w * p;
            }
        }
        Behavior::new(first.inputs.clone(), first.outputs.clone(), table)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoSignallingReport {
    pub max_residual: f64,
    pub pass: bool,
}

/// Reads a (1,3) marginal as a (1,2) behavior. The colluder's alphabets must
/// equal party 2's.
pub fn relabel_13_to_12(p13: &Behavior, party2_inputs: usize, party2_outputs: usize) -> Result<Behavior> {
    if p13.n_parties() != 2 {
        return Err(Error::AlphabetMismatch(format!(
            "expected a bipartite (1,3) behavior, got {} parties",
            p13.n_parties()
        )));
    }
    if p13.inputs[1] != party2_inputs || p13.outputs[1] != party2_outputs {
        return Err(Error::AlphabetMismatch(format!(
            "colluder alphabet {}x{} differs from party 2's {}x{}",
            p13.inputs[1], p13.outputs[1], party2_inputs, party2_outputs
        )));
    }
    Ok(p13.clone())
}

/// Uniform distribution over `n` joint inputs.
pub fn uniform_inputs(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

fn check_pi(pi: &[f64], rows: usize) -> Result<()> {
    if pi.len() != rows {
        return Err(Error::AlphabetMismatch(format!("input distribution has {} weights for {rows} inputs", pi.len())));
    }
    let s: f64 = pi.iter().sum();
    if pi.iter().any(|w| !(*w >= 0.0)) || (s - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::InvalidBehavior(format!("input distribution sums to {s}")));
    }
    Ok(())
}

/// `Σ_t π(t) · ½ Σ_x |P(x|t) − Q(x|t)|`.
pub fn tv_distance(p: &Behavior, q: &Behavior, pi: &[f64]) -> Result<f64> {
    p.same_alphabets(q)?;
    check_pi(pi, p.n_joint_inputs())?;
    let cols = p.n_joint_outputs();
    Ok(pi
        .iter()
        .enumerate()
        .map(|(r, w)| {
            let row: f64 = (0..cols).map(|c| (p.table[r * cols + c] - q.table[r * cols + c]).abs()).sum();
            w * 0.5 * row
        })
        .sum())
}

/// Scoring kernel `h(x, t) ∈ [0, 1]` with an input distribution `π`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameKernel {
    inputs: Vec<usize>,
    outputs: Vec<usize>,
    values: Vec<f64>,
    pi: Vec<f64>,
}

impl GameKernel {
    /// `values` uses the behavior table layout; `π` defaults to uniform.
    pub fn new(inputs: Vec<usize>, outputs: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let rows = product(&inputs);
        let cols = product(&outputs);
        if values.len() != rows * cols {
            return Err(Error::AlphabetMismatch(format!("kernel has {} values, expected {}", values.len(), rows * cols)));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
            return Err(Error::InvalidBehavior(format!("kernel value {v} outside [0, 1]")));
        }
        Ok(Self { inputs, outputs, values, pi: uniform_inputs(rows) })
    }

    pub fn from_predicate(inputs: Vec<usize>, outputs: Vec<usize>, win: impl Fn(&[usize], &[usize]) -> bool) -> Result<Self> {
        let rows = product(&inputs);
        let cols = product(&outputs);
        let mut values = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let t = decode(r, &inputs);
            for c in 0..cols {
                values.push(if win(&t, &decode(c, &outputs)) { 1.0 } else { 0.0 });
            }
        }
        Self::new(inputs, outputs, values)
    }

    /// CHSH predicate `x₁ ⊕ x₂ = t₁ t₂` with uniform inputs.
    pub fn chsh() -> Self {
        Self::from_predicate(vec![2, 2], vec![2, 2], |t, x| (x[0] ^ x[1]) == (t[0] & t[1])).expect("binary CHSH kernel")
    }

    pub fn with_pi(mut self, pi: Vec<f64>) -> Result<Self> {
        check_pi(&pi, product(&self.inputs))?;
        self.pi = pi;
        Ok(self)
    }

    pub fn inputs(&self) -> &[usize] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[usize] {
        &self.outputs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }
}

/// `Σ_t π(t) Σ_x h(x,t) P(x|t)`.
pub fn game_score(p: &Behavior, g: &GameKernel) -> Result<f64> {
    if p.inputs != g.inputs || p.outputs != g.outputs {
        return Err(Error::AlphabetMismatch(format!(
            "behavior {:?}/{:?} vs kernel {:?}/{:?}",
            p.inputs, p.outputs, g.inputs, g.outputs
        )));
    }
    let cols = p.n_joint_outputs();
    Ok(g.pi
        .iter()
        .enumerate()
        .map(|(r, w)| {
            let row: f64 = (0..cols).map(|c| g.values[r * cols + c] * p.table[r * cols + c]).sum();
            w * row
        })
        .sum())
}

/// One party's response rule `p(x | t, λ)`, stored `[λ][t][x]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseTable {
    n_hidden: usize,
    inputs: usize,
    outputs: usize,
    probs: Vec<f64>,
}

impl ResponseTable {
    pub fn new(n_hidden: usize, inputs: usize, outputs: usize, probs: Vec<f64>) -> Result<Self> {
        if n_hidden == 0 || inputs == 0 || outputs == 0 {
            return Err(Error::InvalidModel("empty response alphabet".into()));
        }
        if probs.len() != n_hidden * inputs * outputs {
            return Err(Error::InvalidModel(format!(
                "response table has {} entries, expected {}",
                probs.len(),
                n_hidden * inputs * outputs
            )));
        }
        if probs.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(Error::InvalidModel("negative response probability".into()));
        }
        for row in probs.chunks(outputs) {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidModel(format!("response row sums to {s}")));
            }
        }
        Ok(Self { n_hidden, inputs, outputs, probs })
    }

    /// Deterministic rule: `functions[λ][t]` is the output.
    pub fn deterministic(outputs: usize, functions: &[Vec<usize>]) -> Result<Self> {
        let inputs = functions.first().map_or(0, Vec::len);
        let mut probs = Vec::with_capacity(functions.len() * inputs * outputs);
        for f in functions {
            if f.len() != inputs || f.iter().any(|&x| x >= outputs) {
                return Err(Error::InvalidModel("malformed deterministic rule".into()));
            }
            for &x in f {
                probs.extend((0..outputs).map(|o| if o == x { 1.0 } else { 0.0 }));
            }
        }
        Self::new(functions.len(), inputs, outputs, probs)
    }

    pub fn uniform(n_hidden: usize, inputs: usize, outputs: usize) -> Self {
        Self::new(n_hidden, inputs, outputs, vec![1.0 / outputs as f64; n_hidden * inputs * outputs]).expect("uniform rows")
    }

    pub fn n_hidden(&self) -> usize {
        self.n_hidden
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn prob(&self, lambda: usize, t: usize, x: usize) -> f64 {
        self.probs[(lambda * self.inputs + t) * self.outputs + x]
    }
}

/// Classical mediator: a shared seed `λ ~ p(λ)` and local response rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LhvModel {
    weights: Vec<f64>,
    responses: Vec<ResponseTable>,
}

impl LhvModel {
    pub fn new(weights: Vec<f64>, responses: Vec<ResponseTable>) -> Result<Self> {
        let s: f64 = weights.iter().sum();
        if weights.is_empty() || weights.iter().any(|w| !(*w >= 0.0)) || (s - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidModel(format!("seed weights sum to {s}")));
        }
        if responses.is_empty() {
            return Err(Error::InvalidModel("no parties".into()));
        }
        if let Some(r) = responses.iter().find(|r| r.n_hidden != weights.len()) {
            return Err(Error::InvalidModel(format!(
                "response table over {} seeds, model has {}",
                r.n_hidden,
                weights.len()
            )));
        }
        Ok(Self { weights, responses })
    }

    /// Both players always answer 0: wins CHSH on three of four inputs.
    pub fn best_chsh() -> Self {
        let rule = ResponseTable::deterministic(2, &[vec![0, 0]]).expect("constant rule");
        Self::new(vec![1.0], vec![rule.clone(), rule]).expect("valid model")
    }

    /// Each player outputs a fresh uniform bit.
    pub fn uniform_output(n_parties: usize) -> Self {
        Self::new(vec![1.0], vec![ResponseTable::uniform(1, 2, 2); n_parties]).expect("valid model")
    }

    /// Random binary-alphabet model over `n_hidden` seeds with stochastic
    /// response rules.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n_parties: usize, n_hidden: usize) -> Self {
        let weights = random_simplex(rng, n_hidden);
        let responses = (0..n_parties)
            .map(|_| {
                let mut probs = Vec::with_capacity(n_hidden * 4);
                for _ in 0..n_hidden * 2 {
                    let p: f64 = rng.gen();
                    probs.extend([p, 1.0 - p]);
                }
                ResponseTable::new(n_hidden, 2, 2, probs).expect("valid rows")
            })
            .collect();
        Self::new(weights, responses).expect("valid model")
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn responses(&self) -> &[ResponseTable] {
        &self.responses
    }

    pub fn n_parties(&self) -> usize {
        self.responses.len()
    }
}

/// Uniformly random point of the probability simplex.
pub fn random_simplex<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    w
}

fn seeded_behavior(weights: &[f64], rules: &[&ResponseTable]) -> Result<Behavior> {
    let inputs: Vec<usize> = rules.iter().map(|r| r.inputs).collect();
    let outputs: Vec<usize> = rules.iter().map(|r| r.outputs).collect();
    Behavior::from_fn(inputs, outputs, |t, x| {
        weights
            .iter()
            .enumerate()
            .map(|(l, w)| w * rules.iter().enumerate().map(|(i, r)| r.prob(l, t[i], x[i])).product::<f64>())
            .sum()
    })
}

/// `Σ_λ p(λ) Π_i p_i(x_i | t_i, λ)`.
pub fn lhv_behavior(model: &LhvModel) -> Result<Behavior> {
    let rules: Vec<&ResponseTable> = model.responses.iter().collect();
    seeded_behavior(&model.weights, &rules)
}

/// Appends colluders who see the same seed `λ` as the authorized players.
/// Summing out the colluders recovers [`lhv_behavior`] exactly.
pub fn copied_seed_extension_multi(model: &LhvModel, colluders: &[ResponseTable]) -> Result<Behavior> {
    if let Some(r) = colluders.iter().find(|r| r.n_hidden != model.weights.len()) {
        return Err(Error::InvalidModel(format!(
            "colluder rule over {} seeds, model has {}",
            r.n_hidden,
            model.weights.len()
        )));
    }
    let rules: Vec<&ResponseTable> = model.responses.iter().chain(colluders).collect();
    seeded_behavior(&model.weights, &rules)
}

/// Tripartite copied-seed extension with a single colluder.
pub fn copied_seed_extension(model: &LhvModel, p3: &ResponseTable) -> Result<Behavior> {
    copied_seed_extension_multi(model, std::slice::from_ref(p3))
}

/// All deterministic behaviors on the given alphabets, player-major: the
/// vertex index is the mixed-radix number whose digit for player `i` is the
/// index of its response function, and a function's index is its output
/// list read as a big-endian number (output for input 0 most significant).
pub fn deterministic_vertices(inputs: &[usize], outputs: &[usize]) -> Result<Vec<Behavior>> {
    let n_functions: Vec<usize> = inputs.iter().zip(outputs).map(|(&i, &o)| o.pow(i as u32)).collect();
    let total = product(&n_functions);
    (0..total)
        .map(|v| {
            let f = decode(v, &n_functions);
            let tables: Vec<Vec<usize>> = f.iter().enumerate().map(|(i, &fi)| decode(fi, &vec![outputs[i]; inputs[i]])).collect();
            Behavior::from_fn(inputs.to_vec(), outputs.to_vec(), |t, x| {
                if (0..t.len()).all(|i| tables[i][t[i]] == x[i]) {
                    1.0
                } else {
                    0.0
                }
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_behavior(rng: &mut ChaCha8Rng, inputs: Vec<usize>, outputs: Vec<usize>) -> Behavior {
        let rows = product(&inputs);
        let cols = product(&outputs);
        let table = (0..rows).flat_map(|_| random_simplex(rng, cols)).collect();
        Behavior::new(inputs, outputs, table).unwrap()
    }

    #[test]
    fn validation_errors() {
        assert!(Behavior::new(vec![2], vec![2], vec![0.5, 0.5, 0.5]).is_err());
        assert!(Behavior::new(vec![1], vec![2], vec![0.7, 0.7]).is_err());
        assert!(Behavior::new(vec![1], vec![2], vec![1.2, -0.2]).is_err());
        assert!(Behavior::new(vec![1, 1], vec![2], vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let b = lhv_behavior(&LhvModel::best_chsh()).unwrap();
        let s = serde_json::to_string(&b).unwrap();
        assert!(s.contains("\"parties\":2"));
        let back: Behavior = serde_json::from_str(&s).unwrap();
        assert_eq!(b, back);
        let bad = r#"{"parties":3,"inputs":[2,2],"outputs":[2,2],"table":[]}"#;
        assert!(serde_json::from_str::<Behavior>(bad).is_err());
    }

    #[test]
    fn product_marginal_is_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_behavior(&mut rng, vec![2], vec![2]);
        let b = random_behavior(&mut rng, vec![2], vec![2]);
        let ab = Behavior::from_fn(vec![2, 2], vec![2, 2], |t, x| a.prob(&t[..1], &x[..1]) * b.prob(&t[1..], &x[1..])).unwrap();
        let m = ab.marginal(&[0]).unwrap();
        for (u, v) in m.table().iter().zip(a.table()) {
            assert_abs_diff_eq!(u, v, epsilon = 1e-15);
        }
    }

    #[test]
    fn signalling_table_is_detected() {
        // Party 1 copies party 2's input.
        let p = Behavior::from_fn(vec![2, 2], vec![2, 2], |t, x| if x[0] == t[1] && x[1] == 0 { 1.0 } else { 0.0 }).unwrap();
        let report = p.check_no_signalling(1e-12);
        assert!(!report.pass);
        assert_abs_diff_eq!(report.max_residual, 1.0);
        assert!(matches!(p.marginal(&[0]), Err(Error::Signalling { .. })));
        assert!(p.marginal(&[1]).is_ok());
    }

    #[test]
    fn lhv_behaviors_are_no_signalling() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let model = LhvModel::random(&mut rng, 3, 4);
            let report = lhv_behavior(&model).unwrap().check_no_signalling(1e-12);
            assert!(report.pass, "residual {}", report.max_residual);
        }
    }

    #[test]
    fn game_scores() {
        let chsh = GameKernel::chsh();
        assert_abs_diff_eq!(game_score(&lhv_behavior(&LhvModel::best_chsh()).unwrap(), &chsh).unwrap(), 0.75);
        let uniform = Behavior::uniform(vec![2, 2], vec![2, 2]).unwrap();
        assert_abs_diff_eq!(game_score(&uniform, &chsh).unwrap(), 0.5);
        let single = Behavior::uniform(vec![2], vec![2]).unwrap();
        assert!(game_score(&single, &chsh).is_err());
    }

    #[test]
    fn best_deterministic_chsh_is_three_quarters() {
        let chsh = GameKernel::chsh();
        let best = deterministic_vertices(&[2, 2], &[2, 2])
            .unwrap()
            .iter()
            .map(|v| game_score(v, &chsh).unwrap())
            .fold(0.0, f64::max);
        assert_abs_diff_eq!(best, 0.75);
    }

    #[test]
    fn vertex_enumeration_order() {
        let v = deterministic_vertices(&[2, 2, 2], &[2, 2, 2]).unwrap();
        assert_eq!(v.len(), 64);
        // Vertex 0: every player always outputs 0.
        assert_eq!(v[0].prob(&[1, 1, 1], &[0, 0, 0]), 1.0);
        // Vertex 1: player 3 uses function 1 = (0 on t=0, 1 on t=1).
        assert_eq!(v[1].prob(&[0, 0, 1], &[0, 0, 1]), 1.0);
        assert_eq!(v[1].prob(&[0, 0, 0], &[0, 0, 0]), 1.0);
        // Vertex 16: player 1 uses function 1.
        assert_eq!(v[16].prob(&[1, 0, 0], &[1, 0, 0]), 1.0);
    }

    #[test]
    fn copied_seed_preserves_authorized_marginal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let model = LhvModel::random(&mut rng, 2, 3);
            let p12 = lhv_behavior(&model).unwrap();
            let copy = copied_seed_extension(&model, &model.responses()[1]).unwrap();
            let m12 = copy.marginal(&[0, 1]).unwrap();
            for (u, v) in m12.table().iter().zip(p12.table()) {
                assert_abs_diff_eq!(u, v, epsilon = 1e-14);
            }
            let m13 = relabel_13_to_12(&copy.marginal(&[0, 2]).unwrap(), 2, 2).unwrap();
            let chsh = GameKernel::chsh();
            assert_abs_diff_eq!(game_score(&m13, &chsh).unwrap(), game_score(&p12, &chsh).unwrap(), epsilon = 1e-14);
        }
    }

    #[test]
    fn uniform_colluder_scores_one_half() {
        let model = LhvModel::best_chsh();
        let ext = copied_seed_extension(&model, &ResponseTable::uniform(1, 2, 2)).unwrap();
        let c13 = game_score(&ext.marginal(&[0, 2]).unwrap(), &GameKernel::chsh()).unwrap();
        assert_abs_diff_eq!(c13, 0.5);
    }

    #[test]
    fn two_colluders_keep_the_authorized_marginal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = LhvModel::random(&mut rng, 2, 5);
        let colluders = [model.responses()[1].clone(), model.responses()[0].clone()];
        let ext = copied_seed_extension_multi(&model, &colluders).unwrap();
        assert_eq!(ext.n_parties(), 4);
        let m = ext.marginal(&[0, 1]).unwrap();
        let p12 = lhv_behavior(&model).unwrap();
        for (u, v) in m.table().iter().zip(p12.table()) {
            assert_abs_diff_eq!(u, v, epsilon = 1e-14);
        }
    }

    #[test]
    fn relabel_checks_alphabets() {
        let b = Behavior::uniform(vec![2, 3], vec![2, 2]).unwrap();
        assert!(relabel_13_to_12(&b, 2, 2).is_err());
        let ok = Behavior::uniform(vec![2, 2], vec![2, 2]).unwrap();
        assert_eq!(relabel_13_to_12(&ok, 2, 2).unwrap().table(), ok.table());
    }

    #[test]
    fn tv_distance_basics() {
        let v = deterministic_vertices(&[2, 2], &[2, 2]).unwrap();
        let pi = uniform_inputs(4);
        assert_abs_diff_eq!(tv_distance(&v[0], &v[0], &pi).unwrap(), 0.0);
        // All-zeros vs all-ones differ on every input.
        assert_abs_diff_eq!(tv_distance(&v[0], &v[15], &pi).unwrap(), 1.0);
        assert!(tv_distance(&v[0], &v[1], &[0.5, 0.5]).is_err());
    }

    /// Brute force over indicator kernels h ∈ {0,1}^cells.
    fn sup_over_indicator_kernels(p: &Behavior, q: &Behavior, pi: &[f64]) -> f64 {
        let cells = p.table().len();
        let cols = p.n_joint_outputs();
        (0..1u32 << cells)
            .map(|mask| {
                (0..cells)
                    .filter(|c| mask >> c & 1 == 1)
                    .map(|c| pi[c / cols] * (p.table()[c] - q.table()[c]))
                    .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn tv_matches_kernel_supremum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let p = random_behavior(&mut rng, vec![2, 2], vec![2, 2]);
            let q = random_behavior(&mut rng, vec![2, 2], vec![2, 2]);
            let pi = random_simplex(&mut rng, 4);
            let tv = tv_distance(&p, &q, &pi).unwrap();
            assert_abs_diff_eq!(tv, sup_over_indicator_kernels(&p, &q, &pi), epsilon = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn tv_is_a_metric(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_behavior(&mut rng, vec![2, 2], vec![2, 2]);
            let q = random_behavior(&mut rng, vec![2, 2], vec![2, 2]);
            let r = random_behavior(&mut rng, vec![2, 2], vec![2, 2]);
            let pi = uniform_inputs(4);
            let pq = tv_distance(&p, &q, &pi).unwrap();
            prop_assert!((pq - tv_distance(&q, &p, &pi).unwrap()).abs() < 1e-12);
            prop_assert!(pq <= tv_distance(&p, &r, &pi).unwrap() + tv_distance(&r, &q, &pi).unwrap() + 1e-12);
            prop_assert!(tv_distance(&p, &p, &pi).unwrap() < 1e-12);
            prop_assert!(pq > 0.0);
        }

        #[test]
        fn game_score_is_a_probability(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_behavior(&mut rng, vec![2, 2], vec![2, 2]);
            let values: Vec<f64> = (0..16).map(|_| rand::Rng::gen(&mut rng)).collect();
            let g = GameKernel::new(vec![2, 2], vec![2, 2], values).unwrap().with_pi(random_simplex(&mut rng, 4)).unwrap();
            let s = game_score(&p, &g).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
        }

        #[test]
        fn copied_seed_marginal_is_exact(seed in any::<u64>(), hidden in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let model = LhvModel::random(&mut rng, 2, hidden);
            let p3 = LhvModel::random(&mut rng, 1, hidden).responses()[0].clone();
            let ext = copied_seed_extension(&model, &p3).unwrap();
            let m = ext.marginal(&[0, 1]).unwrap();
            let p12 = lhv_behavior(&model).unwrap();
            for (u, v) in m.table().iter().zip(p12.table()) {
                prop_assert!((u - v).abs() <= 1e-14);
            }
        }
    }
}
