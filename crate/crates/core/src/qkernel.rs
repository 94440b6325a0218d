//! Dense complex linear algebra for small qubit strategies.
//!
//! Party 0 is the leftmost tensor factor and basis indices are big-endian in
//! party order, so `|110⟩` is basis index 6 of a three-qubit register.
//! Binary observables have outcomes ±1 with projectors `(I ± O)/2`; outcome
//! label 0 is +1 and label 1 is −1.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::behaviors::Behavior;
use crate::error::{check_range, Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

const NORM_TOL: f64 = 1e-12;
const HERMITIAN_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-10;
const IMAG_TOL: f64 = 1e-8;

/// Pauli matrices and friends.
pub mod pauli {
    use super::{CMatrix, C64};

    pub fn identity(dim: usize) -> CMatrix {
        CMatrix::identity(dim, dim)
    }

    pub fn x() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0)])
    }

    pub fn y() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[C64::new(0.0, 0.0), C64::new(0.0, -1.0), C64::new(0.0, 1.0), C64::new(0.0, 0.0)])
    }

    pub fn z() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(-1.0, 0.0)])
    }

    /// `n · σ` for a real 3-vector `n`; binary when `|n| = 1`.
    pub fn bloch(n: [f64; 3]) -> CMatrix {
        x() * C64::from(n[0]) + y() * C64::from(n[1]) + z() * C64::from(n[2])
    }
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Returns `(M + M†)/2`, failing when `M` was further than `tol` from Hermitian.
fn symmetrize(m: CMatrix, tol: f64) -> Result<CMatrix> {
    if !m.is_square() {
        return Err(Error::InvalidQuantum(format!("matrix is {}x{}, not square", m.nrows(), m.ncols())));
    }
    let adj = m.adjoint();
    let dev = max_abs(&(&m - &adj));
    if dev > tol {
        return Err(Error::InvalidQuantum(format!("matrix deviates from Hermitian by {dev:e}")));
    }
    Ok((m + adj) * C64::from(0.5))
}

fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

fn qubit_count(dim: usize) -> Result<usize> {
    if dim == 0 || !dim.is_power_of_two() {
        return Err(Error::InvalidQuantum(format!("dimension {dim} is not a power of two")));
    }
    Ok(dim.trailing_zeros() as usize)
}

/// Normalized pure state.
#[derive(Debug, Clone, PartialEq)]
pub struct Ket {
    amplitudes: CVector,
}

impl Ket {
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        qubit_count(amplitudes.len())?;
        let v = CVector::from_vec(amplitudes);
        let norm_sq = v.norm_squared();
        if (norm_sq - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidQuantum(format!("ket has squared norm {norm_sq}")));
        }
        Ok(Self { amplitudes: v })
    }

    /// Normalizes an arbitrary nonzero vector.
    pub fn normalized(amplitudes: Vec<C64>) -> Result<Self> {
        let v = CVector::from_vec(amplitudes);
        let n = v.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::InvalidQuantum("cannot normalize a zero vector".into()));
        }
        Self::new((v / C64::from(n)).iter().copied().collect())
    }

    pub fn from_real(amplitudes: &[f64]) -> Result<Self> {
        Self::new(amplitudes.iter().map(|&a| C64::from(a)).collect())
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn n_qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn projector(&self) -> DensityOp {
        DensityOp {
            matrix: &self.amplitudes * self.amplitudes.adjoint(),
        }
    }

    pub fn tensor(&self, other: &Ket) -> Ket {
        Ket {
            amplitudes: self.amplitudes.kronecker(&other.amplitudes),
        }
    }
}

/// Density operator: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOp {
    matrix: CMatrix,
}

impl DensityOp {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        qubit_count(matrix.nrows())?;
        let matrix = symmetrize(matrix, HERMITIAN_TOL)?;
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > NORM_TOL || tr.im.abs() > NORM_TOL {
            return Err(Error::InvalidQuantum(format!("trace is {tr}, expected 1")));
        }
        let min_eig = hermitian_eigenvalues(&matrix)[0];
        if min_eig < -PSD_TOL {
            return Err(Error::InvalidQuantum(format!("minimum eigenvalue {min_eig:e} is negative")));
        }
        Ok(Self { matrix })
    }

    pub fn maximally_mixed(n_qubits: usize) -> Self {
        let dim = 1 << n_qubits;
        Self {
            matrix: CMatrix::identity(dim, dim) * C64::from(1.0 / dim as f64),
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.matrix)
    }

    /// Reduced state on the qubits in `keep` (ascending party order).
    pub fn reduced(&self, keep: &[usize]) -> Result<DensityOp> {
        let n = self.n_qubits();
        if keep.iter().any(|&q| q >= n) || keep.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidQuantum(format!("bad subsystem list {keep:?} for {n} qubits")));
        }
        let traced: Vec<usize> = (0..n).filter(|q| !keep.contains(q)).collect();
        let k = keep.len();
        let compose = |kept: usize, rest: usize| {
            let mut index = 0;
            for (j, &q) in keep.iter().enumerate() {
                index |= ((kept >> (k - 1 - j)) & 1) << (n - 1 - q);
            }
            for (j, &q) in traced.iter().enumerate() {
                index |= ((rest >> (traced.len() - 1 - j)) & 1) << (n - 1 - q);
            }
            index
        };
        let dk = 1 << k;
        let mut out = CMatrix::zeros(dk, dk);
        for r in 0..dk {
            for c in 0..dk {
                let mut acc = C64::new(0.0, 0.0);
                for e in 0..(1 << traced.len()) {
                    acc += self.matrix[(compose(r, e), compose(c, e))];
                }
                out[(r, c)] = acc;
            }
        }
        Ok(DensityOp { matrix: out })
    }
}

/// A pure or mixed state.
#[derive(Debug, Clone, PartialEq)]
pub enum State {
    Pure(Ket),
    Mixed(DensityOp),
}

impl State {
    pub fn dim(&self) -> usize {
        match self {
            State::Pure(k) => k.dim(),
            State::Mixed(r) => r.dim(),
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn density(&self) -> DensityOp {
        match self {
            State::Pure(k) => k.projector(),
            State::Mixed(r) => r.clone(),
        }
    }
}

impl From<Ket> for State {
    fn from(k: Ket) -> Self {
        State::Pure(k)
    }
}

impl From<DensityOp> for State {
    fn from(r: DensityOp) -> Self {
        State::Mixed(r)
    }
}

/// Single-qubit self-adjoint contraction attached to a party.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    matrix: CMatrix,
    party: usize,
    label: String,
}

impl Observable {
    pub fn new(matrix: CMatrix, party: usize, label: impl Into<String>) -> Result<Self> {
        if matrix.nrows() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, found: matrix.nrows() });
        }
        let matrix = symmetrize(matrix, HERMITIAN_TOL)?;
        let ev = hermitian_eigenvalues(&matrix);
        if ev[0] < -1.0 - 1e-10 || ev[ev.len() - 1] > 1.0 + 1e-10 {
            return Err(Error::InvalidQuantum(format!("spectrum {ev:?} leaves [-1, 1]")));
        }
        Ok(Self { matrix, party, label: label.into() })
    }

    /// Observable that must square to the identity.
    pub fn binary(matrix: CMatrix, party: usize, label: impl Into<String>) -> Result<Self> {
        let obs = Self::new(matrix, party, label)?;
        if !obs.is_binary() {
            return Err(Error::NonProjective { tol: HERMITIAN_TOL });
        }
        Ok(obs)
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn party(&self) -> usize {
        self.party
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_binary(&self) -> bool {
        let sq = &self.matrix * &self.matrix;
        max_abs(&(sq - CMatrix::identity(2, 2))) <= HERMITIAN_TOL
    }

    /// Projector onto outcome `label` (0 ↔ +1, 1 ↔ −1).
    pub fn projector(&self, outcome: usize) -> CMatrix {
        let sign = if outcome == 0 { 1.0 } else { -1.0 };
        (CMatrix::identity(2, 2) + &self.matrix * C64::from(sign)) * C64::from(0.5)
    }

    pub fn with_party(&self, party: usize) -> Self {
        Self { party, ..self.clone() }
    }
}

/// Kronecker product `a ⊗ b`.
pub fn tensor(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Places single-qubit operators on the listed parties of an `n_qubits`
/// register, identity elsewhere.
pub fn embed(ops: &[(usize, &CMatrix)], n_qubits: usize) -> Result<CMatrix> {
    let mut out = CMatrix::identity(1, 1);
    for q in 0..n_qubits {
        let mut factor: Option<&CMatrix> = None;
        for &(p, m) in ops {
            if p == q {
                if factor.is_some() {
                    return Err(Error::InvalidQuantum(format!("party {p} listed twice")));
                }
                factor = Some(m);
            }
        }
        out = match factor {
            Some(m) => tensor(&out, m),
            None => tensor(&out, &CMatrix::identity(2, 2)),
        };
    }
    if let Some(&(p, _)) = ops.iter().find(|(p, _)| *p >= n_qubits) {
        return Err(Error::DimensionMismatch { expected: n_qubits, found: p + 1 });
    }
    Ok(out)
}

/// `Tr(ρ·obs)` for a state and a full-register operator.
pub fn expectation(state: &State, obs: &CMatrix) -> Result<f64> {
    let dim = state.dim();
    if obs.nrows() != dim || obs.ncols() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: obs.nrows() });
    }
    let value = match state {
        State::Pure(k) => {
            let v = k.amplitudes();
            v.dotc(&(obs * v))
        }
        State::Mixed(r) => (r.matrix() * obs).trace(),
    };
    if value.im.abs() > IMAG_TOL {
        return Err(Error::NonHermitian(value.im));
    }
    Ok(value.re)
}

/// `(|00⟩ + |11⟩)/√2`.
pub fn bell_state() -> Ket {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    Ket::from_real(&[h, 0.0, 0.0, h]).expect("Bell state is normalized")
}

/// `η |Φ₂⟩⟨Φ₂| + (1 − η) I/4`.
pub fn werner_state(eta: f64) -> Result<DensityOp> {
    let eta = check_range("eta", eta, 0.0, 1.0)?;
    let pure = bell_state().projector();
    let mixed = DensityOp::maximally_mixed(2);
    DensityOp::new(pure.matrix * C64::from(eta) + mixed.matrix * C64::from(1.0 - eta))
}

/// `(cos θ |110⟩ + sin θ |101⟩ + |011⟩)/√2`, which puts the pair of CHSH
/// scores `(S₁₂, S₁₃) = 2√2 (sin θ, cos θ)` on the monogamy circle.
pub fn tightness_state(theta: f64) -> Ket {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut amps = vec![0.0; 8];
    amps[0b110] = theta.cos() * h;
    amps[0b101] = theta.sin() * h;
    amps[0b011] = h;
    Ket::from_real(&amps).expect("cos² + sin² + 1 = 2")
}

/// Binary observables `[O₀, O₁]` for one party.
pub type SettingPair = [Observable; 2];

fn settings(m0: CMatrix, m1: CMatrix, party: usize, name: char) -> SettingPair {
    [
        Observable::binary(m0, party, format!("{name}0")).expect("unit Bloch vector"),
        Observable::binary(m1, party, format!("{name}1")).expect("unit Bloch vector"),
    ]
}

/// Settings reaching 2√2 on `|Φ₂⟩`: `A = (σx, σy)`,
/// `B = ((σx − σy)/√2, (σx + σy)/√2)`.
pub fn bell_chsh_settings() -> (SettingPair, SettingPair) {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let a = settings(pauli::x(), pauli::y(), 0, 'A');
    let b = settings(pauli::bloch([h, -h, 0.0]), pauli::bloch([h, h, 0.0]), 1, 'B');
    (a, b)
}

/// Settings of the monogamy tightness construction: `A = (σx, σy)` and
/// `B = C = ((σx + σy)/√2, (σx − σy)/√2)`, returned as `(A, B, C)` on
/// parties 0, 1, 2.
pub fn tightness_settings() -> (SettingPair, SettingPair, SettingPair) {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let a = settings(pauli::x(), pauli::y(), 0, 'A');
    let b = settings(pauli::bloch([h, h, 0.0]), pauli::bloch([h, -h, 0.0]), 1, 'B');
    let c = [b[0].with_party(2), b[1].with_party(2)];
    (a, b, c)
}

/// Signed CHSH score `⟨A₀B₀⟩ + ⟨A₀B₁⟩ + ⟨A₁B₀⟩ − ⟨A₁B₁⟩` between two parties.
pub fn chsh_score(
    state: &State,
    alice: &SettingPair,
    bob: &SettingPair,
    party_a: usize,
    party_b: usize,
) -> Result<f64> {
    if party_a == party_b {
        return Err(Error::InvalidQuantum("CHSH parties must be distinct".into()));
    }
    let n = state.n_qubits();
    let corr = |x: usize, y: usize| -> Result<f64> {
        let op = embed(&[(party_a, alice[x].matrix()), (party_b, bob[y].matrix())], n)?;
        expectation(state, &op)
    };
    Ok(corr(0, 0)? + corr(0, 1)? + corr(1, 0)? - corr(1, 1)?)
}

/// `√⟨ψ|ρ|ψ⟩`, clamped to `[0, 1]`.
pub fn fidelity_with_pure(rho: &DensityOp, psi: &Ket) -> Result<f64> {
    if rho.dim() != psi.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), found: psi.dim() });
    }
    let overlap = expectation(&State::Mixed(rho.clone()), &psi.projector().matrix)?;
    Ok(overlap.clamp(0.0, 1.0).sqrt())
}

/// A state on `n` qubits plus a pair of binary observables per party.
#[derive(Debug, Clone)]
pub struct QuantumStrategy {
    state: State,
    observables: Vec<SettingPair>,
}

impl QuantumStrategy {
    pub fn new(state: impl Into<State>, observables: Vec<SettingPair>) -> Result<Self> {
        let state = state.into();
        if observables.len() != state.n_qubits() {
            return Err(Error::DimensionMismatch {
                expected: state.n_qubits(),
                found: observables.len(),
            });
        }
        Ok(Self { state, observables })
    }

    /// `|Φ₂⟩` with [`bell_chsh_settings`].
    pub fn bell() -> Self {
        let (a, b) = bell_chsh_settings();
        Self::new(bell_state(), vec![a, b]).expect("two parties")
    }

    /// Werner state with [`bell_chsh_settings`].
    pub fn werner(eta: f64) -> Result<Self> {
        let (a, b) = bell_chsh_settings();
        Self::new(werner_state(eta)?, vec![a, b])
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn observables(&self) -> &[SettingPair] {
        &self.observables
    }

    pub fn n_parties(&self) -> usize {
        self.observables.len()
    }

    pub fn party_dims(&self) -> Vec<usize> {
        vec![2; self.n_parties()]
    }
}

/// Born-rule behavior of a projective strategy: two settings and two
/// outcomes per party.
pub fn born_behavior(strategy: &QuantumStrategy) -> Result<Behavior> {
    let n = strategy.n_parties();
    if strategy.observables.iter().flatten().any(|o| !o.is_binary()) {
        return Err(Error::NonProjective { tol: HERMITIAN_TOL });
    }
    let rows = 1usize << n;
    let cols = 1usize << n;
    let mut table = Vec::with_capacity(rows * cols);
    for t in 0..rows {
        for x in 0..cols {
            let mut op = CMatrix::identity(1, 1);
            for party in 0..n {
                let setting = (t >> (n - 1 - party)) & 1;
                let outcome = (x >> (n - 1 - party)) & 1;
                op = tensor(&op, &strategy.observables[party][setting].projector(outcome));
            }
            let p = expectation(&strategy.state, &op)?;
            table.push(p.max(0.0));
        }
    }
    Behavior::new(vec![2; n], vec![2; n], table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

    fn state_of(k: Ket) -> State {
        State::Pure(k)
    }

    #[test]
    fn tensor_dimensions() {
        let i2 = pauli::identity(2);
        assert_eq!(tensor(&i2, &i2), pauli::identity(4));
        let big = tensor(&i2, &pauli::identity(4));
        assert_eq!((big.nrows(), big.ncols()), (8, 8));
    }

    #[test]
    fn bell_correlations() {
        let phi = state_of(bell_state());
        let xx = tensor(&pauli::x(), &pauli::x());
        let zz = tensor(&pauli::z(), &pauli::z());
        assert_abs_diff_eq!(expectation(&phi, &xx).unwrap(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(expectation(&phi, &zz).unwrap(), 1.0, epsilon = 1e-14);
        let mixed = State::Mixed(DensityOp::maximally_mixed(2));
        assert_abs_diff_eq!(expectation(&mixed, &zz).unwrap(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn expectation_rejects_bad_inputs() {
        let phi = state_of(bell_state());
        assert!(matches!(
            expectation(&phi, &pauli::x()),
            Err(Error::DimensionMismatch { .. })
        ));
        let skew = pauli::identity(4) * C64::new(0.0, 1.0);
        assert!(matches!(expectation(&phi, &skew), Err(Error::NonHermitian(_))));
    }

    #[test]
    fn bell_state_marginal_is_maximally_mixed() {
        let rho = bell_state().projector();
        let a = rho.reduced(&[0]).unwrap();
        let expected = DensityOp::maximally_mixed(1);
        assert!(max_abs(&(a.matrix() - expected.matrix())) < 1e-14);
        assert_abs_diff_eq!(bell_state().amplitudes().norm(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(fidelity_with_pure(&rho, &bell_state()).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn werner_endpoints_and_validation() {
        let one = werner_state(1.0).unwrap();
        assert!(max_abs(&(one.matrix() - bell_state().projector().matrix())) < 1e-14);
        let zero = werner_state(0.0).unwrap();
        assert!(max_abs(&(zero.matrix() - DensityOp::maximally_mixed(2).matrix())) < 1e-14);
        assert!(werner_state(-0.1).is_err());
        assert!(werner_state(1.1).is_err());
        for i in 0..=100 {
            let ev = werner_state(i as f64 / 100.0).unwrap().eigenvalues();
            assert!(ev[0] >= -1e-12);
        }
    }

    #[test]
    fn werner_chsh_is_linear_in_visibility() {
        let (a, b) = bell_chsh_settings();
        for &eta in &[0.0, 0.3, FRAC_1_SQRT_2, 0.9, 1.0] {
            let s = chsh_score(&werner_state(eta).unwrap().into(), &a, &b, 0, 1).unwrap();
            assert_abs_diff_eq!(s, crate::TSIRELSON * eta, epsilon = 1e-12);
        }
        let s = chsh_score(&werner_state(FRAC_1_SQRT_2).unwrap().into(), &a, &b, 0, 1).unwrap();
        assert_abs_diff_eq!(s, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn bell_state_reaches_tsirelson() {
        let (a, b) = bell_chsh_settings();
        let s = chsh_score(&state_of(bell_state()), &a, &b, 0, 1).unwrap();
        assert_abs_diff_eq!(s, crate::TSIRELSON, epsilon = 1e-10);
    }

    #[test]
    fn tightness_settings_vanish_on_phi_plus() {
        // The tightness-construction settings are aligned with |Ψ⁺⟩; on |Φ₂⟩
        // the σy⊗σy correlator flips sign and the CHSH combination cancels.
        let (a, b, _) = tightness_settings();
        let s = chsh_score(&state_of(bell_state()), &a, &b, 0, 1).unwrap();
        assert_abs_diff_eq!(s, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn tightness_state_endpoints() {
        let h = FRAC_1_SQRT_2;
        let top = tightness_state(FRAC_PI_2);
        let mut expect = [0.0; 8];
        expect[0b101] = h;
        expect[0b011] = h;
        for (z, e) in top.amplitudes().iter().zip(expect) {
            assert_abs_diff_eq!(z.re, e, epsilon = 1e-15);
        }
        let bottom = tightness_state(0.0);
        assert_abs_diff_eq!(bottom.amplitudes()[0b110].re, h, epsilon = 1e-15);
        assert_abs_diff_eq!(bottom.amplitudes()[0b101].re, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn tightness_scores_lie_on_the_circle() {
        let (a, b, c) = tightness_settings();
        for i in 0..50 {
            let theta = FRAC_PI_2 * i as f64 / 49.0;
            let st = state_of(tightness_state(theta));
            let s12 = chsh_score(&st, &a, &b, 0, 1).unwrap();
            let s13 = chsh_score(&st, &a, &c, 0, 2).unwrap();
            assert_abs_diff_eq!(s12, crate::TSIRELSON * theta.sin(), epsilon = 1e-10);
            assert_abs_diff_eq!(s13, crate::TSIRELSON * theta.cos(), epsilon = 1e-10);
            assert_abs_diff_eq!(s12 * s12 + s13 * s13, 8.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn fidelity_values() {
        let phi = bell_state();
        let mixed = DensityOp::maximally_mixed(2);
        assert_abs_diff_eq!(fidelity_with_pure(&mixed, &phi).unwrap(), 0.5, epsilon = 1e-14);
        for &eta in &[0.0, 0.25, 0.5, 0.8, 1.0] {
            let f = fidelity_with_pure(&werner_state(eta).unwrap(), &phi).unwrap();
            assert_abs_diff_eq!(f, (eta + (1.0 - eta) / 4.0).sqrt(), epsilon = 1e-14);
        }
        let single = DensityOp::maximally_mixed(1);
        assert!(fidelity_with_pure(&single, &phi).is_err());
    }

    #[test]
    fn density_validation() {
        let not_unit = CMatrix::identity(2, 2);
        assert!(DensityOp::new(not_unit).is_err());
        let negative = CMatrix::from_diagonal(&CVector::from_vec(vec![C64::from(1.5), C64::from(-0.5)]));
        assert!(DensityOp::new(negative).is_err());
        let three = CMatrix::identity(3, 3) * C64::from(1.0 / 3.0);
        assert!(DensityOp::new(three).is_err());
        assert!(Ket::from_real(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn observable_validation() {
        assert!(Observable::new(pauli::x() * C64::from(2.0), 0, "big").is_err());
        let half = Observable::new(pauli::z() * C64::from(0.5), 0, "half").unwrap();
        assert!(!half.is_binary());
        assert!(Observable::binary(pauli::z() * C64::from(0.5), 0, "half").is_err());
        let strategy = QuantumStrategy::new(bell_state(), vec![[half.clone(), half.clone()], [half.clone(), half]]).unwrap();
        assert!(matches!(born_behavior(&strategy), Err(Error::NonProjective { .. })));
    }

    #[test]
    fn born_behavior_matches_chsh_score() {
        let strategy = QuantumStrategy::bell();
        let p = born_behavior(&strategy).unwrap();
        // Correlators from the table: E = P(same) − P(different).
        let corr = |t1: usize, t2: usize| {
            let t = [t1, t2];
            p.prob(&t, &[0, 0]) + p.prob(&t, &[1, 1]) - p.prob(&t, &[0, 1]) - p.prob(&t, &[1, 0])
        };
        let s_table = corr(0, 0) + corr(0, 1) + corr(1, 0) - corr(1, 1);
        let (a, b) = bell_chsh_settings();
        let s_direct = chsh_score(strategy.state(), &a, &b, 0, 1).unwrap();
        assert_abs_diff_eq!(s_table, s_direct, epsilon = 1e-12);
    }

    #[test]
    fn product_state_gives_product_behavior() {
        let zero = Ket::from_real(&[1.0, 0.0]).unwrap();
        let plus = Ket::from_real(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2]).unwrap();
        let (a, b) = bell_chsh_settings();
        let strategy = QuantumStrategy::new(zero.tensor(&plus), vec![a, b]).unwrap();
        let p = born_behavior(&strategy).unwrap();
        let p1 = p.marginal(&[0]).unwrap();
        let p2 = p.marginal(&[1]).unwrap();
        for t1 in 0..2 {
            for t2 in 0..2 {
                for x1 in 0..2 {
                    for x2 in 0..2 {
                        let joint = p.prob(&[t1, t2], &[x1, x2]);
                        let prod = p1.prob(&[t1], &[x1]) * p2.prob(&[t2], &[x2]);
                        assert_abs_diff_eq!(joint, prod, epsilon = 1e-14);
                    }
                }
            }
        }
    }
}
