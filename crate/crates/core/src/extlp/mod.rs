//! Extension-polytope linear programs for a third, colluding party.
//!
//! An authorized bipartite behavior `P₁₂` is extended to `P₁₂₃` with the
//! colluder on party 2's alphabets. The collusive shadow is the set of
//! `(1,3)` marginals of such extensions, read as `(1,2)` behaviors. Only the
//! classical and no-signalling classes are handled here; both are polytopes.

mod simplex;

pub use simplex::{lp_solve, LinearProgram, LpError, LpSolution, LpStatus};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::behaviors::{decode, deterministic_vertices, encode, random_simplex, uniform_inputs, Behavior, GameKernel};
use crate::error::{Error, Result};
use crate::exec::Execution;

const NS_TOL: f64 = 1e-9;
/// Largest tolerated duality gap before a solve is reported as numerical failure.
pub const GAP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtensionClass {
    Classical,
    NoSignalling,
}

impl std::fmt::Display for ExtensionClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Classical => "classical",
            Self::NoSignalling => "no_signalling",
        })
    }
}

/// Authorized bipartite behavior plus the class its extensions range over.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtensionProblem {
    authorized: Behavior,
    class: ExtensionClass,
    pi: Vec<f64>,
}

impl ExtensionProblem {
    /// Accepts bipartite behaviors with at most two inputs and two outputs
    /// per party that are no-signalling within 1e-9.
    pub fn new(authorized: Behavior, class: ExtensionClass) -> Result<Self> {
        if authorized.n_parties() != 2 {
            return Err(Error::Unsupported(format!(
                "extension LPs need a bipartite behavior, got {} parties",
                authorized.n_parties()
            )));
        }
        if authorized.inputs().iter().chain(authorized.outputs()).any(|&k| k > 2) {
            return Err(Error::Unsupported(format!(
                "alphabets {:?}/{:?} exceed 2 inputs x 2 outputs per party",
                authorized.inputs(),
                authorized.outputs()
            )));
        }
        let ns = authorized.check_no_signalling(NS_TOL);
        if !ns.pass {
            return Err(Error::Signalling { residual: ns.max_residual });
        }
        let pi = uniform_inputs(authorized.n_joint_inputs());
        Ok(Self { authorized, class, pi })
    }

    /// Input distribution used by the distance and capacity objectives.
    pub fn with_pi(mut self, pi: Vec<f64>) -> Result<Self> {
        // Reuse the kernel validation of π.
        let probe = GameKernel::new(
            self.authorized.inputs().to_vec(),
            self.authorized.outputs().to_vec(),
            vec![0.0; self.authorized.table().len()],
        )?;
        probe.with_pi(pi.clone())?;
        self.pi = pi;
        Ok(self)
    }

    pub fn authorized(&self) -> &Behavior {
        &self.authorized
    }

    pub fn class(&self) -> ExtensionClass {
        self.class
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    /// Whether any extension exists (always true for the no-signalling class).
    pub fn is_feasible(&self) -> Result<bool> {
        let ext = Extension::build(self)?;
        let lp = ext.base_lp(0);
        match lp_solve(&lp) {
            Ok(_) => Ok(true),
            Err(LpError::Infeasible(_)) => Ok(false),
            Err(e) => Err(e.into()),
        }
    }
}

/// Extension variables `z` and their linear structure:
/// `A z = b, z ≥ 0` describes the extension set and `shadow[c]·z` is cell
/// `c` of the relabelled `(1,3)` marginal.
struct Extension {
    n_z: usize,
    eq: Vec<(Vec<f64>, f64)>,
    shadow: Vec<Vec<f64>>,
}

impl Extension {
    fn build(prob: &ExtensionProblem) -> Result<Self> {
        let p12 = &prob.authorized;
        let (i1, i2) = (p12.inputs()[0], p12.inputs()[1]);
        let (o1, o2) = (p12.outputs()[0], p12.outputs()[1]);
        let ins = [i1, i2, i2];
        let outs = [o1, o2, o2];
        let n_in: usize = ins.iter().product();
        let n_out: usize = outs.iter().product();
        let n_cells = n_in * n_out;
        let cell = |t: &[usize], x: &[usize]| encode(t, &ins) * n_out + encode(x, &outs);

        // Constraints over the tripartite table.
        let mut table_eq: Vec<(Vec<f64>, f64)> = Vec::new();
        // Marginal equality: Σ_{x₃} P₁₂₃(x₁x₂x₃|t₁t₂t₃) = P₁₂(x₁x₂|t₁t₂).
        for ti in 0..n_in {
            let t = decode(ti, &ins);
            for x1 in 0..o1 {
                for x2 in 0..o2 {
                    let mut row = vec![0.0; n_cells];
                    for x3 in 0..o2 {
                        row[cell(&t, &[x1, x2, x3])] = 1.0;
                    }
                    table_eq.push((row, p12.prob(&t[..2], &[x1, x2])));
                }
            }
        }
        if prob.class == ExtensionClass::NoSignalling {
            // For every proper subset S, marginals on S must not depend on
            // the inputs of the complement; compare each complement input
            // against the all-zero one.
            for mask in 1..7usize {
                let kept: Vec<usize> = (0..3).filter(|p| mask >> p & 1 == 1).collect();
                let dropped: Vec<usize> = (0..3).filter(|p| mask >> p & 1 == 0).collect();
                let kin: Vec<usize> = kept.iter().map(|&p| ins[p]).collect();
                let kout: Vec<usize> = kept.iter().map(|&p| outs[p]).collect();
                let din: Vec<usize> = dropped.iter().map(|&p| ins[p]).collect();
                let dout: Vec<usize> = dropped.iter().map(|&p| outs[p]).collect();
                let (nki, nko): (usize, usize) = (kin.iter().product(), kout.iter().product());
                let (ndi, ndo): (usize, usize) = (din.iter().product(), dout.iter().product());
                for ki in 0..nki {
                    for ko in 0..nko {
                        for di in 1..ndi {
                            let mut row = vec![0.0; n_cells];
                            for (d, sign) in [(di, 1.0), (0, -1.0)] {
                                let mut t = [0; 3];
                                let mut x = [0; 3];
                                for (p, v) in kept.iter().zip(decode(ki, &kin)) {
                                    t[*p] = v;
                                }
                                for (p, v) in kept.iter().zip(decode(ko, &kout)) {
                                    x[*p] = v;
                                }
                                for (p, v) in dropped.iter().zip(decode(d, &din)) {
                                    t[*p] = v;
                                }
                                for dx in 0..ndo {
                                    for (p, v) in dropped.iter().zip(decode(dx, &dout)) {
                                        x[*p] = v;
                                    }
                                    row[cell(&t, &x)] += sign;
                                }
                            }
                            table_eq.push((row, 0.0));
                        }
                    }
                }
            }
        }

        // Relabelled (1,3) marginal, read at t₂ = 0.
        let mut table_shadow = Vec::with_capacity(i1 * i2 * o1 * o2);
        for t1 in 0..i1 {
            for t3 in 0..i2 {
                for x1 in 0..o1 {
                    for x3 in 0..o2 {
                        let mut row = vec![0.0; n_cells];
                        for x2 in 0..o2 {
                            row[cell(&[t1, 0, t3], &[x1, x2, x3])] = 1.0;
                        }
                        table_shadow.push(row);
                    }
                }
            }
        }

        match prob.class {
            ExtensionClass::NoSignalling => Ok(Self { n_z: n_cells, eq: table_eq, shadow: table_shadow }),
            ExtensionClass::Classical => {
                // z are weights over deterministic tripartite vertices; each
                // table-space row becomes its evaluation at every vertex.
                let vertices = deterministic_vertices(&ins, &outs)?;
                let lift = |row: &[f64]| -> Vec<f64> {
                    vertices
                        .iter()
                        .map(|v| row.iter().zip(v.table()).map(|(a, p)| a * p).sum())
                        .collect()
                };
                let mut eq: Vec<(Vec<f64>, f64)> = table_eq.iter().map(|(r, b)| (lift(r), *b)).collect();
                eq.push((vec![1.0; vertices.len()], 1.0));
                let shadow = table_shadow.iter().map(|r| lift(r)).collect();
                Ok(Self { n_z: vertices.len(), eq, shadow })
            }
        }
    }

    /// `A z = b, z ≥ 0` with `extra` further free-standing variables.
    fn base_lp(&self, extra: usize) -> LinearProgram {
        let mut lp = LinearProgram::new(self.n_z + extra);
        for (row, b) in &self.eq {
            let mut r = row.clone();
            r.resize(self.n_z + extra, 0.0);
            lp.add_eq(r, *b);
        }
        lp
    }
}

fn solve_checked(lp: &LinearProgram) -> Result<LpSolution> {
    let sol = lp_solve(lp)?;
    if sol.gap >= GAP_TOL {
        return Err(LpError::Numerical(format!("duality gap {:e}", sol.gap)).into());
    }
    Ok(sol)
}

fn check_kernel(prob: &ExtensionProblem, kernel: &GameKernel) -> Result<()> {
    let p = &prob.authorized;
    if kernel.inputs() != p.inputs() || kernel.outputs() != p.outputs() {
        return Err(Error::AlphabetMismatch(format!(
            "kernel {:?}/{:?} vs relabelled alphabets {:?}/{:?}",
            kernel.inputs(),
            kernel.outputs(),
            p.inputs(),
            p.outputs()
        )));
    }
    Ok(())
}

fn cell_weights(pi: &[f64], cols: usize) -> impl Iterator<Item = f64> + '_ {
    (0..pi.len() * cols).map(move |c| pi[c / cols])
}

/// Largest relabelled score the colluding pair can reach over all
/// extensions of the authorized behavior.
pub fn collusive_vulnerability(prob: &ExtensionProblem, kernel: &GameKernel) -> Result<f64> {
    check_kernel(prob, kernel)?;
    let ext = Extension::build(prob)?;
    let cols = prob.authorized.n_joint_outputs();
    let weights: Vec<f64> = cell_weights(kernel.pi(), cols).zip(kernel.values()).map(|(w, h)| w * h).collect();
    let mut objective = vec![0.0; ext.n_z];
    for (w, row) in weights.iter().zip(&ext.shadow) {
        for (o, a) in objective.iter_mut().zip(row) {
            *o += w * a;
        }
    }
    let mut lp = ext.base_lp(0);
    lp.maximize(objective);
    Ok(solve_checked(&lp)?.optimum)
}

/// TV distance from the authorized behavior to its collusive shadow.
pub fn shadow_tv_distance(prob: &ExtensionProblem) -> Result<f64> {
    let ext = Extension::build(prob)?;
    let p12 = prob.authorized.table();
    let cols = prob.authorized.n_joint_outputs();
    let n_cells = p12.len();
    let n = ext.n_z + n_cells;
    let mut lp = ext.base_lp(n_cells);
    let mut objective = vec![0.0; n];
    for (c, w) in cell_weights(&prob.pi, cols).enumerate() {
        objective[ext.n_z + c] = -0.5 * w;
    }
    lp.maximize(objective);
    // u_c ≥ P_c − shadow_c·z and u_c ≥ shadow_c·z − P_c.
    for (c, row) in ext.shadow.iter().enumerate() {
        let mut lower = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for j in 0..ext.n_z {
            lower[j] = -row[j];
            upper[j] = row[j];
        }
        lower[ext.n_z + c] = -1.0;
        upper[ext.n_z + c] = -1.0;
        lp.add_le(lower, -p12[c]);
        lp.add_le(upper, p12[c]);
    }
    Ok(-solve_checked(&lp)?.optimum)
}

/// `sup_{0≤h≤1} [⟨h,P₁₂⟩ − max_Q ⟨h,Q⟩]₊` with `Q` ranging over the shadow.
///
/// The inner maximum `max { ⟨h, S z⟩ : A z = b, z ≥ 0 }` (S the shadow map)
/// is replaced by its dual `min { bᵀμ : Aᵀμ ≥ Sᵀ(π∘h) }`, giving a single
/// program over `(h, μ)`:
///
/// * variables: `h_c ∈ [0, 1]` per cell, `μ_k` free per extension row;
/// * objective: `max Σ_c π_c P_c h_c − Σ_k b_k μ_k`;
/// * rows: `Σ_c π_c S_cj h_c − Σ_k A_kj μ_k ≤ 0` for every extension
///   variable `j`.
pub fn anticollusion_capacity(prob: &ExtensionProblem) -> Result<f64> {
    let ext = Extension::build(prob)?;
    // An empty extension set would make the inner dual unbounded.
    if !prob.is_feasible()? {
        return Err(LpError::Infeasible(f64::NAN).into());
    }
    let p12 = prob.authorized.table();
    let cols = prob.authorized.n_joint_outputs();
    let n_cells = p12.len();
    let n_mu = ext.eq.len();
    let n = n_cells + n_mu;
    let pic: Vec<f64> = cell_weights(&prob.pi, cols).collect();

    let mut lp = LinearProgram::new(n);
    let mut objective = vec![0.0; n];
    for c in 0..n_cells {
        objective[c] = pic[c] * p12[c];
        lp.set_bounds(c, 0.0, 1.0);
    }
    for (k, (_, b)) in ext.eq.iter().enumerate() {
        objective[n_cells + k] = -b;
        lp.free(n_cells + k);
    }
    lp.maximize(objective);
    for j in 0..ext.n_z {
        let mut row = vec![0.0; n];
        for c in 0..n_cells {
            row[c] = pic[c] * ext.shadow[c][j];
        }
        for (k, (a, _)) in ext.eq.iter().enumerate() {
            row[n_cells + k] = -a[j];
        }
        lp.add_le(row, 0.0);
    }
    Ok(solve_checked(&lp)?.optimum.max(0.0))
}

/// `[A₁₂(P₁₂) − V₁₃(P₁₂; G)]₊`.
pub fn anti_collusion_power(p12: &Behavior, kernel_a: &GameKernel, kernel_c: &GameKernel, class: ExtensionClass) -> Result<f64> {
    let prob = ExtensionProblem::new(p12.clone(), class)?;
    let a12 = crate::behaviors::game_score(p12, kernel_a)?;
    let v13 = collusive_vulnerability(&prob, kernel_c)?;
    Ok((a12 - v13).max(0.0))
}

/// The eight binary PR boxes `x₁ ⊕ x₂ = t₁t₂ ⊕ a t₁ ⊕ b t₂ ⊕ c`.
pub fn pr_boxes() -> Vec<Behavior> {
    (0..8usize)
        .map(|k| {
            let (a, b, c) = (k >> 2 & 1, k >> 1 & 1, k & 1);
            Behavior::from_fn(vec![2, 2], vec![2, 2], |t, x| {
                if x[0] ^ x[1] == (t[0] & t[1]) ^ (a & t[0]) ^ (b & t[1]) ^ c {
                    0.5
                } else {
                    0.0
                }
            })
            .expect("PR box is normalized")
        })
        .collect()
}

/// Sparse random mixture of 1 to 4 vertices of the binary bipartite
/// no-signalling polytope (16 local deterministic points and 8 PR boxes).
/// With `local_only`, PR boxes are excluded and the result is classical.
pub fn random_ns_behavior<R: Rng + ?Sized>(rng: &mut R, local_only: bool) -> Behavior {
    let mut vertices = deterministic_vertices(&[2, 2], &[2, 2]).expect("binary vertices");
    if !local_only {
        vertices.extend(pr_boxes());
    }
    let k = rng.gen_range(1..=4);
    let chosen: Vec<&Behavior> = vertices.choose_multiple(rng, k).collect();
    let w = random_simplex(rng, k);
    let parts: Vec<(f64, &Behavior)> = w.into_iter().zip(chosen).collect();
    Behavior::mixture(&parts).expect("mixture of valid vertices")
}

/// One line of the capacity-versus-distance verification corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationRecord {
    pub behavior: Behavior,
    pub class: ExtensionClass,
    pub capacity: f64,
    pub distance: f64,
    pub abs_diff: f64,
}

impl VerificationRecord {
    pub fn compute(behavior: Behavior, class: ExtensionClass) -> Result<Self> {
        let prob = ExtensionProblem::new(behavior.clone(), class)?;
        let capacity = anticollusion_capacity(&prob)?;
        let distance = shadow_tv_distance(&prob)?;
        Ok(Self { behavior, class, capacity, distance, abs_diff: (capacity - distance).abs() })
    }
}

/// Random instances for `class`: local mixtures for the classical class,
/// general no-signalling mixtures otherwise. Instance `i` draws from stream
/// `i` of a ChaCha20 generator seeded with `seed`, so results do not depend
/// on the execution mode.
pub fn verification_corpus(n: usize, class: ExtensionClass, seed: u64, exec: Execution) -> Result<Vec<VerificationRecord>> {
    exec.map_indexed(n, |i| {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let p = random_ns_behavior(&mut rng, class == ExtensionClass::Classical);
        VerificationRecord::compute(p, class)
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behaviors::{game_score, lhv_behavior, LhvModel};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn best_classical() -> Behavior {
        lhv_behavior(&LhvModel::best_chsh()).unwrap()
    }

    #[test]
    fn best_classical_vulnerability_is_three_quarters() {
        for class in [ExtensionClass::Classical, ExtensionClass::NoSignalling] {
            let prob = ExtensionProblem::new(best_classical(), class).unwrap();
            let v = collusive_vulnerability(&prob, &GameKernel::chsh()).unwrap();
            assert_abs_diff_eq!(v, 0.75, epsilon = 1e-9);
            let g = anti_collusion_power(prob.authorized(), &GameKernel::chsh(), &GameKernel::chsh(), class).unwrap();
            assert_abs_diff_eq!(g, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn deterministic_instance_matches_vertex_check() {
        // For a deterministic P₁₂ only the four vertices sharing its (1,2)
        // part are feasible, so V is the best colluder response function.
        let vertices = deterministic_vertices(&[2, 2, 2], &[2, 2, 2]).unwrap();
        assert_eq!(vertices.len(), 64);
        let kernel = GameKernel::chsh();
        for v12 in deterministic_vertices(&[2, 2], &[2, 2]).unwrap() {
            let brute = vertices
                .iter()
                .filter(|v| v.marginal(&[0, 1]).unwrap() == v12)
                .map(|v| game_score(&v.marginal(&[0, 2]).unwrap(), &kernel).unwrap())
                .fold(f64::NEG_INFINITY, f64::max);
            let prob = ExtensionProblem::new(v12, ExtensionClass::Classical).unwrap();
            assert_abs_diff_eq!(collusive_vulnerability(&prob, &kernel).unwrap(), brute, epsilon = 1e-9);
        }
    }

    #[test]
    fn pr_box_distance_and_classical_infeasibility() {
        let pr = pr_boxes().remove(0);
        let ns = ExtensionProblem::new(pr.clone(), ExtensionClass::NoSignalling).unwrap();
        assert_abs_diff_eq!(shadow_tv_distance(&ns).unwrap(), 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(anticollusion_capacity(&ns).unwrap(), 0.5, epsilon = 1e-9);

        let c = ExtensionProblem::new(pr, ExtensionClass::Classical).unwrap();
        assert!(!c.is_feasible().unwrap());
        assert!(matches!(shadow_tv_distance(&c), Err(Error::Lp(LpError::Infeasible(_)))));
        assert!(matches!(anticollusion_capacity(&c), Err(Error::Lp(LpError::Infeasible(_)))));
    }

    #[test]
    fn rejects_large_alphabets_and_signalling() {
        let big = Behavior::uniform(vec![3, 2], vec![2, 2]).unwrap();
        assert!(matches!(ExtensionProblem::new(big, ExtensionClass::NoSignalling), Err(Error::Unsupported(_))));
        let signalling = Behavior::from_fn(vec![2, 2], vec![2, 2], |t, x| if x[1] == t[0] && x[0] == 0 { 1.0 } else { 0.0 }).unwrap();
        assert!(matches!(
            ExtensionProblem::new(signalling, ExtensionClass::NoSignalling),
            Err(Error::Signalling { .. })
        ));
    }

    #[test]
    fn single_input_alphabets_are_always_extendible() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for inputs in [vec![1, 1], vec![2, 1]] {
            for _ in 0..5 {
                // Party 2 has a single input, so x₂ acts as a hidden variable
                // and the relabelled copy lies in the shadow.
                let q2 = random_simplex(&mut rng, 2);
                let resp: Vec<Vec<f64>> = (0..inputs[0] * 2).map(|_| random_simplex(&mut rng, 2)).collect();
                let p = Behavior::from_fn(inputs.clone(), vec![2, 2], |t, x| q2[x[1]] * resp[t[0] * 2 + x[1]][x[0]]).unwrap();
                for class in [ExtensionClass::Classical, ExtensionClass::NoSignalling] {
                    let prob = ExtensionProblem::new(p.clone(), class).unwrap();
                    assert!(anticollusion_capacity(&prob).unwrap() < 1e-9);
                    assert!(shadow_tv_distance(&prob).unwrap() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn corpus_is_deterministic_across_execution_modes() {
        let a = verification_corpus(4, ExtensionClass::NoSignalling, 11, Execution::Sequential).unwrap();
        let b = verification_corpus(4, ExtensionClass::NoSignalling, 11, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        let line = serde_json::to_string(&a[0]).unwrap();
        assert!(line.contains("\"class\":\"no_signalling\""));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn class_monotonicity_and_copied_seed_bound(seed in any::<u64>()) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let p = random_ns_behavior(&mut rng, true);
            let kernel = GameKernel::chsh();
            let vc = collusive_vulnerability(&ExtensionProblem::new(p.clone(), ExtensionClass::Classical).unwrap(), &kernel).unwrap();
            let vns = collusive_vulnerability(&ExtensionProblem::new(p.clone(), ExtensionClass::NoSignalling).unwrap(), &kernel).unwrap();
            prop_assert!(vc <= vns + 1e-9);
            prop_assert!(vc >= game_score(&p, &kernel).unwrap() - 1e-9);
        }

        #[test]
        fn capacity_equals_distance_and_bounds_power(seed in any::<u64>()) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let p = random_ns_behavior(&mut rng, false);
            let rec = VerificationRecord::compute(p.clone(), ExtensionClass::NoSignalling).unwrap();
            prop_assert!(rec.abs_diff < 1e-6, "{rec:?}");
            let g = anti_collusion_power(&p, &GameKernel::chsh(), &GameKernel::chsh(), ExtensionClass::NoSignalling).unwrap();
            prop_assert!(g <= rec.capacity + 1e-9);
        }
    }
}
