//! Small dense primal-dual interior-point SDP solver.
//!
//! Problems are in linear-matrix-inequality form
//!
//! ```text
//!   maximize  cᵀy   subject to   F(y) = F₀ + Σᵢ yᵢ Fᵢ ⪰ 0
//! ```
//!
//! with dual `minimize ⟨F₀, X⟩` subject to `⟨Fᵢ, X⟩ = −cᵢ, X ⪰ 0`, so any
//! dual-feasible `X` certifies the upper bound `⟨F₀, X⟩`. Iterations follow the
//! infeasible Nesterov-Todd direction with a Mehrotra predictor-corrector
//! step.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric sparse coefficient matrix stored as full `(row, col, value)`
/// triplets (both triangles).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseSym {
    entries: Vec<(usize, usize, f64)>,
}

impl SparseSym {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `v` at `(r, c)` and, off the diagonal, at `(c, r)`.
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        self.entries.push((r, c, v));
        if r != c {
            self.entries.push((c, r, v));
        }
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    fn inner(&self, x: &DMatrix<f64>) -> f64 {
        self.entries.iter().map(|&(r, c, v)| v * x[(r, c)]).sum()
    }

    fn add_scaled_to(&self, target: &mut DMatrix<f64>, scale: f64) {
        for &(r, c, v) in &self.entries {
            target[(r, c)] += scale * v;
        }
    }

    /// `X · self` for dense `X`.
    fn left_mul(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let n = x.nrows();
        let mut out = DMatrix::zeros(n, x.ncols());
        for &(r, c, v) in &self.entries {
            for i in 0..n {
                out[(i, c)] += x[(i, r)] * v;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub c: Vec<f64>,
    pub f0: DMatrix<f64>,
    pub f: Vec<SparseSym>,
}

impl SdpProblem {
    pub fn dim(&self) -> usize {
        self.f0.nrows()
    }

    /// `F(y) = F₀ + Σ yᵢ Fᵢ`.
    pub fn lmi(&self, y: &[f64]) -> DMatrix<f64> {
        let mut m = self.f0.clone();
        for (fi, yi) in self.f.iter().zip(y) {
            fi.add_scaled_to(&mut m, *yi);
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iters: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { abs_tol: 1e-9, rel_tol: 1e-9, max_iters: 100_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Optimal,
    OptimalInaccurate,
    MaxIterations,
    Infeasible,
    NumericalFailure,
}

impl SolverStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Optimal => "optimal",
            Self::OptimalInaccurate => "optimal_inaccurate",
            Self::MaxIterations => "max_iterations",
            Self::Infeasible => "infeasible",
            Self::NumericalFailure => "numerical_failure",
        }
    }

    /// Optimal or optimal to the loosened tolerance.
    pub fn is_optimal_like(self) -> bool {
        matches!(self, Self::Optimal | Self::OptimalInaccurate)
    }
}

impl std::fmt::Display for SolverStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SolverStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "optimal" => Self::Optimal,
            "optimal_inaccurate" => Self::OptimalInaccurate,
            "max_iterations" => Self::MaxIterations,
            "infeasible" => Self::Infeasible,
            "numerical_failure" => Self::NumericalFailure,
            other => return Err(Error::Sdp(format!("unknown solver status {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpResult {
    pub status: SolverStatus,
    pub y: Vec<f64>,
    pub x: DMatrix<f64>,
    /// `cᵀy`.
    pub objective: f64,
    /// `⟨F₀, X⟩`.
    pub bound: f64,
    /// `max |⟨Fᵢ, X⟩ + cᵢ|`.
    pub dual_residual: f64,
    /// `max |F(y) − Z|` entrywise.
    pub slack_residual: f64,
    pub iterations: usize,
}

/// Iterates within this factor of the requested tolerance count as inaccurate
/// solutions rather than failures.
const INACCURATE_FACTOR: f64 = 1e4;
/// Iterations without a tenfold merit improvement before declaring a stall.
const STALL_WINDOW: usize = 40;
const REFINE_ROUNDS: usize = 2;
const STEP_FRACTION: f64 = 0.95;
const DIVERGENCE: f64 = 1e9;

struct Iterate {
    x: DMatrix<f64>,
    y: DVector<f64>,
    z: DMatrix<f64>,
}

struct Measures {
    objective: f64,
    bound: f64,
    rp: DVector<f64>,
    rd: DMatrix<f64>,
    merit: f64,
    converged: bool,
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn frob(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Largest `α ≤ 1/STEP_FRACTION` keeping `m + α d ⪰ 0`, or `None` if `m` is
/// not numerically positive definite.
fn max_step(m: &DMatrix<f64>, d: &DMatrix<f64>) -> Option<f64> {
    let l = m.clone().cholesky()?.unpack();
    let a = l.solve_lower_triangular(d)?;
    let w = l.solve_lower_triangular(&a.transpose())?;
    let lam = symmetrize(&w).symmetric_eigenvalues().min();
    Some(if lam >= 0.0 { f64::INFINITY } else { -1.0 / lam })
}

fn measure(p: &SdpProblem, it: &Iterate, s: &SolverSettings) -> Measures {
    let y = it.y.as_slice();
    let objective: f64 = p.c.iter().zip(y).map(|(c, y)| c * y).sum();
    let bound = p.f0.dot(&it.x);
    let rp = DVector::from_iterator(p.f.len(), p.f.iter().zip(&p.c).map(|(fi, ci)| -ci - fi.inner(&it.x)));
    let rd = p.lmi(y) - &it.z;
    let gap = (objective - bound).abs();
    let rel_gap = gap / (1.0 + objective.abs() + bound.abs());
    let c_norm = p.c.iter().map(|v| v * v).sum::<f64>().sqrt();
    let p_inf = rp.norm() / (1.0 + c_norm);
    let d_inf = frob(&rd) / (1.0 + frob(&p.f0));
    let gap_ok = gap <= s.abs_tol || rel_gap <= s.rel_tol;
    let converged = gap_ok && p_inf <= s.rel_tol && d_inf <= s.rel_tol;
    Measures { objective, bound, rp, rd, merit: rel_gap.max(p_inf).max(d_inf), converged }
}

/// Factored Schur complement. Cholesky is tried first; near convergence the
/// matrix can lose numerical definiteness, and a fully pivoted LU takes over.
enum Schur {
    Cholesky(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::FullPivLU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl Schur {
    fn new(m: DMatrix<f64>) -> Option<Self> {
        match m.clone().cholesky() {
            Some(c) => Some(Self::Cholesky(c)),
            None => {
                let lu = m.full_piv_lu();
                lu.is_invertible().then_some(Self::Lu(lu))
            }
        }
    }

    fn solve(&self, b: &DVector<f64>) -> Option<DVector<f64>> {
        match self {
            Self::Cholesky(c) => Some(c.solve(b)),
            Self::Lu(lu) => lu.solve(b),
        }
    }
}

/// Nesterov-Todd scaling `W = G Gᵀ` with `Gᵀ Z G = G⁻¹ X G⁻ᵀ = D` diagonal.
struct Scaling {
    g: DMatrix<f64>,
    g_inv: DMatrix<f64>,
    d: DVector<f64>,
    w: DMatrix<f64>,
}

fn nt_scaling(x: &DMatrix<f64>, z: &DMatrix<f64>) -> Option<Scaling> {
    let l = x.clone().cholesky()?.unpack();
    let r = z.clone().cholesky()?.unpack();
    // Rᵀ L = U Σ Vᵀ  ⇒  G = L V Σ^{-1/2}, D = Σ.
    let svd = (r.transpose() * &l).svd(true, true);
    let v = svd.v_t?.transpose();
    let d = svd.singular_values;
    if d.iter().any(|s| !(*s > 0.0)) {
        return None;
    }
    let inv_sqrt = DVector::from_iterator(d.len(), d.iter().map(|s| 1.0 / s.sqrt()));
    let sqrt = DVector::from_iterator(d.len(), d.iter().map(|s| s.sqrt()));
    let g = &l * &v * DMatrix::from_diagonal(&inv_sqrt);
    // G⁻¹ = Σ^{1/2} Vᵀ L⁻¹
    let l_inv = l.solve_lower_triangular(&DMatrix::identity(x.nrows(), x.nrows()))?;
    let g_inv = DMatrix::from_diagonal(&sqrt) * v.transpose() * l_inv;
    let w = symmetrize(&(&g * g.transpose()));
    Some(Scaling { g, g_inv, d, w })
}

/// Newton direction for the scaled complementarity target `R`:
/// `ΔX̃ + ΔZ̃ = H` with `H_ij = 2 R_ij / (d_i + d_j)`, so
/// `ΔX = G H Gᵀ − W ΔZ W` and `ΔZ = R_d + Σ Δyⱼ Fⱼ`.
fn direction(
    p: &SdpProblem,
    sc: &Scaling,
    schur: &Schur,
    m: &Measures,
    target: &DMatrix<f64>,
) -> Option<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
    let n = sc.d.len();
    let h = DMatrix::from_fn(n, n, |i, j| 2.0 * target[(i, j)] / (sc.d[i] + sc.d[j]));
    let base = &sc.g * h * sc.g.transpose() - &sc.w * &m.rd * &sc.w;
    let rhs = DVector::from_iterator(p.f.len(), p.f.iter().zip(m.rp.iter()).map(|(fi, rp)| fi.inner(&base) - rp));
    let mut dy = schur.solve(&rhs)?;
    let mut step = DMatrix::zeros(n, n);
    for (fi, d) in p.f.iter().zip(dy.iter()) {
        fi.add_scaled_to(&mut step, *d);
    }
    let mut dx = symmetrize(&(&base - &sc.w * &step * &sc.w));
    // Refinement against the true equality residual.
    for _ in 0..REFINE_ROUNDS {
        let defect = DVector::from_iterator(p.f.len(), p.f.iter().zip(m.rp.iter()).map(|(fi, rp)| fi.inner(&dx) - rp));
        let fix = schur.solve(&defect)?;
        if fix.iter().all(|v| v.is_finite()) && fix.norm() < dy.norm().max(1.0) {
            let mut delta = DMatrix::zeros(n, n);
            for (fi, d) in p.f.iter().zip(fix.iter()) {
                fi.add_scaled_to(&mut delta, *d);
            }
            dx -= symmetrize(&(&sc.w * &delta * &sc.w));
            step += delta;
            dy += fix;
        }
    }
    let dz = &m.rd + step;
    Some((dx, dy, dz))
}

/// Runs the interior-point method. Input errors only; solver trouble is
/// reported through the status of the returned result.
pub fn solve(p: &SdpProblem, settings: &SolverSettings) -> Result<SdpResult> {
    let n = p.dim();
    let k = p.f.len();
    if p.f0.ncols() != n || p.c.len() != k {
        return Err(Error::Sdp(format!("inconsistent problem: F0 {}x{}, {} objective terms for {k} variables", n, p.f0.ncols(), p.c.len())));
    }
    if let Some(&(r, c, _)) = p.f.iter().flat_map(|f| f.entries()).find(|(r, c, _)| *r >= n || *c >= n) {
        return Err(Error::Sdp(format!("coefficient entry ({r}, {c}) outside a {n}x{n} matrix")));
    }
    if settings.max_iters == 0 {
        return Err(Error::Sdp("max_iters must be positive".into()));
    }

    let xi = 1.0 + frob(&p.f0).max(p.c.iter().fold(0.0f64, |a, v| a.max(v.abs())));
    let mut it = Iterate { x: DMatrix::identity(n, n) * xi, y: DVector::zeros(k), z: DMatrix::identity(n, n) * xi };
    let mut best: Option<(f64, Iterate)> = None;
    let mut last_good_merit = f64::INFINITY;
    let mut since_improvement = 0;
    let mut status = SolverStatus::MaxIterations;
    let mut iterations = 0;

    loop {
        let m = measure(p, &it, settings);
        if !m.merit.is_finite() {
            status = SolverStatus::NumericalFailure;
            break;
        }
        if best.as_ref().is_none_or(|(b, _)| m.merit < *b) {
            best = Some((m.merit, Iterate { x: it.x.clone(), y: it.y.clone(), z: it.z.clone() }));
        }
        if m.converged {
            status = SolverStatus::Optimal;
            break;
        }
        if iterations >= settings.max_iters {
            break;
        }
        if m.bound < -DIVERGENCE || it.x.amax() > DIVERGENCE {
            status = SolverStatus::Infeasible;
            break;
        }
        if m.merit < 0.1 * last_good_merit {
            last_good_merit = m.merit;
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement > STALL_WINDOW {
                status = SolverStatus::NumericalFailure;
                break;
            }
        }

        match step(p, &it, &m) {
            Some(next) => it = next,
            None => {
                status = SolverStatus::NumericalFailure;
                break;
            }
        }
        iterations += 1;
    }

    let (best_merit, best_it) = best.expect("the first iterate is always measured");
    if status != SolverStatus::Optimal && status != SolverStatus::Infeasible {
        let loose = SolverSettings {
            abs_tol: settings.abs_tol * INACCURATE_FACTOR,
            rel_tol: settings.rel_tol * INACCURATE_FACTOR,
            max_iters: settings.max_iters,
        };
        if measure(p, &best_it, &loose).converged || best_merit <= loose.rel_tol {
            status = SolverStatus::OptimalInaccurate;
        }
    }
    let m = measure(p, &best_it, settings);
    Ok(SdpResult {
        status,
        objective: m.objective,
        bound: m.bound,
        dual_residual: m.rp.amax(),
        slack_residual: m.rd.amax(),
        y: best_it.y.as_slice().to_vec(),
        x: best_it.x,
        iterations,
    })
}

/// One predictor-corrector step, or `None` on numerical breakdown.
fn step(p: &SdpProblem, it: &Iterate, m: &Measures) -> Option<Iterate> {
    let n = p.dim();
    let sc = nt_scaling(&it.x, &it.z)?;
    // Schur complement Mᵢⱼ = ⟨Fᵢ, W Fⱼ W⟩.
    let k = p.f.len();
    let mut schur = DMatrix::zeros(k, k);
    for (j, fj) in p.f.iter().enumerate() {
        let pj = fj.left_mul(&sc.w) * &sc.w;
        for (i, fi) in p.f.iter().enumerate().skip(j) {
            let v = fi.inner(&pj);
            schur[(i, j)] = v;
            schur[(j, i)] = v;
        }
    }
    let schur = Schur::new(schur)?;

    let mu = it.x.dot(&it.z) / n as f64;
    let d2 = DMatrix::from_diagonal(&sc.d.map(|d| d * d));
    let (dxa, _, dza) = direction(p, &sc, &schur, m, &(-&d2))?;
    let ap = max_step(&it.x, &dxa)?.min(1.0);
    let ad = max_step(&it.z, &dza)?.min(1.0);
    let mu_aff = (&it.x + &dxa * ap).dot(&(&it.z + &dza * ad)) / n as f64;
    let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

    // Second-order term in scaled space: ½(ΔX̃ ΔZ̃ + ΔZ̃ ΔX̃).
    let dxs = &sc.g_inv * &dxa * sc.g_inv.transpose();
    let dzs = sc.g.transpose() * &dza * &sc.g;
    let cross = symmetrize(&(&dxs * &dzs));
    let target = DMatrix::identity(n, n) * (sigma * mu) - d2 - cross;
    let (dx, dy, dz) = direction(p, &sc, &schur, m, &target)?;
    let ap = (STEP_FRACTION * max_step(&it.x, &dx)?).min(1.0);
    let ad = (STEP_FRACTION * max_step(&it.z, &dz)?).min(1.0);
    if ap < 1e-12 && ad < 1e-12 {
        return None;
    }
    Some(Iterate {
        x: symmetrize(&(&it.x + &dx * ap)),
        y: &it.y + &dy * ad,
        z: symmetrize(&(&it.z + &dz * ad)),
    })
}
