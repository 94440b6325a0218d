//! Dense two-phase tableau simplex with dual recovery.
//!
//! Problems are stated as `max cᵀx` subject to equality rows, `≤` rows and
//! per-variable bounds (possibly infinite). Internally everything is moved to
//! standard form `Ax = b, x ≥ 0`; duals are recovered by solving `Bᵀy = c_B`
//! against the original standard-form columns, not read off the tableau.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-7;
const MAX_PIVOTS: usize = 200_000;
/// Consecutive degenerate pivots before switching to Bland's rule.
const DEGENERATE_RUN: usize = 50;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("problem is infeasible (phase-one residual {0:e})")]
    Infeasible(f64),
    #[error("problem is unbounded")]
    Unbounded,
    #[error("numerical failure: {0}")]
    Numerical(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
}

/// `max objective·x` s.t. `eq_rows·x = eq_rhs`, `le_rows·x ≤ le_rhs`,
/// `lower ≤ x ≤ upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    objective: Vec<f64>,
    eq_rows: Vec<Vec<f64>>,
    eq_rhs: Vec<f64>,
    le_rows: Vec<Vec<f64>>,
    le_rhs: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl LinearProgram {
    /// `n` variables, zero objective, default bounds `x ≥ 0`.
    pub fn new(n: usize) -> Self {
        Self {
            objective: vec![0.0; n],
            eq_rows: Vec::new(),
            eq_rhs: Vec::new(),
            le_rows: Vec::new(),
            le_rhs: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn maximize(&mut self, c: Vec<f64>) -> &mut Self {
        assert_eq!(c.len(), self.n_vars(), "objective length");
        self.objective = c;
        self
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        assert_eq!(row.len(), self.n_vars(), "row length");
        self.eq_rows.push(row);
        self.eq_rhs.push(rhs);
        self
    }

    pub fn add_le(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        assert_eq!(row.len(), self.n_vars(), "row length");
        self.le_rows.push(row);
        self.le_rhs.push(rhs);
        self
    }

    pub fn add_ge(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.add_le(row.into_iter().map(|a| -a).collect(), -rhs)
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) -> &mut Self {
        assert!(lower <= upper, "empty bound interval");
        self.lower[var] = lower;
        self.upper[var] = upper;
        self
    }

    pub fn free(&mut self, var: usize) -> &mut Self {
        self.set_bounds(var, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn n_eq(&self) -> usize {
        self.eq_rows.len()
    }

    pub fn n_le(&self) -> usize {
        self.le_rows.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    /// Largest violation of any constraint or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let dot = |row: &[f64]| row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        let eq = self.eq_rows.iter().zip(&self.eq_rhs).map(|(r, b)| (dot(r) - b).abs());
        let le = self.le_rows.iter().zip(&self.le_rhs).map(|(r, b)| (dot(r) - b).max(0.0));
        let bounds = x
            .iter()
            .enumerate()
            .map(|(j, v)| (self.lower[j] - v).max(v - self.upper[j]).max(0.0));
        eq.chain(le).chain(bounds).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub optimum: f64,
    pub primal: Vec<f64>,
    /// Multipliers of the equality rows.
    pub dual_eq: Vec<f64>,
    /// Multipliers of the `≤` rows (nonnegative at optimality).
    pub dual_le: Vec<f64>,
    pub dual_objective: f64,
    /// `|optimum − dual_objective|`.
    pub gap: f64,
    pub pivots: usize,
}

/// How an original variable is expressed through standard-form columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// `x = lo + s`
    Shifted { col: usize, lo: f64 },
    /// `x = hi − s`
    Reflected { col: usize, hi: f64 },
    /// `x = s⁺ − s⁻`
    Split { pos: usize, neg: usize },
}

struct StandardForm {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Vec<f64>,
    obj_offset: f64,
    maps: Vec<VarMap>,
    /// Column of the slack that can start basic in each row, if any.
    slack_of_row: Vec<Option<usize>>,
    n_eq: usize,
    n_le: usize,
}

fn to_standard(lp: &LinearProgram) -> StandardForm {
    let n = lp.n_vars();
    let mut maps = Vec::with_capacity(n);
    let mut n_cols = 0;
    let mut obj_offset = 0.0;
    // (var, finite upper bound) rows added after the structural ones
    let mut bound_rows = Vec::new();
    for j in 0..n {
        let (lo, hi) = (lp.lower[j], lp.upper[j]);
        let map = if lo.is_finite() {
            if hi.is_finite() {
                bound_rows.push((j, hi - lo));
            }
            VarMap::Shifted { col: n_cols, lo }
        } else if hi.is_finite() {
            VarMap::Reflected { col: n_cols, hi }
        } else {
            n_cols += 1;
            VarMap::Split { pos: n_cols - 1, neg: n_cols }
        };
        n_cols += 1;
        maps.push(map);
    }
    let n_struct = n_cols;
    let n_slack = lp.n_le() + bound_rows.len();
    let total = n_struct + n_slack;

    let mut c = vec![0.0; total];
    for (j, m) in maps.iter().enumerate() {
        let cj = lp.objective[j];
        match *m {
            VarMap::Shifted { col, lo } => {
                c[col] += cj;
                obj_offset += cj * lo;
            }
            VarMap::Reflected { col, hi } => {
                c[col] -= cj;
                obj_offset += cj * hi;
            }
            VarMap::Split { pos, neg } => {
                c[pos] += cj;
                c[neg] -= cj;
            }
        }
    }

    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut slack_of_row = Vec::new();
    let mut push_row = |row: &[f64], rhs: f64, slack: Option<usize>| {
        let mut out = vec![0.0; total];
        let mut rhs = rhs;
        for (j, m) in maps.iter().enumerate() {
            let v = row[j];
            if v == 0.0 {
                continue;
            }
            match *m {
                VarMap::Shifted { col, lo } => {
                    out[col] += v;
                    rhs -= v * lo;
                }
                VarMap::Reflected { col, hi } => {
                    out[col] -= v;
                    rhs -= v * hi;
                }
                VarMap::Split { pos, neg } => {
                    out[pos] += v;
                    out[neg] -= v;
                }
            }
        }
        if let Some(s) = slack {
            out[s] = 1.0;
        }
        a.push(out);
        b.push(rhs);
        slack_of_row.push(slack);
    };
    for (row, &rhs) in lp.eq_rows.iter().zip(&lp.eq_rhs) {
        push_row(row, rhs, None);
    }
    for (k, (row, &rhs)) in lp.le_rows.iter().zip(&lp.le_rhs).enumerate() {
        push_row(row, rhs, Some(n_struct + k));
    }
    for (k, &(j, width)) in bound_rows.iter().enumerate() {
        let mut row = vec![0.0; n];
        row[j] = 1.0;
        // width is relative to the shifted variable, so undo the shift.
        push_row(&row, width + lp.lower[j], Some(n_struct + lp.n_le() + k));
    }
    StandardForm {
        a,
        b,
        c,
        obj_offset,
        maps,
        slack_of_row,
        n_eq: lp.n_eq(),
        n_le: lp.n_le(),
    }
}

struct Tableau {
    rows: usize,
    cols: usize,
    /// `rows × (cols + 1)`, last column is the right-hand side.
    t: Vec<f64>,
    basis: Vec<usize>,
    pivots: usize,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * (self.cols + 1) + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.cols + 1;
        let p = self.t[pr * w + pc];
        for k in 0..w {
            self.t[pr * w + k] /= p;
        }
        let prow: Vec<f64> = self.t[pr * w..(pr + 1) * w].to_vec();
        for r in 0..self.rows {
            if r == pr {
                continue;
            }
            let f = self.t[r * w + pc];
            if f != 0.0 {
                for (k, pv) in prow.iter().enumerate() {
                    if *pv != 0.0 {
                        self.t[r * w + k] -= f * pv;
                    }
                }
            }
        }
        self.basis[pr] = pc;
        self.pivots += 1;
    }

    /// Maximizes `cost·x` over the current basis, never entering columns with
    /// `allowed[j] == false`.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool]) -> Result<(), LpError> {
        let mut degenerate = 0usize;
        loop {
            if self.pivots > MAX_PIVOTS {
                return Err(LpError::Numerical(format!("pivot limit {MAX_PIVOTS} reached")));
            }
            // reduced cost d_j = c_j − c_Bᵀ B⁻¹ A_j
            let bland = degenerate >= DEGENERATE_RUN;
            let mut entering = None;
            let mut best = PIVOT_TOL;
            for j in 0..self.cols {
                if !allowed[j] || self.basis.contains(&j) {
                    continue;
                }
                let mut d = cost[j];
                for r in 0..self.rows {
                    let a = self.at(r, j);
                    if a != 0.0 {
                        d -= cost[self.basis[r]] * a;
                    }
                }
                if d > best {
                    entering = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(pc) = entering else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r).max(0.0) / a;
                    let better = match leave {
                        None => true,
                        Some((lr, best_ratio)) => {
                            ratio < best_ratio - 1e-12 || (ratio <= best_ratio + 1e-12 && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((pr, ratio)) = leave else {
                return Err(LpError::Unbounded);
            };
            degenerate = if ratio <= 1e-12 { degenerate + 1 } else { 0 };
            self.pivot(pr, pc);
        }
    }
}

/// Solves the program; infeasible, unbounded and numerical failures are
/// distinct errors.
pub fn lp_solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    let sf = to_standard(lp);
    let m = sf.a.len();
    let n_real = sf.c.len();

    // Flip rows so that b ≥ 0; a slack stays usable as a starting basic
    // variable only if its row was not flipped.
    let mut sign = vec![1.0; m];
    let mut a = sf.a.clone();
    let mut b = sf.b.clone();
    for r in 0..m {
        if b[r] < 0.0 {
            sign[r] = -1.0;
            b[r] = -b[r];
            a[r].iter_mut().for_each(|v| *v = -*v);
        }
    }
    let mut art_rows = Vec::new();
    for r in 0..m {
        if sf.slack_of_row[r].is_none() || sign[r] < 0.0 {
            art_rows.push(r);
        }
    }
    let cols = n_real + art_rows.len();
    let mut t = vec![0.0; m * (cols + 1)];
    let mut basis = vec![0; m];
    for r in 0..m {
        t[r * (cols + 1)..r * (cols + 1) + n_real].copy_from_slice(&a[r]);
        t[r * (cols + 1) + cols] = b[r];
        if let Some(s) = sf.slack_of_row[r] {
            if sign[r] > 0.0 {
                basis[r] = s;
            }
        }
    }
    for (k, &r) in art_rows.iter().enumerate() {
        t[r * (cols + 1) + n_real + k] = 1.0;
        basis[r] = n_real + k;
    }
    let mut tab = Tableau { rows: m, cols, t, basis, pivots: 0 };

    // Phase one: maximize −Σ artificials.
    let is_art = |j: usize| j >= n_real;
    if !art_rows.is_empty() {
        let mut cost = vec![0.0; cols];
        cost[n_real..].iter_mut().for_each(|c| *c = -1.0);
        tab.optimize(&cost, &vec![true; cols])?;
        let residual: f64 = (0..m).filter(|&r| is_art(tab.basis[r])).map(|r| tab.rhs(r)).sum();
        if residual > FEAS_TOL * (1.0 + b.iter().fold(0.0f64, |acc, v| acc.max(*v))) {
            return Err(LpError::Infeasible(residual));
        }
        // Drive zero-level artificials out of the basis where possible.
        for r in 0..m {
            if is_art(tab.basis[r]) {
                if let Some(j) = (0..n_real).find(|&j| !tab.basis.contains(&j) && tab.at(r, j).abs() > 1e-7) {
                    tab.pivot(r, j);
                }
            }
        }
    }
    let mut cost = vec![0.0; cols];
    cost[..n_real].copy_from_slice(&sf.c);
    let allowed: Vec<bool> = (0..cols).map(|j| !is_art(j)).collect();
    tab.optimize(&cost, &allowed)?;

    let mut xs = vec![0.0; n_real];
    for r in 0..m {
        if !is_art(tab.basis[r]) {
            xs[tab.basis[r]] = tab.rhs(r).max(0.0);
        }
    }
    let primal: Vec<f64> = sf
        .maps
        .iter()
        .map(|m| match *m {
            VarMap::Shifted { col, lo } => lo + xs[col],
            VarMap::Reflected { col, hi } => hi - xs[col],
            VarMap::Split { pos, neg } => xs[pos] - xs[neg],
        })
        .collect();
    let optimum: f64 = lp.objective.iter().zip(&primal).map(|(c, x)| c * x).sum();

    // Duals from the full basis. Artificials still basic sit on redundant
    // rows; with zero cost they force those rows' multipliers to zero.
    let column = |r: usize, j: usize| -> f64 {
        if j < n_real {
            a[r][j]
        } else if art_rows[j - n_real] == r {
            1.0
        } else {
            0.0
        }
    };
    let y = if m == 0 {
        Vec::new()
    } else {
        let bt = DMatrix::from_fn(m, m, |i, r| column(r, tab.basis[i]));
        let cb = DVector::from_iterator(m, tab.basis.iter().map(|&j| if j < n_real { sf.c[j] } else { 0.0 }));
        bt.lu()
            .solve(&cb)
            .ok_or_else(|| LpError::Numerical("singular basis while recovering duals".into()))?
            .as_slice()
            .to_vec()
    };
    let scale = 1.0 + sf.c.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    for j in 0..n_real {
        let aty: f64 = (0..m).map(|r| a[r][j] * y[r]).sum();
        if sf.c[j] - aty > DUAL_TOL * scale {
            return Err(LpError::Numerical(format!(
                "dual infeasibility {:e} on column {j}",
                sf.c[j] - aty
            )));
        }
    }
    let dual_std: f64 = (0..m).map(|r| b[r] * y[r]).sum();
    let dual_objective = dual_std + sf.obj_offset;
    // Undo the row flips so multipliers refer to the rows as stated.
    let y_orig: Vec<f64> = (0..m).map(|r| y[r] * sign[r]).collect();
    let dual_eq = y_orig[..sf.n_eq].to_vec();
    let dual_le = y_orig[sf.n_eq..sf.n_eq + sf.n_le].to_vec();

    if lp.max_violation(&primal) > 1e-7 * (1.0 + b.iter().fold(0.0f64, |acc, v| acc.max(*v))) {
        return Err(LpError::Numerical(format!(
            "primal violation {:e} after optimization",
            lp.max_violation(&primal)
        )));
    }
    Ok(LpSolution {
        status: LpStatus::Optimal,
        optimum,
        primal,
        dual_eq,
        dual_le,
        dual_objective,
        gap: (optimum - dual_objective).abs(),
        pivots: tab.pivots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn one_variable_box() {
        let mut lp = LinearProgram::new(1);
        lp.maximize(vec![1.0]).add_le(vec![1.0], 1.0);
        let s = lp_solve(&lp).unwrap();
        assert_abs_diff_eq!(s.optimum, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.dual_le[0], 1.0, epsilon = 1e-12);
        assert!(s.gap < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded_are_distinct() {
        let mut lp = LinearProgram::new(1);
        lp.add_le(vec![1.0], -1.0);
        assert!(matches!(lp_solve(&lp), Err(LpError::Infeasible(_))));

        let mut lp = LinearProgram::new(2);
        lp.maximize(vec![1.0, 1.0]).add_eq(vec![1.0, -1.0], 0.0);
        assert_eq!(lp_solve(&lp), Err(LpError::Unbounded));
    }

    #[test]
    fn textbook_problem_with_duals() {
        // max 3x + 5y s.t. x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → 36 at (2, 6),
        // shadow prices (0, 3/2, 1).
        let mut lp = LinearProgram::new(2);
        lp.maximize(vec![3.0, 5.0])
            .add_le(vec![1.0, 0.0], 4.0)
            .add_le(vec![0.0, 2.0], 12.0)
            .add_le(vec![3.0, 2.0], 18.0);
        let s = lp_solve(&lp).unwrap();
        assert_abs_diff_eq!(s.optimum, 36.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.primal[0], 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.primal[1], 6.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.dual_le[0], 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.dual_le[1], 1.5, epsilon = 1e-10);
        assert_abs_diff_eq!(s.dual_le[2], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn free_variables_bounds_and_redundant_rows() {
        // min |x − 3| style: max −u s.t. u ≥ x − 3, u ≥ 3 − x, x free, with a
        // duplicated equality x + 0u = 2.5 listed twice.
        let mut lp = LinearProgram::new(2);
        lp.maximize(vec![0.0, -1.0])
            .free(0)
            .add_ge(vec![-1.0, 1.0], -3.0)
            .add_ge(vec![1.0, 1.0], 3.0)
            .add_eq(vec![1.0, 0.0], 2.5)
            .add_eq(vec![2.0, 0.0], 5.0);
        let s = lp_solve(&lp).unwrap();
        assert_abs_diff_eq!(s.optimum, -0.5, epsilon = 1e-10);
        assert!(s.gap < 1e-10);

        let mut lp = LinearProgram::new(1);
        lp.maximize(vec![-1.0]).set_bounds(0, -2.0, 5.0);
        assert_abs_diff_eq!(lp_solve(&lp).unwrap().primal[0], -2.0, epsilon = 1e-12);
        let mut lp = LinearProgram::new(1);
        lp.maximize(vec![1.0]).set_bounds(0, f64::NEG_INFINITY, 7.0);
        assert_abs_diff_eq!(lp_solve(&lp).unwrap().optimum, 7.0, epsilon = 1e-12);
    }

    /// Exhaustive vertex enumeration for a bounded 2-D program with `≤` rows.
    fn brute_force_2d(c: [f64; 2], rows: &[([f64; 2], f64)]) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for i in 0..rows.len() {
            for j in i + 1..rows.len() {
                let ([a, b], e) = rows[i];
                let ([cc, d], f) = rows[j];
                let det = a * d - b * cc;
                if det.abs() < 1e-12 {
                    continue;
                }
                let x = (e * d - b * f) / det;
                let y = (a * f - e * cc) / det;
                if rows.iter().all(|([p, q], r)| p * x + q * y <= r + 1e-9) {
                    best = best.max(c[0] * x + c[1] * y);
                }
            }
        }
        best
    }

    proptest! {
        #[test]
        fn matches_vertex_enumeration(
            c in prop::array::uniform2(-5.0f64..5.0),
            extra in prop::collection::vec((prop::array::uniform2(-3.0f64..3.0), 0.5f64..4.0), 0..5),
        ) {
            // The box [-2, 2]² keeps every instance bounded and feasible.
            let mut rows = vec![([1.0, 0.0], 2.0), ([-1.0, 0.0], 2.0), ([0.0, 1.0], 2.0), ([0.0, -1.0], 2.0)];
            rows.extend(extra);
            let mut lp = LinearProgram::new(2);
            lp.maximize(c.to_vec()).free(0).free(1);
            for (r, b) in &rows {
                lp.add_le(r.to_vec(), *b);
            }
            let s = lp_solve(&lp).unwrap();
            prop_assert!((s.optimum - brute_force_2d(c, &rows)).abs() < 1e-8);
            prop_assert!(s.gap < 1e-8);
            prop_assert!(s.dual_le.iter().all(|y| *y >= -1e-9));
        }
    }
}
