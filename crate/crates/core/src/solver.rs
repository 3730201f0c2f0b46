//! Operator-splitting solver for the relaxations built in [`crate::formulation`].
//!
//! Problem: minimize `⟨M, X⟩` subject to the affine rows, `X ⪰ 0` and `X ≥ 0`.
//! For SDR II the variable is the bordered matrix `Y = [[X, d], [dᵀ, 1]]`
//! itself: linking rows `Y[k, N] = Y[k, k]` and `Y[N, N] = 1` are appended, so
//! the bordered cone becomes a plain PSD constraint on `Y`.
//!
//! Iteration (scaled ADMM with three copies `X` affine, `Y` PSD, `W` nonnegative):
//!
//! ```text
//! X ← Π_aff(½(Y − U + W − V) − M/(2ρ))
//! Y ← Π_psd(αX + (1−α)Y + U)        U ← U + αX + (1−α)Y_old − Y
//! W ← max(αX + (1−α)W + V, 0)       V ← V + αX + (1−α)W_old − W
//! ```
//!
//! Dual variables are `Z = −ρU ⪰ 0` and `B = −ρV ≥ 0`. The map
//! `(Y, W, U, V) ↦ (Y⁺, W⁺, U⁺, V⁺)` is accelerated with safeguarded Anderson
//! extrapolation. The PSD step uses nalgebra's tridiagonal QR eigensolver,
//! which at dimension 100 is an order of magnitude faster than the Jacobi
//! solver in [`crate::linalg`].

use std::collections::VecDeque;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formulation::{ConstraintSystem, RowKind, SdrVariant, SparseRow};
use crate::linalg::{min_eigenvalue, SymMatrix};

/// Relative pivot threshold of the rank-revealing factorization of the row Gram matrix.
pub const DROP_TOL: f64 = 1e-10;
/// Largest `n` the solver accepts.
pub const MAX_N: usize = 12;

const PENALTY_EVERY: usize = 50;
const PENALTY_RATIO: f64 = 10.0;
const CHECK_EVERY: usize = 10;
/// Frobenius norm of the internally rescaled cost. With this normalization the
/// default penalty 1.0 is close to the best fixed penalty for 4 <= n <= 10.
const COST_NORM: f64 = 100.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub max_iters: usize,
    pub penalty: f64,
    pub over_relaxation: f64,
    /// Reserved for randomized scaling; the current solver draws no random numbers.
    pub seed: u64,
    pub adaptive_penalty: bool,
    /// History length of Anderson acceleration; 0 disables it.
    pub anderson_memory: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol_primal: 1e-7,
            tol_dual: 1e-7,
            max_iters: 50_000,
            penalty: 1.0,
            over_relaxation: 1.6,
            seed: 0,
            adaptive_penalty: true,
            anderson_memory: 10,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_primal > 0.0 && self.tol_dual > 0.0) {
            return Err(Error::invalid("solver tolerances must be > 0"));
        }
        if !(self.penalty > 0.0 && self.penalty.is_finite()) {
            return Err(Error::invalid("penalty must be finite and > 0"));
        }
        if !(1.0..2.0).contains(&self.over_relaxation) {
            return Err(Error::invalid("over_relaxation must lie in [1, 2)"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SdpProblem {
    pub cost: SymMatrix,
    pub constraints: ConstraintSystem,
}

impl SdpProblem {
    pub fn new(cost: SymMatrix, constraints: ConstraintSystem) -> Result<Self> {
        if cost.n() != constraints.dim {
            return Err(Error::invalid(format!(
                "cost is {0}x{0} but constraints act on {1}x{1}",
                cost.n(),
                constraints.dim
            )));
        }
        if constraints.n > MAX_N {
            return Err(Error::SizeLimit {
                what: "solver n",
                got: constraints.n,
                limit: MAX_N,
            });
        }
        if !cost.is_finite() {
            return Err(Error::invalid("cost has non-finite entries"));
        }
        Ok(Self { cost, constraints })
    }

    pub fn dimension(&self) -> usize {
        self.constraints.dim
    }

    fn lifted_dim(&self) -> usize {
        match self.constraints.variant {
            SdrVariant::I => self.dimension(),
            SdrVariant::II => self.dimension() + 1,
        }
    }

    fn lifted_rows(&self) -> Vec<SparseRow> {
        let mut rows = self.constraints.rows.clone();
        if self.constraints.variant == SdrVariant::II {
            let big = self.dimension();
            for k in 0..big {
                rows.push(SparseRow::from_entries(
                    [(k, big, 1.0), (k, k, -1.0)],
                    0.0,
                    RowKind::Link,
                ));
            }
            rows.push(SparseRow::from_entries(
                [(big, big, 1.0)],
                1.0,
                RowKind::Corner,
            ));
        }
        rows
    }

    fn lift(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self.constraints.variant {
            SdrVariant::I => x.clone(),
            SdrVariant::II => crate::formulation::bordered(x),
        }
    }

    fn lifted_cost(&self) -> DMatrix<f64> {
        let d = self.lifted_dim();
        let n2 = self.dimension();
        let mut c = DMatrix::zeros(d, d);
        c.view_mut((0, 0), (n2, n2))
            .copy_from(self.cost.as_matrix());
        c
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Solved,
    MaxIters,
    NumericalFailure,
}

impl SolverStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolverStatus::Solved => "solved",
            SolverStatus::MaxIters => "max_iters",
            SolverStatus::NumericalFailure => "numerical_failure",
        }
    }
}

impl std::fmt::Display for SolverStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Dual matrices in the (possibly bordered) variable space.
#[derive(Clone, Debug)]
pub struct DualVariables {
    pub z: SymMatrix,
    pub b: SymMatrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyUpdate {
    pub iteration: usize,
    pub penalty: f64,
    /// `sqrt(r_p² + r_d²)` at the moment of the update.
    pub combined_residual: f64,
}

#[derive(Clone, Debug)]
pub struct SolverResult {
    pub x_hat: SymMatrix,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap_estimate: f64,
    pub iterations: usize,
    pub status: SolverStatus,
    pub wall_time: f64,
    pub duals: DualVariables,
    pub penalty_history: Vec<PenaltyUpdate>,
}

/// Initial iterate for [`solve_from`], typically a previous result.
#[derive(Clone, Debug)]
pub struct WarmStart {
    pub x: SymMatrix,
    pub duals: Option<DualVariables>,
}

impl From<&SolverResult> for WarmStart {
    fn from(r: &SolverResult) -> Self {
        Self {
            x: r.x_hat.clone(),
            duals: Some(r.duals.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub primal: f64,
    pub dual: f64,
    pub gap_estimate: f64,
}

/// Projection onto `{X : ⟨F_k, X⟩ = b_k}` keeping a maximal independent subset of rows.
pub(crate) struct AffineProjector {
    rows: Vec<SparseRow>,
    /// Lower Cholesky factor of the Gram matrix of `rows`, row-major.
    chol: Vec<f64>,
}

impl AffineProjector {
    pub(crate) fn new(rows: &[SparseRow], dim: usize) -> Result<Self> {
        let m = rows.len();
        let gram = gram_matrix(rows, dim);
        let max_diag = (0..m).map(|i| gram[i * m + i]).fold(0.0, f64::max);
        if max_diag == 0.0 {
            return Err(Error::invalid("constraint system has no non-trivial rows"));
        }
        // Pivoted Cholesky: l[i][k] for pivot positions.
        let mut perm: Vec<usize> = (0..m).collect();
        let mut d: Vec<f64> = (0..m).map(|i| gram[i * m + i]).collect();
        let mut l = vec![0.0; m * m];
        let mut rank = 0;
        for k in 0..m {
            let mut p = k;
            for i in k + 1..m {
                if d[perm[i]] > d[perm[p]] {
                    p = i;
                }
            }
            if d[perm[p]] <= DROP_TOL * max_diag {
                break;
            }
            perm.swap(k, p);
            l.swap_with_slice_rows(k, p, m);
            let lkk = d[perm[k]].sqrt();
            l[k * m + k] = lkk;
            let pk = perm[k];
            for i in k + 1..m {
                let pi = perm[i];
                let mut s = gram[pi * m + pk];
                for j in 0..k {
                    s -= l[i * m + j] * l[k * m + j];
                }
                let v = s / lkk;
                l[i * m + k] = v;
                d[pi] -= v * v;
            }
            rank = k + 1;
        }
        let kept: Vec<SparseRow> = perm[..rank].iter().map(|&i| rows[i].clone()).collect();
        let mut chol = vec![0.0; rank * rank];
        for i in 0..rank {
            for j in 0..=i {
                chol[i * rank + j] = l[i * m + j];
            }
        }
        Ok(Self { rows: kept, chol })
    }

    pub(crate) fn rank(&self) -> usize {
        self.rows.len()
    }

    fn solve_gram(&self, v: &mut [f64]) {
        let r = self.rank();
        let l = &self.chol;
        for i in 0..r {
            let mut s = v[i];
            for j in 0..i {
                s -= l[i * r + j] * v[j];
            }
            v[i] = s / l[i * r + i];
        }
        for i in (0..r).rev() {
            let mut s = v[i];
            for j in i + 1..r {
                s -= l[j * r + i] * v[j];
            }
            v[i] = s / l[i * r + i];
        }
    }

    /// In place: `x ← x − A*(G⁻¹(A x − b))`.
    pub(crate) fn project(&self, x: &mut DMatrix<f64>) {
        let mut v: Vec<f64> = self.rows.iter().map(|r| r.eval(x) - r.rhs).collect();
        self.solve_gram(&mut v);
        for (row, y) in self.rows.iter().zip(v) {
            row.add_adjoint(x, -y);
        }
    }

    /// Least-squares multipliers `y` with `A*(y) ≈ s` and the null-space part `s − A*(y)`.
    pub(crate) fn split(&self, s: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
        let mut y: Vec<f64> = self.rows.iter().map(|r| r.eval(s)).collect();
        self.solve_gram(&mut y);
        let mut null = s.clone();
        for (row, &yi) in self.rows.iter().zip(&y) {
            row.add_adjoint(&mut null, -yi);
        }
        (y, null)
    }

    pub(crate) fn dual_objective(&self, y: &[f64]) -> f64 {
        self.rows.iter().zip(y).map(|(r, yi)| r.rhs * yi).sum()
    }
}

trait SwapRows {
    fn swap_with_slice_rows(&mut self, a: usize, b: usize, m: usize);
}

impl SwapRows for Vec<f64> {
    fn swap_with_slice_rows(&mut self, a: usize, b: usize, m: usize) {
        if a == b {
            return;
        }
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let (head, tail) = self.split_at_mut(hi * m);
        head[lo * m..lo * m + m].swap_with_slice(&mut tail[..m]);
    }
}

/// Gram matrix of the row functionals, accumulated entry by entry.
fn gram_matrix(rows: &[SparseRow], dim: usize) -> Vec<f64> {
    let m = rows.len();
    let mut touching: Vec<Vec<(usize, f64)>> = vec![Vec::new(); dim * dim];
    for (k, row) in rows.iter().enumerate() {
        for &(r, c, v) in &row.terms {
            touching[r * dim + c].push((k, v));
        }
    }
    let mut g = vec![0.0; m * m];
    for r in 0..dim {
        for c in r..dim {
            let list = &touching[r * dim + c];
            let w = if r == c { 1.0 } else { 0.5 };
            for &(a, va) in list {
                for &(b, vb) in list {
                    g[a * m + b] += w * va * vb;
                }
            }
        }
    }
    g
}

/// An extrapolated point is kept only if its fixed-point residual is at most
/// this multiple of the residual at the point it was extrapolated from.
const SAFEGUARD: f64 = 1.0;

#[derive(Clone)]
struct State {
    y: DMatrix<f64>,
    w: DMatrix<f64>,
    u: DMatrix<f64>,
    v: DMatrix<f64>,
}

impl State {
    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(4 * self.y.len());
        for m in [&self.y, &self.w, &self.u, &self.v] {
            out.extend_from_slice(m.as_slice());
        }
        out
    }

    fn from_flat(flat: &[f64], d: usize) -> Self {
        let k = d * d;
        let part = |i: usize| DMatrix::from_column_slice(d, d, &flat[i * k..(i + 1) * k]);
        Self {
            y: part(0),
            w: part(1),
            u: part(2),
            v: part(3),
        }
    }
}

struct StepOutput {
    x: DMatrix<f64>,
    next: State,
    r_primal: f64,
    r_dual: f64,
    /// `‖F(z) − z‖` for the ADMM map `F` on the stacked state.
    fixed_point_residual: f64,
}

fn admm_step(
    proj: &AffineProjector,
    cs: &DMatrix<f64>,
    alpha: f64,
    rho: f64,
    s: &State,
) -> StepOutput {
    let mut x = (&s.y - &s.u + &s.w - &s.v) * 0.5 - cs * (0.5 / rho);
    proj.project(&mut x);
    let xr_y = &x * alpha + &s.y * (1.0 - alpha);
    let xr_w = &x * alpha + &s.w * (1.0 - alpha);
    let y = psd_part(&(&xr_y + &s.u));
    let w = (&xr_w + &s.v).map(|e| e.max(0.0));
    let u = &s.u + &xr_y - &y;
    let v = &s.v + &xr_w - &w;
    let dy = &y - &s.y;
    let dw = &w - &s.w;
    let r_primal = ((&x - &y).norm_squared() + (&x - &w).norm_squared()).sqrt();
    let r_dual = rho * frob(&(&dy + &dw));
    let fixed_point_residual = (dy.norm_squared()
        + dw.norm_squared()
        + (&u - &s.u).norm_squared()
        + (&v - &s.v).norm_squared())
    .sqrt();
    StepOutput {
        x,
        next: State { y, w, u, v },
        r_primal,
        r_dual,
        fixed_point_residual,
    }
}

/// Type-II Anderson acceleration on the stacked ADMM state.
struct Anderson {
    memory: usize,
    prev: Option<(Vec<f64>, Vec<f64>)>,
    dg: VecDeque<Vec<f64>>,
    df: VecDeque<Vec<f64>>,
    /// `gram[i][j] = ⟨dg_i, dg_j⟩`, kept in step with `dg`.
    gram: VecDeque<Vec<f64>>,
}

impl Anderson {
    fn new(memory: usize) -> Self {
        Self {
            memory,
            prev: None,
            dg: VecDeque::new(),
            df: VecDeque::new(),
            gram: VecDeque::new(),
        }
    }

    fn reset(&mut self) {
        self.prev = None;
        self.clear_history();
    }

    fn clear_history(&mut self) {
        self.dg.clear();
        self.df.clear();
        self.gram.clear();
    }

    fn push(&mut self, dg: Vec<f64>, df: Vec<f64>) {
        if self.dg.len() == self.memory {
            self.dg.pop_front();
            self.df.pop_front();
            self.gram.pop_front();
            for row in self.gram.iter_mut() {
                row.remove(0);
            }
        }
        let mut row: Vec<f64> = self.dg.iter().map(|c| dot(c, &dg)).collect();
        row.push(dot(&dg, &dg));
        for (old, &v) in self.gram.iter_mut().zip(&row) {
            old.push(v);
        }
        self.gram.push_back(row);
        self.dg.push_back(dg);
        self.df.push_back(df);
    }

    /// Given `z` and `f = F(z)`, returns the extrapolated next point, if any.
    fn extrapolate(&mut self, z: &State, f: &State) -> Option<State> {
        if self.memory == 0 {
            return None;
        }
        let d = z.y.nrows();
        let fz = f.flatten();
        let mut g = z.flatten();
        for (gi, fi) in g.iter_mut().zip(&fz) {
            *gi = fi - *gi;
        }
        if let Some((pf, pg)) = self.prev.take() {
            let dg = g.iter().zip(&pg).map(|(a, b)| a - b).collect();
            let df = fz.iter().zip(&pf).map(|(a, b)| a - b).collect();
            self.push(dg, df);
        }
        let m = self.dg.len();
        let mut result = None;
        if m > 0 {
            let mut gram = DMatrix::from_fn(m, m, |i, j| self.gram[i][j]);
            let rhs = nalgebra::DVector::from_iterator(m, self.dg.iter().map(|c| dot(c, &g)));
            let reg = 1e-10 * (0..m).map(|i| gram[(i, i)]).fold(0.0, f64::max);
            for i in 0..m {
                gram[(i, i)] += reg.max(f64::MIN_POSITIVE);
            }
            if let Some(ch) = gram.cholesky() {
                let gamma = ch.solve(&rhs);
                let mut next = fz.clone();
                for (gk, col) in gamma.iter().zip(&self.df) {
                    for (t, c) in next.iter_mut().zip(col) {
                        *t -= gk * c;
                    }
                }
                if next.iter().all(|v| v.is_finite()) {
                    result = Some(State::from_flat(&next, d));
                }
            }
        }
        if result.is_none() {
            self.clear_history();
        }
        self.prev = Some((fz, g));
        result
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Projection onto the PSD cone, assembled from whichever eigenspace
/// (positive or negative) is smaller: `S₊ = S − S₋`.
fn psd_part(s: &DMatrix<f64>) -> DMatrix<f64> {
    let d = s.nrows();
    let sym = (s + s.transpose()) * 0.5;
    let e = nalgebra::SymmetricEigen::new(sym.clone());
    let pos: Vec<usize> = (0..d).filter(|&i| e.eigenvalues[i] > 0.0).collect();
    let neg: Vec<usize> = (0..d).filter(|&i| e.eigenvalues[i] < 0.0).collect();
    let build = |idx: &[usize]| {
        let mut w = DMatrix::zeros(d, idx.len());
        for (c, &i) in idx.iter().enumerate() {
            let scale = e.eigenvalues[i].abs().sqrt();
            w.set_column(c, &(e.eigenvectors.column(i) * scale));
        }
        &w * w.transpose()
    };
    if pos.len() <= neg.len() {
        build(&pos)
    } else {
        sym + build(&neg)
    }
}

fn frob(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

fn symmetrize(m: DMatrix<f64>) -> SymMatrix {
    SymMatrix::from_lower(m).expect("square")
}

fn top_left(m: &DMatrix<f64>, n2: usize) -> DMatrix<f64> {
    m.view((0, 0), (n2, n2)).into_owned()
}

/// Primal infeasibility of `x` (lifted): worst of row residual, PSD and sign violation.
fn primal_violation(aff_rows: &[SparseRow], x: &DMatrix<f64>) -> f64 {
    let rows = aff_rows
        .iter()
        .map(|r| (r.eval(x) - r.rhs).abs())
        .fold(0.0, f64::max);
    let psd = (-min_eigenvalue(x)).max(0.0);
    let sign = (-x.min()).max(0.0);
    rows.max(psd).max(sign)
}

/// Dual residual and gap for lifted cost `c`, iterate `x` and duals `z`, `b`.
fn dual_report(
    proj: &AffineProjector,
    c: &DMatrix<f64>,
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> (f64, f64) {
    let s = c - z - b;
    let (y, null) = proj.split(&s);
    let cone = (-min_eigenvalue(z)).max(0.0) + (-b.min()).max(0.0);
    let dual = (frob(&null) + cone) / frob(c).max(1.0);
    let pobj = c.dot(x);
    let dobj = proj.dual_objective(&y);
    let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
    (dual, gap)
}

/// Recomputes residuals of `result` from the problem data alone.
pub fn residual_report(result: &SolverResult, problem: &SdpProblem) -> Result<ResidualReport> {
    let primal = problem.constraints.check(&result.x_hat)?.worst();
    let d = problem.lifted_dim();
    if result.duals.z.n() != d || result.duals.b.n() != d {
        return Err(Error::invalid("dual variables do not match the problem"));
    }
    let proj = AffineProjector::new(&problem.lifted_rows(), d)?;
    let x = problem.lift(result.x_hat.as_matrix());
    let (dual, gap) = dual_report(
        &proj,
        &problem.lifted_cost(),
        &x,
        result.duals.z.as_matrix(),
        result.duals.b.as_matrix(),
    );
    Ok(ResidualReport {
        primal,
        dual,
        gap_estimate: gap,
    })
}

/// `(1/n) I⊗I + (1/(n(n−1))) (J−I)⊗(J−I)`: the average of `x xᵀ` over all permutations.
pub fn permutation_barycenter(n: usize) -> DMatrix<f64> {
    let n2 = n * n;
    let off = if n > 1 {
        1.0 / (n * (n - 1)) as f64
    } else {
        0.0
    };
    DMatrix::from_fn(n2, n2, |p, q| {
        let (j, a) = (p / n, p % n);
        let (l, b) = (q / n, q % n);
        if j == l && a == b {
            1.0 / n as f64
        } else if j != l && a != b {
            off
        } else {
            0.0
        }
    })
}

pub fn solve(problem: &SdpProblem, settings: &SolverSettings) -> Result<SolverResult> {
    solve_from(problem, settings, None)
}

struct Iterate {
    x: DMatrix<f64>,
    u: DMatrix<f64>,
    v: DMatrix<f64>,
    rho: f64,
    combined: f64,
    iteration: usize,
}

pub fn solve_from(
    problem: &SdpProblem,
    settings: &SolverSettings,
    start: Option<&WarmStart>,
) -> Result<SolverResult> {
    settings.validate()?;
    let clock = Instant::now();
    let d = problem.lifted_dim();
    let n = problem.constraints.n;
    let n2 = problem.dimension();
    let rows = problem.lifted_rows();
    let proj = AffineProjector::new(&rows, d)?;

    let cost = problem.lifted_cost();
    // Work with a cost of Frobenius norm COST_NORM; `scale` maps duals back.
    let scale = {
        let f = frob(&cost);
        if f > 0.0 {
            f / COST_NORM
        } else {
            1.0
        }
    };
    let cs = &cost / scale;

    let (x0, duals0) = match start {
        Some(ws) if ws.x.n() == n2 => (problem.lift(ws.x.as_matrix()), ws.duals.clone()),
        Some(_) => return Err(Error::invalid("warm start has the wrong dimension")),
        None => (problem.lift(&permutation_barycenter(n)), None),
    };
    let mut rho = settings.penalty;
    let (u0, v0) = match duals0 {
        Some(dv) if dv.z.n() == d => (
            dv.z.as_matrix() * (-1.0 / (rho * scale)),
            dv.b.as_matrix() * (-1.0 / (rho * scale)),
        ),
        _ => (DMatrix::zeros(d, d), DMatrix::zeros(d, d)),
    };
    let mut state = State {
        y: x0.clone(),
        w: x0.clone(),
        u: u0,
        v: v0,
    };
    let mut x = x0;
    let alpha = settings.over_relaxation;
    let mut accel = Anderson::new(settings.anderson_memory);
    let mut history = Vec::new();
    let mut last_accepted = f64::INFINITY;
    let mut best: Option<Iterate> = None;
    let mut status = SolverStatus::MaxIters;
    let mut iterations = settings.max_iters;
    let mut final_report = None;
    // Plain image of the last accepted point, kept for the safeguard.
    let mut fallback: Option<(State, f64)> = None;

    let mut it = 0;
    while it < settings.max_iters {
        it += 1;
        let mut out = admm_step(&proj, &cs, alpha, rho, &state);
        if let Some((plain, ref_norm)) = fallback.take() {
            if out.fixed_point_residual > SAFEGUARD * ref_norm {
                // Extrapolated point was worse than the plain step it replaced.
                accel.reset();
                state = plain;
                if it >= settings.max_iters {
                    break;
                }
                it += 1;
                out = admm_step(&proj, &cs, alpha, rho, &state);
            }
        }
        x = out.x.clone();
        let (r_p, r_d) = (out.r_primal, out.r_dual);
        if !(r_p.is_finite() && r_d.is_finite()) {
            status = SolverStatus::NumericalFailure;
            iterations = it;
            break;
        }
        let combined = (r_p * r_p + r_d * r_d).sqrt();
        if best.as_ref().is_none_or(|b| combined < b.combined) {
            best = Some(Iterate {
                x: x.clone(),
                u: out.next.u.clone(),
                v: out.next.v.clone(),
                rho,
                combined,
                iteration: it,
            });
        }

        if it % CHECK_EVERY == 0 && r_p <= settings.tol_primal && r_d <= settings.tol_dual {
            let primal = primal_violation(&rows, &x);
            if primal <= settings.tol_primal {
                let z = &out.next.u * (-rho * scale);
                let b = &out.next.v * (-rho * scale);
                let (dual, gap) = dual_report(&proj, &cost, &x, &z, &b);
                if dual <= settings.tol_dual {
                    status = SolverStatus::Solved;
                    iterations = it;
                    final_report = Some((primal, dual, gap, z, b));
                    break;
                }
            }
        }

        let mut next = out.next;
        if settings.adaptive_penalty && it % PENALTY_EVERY == 0 && r_d > 0.0 && r_p > 0.0 {
            let factor = if r_p > PENALTY_RATIO * r_d {
                2.0
            } else if r_d > PENALTY_RATIO * r_p {
                0.5
            } else {
                1.0
            };
            if factor != 1.0 && combined <= last_accepted {
                rho *= factor;
                next.u /= factor;
                next.v /= factor;
                last_accepted = combined;
                history.push(PenaltyUpdate {
                    iteration: it,
                    penalty: rho,
                    combined_residual: combined,
                });
                accel.reset();
                state = next;
                continue;
            }
        }
        match accel.extrapolate(&state, &next) {
            Some(z) => {
                fallback = Some((next, out.fixed_point_residual));
                state = z;
            }
            None => state = next,
        }
    }

    let (x_final, primal, dual, gap, z, b) = match (status, final_report) {
        (SolverStatus::Solved, Some((p, dres, g, z, b))) => (x, p, dres, g, z, b),
        _ => {
            let Some(bi) = best else {
                return Ok(SolverResult {
                    x_hat: symmetrize(top_left(&x, n2)),
                    objective: f64::NAN,
                    primal_residual: f64::INFINITY,
                    dual_residual: f64::INFINITY,
                    gap_estimate: f64::INFINITY,
                    iterations,
                    status: SolverStatus::NumericalFailure,
                    wall_time: clock.elapsed().as_secs_f64(),
                    duals: DualVariables {
                        z: SymMatrix::zeros(d),
                        b: SymMatrix::zeros(d),
                    },
                    penalty_history: history,
                });
            };
            if status == SolverStatus::MaxIters {
                iterations = settings.max_iters.max(bi.iteration);
            }
            let z = &bi.u * (-bi.rho * scale);
            let b = &bi.v * (-bi.rho * scale);
            let primal = primal_violation(&rows, &bi.x);
            let (dres, g) = dual_report(&proj, &cost, &bi.x, &z, &b);
            (bi.x, primal, dres, g, z, b)
        }
    };

    let x_hat = symmetrize(top_left(&x_final, n2));
    let objective = problem.cost.as_matrix().dot(x_hat.as_matrix());
    Ok(SolverResult {
        x_hat,
        objective,
        primal_residual: primal,
        dual_residual: dual,
        gap_estimate: gap,
        iterations,
        status,
        wall_time: clock.elapsed().as_secs_f64(),
        duals: DualVariables {
            z: symmetrize(z),
            b: symmetrize(b),
        },
        penalty_history: history,
    })
}
