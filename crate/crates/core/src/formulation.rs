//! Lifted cost matrices and constraint systems of the two relaxations.
//!
//! Index convention: `x = vec(Π)` stacks columns, so block `(i, j)` of an
//! `n² × n²` matrix `X` is `X[i*n + a, j*n + b]` for `a, b in 0..n`, and for
//! `X = x xᵀ` it equals `π_i π_jᵀ` with `π_i` the `i`-th column of `Π`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::assignment::max_weight_assignment;
use crate::error::{Error, Result};
use crate::instance::Permutation;
use crate::linalg::{kron, min_eigenvalue, SymMatrix};

/// Corr threshold for counting a solve as exact.
pub const EXACT_THRESHOLD: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CostVariant {
    /// `M = (I ⊗ A − C ⊗ I)²`.
    #[default]
    SquaredDifference,
    /// `M = −C ⊗ A`.
    NegatedKron,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum SdrVariant {
    #[default]
    #[serde(rename = "I", alias = "sdr1", alias = "1")]
    I,
    #[serde(rename = "II", alias = "sdr2", alias = "2")]
    II,
}

impl std::fmt::Display for SdrVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SdrVariant::I => write!(f, "I"),
            SdrVariant::II => write!(f, "II"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cone {
    PsdOnX,
    EntrywiseNonneg,
    /// `[[X, diag X], [diag Xᵀ, 1]] ⪰ 0`.
    BorderedPsd,
    /// Row and column sums of `mat_diag(X)`; carried as affine rows.
    RowColStochasticDiag,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    BlockTrace,
    BlockSum,
    DiagBlockSum,
    TotalBlockSum,
    DiagRowSum,
    DiagColSum,
    /// Only in lifted systems built by the solver.
    Link,
    Corner,
}

/// Linear functional `Σ coef · X[r, c]` over symmetric `X`, terms with `r <= c`,
/// sorted and merged.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseRow {
    pub terms: Vec<(usize, usize, f64)>,
    pub rhs: f64,
    pub kind: RowKind,
}

impl SparseRow {
    pub fn from_entries(
        entries: impl IntoIterator<Item = (usize, usize, f64)>,
        rhs: f64,
        kind: RowKind,
    ) -> Self {
        let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (r, c, v) in entries {
            let key = if r <= c { (r, c) } else { (c, r) };
            *acc.entry(key).or_insert(0.0) += v;
        }
        let terms = acc
            .into_iter()
            .filter(|(_, v)| *v != 0.0)
            .map(|((r, c), v)| (r, c, v))
            .collect();
        Self { terms, rhs, kind }
    }

    pub fn eval(&self, x: &DMatrix<f64>) -> f64 {
        self.terms.iter().map(|&(r, c, v)| v * x[(r, c)]).sum()
    }

    /// `⟨F_self, F_other⟩` in the Frobenius inner product, where `F` is the
    /// symmetric matrix representing the functional.
    pub fn gram(&self, other: &SparseRow) -> f64 {
        let (mut i, mut j, mut s) = (0, 0, 0.0);
        while i < self.terms.len() && j < other.terms.len() {
            let (ra, ca, va) = self.terms[i];
            let (rb, cb, vb) = other.terms[j];
            match (ra, ca).cmp(&(rb, cb)) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    s += if ra == ca { va * vb } else { 0.5 * va * vb };
                    i += 1;
                    j += 1;
                }
            }
        }
        s
    }

    /// `x += scale · F`.
    pub fn add_adjoint(&self, x: &mut DMatrix<f64>, scale: f64) {
        for &(r, c, v) in &self.terms {
            if r == c {
                x[(r, r)] += scale * v;
            } else {
                let h = 0.5 * scale * v;
                x[(r, c)] += h;
                x[(c, r)] += h;
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct ConstraintSystem {
    pub n: usize,
    /// Side of the matrix variable the rows act on.
    pub dim: usize,
    pub rows: Vec<SparseRow>,
    pub cones: Vec<Cone>,
    pub variant: SdrVariant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub max_row_residual: f64,
    /// Smallest eigenvalue of `X` (SDR I) or of the bordered matrix (SDR II).
    pub min_eigenvalue: f64,
    pub min_entry: f64,
}

impl FeasibilityReport {
    pub fn worst(&self) -> f64 {
        self.max_row_residual
            .max(-self.min_eigenvalue)
            .max(-self.min_entry)
            .max(0.0)
    }
}

impl ConstraintSystem {
    pub fn row_residuals(&self, x: &DMatrix<f64>) -> Vec<f64> {
        self.rows.iter().map(|r| r.eval(x) - r.rhs).collect()
    }

    pub fn max_row_residual(&self, x: &DMatrix<f64>) -> f64 {
        self.row_residuals(x)
            .into_iter()
            .fold(0.0, |m, r| m.max(r.abs()))
    }

    pub fn check(&self, x: &SymMatrix) -> Result<FeasibilityReport> {
        if x.n() != self.dim {
            return Err(Error::invalid(format!(
                "X has side {}, system expects {}",
                x.n(),
                self.dim
            )));
        }
        let m = x.as_matrix();
        let psd = match self.variant {
            SdrVariant::I => m.clone(),
            SdrVariant::II => bordered(m),
        };
        Ok(FeasibilityReport {
            max_row_residual: self.max_row_residual(m),
            min_eigenvalue: min_eigenvalue(&psd),
            min_entry: m.min(),
        })
    }
}

/// `[[X, diag X], [diag Xᵀ, 1]]`.
pub fn bordered(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut b = DMatrix::zeros(n + 1, n + 1);
    b.view_mut((0, 0), (n, n)).copy_from(x);
    for k in 0..n {
        b[(k, n)] = x[(k, k)];
        b[(n, k)] = x[(k, k)];
    }
    b[(n, n)] = 1.0;
    b
}

pub fn build_cost(a: &SymMatrix, c: &SymMatrix, variant: CostVariant) -> Result<SymMatrix> {
    let n = a.n();
    if c.n() != n {
        return Err(Error::invalid("build_cost: dimension mismatch"));
    }
    let id = SymMatrix::identity(n);
    match variant {
        CostVariant::SquaredDifference => {
            let k = kron(&id, a)?.into_matrix() - kron(c, &id)?.into_matrix();
            Ok(SymMatrix::from_product(&k * &k))
        }
        CostVariant::NegatedKron => SymMatrix::from_lower(-kron(c, a)?.into_matrix()),
    }
}

pub fn build_constraints(n: usize, variant: SdrVariant) -> Result<ConstraintSystem> {
    if n < 2 {
        return Err(Error::invalid(format!("n must be >= 2, got {n}")));
    }
    let idx = |block: usize, inner: usize| block * n + inner;
    let mut rows = Vec::with_capacity(4 * n * n + 2 * n);
    for j in 0..n {
        for i in 0..n {
            rows.push(SparseRow::from_entries(
                (0..n).map(|a| (idx(i, a), idx(j, a), 1.0)),
                if i == j { 1.0 } else { 0.0 },
                RowKind::BlockTrace,
            ));
        }
    }
    for j in 0..n {
        for i in 0..n {
            rows.push(SparseRow::from_entries(
                (0..n).flat_map(|a| (0..n).map(move |b| (idx(i, a), idx(j, b), 1.0))),
                1.0,
                RowKind::BlockSum,
            ));
        }
    }
    for b in 0..n {
        for a in 0..n {
            rows.push(SparseRow::from_entries(
                (0..n).map(|i| (idx(i, a), idx(i, b), 1.0)),
                if a == b { 1.0 } else { 0.0 },
                RowKind::DiagBlockSum,
            ));
        }
    }
    for b in 0..n {
        for a in 0..n {
            rows.push(SparseRow::from_entries(
                (0..n).flat_map(|i| (0..n).map(move |j| (idx(i, a), idx(j, b), 1.0))),
                1.0,
                RowKind::TotalBlockSum,
            ));
        }
    }
    let cones = match variant {
        SdrVariant::I => vec![Cone::PsdOnX, Cone::EntrywiseNonneg],
        SdrVariant::II => {
            // mat_diag(X)[i][j] = X[j*n + i, j*n + i]
            for i in 0..n {
                rows.push(SparseRow::from_entries(
                    (0..n).map(|j| (idx(j, i), idx(j, i), 1.0)),
                    1.0,
                    RowKind::DiagRowSum,
                ));
            }
            for j in 0..n {
                rows.push(SparseRow::from_entries(
                    (0..n).map(|i| (idx(j, i), idx(j, i), 1.0)),
                    1.0,
                    RowKind::DiagColSum,
                ));
            }
            vec![
                Cone::BorderedPsd,
                Cone::EntrywiseNonneg,
                Cone::RowColStochasticDiag,
            ]
        }
    };
    Ok(ConstraintSystem {
        n,
        dim: n * n,
        rows,
        cones,
        variant,
    })
}

/// `mat_diag(X)[i][j] = X[j*n + i, j*n + i]`; equals `Π` when `X = vec(Π) vec(Π)ᵀ`.
pub fn mat_diag(x: &SymMatrix) -> Result<DMatrix<f64>> {
    let n = side(x.n())?;
    Ok(DMatrix::from_fn(n, n, |i, j| x.get(j * n + i, j * n + i)))
}

fn side(n2: usize) -> Result<usize> {
    let n = (n2 as f64).sqrt().round() as usize;
    if n * n != n2 {
        return Err(Error::invalid(format!("{n2} is not a perfect square")));
    }
    Ok(n)
}

/// `xᵀ X̂ x / n²` with `x = vec(Π_truth)`.
pub fn correlation(x_hat: &SymMatrix, truth: &Permutation) -> Result<f64> {
    let n = truth.len();
    if x_hat.n() != n * n {
        return Err(Error::invalid("correlation: dimension mismatch"));
    }
    let support: Vec<usize> = (0..n).map(|j| j * n + truth.apply(j)).collect();
    let mut s = 0.0;
    for &p in &support {
        for &q in &support {
            s += x_hat.get(p, q);
        }
    }
    Ok(s / (n * n) as f64)
}

pub fn is_exact(corr: f64) -> bool {
    corr >= 1.0 - EXACT_THRESHOLD
}

/// Maximum-weight matching on `mat_diag(X̂)`.
pub fn round_to_permutation(x_hat: &SymMatrix) -> Result<Permutation> {
    let d = mat_diag(x_hat)?;
    // score[(j, i)] = Π[i, j], so assignment of column j is σ(j).
    let sigma = max_weight_assignment(&d.transpose())?;
    Permutation::new(sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::qap_objective;
    use crate::rng::SplitMix64;
    use nalgebra::DVector;

    fn outer(p: &Permutation) -> SymMatrix {
        let x = DVector::from_vec(p.lifted());
        SymMatrix::from_product(&x * x.transpose())
    }

    fn random_sym(n: usize, rng: &mut SplitMix64) -> SymMatrix {
        SymMatrix::from_fn(n, |_, _| rng.standard_normal()).unwrap()
    }

    #[test]
    fn cost_v1_small_diagonal() {
        let a = SymMatrix::diag(&[1.0, 2.0]);
        let m = build_cost(&a, &a, CostVariant::SquaredDifference).unwrap();
        assert_eq!(m, SymMatrix::diag(&[0.0, 1.0, 1.0, 0.0]));
        let x = DVector::from_vec(Permutation::identity(2).lifted());
        assert_eq!((m.as_matrix() * x).norm(), 0.0);
    }

    #[test]
    fn cost_v1_is_psd() {
        let mut rng = SplitMix64::new(3);
        let a = random_sym(3, &mut rng);
        let c = random_sym(3, &mut rng);
        let m = build_cost(&a, &c, CostVariant::SquaredDifference).unwrap();
        assert!(min_eigenvalue(m.as_matrix()) >= -1e-10);
    }

    #[test]
    fn cost_v1_matches_objective_exhaustively() {
        let mut rng = SplitMix64::new(4);
        for n in 2..=5 {
            let a = random_sym(n, &mut rng);
            let c = random_sym(n, &mut rng);
            let m = build_cost(&a, &c, CostVariant::SquaredDifference).unwrap();
            let mut sigma: Vec<usize> = (0..n).collect();
            loop {
                let p = Permutation::new(sigma.clone()).unwrap();
                let x = DVector::from_vec(p.lifted());
                let quad = x.dot(&(m.as_matrix() * &x));
                assert!((quad - qap_objective(&a, &c, &p).unwrap()).abs() < 1e-9);
                if !next_perm(&mut sigma) {
                    break;
                }
            }
        }
    }

    fn next_perm(p: &mut [usize]) -> bool {
        let n = p.len();
        let Some(i) = (1..n).rev().find(|&i| p[i - 1] < p[i]) else {
            return false;
        };
        let j = (i..n).rev().find(|&j| p[j] > p[i - 1]).unwrap();
        p.swap(i - 1, j);
        p[i..].reverse();
        true
    }

    #[test]
    fn permutations_are_feasible() {
        let mut rng = SplitMix64::new(5);
        for variant in [SdrVariant::I, SdrVariant::II] {
            let sys = build_constraints(4, variant).unwrap();
            for _ in 0..5 {
                let p = Permutation::random(4, &mut rng);
                let rep = sys.check(&outer(&p)).unwrap();
                assert!(rep.max_row_residual < 1e-12);
                assert!(rep.min_eigenvalue > -1e-12);
                assert!(rep.min_entry >= 0.0);
            }
        }
    }

    #[test]
    fn row_counts() {
        assert_eq!(build_constraints(3, SdrVariant::I).unwrap().rows.len(), 36);
        assert_eq!(
            build_constraints(10, SdrVariant::II).unwrap().rows.len(),
            420
        );
    }

    #[test]
    fn scaled_ones_violates_block_traces() {
        let n = 3;
        let sys = build_constraints(n, SdrVariant::I).unwrap();
        // off-diagonal block trace of J/s is n/s
        for (scale, expected) in [(n as f64, 1.0), ((n * n) as f64, 1.0 / 3.0)] {
            let x = SymMatrix::from_fn(n * n, |_, _| 1.0 / scale).unwrap();
            let res = sys.row_residuals(x.as_matrix());
            let mut seen = 0;
            for (row, r) in sys.rows.iter().zip(res) {
                if row.kind == RowKind::BlockTrace && row.rhs == 0.0 {
                    assert!((r - expected).abs() < 1e-15);
                    seen += 1;
                }
            }
            assert_eq!(seen, n * (n - 1));
        }
    }

    #[test]
    fn mat_diag_cases() {
        let mut rng = SplitMix64::new(6);
        let p = Permutation::random(5, &mut rng);
        assert_eq!(mat_diag(&outer(&p)).unwrap(), p.matrix());
        let x = SymMatrix::diag(&[0.25; 16]);
        assert_eq!(mat_diag(&x).unwrap(), DMatrix::from_element(4, 4, 0.25));
    }

    #[test]
    fn correlation_cases() {
        let truth = Permutation::new(vec![1, 2, 0, 3]).unwrap();
        assert_eq!(correlation(&outer(&truth), &truth).unwrap(), 1.0);
        let derangement = Permutation::new(vec![0, 1, 3, 2]).unwrap();
        assert_eq!(truth.agreement(&derangement), 0);
        assert_eq!(correlation(&outer(&derangement), &truth).unwrap(), 0.0);
        let j = SymMatrix::from_fn(16, |_, _| 0.25).unwrap();
        // xᵀ J x = n², divided by n · n²
        assert!((correlation(&j, &truth).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn exactness_threshold() {
        assert!(is_exact(1.0));
        assert!(!is_exact(0.9989));
        assert!(is_exact(0.999));
    }

    #[test]
    fn rounding_cases() {
        let mut rng = SplitMix64::new(7);
        let p = Permutation::random(5, &mut rng);
        assert_eq!(round_to_permutation(&outer(&p)).unwrap(), p);
        let noisy = SymMatrix::from_lower(
            outer(&p).as_matrix() + DMatrix::from_fn(25, 25, |_, _| 1e-6 * rng.standard_normal()),
        )
        .unwrap();
        assert_eq!(round_to_permutation(&noisy).unwrap(), p);
        let flat = SymMatrix::from_fn(16, |_, _| 0.25).unwrap();
        assert_eq!(
            round_to_permutation(&flat).unwrap(),
            Permutation::identity(4)
        );
    }

    #[test]
    fn sparse_row_algebra() {
        let row =
            SparseRow::from_entries([(0, 1, 1.0), (1, 0, 1.0), (2, 2, 3.0)], 0.0, RowKind::Link);
        assert_eq!(row.terms, vec![(0, 1, 2.0), (2, 2, 3.0)]);
        let mut f = DMatrix::zeros(3, 3);
        row.add_adjoint(&mut f, 1.0);
        assert_eq!(row.eval(&f), row.gram(&row));
        assert_eq!(f.norm_squared(), row.gram(&row));
    }
}
