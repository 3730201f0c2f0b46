//! Dense symmetric linear algebra.
//!
//! Everything here works on small dense matrices (dimension a few hundred at
//! most). The eigensolver is a cyclic Jacobi method: slow asymptotically but
//! deterministic and accurate on clustered spectra.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest Kronecker product dimension `n_A * n_B` accepted by [`kron`].
pub const KRON_BUDGET: usize = 400;

/// Relative tolerance used by [`lambda2_restricted`] to accept `x` as a kernel vector.
pub const KERNEL_TOL: f64 = 1e-6;

const JACOBI_REL_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Dense symmetric matrix. The lower triangle is authoritative: every
/// constructor mirrors it into the upper triangle, so `m[(i, j)] == m[(j, i)]`
/// holds bit-for-bit.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    m: DMatrix<f64>,
}

impl SymMatrix {
    /// Builds from a square matrix, keeping its lower triangle.
    pub fn from_lower(mut m: DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if n == 0 || m.ncols() != n {
            return Err(Error::invalid(format!(
                "symmetric matrix must be square with n >= 1, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        for j in 0..n {
            for i in (j + 1)..n {
                m[(j, i)] = m[(i, j)];
            }
        }
        Ok(Self { m })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        Self::from_lower(DMatrix::from_fn(
            n,
            n,
            |i, j| if i >= j { f(i, j) } else { 0.0 },
        ))
    }

    /// Reads `n*n` row-major entries, rejecting input that is not symmetric
    /// to `1e-12` relative accuracy.
    pub fn from_row_major(n: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::invalid(format!(
                "expected {} entries for a {n}x{n} matrix, got {}",
                n * n,
                data.len()
            )));
        }
        let scale = data.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (data[i * n + j], data[j * n + i]);
                if (a - b).abs() > 1e-12 * scale {
                    return Err(Error::invalid(format!(
                        "matrix not symmetric at ({i},{j}): {a} vs {b}"
                    )));
                }
            }
        }
        Self::from_fn(n, |i, j| data[i * n + j])
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            m: DMatrix::zeros(n, n),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            m: DMatrix::identity(n, n),
        }
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        Self {
            m: DMatrix::from_fn(n, n, |i, j| if i == j { values[i] } else { 0.0 }),
        }
    }

    /// Symmetrizes an almost-symmetric product, e.g. `K * K` for symmetric `K`.
    pub(crate) fn from_product(m: DMatrix<f64>) -> Self {
        let sym = (&m + m.transpose()) * 0.5;
        Self::from_lower(sym).expect("square product")
    }

    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        // Symmetric, so column-major storage is also the row-major order.
        self.m.as_slice().to_vec()
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.m)
    }

    pub fn frobenius(&self) -> f64 {
        self.m.norm()
    }

    /// Spectral norm, `max |lambda_i|`.
    pub fn op_norm(&self) -> Result<f64> {
        let spec = sym_eig(self)?;
        Ok(spec
            .eigenvalues
            .iter()
            .fold(0.0_f64, |acc, v| acc.max(v.abs())))
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().all(|v| v.is_finite())
    }
}

/// Eigendecomposition `A = U diag(lambda) U^T` plus the two spectral
/// statistics the exactness condition needs.
#[derive(Clone, Debug)]
pub struct Spectrum {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal; column `i` pairs with `eigenvalues[i]`.
    pub eigenvectors: DMatrix<f64>,
    /// `min_{i != j} |lambda_i - lambda_j|`; zero when `n == 1`.
    pub min_gap: f64,
    /// `min_i <u_i, 1>^2`.
    pub min_alignment_sq: f64,
}

impl Spectrum {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let u = &self.eigenvectors;
        let mut scaled = u.clone();
        for (j, lam) in self.eigenvalues.iter().enumerate() {
            scaled.column_mut(j).scale_mut(*lam);
        }
        scaled * u.transpose()
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max(&self) -> f64 {
        *self.eigenvalues.last().expect("n >= 1")
    }
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Cyclic Jacobi on a row-major symmetric buffer. `vt` holds eigenvectors as
/// rows and is rotated alongside. On return the diagonal of `a` holds the
/// eigenvalues. Returns the number of sweeps performed.
fn jacobi_in_place(a: &mut [f64], vt: &mut [f64], n: usize) -> usize {
    let norm_f = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm_f == 0.0 || n < 2 {
        return 0;
    }
    let target = JACOBI_REL_TOL * norm_f;
    // Rotations below this size cannot keep the off-diagonal mass above target.
    let skip = target / n as f64;
    for sweep in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if (2.0 * off).sqrt() <= target {
            return sweep;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= skip {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                let (head, tail) = a.split_at_mut(q * n);
                let rp = &mut head[p * n..p * n + n];
                let rq = &mut tail[..n];
                rotate_pair(rp, rq, c, s);
                rp[p] = app - t * apq;
                rq[q] = aqq + t * apq;
                rp[q] = 0.0;
                rq[p] = 0.0;
                for k in 0..n {
                    let (vp, vq) = (a[p * n + k], a[q * n + k]);
                    a[k * n + p] = vp;
                    a[k * n + q] = vq;
                }

                let (head, tail) = vt.split_at_mut(q * n);
                rotate_pair(&mut head[p * n..p * n + n], &mut tail[..n], c, s);
            }
        }
    }
    JACOBI_MAX_SWEEPS
}

#[inline]
fn rotate_pair(rp: &mut [f64], rq: &mut [f64], c: f64, s: f64) {
    for (xp, xq) in rp.iter_mut().zip(rq.iter_mut()) {
        let (u, v) = (*xp, *xq);
        *xp = c * u - s * v;
        *xq = s * u + c * v;
    }
}

/// Eigenvalues (unsorted, Jacobi order) and the row-major eigenvector rows.
fn jacobi_raw(m: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = m.nrows();
    // Symmetric: column-major data equals row-major data.
    let mut a = m.as_slice().to_vec();
    let mut vt = vec![0.0; n * n];
    for i in 0..n {
        vt[i * n + i] = 1.0;
    }
    jacobi_in_place(&mut a, &mut vt, n);
    let vals = (0..n).map(|i| a[i * n + i]).collect();
    (vals, vt)
}

/// Full symmetric eigendecomposition, eigenvalues ascending.
///
/// Each eigenvector is normalized so that its entry of largest magnitude is
/// positive (lowest index wins ties), which makes the output reproducible.
pub fn sym_eig(a: &SymMatrix) -> Result<Spectrum> {
    if !a.is_finite() {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    let n = a.n();
    let (vals, vt) = jacobi_raw(a.as_matrix());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]).then(i.cmp(&j)));

    let eigenvalues: Vec<f64> = order.iter().map(|&i| vals[i]).collect();
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        let row = &vt[src * n..src * n + n];
        let mut lead = 0;
        for k in 1..n {
            if row[k].abs() > row[lead].abs() {
                lead = k;
            }
        }
        let sign = if row[lead] < 0.0 { -1.0 } else { 1.0 };
        for k in 0..n {
            eigenvectors[(k, col)] = sign * row[k];
        }
    }

    let min_gap = eigenvalues
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .fold(f64::INFINITY, f64::min);
    let min_gap = if min_gap.is_finite() { min_gap } else { 0.0 };
    let min_alignment_sq = (0..n)
        .map(|j| eigenvectors.column(j).sum().powi(2))
        .fold(f64::INFINITY, f64::min);

    Ok(Spectrum {
        eigenvalues,
        eigenvectors,
        min_gap,
        min_alignment_sq,
    })
}

/// Frobenius-nearest PSD matrix: clip negative eigenvalues to zero.
pub fn psd_project(s: &SymMatrix) -> Result<SymMatrix> {
    let spec = sym_eig(s)?;
    let n = s.n();
    let u = &spec.eigenvectors;
    let mut out = DMatrix::zeros(n, n);
    for (j, &lam) in spec.eigenvalues.iter().enumerate() {
        if lam > 0.0 {
            let col = u.column(j);
            out.ger(lam, &col, &col, 1.0);
        }
    }
    Ok(SymMatrix::from_product(out))
}

/// Smallest eigenvalue of a (numerically) symmetric dense matrix.
pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    let (vals, _) = jacobi_raw(&sym);
    vals.into_iter().fold(f64::INFINITY, f64::min)
}

/// Column-stacking vectorization.
pub fn vec(x: &DMatrix<f64>) -> Vec<f64> {
    // nalgebra stores column-major, which is exactly column stacking.
    x.as_slice().to_vec()
}

/// Inverse of [`vec`]: reshapes a length-`n^2` vector into an `n x n` matrix.
pub fn matz(x: &[f64]) -> Result<DMatrix<f64>> {
    let n = (x.len() as f64).sqrt().round() as usize;
    if n * n != x.len() || n == 0 {
        return Err(Error::invalid(format!(
            "length {} is not a positive perfect square",
            x.len()
        )));
    }
    Ok(DMatrix::from_column_slice(n, n, x))
}

/// Dense Kronecker product of two symmetric matrices, subject to [`KRON_BUDGET`].
pub fn kron(a: &SymMatrix, b: &SymMatrix) -> Result<SymMatrix> {
    let dim = a.n() * b.n();
    if dim > KRON_BUDGET {
        return Err(Error::SizeLimit {
            what: "kronecker dimension",
            got: dim,
            limit: KRON_BUDGET,
        });
    }
    // Symmetric factors give a symmetric product exactly, entry by entry.
    Ok(SymMatrix {
        m: kron_dense(a.as_matrix(), b.as_matrix()),
    })
}

/// Kronecker product of general dense matrices:
/// `(A ⊗ B)[(i*p + k), (j*q + l)] = A[i,j] * B[k,l]`.
pub fn kron_dense(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    DMatrix::from_fn(ar * br, ac * bc, |r, c| {
        a[(r / br, c / bc)] * b[(r % br, c % bc)]
    })
}

/// Smallest eigenvalue of `q` restricted to the orthogonal complement of `x`.
///
/// No kernel check is made; see [`lambda2_restricted`] for the checked version.
pub fn restricted_min_eig(q: &SymMatrix, x: &[f64]) -> Result<f64> {
    let n = q.n();
    if x.len() != n {
        return Err(Error::invalid("vector length does not match matrix"));
    }
    if n == 1 {
        return Ok(f64::INFINITY);
    }
    let basis = complement_basis(x)?;
    let restricted = basis.transpose() * q.as_matrix() * &basis;
    Ok(sym_eig(&SymMatrix::from_product(restricted))?.min())
}

/// Orthonormal basis (as columns) of the orthogonal complement of `x`,
/// taken from a Householder reflector mapping `x` onto a coordinate axis.
pub(crate) fn complement_basis(x: &[f64]) -> Result<DMatrix<f64>> {
    let n = x.len();
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::invalid("complement of a zero vector"));
    }
    let mut w: Vec<f64> = x.iter().map(|v| v / norm).collect();
    let sign = if w[0] >= 0.0 { 1.0 } else { -1.0 };
    w[0] += sign;
    let wn = w.iter().map(|v| v * v).sum::<f64>();
    // H = I - 2 w w^T / (w^T w); columns 1..n of H span x^perp.
    Ok(DMatrix::from_fn(n, n - 1, |i, j| {
        let col = j + 1;
        let id = if i == col { 1.0 } else { 0.0 };
        id - 2.0 * w[i] * w[col] / wn
    }))
}

/// Second-smallest eigenvalue of `q` when `q x = 0`: the minimum of `q` over
/// `span(x)^perp`. Fails when `x` is not a numerical kernel vector.
pub fn lambda2_restricted(q: &SymMatrix, x: &[f64]) -> Result<f64> {
    let norm_x = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if q.n() != x.len() || norm_x == 0.0 {
        return Err(Error::invalid("kernel vector must be non-zero and match Q"));
    }
    let qx = q.as_matrix() * nalgebra::DVector::from_column_slice(x);
    let residual = qx.norm() / norm_x;
    let allowed = KERNEL_TOL * q.frobenius();
    if residual > allowed {
        return Err(Error::KernelMismatch { residual, allowed });
    }
    restricted_min_eig(q, x)
}
