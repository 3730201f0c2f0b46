//! Exactness condition, explicit dual certificates and their KKT checks.
//!
//! Everything here works in the identity frame: the planted permutation is
//! the identity, `x = vec(I_n)` and `C = A + Delta`. Use
//! [`QapInstance::delta`](crate::instance::QapInstance::delta) to bring an
//! instance into that frame.
//!
//! Block conventions: `S = T (x) I + I (x) K + J (x) H + Z (x) J`, and
//! `Lambda = I (x) diag(mu) + diag(lambda) (x) I` for the tighter relaxation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formulation::{build_cost, CostVariant, SdrVariant};
use crate::linalg::{kron_dense, max_abs, restricted_min_eig, sym_eig, Spectrum, SymMatrix};

/// Tolerance on the block identity `diag(T+K) + (Z+H)1 = diag(Delta^2)`.
pub const BLOCK_IDENTITY_TOL: f64 = 1e-10;
/// Tolerance on `Bx = (M-S)x` and on `B` vanishing on the support of `xx^T`.
pub const B_IDENTITY_TOL: f64 = 1e-10;
/// Tolerance on the closed form of `Q`.
pub const Q_IDENTITY_TOL: f64 = 1e-9;

pub const KKT_B_NONNEG_TOL: f64 = 1e-8;
pub const KKT_SUPPORT_TOL: f64 = 1e-8;
pub const KKT_KERNEL_TOL: f64 = 1e-6;
pub const KKT_LAMBDA2_TOL: f64 = 1e-8;

/// Lemma check target as a fraction of the supplied constant.
pub const LEMMA_FRACTION: f64 = 0.9;
const LEMMA_RANGE_TOL: f64 = 1e-10;
const LEMMA_PRECONDITION_TOL: f64 = 1e-9;
/// Left sides below this (relative to `|A|^2`) count as zero.
const LHS_FLOOR: f64 = 1e-12;

/// Both sides of the deterministic exactness condition
/// `gap^2 * align >= n (|Delta| |A| + |A Delta|_max)`.
#[derive(Clone, Debug)]
pub struct ConditionReport {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs >= rhs` with a nonzero left side; a vanishing gap or alignment never certifies.
    pub holds: bool,
    /// `lhs - rhs`.
    pub margin: f64,
    /// The lambda_2 lower bound, `(2/n) * margin`.
    pub bound_margin: f64,
    pub spectrum: Spectrum,
}

/// `min_{i != j} (AΔ)_ij` and `max_{i != j} (AΔ)_ij`; both zero when `n == 1`.
fn offdiag_extremes(ad: &DMatrix<f64>) -> (f64, f64) {
    let n = ad.nrows();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                lo = lo.min(ad[(i, j)]);
                hi = hi.max(ad[(i, j)]);
            }
        }
    }
    if n < 2 {
        (0.0, 0.0)
    } else {
        (lo, hi)
    }
}

fn check_pair(a: &SymMatrix, delta: &SymMatrix) -> Result<()> {
    if a.n() != delta.n() {
        return Err(Error::invalid(format!(
            "A is {}x{} but Delta is {}x{}",
            a.n(),
            a.n(),
            delta.n(),
            delta.n()
        )));
    }
    if !a.is_finite() || !delta.is_finite() {
        return Err(Error::invalid("A and Delta must be finite"));
    }
    Ok(())
}

pub fn check_exactness_condition(a: &SymMatrix, delta: &SymMatrix) -> Result<ConditionReport> {
    check_pair(a, delta)?;
    let n = a.n() as f64;
    let spectrum = sym_eig(a)?;
    let lhs = spectrum.min_gap.powi(2) * spectrum.min_alignment_sq;
    let a_norm = spectrum.max().abs().max(spectrum.min().abs());
    let ad = a.as_matrix() * delta.as_matrix();
    let rhs = n * (delta.op_norm()? * a_norm + max_abs(&ad));
    let margin = lhs - rhs;
    Ok(ConditionReport {
        lhs,
        rhs,
        holds: lhs >= rhs && lhs > LHS_FLOOR * a_norm.powi(2).max(1.0),
        margin,
        bound_margin: 2.0 * margin / n,
        spectrum,
    })
}

/// `(2/n) gap^2 align - 2|Delta||A| - 2|A Delta|_max`.
pub fn lambda2_bound(a: &SymMatrix, delta: &SymMatrix) -> Result<f64> {
    check_pair(a, delta)?;
    let n = a.n() as f64;
    let spectrum = sym_eig(a)?;
    let ad = a.as_matrix() * delta.as_matrix();
    Ok(
        2.0 / n * spectrum.min_gap.powi(2) * spectrum.min_alignment_sq
            - 2.0 * delta.op_norm()? * a.op_norm()?
            - 2.0 * max_abs(&ad),
    )
}

/// `100 (|A|^2 + n)`, large enough for the lambda_2 bound to hold in practice.
pub fn default_t(a: &SymMatrix) -> Result<f64> {
    Ok(100.0 * (a.op_norm()?.powi(2) + a.n() as f64))
}

fn ones(n: usize) -> DMatrix<f64> {
    DMatrix::from_element(n, n, 1.0)
}

fn ddiag(m: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_diagonal(&m.diagonal())
}

fn identity_lift(n: usize) -> Vec<f64> {
    let mut x = vec![0.0; n * n];
    for j in 0..n {
        x[j * n + j] = 1.0;
    }
    x
}

/// Dense `S = T (x) I + I (x) K + J (x) H + Z (x) J`.
pub fn assemble_s(
    t: &DMatrix<f64>,
    k: &DMatrix<f64>,
    z: &DMatrix<f64>,
    h: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = t.nrows();
    for (name, m) in [("T", t), ("K", k), ("Z", z), ("H", h)] {
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::invalid(format!("block {name} is not {n}x{n}")));
        }
    }
    let id = DMatrix::identity(n, n);
    let j = ones(n);
    Ok(kron_dense(t, &id) + kron_dense(&id, k) + kron_dense(&j, h) + kron_dense(z, &j))
}

/// `mat(S vec(I)) = T^T + K + H J + J Z^T`.
pub fn mat_sx(
    t: &DMatrix<f64>,
    k: &DMatrix<f64>,
    z: &DMatrix<f64>,
    h: &DMatrix<f64>,
) -> DMatrix<f64> {
    let j = ones(t.nrows());
    t.transpose() + k + h * &j + &j * z.transpose()
}

/// Multipliers specific to the bordered relaxation.
#[derive(Clone, Debug)]
pub struct Sdr2Extras {
    pub mu: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Off-diagonal column of the bordered dual block.
    pub q: Vec<f64>,
    /// Corner of the bordered dual block.
    pub z: f64,
    pub t_prime: f64,
}

#[derive(Clone, Debug)]
pub struct DualCertificate {
    pub t_block: DMatrix<f64>,
    pub k_block: DMatrix<f64>,
    pub z_block: DMatrix<f64>,
    pub h_block: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub t: f64,
    pub c: f64,
    pub variant: SdrVariant,
    pub sdr2: Option<Sdr2Extras>,
}

impl DualCertificate {
    pub fn n(&self) -> usize {
        self.t_block.nrows()
    }
}

/// Smallest `c` keeping `B` entrywise nonnegative: `max(0, 2 max_{i != j} (AΔ)_ij)`.
///
/// Off the support of `xx^T`, `n B` has entries `c - 2 (AΔ)_ab`, so this is
/// the default choice.
pub fn nonnegative_c(a: &SymMatrix, delta: &SymMatrix) -> Result<f64> {
    check_pair(a, delta)?;
    let ad = a.as_matrix() * delta.as_matrix();
    Ok((2.0 * offdiag_extremes(&ad).1).max(0.0))
}

/// The alternative rule `max(0, -2 min_{i != j} (AΔ)_ij)`. It can leave
/// negative entries in `B` when `AΔ` has a large positive off-diagonal entry.
pub fn min_rule_c(a: &SymMatrix, delta: &SymMatrix) -> Result<f64> {
    check_pair(a, delta)?;
    let ad = a.as_matrix() * delta.as_matrix();
    Ok((-2.0 * offdiag_extremes(&ad).0).max(0.0))
}

fn invariant(identity: &'static str, residual: f64, allowed: f64) -> Result<()> {
    if residual.is_finite() && residual <= allowed {
        Ok(())
    } else {
        Err(Error::InvariantViolation { identity, residual })
    }
}

/// Worst entry of `B` on the support of `xx^T`.
fn support_violation(b: &DMatrix<f64>, x: &[f64]) -> f64 {
    let support: Vec<usize> = (0..x.len()).filter(|&i| x[i] != 0.0).collect();
    let mut worst = 0.0_f64;
    for &p in &support {
        for &q in &support {
            worst = worst.max(b[(p, q)].abs());
        }
    }
    worst
}

struct Sdr1Parts {
    t_block: DMatrix<f64>,
    k_block: DMatrix<f64>,
    z_block: DMatrix<f64>,
    h_block: DMatrix<f64>,
    m: DMatrix<f64>,
    s: DMatrix<f64>,
    b: DMatrix<f64>,
    /// `Pi (M - S) Pi`.
    q: DMatrix<f64>,
}

fn sdr1_parts(a: &SymMatrix, delta: &SymMatrix, t: f64, c: f64) -> Result<Sdr1Parts> {
    check_pair(a, delta)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid(format!("t must be positive, got {t}")));
    }
    if !c.is_finite() {
        return Err(Error::invalid("c must be finite"));
    }
    let n = a.n();
    let nf = n as f64;
    let am = a.as_matrix();
    let dm = delta.as_matrix();
    let j = ones(n);
    let id = DMatrix::<f64>::identity(n, n);
    let ad = am * dm;

    let t_block = -t * &j + dm * dm + dm * am + &ad - 2.0 * ddiag(&ad) - c * (&j - &id);
    let k_block = -t * &j;
    let z_block = (t / nf) * &j;
    let h_block = z_block.clone();

    let c_mat = SymMatrix::from_lower(am + dm)?;
    let m = build_cost(a, &c_mat, CostVariant::SquaredDifference)?.into_matrix();
    let s = assemble_s(&t_block, &k_block, &z_block, &h_block)?;

    let x = identity_lift(n);
    let xv = DVector::from_column_slice(&x);
    let w = &m - &s;
    let v = &w * &xv;
    let b = (&v * xv.transpose() + &xv * v.transpose()) / nf;
    // Pi W Pi with Pi = I - xx^T / n.
    let pi = DMatrix::<f64>::identity(n * n, n * n) - &xv * xv.transpose() / nf;
    let q = &pi * &w * &pi;

    let diag_residual = {
        let lhs = (&t_block + &k_block).diagonal()
            + (&z_block + &h_block) * DVector::from_element(n, 1.0);
        (lhs - (dm * dm).diagonal()).amax()
    };
    invariant(
        "diag(T+K) + (Z+H)1 = diag(Delta^2)",
        diag_residual,
        BLOCK_IDENTITY_TOL,
    )?;
    let bx_residual = (&b * &xv - &v).amax();
    invariant("Bx = (M-S)x", bx_residual, B_IDENTITY_TOL)?;
    invariant("B o xx^T = 0", support_violation(&b, &x), B_IDENTITY_TOL)?;
    let q_residual = max_abs(&(&q - (&w - &b)));
    invariant("Pi (M-S) Pi = M - S - B", q_residual, Q_IDENTITY_TOL)?;

    Ok(Sdr1Parts {
        t_block,
        k_block,
        z_block,
        h_block,
        m,
        s,
        b,
        q,
    })
}

/// Certificate for the basic relaxation with `c` from [`nonnegative_c`].
pub fn construct_certificate_sdr1(
    a: &SymMatrix,
    delta: &SymMatrix,
    t: f64,
) -> Result<DualCertificate> {
    construct_certificate_sdr1_with_c(a, delta, t, nonnegative_c(a, delta)?)
}

pub fn construct_certificate_sdr1_with_c(
    a: &SymMatrix,
    delta: &SymMatrix,
    t: f64,
    c: f64,
) -> Result<DualCertificate> {
    let p = sdr1_parts(a, delta, t, c)?;
    Ok(DualCertificate {
        t_block: p.t_block,
        k_block: p.k_block,
        z_block: p.z_block,
        h_block: p.h_block,
        b: p.b,
        q: p.q,
        s: p.s,
        t,
        c,
        variant: SdrVariant::I,
        sdr2: None,
    })
}

/// `Lambda = I (x) diag(mu) + diag(lambda) (x) I`.
pub fn assemble_lambda(mu: &[f64], lambda: &[f64]) -> Result<DMatrix<f64>> {
    let n = mu.len();
    if lambda.len() != n {
        return Err(Error::invalid("mu and lambda must have the same length"));
    }
    let id = DMatrix::<f64>::identity(n, n);
    let dmu = DMatrix::from_diagonal(&DVector::from_column_slice(mu));
    let dla = DMatrix::from_diagonal(&DVector::from_column_slice(lambda));
    Ok(kron_dense(&id, &dmu) + kron_dense(&dla, &id))
}

/// `lambda_2(Pi (M - S) Pi)` for the basic certificate blocks; the upper end
/// of the admissible window for `2 t'`.
pub fn sdr2_window(a: &SymMatrix, delta: &SymMatrix, t: f64) -> Result<f64> {
    let p = sdr1_parts(a, delta, t, nonnegative_c(a, delta)?)?;
    restricted_min_eig(&SymMatrix::from_product(p.q), &identity_lift(a.n()))
}

/// Certificate for the bordered relaxation with `mu = lambda = t' 1`.
pub fn construct_certificate_sdr2(
    a: &SymMatrix,
    delta: &SymMatrix,
    t: f64,
    t_prime: f64,
) -> Result<DualCertificate> {
    let c = nonnegative_c(a, delta)?;
    let p = sdr1_parts(a, delta, t, c)?;
    let n = a.n();
    let x = identity_lift(n);
    let lambda2 = restricted_min_eig(&SymMatrix::from_product(p.q.clone()), &x)?;
    if !(t_prime > 0.0 && 2.0 * t_prime < lambda2) {
        return Err(Error::WindowViolation { t_prime, lambda2 });
    }

    let mu = vec![t_prime; n];
    let lambda = vec![t_prime; n];
    let lam = assemble_lambda(&mu, &lambda)?;
    let xv = DVector::from_column_slice(&x);
    let lam_x = DMatrix::from_column_slice(n, n, (&lam * &xv).as_slice());
    let expect = DMatrix::from_diagonal(&DVector::from_iterator(
        n,
        mu.iter().zip(&lambda).map(|(m, l)| m + l),
    ));
    invariant(
        "mat(Lambda x) = diag(lambda + mu)",
        max_abs(&(lam_x - expect)),
        B_IDENTITY_TOL,
    )?;

    let dx = DMatrix::from_diagonal(&xv);
    let id = DMatrix::<f64>::identity(n * n, n * n);
    let q = &p.q - 2.0 * t_prime * (&id - &dx) + 2.0 * t_prime * &dx;
    let qv: DVector<f64> = -(&q * &xv);
    let z = -qv.dot(&xv);

    let recomputed = &p.m - &p.b - &lam - &p.s - 2.0 * DMatrix::from_diagonal(&qv);
    invariant(
        "M = Q + 2 diag(q) + B + Lambda + S",
        max_abs(&(&recomputed - &q)),
        Q_IDENTITY_TOL,
    )?;

    Ok(DualCertificate {
        t_block: p.t_block,
        k_block: p.k_block,
        z_block: p.z_block,
        h_block: p.h_block,
        b: p.b,
        q,
        s: p.s,
        t,
        c,
        variant: SdrVariant::II,
        sdr2: Some(Sdr2Extras {
            mu,
            lambda,
            q: qv.as_slice().to_vec(),
            z,
            t_prime,
        }),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KktReport {
    pub variant: SdrVariant,
    /// Smallest entry of `B`.
    pub b_nonneg_min: f64,
    /// `|B o xx^T|_max`.
    pub b_support_violation: f64,
    /// `|Qx|`, or `|W [x; 1]|` for the bordered block `W`.
    pub q_kernel_residual: f64,
    /// Smallest eigenvalue on the complement of the kernel vector.
    #[serde(rename = "lambda2_Q")]
    pub lambda2_q: f64,
    /// Smallest eigenvalue of the recomputed `Q` itself.
    pub q_min_eigenvalue: f64,
    /// `|Q_recomputed - Q_certificate|_max`, informational.
    pub stationarity_residual: f64,
    pub passes: bool,
}

fn kkt_passes(b_min: f64, support: f64, kernel: f64, lambda2: f64) -> bool {
    b_min >= -KKT_B_NONNEG_TOL
        && support <= KKT_SUPPORT_TOL
        && kernel <= KKT_KERNEL_TOL
        && lambda2 >= -KKT_LAMBDA2_TOL
}

fn check_m(cert: &DualCertificate, m: &SymMatrix) -> Result<usize> {
    let n = cert.n();
    if m.n() != n * n {
        return Err(Error::invalid(format!(
            "M is {}x{} but the certificate has n = {n}",
            m.n(),
            m.n()
        )));
    }
    Ok(n)
}

fn min_eigenvalue_dense(m: DMatrix<f64>) -> Result<f64> {
    Ok(sym_eig(&SymMatrix::from_product(m))?.min())
}

/// Recomputes `Q = M - S - B` from the raw blocks and checks the KKT
/// conditions of the basic relaxation.
pub fn verify_kkt_sdr1(cert: &DualCertificate, m: &SymMatrix) -> Result<KktReport> {
    let n = check_m(cert, m)?;
    let x = identity_lift(n);
    let xv = DVector::from_column_slice(&x);
    let s = assemble_s(&cert.t_block, &cert.k_block, &cert.z_block, &cert.h_block)?;
    let q = m.as_matrix() - &s - &cert.b;
    let b_min = cert.b.min();
    let support = support_violation(&cert.b, &x);
    let kernel = (&q * &xv).norm();
    let qs = SymMatrix::from_product(q.clone());
    let lambda2 = restricted_min_eig(&qs, &x)?;
    Ok(KktReport {
        variant: SdrVariant::I,
        b_nonneg_min: b_min,
        b_support_violation: support,
        q_kernel_residual: kernel,
        lambda2_q: lambda2,
        q_min_eigenvalue: min_eigenvalue_dense(q.clone())?,
        stationarity_residual: max_abs(&(&q - &cert.q)),
        passes: kkt_passes(b_min, support, kernel, lambda2),
    })
}

/// Recomputes `Q = M - B - Lambda - S - 2 diag(q)` and checks the bordered
/// block `[[Q, q], [q^T, z]]` against the kernel vector `[x; 1]`.
pub fn verify_kkt_sdr2(cert: &DualCertificate, m: &SymMatrix) -> Result<KktReport> {
    let n = check_m(cert, m)?;
    let extras = cert
        .sdr2
        .as_ref()
        .ok_or_else(|| Error::invalid("certificate has no bordered multipliers"))?;
    if extras.q.len() != n * n {
        return Err(Error::invalid("bordered column q has the wrong length"));
    }
    let x = identity_lift(n);
    let s = assemble_s(&cert.t_block, &cert.k_block, &cert.z_block, &cert.h_block)?;
    let lam = assemble_lambda(&extras.mu, &extras.lambda)?;
    let qv = DVector::from_column_slice(&extras.q);
    let q = m.as_matrix() - &cert.b - &lam - &s - 2.0 * DMatrix::from_diagonal(&qv);

    let nn = n * n;
    let mut w = DMatrix::zeros(nn + 1, nn + 1);
    w.view_mut((0, 0), (nn, nn)).copy_from(&q);
    for i in 0..nn {
        w[(i, nn)] = extras.q[i];
        w[(nn, i)] = extras.q[i];
    }
    w[(nn, nn)] = extras.z;
    let mut kernel_vec = x.clone();
    kernel_vec.push(1.0);
    let kernel = (&w * DVector::from_column_slice(&kernel_vec)).norm();

    let b_min = cert.b.min();
    let support = support_violation(&cert.b, &x);
    let lambda2 = restricted_min_eig(&SymMatrix::from_product(w), &kernel_vec)?;
    Ok(KktReport {
        variant: SdrVariant::II,
        b_nonneg_min: b_min,
        b_support_violation: support,
        q_kernel_residual: kernel,
        lambda2_q: lambda2,
        q_min_eigenvalue: min_eigenvalue_dense(q.clone())?,
        stationarity_residual: max_abs(&(&q - &cert.q)),
        passes: kkt_passes(b_min, support, kernel, lambda2),
    })
}

/// Dispatches on the certificate variant.
pub fn verify_kkt(cert: &DualCertificate, m: &SymMatrix) -> Result<KktReport> {
    match cert.variant {
        SdrVariant::I => verify_kkt_sdr1(cert, m),
        SdrVariant::II => verify_kkt_sdr2(cert, m),
    }
}

/// `M` for `C = A + Delta` in the identity frame.
pub fn cost_in_identity_frame(a: &SymMatrix, delta: &SymMatrix) -> Result<SymMatrix> {
    check_pair(a, delta)?;
    let c = SymMatrix::from_lower(a.as_matrix() + delta.as_matrix())?;
    build_cost(a, &c, CostVariant::SquaredDifference)
}

/// `P_bar = (P (x) I - I (x) P)^2` with `P = J/n`.
pub fn p_bar(n: usize) -> DMatrix<f64> {
    let p = ones(n) / n as f64;
    let id = DMatrix::<f64>::identity(n, n);
    let d = kron_dense(&p, &id) - kron_dense(&id, &p);
    &d * &d
}

/// `Phi = [u_1 (x) u_1, ..., u_n (x) u_n]` from the eigenvectors of `A`.
pub(crate) fn phi(spectrum: &Spectrum) -> DMatrix<f64> {
    let u = &spectrum.eigenvectors;
    let n = u.nrows();
    DMatrix::from_fn(n * n, n, |r, i| u[(r / n, i)] * u[(r % n, i)])
}

#[derive(Clone, Debug)]
pub struct NoiseFreeLambda2 {
    /// `lambda_2(M + n t P_bar)`.
    pub lambda2_numeric: f64,
    /// `(2/n) gap^2 align`.
    pub bound: f64,
    /// `lambda_min(Phi^T (P_bar + xx^T/n) Phi)`, bounded below by `2 align / n`.
    pub c_prime_numeric: f64,
}

pub fn noise_free_lambda2(a: &SymMatrix, t: f64) -> Result<NoiseFreeLambda2> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid(format!("t must be positive, got {t}")));
    }
    let n = a.n();
    let spectrum = sym_eig(a)?;
    let m = build_cost(a, a, CostVariant::SquaredDifference)?.into_matrix();
    let pb = p_bar(n);
    let q = &m + (n as f64 * t) * &pb;
    let x = identity_lift(n);
    let lambda2 = restricted_min_eig(&SymMatrix::from_product(q), &x)?;

    let f = phi(&spectrum);
    let xv = DVector::from_column_slice(&x);
    let inner = f.transpose() * (&pb + &xv * xv.transpose() / n as f64) * &f;
    let c_prime = min_eigenvalue_dense(inner)?;
    Ok(NoiseFreeLambda2 {
        lambda2_numeric: lambda2,
        bound: 2.0 / n as f64 * spectrum.min_gap.powi(2) * spectrum.min_alignment_sq,
        c_prime_numeric: c_prime,
    })
}

#[derive(Clone, Debug)]
pub struct LemmaCheck {
    pub holds: bool,
    /// Minimum of `P_big A P_big + t P_small` over `range(P_big)`.
    pub measured_c: f64,
    /// `0.9 c`.
    pub required: f64,
}

/// Orthonormal basis of the range of a projector.
fn range_basis(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let spec = sym_eig(&SymMatrix::from_product(p.clone()))?;
    let cols: Vec<usize> = (0..spec.eigenvalues.len())
        .filter(|&i| spec.eigenvalues[i] > 0.5)
        .collect();
    Ok(DMatrix::from_fn(p.nrows(), cols.len(), |r, j| {
        spec.eigenvectors[(r, cols[j])]
    }))
}

fn restricted_min(m: &DMatrix<f64>, basis: &DMatrix<f64>) -> Result<f64> {
    if basis.ncols() == 0 {
        return Ok(f64::INFINITY);
    }
    min_eigenvalue_dense(basis.transpose() * m * basis)
}

/// Numerical form of the projector lemma: if `P_small` projects into
/// `range(P_big)` and `A >= c` on `range(P_big - P_small)`, then
/// `P_big A P_big + t P_small >= 0.9 c` on `range(P_big)` for large `t`.
pub fn lemma_supp_check(
    a: &DMatrix<f64>,
    p_big: &DMatrix<f64>,
    p_small: &DMatrix<f64>,
    t: f64,
    c: f64,
) -> Result<LemmaCheck> {
    let m = a.nrows();
    for (name, mat) in [("A", a), ("P_big", p_big), ("P_small", p_small)] {
        if mat.nrows() != m || mat.ncols() != m {
            return Err(Error::invalid(format!("{name} must be {m}x{m}")));
        }
    }
    if !(t >= 0.0 && t.is_finite() && c.is_finite()) {
        return Err(Error::invalid("t must be nonnegative and c finite"));
    }
    let id = DMatrix::<f64>::identity(m, m);
    let inclusion = max_abs(&(p_small * (&id - p_big)));
    if inclusion > LEMMA_RANGE_TOL {
        return Err(Error::invalid(format!(
            "range(P_small) is not inside range(P_big): residual {inclusion:.3e}"
        )));
    }
    let diff = p_big - p_small;
    let on_diff = restricted_min(a, &range_basis(&diff)?)?;
    let slack = LEMMA_PRECONDITION_TOL * max_abs(a).max(1.0);
    if on_diff < c - slack {
        return Err(Error::invalid(format!(
            "A is only {on_diff:.6e} on range(P_big - P_small), below c = {c:.6e}"
        )));
    }
    let target = p_big * a * p_big + t * p_small;
    let measured = restricted_min(&target, &range_basis(p_big)?)?;
    let required = LEMMA_FRACTION * c;
    Ok(LemmaCheck {
        holds: measured >= required,
        measured_c: measured,
        required,
    })
}

/// The lemma applied to the noise-free certificate of `A`:
/// `A_lemma = M`, `P_big = Pi`, `P_small = P_bar`, `c = (2/n) gap^2 align`.
pub fn lemma_noise_free_configuration(a: &SymMatrix, t: f64) -> Result<LemmaCheck> {
    let n = a.n();
    let spectrum = sym_eig(a)?;
    let m = build_cost(a, a, CostVariant::SquaredDifference)?.into_matrix();
    let xv = DVector::from_column_slice(&identity_lift(n));
    let pi = DMatrix::<f64>::identity(n * n, n * n) - &xv * xv.transpose() / n as f64;
    let c = 2.0 / n as f64 * spectrum.min_gap.powi(2) * spectrum.min_alignment_sq;
    lemma_supp_check(&m, &pi, &p_bar(n), t, c)
}
