//! QAP instances under the signal-plus-noise model `C = Π^T (A + Δ) Π`,
//! the three random models used in the experiments, and the brute-force oracle.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::rng::SplitMix64;

/// Largest `n` accepted by [`brute_force_qap`] unless a higher cap is passed.
pub const BRUTE_FORCE_MAX_N: usize = 8;

/// Diagonal variance of the Wigner matrices in the correlated Wigner model
/// (GOE convention: off-diagonal variance 1, diagonal variance 2).
pub const GOE_DIAG_VARIANCE: f64 = 2.0;

/// A bijection on `0..n`. The permutation matrix has `Π[sigma[j], j] = 1`, so
/// column `j` of `Π` is `e_{sigma[j]}` and `vec(Π)` has a one at `j*n + sigma[j]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation {
    sigma: Vec<usize>,
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;

    fn try_from(sigma: Vec<usize>) -> Result<Self> {
        Permutation::new(sigma)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.sigma
    }
}

impl Permutation {
    pub fn new(sigma: Vec<usize>) -> Result<Self> {
        let n = sigma.len();
        let mut seen = vec![false; n];
        for &s in &sigma {
            if s >= n || seen[s] {
                return Err(Error::invalid(format!("{sigma:?} is not a permutation")));
            }
            seen[s] = true;
        }
        Ok(Self { sigma })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            sigma: (0..n).collect(),
        }
    }

    pub fn random(n: usize, rng: &mut SplitMix64) -> Self {
        Self {
            sigma: rng.permutation(n),
        }
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.sigma
    }

    pub fn apply(&self, j: usize) -> usize {
        self.sigma[j]
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.len()];
        for (j, &s) in self.sigma.iter().enumerate() {
            inv[s] = j;
        }
        Self { sigma: inv }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut p = DMatrix::zeros(n, n);
        for (j, &s) in self.sigma.iter().enumerate() {
            p[(s, j)] = 1.0;
        }
        p
    }

    /// `x = vec(Π)`.
    pub fn lifted(&self) -> Vec<f64> {
        let n = self.len();
        let mut x = vec![0.0; n * n];
        for (j, &s) in self.sigma.iter().enumerate() {
            x[j * n + s] = 1.0;
        }
        x
    }

    /// Number of fixed points of `self^{-1} ∘ other`, i.e. `<vec Π_self, vec Π_other>`.
    pub fn agreement(&self, other: &Permutation) -> usize {
        self.sigma
            .iter()
            .zip(other.sigma.iter())
            .filter(|(a, b)| a == b)
            .count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    DiagGaussian,
    DiagPlusWigner,
    CorrelatedWigner,
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub kind: ModelKind,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub lambda_profile: Option<Vec<f64>>,
    /// Variance of the Wigner diagonal, recorded for the correlated Wigner model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diag_variance: Option<f64>,
}

impl ModelMeta {
    pub fn custom() -> Self {
        Self {
            kind: ModelKind::Custom,
            sigma: 0.0,
            seed: 0,
            lambda_profile: None,
            diag_variance: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct QapInstance {
    pub n: usize,
    pub a: SymMatrix,
    pub c: SymMatrix,
    pub truth: Option<Permutation>,
    pub model: ModelMeta,
}

impl QapInstance {
    pub fn new(
        a: SymMatrix,
        c: SymMatrix,
        truth: Option<Permutation>,
        model: ModelMeta,
    ) -> Result<Self> {
        let n = a.n();
        if c.n() != n {
            return Err(Error::invalid(format!(
                "A is {n}x{n} but C is {0}x{0}",
                c.n()
            )));
        }
        if let Some(p) = &truth {
            if p.len() != n {
                return Err(Error::invalid("truth permutation has the wrong length"));
            }
        }
        if model.sigma < 0.0 || !model.sigma.is_finite() {
            return Err(Error::invalid("model sigma must be finite and >= 0"));
        }
        Ok(Self {
            n,
            a,
            c,
            truth,
            model,
        })
    }

    /// The truth, or the identity when the instance carries none.
    pub fn truth_or_identity(&self) -> Permutation {
        self.truth
            .clone()
            .unwrap_or_else(|| Permutation::identity(self.n))
    }

    /// Noise in the frame of `A`: `Δ = Π C Π^T − A`.
    pub fn delta(&self) -> SymMatrix {
        let p = self.truth_or_identity();
        let inv = p.inverse();
        // (Π C Π^T)_{ab} = C_{σ^{-1}(a) σ^{-1}(b)}
        SymMatrix::from_fn(self.n, |a, b| {
            self.c.get(inv.apply(a), inv.apply(b)) - self.a.get(a, b)
        })
        .expect("n >= 1")
    }
}

/// `Π^T (A + Δ) Π`, entry `(i, j)` equal to `(A + Δ)[σ(i), σ(j)]`.
pub fn apply_model(a: &SymMatrix, delta: &SymMatrix, perm: &Permutation) -> Result<SymMatrix> {
    let n = a.n();
    if delta.n() != n || perm.len() != n {
        return Err(Error::invalid("apply_model: dimension mismatch"));
    }
    SymMatrix::from_fn(n, |i, j| {
        let (si, sj) = (perm.apply(i), perm.apply(j));
        a.get(si, sj) + delta.get(si, sj)
    })
}

/// `||A Π − Π C||_F^2`.
pub fn qap_objective(a: &SymMatrix, c: &SymMatrix, perm: &Permutation) -> Result<f64> {
    let n = a.n();
    if c.n() != n || perm.len() != n {
        return Err(Error::invalid("qap_objective: dimension mismatch"));
    }
    Ok(objective_unchecked(a, c, perm.as_slice()))
}

fn objective_unchecked(a: &SymMatrix, c: &SymMatrix, sigma: &[usize]) -> f64 {
    let n = sigma.len();
    let mut total = 0.0;
    for j in 0..n {
        for i in 0..n {
            let d = a.get(sigma[i], sigma[j]) - c.get(i, j);
            total += d * d;
        }
    }
    total
}

/// Exhaustive minimization of [`qap_objective`] for `n <= BRUTE_FORCE_MAX_N`.
pub fn brute_force_qap(a: &SymMatrix, c: &SymMatrix) -> Result<(Permutation, f64)> {
    brute_force_qap_with_limit(a, c, BRUTE_FORCE_MAX_N)
}

/// Enumerates permutations in lexicographic order; the first minimizer wins ties.
pub fn brute_force_qap_with_limit(
    a: &SymMatrix,
    c: &SymMatrix,
    n_max: usize,
) -> Result<(Permutation, f64)> {
    let n = a.n();
    if c.n() != n {
        return Err(Error::invalid("brute_force_qap: dimension mismatch"));
    }
    if n > n_max {
        return Err(Error::SizeLimit {
            what: "brute-force n",
            got: n,
            limit: n_max,
        });
    }
    let mut sigma: Vec<usize> = (0..n).collect();
    let mut best = sigma.clone();
    let mut best_val = objective_unchecked(a, c, &sigma);
    while next_permutation(&mut sigma) {
        let v = objective_unchecked(a, c, &sigma);
        if v < best_val {
            best_val = v;
            best.copy_from_slice(&sigma);
        }
    }
    Ok((Permutation { sigma: best }, best_val))
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// `λ_k = k` for `k = 1..=n`.
pub fn linear_profile(n: usize) -> Vec<f64> {
    (1..=n).map(|k| k as f64).collect()
}

fn check_common(n: usize, sigma: f64) -> Result<()> {
    if n < 2 {
        return Err(Error::invalid(format!("n must be >= 2, got {n}")));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!(
            "sigma must be finite and >= 0, got {sigma}"
        )));
    }
    Ok(())
}

fn check_profile(n: usize, profile: &[f64]) -> Result<()> {
    if profile.len() != n {
        return Err(Error::invalid(format!(
            "lambda profile has {} entries, expected {n}",
            profile.len()
        )));
    }
    if profile.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("lambda profile must be finite"));
    }
    Ok(())
}

/// Symmetric Gaussian matrix: `N(0, 1)` above the diagonal (mirrored),
/// `N(0, diag_variance)` on it. Off-diagonals are drawn first, row by row.
fn wigner(n: usize, diag_variance: f64, rng: &mut SplitMix64) -> SymMatrix {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            m[(i, j)] = rng.standard_normal();
        }
    }
    let sd = diag_variance.sqrt();
    for i in 0..n {
        m[(i, i)] = if sd > 0.0 {
            sd * rng.standard_normal()
        } else {
            0.0
        };
    }
    SymMatrix::from_lower(m).expect("n >= 1")
}

fn assemble(a: SymMatrix, delta: SymMatrix, seed: u64, model: ModelMeta) -> Result<QapInstance> {
    let truth = Permutation::random(a.n(), &mut SplitMix64::from_tag(seed, "perm"));
    let c = apply_model(&a, &delta, &truth)?;
    QapInstance::new(a, c, Some(truth), model)
}

/// `A = diag(λ)`, `Δ = σ diag(w)` with `w` standard Gaussian.
pub fn gen_diag_gaussian(
    n: usize,
    lambda_profile: &[f64],
    sigma: f64,
    seed: u64,
) -> Result<QapInstance> {
    check_common(n, sigma)?;
    check_profile(n, lambda_profile)?;
    let mut noise = SplitMix64::from_tag(seed, "noise");
    let w: Vec<f64> = (0..n).map(|_| sigma * noise.standard_normal()).collect();
    let model = ModelMeta {
        kind: ModelKind::DiagGaussian,
        sigma,
        seed,
        lambda_profile: Some(lambda_profile.to_vec()),
        diag_variance: None,
    };
    assemble(
        SymMatrix::diag(lambda_profile),
        SymMatrix::diag(&w),
        seed,
        model,
    )
}

/// `A = diag(λ)`, `Δ = σ W` with `W` a Wigner matrix with zero diagonal.
pub fn gen_diag_plus_wigner(
    n: usize,
    lambda_profile: &[f64],
    sigma: f64,
    seed: u64,
) -> Result<QapInstance> {
    check_common(n, sigma)?;
    check_profile(n, lambda_profile)?;
    let w = wigner(n, 0.0, &mut SplitMix64::from_tag(seed, "noise"));
    let delta = SymMatrix::from_lower(w.as_matrix() * sigma)?;
    let model = ModelMeta {
        kind: ModelKind::DiagPlusWigner,
        sigma,
        seed,
        lambda_profile: Some(lambda_profile.to_vec()),
        diag_variance: Some(0.0),
    };
    assemble(SymMatrix::diag(lambda_profile), delta, seed, model)
}

/// `A` and `W` independent Wigner matrices, `Δ = σ W`, GOE diagonal convention.
pub fn gen_correlated_wigner(n: usize, sigma: f64, seed: u64) -> Result<QapInstance> {
    gen_correlated_wigner_with_diag_variance(n, sigma, seed, GOE_DIAG_VARIANCE)
}

pub fn gen_correlated_wigner_with_diag_variance(
    n: usize,
    sigma: f64,
    seed: u64,
    diag_variance: f64,
) -> Result<QapInstance> {
    check_common(n, sigma)?;
    if diag_variance.is_nan() || diag_variance < 0.0 {
        return Err(Error::invalid("diagonal variance must be >= 0"));
    }
    let a = wigner(n, diag_variance, &mut SplitMix64::from_tag(seed, "signal"));
    let w = wigner(n, diag_variance, &mut SplitMix64::from_tag(seed, "noise"));
    let delta = SymMatrix::from_lower(w.as_matrix() * sigma)?;
    let model = ModelMeta {
        kind: ModelKind::CorrelatedWigner,
        sigma,
        seed,
        lambda_profile: None,
        diag_variance: Some(diag_variance),
    };
    assemble(a, delta, seed, model)
}

/// Regenerates an instance from its model metadata.
pub fn generate(model: &ModelMeta, n: usize) -> Result<QapInstance> {
    let profile = || {
        model
            .lambda_profile
            .clone()
            .unwrap_or_else(|| linear_profile(n))
    };
    match model.kind {
        ModelKind::DiagGaussian => gen_diag_gaussian(n, &profile(), model.sigma, model.seed),
        ModelKind::DiagPlusWigner => gen_diag_plus_wigner(n, &profile(), model.sigma, model.seed),
        ModelKind::CorrelatedWigner => gen_correlated_wigner_with_diag_variance(
            n,
            model.sigma,
            model.seed,
            model.diag_variance.unwrap_or(GOE_DIAG_VARIANCE),
        ),
        ModelKind::Custom => Err(Error::invalid("custom instances cannot be generated")),
    }
}
