//! JSON forms of instances, solutions and certificates. Matrices are flat
//! row-major arrays.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::certificate::{ConditionReport, DualCertificate, KktReport};
use crate::error::{Error, Result};
use crate::formulation::SdrVariant;
use crate::instance::{ModelMeta, Permutation, QapInstance};
use crate::linalg::SymMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceJson {
    pub n: usize,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    #[serde(rename = "C")]
    pub c: Vec<f64>,
    pub truth: Option<Permutation>,
    pub model: ModelMeta,
}

impl From<&QapInstance> for InstanceJson {
    fn from(inst: &QapInstance) -> Self {
        Self {
            n: inst.n,
            a: inst.a.to_row_major(),
            c: inst.c.to_row_major(),
            truth: inst.truth.clone(),
            model: inst.model.clone(),
        }
    }
}

impl TryFrom<InstanceJson> for QapInstance {
    type Error = Error;

    fn try_from(j: InstanceJson) -> Result<Self> {
        let a = SymMatrix::from_row_major(j.n, &j.a)?;
        let c = SymMatrix::from_row_major(j.n, &j.c)?;
        if !a.is_finite() || !c.is_finite() {
            return Err(Error::invalid("instance matrices must be finite"));
        }
        QapInstance::new(a, c, j.truth, j.model)
    }
}

pub fn instance_to_json(inst: &QapInstance) -> Result<String> {
    Ok(serde_json::to_string_pretty(&InstanceJson::from(inst))?)
}

pub fn instance_from_json(text: &str) -> Result<QapInstance> {
    serde_json::from_str::<InstanceJson>(text)?.try_into()
}

pub fn read_instance(path: impl AsRef<Path>) -> Result<QapInstance> {
    instance_from_json(&std::fs::read_to_string(path)?)
}

pub fn write_instance(inst: &QapInstance, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, instance_to_json(inst)? + "\n")?;
    Ok(())
}

pub fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditionJson {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub margin: f64,
    pub lambda2_bound: f64,
    pub eigenvalues: Vec<f64>,
    pub min_gap: f64,
    pub min_alignment_sq: f64,
}

impl From<&ConditionReport> for ConditionJson {
    fn from(r: &ConditionReport) -> Self {
        Self {
            lhs: r.lhs,
            rhs: r.rhs,
            holds: r.holds,
            margin: r.margin,
            lambda2_bound: r.bound_margin,
            eigenvalues: r.spectrum.eigenvalues.clone(),
            min_gap: r.spectrum.min_gap,
            min_alignment_sq: r.spectrum.min_alignment_sq,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertificateDump {
    pub variant: SdrVariant,
    pub n: usize,
    pub t: f64,
    pub c: f64,
    #[serde(rename = "T")]
    pub t_block: Vec<f64>,
    #[serde(rename = "K")]
    pub k_block: Vec<f64>,
    #[serde(rename = "Z")]
    pub z_block: Vec<f64>,
    #[serde(rename = "H")]
    pub h_block: Vec<f64>,
    #[serde(rename = "B")]
    pub b: Vec<f64>,
    #[serde(rename = "Q")]
    pub q: Vec<f64>,
    #[serde(rename = "S")]
    pub s: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    #[serde(rename = "q_vec", skip_serializing_if = "Option::is_none")]
    pub q_vec: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_prime: Option<f64>,
    pub kkt: KktReport,
}

impl CertificateDump {
    pub fn new(cert: &DualCertificate, kkt: KktReport) -> Self {
        let extras = cert.sdr2.as_ref();
        Self {
            variant: cert.variant,
            n: cert.n(),
            t: cert.t,
            c: cert.c,
            t_block: row_major(&cert.t_block),
            k_block: row_major(&cert.k_block),
            z_block: row_major(&cert.z_block),
            h_block: row_major(&cert.h_block),
            b: row_major(&cert.b),
            q: row_major(&cert.q),
            s: row_major(&cert.s),
            mu: extras.map(|e| e.mu.clone()),
            lambda: extras.map(|e| e.lambda.clone()),
            q_vec: extras.map(|e| e.q.clone()),
            z: extras.map(|e| e.z),
            t_prime: extras.map(|e| e.t_prime),
            kkt,
        }
    }
}
