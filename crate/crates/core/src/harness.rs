//! Noise sweeps: per-trial seeding, a bounded worker pool, CSV persistence and
//! per-sigma aggregation.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::certificate::check_exactness_condition;
use crate::error::{Error, Result};
use crate::formulation::{
    build_constraints, build_cost, correlation, is_exact, CostVariant, SdrVariant,
};
use crate::instance::{generate, ModelKind, ModelMeta, QapInstance};
use crate::rng::derive_seed_indexed;
use crate::solver::{
    solve_from, SdpProblem, SolverResult, SolverSettings, SolverStatus, WarmStart,
};

pub const CSV_HEADER: &str =
    "sigma,trial,seed,corr,exact,condition_holds,lambda2_margin,iterations,status,wall_time_s";

/// `0.0, 0.1, ..., 2.0`.
pub fn default_sigma_grid() -> Vec<f64> {
    (0..=20).map(|k| k as f64 / 10.0).collect()
}

fn default_trials() -> usize {
    20
}

fn default_n() -> usize {
    10
}

fn default_output() -> String {
    "sweep.csv".to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Template; `sigma` and `seed` are overwritten per trial.
    pub model: ModelMeta,
    #[serde(default = "default_sigma_grid")]
    pub sigma_grid: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials_per_sigma: usize,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub sdr_variant: SdrVariant,
    #[serde(default)]
    pub cost_variant: CostVariant,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_output")]
    pub output_path: String,
    /// Worker count; `None` uses the available parallelism.
    #[serde(default)]
    pub threads: Option<usize>,
    /// Start each solve of a trial chain from the previous sigma's result.
    #[serde(default)]
    pub warm_start: bool,
    /// Write measured solve times; off keeps the CSV byte-reproducible.
    #[serde(default)]
    pub record_wall_time: bool,
}

impl SweepConfig {
    pub fn new(model: ModelMeta) -> Self {
        Self {
            model,
            sigma_grid: default_sigma_grid(),
            trials_per_sigma: default_trials(),
            n: default_n(),
            sdr_variant: SdrVariant::default(),
            cost_variant: CostVariant::default(),
            solver: SolverSettings::default(),
            master_seed: 0,
            output_path: default_output(),
            threads: None,
            warm_start: false,
            record_wall_time: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma_grid.is_empty() {
            return Err(Error::invalid("sigma_grid must not be empty"));
        }
        if self
            .sigma_grid
            .iter()
            .any(|s| !(s.is_finite() && *s >= 0.0))
        {
            return Err(Error::invalid("sigma_grid entries must be finite and >= 0"));
        }
        if self.sigma_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("sigma_grid must be strictly ascending"));
        }
        if self.trials_per_sigma == 0 {
            return Err(Error::invalid("trials_per_sigma must be >= 1"));
        }
        if self.n < 2 || self.n > crate::solver::MAX_N {
            return Err(Error::invalid(format!(
                "n must lie in 2..={}, got {}",
                crate::solver::MAX_N,
                self.n
            )));
        }
        if self.model.kind == ModelKind::Custom {
            return Err(Error::invalid(
                "sweeps need a generative model, not `custom`",
            ));
        }
        if let Some(p) = &self.model.lambda_profile {
            if p.len() != self.n {
                return Err(Error::invalid(format!(
                    "lambda_profile has {} entries but n = {}",
                    p.len(),
                    self.n
                )));
            }
        }
        if self.threads == Some(0) {
            return Err(Error::invalid("threads must be >= 1"));
        }
        self.solver.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Seed of trial `trial` at grid position `sigma_index`.
    pub fn trial_seed(&self, sigma_index: usize, trial: usize) -> u64 {
        derive_seed_indexed(self.master_seed, &[sigma_index as u64, trial as u64])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub sigma: f64,
    pub trial: usize,
    pub seed: u64,
    pub corr: f64,
    pub exact: bool,
    pub condition_holds: bool,
    /// lambda_2 lower bound of the certificate, `(2/n)(lhs - rhs)`.
    pub lambda2_margin: f64,
    #[serde(rename = "iterations")]
    pub solver_iterations: usize,
    #[serde(rename = "status")]
    pub solver_status: String,
    pub wall_time_s: f64,
}

/// Builds and solves the relaxation of `inst`.
pub fn solve_instance(
    inst: &QapInstance,
    sdr: SdrVariant,
    cost: CostVariant,
    settings: &SolverSettings,
    warm: Option<&WarmStart>,
) -> Result<SolverResult> {
    let m = build_cost(&inst.a, &inst.c, cost)?;
    let problem = SdpProblem::new(m, build_constraints(inst.n, sdr)?)?;
    solve_from(&problem, settings, warm)
}

fn run_trial(
    cfg: &SweepConfig,
    sigma_index: usize,
    trial: usize,
    warm: Option<&WarmStart>,
) -> (TrialRecord, Option<WarmStart>) {
    let sigma = cfg.sigma_grid[sigma_index];
    let seed = cfg.trial_seed(sigma_index, trial);
    let mut record = TrialRecord {
        sigma,
        trial,
        seed,
        corr: f64::NAN,
        exact: false,
        condition_holds: false,
        lambda2_margin: f64::NAN,
        solver_iterations: 0,
        solver_status: SolverStatus::NumericalFailure.as_str().to_string(),
        wall_time_s: 0.0,
    };
    let mut model = cfg.model.clone();
    model.sigma = sigma;
    model.seed = seed;
    let Ok(inst) = generate(&model, cfg.n) else {
        return (record, None);
    };
    if let Ok(cond) = check_exactness_condition(&inst.a, &inst.delta()) {
        record.condition_holds = cond.holds;
        record.lambda2_margin = cond.bound_margin;
    }
    let Ok(result) = solve_instance(&inst, cfg.sdr_variant, cfg.cost_variant, &cfg.solver, warm)
    else {
        return (record, None);
    };
    record.solver_iterations = result.iterations;
    record.solver_status = result.status.as_str().to_string();
    if cfg.record_wall_time {
        record.wall_time_s = result.wall_time;
    }
    if let Ok(corr) = correlation(&result.x_hat, &inst.truth_or_identity()) {
        record.corr = corr;
        record.exact = corr.is_finite() && is_exact(corr);
    }
    let next = (result.status != SolverStatus::NumericalFailure).then(|| WarmStart::from(&result));
    (record, next)
}

/// Runs every `(sigma, trial)` pair and returns records ordered by sigma, then
/// trial. Failed solves are recorded, never raised. No soundness check; see
/// [`run_sweep`].
pub fn run_sweep_unchecked(cfg: &SweepConfig) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    let n_sigma = cfg.sigma_grid.len();
    let trials = cfg.trials_per_sigma;
    // Cold starts parallelize over every pair; warm starts chain along sigma.
    let n_tasks = if cfg.warm_start {
        trials
    } else {
        n_sigma * trials
    };
    let workers = cfg
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |p| p.get()))
        .min(n_tasks)
        .max(1);
    let next = AtomicUsize::new(0);
    let out: Mutex<Vec<(usize, TrialRecord)>> = Mutex::new(Vec::with_capacity(n_sigma * trials));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let task = next.fetch_add(1, Ordering::Relaxed);
                if task >= n_tasks {
                    break;
                }
                let mut local = Vec::new();
                if cfg.warm_start {
                    let mut warm: Option<WarmStart> = None;
                    for si in 0..n_sigma {
                        let (rec, w) = run_trial(cfg, si, task, warm.as_ref());
                        warm = w;
                        local.push((si, rec));
                    }
                } else {
                    let (si, trial) = (task / trials, task % trials);
                    local.push((si, run_trial(cfg, si, trial, None).0));
                }
                out.lock().expect("worker panicked").extend(local);
            });
        }
    });
    let mut records = out.into_inner().expect("worker panicked");
    records.sort_by_key(|(si, r)| (*si, r.trial));
    Ok(records.into_iter().map(|(_, r)| r).collect())
}

/// A converged trial whose exactness condition holds but which is not exact.
///
/// Only `solved` trials are checked: an unconverged iterate says nothing about
/// the relaxation's optimum.
pub fn check_soundness(records: &[TrialRecord]) -> Result<()> {
    match records
        .iter()
        .find(|r| r.condition_holds && !r.exact && r.solver_status == SolverStatus::Solved.as_str())
    {
        Some(r) => Err(Error::SoundnessViolation {
            sigma: r.sigma,
            trial: r.trial,
            corr: r.corr,
        }),
        None => Ok(()),
    }
}

/// [`run_sweep_unchecked`] followed by [`check_soundness`].
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<TrialRecord>> {
    let records = run_sweep_unchecked(cfg)?;
    check_soundness(&records)?;
    Ok(records)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaSummary {
    pub sigma: f64,
    pub trials: usize,
    pub exact_count: usize,
    pub rate: f64,
    /// Mean over trials with a finite Corr; NaN when there are none.
    pub mean_corr: f64,
    pub mean_iterations: f64,
}

/// Per-sigma summary, in order of first appearance.
pub fn aggregate(records: &[TrialRecord]) -> Vec<SigmaSummary> {
    let mut groups: Vec<(f64, Vec<&TrialRecord>)> = Vec::new();
    for r in records {
        match groups
            .iter_mut()
            .find(|(s, _)| s.to_bits() == r.sigma.to_bits())
        {
            Some((_, g)) => g.push(r),
            None => groups.push((r.sigma, vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|(sigma, g)| {
            let trials = g.len();
            let exact_count = g.iter().filter(|r| r.exact).count();
            let finite: Vec<f64> = g.iter().map(|r| r.corr).filter(|c| c.is_finite()).collect();
            let mean_corr = if finite.is_empty() {
                f64::NAN
            } else {
                finite.iter().sum::<f64>() / finite.len() as f64
            };
            SigmaSummary {
                sigma,
                trials,
                exact_count,
                rate: exact_count as f64 / trials as f64,
                mean_corr,
                mean_iterations: g.iter().map(|r| r.solver_iterations as f64).sum::<f64>()
                    / trials as f64,
            }
        })
        .collect()
}

pub fn write_csv<W: std::io::Write>(records: &[TrialRecord], sink: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(sink);
    w.write_record(CSV_HEADER.split(','))?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string(records: &[TrialRecord]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(records, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::invalid(e.to_string()))
}

pub fn write_csv_file(records: &[TrialRecord], path: impl AsRef<Path>) -> Result<()> {
    write_csv(records, std::fs::File::create(path)?)
}

pub fn read_csv<R: std::io::Read>(source: R) -> Result<Vec<TrialRecord>> {
    let mut rd = csv::Reader::from_reader(source);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::invalid(format!(
            "unexpected CSV header `{}`",
            header.join(",")
        )));
    }
    rd.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn read_csv_file(path: impl AsRef<Path>) -> Result<Vec<TrialRecord>> {
    read_csv(std::fs::File::open(path)?)
}
