use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use qap_sdr::certificate::{
    check_exactness_condition, construct_certificate_sdr1, construct_certificate_sdr1_with_c,
    construct_certificate_sdr2, cost_in_identity_frame, default_t, min_rule_c, sdr2_window,
    verify_kkt_sdr1, verify_kkt_sdr2,
};
use qap_sdr::formulation::{correlation, is_exact, round_to_permutation, CostVariant, SdrVariant};
use qap_sdr::harness::{
    aggregate, check_soundness, read_csv_file, run_sweep_unchecked, solve_instance, write_csv_file,
    SweepConfig,
};
use qap_sdr::instance::{
    brute_force_qap, generate, linear_profile, qap_objective, ModelKind, ModelMeta,
};
use qap_sdr::io::{read_instance, write_instance, CertificateDump, ConditionJson};
use qap_sdr::plot::emit_plot;
use qap_sdr::solver::{SolverSettings, SolverStatus};
use qap_sdr::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_INVALID_CONFIG: u8 = 2;
const EXIT_SOLVER_FAILURE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "qap-sdr",
    version,
    about = "Semidefinite relaxations of noisy QAP instances"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    DiagGaussian,
    DiagPlusWigner,
    CorrelatedWigner,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sdr {
    I,
    Ii,
}

impl From<Sdr> for SdrVariant {
    fn from(s: Sdr) -> Self {
        match s {
            Sdr::I => SdrVariant::I,
            Sdr::Ii => SdrVariant::II,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Cost {
    SquaredDifference,
    NegatedKron,
}

impl From<Cost> for CostVariant {
    fn from(c: Cost) -> Self {
        match c {
            Cost::SquaredDifference => CostVariant::SquaredDifference,
            Cost::NegatedKron => CostVariant::NegatedKron,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CRule {
    /// `max(0, 2 max_{i != j} (A Delta)_ij)`, keeps B nonnegative.
    Nonnegative,
    /// `max(0, -2 min_{i != j} (A Delta)_ij)`.
    Min,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance and write it as JSON.
    Gen {
        #[arg(long, value_enum)]
        model: Model,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated eigenvalues of A for the diagonal models (default 1..n).
        #[arg(long, value_delimiter = ',')]
        lambda_profile: Option<Vec<f64>>,
        /// Wigner diagonal variance for the correlated model.
        #[arg(long)]
        diag_variance: Option<f64>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Solve the relaxation of an instance and report Corr against its truth.
    Solve {
        instance: PathBuf,
        #[arg(long, value_enum, default_value = "i")]
        sdr: Sdr,
        #[arg(long, value_enum, default_value = "squared-difference")]
        cost: Cost,
        /// SolverSettings JSON file.
        #[arg(long)]
        settings: Option<PathBuf>,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Evaluate the exactness condition and build both dual certificates.
    Certify {
        instance: PathBuf,
        /// Defaults to 100 (|A|^2 + n).
        #[arg(long)]
        t: Option<f64>,
        /// Defaults to a quarter of the positivity window.
        #[arg(long)]
        t_prime: Option<f64>,
        #[arg(long, value_enum, default_value = "nonnegative")]
        c_rule: CRule,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Exhaustive QAP optimum for n <= 8.
    Oracle {
        instance: PathBuf,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Run a noise sweep from a SweepConfig JSON file and write the CSV.
    Sweep {
        config: PathBuf,
        /// Overrides `output_path`.
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Plot exactness rate against sigma from a sweep CSV.
    Plot {
        csv: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, default_value = "Exactness rate")]
        title: String,
    },
}

enum Failure {
    Config(String),
    Solver(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInput(_) | Error::Json(_) | Error::SizeLimit { .. } => {
                Failure::Config(e.to_string())
            }
            other => Failure::Other(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)? + "\n";
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

#[derive(Serialize)]
struct SolveOutput {
    status: SolverStatus,
    iterations: usize,
    objective: f64,
    primal_residual: f64,
    dual_residual: f64,
    gap_estimate: f64,
    wall_time_s: f64,
    corr: Option<f64>,
    exact: Option<bool>,
    rounded: Vec<usize>,
    rounded_objective: f64,
}

#[derive(Serialize)]
struct CertifyOutput {
    condition: ConditionJson,
    sdr1: CertificateDump,
    sdr2: Option<CertificateDump>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sdr2_error: Option<String>,
}

#[derive(Serialize)]
struct OracleOutput {
    permutation: Vec<usize>,
    objective: f64,
    truth_objective: Option<f64>,
    truth_is_optimal: Option<bool>,
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Gen {
            model,
            n,
            sigma,
            seed,
            lambda_profile,
            diag_variance,
            out,
        } => {
            let kind = match model {
                Model::DiagGaussian => ModelKind::DiagGaussian,
                Model::DiagPlusWigner => ModelKind::DiagPlusWigner,
                Model::CorrelatedWigner => ModelKind::CorrelatedWigner,
            };
            let lambda_profile = match kind {
                ModelKind::CorrelatedWigner => None,
                _ => Some(lambda_profile.unwrap_or_else(|| linear_profile(n))),
            };
            let meta = ModelMeta {
                kind,
                sigma,
                seed,
                lambda_profile,
                diag_variance,
            };
            let inst = generate(&meta, n)?;
            match out {
                Some(p) => write_instance(&inst, p)?,
                None => println!("{}", qap_sdr::io::instance_to_json(&inst)?),
            }
        }
        Command::Solve {
            instance,
            sdr,
            cost,
            settings,
            max_iters,
            out,
        } => {
            let inst = read_instance(&instance)?;
            let mut s = match settings {
                Some(p) => serde_json::from_str::<SolverSettings>(&std::fs::read_to_string(p)?)
                    .map_err(Error::from)?,
                None => SolverSettings::default(),
            };
            if let Some(m) = max_iters {
                s.max_iters = m;
            }
            s.validate()?;
            let result = solve_instance(&inst, sdr.into(), cost.into(), &s, None)
                .map_err(|e| Failure::Solver(e.to_string()))?;
            let corr = match &inst.truth {
                Some(t) => Some(correlation(&result.x_hat, t)?),
                None => None,
            };
            let rounded = round_to_permutation(&result.x_hat)?;
            let output = SolveOutput {
                status: result.status,
                iterations: result.iterations,
                objective: result.objective,
                primal_residual: result.primal_residual,
                dual_residual: result.dual_residual,
                gap_estimate: result.gap_estimate,
                wall_time_s: result.wall_time,
                corr,
                exact: corr.map(is_exact),
                rounded_objective: qap_objective(&inst.a, &inst.c, &rounded)?,
                rounded: rounded.as_slice().to_vec(),
            };
            emit(&output, out.as_deref())?;
            if result.status != SolverStatus::Solved {
                return Err(Failure::Solver(format!(
                    "solver stopped with status {} after {} iterations",
                    result.status, result.iterations
                )));
            }
        }
        Command::Certify {
            instance,
            t,
            t_prime,
            c_rule,
            out,
        } => {
            let inst = read_instance(&instance)?;
            let (a, delta) = (inst.a.clone(), inst.delta());
            let condition = check_exactness_condition(&a, &delta)?;
            let t = match t {
                Some(t) => t,
                None => default_t(&a)?,
            };
            let m = cost_in_identity_frame(&a, &delta)?;
            let cert1 = match c_rule {
                CRule::Nonnegative => construct_certificate_sdr1(&a, &delta, t)?,
                CRule::Min => {
                    construct_certificate_sdr1_with_c(&a, &delta, t, min_rule_c(&a, &delta)?)?
                }
            };
            let kkt1 = verify_kkt_sdr1(&cert1, &m)?;
            let t_prime = match t_prime {
                Some(tp) => tp,
                None => sdr2_window(&a, &delta, t)? / 4.0,
            };
            let (sdr2, sdr2_error) = match construct_certificate_sdr2(&a, &delta, t, t_prime) {
                Ok(c) => {
                    let kkt = verify_kkt_sdr2(&c, &m)?;
                    (Some(CertificateDump::new(&c, kkt)), None)
                }
                Err(e @ Error::WindowViolation { .. }) => (None, Some(e.to_string())),
                Err(e) => return Err(e.into()),
            };
            let output = CertifyOutput {
                condition: ConditionJson::from(&condition),
                sdr1: CertificateDump::new(&cert1, kkt1),
                sdr2,
                sdr2_error,
            };
            emit(&output, out.as_deref())?;
        }
        Command::Oracle { instance, out } => {
            let inst = read_instance(&instance)?;
            let (perm, objective) = brute_force_qap(&inst.a, &inst.c)?;
            let truth_objective = match &inst.truth {
                Some(t) => Some(qap_objective(&inst.a, &inst.c, t)?),
                None => None,
            };
            let output = OracleOutput {
                permutation: perm.as_slice().to_vec(),
                objective,
                truth_objective,
                truth_is_optimal: truth_objective
                    .map(|v| v <= objective + 1e-9 * (1.0 + objective.abs())),
            };
            emit(&output, out.as_deref())?;
        }
        Command::Sweep {
            config,
            out,
            threads,
        } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| Failure::Config(format!("{}: {e}", config.display())))?;
            let mut cfg = SweepConfig::from_json(&text)?;
            if let Some(p) = out {
                cfg.output_path = p.display().to_string();
            }
            if threads.is_some() {
                cfg.threads = threads;
                cfg.validate()?;
            }
            let records = run_sweep_unchecked(&cfg)?;
            write_csv_file(&records, &cfg.output_path)?;
            println!("sigma  trials  exact  rate   mean_corr  mean_iters");
            for s in aggregate(&records) {
                println!(
                    "{:<6.3} {:>6}  {:>5}  {:.3}  {:>9.6}  {:>10.1}",
                    s.sigma, s.trials, s.exact_count, s.rate, s.mean_corr, s.mean_iterations
                );
            }
            eprintln!("wrote {} records to {}", records.len(), cfg.output_path);
            check_soundness(&records)?;
        }
        Command::Plot { csv, out, title } => {
            let records = read_csv_file(&csv)?;
            emit_plot(&aggregate(&records), &out, &title)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: invalid configuration: {msg}");
            ExitCode::from(EXIT_INVALID_CONFIG)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_SOLVER_FAILURE)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
