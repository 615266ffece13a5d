//! Command-line interface.
//!
//! Subcommands:
//!   ci        one dataset from CSV files -> one interval as JSON on stdout
//!   simulate  experiment config JSON -> coverage report JSON + CSV
//!   lb        lower-bound curve CSV over a parameter grid
//!   re        restricted-eigenvalue / surrogate report for a dataset
//!
//! Matrix CSV format: plain numeric, comma-separated, no header, row-major
//! (one observation per row for X; one value per line for y and xi).
//!
//! Exit codes: 0 success, 2 config error, 3 solver failure (or a simulate run
//! whose failure fraction exceeds the ceiling).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};

use hdci::certificates::{ReMode, ORACLE_MAX_K, ORACLE_MAX_P};
use hdci::{
    adaptivity_lower_curve, ci_dense, ci_known_design, ci_sparse, classify_loading,
    nonadaptivity_demo, omega_surrogate, restricted_eigenvalue, run_experiment, CiConfig, CiFamily,
    CiMode, Constants, Dataset, Error, ExperimentConfig, LoadingRegime,
};

#[derive(Parser)]
#[command(name = "hdci", version, about = "Confidence intervals for linear functionals in high-dimensional regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Faithful,
    Rescaled,
    OracleNormality,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FamilyArg {
    /// Sparse-loading interval (de-biased estimator).
    Sparse,
    /// Dense-loading interval (plug-in estimator).
    Dense,
    /// Known-design split-sample interval.
    KnownDesign,
    /// Classify the loading first and pick sparse or dense accordingly.
    Auto,
}

#[derive(Args)]
struct ModeOpts {
    /// Interval construction mode.
    #[arg(long, value_enum, default_value = "faithful")]
    mode: ModeArg,
    /// JSON file with prefactor overrides for --mode rescaled.
    #[arg(long)]
    constants: Option<PathBuf>,
}

impl ModeOpts {
    fn to_mode(&self) -> anyhow::Result<CiMode> {
        Ok(match self.mode {
            ModeArg::Faithful => CiMode::Faithful,
            ModeArg::OracleNormality => CiMode::OracleNormality,
            ModeArg::Rescaled => {
                let constants = match &self.constants {
                    Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
                    None => Constants::default(),
                };
                CiMode::RescaledConstants { constants }
            }
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build one confidence interval from CSV inputs.
    Ci {
        /// Design matrix CSV (n rows, p comma-separated columns).
        #[arg(long)]
        x: PathBuf,
        /// Response vector (one value per line).
        #[arg(long)]
        y: PathBuf,
        /// Loading vector (one value per line).
        #[arg(long)]
        xi: PathBuf,
        #[arg(long, value_enum, default_value = "auto")]
        family: FamilyArg,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Assumed sparsity of the regression vector.
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 1.01)]
        m1: f64,
        #[arg(long, default_value_t = 0.9)]
        gamma0: f64,
        /// Known noise level; required by the known-design family.
        #[arg(long)]
        sigma0: Option<f64>,
        /// Override the score-QP constraint level.
        #[arg(long)]
        lambda_n: Option<f64>,
        /// Seed for the known-design sample split.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Loading-classification inputs for --family auto.
        #[arg(long, default_value_t = 0.2)]
        gamma: f64,
        #[arg(long, default_value_t = 1.0)]
        capital_c: f64,
        #[arg(long, default_value_t = 1.0)]
        c_dense: f64,
        #[command(flatten)]
        mode: ModeOpts,
    },
    /// Run a Monte Carlo coverage experiment from a config file.
    Simulate {
        /// ExperimentConfig JSON.
        #[arg(long)]
        config: PathBuf,
        /// Output directory for report.json and report.csv.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        threads: usize,
        /// Exit with code 3 when any cell's failure fraction exceeds this.
        #[arg(long, default_value_t = 0.05)]
        max_failure_fraction: f64,
        /// Override the config's interval mode.
        #[command(flatten)]
        mode: Option<ModeOverride>,
    },
    /// Tabulate the adaptivity lower-bound curve over a grid.
    Lb {
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        p: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        k: Vec<usize>,
        /// Smaller sparsity of the adaptation pair; defaults to
        /// floor((1 - zeta0) k) - 1 clamped at 0.
        #[arg(long)]
        k1: Option<usize>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 0.5)]
        zeta0: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Output directory for lb.csv (also printed to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Restricted-eigenvalue and omega-surrogate report for a dataset.
    Re {
        #[arg(long)]
        x: PathBuf,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 1.0)]
        alpha0: f64,
        /// oracle = exhaustive (p <= 12, k <= 2); heuristic = upper estimate.
        #[arg(long, default_value = "heuristic")]
        re_mode: String,
        /// Eigenvalue plug-ins for the omega surrogate.
        #[arg(long, default_value_t = 1.0)]
        lambda_min: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda_max: f64,
    },
    /// Coverage deficit of a k_small-sized interval at k_large truths.
    Nonadaptivity {
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 500)]
        p: usize,
        #[arg(long, default_value_t = 2)]
        k_small: usize,
        #[arg(long, default_value_t = 25)]
        k_large: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 200)]
        replicates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
}

#[derive(Args)]
struct ModeOverride {
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    constants: Option<PathBuf>,
}

/// Reads a numeric CSV matrix: no header, comma separated, row-major.
fn read_matrix(path: &Path) -> anyhow::Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| anyhow::anyhow!("{}:{}: {e}", path.display(), lineno + 1))?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                anyhow::bail!(
                    "{}:{}: ragged row ({} fields, expected {})",
                    path.display(),
                    lineno + 1,
                    row.len(),
                    first.len()
                );
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        anyhow::bail!("{}: empty matrix", path.display());
    }
    let (n, p) = (rows.len(), rows[0].len());
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(DMatrix::from_row_slice(n, p, &flat))
}

/// Reads a vector: one value per line (single-column CSV).
fn read_vector(path: &Path) -> anyhow::Result<DVector<f64>> {
    let m = read_matrix(path)?;
    if m.ncols() != 1 {
        anyhow::bail!("{}: expected one value per line", path.display());
    }
    Ok(DVector::from_column_slice(m.column(0).as_slice()))
}

/// Exit code 3 is reserved for solver failures; everything else (bad inputs,
/// files, parse errors) is a config error with code 2.
fn is_solver_error(err: &anyhow::Error) -> bool {
    if err.downcast_ref::<FailureCeiling>().is_some() {
        return true;
    }
    if let Some(e) = err.downcast_ref::<Error>() {
        matches!(
            e,
            Error::MaxIterations(_)
                | Error::InfeasibleScoreQp { .. }
                | Error::NotPsd
                | Error::NotSpd
                | Error::DegenerateResponse
                | Error::DegenerateSplit(_)
                | Error::ZeroKappa
                | Error::DivergentChiSq(_)
                | Error::GapDiverges(_)
        )
    } else {
        false
    }
}

#[derive(Debug)]
struct FailureCeiling {
    worst: f64,
    ceiling: f64,
}

impl std::fmt::Display for FailureCeiling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "solver failure fraction {} exceeds ceiling {}",
            self.worst, self.ceiling
        )
    }
}

impl std::error::Error for FailureCeiling {}

fn run() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Ci {
            x,
            y,
            xi,
            family,
            alpha,
            k,
            m1,
            gamma0,
            sigma0,
            lambda_n,
            seed,
            gamma,
            capital_c,
            c_dense,
            mode,
        } => {
            let data = Dataset::new(read_matrix(&x)?, read_vector(&y)?)?;
            let xi = read_vector(&xi)?;
            let cfg = CiConfig {
                alpha,
                k,
                m1,
                gamma0,
                mode: mode.to_mode()?,
                lambda_n_override: lambda_n,
                escalate_lambda_n: None,
            };
            let family = match family {
                FamilyArg::Sparse => CiFamily::Sparse,
                FamilyArg::Dense => CiFamily::Dense,
                FamilyArg::KnownDesign => CiFamily::KnownDesign,
                FamilyArg::Auto => {
                    let loading = classify_loading(&xi, data.p(), k, gamma, capital_c, c_dense)?;
                    match loading.regime {
                        LoadingRegime::Sparse => CiFamily::Sparse,
                        LoadingRegime::Dense => CiFamily::Dense,
                    }
                }
            };
            let interval = match family {
                CiFamily::Sparse => ci_sparse(&data, &xi, &cfg)?,
                CiFamily::Dense => ci_dense(&data, &xi, &cfg)?,
                CiFamily::KnownDesign => {
                    let sigma0 = sigma0.ok_or_else(|| {
                        Error::InvalidConfig("--sigma0 is required for the known-design family".into())
                    })?;
                    ci_known_design(&data, &xi, sigma0, &cfg, seed)?
                }
            };
            println!("{}", serde_json::to_string_pretty(&interval)?);
        }
        Command::Simulate {
            config,
            out,
            threads,
            max_failure_fraction,
            mode,
        } => {
            let mut cfg: ExperimentConfig =
                serde_json::from_str(&std::fs::read_to_string(&config)?)?;
            if let Some(over) = mode {
                if over.mode.is_some() || over.constants.is_some() {
                    let opts = ModeOpts {
                        mode: over.mode.unwrap_or(ModeArg::Faithful),
                        constants: over.constants,
                    };
                    cfg.ci.mode = opts.to_mode()?;
                }
            }
            let report = run_experiment(&cfg, threads)?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("report.json"), report.to_canonical_json())?;
            std::fs::write(out.join("report.csv"), report.to_csv())?;
            if let Some(secs) = report.runtime_seconds {
                eprintln!("runtime_seconds: {secs:.3}");
            }
            print!("{}", report.to_canonical_json());
            let worst = report
                .per_cell
                .iter()
                .map(|c| c.failure_fraction)
                .fold(0.0_f64, f64::max);
            if worst > max_failure_fraction {
                return Err(FailureCeiling {
                    worst,
                    ceiling: max_failure_fraction,
                }
                .into());
            }
        }
        Command::Lb {
            n,
            p,
            k,
            k1,
            alpha,
            zeta0,
            sigma,
            out,
        } => {
            let mut csv = String::from("n,p,k,k1,m,p1,rho,chisq,tv,gap,bound\n");
            for &nv in &n {
                for &pv in &p {
                    for &kv in &k {
                        let k1v = k1.unwrap_or_else(|| {
                            (((1.0 - zeta0) * kv as f64).floor() as usize).saturating_sub(1)
                        });
                        let pt = adaptivity_lower_curve(nv, pv, kv, k1v, alpha, zeta0, sigma)?;
                        csv.push_str(&format!(
                            "{},{},{},{},{},{},{},{},{},{},{}\n",
                            pt.n, pt.p, pt.k, pt.k1, pt.m, pt.p1, pt.rho, pt.chisq, pt.tv,
                            pt.gap, pt.bound
                        ));
                    }
                }
            }
            print!("{csv}");
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("lb.csv"), csv)?;
            }
        }
        Command::Re {
            x,
            k,
            alpha0,
            re_mode,
            lambda_min,
            lambda_max,
        } => {
            let matrix = read_matrix(&x)?;
            let n = matrix.nrows();
            // The RE quantities only look at the design; a placeholder y
            // satisfies the dataset invariants.
            let data = Dataset::new(matrix, DVector::from_element(n, 1.0))?;
            let mode = match re_mode.as_str() {
                "oracle" => ReMode::BruteForceOracle,
                "heuristic" => ReMode::HeuristicUpper,
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "--re-mode must be oracle or heuristic, got {other}"
                    ))
                    .into())
                }
            };
            if mode == ReMode::BruteForceOracle && (data.p() > ORACLE_MAX_P || k > ORACLE_MAX_K) {
                eprintln!(
                    "note: the oracle is limited to p <= {ORACLE_MAX_P}, k <= {ORACLE_MAX_K}"
                );
            }
            let kappa = restricted_eigenvalue(&data, k, alpha0, mode)?;
            let omega = omega_surrogate(
                lambda_min,
                lambda_max,
                &data,
                k,
                true,
                &Constants::default(),
            )?;
            let report = serde_json::json!({
                "kappa": kappa,
                "omega": omega,
            });
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Nonadaptivity {
            n,
            p,
            k_small,
            k_large,
            alpha,
            sigma,
            replicates,
            seed,
            threads,
        } => {
            let report = nonadaptivity_demo(
                n, p, k_small, k_large, alpha, sigma, replicates, seed, threads,
            )?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if is_solver_error(&err) {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
