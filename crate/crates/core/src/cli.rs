//! Command-line driver: sweep orchestration (`simulate`), single-dataset
//! estimation (`estimate`), and the numeric self-checks (`verify`).
//!
//! Configuration comes from an optional JSON file of flat dotted keys
//! mirroring the flags; flags take precedence. The effective configuration
//! is echoed to `<out>/config.resolved.json`.

use crate::data::Dataset;
use crate::dgp::{generate, DgpSpec, TreatmentMechanism};
use crate::glm::{fit_logistic_lasso, fit_models, lasso_kkt_gaps, select_lambda_cv, OutcomeFit};
use crate::harness::{
    estimate_dataset, run_sweep_to_dir, summary_csv, write_atomic, Estimator, SweepConfig,
};
use crate::svg::render_metric_chart;
use crate::targeting::{verify_submodel_scores, TolMode};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "sptmle",
    about = "Targeted estimation of the treatment-specific mean: HAL, relaxed HAL, TMLE, and score-preserving TMLE, with a seeded simulation harness."
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte Carlo sweep and write replicates.csv / summary.csv.
    Simulate(RunArgs),
    /// Run all configured estimators on a w1,w2,a,y CSV dataset.
    Estimate {
        /// Input dataset (CSV with header w1,w2,a,y).
        input_csv: PathBuf,
        #[command(flatten)]
        args: RunArgs,
    },
    /// Run the finite-difference submodel-score, lasso-KKT, and
    /// relaxed-score checks on a freshly generated dataset.
    Verify(VerifyArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// JSON config file with flat dotted keys mirroring the flags.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Treatment mechanism(s): linear|sinusoidal|step, comma-separated, or `all`.
    #[arg(long)]
    dgp: Option<String>,

    /// Single sample size (shorthand for a one-element --n-grid).
    #[arg(long)]
    n: Option<usize>,

    /// Comma-separated strictly increasing sample sizes.
    #[arg(long = "n-grid", value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,

    /// Replicates per (dgp, n) cell.
    #[arg(long)]
    reps: Option<usize>,

    /// Base seed of the sweep.
    #[arg(long)]
    seed: Option<u64>,

    /// Step size of the score-preserving update.
    #[arg(long)]
    delta: Option<f64>,

    /// Targeting tolerance mode: scaled (1/(sqrt(n) ln n)) or fixed.
    #[arg(long = "tol-mode")]
    tol_mode: Option<String>,

    /// Fixed targeting tolerance (used with --tol-mode fixed).
    #[arg(long = "tol-fixed")]
    tol_fixed: Option<f64>,

    /// Cap on score-preserving update steps.
    #[arg(long = "max-iters")]
    max_iters: Option<usize>,

    /// Lower propensity truncation bound.
    #[arg(long = "g-trunc-lower")]
    g_trunc_lower: Option<f64>,

    /// Upper propensity truncation bound.
    #[arg(long = "g-trunc-upper")]
    g_trunc_upper: Option<f64>,

    /// Cross-validation folds for penalty selection.
    #[arg(long = "cv-folds")]
    cv_folds: Option<usize>,

    /// Number of points on the penalty grid.
    #[arg(long = "lambda-grid-size")]
    lambda_grid_size: Option<usize>,

    /// Outcome-model fitting population: all or treated_only.
    #[arg(long = "outcome-fit")]
    outcome_fit: Option<String>,

    /// Estimator subset: hal,relaxed_hal,tmle,sp_tmle.
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<String>>,

    /// Parallel workers (fallback: SPTMLE_WORKERS environment variable).
    #[arg(long)]
    workers: Option<usize>,

    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Also render bias/variance/mse/coverage vs n charts per DGP.
    #[arg(long = "emit-svg")]
    emit_svg: bool,

    /// Dump per-iteration targeting score traces under <out>/traces/.
    #[arg(long = "emit-traces")]
    emit_traces: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    run: RunArgs,

    /// Finite-difference probe step.
    #[arg(long, default_value_t = 1e-5)]
    probe: f64,

    /// Pass/fail tolerance for the finite-difference check.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(#[from] crate::data::DataError),
    #[error("{0}")]
    Harness(#[from] crate::harness::HarnessError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

struct Resolved {
    sweep: SweepConfig<f64>,
    out: PathBuf,
    emit_svg: bool,
}

fn parse_dgps(s: &str) -> Result<Vec<TreatmentMechanism>, CliError> {
    if s == "all" {
        return Ok(TreatmentMechanism::ALL.to_vec());
    }
    s.split(',')
        .map(|part| {
            TreatmentMechanism::parse(part.trim())
                .ok_or_else(|| CliError::Config(format!("unknown dgp `{part}`")))
        })
        .collect()
}

fn file_value(cfg: &serde_json::Value, key: &str) -> Option<serde_json::Value> {
    cfg.get(key).cloned()
}

macro_rules! pick {
    ($flag:expr, $file:expr, $key:literal, $conv:expr) => {
        match (&$flag, file_value($file, $key)) {
            (Some(v), _) => Some(v.clone()),
            (None, Some(v)) => Some($conv(v)?),
            (None, None) => None,
        }
    };
}

fn resolve(args: &RunArgs) -> Result<Resolved, CliError> {
    let file: serde_json::Value = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str(&text).map_err(|e| {
                CliError::Config(format!(
                    "{}:{}:{}: invalid config JSON: {e}",
                    path.display(),
                    e.line(),
                    e.column()
                ))
            })?
        }
        None => serde_json::Value::Object(Default::default()),
    };
    let as_f64 = |v: serde_json::Value| -> Result<f64, CliError> {
        v.as_f64()
            .ok_or_else(|| CliError::Config(format!("expected number, got {v}")))
    };
    let as_u64 = |v: serde_json::Value| -> Result<u64, CliError> {
        v.as_u64()
            .ok_or_else(|| CliError::Config(format!("expected integer, got {v}")))
    };
    let as_usize = |v: serde_json::Value| -> Result<usize, CliError> { Ok(as_u64(v)? as usize) };
    let as_str = |v: serde_json::Value| -> Result<String, CliError> {
        v.as_str()
            .map(str::to_owned)
            .ok_or_else(|| CliError::Config(format!("expected string, got {v}")))
    };

    let mut sweep = SweepConfig::<f64>::default();

    let dgp_str = pick!(args.dgp, &file, "dgp", as_str);
    if let Some(s) = dgp_str {
        sweep.dgps = parse_dgps(&s)?;
    }
    let n_grid: Option<Vec<usize>> = match (&args.n_grid, file_value(&file, "n-grid")) {
        (Some(v), _) => Some(v.clone()),
        (None, Some(v)) => Some(
            v.as_array()
                .ok_or_else(|| CliError::Config("n-grid must be an array".into()))?
                .iter()
                .map(|x| {
                    x.as_u64()
                        .map(|u| u as usize)
                        .ok_or_else(|| CliError::Config("n-grid entries must be integers".into()))
                })
                .collect::<Result<_, _>>()?,
        ),
        (None, None) => None,
    };
    if let Some(grid) = n_grid {
        sweep.n_grid = grid;
    }
    if let Some(n) = pick!(args.n, &file, "n", as_usize) {
        sweep.n_grid = vec![n];
    }
    if let Some(v) = pick!(args.reps, &file, "reps", as_usize) {
        sweep.reps = v;
    }
    if let Some(v) = pick!(args.seed, &file, "seed", as_u64) {
        sweep.base_seed = v;
    }
    if let Some(v) = pick!(args.delta, &file, "delta", as_f64) {
        sweep.targeting.delta = v;
    }
    if let Some(v) = pick!(args.tol_mode, &file, "tol-mode", as_str) {
        sweep.targeting.tol_mode = match v.as_str() {
            "scaled" => TolMode::Scaled,
            "fixed" => TolMode::Fixed,
            other => return Err(CliError::Config(format!("unknown tol-mode `{other}`"))),
        };
    }
    if let Some(v) = pick!(args.tol_fixed, &file, "tol-fixed", as_f64) {
        sweep.targeting.tol_fixed = v;
    }
    if let Some(v) = pick!(args.max_iters, &file, "max-iters", as_usize) {
        sweep.targeting.max_iters = v;
    }
    if let Some(v) = pick!(args.g_trunc_lower, &file, "g-trunc-lower", as_f64) {
        sweep.fit.g_trunc_lower = v;
    }
    if let Some(v) = pick!(args.g_trunc_upper, &file, "g-trunc-upper", as_f64) {
        sweep.fit.g_trunc_upper = v;
    }
    if let Some(v) = pick!(args.cv_folds, &file, "cv-folds", as_usize) {
        sweep.fit.cv_folds = v;
    }
    if let Some(v) = pick!(args.lambda_grid_size, &file, "lambda-grid-size", as_usize) {
        sweep.fit.lambda_grid_size = v;
    }
    if let Some(v) = pick!(args.outcome_fit, &file, "outcome-fit", as_str) {
        sweep.fit.outcome_fit = OutcomeFit::parse(&v)
            .ok_or_else(|| CliError::Config(format!("unknown outcome-fit `{v}`")))?;
    }
    let est_strings: Option<Vec<String>> = match (&args.estimators, file_value(&file, "estimators"))
    {
        (Some(v), _) => Some(v.clone()),
        (None, Some(v)) => Some(
            v.as_array()
                .ok_or_else(|| CliError::Config("estimators must be an array".into()))?
                .iter()
                .map(|x| {
                    x.as_str().map(str::to_owned).ok_or_else(|| {
                        CliError::Config("estimators entries must be strings".into())
                    })
                })
                .collect::<Result<_, _>>()?,
        ),
        (None, None) => None,
    };
    if let Some(list) = est_strings {
        sweep.estimators = list
            .iter()
            .map(|s| {
                Estimator::parse(s.trim())
                    .ok_or_else(|| CliError::Config(format!("unknown estimator `{s}`")))
            })
            .collect::<Result<_, _>>()?;
    }
    let env_workers = std::env::var("SPTMLE_WORKERS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok());
    sweep.workers = pick!(args.workers, &file, "workers", as_usize).or(env_workers);
    sweep.emit_traces = args.emit_traces
        || file_value(&file, "emit-traces")
            .and_then(|v| v.as_bool())
            .unwrap_or(false);

    let out = match (&args.out, file_value(&file, "out")) {
        (Some(p), _) => p.clone(),
        (None, Some(v)) => PathBuf::from(as_str(v)?),
        (None, None) => PathBuf::from("out"),
    };
    let emit_svg = args.emit_svg
        || file_value(&file, "emit-svg")
            .and_then(|v| v.as_bool())
            .unwrap_or(false);

    Ok(Resolved {
        sweep,
        out,
        emit_svg,
    })
}

fn resolved_json(r: &Resolved) -> serde_json::Value {
    let s = &r.sweep;
    serde_json::json!({
        "dgp": s.dgps.iter().map(|d| d.name()).collect::<Vec<_>>().join(","),
        "n-grid": s.n_grid,
        "reps": s.reps,
        "seed": s.base_seed,
        "estimators": s.estimators.iter().map(|e| e.name()).collect::<Vec<_>>(),
        "delta": s.targeting.delta,
        "tol-mode": match s.targeting.tol_mode { TolMode::Scaled => "scaled", TolMode::Fixed => "fixed" },
        "tol-fixed": s.targeting.tol_fixed,
        "max-iters": s.targeting.max_iters,
        "g-trunc-lower": s.fit.g_trunc_lower,
        "g-trunc-upper": s.fit.g_trunc_upper,
        "cv-folds": s.fit.cv_folds,
        "lambda-grid-size": s.fit.lambda_grid_size,
        "outcome-fit": match s.fit.outcome_fit { OutcomeFit::All => "all", OutcomeFit::TreatedOnly => "treated_only" },
        "workers": s.workers,
        "emit-traces": s.emit_traces,
        "emit-svg": r.emit_svg,
        "out": r.out.to_string_lossy(),
    })
}

fn echo_config(r: &Resolved) -> Result<(), CliError> {
    let body = serde_json::to_string_pretty(&resolved_json(r)).expect("serializable");
    write_atomic(&r.out.join("config.resolved.json"), body.as_bytes())?;
    Ok(())
}

fn cmd_simulate(args: &RunArgs) -> Result<i32, CliError> {
    let resolved = resolve(args)?;
    resolved.sweep.validate()?;
    std::fs::create_dir_all(&resolved.out)?;
    echo_config(&resolved)?;
    let (outputs, fully_failed_cells) = run_sweep_to_dir(&resolved.sweep, &resolved.out)?;
    let failed_rows = outputs.rows.iter().filter(|r| r.report.is_none()).count();
    if failed_rows > 0 {
        eprintln!(
            "warning: {failed_rows} replicate-estimator runs failed (recorded in replicates.csv / n_failed)"
        );
    }
    if resolved.emit_svg {
        for &dgp in &resolved.sweep.dgps {
            for metric in ["bias", "variance", "mse", "coverage"] {
                let subset: Vec<_> = outputs.summaries.iter().filter(|s| s.dgp == dgp).collect();
                let svg = render_metric_chart(&subset, metric, &format!("{metric} vs n ({dgp})"));
                write_atomic(
                    &resolved.out.join(format!("{metric}_{dgp}.svg")),
                    svg.as_bytes(),
                )?;
            }
        }
    }
    println!("{}", summary_csv(&outputs.summaries).trim_end());
    Ok(if fully_failed_cells == 0 { 0 } else { 1 })
}

fn cmd_estimate(input: &Path, args: &RunArgs) -> Result<i32, CliError> {
    let resolved = resolve(args)?;
    std::fs::create_dir_all(&resolved.out)?;
    echo_config(&resolved)?;
    let file = std::fs::File::open(input)?;
    let data: Dataset<f64> = Dataset::read_csv(file)?;
    let rows = estimate_dataset(&data, &resolved.sweep);
    let header =
        "estimator,psi_hat,se,ci_lower,ci_upper,eif_mean,max_score_residual,iterations,error";
    let mut body = String::from(header);
    body.push('\n');
    for r in &rows {
        let line = match &r.report {
            Some(rep) => format!(
                "{},{},{},{},{},{},{},{},",
                r.estimator,
                rep.psi_hat,
                rep.se.map(|v| v.to_string()).unwrap_or_default(),
                rep.ci_lower.map(|v| v.to_string()).unwrap_or_default(),
                rep.ci_upper.map(|v| v.to_string()).unwrap_or_default(),
                rep.eif_mean,
                rep.max_score_residual,
                rep.iterations
            ),
            None => format!(
                "{},,,,,,,,\"{}\"",
                r.estimator,
                r.error.as_deref().unwrap_or("unknown failure")
            ),
        };
        body.push_str(&line);
        body.push('\n');
    }
    print!("{body}");
    write_atomic(&resolved.out.join("estimates.csv"), body.as_bytes())?;
    Ok(0)
}

fn cmd_verify(args: &VerifyArgs) -> Result<i32, CliError> {
    let resolved = resolve(&args.run)?;
    let dgp = resolved
        .sweep
        .dgps
        .first()
        .copied()
        .unwrap_or(TreatmentMechanism::Linear);
    let n = resolved.sweep.n_grid.first().copied().unwrap_or(200);
    let seed = resolved.sweep.base_seed;
    let spec = DgpSpec::new(dgp);
    let data: Dataset<f64> = generate(&spec, n, seed);
    let fit = fit_models(&data, &resolved.sweep.fit, seed ^ 0x51, seed ^ 0x52)
        .map_err(|e| CliError::Config(format!("fit failed: {e}")))?;

    // 1. finite-difference vs analytic submodel scores
    let fd = verify_submodel_scores(&fit.outcome, &fit.propensity, &data, args.probe);

    // 2. lasso KKT at the selected outcome penalty
    let design = &fit.outcome.design;
    let cfgf = &resolved.sweep.fit;
    let sel = select_lambda_cv(design, data.y(), cfgf, seed ^ 0x51)
        .map_err(|e| CliError::Config(format!("cv failed: {e}")))?;
    let beta = fit_logistic_lasso(design, data.y(), sel.lambda, cfgf)
        .map_err(|e| CliError::Config(format!("lasso failed: {e}")))?;
    let eta = design.linear_predictor(&beta);
    let penalized: Vec<bool> = (0..design.n_cols()).map(|j| j != 0).collect();
    let (kkt_violation, kkt_active_gap) =
        lasso_kkt_gaps(&design.cols, data.y(), &beta, sel.lambda, &penalized, &eta);

    // 3. relaxed-fit first-order conditions
    let relaxed_score = fit.outcome.max_relaxed_score;

    println!("check,value,threshold");
    println!("finite_difference_max_discrepancy,{fd},{}", args.tol);
    println!("lasso_kkt_violation,{kkt_violation},1e-6");
    println!("lasso_kkt_active_gap,{kkt_active_gap},1e-6");
    println!("relaxed_max_score,{relaxed_score},1e-8");

    let mut failures = Vec::new();
    if fd > args.tol {
        failures.push("finite_difference_max_discrepancy");
    }
    if kkt_violation > 1e-6 {
        failures.push("lasso_kkt_violation");
    }
    if kkt_active_gap > 1e-6 {
        failures.push("lasso_kkt_active_gap");
    }
    if relaxed_score > 1e-8 && !fit.outcome.ridged {
        failures.push("relaxed_max_score");
    }
    if failures.is_empty() {
        println!("verify: all checks passed");
        Ok(0)
    } else {
        eprintln!("verify: FAILED checks: {}", failures.join(", "));
        Ok(2)
    }
}

/// Runs the CLI; returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Estimate { input_csv, args } => cmd_estimate(input_csv, args),
        Command::Verify(args) => cmd_verify(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
