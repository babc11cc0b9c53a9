//! Command-line front end: robust means, the robust Lasso, estimator
//! selection, the block selector (independent and mixing variants), and the
//! Monte Carlo coverage experiments.
//!
//! Exit codes: 0 success, 1 usage error, 2 condition violation (confidence
//! level infeasible for the sample, or a variance/moment condition fails),
//! 3 data error (unreadable or malformed input).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use medmean::blocks::{self, BlockCountMode, BlocksError};
use medmean::constants::Constants;
use medmean::dictionary::Dictionary;
use medmean::harness::{
    run_coverage_experiment, ConfigOverrides, ExperimentConfig, ExperimentKind, HarnessError,
};
use medmean::lasso::{lasso_weights, solve_lasso, LassoError};
use medmean::mixing::{select_m_estimator_mixing, MixingError};
use medmean::mselect::{
    select_m_estimator, Contrast, KullbackHistogram, L2Density, L2Regression, MselectError,
    SelectorTrace,
};
use medmean::selection::{
    classical_penalty, robust_moments, robust_penalty, robust_psi_m, select, uniform_priors,
    CandidateEstimator, CandidateModel, ModelSpec, SelectionConfig, SelectionError, SelectionMode,
};

#[derive(Parser)]
#[command(
    name = "medmean",
    about = "Median-of-means estimation, robust model fitting, and coverage experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: GlobalArgs,
}

#[derive(Args)]
struct GlobalArgs {
    /// Confidence level in (0,1)
    #[arg(long, global = true, default_value_t = 0.05)]
    delta: f64,
    /// Master seed for experiments
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Monte Carlo replications
    #[arg(long, global = true, default_value_t = 200)]
    reps: usize,
    /// Input CSV (one column of values, or x,y pairs for regression)
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Output format
    #[arg(long, global = true, default_value = "json", value_parser = ["json", "csv"])]
    output: String,
    /// JSON configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Robust mean of a one-column CSV with its block count and half-width
    Mean,
    /// Robust L1-penalized density fit on \[0,1\]
    Lasso,
    /// Select among thresholded projection estimators
    Select,
    /// Block M-estimator selector
    Mselect,
    /// Mixing-data block selector (interleaved layout)
    Mixing,
    /// Run a Monte Carlo coverage experiment
    Experiment {
        /// One of: prop21, cor22, thm31, thm41, thm42, thm51_l2,
        /// prop55_kull, prop57_reg, thm63_mixing
        #[arg(long)]
        kind: String,
    },
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Condition(String),
    Data(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Condition(_) => 2,
            CliError::Data(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Condition(m) | CliError::Data(m) => m,
        }
    }
}

impl From<BlocksError> for CliError {
    fn from(e: BlocksError) -> Self {
        match e {
            BlocksError::DimensionMismatch { .. } | BlocksError::EmptyInput => {
                CliError::Data(e.to_string())
            }
            _ => CliError::Condition(e.to_string()),
        }
    }
}

impl From<LassoError> for CliError {
    fn from(e: LassoError) -> Self {
        CliError::Condition(e.to_string())
    }
}

impl From<SelectionError> for CliError {
    fn from(e: SelectionError) -> Self {
        CliError::Condition(e.to_string())
    }
}

impl From<MselectError> for CliError {
    fn from(e: MselectError) -> Self {
        CliError::Condition(e.to_string())
    }
}

impl From<MixingError> for CliError {
    fn from(e: MixingError) -> Self {
        CliError::Condition(e.to_string())
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::RepsTooFew(_) | HarnessError::BadConfig(_) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Condition(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are not errors
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Mean => cmd_mean(&cli.global),
        Command::Lasso => cmd_lasso(&cli.global),
        Command::Select => cmd_select(&cli.global),
        Command::Mselect => cmd_mselect(&cli.global),
        Command::Mixing => cmd_mixing(&cli.global),
        Command::Experiment { kind } => cmd_experiment(&cli.global, &kind),
    }
}

fn require_input(g: &GlobalArgs) -> Result<&Path, CliError> {
    g.input
        .as_deref()
        .ok_or_else(|| CliError::Usage("--input FILE is required for this command".into()))
}

fn read_scalar_csv(path: &Path) -> Result<Vec<f64>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Data(format!("row {}: {e}", i + 1)))?;
        let field = record
            .get(0)
            .ok_or_else(|| CliError::Data(format!("row {}: empty record", i + 1)))?;
        let value: f64 = field
            .parse()
            .map_err(|e| CliError::Data(format!("row {}: '{field}': {e}", i + 1)))?;
        out.push(value);
    }
    if out.is_empty() {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }
    Ok(out)
}

fn read_pairs_csv(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Data(format!("row {}: {e}", i + 1)))?;
        if record.len() < 2 {
            return Err(CliError::Data(format!(
                "row {}: need two columns x,y",
                i + 1
            )));
        }
        let x: f64 = record[0]
            .parse()
            .map_err(|e| CliError::Data(format!("row {}: '{}': {e}", i + 1, &record[0])))?;
        let y: f64 = record[1]
            .parse()
            .map_err(|e| CliError::Data(format!("row {}: '{}': {e}", i + 1, &record[1])))?;
        out.push((x, y));
    }
    if out.is_empty() {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }
    Ok(out)
}

fn read_config<T: for<'de> Deserialize<'de> + Default>(g: &GlobalArgs) -> Result<T, CliError> {
    match &g.config {
        None => Ok(T::default()),
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
        }
    }
}

fn emit(g: &GlobalArgs, json: serde_json::Value, csv_text: String) {
    if g.output == "csv" {
        print!("{csv_text}");
    } else {
        println!(
            "{}",
            serde_json::to_string_pretty(&json).expect("serializable")
        );
    }
}

fn cmd_mean(g: &GlobalArgs) -> Result<(), CliError> {
    let xs = read_scalar_csv(require_input(g)?)?;
    let n = xs.len();
    let v = blocks::choose_block_count(g.delta, n, BlockCountMode::Mean)?;
    let partition = blocks::BlockPartition::new_regular(n, v)?;
    let mean = blocks::robust_mean(&xs, |&x| x, &partition)?;
    let var_bound = blocks::variance_upper_bound(&xs, |&x| x, &partition)?;
    let c = Constants::standard();
    let half_width = c.l1 * var_bound.sqrt() * (v as f64 / n as f64).sqrt();
    let json = serde_json::json!({
        "n": n,
        "delta": g.delta,
        "v": v,
        "mean": mean.value,
        "half_width": half_width,
        "variance_bound": var_bound,
    });
    let csv_text = format!(
        "mean,v,half_width,n,delta\n{},{},{},{},{}\n",
        mean.value, v, half_width, n, g.delta
    );
    emit(g, json, csv_text);
    Ok(())
}

/// Dictionary choice for the fitting commands.
#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum DictChoice {
    EqualCells { cells: usize },
    Histogram { breakpoints: Vec<f64> },
    Trigonometric { max_frequency: usize },
}

impl Default for DictChoice {
    fn default() -> Self {
        DictChoice::EqualCells { cells: 8 }
    }
}

impl DictChoice {
    fn build(&self) -> Result<Arc<Dictionary>, CliError> {
        let dict = match self {
            DictChoice::EqualCells { cells } => Dictionary::equal_cells(*cells),
            DictChoice::Histogram { breakpoints } => Dictionary::histogram(breakpoints),
            DictChoice::Trigonometric { max_frequency } => {
                return Ok(Arc::new(Dictionary::trigonometric(*max_frequency)))
            }
        };
        dict.map(Arc::new)
            .map_err(|e| CliError::Data(e.to_string()))
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct LassoCliConfig {
    #[serde(default)]
    dictionary: DictChoice,
}

fn cmd_lasso(g: &GlobalArgs) -> Result<(), CliError> {
    let xs = read_scalar_csv(require_input(g)?)?;
    let config: LassoCliConfig = read_config(g)?;
    let dict = config.dictionary.build()?;
    let problem = lasso_weights(&xs, dict, g.delta)?;
    let fit = solve_lasso(&problem)?;
    let json = fit.to_json(&problem);
    let csv_text = {
        let mut s = String::from("label,theta\n");
        for &i in &fit.active_set {
            s.push_str(&format!(
                "{},{}\n",
                problem.dict.functions()[i].label,
                fit.theta_hat[i]
            ));
        }
        s
    };
    emit(g, json, csv_text);
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SelectCliConfig {
    cells: usize,
    thresholds: Vec<f64>,
    mode: SelectionMode,
    alpha: f64,
    epsilon: f64,
    nu: f64,
    s_norm_bound: f64,
}

impl Default for SelectCliConfig {
    fn default() -> Self {
        SelectCliConfig {
            cells: 8,
            thresholds: vec![0.0, 0.05, 0.1, 0.2],
            mode: SelectionMode::Robust,
            alpha: 1.0,
            epsilon: 0.2,
            nu: 0.5,
            s_norm_bound: 2.0,
        }
    }
}

/// Candidates are hard-thresholded projection estimators on one equal-cells
/// dictionary; selection picks the threshold.
fn cmd_select(g: &GlobalArgs) -> Result<(), CliError> {
    let xs = read_scalar_csv(require_input(g)?)?;
    let cfg: SelectCliConfig = read_config(g)?;
    let dict =
        Arc::new(Dictionary::equal_cells(cfg.cells).map_err(|e| CliError::Data(e.to_string()))?);
    let m = dict.len();
    let n = xs.len();
    let all_labels: Vec<usize> = (0..m).collect();

    // plain empirical projection coefficients
    let coeffs: Vec<f64> = (0..m)
        .map(|l| xs.iter().map(|&x| dict.eval(l, x)).sum::<f64>() / n as f64)
        .collect();

    let pen = match cfg.mode {
        SelectionMode::Classical => {
            let v = blocks::choose_block_count(g.delta / 4.0, n, BlockCountMode::Mean)?;
            let p_psi = robust_psi_m(&xs, &dict, &all_labels, v)?;
            classical_penalty(
                p_psi,
                dict.psi_sup_bound(&all_labels),
                cfg.s_norm_bound,
                n,
                g.delta,
                cfg.nu,
                1.0,
            )?
        }
        SelectionMode::Robust => {
            let moments = robust_moments(&xs, &dict, g.delta, &uniform_priors(m), None)?;
            robust_penalty(&all_labels, &moments, cfg.epsilon)?
        }
    };
    let model = ModelSpec {
        id: format!("cells_{m}"),
        lambda_set: all_labels,
        pen,
    };
    let candidates: Vec<CandidateEstimator> = cfg
        .thresholds
        .iter()
        .map(|&t| {
            let kept: Vec<f64> = coeffs
                .iter()
                .map(|&b| if b.abs() > t { b } else { 0.0 })
                .collect();
            CandidateEstimator {
                id: format!("threshold_{t}"),
                norm_sq: kept.iter().map(|b| b * b).sum(),
                menu: vec![CandidateModel {
                    model: model.clone(),
                    projections: kept,
                }],
            }
        })
        .collect();
    let sel_config = SelectionConfig {
        alpha: cfg.alpha,
        delta: g.delta,
        epsilon: cfg.epsilon,
        priors: None,
        v_override: None,
    };
    let result = select(&candidates, &xs, dict, cfg.mode, &sel_config)?;
    let csv_text = {
        let mut s = String::from("candidate,criterion\n");
        for d in &result.per_candidate {
            s.push_str(&format!("{},{}\n", d.id, d.criterion));
        }
        s
    };
    let json = serde_json::to_value(&result).expect("serializable");
    emit(g, json, csv_text);
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct MselectCliConfig {
    contrast: ContrastChoice,
    cells: usize,
    smoothing_x: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ContrastChoice {
    L2Density,
    Kullback,
    L2Regression,
}

impl Default for MselectCliConfig {
    fn default() -> Self {
        MselectCliConfig {
            contrast: ContrastChoice::L2Density,
            cells: 4,
            smoothing_x: None,
        }
    }
}

fn trace_csv<E>(trace: &SelectorTrace<E>) -> String {
    let mut s = String::from("k,worst_case,selected\n");
    for (k, w) in trace.worst_case.iter().enumerate() {
        s.push_str(&format!("{},{},{}\n", k, w, u8::from(k == trace.k_star)));
    }
    s
}

fn linear_basis() -> Result<Arc<Dictionary>, CliError> {
    use medmean::dictionary::{BasisFunction, BasisKind};
    Dictionary::custom(
        vec![
            BasisFunction::new("one", BasisKind::Custom, 1.0, |_| 1.0),
            BasisFunction::new("x", BasisKind::Custom, 1.0, |x| x),
        ],
        (0.0, 1.0),
    )
    .map(Arc::new)
    .map_err(|e| CliError::Data(e.to_string()))
}

fn run_selector<C>(
    g: &GlobalArgs,
    sample: &[C::Obs],
    contrast: &C,
    mixing: bool,
) -> Result<(), CliError>
where
    C: Contrast,
    C::Estimate: serde::Serialize,
{
    let trace = if mixing {
        select_m_estimator_mixing(sample, contrast, g.delta)?
    } else {
        select_m_estimator(sample, contrast, g.delta)?
    };
    let csv_text = trace_csv(&trace);
    let json = serde_json::to_value(&trace).expect("serializable");
    emit(g, json, csv_text);
    Ok(())
}

fn cmd_selector_common(g: &GlobalArgs, mixing: bool) -> Result<(), CliError> {
    let cfg: MselectCliConfig = read_config(g)?;
    match cfg.contrast {
        ContrastChoice::L2Density => {
            let xs = read_scalar_csv(require_input(g)?)?;
            let dict = Arc::new(
                Dictionary::equal_cells(cfg.cells).map_err(|e| CliError::Data(e.to_string()))?,
            );
            let contrast = L2Density::new(dict)?;
            run_selector(g, &xs, &contrast, mixing)
        }
        ContrastChoice::Kullback => {
            let xs = read_scalar_csv(require_input(g)?)?;
            let breakpoints: Vec<f64> = (0..=cfg.cells)
                .map(|i| i as f64 / cfg.cells as f64)
                .collect();
            let x = cfg.smoothing_x.unwrap_or(1.0 / xs.len() as f64);
            let contrast = KullbackHistogram::new(&breakpoints, x)?;
            run_selector(g, &xs, &contrast, mixing)
        }
        ContrastChoice::L2Regression => {
            let pairs = read_pairs_csv(require_input(g)?)?;
            let contrast = L2Regression::new(linear_basis()?);
            run_selector(g, &pairs, &contrast, mixing)
        }
    }
}

fn cmd_mselect(g: &GlobalArgs) -> Result<(), CliError> {
    cmd_selector_common(g, false)
}

fn cmd_mixing(g: &GlobalArgs) -> Result<(), CliError> {
    cmd_selector_common(g, true)
}

fn cmd_experiment(g: &GlobalArgs, kind: &str) -> Result<(), CliError> {
    let kind = ExperimentKind::from_str(kind).map_err(CliError::Usage)?;
    let overrides: ConfigOverrides = read_config(g)?;
    let config = ExperimentConfig::default_for(kind).apply_overrides(overrides);
    let report = run_coverage_experiment(kind, &config, g.reps, g.seed)?;
    eprintln!(
        "{} finished: {} reps, {} violations, wall {} ms",
        kind, report.reps, report.violations, report.wall_ms
    );
    if g.output == "csv" {
        print!("{}", report.per_rep_csv());
    } else {
        println!("{}", report.to_json());
    }
    Ok(())
}
