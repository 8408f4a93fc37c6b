//! `pbf`: command line driver for pseudo-Bayes factor studies.
//!
//! Exit codes: 0 on success, 1 when a config fails to parse or validate,
//! 2 when an estimator fails at run time.

mod output;

use clap::{Parser, Subcommand, ValueEnum};
use pbf_core::data::{Slot, ThetaVector, TruthFn};
use pbf_core::experiment::{
    run_convergence_study, run_table_study, ConvergenceStudy, ExperimentConfig, ExperimentError,
    StudyKind, TableStudy, TruthConfig,
};
use pbf_core::prior::{
    limit_point, prior_interval, sample_interval, InversePriorSpec, LinkBand, PriorKind,
};
use pbf_core::rate::{
    ar1_pbf_limit, ar1_rate_minimizer, h_ar1, rate_minimum, theoretical_pbf_limit,
    Ar1TheoryInputs, CovariateSpace, RateModel,
};
use pbf_core::sampler::substream;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "pbf",
    version,
    about = "Pseudo-Bayes factor studies: cross-validated model scores, \
             band priors, divergence-rate limits and simulation harnesses"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// JSON config; subcommands with a built-in default make this optional.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory for report.json, report.csv and manifest.json.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Replace the config's seed list with this single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap the worker pool; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Stdout format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Pretty)]
    format: Format,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Pretty,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run any study config, dispatched on its study kind.
    Run,
    /// The six-row single-covariate model selection table.
    Table1,
    /// The eighteen-row two-covariate variable selection table.
    Table2,
    /// A convergence study toward the analytic limit.
    Converge,
    /// Print the analytic rate minimum and log-PBF limit for a
    /// convergence config, with no simulation.
    KlLimit,
    /// Draw from one covariate band prior.
    SamplePrior,
    /// Parse and validate a config, changing nothing.
    ValidateConfig,
}

enum Failure {
    Config(String),
    Runtime(String),
}

fn study_failure(e: ExperimentError) -> Failure {
    match e {
        ExperimentError::InvalidConfig(_) => Failure::Config(e.to_string()),
        other => Failure::Runtime(other.to_string()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = u8::from(e.use_stderr());
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("runtime error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Failure::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::Runtime(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Cmd::Run => {
            let cfg = load_study(cli.config.as_deref(), None, cli.seed)?;
            let study = run_any(&cfg)?;
            finish(&cfg, &study, &cli)
        }
        Cmd::Table1 => {
            let cfg = load_study(cli.config.as_deref(), Some(ExperimentConfig::table1), cli.seed)?;
            require_table(&cfg)?;
            let study = run_any(&cfg)?;
            finish(&cfg, &study, &cli)
        }
        Cmd::Table2 => {
            let cfg = load_study(cli.config.as_deref(), Some(ExperimentConfig::table2), cli.seed)?;
            require_table(&cfg)?;
            let study = run_any(&cfg)?;
            finish(&cfg, &study, &cli)
        }
        Cmd::Converge => {
            let cfg = load_study(
                cli.config.as_deref(),
                Some(ExperimentConfig::convergence_linear),
                cli.seed,
            )?;
            if !is_convergence(cfg.study) {
                return Err(Failure::Config(format!(
                    "converge needs a convergence study config, got {:?}",
                    cfg.study
                )));
            }
            let study = run_any(&cfg)?;
            finish(&cfg, &study, &cli)
        }
        Cmd::KlLimit => {
            let cfg = load_study(
                cli.config.as_deref(),
                Some(ExperimentConfig::convergence_linear),
                cli.seed,
            )?;
            kl_limit(&cfg, cli.format)
        }
        Cmd::SamplePrior => sample_prior(&cli),
        Cmd::ValidateConfig => {
            let path = cli
                .config
                .as_deref()
                .ok_or_else(|| Failure::Config("validate-config requires --config".into()))?;
            let cfg = load_study(Some(path), None, cli.seed)?;
            println!(
                "ok: {:?} study, {} seeds, n schedule {:?}, m = {}",
                cfg.study,
                cfg.seeds.len(),
                cfg.n_schedule,
                cfg.m
            );
            Ok(())
        }
    }
}

fn load_study(
    path: Option<&Path>,
    default: Option<fn() -> ExperimentConfig>,
    seed: Option<u64>,
) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match (path, default) {
        (Some(p), _) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?
        }
        (None, Some(default)) => default(),
        (None, None) => return Err(Failure::Config("this subcommand requires --config".into())),
    };
    if let Some(seed) = seed {
        cfg.seeds = vec![seed];
    }
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(cfg)
}

fn is_convergence(kind: StudyKind) -> bool {
    matches!(
        kind,
        StudyKind::ConvergenceLinear | StudyKind::ConvergenceQuadratic | StudyKind::ConvergenceAr1
    )
}

fn require_table(cfg: &ExperimentConfig) -> Result<(), Failure> {
    if is_convergence(cfg.study) {
        return Err(Failure::Config(format!(
            "table subcommands need a table study config, got {:?}",
            cfg.study
        )));
    }
    Ok(())
}

enum StudyOutput {
    Table(TableStudy),
    Convergence(ConvergenceStudy),
}

fn run_any(cfg: &ExperimentConfig) -> Result<StudyOutput, Failure> {
    if is_convergence(cfg.study) {
        Ok(StudyOutput::Convergence(
            run_convergence_study(cfg).map_err(study_failure)?,
        ))
    } else {
        Ok(StudyOutput::Table(
            run_table_study(cfg).map_err(study_failure)?,
        ))
    }
}

fn emit_study(study: &StudyOutput, format: Format) -> Result<String, Failure> {
    let text = match (study, format) {
        (StudyOutput::Table(t), Format::Csv) => output::table_csv(t),
        (StudyOutput::Table(t), Format::Pretty) => output::table_pretty(t),
        (StudyOutput::Table(t), Format::Json) => to_pretty_json(t)?,
        (StudyOutput::Convergence(c), Format::Csv) => output::convergence_csv(c),
        (StudyOutput::Convergence(c), Format::Pretty) => output::convergence_pretty(c),
        (StudyOutput::Convergence(c), Format::Json) => to_pretty_json(c)?,
    };
    Ok(text)
}

fn to_pretty_json<T: Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))
}

fn finish(cfg: &ExperimentConfig, study: &StudyOutput, cli: &Cli) -> Result<(), Failure> {
    print!("{}", ensure_trailing_newline(emit_study(study, cli.format)?));
    if let Some(dir) = &cli.out {
        let written = write_out_dir(dir, cfg, study)?;
        for path in written {
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn ensure_trailing_newline(mut s: String) -> String {
    if !s.ends_with('\n') {
        s.push('\n');
    }
    s
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, Failure> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn write_out_dir(
    dir: &Path,
    cfg: &ExperimentConfig,
    study: &StudyOutput,
) -> Result<Vec<PathBuf>, Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
    let mut written = Vec::new();
    let (json, csv) = match study {
        StudyOutput::Table(t) => (to_pretty_json(t)?, output::table_csv(t)),
        StudyOutput::Convergence(c) => (to_pretty_json(c)?, output::convergence_csv(c)),
    };
    written.push(write_file(dir, "report.json", &json)?);
    written.push(write_file(dir, "report.csv", &csv)?);
    if let StudyOutput::Convergence(c) = study {
        written.push(write_file(dir, "plot-data.csv", &output::plot_data_csv(c))?);
    }
    let manifest = to_pretty_json(&output::manifest_for(cfg))?;
    written.push(write_file(dir, "manifest.json", &manifest)?);
    Ok(written)
}

#[derive(Debug, Serialize)]
struct KlLimitReport {
    study: StudyKind,
    rate_minimum: f64,
    log_pbf_limit: f64,
}

fn kl_limit(cfg: &ExperimentConfig, format: Format) -> Result<(), Failure> {
    let report = match (&cfg.study, &cfg.truth) {
        (StudyKind::ConvergenceLinear, TruthConfig::GaussianCurve { curve, noise_sd, lower, upper }) => {
            gaussian_kl_report(cfg.study, RateModel::Linear, curve, *noise_sd, *lower, *upper)?
        }
        (StudyKind::ConvergenceQuadratic, TruthConfig::GaussianCurve { curve, noise_sd, lower, upper }) => {
            gaussian_kl_report(cfg.study, RateModel::Quadratic, curve, *noise_sd, *lower, *upper)?
        }
        (StudyKind::ConvergenceAr1, TruthConfig::Ar1 { rho0, beta0, noise_sd, sd_x, sd_z }) => {
            let inputs = Ar1TheoryInputs {
                rho0: *rho0,
                beta0: *beta0,
                sigma0_sq: noise_sd * noise_sd,
                sigma_x_sq: sd_x * sd_x,
                sigma_z_sq: sd_z * sd_z,
            };
            let tilde = ar1_rate_minimizer(&inputs, pbf_core::prior::CovariateAxis::X)
                .map_err(|e| Failure::Runtime(e.to_string()))?;
            let rate_minimum = h_ar1(&tilde, &inputs, pbf_core::prior::CovariateAxis::X)
                .map_err(|e| Failure::Runtime(e.to_string()))?;
            let log_pbf_limit =
                ar1_pbf_limit(&inputs, false).map_err(|e| Failure::Runtime(e.to_string()))?;
            KlLimitReport { study: cfg.study, rate_minimum, log_pbf_limit }
        }
        (study, _) => {
            return Err(Failure::Config(format!(
                "kl-limit needs a convergence study config, got {study:?}"
            )))
        }
    };
    match format {
        Format::Pretty => {
            println!("rate minimum:  {:.10}", report.rate_minimum);
            println!("log-PBF limit: {:+.10}", report.log_pbf_limit);
        }
        Format::Json => println!("{}", to_pretty_json(&report)?),
        Format::Csv => {
            println!("rate_minimum,log_pbf_limit");
            println!("{:.10},{:.10}", report.rate_minimum, report.log_pbf_limit);
        }
    }
    Ok(())
}

fn gaussian_kl_report(
    study: StudyKind,
    model: RateModel,
    curve: &TruthFn,
    noise_sd: f64,
    lower: f64,
    upper: f64,
) -> Result<KlLimitReport, Failure> {
    let sigma0_sq = noise_sd * noise_sd;
    let space = CovariateSpace::new(lower, upper).map_err(|e| Failure::Config(e.to_string()))?;
    let eta0 = |x: f64| curve.eval(x);
    let rate_minimum =
        rate_minimum(model, eta0, sigma0_sq, &space).map_err(|e| Failure::Runtime(e.to_string()))?;
    let log_pbf_limit = theoretical_pbf_limit(model, RateModel::Truth, eta0, sigma0_sq, &space)
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    Ok(KlLimitReport { study, rate_minimum, log_pbf_limit })
}

/// Config for `sample-prior`: one band prior, one parameter point, one
/// row summary.
#[derive(Debug, Serialize, Deserialize)]
struct SamplePriorConfig {
    prior: InversePriorSpec,
    intercept: f64,
    slopes: Vec<f64>,
    #[serde(default)]
    rho: Option<f64>,
    y_bar: f64,
    s: f64,
    m: usize,
    #[serde(default)]
    fixed_other: Option<f64>,
    draws: usize,
    seed: u64,
}

impl Default for SamplePriorConfig {
    fn default() -> Self {
        Self {
            prior: InversePriorSpec::new(PriorKind::Link(LinkBand::PoissonLog)),
            intercept: 0.4,
            slopes: vec![0.9],
            rho: None,
            y_bar: 5.0,
            s: 1.0,
            m: 100,
            fixed_other: None,
            draws: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Serialize)]
struct SamplePriorReport {
    interval_a: f64,
    interval_b: f64,
    width: f64,
    clamped: bool,
    mean: f64,
    limit_point: Option<f64>,
    draws: Vec<f64>,
}

fn sample_prior(cli: &Cli) -> Result<(), Failure> {
    let mut cfg: SamplePriorConfig = match cli.config.as_deref() {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?
        }
        None => SamplePriorConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cfg.draws == 0 {
        return Err(Failure::Config("draws must be at least 1".into()));
    }
    cfg.prior.validate().map_err(|e| Failure::Config(e.to_string()))?;

    let mut values = vec![cfg.intercept];
    let mut layout = vec![Slot::Intercept];
    for (i, slope) in cfg.slopes.iter().enumerate() {
        values.push(*slope);
        layout.push(Slot::Slope(i));
    }
    if let Some(rho) = cfg.rho {
        values.push(rho);
        layout.push(Slot::Rho);
    }
    let theta =
        ThetaVector::new(values, layout).map_err(|e| Failure::Config(e.to_string()))?;

    let interval = prior_interval(&cfg.prior, &theta, cfg.y_bar, cfg.s, cfg.m, cfg.fixed_other)
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    let mut rng = substream(cfg.seed, &["sample-prior"]);
    let draws: Vec<f64> = (0..cfg.draws).map(|_| sample_interval(&interval, &mut rng)).collect();
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let limit = limit_point(&cfg.prior, &theta, cfg.y_bar, cfg.fixed_other).ok();

    let report = SamplePriorReport {
        interval_a: interval.a,
        interval_b: interval.b,
        width: interval.width(),
        clamped: interval.clamped,
        mean,
        limit_point: limit,
        draws,
    };
    match cli.format {
        Format::Pretty => {
            println!(
                "interval [{:.6}, {:.6}]  width {:.6}{}",
                report.interval_a,
                report.interval_b,
                report.width,
                if report.clamped { "  (clamped)" } else { "" }
            );
            println!("{} draws, mean {:.6}", report.draws.len(), report.mean);
            match report.limit_point {
                Some(p) => println!("limit point {p:.6}"),
                None => println!("limit point: not defined for this prior kind"),
            }
        }
        Format::Json => println!("{}", to_pretty_json(&report)?),
        Format::Csv => {
            println!("draw");
            for d in &report.draws {
                println!("{d:.10}");
            }
        }
    }
    Ok(())
}
