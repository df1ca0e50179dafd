use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ppm_core::driftgen::{self, GeneratorConfig};
use ppm_core::encoding::{self, EncodingOptions, EncodingSchema};
use ppm_core::eventlog::{write_xes, EventLog};
use ppm_core::forest::{self, BatchHyperparameters, IncHyperparameters, Model};
use ppm_core::harness::{self, ExperimentConfig, ExperimentReport, HarnessError};
use ppm_core::metrics::format_hms;
use ppm_core::outcome::{self, LabelSpec};
use ppm_core::par;

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Drift(#[from] driftgen::DriftError),
    #[error(transparent)]
    Outcome(#[from] outcome::OutcomeError),
    #[error(transparent)]
    Encoding(#[from] encoding::EncodingError),
    #[error(transparent)]
    Forest(#[from] forest::ForestError),
    #[error("{0}")]
    Invalid(String),
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "ppm", version, about = "Outcome-prediction drift benchmark")]
struct Cli {
    /// Worker threads for tree training (default: all cores).
    #[arg(long, global = true, env = "PPM_THREADS")]
    threads: Option<usize>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate an event log with a mid-stream concept drift.
    Generate {
        /// Generator JSON; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print case, event and activity counts.
    Stats {
        #[command(flatten)]
        log: LogArgs,
    },
    /// Label every case with an outcome.
    Label {
        #[command(flatten)]
        log: LogArgs,
        /// LTLf formula; positive when satisfied.
        #[arg(
            long,
            conflicts_with = "fast_case",
            required_unless_present = "fast_case"
        )]
        formula: Option<String>,
        /// Positive when cycle time is below this log's mean.
        #[arg(long)]
        fast_case: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn every prefix into a fixed-width row.
    Encode {
        #[command(flatten)]
        log: LogArgs,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 20)]
        prefix_cap: usize,
        #[arg(long)]
        elapsed_time: bool,
        /// Reuse a saved schema instead of fitting one on this log.
        #[arg(long, conflicts_with_all = ["prefix_cap", "elapsed_time"])]
        schema: Option<PathBuf>,
        /// Save the fitted schema as JSON.
        #[arg(long)]
        schema_out: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a forest on an encoded CSV, or update an incremental one.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        family: FamilyArg,
        /// Hyperparameter JSON; defaults when omitted.
        #[arg(long)]
        hp: Option<PathBuf>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Existing incremental model to update with `--data`.
        #[arg(long, conflicts_with_all = ["hp", "seed"])]
        init: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run S0 to S3 on one log and write the report directory.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Print tables from a report directory and write plot data.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(Debug, Args)]
struct LogArgs {
    /// XES, or CSV with `--csv-mapping`.
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    csv_mapping: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FamilyArg {
    Batch,
    Incremental,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_slice(&read(path)?).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn load(args: &LogArgs) -> Result<EventLog> {
    Ok(harness::load_log_file(
        &args.log,
        args.csv_mapping.as_deref(),
    )?)
}

fn generate(config: Option<&Path>, out: &Path) -> Result<()> {
    let cfg: GeneratorConfig = match config {
        Some(p) => read_json(p)?,
        None => GeneratorConfig::default(),
    };
    eprintln!(
        "generator: {}",
        serde_json::to_string(&cfg).expect("config serializes")
    );
    let log = driftgen::generate(&cfg)?;
    write(out, &write_xes(&log))?;
    println!("{}", log.stats());
    Ok(())
}

fn label(args: &LogArgs, formula: Option<&str>, out: &Path) -> Result<()> {
    let log = load(args)?;
    let spec = match formula {
        Some(f) => LabelSpec::Ltl { formula: f.into() },
        None => LabelSpec::FastCase,
    };
    let labeler = outcome::OutcomeLabeler::freeze(&spec, log.traces())?;
    let labels = labeler.label_all(log.traces())?;
    let mut buf = Vec::new();
    outcome::write_labels_csv(&labels, &mut buf)?;
    write(out, &buf)?;
    let pos = labels.values().filter(|v| **v).count();
    print!("cases={} positive={}", labels.len(), pos);
    if let Some(ms) = labeler.threshold_ms() {
        print!(" threshold_hours={:.3}", ms / 3_600_000.0);
    }
    println!();
    Ok(())
}

struct EncodeArgs<'a> {
    log: &'a LogArgs,
    labels: &'a Path,
    prefix_cap: usize,
    elapsed_time: bool,
    schema: Option<&'a Path>,
    schema_out: Option<&'a Path>,
    out: &'a Path,
}

fn encode(a: EncodeArgs<'_>) -> Result<()> {
    let log = load(a.log)?;
    let labels = outcome::read_labels_csv(read(a.labels)?.as_slice())?;
    let schema: EncodingSchema = match a.schema {
        Some(p) => read_json(p)?,
        None => encoding::fit_schema_with(
            log.traces(),
            a.prefix_cap,
            EncodingOptions {
                elapsed_time: a.elapsed_time,
            },
        )?,
    };
    if let Some(p) = a.schema_out {
        write(
            p,
            &serde_json::to_vec_pretty(&schema).expect("schema serializes"),
        )?;
    }
    let schema = Arc::new(schema);
    let data = encoding::encode_set(log.traces(), &schema, &labels)?;
    let mut buf = Vec::new();
    data.write_csv(&mut buf)?;
    write(a.out, &buf)?;
    println!(
        "rows={} width={} schema={}",
        data.len(),
        data.width(),
        schema.fingerprint()
    );
    Ok(())
}

fn train(
    data: &Path,
    family: FamilyArg,
    hp: Option<&Path>,
    seed: u64,
    init: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let matrix = encoding::read_encoded_csv(read(data)?.as_slice())?;
    let model = if let Some(init) = init {
        let model = Model::from_bytes(&read(init)?)?;
        if !matches!(
            (family, &model),
            (FamilyArg::Incremental, Model::Incremental(_))
        ) {
            return Err(CliError::Invalid(format!(
                "{}: --init needs an incremental model and --family incremental",
                init.display()
            )));
        }
        if model.width() != matrix.width() {
            return Err(CliError::Invalid(format!(
                "{} has {} features but {} was built for {}; encode with the same schema",
                data.display(),
                matrix.width(),
                init.display(),
                model.width()
            )));
        }
        forest::update(model, &matrix)?
    } else {
        match family {
            FamilyArg::Batch => {
                let hp: BatchHyperparameters = match hp {
                    Some(p) => read_json(p)?,
                    None => BatchHyperparameters::default(),
                };
                forest::train_batch(&matrix, &hp, seed)?
            }
            FamilyArg::Incremental => {
                let hp: IncHyperparameters = match hp {
                    Some(p) => read_json(p)?,
                    None => IncHyperparameters::default(),
                };
                forest::train_incremental_initial(&matrix, &hp, seed)?
            }
        }
    };
    write(out, &model.to_bytes())?;
    println!(
        "rows={} width={} family={} seed={}",
        matrix.n_rows(),
        model.width(),
        model.family(),
        model.seed()
    );
    Ok(())
}

fn experiment(config: &Path, out_dir: &Path) -> Result<()> {
    let text = String::from_utf8_lossy(&read(config)?).into_owned();
    let mut cfg = ExperimentConfig::from_json(&text)?;
    cfg.output_dir = Some(out_dir.to_path_buf());
    eprintln!(
        "config: {}",
        serde_json::to_string(&cfg).expect("config serializes")
    );
    let report = harness::run_all(&cfg)?;
    print!("{}", harness::render_text(&report));
    Ok(())
}

/// Strategy-level AUC and time, one row each.
fn plot_csv(report: &ExperimentReport) -> Vec<u8> {
    let mut s = String::from("strategy,model,auc,total_s,total_hms\n");
    for r in &report.strategies {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.strategy,
            r.model,
            r.auc,
            r.total_seconds,
            format_hms(r.total_seconds)
        ));
    }
    s.into_bytes()
}

fn report(dir: &Path) -> Result<()> {
    let path = dir.join("report.json");
    let report: ExperimentReport = read_json(&path)?;
    print!("{}", harness::render_text(&report));
    write(&dir.join("plot_strategies.csv"), &plot_csv(&report))?;
    write(
        &dir.join("plot_auc_by_prefix.csv"),
        &harness::auc_by_prefix_csv(&report),
    )?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Invalid("--threads must be at least 1".into()));
        }
        par::set_threads(n).map_err(CliError::Invalid)?;
    }
    log::debug!(
        "threads={} command={:?}",
        par::current_threads(),
        cli.command
    );
    match &cli.command {
        Command::Generate { config, out } => generate(config.as_deref(), out),
        Command::Stats { log } => {
            println!("{}", load(log)?.stats());
            Ok(())
        }
        Command::Label {
            log,
            formula,
            fast_case: _,
            out,
        } => label(log, formula.as_deref(), out),
        Command::Encode {
            log,
            labels,
            prefix_cap,
            elapsed_time,
            schema,
            schema_out,
            out,
        } => encode(EncodeArgs {
            log,
            labels,
            prefix_cap: *prefix_cap,
            elapsed_time: *elapsed_time,
            schema: schema.as_deref(),
            schema_out: schema_out.as_deref(),
            out,
        }),
        Command::Train {
            data,
            family,
            hp,
            seed,
            init,
            out,
        } => train(data, *family, hp.as_deref(), *seed, init.as_deref(), out),
        Command::Experiment { config, out_dir } => experiment(config, out_dir),
        Command::Report { input } => report(input),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => {
            let _ = io::stdout().flush();
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
