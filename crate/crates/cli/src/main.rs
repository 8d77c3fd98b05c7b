//! Experiment harness CLI: run whole experiments or compose the pipeline
//! stage by stage over a shared workspace directory.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spikestream::experiment::{
    run_experiment, stage_classify, stage_encode, stage_extract, stage_fuse, stage_report,
    stage_synth, stage_train, Column, DatasetConfig, ExperimentConfig, ExperimentError,
    PipelineCache, StreamRole,
};

#[derive(Parser)]
#[command(name = "spikestream", version, about = "Two-stream spiking video classifier harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config file (flat `key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Workspace directory holding all stage artifacts and the cache.
    #[arg(long, short, env = "SPIKESTREAM_CACHE")]
    out: PathBuf,
    /// Override the seed used by this invocation (stage commands only).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full experiment: encode, train, extract, fuse, classify, report.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Materialize the synthetic dataset (clips + manifest).
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Encode one stream's clips into spike dumps with stats sidecars.
    Encode {
        #[command(flatten)]
        common: Common,
        /// Stream to encode: a | b (also: spatial | temporal).
        #[arg(long)]
        stream: String,
    },
    /// Train one stream's spiking layer for one run (per-fold checkpoints).
    TrainStream {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        stream: String,
        /// 1-based run index.
        #[arg(long, default_value_t = 1)]
        run: usize,
    },
    /// Extract pooled feature vectors for one stream and run.
    Extract {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        stream: String,
        #[arg(long, default_value_t = 1)]
        run: usize,
    },
    /// Fuse both streams' features for one run.
    Fuse {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        run: usize,
    },
    /// Train and evaluate the SVM for one column (a | b | fused) and run.
    Classify {
        #[command(flatten)]
        common: Common,
        /// Result column: a | b | fused.
        #[arg(long)]
        stream: String,
        #[arg(long, default_value_t = 1)]
        run: usize,
    },
    /// Assemble the report table from cached run results.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

/// Print to stdout, treating a closed pipe as a clean shutdown.
fn emit(text: std::fmt::Arguments) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    if let Err(e) = out.write_fmt(text) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
    }
}

macro_rules! outln {
    ($($arg:tt)*) => { emit(format_args!("{}\n", format_args!($($arg)*))) };
}

fn parse_role(s: &str) -> Result<StreamRole, ExperimentError> {
    StreamRole::parse(s)
        .ok_or_else(|| ExperimentError::Usage(format!("unknown stream {s:?}; use a or b")))
}

fn parse_column(s: &str) -> Result<Column, ExperimentError> {
    Column::parse(s)
        .ok_or_else(|| ExperimentError::Usage(format!("unknown column {s:?}; use a, b or fused")))
}

/// Load the config, applying the optional seed override to the given run
/// (or to the synthetic dataset for `synth`).
fn load_config(
    common: &Common,
    run: Option<usize>,
    synth_seed: bool,
) -> Result<ExperimentConfig, ExperimentError> {
    let mut config = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        if synth_seed {
            if let DatasetConfig::Synthetic(spec) = &mut config.dataset {
                spec.seed = seed;
            }
        } else if let Some(run) = run {
            let idx = run_index(&config, run)?;
            config.seeds[idx] = seed;
        }
    }
    Ok(config)
}

fn run_index(config: &ExperimentConfig, run: usize) -> Result<usize, ExperimentError> {
    if run == 0 || run > config.runs {
        return Err(ExperimentError::Usage(format!(
            "run {run} out of range 1..={}",
            config.runs
        )));
    }
    Ok(run - 1)
}

fn execute(cli: Cli) -> Result<(), ExperimentError> {
    match cli.command {
        Command::Run { common } => {
            let config = load_config(&common, None, false)?;
            let report = run_experiment(&config, &common.out)?;
            emit(format_args!("{}", report.render()));
            Ok(())
        }
        Command::Synth { common } => {
            let config = load_config(&common, None, true)?;
            let mut cache = PipelineCache::new(&common.out)?;
            let manifest = stage_synth(&config, &mut cache)?;
            outln!("manifest: {}", manifest.display());
            Ok(())
        }
        Command::Encode { common, stream } => {
            let config = load_config(&common, None, false)?;
            let role = parse_role(&stream)?;
            let mut cache = PipelineCache::new(&common.out)?;
            stage_encode(&config, &mut cache, role)?;
            print_encode_stats(&config, &cache, role)
        }
        Command::TrainStream { common, stream, run } => {
            let config = load_config(&common, Some(run), false)?;
            let role = parse_role(&stream)?;
            let idx = run_index(&config, run)?;
            let mut cache = PipelineCache::new(&common.out)?;
            stage_train(&config, &mut cache, role, idx)?;
            outln!("trained stream {} run {run}", role.resolve(&config).id());
            Ok(())
        }
        Command::Extract { common, stream, run } => {
            let config = load_config(&common, Some(run), false)?;
            let role = parse_role(&stream)?;
            let idx = run_index(&config, run)?;
            let mut cache = PipelineCache::new(&common.out)?;
            stage_extract(&config, &mut cache, role, idx)?;
            outln!("extracted features for {} run {run}", role.resolve(&config).id());
            Ok(())
        }
        Command::Fuse { common, run } => {
            let config = load_config(&common, Some(run), false)?;
            let idx = run_index(&config, run)?;
            let mut cache = PipelineCache::new(&common.out)?;
            stage_fuse(&config, &mut cache, idx)?;
            outln!("fused features for run {run}");
            Ok(())
        }
        Command::Classify { common, stream, run } => {
            let config = load_config(&common, Some(run), false)?;
            let column = parse_column(&stream)?;
            let idx = run_index(&config, run)?;
            let mut cache = PipelineCache::new(&common.out)?;
            let eval = stage_classify(&config, &mut cache, column, idx)?;
            outln!(
                "{},{},{run},{:.2}",
                config.name,
                column.id(&config),
                spikestream::classifier::round2(eval.accuracy())
            );
            Ok(())
        }
        Command::Report { common } => {
            let config = load_config(&common, None, false)?;
            let mut cache = PipelineCache::new(&common.out)?;
            let report = stage_report(&config, &mut cache)?;
            emit(format_args!("{}", report.render()));
            Ok(())
        }
    }
}

fn print_encode_stats(
    config: &ExperimentConfig,
    cache: &PipelineCache,
    role: StreamRole,
) -> Result<(), ExperimentError> {
    let stream = role.resolve(config);
    let dir = cache.root().join("encoded").join(stream.rep_id());
    let mut entries: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| ExperimentError::Internal(format!("read {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("stats"))
        .collect();
    entries.sort();
    for path in entries {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| ExperimentError::Internal(e.to_string()))?;
        let mut events = "";
        let mut mean = "";
        for line in text.lines() {
            if let Some(v) = line.strip_prefix("events=") {
                events = v;
            } else if let Some(v) = line.strip_prefix("mean_spike_time=") {
                mean = v;
            }
        }
        let clip = path.file_stem().and_then(|s| s.to_str()).unwrap_or("?");
        outln!("{clip} events={events} mean_spike_time={mean}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap help/version output is a success path
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
