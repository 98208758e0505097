use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mergekit::report::{run_stage, run_stats_from, with_jobs, RunConfig, RunSummary, Stage};
use mergekit::synth::{generate_corpus, write_corpus, SynthConfig};
use mergekit::{Error, Result};

/// On-ramp merging behavior analysis on lanelet2 maps and drone trajectories.
#[derive(Debug, Parser)]
#[command(name = "mergekit", version)]
struct Cli {
    #[command(flatten)]
    run: RunArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML run configuration; flags given on the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory searched for `<location>.osm` maps not named in the layout file.
    #[arg(long, global = true, value_name = "DIR")]
    maps_dir: Option<PathBuf>,
    /// Directory with `NN_recordingMeta.csv`, `NN_tracksMeta.csv` and `NN_tracks.csv`.
    #[arg(long, global = true, value_name = "DIR")]
    data_dir: Option<PathBuf>,
    /// Merging-area layout file.
    #[arg(long, global = true, value_name = "FILE")]
    layout: Option<PathBuf>,
    /// Comma-separated location ids; default all locations of the layout file.
    #[arg(long, global = true, value_delimiter = ',', value_name = "IDS")]
    locations: Vec<i64>,
    /// Neighbor distance threshold in meters; repeat for a sweep.
    #[arg(long = "distance-threshold", global = true, value_name = "M")]
    distance_thresholds: Vec<f64>,
    /// Tukey fence multiplier.
    #[arg(long, global = true, value_name = "M")]
    outlier_multiplier: Option<f64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads; default one per core.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Random seed; used by `synth`, recorded otherwise.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse maps and recordings and report per-recording statistics.
    Ingest,
    /// Extract merging events with key positions and solid-line merge counts.
    Extract,
    /// Classify neighbor scenarios at each distance threshold.
    Classify(EventsArg),
    /// Compute microscopic indicators.
    Indicators(EventsArg),
    /// Compute Edie flow, density and speed for each event.
    Macro(EventsArg),
    /// Boxplot summaries and JS divergence.
    Stats {
        /// Directory of a previous run holding `indicators.csv` and `macro.csv`.
        #[arg(long, value_name = "DIR")]
        from: Option<PathBuf>,
    },
    /// Full pipeline: all CSVs, tables, figure bundles and the manifest.
    Report,
    /// Write a synthetic corpus with ground truth.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct EventsArg {
    /// Reuse an `events.csv` from a previous run instead of extracting.
    #[arg(long, value_name = "FILE")]
    events: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Number of merging events (one per scene).
    #[arg(long, default_value_t = SynthConfig::default().events)]
    count: usize,
    #[arg(long, default_value_t = SynthConfig::default().scenes_per_recording)]
    scenes_per_recording: usize,
    #[arg(long, default_value_t = SynthConfig::default().solid_fraction)]
    solid_fraction: f64,
    #[arg(long, default_value_t = SynthConfig::default().consecutive_fraction)]
    consecutive_fraction: f64,
}

fn run_config(args: &RunArgs) -> Result<RunConfig> {
    let mut c = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let set = |slot: &mut Option<PathBuf>, v: &Option<PathBuf>| {
        if v.is_some() {
            slot.clone_from(v);
        }
    };
    set(&mut c.maps_dir, &args.maps_dir);
    set(&mut c.data_dir, &args.data_dir);
    set(&mut c.layout, &args.layout);
    set(&mut c.out, &args.out);
    if !args.locations.is_empty() {
        c.locations.clone_from(&args.locations);
    }
    if !args.distance_thresholds.is_empty() {
        c.distance_thresholds.clone_from(&args.distance_thresholds);
    }
    if let Some(m) = args.outlier_multiplier {
        c.outlier_multiplier = m;
    }
    if args.jobs.is_some() {
        c.jobs = args.jobs;
    }
    if args.seed.is_some() {
        c.seed = args.seed;
    }
    Ok(c)
}

fn synth(config: &RunConfig, args: &SynthArgs) -> Result<RunSummary> {
    let out = config.out_dir()?.to_path_buf();
    let sc = SynthConfig {
        seed: config.seed.unwrap_or(SynthConfig::default().seed),
        events: args.count,
        scenes_per_recording: args.scenes_per_recording,
        solid_fraction: args.solid_fraction,
        consecutive_fraction: args.consecutive_fraction,
        ..SynthConfig::default()
    };
    let corpus = with_jobs(config.jobs, || generate_corpus(&sc))??;
    if out.exists() && std::fs::read_dir(&out).map_err(|e| Error::io(&out, e))?.next().is_some() {
        return Err(Error::Config(format!("synth output directory {} is not empty", out.display())));
    }
    write_corpus(&corpus, &out)?;
    Ok(RunSummary {
        out_dir: out,
        n_recordings: corpus.recordings.len(),
        n_events: corpus.truths.len(),
        files: Vec::new(),
    })
}

fn run(cli: &Cli) -> Result<RunSummary> {
    let config = run_config(&cli.run)?;
    match &cli.command {
        Command::Ingest => run_stage(&config, Stage::Ingest, None),
        Command::Extract => run_stage(&config, Stage::Extract, None),
        Command::Classify(a) => run_stage(&config, Stage::Classify, a.events.as_deref()),
        Command::Indicators(a) => run_stage(&config, Stage::Indicators, a.events.as_deref()),
        Command::Macro(a) => run_stage(&config, Stage::Macro, a.events.as_deref()),
        Command::Stats { from: Some(dir) } => {
            with_jobs(config.jobs, || run_stats_from(&config, dir))?
        }
        Command::Stats { from: None } => run_stage(&config, Stage::Stats, None),
        Command::Report => run_stage(&config, Stage::Report, None),
        Command::Synth(a) => synth(&config, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match std::panic::catch_unwind(|| run(&cli)) {
        Ok(Ok(s)) => {
            println!(
                "{}: {} events from {} recordings -> {}",
                cli_name(&cli.command),
                s.n_events,
                s.n_recordings,
                s.out_dir.display()
            );
            ExitCode::SUCCESS
        }
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(_) => ExitCode::from(4),
    }
}

fn cli_name(c: &Command) -> &'static str {
    match c {
        Command::Ingest => "ingest",
        Command::Extract => "extract",
        Command::Classify(_) => "classify",
        Command::Indicators(_) => "indicators",
        Command::Macro(_) => "macro",
        Command::Stats { .. } => "stats",
        Command::Report => "report",
        Command::Synth(_) => "synth",
    }
}
