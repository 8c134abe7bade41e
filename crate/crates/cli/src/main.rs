use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use burstlab::detect::DetectorParams;
use burstlab::io::{self, fmt_f64, Table};
use burstlab::pipeline::{self, Input, PipelineConfig};
use burstlab::synth::{self, CorpusPlan, SynthSpec};
use burstlab::Error;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

#[derive(Parser, Debug)]
#[command(
    name = "burstlab",
    version,
    about = "Burst detection and endogenous/exogenous classification for keyword time series"
)]
struct Cli {
    /// JSON file with pipeline settings.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    jobs: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Bin an event file into per-keyword unique-user series.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Find burst levels and segments in one series.
    Detect {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated overrides, e.g. `s=2,gamma=1,max_level=8`.
        #[arg(long)]
        params: Option<String>,
    },
    /// Compute per-episode features from a series and its segments.
    Features {
        #[arg(long)]
        series: PathBuf,
        #[arg(long)]
        segments: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the separator and label the bursts of one keyword.
    Classify {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        keyword: String,
        /// Directory for `labels.csv` and `classify_summary.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// ROC curves, critical thresholds and the average curve of a run.
    Roc(RunDir),
    /// Size distributions and exponent histogram of a run.
    Dist(RunDir),
    /// Generate synthetic series with ground truth.
    Synth {
        /// JSON array of series specifications.
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        spec: Option<PathBuf>,
        /// Built-in corpus instead of a spec file.
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        /// Keyword count for the preset corpus.
        #[arg(long, requires = "preset")]
        keywords: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full pipeline from an event file or a directory of raw series.
    Run {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Figure data from a completed run.
    Report(RunDir),
}

#[derive(Args, Debug)]
struct RunDir {
    #[arg(long)]
    run_dir: PathBuf,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum Preset {
    /// Endogenous bumps and exogenous pulses mixed within each keyword.
    Mixed,
}

enum Failure {
    Usage(String),
    Stage(&'static str, Error),
}

impl Failure {
    fn stage(stage: &'static str) -> impl FnOnce(Error) -> Failure {
        move |e| match e {
            Error::Argument(msg) => Failure::Usage(msg),
            e => Failure::Stage(stage, e),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Stage(stage, e)) => {
            eprintln!("error: stage {stage} failed: {e}");
            ExitCode::from(1)
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::from_json_file(path)
            .map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn parse_params(spec: &str, mut params: DetectorParams) -> Result<DetectorParams, Failure> {
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("expected key=value in --params, got {item:?}")))?;
        let bad = || Failure::Usage(format!("bad value for {key}: {value:?}"));
        match key.trim() {
            "s" => params.s = value.trim().parse().map_err(|_| bad())?,
            "gamma" => params.gamma = value.trim().parse().map_err(|_| bad())?,
            "max_level" => params.max_level = Some(value.trim().parse().map_err(|_| bad())?),
            other => return Err(Failure::Usage(format!("unknown detector parameter {other:?}"))),
        }
    }
    params.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(params)
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(&cli)?;
    let jobs = cli.jobs.map(|j| j as usize);
    match cli.command {
        Command::Ingest { input, out } => {
            let ing = pipeline::ingest_events(&input, &cfg, jobs).map_err(Failure::stage("ingest"))?;
            for (raw, smooth) in ing.raw.iter().zip(&ing.series) {
                let name = format!("{}.csv", io::encode_keyword(&raw.keyword));
                io::write_series(&out.join("raw").join(&name), raw).map_err(Failure::stage("ingest"))?;
                io::write_series(&out.join("series").join(&name), smooth).map_err(Failure::stage("ingest"))?;
            }
            if ing.series.is_empty() {
                log::warn!("input contains no keywords");
            }
            println!(
                "ingested {} keywords, {} malformed lines skipped",
                ing.series.len(),
                ing.malformed_lines
            );
        }
        Command::Detect { input, out, params } => {
            let params = match params {
                Some(p) => parse_params(&p, cfg.detector())?,
                None => cfg.detector(),
            };
            let keyword = input
                .file_stem()
                .map(|s| io::decode_keyword(&s.to_string_lossy()))
                .unwrap_or_default();
            let ann = pipeline::stage_detect(&input, &keyword, &params, &out).map_err(Failure::stage("detect"))?;
            println!("{} bursts, top level {}", ann.bursts().count(), ann.top_level);
        }
        Command::Features { series, segments, out } => {
            let set = pipeline::stage_features(&series, &segments, &out).map_err(Failure::stage("features"))?;
            println!("{} pairs, {} excluded", set.pairs.len(), set.excluded);
        }
        Command::Classify { features, keyword, out } => {
            let fit = pipeline::stage_classify(
                &features,
                &keyword,
                &out.join("labels.csv"),
                &out.join("classify_summary.csv"),
            )
            .map_err(Failure::stage("classify"))?;
            let beta = fit.beta.map(fmt_f64).unwrap_or_else(|| "-".into());
            println!(
                "beta {beta}, alpha_sep {}, {} endogenous, {} exogenous",
                fmt_f64(fit.alpha_sep),
                fit.n_endo,
                fit.n_exo
            );
        }
        Command::Roc(RunDir { run_dir }) => {
            let avg = pipeline::stage_roc(&run_dir, cfg.fpr_grid).map_err(Failure::stage("roc"))?;
            match avg {
                Some(a) => println!("average AUC {}", fmt_f64(a.auc)),
                None => println!("no keyword has both classes"),
            }
        }
        Command::Dist(RunDir { run_dir }) => {
            let hist = pipeline::stage_dist(&run_dir, cfg.gates()).map_err(Failure::stage("dist"))?;
            let passing: usize = hist.iter().map(|b| b.endo_count + b.exo_count).sum();
            println!("{passing} passing fits");
        }
        Command::Synth {
            spec,
            preset,
            keywords,
            out,
        } => {
            let specs = match (spec, preset) {
                (Some(path), _) => read_synth_specs(&path)?,
                (None, Some(Preset::Mixed)) => {
                    let mut plan = CorpusPlan {
                        seed: cfg.seed,
                        ..CorpusPlan::default()
                    };
                    if let Some(n) = keywords {
                        plan.n_keywords = n;
                    }
                    synth::mixed_corpus(&plan)
                }
                (None, None) => unreachable!("clap requires --spec or --preset"),
            };
            let n = write_synth(&specs, &out, jobs)?;
            println!("generated {} series with {n} bursts", specs.len());
        }
        Command::Run { input, out } => {
            let input = if input.is_dir() {
                // ingest output keeps the unsmoothed counts under raw/
                let nested = ["raw", "series"]
                    .into_iter()
                    .map(|d| input.join(d))
                    .find(|d| d.is_dir());
                Input::SeriesDir(nested.unwrap_or(input))
            } else {
                Input::Events(input)
            };
            let report = pipeline::run_pipeline(&cfg, &input, &out, jobs).map_err(|e| match e.source {
                Error::Argument(msg) => Failure::Usage(msg),
                source => Failure::Stage(e.stage, source),
            })?;
            let m = &report.manifest;
            println!(
                "{} keywords analysed, {} degenerate, {} pairs",
                m.counters.keywords_analyzed,
                m.degenerate.len(),
                m.counters.pairs
            );
            if let Some(auc) = m.average_auc {
                println!("average AUC {}", fmt_f64(auc));
            }
        }
        Command::Report(RunDir { run_dir }) => {
            let files = pipeline::report_figures(&run_dir).map_err(Failure::stage("report"))?;
            for f in files {
                println!("{}", f.display());
            }
        }
    }
    Ok(())
}

fn read_synth_specs(path: &Path) -> Result<Vec<SynthSpec>, Failure> {
    let file = File::open(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

/// Writes `series/<kw>.csv` and `truth.csv`; returns the number of bursts.
fn write_synth(specs: &[SynthSpec], out: &Path, jobs: Option<usize>) -> Result<usize, Failure> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let generated: Vec<_> = pool.install(|| specs.par_iter().map(synth::generate).collect());
    let mut truth = Table::new(&["keyword", "kind", "start", "end", "height"]).map_err(Failure::stage("synth"))?;
    let mut n = 0;
    for g in generated {
        let g = g.map_err(|e| match e {
            Error::Spec(msg) => Failure::Usage(msg),
            e => Failure::Stage("synth", e),
        })?;
        let path = out
            .join("series")
            .join(format!("{}.csv", io::encode_keyword(&g.series.keyword)));
        io::write_series(&path, &g.series).map_err(Failure::stage("synth"))?;
        for t in &g.truth {
            truth
                .row([
                    t.keyword.clone(),
                    t.kind.to_string(),
                    t.start.to_string(),
                    t.end.to_string(),
                    fmt_f64(t.height),
                ])
                .map_err(Failure::stage("synth"))?;
        }
        n += g.truth.len();
    }
    truth
        .write_to(&out.join("truth.csv"))
        .map_err(Failure::stage("synth"))?;
    Ok(n)
}
