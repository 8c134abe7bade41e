//! End-to-end batch run over a corpus and the figure-data report.
//!
//! Run directory layout:
//!
//! ```text
//! manifest.json
//! series/<kw>.csv                    bin_index,time,value (analysed series)
//! keywords/<kw>/levels.csv           bin_index,value,level
//! keywords/<kw>/segments.csv         kind,start,end
//! keywords/<kw>/features.csv         i,sigma,e_mean,size,peak,peak_ratio,scaled_size,fluct,response
//! keywords/<kw>/labels.csv           i,scaled_size,peak_ratio,label
//! keywords/<kw>/ccdf_<class>.csv     size,fraction
//! classify_summary.csv               keyword,beta,alpha_free,alpha_sep,n_endo,n_exo
//! beta_rank.csv                      keyword,rank,beta
//! roc_curves.csv                     keyword,threshold,fpr,tpr
//! roc_summary.csv                    keyword,auc,theta,youden_j
//! average_roc.csv                    fpr,tpr
//! dist_fits.csv                      keyword,class,ccdf_exponent,pdf_exponent,r2,n_points,passed
//! exponent_histogram.csv             bin_low,bin_high,endo_count,exo_count
//! figures/fig<N>.csv                 written by `report_figures`
//! ```
//!
//! `<kw>` is the keyword passed through [`io::encode_keyword`].

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{self, BetaRow, KeywordBeta, SeparatorFit};
use crate::detect::{self, BurstAnnotation, DetectorParams, Segment};
use crate::features::{self, EpisodePair, Origin};
use crate::fluct_response::{self, CriticalThreshold, RocCurve};
use crate::ingest::{self, FrequencySeries, Span};
use crate::io::{self, fmt_f64, Table};
use crate::size_dist::{self, ClassDistributions, FitGates, HistogramBin, PowerLawFit};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seconds per bin when binning events.
    pub bin_width: u64,
    /// Gaussian smoothing standard deviation in seconds.
    pub smooth_sigma: f64,
    pub s: f64,
    pub gamma: f64,
    pub max_level: Option<usize>,
    pub r2_min: f64,
    pub min_ccdf_points: usize,
    pub fpr_grid: usize,
    /// Keep only the `top_k` highest-volume keywords.
    pub top_k: Option<usize>,
    /// Explicit keyword selection; overrides `top_k` when non-empty.
    pub keywords: Vec<String>,
    /// Smooth prebuilt series that are flagged raw.
    pub smooth_series: bool,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            bin_width: ingest::DEFAULT_BIN_WIDTH,
            smooth_sigma: ingest::DEFAULT_SMOOTH_SIGMA,
            s: 2.0,
            gamma: 1.0,
            max_level: None,
            r2_min: size_dist::DEFAULT_R2_MIN,
            min_ccdf_points: size_dist::DEFAULT_MIN_POINTS,
            fpr_grid: fluct_response::FPR_GRID_POINTS,
            top_k: None,
            keywords: Vec::new(),
            smooth_series: true,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::file(path, e))?;
        let cfg: PipelineConfig = serde_json::from_reader(BufReader::new(file))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bin_width == 0 {
            return Err(Error::arg("bin_width must be positive"));
        }
        if !(self.smooth_sigma > 0.0) {
            return Err(Error::arg("smooth_sigma must be positive"));
        }
        if !(self.r2_min > 0.0 && self.r2_min < 1.0) {
            return Err(Error::arg("r2_min must lie in (0, 1)"));
        }
        if self.min_ccdf_points == 0 {
            return Err(Error::arg("min_ccdf_points must be positive"));
        }
        if self.fpr_grid < 2 {
            return Err(Error::arg("fpr_grid needs at least two points"));
        }
        if self.top_k == Some(0) {
            return Err(Error::arg("top_k must be positive"));
        }
        self.detector().validate()
    }

    pub fn detector(&self) -> DetectorParams {
        DetectorParams {
            s: self.s,
            gamma: self.gamma,
            max_level: self.max_level,
        }
    }

    pub fn gates(&self) -> FitGates {
        FitGates {
            r2_min: self.r2_min,
            min_points: self.min_ccdf_points,
        }
    }
}

/// Everything computed for one keyword.
#[derive(Debug, Clone)]
pub struct KeywordAnalysis {
    pub keyword: String,
    /// Sum of the input series before smoothing, used for ranking.
    pub total_frequency: f64,
    pub series: FrequencySeries,
    pub annotation: BurstAnnotation,
    pub pairs: Vec<EpisodePair>,
    pub excluded_pairs: usize,
    pub classifier: Option<SeparatorFit>,
    pub roc: Option<RocCurve>,
    pub threshold: Option<CriticalThreshold>,
    pub distributions: ClassDistributions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Degenerate {
    pub keyword: String,
    pub reason: String,
}

/// Detection, features, labels, ROC and size distributions for one series.
pub fn analyze_series(input: &FrequencySeries, cfg: &PipelineConfig) -> Result<KeywordAnalysis> {
    let series = if input.raw && cfg.smooth_series {
        ingest::gaussian_smooth(input, cfg.smooth_sigma)?
    } else {
        input.clone()
    };
    let annotation = detect::detect(&series, &cfg.detector())?;
    let episodes = detect::pair_episodes(&annotation);
    let set = features::build_pairs(&series, &episodes)?;
    let mut pairs = set.pairs;
    let classifier = if pairs.is_empty() {
        None
    } else {
        Some(classify::classify_keyword(&mut pairs)?)
    };
    let roc = fluct_response::roc_curve(&pairs).ok();
    let threshold = fluct_response::critical_threshold(&pairs).ok();
    let distributions = size_dist::class_distributions(&pairs, cfg.gates())?;
    Ok(KeywordAnalysis {
        keyword: input.keyword.clone(),
        total_frequency: input.total(),
        series,
        annotation,
        pairs,
        excluded_pairs: set.excluded,
        classifier,
        roc,
        threshold,
        distributions,
    })
}

#[derive(Debug, Clone)]
pub struct CorpusAnalysis {
    pub keywords: Vec<KeywordAnalysis>,
    pub degenerate: Vec<Degenerate>,
    pub beta_table: Vec<BetaRow>,
    pub average_roc: Option<RocCurve>,
    pub histogram: Vec<HistogramBin>,
}

impl CorpusAnalysis {
    pub fn endo_fits(&self) -> Vec<PowerLawFit> {
        self.keywords
            .iter()
            .filter_map(|k| k.distributions.endogenous.as_ref()?.fit)
            .collect()
    }

    pub fn exo_fits(&self) -> Vec<PowerLawFit> {
        self.keywords
            .iter()
            .filter_map(|k| k.distributions.exogenous.as_ref()?.fit)
            .collect()
    }
}

fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::arg(format!("cannot build worker pool: {e}")))
}

/// Analyses every series on a bounded worker pool, then runs the
/// corpus-level reductions. Results are ordered as the input.
pub fn analyze_corpus(series: &[FrequencySeries], cfg: &PipelineConfig, jobs: Option<usize>) -> Result<CorpusAnalysis> {
    cfg.validate()?;
    let pool = thread_pool(jobs)?;
    let results: Vec<Result<KeywordAnalysis>> =
        pool.install(|| series.par_iter().map(|s| analyze_series(s, cfg)).collect());

    let mut keywords = Vec::new();
    let mut degenerate = Vec::new();
    for (s, res) in series.iter().zip(results) {
        match res {
            Ok(a) => keywords.push(a),
            Err(e @ (Error::DegenerateSeries | Error::FitDegenerate(_))) => {
                log::warn!("{}: skipped, {e}", s.keyword);
                degenerate.push(Degenerate {
                    keyword: s.keyword.clone(),
                    reason: e.to_string(),
                });
            }
            Err(e) => return Err(e),
        }
    }

    let betas: Vec<KeywordBeta> = keywords
        .iter()
        .map(|k| KeywordBeta {
            keyword: k.keyword.clone(),
            total_frequency: k.total_frequency,
            beta: k.classifier.as_ref().and_then(|c| c.beta),
        })
        .collect();
    let beta_table = classify::beta_rank_table(&betas);
    let curves: Vec<RocCurve> = keywords.iter().filter_map(|k| k.roc.clone()).collect();
    let average_roc = if curves.is_empty() {
        None
    } else {
        Some(fluct_response::average_roc_on_grid(&curves, cfg.fpr_grid)?)
    };
    let mut corpus = CorpusAnalysis {
        keywords,
        degenerate,
        beta_table,
        average_roc,
        histogram: Vec::new(),
    };
    corpus.histogram = size_dist::exponent_histogram(&corpus.endo_fits(), &corpus.exo_fits());
    Ok(corpus)
}

/// Where `run` reads its corpus from.
#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    /// Line-delimited event records.
    Events(PathBuf),
    /// Directory of `<kw>.csv` series files, treated as raw counts.
    SeriesDir(PathBuf),
}

#[derive(Debug, Default, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    pub malformed_lines: usize,
    pub out_of_span_events: usize,
    pub keywords_in: usize,
    pub keywords_analyzed: usize,
    pub pairs: usize,
    pub excluded_pairs: usize,
    pub beta_fits: usize,
    pub roc_curves: usize,
    pub passing_endo_fits: usize,
    pub passing_exo_fits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub input: String,
    pub config: PipelineConfig,
    pub seed: u64,
    pub counters: Counters,
    pub degenerate: Vec<Degenerate>,
    /// Keywords whose β falls outside (0, 1].
    pub beta_anomalies: Vec<String>,
    pub average_auc: Option<f64>,
    pub warnings: Vec<String>,
    pub fatal_errors: usize,
}

/// Error from a named pipeline stage.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub source: Error,
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "stage {} failed: {}", self.stage, self.source)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

trait Stage<T> {
    fn stage(self, name: &'static str) -> std::result::Result<T, StageError>;
}

impl<T> Stage<T> for Result<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

/// Binned and smoothed series for the selected keywords of an event file.
pub struct IngestOutput {
    /// Unique-user counts per bin.
    pub raw: Vec<FrequencySeries>,
    /// `raw` after Gaussian smoothing.
    pub series: Vec<FrequencySeries>,
    pub malformed_lines: usize,
    pub out_of_span_events: usize,
}

pub fn ingest_events(path: &Path, cfg: &PipelineConfig, jobs: Option<usize>) -> Result<IngestOutput> {
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    let parsed = ingest::parse_events(BufReader::new(file))?;
    let events = parsed.records;
    let Some(span) = Span::covering(&events, cfg.bin_width) else {
        return Ok(IngestOutput {
            raw: Vec::new(),
            series: Vec::new(),
            malformed_lines: parsed.malformed,
            out_of_span_events: 0,
        });
    };
    let ranked = ingest::keywords_by_volume(&events);
    let selected: Vec<String> = if !cfg.keywords.is_empty() {
        cfg.keywords.clone()
    } else {
        let take = cfg.top_k.unwrap_or(ranked.len());
        ranked.into_iter().take(take).map(|(k, _)| k).collect()
    };
    let pool = thread_pool(jobs)?;
    let binned: Vec<Result<(FrequencySeries, FrequencySeries, usize)>> = pool.install(|| {
        selected
            .par_iter()
            .map(|kw| {
                let b = ingest::bin_unique_users(&events, kw, cfg.bin_width, span)?;
                let smooth = ingest::gaussian_smooth(&b.series, cfg.smooth_sigma)?;
                Ok((b.series, smooth, b.out_of_span))
            })
            .collect()
    });
    let mut out = IngestOutput {
        raw: Vec::with_capacity(binned.len()),
        series: Vec::with_capacity(binned.len()),
        malformed_lines: parsed.malformed,
        out_of_span_events: 0,
    };
    for b in binned {
        let (raw, series, skipped) = b?;
        out.out_of_span_events += skipped;
        out.raw.push(raw);
        out.series.push(series);
    }
    Ok(out)
}

/// Reads every `<kw>.csv` series in `dir` as raw counts.
pub fn read_series_dir(dir: &Path, cfg: &PipelineConfig) -> Result<Vec<FrequencySeries>> {
    let mut out = Vec::new();
    for (keyword, path) in io::list_series_dir(dir)? {
        if !cfg.keywords.is_empty() && !cfg.keywords.contains(&keyword) {
            continue;
        }
        out.push(io::read_series(&path, &keyword, cfg.bin_width, true)?);
    }
    if cfg.keywords.is_empty() {
        if let Some(k) = cfg.top_k {
            out.sort_by(|a, b| b.total().total_cmp(&a.total()).then_with(|| a.keyword.cmp(&b.keyword)));
            out.truncate(k);
            out.sort_by(|a, b| a.keyword.cmp(&b.keyword));
        }
    }
    Ok(out)
}

pub fn keyword_dir(out: &Path, keyword: &str) -> PathBuf {
    out.join("keywords").join(io::encode_keyword(keyword))
}

fn class_name(origin: Origin) -> &'static str {
    match origin {
        Origin::Endogenous => "endogenous",
        Origin::Exogenous => "exogenous",
        Origin::Unlabeled => "unlabeled",
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Writes per-keyword and corpus-level outputs for an analysed corpus.
pub fn write_corpus(out: &Path, corpus: &CorpusAnalysis) -> Result<()> {
    let keywords_root = out.join("keywords");
    std::fs::create_dir_all(&keywords_root).map_err(|e| Error::file(&keywords_root, e))?;
    for k in &corpus.keywords {
        let dir = keyword_dir(out, &k.keyword);
        io::write_series(
            &out.join("series")
                .join(format!("{}.csv", io::encode_keyword(&k.keyword))),
            &k.series,
        )?;
        io::write_levels(&dir.join("levels.csv"), &k.series.values, &k.annotation.levels)?;
        io::write_segments(&dir.join("segments.csv"), &k.annotation.segments)?;
        io::write_features(&dir.join("features.csv"), &k.pairs)?;
        io::write_labels(&dir.join("labels.csv"), &k.pairs)?;
        write_ccdfs(&dir, &k.distributions)?;
    }

    let mut summary = Table::new(&CLASSIFY_SUMMARY_HEADER)?;
    for k in &corpus.keywords {
        if let Some(c) = &k.classifier {
            summary.row(classify_summary_row(&k.keyword, c))?;
        }
    }
    summary.write_to(&out.join("classify_summary.csv"))?;

    write_beta_rank(&out.join("beta_rank.csv"), &corpus.beta_table)?;

    let rocs: Vec<(String, RocCurve, Option<CriticalThreshold>)> = corpus
        .keywords
        .iter()
        .filter_map(|k| Some((k.keyword.clone(), k.roc.clone()?, k.threshold)))
        .collect();
    write_roc_outputs(out, &rocs, corpus.average_roc.as_ref())?;

    let dists: Vec<(String, ClassDistributions)> = corpus
        .keywords
        .iter()
        .map(|k| (k.keyword.clone(), k.distributions.clone()))
        .collect();
    write_dist_summary(out, &dists, &corpus.histogram)
}

pub const CLASSIFY_SUMMARY_HEADER: [&str; 6] = ["keyword", "beta", "alpha_free", "alpha_sep", "n_endo", "n_exo"];

fn classify_summary_row(keyword: &str, c: &SeparatorFit) -> Vec<String> {
    vec![
        keyword.to_string(),
        opt(c.beta),
        opt(c.alpha_free),
        fmt_f64(c.alpha_sep),
        c.n_endo.to_string(),
        c.n_exo.to_string(),
    ]
}

fn write_beta_rank(path: &Path, rows: &[BetaRow]) -> Result<()> {
    let mut t = Table::new(&["keyword", "rank", "beta"])?;
    for r in rows {
        t.row([r.keyword.clone(), r.rank.to_string(), fmt_f64(r.beta)])?;
    }
    t.write_to(path)
}

fn write_ccdfs(dir: &Path, d: &ClassDistributions) -> Result<()> {
    for (origin, class) in [(Origin::Endogenous, &d.endogenous), (Origin::Exogenous, &d.exogenous)] {
        let path = dir.join(format!("ccdf_{}.csv", class_name(origin)));
        let mut t = Table::new(&["size", "fraction"])?;
        if let Some(class) = class {
            for p in &class.ccdf {
                t.row([fmt_f64(p.size), fmt_f64(p.fraction)])?;
            }
        }
        t.write_to(&path)?;
    }
    Ok(())
}

fn write_roc_outputs(
    out: &Path,
    rocs: &[(String, RocCurve, Option<CriticalThreshold>)],
    average: Option<&RocCurve>,
) -> Result<()> {
    let mut curves = Table::new(&["keyword", "threshold", "fpr", "tpr"])?;
    let mut summary = Table::new(&["keyword", "auc", "theta", "youden_j"])?;
    for (kw, roc, thr) in rocs {
        for p in &roc.points {
            curves.row([kw.clone(), opt(p.threshold), fmt_f64(p.fpr), fmt_f64(p.tpr)])?;
        }
        summary.row([
            kw.clone(),
            fmt_f64(roc.auc),
            opt(thr.map(|t| t.theta)),
            opt(thr.map(|t| t.youden_j)),
        ])?;
    }
    curves.write_to(&out.join("roc_curves.csv"))?;
    summary.write_to(&out.join("roc_summary.csv"))?;
    let mut avg = Table::new(&["fpr", "tpr"])?;
    if let Some(a) = average {
        for p in &a.points {
            avg.row([fmt_f64(p.fpr), fmt_f64(p.tpr)])?;
        }
    }
    avg.write_to(&out.join("average_roc.csv"))
}

fn write_dist_summary(out: &Path, dists: &[(String, ClassDistributions)], histogram: &[HistogramBin]) -> Result<()> {
    let mut fits = Table::new(&[
        "keyword",
        "class",
        "ccdf_exponent",
        "pdf_exponent",
        "r2",
        "n_points",
        "passed",
    ])?;
    for (kw, d) in dists {
        for (origin, class) in [(Origin::Endogenous, &d.endogenous), (Origin::Exogenous, &d.exogenous)] {
            if let Some(f) = class.as_ref().and_then(|c| c.fit) {
                fits.row([
                    kw.clone(),
                    class_name(origin).to_string(),
                    fmt_f64(f.ccdf_exponent),
                    fmt_f64(f.pdf_exponent),
                    fmt_f64(f.r2),
                    f.n_points.to_string(),
                    f.passed.to_string(),
                ])?;
            }
        }
    }
    fits.write_to(&out.join("dist_fits.csv"))?;
    let mut hist = Table::new(&["bin_low", "bin_high", "endo_count", "exo_count"])?;
    for b in histogram {
        hist.row([
            fmt_f64(b.bin_low),
            fmt_f64(b.bin_high),
            b.endo_count.to_string(),
            b.exo_count.to_string(),
        ])?;
    }
    hist.write_to(&out.join("exponent_histogram.csv"))
}

/// Outcome of [`run_pipeline`].
#[derive(Debug, Clone)]
pub struct RunReport {
    pub manifest: Manifest,
    pub corpus: CorpusAnalysis,
}

/// Ingest (or load) a corpus, analyse it, and write the run directory.
pub fn run_pipeline(
    cfg: &PipelineConfig,
    input: &Input,
    out: &Path,
    jobs: Option<usize>,
) -> std::result::Result<RunReport, StageError> {
    cfg.validate().stage("config")?;
    let mut counters = Counters::default();
    let mut warnings = Vec::new();
    let (series, input_desc) = match input {
        Input::Events(path) => {
            let ing = ingest_events(path, cfg, jobs).stage("ingest")?;
            counters.malformed_lines = ing.malformed_lines;
            counters.out_of_span_events = ing.out_of_span_events;
            if ing.malformed_lines > 0 {
                warnings.push(format!("{} malformed input lines skipped", ing.malformed_lines));
            }
            (ing.series, path.display().to_string())
        }
        Input::SeriesDir(dir) => (read_series_dir(dir, cfg).stage("ingest")?, dir.display().to_string()),
    };
    if series.is_empty() {
        log::warn!("input contains no keywords");
        warnings.push("input contains no keywords".into());
    }
    counters.keywords_in = series.len();

    let corpus = analyze_corpus(&series, cfg, jobs).stage("analyze")?;
    counters.keywords_analyzed = corpus.keywords.len();
    for k in &corpus.keywords {
        counters.pairs += k.pairs.len();
        counters.excluded_pairs += k.excluded_pairs;
        counters.beta_fits += usize::from(k.classifier.as_ref().is_some_and(|c| c.beta.is_some()));
        counters.roc_curves += usize::from(k.roc.is_some());
    }
    counters.passing_endo_fits = corpus.endo_fits().iter().filter(|f| f.passed).count();
    counters.passing_exo_fits = corpus.exo_fits().iter().filter(|f| f.passed).count();
    let beta_anomalies = corpus
        .keywords
        .iter()
        .filter(|k| k.classifier.as_ref().is_some_and(|c| c.beta_anomalous()))
        .map(|k| k.keyword.clone())
        .collect();

    write_corpus(out, &corpus).stage("write")?;
    let manifest = Manifest {
        tool: "burstlab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        input: input_desc,
        config: cfg.clone(),
        seed: cfg.seed,
        counters,
        degenerate: corpus.degenerate.clone(),
        beta_anomalies,
        average_auc: corpus.average_roc.as_ref().map(|r| r.auc),
        warnings,
        fatal_errors: 0,
    };
    write_manifest(out, &manifest).stage("write")?;
    Ok(RunReport { manifest, corpus })
}

pub fn write_manifest(out: &Path, manifest: &Manifest) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(manifest)?;
    bytes.push(b'\n');
    io::write_atomic(&out.join("manifest.json"), &bytes)
}

pub fn read_manifest(out: &Path) -> Result<Manifest> {
    let path = out.join("manifest.json");
    let file = File::open(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.clone()),
        _ => Error::file(&path, e),
    })?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

// Single-stage entry points used by the CLI subcommands.

/// `detect`: levels and segments for one series file.
pub fn stage_detect(
    series_path: &Path,
    keyword: &str,
    params: &DetectorParams,
    out_dir: &Path,
) -> Result<BurstAnnotation> {
    let series = io::read_series(series_path, keyword, ingest::DEFAULT_BIN_WIDTH, false)?;
    let ann = detect::detect(&series, params)?;
    io::write_levels(&out_dir.join("levels.csv"), &series.values, &ann.levels)?;
    io::write_segments(&out_dir.join("segments.csv"), &ann.segments)?;
    Ok(ann)
}

/// `features`: episode features from a series and its segments.
pub fn stage_features(series_path: &Path, segments_path: &Path, out_path: &Path) -> Result<features::PairSet> {
    let series = io::read_series(series_path, "", ingest::DEFAULT_BIN_WIDTH, false)?;
    let segments = io::read_segments(segments_path)?;
    if segments.last().is_some_and(|s| s.end > series.len()) {
        return Err(Error::Malformed {
            path: segments_path.to_path_buf(),
            reason: "segments extend past the series".into(),
        });
    }
    let set = features::build_pairs(&series, &detect::pair_segments(&segments))?;
    io::write_features(out_path, &set.pairs)?;
    Ok(set)
}

/// `classify`: labels and one summary row for a features file.
pub fn stage_classify(
    features_path: &Path,
    keyword: &str,
    labels_path: &Path,
    summary_path: &Path,
) -> Result<SeparatorFit> {
    let mut pairs = io::read_features(features_path)?;
    let fit = classify::classify_keyword(&mut pairs)?;
    io::write_labels(labels_path, &pairs)?;
    let mut t = Table::new(&CLASSIFY_SUMMARY_HEADER)?;
    t.row(classify_summary_row(keyword, &fit))?;
    t.write_to(summary_path)?;
    Ok(fit)
}

/// Keywords with a `keywords/<kw>/` directory, sorted.
pub fn run_keywords(run_dir: &Path) -> Result<Vec<String>> {
    let dir = run_dir.join("keywords");
    if !dir.exists() {
        return Err(Error::MissingFile(dir));
    }
    let mut out = Vec::new();
    for entry in std::fs::read_dir(&dir).map_err(|e| Error::file(&dir, e))? {
        let entry = entry.map_err(|e| Error::file(&dir, e))?;
        if entry.path().is_dir() {
            out.push(io::decode_keyword(&entry.file_name().to_string_lossy()));
        }
    }
    out.sort();
    Ok(out)
}

/// Labelled pairs of one keyword from its features and labels files.
pub fn load_labelled_pairs(run_dir: &Path, keyword: &str) -> Result<Vec<EpisodePair>> {
    let dir = keyword_dir(run_dir, keyword);
    let mut pairs = io::read_features(&dir.join("features.csv"))?;
    let labels_path = dir.join("labels.csv");
    let labels = io::read_labels(&labels_path)?;
    io::apply_labels(&labels_path, &mut pairs, &labels)?;
    Ok(pairs)
}

/// `roc`: per-keyword curves, thresholds and the averaged curve.
pub fn stage_roc(run_dir: &Path, fpr_grid: usize) -> Result<Option<RocCurve>> {
    let mut rocs = Vec::new();
    for kw in run_keywords(run_dir)? {
        let pairs = load_labelled_pairs(run_dir, &kw)?;
        if let Ok(roc) = fluct_response::roc_curve(&pairs) {
            let thr = fluct_response::critical_threshold(&pairs).ok();
            rocs.push((kw, roc, thr));
        }
    }
    let curves: Vec<RocCurve> = rocs.iter().map(|r| r.1.clone()).collect();
    let average = if curves.is_empty() {
        None
    } else {
        Some(fluct_response::average_roc_on_grid(&curves, fpr_grid)?)
    };
    write_roc_outputs(run_dir, &rocs, average.as_ref())?;
    Ok(average)
}

/// `dist`: per-class CCDFs, fits and the exponent histogram.
pub fn stage_dist(run_dir: &Path, gates: FitGates) -> Result<Vec<HistogramBin>> {
    let mut dists = Vec::new();
    for kw in run_keywords(run_dir)? {
        let pairs = load_labelled_pairs(run_dir, &kw)?;
        let d = size_dist::class_distributions(&pairs, gates)?;
        write_ccdfs(&keyword_dir(run_dir, &kw), &d)?;
        dists.push((kw, d));
    }
    let fits = |f: fn(&ClassDistributions) -> Option<PowerLawFit>| -> Vec<PowerLawFit> {
        dists.iter().filter_map(|(_, d)| f(d)).collect()
    };
    let histogram = size_dist::exponent_histogram(
        &fits(|d| d.endogenous.as_ref()?.fit),
        &fits(|d| d.exogenous.as_ref()?.fit),
    );
    write_dist_summary(run_dir, &dists, &histogram)?;
    Ok(histogram)
}

fn copy_table(src: &Path, header: &[&str], dst: &Path, columns: &[usize], new_header: &[&str]) -> Result<usize> {
    let rows = io::read_table(src, header)?;
    let mut t = Table::new(new_header)?;
    for r in &rows {
        t.row(columns.iter().map(|&c| r.get(c).unwrap_or("")))?;
    }
    t.write_to(dst)?;
    Ok(rows.len())
}

/// Writes `figures/fig3.csv` … `figures/fig10.csv` from a completed run.
/// Returns the files written.
pub fn report_figures(run_dir: &Path) -> Result<Vec<PathBuf>> {
    read_manifest(run_dir)?;
    let fig_dir = run_dir.join("figures");
    let keywords = run_keywords(run_dir)?;

    let summary_rows = io::read_table(&run_dir.join("classify_summary.csv"), &CLASSIFY_SUMMARY_HEADER)?;
    let alpha_sep: BTreeMap<String, String> = summary_rows
        .iter()
        .map(|r| (r.get(0).unwrap_or("").to_string(), r.get(3).unwrap_or("").to_string()))
        .collect();

    let mut fig3 = Table::new(&["keyword", "scaled_size", "peak_ratio"])?;
    let mut fig5 = Table::new(&["keyword", "scaled_size", "peak_ratio", "label", "alpha_sep"])?;
    let mut fig6 = Table::new(&["keyword", "fluct", "response", "label"])?;
    let mut fig7 = Table::new(&[
        "keyword",
        "i",
        "baseline_start",
        "baseline_end",
        "burst_start",
        "burst_end",
        "fluct",
        "response",
        "label",
    ])?;
    let mut fig9 = Table::new(&["keyword", "class", "size", "fraction"])?;
    for kw in &keywords {
        let pairs = load_labelled_pairs(run_dir, kw)?;
        let dir = keyword_dir(run_dir, kw);
        let episodes: Vec<(Segment, Segment)> = detect::pair_segments(&io::read_segments(&dir.join("segments.csv"))?);
        let alpha = alpha_sep.get(kw).cloned().unwrap_or_default();
        for p in &pairs {
            let (x, y, label) = (fmt_f64(p.scaled_size), fmt_f64(p.peak_ratio), p.label.to_string());
            fig3.row([kw.clone(), x.clone(), y.clone()])?;
            fig5.row([kw.clone(), x, y, label.clone(), alpha.clone()])?;
            fig6.row([kw.clone(), fmt_f64(p.fluct), fmt_f64(p.response), label.clone()])?;
            let (a, b) = episodes.get(p.index).ok_or_else(|| Error::Malformed {
                path: dir.join("segments.csv"),
                reason: format!("no episode for pair {}", p.index),
            })?;
            fig7.row([
                kw.clone(),
                p.index.to_string(),
                a.start.to_string(),
                a.end.to_string(),
                b.start.to_string(),
                b.end.to_string(),
                fmt_f64(p.fluct),
                fmt_f64(p.response),
                label,
            ])?;
        }
        for class in ["endogenous", "exogenous"] {
            for r in io::read_table(&dir.join(format!("ccdf_{class}.csv")), &["size", "fraction"])? {
                fig9.row([kw.as_str(), class, r.get(0).unwrap_or(""), r.get(1).unwrap_or("")])?;
            }
        }
    }

    let mut written = Vec::new();
    let mut emit = |name: &str, table: Table| -> Result<()> {
        let path = fig_dir.join(name);
        table.write_to(&path)?;
        written.push(path);
        Ok(())
    };
    emit("fig3.csv", fig3)?;

    let fig4_path = fig_dir.join("fig4.csv");
    copy_table(
        &run_dir.join("beta_rank.csv"),
        &["keyword", "rank", "beta"],
        &fig4_path,
        &[1, 2],
        &["rank", "beta"],
    )?;
    emit("fig5.csv", fig5)?;
    emit("fig6.csv", fig6)?;
    emit("fig7.csv", fig7)?;

    let mut fig8 = Table::new(&["curve", "keyword", "fpr", "tpr"])?;
    for r in io::read_table(&run_dir.join("roc_curves.csv"), &["keyword", "threshold", "fpr", "tpr"])? {
        fig8.row([
            "keyword",
            r.get(0).unwrap_or(""),
            r.get(2).unwrap_or(""),
            r.get(3).unwrap_or(""),
        ])?;
    }
    for r in io::read_table(&run_dir.join("average_roc.csv"), &["fpr", "tpr"])? {
        fig8.row(["average", "", r.get(0).unwrap_or(""), r.get(1).unwrap_or("")])?;
    }
    emit("fig8.csv", fig8)?;
    emit("fig9.csv", fig9)?;

    let fig10_path = fig_dir.join("fig10.csv");
    let hist_header = ["bin_low", "bin_high", "endo_count", "exo_count"];
    copy_table(
        &run_dir.join("exponent_histogram.csv"),
        &hist_header,
        &fig10_path,
        &[0, 1, 2, 3],
        &hist_header,
    )?;

    written.insert(1, fig4_path);
    written.push(fig10_path);
    Ok(written)
}
