//! `stairward` command line.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use crate::benchmark::report::{render_table, rows_from_csv};
use crate::benchmark::{
    run_benchmark, BenchmarkConfig, BenchmarkReport, JoinedData, MetricScore, SubsetCriterion, DEFAULT_TEST_FRACTION,
};
use crate::dataset::{
    decode_image, format_float, import_manifest, load_manifest, read_mos, read_ratings, read_scores, write_mos,
    write_scores, ColumnMapping, DatasetManifest,
};
use crate::error::{Error, Result};
use crate::mos::{run_pipeline, Dimension, DEFAULT_OUTLIER_THRESHOLD};
use crate::prompt_seg::{default_rules, SegmentationRules};
use crate::scorer::{ImageRef, Scorer, ScorerDescriptor, ScorerKind};
use crate::stair_reward::{compute_stair_reward, AblationMode, StairBreakdown};

/// Environment variable replacing the command line of an external scorer.
pub const SCORER_CMD_ENV: &str = "STAIRWARD_SCORER_CMD";

#[derive(Debug, Parser)]
#[command(name = "stairward", version, about = "StairReward alignment scoring and MOS benchmarking")]
pub struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn raw ratings into MOS.
    Mos(MosArgs),
    /// Score every manifest image with StairReward.
    Score(ScoreArgs),
    /// Correlate metric scores with MOS over repeated grouped splits.
    Bench(BenchArgs),
    /// Benchmark the four ablation modes side by side.
    Ablate(AblateArgs),
    /// Print a saved report CSV as an aligned table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct MosArgs {
    /// Ratings CSV: image_id,rater_id,session_id,dimension,score.
    #[arg(long)]
    pub ratings: PathBuf,
    /// Output MOS CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Raters whose leave-one-out SRoCC falls below this are dropped.
    #[arg(long, default_value_t = DEFAULT_OUTLIER_THRESHOLD)]
    pub outlier_threshold: f64,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Metadata CSV.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory image paths are relative to [default: the manifest's directory].
    #[arg(long)]
    pub root: Option<PathBuf>,
    /// key=value file mapping a foreign metadata layout onto the canonical columns.
    #[arg(long)]
    pub mapping: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScorerArgs {
    /// `constant:<c>`, `lexical`, or a scorer TOML file.
    #[arg(long)]
    pub scorer: String,
    /// Segmentation rules file [default: built-in rules].
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// Concurrent scorer processes for external scorers.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[command(flatten)]
    pub scorer: ScorerArgs,
    /// none, word, image or all.
    #[arg(long, default_value = "none")]
    pub mode: String,
    /// Also write per-morpheme details to this CSV.
    #[arg(long)]
    pub breakdown: Option<PathBuf>,
    /// Output metric-score CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Comma-separated criteria: all, model_group, prompt_length, style.
    #[arg(long, default_value = "all")]
    pub subsets: String,
    /// Number of repeated splits.
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// perception or alignment.
    #[arg(long, default_value = "alignment")]
    pub dimension: String,
    #[arg(long, default_value_t = DEFAULT_TEST_FRACTION)]
    pub test_fraction: f64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Metric-score CSV: image_id,metric_name,value.
    #[arg(long)]
    pub scores: PathBuf,
    /// MOS CSV.
    #[arg(long)]
    pub mos: PathBuf,
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Repetitions run concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Write (x, x_hat, mos) files of the first repetition here.
    #[arg(long)]
    pub scatter_dir: Option<PathBuf>,
    /// Report CSV; the aligned table goes next to it with a .txt extension.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[command(flatten)]
    pub scorer: ScorerArgs,
    /// MOS CSV.
    #[arg(long)]
    pub mos: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "alignment")]
    pub dimension: String,
    #[arg(long, default_value_t = DEFAULT_TEST_FRACTION)]
    pub test_fraction: f64,
    /// Ablation CSV; the aligned table goes next to it with a .txt extension.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report CSV written by `bench`.
    #[arg(long)]
    pub input: PathBuf,
    /// Write the table here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Mos(a) => cmd_mos(a),
        Command::Score(a) => cmd_score(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} {} does not exist", path.display())))
    }
}

fn require_out(path: &Path) -> Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    if !parent.is_dir() {
        return Err(Error::Config(format!("output directory {} does not exist", parent.display())));
    }
    if path.is_dir() {
        return Err(Error::Config(format!("output {} is a directory", path.display())));
    }
    Ok(())
}

fn text_path(csv: &Path) -> PathBuf {
    csv.with_extension("txt")
}

fn write_out(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::File {
        path: path.into(),
        message: e.to_string(),
    })
}

fn check_threshold(t: f64) -> Result<()> {
    if (-1.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::Config(format!("outlier threshold {t} not in [-1, 1]")))
    }
}

pub fn cmd_mos(a: &MosArgs) -> Result<()> {
    require_file(&a.ratings, "ratings file")?;
    require_out(&a.out)?;
    check_threshold(a.outlier_threshold)?;
    let table = read_ratings(&a.ratings)?;
    let outcome = run_pipeline(&table, a.outlier_threshold)?;
    write_mos(&outcome.table, &a.out)?;
    if outcome.outliers.rejected.is_empty() {
        println!("rejected raters: none");
    } else {
        println!("rejected raters: {}", outcome.outliers.rejected.join(", "));
    }
    info!("wrote {} MOS rows to {}", outcome.table.rows().len(), a.out.display());
    Ok(())
}

impl DatasetArgs {
    fn validate(&self) -> Result<()> {
        require_file(&self.manifest, "manifest")?;
        if let Some(m) = &self.mapping {
            require_file(m, "mapping file")?;
        }
        if let Some(r) = &self.root {
            if !r.is_dir() {
                return Err(Error::Config(format!("image root {} is not a directory", r.display())));
            }
        }
        Ok(())
    }

    fn load(&self) -> Result<DatasetManifest> {
        let root = match &self.root {
            Some(r) => r.clone(),
            None => self
                .manifest
                .parent()
                .filter(|p| !p.as_os_str().is_empty())
                .map_or_else(|| PathBuf::from("."), Path::to_path_buf),
        };
        match &self.mapping {
            Some(m) => import_manifest(&self.manifest, &ColumnMapping::from_file(m)?, &root),
            None => load_manifest(&self.manifest, &root),
        }
    }
}

impl ScorerArgs {
    fn validate(&self) -> Result<()> {
        if let Some(r) = &self.rules {
            require_file(r, "rules file")?;
        }
        if self.jobs == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        let builtin = self.scorer.starts_with("constant:") || self.scorer == "lexical";
        if !builtin {
            require_file(Path::new(&self.scorer), "scorer config")?;
        }
        Ok(())
    }

    fn rules(&self) -> Result<SegmentationRules> {
        match &self.rules {
            Some(p) => SegmentationRules::from_file(p),
            None => Ok(default_rules()),
        }
    }

    fn descriptor(&self, manifest: &DatasetManifest) -> Result<ScorerDescriptor> {
        let override_cmd = std::env::var(SCORER_CMD_ENV).ok().filter(|s| !s.trim().is_empty());
        let mut d = ScorerDescriptor::from_spec(&self.scorer, &manifest.captions, override_cmd.as_deref())?;
        if let ScorerKind::ExternalProcess(config) = &mut d.kind {
            if self.jobs > 1 {
                config.workers = self.jobs;
            }
        }
        Ok(d)
    }
}

fn metric_name(mode: AblationMode) -> String {
    format!("stairreward:{mode}")
}

/// StairReward of every manifest image under each of `modes`.
fn score_images(
    manifest: &DatasetManifest,
    scorer: &Scorer,
    rules: &SegmentationRules,
    modes: &[AblationMode],
) -> Result<(Vec<MetricScore>, Vec<(String, AblationMode, StairBreakdown)>)> {
    let mut scores = Vec::new();
    let mut details = Vec::new();
    for (n, image) in manifest.images.iter().enumerate() {
        let path = manifest.path_of(image);
        let raster = Arc::new(decode_image(&path)?);
        let image_ref = ImageRef::from_arc(raster).with_source(&path).with_id(&image.image_id);
        for &mode in modes {
            let b = compute_stair_reward(scorer, &image.prompt, &image_ref, rules, mode).map_err(|e| match e {
                Error::Backend(_) | Error::InvalidScore(_) | Error::Config(_) => e,
                other => Error::invalid(format!("image {}: {other}", image.image_id)),
            })?;
            scores.push(MetricScore {
                image_id: image.image_id.clone(),
                metric: metric_name(mode),
                value: b.final_score.value(),
            });
            details.push((image.image_id.clone(), mode, b));
        }
        if (n + 1) % 100 == 0 {
            info!("scored {} of {} images", n + 1, manifest.images.len());
        }
    }
    Ok((scores, details))
}

fn breakdown_csv(details: &[(String, AblationMode, StairBreakdown)]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(["image_id", "mode", "k", "text", "box_length", "weight", "score"])?;
    let mut sorted: Vec<&(String, AblationMode, StairBreakdown)> = details.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    for (id, mode, b) in sorted {
        w.write_record([id.as_str(), mode.as_str(), "0", "", "1", "1", &format_float(b.whole_score)])?;
        for k in 0..b.morphemes.len() {
            w.write_record([
                id.as_str(),
                mode.as_str(),
                &(k + 1).to_string(),
                &b.morphemes[k],
                &format_float(b.box_lengths[k]),
                &format_float(b.weights[k]),
                &format_float(b.morpheme_scores[k]),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
}

pub fn cmd_score(a: &ScoreArgs) -> Result<()> {
    a.dataset.validate()?;
    a.scorer.validate()?;
    require_out(&a.out)?;
    if let Some(b) = &a.breakdown {
        require_out(b)?;
    }
    let mode: AblationMode = a.mode.parse()?;
    let rules = a.scorer.rules()?;
    let manifest = a.dataset.load()?;
    let scorer = Scorer::new(&a.scorer.descriptor(&manifest)?)?;
    if let Some(name) = scorer.backend_name() {
        info!("scorer backend: {name}");
    }
    let (scores, details) = score_images(&manifest, &scorer, &rules, &[mode])?;
    write_scores(&scores, &a.out)?;
    if let Some(b) = &a.breakdown {
        write_out(b, &breakdown_csv(&details)?)?;
    }
    info!("wrote {} scores to {}", scores.len(), a.out.display());
    Ok(())
}

fn write_scatter(dir: &Path, report: &BenchmarkReport) -> Result<()> {
    for set in &report.scatter {
        write_out(&dir.join(set.file_name()), &set.to_csv())?;
    }
    Ok(())
}

pub fn cmd_bench(a: &BenchArgs) -> Result<()> {
    require_file(&a.scores, "scores file")?;
    require_file(&a.mos, "MOS file")?;
    a.dataset.validate()?;
    require_out(&a.out)?;
    if let Some(d) = &a.scatter_dir {
        if !d.is_dir() {
            return Err(Error::Config(format!("scatter directory {} does not exist", d.display())));
        }
    }
    if a.jobs == 0 {
        return Err(Error::Config("--jobs must be at least 1".into()));
    }
    let config = BenchmarkConfig {
        dimension: a.split.dimension.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
        criteria: SubsetCriterion::parse_list(&a.split.subsets)?,
        repetitions: a.split.reps,
        seed: a.split.seed,
        test_fraction: a.split.test_fraction,
        jobs: a.jobs,
        scatter: a.scatter_dir.is_some(),
    };
    check_split_config(&config)?;

    let manifest = a.dataset.load()?;
    let scores = read_scores(&a.scores)?;
    let mos = read_mos(&a.mos)?;
    let data = JoinedData::new(&manifest.images, &scores, &mos, config.dimension)?;
    let report = run_benchmark(&data, &config)?;
    write_out(&a.out, &report.to_csv()?)?;
    let text = report.to_text();
    write_out(&text_path(&a.out), &text)?;
    if let Some(d) = &a.scatter_dir {
        write_scatter(d, &report)?;
    }
    print!("{text}");
    Ok(())
}

fn check_split_config(c: &BenchmarkConfig) -> Result<()> {
    if c.repetitions == 0 {
        return Err(Error::Config("--reps must be at least 1".into()));
    }
    if !(c.test_fraction > 0.0 && c.test_fraction < 1.0) {
        return Err(Error::Config(format!("--test-fraction {} not in (0, 1)", c.test_fraction)));
    }
    Ok(())
}

/// One row per ablation mode of the `all` subset.
pub fn ablation_table(report: &BenchmarkReport) -> Result<(String, String)> {
    let mut rows = BTreeMap::new();
    for mode in AblationMode::ALL {
        match report.row("all", &metric_name(mode)) {
            Some(r) => {
                rows.insert(mode, r);
            }
            None => warn!("no result for mode {mode}"),
        }
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(["mode", "srocc", "krocc", "plcc", "repetitions"])?;
    let mut text = format!("{:<8}{:>8}{:>8}{:>8}\n", "mode", "SRoCC", "KRoCC", "PLCC");
    for (mode, r) in &rows {
        let t = r.triple;
        w.write_record([
            mode.as_str(),
            &format_float(t.srocc),
            &format_float(t.krocc),
            &format_float(t.plcc),
            &r.repetitions.to_string(),
        ])?;
        let _ = writeln!(text, "{:<8}{:>8.4}{:>8.4}{:>8.4}", mode.as_str(), t.srocc, t.krocc, t.plcc);
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    let csv = String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))?;
    Ok((csv, text))
}

pub fn cmd_ablate(a: &AblateArgs) -> Result<()> {
    a.dataset.validate()?;
    a.scorer.validate()?;
    require_file(&a.mos, "MOS file")?;
    require_out(&a.out)?;
    let config = BenchmarkConfig {
        dimension: a.dimension.parse::<Dimension>().map_err(|e| Error::Config(e.to_string()))?,
        criteria: vec![SubsetCriterion::All],
        repetitions: a.reps,
        seed: a.seed,
        test_fraction: a.test_fraction,
        jobs: a.scorer.jobs,
        scatter: false,
    };
    check_split_config(&config)?;
    let rules = a.scorer.rules()?;
    let manifest = a.dataset.load()?;
    let mos = read_mos(&a.mos)?;
    let scorer = Scorer::new(&a.scorer.descriptor(&manifest)?)?;
    let (scores, _) = score_images(&manifest, &scorer, &rules, &AblationMode::ALL)?;
    drop(scorer);
    let data = JoinedData::new(&manifest.images, &scores, &mos, config.dimension)?;
    let report = run_benchmark(&data, &config)?;
    let (csv, text) = ablation_table(&report)?;
    write_out(&a.out, &csv)?;
    write_out(&text_path(&a.out), &text)?;
    print!("{text}");
    Ok(())
}

pub fn cmd_report(a: &ReportArgs) -> Result<()> {
    require_file(&a.input, "report")?;
    if let Some(o) = &a.out {
        require_out(o)?;
    }
    let text = fs::read_to_string(&a.input)?;
    let rows = rows_from_csv(&text, &a.input.display().to_string())?;
    let table = render_table(&rows);
    match &a.out {
        Some(o) => write_out(o, &table),
        None => {
            print!("{table}");
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn unknown_flag_is_fatal() {
        assert_eq!(main_with(["stairward", "mos", "--ratings", "x", "--out", "y", "--bogus"]), 2);
    }

    #[test]
    fn help_lists_flags() {
        let help = Cli::command()
            .find_subcommand_mut("bench")
            .unwrap()
            .render_long_help()
            .to_string();
        for flag in ["--scores", "--mos", "--manifest", "--subsets", "--reps", "--seed", "--jobs", "--scatter-dir", "--out"] {
            assert!(help.contains(flag), "{flag}");
        }
    }

    #[test]
    fn missing_input_is_config_error() {
        assert_eq!(
            main_with(["stairward", "mos", "--ratings", "/nonexistent/r.csv", "--out", "o.csv"]),
            2
        );
    }
}
