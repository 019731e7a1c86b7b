//! Command-line front end.
//!
//! Every subcommand validates its arguments, runs, and returns a JSON report
//! that echoes the full configuration. With `--out`, artifacts and the report
//! are also written to that directory.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::augment::{CutoutParams, Label, Method};
use crate::batch::{compose, BatchManifest, ComposeConfig, DirectoryImages, Gamma, Materializer};
use crate::dataset::{
    build_small_subset, parse_coco, parse_csv, split_manifest, DatasetManifest, EmptyHalfLabel,
    ImageSize, IngestReport, ManifestDocument, ManifestHeader, Split, SubsetParams,
};
use crate::error::{Error, Result};
use crate::geometry::AspectRatioSet;
use crate::image::ImageTensor;
use crate::metrics::{
    auc_roc, average_precision, multilabel_suite, pairwise_feature_report, Counts, FeatureVector,
    PredictionSet, Table,
};
use crate::par::{self, Execution};
use crate::probe::{run_experiment, ProbeExperiment, ProbeParams, SyntheticTask, GAMMA_GRID};
use crate::seed::DEFAULT_SEED;
use crate::TOOL_VERSION;

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "cutremain",
    version,
    about = "Supervised augmentation engine: Cut&Remain and masked Mixup/Cutout/Cutmix"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Serialize)]
pub struct CommonArgs {
    /// Master seed for every random decision.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Worker threads (defaults to all cores). Output does not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory for artifacts and the report.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum Command {
    /// Convert COCO JSON or box CSV annotations into a dataset manifest.
    Ingest(IngestArgs),
    /// Keep images whose annotated objects are small on average.
    Subset(SubsetArgs),
    /// Write augmented PNGs and per-image records.
    Augment(AugmentArgs),
    /// Write a replayable batch manifest.
    Compose(ComposeArgs),
    /// Score predictions against labels.
    Eval(EvalArgs),
    /// Distances between original and augmented feature vectors.
    Similarity(SimilarityArgs),
    /// Baseline vs Cut&Remain linear-probe experiment on synthetic data.
    Probe(ProbeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EmptyHalf {
    /// Keep the source label.
    Inherit,
    /// All-negative multi-label, or class 0 for single-label data.
    Negative,
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    /// COCO instances JSON.
    #[arg(long, conflicts_with = "csv", required_unless_present = "csv")]
    pub coco: Option<PathBuf>,
    /// CSV with columns path,label,cx,cy,w,h.
    #[arg(long, requires = "images")]
    pub csv: Option<PathBuf>,
    /// Image root; CSV image sizes are read from these PNG headers.
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Split recorded in the manifest.
    #[arg(long, default_value = "train")]
    pub split: Split,
    /// Split every image into left and right halves.
    #[arg(long)]
    pub split_halves: bool,
    /// Label for a half without annotations.
    #[arg(long, value_enum, default_value_t = EmptyHalf::Inherit)]
    pub empty_half: EmptyHalf,
}

#[derive(Debug, Args, Serialize)]
pub struct SubsetArgs {
    /// Dataset manifest JSON written by `ingest` or `subset`.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Mean relative object area must be strictly below this.
    #[arg(long, default_value_t = 0.02)]
    pub threshold: f64,
    /// Comma-separated category names to consider.
    #[arg(long, value_delimiter = ',')]
    pub categories: Option<Vec<String>>,
}

#[derive(Debug, Args, Serialize)]
pub struct MethodArgs {
    /// cut-and-remain, sup-mixup, sup-cutout or sup-cutmix.
    #[arg(long, default_value = "cut-and-remain")]
    pub method: Method,
    /// Fraction of samples that receive augmentation.
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Comma-separated aspect-ratio multipliers.
    #[arg(long, default_value = "1,1.5,2")]
    pub ratios: AspectRatioSet,
    /// Beta(α, α) shape for mixing coefficients.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Cutout square side in pixels (default: a quarter of the shorter side).
    #[arg(long)]
    pub cutout_side: Option<usize>,
    /// Keep this many seeded ratio pairs per source instead of all.
    #[arg(long)]
    pub variants_per_sample: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct AugmentArgs {
    /// Dataset manifest JSON written by `ingest` or `subset`.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Image root the manifest paths are relative to.
    #[arg(long)]
    pub images: PathBuf,
    #[command(flatten)]
    pub method: MethodArgs,
    /// Write 16-bit PNGs.
    #[arg(long)]
    pub sixteen_bit: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct ComposeArgs {
    /// Dataset manifest JSON written by `ingest` or `subset`.
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub method: MethodArgs,
    /// Mini-batch size hint recorded in the header.
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// CSV: sample id, then one score column per class.
    #[arg(long)]
    pub predictions: PathBuf,
    /// CSV: sample id, then one 0/1 column per class.
    #[arg(long)]
    pub labels: PathBuf,
    /// Scores at or above this count as positive predictions.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct SimilarityArgs {
    /// CSV: sample id, then feature columns.
    #[arg(long)]
    pub original: PathBuf,
    /// CSV with the same ids and dimension.
    #[arg(long)]
    pub augmented: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ProbeArgs {
    /// Number of independent datasets.
    #[arg(long, default_value_t = 5)]
    pub seeds: usize,
    /// Training images per seed.
    #[arg(long, default_value_t = 500)]
    pub train_size: usize,
    /// Held-out images per seed.
    #[arg(long, default_value_t = 500)]
    pub test_size: usize,
    /// Target intensity above background.
    #[arg(long, default_value_t = 0.55)]
    pub target_delta: f32,
    /// Also evaluate γ ∈ {0, 0.2, 0.4, 0.6, 0.8, 1}.
    #[arg(long)]
    pub gamma_sweep: bool,
    /// SGD passes over the training set.
    #[arg(long, default_value_t = ProbeParams::default().epochs)]
    pub epochs: usize,
    /// SGD step size.
    #[arg(long, default_value_t = ProbeParams::default().learning_rate)]
    pub learning_rate: f64,
    /// L2 penalty on the weights.
    #[arg(long, default_value_t = ProbeParams::default().l2)]
    pub l2: f64,
}

/// Machine-readable one-line error for stderr.
pub fn error_line(e: &Error) -> String {
    json!({"error": {"kind": e.kind(), "message": e.to_string()}}).to_string()
}

/// Parses `args` and runs the command, returning the rendered report.
pub fn run_from<I, T>(args: I) -> Result<String>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::invalid(e.to_string()))?;
    run(&cli)
}

pub fn run(cli: &Cli) -> Result<String> {
    if cli.common.jobs == Some(0) {
        return Err(Error::invalid("--jobs must be at least 1"));
    }
    par::with_jobs(cli.common.jobs, || dispatch(cli))?
}

fn dispatch(cli: &Cli) -> Result<String> {
    let out = cli.common.out.as_deref();
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let (name, body) = match &cli.command {
        Command::Ingest(a) => ("ingest", cmd_ingest(a, out)?),
        Command::Subset(a) => ("subset", cmd_subset(a, out)?),
        Command::Augment(a) => ("augment", cmd_augment(a, cli.common.seed, out)?),
        Command::Compose(a) => ("compose", cmd_compose(a, cli.common.seed, out)?),
        Command::Eval(a) => ("eval", cmd_eval(a)?),
        Command::Similarity(a) => ("similarity", cmd_similarity(a)?),
        Command::Probe(a) => ("probe", cmd_probe(a, cli.common.seed)?),
    };
    let config = serde_json::to_value(cli)?;
    let mut report = Map::new();
    report.insert("command".into(), name.into());
    report.insert("tool_version".into(), TOOL_VERSION.into());
    report.insert("config".into(), config.clone());
    report.insert("result".into(), body);
    let report = Value::Object(report);

    let rendered = match cli.common.format {
        Format::Json => serde_json::to_string_pretty(&report)? + "\n",
        Format::Csv => flatten_csv(&report)?,
    };
    if let Some(dir) = out {
        write(
            &dir.join("config.json"),
            serde_json::to_string_pretty(&config)? + "\n",
        )?;
        let file = match cli.common.format {
            Format::Json => "report.json",
            Format::Csv => "report.csv",
        };
        write(&dir.join(file), &rendered)?;
    }
    Ok(rendered)
}

fn require_out(out: Option<&Path>, command: &str) -> Result<PathBuf> {
    out.map(Path::to_path_buf)
        .ok_or_else(|| Error::invalid(format!("{command} needs --out")))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 over `(name, length, bytes)` of each file, in the given order.
pub fn digest_files<'a>(files: impl IntoIterator<Item = (&'a str, &'a [u8])>) -> String {
    let mut h = Sha256::new();
    for (name, bytes) in files {
        h.update(name.as_bytes());
        h.update([0u8]);
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    }
    hex(&h.finalize())
}

/// `key,value` rows for every scalar leaf, keys joined with dots.
fn flatten_csv(v: &Value) -> Result<String> {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
        let key = |k: &str| {
            if prefix.is_empty() {
                k.to_string()
            } else {
                format!("{prefix}.{k}")
            }
        };
        match v {
            Value::Object(m) => m.iter().for_each(|(k, v)| walk(&key(k), v, out)),
            Value::Array(a) => a
                .iter()
                .enumerate()
                .for_each(|(i, v)| walk(&key(&i.to_string()), v, out)),
            Value::String(s) => out.push((prefix.to_string(), s.clone())),
            Value::Null => out.push((prefix.to_string(), String::new())),
            other => out.push((prefix.to_string(), other.to_string())),
        }
    }
    let mut rows = Vec::new();
    walk("", v, &mut rows);
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::invalid(format!("csv output: {e}"));
    w.write_record(["key", "value"]).map_err(csv_err)?;
    for (k, v) in rows {
        w.write_record([k, v]).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
}

fn write_manifest(
    out: Option<&Path>,
    manifest: &DatasetManifest,
    origin: String,
    params: Value,
) -> Result<()> {
    if let Some(dir) = out {
        let doc = ManifestDocument {
            header: ManifestHeader {
                tool_version: TOOL_VERSION.into(),
                origin,
                params,
            },
            manifest: manifest.clone(),
        };
        write(&dir.join("manifest.json"), doc.to_json()?)?;
    }
    Ok(())
}

pub fn cmd_ingest(a: &IngestArgs, out: Option<&Path>) -> Result<Value> {
    let (mut manifest, origin) = match (&a.coco, &a.csv) {
        (Some(path), _) => (
            parse_coco(&read(path)?, a.split)?.0,
            format!("coco:{}", path.display()),
        ),
        (None, Some(path)) => {
            let root = a
                .images
                .as_deref()
                .ok_or_else(|| Error::invalid("--csv needs --images"))?;
            let m = parse_csv(&read(path)?, a.split, |p| {
                let (w, h, c) = ImageTensor::probe_png(root.join(p))?;
                Ok(ImageSize::new(w, h, c))
            })?;
            (m, format!("csv:{}", path.display()))
        }
        (None, None) => return Err(Error::invalid("one of --coco or --csv is required")),
    };
    if a.split_halves {
        let policy = match a.empty_half {
            EmptyHalf::Inherit => EmptyHalfLabel::Inherit,
            EmptyHalf::Negative => {
                EmptyHalfLabel::Fixed(match manifest.samples.first().map(|s| &s.label) {
                    Some(Label::MultiLabel { values }) => Label::MultiLabel {
                        values: vec![0; values.len()],
                    },
                    _ => Label::Class {
                        index: 0,
                        num_classes: manifest.classes.len(),
                    },
                })
            }
        };
        manifest = split_manifest(&manifest, &policy)?;
    }
    let report = IngestReport::of(&manifest);
    write_manifest(
        out,
        &manifest,
        origin,
        json!({"split_halves": a.split_halves}),
    )?;
    Ok(serde_json::to_value(report)?)
}

pub fn cmd_subset(a: &SubsetArgs, out: Option<&Path>) -> Result<Value> {
    let doc = ManifestDocument::read(&a.manifest)?;
    let params = SubsetParams {
        threshold: a.threshold,
        categories: a.categories.clone(),
    };
    let (subset, report) = build_small_subset(&doc.manifest, &params)?;
    write_manifest(
        out,
        &subset,
        format!("subset:{}", a.manifest.display()),
        serde_json::to_value(&params)?,
    )?;
    Ok(json!({
        "threshold": a.threshold,
        "classes": subset.classes,
        "report": report,
    }))
}

fn compose_config(m: &MethodArgs, seed: u64, batch_size: usize) -> Result<ComposeConfig> {
    Ok(ComposeConfig {
        method: m.method,
        gamma: Gamma::new(m.gamma)?,
        ratios: m.ratios.clone(),
        seed,
        mix_alpha: m.alpha,
        cutout: CutoutParams {
            side: m.cutout_side,
            ..CutoutParams::default()
        },
        variants_per_sample: m.variants_per_sample,
        batch_size,
    })
}

fn batch_summary(batch: &BatchManifest) -> Value {
    let originals = batch.entries.iter().filter(|e| e.is_original()).count();
    json!({
        "entries": batch.len(),
        "originals": originals,
        "augmented": batch.len() - originals,
        "augmented_sources": batch.augmented_sources().len(),
    })
}

#[derive(Serialize)]
struct Record<'a> {
    file: String,
    entry: usize,
    #[serde(flatten)]
    recipe: &'a crate::batch::Entry,
    label: &'a Label,
    provenance: &'a crate::augment::Provenance,
}

pub fn cmd_augment(a: &AugmentArgs, seed: u64, out: Option<&Path>) -> Result<Value> {
    let dir = require_out(out, "augment")?;
    let doc = ManifestDocument::read(&a.manifest)?;
    let config = compose_config(&a.method, seed, 1)?;
    let batch = compose(&doc.manifest, &config)?;
    let store = DirectoryImages {
        root: a.images.clone(),
    };
    let materializer = Materializer::new(&batch, &doc.manifest, &store)?;
    let wanted: Vec<usize> = (0..batch.len())
        .filter(|&i| !batch.entries[i].is_original())
        .collect();
    let encoded = par::try_map(&wanted, Execution::Parallel, |k, &i| {
        let sample = materializer.entry(i)?;
        let png = sample
            .image
            .encode_png(a.sixteen_bit)
            .map_err(|message| Error::Png {
                path: dir.join(format!("{k:06}.png")),
                message,
            })?;
        Ok((sample, png))
    })?;

    let images_dir = dir.join("images");
    std::fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;
    let mut records = String::new();
    let mut files: Vec<(String, &[u8])> = Vec::with_capacity(encoded.len() + 1);
    for (k, (&i, (sample, png))) in wanted.iter().zip(&encoded).enumerate() {
        let name = format!("{k:06}.png");
        write(&images_dir.join(&name), png)?;
        records.push_str(&serde_json::to_string(&Record {
            file: format!("images/{name}"),
            entry: i,
            recipe: &batch.entries[i],
            label: &sample.label,
            provenance: &sample.provenance,
        })?);
        records.push('\n');
        files.push((format!("images/{name}"), png));
    }
    write(&dir.join("records.jsonl"), &records)?;
    files.push(("records.jsonl".into(), records.as_bytes()));
    let digest = digest_files(files.iter().map(|(n, b)| (n.as_str(), *b)));

    let mut summary = batch_summary(&batch);
    summary["images_written"] = encoded.len().into();
    summary["digest"] = digest.into();
    Ok(summary)
}

pub fn cmd_compose(a: &ComposeArgs, seed: u64, out: Option<&Path>) -> Result<Value> {
    let dir = require_out(out, "compose")?;
    let doc = ManifestDocument::read(&a.manifest)?;
    let batch = compose(
        &doc.manifest,
        &compose_config(&a.method, seed, a.batch_size)?,
    )?;
    let text = batch.to_jsonl()?;
    write(&dir.join("batch.jsonl"), &text)?;
    let mut summary = batch_summary(&batch);
    summary["digest"] = digest_files([("batch.jsonl", text.as_bytes())]).into();
    Ok(summary)
}

pub fn cmd_eval(a: &EvalArgs) -> Result<Value> {
    let pred_text = read(&a.predictions)?;
    let label_text = read(&a.labels)?;
    let preds = Table::parse_csv(&pred_text, "predictions")?;
    let labels = Table::parse_csv(&label_text, "labels")?;
    if preds.columns != labels.columns {
        return Err(Error::shape(
            format!("label columns {:?}", labels.columns),
            format!("prediction columns {:?}", preds.columns),
        ));
    }
    let truth: Vec<Vec<bool>> = labels
        .aligned_to(&preds)?
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|v| {
                    if v == 0.0 || v == 1.0 {
                        Ok(v == 1.0)
                    } else {
                        Err(Error::invalid(format!("label value {v} is not 0 or 1")))
                    }
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let digest = digest_files([
        ("predictions", pred_text.as_bytes()),
        ("labels", label_text.as_bytes()),
    ]);
    let set = PredictionSet::new(preds.rows.clone(), truth, a.threshold)?;
    let metrics = if set.num_classes() == 1 {
        let scores = set.class_scores(0);
        let labels = set.class_labels(0);
        let counts = Counts::from_binary(&set.class_predictions(0), &labels)?;
        json!({
            "auc_roc": auc_roc(&scores, &labels)?,
            "average_precision": average_precision(&scores, &labels)?,
            "precision": counts.precision(),
            "recall": counts.recall(),
            "f1": counts.f1(),
            "counts": counts,
            "threshold": a.threshold,
        })
    } else {
        serde_json::to_value(multilabel_suite(&set, Execution::Parallel)?)?
    };
    Ok(json!({
        "samples": set.num_samples(),
        "classes": preds.columns,
        "input_digest": digest,
        "metrics": metrics,
    }))
}

pub fn cmd_similarity(a: &SimilarityArgs) -> Result<Value> {
    let orig = Table::parse_csv(&read(&a.original)?, "original features")?;
    let aug = Table::parse_csv(&read(&a.augmented)?, "augmented features")?;
    let to_vecs = |rows: Vec<Vec<f64>>| {
        rows.into_iter()
            .map(FeatureVector::new)
            .collect::<Result<Vec<_>>>()
    };
    let originals = to_vecs(orig.rows.clone())?;
    let augmented = to_vecs(aug.aligned_to(&orig)?)?;
    Ok(serde_json::to_value(pairwise_feature_report(
        &originals, &augmented,
    )?)?)
}

pub fn cmd_probe(a: &ProbeArgs, seed: u64) -> Result<Value> {
    let exp = ProbeExperiment {
        task: SyntheticTask {
            target_delta: a.target_delta,
            ..SyntheticTask::default()
        },
        train_size: a.train_size,
        test_size: a.test_size,
        seeds: a.seeds,
        master_seed: seed,
        params: ProbeParams {
            learning_rate: a.learning_rate,
            epochs: a.epochs,
            l2: a.l2,
            seed,
        },
        ratios: AspectRatioSet::default(),
        gammas: if a.gamma_sweep {
            GAMMA_GRID.to_vec()
        } else {
            Vec::new()
        },
    };
    Ok(serde_json::to_value(run_experiment(
        &exp,
        Execution::Parallel,
    )?)?)
}
