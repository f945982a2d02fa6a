use std::collections::{BTreeMap, HashSet};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{read_file, CliError, Context, OutputFormat, Result};
use crate::coloc::{build_matchup_table, read_refs_csv, ColocCriteria};
use crate::detect_eval::{evaluate_detection_benchmark, DetectionSet};
use crate::digest::{json_digest, labeled_set_digest, sha256_hex};
use crate::embed_store::{join_labels, parse_embedding_file, parse_meta_sidecar, ClassSet, EmbeddingSet, LabelTable, Timestamp};
use crate::probes::{run_probe_benchmark, Prediction, ProbeConfig, ProbeKind};
use crate::pruning::{kcenter_greedy, simulate_schedule, write_selection_csv, write_trace_csv, PruneConfig, PruneMetric, SeedStrategy};
use crate::registry::metrics::{MetricName, MetricValue};
use crate::registry::{
    emit_json_lines, emit_table, load_manifest, materialize_split, parse_json_lines, BenchmarkManifest, ColocPreset, ColocRef,
    MetricReport, SplitSpec, TableOptions, Task,
};
use crate::simmap::{export_map, similarity_map, Normalization, SimmapError};

/// Report timestamp: `SOURCE_DATE_EPOCH` when set, else the Unix epoch, so
/// reruns stay byte-identical.
fn report_timestamp() -> Result<String> {
    let secs = match std::env::var("SOURCE_DATE_EPOCH") {
        Ok(v) => v.trim().parse::<i64>().map_err(|e| CliError::Config(format!("SOURCE_DATE_EPOCH {v:?}: {e}")))?,
        Err(_) => 0,
    };
    Ok(Timestamp(secs).to_string())
}

fn load_embeddings(path: &Path) -> Result<EmbeddingSet> {
    parse_embedding_file(&read_file(path)?).map_err(|e| CliError::from(e).context(path))
}

fn load_labels(path: &Path, classes: &ClassSet) -> Result<LabelTable> {
    LabelTable::read_csv(read_file(path)?.as_slice(), classes).map_err(|e| CliError::from(e).context(path))
}

impl CliError {
    /// Prefixes the message with the offending file.
    fn context(self, path: &Path) -> Self {
        let p = path.display();
        match self {
            CliError::Input(m) => CliError::Input(format!("{p}: {m}")),
            CliError::Config(m) => CliError::Config(format!("{p}: {m}")),
            CliError::Data(m) => CliError::Data(format!("{p}: {m}")),
            CliError::Numeric(m) => CliError::Numeric(format!("{p}: {m}")),
            CliError::IoOther(source) => CliError::Io { path: path.to_path_buf(), source },
            e => e,
        }
    }
}

fn parse_classes(text: Option<&str>) -> Result<ClassSet> {
    match text {
        None => Ok(ClassSet::tengeop()),
        Some(t) => {
            let names: Vec<&str> = t.split(',').collect();
            ClassSet::new(&names).map_err(|e| CliError::Config(e.to_string()))
        }
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

#[derive(Serialize)]
struct Resolved<'a> {
    command: &'a str,
    seed: u64,
    format: OutputFormat,
    inputs: BTreeMap<&'a str, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    manifest: Option<ManifestEcho>,
    #[serde(skip_serializing_if = "Option::is_none")]
    probe: Option<ProbeConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coloc: Option<ColocCriteria>,
    #[serde(skip_serializing_if = "Option::is_none")]
    prune: Option<PruneConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    simmap: Option<SimmapConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    detection: Option<crate::registry::DetectionThresholds>,
}

#[derive(Serialize)]
struct ManifestEcho {
    name: String,
    version: u32,
    task: Task,
    metric: MetricName,
    digest: String,
}

impl<'a> Resolved<'a> {
    fn new(ctx: &Context, command: &'a str) -> Self {
        Self {
            command,
            seed: ctx.seed,
            format: ctx.format,
            inputs: BTreeMap::new(),
            manifest: None,
            probe: None,
            coloc: None,
            prune: None,
            simmap: None,
            detection: None,
        }
    }

    fn write(&self, ctx: &Context) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| CliError::Config(format!("cannot serialize resolved config: {e}")))?;
        ctx.write("resolved_config.toml", text.as_bytes())?;
        Ok(())
    }
}

fn to_json_pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("outputs serialize");
    v.push(b'\n');
    v
}

// ---------------------------------------------------------------- ingest

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Embedding file.
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Label CSV (`image_id,label[,unit]`).
    #[arg(long)]
    pub labels: PathBuf,
    /// Metadata sidecar (JSON lines).
    #[arg(long)]
    pub meta: Option<PathBuf>,
    /// Comma-separated class names in declaration order [default: TenGeoP classes].
    #[arg(long)]
    pub classes: Option<String>,
}

#[derive(Serialize)]
struct IngestSummary {
    dataset_digest: String,
    embeddings_sha256: String,
    labels_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    meta_sha256: Option<String>,
    images: usize,
    dim: usize,
    patch_grid: Option<(usize, usize)>,
    label_kind: crate::embed_store::LabelKind,
    join: crate::embed_store::JoinReport,
    seed: u64,
}

pub(super) fn ingest(ctx: &Context, a: IngestArgs) -> Result<()> {
    let emb_bytes = read_file(&a.embeddings)?;
    let mut set = parse_embedding_file(&emb_bytes).map_err(|e| CliError::from(e).context(&a.embeddings))?;
    let classes = parse_classes(a.classes.as_deref())?;
    let labels = load_labels(&a.labels, &classes)?;
    let mut meta_sha256 = None;
    if let Some(m) = &a.meta {
        let bytes = read_file(m)?;
        let records = parse_meta_sidecar(BufReader::new(bytes.as_slice())).map_err(|e| CliError::from(e).context(m))?;
        set = set.with_meta(&records).map_err(|e| CliError::from(e).context(m))?;
        meta_sha256 = Some(sha256_hex(&bytes));
    }
    let (joined, join) = join_labels(&set, &labels)?;
    let summary = IngestSummary {
        dataset_digest: labeled_set_digest(&joined),
        embeddings_sha256: sha256_hex(&emb_bytes),
        labels_sha256: sha256_hex(&read_file(&a.labels)?),
        meta_sha256,
        images: set.len(),
        dim: set.dim(),
        patch_grid: set.patch_shape(),
        label_kind: joined.labels().kind(),
        join,
        seed: ctx.seed,
    };
    ctx.write("ingest.json", &to_json_pretty(&summary))?;
    let mut r = Resolved::new(ctx, "ingest");
    r.inputs.insert("embeddings", path_str(&a.embeddings));
    r.inputs.insert("labels", path_str(&a.labels));
    if let Some(m) = &a.meta {
        r.inputs.insert("meta", path_str(m));
    }
    r.write(ctx)?;
    println!("dataset_digest {}", summary.dataset_digest);
    println!("images {} dim {} matched {} unmatched_embeddings {} unmatched_labels {}", summary.images, summary.dim, join.matched, join.unmatched_embeddings, join.unmatched_labels);
    Ok(())
}

// ---------------------------------------------------------------- colocate

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum PresetArg {
    StandardSwh,
    StandardWind,
}

#[derive(Debug, Args)]
pub struct ColocateArgs {
    /// Image metadata sidecar (JSON lines).
    #[arg(long)]
    pub meta: PathBuf,
    /// Reference measurements CSV.
    #[arg(long)]
    pub refs: PathBuf,
    /// Criteria preset; overrides the config file's `[coloc]` section.
    #[arg(long, value_enum)]
    pub preset: Option<PresetArg>,
}

pub(super) fn colocate(ctx: &Context, a: ColocateArgs) -> Result<()> {
    let criteria = match (a.preset, &ctx.config.coloc) {
        (Some(PresetArg::StandardSwh), _) => ColocCriteria::standard_swh(),
        (Some(PresetArg::StandardWind), _) => ColocCriteria::standard_wind(),
        (None, Some(c)) => c.resolve(),
        (None, None) => ColocRef::Preset { preset: ColocPreset::StandardSwh }.resolve(),
    };
    criteria.validate()?;
    let meta_bytes = read_file(&a.meta)?;
    let images = parse_meta_sidecar(BufReader::new(meta_bytes.as_slice())).map_err(|e| CliError::from(e).context(&a.meta))?;
    let refs = read_refs_csv(read_file(&a.refs)?.as_slice()).map_err(|e| CliError::from(e).context(&a.refs))?;
    let table = build_matchup_table(&images, &refs, &criteria)?;

    let mut buf = Vec::new();
    let name = match ctx.format {
        OutputFormat::Csv => {
            table.write_csv(&mut buf)?;
            "matchups.csv"
        }
        OutputFormat::JsonLines => {
            table.write_json_lines(&mut buf)?;
            "matchups.jsonl"
        }
    };
    ctx.write(name, &buf)?;
    for (label, t) in table.label_tables() {
        let mut buf = Vec::new();
        t.write_csv(&mut buf)?;
        ctx.write(&format!("labels_{label}.csv"), &buf)?;
    }
    let summary = json!({
        "criteria": criteria.describe(),
        "seed": ctx.seed,
        "summary": table.summary,
    });
    ctx.write("matchup_summary.json", &to_json_pretty(&summary))?;
    let mut r = Resolved::new(ctx, "colocate");
    r.inputs.insert("meta", path_str(&a.meta));
    r.inputs.insert("refs", path_str(&a.refs));
    r.coloc = Some(criteria.clone());
    r.write(ctx)?;

    let s = &table.summary;
    println!("criteria {}", criteria.describe());
    println!(
        "matched {}/{} images (rate {:.3}), mean |dt| {} s, mean distance {} km",
        s.matched,
        s.images,
        s.match_rate,
        s.mean_abs_dt_s.map_or("-".into(), |v| format!("{v:.1}")),
        s.mean_distance_km.map_or("-".into(), |v| format!("{v:.2}")),
    );
    Ok(())
}

// ---------------------------------------------------------------- eval

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Benchmark manifest (TOML).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Embedding file (probe tasks).
    #[arg(long, required_unless_present = "predictions")]
    pub embeddings: Option<PathBuf>,
    /// Label CSV (probe tasks).
    #[arg(long, requires = "embeddings")]
    pub labels: Option<PathBuf>,
    /// Predicted boxes CSV (detection).
    #[arg(long, requires = "ground_truth")]
    pub predictions: Option<PathBuf>,
    /// Ground-truth boxes CSV (detection).
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,
    /// Model tag recorded in the report.
    #[arg(long, default_value = "model")]
    pub model: String,
}

fn default_probe(task: Task) -> ProbeConfig {
    match task {
        Task::Classification => ProbeConfig::new(ProbeKind::KnnClassify),
        _ => ProbeConfig::new(ProbeKind::KnnRegress),
    }
}

fn manifest_echo(m: &BenchmarkManifest) -> ManifestEcho {
    ManifestEcho { name: m.name.clone(), version: m.version, task: m.task, metric: m.metric, digest: json_digest(m) }
}

pub(super) fn eval(ctx: &Context, a: EvalArgs) -> Result<()> {
    let text = String::from_utf8(read_file(&a.manifest)?).map_err(|e| CliError::Config(format!("{}: {e}", a.manifest.display())))?;
    let manifest = load_manifest(&text).map_err(|e| CliError::from(e).context(&a.manifest))?;
    let timestamp = report_timestamp()?;
    let mut resolved = Resolved::new(ctx, "eval");
    resolved.inputs.insert("manifest", path_str(&a.manifest));
    resolved.manifest = Some(manifest_echo(&manifest));
    let mut params: BTreeMap<String, serde_json::Value> = BTreeMap::new();
    if let Some(c) = &manifest.coloc {
        let c = c.resolve();
        params.insert("coloc_criteria".into(), json!(c.describe()));
        resolved.coloc = Some(c);
    }

    let report = if manifest.task == Task::Detection {
        let (Some(p), Some(g)) = (&a.predictions, &a.ground_truth) else {
            return Err(CliError::Config("detection benchmarks need --predictions and --ground-truth".into()));
        };
        let (pb, gb) = (read_file(p)?, read_file(g)?);
        let set = DetectionSet::read_csv(pb.as_slice(), gb.as_slice())?;
        let th = manifest.detection_thresholds();
        let det = evaluate_detection_benchmark(&set, th.iou_thresh, th.score_thresh)?;
        resolved.inputs.insert("predictions", path_str(p));
        resolved.inputs.insert("ground_truth", path_str(g));
        resolved.detection = Some(th);
        ctx.write("detection_report.json", &to_json_pretty(&det))?;
        params.insert("iou_thresh".into(), json!(det.iou_thresh));
        params.insert("score_thresh".into(), json!(det.score_thresh));
        params.insert("f1_macro".into(), json!(det.f1_macro));
        params.insert("precision".into(), json!(det.precision));
        params.insert("recall".into(), json!(det.recall));
        params.insert("tp".into(), json!(det.counts.tp));
        params.insert("fp".into(), json!(det.counts.fp));
        params.insert("fn".into(), json!(det.counts.fn_));
        MetricReport {
            benchmark: manifest.name.clone(),
            version: manifest.version,
            model: a.model.clone(),
            metrics: vec![MetricValue::new(MetricName::F1AtIou, det.f1_micro)],
            params,
            config_digest: json_digest(&(&manifest, &th)),
            dataset_digest: json_digest(&(sha256_hex(&pb), sha256_hex(&gb))),
            timestamp,
            seed: ctx.seed,
            notes: Vec::new(),
        }
    } else {
        let (Some(e), Some(l)) = (&a.embeddings, &a.labels) else {
            return Err(CliError::Config("probe benchmarks need --embeddings and --labels".into()));
        };
        let classes = match manifest.class_set() {
            Some(c) => c.map_err(|e| CliError::Config(e.to_string()))?,
            None => ClassSet::tengeop(),
        };
        let set = load_embeddings(e)?;
        let labels = load_labels(l, &classes)?;
        let (joined, join) = join_labels(&set, &labels)?;
        let split = materialize_split(&manifest.split, joined.ids())?;
        if !split.unassigned.is_empty() {
            warn!("{} image(s) belong to neither split and are skipped", split.unassigned.len());
        }
        if let SplitSpec::Explicit { train, test } = &manifest.split {
            let present: HashSet<&str> = joined.ids().iter().map(String::as_str).collect();
            let missing = train.iter().chain(test).filter(|id| !present.contains(id.as_str())).count();
            if missing > 0 {
                warn!("{missing} manifest id(s) have no joined embedding");
            }
        }
        let test_ids: HashSet<String> = split.test.iter().cloned().collect();
        let (train, test) = joined.split_by_ids(&test_ids);
        let cfg = ctx.config.probe.clone().unwrap_or_else(|| default_probe(manifest.task));
        info!("train {} / test {} (joined {})", train.len(), test.len(), join.matched);
        let result = run_probe_benchmark(&train, &test, &cfg, ctx.seed)?;
        if !result.metrics.iter().any(|m| m.name == manifest.metric) {
            return Err(CliError::Config(format!(
                "probe {} does not produce the manifest metric {}",
                cfg.kind.as_str(),
                manifest.metric.as_str()
            )));
        }
        write_predictions(ctx, &result)?;
        ctx.write("probe_result.json", &to_json_pretty(&result))?;
        resolved.inputs.insert("embeddings", path_str(e));
        resolved.inputs.insert("labels", path_str(l));
        resolved.probe = Some(cfg.clone());
        params.insert("probe".into(), serde_json::to_value(&cfg).expect("config serializes"));
        params.insert("l2_normalized".into(), json!(result.l2_normalized));
        params.insert("n_train".into(), json!(result.n_train));
        params.insert("n_test".into(), json!(result.n_test));
        params.insert("train_digest".into(), json!(result.train_digest));
        params.insert("test_digest".into(), json!(result.test_digest));
        MetricReport {
            benchmark: manifest.name.clone(),
            version: manifest.version,
            model: a.model.clone(),
            metrics: result.metrics.clone(),
            params,
            config_digest: json_digest(&(&manifest, &cfg)),
            dataset_digest: labeled_set_digest(&joined),
            timestamp,
            seed: ctx.seed,
            notes: result.notes.clone(),
        }
    };
    report.validate()?;
    ctx.write("report.jsonl", emit_json_lines(std::slice::from_ref(&report)).as_bytes())?;
    resolved.write(ctx)?;
    for m in &report.metrics {
        println!("{} {} {} = {}", report.benchmark, report.model, m.name.as_str(), m.display());
    }
    Ok(())
}

fn prediction_text(p: &Prediction) -> String {
    match p {
        Prediction::Class(c) => c.clone(),
        Prediction::Value(v) => v.to_string(),
    }
}

fn write_predictions(ctx: &Context, r: &crate::probes::ProbeResult) -> Result<()> {
    match ctx.format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let io = |e: csv::Error| CliError::IoOther(e.into());
            w.write_record(["image_id", "prediction", "truth"]).map_err(io)?;
            for q in &r.queries {
                w.write_record([q.image_id.as_str(), &prediction_text(&q.prediction), &prediction_text(&q.truth)]).map_err(io)?;
            }
            let bytes = w.into_inner().map_err(|e| CliError::IoOther(e.into_error()))?;
            ctx.write("predictions.csv", &bytes)?;
        }
        OutputFormat::JsonLines => {
            let mut out = Vec::new();
            for q in &r.queries {
                serde_json::to_writer(&mut out, q).expect("queries serialize");
                out.push(b'\n');
            }
            ctx.write("predictions.jsonl", &out)?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- prune

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum PruneMetricArg {
    CosineDistance,
    Euclidean,
}

#[derive(Debug, Args)]
pub struct PruneArgs {
    /// Embedding file; give one per epoch to simulate periodic re-selection.
    #[arg(long, required = true, num_args = 1..)]
    pub embeddings: Vec<PathBuf>,
    #[arg(long)]
    pub target_size: Option<usize>,
    #[arg(long, value_enum)]
    pub metric: Option<PruneMetricArg>,
    /// `medoid` or `index:N`.
    #[arg(long)]
    pub seed_strategy: Option<String>,
    #[arg(long)]
    pub reselect_period: Option<usize>,
}

fn parse_seed_strategy(s: &str) -> Result<SeedStrategy> {
    if s == "medoid" {
        return Ok(SeedStrategy::Medoid);
    }
    s.strip_prefix("index:")
        .and_then(|n| n.parse().ok())
        .map(SeedStrategy::FixedIndex)
        .ok_or_else(|| CliError::Config(format!("seed strategy {s:?}: expected `medoid` or `index:N`")))
}

pub(super) fn prune(ctx: &Context, a: PruneArgs) -> Result<()> {
    let mut cfg = match (&ctx.config.prune, a.target_size) {
        (Some(c), _) => c.clone(),
        (None, Some(m)) => PruneConfig::new(m),
        (None, None) => return Err(CliError::Config("--target-size or a [prune] config section is required".into())),
    };
    if let Some(m) = a.target_size {
        cfg.target_size = m;
    }
    if let Some(m) = a.metric {
        cfg.metric = match m {
            PruneMetricArg::CosineDistance => PruneMetric::CosineDistance,
            PruneMetricArg::Euclidean => PruneMetric::Euclidean,
        };
    }
    if let Some(s) = &a.seed_strategy {
        cfg.seed_strategy = parse_seed_strategy(s)?;
    }
    if let Some(t) = a.reselect_period {
        cfg.reselect_period = t;
    }
    let sets: Vec<EmbeddingSet> = a.embeddings.iter().map(|p| load_embeddings(p)).collect::<Result<_>>()?;
    if let Some((i, _)) = sets.iter().enumerate().find(|(_, s)| s.ids() != sets[0].ids()) {
        return Err(CliError::Data(format!("{} lists different image ids than {}", a.embeddings[i].display(), a.embeddings[0].display())));
    }
    let first = kcenter_greedy(&sets[0], &cfg)?;
    let ids = sets[0].ids();
    match ctx.format {
        OutputFormat::Csv => {
            let mut buf = Vec::new();
            write_selection_csv(&mut buf, &first, ids)?;
            ctx.write("selection.csv", &buf)?;
        }
        OutputFormat::JsonLines => {
            let mut out = Vec::new();
            for (rank, (&i, d)) in first.selected.iter().zip(&first.min_distance_at_selection).enumerate() {
                let row = json!({"rank": rank, "image_id": ids[i], "min_distance_at_selection": d});
                serde_json::to_writer(&mut out, &row).expect("rows serialize");
                out.push(b'\n');
            }
            ctx.write("selection.jsonl", &out)?;
        }
    }
    if sets.len() > 1 {
        let trace = simulate_schedule(&sets, &cfg)?;
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &trace)?;
        ctx.write("trace.csv", &buf)?;
    }
    let mut r = Resolved::new(ctx, "prune");
    r.inputs.insert("embeddings", a.embeddings.iter().map(|p| path_str(p)).collect::<Vec<_>>().join(";"));
    r.prune = Some(cfg);
    r.write(ctx)?;
    println!("selected {} of {} images, coverage radius {}", first.selected.len(), ids.len(), first.coverage_radius);
    Ok(())
}

// ---------------------------------------------------------------- simmap

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum NormalizationArg {
    None,
    Minmax,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimmapConfig {
    pub normalization: NormalizationArg,
}

#[derive(Debug, Args)]
pub struct SimmapArgs {
    /// Embedding file with patch grids.
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Image id.
    #[arg(long)]
    pub image: String,
    /// Reference patch as `row,col`.
    #[arg(long = "ref")]
    pub reference: String,
    #[arg(long, value_enum)]
    pub normalization: Option<NormalizationArg>,
}

fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' }).collect()
}

pub(super) fn simmap(ctx: &Context, a: SimmapArgs) -> Result<()> {
    let normalization = a.normalization.or(ctx.config.simmap.map(|s| s.normalization)).unwrap_or(NormalizationArg::Both);
    let (r, c) = a
        .reference
        .split_once(',')
        .and_then(|(r, c)| Some((r.trim().parse::<usize>().ok()?, c.trim().parse::<usize>().ok()?)))
        .ok_or_else(|| CliError::Config(format!("--ref {:?}: expected row,col", a.reference)))?;
    let set = load_embeddings(&a.embeddings)?;
    let i = set.position(&a.image).ok_or_else(|| CliError::Data(format!("image {:?} not in {}", a.image, a.embeddings.display())))?;
    let grid = set.patch_grid(i).ok_or_else(|| CliError::Input(format!("{} carries no patch grids", a.embeddings.display())))?;
    let map = similarity_map(grid, (r, c))?;
    let stem = file_stem(&a.image);
    let fixed = export_map(&map, Normalization::None)?;
    ctx.write(&format!("simmap_{stem}.csv"), fixed.csv.as_bytes())?;
    if matches!(normalization, NormalizationArg::None | NormalizationArg::Both) {
        ctx.write(&format!("simmap_{stem}_none.pgm"), &fixed.pgm)?;
    }
    if matches!(normalization, NormalizationArg::Minmax | NormalizationArg::Both) {
        match export_map(&map, Normalization::Minmax) {
            Ok(e) => {
                ctx.write(&format!("simmap_{stem}_minmax.pgm"), &e.pgm)?;
            }
            Err(SimmapError::DegenerateRange) if normalization == NormalizationArg::Both => {
                warn!("similarity map is constant; min-max image skipped");
            }
            Err(e) => return Err(e.into()),
        }
    }
    let mut res = Resolved::new(ctx, "simmap");
    res.inputs.insert("embeddings", path_str(&a.embeddings));
    res.inputs.insert("image", a.image.clone());
    res.inputs.insert("ref", format!("{r},{c}"));
    res.simmap = Some(SimmapConfig { normalization });
    res.write(ctx)?;
    let lo = map.values.iter().copied().fold(f64::INFINITY, f64::min);
    println!("map {}x{} ref ({r},{c}) min {lo:.4}", map.rows, map.cols);
    Ok(())
}

// ---------------------------------------------------------------- report

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report files (JSON lines) to merge, in order.
    #[arg(long = "input", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    /// Sort rows best-first on `benchmark:metric`.
    #[arg(long)]
    pub sort_by: Option<String>,
}

pub(super) fn report(ctx: &Context, a: ReportArgs) -> Result<()> {
    let mut reports = Vec::new();
    for p in &a.inputs {
        let text = String::from_utf8(read_file(p)?).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
        let parsed = parse_json_lines(&text).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
        for r in &parsed {
            r.validate()?;
        }
        reports.extend(parsed);
    }
    let sort_by = match &a.sort_by {
        None => None,
        Some(s) => {
            let (b, m) = s.rsplit_once(':').ok_or_else(|| CliError::Config(format!("--sort-by {s:?}: expected benchmark:metric")))?;
            let metric: MetricName = serde_json::from_value(json!(m)).map_err(|_| CliError::Config(format!("unknown metric {m:?}")))?;
            Some((b.to_string(), metric))
        }
    };
    let table = emit_table(&reports, &TableOptions { sort_by });
    ctx.write("leaderboard.md", table.as_bytes())?;
    ctx.write("leaderboard.jsonl", emit_json_lines(&reports).as_bytes())?;
    let mut r = Resolved::new(ctx, "report");
    r.inputs.insert("inputs", a.inputs.iter().map(|p| path_str(p)).collect::<Vec<_>>().join(";"));
    r.write(ctx)?;
    print!("{table}");
    Ok(())
}
