//! `zoomcount` command-line front end.
//!
//! Each subcommand is a plain function returning the summary text the binary
//! prints, so scripts and tests can drive the same code paths.

pub mod config;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use zoomcount::backends::{Classifier, OracleClassifier};
use zoomcount::evalmetrics::run_eval;
use zoomcount::labeler::{
    gen_cdc_dataset, gen_rfdb_dataset, parse_external_labels, rfdb_from_csv, rfdb_to_csv,
    CdcConfig, LabelThresholds, RoutePolicy,
};
use zoomcount::manifest::{load_manifest, write_atomic};
use zoomcount::pipeline::{results_from_jsonl, results_to_jsonl, route_stats, DecisionEngine};
use zoomcount::raster::{read_raster, Raster};
use zoomcount::rfdb::{
    feature_importance, forest_train, holdout_split, majority_baseline, DecisionForest,
    ForestParams,
};
use zoomcount::tiler::{tile_normal, tile_zoom_in, tile_zoom_out, TilePlan};
use zoomcount::{CrowdClass, PatchClassCounts, PatchRegion, RouteLabel, ScenePack};

pub use config::{BackendKind, EngineKind, RunArgs, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "zoomcount",
    version,
    about = "Patch-routed crowd counting toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write ground-truth classes of every 224 patch as replay lines.
    Label(RunArgs),
    /// Sample a class-balanced patch dataset for classifier training.
    GenCdc(GenCdcArgs),
    /// Build the per-image route dataset (CSV) for the forest.
    GenRfdb(GenRfdbArgs),
    /// Train the random-forest decision block from an RFDB CSV.
    TrainRfdb(TrainArgs),
    /// Write model-facing 224x224 patch rasters named by patch key.
    ExportPatches(ExportArgs),
    /// Count every scene and write metrics, routing stats and residuals.
    Eval(RunArgs),
    /// Route a single set of class tallies.
    Decide(DecideArgs),
    /// Routing statistics of a results file.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct GenCdcArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    #[arg(long, value_delimiter = ',', default_values_t = vec![112u32, 224, 448])]
    pub sizes: Vec<u32>,
    #[arg(long, default_value_t = 1_000_000)]
    pub max_attempts: u64,
}

#[derive(Debug, Args)]
pub struct GenRfdbArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// `rse-oracle` or `external`.
    #[arg(long, default_value = "rse-oracle")]
    pub policy: String,
    /// JSON map image_id -> label, for the external policy.
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub csv: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub n_trees: usize,
    #[arg(long, default_value_t = 2)]
    pub min_samples: usize,
    #[arg(long, default_value_t = 2)]
    pub features_per_split: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub no_bootstrap: bool,
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// `normal`, `zin`, `zout` or `auto`.
    #[arg(long, default_value = "auto")]
    pub route: String,
}

#[derive(Debug, Args)]
pub struct DecideArgs {
    /// Tallies as `nc,lc,mc,hc`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub pcc: Vec<u64>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub results: PathBuf,
}

pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Label(a) => cmd_label(&RunConfig::resolve(&a)?),
        Command::GenCdc(a) => cmd_gen_cdc(&a),
        Command::GenRfdb(a) => cmd_gen_rfdb(&a),
        Command::TrainRfdb(a) => cmd_train_rfdb(&a),
        Command::ExportPatches(a) => cmd_export_patches(&a),
        Command::Eval(a) => cmd_eval(&RunConfig::resolve(&a)?),
        Command::Decide(a) => cmd_decide(&a),
        Command::Stats(a) => cmd_stats(&a),
    }
}

fn sorted_scenes(cfg: &RunConfig) -> Result<Vec<ScenePack>> {
    let path = cfg.require_manifest()?;
    let mut scenes =
        load_manifest(path).with_context(|| format!("loading manifest {}", path.display()))?;
    scenes.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    Ok(scenes)
}

fn require_out(cfg: &RunConfig) -> Result<&Path> {
    cfg.out
        .as_deref()
        .ok_or_else(|| anyhow!("--out is required"))
}

/// One line of a class replay file.
#[derive(Serialize)]
struct KeyClass {
    key: String,
    class: CrowdClass,
}

pub fn cmd_label(cfg: &RunConfig) -> Result<String> {
    let th = cfg.thresholds()?;
    let scenes = sorted_scenes(cfg)?;
    let mut out = String::new();
    let mut total = PatchClassCounts::default();
    for s in &scenes {
        for r in &tile_normal(s).patches {
            let class = zoomcount::backends::oracle_classify(s, &th, r);
            total.increment(class);
            let line = serde_json::to_string(&KeyClass {
                key: r.key(&s.image_id),
                class,
            })?;
            writeln!(out, "{line}")?;
        }
    }
    write_atomic(require_out(cfg)?, out.as_bytes())?;
    Ok(format!(
        "labeled {} patches over {} scenes: nc={} lc={} mc={} hc={}",
        total.total(),
        scenes.len(),
        total.p_nc,
        total.p_lc,
        total.p_mc,
        total.p_hc
    ))
}

pub fn cmd_gen_cdc(args: &GenCdcArgs) -> Result<String> {
    let cfg = RunConfig::resolve(&args.run)?;
    let scenes = sorted_scenes(&cfg)?;
    let samples = gen_cdc_dataset(
        &scenes,
        &cfg.thresholds()?,
        &CdcConfig {
            per_class: args.per_class,
            sizes: args.sizes.clone(),
            seed: cfg.seed,
            max_attempts: args.max_attempts,
        },
    )?;
    let mut out = String::new();
    for s in &samples {
        let line = serde_json::to_string(&KeyClass {
            key: s.region.key(&s.image_id),
            class: s.class,
        })?;
        writeln!(out, "{line}")?;
    }
    write_atomic(require_out(&cfg)?, out.as_bytes())?;
    Ok(format!(
        "wrote {} patches ({} per class)",
        samples.len(),
        args.per_class
    ))
}

pub fn cmd_gen_rfdb(args: &GenRfdbArgs) -> Result<String> {
    let cfg = RunConfig::resolve(&args.run)?;
    let scenes = sorted_scenes(&cfg)?;
    let policy = match args.policy.as_str() {
        "rse-oracle" => RoutePolicy::RseOracle,
        "external" => {
            let path = args
                .labels
                .as_ref()
                .ok_or_else(|| anyhow!("--labels is required for the external policy"))?;
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            RoutePolicy::External(parse_external_labels(&text)?)
        }
        other => bail!("unknown policy `{other}` (expected rse-oracle or external)"),
    };
    let rows = gen_rfdb_dataset(&scenes, &cfg.thresholds()?, &policy)?;
    write_atomic(require_out(&cfg)?, rfdb_to_csv(&rows)?.as_bytes())?;

    let n = rows.len().max(1) as f64;
    let mut summary = format!("wrote {} rows\n", rows.len());
    for label in [RouteLabel::ZoomIn, RouteLabel::Normal, RouteLabel::ZoomOut] {
        let k = rows.iter().filter(|r| r.label == label).count();
        writeln!(
            summary,
            "{:>6}: {k:>6} ({:.1}%)",
            label.as_str(),
            100.0 * k as f64 / n
        )?;
    }
    let mean: Vec<String> = (0..4)
        .map(|f| {
            format!(
                "{:.2}",
                rows.iter().map(|r| r.features.get(f)).sum::<f64>() / n
            )
        })
        .collect();
    write!(
        summary,
        "mean class share (nc,lc,mc,hc) %: {}",
        mean.join(", ")
    )?;
    Ok(summary)
}

#[derive(Debug, Serialize)]
pub struct TrainSummary {
    pub n_train: usize,
    pub n_validation: usize,
    pub train_accuracy: f64,
    pub validation_accuracy: Option<f64>,
    pub majority_baseline: Option<f64>,
    pub feature_importance: [f64; 4],
}

pub fn train_forest(args: &TrainArgs) -> Result<(DecisionForest, TrainSummary)> {
    let text =
        fs::read_to_string(&args.csv).with_context(|| format!("reading {}", args.csv.display()))?;
    let rows = rfdb_from_csv(&text)?;
    let seed = args.seed.unwrap_or_else(config::env_seed);
    let (train, val) = holdout_split(&rows, args.val_fraction, seed)?;
    let params = ForestParams {
        n_trees: args.n_trees,
        min_samples: args.min_samples,
        features_per_split: args.features_per_split,
        seed,
        bootstrap: !args.no_bootstrap,
    };
    let forest = forest_train(&train, &params)?;
    let summary = TrainSummary {
        n_train: train.len(),
        n_validation: val.len(),
        train_accuracy: forest.accuracy(&train),
        validation_accuracy: (!val.is_empty()).then(|| forest.accuracy(&val)),
        majority_baseline: (!val.is_empty()).then(|| majority_baseline(&train, &val)),
        feature_importance: feature_importance(&forest).fi,
    };
    Ok((forest, summary))
}

pub fn cmd_train_rfdb(args: &TrainArgs) -> Result<String> {
    let (forest, s) = train_forest(args)?;
    write_atomic(&args.out, forest.to_json()?.as_bytes())?;
    let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{:.2}%", 100.0 * v));
    Ok(format!(
        "trained {} trees on {} rows ({} held out)\ntrain accuracy: {:.2}%\nvalidation accuracy: {}\nmajority baseline: {}\nfeature importance (nc,lc,mc,hc): {:.4}, {:.4}, {:.4}, {:.4}",
        forest.trees.len(),
        s.n_train,
        s.n_validation,
        100.0 * s.train_accuracy,
        pct(s.validation_accuracy),
        pct(s.majority_baseline),
        s.feature_importance[0],
        s.feature_importance[1],
        s.feature_importance[2],
        s.feature_importance[3],
    ))
}

/// File name for a patch key; path separators are replaced.
pub fn patch_file_name(key: &str, channels: u8) -> String {
    let stem: String = key
        .chars()
        .map(|c| if c == '/' || c == '\\' { '_' } else { c })
        .collect();
    format!("{stem}.{}", if channels == 1 { "pgm" } else { "ppm" })
}

/// Crops `region` from the padded raster and rescales it to the model size.
pub fn model_patch(padded: &Raster, region: &PatchRegion) -> Result<Raster> {
    Ok(padded.crop(region)?.rescale(region.scale)?)
}

fn export_plans(
    scene: &ScenePack,
    route: &str,
    classifier: &dyn Classifier,
    engine: &DecisionEngine,
) -> Result<Vec<TilePlan>> {
    let normal = tile_normal(scene);
    let labels = || -> Result<Vec<(PatchRegion, CrowdClass)>> {
        normal
            .patches
            .iter()
            .map(|r| Ok((*r, classifier.classify(scene, r)?)))
            .collect()
    };
    Ok(match route {
        "normal" => vec![normal.clone()],
        "zin" => vec![tile_zoom_in(scene, &labels()?)?],
        "zout" => vec![tile_zoom_out(scene)],
        "auto" => {
            let labels = labels()?;
            let pcc = zoomcount::backends::accumulate(labels.iter().map(|(_, c)| c));
            let chosen = match engine.decide(&pcc)?.route {
                RouteLabel::Normal => None,
                RouteLabel::ZoomIn => Some(tile_zoom_in(scene, &labels)?),
                RouteLabel::ZoomOut => Some(tile_zoom_out(scene)),
            };
            std::iter::once(normal.clone()).chain(chosen).collect()
        }
        other => bail!("unknown route `{other}` (expected normal, zin, zout or auto)"),
    })
}

pub fn cmd_export_patches(args: &ExportArgs) -> Result<String> {
    let cfg = RunConfig::resolve(&args.run)?;
    let out_dir = require_out(&cfg)?.to_path_buf();
    let scenes = sorted_scenes(&cfg)?;
    let classifier = cfg.classifier()?;
    let engine = cfg.engine()?;
    let mut index = String::new();
    let mut written = 0usize;
    if let Some(s) = scenes.iter().find(|s| s.raster_path.is_none()) {
        bail!("scene `{}` has no raster", s.image_id);
    }
    for scene in &scenes {
        let path = scene.raster_path.as_ref().expect("checked above");
        let raster = read_raster(path).with_context(|| format!("reading {}", path.display()))?;
        if (raster.width(), raster.height()) != (scene.width, scene.height) {
            bail!(
                "raster {} is {}x{} but scene `{}` declares {}x{}",
                path.display(),
                raster.width(),
                raster.height(),
                scene.image_id,
                scene.width,
                scene.height
            );
        }
        for plan in export_plans(scene, &args.route, classifier.as_ref(), &engine)? {
            let padded = raster.pad_edge(plan.padded_width, plan.padded_height)?;
            for region in &plan.patches {
                let key = region.key(&scene.image_id);
                let name = patch_file_name(&key, raster.channels());
                let patch = model_patch(&padded, region)?;
                write_atomic(&out_dir.join(&name), &patch.to_pnm_bytes())?;
                writeln!(index, "{key}\t{name}")?;
                written += 1;
            }
        }
    }
    write_atomic(&out_dir.join("index.tsv"), index.as_bytes())?;
    Ok(format!(
        "exported {written} patches to {}",
        out_dir.display()
    ))
}

/// File names `cmd_eval` writes inside its output directory.
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const RESULTS_JSONL: &str = "results.jsonl";

pub fn cmd_eval(cfg: &RunConfig) -> Result<String> {
    let out_dir = require_out(cfg)?;
    let scenes = sorted_scenes(cfg)?;
    let classifier = cfg.classifier()?;
    let regressor = cfg.regressor()?;
    let engine = cfg.engine()?;
    let (report, results) = run_eval(
        &scenes,
        classifier.as_ref(),
        regressor.as_ref(),
        &engine,
        cfg.workers,
    )?;
    write_atomic(&out_dir.join(REPORT_JSON), report.to_json()?.as_bytes())?;
    write_atomic(&out_dir.join(REPORT_CSV), report.to_csv()?.as_bytes())?;
    write_atomic(
        &out_dir.join(RESULTS_JSONL),
        results_to_jsonl(&results)?.as_bytes(),
    )?;
    let rs = report.route_stats;
    Ok(format!(
        "engine: {}  ablation: {}  images: {}\n  MAE   |  MNAE  |  RMSE  | I_Zin | I_N | I_Zout\n{:>7.2} | {:>6.3} | {:>6.2} | {:>5} | {:>3} | {:>6}",
        report.engine, report.ablation, report.n_images, report.mae, report.mnae, report.rmse, rs.zin, rs.normal, rs.zout
    ))
}

pub fn cmd_decide(args: &DecideArgs) -> Result<String> {
    let cfg = RunConfig::resolve(&args.run)?;
    let [nc, lc, mc, hc] = args.pcc[..] else {
        bail!("--pcc takes exactly four values");
    };
    let pcc = PatchClassCounts::new(nc, lc, mc, hc);
    let d = cfg.engine()?.decide(&pcc)?;
    let mut s = format!("route: {}", d.route);
    if let Some(rule) = d.fired_rule {
        write!(s, "  rule: {rule}")?;
    }
    if let Some([n, zo, zi]) = d.votes {
        write!(s, "  votes: normal={n} zout={zo} zin={zi}")?;
    }
    Ok(s)
}

pub fn cmd_stats(args: &StatsArgs) -> Result<String> {
    let text = fs::read_to_string(&args.results)
        .with_context(|| format!("reading {}", args.results.display()))?;
    let results = results_from_jsonl(&text)?;
    let s = route_stats(results.iter().map(|r| &r.route));
    let mut rules: BTreeMap<String, usize> = BTreeMap::new();
    for r in &results {
        if let Some(rule) = r.fired_rule {
            *rules.entry(rule.to_string()).or_default() += 1;
        }
    }
    let fired: Vec<String> = rules.iter().map(|(k, v)| format!("{k}={v}")).collect();
    Ok(format!(
        "I_Zin={} I_N={} I_Zout={} (total {})\nfirst-fired rules: {}",
        s.zin,
        s.normal,
        s.zout,
        s.total(),
        if fired.is_empty() {
            "none".into()
        } else {
            fired.join(" ")
        }
    ))
}

pub(crate) fn oracle(th: LabelThresholds) -> Box<dyn Classifier> {
    Box::new(OracleClassifier::new(th))
}
