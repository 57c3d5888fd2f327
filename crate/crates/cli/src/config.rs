//! Run configuration shared by the scene-level subcommands.
//!
//! Values come from command-line flags first, then an optional flat JSON
//! config file (`--config`), then `ZOOMCOUNT_SEED` for the seed, then
//! built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::Deserialize;

use zoomcount::backends::{Classifier, NoiseModel, OracleRegressor, Regressor, ReplayTable};
use zoomcount::labeler::LabelThresholds;
use zoomcount::pipeline::DecisionEngine;
use zoomcount::rfdb::DecisionForest;
use zoomcount::rse::{Rule, RuleMask};
use zoomcount::RouteLabel;

pub const SEED_ENV: &str = "ZOOMCOUNT_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Rse,
    Rfdb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Oracle,
    Replay,
}

/// Flags common to every scene-level subcommand. All optional so the
/// config file can fill gaps.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Flat JSON file with defaults for any of these flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Largest head count any patch of the dataset may hold.
    #[arg(long)]
    pub max_count: Option<u64>,
    #[arg(long, value_enum)]
    pub engine: Option<EngineKind>,
    /// Trained forest file, required by `--engine rfdb`.
    #[arg(long)]
    pub forest: Option<PathBuf>,
    /// Send every image down one route: normal, zin or zout.
    #[arg(long)]
    pub force_route: Option<RouteLabel>,
    #[arg(long, value_enum)]
    pub classifier: Option<BackendKind>,
    #[arg(long, value_enum)]
    pub regressor: Option<BackendKind>,
    #[arg(long)]
    pub replay_class: Option<PathBuf>,
    #[arg(long)]
    pub replay_count: Option<PathBuf>,
    /// Relative Gaussian noise on oracle counts.
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub disable_rule: Vec<Rule>,
    #[arg(long)]
    pub disable_block: Vec<RouteLabel>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    manifest: Option<PathBuf>,
    max_count: Option<u64>,
    engine: Option<EngineKind>,
    forest: Option<PathBuf>,
    force_route: Option<String>,
    classifier: Option<BackendKind>,
    regressor: Option<BackendKind>,
    replay_class: Option<PathBuf>,
    replay_count: Option<PathBuf>,
    noise_sigma: Option<f64>,
    seed: Option<u64>,
    #[serde(default)]
    disable_rule: Vec<String>,
    #[serde(default)]
    disable_block: Vec<String>,
    workers: Option<usize>,
    out: Option<PathBuf>,
}

fn load_file_config(path: &Path) -> Result<FileConfig> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))?;
    let serde_json::Value::Object(map) = value else {
        bail!("config {} must be a JSON object", path.display());
    };
    // Accept flag spellings (`max-count`) as well as `max_count`.
    let map: serde_json::Map<String, serde_json::Value> = map
        .into_iter()
        .map(|(k, v)| (k.replace('-', "_"), v))
        .collect();
    let mut cfg: FileConfig = serde_json::from_value(serde_json::Value::Object(map))
        .with_context(|| format!("config {}", path.display()))?;
    // Relative paths in a config file are relative to the file.
    let base = path.parent().unwrap_or(Path::new(""));
    for p in [
        &mut cfg.manifest,
        &mut cfg.forest,
        &mut cfg.replay_class,
        &mut cfg.replay_count,
        &mut cfg.out,
    ]
    .into_iter()
    .flatten()
    {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    Ok(cfg)
}

/// Seed from `ZOOMCOUNT_SEED`, or 0.
pub fn env_seed() -> u64 {
    std::env::var(SEED_ENV)
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(0)
}

fn parse_all<T: FromStr>(items: &[String]) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    items
        .iter()
        .map(|s| s.parse::<T>().map_err(|e| anyhow!("{s}: {e}")))
        .collect()
}

/// Fully resolved settings.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub max_count: Option<u64>,
    pub engine: EngineKind,
    pub forest: Option<PathBuf>,
    pub force_route: Option<RouteLabel>,
    pub classifier: BackendKind,
    pub regressor: BackendKind,
    pub replay_class: Option<PathBuf>,
    pub replay_count: Option<PathBuf>,
    pub noise_sigma: f64,
    pub seed: u64,
    pub mask: RuleMask,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn resolve(args: &RunArgs) -> Result<Self> {
        let file = match &args.config {
            Some(p) => load_file_config(p)?,
            None => FileConfig::default(),
        };
        let force_route = match (&args.force_route, &file.force_route) {
            (Some(r), _) => Some(*r),
            (None, Some(s)) => Some(
                s.parse::<RouteLabel>()
                    .map_err(|e| anyhow!("force_route: {e}"))?,
            ),
            (None, None) => None,
        };
        let (rules, blocks) = if args.disable_rule.is_empty() && args.disable_block.is_empty() {
            (
                parse_all::<Rule>(&file.disable_rule)?,
                parse_all::<RouteLabel>(&file.disable_block)?,
            )
        } else {
            (args.disable_rule.clone(), args.disable_block.clone())
        };
        let mut mask = RuleMask::all();
        for r in rules {
            mask = mask.without_rule(r);
        }
        for b in blocks {
            if b == RouteLabel::Normal {
                bail!("--disable-block takes zin or zout");
            }
            mask = mask.without_block(b);
        }
        let cfg = RunConfig {
            manifest: args.manifest.clone().or(file.manifest),
            max_count: args.max_count.or(file.max_count),
            engine: args.engine.or(file.engine).unwrap_or(EngineKind::Rse),
            forest: args.forest.clone().or(file.forest),
            force_route,
            classifier: args
                .classifier
                .or(file.classifier)
                .unwrap_or(BackendKind::Oracle),
            regressor: args
                .regressor
                .or(file.regressor)
                .unwrap_or(BackendKind::Oracle),
            replay_class: args.replay_class.clone().or(file.replay_class),
            replay_count: args.replay_count.clone().or(file.replay_count),
            noise_sigma: args.noise_sigma.or(file.noise_sigma).unwrap_or(0.0),
            seed: args.seed.or(file.seed).unwrap_or_else(env_seed),
            mask,
            workers: args.workers.or(file.workers),
            out: args.out.clone().or(file.out),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.engine == EngineKind::Rfdb && self.forest.is_none() {
            bail!("--engine rfdb requires --forest");
        }
        if self.classifier == BackendKind::Replay && self.replay_class.is_none() {
            bail!("--classifier replay requires --replay-class");
        }
        if self.regressor == BackendKind::Replay && self.replay_count.is_none() {
            bail!("--regressor replay requires --replay-count");
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            bail!("--noise-sigma must be a non-negative number");
        }
        if self.workers == Some(0) {
            bail!("--workers must be at least 1");
        }
        Ok(())
    }

    pub fn require_manifest(&self) -> Result<&Path> {
        self.manifest
            .as_deref()
            .ok_or_else(|| anyhow!("--manifest is required"))
    }

    pub fn thresholds(&self) -> Result<LabelThresholds> {
        let m = self
            .max_count
            .ok_or_else(|| anyhow!("--max-count is required"))?;
        Ok(LabelThresholds::new(m)?)
    }

    pub fn classifier(&self) -> Result<Box<dyn Classifier>> {
        Ok(match self.classifier {
            BackendKind::Oracle => crate::oracle(self.thresholds()?),
            BackendKind::Replay => Box::new(load_table(self.replay_class.as_deref())?),
        })
    }

    pub fn regressor(&self) -> Result<Box<dyn Regressor>> {
        Ok(match self.regressor {
            BackendKind::Oracle => {
                let noise = (self.noise_sigma > 0.0)
                    .then(|| NoiseModel::new(self.noise_sigma, self.seed))
                    .transpose()?;
                Box::new(OracleRegressor { noise })
            }
            BackendKind::Replay => Box::new(load_table(self.replay_count.as_deref())?),
        })
    }

    pub fn engine(&self) -> Result<DecisionEngine> {
        if let Some(route) = self.force_route {
            return Ok(DecisionEngine::Forced(route));
        }
        Ok(match self.engine {
            EngineKind::Rse => DecisionEngine::RuleSet(self.mask),
            EngineKind::Rfdb => {
                let path = self
                    .forest
                    .as_deref()
                    .ok_or_else(|| anyhow!("--forest is required"))?;
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading forest {}", path.display()))?;
                DecisionEngine::Forest(Arc::new(DecisionForest::from_json(&text)?))
            }
        })
    }
}

fn load_table(path: Option<&Path>) -> Result<ReplayTable> {
    let path = path.ok_or_else(|| anyhow!("replay file is required"))?;
    let text =
        fs::read_to_string(path).with_context(|| format!("reading replay {}", path.display()))?;
    ReplayTable::from_jsonl(&text).with_context(|| format!("replay {}", path.display()))
}
