//! Ground-truth crowd classes from head annotations, and the two training
//! datasets derived from them: balanced classifier patches and per-image
//! route rows for the forest.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rse::{rse_decide, RuleMask};
use crate::tiler::tile_normal;
use crate::types::{
    pcc_to_features, CrowdClass, FeatureVector, PatchClassCounts, PatchRegion, RouteLabel, Scale,
    ScenePack,
};

/// Class cut points relative to the largest per-patch count of a dataset:
/// LC up to 5%, MC up to 20%, HC beyond.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelThresholds {
    max_count: u64,
}

impl LabelThresholds {
    pub fn new(max_count: u64) -> Result<Self> {
        if max_count == 0 {
            return Err(Error::InvalidParam("max_count must be at least 1".into()));
        }
        Ok(LabelThresholds { max_count })
    }

    pub fn max_count(&self) -> u64 {
        self.max_count
    }

    pub fn cut_low(&self) -> f64 {
        0.05 * self.max_count as f64
    }

    pub fn cut_mid(&self) -> f64 {
        0.20 * self.max_count as f64
    }
}

pub fn count_in_region(scene: &ScenePack, region: &PatchRegion) -> u64 {
    scene.points.iter().filter(|p| region.contains(p)).count() as u64
}

/// Maps a head count to its class. Cut points are compared exactly:
/// `count <= 0.05 * max` is evaluated as `100 * count <= 5 * max`.
pub fn label_patch(count: u64, th: &LabelThresholds) -> CrowdClass {
    let scaled = u128::from(count) * 100;
    let max = u128::from(th.max_count);
    if count == 0 {
        CrowdClass::Nc
    } else if scaled <= 5 * max {
        CrowdClass::Lc
    } else if scaled <= 20 * max {
        CrowdClass::Mc
    } else {
        CrowdClass::Hc
    }
}

/// Ground-truth class tallies over the normal 224 grid.
pub fn scene_pcc(scene: &ScenePack, th: &LabelThresholds) -> PatchClassCounts {
    let mut pcc = PatchClassCounts::default();
    for region in &tile_normal(scene).patches {
        pcc.increment(label_patch(count_in_region(scene, region), th));
    }
    pcc
}

/// One classifier training patch.
#[derive(Debug, Clone, PartialEq)]
pub struct CdcSample {
    pub image_id: String,
    pub region: PatchRegion,
    pub class: CrowdClass,
}

#[derive(Debug, Clone)]
pub struct CdcConfig {
    pub per_class: usize,
    /// Patch edges to draw from; each of 112, 224, 448.
    pub sizes: Vec<u32>,
    pub seed: u64,
    pub max_attempts: u64,
}

impl Default for CdcConfig {
    fn default() -> Self {
        CdcConfig {
            per_class: 1,
            sizes: vec![112, 224, 448],
            seed: 0,
            max_attempts: 1_000_000,
        }
    }
}

fn scale_for_edge(edge: u32) -> Result<Scale> {
    match edge {
        112 => Ok(Scale::Two),
        224 => Ok(Scale::One),
        448 => Ok(Scale::Half),
        other => Err(Error::InvalidParam(format!(
            "patch size must be 112, 224 or 448, got {other}"
        ))),
    }
}

/// Rejection-samples random square patches until every class has
/// `per_class` examples. Deterministic under `cfg.seed`.
pub fn gen_cdc_dataset(
    scenes: &[ScenePack],
    th: &LabelThresholds,
    cfg: &CdcConfig,
) -> Result<Vec<CdcSample>> {
    if cfg.per_class == 0 {
        return Err(Error::InvalidParam("per_class must be at least 1".into()));
    }
    if scenes.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cfg.sizes.is_empty() {
        return Err(Error::InvalidParam("no patch sizes given".into()));
    }
    let scales = cfg
        .sizes
        .iter()
        .map(|&s| scale_for_edge(s))
        .collect::<Result<Vec<_>>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut have = [0usize; 4];
    let mut out = Vec::with_capacity(cfg.per_class * 4);
    let mut attempts = 0u64;
    while have.iter().any(|&n| n < cfg.per_class) {
        if attempts >= cfg.max_attempts {
            let shortfall = CrowdClass::ALL
                .iter()
                .filter(|c| have[c.index()] < cfg.per_class)
                .map(|c| format!("{c}: {}", cfg.per_class - have[c.index()]))
                .collect::<Vec<_>>()
                .join(", ");
            return Err(Error::Shortfall { shortfall });
        }
        attempts += 1;

        let scene = &scenes[rng.random_range(0..scenes.len())];
        let pick = rng.random_range(0..cfg.sizes.len());
        let edge = cfg.sizes[pick];
        let x0 = rng.random_range(0..=scene.width.max(edge) - edge);
        let y0 = rng.random_range(0..=scene.height.max(edge) - edge);
        let region = PatchRegion::new(x0, y0, edge, edge, scales[pick]);
        let class = label_patch(count_in_region(scene, &region), th);
        if have[class.index()] < cfg.per_class {
            have[class.index()] += 1;
            out.push(CdcSample {
                image_id: scene.image_id.clone(),
                region,
                class,
            });
        }
    }
    Ok(out)
}

/// One training row for the forest.
#[derive(Debug, Clone, PartialEq)]
pub struct RfdbRow {
    pub features: FeatureVector,
    pub label: RouteLabel,
    pub source_image: String,
}

/// How route labels are assigned to generated rows.
#[derive(Debug, Clone)]
pub enum RoutePolicy {
    /// Apply the full rule set to the ground-truth tallies.
    RseOracle,
    /// Labels supplied per image id.
    External(HashMap<String, RouteLabel>),
}

pub fn gen_rfdb_dataset(
    scenes: &[ScenePack],
    th: &LabelThresholds,
    policy: &RoutePolicy,
) -> Result<Vec<RfdbRow>> {
    scenes
        .par_iter()
        .map(|scene| {
            let pcc = scene_pcc(scene, th);
            let features = pcc_to_features(&pcc)?;
            let label = match policy {
                RoutePolicy::RseOracle => rse_decide(&pcc, &RuleMask::all())?.0,
                RoutePolicy::External(map) => *map
                    .get(&scene.image_id)
                    .ok_or_else(|| Error::MissingLabel(scene.image_id.clone()))?,
            };
            Ok(RfdbRow {
                features,
                label,
                source_image: scene.image_id.clone(),
            })
        })
        .collect()
}

/// Parses an external policy file: a JSON object mapping image id to label.
pub fn parse_external_labels(text: &str) -> Result<HashMap<String, RouteLabel>> {
    Ok(serde_json::from_str(text)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    f_nc: f64,
    f_lc: f64,
    f_mc: f64,
    f_hc: f64,
    label: RouteLabel,
    image_id: String,
}

pub fn rfdb_to_csv(rows: &[RfdbRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        let [f_nc, f_lc, f_mc, f_hc] = r.features.0;
        w.serialize(CsvRow {
            f_nc,
            f_lc,
            f_mc,
            f_hc,
            label: r.label,
            image_id: r.source_image.clone(),
        })?;
    }
    if rows.is_empty() {
        w.write_record(["f_nc", "f_lc", "f_mc", "f_hc", "label", "image_id"])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::io("<csv buffer>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn rfdb_from_csv(text: &str) -> Result<Vec<RfdbRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize::<CsvRow>()
        .map(|row| {
            let row = row?;
            Ok(RfdbRow {
                features: FeatureVector([row.f_nc, row.f_lc, row.f_mc, row.f_hc]),
                label: row.label,
                source_image: row.image_id,
            })
        })
        .collect()
}
