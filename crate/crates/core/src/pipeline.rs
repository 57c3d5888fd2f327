//! End-to-end counting: classify the 224 grid, accumulate class tallies,
//! route, re-tile for the chosen route, regress each patch and sum.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backends::{accumulate, Classifier, Regressor};
use crate::error::{Error, Result};
use crate::rfdb::{DecisionForest, Votes};
use crate::rse::{rse_decide, Rule, RuleMask};
use crate::tiler::{tile_normal, tile_zoom_in, tile_zoom_out};
use crate::types::{
    pcc_to_features, CrowdClass, PatchClassCounts, PatchRegion, RouteLabel, ScenePack,
};

/// Which decision block routes images.
#[derive(Debug, Clone)]
pub enum DecisionEngine {
    RuleSet(RuleMask),
    Forest(Arc<DecisionForest>),
    /// Every image takes the given route; used to exercise each patch maker.
    Forced(RouteLabel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub route: RouteLabel,
    pub fired_rule: Option<Rule>,
    pub votes: Option<Votes>,
}

impl DecisionEngine {
    pub fn decide(&self, pcc: &PatchClassCounts) -> Result<Decision> {
        match self {
            DecisionEngine::RuleSet(mask) => {
                let (route, fired_rule) = rse_decide(pcc, mask)?;
                Ok(Decision {
                    route,
                    fired_rule,
                    votes: None,
                })
            }
            DecisionEngine::Forest(forest) => {
                let (route, votes) = forest.predict(&pcc_to_features(pcc)?);
                Ok(Decision {
                    route,
                    fired_rule: None,
                    votes: Some(votes),
                })
            }
            DecisionEngine::Forced(route) => {
                if pcc.total() == 0 {
                    return Err(Error::EmptyImage);
                }
                Ok(Decision {
                    route: *route,
                    fired_rule: None,
                    votes: None,
                })
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            DecisionEngine::RuleSet(mask) => format!("rse({})", mask.describe()),
            DecisionEngine::Forest(f) => format!(
                "rfdb(trees={}, seed={}, data={})",
                f.params.n_trees,
                f.params.seed,
                &f.metadata.dataset_fingerprint[..f.metadata.dataset_fingerprint.len().min(12)]
            ),
            DecisionEngine::Forced(route) => format!("forced({route})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountResult {
    pub image_id: String,
    pub ground_truth: u64,
    pub route: RouteLabel,
    pub fired_rule: Option<Rule>,
    pub pcc: PatchClassCounts,
    pub patch_counts: Vec<(PatchRegion, f64)>,
    /// Sum of patch counts rounded half away from zero.
    pub estimate: u64,
    pub discarded_nc: u64,
}

impl CountResult {
    pub fn raw_sum(&self) -> f64 {
        self.patch_counts.iter().map(|(_, c)| c).sum()
    }
}

fn regress(
    scene: &ScenePack,
    regressor: &dyn Regressor,
    regions: impl Iterator<Item = PatchRegion>,
) -> Result<Vec<(PatchRegion, f64)>> {
    regions
        .map(|r| {
            let c = regressor.count(scene, &r)?;
            if !c.is_finite() || c < 0.0 {
                return Err(Error::InvalidParam(format!(
                    "regressor returned {c} for {}",
                    r.key(&scene.image_id)
                )));
            }
            Ok((r, c))
        })
        .collect()
}

pub fn count_image(
    scene: &ScenePack,
    classifier: &dyn Classifier,
    regressor: &dyn Regressor,
    engine: &DecisionEngine,
) -> Result<CountResult> {
    let normal = tile_normal(scene);
    let labels: Vec<(PatchRegion, CrowdClass)> = normal
        .patches
        .iter()
        .map(|r| Ok((*r, classifier.classify(scene, r)?)))
        .collect::<Result<_>>()?;
    let pcc = accumulate(labels.iter().map(|(_, c)| c));
    let decision = engine.decide(&pcc)?;

    let (patch_counts, discarded_nc) = match decision.route {
        RouteLabel::Normal => {
            let kept = labels
                .iter()
                .filter(|(_, c)| *c != CrowdClass::Nc)
                .map(|(r, _)| *r);
            (regress(scene, regressor, kept)?, pcc.p_nc)
        }
        RouteLabel::ZoomIn => {
            let plan = tile_zoom_in(scene, &labels)?;
            (
                regress(scene, regressor, plan.patches.into_iter())?,
                pcc.p_nc,
            )
        }
        RouteLabel::ZoomOut => {
            let plan = tile_zoom_out(scene);
            let mut kept = Vec::with_capacity(plan.patches.len());
            let mut dropped = 0;
            for r in plan.patches {
                if classifier.classify(scene, &r)? == CrowdClass::Nc {
                    dropped += 1;
                } else {
                    kept.push(r);
                }
            }
            (regress(scene, regressor, kept.into_iter())?, dropped)
        }
    };

    let sum: f64 = patch_counts.iter().map(|(_, c)| c).sum();
    Ok(CountResult {
        image_id: scene.image_id.clone(),
        ground_truth: scene.count() as u64,
        route: decision.route,
        fired_rule: decision.fired_rule,
        pcc,
        patch_counts,
        estimate: sum.round() as u64,
        discarded_nc,
    })
}

/// Counts every scene, optionally on a dedicated pool of `workers` threads.
/// Results are sorted by image id (stable), independent of scheduling.
pub fn count_all(
    scenes: &[ScenePack],
    classifier: &dyn Classifier,
    regressor: &dyn Regressor,
    engine: &DecisionEngine,
    workers: Option<usize>,
) -> Result<Vec<CountResult>> {
    let run = || {
        scenes
            .par_iter()
            .map(|s| count_image(s, classifier, regressor, engine))
            .collect::<Result<Vec<_>>>()
    };
    let mut results = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidParam(format!("worker pool: {e}")))?
            .install(run)?,
        None => run()?,
    };
    results.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    Ok(results)
}

/// Images handled by each patch maker.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteStats {
    pub zin: u64,
    pub normal: u64,
    pub zout: u64,
}

impl RouteStats {
    pub fn total(&self) -> u64 {
        self.zin + self.normal + self.zout
    }
}

pub fn route_stats<'a>(routes: impl IntoIterator<Item = &'a RouteLabel>) -> RouteStats {
    let mut s = RouteStats::default();
    for r in routes {
        match r {
            RouteLabel::ZoomIn => s.zin += 1,
            RouteLabel::Normal => s.normal += 1,
            RouteLabel::ZoomOut => s.zout += 1,
        }
    }
    s
}

#[derive(Debug, Serialize, Deserialize)]
struct PatchCountRecord {
    key: String,
    count: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CountResultRecord {
    image_id: String,
    ground_truth: u64,
    route: RouteLabel,
    fired_rule: Option<Rule>,
    pcc: PatchClassCounts,
    estimate: u64,
    discarded_nc: u64,
    patch_counts: Vec<PatchCountRecord>,
}

/// One JSON object per line, regions written as patch keys.
pub fn results_to_jsonl(results: &[CountResult]) -> Result<String> {
    let mut out = String::new();
    for r in results {
        let rec = CountResultRecord {
            image_id: r.image_id.clone(),
            ground_truth: r.ground_truth,
            route: r.route,
            fired_rule: r.fired_rule,
            pcc: r.pcc,
            estimate: r.estimate,
            discarded_nc: r.discarded_nc,
            patch_counts: r
                .patch_counts
                .iter()
                .map(|(p, c)| PatchCountRecord {
                    key: p.key(&r.image_id),
                    count: *c,
                })
                .collect(),
        };
        out.push_str(&serde_json::to_string(&rec)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn results_from_jsonl(text: &str) -> Result<Vec<CountResult>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let rec: CountResultRecord = serde_json::from_str(l)?;
            let patch_counts = rec
                .patch_counts
                .into_iter()
                .map(|p| Ok((PatchRegion::parse_key(&p.key)?.1, p.count)))
                .collect::<Result<_>>()?;
            Ok(CountResult {
                image_id: rec.image_id,
                ground_truth: rec.ground_truth,
                route: rec.route,
                fired_rule: rec.fired_rule,
                pcc: rec.pcc,
                patch_counts,
                estimate: rec.estimate,
                discarded_nc: rec.discarded_nc,
            })
        })
        .collect()
}
