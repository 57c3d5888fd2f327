//! Classifier and regressor backends standing in for the patch CNNs.
//!
//! Two implementations of each: an oracle that answers from the ground-truth
//! annotations, and a replay table that answers from recorded model output
//! keyed by patch key.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::labeler::{count_in_region, label_patch, LabelThresholds};
use crate::types::{CrowdClass, PatchClassCounts, PatchRegion, ScenePack};

/// Four-way patch density classifier.
pub trait Classifier: Send + Sync {
    fn classify(&self, scene: &ScenePack, region: &PatchRegion) -> Result<CrowdClass>;
}

/// Per-patch head count regressor. Outputs are non-negative reals.
pub trait Regressor: Send + Sync {
    fn count(&self, scene: &ScenePack, region: &PatchRegion) -> Result<f64>;
}

/// Tallies classifier labels into per-class patch counts.
pub fn accumulate<'a>(labels: impl IntoIterator<Item = &'a CrowdClass>) -> PatchClassCounts {
    let mut pcc = PatchClassCounts::default();
    for &c in labels {
        pcc.increment(c);
    }
    pcc
}

/// Labels a region by its true head count. The scale is ignored: the same
/// rectangle gets the same class at any delivery scale.
pub fn oracle_classify(
    scene: &ScenePack,
    th: &LabelThresholds,
    region: &PatchRegion,
) -> CrowdClass {
    label_patch(count_in_region(scene, region), th)
}

#[derive(Debug, Clone, Copy)]
pub struct OracleClassifier {
    pub thresholds: LabelThresholds,
}

impl OracleClassifier {
    pub fn new(thresholds: LabelThresholds) -> Self {
        OracleClassifier { thresholds }
    }
}

impl Classifier for OracleClassifier {
    fn classify(&self, scene: &ScenePack, region: &PatchRegion) -> Result<CrowdClass> {
        Ok(oracle_classify(scene, &self.thresholds, region))
    }
}

/// Multiplicative Gaussian perturbation `count * (1 + sigma * z)`, clamped at
/// zero. Each patch draws from its own stream derived from the seed and the
/// patch key, so results do not depend on query order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::InvalidParam(format!(
                "noise sigma must be >= 0, got {sigma}"
            )));
        }
        Ok(NoiseModel { sigma, seed })
    }

    fn stream(&self, key: &str) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(key.as_bytes());
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed)
    }

    pub fn perturb(&self, exact: f64, key: &str) -> f64 {
        if self.sigma == 0.0 {
            return exact;
        }
        let z: f64 = StandardNormal.sample(&mut self.stream(key));
        (exact * (1.0 + self.sigma * z)).max(0.0)
    }
}

/// Exact head count in the region, optionally perturbed.
pub fn oracle_count(scene: &ScenePack, region: &PatchRegion, noise: Option<&NoiseModel>) -> f64 {
    let exact = count_in_region(scene, region) as f64;
    match noise {
        Some(n) => n.perturb(exact, &region.key(&scene.image_id)),
        None => exact,
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OracleRegressor {
    pub noise: Option<NoiseModel>,
}

impl Regressor for OracleRegressor {
    fn count(&self, scene: &ScenePack, region: &PatchRegion) -> Result<f64> {
        Ok(oracle_count(scene, region, self.noise.as_ref()))
    }
}

/// Recorded model outputs keyed by patch key.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayTable {
    classes: HashMap<String, CrowdClass>,
    counts: HashMap<String, f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ReplayLine {
    key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class: Option<CrowdClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    count: Option<f64>,
}

impl ReplayTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_class(&mut self, key: String, class: CrowdClass) {
        self.classes.insert(key, class);
    }

    pub fn insert_count(&mut self, key: String, count: f64) -> Result<()> {
        if !count.is_finite() || count < 0.0 {
            return Err(Error::InvalidParam(format!(
                "replay count for `{key}` must be >= 0, got {count}"
            )));
        }
        self.counts.insert(key, count);
        Ok(())
    }

    pub fn class_entries(&self) -> usize {
        self.classes.len()
    }

    pub fn count_entries(&self) -> usize {
        self.counts.len()
    }

    /// Parses JSON Lines; each line carries a `key` plus `class` or `count`.
    /// Blank lines are skipped. Lines may be merged from several files by
    /// calling this repeatedly.
    pub fn extend_from_jsonl(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let err = |reason: String| Error::ReplayParse { line, reason };
            let rec: ReplayLine = serde_json::from_str(raw).map_err(|e| err(e.to_string()))?;
            PatchRegion::parse_key(&rec.key).map_err(|e| err(e.to_string()))?;
            match (rec.class, rec.count) {
                (Some(c), None) => {
                    if self.classes.insert(rec.key.clone(), c).is_some() {
                        return Err(err(format!("duplicate class entry for `{}`", rec.key)));
                    }
                }
                (None, Some(v)) => {
                    if !v.is_finite() || v < 0.0 {
                        return Err(err(format!("count must be >= 0, got {v}")));
                    }
                    if self.counts.insert(rec.key.clone(), v).is_some() {
                        return Err(err(format!("duplicate count entry for `{}`", rec.key)));
                    }
                }
                _ => return Err(err("expected exactly one of `class` or `count`".into())),
            }
        }
        Ok(())
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut t = ReplayTable::new();
        t.extend_from_jsonl(text)?;
        Ok(t)
    }

    /// Serializes entries sorted by key: classes first, then counts.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        let mut class_keys: Vec<_> = self.classes.keys().collect();
        class_keys.sort();
        for k in class_keys {
            let line = ReplayLine {
                key: k.clone(),
                class: Some(self.classes[k]),
                count: None,
            };
            writeln!(out, "{}", serde_json::to_string(&line)?).expect("write to String");
        }
        let mut count_keys: Vec<_> = self.counts.keys().collect();
        count_keys.sort();
        for k in count_keys {
            let line = ReplayLine {
                key: k.clone(),
                class: None,
                count: Some(self.counts[k]),
            };
            writeln!(out, "{}", serde_json::to_string(&line)?).expect("write to String");
        }
        Ok(out)
    }

    pub fn replay_classify(&self, image_id: &str, region: &PatchRegion) -> Result<CrowdClass> {
        let key = region.key(image_id);
        self.classes
            .get(&key)
            .copied()
            .ok_or(Error::ReplayMiss(key))
    }

    pub fn replay_count(&self, image_id: &str, region: &PatchRegion) -> Result<f64> {
        let key = region.key(image_id);
        self.counts.get(&key).copied().ok_or(Error::ReplayMiss(key))
    }
}

impl Classifier for ReplayTable {
    fn classify(&self, scene: &ScenePack, region: &PatchRegion) -> Result<CrowdClass> {
        self.replay_classify(&scene.image_id, region)
    }
}

impl Regressor for ReplayTable {
    fn count(&self, scene: &ScenePack, region: &PatchRegion) -> Result<f64> {
        self.replay_count(&scene.image_id, region)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tiler::{tile_normal, tile_zoom_in};
    use crate::types::{Point, Scale};

    fn th() -> LabelThresholds {
        LabelThresholds::new(100).unwrap()
    }

    #[test]
    fn oracle_classify_cases() {
        let s = ScenePack::new(
            "s",
            896,
            448,
            (0..60).map(|i| Point(i as f64, 5.0)).collect(),
        )
        .unwrap();
        let empty = PatchRegion::new(448, 0, 448, 448, Scale::Half);
        assert_eq!(oracle_classify(&s, &th(), &empty), CrowdClass::Nc);
        // 60 = 3 * cut_mid(20)
        let r = PatchRegion::new(0, 0, 448, 448, Scale::Half);
        assert_eq!(oracle_classify(&s, &th(), &r), CrowdClass::Hc);
        assert_eq!(
            oracle_classify(&s, &th(), &r.at_scale(Scale::One)),
            oracle_classify(&s, &th(), &r)
        );
    }

    #[test]
    fn accumulate_cases() {
        assert_eq!(accumulate(&[]), PatchClassCounts::default());
        use CrowdClass::*;
        let pcc = accumulate(&[Nc, Nc, Hc]);
        assert_eq!(pcc, PatchClassCounts::new(2, 0, 0, 1));
        assert_eq!(accumulate(&[Hc, Nc, Nc]), pcc);
    }

    #[test]
    fn oracle_count_cases() {
        let pts: Vec<Point> = (0..7)
            .map(|i| Point(10.0 + i as f64 * 30.0, 50.0 + i as f64 * 20.0))
            .collect();
        let s = ScenePack::new("s", 224, 224, pts.clone()).unwrap();
        let parent = tile_normal(&s).patches[0];
        assert_eq!(oracle_count(&s, &parent, None), 7.0);

        let kids = tile_zoom_in(&s, &[(parent, CrowdClass::Lc)]).unwrap();
        let sum: f64 = kids.patches.iter().map(|r| oracle_count(&s, r, None)).sum();
        assert_eq!(sum, 7.0);

        let noise = NoiseModel::new(0.1, 42).unwrap();
        let a = oracle_count(&s, &parent, Some(&noise));
        let b = oracle_count(&s, &parent, Some(&noise));
        assert_eq!(a.to_bits(), b.to_bits());
        assert_ne!(a, 7.0);
        assert!(a >= 0.0);
        let other = NoiseModel::new(0.1, 43).unwrap();
        assert_ne!(oracle_count(&s, &parent, Some(&other)), a);
    }

    #[test]
    fn noise_rejects_negative_sigma() {
        assert!(NoiseModel::new(-0.1, 0).is_err());
    }

    #[test]
    fn replay_lookup() {
        let text = "{\"key\": \"img:0,0,224,224@1\", \"class\": \"hc\"}\n\n{\"key\": \"img:0,0,224,224@1\", \"count\": 12.5}\n";
        let t = ReplayTable::from_jsonl(text).unwrap();
        let r = PatchRegion::new(0, 0, 224, 224, Scale::One);
        assert_eq!(t.replay_classify("img", &r).unwrap(), CrowdClass::Hc);
        assert_eq!(t.replay_count("img", &r).unwrap(), 12.5);
        match t.replay_classify("img", &r.at_scale(Scale::Half)) {
            Err(Error::ReplayMiss(k)) => assert_eq!(k, "img:0,0,224,224@0.5"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(ReplayTable::from_jsonl(&t.to_jsonl().unwrap()).unwrap(), t);
    }

    #[test]
    fn replay_rejects_bad_lines() {
        let line = |s: &str| match ReplayTable::from_jsonl(s) {
            Err(Error::ReplayParse { line, .. }) => line,
            other => panic!("unexpected {other:?}"),
        };
        assert_eq!(line("{\"key\": \"nope\", \"class\": \"hc\"}"), 1);
        assert_eq!(line("\n{\"key\": \"i:0,0,1,1@1\", \"count\": -1}"), 2);
        assert_eq!(line("{\"key\": \"i:0,0,1,1@1\"}"), 1);
        assert_eq!(line("{\"key\": \"i:0,0,1,1@1\", \"class\": \"xx\"}"), 1);
        assert_eq!(
            line("{\"key\": \"i:0,0,1,1@1\", \"class\": \"hc\"}\n{\"key\": \"i:0,0,1,1@1\", \"class\": \"lc\"}"),
            2
        );
    }
}
