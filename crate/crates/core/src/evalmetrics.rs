//! Count-error metrics and the evaluation / ablation harness.

use serde::{Deserialize, Serialize};

use crate::backends::{Classifier, Regressor};
use crate::error::{Error, Result};
use crate::pipeline::{count_all, route_stats, CountResult, DecisionEngine, RouteStats};
use crate::rse::Rule;
use crate::types::{RouteLabel, ScenePack};

fn check_pair(gt: &[f64], pred: &[f64]) -> Result<()> {
    if gt.is_empty() {
        return Err(Error::MetricInput("empty input".into()));
    }
    if gt.len() != pred.len() {
        return Err(Error::MetricInput(format!(
            "length mismatch: {} ground-truth vs {} predicted",
            gt.len(),
            pred.len()
        )));
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae(gt: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair(gt, pred)?;
    Ok(gt.iter().zip(pred).map(|(y, p)| (y - p).abs()).sum::<f64>() / gt.len() as f64)
}

/// Mean absolute error normalized by each ground truth. Zero ground truth is
/// an error, not skipped.
pub fn mnae(gt: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair(gt, pred)?;
    if gt.contains(&0.0) {
        return Err(Error::ZeroGroundTruth);
    }
    Ok(gt
        .iter()
        .zip(pred)
        .map(|(y, p)| (y - p).abs() / y)
        .sum::<f64>()
        / gt.len() as f64)
}

/// Mean squared residual; the regressor training loss.
pub fn mse_loss(gt: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair(gt, pred)?;
    Ok(gt
        .iter()
        .zip(pred)
        .map(|(y, p)| (y - p).powi(2))
        .sum::<f64>()
        / gt.len() as f64)
}

pub fn rmse(gt: &[f64], pred: &[f64]) -> Result<f64> {
    Ok(mse_loss(gt, pred)?.sqrt())
}

/// Fraction of images whose predicted route matches the reference route.
pub fn dm_accuracy(pred: &[RouteLabel], gt: &[RouteLabel]) -> Result<f64> {
    if gt.is_empty() {
        return Err(Error::MetricInput("empty input".into()));
    }
    if pred.len() != gt.len() {
        return Err(Error::MetricInput(format!(
            "length mismatch: {} predicted vs {} reference routes",
            pred.len(),
            gt.len()
        )));
    }
    let hits = pred.iter().zip(gt).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / gt.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageResidual {
    pub image_id: String,
    pub ground_truth: u64,
    pub estimate: u64,
    pub residual: i64,
    pub route: RouteLabel,
    pub fired_rule: Option<Rule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub engine: String,
    pub ablation: String,
    pub n_images: usize,
    pub mae: f64,
    pub mnae: f64,
    pub rmse: f64,
    pub route_stats: RouteStats,
    pub residuals: Vec<ImageResidual>,
}

impl EvalReport {
    pub fn from_results(results: &[CountResult], engine: &DecisionEngine) -> Result<Self> {
        let gt: Vec<f64> = results.iter().map(|r| r.ground_truth as f64).collect();
        let pred: Vec<f64> = results.iter().map(|r| r.estimate as f64).collect();
        let ablation = match engine {
            DecisionEngine::RuleSet(mask) => mask.describe(),
            _ => "none".into(),
        };
        Ok(EvalReport {
            engine: engine.describe(),
            ablation,
            n_images: results.len(),
            mae: mae(&gt, &pred)?,
            mnae: mnae(&gt, &pred)?,
            rmse: rmse(&gt, &pred)?,
            route_stats: route_stats(results.iter().map(|r| &r.route)),
            residuals: results
                .iter()
                .map(|r| ImageResidual {
                    image_id: r.image_id.clone(),
                    ground_truth: r.ground_truth,
                    estimate: r.estimate,
                    residual: r.estimate as i64 - r.ground_truth as i64,
                    route: r.route,
                    fired_rule: r.fired_rule,
                })
                .collect(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Flat per-image table: `image_id,gt,estimate,route,fired_rule`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["image_id", "gt", "estimate", "route", "fired_rule"])?;
        for r in &self.residuals {
            w.write_record([
                r.image_id.clone(),
                r.ground_truth.to_string(),
                r.estimate.to_string(),
                r.route.to_string(),
                r.fired_rule.map(|f| f.to_string()).unwrap_or_default(),
            ])?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::io("<csv buffer>", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Runs the pipeline over every scene and scores it. Rule and block
/// ablations travel inside a rule-set engine's mask.
pub fn run_eval(
    scenes: &[ScenePack],
    classifier: &dyn Classifier,
    regressor: &dyn Regressor,
    engine: &DecisionEngine,
    workers: Option<usize>,
) -> Result<(EvalReport, Vec<CountResult>)> {
    if scenes.is_empty() {
        return Err(Error::MetricInput("no scenes to evaluate".into()));
    }
    if let Some(s) = scenes.iter().find(|s| s.points.is_empty()) {
        return Err(Error::InvalidScene {
            image_id: s.image_id.clone(),
            reason: "zero ground-truth count; MNAE undefined".into(),
        });
    }
    let results = count_all(scenes, classifier, regressor, engine, workers)?;
    let report = EvalReport::from_results(&results, engine)?;
    Ok((report, results))
}
