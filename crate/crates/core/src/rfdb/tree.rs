use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{FeatureVector, RouteLabel};

use super::{ForestParams, TrainRow};

/// Per-class sample counts in [`RouteLabel::TIE_ORDER`] order.
pub type Histogram = [u64; 3];

/// Gini impurity `1 - sum(F_i^2)` of a class histogram.
pub fn gini(histogram: &Histogram) -> Result<f64> {
    let n: u64 = histogram.iter().sum();
    if n == 0 {
        return Err(Error::EmptyHistogram);
    }
    let n = n as f64;
    Ok(1.0
        - histogram
            .iter()
            .map(|&c| (c as f64 / n).powi(2))
            .sum::<f64>())
}

/// Majority label; ties go to the earliest label in tie order.
pub(crate) fn majority(histogram: &Histogram) -> RouteLabel {
    let mut best = 0;
    for i in 1..histogram.len() {
        if histogram[i] > histogram[best] {
            best = i;
        }
    }
    RouteLabel::from_index(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    /// Samples with `feature <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        histogram: Histogram,
    },
    Leaf {
        label: RouteLabel,
        histogram: Histogram,
    },
}

impl Node {
    pub fn histogram(&self) -> &Histogram {
        match self {
            Node::Split { histogram, .. } | Node::Leaf { histogram, .. } => histogram,
        }
    }
}

/// A binary tree stored as a flat node array; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, features: &FeatureVector) -> RouteLabel {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { label, .. } => return *label,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    i = if features.get(*feature) <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    pub fn n_splits(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Split { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }

    /// Structural checks for trees read from disk.
    pub(crate) fn validate(&self) -> Result<()> {
        let bad = |m: String| Error::InvalidParam(format!("malformed tree: {m}"));
        if self.nodes.is_empty() {
            return Err(bad("no nodes".into()));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.histogram().iter().sum::<u64>() == 0 {
                return Err(bad(format!("node {i} has an empty histogram")));
            }
            if let Node::Split {
                feature,
                threshold,
                left,
                right,
                ..
            } = n
            {
                if *feature >= FeatureVector::LEN || !threshold.is_finite() {
                    return Err(bad(format!("node {i} has an invalid split")));
                }
                // children always follow their parent, which also rules out cycles
                if *left <= i
                    || *right <= i
                    || *left >= self.nodes.len()
                    || *right >= self.nodes.len()
                {
                    return Err(bad(format!("node {i} has out-of-order children")));
                }
            }
        }
        Ok(())
    }
}

fn histogram_of(rows: &[TrainRow], idx: &[usize]) -> Histogram {
    let mut h = [0u64; 3];
    for &i in idx {
        h[rows[i].label] += 1;
    }
    h
}

fn sum_sq(h: &Histogram) -> u128 {
    h.iter().map(|&c| u128::from(c) * u128::from(c)).sum()
}

/// A candidate split scored by `sum(cL^2)/nL + sum(cR^2)/nR`, held as an
/// exact fraction. Larger is better: it equals `n * (1 - weighted child gini)`.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    num: u128,
    den: u128,
}

impl Candidate {
    fn beats(&self, other: &Candidate) -> bool {
        self.num * other.den > other.num * self.den
    }
}

fn best_split_on(
    rows: &[TrainRow],
    idx: &[usize],
    feature: usize,
    parent: &Histogram,
) -> Option<Candidate> {
    let mut order: Vec<usize> = idx.to_vec();
    order.sort_by(|&a, &b| {
        rows[a].features[feature]
            .total_cmp(&rows[b].features[feature])
            .then(a.cmp(&b))
    });
    let n = order.len() as u64;
    let mut left = [0u64; 3];
    let mut best: Option<Candidate> = None;
    for w in 0..order.len() - 1 {
        left[rows[order[w]].label] += 1;
        let a = rows[order[w]].features[feature];
        let b = rows[order[w + 1]].features[feature];
        if a == b {
            continue;
        }
        let n_left = w as u64 + 1;
        let n_right = n - n_left;
        let right = [
            parent[0] - left[0],
            parent[1] - left[1],
            parent[2] - left[2],
        ];
        let cand = Candidate {
            feature,
            threshold: {
                let mid = a + (b - a) / 2.0;
                if mid < b {
                    mid
                } else {
                    a
                }
            },
            num: sum_sq(&left) * u128::from(n_right) + sum_sq(&right) * u128::from(n_left),
            den: u128::from(n_left) * u128::from(n_right),
        };
        if best.as_ref().is_none_or(|b| cand.beats(b)) {
            best = Some(cand);
        }
    }
    best
}

/// Grows one CART tree. `rows` carry label indices in tie order.
pub(crate) fn grow(rows: &[TrainRow], params: &ForestParams, rng: &mut ChaCha8Rng) -> Tree {
    let mut nodes = vec![Node::Leaf {
        label: RouteLabel::Normal,
        histogram: [0; 3],
    }];
    let mut stack: Vec<(usize, Vec<usize>)> = vec![(0, (0..rows.len()).collect())];
    while let Some((at, idx)) = stack.pop() {
        let hist = histogram_of(rows, &idx);
        let pure = hist.iter().filter(|&&c| c > 0).count() <= 1;
        let split = if pure || idx.len() < params.min_samples {
            None
        } else {
            choose_split(rows, &idx, &hist, params.features_per_split, rng)
        };
        let Some(split) = split else {
            nodes[at] = Node::Leaf {
                label: majority(&hist),
                histogram: hist,
            };
            continue;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| rows[i].features[split.feature] <= split.threshold);
        let left = nodes.len();
        let right = left + 1;
        let placeholder = Node::Leaf {
            label: RouteLabel::Normal,
            histogram: [0; 3],
        };
        nodes.push(placeholder.clone());
        nodes.push(placeholder);
        nodes[at] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
            histogram: hist,
        };
        stack.push((right, r));
        stack.push((left, l));
    }
    Tree { nodes }
}

/// Draws a random feature order and evaluates the first `k` features. If none
/// of them strictly lowers impurity, the remaining features are tried one at
/// a time in the drawn order.
fn choose_split(
    rows: &[TrainRow],
    idx: &[usize],
    hist: &Histogram,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Option<Candidate> {
    let mut features: Vec<usize> = (0..FeatureVector::LEN).collect();
    features.shuffle(rng);
    let n = idx.len() as u128;
    let parent_score = sum_sq(hist);
    let improves = |c: &Candidate| c.num * n > parent_score * c.den;

    let mut batch: Vec<usize> = features[..k].to_vec();
    let mut rest = features[k..].iter();
    loop {
        batch.sort_unstable();
        let mut best: Option<Candidate> = None;
        for &f in &batch {
            if let Some(c) = best_split_on(rows, idx, f, hist) {
                if improves(&c) && best.as_ref().is_none_or(|b| c.beats(b)) {
                    best = Some(c);
                }
            }
        }
        if best.is_some() {
            return best;
        }
        batch = vec![*rest.next()?];
    }
}

pub(crate) fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
