//! Input generators for the criterion benchmarks under `benches/`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zoomcount::labeler::{gen_rfdb_dataset, LabelThresholds, RfdbRow, RoutePolicy};
use zoomcount::{Point, ScenePack};

/// Scene with `n` points spread over a few dense blobs and a uniform floor.
pub fn scene(seed: u64, width: u32, height: u32, n: usize) -> ScenePack {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (f64::from(width), f64::from(height));
    let centers: Vec<(f64, f64)> = (0..4)
        .map(|_| (rng.random_range(0.0..w), rng.random_range(0.0..h)))
        .collect();
    let points = (0..n)
        .map(|i| {
            if i % 3 == 0 {
                Point(rng.random_range(0.0..w), rng.random_range(0.0..h))
            } else {
                let (cx, cy) = centers[i % centers.len()];
                let x = (cx + rng.random_range(-60.0..60.0)).clamp(0.0, w - 1e-6);
                let y = (cy + rng.random_range(-60.0..60.0)).clamp(0.0, h - 1e-6);
                Point(x, y)
            }
        })
        .collect();
    ScenePack::new(format!("b{seed}"), width, height, points).expect("points are inside the frame")
}

/// Route dataset of `n` rows labelled by the rule set.
pub fn rfdb_rows(n: usize, max_count: u64) -> Vec<RfdbRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    let scenes: Vec<ScenePack> = (0..n)
        .map(|i| {
            let w = rng.random_range(250..=1200);
            let h = rng.random_range(250..=1200);
            scene(i as u64, w, h, rng.random_range(1..=2500))
        })
        .collect();
    let th = LabelThresholds::new(max_count).expect("positive max count");
    gen_rfdb_dataset(&scenes, &th, &RoutePolicy::RseOracle).expect("scenes are non-empty")
}
