//! Seeded synthetic scenes shared by the integration suites.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zoomcount::{Point, ScenePack};

/// Dataset-wide patch maximum used with the synthetic scenes.
pub const SUITE_MAX_COUNT: u64 = 150;

fn clamp_in(v: f64, edge: u32) -> f64 {
    v.clamp(0.0, f64::from(edge) - 1e-6)
}

/// Point layouts: uniform, gaussian-ish blobs, a perspective band thick at
/// the bottom, points on tile seams, and a cluster hugging the far edges.
pub fn synth_points(rng: &mut ChaCha8Rng, w: u32, h: u32, n: usize, layout: u32) -> Vec<Point> {
    let (wf, hf) = (f64::from(w), f64::from(h));
    match layout {
        0 => (0..n)
            .map(|_| Point(rng.random_range(0.0..wf), rng.random_range(0.0..hf)))
            .collect(),
        1 => {
            let blobs: Vec<(f64, f64, f64)> = (0..rng.random_range(1..6))
                .map(|_| {
                    (
                        rng.random_range(0.0..wf),
                        rng.random_range(0.0..hf),
                        rng.random_range(5.0..120.0),
                    )
                })
                .collect();
            (0..n)
                .map(|_| {
                    let (cx, cy, r) = blobs[rng.random_range(0..blobs.len())];
                    // sum of three uniforms: cheap bell shape
                    let mut d = || (0..3).map(|_| rng.random_range(-1.0..1.0)).sum::<f64>() * r;
                    Point(clamp_in(cx + d(), w), clamp_in(cy + d(), h))
                })
                .collect()
        }
        2 => (0..n)
            .map(|_| {
                let y = hf * rng.random_range(0.0f64..1.0).sqrt();
                Point(rng.random_range(0.0..wf), clamp_in(y, h))
            })
            .collect(),
        3 => (0..n)
            .map(|_| {
                let mut seam = |edge: u32| {
                    let step = [112u32, 224, 448][rng.random_range(0..3)];
                    let k = rng.random_range(0..=edge / step);
                    clamp_in(f64::from(k * step), edge)
                };
                Point(seam(w), seam(h))
            })
            .collect(),
        _ => (0..n)
            .map(|_| {
                Point(
                    clamp_in(wf - rng.random_range(0.0..4.0), w),
                    clamp_in(hf - rng.random_range(0.0..40.0), h),
                )
            })
            .collect(),
    }
}

/// `n` scenes with edges in 250..=2000 and 0..=5000 points. The first two
/// scenes pin the count extremes.
pub fn synth_suite(n: usize, seed: u64) -> Vec<ScenePack> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let w = rng.random_range(250..=2000);
            let h = rng.random_range(250..=2000);
            let count = match i {
                0 => 0,
                1 => 5000,
                _ if rng.random_bool(0.05) => 0,
                _ => rng.random_range(0..=5000),
            };
            let layout = (i % 5) as u32;
            let points = synth_points(&mut rng, w, h, count, layout);
            ScenePack::new(format!("s{i:04}"), w, h, points).expect("synthetic scene is valid")
        })
        .collect()
}
