//! The three patch layouts: a 224 grid delivered as-is, 112 quarters of
//! crowd patches delivered at 2x, and a 448 grid delivered at 1/2x.
//!
//! Every layout is aligned to the image origin and enumerated row-major so
//! replay files can address patches by key or index. Canvases are padded up
//! to the next multiple of the tile edge; padding never carries annotations.

use crate::error::{Error, Result};
use crate::types::{CrowdClass, PatchRegion, RouteLabel, Scale, ScenePack};

pub const NORMAL_TILE: u32 = 224;
pub const ZOOM_IN_TILE: u32 = 112;
pub const ZOOM_OUT_TILE: u32 = 448;

#[derive(Debug, Clone, PartialEq)]
pub struct TilePlan {
    pub route: RouteLabel,
    pub padded_width: u32,
    pub padded_height: u32,
    pub patches: Vec<PatchRegion>,
}

impl TilePlan {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }
}

/// Rounds each dimension up to the next multiple of `tile`.
pub fn pad_dims(width: u32, height: u32, tile: u32) -> (u32, u32) {
    (width.div_ceil(tile) * tile, height.div_ceil(tile) * tile)
}

fn grid(width: u32, height: u32, tile: u32, scale: Scale) -> (u32, u32, Vec<PatchRegion>) {
    let (pw, ph) = pad_dims(width, height, tile);
    let patches = (0..ph / tile)
        .flat_map(|row| {
            (0..pw / tile)
                .map(move |col| PatchRegion::new(col * tile, row * tile, tile, tile, scale))
        })
        .collect();
    (pw, ph, patches)
}

pub fn tile_normal(scene: &ScenePack) -> TilePlan {
    let (padded_width, padded_height, patches) =
        grid(scene.width, scene.height, NORMAL_TILE, Scale::One);
    TilePlan {
        route: RouteLabel::Normal,
        padded_width,
        padded_height,
        patches,
    }
}

/// Splits every non-NC parent of the normal grid into four 112 quarters at
/// scale 2. `parent_labels` must be the normal grid of `scene`, in order.
pub fn tile_zoom_in(
    scene: &ScenePack,
    parent_labels: &[(PatchRegion, CrowdClass)],
) -> Result<TilePlan> {
    let normal = tile_normal(scene);
    if parent_labels.len() != normal.patches.len() {
        return Err(Error::Consistency(format!(
            "`{}` has {} normal patches but {} parent labels were given",
            scene.image_id,
            normal.patches.len(),
            parent_labels.len()
        )));
    }
    let mut patches = Vec::new();
    for (expected, (parent, class)) in normal.patches.iter().zip(parent_labels) {
        if expected != parent {
            return Err(Error::Consistency(format!(
                "parent {} does not match normal grid patch {}",
                parent.key(&scene.image_id),
                expected.key(&scene.image_id)
            )));
        }
        if *class == CrowdClass::Nc {
            continue;
        }
        for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            patches.push(PatchRegion::new(
                parent.x0 + dx * ZOOM_IN_TILE,
                parent.y0 + dy * ZOOM_IN_TILE,
                ZOOM_IN_TILE,
                ZOOM_IN_TILE,
                Scale::Two,
            ));
        }
    }
    Ok(TilePlan {
        route: RouteLabel::ZoomIn,
        padded_width: normal.padded_width,
        padded_height: normal.padded_height,
        patches,
    })
}

/// 448 grid at scale 1/2. NC elimination is left to the caller, which
/// re-classifies each patch.
pub fn tile_zoom_out(scene: &ScenePack) -> TilePlan {
    let (padded_width, padded_height, patches) =
        grid(scene.width, scene.height, ZOOM_OUT_TILE, Scale::Half);
    TilePlan {
        route: RouteLabel::ZoomOut,
        padded_width,
        padded_height,
        patches,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Point;

    fn scene(w: u32, h: u32) -> ScenePack {
        ScenePack::new("s", w, h, vec![]).unwrap()
    }

    #[test]
    fn pad_dims_examples() {
        assert_eq!(pad_dims(448, 448, 224), (448, 448));
        assert_eq!(pad_dims(500, 300, 224), (672, 448));
        assert_eq!(pad_dims(1, 1, 448), (448, 448));
    }

    #[test]
    fn normal_examples() {
        assert_eq!(tile_normal(&scene(448, 448)).len(), 4);
        let p = tile_normal(&scene(500, 300));
        assert_eq!((p.padded_width, p.padded_height, p.len()), (672, 448, 6));
        assert_eq!(tile_normal(&scene(224, 224)).len(), 1);
        // row-major
        assert_eq!(p.patches[1], PatchRegion::new(224, 0, 224, 224, Scale::One));
        assert_eq!(p.patches[3], PatchRegion::new(0, 224, 224, 224, Scale::One));
    }

    #[test]
    fn zoom_out_examples() {
        let p = tile_zoom_out(&scene(448, 448));
        assert_eq!(
            p.patches,
            vec![PatchRegion::new(0, 0, 448, 448, Scale::Half)]
        );
        assert_eq!(tile_zoom_out(&scene(896, 448)).len(), 2);
        let p = tile_zoom_out(&scene(500, 300));
        assert_eq!((p.padded_width, p.padded_height, p.len()), (896, 448, 2));
    }

    #[test]
    fn zoom_in_examples() {
        let s = scene(224, 224);
        let parent = tile_normal(&s).patches[0];
        let p = tile_zoom_in(&s, &[(parent, CrowdClass::Hc)]).unwrap();
        assert_eq!(p.len(), 4);
        assert!(p
            .patches
            .iter()
            .all(|c| c.w == 112 && c.h == 112 && c.scale == Scale::Two));

        let p = tile_zoom_in(&s, &[(parent, CrowdClass::Nc)]).unwrap();
        assert!(p.is_empty());

        let s = scene(448, 224);
        let grid = tile_normal(&s).patches;
        let p = tile_zoom_in(&s, &[(grid[0], CrowdClass::Nc), (grid[1], CrowdClass::Mc)]).unwrap();
        assert_eq!(
            p.patches,
            vec![
                PatchRegion::new(224, 0, 112, 112, Scale::Two),
                PatchRegion::new(336, 0, 112, 112, Scale::Two),
                PatchRegion::new(224, 112, 112, 112, Scale::Two),
                PatchRegion::new(336, 112, 112, 112, Scale::Two),
            ]
        );
    }

    #[test]
    fn zoom_in_rejects_grid_mismatch() {
        let s = scene(448, 224);
        let grid = tile_normal(&s).patches;
        assert!(matches!(
            tile_zoom_in(&s, &[(grid[0], CrowdClass::Hc)]),
            Err(Error::Consistency(_))
        ));
        assert!(matches!(
            tile_zoom_in(&s, &[(grid[1], CrowdClass::Hc), (grid[0], CrowdClass::Hc)]),
            Err(Error::Consistency(_))
        ));
    }

    #[test]
    fn delivered_size_is_model_patch() {
        let s = ScenePack::new("s", 700, 500, vec![Point(1.0, 1.0)]).unwrap();
        let normal = tile_normal(&s);
        let labels: Vec<_> = normal
            .patches
            .iter()
            .map(|p| (*p, CrowdClass::Lc))
            .collect();
        for plan in [
            normal.clone(),
            tile_zoom_in(&s, &labels).unwrap(),
            tile_zoom_out(&s),
        ] {
            for p in &plan.patches {
                assert_eq!(p.delivered_size(), (224, 224));
            }
        }
    }
}
