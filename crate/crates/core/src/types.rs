//! Shared domain vocabulary: scenes, patches, crowd classes, class tallies
//! and route labels.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A head annotation in pixel coordinates of the original image.
///
/// Serialized as a two-element array `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point(pub f64, pub f64);

impl Point {
    #[inline]
    pub fn x(&self) -> f64 {
        self.0
    }

    #[inline]
    pub fn y(&self) -> f64 {
        self.1
    }
}

/// One annotated image: identity, pixel size and ground-truth head points.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenePack {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub points: Vec<Point>,
    pub raster_path: Option<PathBuf>,
}

impl ScenePack {
    /// Builds a scene, rejecting empty ids, zero dimensions and points outside
    /// `[0, width) x [0, height)`.
    pub fn new(
        image_id: impl Into<String>,
        width: u32,
        height: u32,
        points: Vec<Point>,
    ) -> Result<Self> {
        let scene = ScenePack {
            image_id: image_id.into(),
            width,
            height,
            points,
            raster_path: None,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn with_raster(mut self, path: impl Into<PathBuf>) -> Self {
        self.raster_path = Some(path.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| Error::InvalidScene {
            image_id: self.image_id.clone(),
            reason,
        };
        if self.image_id.is_empty() {
            return Err(invalid("image_id is empty".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(invalid(format!(
                "dimensions must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        let (w, h) = (f64::from(self.width), f64::from(self.height));
        for (i, p) in self.points.iter().enumerate() {
            let inside = p.x() >= 0.0 && p.x() < w && p.y() >= 0.0 && p.y() < h;
            if !inside {
                return Err(invalid(format!(
                    "point #{i} ({}, {}) outside [0,{w}) x [0,{h})",
                    p.x(),
                    p.y()
                )));
            }
        }
        Ok(())
    }

    /// Ground-truth head count.
    pub fn count(&self) -> usize {
        self.points.len()
    }
}

/// Rescale factor applied to a patch before it is handed to a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scale {
    Half,
    One,
    Two,
}

impl Scale {
    /// Edge length after applying the scale to `edge`.
    pub fn apply(self, edge: u32) -> u32 {
        match self {
            Scale::Half => edge / 2,
            Scale::One => edge,
            Scale::Two => edge * 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scale::Half => "0.5",
            Scale::One => "1",
            Scale::Two => "2",
        }
    }
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "0.5" | "1/2" => Ok(Scale::Half),
            "1" => Ok(Scale::One),
            "2" => Ok(Scale::Two),
            other => Err(Error::UnknownLabel(other.to_string())),
        }
    }
}

/// Edge length every model-facing patch has after rescaling.
pub const MODEL_PATCH: u32 = 224;

/// Axis-aligned rectangle in original-image coordinates plus a delivery
/// scale. Point membership is half-open on both axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PatchRegion {
    pub x0: u32,
    pub y0: u32,
    pub w: u32,
    pub h: u32,
    pub scale: Scale,
}

impl PatchRegion {
    pub fn new(x0: u32, y0: u32, w: u32, h: u32, scale: Scale) -> Self {
        PatchRegion {
            x0,
            y0,
            w,
            h,
            scale,
        }
    }

    #[inline]
    pub fn contains(&self, p: &Point) -> bool {
        let (x0, y0) = (f64::from(self.x0), f64::from(self.y0));
        p.x() >= x0
            && p.x() < x0 + f64::from(self.w)
            && p.y() >= y0
            && p.y() < y0 + f64::from(self.h)
    }

    /// `(w, h)` after applying the scale.
    pub fn delivered_size(&self) -> (u32, u32) {
        (self.scale.apply(self.w), self.scale.apply(self.h))
    }

    /// Same rectangle at a different delivery scale.
    pub fn at_scale(self, scale: Scale) -> Self {
        PatchRegion { scale, ..self }
    }

    /// Stable key `imageid:x0,y0,w,h@scale` used by replay files and exports.
    pub fn key(&self, image_id: &str) -> String {
        format!(
            "{image_id}:{},{},{},{}@{}",
            self.x0,
            self.y0,
            self.w,
            self.h,
            self.scale.as_str()
        )
    }

    /// Inverse of [`PatchRegion::key`]. The image id may itself contain `:`.
    pub fn parse_key(key: &str) -> Result<(String, PatchRegion)> {
        let bad = || Error::BadPatchKey(key.to_string());
        let (image_id, rest) = key.rsplit_once(':').ok_or_else(bad)?;
        if image_id.is_empty() {
            return Err(bad());
        }
        let (rect, scale) = rest.split_once('@').ok_or_else(bad)?;
        let scale: Scale = scale.parse().map_err(|_| bad())?;
        let nums: Vec<u32> = rect
            .split(',')
            .map(|s| s.parse::<u32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?;
        match nums[..] {
            [x0, y0, w, h] if w > 0 && h > 0 => {
                Ok((image_id.to_string(), PatchRegion::new(x0, y0, w, h, scale)))
            }
            _ => Err(bad()),
        }
    }
}

/// Crowd density class of a single patch. Declaration order is the tie-break
/// order `NC < LC < MC < HC`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrowdClass {
    Nc,
    Lc,
    Mc,
    Hc,
}

impl CrowdClass {
    pub const ALL: [CrowdClass; 4] = [
        CrowdClass::Nc,
        CrowdClass::Lc,
        CrowdClass::Mc,
        CrowdClass::Hc,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CrowdClass::Nc => "nc",
            CrowdClass::Lc => "lc",
            CrowdClass::Mc => "mc",
            CrowdClass::Hc => "hc",
        }
    }
}

impl fmt::Display for CrowdClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CrowdClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nc" => Ok(CrowdClass::Nc),
            "lc" => Ok(CrowdClass::Lc),
            "mc" => Ok(CrowdClass::Mc),
            "hc" => Ok(CrowdClass::Hc),
            _ => Err(Error::UnknownLabel(s.to_string())),
        }
    }
}

/// Per-class patch tallies of one image.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatchClassCounts {
    pub p_nc: u64,
    pub p_lc: u64,
    pub p_mc: u64,
    pub p_hc: u64,
}

impl PatchClassCounts {
    pub fn new(p_nc: u64, p_lc: u64, p_mc: u64, p_hc: u64) -> Self {
        PatchClassCounts {
            p_nc,
            p_lc,
            p_mc,
            p_hc,
        }
    }

    pub fn total(&self) -> u64 {
        self.p_nc + self.p_lc + self.p_mc + self.p_hc
    }

    pub fn get(&self, class: CrowdClass) -> u64 {
        match class {
            CrowdClass::Nc => self.p_nc,
            CrowdClass::Lc => self.p_lc,
            CrowdClass::Mc => self.p_mc,
            CrowdClass::Hc => self.p_hc,
        }
    }

    pub fn increment(&mut self, class: CrowdClass) {
        match class {
            CrowdClass::Nc => self.p_nc += 1,
            CrowdClass::Lc => self.p_lc += 1,
            CrowdClass::Mc => self.p_mc += 1,
            CrowdClass::Hc => self.p_hc += 1,
        }
    }

    pub fn as_array(&self) -> [u64; 4] {
        [self.p_nc, self.p_lc, self.p_mc, self.p_hc]
    }
}

/// Decision module output: which patch maker handles the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RouteLabel {
    #[serde(rename = "zin")]
    ZoomIn,
    #[serde(rename = "normal")]
    Normal,
    #[serde(rename = "zout")]
    ZoomOut,
}

impl RouteLabel {
    /// Tie-break order used by votes and leaf majorities.
    pub const TIE_ORDER: [RouteLabel; 3] =
        [RouteLabel::Normal, RouteLabel::ZoomOut, RouteLabel::ZoomIn];

    /// Position in [`RouteLabel::TIE_ORDER`]; also the histogram slot.
    pub fn index(self) -> usize {
        match self {
            RouteLabel::Normal => 0,
            RouteLabel::ZoomOut => 1,
            RouteLabel::ZoomIn => 2,
        }
    }

    pub fn from_index(i: usize) -> RouteLabel {
        Self::TIE_ORDER[i]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RouteLabel::ZoomIn => "zin",
            RouteLabel::Normal => "normal",
            RouteLabel::ZoomOut => "zout",
        }
    }
}

impl fmt::Display for RouteLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RouteLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "zin" | "zoomin" | "zoom-in" => Ok(RouteLabel::ZoomIn),
            "normal" => Ok(RouteLabel::Normal),
            "zout" | "zoomout" | "zoom-out" => Ok(RouteLabel::ZoomOut),
            _ => Err(Error::UnknownLabel(s.to_string())),
        }
    }
}

/// Class shares in percent, ordered `(nc, lc, mc, hc)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; 4]);

impl FeatureVector {
    pub const LEN: usize = 4;

    pub fn f_nc(&self) -> f64 {
        self.0[0]
    }
    pub fn f_lc(&self) -> f64 {
        self.0[1]
    }
    pub fn f_mc(&self) -> f64 {
        self.0[2]
    }
    pub fn f_hc(&self) -> f64 {
        self.0[3]
    }

    #[inline]
    pub fn get(&self, feature: usize) -> f64 {
        self.0[feature]
    }
}

/// Converts tallies to percentages so images of different resolution are
/// comparable.
pub fn pcc_to_features(pcc: &PatchClassCounts) -> Result<FeatureVector> {
    let total = pcc.total();
    if total == 0 {
        return Err(Error::EmptyImage);
    }
    let total = total as f64;
    Ok(FeatureVector(
        pcc.as_array().map(|c| 100.0 * c as f64 / total),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn features_examples() {
        let f = pcc_to_features(&PatchClassCounts::new(1, 1, 1, 1)).unwrap();
        assert_eq!(f.0, [25.0; 4]);
        let f = pcc_to_features(&PatchClassCounts::new(0, 0, 0, 4)).unwrap();
        assert_eq!(f.0, [0.0, 0.0, 0.0, 100.0]);
        let f = pcc_to_features(&PatchClassCounts::new(2, 1, 0, 1)).unwrap();
        assert_eq!(f.0, [50.0, 25.0, 0.0, 25.0]);
    }

    #[test]
    fn features_reject_empty() {
        assert!(matches!(
            pcc_to_features(&PatchClassCounts::default()),
            Err(Error::EmptyImage)
        ));
    }

    #[test]
    fn scene_validation() {
        assert!(ScenePack::new("a", 10, 10, vec![Point(9.99, 0.0)]).is_ok());
        assert!(ScenePack::new("a", 10, 10, vec![Point(10.0, 0.0)]).is_err());
        assert!(ScenePack::new("a", 10, 10, vec![Point(-0.1, 0.0)]).is_err());
        assert!(ScenePack::new("", 10, 10, vec![]).is_err());
        assert!(ScenePack::new("a", 0, 10, vec![]).is_err());
    }

    #[test]
    fn region_membership_is_half_open() {
        let r = PatchRegion::new(0, 0, 224, 224, Scale::One);
        assert!(r.contains(&Point(0.0, 0.0)));
        assert!(r.contains(&Point(223.999, 100.0)));
        assert!(!r.contains(&Point(224.0, 100.0)));
        assert!(!r.contains(&Point(10.0, 224.0)));
    }

    #[test]
    fn patch_key_format() {
        let r = PatchRegion::new(448, 0, 448, 448, Scale::Half);
        assert_eq!(r.key("img_1"), "img_1:448,0,448,448@0.5");
        let (id, back) = PatchRegion::parse_key("ns:img:0,112,112,112@2").unwrap();
        assert_eq!(id, "ns:img");
        assert_eq!(back, PatchRegion::new(0, 112, 112, 112, Scale::Two));
        assert!(PatchRegion::parse_key("img:0,0,0,1@1").is_err());
        assert!(PatchRegion::parse_key("img:0,0,1@1").is_err());
        assert!(PatchRegion::parse_key("img:0,0,1,1@3").is_err());
        assert!(PatchRegion::parse_key("0,0,1,1@1").is_err());
    }

    #[test]
    fn route_tie_order() {
        for (i, r) in RouteLabel::TIE_ORDER.iter().enumerate() {
            assert_eq!(r.index(), i);
            assert_eq!(RouteLabel::from_index(i), *r);
        }
        assert_eq!(
            serde_json::to_string(&RouteLabel::ZoomIn).unwrap(),
            "\"zin\""
        );
        assert_eq!("zout".parse::<RouteLabel>().unwrap(), RouteLabel::ZoomOut);
    }

    proptest! {
        #[test]
        fn features_sum_to_100(nc in 0u64..500, lc in 0u64..500, mc in 0u64..500, hc in 0u64..500) {
            prop_assume!(nc + lc + mc + hc > 0);
            let f = pcc_to_features(&PatchClassCounts::new(nc, lc, mc, hc)).unwrap();
            let sum: f64 = f.0.iter().sum();
            prop_assert!((sum - 100.0).abs() <= 1e-9);
            prop_assert!(f.0.iter().all(|&v| (0.0..=100.0).contains(&v)));
        }

        #[test]
        fn features_scale_invariant(nc in 0u64..200, lc in 0u64..200, mc in 0u64..200, hc in 0u64..200, k in 1u64..50) {
            prop_assume!(nc + lc + mc + hc > 0);
            let a = pcc_to_features(&PatchClassCounts::new(nc, lc, mc, hc)).unwrap();
            let b = pcc_to_features(&PatchClassCounts::new(k * nc, k * lc, k * mc, k * hc)).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
