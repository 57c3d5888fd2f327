//! Scene manifest files and small file-writing helpers shared by the
//! exporters.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Point, ScenePack};

/// On-disk scene record. Dimensions are read as signed integers so that
/// negative values produce a scene error rather than a generic type error.
#[derive(Debug, Serialize, Deserialize)]
struct SceneRecord {
    image_id: String,
    width: i64,
    height: i64,
    points: Vec<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    raster: Option<String>,
}

/// Parses a manifest document. Relative raster paths are resolved against
/// `base_dir` when given.
pub fn parse_manifest(text: &str, base_dir: Option<&Path>) -> Result<Vec<ScenePack>> {
    let records: Vec<SceneRecord> = serde_json::from_str(text)?;
    records
        .into_iter()
        .map(|rec| {
            let dim = |v: i64, name: &str| -> Result<u32> {
                u32::try_from(v)
                    .ok()
                    .filter(|&d| d > 0)
                    .ok_or_else(|| Error::InvalidScene {
                        image_id: rec.image_id.clone(),
                        reason: format!("{name} must be a positive integer, got {v}"),
                    })
            };
            let width = dim(rec.width, "width")?;
            let height = dim(rec.height, "height")?;
            let mut scene = ScenePack::new(rec.image_id.clone(), width, height, rec.points)?;
            if let Some(r) = rec.raster {
                let p = PathBuf::from(r);
                scene.raster_path = Some(match base_dir {
                    Some(base) if p.is_relative() => base.join(p),
                    _ => p,
                });
            }
            Ok(scene)
        })
        .collect()
}

pub fn load_manifest(path: &Path) -> Result<Vec<ScenePack>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, path.parent())
}

pub fn manifest_to_string(scenes: &[ScenePack]) -> Result<String> {
    let records: Vec<SceneRecord> = scenes
        .iter()
        .map(|s| SceneRecord {
            image_id: s.image_id.clone(),
            width: i64::from(s.width),
            height: i64::from(s.height),
            points: s.points.clone(),
            raster: s
                .raster_path
                .as_ref()
                .map(|p| p.to_string_lossy().into_owned()),
        })
        .collect();
    Ok(serde_json::to_string_pretty(&records)?)
}

/// Writes `contents` to `path` through a temporary sibling file and a rename,
/// so readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| Error::io(&dir, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
