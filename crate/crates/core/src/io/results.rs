//! Prediction list JSON: `[{image_id, poses: [{parts: [[x, y, score] | null], score}]}]`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::ImagePoses;
use crate::parser::{PartDetection, PoseResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ImageEntry {
    image_id: u64,
    poses: Vec<PoseEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PoseEntry {
    parts: Vec<Option<[f64; 3]>>,
    score: f64,
}

pub fn results_to_json(images: &[ImagePoses]) -> Result<String> {
    let entries: Vec<ImageEntry> = images
        .iter()
        .map(|img| ImageEntry {
            image_id: img.image_id,
            poses: img
                .poses
                .iter()
                .map(|p| PoseEntry {
                    parts: p.parts.iter().map(|d| d.map(|d| [d.x, d.y, d.score])).collect(),
                    score: p.instance_score,
                })
                .collect(),
        })
        .collect();
    Ok(serde_json::to_string_pretty(&entries)?)
}

pub fn parse_results(text: &str, path: &Path) -> Result<Vec<ImagePoses>> {
    let entries: Vec<ImageEntry> = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Ok(entries
        .into_iter()
        .map(|e| ImagePoses {
            image_id: e.image_id,
            poses: e
                .poses
                .into_iter()
                .map(|p| PoseResult {
                    parts: p
                        .parts
                        .into_iter()
                        .map(|d| d.map(|[x, y, score]| PartDetection { x, y, score }))
                        .collect(),
                    instance_score: p.score,
                })
                .collect(),
        })
        .collect())
}

pub fn write_results(path: &Path, images: &[ImagePoses]) -> Result<()> {
    super::write_atomic(path, results_to_json(images)?.as_bytes())
}

pub fn read_results(path: &Path) -> Result<Vec<ImagePoses>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_results(&text, path)
}
