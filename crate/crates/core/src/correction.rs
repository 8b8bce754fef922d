//! Per-cell fusion of ground-truth labels with teacher predictions.
//!
//! Confidence maps take the pointwise max. PAF cells keep the ground-truth
//! vector only when its norm is strictly larger than the teacher's; ties go
//! to the teacher.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{norm, LabelSet, ScalarField, VectorField};

/// Which label families a correction touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionScope {
    MapsOnly,
    PafsOnly,
    #[default]
    Both,
}

impl CorrectionScope {
    fn maps(self) -> bool {
        matches!(self, CorrectionScope::MapsOnly | CorrectionScope::Both)
    }

    fn pafs(self) -> bool {
        matches!(self, CorrectionScope::PafsOnly | CorrectionScope::Both)
    }
}

impl std::str::FromStr for CorrectionScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "maps" | "maps_only" => Ok(CorrectionScope::MapsOnly),
            "pafs" | "pafs_only" => Ok(CorrectionScope::PafsOnly),
            "both" => Ok(CorrectionScope::Both),
            other => Err(Error::domain(format!(
                "unknown correction scope {other:?} (expected maps, pafs or both)"
            ))),
        }
    }
}

pub fn correct_confidence_maps(gt: &[ScalarField], teacher: &[ScalarField]) -> Result<Vec<ScalarField>> {
    if gt.len() != teacher.len() {
        return Err(Error::shape("confidence map count", gt.len(), teacher.len()));
    }
    gt.iter()
        .zip(teacher)
        .map(|(g, t)| {
            g.grid().ensure_same(t.grid(), "confidence map grid")?;
            let values = g
                .values()
                .iter()
                .zip(t.values())
                .map(|(&a, &b)| if b > a { b } else { a })
                .collect();
            ScalarField::new(*g.grid(), values)
        })
        .collect()
}

/// Ground-truth vector if strictly longer than the teacher's, else the teacher's.
#[inline]
pub fn select_vector(gt: [f32; 2], teacher: [f32; 2]) -> [f32; 2] {
    if norm(gt) > norm(teacher) {
        gt
    } else {
        teacher
    }
}

pub fn correct_pafs(gt: &[VectorField], teacher: &[VectorField]) -> Result<Vec<VectorField>> {
    if gt.len() != teacher.len() {
        return Err(Error::shape("paf count", gt.len(), teacher.len()));
    }
    gt.iter()
        .zip(teacher)
        .map(|(g, t)| {
            g.grid().ensure_same(t.grid(), "paf grid")?;
            let values = g
                .values()
                .iter()
                .zip(t.values())
                .map(|(&a, &b)| select_vector(a, b))
                .collect();
            VectorField::new(*g.grid(), values)
        })
        .collect()
}

/// Correct `gt` with `teacher` within `scope`; the ignore mask comes from `gt`.
///
/// Feeding a newer model's predictions back in as `teacher` chains rounds of
/// correction.
pub fn correct_labels(gt: &LabelSet, teacher: &LabelSet, scope: CorrectionScope) -> Result<LabelSet> {
    gt.ensure_compatible(teacher)?;
    let maps = if scope.maps() {
        correct_confidence_maps(&gt.maps, &teacher.maps)?
    } else {
        gt.maps.clone()
    };
    let pafs = if scope.pafs() {
        correct_pafs(&gt.pafs, &teacher.pafs)?
    } else {
        gt.pafs.clone()
    };
    LabelSet::new(maps, pafs, gt.mask.clone())
}

/// Bring raw network output into label range: scalars clamped to `[0, 1]`,
/// vectors longer than one rescaled to unit length, non-finite values zeroed.
pub fn sanitize_teacher_maps(values: &mut [f32]) {
    for v in values {
        *v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
    }
}

pub fn sanitize_teacher_vectors(values: &mut [[f32; 2]]) {
    for v in values {
        if !(v[0].is_finite() && v[1].is_finite()) {
            *v = [0.0, 0.0];
            continue;
        }
        let n = norm(*v);
        if n > 1.0 {
            let scaled = [(f64::from(v[0]) / n) as f32, (f64::from(v[1]) / n) as f32];
            *v = scaled;
        }
    }
}

/// Per-image summary of what a correction changed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrectionStats {
    /// Confidence-map cells (over all parts) whose value changed.
    pub map_cells_changed: usize,
    /// PAF cells (over all limbs) whose vector changed.
    pub paf_cells_changed: usize,
    /// Mean increase of the map value over changed map cells.
    pub mean_map_delta: f64,
    /// Mean of `‖corrected‖ − ‖gt‖` over changed PAF cells.
    pub mean_paf_norm_delta: f64,
}

pub fn correction_stats(gt: &LabelSet, corrected: &LabelSet) -> Result<CorrectionStats> {
    gt.ensure_compatible(corrected)?;
    let mut s = CorrectionStats::default();
    let mut map_delta = 0.0;
    for (g, c) in gt.maps.iter().zip(&corrected.maps) {
        for (&a, &b) in g.values().iter().zip(c.values()) {
            if a.to_bits() != b.to_bits() {
                s.map_cells_changed += 1;
                map_delta += f64::from(b) - f64::from(a);
            }
        }
    }
    let mut paf_delta = 0.0;
    for (g, c) in gt.pafs.iter().zip(&corrected.pafs) {
        for (&a, &b) in g.values().iter().zip(c.values()) {
            if a[0].to_bits() != b[0].to_bits() || a[1].to_bits() != b[1].to_bits() {
                s.paf_cells_changed += 1;
                paf_delta += norm(b) - norm(a);
            }
        }
    }
    if s.map_cells_changed > 0 {
        s.mean_map_delta = map_delta / s.map_cells_changed as f64;
    }
    if s.paf_cells_changed > 0 {
        s.mean_paf_norm_delta = paf_delta / s.paf_cells_changed as f64;
    }
    Ok(s)
}
