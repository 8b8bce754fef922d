//! Object keypoint similarity and COCO-style keypoint average precision.
//!
//! Matching and accumulation follow the reference COCO evaluator: per image
//! and OKS threshold, detections in descending score order claim the
//! unmatched ground truth with the highest OKS; ground truth outside the
//! area band (or without labeled keypoints) is ignored; precision is
//! interpolated at 101 recall points.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::annotation::PersonAnnotation;
use crate::error::{Error, Result};
use crate::parser::PoseResult;
use crate::skeleton::SkeletonSpec;

/// Scale factor applied to the keypoint bounding box when no area is annotated.
pub const BBOX_AREA_FACTOR: f64 = 0.53;

pub const N_THRESHOLDS: usize = 10;
const N_RECALL: usize = 101;

/// OKS thresholds 0.50, 0.55, …, 0.95.
pub fn oks_thresholds() -> [f64; N_THRESHOLDS] {
    let step = (0.95 - 0.5) / (N_THRESHOLDS - 1) as f64;
    let mut t = [0.0; N_THRESHOLDS];
    for (i, v) in t.iter_mut().enumerate() {
        *v = i as f64 * step + 0.5;
    }
    t[N_THRESHOLDS - 1] = 0.95;
    t
}

/// Recall points 0.00, 0.01, …, 1.00.
fn recall_thresholds() -> [f64; N_RECALL] {
    let mut r = [0.0; N_RECALL];
    for (i, v) in r.iter_mut().enumerate() {
        *v = i as f64 * 0.01;
    }
    r[N_RECALL - 1] = 1.0;
    r
}

/// Squared object scale `s²`: the annotated area, else `0.53 ×` the labeled
/// keypoint bounding-box area. `None` when neither is positive.
pub fn object_scale_sq(gt: &PersonAnnotation) -> Option<f64> {
    let s2 = match gt.area {
        Some(a) => a,
        None => {
            let [x0, y0, x1, y1] = gt.labeled_bbox()?;
            (x1 - x0) * (y1 - y0) * BBOX_AREA_FACTOR
        }
    };
    (s2.is_finite() && s2 > 0.0).then_some(s2)
}

/// Mean over labeled ground-truth parts of `exp(−d²/(2·s²·κ²))`; parts the
/// prediction lacks contribute zero.
pub fn compute_oks(pred: &PoseResult, gt: &PersonAnnotation, skeleton: &SkeletonSpec) -> Result<f64> {
    let labeled = gt.labeled_count();
    if labeled == 0 {
        return Err(Error::domain("ground truth has no labeled keypoints"));
    }
    let s2 = object_scale_sq(gt).ok_or_else(|| Error::domain("ground truth has no positive area"))?;
    Ok(oks_with_scale(pred, gt, skeleton.oks_kappas(), s2))
}

fn oks_with_scale(pred: &PoseResult, gt: &PersonAnnotation, kappas: &[f64], s2: f64) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, k) in kappas.iter().enumerate() {
        let Some(g) = gt.labeled(i) else { continue };
        n += 1;
        if let Some(Some(p)) = pred.parts.get(i) {
            let (dx, dy) = (p.x - g[0], p.y - g[1]);
            sum += (-(dx * dx + dy * dy) / (2.0 * s2 * k * k)).exp();
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Detections kept per image, highest score first.
    pub max_dets: usize,
    /// Medium band `(lo, hi]` on `s²`.
    pub medium: (f64, f64),
    /// Large band `(lo, hi]` on `s²`.
    pub large: (f64, f64),
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            max_dets: 20,
            medium: (32.0 * 32.0, 96.0 * 96.0),
            large: (96.0 * 96.0, 1e10),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageAnnotations {
    pub image_id: u64,
    pub persons: Vec<PersonAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagePoses {
    pub image_id: u64,
    pub poses: Vec<PoseResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    /// `None` when no ground truth falls in the band.
    pub ap_m: Option<f64>,
    pub ap_l: Option<f64>,
    /// AP at each OKS threshold in [`oks_thresholds`] order.
    pub per_threshold: [f64; N_THRESHOLDS],
}

impl EvalReport {
    /// `key=value` lines, one metric per line.
    pub fn to_key_values(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("nan".to_string(), |v| format!("{v:.6}"));
        let mut s = format!(
            "ap={:.6}\nap50={:.6}\nap75={:.6}\nap_m={}\nap_l={}\n",
            self.ap,
            self.ap50,
            self.ap75,
            opt(self.ap_m),
            opt(self.ap_l)
        );
        for (t, p) in oks_thresholds().iter().zip(&self.per_threshold) {
            s.push_str(&format!("ap@{t:.2}={p:.6}\n"));
        }
        s
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map_or("  n/a".to_string(), |v| format!("{:5.1}", 100.0 * v));
        writeln!(f, "AP     {:5.1}", 100.0 * self.ap)?;
        writeln!(f, "AP50   {:5.1}", 100.0 * self.ap50)?;
        writeln!(f, "AP75   {:5.1}", 100.0 * self.ap75)?;
        writeln!(f, "AP_M   {}", opt(self.ap_m))?;
        write!(f, "AP_L   {}", opt(self.ap_l))
    }
}

/// Per-image matching outcome for one threshold.
struct ImageMatches {
    scores: Vec<f64>,
    matched: Vec<bool>,
    ignored: Vec<bool>,
    gt_count: usize,
}

fn in_band(area: f64, band: (f64, f64)) -> bool {
    area > band.0 && area <= band.1
}

fn detection_area(pose: &PoseResult) -> f64 {
    let mut it = pose.parts.iter().flatten();
    let Some(first) = it.next() else { return 0.0 };
    let b = it.fold([first.x, first.y, first.x, first.y], |b, p| {
        [b[0].min(p.x), b[1].min(p.y), b[2].max(p.x), b[3].max(p.y)]
    });
    (b[2] - b[0]) * (b[3] - b[1])
}

fn match_image(
    poses: &[PoseResult],
    gts: &[PersonAnnotation],
    kappas: &[f64],
    cfg: &EvalConfig,
    band: (f64, f64),
    thresholds: &[f64],
) -> Vec<ImageMatches> {
    let scales: Vec<Option<f64>> = gts.iter().map(object_scale_sq).collect();
    let gt_ignored: Vec<bool> = gts
        .iter()
        .zip(&scales)
        .map(|(g, s)| g.labeled_count() == 0 || !s.is_some_and(|s| in_band(s, band)))
        .collect();
    let mut gt_order: Vec<usize> = (0..gts.len()).collect();
    gt_order.sort_by_key(|&i| gt_ignored[i]);

    let mut dt_order: Vec<usize> = (0..poses.len()).collect();
    dt_order.sort_by(|&a, &b| poses[b].instance_score.total_cmp(&poses[a].instance_score));
    dt_order.truncate(cfg.max_dets);

    let oks: Vec<Vec<f64>> = dt_order
        .iter()
        .map(|&d| {
            gt_order
                .iter()
                .map(|&g| match scales[g] {
                    Some(s2) if gts[g].labeled_count() > 0 => oks_with_scale(&poses[d], &gts[g], kappas, s2),
                    _ => 0.0,
                })
                .collect()
        })
        .collect();
    let gt_count = gt_ignored.iter().filter(|i| !**i).count();

    thresholds
        .iter()
        .map(|&t| {
            let mut gt_taken = vec![false; gt_order.len()];
            let mut matched = vec![false; dt_order.len()];
            let mut ignored = vec![false; dt_order.len()];
            for (di, &d) in dt_order.iter().enumerate() {
                let mut best = t.min(1.0 - 1e-10);
                let mut m: Option<usize> = None;
                for (gi, &g) in gt_order.iter().enumerate() {
                    if gt_taken[gi] {
                        continue;
                    }
                    if let Some(prev) = m {
                        if !gt_ignored[gt_order[prev]] && gt_ignored[g] {
                            break;
                        }
                    }
                    if oks[di][gi] < best {
                        continue;
                    }
                    best = oks[di][gi];
                    m = Some(gi);
                }
                match m {
                    Some(gi) => {
                        gt_taken[gi] = true;
                        matched[di] = true;
                        ignored[di] = gt_ignored[gt_order[gi]];
                    }
                    None => ignored[di] = !in_band(detection_area(&poses[d]), band),
                }
            }
            ImageMatches {
                scores: dt_order.iter().map(|&d| poses[d].instance_score).collect(),
                matched,
                ignored,
                gt_count,
            }
        })
        .collect()
}

/// 101-point interpolated precision over detections pooled across images.
fn average_precision(images: &[&ImageMatches]) -> Option<f64> {
    let gt_total: usize = images.iter().map(|m| m.gt_count).sum();
    if gt_total == 0 {
        return None;
    }
    let mut dets: Vec<(f64, bool, bool)> = images
        .iter()
        .flat_map(|m| {
            m.scores
                .iter()
                .zip(&m.matched)
                .zip(&m.ignored)
                .map(|((&s, &tp), &ig)| (s, tp, ig))
        })
        .collect();
    // stable, so equal scores keep image order
    dets.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut recall = Vec::with_capacity(dets.len());
    let mut precision = Vec::with_capacity(dets.len());
    for &(_, is_tp, ig) in &dets {
        if !ig {
            if is_tp {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
        }
        recall.push(tp / gt_total as f64);
        precision.push(if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 });
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut sum = 0.0;
    let mut k = 0;
    for r in recall_thresholds() {
        while k < recall.len() && recall[k] < r {
            k += 1;
        }
        if k < recall.len() {
            sum += precision[k];
        }
    }
    Some(sum / N_RECALL as f64)
}

fn band_ap(
    preds: &BTreeMap<u64, &[PoseResult]>,
    gts: &[ImageAnnotations],
    kappas: &[f64],
    cfg: &EvalConfig,
    band: (f64, f64),
    thresholds: &[f64],
) -> Vec<Option<f64>> {
    let per_image: Vec<Vec<ImageMatches>> = gts
        .iter()
        .map(|img| {
            let poses = preds.get(&img.image_id).copied().unwrap_or(&[]);
            match_image(poses, &img.persons, kappas, cfg, band, thresholds)
        })
        .collect();
    (0..thresholds.len())
        .map(|t| {
            let at_t: Vec<&ImageMatches> = per_image.iter().map(|m| &m[t]).collect();
            average_precision(&at_t)
        })
        .collect()
}

/// Evaluate predictions against ground truth over all images.
///
/// Every prediction image id must appear in `gts`; images without
/// predictions count as having zero detections.
pub fn evaluate(
    preds: &[ImagePoses],
    gts: &[ImageAnnotations],
    skeleton: &SkeletonSpec,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    let mut gt_ids = HashSet::new();
    for img in gts {
        if !gt_ids.insert(img.image_id) {
            return Err(Error::domain(format!(
                "duplicate ground-truth image id {}",
                img.image_id
            )));
        }
        for p in &img.persons {
            if p.keypoints.len() != skeleton.parts() {
                return Err(Error::shape(
                    "ground-truth keypoint count",
                    skeleton.parts(),
                    p.keypoints.len(),
                ));
            }
        }
    }
    let mut by_id: BTreeMap<u64, &[PoseResult]> = BTreeMap::new();
    for img in preds {
        if !gt_ids.contains(&img.image_id) {
            return Err(Error::domain(format!(
                "prediction for image {} has no ground truth",
                img.image_id
            )));
        }
        if by_id.insert(img.image_id, &img.poses).is_some() {
            return Err(Error::domain(format!("duplicate prediction image id {}", img.image_id)));
        }
    }

    let kappas = skeleton.oks_kappas();
    let thresholds = oks_thresholds();
    let all = band_ap(
        &by_id,
        gts,
        kappas,
        cfg,
        (f64::NEG_INFINITY, f64::INFINITY),
        &thresholds,
    );
    let mut per_threshold = [0.0; N_THRESHOLDS];
    for (out, v) in per_threshold.iter_mut().zip(&all) {
        *out = v.ok_or_else(|| Error::domain("no ground truth with labeled keypoints"))?;
    }
    let mean =
        |v: &[Option<f64>]| -> Option<f64> { v.iter().copied().sum::<Option<f64>>().map(|s| s / v.len() as f64) };
    let ap_m = mean(&band_ap(&by_id, gts, kappas, cfg, cfg.medium, &thresholds));
    let ap_l = mean(&band_ap(&by_id, gts, kappas, cfg, cfg.large, &thresholds));
    Ok(EvalReport {
        ap: per_threshold.iter().sum::<f64>() / N_THRESHOLDS as f64,
        ap50: per_threshold[0],
        ap75: per_threshold[5],
        ap_m,
        ap_l,
        per_threshold,
    })
}
