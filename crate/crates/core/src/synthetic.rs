//! Synthetic multi-person scenes, annotation-failure injection and an
//! oracle teacher.
//!
//! Figures are articulated stick people built from a fixed limb-length table
//! and joint-angle limits. Parts are looked up by name, so any skeleton
//! whose part names come from the 18-part body model is supported.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotation::{Keypoint, PersonAnnotation, Visibility};
use crate::error::{Error, Result};
use crate::field::{norm, BinaryMask, LabelSet};
use crate::labelgen::{generate_labels, paf_coverage, LabelGenConfig};
use crate::region::IgnoreRegion;
use crate::skeleton::SkeletonSpec;

/// Segment lengths as fractions of the figure scale.
mod body {
    pub const SHOULDER_HALF: f64 = 0.13;
    pub const HIP_HALF: f64 = 0.085;
    pub const TORSO: f64 = 0.30;
    pub const UPPER_ARM: f64 = 0.16;
    pub const FOREARM: f64 = 0.14;
    pub const THIGH: f64 = 0.23;
    pub const SHIN: f64 = 0.22;
    pub const NECK_TO_NOSE: f64 = 0.13;
    pub const EYE_UP: f64 = 0.045;
    pub const EYE_SIDE: f64 = 0.055;
    pub const EAR_UP: f64 = 0.015;
    pub const EAR_SIDE: f64 = 0.115;
}

/// Joint-angle limits in degrees.
mod limits {
    pub const LEAN: (f64, f64) = (-12.0, 12.0);
    pub const HEAD_TILT: (f64, f64) = (-20.0, 20.0);
    pub const ARM_RAISE: (f64, f64) = (-15.0, 110.0);
    pub const ELBOW_BEND: (f64, f64) = (0.0, 130.0);
    pub const LEG_SPREAD: (f64, f64) = (-8.0, 30.0);
    pub const KNEE_BEND: (f64, f64) = (0.0, 60.0);
}

/// Ratio of annotated area to keypoint bounding-box area.
const AREA_FACTOR: f64 = 0.53;

/// Back keypoints within this fraction of the front person's height of one
/// of its limbs count as hidden.
const OCCLUSION_RADIUS: f64 = 0.06;

/// Fraction of the bounding box pushed past the frame edge by protrusion.
const PROTRUSION: (f64, f64) = (0.25, 0.6);

const PLACEMENT_TRIES: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    /// Figure scale range in pixels (roughly the standing height).
    pub scale: (f64, f64),
    /// Minimum distance from any keypoint to the image border.
    pub margin: f64,
    /// Minimum gap between bounding boxes of non-overlapping figures.
    pub min_gap: f64,
    /// Probability that a person after the first is placed overlapping an
    /// earlier one.
    pub overlap_prob: f64,
    /// Maximum crowd regions, each tried with `crowd_prob`.
    pub max_crowds: usize,
    pub crowd_prob: f64,
    /// Figure scale range for unannotated crowd members.
    pub crowd_scale: (f64, f64),
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            scale: (280.0, 360.0),
            margin: 12.0,
            min_gap: 24.0,
            overlap_prob: 0.0,
            max_crowds: 1,
            crowd_prob: 0.5,
            crowd_scale: (120.0, 170.0),
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let (s0, s1) = self.scale;
        let (c0, c1) = self.crowd_scale;
        if !(s0 > 0.0 && s0 <= s1 && c0 > 0.0 && c0 <= c1 && s1.is_finite() && c1.is_finite()) {
            return Err(Error::domain("figure scale ranges must be positive and ordered"));
        }
        if !(self.margin >= 0.0 && self.min_gap >= 0.0) {
            return Err(Error::domain("margin and gap must be non-negative"));
        }
        for (name, p) in [("overlap_prob", self.overlap_prob), ("crowd_prob", self.crowd_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::domain(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub width: u32,
    pub height: u32,
    /// Annotated people.
    pub persons: Vec<PersonAnnotation>,
    /// Unannotated people inside crowd regions.
    pub crowd_persons: Vec<PersonAnnotation>,
    pub ignore_regions: Vec<IgnoreRegion>,
}

impl Scene {
    /// Annotated and crowd people together.
    pub fn everyone(&self) -> Vec<PersonAnnotation> {
        self.persons.iter().chain(&self.crowd_persons).cloned().collect()
    }
}

fn dir(deg: f64) -> [f64; 2] {
    let (s, c) = deg.to_radians().sin_cos();
    [s, c]
}

fn lateral(deg: f64) -> [f64; 2] {
    let (s, c) = deg.to_radians().sin_cos();
    [c, -s]
}

fn step(p: [f64; 2], d: [f64; 2], len: f64) -> [f64; 2] {
    [p[0] + d[0] * len, p[1] + d[1] * len]
}

fn draw<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Named joints of one figure with its neck at the origin, in scale units.
fn stick_figure<R: Rng + ?Sized>(rng: &mut R) -> Vec<(&'static str, [f64; 2])> {
    use body::*;
    let lean = draw(rng, limits::LEAN);
    let down = dir(lean);
    let side = lateral(lean);
    let neck = [0.0, 0.0];
    let mid_hip = step(neck, down, TORSO);

    let mut joints = vec![("neck", neck)];
    const RIGHT: [&str; 6] = [
        "right_shoulder",
        "right_elbow",
        "right_wrist",
        "right_hip",
        "right_knee",
        "right_ankle",
    ];
    const LEFT: [&str; 6] = [
        "left_shoulder",
        "left_elbow",
        "left_wrist",
        "left_hip",
        "left_knee",
        "left_ankle",
    ];
    for (s, names) in [(-1.0, RIGHT), (1.0, LEFT)] {
        let shoulder = step(neck, side, s * SHOULDER_HALF);
        let raise = lean + s * draw(rng, limits::ARM_RAISE);
        let elbow = step(shoulder, dir(raise), UPPER_ARM);
        let bend_sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let wrist = step(elbow, dir(raise + bend_sign * draw(rng, limits::ELBOW_BEND)), FOREARM);

        let hip = step(mid_hip, side, s * HIP_HALF);
        let thigh = s * draw(rng, limits::LEG_SPREAD);
        let knee = step(hip, dir(thigh), THIGH);
        let ankle = step(knee, dir(thigh - s * draw(rng, limits::KNEE_BEND)), SHIN);

        joints.extend(names.into_iter().zip([shoulder, elbow, wrist, hip, knee, ankle]));
    }

    let tilt = lean + draw(rng, limits::HEAD_TILT);
    let up = dir(tilt + 180.0);
    let head_side = lateral(tilt);
    let nose = step(neck, up, NECK_TO_NOSE);
    joints.push(("nose", nose));
    for (s, eye, ear) in [(-1.0, "right_eye", "right_ear"), (1.0, "left_eye", "left_ear")] {
        joints.push((eye, step(step(nose, up, EYE_UP), head_side, s * EYE_SIDE)));
        joints.push((ear, step(step(nose, up, EAR_UP), head_side, s * EAR_SIDE)));
    }
    joints
}

/// Figure at the given scale in local pixel coordinates, with its
/// bounding box.
fn figure<R: Rng + ?Sized>(rng: &mut R, skeleton: &SkeletonSpec, scale: f64) -> Result<(Vec<[f64; 2]>, [f64; 4])> {
    let joints = stick_figure(rng);
    let mut pts = Vec::with_capacity(skeleton.parts());
    for name in skeleton.part_names() {
        let p = joints
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, p)| [p[0] * scale, p[1] * scale])
            .ok_or_else(|| Error::Unsupported(format!("no synthetic joint named {name:?}")))?;
        pts.push(p);
    }
    let b = bbox_of(&pts);
    Ok((pts, b))
}

fn bbox_of(pts: &[[f64; 2]]) -> [f64; 4] {
    pts.iter().fold([f64::MAX, f64::MAX, f64::MIN, f64::MIN], |b, p| {
        [b[0].min(p[0]), b[1].min(p[1]), b[2].max(p[0]), b[3].max(p[1])]
    })
}

fn gap_ok(a: [f64; 4], b: [f64; 4], gap: f64) -> bool {
    a[0] - b[2] >= gap || b[0] - a[2] >= gap || a[1] - b[3] >= gap || b[1] - a[3] >= gap
}

fn intersects(a: [f64; 4], b: [f64; 4]) -> bool {
    a[0] <= b[2] && b[0] <= a[2] && a[1] <= b[3] && b[1] <= a[3]
}

fn shifted(b: [f64; 4], d: [f64; 2]) -> [f64; 4] {
    [b[0] + d[0], b[1] + d[1], b[2] + d[0], b[3] + d[1]]
}

fn to_person(pts: &[[f64; 2]], offset: [f64; 2]) -> PersonAnnotation {
    let keypoints: Vec<Keypoint> = pts
        .iter()
        .map(|p| Keypoint::visible(p[0] + offset[0], p[1] + offset[1]))
        .collect();
    let mut person = PersonAnnotation::new(keypoints);
    person.area = person
        .labeled_bbox()
        .map(|b| (b[2] - b[0]) * (b[3] - b[1]) * AREA_FACTOR);
    person
}

/// Scene with default [`SceneConfig`]: persons separated, at most one crowd.
pub fn gen_scene<R: Rng + ?Sized>(
    rng: &mut R,
    n_persons: usize,
    image_dims: (u32, u32),
    skeleton: &SkeletonSpec,
) -> Result<Scene> {
    gen_scene_with(rng, n_persons, image_dims, skeleton, &SceneConfig::default())
}

pub fn gen_scene_with<R: Rng + ?Sized>(
    rng: &mut R,
    n_persons: usize,
    image_dims: (u32, u32),
    skeleton: &SkeletonSpec,
    cfg: &SceneConfig,
) -> Result<Scene> {
    cfg.validate()?;
    let (w, h) = (f64::from(image_dims.0), f64::from(image_dims.1));
    // An upright figure spans about 0.93 × 0.3 of its scale.
    let need = [
        0.3 * cfg.scale.0 + 2.0 * cfg.margin,
        0.93 * cfg.scale.0 + 2.0 * cfg.margin,
    ];
    if w < need[0] || h < need[1] {
        return Err(Error::domain(format!(
            "image {}x{} is too small for a figure of scale {}",
            image_dims.0, image_dims.1, cfg.scale.0
        )));
    }

    let mut persons = Vec::with_capacity(n_persons);
    let mut boxes: Vec<[f64; 4]> = Vec::with_capacity(n_persons);
    for k in 0..n_persons {
        let overlap = k > 0 && cfg.overlap_prob > 0.0 && rng.random_bool(cfg.overlap_prob);
        let partner = if overlap { Some(rng.random_range(0..k)) } else { None };
        let mut placed = false;
        for _ in 0..PLACEMENT_TRIES {
            let scale = draw(rng, cfg.scale);
            let (pts, b) = figure(rng, skeleton, scale)?;
            let lo = [cfg.margin - b[0], cfg.margin - b[1]];
            let hi = [w - cfg.margin - b[2], h - cfg.margin - b[3]];
            if hi[0] < lo[0] || hi[1] < lo[1] {
                continue;
            }
            let offset = [rng.random_range(lo[0]..=hi[0]), rng.random_range(lo[1]..=hi[1])];
            let placed_box = shifted(b, offset);
            let ok = match partner {
                Some(j) => intersects(placed_box, boxes[j]),
                None => boxes.iter().all(|o| gap_ok(placed_box, *o, cfg.min_gap)),
            };
            if ok {
                persons.push(to_person(&pts, offset));
                boxes.push(placed_box);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::domain(format!(
                "could not place person {k} of {n_persons} in a {}x{} image",
                image_dims.0, image_dims.1
            )));
        }
    }

    let mut crowd_persons = Vec::new();
    let mut ignore_regions = Vec::new();
    for _ in 0..cfg.max_crowds {
        if cfg.crowd_prob == 0.0 || !rng.random_bool(cfg.crowd_prob) {
            continue;
        }
        let members = rng.random_range(1..=2usize);
        let mut figs = Vec::with_capacity(members);
        let mut x = 0.0;
        for _ in 0..members {
            let scale = draw(rng, cfg.crowd_scale);
            let (pts, b) = figure(rng, skeleton, scale)?;
            let dx = x - b[0];
            x = b[2] + dx - 0.2 * (b[2] - b[0]);
            figs.push((pts, [dx, 0.0]));
        }
        let all: Vec<[f64; 2]> = figs
            .iter()
            .flat_map(|(pts, d)| pts.iter().map(move |p| [p[0] + d[0], p[1] + d[1]]))
            .collect();
        let pad = cfg.margin;
        let b = bbox_of(&all);
        let region_box = [b[0] - pad, b[1] - pad, b[2] + pad, b[3] + pad];
        let lo = [-region_box[0], -region_box[1]];
        let hi = [w - region_box[2], h - region_box[3]];
        if hi[0] < lo[0] || hi[1] < lo[1] {
            continue;
        }
        for _ in 0..PLACEMENT_TRIES {
            let offset = [rng.random_range(lo[0]..=hi[0]), rng.random_range(lo[1]..=hi[1])];
            let r = shifted(region_box, offset);
            if boxes.iter().all(|o| gap_ok(r, *o, cfg.min_gap)) {
                for (pts, d) in &figs {
                    crowd_persons.push(to_person(pts, [d[0] + offset[0], d[1] + offset[1]]));
                }
                ignore_regions.push(IgnoreRegion::rect(r[0], r[1], r[2], r[3]));
                boxes.push(r);
                break;
            }
        }
    }

    Ok(Scene {
        width: image_dims.0,
        height: image_dims.1,
        persons,
        crowd_persons,
        ignore_regions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorruptionConfig {
    /// Push one person partly out of the frame.
    pub protrusion: bool,
    /// Per keypoint of an occluded person near an occluder's limb.
    pub occlusion_rate: f64,
    /// Per remaining labeled keypoint.
    pub miss_rate: f64,
    /// Per crowd region.
    pub drop_mask_rate: f64,
    pub seed: u64,
}

impl CorruptionConfig {
    pub fn none() -> Self {
        Self {
            protrusion: false,
            occlusion_rate: 0.0,
            miss_rate: 0.0,
            drop_mask_rate: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("occlusion_rate", self.occlusion_rate),
            ("miss_rate", self.miss_rate),
            ("drop_mask_rate", self.drop_mask_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::domain(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        Ok(())
    }
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        Self {
            protrusion: true,
            occlusion_rate: 0.5,
            miss_rate: 0.1,
            drop_mask_rate: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureMode {
    Protrusion,
    Occlusion,
    Miss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LedgerEntry {
    Translated {
        person: usize,
        dx: f64,
        dy: f64,
        before: PersonAnnotation,
    },
    KeypointRemoved {
        person: usize,
        part: usize,
        cause: FailureMode,
        keypoint: Keypoint,
    },
    MaskDropped {
        index: usize,
        region: IgnoreRegion,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corruption {
    /// The scene as an annotator would have labeled it.
    pub scene: Scene,
    /// The scene after protrusion with every keypoint still labeled and
    /// every region kept: the ground truth the corrupted scene should have.
    pub reference: Scene,
    pub ledger: Vec<LedgerEntry>,
}

fn remove(scene: &mut Scene, ledger: &mut Vec<LedgerEntry>, person: usize, part: usize, cause: FailureMode) {
    let k = &mut scene.persons[person].keypoints[part];
    ledger.push(LedgerEntry::KeypointRemoved {
        person,
        part,
        cause,
        keypoint: *k,
    });
    *k = Keypoint::ABSENT;
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = [a[0] + t * d[0] - p[0], a[1] + t * d[1] - p[1]];
    q[0].hypot(q[1])
}

/// Apply the annotation failure modes in order: protrusion, occlusion,
/// misses, mask drops.
pub fn inject_failures(scene: &Scene, skeleton: &SkeletonSpec, cfg: &CorruptionConfig) -> Result<Corruption> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = scene.clone();
    let mut ledger = Vec::new();
    let (w, h) = (f64::from(scene.width), f64::from(scene.height));

    if cfg.protrusion && !out.persons.is_empty() {
        let k = rng.random_range(0..out.persons.len());
        if let Some(b) = out.persons[k].labeled_bbox() {
            let f = draw(&mut rng, PROTRUSION);
            let (bw, bh) = (b[2] - b[0], b[3] - b[1]);
            let (dx, dy) = match rng.random_range(0..4u8) {
                0 => (-f * bw - b[0], 0.0),
                1 => (w + f * bw - b[2], 0.0),
                2 => (0.0, -f * bh - b[1]),
                _ => (0.0, h + f * bh - b[3]),
            };
            let before = out.persons[k].clone();
            for kp in out.persons[k].keypoints.iter_mut().filter(|kp| kp.state.is_labeled()) {
                kp.x += dx;
                kp.y += dy;
            }
            ledger.push(LedgerEntry::Translated {
                person: k,
                dx,
                dy,
                before,
            });
        }
    }
    let reference = out.clone();
    if cfg.protrusion {
        for i in 0..out.persons.len() {
            for j in 0..skeleton.parts().min(out.persons[i].keypoints.len()) {
                if let Some(p) = out.persons[i].labeled(j) {
                    if !((0.0..w).contains(&p[0]) && (0.0..h).contains(&p[1])) {
                        remove(&mut out, &mut ledger, i, j, FailureMode::Protrusion);
                    }
                }
            }
        }
    }

    if cfg.occlusion_rate > 0.0 {
        let boxes: Vec<Option<[f64; 4]>> = reference.persons.iter().map(|p| p.labeled_bbox()).collect();
        for back in 0..reference.persons.len() {
            for front in 0..reference.persons.len() {
                let (Some(bb), Some(fb)) = (boxes[back], boxes[front]) else {
                    continue;
                };
                // lower feet are nearer the camera; ties broken by index
                let in_front = fb[3] > bb[3] || (fb[3] == bb[3] && front > back);
                if back == front || !in_front || !intersects(bb, fb) {
                    continue;
                }
                let radius = OCCLUSION_RADIUS * (fb[3] - fb[1]);
                let occluder = &reference.persons[front];
                for j in 0..skeleton.parts() {
                    let Some(p) = out.persons[back].labeled(j) else {
                        continue;
                    };
                    let hidden =
                        skeleton
                            .limbs()
                            .iter()
                            .any(|&(a, b)| match (occluder.labeled(a), occluder.labeled(b)) {
                                (Some(a), Some(b)) => segment_distance(p, a, b) <= radius,
                                _ => false,
                            });
                    if hidden && rng.random_bool(cfg.occlusion_rate) {
                        remove(&mut out, &mut ledger, back, j, FailureMode::Occlusion);
                    }
                }
            }
        }
    }

    if cfg.miss_rate > 0.0 {
        for i in 0..out.persons.len() {
            for j in 0..out.persons[i].keypoints.len() {
                if out.persons[i].labeled(j).is_some() && rng.random_bool(cfg.miss_rate) {
                    remove(&mut out, &mut ledger, i, j, FailureMode::Miss);
                }
            }
        }
    }

    if cfg.drop_mask_rate > 0.0 {
        for index in (0..out.ignore_regions.len()).rev() {
            if rng.random_bool(cfg.drop_mask_rate) {
                let region = out.ignore_regions.remove(index);
                ledger.push(LedgerEntry::MaskDropped { index, region });
            }
        }
    }

    Ok(Corruption {
        scene: out,
        reference,
        ledger,
    })
}

/// Undo a ledger, newest entry first.
pub fn replay_ledger(corrupted: &Scene, ledger: &[LedgerEntry]) -> Result<Scene> {
    let mut s = corrupted.clone();
    for entry in ledger.iter().rev() {
        match entry {
            LedgerEntry::MaskDropped { index, region } => {
                if *index > s.ignore_regions.len() {
                    return Err(Error::validation(format!("ledger region index {index} out of range")));
                }
                s.ignore_regions.insert(*index, region.clone());
            }
            LedgerEntry::KeypointRemoved {
                person, part, keypoint, ..
            } => {
                let slot = s
                    .persons
                    .get_mut(*person)
                    .and_then(|p| p.keypoints.get_mut(*part))
                    .ok_or_else(|| Error::validation(format!("ledger keypoint {person}/{part} out of range")))?;
                *slot = *keypoint;
            }
            LedgerEntry::Translated { person, before, .. } => {
                let slot = s
                    .persons
                    .get_mut(*person)
                    .ok_or_else(|| Error::validation(format!("ledger person {person} out of range")))?;
                *slot = before.clone();
            }
        }
    }
    Ok(s)
}

/// Labels an annotator-quality pipeline would train on: annotated persons
/// and the scene's ignore regions.
pub fn scene_labels(scene: &Scene, skeleton: &SkeletonSpec, cfg: &LabelGenConfig) -> Result<LabelSet> {
    generate_labels(&scene.persons, &scene.ignore_regions, skeleton, cfg)
}

/// Labels with every person present, annotated or not, and the scene's
/// ignore regions.
pub fn complete_labels(scene: &Scene, skeleton: &SkeletonSpec, cfg: &LabelGenConfig) -> Result<LabelSet> {
    generate_labels(&scene.everyone(), &scene.ignore_regions, skeleton, cfg)
}

/// Per-cell flag: no limb type covers the cell more than once.
pub fn single_coverage(scene: &Scene, skeleton: &SkeletonSpec, cfg: &LabelGenConfig) -> BinaryMask {
    let cov = paf_coverage(&scene.everyone(), skeleton, cfg);
    let mut mask = BinaryMask::ones(cfg.grid);
    for per_limb in &cov {
        for (m, &c) in mask.values_mut().iter_mut().zip(per_limb) {
            if c > 1 {
                *m = false;
            }
        }
    }
    mask
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    /// Amplitude factor in `(0, 1]` applied to maps and PAFs.
    pub alpha: f64,
    /// Gaussian blur of PAF magnitude, in cells.
    pub blur_sigma: Option<f64>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            blur_sigma: None,
        }
    }
}

fn blur_1d(src: &[f64], w: usize, h: usize, kernel: &[f64], horizontal: bool) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let o = k as isize - r;
                let (sx, sy) = if horizontal {
                    (x as isize + o, y as isize)
                } else {
                    (x as isize, y as isize + o)
                };
                if sx >= 0 && sy >= 0 && (sx as usize) < w && (sy as usize) < h {
                    acc += kv * src[sy as usize * w + sx as usize];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Ideal teacher: labels of every person in the scene, no ignore mask,
/// optionally softened.
pub fn oracle_teacher(
    scene: &Scene,
    skeleton: &SkeletonSpec,
    cfg: &LabelGenConfig,
    oracle: &OracleConfig,
) -> Result<LabelSet> {
    if !(oracle.alpha > 0.0 && oracle.alpha <= 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0, 1], got {}", oracle.alpha)));
    }
    let mut labels = generate_labels(&scene.everyone(), &[], skeleton, cfg)?;
    if let Some(sigma) = oracle.blur_sigma {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::domain(format!("blur sigma must be > 0, got {sigma}")));
        }
        let r = (3.0 * sigma).ceil() as isize;
        let kernel: Vec<f64> = (-r..=r)
            .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
            .collect();
        let total: f64 = kernel.iter().sum();
        let kernel: Vec<f64> = kernel.iter().map(|k| k / total).collect();
        let (w, h) = (cfg.grid.width(), cfg.grid.height());
        for paf in &mut labels.pafs {
            let mags: Vec<f64> = paf.values().iter().map(|v| norm(*v)).collect();
            let blurred = blur_1d(&blur_1d(&mags, w, h, &kernel, true), w, h, &kernel, false);
            for (v, (&m, &b)) in paf.values_mut().iter_mut().zip(mags.iter().zip(&blurred)) {
                if m > 0.0 {
                    let s = b.min(1.0) / m;
                    *v = [(f64::from(v[0]) * s) as f32, (f64::from(v[1]) * s) as f32];
                }
            }
        }
    }
    if oracle.alpha < 1.0 {
        let a = oracle.alpha as f32;
        for m in &mut labels.maps {
            m.values_mut().iter_mut().for_each(|v| *v *= a);
        }
        for p in &mut labels.pafs {
            p.values_mut().iter_mut().for_each(|v| *v = [v[0] * a, v[1] * a]);
        }
    }
    Ok(labels)
}

/// True when every keypoint of every annotated person is labeled visible.
pub fn fully_visible(scene: &Scene) -> bool {
    scene
        .persons
        .iter()
        .all(|p| p.keypoints.iter().all(|k| k.state == Visibility::Visible))
}
