//! Decoding confidence maps and PAFs into per-person skeletons.
//!
//! Peaks of each confidence map become part candidates, every candidate
//! pair of a limb type is scored by a line integral over its PAF, pairs are
//! matched greedily per limb, and matched pairs are merged into persons.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{sample_bilinear, LabelSet, ScalarField, VectorField};
use crate::skeleton::SkeletonSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParserConfig {
    /// Minimum confidence-map value for a peak.
    pub peak_threshold: f64,
    /// Points sampled along each candidate segment.
    pub n_samples: usize,
    /// Minimum line-integral score for a pair to be matched.
    pub min_limb_score: f64,
    /// Minimum fraction of samples whose PAF points along the segment.
    pub min_positive_fraction: f64,
    /// Persons with fewer parts are dropped.
    pub min_parts: usize,
}

impl Default for ParserConfig {
    fn default() -> Self {
        Self {
            peak_threshold: 0.1,
            n_samples: 10,
            min_limb_score: 0.05,
            min_positive_fraction: 0.8,
            min_parts: 3,
        }
    }
}

impl ParserConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.peak_threshold) {
            return Err(Error::domain(format!(
                "peak threshold must lie in [0, 1], got {}",
                self.peak_threshold
            )));
        }
        if self.n_samples < 2 {
            return Err(Error::domain("line integral needs at least 2 samples"));
        }
        if !(0.0..=1.0).contains(&self.min_positive_fraction) {
            return Err(Error::domain("positive fraction must lie in [0, 1]"));
        }
        if self.min_parts == 0 {
            return Err(Error::domain("min_parts must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartCandidate {
    pub part: usize,
    /// Continuous grid coordinates (cell centers on integers).
    pub pos: [f64; 2],
    pub score: f64,
}

/// A decoded part location in image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartDetection {
    pub x: f64,
    pub y: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseResult {
    pub parts: Vec<Option<PartDetection>>,
    /// Mean present part score plus mean accepted limb score.
    pub instance_score: f64,
}

impl PoseResult {
    pub fn present_parts(&self) -> usize {
        self.parts.iter().flatten().count()
    }
}

/// Local maxima of `map` at or above `threshold`, with sub-cell refinement.
///
/// A cell qualifies when it is at least as large as all 8 neighbours and
/// strictly larger than the neighbours that precede it in row-major order,
/// so a plateau of equal cells yields exactly one peak. Output is sorted by
/// descending score, then row-major position.
pub fn find_peaks(map: &ScalarField, part: usize, threshold: f64) -> Vec<PartCandidate> {
    let grid = map.grid();
    let (w, h) = (grid.width(), grid.height());
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = map.get(x, y);
            if v <= 0.0 || f64::from(v) < threshold {
                continue;
            }
            if !is_peak(map, x, y, v) {
                continue;
            }
            let dx = refine(
                (x > 0).then(|| map.get(x - 1, y)),
                v,
                (x + 1 < w).then(|| map.get(x + 1, y)),
            );
            let dy = refine(
                (y > 0).then(|| map.get(x, y - 1)),
                v,
                (y + 1 < h).then(|| map.get(x, y + 1)),
            );
            out.push((
                y * w + x,
                PartCandidate {
                    part,
                    pos: [x as f64 + dx, y as f64 + dy],
                    score: f64::from(v),
                },
            ));
        }
    }
    out.sort_by(|(ia, a), (ib, b)| b.score.total_cmp(&a.score).then(ia.cmp(ib)));
    out.into_iter().map(|(_, c)| c).collect()
}

fn is_peak(map: &ScalarField, x: usize, y: usize, v: f32) -> bool {
    let grid = map.grid();
    for ny in y.saturating_sub(1)..=(y + 1).min(grid.height() - 1) {
        for nx in x.saturating_sub(1)..=(x + 1).min(grid.width() - 1) {
            if (nx, ny) == (x, y) {
                continue;
            }
            let n = map.get(nx, ny);
            let precedes = (ny, nx) < (y, x);
            if n > v || (precedes && n == v) {
                return false;
            }
        }
    }
    true
}

/// Vertex offset of the parabola through three samples, clamped to ±0.5.
fn refine(left: Option<f32>, center: f32, right: Option<f32>) -> f64 {
    let (Some(l), Some(r)) = (left, right) else {
        return 0.0;
    };
    let (l, c, r) = (f64::from(l), f64::from(center), f64::from(r));
    let curvature = l - 2.0 * c + r;
    if curvature >= 0.0 {
        return 0.0;
    }
    (0.5 * (l - r) / curvature).clamp(-0.5, 0.5)
}

/// Line integral of `paf` along the segment from `a` to `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimbIntegral {
    /// Mean projection of the sampled field onto the segment direction.
    pub score: f64,
    /// Fraction of samples with a positive projection.
    pub positive_fraction: f64,
}

pub fn limb_integral(paf: &VectorField, a: [f64; 2], b: [f64; 2], n_samples: usize) -> LimbIntegral {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len = (dx * dx + dy * dy).sqrt();
    if len < 1e-9 || n_samples < 2 {
        return LimbIntegral {
            score: 0.0,
            positive_fraction: 0.0,
        };
    }
    let dir = [dx / len, dy / len];
    let max = [(paf.grid().width() - 1) as f64, (paf.grid().height() - 1) as f64];
    let mut sum = 0.0;
    let mut positive = 0usize;
    for i in 0..n_samples {
        let u = i as f64 / (n_samples - 1) as f64;
        let p = [(a[0] + u * dx).clamp(0.0, max[0]), (a[1] + u * dy).clamp(0.0, max[1])];
        let v = sample_bilinear(paf, p).unwrap_or([0.0, 0.0]);
        let dot = v[0] * dir[0] + v[1] * dir[1];
        sum += dot;
        if dot > 0.0 {
            positive += 1;
        }
    }
    LimbIntegral {
        score: sum / n_samples as f64,
        positive_fraction: positive as f64 / n_samples as f64,
    }
}

/// Mean PAF projection along `a → b`; coincident endpoints score 0.
pub fn limb_score(paf: &VectorField, a: &PartCandidate, b: &PartCandidate, n_samples: usize) -> f64 {
    limb_integral(paf, a.pos, b.pos, n_samples).score
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub a: usize,
    pub b: usize,
    pub score: f64,
}

/// Greedy one-to-one assignment: visit pairs by descending score (ties by
/// lower `a`, then lower `b`) and keep each pair whose endpoints are both
/// unused and whose score is at least `min_score`.
pub fn greedy_match(scores: &[Vec<f64>], min_score: f64) -> Vec<Match> {
    let cols = scores.iter().map(Vec::len).max().unwrap_or(0);
    let mut pairs: Vec<Match> = scores
        .iter()
        .enumerate()
        .flat_map(|(a, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, s)| **s >= min_score)
                .map(move |(b, &score)| Match { a, b, score })
        })
        .collect();
    pairs.sort_by(|x, y| y.score.total_cmp(&x.score).then(x.a.cmp(&y.a)).then(x.b.cmp(&y.b)));
    let mut used_a = vec![false; scores.len()];
    let mut used_b = vec![false; cols];
    let mut out = Vec::new();
    for m in pairs {
        if !used_a[m.a] && !used_b[m.b] {
            used_a[m.a] = true;
            used_b[m.b] = true;
            out.push(m);
        }
    }
    out
}

struct Edge {
    limb: usize,
    u: usize,
    v: usize,
    score: f64,
}

struct Cluster {
    slots: Vec<Option<usize>>,
    limb_scores: Vec<f64>,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Decode person skeletons from confidence maps and PAFs on one grid.
pub fn parse_poses(
    maps: &[ScalarField],
    pafs: &[VectorField],
    skeleton: &SkeletonSpec,
    cfg: &ParserConfig,
) -> Result<Vec<PoseResult>> {
    cfg.validate()?;
    if maps.len() != skeleton.parts() {
        return Err(Error::shape("confidence map count", skeleton.parts(), maps.len()));
    }
    if pafs.len() != skeleton.limbs().len() {
        return Err(Error::shape("paf count", skeleton.limbs().len(), pafs.len()));
    }
    let Some(grid) = maps.first().map(|m| *m.grid()) else {
        return Ok(Vec::new());
    };
    for m in maps {
        grid.ensure_same(m.grid(), "confidence map grid")?;
    }
    for p in pafs {
        grid.ensure_same(p.grid(), "paf grid")?;
    }

    // Global candidate ids, grouped by part.
    let mut candidates: Vec<PartCandidate> = Vec::new();
    let mut by_part: Vec<Vec<usize>> = Vec::with_capacity(maps.len());
    for (j, map) in maps.iter().enumerate() {
        let peaks = find_peaks(map, j, cfg.peak_threshold);
        let start = candidates.len();
        by_part.push((start..start + peaks.len()).collect());
        candidates.extend(peaks);
    }

    let mut edges = Vec::new();
    for (c, &(j1, j2)) in skeleton.limbs().iter().enumerate() {
        let (ca, cb) = (&by_part[j1], &by_part[j2]);
        if ca.is_empty() || cb.is_empty() {
            continue;
        }
        let scores: Vec<Vec<f64>> = ca
            .iter()
            .map(|&u| {
                cb.iter()
                    .map(|&v| {
                        let li = limb_integral(&pafs[c], candidates[u].pos, candidates[v].pos, cfg.n_samples);
                        if li.positive_fraction >= cfg.min_positive_fraction {
                            li.score
                        } else {
                            f64::NEG_INFINITY
                        }
                    })
                    .collect()
            })
            .collect();
        for m in greedy_match(&scores, cfg.min_limb_score) {
            edges.push(Edge {
                limb: c,
                u: ca[m.a],
                v: cb[m.b],
                score: m.score,
            });
        }
    }
    edges.sort_by(|x, y| {
        y.score
            .total_cmp(&x.score)
            .then(x.limb.cmp(&y.limb))
            .then(x.u.cmp(&y.u))
            .then(x.v.cmp(&y.v))
    });

    let parts = skeleton.parts();
    let mut parent: Vec<usize> = (0..candidates.len()).collect();
    let mut clusters: Vec<Cluster> = candidates
        .iter()
        .enumerate()
        .map(|(id, c)| {
            let mut slots = vec![None; parts];
            slots[c.part] = Some(id);
            Cluster {
                slots,
                limb_scores: Vec::new(),
            }
        })
        .collect();

    for e in &edges {
        let (ru, rv) = (find(&mut parent, e.u), find(&mut parent, e.v));
        if ru == rv {
            clusters[ru].limb_scores.push(e.score);
            continue;
        }
        let conflict = clusters[ru]
            .slots
            .iter()
            .zip(&clusters[rv].slots)
            .any(|(a, b)| a.is_some() && b.is_some());
        if conflict {
            continue;
        }
        let (keep, gone) = if ru < rv { (ru, rv) } else { (rv, ru) };
        parent[gone] = keep;
        let moved = std::mem::take(&mut clusters[gone].slots);
        let moved_scores = std::mem::take(&mut clusters[gone].limb_scores);
        for (slot, m) in clusters[keep].slots.iter_mut().zip(moved) {
            if m.is_some() {
                *slot = m;
            }
        }
        clusters[keep].limb_scores.extend(moved_scores);
        clusters[keep].limb_scores.push(e.score);
    }

    let mut poses: Vec<(usize, PoseResult)> = Vec::new();
    for (root, cluster) in clusters.iter().enumerate() {
        if find(&mut parent, root) != root {
            continue;
        }
        let ids: Vec<usize> = cluster.slots.iter().flatten().copied().collect();
        if ids.len() < cfg.min_parts {
            continue;
        }
        let part_mean = ids.iter().map(|&i| candidates[i].score).sum::<f64>() / ids.len() as f64;
        let limb_mean = if cluster.limb_scores.is_empty() {
            0.0
        } else {
            cluster.limb_scores.iter().sum::<f64>() / cluster.limb_scores.len() as f64
        };
        let detections = cluster
            .slots
            .iter()
            .map(|slot| {
                slot.map(|i| {
                    let c = &candidates[i];
                    let [x, y] = grid.to_image(c.pos);
                    PartDetection { x, y, score: c.score }
                })
            })
            .collect();
        let first = *ids.iter().min().unwrap();
        poses.push((
            first,
            PoseResult {
                parts: detections,
                instance_score: part_mean + limb_mean,
            },
        ));
    }
    poses.sort_by(|(fa, a), (fb, b)| b.instance_score.total_cmp(&a.instance_score).then(fa.cmp(fb)));
    Ok(poses.into_iter().map(|(_, p)| p).collect())
}

/// [`parse_poses`] over a label set's maps and PAFs.
pub fn parse_labels(labels: &LabelSet, skeleton: &SkeletonSpec, cfg: &ParserConfig) -> Result<Vec<PoseResult>> {
    parse_poses(&labels.maps, &labels.pafs, skeleton, cfg)
}
