//! Ground-truth confidence maps, part affinity fields and ignore masks.

use serde::{Deserialize, Serialize};

use crate::annotation::PersonAnnotation;
use crate::error::{Error, Result};
use crate::field::{GridSpec, LabelSet, ScalarField, VectorField};
use crate::region::{gen_ignore_mask, IgnoreRegion};
use crate::skeleton::SkeletonSpec;

/// Gaussian width used by the reference pose pipeline, in image pixels.
pub const DEFAULT_SIGMA_PX: f64 = 7.0;

/// Gaussians are cut to zero beyond this many sigmas.
const GAUSSIAN_CUTOFF: f64 = 3.0;

/// Limbs shorter than this (grid cells) have no direction and are skipped.
const DEGENERATE_LIMB: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelGenConfig {
    /// Gaussian standard deviation, in grid cells.
    pub sigma: f64,
    /// Half-width of the PAF rectangle, in grid cells.
    pub limb_width: f64,
    pub grid: GridSpec,
}

impl LabelGenConfig {
    pub fn new(grid: GridSpec, sigma: f64, limb_width: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::domain(format!("sigma must be > 0, got {sigma}")));
        }
        if !(limb_width.is_finite() && limb_width > 0.0) {
            return Err(Error::domain(format!("limb width must be > 0, got {limb_width}")));
        }
        Ok(Self {
            sigma,
            limb_width,
            grid,
        })
    }

    /// Sigma of 7 image pixels expressed in cells, limb half-width of one cell.
    pub fn for_grid(grid: GridSpec) -> Self {
        Self {
            sigma: DEFAULT_SIGMA_PX / grid.stride(),
            limb_width: 1.0,
            grid,
        }
    }
}

/// Counts of limb instances that produced no PAF support.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PafDiagnostics {
    /// Limb instances rasterized.
    pub generated: usize,
    /// Limb instances of annotated persons with at least one endpoint absent.
    pub missing_endpoint: usize,
    /// Limb instances whose endpoints coincide.
    pub degenerate: usize,
}

impl std::ops::AddAssign for PafDiagnostics {
    fn add_assign(&mut self, rhs: Self) {
        self.generated += rhs.generated;
        self.missing_endpoint += rhs.missing_endpoint;
        self.degenerate += rhs.degenerate;
    }
}

/// Per-part max over persons of a Gaussian centred on each annotated keypoint.
pub fn gen_confidence_maps(
    persons: &[PersonAnnotation],
    skeleton: &SkeletonSpec,
    cfg: &LabelGenConfig,
) -> Vec<ScalarField> {
    let grid = cfg.grid;
    let reach = GAUSSIAN_CUTOFF * cfg.sigma;
    let cutoff_sq = reach * reach;
    let two_var = 2.0 * cfg.sigma * cfg.sigma;

    (0..skeleton.parts())
        .map(|part| {
            let mut field = ScalarField::zeros(grid);
            for person in persons {
                let Some(pos) = person.labeled(part) else {
                    continue;
                };
                let [gx, gy] = grid.to_grid(pos);
                let Some((xs, ys)) = window(&grid, [gx - reach, gy - reach], [gx + reach, gy + reach]) else {
                    continue;
                };
                for y in ys {
                    let dy = y as f64 - gy;
                    for x in xs.clone() {
                        let dx = x as f64 - gx;
                        let d2 = dx * dx + dy * dy;
                        if d2 > cutoff_sq {
                            continue;
                        }
                        let v = (-d2 / two_var).exp() as f32;
                        let i = grid.index(x, y);
                        let cell = &mut field.values_mut()[i];
                        if v > *cell {
                            *cell = v;
                        }
                    }
                }
            }
            field
        })
        .collect()
}

/// Cell ranges overlapping the closed box `[lo, hi]`, or `None` if it misses the grid.
fn window(
    grid: &GridSpec,
    lo: [f64; 2],
    hi: [f64; 2],
) -> Option<(std::ops::RangeInclusive<usize>, std::ops::RangeInclusive<usize>)> {
    let (w, h) = (grid.width() as f64, grid.height() as f64);
    let x0 = lo[0].ceil().max(0.0);
    let y0 = lo[1].ceil().max(0.0);
    let x1 = hi[0].floor().min(w - 1.0);
    let y1 = hi[1].floor().min(h - 1.0);
    if !(x0 <= x1 && y0 <= y1) {
        return None;
    }
    Some((x0 as usize..=x1 as usize, y0 as usize..=y1 as usize))
}

/// Per-limb sums of unit vectors and coverage counts before averaging.
struct PafAccumulator {
    sums: Vec<Vec<[f64; 2]>>,
    counts: Vec<Vec<u32>>,
    diagnostics: PafDiagnostics,
}

fn accumulate_pafs(persons: &[PersonAnnotation], skeleton: &SkeletonSpec, cfg: &LabelGenConfig) -> PafAccumulator {
    let grid = cfg.grid;
    let cells = grid.cells();
    let limbs = skeleton.limbs();
    let mut acc = PafAccumulator {
        sums: vec![vec![[0.0; 2]; cells]; limbs.len()],
        counts: vec![vec![0; cells]; limbs.len()],
        diagnostics: PafDiagnostics::default(),
    };
    let width = cfg.limb_width;

    for person in persons.iter().filter(|p| p.labeled_count() > 0) {
        for (c, &(j1, j2)) in limbs.iter().enumerate() {
            let (Some(a), Some(b)) = (person.labeled(j1), person.labeled(j2)) else {
                acc.diagnostics.missing_endpoint += 1;
                continue;
            };
            let a = grid.to_grid(a);
            let b = grid.to_grid(b);
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            let len = (dx * dx + dy * dy).sqrt();
            if len < DEGENERATE_LIMB {
                acc.diagnostics.degenerate += 1;
                continue;
            }
            acc.diagnostics.generated += 1;
            let v = [dx / len, dy / len];
            let lo = [a[0].min(b[0]) - width, a[1].min(b[1]) - width];
            let hi = [a[0].max(b[0]) + width, a[1].max(b[1]) + width];
            let Some((xs, ys)) = window(&grid, lo, hi) else {
                continue;
            };
            for y in ys {
                let py = y as f64 - a[1];
                for x in xs.clone() {
                    let px = x as f64 - a[0];
                    let along = v[0] * px + v[1] * py;
                    let across = v[0] * py - v[1] * px;
                    if along >= 0.0 && along <= len && across.abs() <= width {
                        let i = grid.index(x, y);
                        acc.sums[c][i][0] += v[0];
                        acc.sums[c][i][1] += v[1];
                        acc.counts[c][i] += 1;
                    }
                }
            }
        }
    }
    acc
}

/// Per-limb unit vectors over the rectangle between each annotated endpoint
/// pair; overlapping instances of one limb type are averaged.
pub fn gen_pafs(
    persons: &[PersonAnnotation],
    skeleton: &SkeletonSpec,
    cfg: &LabelGenConfig,
) -> (Vec<VectorField>, PafDiagnostics) {
    let acc = accumulate_pafs(persons, skeleton, cfg);
    let fields = acc
        .sums
        .iter()
        .zip(&acc.counts)
        .map(|(sums, counts)| {
            let mut f = VectorField::zeros(cfg.grid);
            for ((out, s), &n) in f.values_mut().iter_mut().zip(sums).zip(counts) {
                if n > 0 {
                    let n = f64::from(n);
                    *out = [(s[0] / n) as f32, (s[1] / n) as f32];
                }
            }
            f
        })
        .collect();
    (fields, acc.diagnostics)
}

/// Number of limb instances covering each cell, per limb type.
pub fn paf_coverage(persons: &[PersonAnnotation], skeleton: &SkeletonSpec, cfg: &LabelGenConfig) -> Vec<Vec<u32>> {
    accumulate_pafs(persons, skeleton, cfg).counts
}

fn validate_persons(persons: &[PersonAnnotation], skeleton: &SkeletonSpec) -> Result<()> {
    for (i, p) in persons.iter().enumerate() {
        if p.keypoints.len() != skeleton.parts() {
            return Err(Error::validation(format!(
                "person {i} has {} keypoints, skeleton has {} parts",
                p.keypoints.len(),
                skeleton.parts()
            )));
        }
        if p.keypoints
            .iter()
            .any(|k| k.state.is_labeled() && !(k.x.is_finite() && k.y.is_finite()))
        {
            return Err(Error::validation(format!(
                "person {i} has a labeled keypoint with non-finite coordinates"
            )));
        }
    }
    Ok(())
}

/// Confidence maps, PAFs and ignore mask for one image.
pub fn generate_labels(
    persons: &[PersonAnnotation],
    ignore_regions: &[IgnoreRegion],
    skeleton: &SkeletonSpec,
    cfg: &LabelGenConfig,
) -> Result<LabelSet> {
    generate_labels_with_diagnostics(persons, ignore_regions, skeleton, cfg).map(|(l, _)| l)
}

pub fn generate_labels_with_diagnostics(
    persons: &[PersonAnnotation],
    ignore_regions: &[IgnoreRegion],
    skeleton: &SkeletonSpec,
    cfg: &LabelGenConfig,
) -> Result<(LabelSet, PafDiagnostics)> {
    validate_persons(persons, skeleton)?;
    let maps = gen_confidence_maps(persons, skeleton, cfg);
    let (pafs, diag) = gen_pafs(persons, skeleton, cfg);
    let mask = gen_ignore_mask(ignore_regions, cfg.grid)?;
    Ok((LabelSet::new(maps, pafs, mask)?, diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::Keypoint;
    use crate::field::norm;

    fn two_part_skeleton() -> SkeletonSpec {
        SkeletonSpec::new(vec!["a".into(), "b".into()], vec![(0, 1)], vec![], vec![0.1, 0.1]).unwrap()
    }

    fn cfg(w: usize, h: usize) -> LabelGenConfig {
        LabelGenConfig::new(GridSpec::new(w, h, 8.0).unwrap(), 1.5, 1.0).unwrap()
    }

    /// Image point at the center of grid cell `(x, y)` (stride 8).
    fn at(x: f64, y: f64) -> Keypoint {
        Keypoint::visible((x + 0.5) * 8.0, (y + 0.5) * 8.0)
    }

    fn person(a: Option<Keypoint>, b: Option<Keypoint>) -> PersonAnnotation {
        PersonAnnotation::new(vec![a.unwrap_or(Keypoint::ABSENT), b.unwrap_or(Keypoint::ABSENT)])
    }

    #[test]
    fn defaults() {
        let c = LabelGenConfig::for_grid(GridSpec::new(4, 4, 8.0).unwrap());
        assert_eq!(c.sigma, 0.875);
        assert_eq!(c.limb_width, 1.0);
        assert!(LabelGenConfig::new(c.grid, 0.0, 1.0).is_err());
        assert!(LabelGenConfig::new(c.grid, 1.0, -1.0).is_err());
    }

    #[test]
    fn empty_scene_is_all_zero() {
        let c = cfg(12, 10);
        let s = two_part_skeleton();
        let l = generate_labels(&[], &[], &s, &c).unwrap();
        assert!(l.maps.iter().all(|m| m.values().iter().all(|v| *v == 0.0)));
        assert!(l.pafs.iter().all(|p| p.values().iter().all(|v| *v == [0.0, 0.0])));
        assert_eq!(l.mask.count_zeros(), 0);
    }

    #[test]
    fn single_peak_is_one_and_decreasing() {
        let c = cfg(20, 20);
        let s = two_part_skeleton();
        let maps = gen_confidence_maps(&[person(Some(at(9.0, 7.0)), None)], &s, &c);
        let m = &maps[0];
        assert_eq!(m.get(9, 7), 1.0);
        for r in 1..5usize {
            assert!(m.get(9 + r, 7) < m.get(9 + r - 1, 7) || m.get(9 + r, 7) == 0.0);
            assert!(m.get(9, 7 + r) <= m.get(9, 7 + r - 1));
        }
        assert!(maps[1].values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn two_peaks_take_the_max_at_the_midpoint() {
        let c = cfg(30, 10);
        let s = two_part_skeleton();
        let d = 6.0;
        let persons = [person(Some(at(8.0, 4.0)), None), person(Some(at(8.0 + d, 4.0)), None)];
        let maps = gen_confidence_maps(&persons, &s, &c);
        let expected = (-(d / 2.0) * (d / 2.0) / (2.0 * 1.5 * 1.5)).exp() as f32;
        assert_eq!(maps[0].get(11, 4), expected);
    }

    #[test]
    fn gaussian_is_truncated_beyond_three_sigma() {
        let c = cfg(30, 10);
        let s = two_part_skeleton();
        let maps = gen_confidence_maps(&[person(Some(at(10.0, 4.0)), None)], &s, &c);
        assert!(maps[0].get(14, 4) > 0.0); // 4 cells < 4.5
        assert_eq!(maps[0].get(15, 4), 0.0); // 5 cells > 4.5
    }

    #[test]
    fn horizontal_limb() {
        let c = cfg(16, 12);
        let s = two_part_skeleton();
        let (pafs, diag) = gen_pafs(&[person(Some(at(2.0, 5.0)), Some(at(10.0, 5.0)))], &s, &c);
        assert_eq!(diag.generated, 1);
        let f = &pafs[0];
        for x in 2..=10 {
            assert_eq!(f.get(x, 5), [1.0, 0.0]);
            assert_eq!(f.get(x, 4), [1.0, 0.0]);
            assert_eq!(f.get(x, 6), [1.0, 0.0]);
        }
        assert_eq!(f.get(6, 7), [0.0, 0.0]);
        assert_eq!(f.get(1, 5), [0.0, 0.0]);
        assert_eq!(f.get(11, 5), [0.0, 0.0]);
    }

    #[test]
    fn missing_endpoint_generates_nothing() {
        let c = cfg(16, 12);
        let s = two_part_skeleton();
        let (pafs, diag) = gen_pafs(&[person(Some(at(2.0, 5.0)), None)], &s, &c);
        assert!(pafs[0].values().iter().all(|v| *v == [0.0, 0.0]));
        assert_eq!(diag.missing_endpoint, 1);
        assert_eq!(diag.generated, 0);
    }

    #[test]
    fn degenerate_limb_is_counted() {
        let c = cfg(16, 12);
        let s = two_part_skeleton();
        let (pafs, diag) = gen_pafs(&[person(Some(at(3.0, 3.0)), Some(at(3.0, 3.0)))], &s, &c);
        assert_eq!(diag.degenerate, 1);
        assert!(pafs[0].values().iter().all(|v| *v == [0.0, 0.0]));
    }

    #[test]
    fn overlapping_limbs_are_averaged() {
        let c = cfg(16, 16);
        let s = two_part_skeleton();
        let persons = [
            person(Some(at(2.0, 6.0)), Some(at(12.0, 6.0))),
            person(Some(at(6.0, 2.0)), Some(at(6.0, 12.0))),
        ];
        let (pafs, _) = gen_pafs(&persons, &s, &c);
        assert_eq!(pafs[0].get(6, 6), [0.5, 0.5]);
        assert_eq!(pafs[0].get(10, 6), [1.0, 0.0]);
        assert_eq!(pafs[0].get(6, 10), [0.0, 1.0]);
        let cov = paf_coverage(&persons, &s, &c);
        assert_eq!(cov[0][c.grid.index(6, 6)], 2);
        assert_eq!(cov[0][c.grid.index(10, 6)], 1);
    }

    #[test]
    fn diagonal_limb_vectors_are_unit() {
        let c = cfg(20, 20);
        let s = two_part_skeleton();
        let (pafs, _) = gen_pafs(&[person(Some(at(2.3, 3.1)), Some(at(15.7, 11.9)))], &s, &c);
        let mut nonzero = 0;
        for v in pafs[0].values() {
            let n = norm(*v);
            assert!(n == 0.0 || (n - 1.0).abs() < 1e-6);
            nonzero += usize::from(n > 0.0);
        }
        assert!(nonzero > 20);
    }

    #[test]
    fn rejects_wrong_keypoint_count_and_non_finite() {
        let c = cfg(8, 8);
        let s = two_part_skeleton();
        let short = PersonAnnotation::new(vec![at(1.0, 1.0)]);
        assert!(generate_labels(&[short], &[], &s, &c).is_err());
        let nan = person(Some(Keypoint::visible(f64::NAN, 1.0)), None);
        assert!(generate_labels(&[nan], &[], &s, &c).is_err());
    }

    #[test]
    fn generate_labels_applies_the_mask() {
        let c = cfg(10, 10);
        let s = two_part_skeleton();
        let l = generate_labels(&[], &[IgnoreRegion::rect(0.0, 0.0, 40.0, 40.0)], &s, &c).unwrap();
        assert_eq!(l.mask.count_zeros(), 25);
        assert_eq!(l.parts(), 2);
        assert_eq!(l.limbs(), 1);
    }
}
