use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// COCO per-keypoint OKS sigmas, in COCO keypoint order.
const COCO_SIGMAS: [f64; 17] = [
    0.026, 0.025, 0.025, 0.035, 0.035, 0.079, 0.079, 0.072, 0.072, 0.062, 0.062, 0.107, 0.107, 0.087, 0.087, 0.089,
    0.089,
];

const COCO_NAMES: [&str; 17] = [
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

const BODY18_NAMES: [&str; 18] = [
    "nose",
    "neck",
    "right_shoulder",
    "right_elbow",
    "right_wrist",
    "left_shoulder",
    "left_elbow",
    "left_wrist",
    "right_hip",
    "right_knee",
    "right_ankle",
    "left_hip",
    "left_knee",
    "left_ankle",
    "right_eye",
    "left_eye",
    "right_ear",
    "left_ear",
];

const BODY18_LIMBS: [(usize, usize); 19] = [
    (1, 2),
    (1, 5),
    (2, 3),
    (3, 4),
    (5, 6),
    (6, 7),
    (1, 8),
    (8, 9),
    (9, 10),
    (1, 11),
    (11, 12),
    (12, 13),
    (1, 0),
    (0, 14),
    (14, 16),
    (0, 15),
    (15, 17),
    (2, 16),
    (5, 17),
];

const COCO_LIMBS: [(usize, usize); 19] = [
    (15, 13),
    (13, 11),
    (16, 14),
    (14, 12),
    (11, 12),
    (5, 11),
    (6, 12),
    (5, 6),
    (5, 7),
    (6, 8),
    (7, 9),
    (8, 10),
    (1, 2),
    (0, 1),
    (0, 2),
    (1, 3),
    (2, 4),
    (3, 5),
    (4, 6),
];

/// Part list, directed limb list, left/right swap pairs and OKS constants.
///
/// `oks_kappas[i]` is the per-part falloff κ in `exp(−d² / (2·s²·κ²))`;
/// it equals twice the COCO "sigma" for the same keypoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonSpec {
    part_names: Vec<String>,
    limbs: Vec<(usize, usize)>,
    flip_pairs: Vec<(usize, usize)>,
    oks_kappas: Vec<f64>,
}

impl SkeletonSpec {
    pub fn new(
        part_names: Vec<String>,
        limbs: Vec<(usize, usize)>,
        flip_pairs: Vec<(usize, usize)>,
        oks_kappas: Vec<f64>,
    ) -> Result<Self> {
        let parts = part_names.len();
        if parts == 0 {
            return Err(Error::domain("skeleton needs at least one part"));
        }
        let mut seen = HashSet::new();
        for &(a, b) in &limbs {
            if a >= parts || b >= parts {
                return Err(Error::domain(format!(
                    "limb ({a}, {b}) references a part outside [0, {parts})"
                )));
            }
            if a == b {
                return Err(Error::domain(format!("limb ({a}, {b}) is a self loop")));
            }
            if !seen.insert((a, b)) {
                return Err(Error::domain(format!("duplicate limb ({a}, {b})")));
            }
        }
        let mut used = HashSet::new();
        for &(l, r) in &flip_pairs {
            if l >= parts || r >= parts || l == r {
                return Err(Error::domain(format!("invalid flip pair ({l}, {r})")));
            }
            if !used.insert(l) || !used.insert(r) {
                return Err(Error::domain(format!("flip pair ({l}, {r}) overlaps another pair")));
            }
        }
        if oks_kappas.len() != parts {
            return Err(Error::shape("oks kappa count", parts, oks_kappas.len()));
        }
        if let Some(k) = oks_kappas.iter().find(|k| !(k.is_finite() && **k > 0.0)) {
            return Err(Error::domain(format!("oks kappa must be > 0, got {k}")));
        }
        Ok(Self {
            part_names,
            limbs,
            flip_pairs,
            oks_kappas,
        })
    }

    /// 18 parts (COCO keypoints plus a neck at the shoulder midpoint) and 19 limbs.
    pub fn body18() -> Self {
        let kappa = |name: &str| {
            let coco = if name == "neck" { "left_shoulder" } else { name };
            let i = COCO_NAMES.iter().position(|n| *n == coco).unwrap();
            2.0 * COCO_SIGMAS[i]
        };
        Self::new(
            BODY18_NAMES.iter().map(|s| s.to_string()).collect(),
            BODY18_LIMBS.to_vec(),
            vec![(5, 2), (6, 3), (7, 4), (11, 8), (12, 9), (13, 10), (15, 14), (17, 16)],
            BODY18_NAMES.iter().map(|n| kappa(n)).collect(),
        )
        .expect("built-in skeleton is valid")
    }

    /// The plain 17-keypoint COCO skeleton.
    pub fn coco17() -> Self {
        Self::new(
            COCO_NAMES.iter().map(|s| s.to_string()).collect(),
            COCO_LIMBS.to_vec(),
            vec![(1, 2), (3, 4), (5, 6), (7, 8), (9, 10), (11, 12), (13, 14), (15, 16)],
            COCO_SIGMAS.iter().map(|s| 2.0 * s).collect(),
        )
        .expect("built-in skeleton is valid")
    }

    pub fn parts(&self) -> usize {
        self.part_names.len()
    }

    pub fn part_names(&self) -> &[String] {
        &self.part_names
    }

    pub fn part_index(&self, name: &str) -> Option<usize> {
        self.part_names.iter().position(|n| n == name)
    }

    pub fn limbs(&self) -> &[(usize, usize)] {
        &self.limbs
    }

    pub fn flip_pairs(&self) -> &[(usize, usize)] {
        &self.flip_pairs
    }

    pub fn oks_kappas(&self) -> &[f64] {
        &self.oks_kappas
    }

    /// `perm[i]` is the part that part `i` becomes under a horizontal flip.
    pub fn flip_permutation(&self) -> Vec<usize> {
        let mut perm: Vec<usize> = (0..self.parts()).collect();
        for &(l, r) in &self.flip_pairs {
            perm[l] = r;
            perm[r] = l;
        }
        perm
    }

    /// Index mapping from COCO keypoint order into this skeleton, by part name.
    pub(crate) fn coco_mapping(&self) -> Option<Vec<usize>> {
        COCO_NAMES.iter().map(|n| self.part_index(n)).collect()
    }
}

impl Default for SkeletonSpec {
    fn default() -> Self {
        Self::body18()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_have_expected_sizes() {
        let s = SkeletonSpec::body18();
        assert_eq!((s.parts(), s.limbs().len()), (18, 19));
        let c = SkeletonSpec::coco17();
        assert_eq!((c.parts(), c.limbs().len()), (17, 19));
    }

    #[test]
    fn flip_permutation_is_an_involution_that_swaps_sides() {
        for s in [SkeletonSpec::body18(), SkeletonSpec::coco17()] {
            let p = s.flip_permutation();
            for i in 0..s.parts() {
                assert_eq!(p[p[i]], i);
                let name = &s.part_names()[i];
                let other = &s.part_names()[p[i]];
                if let Some(rest) = name.strip_prefix("left_") {
                    assert_eq!(other, &format!("right_{rest}"));
                } else if !name.starts_with("right_") {
                    assert_eq!(name, other);
                }
            }
        }
    }

    #[test]
    fn validation_errors() {
        let names = || vec!["a".to_string(), "b".to_string()];
        assert!(SkeletonSpec::new(names(), vec![(0, 2)], vec![], vec![1.0, 1.0]).is_err());
        assert!(SkeletonSpec::new(names(), vec![(0, 1), (0, 1)], vec![], vec![1.0, 1.0]).is_err());
        assert!(SkeletonSpec::new(names(), vec![], vec![(0, 0)], vec![1.0, 1.0]).is_err());
        assert!(SkeletonSpec::new(names(), vec![], vec![], vec![1.0, 0.0]).is_err());
        assert!(SkeletonSpec::new(names(), vec![], vec![], vec![1.0]).is_err());
        let three = vec!["a".into(), "b".into(), "c".into()];
        assert!(SkeletonSpec::new(three, vec![], vec![(0, 1), (1, 2)], vec![1.0; 3]).is_err());
    }

    #[test]
    fn coco_mapping_covers_body18() {
        let m = SkeletonSpec::body18().coco_mapping().unwrap();
        assert_eq!(m[0], 0);
        assert_eq!(m[5], 5); // left shoulder
        assert_eq!(m[6], 2); // right shoulder
        assert_eq!(m[16], 10); // right ankle
    }
}
