//! Geometric augmentation of annotations: flip, rotate, scale, crop.
//!
//! The four steps compose into one affine map. Rotation and scaling act
//! about the crop center.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::annotation::{Keypoint, PersonAnnotation};
use crate::error::{Error, Result};
use crate::region::IgnoreRegion;
use crate::skeleton::SkeletonSpec;

pub const DEFAULT_CROP_SIZE: u32 = 368;

/// `p ↦ m·p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub m: [[f64; 2]; 2],
    pub t: [f64; 2],
}

impl AffineMap {
    pub const IDENTITY: AffineMap = AffineMap {
        m: [[1.0, 0.0], [0.0, 1.0]],
        t: [0.0, 0.0],
    };

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        [
            self.m[0][0] * p[0] + self.m[0][1] * p[1] + self.t[0],
            self.m[1][0] * p[0] + self.m[1][1] * p[1] + self.t[1],
        ]
    }

    /// `self ∘ inner`: apply `inner` first.
    pub fn after(&self, inner: &AffineMap) -> AffineMap {
        let a = &self.m;
        let b = &inner.m;
        let m = [
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ];
        let t = self.apply(inner.t);
        AffineMap { m, t }
    }

    pub fn determinant(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn inverse(&self) -> Option<AffineMap> {
        let d = self.determinant();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        let m = [
            [self.m[1][1] / d, -self.m[0][1] / d],
            [-self.m[1][0] / d, self.m[0][0] / d],
        ];
        let t = [
            -(m[0][0] * self.t[0] + m[0][1] * self.t[1]),
            -(m[1][0] * self.t[0] + m[1][1] * self.t[1]),
        ];
        Some(AffineMap { m, t })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub flip: bool,
    /// Degrees; positive turns +x toward +y.
    pub rotation: f64,
    pub scale: f64,
    /// Top-left corner of the crop window before rotation and scaling, in
    /// (flipped) image pixels.
    pub crop_origin: [f64; 2],
    pub crop_size: u32,
}

impl AugmentParams {
    /// Leaves coordinates unchanged; the crop covers `[0, crop_size)²`.
    pub fn identity(crop_size: u32) -> Self {
        Self {
            flip: false,
            rotation: 0.0,
            scale: 1.0,
            crop_origin: [0.0, 0.0],
            crop_size,
        }
    }

    fn half(&self) -> f64 {
        f64::from(self.crop_size) / 2.0
    }

    /// Center of rotation and scaling, in flipped image pixels.
    pub fn center(&self) -> [f64; 2] {
        [self.crop_origin[0] + self.half(), self.crop_origin[1] + self.half()]
    }

    fn rotate_scale(&self) -> [[f64; 2]; 2] {
        let (sin, cos) = self.rotation.to_radians().sin_cos();
        let s = self.scale;
        [[s * cos, -s * sin], [s * sin, s * cos]]
    }

    /// The composed map from source image pixels to crop pixels.
    pub fn affine(&self, image_width: u32) -> AffineMap {
        let flip = if self.flip {
            AffineMap {
                m: [[-1.0, 0.0], [0.0, 1.0]],
                t: [f64::from(image_width), 0.0],
            }
        } else {
            AffineMap::IDENTITY
        };
        let c = self.center();
        let h = self.half();
        let to_center = AffineMap {
            m: AffineMap::IDENTITY.m,
            t: [-c[0], -c[1]],
        };
        let rs = AffineMap {
            m: self.rotate_scale(),
            t: [h, h],
        };
        rs.after(&to_center).after(&flip)
    }
}

/// What the crop window is positioned around.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CropAnchor {
    /// Centroid of a uniformly chosen annotated person, falling back to the
    /// image center when nobody is annotated.
    RandomPerson,
    ImageCenter,
    /// Crop origin fixed at this point; no randomness.
    FixedOrigin([f64; 2]),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub flip_prob: f64,
    /// Rotation range in degrees.
    pub rotation: (f64, f64),
    pub scale: (f64, f64),
    pub crop_size: u32,
    pub anchor: CropAnchor,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            flip_prob: 0.5,
            rotation: (-40.0, 40.0),
            scale: (0.5, 1.1),
            crop_size: DEFAULT_CROP_SIZE,
            anchor: CropAnchor::RandomPerson,
        }
    }
}

impl AugmentConfig {
    /// Ranges that always yield [`AugmentParams::identity`].
    pub fn identity(crop_size: u32) -> Self {
        Self {
            flip_prob: 0.0,
            rotation: (0.0, 0.0),
            scale: (1.0, 1.0),
            crop_size,
            anchor: CropAnchor::FixedOrigin([0.0, 0.0]),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::domain(format!(
                "flip_prob must lie in [0, 1], got {}",
                self.flip_prob
            )));
        }
        let (r0, r1) = self.rotation;
        if !(r0.is_finite() && r1.is_finite() && r0 <= r1) {
            return Err(Error::domain(format!("invalid rotation range [{r0}, {r1}]")));
        }
        let (s0, s1) = self.scale;
        if !(s0.is_finite() && s1.is_finite() && s0 > 0.0 && s0 <= s1) {
            return Err(Error::domain(format!("invalid scale range [{s0}, {s1}]")));
        }
        if self.crop_size == 0 {
            return Err(Error::domain("crop_size must be > 0"));
        }
        if let CropAnchor::FixedOrigin(o) = self.anchor {
            if !(o[0].is_finite() && o[1].is_finite()) {
                return Err(Error::domain("crop origin must be finite"));
            }
        }
        Ok(())
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Draw augmentation parameters. The crop is placed so the anchor lands at a
/// uniformly random position inside it.
pub fn sample_params<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &AugmentConfig,
    persons: &[PersonAnnotation],
    image_dims: (u32, u32),
) -> Result<AugmentParams> {
    cfg.validate()?;
    let flip = cfg.flip_prob > 0.0 && rng.random_bool(cfg.flip_prob);
    let rotation = uniform(rng, cfg.rotation);
    let scale = uniform(rng, cfg.scale);
    let mut params = AugmentParams {
        flip,
        rotation,
        scale,
        crop_origin: [0.0, 0.0],
        crop_size: cfg.crop_size,
    };

    let center = [f64::from(image_dims.0) / 2.0, f64::from(image_dims.1) / 2.0];
    let anchor = match cfg.anchor {
        CropAnchor::FixedOrigin(o) => {
            params.crop_origin = o;
            return Ok(params);
        }
        CropAnchor::ImageCenter => center,
        CropAnchor::RandomPerson => {
            let centroids: Vec<[f64; 2]> = persons.iter().filter_map(|p| p.centroid()).collect();
            if centroids.is_empty() {
                center
            } else {
                centroids[rng.random_range(0..centroids.len())]
            }
        }
    };
    let anchor = if flip {
        [f64::from(image_dims.0) - anchor[0], anchor[1]]
    } else {
        anchor
    };
    // Solve for the center that sends the anchor to a random crop position.
    let size = f64::from(cfg.crop_size);
    let target = [rng.random_range(0.0..size), rng.random_range(0.0..size)];
    let h = size / 2.0;
    let inv = AffineMap {
        m: params.rotate_scale(),
        t: [0.0, 0.0],
    }
    .inverse()
    .expect("scale is positive");
    let offset = inv.apply([target[0] - h, target[1] - h]);
    params.crop_origin = [anchor[0] - offset[0] - h, anchor[1] - offset[1] - h];
    Ok(params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Augmented {
    pub persons: Vec<PersonAnnotation>,
    pub ignore_regions: Vec<IgnoreRegion>,
    /// Always `(crop_size, crop_size)`.
    pub dims: (u32, u32),
}

/// Map annotations and regions into the crop. On flip, left/right parts swap;
/// keypoints landing outside `[0, crop_size)²` become absent.
pub fn apply_augment(
    persons: &[PersonAnnotation],
    ignore_regions: &[IgnoreRegion],
    image_dims: (u32, u32),
    params: &AugmentParams,
    skeleton: &SkeletonSpec,
) -> Result<Augmented> {
    if params.crop_size == 0 {
        return Err(Error::domain("crop_size must be > 0"));
    }
    let map = params.affine(image_dims.0);
    let size = f64::from(params.crop_size);
    let perm = if params.flip {
        skeleton.flip_permutation()
    } else {
        (0..skeleton.parts()).collect()
    };
    let area_scale = params.scale * params.scale;

    let mut out = Vec::with_capacity(persons.len());
    for (i, p) in persons.iter().enumerate() {
        if p.keypoints.len() != skeleton.parts() {
            return Err(Error::validation(format!(
                "person {i} has {} keypoints, skeleton has {} parts",
                p.keypoints.len(),
                skeleton.parts()
            )));
        }
        let mut keypoints = vec![Keypoint::ABSENT; p.keypoints.len()];
        for (j, k) in p.keypoints.iter().enumerate() {
            if !k.state.is_labeled() {
                continue;
            }
            let [x, y] = map.apply(k.pos());
            if (0.0..size).contains(&x) && (0.0..size).contains(&y) {
                keypoints[perm[j]] = Keypoint { x, y, state: k.state };
            }
        }
        out.push(PersonAnnotation {
            keypoints,
            area: p.area.map(|a| a * area_scale),
        });
    }
    let ignore_regions = ignore_regions.iter().map(|r| r.map_points(|p| map.apply(p))).collect();
    Ok(Augmented {
        persons: out,
        ignore_regions,
        dims: (params.crop_size, params.crop_size),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: [f64; 2], b: [f64; 2], tol: f64) -> bool {
        (a[0] - b[0]).abs() <= tol && (a[1] - b[1]).abs() <= tol
    }

    fn two_part() -> SkeletonSpec {
        SkeletonSpec::new(
            vec!["left_hand".into(), "right_hand".into()],
            vec![(0, 1)],
            vec![(0, 1)],
            vec![0.1, 0.1],
        )
        .unwrap()
    }

    fn person(a: [f64; 2], b: [f64; 2]) -> PersonAnnotation {
        PersonAnnotation {
            keypoints: vec![Keypoint::visible(a[0], a[1]), Keypoint::visible(b[0], b[1])],
            area: Some(100.0),
        }
    }

    #[test]
    fn identity_params_change_nothing() {
        let s = two_part();
        let persons = vec![person([10.5, 20.25], [100.0, 3.0])];
        let regions = vec![IgnoreRegion::rect(5.0, 5.0, 50.0, 60.0)];
        let out = apply_augment(&persons, &regions, (368, 368), &AugmentParams::identity(368), &s).unwrap();
        assert_eq!(out.persons, persons);
        assert_eq!(out.ignore_regions, regions);
        assert_eq!(out.dims, (368, 368));
    }

    #[test]
    fn degenerate_config_samples_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = sample_params(&mut rng, &AugmentConfig::identity(368), &[], (640, 480)).unwrap();
        assert_eq!(p, AugmentParams::identity(368));
    }

    #[test]
    fn quarter_turn_about_the_crop_center() {
        let params = AugmentParams {
            rotation: 90.0,
            crop_origin: [-184.0, -184.0],
            ..AugmentParams::identity(368)
        };
        let q = params.affine(0).apply([10.0, 0.0]);
        assert!(close([q[0] - 184.0, q[1] - 184.0], [0.0, 10.0], 1e-9));
    }

    #[test]
    fn double_flip_restores_parts() {
        let s = two_part();
        let persons = vec![person([10.0, 20.0], [30.0, 40.0])];
        let params = AugmentParams {
            flip: true,
            ..AugmentParams::identity(100)
        };
        let once = apply_augment(&persons, &[], (100, 100), &params, &s).unwrap();
        assert_eq!(once.persons[0].keypoints[1].pos(), [90.0, 20.0]);
        assert_eq!(once.persons[0].keypoints[0].pos(), [70.0, 40.0]);
        let twice = apply_augment(&once.persons, &[], (100, 100), &params, &s).unwrap();
        assert_eq!(twice.persons, persons);
    }

    #[test]
    fn keypoints_leaving_the_crop_become_absent() {
        let s = two_part();
        let persons = vec![person([10.0, 10.0], [90.0, 10.0])];
        let params = AugmentParams {
            crop_origin: [50.0, 0.0],
            ..AugmentParams::identity(64)
        };
        let out = apply_augment(&persons, &[], (100, 100), &params, &s).unwrap();
        assert!(!out.persons[0].keypoints[0].state.is_labeled());
        assert_eq!(out.persons[0].keypoints[1].pos(), [40.0, 10.0]);
    }

    #[test]
    fn scale_multiplies_area() {
        let s = two_part();
        let params = AugmentParams {
            scale: 0.5,
            ..AugmentParams::identity(368)
        };
        let out = apply_augment(&[person([184.0, 184.0], [190.0, 184.0])], &[], (368, 368), &params, &s).unwrap();
        assert_eq!(out.persons[0].area, Some(25.0));
        assert!(close(out.persons[0].keypoints[1].pos(), [187.0, 184.0], 1e-12));
    }

    #[test]
    fn inverse_round_trips() {
        let params = AugmentParams {
            flip: true,
            rotation: 17.0,
            scale: 0.8,
            crop_origin: [12.0, -30.0],
            crop_size: 368,
        };
        let a = params.affine(640);
        let inv = a.inverse().unwrap();
        let p = [123.4, 56.7];
        assert!(close(inv.apply(a.apply(p)), p, 1e-9));
        assert!(close(a.after(&inv).apply(p), p, 1e-9));
    }

    #[test]
    fn sampling_is_deterministic_and_in_range() {
        let cfg = AugmentConfig::default();
        let persons = vec![person([300.0, 200.0], [320.0, 260.0])];
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            sample_params(&mut rng, &cfg, &persons, (640, 480)).unwrap()
        };
        assert_eq!(draw(11), draw(11));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (mut lo, mut hi) = (f64::MAX, f64::MIN);
        for _ in 0..10_000 {
            let p = sample_params(&mut rng, &cfg, &persons, (640, 480)).unwrap();
            assert!((0.5..=1.1).contains(&p.scale));
            lo = lo.min(p.rotation);
            hi = hi.max(p.rotation);
            // anchor inside the crop
            let c = p.affine(640).apply(persons[0].centroid().unwrap());
            assert!((0.0..368.0).contains(&c[0]) && (0.0..368.0).contains(&c[1]), "{c:?}");
        }
        assert!((-40.0..=-38.0).contains(&lo), "{lo}");
        assert!((38.0..=40.0).contains(&hi), "{hi}");
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let bad = AugmentConfig {
            scale: (0.0, 1.0),
            ..AugmentConfig::default()
        };
        assert!(sample_params(&mut rng, &bad, &[], (10, 10)).is_err());
    }
}
