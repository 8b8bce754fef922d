use paflabel::augment::{apply_augment, AffineMap, AugmentParams};
use paflabel::correction::{correct_labels, CorrectionScope};
use paflabel::field::{norm, sample_bilinear, BinaryMask, GridSpec, LabelSet, ScalarField, VectorField};
use paflabel::labelgen::{generate_labels, LabelGenConfig};
use paflabel::losses::masked_l2;
use paflabel::metrics::compute_oks;
use paflabel::parser::{PartDetection, PoseResult};
use paflabel::{Keypoint, PersonAnnotation, SkeletonSpec, Visibility};
use proptest::prelude::*;

const SIDE: u32 = 160;
const STRIDE: f64 = 8.0;

fn grid() -> GridSpec {
    GridSpec::for_image(SIDE, SIDE, STRIDE).unwrap()
}

fn cfg() -> LabelGenConfig {
    LabelGenConfig::for_grid(grid())
}

fn keypoint() -> impl Strategy<Value = Keypoint> {
    (1.0..f64::from(SIDE) - 1.0, 1.0..f64::from(SIDE) - 1.0, 0u8..3).prop_map(|(x, y, v)| Keypoint {
        x,
        y,
        state: Visibility::from_coco_flag(i64::from(v)).unwrap(),
    })
}

fn person() -> impl Strategy<Value = PersonAnnotation> {
    prop::collection::vec(keypoint(), 18).prop_map(PersonAnnotation::new)
}

fn persons() -> impl Strategy<Value = Vec<PersonAnnotation>> {
    prop::collection::vec(person(), 0..4)
}

fn unit_disk() -> impl Strategy<Value = [f32; 2]> {
    (0.0..std::f64::consts::TAU, 0.0..=1.0f64).prop_map(|(a, r)| [(r * a.cos()) as f32, (r * a.sin()) as f32])
}

fn labelset(w: usize, h: usize) -> impl Strategy<Value = LabelSet> {
    let g = GridSpec::new(w, h, STRIDE).unwrap();
    let n = w * h;
    (
        prop::collection::vec(prop::collection::vec(0.0..=1.0f32, n), 2),
        prop::collection::vec(prop::collection::vec(unit_disk(), n), 2),
        prop::collection::vec(any::<bool>(), n),
    )
        .prop_map(move |(maps, pafs, mask)| {
            LabelSet::new(
                maps.into_iter().map(|v| ScalarField::new(g, v).unwrap()).collect(),
                pafs.into_iter().map(|v| VectorField::new(g, v).unwrap()).collect(),
                BinaryMask::new(g, mask).unwrap(),
            )
            .unwrap()
        })
}

fn close(a: f32, b: f32) -> bool {
    (a - b).abs() <= 1e-6
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_labels_stay_in_range(ps in persons()) {
        let sk = SkeletonSpec::body18();
        let l = generate_labels(&ps, &[], &sk, &cfg()).unwrap();
        for m in &l.maps {
            prop_assert!(m.values().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        for p in &l.pafs {
            prop_assert!(p.values().iter().all(|v| norm(*v) <= 1.0 + 1e-6));
        }
    }

    #[test]
    fn generation_ignores_person_order(ps in persons()) {
        let sk = SkeletonSpec::body18();
        let a = generate_labels(&ps, &[], &sk, &cfg()).unwrap();
        let rev: Vec<_> = ps.iter().rev().cloned().collect();
        let b = generate_labels(&rev, &[], &sk, &cfg()).unwrap();
        prop_assert_eq!(&a.maps, &b.maps);
        for (u, v) in a.pafs.iter().zip(&b.pafs) {
            for (p, q) in u.values().iter().zip(v.values()) {
                prop_assert!(close(p[0], q[0]) && close(p[1], q[1]));
            }
        }
    }

    #[test]
    fn removing_a_keypoint_never_adds_signal(ps in persons(), who in any::<prop::sample::Index>(), part in 0usize..18) {
        prop_assume!(!ps.is_empty());
        let sk = SkeletonSpec::body18();
        let full = generate_labels(&ps, &[], &sk, &cfg()).unwrap();
        let mut fewer = ps.clone();
        fewer[who.index(ps.len())].keypoints[part] = Keypoint::ABSENT;
        let less = generate_labels(&fewer, &[], &sk, &cfg()).unwrap();
        for (a, b) in less.maps.iter().zip(&full.maps) {
            prop_assert!(a.values().iter().zip(b.values()).all(|(x, y)| x <= y));
        }
        for (a, b) in less.pafs.iter().zip(&full.pafs) {
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!(norm(*x) == 0.0 || norm(*y) > 0.0);
            }
        }
    }

    #[test]
    fn whole_cell_shifts_shift_the_labels(ps in persons(), dx in 0usize..4, dy in 0usize..4) {
        let sk = SkeletonSpec::body18();
        let a = generate_labels(&ps, &[], &sk, &cfg()).unwrap();
        let moved: Vec<PersonAnnotation> = ps
            .iter()
            .map(|p| {
                let mut p = p.clone();
                for k in &mut p.keypoints {
                    k.x += dx as f64 * STRIDE;
                    k.y += dy as f64 * STRIDE;
                }
                p
            })
            .collect();
        let big = GridSpec::new(grid().width() + dx, grid().height() + dy, STRIDE).unwrap();
        let b = generate_labels(&moved, &[], &sk, &LabelGenConfig::for_grid(big)).unwrap();
        let g = grid();
        for y in 0..g.height() {
            for x in 0..g.width() {
                for (m, n) in a.maps.iter().zip(&b.maps) {
                    prop_assert!(close(m.get(x, y), n.get(x + dx, y + dy)));
                }
                for (m, n) in a.pafs.iter().zip(&b.pafs) {
                    let (p, q) = (m.get(x, y), n.get(x + dx, y + dy));
                    prop_assert!(close(p[0], q[0]) && close(p[1], q[1]));
                }
            }
        }
    }

    #[test]
    fn flipping_mirrors_the_labels(ps in persons()) {
        let sk = SkeletonSpec::body18();
        let mut params = AugmentParams::identity(SIDE);
        params.flip = true;
        let flipped = apply_augment(&ps, &[], (SIDE, SIDE), &params, &sk).unwrap();
        let a = generate_labels(&ps, &[], &sk, &cfg()).unwrap();
        let b = generate_labels(&flipped.persons, &[], &sk, &cfg()).unwrap();
        let perm = sk.flip_permutation();
        let g = grid();
        let mirror = |x: usize| g.width() - 1 - x;
        for y in 0..g.height() {
            for x in 0..g.width() {
                for (j, m) in a.maps.iter().enumerate() {
                    prop_assert!(close(m.get(x, y), b.maps[perm[j]].get(mirror(x), y)));
                }
                for (c, &(s, t)) in sk.limbs().iter().enumerate() {
                    let (fs, ft) = (perm[s], perm[t]);
                    let (c2, sign) = match sk.limbs().iter().position(|&l| l == (fs, ft)) {
                        Some(c2) => (c2, 1.0),
                        None => (sk.limbs().iter().position(|&l| l == (ft, fs)).unwrap(), -1.0),
                    };
                    let p = a.pafs[c].get(x, y);
                    let q = b.pafs[c2].get(mirror(x), y);
                    prop_assert!(close(-p[0] * sign, q[0]) && close(p[1] * sign, q[1]));
                }
            }
        }
    }

    #[test]
    fn affine_maps_invert(flip in any::<bool>(), rot in -180.0..180.0f64, scale in 0.3..2.0f64,
                          ox in -100.0..100.0f64, oy in -100.0..100.0f64, px in -500.0..500.0f64, py in -500.0..500.0f64) {
        let params = AugmentParams { flip, rotation: rot, scale, crop_origin: [ox, oy], crop_size: 368 };
        let map = params.affine(640);
        let inv = map.inverse().unwrap();
        let q = inv.apply(map.apply([px, py]));
        prop_assert!((q[0] - px).abs() < 1e-9 && (q[1] - py).abs() < 1e-9);
        let id = inv.after(&map);
        let e = AffineMap::IDENTITY;
        for i in 0..2 {
            prop_assert!((id.t[i] - e.t[i]).abs() < 1e-9);
            for j in 0..2 {
                prop_assert!((id.m[i][j] - e.m[i][j]).abs() < 1e-12);
            }
        }
        prop_assert!((map.determinant().abs() - scale * scale).abs() < 1e-9);
    }

    #[test]
    fn bilinear_reproduces_centers_and_linear_fields(w in 2usize..8, h in 2usize..8, a in -0.1..0.1f64,
                                                      b in -0.1..0.1f64, fx in 0.0..1.0f64, fy in 0.0..1.0f64) {
        let g = GridSpec::new(w, h, STRIDE).unwrap();
        let vals: Vec<[f32; 2]> = (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                [(a * x) as f32, (b * y) as f32]
            })
            .collect();
        let field = VectorField::new(g, vals).unwrap();
        for y in 0..h {
            for x in 0..w {
                let s = sample_bilinear(&field, [x as f64, y as f64]).unwrap();
                let v = field.get(x, y);
                prop_assert_eq!(s, [f64::from(v[0]), f64::from(v[1])]);
            }
        }
        let p = [fx * (w - 1) as f64, fy * (h - 1) as f64];
        let s = sample_bilinear(&field, p).unwrap();
        prop_assert!((s[0] - a * p[0]).abs() < 1e-6 && (s[1] - b * p[1]).abs() < 1e-6);
    }

    #[test]
    fn correction_is_a_pointwise_max_and_idempotent(gt in labelset(5, 4), t in labelset(5, 4)) {
        let lc = correct_labels(&gt, &t, CorrectionScope::Both).unwrap();
        for ((h, g), tm) in lc.maps.iter().zip(&gt.maps).zip(&t.maps) {
            for ((x, y), z) in h.values().iter().zip(g.values()).zip(tm.values()) {
                prop_assert_eq!(*x, y.max(*z));
            }
        }
        for ((l, g), tp) in lc.pafs.iter().zip(&gt.pafs).zip(&t.pafs) {
            for ((x, y), z) in l.values().iter().zip(g.values()).zip(tp.values()) {
                prop_assert_eq!(norm(*x), norm(*y).max(norm(*z)));
            }
        }
        prop_assert_eq!(correct_labels(&lc, &t, CorrectionScope::Both).unwrap(), lc);
    }

    #[test]
    fn maps_only_scope_keeps_ground_truth_pafs(gt in labelset(4, 3), t in labelset(4, 3)) {
        let lc = correct_labels(&gt, &t, CorrectionScope::MapsOnly).unwrap();
        prop_assert_eq!(&lc.pafs, &gt.pafs);
        let lc = correct_labels(&gt, &t, CorrectionScope::PafsOnly).unwrap();
        prop_assert_eq!(&lc.maps, &gt.maps);
    }

    #[test]
    fn masked_l2_is_a_symmetric_nonnegative_distance(a in labelset(4, 4), b in labelset(4, 4)) {
        let ab = masked_l2(&a, &b, &a.mask).unwrap();
        let ba = masked_l2(&b, &a, &a.mask).unwrap();
        prop_assert!(ab.total >= 0.0);
        prop_assert_eq!(ab, ba);
        prop_assert_eq!(masked_l2(&a, &a, &a.mask).unwrap().total, 0.0);
    }

    #[test]
    fn oks_is_one_for_exact_poses_and_shift_invariant(p in person(), dx in -300.0..300.0f64, dy in -300.0..300.0f64,
                                                      noise in 0.0..20.0f64) {
        let sk = SkeletonSpec::body18();
        prop_assume!(p.labeled_count() >= 2);
        let pose = |p: &PersonAnnotation, off: f64| PoseResult {
            parts: p
                .keypoints
                .iter()
                .map(|k| k.state.is_labeled().then_some(PartDetection { x: k.x + off, y: k.y, score: 1.0 }))
                .collect(),
            instance_score: 1.0,
        };
        let bbox = p.labeled_bbox().unwrap();
        prop_assume!((bbox[2] - bbox[0]) * (bbox[3] - bbox[1]) > 1.0);
        prop_assert_eq!(compute_oks(&pose(&p, 0.0), &p, &sk).unwrap(), 1.0);
        let base = compute_oks(&pose(&p, noise), &p, &sk).unwrap();
        prop_assert!((0.0..=1.0).contains(&base));
        let mut moved = p.clone();
        for k in &mut moved.keypoints {
            k.x += dx;
            k.y += dy;
        }
        let shifted = compute_oks(&pose(&moved, noise), &moved, &sk).unwrap();
        prop_assert!((base - shifted).abs() <= 1e-12);
    }
}
