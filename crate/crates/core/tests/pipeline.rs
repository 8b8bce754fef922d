use paflabel::correction::{correct_labels, CorrectionScope};
use paflabel::field::{norm, GridSpec};
use paflabel::labelgen::LabelGenConfig;
use paflabel::losses::masked_l2;
use paflabel::parser::{parse_labels, ParserConfig, PoseResult};
use paflabel::synthetic::{
    complete_labels, gen_scene, gen_scene_with, inject_failures, oracle_teacher, scene_labels, single_coverage,
    CorruptionConfig, OracleConfig, SceneConfig,
};
use paflabel::{PersonAnnotation, SkeletonSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const DIMS: (u32, u32) = (1024, 768);

fn cfg() -> LabelGenConfig {
    LabelGenConfig::for_grid(GridSpec::for_image(DIMS.0, DIMS.1, 8.0).unwrap())
}

fn matches_within_one_cell(pose: &PoseResult, person: &PersonAnnotation, stride: f64) -> bool {
    person.keypoints.iter().enumerate().all(|(j, k)| {
        if !k.state.is_labeled() {
            return pose.parts[j].is_none();
        }
        match &pose.parts[j] {
            Some(p) => (p.x - k.x).hypot(p.y - k.y) <= stride,
            None => false,
        }
    })
}

#[test]
fn separated_scenes_parse_back_to_their_annotations() {
    let sk = SkeletonSpec::body18();
    let c = cfg();
    for seed in 0..25 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scene = gen_scene(&mut rng, 3, DIMS, &sk).unwrap();
        let labels = scene_labels(&scene, &sk, &c).unwrap();
        let poses = parse_labels(&labels, &sk, &ParserConfig::default()).unwrap();
        assert_eq!(poses.len(), scene.persons.len(), "seed {seed}");
        for person in &scene.persons {
            assert!(
                poses.iter().any(|p| matches_within_one_cell(p, person, 8.0)),
                "seed {seed}: person not recovered"
            );
        }
    }
}

#[test]
fn oracle_correction_recovers_complete_labels() {
    let sk = SkeletonSpec::body18();
    let c = cfg();
    let scene_cfg = SceneConfig {
        overlap_prob: 0.5,
        crowd_prob: 0.8,
        ..SceneConfig::default()
    };
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scene = gen_scene_with(&mut rng, 1 + (seed as usize % 4), DIMS, &sk, &scene_cfg).unwrap();
        let corruption = inject_failures(
            &scene,
            &sk,
            &CorruptionConfig {
                seed,
                ..CorruptionConfig::default()
            },
        )
        .unwrap();
        let corrupted = scene_labels(&corruption.scene, &sk, &c).unwrap();
        let truth = complete_labels(&corruption.reference, &sk, &c).unwrap();
        let teacher = oracle_teacher(&corruption.reference, &sk, &c, &OracleConfig::default()).unwrap();
        let corrected = correct_labels(&corrupted, &teacher, CorrectionScope::Both).unwrap();
        assert_eq!(corrected.maps, truth.maps, "seed {seed}");
        let single = single_coverage(&corruption.reference, &sk, &c);
        let mut discrepancy = 0.0;
        for (a, b) in corrected.pafs.iter().zip(&truth.pafs) {
            for ((u, v), &keep) in a.values().iter().zip(b.values()).zip(single.values()) {
                if keep {
                    discrepancy += norm([u[0] - v[0], u[1] - v[1]]).powi(2);
                }
            }
        }
        assert!(discrepancy <= 1e-9, "seed {seed}: {discrepancy}");

        let before = masked_l2(&corrupted, &truth, &corrupted.mask).unwrap().total;
        let after = masked_l2(&corrected, &truth, &corrupted.mask).unwrap().total;
        assert!(after <= before);
        if !corruption.ledger.is_empty() {
            assert!(after < before, "seed {seed}: {after} vs {before}");
        }
    }
}
