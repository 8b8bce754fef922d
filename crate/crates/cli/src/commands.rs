use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use paflabel::correction::{correct_labels, correction_stats, CorrectionStats};
use paflabel::io::annotations::{read_annotations, write_annotations, ImageRecord};
use paflabel::io::render::{render_labels, render_poses, save_png};
use paflabel::io::results::{read_results, write_results};
use paflabel::io::tensor::{read_labelset, read_teacher, write_labelset, EXTENSION};
use paflabel::io::write_atomic;
use paflabel::labelgen::{generate_labels_with_diagnostics, PafDiagnostics};
use paflabel::losses::{masked_l2, unmasked_cells};
use paflabel::metrics::{evaluate, ImageAnnotations, ImagePoses};
use paflabel::parser::parse_labels;
use paflabel::synthetic::{gen_scene_with, inject_failures, oracle_teacher, CorruptionConfig, LedgerEntry, Scene};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::{CorrectArgs, EvalArgs, GenerateArgs, ParseArgs, RenderArgs, SynthArgs};

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// `*.plf` files in `dir`, sorted by name, with their stems.
fn label_files(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let entries = std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))?;
    let mut files = Vec::new();
    for e in entries {
        let path = e.with_context(|| format!("listing {}", dir.display()))?.path();
        if path.extension().and_then(|x| x.to_str()) == Some(EXTENSION) {
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .with_context(|| format!("non-UTF-8 file name {}", path.display()))?
                .to_string();
            files.push((stem, path));
        }
    }
    files.sort();
    Ok(files)
}

fn image_id(stem: &str) -> Result<u64> {
    stem.parse()
        .with_context(|| format!("label file name {stem:?} is not a numeric image id"))
}

fn label_name(id: u64) -> String {
    format!("{id}.{EXTENSION}")
}

pub fn generate(cfg: &mut RunConfig, a: &GenerateArgs) -> Result<()> {
    if let Some(s) = a.stride {
        cfg.labelgen.stride = s;
    }
    if let Some(s) = a.sigma {
        cfg.labelgen.sigma = Some(s);
    }
    if let Some(w) = a.limb_width {
        cfg.labelgen.limb_width = w;
    }
    let skeleton = cfg.skeleton.spec();
    let images = read_annotations(&a.annotations, &skeleton)?;
    create_dir(&a.out)?;
    let diags = images
        .par_iter()
        .map(|img| -> Result<PafDiagnostics> {
            let lc = cfg.labelgen.for_image(img.width, img.height)?;
            let (labels, diag) = generate_labels_with_diagnostics(&img.persons, &img.ignore_regions, &skeleton, &lc)
                .with_context(|| format!("image {}", img.id))?;
            write_labelset(&a.out.join(label_name(img.id)), &labels)?;
            Ok(diag)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = PafDiagnostics::default();
    diags.into_iter().for_each(|d| total += d);
    println!(
        "images={} limbs_generated={} limbs_skipped_missing_endpoint={} limbs_degenerate={}",
        images.len(),
        total.generated,
        total.missing_endpoint,
        total.degenerate
    );
    Ok(())
}

pub fn correct(cfg: &mut RunConfig, a: &CorrectArgs) -> Result<()> {
    if let Some(s) = a.scope {
        cfg.correction.scope = s;
    }
    let skeleton = cfg.skeleton.spec();
    let files = label_files(&a.gt)?;
    create_dir(&a.out)?;
    let stats = files
        .par_iter()
        .map(|(stem, gt_path)| -> Result<(CorrectionStats, f64, f64)> {
            let name = gt_path.file_name().expect("listed files have names");
            let teacher_path = a.teacher.join(name);
            if !teacher_path.is_file() {
                bail!("no teacher file {} for {}", teacher_path.display(), gt_path.display());
            }
            let gt = read_labelset(gt_path, Some(&skeleton))?;
            let teacher = read_teacher(&teacher_path, Some(&skeleton))?;
            let corrected =
                correct_labels(&gt, &teacher, cfg.correction.scope).with_context(|| format!("image {stem}"))?;
            write_labelset(&a.out.join(name), &corrected)?;
            let shift = masked_l2(&corrected, &gt, &gt.mask)?.total;
            let cells = unmasked_cells(&gt.mask);
            let mean = if cells > 0 { shift / cells as f64 } else { 0.0 };
            Ok((correction_stats(&gt, &corrected)?, shift, mean))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut maps, mut pafs, mut total) = (0, 0, 0.0);
    for ((stem, _), (s, shift, mean)) in files.iter().zip(&stats) {
        println!(
            "image={stem} map_cells_changed={} paf_cells_changed={} mean_map_delta={:.6} mean_paf_norm_delta={:.6} l2_sum={shift:.6} l2_mean={mean:.6e}",
            s.map_cells_changed, s.paf_cells_changed, s.mean_map_delta, s.mean_paf_norm_delta
        );
        maps += s.map_cells_changed;
        pafs += s.paf_cells_changed;
        total += shift;
    }
    println!(
        "images={} map_cells_changed={maps} paf_cells_changed={pafs} l2_sum={total:.6}",
        files.len()
    );
    Ok(())
}

pub fn parse(cfg: &mut RunConfig, a: &ParseArgs) -> Result<()> {
    let p = &mut cfg.parser;
    if let Some(v) = a.peak_threshold {
        p.peak_threshold = v;
    }
    if let Some(v) = a.n_samples {
        p.n_samples = v;
    }
    if let Some(v) = a.min_limb_score {
        p.min_limb_score = v;
    }
    if let Some(v) = a.min_positive_fraction {
        p.min_positive_fraction = v;
    }
    if let Some(v) = a.min_parts {
        p.min_parts = v;
    }
    cfg.parser.validate()?;
    let skeleton = cfg.skeleton.spec();
    let files = label_files(&a.labels)?;
    let results = files
        .par_iter()
        .map(|(stem, path)| -> Result<ImagePoses> {
            let image_id = image_id(stem)?;
            let labels = read_labelset(path, Some(&skeleton))?;
            let poses = parse_labels(&labels, &skeleton, &cfg.parser)?;
            Ok(ImagePoses { image_id, poses })
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_results(&a.out, &results)?;
    let n: usize = results.iter().map(|r| r.poses.len()).sum();
    println!("images={} poses={n}", results.len());
    Ok(())
}

pub fn eval(cfg: &RunConfig, a: &EvalArgs) -> Result<()> {
    let skeleton = cfg.skeleton.spec();
    let preds = read_results(&a.preds)?;
    let gts: Vec<ImageAnnotations> = read_annotations(&a.gt, &skeleton)?
        .iter()
        .map(ImageRecord::ground_truth)
        .collect();
    let report = evaluate(&preds, &gts, &skeleton, &cfg.eval)?;
    println!("{report}");
    let path = a.report.clone().unwrap_or_else(|| a.preds.with_extension("eval.txt"));
    write_atomic(&path, report.to_key_values().as_bytes())?;
    Ok(())
}

fn persons_range(s: &str) -> Result<(usize, usize)> {
    let parse = |t: &str| {
        t.trim()
            .parse::<usize>()
            .with_context(|| format!("bad person count {s:?}"))
    };
    let (lo, hi) = match s.split_once('-') {
        Some((lo, hi)) => (parse(lo)?, parse(hi)?),
        None => {
            let k = parse(s)?;
            (k, k)
        }
    };
    if lo > hi {
        bail!("empty person range {s:?}");
    }
    Ok((lo, hi))
}

#[derive(Serialize)]
struct LedgerRecord<'a> {
    image_id: u64,
    entries: &'a [LedgerEntry],
}

fn record(id: u64, scene: &Scene) -> ImageRecord {
    ImageRecord {
        id,
        width: scene.width,
        height: scene.height,
        file_name: None,
        persons: scene.persons.clone(),
        ignore_regions: scene.ignore_regions.clone(),
    }
}

pub fn synth(cfg: &mut RunConfig, a: &SynthArgs) -> Result<()> {
    let s = &mut cfg.synth;
    if let Some(n) = a.n_scenes {
        s.n_scenes = n;
    }
    if let Some(p) = &a.persons {
        (s.min_persons, s.max_persons) = persons_range(p)?;
    }
    if let Some(path) = &a.corrupt {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        s.corruption =
            toml::from_str::<CorruptionConfig>(&text).with_context(|| format!("parsing {}", path.display()))?;
    }
    let skeleton = cfg.skeleton.spec();
    let s = cfg.synth;
    let dims = (s.width, s.height);
    let lc = cfg.labelgen.for_image(s.width, s.height)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let jobs: Vec<(u64, usize, u64, u64)> = (1..=s.n_scenes as u64)
        .map(|id| {
            let k = rng.random_range(s.min_persons..=s.max_persons);
            (id, k, rng.random(), rng.random())
        })
        .collect();

    let teacher_dir = a.out.join("teacher");
    create_dir(&teacher_dir)?;
    let outputs = jobs
        .par_iter()
        .map(|&(id, k, scene_seed, corrupt_seed)| -> Result<_> {
            let mut scene_rng = ChaCha8Rng::seed_from_u64(scene_seed);
            let scene =
                gen_scene_with(&mut scene_rng, k, dims, &skeleton, &s.scene).with_context(|| format!("scene {id}"))?;
            let corruption = inject_failures(
                &scene,
                &skeleton,
                &CorruptionConfig {
                    seed: corrupt_seed,
                    ..s.corruption
                },
            )?;
            let teacher = oracle_teacher(&corruption.reference, &skeleton, &lc, &s.oracle)?;
            write_labelset(&teacher_dir.join(label_name(id)), &teacher)?;
            Ok((id, corruption))
        })
        .collect::<Result<Vec<_>>>()?;

    let corrupted: Vec<ImageRecord> = outputs.iter().map(|(id, c)| record(*id, &c.scene)).collect();
    let clean: Vec<ImageRecord> = outputs.iter().map(|(id, c)| record(*id, &c.reference)).collect();
    let ledger: Vec<LedgerRecord> = outputs
        .iter()
        .map(|(id, c)| LedgerRecord {
            image_id: *id,
            entries: &c.ledger,
        })
        .collect();
    write_annotations(&a.out.join("annotations.json"), &corrupted)?;
    write_annotations(&a.out.join("clean.json"), &clean)?;
    write_atomic(
        &a.out.join("ledger.json"),
        serde_json::to_string_pretty(&ledger)?.as_bytes(),
    )?;

    let (mut removed, mut translated, mut dropped) = (0, 0, 0);
    for (_, c) in &outputs {
        for e in &c.ledger {
            match e {
                LedgerEntry::KeypointRemoved { .. } => removed += 1,
                LedgerEntry::Translated { .. } => translated += 1,
                LedgerEntry::MaskDropped { .. } => dropped += 1,
            }
        }
    }
    let persons: usize = outputs.iter().map(|(_, c)| c.scene.persons.len()).sum();
    println!(
        "scenes={} persons={persons} keypoints_removed={removed} persons_translated={translated} masks_dropped={dropped}",
        outputs.len()
    );
    Ok(())
}

pub fn render(cfg: &RunConfig, a: &RenderArgs) -> Result<()> {
    create_dir(&a.out)?;
    if let Some(dir) = &a.labels {
        let files = label_files(dir)?;
        let skeleton = cfg.skeleton.spec();
        let counts = files
            .par_iter()
            .map(|(stem, path)| -> Result<usize> {
                let labels = read_labelset(path, Some(&skeleton))?;
                Ok(render_labels(&labels, &a.out.join(stem), cfg.render.cell_px)?.len())
            })
            .collect::<Result<Vec<_>>>()?;
        println!(
            "label_files={} images_written={}",
            files.len(),
            counts.iter().sum::<usize>()
        );
        return Ok(());
    }
    let preds_path = a.preds.as_ref().expect("clap requires labels or preds");
    let preds = read_results(preds_path)?;
    let skeleton = cfg.skeleton.spec();
    let dims: HashMap<u64, (u32, u32)> = match &a.gt {
        Some(gt) => read_annotations(gt, &skeleton)?
            .into_iter()
            .map(|r| (r.id, (r.width, r.height)))
            .collect(),
        None => HashMap::new(),
    };
    preds
        .par_iter()
        .map(|img| -> Result<()> {
            let (w, h) = dims
                .get(&img.image_id)
                .copied()
                .unwrap_or((cfg.render.width, cfg.render.height));
            let canvas = render_poses(&img.poses, &skeleton, w, h);
            save_png(&canvas, &a.out.join(format!("{}.png", img.image_id)))?;
            Ok(())
        })
        .collect::<Result<Vec<_>>>()?;
    println!("images_written={}", preds.len());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn person_ranges() {
        assert_eq!(persons_range("3").unwrap(), (3, 3));
        assert_eq!(persons_range("1-4").unwrap(), (1, 4));
        assert!(persons_range("4-1").is_err());
        assert!(persons_range("x").is_err());
    }

    #[test]
    fn numeric_stems_only() {
        assert_eq!(image_id("17").unwrap(), 17);
        assert!(image_id("abc").is_err());
    }
}
