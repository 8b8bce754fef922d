//! COCO keypoint JSON, subset.
//!
//! Read: `images` (`id`, `width`, `height`) and `annotations` (`id`,
//! `image_id`, `keypoints`, `area`, `iscrowd`, `segmentation`). Crowd
//! annotations become ignore regions; all others become persons.
//! Segmentations may be polygons or uncompressed RLE.
//!
//! Keypoint arrays may hold either one triple per skeleton part or the 17
//! COCO keypoints; the latter are mapped by part name, with a neck
//! synthesized at the shoulder midpoint when the skeleton has one.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotation::{Keypoint, PersonAnnotation, Visibility};
use crate::error::{Error, Result};
use crate::metrics::ImageAnnotations;
use crate::region::IgnoreRegion;
use crate::skeleton::SkeletonSpec;

const COCO_PARTS: usize = 17;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: u64,
    pub width: u32,
    pub height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file_name: Option<String>,
    pub persons: Vec<PersonAnnotation>,
    pub ignore_regions: Vec<IgnoreRegion>,
}

impl ImageRecord {
    pub fn ground_truth(&self) -> ImageAnnotations {
        ImageAnnotations {
            image_id: self.id,
            persons: self.persons.clone(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoFile {
    images: Vec<CocoImage>,
    #[serde(default)]
    annotations: Vec<CocoAnnotation>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoImage {
    id: u64,
    width: u32,
    height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    file_name: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoAnnotation {
    id: u64,
    image_id: u64,
    #[serde(default)]
    category_id: Option<u64>,
    #[serde(default)]
    keypoints: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    num_keypoints: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    area: Option<f64>,
    #[serde(default)]
    iscrowd: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    segmentation: Option<Segmentation>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum Segmentation {
    Polygons(Vec<Vec<f64>>),
    Rle { counts: RleCounts, size: [u32; 2] },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum RleCounts {
    Uncompressed(Vec<u32>),
    Compressed(String),
}

fn parse_keypoints(ann: &CocoAnnotation, skeleton: &SkeletonSpec) -> Result<PersonAnnotation> {
    let id = ann.id;
    if !ann.keypoints.len().is_multiple_of(3) {
        return Err(Error::validation(format!(
            "annotation {id}: keypoint array length {} is not a multiple of 3",
            ann.keypoints.len()
        )));
    }
    let mut triples = Vec::with_capacity(ann.keypoints.len() / 3);
    for t in ann.keypoints.chunks_exact(3) {
        let v = t[2];
        let state = (v.fract() == 0.0)
            .then(|| Visibility::from_coco_flag(v as i64))
            .flatten()
            .ok_or_else(|| Error::validation(format!("annotation {id}: unknown visibility flag {v}")))?;
        if state.is_labeled() && !(t[0].is_finite() && t[1].is_finite()) {
            return Err(Error::validation(format!("annotation {id}: non-finite keypoint")));
        }
        triples.push(Keypoint {
            x: t[0],
            y: t[1],
            state,
        });
    }

    let keypoints = if triples.is_empty() {
        vec![Keypoint::ABSENT; skeleton.parts()]
    } else if triples.len() == skeleton.parts() {
        triples
    } else if triples.len() == COCO_PARTS {
        let mapping = skeleton.coco_mapping().ok_or_else(|| {
            Error::validation(format!(
                "annotation {id}: 17 COCO keypoints cannot be mapped onto this skeleton"
            ))
        })?;
        let mut out = vec![Keypoint::ABSENT; skeleton.parts()];
        for (k, &dst) in triples.iter().zip(&mapping) {
            out[dst] = *k;
        }
        if let (Some(neck), Some(l), Some(r)) = (
            skeleton.part_index("neck"),
            skeleton.part_index("left_shoulder"),
            skeleton.part_index("right_shoulder"),
        ) {
            let (l, r) = (out[l], out[r]);
            if l.state.is_labeled() && r.state.is_labeled() {
                let state = if l.state == Visibility::Visible && r.state == Visibility::Visible {
                    Visibility::Visible
                } else {
                    Visibility::Occluded
                };
                out[neck] = Keypoint {
                    x: (l.x + r.x) / 2.0,
                    y: (l.y + r.y) / 2.0,
                    state,
                };
            }
        }
        out
    } else {
        return Err(Error::validation(format!(
            "annotation {id}: {} keypoints, expected {} or {COCO_PARTS}",
            triples.len(),
            skeleton.parts()
        )));
    };
    Ok(PersonAnnotation {
        keypoints,
        area: ann.area,
    })
}

fn parse_region(ann: &CocoAnnotation) -> Result<Option<IgnoreRegion>> {
    let id = ann.id;
    let region = match &ann.segmentation {
        None => return Ok(None),
        Some(Segmentation::Polygons(polys)) => {
            let mut out = Vec::with_capacity(polys.len());
            for p in polys {
                if p.len() % 2 != 0 {
                    return Err(Error::validation(format!(
                        "annotation {id}: odd polygon coordinate count"
                    )));
                }
                out.push(p.chunks_exact(2).map(|c| [c[0], c[1]]).collect());
            }
            IgnoreRegion::Polygons(out)
        }
        Some(Segmentation::Rle {
            counts: RleCounts::Compressed(_),
            ..
        }) => {
            return Err(Error::Unsupported(format!(
                "annotation {id}: compressed RLE segmentation"
            )));
        }
        Some(Segmentation::Rle {
            counts: RleCounts::Uncompressed(counts),
            size,
        }) => IgnoreRegion::Rle {
            height: size[0],
            width: size[1],
            counts: counts.clone(),
        },
    };
    region
        .validate()
        .map_err(|e| Error::validation(format!("annotation {id}: {e}")))?;
    Ok(Some(region))
}

fn parse_error(path: &Path, e: serde_json::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Parse annotation JSON text; `path` is only used in error messages.
pub fn parse_annotations(text: &str, path: &Path, skeleton: &SkeletonSpec) -> Result<Vec<ImageRecord>> {
    let file: CocoFile = serde_json::from_str(text).map_err(|e| parse_error(path, e))?;
    let mut images: Vec<ImageRecord> = Vec::with_capacity(file.images.len());
    let mut index = HashMap::new();
    for img in file.images {
        if index.insert(img.id, images.len()).is_some() {
            return Err(Error::validation(format!("duplicate image id {}", img.id)));
        }
        images.push(ImageRecord {
            id: img.id,
            width: img.width,
            height: img.height,
            file_name: img.file_name,
            persons: Vec::new(),
            ignore_regions: Vec::new(),
        });
    }
    for ann in &file.annotations {
        let &slot = index
            .get(&ann.image_id)
            .ok_or_else(|| Error::validation(format!("annotation {}: unknown image id {}", ann.id, ann.image_id)))?;
        if ann.iscrowd != 0 {
            if let Some(r) = parse_region(ann)? {
                images[slot].ignore_regions.push(r);
            }
        } else {
            let person = parse_keypoints(ann, skeleton)?;
            images[slot].persons.push(person);
        }
    }
    Ok(images)
}

pub fn read_annotations(path: &Path, skeleton: &SkeletonSpec) -> Result<Vec<ImageRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&text, path, skeleton)
}

/// Serialize in the same schema, one keypoint triple per skeleton part.
pub fn annotations_to_json(images: &[ImageRecord]) -> Result<String> {
    let mut file = CocoFile {
        images: Vec::with_capacity(images.len()),
        annotations: Vec::new(),
    };
    let mut next_id = 1;
    for img in images {
        file.images.push(CocoImage {
            id: img.id,
            width: img.width,
            height: img.height,
            file_name: img.file_name.clone(),
        });
        for p in &img.persons {
            let keypoints = p
                .keypoints
                .iter()
                .flat_map(|k| {
                    if k.state.is_labeled() {
                        [k.x, k.y, f64::from(k.state.coco_flag())]
                    } else {
                        [0.0, 0.0, 0.0]
                    }
                })
                .collect();
            file.annotations.push(CocoAnnotation {
                id: next_id,
                image_id: img.id,
                category_id: Some(1),
                keypoints,
                num_keypoints: Some(p.labeled_count()),
                area: p.area,
                iscrowd: 0,
                segmentation: None,
            });
            next_id += 1;
        }
        for r in &img.ignore_regions {
            let segmentation = match r {
                IgnoreRegion::Polygons(polys) => {
                    Segmentation::Polygons(polys.iter().map(|p| p.iter().flatten().copied().collect()).collect())
                }
                IgnoreRegion::Rle { height, width, counts } => Segmentation::Rle {
                    counts: RleCounts::Uncompressed(counts.clone()),
                    size: [*height, *width],
                },
            };
            file.annotations.push(CocoAnnotation {
                id: next_id,
                image_id: img.id,
                category_id: Some(1),
                keypoints: Vec::new(),
                num_keypoints: Some(0),
                area: None,
                iscrowd: 1,
                segmentation: Some(segmentation),
            });
            next_id += 1;
        }
    }
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn write_annotations(path: &Path, images: &[ImageRecord]) -> Result<()> {
    super::write_atomic(path, annotations_to_json(images)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::GridSpec;
    use crate::region::gen_ignore_mask;

    fn parse(text: &str) -> Result<Vec<ImageRecord>> {
        parse_annotations(text, Path::new("fixture.json"), &SkeletonSpec::body18())
    }

    fn coco17_all_visible() -> String {
        (0..17)
            .map(|i| format!("{}, {}, 2", 10 + i, 20 + 2 * i))
            .collect::<Vec<_>>()
            .join(", ")
    }

    #[test]
    fn empty_annotation_list() {
        let images = parse(r#"{"images": [{"id": 1, "width": 64, "height": 48}], "annotations": []}"#).unwrap();
        assert_eq!(images.len(), 1);
        assert!(images[0].persons.is_empty());
    }

    #[test]
    fn coco17_person_gets_a_neck() {
        let text = format!(
            r#"{{"images": [{{"id": 7, "width": 64, "height": 64}}],
                "annotations": [{{"id": 1, "image_id": 7, "keypoints": [{}], "area": 100.0}}]}}"#,
            coco17_all_visible()
        );
        let images = parse(&text).unwrap();
        let p = &images[0].persons[0];
        let s = SkeletonSpec::body18();
        assert_eq!(p.labeled_count(), 18);
        assert!(p.keypoints.iter().all(|k| k.state == Visibility::Visible));
        // COCO shoulders are keypoints 5 and 6: (15, 30) and (16, 32)
        assert_eq!(p.labeled(s.part_index("neck").unwrap()), Some([15.5, 31.0]));
        assert_eq!(p.labeled(s.part_index("left_shoulder").unwrap()), Some([15.0, 30.0]));
        assert_eq!(p.area, Some(100.0));
    }

    #[test]
    fn neck_absent_without_both_shoulders() {
        let mut kps: Vec<String> = (0..17).map(|i| format!("{i}, {i}, 2")).collect();
        kps[6] = "0, 0, 0".into();
        let text = format!(
            r#"{{"images": [{{"id": 1, "width": 9, "height": 9}}],
                "annotations": [{{"id": 3, "image_id": 1, "keypoints": [{}]}}]}}"#,
            kps.join(", ")
        );
        let p = &parse(&text).unwrap()[0].persons[0];
        assert_eq!(p.labeled(1), None);
    }

    #[test]
    fn unknown_visibility_names_the_annotation() {
        let text = r#"{"images": [{"id": 1, "width": 9, "height": 9}],
            "annotations": [{"id": 42, "image_id": 1, "keypoints": [1, 1, 3]}]}"#;
        let one = SkeletonSpec::new(vec!["a".into()], vec![], vec![], vec![0.1]).unwrap();
        match parse_annotations(text, Path::new("f.json"), &one) {
            Err(Error::Validation(m)) => assert!(m.contains("42"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_json_reports_position() {
        match parse("{\"images\": [\n  {\"id\": 1,, }]}") {
            Err(Error::Parse { line, column, path, .. }) => {
                assert_eq!(line, 2);
                assert!(column > 0);
                assert_eq!(path, Path::new("fixture.json"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn compressed_rle_is_unsupported() {
        let text = r#"{"images": [{"id": 1, "width": 9, "height": 9}],
            "annotations": [{"id": 5, "image_id": 1, "iscrowd": 1,
                "segmentation": {"counts": "abc", "size": [9, 9]}}]}"#;
        assert!(matches!(parse(text), Err(Error::Unsupported(_))));
    }

    #[test]
    fn crowd_regions_rasterize() {
        // rectangle covering cells x 1..=3, y 2..=3 at stride 8, plus a
        // 16x8 RLE block in the top-left corner (cells (0,0) and (1,0)).
        let text = r#"{"images": [{"id": 1, "width": 64, "height": 48}, {"id": 2, "width": 16, "height": 8}],
            "annotations": [
              {"id": 1, "image_id": 1, "iscrowd": 1, "segmentation": [[8, 16, 32, 16, 32, 32, 8, 32]]},
              {"id": 2, "image_id": 2, "iscrowd": 1, "segmentation": {"counts": [0, 128], "size": [8, 16]}}
            ]}"#;
        let images = parse(text).unwrap();
        assert_eq!(images[0].ignore_regions.len(), 1);
        let g = GridSpec::for_image(64, 48, 8.0).unwrap();
        assert_eq!(gen_ignore_mask(&images[0].ignore_regions, g).unwrap().count_zeros(), 6);
        let g = GridSpec::for_image(16, 8, 8.0).unwrap();
        assert_eq!(gen_ignore_mask(&images[1].ignore_regions, g).unwrap().count_zeros(), 2);
    }

    #[test]
    fn unknown_image_id_is_rejected() {
        let text = r#"{"images": [], "annotations": [{"id": 9, "image_id": 3}]}"#;
        assert!(matches!(parse(text), Err(Error::Validation(m)) if m.contains('9')));
    }

    #[test]
    fn write_then_read_round_trips() {
        let s = SkeletonSpec::body18();
        let mut p = PersonAnnotation::absent(18);
        p.keypoints[3] = Keypoint::visible(1.0 / 3.0, 7.25);
        p.keypoints[4] = Keypoint {
            x: 2.0,
            y: 3.0,
            state: Visibility::Occluded,
        };
        p.area = Some(12.5);
        let images = vec![ImageRecord {
            id: 4,
            width: 32,
            height: 32,
            file_name: None,
            persons: vec![p],
            ignore_regions: vec![
                IgnoreRegion::rect(0.0, 0.0, 4.0, 4.0),
                IgnoreRegion::Rle {
                    height: 2,
                    width: 2,
                    counts: vec![1, 2, 1],
                },
            ],
        }];
        let json = annotations_to_json(&images).unwrap();
        let back = parse_annotations(&json, Path::new("x"), &s).unwrap();
        assert_eq!(back, images);
    }
}
