//! PNG visualizations: confidence maps as heatmaps, PAFs colored by
//! direction, and skeleton overlays.

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::field::{BinaryMask, LabelSet, ScalarField, VectorField};
use crate::parser::PoseResult;
use crate::skeleton::SkeletonSpec;

const BACKGROUND: Rgb<u8> = Rgb([16, 16, 16]);
const JOINT: Rgb<u8> = Rgb([255, 255, 255]);

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Black through red and yellow to white.
pub fn heat_color(v: f32) -> Rgb<u8> {
    let v = f64::from(v);
    Rgb([to_u8(3.0 * v), to_u8(3.0 * v - 1.0), to_u8(3.0 * v - 2.0)])
}

/// Fully saturated color for `hue` in degrees at brightness `value`.
pub fn hsv(hue: f64, value: f64) -> Rgb<u8> {
    let h = hue.rem_euclid(360.0) / 60.0;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    let (r, g, b) = match h as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    Rgb([to_u8(r * value), to_u8(g * value), to_u8(b * value)])
}

fn upscale(w: usize, h: usize, cell_px: u32, color: impl Fn(usize) -> Rgb<u8>) -> RgbImage {
    let c = cell_px.max(1);
    RgbImage::from_fn(w as u32 * c, h as u32 * c, |x, y| {
        color((y / c) as usize * w + (x / c) as usize)
    })
}

pub fn render_heatmap(map: &ScalarField, cell_px: u32) -> RgbImage {
    let g = map.grid();
    upscale(g.width(), g.height(), cell_px, |i| heat_color(map.values()[i]))
}

/// Hue encodes direction (0° = +x), brightness encodes magnitude.
pub fn render_paf(paf: &VectorField, cell_px: u32) -> RgbImage {
    let g = paf.grid();
    upscale(g.width(), g.height(), cell_px, |i| {
        let [x, y] = paf.values()[i];
        let (x, y) = (f64::from(x), f64::from(y));
        hsv(y.atan2(x).to_degrees(), x.hypot(y))
    })
}

pub fn render_mask(mask: &BinaryMask, cell_px: u32) -> RgbImage {
    let g = mask.grid();
    upscale(g.width(), g.height(), cell_px, |i| {
        if mask.values()[i] {
            Rgb([255, 255, 255])
        } else {
            Rgb([0, 0, 0])
        }
    })
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn line(img: &mut RgbImage, a: [f64; 2], b: [f64; 2], c: Rgb<u8>) {
    let (mut x0, mut y0) = (a[0].round() as i64, a[1].round() as i64);
    let (x1, y1) = (b[0].round() as i64, b[1].round() as i64);
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let mut err = dx + dy;
    loop {
        put(img, x0, y0, c);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

/// Limbs in per-type colors and joints as white squares, on a dark
/// `width × height` canvas in image pixels.
pub fn render_poses(poses: &[PoseResult], skeleton: &SkeletonSpec, width: u32, height: u32) -> RgbImage {
    let mut img = RgbImage::from_pixel(width.max(1), height.max(1), BACKGROUND);
    let n = skeleton.limbs().len().max(1) as f64;
    for pose in poses {
        for (c, &(a, b)) in skeleton.limbs().iter().enumerate() {
            if let (Some(Some(pa)), Some(Some(pb))) = (pose.parts.get(a), pose.parts.get(b)) {
                line(&mut img, [pa.x, pa.y], [pb.x, pb.y], hsv(360.0 * c as f64 / n, 1.0));
            }
        }
        for p in pose.parts.iter().flatten() {
            let (x, y) = (p.x.round() as i64, p.y.round() as i64);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    put(&mut img, x + dx, y + dy, JOINT);
                }
            }
        }
    }
    img
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

pub fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    super::write_atomic(path, &encode_png(img)?)
}

/// Write `map_{j}.png`, `paf_{c}.png` and `mask.png` into `dir`.
pub fn render_labels(labels: &LabelSet, dir: &Path, cell_px: u32) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for (j, m) in labels.maps.iter().enumerate() {
        let p = dir.join(format!("map_{j:02}.png"));
        save_png(&render_heatmap(m, cell_px), &p)?;
        written.push(p);
    }
    for (c, f) in labels.pafs.iter().enumerate() {
        let p = dir.join(format!("paf_{c:02}.png"));
        save_png(&render_paf(f, cell_px), &p)?;
        written.push(p);
    }
    let p = dir.join("mask.png");
    save_png(&render_mask(&labels.mask, cell_px), &p)?;
    written.push(p);
    Ok(written)
}
