//! `PLF1` label tensor files.
//!
//! Layout, all little-endian:
//!
//! | offset | field                                  |
//! |--------|----------------------------------------|
//! | 0      | magic `b"PLF1"`                        |
//! | 4      | dtype `u32` (1 = f32)                  |
//! | 8      | rank `u32` (always 3)                  |
//! | 12     | dims `u32 × 3`: `[J + 2C + 1, H, W]`   |
//! | 24     | `J` `u32`                              |
//! | 28     | `C` `u32`                              |
//! | 32     | stride `f64`                           |
//! | 40     | payload `f32 × ∏dims`                  |
//!
//! Channels are stored in order: `J` confidence maps, then `x` and `y` of
//! each PAF, then the mask as 0/1. Each channel is row-major.

use std::path::Path;

use crate::correction::{sanitize_teacher_maps, sanitize_teacher_vectors};
use crate::error::{Error, Result};
use crate::field::{BinaryMask, GridSpec, LabelSet, ScalarField, VectorField};
use crate::skeleton::SkeletonSpec;

pub const MAGIC: [u8; 4] = *b"PLF1";
pub const DTYPE_F32: u32 = 1;
pub const HEADER_LEN: usize = 40;

/// File extension used for label tensors.
pub const EXTENSION: &str = "plf";

pub fn encode_labelset(labels: &LabelSet) -> Vec<u8> {
    let g = labels.grid();
    let (j, c) = (labels.parts(), labels.limbs());
    let channels = j + 2 * c + 1;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * channels * g.cells());
    out.extend_from_slice(&MAGIC);
    for v in [
        DTYPE_F32,
        3,
        channels as u32,
        g.height() as u32,
        g.width() as u32,
        j as u32,
        c as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&g.stride().to_le_bytes());
    for m in &labels.maps {
        for v in m.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for p in &labels.pafs {
        for axis in 0..2 {
            for v in p.values() {
                out.extend_from_slice(&v[axis].to_le_bytes());
            }
        }
    }
    for &keep in labels.mask.values() {
        let v: f32 = if keep { 1.0 } else { 0.0 };
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::io(
                self.path,
                std::io::Error::new(
                    std::io::ErrorKind::UnexpectedEof,
                    format!(
                        "truncated at byte {} of {}, needed {n} more",
                        self.bytes.len(),
                        self.pos + n
                    ),
                ),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        Ok(self
            .take(4 * n)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect())
    }
}

struct Raw {
    grid: GridSpec,
    maps: Vec<Vec<f32>>,
    pafs: Vec<Vec<[f32; 2]>>,
    mask: Vec<f32>,
}

fn decode_raw(bytes: &[u8], path: &Path, skeleton: Option<&SkeletonSpec>) -> Result<Raw> {
    let mut r = Reader { bytes, pos: 0, path };
    let invalid = |msg: String| Error::validation(format!("{}: {msg}", path.display()));
    if r.take(4)? != MAGIC {
        return Err(invalid("bad magic, not a PLF1 file".into()));
    }
    let dtype = r.u32()?;
    if dtype != DTYPE_F32 {
        return Err(invalid(format!("unsupported dtype {dtype}")));
    }
    let rank = r.u32()?;
    if rank != 3 {
        return Err(invalid(format!("rank {rank}, expected 3")));
    }
    let (channels, h, w) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let (j, c) = (r.u32()? as usize, r.u32()? as usize);
    let stride = r.f64()?;
    if channels != j + 2 * c + 1 {
        return Err(invalid(format!("{channels} channels do not match J = {j}, C = {c}")));
    }
    if let Some(s) = skeleton {
        if j != s.parts() || c != s.limbs().len() {
            return Err(invalid(format!(
                "file has J = {j}, C = {c}; skeleton has J = {}, C = {}",
                s.parts(),
                s.limbs().len()
            )));
        }
    }
    let grid = GridSpec::new(w, h, stride).map_err(|e| invalid(e.to_string()))?;
    let n = grid.cells();
    let maps = (0..j).map(|_| r.f32s(n)).collect::<Result<Vec<_>>>()?;
    let mut pafs = Vec::with_capacity(c);
    for _ in 0..c {
        let x = r.f32s(n)?;
        let y = r.f32s(n)?;
        pafs.push(x.into_iter().zip(y).map(|(x, y)| [x, y]).collect());
    }
    let mask = r.f32s(n)?;
    if r.pos != bytes.len() {
        return Err(invalid(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    if let Some(v) = mask.iter().find(|v| **v != 0.0 && **v != 1.0) {
        return Err(invalid(format!("mask value {v} is not 0 or 1")));
    }
    Ok(Raw { grid, maps, pafs, mask })
}

fn assemble(raw: Raw, path: &Path) -> Result<LabelSet> {
    let wrap = |e: Error| Error::validation(format!("{}: {e}", path.display()));
    let maps = raw
        .maps
        .into_iter()
        .map(|v| ScalarField::new(raw.grid, v))
        .collect::<Result<Vec<_>>>()
        .map_err(wrap)?;
    let pafs = raw
        .pafs
        .into_iter()
        .map(|v| VectorField::new(raw.grid, v))
        .collect::<Result<Vec<_>>>()
        .map_err(wrap)?;
    let mask = BinaryMask::new(raw.grid, raw.mask.iter().map(|v| *v == 1.0).collect())?;
    LabelSet::new(maps, pafs, mask)
}

/// Decode a label set, checking its channel counts against `skeleton` when given.
pub fn decode_labelset(bytes: &[u8], skeleton: Option<&SkeletonSpec>) -> Result<LabelSet> {
    let path = Path::new("<memory>");
    assemble(decode_raw(bytes, path, skeleton)?, path)
}

pub fn write_labelset(path: &Path, labels: &LabelSet) -> Result<()> {
    super::write_atomic(path, &encode_labelset(labels))
}

pub fn read_labelset(path: &Path, skeleton: Option<&SkeletonSpec>) -> Result<LabelSet> {
    let bytes = super::read_file(path)?;
    assemble(decode_raw(&bytes, path, skeleton)?, path)
}

/// Read raw model output: maps are clamped to `[0, 1]`, over-long vectors
/// rescaled and non-finite values zeroed before validation.
pub fn read_teacher(path: &Path, skeleton: Option<&SkeletonSpec>) -> Result<LabelSet> {
    let bytes = super::read_file(path)?;
    let mut raw = decode_raw(&bytes, path, skeleton)?;
    raw.maps.iter_mut().for_each(|m| sanitize_teacher_maps(m));
    raw.pafs.iter_mut().for_each(|p| sanitize_teacher_vectors(p));
    assemble(raw, path)
}
