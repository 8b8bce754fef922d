//! Grid geometry and the per-cell field types that labels are made of.
//!
//! Grid cell `(i, j)` covers the image square `[i·stride, (i+1)·stride) ×
//! [j·stride, (j+1)·stride)` and is represented by its center
//! `((i + 0.5)·stride, (j + 0.5)·stride)`. Continuous grid coordinates put
//! cell centers on integers, so image point `p` sits at grid point
//! `p / stride − 0.5`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed on unit-vector norms after `f32` rounding.
pub const NORM_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    width: usize,
    height: usize,
    stride: f64,
}

impl GridSpec {
    pub fn new(width: usize, height: usize, stride: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::domain(format!(
                "grid dimensions must be positive, got {width}x{height}"
            )));
        }
        if !(stride.is_finite() && stride > 0.0) {
            return Err(Error::domain(format!("stride must be > 0, got {stride}")));
        }
        Ok(Self { width, height, stride })
    }

    /// Smallest grid of the given stride that covers a `width × height` image.
    pub fn for_image(width: u32, height: u32, stride: f64) -> Result<Self> {
        if !(stride.is_finite() && stride > 0.0) {
            return Err(Error::domain(format!("stride must be > 0, got {stride}")));
        }
        let w = (f64::from(width) / stride).ceil() as usize;
        let h = (f64::from(height) / stride).ceil() as usize;
        Self::new(w, h, stride)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn stride(&self) -> f64 {
        self.stride
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y * self.width + x
    }

    /// Image-pixel coordinates of a continuous grid point.
    pub fn to_image(&self, g: [f64; 2]) -> [f64; 2] {
        [(g[0] + 0.5) * self.stride, (g[1] + 0.5) * self.stride]
    }

    /// Continuous grid coordinates of an image point.
    pub fn to_grid(&self, p: [f64; 2]) -> [f64; 2] {
        [p[0] / self.stride - 0.5, p[1] / self.stride - 0.5]
    }

    /// The cell whose square contains image point `p`, if it lies on the grid.
    pub fn cell_of(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        let cx = (p[0] / self.stride).floor();
        let cy = (p[1] / self.stride).floor();
        if cx < 0.0 || cy < 0.0 || cx >= self.width as f64 || cy >= self.height as f64 {
            return None;
        }
        Some((cx as usize, cy as usize))
    }

    /// Image-pixel center of cell `(x, y)`.
    pub fn cell_center(&self, x: usize, y: usize) -> [f64; 2] {
        self.to_image([x as f64, y as f64])
    }

    pub(crate) fn ensure_same(&self, other: &GridSpec, what: &'static str) -> Result<()> {
        if self != other {
            return Err(Error::shape(what, describe(self), describe(other)));
        }
        Ok(())
    }
}

fn describe(g: &GridSpec) -> String {
    format!("{}x{} @ stride {}", g.width, g.height, g.stride)
}

/// One scalar per cell, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f32>,
}

impl ScalarField {
    pub fn new(grid: GridSpec, values: Vec<f32>) -> Result<Self> {
        if values.len() != grid.cells() {
            return Err(Error::shape("scalar field length", grid.cells(), values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!("non-finite scalar at cell {i}")));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.cells()],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Mutable access to the raw cells. Callers keep every value finite.
    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[self.grid.index(x, y)]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        let i = self.grid.index(x, y);
        self.values[i] = v;
    }
}

/// Two channels per cell, row-major. Every cell vector has norm `≤ 1 + NORM_EPS`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: GridSpec,
    values: Vec<[f32; 2]>,
}

impl VectorField {
    pub fn new(grid: GridSpec, values: Vec<[f32; 2]>) -> Result<Self> {
        if values.len() != grid.cells() {
            return Err(Error::shape("vector field length", grid.cells(), values.len()));
        }
        for (i, v) in values.iter().enumerate() {
            if !(v[0].is_finite() && v[1].is_finite()) {
                return Err(Error::validation(format!("non-finite vector at cell {i}")));
            }
            if norm(*v) > 1.0 + NORM_EPS {
                return Err(Error::validation(format!(
                    "vector at cell {i} has norm {} > 1",
                    norm(*v)
                )));
            }
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![[0.0, 0.0]; grid.cells()],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[[f32; 2]] {
        &self.values
    }

    /// Mutable access to the raw cells. Callers keep every norm within `1 + NORM_EPS`.
    pub fn values_mut(&mut self) -> &mut [[f32; 2]] {
        &mut self.values
    }

    pub fn get(&self, x: usize, y: usize) -> [f32; 2] {
        self.values[self.grid.index(x, y)]
    }

    pub fn set(&mut self, x: usize, y: usize, v: [f32; 2]) {
        let i = self.grid.index(x, y);
        self.values[i] = v;
    }
}

/// Euclidean norm of a cell vector, evaluated in `f64`.
#[inline]
pub fn norm(v: [f32; 2]) -> f64 {
    let (x, y) = (f64::from(v[0]), f64::from(v[1]));
    (x * x + y * y).sqrt()
}

/// Loss weight per cell: `true` means the cell counts, `false` means ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    grid: GridSpec,
    values: Vec<bool>,
}

impl BinaryMask {
    pub fn new(grid: GridSpec, values: Vec<bool>) -> Result<Self> {
        if values.len() != grid.cells() {
            return Err(Error::shape("mask length", grid.cells(), values.len()));
        }
        Ok(Self { grid, values })
    }

    pub fn ones(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![true; grid.cells()],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [bool] {
        &mut self.values
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.values[self.grid.index(x, y)]
    }

    pub fn weight(&self, i: usize) -> f64 {
        if self.values[i] {
            1.0
        } else {
            0.0
        }
    }

    pub fn count_zeros(&self) -> usize {
        self.values.iter().filter(|v| !**v).count()
    }
}

/// Confidence maps, PAFs and ignore mask on one grid.
///
/// Teacher predictions use the same shape with an all-ones mask.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    pub maps: Vec<ScalarField>,
    pub pafs: Vec<VectorField>,
    pub mask: BinaryMask,
}

impl LabelSet {
    pub fn new(maps: Vec<ScalarField>, pafs: Vec<VectorField>, mask: BinaryMask) -> Result<Self> {
        let grid = *mask.grid();
        for m in &maps {
            grid.ensure_same(m.grid(), "confidence map grid")?;
        }
        for p in &pafs {
            grid.ensure_same(p.grid(), "paf grid")?;
        }
        Ok(Self { maps, pafs, mask })
    }

    pub fn zeros(grid: GridSpec, parts: usize, limbs: usize) -> Self {
        Self {
            maps: vec![ScalarField::zeros(grid); parts],
            pafs: vec![VectorField::zeros(grid); limbs],
            mask: BinaryMask::ones(grid),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        self.mask.grid()
    }

    pub fn parts(&self) -> usize {
        self.maps.len()
    }

    pub fn limbs(&self) -> usize {
        self.pafs.len()
    }

    pub(crate) fn ensure_compatible(&self, other: &LabelSet) -> Result<()> {
        self.grid().ensure_same(other.grid(), "label grid")?;
        if self.parts() != other.parts() {
            return Err(Error::shape("confidence map count", self.parts(), other.parts()));
        }
        if self.limbs() != other.limbs() {
            return Err(Error::shape("paf count", self.limbs(), other.limbs()));
        }
        Ok(())
    }
}

/// Bilinear interpolation of both channels at a continuous grid point.
///
/// The point must lie in `[0, width−1] × [0, height−1]`; points exactly on a
/// cell center return the stored vector.
pub fn sample_bilinear(field: &VectorField, point: [f64; 2]) -> Result<[f64; 2]> {
    let grid = field.grid();
    let (w, h) = (grid.width(), grid.height());
    let [x, y] = point;
    if !(x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64) {
        return Err(Error::domain(format!(
            "sample point ({x}, {y}) outside [0, {}] x [0, {}]",
            w - 1,
            h - 1
        )));
    }
    let (x0, fx) = split(x, w);
    let (y0, fy) = split(y, h);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);

    let v00 = field.get(x0, y0);
    let v10 = field.get(x1, y0);
    let v01 = field.get(x0, y1);
    let v11 = field.get(x1, y1);
    let mut out = [0.0; 2];
    for (c, o) in out.iter_mut().enumerate() {
        *o = (1.0 - fx) * (1.0 - fy) * f64::from(v00[c])
            + fx * (1.0 - fy) * f64::from(v10[c])
            + (1.0 - fx) * fy * f64::from(v01[c])
            + fx * fy * f64::from(v11[c]);
    }
    Ok(out)
}

/// Lower cell index and fractional offset, keeping the last cell reachable.
fn split(coord: f64, len: usize) -> (usize, f64) {
    let base = coord.floor() as usize;
    if base + 1 >= len {
        (len - 1, 0.0)
    } else {
        (base, coord - base as f64)
    }
}
