//! Ignore regions (crowds) and their rasterization onto a label grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{BinaryMask, GridSpec};

/// An image-space region whose cells are excluded from the loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IgnoreRegion {
    /// Union of polygons; each polygon is filled with the even-odd rule.
    Polygons(Vec<Vec<[f64; 2]>>),
    /// Uncompressed COCO run-length encoding: column-major, runs alternate
    /// starting with background.
    Rle { height: u32, width: u32, counts: Vec<u32> },
}

impl IgnoreRegion {
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        IgnoreRegion::Polygons(vec![vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]]])
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            IgnoreRegion::Polygons(polys) => {
                for poly in polys {
                    if poly.len() < 3 {
                        return Err(Error::validation(format!(
                            "polygon with {} vertices (need at least 3)",
                            poly.len()
                        )));
                    }
                    if poly.iter().flatten().any(|c| !c.is_finite()) {
                        return Err(Error::validation("polygon with non-finite vertex"));
                    }
                }
                Ok(())
            }
            IgnoreRegion::Rle { height, width, counts } => {
                let total: u64 = counts.iter().map(|&c| u64::from(c)).sum();
                let expected = u64::from(*height) * u64::from(*width);
                if total != expected {
                    return Err(Error::validation(format!(
                        "rle counts sum to {total}, expected {height}x{width} = {expected}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// The same region as polygons. RLE runs become one rectangle per column segment.
    pub fn to_polygons(&self) -> Vec<Vec<[f64; 2]>> {
        match self {
            IgnoreRegion::Polygons(p) => p.clone(),
            IgnoreRegion::Rle { height, counts, .. } => {
                let h = u64::from(*height);
                let mut out = Vec::new();
                let mut pos = 0u64;
                for (i, &c) in counts.iter().enumerate() {
                    let c = u64::from(c);
                    if i % 2 == 1 {
                        let mut start = pos;
                        let end = pos + c;
                        while start < end {
                            let col = start / h;
                            let row0 = start % h;
                            let row1 = (end - col * h).min(h);
                            let (x0, x1) = (col as f64, (col + 1) as f64);
                            let (y0, y1) = (row0 as f64, row1 as f64);
                            out.push(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]]);
                            start = col * h + row1;
                        }
                    }
                    pos += c;
                }
                out
            }
        }
    }

    /// Apply a point map to every vertex.
    pub fn map_points(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> IgnoreRegion {
        IgnoreRegion::Polygons(
            self.to_polygons()
                .into_iter()
                .map(|poly| poly.into_iter().map(&f).collect())
                .collect(),
        )
    }

    fn rasterizer(&self) -> Rasterizer<'_> {
        match self {
            IgnoreRegion::Polygons(polys) => {
                Rasterizer::Polygons(polys.iter().map(|p| (bbox(p), p.as_slice())).collect())
            }
            IgnoreRegion::Rle { height, width, counts } => {
                let (h, w) = (*height as usize, *width as usize);
                let mut bits = vec![false; h * w];
                let mut pos = 0usize;
                for (i, &c) in counts.iter().enumerate() {
                    let end = (pos + c as usize).min(bits.len());
                    if i % 2 == 1 {
                        bits[pos..end].iter_mut().for_each(|b| *b = true);
                    }
                    pos = end;
                }
                Rasterizer::Bitmap { h, w, bits }
            }
        }
    }

    /// Whether image point `p` lies inside the region.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.rasterizer().contains(p)
    }
}

enum Rasterizer<'a> {
    Polygons(Vec<([f64; 4], &'a [[f64; 2]])>),
    Bitmap { h: usize, w: usize, bits: Vec<bool> },
}

impl Rasterizer<'_> {
    fn contains(&self, p: [f64; 2]) -> bool {
        match self {
            Rasterizer::Polygons(polys) => polys
                .iter()
                .any(|(b, poly)| p[0] >= b[0] && p[0] <= b[2] && p[1] >= b[1] && p[1] <= b[3] && even_odd(poly, p)),
            Rasterizer::Bitmap { h, w, bits } => {
                if p[0] < 0.0 || p[1] < 0.0 {
                    return false;
                }
                let (x, y) = (p[0].floor() as usize, p[1].floor() as usize);
                x < *w && y < *h && bits[x * h + y]
            }
        }
    }
}

fn bbox(poly: &[[f64; 2]]) -> [f64; 4] {
    poly.iter().fold(
        [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY],
        |b, v| [b[0].min(v[0]), b[1].min(v[1]), b[2].max(v[0]), b[3].max(v[1])],
    )
}

/// Even-odd crossing test.
fn even_odd(poly: &[[f64; 2]], p: [f64; 2]) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + n - 1) % n];
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// All-ones mask with zeros at every cell whose center lies inside a region.
pub fn gen_ignore_mask(regions: &[IgnoreRegion], grid: GridSpec) -> Result<BinaryMask> {
    let mut mask = BinaryMask::ones(grid);
    for region in regions {
        region.validate()?;
        let r = region.rasterizer();
        for y in 0..grid.height() {
            for x in 0..grid.width() {
                if r.contains(grid.cell_center(x, y)) {
                    mask.values_mut()[grid.index(x, y)] = false;
                }
            }
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid10() -> GridSpec {
        GridSpec::new(10, 10, 8.0).unwrap()
    }

    #[test]
    fn no_regions_gives_all_ones() {
        let m = gen_ignore_mask(&[], grid10()).unwrap();
        assert_eq!(m.count_zeros(), 0);
    }

    #[test]
    fn full_cover_gives_all_zeros() {
        let m = gen_ignore_mask(&[IgnoreRegion::rect(-1.0, -1.0, 81.0, 81.0)], grid10()).unwrap();
        assert_eq!(m.count_zeros(), 100);
    }

    #[test]
    fn rectangle_over_five_by_five_cells() {
        let m = gen_ignore_mask(&[IgnoreRegion::rect(0.0, 0.0, 40.0, 40.0)], grid10()).unwrap();
        assert_eq!(m.count_zeros(), 25);
        for y in 0..10 {
            for x in 0..10 {
                assert_eq!(m.get(x, y), !(x < 5 && y < 5), "cell ({x},{y})");
            }
        }
    }

    #[test]
    fn self_intersecting_polygon_uses_even_odd() {
        // A pentagram: the central pentagon is covered twice and stays outside.
        let star: Vec<[f64; 2]> = (0..5)
            .map(|k| {
                let a = std::f64::consts::PI * (0.5 + 0.8 * k as f64);
                [40.0 + 38.0 * a.cos(), 40.0 - 38.0 * a.sin()]
            })
            .collect();
        let region = IgnoreRegion::Polygons(vec![star]);
        assert!(!region.contains([40.0, 40.0]));
        assert!(region.contains([40.0, 8.0]));
        let m = gen_ignore_mask(&[region], grid10()).unwrap();
        assert!(m.get(4, 4));
    }

    #[test]
    fn degenerate_polygon_is_rejected() {
        let r = IgnoreRegion::Polygons(vec![vec![[0.0, 0.0], [1.0, 1.0]]]);
        assert!(gen_ignore_mask(&[r], grid10()).is_err());
    }

    #[test]
    fn rle_rasterizes_column_major() {
        // 4x3 image (h=4, w=3): column 1 rows 1..3 set.
        let r = IgnoreRegion::Rle {
            height: 4,
            width: 3,
            counts: vec![5, 2, 5],
        };
        r.validate().unwrap();
        assert!(r.contains([1.5, 1.5]));
        assert!(r.contains([1.5, 2.5]));
        assert!(!r.contains([1.5, 0.5]));
        assert!(!r.contains([0.5, 1.5]));
        assert!(!r.contains([2.5, 3.5]));
    }

    #[test]
    fn rle_to_polygons_matches_bitmap() {
        let r = IgnoreRegion::Rle {
            height: 5,
            width: 4,
            counts: vec![3, 6, 2, 4, 5],
        };
        r.validate().unwrap();
        let as_poly = IgnoreRegion::Polygons(r.to_polygons());
        for y in 0..5 {
            for x in 0..4 {
                let p = [x as f64 + 0.5, y as f64 + 0.5];
                assert_eq!(r.contains(p), as_poly.contains(p), "pixel ({x},{y})");
            }
        }
    }

    #[test]
    fn rle_count_mismatch_is_invalid() {
        let r = IgnoreRegion::Rle {
            height: 2,
            width: 2,
            counts: vec![1, 1],
        };
        assert!(r.validate().is_err());
    }
}
