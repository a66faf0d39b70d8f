//! Histogram of oriented gradients.
//!
//! Gradients use centered `[-1, 0, 1]` differences (one-sided on the border).
//! Each pixel votes its magnitude into the two orientation bins whose centers
//! bracket its angle, with linear weights; there is no spatial interpolation.
//! Cell histograms are grouped into overlapping square blocks, and each block
//! vector `v` is normalised as `v / sqrt(|v|² + ε²)`.
//!
//! With the default configuration a 128×128 image gives 15×15 blocks of
//! 2×2 cells × 9 bins, i.e. 8100 values.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageio::GrayImage;
use crate::linalg::{FeatureMatrix, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HogConfig {
    /// Cell side in pixels.
    pub cell_size: usize,
    /// Block side in cells.
    pub block_cells: usize,
    /// Block step in cells.
    pub block_stride: usize,
    pub bins: usize,
    /// Orientations over 0–360° instead of 0–180°.
    pub signed: bool,
    pub norm_epsilon: f64,
}

impl Default for HogConfig {
    fn default() -> Self {
        HogConfig {
            cell_size: 8,
            block_cells: 2,
            block_stride: 1,
            bins: 9,
            signed: false,
            norm_epsilon: 1e-6,
        }
    }
}

/// Derived block geometry for one image size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HogLayout {
    pub cells_x: usize,
    pub cells_y: usize,
    pub blocks_x: usize,
    pub blocks_y: usize,
    /// Values per block: `block_cells² · bins`.
    pub block_len: usize,
}

impl HogLayout {
    pub fn len(&self) -> usize {
        self.blocks_x * self.blocks_y * self.block_len
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl HogConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cell_size < 2 || self.bins < 2 || self.block_cells < 1 || self.block_stride < 1 {
            return Err(Error::invalid(format!(
                "HOG config out of range: cell_size {} (>=2), bins {} (>=2), block_cells {} (>=1), block_stride {} (>=1)",
                self.cell_size, self.bins, self.block_cells, self.block_stride
            )));
        }
        if !(self.norm_epsilon > 0.0 && self.norm_epsilon.is_finite()) {
            return Err(Error::invalid(format!(
                "HOG norm_epsilon must be positive, got {}",
                self.norm_epsilon
            )));
        }
        Ok(())
    }

    pub fn layout(&self, width: usize, height: usize) -> Result<HogLayout> {
        self.validate()?;
        if !width.is_multiple_of(self.cell_size) || !height.is_multiple_of(self.cell_size) {
            return Err(Error::invalid(format!(
                "image {width}x{height} is not divisible by the HOG cell size {}; resize it to a multiple first",
                self.cell_size
            )));
        }
        let cells_x = width / self.cell_size;
        let cells_y = height / self.cell_size;
        if cells_x < self.block_cells || cells_y < self.block_cells {
            return Err(Error::invalid(format!(
                "image {width}x{height} has {cells_x}x{cells_y} cells, fewer than one {}-cell block",
                self.block_cells
            )));
        }
        Ok(HogLayout {
            cells_x,
            cells_y,
            blocks_x: (cells_x - self.block_cells) / self.block_stride + 1,
            blocks_y: (cells_y - self.block_cells) / self.block_stride + 1,
            block_len: self.block_cells * self.block_cells * self.bins,
        })
    }

    pub fn descriptor_len(&self, width: usize, height: usize) -> Result<usize> {
        Ok(self.layout(width, height)?.len())
    }

    fn range_degrees(&self) -> f64 {
        if self.signed {
            360.0
        } else {
            180.0
        }
    }
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub magnitude: Matrix,
    /// Degrees in `[0, 180)` (unsigned) or `[0, 360)` (signed).
    pub orientation: Matrix,
}

/// Unsigned-orientation gradients.
pub fn gradients(img: &GrayImage) -> Result<Gradients> {
    gradients_with(img, false)
}

pub fn gradients_with(img: &GrayImage, signed: bool) -> Result<Gradients> {
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(Error::invalid(format!(
            "gradients need at least a 3x3 image, got {w}x{h}"
        )));
    }
    let px = |x: usize, y: usize| f64::from(img.get(x, y));
    let range = if signed { 360.0 } else { 180.0 };
    let mut magnitude = Matrix::zeros(h, w);
    let mut orientation = Matrix::zeros(h, w);
    for y in 0..h {
        let (ya, yb) = if y == 0 {
            (0, 1)
        } else if y == h - 1 {
            (h - 2, h - 1)
        } else {
            (y - 1, y + 1)
        };
        for x in 0..w {
            let (xa, xb) = if x == 0 {
                (0, 1)
            } else if x == w - 1 {
                (w - 2, w - 1)
            } else {
                (x - 1, x + 1)
            };
            let gx = px(xb, y) - px(xa, y);
            let gy = px(x, yb) - px(x, ya);
            magnitude[(y, x)] = gx.hypot(gy);
            let mut angle = gy.atan2(gx).to_degrees();
            if angle < 0.0 {
                angle += 360.0;
            }
            if !signed && angle >= 180.0 {
                angle -= 180.0;
            }
            if angle >= range {
                angle -= range;
            }
            orientation[(y, x)] = angle;
        }
    }
    Ok(Gradients {
        magnitude,
        orientation,
    })
}

/// Block-ordered descriptor: blocks row-major, cells row-major within a
/// block, bins ascending within a cell.
#[derive(Debug, Clone, PartialEq)]
pub struct HogDescriptor {
    pub values: Vec<f64>,
    pub layout: HogLayout,
}

pub fn compute_hog(img: &GrayImage, cfg: &HogConfig) -> Result<HogDescriptor> {
    let layout = cfg.layout(img.width(), img.height())?;
    let grad = gradients_with(img, cfg.signed)?;
    let bins = cfg.bins;
    let bin_width = cfg.range_degrees() / bins as f64;

    let mut cells = vec![0.0; layout.cells_x * layout.cells_y * bins];
    for y in 0..layout.cells_y * cfg.cell_size {
        let cy = y / cfg.cell_size;
        for x in 0..layout.cells_x * cfg.cell_size {
            let mag = grad.magnitude[(y, x)];
            if mag == 0.0 {
                continue;
            }
            let pos = grad.orientation[(y, x)] / bin_width - 0.5;
            let lower = pos.floor();
            let frac = pos - lower;
            let b0 = (lower as isize).rem_euclid(bins as isize) as usize;
            let b1 = (b0 + 1) % bins;
            let cell = &mut cells[(cy * layout.cells_x + x / cfg.cell_size) * bins..][..bins];
            cell[b0] += mag * (1.0 - frac);
            cell[b1] += mag * frac;
        }
    }

    let eps2 = cfg.norm_epsilon * cfg.norm_epsilon;
    let mut values = Vec::with_capacity(layout.len());
    for by in 0..layout.blocks_y {
        for bx in 0..layout.blocks_x {
            let start = values.len();
            for cy in by * cfg.block_stride..by * cfg.block_stride + cfg.block_cells {
                for cx in bx * cfg.block_stride..bx * cfg.block_stride + cfg.block_cells {
                    values.extend_from_slice(&cells[(cy * layout.cells_x + cx) * bins..][..bins]);
                }
            }
            let block = &mut values[start..];
            let norm = (block.iter().map(|v| v * v).sum::<f64>() + eps2).sqrt();
            block.iter_mut().for_each(|v| *v /= norm);
        }
    }
    Ok(HogDescriptor { values, layout })
}

/// One descriptor per row, in input order. Images are processed on the
/// current rayon pool.
pub fn hog_matrix(images: &[GrayImage], cfg: &HogConfig) -> Result<FeatureMatrix> {
    let Some(first) = images.first() else {
        return Err(Error::invalid("hog_matrix needs at least one image"));
    };
    let (w, h) = (first.width(), first.height());
    if let Some((i, img)) = images
        .iter()
        .enumerate()
        .find(|(_, img)| img.width() != w || img.height() != h)
    {
        return Err(Error::invalid(format!(
            "image {i} is {}x{}, expected {w}x{h} like image 0",
            img.width(),
            img.height()
        )));
    }
    let len = cfg.descriptor_len(w, h)?;
    let rows: Vec<Vec<f64>> = images
        .par_iter()
        .map(|img| compute_hog(img, cfg).map(|d| d.values))
        .collect::<Result<_>>()?;
    let mut data = Vec::with_capacity(rows.len() * len);
    for r in rows {
        data.extend(r);
    }
    Matrix::new(images.len(), len, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_length_is_8100() {
        let img = GrayImage::from_fn(128, 128, |x, y| ((x * 7 + y * 13) % 256) as u8);
        let d = compute_hog(&img, &HogConfig::default()).unwrap();
        assert_eq!(d.values.len(), 8100);
        assert_eq!(HogConfig::default().descriptor_len(128, 128).unwrap(), 8100);
    }

    #[test]
    fn constant_image() {
        let img = GrayImage::from_fn(16, 16, |_, _| 77);
        let g = gradients(&img).unwrap();
        assert!(g.magnitude.as_slice().iter().all(|&m| m == 0.0));
        let d = compute_hog(&img, &HogConfig::default()).unwrap();
        assert!(d.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vertical_step_edge() {
        let img = GrayImage::from_fn(8, 6, |x, _| if x < 4 { 0 } else { 255 });
        let g = gradients(&img).unwrap();
        for y in 1..5 {
            for x in 1..7 {
                assert_eq!(g.orientation[(y, x)], 0.0);
            }
            assert_eq!(g.magnitude[(y, 3)], 255.0);
            assert_eq!(g.magnitude[(y, 4)], 255.0);
            assert_eq!(g.magnitude[(y, 1)], 0.0);
        }
    }

    #[test]
    fn diagonal_ramp() {
        let img = GrayImage::from_fn(10, 10, |x, y| (x * 5 + y * 5) as u8);
        let g = gradients(&img).unwrap();
        for y in 1..9 {
            for x in 1..9 {
                assert!((g.orientation[(y, x)] - 45.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn orientation_folding() {
        // Intensity falling to the right: gx < 0 → 180°, folds to 0°.
        let img = GrayImage::from_fn(5, 5, |x, _| (200 - 40 * x) as u8);
        let g = gradients(&img).unwrap();
        assert_eq!(g.orientation[(2, 2)], 0.0);
        let s = gradients_with(&img, true).unwrap();
        assert_eq!(s.orientation[(2, 2)], 180.0);
    }

    #[test]
    fn too_small() {
        let img = GrayImage::from_fn(2, 5, |_, _| 0);
        assert!(gradients(&img).is_err());
    }

    #[test]
    fn indivisible_size_mentions_resize() {
        let img = GrayImage::from_fn(20, 16, |_, _| 0);
        let err = compute_hog(&img, &HogConfig::default()).unwrap_err();
        assert!(err.to_string().contains("resize"), "{err}");
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            HogConfig {
                cell_size: 1,
                ..Default::default()
            },
            HogConfig {
                bins: 1,
                ..Default::default()
            },
            HogConfig {
                block_cells: 0,
                ..Default::default()
            },
            HogConfig {
                block_stride: 0,
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn matrix_rows_and_errors() {
        let a = GrayImage::from_fn(16, 16, |x, y| (x * y) as u8);
        let b = GrayImage::from_fn(16, 16, |x, _| (x * 9) as u8);
        let cfg = HogConfig::default();
        let m = hog_matrix(&[a.clone(), b, a.clone()], &cfg).unwrap();
        assert_eq!(m.shape(), (3, 36));
        assert_eq!(m.row(0), m.row(2));
        assert_eq!(m.row(0), compute_hog(&a, &cfg).unwrap().values.as_slice());

        assert!(hog_matrix(&[], &cfg).is_err());
        let odd = GrayImage::from_fn(24, 16, |_, _| 0);
        let err = hog_matrix(&[a.clone(), a, odd], &cfg).unwrap_err();
        assert!(err.to_string().contains("image 2"), "{err}");
    }
}
