//! Accuracy-gain map: per-cell predicted zoom-in gain over the down-sampled frame.
//!
//! Cell `(i, j)` of the map covers the high-resolution footprint
//! `[i·s, (i+1)·s) × [j·s, (j+1)·s)` where `s` is `coordinate_scale`.
//! A proposal box claims the cells whose centers it contains; a zoom region
//! claims the cells whose whole footprint it covers.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geom::BBox;
use crate::nn::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyGainMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    coordinate_scale: f64,
}

/// Inclusive-exclusive cell index ranges `(x0, x1, y0, y1)`.
type CellRange = (usize, usize, usize, usize);

impl AccuracyGainMap {
    pub fn zeros(width: usize, height: usize, coordinate_scale: f64) -> Self {
        AccuracyGainMap { width, height, values: vec![0.0; width * height], coordinate_scale }
    }

    pub fn from_values(width: usize, height: usize, values: Vec<f64>, coordinate_scale: f64) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::Dimension { expected: width * height, got: values.len() });
        }
        Ok(AccuracyGainMap { width, height, values, coordinate_scale })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn coordinate_scale(&self) -> f64 {
        self.coordinate_scale
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.values[y * self.width + x] = v;
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn positive_sum(&self) -> f64 {
        self.values.iter().filter(|v| **v > 0.0).sum()
    }

    /// Cells whose high-resolution footprint lies inside `region`.
    fn footprint_cells(&self, region: &BBox) -> Option<CellRange> {
        let s = self.coordinate_scale;
        let x0 = (region.x / s).ceil().max(0.0);
        let y0 = (region.y / s).ceil().max(0.0);
        let x1 = (region.right() / s).floor().min(self.width as f64);
        let y1 = (region.bottom() / s).floor().min(self.height as f64);
        (x1 > x0 && y1 > y0).then_some((x0 as usize, x1 as usize, y0 as usize, y1 as usize))
    }

    /// Sum of the cells covered by `region` (high-resolution coordinates).
    pub fn region_sum(&self, region: &BBox) -> f64 {
        let Some((x0, x1, y0, y1)) = self.footprint_cells(region) else {
            return 0.0;
        };
        let mut total = 0.0;
        for y in y0..y1 {
            total += self.values[y * self.width + x0..y * self.width + x1].iter().sum::<f64>();
        }
        total
    }

    /// Sets every cell covered by `region` to zero. Idempotent.
    pub fn zero_region(&mut self, region: &BBox) {
        if let Some((x0, x1, y0, y1)) = self.footprint_cells(region) {
            for y in y0..y1 {
                self.values[y * self.width + x0..y * self.width + x1].fill(0.0);
            }
        }
    }

    /// Sum-pools `factor × factor` blocks into a `[1, h/factor, w/factor]` tensor.
    pub fn pooled(&self, factor: usize) -> Tensor {
        let factor = factor.max(1);
        let (pw, ph) = (self.width / factor, self.height / factor);
        let mut data = vec![0.0; pw * ph];
        for py in 0..ph {
            for y in py * factor..(py + 1) * factor {
                let row = &self.values[y * self.width..(y + 1) * self.width];
                for (px, out) in data[py * pw..(py + 1) * pw].iter_mut().enumerate() {
                    *out += row[px * factor..(px + 1) * factor].iter().sum::<f64>();
                }
            }
        }
        Tensor::new(vec![1, ph, pw], data).expect("pooled shape")
    }

    /// Whitespace-separated rows, one line per map row.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for y in 0..self.height {
            let row = &self.values[y * self.width..(y + 1) * self.width];
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{v:.6e}");
            }
            out.push('\n');
        }
        out
    }
}

/// Spreads each proposal's gain uniformly over the cells whose centers lie in
/// its box (map coordinates): every such cell receives `alpha · gain / b`,
/// with `b` the number of claimed cells. Overlapping proposals add up.
///
/// A box too thin to contain any cell center claims the single cell under its
/// center.
pub fn build_ag_map(
    proposals: &[(BBox, f64)],
    width: usize,
    height: usize,
    alpha: f64,
    coordinate_scale: f64,
) -> Result<AccuracyGainMap> {
    let mut map = AccuracyGainMap::zeros(width, height, coordinate_scale);
    for (b, gain) in proposals {
        if !b.is_valid() {
            return Err(Error::InvalidBox(*b));
        }
        // Cell i has center i + 0.5; it is inside [x, x+w) iff x <= i + 0.5 < x + w.
        let lo = |v: f64, n: usize| ((v - 0.5).ceil().max(0.0) as usize).min(n);
        let hi = |v: f64, n: usize| (((v - 0.5).ceil()).max(0.0) as usize).min(n);
        let (x0, x1) = (lo(b.x, width), hi(b.right(), width));
        let (y0, y1) = (lo(b.y, height), hi(b.bottom(), height));
        let count = x1.saturating_sub(x0) * y1.saturating_sub(y0);
        if count > 0 {
            let per_cell = alpha * gain / count as f64;
            for y in y0..y1 {
                for v in &mut map.values[y * width + x0..y * width + x1] {
                    *v += per_cell;
                }
            }
        } else {
            let (cx, cy) = b.center();
            if cx >= 0.0 && cy >= 0.0 && (cx as usize) < width && (cy as usize) < height {
                map.values[cy as usize * width + cx as usize] += alpha * gain;
            }
        }
    }
    Ok(map)
}
