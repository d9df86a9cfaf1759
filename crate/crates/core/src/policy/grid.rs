use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::BBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSize {
    pub w: u32,
    pub h: u32,
}

/// A zoom window in high-resolution coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoomAction {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub size_class: usize,
}

/// Sliding-window lattice for one window size, strides `(W/2, H/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeClass {
    pub size: WindowSize,
    pub stride_x: f64,
    pub stride_y: f64,
    pub cols: usize,
    pub rows: usize,
}

impl SizeClass {
    pub fn len(&self) -> usize {
        self.cols * self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Every candidate zoom window. Actions are numbered size class by size
/// class in declaration order, row-major within a class.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionGrid {
    frame_w: u32,
    frame_h: u32,
    classes: Vec<SizeClass>,
    offsets: Vec<usize>,
}

fn positions(frame: u32, window: u32) -> usize {
    let stride = window as f64 / 2.0;
    ((frame - window) as f64 / stride).floor() as usize + 1
}

pub fn build_action_grid(frame_w: u32, frame_h: u32, windows: &[WindowSize]) -> Result<ActionGrid> {
    if windows.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut classes = Vec::with_capacity(windows.len());
    let mut offsets = Vec::with_capacity(windows.len());
    let mut total = 0;
    for &size in windows {
        if size.w == 0 || size.h == 0 || size.w > frame_w || size.h > frame_h {
            return Err(Error::Config(format!(
                "window {}x{} does not fit the {frame_w}x{frame_h} frame",
                size.w, size.h
            )));
        }
        let class = SizeClass {
            size,
            stride_x: size.w as f64 / 2.0,
            stride_y: size.h as f64 / 2.0,
            cols: positions(frame_w, size.w),
            rows: positions(frame_h, size.h),
        };
        offsets.push(total);
        total += class.len();
        classes.push(class);
    }
    Ok(ActionGrid { frame_w, frame_h, classes, offsets })
}

impl ActionGrid {
    pub fn len(&self) -> usize {
        self.offsets.last().copied().unwrap_or(0) + self.classes.last().map_or(0, SizeClass::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn frame(&self) -> (u32, u32) {
        (self.frame_w, self.frame_h)
    }

    pub fn classes(&self) -> &[SizeClass] {
        &self.classes
    }

    pub fn windows(&self) -> Vec<WindowSize> {
        self.classes.iter().map(|c| c.size).collect()
    }

    /// `(size class, column, row)` of an action index.
    pub fn locate(&self, index: usize) -> (usize, usize, usize) {
        let class = self.offsets.iter().rposition(|&o| o <= index).expect("index within grid");
        let local = index - self.offsets[class];
        let c = &self.classes[class];
        (class, local % c.cols, local / c.cols)
    }

    pub fn offset(&self, class: usize) -> usize {
        self.offsets[class]
    }

    pub fn action(&self, index: usize) -> ZoomAction {
        let (class, col, row) = self.locate(index);
        let c = &self.classes[class];
        ZoomAction {
            bbox: BBox { x: col as f64 * c.stride_x, y: row as f64 * c.stride_y, w: c.size.w as f64, h: c.size.h as f64 },
            size_class: class,
        }
    }

    pub fn actions(&self) -> impl Iterator<Item = ZoomAction> + '_ {
        (0..self.len()).map(|i| self.action(i))
    }
}
