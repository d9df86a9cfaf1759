use crate::agmap::AccuracyGainMap;
use crate::geom::BBox;

use super::grid::ZoomAction;

/// Shifts a window by `±mu` on each axis (clipped to the frame) and keeps the
/// candidate with the largest AG-map sum. Ties keep the original window,
/// otherwise the first candidate in row-major shift order wins.
pub fn refine_window(action: &ZoomAction, state: &AccuracyGainMap, mu: (f64, f64), frame: (u32, u32)) -> ZoomAction {
    refine_window_excluding(action, state, mu, frame, &[])
}

/// As [`refine_window`], skipping any shifted candidate equal to a window in
/// `exclude`.
pub fn refine_window_excluding(
    action: &ZoomAction,
    state: &AccuracyGainMap,
    mu: (f64, f64),
    frame: (u32, u32),
    exclude: &[BBox],
) -> ZoomAction {
    let b = action.bbox;
    let max_x = (frame.0 as f64 - b.w).max(0.0);
    let max_y = (frame.1 as f64 - b.h).max(0.0);
    let mut best = *action;
    let mut best_sum = state.region_sum(&b);
    for dy in [-mu.1, 0.0, mu.1] {
        for dx in [-mu.0, 0.0, mu.0] {
            let candidate = BBox { x: (b.x + dx).clamp(0.0, max_x), y: (b.y + dy).clamp(0.0, max_y), ..b };
            if candidate == b || exclude.contains(&candidate) {
                continue;
            }
            let sum = state.region_sum(&candidate);
            if sum > best_sum {
                best_sum = sum;
                best = ZoomAction { bbox: candidate, size_class: action.size_class };
            }
        }
    }
    best
}
