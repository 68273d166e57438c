//! Point-promptable, class-agnostic segmenters.
//!
//! These stand in for a promptable foundation segmenter. They read the hidden
//! ground truth instead of the image, which makes their output exactly
//! predictable and lets the refinement pipeline be tested against theorems
//! rather than against a learned model.

use std::collections::VecDeque;

use thiserror::Error;

use crate::maskops::BinaryMask;
use crate::rng::RngStream;
use crate::types::{ClassId, ImageBuf, LabelMap};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegmenterError {
    #[error("no prompt points given")]
    NoPoints,
    #[error("prompt point ({x}, {y}) outside {width}x{height} image")]
    PointOutOfBounds {
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },
    #[error("ground truth is {0}x{1} but image is {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("invalid segmenter parameters: {0}")]
    InvalidKind(String),
}

/// A prompt point. `claimed_class` records which pseudo-label class produced
/// the point; segmenters never look at it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PointPrompt {
    pub x: usize,
    pub y: usize,
    pub claimed_class: ClassId,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SegmenterKind {
    /// Returns the union of the ground-truth regions under the points.
    Perfect,
    /// Perfect mask whose boundary pixels randomly move out or in by up to
    /// `radius` pixels, then Bernoulli(`flip_rate`) flips inside the band.
    Noisy { radius: usize, flip_rate: f64 },
    /// Ignores the prompt and returns a fixed mask.
    Constant(BinaryMask),
}

impl SegmenterKind {
    pub fn validate(&self) -> Result<(), SegmenterError> {
        match self {
            SegmenterKind::Noisy { flip_rate, .. } if !(0.0..=1.0).contains(flip_rate) => Err(
                SegmenterError::InvalidKind(format!("flip rate {flip_rate} outside [0, 1]")),
            ),
            _ => Ok(()),
        }
    }
}

/// Unions into `out` the ground-truth region (4-connected, same label)
/// containing `seed`. `out` must not already contain any pixel of it.
fn flood_region(gt: &LabelMap, seed: usize, out: &mut BinaryMask, queue: &mut VecDeque<usize>) {
    let (w, h) = (gt.width(), gt.height());
    let labels = gt.labels();
    let target = labels[seed];
    queue.clear();
    out.set_index(seed, true);
    queue.push_back(seed);
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % w, i / w);
        let mut visit = |j: usize| {
            if !out.get_index(j) && labels[j] == target {
                out.set_index(j, true);
                queue.push_back(j);
            }
        };
        if x > 0 {
            visit(i - 1);
        }
        if x + 1 < w {
            visit(i + 1);
        }
        if y > 0 {
            visit(i - w);
        }
        if y + 1 < h {
            visit(i + w);
        }
    }
}

/// Union of the ground-truth regions containing each point.
pub fn perfect_mask(gt: &LabelMap, points: &[PointPrompt]) -> BinaryMask {
    let mut out = BinaryMask::empty(gt.width(), gt.height());
    let mut queue = VecDeque::new();
    for p in points {
        let seed = p.y * gt.width() + p.x;
        // A covered seed means its whole region is already in.
        if !out.get_index(seed) {
            flood_region(gt, seed, &mut out, &mut queue);
        }
    }
    out
}

/// Set pixels with at least one 4-neighbour outside the mask. The image
/// border is not a boundary.
pub fn inner_boundary(mask: &BinaryMask) -> Vec<(usize, usize)> {
    let (w, h) = (mask.width(), mask.height());
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let outside = (x > 0 && !mask.get(x - 1, y))
                || (x + 1 < w && !mask.get(x + 1, y))
                || (y > 0 && !mask.get(x, y - 1))
                || (y + 1 < h && !mask.get(x, y + 1));
            if outside {
                out.push((x, y));
            }
        }
    }
    out
}

/// Pixels within Chebyshev distance `radius` of the inner boundary.
pub fn boundary_band(mask: &BinaryMask, radius: usize) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let mut band = BinaryMask::empty(w, h);
    for (bx, by) in inner_boundary(mask) {
        fill_square(&mut band, bx, by, radius, true);
    }
    band
}

fn fill_square(mask: &mut BinaryMask, cx: usize, cy: usize, radius: usize, value: bool) {
    let x0 = cx.saturating_sub(radius);
    let y0 = cy.saturating_sub(radius);
    let x1 = (cx + radius).min(mask.width() - 1);
    let y1 = (cy + radius).min(mask.height() - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            mask.set(x, y, value);
        }
    }
}

/// Sets pixels within Euclidean distance `radius` of `(cx, cy)`.
fn fill_disc(mask: &mut BinaryMask, cx: usize, cy: usize, radius: usize, value: bool) {
    let r2 = (radius * radius) as isize;
    let r = radius as isize;
    for dy in -r..=r {
        for dx in -r..=r {
            let (x, y) = (cx as isize + dx, cy as isize + dy);
            if dx * dx + dy * dy <= r2 && x >= 0 && y >= 0 && (x as usize) < mask.width() && (y as usize) < mask.height() {
                mask.set(x as usize, y as usize, value);
            }
        }
    }
}

fn perturb(perfect: &BinaryMask, radius: usize, flip_rate: f64, rng: &mut RngStream) -> BinaryMask {
    let boundary = inner_boundary(perfect);
    let mut out = perfect.clone();
    if radius > 0 {
        for &(x, y) in &boundary {
            let action = rng.below(4);
            let d = 1 + rng.below(radius);
            // A disc of radius d around a boundary pixel pushes the edge d
            // pixels outward; clearing radius d - 1 pulls it d pixels inward.
            match action {
                0 => fill_disc(&mut out, x, y, d, true),
                1 => fill_disc(&mut out, x, y, d - 1, false),
                _ => {}
            }
        }
    }
    if flip_rate > 0.0 {
        let band = boundary_band(perfect, radius);
        for i in band.set_indices() {
            if rng.bernoulli(flip_rate) {
                out.set_index(i, !out.get_index(i));
            }
        }
    }
    out
}

/// Prompts the segmenter with `points` jointly and returns one binary mask.
///
/// `hidden_gt` is the ground truth of the image; only the segmenter sees it.
pub fn segment_at_points(
    image: &ImageBuf,
    hidden_gt: &LabelMap,
    points: &[PointPrompt],
    kind: &SegmenterKind,
    rng: &mut RngStream,
) -> Result<BinaryMask, SegmenterError> {
    let (w, h) = (image.width(), image.height());
    if hidden_gt.width() != w || hidden_gt.height() != h {
        return Err(SegmenterError::DimensionMismatch(
            hidden_gt.width(),
            hidden_gt.height(),
            w,
            h,
        ));
    }
    if points.is_empty() {
        return Err(SegmenterError::NoPoints);
    }
    if let Some(p) = points.iter().find(|p| p.x >= w || p.y >= h) {
        return Err(SegmenterError::PointOutOfBounds {
            x: p.x,
            y: p.y,
            width: w,
            height: h,
        });
    }
    kind.validate()?;
    match kind {
        SegmenterKind::Perfect => Ok(perfect_mask(hidden_gt, points)),
        SegmenterKind::Noisy { radius, flip_rate } => {
            let perfect = perfect_mask(hidden_gt, points);
            Ok(perturb(&perfect, *radius, *flip_rate, rng))
        }
        SegmenterKind::Constant(mask) => {
            if mask.width() != w || mask.height() != h {
                return Err(SegmenterError::DimensionMismatch(
                    mask.width(),
                    mask.height(),
                    w,
                    h,
                ));
            }
            Ok(mask.clone())
        }
    }
}
