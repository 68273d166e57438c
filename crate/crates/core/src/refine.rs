//! Pseudo-label refinement with a promptable segmenter.
//!
//! For every class the pseudo-label mask is split into connected components,
//! components below the area threshold are dropped, and each survivor is
//! prompted with up to `k` random points drawn inside it. The returned masks
//! are tagged with the component's class and aggregated: a pixel covered by
//! exactly one class takes that class, anything else becomes UNLABELED.
//! UNLABELED input pixels belong to no class and are never prompted.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::maskops::{connected_components, extract_class_mask, filter_components, BinaryMask, MaskError};
use crate::rng::RngStream;
use crate::segmenter::{segment_at_points, PointPrompt, SegmenterError, SegmenterKind};
use crate::types::{ImageBuf, LabelMap, UNLABELED};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RefineError {
    #[error(transparent)]
    Segmenter(#[from] SegmenterError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("pseudo labels are {0}x{1} but image is {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("pseudo label {value} at index {index} exceeds class count {class_count}")]
    LabelOutOfRange {
        index: usize,
        value: u8,
        class_count: usize,
    },
    #[error("points per component must be >= 1")]
    ZeroPoints,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementReport {
    pub components_found: Vec<usize>,
    pub components_filtered: Vec<usize>,
    pub components_prompted: Vec<usize>,
    /// Pixels covered by masks of two or more classes.
    pub overlap_pixels: usize,
    pub unlabeled_pixels: usize,
}

impl RefinementReport {
    pub fn new(class_count: usize) -> Self {
        Self {
            components_found: vec![0; class_count],
            components_filtered: vec![0; class_count],
            components_prompted: vec![0; class_count],
            overlap_pixels: 0,
            unlabeled_pixels: 0,
        }
    }

    pub fn merge(&mut self, other: &RefinementReport) {
        let add = |a: &mut Vec<usize>, b: &[usize]| {
            if a.len() < b.len() {
                a.resize(b.len(), 0);
            }
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        };
        add(&mut self.components_found, &other.components_found);
        add(&mut self.components_filtered, &other.components_filtered);
        add(&mut self.components_prompted, &other.components_prompted);
        self.overlap_pixels += other.overlap_pixels;
        self.unlabeled_pixels += other.unlabeled_pixels;
    }

    pub fn total_prompted(&self) -> usize {
        self.components_prompted.iter().sum()
    }
}

/// Refinement output with the per-class aggregate masks kept for inspection.
#[derive(Clone, Debug)]
pub struct RefinementDetail {
    pub refined: LabelMap,
    pub report: RefinementReport,
    /// Union of the segmenter masks returned for each class's components.
    pub class_cover: Vec<BinaryMask>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RefineParams {
    /// Components with fewer pixels are dropped before prompting.
    pub min_area: usize,
    pub points: usize,
}

pub fn refine_pseudo_labels(
    image: &ImageBuf,
    pseudo: &LabelMap,
    hidden_gt: &LabelMap,
    segmenter: &SegmenterKind,
    class_count: usize,
    params: RefineParams,
    rng: &mut RngStream,
) -> Result<(LabelMap, RefinementReport), RefineError> {
    let d = refine_detailed(image, pseudo, hidden_gt, segmenter, class_count, params, rng)?;
    Ok((d.refined, d.report))
}

pub fn refine_detailed(
    image: &ImageBuf,
    pseudo: &LabelMap,
    hidden_gt: &LabelMap,
    segmenter: &SegmenterKind,
    class_count: usize,
    params: RefineParams,
    rng: &mut RngStream,
) -> Result<RefinementDetail, RefineError> {
    let (w, h) = (image.width(), image.height());
    if pseudo.width() != w || pseudo.height() != h {
        return Err(RefineError::DimensionMismatch(pseudo.width(), pseudo.height(), w, h));
    }
    if params.points == 0 {
        return Err(RefineError::ZeroPoints);
    }
    for (index, &value) in pseudo.labels().iter().enumerate() {
        if value != UNLABELED && value as usize >= class_count {
            return Err(RefineError::LabelOutOfRange {
                index,
                value,
                class_count,
            });
        }
    }

    let mut report = RefinementReport::new(class_count);
    let mut class_cover = Vec::with_capacity(class_count);
    let mut prompts = Vec::with_capacity(params.points);

    for class in 0..class_count {
        let mask = extract_class_mask(pseudo, class as u8, class_count)?;
        let labeling = connected_components(&mask);
        let kept = filter_components(&labeling, params.min_area);
        report.components_found[class] = labeling.count();
        report.components_filtered[class] = labeling.count() - kept.count();
        report.components_prompted[class] = kept.count();

        let mut cover = BinaryMask::empty(w, h);
        for pixels in kept.pixel_lists() {
            prompts.clear();
            for j in rng.sample_distinct(pixels.len(), params.points) {
                let i = pixels[j];
                prompts.push(PointPrompt {
                    x: i % w,
                    y: i / w,
                    claimed_class: class as u8,
                });
            }
            let returned = segment_at_points(image, hidden_gt, &prompts, segmenter, rng)?;
            cover.union_with(&returned)?;
        }
        class_cover.push(cover);
    }

    let mut refined = LabelMap::filled(w, h, UNLABELED);
    let labels = refined.labels_mut();
    for (i, out) in labels.iter_mut().enumerate() {
        let mut owner = None;
        let mut covering = 0usize;
        for (class, cover) in class_cover.iter().enumerate() {
            if cover.get_index(i) {
                covering += 1;
                owner = Some(class as u8);
            }
        }
        match covering {
            0 => {}
            1 => *out = owner.unwrap(),
            _ => report.overlap_pixels += 1,
        }
    }
    report.unlabeled_pixels = refined.unlabeled_count();

    Ok(RefinementDetail {
        refined,
        report,
        class_cover,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(min_area: usize, points: usize) -> RefineParams {
        RefineParams { min_area, points }
    }

    #[test]
    fn single_class_image_is_reproduced() {
        let gt = LabelMap::filled(12, 10, 2);
        let img = ImageBuf::filled(12, 10, [0.3; 3]);
        let (refined, report) =
            refine_pseudo_labels(&img, &gt, &gt, &SegmenterKind::Perfect, 4, params(1, 1), &mut RngStream::new(0))
                .unwrap();
        assert_eq!(refined, gt);
        assert_eq!(report.unlabeled_pixels, 0);
        assert_eq!(report.components_prompted, vec![0, 0, 1, 0]);
    }

    #[test]
    fn cross_class_overlap_becomes_unlabeled() {
        // GT has a 3x2 class-1 block on class 0. The pseudo labels split the
        // block between class 1 and class 2, so both components get the whole
        // block back from the oracle.
        let (w, h) = (12, 8);
        let mut gt = LabelMap::filled(w, h, 0);
        let mut pl = LabelMap::filled(w, h, 0);
        for y in 2..4 {
            for x in 4..7 {
                gt.set(x, y, 1);
                pl.set(x, y, if x < 6 { 1 } else { 2 });
            }
        }
        let img = ImageBuf::filled(w, h, [0.5; 3]);
        let detail = refine_detailed(&img, &pl, &gt, &SegmenterKind::Perfect, 3, params(1, 1), &mut RngStream::new(1))
            .unwrap();
        assert_eq!(detail.report.overlap_pixels, 6);
        for y in 2..4 {
            for x in 4..7 {
                assert_eq!(detail.refined.get(x, y), UNLABELED);
            }
        }
        assert_eq!(detail.report.unlabeled_pixels, 6);
        assert_eq!(detail.refined.labels().iter().filter(|&&l| l == 0).count(), w * h - 6);
    }

    #[test]
    fn same_class_masks_merge_without_conflict() {
        // Two class-1 components split by a thin class-0 column that the area
        // filter drops; both return the same GT region and merge cleanly.
        let gt = LabelMap::filled(6, 6, 1);
        let mut pl = LabelMap::filled(6, 6, 1);
        for y in 0..6 {
            pl.set(3, y, 0);
        }
        let img = ImageBuf::filled(6, 6, [0.5; 3]);
        let (refined, report) =
            refine_pseudo_labels(&img, &pl, &gt, &SegmenterKind::Perfect, 2, params(7, 1), &mut RngStream::new(2))
                .unwrap();
        assert_eq!(report.components_found, vec![1, 2]);
        assert_eq!(report.components_filtered, vec![1, 0]);
        assert_eq!(report.overlap_pixels, 0);
        assert_eq!(refined, gt);
    }

    #[test]
    fn unlabeled_pseudo_labels_are_never_prompted() {
        let mut pl = LabelMap::filled(4, 4, UNLABELED);
        pl.set(1, 1, 1);
        let gt = LabelMap::filled(4, 4, 1);
        let img = ImageBuf::filled(4, 4, [0.5; 3]);
        let (refined, report) =
            refine_pseudo_labels(&img, &pl, &gt, &SegmenterKind::Perfect, 2, params(1, 1), &mut RngStream::new(0))
                .unwrap();
        assert_eq!(report.components_found, vec![0, 1]);
        assert_eq!(refined, gt);
        let blank = LabelMap::filled(4, 4, UNLABELED);
        let (refined, report) =
            refine_pseudo_labels(&img, &blank, &gt, &SegmenterKind::Perfect, 2, params(1, 1), &mut RngStream::new(0))
                .unwrap();
        assert_eq!(report.total_prompted(), 0);
        assert_eq!(refined, blank);
    }

    #[test]
    fn dimension_mismatch() {
        let pl = LabelMap::filled(4, 4, 0);
        let img = ImageBuf::filled(5, 4, [0.5; 3]);
        assert!(matches!(
            refine_pseudo_labels(&img, &pl, &pl, &SegmenterKind::Perfect, 2, params(1, 1), &mut RngStream::new(0)),
            Err(RefineError::DimensionMismatch(..))
        ));
    }
}
