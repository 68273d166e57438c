//! Frozen per-pixel feature extractor.

use crate::types::ImageBuf;

/// Feature channels: r, g, b, x, y, 3x3 luminance mean, 3x3 luminance std, bias.
pub const FEATURE_DIM: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl FeatureMap {
    /// Wraps precomputed features (`FEATURE_DIM` per pixel).
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Option<Self> {
        (values.len() == width * height * FEATURE_DIM).then_some(Self { width, height, values })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dim(&self) -> usize {
        FEATURE_DIM
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Row-major, `FEATURE_DIM` values per pixel.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn pixel(&self, i: usize) -> &[f64] {
        &self.values[i * FEATURE_DIM..(i + 1) * FEATURE_DIM]
    }
}

#[inline]
pub fn luminance(rgb: [f32; 3]) -> f64 {
    0.299 * rgb[0] as f64 + 0.587 * rgb[1] as f64 + 0.114 * rgb[2] as f64
}

/// Computes the hand-crafted feature map of an RGB image. Neighbourhoods
/// clamp at the image border.
pub fn extract_features(image: &ImageBuf) -> FeatureMap {
    assert_eq!(image.channels(), 3, "features need an RGB image");
    let (w, h) = (image.width(), image.height());
    let lum: Vec<f64> = (0..w * h).map(|i| luminance(image.rgb(i % w, i / w))).collect();
    let xs = if w > 1 { 1.0 / (w - 1) as f64 } else { 0.0 };
    let ys = if h > 1 { 1.0 / (h - 1) as f64 } else { 0.0 };

    let mut values = Vec::with_capacity(w * h * FEATURE_DIM);
    for y in 0..h {
        for x in 0..w {
            let mut window = [0.0f64; 9];
            let mut k = 0;
            for dy in -1isize..=1 {
                let yy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                for dx in -1isize..=1 {
                    let xx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                    window[k] = lum[yy * w + xx];
                    k += 1;
                }
            }
            let (mean, var) = if window.iter().all(|&v| v == window[0]) {
                (window[0], 0.0)
            } else {
                let mean = window.iter().sum::<f64>() / 9.0;
                (mean, window.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 9.0)
            };
            let [r, g, b] = image.rgb(x, y);
            values.extend_from_slice(&[
                r as f64,
                g as f64,
                b as f64,
                x as f64 * xs,
                y as f64 * ys,
                mean,
                var.sqrt(),
                1.0,
            ]);
        }
    }
    FeatureMap {
        width: w,
        height: h,
        values,
    }
}
