//! Student-side photometric and geometric augmentation.

use crate::rng::RngStream;
use crate::scenegen::HueRotation;
use crate::types::{ImageBuf, LabelMap};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentConfig {
    pub flip_prob: f64,
    /// Relative jitter half-width for brightness, contrast and hue.
    pub jitter: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            flip_prob: 0.5,
            jitter: 0.2,
        }
    }
}

impl AugmentConfig {
    pub const NONE: AugmentConfig = AugmentConfig {
        flip_prob: 0.0,
        jitter: 0.0,
    };
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentRecord {
    pub flipped: bool,
    pub brightness: f64,
    pub contrast: f64,
    pub hue_turns: f64,
}

/// Augments an image/label pair. Labels only follow the geometric part.
pub fn augment(image: &ImageBuf, labels: &LabelMap, cfg: AugmentConfig, rng: &mut RngStream) -> (ImageBuf, LabelMap, AugmentRecord) {
    let flipped = rng.bernoulli(cfg.flip_prob);
    let brightness = 1.0 + cfg.jitter * rng.uniform_range(-1.0, 1.0);
    let contrast = 1.0 + cfg.jitter * rng.uniform_range(-1.0, 1.0);
    // Hue jitter is a fraction of a full turn, scaled down so 20% stays mild.
    let hue_turns = 0.1 * cfg.jitter * rng.uniform_range(-1.0, 1.0);
    let record = AugmentRecord {
        flipped,
        brightness,
        contrast,
        hue_turns,
    };

    let (mut img, lab) = if flipped {
        (image.flip_horizontal(), labels.flip_horizontal())
    } else {
        (image.clone(), labels.clone())
    };
    if cfg.jitter > 0.0 {
        let means = img.channel_means();
        let mean = (means[0] + means[1] + means[2]) / 3.0;
        let hue = HueRotation::new(hue_turns);
        img.map_rgb(|_, _, c| {
            let rotated = hue.apply(c.map(f64::from));
            rotated.map(|v| ((mean + (v - mean) * contrast) * brightness).clamp(0.0, 1.0) as f32)
        });
    }
    (img, lab, record)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair() -> (ImageBuf, LabelMap) {
        let mut img = ImageBuf::filled(5, 3, [0.4, 0.5, 0.6]);
        let mut lab = LabelMap::filled(5, 3, 1);
        img.set_rgb(0, 1, [0.9, 0.1, 0.1]);
        lab.set(0, 1, 4);
        (img, lab)
    }

    #[test]
    fn identity_config() {
        let (img, lab) = pair();
        let (a, b, rec) = augment(&img, &lab, AugmentConfig::NONE, &mut RngStream::new(0));
        assert_eq!((a, b), (img, lab));
        assert!(!rec.flipped);
    }

    #[test]
    fn forced_flip_moves_labels_with_pixels() {
        let (img, lab) = pair();
        let cfg = AugmentConfig {
            flip_prob: 1.0,
            jitter: 0.0,
        };
        let (a, b, rec) = augment(&img, &lab, cfg, &mut RngStream::new(0));
        assert!(rec.flipped);
        assert_eq!(b.get(4, 1), 4);
        assert_eq!(a.rgb(4, 1), [0.9, 0.1, 0.1]);
    }

    #[test]
    fn jitter_leaves_labels_alone() {
        let (img, lab) = pair();
        let cfg = AugmentConfig {
            flip_prob: 0.0,
            jitter: 0.2,
        };
        let (a, b, rec) = augment(&img, &lab, cfg, &mut RngStream::new(11));
        assert_eq!(b, lab);
        assert!((0.8..=1.2).contains(&rec.brightness) && (0.8..=1.2).contains(&rec.contrast));
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
