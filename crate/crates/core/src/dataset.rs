//! Image/label collections consumed by the trainer.

use crate::rng::RngStream;
use crate::scenegen::{make_domain, DomainPreset, SceneError};
use crate::types::{ImageBuf, LabelMap};

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImage {
    pub image: ImageBuf,
    /// Ground truth. For generated data only the segmenter oracle and
    /// evaluation may read it.
    pub labels: LabelMap,
}

/// Random-access collection of labeled images.
pub trait SampleSource: Sync {
    fn len(&self) -> usize;

    fn get(&self, index: usize) -> LabeledImage;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl SampleSource for [LabeledImage] {
    fn len(&self) -> usize {
        <[LabeledImage]>::len(self)
    }

    fn get(&self, index: usize) -> LabeledImage {
        self[index].clone()
    }
}

impl SampleSource for Vec<LabeledImage> {
    fn len(&self) -> usize {
        Vec::len(self)
    }

    fn get(&self, index: usize) -> LabeledImage {
        self[index].clone()
    }
}

/// Draws `count` samples from a domain preset.
pub fn domain_set(preset: DomainPreset, rng: &RngStream, count: usize, width: usize, height: usize) -> Result<Vec<LabeledImage>, SceneError> {
    let generator = make_domain(preset, rng, width, height)?;
    Ok(generator
        .take(count)
        .map(|s| LabeledImage {
            image: s.image,
            labels: s.labels,
        })
        .collect())
}

/// Generated images rendered on demand. Image `i` depends only on the pool
/// seed and `i`, so a smaller pool is a prefix of a larger one.
#[derive(Clone, Debug)]
pub struct GeneratedPool {
    rng: RngStream,
    size: usize,
    width: usize,
    height: usize,
}

impl GeneratedPool {
    pub fn new(rng: &RngStream, size: usize, width: usize, height: usize) -> Result<Self, SceneError> {
        // Fail early on bad dimensions.
        make_domain(DomainPreset::Generated, rng, width, height)?;
        Ok(Self {
            rng: rng.fork("generated-pool"),
            size,
            width,
            height,
        })
    }

    pub fn sample(&self, index: usize) -> crate::scenegen::Sample {
        make_domain(DomainPreset::Generated, &self.rng.fork_index(index as u64), self.width, self.height)
            .expect("dimensions checked at construction")
            .next_sample()
    }
}

impl SampleSource for GeneratedPool {
    fn len(&self) -> usize {
        self.size
    }

    fn get(&self, index: usize) -> LabeledImage {
        assert!(index < self.size, "pool index {index} out of range {}", self.size);
        let s = self.sample(index);
        LabeledImage {
            image: s.image,
            labels: s.labels,
        }
    }
}
