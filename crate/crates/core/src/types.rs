//! Shared image, label-map and class-catalog types.

use std::collections::HashSet;

use thiserror::Error;

/// Label value reserved for pixels that carry no supervision.
///
/// Matches the usual segmentation ignore index so label files stay
/// interoperable with other tooling.
pub const UNLABELED: u8 = 255;

/// Class index into a [`ClassCatalog`].
pub type ClassId = u8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    #[error("buffer length {actual} does not match {width}x{height}x{channels} = {expected}")]
    BufferLength {
        width: usize,
        height: usize,
        channels: usize,
        expected: usize,
        actual: usize,
    },
    #[error("pixel value {value} at index {index} is outside [0, 1]")]
    ValueOutOfRange { index: usize, value: f32 },
    #[error("label {value} at pixel {index} is not a valid class (class count {class_count})")]
    LabelOutOfRange {
        index: usize,
        value: u8,
        class_count: usize,
    },
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("invalid class catalog: {0}")]
    Catalog(String),
}

/// Row-major interleaved float image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuf {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ImageBuf {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self, CoreError> {
        let expected = width * height * channels;
        if data.len() != expected {
            return Err(CoreError::BufferLength {
                width,
                height,
                channels,
                expected,
                actual: data.len(),
            });
        }
        if let Some((index, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(CoreError::ValueOutOfRange { index, value });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// RGB image filled with one color.
    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let rgb = rgb.map(|v| v.clamp(0.0, 1.0));
        let data = (0..width * height).flat_map(|_| rgb).collect();
        Self {
            width,
            height,
            channels: 3,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Writes a value, clamping it into `[0, 1]`.
    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, value: f32) {
        self.data[(y * self.width + x) * self.channels + c] = value.clamp(0.0, 1.0);
    }

    #[inline]
    pub fn rgb(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * self.channels;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_rgb(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * self.channels;
        for (c, v) in rgb.into_iter().enumerate() {
            self.data[i + c] = v.clamp(0.0, 1.0);
        }
    }

    /// Applies `f` to every RGB triple and clamps the result.
    pub fn map_rgb(&mut self, mut f: impl FnMut(usize, usize, [f32; 3]) -> [f32; 3]) {
        assert_eq!(self.channels, 3, "map_rgb requires an RGB image");
        for y in 0..self.height {
            for x in 0..self.width {
                let out = f(x, y, self.rgb(x, y));
                self.set_rgb(x, y, out);
            }
        }
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for y in 0..self.height {
            for x in (0..self.width).rev() {
                let i = (y * self.width + x) * self.channels;
                data.extend_from_slice(&self.data[i..i + self.channels]);
            }
        }
        Self { data, ..*self }
    }

    /// Per-channel mean over all pixels.
    pub fn channel_means(&self) -> Vec<f64> {
        let mut sums = vec![0.0f64; self.channels];
        for px in self.data.chunks_exact(self.channels) {
            for (s, &v) in sums.iter_mut().zip(px) {
                *s += v as f64;
            }
        }
        let n = self.pixel_count().max(1) as f64;
        sums.into_iter().map(|s| s / n).collect()
    }
}

/// Row-major per-pixel class ids; [`UNLABELED`] marks ignored pixels.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self, CoreError> {
        if labels.len() != width * height {
            return Err(CoreError::BufferLength {
                width,
                height,
                channels: 1,
                expected: width * height,
                actual: labels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn filled(width: usize, height: usize, label: u8) -> Self {
        Self {
            width,
            height,
            labels: vec![label; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [u8] {
        &mut self.labels
    }

    pub fn into_labels(self) -> Vec<u8> {
        self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, label: u8) {
        self.labels[y * self.width + x] = label;
    }

    pub fn same_dims(&self, other: &LabelMap) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn check_dims(&self, width: usize, height: usize) -> Result<(), CoreError> {
        if self.width != width || self.height != height {
            return Err(CoreError::DimensionMismatch(
                self.width,
                self.height,
                width,
                height,
            ));
        }
        Ok(())
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut labels = Vec::with_capacity(self.labels.len());
        for row in self.labels.chunks_exact(self.width.max(1)) {
            labels.extend(row.iter().rev());
        }
        Self { labels, ..*self }
    }

    /// Pixel count per class; UNLABELED pixels are not counted.
    pub fn histogram(&self, class_count: usize) -> Vec<usize> {
        let mut hist = vec![0; class_count];
        for &l in &self.labels {
            if let Some(h) = hist.get_mut(l as usize) {
                *h += 1;
            }
        }
        hist
    }

    pub fn unlabeled_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == UNLABELED).count()
    }
}

/// The closed set of classes a run segments.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ClassCatalog {
    names: Vec<String>,
    synonyms: Vec<Vec<String>>,
}

impl ClassCatalog {
    pub fn new(names: Vec<String>, synonyms: Vec<Vec<String>>) -> Result<Self, CoreError> {
        if names.len() < 2 {
            return Err(CoreError::Catalog(format!(
                "need at least 2 classes, got {}",
                names.len()
            )));
        }
        if names.len() >= UNLABELED as usize {
            return Err(CoreError::Catalog(format!(
                "at most {} classes fit below the UNLABELED sentinel",
                UNLABELED
            )));
        }
        if synonyms.len() != names.len() {
            return Err(CoreError::Catalog(
                "synonym table must have one entry per class".into(),
            ));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(CoreError::Catalog(format!("duplicate class name {n:?}")));
            }
        }
        Ok(Self { names, synonyms })
    }

    /// The 8-class urban catalog used by the scene generator.
    pub fn urban() -> Self {
        let table: [(&str, &[&str]); 8] = [
            ("background", &["sky", "scenery"]),
            ("road", &["street", "asphalt", "lane"]),
            ("building", &["house", "tower", "storefront"]),
            ("car", &["vehicle", "automobile", "taxi"]),
            ("person", &["pedestrian", "cyclist", "child"]),
            ("pole", &["lamppost", "street light", "post"]),
            ("vegetation", &["tree", "bush", "hedge"]),
            ("sign", &["traffic sign", "road sign", "signboard"]),
        ];
        let names = table.iter().map(|(n, _)| n.to_string()).collect();
        let synonyms = table
            .iter()
            .map(|(_, s)| s.iter().map(|v| v.to_string()).collect())
            .collect();
        Self::new(names, synonyms).expect("built-in catalog is valid")
    }

    pub fn class_count(&self) -> usize {
        self.names.len()
    }

    pub fn name(&self, class: ClassId) -> &str {
        &self.names[class as usize]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn synonyms(&self, class: ClassId) -> &[String] {
        &self.synonyms[class as usize]
    }

    pub fn class_by_name(&self, name: &str) -> Option<ClassId> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| i as ClassId)
    }
}

impl Default for ClassCatalog {
    fn default() -> Self {
        Self::urban()
    }
}

/// Returns `map` unchanged iff every non-UNLABELED label is a catalog class.
pub fn validate_label_map(map: LabelMap, catalog: &ClassCatalog) -> Result<LabelMap, CoreError> {
    let class_count = catalog.class_count();
    match map
        .labels
        .iter()
        .position(|&l| l != UNLABELED && l as usize >= class_count)
    {
        Some(index) => Err(CoreError::LabelOutOfRange {
            index,
            value: map.labels[index],
            class_count,
        }),
        None => Ok(map),
    }
}
