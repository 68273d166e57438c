//! Binary PPM (P6) and PGM (P5) codecs, maxval 255.
//!
//! Images are quantized with `round(v * 255)`; decoding divides by 255, so a
//! decode/encode round trip reproduces the bytes exactly. Label maps are
//! stored verbatim, 255 meaning UNLABELED.

use thiserror::Error;

use crate::types::{ImageBuf, LabelMap};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PnmError {
    #[error("expected magic {expected}, found {found:?}")]
    BadMagic { expected: &'static str, found: String },
    #[error("malformed header: {0}")]
    BadHeader(String),
    #[error("maxval {0} unsupported, only 255")]
    Maxval(u32),
    #[error("raster has {got} bytes, expected {expected}")]
    Raster { expected: usize, got: usize },
    #[error("image has {0} channels, PPM needs 3")]
    Channels(usize),
}

fn header(magic: &str, width: usize, height: usize) -> Vec<u8> {
    format!("{magic}\n{width} {height}\n255\n").into_bytes()
}

pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_ppm(image: &ImageBuf) -> Result<Vec<u8>, PnmError> {
    if image.channels() != 3 {
        return Err(PnmError::Channels(image.channels()));
    }
    let mut out = header("P6", image.width(), image.height());
    out.extend(image.data().iter().map(|&v| quantize(v)));
    Ok(out)
}

pub fn encode_pgm(labels: &LabelMap) -> Vec<u8> {
    let mut out = header("P5", labels.width(), labels.height());
    out.extend_from_slice(labels.labels());
    out
}

pub fn decode_ppm(bytes: &[u8]) -> Result<ImageBuf, PnmError> {
    let (width, height, raster) = parse(bytes, "P6", 3)?;
    let data = raster.iter().map(|&b| b as f32 / 255.0).collect();
    ImageBuf::new(width, height, 3, data).map_err(|e| PnmError::BadHeader(e.to_string()))
}

pub fn decode_pgm(bytes: &[u8]) -> Result<LabelMap, PnmError> {
    let (width, height, raster) = parse(bytes, "P5", 1)?;
    LabelMap::new(width, height, raster.to_vec()).map_err(|e| PnmError::BadHeader(e.to_string()))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    /// Skips whitespace and `#` comments.
    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32, PnmError> {
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| PnmError::BadHeader(format!("missing {what}")))
    }
}

fn parse<'a>(bytes: &'a [u8], magic: &'static str, channels: usize) -> Result<(usize, usize, &'a [u8]), PnmError> {
    if bytes.len() < 2 || &bytes[..2] != magic.as_bytes() {
        return Err(PnmError::BadMagic {
            expected: magic,
            found: String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned(),
        });
    }
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(PnmError::Maxval(maxval));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if !bytes.get(cur.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(PnmError::BadHeader("no whitespace after maxval".into()));
    }
    let raster = &bytes[cur.pos + 1..];
    let expected = width * height * channels;
    if raster.len() != expected {
        return Err(PnmError::Raster {
            expected,
            got: raster.len(),
        });
    }
    Ok((width, height, raster))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::types::UNLABELED;
    use proptest::prelude::*;

    #[test]
    fn pgm_layout() {
        let labels = LabelMap::new(3, 2, vec![0, 1, 2, 7, UNLABELED, 3]).unwrap();
        let bytes = encode_pgm(&labels);
        assert_eq!(&bytes[..11], b"P5\n3 2\n255\n");
        assert_eq!(&bytes[11..], &[0, 1, 2, 7, 255, 3]);
        assert_eq!(decode_pgm(&bytes).unwrap(), labels);
    }

    #[test]
    fn ppm_quantization() {
        let img = ImageBuf::new(1, 1, 3, vec![0.0, 0.5, 1.0]).unwrap();
        let bytes = encode_ppm(&img).unwrap();
        assert_eq!(&bytes[11..], &[0, 128, 255]);
        let back = decode_ppm(&bytes).unwrap();
        assert_eq!(back.rgb(0, 0), [0.0, 128.0 / 255.0, 1.0]);
    }

    #[test]
    fn header_comments_are_skipped() {
        let bytes = b"P5\n# made by hand\n2 1\n255\n\x04\x05";
        assert_eq!(decode_pgm(bytes).unwrap().labels(), &[4, 5]);
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(decode_pgm(b"P6\n1 1\n255\n\0\0\0"), Err(PnmError::BadMagic { .. })));
        assert_eq!(decode_pgm(b"P5\n1 1\n65535\n\0\0"), Err(PnmError::Maxval(65535)));
        assert_eq!(decode_pgm(b"P5\n2 2\n255\n\0"), Err(PnmError::Raster { expected: 4, got: 1 }));
        assert!(matches!(decode_pgm(b"P5\n2\n"), Err(PnmError::BadHeader(_))));
        assert_eq!(encode_ppm(&ImageBuf::new(1, 1, 1, vec![0.0]).unwrap()), Err(PnmError::Channels(1)));
    }

    proptest! {
        #[test]
        fn ppm_bytes_round_trip(seed in any::<u64>(), w in 1usize..20, h in 1usize..20) {
            let mut rng = RngStream::new(seed);
            let data = (0..w * h * 3).map(|_| rng.uniform() as f32).collect();
            let img = ImageBuf::new(w, h, 3, data).unwrap();
            let bytes = encode_ppm(&img).unwrap();
            let decoded = decode_ppm(&bytes).unwrap();
            prop_assert_eq!(encode_ppm(&decoded).unwrap(), bytes);
            for (a, b) in img.data().iter().zip(decoded.data()) {
                prop_assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
            }
        }

        #[test]
        fn pgm_round_trip(seed in any::<u64>(), w in 1usize..20, h in 1usize..20) {
            let mut rng = RngStream::new(seed);
            let labels = LabelMap::new(w, h, (0..w * h).map(|_| rng.below(256) as u8).collect()).unwrap();
            prop_assert_eq!(decode_pgm(&encode_pgm(&labels)).unwrap(), labels);
        }
    }
}
