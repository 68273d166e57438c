//! Segmentation model: frozen features, a per-pixel linear softmax head and
//! an optional trainable feature mix in front of it.

mod augment;
mod features;
pub mod loss;

pub use augment::{augment, AugmentConfig, AugmentRecord};
pub use features::{extract_features, luminance, FeatureMap, FEATURE_DIM};
pub use loss::{loss_and_grad, LossOutput, LossTerms, LossWeights};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::RngStream;
use crate::types::LabelMap;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite gradient entry in {0}")]
    NonFiniteGradient(&'static str),
    #[error("learning rate must be finite and > 0, got {0}")]
    LearningRate(f64),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Per-pixel class probabilities, `classes` values per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbMap {
    width: usize,
    height: usize,
    classes: usize,
    probs: Vec<f64>,
}

impl ProbMap {
    /// Softmax of raw logits (pixel-major).
    pub fn from_logits(width: usize, height: usize, classes: usize, mut logits: Vec<f64>) -> Self {
        assert_eq!(logits.len(), width * height * classes);
        for z in logits.chunks_exact_mut(classes) {
            softmax_in_place(z);
        }
        Self {
            width,
            height,
            classes,
            probs: logits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.probs
    }

    #[inline]
    pub fn pixel(&self, i: usize) -> &[f64] {
        &self.probs[i * self.classes..(i + 1) * self.classes]
    }

    /// Most likely class per pixel; ties go to the lower class id.
    pub fn argmax(&self) -> LabelMap {
        let labels = self
            .probs
            .chunks_exact(self.classes)
            .map(|p| {
                let mut best = 0;
                for j in 1..p.len() {
                    if p[j] > p[best] {
                        best = j;
                    }
                }
                best as u8
            })
            .collect();
        LabelMap::new(self.width, self.height, labels).expect("prob map dims")
    }
}

pub fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let inv = 1.0 / sum;
    for v in z.iter_mut() {
        *v *= inv;
    }
}

/// Head weights `w` (C x D, row-major), bias `b` (C) and feature mix (D x D).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub classes: usize,
    pub dim: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub backbone_mix: Vec<f64>,
}

fn identity(d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        m[i * d + i] = 1.0;
    }
    m
}

impl ModelParams {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        Self {
            classes,
            dim,
            w: vec![0.0; classes * dim],
            b: vec![0.0; classes],
            backbone_mix: identity(dim),
        }
    }

    /// Small random head, identity mix.
    pub fn init(classes: usize, dim: usize, rng: &mut RngStream) -> Self {
        let mut p = Self::zeros(classes, dim);
        for v in p.w.iter_mut() {
            *v = 0.01 * rng.normal();
        }
        p
    }

    pub fn mix_is_identity(&self) -> bool {
        self.backbone_mix == identity(self.dim)
    }

    fn blocks(&self) -> [&[f64]; 3] {
        [&self.w, &self.b, &self.backbone_mix]
    }

    fn blocks_mut(&mut self) -> [&mut Vec<f64>; 3] {
        [&mut self.w, &mut self.b, &mut self.backbone_mix]
    }

    pub fn same_shape(&self, other: &ModelParams) -> bool {
        self.classes == other.classes && self.dim == other.dim
    }

    /// All parameters flattened in block order (w, b, backbone_mix).
    pub fn flat(&self) -> Vec<f64> {
        self.blocks().concat()
    }

    pub fn distance(&self, other: &ModelParams) -> f64 {
        self.blocks()
            .iter()
            .zip(other.blocks())
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Applies the feature mix to one pixel's features.
    #[inline]
    fn mixed(&self, phi: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for r in 0..d {
            out[r] = (0..d).map(|e| self.backbone_mix[r * d + e] * phi[e]).sum();
        }
    }

    fn logits(&self, feats: &FeatureMap, mix_is_identity: bool) -> Vec<f64> {
        let (c, d) = (self.classes, self.dim);
        let mut logits = vec![0.0; feats.pixel_count() * c];
        let mut psi = vec![0.0; d];
        for (phi, out) in feats.values().chunks_exact(d).zip(logits.chunks_exact_mut(c)) {
            let x: &[f64] = if mix_is_identity {
                phi
            } else {
                self.mixed(phi, &mut psi);
                &psi
            };
            for ((o, row), b) in out.iter_mut().zip(self.w.chunks_exact(d)).zip(&self.b) {
                *o = b + dot(row, x);
            }
        }
        logits
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gradient with the same block layout as [`ModelParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrad {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub backbone_mix: Vec<f64>,
}

impl ParamGrad {
    pub fn zeros_like(p: &ModelParams) -> Self {
        Self {
            w: vec![0.0; p.w.len()],
            b: vec![0.0; p.b.len()],
            backbone_mix: vec![0.0; p.backbone_mix.len()],
        }
    }

    pub fn add_scaled(&mut self, other: &ParamGrad, k: f64) {
        for (a, b) in [
            (&mut self.w, &other.w),
            (&mut self.b, &other.b),
            (&mut self.backbone_mix, &other.backbone_mix),
        ] {
            for (x, y) in a.iter_mut().zip(b) {
                *x += k * y;
            }
        }
    }
}

fn check_dims(params: &ModelParams, feats: &FeatureMap) -> Result<(), ModelError> {
    if params.dim != feats.dim() {
        return Err(ModelError::Shape(format!(
            "model expects {} features, map has {}",
            params.dim,
            feats.dim()
        )));
    }
    if params.w.len() != params.classes * params.dim
        || params.b.len() != params.classes
        || params.backbone_mix.len() != params.dim * params.dim
    {
        return Err(ModelError::Shape("parameter block sizes disagree with classes/dim".into()));
    }
    Ok(())
}

pub fn forward(params: &ModelParams, feats: &FeatureMap) -> Result<ProbMap, ModelError> {
    check_dims(params, feats)?;
    let logits = params.logits(feats, params.mix_is_identity());
    Ok(ProbMap::from_logits(feats.width(), feats.height(), params.classes, logits))
}

/// Back-propagates logit gradients to the parameters. The mix gradient is
/// only computed when `with_mix` is set.
pub fn param_grad(params: &ModelParams, feats: &FeatureMap, dlogits: &[f64], with_mix: bool) -> Result<ParamGrad, ModelError> {
    check_dims(params, feats)?;
    let (c, d) = (params.classes, params.dim);
    if dlogits.len() != feats.pixel_count() * c {
        return Err(ModelError::Shape(format!(
            "logit gradient has {} entries, expected {}",
            dlogits.len(),
            feats.pixel_count() * c
        )));
    }
    let identity_mix = params.mix_is_identity();
    let mut grad = ParamGrad::zeros_like(params);
    let mut psi = vec![0.0; d];
    let mut back = vec![0.0; d];
    for (phi, g) in feats.values().chunks_exact(d).zip(dlogits.chunks_exact(c)) {
        if g.iter().all(|&v| v == 0.0) {
            continue;
        }
        let x: &[f64] = if identity_mix {
            phi
        } else {
            params.mixed(phi, &mut psi);
            &psi
        };
        for ((gb, row), &gk) in grad.b.iter_mut().zip(grad.w.chunks_exact_mut(d)).zip(g) {
            *gb += gk;
            for (r, xv) in row.iter_mut().zip(x) {
                *r += gk * xv;
            }
        }
        if with_mix {
            for (e, bv) in back.iter_mut().enumerate() {
                *bv = (0..c).map(|k| params.w[k * d + e] * g[k]).sum();
            }
            for (row, bv) in grad.backbone_mix.chunks_exact_mut(d).zip(&back) {
                for (m, pv) in row.iter_mut().zip(phi) {
                    *m += bv * pv;
                }
            }
        }
    }
    Ok(grad)
}

/// One plain gradient step. The feature mix moves only when `finetune_backbone`.
pub fn sgd_step(params: &ModelParams, grad: &ParamGrad, lr: f64, finetune_backbone: bool) -> Result<ModelParams, ModelError> {
    if !(lr.is_finite() && lr > 0.0) {
        return Err(ModelError::LearningRate(lr));
    }
    if grad.w.len() != params.w.len() || grad.b.len() != params.b.len() || grad.backbone_mix.len() != params.backbone_mix.len() {
        return Err(ModelError::Shape("gradient does not match parameters".into()));
    }
    for (name, block) in [("w", &grad.w), ("b", &grad.b), ("backbone_mix", &grad.backbone_mix)] {
        if block.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteGradient(name));
        }
    }
    let mut out = params.clone();
    let step = |p: &mut [f64], g: &[f64]| {
        for (a, b) in p.iter_mut().zip(g) {
            *a -= lr * b;
        }
    };
    step(&mut out.w, &grad.w);
    step(&mut out.b, &grad.b);
    if finetune_backbone {
        step(&mut out.backbone_mix, &grad.backbone_mix);
    }
    Ok(out)
}

/// `teacher <- alpha * teacher + (1 - alpha) * student`, block by block.
pub fn ema_update(teacher: &ModelParams, student: &ModelParams, alpha: f64) -> Result<ModelParams, ModelError> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(ModelError::Shape(format!("momentum {alpha} outside [0, 1)")));
    }
    if !teacher.same_shape(student) {
        return Err(ModelError::Shape(format!(
            "teacher {}x{} vs student {}x{}",
            teacher.classes, teacher.dim, student.classes, student.dim
        )));
    }
    let mut out = teacher.clone();
    for (t, s) in out.blocks_mut().into_iter().zip(student.blocks()) {
        if t.len() != s.len() {
            return Err(ModelError::Shape("parameter block length".into()));
        }
        for (a, b) in t.iter_mut().zip(s) {
            *a = alpha * *a + (1.0 - alpha) * b;
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format_version: u32,
    classes: usize,
    dim: usize,
    w: Vec<f64>,
    b: Vec<f64>,
    backbone_mix: Vec<f64>,
}

impl ModelParams {
    pub fn to_checkpoint_json(&self) -> String {
        let ck = Checkpoint {
            format_version: CHECKPOINT_VERSION,
            classes: self.classes,
            dim: self.dim,
            w: self.w.clone(),
            b: self.b.clone(),
            backbone_mix: self.backbone_mix.clone(),
        };
        serde_json::to_string_pretty(&ck).expect("checkpoint serializes")
    }

    pub fn from_checkpoint_json(text: &str) -> Result<Self, ModelError> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!(
                "unsupported format version {}",
                ck.format_version
            )));
        }
        let p = ModelParams {
            classes: ck.classes,
            dim: ck.dim,
            w: ck.w,
            b: ck.b,
            backbone_mix: ck.backbone_mix,
        };
        if p.w.len() != p.classes * p.dim || p.b.len() != p.classes || p.backbone_mix.len() != p.dim * p.dim {
            return Err(ModelError::Checkpoint("array lengths disagree with classes/dim".into()));
        }
        if !p.is_finite() {
            return Err(ModelError::Checkpoint("non-finite parameter".into()));
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ImageBuf;

    fn feats() -> FeatureMap {
        let mut img = ImageBuf::filled(6, 5, [0.2, 0.5, 0.7]);
        img.set_rgb(2, 3, [0.9, 0.1, 0.3]);
        extract_features(&img)
    }

    #[test]
    fn zero_params_give_uniform() {
        let p = forward(&ModelParams::zeros(8, FEATURE_DIM), &feats()).unwrap();
        assert!(p.values().iter().all(|&v| (v - 0.125).abs() < 1e-15));
    }

    #[test]
    fn dominant_bias() {
        let mut params = ModelParams::zeros(4, FEATURE_DIM);
        params.b[0] = 10.0;
        let p = forward(&params, &feats()).unwrap();
        for i in 0..p.pixel_count() {
            assert!(p.pixel(i)[0] > 0.999);
        }
    }

    #[test]
    fn bias_shift_invariance() {
        let mut rng = RngStream::new(3);
        let params = ModelParams::init(5, FEATURE_DIM, &mut rng);
        let mut shifted = params.clone();
        shifted.b.iter_mut().for_each(|b| *b += 3.7);
        let (a, b) = (forward(&params, &feats()).unwrap(), forward(&shifted, &feats()).unwrap());
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-12);
        }
        for i in 0..a.pixel_count() {
            assert!((a.pixel(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn dim_mismatch_is_error() {
        assert!(forward(&ModelParams::zeros(3, 5), &feats()).is_err());
    }

    #[test]
    fn sgd_fixed_point_and_zeroing() {
        let mut rng = RngStream::new(1);
        let p = ModelParams::init(3, FEATURE_DIM, &mut rng);
        let zero = ParamGrad::zeros_like(&p);
        assert_eq!(sgd_step(&p, &zero, 0.3, true).unwrap(), p);
        let g = ParamGrad { w: p.w.clone(), ..ParamGrad::zeros_like(&p) };
        let out = sgd_step(&p, &g, 1.0, false).unwrap();
        assert!(out.w.iter().all(|&v| v == 0.0));
        let mut bad = zero.clone();
        bad.b[1] = f64::NAN;
        assert_eq!(sgd_step(&p, &bad, 0.1, false), Err(ModelError::NonFiniteGradient("b")));
        assert!(sgd_step(&p, &zero, 0.0, false).is_err());
    }

    #[test]
    fn frozen_mix_never_moves() {
        let mut rng = RngStream::new(2);
        let mut p = ModelParams::init(3, FEATURE_DIM, &mut rng);
        let mut g = ParamGrad::zeros_like(&p);
        g.backbone_mix.iter_mut().for_each(|v| *v = 0.5);
        for _ in 0..10 {
            p = sgd_step(&p, &g, 0.1, false).unwrap();
        }
        assert!(p.mix_is_identity());
    }

    #[test]
    fn checkpoint_round_trip_and_version() {
        let p = ModelParams::init(8, FEATURE_DIM, &mut RngStream::new(4));
        let text = p.to_checkpoint_json();
        assert_eq!(ModelParams::from_checkpoint_json(&text).unwrap(), p);
        let bumped = text.replace("\"format_version\": 1", "\"format_version\": 2");
        assert!(ModelParams::from_checkpoint_json(&bumped).is_err());
    }

    fn param_loss(params: &ModelParams, feats: &FeatureMap, target: &LabelMap) -> f64 {
        let probs = forward(params, feats).unwrap();
        loss_and_grad(&probs, target, LossWeights::default()).terms.total
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        let mut rng = RngStream::new(21);
        for case in 0..20 {
            let (w, h, c) = (2 + rng.below(3), 2 + rng.below(3), 3 + rng.below(4));
            let values = (0..w * h * FEATURE_DIM).map(|_| rng.uniform()).collect();
            let feats = FeatureMap::from_values(w, h, values).unwrap();
            let labels = (0..w * h).map(|_| rng.below(c) as u8).collect();
            let target = LabelMap::new(w, h, labels).unwrap();
            let mut params = ModelParams::init(c, FEATURE_DIM, &mut rng);
            params.w.iter_mut().for_each(|v| *v *= 50.0);
            params.backbone_mix.iter_mut().for_each(|v| *v += 0.1 * rng.normal());

            let probs = forward(&params, &feats).unwrap();
            let out = loss_and_grad(&probs, &target, LossWeights::default());
            let g = param_grad(&params, &feats, &out.grad, true).unwrap();
            let analytic = [g.w, g.b, g.backbone_mix].concat();

            let step = 1e-5;
            let mut numeric = Vec::with_capacity(analytic.len());
            for block in 0..3 {
                let len = params.blocks()[block].len();
                for k in 0..len {
                    let mut plus = params.clone();
                    let mut minus = params.clone();
                    plus.blocks_mut()[block][k] += step;
                    minus.blocks_mut()[block][k] -= step;
                    numeric.push((param_loss(&plus, &feats, &target) - param_loss(&minus, &feats, &target)) / (2.0 * step));
                }
            }
            let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
            let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
            let rel = norm(&diff) / norm(&analytic).max(norm(&numeric));
            assert!(rel < 1e-4, "case {case}: relative error {rel}");
        }
    }

    #[test]
    fn separable_toy_is_learned() {
        // Left half red, right half blue; the colour channel separates them.
        let mut img = ImageBuf::filled(16, 8, [0.9, 0.1, 0.1]);
        let mut labels = LabelMap::filled(16, 8, 0);
        for y in 0..8 {
            for x in 8..16 {
                img.set_rgb(x, y, [0.1, 0.1, 0.9]);
                labels.set(x, y, 1);
            }
        }
        let feats = extract_features(&img);
        let mut params = ModelParams::init(2, FEATURE_DIM, &mut RngStream::new(0));
        for _ in 0..200 {
            let probs = forward(&params, &feats).unwrap();
            let out = loss_and_grad(&probs, &labels, LossWeights::default());
            let g = param_grad(&params, &feats, &out.grad, false).unwrap();
            params = sgd_step(&params, &g, 0.5, false).unwrap();
        }
        let pred = forward(&params, &feats).unwrap().argmax();
        let correct = pred.labels().iter().zip(labels.labels()).filter(|(a, b)| a == b).count();
        assert!(correct as f64 / 128.0 >= 0.99);
    }

    #[test]
    fn ema_limits() {
        let mut rng = RngStream::new(5);
        let t = ModelParams::init(3, FEATURE_DIM, &mut rng);
        let s = ModelParams::init(3, FEATURE_DIM, &mut rng);
        assert_eq!(ema_update(&t, &s, 0.0).unwrap(), s);
        assert_eq!(ema_update(&s, &s, 0.999).unwrap(), s);
        assert!(ema_update(&t, &ModelParams::zeros(4, FEATURE_DIM), 0.5).is_err());
        assert!(ema_update(&t, &s, 1.0).is_err());
    }
}
