//! Segmentation losses with analytic gradients with respect to the logits.
//!
//! All terms are computed over labeled pixels only; UNLABELED pixels get a
//! zero gradient and do not enter any normalizer.
//!
//! * cross-entropy: mean over labeled pixels of `-ln p[y]`
//! * dice: `1 - mean_{c present} (2 I_c + 1) / (S_c + Y_c + 1)` with
//!   `I_c = sum p_c y_c`, `S_c = sum p_c`, `Y_c = sum y_c`
//! * class presence: mean over classes of the binary cross-entropy between
//!   the max-pooled class probability and the presence indicator

use super::ProbMap;
use crate::types::{LabelMap, UNLABELED};

pub const DICE_SMOOTH: f64 = 1.0;
const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub ce: f64,
    pub dice: f64,
    pub cls: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            ce: 1.0,
            dice: 1.0,
            cls: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossTerms {
    pub ce: f64,
    pub dice: f64,
    pub cls: f64,
    pub total: f64,
}

impl std::ops::AddAssign for LossTerms {
    fn add_assign(&mut self, o: Self) {
        self.ce += o.ce;
        self.dice += o.dice;
        self.cls += o.cls;
        self.total += o.total;
    }
}

impl LossTerms {
    pub fn scaled(self, k: f64) -> Self {
        Self {
            ce: self.ce * k,
            dice: self.dice * k,
            cls: self.cls * k,
            total: self.total * k,
        }
    }
}

/// Loss value and its gradient with respect to the logits (pixel-major, C per pixel).
#[derive(Clone, Debug)]
pub struct LossOutput {
    pub terms: LossTerms,
    pub grad: Vec<f64>,
}

fn labeled_pixels(target: &LabelMap) -> Vec<(usize, usize)> {
    target
        .labels()
        .iter()
        .enumerate()
        .filter(|(_, &l)| l != UNLABELED)
        .map(|(i, &l)| (i, l as usize))
        .collect()
}

/// Accumulates `d loss / d p` at pixel `i` into logit gradients via the softmax Jacobian.
fn softmax_backward(probs: &ProbMap, i: usize, dp: &[f64], grad: &mut [f64]) {
    let c = probs.classes();
    let p = probs.pixel(i);
    let dot: f64 = p.iter().zip(dp).map(|(a, b)| a * b).sum();
    for ((g, pj), dj) in grad[i * c..(i + 1) * c].iter_mut().zip(p).zip(dp) {
        *g += pj * (dj - dot);
    }
}

pub fn cross_entropy(probs: &ProbMap, target: &LabelMap) -> (f64, Vec<f64>) {
    single(probs, target, cross_entropy_into)
}

pub fn dice(probs: &ProbMap, target: &LabelMap) -> (f64, Vec<f64>) {
    single(probs, target, dice_into)
}

pub fn class_presence(probs: &ProbMap, target: &LabelMap) -> (f64, Vec<f64>) {
    single(probs, target, class_presence_into)
}

type TermFn = fn(&ProbMap, &[(usize, usize)], f64, &mut [f64]) -> f64;

fn single(probs: &ProbMap, target: &LabelMap, term: TermFn) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; probs.pixel_count() * probs.classes()];
    let labeled = labeled_pixels(target);
    if labeled.is_empty() {
        return (0.0, grad);
    }
    let loss = term(probs, &labeled, 1.0, &mut grad);
    (loss, grad)
}

// Each `*_into` returns the unweighted term and adds `weight` times its
// logit gradient into `grad`. `labeled` is non-empty.

fn cross_entropy_into(probs: &ProbMap, labeled: &[(usize, usize)], weight: f64, grad: &mut [f64]) -> f64 {
    let c = probs.classes();
    let inv = 1.0 / labeled.len() as f64;
    let k = weight * inv;
    let mut loss = 0.0;
    for &(i, y) in labeled {
        let p = probs.pixel(i);
        loss -= p[y].max(PROB_FLOOR).ln();
        if weight != 0.0 {
            let g = &mut grad[i * c..(i + 1) * c];
            for (gj, pj) in g.iter_mut().zip(p) {
                *gj += k * pj;
            }
            g[y] -= k;
        }
    }
    loss * inv
}

fn dice_into(probs: &ProbMap, labeled: &[(usize, usize)], weight: f64, grad: &mut [f64]) -> f64 {
    let c = probs.classes();
    let mut inter = vec![0.0; c];
    let mut psum = vec![0.0; c];
    let mut ysum = vec![0.0; c];
    for &(i, y) in labeled {
        let p = probs.pixel(i);
        for (s, pj) in psum.iter_mut().zip(p) {
            *s += pj;
        }
        inter[y] += p[y];
        ysum[y] += 1.0;
    }
    let present: Vec<usize> = (0..c).filter(|&j| ysum[j] > 0.0).collect();
    let inv_present = 1.0 / present.len() as f64;
    let mut mean_ratio = 0.0;
    // d ratio_c / d p_{i,c} = (2 y_ic D - N) / D^2 with N = 2I + eps, D = S + Y + eps.
    let mut coef_y = vec![0.0; c];
    let mut coef = vec![0.0; c];
    for &j in &present {
        let num = 2.0 * inter[j] + DICE_SMOOTH;
        let den = psum[j] + ysum[j] + DICE_SMOOTH;
        mean_ratio += num / den;
        coef_y[j] = -weight * inv_present * 2.0 / den;
        coef[j] = weight * inv_present * num / (den * den);
    }
    if weight != 0.0 {
        let mut dp = vec![0.0; c];
        for &(i, y) in labeled {
            dp.copy_from_slice(&coef);
            dp[y] += coef_y[y];
            softmax_backward(probs, i, &dp, grad);
        }
    }
    1.0 - mean_ratio * inv_present
}

fn class_presence_into(probs: &ProbMap, labeled: &[(usize, usize)], weight: f64, grad: &mut [f64]) -> f64 {
    let c = probs.classes();
    let mut present = vec![false; c];
    let mut best = vec![(f64::NEG_INFINITY, 0usize); c];
    for &(i, y) in labeled {
        present[y] = true;
        let p = probs.pixel(i);
        for (b, &pj) in best.iter_mut().zip(p) {
            if pj > b.0 {
                *b = (pj, i);
            }
        }
    }
    let inv = 1.0 / c as f64;
    let mut loss = 0.0;
    let mut dp_at: Vec<(usize, Vec<f64>)> = Vec::new();
    for j in 0..c {
        let (q, at) = best[j];
        let clamped = q.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
        let (l, d) = if present[j] {
            (-clamped.ln(), -1.0 / clamped)
        } else {
            (-(1.0 - clamped).ln(), 1.0 / (1.0 - clamped))
        };
        loss += l * inv;
        if clamped != q || weight == 0.0 {
            continue;
        }
        match dp_at.iter_mut().find(|(i, _)| *i == at) {
            Some((_, dp)) => dp[j] += weight * d * inv,
            None => {
                let mut dp = vec![0.0; c];
                dp[j] = weight * d * inv;
                dp_at.push((at, dp));
            }
        }
    }
    for (i, dp) in dp_at {
        softmax_backward(probs, i, &dp, grad);
    }
    loss
}

/// Weighted sum of the three terms and its logit gradient.
pub fn loss_and_grad(probs: &ProbMap, target: &LabelMap, weights: LossWeights) -> LossOutput {
    let mut grad = vec![0.0; probs.pixel_count() * probs.classes()];
    let labeled = labeled_pixels(target);
    if labeled.is_empty() {
        return LossOutput {
            terms: LossTerms::default(),
            grad,
        };
    }
    let ce = cross_entropy_into(probs, &labeled, weights.ce, &mut grad);
    let dice = dice_into(probs, &labeled, weights.dice, &mut grad);
    let cls = class_presence_into(probs, &labeled, weights.cls, &mut grad);
    let terms = LossTerms {
        ce,
        dice,
        cls,
        total: weights.ce * ce + weights.dice * dice + weights.cls * cls,
    };
    LossOutput { terms, grad }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    type Term = fn(&ProbMap, &LabelMap) -> (f64, Vec<f64>);

    fn random_case(rng: &mut RngStream, c: usize) -> (usize, usize, Vec<f64>, LabelMap) {
        let (w, h) = (1 + rng.below(5), 1 + rng.below(4));
        let logits = (0..w * h * c).map(|_| 2.0 * rng.normal()).collect();
        let labels = (0..w * h)
            .map(|_| if rng.bernoulli(0.2) { UNLABELED } else { rng.below(c) as u8 })
            .collect();
        (w, h, logits, LabelMap::new(w, h, labels).unwrap())
    }

    fn numeric_grad(term: Term, w: usize, h: usize, c: usize, logits: &[f64], target: &LabelMap) -> Vec<f64> {
        let step = 1e-5;
        let eval = |z: Vec<f64>| term(&ProbMap::from_logits(w, h, c, z), target).0;
        (0..logits.len())
            .map(|k| {
                let mut plus = logits.to_vec();
                let mut minus = logits.to_vec();
                plus[k] += step;
                minus[k] -= step;
                (eval(plus) - eval(minus)) / (2.0 * step)
            })
            .collect()
    }

    fn check(term: Term, seed: u64) {
        let mut rng = RngStream::new(seed);
        let mut checked = 0;
        while checked < 20 {
            let c = 2 + rng.below(5);
            let (w, h, logits, target) = random_case(&mut rng, c);
            let analytic = term(&ProbMap::from_logits(w, h, c, logits.clone()), &target).1;
            let numeric = numeric_grad(term, w, h, c, &logits, &target);
            let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let scale: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(numeric.iter().map(|a| a * a).sum::<f64>().sqrt());
            if scale < 1e-9 {
                assert!(diff < 1e-8);
                continue;
            }
            assert!(diff / scale < 1e-4, "relative error {} (seed {seed})", diff / scale);
            checked += 1;
        }
    }

    #[test]
    fn cross_entropy_gradient() {
        check(cross_entropy, 1);
    }

    #[test]
    fn dice_gradient() {
        check(dice, 2);
    }

    #[test]
    fn class_presence_gradient() {
        check(class_presence, 3);
    }

    #[test]
    fn combined_gradient() {
        let weighted: Term = |p, t| {
            let out = loss_and_grad(p, t, LossWeights { ce: 0.7, dice: 1.3, cls: 0.4 });
            (out.terms.total, out.grad)
        };
        check(weighted, 4);
    }

    #[test]
    fn uniform_prediction_cross_entropy_is_ln_c() {
        let probs = ProbMap::from_logits(3, 2, 8, vec![0.25; 48]);
        let target = LabelMap::new(3, 2, vec![0, 1, 2, 3, 7, 5]).unwrap();
        let (loss, _) = cross_entropy(&probs, &target);
        assert!((loss - 8f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn dice_hand_case() {
        // Two pixels, two classes, one-hot predictions matching the target:
        // class 0: (2*1+1)/(1+1+1) = 1, class 1 likewise, so loss 0 up to softmax saturation.
        let probs = ProbMap::from_logits(2, 1, 2, vec![40.0, 0.0, 0.0, 40.0]);
        let target = LabelMap::new(2, 1, vec![0, 1]).unwrap();
        assert!(dice(&probs, &target).0.abs() < 1e-12);
        // Uniform prediction: each class (2*0.5+1)/(1+1+1) = 2/3.
        let uniform = ProbMap::from_logits(2, 1, 2, vec![0.0; 4]);
        assert!((dice(&uniform, &target).0 - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn class_presence_hand_case() {
        // One pixel, two classes, p = (0.5, 0.5), class 0 present:
        // (-ln 0.5 - ln 0.5) / 2 = ln 2.
        let probs = ProbMap::from_logits(1, 1, 2, vec![0.0, 0.0]);
        let target = LabelMap::new(1, 1, vec![0]).unwrap();
        assert!((class_presence(&probs, &target).0 - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn unlabeled_pixels_have_no_influence() {
        let mut rng = RngStream::new(9);
        let (w, h, c) = (4, 3, 5);
        let logits: Vec<f64> = (0..w * h * c).map(|_| rng.normal()).collect();
        let mut target = LabelMap::new(w, h, (0..w * h).map(|i| (i % c) as u8).collect()).unwrap();
        target.set(1, 1, UNLABELED);
        let base = loss_and_grad(&ProbMap::from_logits(w, h, c, logits.clone()), &target, LossWeights::default());
        let i = w + 1;
        assert!(base.grad[i * c..(i + 1) * c].iter().all(|&g| g == 0.0));
        let mut moved = logits.clone();
        for v in &mut moved[i * c..(i + 1) * c] {
            *v += 5.0 * rng.normal();
        }
        let other = loss_and_grad(&ProbMap::from_logits(w, h, c, moved), &target, LossWeights::default());
        assert_eq!(base.terms, other.terms);
    }

    #[test]
    fn all_unlabeled_is_zero() {
        let probs = ProbMap::from_logits(2, 2, 3, vec![0.3; 12]);
        let target = LabelMap::filled(2, 2, UNLABELED);
        let out = loss_and_grad(&probs, &target, LossWeights::default());
        assert_eq!(out.terms.total, 0.0);
        assert!(out.grad.iter().all(|&g| g == 0.0));
    }
}
