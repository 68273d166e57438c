use plrefine::dataset::{domain_set, GeneratedPool, LabeledImage};
use plrefine::maskops::BinaryMask;
use plrefine::model::{ema_update, ModelParams};
use plrefine::scenegen::{DomainPreset, CLASS_COUNT};
use plrefine::segmenter::SegmenterKind;
use plrefine::trainer::{
    evaluate, init_state, train_phase1, train_phase2, EvalModel, GeneratedView, NoHooks, Phase, Phase2Options,
    TrainHooks, TrainLog, TrainState,
};
use plrefine::{ClassCatalog, ImageBuf, LabelMap, RngStream, TrainConfig, UNLABELED};

fn config(iters1: usize, iters2: usize) -> TrainConfig {
    TrainConfig {
        lr: 1.0,
        iters_phase1: iters1,
        iters_phase2: iters2,
        batch_size: 4,
        alpha: 0.99,
        gen_size: 20,
        ..TrainConfig::default()
    }
}

fn source(seed: u64, n: usize) -> Vec<LabeledImage> {
    domain_set(DomainPreset::Source, &RngStream::new(seed), n, 32, 32).unwrap()
}

fn pool(seed: u64, n: usize) -> GeneratedPool {
    GeneratedPool::new(&RngStream::new(seed), n, 32, 32).unwrap()
}

struct ShadowTeacher {
    alpha: f64,
    steps: usize,
}

impl TrainHooks for ShadowTeacher {
    fn step(&mut self, phase: Phase, before: &TrainState, after: &TrainState) {
        match phase {
            Phase::SourceOnly => assert_eq!(before.teacher, after.teacher),
            Phase::Joint => {
                let shadow = ema_update(&before.teacher, &after.student, self.alpha).unwrap();
                assert_eq!(shadow, after.teacher, "teacher moved other than by EMA at {}", after.iteration);
            }
        }
        self.steps += 1;
    }
}

#[test]
fn teacher_changes_only_through_ema() {
    let cfg = config(20, 30);
    let src = source(1, 20);
    let gen = pool(2, 20);
    let rng = RngStream::new(3);
    let mut shadow = ShadowTeacher { alpha: cfg.alpha, steps: 0 };
    let s1 = train_phase1(&src, CLASS_COUNT, &cfg, &rng, &mut TrainLog::new(100), &mut shadow).unwrap();
    assert_eq!(s1.teacher, s1.student);
    let opts = Phase2Options::refined(SegmenterKind::Noisy { radius: 1, flip_rate: 0.1 });
    train_phase2(s1, &src, Some(&gen), &opts, &cfg, &rng, &mut TrainLog::new(100), &mut shadow).unwrap();
    assert_eq!(shadow.steps, 50);
}

/// Replaces teacher labels by GT with noisy blobs, then checks what the
/// student is trained on.
struct SubsetNoiseProbe {
    rng: RngStream,
    seen: usize,
}

impl TrainHooks for SubsetNoiseProbe {
    fn pseudo_labels(&mut self, _iteration: usize, hidden_gt: &LabelMap, pseudo: &mut LabelMap) {
        // Corrupt only the interior of a wide GT region, away from its border,
        // so the region keeps correct pixels and no other region is touched.
        *pseudo = hidden_gt.clone();
        let (w, h) = (hidden_gt.width(), hidden_gt.height());
        let x = 2 + self.rng.below(w - 4);
        let y = 2 + self.rng.below(h - 4);
        let c = hidden_gt.get(x, y);
        let interior = (y - 1..=y + 1).all(|yy| (x - 2..=x + 2).all(|xx| hidden_gt.get(xx, yy) == c));
        if interior {
            let noise = (c + 1) % CLASS_COUNT as u8;
            pseudo.set(x, y, noise);
        }
    }

    fn generated(&mut self, v: &GeneratedView<'_>) {
        for (r, g) in v.refined.labels().iter().zip(v.hidden_gt.labels()) {
            assert!(*r == UNLABELED || r == g, "refined label disagrees with GT at iteration {}", v.iteration);
        }
        let carried = if v.flipped { v.refined.flip_horizontal() } else { v.refined.clone() };
        assert_eq!(&carried, v.student_labels, "labels did not follow the geometric transform");
        self.seen += 1;
    }
}

#[test]
fn perfect_oracle_feeds_the_student_ground_truth() {
    let mut cfg = config(10, 15);
    cfg.tau = 1;
    let src = source(4, 10);
    let gen = pool(5, 20);
    let rng = RngStream::new(6);
    let s1 = train_phase1(&src, CLASS_COUNT, &cfg, &rng, &mut TrainLog::new(100), &mut NoHooks).unwrap();
    let mut probe = SubsetNoiseProbe {
        rng: RngStream::new(7),
        seen: 0,
    };
    let opts = Phase2Options::refined(SegmenterKind::Perfect);
    train_phase2(s1, &src, Some(&gen), &opts, &cfg, &rng, &mut TrainLog::new(100), &mut probe).unwrap();
    assert_eq!(probe.seen, 15 * 2);
}

struct History(Vec<Vec<f64>>);

impl TrainHooks for History {
    fn step(&mut self, phase: Phase, _before: &TrainState, after: &TrainState) {
        if phase == Phase::Joint {
            self.0.push(after.student.flat());
        }
    }
}

#[test]
fn teacher_is_the_exponentially_weighted_student_history() {
    let alpha = 0.999;
    let cfg = TrainConfig {
        alpha,
        batch_size: 2,
        ..config(5, 1000)
    };
    let src = source(8, 8);
    let rng = RngStream::new(9);
    let s1 = train_phase1(&src, CLASS_COUNT, &cfg, &rng, &mut TrainLog::new(10_000), &mut NoHooks).unwrap();
    let start = s1.teacher.flat();
    let mut history = History(Vec::new());
    // Source-only phase 2 keeps this fast; the EMA path is the same.
    let end = train_phase2(s1, &src, None, &Phase2Options::raw(), &cfg, &rng, &mut TrainLog::new(10_000), &mut history).unwrap();

    let t = history.0.len();
    assert_eq!(t, 1000);
    let teacher = end.teacher.flat();
    for (j, &got) in teacher.iter().enumerate() {
        // theta_T(t) = a^t theta_T(0) + (1 - a) sum_s a^(t - s) theta_S(s)
        let mut want = alpha.powi(t as i32) * start[j];
        for (s, student) in history.0.iter().enumerate() {
            want += (1.0 - alpha) * alpha.powi((t - 1 - s) as i32) * student[j];
        }
        assert!((got - want).abs() <= 1e-9, "parameter {j}: {got} vs {want}");
    }
}

#[test]
fn zero_phase1_iterations_return_the_initial_state() {
    let cfg = config(0, 0);
    let rng = RngStream::new(10);
    let s = train_phase1(&source(1, 3), CLASS_COUNT, &cfg, &rng, &mut TrainLog::new(1), &mut NoHooks).unwrap();
    let init = init_state(CLASS_COUNT, &rng);
    assert_eq!(s.student, init.student);
    assert_eq!(s.teacher, s.student);
    assert_eq!(s.iteration, 0);
}

fn full_run(seed: u64, log: &mut Vec<u8>) -> TrainState {
    let cfg = config(15, 15);
    let src = source(seed, 12);
    let gen = pool(seed + 1, 12);
    let rng = RngStream::new(seed);
    let mut tl = TrainLog::new(5).with_sink(log);
    let s1 = train_phase1(&src, CLASS_COUNT, &cfg, &rng, &mut tl, &mut NoHooks).unwrap();
    let opts = Phase2Options {
        salt_rate: 0.05,
        ..Phase2Options::refined(SegmenterKind::Noisy { radius: 1, flip_rate: 0.2 })
    };
    train_phase2(s1, &src, Some(&gen), &opts, &cfg, &rng, &mut tl, &mut NoHooks).unwrap()
}

#[test]
fn runs_are_bitwise_reproducible() {
    let (mut log_a, mut log_b) = (Vec::new(), Vec::new());
    let a = full_run(11, &mut log_a);
    let b = full_run(11, &mut log_b);
    assert_eq!(a, b);
    assert_eq!(log_a, log_b);
    assert_eq!(a.student.to_checkpoint_json(), b.student.to_checkpoint_json());
    // 3 phase-1 records (5, 10, 15) and 3 phase-2 records.
    assert_eq!(String::from_utf8(log_a).unwrap().lines().count(), 6);
    let mut log_c = Vec::new();
    assert_ne!(full_run(12, &mut log_c).student, a.student);
}

#[test]
fn empty_segmenter_reduces_phase2_to_source_only() {
    let cfg = config(10, 25);
    let src = source(13, 12);
    let gen = pool(14, 12);
    let rng = RngStream::new(15);
    let s1 = train_phase1(&src, CLASS_COUNT, &cfg, &rng, &mut TrainLog::new(100), &mut NoHooks).unwrap();
    let empty = Phase2Options::refined(SegmenterKind::Constant(BinaryMask::empty(32, 32)));
    let a = train_phase2(s1.clone(), &src, Some(&gen), &empty, &cfg, &rng, &mut TrainLog::new(100), &mut NoHooks).unwrap();
    let b = train_phase2(s1, &src, None, &Phase2Options::raw(), &cfg, &rng, &mut TrainLog::new(100), &mut NoHooks).unwrap();
    assert_eq!(a.student, b.student);
    assert_eq!(a.teacher, b.teacher);
}

/// Three flat colours, one class each, in vertical bands of random widths.
fn toy_set(rng: &mut RngStream, n: usize) -> Vec<LabeledImage> {
    let colors = [[0.9f32, 0.1, 0.1], [0.1, 0.8, 0.2], [0.15, 0.2, 0.9]];
    (0..n)
        .map(|_| {
            let (w, h) = (32, 32);
            let a = 4 + rng.below(12);
            let b = a + 4 + rng.below(12);
            let class_at = |x: usize| if x < a { 0 } else if x < b { 1 } else { 2 };
            let mut image = ImageBuf::filled(w, h, [0.0; 3]);
            let mut labels = LabelMap::filled(w, h, 0);
            for y in 0..h {
                for x in 0..w {
                    let c = class_at(x);
                    image.set_rgb(x, y, colors[c].map(|v| (v + 0.03 * rng.normal() as f32).clamp(0.0, 1.0)));
                    labels.set(x, y, c as u8);
                }
            }
            LabeledImage { image, labels }
        })
        .collect()
}

#[test]
fn separable_toy_is_learned() {
    let mut rng = RngStream::new(16);
    let train = toy_set(&mut rng, 30);
    let test = toy_set(&mut rng, 10);
    let cfg = TrainConfig {
        lr: 1.0,
        iters_phase1: 500,
        batch_size: 4,
        ..TrainConfig::default()
    };
    let state = train_phase1(&train, 3, &cfg, &RngStream::new(17), &mut TrainLog::new(1000), &mut NoHooks).unwrap();
    let catalog = ClassCatalog::new(
        vec!["red".into(), "green".into(), "blue".into()],
        vec![Vec::new(), Vec::new(), Vec::new()],
    )
    .unwrap();
    let report = evaluate(&state, &test, EvalModel::Student, &catalog).unwrap();
    assert!(report.miou.unwrap() >= 0.95, "{:?}", report.miou);
}

#[test]
fn checkpoints_survive_a_json_round_trip() {
    let mut log = Vec::new();
    let s = full_run(18, &mut log);
    let back = ModelParams::from_checkpoint_json(&s.student.to_checkpoint_json()).unwrap();
    assert_eq!(back, s.student);
}
