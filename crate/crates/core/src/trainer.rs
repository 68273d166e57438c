//! Two-phase training: supervised source training, then joint training on
//! source data and teacher-labeled generated data with an EMA teacher.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, TrainConfig};
use crate::dataset::{LabeledImage, SampleSource};
use crate::metrics::{ConfusionMatrix, MetricsError, MetricsReport};
use crate::model::{
    augment, ema_update, extract_features, forward, loss_and_grad, param_grad, sgd_step, AugmentConfig, LossTerms,
    LossWeights, ModelError, ModelParams, ParamGrad, FEATURE_DIM,
};
use crate::refine::{refine_pseudo_labels, RefineError, RefineParams, RefinementReport};
use crate::rng::RngStream;
use crate::segmenter::SegmenterKind;
use crate::types::{ClassCatalog, ImageBuf, LabelMap};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Refine(#[from] RefineError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("source dataset is empty")]
    EmptySource,
    #[error("generated dataset is empty")]
    EmptyGenerated,
    #[error("training log: {0}")]
    Log(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    SourceOnly,
    Joint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub student: ModelParams,
    pub teacher: ModelParams,
    pub iteration: usize,
    pub phase: Phase,
}

/// How generated images are labeled for the student.
#[derive(Clone, Debug, PartialEq)]
pub enum PseudoLabelMode {
    /// Teacher argmax refined by the promptable segmenter.
    Refined(SegmenterKind),
    /// Teacher argmax used as is.
    Raw,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Phase2Options {
    pub mode: PseudoLabelMode,
    /// Fraction of pseudo-label pixels replaced by a random class before
    /// refinement.
    pub salt_rate: f64,
    pub augment: AugmentConfig,
}

impl Phase2Options {
    pub fn refined(segmenter: SegmenterKind) -> Self {
        Self {
            mode: PseudoLabelMode::Refined(segmenter),
            salt_rate: 0.0,
            augment: AugmentConfig::default(),
        }
    }

    pub fn raw() -> Self {
        Self {
            mode: PseudoLabelMode::Raw,
            salt_rate: 0.0,
            augment: AugmentConfig::default(),
        }
    }
}

/// What the trainer did with one generated image in one iteration.
pub struct GeneratedView<'a> {
    pub iteration: usize,
    pub original: &'a ImageBuf,
    pub hidden_gt: &'a LabelMap,
    pub pseudo: &'a LabelMap,
    pub refined: &'a LabelMap,
    pub report: Option<&'a RefinementReport>,
    pub student_image: &'a ImageBuf,
    pub student_labels: &'a LabelMap,
    pub flipped: bool,
}

/// Instrumentation points. All methods default to no-ops.
pub trait TrainHooks {
    /// May rewrite the teacher's pseudo labels before refinement.
    fn pseudo_labels(&mut self, _iteration: usize, _hidden_gt: &LabelMap, _pseudo: &mut LabelMap) {}

    fn generated(&mut self, _view: &GeneratedView<'_>) {}

    /// Called after every optimizer step with the states around it.
    fn step(&mut self, _phase: Phase, _before: &TrainState, _after: &TrainState) {}
}

pub struct NoHooks;

impl TrainHooks for NoHooks {}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub phase: Phase,
    pub iteration: usize,
    pub source: LossTerms,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated: Option<LossTerms>,
    /// Share of generated pixels left UNLABELED after refinement.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unlabeled_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_miou: Option<f64>,
}

/// JSON-lines training log. Records are written every `every` iterations
/// and after the last one.
pub struct TrainLog<'w> {
    every: usize,
    sink: Option<&'w mut dyn Write>,
    eval: Option<(&'w dyn SampleSource, ClassCatalog)>,
    pub records: Vec<LogRecord>,
}

impl<'w> TrainLog<'w> {
    pub fn new(every: usize) -> Self {
        Self {
            every: every.max(1),
            sink: None,
            eval: None,
            records: Vec::new(),
        }
    }

    pub fn with_sink(mut self, sink: &'w mut dyn Write) -> Self {
        self.sink = Some(sink);
        self
    }

    /// Evaluates the student at every logged iteration.
    pub fn with_eval(mut self, set: &'w dyn SampleSource, catalog: ClassCatalog) -> Self {
        self.eval = Some((set, catalog));
        self
    }

    fn due(&self, iteration: usize, last: usize) -> bool {
        iteration % self.every == 0 || iteration == last
    }

    fn push(&mut self, mut record: LogRecord, student: &ModelParams) -> Result<(), TrainError> {
        if let Some((set, catalog)) = &self.eval {
            record.eval_miou = evaluate_params(student, *set, catalog)?.miou;
        }
        if let Some(sink) = self.sink.as_mut() {
            serde_json::to_writer(&mut **sink, &record).map_err(std::io::Error::from)?;
            sink.write_all(b"\n")?;
        }
        self.records.push(record);
        Ok(())
    }
}

fn weights(config: &TrainConfig) -> LossWeights {
    LossWeights {
        ce: config.lambda_ce,
        dice: config.lambda_dice,
        cls: config.lambda_cls,
    }
}

pub fn init_state(classes: usize, rng: &RngStream) -> TrainState {
    let student = ModelParams::init(classes, FEATURE_DIM, &mut rng.fork("init"));
    TrainState {
        teacher: student.clone(),
        student,
        iteration: 0,
        phase: Phase::SourceOnly,
    }
}

/// Loss and parameter gradient of one image.
fn image_grad(
    params: &ModelParams,
    image: &ImageBuf,
    labels: &LabelMap,
    config: &TrainConfig,
) -> Result<(LossTerms, ParamGrad), TrainError> {
    let feats = extract_features(image);
    let probs = forward(params, &feats)?;
    let out = loss_and_grad(&probs, labels, weights(config));
    let grad = param_grad(params, &feats, &out.grad, config.finetune_backbone)?;
    Ok((out.terms, grad))
}

/// Mean loss and gradient over augmented source images drawn with replacement.
fn source_batch(
    params: &ModelParams,
    source: &dyn SampleSource,
    count: usize,
    config: &TrainConfig,
    augment_cfg: AugmentConfig,
    rng: &RngStream,
) -> Result<(LossTerms, ParamGrad), TrainError> {
    let mut pick = rng.fork("source-batch");
    let mut aug = rng.fork("source-augment");
    let mut terms = LossTerms::default();
    let mut grad = ParamGrad::zeros_like(params);
    let scale = 1.0 / count as f64;
    for _ in 0..count {
        let LabeledImage { image, labels } = source.get(pick.below(source.len()));
        let (img, lab, _) = augment(&image, &labels, augment_cfg, &mut aug);
        let (t, g) = image_grad(params, &img, &lab, config)?;
        terms += t.scaled(scale);
        grad.add_scaled(&g, scale);
    }
    Ok((terms, grad))
}

/// Supervised training on source data. The teacher is a copy of the
/// student on return.
pub fn train_phase1(
    source: &dyn SampleSource,
    classes: usize,
    config: &TrainConfig,
    rng: &RngStream,
    log: &mut TrainLog<'_>,
    hooks: &mut dyn TrainHooks,
) -> Result<TrainState, TrainError> {
    config.validate()?;
    if source.is_empty() {
        return Err(TrainError::EmptySource);
    }
    let mut state = init_state(classes, rng);
    let phase_rng = rng.fork("phase1");
    for t in 0..config.iters_phase1 {
        let it_rng = phase_rng.fork_index(t as u64);
        let (terms, grad) = source_batch(
            &state.student,
            source,
            config.batch_size,
            config,
            AugmentConfig::default(),
            &it_rng,
        )?;
        let next = TrainState {
            student: sgd_step(&state.student, &grad, config.lr, config.finetune_backbone)?,
            teacher: state.teacher.clone(),
            iteration: t + 1,
            phase: Phase::SourceOnly,
        };
        hooks.step(Phase::SourceOnly, &state, &next);
        state = next;
        if log.due(state.iteration, config.iters_phase1) {
            let record = LogRecord {
                phase: Phase::SourceOnly,
                iteration: state.iteration,
                source: terms,
                generated: None,
                unlabeled_fraction: None,
                eval_miou: None,
            };
            log.push(record, &state.student)?;
        }
    }
    state.teacher = state.student.clone();
    Ok(state)
}

fn salt(pseudo: &mut LabelMap, rate: f64, classes: usize, rng: &mut RngStream) {
    if rate <= 0.0 {
        return;
    }
    for l in pseudo.labels_mut() {
        if rng.bernoulli(rate) {
            *l = rng.below(classes) as u8;
        }
    }
}

/// Joint training. `generated = None` trains on the source half of each
/// batch only and consumes source data exactly as the joint run does.
pub fn train_phase2(
    mut state: TrainState,
    source: &dyn SampleSource,
    generated: Option<&dyn SampleSource>,
    options: &Phase2Options,
    config: &TrainConfig,
    rng: &RngStream,
    log: &mut TrainLog<'_>,
    hooks: &mut dyn TrainHooks,
) -> Result<TrainState, TrainError> {
    config.validate()?;
    if source.is_empty() {
        return Err(TrainError::EmptySource);
    }
    let generated = match generated {
        Some(g) if g.is_empty() => return Err(TrainError::EmptyGenerated),
        other => other,
    };
    let classes = state.student.classes;
    let n_source = config.batch_size.div_ceil(2);
    let n_generated = (config.batch_size / 2).max(1);
    let refine_params = RefineParams {
        min_area: config.tau,
        points: config.k,
    };
    let phase_rng = rng.fork("phase2");
    state.phase = Phase::Joint;

    for t in 0..config.iters_phase2 {
        let iteration = t + 1;
        let it_rng = phase_rng.fork_index(t as u64);
        let (source_terms, mut grad) =
            source_batch(&state.student, source, n_source, config, options.augment, &it_rng)?;

        let mut gen_terms = None;
        let mut unlabeled_fraction = None;
        if let Some(pool) = generated {
            let mut pick = it_rng.fork("generated-batch");
            let mut aug = it_rng.fork("generated-augment");
            let mut refine_rng = it_rng.fork("refine");
            let mut salt_rng = it_rng.fork("salt");
            let mut terms = LossTerms::default();
            let mut gen_grad = ParamGrad::zeros_like(&state.student);
            let (mut unlabeled, mut pixels) = (0usize, 0usize);
            let scale = 1.0 / n_generated as f64;
            for _ in 0..n_generated {
                let LabeledImage { image, labels: hidden_gt } = pool.get(pick.below(pool.len()));
                let mut pseudo = forward(&state.teacher, &extract_features(&image))?.argmax();
                salt(&mut pseudo, options.salt_rate, classes, &mut salt_rng);
                hooks.pseudo_labels(iteration, &hidden_gt, &mut pseudo);
                let (refined, report) = match &options.mode {
                    PseudoLabelMode::Refined(kind) => {
                        let (map, report) =
                            refine_pseudo_labels(&image, &pseudo, &hidden_gt, kind, classes, refine_params, &mut refine_rng)?;
                        (map, Some(report))
                    }
                    PseudoLabelMode::Raw => (pseudo.clone(), None),
                };
                unlabeled += refined.unlabeled_count();
                pixels += refined.len();
                let (img, lab, record) = augment(&image, &refined, options.augment, &mut aug);
                hooks.generated(&GeneratedView {
                    iteration,
                    original: &image,
                    hidden_gt: &hidden_gt,
                    pseudo: &pseudo,
                    refined: &refined,
                    report: report.as_ref(),
                    student_image: &img,
                    student_labels: &lab,
                    flipped: record.flipped,
                });
                let (t, g) = image_grad(&state.student, &img, &lab, config)?;
                terms += t.scaled(scale);
                gen_grad.add_scaled(&g, scale);
            }
            grad.add_scaled(&gen_grad, 1.0);
            gen_terms = Some(terms);
            unlabeled_fraction = Some(unlabeled as f64 / pixels as f64);
        }

        let student = sgd_step(&state.student, &grad, config.lr, config.finetune_backbone)?;
        let teacher = ema_update(&state.teacher, &student, config.alpha)?;
        let next = TrainState {
            student,
            teacher,
            iteration,
            phase: Phase::Joint,
        };
        hooks.step(Phase::Joint, &state, &next);
        state = next;
        if log.due(iteration, config.iters_phase2) {
            let record = LogRecord {
                phase: Phase::Joint,
                iteration,
                source: source_terms,
                generated: gen_terms,
                unlabeled_fraction,
                eval_miou: None,
            };
            log.push(record, &state.student)?;
        }
    }
    Ok(state)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalModel {
    Student,
    Teacher,
}

pub fn confusion(params: &ModelParams, set: &dyn SampleSource) -> Result<ConfusionMatrix, TrainError> {
    let mut cm = ConfusionMatrix::new(params.classes);
    for i in 0..set.len() {
        let LabeledImage { image, labels } = set.get(i);
        let pred = forward(params, &extract_features(&image))?.argmax();
        cm.accumulate(&labels, &pred)?;
    }
    Ok(cm)
}

fn evaluate_params(params: &ModelParams, set: &dyn SampleSource, catalog: &ClassCatalog) -> Result<MetricsReport, TrainError> {
    Ok(confusion(params, set)?.report(catalog))
}

pub fn evaluate(
    state: &TrainState,
    set: &dyn SampleSource,
    which: EvalModel,
    catalog: &ClassCatalog,
) -> Result<MetricsReport, TrainError> {
    let params = match which {
        EvalModel::Student => &state.student,
        EvalModel::Teacher => &state.teacher,
    };
    evaluate_params(params, set, catalog)
}
