//! Seeded train/evaluate cells for ablations and sweeps.
//!
//! A seed fixes the source set, the evaluation set, the generated pool and
//! all training randomness. Phase 1 depends only on the seed and the phase-1
//! part of the config, so arms that share it reuse one phase-1 run.

use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::dataset::{domain_set, GeneratedPool, LabeledImage, SampleSource};
use crate::metrics::MetricsReport;
use crate::rng::RngStream;
use crate::scenegen::{DomainPreset, SceneError, CLASS_COUNT};
use crate::segmenter::SegmenterKind;
use crate::trainer::{
    evaluate, train_phase1, train_phase2, EvalModel, NoHooks, Phase2Options, TrainError, TrainLog,
    TrainState,
};
use crate::types::ClassCatalog;

/// Sizes of the synthetic world a cell trains and evaluates in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub width: usize,
    pub height: usize,
    pub source_count: usize,
    pub eval_count: usize,
    pub eval_preset: DomainPreset,
}

impl Default for World {
    fn default() -> Self {
        Self {
            width: 32,
            height: 32,
            source_count: 200,
            eval_count: 40,
            eval_preset: DomainPreset::TargetBoth,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Arm {
    SourceOnly,
    RawPseudoLabels,
    Refined(SegmenterKind),
}

impl Arm {
    pub fn name(&self) -> &'static str {
        match self {
            Arm::SourceOnly => "source-only",
            Arm::RawPseudoLabels => "raw",
            Arm::Refined(_) => "refined",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// Everything a seed fixes, plus the phase-1 result.
pub struct SeedContext {
    pub seed: u64,
    pub world: World,
    pub source: Vec<LabeledImage>,
    pub eval: Vec<LabeledImage>,
    root: RngStream,
    phase1: Option<(TrainConfig, TrainState)>,
}

fn phase1_key(c: &TrainConfig) -> TrainConfig {
    TrainConfig {
        iters_phase2: 0,
        alpha: 0.0,
        tau: 0,
        k: 1,
        gen_size: 0,
        ..c.clone()
    }
}

impl SeedContext {
    pub fn new(seed: u64, world: &World) -> Result<Self, ExperimentError> {
        let root = RngStream::new(seed);
        let (w, h) = (world.width, world.height);
        Ok(Self {
            seed,
            world: world.clone(),
            source: domain_set(DomainPreset::Source, &root.fork("source"), world.source_count, w, h)?,
            eval: domain_set(world.eval_preset, &root.fork("eval"), world.eval_count, w, h)?,
            root,
            phase1: None,
        })
    }

    pub fn generated_pool(&self, size: usize) -> Result<GeneratedPool, ExperimentError> {
        Ok(GeneratedPool::new(&self.root.fork("generated"), size, self.world.width, self.world.height)?)
    }

    fn train_rng(&self) -> RngStream {
        self.root.fork("train")
    }

    pub fn phase1(&mut self, config: &TrainConfig) -> Result<TrainState, ExperimentError> {
        let key = phase1_key(config);
        if let Some((k, state)) = &self.phase1 {
            if *k == key {
                return Ok(state.clone());
            }
        }
        let state = train_phase1(&self.source, CLASS_COUNT, config, &self.train_rng(), &mut TrainLog::new(usize::MAX), &mut NoHooks)?;
        self.phase1 = Some((key, state.clone()));
        Ok(state)
    }

    /// Runs phase 2 for one arm and evaluates the student.
    pub fn run(&mut self, config: &TrainConfig, arm: &Arm, salt_rate: f64) -> Result<CellResult, ExperimentError> {
        let start = self.phase1(config)?;
        let pool;
        let (generated, options): (Option<&dyn SampleSource>, Phase2Options) = match arm {
            _ if config.gen_size == 0 => (None, Phase2Options::raw()),
            Arm::SourceOnly => (None, Phase2Options::raw()),
            Arm::RawPseudoLabels => {
                pool = self.generated_pool(config.gen_size)?;
                (Some(&pool), Phase2Options::raw())
            }
            Arm::Refined(kind) => {
                pool = self.generated_pool(config.gen_size)?;
                (Some(&pool), Phase2Options::refined(kind.clone()))
            }
        };
        let options = Phase2Options {
            salt_rate,
            ..options
        };
        let mut log = TrainLog::new(usize::MAX);
        let state = train_phase2(start, &self.source, generated, &options, config, &self.train_rng(), &mut log, &mut NoHooks)?;
        let report = evaluate(&state, &self.eval, EvalModel::Student, &ClassCatalog::urban())?;
        let unlabeled_fraction = log.records.last().and_then(|r| r.unlabeled_fraction);
        Ok(CellResult {
            seed: self.seed,
            miou: report.miou.unwrap_or(0.0),
            unlabeled_fraction,
            report,
            state,
        })
    }
}

pub struct CellResult {
    pub seed: u64,
    pub miou: f64,
    pub unlabeled_fraction: Option<f64>,
    pub report: MetricsReport,
    pub state: TrainState,
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
