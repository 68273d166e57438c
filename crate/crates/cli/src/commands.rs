use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use plrefine::dataset::{domain_set, LabeledImage};
use plrefine::experiment::{mean, Arm, SeedContext, World};
use plrefine::metrics::MetricsReport;
use plrefine::model::ModelParams;
use plrefine::refine::{refine_pseudo_labels, RefineParams, RefinementReport};
use plrefine::scenegen::{make_domain, DomainPreset, CLASS_COUNT};
use plrefine::trainer::{
    confusion, evaluate, train_phase1, train_phase2, NoHooks, Phase2Options, TrainLog,
};
use plrefine::{ClassCatalog, RngStream, TrainConfig, UNLABELED};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::CliError;
use crate::store::{self, DatasetManifest};
use crate::{Cli, EvalArgs, GenArgs, RefineArgs, SegmenterArg, SweepArgs, SweepAxis, TrainArgs};

/// Presets every trained model is scored on.
pub const EVAL_PRESETS: [DomainPreset; 4] = [
    DomainPreset::Source,
    DomainPreset::TargetStyle,
    DomainPreset::TargetContent,
    DomainPreset::TargetBoth,
];

fn progress(cli: &Cli, msg: impl AsRef<str>) {
    if !cli.quiet {
        eprintln!("{}", msg.as_ref());
    }
}

fn require_seed(cli: &Cli, command: &str) -> Result<u64, CliError> {
    cli.seed
        .ok_or_else(|| CliError::Validation(format!("{command} requires --seed")))
}

fn require_out(cli: &Cli, command: &str) -> Result<PathBuf, CliError> {
    let out = cli
        .out
        .clone()
        .ok_or_else(|| CliError::Validation(format!("{command} requires --out")))?;
    store::create_dir(&out)?;
    Ok(out)
}

fn load_config(cli: &Cli) -> Result<TrainConfig, CliError> {
    match &cli.config {
        None => Ok(TrainConfig::default()),
        Some(path) => {
            let bytes = store::read_file(path)?;
            let text = String::from_utf8(bytes).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
            TrainConfig::from_json(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
        }
    }
}

pub fn gen(cli: &Cli, args: &GenArgs) -> Result<(), CliError> {
    let out = require_out(cli, "gen")?;
    let seed = cli.seed.unwrap_or(0);
    let mut generator = make_domain(args.preset, &RngStream::new(seed).fork("gen"), args.width, args.height)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    for i in 0..args.count {
        store::write_sample(&out, i, &generator.next_sample())?;
    }
    let manifest = DatasetManifest {
        preset: args.preset,
        count: args.count,
        seed,
        width: args.width,
        height: args.height,
    };
    store::write_json(&out.join(store::MANIFEST), &manifest)?;
    progress(cli, format!("wrote {} {} samples to {}", args.count, args.preset.name(), out.display()));
    Ok(())
}

/// Evaluation sets rendered from the run seed, one per preset.
pub fn eval_sets(seed: u64, count: usize, width: usize, height: usize) -> Result<Vec<(DomainPreset, Vec<LabeledImage>)>, CliError> {
    let root = RngStream::new(seed).fork("eval");
    EVAL_PRESETS
        .iter()
        .map(|&p| {
            domain_set(p, &root.fork(p.name()), count, width, height)
                .map(|set| (p, set))
                .map_err(|e| CliError::Validation(e.to_string()))
        })
        .collect()
}

pub fn train(cli: &Cli, args: &TrainArgs) -> Result<(), CliError> {
    let seed = require_seed(cli, "train")?;
    let out = require_out(cli, "train")?;
    let config = load_config(cli)?;
    if !(0.0..=1.0).contains(&args.salt) {
        return Err(CliError::Validation(format!("salt rate {} outside [0, 1]", args.salt)));
    }

    let (manifest, source) = store::load_dataset(&args.source, None)?;
    if source.is_empty() {
        return Err(CliError::Validation(format!("{}: source dataset is empty", args.source.display())));
    }
    let (w, h) = (manifest.width, manifest.height);
    let generated = match &args.generated {
        Some(dir) if config.gen_size > 0 => {
            let (gm, set) = store::load_dataset(dir, Some(config.gen_size))?;
            if (gm.width, gm.height) != (w, h) {
                return Err(CliError::Validation(format!(
                    "{}: generated images are {}x{} but source images are {w}x{h}",
                    dir.display(),
                    gm.width,
                    gm.height
                )));
            }
            (!set.is_empty()).then_some(set)
        }
        _ => None,
    };

    let rng = RngStream::new(seed).fork("train");
    let log_path = out.join("log.jsonl");
    let file = File::create(&log_path).map_err(|e| CliError::io(&log_path, e))?;
    let mut sink = BufWriter::new(file);
    let state = {
        let mut log = TrainLog::new(args.log_every).with_sink(&mut sink);
        progress(cli, format!("phase 1: {} iterations on {} source images", config.iters_phase1, source.len()));
        let state = train_phase1(&source, CLASS_COUNT, &config, &rng, &mut log, &mut NoHooks)?;
        let options = Phase2Options {
            salt_rate: args.salt,
            ..match args.segmenter.kind(w, h) {
                Some(kind) => Phase2Options::refined(kind),
                None => Phase2Options::raw(),
            }
        };
        progress(
            cli,
            format!(
                "phase 2: {} iterations, {} generated images, segmenter {}",
                config.iters_phase2,
                generated.as_ref().map_or(0, Vec::len),
                args.segmenter.label()
            ),
        );
        let gen_source = generated.as_ref().map(|g| g as &dyn plrefine::dataset::SampleSource);
        train_phase2(state, &source, gen_source, &options, &config, &rng, &mut log, &mut NoHooks)?
    };
    sink.flush().map_err(|e| CliError::io(&log_path, e))?;

    let params = match args.eval_model {
        crate::EvalWeights::Student => &state.student,
        crate::EvalWeights::Teacher => &state.teacher,
    };
    store::write_file(&out.join("checkpoint.json"), params.to_checkpoint_json().as_bytes())?;
    store::write_file(&out.join("teacher.json"), state.teacher.to_checkpoint_json().as_bytes())?;

    let catalog = ClassCatalog::urban();
    let mut metrics = BTreeMap::new();
    for (preset, set) in eval_sets(seed, args.eval_count, w, h)? {
        let report = evaluate(&state, &set, args.eval_model.into(), &catalog)?;
        progress(cli, format!("{:>14}: mIoU {}", preset.name(), fmt_miou(report.miou)));
        metrics.insert(preset.name(), report);
    }
    store::write_json(&out.join("metrics.json"), &metrics)?;
    Ok(())
}

fn fmt_miou(m: Option<f64>) -> String {
    m.map_or_else(|| "n/a".into(), |v| format!("{:.2}", 100.0 * v))
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct LabeledAccuracy {
    pub labeled_pixels: usize,
    pub correct_pixels: usize,
    /// Share of refined labeled pixels that agree with the ground truth.
    pub labeled_accuracy: Option<f64>,
}

impl LabeledAccuracy {
    fn add(&mut self, other: &LabeledAccuracy) {
        self.labeled_pixels += other.labeled_pixels;
        self.correct_pixels += other.correct_pixels;
        self.finish();
    }

    fn finish(&mut self) {
        self.labeled_accuracy = (self.labeled_pixels > 0).then(|| self.correct_pixels as f64 / self.labeled_pixels as f64);
    }
}

#[derive(Serialize)]
struct RefineImageReport {
    file: String,
    report: RefinementReport,
    #[serde(flatten)]
    accuracy: LabeledAccuracy,
}

#[derive(Serialize)]
struct RefineSummary {
    images: Vec<RefineImageReport>,
    aggregate: RefinementReport,
    #[serde(flatten)]
    accuracy: LabeledAccuracy,
}

fn labeled_accuracy(refined: &plrefine::LabelMap, gt: &plrefine::LabelMap) -> LabeledAccuracy {
    let mut acc = LabeledAccuracy::default();
    for (&r, &g) in refined.labels().iter().zip(gt.labels()) {
        if r != UNLABELED && g != UNLABELED {
            acc.labeled_pixels += 1;
            acc.correct_pixels += usize::from(r == g);
        }
    }
    acc.finish();
    acc
}

pub fn refine(cli: &Cli, args: &RefineArgs) -> Result<(), CliError> {
    let seed = require_seed(cli, "refine")?;
    let out = require_out(cli, "refine")?;
    if args.k == 0 {
        return Err(CliError::Validation("--k must be >= 1".into()));
    }
    if args.segmenter == SegmenterArg::None {
        return Err(CliError::Validation("refine needs a segmenter, not `none`".into()));
    }
    let stems = store::pgm_stems(&args.pl_dir)?;
    let missing: Vec<String> = stems
        .iter()
        .flat_map(|s| {
            [
                args.gt_dir.join(format!("{s}.pgm")),
                args.img_dir.join(format!("{s}.ppm")),
            ]
        })
        .filter(|p| !p.is_file())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Validation(format!("missing files: {}", missing.join(", "))));
    }

    let classes = ClassCatalog::urban().class_count();
    let rng = RngStream::new(seed).fork("refine");
    let params = RefineParams {
        min_area: args.tau,
        points: args.k,
    };
    let mut images = Vec::with_capacity(stems.len());
    let mut aggregate = RefinementReport::new(classes);
    let mut total = LabeledAccuracy::default();
    let mut mismatched = Vec::new();
    for (i, s) in stems.iter().enumerate() {
        let pl_path = args.pl_dir.join(format!("{s}.pgm"));
        let pseudo = store::read_labels(&pl_path)?;
        let gt = store::read_labels(&args.gt_dir.join(format!("{s}.pgm")))?;
        let image = store::read_image(&args.img_dir.join(format!("{s}.ppm")))?;
        if !pseudo.same_dims(&gt) || (image.width(), image.height()) != (gt.width(), gt.height()) {
            mismatched.push(s.clone());
            continue;
        }
        let kind = args.segmenter.kind(image.width(), image.height()).expect("checked above");
        let (refined, report) = refine_pseudo_labels(&image, &pseudo, &gt, &kind, classes, params, &mut rng.fork_index(i as u64))
            .map_err(|e| CliError::Validation(format!("{}: {e}", pl_path.display())))?;
        store::write_file(&out.join(format!("{s}.pgm")), &plrefine::pnm::encode_pgm(&refined))?;
        let accuracy = labeled_accuracy(&refined, &gt);
        aggregate.merge(&report);
        total.add(&accuracy);
        images.push(RefineImageReport {
            file: format!("{s}.pgm"),
            report,
            accuracy,
        });
    }
    if !mismatched.is_empty() {
        return Err(CliError::Validation(format!("dimension mismatch for: {}", mismatched.join(", "))));
    }
    progress(
        cli,
        format!(
            "refined {} maps, {} components prompted, labeled accuracy {}",
            images.len(),
            aggregate.total_prompted(),
            total.labeled_accuracy.map_or_else(|| "n/a".into(), |a| format!("{a:.4}"))
        ),
    );
    store::write_json(
        &out.join("report.json"),
        &RefineSummary {
            images,
            aggregate,
            accuracy: total,
        },
    )
}

pub fn eval(cli: &Cli, args: &EvalArgs) -> Result<(), CliError> {
    let text = String::from_utf8(store::read_file(&args.checkpoint)?)
        .map_err(|e| CliError::Validation(format!("{}: {e}", args.checkpoint.display())))?;
    let params = ModelParams::from_checkpoint_json(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", args.checkpoint.display())))?;
    let set = match (&args.data, args.preset) {
        (Some(dir), _) => store::load_dataset(dir, None)?.1,
        (None, Some(preset)) => domain_set(
            preset,
            &RngStream::new(cli.seed.unwrap_or(0)).fork("eval").fork(preset.name()),
            args.count,
            args.width,
            args.height,
        )
        .map_err(|e| CliError::Validation(e.to_string()))?,
        (None, None) => return Err(CliError::Validation("eval needs --data or --preset".into())),
    };
    let report: MetricsReport = confusion(&params, &set)?.report(&ClassCatalog::urban());
    match &cli.out {
        Some(out) => {
            store::create_dir(out)?;
            store::write_json(&out.join("metrics.json"), &report)?;
            progress(cli, format!("mIoU {}", fmt_miou(report.miou)));
        }
        None => println!("{}", serde_json::to_string_pretty(&report).expect("report serializes")),
    }
    Ok(())
}

/// One parsed sweep value.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepValue {
    pub text: String,
    pub config: TrainConfig,
}

pub fn sweep_values(axis: SweepAxis, values: &[String], base: &TrainConfig) -> Result<Vec<SweepValue>, CliError> {
    values
        .iter()
        .map(|text| {
            let count = || crate::parse_count(text).map_err(CliError::Validation);
            let config = match axis {
                SweepAxis::GenSize => TrainConfig {
                    gen_size: count()?,
                    ..base.clone()
                },
                SweepAxis::Points => TrainConfig { k: count()?, ..base.clone() },
                SweepAxis::Tau => TrainConfig {
                    tau: count()?,
                    ..base.clone()
                },
                SweepAxis::Finetune => TrainConfig {
                    finetune_backbone: match text.as_str() {
                        "0" | "false" => false,
                        "1" | "true" => true,
                        _ => return Err(CliError::Validation(format!("finetune value `{text}` is not 0/1/true/false"))),
                    },
                    ..base.clone()
                },
            };
            config.validate().map_err(|e| CliError::Validation(e.to_string()))?;
            Ok(SweepValue {
                text: text.clone(),
                config,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepCell {
    pub value: String,
    pub seed: u64,
    pub miou: f64,
    pub unlabeled_fraction: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub value: String,
    pub seeds: usize,
    pub mean_miou: f64,
    pub std_miou: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepSummary {
    pub axis: &'static str,
    pub segmenter: String,
    pub salt_rate: f64,
    pub world: World,
    pub config: TrainConfig,
    pub points: Vec<SweepPoint>,
}

fn thread_count() -> Result<usize, CliError> {
    match std::env::var("PLREFINE_THREADS") {
        Err(_) => Ok(0),
        Ok(v) => v
            .parse()
            .map_err(|_| CliError::Validation(format!("PLREFINE_THREADS=`{v}` is not a thread count"))),
    }
}

/// Runs every (value, seed) cell. Seeds run in parallel; values within a
/// seed run in order so they share the seed's phase-1 model.
pub fn run_sweep_cells(
    world: &World,
    values: &[SweepValue],
    seeds: &[u64],
    segmenter: &SegmenterArg,
    salt: f64,
) -> Result<Vec<SweepCell>, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count()?)
        .build()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let arm = match segmenter.kind(world.width, world.height) {
        Some(kind) => Arm::Refined(kind),
        None => Arm::RawPseudoLabels,
    };
    let per_seed: Vec<Vec<SweepCell>> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let mut ctx = SeedContext::new(seed, world)?;
                values
                    .iter()
                    .map(|v| {
                        let r = ctx.run(&v.config, &arm, salt)?;
                        Ok(SweepCell {
                            value: v.text.clone(),
                            seed,
                            miou: r.miou,
                            unlabeled_fraction: r.unlabeled_fraction,
                        })
                    })
                    .collect::<Result<Vec<_>, CliError>>()
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;
    let mut cells = Vec::with_capacity(values.len() * seeds.len());
    for v in values {
        for seed_cells in &per_seed {
            cells.extend(seed_cells.iter().filter(|c| c.value == v.text).cloned());
        }
    }
    Ok(cells)
}

pub fn summarize(values: &[SweepValue], cells: &[SweepCell]) -> Vec<SweepPoint> {
    values
        .iter()
        .map(|v| {
            let m: Vec<f64> = cells.iter().filter(|c| c.value == v.text).map(|c| c.miou).collect();
            let mu = mean(&m);
            let var = if m.len() > 1 {
                m.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (m.len() - 1) as f64
            } else {
                0.0
            };
            SweepPoint {
                value: v.text.clone(),
                seeds: m.len(),
                mean_miou: mu,
                std_miou: var.sqrt(),
            }
        })
        .collect()
}

pub fn sweep(cli: &Cli, args: &SweepArgs) -> Result<(), CliError> {
    let seed = require_seed(cli, "sweep")?;
    let out = require_out(cli, "sweep")?;
    if args.seeds == 0 {
        return Err(CliError::Validation("--seeds must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&args.salt) {
        return Err(CliError::Validation(format!("salt rate {} outside [0, 1]", args.salt)));
    }
    let base = load_config(cli)?;
    let values = sweep_values(args.axis, &args.values, &base)?;
    let world = World {
        width: args.width,
        height: args.height,
        source_count: args.source_count,
        eval_count: args.eval_count,
        eval_preset: args.eval_preset,
    };
    let seeds: Vec<u64> = (0..args.seeds as u64).map(|i| seed.wrapping_add(i)).collect();
    progress(
        cli,
        format!("sweep {}: {} values x {} seeds", args.axis.name(), values.len(), seeds.len()),
    );
    let cells = run_sweep_cells(&world, &values, &seeds, &args.segmenter, args.salt)?;

    let mut csv = String::from("axis,value,seed,miou\n");
    for c in &cells {
        csv.push_str(&format!("{},{},{},{}\n", args.axis.name(), c.value, c.seed, c.miou));
        let dir = out.join("cells").join(format!("{}_{}", c.value, c.seed));
        store::create_dir(&dir)?;
        store::write_json(&dir.join("cell.json"), c)?;
    }
    store::write_file(&out.join("sweep.csv"), csv.as_bytes())?;
    let points = summarize(&values, &cells);
    for p in &points {
        progress(cli, format!("{}={}: mean mIoU {:.2} (sd {:.2}, n={})", args.axis.name(), p.value, 100.0 * p.mean_miou, 100.0 * p.std_miou, p.seeds));
    }
    store::write_json(
        &out.join("summary.json"),
        &SweepSummary {
            axis: args.axis.name(),
            segmenter: args.segmenter.label(),
            salt_rate: args.salt,
            world,
            config: base,
            points,
        },
    )
}

/// Reads `sweep.csv` rows back as (value, seed, miou).
pub fn read_sweep_csv(path: &Path) -> Result<Vec<(String, u64, f64)>, CliError> {
    let text = String::from_utf8(store::read_file(path)?).map_err(|e| CliError::Validation(e.to_string()))?;
    text.lines()
        .skip(1)
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || CliError::Validation(format!("{}: bad row `{line}`", path.display()));
            if f.len() != 4 {
                return Err(bad());
            }
            Ok((f[1].to_string(), f[2].parse().map_err(|_| bad())?, f[3].parse().map_err(|_| bad())?))
        })
        .collect()
}
