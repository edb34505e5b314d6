//! Training runs, the ablation grid and α sweeps.
//!
//! Artifacts written under an output directory:
//!
//! ```text
//! manifest.txt          resolved config, seed, tool version
//! runlog.csv            epoch,stage,alpha,train_loss,validation_loss,validation_relative,transition
//! timings.csv           epoch,wall_seconds
//! stages.csv            one row of held-out metrics per finished stage
//! checkpoints/stageN.ckpt, checkpoints/final.ckpt
//! heldout_gt.txt, heldout_est.txt   KITTI trajectories of the held-out sequence
//! ```
//!
//! Wall-clock times live in their own file so `runlog.csv` is byte-identical
//! across repeated runs.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::Vector6;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autodiff::{AdamConfig, Matrix, ParamStore, Tape};
use crate::config::{DataSource, RunConfig};
use crate::curriculum::{CurriculumSchedule, ScheduleMode, Stage, Transition, TransitionReason};
use crate::dataset::read_dataset;
use crate::error::{DataError, FormatError, TrainError};
use crate::evaluation::{feasible_lengths, rpe, segment_errors};
use crate::formats::{format_checkpoint, format_kitti, write_file, KeyValues};
use crate::geometry::{accumulate, Pose, Trajectory};
use crate::loss::{sequence_loss, sequence_loss_value, LossWeights};
use crate::model::{init_params, HiddenState, Regressor, RegressorConfig};
use crate::synthdata::{sample_subsequences, FeatureStats, Sequence};

const INIT_STREAM: u64 = 1;
const SAMPLE_STREAM: u64 = 2;
const DROPOUT_STREAM: u64 = 3;

/// Objective used to compare bounded-loss validation across modes.
pub const REFERENCE_BOUNDED_ALPHA: f64 = 0.5;
pub const REFERENCE_BOUNDED_WINDOW: usize = 2;

/// The four compared training regimes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AblationMode {
    Curriculum,
    AntiCurriculum,
    /// α = 1 throughout.
    FixedRelative,
    /// α = 0.5, w = 2 throughout.
    FixedBounded,
}

impl AblationMode {
    pub const ALL: [AblationMode; 4] = [
        Self::Curriculum,
        Self::AntiCurriculum,
        Self::FixedRelative,
        Self::FixedBounded,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Curriculum => "curriculum",
            Self::AntiCurriculum => "anti-curriculum",
            Self::FixedRelative => "fixed-relative",
            Self::FixedBounded => "fixed-bounded",
        }
    }

    /// Schedule for this mode built from the configured curriculum.
    ///
    /// Fixed modes repeat their single objective for as many stages as the
    /// curriculum has, so per-stage tables line up across modes.
    pub fn schedule(self, curriculum: &CurriculumSchedule) -> CurriculumSchedule {
        let forward = match curriculum.mode() {
            ScheduleMode::AntiCurriculum => curriculum.reversed(),
            _ => curriculum.clone(),
        };
        let repeat = |stage: Stage| {
            CurriculumSchedule::new(vec![stage; forward.stages().len()], ScheduleMode::Fixed)
                .expect("stage derived from a valid schedule")
        };
        let template = forward.stages()[0];
        match self {
            Self::Curriculum => forward,
            Self::AntiCurriculum => forward.reversed(),
            Self::FixedRelative => repeat(Stage {
                weights: template.weights.with_alpha(1.0),
                ..template
            }),
            Self::FixedBounded => repeat(Stage {
                weights: LossWeights {
                    alpha: REFERENCE_BOUNDED_ALPHA,
                    window: REFERENCE_BOUNDED_WINDOW,
                    ..template.weights
                },
                ..template
            }),
        }
    }
}

impl fmt::Display for AblationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown mode `{s}` (expected curriculum, anti-curriculum, fixed-relative or fixed-bounded)"))
    }
}

/// Train/validation/held-out sequences with features centered on the training mean.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub train: Vec<Sequence>,
    pub validation: Vec<Sequence>,
    pub held_out: Vec<Sequence>,
    pub stats: FeatureStats,
}

impl PreparedData {
    pub fn feature_dim(&self) -> usize {
        self.train[0].features.ncols()
    }
}

/// Loads or generates the data and splits it at the sequence level; the last
/// sequences go to validation. Generated data gets extra sequences, never
/// seen in training, as the held-out set; a dataset directory reuses its
/// validation sequences.
pub fn prepare_data(config: &RunConfig) -> Result<PreparedData, TrainError> {
    let (all, extra) = match &config.data {
        DataSource::Generate(g) => {
            let extra = (g.sequences..g.sequences + config.held_out_sequences)
                .map(|i| g.generate_one(i))
                .collect::<Result<Vec<_>, _>>()?;
            (g.generate()?, Some(extra))
        }
        DataSource::Directory(dir) => {
            let seqs = read_dataset(dir).map_err(|e| match e {
                crate::dataset::DatasetError::Format(f) => TrainError::Format(f),
                crate::dataset::DatasetError::Data { path, source } => {
                    TrainError::Format(FormatError::parse(&path, 0, source.to_string()))
                }
            })?;
            (seqs, None)
        }
    };
    if all.len() < 2 {
        return Err(DataError::InvalidRange(format!("need at least 2 sequences, found {}", all.len())).into());
    }
    let n_val = ((all.len() as f64 * config.validation_split).round() as usize).clamp(1, all.len() - 1);
    let (train, validation) = all.split_at(all.len() - n_val);
    let shortest = train.iter().map(Sequence::len).min().unwrap_or(0);
    if shortest < config.sampling.max_len {
        return Err(DataError::InvalidRange(format!(
            "train.max_length {} exceeds the shortest training sequence ({shortest} steps)",
            config.sampling.max_len
        ))
        .into());
    }
    let stats = FeatureStats::compute(train)?;
    let apply = |seqs: &[Sequence]| seqs.iter().map(|s| stats.apply(s)).collect::<Vec<_>>();
    let held_out = match extra {
        Some(seqs) => apply(&seqs),
        None => apply(validation),
    };
    Ok(PreparedData {
        train: apply(train),
        validation: apply(validation),
        held_out,
        stats,
    })
}

pub fn regressor_config(config: &RunConfig, input_dim: usize) -> RegressorConfig {
    RegressorConfig {
        input_dim,
        lstm_sizes: config.model.lstm_sizes.clone(),
        head_hidden: config.model.head_hidden,
        dropout: config.model.dropout,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based, monotone across stages.
    pub epoch: usize,
    pub stage: usize,
    pub alpha: f64,
    /// Mean per-step training objective over the epoch's sub-trajectories.
    pub train_loss: f64,
    /// Per-step validation loss under the current stage's objective.
    pub validation_loss: f64,
    /// Per-step validation loss under the relative objective (α = 1).
    pub validation_relative: f64,
    /// Set on the epoch that ended a stage.
    pub transition: Option<TransitionReason>,
    pub wall_seconds: f64,
}

/// Errors of the held-out trajectory predicted by the current parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeldOutMetrics {
    pub segment_translation_pct: f64,
    pub segment_rotation_deg_per_m: f64,
    pub rpe_translation_pct: f64,
    pub rpe_rotation_deg: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageSummary {
    pub stage: usize,
    pub alpha: f64,
    pub window: usize,
    pub epochs: usize,
    pub reason: TransitionReason,
    pub validation_loss: f64,
    pub validation_relative: f64,
    /// Validation loss under the α = 0.5, w = 2 objective.
    pub validation_bounded: f64,
    pub held_out: HeldOutMetrics,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLog {
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    pub stages: Vec<StageSummary>,
}

impl RunLog {
    pub const HEADER: &'static str = "epoch,stage,alpha,train_loss,validation_loss,validation_relative,transition";

    pub fn final_metrics(&self) -> Option<&HeldOutMetrics> {
        self.stages.last().map(|s| &s.held_out)
    }

    /// Epoch records without wall-clock time.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::HEADER);
        for r in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{:e},{:e},{:e},{}\n",
                r.epoch,
                r.stage,
                r.alpha,
                r.train_loss,
                r.validation_loss,
                r.validation_relative,
                r.transition.map(|t| t.to_string()).unwrap_or_default()
            ));
        }
        out
    }

    pub fn timings_csv(&self) -> String {
        let mut out = String::from("epoch,wall_seconds\n");
        for r in &self.epochs {
            out.push_str(&format!("{},{:.6}\n", r.epoch, r.wall_seconds));
        }
        out
    }

    pub const STAGES_HEADER: &'static str = "stage,alpha,window,epochs,reason,validation_loss,validation_relative,validation_bounded,segment_translation_pct,segment_rotation_deg_per_m,rpe_translation_pct,rpe_rotation_deg";

    pub fn stages_csv(&self) -> String {
        let mut out = format!("{}\n", Self::STAGES_HEADER);
        for s in &self.stages {
            out.push_str(&stage_row(s));
            out.push('\n');
        }
        out
    }
}

fn stage_row(s: &StageSummary) -> String {
    format!(
        "{},{},{},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
        s.stage,
        s.alpha,
        s.window,
        s.epochs,
        s.reason,
        s.validation_loss,
        s.validation_relative,
        s.validation_bounded,
        s.held_out.segment_translation_pct,
        s.held_out.segment_rotation_deg_per_m,
        s.held_out.rpe_translation_pct,
        s.held_out.rpe_rotation_deg
    )
}

/// Consecutive chunks of a sequence, each predicted from a zero state.
fn chunks(seq: &Sequence, size: usize) -> Vec<(Matrix, Vec<Vector6<f64>>)> {
    (0..seq.len())
        .step_by(size)
        .map(|start| {
            let len = size.min(seq.len() - start);
            (
                seq.features.rows(start, len).into_owned(),
                seq.relatives[start..start + len].to_vec(),
            )
        })
        .collect()
}

struct Evaluator {
    chunk_len: usize,
    validation: Vec<(Matrix, Vec<Vector6<f64>>)>,
    held_out: Vec<Sequence>,
    segments: Vec<f64>,
}

impl Evaluator {
    fn new(config: &RunConfig, data: &PreparedData) -> Self {
        let chunk_len = config.sampling.max_len;
        Self {
            chunk_len,
            validation: data.validation.iter().flat_map(|s| chunks(s, chunk_len)).collect(),
            held_out: data.held_out.clone(),
            segments: config.segments.clone(),
        }
    }

    fn predictions(&self, model: &Regressor, params: &ParamStore) -> Result<Vec<Matrix>, TrainError> {
        let zero = HiddenState::zeros(model.config());
        self.validation
            .iter()
            .map(|(f, _)| Ok(model.predict(params, f, &zero)?.0))
            .collect()
    }

    /// Mean per-step loss of `preds` under each of `weights`.
    fn losses(&self, preds: &[Matrix], weights: &[LossWeights]) -> Result<Vec<f64>, TrainError> {
        let steps: usize = self.validation.iter().map(|(_, t)| t.len()).sum();
        weights
            .iter()
            .map(|w| {
                let mut total = 0.0;
                for (p, (_, truth)) in preds.iter().zip(&self.validation) {
                    total += sequence_loss_value(p, truth, w)?;
                }
                Ok(total / steps as f64)
            })
            .collect()
    }

    /// Predicts each held-out sequence chunk by chunk and chains the relatives.
    fn held_out_trajectories(&self, model: &Regressor, params: &ParamStore) -> Result<Vec<(Trajectory, Trajectory)>, TrainError> {
        let zero = HiddenState::zeros(model.config());
        self.held_out
            .iter()
            .map(|seq| {
                let mut rels = Vec::with_capacity(seq.len());
                for (f, _) in chunks(seq, self.chunk_len) {
                    let (pred, _) = model.predict(params, &f, &zero)?;
                    for row in pred.row_iter() {
                        rels.push(Pose::from_vector6(&Vector6::from_iterator(row.iter().copied())));
                    }
                }
                let gt = seq.trajectory.reanchored();
                let est = accumulate(&rels, Pose::identity());
                Ok((gt, est))
            })
            .collect()
    }

    fn held_out_metrics(&self, model: &Regressor, params: &ParamStore) -> Result<HeldOutMetrics, TrainError> {
        let mut m = HeldOutMetrics {
            segment_translation_pct: 0.0,
            segment_rotation_deg_per_m: 0.0,
            rpe_translation_pct: 0.0,
            rpe_rotation_deg: 0.0,
        };
        let trajs = self.held_out_trajectories(model, params)?;
        let n = trajs.len() as f64;
        for (gt, est) in &trajs {
            let lengths = feasible_lengths(gt, &self.segments);
            if !lengths.is_empty() {
                let seg = segment_errors(gt, est, &lengths)?;
                m.segment_translation_pct += seg.mean_translation_pct() / n;
                m.segment_rotation_deg_per_m += seg.mean_rotation_deg_per_m() / n;
            }
            let r = rpe(gt, est)?;
            m.rpe_translation_pct += r.translation_pct / n;
            m.rpe_rotation_deg += r.rotation_deg / n;
        }
        Ok(m)
    }
}

/// A finished run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ParamStore,
    pub log: RunLog,
    /// Held-out ground truth and estimate under the final parameters.
    pub held_out: Vec<(Trajectory, Trajectory)>,
}

/// Where a run writes its artifacts; `None` keeps everything in memory.
struct Sink<'a> {
    dir: Option<&'a Path>,
}

impl Sink<'_> {
    fn write(&self, name: &str, contents: &str) -> Result<(), FormatError> {
        match self.dir {
            Some(dir) => write_file(&dir.join(name), contents),
            None => Ok(()),
        }
    }
}

/// Full run per the config, writing artifacts to `config.output_dir` if set.
pub fn train(config: &RunConfig) -> Result<(ParamStore, RunLog), TrainError> {
    let data = prepare_data(config)?;
    let outcome = train_prepared(config, &data, &config.schedule, config.output_dir.as_deref())?;
    Ok((outcome.params, outcome.log))
}

/// Trains on already prepared data with the given schedule.
pub fn train_prepared(
    config: &RunConfig,
    data: &PreparedData,
    schedule: &CurriculumSchedule,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome, TrainError> {
    let sink = Sink { dir: out_dir };
    let model = Regressor::new(regressor_config(config, data.feature_dim())).map_err(|e| TrainError::Config(vec![e]))?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    init_rng.set_stream(INIT_STREAM);
    let mut params = init_params(model.config(), config.model.forget_bias, &mut init_rng);
    let mut sample_rng = ChaCha8Rng::seed_from_u64(config.seed);
    sample_rng.set_stream(SAMPLE_STREAM);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed);
    dropout_rng.set_stream(DROPOUT_STREAM);

    let mut run_config = config.clone();
    run_config.schedule = schedule.clone();
    let mut manifest = run_config.to_key_values();
    manifest.set("run.version", crate::VERSION);
    manifest.set("run.seed", config.seed.to_string());
    manifest.set("run.parameters", params.num_scalars().to_string());
    sink.write("manifest.txt", &manifest.render())?;

    let evaluator = Evaluator::new(config, data);
    let reference = schedule.stages()[0].weights;
    let relative_weights = reference.with_alpha(1.0);
    let bounded_weights = LossWeights {
        alpha: REFERENCE_BOUNDED_ALPHA,
        window: REFERENCE_BOUNDED_WINDOW,
        ..reference
    };
    let adam = AdamConfig::default();
    let mut log = RunLog {
        seed: config.seed,
        ..RunLog::default()
    };
    let mut progress = schedule.start();
    let mut epoch = 0usize;

    while !schedule.is_complete(&progress) {
        epoch += 1;
        let started = Instant::now();
        let weights = schedule.current_weights(&progress)?;
        let lr = config.learning_rate * config.lr_decay.powi(epoch as i32 - 1);

        let mut samples = Vec::new();
        for seq in &data.train {
            let seed = sample_rng.random::<u64>();
            samples.extend(sample_subsequences(
                seq,
                config.sampling.per_sequence,
                config.sampling.min_len,
                config.sampling.max_len,
                seed,
            )?);
        }
        samples.shuffle(&mut sample_rng);

        let mut train_total = 0.0;
        for sample in &samples {
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape);
            let drop: Option<&mut dyn RngCore> = (config.model.dropout > 0.0).then_some(&mut dropout_rng as &mut dyn RngCore);
            let out = model.forward(&mut tape, &bound, &sample.features, &HiddenState::zeros(model.config()), drop)?;
            let loss = sequence_loss(&mut tape, &out.poses, &sample.relatives, &weights)?;
            let per_step = tape.scale(loss.total, 1.0 / sample.len() as f64);
            let value = tape.scalar_value(per_step);
            if !value.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch });
            }
            train_total += value;
            let grads = tape.backward(per_step)?;
            params.accumulate_grads(&grads, &bound);
            params.clip_grad_norm(config.grad_clip);
            params.adam_step(lr, adam);
        }

        let preds = evaluator.predictions(&model, &params)?;
        let losses = evaluator.losses(&preds, &[weights, relative_weights])?;
        let (validation_loss, validation_relative) = (losses[0], losses[1]);
        if !validation_loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch });
        }
        let (next, transition) = schedule.advance(&progress, validation_loss);
        let reason = match transition {
            Transition::None => None,
            Transition::Next { reason, .. } | Transition::Complete { reason, .. } => Some(reason),
        };
        log.epochs.push(EpochRecord {
            epoch,
            stage: progress.stage + 1,
            alpha: weights.alpha,
            train_loss: train_total / samples.len() as f64,
            validation_loss,
            validation_relative,
            transition: reason,
            wall_seconds: started.elapsed().as_secs_f64(),
        });
        if let Some(reason) = reason {
            let bounded = evaluator.losses(&preds, &[bounded_weights])?[0];
            log.stages.push(StageSummary {
                stage: progress.stage + 1,
                alpha: weights.alpha,
                window: weights.window,
                epochs: progress.epochs_in_stage + 1,
                reason,
                validation_loss,
                validation_relative,
                validation_bounded: bounded,
                held_out: evaluator.held_out_metrics(&model, &params)?,
            });
            sink.write(&format!("checkpoints/stage{}.ckpt", progress.stage + 1), &format_checkpoint(&params))?;
        }
        progress = next;
    }

    let held_out = evaluator.held_out_trajectories(&model, &params)?;
    sink.write("checkpoints/final.ckpt", &format_checkpoint(&params))?;
    sink.write("runlog.csv", &log.to_csv())?;
    sink.write("timings.csv", &log.timings_csv())?;
    sink.write("stages.csv", &log.stages_csv())?;
    if let Some((gt, est)) = held_out.first() {
        sink.write("heldout_gt.txt", &format_kitti(gt))?;
        sink.write("heldout_est.txt", &format_kitti(est))?;
    }
    Ok(TrainOutcome { params, log, held_out })
}

/// Config for one seed of an experiment: the seed drives both the model
/// initialization and, for generated data, the data itself.
pub fn seeded_config(config: &RunConfig, seed: u64) -> RunConfig {
    let mut c = config.clone();
    c.seed = seed;
    if let DataSource::Generate(g) = &mut c.data {
        g.seed = seed;
    }
    c
}

#[derive(Clone, Debug)]
pub struct AblationCell {
    pub mode: AblationMode,
    pub seed: u64,
    pub log: RunLog,
}

impl AblationCell {
    pub fn first_stage(&self) -> &StageSummary {
        &self.log.stages[0]
    }

    pub fn final_stage(&self) -> &StageSummary {
        self.log.stages.last().expect("every run finishes at least one stage")
    }
}

/// Mode × seed results, ordered by seed then mode.
#[derive(Clone, Debug, Default)]
pub struct AblationReport {
    pub cells: Vec<AblationCell>,
}

impl AblationReport {
    pub const SUMMARY_HEADER: &'static str = "mode,seed,epochs,final_validation_relative,final_validation_bounded,first_stage_validation_relative,segment_translation_pct,segment_rotation_deg_per_m,rpe_translation_pct,rpe_rotation_deg";
    pub const CURVES_HEADER: &'static str = "mode,seed,epoch,stage,alpha,validation_relative";

    pub fn cell(&self, mode: AblationMode, seed: u64) -> Option<&AblationCell> {
        self.cells.iter().find(|c| c.mode == mode && c.seed == seed)
    }

    pub fn seeds(&self) -> Vec<u64> {
        let mut seeds: Vec<u64> = self.cells.iter().map(|c| c.seed).collect();
        seeds.dedup();
        seeds
    }

    /// One row per mode × seed with the final metrics.
    pub fn summary_csv(&self) -> String {
        let mut out = format!("{}\n", Self::SUMMARY_HEADER);
        for c in &self.cells {
            let f = c.final_stage();
            let m = f.held_out;
            out.push_str(&format!(
                "{},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}\n",
                c.mode,
                c.seed,
                c.log.epochs.len(),
                f.validation_relative,
                f.validation_bounded,
                c.first_stage().validation_relative,
                m.segment_translation_pct,
                m.segment_rotation_deg_per_m,
                m.rpe_translation_pct,
                m.rpe_rotation_deg
            ));
        }
        out
    }

    /// Per-stage translation/rotation table.
    pub fn stages_csv(&self) -> String {
        let mut out = format!("mode,seed,{}\n", RunLog::STAGES_HEADER);
        for c in &self.cells {
            for s in &c.log.stages {
                out.push_str(&format!("{},{},{}\n", c.mode, c.seed, stage_row(s)));
            }
        }
        out
    }

    /// Per-epoch relative validation loss for every cell.
    pub fn curves_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CURVES_HEADER);
        for c in &self.cells {
            for r in &c.log.epochs {
                out.push_str(&format!(
                    "{},{},{},{},{},{:e}\n",
                    c.mode, c.seed, r.epoch, r.stage, r.alpha, r.validation_relative
                ));
            }
        }
        out
    }
}

/// Runs every mode for every seed. Within a seed all modes share the data and
/// the initial parameters; only the objective schedule differs.
pub fn ablate(config: &RunConfig, modes: &[AblationMode], seeds: &[u64]) -> Result<AblationReport, TrainError> {
    if seeds.len() < 2 {
        return Err(TrainError::Config(vec![format!("ablate.seeds: need at least 2 seeds, got {}", seeds.len())]));
    }
    if modes.is_empty() {
        return Err(TrainError::Config(vec!["ablate.modes: need at least one mode".into()]));
    }
    let prepared: Vec<(RunConfig, PreparedData)> = seeds
        .iter()
        .map(|&s| {
            let c = seeded_config(config, s);
            let d = prepare_data(&c)?;
            Ok((c, d))
        })
        .collect::<Result<_, TrainError>>()?;
    let jobs: Vec<(usize, AblationMode)> = (0..seeds.len())
        .flat_map(|i| modes.iter().map(move |&m| (i, m)))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(i, mode)| {
            let (c, d) = &prepared[i];
            let out_dir = config
                .output_dir
                .as_ref()
                .map(|o| o.join("runs").join(format!("{mode}-seed{}", c.seed)));
            let outcome = train_prepared(c, d, &mode.schedule(&c.schedule), out_dir.as_deref())?;
            Ok(AblationCell {
                mode,
                seed: c.seed,
                log: outcome.log,
            })
        })
        .collect::<Result<Vec<_>, TrainError>>()?;
    let report = AblationReport { cells };
    if let Some(dir) = &config.output_dir {
        let sink = Sink { dir: Some(dir) };
        let mut manifest = config.to_key_values();
        manifest.set("run.version", crate::VERSION);
        manifest.set("run.seed", config.seed.to_string());
        manifest.set("run.command", "ablate");
        sink.write("manifest.txt", &manifest.render())?;
        sink.write("ablation.csv", &report.summary_csv())?;
        sink.write("ablation_stages.csv", &report.stages_csv())?;
        sink.write("ablation_curves.csv", &report.curves_csv())?;
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub alpha: f64,
    pub translation: f64,
    pub rotation: f64,
    pub translation_normalized: f64,
    pub rotation_normalized: f64,
}

/// Held-out errors of single-stage runs at each α.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepReport {
    pub seed: u64,
    pub points: Vec<SweepPoint>,
}

impl SweepReport {
    pub const HEADER: &'static str = "alpha,translation_pct,rotation_deg_per_m,translation_normalized,rotation_normalized";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::HEADER);
        for p in &self.points {
            out.push_str(&format!(
                "{},{:e},{:e},{:e},{:e}\n",
                p.alpha, p.translation, p.rotation, p.translation_normalized, p.rotation_normalized
            ));
        }
        out
    }

    /// α with the largest normalized translation error.
    pub fn worst_translation_alpha(&self) -> Option<f64> {
        self.points
            .iter()
            .max_by(|a, b| a.translation.total_cmp(&b.translation))
            .map(|p| p.alpha)
    }
}

/// Divides each value by the maximum; all-zero input stays zero.
pub fn normalize_by_max(values: &[f64]) -> Vec<f64> {
    let max = values.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        values.iter().map(|v| v / max).collect()
    } else {
        vec![0.0; values.len()]
    }
}

/// Trains one stage of exactly `epochs` epochs for each α and reports
/// held-out segment errors normalized by the maximum across the sweep.
pub fn alpha_sweep(config: &RunConfig, alphas: &[f64], epochs: usize) -> Result<SweepReport, TrainError> {
    if let Some(bad) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(TrainError::Config(vec![format!("sweep.alphas: {bad} outside [0, 1]")]));
    }
    if alphas.is_empty() || epochs == 0 {
        return Err(TrainError::Config(vec!["sweep: need at least one alpha and one epoch".into()]));
    }
    let data = prepare_data(config)?;
    let template = config.stage_template();
    let runs = alphas
        .par_iter()
        .map(|&alpha| {
            let stage = Stage {
                weights: template.weights.with_alpha(alpha),
                max_epochs: epochs,
                patience: epochs,
                ..template
            };
            let schedule = CurriculumSchedule::fixed(stage);
            let outcome = train_prepared(config, &data, &schedule, None)?;
            let m = *outcome.log.final_metrics().expect("one stage ran");
            Ok((m.segment_translation_pct, m.segment_rotation_deg_per_m))
        })
        .collect::<Result<Vec<_>, TrainError>>()?;
    let t: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let r: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let (tn, rn) = (normalize_by_max(&t), normalize_by_max(&r));
    let report = SweepReport {
        seed: config.seed,
        points: alphas
            .iter()
            .enumerate()
            .map(|(i, &alpha)| SweepPoint {
                alpha,
                translation: t[i],
                rotation: r[i],
                translation_normalized: tn[i],
                rotation_normalized: rn[i],
            })
            .collect(),
    };
    if let Some(dir) = &config.output_dir {
        let sink = Sink { dir: Some(dir) };
        let mut manifest = config.to_key_values();
        manifest.set("run.version", crate::VERSION);
        manifest.set("run.seed", config.seed.to_string());
        manifest.set("run.command", "alpha-sweep");
        sink.write("manifest.txt", &manifest.render())?;
        sink.write("sweep.csv", &report.to_csv())?;
    }
    Ok(report)
}

/// Manifest for commands that do not train.
pub fn manifest(command: &str, settings: &KeyValues) -> KeyValues {
    let mut kv = settings.clone();
    kv.set("run.version", crate::VERSION);
    kv.set("run.command", command);
    kv
}
