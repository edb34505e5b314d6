//! Run configuration and its `key = value` file form.
//!
//! Every key has a default; a config file only lists what it changes.
//! A `[run]` section (written into manifests) is ignored, so a manifest
//! can be fed back in as a config.
//! Parsing collects all problems before failing so one run of the tool
//! reports every offending key.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::curriculum::{CurriculumSchedule, ScheduleMode, Stage, DEFAULT_ALPHAS};
use crate::dataset::GenerationParams;
use crate::error::TrainError;
use crate::evaluation::{VEHICLE_SEGMENTS, WALKER_SEGMENTS};
use crate::formats::KeyValues;
use crate::loss::LossWeights;
use crate::trainer::AblationMode;

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Directory(PathBuf),
    Generate(GenerationParams),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSettings {
    pub lstm_sizes: Vec<usize>,
    pub head_hidden: Option<usize>,
    pub dropout: f64,
    pub forget_bias: f64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            lstm_sizes: vec![32, 32],
            head_hidden: None,
            dropout: 0.0,
            forget_bias: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplingConfig {
    /// Random sub-trajectories drawn from each training sequence per epoch.
    pub per_sequence: usize,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            per_sequence: 10,
            min_len: 10,
            max_len: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub alphas: Vec<f64>,
    pub epochs: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            alphas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            epochs: 30,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data: DataSource,
    pub model: ModelSettings,
    pub schedule: CurriculumSchedule,
    pub learning_rate: f64,
    /// Per-epoch multiplicative learning-rate decay; 1 keeps it constant.
    pub lr_decay: f64,
    pub sampling: SamplingConfig,
    pub validation_split: f64,
    /// Extra generated sequences, never trained on, for held-out metrics.
    pub held_out_sequences: usize,
    pub seed: u64,
    pub grad_clip: f64,
    /// Segment lengths for held-out evaluation, meters.
    pub segments: Vec<f64>,
    pub ablation_modes: Vec<AblationMode>,
    pub ablation_seeds: Vec<u64>,
    pub sweep: SweepConfig,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let stage = Stage {
            weights: LossWeights::default(),
            max_epochs: 30,
            patience: 5,
            min_delta: 1e-4,
        };
        Self {
            data: DataSource::Generate(GenerationParams::new("walker", 5, 200, 1)),
            model: ModelSettings::default(),
            schedule: CurriculumSchedule::curriculum(stage),
            learning_rate: 1e-3,
            lr_decay: 1.0,
            sampling: SamplingConfig::default(),
            validation_split: 0.2,
            held_out_sequences: 3,
            seed: 1,
            grad_clip: 5.0,
            segments: WALKER_SEGMENTS.to_vec(),
            ablation_modes: AblationMode::ALL.to_vec(),
            ablation_seeds: vec![1, 2],
            sweep: SweepConfig::default(),
            output_dir: None,
        }
    }
}

const KNOWN_KEYS: &[&str] = &[
    "data.dir",
    "data.preset",
    "data.sequences",
    "data.length",
    "data.seed",
    "data.noise_sigma",
    "data.informative_dim",
    "data.nuisance_dim",
    "data.held_out",
    "model.lstm_sizes",
    "model.head_hidden",
    "model.dropout",
    "model.forget_bias",
    "loss.delta",
    "loss.zeta",
    "loss.window",
    "curriculum.mode",
    "curriculum.alphas",
    "curriculum.max_epochs",
    "curriculum.patience",
    "curriculum.min_delta",
    "train.learning_rate",
    "train.lr_decay",
    "train.seed",
    "train.validation_split",
    "train.samples_per_sequence",
    "train.min_length",
    "train.max_length",
    "train.grad_clip",
    "eval.segments",
    "ablate.modes",
    "ablate.seeds",
    "sweep.alphas",
    "sweep.epochs",
    "output.dir",
];

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

struct Reader<'a> {
    kv: &'a KeyValues,
    errors: Vec<String>,
}

impl Reader<'_> {
    fn get<T: FromStr>(&mut self, key: &str, default: T) -> T
    where
        T::Err: std::fmt::Display,
    {
        match self.kv.get(key) {
            None => default,
            Some(raw) => match raw.parse::<T>() {
                Ok(v) => v,
                Err(e) => {
                    self.errors.push(format!("{key}: cannot parse `{raw}`: {e}"));
                    default
                }
            },
        }
    }

    fn list<T: FromStr>(&mut self, key: &str, default: Vec<T>) -> Vec<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.kv.get(key) {
            None => default,
            Some(raw) => {
                let parsed: Result<Vec<T>, String> = raw
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<T>().map_err(|e| format!("`{s}`: {e}")))
                    .collect();
                match parsed {
                    Ok(v) => v,
                    Err(e) => {
                        self.errors.push(format!("{key}: cannot parse {e}"));
                        default
                    }
                }
            }
        }
    }

    fn check(&mut self, ok: bool, key: &str, msg: &str) {
        if !ok {
            self.errors.push(format!("{key}: {msg}"));
        }
    }
}

impl RunConfig {
    /// Builds a config from parsed key/values; relative paths resolve against `base_dir`.
    pub fn from_key_values(kv: &KeyValues, base_dir: &Path) -> Result<Self, TrainError> {
        let d = RunConfig::default();
        let mut r = Reader { kv, errors: Vec::new() };
        for key in kv.keys() {
            if !KNOWN_KEYS.contains(&key) && !key.starts_with("run.") {
                r.errors.push(format!("{key}: unknown key"));
            }
        }

        let default_gen = match &d.data {
            DataSource::Generate(g) => g.clone(),
            DataSource::Directory(_) => unreachable!("default generates"),
        };
        let preset: String = r.get("data.preset", default_gen.preset.clone());
        r.check(
            preset == "walker" || preset == "vehicle",
            "data.preset",
            "must be `walker` or `vehicle`",
        );
        let gen = GenerationParams {
            preset: preset.clone(),
            sequences: r.get("data.sequences", default_gen.sequences),
            length: r.get("data.length", default_gen.length),
            seed: r.get("data.seed", default_gen.seed),
            informative_dim: r.get("data.informative_dim", default_gen.informative_dim),
            nuisance_dim: r.get("data.nuisance_dim", default_gen.nuisance_dim),
            noise_sigma: r.get("data.noise_sigma", default_gen.noise_sigma),
        };
        let data = match kv.get("data.dir") {
            Some(dir) => {
                let path = base_dir.join(dir);
                r.check(path.join("meta.txt").is_file(), "data.dir", &format!("no dataset at {}", path.display()));
                DataSource::Directory(path)
            }
            None => {
                r.check(gen.sequences >= 2, "data.sequences", "need at least 2 sequences");
                r.check(gen.length >= 2, "data.length", "must be at least 2");
                r.check(gen.informative_dim >= 6, "data.informative_dim", "must be at least 6");
                r.check(gen.noise_sigma >= 0.0, "data.noise_sigma", "must be non-negative");
                DataSource::Generate(gen)
            }
        };

        let held_out_sequences = r.get("data.held_out", d.held_out_sequences);
        r.check(held_out_sequences >= 1, "data.held_out", "must be at least 1");
        let head_hidden: usize = r.get("model.head_hidden", 0);
        let model = ModelSettings {
            lstm_sizes: r.list("model.lstm_sizes", d.model.lstm_sizes.clone()),
            head_hidden: (head_hidden > 0).then_some(head_hidden),
            dropout: r.get("model.dropout", d.model.dropout),
            forget_bias: r.get("model.forget_bias", d.model.forget_bias),
        };
        r.check(
            !model.lstm_sizes.is_empty() && !model.lstm_sizes.contains(&0),
            "model.lstm_sizes",
            "must be a non-empty list of positive sizes",
        );
        r.check((0.0..1.0).contains(&model.dropout), "model.dropout", "must be in [0, 1)");

        let template = d.schedule.stages()[0];
        let weights = LossWeights {
            alpha: 1.0,
            delta: r.get("loss.delta", template.weights.delta),
            zeta: r.get("loss.zeta", template.weights.zeta),
            window: r.get("loss.window", template.weights.window),
        };
        r.check(weights.delta >= 0.0, "loss.delta", "must be non-negative");
        r.check(weights.zeta >= 0.0, "loss.zeta", "must be non-negative");
        r.check(weights.window >= 1, "loss.window", "must be at least 1");
        let stage = Stage {
            weights,
            max_epochs: r.get("curriculum.max_epochs", template.max_epochs),
            patience: r.get("curriculum.patience", template.patience),
            min_delta: r.get("curriculum.min_delta", template.min_delta),
        };
        r.check(stage.max_epochs >= 1, "curriculum.max_epochs", "must be at least 1");
        r.check(stage.patience >= 1, "curriculum.patience", "must be at least 1");
        r.check(stage.min_delta >= 0.0, "curriculum.min_delta", "must be non-negative");
        let mode: ScheduleMode = r.get("curriculum.mode", ScheduleMode::Curriculum);
        let alphas: Vec<f64> = r.list("curriculum.alphas", DEFAULT_ALPHAS.to_vec());
        r.check(!alphas.is_empty(), "curriculum.alphas", "needs at least one value");
        r.check(
            alphas.iter().all(|a| (0.0..=1.0).contains(a)),
            "curriculum.alphas",
            "values must lie in [0, 1]",
        );
        r.check(
            mode != ScheduleMode::Fixed || alphas.windows(2).all(|w| w[0] == w[1]),
            "curriculum.alphas",
            "fixed mode takes one alpha (optionally repeated, one entry per stage)",
        );

        let sampling = SamplingConfig {
            per_sequence: r.get("train.samples_per_sequence", d.sampling.per_sequence),
            min_len: r.get("train.min_length", d.sampling.min_len),
            max_len: r.get("train.max_length", d.sampling.max_len),
        };
        r.check(sampling.per_sequence >= 1, "train.samples_per_sequence", "must be at least 1");
        r.check(
            sampling.min_len >= 1 && sampling.min_len <= sampling.max_len,
            "train.min_length",
            "must be between 1 and train.max_length",
        );
        if let DataSource::Generate(g) = &data {
            r.check(sampling.max_len <= g.length, "train.max_length", "exceeds data.length");
        }
        let learning_rate = r.get("train.learning_rate", d.learning_rate);
        r.check(learning_rate > 0.0, "train.learning_rate", "must be positive");
        let lr_decay = r.get("train.lr_decay", d.lr_decay);
        r.check(lr_decay > 0.0 && lr_decay <= 1.0, "train.lr_decay", "must lie in (0, 1]");
        let validation_split = r.get("train.validation_split", d.validation_split);
        r.check(
            validation_split > 0.0 && validation_split < 1.0,
            "train.validation_split",
            "must lie in (0, 1)",
        );
        let grad_clip = r.get("train.grad_clip", d.grad_clip);
        r.check(grad_clip > 0.0, "train.grad_clip", "must be positive");

        let default_segments = if preset == "vehicle" {
            VEHICLE_SEGMENTS.to_vec()
        } else {
            WALKER_SEGMENTS.to_vec()
        };
        let segments: Vec<f64> = r.list("eval.segments", default_segments);
        r.check(
            !segments.is_empty() && segments.iter().all(|s| *s > 0.0),
            "eval.segments",
            "must be a non-empty list of positive lengths",
        );

        let ablation_modes = r.list("ablate.modes", d.ablation_modes.clone());
        let ablation_seeds = r.list("ablate.seeds", d.ablation_seeds.clone());
        let sweep = SweepConfig {
            alphas: r.list("sweep.alphas", d.sweep.alphas.clone()),
            epochs: r.get("sweep.epochs", d.sweep.epochs),
        };
        r.check(
            sweep.alphas.iter().all(|a| (0.0..=1.0).contains(a)),
            "sweep.alphas",
            "values must lie in [0, 1]",
        );
        r.check(sweep.epochs >= 1, "sweep.epochs", "must be at least 1");

        let output_dir = kv.get("output.dir").map(|p| base_dir.join(p));
        let seed = r.get("train.seed", d.seed);

        if !r.errors.is_empty() {
            return Err(TrainError::Config(r.errors));
        }
        let schedule = CurriculumSchedule::from_alphas(&alphas, stage, mode)?;
        Ok(Self {
            data,
            model,
            schedule,
            learning_rate,
            lr_decay,
            sampling,
            validation_split,
            held_out_sequences,
            seed,
            grad_clip,
            segments,
            ablation_modes,
            ablation_seeds,
            sweep,
            output_dir,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, TrainError> {
        let kv = KeyValues::read(path)?;
        Self::from_key_values(&kv, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn parse(text: &str) -> Result<Self, TrainError> {
        let kv = KeyValues::parse(text, Path::new("<config>"))?;
        Self::from_key_values(&kv, Path::new("."))
    }

    /// Stage settings shared by all stages (α taken from the first stage).
    pub fn stage_template(&self) -> Stage {
        self.schedule.stages()[0]
    }

    /// Fully resolved config in file form, suitable for a manifest.
    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = match &self.data {
            DataSource::Generate(g) => {
                let mut kv = KeyValues::default();
                kv.set("data.preset", &g.preset);
                kv.set("data.sequences", g.sequences.to_string());
                kv.set("data.length", g.length.to_string());
                kv.set("data.seed", g.seed.to_string());
                kv.set("data.noise_sigma", g.noise_sigma.to_string());
                kv.set("data.informative_dim", g.informative_dim.to_string());
                kv.set("data.nuisance_dim", g.nuisance_dim.to_string());
                kv.set("data.held_out", self.held_out_sequences.to_string());
                kv
            }
            DataSource::Directory(p) => {
                let mut kv = KeyValues::default();
                kv.set("data.dir", p.display().to_string());
                kv
            }
        };
        kv.set("model.lstm_sizes", join(&self.model.lstm_sizes));
        kv.set("model.head_hidden", self.model.head_hidden.unwrap_or(0).to_string());
        kv.set("model.dropout", self.model.dropout.to_string());
        kv.set("model.forget_bias", self.model.forget_bias.to_string());
        let st = self.stage_template();
        kv.set("loss.delta", st.weights.delta.to_string());
        kv.set("loss.zeta", st.weights.zeta.to_string());
        kv.set("loss.window", st.weights.window.to_string());
        kv.set("curriculum.mode", self.schedule.mode().to_string());
        kv.set("curriculum.alphas", join(&self.schedule.alphas()));
        kv.set("curriculum.max_epochs", st.max_epochs.to_string());
        kv.set("curriculum.patience", st.patience.to_string());
        kv.set("curriculum.min_delta", st.min_delta.to_string());
        kv.set("train.learning_rate", self.learning_rate.to_string());
        kv.set("train.lr_decay", self.lr_decay.to_string());
        kv.set("train.seed", self.seed.to_string());
        kv.set("train.validation_split", self.validation_split.to_string());
        kv.set("train.samples_per_sequence", self.sampling.per_sequence.to_string());
        kv.set("train.min_length", self.sampling.min_len.to_string());
        kv.set("train.max_length", self.sampling.max_len.to_string());
        kv.set("train.grad_clip", self.grad_clip.to_string());
        kv.set("eval.segments", join(&self.segments));
        kv.set("ablate.modes", join(&self.ablation_modes));
        kv.set("ablate.seeds", join(&self.ablation_seeds));
        kv.set("sweep.alphas", join(&self.sweep.alphas));
        kv.set("sweep.epochs", self.sweep.epochs.to_string());
        if let Some(out) = &self.output_dir {
            kv.set("output.dir", out.display().to_string());
        }
        kv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_from_empty_file() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c.schedule.alphas(), vec![1.0, 0.5, 0.1]);
        assert_eq!(c.learning_rate, 1e-3);
        assert_eq!(c.sampling.per_sequence, 10);
        assert_eq!(c.stage_template().weights.zeta, 100.0);
    }

    #[test]
    fn every_bad_key_is_reported() {
        let err = RunConfig::parse("[train]\nlearning_rate = -1\nvalidation_split = 2\n[model]\nlstm_sizes = a,b\nbogus = 1\n")
            .unwrap_err();
        let TrainError::Config(errors) = err else { panic!("expected config error") };
        let text = errors.join("\n");
        for key in ["train.learning_rate", "train.validation_split", "model.lstm_sizes", "model.bogus"] {
            assert!(text.contains(key), "{key} missing from {text}");
        }
    }

    #[test]
    fn missing_dataset_names_the_key() {
        let err = RunConfig::parse("[data]\ndir = /definitely/not/here\n").unwrap_err();
        assert!(err.to_string().contains("data.dir"), "{err}");
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = RunConfig::parse("[curriculum]\nmode = anti-curriculum\nalphas = 0.1,0.5,1\n[model]\nlstm_sizes = 8\n").unwrap();
        let again = RunConfig::from_key_values(&c.to_key_values(), Path::new(".")).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.schedule.mode(), ScheduleMode::AntiCurriculum);
    }

    #[test]
    fn fixed_mode_needs_one_distinct_alpha() {
        assert!(RunConfig::parse("[curriculum]\nmode = fixed\n").is_err());
        let c = RunConfig::parse("[curriculum]\nmode = fixed\nalphas = 0.5\n").unwrap();
        assert_eq!(c.schedule.stages().len(), 1);
        let c = RunConfig::parse("[curriculum]\nmode = fixed\nalphas = 0.5,0.5\n[run]\nversion = 0.1.0\n").unwrap();
        assert_eq!(c.schedule.alphas(), vec![0.5, 0.5]);
    }
}
