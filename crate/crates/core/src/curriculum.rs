//! Plateau-driven stage scheduler for the loss weights.
//!
//! A schedule is an ordered list of [`Stage`]s. Training stays in a stage
//! until the validation loss stops improving for `patience` epochs or the
//! stage's epoch cap is hit, then moves on to the next one.

use std::fmt;
use std::str::FromStr;

use crate::error::CurriculumError;
use crate::loss::LossWeights;

/// Default α per stage for the forward curriculum.
pub const DEFAULT_ALPHAS: [f64; 3] = [1.0, 0.5, 0.1];

const IMPROVEMENT_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stage {
    pub weights: LossWeights,
    pub max_epochs: usize,
    pub patience: usize,
    /// Minimum relative improvement that counts as progress.
    pub min_delta: f64,
}

impl Stage {
    pub fn new(weights: LossWeights) -> Self {
        Self {
            weights,
            max_epochs: 200,
            patience: 5,
            min_delta: 1e-4,
        }
    }

    fn validate(&self, index: usize) -> Result<(), CurriculumError> {
        let bad = |reason: String| Err(CurriculumError::InvalidStage { index, reason });
        if self.max_epochs == 0 {
            return bad("max-epochs must be at least 1".into());
        }
        if self.patience == 0 {
            return bad("patience must be at least 1".into());
        }
        if !(self.min_delta >= 0.0) {
            return bad("min-delta must be non-negative".into());
        }
        if let Err(e) = self.weights.validate() {
            return bad(e);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScheduleMode {
    Curriculum,
    AntiCurriculum,
    Fixed,
}

impl fmt::Display for ScheduleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Curriculum => "curriculum",
            Self::AntiCurriculum => "anti-curriculum",
            Self::Fixed => "fixed",
        })
    }
}

impl FromStr for ScheduleMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "curriculum" => Ok(Self::Curriculum),
            "anti-curriculum" | "anti" => Ok(Self::AntiCurriculum),
            "fixed" => Ok(Self::Fixed),
            other => Err(format!("unknown schedule mode `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurriculumSchedule {
    stages: Vec<Stage>,
    mode: ScheduleMode,
}

impl CurriculumSchedule {
    pub fn new(stages: Vec<Stage>, mode: ScheduleMode) -> Result<Self, CurriculumError> {
        if stages.is_empty() {
            return Err(CurriculumError::InvalidStage {
                index: 0,
                reason: "a schedule needs at least one stage".into(),
            });
        }
        for (i, s) in stages.iter().enumerate() {
            s.validate(i)?;
        }
        Ok(Self { stages, mode })
    }

    /// Stages with the given α values in order; other settings come from `template`.
    pub fn from_alphas(alphas: &[f64], template: Stage, mode: ScheduleMode) -> Result<Self, CurriculumError> {
        let stages = alphas
            .iter()
            .map(|&a| Stage {
                weights: template.weights.with_alpha(a),
                ..template
            })
            .collect();
        Self::new(stages, mode)
    }

    /// α = 1 → 0.5 → 0.1.
    pub fn curriculum(template: Stage) -> Self {
        Self::from_alphas(&DEFAULT_ALPHAS, template, ScheduleMode::Curriculum).expect("default stages are valid")
    }

    /// The curriculum's stages in reverse order.
    pub fn anti_curriculum(template: Stage) -> Self {
        Self::curriculum(template).reversed()
    }

    /// One stage with the template's weights.
    pub fn fixed(template: Stage) -> Self {
        Self::new(vec![template], ScheduleMode::Fixed).expect("template validated by caller")
    }

    pub fn reversed(&self) -> Self {
        let mode = match self.mode {
            ScheduleMode::Curriculum => ScheduleMode::AntiCurriculum,
            ScheduleMode::AntiCurriculum => ScheduleMode::Curriculum,
            ScheduleMode::Fixed => ScheduleMode::Fixed,
        };
        Self {
            stages: self.stages.iter().rev().copied().collect(),
            mode,
        }
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn mode(&self) -> ScheduleMode {
        self.mode
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.stages.iter().map(|s| s.weights.alpha).collect()
    }

    pub fn start(&self) -> StageProgress {
        StageProgress::default()
    }

    pub fn current_weights(&self, progress: &StageProgress) -> Result<LossWeights, CurriculumError> {
        self.stages
            .get(progress.stage)
            .map(|s| s.weights)
            .ok_or(CurriculumError::TrainingComplete)
    }

    /// Feeds one epoch's validation loss into the plateau rule.
    pub fn advance(&self, progress: &StageProgress, validation_loss: f64) -> (StageProgress, Transition) {
        let Some(stage) = self.stages.get(progress.stage) else {
            return (progress.clone(), Transition::None);
        };
        let mut next = progress.clone();
        next.epochs_in_stage += 1;
        let improved = match next.best {
            None => true,
            Some(best) => (best - validation_loss) / best.abs().max(IMPROVEMENT_EPS) > stage.min_delta,
        };
        if improved {
            next.best = Some(validation_loss);
            next.since_improvement = 0;
        } else {
            next.since_improvement += 1;
        }
        let reason = if next.since_improvement >= stage.patience {
            Some(TransitionReason::Plateau)
        } else if next.epochs_in_stage >= stage.max_epochs {
            Some(TransitionReason::EpochCap)
        } else {
            None
        };
        match reason {
            None => (next, Transition::None),
            Some(reason) => {
                let from = next.stage;
                let progress = StageProgress {
                    stage: from + 1,
                    ..StageProgress::default()
                };
                let transition = if progress.stage >= self.stages.len() {
                    Transition::Complete { from, reason }
                } else {
                    Transition::Next { from, reason }
                };
                (progress, transition)
            }
        }
    }

    pub fn is_complete(&self, progress: &StageProgress) -> bool {
        progress.stage >= self.stages.len()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StageProgress {
    pub stage: usize,
    pub epochs_in_stage: usize,
    pub best: Option<f64>,
    pub since_improvement: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransitionReason {
    Plateau,
    EpochCap,
}

impl fmt::Display for TransitionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Plateau => "plateau",
            Self::EpochCap => "epoch-cap",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transition {
    None,
    /// Moved from stage `from` to `from + 1`.
    Next { from: usize, reason: TransitionReason },
    /// Stage `from` was the last one.
    Complete { from: usize, reason: TransitionReason },
}

impl Transition {
    pub fn happened(&self) -> bool {
        !matches!(self, Self::None)
    }
}
