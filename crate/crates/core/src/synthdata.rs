//! Synthetic pose sequences with per-step feature vectors.
//!
//! Motion follows Ornstein-Uhlenbeck processes on forward speed and on the
//! roll/pitch/yaw rates. Features are a fixed linear encoding of each
//! relative 6-DoF motion plus Gaussian noise, optionally padded with pure
//! noise channels.

use nalgebra::{DMatrix, DVector, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::DataError;
use crate::geometry::{accumulate, euler_to_pose, relative_between, Pose, Trajectory};

const NOISE_STREAM: u64 = 0x6e6f697365;
const ENCODING_STREAM: u64 = 0x656e63;

/// Parameters of one OU process `dx = θ(μ - x)dt + σ dW`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OuParams {
    pub mean: f64,
    pub reversion: f64,
    pub sigma: f64,
}

impl OuParams {
    pub const fn new(mean: f64, reversion: f64, sigma: f64) -> Self {
        Self { mean, reversion, sigma }
    }

    /// Exact one-step transition from `x` with mean `mean` over `dt`.
    fn step<R: Rng + ?Sized>(&self, x: f64, mean: f64, dt: f64, rng: &mut R) -> f64 {
        let decay = (-self.reversion * dt).exp();
        let sd = if self.reversion > 0.0 {
            self.sigma * ((1.0 - decay * decay) / (2.0 * self.reversion)).sqrt()
        } else {
            self.sigma * dt.sqrt()
        };
        let z: f64 = if sd > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
        mean + (x - mean) * decay + sd * z
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MotionModel {
    /// Forward speed in m/s.
    pub speed: OuParams,
    /// Yaw rate in rad/s.
    pub yaw_rate: OuParams,
    pub pitch_rate: OuParams,
    pub roll_rate: OuParams,
    /// Sinusoidal swing `(amplitude rad/s, frequency Hz)` added to the yaw-rate mean.
    pub yaw_oscillation: (f64, f64),
    pub timestep: f64,
    /// Absolute pitch stays within `±(π/2 - pitch_margin)`.
    pub pitch_margin: f64,
    /// Starting forward speed; `None` starts at the process mean.
    pub initial_speed: Option<f64>,
}

impl MotionModel {
    /// Car-like motion: ~10 m/s, gentle turns.
    pub fn vehicle() -> Self {
        Self {
            speed: OuParams::new(10.0, 0.5, 1.0),
            yaw_rate: OuParams::new(0.0, 1.0, 0.15),
            pitch_rate: OuParams::new(0.0, 2.0, 0.01),
            roll_rate: OuParams::new(0.0, 2.0, 0.01),
            yaw_oscillation: (0.0, 0.0),
            timestep: 0.1,
            pitch_margin: 0.2,
            initial_speed: None,
        }
    }

    /// Handheld walking motion: ~1.4 m/s with a sweeping yaw.
    pub fn walker() -> Self {
        Self {
            speed: OuParams::new(1.4, 1.0, 0.3),
            yaw_rate: OuParams::new(0.0, 2.0, 0.4),
            pitch_rate: OuParams::new(0.0, 3.0, 0.08),
            roll_rate: OuParams::new(0.0, 3.0, 0.08),
            yaw_oscillation: (0.8, 0.4),
            timestep: 0.2,
            pitch_margin: 0.2,
            initial_speed: None,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "vehicle" => Some(Self::vehicle()),
            "walker" => Some(Self::walker()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if !(self.timestep > 0.0) {
            return Err(DataError::InvalidModel("timestep must be positive".into()));
        }
        if !(self.pitch_margin >= 0.1) {
            return Err(DataError::InvalidModel("pitch margin must be at least 0.1 rad".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureModel {
    /// `informative_dim × 6` linear map from relative motion to features.
    pub encoding: DMatrix<f64>,
    pub noise_sigma: f64,
    /// Pure-noise channels appended after the informative ones.
    pub nuisance_dim: usize,
}

impl FeatureModel {
    /// Gaussian encoding with each pose column divided by `column_scale`, so
    /// typical motions map to unit-scale features.
    pub fn seeded(
        informative_dim: usize,
        column_scale: [f64; 6],
        noise_sigma: f64,
        nuisance_dim: usize,
        seed: u64,
    ) -> Result<Self, DataError> {
        if informative_dim < 6 {
            return Err(DataError::InvalidModel(format!(
                "need at least 6 informative features, got {informative_dim}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(ENCODING_STREAM);
        let norm = (informative_dim as f64).sqrt();
        let encoding = DMatrix::from_fn(informative_dim, 6, |_, c| {
            let z: f64 = rng.sample(StandardNormal);
            z / (norm * column_scale[c]) * 2.0
        });
        let model = Self {
            encoding,
            noise_sigma,
            nuisance_dim,
        };
        model.validate()?;
        Ok(model)
    }

    /// `[I₆; 0]`, so noise-free features equal the relatives.
    pub fn identity(informative_dim: usize) -> Self {
        Self {
            encoding: DMatrix::from_fn(informative_dim.max(6), 6, |r, c| if r == c { 1.0 } else { 0.0 }),
            noise_sigma: 0.0,
            nuisance_dim: 0,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.encoding.nrows() + self.nuisance_dim
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.encoding.ncols() != 6 {
            return Err(DataError::InvalidModel("encoding must have 6 columns".into()));
        }
        let sv = self.encoding.clone().singular_values();
        let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
        if sv.len() < 6 || !(min > 1e-9 * sv.max()) {
            return Err(DataError::InvalidModel("encoding is rank deficient".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(DataError::InvalidModel("noise sigma must be non-negative".into()));
        }
        Ok(())
    }

    fn encode<R: Rng + ?Sized>(&self, relative: &Vector6<f64>, rng: &mut R) -> DVector<f64> {
        let clean = &self.encoding * DVector::from_column_slice(relative.as_slice());
        let mut out = DVector::zeros(self.feature_dim());
        for (i, x) in clean.iter().enumerate() {
            let n: f64 = if self.noise_sigma > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
            out[i] = x + self.noise_sigma * n;
        }
        for i in clean.len()..out.len() {
            let n: f64 = rng.sample(StandardNormal);
            out[i] = self.noise_sigma.max(1.0) * n;
        }
        out
    }
}

/// One synthetic sequence. `trajectory` has one more pose than there are relatives.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub trajectory: Trajectory,
    /// Per-step relative motions as `(t, r)` rows, `T × 6`.
    pub relatives: Vec<Vector6<f64>>,
    /// `T × feature_dim`.
    pub features: DMatrix<f64>,
    pub seed: u64,
}

impl Sequence {
    /// Builds a sequence from absolute poses and per-step features.
    pub fn from_trajectory(trajectory: Trajectory, features: DMatrix<f64>, seed: u64) -> Result<Self, DataError> {
        let relatives = trajectory
            .relatives()
            .iter()
            .map(|p| p.to_vector6())
            .collect::<Result<Vec<_>, _>>()?;
        if relatives.len() != features.nrows() {
            return Err(DataError::InvalidRange(format!(
                "{} relatives but {} feature rows",
                relatives.len(),
                features.nrows()
            )));
        }
        Ok(Self {
            trajectory,
            relatives,
            features,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.relatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relatives.is_empty()
    }

    /// Largest deviation between the stored trajectory and the accumulated relatives.
    pub fn consistency_error(&self) -> f64 {
        let rels: Vec<Pose> = self.relatives.iter().map(Pose::from_vector6).collect();
        let acc = accumulate(&rels, self.trajectory.poses()[0]);
        acc.poses()
            .iter()
            .zip(self.trajectory.poses())
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }

    /// Contiguous slice `[start, start + len)` of relative steps, re-anchored at identity.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self, DataError> {
        if len == 0 || start + len > self.len() {
            return Err(DataError::InvalidRange(format!(
                "slice {start}..{} of a {}-step sequence",
                start + len,
                self.len()
            )));
        }
        let poses = self.trajectory.poses()[start..=start + len].to_vec();
        let trajectory = Trajectory::new(poses)?.reanchored();
        Ok(Self {
            trajectory,
            relatives: self.relatives[start..start + len].to_vec(),
            features: self.features.rows(start, len).into_owned(),
            seed: self.seed,
        })
    }
}

/// Generates a `length`-step sequence (so `length + 1` poses).
pub fn generate(model: &MotionModel, features: &FeatureModel, length: usize, seed: u64) -> Result<Sequence, DataError> {
    model.validate()?;
    features.validate()?;
    if length < 2 {
        return Err(DataError::InvalidRange(format!("length must be at least 2, got {length}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
    noise_rng.set_stream(NOISE_STREAM);

    let dt = model.timestep;
    let pitch_limit = std::f64::consts::FRAC_PI_2 - model.pitch_margin;
    let mut speed = model.initial_speed.unwrap_or(model.speed.mean);
    let (mut yaw_rate, mut pitch_rate, mut roll_rate) = (0.0, 0.0, 0.0);
    let mut attitude = Vector3::<f64>::zeros(); // roll, pitch, yaw
    let mut position = Vector3::<f64>::zeros();
    let mut poses = Vec::with_capacity(length + 1);
    poses.push(euler_to_pose(&position, &attitude));
    let (amp, freq) = model.yaw_oscillation;

    for k in 0..length {
        let time = k as f64 * dt;
        let heading = poses[k].rotation_matrix();
        position += heading * Vector3::new(speed * dt, 0.0, 0.0);
        attitude.x += roll_rate * dt;
        attitude.y = (attitude.y + pitch_rate * dt).clamp(-pitch_limit, pitch_limit);
        attitude.z += yaw_rate * dt;
        poses.push(euler_to_pose(&position, &attitude));

        let yaw_mean = model.yaw_rate.mean + amp * (2.0 * std::f64::consts::PI * freq * time).sin();
        speed = model.speed.step(speed, model.speed.mean, dt, &mut rng);
        yaw_rate = model.yaw_rate.step(yaw_rate, yaw_mean, dt, &mut rng);
        pitch_rate = model.pitch_rate.step(pitch_rate, model.pitch_rate.mean, dt, &mut rng);
        roll_rate = model.roll_rate.step(roll_rate, model.roll_rate.mean, dt, &mut rng);
    }

    let trajectory = Trajectory::new(poses)?;
    let relatives = trajectory
        .poses()
        .windows(2)
        .map(|w| relative_between(&w[0], &w[1]).to_vector6())
        .collect::<Result<Vec<_>, _>>()?;
    let mut feats = DMatrix::zeros(length, features.feature_dim());
    for (t, rel) in relatives.iter().enumerate() {
        let row = features.encode(rel, &mut noise_rng);
        feats.row_mut(t).copy_from(&row.transpose());
    }
    Ok(Sequence {
        trajectory,
        relatives,
        features: feats,
        seed,
    })
}

/// Draws `count` random contiguous sub-sequences with lengths in `[min_len, max_len]`.
pub fn sample_subsequences(
    seq: &Sequence,
    count: usize,
    min_len: usize,
    max_len: usize,
    seed: u64,
) -> Result<Vec<Sequence>, DataError> {
    if min_len == 0 || min_len > max_len || max_len > seq.len() {
        return Err(DataError::InvalidRange(format!(
            "lengths {min_len}..={max_len} for a {}-step sequence",
            seq.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let len = rng.random_range(min_len..=max_len);
            let start = rng.random_range(0..=seq.len() - len);
            seq.slice(start, len)
        })
        .collect()
}

/// Per-dimension feature statistics of a training set.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStats {
    pub mean: DVector<f64>,
    pub std: DVector<f64>,
}

impl FeatureStats {
    pub fn compute(dataset: &[Sequence]) -> Result<Self, DataError> {
        let first = dataset.first().ok_or(DataError::EmptyDataset)?;
        let dim = first.features.ncols();
        let rows: usize = dataset.iter().map(|s| s.features.nrows()).sum();
        if rows == 0 {
            return Err(DataError::EmptyDataset);
        }
        let mut mean = DVector::zeros(dim);
        for s in dataset {
            for row in s.features.row_iter() {
                mean += row.transpose();
            }
        }
        mean /= rows as f64;
        let mut var = DVector::zeros(dim);
        for s in dataset {
            for row in s.features.row_iter() {
                let d = row.transpose() - &mean;
                var += d.component_mul(&d);
            }
        }
        var /= rows as f64;
        Ok(Self {
            mean,
            std: var.map(f64::sqrt),
        })
    }

    /// Subtracts the stored mean from every feature row.
    pub fn apply(&self, seq: &Sequence) -> Sequence {
        let mut out = seq.clone();
        for mut row in out.features.row_iter_mut() {
            row -= self.mean.transpose();
        }
        out
    }
}

/// Centers every feature dimension on the dataset mean.
pub fn normalize_features(dataset: &[Sequence]) -> Result<(Vec<Sequence>, FeatureStats), DataError> {
    let stats = FeatureStats::compute(dataset)?;
    Ok((dataset.iter().map(|s| stats.apply(s)).collect(), stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn walker_features(seed: u64, noise: f64, nuisance: usize) -> FeatureModel {
        FeatureModel::seeded(12, [0.3, 0.05, 0.05, 0.02, 0.02, 0.1], noise, nuisance, seed).unwrap()
    }

    #[test]
    fn identity_features_equal_relatives() {
        let seq = generate(&MotionModel::walker(), &FeatureModel::identity(6), 50, 3).unwrap();
        for (t, rel) in seq.relatives.iter().enumerate() {
            for i in 0..6 {
                assert_eq!(seq.features[(t, i)], rel[i]);
            }
        }
    }

    #[test]
    fn same_seed_same_sequence_different_seed_differs() {
        let fm = walker_features(1, 0.1, 2);
        let a = generate(&MotionModel::walker(), &fm, 40, 9).unwrap();
        let b = generate(&MotionModel::walker(), &fm, 40, 9).unwrap();
        assert_eq!(a, b);
        let c = generate(&MotionModel::walker(), &fm, 40, 10).unwrap();
        assert_ne!(a.relatives, c.relatives);
        assert_ne!(a.features, c.features);
    }

    #[test]
    fn zero_noise_constant_speed_is_a_straight_line() {
        let mut m = MotionModel::vehicle();
        for p in [&mut m.speed, &mut m.yaw_rate, &mut m.pitch_rate, &mut m.roll_rate] {
            p.sigma = 0.0;
        }
        m.initial_speed = Some(7.0);
        m.speed.mean = 7.0;
        let seq = generate(&m, &FeatureModel::identity(6), 30, 1).unwrap();
        for rel in &seq.relatives {
            let expected = Vector6::new(7.0 * m.timestep, 0.0, 0.0, 0.0, 0.0, 0.0);
            assert!((rel - expected).amax() < 1e-12);
        }
        assert!((seq.trajectory.last().translation() - Vector3::new(7.0 * 0.1 * 30.0, 0.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn sequences_are_self_consistent() {
        for preset in ["vehicle", "walker"] {
            let seq = generate(&MotionModel::preset(preset).unwrap(), &walker_features(2, 0.05, 1), 300, 5).unwrap();
            assert!(seq.consistency_error() < 1e-9, "{preset}: {}", seq.consistency_error());
            for sub in sample_subsequences(&seq, 10, 5, 40, 8).unwrap() {
                assert!(sub.consistency_error() < 1e-9);
                assert!(sub.trajectory.poses()[0].max_abs_diff(&Pose::identity()) < 1e-12);
            }
        }
    }

    #[test]
    fn full_length_sample_is_reanchored_copy() {
        let seq = generate(&MotionModel::walker(), &walker_features(2, 0.05, 0), 30, 5).unwrap();
        let subs = sample_subsequences(&seq, 1, 30, 30, 0).unwrap();
        assert_eq!(subs.len(), 1);
        assert_eq!(subs[0].relatives, seq.relatives);
        assert_eq!(subs[0].features, seq.features);
        assert!(subs[0].trajectory.poses()[0].max_abs_diff(&Pose::identity()) < 1e-15);
    }

    #[test]
    fn sample_ranges_are_validated() {
        let seq = generate(&MotionModel::walker(), &walker_features(2, 0.05, 0), 30, 5).unwrap();
        assert!(sample_subsequences(&seq, 1, 10, 31, 0).is_err());
        assert!(sample_subsequences(&seq, 1, 11, 10, 0).is_err());
        assert!(sample_subsequences(&seq, 1, 0, 10, 0).is_err());
    }

    #[test]
    fn noise_free_features_decode_exactly() {
        let fm = walker_features(4, 0.0, 0);
        let seq = generate(&MotionModel::walker(), &fm, 100, 2).unwrap();
        let svd = fm.encoding.clone().svd(true, true);
        for (t, rel) in seq.relatives.iter().enumerate() {
            let f = seq.features.row(t).transpose();
            let decoded = svd.solve(&f, 1e-12).unwrap();
            for i in 0..6 {
                assert!((decoded[i] - rel[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rank_deficient_encoding_rejected() {
        let fm = FeatureModel {
            encoding: DMatrix::zeros(8, 6),
            noise_sigma: 0.0,
            nuisance_dim: 0,
        };
        assert!(fm.validate().is_err());
    }

    #[test]
    fn normalization() {
        let fm = walker_features(1, 0.1, 1);
        let data: Vec<Sequence> = (0..3)
            .map(|s| generate(&MotionModel::walker(), &fm, 50, s).unwrap())
            .collect();
        let (norm, stats) = normalize_features(&data).unwrap();
        let again = FeatureStats::compute(&norm).unwrap();
        assert!(again.mean.amax() < 1e-9);
        assert_eq!(stats.apply(&data[1]), norm[1]);

        // constant channel becomes zero; zero-mean data unchanged
        let mut flat = norm.clone();
        for s in flat.iter_mut() {
            s.features.column_mut(0).fill(3.5);
        }
        let (flat_norm, _) = normalize_features(&flat).unwrap();
        assert!(flat_norm.iter().all(|s| s.features.column(0).iter().all(|x| *x == 0.0)));
        for (a, b) in flat_norm.iter().zip(&flat) {
            assert!((a.features.columns(1, a.features.ncols() - 1) - b.features.columns(1, b.features.ncols() - 1)).amax() < 1e-12);
        }
        assert!(normalize_features(&[]).is_err());
    }

    #[test]
    fn walker_turns_more_than_vehicle() {
        let fm = walker_features(1, 0.0, 0);
        let mean_yaw_rate = |m: &MotionModel| {
            let seq = generate(m, &fm, 400, 3).unwrap();
            seq.relatives.iter().map(|r| r[5].abs()).sum::<f64>() / (seq.len() as f64 * m.timestep)
        };
        assert!(mean_yaw_rate(&MotionModel::walker()) > mean_yaw_rate(&MotionModel::vehicle()));
    }
}
