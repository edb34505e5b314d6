//! Dataset directories.
//!
//! ```text
//! <dir>/meta.txt          key = value record of the generation settings
//! <dir>/poses/NN.txt      ground-truth trajectory, KITTI format
//! <dir>/features/NN.csv   one feature row per relative step
//! ```

use std::path::Path;

use crate::error::{DataError, FormatError};
use crate::formats::{format_features, format_kitti, read_features, read_kitti, write_file, KeyValues};
use crate::synthdata::{generate, FeatureModel, MotionModel, OuParams, Sequence};

/// Everything needed to regenerate a synthetic dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct GenerationParams {
    pub preset: String,
    pub sequences: usize,
    pub length: usize,
    pub seed: u64,
    pub informative_dim: usize,
    pub nuisance_dim: usize,
    pub noise_sigma: f64,
}

impl GenerationParams {
    pub fn new(preset: &str, sequences: usize, length: usize, seed: u64) -> Self {
        Self {
            preset: preset.to_string(),
            sequences,
            length,
            seed,
            informative_dim: 12,
            nuisance_dim: 2,
            noise_sigma: 0.1,
        }
    }

    pub fn motion_model(&self) -> Result<MotionModel, DataError> {
        MotionModel::preset(&self.preset)
            .ok_or_else(|| DataError::InvalidModel(format!("unknown preset `{}`", self.preset)))
    }

    /// Typical per-step magnitude of each pose coordinate, used to scale the encoding.
    pub fn column_scale(&self) -> [f64; 6] {
        match self.preset.as_str() {
            "vehicle" => [1.0, 0.02, 0.02, 0.001, 0.001, 0.015],
            _ => [0.3, 0.01, 0.01, 0.015, 0.015, 0.06],
        }
    }

    pub fn feature_model(&self) -> Result<FeatureModel, DataError> {
        FeatureModel::seeded(
            self.informative_dim,
            self.column_scale(),
            self.noise_sigma,
            self.nuisance_dim,
            self.seed,
        )
    }

    /// Seed of sequence `index`; the held-out sequences of an experiment use
    /// indices past `sequences`.
    pub fn sequence_seed(&self, index: usize) -> u64 {
        self.seed.wrapping_mul(1_000_003).wrapping_add(index as u64)
    }

    pub fn generate_one(&self, index: usize) -> Result<Sequence, DataError> {
        generate(&self.motion_model()?, &self.feature_model()?, self.length, self.sequence_seed(index))
    }

    pub fn generate(&self) -> Result<Vec<Sequence>, DataError> {
        let motion = self.motion_model()?;
        let features = self.feature_model()?;
        (0..self.sequences)
            .map(|i| generate(&motion, &features, self.length, self.sequence_seed(i)))
            .collect()
    }

    pub fn to_key_values(&self, prefix: &str) -> KeyValues {
        let mut kv = KeyValues::default();
        let motion = self.motion_model().ok();
        kv.set(format!("{prefix}preset"), &self.preset);
        kv.set(format!("{prefix}sequences"), self.sequences.to_string());
        kv.set(format!("{prefix}length"), self.length.to_string());
        kv.set(format!("{prefix}seed"), self.seed.to_string());
        kv.set(format!("{prefix}informative_dim"), self.informative_dim.to_string());
        kv.set(format!("{prefix}nuisance_dim"), self.nuisance_dim.to_string());
        kv.set(format!("{prefix}noise_sigma"), self.noise_sigma.to_string());
        if let Some(m) = motion {
            let ou = |p: OuParams| format!("{},{},{}", p.mean, p.reversion, p.sigma);
            kv.set("motion.speed", ou(m.speed));
            kv.set("motion.yaw_rate", ou(m.yaw_rate));
            kv.set("motion.pitch_rate", ou(m.pitch_rate));
            kv.set("motion.roll_rate", ou(m.roll_rate));
            kv.set("motion.yaw_oscillation", format!("{},{}", m.yaw_oscillation.0, m.yaw_oscillation.1));
            kv.set("motion.timestep", m.timestep.to_string());
            kv.set("motion.pitch_margin", m.pitch_margin.to_string());
        }
        kv
    }
}

pub fn pose_path(dir: &Path, index: usize) -> std::path::PathBuf {
    dir.join("poses").join(format!("{index:02}.txt"))
}

pub fn feature_path(dir: &Path, index: usize) -> std::path::PathBuf {
    dir.join("features").join(format!("{index:02}.csv"))
}

/// Writes sequences and a metadata file under `dir`.
pub fn write_dataset(dir: &Path, sequences: &[Sequence], meta: &KeyValues) -> Result<(), FormatError> {
    let mut meta = meta.clone();
    meta.set("dataset.count", sequences.len().to_string());
    for (i, seq) in sequences.iter().enumerate() {
        write_file(&pose_path(dir, i), &format_kitti(&seq.trajectory))?;
        write_file(&feature_path(dir, i), &format_features(&seq.features))?;
        meta.set(format!("seeds.{i:02}"), seq.seed.to_string());
    }
    write_file(&dir.join("meta.txt"), &meta.render())
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("{path}: {source}")]
    Data {
        path: std::path::PathBuf,
        #[source]
        source: DataError,
    },
}

/// Loads every sequence listed in `<dir>/meta.txt`.
pub fn read_dataset(dir: &Path) -> Result<Vec<Sequence>, DatasetError> {
    let meta_path = dir.join("meta.txt");
    let meta = KeyValues::read(&meta_path)?;
    let count: usize = meta
        .get("dataset.count")
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| FormatError::parse(&meta_path, 0, "missing or invalid `count` in [dataset]"))?;
    (0..count)
        .map(|i| {
            let traj = read_kitti(&pose_path(dir, i))?;
            let fpath = feature_path(dir, i);
            let feats = read_features(&fpath)?;
            let seed = meta
                .get(&format!("seeds.{i:02}"))
                .and_then(|s| s.parse().ok())
                .unwrap_or(i as u64);
            Sequence::from_trajectory(traj, feats, seed).map_err(|source| DatasetError::Data { path: fpath, source })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let params = GenerationParams::new("walker", 2, 30, 4);
        let seqs = params.generate().unwrap();
        write_dataset(dir.path(), &seqs, &params.to_key_values("generator.")).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in back.iter().zip(&seqs) {
            assert_eq!(a.features, b.features);
            assert_eq!(a.seed, b.seed);
            for (x, y) in a.relatives.iter().zip(&b.relatives) {
                assert!((x - y).amax() < 1e-9);
            }
        }
    }

    #[test]
    fn unknown_preset() {
        assert!(GenerationParams::new("boat", 1, 10, 0).generate().is_err());
    }
}
