//! Python bindings: poses, synthetic data, metrics, loss evaluation and training.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::{Quaternion, Vector3, Vector6};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use gacl::autodiff::Matrix;
use gacl::config::RunConfig;
use gacl::dataset::GenerationParams;
use gacl::formats::KeyValues;
use gacl::geometry::{self, Trajectory};
use gacl::loss::{sequence_loss_value, LossWeights};
use gacl::{evaluation, trainer};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Rigid transform with a unit quaternion `(w, x, y, z)`, `w >= 0`.
#[pyclass(from_py_object, name = "Pose", module = "pygacl")]
#[derive(Clone)]
pub struct PyPose {
    inner: geometry::Pose,
}

#[pymethods]
impl PyPose {
    #[new]
    #[pyo3(signature = (translation=[0.0, 0.0, 0.0], quaternion=[1.0, 0.0, 0.0, 0.0]))]
    fn new(translation: [f64; 3], quaternion: [f64; 4]) -> PyResult<Self> {
        let q = Quaternion::new(quaternion[0], quaternion[1], quaternion[2], quaternion[3]);
        if !(q.norm() > 1e-12) {
            return Err(value_err("quaternion must be non-zero"));
        }
        Ok(Self {
            inner: geometry::Pose::new(Vector3::from(translation), q),
        })
    }

    /// Pose from translation and XYZ Euler angles (`R = Rz Ry Rx`).
    #[staticmethod]
    fn from_euler(translation: [f64; 3], euler: [f64; 3]) -> Self {
        Self {
            inner: geometry::euler_to_pose(&Vector3::from(translation), &Vector3::from(euler)),
        }
    }

    #[getter]
    fn translation(&self) -> [f64; 3] {
        self.inner.translation().into()
    }

    #[getter]
    fn quaternion(&self) -> [f64; 4] {
        let q = self.inner.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    /// `(translation, euler)`; raises ValueError at gimbal lock.
    fn to_euler(&self) -> PyResult<([f64; 3], [f64; 3])> {
        let (t, r) = geometry::pose_to_euler(&self.inner).map_err(value_err)?;
        Ok((t.into(), r.into()))
    }

    /// 4x4 homogeneous matrix as nested lists.
    fn matrix(&self) -> Vec<Vec<f64>> {
        let m = self.inner.to_matrix();
        (0..4).map(|r| (0..4).map(|c| m[(r, c)]).collect()).collect()
    }

    /// `self * other`.
    fn compose(&self, other: &PyPose) -> Self {
        Self {
            inner: geometry::compose(&self.inner, &other.inner),
        }
    }

    fn inverse(&self) -> Self {
        Self {
            inner: geometry::inverse(&self.inner),
        }
    }

    /// Motion from `self` to `other`, `inverse(self) * other`.
    fn relative_to(&self, other: &PyPose) -> Self {
        Self {
            inner: geometry::relative_between(&self.inner, &other.inner),
        }
    }

    fn __mul__(&self, other: &PyPose) -> Self {
        self.compose(other)
    }

    fn __repr__(&self) -> String {
        let t = self.translation();
        let q = self.quaternion();
        format!(
            "Pose(translation=[{}, {}, {}], quaternion=[{}, {}, {}, {}])",
            t[0], t[1], t[2], q[0], q[1], q[2], q[3]
        )
    }
}

fn trajectory(poses: &[PyPose]) -> PyResult<Trajectory> {
    Trajectory::new(poses.iter().map(|p| p.inner).collect()).map_err(value_err)
}

/// Chains relative poses starting from identity; returns `len(relatives) + 1` poses.
#[pyfunction]
fn accumulate(relatives: Vec<PyPose>) -> Vec<PyPose> {
    let rels: Vec<_> = relatives.iter().map(|p| p.inner).collect();
    geometry::accumulate(&rels, geometry::Pose::identity())
        .poses()
        .iter()
        .map(|p| PyPose { inner: *p })
        .collect()
}

/// One synthetic sequence.
#[pyclass(name = "Sequence", module = "pygacl")]
pub struct PySequence {
    #[pyo3(get)]
    poses: Vec<PyPose>,
    /// Per-step `(t, r)` rows.
    #[pyo3(get)]
    relatives: Vec<[f64; 6]>,
    #[pyo3(get)]
    features: Vec<Vec<f64>>,
    #[pyo3(get)]
    seed: u64,
}

/// Generates `sequences` synthetic sequences of `length` steps.
#[pyfunction]
#[pyo3(signature = (preset="walker", sequences=1, length=200, seed=0, noise_sigma=None))]
fn generate(preset: &str, sequences: usize, length: usize, seed: u64, noise_sigma: Option<f64>) -> PyResult<Vec<PySequence>> {
    let mut params = GenerationParams::new(preset, sequences, length, seed);
    if let Some(n) = noise_sigma {
        params.noise_sigma = n;
    }
    let seqs = params.generate().map_err(value_err)?;
    Ok(seqs
        .into_iter()
        .map(|s| PySequence {
            poses: s.trajectory.poses().iter().map(|p| PyPose { inner: *p }).collect(),
            relatives: s.relatives.iter().map(|v| (*v).into()).collect(),
            features: s.features.row_iter().map(|r| r.iter().copied().collect()).collect(),
            seed: s.seed,
        })
        .collect())
}

/// Per-length `{length, segments, translation_pct, rotation_deg_per_m}`.
#[pyfunction]
fn segment_errors(gt: Vec<PyPose>, est: Vec<PyPose>, lengths: Vec<f64>) -> PyResult<Vec<BTreeMap<String, f64>>> {
    let report = evaluation::segment_errors(&trajectory(&gt)?, &trajectory(&est)?, &lengths).map_err(value_err)?;
    Ok(report
        .lengths
        .iter()
        .map(|l| {
            BTreeMap::from([
                ("length".to_string(), l.length),
                ("segments".to_string(), l.segments as f64),
                ("translation_pct".to_string(), l.translation_pct),
                ("rotation_deg_per_m".to_string(), l.rotation_deg_per_m),
            ])
        })
        .collect())
}

#[pyfunction]
fn rpe(gt: Vec<PyPose>, est: Vec<PyPose>) -> PyResult<BTreeMap<String, f64>> {
    let r = evaluation::rpe(&trajectory(&gt)?, &trajectory(&est)?).map_err(value_err)?;
    Ok(BTreeMap::from([
        ("translation_pct".to_string(), r.translation_pct),
        ("rotation_deg".to_string(), r.rotation_deg),
        ("frames".to_string(), r.frames as f64),
        ("degenerate_frames".to_string(), r.degenerate_frames as f64),
    ]))
}

/// `(rmse, per_frame_errors)`.
#[pyfunction]
fn ate(gt: Vec<PyPose>, est: Vec<PyPose>) -> PyResult<(f64, Vec<f64>)> {
    let r = evaluation::ate(&trajectory(&gt)?, &trajectory(&est)?).map_err(value_err)?;
    Ok((r.rmse, r.errors))
}

/// Bounded sequence loss of `predictions` against `truth` (both lists of 6-vectors).
#[pyfunction]
#[pyo3(signature = (predictions, truth, alpha=1.0, delta=1.0, zeta=100.0, window=2))]
fn sequence_loss(
    predictions: Vec<[f64; 6]>,
    truth: Vec<[f64; 6]>,
    alpha: f64,
    delta: f64,
    zeta: f64,
    window: usize,
) -> PyResult<f64> {
    let weights = LossWeights {
        alpha,
        delta,
        zeta,
        window,
    };
    weights.validate().map_err(value_err)?;
    let flat: Vec<f64> = predictions.iter().flatten().copied().collect();
    let preds = Matrix::from_row_slice(predictions.len(), 6, &flat);
    let truth: Vec<Vector6<f64>> = truth.iter().map(|t| Vector6::from_row_slice(t)).collect();
    sequence_loss_value(&preds, &truth, &weights).map_err(value_err)
}

/// Trains from a config file and/or `overrides` (`{"section.key": "value"}`).
///
/// Returns the run log CSV text and per-stage summaries. Artifacts are
/// written when `out_dir` is given.
#[pyfunction]
#[pyo3(signature = (config=None, out_dir=None, overrides=None))]
fn train(
    py: Python<'_>,
    config: Option<PathBuf>,
    out_dir: Option<PathBuf>,
    overrides: Option<BTreeMap<String, String>>,
) -> PyResult<(String, Vec<BTreeMap<String, f64>>)> {
    let (mut kv, base) = match &config {
        Some(path) => (
            KeyValues::read(path).map_err(value_err)?,
            path.parent().unwrap_or(Path::new(".")).to_path_buf(),
        ),
        None => (KeyValues::default(), PathBuf::from(".")),
    };
    for (k, v) in overrides.unwrap_or_default() {
        kv.set(k, v);
    }
    let mut cfg = RunConfig::from_key_values(&kv, &base).map_err(value_err)?;
    cfg.output_dir = out_dir;
    let (_, log) = py.detach(|| trainer::train(&cfg)).map_err(runtime_err)?;
    let stages = log
        .stages
        .iter()
        .map(|s| {
            BTreeMap::from([
                ("stage".to_string(), s.stage as f64),
                ("alpha".to_string(), s.alpha),
                ("epochs".to_string(), s.epochs as f64),
                ("validation_loss".to_string(), s.validation_loss),
                ("segment_translation_pct".to_string(), s.held_out.segment_translation_pct),
                ("rpe_translation_pct".to_string(), s.held_out.rpe_translation_pct),
            ])
        })
        .collect();
    Ok((log.to_csv(), stages))
}

#[pymodule]
fn pygacl(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", gacl::VERSION)?;
    m.add_class::<PyPose>()?;
    m.add_class::<PySequence>()?;
    m.add_function(wrap_pyfunction!(accumulate, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(segment_errors, m)?)?;
    m.add_function(wrap_pyfunction!(rpe, m)?)?;
    m.add_function(wrap_pyfunction!(ate, m)?)?;
    m.add_function(wrap_pyfunction!(sequence_loss, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    Ok(())
}
