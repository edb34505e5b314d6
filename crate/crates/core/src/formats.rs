//! On-disk formats.
//!
//! * KITTI pose files: one pose per line, the 12 row-major entries of the
//!   upper 3×4 block of the homogeneous matrix, space separated.
//! * Feature CSV: a header `f0,f1,...` then one row per relative step.
//! * Parameter checkpoints (see [`write_checkpoint`]).
//! * Flat `key = value` files with optional `[section]` headers, used for
//!   run configs, dataset metadata and manifests.
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! writing then reading gives back the same bits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, Matrix4};

use crate::autodiff::{Matrix, ParamStore};
use crate::error::FormatError;
use crate::geometry::{Pose, Trajectory};

pub const CHECKPOINT_MAGIC: &str = "GACL-CHECKPOINT";
pub const CHECKPOINT_VERSION: u32 = 1;

fn read(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(|e| FormatError::io(path, e))
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), FormatError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| FormatError::io(dir, e))?;
        }
    }
    fs::write(path, contents).map_err(|e| FormatError::io(path, e))
}

pub fn format_kitti(traj: &Trajectory) -> String {
    let mut out = String::new();
    for pose in traj.poses() {
        let m = pose.to_matrix();
        let vals: Vec<String> = (0..3)
            .flat_map(|r| (0..4).map(move |c| (r, c)))
            .map(|(r, c)| format!("{:e}", m[(r, c)]))
            .collect();
        out.push_str(&vals.join(" "));
        out.push('\n');
    }
    out
}

/// Parses KITTI pose text; `path` is only used in error messages.
pub fn parse_kitti(text: &str, path: &Path) -> Result<Trajectory, FormatError> {
    let mut poses = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|tok| tok.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| FormatError::parse(path, lineno, format!("invalid number: {e}")))?;
        if vals.len() != 12 {
            return Err(FormatError::parse(path, lineno, format!("expected 12 values, found {}", vals.len())));
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(FormatError::parse(path, lineno, "non-finite value"));
        }
        let mut m = Matrix4::identity();
        for r in 0..3 {
            for c in 0..4 {
                m[(r, c)] = vals[r * 4 + c];
            }
        }
        poses.push(Pose::from_matrix(&m));
    }
    Trajectory::new(poses).map_err(|_| FormatError::parse(path, 0, "file contains no poses"))
}

pub fn read_kitti(path: &Path) -> Result<Trajectory, FormatError> {
    parse_kitti(&read(path)?, path)
}

pub fn write_kitti(path: &Path, traj: &Trajectory) -> Result<(), FormatError> {
    write_file(path, &format_kitti(traj))
}

pub fn format_features(features: &DMatrix<f64>) -> String {
    let mut out = String::new();
    let header: Vec<String> = (0..features.ncols()).map(|i| format!("f{i}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in features.row_iter() {
        let vals: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&vals.join(","));
        out.push('\n');
    }
    out
}

pub fn read_features(path: &Path) -> Result<DMatrix<f64>, FormatError> {
    let text = read(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| FormatError::parse(path, 1, "missing header"))?;
    let cols = header.split(',').count();
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| FormatError::parse(path, i + 1, format!("invalid number: {e}")))?;
        if vals.len() != cols {
            return Err(FormatError::parse(path, i + 1, format!("expected {cols} values, found {}", vals.len())));
        }
        data.extend(vals);
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

/// Serializes parameter values.
///
/// ```text
/// GACL-CHECKPOINT 1
/// params <count>
/// <name> <rows> <cols>
/// <rows*cols values, row-major, space separated>
/// ...
/// ```
///
/// Parameters appear in name order. Optimizer moments are not stored.
pub fn format_checkpoint(params: &ParamStore) -> String {
    let mut out = format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\nparams {}\n", params.len());
    for (name, m) in params.iter() {
        let _ = writeln!(out, "{name} {} {}", m.nrows(), m.ncols());
        let vals: Vec<String> = m
            .transpose()
            .iter()
            .map(|v| format!("{v:e}"))
            .collect();
        out.push_str(&vals.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_checkpoint(text: &str, path: &Path) -> Result<ParamStore, FormatError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| FormatError::parse(path, 0, format!("unexpected end of file, expected {what}")))
    };
    let (n, magic) = next("header")?;
    let mut parts = magic.split_whitespace();
    if parts.next() != Some(CHECKPOINT_MAGIC) {
        return Err(FormatError::parse(path, n, "not a checkpoint file"));
    }
    let version: u32 = parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| FormatError::parse(path, n, "missing version"))?;
    if version != CHECKPOINT_VERSION {
        return Err(FormatError::parse(path, n, format!("unsupported checkpoint version {version}")));
    }
    let (n, count_line) = next("parameter count")?;
    let count: usize = count_line
        .strip_prefix("params ")
        .and_then(|c| c.trim().parse().ok())
        .ok_or_else(|| FormatError::parse(path, n, "expected `params <count>`"))?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let (n, head) = next("parameter header")?;
        let fields: Vec<&str> = head.split_whitespace().collect();
        let [name, rows, cols] = fields[..] else {
            return Err(FormatError::parse(path, n, "expected `<name> <rows> <cols>`"));
        };
        let rows: usize = rows.parse().map_err(|_| FormatError::parse(path, n, "bad row count"))?;
        let cols: usize = cols.parse().map_err(|_| FormatError::parse(path, n, "bad column count"))?;
        let (n, body) = next("parameter values")?;
        let vals: Vec<f64> = body
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| FormatError::parse(path, n, format!("invalid number: {e}")))?;
        if vals.len() != rows * cols {
            return Err(FormatError::parse(path, n, format!("expected {} values, found {}", rows * cols, vals.len())));
        }
        store.insert(name, Matrix::from_row_slice(rows, cols, &vals));
    }
    Ok(store)
}

pub fn write_checkpoint(path: &Path, params: &ParamStore) -> Result<(), FormatError> {
    write_file(path, &format_checkpoint(params))
}

pub fn read_checkpoint(path: &Path) -> Result<ParamStore, FormatError> {
    parse_checkpoint(&read(path)?, path)
}

/// Entries of a `key = value` file. Keys inside `[section]` become `section.key`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, (String, usize)>,
}

impl KeyValues {
    pub fn parse(text: &str, path: &Path) -> Result<Self, FormatError> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(FormatError::parse(path, i + 1, "expected `key = value`"));
            };
            let key = if section.is_empty() {
                k.trim().to_string()
            } else {
                format!("{section}.{}", k.trim())
            };
            if entries.insert(key.clone(), (v.trim().to_string(), i + 1)).is_some() {
                return Err(FormatError::parse(path, i + 1, format!("duplicate key `{key}`")));
            }
        }
        Ok(Self { entries })
    }

    pub fn read(path: &Path) -> Result<Self, FormatError> {
        Self::parse(&read(path)?, path)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.insert(key.into(), (value.into(), 0));
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Renders with one `[section]` block per key prefix, keys sorted.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut current: Option<&str> = None;
        for (key, (value, _)) in &self.entries {
            let (section, name) = key.split_once('.').unwrap_or(("", key));
            if current != Some(section) {
                if !section.is_empty() {
                    if !out.is_empty() {
                        out.push('\n');
                    }
                    let _ = writeln!(out, "[{section}]");
                }
                current = Some(section);
            }
            let _ = writeln!(out, "{name} = {value}");
        }
        out
    }
}
