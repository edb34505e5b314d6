//! Trajectory error metrics: KITTI-style segment errors, frame-to-frame
//! relative pose error, and absolute position error with its CDF.
//!
//! No alignment or scale correction is applied anywhere.

use crate::error::EvalError;
use crate::geometry::{relative_between, Trajectory};

/// Segment lengths for vehicle-scale trajectories, in meters.
pub const VEHICLE_SEGMENTS: [f64; 8] = [100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0];
/// Segment lengths for walking-scale trajectories, in meters.
pub const WALKER_SEGMENTS: [f64; 8] = [5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0];

/// Ground-truth motion below this (meters) makes a frame degenerate for RPE.
pub const MIN_MOTION: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentError {
    pub length: f64,
    pub segments: usize,
    /// Mean translation error in percent of the traveled distance.
    pub translation_pct: f64,
    /// Mean rotation error in degrees per meter.
    pub rotation_deg_per_m: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SegmentErrorReport {
    pub lengths: Vec<SegmentError>,
}

impl SegmentErrorReport {
    /// Average over all evaluated segments of all lengths.
    pub fn mean_translation_pct(&self) -> f64 {
        weighted_mean(self.lengths.iter().map(|l| (l.translation_pct, l.segments)))
    }

    pub fn mean_rotation_deg_per_m(&self) -> f64 {
        weighted_mean(self.lengths.iter().map(|l| (l.rotation_deg_per_m, l.segments)))
    }
}

impl SegmentErrorReport {
    pub const HEADER: &'static str = "length,segments,translation_pct,rotation_deg_per_m";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::HEADER);
        for l in &self.lengths {
            out.push_str(&format!(
                "{},{},{:e},{:e}\n",
                l.length, l.segments, l.translation_pct, l.rotation_deg_per_m
            ));
        }
        out
    }
}

fn weighted_mean(items: impl Iterator<Item = (f64, usize)>) -> f64 {
    let (sum, n) = items.fold((0.0, 0usize), |(s, n), (x, k)| (s + x * k as f64, n + k));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn check_lengths(gt: &Trajectory, est: &Trajectory) -> Result<(), EvalError> {
    if gt.len() != est.len() {
        return Err(EvalError::LineCountMismatch {
            gt: gt.len(),
            est: est.len(),
        });
    }
    Ok(())
}

/// Errors over every sub-path of each requested ground-truth length.
///
/// For each start frame the segment ends at the first frame whose cumulative
/// ground-truth path length exceeds the start's by more than `L`. Errors are
/// normalized by that segment's actual ground-truth path length.
pub fn segment_errors(gt: &Trajectory, est: &Trajectory, lengths: &[f64]) -> Result<SegmentErrorReport, EvalError> {
    check_lengths(gt, est)?;
    if lengths.is_empty() {
        return Err(EvalError::NoSegments);
    }
    let dist = gt.path_lengths();
    let total = *dist.last().expect("non-empty");
    let (gp, ep) = (gt.poses(), est.poses());
    let mut report = SegmentErrorReport::default();
    for &length in lengths {
        let mut t_sum = 0.0;
        let mut r_sum = 0.0;
        let mut count = 0usize;
        for first in 0..dist.len() {
            let target = dist[first] + length;
            // dist is non-decreasing
            let last = dist.partition_point(|&d| d <= target);
            if last >= dist.len() {
                break;
            }
            let travelled = dist[last] - dist[first];
            let delta_gt = relative_between(&gp[first], &gp[last]);
            let delta_est = relative_between(&ep[first], &ep[last]);
            let err = relative_between(&delta_est, &delta_gt);
            t_sum += err.translation().norm() / travelled * 100.0;
            r_sum += err.rotation_angle().to_degrees() / travelled;
            count += 1;
        }
        if count == 0 {
            return Err(EvalError::SegmentTooLong { length, available: total });
        }
        report.lengths.push(SegmentError {
            length,
            segments: count,
            translation_pct: t_sum / count as f64,
            rotation_deg_per_m: r_sum / count as f64,
        });
    }
    Ok(report)
}

/// The requested lengths that fit in `gt` at least once.
pub fn feasible_lengths(gt: &Trajectory, lengths: &[f64]) -> Vec<f64> {
    let total = *gt.path_lengths().last().expect("non-empty");
    lengths.iter().copied().filter(|&l| l < total).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RpeReport {
    /// Mean frame-to-frame translation error, percent of the ground-truth step length.
    pub translation_pct: f64,
    /// Mean frame-to-frame rotation error in degrees.
    pub rotation_deg: f64,
    pub frames: usize,
    /// Frames skipped from the translation average because ground truth barely moved.
    pub degenerate_frames: usize,
}

impl RpeReport {
    pub const HEADER: &'static str = "translation_pct,rotation_deg,frames,degenerate_frames";

    pub fn to_csv(&self) -> String {
        format!(
            "{}\n{:e},{:e},{},{}\n",
            Self::HEADER,
            self.translation_pct,
            self.rotation_deg,
            self.frames,
            self.degenerate_frames
        )
    }
}

/// Frame-to-frame relative pose error.
pub fn rpe(gt: &Trajectory, est: &Trajectory) -> Result<RpeReport, EvalError> {
    check_lengths(gt, est)?;
    let gt_rel = gt.relatives();
    let est_rel = est.relatives();
    let mut t_sum = 0.0;
    let mut t_count = 0usize;
    let mut r_sum = 0.0;
    for (g, e) in gt_rel.iter().zip(&est_rel) {
        let delta = relative_between(g, e);
        r_sum += delta.rotation_angle().to_degrees();
        let motion = g.translation().norm();
        if motion > MIN_MOTION {
            t_sum += delta.translation().norm() / motion * 100.0;
            t_count += 1;
        }
    }
    let frames = gt_rel.len();
    if frames > 0 && t_count == 0 {
        return Err(EvalError::DegenerateMotion);
    }
    Ok(RpeReport {
        translation_pct: if t_count > 0 { t_sum / t_count as f64 } else { 0.0 },
        rotation_deg: if frames > 0 { r_sum / frames as f64 } else { 0.0 },
        frames,
        degenerate_frames: frames - t_count,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AteReport {
    /// Euclidean position error per frame, meters.
    pub errors: Vec<f64>,
    pub rmse: f64,
    /// `(error, fraction of frames with error <= value)`, one entry per distinct error.
    pub cdf: Vec<(f64, f64)>,
}

impl AteReport {
    /// Fraction of frames whose error is at most `x`.
    pub fn cdf_at(&self, x: f64) -> f64 {
        self.cdf
            .iter()
            .take_while(|(v, _)| *v <= x)
            .last()
            .map_or(0.0, |(_, f)| *f)
    }
}

impl AteReport {
    pub const HEADER: &'static str = "frame,error_m";
    pub const CDF_HEADER: &'static str = "error_m,fraction";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::HEADER);
        for (i, e) in self.errors.iter().enumerate() {
            out.push_str(&format!("{i},{e:e}\n"));
        }
        out
    }

    pub fn cdf_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CDF_HEADER);
        for (e, f) in &self.cdf {
            out.push_str(&format!("{e:e},{f:e}\n"));
        }
        out
    }
}

/// Absolute position error without alignment.
pub fn ate(gt: &Trajectory, est: &Trajectory) -> Result<AteReport, EvalError> {
    check_lengths(gt, est)?;
    let errors: Vec<f64> = gt
        .poses()
        .iter()
        .zip(est.poses())
        .map(|(g, e)| (g.translation() - e.translation()).norm())
        .collect();
    let n = errors.len() as f64;
    let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    let mut sorted = errors.clone();
    sorted.sort_by(f64::total_cmp);
    let mut cdf: Vec<(f64, f64)> = Vec::new();
    for (i, e) in sorted.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match cdf.last_mut() {
            Some(last) if last.0 == *e => last.1 = frac,
            _ => cdf.push((*e, frac)),
        }
    }
    Ok(AteReport { errors, rmse, cdf })
}
