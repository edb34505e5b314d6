//! Bounded pose regression loss.
//!
//! The per-step relative error and a gated windowed composite error are
//! blended by `alpha`:
//!
//! ```text
//! total = Σ_t  alpha · L(rel_t) + (1 - alpha) · L_com(t)
//! L(p)  = delta · |t̂ - t|² + zeta · |r̂ - r|²
//! ```
//!
//! `L_com(t)` is the error of the composite of the last `window` predicted
//! relatives, counted only when it exceeds the previous step's raw window
//! error.

use nalgebra::Vector6;

use crate::autodiff::{Matrix, Tape, Value};
use crate::error::LossError;
use crate::geometry::compose_vector6_with_jacobians;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    /// Translation weight.
    pub delta: f64,
    /// Rotation weight.
    pub zeta: f64,
    pub window: usize,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            delta: 1.0,
            zeta: 100.0,
            window: 2,
        }
    }
}

impl LossWeights {
    pub fn with_alpha(self, alpha: f64) -> Self {
        Self { alpha, ..self }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(format!("alpha {} outside [0, 1]", self.alpha));
        }
        if !(self.delta >= 0.0 && self.zeta >= 0.0) {
            return Err("delta and zeta must be non-negative".into());
        }
        if self.window == 0 {
            return Err("window must be at least 1".into());
        }
        Ok(())
    }
}

/// Raw window loss of the previous step, absent until the first window completes.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct WindowState {
    pub previous: Option<f64>,
}

/// `delta · |t̂ - t|² + zeta · |r̂ - r|²` on plain vectors.
pub fn pose_error_value(estimate: &Vector6<f64>, truth: &Vector6<f64>, delta: f64, zeta: f64) -> f64 {
    let d = estimate - truth;
    delta * d.fixed_rows::<3>(0).norm_squared() + zeta * d.fixed_rows::<3>(3).norm_squared()
}

/// Differentiable pose error of a `6 × 1` estimate against a fixed truth.
pub fn pose_error(
    tape: &mut Tape,
    estimate: Value,
    truth: &Vector6<f64>,
    delta: f64,
    zeta: f64,
) -> Result<Value, LossError> {
    let truth = tape.column(truth.as_slice());
    let diff = tape.sub(estimate, truth)?;
    let dt = tape.slice_rows(diff, 0, 3)?;
    let dr = tape.slice_rows(diff, 3, 3)?;
    let st = tape.square(dt);
    let st = tape.sum(st);
    let sr = tape.square(dr);
    let sr = tape.sum(sr);
    let st = tape.scale(st, delta);
    let sr = tape.scale(sr, zeta);
    Ok(tape.add(st, sr)?)
}

fn as_vector6(tape: &Tape, v: Value) -> Result<Vector6<f64>, LossError> {
    if v.shape() != (6, 1) {
        return Err(crate::error::TapeError::ShapeMismatch {
            op: "pose vector",
            left: v.shape(),
            right: (6, 1),
        }
        .into());
    }
    Ok(Vector6::from_column_slice(tape.data(v).as_slice()))
}

/// Composes plain 6-DoF relatives oldest first and returns the composite
/// together with the Jacobian of the composite w.r.t. each input.
pub fn compose_chain(relatives: &[Vector6<f64>]) -> Result<(Vector6<f64>, Vec<Matrix>), LossError> {
    let Some((first, rest)) = relatives.split_first() else {
        return Err(LossError::InsufficientHistory { window: 1, available: 0 });
    };
    let mut acc = *first;
    // d acc / d input_k for every input seen so far
    let mut jacs: Vec<nalgebra::Matrix6<f64>> = vec![nalgebra::Matrix6::identity()];
    for rel in rest {
        let (out, j) = compose_vector6_with_jacobians(&acc, rel)?;
        for jk in jacs.iter_mut() {
            *jk = j.d_out_d_left * *jk;
        }
        jacs.push(j.d_out_d_right);
        acc = out;
    }
    let jacs = jacs
        .into_iter()
        .map(|j| Matrix::from_column_slice(6, 6, j.as_slice()))
        .collect();
    Ok((acc, jacs))
}

/// Composes the last `window` relative predictions into the window-relative
/// pose, oldest first so the result matches accumulating the same relatives.
/// The gradient reaches every input through the analytic SE(3) Jacobians.
pub fn windowed_compose(tape: &mut Tape, relatives: &[Value], window: usize) -> Result<Value, LossError> {
    if window == 0 || relatives.len() < window {
        return Err(LossError::InsufficientHistory {
            window,
            available: relatives.len(),
        });
    }
    let inputs = &relatives[relatives.len() - window..];
    if window == 1 {
        as_vector6(tape, inputs[0])?;
        return Ok(inputs[0]);
    }
    let vecs = inputs
        .iter()
        .map(|v| as_vector6(tape, *v))
        .collect::<Result<Vec<_>, _>>()?;
    let (out, jacs) = compose_chain(&vecs)?;
    Ok(tape.external(inputs, Matrix::from_column_slice(6, 1, out.as_slice()), jacs)?)
}

/// Gated composite term. Returns `(contribution, next_state)`; the
/// contribution is `None` when the gate is closed.
pub fn composite_loss(
    tape: &mut Tape,
    composed: Value,
    truth: &Vector6<f64>,
    state: WindowState,
    weights: &LossWeights,
) -> Result<(Option<Value>, WindowState), LossError> {
    let raw = pose_error(tape, composed, truth, weights.delta, weights.zeta)?;
    let raw_value = tape.scalar_value(raw);
    let open = match state.previous {
        None => true,
        Some(prev) => raw_value > prev,
    };
    let next = WindowState {
        previous: Some(raw_value),
    };
    Ok((open.then_some(raw), next))
}

/// `Σ_t alpha · rel_t + (1 - alpha) · com_t`, where absent composite terms count as zero.
pub fn bounded_total(
    tape: &mut Tape,
    relative: &[Value],
    composite: &[Option<Value>],
    alpha: f64,
) -> Result<Value, LossError> {
    let mut total: Option<Value> = None;
    let steps = relative.len().max(composite.len());
    for t in 0..steps {
        let mut term: Option<Value> = None;
        if let Some(r) = relative.get(t) {
            term = Some(if alpha == 1.0 { *r } else { tape.scale(*r, alpha) });
        }
        if let Some(Some(c)) = composite.get(t) {
            if alpha != 1.0 {
                let c = tape.scale(*c, 1.0 - alpha);
                term = Some(match term {
                    Some(r) => tape.add(r, c)?,
                    None => c,
                });
            }
        }
        if let Some(term) = term {
            total = Some(match total {
                Some(acc) => tape.add(acc, term)?,
                None => term,
            });
        }
    }
    Ok(total.unwrap_or_else(|| tape.scalar(0.0)))
}

/// Ground-truth window relatives for every step `t >= w` (1-based), or `None`
/// before the first full window. They go through the same composition as the
/// predictions, so a perfect prediction scores exactly zero.
pub fn window_truths(truth: &[Vector6<f64>], window: usize) -> Result<Vec<Option<Vector6<f64>>>, LossError> {
    (1..=truth.len())
        .map(|t| {
            if t >= window {
                Ok(Some(compose_chain(&truth[t - window..t])?.0))
            } else {
                Ok(None)
            }
        })
        .collect()
}

/// The assembled sequence objective plus its unweighted parts.
pub struct SequenceLoss {
    pub total: Value,
    /// Σ of per-step relative errors.
    pub relative: f64,
    /// Σ of gated composite contributions.
    pub composite: f64,
}

/// Builds the full bounded objective for one sequence of predictions.
///
/// With `alpha == 1` the composite branch is skipped entirely; it would only
/// contribute exact zeros.
pub fn sequence_loss(
    tape: &mut Tape,
    predictions: &[Value],
    truth: &[Vector6<f64>],
    weights: &LossWeights,
) -> Result<SequenceLoss, LossError> {
    if predictions.len() != truth.len() {
        return Err(LossError::LengthMismatch {
            predictions: predictions.len(),
            truth: truth.len(),
        });
    }
    let mut relative = Vec::with_capacity(predictions.len());
    let mut rel_sum = 0.0;
    for (p, g) in predictions.iter().zip(truth) {
        let l = pose_error(tape, *p, g, weights.delta, weights.zeta)?;
        rel_sum += tape.scalar_value(l);
        relative.push(l);
    }
    let mut composite = Vec::new();
    let mut com_sum = 0.0;
    if weights.alpha != 1.0 {
        let targets = window_truths(truth, weights.window)?;
        let mut state = WindowState::default();
        for (t, target) in targets.iter().enumerate() {
            let Some(target) = target else {
                composite.push(None);
                continue;
            };
            let composed = windowed_compose(tape, &predictions[..=t], weights.window)?;
            let (term, next) = composite_loss(tape, composed, target, state, weights)?;
            if let Some(term) = term {
                com_sum += tape.scalar_value(term);
            }
            state = next;
            composite.push(term);
        }
    }
    let total = bounded_total(tape, &relative, &composite, weights.alpha)?;
    Ok(SequenceLoss {
        total,
        relative: rel_sum,
        composite: com_sum,
    })
}

/// Loss value only, for evaluation.
pub fn sequence_loss_value(predictions: &Matrix, truth: &[Vector6<f64>], weights: &LossWeights) -> Result<f64, LossError> {
    let mut tape = Tape::new();
    let preds: Vec<Value> = predictions
        .row_iter()
        .map(|r| tape.column(r.transpose().as_slice()))
        .collect();
    let loss = sequence_loss(&mut tape, &preds, truth, weights)?;
    Ok(tape.scalar_value(loss.total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{accumulate, compose, Pose};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random6(rng: &mut ChaCha8Rng, scale: f64) -> Vector6<f64> {
        Vector6::from_fn(|_, _| rng.random_range(-scale..scale))
    }

    #[test]
    fn pose_error_examples() {
        let mut tape = Tape::new();
        let truth = Vector6::new(0.1, 0.2, 0.3, 0.01, 0.02, 0.03);
        let est = tape.column(truth.as_slice());
        let l = pose_error(&mut tape, est, &truth, 1.0, 100.0).unwrap();
        assert_eq!(tape.scalar_value(l), 0.0);

        let est = tape.column(&[0.1, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let l = pose_error(&mut tape, est, &Vector6::zeros(), 1.0, 1.0).unwrap();
        assert!((tape.scalar_value(l) - 0.01).abs() < 1e-15);

        let est = tape.column(&[0.0, 0.0, 0.0, 0.0, 0.0, 0.01]);
        let l = pose_error(&mut tape, est, &Vector6::zeros(), 1.0, 100.0).unwrap();
        assert!((tape.scalar_value(l) - 0.01).abs() < 1e-15);
        assert!((pose_error_value(&Vector6::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.01), &Vector6::zeros(), 1.0, 100.0) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn windowed_compose_examples() {
        let mut tape = Tape::new();
        let a = tape.column(&[0.1, 0.2, 0.3, 0.01, 0.02, 0.03]);
        assert_eq!(windowed_compose(&mut tape, &[a], 1).unwrap(), a);

        let s = tape.column(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let c = windowed_compose(&mut tape, &[s, s], 2).unwrap();
        assert!((tape.data(c) - Matrix::from_column_slice(6, 1, &[2.0, 0.0, 0.0, 0.0, 0.0, 0.0])).amax() < 1e-15);

        assert!(matches!(
            windowed_compose(&mut tape, &[s], 2),
            Err(LossError::InsufficientHistory { window: 2, available: 1 })
        ));
    }

    #[test]
    fn windowed_compose_matches_matrix_chain_and_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let rels: Vec<Vector6<f64>> = (0..3).map(|_| random6(&mut rng, 0.8)).collect();
            let mut tape = Tape::new();
            let vals: Vec<Value> = rels.iter().map(|r| tape.column(r.as_slice())).collect();
            let out = windowed_compose(&mut tape, &vals, 3).unwrap();
            let out6 = Vector6::from_column_slice(tape.data(out).as_slice());

            let m = rels
                .iter()
                .fold(nalgebra::Matrix4::identity(), |acc, r| acc * Pose::from_vector6(r).to_matrix());
            assert!((Pose::from_vector6(&out6).to_matrix() - m).amax() < 1e-12);
            let acc = accumulate(&rels.iter().map(Pose::from_vector6).collect::<Vec<_>>(), Pose::identity());
            assert!(Pose::from_vector6(&out6).max_abs_diff(acc.last()) < 1e-12);

            // gradient of a weighted pose error through the composite
            let truth = random6(&mut rng, 0.5);
            let l = pose_error(&mut tape, out, &truth, 1.0, 3.0).unwrap();
            let g = tape.backward(l).unwrap();
            let f = |rs: &[Vector6<f64>]| {
                let (c, _) = compose_chain(rs).unwrap();
                pose_error_value(&c, &truth, 1.0, 3.0)
            };
            let h = 1e-6;
            for (k, v) in vals.iter().enumerate() {
                let analytic = g.wrt(*v);
                for i in 0..6 {
                    let mut p = rels.clone();
                    let mut m = rels.clone();
                    p[k][i] += h;
                    m[k][i] -= h;
                    let numeric = (f(&p) - f(&m)) / (2.0 * h);
                    let a = analytic[(i, 0)];
                    assert!((a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0) < 1e-5);
                }
            }
        }
    }

    #[test]
    fn composite_gating() {
        let w = LossWeights { alpha: 0.5, delta: 1.0, zeta: 1.0, window: 2 };
        let mut tape = Tape::new();
        // raw error of this estimate against zero truth is 0.5
        let half = tape.column(&[0.5f64.sqrt(), 0.0, 0.0, 0.0, 0.0, 0.0]);
        let (c, s) = composite_loss(&mut tape, half, &Vector6::zeros(), WindowState::default(), &w).unwrap();
        assert!((tape.scalar_value(c.unwrap()) - 0.5).abs() < 1e-15);
        assert!((s.previous.unwrap() - 0.5).abs() < 1e-15);

        let (c, s) = composite_loss(&mut tape, half, &Vector6::zeros(), WindowState { previous: Some(0.7) }, &w).unwrap();
        assert!(c.is_none());
        assert!((s.previous.unwrap() - 0.5).abs() < 1e-15);

        let big = tape.column(&[0.7f64.sqrt(), 0.0, 0.0, 0.0, 0.0, 0.0]);
        let (c, _) = composite_loss(&mut tape, big, &Vector6::zeros(), WindowState { previous: Some(0.5) }, &w).unwrap();
        assert!((tape.scalar_value(c.unwrap()) - 0.7).abs() < 1e-15);

    }

    #[test]
    fn ties_do_not_open_the_gate() {
        let w = LossWeights { alpha: 0.5, delta: 1.0, zeta: 1.0, window: 2 };
        let mut tape = Tape::new();
        let v = tape.column(&[0.5, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let (c, _) = composite_loss(&mut tape, v, &Vector6::zeros(), WindowState { previous: Some(0.25) }, &w).unwrap();
        assert!(c.is_none());
    }

    #[test]
    fn bounded_total_examples() {
        let mut tape = Tape::new();
        let r1 = tape.scalar(1.5);
        let r2 = tape.scalar(0.5);
        let c1 = tape.scalar(0.25);
        let c2 = tape.scalar(0.75);
        let rel = [r1, r2];
        let com = [Some(c1), Some(c2)];
        let t = bounded_total(&mut tape, &rel, &com, 1.0).unwrap();
        assert_eq!(tape.scalar_value(t), 2.0);
        let t = bounded_total(&mut tape, &rel, &com, 0.0).unwrap();
        assert_eq!(tape.scalar_value(t), 1.0);
        let t = bounded_total(&mut tape, &rel, &com, 0.5).unwrap();
        assert_eq!(tape.scalar_value(t), 1.5);
        let t = bounded_total(&mut tape, &rel, &[None, Some(c2)], 0.5).unwrap();
        assert_eq!(tape.scalar_value(t), 1.375);
    }

    #[test]
    fn perfect_predictions_give_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let truth: Vec<Vector6<f64>> = (0..6).map(|_| random6(&mut rng, 0.3)).collect();
        for alpha in [1.0, 0.5, 0.1, 0.0] {
            let mut tape = Tape::new();
            let preds: Vec<Value> = truth.iter().map(|t| tape.column(t.as_slice())).collect();
            let w = LossWeights { alpha, delta: 1.0, zeta: 100.0, window: 3 };
            let l = sequence_loss(&mut tape, &preds, &truth, &w).unwrap();
            assert!(tape.scalar_value(l.total).abs() < 1e-20, "alpha {alpha}");
        }
    }

    #[test]
    fn perfect_prediction_scores_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let truth: Vec<Vector6<f64>> = (0..7).map(|_| random6(&mut rng, 0.4)).collect();
        let flat: Vec<f64> = truth.iter().flat_map(|t| t.iter().copied()).collect();
        let preds = Matrix::from_row_slice(7, 6, &flat);
        for window in 1..=3 {
            let w = LossWeights { alpha: 0.3, window, ..LossWeights::default() };
            assert_eq!(sequence_loss_value(&preds, &truth, &w).unwrap(), 0.0);
        }
    }

    #[test]
    fn alpha_one_ignores_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let truth: Vec<Vector6<f64>> = (0..6).map(|_| random6(&mut rng, 0.3)).collect();
        let preds = Matrix::from_fn(6, 6, |_, _| rng.random_range(-0.3..0.3));
        let a = sequence_loss_value(&preds, &truth, &LossWeights { alpha: 1.0, delta: 1.0, zeta: 10.0, window: 2 }).unwrap();
        let b = sequence_loss_value(&preds, &truth, &LossWeights { alpha: 1.0, delta: 1.0, zeta: 10.0, window: 5 }).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn window_truths_match_pose_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let truth: Vec<Vector6<f64>> = (0..5).map(|_| random6(&mut rng, 0.3)).collect();
        let w = window_truths(&truth, 2).unwrap();
        assert!(w[0].is_none());
        for t in 2..=5 {
            let expected = compose(&Pose::from_vector6(&truth[t - 2]), &Pose::from_vector6(&truth[t - 1]));
            assert!(Pose::from_vector6(&w[t - 1].unwrap()).max_abs_diff(&expected) < 1e-12);
        }
    }

    #[test]
    fn length_mismatch() {
        let mut tape = Tape::new();
        let p = tape.column(&[0.0; 6]);
        assert!(matches!(
            sequence_loss(&mut tape, &[p], &[], &LossWeights::default()),
            Err(LossError::LengthMismatch { .. })
        ));
    }
}
