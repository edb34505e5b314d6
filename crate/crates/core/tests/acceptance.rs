//! Acceptance suite. Every criterion prints one `criterion N ... PASS|FAIL` line.
//!
//! Run with `cargo test -p gacl --test acceptance`. The experimental
//! criterion (5) reports its outcome without failing the run; any other FAIL
//! exits non-zero.

use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::{Matrix3, Matrix4, Quaternion, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gacl::autodiff::{Matrix, ParamStore, Tape};
use gacl::config::RunConfig;
use gacl::evaluation::{rpe, segment_errors};
use gacl::geometry::{accumulate, compose, inverse, relative_between, Pose, Trajectory};
use gacl::loss::{composite_loss, sequence_loss, sequence_loss_value, window_truths, windowed_compose, LossWeights, WindowState};
use gacl::model::{init_params, lstm_cell_eval, HiddenState, LstmLayerParams, Regressor, RegressorConfig};
use gacl::trainer::{ablate, alpha_sweep, seeded_config, train, AblationMode};

fn report(n: usize, name: &str, pass: bool, detail: &str) {
    println!("criterion {n} {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
}

// ---- independent oracles ----

fn quat_matrix(q: &Quaternion<f64>) -> Matrix3<f64> {
    let n = (q.w * q.w + q.i * q.i + q.j * q.j + q.k * q.k).sqrt();
    let (w, x, y, z) = (q.w / n, q.i / n, q.j / n, q.k / n);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

fn homogeneous(r: &Matrix3<f64>, t: &Vector3<f64>) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(t);
    m
}

fn pose_oracle(p: &Pose) -> Matrix4<f64> {
    homogeneous(&quat_matrix(&p.quaternion()), &p.translation())
}

fn euler_matrix(r: &[f64]) -> Matrix3<f64> {
    let (sx, cx) = r[0].sin_cos();
    let (sy, cy) = r[1].sin_cos();
    let (sz, cz) = r[2].sin_cos();
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cx, -sx, 0.0, sx, cx);
    let ry = Matrix3::new(cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy);
    let rz = Matrix3::new(cz, -sz, 0.0, sz, cz, 0.0, 0.0, 0.0, 1.0);
    rz * ry * rx
}

fn vec6_matrix(v: &[f64]) -> Matrix4<f64> {
    homogeneous(&euler_matrix(&v[3..6]), &Vector3::new(v[0], v[1], v[2]))
}

fn matrix_vec6(m: &Matrix4<f64>) -> [f64; 6] {
    let pitch = (-m[(2, 0)]).clamp(-1.0, 1.0).asin();
    let roll = m[(2, 1)].atan2(m[(2, 2)]);
    let yaw = m[(1, 0)].atan2(m[(0, 0)]);
    [m[(0, 3)], m[(1, 3)], m[(2, 3)], roll, pitch, yaw]
}

fn error6(a: &[f64], b: &[f64], delta: f64, zeta: f64) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    delta * (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) + zeta * (d[3] * d[3] + d[4] * d[4] + d[5] * d[5])
}

/// Gate pattern and smallest gap between a raw window loss and its predecessor.
fn gate_oracle(preds: &[[f64; 6]], truth: &[Vector6<f64>], w: &LossWeights) -> (Vec<bool>, f64) {
    let window_of = |rows: &[[f64; 6]]| {
        matrix_vec6(&rows.iter().fold(Matrix4::identity(), |acc, r| acc * vec6_matrix(r)))
    };
    let truth: Vec<[f64; 6]> = truth.iter().map(|t| [t[0], t[1], t[2], t[3], t[4], t[5]]).collect();
    let mut gates = Vec::new();
    let mut gap = f64::INFINITY;
    let mut prev: Option<f64> = None;
    for t in w.window..=preds.len() {
        let raw = error6(
            &window_of(&preds[t - w.window..t]),
            &window_of(&truth[t - w.window..t]),
            w.delta,
            w.zeta,
        );
        gates.push(prev.is_none_or(|p| raw > p));
        if let Some(p) = prev {
            gap = gap.min((raw - p).abs() / raw.abs().max(p.abs()).max(1e-300));
        }
        prev = Some(raw);
    }
    (gates, gap)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Scalar LSTM step with gate rows ordered (i, f, o, g).
fn lstm_oracle(w: &Matrix, b: &Matrix, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = h.len();
    let z: Vec<f64> = x.iter().chain(h).copied().collect();
    let pre = |row: usize| b[(row, 0)] + (0..z.len()).map(|k| w[(row, k)] * z[k]).sum::<f64>();
    let mut h2 = vec![0.0; n];
    let mut c2 = vec![0.0; n];
    for j in 0..n {
        let i = sigmoid(pre(j));
        let f = sigmoid(pre(n + j));
        let o = sigmoid(pre(2 * n + j));
        let g = pre(3 * n + j).tanh();
        c2[j] = f * c[j] + i * g;
        h2[j] = o * c2[j].tanh();
    }
    (h2, c2)
}

fn random_pose(rng: &mut ChaCha8Rng) -> (Pose, Matrix4<f64>) {
    let q = Quaternion::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let t = Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
    (Pose::new(t, q), homogeneous(&quat_matrix(&q), &t))
}

// ---- criteria ----

struct GradCase {
    regressor: Regressor,
    params: ParamStore,
    features: Matrix,
    truth: Vec<Vector6<f64>>,
    weights: LossWeights,
}

impl GradCase {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let window = rng.random_range(2..=3);
        let steps = rng.random_range(2..=6);
        let input = rng.random_range(1..=4);
        let layers = rng.random_range(1..=2);
        let mut config = RegressorConfig::new(input, (0..layers).map(|_| rng.random_range(1..=8)).collect());
        if rng.random_bool(0.3) {
            config.head_hidden = Some(rng.random_range(1..=8));
        }
        let mut params = init_params(&config, 1.0, rng);
        let names: Vec<String> = params.names().map(str::to_string).collect();
        for name in names {
            for v in params.get_mut(&name).unwrap().iter_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
        let features = Matrix::from_fn(steps, input, |_, _| rng.random_range(-1.0..1.0));
        let truth = (0..steps)
            .map(|_| Vector6::from_fn(|i, _| if i < 3 { rng.random_range(-0.5..0.5) } else { rng.random_range(-0.1..0.1) }))
            .collect();
        let weights = LossWeights {
            alpha: [0.0, 0.25, 0.5, 0.9][rng.random_range(0..4)],
            delta: 1.0,
            zeta: rng.random_range(1.0..20.0),
            window,
        };
        Self {
            regressor: Regressor::new(config).unwrap(),
            params,
            features,
            truth,
            weights,
        }
    }

    fn loss(&self, params: &ParamStore) -> (f64, Vec<bool>, f64) {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let state = HiddenState::zeros(self.regressor.config());
        let out = self.regressor.forward(&mut tape, &bound, &self.features, &state, None).unwrap();
        let preds: Vec<[f64; 6]> = out
            .poses
            .iter()
            .map(|v| {
                let d = tape.data(*v);
                [d[0], d[1], d[2], d[3], d[4], d[5]]
            })
            .collect();
        let loss = sequence_loss(&mut tape, &out.poses, &self.truth, &self.weights).unwrap();
        let (gates, gap) = gate_oracle(&preds, &self.truth, &self.weights);
        (tape.scalar_value(loss.total), gates, gap)
    }

    fn analytic(&self) -> ParamStore {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let state = HiddenState::zeros(self.regressor.config());
        let out = self.regressor.forward(&mut tape, &bound, &self.features, &state, None).unwrap();
        let loss = sequence_loss(&mut tape, &out.poses, &self.truth, &self.weights).unwrap();
        let grads = tape.backward(loss.total).unwrap();
        let mut store = ParamStore::new();
        for name in self.params.names() {
            store.insert(name, grads.wrt(bound.get(name).unwrap()));
        }
        store
    }
}

fn criterion_1_gradient_correctness() -> bool {
    const H: f64 = 1e-3;
    const TOL: f64 = 1e-5;
    // Relative error is taken against max(|analytic|, |numeric|, FLOOR).
    const FLOOR: f64 = 1e-6;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC1);
    let (mut checked, mut skipped, mut worst) = (0usize, 0usize, 0.0f64);
    let mut failures = Vec::new();
    for case_index in 0..100 {
        let case = GradCase::random(&mut rng);
        let analytic = case.analytic();
        let (_, base_gates, _) = case.loss(&case.params);
        for name in case.params.names() {
            let count = case.params.get(name).unwrap().len();
            for k in 0..count {
                let eval = |offset: f64| {
                    let mut p = case.params.clone();
                    p.get_mut(name).unwrap()[k] += offset;
                    case.loss(&p)
                };
                let samples = [eval(2.0 * H), eval(H), eval(-H), eval(-2.0 * H)];
                // A gate flip inside the stencil makes the loss non-smooth there.
                if samples.iter().any(|(_, g, gap)| *g != base_gates || *gap < 1e-9) {
                    skipped += 1;
                    continue;
                }
                let numeric = (-samples[0].0 + 8.0 * samples[1].0 - 8.0 * samples[2].0 + samples[3].0) / (12.0 * H);
                let a = analytic.get(name).unwrap()[k];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
                worst = worst.max(rel);
                checked += 1;
                if rel > TOL && failures.len() < 5 {
                    failures.push(format!("case {case_index} {name}[{k}]: analytic {a:e} numeric {numeric:e}"));
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = failures.is_empty() && secs < 60.0 && skipped * 100 < checked;
    report(
        1,
        "gradient",
        pass,
        &format!("100 cases, {checked} coordinates, {skipped} skipped at gate flips, worst rel {worst:.2e}, {secs:.1}s"),
    );
    for f in &failures {
        println!("  {f}");
    }
    pass
}

fn criterion_2_geometry_oracle() -> bool {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC2);
    let mut worst = 0.0f64;
    let mut canonical = true;
    for _ in 0..1000 {
        let (a, ma) = random_pose(&mut rng);
        let (b, mb) = random_pose(&mut rng);
        let ops = [
            (compose(&a, &b), ma * mb),
            (inverse(&a), ma.try_inverse().unwrap()),
            (relative_between(&a, &b), ma.try_inverse().unwrap() * mb),
        ];
        for (p, m) in &ops {
            worst = worst.max((pose_oracle(p) - m).amax());
            canonical &= p.quaternion().w >= 0.0;
        }
        let n = rng.random_range(1..=20);
        let (rels, mats): (Vec<Pose>, Vec<Matrix4<f64>>) = (0..n).map(|_| random_pose(&mut rng)).unzip();
        let traj = accumulate(&rels, a);
        let mut m = ma;
        worst = worst.max((pose_oracle(&traj.poses()[0]) - m).amax());
        for (p, r) in traj.poses()[1..].iter().zip(&mats) {
            m *= r;
            worst = worst.max((pose_oracle(p) - m).amax());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst < 1e-9 && canonical && secs < 5.0;
    report(2, "geometry", pass, &format!("1000 cases, worst {worst:.2e}, {secs:.2}s"));
    pass
}

fn criterion_3_loss_identities() -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC3);
    let mut ok = true;

    // alpha = 1 equals the plain sum of per-step errors, bit for bit.
    for _ in 0..200 {
        let steps = rng.random_range(1..=12);
        let truth: Vec<Vector6<f64>> = (0..steps).map(|_| Vector6::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect();
        let preds = Matrix::from_fn(steps, 6, |_, _| rng.random_range(-1.0..1.0));
        let weights = LossWeights {
            alpha: 1.0,
            delta: rng.random_range(0.1..3.0),
            zeta: rng.random_range(1.0..200.0),
            window: rng.random_range(1..=4),
        };
        let mut reference = 0.0;
        for (t, g) in truth.iter().enumerate() {
            let p: Vec<f64> = preds.row(t).iter().copied().collect();
            let d: Vec<f64> = (0..6).map(|i| p[i] - g[i]).collect();
            let term = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) * weights.delta
                + (d[3] * d[3] + d[4] * d[4] + d[5] * d[5]) * weights.zeta;
            reference = if t == 0 { term } else { reference + term };
        }
        ok &= sequence_loss_value(&preds, &truth, &weights).unwrap().to_bits() == reference.to_bits();
    }
    let alpha_one = ok;

    // A perfect prediction scores exactly zero for every blend and window.
    for _ in 0..200 {
        let steps = rng.random_range(1..=12);
        let truth: Vec<Vector6<f64>> = (0..steps).map(|_| Vector6::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect();
        let flat: Vec<f64> = truth.iter().flat_map(|t| t.iter().copied()).collect();
        let preds = Matrix::from_row_slice(steps, 6, &flat);
        let weights = LossWeights {
            alpha: rng.random_range(0.0..1.0),
            delta: 1.0,
            zeta: 100.0,
            window: rng.random_range(1..=4),
        };
        ok &= sequence_loss_value(&preds, &truth, &weights).unwrap() == 0.0;
    }
    let zero = ok;

    // Gating on hand-built x-translations against a motionless truth:
    // window sums 3, 1, 2, 1, 2 give raw losses 9, 1, 4, 1, 4 which open,
    // close, open, close, open.
    let gating = |xs: &[f64], window: usize, expected: &[Option<f64>], total: f64| {
        let weights = LossWeights {
            alpha: 0.5,
            delta: 1.0,
            zeta: 100.0,
            window,
        };
        let truth = vec![Vector6::zeros(); xs.len()];
        let mut tape = Tape::new();
        let preds: Vec<_> = xs.iter().map(|x| tape.column(&[*x, 0.0, 0.0, 0.0, 0.0, 0.0])).collect();
        let targets = window_truths(&truth, window).unwrap();
        let mut state = WindowState::default();
        let mut got = Vec::new();
        for t in 0..xs.len() {
            match targets[t] {
                None => got.push(None),
                Some(target) => {
                    let composed = windowed_compose(&mut tape, &preds[..=t], window).unwrap();
                    let (term, next) = composite_loss(&mut tape, composed, &target, state, &weights).unwrap();
                    got.push(term.map(|v| tape.scalar_value(v)));
                    state = next;
                }
            }
        }
        let flat: Vec<f64> = xs.iter().flat_map(|x| [*x, 0.0, 0.0, 0.0, 0.0, 0.0]).collect();
        let value = sequence_loss_value(&Matrix::from_row_slice(xs.len(), 6, &flat), &truth, &weights).unwrap();
        got == expected && value == total
    };
    // Relative terms 1, 4, 1, 9, 4, 16 sum to 35; open composites to 17.
    let g1 = gating(
        &[1.0, 2.0, -1.0, 3.0, -2.0, 4.0],
        2,
        &[None, Some(9.0), None, Some(4.0), None, Some(4.0)],
        0.5 * 35.0 + 0.5 * 17.0,
    );
    // Window 1 with a tie: equal losses keep the gate closed.
    let g2 = gating(
        &[1.0, 1.0, 3.0, 2.0, 2.0],
        1,
        &[Some(1.0), None, Some(9.0), None, None],
        0.5 * 19.0 + 0.5 * 10.0,
    );
    ok &= g1 && g2;
    report(
        3,
        "loss identities",
        ok,
        &format!("alpha=1 bit-equal {alpha_one}, perfect=0 {zero}, gating {}", g1 && g2),
    );
    ok
}

fn criterion_4_lstm_cell() -> bool {
    let mut worst = 0.0f64;
    let mut zero_ok = true;
    let mut rng = ChaCha8Rng::seed_from_u64(0xC4);
    for _ in 0..50 {
        let (input, n) = (rng.random_range(1..=6), rng.random_range(1..=8));
        let x = Matrix::from_fn(input, 1, |_, _| rng.random_range(-2.0..2.0));
        let h = Matrix::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
        let c = Matrix::from_fn(n, 1, |_, _| rng.random_range(-2.0..2.0));
        // all-zero weights: i = f = o = 0.5, g = 0
        let zero = LstmLayerParams::zeros(input, n);
        let (h2, c2) = lstm_cell_eval(&x, (&h, &c), &zero).unwrap();
        for j in 0..n {
            zero_ok &= (c2[j] - 0.5 * c[j]).abs() <= 1e-15 && (h2[j] - 0.5 * (0.5 * c[j]).tanh()).abs() <= 1e-15;
        }
        let params = LstmLayerParams {
            weight: Matrix::from_fn(4 * n, input + n, |_, _| rng.random_range(-1.5..1.5)),
            bias: Matrix::from_fn(4 * n, 1, |_, _| rng.random_range(-1.0..1.0)),
        };
        let (h2, c2) = lstm_cell_eval(&x, (&h, &c), &params).unwrap();
        let (oh, oc) = lstm_oracle(&params.weight, &params.bias, x.as_slice(), h.as_slice(), c.as_slice());
        for j in 0..n {
            worst = worst.max((h2[j] - oh[j]).abs()).max((c2[j] - oc[j]).abs());
        }
    }
    let pass = zero_ok && worst <= 1e-12;
    report(4, "lstm cell", pass, &format!("zero-weight {zero_ok}, 50 seeded cases worst {worst:.2e}"));
    pass
}

fn criterion_5_curriculum_ablation() -> bool {
    let start = Instant::now();
    let config = RunConfig::default();
    let seeds: Vec<u64> = (1..=10).collect();
    let alphas = [0.0, 0.25, 0.5, 0.75, 1.0];

    let mut a = 0;
    for &seed in &seeds {
        let sweep = alpha_sweep(&seeded_config(&config, seed), &alphas, config.sweep.epochs).unwrap();
        a += (sweep.worst_translation_alpha() == Some(0.0)) as usize;
    }
    let report_ab = ablate(&config, &AblationMode::ALL, &seeds).unwrap();
    let (mut b, mut c) = (0, 0);
    for &seed in &seeds {
        let cell = |m| report_ab.cell(m, seed).unwrap();
        let cur = cell(AblationMode::Curriculum).final_stage().held_out.segment_translation_pct;
        let fixed = cell(AblationMode::FixedBounded).final_stage().held_out.segment_translation_pct;
        b += (cur <= fixed) as usize;
        let anti = cell(AblationMode::AntiCurriculum).first_stage().validation_relative;
        let others = [AblationMode::Curriculum, AblationMode::FixedRelative, AblationMode::FixedBounded]
            .map(|m| cell(m).first_stage().validation_relative);
        c += others.iter().all(|o| anti >= *o) as usize;
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = a >= 8 && b >= 7 && c >= 7 && secs < 1800.0;
    report(
        5,
        "curriculum ablation",
        pass,
        &format!(
            "(a) alpha=0 worst {a}/10 need 8, (b) curriculum <= fixed-bounded {b}/10 need 7, (c) anti-curriculum worst first stage {c}/10 need 7, {secs:.0}s"
        ),
    );
    // experimental outcome: reported, never fatal
    true
}

fn criterion_6_evaluation_fixtures() -> bool {
    let line = |scale: f64| {
        Trajectory::new((0..=200).map(|i| Pose::from_translation(Vector3::new(scale * i as f64, 0.0, 0.0))).collect()).unwrap()
    };
    let lengths = [10.0, 25.0, 50.0, 100.0, 150.0];
    let scaled = segment_errors(&line(1.0), &line(1.1), &lengths).unwrap();
    let scaled_ok = scaled.lengths.len() == lengths.len()
        && scaled.lengths.iter().all(|l| (l.translation_pct - 10.0).abs() <= 0.1 && l.segments > 0);

    let mut rng = ChaCha8Rng::seed_from_u64(0xC6);
    let wander = |rng: &mut ChaCha8Rng| {
        let rels: Vec<Pose> = (0..120)
            .map(|_| {
                let v = [
                    rng.random_range(0.5..1.5),
                    rng.random_range(-0.2..0.2),
                    rng.random_range(-0.1..0.1),
                    rng.random_range(-0.05..0.05),
                    rng.random_range(-0.05..0.05),
                    rng.random_range(-0.2..0.2),
                ];
                Pose::from_vector6(&Vector6::from_row_slice(&v))
            })
            .collect();
        accumulate(&rels, Pose::identity())
    };
    let gt = wander(&mut rng);
    let est = wander(&mut rng);

    let same_seg = segment_errors(&gt, &gt, &[10.0, 40.0]).unwrap();
    let same_rpe = rpe(&gt, &gt).unwrap();
    let identical_ok = same_seg.lengths.iter().all(|l| l.translation_pct.abs() < 1e-12 && l.rotation_deg_per_m.abs() < 1e-12)
        && same_rpe.translation_pct.abs() < 1e-12
        && same_rpe.rotation_deg.abs() < 1e-6;

    // brute-force per-frame relative error on 4x4 matrices
    let mg: Vec<Matrix4<f64>> = gt.poses().iter().map(pose_oracle).collect();
    let me: Vec<Matrix4<f64>> = est.poses().iter().map(pose_oracle).collect();
    let (mut t_sum, mut r_sum) = (0.0, 0.0);
    for i in 0..mg.len() - 1 {
        let g = mg[i].try_inverse().unwrap() * mg[i + 1];
        let e = me[i].try_inverse().unwrap() * me[i + 1];
        let d = g.try_inverse().unwrap() * e;
        let step = g.fixed_view::<3, 1>(0, 3).norm();
        t_sum += d.fixed_view::<3, 1>(0, 3).norm() / step * 100.0;
        let cos = ((d[(0, 0)] + d[(1, 1)] + d[(2, 2)] - 1.0) / 2.0).clamp(-1.0, 1.0);
        r_sum += cos.acos().to_degrees();
    }
    let frames = (mg.len() - 1) as f64;
    let got = rpe(&gt, &est).unwrap();
    let rpe_diff = (got.translation_pct - t_sum / frames).abs().max((got.rotation_deg - r_sum / frames).abs());
    let rpe_ok = rpe_diff < 1e-9;

    let pass = scaled_ok && identical_ok && rpe_ok;
    report(
        6,
        "evaluation fixtures",
        pass,
        &format!("scaled line 10% {scaled_ok}, identical zero {identical_ok}, rpe brute-force diff {rpe_diff:.1e}"),
    );
    pass
}

fn tree_bytes(dir: &Path, rel: &str) -> Vec<(String, Vec<u8>)> {
    let mut names: Vec<_> = fs::read_dir(dir.join(rel)).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    names
        .into_iter()
        .map(|n| {
            let name = format!("{rel}/{}", n.to_string_lossy());
            let bytes = fs::read(dir.join(&name)).unwrap();
            (name, bytes)
        })
        .collect()
}

fn criterion_7_determinism() -> bool {
    let text = "[data]\npreset = walker\nsequences = 3\nlength = 40\n[model]\nlstm_sizes = 6\n\
                [curriculum]\nmax_epochs = 3\n[train]\nsamples_per_sequence = 2\nmin_length = 5\nmax_length = 8\n";
    let tmp = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let mut config = RunConfig::parse(text).unwrap();
        config.output_dir = Some(tmp.path().join(name));
        train(&config).unwrap();
        let dir = tmp.path().join(name);
        runs.push((fs::read(dir.join("runlog.csv")).unwrap(), tree_bytes(&dir, "checkpoints")));
    }
    let runlog_same = runs[0].0 == runs[1].0;
    let ckpt_same = runs[0].1 == runs[1].1 && runs[0].1.len() == 4;
    let pass = runlog_same && ckpt_same;
    report(
        7,
        "determinism",
        pass,
        &format!("runlog identical {runlog_same}, {} checkpoints identical {ckpt_same}", runs[0].1.len()),
    );
    pass
}

fn main() {
    let criteria: [fn() -> bool; 7] = [
        criterion_1_gradient_correctness,
        criterion_2_geometry_oracle,
        criterion_3_loss_identities,
        criterion_4_lstm_cell,
        criterion_5_curriculum_ablation,
        criterion_6_evaluation_fixtures,
        criterion_7_determinism,
    ];
    let fatal = criteria.iter().filter(|c| !c()).count();
    if fatal > 0 {
        std::process::exit(1);
    }
}
