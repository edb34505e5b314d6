//! Stacked LSTM pose regressor.
//!
//! Each layer keeps a single stacked weight matrix of shape
//! `4n × (n_in + n)` whose row blocks are the input, forget, output and
//! candidate gates, in that order, applied to `[h_below; h_prev]`. A linear
//! head maps the top hidden state to a 6-DoF relative pose `(t, r)`.

use rand::{Rng, RngCore};

use crate::autodiff::{uniform_init, Bound, Matrix, ParamStore, Tape, Value};
use crate::error::TapeError;

pub const POSE_DIM: usize = 6;

#[derive(Clone, Debug, PartialEq)]
pub struct RegressorConfig {
    pub input_dim: usize,
    pub lstm_sizes: Vec<usize>,
    /// Width of an optional hidden tanh layer in the head; `None` for a single linear layer.
    pub head_hidden: Option<usize>,
    /// Inverted-dropout rate on hidden vectors passed between layers during training.
    pub dropout: f64,
}

impl RegressorConfig {
    pub fn new(input_dim: usize, lstm_sizes: Vec<usize>) -> Self {
        Self {
            input_dim,
            lstm_sizes,
            head_hidden: None,
            dropout: 0.0,
        }
    }

    pub fn output_dim(&self) -> usize {
        POSE_DIM
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.input_dim == 0 {
            return Err("input dimension must be positive".into());
        }
        if self.lstm_sizes.is_empty() || self.lstm_sizes.contains(&0) {
            return Err("lstm sizes must be a non-empty list of positive integers".into());
        }
        if self.head_hidden == Some(0) {
            return Err("head hidden width must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    fn layer_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else {
            self.lstm_sizes[layer - 1]
        }
    }
}

pub fn lstm_weight_name(layer: usize) -> String {
    format!("lstm{layer}.weight")
}

pub fn lstm_bias_name(layer: usize) -> String {
    format!("lstm{layer}.bias")
}

/// Weights and bias of one LSTM layer, as plain matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmLayerParams {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl LstmLayerParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            weight: Matrix::zeros(4 * hidden, input + hidden),
            bias: Matrix::zeros(4 * hidden, 1),
        }
    }

    pub fn hidden(&self) -> usize {
        self.bias.nrows() / 4
    }
}

/// Per-layer `(h, c)` column vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenState {
    pub layers: Vec<(Matrix, Matrix)>,
}

impl HiddenState {
    pub fn zeros(config: &RegressorConfig) -> Self {
        Self {
            layers: config
                .lstm_sizes
                .iter()
                .map(|&n| (Matrix::zeros(n, 1), Matrix::zeros(n, 1)))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|(h, c)| h.iter().chain(c.iter()).all(|x| x.is_finite()))
    }
}

/// Initializes all regressor parameters.
///
/// Weights are uniform in `±1/√fan_in`; biases are zero except the forget
/// gate, which starts at `forget_bias`.
pub fn init_params<R: Rng + ?Sized>(config: &RegressorConfig, forget_bias: f64, rng: &mut R) -> ParamStore {
    let mut store = ParamStore::new();
    for (l, &n) in config.lstm_sizes.iter().enumerate() {
        let fan_in = config.layer_input(l) + n;
        store.insert(lstm_weight_name(l), uniform_init(4 * n, fan_in, fan_in, rng));
        let mut bias = Matrix::zeros(4 * n, 1);
        bias.rows_mut(n, n).fill(forget_bias);
        store.insert(lstm_bias_name(l), bias);
    }
    let top = *config.lstm_sizes.last().expect("validated non-empty");
    match config.head_hidden {
        None => {
            store.insert("head.weight", uniform_init(POSE_DIM, top, top, rng));
            store.insert("head.bias", Matrix::zeros(POSE_DIM, 1));
        }
        Some(k) => {
            store.insert("head0.weight", uniform_init(k, top, top, rng));
            store.insert("head0.bias", Matrix::zeros(k, 1));
            store.insert("head1.weight", uniform_init(POSE_DIM, k, k, rng));
            store.insert("head1.bias", Matrix::zeros(POSE_DIM, 1));
        }
    }
    store
}

/// One LSTM step on the tape: returns `(h', c')`.
pub fn lstm_cell(
    tape: &mut Tape,
    x: Value,
    h: Value,
    c: Value,
    weight: Value,
    bias: Value,
) -> Result<(Value, Value), TapeError> {
    let n = h.shape().0;
    if weight.shape() != (4 * n, x.shape().0 + n) || bias.shape() != (4 * n, 1) || c.shape() != (n, 1) {
        return Err(TapeError::ShapeMismatch {
            op: "lstm_cell",
            left: weight.shape(),
            right: (4 * n, x.shape().0 + n),
        });
    }
    let z = tape.concat_rows(x, h)?;
    let pre = tape.matmul(weight, z)?;
    let pre = tape.add(pre, bias)?;
    let gates = tape.sigmoid(pre);
    let i = tape.slice_rows(gates, 0, n)?;
    let f = tape.slice_rows(gates, n, n)?;
    let o = tape.slice_rows(gates, 2 * n, n)?;
    let g_pre = tape.slice_rows(pre, 3 * n, n)?;
    let g = tape.tanh(g_pre);
    let fc = tape.mul_elementwise(f, c)?;
    let ig = tape.mul_elementwise(i, g)?;
    let c_next = tape.add(fc, ig)?;
    let tc = tape.tanh(c_next);
    let h_next = tape.mul_elementwise(o, tc)?;
    Ok((h_next, c_next))
}

/// Evaluates [`lstm_cell`] on plain matrices.
pub fn lstm_cell_eval(
    x: &Matrix,
    state: (&Matrix, &Matrix),
    params: &LstmLayerParams,
) -> Result<(Matrix, Matrix), TapeError> {
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let h = tape.leaf(state.0.clone());
    let c = tape.leaf(state.1.clone());
    let w = tape.leaf(params.weight.clone());
    let b = tape.leaf(params.bias.clone());
    let (h2, c2) = lstm_cell(&mut tape, xv, h, c, w, b)?;
    Ok((tape.data(h2).clone(), tape.data(c2).clone()))
}

/// Output of [`Regressor::forward`].
pub struct SequenceOutput {
    /// One `6 × 1` relative-pose estimate per time step.
    pub poses: Vec<Value>,
    pub final_state: HiddenState,
}

/// Maps a feature sequence to per-step relative poses.
#[derive(Clone, Debug)]
pub struct Regressor {
    config: RegressorConfig,
}

impl Regressor {
    pub fn new(config: RegressorConfig) -> Result<Self, String> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &RegressorConfig {
        &self.config
    }

    /// Runs the network over the rows of `features` (`T × input_dim`).
    ///
    /// Passing `dropout_rng` enables inverted dropout between layers when the
    /// configured rate is positive.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &Bound,
        features: &Matrix,
        initial: &HiddenState,
        mut dropout_rng: Option<&mut dyn RngCore>,
    ) -> Result<SequenceOutput, TapeError> {
        let cfg = &self.config;
        if features.ncols() != cfg.input_dim || features.nrows() == 0 {
            return Err(TapeError::ShapeMismatch {
                op: "forward_sequence",
                left: features.shape(),
                right: (features.nrows().max(1), cfg.input_dim),
            });
        }
        if initial.layers.len() != cfg.lstm_sizes.len() {
            return Err(TapeError::ShapeMismatch {
                op: "forward_sequence",
                left: (initial.layers.len(), 0),
                right: (cfg.lstm_sizes.len(), 0),
            });
        }
        let weights: Vec<(Value, Value)> = (0..cfg.lstm_sizes.len())
            .map(|l| Ok((params.get(&lstm_weight_name(l))?, params.get(&lstm_bias_name(l))?)))
            .collect::<Result<_, TapeError>>()?;
        let head: Vec<(Value, Value)> = match cfg.head_hidden {
            None => vec![(params.get("head.weight")?, params.get("head.bias")?)],
            Some(_) => vec![
                (params.get("head0.weight")?, params.get("head0.bias")?),
                (params.get("head1.weight")?, params.get("head1.bias")?),
            ],
        };

        let mut state: Vec<(Value, Value)> = initial
            .layers
            .iter()
            .map(|(h, c)| (tape.leaf(h.clone()), tape.leaf(c.clone())))
            .collect();
        let mut poses = Vec::with_capacity(features.nrows());
        for row in features.row_iter() {
            let mut x = tape.column(row.transpose().as_slice());
            for (l, (w, b)) in weights.iter().enumerate() {
                if l > 0 && cfg.dropout > 0.0 {
                    if let Some(rng) = dropout_rng.as_deref_mut() {
                        x = tape.dropout(x, cfg.dropout, rng);
                    }
                }
                let (h, c) = lstm_cell(tape, x, state[l].0, state[l].1, *w, *b)?;
                state[l] = (h, c);
                x = h;
            }
            for (k, (w, b)) in head.iter().enumerate() {
                let y = tape.matmul(*w, x)?;
                x = tape.add(y, *b)?;
                if k + 1 < head.len() {
                    x = tape.tanh(x);
                }
            }
            poses.push(x);
        }
        let final_state = HiddenState {
            layers: state
                .iter()
                .map(|(h, c)| (tape.data(*h).clone(), tape.data(*c).clone()))
                .collect(),
        };
        Ok(SequenceOutput { poses, final_state })
    }

    /// Forward pass without gradient bookkeeping; returns a `T × 6` matrix.
    pub fn predict(
        &self,
        params: &ParamStore,
        features: &Matrix,
        initial: &HiddenState,
    ) -> Result<(Matrix, HiddenState), TapeError> {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let out = self.forward(&mut tape, &bound, features, initial, None)?;
        let mut m = Matrix::zeros(out.poses.len(), POSE_DIM);
        for (t, v) in out.poses.iter().enumerate() {
            m.row_mut(t).copy_from(&tape.data(*v).transpose());
        }
        Ok((m, out.final_state))
    }
}
