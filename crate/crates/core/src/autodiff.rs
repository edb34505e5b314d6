//! Reverse-mode differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation in execution order; [`Value`] is a
//! cheap handle into it. [`Tape::backward`] walks the tape in reverse and
//! returns a [`Gradients`] table. Computations whose derivatives are known
//! in closed form (the SE(3) composition chain) enter the tape through
//! [`Tape::external`] or [`Tape::inject_external_gradient`].

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::TapeError;

pub type Matrix = DMatrix<f64>;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Value {
    id: usize,
    rows: usize,
    cols: usize,
}

impl Value {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    AddRowBias(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    ConcatRows(usize, usize),
    SliceRows { src: usize, start: usize },
    Sigmoid(usize),
    Tanh(usize),
    Square(usize),
    Sum(usize),
    Scale(usize, f64),
    /// Output with known Jacobians w.r.t. each input (column-major flattening).
    External { inputs: Vec<usize>, jacobians: Vec<Matrix> },
}

#[derive(Clone, Debug)]
struct Node {
    data: Matrix,
    op: Op,
}

#[derive(Default, Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    injected: Vec<(usize, Matrix)>,
}

fn check_same(op: &'static str, a: Value, b: Value) -> Result<(), TapeError> {
    if a.shape() != b.shape() {
        return Err(TapeError::ShapeMismatch {
            op,
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(())
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, data: Matrix, op: Op) -> Value {
        let value = Value {
            id: self.nodes.len(),
            rows: data.nrows(),
            cols: data.ncols(),
        };
        self.nodes.push(Node { data, op });
        value
    }

    /// A differentiable input (parameter or constant alike).
    pub fn leaf(&mut self, data: Matrix) -> Value {
        self.push(data, Op::Leaf)
    }

    pub fn scalar(&mut self, x: f64) -> Value {
        self.leaf(Matrix::from_element(1, 1, x))
    }

    pub fn column(&mut self, xs: &[f64]) -> Value {
        self.leaf(Matrix::from_column_slice(xs.len(), 1, xs))
    }

    pub fn data(&self, v: Value) -> &Matrix {
        &self.nodes[v.id].data
    }

    pub fn scalar_value(&self, v: Value) -> f64 {
        self.nodes[v.id].data[(0, 0)]
    }

    pub fn matmul(&mut self, a: Value, b: Value) -> Result<Value, TapeError> {
        if a.cols != b.rows {
            return Err(TapeError::ShapeMismatch {
                op: "matmul",
                left: a.shape(),
                right: b.shape(),
            });
        }
        let data = self.data(a) * self.data(b);
        Ok(self.push(data, Op::MatMul(a.id, b.id)))
    }

    pub fn add(&mut self, a: Value, b: Value) -> Result<Value, TapeError> {
        check_same("add", a, b)?;
        let data = self.data(a) + self.data(b);
        Ok(self.push(data, Op::Add(a.id, b.id)))
    }

    /// Adds a `1 × cols` bias to every row of `a`.
    pub fn add_row_bias(&mut self, a: Value, bias: Value) -> Result<Value, TapeError> {
        if bias.rows != 1 || bias.cols != a.cols {
            return Err(TapeError::ShapeMismatch {
                op: "add_row_bias",
                left: a.shape(),
                right: bias.shape(),
            });
        }
        let mut data = self.data(a).clone();
        let b = self.data(bias).clone();
        for mut row in data.row_iter_mut() {
            row += &b;
        }
        Ok(self.push(data, Op::AddRowBias(a.id, bias.id)))
    }

    pub fn sub(&mut self, a: Value, b: Value) -> Result<Value, TapeError> {
        check_same("sub", a, b)?;
        let data = self.data(a) - self.data(b);
        Ok(self.push(data, Op::Sub(a.id, b.id)))
    }

    pub fn mul_elementwise(&mut self, a: Value, b: Value) -> Result<Value, TapeError> {
        check_same("mul_elementwise", a, b)?;
        let data = self.data(a).component_mul(self.data(b));
        Ok(self.push(data, Op::Mul(a.id, b.id)))
    }

    /// Stacks `a` on top of `b`.
    pub fn concat_rows(&mut self, a: Value, b: Value) -> Result<Value, TapeError> {
        if a.cols != b.cols {
            return Err(TapeError::ShapeMismatch {
                op: "concat_rows",
                left: a.shape(),
                right: b.shape(),
            });
        }
        let mut data = Matrix::zeros(a.rows + b.rows, a.cols);
        data.rows_mut(0, a.rows).copy_from(self.data(a));
        data.rows_mut(a.rows, b.rows).copy_from(self.data(b));
        Ok(self.push(data, Op::ConcatRows(a.id, b.id)))
    }

    pub fn slice_rows(&mut self, a: Value, start: usize, len: usize) -> Result<Value, TapeError> {
        if start + len > a.rows {
            return Err(TapeError::ShapeMismatch {
                op: "slice_rows",
                left: a.shape(),
                right: (start + len, a.cols),
            });
        }
        let data = self.data(a).rows(start, len).into_owned();
        Ok(self.push(data, Op::SliceRows { src: a.id, start }))
    }

    pub fn sigmoid(&mut self, a: Value) -> Value {
        let data = self.data(a).map(sigmoid);
        self.push(data, Op::Sigmoid(a.id))
    }

    pub fn tanh(&mut self, a: Value) -> Value {
        let data = self.data(a).map(f64::tanh);
        self.push(data, Op::Tanh(a.id))
    }

    pub fn square(&mut self, a: Value) -> Value {
        let data = self.data(a).map(|x| x * x);
        self.push(data, Op::Square(a.id))
    }

    pub fn sum(&mut self, a: Value) -> Value {
        let s = self.data(a).iter().sum::<f64>();
        self.push(Matrix::from_element(1, 1, s), Op::Sum(a.id))
    }

    pub fn scale(&mut self, a: Value, c: f64) -> Value {
        let data = self.data(a) * c;
        self.push(data, Op::Scale(a.id, c))
    }

    /// Inverted dropout: zeroes entries with probability `rate` and rescales the rest.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Value, rate: f64, rng: &mut R) -> Value {
        if rate <= 0.0 {
            return a;
        }
        let keep = 1.0 - rate;
        let mask = Matrix::from_fn(a.rows, a.cols, |_, _| {
            if rng.random::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        let m = self.leaf(mask);
        self.mul_elementwise(a, m).expect("mask has the input's shape")
    }

    /// Records a node whose forward value was computed elsewhere.
    ///
    /// `jacobians[i]` has shape `(output.len(), inputs[i].len())` and relates
    /// column-major flattened entries. During backward the adjoint of each
    /// input receives `Jᵢᵀ · adjoint(output)`.
    pub fn external(
        &mut self,
        inputs: &[Value],
        output: Matrix,
        jacobians: Vec<Matrix>,
    ) -> Result<Value, TapeError> {
        let out_len = output.len();
        if jacobians.len() != inputs.len() {
            return Err(TapeError::ShapeMismatch {
                op: "external",
                left: (inputs.len(), 0),
                right: (jacobians.len(), 0),
            });
        }
        for (v, j) in inputs.iter().zip(&jacobians) {
            if j.nrows() != out_len || j.ncols() != v.rows * v.cols {
                return Err(TapeError::ShapeMismatch {
                    op: "external",
                    left: (out_len, v.rows * v.cols),
                    right: j.shape(),
                });
            }
        }
        let op = Op::External {
            inputs: inputs.iter().map(|v| v.id).collect(),
            jacobians,
        };
        Ok(self.push(output, op))
    }

    /// Adds `upstream` to the adjoint of `v` at the start of the next backward pass.
    pub fn inject_external_gradient(&mut self, v: Value, upstream: Matrix) -> Result<(), TapeError> {
        if upstream.shape() != v.shape() {
            return Err(TapeError::ShapeMismatch {
                op: "inject_external_gradient",
                left: v.shape(),
                right: upstream.shape(),
            });
        }
        self.injected.push((v.id, upstream));
        Ok(())
    }

    /// Propagates adjoints from a scalar `loss` back through the tape.
    pub fn backward(&self, loss: Value) -> Result<Gradients, TapeError> {
        if loss.shape() != (1, 1) {
            return Err(TapeError::NonScalarLoss(loss.shape()));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.id] = Some(Matrix::from_element(1, 1, 1.0));
        let top = self
            .injected
            .iter()
            .map(|(id, _)| *id)
            .chain(std::iter::once(loss.id))
            .max()
            .unwrap_or(loss.id);
        for (id, g) in &self.injected {
            accumulate(&mut grads, *id, g.clone());
        }

        for id in (0..=top).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let da = &g * self.nodes[*b].data.transpose();
                    let db = self.nodes[*a].data.transpose() * &g;
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::AddRowBias(a, b) => {
                    let db = Matrix::from_row_slice(1, g.ncols(), g.row_sum().as_slice());
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, db);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, -&g);
                }
                Op::Mul(a, b) => {
                    let da = g.component_mul(&self.nodes[*b].data);
                    let db = g.component_mul(&self.nodes[*a].data);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::ConcatRows(a, b) => {
                    let ra = self.nodes[*a].data.nrows();
                    let rb = self.nodes[*b].data.nrows();
                    accumulate(&mut grads, *a, g.rows(0, ra).into_owned());
                    accumulate(&mut grads, *b, g.rows(ra, rb).into_owned());
                }
                Op::SliceRows { src, start } => {
                    let s = &self.nodes[*src].data;
                    let mut full = Matrix::zeros(s.nrows(), s.ncols());
                    full.rows_mut(*start, g.nrows()).copy_from(&g);
                    accumulate(&mut grads, *src, full);
                }
                Op::Sigmoid(a) => {
                    let d = node.data.map(|y| y * (1.0 - y));
                    accumulate(&mut grads, *a, g.component_mul(&d));
                }
                Op::Tanh(a) => {
                    let d = node.data.map(|y| 1.0 - y * y);
                    accumulate(&mut grads, *a, g.component_mul(&d));
                }
                Op::Square(a) => {
                    let d = &self.nodes[*a].data * 2.0;
                    accumulate(&mut grads, *a, g.component_mul(&d));
                }
                Op::Sum(a) => {
                    let s = &self.nodes[*a].data;
                    accumulate(&mut grads, *a, Matrix::from_element(s.nrows(), s.ncols(), g[(0, 0)]));
                }
                Op::Scale(a, c) => {
                    accumulate(&mut grads, *a, &g * *c);
                }
                Op::External { inputs, jacobians } => {
                    let flat = Matrix::from_column_slice(g.len(), 1, g.as_slice());
                    for (input, jac) in inputs.iter().zip(jacobians) {
                        let s = &self.nodes[*input].data;
                        let d = jac.transpose() * &flat;
                        accumulate(
                            &mut grads,
                            *input,
                            Matrix::from_column_slice(s.nrows(), s.ncols(), d.as_slice()),
                        );
                    }
                }
            }
            if matches!(node.op, Op::Leaf) {
                grads[id] = Some(g);
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Matrix>], id: usize, g: Matrix) {
    match &mut grads[id] {
        Some(existing) => *existing += g,
        slot @ None => *slot = Some(g),
    }
}

/// Adjoints of the leaves reached by a backward pass.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient w.r.t. a leaf; zeros when the loss does not depend on it.
    pub fn wrt(&self, v: Value) -> Matrix {
        self.grads
            .get(v.id)
            .and_then(|g| g.clone())
            .unwrap_or_else(|| Matrix::zeros(v.rows, v.cols))
    }

    pub fn get(&self, v: Value) -> Option<&Matrix> {
        self.grads.get(v.id).and_then(|g| g.as_ref())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub value: Matrix,
    pub grad: Matrix,
    pub first_moment: Matrix,
    pub second_moment: Matrix,
    pub step: u64,
}

impl Parameter {
    pub fn new(value: Matrix) -> Self {
        let (r, c) = value.shape();
        Self {
            value,
            grad: Matrix::zeros(r, c),
            first_moment: Matrix::zeros(r, c),
            second_moment: Matrix::zeros(r, c),
            step: 0,
        }
    }
}

/// Named trainable matrices with their Adam state. Iteration is in name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Parameter>,
}

/// Tape handles for every parameter of a [`ParamStore`] bound to one tape.
#[derive(Clone, Debug)]
pub struct Bound {
    handles: BTreeMap<String, Value>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Result<Value, TapeError> {
        self.handles
            .get(name)
            .copied()
            .ok_or_else(|| TapeError::UnknownParameter(name.to_string()))
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) {
        self.params.insert(name.into(), Parameter::new(value));
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.params.get(name).map(|p| &p.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.params.get_mut(name).map(|p| &mut p.value)
    }

    pub fn parameter(&self, name: &str) -> Option<&Parameter> {
        self.params.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.params.iter().map(|(k, p)| (k.as_str(), &p.value))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    /// Places every parameter on `tape` as a leaf.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        let handles = self
            .params
            .iter()
            .map(|(k, p)| (k.clone(), tape.leaf(p.value.clone())))
            .collect();
        Bound { handles }
    }

    /// Adds the gradients found for `bound` into each parameter's `grad`.
    pub fn accumulate_grads(&mut self, grads: &Gradients, bound: &Bound) {
        for (name, p) in self.params.iter_mut() {
            if let Some(v) = bound.handles.get(name) {
                if let Some(g) = grads.get(*v) {
                    p.grad += g;
                }
            }
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.params
            .values()
            .map(|p| p.grad.norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales all gradients so their global L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            let s = max_norm / norm;
            for p in self.params.values_mut() {
                p.grad *= s;
            }
        }
        norm
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.values_mut() {
            p.grad.fill(0.0);
        }
    }

    /// One bias-corrected Adam update per parameter, then zeroes the gradients.
    pub fn adam_step(&mut self, lr: f64, cfg: AdamConfig) {
        for p in self.params.values_mut() {
            p.step += 1;
            let t = p.step as i32;
            let bc1 = 1.0 - cfg.beta1.powi(t);
            let bc2 = 1.0 - cfg.beta2.powi(t);
            p.first_moment
                .zip_apply(&p.grad, |m, g| *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g);
            p.second_moment
                .zip_apply(&p.grad, |v, g| *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g);
            let (m, v) = (&p.first_moment, &p.second_moment);
            for ((x, m), v) in p.value.iter_mut().zip(m.iter()).zip(v.iter()) {
                let m_hat = m / bc1;
                let v_hat = v / bc2;
                *x -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
            p.grad.fill(0.0);
        }
    }
}

/// Uniform `[-k, k]` initialization with `k = 1/√fan_in`.
pub fn uniform_init<R: Rng + ?Sized>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> Matrix {
    let k = 1.0 / (fan_in.max(1) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-k..=k))
}
