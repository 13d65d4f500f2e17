//! Dense 2-D f64 tensors with a reverse-mode tape.
//!
//! Every value on a [`Tape`] is a row-major matrix; vectors are `1 x n` or
//! `n x 1`. Parameters live in a [`ParamStore`] and are borrowed by the tape,
//! so one store can back many concurrent tapes. [`Tape::backward`] returns
//! [`Gradients`], which the caller folds into the store in a fixed order.

mod adam;
mod kernels;
mod tape;

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use adam::AdamState;
pub use tape::{Tape, Var};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape { op: &'static str, left: (usize, usize), right: (usize, usize) },
    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },
    #[error("backward requires a 1x1 loss, got {0:?}")]
    NonScalarLoss((usize, usize)),
    #[error("backward already ran on this tape")]
    AlreadyReleased,
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("parameter `{0}` has no gradient")]
    MissingGrad(String),
    #[error("finite-difference step must be positive and finite, got {0}")]
    BadEpsilon(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()], grad: None }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "tensor data length");
        Tensor { shape: shape.to_vec(), data, grad: None }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(rows, cols)`; 1-D tensors are row vectors.
    pub fn matrix_shape(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [] => (1, 1),
            [n] => (1, *n),
            [r, c] => (*r, *c),
            s => (s[..s.len() - 1].iter().product(), s[s.len() - 1]),
        }
    }
}

/// Named parameters, iterated in name order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    params: BTreeMap<String, Tensor>,
    pub seed: u64,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        ParamStore { params: BTreeMap::new(), seed }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        let name = name.into();
        assert!(!self.params.contains_key(&name), "duplicate parameter {name}");
        self.params.insert(name, t);
    }

    /// Uniform(-a, a) with `a = sqrt(6 / (fan_in + fan_out))`.
    pub fn insert_xavier(&mut self, name: impl Into<String>, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-a..=a)).collect();
        self.insert(name, Tensor::from_vec(&[fan_in, fan_out], data));
    }

    pub fn insert_filled(&mut self, name: impl Into<String>, shape: &[usize], value: f64) {
        let n = shape.iter().product();
        self.insert(name, Tensor::from_vec(shape, vec![value; n]));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    /// Sets every gradient to zeros.
    pub fn zero_grad(&mut self) {
        for t in self.params.values_mut() {
            t.grad = Some(vec![0.0; t.data.len()]);
        }
    }

    pub fn clear_grad(&mut self) {
        for t in self.params.values_mut() {
            t.grad = None;
        }
    }

    /// Adds `scale * g` into the stored gradients (created as zeros if absent).
    pub fn accumulate(&mut self, g: &Gradients, scale: f64) -> Result<(), TensorError> {
        for (name, grad) in &g.0 {
            let t = self.params.get_mut(name).ok_or_else(|| TensorError::UnknownParam(name.clone()))?;
            let dst = t.grad.get_or_insert_with(|| vec![0.0; t.data.len()]);
            for (d, s) in dst.iter_mut().zip(grad) {
                *d += scale * s;
            }
        }
        Ok(())
    }

    /// Sets every parameter to `value`; used for degenerate-model checks.
    pub fn fill(&mut self, value: f64) {
        for t in self.params.values_mut() {
            t.data.iter_mut().for_each(|x| *x = value);
        }
    }
}

/// Per-parameter gradients from one backward pass, keyed by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients(pub BTreeMap<String, Vec<f64>>);

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.0.get(name).map(Vec::as_slice)
    }

    /// Adds `other` into `self`.
    pub fn add_assign(&mut self, other: &Gradients) {
        for (k, v) in &other.0 {
            match self.0.get_mut(k) {
                Some(dst) => dst.iter_mut().zip(v).for_each(|(d, s)| *d += s),
                None => {
                    self.0.insert(k.clone(), v.clone());
                }
            }
        }
    }
}

/// Central-difference gradient of `f` at `store` for every parameter
/// coordinate: `(f(x + eps) - f(x - eps)) / (2 eps)`.
pub fn finite_diff_grad(
    f: impl Fn(&ParamStore) -> f64,
    store: &ParamStore,
    eps: f64,
) -> Result<Gradients, TensorError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(TensorError::BadEpsilon(eps));
    }
    let mut work = store.clone();
    let mut out = BTreeMap::new();
    let names: Vec<String> = store.params.keys().cloned().collect();
    for name in names {
        let n = store.params[&name].len();
        let mut g = vec![0.0; n];
        for (i, gi) in g.iter_mut().enumerate() {
            let x = store.params[&name].data[i];
            work.params.get_mut(&name).unwrap().data[i] = x + eps;
            let up = f(&work);
            work.params.get_mut(&name).unwrap().data[i] = x - eps;
            let down = f(&work);
            work.params.get_mut(&name).unwrap().data[i] = x;
            *gi = (up - down) / (2.0 * eps);
        }
        out.insert(name, g);
    }
    Ok(Gradients(out))
}

/// `x - logsumexp(x)`, exactly as [`Tape::log_softmax`] computes it.
pub fn log_softmax_values(x: &[f64]) -> Vec<f64> {
    let lse = kernels::log_sum_exp(x);
    x.iter().map(|v| v - lse).collect()
}

/// `-log softmax(logits)[target]` by log-sum-exp, without a tape.
pub fn cross_entropy_value(logits: &[f64], target: usize) -> Result<f64, TensorError> {
    if target >= logits.len() {
        return Err(TensorError::Index { index: target, len: logits.len() });
    }
    Ok(kernels::log_sum_exp(logits) - logits[target])
}
