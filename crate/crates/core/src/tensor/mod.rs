//! Dense row-major tensors with reverse-mode automatic differentiation.
//!
//! A `Tensor` is immutable once produced by an op; the only mutable part is
//! the gradient buffer of leaf tensors. Ops record their parents plus a
//! backward closure, so calling [`Tensor::backward`] on a scalar loss walks
//! the graph in reverse topological order and accumulates exact gradients
//! into every reachable leaf that has `requires_grad` set.

mod adam;
mod loss;
mod ops;

pub mod gradcheck;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{loss_bce, loss_bce_weighted, loss_mse, BCE_CLAMP_EPS};
pub use ops::{
    add, batch_norm, concat_last, conv1d, conv2d, dense, dropout, global_pool, max_axis,
    max_pool1d, mean_all, mean_axis, mul, relu, reshape, scale, sigmoid, sum_all, RunningStats,
};

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Error, Debug)]
pub enum TensorError {
    #[error("{op}: shape mismatch: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("backward requires a scalar loss, got {numel} elements")]
    NonScalarLoss { numel: usize },
    #[error("parameter '{name}' has no gradient; run backward() after a forward pass")]
    MissingGradient { name: String },
    #[error("{op}: {detail}")]
    Invalid { op: &'static str, detail: String },
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Train/inference switch for ops whose behaviour differs between the two
/// (batch norm statistics, dropout masking).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Padding policy for convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Valid,
    Same,
}

pub(crate) type BackwardFn<T> = Box<dyn Fn(&[T]) -> Vec<Option<Vec<T>>> + Send + Sync>;

pub(crate) struct Inner<T: Scalar> {
    shape: Vec<usize>,
    data: Arc<[T]>,
    requires_grad: bool,
    grad: Mutex<Option<Vec<T>>>,
    parents: Vec<Tensor<T>>,
    backward: Option<BackwardFn<T>>,
}

pub struct Tensor<T: Scalar> {
    inner: Arc<Inner<T>>,
}

impl<T: Scalar> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor {
            inner: Arc::clone(&self.inner),
        }
    }
}

impl<T: Scalar> std::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Tensor(shape={:?}, requires_grad={})",
            self.inner.shape, self.inner.requires_grad
        )
    }
}

fn check_finite<T: Scalar>(op: &'static str, values: &[T]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(TensorError::NonFinite { op })
    }
}

impl<T: Scalar> Tensor<T> {
    fn make(
        shape: Vec<usize>,
        data: Arc<[T]>,
        requires_grad: bool,
        parents: Vec<Tensor<T>>,
        backward: Option<BackwardFn<T>>,
    ) -> Self {
        Tensor {
            inner: Arc::new(Inner {
                shape,
                data,
                requires_grad,
                grad: Mutex::new(None),
                parents,
                backward,
            }),
        }
    }

    /// New leaf tensor. Errors if the shape does not match the value count or
    /// any value is non-finite.
    pub fn from_vec(values: Vec<T>, shape: &[usize]) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != values.len() {
            return Err(TensorError::ShapeMismatch {
                op: "from_vec",
                detail: format!("shape {:?} wants {} values, got {}", shape, numel, values.len()),
            });
        }
        check_finite("from_vec", &values)?;
        Ok(Self::make(shape.to_vec(), values.into(), false, vec![], None))
    }

    /// New leaf with `requires_grad` set; gradients accumulate here.
    pub fn leaf_with_grad(values: Vec<T>, shape: &[usize]) -> Result<Self> {
        let t = Self::from_vec(values, shape)?;
        Ok(Self::make(
            t.inner.shape.clone(),
            Arc::clone(&t.inner.data),
            true,
            vec![],
            None,
        ))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel: usize = shape.iter().product();
        Self::make(shape.to_vec(), vec![T::zero(); numel].into(), false, vec![], None)
    }

    pub fn scalar(v: T) -> Self {
        Self::make(vec![], vec![v].into(), false, vec![], None)
    }

    /// Op-result constructor: checks finiteness and drops the graph when no
    /// parent participates in differentiation.
    pub(crate) fn from_op(
        op: &'static str,
        values: Vec<T>,
        shape: Vec<usize>,
        parents: Vec<Tensor<T>>,
        backward: BackwardFn<T>,
    ) -> Result<Self> {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        check_finite(op, &values)?;
        if parents.iter().any(|p| p.inner.requires_grad) {
            Ok(Self::make(shape, values.into(), true, parents, Some(backward)))
        } else {
            Ok(Self::make(shape, values.into(), false, vec![], None))
        }
    }

    /// Same values viewed under a new shape, sharing storage.
    pub(crate) fn view(&self, op: &'static str, shape: Vec<usize>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return Err(TensorError::ShapeMismatch {
                op,
                detail: format!("cannot view {:?} as {:?}", self.shape(), shape),
            });
        }
        if self.inner.requires_grad {
            let src_shape = self.inner.shape.clone();
            let _ = &src_shape;
            Ok(Self::make(
                shape,
                Arc::clone(&self.inner.data),
                true,
                vec![self.clone()],
                Some(Box::new(move |g: &[T]| vec![Some(g.to_vec())])),
            ))
        } else {
            Ok(Self::make(shape, Arc::clone(&self.inner.data), false, vec![], None))
        }
    }

    /// Same values, cut loose from the graph and without `requires_grad`.
    /// Storage is shared, so this is O(1).
    pub fn detach(&self) -> Self {
        Self::make(
            self.inner.shape.clone(),
            Arc::clone(&self.inner.data),
            false,
            vec![],
            None,
        )
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn rank(&self) -> usize {
        self.inner.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.inner.data.len()
    }

    pub fn values(&self) -> &[T] {
        &self.inner.data
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.numel(), 1, "item() on non-scalar tensor");
        self.inner.data[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    /// Copy of the accumulated gradient, if any.
    pub fn grad(&self) -> Option<Vec<T>> {
        self.inner.grad.lock().expect("grad lock").clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.lock().expect("grad lock") = None;
    }

    fn node_id(&self) -> usize {
        Arc::as_ptr(&self.inner) as usize
    }

    /// Reverse-mode sweep from a scalar loss.
    ///
    /// Gradients accumulate (add) into leaf buffers across repeated calls;
    /// call [`Tensor::zero_grad`] on the leaves between steps.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(TensorError::NonScalarLoss { numel: self.numel() });
        }
        let order = self.topo_order();
        let mut flowing: HashMap<usize, Vec<T>> = HashMap::new();
        flowing.insert(self.node_id(), vec![T::one()]);

        for node in order.iter().rev() {
            let Some(gout) = flowing.remove(&node.node_id()) else {
                continue;
            };
            match &node.inner.backward {
                None => {
                    // Leaf: deposit into the tensor's own buffer.
                    if node.inner.requires_grad {
                        let mut slot = node.inner.grad.lock().expect("grad lock");
                        match slot.as_mut() {
                            Some(acc) => {
                                for (a, g) in acc.iter_mut().zip(&gout) {
                                    *a += *g;
                                }
                            }
                            None => *slot = Some(gout),
                        }
                    }
                }
                Some(back) => {
                    let contribs = back(&gout);
                    debug_assert_eq!(contribs.len(), node.inner.parents.len());
                    for (parent, contrib) in node.inner.parents.iter().zip(contribs) {
                        let Some(c) = contrib else { continue };
                        if !parent.inner.requires_grad {
                            continue;
                        }
                        debug_assert_eq!(c.len(), parent.numel());
                        match flowing.get_mut(&parent.node_id()) {
                            Some(acc) => {
                                for (a, g) in acc.iter_mut().zip(&c) {
                                    *a += *g;
                                }
                            }
                            None => {
                                flowing.insert(parent.node_id(), c);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Post-order over the requires-grad subgraph; deterministic for a given
    /// graph construction order, which keeps float accumulation reproducible.
    fn topo_order(&self) -> Vec<Tensor<T>> {
        enum Visit<T: Scalar> {
            Enter(Tensor<T>),
            Exit(Tensor<T>),
        }
        let mut order = Vec::new();
        let mut seen: HashSet<usize> = HashSet::new();
        let mut stack = vec![Visit::Enter(self.clone())];
        while let Some(step) = stack.pop() {
            match step {
                Visit::Enter(node) => {
                    if !seen.insert(node.node_id()) {
                        continue;
                    }
                    stack.push(Visit::Exit(node.clone()));
                    for parent in node.inner.parents.iter().rev() {
                        if parent.inner.requires_grad && !seen.contains(&parent.node_id()) {
                            stack.push(Visit::Enter(parent.clone()));
                        }
                    }
                }
                Visit::Exit(node) => order.push(node),
            }
        }
        order
    }
}

/// A named trainable tensor. Names are path-like (`frontend.conv3.weight`)
/// and unique within a model.
#[derive(Debug, Clone)]
pub struct Parameter<T: Scalar> {
    pub name: String,
    pub tensor: Tensor<T>,
}

impl<T: Scalar> Parameter<T> {
    pub fn new(name: impl Into<String>, values: Vec<T>, shape: &[usize]) -> Result<Self> {
        Ok(Parameter {
            name: name.into(),
            tensor: Tensor::leaf_with_grad(values, shape)?,
        })
    }

    pub fn numel(&self) -> usize {
        self.tensor.numel()
    }

    pub fn shape(&self) -> &[usize] {
        self.tensor.shape()
    }

    pub fn values(&self) -> &[T] {
        self.tensor.values()
    }

    /// Replace the value buffer (optimizer update); the fresh tensor has an
    /// empty gradient. Graphs recorded against the old values keep them alive
    /// until dropped.
    pub fn set_values(&mut self, values: Vec<T>) -> Result<()> {
        let shape = self.tensor.shape().to_vec();
        self.tensor = Tensor::leaf_with_grad(values, &shape)?;
        Ok(())
    }

    pub fn grad(&self) -> Option<Vec<T>> {
        self.tensor.grad()
    }

    pub fn zero_grad(&self) {
        self.tensor.zero_grad();
    }

    /// Tensor to feed into a forward pass: the live leaf when training (so
    /// gradients land here), a detached view when inferring (so no graph is
    /// recorded at all).
    pub fn active(&self, mode: Mode) -> Tensor<T> {
        match mode {
            Mode::Train => self.tensor.clone(),
            Mode::Infer => self.tensor.detach(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_count() {
        let r = Tensor::<f64>::from_vec(vec![1.0, 2.0], &[3]);
        assert!(matches!(r, Err(TensorError::ShapeMismatch { .. })));
    }

    #[test]
    fn from_vec_rejects_nan() {
        let r = Tensor::<f64>::from_vec(vec![1.0, f64::NAN], &[2]);
        assert!(matches!(r, Err(TensorError::NonFinite { .. })));
    }

    #[test]
    fn backward_on_sum_gives_ones() {
        let x = Tensor::<f64>::leaf_with_grad(vec![3.0, -1.0, 2.5], &[3]).unwrap();
        let loss = sum_all(&x).unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_on_sum_of_squares() {
        // loss = sum(x^2) at x=[1,2] -> grad [2,4]
        let x = Tensor::<f64>::leaf_with_grad(vec![1.0, 2.0], &[2]).unwrap();
        let sq = mul(&x, &x).unwrap();
        let loss = sum_all(&sq).unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 4.0]);
    }

    #[test]
    fn backward_requires_scalar() {
        let x = Tensor::<f64>::leaf_with_grad(vec![1.0, 2.0], &[2]).unwrap();
        let y = relu(&x).unwrap();
        assert!(matches!(y.backward(), Err(TensorError::NonScalarLoss { .. })));
    }

    #[test]
    fn repeated_backward_accumulates() {
        let x = Tensor::<f64>::leaf_with_grad(vec![1.0, 2.0], &[2]).unwrap();
        let loss = sum_all(&x).unwrap();
        loss.backward().unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 2.0]);
        x.zero_grad();
        assert!(x.grad().is_none());
    }

    #[test]
    fn shared_node_accumulates_once_per_path() {
        // y = x + x -> dy/dx = 2
        let x = Tensor::<f64>::leaf_with_grad(vec![4.0], &[1]).unwrap();
        let y = add(&x, &x).unwrap();
        let loss = sum_all(&y).unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0]);
    }

    #[test]
    fn detach_blocks_gradient_flow() {
        let x = Tensor::<f64>::leaf_with_grad(vec![1.0, 2.0], &[2]).unwrap();
        let d = x.detach();
        let loss = sum_all(&d).unwrap();
        loss.backward().unwrap();
        assert!(x.grad().is_none());
        assert!(!d.requires_grad());
    }
}
