//! Minimal reverse-mode automatic differentiation over dense `f64` arrays.
//!
//! Graphs are built per forward pass: every op records a backward closure
//! that scatters the output gradient into its parents. `backward` on the
//! same graph twice accumulates gradients exactly twice; callers reset
//! through the optimizer, which clears gradients after each step.

mod adam;
mod checkpoint;
mod gradcheck;
mod ops;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use gradcheck::{grad_check, GradCheckReport};

use std::cell::{Cell, Ref, RefCell};
use std::collections::{BTreeMap, HashSet};
use std::rc::Rc;

use rand::Rng;

use crate::error::{Error, Result};

thread_local! {
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

pub(crate) fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|c| c.get())
}

/// Disables graph construction inside `f` (for inference-only forwards).
pub fn no_grad<T>(f: impl FnOnce() -> T) -> T {
    let prev = GRAD_ENABLED.with(|c| c.replace(false));
    let out = f();
    GRAD_ENABLED.with(|c| c.set(prev));
    out
}

type BackwardFn = Box<dyn Fn(&[f64])>;

pub(crate) struct Inner {
    id: u64,
    shape: Vec<usize>,
    data: RefCell<Vec<f64>>,
    grad: RefCell<Option<Vec<f64>>>,
    parents: Vec<Tensor>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
}

/// A dense row-major `f64` array with an optional backprop record.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<Inner>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad)
            .finish()
    }
}

impl Tensor {
    fn new_inner(
        shape: Vec<usize>,
        data: Vec<f64>,
        parents: Vec<Tensor>,
        backward: Option<BackwardFn>,
        requires_grad: bool,
    ) -> Tensor {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            inner: Rc::new(Inner {
                id: next_id(),
                shape,
                data: RefCell::new(data),
                grad: RefCell::new(None),
                parents,
                backward,
                requires_grad,
            }),
        }
    }

    /// A constant (non-trainable) tensor.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Tensor {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape/data length mismatch"
        );
        Tensor::new_inner(shape.to_vec(), data, vec![], None, false)
    }

    /// A trainable tensor (participates in backward).
    pub fn param(shape: &[usize], data: Vec<f64>) -> Tensor {
        assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor::new_inner(shape.to_vec(), data, vec![], None, true)
    }

    pub fn scalar(x: f64) -> Tensor {
        Tensor::from_vec(&[1], vec![x])
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor::from_vec(shape, vec![0.0; shape.iter().product()])
    }

    /// Result of an op: keeps the graph only while grads are enabled and some
    /// parent needs them.
    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<f64>,
        parents: Vec<Tensor>,
        backward: impl Fn(&[f64]) + 'static,
    ) -> Tensor {
        let track = grad_enabled() && parents.iter().any(|p| p.inner.requires_grad);
        if track {
            Tensor::new_inner(shape, data, parents, Some(Box::new(backward)), true)
        } else {
            Tensor::new_inner(shape, data, vec![], None, false)
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn numel(&self) -> usize {
        self.inner.shape.iter().product()
    }

    pub fn data(&self) -> Ref<'_, Vec<f64>> {
        self.inner.data.borrow()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.inner.data.borrow().clone()
    }

    pub fn item(&self) -> f64 {
        assert_eq!(self.numel(), 1, "item() on non-scalar tensor");
        self.inner.data.borrow()[0]
    }

    /// Replaces the stored values (optimizer / finite-difference probes).
    pub fn set_data(&self, data: Vec<f64>) {
        assert_eq!(data.len(), self.numel());
        *self.inner.data.borrow_mut() = data;
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.grad.borrow().clone()
    }

    pub fn take_grad(&self) -> Option<Vec<f64>> {
        self.inner.grad.borrow_mut().take()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    /// Cuts the graph: same storage, no parents, non-trainable.
    pub fn detach(&self) -> Tensor {
        Tensor::from_vec(&self.inner.shape, self.to_vec())
    }

    pub(crate) fn accumulate_grad(&self, g: &[f64]) {
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(acc) => {
                for (a, b) in acc.iter_mut().zip(g) {
                    *a += b;
                }
            }
            None => *slot = Some(g.to_vec()),
        }
    }

    /// Reverse-mode sweep from a scalar loss. Gradients accumulate into every
    /// reachable tensor with `requires_grad`.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::Shape(
                format!("{:?}", self.shape()),
                "[1] (backward needs a scalar loss)".into(),
            ));
        }
        // iterative post-order over the parent DAG
        let mut order: Vec<Tensor> = Vec::new();
        let mut visited: HashSet<u64> = HashSet::new();
        let mut stack: Vec<(Tensor, usize)> = vec![(self.clone(), 0)];
        visited.insert(self.inner.id);
        while let Some((node, child)) = stack.pop() {
            if child < node.inner.parents.len() {
                let next = node.inner.parents[child].clone();
                stack.push((node, child + 1));
                if visited.insert(next.inner.id) {
                    stack.push((next, 0));
                }
            } else {
                order.push(node);
            }
        }
        self.accumulate_grad(&[1.0]);
        for node in order.iter().rev() {
            if let Some(back) = &node.inner.backward {
                // interior nodes hand their gradient off and reset; only
                // leaves (parameters) accumulate across sweeps
                let g = node.inner.grad.borrow_mut().take();
                if let Some(g) = g {
                    back(&g);
                }
            }
        }
        Ok(())
    }
}

/// Named map of trainable tensors with deterministic iteration order.
#[derive(Default)]
pub struct ParamStore {
    params: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, t: Tensor) {
        assert!(t.requires_grad(), "ParamStore holds trainable tensors only");
        let prev = self.params.insert(name.to_string(), t);
        assert!(prev.is_none(), "duplicate parameter name {name}");
    }

    pub fn get(&self, name: &str) -> &Tensor {
        self.params
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.params.iter()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Backward from `loss`; parameters the loss does not reach get zero grads.
    pub fn backward(&self, loss: &Tensor) -> Result<()> {
        loss.backward()?;
        for t in self.params.values() {
            if t.grad().is_none() {
                t.accumulate_grad(&vec![0.0; t.numel()]);
            }
        }
        Ok(())
    }

    pub fn zero_grads(&self) {
        for t in self.params.values() {
            t.zero_grad();
        }
    }

    /// Glorot-uniform initialized dense weight.
    pub fn init_dense(&mut self, name: &str, fan_in: usize, fan_out: usize, rng: &mut impl Rng) {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        self.insert(name, Tensor::param(&[fan_in, fan_out], data));
    }

    pub fn init_zeros(&mut self, name: &str, shape: &[usize]) {
        self.insert(
            name,
            Tensor::param(shape, vec![0.0; shape.iter().product()]),
        );
    }

    pub fn init_ones(&mut self, name: &str, shape: &[usize]) {
        self.insert(
            name,
            Tensor::param(shape, vec![1.0; shape.iter().product()]),
        );
    }
}
