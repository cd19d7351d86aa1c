//! Minimal dense-tensor reverse-mode automatic differentiation.
//!
//! Tensors are 64-bit float, dynamically shaped, and linked into a graph that
//! is rebuilt on every forward pass. `backward` walks the graph in reverse
//! topological order and accumulates gradients into `requires_grad` leaves.
//! Frozen tensors (requires_grad = false) never receive gradients, but
//! gradients flow *through* operations on them, so a trainable input feeding
//! a frozen encoder still trains.

mod adam;
mod checkpoint;
mod ops;

pub use adam::{Adam, AdamConfig, ParamGroup};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointEntry};
pub use ops::{concat, cosine_similarity, layernorm};
pub(crate) use ops::mm;

use crate::{Error, Result};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};

type BackwardFn = Box<dyn Fn(&[f64], &[bool]) -> Vec<Option<Vec<f64>>> + Send + Sync>;

pub(crate) struct OpRecord {
    pub(crate) parents: Vec<Tensor>,
    /// Maps (upstream gradient, per-parent wanted mask) to per-parent
    /// gradients; unwanted slots may be returned as `None`.
    pub(crate) backward: BackwardFn,
}

struct Inner {
    shape: Vec<usize>,
    data: RwLock<Vec<f64>>,
    requires_grad: bool,
    needs_grad: bool,
    grad: Mutex<Option<Vec<f64>>>,
    op: Option<OpRecord>,
}

/// Dense n-dimensional f64 tensor participating in a reverse-mode graph.
#[derive(Clone)]
pub struct Tensor {
    inner: Arc<Inner>,
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
        requires_grad: bool,
        op: Option<OpRecord>,
    ) -> Tensor {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let needs_grad =
            requires_grad || op.as_ref().is_some_and(|o| o.parents.iter().any(|p| p.inner.needs_grad));
        Tensor {
            inner: Arc::new(Inner {
                shape,
                data: RwLock::new(data),
                requires_grad,
                needs_grad,
                grad: Mutex::new(None),
                op,
            }),
        }
    }

    /// A constant (non-trainable) leaf.
    pub fn constant(shape: &[usize], data: Vec<f64>) -> Tensor {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "data length must match shape"
        );
        Tensor::new_inner(shape.to_vec(), data, false, None)
    }

    /// A trainable leaf.
    pub fn param(shape: &[usize], data: Vec<f64>) -> Tensor {
        assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor::new_inner(shape.to_vec(), data, true, None)
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor::constant(&[1], vec![v])
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor::constant(shape, vec![0.0; shape.iter().product()])
    }

    pub(crate) fn from_op(shape: Vec<usize>, data: Vec<f64>, op: OpRecord) -> Tensor {
        Tensor::new_inner(shape, data, false, Some(op))
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn numel(&self) -> usize {
        self.inner.shape.iter().product()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    /// True when this node is on a path from a trainable leaf.
    pub fn needs_grad(&self) -> bool {
        self.inner.needs_grad
    }

    pub fn value(&self) -> Vec<f64> {
        self.inner.data.read().unwrap().clone()
    }

    pub(crate) fn data(&self) -> std::sync::RwLockReadGuard<'_, Vec<f64>> {
        self.inner.data.read().unwrap()
    }

    /// Scalar extraction; panics on non-scalar tensors.
    pub fn item(&self) -> f64 {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape());
        self.inner.data.read().unwrap()[0]
    }

    /// Overwrites leaf data in place (used by the optimizer and by
    /// finite-difference probes). Graph nodes should never be mutated.
    pub fn set_data(&self, data: Vec<f64>) {
        assert_eq!(data.len(), self.numel());
        *self.inner.data.write().unwrap() = data;
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.grad.lock().unwrap().clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.lock().unwrap() = None;
    }

    /// Accumulates into the stored gradient (trainable leaves only).
    fn accumulate_grad(&self, g: &[f64]) {
        let mut guard = self.inner.grad.lock().unwrap();
        match guard.as_mut() {
            Some(existing) => {
                for (e, v) in existing.iter_mut().zip(g) {
                    *e += v;
                }
            }
            None => *guard = Some(g.to_vec()),
        }
    }

    fn id(&self) -> usize {
        Arc::as_ptr(&self.inner) as usize
    }

    /// Detaches from the graph: same values, no history.
    pub fn detach(&self) -> Tensor {
        Tensor::constant(&self.inner.shape.clone(), self.value())
    }
}

/// Runs reverse-mode differentiation from a scalar loss, accumulating
/// gradients into every reachable `requires_grad` leaf.
pub fn backward(loss: &Tensor) -> Result<()> {
    if loss.numel() != 1 {
        return Err(Error::InvalidArgument(format!(
            "backward requires a scalar loss, got shape {:?}",
            loss.shape()
        )));
    }
    if !loss.inner.needs_grad {
        return Ok(()); // nothing trainable reachable
    }

    // iterative post-order DFS over needs_grad nodes
    let mut topo: Vec<Tensor> = Vec::new();
    let mut visited: HashMap<usize, bool> = HashMap::new();
    let mut stack: Vec<(Tensor, bool)> = vec![(loss.clone(), false)];
    while let Some((node, expanded)) = stack.pop() {
        let id = node.id();
        if expanded {
            topo.push(node);
            continue;
        }
        if visited.contains_key(&id) {
            continue;
        }
        visited.insert(id, true);
        stack.push((node.clone(), true));
        if let Some(op) = &node.inner.op {
            for p in &op.parents {
                if p.inner.needs_grad && !visited.contains_key(&p.id()) {
                    stack.push((p.clone(), false));
                }
            }
        }
    }

    let mut grads: HashMap<usize, Vec<f64>> = HashMap::new();
    grads.insert(loss.id(), vec![1.0]);
    for node in topo.iter().rev() {
        let Some(g) = grads.remove(&node.id()) else {
            continue;
        };
        if node.inner.requires_grad {
            node.accumulate_grad(&g);
        }
        if let Some(op) = &node.inner.op {
            let wanted: Vec<bool> = op.parents.iter().map(|p| p.inner.needs_grad).collect();
            if !wanted.iter().any(|&w| w) {
                continue;
            }
            let parent_grads = (op.backward)(&g, &wanted);
            debug_assert_eq!(parent_grads.len(), op.parents.len());
            for (p, pg) in op.parents.iter().zip(parent_grads) {
                if !p.inner.needs_grad {
                    continue;
                }
                let pg = pg.expect("backward must produce a gradient for wanted parents");
                debug_assert_eq!(pg.len(), p.numel());
                match grads.get_mut(&p.id()) {
                    Some(acc) => {
                        for (a, v) in acc.iter_mut().zip(&pg) {
                            *a += v;
                        }
                    }
                    None => {
                        grads.insert(p.id(), pg);
                    }
                }
            }
        }
    }
    Ok(())
}

/// Named trainable tensor with a learning-rate group tag.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub tensor: Tensor,
    pub group: String,
}

impl Parameter {
    pub fn new(name: impl Into<String>, tensor: Tensor, group: impl Into<String>) -> Parameter {
        let param = Parameter {
            name: name.into(),
            tensor,
            group: group.into(),
        };
        assert!(param.tensor.requires_grad(), "parameter {} must be trainable", param.name);
        param
    }
}
