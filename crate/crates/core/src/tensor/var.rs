//! Reverse-mode automatic differentiation.
//!
//! A [`Var`] is a reference-counted node holding a value, an optional
//! gradient slot, and (for non-leaves) the operation that produced it. The
//! graph is the DAG reachable through parent links. Nodes receive a
//! monotonically increasing id at creation, so sorting by id is a
//! topological order: every parent is created before its children.
//!
//! Operations whose inputs do not require gradients record nothing, which
//! makes inference free of graph memory.

use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

use super::array::{Real, Tensor};
use crate::error::{Error, Result};

/// Computes parent gradients from the output gradient. The flags say which
/// parents need one; entries for other parents may be `None`.
pub(crate) type BackwardFn<T> = Box<dyn Fn(&Tensor<T>, &[bool]) -> Vec<Option<Tensor<T>>>>;

struct Op<T: Real> {
    name: &'static str,
    parents: Vec<Var<T>>,
    backward: BackwardFn<T>,
}

struct Node<T: Real> {
    id: u64,
    value: Tensor<T>,
    requires_grad: bool,
    grad: RefCell<Option<Tensor<T>>>,
    op: Option<Op<T>>,
}

thread_local! {
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
    static CORRUPTED_OP: Cell<Option<&'static str>> = const { Cell::new(None) };
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Runs `f` with graph recording disabled on the current thread: results
/// are constants even when inputs require gradients.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            GRAD_ENABLED.with(|g| g.set(self.0));
        }
    }
    let _restore = Restore(GRAD_ENABLED.with(|g| g.replace(false)));
    f()
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

/// Test hook: scales the adjoint of every op named `op` by 1.25 on the
/// current thread, so gradient checks can demonstrate they catch a bad
/// backward pass. `None` restores normal behaviour.
#[doc(hidden)]
pub fn corrupt_adjoint(op: Option<&'static str>) {
    CORRUPTED_OP.with(|c| c.set(op));
}

/// Differentiable tensor handle. Cloning is cheap and shares the node.
pub struct Var<T: Real>(Rc<Node<T>>);

impl<T: Real> Clone for Var<T> {
    fn clone(&self) -> Self {
        Var(Rc::clone(&self.0))
    }
}

impl<T: Real> fmt::Debug for Var<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.0.id)
            .field("op", &self.0.op.as_ref().map(|o| o.name))
            .field("requires_grad", &self.0.requires_grad)
            .field("value", &self.0.value)
            .finish()
    }
}

impl<T: Real> Var<T> {
    /// Leaf that takes part in differentiation.
    pub fn param(value: Tensor<T>) -> Self {
        Self::leaf(value, true)
    }

    /// Leaf treated as a constant.
    pub fn constant(value: Tensor<T>) -> Self {
        Self::leaf(value, false)
    }

    pub fn leaf(value: Tensor<T>, requires_grad: bool) -> Self {
        Var(Rc::new(Node {
            id: next_id(),
            value,
            requires_grad,
            grad: RefCell::new(None),
            op: None,
        }))
    }

    pub(crate) fn from_op(name: &'static str, value: Tensor<T>, parents: Vec<Var<T>>, backward: BackwardFn<T>) -> Self {
        let requires_grad = GRAD_ENABLED.with(|g| g.get()) && parents.iter().any(|p| p.requires_grad());
        let op = requires_grad.then(|| Op {
            name,
            parents,
            backward,
        });
        Var(Rc::new(Node {
            id: next_id(),
            value,
            requires_grad,
            grad: RefCell::new(None),
            op,
        }))
    }

    pub fn value(&self) -> &Tensor<T> {
        &self.0.value
    }

    pub fn shape(&self) -> &[usize] {
        self.0.value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn op_name(&self) -> Option<&'static str> {
        self.0.op.as_ref().map(|o| o.name)
    }

    /// Accumulated gradient of a leaf; zeros when backward never reached it.
    pub fn grad(&self) -> Tensor<T> {
        self.0
            .grad
            .borrow()
            .clone()
            .unwrap_or_else(|| Tensor::zeros(self.shape()))
    }

    pub fn has_grad(&self) -> bool {
        self.0.grad.borrow().is_some()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// Detached copy of the value as a constant leaf.
    pub fn detach(&self) -> Self {
        Self::constant(self.0.value.clone())
    }

    /// Names of every operation in the graph that produced this value.
    pub fn graph_ops(&self) -> std::collections::BTreeSet<&'static str> {
        let mut names = std::collections::BTreeSet::new();
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(v) = stack.pop() {
            if !seen.insert(v.0.id) {
                continue;
            }
            if let Some(op) = &v.0.op {
                names.insert(op.name);
                stack.extend(op.parents.iter().cloned());
            }
        }
        names
    }

    /// Back-propagates from a scalar loss into every reachable leaf that
    /// requires gradients. Leaf gradients accumulate across calls.
    pub fn backward(&self) -> Result<()> {
        if self.value().numel() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Ok(());
        }

        // Collect the differentiable subgraph.
        let mut nodes: Vec<Var<T>> = Vec::new();
        let mut seen: HashMap<u64, ()> = HashMap::new();
        let mut stack = vec![self.clone()];
        while let Some(v) = stack.pop() {
            if seen.insert(v.0.id, ()).is_some() {
                continue;
            }
            if let Some(op) = &v.0.op {
                for p in &op.parents {
                    if p.requires_grad() && !seen.contains_key(&p.0.id) {
                        stack.push(p.clone());
                    }
                }
            }
            nodes.push(v);
        }
        nodes.sort_unstable_by_key(|v| std::cmp::Reverse(v.0.id));

        let corrupted = CORRUPTED_OP.with(|c| c.get());
        let mut pending: HashMap<u64, Tensor<T>> = HashMap::new();
        pending.insert(self.0.id, Tensor::full(self.shape(), T::one()));

        for v in nodes {
            let Some(g) = pending.remove(&v.0.id) else {
                continue;
            };
            match &v.0.op {
                None => {
                    let mut slot = v.0.grad.borrow_mut();
                    match slot.as_mut() {
                        Some(acc) => acc.add_assign(&g),
                        None => *slot = Some(g),
                    }
                }
                Some(op) => {
                    let needs: Vec<bool> = op.parents.iter().map(|p| p.requires_grad()).collect();
                    let grads = (op.backward)(&g, &needs);
                    debug_assert_eq!(grads.len(), op.parents.len(), "op {}", op.name);
                    for ((parent, grad), need) in op.parents.iter().zip(grads).zip(needs) {
                        let Some(mut grad) = grad else { continue };
                        if !need {
                            continue;
                        }
                        debug_assert_eq!(grad.shape(), parent.shape(), "op {}", op.name);
                        if corrupted == Some(op.name) {
                            grad = grad.map(|x| x * T::of(1.25));
                        }
                        match pending.get_mut(&parent.0.id) {
                            Some(acc) => acc.add_assign(&grad),
                            None => {
                                pending.insert(parent.0.id, grad);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
