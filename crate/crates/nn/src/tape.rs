//! Reverse-mode differentiation over an explicit tape of coarse-grained
//! operation nodes (whole layers, not scalar ops).

use crate::error::{NnError, Result};
use crate::params::{ParamId, ParameterSet};
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

/// Computes parent gradients from the output gradient, the parent values, and
/// a mask of which parents need a gradient at all.
pub(crate) type BackwardFn = Box<dyn Fn(&Tensor, &[&Tensor], &[bool]) -> Vec<Option<Tensor>>>;

struct Node {
    value: Tensor,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
    param: Option<ParamId>,
    requires_grad: bool,
}

/// Whether stochastic layers are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    /// Records a constant (no gradient flows into it).
    pub fn input(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, None, false, "input")
    }

    /// Records a copy of a trainable parameter; its gradient is accumulated
    /// into the parameter set by [`Tape::backward`].
    pub fn param(&mut self, params: &ParameterSet, id: ParamId) -> Result<Var> {
        self.leaf(params.value(id).clone(), Some(id), true, "param")
    }

    fn leaf(
        &mut self,
        value: Tensor,
        param: Option<ParamId>,
        requires_grad: bool,
        op: &'static str,
    ) -> Result<Var> {
        if !value.is_finite() {
            return Err(NnError::NonFinite { op });
        }
        self.nodes.push(Node {
            value,
            parents: Vec::new(),
            backward: None,
            param,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub(crate) fn push(
        &mut self,
        op: &'static str,
        value: Tensor,
        parents: &[Var],
        backward: BackwardFn,
    ) -> Result<Var> {
        if !value.is_finite() {
            return Err(NnError::NonFinite { op });
        }
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            parents: parents.iter().map(|p| p.0).collect(),
            backward: requires_grad.then_some(backward),
            param: None,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Back-propagates from a scalar node, adding parameter gradients into
    /// `params`. Existing gradients are accumulated, not overwritten.
    pub fn backward(&self, root: Var, params: &mut ParameterSet) -> Result<()> {
        let root_value = &self.nodes[root.0].value;
        if root_value.len() != 1 {
            return Err(NnError::invalid(
                "backward",
                format!("root must be scalar, has shape {:?}", root_value.shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=root.0).map(|_| None).collect();
        grads[root.0] = Some(Tensor::full(root_value.shape(), 1.0));

        for idx in (0..=root.0).rev() {
            let Some(grad) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if let Some(id) = node.param {
                params.accumulate_grad(id, &grad);
                continue;
            }
            let Some(backward) = &node.backward else {
                continue;
            };
            let parent_values: Vec<&Tensor> =
                node.parents.iter().map(|&p| &self.nodes[p].value).collect();
            let needs: Vec<bool> = node
                .parents
                .iter()
                .map(|&p| self.nodes[p].requires_grad)
                .collect();
            let parent_grads = backward(&grad, &parent_values, &needs);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for ((&p, g), need) in node.parents.iter().zip(parent_grads).zip(needs) {
                let (Some(g), true) = (g, need) else { continue };
                if !g.is_finite() {
                    return Err(NnError::NonFinite { op: "backward" });
                }
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            }
        }
        Ok(())
    }
}
