//! Wengert-list reverse-mode differentiation.
//!
//! A [`Tape`] records one scalar node per arithmetic operation; local partial
//! derivatives are evaluated during the forward pass, so the backward sweep is
//! a single reverse traversal accumulating adjoints. Graphs here top out
//! around 10^5..10^7 nodes (small meshes at low resolutions), so nodes are kept
//! flat and dense.

use std::cell::RefCell;

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct Node {
    parents: [u32; 2],
    partials: [f64; 2],
}

/// Records the computation graph for one backward pass.
///
/// The tape is reset (or dropped) between optimization steps; variables from a
/// previous epoch must not be mixed into a new graph.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn with_capacity(cap: usize) -> Self {
        Tape {
            nodes: RefCell::new(Vec::with_capacity(cap)),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Clears all nodes but keeps the allocation. Any `Var` created before the
    /// reset is invalidated.
    pub fn reset(&self) {
        self.nodes.borrow_mut().clear();
    }

    /// Creates a differentiable leaf variable.
    pub fn var(&self, value: f64) -> Var<'_> {
        let id = self.push([NONE, NONE], [0.0, 0.0]);
        Var {
            val: value,
            node: Some((self, id)),
        }
    }

    /// Lifts a whole slice of parameters as leaves, in order.
    pub fn vars(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    fn push(&self, parents: [u32; 2], partials: [f64; 2]) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len() as u32;
        nodes.push(Node { parents, partials });
        id
    }

    /// Reverse sweep from a scalar root. Adjoints of every leaf (and interior
    /// node) are returned; constants have no slot and read back as zero.
    pub fn backward(&self, root: Var<'_>) -> Grads {
        let nodes = self.nodes.borrow();
        let mut adj = vec![0.0f64; nodes.len()];
        if let Some((tape, id)) = root.node {
            debug_assert!(std::ptr::eq(tape, self), "root from a different tape");
            adj[id as usize] = 1.0;
            for i in (0..=id as usize).rev() {
                let g = adj[i];
                if g == 0.0 {
                    continue;
                }
                let n = nodes[i];
                for k in 0..2 {
                    if n.parents[k] != NONE {
                        adj[n.parents[k] as usize] += g * n.partials[k];
                    }
                }
            }
        }
        Grads { adj }
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Adjoints produced by [`Tape::backward`].
pub struct Grads {
    adj: Vec<f64>,
}

impl Grads {
    /// Gradient with respect to `v`. Constants (detached values) return 0.
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        match v.node {
            Some((_, id)) => self.adj[id as usize],
            None => 0.0,
        }
    }

    pub fn wrt_slice(&self, vs: &[Var<'_>]) -> Vec<f64> {
        vs.iter().map(|&v| self.wrt(v)).collect()
    }
}

/// A value tracked on a [`Tape`]. `node == None` marks a constant: operations
/// between constants fold without recording anything, which is what makes
/// `detach` (and frozen parameter groups) free.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    pub(crate) val: f64,
    pub(crate) node: Option<(&'t Tape, u32)>,
}

impl<'t> Var<'t> {
    pub fn constant(value: f64) -> Self {
        Var {
            val: value,
            node: None,
        }
    }

    pub fn value(self) -> f64 {
        self.val
    }

    /// Same value, no upstream edges.
    pub fn detach(self) -> Self {
        Var {
            val: self.val,
            node: None,
        }
    }

    pub(crate) fn unary(self, val: f64, d: f64) -> Self {
        match self.node {
            None => Var { val, node: None },
            Some((t, ia)) => {
                let id = t.push([ia, NONE], [d, 0.0]);
                Var {
                    val,
                    node: Some((t, id)),
                }
            }
        }
    }

    pub(crate) fn binary(self, rhs: Var<'t>, val: f64, da: f64, db: f64) -> Self {
        match (self.node, rhs.node) {
            (None, None) => Var { val, node: None },
            (Some((t, ia)), None) => {
                let id = t.push([ia, NONE], [da, 0.0]);
                Var {
                    val,
                    node: Some((t, id)),
                }
            }
            (None, Some((t, ib))) => {
                let id = t.push([ib, NONE], [db, 0.0]);
                Var {
                    val,
                    node: Some((t, id)),
                }
            }
            (Some((t, ia)), Some((t2, ib))) => {
                debug_assert!(std::ptr::eq(t, t2), "vars from different tapes");
                let id = t.push([ia, ib], [da, db]);
                Var {
                    val,
                    node: Some((t, id)),
                }
            }
        }
    }
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.node {
            Some((_, id)) => write!(f, "Var({} @{})", self.val, id),
            None => write!(f, "Var({} const)", self.val),
        }
    }
}

impl PartialEq for Var<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.val == other.val
    }
}

impl PartialOrd for Var<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        self.val.partial_cmp(&other.val)
    }
}

impl<'t> std::ops::Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.val + rhs.val, 1.0, 1.0)
    }
}

impl<'t> std::ops::Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.val - rhs.val, 1.0, -1.0)
    }
}

impl<'t> std::ops::Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.val * rhs.val, rhs.val, self.val)
    }
}

impl<'t> std::ops::Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        let inv = 1.0 / rhs.val;
        self.binary(rhs, self.val * inv, inv, -self.val * inv * inv)
    }
}

impl<'t> std::ops::Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(-self.val, -1.0)
    }
}
