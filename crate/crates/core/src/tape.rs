//! Reverse-mode automatic differentiation over `f64` scalars.
//!
//! A [`Tape`] records one unrolled computation as an append-only list of
//! nodes. Operands always precede the node that consumes them, so a single
//! sweep in descending index order is a valid reverse topological order.
//!
//! Trainable quantities are registered either as scalar leaves or as
//! parameter blocks. A block is a flat slice of parameters consumed by
//! opaque operations (the policy network is one), which carry their own
//! vector-Jacobian product. Every registered parameter owns one slot in the
//! [`GradientMap`] returned by [`Tape::backward`]; adjoints flowing into the
//! same slot from different uses are summed, which is exactly how shared
//! parameters are tied across agents.

use std::cell::{Cell, Ref, RefCell};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use thiserror::Error;

use crate::scalar::{self, Real};

/// Classification of a recorded node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    Leaf,
    Const,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Abs,
    Relu,
    Exp,
    Square,
    Sqrt,
    Min,
    Max,
    Scale,
    Shift,
    Sum,
    Opaque,
    OpaqueOutput,
}

impl OpKind {
    /// Kinds with a closed-form local adjoint rule.
    pub const ELEMENTARY: [OpKind; 15] = [
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::Div,
        OpKind::Neg,
        OpKind::Abs,
        OpKind::Relu,
        OpKind::Exp,
        OpKind::Square,
        OpKind::Sqrt,
        OpKind::Min,
        OpKind::Max,
        OpKind::Scale,
        OpKind::Shift,
        OpKind::Sum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Leaf => "leaf",
            OpKind::Const => "const",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Div => "div",
            OpKind::Neg => "neg",
            OpKind::Abs => "abs",
            OpKind::Relu => "relu",
            OpKind::Exp => "exp",
            OpKind::Square => "square",
            OpKind::Sqrt => "sqrt",
            OpKind::Min => "min",
            OpKind::Max => "max",
            OpKind::Scale => "scale",
            OpKind::Shift => "shift",
            OpKind::Sum => "sum",
            OpKind::Opaque => "opaque",
            OpKind::OpaqueOutput => "opaque-output",
        }
    }

    pub fn from_name(name: &str) -> Option<OpKind> {
        [
            OpKind::Leaf,
            OpKind::Const,
            OpKind::Opaque,
            OpKind::OpaqueOutput,
        ]
        .into_iter()
        .chain(OpKind::ELEMENTARY)
        .find(|k| k.name() == name)
    }

    /// Number of operands, `None` for variadic kinds.
    pub fn arity(self) -> Option<usize> {
        match self {
            OpKind::Leaf | OpKind::Const => Some(0),
            OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Div | OpKind::Min | OpKind::Max => {
                Some(2)
            }
            OpKind::Sum | OpKind::Opaque => None,
            _ => Some(1),
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// An operation request for [`Tape::apply`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Abs,
    Relu,
    Exp,
    Square,
    Sqrt,
    Min,
    Max,
    Scale(f64),
    Shift(f64),
    Sum,
}

impl Op {
    pub fn kind(self) -> OpKind {
        match self {
            Op::Add => OpKind::Add,
            Op::Sub => OpKind::Sub,
            Op::Mul => OpKind::Mul,
            Op::Div => OpKind::Div,
            Op::Neg => OpKind::Neg,
            Op::Abs => OpKind::Abs,
            Op::Relu => OpKind::Relu,
            Op::Exp => OpKind::Exp,
            Op::Square => OpKind::Square,
            Op::Sqrt => OpKind::Sqrt,
            Op::Min => OpKind::Min,
            Op::Max => OpKind::Max,
            Op::Scale(_) => OpKind::Scale,
            Op::Shift(_) => OpKind::Shift,
            Op::Sum => OpKind::Sum,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TapeError {
    #[error("leaf value {0} is not finite")]
    NonFiniteLeaf(f64),
    #[error("division by zero at node {node}")]
    DivisionByZero { node: usize },
    #[error("square root of negative value {value} at node {node}")]
    NegativeSqrt { node: usize, value: f64 },
    #[error("{kind} expects {expected} operand(s), got {got}")]
    Arity {
        kind: OpKind,
        expected: usize,
        got: usize,
    },
    #[error("node does not belong to this tape")]
    ForeignNode,
}

/// Vector-Jacobian product of a multi-input, multi-output recorded block.
pub trait OpaqueOp {
    fn name(&self) -> &'static str;

    /// Accumulates `out_adjoint`'s pullback into `in_adjoint` (one entry per
    /// input, in recording order) and into `param_adjoint` (one entry per
    /// element of the op's parameter block; empty when it has none).
    fn backward(
        &self,
        params: &[f64],
        out_adjoint: &[f64],
        in_adjoint: &mut [f64],
        param_adjoint: &mut [f64],
    );
}

/// A contiguous range of registered trainable parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamBlock {
    id: usize,
    offset: usize,
    len: usize,
}

impl ParamBlock {
    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Accumulated partial derivatives, one per registered parameter slot.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMap {
    values: Vec<f64>,
    visited: usize,
}

impl GradientMap {
    pub fn zeros(len: usize) -> Self {
        GradientMap {
            values: vec![0.0; len],
            visited: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, slot: usize) -> f64 {
        self.values[slot]
    }

    /// Gradient with respect to a trainable scalar leaf.
    pub fn wrt(&self, leaf: Var<'_>) -> Option<f64> {
        let nodes = leaf.tape.nodes.borrow();
        let node = &nodes[leaf.index as usize];
        (node.kind == OpKind::Leaf && node.a != NO_SLOT).then(|| self.values[node.a as usize])
    }

    pub fn block(&self, block: &ParamBlock) -> &[f64] {
        &self.values[block.offset..block.offset + block.len]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    /// Number of nodes visited by the reverse sweep that produced this map.
    pub fn nodes_visited(&self) -> usize {
        self.visited
    }

    pub fn accumulate(&mut self, other: &GradientMap) {
        assert_eq!(self.values.len(), other.values.len(), "gradient shape");
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += *b;
        }
        self.visited += other.visited;
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

const NO_SLOT: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct Node {
    kind: OpKind,
    a: u32,
    b: u32,
    aux: f64,
    value: f64,
}

struct OpaqueEntry {
    op: Box<dyn OpaqueOp>,
    input_start: usize,
    input_len: usize,
    block: Option<ParamBlock>,
}

/// Recorded computation graph of one rollout.
///
/// Single-writer: recording goes through shared references (`Var` is
/// `Copy`), so the tape uses interior mutability and is not `Sync`.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    operands: RefCell<Vec<u32>>,
    opaque: RefCell<Vec<OpaqueEntry>>,
    blocks: RefCell<Vec<Vec<f64>>>,
    n_params: Cell<usize>,
    error: RefCell<Option<TapeError>>,
    fault: Cell<Option<OpKind>>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape")
            .field("nodes", &self.len())
            .field("params", &self.n_params.get())
            .finish()
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    index: u32,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}({})", self.index, self.value())
    }
}

impl<'t> Var<'t> {
    pub fn value(self) -> f64 {
        self.tape.nodes.borrow()[self.index as usize].value
    }

    pub fn index(self) -> usize {
        self.index as usize
    }

    pub fn tape(self) -> &'t Tape {
        self.tape
    }

    fn unary(self, kind: OpKind, aux: f64) -> Var<'t> {
        self.tape.record(kind, self.index, 0, aux)
    }

    fn binary(self, kind: OpKind, other: Var<'t>) -> Var<'t> {
        debug_assert!(std::ptr::eq(self.tape, other.tape), "operands on different tapes");
        self.tape.record(kind, self.index, other.index, 0.0)
    }
}

/// Forward rule of an elementary binary or unary kind, shared by the tape
/// and the plain `f64` path.
pub fn forward_rule(kind: OpKind, a: f64, b: f64, aux: f64) -> f64 {
    match kind {
        OpKind::Add => a + b,
        OpKind::Sub => a - b,
        OpKind::Mul => a * b,
        OpKind::Div => a / b,
        OpKind::Neg => -a,
        OpKind::Abs => a.abs(),
        OpKind::Relu => scalar::relu(a),
        OpKind::Exp => a.exp(),
        OpKind::Square => a * a,
        OpKind::Sqrt => a.sqrt(),
        OpKind::Min => scalar::min(a, b),
        OpKind::Max => scalar::max(a, b),
        OpKind::Scale => a * aux,
        OpKind::Shift => a + aux,
        _ => unreachable!("{kind} has no scalar forward rule"),
    }
}

/// Local partial derivatives `(d out/d a, d out/d b)` of an elementary node.
///
/// Conventions: `abs'(0) = 0`, `relu'(0) = 0`, and `min`/`max` route the
/// whole adjoint to the first operand on ties.
pub fn local_partials(kind: OpKind, a: f64, b: f64, aux: f64, out: f64) -> (f64, f64) {
    match kind {
        OpKind::Add => (1.0, 1.0),
        OpKind::Sub => (1.0, -1.0),
        OpKind::Mul => (b, a),
        OpKind::Div => (1.0 / b, -out / b),
        OpKind::Neg => (-1.0, 0.0),
        OpKind::Abs => (
            if a > 0.0 {
                1.0
            } else if a < 0.0 {
                -1.0
            } else {
                0.0
            },
            0.0,
        ),
        OpKind::Relu => (if a > 0.0 { 1.0 } else { 0.0 }, 0.0),
        OpKind::Exp => (out, 0.0),
        OpKind::Square => (2.0 * a, 0.0),
        OpKind::Sqrt => (0.5 / out, 0.0),
        OpKind::Min => {
            if a <= b {
                (1.0, 0.0)
            } else {
                (0.0, 1.0)
            }
        }
        OpKind::Max => {
            if a >= b {
                (1.0, 0.0)
            } else {
                (0.0, 1.0)
            }
        }
        OpKind::Scale => (aux, 0.0),
        OpKind::Shift => (1.0, 0.0),
        OpKind::Sum => (1.0, 0.0),
        _ => (0.0, 0.0),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of registered parameter slots.
    pub fn num_params(&self) -> usize {
        self.n_params.get()
    }

    /// First domain error hit by operator-overloaded recording, if any.
    pub fn error(&self) -> Option<TapeError> {
        self.error.borrow().clone()
    }

    /// Flips the sign of one kind's local adjoint rule. Mutation testing
    /// hook for the gradient checker; never set during training.
    pub fn inject_sign_flip(&self, kind: Option<OpKind>) {
        self.fault.set(kind);
    }

    pub fn injected_fault(&self) -> Option<OpKind> {
        self.fault.get()
    }

    /// Local adjoint rule as applied by this tape's reverse sweep.
    pub fn adjoint_rule(&self, kind: OpKind, a: f64, b: f64, aux: f64, out: f64) -> (f64, f64) {
        let (da, db) = local_partials(kind, a, b, aux, out);
        if self.fault.get() == Some(kind) {
            (-da, -db)
        } else {
            (da, db)
        }
    }

    pub fn leaf(&self, value: f64, trainable: bool) -> Result<Var<'_>, TapeError> {
        if !value.is_finite() {
            return Err(TapeError::NonFiniteLeaf(value));
        }
        let slot = if trainable {
            let s = self.n_params.get();
            self.n_params.set(s + 1);
            s as u32
        } else {
            NO_SLOT
        };
        Ok(self.push(Node {
            kind: OpKind::Leaf,
            a: slot,
            b: 0,
            aux: 0.0,
            value,
        }))
    }

    /// Non-trainable value. Unlike [`Tape::leaf`] this does not reject
    /// non-finite input; blow-ups are detected by the caller.
    pub fn constant(&self, value: f64) -> Var<'_> {
        self.push(Node {
            kind: OpKind::Const,
            a: 0,
            b: 0,
            aux: 0.0,
            value,
        })
    }

    /// Registers a block of trainable parameters read by opaque operations.
    pub fn register_block(&self, values: &[f64]) -> ParamBlock {
        let mut blocks = self.blocks.borrow_mut();
        let offset = self.n_params.get();
        self.n_params.set(offset + values.len());
        blocks.push(values.to_vec());
        ParamBlock {
            id: blocks.len() - 1,
            offset,
            len: values.len(),
        }
    }

    pub fn block_values(&self, block: &ParamBlock) -> Ref<'_, [f64]> {
        Ref::map(self.blocks.borrow(), |b| b[block.id].as_slice())
    }

    /// Checked recording of an elementary operation.
    pub fn apply<'t>(&'t self, op: Op, operands: &[Var<'t>]) -> Result<Var<'t>, TapeError> {
        let kind = op.kind();
        if operands.iter().any(|v| !std::ptr::eq(v.tape, self)) {
            return Err(TapeError::ForeignNode);
        }
        match kind.arity() {
            Some(n) if n != operands.len() => {
                return Err(TapeError::Arity {
                    kind,
                    expected: n,
                    got: operands.len(),
                })
            }
            None if operands.is_empty() => {
                return Err(TapeError::Arity {
                    kind,
                    expected: 1,
                    got: 0,
                })
            }
            _ => {}
        }
        if kind == OpKind::Sum {
            return Ok(self.sum(operands));
        }
        let a = operands[0].value();
        let b = operands.get(1).map_or(0.0, |v| v.value());
        let node = self.len();
        match kind {
            OpKind::Div if b == 0.0 => return Err(TapeError::DivisionByZero { node }),
            OpKind::Sqrt if a < 0.0 => return Err(TapeError::NegativeSqrt { node, value: a }),
            _ => {}
        }
        let aux = match op {
            Op::Scale(c) | Op::Shift(c) => c,
            _ => 0.0,
        };
        Ok(self.record(
            kind,
            operands[0].index,
            operands.get(1).map_or(0, |v| v.index),
            aux,
        ))
    }

    /// N-ary sum; forward value is the left-to-right fold.
    pub fn sum<'t>(&'t self, operands: &[Var<'t>]) -> Var<'t> {
        assert!(!operands.is_empty(), "sum of no operands");
        let value = {
            let nodes = self.nodes.borrow();
            let mut acc = nodes[operands[0].index as usize].value;
            for v in &operands[1..] {
                acc += nodes[v.index as usize].value;
            }
            acc
        };
        let start = {
            let mut ops = self.operands.borrow_mut();
            let start = ops.len();
            ops.extend(operands.iter().map(|v| v.index));
            start
        };
        self.push(Node {
            kind: OpKind::Sum,
            a: start as u32,
            b: operands.len() as u32,
            aux: 0.0,
            value,
        })
    }

    /// Records a multi-output block whose outputs were computed by the
    /// caller. Returns one handle per output value.
    pub fn push_opaque<'t>(
        &'t self,
        op: Box<dyn OpaqueOp>,
        inputs: &[Var<'t>],
        outputs: &[f64],
        block: Option<ParamBlock>,
    ) -> Vec<Var<'t>> {
        let input_start = {
            let mut ops = self.operands.borrow_mut();
            let start = ops.len();
            ops.extend(inputs.iter().map(|v| v.index));
            start
        };
        let op_index = {
            let mut opaque = self.opaque.borrow_mut();
            opaque.push(OpaqueEntry {
                op,
                input_start,
                input_len: inputs.len(),
                block,
            });
            opaque.len() - 1
        };
        let call = self.push(Node {
            kind: OpKind::Opaque,
            a: op_index as u32,
            b: outputs.len() as u32,
            aux: 0.0,
            value: 0.0,
        });
        outputs
            .iter()
            .enumerate()
            .map(|(k, &value)| {
                self.push(Node {
                    kind: OpKind::OpaqueOutput,
                    a: call.index,
                    b: k as u32,
                    aux: 0.0,
                    value,
                })
            })
            .collect()
    }

    fn push(&self, node: Node) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let index = u32::try_from(nodes.len()).expect("tape exceeds u32 node indices");
        nodes.push(node);
        Var { tape: self, index }
    }

    fn record(&self, kind: OpKind, a: u32, b: u32, aux: f64) -> Var<'_> {
        let (va, vb) = {
            let nodes = self.nodes.borrow();
            (
                nodes[a as usize].value,
                if kind.arity() == Some(2) {
                    nodes[b as usize].value
                } else {
                    0.0
                },
            )
        };
        let node = self.len();
        let domain = match kind {
            OpKind::Div if vb == 0.0 => Some(TapeError::DivisionByZero { node }),
            OpKind::Sqrt if va < 0.0 => Some(TapeError::NegativeSqrt { node, value: va }),
            _ => None,
        };
        let value = match domain {
            Some(err) => {
                self.error.borrow_mut().get_or_insert(err);
                f64::NAN
            }
            None => forward_rule(kind, va, vb, aux),
        };
        self.push(Node {
            kind,
            a,
            b,
            aux,
            value,
        })
    }

    /// Reverse sweep from `root`, visiting each node at or below it once.
    pub fn backward(&self, root: Var<'_>) -> Result<GradientMap, TapeError> {
        if !std::ptr::eq(root.tape, self) || root.index() >= self.len() {
            return Err(TapeError::ForeignNode);
        }
        let nodes = self.nodes.borrow();
        let operands = self.operands.borrow();
        let opaque = self.opaque.borrow();
        let blocks = self.blocks.borrow();
        let fault = self.fault.get();

        let mut adj = vec![0.0; root.index() + 1];
        let mut grad = vec![0.0; self.n_params.get()];
        adj[root.index()] = 1.0;

        for i in (0..=root.index()).rev() {
            let node = nodes[i];
            match node.kind {
                OpKind::Leaf => {
                    if node.a != NO_SLOT {
                        grad[node.a as usize] += adj[i];
                    }
                }
                OpKind::Const | OpKind::OpaqueOutput => {}
                OpKind::Sum => {
                    let g = if fault == Some(OpKind::Sum) { -adj[i] } else { adj[i] };
                    if g != 0.0 {
                        let start = node.a as usize;
                        for &k in &operands[start..start + node.b as usize] {
                            adj[k as usize] += g;
                        }
                    }
                }
                OpKind::Opaque => {
                    let n_out = node.b as usize;
                    let hi = (i + 1 + n_out).min(adj.len());
                    let mut out_adj: Vec<f64> = adj[i + 1..hi].to_vec();
                    out_adj.resize(n_out, 0.0);
                    if out_adj.iter().all(|g| *g == 0.0) {
                        continue;
                    }
                    if fault == Some(OpKind::Opaque) {
                        out_adj.iter_mut().for_each(|g| *g = -*g);
                    }
                    let entry = &opaque[node.a as usize];
                    let mut in_adj = vec![0.0; entry.input_len];
                    let (params, param_adj): (&[f64], &mut [f64]) = match entry.block {
                        Some(b) => (&blocks[b.id], &mut grad[b.offset..b.offset + b.len]),
                        None => (&[], &mut []),
                    };
                    entry.op.backward(params, &out_adj, &mut in_adj, param_adj);
                    let inputs = &operands[entry.input_start..entry.input_start + entry.input_len];
                    for (&k, g) in inputs.iter().zip(in_adj) {
                        adj[k as usize] += g;
                    }
                }
                kind => {
                    let g = adj[i];
                    if g == 0.0 {
                        continue;
                    }
                    let va = nodes[node.a as usize].value;
                    let binary = kind.arity() == Some(2);
                    let vb = if binary { nodes[node.b as usize].value } else { 0.0 };
                    let (mut da, mut db) = local_partials(kind, va, vb, node.aux, node.value);
                    if fault == Some(kind) {
                        da = -da;
                        db = -db;
                    }
                    adj[node.a as usize] += g * da;
                    if binary {
                        adj[node.b as usize] += g * db;
                    }
                }
            }
        }
        Ok(GradientMap {
            values: grad,
            visited: root.index() + 1,
        })
    }

    /// Counts recorded nodes per kind.
    pub fn kind_histogram(&self) -> Vec<(OpKind, usize)> {
        let mut counts = std::collections::BTreeMap::new();
        for n in self.nodes.borrow().iter() {
            *counts.entry(n.kind).or_insert(0usize) += 1;
        }
        counts.into_iter().collect()
    }

    /// Recorded `(kind, a, b, aux, out)` samples of an elementary kind, for
    /// local adjoint checks. At most `limit` samples are returned.
    pub fn samples(&self, kind: OpKind, limit: usize) -> Vec<(f64, f64, f64, f64)> {
        let nodes = self.nodes.borrow();
        nodes
            .iter()
            .filter(|n| n.kind == kind && kind != OpKind::Sum)
            .take(limit)
            .map(|n| {
                let a = nodes[n.a as usize].value;
                let b = if kind.arity() == Some(2) {
                    nodes[n.b as usize].value
                } else {
                    0.0
                };
                (a, b, n.aux, n.value)
            })
            .collect()
    }

    /// True when every recorded forward value is finite.
    pub fn all_finite(&self) -> bool {
        self.nodes.borrow().iter().all(|n| n.value.is_finite())
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(OpKind::Add, rhs)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(OpKind::Sub, rhs)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(OpKind::Mul, rhs)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(OpKind::Div, rhs)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(OpKind::Neg, 0.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, c: f64) -> Var<'t> {
        self.unary(OpKind::Shift, c)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, c: f64) -> Var<'t> {
        // a + (-c) is bitwise a - c under IEEE 754.
        self.unary(OpKind::Shift, -c)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, c: f64) -> Var<'t> {
        self.unary(OpKind::Scale, c)
    }
}

impl<'t> Real for Var<'t> {
    fn value(self) -> f64 {
        Var::value(self)
    }

    fn constant(self, c: f64) -> Self {
        self.tape.constant(c)
    }

    fn detach(self) -> Self {
        self.tape.constant(self.value())
    }

    fn abs(self) -> Self {
        self.unary(OpKind::Abs, 0.0)
    }

    fn relu(self) -> Self {
        self.unary(OpKind::Relu, 0.0)
    }

    fn exp(self) -> Self {
        self.unary(OpKind::Exp, 0.0)
    }

    fn sqrt(self) -> Self {
        self.unary(OpKind::Sqrt, 0.0)
    }

    fn square(self) -> Self {
        self.unary(OpKind::Square, 0.0)
    }

    fn max(self, other: Self) -> Self {
        self.binary(OpKind::Max, other)
    }

    fn min(self, other: Self) -> Self {
        self.binary(OpKind::Min, other)
    }

    fn sum(values: &[Self]) -> Self {
        values[0].tape.sum(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_gradient_is_one() {
        let tape = Tape::new();
        let x = tape.leaf(2.0, true).unwrap();
        let g = tape.backward(x).unwrap();
        assert_eq!(g.wrt(x), Some(1.0));
    }

    #[test]
    fn unused_trainable_leaf_has_zero_gradient() {
        let tape = Tape::new();
        let x = tape.leaf(1.5, true).unwrap();
        let unused = tape.leaf(0.0, true).unwrap();
        let y = x * x;
        let g = tape.backward(y).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g.wrt(unused), Some(0.0));
        assert_eq!(g.wrt(x), Some(3.0));
    }

    #[test]
    fn non_finite_leaf_rejected() {
        let tape = Tape::new();
        assert_eq!(
            tape.leaf(f64::NAN, true).unwrap_err().to_string(),
            "leaf value NaN is not finite"
        );
        assert!(tape.leaf(f64::INFINITY, false).is_err());
    }

    #[test]
    fn product_rule() {
        let tape = Tape::new();
        let x = tape.leaf(2.0, true).unwrap();
        let y = tape.leaf(3.0, true).unwrap();
        let z = tape.apply(Op::Mul, &[x, y]).unwrap();
        let g = tape.backward(z).unwrap();
        assert_eq!(g.wrt(x), Some(3.0));
        assert_eq!(g.wrt(y), Some(2.0));
    }

    #[test]
    fn abs_and_relu_are_flat_at_zero() {
        let tape = Tape::new();
        let x = tape.leaf(0.0, true).unwrap();
        let a = x.abs();
        let r = x.relu();
        assert_eq!(tape.backward(a).unwrap().wrt(x), Some(0.0));
        assert_eq!(tape.backward(r).unwrap().wrt(x), Some(0.0));
    }

    #[test]
    fn ties_route_to_first_operand() {
        let tape = Tape::new();
        let x = tape.leaf(1.0, true).unwrap();
        let y = tape.leaf(1.0, true).unwrap();
        let g = tape.backward(x.max(y)).unwrap();
        assert_eq!((g.wrt(x), g.wrt(y)), (Some(1.0), Some(0.0)));
        let g = tape.backward(y.min(x)).unwrap();
        assert_eq!((g.wrt(x), g.wrt(y)), (Some(0.0), Some(1.0)));
    }

    #[test]
    fn shared_leaf_accumulates() {
        let tape = Tape::new();
        let x = tape.leaf(0.7, true).unwrap();
        let s = tape.apply(Op::Sum, &[x, x, x]).unwrap();
        assert_eq!(tape.backward(s).unwrap().wrt(x), Some(3.0));
    }

    #[test]
    fn constant_root_has_zero_gradients() {
        let tape = Tape::new();
        let x = tape.leaf(4.0, true).unwrap();
        let _ = x * 2.0;
        let c = tape.constant(5.0);
        let g = tape.backward(c).unwrap();
        assert!(g.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn domain_errors() {
        let tape = Tape::new();
        let x = tape.leaf(-1.0, false).unwrap();
        let zero = tape.constant(0.0);
        assert!(matches!(
            tape.apply(Op::Sqrt, &[x]),
            Err(TapeError::NegativeSqrt { .. })
        ));
        assert!(matches!(
            tape.apply(Op::Div, &[x, zero]),
            Err(TapeError::DivisionByZero { .. })
        ));
        assert!(tape.error().is_none());
        let bad = x / zero;
        assert!(bad.value().is_nan());
        assert!(matches!(tape.error(), Some(TapeError::DivisionByZero { .. })));
    }

    #[test]
    fn arity_checked() {
        let tape = Tape::new();
        let x = tape.leaf(1.0, false).unwrap();
        assert!(matches!(
            tape.apply(Op::Add, &[x]),
            Err(TapeError::Arity { expected: 2, got: 1, .. })
        ));
        assert!(tape.apply(Op::Sum, &[]).is_err());
    }

    #[test]
    fn foreign_root_rejected() {
        let a = Tape::new();
        let b = Tape::new();
        let x = b.leaf(1.0, true).unwrap();
        assert_eq!(a.backward(x).unwrap_err(), TapeError::ForeignNode);
    }

    #[test]
    fn reverse_sweep_visits_each_node_once() {
        let tape = Tape::new();
        let x = tape.leaf(0.3, true).unwrap();
        let mut y = x;
        for _ in 0..50 {
            y = (y * y + x).exp() * 0.1;
        }
        let g = tape.backward(y).unwrap();
        assert_eq!(g.nodes_visited(), tape.len());
    }

    #[test]
    fn sign_flip_changes_gradient() {
        let tape = Tape::new();
        let x = tape.leaf(2.0, true).unwrap();
        let y = x * x;
        tape.inject_sign_flip(Some(OpKind::Mul));
        assert_eq!(tape.backward(y).unwrap().wrt(x), Some(-4.0));
    }

    struct Doubler;
    impl OpaqueOp for Doubler {
        fn name(&self) -> &'static str {
            "doubler"
        }
        fn backward(&self, params: &[f64], out: &[f64], input: &mut [f64], param: &mut [f64]) {
            // y_k = w * x_k
            for k in 0..out.len() {
                input[k] += params[0] * out[k];
                param[0] += out[k] * 10.0 * (k as f64 + 1.0);
            }
        }
    }

    #[test]
    fn opaque_block_routes_adjoints() {
        let tape = Tape::new();
        let block = tape.register_block(&[2.0]);
        let x1 = tape.leaf(10.0, true).unwrap();
        let x2 = tape.leaf(20.0, true).unwrap();
        let out = tape.push_opaque(Box::new(Doubler), &[x1, x2], &[20.0, 40.0], Some(block));
        let y = out[0] + out[1] * 3.0;
        assert_eq!(y.value(), 140.0);
        let g = tape.backward(y).unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g.block(&block), &[10.0 + 3.0 * 20.0]);
        assert_eq!(g.wrt(x1), Some(2.0));
        assert_eq!(g.wrt(x2), Some(6.0));
    }

    #[test]
    fn kind_names_round_trip() {
        for k in OpKind::ELEMENTARY {
            assert_eq!(OpKind::from_name(k.name()), Some(k));
        }
    }
}
