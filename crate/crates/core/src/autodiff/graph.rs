use std::collections::HashMap;

use super::tensor::{numel, Tensor};
use crate::error::{Error, Result};
use crate::portfolio::{approx_remainder, remainder_map, solve_remainder, CommissionSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    /// A handle that refers to no node; only for fields filled in later.
    pub(crate) const fn dangling() -> Self {
        NodeId(usize::MAX)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Spec(format!("duplicate parameter `{name}`")));
        }
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(tensor);
        Ok(ParamId(self.names.len() - 1))
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.names.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Op {
    Input(usize),
    Param(ParamId),
    /// Row-wise convolution `[x (B,C,M,L), w (O,C,K), b (O)] -> (B,O,M,L-K+1)`.
    Conv,
    /// `[x (R,D), w (O,D), b (O)] -> (R,O)`.
    Affine,
    /// `[x (R,D), w (O,D)] -> x wᵀ (R,O)`.
    MatMulT,
    Relu,
    Tanh,
    Sigmoid,
    Log,
    Add,
    Sub,
    Mul,
    Scale(f64),
    Reshape,
    Transpose(Vec<usize>),
    Concat(usize),
    Slice {
        axis: usize,
        start: usize,
        len: usize,
    },
    /// `(1,K) -> (n,K)`.
    RepeatRows(usize),
    /// Softmax over the last axis.
    Softmax,
    /// Sum over the last axis.
    SumLast,
    Mean,
    SumSquares,
    /// `[w (B,K), y (B,K)] -> (y ⊙ w) / (y · w)` row-wise.
    Evolve,
    /// Exact transaction remainder, `[w' (B,K), w (B,K)] -> (B)`.
    Remainder(CommissionSchedule),
    /// Turnover surrogate of the remainder, `[w' (B,K), w (B,K)] -> (B)`.
    RemainderApprox(f64),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    inputs: Vec<NodeId>,
    shape: Vec<usize>,
    label: String,
    needs_grad: bool,
}

/// Acyclic computation graph over fixed shapes. Nodes are stored in
/// creation order, which is a topological order.
#[derive(Debug, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
    inputs: Vec<NodeId>,
}

/// Incremental graph constructor with shape inference.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    nodes: Vec<Node>,
    inputs: Vec<NodeId>,
    scope: String,
}

fn structural(node: &str, message: impl Into<String>) -> Error {
    Error::Structure {
        node: node.to_string(),
        message: message.into(),
    }
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Prefix for labels of nodes created from now on.
    pub fn set_scope(&mut self, scope: impl Into<String>) {
        self.scope = scope.into();
    }

    fn next_label(&self, kind: &str) -> String {
        if self.scope.is_empty() {
            format!("{kind}#{}", self.nodes.len())
        } else {
            format!("{}/{kind}#{}", self.scope, self.nodes.len())
        }
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>, shape: Vec<usize>, label: String) -> NodeId {
        let needs_grad = matches!(op, Op::Param(_))
            || inputs.iter().any(|i| self.nodes[i.0].needs_grad);
        self.nodes.push(Node {
            op,
            inputs,
            shape,
            label,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn label(&self, id: NodeId) -> &str {
        &self.nodes[id.0].label
    }

    pub fn input(&mut self, name: &str, shape: &[usize]) -> NodeId {
        let label = if self.scope.is_empty() {
            name.to_string()
        } else {
            format!("{}/{name}", self.scope)
        };
        let id = self.push(Op::Input(self.inputs.len()), vec![], shape.to_vec(), label);
        self.inputs.push(id);
        id
    }

    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> NodeId {
        let shape = params.get(id).shape().to_vec();
        let label = params.name(id).to_string();
        self.push(Op::Param(id), vec![], shape, label)
    }

    pub fn conv(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let label = self.next_label("conv");
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.len() != 4 || ws.len() != 3 || bs.len() != 1 {
            return Err(structural(&label, format!(
                "expected x (B,C,M,L), w (O,C,K), b (O); got {xs:?}, {ws:?}, {bs:?}"
            )));
        }
        if ws[1] != xs[1] || bs[0] != ws[0] || ws[2] == 0 || ws[2] > xs[3] {
            return Err(structural(&label, format!(
                "incompatible shapes x {xs:?}, w {ws:?}, b {bs:?}"
            )));
        }
        let shape = vec![xs[0], ws[0], xs[2], xs[3] - ws[2] + 1];
        Ok(self.push(Op::Conv, vec![x, w, b], shape, label))
    }

    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let label = self.next_label("affine");
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.len() != 2 || ws.len() != 2 || bs.len() != 1 || ws[1] != xs[1] || bs[0] != ws[0] {
            return Err(structural(&label, format!(
                "expected x (R,D), w (O,D), b (O); got {xs:?}, {ws:?}, {bs:?}"
            )));
        }
        let shape = vec![xs[0], ws[0]];
        Ok(self.push(Op::Affine, vec![x, w, b], shape, label))
    }

    pub fn matmul_t(&mut self, x: NodeId, w: NodeId) -> Result<NodeId> {
        let label = self.next_label("matmul");
        let (xs, ws) = (self.shape(x), self.shape(w));
        if xs.len() != 2 || ws.len() != 2 || ws[1] != xs[1] {
            return Err(structural(&label, format!(
                "expected x (R,D), w (O,D); got {xs:?}, {ws:?}"
            )));
        }
        let shape = vec![xs[0], ws[0]];
        Ok(self.push(Op::MatMulT, vec![x, w], shape, label))
    }

    fn unary(&mut self, op: Op, kind: &str, x: NodeId) -> NodeId {
        let label = self.next_label(kind);
        let shape = self.shape(x).to_vec();
        self.push(op, vec![x], shape, label)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.unary(Op::Relu, "relu", x)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.unary(Op::Tanh, "tanh", x)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.unary(Op::Sigmoid, "sigmoid", x)
    }

    pub fn log(&mut self, x: NodeId) -> NodeId {
        self.unary(Op::Log, "log", x)
    }

    pub fn scale(&mut self, x: NodeId, k: f64) -> NodeId {
        self.unary(Op::Scale(k), "scale", x)
    }

    fn binary(&mut self, op: Op, kind: &str, a: NodeId, b: NodeId) -> Result<NodeId> {
        let label = self.next_label(kind);
        if self.shape(a) != self.shape(b) {
            return Err(structural(&label, format!(
                "operand shapes differ: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let shape = self.shape(a).to_vec();
        Ok(self.push(op, vec![a, b], shape, label))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(Op::Add, "add", a, b)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(Op::Sub, "sub", a, b)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(Op::Mul, "mul", a, b)
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let label = self.next_label("reshape");
        if numel(shape) != numel(self.shape(x)) {
            return Err(structural(&label, format!(
                "cannot reshape {:?} to {shape:?}",
                self.shape(x)
            )));
        }
        Ok(self.push(Op::Reshape, vec![x], shape.to_vec(), label))
    }

    pub fn transpose(&mut self, x: NodeId, perm: &[usize]) -> Result<NodeId> {
        let label = self.next_label("transpose");
        let xs = self.shape(x);
        let mut seen = vec![false; xs.len()];
        if perm.len() != xs.len() || perm.iter().any(|&p| p >= xs.len() || std::mem::replace(&mut seen[p], true)) {
            return Err(structural(&label, format!("invalid permutation {perm:?} for {xs:?}")));
        }
        let shape = perm.iter().map(|&p| xs[p]).collect();
        Ok(self.push(Op::Transpose(perm.to_vec()), vec![x], shape, label))
    }

    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> Result<NodeId> {
        let label = self.next_label("concat");
        let first = self
            .shape(*parts.first().ok_or_else(|| structural(&label, "nothing to concatenate"))?)
            .to_vec();
        if axis >= first.len() {
            return Err(structural(&label, format!("axis {axis} out of range for {first:?}")));
        }
        let mut shape = first.clone();
        shape[axis] = 0;
        for p in parts {
            let s = self.shape(*p);
            let compatible = s.len() == first.len()
                && s.iter().zip(&first).enumerate().all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(structural(&label, format!(
                    "cannot concatenate {s:?} with {first:?} along axis {axis}"
                )));
            }
            shape[axis] += s[axis];
        }
        Ok(self.push(Op::Concat(axis), parts.to_vec(), shape, label))
    }

    pub fn slice(&mut self, x: NodeId, axis: usize, start: usize, len: usize) -> Result<NodeId> {
        let label = self.next_label("slice");
        let xs = self.shape(x);
        if axis >= xs.len() || start + len > xs[axis] || len == 0 {
            return Err(structural(&label, format!(
                "slice [{start}, {}) on axis {axis} of {xs:?}",
                start + len
            )));
        }
        let mut shape = xs.to_vec();
        shape[axis] = len;
        Ok(self.push(Op::Slice { axis, start, len }, vec![x], shape, label))
    }

    pub fn repeat_rows(&mut self, x: NodeId, times: usize) -> Result<NodeId> {
        let label = self.next_label("repeat");
        let xs = self.shape(x);
        if xs.len() != 2 || xs[0] != 1 || times == 0 {
            return Err(structural(&label, format!("expected (1,K) input, got {xs:?}")));
        }
        let shape = vec![times, xs[1]];
        Ok(self.push(Op::RepeatRows(times), vec![x], shape, label))
    }

    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        let label = self.next_label("softmax");
        if self.shape(x).last().copied().unwrap_or(0) == 0 {
            return Err(structural(&label, "softmax needs a nonempty last axis"));
        }
        let shape = self.shape(x).to_vec();
        Ok(self.push(Op::Softmax, vec![x], shape, label))
    }

    pub fn sum_last(&mut self, x: NodeId) -> Result<NodeId> {
        let label = self.next_label("sum");
        let xs = self.shape(x);
        if xs.is_empty() {
            return Err(structural(&label, "cannot reduce a scalar"));
        }
        let shape = xs[..xs.len() - 1].to_vec();
        Ok(self.push(Op::SumLast, vec![x], shape, label))
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let label = self.next_label("mean");
        self.push(Op::Mean, vec![x], vec![], label)
    }

    pub fn sum_squares(&mut self, x: NodeId) -> NodeId {
        let label = self.next_label("sumsq");
        self.push(Op::SumSquares, vec![x], vec![], label)
    }

    fn weight_pair(&mut self, op: Op, kind: &str, a: NodeId, b: NodeId, reduce: bool) -> Result<NodeId> {
        let label = self.next_label(kind);
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sa != sb || sa[1] < 2 {
            return Err(structural(&label, format!(
                "expected two (B,K) weight matrices with K >= 2, got {sa:?}, {sb:?}"
            )));
        }
        let shape = if reduce { vec![sa[0]] } else { sa.to_vec() };
        Ok(self.push(op, vec![a, b], shape, label))
    }

    /// Row-wise weight drift: `w` moved by price relatives `y`.
    pub fn evolve(&mut self, w: NodeId, y: NodeId) -> Result<NodeId> {
        self.weight_pair(Op::Evolve, "evolve", w, y, false)
    }

    pub fn remainder(&mut self, w_prime: NodeId, w: NodeId, schedule: CommissionSchedule) -> Result<NodeId> {
        self.weight_pair(Op::Remainder(schedule), "remainder", w_prime, w, true)
    }

    pub fn remainder_approx(&mut self, w_prime: NodeId, w: NodeId, c: f64) -> Result<NodeId> {
        self.weight_pair(Op::RemainderApprox(c), "remainder_approx", w_prime, w, true)
    }

    /// Basic recurrent cell: `h' = tanh(x Wxᵀ + h Whᵀ + b)`.
    pub fn rnn_cell(&mut self, x: NodeId, h: NodeId, wx: NodeId, wh: NodeId, b: NodeId) -> Result<NodeId> {
        let a = self.affine(x, wx, b)?;
        let r = self.matmul_t(h, wh)?;
        let z = self.add(a, r)?;
        Ok(self.tanh(z))
    }

    /// LSTM cell with gate blocks stacked as (input, forget, candidate,
    /// output) along the rows of `wx (4H,D)`, `wh (4H,H)` and `b (4H)`.
    /// Returns the new hidden and cell states.
    pub fn lstm_cell(
        &mut self,
        x: NodeId,
        h: NodeId,
        c: NodeId,
        wx: NodeId,
        wh: NodeId,
        b: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let units = self.shape(h)[1];
        if self.shape(wx)[0] != 4 * units {
            let label = self.next_label("lstm");
            return Err(structural(&label, format!(
                "gate weights {:?} do not hold 4 blocks of {units} units",
                self.shape(wx)
            )));
        }
        let a = self.affine(x, wx, b)?;
        let r = self.matmul_t(h, wh)?;
        let z = self.add(a, r)?;
        let zi = self.slice(z, 1, 0, units)?;
        let zf = self.slice(z, 1, units, units)?;
        let zg = self.slice(z, 1, 2 * units, units)?;
        let zo = self.slice(z, 1, 3 * units, units)?;
        let (i, f, g, o) = (self.sigmoid(zi), self.sigmoid(zf), self.tanh(zg), self.sigmoid(zo));
        let keep = self.mul(f, c)?;
        let write = self.mul(i, g)?;
        let c_next = self.add(keep, write)?;
        let squashed = self.tanh(c_next);
        let h_next = self.mul(o, squashed)?;
        Ok((h_next, c_next))
    }

    pub fn build(self) -> Graph {
        Graph {
            nodes: self.nodes,
            inputs: self.inputs,
        }
    }
}

/// Values of every node after a forward pass.
#[derive(Debug, Clone)]
pub struct Evaluation {
    values: Vec<Tensor>,
}

impl Evaluation {
    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.values[id.0]
    }
}

/// Gradients aligned with the entries of a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Tensor>);

impl Gradients {
    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.0[id.0]
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |a, t| a.max(t.max_abs()))
    }
}

impl Graph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn label(&self, id: NodeId) -> &str {
        &self.nodes[id.0].label
    }

    pub fn input_shapes(&self) -> Vec<&[usize]> {
        self.inputs.iter().map(|i| self.shape(*i)).collect()
    }

    /// Evaluates every node. `inputs` follow declaration order.
    pub fn forward(&self, params: &ParamSet, inputs: &[&Tensor]) -> Result<Evaluation> {
        if inputs.len() != self.inputs.len() {
            return Err(structural(
                "graph",
                format!("expected {} inputs, got {}", self.inputs.len(), inputs.len()),
            ));
        }
        let mut values: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let get = |k: usize| &values[node.inputs[k].0];
            let data = match &node.op {
                Op::Input(k) => {
                    let t = inputs[*k];
                    if t.shape() != node.shape.as_slice() {
                        return Err(structural(&node.label, format!(
                            "input shape {:?} does not match declared {:?}",
                            t.shape(),
                            node.shape
                        )));
                    }
                    t.data().to_vec()
                }
                Op::Param(id) => {
                    let t = params.get(*id);
                    if t.shape() != node.shape.as_slice() {
                        return Err(structural(&node.label, format!(
                            "parameter shape {:?} does not match graph {:?}",
                            t.shape(),
                            node.shape
                        )));
                    }
                    t.data().to_vec()
                }
                Op::Conv => conv_forward(get(0), get(1), get(2)),
                Op::Affine => affine_forward(get(0), get(1), Some(get(2))),
                Op::MatMulT => affine_forward(get(0), get(1), None),
                Op::Relu => get(0).data().iter().map(|x| x.max(0.0)).collect(),
                Op::Tanh => get(0).data().iter().map(|x| x.tanh()).collect(),
                Op::Sigmoid => get(0).data().iter().map(|x| sigmoid(*x)).collect(),
                Op::Log => get(0).data().iter().map(|x| x.ln()).collect(),
                Op::Scale(k) => get(0).data().iter().map(|x| x * k).collect(),
                Op::Add => zip_map(get(0), get(1), |a, b| a + b),
                Op::Sub => zip_map(get(0), get(1), |a, b| a - b),
                Op::Mul => zip_map(get(0), get(1), |a, b| a * b),
                Op::Reshape => get(0).data().to_vec(),
                Op::Transpose(perm) => transpose(get(0).data(), get(0).shape(), perm),
                Op::Concat(axis) => {
                    let parts: Vec<&Tensor> = node.inputs.iter().map(|i| &values[i.0]).collect();
                    concat_forward(&parts, *axis)
                }
                Op::Slice { axis, start, len } => slice_forward(get(0), *axis, *start, *len),
                Op::RepeatRows(times) => get(0).data().repeat(*times),
                Op::Softmax => softmax_forward(get(0)),
                Op::SumLast => {
                    let k = *get(0).shape().last().unwrap();
                    get(0).data().chunks(k).map(|c| c.iter().sum()).collect()
                }
                Op::Mean => {
                    let x = get(0);
                    vec![x.data().iter().sum::<f64>() / x.len() as f64]
                }
                Op::SumSquares => vec![get(0).sum_squares()],
                Op::Evolve => {
                    let (w, y) = (get(0), get(1));
                    let k = w.shape()[1];
                    w.data()
                        .chunks(k)
                        .zip(y.data().chunks(k))
                        .flat_map(|(wr, yr)| crate::portfolio::evolve_slice(yr, wr))
                        .collect()
                }
                Op::Remainder(c) => {
                    let (wp, w) = (get(0), get(1));
                    let k = wp.shape()[1];
                    let mut out = Vec::with_capacity(wp.shape()[0]);
                    for (a, b) in wp.data().chunks(k).zip(w.data().chunks(k)) {
                        out.push(solve_remainder(a, b, *c)?.mu);
                    }
                    out
                }
                Op::RemainderApprox(c) => {
                    let (wp, w) = (get(0), get(1));
                    let k = wp.shape()[1];
                    wp.data()
                        .chunks(k)
                        .zip(w.data().chunks(k))
                        .map(|(a, b)| approx_remainder(a, b, *c))
                        .collect()
                }
            };
            values.push(Tensor::from_parts(node.shape.clone(), data));
        }
        Ok(Evaluation { values })
    }

    /// Reverse-mode gradients of a one-element `loss` node with respect to
    /// every parameter in `params` (zero for parameters the loss ignores).
    pub fn backward(&self, eval: &Evaluation, params: &ParamSet, loss: NodeId) -> Result<Gradients> {
        let loss_node = &self.nodes[loss.0];
        if numel(&loss_node.shape) != 1 {
            return Err(structural(&loss_node.label, format!(
                "loss must be scalar, has shape {:?}",
                loss_node.shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        let mut out: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            let Some(g) = grads[idx].take() else { continue };
            if !node.needs_grad {
                continue;
            }
            let val = |k: usize| eval.value(node.inputs[k]);
            let wants = |k: usize| self.nodes[node.inputs[k].0].needs_grad;
            let acc = |k: usize, contribution: Vec<f64>, grads: &mut Vec<Option<Vec<f64>>>| {
                let target = node.inputs[k].0;
                match &mut grads[target] {
                    Some(existing) => existing.iter_mut().zip(&contribution).for_each(|(e, c)| *e += c),
                    slot => *slot = Some(contribution),
                }
            };
            match &node.op {
                Op::Input(_) => {}
                Op::Param(id) => {
                    out[id.0].data_mut().iter_mut().zip(&g).for_each(|(o, gi)| *o += gi);
                }
                Op::Conv => {
                    let (gx, gw, gb) = conv_backward(val(0), val(1), &g);
                    if wants(0) { acc(0, gx, &mut grads); }
                    if wants(1) { acc(1, gw, &mut grads); }
                    if wants(2) { acc(2, gb, &mut grads); }
                }
                Op::Affine | Op::MatMulT => {
                    let (gx, gw, gb) = affine_backward(val(0), val(1), &g);
                    if wants(0) { acc(0, gx, &mut grads); }
                    if wants(1) { acc(1, gw, &mut grads); }
                    if node.inputs.len() == 3 && wants(2) { acc(2, gb, &mut grads); }
                }
                Op::Relu => {
                    let gx = g.iter().zip(val(0).data()).map(|(g, x)| if *x > 0.0 { *g } else { 0.0 }).collect();
                    acc(0, gx, &mut grads);
                }
                Op::Tanh => {
                    let y = eval.value(NodeId(idx)).data();
                    let gx = g.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect();
                    acc(0, gx, &mut grads);
                }
                Op::Sigmoid => {
                    let y = eval.value(NodeId(idx)).data();
                    let gx = g.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect();
                    acc(0, gx, &mut grads);
                }
                Op::Log => {
                    let gx = g.iter().zip(val(0).data()).map(|(g, x)| g / x).collect();
                    acc(0, gx, &mut grads);
                }
                Op::Scale(k) => acc(0, g.iter().map(|x| x * k).collect(), &mut grads),
                Op::Add => {
                    if wants(0) { acc(0, g.clone(), &mut grads); }
                    if wants(1) { acc(1, g, &mut grads); }
                }
                Op::Sub => {
                    if wants(0) { acc(0, g.clone(), &mut grads); }
                    if wants(1) { acc(1, g.iter().map(|x| -x).collect(), &mut grads); }
                }
                Op::Mul => {
                    if wants(0) {
                        acc(0, g.iter().zip(val(1).data()).map(|(g, b)| g * b).collect(), &mut grads);
                    }
                    if wants(1) {
                        acc(1, g.iter().zip(val(0).data()).map(|(g, a)| g * a).collect(), &mut grads);
                    }
                }
                Op::Reshape => acc(0, g, &mut grads),
                Op::Transpose(perm) => {
                    let mut inverse = vec![0; perm.len()];
                    for (d, &p) in perm.iter().enumerate() {
                        inverse[p] = d;
                    }
                    acc(0, transpose(&g, &node.shape, &inverse), &mut grads);
                }
                Op::Concat(axis) => {
                    let outer: usize = node.shape[..*axis].iter().product();
                    let inner: usize = node.shape[axis + 1..].iter().product();
                    let total = node.shape[*axis] * inner;
                    let mut offset = 0;
                    for k in 0..node.inputs.len() {
                        let width = val(k).shape()[*axis] * inner;
                        if wants(k) {
                            let mut part = Vec::with_capacity(outer * width);
                            for o in 0..outer {
                                part.extend_from_slice(&g[o * total + offset..o * total + offset + width]);
                            }
                            acc(k, part, &mut grads);
                        }
                        offset += width;
                    }
                }
                Op::Slice { axis, start, len } => {
                    let xs = val(0).shape();
                    let outer: usize = xs[..*axis].iter().product();
                    let inner: usize = xs[axis + 1..].iter().product();
                    let mut gx = vec![0.0; val(0).len()];
                    let (full, width) = (xs[*axis] * inner, len * inner);
                    for o in 0..outer {
                        gx[o * full + start * inner..o * full + start * inner + width]
                            .copy_from_slice(&g[o * width..(o + 1) * width]);
                    }
                    acc(0, gx, &mut grads);
                }
                Op::RepeatRows(_) => {
                    let k = node.shape[1];
                    let mut gx = vec![0.0; k];
                    for row in g.chunks(k) {
                        gx.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                    }
                    acc(0, gx, &mut grads);
                }
                Op::Softmax => {
                    let y = eval.value(NodeId(idx)).data();
                    let k = *node.shape.last().unwrap();
                    let mut gx = Vec::with_capacity(g.len());
                    for (gr, yr) in g.chunks(k).zip(y.chunks(k)) {
                        let inner: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        gx.extend(gr.iter().zip(yr).map(|(a, b)| b * (a - inner)));
                    }
                    acc(0, gx, &mut grads);
                }
                Op::SumLast => {
                    let k = *val(0).shape().last().unwrap();
                    acc(0, g.iter().flat_map(|x| std::iter::repeat_n(*x, k)).collect(), &mut grads);
                }
                Op::Mean => {
                    let n = val(0).len();
                    acc(0, vec![g[0] / n as f64; n], &mut grads);
                }
                Op::SumSquares => {
                    acc(0, val(0).data().iter().map(|x| 2.0 * x * g[0]).collect(), &mut grads);
                }
                Op::Evolve => {
                    let (w, y) = (val(0), val(1));
                    let k = w.shape()[1];
                    let out_v = eval.value(NodeId(idx)).data();
                    let mut gw = Vec::with_capacity(w.len());
                    let mut gy = Vec::with_capacity(y.len());
                    for r in 0..w.shape()[0] {
                        let range = r * k..(r + 1) * k;
                        let (wr, yr, gr, or) = (&w.data()[range.clone()], &y.data()[range.clone()], &g[range.clone()], &out_v[range]);
                        let s: f64 = wr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        let dot: f64 = gr.iter().zip(or).map(|(a, b)| a * b).sum();
                        gw.extend((0..k).map(|j| yr[j] / s * (gr[j] - dot)));
                        gy.extend((0..k).map(|j| wr[j] / s * (gr[j] - dot)));
                    }
                    if wants(0) { acc(0, gw, &mut grads); }
                    if wants(1) { acc(1, gy, &mut grads); }
                }
                Op::Remainder(c) => {
                    let (wp, w) = (val(0), val(1));
                    let mu = eval.value(NodeId(idx)).data();
                    let (gwp, gw) = remainder_backward(wp, w, mu, &g, *c);
                    if wants(0) { acc(0, gwp, &mut grads); }
                    if wants(1) { acc(1, gw, &mut grads); }
                }
                Op::RemainderApprox(c) => {
                    let (wp, w) = (val(0), val(1));
                    let mu = eval.value(NodeId(idx)).data();
                    let k = wp.shape()[1];
                    let mut gwp = vec![0.0; wp.len()];
                    let mut gw = vec![0.0; w.len()];
                    for r in 0..wp.shape()[0] {
                        // clamped rows are flat
                        if mu[r] <= f64::MIN_POSITIVE {
                            continue;
                        }
                        for i in 1..k {
                            let d = wp.data()[r * k + i] - w.data()[r * k + i];
                            let s = if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 };
                            gwp[r * k + i] = -g[r] * c * s;
                            gw[r * k + i] = g[r] * c * s;
                        }
                    }
                    if wants(0) { acc(0, gwp, &mut grads); }
                    if wants(1) { acc(1, gw, &mut grads); }
                }
            }
        }
        Ok(Gradients(out))
    }

    /// Forward then backward in one call; returns the loss value too.
    pub fn value_and_grad(&self, params: &ParamSet, inputs: &[&Tensor], loss: NodeId) -> Result<(f64, Gradients, Evaluation)> {
        let eval = self.forward(params, inputs)?;
        let grads = self.backward(&eval, params, loss)?;
        Ok((eval.value(loss).item(), grads, eval))
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect()
}

fn conv_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Vec<f64> {
    let (bn, c_in, m, l) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (c_out, k) = (w.shape()[0], w.shape()[2]);
    let lo = l - k + 1;
    let (xd, wd) = (x.data(), w.data());
    let mut out = vec![0.0; bn * c_out * m * lo];
    for bi in 0..bn {
        for o in 0..c_out {
            for i in 0..m {
                let row = &mut out[((bi * c_out + o) * m + i) * lo..][..lo];
                row.fill(b.data()[o]);
                for c in 0..c_in {
                    let xr = &xd[((bi * c_in + c) * m + i) * l..][..l];
                    for kk in 0..k {
                        let wv = wd[(o * c_in + c) * k + kk];
                        for (r, xv) in row.iter_mut().zip(&xr[kk..kk + lo]) {
                            *r += wv * xv;
                        }
                    }
                }
            }
        }
    }
    out
}

fn conv_backward(x: &Tensor, w: &Tensor, g: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (bn, c_in, m, l) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (c_out, k) = (w.shape()[0], w.shape()[2]);
    let lo = l - k + 1;
    let (xd, wd) = (x.data(), w.data());
    let mut gx = vec![0.0; xd.len()];
    let mut gw = vec![0.0; wd.len()];
    let mut gb = vec![0.0; c_out];
    for bi in 0..bn {
        for o in 0..c_out {
            for i in 0..m {
                let gr = &g[((bi * c_out + o) * m + i) * lo..][..lo];
                gb[o] += gr.iter().sum::<f64>();
                for c in 0..c_in {
                    let base = ((bi * c_in + c) * m + i) * l;
                    for kk in 0..k {
                        let widx = (o * c_in + c) * k + kk;
                        let wv = wd[widx];
                        let mut acc = 0.0;
                        for j in 0..lo {
                            acc += gr[j] * xd[base + j + kk];
                            gx[base + j + kk] += gr[j] * wv;
                        }
                        gw[widx] += acc;
                    }
                }
            }
        }
    }
    (gx, gw, gb)
}

fn affine_forward(x: &Tensor, w: &Tensor, b: Option<&Tensor>) -> Vec<f64> {
    let (r, d) = (x.shape()[0], x.shape()[1]);
    let o = w.shape()[0];
    let mut out = Vec::with_capacity(r * o);
    for xr in x.data().chunks(d).take(r) {
        for p in 0..o {
            let wr = &w.data()[p * d..(p + 1) * d];
            let dot: f64 = xr.iter().zip(wr).map(|(a, b)| a * b).sum();
            out.push(dot + b.map_or(0.0, |b| b.data()[p]));
        }
    }
    out
}

fn affine_backward(x: &Tensor, w: &Tensor, g: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (r, d) = (x.shape()[0], x.shape()[1]);
    let o = w.shape()[0];
    let mut gx = vec![0.0; r * d];
    let mut gw = vec![0.0; o * d];
    let mut gb = vec![0.0; o];
    for row in 0..r {
        let xr = &x.data()[row * d..(row + 1) * d];
        for p in 0..o {
            let gv = g[row * o + p];
            if gv == 0.0 {
                continue;
            }
            gb[p] += gv;
            let wr = &w.data()[p * d..(p + 1) * d];
            for q in 0..d {
                gx[row * d + q] += gv * wr[q];
                gw[p * d + q] += gv * xr[q];
            }
        }
    }
    (gx, gw, gb)
}

fn transpose(data: &[f64], shape: &[usize], perm: &[usize]) -> Vec<f64> {
    let rank = shape.len();
    let mut in_strides = vec![1; rank];
    for d in (0..rank.saturating_sub(1)).rev() {
        in_strides[d] = in_strides[d + 1] * shape[d + 1];
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let mut out = Vec::with_capacity(data.len());
    let mut index = vec![0usize; rank];
    for _ in 0..data.len() {
        let src: usize = index.iter().zip(&strides).map(|(i, s)| i * s).sum();
        out.push(data[src]);
        for d in (0..rank).rev() {
            index[d] += 1;
            if index[d] < out_shape[d] {
                break;
            }
            index[d] = 0;
        }
    }
    out
}

fn concat_forward(parts: &[&Tensor], axis: usize) -> Vec<f64> {
    let shape = parts[0].shape();
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
    for o in 0..outer {
        for p in parts {
            let width = p.shape()[axis] * inner;
            out.extend_from_slice(&p.data()[o * width..(o + 1) * width]);
        }
    }
    out
}

fn slice_forward(x: &Tensor, axis: usize, start: usize, len: usize) -> Vec<f64> {
    let xs = x.shape();
    let outer: usize = xs[..axis].iter().product();
    let inner: usize = xs[axis + 1..].iter().product();
    let (full, width) = (xs[axis] * inner, len * inner);
    let mut out = Vec::with_capacity(outer * width);
    for o in 0..outer {
        out.extend_from_slice(&x.data()[o * full + start * inner..][..width]);
    }
    out
}

/// Softmax with an order-independent normalizer: the exponentials are
/// summed in sorted order, so permuting the logits permutes the output
/// bit for bit.
fn softmax_forward(x: &Tensor) -> Vec<f64> {
    let k = *x.shape().last().unwrap();
    let mut out = Vec::with_capacity(x.len());
    let mut sorted = vec![0.0; k];
    for row in x.data().chunks(k) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        out.extend(row.iter().map(|v| (v - max).exp()));
        sorted.copy_from_slice(&out[start..]);
        sorted.sort_by(f64::total_cmp);
        let total: f64 = sorted.iter().sum();
        out[start..].iter_mut().for_each(|e| *e /= total);
    }
    out
}

/// Implicit-function gradient of the remainder fixed point
/// `μ = f(μ; w', w)`: `dμ = (∂f/∂z) dz / (1 - ∂f/∂μ)`.
fn remainder_backward(wp: &Tensor, w: &Tensor, mu: &[f64], g: &[f64], c: CommissionSchedule) -> (Vec<f64>, Vec<f64>) {
    let k = wp.shape()[1];
    let mut gwp = vec![0.0; wp.len()];
    let mut gw = vec![0.0; w.len()];
    let kappa = c.sell + c.buy - c.sell * c.buy;
    for r in 0..wp.shape()[0] {
        if c.is_free() {
            continue;
        }
        let a = &wp.data()[r * k..(r + 1) * k];
        let b = &w.data()[r * k..(r + 1) * k];
        let m = mu[r];
        let denom = 1.0 - c.buy * b[0];
        let active: Vec<bool> = (0..k).map(|i| i > 0 && a[i] - m * b[i] > 0.0).collect();
        let df_dmu: f64 = (1..k).filter(|&i| active[i]).map(|i| kappa * b[i]).sum::<f64>() / denom;
        let scale = g[r] / (1.0 - df_dmu);
        let f_val = remainder_map(m, a, b, c);
        gwp[r * k] = scale * (-c.buy / denom);
        gw[r * k] = scale * (c.buy * f_val / denom);
        for i in 1..k {
            if active[i] {
                gwp[r * k + i] = scale * (-kappa / denom);
                gw[r * k + i] = scale * (kappa * m / denom);
            }
        }
    }
    (gwp, gw)
}
