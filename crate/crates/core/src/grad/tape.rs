use std::cell::{Cell, RefCell};
use std::rc::Rc;

use super::tensor::{gemm, Tensor};
use super::GradError;

/// Channel layout of a stacked jet batch.
///
/// A jet batch of `batch` points is stored as `channels() * batch` rows.
/// Channel 0 holds values; axis `a` contributes the first directional
/// derivative at channel `1 + a * order` and, for `order == 2`, the second
/// directional derivative right after it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct JetLayout {
    pub batch: usize,
    pub axes: usize,
    pub order: usize,
}

impl JetLayout {
    pub fn channels(&self) -> usize {
        1 + self.axes * self.order
    }

    pub fn d1_channel(&self, axis: usize) -> usize {
        1 + axis * self.order
    }

    pub fn d2_channel(&self, axis: usize) -> usize {
        debug_assert_eq!(self.order, 2);
        2 + axis * self.order
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    MatMul(usize, usize),
    AddBias { x: usize, bias: usize, rows: usize },
    Sin { x: usize, cos: Tensor },
    Cos { x: usize, sin: Tensor },
    Abs(usize),
    Sum(usize),
    Mean(usize),
    SumSquares(usize),
    Gather { x: usize, idx: Rc<[usize]> },
    ScatterAdd { x: usize, idx: Rc<[usize]> },
    Laplacian { x: usize, m: usize },
    NeumannLaplacian { x: usize, m: usize },
    Concat(Vec<usize>),
    SliceRows { x: usize, start: usize },
    Reshape(usize),
    JetSin { x: usize, layout: JetLayout, sin: Tensor, cos: Tensor },
}

impl Op {
    fn kind(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "subtract",
            Op::Mul(..) => "multiply",
            Op::Scale(..) => "scale",
            Op::MatMul(..) => "matmul",
            Op::AddBias { .. } => "add_bias",
            Op::Sin { .. } => "sin",
            Op::Cos { .. } => "cos",
            Op::Abs(..) => "abs",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::SumSquares(..) => "sum_squares",
            Op::Gather { .. } => "gather",
            Op::ScatterAdd { .. } => "scatter_add",
            Op::Laplacian { .. } => "laplacian",
            Op::NeumannLaplacian { .. } => "neumann_laplacian",
            Op::Concat(..) => "concat",
            Op::SliceRows { .. } => "slice_rows",
            Op::Reshape(..) => "reshape",
            Op::JetSin { .. } => "jet_sin",
        }
    }
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    /// Depends on at least one tracked leaf.
    tracked: bool,
}

/// Eagerly evaluated computation record for reverse-mode differentiation.
///
/// Every operation computes its value immediately and appends a node whose
/// inputs all precede it, so the node list is already in topological order.
/// A tape supports a single reverse sweep (or one batch of sweeps through
/// [`Tape::backward_each`]); build a new tape for the next forward pass.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    consumed: Cell<bool>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{} {:?}", self.id, self.value())
    }
}

/// Gradients of one scalar with respect to the tracked leaves of a tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for a tracked leaf. `None` for constants and for leaves the
    /// loss does not depend on.
    pub fn get(&self, var: &Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    pub fn get_id(&self, id: usize) -> Option<&Tensor> {
        self.grads.get(id).and_then(Option::as_ref)
    }

    /// Gradient for `var`, with zeros substituted when the loss does not
    /// depend on it.
    pub fn get_or_zeros(&self, var: &Var<'_>) -> Tensor {
        match self.get(var) {
            Some(g) => g.clone(),
            None => Tensor::zeros(var.value().shape()),
        }
    }

    pub fn take(&mut self, var: &Var<'_>) -> Option<Tensor> {
        self.grads.get_mut(var.id).and_then(Option::take)
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            consumed: Cell::new(false),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Leaf whose gradient is reported by [`Tape::backward`].
    pub fn var(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf without gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    fn push(&self, value: Tensor, op: Op, tracked: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            tracked,
        });
        Var { tape: self, id }
    }

    fn value_of(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn tracked(&self, id: usize) -> bool {
        self.nodes.borrow()[id].tracked
    }

    fn check_same_tape(&self, other: &Var<'_>) {
        assert!(
            std::ptr::eq(self, other.tape),
            "variables from different tapes cannot be combined"
        );
    }

    /// Reverse sweep from a scalar loss.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients, GradError> {
        let mut all = self.backward_each(&[loss])?;
        Ok(all.pop().expect("one root"))
    }

    /// One reverse sweep per root, consuming the tape once for all of them.
    pub fn backward_each(&self, roots: &[Var<'_>]) -> Result<Vec<Gradients>, GradError> {
        if self.consumed.replace(true) {
            return Err(GradError::TapeConsumed);
        }
        roots.iter().map(|r| self.sweep(r)).collect()
    }

    fn sweep(&self, root: &Var<'_>) -> Result<Gradients, GradError> {
        self.check_same_tape(root);
        let nodes = self.nodes.borrow();
        let root_value = &nodes[root.id].value;
        if !root_value.is_scalar() {
            return Err(GradError::NonScalarLoss {
                shape: root_value.shape().to_vec(),
            });
        }
        let mut adj: Vec<Option<Tensor>> = (0..=root.id).map(|_| None).collect();
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        if nodes[root.id].tracked {
            adj[root.id] = Some(Tensor::full(root_value.shape(), 1.0));
        }
        for id in (0..=root.id).rev() {
            let Some(g) = adj[id].take() else { continue };
            let node = &nodes[id];
            if !node.tracked {
                continue;
            }
            if let Some(pos) = g.first_non_finite() {
                return Err(GradError::NonFiniteAdjoint {
                    node: id,
                    op: node.op.kind(),
                    index: pos,
                });
            }
            if let Op::Leaf = node.op {
                grads[id] = Some(g);
                continue;
            }
            propagate(&nodes, id, g, &mut adj);
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(nodes: &[Node], adj: &mut [Option<Tensor>], id: usize, contrib: Tensor) {
    if !nodes[id].tracked {
        return;
    }
    match &mut adj[id] {
        Some(existing) => existing.axpy(1.0, &contrib),
        slot @ None => *slot = Some(contrib),
    }
}

fn propagate(nodes: &[Node], id: usize, g: Tensor, adj: &mut [Option<Tensor>]) {
    match &nodes[id].op {
        Op::Leaf => unreachable!(),
        Op::Add(a, b) => {
            if nodes[*b].tracked {
                accumulate(nodes, adj, *b, g.clone());
            }
            accumulate(nodes, adj, *a, g);
        }
        Op::Sub(a, b) => {
            if nodes[*b].tracked {
                accumulate(nodes, adj, *b, g.map(|v| -v));
            }
            accumulate(nodes, adj, *a, g);
        }
        Op::Mul(a, b) => {
            let (va, vb) = (&nodes[*a].value, &nodes[*b].value);
            if nodes[*a].tracked {
                accumulate(nodes, adj, *a, g.zip_map(vb, |x, y| x * y));
            }
            if nodes[*b].tracked {
                accumulate(nodes, adj, *b, g.zip_map(va, |x, y| x * y));
            }
        }
        Op::Scale(a, k) => {
            let mut g = g;
            g.scale_in_place(*k);
            accumulate(nodes, adj, *a, g);
        }
        Op::MatMul(a, b) => {
            let va = &nodes[*a].value;
            let vb = &nodes[*b].value;
            let (m, k) = va.dims2().expect("matmul lhs is rank 2");
            let n = vb.dims2().expect("matmul rhs is rank 2").1;
            if nodes[*a].tracked {
                let mut da = Tensor::zeros(&[m, k]);
                gemm(g.data(), false, vb.data(), true, m, n, k, da.data_mut(), false);
                accumulate(nodes, adj, *a, da);
            }
            if nodes[*b].tracked {
                let mut db = Tensor::zeros(&[k, n]);
                gemm(va.data(), true, g.data(), false, k, m, n, db.data_mut(), false);
                accumulate(nodes, adj, *b, db);
            }
        }
        Op::AddBias { x, bias, rows } => {
            let vb = &nodes[*bias].value;
            if nodes[*bias].tracked {
                let n = vb.len();
                let mut db = vec![0.0; n];
                for row in g.data()[..rows * n].chunks_exact(n) {
                    for (d, v) in db.iter_mut().zip(row) {
                        *d += v;
                    }
                }
                let db = Tensor::new(vb.shape().to_vec(), db).expect("bias shape");
                accumulate(nodes, adj, *bias, db);
            }
            accumulate(nodes, adj, *x, g);
        }
        Op::Sin { x, cos } => accumulate(nodes, adj, *x, g.zip_map(cos, |a, c| a * c)),
        Op::Cos { x, sin } => accumulate(nodes, adj, *x, g.zip_map(sin, |a, s| -a * s)),
        Op::Abs(x) => {
            let vx = &nodes[*x].value;
            accumulate(nodes, adj, *x, g.zip_map(vx, |a, v| a * sign(v)));
        }
        Op::Sum(x) => {
            let shape = nodes[*x].value.shape().to_vec();
            accumulate(nodes, adj, *x, Tensor::full(&shape, g.item()));
        }
        Op::Mean(x) => {
            let vx = &nodes[*x].value;
            let n = vx.len().max(1) as f64;
            accumulate(nodes, adj, *x, Tensor::full(vx.shape(), g.item() / n));
        }
        Op::SumSquares(x) => {
            let k = 2.0 * g.item();
            accumulate(nodes, adj, *x, nodes[*x].value.map(|v| k * v));
        }
        Op::Gather { x, idx } => {
            let vx = &nodes[*x].value;
            let mut dx = Tensor::zeros(vx.shape());
            let d = dx.data_mut();
            for (&i, &v) in idx.iter().zip(g.data()) {
                d[i] += v;
            }
            accumulate(nodes, adj, *x, dx);
        }
        Op::ScatterAdd { x, idx } => {
            let vx = &nodes[*x].value;
            let data = idx.iter().map(|&i| g.data()[i]).collect();
            let dx = Tensor::new(vx.shape().to_vec(), data).expect("scatter source shape");
            accumulate(nodes, adj, *x, dx);
        }
        Op::Laplacian { x, m } => {
            let mut dx = Tensor::zeros(&[*m, *m]);
            laplacian_transpose(g.data(), *m, dx.data_mut());
            accumulate(nodes, adj, *x, dx);
        }
        Op::NeumannLaplacian { x, m } => {
            let mut dx = Tensor::zeros(&[*m, *m]);
            neumann_laplacian_transpose(g.data(), *m, dx.data_mut());
            accumulate(nodes, adj, *x, dx);
        }
        Op::Concat(parts) => {
            let mut offset = 0;
            for &p in parts {
                let vp = &nodes[p].value;
                let len = vp.len();
                if nodes[p].tracked {
                    let data = g.data()[offset..offset + len].to_vec();
                    let dp = Tensor::new(vp.shape().to_vec(), data).expect("concat part");
                    accumulate(nodes, adj, p, dp);
                }
                offset += len;
            }
        }
        Op::SliceRows { x, start } => {
            let vx = &nodes[*x].value;
            let (_, cols) = vx.dims2().expect("slice source is rank 2");
            let mut dx = Tensor::zeros(vx.shape());
            let begin = start * cols;
            dx.data_mut()[begin..begin + g.len()].copy_from_slice(g.data());
            accumulate(nodes, adj, *x, dx);
        }
        Op::Reshape(x) => {
            let shape = nodes[*x].value.shape().to_vec();
            accumulate(nodes, adj, *x, g.reshape(shape).expect("same length"));
        }
        Op::JetSin {
            x,
            layout,
            sin,
            cos,
        } => {
            let vx = &nodes[*x].value;
            let dx = jet_sin_backward(vx, g.data(), *layout, sin.data(), cos.data());
            accumulate(nodes, adj, *x, dx);
        }
    }
}

/// Subgradient convention: sign(0) = 0.
pub(crate) fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Five-point stencil on interior nodes; boundary ring is zero.
pub(crate) fn laplacian_forward(p: &[f64], m: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for i in 1..m - 1 {
        let row = i * m;
        for j in 1..m - 1 {
            let c = row + j;
            out[c] = p[c - m] + p[c + m] + p[c - 1] + p[c + 1] - 4.0 * p[c];
        }
    }
}

pub(crate) fn laplacian_transpose(g: &[f64], m: usize, out: &mut [f64]) {
    for i in 1..m - 1 {
        let row = i * m;
        for j in 1..m - 1 {
            let c = row + j;
            let v = g[c];
            out[c - m] += v;
            out[c + m] += v;
            out[c - 1] += v;
            out[c + 1] += v;
            out[c] -= 4.0 * v;
        }
    }
}

#[inline]
fn mirror(i: isize, m: usize) -> usize {
    let last = m as isize - 1;
    if i < 0 {
        (-i) as usize
    } else if i > last {
        (2 * last - i) as usize
    } else {
        i as usize
    }
}

/// Five-point stencil on every node with mirrored ghost values
/// (homogeneous Neumann walls).
pub(crate) fn neumann_laplacian_forward(p: &[f64], m: usize, out: &mut [f64]) {
    for i in 0..m {
        let (up, down) = (mirror(i as isize - 1, m), mirror(i as isize + 1, m));
        for j in 0..m {
            let (left, right) = (mirror(j as isize - 1, m), mirror(j as isize + 1, m));
            out[i * m + j] = p[up * m + j] + p[down * m + j] + p[i * m + left] + p[i * m + right]
                - 4.0 * p[i * m + j];
        }
    }
}

pub(crate) fn neumann_laplacian_transpose(g: &[f64], m: usize, out: &mut [f64]) {
    for i in 0..m {
        let (up, down) = (mirror(i as isize - 1, m), mirror(i as isize + 1, m));
        for j in 0..m {
            let (left, right) = (mirror(j as isize - 1, m), mirror(j as isize + 1, m));
            let v = g[i * m + j];
            out[up * m + j] += v;
            out[down * m + j] += v;
            out[i * m + left] += v;
            out[i * m + right] += v;
            out[i * m + j] -= 4.0 * v;
        }
    }
}

fn jet_sin_forward(x: &Tensor, layout: JetLayout) -> (Tensor, Tensor, Tensor) {
    let (_, cols) = x.dims2().expect("jet batch is rank 2");
    let plane = layout.batch * cols;
    let xd = x.data();
    let mut out = Tensor::zeros(x.shape());
    let mut sin = Tensor::zeros(&[layout.batch, cols]);
    let mut cos = Tensor::zeros(&[layout.batch, cols]);
    {
        let (s, c) = (sin.data_mut(), cos.data_mut());
        for k in 0..plane {
            let (sv, cv) = xd[k].sin_cos();
            s[k] = sv;
            c[k] = cv;
        }
    }
    let (s, c) = (sin.data(), cos.data());
    let o = out.data_mut();
    o[..plane].copy_from_slice(s);
    for axis in 0..layout.axes {
        let d1 = layout.d1_channel(axis) * plane;
        if layout.order == 2 {
            let d2 = layout.d2_channel(axis) * plane;
            for k in 0..plane {
                let z1 = xd[d1 + k];
                o[d1 + k] = c[k] * z1;
                o[d2 + k] = c[k] * xd[d2 + k] - s[k] * z1 * z1;
            }
        } else {
            for k in 0..plane {
                o[d1 + k] = c[k] * xd[d1 + k];
            }
        }
    }
    (out, sin, cos)
}

fn jet_sin_backward(x: &Tensor, g: &[f64], layout: JetLayout, s: &[f64], c: &[f64]) -> Tensor {
    let (_, cols) = x.dims2().expect("jet batch is rank 2");
    let plane = layout.batch * cols;
    let xd = x.data();
    let mut dx = Tensor::zeros(x.shape());
    let d = dx.data_mut();
    for k in 0..plane {
        d[k] = g[k] * c[k];
    }
    for axis in 0..layout.axes {
        let d1 = layout.d1_channel(axis) * plane;
        if layout.order == 2 {
            let d2 = layout.d2_channel(axis) * plane;
            for k in 0..plane {
                let (z1, z2) = (xd[d1 + k], xd[d2 + k]);
                let (g1, g2) = (g[d1 + k], g[d2 + k]);
                d[k] += -g1 * s[k] * z1 - g2 * (s[k] * z2 + c[k] * z1 * z1);
                d[d1 + k] = g1 * c[k] - 2.0 * g2 * s[k] * z1;
                d[d2 + k] = g2 * c[k];
            }
        } else {
            for k in 0..plane {
                d[k] -= g[d1 + k] * s[k] * xd[d1 + k];
                d[d1 + k] = g[d1 + k] * c[k];
            }
        }
    }
    dx
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(), GradError> {
    if a.shape() != b.shape() {
        return Err(GradError::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    /// Value of a single-element node.
    pub fn item(&self) -> f64 {
        self.value().item()
    }

    pub fn is_tracked(&self) -> bool {
        self.tape.tracked(self.id)
    }

    fn unary(&self, value: Tensor, op: Op) -> Var<'t> {
        self.tape.push(value, op, self.is_tracked())
    }

    fn binary(&self, other: &Var<'t>, value: Tensor, op: Op) -> Var<'t> {
        self.tape.check_same_tape(other);
        let tracked = self.is_tracked() || other.is_tracked();
        self.tape.push(value, op, tracked)
    }

    pub fn add(&self, other: &Var<'t>) -> Result<Var<'t>, GradError> {
        let (a, b) = (self.value(), other.value());
        same_shape("add", &a, &b)?;
        Ok(self.binary(other, a.zip_map(&b, |x, y| x + y), Op::Add(self.id, other.id)))
    }

    pub fn sub(&self, other: &Var<'t>) -> Result<Var<'t>, GradError> {
        let (a, b) = (self.value(), other.value());
        same_shape("subtract", &a, &b)?;
        Ok(self.binary(other, a.zip_map(&b, |x, y| x - y), Op::Sub(self.id, other.id)))
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Var<'t>) -> Result<Var<'t>, GradError> {
        let (a, b) = (self.value(), other.value());
        same_shape("multiply", &a, &b)?;
        Ok(self.binary(other, a.zip_map(&b, |x, y| x * y), Op::Mul(self.id, other.id)))
    }

    pub fn scale(&self, k: f64) -> Var<'t> {
        self.unary(self.value().map(|v| k * v), Op::Scale(self.id, k))
    }

    pub fn matmul(&self, other: &Var<'t>) -> Result<Var<'t>, GradError> {
        let (a, b) = (self.value(), other.value());
        let mismatch = || GradError::ShapeMismatch {
            op: "matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        };
        let (m, k) = a.dims2().ok_or_else(mismatch)?;
        let (k2, n) = b.dims2().ok_or_else(mismatch)?;
        if k != k2 {
            return Err(mismatch());
        }
        let mut c = Tensor::zeros(&[m, n]);
        gemm(a.data(), false, b.data(), false, m, k, n, c.data_mut(), false);
        Ok(self.binary(other, c, Op::MatMul(self.id, other.id)))
    }

    /// Adds a length-`n` bias to each of the first `rows` rows of an
    /// `(R, n)` matrix.
    pub fn add_bias_rows(&self, bias: &Var<'t>, rows: usize) -> Result<Var<'t>, GradError> {
        let (x, b) = (self.value(), bias.value());
        let mismatch = || GradError::ShapeMismatch {
            op: "add_bias",
            lhs: x.shape().to_vec(),
            rhs: b.shape().to_vec(),
        };
        let (r, n) = x.dims2().ok_or_else(mismatch)?;
        if b.len() != n || rows > r {
            return Err(mismatch());
        }
        let mut out = (*x).clone();
        for row in out.data_mut()[..rows * n].chunks_exact_mut(n) {
            for (o, bv) in row.iter_mut().zip(b.data()) {
                *o += bv;
            }
        }
        Ok(self.binary(
            bias,
            out,
            Op::AddBias {
                x: self.id,
                bias: bias.id,
                rows,
            },
        ))
    }

    pub fn add_bias(&self, bias: &Var<'t>) -> Result<Var<'t>, GradError> {
        let rows = self.value().dims2().map(|d| d.0).unwrap_or(0);
        self.add_bias_rows(bias, rows)
    }

    pub fn sin(&self) -> Var<'t> {
        let x = self.value();
        let mut s = Tensor::zeros(x.shape());
        let mut c = Tensor::zeros(x.shape());
        for ((sv, cv), &v) in s.data_mut().iter_mut().zip(c.data_mut()).zip(x.data()) {
            (*sv, *cv) = v.sin_cos();
        }
        self.unary(s, Op::Sin { x: self.id, cos: c })
    }

    pub fn cos(&self) -> Var<'t> {
        let x = self.value();
        let mut s = Tensor::zeros(x.shape());
        let mut c = Tensor::zeros(x.shape());
        for ((sv, cv), &v) in s.data_mut().iter_mut().zip(c.data_mut()).zip(x.data()) {
            (*sv, *cv) = v.sin_cos();
        }
        self.unary(c, Op::Cos { x: self.id, sin: s })
    }

    /// Absolute value; the adjoint uses sign(0) = 0.
    pub fn abs(&self) -> Var<'t> {
        self.unary(self.value().map(f64::abs), Op::Abs(self.id))
    }

    pub fn sum(&self) -> Var<'t> {
        self.unary(Tensor::scalar(self.value().sum()), Op::Sum(self.id))
    }

    pub fn mean(&self) -> Var<'t> {
        let x = self.value();
        let n = x.len().max(1) as f64;
        self.unary(Tensor::scalar(x.sum() / n), Op::Mean(self.id))
    }

    pub fn sum_squares(&self) -> Var<'t> {
        self.unary(Tensor::scalar(self.value().norm_sq()), Op::SumSquares(self.id))
    }

    /// Squared L2 norm of `self - target`.
    pub fn squared_distance(&self, target: &Var<'t>) -> Result<Var<'t>, GradError> {
        Ok(self.sub(target)?.sum_squares())
    }

    /// Flat index selection; the adjoint scatter-adds, so repeated indices
    /// accumulate.
    pub fn gather(&self, idx: Rc<[usize]>) -> Result<Var<'t>, GradError> {
        let x = self.value();
        if let Some(&bad) = idx.iter().find(|&&i| i >= x.len()) {
            return Err(GradError::IndexOutOfRange {
                op: "gather",
                index: bad,
                len: x.len(),
            });
        }
        let data = idx.iter().map(|&i| x.data()[i]).collect();
        Ok(self.unary(Tensor::vector(data), Op::Gather { x: self.id, idx }))
    }

    /// Adds element `k` of `self` into flat position `idx[k]` of a zero
    /// tensor with the given shape.
    pub fn scatter_add(&self, idx: Rc<[usize]>, shape: &[usize]) -> Result<Var<'t>, GradError> {
        let x = self.value();
        let mut out = Tensor::zeros(shape);
        if idx.len() != x.len() {
            return Err(GradError::ShapeMismatch {
                op: "scatter_add",
                lhs: x.shape().to_vec(),
                rhs: vec![idx.len()],
            });
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= out.len()) {
            return Err(GradError::IndexOutOfRange {
                op: "scatter_add",
                index: bad,
                len: out.len(),
            });
        }
        let o = out.data_mut();
        for (&i, &v) in idx.iter().zip(x.data()) {
            o[i] += v;
        }
        Ok(self.unary(out, Op::ScatterAdd { x: self.id, idx }))
    }

    fn square_side(&self, op: &'static str) -> Result<usize, GradError> {
        let x = self.value();
        match x.dims2() {
            Some((m, n)) if m == n && m >= 3 => Ok(m),
            _ => Err(GradError::ShapeMismatch {
                op,
                lhs: x.shape().to_vec(),
                rhs: vec![3, 3],
            }),
        }
    }

    /// Unscaled five-point Laplacian of an `(m, m)` field; zero on the
    /// boundary ring.
    pub fn laplacian(&self) -> Result<Var<'t>, GradError> {
        let m = self.square_side("laplacian")?;
        let mut out = Tensor::zeros(&[m, m]);
        laplacian_forward(self.value().data(), m, out.data_mut());
        Ok(self.unary(out, Op::Laplacian { x: self.id, m }))
    }

    /// Unscaled five-point Laplacian with mirrored ghost nodes on all walls.
    pub fn neumann_laplacian(&self) -> Result<Var<'t>, GradError> {
        let m = self.square_side("neumann_laplacian")?;
        let mut out = Tensor::zeros(&[m, m]);
        neumann_laplacian_forward(self.value().data(), m, out.data_mut());
        Ok(self.unary(out, Op::NeumannLaplacian { x: self.id, m }))
    }

    /// Stacks tensors along the leading axis.
    pub fn concat(parts: &[Var<'t>]) -> Result<Var<'t>, GradError> {
        let first = parts.first().ok_or(GradError::EmptyInput("concat"))?;
        let tape = first.tape;
        let first_value = first.value();
        let inner: Vec<usize> = first_value.shape().iter().skip(1).copied().collect();
        let mut lead = 0;
        let mut data = Vec::new();
        let mut tracked = false;
        for p in parts {
            tape.check_same_tape(p);
            let v = p.value();
            let shape = v.shape();
            let scalar_like = shape.is_empty();
            if scalar_like || shape[1..] != inner[..] {
                return Err(GradError::ShapeMismatch {
                    op: "concat",
                    lhs: first_value.shape().to_vec(),
                    rhs: shape.to_vec(),
                });
            }
            lead += shape[0];
            data.extend_from_slice(v.data());
            tracked |= p.is_tracked();
        }
        let mut shape = vec![lead];
        shape.extend(inner);
        let value = Tensor::new(shape, data)?;
        Ok(tape.push(value, Op::Concat(parts.iter().map(|p| p.id).collect()), tracked))
    }

    /// Rows `start..start + len` of a rank-2 tensor.
    pub fn slice_rows(&self, start: usize, len: usize) -> Result<Var<'t>, GradError> {
        let x = self.value();
        let (rows, cols) = x.dims2().ok_or(GradError::ShapeMismatch {
            op: "slice_rows",
            lhs: x.shape().to_vec(),
            rhs: vec![start, len],
        })?;
        if start + len > rows {
            return Err(GradError::IndexOutOfRange {
                op: "slice_rows",
                index: start + len,
                len: rows,
            });
        }
        let data = x.data()[start * cols..(start + len) * cols].to_vec();
        let value = Tensor::new(vec![len, cols], data)?;
        Ok(self.unary(value, Op::SliceRows { x: self.id, start }))
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Var<'t>, GradError> {
        let value = (*self.value()).clone().reshape(shape)?;
        Ok(self.unary(value, Op::Reshape(self.id)))
    }

    /// Applies `sin` to a stacked jet batch, carrying first and second
    /// directional derivatives through the chain rule.
    pub fn jet_sin(&self, layout: JetLayout) -> Result<Var<'t>, GradError> {
        let x = self.value();
        match x.dims2() {
            Some((rows, _)) if rows == layout.channels() * layout.batch => {}
            _ => {
                return Err(GradError::ShapeMismatch {
                    op: "jet_sin",
                    lhs: x.shape().to_vec(),
                    rhs: vec![layout.channels() * layout.batch],
                })
            }
        }
        let (out, sin, cos) = jet_sin_forward(&x, layout);
        Ok(self.unary(
            out,
            Op::JetSin {
                x: self.id,
                layout,
                sin,
                cos,
            },
        ))
    }
}
