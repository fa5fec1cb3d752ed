use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;
use core::fmt;

use super::{kernels, Shape, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Leaf,
    /// Copy of a parameter slice; gradient is routed back by flat offset.
    Param { offset: usize },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Neg(usize),
    Mask(usize, Vec<f64>),
    Sigmoid(usize),
    Tanh(usize),
    Exp(usize),
    Log(usize),
    Sum(usize),
    Dot(usize, usize),
    MatMul(usize, usize),
    MatVec(usize, usize),
    Concat(Vec<usize>),
    Stack(Vec<usize>),
    Slice { src: usize, start: usize },
    Index { src: usize, at: usize },
    Softmax(usize),
    LogSoftmax(usize),
    Reshape(usize),
    /// Fused LSTM cell update from gate pre-activations and the old cell.
    LstmCell { gates: usize, cell: usize },
}

#[derive(Debug)]
struct Node {
    shape: Shape,
    value: Vec<f64>,
    op: Op,
}

/// Append-only record of a forward computation.
///
/// Inputs of every node precede it, so reverse append order is a valid
/// topological order for the backward sweep.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape").field("len", &self.len()).finish()
    }
}

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

fn dim_err(op: &'static str, a: Shape, b: Shape) -> Error {
    Error::Dimension {
        op,
        left: a.dims().to_vec(),
        right: b.dims().to_vec(),
    }
}

fn rank_err(op: &'static str, expected: usize, got: Shape) -> Error {
    Error::Rank {
        op,
        expected,
        got: got.dims().to_vec(),
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, shape: Shape, value: Vec<f64>, op: Op) -> Var<'_> {
        debug_assert_eq!(shape.numel(), value.len());
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { shape, value, op });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// A differentiable leaf.
    pub fn var(&self, t: Tensor) -> Var<'_> {
        let shape = t.shape();
        self.push(shape, t.into_data(), Op::Leaf)
    }

    /// A leaf that never receives gradient.
    pub fn constant(&self, t: Tensor) -> Var<'_> {
        let shape = t.shape();
        self.push(shape, t.into_data(), Op::Constant)
    }

    /// A leaf holding a copy of parameter values starting at `flat_offset` of
    /// the owning parameter store. [`Gradients::flat`] routes its gradient back.
    pub fn param_slice(&self, values: &[f64], shape: Shape, flat_offset: usize) -> Var<'_> {
        self.push(shape, values.to_vec(), Op::Param { offset: flat_offset })
    }

    fn shape_of(&self, id: usize) -> Shape {
        self.nodes.borrow()[id].shape
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// The tape is not modified, so repeated calls yield identical gradients.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.shape.rank() != 0 {
            return Err(rank_err("backward", 0, root.shape));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[loss.id] = Some(vec![1.0]);

        fn slot<'g>(grads: &'g mut [Option<Vec<f64>>], nodes: &[Node], id: usize) -> &'g mut Vec<f64> {
            grads[id].get_or_insert_with(|| vec![0.0; nodes[id].value.len()])
        }

        for i in (0..=loss.id).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            match &node.op {
                Op::Constant | Op::Leaf | Op::Param { .. } => {}
                Op::Add(a, b) => {
                    for (d, gv) in slot(&mut grads, &nodes, *a).iter_mut().zip(&g) {
                        *d += gv;
                    }
                    for (d, gv) in slot(&mut grads, &nodes, *b).iter_mut().zip(&g) {
                        *d += gv;
                    }
                }
                Op::Sub(a, b) => {
                    for (d, gv) in slot(&mut grads, &nodes, *a).iter_mut().zip(&g) {
                        *d += gv;
                    }
                    for (d, gv) in slot(&mut grads, &nodes, *b).iter_mut().zip(&g) {
                        *d -= gv;
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
                    let da = slot(&mut grads, &nodes, *a);
                    for k in 0..g.len() {
                        da[k] += g[k] * bv[k];
                    }
                    let db = slot(&mut grads, &nodes, *b);
                    for k in 0..g.len() {
                        db[k] += g[k] * av[k];
                    }
                }
                Op::Scale(a, s) => {
                    for (d, gv) in slot(&mut grads, &nodes, *a).iter_mut().zip(&g) {
                        *d += s * gv;
                    }
                }
                Op::Neg(a) => {
                    for (d, gv) in slot(&mut grads, &nodes, *a).iter_mut().zip(&g) {
                        *d -= gv;
                    }
                }
                Op::Mask(a, mask) => {
                    let da = slot(&mut grads, &nodes, *a);
                    for k in 0..g.len() {
                        da[k] += g[k] * mask[k];
                    }
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    let da = slot(&mut grads, &nodes, *a);
                    for k in 0..g.len() {
                        da[k] += g[k] * y[k] * (1.0 - y[k]);
                    }
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    let da = slot(&mut grads, &nodes, *a);
                    for k in 0..g.len() {
                        da[k] += g[k] * (1.0 - y[k] * y[k]);
                    }
                }
                Op::Exp(a) => {
                    let y = &node.value;
                    let da = slot(&mut grads, &nodes, *a);
                    for k in 0..g.len() {
                        da[k] += g[k] * y[k];
                    }
                }
                Op::Log(a) => {
                    let x = &nodes[*a].value;
                    let da = slot(&mut grads, &nodes, *a);
                    for k in 0..g.len() {
                        da[k] += g[k] / x[k];
                    }
                }
                Op::Sum(a) => {
                    for d in slot(&mut grads, &nodes, *a).iter_mut() {
                        *d += g[0];
                    }
                }
                Op::Dot(a, b) => {
                    let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
                    for (d, x) in slot(&mut grads, &nodes, *a).iter_mut().zip(bv) {
                        *d += g[0] * x;
                    }
                    for (d, x) in slot(&mut grads, &nodes, *b).iter_mut().zip(av) {
                        *d += g[0] * x;
                    }
                }
                Op::MatMul(a, b) => {
                    let (sa, sb) = (nodes[*a].shape, nodes[*b].shape);
                    let (m, k, n) = (sa.rows(), sa.cols(), sb.cols());
                    let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
                    // dA = G Bᵀ
                    let da = slot(&mut grads, &nodes, *a);
                    for i in 0..m {
                        for p in 0..k {
                            da[i * k + p] += kernels::dot(&g[i * n..(i + 1) * n], &bv[p * n..(p + 1) * n]);
                        }
                    }
                    // dB = Aᵀ G
                    let db = slot(&mut grads, &nodes, *b);
                    for i in 0..m {
                        for p in 0..k {
                            let aip = av[i * k + p];
                            for j in 0..n {
                                db[p * n + j] += aip * g[i * n + j];
                            }
                        }
                    }
                }
                Op::MatVec(w, x) => {
                    let sw = nodes[*w].shape;
                    let (m, k) = (sw.rows(), sw.cols());
                    let (wv, xv) = (&nodes[*w].value, &nodes[*x].value);
                    let dw = slot(&mut grads, &nodes, *w);
                    for r in 0..m {
                        let gr = g[r];
                        if gr == 0.0 {
                            continue;
                        }
                        for (d, xc) in dw[r * k..(r + 1) * k].iter_mut().zip(xv) {
                            *d += gr * xc;
                        }
                    }
                    let dx = slot(&mut grads, &nodes, *x);
                    for r in 0..m {
                        let gr = g[r];
                        if gr == 0.0 {
                            continue;
                        }
                        for (d, wc) in dx.iter_mut().zip(&wv[r * k..(r + 1) * k]) {
                            *d += gr * wc;
                        }
                    }
                }
                Op::Concat(parts) | Op::Stack(parts) => {
                    let mut at = 0;
                    for p in parts {
                        let len = nodes[*p].value.len();
                        for (d, gv) in slot(&mut grads, &nodes, *p).iter_mut().zip(&g[at..at + len]) {
                            *d += gv;
                        }
                        at += len;
                    }
                }
                Op::Slice { src, start } => {
                    let d = slot(&mut grads, &nodes, *src);
                    for (k, gv) in g.iter().enumerate() {
                        d[start + k] += gv;
                    }
                }
                Op::Reshape(a) => {
                    for (d, gv) in slot(&mut grads, &nodes, *a).iter_mut().zip(&g) {
                        *d += gv;
                    }
                }
                Op::Index { src, at } => {
                    slot(&mut grads, &nodes, *src)[*at] += g[0];
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let gy = kernels::dot(&g, y);
                    let da = slot(&mut grads, &nodes, *a);
                    for k in 0..g.len() {
                        da[k] += y[k] * (g[k] - gy);
                    }
                }
                Op::LstmCell { gates, cell } => {
                    let (z, c) = (&nodes[*gates].value, &nodes[*cell].value);
                    let d = c.len();
                    let c_next = &node.value[d..];
                    let mut dz = vec![0.0; 4 * d];
                    let mut dc = vec![0.0; d];
                    for k in 0..d {
                        let i = kernels::sigmoid(z[k]);
                        let f = kernels::sigmoid(z[d + k]);
                        let o = kernels::sigmoid(z[2 * d + k]);
                        let u = libm::tanh(z[3 * d + k]);
                        let t = libm::tanh(c_next[k]);
                        // total gradient reaching c' through h' and directly
                        let gc = g[d + k] + g[k] * o * (1.0 - t * t);
                        dz[k] = gc * u * i * (1.0 - i);
                        dz[d + k] = gc * c[k] * f * (1.0 - f);
                        dz[2 * d + k] = g[k] * t * o * (1.0 - o);
                        dz[3 * d + k] = gc * i * (1.0 - u * u);
                        dc[k] = gc * f;
                    }
                    for (a, b) in slot(&mut grads, &nodes, *gates).iter_mut().zip(&dz) {
                        *a += b;
                    }
                    for (a, b) in slot(&mut grads, &nodes, *cell).iter_mut().zip(&dc) {
                        *a += b;
                    }
                }
                Op::LogSoftmax(a) => {
                    let y = &node.value;
                    let total: f64 = g.iter().sum();
                    let da = slot(&mut grads, &nodes, *a);
                    for k in 0..g.len() {
                        da[k] += g[k] - libm::exp(y[k]) * total;
                    }
                }
            }
            grads[i] = Some(g);
        }

        let param_slots = nodes
            .iter()
            .enumerate()
            .filter_map(|(id, n)| match n.op {
                Op::Param { offset } => Some((id, offset)),
                _ => None,
            })
            .collect();
        // Constants never expose a gradient.
        for (id, n) in nodes.iter().enumerate() {
            if matches!(n.op, Op::Constant) {
                grads[id] = None;
            }
        }
        Ok(Gradients { grads, param_slots })
    }
}

/// Result of [`Tape::backward`]: one gradient buffer per reached node.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    param_slots: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient with respect to `v`, or `None` if the loss does not depend on
    /// it (or it is a constant).
    pub fn get(&self, v: Var<'_>) -> Option<&[f64]> {
        self.grads.get(v.id).and_then(|g| g.as_deref())
    }

    /// Gradient with respect to `v`, zero-filled when unreached.
    pub fn wrt(&self, v: Var<'_>) -> Vec<f64> {
        match self.get(v) {
            Some(g) => g.to_vec(),
            None => vec![0.0; v.len()],
        }
    }

    /// Sums gradients of all parameter leaves into a flat buffer of
    /// `total` entries aligned with parameter-store indexing.
    pub fn flat(&self, total: usize) -> Vec<f64> {
        let mut out = vec![0.0; total];
        self.accumulate_flat(&mut out);
        out
    }

    pub fn accumulate_flat(&self, out: &mut [f64]) {
        for &(id, offset) in &self.param_slots {
            if let Some(g) = &self.grads[id] {
                for (o, gv) in out[offset..offset + g.len()].iter_mut().zip(g) {
                    *o += gv;
                }
            }
        }
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn shape(&self) -> Shape {
        self.tape.shape_of(self.id)
    }

    pub fn len(&self) -> usize {
        self.shape().numel()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value(&self) -> Vec<f64> {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    pub fn to_tensor(&self) -> Tensor {
        let nodes = self.tape.nodes.borrow();
        let n = &nodes[self.id];
        Tensor {
            shape: n.shape,
            data: n.value.clone(),
        }
    }

    /// Value of a scalar (first element otherwise).
    pub fn item(&self) -> f64 {
        self.tape.nodes.borrow()[self.id].value[0]
    }

    fn same_tape(&self, other: &Var<'_>) {
        assert!(
            core::ptr::eq(self.tape, other.tape),
            "operands recorded on different tapes"
        );
    }

    fn unary(&self, f: impl Fn(f64) -> f64, op: Op) -> Var<'t> {
        let (shape, value) = {
            let nodes = self.tape.nodes.borrow();
            let n = &nodes[self.id];
            (n.shape, n.value.iter().map(|&x| f(x)).collect())
        };
        self.tape.push(shape, value, op)
    }

    fn binary(&self, other: Var<'t>, name: &'static str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var<'t>> {
        self.same_tape(&other);
        let (shape, value) = {
            let nodes = self.tape.nodes.borrow();
            let (a, b) = (&nodes[self.id], &nodes[other.id]);
            if a.shape != b.shape {
                return Err(dim_err(name, a.shape, b.shape));
            }
            (a.shape, a.value.iter().zip(&b.value).map(|(&x, &y)| f(x, y)).collect())
        };
        Ok(self.tape.push(shape, value, op))
    }

    pub fn add(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "add", |a, b| a + b, Op::Add(self.id, other.id))
    }

    pub fn sub(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "sub", |a, b| a - b, Op::Sub(self.id, other.id))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "mul", |a, b| a * b, Op::Mul(self.id, other.id))
    }

    pub fn scale(&self, s: f64) -> Var<'t> {
        self.unary(|x| s * x, Op::Scale(self.id, s))
    }

    pub fn neg(&self) -> Var<'t> {
        self.unary(|x| -x, Op::Neg(self.id))
    }

    /// Elementwise product with a constant mask (dropout).
    pub fn mask(&self, mask: Vec<f64>) -> Result<Var<'t>> {
        let (shape, value) = {
            let nodes = self.tape.nodes.borrow();
            let n = &nodes[self.id];
            if n.value.len() != mask.len() {
                return Err(dim_err("mask", n.shape, Shape::vector(mask.len())));
            }
            (n.shape, n.value.iter().zip(&mask).map(|(x, m)| x * m).collect())
        };
        Ok(self.tape.push(shape, value, Op::Mask(self.id, mask)))
    }

    pub fn sigmoid(&self) -> Var<'t> {
        self.unary(kernels::sigmoid, Op::Sigmoid(self.id))
    }

    pub fn tanh(&self) -> Var<'t> {
        self.unary(libm::tanh, Op::Tanh(self.id))
    }

    pub fn exp(&self) -> Var<'t> {
        self.unary(libm::exp, Op::Exp(self.id))
    }

    /// Natural log; every entry must be strictly positive.
    pub fn ln(&self) -> Result<Var<'t>> {
        {
            let nodes = self.tape.nodes.borrow();
            if let Some(bad) = nodes[self.id].value.iter().find(|&&x| !(x > 0.0)) {
                return Err(Error::Domain {
                    op: "log",
                    detail: format!("non-positive input {bad}"),
                });
            }
        }
        Ok(self.unary(libm::log, Op::Log(self.id)))
    }

    pub fn sum(&self) -> Var<'t> {
        let total = self.tape.nodes.borrow()[self.id].value.iter().sum();
        self.tape.push(Shape::scalar(), vec![total], Op::Sum(self.id))
    }

    /// Inner product of two vectors, producing a scalar.
    pub fn dot(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other);
        let value = {
            let nodes = self.tape.nodes.borrow();
            let (a, b) = (&nodes[self.id], &nodes[other.id]);
            if a.shape.rank() != 1 || a.shape != b.shape {
                return Err(dim_err("dot", a.shape, b.shape));
            }
            kernels::dot(&a.value, &b.value)
        };
        Ok(self.tape.push(Shape::scalar(), vec![value], Op::Dot(self.id, other.id)))
    }

    /// Matrix product `[m×k]·[k×n] → [m×n]`.
    pub fn matmul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other);
        let (shape, value) = {
            let nodes = self.tape.nodes.borrow();
            let (a, b) = (&nodes[self.id], &nodes[other.id]);
            if a.shape.rank() != 2 || b.shape.rank() != 2 || a.shape.cols() != b.shape.rows() {
                return Err(dim_err("matmul", a.shape, b.shape));
            }
            let (m, k, n) = (a.shape.rows(), a.shape.cols(), b.shape.cols());
            (Shape::matrix(m, n), kernels::matmul(&a.value, &b.value, m, k, n))
        };
        Ok(self.tape.push(shape, value, Op::MatMul(self.id, other.id)))
    }

    /// Matrix-vector product `[m×k]·[k] → [m]`.
    pub fn matvec(&self, x: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&x);
        let (m, value) = {
            let nodes = self.tape.nodes.borrow();
            let (w, v) = (&nodes[self.id], &nodes[x.id]);
            if w.shape.rank() != 2 || v.shape.rank() != 1 || w.shape.cols() != v.shape.rows() {
                return Err(dim_err("matvec", w.shape, v.shape));
            }
            let (m, k) = (w.shape.rows(), w.shape.cols());
            (m, kernels::matvec(&w.value, &v.value, m, k))
        };
        Ok(self.tape.push(Shape::vector(m), value, Op::MatVec(self.id, x.id)))
    }

    /// `self ⊕ other` for vectors.
    pub fn concat(&self, other: Var<'t>) -> Result<Var<'t>> {
        concat(&[*self, other])
    }

    /// `len` entries starting at `start` of a vector.
    pub fn slice(&self, start: usize, len: usize) -> Result<Var<'t>> {
        let value = {
            let nodes = self.tape.nodes.borrow();
            let n = &nodes[self.id];
            if n.shape.rank() != 1 {
                return Err(rank_err("slice", 1, n.shape));
            }
            if start + len > n.value.len() {
                return Err(dim_err("slice", n.shape, Shape::vector(start + len)));
            }
            n.value[start..start + len].to_vec()
        };
        Ok(self.tape.push(Shape::vector(len), value, Op::Slice { src: self.id, start }))
    }

    /// Entry `at` of a vector as a scalar.
    pub fn index(&self, at: usize) -> Result<Var<'t>> {
        let value = {
            let nodes = self.tape.nodes.borrow();
            let n = &nodes[self.id];
            if n.shape.rank() != 1 {
                return Err(rank_err("index", 1, n.shape));
            }
            *n.value.get(at).ok_or(Error::Index {
                index: at,
                len: n.value.len(),
            })?
        };
        Ok(self.tape.push(Shape::scalar(), vec![value], Op::Index { src: self.id, at }))
    }

    /// Same data under a new shape with equal element count.
    pub fn reshape(&self, shape: Shape) -> Result<Var<'t>> {
        let value = {
            let nodes = self.tape.nodes.borrow();
            let n = &nodes[self.id];
            if n.shape.numel() != shape.numel() {
                return Err(dim_err("reshape", n.shape, shape));
            }
            n.value.clone()
        };
        Ok(self.tape.push(shape, value, Op::Reshape(self.id)))
    }

    pub fn softmax(&self) -> Result<Var<'t>> {
        let value = self.normalizer_input("softmax")?;
        let shape = self.shape();
        Ok(self.tape.push(shape, kernels::softmax(&value), Op::Softmax(self.id)))
    }

    pub fn log_softmax(&self) -> Result<Var<'t>> {
        let value = self.normalizer_input("log_softmax")?;
        let shape = self.shape();
        Ok(self.tape.push(shape, kernels::log_softmax(&value), Op::LogSoftmax(self.id)))
    }

    /// LSTM cell update. `self` holds the `4d` gate pre-activations in the
    /// order input, forget, output, candidate and `c` the old cell state;
    /// the result is `h' ⊕ c'` where `c' = σ(f)⊙c + σ(i)⊙tanh(g)` and
    /// `h' = σ(o)⊙tanh(c')`.
    pub fn lstm_cell(&self, c: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&c);
        let value = {
            let nodes = self.tape.nodes.borrow();
            let (z, cn) = (&nodes[self.id], &nodes[c.id]);
            if z.shape.rank() != 1 || cn.shape.rank() != 1 || z.value.len() != 4 * cn.value.len() {
                return Err(dim_err("lstm_cell", z.shape, cn.shape));
            }
            let d = cn.value.len();
            let (z, c) = (&z.value, &cn.value);
            let mut out = vec![0.0; 2 * d];
            for k in 0..d {
                let i = kernels::sigmoid(z[k]);
                let f = kernels::sigmoid(z[d + k]);
                let o = kernels::sigmoid(z[2 * d + k]);
                let u = libm::tanh(z[3 * d + k]);
                let c_next = f * c[k] + i * u;
                out[k] = o * libm::tanh(c_next);
                out[d + k] = c_next;
            }
            out
        };
        Ok(self.tape.push(Shape::vector(value.len()), value, Op::LstmCell { gates: self.id, cell: c.id }))
    }

    fn normalizer_input(&self, op: &'static str) -> Result<Vec<f64>> {
        let nodes = self.tape.nodes.borrow();
        let n = &nodes[self.id];
        if n.shape.rank() != 1 {
            return Err(rank_err(op, 1, n.shape));
        }
        if n.value.is_empty() {
            return Err(Error::Domain {
                op,
                detail: "empty input".into(),
            });
        }
        if let Some(bad) = n.value.iter().find(|x| !x.is_finite()) {
            return Err(Error::Domain {
                op,
                detail: format!("non-finite input {bad}"),
            });
        }
        Ok(n.value.clone())
    }
}

/// Concatenation of vectors.
pub(crate) fn concat<'t>(parts: &[Var<'t>]) -> Result<Var<'t>> {
    let tape = parts
        .first()
        .ok_or_else(|| Error::Domain {
            op: "concat",
            detail: "no operands".into(),
        })?
        .tape;
    let value = {
        let nodes = tape.nodes.borrow();
        let mut value = Vec::new();
        for p in parts {
            p.same_tape(&parts[0]);
            let n = &nodes[p.id];
            if n.shape.rank() != 1 {
                return Err(rank_err("concat", 1, n.shape));
            }
            value.extend_from_slice(&n.value);
        }
        value
    };
    let ids = parts.iter().map(|p| p.id).collect();
    Ok(tape.push(Shape::vector(value.len()), value, Op::Concat(ids)))
}

/// Stacks equal-length vectors as the rows of a matrix.
pub(crate) fn stack<'t>(rows: &[Var<'t>]) -> Result<Var<'t>> {
    let first = rows.first().ok_or_else(|| Error::Domain {
        op: "stack",
        detail: "no rows".into(),
    })?;
    let tape = first.tape;
    let (cols, value) = {
        let nodes = tape.nodes.borrow();
        let s0 = nodes[first.id].shape;
        if s0.rank() != 1 {
            return Err(rank_err("stack", 1, s0));
        }
        let mut value = Vec::with_capacity(rows.len() * s0.numel());
        for r in rows {
            r.same_tape(first);
            let n = &nodes[r.id];
            if n.shape != s0 {
                return Err(dim_err("stack", s0, n.shape));
            }
            value.extend_from_slice(&n.value);
        }
        (s0.numel(), value)
    };
    let ids = rows.iter().map(|r| r.id).collect();
    Ok(tape.push(Shape::matrix(rows.len(), cols), value, Op::Stack(ids)))
}

impl Tape {
    /// Concatenates vectors in order.
    pub fn concat<'t>(&'t self, parts: &[Var<'t>]) -> Result<Var<'t>> {
        concat(parts)
    }

    /// Stacks equal-length vectors into a `[rows × len]` matrix.
    pub fn stack<'t>(&'t self, rows: &[Var<'t>]) -> Result<Var<'t>> {
        stack(rows)
    }
}
