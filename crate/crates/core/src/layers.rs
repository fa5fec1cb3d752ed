//! LSTM cells, embedding tables, dropout and initializers.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::params::{ParamId, ParamStore};
use crate::rng::Rng;
use crate::tensor::{Shape, Tape, Tensor, Var};
use crate::{Error, Result};

/// Orthogonal matrix (semi-orthogonal when not square) from a Gaussian draw.
///
/// For `rows ≥ cols` the columns are orthonormal (`QᵀQ = I`); otherwise the
/// rows are (`QQᵀ = I`).
pub fn orthogonal_init(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    // `short` orthonormal columns of length `tall`, stored column-major.
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(short);
    while q.len() < short {
        let mut v: Vec<f64> = (0..tall).map(|_| StandardNormal.sample(rng)).collect();
        // Gram-Schmidt twice is enough for full double precision.
        for _ in 0..2 {
            for u in &q {
                let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                for (vi, ui) in v.iter_mut().zip(u) {
                    *vi -= p * ui;
                }
            }
        }
        let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
        if norm < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        q.push(v);
    }
    let mut data = vec![0.0; rows * cols];
    for (j, col) in q.iter().enumerate() {
        for (i, &x) in col.iter().enumerate() {
            if rows >= cols {
                data[i * cols + j] = x;
            } else {
                data[j * cols + i] = x;
            }
        }
    }
    Tensor::matrix(rows, cols, data).expect("sized by construction")
}

/// `dim` i.i.d. draws from `U(-bound, bound)`.
pub fn uniform_init(dim: usize, bound: f64, rng: &mut Rng) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-bound..=bound)).collect()
}

/// LSTM cell with one weight matrix per gate over the concatenated `[x; h]`.
///
/// Gate blocks are stacked in the order input, forget, output, candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LstmCell {
    pub input_dim: usize,
    pub hidden_dim: usize,
    weights: ParamId,
    bias: ParamId,
}

/// An [`LstmCell`] whose parameters are recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct BoundLstm<'t> {
    pub input_dim: usize,
    pub hidden_dim: usize,
    weights: Var<'t>,
    bias: Var<'t>,
}

impl LstmCell {
    /// Registers `{name}.w` (`4h × (d_in + h)`) and `{name}.b` (`4h`).
    ///
    /// Every `h × d_in` input block and `h × h` recurrent block is drawn
    /// orthogonally; biases are zero except the forget gate (1.0).
    pub fn register(store: &mut ParamStore, name: &str, input_dim: usize, hidden_dim: usize, rng: &mut Rng) -> Result<Self> {
        let h = hidden_dim;
        let width = input_dim + h;
        let mut w = vec![0.0; 4 * h * width];
        for gate in 0..4 {
            let wx = orthogonal_init(h, input_dim, rng);
            let wh = orthogonal_init(h, h, rng);
            for r in 0..h {
                let row = &mut w[(gate * h + r) * width..(gate * h + r + 1) * width];
                row[..input_dim].copy_from_slice(wx.row(r));
                row[input_dim..].copy_from_slice(wh.row(r));
            }
        }
        let mut b = vec![0.0; 4 * h];
        b[h..2 * h].fill(1.0);
        let weights = store.add(&format!("{name}.w"), Tensor::matrix(4 * h, width, w)?)?;
        let bias = store.add(&format!("{name}.b"), Tensor::vector(b))?;
        Ok(LstmCell {
            input_dim,
            hidden_dim,
            weights,
            bias,
        })
    }

    /// Looks up an already registered cell by name.
    pub fn lookup(store: &ParamStore, name: &str) -> Result<Self> {
        let weights = store.require(&format!("{name}.w"))?;
        let bias = store.require(&format!("{name}.b"))?;
        let shape = store.entry(weights).shape;
        let hidden_dim = store.entry(bias).len() / 4;
        Ok(LstmCell {
            input_dim: shape.cols() - hidden_dim,
            hidden_dim,
            weights,
            bias,
        })
    }

    pub fn bind<'t>(&self, tape: &'t Tape, store: &ParamStore) -> BoundLstm<'t> {
        BoundLstm {
            input_dim: self.input_dim,
            hidden_dim: self.hidden_dim,
            weights: store.leaf(tape, self.weights),
            bias: store.leaf(tape, self.bias),
        }
    }
}

impl<'t> BoundLstm<'t> {
    pub fn zero_state(&self) -> (Var<'t>, Var<'t>) {
        let tape = self.weights.tape();
        let z = || tape.constant(Tensor::zeros(Shape::vector(self.hidden_dim)));
        (z(), z())
    }

    /// One recurrence step; returns `(h', c')`.
    pub fn step(&self, x: Var<'t>, h: Var<'t>, c: Var<'t>) -> Result<(Var<'t>, Var<'t>)> {
        let d = self.hidden_dim;
        if x.shape() != Shape::vector(self.input_dim) {
            return Err(Error::Dimension {
                op: "lstm_step input",
                left: vec![self.input_dim],
                right: x.shape().dims().to_vec(),
            });
        }
        for s in [h, c] {
            if s.shape() != Shape::vector(d) {
                return Err(Error::Dimension {
                    op: "lstm_step state",
                    left: vec![d],
                    right: s.shape().dims().to_vec(),
                });
            }
        }
        let z = self.weights.matvec(x.concat(h)?)?.add(self.bias)?;
        let hc = z.lstm_cell(c)?;
        let h_next = hc.slice(0, d)?;
        let c_next = hc.slice(d, d)?;
        Ok((h_next, c_next))
    }
}

/// Runs `fwd` left to right and `bwd` right to left from zero states and
/// returns the final forward hidden state and the backward hidden state at
/// the first position.
pub fn run_bilstm<'t>(fwd: &BoundLstm<'t>, bwd: &BoundLstm<'t>, inputs: &[Var<'t>]) -> Result<(Var<'t>, Var<'t>)> {
    if inputs.is_empty() {
        return Err(Error::Domain {
            op: "run_bilstm",
            detail: "empty input sequence".into(),
        });
    }
    let (mut hf, mut cf) = fwd.zero_state();
    for &x in inputs {
        (hf, cf) = fwd.step(x, hf, cf)?;
    }
    let (mut hb, mut cb) = bwd.zero_state();
    for &x in inputs.iter().rev() {
        (hb, cb) = bwd.step(x, hb, cb)?;
    }
    Ok((hf, hb))
}

/// Embedding matrix with reserved padding (row 0, frozen at zero) and
/// unknown (row 1) entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingTable {
    pub rows: usize,
    pub dim: usize,
    weights: ParamId,
}

impl EmbeddingTable {
    pub const PAD: usize = 0;
    pub const UNK: usize = 1;

    /// Registers a table initialized from `U(-bound, bound)`.
    pub fn register(store: &mut ParamStore, name: &str, rows: usize, dim: usize, bound: f64, rng: &mut Rng) -> Result<Self> {
        Self::register_with(store, name, rows, dim, uniform_init(rows * dim, bound, rng))
    }

    /// Registers a table with explicit row-major initial values.
    pub fn register_with(store: &mut ParamStore, name: &str, rows: usize, dim: usize, init: Vec<f64>) -> Result<Self> {
        if rows < 2 {
            return Err(Error::Config(format!("embedding table {name:?} needs padding and unknown rows")));
        }
        let weights = store.add(name, Tensor::matrix(rows, dim, init)?)?;
        store.freeze_row(weights, Self::PAD);
        Ok(EmbeddingTable { rows, dim, weights })
    }

    pub fn lookup_registered(store: &ParamStore, name: &str) -> Result<Self> {
        let weights = store.require(name)?;
        let shape = store.entry(weights).shape;
        Ok(EmbeddingTable {
            rows: shape.rows(),
            dim: shape.cols(),
            weights,
        })
    }

    pub fn id(&self) -> ParamId {
        self.weights
    }

    /// Row `index` as a tape leaf; indices past the table map to the unknown row.
    pub fn lookup<'t>(&self, tape: &'t Tape, store: &ParamStore, index: usize) -> Var<'t> {
        let row = if index < self.rows { index } else { Self::UNK };
        store.row_leaf(tape, self.weights, row)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutMode {
    Train,
    Eval,
}

/// Inverted dropout with its own random stream.
#[derive(Debug, Clone)]
pub struct DropoutLayer {
    p: f64,
    pub mode: DropoutMode,
    rng: Rng,
}

impl DropoutLayer {
    pub fn new(p: f64, mode: DropoutMode, rng: Rng) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!("dropout ratio {p} outside [0, 1)")));
        }
        Ok(DropoutLayer { p, mode, rng })
    }

    pub fn ratio(&self) -> f64 {
        self.p
    }

    /// Identity in eval mode or at `p = 0`; otherwise zeroes each unit with
    /// probability `p` and scales survivors by `1/(1-p)`.
    pub fn apply<'t>(&mut self, x: Var<'t>) -> Result<Var<'t>> {
        if self.mode == DropoutMode::Eval || self.p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - self.p);
        let mask = (0..x.len())
            .map(|_| if self.rng.random::<f64>() < self.p { 0.0 } else { keep })
            .collect();
        x.mask(mask)
    }
}
