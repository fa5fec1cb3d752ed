//! Central finite-difference checks of every differentiable operation.
//!
//! Each trial draws random inputs, reduces the operation's output to a scalar
//! with a fixed random weighting and compares the tape gradient against
//! `(f(x+h) − f(x−h)) / 2h` coordinate by coordinate.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::consolidation::{ConsolidationConfig, ConsolidationState, Mode};
use crate::corpus::{Dialog, RankingInstance, Turn};
use crate::encoder::EncoderConfig;
use crate::harness::Model;
use crate::layers::LstmCell;
use crate::params::ParamStore;
use crate::rng::{stream, Rng, Stream};
use crate::tensor::{Shape, Tape, Tensor, Var};
use crate::text::Vocab;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckConfig {
    /// Finite-difference step.
    pub step: f64,
    pub tolerance: f64,
    /// Denominator floor of the relative error, so that gradients that are
    /// zero up to rounding compare absolutely.
    pub floor: f64,
    /// Parameters sampled per full-pipeline trial.
    pub pipeline_coords: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            step: 1e-5,
            tolerance: 1e-4,
            floor: 1e-4,
            pipeline_coords: 20,
        }
    }
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / scale
}

/// Outcome of one randomized trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub name: String,
    pub coords: usize,
    pub worst: f64,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub tolerance: f64,
    pub trials: Vec<Trial>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures().next().is_none()
    }

    pub fn failures(&self) -> impl Iterator<Item = &Trial> {
        self.trials.iter().filter(move |t| !(t.worst < self.tolerance))
    }

    pub fn worst(&self) -> Option<&Trial> {
        self.trials.iter().max_by(|a, b| a.worst.total_cmp(&b.worst))
    }

    /// Trial count per operation name.
    pub fn counts(&self) -> BTreeMap<&str, usize> {
        let mut out = BTreeMap::new();
        for t in &self.trials {
            *out.entry(t.name.as_str()).or_insert(0) += 1;
        }
        out
    }
}

/// Compares `grad` (analytic, full length) against central differences of
/// `f` at `x` on the coordinates `coords`.
pub fn compare<F>(name: &str, x: &[f64], grad: &[f64], coords: &[usize], config: &CheckConfig, mut f: F) -> Result<Trial>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut trial = Trial {
        name: name.to_string(),
        coords: coords.len(),
        worst: 0.0,
        analytic: 0.0,
        numeric: 0.0,
    };
    let mut probe = x.to_vec();
    for &k in coords {
        probe[k] = x[k] + config.step;
        let up = f(&probe)?;
        probe[k] = x[k] - config.step;
        let down = f(&probe)?;
        probe[k] = x[k];
        let numeric = (up - down) / (2.0 * config.step);
        let err = relative_error(grad[k], numeric, config.floor);
        if !(err <= trial.worst) {
            trial.worst = err;
            trial.analytic = grad[k];
            trial.numeric = numeric;
        }
    }
    Ok(trial)
}

fn uniform(rng: &mut Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

type Build = for<'t> fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>;

/// One primitive under test: input shapes, an input range, and the op.
struct Prim {
    name: &'static str,
    shapes: fn(&mut Rng) -> Vec<Shape>,
    range: (f64, f64),
    build: Build,
}

fn vec_pair(rng: &mut Rng) -> Vec<Shape> {
    let n = rng.random_range(1..6);
    vec![Shape::vector(n), Shape::vector(n)]
}

fn one_vec(rng: &mut Rng) -> Vec<Shape> {
    vec![Shape::vector(rng.random_range(1..7))]
}

fn two_vecs(rng: &mut Rng) -> Vec<Shape> {
    vec![Shape::vector(rng.random_range(0..4)), Shape::vector(rng.random_range(1..4))]
}

fn mat_mat(rng: &mut Rng) -> Vec<Shape> {
    let (m, k, n) = (rng.random_range(1..4), rng.random_range(1..5), rng.random_range(1..4));
    vec![Shape::matrix(m, k), Shape::matrix(k, n)]
}

fn mat_vec(rng: &mut Rng) -> Vec<Shape> {
    let (m, k) = (rng.random_range(1..5), rng.random_range(1..5));
    vec![Shape::matrix(m, k), Shape::vector(k)]
}

fn vec_triple(rng: &mut Rng) -> Vec<Shape> {
    let n = rng.random_range(1..4);
    vec![Shape::vector(n); 3]
}

fn cell_inputs(rng: &mut Rng) -> Vec<Shape> {
    let d = rng.random_range(1..4);
    vec![Shape::vector(4 * d), Shape::vector(d)]
}

const PRIMS: &[Prim] = &[
    Prim { name: "add", shapes: vec_pair, range: (-2.0, 2.0), build: |_, v| v[0].add(v[1]) },
    Prim { name: "sub", shapes: vec_pair, range: (-2.0, 2.0), build: |_, v| v[0].sub(v[1]) },
    Prim { name: "mul", shapes: vec_pair, range: (-2.0, 2.0), build: |_, v| v[0].mul(v[1]) },
    Prim { name: "scale", shapes: one_vec, range: (-2.0, 2.0), build: |_, v| Ok(v[0].scale(-1.7)) },
    Prim { name: "neg", shapes: one_vec, range: (-2.0, 2.0), build: |_, v| Ok(v[0].neg()) },
    Prim {
        name: "mask",
        shapes: one_vec,
        range: (-2.0, 2.0),
        build: |_, v| v[0].mask((0..v[0].len()).map(|i| (i % 2) as f64 * 2.5).collect()),
    },
    Prim { name: "sigmoid", shapes: one_vec, range: (-4.0, 4.0), build: |_, v| Ok(v[0].sigmoid()) },
    Prim { name: "tanh", shapes: one_vec, range: (-3.0, 3.0), build: |_, v| Ok(v[0].tanh()) },
    Prim { name: "exp", shapes: one_vec, range: (-2.0, 2.0), build: |_, v| Ok(v[0].exp()) },
    Prim { name: "ln", shapes: one_vec, range: (0.2, 3.0), build: |_, v| v[0].ln() },
    Prim { name: "sum", shapes: one_vec, range: (-2.0, 2.0), build: |_, v| Ok(v[0].sum()) },
    Prim { name: "dot", shapes: vec_pair, range: (-2.0, 2.0), build: |_, v| v[0].dot(v[1]) },
    Prim { name: "matmul", shapes: mat_mat, range: (-2.0, 2.0), build: |_, v| v[0].matmul(v[1]) },
    Prim { name: "matvec", shapes: mat_vec, range: (-2.0, 2.0), build: |_, v| v[0].matvec(v[1]) },
    Prim { name: "concat", shapes: two_vecs, range: (-2.0, 2.0), build: |_, v| v[0].concat(v[1]) },
    Prim {
        name: "slice",
        shapes: one_vec,
        range: (-2.0, 2.0),
        build: |_, v| {
            let n = v[0].len();
            v[0].slice(n / 3, n - n / 3)
        },
    },
    Prim { name: "index", shapes: one_vec, range: (-2.0, 2.0), build: |_, v| v[0].index(v[0].len() - 1) },
    Prim {
        name: "reshape",
        shapes: mat_vec,
        range: (-2.0, 2.0),
        build: |_, v| v[0].reshape(Shape::vector(v[0].len())),
    },
    Prim { name: "softmax", shapes: one_vec, range: (-3.0, 3.0), build: |_, v| v[0].softmax() },
    Prim { name: "log_softmax", shapes: one_vec, range: (-3.0, 3.0), build: |_, v| v[0].log_softmax() },
    Prim { name: "lstm_cell", shapes: cell_inputs, range: (-2.0, 2.0), build: |_, v| v[0].lstm_cell(v[1]) },
    Prim { name: "stack", shapes: vec_triple, range: (-2.0, 2.0), build: |t, v| t.stack(v) },
    Prim { name: "concat_many", shapes: vec_triple, range: (-2.0, 2.0), build: |t, v| t.concat(v) },
];

/// Runs one primitive trial: loss = Σ w ⊙ op(inputs).
fn prim_trial(p: &Prim, rng: &mut Rng, config: &CheckConfig) -> Result<Trial> {
    let shapes = (p.shapes)(rng);
    let sizes: Vec<usize> = shapes.iter().map(|s| s.numel()).collect();
    let total: usize = sizes.iter().sum();
    let x = uniform(rng, total, p.range.0, p.range.1);
    let out_len = {
        let tape = Tape::new();
        let vars = vars_from(&tape, &shapes, &x)?;
        (p.build)(&tape, &vars)?.len()
    };
    let w = uniform(rng, out_len, -1.0, 1.0);
    let eval = |x: &[f64]| -> Result<f64> {
        let tape = Tape::new();
        let vars = vars_from(&tape, &shapes, x)?;
        weighted(&tape, (p.build)(&tape, &vars)?, &w).map(|l| l.item())
    };
    let tape = Tape::new();
    let vars = vars_from(&tape, &shapes, &x)?;
    let loss = weighted(&tape, (p.build)(&tape, &vars)?, &w)?;
    let grads = tape.backward(loss)?;
    let grad: Vec<f64> = vars.iter().flat_map(|v| grads.wrt(*v)).collect();
    let coords: Vec<usize> = (0..total).collect();
    compare(p.name, &x, &grad, &coords, config, eval)
}

fn vars_from<'t>(tape: &'t Tape, shapes: &[Shape], x: &[f64]) -> Result<Vec<Var<'t>>> {
    let mut at = 0;
    let mut out = Vec::with_capacity(shapes.len());
    for s in shapes {
        out.push(tape.var(Tensor::new(*s, x[at..at + s.numel()].to_vec())?));
        at += s.numel();
    }
    Ok(out)
}

fn weighted<'t>(tape: &'t Tape, y: Var<'t>, w: &[f64]) -> Result<Var<'t>> {
    let flat = y.reshape(Shape::vector(y.len()))?;
    flat.dot(tape.constant(Tensor::vector(w.to_vec())))
}

/// `lstm_step` with respect to its input, both state vectors and all gate
/// weights and biases.
fn lstm_trial(rng: &mut Rng, config: &CheckConfig) -> Result<Trial> {
    let (din, h) = (rng.random_range(1..5), rng.random_range(1..5));
    let mut store = ParamStore::new();
    let cell = LstmCell::register(&mut store, "cell", din, h, rng)?;
    // move away from the orthogonal/zero-bias initialization
    for v in store.values_mut() {
        *v += rng.random_range(-0.5..0.5);
    }
    let np = store.len();
    let state = uniform(rng, din + 2 * h, -1.0, 1.0);
    let wh = uniform(rng, h, -1.0, 1.0);
    let wc = uniform(rng, h, -1.0, 1.0);
    let mut x: Vec<f64> = store.values().to_vec();
    x.extend_from_slice(&state);

    let run = |x: &[f64], grad: Option<&mut Vec<f64>>| -> Result<f64> {
        let mut s = store.clone();
        s.values_mut().copy_from_slice(&x[..np]);
        let tape = Tape::new();
        let bound = cell.bind(&tape, &s);
        let input = tape.var(Tensor::vector(x[np..np + din].to_vec()));
        let h0 = tape.var(Tensor::vector(x[np + din..np + din + h].to_vec()));
        let c0 = tape.var(Tensor::vector(x[np + din + h..].to_vec()));
        let (h1, c1) = bound.step(input, h0, c0)?;
        let loss = weighted(&tape, h1, &wh)?.add(weighted(&tape, c1, &wc)?)?;
        if let Some(out) = grad {
            let g = tape.backward(loss)?;
            *out = g.flat(np);
            for v in [input, h0, c0] {
                out.extend(g.wrt(v));
            }
        }
        Ok(loss.item())
    };
    let mut grad = Vec::new();
    run(&x, Some(&mut grad))?;
    let coords: Vec<usize> = (0..x.len()).collect();
    compare("lstm_step", &x, &grad, &coords, config, |p| run(p, None))
}

const TOY_TURNS: [(&str, &str); 2] = [
    ("hi there, my printer is broken", "sorry to hear that. what model?"),
    ("an old laser one", "please restart it and try again"),
];
const TOY_DISTRACTORS: [&str; 3] = ["goodbye!", "what model?", "have a nice day"];

/// Ranking loss through the whole hierarchy at hidden sizes 3/4/5, on
/// `pipeline_coords` randomly chosen parameters.
fn pipeline_trial(rng: &mut Rng, config: &CheckConfig) -> Result<Trial> {
    let dialog = Dialog {
        id: "toy".into(),
        turns: TOY_TURNS.iter().map(|(u, s)| Turn::new(*u, *s)).collect(),
        source: "gradcheck".into(),
    };
    let turn = rng.random_range(1..=2);
    let instance = RankingInstance {
        dialog_id: "toy".into(),
        turn,
        truth: TOY_TURNS[turn - 1].1.into(),
        distractors: TOY_DISTRACTORS.iter().map(|s| s.to_string()).collect(),
    };
    let texts = TOY_TURNS
        .iter()
        .flat_map(|(u, s)| [*u, *s])
        .chain(TOY_DISTRACTORS);
    let vocab = Vocab::build(texts);
    let mut model = Model::new(&EncoderConfig::tiny(), vocab, &BTreeMap::new(), rng)?;
    for v in model.params.values_mut() {
        *v += rng.random_range(-0.3..0.3);
    }
    let (_, grad) = model.loss_and_grad(&dialog, &instance, None)?;
    let x = model.params.values().to_vec();
    let coords: Vec<usize> = (0..config.pipeline_coords)
        .map(|_| rng.random_range(0..x.len()))
        .collect();
    let mut probe = model.clone();
    compare("encoder+ranker", &x, &grad, &coords, config, |p| {
        probe.params.values_mut().copy_from_slice(p);
        Ok(probe.loss_and_grad(&dialog, &instance, None)?.0)
    })
}

/// The consolidation penalty as a tape function of `θ`.
fn penalty_trial(rng: &mut Rng, config: &CheckConfig) -> Result<Trial> {
    let n = rng.random_range(1..8);
    let config_c = ConsolidationConfig {
        c: rng.random_range(0.01..2.0),
        ..ConsolidationConfig::new(Mode::Aewc)
    };
    let mut state = ConsolidationState::new(config_c, n)?;
    let theta0 = uniform(rng, n, -1.0, 1.0);
    state.on_task_end(&theta0)?;
    state.importance = uniform(rng, n, 0.0, 3.0);
    let x = uniform(rng, n, -1.0, 1.0);
    let eval = |x: &[f64]| -> Result<f64> {
        let tape = Tape::new();
        Ok(state.surrogate_penalty(tape.var(Tensor::vector(x.to_vec())))?.item())
    };
    let tape = Tape::new();
    let theta = tape.var(Tensor::vector(x.clone()));
    let grads = tape.backward(state.surrogate_penalty(theta)?)?;
    let grad = grads.wrt(theta);
    let coords: Vec<usize> = (0..n).collect();
    compare("surrogate_penalty", &x, &grad, &coords, config, eval)
}

/// Trials per primitive; lstm, pipeline and penalty counts.
pub const PRIM_TRIALS: usize = 4;
pub const LSTM_TRIALS: usize = 8;
pub const PIPELINE_TRIALS: usize = 6;
pub const PENALTY_TRIALS: usize = 8;

/// The full suite under `seed`.
pub fn run_suite(seed: u64, config: &CheckConfig) -> Result<SuiteReport> {
    let mut rng = stream(seed, Stream::Init, 0x6C);
    let mut trials = Vec::new();
    for p in PRIMS {
        for _ in 0..PRIM_TRIALS {
            trials.push(prim_trial(p, &mut rng, config)?);
        }
    }
    for _ in 0..LSTM_TRIALS {
        trials.push(lstm_trial(&mut rng, config)?);
    }
    for _ in 0..PIPELINE_TRIALS {
        trials.push(pipeline_trial(&mut rng, config)?);
    }
    for _ in 0..PENALTY_TRIALS {
        trials.push(penalty_trial(&mut rng, config)?);
    }
    Ok(SuiteReport {
        tolerance: config.tolerance,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(2.0, 1.0, 1e-4), 0.5);
        assert_eq!(relative_error(0.0, 1e-9, 1e-4), 1e-5);
    }

    #[test]
    fn catches_a_wrong_gradient() {
        let t = compare("x^2", &[1.5], &[2.0], &[0], &CheckConfig::default(), |x| Ok(x[0] * x[0])).unwrap();
        assert!(t.worst > 0.2);
        assert!((t.numeric - 3.0).abs() < 1e-8);
    }

    #[test]
    fn suite_passes() {
        let report = run_suite(1, &CheckConfig::default()).unwrap();
        assert!(report.trials.len() >= 100);
        let worst = report.worst().unwrap();
        assert!(report.passed(), "{worst:?}");
    }

    #[test]
    fn sigmoid_slope_at_zero() {
        let tape = Tape::new();
        let x = tape.var(Tensor::vector(vec![0.0]));
        let g = tape.backward(x.sigmoid().sum()).unwrap().wrt(x);
        assert!((g[0] - 0.25).abs() < 1e-15);
    }
}
