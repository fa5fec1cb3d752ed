//! Importance-weighted consolidation of previously learned parameters.
//!
//! While a task trains, every step accumulates per-parameter contributions
//! `ω ← λω − g⊙Δθ` and displacements `Δ ← λΔ + Δθ`. At the task boundary
//! they are folded into the importance `Ω += max(ω, 0)/(Δ² + ζ)` and the
//! parameters are recorded as the anchor `θ̄`. Later tasks then add the
//! quadratic penalty `c·Σ Ω(θ̄ − θ)²` to their loss.
//!
//! With `λ = 1` this is the undecayed path integral. The Fisher baseline
//! instead adds the mean squared log-likelihood gradient to `Ω`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::params::ParamStore;
use crate::tensor::{Shape, Tensor, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Aewc,
    PathIntegral,
    FisherEwc,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsolidationConfig {
    pub mode: Mode,
    /// Penalty weight.
    pub c: f64,
    /// Damping of the displacement denominator.
    pub zeta: f64,
    /// Decay of the running contributions; ignored by `PathIntegral`.
    pub lambda: f64,
}

impl ConsolidationConfig {
    pub fn new(mode: Mode) -> Self {
        ConsolidationConfig {
            mode,
            c: 0.01,
            zeta: 1e-3,
            lambda: 0.999,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::Config(format!("lambda {} outside (0, 1]", self.lambda)));
        }
        if !(self.zeta > 0.0) {
            return Err(Error::Config(format!("zeta must be positive, got {}", self.zeta)));
        }
        if !(self.c >= 0.0) || !self.c.is_finite() {
            return Err(Error::Config(format!("c must be a finite non-negative number, got {}", self.c)));
        }
        Ok(())
    }

    /// The decay actually applied per step.
    pub fn effective_lambda(&self) -> f64 {
        match self.mode {
            Mode::PathIntegral => 1.0,
            _ => self.lambda,
        }
    }
}

/// Running and accumulated importance over the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsolidationState {
    pub config: ConsolidationConfig,
    /// Running ω of the current task.
    pub omega: Vec<f64>,
    /// Running Δ of the current task.
    pub delta: Vec<f64>,
    /// Accumulated Ω over completed tasks.
    pub importance: Vec<f64>,
    /// θ̄ at the last task boundary.
    pub anchor: Vec<f64>,
    pub tasks_completed: usize,
}

impl ConsolidationState {
    pub fn new(config: ConsolidationConfig, len: usize) -> Result<Self> {
        config.validate()?;
        Ok(ConsolidationState {
            config,
            omega: vec![0.0; len],
            delta: vec![0.0; len],
            importance: vec![0.0; len],
            anchor: vec![0.0; len],
            tasks_completed: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::Alignment {
                expected: self.len(),
                got: len,
            });
        }
        Ok(())
    }

    fn tracks_path(&self) -> bool {
        matches!(self.config.mode, Mode::Aewc | Mode::PathIntegral)
    }

    /// Whether the penalty can be non-zero.
    pub fn penalty_active(&self) -> bool {
        self.config.mode != Mode::Off && self.tasks_completed > 0 && self.config.c != 0.0
    }

    /// Records one optimizer step: `g` is the task-loss gradient at the
    /// pre-step parameters and `step` the update that was applied.
    pub fn on_step(&mut self, g: &[f64], step: &[f64]) -> Result<()> {
        self.check(g.len())?;
        self.check(step.len())?;
        if !self.tracks_path() {
            return Ok(());
        }
        let lambda = self.config.effective_lambda();
        for k in 0..g.len() {
            self.omega[k] = lambda * self.omega[k] - g[k] * step[k];
            self.delta[k] = lambda * self.delta[k] + step[k];
        }
        Ok(())
    }

    /// Adds the mean squared gradient of `fisher` to `Ω` (Fisher mode only).
    pub fn absorb_fisher(&mut self, fisher: &FisherAccumulator) -> Result<()> {
        self.check(fisher.len())?;
        if self.config.mode != Mode::FisherEwc {
            return Err(Error::Contract(format!(
                "Fisher estimates given to a {:?} consolidation state",
                self.config.mode
            )));
        }
        for (o, f) in self.importance.iter_mut().zip(fisher.mean()) {
            *o += f;
        }
        Ok(())
    }

    /// Folds the running contributions into `Ω`, anchors at `theta` and
    /// resets `ω` and `Δ`.
    pub fn on_task_end(&mut self, theta: &[f64]) -> Result<()> {
        self.check(theta.len())?;
        if self.tracks_path() {
            let zeta = self.config.zeta;
            for k in 0..theta.len() {
                let d = self.delta[k];
                self.importance[k] += self.omega[k].max(0.0) / (d * d + zeta);
            }
        }
        self.anchor.copy_from_slice(theta);
        self.omega.iter_mut().for_each(|x| *x = 0.0);
        self.delta.iter_mut().for_each(|x| *x = 0.0);
        self.tasks_completed += 1;
        Ok(())
    }

    /// `c·Σ Ω(θ̄ − θ)²`.
    pub fn penalty(&self, theta: &[f64]) -> Result<f64> {
        self.check(theta.len())?;
        if !self.penalty_active() {
            return Ok(0.0);
        }
        let mut s = 0.0;
        for k in 0..theta.len() {
            let d = self.anchor[k] - theta[k];
            s += self.importance[k] * d * d;
        }
        Ok(self.config.c * s)
    }

    /// Adds `2c·Ω(θ − θ̄)` to `grads`.
    pub fn add_penalty_grad(&self, theta: &[f64], grads: &mut [f64]) -> Result<()> {
        self.check(theta.len())?;
        self.check(grads.len())?;
        if !self.penalty_active() {
            return Ok(());
        }
        let c2 = 2.0 * self.config.c;
        for k in 0..theta.len() {
            grads[k] += c2 * self.importance[k] * (theta[k] - self.anchor[k]);
        }
        Ok(())
    }

    /// The penalty as a tape expression of a flat parameter vector.
    pub fn surrogate_penalty<'t>(&self, theta: Var<'t>) -> Result<Var<'t>> {
        self.check(theta.len())?;
        let tape = theta.tape();
        if !self.penalty_active() {
            return Ok(tape.constant(Tensor::scalar(0.0)));
        }
        let shape = Shape::vector(self.len());
        let anchor = tape.constant(Tensor::new(shape, self.anchor.clone())?);
        let weight = tape.constant(Tensor::new(shape, self.importance.clone())?);
        let d = anchor.sub(theta.reshape(shape)?)?;
        Ok(d.mul(d)?.mul(weight)?.sum().scale(self.config.c))
    }

    /// `Ω` split by parameter, for export.
    pub fn importance_rows(&self, store: &ParamStore) -> Result<Vec<ImportanceRow>> {
        self.check(store.len())?;
        Ok(store
            .entries()
            .iter()
            .map(|e| ImportanceRow {
                name: e.name.clone(),
                start: e.offset,
                end: e.offset + e.len(),
                values: self.importance[e.range()].to_vec(),
            })
            .collect())
    }
}

/// One parameter's slice of `Ω`; `start..end` is its flat index range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRow {
    pub name: String,
    pub start: usize,
    pub end: usize,
    pub values: Vec<f64>,
}

/// Running sum of squared log-likelihood gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherAccumulator {
    sum: Vec<f64>,
    count: usize,
}

impl FisherAccumulator {
    pub fn new(len: usize) -> Self {
        FisherAccumulator {
            sum: vec![0.0; len],
            count: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.sum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sum.is_empty()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn update(&mut self, g: &[f64]) -> Result<()> {
        if g.len() != self.sum.len() {
            return Err(Error::Alignment {
                expected: self.sum.len(),
                got: g.len(),
            });
        }
        for (s, x) in self.sum.iter_mut().zip(g) {
            *s += x * x;
        }
        self.count += 1;
        Ok(())
    }

    /// Mean of squares; zero before any update.
    pub fn mean(&self) -> Vec<f64> {
        if self.count == 0 {
            return vec![0.0; self.sum.len()];
        }
        let n = self.count as f64;
        self.sum.iter().map(|s| s / n).collect()
    }
}
