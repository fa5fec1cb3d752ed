//! Global-norm gradient clipping and the Adam optimizer.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub fn global_norm(g: &[f64]) -> f64 {
    libm::sqrt(g.iter().map(|x| x * x).sum())
}

/// Rescales `g` in place so that its L2 norm is at most `max_norm` and
/// returns the applied scale (1 when no clipping happened).
pub fn clip_global_norm(g: &mut [f64], max_norm: f64) -> Result<f64> {
    if !(max_norm > 0.0) {
        return Err(Error::Domain {
            op: "clip_global_norm",
            detail: alloc::format!("max_norm must be positive, got {max_norm}"),
        });
    }
    if let Some(index) = g.iter().position(|x| !x.is_finite()) {
        return Err(Error::Numeric {
            index,
            context: "gradient".into(),
        });
    }
    let norm = global_norm(g);
    if norm <= max_norm {
        return Ok(1.0);
    }
    let mut scale = max_norm / norm;
    // rounding can leave the rescaled norm an ulp or two above the bound
    while libm::sqrt(g.iter().map(|x| (x * scale) * (x * scale)).sum()) > max_norm {
        scale *= 1.0 - f64::EPSILON;
    }
    for x in g.iter_mut() {
        *x *= scale;
    }
    Ok(scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, len: usize) -> Self {
        Adam {
            config,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Zeroes both moments and the timestep.
    pub fn reset(&mut self) {
        self.m.iter_mut().for_each(|x| *x = 0.0);
        self.v.iter_mut().for_each(|x| *x = 0.0);
        self.t = 0;
    }

    /// One bias-corrected update. `theta` is mutated in place and the
    /// returned vector is exactly what was added to it.
    pub fn step(&mut self, theta: &mut [f64], g: &[f64]) -> Result<Vec<f64>> {
        let mut delta = vec![0.0; theta.len()];
        self.step_into(theta, g, &mut delta)?;
        Ok(delta)
    }

    /// [`Adam::step`] writing the update into `delta`.
    pub fn step_into(&mut self, theta: &mut [f64], g: &[f64], delta: &mut [f64]) -> Result<()> {
        let n = self.m.len();
        for len in [theta.len(), g.len(), delta.len()] {
            if len != n {
                return Err(Error::Alignment { expected: n, got: len });
            }
        }
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.t += 1;
        let bc1 = 1.0 - libm::pow(beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(beta2, self.t as f64);
        for k in 0..n {
            let gk = g[k];
            self.m[k] = beta1 * self.m[k] + (1.0 - beta1) * gk;
            self.v[k] = beta2 * self.v[k] + (1.0 - beta2) * gk * gk;
            let m_hat = self.m[k] / bc1;
            let v_hat = self.v[k] / bc2;
            let d = -lr * m_hat / (libm::sqrt(v_hat) + eps);
            delta[k] = d;
            theta[k] += d;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_examples() {
        let mut g = vec![6.0, 8.0];
        assert_eq!(clip_global_norm(&mut g, 5.0).unwrap(), 0.5);
        assert_eq!(g, vec![3.0, 4.0]);
        let mut small = vec![0.0, 3.0];
        assert_eq!(clip_global_norm(&mut small, 5.0).unwrap(), 1.0);
        assert_eq!(small, vec![0.0, 3.0]);
        assert!(matches!(
            clip_global_norm(&mut [1.0, f64::NAN], 5.0),
            Err(Error::Numeric { index: 1, .. })
        ));
        assert!(clip_global_norm(&mut [1.0], 0.0).is_err());
    }

    #[test]
    fn first_step_is_lr_sized() {
        let mut adam = Adam::new(AdamConfig::default(), 3);
        let mut theta = vec![0.0; 3];
        let d = adam.step(&mut theta, &[1.0, -2.5, 1e-3]).unwrap();
        for (x, s) in d.iter().zip([-1.0, 1.0, -1.0]) {
            assert!((x / (s * 1e-3) - 1.0).abs() < 1e-2, "{x}");
        }
    }

    #[test]
    fn zero_gradient_no_move() {
        let mut adam = Adam::new(AdamConfig::default(), 2);
        let mut theta = vec![0.5, -0.5];
        assert_eq!(adam.step(&mut theta, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(theta, vec![0.5, -0.5]);
    }

    #[test]
    fn returned_delta_is_applied_exactly() {
        let mut adam = Adam::new(AdamConfig::default(), 2);
        let mut theta = vec![0.1234567, -9.87];
        for i in 0..10 {
            let before = theta.clone();
            let d = adam.step(&mut theta, &[0.3 * i as f64, -1.1]).unwrap();
            for k in 0..2 {
                assert_eq!(theta[k], before[k] + d[k]);
            }
        }
    }

    #[test]
    fn length_mismatch() {
        let mut adam = Adam::new(AdamConfig::default(), 2);
        assert!(matches!(
            adam.step(&mut [0.0; 3], &[0.0; 3]),
            Err(Error::Alignment { expected: 2, got: 3 })
        ));
    }
}
