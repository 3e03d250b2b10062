use serde::{Deserialize, Serialize};

use crate::numkit::Matrix;
use crate::scalar::Scalar;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const LR_DECAY: f64 = 0.99;

/// Adam moment accumulators for a list of parameter blocks.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub step: u64,
    m: Vec<Matrix<T>>,
    v: Vec<Matrix<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(shapes: &[(usize, usize)], beta1: f64) -> Self {
        let z = |&(r, c): &(usize, usize)| Matrix::zeros(r, c);
        Self {
            beta1: T::of(beta1),
            beta2: T::of(ADAM_BETA2),
            eps: T::of(ADAM_EPS),
            step: 0,
            m: shapes.iter().map(z).collect(),
            v: shapes.iter().map(z).collect(),
        }
    }

    /// One bias-corrected Adam update with learning rate `lr`.
    pub fn step(&mut self, params: &mut [&mut Matrix<T>], grads: &[&Matrix<T>], lr: T) {
        assert_eq!(params.len(), self.m.len(), "parameter block count");
        assert_eq!(grads.len(), self.m.len(), "gradient block count");
        self.step += 1;
        let t = self.step as i32;
        let bc1 = T::one() - self.beta1.powi(t);
        let bc2 = T::one() - self.beta2.powi(t);
        let (b1, b2) = (self.beta1, self.beta2);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            assert_eq!(p.shape(), g.shape(), "gradient shape");
            let ps = p.as_mut_slice();
            let (ms, vs) = (m.as_mut_slice(), v.as_mut_slice());
            for (i, &gi) in g.as_slice().iter().enumerate() {
                ms[i] = b1 * ms[i] + (T::one() - b1) * gi;
                vs[i] = b2 * vs[i] + (T::one() - b2) * gi * gi;
                let mh = ms[i] / bc1;
                let vh = vs[i] / bc2;
                ps[i] -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

/// Interpretation of "the temporal derivative increased".
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrRule {
    /// `Δ_t > Δ_{t-1}`.
    #[default]
    SecondDifference,
    /// `Δ_t > 0`.
    Sign,
}

/// Learning rate adapted from the per-epoch loss sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveLr {
    pub nu: f64,
    pub rule: LrRule,
    prev_loss: Option<f64>,
    prev_delta: Option<f64>,
    pub increases: u64,
    pub decreases: u64,
}

impl AdaptiveLr {
    pub fn new(nu: f64, rule: LrRule) -> Self {
        Self {
            nu,
            rule,
            prev_loss: None,
            prev_delta: None,
            increases: 0,
            decreases: 0,
        }
    }

    /// Record an epoch loss and return the updated rate.
    pub fn observe(&mut self, loss: f64) -> f64 {
        if let Some(prev) = self.prev_loss {
            let delta = loss - prev;
            let shrink = match self.rule {
                LrRule::SecondDifference => self.prev_delta.map(|pd| delta > pd),
                LrRule::Sign => Some(delta > 0.0),
            };
            match shrink {
                Some(true) => {
                    self.nu *= LR_DECAY;
                    self.increases += 1;
                }
                Some(false) => {
                    self.nu /= LR_DECAY;
                    self.decreases += 1;
                }
                None => {}
            }
            self.prev_delta = Some(delta);
        }
        self.prev_loss = Some(loss);
        self.nu
    }
}
