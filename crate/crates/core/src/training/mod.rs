//! Losses, hand-derived gradients, Adam and the adaptive learning-rate rule.
//!
//! The penalty terms act on the effective weights `W_ℓ = Ŵ_ℓ + δI`. Because
//! `∂W/∂Ŵ` is the identity, the gradient stored for `Ŵ_ℓ` is the gradient
//! with respect to `W_ℓ`, produced by one code path.

mod loss;
mod optim;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use loss::{
    cn_penalty, cn_penalty_grad, cross_entropy, loss_and_grad, loss_and_grad_warm, or_penalty, or_penalty_grad, param_blocks_mut,
    resolved_lambda, softmax, total_loss, CnPenalty, Grads, LossParts, SvdWarmStart, SIGMA_FLOOR,
};
pub use optim::{Adam, AdaptiveLr, LrRule, ADAM_BETA1, ADAM_BETA2, ADAM_EPS, LR_DECAY};

use crate::gcn::{GcnError, GcnModel};
use crate::numkit::NumError;
use crate::scalar::Scalar;
use crate::skeleton_io::SkeletonGraph;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty labeled set")]
    EmptySet,
    #[error("batch: {0}")]
    Batch(String),
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize, trace: Vec<TraceRow> },
    #[error("invalid loss config: {0}")]
    Config(String),
    #[error("trace csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Model(#[from] GcnError),
    #[error(transparent)]
    Num(#[from] NumError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularizer {
    #[default]
    None,
    Cn,
    Or,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub regularizer: Regularizer,
    /// Penalty weight; `None` means `1/p`.
    pub lambda: Option<f64>,
    /// Reparametrization shift applied to every invertible layer.
    pub delta: f64,
    pub epochs: usize,
    /// Adam first-moment coefficient.
    pub momentum: f64,
    pub lr0: f64,
    /// Mini-batch size; `0` trains full-batch.
    pub batch: usize,
    pub lr_rule: LrRule,
    /// Record the observed condition number every this many epochs (`0`: last
    /// epoch only).
    pub cn_every: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            regularizer: Regularizer::None,
            lambda: None,
            delta: 0.0,
            epochs: 2700,
            momentum: ADAM_BETA1,
            lr0: 1e-3,
            batch: 0,
            lr_rule: LrRule::SecondDifference,
            cn_every: 50,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if let Some(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(TrainError::Config(format!("lambda must be > 0, got {l}")));
            }
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(TrainError::Config(format!("delta must be >= 0, got {}", self.delta)));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(TrainError::Config(format!("lr0 must be > 0, got {}", self.lr0)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(TrainError::Config(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        Ok(())
    }
}

/// One row of the loss trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: usize,
    pub ce: f64,
    pub penalty: f64,
    pub nu: f64,
    pub observed_cn: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Trained<T> {
    pub model: GcnModel<T>,
    pub trace: Vec<TraceRow>,
}

/// Train on `set` in the given order: contiguous mini-batches, no shuffling.
pub fn train<T: Scalar>(
    model: GcnModel<T>,
    set: &[&SkeletonGraph<T>],
    cfg: &LossConfig,
) -> Result<Trained<T>, TrainError> {
    cfg.validate()?;
    if set.is_empty() {
        return Err(TrainError::EmptySet);
    }
    let mut model = model.with_delta(T::of(cfg.delta));
    let shapes: Vec<(usize, usize)> = param_blocks_mut(&mut model).iter().map(|m| m.shape()).collect();
    let mut adam = Adam::<T>::new(&shapes, cfg.momentum);
    let mut lr = AdaptiveLr::new(cfg.lr0, cfg.lr_rule);
    let mut warm = SvdWarmStart::default();
    let batch = if cfg.batch == 0 { set.len() } else { cfg.batch };
    let mut trace = Vec::with_capacity(cfg.epochs);
    let n = set.len() as f64;
    for epoch in 0..cfg.epochs {
        let (mut ce, mut pen, mut tot) = (0.0, 0.0, 0.0);
        let nu = lr.nu;
        for chunk in set.chunks(batch) {
            let (parts, grads) = loss_and_grad_warm(&model, chunk, cfg, &mut warm)?;
            let w = chunk.len() as f64 / n;
            ce += w * parts.ce.to_f64_lossy();
            pen += w * parts.penalty.to_f64_lossy();
            tot += w * parts.total.to_f64_lossy();
            let blocks: Vec<_> = grads.blocks().into_iter().map(|(_, m)| m).collect();
            adam.step(&mut param_blocks_mut(&mut model), &blocks, T::of(nu));
        }
        let record_cn = (cfg.cn_every > 0 && epoch % cfg.cn_every == 0) || epoch + 1 == cfg.epochs;
        trace.push(TraceRow {
            epoch,
            ce,
            penalty: pen,
            nu,
            observed_cn: record_cn.then(|| model.observed_cn().value),
        });
        if !tot.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch, trace });
        }
        lr.observe(tot);
    }
    Ok(Trained { model, trace })
}

/// Write the trace as CSV with columns `epoch,ce,penalty,nu,observed_cn`.
pub fn write_trace_csv(path: &Path, trace: &[TraceRow]) -> Result<(), TrainError> {
    let mut w = csv::Writer::from_path(path)?;
    for row in trace {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
