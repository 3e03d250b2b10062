//! Pool-based active-learning rounds with a simulated oracle.
//!
//! Each round embeds the remaining pool under the current classifier,
//! acquires `k` samples, labels them through the [`Oracle`] and retrains on
//! everything labeled so far. Metric rows are emitted at the first round whose
//! labeled fraction reaches each checkpoint rate.

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{acquire, AcquisitionError, AcquisitionRequest, SolverSettings, Strategy};
use crate::gcn::{GcnError, GcnModel, ModelSpec};
use crate::metrics::{self, AlRow, GaussianSummary, MetricsError, PoolScaler};
use crate::numkit::{Matrix, Rng};
use crate::scalar::Scalar;
use crate::skeleton_io::{DatasetSplit, SkeletonGraph};
use crate::training::{self, LossConfig, TrainError, Trained};

/// Default labeling-rate checkpoints.
pub const DEFAULT_CHECKPOINTS: [f64; 3] = [0.15, 0.30, 0.45];
/// Default per-round acquisition size as a fraction of the initial pool.
pub const DEFAULT_ROUND_FRACTION: f64 = 0.05;

#[derive(Debug, Error)]
pub enum AlError {
    #[error("invalid AL config: {0}")]
    Config(String),
    #[error("sample {0} was already queried")]
    DoubleQuery(usize),
    #[error("sample {index} is outside the training split ({len} samples)")]
    OutOfRange { index: usize, len: usize },
    #[error("acquisition failed in round {round}: {source}")]
    Acquisition {
        round: usize,
        #[source]
        source: AcquisitionError,
    },
    #[error("retraining failed in round {round}: {source}")]
    Train {
        round: usize,
        #[source]
        source: TrainError,
    },
    #[error(transparent)]
    Model(#[from] GcnError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlConfig {
    pub strategy: Strategy,
    /// Samples acquired per round; `None` means `ceil(0.05 · pool)`.
    pub per_round_k: Option<usize>,
    /// Labeling rates at which metrics are reported, sorted ascending.
    pub checkpoints: Vec<f64>,
    /// Labeled fraction at which acquisition stops; `None` means the last
    /// checkpoint.
    pub total_budget: Option<f64>,
    /// Reinitialize the classifier before every retrain instead of continuing
    /// from the previous round's weights.
    pub retrain_from_scratch: bool,
    pub model: ModelSpec,
    pub retrain: LossConfig,
    pub solver: SolverSettings,
}

impl Default for AlConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::DisplayLatent,
            per_round_k: None,
            checkpoints: DEFAULT_CHECKPOINTS.to_vec(),
            total_budget: None,
            retrain_from_scratch: true,
            model: ModelSpec::default(),
            retrain: LossConfig::default(),
            solver: SolverSettings::default(),
        }
    }
}

impl AlConfig {
    pub fn validate(&self) -> Result<(), AlError> {
        if self.checkpoints.is_empty() {
            return Err(AlError::Config("checkpoints must not be empty".into()));
        }
        if self.checkpoints.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
            return Err(AlError::Config(format!("checkpoint rates must lie in (0, 1]: {:?}", self.checkpoints)));
        }
        if self.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(AlError::Config(format!("checkpoints must be strictly increasing: {:?}", self.checkpoints)));
        }
        if self.per_round_k == Some(0) {
            return Err(AlError::Config("per_round_k must be at least 1".into()));
        }
        if let Some(b) = self.total_budget {
            if !(b > 0.0 && b <= 1.0) {
                return Err(AlError::Config(format!("total_budget must lie in (0, 1], got {b}")));
            }
        }
        self.retrain.validate().map_err(|e| AlError::Config(e.to_string()))
    }

    pub fn budget_fraction(&self) -> f64 {
        self.total_budget.unwrap_or_else(|| self.checkpoints.last().copied().unwrap_or(1.0))
    }
}

/// Number of labels needed to reach `rate` of `n` samples.
pub fn count_for_rate(rate: f64, n: usize) -> usize {
    ((rate * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
}

pub fn default_round_size(n: usize) -> usize {
    ((DEFAULT_ROUND_FRACTION * n as f64).ceil() as usize).max(1)
}

/// Ground-truth label source that refuses repeated queries.
#[derive(Debug, Clone)]
pub struct Oracle {
    labels: Vec<usize>,
    queried: Vec<bool>,
    queries: usize,
}

impl Oracle {
    pub fn new(labels: Vec<usize>) -> Self {
        let queried = vec![false; labels.len()];
        Self {
            labels,
            queried,
            queries: 0,
        }
    }

    pub fn query(&mut self, index: usize) -> Result<usize, AlError> {
        let len = self.labels.len();
        let seen = self.queried.get_mut(index).ok_or(AlError::OutOfRange { index, len })?;
        if *seen {
            return Err(AlError::DoubleQuery(index));
        }
        *seen = true;
        self.queries += 1;
        Ok(self.labels[index])
    }

    pub fn queries(&self) -> usize {
        self.queries
    }
}

/// Fresh classifier for `split`, drawn from the `label` substream of `seed`.
pub fn init_model<T: Scalar>(
    split: &DatasetSplit<T>,
    spec: &ModelSpec,
    seed: u64,
    label: &str,
) -> Result<GcnModel<T>, AlError> {
    let first = split
        .train
        .first()
        .ok_or_else(|| AlError::Config("training split is empty".into()))?;
    let mut rng = Rng::new(seed).substream(label);
    Ok(GcnModel::init(spec, &first.adjacency, first.descriptor_dim(), split.class_count, &mut rng)?)
}

/// Train a fresh model on the whole training split in index order.
pub fn train_baseline<T: Scalar>(
    split: &DatasetSplit<T>,
    spec: &ModelSpec,
    loss: &LossConfig,
    seed: u64,
) -> Result<Trained<T>, AlError> {
    let model = init_model(split, spec, seed, "model-init")?;
    let set: Vec<&SkeletonGraph<T>> = split.train.iter().collect();
    training::train(model, &set, loss).map_err(|source| AlError::Train { round: 0, source })
}

/// What happened in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub acquired: Vec<usize>,
    pub labeled_count: usize,
    pub retrained: bool,
    pub solver_iterations: Option<usize>,
    pub solver_converged: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct AlReport<T> {
    pub strategy: Strategy,
    pub seed: u64,
    pub rows: Vec<AlRow>,
    pub rounds: Vec<RoundLog>,
    /// Training-split indices in acquisition order.
    pub labeled: Vec<usize>,
    /// Classifier after the last retrain.
    pub model: GcnModel<T>,
}

/// Strategy used before any classifier has been trained: those that rely on
/// a trained classifier fall back to their model-free counterpart, the others
/// work on the untrained embedding.
pub fn round_zero_strategy(strategy: Strategy) -> Strategy {
    match strategy {
        Strategy::Margin => Strategy::Random,
        Strategy::DisplayLatent => Strategy::DisplayAmbient,
        other => other,
    }
}

fn columns<T: Scalar>(vectors: &[Vec<T>], rows: usize) -> Matrix<T> {
    if vectors.is_empty() {
        Matrix::zeros(rows, 0)
    } else {
        Matrix::from_columns(vectors)
    }
}

/// Run the acquisition rounds of one strategy and seed.
pub fn run<T: Scalar>(cfg: &AlConfig, split: &DatasetSplit<T>, seed: u64) -> Result<AlReport<T>, AlError> {
    cfg.validate()?;
    let n = split.train.len();
    let budget = count_for_rate(cfg.budget_fraction(), n);
    for &rate in &cfg.checkpoints {
        if count_for_rate(rate, n) > budget {
            warn!("checkpoint {rate} lies beyond the labeling budget and will not be reported");
        }
    }
    let k = cfg.per_round_k.unwrap_or_else(|| default_round_size(n));
    let root = Rng::new(seed);
    let mut oracle = Oracle::new(split.train_labels());
    let mut model = init_model(split, &cfg.model, seed, "acq-init")?.with_delta(T::of(cfg.retrain.delta));
    let p = model.ambient_dim;
    let mut pool: Vec<usize> = (0..n).collect();
    let mut labeled: Vec<usize> = Vec::new();
    let mut exemplars_z: Vec<Vec<T>> = Vec::new();
    let mut rows = Vec::new();
    let mut rounds = Vec::new();
    let mut next_checkpoint = 0;
    let mut round = 0;
    while labeled.len() < budget && !pool.is_empty() {
        let take = k.min(budget - labeled.len()).min(pool.len());
        let train_features = model.embed_all(&split.train)?;
        let pool_features: Vec<Vec<T>> = pool.iter().map(|&i| train_features[i].clone()).collect();
        let mut history_idx = labeled.clone();
        history_idx.sort_unstable();
        let history_features: Vec<Vec<T>> = history_idx.iter().map(|&i| train_features[i].clone()).collect();
        let pool_m = columns(&pool_features, p);
        let history_m = columns(&history_features, p);
        let strategy = if round == 0 { round_zero_strategy(cfg.strategy) } else { cfg.strategy };
        let result = acquire(AcquisitionRequest {
            pool: &pool_m,
            history: &history_m,
            k: take,
            classifier: strategy.needs_classifier().then_some(&model),
            strategy,
            rng: root.substream_indexed("acquire", round as u64),
            solver: cfg.solver,
        })
        .map_err(|source| AlError::Acquisition { round, source })?;

        let designed: Vec<Vec<T>> = match &result.designed_ambient {
            Some(v) => (0..v.cols()).map(|c| v.col(c)).collect(),
            None => result.selected.iter().map(|&pos| pool_features[pos].clone()).collect(),
        };
        let scaler = PoolScaler::fit(&train_features)?;
        exemplars_z.extend(scaler.apply(&designed)?);
        let reference_z = scaler.apply(&train_features)?;

        let acquired: Vec<usize> = result.selected.iter().map(|&pos| pool[pos]).collect();
        for &idx in &acquired {
            oracle.query(idx)?;
        }
        let mut drop = result.selected.clone();
        drop.sort_unstable_by(|a, b| b.cmp(a));
        for pos in drop {
            pool.remove(pos);
        }
        labeled.extend_from_slice(&acquired);

        let mut reached = Vec::new();
        while next_checkpoint < cfg.checkpoints.len() && labeled.len() >= count_for_rate(cfg.checkpoints[next_checkpoint], n) {
            reached.push(cfg.checkpoints[next_checkpoint]);
            next_checkpoint += 1;
        }
        let more_rounds = labeled.len() < budget && !pool.is_empty();
        let retrain = !reached.is_empty() || (more_rounds && cfg.strategy.needs_classifier());
        if retrain {
            let start = if cfg.retrain_from_scratch {
                init_model(split, &cfg.model, seed, "model-init")?
            } else {
                model
            };
            let mut order = labeled.clone();
            order.sort_unstable();
            let set: Vec<&SkeletonGraph<T>> = order.iter().map(|&i| &split.train[i]).collect();
            model = training::train(start, &set, &cfg.retrain)
                .map_err(|source| AlError::Train { round, source })?
                .model;
        }
        if !reached.is_empty() {
            let accuracy = metrics::accuracy(&model, &split.test)?;
            let observed_cn = model.observed_cn().value;
            let fid = if exemplars_z.len() >= 2 {
                let a = GaussianSummary::fit(&exemplars_z)?;
                let b = GaussianSummary::fit(&reference_z)?;
                Some(metrics::frechet_distance(&a, &b)?.to_f64_lossy())
            } else {
                None
            };
            for rate in reached {
                rows.push(AlRow {
                    strategy: cfg.strategy.name().to_string(),
                    rate,
                    seed,
                    accuracy,
                    observed_cn,
                    fid,
                    rounds: round + 1,
                    labeled_count: labeled.len(),
                });
            }
        }
        rounds.push(RoundLog {
            round,
            acquired,
            labeled_count: labeled.len(),
            retrained: retrain,
            solver_iterations: result.diagnostics.solver_iterations,
            solver_converged: result.diagnostics.solver_converged,
        });
        round += 1;
    }
    debug_assert_eq!(oracle.queries(), labeled.len());
    Ok(AlReport {
        strategy: cfg.strategy,
        seed,
        rows,
        rounds,
        labeled,
        model,
    })
}
