//! Evaluation metrics and result tables.
//!
//! Accuracy is macro-averaged over classes. The Fréchet distance compares
//! Gaussian fits of two populations; exemplar FID fits both in the pool's
//! per-dimension standardized ambient coordinates.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gcn::{GcnError, GcnModel};
use crate::numkit::{sqrtm_psd, Matrix, NumError};
use crate::scalar::Scalar;
use crate::skeleton_io::SkeletonGraph;

/// Ridge added to fitted covariances.
pub const COV_SHRINKAGE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("empty evaluation set")]
    Empty,
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("dimension mismatch: {a} vs {b}")]
    Dimension { a: usize, b: usize },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] GcnError),
    #[error(transparent)]
    Num(#[from] NumError),
}

/// Macro-averaged accuracy of `predictions` against `labels`; classes absent
/// from `labels` are skipped.
pub fn macro_accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64, MetricsError> {
    if labels.is_empty() || predictions.len() != labels.len() {
        return Err(MetricsError::Empty);
    }
    let mut per: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for (&p, &y) in predictions.iter().zip(labels) {
        let e = per.entry(y).or_default();
        e.1 += 1;
        if p == y {
            e.0 += 1;
        }
    }
    let sum: f64 = per.values().map(|&(c, t)| c as f64 / t as f64).sum();
    Ok(sum / per.len() as f64)
}

pub fn predict_all<T: Scalar>(model: &GcnModel<T>, graphs: &[SkeletonGraph<T>]) -> Result<Vec<usize>, MetricsError> {
    graphs
        .iter()
        .map(|g| Ok(model.predict(&model.embed(g)?)?))
        .collect()
}

/// Macro-averaged accuracy of the classifier on `graphs`.
pub fn accuracy<T: Scalar>(model: &GcnModel<T>, graphs: &[SkeletonGraph<T>]) -> Result<f64, MetricsError> {
    if graphs.is_empty() {
        return Err(MetricsError::Empty);
    }
    let labels: Vec<usize> = graphs.iter().map(|g| g.label).collect();
    macro_accuracy(&predict_all(model, graphs)?, &labels)
}

/// Mean and covariance of a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSummary<T> {
    pub mean: Vec<T>,
    pub cov: Matrix<T>,
    pub count: usize,
}

impl<T: Scalar> GaussianSummary<T> {
    /// Fit to row-vector samples with the unbiased covariance plus
    /// `COV_SHRINKAGE · I`.
    pub fn fit(samples: &[Vec<T>]) -> Result<Self, MetricsError> {
        let n = samples.len();
        if n < 2 {
            return Err(MetricsError::TooFewSamples(n));
        }
        let p = samples[0].len();
        if let Some(bad) = samples.iter().find(|s| s.len() != p) {
            return Err(MetricsError::Dimension { a: p, b: bad.len() });
        }
        let nf = T::of(n as f64);
        let mean: Vec<T> = (0..p).map(|j| samples.iter().map(|s| s[j]).sum::<T>() / nf).collect();
        let mut cov = Matrix::zeros(p, p);
        for s in samples {
            for a in 0..p {
                let da = s[a] - mean[a];
                for b in a..p {
                    cov[(a, b)] += da * (s[b] - mean[b]);
                }
            }
        }
        let denom = T::of((n - 1) as f64);
        for a in 0..p {
            for b in a..p {
                let v = cov[(a, b)] / denom;
                cov[(a, b)] = v;
                cov[(b, a)] = v;
            }
        }
        Ok(Self {
            mean,
            cov: cov.shifted(T::of(COV_SHRINKAGE)),
            count: n,
        })
    }
}

/// `‖μ_a − μ_b‖² + tr(Σ_a + Σ_b − 2 (Σ_a^{1/2} Σ_b Σ_a^{1/2})^{1/2})`,
/// clamped at zero.
pub fn frechet_distance<T: Scalar>(a: &GaussianSummary<T>, b: &GaussianSummary<T>) -> Result<T, MetricsError> {
    if a.mean.len() != b.mean.len() {
        return Err(MetricsError::Dimension {
            a: a.mean.len(),
            b: b.mean.len(),
        });
    }
    let mean_term: T = a.mean.iter().zip(&b.mean).map(|(&x, &y)| (x - y) * (x - y)).sum();
    let ra = sqrtm_psd(&a.cov)?;
    let inner = ra.matmul(&b.cov)?.matmul(&ra)?;
    let sym = Matrix::from_fn(inner.rows(), inner.cols(), |i, j| T::of(0.5) * (inner[(i, j)] + inner[(j, i)]));
    let cross = sqrtm_psd(&sym)?;
    let d = mean_term + a.cov.trace() + b.cov.trace() - T::of(2.0) * cross.trace();
    Ok(d.max(T::zero()))
}

/// Per-dimension standardization fitted to a reference population.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolScaler<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

impl<T: Scalar> PoolScaler<T> {
    /// Sample mean and unbiased standard deviation per dimension; constant
    /// dimensions get scale 1.
    pub fn fit(pool: &[Vec<T>]) -> Result<Self, MetricsError> {
        if pool.len() < 2 {
            return Err(MetricsError::TooFewSamples(pool.len()));
        }
        let p = pool[0].len();
        if let Some(bad) = pool.iter().find(|s| s.len() != p) {
            return Err(MetricsError::Dimension { a: p, b: bad.len() });
        }
        let nf = T::of(pool.len() as f64);
        let mean: Vec<T> = (0..p).map(|j| pool.iter().map(|s| s[j]).sum::<T>() / nf).collect();
        let denom = T::of((pool.len() - 1) as f64);
        let std = (0..p)
            .map(|j| {
                let v = pool.iter().map(|s| (s[j] - mean[j]) * (s[j] - mean[j])).sum::<T>() / denom;
                if v > T::zero() {
                    v.sqrt()
                } else {
                    T::one()
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, rows: &[Vec<T>]) -> Result<Vec<Vec<T>>, MetricsError> {
        let p = self.mean.len();
        rows.iter()
            .map(|r| {
                if r.len() != p {
                    return Err(MetricsError::Dimension { a: p, b: r.len() });
                }
                Ok(r.iter().enumerate().map(|(j, &v)| (v - self.mean[j]) / self.std[j]).collect())
            })
            .collect()
    }
}

/// Fréchet distance between exemplars and pool, both standardized per
/// dimension with the pool's mean and standard deviation.
pub fn exemplar_fid<T: Scalar>(exemplars: &[Vec<T>], pool: &[Vec<T>]) -> Result<T, MetricsError> {
    if exemplars.len() < 2 {
        return Err(MetricsError::TooFewSamples(exemplars.len()));
    }
    let scaler = PoolScaler::fit(pool)?;
    let a = GaussianSummary::fit(&scaler.apply(exemplars)?)?;
    let b = GaussianSummary::fit(&scaler.apply(pool)?)?;
    frechet_distance(&a, &b)
}

/// One metric row of an active-learning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlRow {
    pub strategy: String,
    pub rate: f64,
    pub seed: u64,
    pub accuracy: f64,
    pub observed_cn: f64,
    pub fid: Option<f64>,
    pub rounds: usize,
    pub labeled_count: usize,
}

/// One configuration of the regularizer ablation for one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub config: usize,
    pub regularizer: String,
    pub delta: f64,
    pub seed: u64,
    pub accuracy: f64,
    pub observed_cn: f64,
    pub fid: Option<f64>,
}

/// Mean and population standard deviation; `None` for no finite values.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    let v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64;
    Some((m, var.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlGridRow {
    pub strategy: String,
    pub rate: f64,
    pub seeds: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub observed_cn_mean: Option<f64>,
    pub fid_mean: Option<f64>,
}

/// Aggregate per (strategy, rate) over seeds, strategies in first-seen order.
pub fn al_grid(rows: &[AlRow]) -> Vec<AlGridRow> {
    let mut keys: Vec<(String, u64)> = Vec::new();
    for r in rows {
        let key = (r.strategy.clone(), r.rate.to_bits());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(strategy, rate_bits)| {
            let cell: Vec<&AlRow> = rows
                .iter()
                .filter(|r| r.strategy == strategy && r.rate.to_bits() == rate_bits)
                .collect();
            let acc: Vec<f64> = cell.iter().map(|r| r.accuracy).collect();
            let (am, asd) = mean_std(&acc).unwrap_or((f64::NAN, f64::NAN));
            let cn: Vec<f64> = cell.iter().map(|r| r.observed_cn).collect();
            let fid: Vec<f64> = cell.iter().filter_map(|r| r.fid).collect();
            AlGridRow {
                strategy,
                rate: f64::from_bits(rate_bits),
                seeds: cell.len(),
                accuracy_mean: am,
                accuracy_std: asd,
                observed_cn_mean: mean_std(&cn).map(|x| x.0),
                fid_mean: mean_std(&fid).map(|x| x.0),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationGridRow {
    pub config: usize,
    pub regularizer: String,
    pub delta: f64,
    pub seeds: usize,
    pub accuracy_mean: f64,
    pub observed_cn_mean: f64,
    pub fid_mean: Option<f64>,
}

pub fn ablation_grid(rows: &[AblationRow]) -> Vec<AblationGridRow> {
    let mut configs: Vec<usize> = rows.iter().map(|r| r.config).collect();
    configs.sort_unstable();
    configs.dedup();
    configs
        .into_iter()
        .map(|c| {
            let cell: Vec<&AblationRow> = rows.iter().filter(|r| r.config == c).collect();
            let acc: Vec<f64> = cell.iter().map(|r| r.accuracy).collect();
            let cn: Vec<f64> = cell.iter().map(|r| r.observed_cn).collect();
            let fid: Vec<f64> = cell.iter().filter_map(|r| r.fid).collect();
            AblationGridRow {
                config: c,
                regularizer: cell[0].regularizer.clone(),
                delta: cell[0].delta,
                seeds: cell.len(),
                accuracy_mean: mean_std(&acc).map_or(f64::NAN, |x| x.0),
                // An infinite (singular) value dominates the mean on purpose.
                observed_cn_mean: if cn.iter().any(|x| x.is_infinite()) {
                    f64::INFINITY
                } else {
                    mean_std(&cn).map_or(f64::NAN, |x| x.0)
                },
                fid_mean: mean_std(&fid).map(|x| x.0),
            }
        })
        .collect()
}

/// Serialize rows to a CSV file; an empty slice writes the header only.
pub fn write_csv<R: Serialize>(path: &Path, rows: &[R], header: &[&str]) -> Result<(), MetricsError> {
    let mut w = csv::WriterBuilder::new().has_headers(!rows.is_empty()).from_path(path)?;
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|source| MetricsError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

pub const AL_ROW_HEADER: [&str; 8] = [
    "strategy",
    "rate",
    "seed",
    "accuracy",
    "observed_cn",
    "fid",
    "rounds",
    "labeled_count",
];
pub const AL_GRID_HEADER: [&str; 7] = [
    "strategy",
    "rate",
    "seeds",
    "accuracy_mean",
    "accuracy_std",
    "observed_cn_mean",
    "fid_mean",
];
pub const ABLATION_ROW_HEADER: [&str; 7] = ["config", "regularizer", "delta", "seed", "accuracy", "observed_cn", "fid"];
pub const ABLATION_GRID_HEADER: [&str; 7] = [
    "config",
    "regularizer",
    "delta",
    "seeds",
    "accuracy_mean",
    "observed_cn_mean",
    "fid_mean",
];

/// Write per-seed rows and the aggregated grid of an AL experiment.
pub fn export_al_tables(dir: &Path, rows: &[AlRow]) -> Result<(), MetricsError> {
    write_csv(&dir.join("al_rows.csv"), rows, &AL_ROW_HEADER)?;
    write_csv(&dir.join("al_grid.csv"), &al_grid(rows), &AL_GRID_HEADER)
}

pub fn export_ablation_tables(dir: &Path, rows: &[AblationRow]) -> Result<(), MetricsError> {
    write_csv(&dir.join("ablation_rows.csv"), rows, &ABLATION_ROW_HEADER)?;
    write_csv(&dir.join("ablation_grid.csv"), &ablation_grid(rows), &ABLATION_GRID_HEADER)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Rng;

    #[test]
    fn accuracy_examples() {
        assert_eq!(macro_accuracy(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        let labels: Vec<usize> = (0..12).map(|i| i % 4).collect();
        assert!((macro_accuracy(&[2; 12], &labels).unwrap() - 0.25).abs() < 1e-15);
        let preds: Vec<usize> = (0..12).map(|i| (i * 7 + 1) % 4).collect();
        let micro = preds.iter().zip(&labels).filter(|(a, b)| a == b).count() as f64 / 12.0;
        assert!((macro_accuracy(&preds, &labels).unwrap() - micro).abs() < 1e-12);
        // unbalanced: macro differs from micro
        assert!((macro_accuracy(&[0, 0, 0, 0], &[0, 0, 0, 1]).unwrap() - 0.5).abs() < 1e-15);
        assert!(macro_accuracy(&[], &[]).is_err());
    }

    fn sample(rng: &mut Rng, n: usize, mean: &[f64], scale: f64) -> Vec<Vec<f64>> {
        (0..n).map(|_| mean.iter().map(|m| m + scale * rng.normal()).collect()).collect()
    }

    #[test]
    fn frechet_examples() {
        let cov = Matrix::<f64>::from_rows(&[vec![2.0, 0.3], vec![0.3, 1.0]]);
        let a = GaussianSummary {
            mean: vec![0.0, 0.0],
            cov: cov.clone(),
            count: 10,
        };
        assert!(frechet_distance(&a, &a).unwrap() < 1e-9);
        let b = GaussianSummary {
            mean: vec![1.0, -2.0],
            cov,
            count: 10,
        };
        assert!((frechet_distance(&a, &b).unwrap() - 5.0).abs() < 1e-8);
        assert!((frechet_distance(&a, &b).unwrap() - frechet_distance(&b, &a).unwrap()).abs() < 1e-8);
        let mut rng = Rng::new(1);
        let x = sample(&mut rng, 10_000, &[0.0, 0.0, 0.0], 1.0);
        let y = sample(&mut rng, 10_000, &[1.0, 1.0, 0.0], 1.0);
        let d = frechet_distance(&GaussianSummary::fit(&x).unwrap(), &GaussianSummary::fit(&y).unwrap()).unwrap();
        assert!((d - 2.0).abs() < 0.1, "{d}");
    }

    #[test]
    fn exemplar_fid_examples() {
        let mut rng = Rng::new(2);
        let pool = sample(&mut rng, 500, &[1.0, -1.0, 3.0], 1.0);
        assert!(exemplar_fid(&pool, &pool).unwrap() < 1e-3);
        let mut last = 0.0;
        for t in [0.5, 1.0, 2.0] {
            let moved: Vec<Vec<f64>> = pool.iter().map(|r| r.iter().map(|v| v + t).collect()).collect();
            let d = exemplar_fid(&moved, &pool).unwrap();
            assert!(d > last);
            last = d;
        }
        let shift: Vec<Vec<f64>> = pool.iter().map(|r| r.iter().map(|v| v + 10.0).collect()).collect();
        let ex: Vec<Vec<f64>> = pool[..50].to_vec();
        let ex_shift: Vec<Vec<f64>> = shift[..50].to_vec();
        let d1 = exemplar_fid(&ex, &pool).unwrap();
        let d2 = exemplar_fid(&ex_shift, &shift).unwrap();
        assert!((d1 - d2).abs() < 1e-8);
        assert!(exemplar_fid(&pool[..1], &pool).is_err());
    }

    #[test]
    fn grids_and_csv() {
        let rows: Vec<AlRow> = (0..2)
            .flat_map(|seed| {
                [0.15, 0.3].into_iter().map(move |rate| AlRow {
                    strategy: "random".into(),
                    rate,
                    seed,
                    accuracy: 0.5 + seed as f64 * 0.1,
                    observed_cn: 3.0,
                    fid: None,
                    rounds: 3,
                    labeled_count: 18,
                })
            })
            .collect();
        let g = al_grid(&rows);
        assert_eq!(g.len(), 2);
        assert!((g[0].accuracy_mean - 0.55).abs() < 1e-12);
        assert_eq!(g[0].seeds, 2);
        let dir = tempfile::tempdir().unwrap();
        export_al_tables(dir.path(), &rows).unwrap();
        export_al_tables(&dir.path().join(""), &[]).unwrap();
        let text = std::fs::read_to_string(dir.path().join("al_grid.csv")).unwrap();
        assert_eq!(text.trim(), AL_GRID_HEADER.join(","));
    }
}
