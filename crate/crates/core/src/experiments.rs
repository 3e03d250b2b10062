//! Experiment orchestration behind the CLI: baseline training, AL grids, the
//! regularizer ablation and report regeneration, with their on-disk artifacts.

use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::Strategy;
use crate::al_loop::{self, AlConfig, AlError, RoundLog};
use crate::config::{ConfigError, DatasetConfig, ExperimentConfig};
use crate::gcn::GcnError;
use crate::metrics::{self, AblationRow, AlRow, MetricsError};
use crate::numkit::Rng;
use crate::skeleton_io::{self, DatasetSplit, SkeletonError, Topology};
use crate::training::{self, Regularizer, TrainError};

/// Version of the artifact layout written by every command.
pub const SCHEMA_VERSION: u32 = 1;
const SBU_CLASSES: usize = 8;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("dataset: {0}")]
    Data(#[from] SkeletonError),
    #[error(transparent)]
    Al(#[from] AlError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] GcnError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Report { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), ExperimentError> {
    std::fs::write(path, text).map_err(io_err(path))
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), ExperimentError> {
    let text = serde_json::to_string_pretty(value).expect("artifact serializes");
    write_file(path, &(text + "\n"))
}

/// Load the configured dataset. Synthetic data is drawn from the `synth`
/// substream of `seed`.
pub fn load_dataset(cfg: &DatasetConfig, seed: u64) -> Result<DatasetSplit<f64>, ExperimentError> {
    Ok(match cfg {
        DatasetConfig::Synth(spec) => skeleton_io::synth_generate(&Rng::new(seed).substream("synth"), spec)?,
        DatasetConfig::Sbu(c) => {
            let seqs = skeleton_io::parse_sbu(&c.root)?;
            let (train, test) = skeleton_io::split_sbu(seqs, &c.test_subjects);
            DatasetSplit::from_sequences(&train, &test, &Topology::sbu(), c.chunks, SBU_CLASSES)?
        }
        DatasetConfig::Fpha(c) => {
            let data = skeleton_io::parse_fpha(&c.root)?;
            DatasetSplit::from_sequences(&data.train, &data.test, &Topology::fpha(), c.chunks, data.class_count)?
        }
    })
}

/// Named substream seeds used by a run with master seed `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub synth: u64,
    pub model_init: u64,
    pub acq_init: u64,
    pub acquire: u64,
}

impl SeedRecord {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            synth: Rng::derive_seed(seed, "synth"),
            model_init: Rng::derive_seed(seed, "model-init"),
            acq_init: Rng::derive_seed(seed, "acq-init"),
            acquire: Rng::derive_seed(seed, "acquire"),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    schema_version: u32,
    command: String,
    files: Vec<String>,
}

/// Create the output directory and write the resolved config, seeds and
/// manifest.
fn prepare_output(cfg: &ExperimentConfig, command: &str, seeds: &[u64], files: &[&str]) -> Result<PathBuf, ExperimentError> {
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    write_file(&dir.join("config.resolved.toml"), &cfg.to_toml())?;
    let records: Vec<SeedRecord> = seeds.iter().map(|&s| SeedRecord::new(s)).collect();
    write_json(&dir.join("seeds.json"), &records)?;
    let mut all = vec!["config.resolved.toml", "seeds.json", "manifest.json"];
    all.extend_from_slice(files);
    write_json(
        &dir.join("manifest.json"),
        &Manifest {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            files: all.into_iter().map(String::from).collect(),
        },
    )?;
    Ok(dir)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineOutcome {
    pub seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    pub accuracy: f64,
    pub observed_cn: f64,
    pub km_bound: Option<f64>,
    pub final_ce: f64,
}

/// Fully supervised training; writes `model.json`, `trace.csv` and
/// `metrics.json`.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<BaselineOutcome, ExperimentError> {
    let seed = cfg.seed;
    let split = load_dataset(&cfg.dataset, seed)?;
    let trained = al_loop::train_baseline(&split, &cfg.model, &cfg.training, seed)?;
    let model = &trained.model;
    let outcome = BaselineOutcome {
        seed,
        train_size: split.train.len(),
        test_size: split.test.len(),
        accuracy: metrics::accuracy(model, &split.test)?,
        observed_cn: model.observed_cn().value,
        km_bound: model.km_bound().ok(),
        final_ce: trained.trace.last().map_or(f64::NAN, |r| r.ce),
    };
    let dir = prepare_output(cfg, "train", &[seed], &["model.json", "trace.csv", "metrics.json"])?;
    model.save(&dir.join("model.json"))?;
    training::write_trace_csv(&dir.join("trace.csv"), &trained.trace)?;
    write_json(&dir.join("metrics.json"), &outcome)?;
    info!("baseline accuracy {:.4} (observed CN {:.3})", outcome.accuracy, outcome.observed_cn);
    Ok(outcome)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlRunDetail {
    pub strategy: Strategy,
    pub seed: u64,
    pub rows: Vec<AlRow>,
    pub rounds: Vec<RoundLog>,
}

/// Run every (strategy, seed) cell. Data for each seed is shared by all
/// strategies.
pub fn run_al_grid(
    cfg: &ExperimentConfig,
    strategies: &[Strategy],
    seeds: &[u64],
) -> Result<Vec<AlRunDetail>, ExperimentError> {
    let mut out = Vec::new();
    for &seed in seeds {
        let split = load_dataset(&cfg.dataset, seed)?;
        for &strategy in strategies {
            info!("al: strategy {strategy}, seed {seed}");
            let rep = al_loop::run(&cfg.al_config(strategy), &split, seed)?;
            out.push(AlRunDetail {
                strategy,
                seed,
                rows: rep.rows,
                rounds: rep.rounds,
            });
        }
    }
    // Strategy-major order so the grid lists strategies as rows.
    out.sort_by_key(|d| (strategies.iter().position(|&s| s == d.strategy), seeds.iter().position(|&s| s == d.seed)));
    Ok(out)
}

/// AL grid over the configured strategies; writes CSV and JSON tables.
pub fn cmd_al(
    cfg: &ExperimentConfig,
    strategies: Option<&[Strategy]>,
    seeds: Option<&[u64]>,
) -> Result<Vec<AlRow>, ExperimentError> {
    let strategies = strategies.map_or_else(|| cfg.al.strategies.clone(), <[_]>::to_vec);
    let seeds = seeds.map_or_else(|| cfg.run_seeds(), <[_]>::to_vec);
    let details = run_al_grid(cfg, &strategies, &seeds)?;
    let rows: Vec<AlRow> = details.iter().flat_map(|d| d.rows.iter().cloned()).collect();
    let dir = prepare_output(
        cfg,
        "al",
        &seeds,
        &["al_rows.csv", "al_grid.csv", "al_report.json"],
    )?;
    metrics::export_al_tables(&dir, &rows)?;
    write_json(
        &dir.join("al_report.json"),
        &serde_json::json!({ "grid": metrics::al_grid(&rows), "runs": details }),
    )?;
    Ok(rows)
}

/// One row of the regularizer ablation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub id: usize,
    pub regularizer: Regularizer,
    pub delta: f64,
}

pub const ABLATION_CONFIGS: [AblationConfig; 8] = [
    AblationConfig { id: 1, regularizer: Regularizer::None, delta: 0.0 },
    AblationConfig { id: 2, regularizer: Regularizer::None, delta: 1e6 },
    AblationConfig { id: 3, regularizer: Regularizer::None, delta: 1e5 },
    AblationConfig { id: 4, regularizer: Regularizer::None, delta: 10.0 },
    AblationConfig { id: 5, regularizer: Regularizer::Cn, delta: 0.0 },
    AblationConfig { id: 6, regularizer: Regularizer::Cn, delta: 10.0 },
    AblationConfig { id: 7, regularizer: Regularizer::Or, delta: 0.0 },
    AblationConfig { id: 8, regularizer: Regularizer::Or, delta: 10.0 },
];

pub fn ablation_config(id: usize) -> Option<AblationConfig> {
    ABLATION_CONFIGS.iter().copied().find(|c| c.id == id)
}

impl AblationConfig {
    /// AL settings of this configuration for a pool of `n` samples.
    pub fn al_config(&self, cfg: &ExperimentConfig, n: usize) -> AlConfig {
        let ab = &cfg.ablation;
        let mut retrain = cfg.training.clone();
        retrain.regularizer = self.regularizer;
        retrain.delta = self.delta;
        AlConfig {
            strategy: ab.strategy,
            per_round_k: Some(((ab.round_fraction * n as f64).ceil() as usize).max(1)),
            checkpoints: vec![ab.budget],
            total_budget: Some(ab.budget),
            retrain_from_scratch: cfg.al.retrain_from_scratch,
            model: cfg.model.clone(),
            retrain,
            solver: cfg.al.solver,
        }
    }
}

fn regularizer_name(r: Regularizer) -> &'static str {
    match r {
        Regularizer::None => "none",
        Regularizer::Cn => "cn",
        Regularizer::Or => "or",
    }
}

/// Run the selected ablation configurations over `seeds`.
pub fn run_ablation(cfg: &ExperimentConfig, ids: &[usize], seeds: &[u64]) -> Result<Vec<AblationRow>, ExperimentError> {
    let mut rows = Vec::new();
    for &seed in seeds {
        let split = load_dataset(&cfg.dataset, seed)?;
        for &id in ids {
            let ac = ablation_config(id)
                .ok_or_else(|| ConfigError::Invalid(format!("unknown ablation configuration #{id}")))?;
            info!("ablate: config #{id}, seed {seed}");
            let rep = al_loop::run(&ac.al_config(cfg, split.train.len()), &split, seed)?;
            let last = rep.rows.last().ok_or_else(|| {
                ConfigError::Invalid("ablation budget produced no checkpoint row".into())
            })?;
            rows.push(AblationRow {
                config: id,
                regularizer: regularizer_name(ac.regularizer).to_string(),
                delta: ac.delta,
                seed,
                accuracy: last.accuracy,
                observed_cn: last.observed_cn,
                fid: last.fid,
            });
        }
    }
    rows.sort_by_key(|r| (r.config, seeds.iter().position(|&s| s == r.seed)));
    Ok(rows)
}

pub fn cmd_ablate(cfg: &ExperimentConfig, seeds: Option<&[u64]>) -> Result<Vec<AblationRow>, ExperimentError> {
    let seeds = seeds.map_or_else(|| cfg.run_seeds(), <[_]>::to_vec);
    let rows = run_ablation(cfg, &cfg.ablation.configs, &seeds)?;
    let dir = prepare_output(
        cfg,
        "ablate",
        &seeds,
        &["ablation_rows.csv", "ablation_grid.csv", "ablation_report.json"],
    )?;
    metrics::export_ablation_tables(&dir, &rows)?;
    write_json(
        &dir.join("ablation_report.json"),
        &serde_json::json!({
            "configs": ABLATION_CONFIGS,
            "grid": metrics::ablation_grid(&rows),
            "rows": rows,
        }),
    )?;
    Ok(rows)
}

fn read_rows<R: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<R>, ExperimentError> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| ExperimentError::Report {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    rd.deserialize()
        .collect::<Result<Vec<R>, _>>()
        .map_err(|e| ExperimentError::Report {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

/// Re-aggregate the per-seed tables found in `dir` and render them as text.
/// The grids are rewritten next to the rows.
pub fn cmd_report(dir: &Path) -> Result<String, ExperimentError> {
    let mut out = String::new();
    let al_path = dir.join("al_rows.csv");
    let ab_path = dir.join("ablation_rows.csv");
    if !al_path.is_file() && !ab_path.is_file() {
        return Err(ExperimentError::Report {
            path: dir.to_path_buf(),
            message: "no al_rows.csv or ablation_rows.csv found".into(),
        });
    }
    if al_path.is_file() {
        let rows: Vec<AlRow> = read_rows(&al_path)?;
        metrics::export_al_tables(dir, &rows)?;
        out.push_str(&format!(
            "{:<16} {:>6} {:>5} {:>10} {:>9} {:>12} {:>12}\n",
            "strategy", "rate", "seeds", "accuracy", "std", "observed_cn", "fid"
        ));
        for g in metrics::al_grid(&rows) {
            out.push_str(&format!(
                "{:<16} {:>6.2} {:>5} {:>10.4} {:>9.4} {:>12} {:>12}\n",
                g.strategy,
                g.rate,
                g.seeds,
                g.accuracy_mean,
                g.accuracy_std,
                fmt_opt(g.observed_cn_mean),
                fmt_opt(g.fid_mean)
            ));
        }
    }
    if ab_path.is_file() {
        let rows: Vec<AblationRow> = read_rows(&ab_path)?;
        metrics::export_ablation_tables(dir, &rows)?;
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(&format!(
            "{:<7} {:<11} {:>9} {:>5} {:>10} {:>14} {:>14}\n",
            "config", "regularizer", "delta", "seeds", "accuracy", "observed_cn", "fid"
        ));
        for g in metrics::ablation_grid(&rows) {
            out.push_str(&format!(
                "#{:<6} {:<11} {:>9.0e} {:>5} {:>10.4} {:>14.4} {:>14}\n",
                g.config,
                g.regularizer,
                g.delta,
                g.seeds,
                g.accuracy_mean,
                g.observed_cn_mean,
                fmt_opt(g.fid_mean)
            ));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(dir: &Path) -> ExperimentConfig {
        let text = format!(
            r#"
seed = 3
seeds = [3, 4]
output_dir = "{}"

[dataset]
kind = "synth"
classes = 3
per_class = 10
joints = 4
frames = 12

[model]
filters = 2
attention_dim = 0
layers = 2

[training]
epochs = 30
lr0 = 0.01

[al]
strategies = ["random", "coreset"]
checkpoints = [0.2, 0.4]

[ablation]
configs = [1, 7]
budget = 0.4
round_fraction = 0.2
"#,
            dir.display()
        );
        ExperimentConfig::from_toml_str(&text).unwrap()
    }

    #[test]
    fn ablation_table_has_paper_ids() {
        assert_eq!(ABLATION_CONFIGS.len(), 8);
        let deltas: Vec<f64> = ABLATION_CONFIGS[1..4].iter().map(|c| c.delta).collect();
        assert_eq!(deltas, vec![1e6, 1e5, 10.0]);
        assert_eq!(ablation_config(7).unwrap().regularizer, Regularizer::Or);
        assert!(ablation_config(9).is_none());
    }

    #[test]
    fn train_writes_artifacts() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = tiny(tmp.path());
        let out = cmd_train(&cfg).unwrap();
        assert!((0.0..=1.0).contains(&out.accuracy));
        for f in ["model.json", "trace.csv", "metrics.json", "config.resolved.toml", "seeds.json", "manifest.json"] {
            assert!(tmp.path().join(f).is_file(), "{f}");
        }
        let echoed = ExperimentConfig::load(&tmp.path().join("config.resolved.toml")).unwrap();
        assert_eq!(echoed, cfg);
    }

    #[test]
    fn al_and_ablation_are_reproducible() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let rows = cmd_al(&tiny(a.path()), None, None).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 2);
        cmd_al(&tiny(b.path()), None, None).unwrap();
        for f in ["al_rows.csv", "al_grid.csv", "al_report.json", "seeds.json"] {
            assert_eq!(
                std::fs::read(a.path().join(f)).unwrap(),
                std::fs::read(b.path().join(f)).unwrap(),
                "{f}"
            );
        }
        let ab = cmd_ablate(&tiny(a.path()), Some(&[3])).unwrap();
        assert_eq!(ab.len(), 2);
        let text = cmd_report(a.path()).unwrap();
        assert!(text.contains("coreset") && text.contains("#7"), "{text}");
    }

    #[test]
    fn missing_dataset_names_layout() {
        let text = "seed = 1\noutput_dir = \"o\"\n[dataset]\nkind = \"fpha\"\nroot = \"/nonexistent/fpha\"\n";
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        let err = load_dataset(&cfg.dataset, 1).unwrap_err().to_string();
        assert!(err.contains("skeleton.txt"), "{err}");
    }
}
