//! Skeleton datasets: parsing, per-sequence normalization, temporal chunk
//! descriptors, joint adjacency, and a seeded synthetic generator.

mod graph;
mod parse;
mod synth;
mod topology;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use graph::{build_adjacency, chunk_descriptor, graph_from_sequence, normalize_sequence, ChunkDescriptor};
pub use parse::{
    parse_fpha, parse_fpha_file, parse_sbu, parse_sbu_file, split_sbu, write_fpha_sequence,
    write_sbu_sequence, FphaData, SBU_DEFAULT_TEST_SUBJECTS,
};
pub use synth::{export_split_json, synth_generate, synth_sequences, SynthSpec};
pub use topology::Topology;

use crate::numkit::{Matrix, NumError};
use crate::scalar::Scalar;

/// 3-D joint trajectories of one recorded action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonSequence {
    /// `frames[t][j]` is the position of joint `j` at frame `t`.
    pub frames: Vec<Vec<[f64; 3]>>,
    pub label: usize,
    pub subject: Option<String>,
}

impl SkeletonSequence {
    pub fn new(frames: Vec<Vec<[f64; 3]>>, label: usize) -> Result<Self, SkeletonError> {
        let joints = frames.first().map_or(0, Vec::len);
        if frames.is_empty() || joints == 0 {
            return Err(SkeletonError::Empty);
        }
        for (t, f) in frames.iter().enumerate() {
            if f.len() != joints {
                return Err(SkeletonError::JointCount {
                    context: format!("frame {t}"),
                    expected: joints,
                    found: f.len(),
                });
            }
            if f.iter().flatten().any(|c| !c.is_finite()) {
                return Err(SkeletonError::NonFinite(format!("frame {t}")));
            }
        }
        Ok(Self {
            frames,
            label,
            subject: None,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn joint_count(&self) -> usize {
        self.frames[0].len()
    }
}

/// Per-sequence graph: node descriptors `Ψ` (one row per joint trajectory)
/// and the normalized skeletal adjacency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SkeletonGraph<T> {
    pub descriptors: Matrix<T>,
    pub adjacency: Matrix<T>,
    pub label: usize,
}

impl<T: Scalar> SkeletonGraph<T> {
    pub fn nodes(&self) -> usize {
        self.descriptors.rows()
    }

    pub fn descriptor_dim(&self) -> usize {
        self.descriptors.cols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DatasetSplit<T> {
    pub train: Vec<SkeletonGraph<T>>,
    pub test: Vec<SkeletonGraph<T>>,
    pub class_count: usize,
}

impl<T: Scalar> DatasetSplit<T> {
    pub fn train_labels(&self) -> Vec<usize> {
        self.train.iter().map(|g| g.label).collect()
    }

    pub fn test_labels(&self) -> Vec<usize> {
        self.test.iter().map(|g| g.label).collect()
    }

    pub fn validate(&self) -> Result<(), SkeletonError> {
        for g in self.train.iter().chain(&self.test) {
            if g.label >= self.class_count {
                return Err(SkeletonError::Label {
                    label: g.label,
                    classes: self.class_count,
                });
            }
        }
        Ok(())
    }

    /// Build both splits from sequences with a shared topology.
    pub fn from_sequences(
        train: &[SkeletonSequence],
        test: &[SkeletonSequence],
        topology: &Topology,
        chunks: usize,
        class_count: usize,
    ) -> Result<Self, SkeletonError> {
        let build = |seqs: &[SkeletonSequence]| -> Result<Vec<SkeletonGraph<T>>, SkeletonError> {
            seqs.iter().map(|s| graph_from_sequence(s, topology, chunks)).collect()
        };
        let split = Self {
            train: build(train)?,
            test: build(test)?,
            class_count,
        };
        split.validate()?;
        Ok(split)
    }
}

#[derive(Debug, Error)]
pub enum SkeletonError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("{context}: expected {expected} joints, found {found}")]
    JointCount {
        context: String,
        expected: usize,
        found: usize,
    },
    #[error("non-finite coordinate in {0}")]
    NonFinite(String),
    #[error("sequence has no frames")]
    Empty,
    #[error("no sequences found under {0}")]
    NoSequences(PathBuf),
    #[error("joint index {joint} out of range for {joints} joints")]
    BadJoint { joint: usize, joints: usize },
    #[error("label {label} outside [0, {classes})")]
    Label { label: usize, classes: usize },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("dataset layout: {0}")]
    Layout(String),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
