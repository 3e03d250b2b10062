use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetSplit, SkeletonError, SkeletonSequence, Topology};
use crate::numkit::Rng;
use crate::scalar::Scalar;

/// Parameters of the synthetic chain-skeleton generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub classes: usize,
    /// Sequences per class, before the train/test split.
    pub per_class: usize,
    pub joints: usize,
    pub frames: usize,
    /// Scale of every per-sample perturbation; 0 makes a class deterministic.
    pub jitter: f64,
    /// Amplitude of the class-specific motion relative to the shared motion.
    pub separation: f64,
    /// Fraction of each class sent to the test split.
    pub test_fraction: f64,
    pub chunks: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            classes: 4,
            per_class: 60,
            joints: 6,
            frames: 32,
            jitter: 0.2,
            separation: 1.0,
            test_fraction: 0.5,
            chunks: 4,
        }
    }
}

struct Motion {
    dir: [f64; 3],
    amp: f64,
    freq: f64,
    phase: f64,
}

fn unit3(rng: &mut Rng) -> [f64; 3] {
    loop {
        let v = [rng.normal(), rng.normal(), rng.normal()];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-6 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

fn motions(rng: &mut Rng, joints: usize, amp_scale: f64, freq: f64) -> Vec<Motion> {
    (0..joints)
        .map(|j| Motion {
            dir: unit3(rng),
            // the root joint moves least
            amp: amp_scale * (0.2 + 0.8 * rng.uniform()) * (j as f64 + 1.0) / joints as f64,
            freq,
            phase: TAU * rng.uniform(),
        })
        .collect()
}

/// Raw synthetic sequences: `(train, test)` per class in generation order.
pub fn synth_sequences(
    rng: &Rng,
    spec: &SynthSpec,
) -> Result<(Vec<SkeletonSequence>, Vec<SkeletonSequence>), SkeletonError> {
    if spec.classes == 0 || spec.per_class == 0 || spec.joints == 0 || spec.frames == 0 {
        return Err(SkeletonError::Invalid("synthetic counts must all be >= 1".into()));
    }
    if !(0.0..1.0).contains(&spec.test_fraction) {
        return Err(SkeletonError::Invalid("test_fraction must lie in [0, 1)".into()));
    }
    let mut tmpl_rng = rng.substream("synth-templates");
    let shared = motions(&mut tmpl_rng, spec.joints, 1.0, 1.0);
    let classes: Vec<Vec<Motion>> = (0..spec.classes)
        .map(|c| motions(&mut tmpl_rng, spec.joints, spec.separation, 1.0 + (c % 3) as f64))
        .collect();
    let mut sample_rng = rng.substream("synth-samples");
    let n_test = ((spec.per_class as f64) * spec.test_fraction).round() as usize;
    let n_train = spec.per_class - n_test.min(spec.per_class);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    let jit = spec.jitter;
    let tf = spec.frames as f64;
    for (label, class_motion) in classes.iter().enumerate() {
        for i in 0..spec.per_class {
            let amp_gain = 1.0 + jit * 0.5 * sample_rng.normal();
            let phase_shift = jit * sample_rng.normal();
            let offsets: Vec<[f64; 3]> = (0..spec.joints)
                .map(|_| [jit * sample_rng.normal(), jit * sample_rng.normal(), jit * sample_rng.normal()])
                .collect();
            let mut frames = Vec::with_capacity(spec.frames);
            for t in 0..spec.frames {
                let tau = t as f64 / tf;
                let frame = (0..spec.joints)
                    .map(|j| {
                        let mut p = [0.0, j as f64, 0.0];
                        for m in [&shared[j], &class_motion[j]] {
                            let s = amp_gain * m.amp * (TAU * m.freq * tau + m.phase + phase_shift).sin();
                            for c in 0..3 {
                                p[c] += s * m.dir[c];
                            }
                        }
                        for c in 0..3 {
                            p[c] += offsets[j][c] + 0.2 * jit * sample_rng.normal();
                        }
                        p
                    })
                    .collect();
                frames.push(frame);
            }
            let seq = SkeletonSequence::new(frames, label)?;
            if i < n_train {
                train.push(seq);
            } else {
                test.push(seq);
            }
        }
    }
    Ok((train, test))
}

/// Class-conditional chain-skeleton dataset, deterministic in the seed.
pub fn synth_generate<T: Scalar>(rng: &Rng, spec: &SynthSpec) -> Result<DatasetSplit<T>, SkeletonError> {
    let (train, test) = synth_sequences(rng, spec)?;
    DatasetSplit::from_sequences(&train, &test, &Topology::chain(spec.joints), spec.chunks, spec.classes)
}

#[derive(Serialize)]
struct SplitExport<'a, T: Scalar> {
    descriptors: Vec<&'a [T]>,
    descriptor_shape: (usize, usize),
    adjacency: &'a [T],
    labels: Vec<usize>,
    seed: u64,
}

/// Write `train.json` and `test.json` with fields
/// `{descriptors, descriptor_shape, adjacency, labels, seed}`.
pub fn export_split_json<T: Scalar>(split: &DatasetSplit<T>, seed: u64, dir: &Path) -> Result<(), SkeletonError> {
    fs::create_dir_all(dir).map_err(|source| SkeletonError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for (name, graphs) in [("train", &split.train), ("test", &split.test)] {
        let Some(first) = graphs.first() else { continue };
        let doc = SplitExport {
            descriptors: graphs.iter().map(|g| g.descriptors.as_slice()).collect(),
            descriptor_shape: first.descriptors.shape(),
            adjacency: first.adjacency.as_slice(),
            labels: graphs.iter().map(|g| g.label).collect(),
            seed,
        };
        let path = dir.join(format!("{name}.json"));
        fs::write(&path, serde_json::to_string(&doc)?).map_err(|source| SkeletonError::Io { path, source })?;
    }
    Ok(())
}
