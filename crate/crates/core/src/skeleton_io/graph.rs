use log::warn;

use super::{SkeletonError, SkeletonGraph, SkeletonSequence, Topology};
use crate::numkit::Matrix;
use crate::scalar::Scalar;

/// Node descriptor matrix `Ψ` (joints × 3·chunks) and how many bins were
/// empty and had to inherit an earlier bin's mean.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkDescriptor<T> {
    pub descriptors: Matrix<T>,
    pub empty_bins: usize,
}

/// Contiguous frame bins of near-equal size; the first `T mod chunks` bins get
/// one extra frame.
fn bin_bounds(frames: usize, chunks: usize) -> Vec<(usize, usize)> {
    let base = frames / chunks;
    let rem = frames % chunks;
    let mut start = 0;
    (0..chunks)
        .map(|b| {
            let len = base + usize::from(b < rem);
            let r = (start, start + len);
            start += len;
            r
        })
        .collect()
}

/// Mean 3-D position of every joint over each temporal chunk, concatenated in
/// chunk order.
pub fn chunk_descriptor<T: Scalar>(
    seq: &SkeletonSequence,
    chunks: usize,
) -> Result<ChunkDescriptor<T>, SkeletonError> {
    if chunks == 0 {
        return Err(SkeletonError::Invalid("chunk count must be >= 1".into()));
    }
    let joints = seq.joint_count();
    let mut out = Matrix::zeros(joints, 3 * chunks);
    let mut empty_bins = 0;
    let mut last_filled: Option<usize> = None;
    for (b, (lo, hi)) in bin_bounds(seq.frame_count(), chunks).into_iter().enumerate() {
        if lo == hi {
            empty_bins += 1;
            let src = last_filled.expect("first bin always holds a frame when T >= 1");
            for j in 0..joints {
                for c in 0..3 {
                    out[(j, 3 * b + c)] = out[(j, 3 * src + c)];
                }
            }
            continue;
        }
        let n = (hi - lo) as f64;
        for j in 0..joints {
            for c in 0..3 {
                let s: f64 = seq.frames[lo..hi].iter().map(|f| f[j][c]).sum();
                out[(j, 3 * b + c)] = T::of(s / n);
            }
        }
        last_filled = Some(b);
    }
    if empty_bins > 0 {
        warn!(
            "sequence with {} frames split into {chunks} chunks: {empty_bins} empty bins copied from earlier bins",
            seq.frame_count()
        );
    }
    Ok(ChunkDescriptor {
        descriptors: out,
        empty_bins,
    })
}

/// Symmetric 0/1 adjacency with self-loops, row-normalized.
pub fn build_adjacency<T: Scalar>(edges: &[(usize, usize)], joints: usize) -> Result<Matrix<T>, SkeletonError> {
    let mut a = Matrix::<T>::identity(joints);
    for &(i, j) in edges {
        for joint in [i, j] {
            if joint >= joints {
                return Err(SkeletonError::BadJoint { joint, joints });
            }
        }
        a[(i, j)] = T::one();
        a[(j, i)] = T::one();
    }
    for i in 0..joints {
        let s: T = a.row(i).iter().copied().sum();
        a.row_mut(i).iter_mut().for_each(|x| *x /= s);
    }
    Ok(a)
}

/// Translate by the mean root-joint position and scale by the mean bone
/// length (both averaged over all frames).
pub fn normalize_sequence(seq: &SkeletonSequence, topology: &Topology) -> Result<SkeletonSequence, SkeletonError> {
    let joints = seq.joint_count();
    if joints != topology.joints {
        return Err(SkeletonError::JointCount {
            context: format!("topology {}", topology.name),
            expected: topology.joints,
            found: joints,
        });
    }
    let mut center = [0.0; 3];
    let mut count = 0.0;
    for f in &seq.frames {
        for &r in &topology.root_joints {
            for c in 0..3 {
                center[c] += f[r][c];
            }
            count += 1.0;
        }
    }
    if count > 0.0 {
        center.iter_mut().for_each(|x| *x /= count);
    }
    let mut bone = 0.0;
    let mut bones = 0.0;
    for f in &seq.frames {
        for &(a, b) in &topology.edges {
            let d: f64 = (0..3).map(|c| (f[a][c] - f[b][c]).powi(2)).sum();
            bone += d.sqrt();
            bones += 1.0;
        }
    }
    let scale = if bones > 0.0 && bone > 0.0 { bone / bones } else { 1.0 };
    let frames = seq
        .frames
        .iter()
        .map(|f| {
            f.iter()
                .map(|p| [(p[0] - center[0]) / scale, (p[1] - center[1]) / scale, (p[2] - center[2]) / scale])
                .collect()
        })
        .collect();
    Ok(SkeletonSequence {
        frames,
        label: seq.label,
        subject: seq.subject.clone(),
    })
}

/// Normalize, chunk and attach the topology's adjacency.
pub fn graph_from_sequence<T: Scalar>(
    seq: &SkeletonSequence,
    topology: &Topology,
    chunks: usize,
) -> Result<SkeletonGraph<T>, SkeletonError> {
    let norm = normalize_sequence(seq, topology)?;
    let desc = chunk_descriptor(&norm, chunks)?;
    Ok(SkeletonGraph {
        descriptors: desc.descriptors,
        adjacency: build_adjacency(&topology.edges, topology.joints)?,
        label: seq.label,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq_from_x(xs: &[f64], joints: usize) -> SkeletonSequence {
        let frames = xs.iter().map(|&x| vec![[x, 0.0, 0.0]; joints]).collect();
        SkeletonSequence::new(frames, 0).unwrap()
    }

    #[test]
    fn constant_trajectory_repeats_position() {
        let q = [0.3, -1.2, 2.5];
        let seq = SkeletonSequence::new(vec![vec![q]; 13], 0).unwrap();
        let d = chunk_descriptor::<f64>(&seq, 4).unwrap();
        assert_eq!(d.descriptors.cols(), 12);
        for b in 0..4 {
            for c in 0..3 {
                assert!((d.descriptors[(0, 3 * b + c)] - q[c]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn hand_computed_bin_means() {
        let xs: Vec<f64> = (1..=8).map(f64::from).collect();
        let d = chunk_descriptor::<f64>(&seq_from_x(&xs, 1), 4).unwrap();
        let got: Vec<f64> = (0..4).map(|b| d.descriptors[(0, 3 * b)]).collect();
        assert_eq!(got, vec![1.5, 3.5, 5.5, 7.5]);
    }

    #[test]
    fn remainder_goes_to_earlier_bins() {
        assert_eq!(bin_bounds(10, 4), vec![(0, 3), (3, 6), (6, 8), (8, 10)]);
        // x = 1..10: bins {1,2,3} {4,5,6} {7,8} {9,10}
        let xs: Vec<f64> = (1..=10).map(f64::from).collect();
        let d = chunk_descriptor::<f64>(&seq_from_x(&xs, 1), 4).unwrap();
        let got: Vec<f64> = (0..4).map(|b| d.descriptors[(0, 3 * b)]).collect();
        assert_eq!(got, vec![2.0, 5.0, 7.5, 9.5]);
    }

    #[test]
    fn short_sequences_inherit_earlier_bins() {
        let d = chunk_descriptor::<f64>(&seq_from_x(&[1.0, 5.0], 1), 4).unwrap();
        assert_eq!(d.empty_bins, 2);
        let got: Vec<f64> = (0..4).map(|b| d.descriptors[(0, 3 * b)]).collect();
        assert_eq!(got, vec![1.0, 5.0, 5.0, 5.0]);
        let single = chunk_descriptor::<f64>(&seq_from_x(&[2.0], 1), 4).unwrap();
        assert_eq!(single.empty_bins, 3);
    }

    #[test]
    fn frame_duplication_leaves_descriptor_unchanged() {
        let xs: Vec<f64> = (0..12).map(|t| 0.37 * t as f64 - 1.0).collect();
        let doubled: Vec<f64> = xs.iter().flat_map(|&x| [x, x]).collect();
        let a = chunk_descriptor::<f64>(&seq_from_x(&xs, 2), 4).unwrap();
        let b = chunk_descriptor::<f64>(&seq_from_x(&doubled, 2), 4).unwrap();
        assert!(a.descriptors.sub(&b.descriptors).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn adjacency_cases() {
        let a = build_adjacency::<f64>(&[(0, 1)], 2).unwrap();
        assert_eq!(a, Matrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]));
        let iso = build_adjacency::<f64>(&[(0, 1)], 3).unwrap();
        assert_eq!(iso.row(2), &[0.0, 0.0, 1.0]);
        assert!(matches!(
            build_adjacency::<f64>(&[(0, 3)], 3),
            Err(SkeletonError::BadJoint { joint: 3, .. })
        ));
    }

    #[test]
    fn bundled_topologies_have_symmetric_support_and_stochastic_rows() {
        for topo in [Topology::sbu(), Topology::fpha(), Topology::chain(6)] {
            let a = build_adjacency::<f64>(&topo.edges, topo.joints).unwrap();
            assert_eq!(a.rows(), topo.joints);
            for i in 0..topo.joints {
                let s: f64 = a.row(i).iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
                for j in 0..topo.joints {
                    assert_eq!(a[(i, j)] > 0.0, a[(j, i)] > 0.0);
                }
            }
            for &(i, j) in &topo.edges {
                assert!(a[(i, j)] > 0.0);
            }
        }
        assert_eq!(Topology::sbu().joints, 30);
    }

    #[test]
    fn normalization_centers_root_and_unit_bones() {
        let topo = Topology::chain(3);
        let frames = vec![vec![[5.0, 5.0, 5.0], [5.0, 7.0, 5.0], [5.0, 9.0, 5.0]]; 4];
        let seq = SkeletonSequence::new(frames, 1).unwrap();
        let n = normalize_sequence(&seq, &topo).unwrap();
        assert_eq!(n.frames[0][0], [0.0, 0.0, 0.0]);
        assert_eq!(n.frames[0][2], [0.0, 2.0, 0.0]);
    }
}
