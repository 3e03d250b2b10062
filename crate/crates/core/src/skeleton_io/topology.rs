use serde::{Deserialize, Serialize};

/// Joint-edge list of a skeleton plus the joints whose mean position anchors
/// per-sequence translation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub name: String,
    pub joints: usize,
    pub edges: Vec<(usize, usize)>,
    pub root_joints: Vec<usize>,
}

/// Kinect 15-joint body: head, neck, torso, L shoulder/elbow/hand,
/// R shoulder/elbow/hand, L hip/knee/foot, R hip/knee/foot.
const SBU_BODY_EDGES: [(usize, usize); 14] = [
    (0, 1),
    (1, 2),
    (1, 3),
    (3, 4),
    (4, 5),
    (1, 6),
    (6, 7),
    (7, 8),
    (2, 9),
    (9, 10),
    (10, 11),
    (2, 12),
    (12, 13),
    (13, 14),
];
const SBU_TORSO: usize = 2;
pub(crate) const SBU_BODY_JOINTS: usize = 15;

/// FPHA hand: wrist, five MCPs (thumb..pinky), then PIP/DIP/TIP per finger.
const FPHA_EDGES: [(usize, usize); 20] = [
    (0, 1),
    (0, 2),
    (0, 3),
    (0, 4),
    (0, 5),
    (1, 6),
    (6, 7),
    (7, 8),
    (2, 9),
    (9, 10),
    (10, 11),
    (3, 12),
    (12, 13),
    (13, 14),
    (4, 15),
    (15, 16),
    (16, 17),
    (5, 18),
    (18, 19),
    (19, 20),
];
pub(crate) const FPHA_JOINTS: usize = 21;

impl Topology {
    /// Two SBU bodies merged into one 30-node graph; the two torsos are linked.
    pub fn sbu() -> Self {
        let mut edges: Vec<(usize, usize)> = SBU_BODY_EDGES.to_vec();
        edges.extend(SBU_BODY_EDGES.iter().map(|&(a, b)| (a + SBU_BODY_JOINTS, b + SBU_BODY_JOINTS)));
        edges.push((SBU_TORSO, SBU_TORSO + SBU_BODY_JOINTS));
        Self {
            name: "sbu".into(),
            joints: 2 * SBU_BODY_JOINTS,
            edges,
            root_joints: vec![SBU_TORSO, SBU_TORSO + SBU_BODY_JOINTS],
        }
    }

    pub fn fpha() -> Self {
        Self {
            name: "fpha".into(),
            joints: FPHA_JOINTS,
            edges: FPHA_EDGES.to_vec(),
            root_joints: vec![0],
        }
    }

    /// Open chain `0 - 1 - ... - (joints-1)` rooted at joint 0.
    pub fn chain(joints: usize) -> Self {
        Self {
            name: format!("chain{joints}"),
            joints,
            edges: (1..joints).map(|j| (j - 1, j)).collect(),
            root_joints: vec![0],
        }
    }
}
