use std::fmt::Write as _;
use std::fs;
use std::path::{Component, Path, PathBuf};

use super::topology::{FPHA_JOINTS, SBU_BODY_JOINTS};
use super::{SkeletonError, SkeletonSequence};

const SBU_CLASSES: usize = 8;
const SBU_JOINTS: usize = 2 * SBU_BODY_JOINTS;

/// Subject-pair folders held out for testing when no list is configured.
pub const SBU_DEFAULT_TEST_SUBJECTS: [&str; 4] = ["s01s02", "s03s04", "s05s02", "s06s04"];

fn read(path: &Path) -> Result<String, SkeletonError> {
    fs::read_to_string(path).map_err(|source| SkeletonError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parse rows of `frame_index` followed by `joints × 3` coordinates.
fn parse_rows(text: &str, path: &Path, joints: usize, sep: char) -> Result<Vec<Vec<[f64; 3]>>, SkeletonError> {
    let expected = 1 + 3 * joints;
    let mut frames = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = if sep == ' ' {
            line.split_whitespace().collect()
        } else {
            line.split(sep).map(str::trim).collect()
        };
        if fields.len() != expected {
            return Err(SkeletonError::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg: format!(
                    "row {} has {} values, expected frame index + {} coordinates",
                    lineno + 1,
                    fields.len(),
                    3 * joints
                ),
            });
        }
        let mut vals = Vec::with_capacity(3 * joints);
        for f in &fields[1..] {
            let v: f64 = f.parse().map_err(|_| SkeletonError::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg: format!("not a number: {f:?}"),
            })?;
            if !v.is_finite() {
                return Err(SkeletonError::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    msg: format!("non-finite value {f:?}"),
                });
            }
            vals.push(v);
        }
        frames.push(vals.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect());
    }
    if frames.is_empty() {
        return Err(SkeletonError::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: "no frames".into(),
        });
    }
    Ok(frames)
}

fn write_rows(seq: &SkeletonSequence, sep: &str) -> String {
    let mut out = String::new();
    for (t, frame) in seq.frames.iter().enumerate() {
        let _ = write!(out, "{}", t + 1);
        for p in frame {
            for v in p {
                // `{}` prints the shortest representation that parses back exactly.
                let _ = write!(out, "{sep}{v}");
            }
        }
        out.push('\n');
    }
    out
}

/// One SBU `skeleton_pos.txt`: comma-separated frame index + 2 × 15 × 3 values.
pub fn parse_sbu_file(path: &Path, label: usize) -> Result<SkeletonSequence, SkeletonError> {
    let frames = parse_rows(&read(path)?, path, SBU_JOINTS, ',')?;
    let mut seq = SkeletonSequence::new(frames, label)?;
    seq.subject = subject_of(path);
    Ok(seq)
}

pub fn write_sbu_sequence(seq: &SkeletonSequence) -> String {
    write_rows(seq, ",")
}

fn components(path: &Path) -> Vec<String> {
    path.components()
        .filter_map(|c| match c {
            Component::Normal(s) => s.to_str().map(str::to_owned),
            _ => None,
        })
        .collect()
}

/// Action folder `01`..`08` anywhere in the path.
fn sbu_label(path: &Path) -> Option<usize> {
    components(path).iter().rev().find_map(|c| {
        if c.len() == 2 && c.bytes().all(|b| b.is_ascii_digit()) {
            let n: usize = c.parse().ok()?;
            (1..=SBU_CLASSES).contains(&n).then(|| n - 1)
        } else {
            None
        }
    })
}

/// Subject-pair folder such as `s01s02`.
fn subject_of(path: &Path) -> Option<String> {
    components(path).into_iter().find(|c| {
        let b = c.as_bytes();
        b.len() == 6 && b[0] == b's' && b[3] == b's' && [1, 2, 4, 5].iter().all(|&i| b[i].is_ascii_digit())
    })
}

fn collect_txt(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), SkeletonError> {
    let entries = fs::read_dir(dir).map_err(|source| SkeletonError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    for p in paths {
        if p.is_dir() {
            collect_txt(&p, out)?;
        } else if p.extension().is_some_and(|e| e == "txt") {
            out.push(p);
        }
    }
    Ok(())
}

/// Walk an SBU tree (`<subjects>/<action 01..08>/<take>/skeleton_pos.txt`).
/// Files are visited in sorted path order.
pub fn parse_sbu(root: &Path) -> Result<Vec<SkeletonSequence>, SkeletonError> {
    if !root.is_dir() {
        return Err(SkeletonError::Layout(format!(
            "{} is not a directory; expected <root>/<sXXsYY>/<01..08>/<take>/skeleton_pos.txt",
            root.display()
        )));
    }
    let mut files = Vec::new();
    collect_txt(root, &mut files)?;
    let mut out = Vec::new();
    for f in files {
        let rel = f.strip_prefix(root).unwrap_or(&f);
        let Some(label) = sbu_label(rel) else {
            continue;
        };
        out.push(parse_sbu_file(&f, label)?);
    }
    if out.is_empty() {
        return Err(SkeletonError::NoSequences(root.to_path_buf()));
    }
    Ok(out)
}

/// Split SBU sequences by subject-pair folder.
pub fn split_sbu<S: AsRef<str>>(
    seqs: Vec<SkeletonSequence>,
    test_subjects: &[S],
) -> (Vec<SkeletonSequence>, Vec<SkeletonSequence>) {
    seqs.into_iter().partition(|s| {
        !s.subject
            .as_deref()
            .is_some_and(|sub| test_subjects.iter().any(|t| t.as_ref() == sub))
    })
}

/// One FPHA `skeleton.txt`: space-separated frame index + 21 × 3 values.
pub fn parse_fpha_file(path: &Path, label: usize) -> Result<SkeletonSequence, SkeletonError> {
    let frames = parse_rows(&read(path)?, path, FPHA_JOINTS, ' ')?;
    let mut seq = SkeletonSequence::new(frames, label)?;
    seq.subject = components(path).into_iter().find(|c| c.starts_with("Subject_"));
    Ok(seq)
}

pub fn write_fpha_sequence(seq: &SkeletonSequence) -> String {
    write_rows(seq, " ")
}

#[derive(Debug, Clone)]
pub struct FphaData {
    pub train: Vec<SkeletonSequence>,
    pub test: Vec<SkeletonSequence>,
    pub class_count: usize,
}

const FPHA_SPLIT_FILE: &str = "data_split_action_recognition.txt";
const FPHA_SKELETON_DIR: &str = "Hand_pose_annotation_v1";

/// Read the FPHA action-recognition split. The split file holds a
/// `Training <n>` section and a `Test <n>` section of `<relative path> <label>`
/// lines; skeletons live at `Hand_pose_annotation_v1/<path>/skeleton.txt`.
pub fn parse_fpha(root: &Path) -> Result<FphaData, SkeletonError> {
    let split_path = root.join(FPHA_SPLIT_FILE);
    if !split_path.is_file() {
        return Err(SkeletonError::Layout(format!(
            "missing {}; expected <root>/{FPHA_SPLIT_FILE} and <root>/{FPHA_SKELETON_DIR}/Subject_*/<action>/<take>/skeleton.txt",
            split_path.display()
        )));
    }
    let text = read(&split_path)?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut section: Option<bool> = None;
    let mut max_label = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let head = parts.next().unwrap_or_default();
        let tail = parts.next();
        match head {
            "Training" => {
                section = Some(true);
                continue;
            }
            "Test" => {
                section = Some(false);
                continue;
            }
            _ => {}
        }
        let bad = |msg: String| SkeletonError::Parse {
            path: split_path.clone(),
            line: lineno + 1,
            msg,
        };
        let is_train = section.ok_or_else(|| bad("entry before a Training/Test header".into()))?;
        let label: usize = tail
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad(format!("expected '<path> <label>', got {line:?}")))?;
        max_label = max_label.max(label);
        let seq = parse_fpha_file(&root.join(FPHA_SKELETON_DIR).join(head).join("skeleton.txt"), label)?;
        if is_train {
            train.push(seq);
        } else {
            test.push(seq);
        }
    }
    if train.is_empty() && test.is_empty() {
        return Err(SkeletonError::NoSequences(split_path));
    }
    Ok(FphaData {
        train,
        test,
        class_count: max_label + 1,
    })
}
