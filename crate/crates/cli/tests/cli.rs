//! Exit codes and artifacts of the `frugal` binary.

use std::path::Path;
use std::process::Command;

fn frugal(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_frugal"))
        .args(args)
        .env_remove("FRUGAL_DATA_ROOT")
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write_config(dir: &Path, dataset: &str) -> String {
    let path = dir.join("cfg.toml");
    let text = format!(
        "seed = 5\noutput_dir = \"{}\"\n{dataset}\n[model]\nfilters = 2\nattention_dim = 0\nlayers = 2\n\
         [training]\nepochs = 20\nlr0 = 0.01\n[al]\nstrategies = [\"random\", \"display_latent\"]\ncheckpoints = [0.2, 0.4]\n",
        dir.join("out").display()
    );
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL_SYNTH: &str = "[dataset]\nkind = \"synth\"\nclasses = 3\nper_class = 8\njoints = 4\nframes = 12\n";

#[test]
fn verify_subset_passes() {
    let (code, out, _) = frugal(&["verify", "--only", "gradients,frechet_closed_form"]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("2 of 2 checks passed"), "{out}");
}

#[test]
fn corrupted_checkpoint_fails_verify() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("model.json");
    std::fs::write(&ckpt, "{}").unwrap();
    let (code, out, err) = frugal(&["verify", "--only", "gradients", "--checkpoint", ckpt.to_str().unwrap()]);
    assert_eq!(code, 3, "{out}{err}");
    assert!(err.contains("checkpoint"), "{err}");
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = frugal(&["train", "--config", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(code, 1, "{err}");
    let cfg = write_config(dir.path(), &SMALL_SYNTH.replace("frames = 12", "frames = 12\nframez = 3"));
    let (code, _, err) = frugal(&["train", "--config", &cfg]);
    assert_eq!(code, 1);
    assert!(err.contains("dataset") && err.contains("framez"), "{err}");
    let (code, _, _) = frugal(&["al", "--config", &cfg, "--strategy", "bogus"]);
    assert_eq!(code, 1);
}

#[test]
fn missing_dataset_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[dataset]\nkind = \"sbu\"\nroot = \"/nonexistent/sbu\"\n");
    let (code, _, err) = frugal(&["train", "--config", &cfg]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("skeleton_pos.txt"), "{err}");
}

#[test]
fn al_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_SYNTH);
    let (code, out, err) = frugal(&["al", "--config", &cfg, "--seeds", "5,6"]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("display_latent"), "{out}");
    let out_dir = dir.path().join("out");
    for f in ["al_rows.csv", "al_grid.csv", "al_report.json", "seeds.json", "manifest.json", "config.resolved.toml"] {
        assert!(out_dir.join(f).is_file(), "{f}");
    }
    let rows = std::fs::read_to_string(out_dir.join("al_rows.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 2 * 2 * 2);
    let (code, report, _) = frugal(&["report", "--in", out_dir.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(report, out);
}
