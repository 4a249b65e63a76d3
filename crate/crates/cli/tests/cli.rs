use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};
use tempfile::TempDir;
use vortexkam_cli::{parse_config, parse_config_str, RunConfig};

/// Small truncations so every stage finishes in a few seconds.
const FAST: &str = r#"{
  "seed": 3,
  "transversality": { "ell_max": 3, "j_max": 8, "gamma_grid": 96 },
  "measure": { "upsilons": [0.0625, 0.03125, 0.015625], "cutoffs": { "ell_max": 1, "j_max": 6, "grid": 1024 } },
  "reduction": { "l_op": 3, "j_max": 8, "steps": 2 }
}"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_vortexkam"));
    c.env_remove("VORTEXKAM_THREADS");
    c
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("config.in.json");
    fs::write(&p, text).unwrap();
    p
}

fn run_cli(sub: &str, cfg: &str, extra: &[&str]) -> (TempDir, Output) {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), cfg);
    let out = bin()
        .args([
            sub,
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.path().join("out").to_str().unwrap(),
        ])
        .args(extra)
        .output()
        .unwrap();
    (dir, out)
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn minimal_config_fills_defaults() {
    let cfg = parse_config_str("{}").unwrap();
    assert_eq!(cfg, RunConfig::default());
    let (dir, out) = run_cli("dispersion", "{}", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let snap = parse_config(&dir.path().join("out/config.json")).unwrap();
    assert_eq!(snap, RunConfig::default());
    let text = fs::read_to_string(dir.path().join("out/config.json")).unwrap();
    assert!(text.contains("\"gamma_interval\"") && text.contains("\"schedule\""));
}

#[test]
fn reversed_gamma_interval_names_the_field() {
    let e = parse_config_str(r#"{"dispersion": {"gamma_interval": [1.5, 0.5]}}"#).unwrap_err();
    assert_eq!(e.path, "dispersion.gamma_interval");
    let (_d, out) = run_cli(
        "dispersion",
        r#"{"dispersion": {"gamma_interval": [1.5, 0.5]}}"#,
        &[],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("dispersion.gamma_interval"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn duplicate_moduli_rejected() {
    let e = parse_config_str(r#"{"sites": {"nbar": [2, 2], "sigma": [1, -1]}}"#).unwrap_err();
    assert_eq!(e.path, "sites");
    assert!(e.message.contains("distinct"), "{e}");
}

#[test]
fn unknown_keys_rejected_with_path() {
    let e =
        parse_config_str(r#"{"measure": {"cutoffs": {"ell_max": 1, "bogus": 2}}}"#).unwrap_err();
    assert!(e.path.starts_with("measure.cutoffs"), "{e}");
    assert!(e.message.contains("bogus"), "{e}");
    assert!(parse_config_str(r#"{"sedd": 1}"#).is_err());
}

#[test]
fn out_of_range_values_rejected() {
    let e = parse_config_str(r#"{"measure": {"upsilons": [0.5, 1.5]}}"#).unwrap_err();
    assert_eq!(e.path, "measure.upsilons[1]");
    let e = parse_config_str(r#"{"schedule": {"upsilon": 0.0}}"#).unwrap_err();
    assert!(e.to_string().contains("schedule.upsilon"), "{e}");
    let e = parse_config_str(r#"{"reduction": {"gamma": 3.0}}"#).unwrap_err();
    assert_eq!(e.path, "reduction.gamma");
    let e = parse_config_str(r#"{"synth": {"amplitudes": [0.1]}}"#).unwrap_err();
    assert_eq!(e.path, "synth.amplitudes");
}

#[test]
fn missing_config_exits_with_validation_code() {
    let dir = TempDir::new().unwrap();
    let out = bin()
        .args([
            "synth",
            "--config",
            "/nonexistent/cfg.json",
            "--out",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("cannot read"));
}

#[test]
fn straighten_exits_zero_with_history() {
    let (dir, out) = run_cli("straighten", "{}", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let r = read_json(&dir.path().join("out/straighten.json"));
    assert_eq!(r["steps"].as_array().unwrap().len(), 4);
    assert_eq!(r["diverged"], Value::Bool(false));
    assert_eq!(r["strictly_decreasing"], Value::Bool(true));
    assert!(dir.path().join("out/straighten_profiles.csv").exists());
}

#[test]
fn reduce_with_large_amplitude_exits_three() {
    let cfg = r#"{"seed": 0, "reduction": {"eps": 0.3, "l_op": 3, "j_max": 8, "steps": 3}}"#;
    let (dir, out) = run_cli("reduce", cfg, &[]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("divergence: reduce"));
    let r = read_json(&dir.path().join("out/reduce.json"));
    assert_eq!(r["history"]["diverged"], Value::Bool(true));
    let m = read_json(&dir.path().join("out/manifest.json"));
    assert_eq!(m["exit_code"], Value::from(3));
}

#[test]
fn all_chains_stages_with_one_manifest() {
    let (dir, out) = run_cli("all", FAST, &["--threads", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let root = dir.path().join("out");
    let m = read_json(&root.join("manifest.json"));
    assert_eq!(m["subcommand"], "all");
    assert_eq!(m["threads"], Value::from(2));
    assert_eq!(m["seed"], Value::from(3));
    let files: Vec<&str> = m["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["path"].as_str().unwrap())
        .collect();
    for name in [
        "config.json",
        "dispersion.json",
        "dispersion.csv",
        "synth.json",
        "synth.csv",
        "transversality.json",
        "measure.json",
        "measure.csv",
        "straighten.json",
        "straighten_profiles.csv",
        "reduce.json",
    ] {
        assert!(files.contains(&name), "{name} missing from manifest");
    }
    for f in m["files"].as_array().unwrap() {
        let bytes = fs::read(root.join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(f["bytes"].as_u64().unwrap(), bytes.len() as u64);
        assert_eq!(
            f["sha256"].as_str().unwrap(),
            hex::encode(Sha256::digest(&bytes))
        );
    }
    let stages: Vec<&str> = m["timing"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["stage"].as_str().unwrap())
        .collect();
    assert_eq!(
        stages,
        [
            "dispersion",
            "synth",
            "transversality",
            "measure",
            "straighten",
            "reduce"
        ]
    );
    for r in ["synth.json", "straighten.json", "reduce.json"] {
        assert_eq!(read_json(&root.join(r))["seed"], Value::from(3), "{r}");
    }
    // no stray temporaries
    assert!(fs::read_dir(&root).unwrap().all(|e| !e
        .unwrap()
        .file_name()
        .to_string_lossy()
        .starts_with('.')));
}

#[test]
fn snapshot_reparses_with_seed_override() {
    let (dir, out) = run_cli("synth", FAST, &["--seed", "99"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let snap = parse_config(&dir.path().join("out/config.json")).unwrap();
    let mut want = parse_config_str(FAST).unwrap();
    want.seed = 99;
    assert_eq!(snap, want);
    assert_eq!(
        read_json(&dir.path().join("out/synth.json"))["seed"],
        Value::from(99)
    );
}

#[test]
fn thread_count_from_environment() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "{}");
    let out = bin()
        .env("VORTEXKAM_THREADS", "3")
        .args([
            "dispersion",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.path().join("o").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        read_json(&dir.path().join("o/manifest.json"))["threads"],
        Value::from(3)
    );
}

#[test]
fn synth_residuals_are_small() {
    let (dir, out) = run_cli("synth", "{}", &[]);
    assert_eq!(out.status.code(), Some(0));
    let r = read_json(&dir.path().join("out/synth.json"));
    assert_eq!(r["residuals"].as_array().unwrap().len(), 20);
    assert!(r["max_residual"].as_f64().unwrap() <= 1e-10);
    assert_eq!(r["reversibility"]["reversible"], Value::Bool(true));
}

fn take<const N: usize>(b: &[u8], pos: &mut usize) -> [u8; N] {
    let out: [u8; N] = b[*pos..*pos + N].try_into().unwrap();
    *pos += N;
    out
}

#[test]
fn dump_layout_is_self_consistent() {
    let cfg = r#"{"reduction": {"l_op": 2, "j_max": 6, "steps": 2, "dump": true}}"#;
    let (dir, out) = run_cli("reduce", cfg, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let b = fs::read(dir.path().join("out/reduce_dump.bin")).unwrap();
    let r = read_json(&dir.path().join("out/reduce.json"));
    let mut pos = 0;
    let l_op = i64::from_le_bytes(take(&b, &mut pos));
    let j_max = i64::from_le_bytes(take(&b, &mut pos));
    let nu = u64::from_le_bytes(take(&b, &mut pos)) as usize;
    let sectors = u64::from_le_bytes(take(&b, &mut pos));
    assert_eq!((l_op, j_max, nu), (2, 6, 2));
    assert_eq!(sectors, r["history"]["sectors"].as_u64().unwrap());
    let mut dim = 0;
    let mut max_off: f64 = 0.0;
    for k in 0..sectors {
        assert_eq!(i64::from_le_bytes(take(&b, &mut pos)), k as i64);
        let n = u64::from_le_bytes(take(&b, &mut pos)) as usize;
        dim += if k == 0 { n } else { 2 * n };
        for _ in 0..n {
            let comp = u64::from_le_bytes(take(&b, &mut pos));
            assert!(comp <= 1);
            let ell: Vec<i64> = (0..nu)
                .map(|_| i64::from_le_bytes(take(&b, &mut pos)))
                .collect();
            let j = i64::from_le_bytes(take(&b, &mut pos));
            assert!(ell.iter().all(|l| l.abs() <= l_op) && j.abs() <= j_max);
        }
        for _ in 0..n * n {
            let re = f64::from_le_bytes(take(&b, &mut pos));
            let im = f64::from_le_bytes(take(&b, &mut pos));
            assert!(re.is_finite() && im == 0.0);
        }
        for i in 0..n {
            for c in 0..n {
                let re = f64::from_le_bytes(take(&b, &mut pos));
                let im = f64::from_le_bytes(take(&b, &mut pos));
                assert_eq!(re, 0.0);
                if i != c {
                    max_off = max_off.max(im.abs());
                }
            }
        }
    }
    assert_eq!(pos, b.len());
    assert_eq!(dim as u64, r["history"]["dim"].as_u64().unwrap());
    // entries are bounded by the spectral norm of the off-diagonal part
    assert!(max_off <= r["final_off_diagonal"].as_f64().unwrap() * 1.01);
}
