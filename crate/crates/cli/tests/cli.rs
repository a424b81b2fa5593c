use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_turbopinn"));
    c.env_remove("TURBOPINN_OUT");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn assert_artifacts_exist(dir: &Path) {
    let m = manifest(dir);
    let arts = m["artifacts"].as_array().unwrap();
    assert!(!arts.is_empty());
    for a in arts {
        let p = dir.join(a["path"].as_str().unwrap());
        assert!(p.exists(), "{} listed but missing", p.display());
    }
}

fn case_block(name: &str, s: f64) -> String {
    format!(
        r#"
[[cases]]
name = "{name}"
n_per_boundary = 8
[cases.source]
kind = "mms"
family = "trig-vortex"
s = {s:?}
n_cloud = 300
[cases.split]
n_data = 60
n_collocation = 60
"#
    )
}

fn write_run(dir: &Path, extra_train: &str, cases: &[(&str, f64)], eval_cases: &[(&str, f64)]) -> PathBuf {
    let mut text = format!(
        r#"name = "tiny"
seed = 1

[network]
hidden = [6]
n_freq = 2

[train]
pretrain_steps = 4
main_steps = 4
log_every = 1
{extra_train}
[train.batch]
data = 16
collocation = 16
boundary = 8
"#
    );
    for (n, s) in cases {
        text.push_str(&case_block(n, *s));
    }
    for (n, s) in eval_cases {
        text.push_str(
            &case_block(n, *s)
                .replace("[[cases]]", "[[eval_cases]]")
                .replace("[cases.", "[eval_cases."),
        );
    }
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn help_documents_exit_codes_and_env() {
    let o = run(&["--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for needle in [
        "synth",
        "train",
        "eval",
        "sweep",
        "TURBOPINN_OUT",
        "Exit codes",
        "non-finite",
    ] {
        assert!(text.contains(needle), "help lacks {needle}");
    }
}

#[test]
fn synth_single_and_range() {
    let tmp = tempfile::tempdir().unwrap();
    let one = tmp.path().join("one");
    let o = run(&[
        "synth",
        "trig-vortex",
        "--s",
        "5600",
        "--n-cloud",
        "200",
        "--out",
        one.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(one.join("trig-vortex-s5600/cloud.csv").exists());
    assert!(one.join("trig-vortex-s5600/case.toml").exists());
    assert_artifacts_exist(&one);
    let csv = fs::read_to_string(one.join("trig-vortex-s5600/cloud.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 200 + 4 * 100);

    let six = tmp.path().join("six");
    let o = run(&[
        "synth",
        "trig-vortex",
        "--s",
        "2800..5600",
        "--count",
        "6",
        "--n-cloud",
        "50",
        "--out",
        six.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let dirs = fs::read_dir(&six)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().is_dir())
        .count();
    assert_eq!(dirs, 6);
    assert!(six.join("trig-vortex-s3360/case.toml").exists());
}

#[test]
fn synth_refuses_non_empty_out_without_force() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("keep.txt"), "x").unwrap();
    let out = tmp.path().to_str().unwrap();
    let o = run(&["synth", "poly-channel", "--s", "100", "--n-cloud", "20", "--out", out]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("--force"));
    let o = run(&[
        "synth",
        "poly-channel",
        "--s",
        "100",
        "--n-cloud",
        "20",
        "--out",
        out,
        "--force",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(tmp.path().join("keep.txt").exists());
}

#[test]
fn invalid_arguments_exit_2() {
    assert_eq!(code(&run(&["synth", "no-such-family", "--s", "1"])), 2);
    assert_eq!(code(&run(&["synth", "trig-vortex", "--s", "0.5"])), 2);
    assert_eq!(code(&run(&["train"])), 2);
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "name = 3\n").unwrap();
    assert_eq!(code(&run(&["train", "--config", bad.to_str().unwrap()])), 2);
    let run_file = write_run(tmp.path(), "", &[("a", 4200.0)], &[]);
    let o = run(&[
        "train",
        "--config",
        run_file.to_str().unwrap(),
        "--ablation",
        "sometimes",
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn missing_config_exits_3() {
    let o = run(&["train", "--config", "/nonexistent/run.toml"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn train_writes_listed_artifacts_and_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_run(tmp.path(), "", &[("a", 4200.0)], &[]);
    let out = tmp.path().join("out");
    let o = run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary = String::from_utf8_lossy(&o.stdout);
    assert_eq!(summary.lines().count(), 1);
    assert!(summary.starts_with("train tiny:"));
    assert_artifacts_exist(&out);
    let m = manifest(&out);
    assert_eq!(m["status"], "ok");
    assert_eq!(m["seed"], 1);
    let resolved = fs::read(out.join("config.toml")).unwrap();
    let hash: String = Sha256::digest(&resolved).iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(m["config_hash"].as_str().unwrap(), hash);
    let curve = fs::read_to_string(out.join("curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 1 + 8);
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_run(tmp.path(), "", &[("a", 4200.0)], &[]);
    let out = tmp.path().join("out");
    let o = run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "9",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(manifest(&out)["seed"], 9);
    let resolved = fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(resolved.contains("seed = 9"));
}

#[test]
fn single_worker_runs_are_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_run(tmp.path(), "", &[("a", 4200.0)], &[]);
    let mut curves = Vec::new();
    for name in ["r1", "r2"] {
        let out = tmp.path().join(name);
        let o = run(&[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--workers",
            "1",
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        curves.push(fs::read(out.join("curve.csv")).unwrap());
    }
    assert_eq!(curves[0], curves[1]);
}

#[test]
fn worker_count_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_run(tmp.path(), "shards = 3", &[("a", 4200.0)], &[]);
    let mut curves = Vec::new();
    for workers in ["1", "3"] {
        let out = tmp.path().join(format!("w{workers}"));
        let o = run(&[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--workers",
            workers,
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        curves.push(fs::read(out.join("curve.csv")).unwrap());
    }
    assert_eq!(curves[0], curves[1]);
}

#[test]
fn data_only_ablation_has_no_physics_terms() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_run(tmp.path(), "", &[("a", 4200.0)], &[]);
    let out = tmp.path().join("out");
    let o = run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--ablation",
        "data-only",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let curve = fs::read_to_string(out.join("curve.csv")).unwrap();
    let mut lines = curve.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        for name in ["lambda_mom", "l_bc", "l_mom", "l_eps"] {
            assert_eq!(f[col(name)].parse::<f64>().unwrap(), 0.0, "{name} in {line}");
        }
    }
}

#[test]
fn non_finite_loss_exits_4_and_keeps_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_run(tmp.path(), "lr0 = 1e12", &[("a", 4200.0)], &[]);
    let out = tmp.path().join("out");
    let o = run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert!(stderr(&o).contains("non-finite"));
    assert_artifacts_exist(&out);
    assert_eq!(manifest(&out)["status"], "non-finite");
    let ck = fs::read(out.join("model.ckpt")).unwrap();
    assert!(!ck.is_empty());
}

#[test]
fn eval_is_byte_identical_and_checks_re() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_run(tmp.path(), "", &[("a", 4200.0)], &[]);
    let out = tmp.path().join("train");
    assert_eq!(
        code(&run(&[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap()
        ])),
        0
    );
    let ck = out.join("model.ckpt");

    let synth = tmp.path().join("synth");
    let o = run(&[
        "synth",
        "trig-vortex",
        "--s",
        "4200",
        "--s",
        "5600",
        "--n-cloud",
        "300",
        "--out",
        synth.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let same = synth.join("trig-vortex-s4200/case.toml");
    let other = synth.join("trig-vortex-s5600/case.toml");

    let mut metrics = Vec::new();
    for name in ["e1", "e2"] {
        let dir = tmp.path().join(name);
        let o = run(&[
            "eval",
            "--checkpoint",
            ck.to_str().unwrap(),
            "--case",
            same.to_str().unwrap(),
            "--nx",
            "11",
            "--ny",
            "6",
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert_artifacts_exist(&dir);
        assert!(dir.join("grids/trig-vortex-s4200-speed.csv").exists());
        assert!(dir.join("grids/trig-vortex-s4200-log_error_u.csv").exists());
        metrics.push(fs::read(dir.join("metrics.json")).unwrap());
    }
    assert_eq!(metrics[0], metrics[1]);

    let dir = tmp.path().join("e3");
    let o = run(&[
        "eval",
        "--checkpoint",
        ck.to_str().unwrap(),
        "--case",
        other.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 5, "{}", stderr(&o));
}

#[test]
fn eval_checkpoint_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let synth = tmp.path().join("synth");
    assert_eq!(
        code(&run(&[
            "synth",
            "trig-vortex",
            "--s",
            "4200",
            "--n-cloud",
            "300",
            "--out",
            synth.to_str().unwrap()
        ])),
        0
    );
    let case = synth.join("trig-vortex-s4200/case.toml");
    let missing = tmp.path().join("none.ckpt");
    let o = run(&[
        "eval",
        "--checkpoint",
        missing.to_str().unwrap(),
        "--case",
        case.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3);
    let corrupt = tmp.path().join("bad.ckpt");
    fs::write(&corrupt, b"not a checkpoint").unwrap();
    let o = run(&[
        "eval",
        "--checkpoint",
        corrupt.to_str().unwrap(),
        "--case",
        case.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 5);
}

#[test]
fn sweep_labels_cases_and_uses_out_root_env() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_run(
        tmp.path(),
        "",
        &[("lo", 2800.0), ("hi", 5600.0)],
        &[("mid", 3140.0), ("beyond", 5700.0)],
    );
    let root = tmp.path().join("root");
    let o = bin()
        .args(["sweep", "--config", cfg.to_str().unwrap()])
        .env("TURBOPINN_OUT", &root)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = root.join("tiny");
    assert_artifacts_exist(&out);
    let table = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let roles: Vec<(String, String)> = table
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].to_string())
        })
        .collect();
    let expect = [
        ("train", "lo"),
        ("train", "hi"),
        ("interpolation", "mid"),
        ("extrapolation", "beyond"),
    ];
    assert_eq!(roles, expect.map(|(a, b)| (a.to_string(), b.to_string())));

    let single = write_run(tmp.path(), "", &[("a", 4200.0)], &[]);
    let o = run(&[
        "sweep",
        "--config",
        single.to_str().unwrap(),
        "--out",
        tmp.path().join("s").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn trains_from_a_csv_cloud() {
    let tmp = tempfile::tempdir().unwrap();
    let synth = tmp.path().join("synth");
    assert_eq!(
        code(&run(&[
            "synth",
            "poly-channel",
            "--s",
            "900",
            "--n-cloud",
            "200",
            "--n-per-boundary",
            "10",
            "--out",
            synth.to_str().unwrap()
        ])),
        0
    );
    let cfg = write_run(tmp.path(), "", &[], &[]);
    let mut text = fs::read_to_string(&cfg).unwrap();
    text.push_str(
        r#"
[[cases]]
name = "channel"
[cases.source]
kind = "csv"
data = "synth/poly-channel-s900/cloud.csv"
[cases.split]
n_data = 50
n_collocation = 50
"#,
    );
    fs::write(&cfg, text).unwrap();
    let out = tmp.path().join("out");
    let o = run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = manifest(&out);
    assert_eq!(m["cases"][0]["re"], 900.0);
    assert_eq!(m["cases"][0]["source"]["kind"], "csv");
}
