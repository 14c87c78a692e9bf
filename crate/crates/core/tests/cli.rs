use std::path::Path;
use std::process::Command;

use lconv::cli::file_sha256;
use lconv::numerics::io;

fn lconv(args: &[&str]) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lconv"));
    c.args(args).env_remove("LCONV_OUT");
    c
}

fn code(c: &mut Command) -> i32 {
    c.output().unwrap().status.code().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL_FIXED: &str = "seed = 1
[fixed_angle]
width = 5
height = 5
theta = 0.3
n_train = 300
n_test = 60
seed = 1
[optimizer]
kind = \"adam\"
lr = 0.01
batch_size = 32
epochs = 2
";

#[test]
fn version_prints_the_package_version() {
    let out = lconv(&["version"]).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn config_errors_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write(tmp.path(), "bad.toml", "seed = 1\nunknown_key = 3\n");
    let out = tmp.path().join("o");
    assert_eq!(code(&mut lconv(&["train", "--config", &bad, "--out-dir", out.to_str().unwrap()])), 2);
    let so3 = write(tmp.path(), "so3.toml", "[theory]\ngroup = \"so3\"\nsizes = [32]\nmass = 1.0\neps = 1.0\ndecomposition_instances = 1\nring_size = 8\nchannels = 1\n");
    assert_eq!(code(&mut lconv(&["theory", "--config", &so3, "--out-dir", out.to_str().unwrap()])), 2);
    assert_eq!(code(&mut lconv(&["train", "--bogus-flag"])), 2);
}

#[test]
fn missing_files_exit_with_4() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let missing = tmp.path().join("nope.toml");
    assert_eq!(code(&mut lconv(&["gen-data", "--config", missing.to_str().unwrap(), "--out-dir", out.to_str().unwrap()])), 4);
    let cfg = write(tmp.path(), "c.toml", SMALL_FIXED);
    let empty = tmp.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let args = ["train", "--config", &cfg, "--out-dir", out.to_str().unwrap(), "--data", empty.to_str().unwrap()];
    assert_eq!(code(&mut lconv(&args)), 4);
}

#[test]
fn divergence_exits_with_3_and_writes_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", &SMALL_FIXED.replace("lr = 0.01", "lr = 1e6").replace("kind = \"adam\"", "kind = \"sgd\""));
    let out = tmp.path().join("o");
    assert_eq!(code(&mut lconv(&["train", "--config", &cfg, "--out-dir", out.to_str().unwrap()])), 3);
    let failure: serde_json::Value = io::read_json(out.join("failure.json")).unwrap();
    assert!(failure["epoch"].is_u64());
}

#[test]
fn out_dir_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let from_file = tmp.path().join("file");
    let from_env = tmp.path().join("env");
    let from_flag = tmp.path().join("flag");
    let cfg = write(tmp.path(), "c.toml", &format!("out_dir = {:?}\n", from_file.to_str().unwrap()));
    assert_eq!(code(&mut lconv(&["approx", "--config", &cfg])), 0);
    assert!(from_file.join("approx.csv").exists());
    assert_eq!(code(lconv(&["approx", "--config", &cfg]).env("LCONV_OUT", &from_env)), 0);
    assert!(from_env.join("approx.csv").exists());
    let flag = from_flag.to_str().unwrap();
    assert_eq!(code(lconv(&["approx", "--config", &cfg, "--out-dir", flag]).env("LCONV_OUT", &from_env)), 0);
    assert!(from_flag.join("config.toml").exists() && from_flag.join("version.json").exists());
}

#[test]
fn gen_data_train_resume_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", SMALL_FIXED);
    let data = tmp.path().join("data");
    assert_eq!(code(&mut lconv(&["gen-data", "--config", &cfg, "--out-dir", data.to_str().unwrap()])), 0);
    let manifest: serde_json::Value = io::read_json(data.join("manifest.json")).unwrap();
    assert_eq!(manifest["files"]["X_train.mat"], file_sha256(data.join("X_train.mat")).unwrap());

    let run = tmp.path().join("run");
    let args = ["train", "--config", &cfg, "--out-dir", run.to_str().unwrap(), "--data", data.to_str().unwrap()];
    assert_eq!(code(&mut lconv(&args)), 0);
    for f in ["report.json", "loss.csv", "timing.json", "generator.mat", "checkpoint/state.json"] {
        assert!(run.join(f).exists(), "{f}");
    }

    // two more epochs from the checkpoint match a four-epoch run
    let four = write(tmp.path(), "four.toml", &SMALL_FIXED.replace("epochs = 2", "epochs = 4"));
    let resumed = tmp.path().join("resumed");
    let ck = run.join("checkpoint");
    let args = ["train", "--config", &four, "--out-dir", resumed.to_str().unwrap(), "--resume", ck.to_str().unwrap()];
    assert_eq!(code(&mut lconv(&args)), 0);
    let straight = tmp.path().join("straight");
    assert_eq!(code(&mut lconv(&["train", "--config", &four, "--out-dir", straight.to_str().unwrap()])), 0);
    assert_eq!(
        file_sha256(resumed.join("report.json")).unwrap(),
        file_sha256(straight.join("report.json")).unwrap()
    );

    let ev = tmp.path().join("eval");
    let ck = straight.join("checkpoint");
    let args = ["eval", "--config", &four, "--out-dir", ev.to_str().unwrap(), "--checkpoint", ck.to_str().unwrap()];
    assert_eq!(code(&mut lconv(&args)), 0);
    let e: serde_json::Value = io::read_json(ev.join("eval.json")).unwrap();
    let r: serde_json::Value = io::read_json(straight.join("report.json")).unwrap();
    assert_eq!(e["epochs_completed"], 4);
    assert!((e["test_mse"].as_f64().unwrap() - r["final_test_mse"].as_f64().unwrap()).abs() < 1e-15);
}

#[test]
fn approx_and_theory_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.toml",
        "[approx]\nd = 20\nz = 2.0\nns = [8, 16]\nd_sweep = [16, 18]\n[theory]\ngroup = \"translations\"\nsizes = [32, 64]\nmass = 1.0\neps = 1.0\ndecomposition_instances = 2\nring_size = 8\nchannels = 2\n",
    );
    let out = tmp.path().join("o");
    let o = out.to_str().unwrap();
    assert_eq!(code(&mut lconv(&["approx", "--config", &cfg, "--out-dir", o])), 0);
    assert_eq!(code(&mut lconv(&["theory", "--config", &cfg, "--out-dir", o, "--threads", "2"])), 0);
    let csv = std::fs::read_to_string(out.join("approx.csv")).unwrap();
    assert!(csv.starts_with("n,eta,frobenius_error,correlation"));
    assert_eq!(csv.lines().count(), 3);
    assert!(out.join("approx_d16.csv").exists() && out.join("approx_d18.csv").exists());
    let h = std::fs::read_to_string(out.join("helmholtz.csv")).unwrap();
    assert!(h.starts_with("grid_size,el_residual,noether_divergence"));
    assert_eq!(std::fs::read_to_string(out.join("decomposition.csv")).unwrap().lines().count(), 3);
}

#[test]
fn angle_regression_data_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.toml",
        "task = \"angle_regression\"\n[angle_regression]\nwidth = 4\nheight = 4\ntheta_max = 1.0\nn_train = 32\nn_test = 8\nchannels = 2\nrecursions = 1\nhidden = 3\nseed = 2\n[optimizer]\nkind = \"adam\"\nlr = 0.001\nbatch_size = 8\nepochs = 1\n",
    );
    let data = tmp.path().join("data");
    assert_eq!(code(&mut lconv(&["gen-data", "--config", &cfg, "--out-dir", data.to_str().unwrap()])), 0);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let with_data = ["train", "--config", &cfg, "--out-dir", a.to_str().unwrap(), "--data", data.to_str().unwrap()];
    assert_eq!(code(&mut lconv(&with_data)), 0);
    assert_eq!(code(&mut lconv(&["train", "--config", &cfg, "--out-dir", b.to_str().unwrap()])), 0);
    assert_eq!(file_sha256(a.join("report.json")).unwrap(), file_sha256(b.join("report.json")).unwrap());
}
