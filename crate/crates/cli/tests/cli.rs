use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
seed = 3

[scene]
kind = "single_pulse"
sigma = 0.06

[grid]
m = 17

[time]
n_steps = 9
duration = 0.25

[sensors]
count = 5

[model]
hidden = [16, 16]
omega0 = 5.0

[training]
n_iters = 20
lr = 1e-3

[anneal]
update_every = 5

[pinn]
pde_points = 30
bcs_points = 16
sp_points = 8

[eval]
frames = [0.0, 0.1, 0.2]
"#;

fn dpsf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpsf"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, format!("{TINY}{extra}")).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn assert_ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn oracle_train_eval_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let run = tmp.path().join("run");
    let out = run.to_str().unwrap();

    assert_ok(&dpsf(&["oracle", "--config", &cfg, "--out", out]));
    for f in ["config.resolved", "reference.wfd", "sensors.csv", "measurements.csv", "measurements_clean.csv"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    assert_ok(&dpsf(&["train", "--config", &cfg, "--out", out]));
    let loss = fs::read_to_string(run.join("loss.csv")).unwrap();
    assert!(loss.starts_with("iteration,loss_total,loss_data,loss_sp,loss_pde,loss_bcs,"));
    assert_eq!(loss.lines().count(), 21);

    let o = dpsf(&["eval", "--config", &cfg, "--out", out, "--images", "--frames", "0,0.125"]);
    assert_ok(&o);
    assert!(stdout(&o).contains("nmse = "));
    let frames: Vec<_> = fs::read_dir(run.join("frames")).unwrap().collect();
    assert_eq!(frames.len(), 6);
    assert!(run.join("reconstruction.wfd").is_file());
    let summary = fs::read_to_string(run.join("summary.txt")).unwrap();
    for key in ["config_hash", "nmse", "iterations", "wall_seconds", "model = dp"] {
        assert!(summary.contains(key), "{key} missing from {summary}");
    }

    // a reference equal to the reconstruction scores zero
    fs::copy(run.join("reconstruction.wfd"), run.join("reference.wfd")).unwrap();
    let o = dpsf(&["eval", "--config", &cfg, "--out", out]);
    assert_ok(&o);
    assert!(stdout(&o).contains("nmse = 0e0"), "{}", stdout(&o));
}

#[test]
fn pinn_run_fills_residual_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let out = tmp.path().join("pinn");
    let out = out.to_str().unwrap();
    assert_ok(&dpsf(&["oracle", "--config", &cfg, "--out", out]));
    let cfg_pinn = cfg.replace("run.toml", "pinn.toml");
    fs::write(&cfg_pinn, fs::read_to_string(&cfg).unwrap().replace("[model]\n", "[model]\nkind = \"pinn\"\n")).unwrap();
    assert_ok(&dpsf(&["train", "--config", &cfg_pinn, "--out", out]));
    let loss = fs::read_to_string(Path::new(out).join("loss.csv")).unwrap();
    let row: Vec<&str> = loss.lines().nth(1).unwrap().split(',').collect();
    assert!(!row[4].is_empty() && !row[5].is_empty());
    assert_eq!(row[8].parse::<f64>().unwrap(), 1.0);
    assert_ok(&dpsf(&["eval", "--config", &cfg_pinn, "--out", out]));
    // a 2-input checkpoint is rejected by a PINN evaluation
    assert_ok(&dpsf(&["train", "--config", &cfg, "--out", out]));
    let o = dpsf(&["eval", "--config", &cfg_pinn, "--out", out]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_ok(&dpsf(&["oracle", "--config", &cfg, "--out", a.to_str().unwrap()]));
    assert_ok(&dpsf(&["oracle", "--config", &cfg, "--out", b.to_str().unwrap()]));
    for f in ["reference.wfd", "sensors.csv", "measurements.csv", "config.resolved"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = tmp.path().join("c");
    assert_ok(&dpsf(&["oracle", "--config", &cfg, "--out", c.to_str().unwrap(), "--seed", "4"]));
    assert_ne!(fs::read(a.join("measurements.csv")).unwrap(), fs::read(c.join("measurements.csv")).unwrap());
}

#[test]
fn default_reference_resolution() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dpsf(&["oracle", "--out", tmp.path().to_str().unwrap()]);
    assert_ok(&o);
    let text = stdout(&o);
    assert!(text.contains("199x199 over 99 frames"), "{text}");
    assert!(text.contains("dr = 5.0505e-3") && text.contains("dt = 3.5000e-3"), "{text}");
}

#[test]
fn ring_scene_runs_through_the_solver() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "").replace("run.toml", "ring.toml");
    fs::write(
        &cfg,
        TINY.replace("kind = \"single_pulse\"", "kind = \"ring\"\nradius = 0.25"),
    )
    .unwrap();
    let out = tmp.path().join("ring");
    assert_ok(&dpsf(&["oracle", "--config", &cfg, "--out", out.to_str().unwrap()]));
    assert!(out.join("reference.wfd").is_file());
}

#[test]
fn user_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let empty = tmp.path().join("empty");
    let o = dpsf(&["train", "--config", &cfg, "--out", empty.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("measurements.csv"));

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[grid]\nnodes = 3\n").unwrap();
    assert_eq!(dpsf(&["oracle", "--config", bad.to_str().unwrap()]).status.code(), Some(2));

    let sweep = write_config(tmp.path(), "\n[sweep]\naxis = \"snr\"\nvalues = []\n");
    let o = dpsf(&["sweep", "--config", &sweep, "--out", tmp.path().join("s").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn diverging_training_exits_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let out = tmp.path().join("nan");
    assert_ok(&dpsf(&["oracle", "--config", &cfg, "--out", out.to_str().unwrap()]));
    // corrupt one observation so the data loss is not finite
    let meas = out.join("measurements.csv");
    let text = fs::read_to_string(&meas).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let parts: Vec<&str> = lines[1].split(',').collect();
    lines[1] = format!("{},{},inf", parts[0], parts[1]);
    fs::write(&meas, lines.join("\n") + "\n").unwrap();
    let o = dpsf(&["train", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn sweep_writes_one_row_per_value_and_model() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "\n[sweep]\naxis = \"snr\"\nvalues = [10.0, 30.0]\nmodels = [\"dp\", \"pinn\"]\n",
    );
    let out = tmp.path().join("sweep");
    let o = dpsf(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_ok(&o);
    for model in ["dp", "pinn"] {
        let csv = fs::read_to_string(out.join(format!("sweep_{model}.csv"))).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "snr_db,nmse,error");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("10,") && lines[2].starts_with("30,"));
    }
    let down = write_config(tmp.path(), "\n[sweep]\naxis = \"downsample\"\nvalues = [1.0, 2.0, 3.0]\n");
    let out = tmp.path().join("down");
    assert_ok(&dpsf(&["sweep", "--config", &down, "--out", out.to_str().unwrap()]));
    let csv = fs::read_to_string(out.join("sweep_dp.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    // 3 does not divide the 32 reference intervals, so that run fails and the rest go on
    assert!(lines[1].split(',').nth(1).is_some_and(|s| !s.is_empty()), "{csv}");
    assert!(lines[2].split(',').nth(1).is_some_and(|s| !s.is_empty()));
    assert!(lines[3].split(',').nth(2).is_some_and(|s| !s.is_empty()));
}
