use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(config: &str, dir: &Path, out: &Path) -> Output {
    let path = dir.join("run.cfg");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_paramlearn"))
        .arg(&path)
        .arg("--out-dir")
        .arg(out)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn policy_writes_curves_density_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run("case = diffusion\ncommand = policy\nbeta_values = 0.3\n", dir.path(), &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let curves = fs::read_to_string(out.join("policy_curves.csv")).unwrap();
    assert_eq!(curves.lines().next(), Some("t,alpha1,alpha2,mean_slope,variance"));
    assert_eq!(curves.lines().count(), 102);
    let density = fs::read_to_string(out.join("gibbs_density.csv")).unwrap();
    assert_eq!(density.lines().count(), 2002);
    let manifest = fs::read_to_string(out.join("run_manifest.txt")).unwrap();
    for needle in ["seed = 42", "lambda = 0.1", "n_steps = 100", "rho_grid_points = 2001"] {
        assert!(manifest.contains(needle), "{needle} missing from manifest");
    }
}

#[test]
fn general_policy_writes_both_steps() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run("case = general\ncommand = policy\nalpha_values = 0.2\nbeta_values = 0.4\n", dir.path(), &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["policy_curves.csv", "policy_curves_step2.csv", "gibbs_density.csv", "gibbs_density_step2.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn two_piece_curve_shows_in_mean_slope() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = "case = drift\ncommand = policy\nbeta_knots = 0, 0.5\nbeta_values = 0.2, 0.5\nn_steps = 10\n";
    let o = run(cfg, dir.path(), &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("policy_curves.csv")).unwrap();
    let slopes: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(3).unwrap().parse().unwrap()).collect();
    assert_eq!(slopes[..5], [0.2; 5]);
    assert_eq!(slopes[5..], [0.5; 6]);
}

#[test]
fn simulate_and_learn_write_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let o = run("case = drift\ncommand = simulate\nbeta_values = 0.3\nn_paths = 3\nn_steps = 4\n", dir.path(), &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let paths = fs::read_to_string(out.join("paths.csv")).unwrap();
    assert_eq!(paths.lines().next(), Some("path,step,time,state,control"));
    assert_eq!(paths.lines().count(), 1 + 3 * 5);

    let out = dir.path().join("learn");
    let o = run("case = diffusion\ncommand = learn\nbeta_values = 0.3\nepisodes = 200\n", dir.path(), &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let est = fs::read_to_string(out.join("estimates.csv")).unwrap();
    assert_eq!(est.lines().next(), Some("knot_time,estimate,std_error,n_samples,true_value"));
}

#[test]
fn negative_lambda_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run("case = diffusion\ncommand = policy\nbeta_values = 0.3\nlambda = -1\n", dir.path(), &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("lambda"));
    assert!(!out.exists());
}

#[test]
fn custom_case_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("case = custom\ncommand = simulate\n", dir.path(), &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("custom"));
}

#[test]
fn unwritable_out_dir_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "not a directory").unwrap();
    let o = run("case = diffusion\ncommand = policy\nbeta_values = 0.3\n", dir.path(), &blocker.join("out"));
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn missing_config_file_exits_with_usage_code() {
    let o = Command::new(env!("CARGO_BIN_EXE_paramlearn")).arg("/nonexistent/run.cfg").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}
