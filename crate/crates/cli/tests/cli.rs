//! CLI behavior: config schema enforcement, exit codes, artifact layout,
//! manifest reproducibility, and the control-file round trip.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mfc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfc"))
        .args(args)
        .output()
        .expect("running mfc")
}

fn write_cfg(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn unknown_keys_are_rejected_with_line_numbers() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "bad.cfg",
        "problem = lq\nparticles = 100\nnot_a_key = 3\n",
    );
    let out = mfc(&["validate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("not_a_key"), "stderr: {stderr}");
    assert!(stderr.contains("line 3"), "stderr: {stderr}");
}

#[test]
fn duplicate_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "dup.cfg", "seed = 1\nseed = 2\n");
    let out = mfc(&["validate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("already set"));
}

#[test]
fn experiment_key_must_match_subcommand() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "mismatch.cfg", "experiment = optimize\n");
    let out = mfc(&["validate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not match"));
}

#[test]
fn malformed_lines_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "noeq.cfg", "problem lq\n");
    let out = mfc(&["validate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn frozen_dynamics_dump_constant_paths() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let cfg = write_cfg(
        tmp.path(),
        "frozen.cfg",
        &format!(
            "problem = lq\nlq_a1 = 0\nlq_a2 = 0\nlq_b0 = 0\nlq_s0 = 0\nx0 = 0.25\n\
             n_actions = 3\nparticles = 4\nsteps = 5\nseed = 2\nout_dir = {}\n",
            out_dir.display()
        ),
    );
    let out = mfc(&["simulate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(out_dir.join("paths.csv")).unwrap();
    for line in csv.lines().skip(3) {
        let state = line.split(',').nth(2).unwrap();
        assert_eq!(state.parse::<f64>().unwrap(), 0.25, "line {line}");
    }
    assert!(out_dir.join("manifest.txt").exists());
    assert!(out_dir.join("summary.txt").exists());
}

#[test]
fn manifests_are_reproducible_and_echo_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let mut manifests = Vec::new();
    for run in 0..2 {
        let out_dir = tmp.path().join(format!("out{run}"));
        let cfg = write_cfg(
            tmp.path(),
            &format!("m{run}.cfg"),
            &format!(
                "problem = chattering\nparticles = 8\nsteps = 4\nseed = 5\nbins = 1\nout_dir = {}\n",
                out_dir.display()
            ),
        );
        let out = mfc(&["cost", "--config", &cfg]);
        assert_eq!(out.status.code(), Some(0));
        manifests.push(fs::read_to_string(out_dir.join("manifest.txt")).unwrap());
    }
    assert_eq!(manifests[0], manifests[1]);
    // defaults are echoed so the run is reproducible from the manifest alone
    assert!(manifests[0].contains("damping = "));
    assert!(manifests[0].contains("sigma0 = "));
    assert!(manifests[0].contains("seed = 5"));
}

#[test]
fn optimizer_control_file_round_trips_through_cost() {
    let tmp = tempfile::tempdir().unwrap();
    let opt_dir = tmp.path().join("opt");
    let cfg = write_cfg(
        tmp.path(),
        "opt.cfg",
        &format!(
            "problem = chattering\nsigma0 = 0\nkappa = 0.5\nparticles = 8\nsteps = 10\n\
             seed = 4\nbins = 1\ncontrol = delta:1\nmax_iters = 4\ndamping = 0.5\n\
             tolerance = 1e-9\nout_dir = {}\n",
            opt_dir.display()
        ),
    );
    let out = mfc(&["optimize", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(opt_dir.join("trace.csv").exists());
    assert!(opt_dir.join("sequence.csv").exists());

    // feed the serialized control back through the cost experiment
    let cost_dir = tmp.path().join("cost");
    let cfg2 = write_cfg(
        tmp.path(),
        "cost.cfg",
        &format!(
            "problem = chattering\nsigma0 = 0\nkappa = 0.5\nparticles = 8\nsteps = 10\n\
             seed = 4\nbins = 1\ncontrol = file:{}\nout_dir = {}\n",
            opt_dir.join("control.txt").display(),
            cost_dir.display()
        ),
    );
    let out2 = mfc(&["cost", "--config", &cfg2]);
    assert_eq!(out2.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out2.stderr));
    let cost_csv = fs::read_to_string(cost_dir.join("cost.csv")).unwrap();
    let value: f64 = cost_csv.lines().nth(1).unwrap().split(',').next().unwrap().parse().unwrap();
    assert!(value.is_finite());
}

#[test]
fn check_smp_exit_code_tracks_the_inequality() {
    let tmp = tempfile::tempdir().unwrap();
    // uniform mixture on the two-action problem is stationary: residual ~ 0
    // (sigma0 = 0, all particles at the zero path), so epsilon = 0 passes
    let good_dir = tmp.path().join("good");
    let good = write_cfg(
        tmp.path(),
        "good.cfg",
        &format!(
            "problem = chattering\nsigma0 = 0\nkappa = 0.5\nparticles = 8\nsteps = 20\n\
             seed = 9\nbins = 1\ncontrol = uniform\nepsilon = 0\nout_dir = {}\n",
            good_dir.display()
        ),
    );
    let out = mfc(&["check-smp", "--config", &good]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(good_dir.join("smp.csv").exists());

    // the all +1 control has a large residual; with a tiny claimed epsilon
    // the check must fail and the exit code must say so
    let bad_dir = tmp.path().join("bad");
    let bad = write_cfg(
        tmp.path(),
        "bad.cfg",
        &format!(
            "problem = chattering\nsigma0 = 0\nkappa = 0.5\nparticles = 8\nsteps = 20\n\
             seed = 9\nbins = 1\ncontrol = delta:1\nepsilon = 1e-9\nout_dir = {}\n",
            bad_dir.display()
        ),
    );
    let out = mfc(&["check-smp", "--config", &bad]);
    assert_eq!(out.status.code(), Some(1));
    let summary = fs::read_to_string(bad_dir.join("summary.txt")).unwrap();
    assert!(summary.contains("result: FAIL"));
}

#[test]
fn missing_config_file_is_a_config_error() {
    let out = mfc(&["simulate", "--config", "/nonexistent/path.cfg"]);
    assert_eq!(out.status.code(), Some(2));
}
