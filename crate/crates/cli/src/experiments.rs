//! Experiment implementations. Each writes its CSV artifacts plus
//! `manifest.txt` and `summary.txt` into the output directory and reports
//! whether its checks passed. Outputs contain no timestamps and all floats
//! carry 17 significant digits, so identical configs reproduce identical
//! bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use meanfield_control::bsde::{export_adjoints_csv, solve_first_order, solve_second_order};
use meanfield_control::cost::{estimate_cost, value_gap_experiment};
use meanfield_control::optimizer::{minimizing_sequence_report, optimize, StopReason};
use meanfield_control::problem::{validate_problem, SamplingBox};
use meanfield_control::sim::{simulate_relaxed, ControlRef};
use meanfield_control::smp::{near_optimality_check, smp_residual};
use meanfield_control::textio::fmt_f64;

use crate::config::{Experiment, RunConfig};

pub struct Outcome {
    pub passed: bool,
    pub summary: String,
}

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn run(cfg: &RunConfig) -> Result<Outcome> {
    fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let mut manifest = String::new();
    let _ = writeln!(manifest, "# meanfield-control run manifest v1");
    let _ = writeln!(manifest, "tool = mfc {}", env!("CARGO_PKG_VERSION"));
    manifest.push_str(&cfg.manifest);
    write_file(&cfg.out_dir, "manifest.txt", manifest.as_bytes())?;

    let outcome = match cfg.experiment {
        Experiment::Validate => run_validate(cfg)?,
        Experiment::Simulate => run_simulate(cfg)?,
        Experiment::Cost => run_cost(cfg)?,
        Experiment::Adjoint => run_adjoint(cfg)?,
        Experiment::CheckSmp => run_check_smp(cfg)?,
        Experiment::Optimize => run_optimize(cfg)?,
        Experiment::ChatterGap => run_chatter_gap(cfg)?,
    };

    let mut summary = String::new();
    let _ = writeln!(summary, "experiment: {}", cfg.experiment.name());
    let _ = writeln!(summary, "problem: {}", cfg.problem_name);
    summary.push_str(&outcome.summary);
    let _ = writeln!(
        summary,
        "result: {}",
        if outcome.passed { "PASS" } else { "FAIL" }
    );
    write_file(&cfg.out_dir, "summary.txt", summary.as_bytes())?;
    Ok(outcome)
}

fn run_validate(cfg: &RunConfig) -> Result<Outcome> {
    let report = validate_problem(
        &cfg.spec,
        &SamplingBox::around(&cfg.spec),
        cfg.val_samples,
        cfg.val_step,
        cfg.val_tol,
    )?;
    let mut csv = String::from("derivative,worst_rel_error,ok\n");
    for c in &report.checks {
        let _ = writeln!(csv, "{},{},{}", c.name, fmt_f64(c.worst_rel_error), c.ok);
    }
    write_file(&cfg.out_dir, "validation.csv", csv.as_bytes())?;
    let mut summary = String::new();
    for c in &report.checks {
        let _ = writeln!(
            summary,
            "{}: worst relative error {} ({})",
            c.name,
            fmt_f64(c.worst_rel_error),
            if c.ok { "ok" } else { "FAIL" }
        );
    }
    Ok(Outcome {
        passed: report.all_ok(),
        summary,
    })
}

fn run_simulate(cfg: &RunConfig) -> Result<Outcome> {
    let control = cfg.control()?;
    let paths = simulate_relaxed(&cfg.spec, &control, &cfg.sim_config())?;
    let mut csv = Vec::new();
    paths.export_csv(&mut csv, &cfg.problem_name)?;
    write_file(&cfg.out_dir, "paths.csv", &csv)?;
    let mut summary = String::new();
    let _ = writeln!(summary, "final mean: {}", fmt_f64(paths.mean(cfg.steps)));
    let _ = writeln!(
        summary,
        "fourth moment of the running sup: {}",
        fmt_f64(paths.fourth_moment_sup())
    );
    Ok(Outcome {
        passed: true,
        summary,
    })
}

fn run_cost(cfg: &RunConfig) -> Result<Outcome> {
    let control = cfg.control()?;
    let paths = simulate_relaxed(&cfg.spec, &control, &cfg.sim_config())?;
    let est = estimate_cost(&cfg.spec, &paths, ControlRef::Relaxed(&control))?;
    let csv = format!(
        "value,stderr,particles,steps\n{},{},{},{}\n",
        fmt_f64(est.value),
        fmt_f64(est.stderr),
        est.particles,
        est.steps
    );
    write_file(&cfg.out_dir, "cost.csv", csv.as_bytes())?;
    Ok(Outcome {
        passed: true,
        summary: format!(
            "J = {} (stderr {})\n",
            fmt_f64(est.value),
            fmt_f64(est.stderr)
        ),
    })
}

fn solve_adjoints(
    cfg: &RunConfig,
) -> Result<(
    meanfield_control::PathBundle,
    meanfield_control::RelaxedControl,
    meanfield_control::bsde::AdjointFirst,
    meanfield_control::bsde::AdjointSecond,
)> {
    let control = cfg.control()?;
    let paths = simulate_relaxed(&cfg.spec, &control, &cfg.sim_config())?;
    let first = solve_first_order(&cfg.spec, &paths, &control, &cfg.basis)?;
    let second = solve_second_order(&cfg.spec, &paths, &control, &first, &cfg.basis)?;
    Ok((paths, control, first, second))
}

fn run_adjoint(cfg: &RunConfig) -> Result<Outcome> {
    let (paths, _control, first, second) = solve_adjoints(cfg)?;
    let mut csv = Vec::new();
    export_adjoints_csv(&mut csv, &paths, &first, &second)?;
    write_file(&cfg.out_dir, "adjoints.csv", &csv)?;
    let mut summary = String::new();
    let _ = writeln!(
        summary,
        "first order: sup |p| = {}, int q^2 dt = {}, residual qv = {}, max cond = {}",
        fmt_f64(first.diagnostics.sup_value),
        fmt_f64(first.diagnostics.q_sq_integral),
        fmt_f64(first.residual_qv),
        fmt_f64(first.diagnostics.max_cond)
    );
    let _ = writeln!(
        summary,
        "second order: sup |P| = {}, int Q^2 dt = {}, residual qv = {}, max cond = {}",
        fmt_f64(second.diagnostics.sup_value),
        fmt_f64(second.diagnostics.q_sq_integral),
        fmt_f64(second.residual_qv),
        fmt_f64(second.diagnostics.max_cond)
    );
    Ok(Outcome {
        passed: true,
        summary,
    })
}

fn run_check_smp(cfg: &RunConfig) -> Result<Outcome> {
    let (paths, control, first, second) = solve_adjoints(cfg)?;
    let report = smp_residual(&cfg.spec, &paths, &control, &first, &second)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    write_file(&cfg.out_dir, "smp.csv", &csv)?;
    let check = near_optimality_check(&report, cfg.epsilon)?;
    let mut summary = String::new();
    let _ = writeln!(summary, "{}", report.summary());
    let _ = writeln!(
        summary,
        "pointwise residual = {} (stderr {})",
        fmt_f64(report.pointwise_residual),
        fmt_f64(report.pointwise_stderr)
    );
    let _ = writeln!(
        summary,
        "near-optimality: residual {} vs bound {} + 3 x {} (epsilon {}) -> {}",
        fmt_f64(check.residual),
        fmt_f64(check.bound),
        fmt_f64(check.stderr),
        fmt_f64(check.epsilon),
        if check.passed { "pass" } else { "fail" }
    );
    Ok(Outcome {
        passed: check.passed,
        summary,
    })
}

fn run_optimize(cfg: &RunConfig) -> Result<Outcome> {
    let init = cfg.control()?;
    let (best, trace) = optimize(&cfg.spec, &init, &cfg.optimizer, &cfg.sim_config())?;
    let mut csv = Vec::new();
    trace.write_csv(&mut csv)?;
    write_file(&cfg.out_dir, "trace.csv", &csv)?;
    let mut ctl = Vec::new();
    best.write_to(&mut ctl)?;
    write_file(&cfg.out_dir, "control.txt", &ctl)?;

    let seq = minimizing_sequence_report(&trace, cfg.spec.horizon)?;
    let mut seq_csv = String::from("iter,J,stderr,best_so_far,residual,near_optimal\n");
    for r in &seq.rows {
        let _ = writeln!(
            seq_csv,
            "{},{},{},{},{},{}",
            r.iter,
            fmt_f64(r.cost),
            fmt_f64(r.stderr),
            fmt_f64(r.best_so_far),
            fmt_f64(r.residual),
            r.near_optimal
        );
    }
    write_file(&cfg.out_dir, "sequence.csv", seq_csv.as_bytes())?;

    let last = trace.iterations.last().expect("at least one iteration");
    let best_row = &trace.iterations[trace.best_iter.min(trace.iterations.len() - 1)];
    let mut summary = String::new();
    let _ = writeln!(
        summary,
        "iterations: {} (stop: {:?})",
        trace.iterations.len(),
        trace.stop
    );
    if let Some(f) = &trace.failure {
        let _ = writeln!(summary, "failure: {f}");
    }
    let _ = writeln!(
        summary,
        "best J = {} (stderr {}) at iteration {}",
        fmt_f64(best_row.cost.value),
        fmt_f64(best_row.cost.stderr),
        trace.best_iter
    );
    let _ = writeln!(
        summary,
        "final residual = {} (stderr {})",
        fmt_f64(last.residual),
        fmt_f64(last.residual_stderr)
    );
    Ok(Outcome {
        passed: trace.stop != StopReason::AdjointFailure,
        summary,
    })
}

fn run_chatter_gap(cfg: &RunConfig) -> Result<Outcome> {
    let control = cfg.control()?;
    let table = value_gap_experiment(&cfg.spec, &control, &cfg.m_list, &cfg.sim_config())?;
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    write_file(&cfg.out_dir, "gap.csv", &csv)?;
    let mut summary = String::new();
    for row in &table.rows {
        let _ = writeln!(
            summary,
            "m = {}: J_chatter = {} ({}), J_relaxed = {} ({}), gap = {} (paired stderr {})",
            row.m,
            fmt_f64(row.chatter.value),
            fmt_f64(row.chatter.stderr),
            fmt_f64(row.relaxed.value),
            fmt_f64(row.relaxed.stderr),
            fmt_f64(row.gap),
            fmt_f64(row.paired_stderr)
        );
    }
    Ok(Outcome {
        passed: true,
        summary,
    })
}
