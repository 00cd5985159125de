//! Flat key-value run configuration.
//!
//! The file format is one `key = value` pair per line; blank lines and lines
//! starting with `#` are ignored. Every key must be known and applicable to
//! the experiment, and no key may repeat; violations fail with the line
//! number. Resolved values (including defaults) are echoed into the run
//! manifest so a run can be reproduced bit-exactly from its output
//! directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use meanfield_control::controls::{RelaxedControl, StateBinning};
use meanfield_control::optimizer::{OptimizerConfig, SeedPolicy};
use meanfield_control::problem::{
    make_chattering_problem, make_lq_meanfield, LqParams, ProblemSpec,
};
use meanfield_control::regression::RegressionBasis;
use meanfield_control::sim::SimConfig;
use meanfield_control::textio::fmt_f64;
use meanfield_control::TimeGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Validate,
    Simulate,
    Cost,
    Adjoint,
    CheckSmp,
    Optimize,
    ChatterGap,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Validate => "validate",
            Experiment::Simulate => "simulate",
            Experiment::Cost => "cost",
            Experiment::Adjoint => "adjoint",
            Experiment::CheckSmp => "check-smp",
            Experiment::Optimize => "optimize",
            Experiment::ChatterGap => "chatter-gap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControlChoice {
    Uniform,
    Delta(usize),
    File,
}

/// Fully resolved run configuration.
pub struct RunConfig {
    pub experiment: Experiment,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub particles: usize,
    pub steps: usize,
    pub problem_name: String,
    pub spec: ProblemSpec,
    pub binning: StateBinning,
    pub control_choice: ControlChoice,
    pub control_path: Option<PathBuf>,
    pub basis: RegressionBasis,
    pub optimizer: OptimizerConfig,
    pub m_list: Vec<usize>,
    pub epsilon: f64,
    pub val_samples: usize,
    pub val_step: f64,
    pub val_tol: f64,
    /// Sorted `key = value` echo of every resolved setting.
    pub manifest: String,
}

impl RunConfig {
    pub fn grid(&self) -> TimeGrid {
        TimeGrid::new(self.spec.horizon, self.steps).expect("validated grid")
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig::new(self.particles, self.grid(), self.seed).expect("validated sim config")
    }

    /// Build the configured control on the run grid.
    pub fn control(&self) -> Result<RelaxedControl> {
        match self.control_choice {
            ControlChoice::Uniform => Ok(RelaxedControl::uniform(
                self.grid(),
                self.binning,
                self.spec.n_actions(),
            )?),
            ControlChoice::Delta(i) => {
                if i >= self.spec.n_actions() {
                    bail!("control delta index {i} out of range");
                }
                let mut row = vec![0.0; self.spec.n_actions()];
                row[i] = 1.0;
                Ok(RelaxedControl::constant(self.grid(), self.binning, &row)?)
            }
            ControlChoice::File => {
                let path = self.control_path.as_ref().expect("path checked at parse");
                let file = std::fs::File::open(path)
                    .with_context(|| format!("opening control file {}", path.display()))?;
                let control = RelaxedControl::read_from(std::io::BufReader::new(file))?;
                if control.n_actions() != self.spec.n_actions() {
                    bail!(
                        "control file has {} actions, the problem has {}",
                        control.n_actions(),
                        self.spec.n_actions()
                    );
                }
                Ok(control)
            }
        }
    }
}

struct RawConfig {
    entries: BTreeMap<String, (usize, String)>,
}

impl RawConfig {
    fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                bail!("config line {line_no}: expected `key = value`, got {trimmed:?}");
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                bail!("config line {line_no}: empty key");
            }
            if let Some((first, _)) = entries.insert(key.clone(), (line_no, value)) {
                bail!("config line {line_no}: key `{key}` already set on line {first}");
            }
        }
        Ok(Self { entries })
    }

    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.remove(key)
    }

    fn take_parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, raw)) => raw.parse::<T>().map(Some).map_err(|_| {
                anyhow::anyhow!("config line {line}: cannot parse `{key} = {raw}`")
            }),
        }
    }

    fn finish(self) -> Result<()> {
        if let Some((key, (line, _))) = self.entries.into_iter().next() {
            bail!("config line {line}: unknown key `{key}`");
        }
        Ok(())
    }
}

fn echo(manifest: &mut String, key: &str, value: impl std::fmt::Display) {
    let _ = writeln!(manifest, "{key} = {value}");
}

/// Parse and resolve a config file for the given experiment.
pub fn load(experiment: Experiment, path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut raw = RawConfig::parse(&text)?;

    if let Some((line, value)) = raw.take("experiment") {
        if value != experiment.name() {
            bail!(
                "config line {line}: experiment `{value}` does not match subcommand `{}`",
                experiment.name()
            );
        }
    }

    let out_dir: PathBuf = raw
        .take("out_dir")
        .map(|(_, v)| PathBuf::from(v))
        .unwrap_or_else(|| PathBuf::from("out"));
    let seed: u64 = raw.take_parsed("seed")?.unwrap_or(1);
    let particles: usize = raw.take_parsed("particles")?.unwrap_or(1000);
    let steps: usize = raw.take_parsed("steps")?.unwrap_or(100);
    if particles < 2 {
        bail!("particles must be >= 2");
    }
    if steps == 0 {
        bail!("steps must be >= 1");
    }

    let problem_name = raw
        .take("problem")
        .map(|(_, v)| v)
        .unwrap_or_else(|| "lq".to_string());

    let mut manifest = String::new();
    echo(&mut manifest, "experiment", experiment.name());
    echo(&mut manifest, "problem", &problem_name);
    echo(&mut manifest, "seed", seed);
    echo(&mut manifest, "particles", particles);
    echo(&mut manifest, "steps", steps);

    let (spec, default_lo, default_hi) = match problem_name.as_str() {
        "lq" => {
            let horizon: f64 = raw.take_parsed("horizon")?.unwrap_or(1.0);
            let x0: f64 = raw.take_parsed("x0")?.unwrap_or(1.0);
            let n_actions: usize = raw.take_parsed("n_actions")?.unwrap_or(41);
            let d = LqParams::default();
            let params = LqParams {
                a1: raw.take_parsed("lq_a1")?.unwrap_or(d.a1),
                a2: raw.take_parsed("lq_a2")?.unwrap_or(d.a2),
                b0: raw.take_parsed("lq_b0")?.unwrap_or(d.b0),
                s0: raw.take_parsed("lq_s0")?.unwrap_or(d.s0),
                qx: raw.take_parsed("lq_qx")?.unwrap_or(d.qx),
                qy: raw.take_parsed("lq_qy")?.unwrap_or(d.qy),
                r: raw.take_parsed("lq_r")?.unwrap_or(d.r),
                gx: raw.take_parsed("lq_gx")?.unwrap_or(d.gx),
                gy: raw.take_parsed("lq_gy")?.unwrap_or(d.gy),
                u_max: raw.take_parsed("lq_umax")?.unwrap_or(d.u_max),
            };
            echo(&mut manifest, "horizon", fmt_f64(horizon));
            echo(&mut manifest, "x0", fmt_f64(x0));
            echo(&mut manifest, "n_actions", n_actions);
            for (k, v) in [
                ("lq_a1", params.a1),
                ("lq_a2", params.a2),
                ("lq_b0", params.b0),
                ("lq_s0", params.s0),
                ("lq_qx", params.qx),
                ("lq_qy", params.qy),
                ("lq_r", params.r),
                ("lq_gx", params.gx),
                ("lq_gy", params.gy),
                ("lq_umax", params.u_max),
            ] {
                echo(&mut manifest, k, fmt_f64(v));
            }
            let spec = make_lq_meanfield(&params, n_actions, horizon, x0)?;
            (spec, x0 - 3.0, x0 + 3.0)
        }
        "chattering" => {
            let sigma0: f64 = raw.take_parsed("sigma0")?.unwrap_or(0.0);
            let kappa: f64 = raw.take_parsed("kappa")?.unwrap_or(0.5);
            echo(&mut manifest, "sigma0", fmt_f64(sigma0));
            echo(&mut manifest, "kappa", fmt_f64(kappa));
            (make_chattering_problem(sigma0, kappa)?, -1.0, 1.0)
        }
        other => bail!("unknown problem `{other}` (expected `lq` or `chattering`)"),
    };

    let state_lo: f64 = raw.take_parsed("state_lo")?.unwrap_or(default_lo);
    let state_hi: f64 = raw.take_parsed("state_hi")?.unwrap_or(default_hi);
    let bins: usize = raw.take_parsed("bins")?.unwrap_or(64);
    let binning = StateBinning::new(state_lo, state_hi, bins)?;
    echo(&mut manifest, "state_lo", fmt_f64(state_lo));
    echo(&mut manifest, "state_hi", fmt_f64(state_hi));
    echo(&mut manifest, "bins", bins);

    let (control_choice, control_path, control_echo) = match raw.take("control") {
        None => (ControlChoice::Uniform, None, "uniform".to_string()),
        Some((line, v)) => {
            if v == "uniform" {
                (ControlChoice::Uniform, None, v)
            } else if let Some(rest) = v.strip_prefix("delta:") {
                let i: usize = rest.parse().map_err(|_| {
                    anyhow::anyhow!("config line {line}: bad action index in `control = {v}`")
                })?;
                (ControlChoice::Delta(i), None, v)
            } else if let Some(rest) = v.strip_prefix("file:") {
                (ControlChoice::File, Some(PathBuf::from(rest)), v)
            } else {
                bail!(
                    "config line {line}: control must be `uniform`, `delta:<index>` or `file:<path>`"
                );
            }
        }
    };
    echo(&mut manifest, "control", &control_echo);

    let basis = RegressionBasis {
        degree: raw.take_parsed("basis_degree")?.unwrap_or(2),
        ridge_scale: raw.take_parsed("ridge_scale")?.unwrap_or(1e-8),
        cond_threshold: raw.take_parsed("cond_threshold")?.unwrap_or(1e12),
    };
    basis.validate()?;
    echo(&mut manifest, "basis_degree", basis.degree);
    echo(&mut manifest, "ridge_scale", fmt_f64(basis.ridge_scale));
    echo(&mut manifest, "cond_threshold", fmt_f64(basis.cond_threshold));

    let seed_policy = match raw.take("seed_policy") {
        None => SeedPolicy::Fixed,
        Some((line, v)) => match v.as_str() {
            "fixed" => SeedPolicy::Fixed,
            "refresh" => SeedPolicy::RefreshPerIteration,
            _ => bail!("config line {line}: seed_policy must be `fixed` or `refresh`"),
        },
    };
    let optimizer = OptimizerConfig {
        max_iters: raw.take_parsed("max_iters")?.unwrap_or(20),
        damping: raw.take_parsed("damping")?.unwrap_or(0.5),
        tolerance: raw.take_parsed("tolerance")?.unwrap_or(1e-4),
        basis,
        seed_policy,
        stall_patience: raw.take_parsed("stall_patience")?.unwrap_or(20),
    };
    optimizer.validate()?;
    echo(&mut manifest, "max_iters", optimizer.max_iters);
    echo(&mut manifest, "damping", fmt_f64(optimizer.damping));
    echo(&mut manifest, "tolerance", fmt_f64(optimizer.tolerance));
    echo(
        &mut manifest,
        "seed_policy",
        match seed_policy {
            SeedPolicy::Fixed => "fixed",
            SeedPolicy::RefreshPerIteration => "refresh",
        },
    );
    echo(&mut manifest, "stall_patience", optimizer.stall_patience);

    let m_list: Vec<usize> = match raw.take("m_list") {
        None => vec![8, 16, 32, 64],
        Some((line, v)) => {
            let parsed: Result<Vec<usize>, _> =
                v.split(',').map(|s| s.trim().parse::<usize>()).collect();
            parsed.map_err(|_| anyhow::anyhow!("config line {line}: bad m_list `{v}`"))?
        }
    };
    if m_list.is_empty() || m_list.windows(2).any(|w| w[0] >= w[1]) {
        bail!("m_list must be nonempty and strictly increasing");
    }
    echo(
        &mut manifest,
        "m_list",
        m_list
            .iter()
            .map(|m| m.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );

    let epsilon: f64 = raw.take_parsed("epsilon")?.unwrap_or(0.0);
    if epsilon < 0.0 {
        bail!("epsilon must be nonnegative");
    }
    echo(&mut manifest, "epsilon", fmt_f64(epsilon));

    let val_samples: usize = raw.take_parsed("val_samples")?.unwrap_or(100);
    let val_step: f64 = raw.take_parsed("val_step")?.unwrap_or(1e-4);
    let val_tol: f64 = raw.take_parsed("val_tol")?.unwrap_or(1e-5);
    echo(&mut manifest, "val_samples", val_samples);
    echo(&mut manifest, "val_step", fmt_f64(val_step));
    echo(&mut manifest, "val_tol", fmt_f64(val_tol));

    raw.finish()?;

    Ok(RunConfig {
        experiment,
        out_dir,
        seed,
        particles,
        steps,
        problem_name,
        spec,
        binning,
        control_choice,
        control_path,
        basis,
        optimizer,
        m_list,
        epsilon,
        val_samples,
        val_step,
        val_tol,
        manifest,
    })
}
