//! Monte Carlo cost functionals.
//!
//! Per particle the cost is `dt * sum_k hbar(t_k, X_k, m_k) + g(X_K, m_K)`
//! with `hbar` the weight-average of the running cost over the action grid
//! (one-hot for a strict control). The running sum is multiplied by `dt`
//! once at the end, so a constant integrand integrates exactly. The same
//! accumulation order is used whether costs come from a stored bundle or a
//! streaming run, so the two agree bit-for-bit.

use std::io::Write;

use crate::controls::{ChatteringSchedule, RelaxedControl};
use crate::error::{Error, Result};
use crate::sim::{run_kernel, ControlRef, PathBundle, SimConfig};
use crate::stats::mean_and_stderr;
use crate::textio::fmt_f64;

/// A cost value with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostEstimate {
    pub value: f64,
    pub stderr: f64,
    pub particles: usize,
    pub steps: usize,
}

fn estimate_from(costs: &[f64], steps: usize) -> CostEstimate {
    let (value, stderr) = mean_and_stderr(costs);
    CostEstimate {
        value,
        stderr,
        particles: costs.len(),
        steps,
    }
}

/// Per-particle costs recomputed along a stored bundle.
pub fn per_particle_costs(
    spec: &crate::problem::ProblemSpec,
    paths: &PathBundle,
    control: ControlRef<'_>,
) -> Result<Vec<f64>> {
    if control.stamp() != paths.control_stamp() {
        return Err(Error::ControlMismatch(format!(
            "paths were simulated under {}",
            paths.control_desc()
        )));
    }
    let grid = paths.grid();
    let dt = grid.dt();
    let n = paths.particles();
    let k_steps = grid.steps();
    let c = &spec.coeffs;

    enum Bound<'a> {
        Strict(crate::controls::BoundStrict<'a>),
        Relaxed(crate::controls::BoundRelaxed<'a>),
    }
    let bound = match control {
        ControlRef::Strict(u) => Bound::Strict(u.bind(&grid)?),
        ControlRef::Relaxed(mu) => Bound::Relaxed(mu.bind(&grid)?),
    };
    let period = match &bound {
        Bound::Strict(b) => b.anchor_period(),
        Bound::Relaxed(_) => 1,
    };

    let costs: Vec<f64> = (0..n)
        .map(|p| {
            let mut h_acc = 0.0;
            let mut anchor = paths.state(p, 0);
            for k in 0..k_steps {
                let x = paths.state(p, k);
                if k % period == 0 {
                    anchor = x;
                }
                let t = grid.node(k);
                let m = paths.mean(k);
                let mut hsum = 0.0;
                match &bound {
                    Bound::Strict(b) => {
                        let i = b.action(k, x, anchor);
                        hsum += 1.0 * (c.h)(t, x, m, spec.action_grid.action(i));
                    }
                    Bound::Relaxed(b) => {
                        for (i, w) in b.row(k, x).iter().enumerate() {
                            if *w > 0.0 {
                                hsum += *w * (c.h)(t, x, m, spec.action_grid.action(i));
                            }
                        }
                    }
                }
                h_acc += hsum;
            }
            h_acc * dt + (c.g)(paths.state(p, k_steps), paths.mean(k_steps))
        })
        .collect();
    if let Some(p) = costs.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "cost".into(),
            particle: p,
            step: k_steps,
        });
    }
    Ok(costs)
}

/// Estimate the cost functional along a simulated bundle. The control must
/// be the one the bundle was generated under (checked by fingerprint).
pub fn estimate_cost(
    spec: &crate::problem::ProblemSpec,
    paths: &PathBundle,
    control: ControlRef<'_>,
) -> Result<CostEstimate> {
    let costs = per_particle_costs(spec, paths, control)?;
    Ok(estimate_from(&costs, paths.grid().steps()))
}

/// Simulate and accumulate costs without storing trajectories. Returns the
/// estimate and the per-particle costs (for paired comparisons).
pub fn simulate_cost(
    spec: &crate::problem::ProblemSpec,
    control: ControlRef<'_>,
    cfg: &SimConfig,
) -> Result<(CostEstimate, Vec<f64>)> {
    let out = run_kernel(spec, control, cfg, false, true)?;
    let costs = out.costs.expect("kernel was asked for costs");
    Ok((estimate_from(&costs, cfg.grid.steps()), costs))
}

/// One row of a chattering gap table.
#[derive(Debug, Clone)]
pub struct GapRow {
    pub m: usize,
    pub chatter: CostEstimate,
    pub relaxed: CostEstimate,
    pub gap: f64,
    /// `sqrt(se_chatter^2 + se_relaxed^2)`.
    pub pooled_stderr: f64,
    /// Standard error of the per-particle paired difference (shared streams).
    pub paired_stderr: f64,
}

#[derive(Debug, Clone)]
pub struct GapTable {
    pub rows: Vec<GapRow>,
}

impl GapTable {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "m,J_chatter,stderr,J_relaxed,stderr,gap")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.m,
                fmt_f64(r.chatter.value),
                fmt_f64(r.chatter.stderr),
                fmt_f64(r.relaxed.value),
                fmt_f64(r.relaxed.stderr),
                fmt_f64(r.gap)
            )?;
        }
        Ok(())
    }
}

/// Cost gap between a relaxed control and its chattering approximations for
/// each subdivision count in `m_list`.
///
/// Both costs in a row are evaluated on the refined grid `K * m` with the
/// same increment streams, so the Brownian parts of the difference largely
/// cancel and the paired standard error resolves small gaps.
pub fn value_gap_experiment(
    spec: &crate::problem::ProblemSpec,
    mu: &RelaxedControl,
    m_list: &[usize],
    cfg: &SimConfig,
) -> Result<GapTable> {
    if m_list.is_empty() {
        return Err(Error::invalid("m_list must be nonempty"));
    }
    if m_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("m_list must be strictly increasing"));
    }
    let mut rows = Vec::with_capacity(m_list.len());
    for &m in m_list {
        let chat = crate::controls::chattering(&ChatteringSchedule::new(mu.clone(), m)?)?;
        let fine = cfg.grid.refine(m)?;
        let cfg_m = SimConfig {
            grid: fine,
            ..*cfg
        };
        let (jc, pc) = simulate_cost(spec, ControlRef::Strict(&chat), &cfg_m)?;
        let (jr, pr) = simulate_cost(spec, ControlRef::Relaxed(mu), &cfg_m)?;
        let diffs: Vec<f64> = pc.iter().zip(&pr).map(|(a, b)| a - b).collect();
        let (_, paired_stderr) = mean_and_stderr(&diffs);
        rows.push(GapRow {
            m,
            gap: (jc.value - jr.value).abs(),
            pooled_stderr: (jc.stderr * jc.stderr + jr.stderr * jr.stderr).sqrt(),
            paired_stderr,
            chatter: jc,
            relaxed: jr,
        });
    }
    Ok(GapTable { rows })
}
