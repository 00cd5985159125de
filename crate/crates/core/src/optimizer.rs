//! Successive-approximation solver for the relaxed control problem.
//!
//! Each iteration simulates the ensemble under the current relaxed control,
//! solves both adjoint equations backward, evaluates the generalized
//! Hamiltonian, and pushes the weights of every visited (step, bin) toward
//! the one-hot row at the per-bin Hamiltonian argmax:
//!
//! ```text
//! w <- (1 - rho) w + rho * onehot(argmax_a Hcal)
//! ```
//!
//! The argmax over a finite grid sits at a simplex vertex, so the damped
//! update stays inside the simplex. Rows are renormalized after every
//! update. The loop keeps the best-cost iterate and stops on a small
//! residual, iteration budget, or a long non-improving streak.

use std::io::Write;

use crate::controls::RelaxedControl;
use crate::cost::CostEstimate;
use crate::error::{Error, Result};
use crate::problem::ProblemSpec;
use crate::regression::RegressionBasis;
use crate::rng::mix64;
use crate::sim::{simulate_relaxed, SimConfig};
use crate::smp::{near_optimality_check, smp_scan};
use crate::textio::fmt_f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedPolicy {
    /// Same streams every iteration (common random numbers).
    Fixed,
    /// Fresh streams per iteration, to detect overfitting to one draw.
    RefreshPerIteration,
}

#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    /// Step size rho in (0, 1].
    pub damping: f64,
    /// Stop when the global residual drops to this level.
    pub tolerance: f64,
    pub basis: RegressionBasis,
    pub seed_policy: SeedPolicy,
    /// Stop after this many consecutive non-improving iterations.
    pub stall_patience: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iters: 20,
            damping: 0.5,
            tolerance: 1e-3,
            basis: RegressionBasis::default(),
            seed_policy: SeedPolicy::Fixed,
            stall_patience: 20,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.damping.is_nan() || !(0.0..=1.0).contains(&self.damping) || self.damping == 0.0 {
            return Err(Error::invalid("damping must lie in (0, 1]"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be >= 1"));
        }
        self.basis.validate()
    }
}

#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iter: usize,
    pub cost: CostEstimate,
    pub residual: f64,
    pub residual_stderr: f64,
    /// `max |w_new - w_old|` of this iteration's update.
    pub control_change: f64,
    pub visited_bins: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    ResidualBelowTolerance,
    MaxIterations,
    Stalled,
    AdjointFailure,
}

#[derive(Debug, Clone)]
pub struct OptimizerTrace {
    pub iterations: Vec<IterationRecord>,
    pub stop: StopReason,
    /// Message for an aborted run.
    pub failure: Option<String>,
    /// Index (into `iterations`) of the best-cost iterate returned.
    pub best_iter: usize,
}

impl OptimizerTrace {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "iter,J,stderr,residual,delta")?;
        for r in &self.iterations {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.iter,
                fmt_f64(r.cost.value),
                fmt_f64(r.cost.stderr),
                fmt_f64(r.residual),
                fmt_f64(r.control_change)
            )?;
        }
        Ok(())
    }
}

/// Run the successive-approximation loop from `init`. Returns the best-cost
/// iterate and the full trace; an adjoint failure after the first completed
/// iteration stops the loop and is recorded rather than propagated.
pub fn optimize(
    spec: &ProblemSpec,
    init: &RelaxedControl,
    cfg: &OptimizerConfig,
    sim: &SimConfig,
) -> Result<(RelaxedControl, OptimizerTrace)> {
    cfg.validate()?;
    if init.n_actions() != spec.n_actions() {
        return Err(Error::invalid(
            "initial control and problem disagree on the action count",
        ));
    }
    let mut current = init.clone();
    let mut best = init.clone();
    let mut best_cost = f64::INFINITY;
    let mut best_iter = 0usize;
    let mut stall = 0usize;
    let mut iterations: Vec<IterationRecord> = Vec::new();
    let mut stop = StopReason::MaxIterations;
    let mut failure = None;

    for it in 0..cfg.max_iters {
        let seed = match cfg.seed_policy {
            SeedPolicy::Fixed => sim.seed,
            SeedPolicy::RefreshPerIteration => mix64(sim.seed ^ (it as u64 + 1)),
        };
        let cfg_it = SimConfig { seed, ..*sim };

        let step = (|| -> Result<_> {
            let paths = simulate_relaxed(spec, &current, &cfg_it)?;
            let adj1 = crate::bsde::solve_first_order(spec, &paths, &current, &cfg.basis)?;
            let adj2 =
                crate::bsde::solve_second_order(spec, &paths, &current, &adj1, &cfg.basis)?;
            smp_scan(spec, &paths, &current, &adj1, &adj2, current.binning())
        })();
        let scan = match step {
            Ok(scan) => scan,
            Err(e) if it > 0 => {
                stop = StopReason::AdjointFailure;
                failure = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        };

        let j = scan.report.cost;
        if j.value < best_cost {
            best_cost = j.value;
            best = current.clone();
            best_iter = it;
            stall = 0;
        } else {
            stall += 1;
        }

        // damped one-hot update on visited bins
        let rho = cfg.damping;
        let bins = current.binning().bins();
        let mut next = current.clone();
        let mut delta = 0.0f64;
        let mut visited_bins = 0usize;
        for k in 0..current.grid().steps() {
            for b in 0..bins {
                if !scan.visited[k * bins + b] {
                    continue;
                }
                visited_bins += 1;
                let star = scan.argmax[k * bins + b] as usize;
                let row = next.row_mut(k, b);
                let mut sum = 0.0;
                for (i, w) in row.iter_mut().enumerate() {
                    *w *= 1.0 - rho;
                    if i == star {
                        *w += rho;
                    }
                    sum += *w;
                }
                for (i, w) in row.iter_mut().enumerate() {
                    *w /= sum;
                    let old = current.row(k, b)[i];
                    delta = delta.max((*w - old).abs());
                }
            }
        }

        iterations.push(IterationRecord {
            iter: it,
            cost: j,
            residual: scan.report.global_residual,
            residual_stderr: scan.report.residual_stderr,
            control_change: delta,
            visited_bins,
        });

        // the feedback-class gap is the convergence monitor: it is
        // nonnegative and vanishes exactly at per-bin stationarity, while
        // the constant-action residual can go negative for feedback controls
        if scan.report.pointwise_residual <= cfg.tolerance {
            stop = StopReason::ResidualBelowTolerance;
            break;
        }
        if stall >= cfg.stall_patience {
            stop = StopReason::Stalled;
            break;
        }
        current = next;
    }

    Ok((
        best,
        OptimizerTrace {
            iterations,
            stop,
            failure,
            best_iter,
        },
    ))
}

/// One row of the minimizing-sequence summary.
#[derive(Debug, Clone)]
pub struct SequenceRow {
    pub iter: usize,
    pub cost: f64,
    pub stderr: f64,
    pub best_so_far: f64,
    pub residual: f64,
    /// Near-optimality check with epsilon = max(0, J - best J so far).
    pub near_optimal: bool,
}

#[derive(Debug, Clone)]
pub struct MinimizingSequenceSummary {
    pub rows: Vec<SequenceRow>,
    pub horizon: f64,
}

/// Summarize a trace as an empirical minimizing sequence: the best-so-far
/// cost curve (nonincreasing by construction) with the residual and
/// near-optimality status per iteration.
pub fn minimizing_sequence_report(
    trace: &OptimizerTrace,
    horizon: f64,
) -> Result<MinimizingSequenceSummary> {
    if trace.iterations.is_empty() {
        return Err(Error::invalid("trace is empty"));
    }
    let mut best = f64::INFINITY;
    let mut rows = Vec::with_capacity(trace.iterations.len());
    for r in &trace.iterations {
        best = best.min(r.cost.value);
        let epsilon = (r.cost.value - best).max(0.0);
        let report = crate::smp::SmpReport {
            horizon,
            global_residual: r.residual,
            residual_stderr: r.residual_stderr,
            best_action: 0,
            per_time_violation: vec![],
            per_time_stderr: vec![],
            pointwise_residual: 0.0,
            pointwise_stderr: 0.0,
            cost: r.cost,
        };
        let check = near_optimality_check(&report, epsilon)?;
        rows.push(SequenceRow {
            iter: r.iter,
            cost: r.cost.value,
            stderr: r.cost.stderr,
            best_so_far: best,
            residual: r.residual,
            near_optimal: check.passed,
        });
    }
    Ok(MinimizingSequenceSummary {
        rows,
        horizon,
    })
}
