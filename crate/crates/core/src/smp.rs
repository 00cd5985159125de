//! Hamiltonian evaluation and maximum-principle residuals.
//!
//! The Hamiltonian is `H = b p + sigma q - h`. The generalized Hamiltonian
//! shifts the volatility argument and adds a curvature correction:
//!
//! ```text
//! Hcal(t, Y, E(Y), a) = H(t, Y, E(Y), a, p, q - P * sbar) - sigma(t, Y, E(Y), a)^2 P / 2
//! ```
//!
//! where `sbar` is the diffusion coefficient weight-averaged over the
//! reference control at the reference state. Evaluated at a measure, `Hcal`
//! is the weight-average over actions, so its supremum over probability
//! measures is attained at a grid action (a linear functional on the simplex
//! is maximized at a vertex).
//!
//! The residual report compares the best constant action against the control
//! actually used, both in the time integral (the global residual) and per
//! time step (the violation profile, computed with empirical means over
//! particles as the unconditional proxy for the conditional form). For
//! state-feedback controls the integrated comparison can legitimately come
//! out slightly negative: a feedback control may beat every constant action.
//! For controls with (omega, t)-constant weights the residual is nonnegative
//! up to Monte Carlo noise.

use std::io::Write;

use crate::bsde::{AdjointFirst, AdjointSecond};
use crate::controls::{argmax_lowest, RelaxedControl, StateBinning};
use crate::cost::{estimate_cost, CostEstimate};
use crate::error::{Error, Result};
use crate::problem::ProblemSpec;
use crate::sim::{ControlRef, PathBundle};
use crate::stats::{mean_and_stderr, pairwise_sum_by};
use crate::textio::fmt_f64;

/// `H = b p + sigma q - h` at one point.
pub fn hamiltonian(
    spec: &ProblemSpec,
    t: f64,
    x: f64,
    y: f64,
    a: f64,
    p: f64,
    q: f64,
) -> Result<f64> {
    for v in [t, x, y, a, p, q] {
        if !v.is_finite() {
            return Err(Error::invalid(format!(
                "hamiltonian input not finite: (t={t}, x={x}, y={y}, a={a}, p={p}, q={q})"
            )));
        }
    }
    let c = &spec.coeffs;
    Ok((c.b)(t, x, y, a) * p + (c.sigma)(t, x, y, a) * q - (c.h)(t, x, y, a))
}

/// Generalized Hamiltonian at a single action. `sigma_bar` is the diffusion
/// coefficient averaged over the reference control at the reference state.
#[allow(clippy::too_many_arguments)]
pub fn h_function(
    spec: &ProblemSpec,
    t: f64,
    x_ref: f64,
    y_ref: f64,
    a: f64,
    p: f64,
    q: f64,
    p2: f64,
    sigma_bar: f64,
) -> Result<f64> {
    if !p2.is_finite() || !sigma_bar.is_finite() {
        return Err(Error::invalid("h_function inputs must be finite"));
    }
    let s = (spec.coeffs.sigma)(t, x_ref, y_ref, a);
    Ok(hamiltonian(spec, t, x_ref, y_ref, a, p, q - p2 * sigma_bar)? - 0.5 * s * s * p2)
}

/// Generalized Hamiltonian at a probability measure over the action grid:
/// the weight-average of `h_function` over actions, in ascending order.
#[allow(clippy::too_many_arguments)]
pub fn h_function_measure(
    spec: &ProblemSpec,
    t: f64,
    x_ref: f64,
    y_ref: f64,
    weights: &[f64],
    p: f64,
    q: f64,
    p2: f64,
    sigma_bar: f64,
) -> Result<f64> {
    if weights.len() != spec.n_actions() {
        return Err(Error::invalid("measure has wrong number of action weights"));
    }
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += *w
            * h_function(
                spec,
                t,
                x_ref,
                y_ref,
                spec.action_grid.action(i),
                p,
                q,
                p2,
                sigma_bar,
            )?;
    }
    Ok(acc)
}

/// Maximum-principle residual report for one (control, paths, adjoints)
/// triple.
#[derive(Debug, Clone)]
pub struct SmpReport {
    pub horizon: f64,
    /// `max_a E int Hcal(a) dt - E int Hcal(mu) dt`, sup exact over the grid.
    pub global_residual: f64,
    pub residual_stderr: f64,
    /// Action attaining the sup.
    pub best_action: usize,
    /// Per-step `max_a mean(Hcal(a)) - mean(Hcal(mu))` over particles.
    pub per_time_violation: Vec<f64>,
    pub per_time_stderr: Vec<f64>,
    /// `E int (max_a Hcal(a) - Hcal(mu)) dt`, the sharper feedback-class
    /// stationarity gap; nonnegative by construction and zero exactly when
    /// the control sits on the pointwise argmax.
    pub pointwise_residual: f64,
    pub pointwise_stderr: f64,
    /// Cost of the control on these paths; used for normalization.
    pub cost: CostEstimate,
}

impl SmpReport {
    /// Residual divided by `max(1, |J|)`.
    pub fn normalized_residual(&self) -> f64 {
        self.global_residual / self.cost.value.abs().max(1.0)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,violation,stderr")?;
        for (k, (v, s)) in self
            .per_time_violation
            .iter()
            .zip(&self.per_time_stderr)
            .enumerate()
        {
            writeln!(w, "{},{},{}", k, fmt_f64(*v), fmt_f64(*s))?;
        }
        Ok(())
    }

    pub fn summary(&self) -> String {
        format!(
            "global_residual = {:.6e} (stderr {:.2e}), normalized = {:.6e}, best_action = {}, J = {:.6e} (stderr {:.2e})",
            self.global_residual,
            self.residual_stderr,
            self.normalized_residual(),
            self.best_action,
            self.cost.value,
            self.cost.stderr
        )
    }
}

/// Residual report plus the per-(step, bin) argmax table the optimizer uses.
pub struct SmpScan {
    pub report: SmpReport,
    pub binning: StateBinning,
    /// `K x bins` argmax action per (step, bin); meaningful where visited.
    pub argmax: Vec<u16>,
    /// `K x bins` whether any particle fell in the bin at that step.
    pub visited: Vec<bool>,
}

fn validate(
    paths: &PathBundle,
    control: &RelaxedControl,
    adj1: &AdjointFirst,
    adj2: &AdjointSecond,
) -> Result<usize> {
    if control.stamp() != paths.control_stamp() {
        return Err(Error::ControlMismatch(
            "residual evaluation needs the control the paths were simulated under".into(),
        ));
    }
    let ratio = control.grid().refinement_ratio(&paths.grid())?;
    let n = paths.particles();
    let k = paths.grid().steps();
    if adj1.p.len() != (k + 1) * n || adj1.q.len() != k * n {
        return Err(Error::ControlMismatch(
            "first-order adjoint grids do not match the paths".into(),
        ));
    }
    if adj2.p2.len() != (k + 1) * n || adj2.q2.len() != k * n {
        return Err(Error::ControlMismatch(
            "second-order adjoint grids do not match the paths".into(),
        ));
    }
    Ok(ratio)
}

/// Full Hamiltonian scan: residual report and per-(step, bin) argmax.
pub fn smp_scan(
    spec: &ProblemSpec,
    paths: &PathBundle,
    control: &RelaxedControl,
    adj1: &AdjointFirst,
    adj2: &AdjointSecond,
    binning: StateBinning,
) -> Result<SmpScan> {
    let ratio = validate(paths, control, adj1, adj2)?;
    let n = paths.particles();
    let k_steps = paths.grid().steps();
    let dt = paths.grid().dt();
    let nact = spec.n_actions();
    let bins = binning.bins();
    let c = &spec.coeffs;
    let ctrl_binning = control.binning();

    // per-particle integrated advantage of each constant action over mu
    let mut cmat = vec![0.0; n * nact];
    // per-particle integral of the pointwise gap max_a Hcal - Hcal(mu)
    let mut pointwise = vec![0.0; n];
    let mut per_time_violation = Vec::with_capacity(k_steps);
    let mut per_time_stderr = Vec::with_capacity(k_steps);
    // per-(step, bin, action) sums and per-(step, bin) counts
    let mut argmax = vec![0u16; k_steps * bins];
    let mut visited = vec![false; k_steps * bins];

    // scratch: Hcal(a) per particle, particle-major, plus Hcal(mu)
    let mut hvals = vec![0.0; n * nact];
    let mut hmu = vec![0.0; n];
    let mut bin_ids = vec![0usize; n];

    use rayon::prelude::*;
    const CH: usize = 512;

    for k in 0..k_steps {
        let t = paths.grid().node(k);
        let m = paths.mean(k);
        let states = paths.states_at(k);
        let p_k = &adj1.p[k * n..(k + 1) * n];
        let q_k = &adj1.q[k * n..(k + 1) * n];
        let p2_k = &adj2.p2[k * n..(k + 1) * n];
        let kc = k / ratio;

        hvals
            .par_chunks_mut(CH * nact)
            .zip(hmu.par_chunks_mut(CH))
            .zip(bin_ids.par_chunks_mut(CH))
            .enumerate()
            .for_each(|(ci, ((hv, hm), bi))| {
                let base = ci * CH;
                for j in 0..hm.len() {
                    let i = base + j;
                    let x = states[i];
                    bi[j] = binning.bin(x);
                    let row = control.row(kc, ctrl_binning.bin(x));
                    let mut sigma_bar = 0.0;
                    for (ai, w) in row.iter().enumerate() {
                        if *w > 0.0 {
                            sigma_bar += *w * (c.sigma)(t, x, m, spec.action_grid.action(ai));
                        }
                    }
                    let q_shift = q_k[i] - p2_k[i] * sigma_bar;
                    let mut mu_val = 0.0;
                    for ai in 0..nact {
                        let a = spec.action_grid.action(ai);
                        let s = (c.sigma)(t, x, m, a);
                        let hv_a = (c.b)(t, x, m, a) * p_k[i] + s * q_shift
                            - (c.h)(t, x, m, a)
                            - 0.5 * s * s * p2_k[i];
                        hv[j * nact + ai] = hv_a;
                        let w = row[ai];
                        if w > 0.0 {
                            mu_val += w * hv_a;
                        }
                    }
                    hm[j] = mu_val;
                }
            });

        // accumulate the per-particle integrals
        cmat.par_chunks_mut(CH * nact)
            .zip(pointwise.par_chunks_mut(CH))
            .enumerate()
            .for_each(|(ci, (cm, pw))| {
                let base = ci * CH;
                for j in 0..cm.len() / nact {
                    let i = base + j;
                    let mut best = f64::NEG_INFINITY;
                    for ai in 0..nact {
                        let adv = hvals[i * nact + ai] - hmu[i];
                        cm[j * nact + ai] += dt * adv;
                        best = best.max(adv);
                    }
                    pw[j] += dt * best;
                }
            });

        // per-time violation with empirical means over particles
        let hmu_mean = pairwise_sum_by(0, n, &|i| hmu[i]) / n as f64;
        let mut best_a = 0usize;
        let mut best_mean = f64::NEG_INFINITY;
        for ai in 0..nact {
            let mean_a = pairwise_sum_by(0, n, &|i| hvals[i * nact + ai]) / n as f64;
            if mean_a > best_mean {
                best_mean = mean_a;
                best_a = ai;
            }
        }
        per_time_violation.push(best_mean - hmu_mean);
        let diffs: Vec<f64> = (0..n).map(|i| hvals[i * nact + best_a] - hmu[i]).collect();
        per_time_stderr.push(mean_and_stderr(&diffs).1);

        // per-(step, bin) argmax of bin-averaged Hcal
        let mut bin_sums = vec![0.0f64; bins * nact];
        let mut bin_counts = vec![0usize; bins];
        for i in 0..n {
            let b = bin_ids[i];
            bin_counts[b] += 1;
            for ai in 0..nact {
                bin_sums[b * nact + ai] += hvals[i * nact + ai];
            }
        }
        for b in 0..bins {
            if bin_counts[b] > 0 {
                visited[k * bins + b] = true;
                argmax[k * bins + b] =
                    argmax_lowest(&bin_sums[b * nact..(b + 1) * nact]) as u16;
            }
        }
    }

    // global residual: best constant action in the integrated comparison
    let mut best_action = 0usize;
    let mut best_val = f64::NEG_INFINITY;
    for ai in 0..nact {
        let v = pairwise_sum_by(0, n, &|i| cmat[i * nact + ai]) / n as f64;
        if v > best_val {
            best_val = v;
            best_action = ai;
        }
    }
    let col: Vec<f64> = (0..n).map(|i| cmat[i * nact + best_action]).collect();
    let (global_residual, residual_stderr) = mean_and_stderr(&col);
    let (pointwise_residual, pointwise_stderr) = mean_and_stderr(&pointwise);

    let cost = estimate_cost(spec, paths, ControlRef::Relaxed(control))?;
    Ok(SmpScan {
        report: SmpReport {
            horizon: paths.grid().horizon(),
            global_residual,
            residual_stderr,
            best_action,
            per_time_violation,
            per_time_stderr,
            pointwise_residual,
            pointwise_stderr,
            cost,
        },
        binning,
        argmax,
        visited,
    })
}

/// Maximum-principle residual report (the scan without the argmax table).
pub fn smp_residual(
    spec: &ProblemSpec,
    paths: &PathBundle,
    control: &RelaxedControl,
    adj1: &AdjointFirst,
    adj2: &AdjointSecond,
) -> Result<SmpReport> {
    Ok(smp_scan(spec, paths, control, adj1, adj2, control.binning())?.report)
}

#[derive(Debug, Clone, Copy)]
pub struct NearOptimality {
    pub epsilon: f64,
    /// `T * epsilon^(1/3)`.
    pub bound: f64,
    pub residual: f64,
    pub stderr: f64,
    pub passed: bool,
}

/// Check the near-optimality inequality: the residual of an
/// `epsilon`-optimal control is at most `T * epsilon^(1/3)` up to noise.
pub fn near_optimality_check(report: &SmpReport, epsilon: f64) -> Result<NearOptimality> {
    if epsilon < 0.0 || !epsilon.is_finite() {
        return Err(Error::invalid("epsilon must be nonnegative"));
    }
    let bound = report.horizon * epsilon.cbrt();
    let passed = report.global_residual <= bound + 3.0 * report.residual_stderr;
    Ok(NearOptimality {
        epsilon,
        bound,
        residual: report.global_residual,
        stderr: report.residual_stderr,
        passed,
    })
}
