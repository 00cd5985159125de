//! Backward solvers for the first- and second-order adjoint equations.
//!
//! Both equations are linear backward SDEs driven by the effective Brownian
//! direction of the forward simulation. They are solved by backward Euler
//! with least-squares projections for the conditional expectations:
//!
//! ```text
//! q_k = fit[ (p_{k+1} - <p_{k+1}>) dW_k^eff / dt ]
//! p_k = fit[ p_{k+1} + dt * driver(t_k, p_{k+1}, q_k, ensemble averages) ]
//! ```
//!
//! where `fit` projects onto the regression basis at `X_k` and `<.>` is the
//! ensemble mean, subtracted as an exact control variate (`E_k[dW] = 0`), so
//! a constant integrand yields exactly zero volatility. The first-order
//! driver is
//! `bbar_x p + E(bbar_y p) + sbar_x q + E(sbar_y q) - hbar_x - E(hbar_y)`
//! with `fbar` the weight-average of a coefficient over the action grid;
//! the scheme is explicit (the driver uses `p_{k+1}` and `q_k`) and the
//! mean-field terms are plain ensemble averages at the evaluation step.
//!
//! The second-order driver is
//! `2 bbar_x P + sbar_x^2 P + 2 sbar_x Q + Hbar_xx` with
//! `H_xx = b_xx p + sigma_xx q - h_xx`; going backward a step adds
//! `dt * driver` for both equations, which makes the terminal-cost-only case
//! come out as `P_k = -h_xx (T - t_k)` under a zero terminal value. The
//! orthogonal martingale parts of the solutions show up here only as
//! regression residuals, accumulated into `residual_qv`.

use rayon::prelude::*;

use crate::controls::RelaxedControl;
use crate::error::{Error, Result};
use crate::problem::{Coeff, ProblemSpec};
use crate::regression::{fit_conditional, RegressionBasis};
use crate::sim::PathBundle;
use crate::stats::{mean_and_stderr, pairwise_sum_by};

/// First-order adjoint solution on the simulation grid.
pub struct AdjointFirst {
    /// `(K+1) x N`, step-major; the terminal row is exact per particle.
    pub p: Vec<f64>,
    /// `K x N` volatility estimates.
    pub q: Vec<f64>,
    /// Mean over particles of the summed squared regression residuals; the
    /// discrete quadratic variation of the orthogonal remainder.
    pub residual_qv: f64,
    /// Per-step `(mean, stderr)` of the regression residuals.
    pub per_step_residual: Vec<(f64, f64)>,
    pub diagnostics: AdjointDiagnostics,
}

/// Second-order adjoint solution.
pub struct AdjointSecond {
    /// `(K+1) x N`; terminal row is `-g_xx(X_K)` exactly.
    pub p2: Vec<f64>,
    /// `K x N`. Only its square enters downstream diagnostics; the
    /// generalized Hamiltonian never reads it.
    pub q2: Vec<f64>,
    pub residual_qv: f64,
    pub per_step_residual: Vec<(f64, f64)>,
    pub diagnostics: AdjointDiagnostics,
}

#[derive(Debug, Clone, Copy)]
pub struct AdjointDiagnostics {
    /// `max |value|` over the whole grid.
    pub sup_value: f64,
    /// `sum_k dt * mean(q_k^2)`, the discrete `int q^2 dt`.
    pub q_sq_integral: f64,
    /// Worst regression conditioning over all steps.
    pub max_cond: f64,
}

/// Weight-averaged coefficient values, particle-major:
/// `get(f, p) = sum_i w_i(k, X_p) f(t, X_p, m, a_i)`.
struct Bars {
    flat: Vec<f64>,
    n_fns: usize,
}

impl Bars {
    #[inline]
    fn get(&self, fi: usize, i: usize) -> f64 {
        self.flat[i * self.n_fns + fi]
    }
}

#[allow(clippy::too_many_arguments)]
fn weighted_bars(
    spec: &ProblemSpec,
    control: &RelaxedControl,
    ratio: usize,
    k: usize,
    t: f64,
    states: &[f64],
    m: f64,
    fns: &[&Coeff],
) -> Bars {
    let n = states.len();
    let kc = k / ratio;
    let binning = control.binning();
    let n_fns = fns.len();
    let chunk = 2048;
    let mut flat = vec![0.0; n * n_fns];
    flat.par_chunks_mut(chunk * n_fns)
        .enumerate()
        .for_each(|(ci, out)| {
            let base = ci * chunk;
            for j in 0..out.len() / n_fns {
                let p = base + j;
                let x = states[p];
                let row = control.row(kc, binning.bin(x));
                for (fi, f) in fns.iter().enumerate() {
                    let mut acc = 0.0;
                    for (i, w) in row.iter().enumerate() {
                        if *w > 0.0 {
                            acc += *w * f(t, x, m, spec.action_grid.action(i));
                        }
                    }
                    out[j * n_fns + fi] = acc;
                }
            }
        });
    Bars { flat, n_fns }
}

fn check_finite(vals: &[f64], context: &str, step: usize) -> Result<()> {
    if let Some(p) = vals.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: context.into(),
            particle: p,
            step,
        });
    }
    Ok(())
}

fn validate_inputs(paths: &PathBundle, control: &RelaxedControl) -> Result<usize> {
    if control.stamp() != paths.control_stamp() {
        return Err(Error::ControlMismatch(
            "adjoint solve needs the control the paths were simulated under".into(),
        ));
    }
    control.grid().refinement_ratio(&paths.grid())
}

/// Solve the first-order adjoint equation backward along the ensemble.
pub fn solve_first_order(
    spec: &ProblemSpec,
    paths: &PathBundle,
    control: &RelaxedControl,
    basis: &RegressionBasis,
) -> Result<AdjointFirst> {
    basis.validate()?;
    let ratio = validate_inputs(paths, control)?;
    let n = paths.particles();
    let k_steps = paths.grid().steps();
    let dt = paths.grid().dt();
    let c = &spec.coeffs;

    let mut p = vec![0.0; (k_steps + 1) * n];
    let mut q = vec![0.0; k_steps * n];

    // terminal: p(T) = -g_x - E(g_y)
    let m_t = paths.mean(k_steps);
    let xt = paths.states_at(k_steps);
    let mean_gy = pairwise_sum_by(0, n, &|i| (c.g_y)(xt[i], m_t)) / n as f64;
    for i in 0..n {
        p[k_steps * n + i] = -(c.g_x)(xt[i], m_t) - mean_gy;
    }
    check_finite(&p[k_steps * n..], "adjoint terminal", k_steps)?;

    let mut rq = vec![0.0; n];
    let mut per_step_residual = vec![(0.0, 0.0); k_steps];
    let mut q_sq_integral = 0.0;
    let mut max_cond = 1.0f64;

    const B_X: usize = 0;
    const B_Y: usize = 1;
    const S_X: usize = 2;
    const S_Y: usize = 3;
    const H_X: usize = 4;
    const H_Y: usize = 5;

    for k in (0..k_steps).rev() {
        let t = paths.grid().node(k);
        let m = paths.mean(k);
        let states = paths.states_at(k);
        let eff = paths.eff_increments_at(k);
        let (p_now, p_next) = {
            let (head, tail) = p.split_at_mut((k + 1) * n);
            (&mut head[k * n..], &tail[..n])
        };

        let bars = weighted_bars(
            spec,
            control,
            ratio,
            k,
            t,
            states,
            m,
            &[&c.b_x, &c.b_y, &c.sigma_x, &c.sigma_y, &c.h_x, &c.h_y],
        );

        // volatility: centered target (p_{k+1} - <p_{k+1}>) dW / dt
        let p_mean = pairwise_sum_by(0, n, &|i| p_next[i]) / n as f64;
        let targets_q: Vec<f64> = (0..n)
            .map(|i| (p_next[i] - p_mean) * eff[i] / dt)
            .collect();
        let fit_q = fit_conditional(basis, states, m, &targets_q, k)?;
        max_cond = max_cond.max(fit_q.cond);
        q[k * n..(k + 1) * n].copy_from_slice(&fit_q.fitted);
        let q_k = &q[k * n..(k + 1) * n];
        q_sq_integral += dt * pairwise_sum_by(0, n, &|i| q_k[i] * q_k[i]) / n as f64;

        // mean-field terms at the evaluation step (one-step lag through p)
        let e_by_p = pairwise_sum_by(0, n, &|i| bars.get(B_Y, i) * p_next[i]) / n as f64;
        let e_sy_q = pairwise_sum_by(0, n, &|i| bars.get(S_Y, i) * q_k[i]) / n as f64;
        let e_hy = pairwise_sum_by(0, n, &|i| bars.get(H_Y, i)) / n as f64;

        let targets_p: Vec<f64> = (0..n)
            .map(|i| {
                let driver = bars.get(B_X, i) * p_next[i] + e_by_p
                    + bars.get(S_X, i) * q_k[i]
                    + e_sy_q
                    - bars.get(H_X, i)
                    - e_hy;
                p_next[i] + dt * driver
            })
            .collect();
        let fit_p = fit_conditional(basis, states, m, &targets_p, k)?;
        max_cond = max_cond.max(fit_p.cond);
        check_finite(&fit_p.fitted, "adjoint p", k)?;
        p_now.copy_from_slice(&fit_p.fitted);

        for (acc, e) in rq.iter_mut().zip(&fit_p.residuals) {
            *acc += e * e;
        }
        per_step_residual[k] = mean_and_stderr(&fit_p.residuals);
    }

    let residual_qv = pairwise_sum_by(0, n, &|i| rq[i]) / n as f64;
    let sup_value = p.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    Ok(AdjointFirst {
        p,
        q,
        residual_qv,
        per_step_residual,
        diagnostics: AdjointDiagnostics {
            sup_value,
            q_sq_integral,
            max_cond,
        },
    })
}

/// Solve the second-order adjoint equation backward, reusing the first-order
/// solution for the Hamiltonian curvature term.
pub fn solve_second_order(
    spec: &ProblemSpec,
    paths: &PathBundle,
    control: &RelaxedControl,
    first: &AdjointFirst,
    basis: &RegressionBasis,
) -> Result<AdjointSecond> {
    basis.validate()?;
    let ratio = validate_inputs(paths, control)?;
    let n = paths.particles();
    let k_steps = paths.grid().steps();
    let dt = paths.grid().dt();
    let c = &spec.coeffs;
    if first.p.len() != (k_steps + 1) * n {
        return Err(Error::ControlMismatch(
            "first-order solution does not match the paths".into(),
        ));
    }

    let mut p2 = vec![0.0; (k_steps + 1) * n];
    let mut q2 = vec![0.0; k_steps * n];

    let m_t = paths.mean(k_steps);
    let xt = paths.states_at(k_steps);
    for i in 0..n {
        p2[k_steps * n + i] = -(c.g_xx)(xt[i], m_t);
    }

    let mut rq = vec![0.0; n];
    let mut per_step_residual = vec![(0.0, 0.0); k_steps];
    let mut q_sq_integral = 0.0;
    let mut max_cond = 1.0f64;

    for k in (0..k_steps).rev() {
        let t = paths.grid().node(k);
        let m = paths.mean(k);
        let states = paths.states_at(k);
        let eff = paths.eff_increments_at(k);
        let (p2_now, p2_next) = {
            let (head, tail) = p2.split_at_mut((k + 1) * n);
            (&mut head[k * n..], &tail[..n])
        };
        let p1_next = &first.p[(k + 1) * n..(k + 2) * n];
        let q1_now = &first.q[k * n..(k + 1) * n];

        const B_X: usize = 0;
        const S_X: usize = 1;
        const B_XX: usize = 2;
        const S_XX: usize = 3;
        const H_XX: usize = 4;
        let bars = weighted_bars(
            spec,
            control,
            ratio,
            k,
            t,
            states,
            m,
            &[&c.b_x, &c.sigma_x, &c.b_xx, &c.sigma_xx, &c.h_xx],
        );

        let p2_mean = pairwise_sum_by(0, n, &|i| p2_next[i]) / n as f64;
        let targets_q: Vec<f64> = (0..n)
            .map(|i| (p2_next[i] - p2_mean) * eff[i] / dt)
            .collect();
        let fit_q = fit_conditional(basis, states, m, &targets_q, k)?;
        max_cond = max_cond.max(fit_q.cond);
        q2[k * n..(k + 1) * n].copy_from_slice(&fit_q.fitted);
        let q2_k = &q2[k * n..(k + 1) * n];
        q_sq_integral += dt * pairwise_sum_by(0, n, &|i| q2_k[i] * q2_k[i]) / n as f64;

        let targets_p: Vec<f64> = (0..n)
            .map(|i| {
                let sx = bars.get(S_X, i);
                let hxx = bars.get(B_XX, i) * p1_next[i] + bars.get(S_XX, i) * q1_now[i]
                    - bars.get(H_XX, i);
                let driver = 2.0 * bars.get(B_X, i) * p2_next[i]
                    + sx * sx * p2_next[i]
                    + 2.0 * sx * q2_k[i]
                    + hxx;
                p2_next[i] + dt * driver
            })
            .collect();
        let fit_p = fit_conditional(basis, states, m, &targets_p, k)?;
        max_cond = max_cond.max(fit_p.cond);
        check_finite(&fit_p.fitted, "adjoint P", k)?;
        p2_now.copy_from_slice(&fit_p.fitted);

        for (acc, e) in rq.iter_mut().zip(&fit_p.residuals) {
            *acc += e * e;
        }
        per_step_residual[k] = mean_and_stderr(&fit_p.residuals);
    }

    let residual_qv = pairwise_sum_by(0, n, &|i| rq[i]) / n as f64;
    let sup_value = p2.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    Ok(AdjointSecond {
        p2,
        q2,
        residual_qv,
        per_step_residual,
        diagnostics: AdjointDiagnostics {
            sup_value,
            q_sq_integral,
            max_cond,
        },
    })
}

/// Dump both adjoint grids as CSV rows `(step, particle, p, q, P, Q)`.
pub fn export_adjoints_csv<W: std::io::Write>(
    mut w: W,
    paths: &PathBundle,
    first: &AdjointFirst,
    second: &AdjointSecond,
) -> Result<()> {
    use crate::textio::fmt_f64;
    let n = paths.particles();
    let k_steps = paths.grid().steps();
    writeln!(w, "step,particle,p,q,P,Q")?;
    for k in 0..=k_steps {
        for i in 0..n {
            let (qv, q2v) = if k < k_steps {
                (first.q[k * n + i], second.q2[k * n + i])
            } else {
                (f64::NAN, f64::NAN)
            };
            writeln!(
                w,
                "{},{},{},{},{},{}",
                k,
                i,
                fmt_f64(first.p[k * n + i]),
                fmt_f64(qv),
                fmt_f64(second.p2[k * n + i]),
                fmt_f64(q2v)
            )?;
        }
    }
    Ok(())
}
