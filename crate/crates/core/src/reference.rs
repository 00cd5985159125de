//! Deterministic reference solutions for the built-in benchmarks.
//!
//! These are independent of the Monte Carlo pipeline: plain RK4 ODE
//! integration for the linear-quadratic benchmark and closed-form discrete
//! sums for the two-action benchmark. Tests and the acceptance suite compare
//! simulation output against them.

use std::sync::Arc;

use crate::controls::{RelaxedControl, StateBinning, StrictControl};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::problem::LqParams;

/// Deterministic solution of the linear-quadratic benchmark.
///
/// Splitting the state into its mean and the centered remainder decouples
/// the problem into two scalar Riccati equations:
///
/// ```text
/// K'    = -2 a1 K + (b0^2 / r) K^2 - qx,                 K(T)    = gx
/// Kbar' = -2 (a1 + a2) Kbar + (b0^2 / r) Kbar^2 - (qx + qy),
///                                                        Kbar(T) = gx + gy
/// ```
///
/// The optimal feedback is `u*(t, x) = -(b0/r) (K (x - m) + Kbar m)` with
/// `m` the mean path, and the optimal cost is
/// `Kbar(0) x0^2 / 2 + s0^2 / 2 * int K dt`. The first-order costate along
/// the optimum is `p(t) = -(K (X - m) + Kbar m)`; the second-order adjoint
/// is `P(t) = -Pi(t)` where `Pi' = -2 a1 Pi - qx`, `Pi(T) = gx` (the cost
/// curvature along a fixed control, a linear equation since the adjoint
/// coefficients are action-independent here).
#[derive(Debug, Clone)]
pub struct LqSolution {
    params: LqParams,
    horizon: f64,
    x0: f64,
    resolution: usize,
    k_centered: Vec<f64>,
    k_mean: Vec<f64>,
    curvature: Vec<f64>,
    mean: Vec<f64>,
    int_k: f64,
}

fn rk4_backward(terminal: f64, steps: usize, h: f64, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut out = vec![0.0; steps + 1];
    out[steps] = terminal;
    for j in (0..steps).rev() {
        let y = out[j + 1];
        let k1 = f(y);
        let k2 = f(y - 0.5 * h * k1);
        let k3 = f(y - 0.5 * h * k2);
        let k4 = f(y - h * k3);
        out[j] = y - h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    out
}

impl LqSolution {
    /// Solve on `resolution` RK4 steps (use at least 10x the simulation
    /// step count).
    pub fn solve(params: &LqParams, horizon: f64, x0: f64, resolution: usize) -> Result<Self> {
        params.validate()?;
        if resolution < 2 {
            return Err(Error::invalid("LQ reference needs resolution >= 2"));
        }
        if !(horizon > 0.0) {
            return Err(Error::invalid("LQ reference needs a positive horizon"));
        }
        let p = *params;
        let h = horizon / resolution as f64;
        let gain = p.b0 * p.b0 / p.r;
        let k_centered = rk4_backward(p.gx, resolution, h, |k| {
            -2.0 * p.a1 * k + gain * k * k - p.qx
        });
        let k_mean = rk4_backward(p.gx + p.gy, resolution, h, |k| {
            -2.0 * (p.a1 + p.a2) * k + gain * k * k - (p.qx + p.qy)
        });
        let curvature = rk4_backward(p.gx, resolution, h, |y| -2.0 * p.a1 * y - p.qx);

        // mean path under the optimal feedback, RK4 forward with Kbar
        // interpolated linearly between its nodes
        let kbar_at = |s: f64| -> f64 {
            let u = (s / horizon * resolution as f64).clamp(0.0, resolution as f64);
            let j = (u as usize).min(resolution - 1);
            let frac = u - j as f64;
            k_mean[j] * (1.0 - frac) + k_mean[j + 1] * frac
        };
        let mut mean = vec![0.0; resolution + 1];
        mean[0] = x0;
        for j in 0..resolution {
            let t = j as f64 * h;
            let f = |s: f64, m: f64| (p.a1 + p.a2 - gain * kbar_at(s)) * m;
            let m = mean[j];
            let k1 = f(t, m);
            let k2 = f(t + 0.5 * h, m + 0.5 * h * k1);
            let k3 = f(t + 0.5 * h, m + 0.5 * h * k2);
            let k4 = f(t + h, m + h * k3);
            mean[j + 1] = m + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }

        let mut int_k = 0.0;
        for j in 0..resolution {
            int_k += 0.5 * (k_centered[j] + k_centered[j + 1]) * h;
        }

        Ok(Self {
            params: p,
            horizon,
            x0,
            resolution,
            k_centered,
            k_mean,
            curvature,
            mean,
            int_k,
        })
    }

    fn idx(&self, t: f64) -> usize {
        let u = t / self.horizon * self.resolution as f64;
        (u.round() as usize).min(self.resolution)
    }

    pub fn params(&self) -> &LqParams {
        &self.params
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Centered Riccati coefficient `K(t)`.
    pub fn riccati_centered(&self, t: f64) -> f64 {
        self.k_centered[self.idx(t)]
    }

    /// Mean Riccati coefficient `Kbar(t)`.
    pub fn riccati_mean(&self, t: f64) -> f64 {
        self.k_mean[self.idx(t)]
    }

    /// Cost curvature `Pi(t)`; the second-order adjoint is `-Pi(t)`.
    pub fn curvature(&self, t: f64) -> f64 {
        self.curvature[self.idx(t)]
    }

    pub fn second_order(&self, t: f64) -> f64 {
        -self.curvature(t)
    }

    /// Mean path `m(t)` under the optimal feedback.
    pub fn mean_path(&self, t: f64) -> f64 {
        self.mean[self.idx(t)]
    }

    /// Optimal feedback, clamped to the action box.
    pub fn feedback(&self, t: f64, x: f64) -> f64 {
        let m = self.mean_path(t);
        let u = -(self.params.b0 / self.params.r)
            * (self.riccati_centered(t) * (x - m) + self.riccati_mean(t) * m);
        u.clamp(-self.params.u_max, self.params.u_max)
    }

    /// First-order costate at `(t, x)` given the ensemble mean.
    pub fn costate(&self, t: f64, x: f64, ensemble_mean: f64) -> f64 {
        -(self.riccati_centered(t) * (x - ensemble_mean)
            + self.riccati_mean(t) * ensemble_mean)
    }

    /// Optimal cost from the deterministic initial state.
    pub fn optimal_cost(&self) -> f64 {
        0.5 * self.k_mean[0] * self.x0 * self.x0 + 0.5 * self.params.s0 * self.params.s0 * self.int_k
    }

    /// Strict feedback rule choosing the grid action nearest the (optionally
    /// gain-scaled) optimal feedback.
    pub fn feedback_rule(
        &self,
        grid: TimeGrid,
        actions: &crate::problem::ActionGrid,
        gain: f64,
    ) -> StrictControl {
        let me = Arc::new(self.clone());
        let acts = actions.clone();
        StrictControl::from_rule(grid, actions.len(), format!("lq-feedback-{gain}"), move |k, x| {
            let t = grid.node(k);
            acts.nearest(gain * me.feedback(t, x))
        })
    }

    /// Relaxed control splitting mass between the two grid actions that
    /// bracket the (optionally gain-scaled) optimal feedback, so the mean
    /// action equals the continuous feedback exactly.
    pub fn mixture_control(
        &self,
        grid: TimeGrid,
        binning: StateBinning,
        actions: &crate::problem::ActionGrid,
        gain: f64,
    ) -> Result<RelaxedControl> {
        let n = actions.len();
        let mut weights = vec![0.0; grid.steps() * binning.bins() * n];
        for k in 0..grid.steps() {
            let t = grid.node(k);
            for b in 0..binning.bins() {
                let u = gain * self.feedback(t, binning.center(b));
                let row = &mut weights[(k * binning.bins() + b) * n..][..n];
                if u <= actions.action(0) {
                    row[0] = 1.0;
                } else if u >= actions.action(n - 1) {
                    row[n - 1] = 1.0;
                } else {
                    let mut j = 0;
                    while actions.action(j + 1) < u {
                        j += 1;
                    }
                    let lo = actions.action(j);
                    let hi = actions.action(j + 1);
                    let theta = (u - lo) / (hi - lo);
                    row[j] = 1.0 - theta;
                    row[j + 1] = theta;
                }
            }
        }
        RelaxedControl::from_weights(grid, binning, n, weights)
    }
}

/// Closed-form discrete sums for the two-action benchmark with `sigma0 = 0`
/// (horizon 1, initial state 0, running cost `(1 + kappa) x^2` along the
/// deterministic path).
pub mod two_action {
    use super::*;

    fn sum_squares(n: usize) -> f64 {
        let n = n as f64;
        n * (n + 1.0) * (2.0 * n + 1.0) / 6.0
    }

    /// Left-endpoint cost of the strict control alternating -1 / +1 over
    /// `segments` equal blocks (starting at -1) on a `k_steps` grid.
    pub fn alternating_control_cost(k_steps: usize, segments: usize, kappa: f64) -> Result<f64> {
        if segments == 0 || !segments.is_multiple_of(2) {
            return Err(Error::invalid("segments must be positive and even"));
        }
        if !k_steps.is_multiple_of(segments) {
            return Err(Error::invalid("segments must divide the step count"));
        }
        let p = k_steps / segments;
        let dt = 1.0 / k_steps as f64;
        // one down-up cycle spans 2p steps; left endpoints contribute
        // dt^2 * (S(p) + S(p-1)) with S the sum of squares
        let per_cycle = dt * dt * (sum_squares(p) + sum_squares(p - 1));
        Ok((1.0 + kappa) * dt * (segments as f64 / 2.0) * per_cycle)
    }

    /// Exact discrete cost gap of the balanced (1/2, 1/2) chattering control
    /// with even subdivision `m` on `coarse_steps` coarse steps, against the
    /// zero-cost relaxed mixture: `(1 + kappa) / (2 K^2 m^2)`.
    pub fn half_mixture_chatter_gap(coarse_steps: usize, m: usize, kappa: f64) -> Result<f64> {
        if m == 0 || !m.is_multiple_of(2) {
            return Err(Error::invalid("subdivision m must be positive and even"));
        }
        let k = coarse_steps as f64;
        let m = m as f64;
        Ok((1.0 + kappa) / (2.0 * k * k * m * m))
    }

    /// Deterministic cost of the constant mixture putting weight `w` on +1:
    /// the drift is `2w - 1` and the path is linear.
    pub fn constant_mixture_cost(k_steps: usize, w: f64, kappa: f64) -> f64 {
        let c = 2.0 * w - 1.0;
        let dt = 1.0 / k_steps as f64;
        (1.0 + kappa) * c * c * dt * dt * dt * sum_squares(k_steps - 1)
    }
}
