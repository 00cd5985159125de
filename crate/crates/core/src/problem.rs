//! Control problem definitions: coefficients, derivatives, action grid, and
//! the built-in benchmark problems.
//!
//! A problem is given by drift `b(t, x, y, a)`, diffusion `sigma(t, x, y, a)`,
//! running cost `h(t, x, y, a)` and terminal cost `g(x, y)`, where `y` stands
//! for the mean `E(X_t)`. All evaluators must be pure and cheap; they are
//! called from many workers at once.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::rng::{substream, CounterRng};

/// Evaluator of `(t, x, y, a) -> f64`.
pub type Coeff = Arc<dyn Fn(f64, f64, f64, f64) -> f64 + Send + Sync>;
/// Evaluator of `(x, y) -> f64` (terminal cost and its partials).
pub type TerminalCoeff = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Finite, strictly increasing set of admissible actions.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionGrid {
    actions: Vec<f64>,
}

impl ActionGrid {
    pub fn new(actions: Vec<f64>) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::invalid("action grid must contain at least one action"));
        }
        for w in actions.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::invalid(format!(
                    "actions must be strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if actions.iter().any(|a| !a.is_finite()) {
            return Err(Error::invalid("actions must be finite"));
        }
        Ok(Self { actions })
    }

    /// `n` actions uniformly spaced on `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("uniform action grid needs n >= 2"));
        }
        if !(lo < hi) {
            return Err(Error::invalid("uniform action grid needs lo < hi"));
        }
        let step = (hi - lo) / (n - 1) as f64;
        let actions = (0..n)
            .map(|i| if i + 1 == n { hi } else { lo + i as f64 * step })
            .collect();
        Self::new(actions)
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn action(&self, i: usize) -> f64 {
        self.actions[i]
    }

    pub fn actions(&self) -> &[f64] {
        &self.actions
    }

    /// Index of the grid action closest to `u`; ties go to the lower index.
    pub fn nearest(&self, u: f64) -> usize {
        let mut best = 0;
        let mut dist = (self.actions[0] - u).abs();
        for (i, a) in self.actions.iter().enumerate().skip(1) {
            let d = (a - u).abs();
            if d < dist {
                dist = d;
                best = i;
            }
        }
        best
    }
}

/// All coefficient evaluators of a problem, including the partial
/// derivatives the adjoint equations need.
#[derive(Clone)]
pub struct Coefficients {
    pub b: Coeff,
    pub sigma: Coeff,
    pub h: Coeff,
    pub g: TerminalCoeff,
    pub b_x: Coeff,
    pub b_y: Coeff,
    pub b_xx: Coeff,
    pub sigma_x: Coeff,
    pub sigma_y: Coeff,
    pub sigma_xx: Coeff,
    pub h_x: Coeff,
    pub h_y: Coeff,
    pub h_xx: Coeff,
    pub g_x: TerminalCoeff,
    pub g_y: TerminalCoeff,
    pub g_xx: TerminalCoeff,
}

/// A complete control problem instance.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub horizon: f64,
    pub x0: f64,
    pub action_grid: ActionGrid,
    pub coeffs: Coefficients,
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("horizon", &self.horizon)
            .field("x0", &self.x0)
            .field("actions", &self.action_grid.len())
            .finish()
    }
}

impl ProblemSpec {
    pub fn new(
        name: impl Into<String>,
        horizon: f64,
        x0: f64,
        action_grid: ActionGrid,
        coeffs: Coefficients,
    ) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::invalid("horizon must be positive and finite"));
        }
        if !x0.is_finite() {
            return Err(Error::invalid("x0 must be finite"));
        }
        Ok(Self {
            name: name.into(),
            horizon,
            x0,
            action_grid,
            coeffs,
        })
    }

    pub fn n_actions(&self) -> usize {
        self.action_grid.len()
    }
}

/// Parameters of the linear-quadratic benchmark:
/// `dX = (a1 X + a2 E(X) + b0 u) dt + s0 dW`,
/// `h = (qx x^2 + qy y^2 + r u^2) / 2`, `g = (gx x^2 + gy y^2) / 2`,
/// actions uniform on `[-u_max, u_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqParams {
    pub a1: f64,
    pub a2: f64,
    pub b0: f64,
    pub s0: f64,
    pub qx: f64,
    pub qy: f64,
    pub r: f64,
    pub gx: f64,
    pub gy: f64,
    pub u_max: f64,
}

impl LqParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0) {
            return Err(Error::invalid("LQ weight r must be positive"));
        }
        if self.qx < 0.0 || self.gx < 0.0 {
            return Err(Error::invalid("LQ weights qx, gx must be nonnegative"));
        }
        if !(self.u_max > 0.0) {
            return Err(Error::invalid("LQ action half-width u_max must be positive"));
        }
        let all = [
            self.a1, self.a2, self.b0, self.s0, self.qx, self.qy, self.r, self.gx, self.gy,
            self.u_max,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("LQ parameters must be finite"));
        }
        Ok(())
    }
}

impl Default for LqParams {
    fn default() -> Self {
        Self {
            a1: 0.3,
            a2: 0.4,
            b0: 0.7,
            s0: 0.2,
            qx: 1.0,
            qy: 0.5,
            r: 1.0,
            gx: 0.5,
            gy: 0.5,
            u_max: 2.5,
        }
    }
}

/// Linear-quadratic mean-field benchmark with `n_actions` uniformly spaced
/// actions. The deterministic solver in [`crate::reference`] gives its
/// optimal feedback, costate and value.
pub fn make_lq_meanfield(
    params: &LqParams,
    n_actions: usize,
    horizon: f64,
    x0: f64,
) -> Result<ProblemSpec> {
    params.validate()?;
    if n_actions < 2 {
        return Err(Error::invalid("LQ benchmark needs n_actions >= 2"));
    }
    let grid = ActionGrid::uniform(-params.u_max, params.u_max, n_actions)?;
    let p = *params;
    let zero: Coeff = Arc::new(|_, _, _, _| 0.0);
    let coeffs = Coefficients {
        b: Arc::new(move |_t, x, y, a| p.a1 * x + p.a2 * y + p.b0 * a),
        sigma: Arc::new(move |_t, _x, _y, _a| p.s0),
        h: Arc::new(move |_t, x, y, a| 0.5 * (p.qx * x * x + p.qy * y * y + p.r * a * a)),
        g: Arc::new(move |x, y| 0.5 * (p.gx * x * x + p.gy * y * y)),
        b_x: Arc::new(move |_, _, _, _| p.a1),
        b_y: Arc::new(move |_, _, _, _| p.a2),
        b_xx: zero.clone(),
        sigma_x: zero.clone(),
        sigma_y: zero.clone(),
        sigma_xx: zero.clone(),
        h_x: Arc::new(move |_, x, _, _| p.qx * x),
        h_y: Arc::new(move |_, _, y, _| p.qy * y),
        h_xx: Arc::new(move |_, _, _, _| p.qx),
        g_x: Arc::new(move |x, _| p.gx * x),
        g_y: Arc::new(move |_, y| p.gy * y),
        g_xx: Arc::new(move |_, _| p.gx),
    };
    ProblemSpec::new("lq_meanfield", horizon, x0, grid, coeffs)
}

/// Nonconvex two-action benchmark: actions `{-1, +1}`,
/// `dX = u dt + sigma0 dW`, `h = x^2 + kappa y^2`, `g = 0`, `x0 = 0`, `T = 1`.
///
/// With `sigma0 = 0` the relaxed mixture `(1/2, 1/2)` holds the state at zero
/// for zero cost, while every strict control pays for the excursions it
/// cannot avoid.
pub fn make_chattering_problem(sigma0: f64, kappa: f64) -> Result<ProblemSpec> {
    if sigma0 < 0.0 || !sigma0.is_finite() {
        return Err(Error::invalid("sigma0 must be nonnegative and finite"));
    }
    if kappa < 0.0 || !kappa.is_finite() {
        return Err(Error::invalid("kappa must be nonnegative and finite"));
    }
    let grid = ActionGrid::new(vec![-1.0, 1.0])?;
    let zero: Coeff = Arc::new(|_, _, _, _| 0.0);
    let zero2: TerminalCoeff = Arc::new(|_, _| 0.0);
    let coeffs = Coefficients {
        b: Arc::new(|_t, _x, _y, a| a),
        sigma: Arc::new(move |_t, _x, _y, _a| sigma0),
        h: Arc::new(move |_t, x, y, _a| x * x + kappa * y * y),
        g: Arc::new(|_, _| 0.0),
        b_x: zero.clone(),
        b_y: zero.clone(),
        b_xx: zero.clone(),
        sigma_x: zero.clone(),
        sigma_y: zero.clone(),
        sigma_xx: zero.clone(),
        h_x: Arc::new(|_, x, _, _| 2.0 * x),
        h_y: Arc::new(move |_, _, y, _| 2.0 * kappa * y),
        h_xx: Arc::new(|_, _, _, _| 2.0),
        g_x: zero2.clone(),
        g_y: zero2.clone(),
        g_xx: zero2,
    };
    ProblemSpec::new("chattering", 1.0, 0.0, grid, coeffs)
}

/// Box of `(t, x, y)` values over which derivative consistency is sampled.
#[derive(Debug, Clone, Copy)]
pub struct SamplingBox {
    pub t: (f64, f64),
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl SamplingBox {
    /// Box centered on the problem's initial state, three units wide.
    pub fn around(spec: &ProblemSpec) -> Self {
        let c = spec.x0;
        let w = 3.0_f64.max(c.abs());
        Self {
            t: (0.0, spec.horizon),
            x: (c - w, c + w),
            y: (c - w, c + w),
        }
    }
}

/// Outcome of one derivative check.
#[derive(Debug, Clone)]
pub struct DerivativeCheck {
    pub name: &'static str,
    pub worst_rel_error: f64,
    /// `(t, x, y, a)` where the worst error occurred.
    pub worst_point: (f64, f64, f64, f64),
    pub ok: bool,
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub checks: Vec<DerivativeCheck>,
    pub tol: f64,
}

impl ValidationReport {
    pub fn all_ok(&self) -> bool {
        self.checks.iter().all(|c| c.ok)
    }

    pub fn failures(&self) -> Vec<&DerivativeCheck> {
        self.checks.iter().filter(|c| !c.ok).collect()
    }
}

fn rel_err(fd: f64, ana: f64) -> f64 {
    (fd - ana).abs() / ana.abs().max(1.0)
}

/// Check every supplied partial derivative against central finite
/// differences of its parent function at `samples` points drawn from `bx`
/// (and every grid action). Fails if any relative error exceeds `tol`;
/// a non-finite evaluation is reported as an error naming the point.
pub fn validate_problem(
    spec: &ProblemSpec,
    bx: &SamplingBox,
    samples: usize,
    step: f64,
    tol: f64,
) -> Result<ValidationReport> {
    if samples == 0 {
        return Err(Error::invalid("validate_problem needs samples >= 1"));
    }
    if !(step > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let rng = CounterRng::new(0x5eed, substream::VALIDATION);
    let span = |r: (f64, f64), u: f64| r.0 + (r.1 - r.0) * u;
    let points: Vec<(f64, f64, f64)> = (0..samples)
        .map(|i| {
            (
                span(bx.t, rng.uniform(i as u64, 0, 0)),
                span(bx.x, rng.uniform(i as u64, 1, 0)),
                span(bx.y, rng.uniform(i as u64, 2, 0)),
            )
        })
        .collect();

    let c = &spec.coeffs;
    // (name, parent, derivative, axis, order): axis 0 = x, 1 = y
    type Check<'a> = (&'static str, &'a Coeff, &'a Coeff, usize, usize);
    let checks4: Vec<Check> = vec![
        ("b_x", &c.b, &c.b_x, 0, 1),
        ("b_y", &c.b, &c.b_y, 1, 1),
        ("b_xx", &c.b, &c.b_xx, 0, 2),
        ("sigma_x", &c.sigma, &c.sigma_x, 0, 1),
        ("sigma_y", &c.sigma, &c.sigma_y, 1, 1),
        ("sigma_xx", &c.sigma, &c.sigma_xx, 0, 2),
        ("h_x", &c.h, &c.h_x, 0, 1),
        ("h_y", &c.h, &c.h_y, 1, 1),
        ("h_xx", &c.h, &c.h_xx, 0, 2),
    ];

    let mut out = Vec::new();
    for (name, parent, deriv, axis, order) in checks4 {
        let mut worst = 0.0f64;
        let mut where_ = (0.0, 0.0, 0.0, 0.0);
        for &(t, x, y) in &points {
            for &a in spec.action_grid.actions() {
                let eval = |dx: f64, dy: f64| parent(t, x + dx, y + dy, a);
                let (hi, lo) = if axis == 0 { (step, 0.0) } else { (0.0, step) };
                let fd = match order {
                    1 => (eval(hi, lo) - eval(-hi, -lo)) / (2.0 * step),
                    _ => (eval(hi, lo) - 2.0 * eval(0.0, 0.0) + eval(-hi, -lo)) / (step * step),
                };
                let ana = deriv(t, x, y, a);
                if !fd.is_finite() || !ana.is_finite() {
                    return Err(Error::invalid(format!(
                        "{name} non-finite at (t={t}, x={x}, y={y}, a={a})"
                    )));
                }
                let e = rel_err(fd, ana);
                if e > worst {
                    worst = e;
                    where_ = (t, x, y, a);
                }
            }
        }
        out.push(DerivativeCheck {
            name,
            worst_rel_error: worst,
            worst_point: where_,
            ok: worst <= tol,
        });
    }

    type CheckG<'a> = (&'static str, &'a TerminalCoeff, usize, usize);
    let checks2: Vec<CheckG> = vec![
        ("g_x", &c.g_x, 0, 1),
        ("g_y", &c.g_y, 1, 1),
        ("g_xx", &c.g_xx, 0, 2),
    ];
    for (name, deriv, axis, order) in checks2 {
        let mut worst = 0.0f64;
        let mut where_ = (0.0, 0.0, 0.0, 0.0);
        for &(_t, x, y) in &points {
            let eval = |dx: f64, dy: f64| (c.g)(x + dx, y + dy);
            let (hi, lo) = if axis == 0 { (step, 0.0) } else { (0.0, step) };
            let fd = match order {
                1 => (eval(hi, lo) - eval(-hi, -lo)) / (2.0 * step),
                _ => (eval(hi, lo) - 2.0 * eval(0.0, 0.0) + eval(-hi, -lo)) / (step * step),
            };
            let ana = deriv(x, y);
            if !fd.is_finite() || !ana.is_finite() {
                return Err(Error::invalid(format!("{name} non-finite at (x={x}, y={y})")));
            }
            let e = rel_err(fd, ana);
            if e > worst {
                worst = e;
                where_ = (0.0, x, y, 0.0);
            }
        }
        out.push(DerivativeCheck {
            name,
            worst_rel_error: worst,
            worst_point: where_,
            ok: worst <= tol,
        });
    }

    Ok(ValidationReport { checks: out, tol })
}
