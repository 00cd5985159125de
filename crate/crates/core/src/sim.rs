//! Interacting-particle simulation of the controlled mean-field SDE.
//!
//! The mean `E(X_t)` is replaced by the empirical mean of all `N` particles,
//! computed with a fixed pairwise tree before any particle advances past a
//! step. Under a strict control the state follows the Euler scheme
//! `X_{k+1} = X_k + b dt + sigma dW`; under a relaxed control the drift is
//! weight-averaged over actions and the diffusion is driven by one
//! independent Brownian increment per action cell, scaled by `sqrt(weight)`:
//!
//! ```text
//! X_{k+1} = X_k + sum_i b(t, X, m, a_i) w_i dt
//!               + sum_i sigma(t, X, m, a_i) sqrt(w_i) dW_k^i
//! ```
//!
//! Increments are drawn from counter-based streams addressed by
//! `(particle, step, action)`, so a strict control reads the same stream as
//! its delta-embedding, both simulators share one step kernel, and the
//! results are bit-identical for any worker count. Per-action increments are
//! not stored; they can be regenerated exactly from the bundle's seed. Only
//! the effective increment `sum_i sqrt(w_i) dW_k^i` actually consumed by the
//! backward solvers is kept.

use std::io::Write;

use rayon::prelude::*;

use crate::controls::{BoundRelaxed, BoundStrict, RelaxedControl, StrictControl};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::problem::ProblemSpec;
use crate::rng::{substream, CounterRng};
use crate::stats::{mean_and_stderr, pairwise_sum, pairwise_sum_by};
use crate::textio::fmt_f64;

const CHUNK: usize = 1024;

/// Simulation ensemble configuration.
#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    pub particles: usize,
    pub grid: TimeGrid,
    pub seed: u64,
    /// Optional state clamp for exploratory runs; off by default.
    pub clamp: Option<(f64, f64)>,
}

impl SimConfig {
    pub fn new(particles: usize, grid: TimeGrid, seed: u64) -> Result<Self> {
        if particles < 2 {
            return Err(Error::invalid("simulation needs at least 2 particles"));
        }
        Ok(Self {
            particles,
            grid,
            seed,
            clamp: None,
        })
    }
}

/// Either kind of control, borrowed.
#[derive(Clone, Copy)]
pub enum ControlRef<'a> {
    Strict(&'a StrictControl),
    Relaxed(&'a RelaxedControl),
}

impl<'a> ControlRef<'a> {
    pub fn stamp(&self) -> u64 {
        match self {
            ControlRef::Strict(u) => u.stamp(),
            ControlRef::Relaxed(mu) => mu.stamp(),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ControlRef::Strict(u) => format!("strict {u:?}"),
            ControlRef::Relaxed(_) => "relaxed table".to_string(),
        }
    }
}

enum Driver<'a> {
    Strict(BoundStrict<'a>),
    Relaxed(BoundRelaxed<'a>),
}

impl<'a> Driver<'a> {
    fn bind(control: ControlRef<'a>, grid: &TimeGrid) -> Result<Self> {
        Ok(match control {
            ControlRef::Strict(u) => Driver::Strict(u.bind(grid)?),
            ControlRef::Relaxed(mu) => Driver::Relaxed(mu.bind(grid)?),
        })
    }

    fn anchor_period(&self) -> usize {
        match self {
            Driver::Strict(b) => b.anchor_period(),
            Driver::Relaxed(_) => 1,
        }
    }
}

pub(crate) struct KernelOutput {
    pub states: Vec<f64>,
    pub means: Vec<f64>,
    pub eff_noise: Vec<f64>,
    pub costs: Option<Vec<f64>>,
}

/// One Euler step of a single particle over the active action cells.
/// Both simulators funnel through this function, which is what makes the
/// delta-embedding equivalence bit-exact.
#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn advance_one(
    spec: &ProblemSpec,
    rng: &CounterRng,
    t: f64,
    dt: f64,
    sqrt_dt: f64,
    m: f64,
    p: usize,
    k: usize,
    x: f64,
    support: &[(usize, f64)],
    h_acc: Option<&mut f64>,
) -> (f64, f64) {
    let c = &spec.coeffs;
    let mut drift = 0.0;
    let mut diff = 0.0;
    let mut eff = 0.0;
    for &(i, w) in support {
        let a = spec.action_grid.action(i);
        drift += w * (c.b)(t, x, m, a);
        let dw = rng.normal(p as u64, k as u64, i as u64) * sqrt_dt;
        let sd = w.sqrt() * dw;
        eff += sd;
        diff += (c.sigma)(t, x, m, a) * sd;
    }
    if let Some(acc) = h_acc {
        let mut hsum = 0.0;
        for &(i, w) in support {
            hsum += w * (c.h)(t, x, m, spec.action_grid.action(i));
        }
        *acc += hsum;
    }
    (x + drift * dt + diff, eff)
}

pub(crate) fn run_kernel(
    spec: &ProblemSpec,
    control: ControlRef<'_>,
    cfg: &SimConfig,
    store_states: bool,
    want_cost: bool,
) -> Result<KernelOutput> {
    if cfg.particles < 2 {
        return Err(Error::invalid("simulation needs at least 2 particles"));
    }
    let driver = Driver::bind(control, &cfg.grid)?;
    let n = cfg.particles;
    let k_steps = cfg.grid.steps();
    let dt = cfg.grid.dt();
    let sqrt_dt = dt.sqrt();
    let rng = CounterRng::new(cfg.seed, substream::SIMULATION);
    let period = driver.anchor_period();

    let mut current = vec![spec.x0; n];
    let mut next = vec![0.0; n];
    let mut anchors = vec![spec.x0; n];
    let mut h_acc = vec![0.0; n];
    let mut states = if store_states {
        let mut s = Vec::with_capacity((k_steps + 1) * n);
        s.extend_from_slice(&current);
        s
    } else {
        Vec::new()
    };
    let mut eff_noise = vec![0.0; k_steps * n];
    let mut means = Vec::with_capacity(k_steps + 1);

    for k in 0..k_steps {
        let m = pairwise_sum(&current) / n as f64;
        means.push(m);
        let t = cfg.grid.node(k);
        let cur = &current;
        let eff_row = &mut eff_noise[k * n..(k + 1) * n];
        next.par_chunks_mut(CHUNK)
            .zip(anchors.par_chunks_mut(CHUNK))
            .zip(h_acc.par_chunks_mut(CHUNK))
            .zip(eff_row.par_chunks_mut(CHUNK))
            .enumerate()
            .for_each(|(ci, (((nx, an), hc), ef))| {
                let base = ci * CHUNK;
                let mut support: Vec<(usize, f64)> = Vec::with_capacity(spec.n_actions());
                for j in 0..nx.len() {
                    let p = base + j;
                    let x = cur[p];
                    if k % period == 0 {
                        an[j] = x;
                    }
                    support.clear();
                    match &driver {
                        Driver::Strict(b) => support.push((b.action(k, x, an[j]), 1.0)),
                        Driver::Relaxed(b) => {
                            for (i, w) in b.row(k, x).iter().enumerate() {
                                if *w > 0.0 {
                                    support.push((i, *w));
                                }
                            }
                        }
                    }
                    let acc = if want_cost { Some(&mut hc[j]) } else { None };
                    let (mut x1, eff) =
                        advance_one(spec, &rng, t, dt, sqrt_dt, m, p, k, x, &support, acc);
                    if let Some((lo, hi)) = cfg.clamp {
                        x1 = x1.clamp(lo, hi);
                    }
                    nx[j] = x1;
                    ef[j] = eff;
                }
            });
        if let Some(p) = next.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "state".into(),
                particle: p,
                step: k + 1,
            });
        }
        if store_states {
            states.extend_from_slice(&next);
        }
        std::mem::swap(&mut current, &mut next);
    }
    means.push(pairwise_sum(&current) / n as f64);

    let costs = if want_cost {
        let m_t = means[k_steps];
        let g = &spec.coeffs.g;
        let costs: Vec<f64> = (0..n)
            .map(|p| h_acc[p] * dt + g(current[p], m_t))
            .collect();
        if let Some(p) = costs.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "cost".into(),
                particle: p,
                step: k_steps,
            });
        }
        Some(costs)
    } else {
        None
    };

    if !store_states {
        states = current;
    }
    Ok(KernelOutput {
        states,
        means,
        eff_noise,
        costs,
    })
}

/// Particle ensemble produced by one simulation run.
pub struct PathBundle {
    grid: TimeGrid,
    particles: usize,
    n_actions: usize,
    seed: u64,
    /// `(K+1) x N`, step-major.
    states: Vec<f64>,
    means: Vec<f64>,
    /// `K x N`, the effective increment `sum_i sqrt(w_i) dW_k^i` per particle.
    eff_noise: Vec<f64>,
    control_stamp: u64,
    control_desc: String,
    rng: CounterRng,
}

impl std::fmt::Debug for PathBundle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "PathBundle(N={}, K={}, control={})",
            self.particles,
            self.grid.steps(),
            self.control_desc
        )
    }
}

impl PathBundle {
    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn state(&self, p: usize, k: usize) -> f64 {
        self.states[k * self.particles + p]
    }

    /// All particle states at step `k`.
    pub fn states_at(&self, k: usize) -> &[f64] {
        &self.states[k * self.particles..(k + 1) * self.particles]
    }

    pub fn mean(&self, k: usize) -> f64 {
        self.means[k]
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    #[inline]
    pub fn eff_increment(&self, p: usize, k: usize) -> f64 {
        self.eff_noise[k * self.particles + p]
    }

    pub fn eff_increments_at(&self, k: usize) -> &[f64] {
        &self.eff_noise[k * self.particles..(k + 1) * self.particles]
    }

    /// Regenerate the Brownian increment of action cell `i` at `(p, k)`.
    /// Bit-identical to the value used during simulation.
    #[inline]
    pub fn action_increment(&self, p: usize, k: usize, i: usize) -> f64 {
        self.rng.normal(p as u64, k as u64, i as u64) * self.grid.dt().sqrt()
    }

    pub fn control_stamp(&self) -> u64 {
        self.control_stamp
    }

    pub fn control_desc(&self) -> &str {
        &self.control_desc
    }

    /// Diagnostic `(1/N) sum_p sup_k |X_k|^4`.
    pub fn fourth_moment_sup(&self) -> f64 {
        let n = self.particles;
        pairwise_sum_by(0, n, &|p| {
            let mut sup = 0.0f64;
            for k in 0..=self.grid.steps() {
                sup = sup.max(self.state(p, k).abs());
            }
            sup.powi(4)
        }) / n as f64
    }

    /// Dump `(particle, step, state)` rows with a metadata header.
    pub fn export_csv<W: Write>(&self, mut w: W, problem_id: &str) -> Result<()> {
        writeln!(w, "# meanfield-control paths v1")?;
        writeln!(
            w,
            "# seed={} particles={} steps={} horizon={} problem={} control={}",
            self.seed,
            self.particles,
            self.grid.steps(),
            fmt_f64(self.grid.horizon()),
            problem_id,
            self.control_desc
        )?;
        writeln!(w, "particle,step,state")?;
        for p in 0..self.particles {
            for k in 0..=self.grid.steps() {
                writeln!(w, "{},{},{}", p, k, fmt_f64(self.state(p, k)))?;
            }
        }
        Ok(())
    }
}

fn bundle_from(
    spec: &ProblemSpec,
    control: ControlRef<'_>,
    cfg: &SimConfig,
    out: KernelOutput,
) -> PathBundle {
    PathBundle {
        grid: cfg.grid,
        particles: cfg.particles,
        n_actions: spec.n_actions(),
        seed: cfg.seed,
        states: out.states,
        means: out.means,
        eff_noise: out.eff_noise,
        control_stamp: control.stamp(),
        control_desc: control.describe(),
        rng: CounterRng::new(cfg.seed, substream::SIMULATION),
    }
}

/// Simulate the ensemble under a strict control.
pub fn simulate_strict(
    spec: &ProblemSpec,
    u: &StrictControl,
    cfg: &SimConfig,
) -> Result<PathBundle> {
    let out = run_kernel(spec, ControlRef::Strict(u), cfg, true, false)?;
    Ok(bundle_from(spec, ControlRef::Strict(u), cfg, out))
}

/// Simulate the ensemble under a relaxed control, driving the diffusion by
/// the martingale measure of the finite-action construction.
pub fn simulate_relaxed(
    spec: &ProblemSpec,
    mu: &RelaxedControl,
    cfg: &SimConfig,
) -> Result<PathBundle> {
    let out = run_kernel(spec, ControlRef::Relaxed(mu), cfg, true, false)?;
    Ok(bundle_from(spec, ControlRef::Relaxed(mu), cfg, out))
}

/// View of the martingale measure path `M([0, t] x cell)` realized by a
/// bundle under a relaxed control: the increment over action cell `i` at
/// step `k` is `sqrt(w_i(k, X_k)) dW_k^i`.
pub struct MartingaleMeasurePath<'a> {
    bundle: &'a PathBundle,
    control: &'a RelaxedControl,
    ratio: usize,
}

impl<'a> MartingaleMeasurePath<'a> {
    pub fn new(bundle: &'a PathBundle, control: &'a RelaxedControl) -> Result<Self> {
        if control.stamp() != bundle.control_stamp() {
            return Err(Error::ControlMismatch(
                "martingale measure view needs the control the bundle was simulated under".into(),
            ));
        }
        let ratio = control.grid().refinement_ratio(&bundle.grid())?;
        Ok(Self {
            bundle,
            control,
            ratio,
        })
    }

    #[inline]
    pub fn increment(&self, p: usize, k: usize, i: usize) -> f64 {
        let x = self.bundle.state(p, k);
        let row = self
            .control
            .row(k / self.ratio, self.control.binning().bin(x));
        let w = row[i];
        if w > 0.0 {
            w.sqrt() * self.bundle.action_increment(p, k, i)
        } else {
            0.0
        }
    }

    /// `M_T(cells)` for one particle.
    pub fn total(&self, p: usize, cells: &[usize]) -> f64 {
        let mut s = 0.0;
        for k in 0..self.bundle.grid().steps() {
            for &i in cells {
                s += self.increment(p, k, i);
            }
        }
        s
    }

    /// Integral of the intensity over the cells along one particle's path.
    pub fn intensity_integral(&self, p: usize, cells: &[usize]) -> f64 {
        let dt = self.bundle.grid().dt();
        let mut s = 0.0;
        for k in 0..self.bundle.grid().steps() {
            let x = self.bundle.state(p, k);
            let row = self
                .control
                .row(k / self.ratio, self.control.binning().bin(x));
            for &i in cells {
                s += row[i];
            }
        }
        s * dt
    }

    pub fn n_actions(&self) -> usize {
        self.control.n_actions()
    }

    pub fn particles(&self) -> usize {
        self.bundle.particles()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OrthogonalityCheck {
    /// `(1/N) sum_p M_T(B) M_T(C)` and its standard error.
    pub covariance: f64,
    pub stderr: f64,
}

fn check_cells(mmp: &MartingaleMeasurePath<'_>, cells: &[usize]) -> Result<()> {
    if cells.is_empty() {
        return Err(Error::invalid("action cell set must be nonempty"));
    }
    if cells.iter().any(|&i| i >= mmp.n_actions()) {
        return Err(Error::invalid("action cell index out of range"));
    }
    Ok(())
}

/// Empirical covariance of `M_T(B)` and `M_T(C)` over disjoint cell sets.
/// Zero in expectation when the martingale measure is orthogonal.
pub fn orthogonality_check(
    mmp: &MartingaleMeasurePath<'_>,
    cells_b: &[usize],
    cells_c: &[usize],
) -> Result<OrthogonalityCheck> {
    check_cells(mmp, cells_b)?;
    check_cells(mmp, cells_c)?;
    if cells_b.iter().any(|i| cells_c.contains(i)) {
        return Err(Error::OverlappingCells);
    }
    let n = mmp.particles();
    let products: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|p| mmp.total(p, cells_b) * mmp.total(p, cells_c))
        .collect();
    let (covariance, stderr) = mean_and_stderr(&products);
    Ok(OrthogonalityCheck { covariance, stderr })
}

#[derive(Debug, Clone, Copy)]
pub struct QuadraticVariationCheck {
    /// `(1/N) sum_p M_T(B)^2` and its standard error.
    pub qv: f64,
    pub qv_stderr: f64,
    /// Ensemble estimate of the covariance-measure integral over the cells.
    pub intensity: f64,
    pub intensity_stderr: f64,
}

/// Compare the realized quadratic variation of `M(., B)` with the integral
/// of its covariance measure (the relaxed control itself) over the cells.
pub fn quadratic_variation(
    mmp: &MartingaleMeasurePath<'_>,
    cells: &[usize],
) -> Result<QuadraticVariationCheck> {
    check_cells(mmp, cells)?;
    let n = mmp.particles();
    let sq: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|p| {
            let t = mmp.total(p, cells);
            t * t
        })
        .collect();
    let ints: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|p| mmp.intensity_integral(p, cells))
        .collect();
    let (qv, qv_stderr) = mean_and_stderr(&sq);
    let (intensity, intensity_stderr) = mean_and_stderr(&ints);
    Ok(QuadraticVariationCheck {
        qv,
        qv_stderr,
        intensity,
        intensity_stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controls::StateBinning;
    use crate::problem::{make_chattering_problem, make_lq_meanfield, LqParams};

    fn frozen_spec() -> ProblemSpec {
        // b = sigma = 0, h = 0, g = x^2
        let mut spec = make_lq_meanfield(
            &LqParams {
                a1: 0.0,
                a2: 0.0,
                b0: 0.0,
                s0: 0.0,
                qx: 0.0,
                qy: 0.0,
                r: 1.0,
                gx: 2.0,
                gy: 0.0,
                u_max: 1.0,
            },
            3,
            1.0,
            0.7,
        )
        .unwrap();
        spec.name = "frozen".into();
        spec
    }

    #[test]
    fn zero_dynamics_freeze_the_ensemble() {
        let spec = frozen_spec();
        let cfg = SimConfig::new(8, TimeGrid::new(1.0, 10).unwrap(), 1).unwrap();
        let u = StrictControl::constant(cfg.grid, 3, 1).unwrap();
        let paths = simulate_strict(&spec, &u, &cfg).unwrap();
        for p in 0..8 {
            for k in 0..=10 {
                assert_eq!(paths.state(p, k), 0.7);
            }
        }
        assert_eq!(paths.mean(10), 0.7);
    }

    #[test]
    fn unit_drift_advances_exactly_on_binary_grid() {
        // b = 1 via a1 = 0, b0 = 1, action +1; dt = 1/128 is a binary
        // fraction, so repeated addition stays exact.
        let params = LqParams {
            a1: 0.0,
            a2: 0.0,
            b0: 1.0,
            s0: 0.0,
            qx: 0.0,
            qy: 0.0,
            r: 1.0,
            gx: 0.0,
            gy: 0.0,
            u_max: 1.0,
        };
        let spec = make_lq_meanfield(&params, 3, 1.0, 0.25).unwrap();
        let grid = TimeGrid::new(1.0, 128).unwrap();
        let cfg = SimConfig::new(4, grid, 3).unwrap();
        let u = StrictControl::constant(grid, 3, 2).unwrap(); // action +1
        let paths = simulate_strict(&spec, &u, &cfg).unwrap();
        for k in 0..=128 {
            assert_eq!(paths.state(0, k), 0.25 + grid.node(k));
        }
    }

    #[test]
    fn delta_embedding_is_bit_identical_to_strict() {
        let spec = make_lq_meanfield(&LqParams::default(), 5, 1.0, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 40).unwrap();
        let cfg = SimConfig::new(64, grid, 99).unwrap();
        let binning = StateBinning::new(-2.0, 4.0, 16).unwrap();
        let rng = CounterRng::new(4, substream::TESTING);
        let idx: Vec<u16> = (0..40 * 16).map(|i| rng.index(i as u64, 0, 0, 5) as u16).collect();
        let u = StrictControl::from_table(grid, binning, 5, idx).unwrap();
        let mu = crate::controls::delta_embedding(&u).unwrap();
        let a = simulate_strict(&spec, &u, &cfg).unwrap();
        let b = simulate_relaxed(&spec, &mu, &cfg).unwrap();
        for p in 0..64 {
            for k in 0..=40 {
                assert_eq!(a.state(p, k).to_bits(), b.state(p, k).to_bits());
            }
            for k in 0..40 {
                assert_eq!(a.eff_increment(p, k).to_bits(), b.eff_increment(p, k).to_bits());
            }
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let spec = make_lq_meanfield(&LqParams::default(), 5, 1.0, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 25).unwrap();
        let cfg = SimConfig::new(3000, grid, 7).unwrap();
        let mu = RelaxedControl::uniform(grid, StateBinning::new(-2.0, 4.0, 8).unwrap(), 5).unwrap();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| simulate_relaxed(&spec, &mu, &cfg).unwrap())
        };
        let a = run(1);
        let b = run(8);
        for k in 0..=25 {
            assert_eq!(a.mean(k).to_bits(), b.mean(k).to_bits());
        }
        for p in 0..3000 {
            assert_eq!(a.state(p, 25).to_bits(), b.state(p, 25).to_bits());
        }
    }

    #[test]
    fn relaxed_diffusion_variance_matches_law() {
        // sigma = s constant in the action, weights (1/2, 1/2): one-step
        // conditional variance of the diffusion term is s^2 dt.
        let spec = make_chattering_problem(0.5, 0.0).unwrap();
        let grid = TimeGrid::new(1.0, 1).unwrap();
        let cfg = SimConfig::new(10_000, grid, 21).unwrap();
        let binning = StateBinning::new(-1.0, 1.0, 1).unwrap();
        let mu = RelaxedControl::constant(grid, binning, &[0.5, 0.5]).unwrap();
        let paths = simulate_relaxed(&spec, &mu, &cfg).unwrap();
        let n = cfg.particles;
        // drift is zero under (1/2, 1/2), so the step is pure diffusion
        let diffs: Vec<f64> = (0..n).map(|p| paths.state(p, 1) - paths.state(p, 0)).collect();
        let var = crate::stats::sample_variance(&diffs);
        let expect = 0.25 * grid.dt();
        let se = expect * (2.0 / (n as f64 - 1.0)).sqrt();
        assert!(
            (var - expect).abs() <= 3.0 * se,
            "var {var} expect {expect} se {se}"
        );
    }

    #[test]
    fn constant_paths_under_any_relaxed_control_without_dynamics() {
        let spec = make_chattering_problem(0.0, 0.3).unwrap();
        // b = u though; kill it by weights (1/2, 1/2) -> zero drift
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let cfg = SimConfig::new(4, grid, 5).unwrap();
        let binning = StateBinning::new(-1.0, 1.0, 1).unwrap();
        let mu = RelaxedControl::constant(grid, binning, &[0.5, 0.5]).unwrap();
        let paths = simulate_relaxed(&spec, &mu, &cfg).unwrap();
        for p in 0..4 {
            assert_eq!(paths.state(p, 16), 0.0);
        }
    }

    #[test]
    fn non_finite_state_is_reported_with_location() {
        let mut spec = frozen_spec();
        spec.coeffs.b = std::sync::Arc::new(|_, x, _, _| (x + 1.0) * 1e308);
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let cfg = SimConfig::new(4, grid, 1).unwrap();
        let u = StrictControl::constant(grid, 3, 0).unwrap();
        match simulate_strict(&spec, &u, &cfg) {
            Err(Error::NonFinite { step, .. }) => assert!(step >= 1),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn orthogonality_rejects_overlap() {
        let spec = make_chattering_problem(0.3, 0.0).unwrap();
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let cfg = SimConfig::new(16, grid, 2).unwrap();
        let binning = StateBinning::new(-1.0, 1.0, 1).unwrap();
        let mu = RelaxedControl::constant(grid, binning, &[0.5, 0.5]).unwrap();
        let paths = simulate_relaxed(&spec, &mu, &cfg).unwrap();
        let mmp = MartingaleMeasurePath::new(&paths, &mu).unwrap();
        assert!(matches!(
            orthogonality_check(&mmp, &[0], &[0]),
            Err(Error::OverlappingCells)
        ));
        assert!(orthogonality_check(&mmp, &[0], &[1]).is_ok());
    }

    #[test]
    fn means_match_recomputation_exactly() {
        let spec = make_lq_meanfield(&LqParams::default(), 5, 1.0, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 12).unwrap();
        let cfg = SimConfig::new(500, grid, 11).unwrap();
        let u = StrictControl::constant(grid, 5, 2).unwrap();
        let paths = simulate_strict(&spec, &u, &cfg).unwrap();
        for k in 0..=12 {
            let m = pairwise_sum(paths.states_at(k)) / 500.0;
            assert_eq!(m.to_bits(), paths.mean(k).to_bits());
        }
    }
}
