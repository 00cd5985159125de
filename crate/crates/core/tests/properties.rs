//! Invariant and diagnostic checks that complement the acceptance criteria:
//! reduction determinism, metric properties of the control distance,
//! chattering occupation bounds as a stable-convergence proxy, moment and
//! variance scalings of the particle system, cost continuity in the control
//! distance, adjoint martingality/integrability/stability echoes, and
//! residual sign behavior of the maximum-principle report.

use meanfield_control::bsde::{solve_first_order, solve_second_order};
use meanfield_control::controls::{
    chattering, control_distance, delta_embedding, ChatteringSchedule, RelaxedControl,
    StateBinning, StrictControl,
};
use meanfield_control::cost::estimate_cost;
use meanfield_control::optimizer::{optimize, OptimizerConfig, SeedPolicy};
use meanfield_control::problem::{make_lq_meanfield, LqParams};
use meanfield_control::reference::LqSolution;
use meanfield_control::regression::RegressionBasis;
use meanfield_control::rng::{substream, CounterRng};
use meanfield_control::sim::{simulate_relaxed, simulate_strict, ControlRef, SimConfig};
use meanfield_control::smp::smp_residual;
use meanfield_control::stats::{pairwise_sum_by, sample_variance};
use meanfield_control::TimeGrid;

use proptest::prelude::*;

fn lq() -> meanfield_control::ProblemSpec {
    make_lq_meanfield(&LqParams::default(), 5, 1.0, 1.0).unwrap()
}

fn random_table(grid: TimeGrid, binning: StateBinning, n: usize, seed: u64) -> StrictControl {
    let rng = CounterRng::new(seed, substream::TESTING);
    let idx: Vec<u16> = (0..grid.steps() * binning.bins())
        .map(|i| rng.index(i as u64, 0, 0, n) as u16)
        .collect();
    StrictControl::from_table(grid, binning, n, idx).unwrap()
}

#[test]
fn control_distance_is_a_metric_on_samples() {
    let spec = lq();
    let grid = TimeGrid::new(1.0, 40).unwrap();
    let cfg = SimConfig::new(64, grid, 5).unwrap();
    let binning = StateBinning::new(-2.0, 4.0, 8).unwrap();
    let u = random_table(grid, binning, 5, 1);
    let v = random_table(grid, binning, 5, 2);
    let w = random_table(grid, binning, 5, 3);
    let paths = simulate_strict(&spec, &u, &cfg).unwrap();

    let duu = control_distance(&u, &u, &paths).unwrap();
    assert_eq!(duu, 0.0);
    let duv = control_distance(&u, &v, &paths).unwrap();
    let dvu = control_distance(&v, &u, &paths).unwrap();
    assert_eq!(duv, dvu);
    assert!((0.0..=1.0 + 1e-15).contains(&duv));
    let duw = control_distance(&u, &w, &paths).unwrap();
    let dvw = control_distance(&v, &w, &paths).unwrap();
    assert!(duw <= duv + dvw + 1e-15, "triangle: {duw} vs {duv} + {dvw}");
}

#[test]
fn control_distance_measures_disagreement_sets() {
    let spec = lq();
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let cfg = SimConfig::new(16, grid, 7).unwrap();
    // differ exactly on t in [0, 1/2)
    let u = StrictControl::constant(grid, 5, 0).unwrap();
    let v = StrictControl::from_rule(grid, 5, "half", |k, _| usize::from(k < 50) * 2);
    let paths = simulate_strict(&spec, &u, &cfg).unwrap();
    let d = control_distance(&u, &v, &paths).unwrap();
    assert_eq!(d, 0.5);
}

#[test]
fn grid_mismatch_is_rejected_by_distance() {
    let spec = lq();
    let grid = TimeGrid::new(1.0, 40).unwrap();
    let other = TimeGrid::new(1.0, 30).unwrap();
    let cfg = SimConfig::new(16, grid, 7).unwrap();
    let u = StrictControl::constant(grid, 5, 0).unwrap();
    let v = StrictControl::constant(other, 5, 1).unwrap();
    let paths = simulate_strict(&spec, &u, &cfg).unwrap();
    assert!(control_distance(&u, &v, &paths).is_err());
}

#[test]
fn chattering_time_action_averages_converge_at_rate_one_over_m() {
    // stable-convergence proxy: for a bounded table f(k, a), the occupation
    // average of the chattered control approaches the weight average with
    // error at most n * max|f| * T / m.
    let grid = TimeGrid::new(1.0, 20).unwrap();
    let binning = StateBinning::new(-1.0, 1.0, 1).unwrap();
    let rng = CounterRng::new(42, substream::TESTING);
    let n = 4usize;
    let weights: Vec<f64> = (0..20).flat_map(|k| {
        let mut row: Vec<f64> = (0..n).map(|i| rng.uniform(k, i as u64, 0) + 0.05).collect();
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|w| *w /= s);
        row
    }).collect();
    let mu = RelaxedControl::from_weights(grid, binning, n, weights).unwrap();
    let f = |k: usize, i: usize| ((k * 7 + i * 3) % 5) as f64 - 2.0; // bounded test table
    let fmax = 2.0;

    let target: f64 = (0..20)
        .map(|k| grid.dt() * (0..n).map(|i| mu.row(k, 0)[i] * f(k, i)).sum::<f64>())
        .sum();
    for m in [4usize, 16, 64] {
        let chat = chattering(&ChatteringSchedule::new(mu.clone(), m).unwrap()).unwrap();
        let fine = grid.refine(m).unwrap();
        let bound = chat.bind(&fine).unwrap();
        let mut acc = 0.0;
        for kf in 0..fine.steps() {
            let a = bound.action(kf, 0.0, 0.0);
            acc += fine.dt() * f(kf / m, a);
        }
        let dev = (acc - target).abs();
        let bound_val = n as f64 * fmax * grid.horizon() / m as f64;
        assert!(dev <= bound_val + 1e-12, "m={m}: dev {dev} > {bound_val}");
    }
}

#[test]
fn fourth_moment_diagnostic_is_stable_under_doubling() {
    let spec = lq();
    let grid = TimeGrid::new(1.0, 50).unwrap();
    let binning = StateBinning::new(-1.0, 3.0, 8).unwrap();
    let mu = RelaxedControl::uniform(grid, binning, 5).unwrap();
    let m1 = {
        let cfg = SimConfig::new(4000, grid, 11).unwrap();
        simulate_relaxed(&spec, &mu, &cfg).unwrap().fourth_moment_sup()
    };
    let m2 = {
        let cfg = SimConfig::new(8000, grid, 12).unwrap();
        simulate_relaxed(&spec, &mu, &cfg).unwrap().fourth_moment_sup()
    };
    assert!(m1.is_finite() && m2.is_finite());
    let ratio = m2 / m1;
    assert!(ratio > 0.8 && ratio < 1.25, "fourth moment ratio {ratio}");
}

#[test]
fn mean_estimator_variance_scales_inversely_with_n() {
    let spec = lq();
    let grid = TimeGrid::new(1.0, 20).unwrap();
    let binning = StateBinning::new(-1.0, 3.0, 1).unwrap();
    let mu = RelaxedControl::uniform(grid, binning, 5).unwrap();
    let seeds = 48u64;
    let mut log_n = Vec::new();
    let mut log_var = Vec::new();
    for n in [250usize, 500, 1000, 2000] {
        let finals: Vec<f64> = (0..seeds)
            .map(|s| {
                let cfg = SimConfig::new(n, grid, 1000 + s).unwrap();
                simulate_relaxed(&spec, &mu, &cfg).unwrap().mean(20)
            })
            .collect();
        log_n.push((n as f64).ln());
        log_var.push(sample_variance(&finals).ln());
    }
    // least-squares slope of log variance against log N
    let mx = log_n.iter().sum::<f64>() / 4.0;
    let my = log_var.iter().sum::<f64>() / 4.0;
    let sxy: f64 = log_n.iter().zip(&log_var).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = log_n.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    assert!(
        (slope + 1.0).abs() <= 0.2,
        "variance scaling slope {slope}, expected -1 +- 0.2"
    );
}

#[test]
fn cost_is_continuous_in_the_control_distance() {
    let spec = lq();
    let grid = TimeGrid::new(1.0, 64).unwrap();
    let cfg = SimConfig::new(2048, grid, 77).unwrap();
    let u = StrictControl::constant(grid, 5, 2).unwrap();
    let paths_u = simulate_strict(&spec, &u, &cfg).unwrap();
    let j_u = estimate_cost(&spec, &paths_u, ControlRef::Strict(&u)).unwrap();

    // shrink the disagreement window; the cost gap must follow it down
    // (monotonically, up to noise), with no constant estimated
    let mut prev_gap = f64::INFINITY;
    let mut prev_d = f64::INFINITY;
    let mut first_gap = 0.0;
    let mut last_gap = 0.0;
    for j in 1..=6 {
        let cut = 64usize >> j; // differ on the first `cut` steps
        let v = StrictControl::from_rule(grid, 5, format!("cut{cut}"), move |k, _| {
            if k < cut {
                4
            } else {
                2
            }
        });
        let paths_v = simulate_strict(&spec, &v, &cfg).unwrap();
        let j_v = estimate_cost(&spec, &paths_v, ControlRef::Strict(&v)).unwrap();
        let d = control_distance(&u, &v, &paths_u).unwrap();
        let gap = (j_u.value - j_v.value).abs();
        let slack = 3.0 * (j_u.stderr.powi(2) + j_v.stderr.powi(2)).sqrt();
        assert!(d < prev_d);
        assert!(
            gap <= prev_gap + slack,
            "gap {gap} did not shrink (prev {prev_gap}, slack {slack})"
        );
        if j == 1 {
            first_gap = gap;
        }
        last_gap = gap;
        prev_gap = gap;
        prev_d = d;
    }
    assert!(
        last_gap < 0.2 * first_gap,
        "gap did not decay: {last_gap} vs initial {first_gap}"
    );
}

#[test]
fn adjoint_residuals_are_centered_per_step() {
    let spec = lq();
    let grid = TimeGrid::new(1.0, 30).unwrap();
    let binning = StateBinning::new(-1.0, 3.0, 8).unwrap();
    let mu = RelaxedControl::uniform(grid, binning, 5).unwrap();
    let cfg = SimConfig::new(2048, grid, 21).unwrap();
    let paths = simulate_relaxed(&spec, &mu, &cfg).unwrap();
    let adj = solve_first_order(&spec, &paths, &mu, &RegressionBasis::default()).unwrap();
    for (k, (mean, se)) in adj.per_step_residual.iter().enumerate() {
        let slack = 3.0 * se + 1e-12;
        assert!(mean.abs() <= slack, "step {k}: residual mean {mean} vs {slack}");
    }
}

#[test]
fn adjoint_diagnostics_are_stable_under_doubling() {
    let spec = lq();
    let grid = TimeGrid::new(1.0, 40).unwrap();
    let binning = StateBinning::new(-1.0, 3.0, 64).unwrap();
    let params = LqParams::default();
    let reference = LqSolution::solve(&params, 1.0, 1.0, 2000).unwrap();
    let mix = reference
        .mixture_control(grid, binning, &spec.action_grid, 1.0)
        .unwrap();
    let solve_at = |n: usize, seed: u64| {
        let cfg = SimConfig::new(n, grid, seed).unwrap();
        let paths = simulate_relaxed(&spec, &mix, &cfg).unwrap();
        let adj = solve_first_order(&spec, &paths, &mix, &RegressionBasis::default()).unwrap();
        (
            adj.diagnostics.sup_value,
            adj.diagnostics.q_sq_integral,
            adj.residual_qv,
        )
    };
    let (sup1, qsq1, rqv1) = solve_at(4096, 31);
    let (sup2, qsq2, rqv2) = solve_at(8192, 32);
    for (a, b, what) in [
        (sup1, sup2, "sup |p|"),
        (qsq1, qsq2, "int q^2"),
        (rqv1, rqv2, "residual qv"),
    ] {
        assert!(a.is_finite() && b.is_finite());
        let ratio = b / a;
        assert!(ratio > 0.8 && ratio < 1.25, "{what} ratio {ratio}");
    }
}

#[test]
fn adjoint_solutions_stabilize_as_controls_approach() {
    // gain-perturbed nearest-action feedback tables: as the gain approaches
    // one, both the control distance and the L2 distance of the first-order
    // adjoint shrink monotonically.
    let spec = lq();
    let params = LqParams::default();
    let reference = LqSolution::solve(&params, 1.0, 1.0, 2000).unwrap();
    let grid = TimeGrid::new(1.0, 40).unwrap();
    let binning = StateBinning::new(-1.0, 3.0, 64).unwrap();
    let cfg = SimConfig::new(4096, grid, 41).unwrap();
    let basis = RegressionBasis::default();

    let table_at = |gain: f64| {
        reference
            .feedback_rule(grid, &spec.action_grid, gain)
            .tabulate(binning)
            .unwrap()
    };
    let base_table = table_at(1.0);
    let base_mu = delta_embedding(&base_table).unwrap();
    let base_paths = simulate_relaxed(&spec, &base_mu, &cfg).unwrap();
    let base_adj = solve_first_order(&spec, &base_paths, &base_mu, &basis).unwrap();

    let n = cfg.particles;
    let k_steps = grid.steps();
    let mut prev_d = f64::INFINITY;
    let mut prev_l2 = f64::INFINITY;
    for gain in [1.6, 1.3, 1.1] {
        let tab = table_at(gain);
        let mu = delta_embedding(&tab).unwrap();
        let paths = simulate_relaxed(&spec, &mu, &cfg).unwrap();
        let adj = solve_first_order(&spec, &paths, &mu, &basis).unwrap();
        let d = control_distance(&base_table, &tab, &base_paths).unwrap();
        let l2 = (pairwise_sum_by(0, (k_steps + 1) * n, &|i| {
            let diff = adj.p[i] - base_adj.p[i];
            diff * diff
        }) / ((k_steps + 1) * n) as f64)
            .sqrt();
        assert!(d <= prev_d + 1e-15, "distance did not shrink: {d} vs {prev_d}");
        assert!(l2 <= prev_l2 + 1e-12, "p distance did not shrink: {l2} vs {prev_l2}");
        prev_d = d;
        prev_l2 = l2;
    }
}

#[test]
fn residual_is_nonnegative_for_constant_measure_controls() {
    let spec = lq();
    let grid = TimeGrid::new(1.0, 40).unwrap();
    let binning = StateBinning::new(-1.0, 3.0, 1).unwrap();
    let cfg = SimConfig::new(2048, grid, 51).unwrap();
    let basis = RegressionBasis::default();
    let rng = CounterRng::new(0x51, substream::TESTING);
    for trial in 0..3u64 {
        let mut row: Vec<f64> = (0..5).map(|i| rng.uniform(trial, i, 0) + 0.02).collect();
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|w| *w /= s);
        let mu = RelaxedControl::constant(grid, binning, &row).unwrap();
        let paths = simulate_relaxed(&spec, &mu, &cfg).unwrap();
        let adj1 = solve_first_order(&spec, &paths, &mu, &basis).unwrap();
        let adj2 = solve_second_order(&spec, &paths, &mu, &adj1, &basis).unwrap();
        let report = smp_residual(&spec, &paths, &mu, &adj1, &adj2).unwrap();
        assert!(
            report.global_residual >= -3.0 * report.residual_stderr,
            "constant-measure residual {} below -3 x {}",
            report.global_residual,
            report.residual_stderr
        );
        // pointwise/global consistency when the residual is positive
        if report.global_residual >= 0.0 {
            let dt = grid.dt();
            let integrated: f64 = report
                .per_time_violation
                .iter()
                .map(|v| dt * v.max(0.0))
                .sum();
            assert!(
                integrated >= report.global_residual - 3.0 * report.residual_stderr,
                "pointwise profile {integrated} below global {}",
                report.global_residual
            );
        }
        // the pointwise residual never goes negative
        assert!(report.pointwise_residual >= -1e-12);
    }
}

#[test]
fn optimizer_improves_the_residual_over_iterations() {
    let spec = lq();
    let grid = TimeGrid::new(1.0, 40).unwrap();
    let binning = StateBinning::new(-1.0, 3.0, 16).unwrap();
    let init = RelaxedControl::uniform(grid, binning, 5).unwrap();
    let sim = SimConfig::new(1024, grid, 61).unwrap();
    let cfg = OptimizerConfig {
        max_iters: 11,
        damping: 0.5,
        tolerance: 1e-9,
        basis: RegressionBasis::default(),
        seed_policy: SeedPolicy::Fixed,
        stall_patience: 20,
    };
    let (_, trace) = optimize(&spec, &init, &cfg, &sim).unwrap();
    assert!(trace.iterations.len() >= 11);
    assert!(
        trace.iterations[10].residual < trace.iterations[0].residual,
        "residual did not improve: {} vs {}",
        trace.iterations[10].residual,
        trace.iterations[0].residual
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weight_rows_always_normalize(raw in proptest::collection::vec(0.0f64..10.0, 6)) {
        let total: f64 = raw.iter().sum();
        prop_assume!(total > 1e-6);
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let binning = StateBinning::new(-1.0, 1.0, 1).unwrap();
        let mu = RelaxedControl::constant(grid, binning, &raw).unwrap();
        for k in 0..2 {
            let sum: f64 = mu.row(k, 0).iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn serialization_round_trips_bitwise(raw in proptest::collection::vec(1e-6f64..1.0, 12)) {
        let grid = TimeGrid::new(1.0, 3).unwrap();
        let binning = StateBinning::new(-1.0, 1.0, 2).unwrap();
        let mu = RelaxedControl::from_weights(grid, binning, 2, raw).unwrap();
        let mut buf = Vec::new();
        mu.write_to(&mut buf).unwrap();
        let back = RelaxedControl::read_from(&buf[..]).unwrap();
        for (a, b) in mu.weights().iter().zip(back.weights()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn chattering_occupation_respects_quota_bound(
        raw in proptest::collection::vec(0.01f64..1.0, 3),
        m in 1usize..40,
    ) {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let binning = StateBinning::new(-1.0, 1.0, 1).unwrap();
        let mu = RelaxedControl::constant(grid, binning, &raw).unwrap();
        let weights: Vec<f64> = mu.row(0, 0).to_vec();
        let chat = chattering(&ChatteringSchedule::new(mu, m).unwrap()).unwrap();
        let occ = meanfield_control::controls::occupation_fractions(&chat).unwrap();
        for (o, w) in occ.iter().zip(&weights) {
            prop_assert!((o - w).abs() <= 3.0 / m as f64 + 1e-12);
        }
    }
}

#[test]
fn empirical_mean_follows_the_mean_ode() {
    // constant control: closed-form mean
    // m(t) = e^{at} x0 + b0 u (e^{at} - 1) / a with a = a1 + a2
    let spec = lq();
    let params = LqParams::default();
    let grid = TimeGrid::new(1.0, 200).unwrap();
    let cfg = SimConfig::new(10_000, grid, 91).unwrap();
    let u = StrictControl::constant(grid, 5, 3).unwrap(); // action 1.25
    let action = spec.action_grid.action(3);
    let paths = simulate_strict(&spec, &u, &cfg).unwrap();
    let a = params.a1 + params.a2;
    let k = grid.steps();
    let t = grid.node(k);
    let expect = (a * t).exp() * 1.0 + params.b0 * action * ((a * t).exp() - 1.0) / a;
    let se = (sample_variance(paths.states_at(k)) / cfg.particles as f64).sqrt();
    assert!(
        (paths.mean(k) - expect).abs() <= 3.0 * se + 0.005,
        "constant-control mean {} vs ODE {} (se {se})",
        paths.mean(k),
        expect
    );

    // reference mixture: the mean action equals the continuous feedback, so
    // the empirical mean tracks the reference mean path
    let reference = LqSolution::solve(&params, 1.0, 1.0, 4000).unwrap();
    let binning = StateBinning::new(-1.0, 3.0, 256).unwrap();
    let mix = reference
        .mixture_control(grid, binning, &spec.action_grid, 1.0)
        .unwrap();
    let paths_m = simulate_relaxed(&spec, &mix, &cfg).unwrap();
    let se_m = (sample_variance(paths_m.states_at(k)) / cfg.particles as f64).sqrt();
    assert!(
        (paths_m.mean(k) - reference.mean_path(t)).abs() <= 3.0 * se_m + 0.005,
        "mixture mean {} vs reference {} (se {se_m})",
        paths_m.mean(k),
        reference.mean_path(t)
    );
}

#[test]
fn reference_feedback_cost_matches_the_oracle_value() {
    // 41 actions: the two-point mixture's action variance is negligible
    let params = LqParams::default();
    let spec = make_lq_meanfield(&params, 41, 1.0, 1.0).unwrap();
    let reference = LqSolution::solve(&params, 1.0, 1.0, 4000).unwrap();
    let grid = TimeGrid::new(1.0, 200).unwrap();
    let cfg = SimConfig::new(10_000, grid, 92).unwrap();
    let binning = StateBinning::new(-1.0, 3.0, 256).unwrap();
    let mix = reference
        .mixture_control(grid, binning, &spec.action_grid, 1.0)
        .unwrap();
    let paths = simulate_relaxed(&spec, &mix, &cfg).unwrap();
    let j = estimate_cost(&spec, &paths, ControlRef::Relaxed(&mix)).unwrap();
    let j_star = reference.optimal_cost();
    assert!(
        (j.value - j_star).abs() <= 0.02 * j_star,
        "J {} vs oracle {}",
        j.value,
        j_star
    );
}

#[test]
fn lq_gap_shrinks_by_subdivision_ratio() {
    // occupation rounding dominates: quadrupling m cuts the gap by at
    // least four, up to noise
    let params = LqParams::default();
    let spec = make_lq_meanfield(&params, 41, 1.0, 1.0).unwrap();
    let reference = LqSolution::solve(&params, 1.0, 1.0, 4000).unwrap();
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let cfg = SimConfig::new(10_000, grid, 93).unwrap();
    let binning = StateBinning::new(-1.0, 3.0, 64).unwrap();
    let mix = reference
        .mixture_control(grid, binning, &spec.action_grid, 1.0)
        .unwrap();
    let table = meanfield_control::value_gap_experiment(&spec, &mix, &[8, 64], &cfg).unwrap();
    let g8 = &table.rows[0];
    let g64 = &table.rows[1];
    let slack = 3.0 * (g64.paired_stderr.powi(2) + (g8.paired_stderr / 4.0).powi(2)).sqrt();
    assert!(
        g64.gap <= g8.gap / 4.0 + slack,
        "gap(64) {} vs gap(8)/4 {} (slack {slack})",
        g64.gap,
        g8.gap / 4.0
    );
}

#[test]
fn two_action_residual_separates_mixture_from_vertex() {
    // at the (1/2, 1/2) mixture on the zero path the residual vanishes; at
    // the all +1 control it is positive by a wide margin
    let spec = meanfield_control::make_chattering_problem(0.0, 0.5).unwrap();
    let grid = TimeGrid::new(1.0, 50).unwrap();
    let binning = StateBinning::new(-1.0, 1.0, 1).unwrap();
    let cfg = SimConfig::new(16, grid, 94).unwrap();
    let basis = RegressionBasis::default();

    let residual_of = |row: &[f64]| {
        let mu = RelaxedControl::constant(grid, binning, row).unwrap();
        let paths = simulate_relaxed(&spec, &mu, &cfg).unwrap();
        let a1 = solve_first_order(&spec, &paths, &mu, &basis).unwrap();
        let a2 = solve_second_order(&spec, &paths, &mu, &a1, &basis).unwrap();
        smp_residual(&spec, &paths, &mu, &a1, &a2).unwrap()
    };
    let stationary = residual_of(&[0.5, 0.5]);
    assert!(
        stationary.global_residual.abs() <= 3.0 * stationary.residual_stderr + 1e-9,
        "mixture residual {} not ~ 0",
        stationary.global_residual
    );
    let vertex = residual_of(&[0.0, 1.0]);
    assert!(
        vertex.global_residual > 5.0 * vertex.residual_stderr + 1e-6,
        "vertex residual {} (stderr {}) not separated",
        vertex.global_residual,
        vertex.residual_stderr
    );
}

#[test]
fn state_clamp_bounds_exploratory_runs() {
    let spec = lq();
    let grid = TimeGrid::new(1.0, 30).unwrap();
    let mut cfg = SimConfig::new(64, grid, 95).unwrap();
    cfg.clamp = Some((-0.5, 1.2));
    let u = StrictControl::constant(grid, 5, 4).unwrap(); // strong positive drift
    let paths = simulate_strict(&spec, &u, &cfg).unwrap();
    for k in 0..=30 {
        for p in 0..64 {
            let x = paths.state(p, k);
            assert!((-0.5..=1.2).contains(&x), "state {x} escaped the clamp");
        }
    }
    assert_eq!(paths.state(0, 30), 1.2);
}

#[test]
fn alternating_strict_control_matches_its_closed_form() {
    let kappa = 0.7;
    let spec = meanfield_control::make_chattering_problem(0.0, kappa).unwrap();
    let grid = TimeGrid::new(1.0, 48).unwrap();
    let cfg = SimConfig::new(4, grid, 96).unwrap();
    // the half mixture holds the path at zero for exactly zero cost
    let binning = StateBinning::new(-1.0, 1.0, 1).unwrap();
    let mu = RelaxedControl::constant(grid, binning, &[0.5, 0.5]).unwrap();
    let (j_mix, _) =
        meanfield_control::simulate_cost(&spec, ControlRef::Relaxed(&mu), &cfg).unwrap();
    assert_eq!(j_mix.value, 0.0);
    // alternating blocks, starting at -1, pay the triangle-wave cost exactly
    for segments in [2usize, 4, 8] {
        let per = 48 / segments;
        let u = StrictControl::from_rule(grid, 2, format!("alt{segments}"), move |k, _| {
            usize::from((k / per) % 2 == 1)
        });
        let (j, _) = meanfield_control::simulate_cost(&spec, ControlRef::Strict(&u), &cfg).unwrap();
        let oracle =
            meanfield_control::reference::two_action::alternating_control_cost(48, segments, kappa)
                .unwrap();
        assert!(
            (j.value - oracle).abs() <= 1e-12,
            "segments={segments}: {} vs {}",
            j.value,
            oracle
        );
    }
}
