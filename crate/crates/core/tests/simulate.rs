use kyleback_core::grid::DEFAULT_EPSILON;
use kyleback_core::simulate::{run_monte_carlo, MonteCarloRun};
use kyleback_core::transforms::jump_update;
use kyleback_core::*;

fn det() -> (SignalModel, PricingRule) {
    let (m, r, _) = build_deterministic(&DeterministicVolSpec::default()).unwrap();
    (m, r)
}

fn grid(steps: usize) -> TimeGrid {
    grid_with_steps(DEFAULT_EPSILON, steps, Refinement::Uniform).unwrap()
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

fn run(model: &SignalModel, rule: &PricingRule, s: &[Strategy], cfg: &SimConfig) -> MonteCarloRun {
    run_monte_carlo(model, rule, s, cfg).unwrap()
}

#[test]
fn gaussian_signal_variances() {
    let spec = DeterministicVolSpec::default();
    let (model, _) = det();
    let n = 100_000;
    let paths = simulate_signal(&model, &SimConfig::new(n, grid(64), 3)).unwrap();
    assert!(paths.errors.is_empty());
    let z0: Vec<f64> = paths.z.iter().map(|z| z[0]).collect();
    let (_, v0) = mean_var(&z0);
    let (m1, v1) = mean_var(&paths.z_one);
    let target = spec.q + spec.energy(1.0);
    let se = |v: f64| v * (2.0 / n as f64).sqrt();
    assert!((v0 - spec.q).abs() < 4.0 * se(spec.q), "{v0}");
    assert!((v1 - target).abs() < 4.0 * se(target), "{v1}");
    assert!(m1.abs() < 4.0 * (target / n as f64).sqrt());
}

#[test]
fn static_signal_does_not_move() {
    let (model, _) = build_static(&StaticSpec::inverse_linear(1.0, 1.0), None).unwrap();
    let paths = simulate_signal(&model, &SimConfig::new(200, grid(128), 4)).unwrap();
    for (z, z1) in paths.z.iter().zip(&paths.z_one) {
        assert!(z.iter().all(|v| v == z1));
    }
}

#[test]
fn quadratic_paths_stay_inside_the_interval() {
    let (model, rule) = build_quadratic(&QuadraticVolSpec::default()).unwrap();
    let cfg = SimConfig::new(10_000, grid(1 << 10), 5);
    let r = run(&model, &rule, &[Strategy::equilibrium()], &cfg);
    assert!(r.exclusion_rate() < 1e-3);
    for p in r.valid_paths() {
        assert!(p.min_z > -1.0 && p.max_z < 1.0);
        assert!(p.z_one > -1.0 && p.z_one < 1.0);
        let o = &p.outcomes[0];
        assert!(o.min_xi > -1.0 && o.max_xi < 1.0);
    }
}

#[test]
fn zero_strategy_earns_nothing() {
    let (model, rule) = det();
    let cfg = SimConfig::new(20_000, grid(256), 6);
    let r = run(&model, &rule, &[Strategy::zero()], &cfg);
    let mut xi = Vec::new();
    for p in r.valid_paths() {
        let o = &p.outcomes[0];
        assert_eq!(o.wealth.ito, 0.0);
        assert_eq!(o.wealth.by_parts, 0.0);
        assert_eq!(o.terminal_theta, 0.0);
        xi.push(o.terminal_xi);
    }
    let (m, v) = mean_var(&xi);
    assert!(m.abs() < 4.0 * (v / xi.len() as f64).sqrt());
}

#[test]
fn buy_and_hold_pays_the_post_trade_price() {
    let (model, rule) = det();
    let cfg = SimConfig::new(50, grid(256), 7).with_recording();
    let b = simulate_equilibrium(&model, &rule, &Strategy::buy_and_hold(), &cfg).unwrap();
    for p in &b.paths {
        assert_eq!(p.jumps.len(), 1);
        let j = p.jumps[0];
        assert_eq!(j.node, 0);
        assert_eq!(j.xi_after, jump_update(&rule, 0.0, j.xi_before, 1.0).unwrap());
        assert!((p.wealth.by_parts - (p.z_one - j.xi_after - b.c)).abs() < 1e-12);
        assert!(p.theta.iter().all(|&t| t == 1.0));
    }
}

#[test]
fn total_order_flow_is_trades_plus_noise() {
    let (model, rule) = det();
    let cfg = SimConfig::new(20, grid(512), 8).with_recording();
    for s in [
        Strategy::equilibrium(),
        Strategy::scaled(2.0),
        Strategy::jump(0.5, 0.5, Strategy::equilibrium()),
    ] {
        let b = simulate_equilibrium(&model, &rule, &s, &cfg).unwrap();
        for p in &b.paths {
            for k in 0..p.y.len() {
                assert!((p.y[k] - p.theta[k] - p.b[k]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn jump_strategy_records_the_block_trade() {
    let (model, rule) = det();
    let g = grid(512);
    let node = g.first_at_or_after(0.5);
    let cfg = SimConfig::new(20, g.clone(), 9).with_recording();
    let s = Strategy::jump(0.5, 0.5, Strategy::equilibrium());
    let b = simulate_equilibrium(&model, &rule, &s, &cfg).unwrap();
    for p in &b.paths {
        assert_eq!(p.jumps.len(), 1);
        let j = p.jumps[0];
        assert_eq!(j.node, node);
        assert_eq!(j.dtheta, 0.5);
        let expected = jump_update(&rule, g.nodes()[node], j.xi_before, 0.5).unwrap();
        assert!((j.xi_after - expected).abs() < 1e-12);
        assert!((p.theta[node] - p.theta[node - 1] - 0.5).abs() < 0.1);
    }
}

fn mean_wealth_gap(steps: usize) -> f64 {
    let (model, rule) = det();
    let cfg = SimConfig::new(1000, grid(steps), 10);
    let r = run(&model, &rule, &[Strategy::equilibrium()], &cfg);
    let gaps: Vec<f64> = r
        .valid_paths()
        .map(|p| (p.outcomes[0].wealth.ito - p.outcomes[0].wealth.by_parts).abs())
        .collect();
    gaps.iter().sum::<f64>() / gaps.len() as f64
}

#[test]
fn wealth_forms_converge() {
    let coarse = mean_wealth_gap(1 << 13);
    let fine = mean_wealth_gap(1 << 14);
    assert!(fine < 1e-2, "{fine}");
    assert!(fine < 0.75 * coarse, "{coarse} -> {fine}");
}

fn moments_at(run: &MonteCarloRun, t: f64) -> (f64, f64, f64, f64) {
    let xs: Vec<f64> = run.states(0, run.slot(t).unwrap()).iter().map(|s| s.xi).collect();
    let n = xs.len() as f64;
    let (m, v) = mean_var(&xs);
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    (m, (v / n).sqrt(), v, ((m4 - v * v) / n).sqrt())
}

#[test]
fn schemes_agree_in_distribution() {
    let (model, rule) = det();
    let g = grid(1 << 10);
    let a = run(&model, &rule, &[Strategy::equilibrium()], &SimConfig::new(10_000, g.clone(), 12));
    let euler = SimConfig::new(10_000, g, 13).with_scheme(Scheme::Euler);
    let b = run(&model, &rule, &[Strategy::equilibrium()], &euler);
    for t in [0.25, 0.5, 0.75] {
        let (ma, sa, va, sva) = moments_at(&a, t);
        let (mb, sb, vb, svb) = moments_at(&b, t);
        assert!((ma - mb).abs() < 3.0 * sa.hypot(sb), "t={t} means {ma} {mb}");
        assert!((va - vb).abs() < 3.0 * sva.hypot(svb), "t={t} variances {va} {vb}");
    }
}

fn terminal_rms(model: &SignalModel, rule: &PricingRule, g: TimeGrid, n: usize) -> f64 {
    let r = run(model, rule, &[Strategy::equilibrium()], &SimConfig::new(n, g, 16));
    let ss: Vec<f64> = r
        .valid_paths()
        .map(|p| (p.outcomes[0].terminal_xi - p.z_terminal).powi(2))
        .collect();
    (ss.iter().sum::<f64>() / ss.len() as f64).sqrt()
}

#[test]
fn terminal_gap_improves_with_steps() {
    let (model, rule) = det();
    let gaps: Vec<f64> = [1 << 8, 1 << 10, 1 << 12]
        .iter()
        .map(|&s| terminal_rms(&model, &rule, grid(s), 1000))
        .collect();
    assert!(gaps[1] < gaps[0] && gaps[2] < gaps[1], "{gaps:?}");
}

#[test]
fn price_pins_to_the_signal() {
    let (model, rule) = det();
    let at = |e: f64| {
        let g = grid_with_steps(2f64.powf(e), 1 << 14, Refinement::Geometric).unwrap();
        terminal_rms(&model, &rule, g, 1000)
    };
    let (coarse, fine) = (at(-10.0), at(-16.0));
    assert!(fine < 0.05, "{fine}");
    assert!(2.0 * fine <= coarse, "{coarse} {fine}");
}

#[test]
fn same_seed_same_paths() {
    let (model, rule) = det();
    let strategies = Strategy::standard_deviations();
    let cfg = SimConfig::new(64, grid(256), 13);
    let a = run(&model, &rule, &strategies, &cfg);
    let b = run(&model, &rule, &strategies, &cfg);
    assert_eq!(a.paths, b.paths);
    let c = run(&model, &rule, &strategies, &SimConfig::new(64, grid(256), 14));
    assert_ne!(a.paths, c.paths);
}

#[test]
fn path_streams_do_not_depend_on_path_count() {
    let (model, rule) = det();
    let small = run(&model, &rule, &[Strategy::equilibrium()], &SimConfig::new(10, grid(256), 15));
    let large = run(&model, &rule, &[Strategy::equilibrium()], &SimConfig::new(40, grid(256), 15));
    assert_eq!(small.paths[..], large.paths[..10]);
}
