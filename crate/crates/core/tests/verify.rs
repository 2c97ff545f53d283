use kyleback_core::grid::DEFAULT_EPSILON;
use kyleback_core::model::Clock;
use kyleback_core::simulate::{run_monte_carlo, Drift};
use kyleback_core::verify::{
    stochastic_exponential, utility, verify_admissibility, verify_bridge_convergence,
    verify_density_identities, verify_order_flow_brownian, verify_rational_pricing,
    verify_static_v_invariance,
};
use kyleback_core::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn det_with(gamma: f64) -> (SignalModel, PricingRule, GaussianOracle) {
    build_deterministic(&DeterministicVolSpec {
        gamma,
        ..DeterministicVolSpec::default()
    })
    .unwrap()
}

fn geometric(steps: usize) -> TimeGrid {
    grid_with_steps(DEFAULT_EPSILON, steps, Refinement::Geometric).unwrap()
}

/// Noise-only flow filed under the equilibrium label, so `Y = B`.
fn silent() -> Strategy {
    Strategy {
        label: "equilibrium".into(),
        drift: Drift::Zero,
        jumps: Vec::new(),
    }
}

#[test]
fn pure_noise_order_flow_is_brownian() {
    let (model, rule, _) = det_with(1.0);
    let mut cfg = SimConfig::new(10_000, geometric(1 << 9), 21);
    cfg.checkpoints = verify::battery_checkpoints(&cfg.grid, &[], 8);
    let run = run_monte_carlo(&model, &rule, &[silent()], &cfg).unwrap();
    let entry = verify_order_flow_brownian(&run, 8, &Thresholds::default()).unwrap();
    assert!(entry.passed, "{entry:?}");
}

#[test]
fn rational_pricing_at_time_zero_and_with_noise_only_flow() {
    let (model, rule, _) = det_with(1.0);
    let mut cfg = SimConfig::new(10_000, geometric(1 << 10), 22);
    cfg.checkpoints = verify::battery_checkpoints(&cfg.grid, &[0.5], 4);
    let strategies = [Strategy::equilibrium(), Strategy::zero()];
    let run = run_monte_carlo(&model, &rule, &strategies, &cfg).unwrap();
    let entry = verify_rational_pricing(&run, &[0.5], 20, &Thresholds::default()).unwrap();
    assert!(entry.passed, "{entry:?}");
    let controls: Vec<&Check> = entry
        .checks
        .iter()
        .filter(|c| c.role == CheckRole::NegativeControl)
        .collect();
    assert!(!controls.is_empty());
    assert!(controls.iter().any(|c| !c.passed));
}

#[test]
fn single_cutoff_is_flagged() {
    let (model, rule, _) = det_with(1.0);
    let entry = verify_bridge_convergence(
        &model,
        &rule,
        &[0.5],
        1000,
        1 << 8,
        23,
        Scheme::Transformed,
        &Thresholds::default(),
    )
    .unwrap();
    assert!(entry.warnings.iter().any(|w| w.contains("insufficient levels")));
    assert!(entry.checks.iter().all(|c| !c.label.contains("ratio") || c.passed));
}

#[test]
fn static_price_pins_to_the_signal() {
    let (model, rule) = build_static(&StaticSpec::inverse_linear(1.0, 1.0), None).unwrap();
    let entry = verify_bridge_convergence(
        &model,
        &rule,
        &[2f64.powi(-8), 2f64.powi(-12), 2f64.powi(-16)],
        1000,
        1 << 12,
        24,
        Scheme::Transformed,
        &Thresholds::default(),
    )
    .unwrap();
    assert!(entry.passed, "{entry:?}");
}

#[test]
fn zero_trading_utility_is_exactly_minus_one_over_gamma() {
    let (model, rule, _) = det_with(1.0);
    let run = run_monte_carlo(
        &model,
        &rule,
        &[Strategy::zero()],
        &SimConfig::new(500, geometric(1 << 8), 25),
    )
    .unwrap();
    for p in run.valid_paths() {
        assert_eq!(utility(1.0, verify::terminal_wealth(&p.outcomes[0])), -1.0);
    }
}

#[test]
fn zero_price_exponential_is_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let dt = vec![1e-3; 1000];
    let db: Vec<f64> = (0..1000)
        .map(|_| {
            let g: f64 = StandardNormal.sample(&mut rng);
            g * 1e-3f64.sqrt()
        })
        .collect();
    assert_eq!(stochastic_exponential(1.0, &vec![0.0; 1000], &db, &dt), 1.0);
}

fn admissibility_se(gamma: f64) -> (bool, f64) {
    let (model, rule, _) = det_with(gamma);
    let run = run_monte_carlo(
        &model,
        &rule,
        &[Strategy::equilibrium()],
        &SimConfig::new(100_000, geometric(1 << 10), 27),
    )
    .unwrap();
    let entry = verify_admissibility(&run, &Thresholds::default()).unwrap();
    let se = entry.checks[0].standard_error.unwrap();
    (entry.passed, se)
}

#[test]
fn admissibility_tightens_for_small_risk_aversion() {
    let (ok_small, se_small) = admissibility_se(0.1);
    let (ok_unit, se_unit) = admissibility_se(1.0);
    assert!(ok_small && ok_unit);
    assert!(se_small < se_unit, "{se_small} {se_unit}");
}

#[test]
fn flat_h_gives_the_heat_kernel() {
    let (model, _, _) = det_with(1.0);
    let k = BridgeKernel::new(model).with_flat_h();
    for (s, x, t, y) in [(0.0f64, 0.0f64, 1.0f64, 0.3f64), (0.2, -1.0, 0.7, 0.5)] {
        let heat = (-(y - x) * (y - x) / (2.0 * (t - s))).exp() / (2.0 * std::f64::consts::PI * (t - s)).sqrt();
        assert!((k.density_p(s, x, t, y).unwrap() - heat).abs() < 1e-15);
    }
    let entry =
        verify_density_identities(&k, None, &DensityGrid::default(), &Thresholds::default()).unwrap();
    assert!(entry.passed, "{entry:?}");
}

#[test]
fn density_identities_hold_for_both_families() {
    let th = Thresholds::default();
    let (model, _, oracle) = det_with(1.0);
    let entry = verify_density_identities(
        &BridgeKernel::new(model),
        Some(&oracle),
        &DensityGrid::default(),
        &th,
    )
    .unwrap();
    assert!(entry.passed, "{entry:?}");
    let (quad, _) = build_quadratic(&QuadraticVolSpec::default()).unwrap();
    let entry =
        verify_density_identities(&BridgeKernel::new(quad), None, &DensityGrid::default(), &th)
            .unwrap();
    assert!(entry.passed, "{entry:?}");
}

#[test]
fn same_clock_twice_gives_identical_utilities() {
    let (model, rule) = build_static(&StaticSpec::inverse_linear(1.0, 1.0), None).unwrap();
    let clock = Clock::Linear {
        v0: 0.5,
        slope: 0.5,
    };
    let cfg = SimConfig::new(2000, geometric(1 << 9), 28);
    let entry = verify_static_v_invariance(
        &model,
        &rule,
        &[clock.clone(), clock],
        &cfg,
        &Thresholds::default(),
    )
    .unwrap();
    let diff = entry
        .checks
        .iter()
        .find(|c| c.label.starts_with("utility"))
        .unwrap();
    assert_eq!(diff.estimate, 0.0);
    assert!(entry.passed);
}

#[test]
fn clock_below_the_diagonal_is_rejected() {
    let bad = Clock::Linear {
        v0: 0.2,
        slope: 0.5,
    };
    let (model, rule) = build_static(&StaticSpec::inverse_linear(1.0, 1.0), Some(bad)).unwrap();
    let report = validate_assumptions(&model, &rule, &AssumptionOptions::default());
    assert!(!report.overall);
    assert!(!report.entry("time_change").unwrap().passed);
}

#[test]
fn small_samples_are_refused() {
    let (model, rule, oracle) = det_with(1.0);
    let cfg = BatteryConfig::new(100, geometric(1 << 8), 29);
    assert!(run_battery(&model, &rule, Some(&oracle), &cfg).is_err());
}
