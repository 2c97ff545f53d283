use kyleback_core::*;
use kyleback_core::stats::{moments, paired_difference};
use kyleback_core::transforms::psi;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args[1].parse().unwrap();
    let steps: usize = args[2].parse().unwrap();
    let (model, rule) = if args[3] == "quad" { build_quadratic(&QuadraticVolSpec::default()).unwrap() } else { let (m, r, _) = build_deterministic(&DeterministicVolSpec::default()).unwrap(); (m, r) };
    let scheme = if args.get(4).map(|s| s == "euler").unwrap_or(false) { Scheme::Euler } else { Scheme::Transformed };
    let grid = grid_with_steps(grid::DEFAULT_EPSILON, steps, Refinement::Geometric).unwrap();
    let cfg = SimConfig::new(n, grid, 7).with_scheme(scheme);
    let run = run_monte_carlo(&model, &rule, &[Strategy::equilibrium(), Strategy::scaled(0.5), Strategy::scaled(2.0)], &cfg).unwrap();
    let g = model.gamma;
    let u = |w: f64| -(-g * w).exp() / g;
    let up: Vec<f64> = run.valid_paths().map(|p| u(psi(&rule, p.z_one, 0.0, 0.0).unwrap())).collect();
    for (name, f) in [("ito", 0usize), ("parts", 1), ("mid", 2)] {
        let w = |o: &kyleback_core::simulate::StrategyOutcome| match f { 0 => o.wealth.ito, 1 => o.wealth.by_parts, _ => 0.5 * (o.wealth.ito + o.wealth.by_parts) };
        let ue: Vec<f64> = run.valid_paths().map(|p| u(w(&p.outcomes[0]))).collect();
        let u5: Vec<f64> = run.valid_paths().map(|p| u(w(&p.outcomes[1]))).collect();
        let u2: Vec<f64> = run.valid_paths().map(|p| u(w(&p.outcomes[2]))).collect();
        let a = paired_difference(&ue, &up); let b = paired_difference(&ue, &u5); let c = paired_difference(&ue, &u2);
        println!("{name:6} eq-psi {:+.2e} ± {:.1e}  eq-k0.5 {:+.2e} ± {:.1e}  eq-k2 {:+.2e} ± {:.1e} mean {:.5}", a.mean, a.se, b.mean, b.se, c.mean, c.se, moments(ue.iter().copied()).mean);
    }
}
