//! The five subcommands.

use kyleback_core::report::{Check, ReportEntry, VerificationReport};
use kyleback_core::simulate::{run_monte_carlo, NodeState};
use kyleback_core::verify::{terminal_wealth, utility};
use kyleback_core::{
    run_battery, validate_assumptions, AssumptionOptions, BridgeKernel, DensityGrid, SimConfig,
    Strategy, TestName,
};
use serde::Serialize;

use crate::config::{
    build, build_with_gamma, Built, ExperimentConfig, Format, ModelBlock, SimBlock, SweepBlock,
    VerifyBlock,
};
use crate::output::{num, write_json, write_text, CsvOut, Stamp};
use crate::{CliError, Outcome};

fn stamp(cfg: &ExperimentConfig, command: &'static str) -> Stamp {
    Stamp {
        command,
        config_hash: cfg.hash(),
        seed: cfg.sim.seed,
    }
}

fn constructor_failure(e: &kyleback_core::Error) -> VerificationReport {
    let mut entry = ReportEntry::new("constructor");
    entry.warn(e.to_string());
    entry.push(Check::flag("model constructed", false));
    VerificationReport::new(vec![entry])
}

fn assumption_options(cfg: &ExperimentConfig) -> AssumptionOptions {
    AssumptionOptions {
        epsilon: cfg.sim.epsilon,
        ..AssumptionOptions::default()
    }
}

/// The hashed part of the configuration; the output block is left out so a
/// report does not depend on where it was written.
#[derive(Serialize)]
struct Inputs<'a> {
    model: &'a ModelBlock,
    sim: &'a SimBlock,
    verify: &'a VerifyBlock,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<&'a SweepBlock>,
}

#[derive(Serialize)]
struct ReportBody<'a> {
    config: Inputs<'a>,
    report: &'a VerificationReport,
}

/// Writes a report in the configured formats and prints its table.
fn emit_report(
    cfg: &ExperimentConfig,
    st: &Stamp,
    name: &str,
    report: &VerificationReport,
) -> Result<(), CliError> {
    let table = report.table();
    print!("{table}");
    let dir = &cfg.output.dir;
    if cfg.output.formats.contains(&Format::Json) {
        let body = ReportBody {
            config: Inputs {
                model: &cfg.model,
                sim: &cfg.sim,
                verify: &cfg.verify,
                sweep: cfg.sweep.as_ref(),
            },
            report,
        };
        write_json(dir, &format!("{name}.json"), st, &body)?;
    }
    if cfg.output.formats.contains(&Format::Table) {
        write_text(dir, &format!("{name}.txt"), st, &table)?;
    }
    Ok(())
}

fn built_or_report(
    cfg: &ExperimentConfig,
    st: &Stamp,
    name: &str,
) -> Result<Result<Built, ()>, CliError> {
    match build(&cfg.model) {
        Ok(b) => Ok(Ok(b)),
        Err(e) => {
            eprintln!("model rejected: {e}");
            emit_report(cfg, st, name, &constructor_failure(&e))?;
            Ok(Err(()))
        }
    }
}

pub fn validate(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let st = stamp(cfg, "validate");
    let Ok(b) = built_or_report(cfg, &st, "validation")? else {
        return Ok(Outcome::ChecksFailed);
    };
    let report = validate_assumptions(&b.model, &b.rule, &assumption_options(cfg));
    emit_report(cfg, &st, "validation", &report)?;
    Ok(Outcome::from_pass(report.overall))
}

const VARIABLES: [(&str, fn(&NodeState) -> f64); 5] = [
    ("B", |s| s.b),
    ("Z", |s| s.z),
    ("xi", |s| s.xi),
    ("Y", |s| s.y),
    ("theta", |s| s.theta),
];

pub fn simulate(cfg: &ExperimentConfig, dump_paths: bool) -> Result<Outcome, CliError> {
    let st = stamp(cfg, "simulate");
    let b = build(&cfg.model).map_err(|e| CliError::Failed(format!("model rejected: {e}")))?;
    let mut sim = SimConfig::new(cfg.sim.n_paths, cfg.grid()?, cfg.sim.seed)
        .with_scheme(cfg.sim.scheme);
    sim.record_paths = dump_paths;
    let run = run_monte_carlo(&b.model, &b.rule, &[Strategy::equilibrium()], &sim)
        .map_err(|e| CliError::Failed(e.to_string()))?;
    for w in &run.warnings {
        eprintln!("warning: {w}");
    }

    let dir = &cfg.output.dir;
    let mut out = CsvOut::create(
        dir,
        "summary.csv",
        &st,
        &["t", "variable", "n", "mean", "std_error", "variance", "min", "max"],
    )?;
    for (slot, &t) in run.checkpoint_times.iter().enumerate() {
        let states = run.states(0, slot);
        let n = states.len() as f64;
        for (name, get) in VARIABLES {
            let xs: Vec<f64> = states.iter().map(get).collect();
            let mean = xs.iter().sum::<f64>() / n;
            let var = if n > 1.0 {
                xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
            let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            out.row([
                num(t),
                name.to_string(),
                states.len().to_string(),
                num(mean),
                num((var / n).sqrt()),
                num(var),
                num(min),
                num(max),
            ])?;
        }
    }
    let path = out.finish()?;
    eprintln!("wrote {}", path.display());

    if let Some(bundle) = run.bundles.as_ref().and_then(|b| b.first()) {
        let mut out = CsvOut::create(
            dir,
            "paths.csv",
            &st,
            &["path", "t", "B", "Z", "xi", "Y", "theta"],
        )?;
        let nodes = bundle.grid.nodes();
        for p in &bundle.paths {
            for (k, &t) in nodes.iter().enumerate() {
                out.row([
                    p.index.to_string(),
                    num(t),
                    num(p.b[k]),
                    num(p.z[k]),
                    num(p.xi[k]),
                    num(p.y[k]),
                    num(p.theta[k]),
                ])?;
            }
        }
        let path = out.finish()?;
        eprintln!("wrote {}", path.display());
    }

    let rate = run.exclusion_rate();
    if rate > 1e-3 {
        eprintln!("path exclusion rate {rate:.4} exceeds 0.001");
        return Ok(Outcome::ChecksFailed);
    }
    Ok(Outcome::Success)
}

pub fn verify(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let st = stamp(cfg, "verify");
    let Ok(b) = built_or_report(cfg, &st, "report")? else {
        return Ok(Outcome::ChecksFailed);
    };
    let validation = validate_assumptions(&b.model, &b.rule, &assumption_options(cfg));
    if !validation.overall {
        eprintln!("model fails its assumptions; battery not run");
        emit_report(cfg, &st, "report", &validation)?;
        return Ok(Outcome::ChecksFailed);
    }
    let battery = cfg.battery(cfg.verify.n_paths)?;
    let report = run_battery(&b.model, &b.rule, b.oracle.as_ref(), &battery).map_err(|e| match e {
        kyleback_core::Error::InvalidParameter { .. } | kyleback_core::Error::InsufficientPaths { .. } => {
            CliError::Usage(e.to_string())
        }
        other => CliError::Failed(other.to_string()),
    })?;
    emit_report(cfg, &st, "report", &report)?;
    Ok(Outcome::from_pass(report.overall))
}

pub fn sweep(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let st = stamp(cfg, "sweep");
    let Some(block) = &cfg.sweep else {
        return Err(CliError::Usage("config has no [sweep] block".into()));
    };
    if block.parameter != "gamma" {
        return Err(CliError::Usage(format!(
            "sweep.parameter must be \"gamma\", got {:?}",
            block.parameter
        )));
    }
    if block.values.is_empty() {
        return Err(CliError::Usage("sweep.values is empty".into()));
    }
    let n_paths = block.n_paths.unwrap_or(cfg.verify.n_paths);
    let battery = cfg.battery(n_paths)?;
    let mut out = CsvOut::create(
        &cfg.output.dir,
        "sweep.csv",
        &st,
        &["gamma", "metric", "value", "note"],
    )?;
    let mut all_valid = true;
    for &gamma in &block.values {
        eprintln!("gamma = {gamma}");
        let g = num(gamma);
        let mut row = |metric: &str, value: f64, note: &str| {
            out.row([g.as_str(), metric, &num(value), note])
        };
        let b = match build_with_gamma(&cfg.model, gamma) {
            Ok(b) => b,
            Err(e) => {
                all_valid = false;
                row("valid", 0.0, &e.to_string())?;
                continue;
            }
        };
        let validation = validate_assumptions(&b.model, &b.rule, &assumption_options(cfg));
        if !validation.overall {
            all_valid = false;
            let failed: Vec<&str> = validation
                .entries
                .iter()
                .filter(|e| !e.passed)
                .map(|e| e.name.as_str())
                .collect();
            row("valid", 0.0, &format!("failed: {}", failed.join(" ")))?;
            continue;
        }
        row("valid", 1.0, "")?;

        let sim = SimConfig::new(n_paths, battery.grid.clone(), battery.seed)
            .with_scheme(battery.scheme);
        match run_monte_carlo(&b.model, &b.rule, &[Strategy::equilibrium()], &sim) {
            Ok(run) => {
                let u: Vec<f64> = run
                    .valid_paths()
                    .map(|p| utility(gamma, terminal_wealth(&p.outcomes[0])))
                    .collect();
                let n = u.len() as f64;
                let mean = u.iter().sum::<f64>() / n;
                let var = u.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
                let gap = run
                    .valid_paths()
                    .map(|p| (p.outcomes[0].terminal_xi - p.z_terminal).powi(2))
                    .sum::<f64>()
                    / n;
                row("utility_equilibrium", mean, "")?;
                row("utility_se", (var / n).sqrt(), "")?;
                row("rms_terminal_gap", gap.sqrt(), "")?;
                row("exclusion_rate", run.exclusion_rate(), "")?;
            }
            Err(e) => row("simulation", f64::NAN, &e.to_string())?,
        }

        match run_battery(&b.model, &b.rule, b.oracle.as_ref(), &battery) {
            Ok(report) => {
                if let Some(c) = report
                    .entry(TestName::Admissibility.as_str())
                    .and_then(|e| e.checks.first())
                {
                    row("admissibility_estimate", c.estimate, "")?;
                    row("admissibility_se", c.standard_error.unwrap_or(f64::NAN), "")?;
                }
                for e in &report.entries {
                    row(&format!("pass_{}", e.name), f64::from(u8::from(e.passed)), "")?;
                }
                row("pass_overall", f64::from(u8::from(report.overall)), "")?;
            }
            Err(e) => row("battery", f64::NAN, &e.to_string())?,
        }
    }
    let path = out.finish()?;
    eprintln!("wrote {}", path.display());
    Ok(Outcome::from_pass(all_valid))
}

pub fn density(cfg: &ExperimentConfig, grid: DensityGrid) -> Result<Outcome, CliError> {
    if !(grid.s < grid.t) || grid.s < 0.0 || grid.t > 1.0 {
        return Err(CliError::Usage(format!(
            "need 0 <= s < t <= 1, got s = {}, t = {}",
            grid.s, grid.t
        )));
    }
    if grid.points < 2 || !(grid.lower < grid.upper) {
        return Err(CliError::Usage(
            "need at least two points on a nonempty range".into(),
        ));
    }
    let st = stamp(cfg, "density");
    let b = build(&cfg.model).map_err(|e| CliError::Failed(format!("model rejected: {e}")))?;
    let kernel = BridgeKernel::new(b.model);
    let values = grid.values();
    let mut out = CsvOut::create(
        &cfg.output.dir,
        "density.csv",
        &st,
        &["kind", "s", "x", "t", "y", "value"],
    )?;
    let failed = |e: kyleback_core::Error| CliError::Failed(e.to_string());
    for (kind, rho) in [("rho", true), ("p", false)] {
        for &x in &values {
            for &y in &values {
                let v = if rho {
                    kernel.density_rho(grid.s, x, grid.t, y)
                } else {
                    kernel.density_p(grid.s, x, grid.t, y)
                }
                .map_err(failed)?;
                out.row([kind.to_string(), num(grid.s), num(x), num(grid.t), num(y), num(v)])?;
            }
        }
    }
    let path = out.finish()?;
    eprintln!("wrote {}", path.display());
    Ok(Outcome::Success)
}
