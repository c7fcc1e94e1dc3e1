//! Command dispatch for the batch CLI: runs a [`RunConfig`], writes result
//! files, and maps failures onto exit codes.
//!
//! Exit codes: 0 success, 2 validation error, 3 numerical failure
//! (CFL/divergence/enumeration guards and friends), 4 unattained check in
//! assert mode.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::bsb::{solve_bsb, GridSolution, Scheme};
use crate::config::{Command, RunConfig};
use crate::gdp::{
    check_gdp1, check_gdp1_with_mutation, check_gdp2, enumerate_reachability, value_enumerated,
    value_recursive, DiscreteGame,
};
use crate::hamiltonian::{check_viscosity_candidate, checker_tolerance, Verdict};
use crate::model::ModelError;
use crate::pricer::{jensen_lower_bound, price_target, McParams};
use crate::sim::{simulate_hedge, worst_case_scan, AdversePolicy, PathBatch, SimError};

/// Exit code for configuration/validation failures.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit code for numerical failures.
pub const EXIT_NUMERICAL: i32 = 3;
/// Exit code for failed `--assert` checks.
pub const EXIT_ASSERT: i32 = 4;

/// Runs one configured command. Returns the process exit code; failures are
/// reported on standard error.
pub fn run(config: &RunConfig, out_dir: &Path, assert_mode: bool, seed_override: Option<u64>) -> i32 {
    let violations = config.validate();
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("config error: {v}");
        }
        return EXIT_VALIDATION;
    }
    let mut config = config.clone();
    if let (Some(seed), Some(mc)) = (seed_override, &mut config.mc) {
        mc.seed = seed;
    }
    match dispatch(&config, out_dir, assert_mode) {
        Ok(code) => code,
        Err(failure) => {
            eprintln!("{}", failure.message);
            failure.code
        }
    }
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn validation(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }

    fn numerical(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_NUMERICAL,
            message: message.into(),
        }
    }
}

impl From<crate::bsb::SolveError> for Failure {
    fn from(e: crate::bsb::SolveError) -> Self {
        match e {
            crate::bsb::SolveError::Model(m) => Failure::from(m),
            other => Failure::numerical(other.to_string()),
        }
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        Failure::validation(e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Solve(s) => Failure::from(s),
            other => Failure::numerical(other.to_string()),
        }
    }
}

impl From<crate::gdp::GdpError> for Failure {
    fn from(e: crate::gdp::GdpError) -> Self {
        match e {
            crate::gdp::GdpError::Invalid { .. } => Failure::validation(e.to_string()),
            other => Failure::numerical(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::numerical(format!("io error: {e}"))
    }
}

fn dispatch(config: &RunConfig, out_dir: &Path, assert_mode: bool) -> Result<i32, Failure> {
    fs::create_dir_all(out_dir)?;
    match config.command {
        Command::PriceBsb => run_price_bsb(config, out_dir, assert_mode),
        Command::PriceTarget => run_price_target(config, out_dir, assert_mode),
        Command::CheckViscosity => run_check_viscosity(config, out_dir, assert_mode),
        Command::SimulateGame => run_simulate(config, out_dir, assert_mode, false),
        Command::ScanWorstCase => run_simulate(config, out_dir, assert_mode, true),
        Command::GdpDemo => run_gdp_demo(config, out_dir, assert_mode),
    }
}

fn out_file(out_dir: &Path, prefix: &str, suffix: &str) -> PathBuf {
    out_dir.join(format!("{prefix}{suffix}"))
}

fn scheme_of(config: &RunConfig) -> Scheme {
    config.scheme.unwrap_or(Scheme::ImplicitPolicyIteration)
}

fn solve_from(config: &RunConfig) -> Result<GridSolution, Failure> {
    let model = config.model.as_ref().expect("validated");
    let payoff = config.payoff.as_ref().expect("validated");
    let grid = config.grid.as_ref().expect("validated");
    Ok(solve_bsb(model, payoff, grid, scheme_of(config))?)
}

fn write_surface_csv(path: &Path, sol: &GridSolution) -> Result<(), Failure> {
    let mut text = String::from("t,x,w,sigma_star\n");
    for (i, &t) in sol.time_nodes().iter().enumerate() {
        for (j, &x) in sol.space_nodes().iter().enumerate() {
            writeln!(
                text,
                "{t},{x},{},{}",
                sol.value_at_node(i, j),
                sol.sigma_star_at(i, j)
            )
            .expect("string write");
        }
    }
    fs::write(path, text)?;
    Ok(())
}

fn run_price_bsb(config: &RunConfig, out_dir: &Path, assert_mode: bool) -> Result<i32, Failure> {
    let sol = solve_from(config)?;
    let model = config.model.as_ref().expect("validated");
    let w0 = sol.price_at(0.0, model.x0)?;
    let prefix = &config.output_path;
    write_surface_csv(&out_file(out_dir, prefix, "_surface.csv"), &sol)?;
    let result = json!({
        "command": "price-bsb",
        "w0": w0,
        "x0": model.x0,
        "scheme": scheme_of(config),
        "residual_tol": sol.residual_tol(),
    });
    fs::write(
        out_file(out_dir, prefix, ".json"),
        serde_json::to_string_pretty(&result).expect("json"),
    )?;
    if assert_mode && !bsb_structural_checks(config, &sol)? {
        return Ok(EXIT_ASSERT);
    }
    Ok(0)
}

/// Assert-mode checks for the solver: terminal exactness, endpoint argmax,
/// and dominance over endpoint constant-volatility solves.
fn bsb_structural_checks(config: &RunConfig, sol: &GridSolution) -> Result<bool, Failure> {
    let model = config.model.as_ref().expect("validated");
    let payoff = config.payoff.as_ref().expect("validated");
    let grid = config.grid.as_ref().expect("validated");
    let n_t = grid.n_t;
    for (j, &x) in sol.space_nodes().iter().enumerate() {
        if sol.value_at_node(n_t, j) != payoff.eval(x) {
            eprintln!("assert: terminal slice differs from payoff at x={x}");
            return Ok(false);
        }
    }
    for sigma in [model.sigma_lo, model.sigma_hi] {
        let single = crate::model::MarketModel {
            sigma_lo: sigma,
            sigma_hi: sigma,
            ..*model
        };
        let constant = solve_bsb(&single, payoff, grid, scheme_of(config))?;
        for i in 0..=n_t {
            for j in 0..grid.n_x {
                if constant.value_at_node(i, j) > sol.value_at_node(i, j) + 1e-7 {
                    eprintln!(
                        "assert: constant sigma={sigma} exceeds the worst-case surface at node ({i},{j})"
                    );
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

fn run_price_target(config: &RunConfig, out_dir: &Path, assert_mode: bool) -> Result<i32, Failure> {
    let model = config.model.as_ref().expect("validated");
    let payoff = config.payoff.as_ref().expect("validated");
    let loss = config.loss.as_ref().expect("validated");
    let grid = config.grid.as_ref().expect("validated");
    let p = config.p.expect("validated");
    let price = price_target(model, payoff, loss, p, grid)?;
    fs::write(
        out_file(out_dir, &config.output_path, ".json"),
        serde_json::to_string_pretty(&price).expect("json"),
    )?;
    if assert_mode {
        if price.gamma != price.y0 + price.shift {
            eprintln!("assert: gamma must equal y0 + shift exactly");
            return Ok(EXIT_ASSERT);
        }
        let mc = config
            .mc
            .map(|m| McParams {
                n_paths: m.n_paths,
                seed: m.seed,
            })
            .unwrap_or_default();
        if !jensen_lower_bound(model, payoff, loss, p, price.gamma, mc) {
            eprintln!("assert: the priced capital fails the scenario lower bound");
            return Ok(EXIT_ASSERT);
        }
    }
    Ok(0)
}

/// Deterministic interior sample points for the checker.
fn checker_samples(config: &RunConfig, n: usize) -> Vec<(f64, f64, f64)> {
    let model = config.model.as_ref().expect("validated");
    let grid = config.grid.as_ref().expect("validated");
    let p = config.p.unwrap_or(0.0);
    let seed = config.mc.map(|m| m.seed).unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (grid.x_min.ln(), grid.x_max.ln());
    let band = hi - lo;
    (0..n)
        .map(|_| {
            let t = model.horizon_t * (0.05 + 0.90 * rng.random::<f64>());
            let x = (lo + band * (0.25 + 0.5 * rng.random::<f64>())).exp();
            (t, x, p)
        })
        .collect()
}

fn run_check_viscosity(
    config: &RunConfig,
    out_dir: &Path,
    assert_mode: bool,
) -> Result<i32, Failure> {
    let sol = solve_from(config)?;
    let loss = config.loss.as_ref().expect("validated");
    let n = config.n_samples.unwrap_or(500);
    let points = checker_samples(config, n);
    let reports = check_viscosity_candidate(&sol, loss, &points);

    let mut text = String::from("t,x,p,super_residual,sub_residual,verdict\n");
    for r in &reports {
        writeln!(
            text,
            "{},{},{},{},{},{}",
            r.t, r.x, r.p, r.supersolution_residual, r.subsolution_residual, r.verdict
        )
        .expect("string write");
    }
    let prefix = &config.output_path;
    fs::write(out_file(out_dir, prefix, "_reports.csv"), text)?;

    let pass = reports.iter().filter(|r| r.verdict == Verdict::Pass).count();
    let fail = reports.iter().filter(|r| r.verdict == Verdict::Fail).count();
    let inconclusive = reports
        .iter()
        .filter(|r| r.verdict == Verdict::Inconclusive)
        .count();
    let result = json!({
        "command": "check-viscosity",
        "n_points": reports.len(),
        "pass": pass,
        "fail": fail,
        "inconclusive": inconclusive,
        "pass_fraction": pass as f64 / reports.len() as f64,
        "tol": checker_tolerance(&sol),
    });
    fs::write(
        out_file(out_dir, prefix, ".json"),
        serde_json::to_string_pretty(&result).expect("json"),
    )?;
    if assert_mode && (fail > 0 || pass as f64 / reports.len() as f64 < 0.99) {
        eprintln!("assert: checker pass fraction below 99% (pass={pass}, fail={fail})");
        return Ok(EXIT_ASSERT);
    }
    Ok(0)
}

fn default_policies() -> Vec<AdversePolicy> {
    vec![AdversePolicy::FeedbackWorstCase]
}

fn run_simulate(
    config: &RunConfig,
    out_dir: &Path,
    assert_mode: bool,
    scan: bool,
) -> Result<i32, Failure> {
    let model = config.model.as_ref().expect("validated");
    let payoff = config.payoff.as_ref().expect("validated");
    let loss = config.loss.as_ref().expect("validated");
    let grid = config.grid.as_ref().expect("validated");
    let mc = config.mc.as_ref().expect("validated");
    let p = config.p.expect("validated");
    let policies = config.policies.clone().unwrap_or_else(default_policies);
    if policies.is_empty() {
        return Err(Failure::validation("policies: must be nonempty".to_string()));
    }

    let price = price_target(model, payoff, loss, p, grid)?;
    let y_init = config.y_init.unwrap_or(price.gamma);
    let sol = solve_from(config)?;
    let batch = PathBatch {
        n_paths: mc.n_paths,
        n_steps: mc.n_steps,
        seed: mc.seed,
    };

    let (min, table) = if scan {
        worst_case_scan(model, payoff, loss, &sol, y_init, &policies, &batch, p)?
    } else {
        let single = simulate_hedge(model, payoff, loss, &sol, y_init, &policies[0], &batch, p)?;
        (single.clone(), vec![single])
    };

    let mut text = String::from("policy,estimate_J,ci,attained\n");
    for row in &table {
        writeln!(
            text,
            "{},{},{},{}",
            row.policy, row.estimate_j, row.ci_halfwidth, row.attained
        )
        .expect("string write");
    }
    let prefix = &config.output_path;
    fs::write(out_file(out_dir, prefix, "_sim.csv"), text)?;
    let result = json!({
        "command": if scan { "scan-worst-case" } else { "simulate-game" },
        "y_init": y_init,
        "gamma": price.gamma,
        "worst": min,
        "table": table,
    });
    fs::write(
        out_file(out_dir, prefix, ".json"),
        serde_json::to_string_pretty(&result).expect("json"),
    )?;
    if assert_mode && !min.attained {
        eprintln!(
            "assert: worst-case policy {} misses the target (estimate {} < p - ci - bias)",
            min.policy, min.estimate_j
        );
        return Ok(EXIT_ASSERT);
    }
    Ok(0)
}

fn run_gdp_demo(config: &RunConfig, out_dir: &Path, assert_mode: bool) -> Result<i32, Failure> {
    let game = config
        .game
        .clone()
        .unwrap_or_else(DiscreteGame::bundled_two_period);
    let p_grid = config.p_grid.clone().expect("validated");

    let reach = enumerate_reachability(&game, &p_grid)?;
    let mut route_agreement = true;
    let mut values = Vec::new();
    for &z0 in &game.initial_states {
        let recursive = value_recursive(&game, z0)?;
        let enumerated = value_enumerated(&game, z0)?;
        route_agreement &= recursive == enumerated;
        values.push(json!({
            "state": z0,
            "value_recursive": recursive,
            "value_enumerated": enumerated,
        }));
    }
    let r1 = check_gdp1(&game, &p_grid)?;
    let r2 = check_gdp2(&game, &p_grid)?;
    let mutated = check_gdp1_with_mutation(&game, &p_grid, 0.5)?;

    let result = json!({
        "command": "gdp-demo",
        "values": values,
        "route_agreement": route_agreement,
        "reachable_states_per_period": reach.levels.iter().map(Vec::len).collect::<Vec<_>>(),
        "gdp1": r1,
        "gdp2": r2,
        "mutation_detected": !mutated.is_clean(),
    });
    fs::write(
        out_file(out_dir, &config.output_path, ".json"),
        serde_json::to_string_pretty(&result).expect("json"),
    )?;
    let clean = r1.is_clean() && r2.is_clean() && route_agreement && !mutated.is_clean();
    if assert_mode && !clean {
        eprintln!(
            "assert: gdp checks failed (gdp1={} gdp2={} routes={} mutation={})",
            r1.violations.len(),
            r2.violations.len(),
            route_agreement,
            !mutated.is_clean()
        );
        return Ok(EXIT_ASSERT);
    }
    Ok(0)
}
