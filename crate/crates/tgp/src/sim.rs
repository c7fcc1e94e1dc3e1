//! Monte Carlo simulation of the adversarial hedging game.
//!
//! Nature picks drift/volatility feedback policies inside the model
//! rectangle; the hedger follows the delta of the solved worst-case surface.
//! Prices move by exact lognormal steps with the coefficients frozen over
//! each interval, and the wealth updates with the discrete self-financing
//! rule `Y += u * (X_next / X - 1)`.
//!
//! Path generation is reproducible and thread-count independent: each path
//! owns a dedicated ChaCha stream keyed by `(seed, path index)`, results are
//! collected in path order, and aggregation uses pairwise summation so the
//! floating-point reduction order is fixed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bsb::{GridSolution, SolveError};
use crate::model::{Grid, LossTransform, MarketModel, Payoff};
use crate::pricer::price_target;

/// 99% two-sided normal quantile for confidence half-widths.
const Z99: f64 = 2.5758293035489004;

/// Hedge clipping bound as a multiple of the initial price.
const HEDGE_CAP_MULTIPLE: f64 = 50.0;

/// Fraction of paths allowed to leave the spatial grid.
const MAX_EXIT_FRACTION: f64 = 0.01;

/// Errors from the simulator.
#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    /// Too many paths left the solved grid; the grid is too small for the
    /// simulated dynamics.
    #[error("{exited} of {total} paths left the spatial grid (> {MAX_EXIT_FRACTION:.0e} fraction)")]
    GridExitOverflow { exited: usize, total: usize },
    #[error("adverse policy leaves the model rectangle: {0}")]
    PolicyOutOfBounds(String),
}

/// Deterministic batch description: shocks are a pure function of
/// `(seed, path index, step index)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathBatch {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
}

impl PathBatch {
    /// Standard-normal draws for one path, one per step.
    pub fn shocks(&self, path: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(path as u64);
        (0..self.n_steps)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect()
    }
}

/// Tabulated state-feedback rule on a `(t, x)` bin lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabulatedPolicy {
    /// Bin edges in time (ascending); cell `i` covers `[t_edges[i], t_edges[i+1])`.
    pub t_edges: Vec<f64>,
    /// Bin edges in price (ascending).
    pub x_edges: Vec<f64>,
    /// `mu[i][j]` for time bin `i`, price bin `j`.
    pub mu: Vec<Vec<f64>>,
    /// `sigma[i][j]` likewise.
    pub sigma: Vec<Vec<f64>>,
}

impl TabulatedPolicy {
    fn lookup(&self, t: f64, x: f64) -> (f64, f64) {
        let i = bin_index(&self.t_edges, t).min(self.mu.len() - 1);
        let j = bin_index(&self.x_edges, x).min(self.mu[i].len() - 1);
        (self.mu[i][j], self.sigma[i][j])
    }
}

fn bin_index(edges: &[f64], q: f64) -> usize {
    edges.partition_point(|&e| e <= q).saturating_sub(1)
}

/// Nature's strategy for the game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AdversePolicy {
    /// Fixed coefficients.
    Constant { mu: f64, sigma: f64 },
    /// Feedback rule built from the hedger's own surface: volatility picks
    /// the endpoint maximizing `sigma^2 * gamma(t, x)`; drift picks the
    /// endpoint maximizing `mu * (x * delta_surface - u)` (ties resolve to
    /// the upper endpoint).
    FeedbackWorstCase,
    /// Tabulated state feedback, clamped to the model rectangle.
    Custom(TabulatedPolicy),
}

impl AdversePolicy {
    /// Human-readable descriptor for result tables.
    pub fn describe(&self) -> String {
        match self {
            AdversePolicy::Constant { mu, sigma } => format!("constant(mu={mu},sigma={sigma})"),
            AdversePolicy::FeedbackWorstCase => "feedback-worst-case".to_string(),
            AdversePolicy::Custom(_) => "custom-tabulated".to_string(),
        }
    }

    /// Rejects constant policies outside the model rectangle.
    pub fn validate(&self, model: &MarketModel) -> Result<(), SimError> {
        if let AdversePolicy::Constant { mu, sigma } = self {
            if !model.contains(*mu, *sigma) {
                return Err(SimError::PolicyOutOfBounds(self.describe()));
            }
        }
        Ok(())
    }

    /// Coefficients for the coming step. `surface_delta`/`surface_gamma`
    /// are the hedger-surface greeks at `(t, x)`; `hedge` is the clipped
    /// currency position the hedger is about to hold.
    fn coefficients(
        &self,
        model: &MarketModel,
        t: f64,
        x: f64,
        surface_delta: f64,
        surface_gamma: f64,
        hedge: f64,
    ) -> (f64, f64) {
        match self {
            AdversePolicy::Constant { mu, sigma } => (*mu, *sigma),
            AdversePolicy::FeedbackWorstCase => {
                let sigma = if surface_gamma >= 0.0 {
                    model.sigma_hi
                } else {
                    model.sigma_lo
                };
                let slope = x * surface_delta - hedge;
                let mu = if slope >= 0.0 { model.mu_hi } else { model.mu_lo };
                (mu, sigma)
            }
            AdversePolicy::Custom(table) => {
                let (mu, sigma) = table.lookup(t, x);
                model.clamp(mu, sigma)
            }
        }
    }
}

/// Outcome of one simulated game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameResult {
    /// Batch mean of `Psi(Y_T - g(X_T))`.
    pub estimate_j: f64,
    /// 99% confidence half-width of the mean.
    pub ci_halfwidth: f64,
    pub n_paths: usize,
    pub n_steps: usize,
    /// Descriptor of the adverse policy that produced this estimate.
    pub policy: String,
    /// Whether `estimate_j >= p - ci - bias_allowance` for the target level.
    pub attained: bool,
    /// Target level the attainment flag refers to.
    pub target_p: f64,
    /// Discrete-time slack `x0 sigma_hi^2 T / n_steps` granted to `attained`.
    pub bias_allowance: f64,
    /// Paths absorbed at the grid edge with their delta frozen.
    pub exited_paths: usize,
}

/// Simulates the hedging game: the hedger follows the surface delta with a
/// clipped position, nature follows `policy`, and the expected disutility of
/// the terminal hedging error is estimated over the batch.
///
/// Deterministic for fixed `(batch, inputs)` regardless of thread count.
#[allow(clippy::too_many_arguments)]
pub fn simulate_hedge(
    model: &MarketModel,
    payoff: &Payoff,
    loss: &LossTransform,
    sol: &GridSolution,
    y_init: f64,
    policy: &AdversePolicy,
    batch: &PathBatch,
    target_p: f64,
) -> Result<GameResult, SimError> {
    policy.validate(model)?;
    let outcomes = run_paths(model, payoff, loss, sol, y_init, policy, batch);
    let exited = outcomes.iter().filter(|o| o.exited).count();
    if exited as f64 > MAX_EXIT_FRACTION * batch.n_paths as f64 {
        return Err(SimError::GridExitOverflow {
            exited,
            total: batch.n_paths,
        });
    }
    let losses: Vec<f64> = outcomes.iter().map(|o| o.loss).collect();
    let (mean, se) = mean_and_se(&losses);
    let ci = Z99 * se;
    let bias_allowance = bias_allowance(model, batch.n_steps);
    Ok(GameResult {
        estimate_j: mean,
        ci_halfwidth: ci,
        n_paths: batch.n_paths,
        n_steps: batch.n_steps,
        policy: policy.describe(),
        attained: mean >= target_p - ci - bias_allowance,
        target_p,
        bias_allowance,
        exited_paths: exited,
    })
}

/// Discrete-time slack granted to the attainment flag; the continuous-time
/// guarantee is only approached as the step count grows.
pub fn bias_allowance(model: &MarketModel, n_steps: usize) -> f64 {
    model.x0 * model.sigma_hi * model.sigma_hi * model.horizon_t / n_steps as f64
}

/// Empirical worst case over a finite family of adverse policies: the
/// minimizing policy's result plus the full table.
#[allow(clippy::too_many_arguments)]
pub fn worst_case_scan(
    model: &MarketModel,
    payoff: &Payoff,
    loss: &LossTransform,
    sol: &GridSolution,
    y_init: f64,
    policy_family: &[AdversePolicy],
    batch: &PathBatch,
    target_p: f64,
) -> Result<(GameResult, Vec<GameResult>), SimError> {
    assert!(!policy_family.is_empty(), "policy family must be nonempty");
    let mut table = Vec::with_capacity(policy_family.len());
    for policy in policy_family {
        table.push(simulate_hedge(
            model, payoff, loss, sol, y_init, policy, batch, target_p,
        )?);
    }
    let min = table
        .iter()
        .cloned()
        .min_by(|a, b| a.estimate_j.total_cmp(&b.estimate_j))
        .expect("nonempty table");
    Ok((min, table))
}

/// Brackets the empirical price: for each offset, starts the hedger at
/// `gamma + offset` and records whether the worst policy in the family still
/// attains the target level.
#[allow(clippy::too_many_arguments)]
pub fn reachability_probe(
    model: &MarketModel,
    payoff: &Payoff,
    loss: &LossTransform,
    p: f64,
    grid: &Grid,
    policy_family: &[AdversePolicy],
    batch: &PathBatch,
    y_offsets: &[f64],
) -> Result<Vec<(f64, bool)>, SimError> {
    let target = price_target(model, payoff, loss, p, grid)?;
    let sol = crate::bsb::solve_bsb(
        model,
        payoff,
        grid,
        crate::bsb::Scheme::ImplicitPolicyIteration,
    )?;
    let mut out = Vec::with_capacity(y_offsets.len());
    for &offset in y_offsets {
        let (min, _) = worst_case_scan(
            model,
            payoff,
            loss,
            &sol,
            target.gamma + offset,
            policy_family,
            batch,
            p,
        )?;
        out.push((offset, min.attained));
    }
    Ok(out)
}

/// Per-step batch statistics of the hedging-error increments
/// `(Y_{k+1} - w_{k+1}) - (Y_k - w_k)`: the worst-case surface dominates
/// every admissible scenario, so the means should be nonnegative up to
/// noise. Returns `(mean, standard error)` per step.
pub fn step_drift_stats(
    model: &MarketModel,
    payoff: &Payoff,
    loss: &LossTransform,
    sol: &GridSolution,
    y_init: f64,
    policy: &AdversePolicy,
    batch: &PathBatch,
) -> Result<Vec<(f64, f64)>, SimError> {
    policy.validate(model)?;
    let increments: Vec<Vec<f64>> = (0..batch.n_paths)
        .into_par_iter()
        .map(|path| {
            let mut sim = PathSim::new(model, payoff, loss, sol, y_init, policy, batch);
            let shocks = batch.shocks(path);
            let mut out = Vec::with_capacity(batch.n_steps);
            let mut tracked = sim.y
                - sim
                    .sol
                    .price_at(0.0, sim.x)
                    .expect("x0 lies inside the grid");
            for (k, &z) in shocks.iter().enumerate() {
                sim.advance(k, z);
                let t = sim.time_of(k + 1);
                let w = sim
                    .sol
                    .price_at(t, sim.x.clamp(sim.x_min, sim.x_max))
                    .expect("clamped query stays inside the grid");
                let now = sim.y - w;
                out.push(now - tracked);
                tracked = now;
            }
            out
        })
        .collect();
    let mut stats = Vec::with_capacity(batch.n_steps);
    let mut column = vec![0.0; batch.n_paths];
    for k in 0..batch.n_steps {
        for (p, row) in increments.iter().enumerate() {
            column[p] = row[k];
        }
        stats.push(mean_and_se(&column));
    }
    Ok(stats)
}

struct PathOutcome {
    loss: f64,
    exited: bool,
}

fn run_paths(
    model: &MarketModel,
    payoff: &Payoff,
    loss: &LossTransform,
    sol: &GridSolution,
    y_init: f64,
    policy: &AdversePolicy,
    batch: &PathBatch,
) -> Vec<PathOutcome> {
    (0..batch.n_paths)
        .into_par_iter()
        .map(|path| {
            let mut sim = PathSim::new(model, payoff, loss, sol, y_init, policy, batch);
            for (k, &z) in batch.shocks(path).iter().enumerate() {
                sim.advance(k, z);
            }
            PathOutcome {
                loss: loss.loss(payoff.eval(sim.x), sim.y),
                exited: sim.exited,
            }
        })
        .collect()
}

/// Single-path state and stepping rule shared by the estimators.
struct PathSim<'a> {
    model: &'a MarketModel,
    sol: &'a GridSolution,
    policy: &'a AdversePolicy,
    dt: f64,
    u_cap: f64,
    x_min: f64,
    x_max: f64,
    x: f64,
    y: f64,
    exited: bool,
    frozen_delta: f64,
    frozen_gamma: f64,
}

impl<'a> PathSim<'a> {
    fn new(
        model: &'a MarketModel,
        _payoff: &'a Payoff,
        _loss: &'a LossTransform,
        sol: &'a GridSolution,
        y_init: f64,
        policy: &'a AdversePolicy,
        batch: &PathBatch,
    ) -> Self {
        let xs = sol.space_nodes();
        PathSim {
            model,
            sol,
            policy,
            dt: model.horizon_t / batch.n_steps as f64,
            u_cap: HEDGE_CAP_MULTIPLE * model.x0,
            x_min: xs[0],
            x_max: *xs.last().unwrap(),
            x: model.x0,
            y: y_init,
            exited: false,
            frozen_delta: 0.0,
            frozen_gamma: 0.0,
        }
    }

    fn time_of(&self, k: usize) -> f64 {
        (k as f64 * self.dt).min(self.model.horizon_t)
    }

    /// Advances one interval: hedger rebalances, nature picks coefficients,
    /// the price takes an exact lognormal step.
    fn advance(&mut self, k: usize, z: f64) {
        let t = self.time_of(k);
        let (delta, gamma) = if self.exited {
            (self.frozen_delta, self.frozen_gamma)
        } else if self.x < self.x_min || self.x > self.x_max {
            self.exited = true;
            (self.frozen_delta, self.frozen_gamma)
        } else {
            let (d, g) = self
                .sol
                .greeks(t, self.x)
                .expect("in-bounds greeks query");
            self.frozen_delta = d;
            self.frozen_gamma = g;
            (d, g)
        };
        let hedge = (self.x * delta).clamp(-self.u_cap, self.u_cap);
        let (mu, sigma) = self
            .policy
            .coefficients(self.model, t, self.x, delta, gamma, hedge);
        let growth = ((mu - 0.5 * sigma * sigma) * self.dt + sigma * self.dt.sqrt() * z).exp();
        self.y += hedge * (growth - 1.0);
        self.x *= growth;
    }
}

/// Mean and standard error with a fixed (pairwise) reduction order.
fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        2 => v[0] + v[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
        }
    }
}
