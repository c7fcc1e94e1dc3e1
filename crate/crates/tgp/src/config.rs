//! JSON run configuration for the batch CLI.
//!
//! One document drives one command; unknown keys are rejected so typos fail
//! fast. See the repository README for the schema and examples.

use serde::{Deserialize, Serialize};

use crate::bsb::Scheme;
use crate::gdp::DiscreteGame;
use crate::model::{Grid, LossTransform, MarketModel, Payoff};
use crate::sim::AdversePolicy;

/// Batch command selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Solve the worst-case valuation surface and dump it.
    PriceBsb,
    /// Price the loss-constrained hedge.
    PriceTarget,
    /// Run the pointwise viscosity checker on the candidate surface.
    CheckViscosity,
    /// Simulate the hedging game under one adverse policy.
    SimulateGame,
    /// Simulate a family of adverse policies and take the empirical worst.
    ScanWorstCase,
    /// Enumerate a discrete game and machine-check both inclusions.
    GdpDemo,
}

/// Monte Carlo parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
}

/// One parsed run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub model: Option<MarketModel>,
    #[serde(default)]
    pub payoff: Option<Payoff>,
    #[serde(default)]
    pub loss: Option<LossTransform>,
    #[serde(default)]
    pub grid: Option<Grid>,
    #[serde(default)]
    pub mc: Option<McConfig>,
    /// Target expected-disutility level.
    #[serde(default)]
    pub p: Option<f64>,
    /// Scheme for the PDE solve (defaults to implicit policy iteration).
    #[serde(default)]
    pub scheme: Option<Scheme>,
    /// Starting wealth for `simulate-game` (defaults to the target price).
    #[serde(default)]
    pub y_init: Option<f64>,
    /// Adverse policies for the simulation commands (defaults to the
    /// feedback worst case).
    #[serde(default)]
    pub policies: Option<Vec<AdversePolicy>>,
    /// Sample-point count for `check-viscosity`.
    #[serde(default)]
    pub n_samples: Option<usize>,
    /// Discrete game for `gdp-demo` (defaults to the bundled two-period game).
    #[serde(default)]
    pub game: Option<DiscreteGame>,
    /// Level grid for `gdp-demo`.
    #[serde(default)]
    pub p_grid: Option<Vec<f64>>,
    /// Output file prefix (under the output directory).
    pub output_path: String,
}

impl RunConfig {
    /// Parses a config document, rejecting unknown keys.
    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Validates presence and invariants of the sub-configs the command
    /// needs; messages name the violating field.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let needs_market = !matches!(self.command, Command::GdpDemo);
        if needs_market {
            match &self.model {
                None => out.push("model: required for this command".to_string()),
                Some(m) => out.extend(m.violations().into_iter().map(|v| format!("model: {v}"))),
            }
            match &self.payoff {
                None => out.push("payoff: required for this command".to_string()),
                Some(p) => {
                    out.extend(p.violations().into_iter().map(|v| format!("payoff: {v}")))
                }
            }
            match &self.loss {
                None => out.push("loss: required for this command".to_string()),
                Some(l) => out.extend(l.violations().into_iter().map(|v| format!("loss: {v}"))),
            }
            match &self.grid {
                None => out.push("grid: required for this command".to_string()),
                Some(g) => out.extend(g.violations().into_iter().map(|v| format!("grid: {v}"))),
            }
            if let (Some(m), Some(g)) = (&self.model, &self.grid) {
                if !(m.x0 > g.x_min && m.x0 < g.x_max) {
                    out.push("grid: must cover model.x0 strictly inside (x_min, x_max)".into());
                }
            }
        }
        if matches!(
            self.command,
            Command::SimulateGame | Command::ScanWorstCase
        ) && self.mc.is_none()
        {
            out.push("mc: required for simulation commands".to_string());
        }
        if let Some(mc) = &self.mc {
            if mc.n_paths == 0 {
                out.push("mc.n_paths: must be positive".to_string());
            }
            if mc.n_steps == 0 {
                out.push("mc.n_steps: must be positive".to_string());
            }
        }
        if matches!(
            self.command,
            Command::PriceTarget | Command::SimulateGame | Command::ScanWorstCase
        ) && self.p.is_none()
        {
            out.push("p: required for this command".to_string());
        }
        if let Some(game) = &self.game {
            out.extend(game.violations().into_iter().map(|v| format!("game: {v}")));
        }
        if self.command == Command::GdpDemo {
            let grid_ok = self
                .p_grid
                .as_ref()
                .is_some_and(|g| g.len() >= 2);
            if !grid_ok {
                out.push("p_grid: gdp-demo needs at least two levels".to_string());
            }
        }
        if self.output_path.is_empty() {
            out.push("output_path: must be nonempty".to_string());
        }
        out
    }
}
