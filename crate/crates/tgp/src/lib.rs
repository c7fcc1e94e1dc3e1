//! Target-game pricing under drift and volatility uncertainty.
//!
//! The library prices loss-constrained hedges against an adverse player who
//! picks the drift and volatility of the underlying inside a rectangle
//! `[mu_lo, mu_hi] x [sigma_lo, sigma_hi]`. It ships five cooperating
//! subsystems:
//!
//! - [`model`]: shared domain types (market rectangle, payoffs, loss
//!   transforms, grids, evaluation points).
//! - [`bsb`]: a monotone finite-difference solver for the uncertain-volatility
//!   (Black–Scholes–Barenblatt) equation
//!   `w_t + sup_{sigma} 1/2 sigma^2 x^2 w_xx = 0`.
//! - [`pricer`]: the loss-constrained target price
//!   `gamma(t, x, p) = w(t, x) + PsiInv(p)` together with a Monte Carlo
//!   falsifier for candidate prices.
//! - [`hamiltonian`]: the relaxed-Hamiltonian operator toolbox and a pointwise
//!   viscosity sub/supersolution checker for the candidate price surface.
//! - [`sim`]: Monte Carlo simulation of the adversarial hedging game with
//!   feedback worst-case policies and reproducible parallel path generation.
//! - [`gdp`]: exact reachability sets, value martingales and dynamic
//!   programming inclusion checks for finite discrete games.
//!
//! The `tgp` binary exposes all of this behind a JSON-configured CLI; see
//! [`config`] and [`runner`].

pub mod bsb;
pub mod config;
pub mod gdp;
pub mod hamiltonian;
pub mod model;
pub mod pricer;
pub mod runner;
pub mod sim;

pub use bsb::{solve_bsb, GridSolution, Scheme, SolveError};
pub use model::{
    psi_inverse, validate_model, EvalPoint, Grid, LossTransform, MarketModel, ModelError, Payoff,
    Stretch,
};
pub use pricer::{jensen_lower_bound, price_target, TargetPrice};
