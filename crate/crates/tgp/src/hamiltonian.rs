//! Operator toolbox for the dynamic-programming PDE and a pointwise
//! viscosity sub/supersolution checker.
//!
//! With state `(x, y)`, auxiliary level state `p`, hedge `u`, martingale
//! integrand `a` and adverse pair `v = (mu, sigma)`, the drift-diffusion
//! operator acting on a test function with time slope `grad_t`, gradient
//! `q = (q_x, q_p)` and Hessian `A` is
//!
//! ```text
//! -grad_t + F = -grad_t + u mu - mu x q_x
//!               - 1/2 (sigma^2 x^2 A_xx + a^2 A_pp + 2 sigma x a A_xp).
//! ```
//!
//! The feasible `(u, a)` are those matching the candidate's diffusion up to
//! a relaxation `eps`: `|u sigma - (q_x x sigma + q_p a)| <= eps`. Two
//! discretized relaxed operators bracket the equation:
//!
//! - [`hamiltonian_upper`]: min over an adverse grid of the sup over
//!   kernel-feasible controls (hedges on a clipped grid, integrands solved
//!   from the kernel), evaluated along a decreasing `eps` schedule;
//! - [`hamiltonian_lower`]: max over a family of named feasible selectors of
//!   the min over the adverse grid.
//!
//! [`check_viscosity_candidate`] applies both to the additive candidate
//! `gamma(t, x, p) = w(t, x) + PsiInv(p)` built from a solved surface, with
//! derivatives taken by the same finite differences the scheme marched with,
//! and reports a verdict per sample point.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

use crate::bsb::{GridSolution, Scheme};
use crate::model::{EvalPoint, LossTransform, MarketModel};

/// Default relaxation schedule, geometric from 1e-2 down to 1e-8.
pub const DEFAULT_EPS_SCHEDULE: [f64; 7] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8];

/// Stabilization threshold between consecutive schedule values.
pub const EPS_STABILIZATION: f64 = 1e-8;

/// Hedge grid resolution for the upper operator's supremum.
const HEDGE_GRID_POINTS: usize = 41;

/// Errors from the operator toolbox.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum HamiltonianError {
    /// The level-direction gradient vanishes; the kernel cannot be solved
    /// for the integrand and the checker reports `Inconclusive`.
    #[error("degenerate gradient: q_p = 0, martingale integrand is unconstrained")]
    DegenerateGradient,
}

/// Hedger control pair `(u, a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlPair {
    /// Currency amount invested in the risky asset.
    pub hedge: f64,
    /// Integrand of the auxiliary level martingale.
    pub martingale_integrand: f64,
}

/// Adverse player's pair `(mu, sigma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdverseControl {
    pub mu: f64,
    pub sigma: f64,
}

/// Drift-diffusion operator value `-grad_t + F(theta, ctrl, adverse)`.
pub fn f_operator(
    theta: &EvalPoint,
    ctrl: ControlPair,
    adverse: AdverseControl,
    grad_t: f64,
) -> f64 {
    let (u, a) = (ctrl.hedge, ctrl.martingale_integrand);
    let (mu, sigma) = (adverse.mu, adverse.sigma);
    let x = theta.x;
    -grad_t + u * mu
        - mu * x * theta.q_x
        - 0.5
            * (sigma * sigma * x * x * theta.a_xx
                + a * a * theta.a_pp
                + 2.0 * sigma * x * a * theta.a_xp)
}

/// Diffusion mismatch `|u sigma - (q_x x sigma + q_p a)|`; membership in the
/// eps-relaxed kernel is `kernel_residual <= eps`.
pub fn kernel_residual(theta: &EvalPoint, ctrl: ControlPair, adverse: AdverseControl) -> f64 {
    let sigma = adverse.sigma;
    (ctrl.hedge * sigma - (theta.q_x * theta.x * sigma + theta.q_p * ctrl.martingale_integrand))
        .abs()
}

/// Solves the kernel constraint for the martingale integrand:
/// `a = (u sigma - q_x x sigma - eps zeta) / q_p`, `zeta in [-1, 1]`.
///
/// The returned pair has `kernel_residual == |eps zeta|`.
pub fn kernel_solve_a(
    theta: &EvalPoint,
    hedge: f64,
    adverse: AdverseControl,
    zeta: f64,
    eps: f64,
) -> Result<f64, HamiltonianError> {
    if theta.q_p == 0.0 {
        return Err(HamiltonianError::DegenerateGradient);
    }
    let sigma = adverse.sigma;
    Ok((hedge * sigma - theta.q_x * theta.x * sigma - eps * zeta) / theta.q_p)
}

/// Value of a discretized relaxed operator together with the relaxation at
/// which it stabilized and the minimizing adverse pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianValue {
    pub value: f64,
    /// Schedule entry at which consecutive values agreed to `EPS_STABILIZATION`.
    pub eps: f64,
    pub argmin: AdverseControl,
}

/// Adverse grid: `n` uniform volatilities (just `sigma_hi` when `n == 1`)
/// crossed with `n` uniform drifts plus the always-feasible drift 0, so a
/// finer grid is a superset of a coarser one.
fn adverse_grid(model: &MarketModel, n: usize) -> (Vec<f64>, Vec<f64>) {
    let sigmas = if n <= 1 {
        vec![model.sigma_hi]
    } else {
        (0..n)
            .map(|k| {
                model.sigma_lo
                    + (model.sigma_hi - model.sigma_lo) * k as f64 / (n - 1) as f64
            })
            .collect()
    };
    let mut mus = vec![0.0];
    if n > 1 {
        for k in 0..n {
            mus.push(model.mu_lo + (model.mu_hi - model.mu_lo) * k as f64 / (n - 1) as f64);
        }
    }
    (mus, sigmas)
}

/// Hedge clipping bound mirroring the truncated strategy classes.
pub fn hedge_bound(theta: &EvalPoint) -> f64 {
    10.0 * theta.x.abs() * theta.q_x.abs().max(1.0)
}

/// Discretized upper relaxed operator: min over the adverse grid of the sup
/// over kernel-feasible `(u, a)` with hedges on a clipped grid and
/// integrands solved from the kernel at relaxations `zeta in {-1, 0, 1}`.
///
/// Walks `eps_schedule` in order and stops once consecutive values agree to
/// `EPS_STABILIZATION`; otherwise reports the last (smallest) entry.
pub fn hamiltonian_upper(
    theta: &EvalPoint,
    grad_t: f64,
    model: &MarketModel,
    eps_schedule: &[f64],
    v_grid_n: usize,
) -> Result<HamiltonianValue, HamiltonianError> {
    if theta.q_p == 0.0 {
        return Err(HamiltonianError::DegenerateGradient);
    }
    let (mus, sigmas) = adverse_grid(model, v_grid_n);
    let u_max = hedge_bound(theta);
    let mut hedges = Vec::with_capacity(HEDGE_GRID_POINTS + 1);
    for k in 0..HEDGE_GRID_POINTS {
        hedges.push(-u_max + 2.0 * u_max * k as f64 / (HEDGE_GRID_POINTS - 1) as f64);
    }
    // The kernel-exact hedge: F is attained there when the sup is interior.
    hedges.push(theta.x * theta.q_x);

    let evaluate = |eps: f64| -> (f64, AdverseControl) {
        let mut best = f64::INFINITY;
        let mut argmin = AdverseControl {
            mu: mus[0],
            sigma: sigmas[0],
        };
        for &sigma in &sigmas {
            for &mu in &mus {
                let adverse = AdverseControl { mu, sigma };
                let mut sup = f64::NEG_INFINITY;
                for &u in &hedges {
                    for zeta in [-1.0, 0.0, 1.0] {
                        let a = (u * sigma - theta.q_x * theta.x * sigma - eps * zeta)
                            / theta.q_p;
                        let ctrl = ControlPair {
                            hedge: u,
                            martingale_integrand: a,
                        };
                        sup = sup.max(f_operator(theta, ctrl, adverse, grad_t));
                    }
                }
                if sup < best {
                    best = sup;
                    argmin = adverse;
                }
            }
        }
        (best, argmin)
    };

    let mut prev: Option<f64> = None;
    let mut out = None;
    for &eps in eps_schedule {
        let (value, argmin) = evaluate(eps);
        let stabilized = prev.is_some_and(|p| (p - value).abs() < EPS_STABILIZATION);
        out = Some(HamiltonianValue { value, eps, argmin });
        if stabilized {
            break;
        }
        prev = Some(value);
    }
    Ok(out.expect("nonempty eps schedule"))
}

/// Named feasible selector `(theta, v) -> (u, a)` for the lower operator.
#[derive(Clone)]
pub struct Selector {
    pub name: &'static str,
    eval: Arc<dyn Fn(&EvalPoint, AdverseControl) -> ControlPair + Send + Sync>,
}

impl fmt::Debug for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Selector").field("name", &self.name).finish()
    }
}

impl Selector {
    pub fn new(
        name: &'static str,
        eval: impl Fn(&EvalPoint, AdverseControl) -> ControlPair + Send + Sync + 'static,
    ) -> Self {
        Selector {
            name,
            eval: Arc::new(eval),
        }
    }

    pub fn control(&self, theta: &EvalPoint, adverse: AdverseControl) -> ControlPair {
        (self.eval)(theta, adverse)
    }
}

/// Default selector family: the tangent hedge `(x q_x, 0)` and the flat
/// hedge `(0, a)` with `a` solved from the kernel. Both have kernel
/// residual zero wherever `q_p != 0`.
pub fn default_selectors() -> Vec<Selector> {
    vec![
        Selector::new("tangent-hedge", |theta, _| ControlPair {
            hedge: theta.x * theta.q_x,
            martingale_integrand: 0.0,
        }),
        Selector::new("flat-hedge-kernel", |theta, adverse| {
            let a = if theta.q_p == 0.0 {
                f64::NAN
            } else {
                (-theta.q_x * theta.x * adverse.sigma) / theta.q_p
            };
            ControlPair {
                hedge: 0.0,
                martingale_integrand: a,
            }
        }),
    ]
}

/// Discretized lower relaxed operator: max over the selector family of the
/// min over the adverse grid of `-grad_t + F` at the selector's control.
///
/// Selectors that evaluate non-finitely at `theta` are skipped; an empty (or
/// fully skipped) family yields the `-inf` sentinel.
pub fn hamiltonian_lower(
    theta: &EvalPoint,
    grad_t: f64,
    model: &MarketModel,
    selectors: &[Selector],
    v_grid_n: usize,
) -> f64 {
    let (mus, sigmas) = adverse_grid(model, v_grid_n);
    let mut best = f64::NEG_INFINITY;
    for selector in selectors {
        let mut worst = f64::INFINITY;
        let mut finite = true;
        for &sigma in &sigmas {
            for &mu in &mus {
                let adverse = AdverseControl { mu, sigma };
                let ctrl = selector.control(theta, adverse);
                let value = f_operator(theta, ctrl, adverse, grad_t);
                if !value.is_finite() {
                    finite = false;
                    break;
                }
                worst = worst.min(value);
            }
            if !finite {
                break;
            }
        }
        if finite {
            best = best.max(worst);
        }
    }
    best
}

/// Outcome of a pointwise viscosity check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Pass => write!(f, "pass"),
            Verdict::Fail => write!(f, "fail"),
            Verdict::Inconclusive => write!(f, "inconclusive"),
        }
    }
}

/// Per-point result of [`check_viscosity_candidate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckerReport {
    /// Lattice point the sample snapped to.
    pub t: f64,
    pub x: f64,
    pub p: f64,
    /// `-grad_t + upper operator`; a supersolution needs `>= -tol`.
    pub supersolution_residual: f64,
    /// `-grad_t + lower operator`; a subsolution needs `<= tol`.
    pub subsolution_residual: f64,
    /// Control/adverse pairs evaluated for this point.
    pub kernel_samples: usize,
    pub verdict: Verdict,
}

/// Checker resolution of the adverse grid.
const CHECKER_V_GRID: usize = 5;

/// Verifies the two viscosity inequalities for the additive candidate
/// `gamma(t, x, p) = w(t, x) + PsiInv(p)` at each sample point.
///
/// Samples snap to the nearest lattice node whose stencil the marching
/// scheme actually used: the time slope is the one-sided quotient in the
/// direction the scheme stepped and the curvature comes from the slice the
/// scheme's discrete equation references. Level-direction derivatives of the
/// candidate are analytic. Points where the level gradient degenerates are
/// reported `Inconclusive`.
pub fn check_viscosity_candidate(
    sol: &GridSolution,
    loss: &LossTransform,
    sample_points: &[(f64, f64, f64)],
) -> Vec<CheckerReport> {
    let tol = checker_tolerance(sol);
    sample_points
        .par_iter()
        .map(|&(t, x, p)| check_point(sol, loss, t, x, p, tol))
        .collect()
}

/// Pass/fail tolerance used by the checker for a given solution.
pub fn checker_tolerance(sol: &GridSolution) -> f64 {
    (10.0 * sol.residual_tol()).max(1e-6)
}

fn check_point(
    sol: &GridSolution,
    loss: &LossTransform,
    t: f64,
    x: f64,
    p: f64,
    tol: f64,
) -> CheckerReport {
    let ts = sol.time_nodes();
    let xs = sol.space_nodes();
    let n_t = ts.len() - 1;

    // Snap to the nearest node with a valid stencil.
    let j = nearest_index(xs, x).clamp(1, xs.len() - 2);
    let i = match sol.scheme() {
        Scheme::ImplicitPolicyIteration => nearest_index(ts, t).min(n_t - 1),
        Scheme::ExplicitEuler => nearest_index(ts, t).clamp(1, n_t),
    };
    let (t, x) = (ts[i], xs[j]);

    let inconclusive = |samples: usize| CheckerReport {
        t,
        x,
        p,
        supersolution_residual: f64::NAN,
        subsolution_residual: f64::NAN,
        kernel_samples: samples,
        verdict: Verdict::Inconclusive,
    };

    let (Ok(shift), Ok(q_p), Ok(a_pp)) = (
        loss.psi_inverse(p),
        loss.psi_inverse_d1(p),
        loss.psi_inverse_d2(p),
    ) else {
        return inconclusive(0);
    };
    if !(q_p > 0.0) {
        return inconclusive(0);
    }

    let grad_t = match sol.scheme() {
        Scheme::ImplicitPolicyIteration => {
            (sol.value_at_node(i + 1, j) - sol.value_at_node(i, j)) / (ts[i + 1] - ts[i])
        }
        Scheme::ExplicitEuler => {
            (sol.value_at_node(i, j) - sol.value_at_node(i - 1, j)) / (ts[i] - ts[i - 1])
        }
    };
    let (delta, gamma) = sol
        .greeks(t, x)
        .expect("snapped node lies inside the domain");
    let theta = EvalPoint {
        x,
        y: sol.value_at_node(i, j) + shift,
        q_x: delta,
        q_p,
        a_xx: gamma,
        a_xp: 0.0,
        a_pp,
    };

    let model = sol.model();
    let upper = match hamiltonian_upper(&theta, grad_t, model, &DEFAULT_EPS_SCHEDULE, CHECKER_V_GRID)
    {
        Ok(v) => v,
        Err(HamiltonianError::DegenerateGradient) => return inconclusive(0),
    };
    let selectors = default_selectors();
    let lower = hamiltonian_lower(&theta, grad_t, model, &selectors, CHECKER_V_GRID);

    // Bookkeeping: hedge grid x zeta x adverse grid per schedule step, plus
    // the selector sweeps.
    let (mus, sigmas) = adverse_grid(model, CHECKER_V_GRID);
    let kernel_samples =
        (HEDGE_GRID_POINTS + 1) * 3 * mus.len() * sigmas.len() + selectors.len() * mus.len() * sigmas.len();

    let verdict = if upper.value >= -tol && lower <= tol {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    CheckerReport {
        t,
        x,
        p,
        supersolution_residual: upper.value,
        subsolution_residual: lower,
        kernel_samples,
        verdict,
    }
}

fn nearest_index(nodes: &[f64], q: f64) -> usize {
    let k = nodes.partition_point(|&n| n < q);
    if k == 0 {
        0
    } else if k >= nodes.len() {
        nodes.len() - 1
    } else if (q - nodes[k - 1]) <= (nodes[k] - q) {
        k - 1
    } else {
        k
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn theta_linear() -> EvalPoint {
        // Candidate w = x with identity level shift: q_x = 1, q_p = 1, A = 0.
        EvalPoint {
            x: 100.0,
            y: 100.0,
            q_x: 1.0,
            q_p: 1.0,
            a_xx: 0.0,
            a_xp: 0.0,
            a_pp: 0.0,
        }
    }

    fn model() -> MarketModel {
        MarketModel {
            mu_lo: -0.1,
            mu_hi: 0.1,
            sigma_lo: 0.1,
            sigma_hi: 0.3,
            x0: 100.0,
            horizon_t: 1.0,
        }
    }

    #[test]
    fn f_operator_degenerate_inputs_vanish() {
        let theta = EvalPoint {
            x: 1.0,
            y: 0.0,
            q_x: 0.0,
            q_p: 0.0,
            a_xx: 0.0,
            a_xp: 0.0,
            a_pp: 0.0,
        };
        let ctrl = ControlPair {
            hedge: 0.0,
            martingale_integrand: 0.0,
        };
        let adverse = AdverseControl { mu: 0.0, sigma: 0.5 };
        assert_eq!(f_operator(&theta, ctrl, adverse, 0.0), 0.0);
    }

    #[test]
    fn f_operator_direct_arithmetic() {
        let theta = EvalPoint {
            x: 2.0,
            y: 0.0,
            q_x: 0.5,
            q_p: 1.0,
            a_xx: 1.0,
            a_xp: 0.0,
            a_pp: 0.0,
        };
        let ctrl = ControlPair {
            hedge: 1.0,
            martingale_integrand: 0.0,
        };
        let adverse = AdverseControl { mu: 0.0, sigma: 0.2 };
        let got = f_operator(&theta, ctrl, adverse, 0.0);
        assert!((got - (-0.08)).abs() < 1e-15, "{got}");
    }

    #[test]
    fn tangent_hedge_cancels_drift_terms() {
        // u = x q_x with a = 0: drift terms cancel for every mu, leaving the
        // pure diffusion part.
        let theta = EvalPoint {
            x: 3.0,
            y: 0.0,
            q_x: 0.7,
            q_p: 2.0,
            a_xx: 0.4,
            a_xp: 0.0,
            a_pp: 0.0,
        };
        for mu in [-0.5, 0.0, 1.2] {
            let adverse = AdverseControl { mu, sigma: 0.25 };
            let ctrl = ControlPair {
                hedge: theta.x * theta.q_x,
                martingale_integrand: 0.0,
            };
            let want = -0.5 * 0.25f64.powi(2) * 9.0 * 0.4;
            let got = f_operator(&theta, ctrl, adverse, 0.0);
            assert!((got - want).abs() < 1e-14, "mu={mu} got={got}");
        }
    }

    #[test]
    fn kernel_residual_examples() {
        let theta = EvalPoint {
            x: 2.0,
            y: 0.0,
            q_x: 0.5,
            q_p: 1.0,
            a_xx: 0.0,
            a_xp: 0.0,
            a_pp: 0.0,
        };
        let adverse = AdverseControl { mu: 0.0, sigma: 0.2 };
        let tangent = ControlPair {
            hedge: theta.x * theta.q_x,
            martingale_integrand: 0.0,
        };
        assert_eq!(kernel_residual(&theta, tangent, adverse), 0.0);
        let theta0 = EvalPoint { q_x: 0.0, ..theta };
        let off = ControlPair {
            hedge: 0.0,
            martingale_integrand: 1.0,
        };
        assert_eq!(kernel_residual(&theta0, off, adverse), 1.0);
    }

    #[test]
    fn kernel_solve_recovers_exact_membership() {
        let theta = EvalPoint {
            x: 1.0,
            y: 0.0,
            q_x: 0.0,
            q_p: 2.0,
            a_xx: 0.0,
            a_xp: 0.0,
            a_pp: 0.0,
        };
        let adverse = AdverseControl { mu: 0.0, sigma: 0.2 };
        let a = kernel_solve_a(&theta, 1.0, adverse, 0.0, 0.0).unwrap();
        assert!((a - 0.1).abs() < 1e-15, "{a}");
        let ctrl = ControlPair {
            hedge: 1.0,
            martingale_integrand: a,
        };
        assert!(kernel_residual(&theta, ctrl, adverse) < 1e-15);
    }

    #[test]
    fn kernel_solve_rejects_degenerate_gradient() {
        let theta = EvalPoint {
            x: 1.0,
            y: 0.0,
            q_x: 0.3,
            q_p: 0.0,
            a_xx: 0.0,
            a_xp: 0.0,
            a_pp: 0.0,
        };
        let adverse = AdverseControl { mu: 0.0, sigma: 0.2 };
        assert_eq!(
            kernel_solve_a(&theta, 1.0, adverse, 0.0, 1e-3),
            Err(HamiltonianError::DegenerateGradient)
        );
    }

    #[test]
    fn zeta_relaxation_hits_the_eps_boundary() {
        let theta = theta_linear();
        let adverse = AdverseControl { mu: 0.05, sigma: 0.22 };
        for zeta in [-1.0, -0.3, 0.0, 0.8, 1.0] {
            let eps = 1e-3;
            let a = kernel_solve_a(&theta, 7.0, adverse, zeta, eps).unwrap();
            let ctrl = ControlPair {
                hedge: 7.0,
                martingale_integrand: a,
            };
            let r = kernel_residual(&theta, ctrl, adverse);
            assert!((r - (eps * zeta).abs()).abs() < 1e-12, "zeta={zeta} r={r}");
        }
    }

    #[test]
    fn upper_operator_vanishes_on_the_linear_candidate() {
        let got = hamiltonian_upper(&theta_linear(), 0.0, &model(), &DEFAULT_EPS_SCHEDULE, 5)
            .unwrap();
        assert!(got.value.abs() < 1e-9, "value={}", got.value);
    }

    #[test]
    fn upper_operator_decreases_with_adverse_refinement() {
        // Finer adverse grids are supersets, so the min cannot increase.
        let theta = EvalPoint {
            x: 100.0,
            y: 10.0,
            q_x: 0.5,
            q_p: 1.0,
            a_xx: 0.02,
            a_xp: 0.0,
            a_pp: 0.0,
        };
        let coarse = hamiltonian_upper(&theta, 0.0, &model(), &DEFAULT_EPS_SCHEDULE, 1)
            .unwrap()
            .value;
        let fine = hamiltonian_upper(&theta, 0.0, &model(), &DEFAULT_EPS_SCHEDULE, 21)
            .unwrap()
            .value;
        assert!(fine <= coarse + 1e-12, "coarse={coarse} fine={fine}");
    }

    #[test]
    fn upper_operator_requires_level_gradient() {
        let theta = EvalPoint {
            q_p: 0.0,
            ..theta_linear()
        };
        assert_eq!(
            hamiltonian_upper(&theta, 0.0, &model(), &DEFAULT_EPS_SCHEDULE, 5),
            Err(HamiltonianError::DegenerateGradient)
        );
    }

    #[test]
    fn lower_never_exceeds_upper() {
        let points = [
            theta_linear(),
            EvalPoint {
                x: 80.0,
                y: 5.0,
                q_x: 0.3,
                q_p: 1.5,
                a_xx: 0.01,
                a_xp: 0.0,
                a_pp: 0.4,
            },
            EvalPoint {
                x: 120.0,
                y: 3.0,
                q_x: -0.2,
                q_p: 0.7,
                a_xx: -0.05,
                a_xp: 0.0,
                a_pp: 0.0,
            },
        ];
        let m = model();
        let selectors = default_selectors();
        for theta in &points {
            let upper = hamiltonian_upper(theta, 0.1, &m, &DEFAULT_EPS_SCHEDULE, 5)
                .unwrap()
                .value;
            let lower = hamiltonian_lower(theta, 0.1, &m, &selectors, 5);
            assert!(lower <= upper + 1e-9, "lower={lower} upper={upper}");
        }
    }

    #[test]
    fn empty_selector_family_yields_sentinel() {
        let got = hamiltonian_lower(&theta_linear(), 0.0, &model(), &[], 5);
        assert_eq!(got, f64::NEG_INFINITY);
    }

    #[test]
    fn adding_selectors_only_raises_the_lower_operator() {
        let theta = EvalPoint {
            x: 90.0,
            y: 2.0,
            q_x: 0.4,
            q_p: 1.0,
            a_xx: 0.015,
            a_xp: 0.0,
            a_pp: 0.0,
        };
        let m = model();
        let base = hamiltonian_lower(&theta, 0.0, &m, &default_selectors(), 5);
        let mut family = default_selectors();
        family.push(Selector::new("adversarially-bad", |theta, _| ControlPair {
            hedge: -5.0 * theta.x,
            martingale_integrand: 0.0,
        }));
        let extended = hamiltonian_lower(&theta, 0.0, &m, &family, 5);
        assert!(extended >= base, "base={base} extended={extended}");
    }

    #[test]
    fn single_constant_adverse_grid_degenerates_to_f_operator() {
        let theta = theta_linear();
        let m = MarketModel {
            mu_lo: 0.0,
            mu_hi: 0.0,
            sigma_lo: 0.3,
            sigma_hi: 0.3,
            ..model()
        };
        let family = vec![Selector::new("tangent", |th: &EvalPoint, _| ControlPair {
            hedge: th.x * th.q_x,
            martingale_integrand: 0.0,
        })];
        let got = hamiltonian_lower(&theta, 0.0, &m, &family, 1);
        let want = f_operator(
            &theta,
            ControlPair {
                hedge: theta.x * theta.q_x,
                martingale_integrand: 0.0,
            },
            AdverseControl { mu: 0.0, sigma: 0.3 },
            0.0,
        );
        assert_eq!(got, want);
    }
}
