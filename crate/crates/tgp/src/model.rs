//! Domain types shared by the solvers, the checker, the simulator and the CLI.
//!
//! Everything here is immutable after construction and safe to share across
//! threads; the only logic is validation and analytic helpers (no schemes).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors produced by the domain types.
#[derive(Debug, Error)]
pub enum ModelError {
    /// One or more construction invariants are violated.
    #[error("invalid {context}: {}", violations.join("; "))]
    Invalid {
        context: &'static str,
        violations: Vec<String>,
    },
    /// A target level is not attained by the loss transform.
    #[error("target level {level} is outside the range of the loss transform")]
    OutOfRange { level: f64 },
}

fn invalid(context: &'static str, violations: Vec<String>) -> ModelError {
    ModelError::Invalid {
        context,
        violations,
    }
}

// ---------------------------------------------------------------------------
// Market model
// ---------------------------------------------------------------------------

/// Drift/volatility uncertainty rectangle plus initial state and horizon.
///
/// The adverse player may pick any `(mu, sigma)` process with values in
/// `[mu_lo, mu_hi] x [sigma_lo, sigma_hi]`. The drift interval must contain
/// zero; the explicit price formula needs the driftless scenario to be
/// feasible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketModel {
    /// Drift lower bound (1/time); must be <= 0.
    pub mu_lo: f64,
    /// Drift upper bound (1/time); must be >= 0.
    pub mu_hi: f64,
    /// Volatility lower bound (1/sqrt(time)); 0 is allowed.
    pub sigma_lo: f64,
    /// Volatility upper bound (1/sqrt(time)).
    pub sigma_hi: f64,
    /// Initial asset price (currency, > 0).
    pub x0: f64,
    /// Maturity (time, > 0).
    pub horizon_t: f64,
}

impl MarketModel {
    /// Lists every violated invariant; empty means the model is valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.mu_lo <= 0.0) {
            out.push(format!("mu_lo must be <= 0 (got {})", self.mu_lo));
        }
        if !(self.mu_hi >= 0.0) {
            out.push(format!("mu_hi must be >= 0 (got {})", self.mu_hi));
        }
        if !(self.sigma_lo >= 0.0) {
            out.push(format!("sigma_lo must be >= 0 (got {})", self.sigma_lo));
        }
        if !(self.sigma_lo <= self.sigma_hi) {
            out.push(format!(
                "sigma_lo exceeds sigma_hi ({} > {})",
                self.sigma_lo, self.sigma_hi
            ));
        }
        if !(self.x0 > 0.0) {
            out.push(format!("x0 must be > 0 (got {})", self.x0));
        }
        if !(self.horizon_t > 0.0) {
            out.push(format!("horizon_t must be > 0 (got {})", self.horizon_t));
        }
        out
    }

    /// Returns the model if all invariants hold.
    pub fn validated(self) -> Result<Self, ModelError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(self)
        } else {
            Err(invalid("market model", v))
        }
    }

    /// True when `(mu, sigma)` lies inside the uncertainty rectangle.
    pub fn contains(&self, mu: f64, sigma: f64) -> bool {
        mu >= self.mu_lo && mu <= self.mu_hi && sigma >= self.sigma_lo && sigma <= self.sigma_hi
    }

    /// Projects `(mu, sigma)` onto the uncertainty rectangle.
    pub fn clamp(&self, mu: f64, sigma: f64) -> (f64, f64) {
        (
            mu.clamp(self.mu_lo, self.mu_hi),
            sigma.clamp(self.sigma_lo, self.sigma_hi),
        )
    }
}

/// Reports every violated [`MarketModel`] invariant (empty = valid).
pub fn validate_model(model: &MarketModel) -> Vec<String> {
    model.violations()
}

// ---------------------------------------------------------------------------
// Loss transform
// ---------------------------------------------------------------------------

/// Strictly increasing concave disutility transform with an analytic inverse.
///
/// The expected-loss target is expressed through `Psi`: a hedge attains level
/// `p` when `E[Psi(Y_T - g(X_T))] >= p`. Shipped instances:
///
/// - `Identity`: `Psi(x) = x`.
/// - `Exponential`: `Psi(x) = 1 - exp(-lambda x)`, bounded above by 1.
/// - `UserTabulated`: monotone concave piecewise-linear table, extrapolated
///   with the end slopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossTransform {
    Identity,
    Exponential { lambda: f64 },
    UserTabulated { points: Vec<(f64, f64)> },
}

impl LossTransform {
    /// Lists every violated invariant; empty means the transform is valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            LossTransform::Identity => {}
            LossTransform::Exponential { lambda } => {
                if !(*lambda > 0.0) {
                    out.push(format!("lambda must be > 0 (got {lambda})"));
                }
            }
            LossTransform::UserTabulated { points } => {
                if points.len() < 2 {
                    out.push("table needs at least 2 points".to_string());
                    return out;
                }
                let mut prev_slope = f64::INFINITY;
                for w in points.windows(2) {
                    let (x0, y0) = w[0];
                    let (x1, y1) = w[1];
                    if !(x1 > x0) {
                        out.push(format!("table abscissae must increase ({x0} -> {x1})"));
                        return out;
                    }
                    let slope = (y1 - y0) / (x1 - x0);
                    if !(slope > 0.0) {
                        out.push(format!(
                            "table must be strictly increasing (slope {slope} on [{x0}, {x1}])"
                        ));
                    }
                    if slope > prev_slope + 1e-12 * slope.abs().max(1.0) {
                        out.push(format!(
                            "table must be concave (slope rises to {slope} on [{x0}, {x1}])"
                        ));
                    }
                    prev_slope = slope;
                }
            }
        }
        out
    }

    /// Returns the transform if all invariants hold.
    pub fn validated(self) -> Result<Self, ModelError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(self)
        } else {
            Err(invalid("loss transform", v))
        }
    }

    /// Evaluates `Psi(x)`.
    pub fn psi(&self, x: f64) -> f64 {
        match self {
            LossTransform::Identity => x,
            LossTransform::Exponential { lambda } => 1.0 - (-lambda * x).exp(),
            LossTransform::UserTabulated { points } => {
                interp_extrapolate(points, x, |&(a, _)| a, |&(_, b)| b)
            }
        }
    }

    /// Evaluates the hedging-error disutility `Psi(y - g_x)`.
    pub fn loss(&self, g_x: f64, y: f64) -> f64 {
        self.psi(y - g_x)
    }

    /// Evaluates `PsiInv(p)`; errors when `p` is not attained by `Psi`.
    pub fn psi_inverse(&self, p: f64) -> Result<f64, ModelError> {
        match self {
            LossTransform::Identity => Ok(p),
            LossTransform::Exponential { lambda } => {
                if p >= 1.0 {
                    Err(ModelError::OutOfRange { level: p })
                } else {
                    Ok(-(1.0 - p).ln() / lambda)
                }
            }
            LossTransform::UserTabulated { points } => {
                Ok(interp_extrapolate(points, p, |&(_, b)| b, |&(a, _)| a))
            }
        }
    }

    /// First derivative of the inverse, `(PsiInv)'(p)`.
    pub fn psi_inverse_d1(&self, p: f64) -> Result<f64, ModelError> {
        match self {
            LossTransform::Identity => Ok(1.0),
            LossTransform::Exponential { lambda } => {
                if p >= 1.0 {
                    Err(ModelError::OutOfRange { level: p })
                } else {
                    Ok(1.0 / (lambda * (1.0 - p)))
                }
            }
            LossTransform::UserTabulated { points } => {
                let slope = segment_slope(points, p);
                Ok(1.0 / slope)
            }
        }
    }

    /// Second derivative of the inverse, `(PsiInv)''(p)`.
    ///
    /// Zero almost everywhere for the tabulated kind (piecewise linear).
    pub fn psi_inverse_d2(&self, p: f64) -> Result<f64, ModelError> {
        match self {
            LossTransform::Identity => Ok(0.0),
            LossTransform::Exponential { lambda } => {
                if p >= 1.0 {
                    Err(ModelError::OutOfRange { level: p })
                } else {
                    Ok(1.0 / (lambda * (1.0 - p) * (1.0 - p)))
                }
            }
            LossTransform::UserTabulated { .. } => Ok(0.0),
        }
    }

    /// Upper bound of the range of `Psi` (`+inf` when unbounded).
    pub fn range_sup(&self) -> f64 {
        match self {
            LossTransform::Identity | LossTransform::UserTabulated { .. } => f64::INFINITY,
            LossTransform::Exponential { .. } => 1.0,
        }
    }
}

/// Piecewise-linear interpolation through `points` keyed by `key`, reading
/// `val`, with end-slope extrapolation outside the table.
fn interp_extrapolate(
    points: &[(f64, f64)],
    q: f64,
    key: impl Fn(&(f64, f64)) -> f64,
    val: impl Fn(&(f64, f64)) -> f64,
) -> f64 {
    let n = points.len();
    let seg = match points.partition_point(|pt| key(pt) <= q) {
        0 => 0,
        k if k >= n => n - 2,
        k => k - 1,
    };
    let (a, b) = (&points[seg], &points[seg + 1]);
    let t = (q - key(a)) / (key(b) - key(a));
    val(a) + (val(b) - val(a)) * t
}

/// Slope `dy/dx` of the table segment containing `p` on the ordinate axis.
fn segment_slope(points: &[(f64, f64)], p: f64) -> f64 {
    let n = points.len();
    let seg = match points.partition_point(|&(_, y)| y <= p) {
        0 => 0,
        k if k >= n => n - 2,
        k => k - 1,
    };
    let (x0, y0) = points[seg];
    let (x1, y1) = points[seg + 1];
    (y1 - y0) / (x1 - x0)
}

/// Evaluates `PsiInv(p)`; errors when `p` is not attained by `Psi`.
pub fn psi_inverse(loss: &LossTransform, p: f64) -> Result<f64, ModelError> {
    loss.psi_inverse(p)
}

// ---------------------------------------------------------------------------
// Payoff
// ---------------------------------------------------------------------------

/// Piecewise-linear European payoff `g(x)`.
///
/// Keeping the payoffs piecewise linear makes convexity decidable from the
/// slope sequence, which selects the pricing oracle downstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Payoff {
    Call { strike: f64 },
    Put { strike: f64 },
    CallSpread { k1: f64, k2: f64 },
    Butterfly { k1: f64, k2: f64, k3: f64 },
    Tabulated { nodes: Vec<(f64, f64)> },
}

impl Payoff {
    /// Lists every violated invariant; empty means the payoff is valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            Payoff::Call { strike } | Payoff::Put { strike } => {
                if !(*strike > 0.0) {
                    out.push(format!("strike must be > 0 (got {strike})"));
                }
            }
            Payoff::CallSpread { k1, k2 } => {
                if !(k1 < k2) {
                    out.push(format!("strikes must satisfy k1 < k2 ({k1} >= {k2})"));
                }
            }
            Payoff::Butterfly { k1, k2, k3 } => {
                if !(k1 < k2 && k2 < k3) {
                    out.push(format!(
                        "strikes must satisfy k1 < k2 < k3 (got {k1}, {k2}, {k3})"
                    ));
                }
            }
            Payoff::Tabulated { nodes } => {
                if nodes.len() < 2 {
                    out.push("payoff table needs at least 2 nodes".to_string());
                } else {
                    for w in nodes.windows(2) {
                        if !(w[1].0 > w[0].0) {
                            out.push(format!(
                                "payoff abscissae must increase ({} -> {})",
                                w[0].0, w[1].0
                            ));
                            break;
                        }
                    }
                }
            }
        }
        out
    }

    /// Returns the payoff if all invariants hold.
    pub fn validated(self) -> Result<Self, ModelError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(self)
        } else {
            Err(invalid("payoff", v))
        }
    }

    /// Evaluates `g(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Payoff::Call { strike } => (x - strike).max(0.0),
            Payoff::Put { strike } => (strike - x).max(0.0),
            Payoff::CallSpread { k1, k2 } => (x - k1).max(0.0) - (x - k2).max(0.0),
            Payoff::Butterfly { k1, k2, k3 } => {
                // Unit-slope butterfly: long k1 and k3 calls, short two k2 calls
                // scaled so the wings meet at zero.
                let w_left = (k2 - k1).recip();
                let w_right = (k3 - k2).recip();
                let c = |k: f64| (x - k).max(0.0);
                (k2 - k1) * (w_left * c(*k1) - (w_left + w_right) * c(*k2) + w_right * c(*k3))
            }
            Payoff::Tabulated { nodes } => {
                interp_extrapolate(nodes, x, |&(a, _)| a, |&(_, b)| b)
            }
        }
    }

    /// Kink abscissae, sorted ascending.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Payoff::Call { strike } | Payoff::Put { strike } => vec![*strike],
            Payoff::CallSpread { k1, k2 } => vec![*k1, *k2],
            Payoff::Butterfly { k1, k2, k3 } => vec![*k1, *k2, *k3],
            Payoff::Tabulated { nodes } => nodes.iter().map(|&(x, _)| x).collect(),
        }
    }

    /// Slopes of the linear pieces from left to right (one more than kinks).
    pub fn slopes(&self) -> Vec<f64> {
        match self {
            Payoff::Call { .. } => vec![0.0, 1.0],
            Payoff::Put { .. } => vec![-1.0, 0.0],
            Payoff::CallSpread { .. } => vec![0.0, 1.0, 0.0],
            Payoff::Butterfly { k1, k2, k3 } => {
                let s = (k2 - k1) / (k3 - k2);
                vec![0.0, 1.0, -s, 0.0]
            }
            Payoff::Tabulated { nodes } => {
                let mut out = Vec::with_capacity(nodes.len() + 1);
                let first = (nodes[1].1 - nodes[0].1) / (nodes[1].0 - nodes[0].0);
                out.push(first);
                for w in nodes.windows(2) {
                    out.push((w[1].1 - w[0].1) / (w[1].0 - w[0].0));
                }
                let n = nodes.len();
                let last = (nodes[n - 1].1 - nodes[n - 2].1) / (nodes[n - 1].0 - nodes[n - 2].0);
                out.push(last);
                out
            }
        }
    }

    /// True when the slope sequence is nondecreasing.
    pub fn is_convex(&self) -> bool {
        self.slopes().windows(2).all(|w| w[1] >= w[0] - 1e-12)
    }

    /// Growth constants `(c, q)` with `|g(x)| <= c (1 + x^q)` for x >= 0,
    /// recorded on construction; `q = 1` for every piecewise-linear payoff.
    pub fn growth_bounds(&self) -> (f64, f64) {
        let max_abs_slope = self
            .slopes()
            .iter()
            .fold(0.0_f64, |acc, s| acc.max(s.abs()));
        let at_zero = self.eval(0.0).abs();
        let at_kinks = self
            .breakpoints()
            .iter()
            .fold(0.0_f64, |acc, &k| acc.max(self.eval(k).abs()));
        (max_abs_slope.max(at_zero).max(at_kinks).max(1.0), 1.0)
    }
}

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

/// Node-placement rule for the space axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stretch {
    Uniform,
    LogUniform,
}

/// Space-time lattice description for the PDE solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_x: usize,
    pub n_t: usize,
    pub stretch: Stretch,
}

impl Grid {
    /// Lists every violated invariant; empty means the grid is valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.x_min > 0.0) {
            out.push(format!("x_min must be > 0 (got {})", self.x_min));
        }
        if !(self.x_max > self.x_min) {
            out.push(format!(
                "x_max must exceed x_min ({} <= {})",
                self.x_max, self.x_min
            ));
        }
        if self.n_x < 3 {
            out.push(format!("n_x must be >= 3 (got {})", self.n_x));
        }
        if self.n_t < 1 {
            out.push(format!("n_t must be >= 1 (got {})", self.n_t));
        }
        out
    }

    /// Returns the grid if all invariants hold.
    pub fn validated(self) -> Result<Self, ModelError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(self)
        } else {
            Err(invalid("grid", v))
        }
    }

    /// Space nodes anchored at `anchor`, which becomes an exact lattice point.
    ///
    /// Nodes are uniform in the stretched coordinate on each side of the
    /// anchor (two segments sharing the anchor node), so the declared bounds
    /// are kept exactly. Anchoring removes the interpolation error at the
    /// spot, which otherwise masks the scheme's convergence order.
    pub fn space_nodes(&self, anchor: f64) -> Result<Vec<f64>, ModelError> {
        if !(anchor > self.x_min && anchor < self.x_max) {
            return Err(invalid(
                "grid",
                vec![format!(
                    "anchor {anchor} must lie strictly inside ({}, {})",
                    self.x_min, self.x_max
                )],
            ));
        }
        let (map, unmap): (fn(f64) -> f64, fn(f64) -> f64) = match self.stretch {
            Stretch::Uniform => (|x| x, |x| x),
            Stretch::LogUniform => (f64::ln, f64::exp),
        };
        let (lo, hi, at) = (map(self.x_min), map(self.x_max), map(anchor));
        let intervals = self.n_x - 1;
        let m = (((at - lo) / (hi - lo)) * intervals as f64).round() as usize;
        let m = m.clamp(1, intervals - 1);
        let mut nodes = Vec::with_capacity(self.n_x);
        for i in 0..m {
            nodes.push(unmap(lo + (at - lo) * i as f64 / m as f64));
        }
        nodes.push(anchor);
        let right = intervals - m;
        for i in 1..=right {
            nodes.push(unmap(at + (hi - at) * i as f64 / right as f64));
        }
        nodes[0] = self.x_min;
        nodes[self.n_x - 1] = self.x_max;
        Ok(nodes)
    }

    /// Time levels `0 = t_0 < ... < t_{n_t} = horizon`.
    pub fn time_nodes(&self, horizon: f64) -> Vec<f64> {
        (0..=self.n_t)
            .map(|i| horizon * i as f64 / self.n_t as f64)
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Evaluation point
// ---------------------------------------------------------------------------

/// First- and second-order data of a candidate surface at one point, as fed
/// to the operators and kernels: state `(x, y)`, gradient `(q_x, q_p)` and
/// the symmetric Hessian in `(x, p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    /// Asset price.
    pub x: f64,
    /// Wealth (candidate surface value).
    pub y: f64,
    /// Gradient in x.
    pub q_x: f64,
    /// Gradient in p.
    pub q_p: f64,
    /// Hessian entry d^2/dx^2.
    pub a_xx: f64,
    /// Hessian entry d^2/dxdp (symmetry is structural: one slot).
    pub a_xp: f64,
    /// Hessian entry d^2/dp^2.
    pub a_pp: f64,
}

impl EvalPoint {
    /// Builds an evaluation point from a full 2x2 Hessian, rejecting
    /// asymmetry beyond 1e-14 relative.
    pub fn with_hessian(
        x: f64,
        y: f64,
        q_x: f64,
        q_p: f64,
        hessian: [[f64; 2]; 2],
    ) -> Result<Self, ModelError> {
        let scale = hessian
            .iter()
            .flatten()
            .fold(1.0_f64, |acc, v| acc.max(v.abs()));
        if (hessian[0][1] - hessian[1][0]).abs() > 1e-14 * scale {
            return Err(invalid(
                "evaluation point",
                vec![format!(
                    "hessian must be symmetric (|{} - {}| too large)",
                    hessian[0][1], hessian[1][0]
                )],
            ));
        }
        Ok(EvalPoint {
            x,
            y,
            q_x,
            q_p,
            a_xx: hessian[0][0],
            a_xp: 0.5 * (hessian[0][1] + hessian[1][0]),
            a_pp: hessian[1][1],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_model() -> MarketModel {
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
    fn valid_model_has_no_violations() {
        assert!(validate_model(&sample_model()).is_empty());
    }

    #[test]
    fn positive_mu_lo_is_flagged() {
        let m = MarketModel {
            mu_lo: 0.05,
            ..sample_model()
        };
        let v = validate_model(&m);
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("mu_lo must be <= 0"), "{v:?}");
    }

    #[test]
    fn crossed_sigma_bounds_are_flagged() {
        let m = MarketModel {
            sigma_lo: 0.4,
            sigma_hi: 0.3,
            ..sample_model()
        };
        let v = validate_model(&m);
        assert!(v.iter().any(|s| s.contains("sigma_lo exceeds sigma_hi")), "{v:?}");
    }

    #[test]
    fn psi_inverse_identity_and_exponential() {
        assert_eq!(psi_inverse(&LossTransform::Identity, 0.25).unwrap(), 0.25);
        let exp = LossTransform::Exponential { lambda: 1.0 };
        assert_eq!(exp.psi_inverse(0.0).unwrap(), 0.0);
        let half = exp.psi_inverse(0.5).unwrap();
        assert!((half - std::f64::consts::LN_2).abs() < 1e-15, "{half}");
    }

    #[test]
    fn psi_inverse_out_of_range() {
        let exp = LossTransform::Exponential { lambda: 2.0 };
        assert!(matches!(
            exp.psi_inverse(1.0),
            Err(ModelError::OutOfRange { .. })
        ));
        assert!(exp.psi_inverse(0.999).is_ok());
    }

    #[test]
    fn tabulated_transform_roundtrips() {
        let tab = LossTransform::UserTabulated {
            points: vec![(-2.0, -3.0), (0.0, 0.0), (1.0, 1.0), (3.0, 2.0)],
        }
        .validated()
        .unwrap();
        for &x in &[-2.5, -1.0, 0.25, 0.999, 2.0, 4.0] {
            let p = tab.psi(x);
            let back = tab.psi_inverse(p).unwrap();
            assert!((back - x).abs() < 1e-12, "x={x} back={back}");
        }
    }

    #[test]
    fn non_concave_table_is_rejected() {
        let t = LossTransform::UserTabulated {
            points: vec![(0.0, 0.0), (1.0, 0.5), (2.0, 2.0)],
        };
        assert!(t.validated().is_err());
    }

    #[test]
    fn payoffs_evaluate_exactly_at_breakpoints() {
        let bf = Payoff::Butterfly {
            k1: 90.0,
            k2: 100.0,
            k3: 110.0,
        };
        assert_eq!(bf.eval(90.0), 0.0);
        assert_eq!(bf.eval(100.0), 10.0);
        assert_eq!(bf.eval(110.0), 0.0);
        let cs = Payoff::CallSpread { k1: 95.0, k2: 105.0 };
        assert_eq!(cs.eval(95.0), 0.0);
        assert_eq!(cs.eval(105.0), 10.0);
        let tab = Payoff::Tabulated {
            nodes: vec![(50.0, 1.0), (100.0, 4.0), (150.0, 2.0)],
        };
        assert_eq!(tab.eval(100.0), 4.0);
        assert_eq!(tab.eval(75.0), 2.5);
    }

    #[test]
    fn convexity_is_read_off_slopes() {
        assert!(Payoff::Call { strike: 100.0 }.is_convex());
        assert!(Payoff::Put { strike: 100.0 }.is_convex());
        assert!(!Payoff::Butterfly {
            k1: 90.0,
            k2: 100.0,
            k3: 110.0
        }
        .is_convex());
        assert!(!Payoff::CallSpread { k1: 90.0, k2: 110.0 }.is_convex());
    }

    #[test]
    fn growth_bounds_dominate_payoff() {
        for payoff in [
            Payoff::Call { strike: 100.0 },
            Payoff::Put { strike: 250.0 },
            Payoff::Butterfly {
                k1: 90.0,
                k2: 100.0,
                k3: 110.0,
            },
        ] {
            let (c, q) = payoff.growth_bounds();
            for &x in &[0.0, 1.0, 99.9, 1e3, 1e6] {
                assert!(payoff.eval(x).abs() <= c * (1.0 + x.powf(q)) + 1e-9);
            }
        }
    }

    #[test]
    fn anchored_grid_contains_anchor_and_bounds() {
        let grid = Grid {
            x_min: 20.0,
            x_max: 500.0,
            n_x: 400,
            n_t: 400,
            stretch: Stretch::LogUniform,
        };
        let nodes = grid.space_nodes(100.0).unwrap();
        assert_eq!(nodes.len(), 400);
        assert_eq!(nodes[0], 20.0);
        assert_eq!(nodes[399], 500.0);
        assert!(nodes.iter().any(|&x| x == 100.0));
        assert!(nodes.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn grid_rejects_anchor_outside_bounds() {
        let grid = Grid {
            x_min: 20.0,
            x_max: 500.0,
            n_x: 10,
            n_t: 1,
            stretch: Stretch::Uniform,
        };
        assert!(grid.space_nodes(600.0).is_err());
    }

    #[test]
    fn asymmetric_hessian_is_rejected() {
        assert!(EvalPoint::with_hessian(1.0, 1.0, 0.0, 1.0, [[1.0, 0.5], [0.5 + 1e-10, 0.0]]).is_err());
        assert!(EvalPoint::with_hessian(1.0, 1.0, 0.0, 1.0, [[1.0, 0.5], [0.5, 0.0]]).is_ok());
    }
}
