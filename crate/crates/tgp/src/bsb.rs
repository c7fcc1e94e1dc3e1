//! Monotone finite-difference solver for the uncertain-volatility equation.
//!
//! Backward in time from the terminal payoff `g`, the solver marches
//!
//! ```text
//! w_t + sup_{sigma in [sigma_lo, sigma_hi]} 1/2 sigma^2 x^2 w_xx = 0,
//! w(T, x) = g(x),
//! ```
//!
//! on a space-time lattice. The supremum is linear in `sigma^2`, so it is
//! attained at an interval endpoint; the per-node maximizer is recorded in
//! [`GridSolution::sigma_star_at`]. Boundary rows drop the diffusion term
//! (zero curvature), which with zero drift and rate freezes them at the
//! terminal data — this keeps the scheme monotone.
//!
//! Two schemes are available: explicit Euler under a CFL bound, and a fully
//! implicit step whose nonlinearity is resolved by policy iteration (freeze
//! the nodewise `sigma`, solve the tridiagonal system by direct elimination,
//! update `sigma`, repeat).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Grid, MarketModel, ModelError, Payoff};

/// Max-norm residual the implicit scheme must reach before a step is
/// accepted; also the solution's advertised scheme tolerance.
pub const RESIDUAL_TOL: f64 = 1e-10;

const MAX_POLICY_ITERATIONS: usize = 100;

/// Time-stepping scheme for [`solve_bsb`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ExplicitEuler,
    ImplicitPolicyIteration,
}

/// Errors from the solver and the surface accessors.
#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    /// Explicit scheme with a time step above the monotonicity bound.
    #[error("CFL violation: dt={dt} exceeds the monotonicity bound {bound}; raise n_t or lower n_x")]
    CflViolation { dt: f64, bound: f64 },
    /// Policy iteration failed to reach the residual tolerance.
    #[error("policy iteration did not converge within {max_iters} iterations (residual {residual})")]
    PolicyIterationDivergence { max_iters: usize, residual: f64 },
    /// Query outside the space-time domain of a solution.
    #[error("point (t={t}, x={x}) is outside the solved domain")]
    OutOfDomain { t: f64, x: f64 },
}

/// Value surface `w(t, x)` of the uncertain-volatility equation on a lattice,
/// along with the nodewise maximizing volatility.
#[derive(Debug, Clone)]
pub struct GridSolution {
    grid: Grid,
    model: MarketModel,
    payoff: Payoff,
    scheme: Scheme,
    /// Space nodes, anchored so that `model.x0` is an exact lattice point.
    xs: Vec<f64>,
    /// Time levels `0 = t_0 < ... < t_{n_t} = T`.
    ts: Vec<f64>,
    /// `values[i][j] = w(ts[i], xs[j])`; `i = n_t` is the terminal slice.
    values: Vec<Vec<f64>>,
    /// Endpoint volatility maximizing the diffusion term at each node,
    /// evaluated on the stored slice (`sigma_hi` on the boundary rows where
    /// the curvature stencil does not exist).
    sigma_star: Vec<Vec<f64>>,
}

impl GridSolution {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn model(&self) -> &MarketModel {
        &self.model
    }

    pub fn payoff(&self) -> &Payoff {
        &self.payoff
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Advertised residual tolerance of the scheme that produced this surface.
    pub fn residual_tol(&self) -> f64 {
        RESIDUAL_TOL
    }

    pub fn space_nodes(&self) -> &[f64] {
        &self.xs
    }

    pub fn time_nodes(&self) -> &[f64] {
        &self.ts
    }

    /// Stored value at a lattice node.
    pub fn value_at_node(&self, time_idx: usize, space_idx: usize) -> f64 {
        self.values[time_idx][space_idx]
    }

    /// Nodewise maximizing volatility (an endpoint of the sigma interval).
    pub fn sigma_star_at(&self, time_idx: usize, space_idx: usize) -> f64 {
        self.sigma_star[time_idx][space_idx]
    }

    /// Copy of the solution with `delta(t, x)` added nodewise and the
    /// maximizer field recomputed. Lets callers probe the viscosity checker
    /// with deliberately broken candidate surfaces.
    pub fn with_perturbation(&self, delta: impl Fn(f64, f64) -> f64) -> GridSolution {
        let mut out = self.clone();
        for (i, slice) in out.values.iter_mut().enumerate() {
            for (j, v) in slice.iter_mut().enumerate() {
                *v += delta(self.ts[i], self.xs[j]);
            }
        }
        let n_x = out.xs.len();
        for (i, slice) in out.values.iter().enumerate() {
            for j in 1..n_x - 1 {
                out.sigma_star[i][j] =
                    endpoint_argmax(&out.model, second_difference(&out.xs, slice, j));
            }
        }
        out
    }

    /// Bilinear interpolation of the surface; exact at lattice nodes.
    pub fn price_at(&self, t: f64, x: f64) -> Result<f64, SolveError> {
        let (it, wt, jx, wx) = self.locate(t, x)?;
        let v0 = lerp(self.values[it][jx], self.values[it][jx + 1], wx);
        let v1 = lerp(self.values[it + 1][jx], self.values[it + 1][jx + 1], wx);
        Ok(lerp(v0, v1, wt))
    }

    /// Delta and gamma of the surface by central differences on the lattice,
    /// bilinearly interpolated between nodes.
    ///
    /// The central first-derivative stencil on a nonuniform grid is a convex
    /// combination of the two one-sided difference quotients, so the nodal
    /// delta always lies between them. Boundary nodes use the one-sided
    /// quotient for delta and zero gamma (the boundary condition).
    pub fn greeks(&self, t: f64, x: f64) -> Result<(f64, f64), SolveError> {
        let (it, wt, jx, wx) = self.locate(t, x)?;
        let mut delta = [0.0; 2];
        let mut gamma = [0.0; 2];
        for (k, slice) in [it, it + 1].into_iter().enumerate() {
            let d0 = self.node_delta(slice, jx);
            let d1 = self.node_delta(slice, jx + 1);
            let g0 = self.node_gamma(slice, jx);
            let g1 = self.node_gamma(slice, jx + 1);
            delta[k] = lerp(d0, d1, wx);
            gamma[k] = lerp(g0, g1, wx);
        }
        Ok((lerp(delta[0], delta[1], wt), lerp(gamma[0], gamma[1], wt)))
    }

    fn node_delta(&self, i: usize, j: usize) -> f64 {
        let (xs, w) = (&self.xs, &self.values[i]);
        let n = xs.len();
        if j == 0 {
            (w[1] - w[0]) / (xs[1] - xs[0])
        } else if j == n - 1 {
            (w[n - 1] - w[n - 2]) / (xs[n - 1] - xs[n - 2])
        } else {
            let hm = xs[j] - xs[j - 1];
            let hp = xs[j + 1] - xs[j];
            let left = (w[j] - w[j - 1]) / hm;
            let right = (w[j + 1] - w[j]) / hp;
            (hp * left + hm * right) / (hm + hp)
        }
    }

    fn node_gamma(&self, i: usize, j: usize) -> f64 {
        if j == 0 || j == self.xs.len() - 1 {
            return 0.0;
        }
        second_difference(&self.xs, &self.values[i], j)
    }

    /// Locates `(t, x)` in the lattice: cell indices plus interpolation
    /// weights in `[0, 1]`.
    fn locate(&self, t: f64, x: f64) -> Result<(usize, f64, usize, f64), SolveError> {
        let horizon = *self.ts.last().expect("nonempty time axis");
        if !(0.0..=horizon).contains(&t) || !(self.xs[0]..=*self.xs.last().unwrap()).contains(&x) {
            return Err(SolveError::OutOfDomain { t, x });
        }
        let it = cell_index(&self.ts, t);
        let jx = cell_index(&self.xs, x);
        let wt = (t - self.ts[it]) / (self.ts[it + 1] - self.ts[it]);
        let wx = (x - self.xs[jx]) / (self.xs[jx + 1] - self.xs[jx]);
        Ok((it, wt, jx, wx))
    }
}

fn lerp(a: f64, b: f64, w: f64) -> f64 {
    a + (b - a) * w
}

/// Index of the cell `[nodes[k], nodes[k+1]]` containing `q` (clamped to the
/// last cell at the right edge).
fn cell_index(nodes: &[f64], q: f64) -> usize {
    let k = nodes.partition_point(|&n| n <= q);
    k.saturating_sub(1).min(nodes.len() - 2)
}

/// Centered second difference on a nonuniform grid at interior index `j`.
fn second_difference(xs: &[f64], w: &[f64], j: usize) -> f64 {
    let hm = xs[j] - xs[j - 1];
    let hp = xs[j + 1] - xs[j];
    2.0 * (hm * w[j + 1] - (hm + hp) * w[j] + hp * w[j - 1]) / (hm * hp * (hm + hp))
}

/// Solves the uncertain-volatility equation backward from the payoff.
///
/// Preconditions: the model and grid validate, and the grid covers
/// `model.x0` strictly inside `(x_min, x_max)`. The explicit scheme
/// additionally requires the time step to satisfy the monotonicity bound
/// `dt <= min_j h_minus h_plus / (sigma_hi^2 x_j^2)`.
pub fn solve_bsb(
    model: &MarketModel,
    payoff: &Payoff,
    grid: &Grid,
    scheme: Scheme,
) -> Result<GridSolution, SolveError> {
    let model = model.validated()?;
    let payoff = payoff.clone().validated()?;
    let grid = grid.validated()?;
    let xs = grid.space_nodes(model.x0)?;
    let ts = grid.time_nodes(model.horizon_t);
    let n_x = xs.len();
    let dt = model.horizon_t / grid.n_t as f64;

    let mut stencil = Stencil::new(&xs);
    let terminal: Vec<f64> = xs.iter().map(|&x| payoff.eval(x)).collect();

    let mut values = vec![vec![0.0; n_x]; grid.n_t + 1];
    values[grid.n_t] = terminal;

    match scheme {
        Scheme::ExplicitEuler => {
            let bound = explicit_bound(&xs, model.sigma_hi);
            if dt > bound * (1.0 + 1e-12) {
                return Err(SolveError::CflViolation { dt, bound });
            }
            for i in (0..grid.n_t).rev() {
                let (prev, rest) = values.split_at_mut(i + 1);
                let known = &rest[0];
                let next = &mut prev[i];
                next[0] = known[0];
                next[n_x - 1] = known[n_x - 1];
                for j in 1..n_x - 1 {
                    let d2 = second_difference(&xs, known, j);
                    let sigma = endpoint_argmax(&model, d2);
                    next[j] = known[j] + dt * 0.5 * sigma * sigma * xs[j] * xs[j] * d2;
                }
            }
        }
        Scheme::ImplicitPolicyIteration => {
            let mut policy = vec![model.sigma_hi; n_x - 2];
            for i in (0..grid.n_t).rev() {
                let (prev, rest) = values.split_at_mut(i + 1);
                let known = &rest[0];
                let next = &mut prev[i];
                implicit_step(&model, &xs, dt, known, next, &mut policy, &mut stencil)?;
            }
        }
    }

    let sigma_star = values
        .iter()
        .map(|slice| {
            (0..n_x)
                .map(|j| {
                    if j == 0 || j == n_x - 1 {
                        model.sigma_hi
                    } else {
                        endpoint_argmax(&model, second_difference(&xs, slice, j))
                    }
                })
                .collect()
        })
        .collect();

    Ok(GridSolution {
        grid,
        model,
        payoff,
        scheme,
        xs,
        ts,
        values,
        sigma_star,
    })
}

/// Endpoint of the volatility interval maximizing `sigma^2 * curvature`.
fn endpoint_argmax(model: &MarketModel, curvature: f64) -> f64 {
    if curvature >= 0.0 {
        model.sigma_hi
    } else {
        model.sigma_lo
    }
}

/// Largest monotone time step for the explicit scheme.
fn explicit_bound(xs: &[f64], sigma_hi: f64) -> f64 {
    let mut bound = f64::INFINITY;
    for j in 1..xs.len() - 1 {
        let hm = xs[j] - xs[j - 1];
        let hp = xs[j + 1] - xs[j];
        bound = bound.min(hm * hp / (sigma_hi * sigma_hi * xs[j] * xs[j]));
    }
    bound
}

/// Workspace for the tridiagonal solve, reused across time steps.
struct Stencil {
    /// Coefficient of `w[j-1]` in the second difference at interior node j.
    sub: Vec<f64>,
    /// Coefficient of `w[j+1]`.
    sup: Vec<f64>,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    rhs: Vec<f64>,
    c_prime: Vec<f64>,
    d_prime: Vec<f64>,
    resid: Vec<f64>,
    delta: Vec<f64>,
}

impl Stencil {
    fn new(xs: &[f64]) -> Self {
        let n = xs.len() - 2;
        let mut sub = vec![0.0; n];
        let mut sup = vec![0.0; n];
        for j in 1..xs.len() - 1 {
            let hm = xs[j] - xs[j - 1];
            let hp = xs[j + 1] - xs[j];
            sub[j - 1] = 2.0 / (hm * (hm + hp));
            sup[j - 1] = 2.0 / (hp * (hm + hp));
        }
        Stencil {
            sub,
            sup,
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
            rhs: vec![0.0; n],
            c_prime: vec![0.0; n],
            d_prime: vec![0.0; n],
            resid: vec![0.0; n],
            delta: vec![0.0; n],
        }
    }
}

/// One row of `rhs - A*w` evaluated with error-free transformations (FMA
/// product errors plus Neumaier summation), so the large row products cancel
/// without amplifying rounding noise. Also returns the row magnitude used
/// for the representability floor.
fn row_residual(
    lower: f64,
    diag: f64,
    upper: f64,
    rhs: f64,
    w0: f64,
    w1: f64,
    w2: f64,
) -> (f64, f64) {
    let mut s = rhs;
    let mut comp = 0.0;
    let mut scale = rhs.abs();
    for (a, b) in [(-lower, w0), (-diag, w1), (-upper, w2)] {
        let p = a * b;
        let p_err = a.mul_add(b, -p);
        let t = s + p;
        let s_err = if s.abs() >= p.abs() {
            (s - t) + p
        } else {
            (p - t) + s
        };
        s = t;
        comp += s_err + p_err;
        scale = scale.max(p.abs());
    }
    (s + comp, scale)
}

/// Thomas elimination for a diagonally dominant tridiagonal system.
#[allow(clippy::too_many_arguments)]
fn thomas(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
    c_prime: &mut [f64],
    d_prime: &mut [f64],
    out: &mut [f64],
) {
    let n = rhs.len();
    let mut prev_c = 0.0;
    let mut prev_d = 0.0;
    for k in 0..n {
        let m = diag[k] - lower[k] * prev_c;
        prev_c = upper[k] / m;
        prev_d = (rhs[k] - lower[k] * prev_d) / m;
        c_prime[k] = prev_c;
        d_prime[k] = prev_d;
    }
    out[n - 1] = d_prime[n - 1];
    for k in (0..n - 1).rev() {
        out[k] = d_prime[k] - c_prime[k] * out[k + 1];
    }
}

/// One fully implicit backward step with policy iteration over the nodewise
/// volatility. The boundary rows are identities (`next = known`).
fn implicit_step(
    model: &MarketModel,
    xs: &[f64],
    dt: f64,
    known: &[f64],
    next: &mut [f64],
    policy: &mut [f64],
    st: &mut Stencil,
) -> Result<(), SolveError> {
    let n_x = xs.len();
    let n = n_x - 2;
    next[0] = known[0];
    next[n_x - 1] = known[n_x - 1];

    let mut residual = f64::INFINITY;
    for _ in 0..MAX_POLICY_ITERATIONS {
        // Row j: (1 + dt*c*(sub+sup)) w_j - dt*c*sub w_{j-1} - dt*c*sup w_{j+1} = known_j,
        // with the boundary contributions folded into the right-hand side.
        for k in 0..n {
            let c = 0.5 * policy[k] * policy[k] * xs[k + 1] * xs[k + 1];
            st.lower[k] = if k == 0 { 0.0 } else { -dt * c * st.sub[k] };
            st.diag[k] = 1.0 + dt * c * (st.sub[k] + st.sup[k]);
            st.upper[k] = if k == n - 1 { 0.0 } else { -dt * c * st.sup[k] };
            st.rhs[k] = known[k + 1];
            if k == 0 {
                st.rhs[k] += dt * c * st.sub[k] * next[0];
            }
            if k == n - 1 {
                st.rhs[k] += dt * c * st.sup[k] * next[n_x - 1];
            }
        }
        thomas(
            &st.lower,
            &st.diag,
            &st.upper,
            &st.rhs,
            &mut st.c_prime,
            &mut st.d_prime,
            &mut next[1..=n],
        );

        // Iterative refinement with compensated residuals drives the slice to
        // the correctly rounded solution of the frozen-policy system.
        let mut floor = 0.0_f64;
        for pass in 0..3 {
            let mut linres = 0.0_f64;
            floor = 0.0;
            for k in 0..n {
                let (r, scale) = row_residual(
                    st.lower[k],
                    st.diag[k],
                    st.upper[k],
                    st.rhs[k],
                    next[k],
                    next[k + 1],
                    next[k + 2],
                );
                st.resid[k] = r;
                linres = linres.max(r.abs());
                floor = floor.max(scale);
            }
            // A stored f64 slice cannot have a residual below the rounding
            // of the row products; stop once that floor is reached.
            floor = 8.0 * f64::EPSILON * floor;
            if linres <= floor.max(0.25 * RESIDUAL_TOL * dt) || pass == 2 {
                break;
            }
            thomas(
                &st.lower,
                &st.diag,
                &st.upper,
                &st.resid,
                &mut st.c_prime,
                &mut st.d_prime,
                &mut st.delta,
            );
            for k in 0..n {
                next[k + 1] += st.delta[k];
            }
        }

        // Residual of the nonlinear equation with the maximizing sigma (not
        // the frozen one), evaluated through the linear-system residual so
        // the large row products cancel exactly:
        //   (known - next)/dt + 1/2 sigma*^2 x^2 D2 next
        //     = linres/dt + 1/2 (sigma*^2 - policy^2) x^2 D2 next.
        // Convergence is declared on the residual alone: at curvature ties
        // the argmax endpoint flips on fp noise without affecting the
        // equation.
        residual = 0.0;
        for k in 0..n {
            let d2 = st.sub[k] * next[k] - (st.sub[k] + st.sup[k]) * next[k + 1]
                + st.sup[k] * next[k + 2];
            let sigma = endpoint_argmax(model, d2);
            let x = xs[k + 1];
            let mismatch =
                0.5 * (sigma * sigma - policy[k] * policy[k]) * x * x * d2;
            policy[k] = sigma;
            let r = st.resid[k] / dt + mismatch;
            residual = residual.max(r.abs());
        }
        if residual <= RESIDUAL_TOL.max(2.0 * floor / dt) {
            return Ok(());
        }
    }
    Err(SolveError::PolicyIterationDivergence {
        max_iters: MAX_POLICY_ITERATIONS,
        residual,
    })
}
