//! Exact dynamic-programming checks on finite discrete games.
//!
//! A [`DiscreteGame`] is a finite-horizon game: each period the hedger picks
//! an action from `u_set` knowing all prior adverse moves and shocks, the
//! adverse player picks from `v_set` knowing the shocks (and, implicitly,
//! everything the hedger will do), an equiprobable shock realizes, and the
//! scalar state moves by the transition rule. The hedger maximizes the
//! worst-case expected terminal loss
//!
//! ```text
//! K(k, z) = max_u min_v avg_shock K(k+1, next(z, u, v, shock)).
//! ```
//!
//! Everything runs in exact rational arithmetic (every `f64` input is a
//! dyadic rational), so the reachability sets, the adverse value process and
//! its martingale part, and both dynamic-programming inclusions are checked
//! with equality, not tolerances.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

type Q = BigRational;

fn q(x: f64) -> Q {
    BigRational::from_f64(x).expect("finite game datum")
}

fn q_int(n: usize) -> Q {
    BigRational::from_integer(BigInt::from(n))
}

/// Hard cap on enumeration sizes (strategy trees, premise instances).
pub const ENUMERATION_GUARD: u128 = 10_000_000;

/// Errors from the discrete-game engine.
#[derive(Debug, Error)]
pub enum GdpError {
    #[error("invalid game: {}", violations.join("; "))]
    Invalid { violations: Vec<String> },
    /// An enumeration would exceed [`ENUMERATION_GUARD`].
    #[error("enumeration of {what} needs {count} items (guard {ENUMERATION_GUARD})")]
    ExplosionGuard { what: &'static str, count: u128 },
    /// `value_martingale` started above the adverse value.
    #[error("start level {start_p} exceeds the strategy value {s0}")]
    LevelTooHigh { start_p: f64, s0: f64 },
}

/// State transition `z' = c_z z + c_u u + c_v v + c_uv u v + c_s shock + c_0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionRule {
    pub z: f64,
    #[serde(default)]
    pub u: f64,
    #[serde(default)]
    pub v: f64,
    #[serde(default)]
    pub uv: f64,
    #[serde(default)]
    pub shock: f64,
    #[serde(default)]
    pub constant: f64,
}

/// Terminal loss as a function of the state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossRule {
    /// `slope * z + intercept`.
    Linear { slope: f64, intercept: f64 },
    /// `min(z, cap)`.
    Cap { cap: f64 },
    /// Piecewise linear through `(z, loss)` nodes, end-slope extrapolated.
    PiecewiseLinear { nodes: Vec<(f64, f64)> },
}

impl LossRule {
    fn eval_q(&self, z: &Q) -> Q {
        match self {
            LossRule::Linear { slope, intercept } => q(*slope) * z + q(*intercept),
            LossRule::Cap { cap } => {
                let cap = q(*cap);
                if *z < cap {
                    z.clone()
                } else {
                    cap
                }
            }
            LossRule::PiecewiseLinear { nodes } => {
                let n = nodes.len();
                let pos = nodes.partition_point(|&(x, _)| q(x) <= *z);
                let seg = pos.clamp(1, n - 1) - 1;
                let (x0, y0) = nodes[seg];
                let (x1, y1) = nodes[seg + 1];
                let (x0, y0, x1, y1) = (q(x0), q(y0), q(x1), q(y1));
                let slope = (y1 - &y0) / (x1 - &x0);
                y0 + slope * (z - x0)
            }
        }
    }
}

/// Finite two-player game with equiprobable shocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteGame {
    /// Number of periods (at most 4; 0 means "no moves remain").
    pub n_periods: usize,
    /// Root states the reachability analysis starts from.
    pub initial_states: Vec<f64>,
    /// Equiprobable shock values.
    pub noise_support: Vec<f64>,
    /// Hedger actions.
    pub u_set: Vec<f64>,
    /// Adverse actions.
    pub v_set: Vec<f64>,
    pub transition: TransitionRule,
    pub loss: LossRule,
}

impl DiscreteGame {
    /// Lists every violated construction invariant.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.n_periods > 4 {
            out.push(format!("n_periods must be <= 4 (got {})", self.n_periods));
        }
        if self.initial_states.is_empty() {
            out.push("initial_states must be nonempty".into());
        }
        if self.noise_support.is_empty() {
            out.push("noise_support must be nonempty".into());
        }
        if self.u_set.is_empty() {
            out.push("u_set must be nonempty".into());
        }
        if self.v_set.is_empty() {
            out.push("v_set must be nonempty".into());
        }
        if let LossRule::PiecewiseLinear { nodes } = &self.loss {
            if nodes.len() < 2 {
                out.push("piecewise-linear loss needs at least 2 nodes".into());
            } else if nodes.windows(2).any(|w| w[1].0 <= w[0].0) {
                out.push("piecewise-linear loss nodes must increase".into());
            }
        }
        out
    }

    pub fn validated(self) -> Result<Self, GdpError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(self)
        } else {
            Err(GdpError::Invalid { violations: v })
        }
    }

    /// The demo game: two periods, actions `{-1, 0, 1}` against `{-1, 1}`,
    /// state moves by `u * v`, deterministic shock, loss `min(z, 1)`.
    pub fn bundled_two_period() -> Self {
        DiscreteGame {
            n_periods: 2,
            initial_states: vec![0.0],
            noise_support: vec![0.0],
            u_set: vec![-1.0, 0.0, 1.0],
            v_set: vec![-1.0, 1.0],
            transition: TransitionRule {
                z: 1.0,
                u: 0.0,
                v: 0.0,
                uv: 1.0,
                shock: 0.0,
                constant: 0.0,
            },
            loss: LossRule::Cap { cap: 1.0 },
        }
    }

    /// Deterministic pseudo-random game with dyadic data, for demos and
    /// stress tests. Shape: `n_periods`, `nu` hedger actions, `nv` adverse
    /// actions, `ns` shocks.
    pub fn randomized(seed: u64, n_periods: usize, nu: usize, nv: usize, ns: usize) -> Self {
        // xorshift-style mixing; quarters keep every datum dyadic.
        let mut state = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(1);
        fn next_quarter(state: &mut u64, span: i64) -> f64 {
            *state ^= *state << 13;
            *state ^= *state >> 7;
            *state ^= *state << 17;
            let raw = (*state % (2 * span as u64 * 4 + 1)) as i64 - span * 4;
            raw as f64 / 4.0
        }
        fn distinct(state: &mut u64, n: usize, span: i64) -> Vec<f64> {
            let mut vals = Vec::with_capacity(n);
            while vals.len() < n {
                let v = next_quarter(state, span);
                if !vals.contains(&v) {
                    vals.push(v);
                }
            }
            vals.sort_by(f64::total_cmp);
            vals
        }
        let s = &mut state;
        DiscreteGame {
            n_periods,
            initial_states: vec![0.0, next_quarter(s, 2)],
            noise_support: distinct(s, ns, 1),
            u_set: distinct(s, nu, 2),
            v_set: distinct(s, nv, 2),
            transition: TransitionRule {
                z: 1.0,
                u: next_quarter(s, 1) / 2.0,
                v: next_quarter(s, 1) / 2.0,
                uv: 1.0,
                shock: 1.0,
                constant: 0.0,
            },
            loss: LossRule::PiecewiseLinear {
                nodes: vec![
                    (-16.0, -16.0),
                    (next_quarter(s, 1) - 2.0, next_quarter(s, 1) - 1.5),
                    (next_quarter(s, 1) + 2.0, next_quarter(s, 1) + 0.5),
                    (16.0, 1.0 + next_quarter(s, 1).abs()),
                ],
            },
        }
    }
}

/// Hedger strategy: one action index per `(period, public history)` slot.
///
/// Histories are `(v, shock)` pairs encoded in mixed radix: the history
/// index at period `k+1` is `idx_k * (nv * ns) + v_idx * ns + shock_idx`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyTree {
    /// `actions[k][history_index]` indexes into `u_set`.
    pub actions: Vec<Vec<usize>>,
}

impl StrategyTree {
    pub fn action(&self, period: usize, history_index: usize) -> usize {
        self.actions[period][history_index]
    }
}

/// Reachability analysis output: per period, per reachable state, the game
/// value and the attainable levels with a witness strategy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Reachability {
    pub p_grid: Vec<f64>,
    /// `levels[k]` lists the states reachable at period `k` (from the
    /// initial states, under any play), sorted ascending.
    pub levels: Vec<Vec<StateReachability>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateReachability {
    pub state: f64,
    /// Worst-case optimal value `K(k, state)`.
    pub k_value: f64,
    /// `attainable[i]` decides `p_grid[i] <= K` (downward closed by
    /// construction).
    pub attainable: Vec<bool>,
    /// Optimal strategy from this state and period onward (greedy from the
    /// recursion); witnesses every attainable pair.
    pub witness: StrategyTree,
}

impl Reachability {
    /// Looks up attainability of `(state, p)` at a period.
    pub fn attainable(&self, period: usize, state: f64, p: f64) -> bool {
        self.levels[period]
            .iter()
            .find(|s| s.state == state)
            .is_some_and(|s| p <= s.k_value)
    }
}

/// Value process and martingale part along a fixed adverse path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValueMartingale {
    /// `s_values[k][h]`: adverse value at period `k`, shock history `h`
    /// (mixed-radix index, `ns^k` entries).
    pub s_values: Vec<Vec<f64>>,
    /// `m_values[k][h]`: the exact martingale part, started at `start_p`.
    pub m_values: Vec<Vec<f64>>,
}

/// Outcome of a dynamic-programming inclusion check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GdpReport {
    /// Instances whose premise held and whose conclusion was verified.
    pub checked: usize,
    pub violations: Vec<String>,
    /// Arithmetic mode; always exact (every f64 is a dyadic rational).
    pub arithmetic: String,
    pub notes: Vec<String>,
}

impl GdpReport {
    fn new() -> Self {
        GdpReport {
            checked: 0,
            violations: Vec::new(),
            arithmetic: "exact-rational".to_string(),
            notes: Vec::new(),
        }
    }

    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Exact engine
// ---------------------------------------------------------------------------

struct Engine<'g> {
    game: &'g DiscreteGame,
    u_q: Vec<Q>,
    v_q: Vec<Q>,
    s_q: Vec<Q>,
    c_z: Q,
    c_u: Q,
    c_v: Q,
    c_uv: Q,
    c_s: Q,
    c_0: Q,
    k_memo: std::cell::RefCell<HashMap<(usize, Q), Q>>,
}

impl<'g> Engine<'g> {
    fn new(game: &'g DiscreteGame) -> Result<Self, GdpError> {
        let violations = game.violations();
        if !violations.is_empty() {
            return Err(GdpError::Invalid { violations });
        }
        let t = &game.transition;
        Ok(Engine {
            game,
            u_q: game.u_set.iter().map(|&x| q(x)).collect(),
            v_q: game.v_set.iter().map(|&x| q(x)).collect(),
            s_q: game.noise_support.iter().map(|&x| q(x)).collect(),
            c_z: q(t.z),
            c_u: q(t.u),
            c_v: q(t.v),
            c_uv: q(t.uv),
            c_s: q(t.shock),
            c_0: q(t.constant),
            k_memo: std::cell::RefCell::new(HashMap::new()),
        })
    }

    fn next_state(&self, z: &Q, u: &Q, v: &Q, s: &Q) -> Q {
        &self.c_z * z
            + &self.c_u * u
            + &self.c_v * v
            + &self.c_uv * u * v
            + &self.c_s * s
            + &self.c_0
    }

    fn loss(&self, z: &Q) -> Q {
        self.game.loss.eval_q(z)
    }

    fn n(&self) -> usize {
        self.game.n_periods
    }

    /// Worst-case optimal value by backward recursion (memoized).
    fn k_value(&self, k: usize, z: &Q) -> Q {
        if k == self.n() {
            return self.loss(z);
        }
        if let Some(v) = self.k_memo.borrow().get(&(k, z.clone())) {
            return v.clone();
        }
        let mut best: Option<Q> = None;
        for u in &self.u_q {
            let mut worst: Option<Q> = None;
            for v in &self.v_q {
                let mut total = Q::zero();
                for s in &self.s_q {
                    total += self.k_value(k + 1, &self.next_state(z, u, v, s));
                }
                let avg = total / q_int(self.s_q.len());
                worst = Some(match worst {
                    Some(w) if w <= avg => w,
                    _ => avg,
                });
            }
            let w = worst.expect("nonempty v_set");
            best = Some(match best {
                Some(b) if b >= w => b,
                _ => w,
            });
        }
        let out = best.expect("nonempty u_set");
        self.k_memo
            .borrow_mut()
            .insert((k, z.clone()), out.clone());
        out
    }

    /// Number of public `(v, shock)` histories entering period `k`.
    fn history_count(&self, k: usize) -> usize {
        (self.v_q.len() * self.s_q.len()).pow(k as u32)
    }

    /// Greedy optimal strategy from the recursion: Markov in the state, laid
    /// out over the public history tree.
    fn greedy_witness(&self, z0: &Q) -> StrategyTree {
        let (nv, ns) = (self.v_q.len(), self.s_q.len());
        let mut actions: Vec<Vec<usize>> = Vec::with_capacity(self.n());
        let mut states = vec![z0.clone()];
        for k in 0..self.n() {
            let mut level = Vec::with_capacity(states.len());
            let mut next_states = Vec::with_capacity(states.len() * nv * ns);
            for z in &states {
                let mut best: Option<(usize, Q)> = None;
                for (ui, u) in self.u_q.iter().enumerate() {
                    let mut worst: Option<Q> = None;
                    for v in &self.v_q {
                        let mut total = Q::zero();
                        for s in &self.s_q {
                            total += self.k_value(k + 1, &self.next_state(z, u, v, s));
                        }
                        let avg = total / q_int(ns);
                        worst = Some(match worst {
                            Some(w) if w <= avg => w,
                            _ => avg,
                        });
                    }
                    let w = worst.expect("nonempty v_set");
                    best = match best {
                        Some((bi, b)) if b >= w => Some((bi, b)),
                        _ => Some((ui, w)),
                    };
                }
                let (ui, _) = best.expect("nonempty u_set");
                level.push(ui);
                let u = &self.u_q[ui];
                for v in &self.v_q {
                    for s in &self.s_q {
                        next_states.push(self.next_state(z, u, v, s));
                    }
                }
            }
            actions.push(level);
            states = next_states;
        }
        StrategyTree { actions }
    }

    /// Worst-case expected loss of a fixed strategy starting at `(k, z)` with
    /// public history index `h`: the adversary plays the minimizing
    /// continuation knowing the full history.
    fn strategy_value(
        &self,
        tree: &StrategyTree,
        k: usize,
        h: usize,
        z: &Q,
        memo: &mut HashMap<(usize, usize), Q>,
    ) -> Q {
        if k == self.n() {
            return self.loss(z);
        }
        if let Some(v) = memo.get(&(k, h)) {
            return v.clone();
        }
        let (nv, ns) = (self.v_q.len(), self.s_q.len());
        let u = &self.u_q[tree.action(k, h)];
        let mut worst: Option<Q> = None;
        for (vi, v) in self.v_q.iter().enumerate() {
            let mut total = Q::zero();
            for (si, s) in self.s_q.iter().enumerate() {
                let child = h * nv * ns + vi * ns + si;
                total += self.strategy_value(tree, k + 1, child, &self.next_state(z, u, v, s), memo);
            }
            let avg = total / q_int(ns);
            worst = Some(match worst {
                Some(w) if w <= avg => w,
                _ => avg,
            });
        }
        let out = worst.expect("nonempty v_set");
        memo.insert((k, h), out.clone());
        out
    }

    /// All strategy trees (mixed-radix enumeration), guarded.
    fn enumerate_trees(&self) -> Result<Vec<StrategyTree>, GdpError> {
        let slots: usize = (0..self.n()).map(|k| self.history_count(k)).sum();
        let count = (self.u_q.len() as u128).checked_pow(slots as u32);
        match count {
            Some(c) if c <= ENUMERATION_GUARD => {}
            _ => {
                return Err(GdpError::ExplosionGuard {
                    what: "strategy trees",
                    count: count.unwrap_or(u128::MAX),
                })
            }
        }
        let nu = self.u_q.len();
        let mut trees = Vec::with_capacity(count.unwrap() as usize);
        let mut digits = vec![0usize; slots];
        loop {
            let mut actions = Vec::with_capacity(self.n());
            let mut offset = 0;
            for k in 0..self.n() {
                let len = self.history_count(k);
                actions.push(digits[offset..offset + len].to_vec());
                offset += len;
            }
            trees.push(StrategyTree { actions });
            // increment
            let mut i = 0;
            loop {
                if i == slots {
                    return Ok(trees);
                }
                digits[i] += 1;
                if digits[i] < nu {
                    break;
                }
                digits[i] = 0;
                i += 1;
            }
        }
    }

    /// All adapted adverse maps (one `v` index per `(period, shock history)`
    /// slot), guarded.
    fn enumerate_adverse_maps(&self) -> Result<Vec<AdverseMap>, GdpError> {
        let ns = self.s_q.len();
        let slots_per_k: Vec<usize> = (0..self.n()).map(|k| ns.pow(k as u32)).collect();
        let slots: usize = slots_per_k.iter().sum();
        let count = (self.v_q.len() as u128).checked_pow(slots as u32);
        match count {
            Some(c) if c <= ENUMERATION_GUARD => {}
            _ => {
                return Err(GdpError::ExplosionGuard {
                    what: "adverse maps",
                    count: count.unwrap_or(u128::MAX),
                })
            }
        }
        let nv = self.v_q.len();
        let mut maps = Vec::new();
        let mut digits = vec![0usize; slots];
        loop {
            let mut choices = Vec::with_capacity(self.n());
            let mut offset = 0;
            for &len in &slots_per_k {
                choices.push(digits[offset..offset + len].to_vec());
                offset += len;
            }
            maps.push(AdverseMap { choices });
            let mut i = 0;
            loop {
                if i == slots {
                    return Ok(maps);
                }
                digits[i] += 1;
                if digits[i] < nv {
                    break;
                }
                digits[i] = 0;
                i += 1;
            }
        }
    }

    /// Adverse value process and exact Doob martingale part along an adverse
    /// map, for a fixed strategy. Entries are indexed by shock history.
    fn value_and_martingale(
        &self,
        tree: &StrategyTree,
        adverse: &AdverseMap,
        z0: &Q,
        start_p: &Q,
    ) -> (Vec<Vec<Q>>, Vec<Vec<Q>>) {
        let (nv, ns) = (self.v_q.len(), self.s_q.len());
        let n = self.n();
        // Forward replay: state and public-history index per shock history.
        let mut z_levels: Vec<Vec<Q>> = vec![vec![z0.clone()]];
        let mut h_levels: Vec<Vec<usize>> = vec![vec![0]];
        for k in 0..n {
            let mut zs = Vec::with_capacity(z_levels[k].len() * ns);
            let mut hs = Vec::with_capacity(z_levels[k].len() * ns);
            for (hist, (z, &h)) in z_levels[k].iter().zip(&h_levels[k]).enumerate() {
                let vi = adverse.choices[k][hist];
                let u = &self.u_q[tree.action(k, h)];
                let v = &self.v_q[vi];
                for (si, s) in self.s_q.iter().enumerate() {
                    zs.push(self.next_state(z, u, v, s));
                    hs.push(h * nv * ns + vi * ns + si);
                }
            }
            z_levels.push(zs);
            h_levels.push(hs);
        }
        // Adverse value: free continuation from each node on.
        let mut memo = HashMap::new();
        let s_values: Vec<Vec<Q>> = (0..=n)
            .map(|k| {
                z_levels[k]
                    .iter()
                    .zip(&h_levels[k])
                    .map(|(z, &h)| self.strategy_value(tree, k, h, z, &mut memo))
                    .collect()
            })
            .collect();
        // Exact Doob decomposition: the martingale absorbs the innovations.
        let mut m_values: Vec<Vec<Q>> = vec![vec![start_p.clone()]];
        for k in 0..n {
            let mut next = Vec::with_capacity(s_values[k + 1].len());
            for (hist, m) in m_values[k].iter().enumerate() {
                let children = &s_values[k + 1][hist * ns..(hist + 1) * ns];
                let mean: Q = children.iter().cloned().sum::<Q>() / q_int(ns);
                for child in children {
                    next.push(m + child - &mean);
                }
            }
            m_values.push(next);
        }
        (s_values, m_values)
    }

    /// States reachable per period from the initial states under any play.
    fn reachable_states(&self) -> Vec<Vec<Q>> {
        let mut levels: Vec<Vec<Q>> = Vec::with_capacity(self.n() + 1);
        let mut current: Vec<Q> = self.game.initial_states.iter().map(|&z| q(z)).collect();
        current.sort();
        current.dedup();
        for _ in 0..self.n() {
            let mut next: Vec<Q> = Vec::new();
            for z in &current {
                for u in &self.u_q {
                    for v in &self.v_q {
                        for s in &self.s_q {
                            next.push(self.next_state(z, u, v, s));
                        }
                    }
                }
            }
            next.sort();
            next.dedup();
            levels.push(std::mem::replace(&mut current, next));
        }
        levels.push(current);
        levels
    }
}

/// Adapted adverse map: one `v_set` index per `(period, shock history)`.
#[derive(Debug, Clone, PartialEq, Eq)]
struct AdverseMap {
    choices: Vec<Vec<usize>>,
}

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

/// Enumerates the reachability sets on the level grid: `(z, p)` is
/// attainable at period `k` iff `p <= K(k, z)`, with a greedy witness
/// strategy per state.
pub fn enumerate_reachability(game: &DiscreteGame, p_grid: &[f64]) -> Result<Reachability, GdpError> {
    let eng = Engine::new(game)?;
    // Guard mirrors the flat-enumeration cost this structure certifies.
    let slots: usize = (0..eng.n()).map(|k| eng.history_count(k)).sum();
    match (eng.u_q.len() as u128).checked_pow(slots as u32) {
        Some(c) if c <= ENUMERATION_GUARD => {}
        c => {
            return Err(GdpError::ExplosionGuard {
                what: "strategy trees",
                count: c.unwrap_or(u128::MAX),
            })
        }
    }
    let levels = eng
        .reachable_states()
        .iter()
        .enumerate()
        .map(|(k, states)| {
            states
                .iter()
                .map(|z| {
                    let k_value = eng.k_value(k, z);
                    let attainable = p_grid.iter().map(|&p| q(p) <= k_value).collect();
                    // Witness from this state at this period: shift the game.
                    let tail = DiscreteGame {
                        n_periods: game.n_periods - k,
                        ..game.clone()
                    };
                    let tail_eng = Engine::new(&tail).expect("validated above");
                    let witness = tail_eng.greedy_witness(z);
                    StateReachability {
                        state: z.to_f64().expect("representable state"),
                        k_value: k_value.to_f64().expect("representable value"),
                        attainable,
                        witness,
                    }
                })
                .collect()
        })
        .collect();
    Ok(Reachability {
        p_grid: p_grid.to_vec(),
        levels,
    })
}

/// Worst-case optimal value by the backward recursion.
pub fn value_recursive(game: &DiscreteGame, z0: f64) -> Result<f64, GdpError> {
    let eng = Engine::new(game)?;
    Ok(eng
        .k_value(0, &q(z0))
        .to_f64()
        .expect("representable value"))
}

/// Worst-case optimal value by flat enumeration: iterate every strategy
/// tree, evaluate its worst case over all adapted adverse maps, take the
/// max. Exact, and independent of the recursion route.
pub fn value_enumerated(game: &DiscreteGame, z0: f64) -> Result<f64, GdpError> {
    let eng = Engine::new(game)?;
    let trees = eng.enumerate_trees()?;
    let z0 = q(z0);
    let mut best: Option<Q> = None;
    for tree in &trees {
        let mut memo = HashMap::new();
        let value = eng.strategy_value(tree, 0, 0, &z0, &mut memo);
        best = Some(match best {
            Some(b) if b >= value => b,
            _ => value,
        });
    }
    Ok(best
        .expect("at least one strategy")
        .to_f64()
        .expect("representable value"))
}

/// Adverse value process `S_k` and its exact martingale part `M_k` along a
/// fixed adverse action path, for a given strategy.
///
/// `M` starts at `start_p` (must not exceed `S_0`), its conditional
/// increments vanish exactly, and `M_k <= S_k` everywhere.
pub fn value_martingale(
    game: &DiscreteGame,
    strategy: &StrategyTree,
    adverse_path: &[f64],
    start_p: f64,
    z0: f64,
) -> Result<ValueMartingale, GdpError> {
    let eng = Engine::new(game)?;
    assert_eq!(
        adverse_path.len(),
        game.n_periods,
        "adverse path must cover every period"
    );
    let choices: Vec<Vec<usize>> = adverse_path
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let vi = game
                .v_set
                .iter()
                .position(|w| w == v)
                .unwrap_or_else(|| panic!("adverse action {v} not in v_set"));
            vec![vi; eng.s_q.len().pow(k as u32)]
        })
        .collect();
    let map = AdverseMap { choices };
    let z0 = q(z0);
    let p = q(start_p);
    let mut memo = HashMap::new();
    let s0 = eng.strategy_value(strategy, 0, 0, &z0, &mut memo);
    if p > s0 {
        return Err(GdpError::LevelTooHigh {
            start_p,
            s0: s0.to_f64().expect("representable value"),
        });
    }
    let (s_values, m_values) = eng.value_and_martingale(strategy, &map, &z0, &p);
    let to_f64 = |levels: Vec<Vec<Q>>| {
        levels
            .into_iter()
            .map(|level| {
                level
                    .into_iter()
                    .map(|v| v.to_f64().expect("representable value"))
                    .collect()
            })
            .collect()
    };
    Ok(ValueMartingale {
        s_values: to_f64(s_values),
        m_values: to_f64(m_values),
    })
}

/// First dynamic-programming inclusion: from every attainable `(z, p)` the
/// witness strategy and the Doob martingale family keep `(Z_k, M_k)` inside
/// the reachability set at every period, along every adverse map and shock
/// path. Also verifies the exact martingale property and that the family is
/// nonanticipating in the adverse control.
pub fn check_gdp1(game: &DiscreteGame, p_grid: &[f64]) -> Result<GdpReport, GdpError> {
    check_gdp1_with_mutation(game, p_grid, 0.0)
}

/// Same as [`check_gdp1`] but with `mutation` added to every `M_k`, `k >= 1`
/// — a deliberately broken family for exercising the checker itself.
pub fn check_gdp1_with_mutation(
    game: &DiscreteGame,
    p_grid: &[f64],
    mutation: f64,
) -> Result<GdpReport, GdpError> {
    let eng = Engine::new(game)?;
    let maps = eng.enumerate_adverse_maps()?;
    let mutation = q(mutation);
    let mut report = GdpReport::new();
    let ns = eng.s_q.len();

    for &z0_f in &game.initial_states {
        let z0 = q(z0_f);
        let k0 = eng.k_value(0, &z0);
        let witness = eng.greedy_witness(&z0);
        let mut memo = HashMap::new();
        let j_witness = eng.strategy_value(&witness, 0, 0, &z0, &mut memo);
        if j_witness != k0 {
            report.violations.push(format!(
                "witness strategy at z0={z0_f} attains {j_witness} instead of K={k0}"
            ));
        }
        for &p_f in p_grid {
            let p = q(p_f);
            if p > k0 {
                continue;
            }
            // Martingale families per adverse map, plus the replayed states.
            let mut m_trees: Vec<Vec<Vec<Q>>> = Vec::with_capacity(maps.len());
            for map in &maps {
                let (s_values, mut m_values) =
                    eng.value_and_martingale(&witness, map, &z0, &p);
                for level in m_values.iter_mut().skip(1) {
                    for m in level.iter_mut() {
                        *m += &mutation;
                    }
                }
                // Replay states along the map.
                let mut z_level = vec![z0.clone()];
                let mut h_level = vec![0usize];
                for k in 0..=eng.n() {
                    for (hist, m) in m_values[k].iter().enumerate() {
                        let z = &z_level[hist];
                        if *m > eng.k_value(k, z) {
                            report.violations.push(format!(
                                "z0={z0_f} p={p_f}: (Z_{k}, M_{k}) leaves the reachability set \
                                 (state {z}, level {m})"
                            ));
                        }
                    }
                    for (hist, m) in m_values[k].iter().enumerate() {
                        if k < eng.n() {
                            let children = &m_values[k + 1][hist * ns..(hist + 1) * ns];
                            let mean: Q = children.iter().cloned().sum::<Q>() / q_int(ns);
                            if mean != *m {
                                report.violations.push(format!(
                                    "z0={z0_f} p={p_f}: martingale property fails at period {k} \
                                     (history {hist})"
                                ));
                            }
                        }
                    }
                    report.checked += m_values[k].len();
                    let _ = &s_values;
                    if k < eng.n() {
                        let (nv, ns_) = (eng.v_q.len(), eng.s_q.len());
                        let mut zs = Vec::with_capacity(z_level.len() * ns_);
                        let mut hs = Vec::with_capacity(z_level.len() * ns_);
                        for (hist, (z, &h)) in z_level.iter().zip(&h_level).enumerate() {
                            let vi = map.choices[k][hist];
                            let u = &eng.u_q[witness.action(k, h)];
                            for (si, s) in eng.s_q.iter().enumerate() {
                                zs.push(eng.next_state(z, u, &eng.v_q[vi], s));
                                hs.push(h * nv * ns_ + vi * ns_ + si);
                            }
                        }
                        z_level = zs;
                        h_level = hs;
                    }
                }
                m_trees.push(m_values);
            }
            // Nonanticipativity: maps agreeing on all slots before period k
            // produce identical martingales up to period k.
            for (a, map_a) in maps.iter().enumerate() {
                for (b, map_b) in maps.iter().enumerate().skip(a + 1) {
                    for k in 0..=eng.n() {
                        let agree_before =
                            (0..k).all(|j| map_a.choices[j] == map_b.choices[j]);
                        if agree_before && m_trees[a][k] != m_trees[b][k] {
                            report.violations.push(format!(
                                "z0={z0_f} p={p_f}: martingale family anticipates the adverse \
                                 control at period {k} (maps {a}, {b})"
                            ));
                        }
                    }
                }
            }
        }
    }
    Ok(report)
}

/// Stopping rule for the second inclusion: stop at the first period the
/// `(state, level)` pair leaves a rectangle, or at a constant period.
#[derive(Debug, Clone)]
enum StoppingRule {
    Constant(usize),
    /// Bounds are optional (`None` = unbounded side).
    Rectangle {
        z_lo: Option<Q>,
        z_hi: Option<Q>,
        m_lo: Option<Q>,
        m_hi: Option<Q>,
    },
}

impl StoppingRule {
    fn stops(&self, k: usize, z: &Q, m: &Q) -> bool {
        match self {
            StoppingRule::Constant(at) => k >= *at,
            StoppingRule::Rectangle { z_lo, z_hi, m_lo, m_hi } => {
                z_lo.as_ref().is_some_and(|b| z < b)
                    || z_hi.as_ref().is_some_and(|b| z > b)
                    || m_lo.as_ref().is_some_and(|b| m < b)
                    || m_hi.as_ref().is_some_and(|b| m > b)
            }
        }
    }
}

/// Second dynamic-programming inclusion: whenever a strategy, a martingale
/// family (constant or Doob) and a first-exit stopping family keep
/// `(Z_tau, M_tau)` inside the reachability set for every adverse map, then
/// `(z0, p - eps)` is attainable at time zero, with `eps` the level-grid
/// step.
///
/// Stopping rules range over constants and first exits of rectangles with
/// state bounds on the reachable lattice and level bounds on the grid.
pub fn check_gdp2(game: &DiscreteGame, p_grid: &[f64]) -> Result<GdpReport, GdpError> {
    let eng = Engine::new(game)?;
    let trees = eng.enumerate_trees()?;
    let maps = eng.enumerate_adverse_maps()?;
    let mut report = GdpReport::new();
    report.notes.push(
        "uniform-integrability hypotheses are vacuous for finite games and are not tested"
            .to_string(),
    );

    let mut levels: Vec<f64> = p_grid.to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    if levels.len() < 2 {
        return Err(GdpError::Invalid {
            violations: vec!["p_grid needs at least two distinct levels for the eps step".into()],
        });
    }
    let eps = levels
        .windows(2)
        .map(|w| q(w[1]) - q(w[0]))
        .min()
        .expect("two or more levels");

    // State cutpoints: the reachable lattice across all periods (thinned to
    // keep the rule family small on large games).
    let mut lattice: Vec<Q> = eng.reachable_states().into_iter().flatten().collect();
    lattice.sort();
    lattice.dedup();
    const MAX_CUTS: usize = 8;
    if lattice.len() > MAX_CUTS {
        let step = lattice.len() / MAX_CUTS;
        lattice = lattice.into_iter().step_by(step).collect();
    }
    let mut rules: Vec<StoppingRule> = (0..=eng.n()).map(StoppingRule::Constant).collect();
    let z_bounds: Vec<Option<Q>> = std::iter::once(None)
        .chain(lattice.iter().cloned().map(Some))
        .collect();
    let m_bounds: Vec<Option<Q>> = std::iter::once(None)
        .chain(levels.iter().map(|&p| Some(q(p))))
        .collect();
    for z_lo in &z_bounds {
        for z_hi in &z_bounds {
            for m_lo in &m_bounds {
                for m_hi in &m_bounds {
                    if z_lo.is_none() && z_hi.is_none() && m_lo.is_none() && m_hi.is_none() {
                        continue;
                    }
                    rules.push(StoppingRule::Rectangle {
                        z_lo: z_lo.clone(),
                        z_hi: z_hi.clone(),
                        m_lo: m_lo.clone(),
                        m_hi: m_hi.clone(),
                    });
                }
            }
        }
    }

    let instances = trees.len() as u128
        * maps.len() as u128
        * rules.len() as u128
        * levels.len() as u128
        * game.initial_states.len() as u128
        * 2;
    if instances > ENUMERATION_GUARD {
        return Err(GdpError::ExplosionGuard {
            what: "premise instances",
            count: instances,
        });
    }

    let ns = eng.s_q.len();
    let paths_count = ns.pow(eng.n() as u32);
    for &z0_f in &game.initial_states {
        let z0 = q(z0_f);
        let k0 = eng.k_value(0, &z0);
        for tree in &trees {
            let mut memo = HashMap::new();
            let j_tree = eng.strategy_value(tree, 0, 0, &z0, &mut memo);
            for &p_f in &levels {
                let p = q(p_f);
                // Candidate families: the constant family always, the Doob
                // family when it is well defined (p <= S_0).
                let mut families: Vec<Vec<(Vec<Vec<Q>>, Vec<Vec<Q>>)>> = Vec::new();
                let constant: Vec<(Vec<Vec<Q>>, Vec<Vec<Q>>)> = maps
                    .iter()
                    .map(|map| {
                        let (s_values, _) = eng.value_and_martingale(tree, map, &z0, &p);
                        let m_values = (0..=eng.n())
                            .map(|k| vec![p.clone(); ns.pow(k as u32)])
                            .collect();
                        (s_values, m_values)
                    })
                    .collect();
                families.push(constant);
                if p <= j_tree {
                    families.push(
                        maps.iter()
                            .map(|map| eng.value_and_martingale(tree, map, &z0, &p))
                            .collect(),
                    );
                }
                for family in &families {
                    // Replay states per map once.
                    let z_trees: Vec<Vec<Vec<Q>>> = maps
                        .iter()
                        .map(|map| {
                            let mut levels_z = vec![vec![z0.clone()]];
                            let mut h_level = vec![0usize];
                            for k in 0..eng.n() {
                                let prev = levels_z[k].clone();
                                let mut zs = Vec::with_capacity(prev.len() * ns);
                                let mut hs = Vec::with_capacity(prev.len() * ns);
                                for (hist, (z, &h)) in prev.iter().zip(&h_level).enumerate() {
                                    let vi = map.choices[k][hist];
                                    let u = &eng.u_q[tree.action(k, h)];
                                    for (si, s) in eng.s_q.iter().enumerate() {
                                        zs.push(eng.next_state(z, u, &eng.v_q[vi], s));
                                        hs.push(h * eng.v_q.len() * ns + vi * ns + si);
                                    }
                                }
                                levels_z.push(zs);
                                h_level = hs;
                            }
                            levels_z
                        })
                        .collect();
                    for rule in &rules {
                        let mut premise = true;
                        'maps: for (mi, (s_m, z_tree)) in
                            family.iter().zip(&z_trees).enumerate()
                        {
                            let _ = mi;
                            let (_, m_tree) = s_m;
                            for path in 0..paths_count {
                                // Walk the shock path; stop at the rule.
                                let mut hist = 0usize;
                                let mut stopped = false;
                                for k in 0..=eng.n() {
                                    let z = &z_tree[k][hist];
                                    let m = &m_tree[k][hist];
                                    let stop_now =
                                        k == eng.n() || rule.stops(k, z, m);
                                    if stop_now {
                                        if *m > eng.k_value(k, z) {
                                            premise = false;
                                        }
                                        stopped = true;
                                        break;
                                    }
                                    let digit =
                                        path / ns.pow((eng.n() - 1 - k) as u32) % ns;
                                    hist = hist * ns + digit;
                                }
                                assert!(stopped);
                                if !premise {
                                    break 'maps;
                                }
                            }
                        }
                        if premise {
                            report.checked += 1;
                            if &p - &eps > k0 {
                                report.violations.push(format!(
                                    "z0={z0_f} p={p_f}: premise holds but (z0, p - eps) is not \
                                     attainable (K={k0})"
                                ));
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(report)
}
