//! Solver-vs-oracle tests for the uncertain-volatility surface.

mod common;

use tgp::model::{Grid, MarketModel, Payoff, Stretch};
use tgp::{solve_bsb, Scheme};

fn model(sigma_lo: f64, sigma_hi: f64) -> MarketModel {
    MarketModel {
        mu_lo: -0.1,
        mu_hi: 0.1,
        sigma_lo,
        sigma_hi,
        x0: 100.0,
        horizon_t: 1.0,
    }
}

fn grid(n: usize) -> Grid {
    Grid {
        x_min: 20.0,
        x_max: 500.0,
        n_x: n,
        n_t: n,
        stretch: Stretch::LogUniform,
    }
}

#[test]
fn constant_vol_call_matches_black_scholes() {
    // Closed form at sigma = 0.2: 7.965567455405804 (oracle in common::bs_call).
    let oracle = common::bs_call(100.0, 100.0, 0.2, 1.0);
    assert!((oracle - 7.965567455405804).abs() < 1e-8);
    let sol = solve_bsb(
        &model(0.2, 0.2),
        &Payoff::Call { strike: 100.0 },
        &grid(400),
        Scheme::ImplicitPolicyIteration,
    )
    .unwrap();
    let w0 = sol.price_at(0.0, 100.0).unwrap();
    assert!(
        ((w0 - oracle) / oracle).abs() < 1e-3,
        "w0={w0} oracle={oracle}"
    );
}

#[test]
fn explicit_scheme_agrees_with_implicit_on_small_grids() {
    let payoff = Payoff::Call { strike: 100.0 };
    let m = model(0.1, 0.3);
    let implicit = solve_bsb(
        &m,
        &payoff,
        &grid(80),
        Scheme::ImplicitPolicyIteration,
    )
    .unwrap();
    // Explicit needs dt below h^2-like CFL bound; 80 space nodes need many steps.
    let g = Grid {
        n_t: 6000,
        ..grid(80)
    };
    let explicit = solve_bsb(&m, &payoff, &g, Scheme::ExplicitEuler).unwrap();
    let a = implicit.price_at(0.0, 100.0).unwrap();
    let b = explicit.price_at(0.0, 100.0).unwrap();
    assert!((a - b).abs() < 0.05, "implicit={a} explicit={b}");
}

#[test]
fn convex_payoff_reduces_to_upper_volatility() {
    let oracle = common::bs_call(100.0, 100.0, 0.3, 1.0);
    assert!((oracle - 11.923538474048499).abs() < 1e-8);
    let sol = solve_bsb(
        &model(0.1, 0.3),
        &Payoff::Call { strike: 100.0 },
        &grid(400),
        Scheme::ImplicitPolicyIteration,
    )
    .unwrap();
    let w0 = sol.price_at(0.0, 100.0).unwrap();
    assert!(
        ((w0 - oracle) / oracle).abs() < 1e-3,
        "w0={w0} oracle={oracle}"
    );
}

#[test]
fn butterfly_worst_case_dominates_constant_vol_prices() {
    let payoff = Payoff::Butterfly {
        k1: 90.0,
        k2: 100.0,
        k3: 110.0,
    };
    let sol = solve_bsb(
        &model(0.1, 0.3),
        &payoff,
        &grid(400),
        Scheme::ImplicitPolicyIteration,
    )
    .unwrap();
    let w0 = sol.price_at(0.0, 100.0).unwrap();
    // Constant-volatility closed forms: 3.6908059525819077 and 1.3068150027169025.
    let lo = common::bs_butterfly(100.0, 90.0, 100.0, 110.0, 0.1, 1.0);
    let hi = common::bs_butterfly(100.0, 90.0, 100.0, 110.0, 0.3, 1.0);
    assert!((lo - 3.6908059525819077).abs() < 1e-8);
    assert!((hi - 1.3068150027169025).abs() < 1e-8);
    assert!(w0 > lo.max(hi) + 0.5, "w0={w0} lo={lo} hi={hi}");

    // Coarse lattice corroboration (10 steps): the worst-case value is far
    // above both constant-volatility prices.
    let tree10 = common::tree_worst_case(100.0, |x| payoff.eval(x), 0.1, 0.3, 1.0, 10);
    assert!((tree10 - 7.101194276315406).abs() < 1e-7, "tree10={tree10}");

    // A 200-step lattice pins the value to a couple of percent.
    let tree200 = common::tree_worst_case(100.0, |x| payoff.eval(x), 0.1, 0.3, 1.0, 200);
    assert!((tree200 - 5.399527671430159).abs() < 1e-7, "tree200={tree200}");
    assert!(
        ((w0 - tree200) / tree200).abs() < 0.02,
        "w0={w0} tree200={tree200}"
    );
}

#[test]
fn constant_vol_error_halves_under_mesh_refinement() {
    let oracle = common::bs_call(100.0, 100.0, 0.2, 1.0);
    let mut errors = Vec::new();
    for n in [200, 400, 800] {
        let sol = solve_bsb(
            &model(0.2, 0.2),
            &Payoff::Call { strike: 100.0 },
            &grid(n),
            Scheme::ImplicitPolicyIteration,
        )
        .unwrap();
        let w0 = sol.price_at(0.0, 100.0).unwrap();
        errors.push((w0 - oracle).abs());
    }
    assert!(errors[0] / errors[1] >= 2.0, "{errors:?}");
    assert!(errors[1] / errors[2] >= 2.0, "{errors:?}");
}

#[test]
fn call_delta_matches_black_scholes_delta() {
    let sol = solve_bsb(
        &model(0.2, 0.2),
        &Payoff::Call { strike: 100.0 },
        &grid(400),
        Scheme::ImplicitPolicyIteration,
    )
    .unwrap();
    let (delta, gamma) = sol.greeks(0.0, 100.0).unwrap();
    let oracle = common::bs_call_delta(100.0, 100.0, 0.2, 1.0);
    assert!((oracle - 0.539827837277029).abs() < 1e-8);
    assert!((delta - oracle).abs() < 2e-3, "delta={delta} oracle={oracle}");
    assert!(gamma > 0.0, "call gamma must be positive, got {gamma}");
}

#[test]
fn worst_case_dominates_random_constant_vols() {
    // Constant-sigma prices never exceed the worst-case surface (supremum
    // property), checked on every node for five interior volatilities.
    let m = model(0.1, 0.3);
    let payoff = Payoff::Butterfly {
        k1: 90.0,
        k2: 100.0,
        k3: 110.0,
    };
    let g = grid(100);
    let robust = solve_bsb(&m, &payoff, &g, Scheme::ImplicitPolicyIteration).unwrap();
    for k in 0..5 {
        let sigma = 0.1 + 0.2 * (k as f64 + 0.5) / 5.0;
        let single = solve_bsb(
            &MarketModel {
                sigma_lo: sigma,
                sigma_hi: sigma,
                ..m
            },
            &payoff,
            &g,
            Scheme::ImplicitPolicyIteration,
        )
        .unwrap();
        for i in 0..=g.n_t {
            for j in 0..g.n_x {
                assert!(
                    single.value_at_node(i, j) <= robust.value_at_node(i, j) + 1e-7,
                    "sigma={sigma} node ({i},{j})"
                );
            }
        }
    }
}

#[test]
fn maturity_monotonicity_for_nonnegative_payoffs() {
    let sol = solve_bsb(
        &model(0.1, 0.3),
        &Payoff::Call { strike: 100.0 },
        &grid(100),
        Scheme::ImplicitPolicyIteration,
    )
    .unwrap();
    // Worst-case value of a nonnegative-payoff claim decays toward maturity.
    for i in 0..100 {
        for j in 0..100 {
            assert!(
                sol.value_at_node(i, j) >= sol.value_at_node(i + 1, j) - 1e-9,
                "node ({i},{j})"
            );
        }
    }
}
