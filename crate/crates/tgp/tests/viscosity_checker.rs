//! Pointwise viscosity checks of the candidate price surface.

mod common;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use tgp::hamiltonian::{check_viscosity_candidate, checker_tolerance, Verdict};
use tgp::model::{Grid, LossTransform, MarketModel, Payoff, Stretch};
use tgp::{solve_bsb, Scheme};

fn constant_vol_solution() -> tgp::GridSolution {
    let model = MarketModel {
        mu_lo: -0.1,
        mu_hi: 0.1,
        sigma_lo: 0.2,
        sigma_hi: 0.2,
        x0: 100.0,
        horizon_t: 1.0,
    };
    let grid = Grid {
        x_min: 20.0,
        x_max: 500.0,
        n_x: 200,
        n_t: 200,
        stretch: Stretch::LogUniform,
    };
    solve_bsb(
        &model,
        &Payoff::Call { strike: 100.0 },
        &grid,
        Scheme::ImplicitPolicyIteration,
    )
    .unwrap()
}

/// Interior sample points drawn away from the lattice boundary.
fn sample_points(n: usize, seed: u64) -> Vec<(f64, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let t = 0.05 + 0.9 * rng.random::<f64>();
            let x = 60.0 + 100.0 * rng.random::<f64>();
            let p = -1.0 + 2.0 * rng.random::<f64>();
            (t, x, p)
        })
        .collect()
}

#[test]
fn constant_vol_candidate_passes_everywhere() {
    let sol = constant_vol_solution();
    let points = sample_points(200, 11);
    let reports = check_viscosity_candidate(&sol, &LossTransform::Identity, &points);
    let passes = reports.iter().filter(|r| r.verdict == Verdict::Pass).count();
    let fails = reports.iter().filter(|r| r.verdict == Verdict::Fail).count();
    assert_eq!(fails, 0, "unexpected failures: {:?}", reports.iter().find(|r| r.verdict == Verdict::Fail));
    assert!(passes >= 198, "passes={passes}");
}

#[test]
fn perturbed_candidate_fails_the_subsolution_side() {
    // Tilting the surface by +0.1 (T - t) adds +0.1 to both residuals: the
    // supersolution inequality still holds, the subsolution one breaks.
    let sol = constant_vol_solution().with_perturbation(|t, _| 0.1 * (1.0 - t));
    let points = sample_points(200, 12);
    let reports = check_viscosity_candidate(&sol, &LossTransform::Identity, &points);
    let tol = checker_tolerance(&sol);
    let fails = reports
        .iter()
        .filter(|r| r.verdict == Verdict::Fail)
        .count();
    assert!(fails >= 190, "fails={fails}");
    for r in &reports {
        if r.verdict == Verdict::Fail {
            assert!(r.subsolution_residual > tol, "{r:?}");
            assert!(
                (r.subsolution_residual - 0.1).abs() < 2e-2,
                "tilt should show up as ~0.1: {r:?}"
            );
        }
    }
}

#[test]
fn identity_loss_residuals_do_not_depend_on_the_level() {
    let sol = constant_vol_solution();
    let pts1: Vec<_> = sample_points(50, 13).iter().map(|&(t, x, _)| (t, x, -0.7)).collect();
    let pts2: Vec<_> = pts1.iter().map(|&(t, x, _)| (t, x, 0.9)).collect();
    let r1 = check_viscosity_candidate(&sol, &LossTransform::Identity, &pts1);
    let r2 = check_viscosity_candidate(&sol, &LossTransform::Identity, &pts2);
    for (a, b) in r1.iter().zip(&r2) {
        assert!(
            (a.supersolution_residual - b.supersolution_residual).abs() < 1e-10,
            "{a:?} vs {b:?}"
        );
        assert!(
            (a.subsolution_residual - b.subsolution_residual).abs() < 1e-10,
            "{a:?} vs {b:?}"
        );
    }
}

#[test]
fn exponential_loss_candidate_also_passes() {
    let sol = constant_vol_solution();
    let loss = LossTransform::Exponential { lambda: 1.0 };
    let points: Vec<_> = sample_points(100, 14)
        .iter()
        .map(|&(t, x, p)| (t, x, 0.5 * p)) // keep p inside the range of Psi
        .collect();
    let reports = check_viscosity_candidate(&sol, &loss, &points);
    let fails = reports.iter().filter(|r| r.verdict == Verdict::Fail).count();
    assert_eq!(fails, 0);
}

#[test]
fn out_of_range_level_is_inconclusive() {
    let sol = constant_vol_solution();
    let loss = LossTransform::Exponential { lambda: 1.0 };
    let reports = check_viscosity_candidate(&sol, &loss, &[(0.5, 100.0, 1.5)]);
    assert_eq!(reports[0].verdict, Verdict::Inconclusive);
}

#[test]
fn uncertain_vol_candidate_passes_on_the_butterfly() {
    // Mixed-curvature candidate: the worst-case butterfly surface.
    let model = MarketModel {
        mu_lo: -0.1,
        mu_hi: 0.1,
        sigma_lo: 0.1,
        sigma_hi: 0.3,
        x0: 100.0,
        horizon_t: 1.0,
    };
    let grid = Grid {
        x_min: 20.0,
        x_max: 500.0,
        n_x: 150,
        n_t: 150,
        stretch: Stretch::LogUniform,
    };
    let sol = solve_bsb(
        &model,
        &Payoff::Butterfly {
            k1: 90.0,
            k2: 100.0,
            k3: 110.0,
        },
        &grid,
        Scheme::ImplicitPolicyIteration,
    )
    .unwrap();
    let points = sample_points(150, 15);
    let reports = check_viscosity_candidate(&sol, &LossTransform::Identity, &points);
    let fails = reports.iter().filter(|r| r.verdict == Verdict::Fail).count();
    assert_eq!(fails, 0, "{:?}", reports.iter().find(|r| r.verdict == Verdict::Fail));
}
