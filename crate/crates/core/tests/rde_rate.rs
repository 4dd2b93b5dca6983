mod common;

use common::{constant_rate, rl_model};
use parpath::integrate::VolFunction;
use parpath::mc::{black_scholes_call, implied_vol};
use parpath::rate::{minimize_rate, rate_gradient, rate_objective, smile_curve, RateProblem};
use parpath::rde::{Model, Sigma};

#[test]
fn geometric_brownian_motion_is_reproduced() {
    let model = Model {
        lift: rl_model(0.5, 1024, 0.0, 7),
        f: VolFunction::constant(1.0).unwrap(),
        sigma: Sigma::Linear { a: 0.0, b: 1.0 },
        s0: 1.0,
        tol: 1e-9,
    };
    let plan = model.lift.plan();
    let mut sq = 0.0;
    for p in 0..50 {
        let path = model.solve_path(p, &plan).unwrap();
        let x = model.lift.bundle(p).unwrap().x();
        let exact = (x[1024] - 0.5).exp();
        sq += ((path.s[1024] - exact) / exact).powi(2);
        assert!(path.warnings.iter().any(|w| w.contains("unbounded")));
    }
    assert!((sq / 50.0).sqrt() < 0.02);
}

#[test]
fn constant_volatility_rate_is_quadratic() {
    for rho in [-0.7, 0.0, 0.7] {
        let p = RateProblem::new(0.3, rho, 1.3, VolFunction::constant(0.4).unwrap(), 16).unwrap();
        for z in [-0.3, 0.1, 0.5] {
            let sol = minimize_rate(z, &p).unwrap();
            assert!((sol.value - constant_rate(z, 0.4, 1.3)).abs() < 1e-6);
        }
    }
}

#[test]
fn rate_gradient_matches_central_differences() {
    let f = VolFunction::exponential(0.2, vec![1.0, 0.0]).unwrap();
    let p = RateProblem::new(0.2, -0.5, 1.0, f, 12).unwrap();
    let g: Vec<f64> = (0..12).map(|k| 0.3 * (k as f64 * 0.7).sin()).collect();
    let grad = rate_gradient(&g, 0.2, &p).unwrap();
    for k in 0..12 {
        let h = 1e-6;
        let (mut up, mut dn) = (g.clone(), g.clone());
        up[k] += h;
        dn[k] -= h;
        let fd = (rate_objective(&up, 0.2, &p).unwrap() - rate_objective(&dn, 0.2, &p).unwrap()) / (2.0 * h);
        assert!((fd - grad[k]).abs() <= 1e-5 * (1e-3 + grad[k].abs()), "{k}: {fd} vs {}", grad[k]);
    }
}

#[test]
fn smile_is_blank_at_zero_and_flat_for_constant_f() {
    let p = RateProblem::new(0.3, 0.0, 1.0, VolFunction::constant(0.25).unwrap(), 8).unwrap();
    let rows = smile_curve(&p, &[-0.2, 0.0, 0.2]).unwrap();
    assert!(rows[1].sigma_asym.is_none());
    for r in [&rows[0], &rows[2]] {
        assert!((r.sigma_asym.unwrap() - 0.25).abs() < 1e-6);
    }
}

#[test]
fn implied_vol_inverts_black_scholes() {
    for (k, t, v) in [(0.8, 0.5, 0.15), (1.0, 1.0, 0.2), (1.3, 2.0, 0.4)] {
        let price = black_scholes_call(1.0, k, t, v);
        assert!((price - common::bs_call(1.0, k, t, v)).abs() < 1e-6);
        assert!((implied_vol(price, 1.0, k, t).unwrap() - v).abs() < 1e-7);
    }
    assert!(implied_vol(2.0, 1.0, 1.0, 1.0).is_err());
}
