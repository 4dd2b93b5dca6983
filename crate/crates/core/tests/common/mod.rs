//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use parpath::index::IndexConfig;
use parpath::lift::{KernelSpec, LiftModel};
use parpath::{Grid, MultiIndex};

pub fn rl_model(hurst: f64, steps: usize, rho: f64, seed: u64) -> LiftModel {
    let spec = KernelSpec::riemann_liouville(hurst, 0.01).unwrap();
    let (a, b) = LiftModel::default_exponents(&spec);
    let cfg = IndexConfig::new(a, b, 2).unwrap();
    LiftModel::new(spec, Grid::new(1.0, steps).unwrap(), rho, seed, cfg).unwrap()
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

/// `(x̂_r − x̂_s)^i / i!` from raw node values.
fn weight(xhat: &[Vec<f64>], i: &MultiIndex, s: usize, r: usize) -> f64 {
    i.entries()
        .iter()
        .enumerate()
        .map(|(l, &p)| (xhat[r][l] - xhat[s][l]).powi(p as i32) / factorial(p))
        .product()
}

/// Direct left-point sum `Σ_{s≤r<t} (x̂_r − x̂_s)^i / i! ΔX_r`.
pub fn brute_level1(xhat: &[Vec<f64>], dx: &[f64], i: &MultiIndex, s: usize, t: usize) -> f64 {
    (s..t).map(|r| weight(xhat, i, s, r) * dx[r]).sum()
}

/// Direct double sum of the cellwise model: outer weight `k`, inner running
/// level-one sum of `j`, plus the per-cell area term.
pub fn brute_level2(
    xhat: &[Vec<f64>],
    dx: &[f64],
    area: &[f64],
    j: &MultiIndex,
    k: &MultiIndex,
    s: usize,
    t: usize,
) -> f64 {
    let mut inner = 0.0;
    let mut total = 0.0;
    for r in s..t {
        let wj = weight(xhat, j, s, r);
        let wk = weight(xhat, k, s, r);
        total += wk * inner * dx[r] + wj * wk * area[r];
        inner += wj * dx[r];
    }
    total
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// `z² / (2σ₀²v₀²)`.
pub fn constant_rate(z: f64, v0: f64, sigma0: f64) -> f64 {
    z * z / (2.0 * sigma0 * sigma0 * v0 * v0)
}

/// Black–Scholes call with zero rates via the error function.
pub fn bs_call(spot: f64, strike: f64, maturity: f64, vol: f64) -> f64 {
    let sd = vol * maturity.sqrt();
    let d1 = ((spot / strike).ln() + 0.5 * sd * sd) / sd;
    spot * normal_cdf(d1) - strike * normal_cdf(d1 - sd)
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Complementary error function (Numerical Recipes Chebyshev fit, 1.2e−7).
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let r = t * (-z * z - 1.26551223
        + t * (1.00002368
            + t * (0.37409196
                + t * (0.09678418
                    + t * (-0.18628806
                        + t * (0.27886807 + t * (-1.13520398 + t * (1.48851587 + t * (-0.82215223 + t * 0.17087277)))))))))
        .exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

pub const SMOOTH_ZETA: f64 = 0.29;

/// Smooth `(α, β)` path with `x̂ = (sin t, t^ζ)` and `X_t = t`.
pub fn smooth_path(steps: usize) -> parpath::PartialRoughPath {
    let cfg = IndexConfig::new(0.45, SMOOTH_ZETA - 0.01, 2).unwrap();
    parpath::PartialRoughPath::from_smooth(
        cfg,
        Grid::new(1.0, steps).unwrap(),
        |t| vec![t.sin(), t.powf(SMOOTH_ZETA)],
        |_| vec![1.0],
        8,
    )
    .unwrap()
}

/// `∫₀¹ exp(sin r + r^ζ) dr`.
pub fn smooth_oracle() -> f64 {
    adaptive_simpson(&|r: f64| (r.sin() + r.powf(SMOOTH_ZETA)).exp(), 0.0, 1.0, 1e-13)
}

/// Direct sums for every `t ≥ s` at once: `(level1[t][i], level2[t][jk])`
/// in the order of `cfg.level1()` and `cfg.level2()`.
pub fn brute_tables(
    cfg: &IndexConfig,
    xhat: &[Vec<f64>],
    dx: &[f64],
    area: &[f64],
    s: usize,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let l1 = cfg.level1();
    let l2 = cfg.level2();
    let mut run1 = vec![0.0; l1.len()];
    let mut run2 = vec![0.0; l2.len()];
    let mut out1 = vec![run1.clone()];
    let mut out2 = vec![run2.clone()];
    for r in s..dx.len() {
        let w: Vec<f64> = l1.iter().map(|i| weight(xhat, i, s, r)).collect();
        for (pos, (j, k)) in l2.iter().enumerate() {
            let pj = l1.iter().position(|x| x == j).unwrap();
            let pk = l1.iter().position(|x| x == k).unwrap();
            run2[pos] += w[pk] * run1[pj] * dx[r] + w[pj] * w[pk] * area[r];
        }
        for p in 0..l1.len() {
            run1[p] += w[p] * dx[r];
        }
        out1.push(run1.clone());
        out2.push(run2.clone());
    }
    (out1, out2)
}
