//! Monte Carlo checks: moment scaling of the lift, agreement of the rough
//! integral with Itô sums, option prices with implied volatilities, the
//! short-time tail slope against the rate function, and the self-similarity
//! of the Riemann–Liouville driver.
//!
//! Paths are keyed by index and reduced in index order, so every report is
//! independent of the thread count.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::index::MultiIndex;
use crate::integrate::{higher_order_sum, integrate, VolFunction};
use crate::lift::{build_lift_with, KernelSpec, LiftModel, VolterraPlan};
use crate::rate::{minimize_rate, RateProblem};
use crate::rde::{solve_rde, Model, RdeProblem, Sigma};

/// Below this many paths the moment regression is flagged as noisy.
pub const MIN_MOMENT_PATHS: usize = 1000;
/// Exceedances required at every maturity of the tail check.
pub const MIN_EXCEEDANCES: usize = 50;

/// One pass/fail line of a Monte Carlo report.
#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub statistic: f64,
    pub expected: f64,
    pub stderr: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Collected checks of one run.
#[derive(Clone, Debug, Serialize)]
pub struct McReport {
    pub seed: u64,
    pub n_paths: usize,
    pub checks: Vec<CheckResult>,
    pub warnings: Vec<String>,
}

/// Sample mean and standard error.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Ordinary least squares `(slope, intercept)`.
fn regression(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn par_paths<T, F>(n_paths: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..n_paths as u64).into_par_iter().map(f).collect()
}

/// `E|X^(i)_{0t}|²` over dyadic `t` and the fitted log-log slope.
#[derive(Clone, Debug, Serialize)]
pub struct MomentScaling {
    pub index: Vec<u32>,
    pub times: Vec<f64>,
    pub second_moments: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub slope: f64,
    /// `2|i|ζ + 1`.
    pub expected: f64,
    pub warning: Option<String>,
}

/// Moment scaling of `X^(i)_{0t}` at `t = T/2^j`, `j < levels`.
pub fn moment_scaling_check(model: &LiftModel, i: &MultiIndex, n_paths: usize, levels: usize) -> Result<MomentScaling> {
    let pos = model.config.position(i)?;
    let n = model.grid.steps();
    if levels < 2 || levels > 63 || n % (1 << (levels - 1)) != 0 {
        return Err(Error::Config("moment scaling needs a dyadic grid with at least two levels".into()));
    }
    let nodes: Vec<usize> = (0..levels).map(|j| n >> j).collect();
    let plan = model.plan();
    let samples: Vec<Vec<f64>> = par_paths(n_paths, |p| {
        let (_, prp) = model.lift(p, &plan)?;
        Ok(nodes.iter().map(|&q| prp.level1_at(q)[pos].powi(2)).collect())
    })?;
    let mut second_moments = Vec::new();
    let mut stderrs = Vec::new();
    for j in 0..nodes.len() {
        let col: Vec<f64> = samples.iter().map(|s| s[j]).collect();
        let (m, se) = mean_stderr(&col);
        second_moments.push(m);
        stderrs.push(se);
    }
    let times: Vec<f64> = nodes.iter().map(|&q| model.grid.node(q)).collect();
    let lx: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let ly: Vec<f64> = second_moments.iter().map(|m| m.ln()).collect();
    let (slope, _) = regression(&lx, &ly);
    let expected = 2.0 * f64::from(i.total()) * model.spec.zeta + 1.0;
    let warning = (n_paths < MIN_MOMENT_PATHS)
        .then(|| format!("only {n_paths} paths; moment regression is noisy below {MIN_MOMENT_PATHS}"));
    Ok(MomentScaling {
        index: i.entries().to_vec(),
        times,
        second_moments,
        stderrs,
        slope,
        expected,
        warning,
    })
}

/// One grid level of the Itô consistency study.
#[derive(Clone, Debug, Serialize)]
pub struct ItoLevel {
    pub steps: usize,
    /// RMS of `Y^(1)_{0T}` on this grid minus the reference Itô sum.
    pub rms: f64,
    /// RMS of the `i ≠ 0` part of the compensated sum on the reference lift
    /// over the partition of this level.
    pub higher_order_rms: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ItoConsistency {
    pub reference_steps: usize,
    pub levels: Vec<ItoLevel>,
    pub decreasing: bool,
}

/// Compares the rough integral on coarsened lifts with the left-point Itô
/// sum `Σ f(x̂_r) ΔX_r` on the model's (fine) reference grid, driven by the
/// same increments.
pub fn ito_consistency_check(
    model: &LiftModel,
    f: &VolFunction,
    levels: &[usize],
    n_paths: usize,
    tol: f64,
) -> Result<ItoConsistency> {
    let reference = model.grid.steps();
    if levels.iter().any(|&n| n == 0 || reference % n != 0 || n < 2) {
        return Err(Error::Config(format!("levels {levels:?} must divide the reference grid of {reference} steps")));
    }
    let fine_plan = model.plan();
    let plans: Vec<VolterraPlan> = levels
        .iter()
        .map(|&n| Ok(VolterraPlan::new(&model.spec, &Grid::new(model.grid.horizon(), n)?)))
        .collect::<Result<_>>()?;
    let rows: Vec<Vec<(f64, f64)>> = par_paths(n_paths, |p| {
        let (bundle, fine) = model.lift(p, &fine_plan)?;
        let dx = bundle.dx();
        let ito: f64 = (0..reference).map(|q| f.eval(fine.xhat_at(q)) * dx[q]).sum();
        levels
            .iter()
            .zip(&plans)
            .map(|(&n, plan)| {
                let coarse = bundle.coarsen(reference / n)?;
                let prp = build_lift_with(&coarse, &model.spec, &model.config, plan)?;
                let (y, _) = integrate(&prp, f, tol)?;
                let higher = higher_order_sum(&fine, f, reference / n)?[0];
                Ok((y.y1_at(n)[0] - ito, higher))
            })
            .collect()
    })?;
    let rms = |k: usize, pick: fn(&(f64, f64)) -> f64| {
        (rows.iter().map(|r| pick(&r[k]).powi(2)).sum::<f64>() / rows.len() as f64).sqrt()
    };
    let levels: Vec<ItoLevel> = levels
        .iter()
        .enumerate()
        .map(|(k, &steps)| ItoLevel { steps, rms: rms(k, |v| v.0), higher_order_rms: rms(k, |v| v.1) })
        .collect();
    let decreasing = levels.windows(2).all(|w| w[1].rms <= w[0].rms);
    Ok(ItoConsistency { reference_steps: reference, levels, decreasing })
}

/// Call price `C(S, K, T, σ)` with zero rates.
pub fn black_scholes_call(spot: f64, strike: f64, maturity: f64, vol: f64) -> f64 {
    let intrinsic = (spot - strike).max(0.0);
    if vol <= 0.0 || maturity <= 0.0 {
        return intrinsic;
    }
    let n = Normal::standard();
    let sd = vol * maturity.sqrt();
    let d1 = ((spot / strike).ln() + 0.5 * sd * sd) / sd;
    spot * n.cdf(d1) - strike * n.cdf(d1 - sd)
}

/// `∂C/∂σ`.
pub fn black_scholes_vega(spot: f64, strike: f64, maturity: f64, vol: f64) -> f64 {
    let sd = vol * maturity.sqrt();
    let d1 = ((spot / strike).ln() + 0.5 * sd * sd) / sd;
    let pdf = (-0.5 * d1 * d1).exp() / (2.0 * std::f64::consts::PI).sqrt();
    spot * pdf * maturity.sqrt()
}

/// Implied volatility by bisection on `[1e−4, 5]` to `1e−8`.
pub fn implied_vol(price: f64, spot: f64, strike: f64, maturity: f64) -> Result<f64> {
    let (mut lo, mut hi) = (1e-4, 5.0);
    let (p_lo, p_hi) = (black_scholes_call(spot, strike, maturity, lo), black_scholes_call(spot, strike, maturity, hi));
    if !(price.is_finite() && price > p_lo && price < p_hi) {
        return Err(Error::Numerical(format!(
            "price {price} outside the invertible range ({p_lo}, {p_hi}) for K = {strike}, T = {maturity}"
        )));
    }
    while hi - lo > 1e-8 {
        let mid = 0.5 * (lo + hi);
        if black_scholes_call(spot, strike, maturity, mid) < price {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Clone, Debug, Serialize)]
pub struct PriceRow {
    pub strike: f64,
    pub maturity: f64,
    pub price: f64,
    pub stderr: f64,
    pub implied_vol: Option<f64>,
    /// Price standard error mapped through the vega.
    pub implied_vol_stderr: Option<f64>,
    pub error: Option<String>,
}

/// Terminal prices of the rough solution for one maturity.
fn terminal_prices(model: &Model, maturity: f64, n_paths: usize) -> Result<Vec<f64>> {
    let grid = Grid::new(maturity, model.lift.grid.steps())?;
    let lift = LiftModel::new(
        model.lift.spec.clone(),
        grid,
        model.lift.rho,
        model.lift.seed,
        model.lift.config.clone().with_horizon(maturity),
    )?;
    let m = Model { lift, ..model.clone() };
    let plan = m.lift.plan();
    par_paths(n_paths, |p| {
        let path = m.solve_path(p, &plan)?;
        Ok(*path.s.last().expect("nonempty"))
    })
}

/// Monte Carlo call prices with implied volatilities. Cells whose price
/// cannot be inverted carry an error and the run continues.
pub fn price_and_implied_vol(model: &Model, strikes: &[f64], maturities: &[f64], n_paths: usize) -> Result<Vec<PriceRow>> {
    if strikes.iter().chain(maturities).any(|v| !(*v > 0.0)) {
        return Err(Error::Config("strikes and maturities must be positive".into()));
    }
    let spot = model.s0;
    let mut rows = Vec::new();
    for &t in maturities {
        let terminal = terminal_prices(model, t, n_paths)?;
        for &k in strikes {
            let payoff: Vec<f64> = terminal.iter().map(|s| (s - k).max(0.0)).collect();
            let (price, stderr) = mean_stderr(&payoff);
            let (implied_vol, implied_vol_stderr, error) = match implied_vol(price, spot, k, t) {
                Ok(v) => (Some(v), Some(stderr / black_scholes_vega(spot, k, t, v)), None),
                Err(e) => (None, None, Some(e.to_string())),
            };
            rows.push(PriceRow { strike: k, maturity: t, price, stderr, implied_vol, implied_vol_stderr, error });
        }
    }
    Ok(rows)
}

/// Setup of the short-time tail study of `t^{H−1/2} S̄_t`.
#[derive(Clone, Debug)]
pub struct TailSetup {
    pub spec: KernelSpec,
    pub config: crate::index::IndexConfig,
    pub rho: f64,
    pub seed: u64,
    /// Steps per simulated horizon.
    pub steps: usize,
    pub f: VolFunction,
    pub sigma: Sigma,
    pub s0: f64,
    pub tol: f64,
    /// Cells of the rate problem.
    pub rate_cells: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct TailRow {
    pub t: f64,
    /// `t^{−2H}`.
    pub u: f64,
    pub exceedances: usize,
    pub probability: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TailReport {
    pub z: f64,
    pub rows: Vec<TailRow>,
    /// Slope of `−log P − ½ log u` against `u`.
    pub slope: f64,
    /// `J̃#(z)` from the rate module.
    pub rate: f64,
    pub relative_error: f64,
    pub skipped: bool,
}

/// Fits the decay rate of `P(t^{H−1/2} S̄_t ≥ z)` in `u = t^{−2H}` and sets
/// it beside `J̃#(z)`. The `½ log u` term removes the Gaussian prefactor.
pub fn ldp_tail_check(setup: &TailSetup, z: f64, t_grid: &[f64], n_paths: usize) -> Result<TailReport> {
    let hurst = setup
        .spec
        .hurst()
        .ok_or_else(|| Error::Config("the tail check needs a Riemann-Liouville kernel".into()))?;
    if z == 0.0 {
        return Ok(TailReport { z, rows: Vec::new(), slope: 0.0, rate: 0.0, relative_error: 0.0, skipped: true });
    }
    if t_grid.len() < 2 || t_grid.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::Config("the tail check needs at least two positive maturities".into()));
    }
    let sigma0 = setup.sigma.eval(setup.s0);
    let problem = RateProblem::new(hurst, setup.rho, sigma0, setup.f.clone(), setup.rate_cells)?.with_seed(setup.seed);
    let rate = minimize_rate(z, &problem)?.value;

    let mut rows = Vec::new();
    for &t in t_grid {
        let grid = Grid::new(t, setup.steps)?;
        let lift = LiftModel::new(setup.spec.clone(), grid, setup.rho, setup.seed, setup.config.clone())?;
        let plan = lift.plan();
        let scale = t.powf(hurst - 0.5);
        let hits: Vec<bool> = par_paths(n_paths, |p| {
            let (_, prp) = lift.lift(p, &plan)?;
            let (driver, _) = integrate(&prp, &setup.f, setup.tol)?;
            let sol = solve_rde(&RdeProblem { sigma: setup.sigma.clone(), s0: setup.s0, driver })?;
            let s_bar = *sol.s_bar.last().expect("nonempty");
            Ok(if z > 0.0 { scale * s_bar >= z } else { scale * s_bar <= z })
        })?;
        let exceedances = hits.iter().filter(|&&h| h).count();
        if exceedances < MIN_EXCEEDANCES {
            return Err(Error::InsufficientData(format!(
                "{exceedances} exceedances of z = {z} at t = {t}; at least {MIN_EXCEEDANCES} are needed"
            )));
        }
        rows.push(TailRow { t, u: t.powf(-2.0 * hurst), exceedances, probability: exceedances as f64 / n_paths as f64 });
    }
    let u: Vec<f64> = rows.iter().map(|r| r.u).collect();
    let y: Vec<f64> = rows.iter().map(|r| -r.probability.ln() - 0.5 * r.u.ln()).collect();
    let (slope, _) = regression(&u, &y);
    Ok(TailReport { z, rows, slope, rate, relative_error: (slope - rate).abs() / rate, skipped: false })
}

/// Moments `k = 1..4` of `X̂¹_{εT}` against `ε^{kH}` times those of `X̂¹_T`.
#[derive(Clone, Debug, Serialize)]
pub struct ScalingRow {
    pub epsilon: f64,
    pub moment: u32,
    /// Mean of `(X̂¹_{εT})^k − ε^{kH}(X̂¹_T)^k`.
    pub difference: f64,
    pub stderr: f64,
    pub pass: bool,
}

/// Self-similarity `X̂¹_{εt} =ᵈ ε^H X̂¹_t` checked on the first four moments
/// within three standard errors.
pub fn scaling_check(model: &LiftModel, epsilons: &[f64], n_paths: usize) -> Result<Vec<ScalingRow>> {
    let hurst = model.spec.hurst().ok_or_else(|| Error::Config("scaling needs a Riemann-Liouville kernel".into()))?;
    let n = model.grid.steps();
    let nodes: Vec<usize> = epsilons
        .iter()
        .map(|&e| {
            let q = (e * n as f64).round() as usize;
            if q == 0 || (q as f64 - e * n as f64).abs() > 1e-9 {
                Err(Error::Config(format!("epsilon {e} does not land on a grid node")))
            } else {
                Ok(q)
            }
        })
        .collect::<Result<_>>()?;
    let plan = model.plan();
    let values: Vec<Vec<f64>> = par_paths(n_paths, |p| {
        let bundle = model.bundle(p)?;
        let x = plan.apply(&bundle.dw, Some(&bundle.aux));
        Ok(std::iter::once(x[n]).chain(nodes.iter().map(|&q| x[q])).collect())
    })?;
    let mut rows = Vec::new();
    for (j, &e) in epsilons.iter().enumerate() {
        for k in 1..=4 {
            let w = e.powf(f64::from(k) * hurst);
            let diffs: Vec<f64> = values.iter().map(|v| v[j + 1].powi(k as i32) - w * v[0].powi(k as i32)).collect();
            let (difference, stderr) = mean_stderr(&diffs);
            rows.push(ScalingRow { epsilon: e, moment: k, difference, stderr, pass: difference.abs() <= 3.0 * stderr });
        }
    }
    Ok(rows)
}

/// CSV of the price table.
pub fn write_price_csv<W: Write>(mut w: W, rows: &[PriceRow]) -> Result<()> {
    writeln!(w, "strike,maturity,price,stderr,implied_vol,implied_vol_stderr,error")?;
    for r in rows {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let err = r.error.as_deref().unwrap_or("").replace(',', ";");
        writeln!(
            w,
            "{},{},{},{},{},{},{err}",
            r.strike,
            r.maturity,
            r.price,
            r.stderr,
            opt(r.implied_vol),
            opt(r.implied_vol_stderr)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn implied_vol_inverts_closed_form() {
        let p = black_scholes_call(1.0, 1.0, 1.0, 0.2);
        assert!((p - 0.079_655_674_554).abs() < 1e-9);
        assert!((implied_vol(p, 1.0, 1.0, 1.0).unwrap() - 0.2).abs() < 1e-7);
        // A four-digit price quote moves the vol by its rounding over the vega.
        let rounded = implied_vol(0.0797, 1.0, 1.0, 1.0).unwrap();
        assert!((rounded - 0.2).abs() < 0.00005 / black_scholes_vega(1.0, 1.0, 1.0, 0.2) + 1e-7);
        assert!(implied_vol(0.0, 1.0, 2.0, 1.0).is_err());
        assert!(implied_vol(1.5, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn regression_recovers_line() {
        let x = [1.0, 2.0, 3.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v - 1.0).collect();
        let (s, c) = regression(&x, &y);
        assert!((s - 2.5).abs() < 1e-14 && (c + 1.0).abs() < 1e-14);
    }
}
