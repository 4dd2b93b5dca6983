//! Short-maturity rate function of the rough volatility model through its
//! reduced variational problem over piecewise constant controls, and the
//! induced implied-volatility asymptotics.

use std::io::Write;

use argmin::core::{CostFunction, Executor, Gradient, State};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::BFGS;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::integrate::VolFunction;

/// Floor below which `∫ f(K_H g)²` counts as vanishing.
pub const DENOMINATOR_FLOOR: f64 = 1e-12;

/// Reduced problem `inf_g F(g)` for one Riemann–Liouville kernel.
#[derive(Clone, Debug)]
pub struct RateProblem {
    pub hurst: f64,
    pub rho: f64,
    /// `σ(S₀)`.
    pub sigma0: f64,
    /// Evaluated at `(x, 0)`.
    pub f: VolFunction,
    /// Number of cells of `[0, 1]`.
    pub cells: usize,
    pub starts: usize,
    pub seed: u64,
}

impl RateProblem {
    pub fn new(hurst: f64, rho: f64, sigma0: f64, f: VolFunction, cells: usize) -> Result<Self> {
        if !(hurst > 0.0 && hurst <= 0.5) {
            return Err(Error::Config(format!("rate.H = {hurst} must lie in (0, 1/2]")));
        }
        if !(rho.abs() < 1.0) {
            return Err(Error::Config(format!("rate.rho = {rho} must satisfy |rho| < 1")));
        }
        if !(sigma0 > 0.0 && sigma0.is_finite()) {
            return Err(Error::Config(format!("rate.sigma0 = {sigma0} must be positive")));
        }
        if cells < 2 {
            return Err(Error::Config(format!("rate.K = {cells} must be at least 2")));
        }
        Ok(Self { hurst, rho, sigma0, f, cells, starts: 8, seed: 0 })
    }

    pub fn with_starts(mut self, starts: usize) -> Self {
        self.starts = starts.max(1);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.cells as f64
    }
}

/// `A[k][j] = ∫_{cell j ∩ [0, t_k]} κ_H(t_k − r) dr` at the midpoints
/// `t_k = (k + 1/2)/K`, row-major and lower triangular.
pub fn kh_matrix(hurst: f64, cells: usize) -> Vec<f64> {
    let dt = 1.0 / cells as f64;
    let p = hurst + 0.5;
    let norm = gamma(p + 1.0);
    let mut a = vec![0.0; cells * cells];
    for k in 0..cells {
        let t = (k as f64 + 0.5) * dt;
        for j in 0..=k {
            let lo = j as f64 * dt;
            let hi = ((j + 1) as f64 * dt).min(t);
            a[k * cells + j] = ((t - lo).powf(p) - (t - hi).powf(p)) / norm;
        }
    }
    a
}

/// `K_H g` at the cell midpoints for piecewise constant `g`.
pub fn kh_convolve(g: &[f64], hurst: f64) -> Vec<f64> {
    let k = g.len();
    let a = kh_matrix(hurst, k);
    (0..k).map(|r| (0..=r).map(|j| a[r * k + j] * g[j]).sum()).collect()
}

/// Objective with its precomputed kernel matrix.
struct Objective<'a> {
    problem: &'a RateProblem,
    a: Vec<f64>,
    z: f64,
}

/// Intermediate quantities of one evaluation.
struct Eval {
    value: f64,
    u: Vec<f64>,
    fu: Vec<f64>,
    p: f64,
    q: f64,
}

impl<'a> Objective<'a> {
    fn new(problem: &'a RateProblem, z: f64) -> Self {
        Self { problem, a: kh_matrix(problem.hurst, problem.cells), z }
    }

    fn f_at(&self, x: f64) -> f64 {
        self.problem.f.eval(&[x, 0.0])
    }

    fn df_at(&self, x: f64) -> f64 {
        self.problem.f.partial(&crate::index::MultiIndex::unit(2, 0), &[x, 0.0])
    }

    fn evaluate(&self, g: &[f64]) -> Result<Eval> {
        let k = self.problem.cells;
        let dt = self.problem.dt();
        let u: Vec<f64> = (0..k).map(|r| (0..=r).map(|j| self.a[r * k + j] * g[j]).sum()).collect();
        let fu: Vec<f64> = u.iter().map(|&x| self.f_at(x)).collect();
        let p: f64 = fu.iter().zip(g).map(|(f, g)| f * g).sum::<f64>() * dt;
        let q: f64 = fu.iter().map(|f| f * f).sum::<f64>() * dt;
        if !(q > DENOMINATOR_FLOOR) {
            return Err(Error::Degenerate("f vanishes along K_H g".into()));
        }
        let (rho, s0) = (self.problem.rho, self.problem.sigma0);
        let energy = 0.5 * g.iter().map(|v| v * v).sum::<f64>() * dt;
        let num = self.z - rho * s0 * p;
        let value = energy + num * num / (2.0 * (1.0 - rho * rho) * s0 * s0 * q);
        Ok(Eval { value, u, fu, p, q })
    }

    /// `∂F/∂g_m`.
    fn gradient_g(&self, g: &[f64], ev: &Eval) -> Vec<f64> {
        let k = self.problem.cells;
        let dt = self.problem.dt();
        let (rho, s0) = (self.problem.rho, self.problem.sigma0);
        let num = self.z - rho * s0 * ev.p;
        let den = 2.0 * (1.0 - rho * rho) * s0 * s0 * ev.q;
        let dfu: Vec<f64> = ev.u.iter().map(|&x| self.df_at(x)).collect();
        // Adjoint weights through u = A g.
        let wp: Vec<f64> = (0..k).map(|r| dfu[r] * g[r]).collect();
        let wq: Vec<f64> = (0..k).map(|r| 2.0 * ev.fu[r] * dfu[r]).collect();
        (0..k)
            .map(|m| {
                let (mut sp, mut sq) = (0.0, 0.0);
                for r in m..k {
                    let a = self.a[r * k + m];
                    sp += wp[r] * a;
                    sq += wq[r] * a;
                }
                let dp = (ev.fu[m] + sp) * dt;
                let dq = sq * dt;
                g[m] * dt + 2.0 * num * (-rho * s0 * dp) / den - num * num * (2.0 * (1.0 - rho * rho) * s0 * s0 * dq) / (den * den)
            })
            .collect()
    }
}

/// `F(g)` for controls `g` on `problem.cells` cells.
pub fn rate_objective(g: &[f64], z: f64, problem: &RateProblem) -> Result<f64> {
    check_len(g, problem)?;
    Ok(Objective::new(problem, z).evaluate(g)?.value)
}

/// `∇_g F(g)`.
pub fn rate_gradient(g: &[f64], z: f64, problem: &RateProblem) -> Result<Vec<f64>> {
    check_len(g, problem)?;
    let obj = Objective::new(problem, z);
    let ev = obj.evaluate(g)?;
    Ok(obj.gradient_g(g, &ev))
}

fn check_len(g: &[f64], problem: &RateProblem) -> Result<()> {
    if g.len() != problem.cells {
        return Err(Error::Domain(format!("g has {} cells, problem has {}", g.len(), problem.cells)));
    }
    Ok(())
}

/// The optimizer works in `h = g √Δ`, for which the energy is `|h|²/2`.
struct Scaled<'a> {
    obj: &'a Objective<'a>,
    sqrt_dt: f64,
}

impl Scaled<'_> {
    fn to_g(&self, h: &[f64]) -> Vec<f64> {
        h.iter().map(|v| v / self.sqrt_dt).collect()
    }
}

impl CostFunction for Scaled<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, h: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        let v = self.obj.evaluate(&self.to_g(h)).map(|e| e.value).unwrap_or(f64::INFINITY);
        Ok(if v.is_finite() { v } else { f64::INFINITY })
    }
}

impl Gradient for Scaled<'_> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, h: &Self::Param) -> std::result::Result<Vec<f64>, argmin::core::Error> {
        let g = self.to_g(h);
        let ev = self.obj.evaluate(&g).map_err(|e| argmin::core::Error::msg(e.to_string()))?;
        Ok(self.obj.gradient_g(&g, &ev).into_iter().map(|v| v / self.sqrt_dt).collect())
    }
}

/// Optimum of the reduced problem at one `z`.
#[derive(Clone, Debug, Serialize)]
pub struct RateSolution {
    pub z: f64,
    /// `J̃#(z)`.
    pub value: f64,
    /// Minimizing control `g` per cell.
    pub g: Vec<f64>,
    pub iterations: u64,
    /// Starts that reached the first-order tolerance.
    pub restarts: usize,
    /// `|∇F|` in the `L²`-normalized variable `h = g √Δ`.
    pub grad_norm: f64,
    /// The multiplier `c` of `h₂ = c f(K_H g, 0)`.
    pub multiplier: f64,
    /// Relative residual of the first-order condition of the joint
    /// `(g, h₂)` problem.
    pub optimality_residual: f64,
}

/// First-order tolerance `|∇F| ≤ 1e−8 (1 + |F|)`.
fn tolerance(value: f64) -> f64 {
    1e-8 * (1.0 + value.abs())
}

/// Closed form `z² / (2σ₀²v₀²)` of the rate for constant `f ≡ v₀`, attained
/// at `g ≡ ρz/(σ₀v₀)`.
pub fn constant_rate(z: f64, v0: f64, sigma0: f64) -> f64 {
    z * z / (2.0 * sigma0 * sigma0 * v0 * v0)
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Multiplier `c = (z − ρσ₀P)/(√(1−ρ²)σ₀Q)` and the relative residual of
/// `g = μ ∂_g C(g, h₂)` with `h₂ = c f(K_H g)` and `μ = c/(√(1−ρ²)σ₀)`,
/// where `C(g, h₂) = ρσ₀⟨f(K_H g), g⟩ + √(1−ρ²)σ₀⟨f(K_H g), h₂⟩`.
fn optimality(obj: &Objective<'_>, g: &[f64], ev: &Eval) -> (f64, f64) {
    let pr = obj.problem;
    let k = pr.cells;
    let (rho, s0) = (pr.rho, pr.sigma0);
    let comp = (1.0 - rho * rho).sqrt() * s0;
    let c = (obj.z - rho * s0 * ev.p) / (comp * ev.q);
    let mu = c / comp;
    let h2: Vec<f64> = ev.fu.iter().map(|f| c * f).collect();
    let dfu: Vec<f64> = ev.u.iter().map(|&x| obj.df_at(x)).collect();
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for m in 0..k {
        let mut chain = 0.0;
        for r in m..k {
            chain += dfu[r] * obj.a[r * k + m] * (rho * s0 * g[r] + comp * h2[r]);
        }
        let dc = rho * s0 * ev.fu[m] + chain;
        let lhs = g[m];
        let rhs = mu * dc;
        worst = worst.max((lhs - rhs).abs());
        scale = scale.max(lhs.abs()).max(rhs.abs());
    }
    (c, worst / (1.0 + scale))
}

/// `J̃#(z)` by multi-start BFGS.
pub fn minimize_rate(z: f64, problem: &RateProblem) -> Result<RateSolution> {
    if !z.is_finite() {
        return Err(Error::Domain(format!("z = {z} is not finite")));
    }
    let obj = Objective::new(problem, z);
    let k = problem.cells;
    obj.evaluate(&vec![0.0; k])?;
    let sqrt_dt = problem.dt().sqrt();
    let f0 = obj.f_at(0.0).abs().max(1e-3);
    let scale = (z.abs() / (problem.sigma0 * f0)).max(0.05);

    let mut rng = ChaCha8Rng::seed_from_u64(problem.seed);
    rng.set_stream(z.to_bits());
    let starts: Vec<Vec<f64>> = (0..problem.starts)
        .map(|s| {
            if s == 0 {
                vec![0.0; k]
            } else {
                (0..k)
                    .map(|_| {
                        let n: f64 = StandardNormal.sample(&mut rng);
                        scale * n
                    })
                    .collect()
            }
        })
        .collect();

    let mut best: Option<(f64, Vec<f64>, f64)> = None;
    let mut iterations = 0;
    let mut converged = 0;
    let mut failures = Vec::new();
    for g0 in starts {
        let scaled = Scaled { obj: &obj, sqrt_dt };
        let h0: Vec<f64> = g0.iter().map(|v| v * sqrt_dt).collect();
        let run = (|| -> std::result::Result<_, argmin::core::Error> {
            let solver = BFGS::new(MoreThuenteLineSearch::new())
                .with_tolerance_grad(1e-11)?
                .with_tolerance_cost(0.0)?;
            let eye: Vec<Vec<f64>> =
                (0..k).map(|r| (0..k).map(|c| if r == c { 1.0 } else { 0.0 }).collect()).collect();
            Executor::new(scaled, solver).configure(|s| s.param(h0).inv_hessian(eye).max_iters(2000)).run()
        })();
        let res = match run {
            Ok(r) => r,
            Err(e) => {
                failures.push(e.to_string());
                continue;
            }
        };
        let state = res.state();
        iterations += state.get_iter();
        let Some(h) = state.get_best_param() else { continue };
        let g: Vec<f64> = h.iter().map(|v| v / sqrt_dt).collect();
        let Ok(ev) = obj.evaluate(&g) else { continue };
        let grad = l2_norm(&obj.gradient_g(&g, &ev)) / sqrt_dt;
        if grad <= tolerance(ev.value) {
            converged += 1;
        }
        let better = match &best {
            None => true,
            Some((v, _, gn)) => {
                let ok_new = grad <= tolerance(ev.value);
                let ok_old = *gn <= tolerance(*v);
                (ok_new && !ok_old) || (ok_new == ok_old && ev.value < *v)
            }
        };
        if better {
            best = Some((ev.value, g, grad));
        }
    }
    let (value, g, grad_norm) =
        best.ok_or_else(|| Error::Optimizer(format!("every start failed: {}", failures.join("; "))))?;
    if grad_norm > tolerance(value) {
        return Err(Error::Optimizer(format!(
            "no start reached the first-order tolerance at z = {z}: |grad| = {grad_norm:e}, F = {value}"
        )));
    }
    let ev = obj.evaluate(&g)?;
    let (multiplier, optimality_residual) = optimality(&obj, &g, &ev);
    Ok(RateSolution { z, value, g, iterations, restarts: converged, grad_norm, multiplier, optimality_residual })
}

/// One row of the smile table.
#[derive(Clone, Debug, Serialize)]
pub struct SmileRow {
    pub solution: RateSolution,
    /// `|z| / √(2 J̃#(z))`; omitted where the rate vanishes.
    pub sigma_asym: Option<f64>,
}

/// `z_steps` equally spaced values on `[z_min, z_max]`.
pub fn z_grid(z_min: f64, z_max: f64, steps: usize) -> Result<Vec<f64>> {
    if steps == 0 || !(z_min <= z_max) {
        return Err(Error::Config("rate z-grid needs z_min <= z_max and z_steps >= 1".into()));
    }
    if steps == 1 || z_min == z_max {
        return Ok(vec![z_min; steps]);
    }
    let last = (steps - 1) as f64;
    let width = z_max - z_min;
    let mut zs: Vec<f64> = (0..steps).map(|i| (z_min + width * (i as f64 / last)).min(z_max)).collect();
    zs[steps - 1] = z_max;
    Ok(zs)
}

/// Rate and asymptotic implied volatility over `zs`, solved in parallel.
pub fn smile_curve(problem: &RateProblem, zs: &[f64]) -> Result<Vec<SmileRow>> {
    zs.par_iter()
        .map(|&z| {
            let solution = minimize_rate(z, problem)?;
            let sigma_asym = (solution.value > 0.0).then(|| z.abs() / (2.0 * solution.value).sqrt());
            Ok(SmileRow { solution, sigma_asym })
        })
        .collect()
}

/// CSV `(z, rate, sigma_asym, iterations, restarts, grad_norm)`.
pub fn write_smile_csv<W: Write>(mut w: W, rows: &[SmileRow]) -> Result<()> {
    writeln!(w, "z,rate,sigma_asym,iterations,restarts,grad_norm")?;
    for r in rows {
        let s = &r.solution;
        let sig = r.sigma_asym.map(|v| v.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{sig},{},{},{:e}", s.z, s.value, s.iterations, s.restarts, s.grad_norm)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_problem(rho: f64) -> RateProblem {
        RateProblem::new(0.3, rho, 1.0, VolFunction::exponential(0.2, vec![1.0, 0.0]).unwrap(), 16).unwrap()
    }

    #[test]
    fn kernel_convolution_closed_forms() {
        let g = vec![1.0; 32];
        let u = kh_convolve(&g, 0.3);
        for (k, v) in u.iter().enumerate() {
            let t = (k as f64 + 0.5) / 32.0;
            assert!((v - t.powf(0.8) / (0.8 * gamma(0.8))).abs() < 1e-13);
        }
        let g: Vec<f64> = (0..8).map(|k| k as f64 - 3.0).collect();
        let u = kh_convolve(&g, 0.5);
        let mut acc = 0.0;
        for k in 0..8 {
            assert!((u[k] - (acc + 0.5 * g[k] / 8.0)).abs() < 1e-14);
            acc += g[k] / 8.0;
        }
        assert!(kh_convolve(&[0.0; 5], 0.2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn objective_plug_in() {
        let p = RateProblem::new(0.3, 0.5, 1.0, VolFunction::constant(0.2).unwrap(), 8).unwrap();
        let v = rate_objective(&[0.0; 8], 0.1, &p).unwrap();
        assert!((v - 0.01 / (2.0 * 0.75 * 0.04)).abs() < 1e-14);
        assert_eq!(rate_objective(&[0.0; 8], 0.0, &p).unwrap(), 0.0);
        let zero = RateProblem::new(0.3, 0.5, 1.0, VolFunction::constant(0.0).unwrap(), 8).unwrap();
        assert!(matches!(rate_objective(&[0.0; 8], 0.1, &zero), Err(Error::Degenerate(_))));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let p = exp_problem(-0.7);
        let g: Vec<f64> = (0..16).map(|k| (k as f64 * 0.7).sin()).collect();
        let grad = rate_gradient(&g, 0.2, &p).unwrap();
        for m in [0, 5, 15] {
            let mut gp = g.clone();
            let mut gm = g.clone();
            gp[m] += 1e-6;
            gm[m] -= 1e-6;
            let fd = (rate_objective(&gp, 0.2, &p).unwrap() - rate_objective(&gm, 0.2, &p).unwrap()) / 2e-6;
            assert!((fd - grad[m]).abs() <= 1e-5 * grad[m].abs().max(1e-3), "{m}: {fd} vs {}", grad[m]);
        }
    }

    #[test]
    fn constant_f_matches_closed_form() {
        for rho in [-0.7, 0.0, 0.7] {
            let p = RateProblem::new(0.3, rho, 1.0, VolFunction::constant(0.2).unwrap(), 16).unwrap();
            let s = minimize_rate(0.1, &p).unwrap();
            assert!((s.value - 0.125).abs() < 1e-6, "{rho}: {}", s.value);
            assert!((constant_rate(0.1, 0.2, 1.0) - 0.125).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_rate_at_zero() {
        let s = minimize_rate(0.0, &exp_problem(-0.7)).unwrap();
        assert_eq!(s.value, 0.0);
        assert!(s.g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn nonconstant_optimum_is_stationary() {
        let s = minimize_rate(0.15, &exp_problem(-0.7)).unwrap();
        assert!(s.value > 0.0);
        assert!(s.grad_norm <= 1e-8 * (1.0 + s.value));
        assert!(s.optimality_residual < 1e-6, "{}", s.optimality_residual);
    }
}
