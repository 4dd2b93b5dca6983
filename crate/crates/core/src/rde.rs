//! Step-2 solver for `S̄_t = ∫_0^t σ̄(S̄_u) dY_u` driven by a level-two rough
//! path, the full simulate–lift–integrate–solve pipeline, and an
//! Euler–Maruyama reference on the same Brownian increments.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::integrate::{integrate, RoughPath, VolFunction};
use crate::lift::{BrownianBundle, LiftModel, VolterraPlan};
use crate::path::PartialRoughPath;

/// Largest admissible `|S|` before the solver aborts.
pub const STATE_GUARD: f64 = 1e6;

pub type ScalarMap = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Diffusion coefficient `σ(S)` with its derivatives.
#[derive(Clone)]
pub enum Sigma {
    Constant(f64),
    /// `σ(s) = a + b s`.
    Linear { a: f64, b: f64 },
    /// `σ` with `σ'`, `σ''`, `σ'''` supplied by the caller.
    SmoothBounded { value: ScalarMap, d1: ScalarMap, d2: ScalarMap, d3: ScalarMap },
}

impl fmt::Debug for Sigma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sigma::Constant(c) => write!(f, "Constant({c})"),
            Sigma::Linear { a, b } => write!(f, "Linear(a={a}, b={b})"),
            Sigma::SmoothBounded { .. } => write!(f, "SmoothBounded"),
        }
    }
}

impl Sigma {
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            Sigma::Constant(c) => *c,
            Sigma::Linear { a, b } => a + b * s,
            Sigma::SmoothBounded { value, .. } => value(s),
        }
    }

    /// `k`-th derivative for `k ≤ 3`.
    pub fn derivative(&self, k: u32, s: f64) -> f64 {
        match (self, k) {
            (_, 0) => self.eval(s),
            (Sigma::Constant(_), _) => 0.0,
            (Sigma::Linear { b, .. }, 1) => *b,
            (Sigma::Linear { .. }, _) => 0.0,
            (Sigma::SmoothBounded { d1, .. }, 1) => d1(s),
            (Sigma::SmoothBounded { d2, .. }, 2) => d2(s),
            (Sigma::SmoothBounded { d3, .. }, 3) => d3(s),
            _ => panic!("derivatives of sigma are available up to order 3"),
        }
    }

    /// `Linear` with `b ≠ 0` has an unbounded value, so the `C³_b`
    /// guarantee does not apply.
    pub fn boundedness_warning(&self) -> Option<String> {
        match self {
            Sigma::Linear { b, .. } if *b != 0.0 => {
                Some("linear sigma is unbounded; solutions are guarded at |S| <= 1e6".into())
            }
            _ => None,
        }
    }
}

/// `S̄ = ∫ σ(S0 + S̄) dY`.
#[derive(Clone, Debug)]
pub struct RdeProblem {
    pub sigma: Sigma,
    pub s0: f64,
    pub driver: RoughPath,
}

/// Solution on the driver's grid.
#[derive(Clone, Debug)]
pub struct RdeSolution {
    /// `S̄` at every node, starting at zero.
    pub s_bar: Vec<f64>,
    pub s0: f64,
}

impl RdeSolution {
    pub fn s(&self) -> Vec<f64> {
        self.s_bar.iter().map(|v| self.s0 + v).collect()
    }

    pub fn terminal(&self) -> f64 {
        self.s0 + self.s_bar.last().copied().unwrap_or(0.0)
    }
}

/// `S̄_{q+1} = S̄_q + σ̄ Σ_c Y^(1),c + σ̄'σ̄ Σ_{rc} Y^(2),rc` over each cell; for
/// a `d`-dimensional driver every component shares the coefficient `σ`.
///
/// The level-one part is accumulated by parts, so a constant `σ` returns
/// `σ Y^(1)_{0t}` without rounding drift.
pub fn solve_rde(problem: &RdeProblem) -> Result<RdeSolution> {
    let y = &problem.driver;
    let n = y.grid().steps();
    let y1 = |q: usize| y.y1_at(q).iter().sum::<f64>();
    let mut s_bar = Vec::with_capacity(n + 1);
    s_bar.push(0.0);
    let mut state = 0.0;
    let mut prev_sig = problem.sigma.eval(problem.s0);
    let mut by_parts = 0.0;
    let mut second = 0.0;
    for q in 0..n {
        let s = problem.s0 + state;
        let sig = problem.sigma.eval(s);
        let dsig = problem.sigma.derivative(1, s);
        if q > 0 {
            by_parts += y1(q) * (sig - prev_sig);
        }
        let (_, l2) = y.increment(q, q + 1);
        second += dsig * sig * l2.iter().sum::<f64>();
        state = sig * y1(q + 1) - by_parts + second;
        prev_sig = sig;
        let abs = (problem.s0 + state).abs();
        if !abs.is_finite() || abs > STATE_GUARD {
            return Err(Error::Solver {
                last_good: q,
                message: format!("|S| = {abs:e} left the admissible region"),
            });
        }
        s_bar.push(state);
    }
    Ok(RdeSolution { s_bar, s0: problem.s0 })
}

/// Euler–Maruyama for `dS = σ(S) f(x̂_t) dX_t` with `x̂` from the lift and
/// `ΔX` from the bundle.
pub fn euler_maruyama(
    prp: &PartialRoughPath,
    bundle: &BrownianBundle,
    f: &VolFunction,
    sigma: &Sigma,
    s0: f64,
) -> Result<Vec<f64>> {
    let dx = bundle.dx();
    if dx.len() != prp.grid().steps() {
        return Err(Error::Domain("bundle and path grids differ".into()));
    }
    let mut out = Vec::with_capacity(dx.len() + 1);
    let mut s = s0;
    out.push(s);
    for (q, d) in dx.iter().enumerate() {
        s += sigma.eval(s) * f.eval(prp.xhat_at(q)) * d;
        if !s.is_finite() || s.abs() > STATE_GUARD {
            return Err(Error::Solver { last_good: q, message: format!("Euler-Maruyama state {s:e}") });
        }
        out.push(s);
    }
    Ok(out)
}

/// Model `dS = σ(S) f(X̂_t) dX_t` with a seeded path family.
#[derive(Clone, Debug)]
pub struct Model {
    pub lift: LiftModel,
    pub f: VolFunction,
    pub sigma: Sigma,
    pub s0: f64,
    /// Cauchy tolerance of the integral.
    pub tol: f64,
}

/// One path of the pipeline.
#[derive(Clone, Debug)]
pub struct ModelPath {
    pub path_index: u64,
    /// Rough solution `S` at every node.
    pub s: Vec<f64>,
    /// Euler–Maruyama reference on the same increments.
    pub s_em: Vec<f64>,
    pub warnings: Vec<String>,
}

impl Model {
    /// Simulate, lift, integrate and solve path `path`.
    pub fn solve_path(&self, path: u64, plan: &VolterraPlan) -> Result<ModelPath> {
        let (bundle, prp) = self.lift.lift(path, plan)?;
        let (driver, trace) = integrate(&prp, &self.f, self.tol)?;
        let mut warnings: Vec<String> = trace.warnings().map(str::to_string).collect();
        warnings.extend(self.sigma.boundedness_warning());
        let problem = RdeProblem { sigma: self.sigma.clone(), s0: self.s0, driver };
        let s = solve_rde(&problem)?.s();
        let s_em = euler_maruyama(&prp, &bundle, &self.f, &self.sigma, self.s0)?;
        Ok(ModelPath { path_index: path, s, s_em, warnings })
    }

    /// Paths `0..count` in parallel, returned in index order.
    pub fn solve_paths(&self, count: u64) -> Result<Vec<ModelPath>> {
        let plan = self.lift.plan();
        (0..count).into_par_iter().map(|p| self.solve_path(p, &plan)).collect()
    }
}

/// Full pipeline for `count` paths.
pub fn solve_model(model: &Model, count: u64) -> Result<Vec<ModelPath>> {
    model.solve_paths(count)
}

/// CSV rows `(path_id, t, S)`.
pub fn write_paths_csv<W: Write>(mut w: W, paths: &[ModelPath], nodes: &[f64]) -> Result<()> {
    writeln!(w, "path_id,t,S")?;
    for p in paths {
        for (t, s) in nodes.iter().zip(&p.s) {
            writeln!(w, "{},{t},{s}", p.path_index)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn driver() -> RoughPath {
        let grid = Grid::new(1.0, 4).unwrap();
        let y1 = vec![0.0, 0.3, -0.1, 0.2, 0.5];
        let y2: Vec<f64> = y1.iter().map(|v| 0.5 * v * v).collect();
        RoughPath::new(grid, 1, 0.45, y1, y2).unwrap()
    }

    #[test]
    fn zero_and_unit_sigma() {
        let y = driver();
        let zero = solve_rde(&RdeProblem { sigma: Sigma::Constant(0.0), s0: 1.0, driver: y.clone() }).unwrap();
        assert!(zero.s_bar.iter().all(|&v| v == 0.0));
        let one = solve_rde(&RdeProblem { sigma: Sigma::Constant(1.0), s0: 1.0, driver: y.clone() }).unwrap();
        assert_eq!(one.s_bar, y.y1());
        let lam = 1.7;
        let scaled = solve_rde(&RdeProblem { sigma: Sigma::Constant(1.0), s0: 0.0, driver: y.dilate(lam) }).unwrap();
        for (a, b) in scaled.s_bar.iter().zip(y.y1()) {
            assert_eq!(*a, lam * b);
        }
    }

    #[test]
    fn guard_reports_last_good_node() {
        let grid = Grid::new(1.0, 3).unwrap();
        let y = RoughPath::new(grid, 1, 0.45, vec![0.0, 1.0, 50.0, 60.0], vec![0.0; 4]).unwrap();
        let err = solve_rde(&RdeProblem { sigma: Sigma::Linear { a: 0.0, b: 1e4 }, s0: 1.0, driver: y }).unwrap_err();
        match err {
            Error::Solver { last_good, .. } => assert_eq!(last_good, 1),
            other => panic!("{other}"),
        }
    }
}
