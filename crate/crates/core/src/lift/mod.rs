//! The rough-volatility lift: correlated Brownian drivers, the singular
//! Volterra kernel, the `𝒦` operator, and the Itô lift
//! `x̂ = (∫κ(t−r)dW_r, t^ζ)` with its iterated integrals against `X`.

mod brownian;
mod kernel;
mod volterra;

pub use brownian::{simulate_brownian, simulate_brownian_path, BrownianBundle};
pub use kernel::{kernel_eval, kernel_l2_check, least_squares_slope, KernelL2Report, KernelSpec, KernelVariant, ShapeFn};
pub use volterra::{k_operator, volterra_convolve, VolterraPlan};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::index::IndexConfig;
use crate::path::PartialRoughPath;

/// Builds the lift of one bundle.
///
/// Inside each cell `X̂` is frozen at its left node while `X` carries its own
/// Itô second level `(ΔX² − Δ)/2`, so the stored values are the exact
/// iterated integrals of that cellwise model. Level one therefore equals the
/// discrete left-point sums, and `𝐗^(00)` is the Itô area of `X`.
pub fn build_lift(bundle: &BrownianBundle, spec: &KernelSpec, config: &IndexConfig) -> Result<PartialRoughPath> {
    let plan = VolterraPlan::new(spec, &bundle.grid);
    build_lift_with(bundle, spec, config, &plan)
}

/// [`build_lift`] with a reusable convolution plan.
pub fn build_lift_with(
    bundle: &BrownianBundle,
    spec: &KernelSpec,
    config: &IndexConfig,
    plan: &VolterraPlan,
) -> Result<PartialRoughPath> {
    if config.e != 2 {
        return Err(Error::Config(format!("the lift has e = 2, got e = {}", config.e)));
    }
    if config.d != 1 {
        return Err(Error::Config(format!("the lift drives a scalar X, got d = {}", config.d)));
    }
    spec.check_beta(config.beta)?;
    if matches!(spec.variant, KernelVariant::Custom { .. }) {
        let report = kernel_l2_check(spec, &bundle.grid);
        if report.violated {
            return Err(Error::Config(format!(
                "kernel increment norm grows with exponent {:.3}, expected {:.3}",
                report.slope, report.expected
            )));
        }
    }
    if plan.grid() != &bundle.grid {
        return Err(Error::Domain("convolution plan was built for a different grid".into()));
    }
    let grid = bundle.grid;
    let x1 = plan.apply(&bundle.dw, Some(&bundle.aux));
    let mut xhat = Vec::with_capacity(2 * grid.len());
    for (q, v) in x1.iter().enumerate() {
        xhat.push(*v);
        xhat.push(grid.node(q).powf(spec.zeta));
    }
    let dx = bundle.dx();
    let dt = grid.dt();
    let area: Vec<f64> = dx.iter().map(|v| 0.5 * (v * v - dt)).collect();
    PartialRoughPath::from_cellwise(config.clone().with_horizon(grid.horizon()), grid, &xhat, &dx, Some(&area))
}

/// Everything needed to generate seeded lifts path by path.
#[derive(Clone, Debug)]
pub struct LiftModel {
    pub spec: KernelSpec,
    pub grid: Grid,
    pub rho: f64,
    pub seed: u64,
    pub config: IndexConfig,
}

impl LiftModel {
    pub fn new(spec: KernelSpec, grid: Grid, rho: f64, seed: u64, config: IndexConfig) -> Result<Self> {
        spec.check_beta(config.beta)?;
        if !(-1.0..=1.0).contains(&rho) {
            return Err(Error::Config(format!("corr.rho = {rho} must lie in [-1, 1]")));
        }
        Ok(Self { spec, grid, rho, seed, config })
    }

    /// Default exponents for a Riemann–Liouville kernel: `α = 0.45` and
    /// `β = ζ − 0.01`.
    pub fn default_exponents(spec: &KernelSpec) -> (f64, f64) {
        (0.45, (spec.zeta - 0.01).max(spec.zeta * 0.5))
    }

    pub fn plan(&self) -> VolterraPlan {
        VolterraPlan::new(&self.spec, &self.grid)
    }

    pub fn bundle(&self, path: u64) -> Result<BrownianBundle> {
        simulate_brownian_path(&self.grid, self.rho, self.seed, path)
    }

    pub fn lift(&self, path: u64, plan: &VolterraPlan) -> Result<(BrownianBundle, PartialRoughPath)> {
        let bundle = self.bundle(path)?;
        let prp = build_lift_with(&bundle, &self.spec, &self.config, plan)?;
        Ok((bundle, prp))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::MultiIndex;

    #[test]
    fn half_hurst_lift_is_brownian() {
        let grid = Grid::new(1.0, 256).unwrap();
        let spec = KernelSpec::riemann_liouville(0.5, 0.01).unwrap();
        let cfg = IndexConfig::new(0.45, 0.2, 2).unwrap();
        let b = simulate_brownian(&grid, 0.0, 1).unwrap();
        let p = build_lift(&b, &spec, &cfg).unwrap();
        let w = b.w();
        let x = b.x();
        let z = MultiIndex::zero(2);
        for q in [0, 10, 256] {
            assert_eq!(p.xhat_at(q)[0], w[q]);
        }
        for (s, t) in [(0, 256), (13, 200)] {
            let x01 = p.reconstruct_level1(&z, s, t).unwrap()[0];
            assert!((x01 - (x[t] - x[s])).abs() < 1e-13);
            let area = p.reconstruct_level2(&z, &z, s, t).unwrap()[0];
            let want = 0.5 * ((x[t] - x[s]).powi(2) - (grid.node(t) - grid.node(s)));
            assert!((area - want).abs() < 1e-12, "{area} vs {want}");
        }
    }

    #[test]
    fn first_driver_component_against_direct_sum() {
        let grid = Grid::new(1.0, 128).unwrap();
        let spec = KernelSpec::riemann_liouville(0.3, 0.01).unwrap();
        let cfg = IndexConfig::new(0.45, 0.28, 2).unwrap();
        let b = simulate_brownian(&grid, -0.5, 2).unwrap();
        let p = build_lift(&b, &spec, &cfg).unwrap();
        let dx = b.dx();
        let i = MultiIndex::new(vec![1, 0]).unwrap();
        for (s, t) in [(0, 128), (5, 77), (40, 41)] {
            let got = p.reconstruct_level1(&i, s, t).unwrap()[0];
            let want: f64 = (s..t).map(|r| (p.xhat_at(r)[0] - p.xhat_at(s)[0]) * dx[r]).sum();
            assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn rejects_incompatible_configs() {
        let grid = Grid::new(1.0, 16).unwrap();
        let spec = KernelSpec::riemann_liouville(0.3, 0.01).unwrap();
        let b = simulate_brownian(&grid, 0.0, 1).unwrap();
        let cfg = IndexConfig::new(0.45, 0.3, 2).unwrap();
        assert!(matches!(build_lift(&b, &spec, &cfg), Err(Error::Config(_))));
        let cfg = IndexConfig::new(0.45, 0.2, 1).unwrap();
        assert!(matches!(build_lift(&b, &spec, &cfg), Err(Error::Config(_))));
    }
}
