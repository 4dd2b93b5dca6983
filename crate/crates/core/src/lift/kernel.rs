use std::fmt;
use std::sync::Arc;

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::quadrature::integrate_adaptive;

/// Shape factor `g` of a custom kernel.
pub type ShapeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum KernelVariant {
    /// `κ_H(t) = t^{H−1/2} / Γ(H + 1/2)`.
    RiemannLiouville { hurst: f64 },
    /// `κ(t) = g(t) t^{ζ−γ}` with a user-supplied `g`.
    Custom { g: ShapeFn },
}

/// Singular Volterra kernel `κ(t) = g(t) t^{ζ−γ}`.
#[derive(Clone)]
pub struct KernelSpec {
    pub zeta: f64,
    pub gamma: f64,
    pub variant: KernelVariant,
}

impl fmt::Debug for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let variant = match &self.variant {
            KernelVariant::RiemannLiouville { hurst } => format!("RiemannLiouville(H={hurst})"),
            KernelVariant::Custom { .. } => "Custom".to_string(),
        };
        f.debug_struct("KernelSpec")
            .field("zeta", &self.zeta)
            .field("gamma", &self.gamma)
            .field("variant", &variant)
            .finish()
    }
}

impl KernelSpec {
    /// Riemann–Liouville kernel with `ζ = H − δ`, `γ = 1/2 − δ`.
    pub fn riemann_liouville(hurst: f64, delta: f64) -> Result<Self> {
        if !(hurst > 0.0 && hurst <= 0.5) {
            return Err(Error::Config(format!("kernel.H = {hurst} must lie in (0, 1/2]")));
        }
        if !(delta > 0.0 && delta < hurst) {
            return Err(Error::Config(format!("kernel.delta = {delta} must lie in (0, H)")));
        }
        Ok(Self {
            zeta: hurst - delta,
            gamma: 0.5 - delta,
            variant: KernelVariant::RiemannLiouville { hurst },
        })
    }

    pub fn custom(zeta: f64, gamma: f64, g: ShapeFn) -> Result<Self> {
        if !(zeta > 0.0 && zeta < 1.0) {
            return Err(Error::Config(format!("zeta = {zeta} must lie in (0, 1)")));
        }
        if !(gamma > 0.0 && gamma < 0.5) {
            return Err(Error::Config(format!("gamma = {gamma} must lie in (0, 1/2)")));
        }
        Ok(Self { zeta, gamma, variant: KernelVariant::Custom { g } })
    }

    /// Hurst parameter of a Riemann–Liouville kernel.
    pub fn hurst(&self) -> Option<f64> {
        match self.variant {
            KernelVariant::RiemannLiouville { hurst } => Some(hurst),
            KernelVariant::Custom { .. } => None,
        }
    }

    /// `κ ≡ 1` (Riemann–Liouville with `H = 1/2`).
    pub fn is_constant(&self) -> bool {
        self.hurst() == Some(0.5)
    }

    /// Exponent `ζ − γ` of the power singularity.
    pub fn power(&self) -> f64 {
        match self.variant {
            KernelVariant::RiemannLiouville { hurst } => hurst - 0.5,
            KernelVariant::Custom { .. } => self.zeta - self.gamma,
        }
    }

    /// `κ(t)` for `t > 0`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("kernel evaluated at t = {t} <= 0")));
        }
        Ok(self.eval_unchecked(t))
    }

    pub(crate) fn eval_unchecked(&self, t: f64) -> f64 {
        match &self.variant {
            KernelVariant::RiemannLiouville { hurst } => {
                if *hurst == 0.5 {
                    1.0
                } else {
                    t.powf(hurst - 0.5) / gamma(hurst + 0.5)
                }
            }
            KernelVariant::Custom { g } => g(t) * t.powf(self.zeta - self.gamma),
        }
    }

    /// `u κ(u)`, continuous at zero.
    pub(crate) fn weighted(&self, u: f64) -> f64 {
        if u == 0.0 {
            0.0
        } else {
            u * self.eval_unchecked(u)
        }
    }

    /// `∫_a^b κ(u) du` for `0 ≤ a ≤ b`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        match &self.variant {
            KernelVariant::RiemannLiouville { hurst } => {
                let p = hurst + 0.5;
                (b.powf(p) - a.powf(p)) / gamma(p + 1.0)
            }
            KernelVariant::Custom { .. } => integrate_adaptive(|u| self.eval_unchecked(u), a, b, 1e-14),
        }
    }

    /// `∫_a^b κ(u)² du` for `0 ≤ a ≤ b`.
    pub fn square_integral(&self, a: f64, b: f64) -> f64 {
        match &self.variant {
            KernelVariant::RiemannLiouville { hurst } => {
                let g = gamma(hurst + 0.5);
                let p = 2.0 * hurst;
                (b.powf(p) - a.powf(p)) / (p * g * g)
            }
            KernelVariant::Custom { .. } => {
                integrate_adaptive(|u| self.eval_unchecked(u).powi(2), a, b, 1e-14)
            }
        }
    }

    /// Rejects kernels whose regularity does not exceed `beta`.
    pub fn check_beta(&self, beta: f64) -> Result<()> {
        if beta >= self.zeta {
            return Err(Error::Config(format!(
                "beta = {beta} must be below the kernel exponent zeta = {}",
                self.zeta
            )));
        }
        Ok(())
    }
}

/// `κ(t)`; errors for `t ≤ 0`.
pub fn kernel_eval(spec: &KernelSpec, t: f64) -> Result<f64> {
    spec.eval(t)
}

/// Result of the kernel increment check `‖κ_st‖² ≲ |t−s|^{2(ζ−γ)+1}`.
#[derive(Clone, Debug)]
pub struct KernelL2Report {
    /// Least-squares slope of `log ‖κ_{0h}‖²` against `log h`.
    pub slope: f64,
    /// `2(ζ − γ) + 1`.
    pub expected: f64,
    /// Pairs `(h, ‖κ_{0h}‖²)` used in the fit.
    pub samples: Vec<(f64, f64)>,
    /// Slope deficit above 0.1.
    pub violated: bool,
}

/// Fits the growth exponent of `‖κ_{0h}‖²_{L²} = ∫_0^h κ²` over dyadic
/// lags `h = T/2^j` down to the grid step.
pub fn kernel_l2_check(spec: &KernelSpec, grid: &Grid) -> KernelL2Report {
    let mut samples = Vec::new();
    let mut h = grid.horizon();
    while h >= grid.dt() * (1.0 - 1e-12) {
        samples.push((h, spec.square_integral(0.0, h)));
        h *= 0.5;
    }
    let pts: Vec<(f64, f64)> = samples.iter().map(|&(h, v)| (h.ln(), v.ln())).collect();
    let slope = least_squares_slope(&pts);
    let expected = 2.0 * spec.power() + 1.0;
    KernelL2Report { slope, expected, samples, violated: expected - slope > 0.1 }
}

/// Ordinary least-squares slope through `(x, y)` points.
pub fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
