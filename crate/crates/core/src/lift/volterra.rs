use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::brownian::BrownianBundle;
use super::kernel::{KernelSpec, KernelVariant};
use crate::error::{Error, Result};
use crate::grid::Grid;

const DIRECT_LIMIT: usize = 512;

/// Precomputed discretization of `t ↦ ∫_0^t κ(t−r) dW_r` on a grid.
///
/// The value at node `q` is `Σ_{k≥2} c_k ΔW_{q−k} + c_1 ΔW_{q−1} + b ξ_{q−1}`
/// where `c_k` is the cell average of `κ` over `[(k−1)Δ, kΔ]` (Riemann–
/// Liouville) or the left-point value `κ(kΔ)` (custom kernels). For the
/// Riemann–Liouville kernel the last cell additionally carries `b ξ` with
/// `b² = ∫_0^Δ κ² − Δ c_1²`, which restores the exact one-cell variance.
pub struct VolterraPlan {
    grid: Grid,
    weights: Vec<f64>,
    near_extra: f64,
    constant: bool,
    fft: Option<FftParts>,
}

struct FftParts {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    kernel_hat: Vec<Complex<f64>>,
}

impl VolterraPlan {
    pub fn new(spec: &KernelSpec, grid: &Grid) -> Self {
        let n = grid.steps();
        let dt = grid.dt();
        let weights: Vec<f64> = match spec.variant {
            KernelVariant::RiemannLiouville { .. } => (1..=n)
                .map(|k| spec.integral((k - 1) as f64 * dt, k as f64 * dt) / dt)
                .collect(),
            KernelVariant::Custom { .. } => (1..=n).map(|k| spec.eval_unchecked(k as f64 * dt)).collect(),
        };
        let near_extra = match spec.variant {
            KernelVariant::RiemannLiouville { .. } if !spec.is_constant() => {
                (spec.square_integral(0.0, dt) - dt * weights[0] * weights[0]).max(0.0).sqrt()
            }
            _ => 0.0,
        };
        let constant = spec.is_constant();
        let fft = (n > DIRECT_LIMIT && !constant).then(|| {
            let len = (2 * n).next_power_of_two();
            let mut planner = FftPlanner::new();
            let forward = planner.plan_fft_forward(len);
            let inverse = planner.plan_fft_inverse(len);
            let mut kernel_hat: Vec<Complex<f64>> = weights.iter().map(|&w| Complex::new(w, 0.0)).collect();
            kernel_hat.resize(len, Complex::new(0.0, 0.0));
            forward.process(&mut kernel_hat);
            FftParts { forward, inverse, kernel_hat }
        });
        Self { grid: *grid, weights, near_extra, constant, fft }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Convolution weights `c_k`, `k = 1..=N`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Coefficient `b` of the auxiliary normal in the last cell.
    pub fn near_extra(&self) -> f64 {
        self.near_extra
    }

    /// Node values (`N + 1` entries, starting at zero) for increments `dw`
    /// and auxiliary normals `aux`.
    pub fn apply(&self, dw: &[f64], aux: Option<&[f64]>) -> Vec<f64> {
        let n = self.grid.steps();
        assert_eq!(dw.len(), n);
        let mut out = vec![0.0; n + 1];
        if self.constant {
            let mut acc = 0.0;
            for (q, &v) in dw.iter().enumerate() {
                acc += v;
                out[q + 1] = acc;
            }
            return out;
        }
        match &self.fft {
            None => {
                for q in 1..=n {
                    let mut acc = 0.0;
                    for j in 0..q {
                        acc += self.weights[j] * dw[q - 1 - j];
                    }
                    out[q] = acc;
                }
            }
            Some(parts) => {
                let len = parts.kernel_hat.len();
                let mut buf: Vec<Complex<f64>> = dw.iter().map(|&v| Complex::new(v, 0.0)).collect();
                buf.resize(len, Complex::new(0.0, 0.0));
                parts.forward.process(&mut buf);
                for (b, k) in buf.iter_mut().zip(&parts.kernel_hat) {
                    *b *= k;
                }
                parts.inverse.process(&mut buf);
                let scale = 1.0 / len as f64;
                for q in 1..=n {
                    out[q] = buf[q - 1].re * scale;
                }
            }
        }
        if let Some(aux) = aux {
            if self.near_extra != 0.0 {
                for q in 1..=n {
                    out[q] += self.near_extra * aux[q - 1];
                }
            }
        }
        out
    }
}

/// `X̂^(1)` at every node for the bundle's `W`.
pub fn volterra_convolve(bundle: &BrownianBundle, spec: &KernelSpec) -> Vec<f64> {
    VolterraPlan::new(spec, &bundle.grid).apply(&bundle.dw, Some(&bundle.aux))
}

/// `𝒦f(t) = κ(t)(f(t) − f(0)) + ∫_0^t (f(s) − f(t)) κ'(t−s) ds` at every node
/// for `f` sampled on `grid`.
///
/// `f` is interpolated linearly between nodes and each cell integral of `κ'`
/// against the interpolant is evaluated exactly through
/// `∫_a^b u κ'(u) du = bκ(b) − aκ(a) − ∫_a^b κ`. On the cell adjacent to `t`
/// the coefficient of the divergent `∫κ'` vanishes identically.
pub fn k_operator(f_path: &[f64], spec: &KernelSpec, grid: &Grid) -> Result<Vec<f64>> {
    let n = grid.steps();
    if f_path.len() != n + 1 {
        return Err(Error::Domain(format!("f has {} samples, grid has {} nodes", f_path.len(), n + 1)));
    }
    if f_path.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("f contains non-finite samples".into()));
    }
    let dt = grid.dt();
    let mut out = vec![0.0; n + 1];
    if spec.is_constant() {
        for q in 0..=n {
            out[q] = f_path[q] - f_path[0];
        }
        return Ok(out);
    }
    // Per-lag cell quantities for u ∈ [(k−1)Δ, kΔ].
    let kappa_at: Vec<f64> = (0..=n)
        .map(|k| if k == 0 { 0.0 } else { spec.eval_unchecked(k as f64 * dt) })
        .collect();
    let int_kappa: Vec<f64> = (1..=n).map(|k| spec.integral((k - 1) as f64 * dt, k as f64 * dt)).collect();
    let moment: Vec<f64> = (1..=n)
        .map(|k| {
            let (a, b) = ((k - 1) as f64 * dt, k as f64 * dt);
            spec.weighted(b) - spec.weighted(a) - int_kappa[k - 1]
        })
        .collect();
    for q in 1..=n {
        let fq = f_path[q];
        let mut acc = kappa_at[q] * (fq - f_path[0]);
        for m in 0..q {
            let k = q - m;
            let slope = f_path[m + 1] - f_path[m];
            let c0 = f_path[m] - fq + slope * k as f64;
            if k > 1 {
                acc += c0 * (kappa_at[k] - kappa_at[k - 1]);
            }
            acc -= slope / dt * moment[k - 1];
        }
        out[q] = acc;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lift::brownian::simulate_brownian;
    use crate::quadrature::integrate_adaptive;

    #[test]
    fn constant_kernel_reproduces_w() {
        let g = Grid::new(1.0, 2048).unwrap();
        let b = simulate_brownian(&g, 0.2, 3).unwrap();
        let k = KernelSpec::riemann_liouville(0.5, 0.01).unwrap();
        assert_eq!(volterra_convolve(&b, &k), b.w());
    }

    #[test]
    fn deterministic_drift_matches_kernel_integral() {
        for n in [64, 1024] {
            let g = Grid::new(1.0, n).unwrap();
            let k = KernelSpec::riemann_liouville(0.1, 0.01).unwrap();
            let plan = VolterraPlan::new(&k, &g);
            let v = plan.apply(&vec![g.dt(); n], None);
            for q in [1, n / 3, n] {
                let t = g.node(q);
                let want = integrate_adaptive(|u| k.eval_unchecked(u), 0.0, t, 1e-13);
                assert!((v[q] - want).abs() < 1e-8, "{n} {q}: {} vs {want}", v[q]);
            }
        }
    }

    #[test]
    fn fft_agrees_with_direct_sum() {
        let g = Grid::new(1.0, 1024).unwrap();
        let b = simulate_brownian(&g, 0.0, 5).unwrap();
        let k = KernelSpec::riemann_liouville(0.3, 0.01).unwrap();
        let plan = VolterraPlan::new(&k, &g);
        let fast = plan.apply(&b.dw, None);
        for q in [1, 17, 500, 1024] {
            let direct: f64 = (0..q).map(|j| plan.weights()[j] * b.dw[q - 1 - j]).sum();
            assert!((fast[q] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn k_operator_identities() {
        let g = Grid::new(1.0, 256).unwrap();
        let f: Vec<f64> = g.nodes().iter().map(|t| (3.0 * t).sin() + 0.4).collect();
        let one = KernelSpec::riemann_liouville(0.5, 0.01).unwrap();
        let kf = k_operator(&f, &one, &g).unwrap();
        assert!(kf.iter().zip(&f).all(|(a, b)| (a - (b - f[0])).abs() < 1e-15));

        let k = KernelSpec::riemann_liouville(0.3, 0.01).unwrap();
        let flat = k_operator(&vec![2.5; 257], &k, &g).unwrap();
        assert!(flat.iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn k_operator_equals_cell_average_convolution() {
        let g = Grid::new(1.0, 200).unwrap();
        let b = simulate_brownian(&g, 0.0, 8).unwrap();
        let k = KernelSpec::riemann_liouville(0.2, 0.01).unwrap();
        let w = b.w();
        let kf = k_operator(&w, &k, &g).unwrap();
        let conv = VolterraPlan::new(&k, &g).apply(&b.dw, None);
        for q in 0..=200 {
            assert!((kf[q] - conv[q]).abs() < 1e-11, "{q}");
        }
    }
}
