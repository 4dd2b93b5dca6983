use serde::Serialize;

use super::rough_path::RoughPath;
use super::sums::integrate;
use super::volfn::VolFunction;
use crate::analysis::{distance_ab_with, distance_alpha_with, path_norms, PairScheme};
use crate::error::{Error, Result};
use crate::index::IndexConfig;
use crate::path::PartialRoughPath;

/// Inputs of the bound constants. `n` and `m` are normally taken from an
/// [`IndexConfig`]; they are kept free so degenerate index sets can be
/// evaluated too.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BoundParams {
    pub n: u32,
    pub m: u32,
    pub e: usize,
    pub alpha: f64,
    pub beta: f64,
    pub horizon: f64,
}

impl BoundParams {
    pub fn from_config(config: &IndexConfig) -> Self {
        Self {
            n: config.n(),
            m: config.m(),
            e: config.e,
            alpha: config.alpha,
            beta: config.beta,
            horizon: config.horizon,
        }
    }
}

/// Closed-form constants of the integral estimates for a norm ball of
/// radius `M`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BoundConstants {
    pub c1: f64,
    pub c2: f64,
    pub c2_tilde: f64,
    pub c3: f64,
    pub c4: f64,
    pub c4_tilde: f64,
}

impl BoundConstants {
    /// Lipschitz constant `K (C₃ + K C₄)` of the integration map.
    pub fn lipschitz(&self, k: f64) -> f64 {
        k * (self.c3 + k * self.c4)
    }
}

/// Riemann zeta `ζ(s)` for `s > 1`: direct sum of the first 4096 terms
/// plus the Euler–Maclaurin tail.
pub fn riemann_zeta(s: f64) -> Result<f64> {
    if !(s > 1.0) || !s.is_finite() {
        return Err(Error::Domain(format!("zeta({s}) diverges")));
    }
    const N: u32 = 4096;
    let mut sum = 0.0;
    for k in (1..N).rev() {
        sum += f64::from(k).powf(-s);
    }
    let n = f64::from(N);
    let ns = n.powf(-s);
    // ∫_N^∞ x^{-s} dx + f(N)/2 − Σ B_{2j}/(2j)! f^{(2j−1)}(N)
    let tail = n * ns / (s - 1.0) + ns / 2.0 + s * ns / (12.0 * n)
        - s * (s + 1.0) * (s + 2.0) * ns / (720.0 * n.powi(3))
        + s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) * ns / (30240.0 * n.powi(5));
    Ok(sum + tail)
}

/// Evaluates `C₁, C̃₂, C₂, C₃, C̃₄, C₄` for the ball `|||𝕏||| ≤ M`.
pub fn theoretical_bounds(p: &BoundParams, m_norm: f64) -> Result<BoundConstants> {
    let (n, m) = (f64::from(p.n), f64::from(p.m));
    let e = p.e as f64;
    let (a, b, t) = (p.alpha, p.beta, p.horizon);
    let big = 1.0 + m_norm;
    let s1 = (n + 1.0) * b + a;
    let s2 = (m + 1.0) * b + 2.0 * a;
    assert!(s1 > 1.0 && s2 > 1.0, "exponents must exceed one by maximality of n and m");
    let z1 = 2f64.powf(s1) * riemann_zeta(s1)?;
    let z2 = 2f64.powf(s2) * riemann_zeta(s2)?;

    let c1 = (n + 1.0).powf(2.0 * e) * big.powf(n + 2.0) * (1.0 + t).powf((n + 1.0) * b) * (1.0 + z1);
    let c2_tilde =
        2.0 * (1.0 + n + m).powf(4.0 * e) * big.powf(m + 3.0) * (1.0 + t).powf((2.0 * n - m - 1.0) * b);
    let c2 = (1.0 + m).powf(2.0 * e) * m_norm * (1.0 + t).powf(m * b)
        + (c2_tilde + 2.0 * c1 * c1 * t.powf((n - m) * b)) * z2;
    let c3 = (1.0 + n).powf(2.0 * e + 1.0)
        * (1.0 + t).powf((n + 1.0) * b)
        * (1.0 + (3.0 * e + 2.0) * big.powf(n + 2.0) * z1);
    let c4_tilde =
        (15.0 * e + 7.0) * (1.0 + n + m).powf(3.0 * e) * big.powf(m + 3.0) * (1.0 + t).powf((2.0 * n - m) * b);
    let c4 = (1.0 + m).powf(2.0 * e) * (1.0 + 2.0 * e * m_norm) * (1.0 + t).powf((m + 1.0) * b)
        + (1.0 + t.powf((n - m) * b)) * (c4_tilde + 4.0 * c1 * c3) * z2;
    Ok(BoundConstants { c1, c2, c2_tilde, c3, c4, c4_tilde })
}

/// Box `[lo, hi]` spanned by `x̂` along the path.
pub fn xhat_range(prp: &PartialRoughPath) -> (Vec<f64>, Vec<f64>) {
    let e = prp.config().e;
    let mut lo = vec![f64::INFINITY; e];
    let mut hi = vec![f64::NEG_INFINITY; e];
    for x in prp.xhat_raw().chunks(e) {
        for l in 0..e {
            lo[l] = lo[l].min(x[l]);
            hi[l] = hi[l].max(x[l]);
        }
    }
    (lo, hi)
}

/// `K = max |∂^i f|` over `|i| ≤ n + 2` on the union of the realized `x̂`
/// ranges, each side inflated by 10% of its width.
pub fn estimate_k(paths: &[&PartialRoughPath], f: &VolFunction) -> Result<f64> {
    let first = paths.first().ok_or_else(|| Error::Domain("no paths given".into()))?;
    let (mut lo, mut hi) = xhat_range(first);
    for p in &paths[1..] {
        let (l, h) = xhat_range(p);
        for c in 0..lo.len() {
            lo[c] = lo[c].min(l[c]);
            hi[c] = hi[c].max(h[c]);
        }
    }
    for c in 0..lo.len() {
        let pad = 0.1 * (hi[c] - lo[c]);
        lo[c] -= pad;
        hi[c] += pad;
    }
    Ok(f.sup_norm_on_box(&lo, &hi, first.config().n() + 2))
}

/// Radius `M` of a ball containing every path: the larger of the
/// homogeneous norm and the largest single component norm.
pub fn estimate_m(paths: &[&PartialRoughPath], scheme: PairScheme) -> Result<f64> {
    let mut best = 0.0f64;
    for p in paths {
        let norms = path_norms(p, scheme)?;
        best = best.max(norms.homogeneous(p)).max(norms.max_component());
    }
    Ok(best)
}

/// Measured Lipschitz quotient of the integration map on one pair.
#[derive(Clone, Debug, Serialize)]
pub struct LipschitzReport {
    /// `d_α(∫f d𝔸, ∫f d𝔹)`.
    pub output_distance: f64,
    /// `d_(α,β)(𝔸, 𝔹)`.
    pub input_distance: f64,
    pub ratio: f64,
}

/// `d_α(∫f d𝔸, ∫f d𝔹) / d_(α,β)(𝔸, 𝔹)`; zero when both paths coincide.
pub fn lipschitz_ratio(
    prp_a: &PartialRoughPath,
    prp_b: &PartialRoughPath,
    f: &VolFunction,
    tol: f64,
) -> Result<LipschitzReport> {
    let (ya, _) = integrate(prp_a, f, tol)?;
    let (yb, _) = integrate(prp_b, f, tol)?;
    lipschitz_ratio_of(prp_a, prp_b, &ya, &yb)
}

/// As [`lipschitz_ratio`] with precomputed integrals.
pub fn lipschitz_ratio_of(
    prp_a: &PartialRoughPath,
    prp_b: &PartialRoughPath,
    ya: &RoughPath,
    yb: &RoughPath,
) -> Result<LipschitzReport> {
    if !prp_a.compatible(prp_b) {
        return Err(Error::Domain("paths have different configurations or grids".into()));
    }
    let scheme = PairScheme::default_for(prp_a.grid());
    let input_distance = distance_ab_with(prp_a, prp_b, scheme)?;
    let output_distance = distance_alpha_with(ya, yb, scheme)?;
    let ratio = if input_distance == 0.0 {
        if output_distance != 0.0 {
            return Err(Error::Numerical(
                "identical partial rough paths produced different integrals".into(),
            ));
        }
        0.0
    } else {
        output_distance / input_distance
    };
    if !ratio.is_finite() {
        return Err(Error::Numerical("Lipschitz ratio is not finite".into()));
    }
    Ok(LipschitzReport { output_distance, input_distance, ratio })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeta_values() {
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((riemann_zeta(2.0).unwrap() - pi2 / 6.0).abs() < 1e-13);
        assert!((riemann_zeta(4.0).unwrap() - pi2 * pi2 / 90.0).abs() < 1e-14);
        // ζ(1.05) = 20.5804...
        assert!((riemann_zeta(1.05).unwrap() - 20.580_844_302_036_1).abs() < 1e-9);
        assert!(riemann_zeta(1.0).is_err());
    }

    #[test]
    fn c1_single_index_plug_in() {
        let (alpha, beta) = (0.45, 0.6);
        let p = BoundParams { n: 0, m: 0, e: 1, alpha, beta, horizon: 1.0 };
        let c = theoretical_bounds(&p, 0.0).unwrap();
        let s = alpha + beta;
        let want = 2f64.powf(beta) * (1.0 + 2f64.powf(s) * riemann_zeta(s).unwrap());
        assert!((c.c1 - want).abs() < 1e-12 * want);
    }

    #[test]
    fn constants_grow_with_radius() {
        let cfg = IndexConfig::new(0.45, 0.2, 2).unwrap();
        let p = BoundParams::from_config(&cfg);
        let a = theoretical_bounds(&p, 1.0).unwrap();
        let b = theoretical_bounds(&p, 2.0).unwrap();
        assert!(b.c1 > a.c1 && b.c2 > a.c2 && b.c3 > a.c3 && b.c4 > a.c4);
        assert!(a.lipschitz(2.0) > a.lipschitz(1.0));
    }
}
