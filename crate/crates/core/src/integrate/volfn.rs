use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::index::{compositions, IndexConfig, MultiIndex};

/// Scalar function of `x ∈ R^e` used by tabulated volatility functions.
pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum VolFamily {
    /// `ξ · exp(Σ_l r_l x_l)`; for `e = 2` the rates are `(η, c)`.
    Exponential { xi: f64, rates: Vec<f64> },
    /// `Σ_n c_n x_1^n`.
    Polynomial { coeffs: Vec<f64> },
    Constant { value: f64 },
    /// Arbitrary `f` with partials from central differences of step `h`.
    TabulatedFiniteDifference { f: ScalarFn, h: f64 },
}

/// Volatility function `f(x̂)` with partial derivatives.
#[derive(Clone)]
pub struct VolFunction {
    family: VolFamily,
}

impl fmt::Debug for VolFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.family {
            VolFamily::Exponential { xi, rates } => write!(f, "Exponential(xi={xi}, rates={rates:?})"),
            VolFamily::Polynomial { coeffs } => write!(f, "Polynomial({coeffs:?})"),
            VolFamily::Constant { value } => write!(f, "Constant({value})"),
            VolFamily::TabulatedFiniteDifference { h, .. } => write!(f, "TabulatedFiniteDifference(h={h})"),
        }
    }
}

impl VolFunction {
    pub fn exponential(xi: f64, rates: Vec<f64>) -> Result<Self> {
        if !(xi.is_finite() && xi > 0.0) || rates.iter().any(|r| !r.is_finite()) {
            return Err(Error::Config("exponential vol needs xi > 0 and finite rates".into()));
        }
        Ok(Self { family: VolFamily::Exponential { xi, rates } })
    }

    pub fn polynomial(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("polynomial vol needs finite coefficients".into()));
        }
        Ok(Self { family: VolFamily::Polynomial { coeffs } })
    }

    pub fn constant(value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::Config("constant vol must be finite".into()));
        }
        Ok(Self { family: VolFamily::Constant { value } })
    }

    /// Central differences with base step `h` (the step grows with the
    /// derivative order to limit cancellation).
    pub fn tabulated(f: ScalarFn, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Config("finite-difference step must be positive".into()));
        }
        Ok(Self { family: VolFamily::TabulatedFiniteDifference { f, h } })
    }

    pub fn family(&self) -> &VolFamily {
        &self.family
    }

    /// All partials of order one and higher vanish.
    pub fn is_constant(&self) -> bool {
        matches!(self.family, VolFamily::Constant { .. })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.family {
            VolFamily::Exponential { xi, rates } => xi * rates.iter().zip(x).map(|(r, v)| r * v).sum::<f64>().exp(),
            VolFamily::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * x[0] + c),
            VolFamily::Constant { value } => *value,
            VolFamily::TabulatedFiniteDifference { f, .. } => f(x),
        }
    }

    /// `∂^i f(x)`.
    pub fn partial(&self, i: &MultiIndex, x: &[f64]) -> f64 {
        if i.is_zero() {
            return self.eval(x);
        }
        match &self.family {
            VolFamily::Exponential { rates, .. } => {
                let scale: f64 = i
                    .entries()
                    .iter()
                    .enumerate()
                    .map(|(l, &k)| rates.get(l).copied().unwrap_or(0.0).powi(k as i32))
                    .product();
                scale * self.eval(x)
            }
            VolFamily::Polynomial { coeffs } => {
                if i.entries().iter().skip(1).any(|&k| k > 0) {
                    return 0.0;
                }
                let k = i.entries()[0] as usize;
                let mut acc = 0.0;
                for (n, c) in coeffs.iter().enumerate().skip(k).rev() {
                    let falling: f64 = ((n - k + 1)..=n).map(|v| v as f64).product();
                    acc = acc * x[0] + c * falling;
                }
                acc
            }
            VolFamily::Constant { .. } => 0.0,
            VolFamily::TabulatedFiniteDifference { f, h } => {
                let order = i.total();
                let step = h.max(f64::EPSILON.powf(1.0 / (f64::from(order) + 2.0)));
                let mut point = x.to_vec();
                central(f.as_ref(), &mut point, i.entries(), 0, step)
            }
        }
    }

    /// `∂^i f(x)` for every `i ∈ I`, in index order.
    pub fn partials_into(&self, config: &IndexConfig, x: &[f64], out: &mut [f64]) {
        match &self.family {
            VolFamily::Exponential { .. } => {
                let base = self.eval(x);
                for (o, i) in out.iter_mut().zip(config.level1()) {
                    *o = self.partial_scale(i) * base;
                }
            }
            _ => {
                for (o, i) in out.iter_mut().zip(config.level1()) {
                    *o = self.partial(i, x);
                }
            }
        }
    }

    fn partial_scale(&self, i: &MultiIndex) -> f64 {
        match &self.family {
            VolFamily::Exponential { rates, .. } => i
                .entries()
                .iter()
                .enumerate()
                .map(|(l, &k)| rates.get(l).copied().unwrap_or(0.0).powi(k as i32))
                .product(),
            _ => 1.0,
        }
    }

    /// `max |∂^i f|` over `|i| ≤ order` on the box `[lo, hi]`, sampled on a
    /// regular lattice including the corners.
    pub fn sup_norm_on_box(&self, lo: &[f64], hi: &[f64], order: u32) -> f64 {
        let e = lo.len();
        let per_axis = if e <= 2 { 33 } else { 9 };
        let mut idx = vec![0usize; e];
        let mut best = 0.0f64;
        let partials: Vec<MultiIndex> = (0..=order)
            .flat_map(|s| compositions(e, s))
            .collect();
        loop {
            let x: Vec<f64> = (0..e)
                .map(|l| lo[l] + (hi[l] - lo[l]) * idx[l] as f64 / (per_axis - 1) as f64)
                .collect();
            for i in &partials {
                best = best.max(self.partial(i, &x).abs());
            }
            let mut l = 0;
            loop {
                if l == e {
                    return best;
                }
                idx[l] += 1;
                if idx[l] < per_axis {
                    break;
                }
                idx[l] = 0;
                l += 1;
            }
        }
    }
}

fn central(f: &(dyn Fn(&[f64]) -> f64 + Send + Sync), x: &mut [f64], orders: &[u32], axis: usize, h: f64) -> f64 {
    if axis == orders.len() {
        return f(x);
    }
    let k = orders[axis];
    if k == 0 {
        return central(f, x, orders, axis + 1, h);
    }
    // k-th central difference: Σ_m (−1)^m C(k, m) f(x + (k/2 − m)h) / h^k.
    let x0 = x[axis];
    let mut acc = 0.0;
    let mut binom = 1.0;
    for m in 0..=k {
        x[axis] = x0 + (f64::from(k) / 2.0 - f64::from(m)) * h;
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * binom * central(f, x, orders, axis + 1, h);
        binom = binom * f64::from(k - m) / f64::from(m + 1);
    }
    x[axis] = x0;
    acc / h.powi(k as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mi(v: &[u32]) -> MultiIndex {
        MultiIndex::new(v.to_vec()).unwrap()
    }

    #[test]
    fn exponential_partials_closed_form() {
        let f = VolFunction::exponential(0.2, vec![1.5, -0.7]).unwrap();
        let x = [0.3, 0.8];
        let base = f.eval(&x);
        assert!((base - 0.2 * (1.5 * 0.3 - 0.7 * 0.8f64).exp()).abs() < 1e-15);
        let p = f.partial(&mi(&[2, 1]), &x);
        assert!((p - 1.5f64.powi(2) * -0.7 * base).abs() < 1e-14);
    }

    #[test]
    fn polynomial_partials() {
        // 1 + 2x + 3x² + 4x³
        let f = VolFunction::polynomial(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let x = [0.5, 9.0];
        assert!((f.eval(&x) - (1.0 + 1.0 + 0.75 + 0.5)).abs() < 1e-15);
        assert!((f.partial(&mi(&[1, 0]), &x) - (2.0 + 3.0 + 3.0)).abs() < 1e-14);
        assert!((f.partial(&mi(&[2, 0]), &x) - (6.0 + 12.0)).abs() < 1e-14);
        assert!((f.partial(&mi(&[3, 0]), &x) - 24.0).abs() < 1e-14);
        assert_eq!(f.partial(&mi(&[4, 0]), &x), 0.0);
        assert_eq!(f.partial(&mi(&[0, 1]), &x), 0.0);
    }

    #[test]
    fn constant_partials_vanish() {
        let f = VolFunction::constant(0.3).unwrap();
        assert_eq!(f.partial(&mi(&[0]), &[1.0]), 0.3);
        assert_eq!(f.partial(&mi(&[1]), &[1.0]), 0.0);
    }

    #[test]
    fn finite_differences_track_closed_form() {
        let exact = VolFunction::exponential(1.0, vec![0.8, 0.5]).unwrap();
        let fd = VolFunction::tabulated(Arc::new(|x: &[f64]| (0.8 * x[0] + 0.5 * x[1]).exp()), 1e-5).unwrap();
        let x = [0.2, -0.4];
        for (i, tol) in [(mi(&[1, 0]), 1e-8), (mi(&[1, 1]), 1e-5), (mi(&[2, 1]), 1e-3)] {
            let (a, b) = (exact.partial(&i, &x), fd.partial(&i, &x));
            assert!((a - b).abs() < tol * a.abs().max(1.0), "{i}: {a} vs {b}");
        }
    }

    #[test]
    fn sup_norm_covers_corners() {
        let f = VolFunction::exponential(1.0, vec![2.0]).unwrap();
        let k = f.sup_norm_on_box(&[-1.0], &[1.0], 3);
        assert!((k - 8.0 * 2f64.exp()).abs() < 1e-12);
    }
}
