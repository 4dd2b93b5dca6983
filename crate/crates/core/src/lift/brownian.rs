use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Correlated one-dimensional Brownian drivers on a grid.
///
/// Increments are stored; `W`, `W⊥` and `X = ρW + √(1−ρ²)W⊥` are obtained by
/// cumulative summation. `aux` holds the independent standard normals used
/// by the near-cell correction of the Volterra convolution.
#[derive(Clone, Debug)]
pub struct BrownianBundle {
    pub grid: Grid,
    pub rho: f64,
    pub seed: u64,
    pub path_index: u64,
    pub dw: Vec<f64>,
    pub dw_perp: Vec<f64>,
    pub aux: Vec<f64>,
}

fn normals(seed: u64, stream: u64, scale: f64, len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..len)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        })
        .collect()
}

/// Path `0` of the family keyed by `seed`.
pub fn simulate_brownian(grid: &Grid, rho: f64, seed: u64) -> Result<BrownianBundle> {
    simulate_brownian_path(grid, rho, seed, 0)
}

/// Path `path_index` of the family keyed by `seed`. Each path draws from its
/// own generator streams, so results do not depend on evaluation order.
pub fn simulate_brownian_path(grid: &Grid, rho: f64, seed: u64, path_index: u64) -> Result<BrownianBundle> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::Config(format!("corr.rho = {rho} must lie in [-1, 1]")));
    }
    let n = grid.steps();
    let sd = grid.dt().sqrt();
    Ok(BrownianBundle {
        grid: *grid,
        rho,
        seed,
        path_index,
        dw: normals(seed, 3 * path_index, sd, n),
        dw_perp: normals(seed, 3 * path_index + 1, sd, n),
        aux: normals(seed, 3 * path_index + 2, 1.0, n),
    })
}

fn cumulative(inc: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(inc.len() + 1);
    let mut acc = 0.0;
    out.push(acc);
    for &v in inc {
        acc += v;
        out.push(acc);
    }
    out
}

impl BrownianBundle {
    /// Builds a bundle from given increments, for deterministic drivers.
    pub fn from_increments(grid: &Grid, rho: f64, dw: Vec<f64>, dw_perp: Vec<f64>) -> Result<Self> {
        if dw.len() != grid.steps() || dw_perp.len() != grid.steps() {
            return Err(Error::Domain("increment vectors must have N entries".into()));
        }
        if !(-1.0..=1.0).contains(&rho) {
            return Err(Error::Config(format!("corr.rho = {rho} must lie in [-1, 1]")));
        }
        let aux = vec![0.0; grid.steps()];
        Ok(Self { grid: *grid, rho, seed: 0, path_index: 0, dw, dw_perp, aux })
    }

    /// Increments of `X`.
    pub fn dx(&self) -> Vec<f64> {
        if self.rho == 1.0 {
            return self.dw.clone();
        }
        let r = (1.0 - self.rho * self.rho).sqrt();
        self.dw.iter().zip(&self.dw_perp).map(|(a, b)| self.rho * a + r * b).collect()
    }

    pub fn w(&self) -> Vec<f64> {
        cumulative(&self.dw)
    }

    pub fn w_perp(&self) -> Vec<f64> {
        cumulative(&self.dw_perp)
    }

    pub fn x(&self) -> Vec<f64> {
        cumulative(&self.dx())
    }

    /// Merges every `factor` cells; the auxiliary normals are combined so
    /// that they stay standard.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        let grid = self.grid.coarsen(factor)?;
        let sum = |v: &[f64]| -> Vec<f64> { v.chunks_exact(factor).map(|c| c.iter().sum()).collect() };
        let scale = (factor as f64).sqrt();
        Ok(Self {
            grid,
            rho: self.rho,
            seed: self.seed,
            path_index: self.path_index,
            dw: sum(&self.dw),
            dw_perp: sum(&self.dw_perp),
            aux: sum(&self.aux).into_iter().map(|v| v / scale).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_correlation_collapses() {
        let g = Grid::new(1.0, 64).unwrap();
        let b = simulate_brownian(&g, 1.0, 4).unwrap();
        assert_eq!(b.x(), b.w());
        assert!(simulate_brownian(&g, 1.5, 4).is_err());
    }

    #[test]
    fn independence_at_zero_correlation() {
        let g = Grid::new(1.0, 100_000).unwrap();
        let b = simulate_brownian(&g, 0.0, 17).unwrap();
        let dx = b.dx();
        let num: f64 = b.dw.iter().zip(&dx).map(|(a, c)| a * c).sum();
        let den = (b.dw.iter().map(|a| a * a).sum::<f64>() * dx.iter().map(|a| a * a).sum::<f64>()).sqrt();
        assert!((num / den).abs() < 0.01);
    }

    #[test]
    fn quadratic_variation_and_reproducibility() {
        let g = Grid::new(1.0, 1 << 14).unwrap();
        let b = simulate_brownian(&g, 0.3, 99).unwrap();
        let qv: f64 = b.dw.iter().map(|v| v * v).sum();
        assert!((0.95..=1.05).contains(&qv), "{qv}");
        let again = simulate_brownian(&g, 0.3, 99).unwrap();
        assert_eq!(b.dw, again.dw);
        assert_eq!(b.aux, again.aux);
        let other = simulate_brownian_path(&g, 0.3, 99, 1).unwrap();
        assert_ne!(b.dw, other.dw);
    }

    #[test]
    fn coarsening_sums_increments() {
        let g = Grid::new(2.0, 8).unwrap();
        let b = simulate_brownian(&g, -0.4, 1).unwrap();
        let c = b.coarsen(4).unwrap();
        assert_eq!(c.grid.steps(), 2);
        assert!((c.w()[2] - b.w()[8]).abs() < 1e-15);
    }
}
