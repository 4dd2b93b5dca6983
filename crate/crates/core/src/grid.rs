use crate::error::{Error, Result};

/// Uniform time grid `t_q = qT/N`, `q = 0..=N`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    horizon: f64,
    steps: usize,
}

impl Grid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if steps < 2 {
            return Err(Error::Config(format!("grid needs at least 2 steps, got {steps}")));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Config(format!("grid horizon must be positive, got {horizon}")));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of cells `N`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of nodes `N + 1`.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn node(&self, q: usize) -> f64 {
        debug_assert!(q <= self.steps);
        if q == self.steps {
            self.horizon
        } else {
            self.horizon * q as f64 / self.steps as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.steps).map(|q| self.node(q)).collect()
    }

    /// Nearest node index to time `t`.
    pub fn nearest(&self, t: f64) -> usize {
        let q = (t / self.dt()).round();
        q.clamp(0.0, self.steps as f64) as usize
    }

    /// Grid with every `factor` consecutive cells merged.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.steps % factor != 0 {
            return Err(Error::Domain(format!(
                "cannot coarsen {} steps by a factor of {factor}",
                self.steps
            )));
        }
        Self::new(self.horizon, self.steps / factor)
    }

    /// Strides `N / 2^k` for every `k` with `2^k | N`, coarsest first, ending
    /// with stride 1. These index the dyadic refinement levels.
    pub fn dyadic_strides(&self) -> Vec<usize> {
        let mut strides = Vec::new();
        let mut s = self.steps;
        loop {
            strides.push(s);
            if s % 2 != 0 {
                break;
            }
            s /= 2;
        }
        if *strides.last().expect("nonempty") != 1 {
            strides.push(1);
        }
        strides
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_are_exact() {
        let g = Grid::new(0.7, 3).unwrap();
        assert_eq!(g.node(0), 0.0);
        assert_eq!(g.node(3), 0.7);
        let nodes = g.nodes();
        assert!(nodes.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(Grid::new(1.0, 1).is_err());
        assert!(Grid::new(0.0, 8).is_err());
        assert!(Grid::new(f64::NAN, 8).is_err());
    }

    #[test]
    fn strides() {
        assert_eq!(Grid::new(1.0, 8).unwrap().dyadic_strides(), vec![8, 4, 2, 1]);
        assert_eq!(Grid::new(1.0, 12).unwrap().dyadic_strides(), vec![12, 6, 3, 1]);
        assert_eq!(Grid::new(1.0, 7).unwrap().dyadic_strides(), vec![7, 1]);
    }

    #[test]
    fn coarsen_requires_divisor() {
        let g = Grid::new(2.0, 12).unwrap();
        assert_eq!(g.coarsen(4).unwrap().steps(), 3);
        assert!(g.coarsen(5).is_err());
    }
}
