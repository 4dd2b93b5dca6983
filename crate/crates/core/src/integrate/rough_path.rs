use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::path::{format_eof, get_f64, get_u64, put_f64, put_u64};

const MAGIC: &[u8; 4] = b"RP1\0";

/// Level-two α-Hölder rough path stored anchored at zero. Two-parameter
/// values follow from additivity and the classical Chen relation:
/// `Y^(1)_st = y1(t) − y1(s)`, `Y^(2)_st = y2(t) − y2(s) − y1(s) ⊗ Y^(1)_st`.
#[derive(Clone, Debug, PartialEq)]
pub struct RoughPath {
    grid: Grid,
    d: usize,
    alpha: f64,
    y1: Vec<f64>,
    y2: Vec<f64>,
}

impl RoughPath {
    pub fn new(grid: Grid, d: usize, alpha: f64, y1: Vec<f64>, y2: Vec<f64>) -> Result<Self> {
        if d == 0 || y1.len() != grid.len() * d || y2.len() != grid.len() * d * d {
            return Err(Error::Domain("rough path arrays have the wrong shape".into()));
        }
        if y1[..d].iter().chain(&y2[..d * d]).any(|&v| v != 0.0) {
            return Err(Error::Domain("rough path must vanish at t = 0".into()));
        }
        Ok(Self { grid, d, alpha, y1, y2 })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Anchored `Y^(1)_{0t}`, node-major.
    pub fn y1(&self) -> &[f64] {
        &self.y1
    }

    /// Anchored `Y^(2)_{0t}`, node-major `d × d` row-major blocks.
    pub fn y2(&self) -> &[f64] {
        &self.y2
    }

    pub fn y1_at(&self, q: usize) -> &[f64] {
        &self.y1[q * self.d..(q + 1) * self.d]
    }

    pub fn y2_at(&self, q: usize) -> &[f64] {
        let dd = self.d * self.d;
        &self.y2[q * dd..(q + 1) * dd]
    }

    /// `(Y^(1)_st, Y^(2)_st)` for nodes `s ≤ t`.
    pub fn increment(&self, s: usize, t: usize) -> (Vec<f64>, Vec<f64>) {
        let d = self.d;
        let (a, b) = (self.y1_at(s), self.y1_at(t));
        let l1: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
        let (p, q) = (self.y2_at(s), self.y2_at(t));
        let mut l2 = vec![0.0; d * d];
        for r in 0..d {
            for c in 0..d {
                l2[r * d + c] = q[r * d + c] - p[r * d + c] - a[r] * l1[c];
            }
        }
        (l1, l2)
    }

    /// Scales level one by `λ` and level two by `λ²`.
    pub fn dilate(&self, lambda: f64) -> Self {
        Self {
            grid: self.grid,
            d: self.d,
            alpha: self.alpha,
            y1: self.y1.iter().map(|v| lambda * v).collect(),
            y2: self.y2.iter().map(|v| lambda * lambda * v).collect(),
        }
    }

    /// Writes the `RP1` binary dump.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        put_u64(&mut w, self.grid.steps() as u64)?;
        put_u64(&mut w, self.d as u64)?;
        put_f64(&mut w, self.alpha)?;
        put_f64(&mut w, self.grid.horizon())?;
        for q in 0..self.grid.len() {
            for &v in self.y1_at(q).iter().chain(self.y2_at(q)) {
                put_f64(&mut w, v)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads an `RP1` binary dump.
    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(format_eof)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic, expected RP1".into()));
        }
        let steps = get_u64(&mut r)? as usize;
        let d = get_u64(&mut r)? as usize;
        let alpha = get_f64(&mut r)?;
        let horizon = get_f64(&mut r)?;
        if d == 0 || d > 64 {
            return Err(Error::Format(format!("implausible dimension d = {d}")));
        }
        let grid = Grid::new(horizon, steps).map_err(|e| Error::Format(e.to_string()))?;
        let mut y1 = Vec::with_capacity(grid.len() * d);
        let mut y2 = Vec::with_capacity(grid.len() * d * d);
        for _ in 0..grid.len() {
            for _ in 0..d {
                y1.push(get_f64(&mut r)?);
            }
            for _ in 0..d * d {
                y2.push(get_f64(&mut r)?);
            }
        }
        Self::new(grid, d, alpha, y1, y2).map_err(|e| Error::Format(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chen_and_round_trip() {
        let grid = Grid::new(1.0, 4).unwrap();
        let y1 = vec![0.0, 0.5, -0.2, 0.1, 0.9];
        let y2 = vec![0.0, 0.3, 0.1, -0.4, 0.2];
        let y = RoughPath::new(grid, 1, 0.45, y1, y2).unwrap();
        let (a1, a2) = y.increment(1, 2);
        let (b1, b2) = y.increment(2, 4);
        let (c1, c2) = y.increment(1, 4);
        assert!((c1[0] - a1[0] - b1[0]).abs() < 1e-15);
        assert!((c2[0] - a2[0] - b2[0] - a1[0] * b1[0]).abs() < 1e-15);

        let mut buf = Vec::new();
        y.write_to(&mut buf).unwrap();
        assert_eq!(RoughPath::read_from(&buf[..]).unwrap(), y);
        assert!(RoughPath::read_from(&buf[..10]).is_err());
    }
}
