//! The partial rough path container.
//!
//! Values are stored anchored at time zero on a uniform grid: `x̂_t = X̂_{0t}`,
//! `a_i(t) = X^(i)_{0t}` and `b_jk(t) = 𝐗^(jk)_{0t}`. Two-parameter values at
//! an arbitrary node pair `(s, t)` are recovered from the modified Chen
//! relations at the triple `(0, s, t)`:
//!
//! ```text
//! X^(i)_st   = a_i(t) − a_i(s) − Σ_{p<i} x̂_s^{i−p}/(i−p)! · X^(p)_st
//! 𝐗^(jk)_st  = b_jk(t) − b_jk(s) − Σ_{q≤k} x̂_s^{k−q}/(k−q)! · a_j(s) ⊗ X^(q)_st
//!              − Σ_{(p,q)<(j,k)} x̂_s^{j+k−p−q}/((j−p)!(k−q)!) · 𝐗^(pq)_st
//! ```
//!
//! Lower indices are solved first, so every query costs one pass over `I`
//! and `J`.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::index::{IndexConfig, MultiIndex, Powers};
use crate::quadrature::gauss_legendre_on;

const MAGIC: &[u8; 4] = b"PRP1";

/// Anchored samples of an (α, β) rough path on a uniform grid.
#[derive(Clone, Debug)]
pub struct PartialRoughPath {
    config: IndexConfig,
    grid: Grid,
    xhat: Vec<f64>,
    level1: Vec<f64>,
    level2: Vec<f64>,
}

/// All two-parameter values of a path over one pair `(s, t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Increments {
    /// `X̂_st`, length `e`.
    pub xhat: Vec<f64>,
    /// `X^(i)_st` for `i ∈ I` in index order, `|I| × d`.
    pub level1: Vec<f64>,
    /// `𝐗^(jk)_st` for `(j, k) ∈ J` in index order, `|J| × d × d` row-major.
    pub level2: Vec<f64>,
}

impl PartialRoughPath {
    /// Wraps node-major anchored arrays, checking shapes and the zero start.
    pub fn from_anchored(
        config: IndexConfig,
        grid: Grid,
        xhat: Vec<f64>,
        level1: Vec<f64>,
        level2: Vec<f64>,
    ) -> Result<Self> {
        let nodes = grid.len();
        let (e, d) = (config.e, config.d);
        let l1 = config.level1().len() * d;
        let l2 = config.level2().len() * d * d;
        if xhat.len() != nodes * e || level1.len() != nodes * l1 || level2.len() != nodes * l2 {
            return Err(Error::Domain(format!(
                "anchored arrays have lengths ({}, {}, {}), expected ({}, {}, {})",
                xhat.len(),
                level1.len(),
                level2.len(),
                nodes * e,
                nodes * l1,
                nodes * l2
            )));
        }
        if xhat[..e].iter().chain(&level1[..l1]).chain(&level2[..l2]).any(|&v| v != 0.0) {
            return Err(Error::Domain("anchored path must vanish at t = 0".into()));
        }
        if xhat.iter().chain(&level1).chain(&level2).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("anchored path contains non-finite values".into()));
        }
        let config = config.with_horizon(grid.horizon());
        Ok(Self { config, grid, xhat, level1, level2 })
    }

    /// Exact iterated integrals of the cellwise model in which `X̂` is frozen
    /// at the left node of each cell. `xhat_nodes` holds `X̂_{0 t_q}` for all
    /// nodes (`(N+1) × e`), `dx` the increments `ΔX_q` (`N × d`). When
    /// `area` is given (`N × d × d`), it is the second-level increment of `X`
    /// over each cell; otherwise that term is zero and `𝐗` reduces to the
    /// strict left-point double sum.
    pub fn from_cellwise(
        config: IndexConfig,
        grid: Grid,
        xhat_nodes: &[f64],
        dx: &[f64],
        area: Option<&[f64]>,
    ) -> Result<Self> {
        let (e, d) = (config.e, config.d);
        let steps = grid.steps();
        if xhat_nodes.len() != grid.len() * e || dx.len() != steps * d {
            return Err(Error::Domain("cellwise input has the wrong shape".into()));
        }
        if let Some(a) = area {
            if a.len() != steps * d * d {
                return Err(Error::Domain("cell area input has the wrong shape".into()));
            }
        }
        let base: Vec<f64> = xhat_nodes[..e].to_vec();
        let xhat: Vec<f64> = xhat_nodes
            .chunks_exact(e)
            .flat_map(|x| x.iter().zip(&base).map(|(v, b)| v - b).collect::<Vec<_>>())
            .collect();

        let ni = config.level1().len();
        let nj = config.level2().len();
        let (l1, l2) = (ni * d, nj * d * d);
        let mut level1 = vec![0.0; grid.len() * l1];
        let mut level2 = vec![0.0; grid.len() * l2];
        let fact1: Vec<f64> = config.level1().iter().map(|i| 1.0 / i.factorial()).collect();
        let max_power = config.n();
        let mut weights = vec![0.0; ni];

        for q in 0..steps {
            let pw = Powers::new(&xhat[q * e..(q + 1) * e], max_power);
            for (w, (i, f)) in weights.iter_mut().zip(config.level1().iter().zip(&fact1)) {
                *w = f * pw.monomial(i);
            }
            let dxq = &dx[q * d..(q + 1) * d];
            let (head, tail) = level1.split_at_mut((q + 1) * l1);
            let prev1 = &head[q * l1..];
            let next1 = &mut tail[..l1];
            for p in 0..ni {
                for c in 0..d {
                    next1[p * d + c] = prev1[p * d + c] + weights[p] * dxq[c];
                }
            }

            let (head, tail) = level2.split_at_mut((q + 1) * l2);
            let prev2 = &head[q * l2..];
            let next2 = &mut tail[..l2];
            let aq = area.map(|a| &a[q * d * d..(q + 1) * d * d]);
            for (pos, (j, k)) in config.level2().iter().enumerate() {
                let (pj, pk) = config.pair_parts(pos);
                let wk = weights[pk];
                let wjk = fact1[pj] * fact1[pk] * pw.monomial(&j.add(k));
                let aj = &prev1[pj * d..(pj + 1) * d];
                let base = pos * d * d;
                for r in 0..d {
                    for c in 0..d {
                        let mut inc = wk * aj[r] * dxq[c];
                        if let Some(a) = aq {
                            inc += wjk * a[r * d + c];
                        }
                        next2[base + r * d + c] = prev2[base + r * d + c] + inc;
                    }
                }
            }
        }
        Self::from_anchored(config, grid, xhat, level1, level2)
    }

    /// Iterated integrals of smooth paths by per-cell Gauss–Legendre
    /// quadrature of order `order` (nested for the second level). `xhat`
    /// gives `X̂_t` (re-anchored at zero), `xdot` the derivative of `X`.
    pub fn from_smooth<F, G>(config: IndexConfig, grid: Grid, xhat: F, xdot: G, order: usize) -> Result<Self>
    where
        F: Fn(f64) -> Vec<f64>,
        G: Fn(f64) -> Vec<f64>,
    {
        let (e, d) = (config.e, config.d);
        let ni = config.level1().len();
        let nj = config.level2().len();
        let (l1, l2) = (ni * d, nj * d * d);
        let nodes = grid.len();
        let origin = xhat(0.0);
        let anchored = |t: f64| -> Vec<f64> { xhat(t).iter().zip(&origin).map(|(v, o)| v - o).collect() };
        let fact1: Vec<f64> = config.level1().iter().map(|i| 1.0 / i.factorial()).collect();

        // Integrand of every level-one component at r: (1/i!) x̂_r^i ẋ_r.
        let integrand1 = |r: f64, out: &mut [f64]| {
            let pw = Powers::new(&anchored(r), config.n());
            let v = xdot(r);
            for (p, i) in config.level1().iter().enumerate() {
                let w = fact1[p] * pw.monomial(i);
                for c in 0..d {
                    out[p * d + c] = w * v[c];
                }
            }
        };

        let mut xs = vec![0.0; nodes * e];
        let mut level1 = vec![0.0; nodes * l1];
        let mut level2 = vec![0.0; nodes * l2];
        let mut buf = vec![0.0; l1];
        let mut a_r = vec![0.0; l1];
        for q in 0..grid.steps() {
            let (t0, t1) = (grid.node(q), grid.node(q + 1));
            xs[(q + 1) * e..(q + 2) * e].copy_from_slice(&anchored(t1));
            let (outer_x, outer_w) = gauss_legendre_on(order, t0, t1);
            let mut inc1 = vec![0.0; l1];
            let mut inc2 = vec![0.0; l2];
            for (&r, &w) in outer_x.iter().zip(&outer_w) {
                integrand1(r, &mut buf);
                for (acc, v) in inc1.iter_mut().zip(&buf) {
                    *acc += w * v;
                }
                // a_j(r) from the inner rule on [t0, r].
                a_r.copy_from_slice(&level1[q * l1..(q + 1) * l1]);
                let (inner_x, inner_w) = gauss_legendre_on(order, t0, r);
                for (&u, &wu) in inner_x.iter().zip(&inner_w) {
                    integrand1(u, &mut buf);
                    for (acc, v) in a_r.iter_mut().zip(&buf) {
                        *acc += wu * v;
                    }
                }
                let pw = Powers::new(&anchored(r), config.n());
                let v = xdot(r);
                for (pos, (_, k)) in config.level2().iter().enumerate() {
                    let (pj, pk) = config.pair_parts(pos);
                    let wk = w * fact1[pk] * pw.monomial(k);
                    for row in 0..d {
                        for col in 0..d {
                            inc2[pos * d * d + row * d + col] += wk * a_r[pj * d + row] * v[col];
                        }
                    }
                }
            }
            for idx in 0..l1 {
                level1[(q + 1) * l1 + idx] = level1[q * l1 + idx] + inc1[idx];
            }
            for idx in 0..l2 {
                level2[(q + 1) * l2 + idx] = level2[q * l2 + idx] + inc2[idx];
            }
        }
        Self::from_anchored(config, grid, xs, level1, level2)
    }

    pub fn config(&self) -> &IndexConfig {
        &self.config
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Node-major anchored `x̂`, `(N+1) × e`.
    pub fn xhat_raw(&self) -> &[f64] {
        &self.xhat
    }

    /// Node-major anchored level-one values, `(N+1) × |I| × d`.
    pub fn level1_raw(&self) -> &[f64] {
        &self.level1
    }

    /// Node-major anchored level-two values, `(N+1) × |J| × d × d`.
    pub fn level2_raw(&self) -> &[f64] {
        &self.level2
    }

    /// `x̂` at node `q`.
    pub fn xhat_at(&self, q: usize) -> &[f64] {
        let e = self.config.e;
        &self.xhat[q * e..(q + 1) * e]
    }

    /// All anchored level-one values at node `q`, `|I| × d`.
    pub fn level1_at(&self, q: usize) -> &[f64] {
        let l1 = self.config.level1().len() * self.config.d;
        &self.level1[q * l1..(q + 1) * l1]
    }

    /// All anchored level-two values at node `q`, `|J| × d × d`.
    pub fn level2_at(&self, q: usize) -> &[f64] {
        let l2 = self.config.level2().len() * self.config.d * self.config.d;
        &self.level2[q * l2..(q + 1) * l2]
    }

    fn check_pair(&self, s: usize, t: usize) -> Result<()> {
        if s > t {
            return Err(Error::Domain(format!("s = {s} exceeds t = {t}")));
        }
        if t > self.grid.steps() {
            return Err(Error::Domain(format!("node {t} is outside the grid")));
        }
        Ok(())
    }

    /// Level-one values `X^(i)_st` for all `i ∈ I`, written into `out`
    /// (`|I| × d`). Nodes are not range-checked.
    pub(crate) fn level1_into(&self, s: usize, t: usize, out: &mut [f64]) {
        let d = self.config.d;
        let (as_, at) = (self.level1_at(s), self.level1_at(t));
        let pw = Powers::new(self.xhat_at(s), self.config.n());
        for pos in 0..self.config.level1().len() {
            for c in 0..d {
                out[pos * d + c] = at[pos * d + c] - as_[pos * d + c];
            }
            for term in self.config.level1_terms(pos) {
                let w = term.coef * pw.monomial(&term.exponent);
                for c in 0..d {
                    out[pos * d + c] -= w * out[term.p * d + c];
                }
            }
        }
    }

    /// Level-two values for all `(j, k) ∈ J` given the level-one values
    /// `lvl1` over the same pair.
    pub(crate) fn level2_into(&self, s: usize, t: usize, lvl1: &[f64], out: &mut [f64]) {
        let d = self.config.d;
        let dd = d * d;
        let (bs, bt) = (self.level2_at(s), self.level2_at(t));
        let a_s = self.level1_at(s);
        let pw = Powers::new(self.xhat_at(s), self.config.m().max(1));
        for pos in 0..self.config.level2().len() {
            for idx in 0..dd {
                out[pos * dd + idx] = bt[pos * dd + idx] - bs[pos * dd + idx];
            }
            for term in self.config.cross_terms(pos) {
                let w = term.coef * pw.monomial(&term.exponent);
                let aj = &a_s[term.j * d..(term.j + 1) * d];
                let xq = &lvl1[term.q * d..(term.q + 1) * d];
                for r in 0..d {
                    for c in 0..d {
                        out[pos * dd + r * d + c] -= w * aj[r] * xq[c];
                    }
                }
            }
            for term in self.config.level2_terms(pos) {
                let w = term.coef * pw.monomial(&term.exponent);
                for idx in 0..dd {
                    out[pos * dd + idx] -= w * out[term.pq * dd + idx];
                }
            }
        }
    }

    /// Every component of the path over the node pair `(s, t)`.
    pub fn increments(&self, s: usize, t: usize) -> Result<Increments> {
        self.check_pair(s, t)?;
        let d = self.config.d;
        let mut level1 = vec![0.0; self.config.level1().len() * d];
        let mut level2 = vec![0.0; self.config.level2().len() * d * d];
        self.level1_into(s, t, &mut level1);
        self.level2_into(s, t, &level1, &mut level2);
        let xhat = self.xhat_at(t).iter().zip(self.xhat_at(s)).map(|(a, b)| a - b).collect();
        Ok(Increments { xhat, level1, level2 })
    }

    /// `X^(i)_st` for nodes `s ≤ t`.
    pub fn reconstruct_level1(&self, i: &MultiIndex, s: usize, t: usize) -> Result<Vec<f64>> {
        let pos = self.config.position(i)?;
        self.check_pair(s, t)?;
        let d = self.config.d;
        let mut out = vec![0.0; self.config.level1().len() * d];
        self.level1_into(s, t, &mut out);
        Ok(out[pos * d..(pos + 1) * d].to_vec())
    }

    /// `𝐗^(jk)_st` for nodes `s ≤ t`, row-major `d × d`.
    pub fn reconstruct_level2(&self, j: &MultiIndex, k: &MultiIndex, s: usize, t: usize) -> Result<Vec<f64>> {
        let pos = self.config.pair_position(j, k)?;
        let inc = self.increments(s, t)?;
        let dd = self.config.d * self.config.d;
        Ok(inc.level2[pos * dd..(pos + 1) * dd].to_vec())
    }

    /// The dilation `X̂ → λX̂`, `X^(i) → λ^{|i|+1}X^(i)`,
    /// `𝐗^(jk) → λ^{|j+k|+2}𝐗^(jk)`.
    pub fn dilate(&self, lambda: f64) -> Self {
        let d = self.config.d;
        let s1: Vec<f64> = self.config.level1().iter().map(|i| lambda.powi(i.total() as i32 + 1)).collect();
        let s2: Vec<f64> = self
            .config
            .level2()
            .iter()
            .map(|(j, k)| lambda.powi((j.total() + k.total()) as i32 + 2))
            .collect();
        let l1 = s1.len() * d;
        let l2 = s2.len() * d * d;
        let level1 = self
            .level1
            .iter()
            .enumerate()
            .map(|(n, v)| v * s1[(n % l1) / d])
            .collect();
        let level2 = self
            .level2
            .iter()
            .enumerate()
            .map(|(n, v)| v * s2[(n % l2) / (d * d)])
            .collect();
        Self {
            config: self.config.clone(),
            grid: self.grid,
            xhat: self.xhat.iter().map(|v| v * lambda).collect(),
            level1,
            level2,
        }
    }

    /// Same path with the anchored value of `level1[pos]` at node `q` shifted
    /// by `delta` in every coordinate. Used to exercise defect diagnostics.
    pub fn perturb_level1(&self, q: usize, pos: usize, delta: f64) -> Self {
        let d = self.config.d;
        let l1 = self.config.level1().len() * d;
        let mut out = self.clone();
        for c in 0..d {
            out.level1[q * l1 + pos * d + c] += delta;
        }
        out
    }

    /// Same grid, index sets and dimensions.
    pub fn compatible(&self, other: &Self) -> bool {
        self.grid == other.grid && self.config.compatible(&other.config)
    }

    /// Writes the `PRP1` binary dump.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let c = &self.config;
        w.write_all(MAGIC)?;
        put_u64(&mut w, self.grid.steps() as u64)?;
        put_u64(&mut w, c.d as u64)?;
        put_u64(&mut w, c.e as u64)?;
        put_f64(&mut w, c.alpha)?;
        put_f64(&mut w, c.beta)?;
        put_f64(&mut w, self.grid.horizon())?;
        put_u64(&mut w, c.level1().len() as u64)?;
        for i in c.level1() {
            for &v in i.entries() {
                put_u64(&mut w, u64::from(v))?;
            }
        }
        put_u64(&mut w, c.level2().len() as u64)?;
        for (j, k) in c.level2() {
            for &v in j.entries().iter().chain(k.entries()) {
                put_u64(&mut w, u64::from(v))?;
            }
        }
        for q in 0..self.grid.len() {
            for &v in self.xhat_at(q).iter().chain(self.level1_at(q)).chain(self.level2_at(q)) {
                put_f64(&mut w, v)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a `PRP1` binary dump.
    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(format_eof)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic, expected PRP1".into()));
        }
        let steps = get_u64(&mut r)? as usize;
        let d = get_u64(&mut r)? as usize;
        let e = get_u64(&mut r)? as usize;
        let alpha = get_f64(&mut r)?;
        let beta = get_f64(&mut r)?;
        let horizon = get_f64(&mut r)?;
        if d == 0 || e == 0 || e > 64 || d > 64 {
            return Err(Error::Format(format!("implausible dimensions d = {d}, e = {e}")));
        }
        let config = IndexConfig::new(alpha, beta, e)
            .map_err(|err| Error::Format(format!("header exponents rejected: {err}")))?
            .with_dim(d);
        let grid = Grid::new(horizon, steps).map_err(|err| Error::Format(format!("header grid rejected: {err}")))?;

        let ni = get_u64(&mut r)? as usize;
        if ni != config.level1().len() {
            return Err(Error::Format(format!("|I| = {ni} does not match the exponents")));
        }
        for i in config.level1() {
            for &v in i.entries() {
                if get_u64(&mut r)? != u64::from(v) {
                    return Err(Error::Format("level-one index list does not match".into()));
                }
            }
        }
        let nj = get_u64(&mut r)? as usize;
        if nj != config.level2().len() {
            return Err(Error::Format(format!("|J| = {nj} does not match the exponents")));
        }
        for (j, k) in config.level2() {
            for &v in j.entries().iter().chain(k.entries()) {
                if get_u64(&mut r)? != u64::from(v) {
                    return Err(Error::Format("level-two index list does not match".into()));
                }
            }
        }
        let (l1, l2) = (ni * d, nj * d * d);
        let mut xhat = Vec::with_capacity(grid.len() * e);
        let mut level1 = Vec::with_capacity(grid.len() * l1);
        let mut level2 = Vec::with_capacity(grid.len() * l2);
        for _ in 0..grid.len() {
            for _ in 0..e {
                xhat.push(get_f64(&mut r)?);
            }
            for _ in 0..l1 {
                level1.push(get_f64(&mut r)?);
            }
            for _ in 0..l2 {
                level2.push(get_f64(&mut r)?);
            }
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after PRP1 payload".into()));
        }
        Self::from_anchored(config, grid, xhat, level1, level2).map_err(|err| Error::Format(err.to_string()))
    }
}

pub(crate) fn put_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn put_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn format_eof(err: std::io::Error) -> Error {
    if err.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("truncated file".into())
    } else {
        Error::Io(err)
    }
}

pub(crate) fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(format_eof)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn get_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(format_eof)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mi(v: &[u32]) -> MultiIndex {
        MultiIndex::new(v.to_vec()).unwrap()
    }

    fn random_path(alpha: f64, beta: f64, e: usize, d: usize, steps: usize, seed: u64, area: bool) -> PartialRoughPath {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = IndexConfig::new(alpha, beta, e).unwrap().with_dim(d);
        let grid = Grid::new(1.0, steps).unwrap();
        let mut xhat = vec![0.0; grid.len() * e];
        for q in 1..grid.len() {
            for l in 0..e {
                xhat[q * e + l] = xhat[(q - 1) * e + l] + rng.random_range(-0.5..0.5);
            }
        }
        let dx: Vec<f64> = (0..steps * d).map(|_| rng.random_range(-0.3..0.3)).collect();
        let ar: Vec<f64> = (0..steps * d * d).map(|_| rng.random_range(-0.1..0.1)).collect();
        PartialRoughPath::from_cellwise(cfg, grid, &xhat, &dx, area.then_some(&ar[..])).unwrap()
    }

    // Direct left-point sum (1/i!) Σ_{r∈[s,t)} (x̂_r − x̂_s)^i ΔX_r.
    fn brute_level1(p: &PartialRoughPath, i: &MultiIndex, s: usize, t: usize) -> Vec<f64> {
        let d = p.config().d;
        let dx = |r: usize| -> Vec<f64> {
            let a = p.level1_at(r + 1);
            let b = p.level1_at(r);
            (0..d).map(|c| a[c] - b[c]).collect()
        };
        let mut out = vec![0.0; d];
        for r in s..t {
            let diff: Vec<f64> = p.xhat_at(r).iter().zip(p.xhat_at(s)).map(|(a, b)| a - b).collect();
            let w = i.monomial(&diff) / i.factorial();
            for (o, v) in out.iter_mut().zip(dx(r)) {
                *o += w * v;
            }
        }
        out
    }

    #[test]
    fn reconstruction_matches_direct_sums() {
        let p = random_path(0.35, 0.08, 2, 2, 8, 3, false);
        for s in 0..=8 {
            for t in s..=8 {
                for i in p.config().level1() {
                    let got = p.reconstruct_level1(i, s, t).unwrap();
                    let want = brute_level1(&p, i, s, t);
                    for (g, w) in got.iter().zip(&want) {
                        assert!((g - w).abs() <= 1e-12 * (1.0 + w.abs()), "{i} ({s},{t}) {g} vs {w}");
                    }
                }
            }
        }
    }

    #[test]
    fn round_trip_and_degenerate_pairs() {
        let p = random_path(0.4, 0.2, 1, 1, 16, 5, true);
        for t in 0..=16 {
            for (pos, i) in p.config().level1().iter().enumerate() {
                assert_eq!(p.reconstruct_level1(i, 0, t).unwrap()[0], p.level1_at(t)[pos]);
                assert_eq!(p.reconstruct_level1(i, t, t).unwrap()[0], 0.0);
            }
        }
        let z = mi(&[0]);
        assert!(p.reconstruct_level2(&z, &z, 7, 7).unwrap().iter().all(|&v| v == 0.0));
        assert!(matches!(p.reconstruct_level1(&z, 5, 3), Err(Error::Domain(_))));
        assert!(matches!(p.reconstruct_level1(&mi(&[9]), 0, 3), Err(Error::Index(_))));
    }

    #[test]
    fn zero_zero_level_two_single_chen_term() {
        let p = random_path(0.45, 0.2, 1, 2, 12, 9, true);
        let z = mi(&[0]);
        let (s, t) = (4, 11);
        let got = p.reconstruct_level2(&z, &z, s, t).unwrap();
        let x0s = p.reconstruct_level1(&z, 0, s).unwrap();
        let x0st = p.reconstruct_level1(&z, s, t).unwrap();
        let (bs, bt) = (p.level2_at(s), p.level2_at(t));
        for r in 0..2 {
            for c in 0..2 {
                let want = bt[r * 2 + c] - bs[r * 2 + c] - x0s[r] * x0st[c];
                assert!((got[r * 2 + c] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn dilation_scales_components() {
        let p = random_path(0.4, 0.15, 2, 1, 8, 1, true);
        let q = p.dilate(2.0);
        let inc_p = p.increments(2, 7).unwrap();
        let inc_q = q.increments(2, 7).unwrap();
        for (pos, i) in p.config().level1().iter().enumerate() {
            let f = 2f64.powi(i.total() as i32 + 1);
            assert!((inc_q.level1[pos] - f * inc_p.level1[pos]).abs() < 1e-12 * (1.0 + inc_q.level1[pos].abs()));
        }
    }

    #[test]
    fn binary_round_trip() {
        let p = random_path(0.35, 0.08, 2, 2, 6, 11, true);
        let mut buf = Vec::new();
        p.write_to(&mut buf).unwrap();
        let q = PartialRoughPath::read_from(&buf[..]).unwrap();
        assert_eq!(p.level1_raw(), q.level1_raw());
        assert_eq!(p.level2_raw(), q.level2_raw());
        assert_eq!(p.xhat_raw(), q.xhat_raw());

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(PartialRoughPath::read_from(&bad[..]), Err(Error::Format(_))));
        assert!(matches!(PartialRoughPath::read_from(&buf[..buf.len() - 3]), Err(Error::Format(_))));
    }

    #[test]
    fn smooth_lift_of_linear_paths() {
        // x̂_t = t, X_t = t: X^(i)_{0t} = t^{i+1}/(i+1)!, 𝐗^(00)_{0t} = t²/2.
        let cfg = IndexConfig::new(0.45, 0.2, 1).unwrap();
        let grid = Grid::new(1.0, 10).unwrap();
        let p = PartialRoughPath::from_smooth(cfg, grid, |t| vec![t], |_| vec![1.0], 6).unwrap();
        for (pos, i) in p.config().level1().iter().enumerate() {
            let k = i.total() as i32;
            let want = 1.0 / crate::index::factorial(k as u32 + 1);
            assert!((p.level1_at(10)[pos] - want).abs() < 1e-14);
        }
        assert!((p.level2_at(10)[0] - 0.5).abs() < 1e-14);
    }
}
