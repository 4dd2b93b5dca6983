use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::rough_path::RoughPath;
use super::volfn::VolFunction;
use crate::error::{Error, Result};
use crate::index::MultiIndex;
use crate::path::PartialRoughPath;

/// Default relative Cauchy tolerance of the refinement loop.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    CauchyTol,
    FinestGrid,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::CauchyTol => "cauchy_tol",
            StopReason::FinestGrid => "finest_grid",
        }
    }
}

/// Refinement history of one level of the integral.
#[derive(Clone, Debug, Serialize)]
pub struct LevelTrace {
    /// Refinement levels `k` (mesh `T / 2^k`).
    pub levels: Vec<u32>,
    /// Cells of `P_k`.
    pub cells: Vec<usize>,
    /// `J(P_k)`: first component of `Y^(1)_{0T}` or `Y^(2)_{0T}`.
    pub values: Vec<f64>,
    /// `|J(P_k) − J(P_{k−1})|` for `k ≥ 1`.
    pub differences: Vec<f64>,
    pub stop: StopReason,
    /// Level whose values are returned.
    pub accepted_level: u32,
    /// Differences failed to decrease over the last three levels of a run
    /// that reached the finest grid.
    pub warning: Option<String>,
}

/// Refinement history of both levels.
#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceTrace {
    pub level1: LevelTrace,
    pub level2: LevelTrace,
    pub tol: f64,
}

impl ConvergenceTrace {
    pub fn warnings(&self) -> impl Iterator<Item = &str> {
        self.level1.warning.iter().chain(&self.level2.warning).map(String::as_str)
    }

    /// CSV with one row per refinement level and integral level.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "level,k,cells,value,difference,stop")?;
        for (name, t) in [("1", &self.level1), ("2", &self.level2)] {
            for (idx, &k) in t.levels.iter().enumerate() {
                let diff = if idx == 0 { String::new() } else { format!("{:e}", t.differences[idx - 1]) };
                let stop = if idx + 1 == t.levels.len() { t.stop.name() } else { "" };
                writeln!(w, "{name},{k},{},{:e},{diff},{stop}", t.cells[idx], t.values[idx])?;
            }
        }
        Ok(())
    }
}

/// `∂^i f(x̂_q)` for all nodes and all `i ∈ I`, node-major.
fn partial_table(prp: &PartialRoughPath, f: &VolFunction) -> Vec<f64> {
    let cfg = prp.config();
    let ni = cfg.level1().len();
    let mut table = vec![0.0; prp.grid().len() * ni];
    table.par_chunks_mut(ni).enumerate().for_each(|(q, out)| {
        f.partials_into(cfg, prp.xhat_at(q), out);
    });
    table
}

fn check_partition(prp: &PartialRoughPath, partition: &[usize], s: usize, t: usize) -> Result<()> {
    if s > t || t > prp.grid().steps() {
        return Err(Error::Domain(format!("invalid interval [{s}, {t}]")));
    }
    if partition.first() != Some(&s) || partition.last() != Some(&t) {
        return Err(Error::Domain("partition must start at s and end at t".into()));
    }
    if partition.windows(2).any(|w| w[0] >= w[1]) && s != t {
        return Err(Error::Domain("partition nodes must be strictly increasing".into()));
    }
    Ok(())
}

/// `Σ_p Σ_{i∈I} ∂^i f(x̂_{u_{p−1}}) X^(i)_{u_{p−1} u_p}` over a partition
/// `s = u_0 < … < u_k = t` of grid nodes, with the `i = 0` term summed by
/// parts.
pub fn compensated_sum_level1(
    prp: &PartialRoughPath,
    f: &VolFunction,
    partition: &[usize],
    s: usize,
    t: usize,
) -> Result<Vec<f64>> {
    check_partition(prp, partition, s, t)?;
    let cfg = prp.config();
    let (d, ni) = (cfg.d, cfg.level1().len());
    let setup = Setup::new(prp, f)?;
    let zero = setup.zero;
    let a0 = |q: usize, c: usize| setup.a0(q)[c] - setup.a0(s)[c];
    let mut rest = vec![0.0; d];
    let mut abel = vec![0.0; d];
    let mut x1 = vec![0.0; ni * d];
    for w in partition.windows(2) {
        prp.level1_into(w[0], w[1], &mut x1);
        let df = setup.df(w[0]);
        for pos in (0..ni).filter(|&p| p != zero) {
            for c in 0..d {
                rest[c] += df[pos] * x1[pos * d + c];
            }
        }
        let jump = setup.df(w[1])[zero] - df[zero];
        for c in 0..d {
            abel[c] += a0(w[1], c) * jump;
        }
    }
    let f_end = setup.df(t)[zero];
    Ok((0..d).map(|c| f_end * a0(t, c) - abel[c] + rest[c]).collect())
}

/// `Σ_p [Y^(1)_{s u_{p−1}} ⊗ Y^(1)_{u_{p−1} u_p} + Σ_{(j,k)∈J} ∂^j f ∂^k f(x̂_{u_{p−1}})
/// 𝐗^(jk)_{u_{p−1} u_p}]`, with `Y^(1)` read from the anchored level-one
/// integral `y1_fine` (`(N + 1) × d`).
pub fn compensated_sum_level2(
    prp: &PartialRoughPath,
    f: &VolFunction,
    partition: &[usize],
    s: usize,
    t: usize,
    y1_fine: &[f64],
) -> Result<Vec<f64>> {
    check_partition(prp, partition, s, t)?;
    let cfg = prp.config();
    let d = cfg.d;
    if y1_fine.len() != prp.grid().len() * d {
        return Err(Error::Domain("y1_fine has the wrong length".into()));
    }
    let (ni, nj) = (cfg.level1().len(), cfg.level2().len());
    let mut out = vec![0.0; d * d];
    let mut x1 = vec![0.0; ni * d];
    let mut x2 = vec![0.0; nj * d * d];
    let mut df = vec![0.0; ni];
    for w in partition.windows(2) {
        let (a, b) = (w[0], w[1]);
        prp.level1_into(a, b, &mut x1);
        prp.level2_into(a, b, &x1, &mut x2);
        f.partials_into(cfg, prp.xhat_at(a), &mut df);
        for r in 0..d {
            let left = y1_fine[a * d + r] - y1_fine[s * d + r];
            for c in 0..d {
                out[r * d + c] += left * (y1_fine[b * d + c] - y1_fine[a * d + c]);
            }
        }
        add_area(cfg, &df, &x2, d, &mut out);
    }
    Ok(out)
}

fn add_area(cfg: &crate::index::IndexConfig, df: &[f64], x2: &[f64], d: usize, out: &mut [f64]) {
    let dd = d * d;
    for pos in 0..cfg.level2().len() {
        let (pj, pk) = cfg.pair_parts(pos);
        let w = df[pj] * df[pk];
        if w != 0.0 {
            for idx in 0..dd {
                out[idx] += w * x2[pos * dd + idx];
            }
        }
    }
}

/// Partial table plus the position of the zero index.
struct Setup<'a> {
    prp: &'a PartialRoughPath,
    df: Vec<f64>,
    zero: usize,
    ni: usize,
    d: usize,
}

impl<'a> Setup<'a> {
    fn new(prp: &'a PartialRoughPath, f: &VolFunction) -> Result<Self> {
        let cfg = prp.config();
        let zero = cfg.position(&MultiIndex::zero(cfg.e))?;
        Ok(Self { prp, df: partial_table(prp, f), zero, ni: cfg.level1().len(), d: cfg.d })
    }

    fn df(&self, q: usize) -> &[f64] {
        &self.df[q * self.ni..(q + 1) * self.ni]
    }

    /// `X^(0)` anchored at node `q`.
    fn a0(&self, q: usize) -> &[f64] {
        &self.prp.level1_at(q)[self.zero * self.d..(self.zero + 1) * self.d]
    }

    /// `Σ_{i≠0} ∂^i f(x̂_a) X^(i)_{ab}` and the Abel weight
    /// `a0(b) (f(x̂_b) − f(x̂_a))` of one cell.
    fn cell1(&self, a: usize, b: usize, x1: &mut [f64], rest: &mut [f64], abel: &mut [f64]) {
        let d = self.d;
        self.prp.level1_into(a, b, x1);
        let df = self.df(a);
        rest.fill(0.0);
        for pos in (0..self.ni).filter(|&p| p != self.zero) {
            for c in 0..d {
                rest[c] += df[pos] * x1[pos * d + c];
            }
        }
        let jump = self.df(b)[self.zero] - df[self.zero];
        for (o, v) in abel.iter_mut().zip(self.a0(b)) {
            *o = v * jump;
        }
    }

    /// Per-cell contributions `(rest, abel)` over `[pS, (p+1)S]`, reduced in
    /// cell order.
    fn coarse_cells1(&self, stride: usize) -> Vec<f64> {
        let d = self.d;
        let cells = self.prp.grid().steps() / stride;
        let mut buf = vec![0.0; cells * 2 * d];
        buf.par_chunks_mut(2 * d).enumerate().for_each_init(
            || vec![0.0; self.ni * d],
            |x1, (p, chunk)| {
                let (rest, abel) = chunk.split_at_mut(d);
                self.cell1(p * stride, (p + 1) * stride, x1, rest, abel);
            },
        );
        buf
    }

    /// Level-one value over `[0, T]` on the partition of stride `stride`.
    fn total1(&self, stride: usize) -> Vec<f64> {
        let d = self.d;
        let buf = self.coarse_cells1(stride);
        let n = self.prp.grid().steps();
        let f_end = self.df(n)[self.zero];
        let mut rest = vec![0.0; d];
        let mut abel = vec![0.0; d];
        for chunk in buf.chunks(2 * d) {
            for c in 0..d {
                rest[c] += chunk[c];
                abel[c] += chunk[d + c];
            }
        }
        (0..d).map(|c| f_end * self.a0(n)[c] - abel[c] + rest[c]).collect()
    }

    /// Anchored level-one integral at every node for stride `stride`.
    fn anchored1(&self, stride: usize) -> Vec<f64> {
        let d = self.d;
        let n = self.prp.grid().steps();
        let buf = self.coarse_cells1(stride);
        // Running sums at the coarse nodes.
        let cells = n / stride;
        let mut rest_at = vec![0.0; (cells + 1) * d];
        let mut abel_at = vec![0.0; (cells + 1) * d];
        for p in 0..cells {
            for c in 0..d {
                rest_at[(p + 1) * d + c] = rest_at[p * d + c] + buf[p * 2 * d + c];
                abel_at[(p + 1) * d + c] = abel_at[p * d + c] + buf[p * 2 * d + d + c];
            }
        }
        let mut y1 = vec![0.0; (n + 1) * d];
        y1.par_chunks_mut(d).enumerate().skip(1).for_each_init(
            || (vec![0.0; self.ni * d], vec![0.0; d], vec![0.0; d]),
            |(x1, rest, abel), (q, out)| {
                let p = q / stride;
                let c0 = p * stride;
                if c0 < q {
                    self.cell1(c0, q, x1, rest, abel);
                } else {
                    rest.fill(0.0);
                }
                let fc = self.df(c0)[self.zero];
                for c in 0..d {
                    out[c] = fc * self.a0(q)[c] - abel_at[p * d + c] + rest_at[p * d + c] + rest[c];
                }
            },
        );
        y1
    }

    /// Level-two contribution of the cell `[a, b]` given anchored `y1`.
    fn cell2(&self, a: usize, b: usize, y1: &[f64], x1: &mut [f64], x2: &mut [f64], out: &mut [f64]) {
        let d = self.d;
        self.prp.level1_into(a, b, x1);
        self.prp.level2_into(a, b, x1, x2);
        out.fill(0.0);
        for r in 0..d {
            for c in 0..d {
                out[r * d + c] = y1[a * d + r] * (y1[b * d + c] - y1[a * d + c]);
            }
        }
        add_area(self.prp.config(), self.df(a), x2, d, out);
    }

    fn coarse_cells2(&self, stride: usize, y1: &[f64]) -> Vec<f64> {
        let dd = self.d * self.d;
        let cfg = self.prp.config();
        let cells = self.prp.grid().steps() / stride;
        let mut buf = vec![0.0; cells * dd];
        buf.par_chunks_mut(dd).enumerate().for_each_init(
            || (vec![0.0; self.ni * self.d], vec![0.0; cfg.level2().len() * dd]),
            |(x1, x2), (p, out)| self.cell2(p * stride, (p + 1) * stride, y1, x1, x2, out),
        );
        buf
    }

    fn total2(&self, stride: usize, y1: &[f64]) -> Vec<f64> {
        let dd = self.d * self.d;
        let mut acc = vec![0.0; dd];
        for chunk in self.coarse_cells2(stride, y1).chunks(dd) {
            for (a, v) in acc.iter_mut().zip(chunk) {
                *a += v;
            }
        }
        acc
    }

    fn anchored2(&self, stride: usize, y1: &[f64]) -> Vec<f64> {
        let dd = self.d * self.d;
        let n = self.prp.grid().steps();
        let cfg = self.prp.config();
        let buf = self.coarse_cells2(stride, y1);
        let cells = n / stride;
        let mut at = vec![0.0; (cells + 1) * dd];
        for p in 0..cells {
            for idx in 0..dd {
                at[(p + 1) * dd + idx] = at[p * dd + idx] + buf[p * dd + idx];
            }
        }
        let mut y2 = vec![0.0; (n + 1) * dd];
        y2.par_chunks_mut(dd).enumerate().skip(1).for_each_init(
            || (vec![0.0; self.ni * self.d], vec![0.0; cfg.level2().len() * dd], vec![0.0; dd]),
            |(x1, x2, part), (q, out)| {
                let p = q / stride;
                let c0 = p * stride;
                if c0 < q {
                    self.cell2(c0, q, y1, x1, x2, part);
                } else {
                    part.fill(0.0);
                }
                for idx in 0..dd {
                    out[idx] = at[p * dd + idx] + part[idx];
                }
            },
        );
        y2
    }
}

/// Runs the dyadic refinement on `value(stride)` and returns the accepted
/// stride with its trace.
fn refine<F>(strides: &[usize], n: usize, tol: f64, mut value: F) -> (usize, LevelTrace)
where
    F: FnMut(usize) -> Vec<f64>,
{
    let mut levels = Vec::new();
    let mut cells = Vec::new();
    let mut values = Vec::new();
    let mut differences = Vec::new();
    let mut prev: Option<Vec<f64>> = None;
    let mut stop = StopReason::FinestGrid;
    let mut accepted = strides.len() - 1;
    for (k, &stride) in strides.iter().enumerate() {
        let v = value(stride);
        levels.push(k as u32);
        cells.push(n / stride);
        values.push(v[0]);
        if let Some(p) = &prev {
            let diff = v.iter().zip(p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let scale = 1.0 + p.iter().map(|x| x.abs()).fold(0.0, f64::max);
            differences.push(diff);
            if diff < tol * scale {
                stop = StopReason::CauchyTol;
                accepted = k;
                break;
            }
        }
        prev = Some(v);
    }
    let warning = (stop == StopReason::FinestGrid && differences.len() >= 3)
        .then(|| {
            let tail = &differences[differences.len() - 3..];
            (!(tail[2] < tail[1] && tail[1] < tail[0])).then(|| {
                format!("differences not decreasing over the last three levels: {tail:?}")
            })
        })
        .flatten();
    let trace = LevelTrace {
        levels,
        cells,
        values,
        differences,
        stop,
        accepted_level: accepted as u32,
        warning,
    };
    (strides[accepted], trace)
}

/// `Σ_p Σ_{i≠0} ∂^i f(x̂_{u_{p−1}}) X^(i)_{u_{p−1} u_p}` over `[0, T]` on
/// the partition of stride `stride`: the part of the compensated sum beyond
/// the left-point Itô sum.
pub fn higher_order_sum(prp: &PartialRoughPath, f: &VolFunction, stride: usize) -> Result<Vec<f64>> {
    let n = prp.grid().steps();
    if stride == 0 || n % stride != 0 {
        return Err(Error::Domain(format!("stride {stride} does not divide {n} steps")));
    }
    let setup = Setup::new(prp, f)?;
    let d = setup.d;
    let mut acc = vec![0.0; d];
    for chunk in setup.coarse_cells1(stride).chunks(2 * d) {
        for c in 0..d {
            acc[c] += chunk[c];
        }
    }
    Ok(acc)
}

/// Rough integral `∫ f(X̂) d𝕏` anchored at zero on every grid node.
///
/// Both levels refine dyadically from the single cell `[0, T]` until the
/// relative Cauchy criterion holds or the base grid is reached. The level-one
/// `i = 0` term is summed by parts so a constant `f` reproduces `c X^(0)`
/// exactly.
pub fn integrate(prp: &PartialRoughPath, f: &VolFunction, tol: f64) -> Result<(RoughPath, ConvergenceTrace)> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::Domain(format!("tolerance {tol} must be positive")));
    }
    let setup = Setup::new(prp, f)?;
    if setup.df.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("f or its partials are not finite along the path".into()));
    }
    let grid = *prp.grid();
    let n = grid.steps();
    let strides = grid.dyadic_strides();

    let (s1, trace1) = refine(&strides, n, tol, |s| setup.total1(s));
    let y1 = setup.anchored1(s1);
    let (s2, trace2) = refine(&strides, n, tol, |s| setup.total2(s, &y1));
    let y2 = setup.anchored2(s2, &y1);
    if y1.iter().chain(&y2).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("rough integral is not finite".into()));
    }
    let cfg = prp.config();
    let path = RoughPath::new(grid, cfg.d, cfg.alpha, y1, y2)?;
    Ok((path, ConvergenceTrace { level1: trace1, level2: trace2, tol }))
}
