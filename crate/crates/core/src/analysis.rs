//! Hölder norms over grid pairs, the homogeneous norm and the metric of
//! (α, β) rough paths, Chen-defect diagnostics, and `d_α` between level-two
//! rough paths.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::index::Powers;
use crate::integrate::RoughPath;
use crate::path::{Increments, PartialRoughPath};

/// Largest grid for which the default scheme visits every pair.
pub const EXHAUSTIVE_LIMIT: usize = 1 << 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PairScheme {
    /// Every pair `s < t` of grid nodes.
    Exhaustive,
    /// Every pair whose lag is `Δ · 2^j`.
    Dyadic,
}

impl PairScheme {
    /// Exhaustive up to [`EXHAUSTIVE_LIMIT`] steps, dyadic above.
    pub fn default_for(grid: &Grid) -> Self {
        if grid.steps() <= EXHAUSTIVE_LIMIT {
            PairScheme::Exhaustive
        } else {
            PairScheme::Dyadic
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PairScheme::Exhaustive => "exhaustive",
            PairScheme::Dyadic => "dyadic",
        }
    }
}

/// Estimate of `sup |X_st| / |t − s|^γ` over a set of grid pairs.
#[derive(Clone, Debug, Serialize)]
pub struct HolderReport {
    pub exponent: f64,
    pub sup_ratio: f64,
    /// Times `(s, t)` attaining the estimate.
    pub argmax_pair: (f64, f64),
    /// Node indices of the same pair.
    pub argmax_nodes: (usize, usize),
    pub pair_scheme: PairScheme,
}

fn lags(grid: &Grid, scheme: PairScheme) -> Vec<usize> {
    match scheme {
        PairScheme::Exhaustive => (1..=grid.steps()).collect(),
        PairScheme::Dyadic => {
            let mut out = Vec::new();
            let mut h = 1;
            while h <= grid.steps() {
                out.push(h);
                h *= 2;
            }
            out
        }
    }
}

/// Hölder estimates for several components at once. `evaluator(s, t, out)`
/// writes `|X_st|` of each component into `out` (length `exponents.len()`).
pub fn holder_norms<F>(evaluator: F, exponents: &[f64], grid: &Grid, scheme: PairScheme) -> Result<Vec<HolderReport>>
where
    F: Fn(usize, usize, &mut [f64]) + Sync,
{
    if grid.steps() == 0 {
        return Err(Error::Domain("Hölder norm over an empty grid".into()));
    }
    for &g in exponents {
        if !(g > 0.0 && g <= 1.0) {
            return Err(Error::Domain(format!("Hölder exponent {g} must lie in (0, 1]")));
        }
    }
    let k = exponents.len();
    let n = grid.steps();
    let lag_list = lags(grid, scheme);
    let nodes = grid.nodes();
    let per_start: Vec<Vec<(f64, usize, usize)>> = (0..n)
        .into_par_iter()
        .map(|s| {
            let mut best = vec![(0.0, s, s + 1); k];
            let mut buf = vec![0.0; k];
            for &h in &lag_list {
                let t = s + h;
                if t > n {
                    break;
                }
                evaluator(s, t, &mut buf);
                let span = nodes[t] - nodes[s];
                for c in 0..k {
                    let r = buf[c] / span.powf(exponents[c]);
                    if r > best[c].0 || r.is_nan() {
                        best[c] = (r, s, t);
                    }
                }
            }
            best
        })
        .collect();
    let mut best = vec![(0.0, 0, 1); k];
    for row in per_start {
        for c in 0..k {
            if row[c].0 > best[c].0 || row[c].0.is_nan() {
                best[c] = row[c];
            }
        }
    }
    Ok(best
        .into_iter()
        .zip(exponents)
        .map(|((r, s, t), &g)| HolderReport {
            exponent: g,
            sup_ratio: r,
            argmax_pair: (nodes[s], nodes[t]),
            argmax_nodes: (s, t),
            pair_scheme: scheme,
        })
        .collect())
}

/// Hölder estimate of a single two-parameter function given by `evaluator`.
pub fn holder_norm<F>(evaluator: F, gamma: f64, grid: &Grid, scheme: PairScheme) -> Result<HolderReport>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let mut out = holder_norms(|s, t, buf| buf[0] = evaluator(s, t), &[gamma], grid, scheme)?;
    Ok(out.remove(0))
}

fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Hölder estimates of every component of a partial rough path.
#[derive(Clone, Debug, Serialize)]
pub struct PathNorms {
    pub xhat: HolderReport,
    pub level1: Vec<HolderReport>,
    pub level2: Vec<HolderReport>,
}

fn component_exponents(prp: &PartialRoughPath) -> Vec<f64> {
    let c = prp.config();
    let mut ex = vec![c.beta];
    ex.extend((0..c.level1().len()).map(|p| c.level1_exponent(p)));
    ex.extend((0..c.level2().len()).map(|p| c.level2_exponent(p)));
    ex
}

fn write_component_norms(inc: &Increments, d: usize, out: &mut [f64]) {
    out[0] = euclid(&inc.xhat);
    let ni = inc.level1.len() / d;
    for p in 0..ni {
        out[1 + p] = euclid(&inc.level1[p * d..(p + 1) * d]);
    }
    for (p, chunk) in inc.level2.chunks_exact(d * d).enumerate() {
        out[1 + ni + p] = euclid(chunk);
    }
}

fn split_reports(mut reports: Vec<HolderReport>, ni: usize) -> PathNorms {
    let level2 = reports.split_off(1 + ni);
    let level1 = reports.split_off(1);
    PathNorms { xhat: reports.remove(0), level1, level2 }
}

/// Component Hölder estimates of `prp`.
pub fn path_norms(prp: &PartialRoughPath, scheme: PairScheme) -> Result<PathNorms> {
    let d = prp.config().d;
    let ex = component_exponents(prp);
    let reports = holder_norms(
        |s, t, out| {
            let inc = prp.increments(s, t).expect("valid node pair");
            write_component_norms(&inc, d, out);
        },
        &ex,
        prp.grid(),
        scheme,
    )?;
    Ok(split_reports(reports, prp.config().level1().len()))
}

impl PathNorms {
    /// `‖X̂‖_β + Σ_i ‖X^(i)‖^{1/(|i|+1)} + Σ_jk ‖𝐗^(jk)‖^{1/(|j+k|+2)}`.
    pub fn homogeneous(&self, prp: &PartialRoughPath) -> f64 {
        let c = prp.config();
        let mut total = self.xhat.sup_ratio;
        for (r, i) in self.level1.iter().zip(c.level1()) {
            total += r.sup_ratio.powf(1.0 / f64::from(i.total() + 1));
        }
        for (r, (j, k)) in self.level2.iter().zip(c.level2()) {
            total += r.sup_ratio.powf(1.0 / f64::from(j.total() + k.total() + 2));
        }
        total
    }

    /// Sum of all component estimates.
    pub fn sum(&self) -> f64 {
        self.xhat.sup_ratio
            + self.level1.iter().map(|r| r.sup_ratio).sum::<f64>()
            + self.level2.iter().map(|r| r.sup_ratio).sum::<f64>()
    }

    /// Largest raw component estimate.
    pub fn max_component(&self) -> f64 {
        std::iter::once(&self.xhat)
            .chain(&self.level1)
            .chain(&self.level2)
            .map(|r| r.sup_ratio)
            .fold(0.0, f64::max)
    }

    /// `(quantity, exponent, value, scheme, argmax_s, argmax_t)` rows.
    pub fn rows(&self, prp: &PartialRoughPath) -> Vec<(String, HolderReport)> {
        let c = prp.config();
        let mut rows = vec![("xhat".to_string(), self.xhat.clone())];
        for (r, i) in self.level1.iter().zip(c.level1()) {
            rows.push((format!("X{i}"), r.clone()));
        }
        for (r, (j, k)) in self.level2.iter().zip(c.level2()) {
            rows.push((format!("XX{j}{k}"), r.clone()));
        }
        rows
    }
}

/// `|||𝕏|||_(α,β)` with the default pair scheme for the grid.
pub fn homogeneous_norm(prp: &PartialRoughPath) -> Result<f64> {
    homogeneous_norm_with(prp, PairScheme::default_for(prp.grid()))
}

pub fn homogeneous_norm_with(prp: &PartialRoughPath, scheme: PairScheme) -> Result<f64> {
    Ok(path_norms(prp, scheme)?.homogeneous(prp))
}

/// `d_(α,β)` with the default pair scheme.
pub fn distance_ab(a: &PartialRoughPath, b: &PartialRoughPath) -> Result<f64> {
    distance_ab_with(a, b, PairScheme::default_for(a.grid()))
}

pub fn distance_ab_with(a: &PartialRoughPath, b: &PartialRoughPath, scheme: PairScheme) -> Result<f64> {
    if !a.compatible(b) {
        return Err(Error::Domain("paths have different grids or index sets".into()));
    }
    let d = a.config().d;
    let ex = component_exponents(a);
    let reports = holder_norms(
        |s, t, out| {
            let mut ia = a.increments(s, t).expect("valid node pair");
            let ib = b.increments(s, t).expect("valid node pair");
            for (x, y) in ia.xhat.iter_mut().zip(&ib.xhat) {
                *x -= y;
            }
            for (x, y) in ia.level1.iter_mut().zip(&ib.level1) {
                *x -= y;
            }
            for (x, y) in ia.level2.iter_mut().zip(&ib.level2) {
                *x -= y;
            }
            write_component_norms(&ia, d, out);
        },
        &ex,
        a.grid(),
        scheme,
    )?;
    Ok(split_reports(reports, a.config().level1().len()).sum())
}

/// `d_α(Y, Z) = ‖Y^(1) − Z^(1)‖_α + ‖Y^(2) − Z^(2)‖_{2α}`.
pub fn distance_alpha(a: &RoughPath, b: &RoughPath) -> Result<f64> {
    distance_alpha_with(a, b, PairScheme::default_for(a.grid()))
}

pub fn distance_alpha_with(a: &RoughPath, b: &RoughPath, scheme: PairScheme) -> Result<f64> {
    if a.grid() != b.grid() || a.dim() != b.dim() {
        return Err(Error::Domain("rough paths live on different grids".into()));
    }
    let alpha = a.alpha();
    let reports = holder_norms(
        |s, t, out| {
            let (y1, y2) = a.increment(s, t);
            let (z1, z2) = b.increment(s, t);
            let d1: Vec<f64> = y1.iter().zip(&z1).map(|(x, y)| x - y).collect();
            let d2: Vec<f64> = y2.iter().zip(&z2).map(|(x, y)| x - y).collect();
            out[0] = euclid(&d1);
            out[1] = euclid(&d2);
        },
        &[alpha, 2.0 * alpha],
        a.grid(),
        scheme,
    )?;
    Ok(reports[0].sup_ratio + reports[1].sup_ratio)
}

/// Hölder estimates `(‖Y^(1)‖_α, ‖Y^(2)‖_{2α})` of a rough path.
pub fn rough_path_norms(y: &RoughPath, scheme: PairScheme) -> Result<(HolderReport, HolderReport)> {
    let alpha = y.alpha();
    let mut reports = holder_norms(
        |s, t, out| {
            let (y1, y2) = y.increment(s, t);
            out[0] = euclid(&y1);
            out[1] = euclid(&y2);
        },
        &[alpha, 2.0 * alpha],
        y.grid(),
        scheme,
    )?;
    let second = reports.pop().expect("two reports");
    Ok((reports.pop().expect("two reports"), second))
}

/// Worst relative defects of the modified Chen relations.
#[derive(Clone, Debug, Serialize)]
pub struct ChenDefectReport {
    pub level1_max: f64,
    pub level2_max: f64,
    pub worst_level1_triple: (usize, usize, usize),
    pub worst_level2_triple: (usize, usize, usize),
    pub triples: usize,
}

impl ChenDefectReport {
    pub fn max(&self) -> f64 {
        self.level1_max.max(self.level2_max)
    }
}

/// Uniformly drawn node triples `s ≤ u ≤ t`.
pub fn random_triples(grid: &Grid, count: usize, seed: u64) -> Vec<(usize, usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut v = [
                rng.random_range(0..=grid.steps()),
                rng.random_range(0..=grid.steps()),
                rng.random_range(0..=grid.steps()),
            ];
            v.sort_unstable();
            (v[0], v[1], v[2])
        })
        .collect()
}

/// Per-triple relative defects `(level-one, level-two)`, each the max over
/// indices of `|lhs − rhs| / (1 + |lhs|)`.
pub fn chen_defect(prp: &PartialRoughPath, s: usize, u: usize, t: usize) -> Result<(f64, f64)> {
    if !(s <= u && u <= t) {
        return Err(Error::Domain(format!("triple ({s}, {u}, {t}) is not ordered")));
    }
    let c = prp.config();
    let d = c.d;
    let dd = d * d;
    let st = prp.increments(s, t)?;
    let su = prp.increments(s, u)?;
    let ut = prp.increments(u, t)?;
    let pw = Powers::new(&su.xhat, c.n());

    let mut worst1 = 0.0f64;
    let mut rhs = vec![0.0; d];
    for pos in 0..c.level1().len() {
        for k in 0..d {
            rhs[k] = su.level1[pos * d + k] + ut.level1[pos * d + k];
        }
        for term in c.level1_terms(pos) {
            let w = term.coef * pw.monomial(&term.exponent);
            for k in 0..d {
                rhs[k] += w * ut.level1[term.p * d + k];
            }
        }
        let lhs = &st.level1[pos * d..(pos + 1) * d];
        let diff: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
        worst1 = worst1.max(euclid(&diff) / (1.0 + euclid(lhs)));
    }

    let mut worst2 = 0.0f64;
    let mut rhs = vec![0.0; dd];
    for pos in 0..c.level2().len() {
        for k in 0..dd {
            rhs[k] = su.level2[pos * dd + k] + ut.level2[pos * dd + k];
        }
        for term in c.cross_terms(pos) {
            let w = term.coef * pw.monomial(&term.exponent);
            let xj = &su.level1[term.j * d..(term.j + 1) * d];
            let xq = &ut.level1[term.q * d..(term.q + 1) * d];
            for r in 0..d {
                for col in 0..d {
                    rhs[r * d + col] += w * xj[r] * xq[col];
                }
            }
        }
        for term in c.level2_terms(pos) {
            let w = term.coef * pw.monomial(&term.exponent);
            for k in 0..dd {
                rhs[k] += w * ut.level2[term.pq * dd + k];
            }
        }
        let lhs = &st.level2[pos * dd..(pos + 1) * dd];
        let diff: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
        worst2 = worst2.max(euclid(&diff) / (1.0 + euclid(lhs)));
    }
    Ok((worst1, worst2))
}

/// Max relative defects of the modified Chen relations over `triples`.
pub fn chen_defect_report(prp: &PartialRoughPath, triples: &[(usize, usize, usize)]) -> Result<ChenDefectReport> {
    if triples.is_empty() {
        return Err(Error::Domain("no triples to evaluate".into()));
    }
    for &(s, u, t) in triples {
        if !(s <= u && u <= t && t <= prp.grid().steps()) {
            return Err(Error::Domain(format!("triple ({s}, {u}, {t}) is not an ordered grid triple")));
        }
    }
    let defects: Vec<(f64, f64)> = triples
        .par_iter()
        .map(|&(s, u, t)| chen_defect(prp, s, u, t).expect("validated triple"))
        .collect();
    let mut report = ChenDefectReport {
        level1_max: 0.0,
        level2_max: 0.0,
        worst_level1_triple: triples[0],
        worst_level2_triple: triples[0],
        triples: triples.len(),
    };
    for (&tri, &(d1, d2)) in triples.iter().zip(&defects) {
        if d1 > report.level1_max || d1.is_nan() {
            report.level1_max = d1;
            report.worst_level1_triple = tri;
        }
        if d2 > report.level2_max || d2.is_nan() {
            report.level2_max = d2;
            report.worst_level2_triple = tri;
        }
    }
    Ok(report)
}

/// Worst relative mismatch between stored values and direct cellwise sums.
#[derive(Clone, Debug, Serialize)]
pub struct GeneratorDefectReport {
    pub level1_max: f64,
    pub level2_max: f64,
    pub worst_pair: (usize, usize),
    pub pairs: usize,
}

impl GeneratorDefectReport {
    pub fn max(&self) -> f64 {
        self.level1_max.max(self.level2_max)
    }
}

/// Compares reconstructed values with direct left-point sums rebuilt from
/// the path's own generator: `x̂` at the nodes, `ΔX` from `X^(0)`, and the
/// per-cell second level of `X` from `𝐗^(00)`.
///
/// Any anchored data satisfies the modified Chen relations identically (the
/// reconstruction is a group quotient), so Chen defects only measure
/// rounding. This check instead detects anchored values that are not the
/// iterated integrals of a cellwise path. Every single cell is visited in
/// addition to `pairs`. Paths built by smooth quadrature show an `O(Δ)`
/// mismatch here by construction.
pub fn generator_defect_report(prp: &PartialRoughPath, pairs: &[(usize, usize)]) -> Result<GeneratorDefectReport> {
    let n = prp.grid().steps();
    for &(s, t) in pairs {
        if !(s <= t && t <= n) {
            return Err(Error::Domain(format!("pair ({s}, {t}) is not an ordered grid pair")));
        }
    }
    let c = prp.config();
    let (d, e) = (c.d, c.e);
    let dd = d * d;
    let ni = c.level1().len();
    let zero = c.position(&crate::index::MultiIndex::zero(e))?;
    let zz = c.pair_position(&crate::index::MultiIndex::zero(e), &crate::index::MultiIndex::zero(e))?;
    let dx: Vec<f64> = (0..n)
        .flat_map(|q| {
            let (a, b) = (prp.level1_at(q), prp.level1_at(q + 1));
            (0..d).map(move |k| b[zero * d + k] - a[zero * d + k]).collect::<Vec<_>>()
        })
        .collect();
    let area: Vec<f64> = (0..n)
        .flat_map(|q| {
            let (b0, b1) = (prp.level2_at(q), prp.level2_at(q + 1));
            let a0 = &prp.level1_at(q)[zero * d..(zero + 1) * d];
            let dxq = &dx[q * d..(q + 1) * d];
            (0..dd)
                .map(|idx| b1[zz * dd + idx] - b0[zz * dd + idx] - a0[idx / d] * dxq[idx % d])
                .collect::<Vec<_>>()
        })
        .collect();
    let fact: Vec<f64> = c.level1().iter().map(|i| 1.0 / i.factorial()).collect();

    let mut all: Vec<(usize, usize)> = (0..n).map(|q| (q, q + 1)).collect();
    all.extend_from_slice(pairs);
    let defects: Vec<(f64, f64)> = all
        .par_iter()
        .map(|&(s, t)| {
            let mut l1 = vec![0.0; ni * d];
            let mut l2 = vec![0.0; c.level2().len() * dd];
            let xs = prp.xhat_at(s);
            for r in s..t {
                let diff: Vec<f64> = prp.xhat_at(r).iter().zip(xs).map(|(a, b)| a - b).collect();
                let pw = Powers::new(&diff, c.n());
                let w: Vec<f64> = c.level1().iter().zip(&fact).map(|(i, f)| f * pw.monomial(i)).collect();
                let dxr = &dx[r * d..(r + 1) * d];
                let ar = &area[r * dd..(r + 1) * dd];
                for (pos, _) in c.level2().iter().enumerate() {
                    let (pj, pk) = c.pair_parts(pos);
                    for idx in 0..dd {
                        l2[pos * dd + idx] += w[pk] * (l1[pj * d + idx / d] * dxr[idx % d] + w[pj] * ar[idx]);
                    }
                }
                for p in 0..ni {
                    for k in 0..d {
                        l1[p * d + k] += w[p] * dxr[k];
                    }
                }
            }
            let inc = prp.increments(s, t).expect("validated pair");
            let mut w1 = 0.0f64;
            for p in 0..ni {
                let got = &inc.level1[p * d..(p + 1) * d];
                let want = &l1[p * d..(p + 1) * d];
                let diff: Vec<f64> = got.iter().zip(want).map(|(a, b)| a - b).collect();
                w1 = w1.max(euclid(&diff) / (1.0 + euclid(got)));
            }
            let mut w2 = 0.0f64;
            for (got, want) in inc.level2.chunks_exact(dd).zip(l2.chunks_exact(dd)) {
                let diff: Vec<f64> = got.iter().zip(want).map(|(a, b)| a - b).collect();
                w2 = w2.max(euclid(&diff) / (1.0 + euclid(got)));
            }
            (w1, w2)
        })
        .collect();
    let mut report = GeneratorDefectReport { level1_max: 0.0, level2_max: 0.0, worst_pair: all[0], pairs: all.len() };
    let mut worst = -1.0;
    for (&pair, &(a, b)) in all.iter().zip(&defects) {
        report.level1_max = report.level1_max.max(a);
        report.level2_max = report.level2_max.max(b);
        if a.max(b) > worst {
            worst = a.max(b);
            report.worst_pair = pair;
        }
    }
    Ok(report)
}

/// Writes `quantity,exponent,value,scheme,argmax_s,argmax_t` rows.
pub fn write_holder_csv<W: Write>(mut w: W, rows: &[(String, HolderReport)]) -> Result<()> {
    writeln!(w, "quantity,exponent,value,scheme,argmax_s,argmax_t")?;
    for (name, r) in rows {
        writeln!(
            w,
            "{name},{},{},{},{},{}",
            r.exponent,
            r.sup_ratio,
            r.pair_scheme.name(),
            r.argmax_pair.0,
            r.argmax_pair.1
        )?;
    }
    Ok(())
}
