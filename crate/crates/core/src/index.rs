//! Multi-index combinatorics and the index sets of an (α, β) rough path.
//!
//! A level-one index `i ∈ Z^e_+` is admissible when `|i|β + α ≤ 1`, a
//! level-two pair `(j, k)` when `|j + k|β + 2α ≤ 1`. [`IndexConfig`] stores
//! both sets in a fixed order (by total degree, then lexicographically) and
//! precomputes the coefficient tables used by the Chen-based reconstruction.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

/// Slack used when testing the defining inequalities, so that decimal inputs
/// such as `2 * 0.25 + 0.5` land on the admissible side of `≤ 1`.
const INEQ_SLACK: f64 = 1e-12;

/// An element of `Z^e_+`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Index("multi-index must have order e >= 1".into()));
        }
        Ok(Self(entries))
    }

    pub fn zero(order: usize) -> Self {
        Self(vec![0; order.max(1)])
    }

    /// Unit vector in coordinate `l`.
    pub fn unit(order: usize, l: usize) -> Self {
        let mut v = vec![0; order];
        v[l] = 1;
        Self(v)
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn order(&self) -> usize {
        self.0.len()
    }

    /// `|i| = Σ_l i_l`.
    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    /// `i! = Π_l i_l!`.
    pub fn factorial(&self) -> f64 {
        self.0.iter().map(|&k| factorial(k)).product()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&k| k == 0)
    }

    /// Componentwise partial order `self ≤ other`.
    pub fn leq(&self, other: &Self) -> bool {
        self.order() == other.order() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    /// `self − other`, defined when `other ≤ self`.
    pub fn checked_sub(&self, other: &Self) -> Option<Self> {
        if !other.leq(self) {
            return None;
        }
        Some(Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect()))
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.order(), other.order(), "multi-index order mismatch");
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `x^i = Π_l x_l^{i_l}`.
    pub fn monomial(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.order());
        self.0
            .iter()
            .zip(x)
            .map(|(&k, &xl)| xl.powi(k as i32))
            .product()
    }

    /// All `p` with `p ≤ self`, in lexicographic order.
    pub fn enumerate_leq(&self) -> Vec<MultiIndex> {
        let mut out = vec![Vec::with_capacity(self.order())];
        for &bound in &self.0 {
            let mut next = Vec::with_capacity(out.len() * (bound as usize + 1));
            for prefix in &out {
                for v in 0..=bound {
                    let mut p = prefix.clone();
                    p.push(v);
                    next.push(p);
                }
            }
            out = next;
        }
        out.into_iter().map(MultiIndex).collect()
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (n, v) in self.0.iter().enumerate() {
            if n > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// Free-function form of [`MultiIndex::enumerate_leq`].
pub fn multiindex_enumerate_leq(i: &MultiIndex) -> Vec<MultiIndex> {
    i.enumerate_leq()
}

pub(crate) fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

/// All multi-indices of order `e` with total degree exactly `total`,
/// lexicographically ordered.
pub(crate) fn compositions(e: usize, total: u32) -> Vec<MultiIndex> {
    fn rec(e: usize, remaining: u32, prefix: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
        if prefix.len() + 1 == e {
            prefix.push(remaining);
            out.push(MultiIndex(prefix.clone()));
            prefix.pop();
            return;
        }
        for v in 0..=remaining {
            prefix.push(v);
            rec(e, remaining - v, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(e, total, &mut Vec::with_capacity(e), &mut out);
    out
}

/// One term `coef · x̂^exponent · X^(p)` of the level-one recursion.
#[derive(Clone, Debug)]
pub(crate) struct Level1Term {
    pub p: usize,
    pub exponent: MultiIndex,
    pub coef: f64,
}

/// One term `coef · x̂^exponent · X^(j)_{0s} ⊗ X^(q)_{st}` of the level-two
/// recursion.
#[derive(Clone, Debug)]
pub(crate) struct CrossTerm {
    pub j: usize,
    pub q: usize,
    pub exponent: MultiIndex,
    pub coef: f64,
}

/// One term `coef · x̂^exponent · 𝐗^(pq)_{st}` of the level-two recursion.
#[derive(Clone, Debug)]
pub(crate) struct Level2Term {
    pub pq: usize,
    pub exponent: MultiIndex,
    pub coef: f64,
}

/// Exponents, index sets and dimensions of an (α, β) rough path.
#[derive(Clone, Debug)]
pub struct IndexConfig {
    pub alpha: f64,
    pub beta: f64,
    /// Dimension of the volatility driver `X̂`.
    pub e: usize,
    /// Dimension of the integrator `X`.
    pub d: usize,
    /// Time horizon `T`.
    pub horizon: f64,
    level1: Vec<MultiIndex>,
    level2: Vec<(MultiIndex, MultiIndex)>,
    n: u32,
    m: u32,
    positions: BTreeMap<MultiIndex, usize>,
    // Positions of j and k inside `level1` for each level-two pair.
    pair_parts: Vec<(usize, usize)>,
    level1_terms: Vec<Vec<Level1Term>>,
    cross_terms: Vec<Vec<CrossTerm>>,
    level2_terms: Vec<Vec<Level2Term>>,
}

impl PartialEq for IndexConfig {
    fn eq(&self, other: &Self) -> bool {
        self.alpha == other.alpha
            && self.beta == other.beta
            && self.e == other.e
            && self.d == other.d
            && self.horizon == other.horizon
    }
}

/// Builds the index sets `I`, `J` for `(α, β, e)` with `d = 1`, `T = 1`.
pub fn build_index_sets(alpha: f64, beta: f64, e: usize) -> Result<IndexConfig> {
    IndexConfig::new(alpha, beta, e)
}

impl IndexConfig {
    pub fn new(alpha: f64, beta: f64, e: usize) -> Result<Self> {
        if !(alpha > 1.0 / 3.0 && alpha <= 0.5) {
            return Err(Error::Config(format!("alpha = {alpha} must lie in (1/3, 1/2]")));
        }
        if !(beta > 0.0 && beta < 0.5) {
            return Err(Error::Config(format!("beta = {beta} must lie in (0, 1/2)")));
        }
        if e == 0 {
            return Err(Error::Config("e must be at least 1".into()));
        }

        let admissible1 = |s: u32| f64::from(s) * beta + alpha <= 1.0 + INEQ_SLACK;
        let admissible2 = |s: u32| f64::from(s) * beta + 2.0 * alpha <= 1.0 + INEQ_SLACK;
        let mut n = 0;
        while admissible1(n + 1) {
            n += 1;
        }
        let mut m = 0;
        while admissible2(m + 1) {
            m += 1;
        }

        let level1: Vec<MultiIndex> = (0..=n).flat_map(|s| compositions(e, s)).collect();
        let mut level2 = Vec::new();
        for s in 0..=m {
            for sj in 0..=s {
                for j in compositions(e, sj) {
                    for k in compositions(e, s - sj) {
                        level2.push((j.clone(), k));
                    }
                }
            }
        }
        level2.sort_by(|a, b| {
            (a.0.total() + a.1.total())
                .cmp(&(b.0.total() + b.1.total()))
                .then_with(|| a.cmp(b))
        });

        let positions: BTreeMap<MultiIndex, usize> =
            level1.iter().cloned().enumerate().map(|(n, i)| (i, n)).collect();
        let pos = |i: &MultiIndex| positions[i];

        let level1_terms = level1
            .iter()
            .map(|i| {
                i.enumerate_leq()
                    .into_iter()
                    .filter(|p| p != i)
                    .map(|p| {
                        let exponent = i.checked_sub(&p).expect("p <= i");
                        Level1Term { p: pos(&p), coef: 1.0 / exponent.factorial(), exponent }
                    })
                    .collect()
            })
            .collect();

        let pair_positions: BTreeMap<(MultiIndex, MultiIndex), usize> =
            level2.iter().cloned().enumerate().map(|(n, jk)| (jk, n)).collect();
        let pair_parts = level2.iter().map(|(j, k)| (pos(j), pos(k))).collect();

        let cross_terms = level2
            .iter()
            .map(|(j, k)| {
                k.enumerate_leq()
                    .into_iter()
                    .map(|q| {
                        let exponent = k.checked_sub(&q).expect("q <= k");
                        CrossTerm { j: pos(j), q: pos(&q), coef: 1.0 / exponent.factorial(), exponent }
                    })
                    .collect()
            })
            .collect();

        let level2_terms = level2
            .iter()
            .map(|(j, k)| {
                let mut terms = Vec::new();
                for p in j.enumerate_leq() {
                    for q in k.enumerate_leq() {
                        if &p == j && &q == k {
                            continue;
                        }
                        let dj = j.checked_sub(&p).expect("p <= j");
                        let dk = k.checked_sub(&q).expect("q <= k");
                        terms.push(Level2Term {
                            pq: pair_positions[&(p.clone(), q)],
                            coef: 1.0 / (dj.factorial() * dk.factorial()),
                            exponent: dj.add(&dk),
                        });
                    }
                }
                terms
            })
            .collect();

        Ok(Self {
            alpha,
            beta,
            e,
            d: 1,
            horizon: 1.0,
            level1,
            level2,
            n,
            m,
            positions,
            pair_parts,
            level1_terms,
            cross_terms,
            level2_terms,
        })
    }

    pub fn with_dim(mut self, d: usize) -> Self {
        assert!(d >= 1, "d must be at least 1");
        self.d = d;
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        assert!(horizon > 0.0, "horizon must be positive");
        self.horizon = horizon;
        self
    }

    /// The set `I`, ordered by total degree.
    pub fn level1(&self) -> &[MultiIndex] {
        &self.level1
    }

    /// The set `J`, ordered by total degree `|j + k|`.
    pub fn level2(&self) -> &[(MultiIndex, MultiIndex)] {
        &self.level2
    }

    /// `n = max{|i| : i ∈ I}`.
    pub fn n(&self) -> u32 {
        self.n
    }

    /// `m = max{|j + k| : (j, k) ∈ J}`.
    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn position(&self, i: &MultiIndex) -> Result<usize> {
        self.positions
            .get(i)
            .copied()
            .ok_or_else(|| Error::Index(format!("{i} is not in I")))
    }

    pub fn pair_position(&self, j: &MultiIndex, k: &MultiIndex) -> Result<usize> {
        self.level2
            .iter()
            .position(|(a, b)| a == j && b == k)
            .ok_or_else(|| Error::Index(format!("({j},{k}) is not in J")))
    }

    /// Positions of `j` and `k` inside `I` for the level-two pair at `pos`.
    pub fn pair_parts(&self, pos: usize) -> (usize, usize) {
        self.pair_parts[pos]
    }

    /// Hölder exponent `|i|β + α` of `X^(i)`.
    pub fn level1_exponent(&self, pos: usize) -> f64 {
        f64::from(self.level1[pos].total()) * self.beta + self.alpha
    }

    /// Hölder exponent `|j + k|β + 2α` of `𝐗^(jk)`.
    pub fn level2_exponent(&self, pos: usize) -> f64 {
        let (j, k) = &self.level2[pos];
        f64::from(j.total() + k.total()) * self.beta + 2.0 * self.alpha
    }

    pub(crate) fn level1_terms(&self, pos: usize) -> &[Level1Term] {
        &self.level1_terms[pos]
    }

    pub(crate) fn cross_terms(&self, pos: usize) -> &[CrossTerm] {
        &self.cross_terms[pos]
    }

    pub(crate) fn level2_terms(&self, pos: usize) -> &[Level2Term] {
        &self.level2_terms[pos]
    }

    /// Index sets, exponents and dimensions agree.
    pub fn compatible(&self, other: &Self) -> bool {
        self == other && self.level1 == other.level1 && self.level2 == other.level2
    }
}

/// Table of `x_l^k` for `k ≤ max_power`, used to evaluate many monomials at
/// one point.
#[derive(Clone, Debug)]
pub(crate) struct Powers {
    table: Vec<Vec<f64>>,
}

impl Powers {
    pub fn new(x: &[f64], max_power: u32) -> Self {
        let table = x
            .iter()
            .map(|&xl| {
                let mut row = Vec::with_capacity(max_power as usize + 1);
                let mut acc = 1.0;
                row.push(acc);
                for _ in 0..max_power {
                    acc *= xl;
                    row.push(acc);
                }
                row
            })
            .collect();
        Self { table }
    }

    pub fn monomial(&self, exponent: &MultiIndex) -> f64 {
        exponent
            .entries()
            .iter()
            .zip(&self.table)
            .map(|(&k, row)| row[k as usize])
            .product()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mi(v: &[u32]) -> MultiIndex {
        MultiIndex::new(v.to_vec()).unwrap()
    }

    #[test]
    fn scalar_driver_index_sets() {
        let cfg = build_index_sets(0.45, 0.2, 1).unwrap();
        assert_eq!(cfg.level1(), &[mi(&[0]), mi(&[1]), mi(&[2])]);
        assert_eq!(cfg.n(), 2);
        assert_eq!(cfg.level2(), &[(mi(&[0]), mi(&[0]))]);
        assert_eq!(cfg.m(), 0);
    }

    #[test]
    fn two_dim_driver_degrees() {
        let cfg = build_index_sets(0.35, 0.08, 2).unwrap();
        assert_eq!(cfg.n(), 8);
        assert_eq!(cfg.m(), 3);
        // Number of (i1, i2) with i1 + i2 <= 8.
        assert_eq!(cfg.level1().len(), 45);
        // Number of 4-tuples with sum <= 3.
        assert_eq!(cfg.level2().len(), 35);
    }

    #[test]
    fn boundary_exponents() {
        let cfg = build_index_sets(0.5, 0.49, 1).unwrap();
        assert_eq!(cfg.level1(), &[mi(&[0]), mi(&[1])]);
        assert_eq!(cfg.level2(), &[(mi(&[0]), mi(&[0]))]);
    }

    #[test]
    fn maximality_and_containment() {
        for &(a, b, e) in &[(0.45, 0.2, 1), (0.35, 0.08, 2), (0.4, 0.25, 2), (0.5, 0.49, 3)] {
            let cfg = build_index_sets(a, b, e).unwrap();
            let n = f64::from(cfg.n());
            let m = f64::from(cfg.m());
            assert!((n + 1.0) * b + a > 1.0);
            assert!((m + 1.0) * b + 2.0 * a > 1.0);
            assert!(cfg.m() <= cfg.n());
            assert!(cfg.level1()[0].is_zero());
            assert!(cfg.level2()[0].0.is_zero() && cfg.level2()[0].1.is_zero());
            for i in cfg.level1() {
                assert!(f64::from(i.total()) * b + a <= 1.0 + 1e-12);
            }
            for (j, k) in cfg.level2() {
                assert!(f64::from(j.total() + k.total()) * b + 2.0 * a <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn rejects_out_of_range_exponents() {
        assert!(matches!(build_index_sets(0.3, 0.2, 1), Err(Error::Config(_))));
        assert!(matches!(build_index_sets(0.6, 0.2, 1), Err(Error::Config(_))));
        assert!(matches!(build_index_sets(0.4, 0.5, 1), Err(Error::Config(_))));
        assert!(matches!(build_index_sets(0.4, 0.0, 1), Err(Error::Config(_))));
        assert!(matches!(build_index_sets(0.4, 0.2, 0), Err(Error::Config(_))));
    }

    #[test]
    fn enumerate_leq_examples() {
        assert_eq!(
            mi(&[1, 1]).enumerate_leq(),
            vec![mi(&[0, 0]), mi(&[0, 1]), mi(&[1, 0]), mi(&[1, 1])]
        );
        assert_eq!(mi(&[0, 0, 0]).enumerate_leq(), vec![mi(&[0, 0, 0])]);
        assert_eq!(mi(&[2, 0]).enumerate_leq(), vec![mi(&[0, 0]), mi(&[1, 0]), mi(&[2, 0])]);
    }

    #[test]
    fn enumerate_leq_size_and_order() {
        let i = mi(&[3, 0, 2]);
        let all = i.enumerate_leq();
        assert_eq!(all.len(), 4 * 3);
        assert!(all.iter().all(|p| p.leq(&i)));
    }

    #[test]
    fn multiindex_arithmetic() {
        let i = mi(&[3, 2]);
        assert_eq!(i.total(), 5);
        assert_eq!(i.factorial(), 12.0);
        assert_eq!(i.monomial(&[2.0, -1.0]), 8.0);
        assert!(mi(&[1, 2]).leq(&i));
        assert!(!mi(&[4, 0]).leq(&i));
        assert_eq!(i.checked_sub(&mi(&[1, 1])), Some(mi(&[2, 1])));
        assert_eq!(i.checked_sub(&mi(&[4, 0])), None);
    }

    #[test]
    fn powers_table_matches_monomial() {
        let x = [0.7, -1.3];
        let pw = Powers::new(&x, 6);
        for i in build_index_sets(0.35, 0.1, 2).unwrap().level1() {
            assert!((pw.monomial(i) - i.monomial(&x)).abs() < 1e-14);
        }
    }
}
