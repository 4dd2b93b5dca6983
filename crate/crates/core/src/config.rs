//! Flat `key = value` run configuration with defaults and typed builders
//! for every pipeline.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::index::{IndexConfig, MultiIndex};
use crate::integrate::VolFunction;
use crate::lift::{KernelSpec, LiftModel};
use crate::rate::RateProblem;
use crate::rde::{Model, Sigma};

/// Every accepted key with its default (`None` for keys without one).
const KEYS: &[(&str, Option<&str>)] = &[
    ("rng.seed", Some("0")),
    ("run.paths", Some("1")),
    ("grid.N", Some("1024")),
    ("grid.T", Some("1")),
    ("kernel.variant", Some("riemann_liouville")),
    ("kernel.H", None),
    ("kernel.delta", Some("0.01")),
    ("corr.rho", Some("0")),
    ("index.alpha", None),
    ("index.beta", None),
    ("f.family", Some("exponential")),
    ("f.xi", Some("1")),
    ("f.eta", Some("1")),
    ("f.c", Some("0")),
    ("f.coeffs", Some("1")),
    ("f.value", Some("1")),
    ("integrate.tol", Some("1e-9")),
    ("model.sigma.family", Some("constant")),
    ("model.sigma.params", Some("1")),
    ("model.S0", Some("1")),
    ("rate.K", Some("64")),
    ("rate.z_min", Some("-0.5")),
    ("rate.z_max", Some("0.5")),
    ("rate.z_steps", Some("11")),
    ("rate.rho", None),
    ("rate.H", None),
    ("rate.sigma0", None),
    ("rate.starts", Some("8")),
    ("rate.f.family", None),
    ("rate.f.xi", None),
    ("rate.f.eta", None),
    ("rate.f.c", None),
    ("rate.f.coeffs", None),
    ("rate.f.value", None),
    ("verify.triples", Some("1000")),
    ("verify.pairs", Some("400")),
    ("verify.scheme", Some("auto")),
    ("verify.input", None),
    ("mc.checks", Some("moments,ito,price,scaling")),
    ("mc.paths", Some("1000")),
    ("mc.moments.levels", Some("6")),
    ("mc.moments.indices", Some("0:0;1:0;0:1")),
    ("mc.ito.levels", Some("64,128,256")),
    ("mc.strikes", Some("0.9,1,1.1")),
    ("mc.maturities", Some("1")),
    ("mc.tail.z", Some("0.3")),
    ("mc.tail.t_grid", Some("0.1,0.2,0.4,0.8")),
    ("mc.tail.steps", Some("16")),
    ("mc.scaling.eps", Some("0.25,0.0625")),
];

/// Resolved configuration: user values over defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.iter().any(|(name, _)| *name == k) {
                return Err(Error::Config(format!("line {}: unknown key {k}", no + 1)));
            }
            if values.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {k}", no + 1)));
            }
        }
        for (k, d) in KEYS {
            if let Some(d) = d {
                values.entry((*k).to_string()).or_insert_with(|| (*d).to_string());
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        if !KEYS.iter().any(|(name, _)| *name == key) {
            return Err(Error::Config(format!("unknown key {key}")));
        }
        self.values.insert(key.to_string(), value.into());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn required(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| Error::Config(format!("missing required key {key}")))
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        let v = self.required(key)?;
        v.parse().map_err(|_| Error::Config(format!("{key} = {v} is not a number")))
    }

    fn opt_f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key).map(|_| self.f64(key)).transpose()
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        let v = self.required(key)?;
        v.parse().map_err(|_| Error::Config(format!("{key} = {v} is not a non-negative integer")))
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        let v = self.required(key)?;
        v.parse().map_err(|_| Error::Config(format!("{key} = {v} is not a non-negative integer")))
    }

    pub fn list_f64(&self, key: &str) -> Result<Vec<f64>> {
        let v = self.required(key)?;
        v.split(',')
            .map(|s| s.trim().parse().map_err(|_| Error::Config(format!("{key}: {s:?} is not a number"))))
            .collect()
    }

    pub fn list_str(&self, key: &str) -> Result<Vec<String>> {
        Ok(self.required(key)?.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
    }

    pub fn seed(&self) -> Result<u64> {
        self.u64("rng.seed")
    }

    /// Canonical `key = value` text of the resolved configuration.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn hash(&self) -> String {
        hex_digest(self.canonical().as_bytes())
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn kernel(&self) -> Result<KernelSpec> {
        match self.required("kernel.variant")? {
            "riemann_liouville" => KernelSpec::riemann_liouville(self.f64("kernel.H")?, self.f64("kernel.delta")?),
            other => Err(Error::Config(format!("kernel.variant = {other} is not supported"))),
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.f64("grid.T")?, self.usize("grid.N")?).map_err(|e| Error::Config(e.to_string()))
    }

    /// Index sets from `index.alpha`, `index.beta` or the kernel defaults.
    pub fn index_config(&self, spec: &KernelSpec) -> Result<IndexConfig> {
        let (a, b) = LiftModel::default_exponents(spec);
        let alpha = self.opt_f64("index.alpha")?.unwrap_or(a);
        let beta = self.opt_f64("index.beta")?.unwrap_or(b);
        IndexConfig::new(alpha, beta, 2)
    }

    pub fn lift_model(&self) -> Result<LiftModel> {
        let spec = self.kernel()?;
        let config = self.index_config(&spec)?;
        let grid = self.grid()?;
        LiftModel::new(spec, grid, self.f64("corr.rho")?, self.seed()?, config.with_horizon(grid.horizon()))
    }

    fn vol_function_with(&self, prefix: &str, fallback: &str) -> Result<VolFunction> {
        let key = |name: &str| {
            let own = format!("{prefix}{name}");
            if self.get(&own).is_some() {
                own
            } else {
                format!("{fallback}{name}")
            }
        };
        match self.required(&key("family"))? {
            "exponential" => VolFunction::exponential(self.f64(&key("xi"))?, vec![self.f64(&key("eta"))?, self.f64(&key("c"))?]),
            "polynomial" => VolFunction::polynomial(self.list_f64(&key("coeffs"))?),
            "constant" => VolFunction::constant(self.f64(&key("value"))?),
            other => Err(Error::Config(format!("{} = {other} is not a known family", key("family")))),
        }
    }

    pub fn vol_function(&self) -> Result<VolFunction> {
        self.vol_function_with("f.", "f.")
    }

    pub fn sigma(&self) -> Result<Sigma> {
        let params = self.list_f64("model.sigma.params")?;
        match (self.required("model.sigma.family")?, params.as_slice()) {
            ("constant", [c]) => Ok(Sigma::Constant(*c)),
            ("linear", [a, b]) => Ok(Sigma::Linear { a: *a, b: *b }),
            (fam @ ("constant" | "linear"), _) => {
                Err(Error::Config(format!("model.sigma.params has the wrong length for family {fam}")))
            }
            (other, _) => Err(Error::Config(format!("model.sigma.family = {other} is not supported"))),
        }
    }

    pub fn model(&self) -> Result<Model> {
        Ok(Model {
            lift: self.lift_model()?,
            f: self.vol_function()?,
            sigma: self.sigma()?,
            s0: self.f64("model.S0")?,
            tol: self.f64("integrate.tol")?,
        })
    }

    /// Rate problem; unset `rate.*` keys fall back to the model keys.
    pub fn rate_problem(&self) -> Result<RateProblem> {
        let hurst = match self.opt_f64("rate.H")? {
            Some(h) => h,
            None => self.f64("kernel.H")?,
        };
        let rho = self.opt_f64("rate.rho")?.unwrap_or(self.f64("corr.rho")?);
        let sigma0 = match self.opt_f64("rate.sigma0")? {
            Some(s) => s,
            None => self.sigma()?.eval(self.f64("model.S0")?),
        };
        let f = self.vol_function_with("rate.f.", "f.")?;
        Ok(RateProblem::new(hurst, rho, sigma0, f, self.usize("rate.K")?)?
            .with_starts(self.usize("rate.starts")?)
            .with_seed(self.seed()?))
    }

    /// `mc.moments.indices` as multi-indices, e.g. `0:0;1:0`.
    pub fn moment_indices(&self) -> Result<Vec<MultiIndex>> {
        self.required("mc.moments.indices")?
            .split(';')
            .map(|item| {
                let entries: Vec<u32> = item
                    .split(':')
                    .map(|v| v.trim().parse().map_err(|_| Error::Config(format!("bad multi-index {item:?}"))))
                    .collect::<Result<_>>()?;
                MultiIndex::new(entries)
            })
            .collect()
    }
}

/// Lower-case hex SHA-256.
pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let c = RunConfig::parse("kernel.H = 0.3  # rough\n\ngrid.N=64\n").unwrap();
        assert_eq!(c.usize("grid.N").unwrap(), 64);
        assert_eq!(c.f64("kernel.delta").unwrap(), 0.01);
        let m = c.lift_model().unwrap();
        assert_eq!(m.grid.steps(), 64);
        assert!((m.config.beta - 0.28).abs() < 1e-12);
    }

    #[test]
    fn rejects_unknown_and_missing_keys() {
        assert!(matches!(RunConfig::parse("kernel.Hurst = 0.3"), Err(Error::Config(_))));
        assert!(RunConfig::parse("just text").is_err());
        let c = RunConfig::parse("grid.N = 64").unwrap();
        let err = c.kernel().unwrap_err().to_string();
        assert!(err.contains("kernel.H"), "{err}");
    }

    #[test]
    fn canonical_hash_is_order_free() {
        let a = RunConfig::parse("kernel.H = 0.3\ngrid.N = 64").unwrap();
        let b = RunConfig::parse("grid.N = 64\nkernel.H = 0.3").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn rate_keys_fall_back_to_model() {
        let c = RunConfig::parse("kernel.H = 0.2\ncorr.rho = -0.5\nf.family = constant\nf.value = 0.3").unwrap();
        let p = c.rate_problem().unwrap();
        assert_eq!((p.hurst, p.rho, p.sigma0), (0.2, -0.5, 1.0));
        assert!(p.f.is_constant());
    }
}
