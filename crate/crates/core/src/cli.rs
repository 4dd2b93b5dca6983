//! Batch driver: one subcommand per pipeline, each writing CSV/JSON outputs
//! plus a `manifest.json` (version, resolved config, config hash, seed and
//! output digests) and a separate `timing.json`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::analysis::{
    chen_defect_report, generator_defect_report, path_norms, random_triples, rough_path_norms, write_holder_csv,
    PairScheme,
};
use crate::config::{hex_digest, RunConfig};
use crate::error::{Error, Result};
use crate::integrate::{
    estimate_k, integrate, theoretical_bounds, BoundParams, RoughPath, VolFamily,
};
use crate::mc::{
    ito_consistency_check, ldp_tail_check, moment_scaling_check, price_and_implied_vol, scaling_check,
    write_price_csv, CheckResult, McReport, TailSetup,
};
use crate::path::PartialRoughPath;
use crate::rate::{smile_curve, write_smile_csv, z_grid};
use crate::rde::{solve_model, write_paths_csv, Sigma};

/// Relative tolerance of the Chen and generator checks.
pub const DEFECT_TOL: f64 = 1e-10;
pub const THREADS_ENV: &str = "PARPATH_THREADS";

#[derive(Debug, Parser)]
#[command(name = "parpath", version, about = "Partial rough path pipelines for rough volatility")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides `rng.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; falls back to PARPATH_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, Debug, Subcommand)]
enum Command {
    /// Simulate and lift `run.paths` paths.
    Lift,
    /// Chen, generator, Hölder and bound checks of lifts or of a dump.
    Verify,
    /// Rough integrals `∫ f(X̂) d𝕏` with convergence traces.
    Integrate,
    /// Full model pipeline with an Euler–Maruyama reference.
    Rde,
    /// Rate function on the z-grid.
    Rate,
    /// Rate function with asymptotic implied volatilities.
    Smile,
    /// Monte Carlo checks listed in `mc.checks`.
    Mc,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Lift => "lift",
            Command::Verify => "verify",
            Command::Integrate => "integrate",
            Command::Rde => "rde",
            Command::Rate => "rate",
            Command::Smile => "smile",
            Command::Mc => "mc",
        }
    }
}

/// `Some(message)` when a command completed but some of its checks failed.
type Checked = Option<String>;

/// Files written by one command, in write order.
struct Outputs {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.files.push((name.to_string(), hex_digest(bytes)));
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("parpath {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{THREADS_ENV} = {v} is not a thread count"))),
        Err(_) => Ok(None),
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::parse("")?,
    };
    if let Some(seed) = cli.seed {
        config.set("rng.seed", seed.to_string())?;
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count(cli.threads)? {
        if n == 0 {
            return Err(Error::Config("thread count must be positive".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let start = Instant::now();
    let mut out = Outputs::new(&cli.out)?;
    let failed = pool.install(|| match cli.command {
        Command::Lift => cmd_lift(&config, &mut out),
        Command::Verify => cmd_verify(&config, &mut out),
        Command::Integrate => cmd_integrate(&config, &mut out),
        Command::Rde => cmd_rde(&config, &mut out),
        Command::Rate => cmd_rate(&config, &mut out),
        Command::Smile => cmd_smile(&config, &mut out),
        Command::Mc => cmd_mc(&config, &mut out),
    })?;
    let runtime = start.elapsed().as_secs_f64();
    write_manifest(cli.command, &config, &mut out)?;
    let timing = json!({ "command": cli.command.name(), "runtime_seconds": runtime });
    fs::write(out.dir.join("timing.json"), format!("{timing:#}\n"))?;
    match failed {
        Some(message) => Err(Error::Numerical(message)),
        None => Ok(()),
    }
}

fn write_manifest(command: Command, config: &RunConfig, out: &mut Outputs) -> Result<()> {
    let outputs: Vec<Value> = out.files.iter().map(|(f, h)| json!({ "file": f, "sha256": h })).collect();
    let manifest = json!({
        "command": command.name(),
        "version": format!("parpath {}", env!("CARGO_PKG_VERSION")),
        "config": config.values(),
        "config_hash": config.hash(),
        "seed": config.seed()?,
        "outputs": outputs,
    });
    out.json("manifest.json", &manifest)
}

fn csv_lift(prp: &PartialRoughPath, x: &[f64]) -> String {
    let mut s = String::from("node,xhat1,xhat2,X\n");
    for (q, xq) in x.iter().enumerate() {
        let xh = prp.xhat_at(q);
        let _ = writeln!(s, "{q},{},{},{xq}", xh[0], xh[1]);
    }
    s
}

fn cmd_lift(config: &RunConfig, out: &mut Outputs) -> Result<Checked> {
    let model = config.lift_model()?;
    let plan = model.plan();
    for p in 0..config.u64("run.paths")? {
        let (bundle, prp) = model.lift(p, &plan)?;
        let mut dump = Vec::new();
        prp.write_to(&mut dump)?;
        out.write(&format!("path_{p}.prp"), &dump)?;
        out.write(&format!("path_{p}.csv"), csv_lift(&prp, &bundle.x()).as_bytes())?;
    }
    Ok(None)
}

fn scheme(config: &RunConfig, grid: &crate::grid::Grid) -> Result<PairScheme> {
    match config.get("verify.scheme").unwrap_or("auto") {
        "auto" => Ok(PairScheme::default_for(grid)),
        "exhaustive" => Ok(PairScheme::Exhaustive),
        "dyadic" => Ok(PairScheme::Dyadic),
        other => Err(Error::Config(format!("verify.scheme = {other} is not auto, exhaustive or dyadic"))),
    }
}

fn verify_one(config: &RunConfig, prp: &PartialRoughPath, label: &str, out: &mut Outputs) -> Result<(Value, bool)> {
    let grid = *prp.grid();
    let seed = config.seed()?;
    let triples = config.usize("verify.triples")?;
    if triples == 0 {
        return Err(Error::Config("verify.triples must be positive".into()));
    }
    let chen = chen_defect_report(prp, &random_triples(&grid, triples, seed))?;
    let chen_pass = chen.max() <= DEFECT_TOL;
    let pairs: Vec<(usize, usize)> = random_triples(&grid, config.usize("verify.pairs")?, seed ^ 0x9e37_79b9)
        .into_iter()
        .map(|(s, _, t)| (s, t))
        .collect();
    let generator = generator_defect_report(prp, &pairs)?;
    let generator_pass = generator.max() <= DEFECT_TOL;

    let scheme = scheme(config, &grid)?;
    let norms = path_norms(prp, scheme)?;
    let mut holder = Vec::new();
    write_holder_csv(&mut holder, &norms.rows(prp))?;
    out.write(&format!("holder_{label}.csv"), &holder)?;

    let f = config.vol_function()?;
    let (y, _) = integrate(prp, &f, config.f64("integrate.tol")?)?;
    let k = estimate_k(&[prp], &f)?;
    let m = norms.homogeneous(prp).max(norms.max_component());
    let constants = theoretical_bounds(&BoundParams::from_config(prp.config()), m)?;
    let (y1, y2) = rough_path_norms(&y, scheme)?;
    let level1_bound = k * constants.c1;
    let level2_bound = k * k * constants.c2;
    let bounds_pass = y1.sup_ratio <= level1_bound && y2.sup_ratio <= level2_bound;

    let pass = chen_pass && generator_pass && bounds_pass;
    let entry = json!({
        "path": label,
        "pass": pass,
        "chen": { "report": chen, "tolerance": DEFECT_TOL, "pass": chen_pass },
        "generator": { "report": generator, "tolerance": DEFECT_TOL, "pass": generator_pass },
        "holder": norms,
        "homogeneous_norm": norms.homogeneous(prp),
        "bounds": {
            "k": k,
            "m": m,
            "constants": constants,
            "level1": { "measured": y1.sup_ratio, "bound": level1_bound },
            "level2": { "measured": y2.sup_ratio, "bound": level2_bound },
            "pass": bounds_pass,
        },
    });
    Ok((entry, pass))
}

/// Writes `verify.json`; any failed entry makes the run exit with the
/// numerical code once all outputs are written.
fn cmd_verify(config: &RunConfig, out: &mut Outputs) -> Result<Checked> {
    let mut entries = Vec::new();
    let mut all = true;
    if let Some(input) = config.get("verify.input") {
        let file = fs::File::open(input).map_err(|e| Error::Config(format!("cannot open {input}: {e}")))?;
        let prp = PartialRoughPath::read_from(std::io::BufReader::new(file))?;
        let (entry, pass) = verify_one(config, &prp, "input", out)?;
        entries.push(entry);
        all &= pass;
    } else {
        let model = config.lift_model()?;
        let plan = model.plan();
        for p in 0..config.u64("run.paths")? {
            let (_, prp) = model.lift(p, &plan)?;
            let (entry, pass) = verify_one(config, &prp, &p.to_string(), out)?;
            entries.push(entry);
            all &= pass;
        }
    }
    out.json("verify.json", &json!({ "pass": all, "entries": entries }))?;
    Ok((!all).then(|| "verification failed; see verify.json".to_string()))
}

fn csv_integral(y: &RoughPath) -> String {
    let mut s = String::from("node,t,Y1,Y2\n");
    for q in 0..=y.grid().steps() {
        let _ = writeln!(s, "{q},{},{},{}", y.grid().node(q), y.y1_at(q)[0], y.y2_at(q)[0]);
    }
    s
}

fn cmd_integrate(config: &RunConfig, out: &mut Outputs) -> Result<Checked> {
    let model = config.lift_model()?;
    let f = config.vol_function()?;
    let tol = config.f64("integrate.tol")?;
    let plan = model.plan();
    let mut warnings = Vec::new();
    for p in 0..config.u64("run.paths")? {
        let (_, prp) = model.lift(p, &plan)?;
        let (y, trace) = integrate(&prp, &f, tol)?;
        warnings.extend(trace.warnings().map(|w| format!("path {p}: {w}")));
        let mut dump = Vec::new();
        y.write_to(&mut dump)?;
        out.write(&format!("integral_{p}.rp"), &dump)?;
        out.write(&format!("integral_{p}.csv"), csv_integral(&y).as_bytes())?;
        let mut csv = Vec::new();
        trace.write_csv(&mut csv)?;
        out.write(&format!("trace_{p}.csv"), &csv)?;
    }
    out.json("warnings.json", &warnings)?;
    Ok(None)
}

fn cmd_rde(config: &RunConfig, out: &mut Outputs) -> Result<Checked> {
    let model = config.model()?;
    let paths = solve_model(&model, config.u64("run.paths")?)?;
    let nodes = model.lift.grid.nodes();
    let mut csv = Vec::new();
    write_paths_csv(&mut csv, &paths, &nodes)?;
    out.write("paths.csv", &csv)?;
    let mut em = String::from("path_id,t,S_em\n");
    let mut warnings = Vec::new();
    for p in &paths {
        for (t, s) in nodes.iter().zip(&p.s_em) {
            let _ = writeln!(em, "{},{t},{s}", p.path_index);
        }
        warnings.extend(p.warnings.iter().map(|w| format!("path {}: {w}", p.path_index)));
    }
    warnings.dedup();
    out.write("paths_em.csv", em.as_bytes())?;
    out.json("warnings.json", &warnings)?;
    Ok(None)
}

fn cmd_rate(config: &RunConfig, out: &mut Outputs) -> Result<Checked> {
    let problem = config.rate_problem()?;
    let zs = z_grid(config.f64("rate.z_min")?, config.f64("rate.z_max")?, config.usize("rate.z_steps")?)?;
    let rows = smile_curve(&problem, &zs)?;
    let mut csv = String::from("z,rate,iterations,restarts,grad_norm,optimality_residual\n");
    let mut controls = String::from("z,cell,g\n");
    for r in &rows {
        let s = &r.solution;
        let _ = writeln!(
            csv,
            "{},{},{},{},{:e},{:e}",
            s.z, s.value, s.iterations, s.restarts, s.grad_norm, s.optimality_residual
        );
        for (k, g) in s.g.iter().enumerate() {
            let _ = writeln!(controls, "{},{k},{g}", s.z);
        }
    }
    out.write("rate.csv", csv.as_bytes())?;
    out.write("controls.csv", controls.as_bytes())?;
    Ok(None)
}

fn cmd_smile(config: &RunConfig, out: &mut Outputs) -> Result<Checked> {
    let problem = config.rate_problem()?;
    let zs = z_grid(config.f64("rate.z_min")?, config.f64("rate.z_max")?, config.usize("rate.z_steps")?)?;
    let rows = smile_curve(&problem, &zs)?;
    let mut csv = Vec::new();
    write_smile_csv(&mut csv, &rows)?;
    out.write("smile.csv", &csv)?;
    Ok(None)
}

fn check(name: String, statistic: f64, expected: f64, stderr: f64, tolerance: f64, pass: bool) -> CheckResult {
    CheckResult { name, statistic, expected, stderr, tolerance, pass }
}

fn cmd_mc(config: &RunConfig, out: &mut Outputs) -> Result<Checked> {
    let n_paths = config.usize("mc.paths")?;
    let seed = config.seed()?;
    let mut checks = Vec::new();
    let mut warnings = Vec::new();
    for name in config.list_str("mc.checks")? {
        match name.as_str() {
            "moments" => {
                let model = config.lift_model()?;
                let mut csv = String::from("index,t,second_moment,stderr\n");
                for i in config.moment_indices()? {
                    let r = moment_scaling_check(&model, &i, n_paths, config.usize("mc.moments.levels")?)?;
                    for ((t, m), se) in r.times.iter().zip(&r.second_moments).zip(&r.stderrs) {
                        let _ = writeln!(csv, "{i},{t},{m},{se}");
                    }
                    warnings.extend(r.warning.clone());
                    let pass = (r.slope - r.expected).abs() <= 0.05;
                    checks.push(check(format!("moment_slope_{i}"), r.slope, r.expected, f64::NAN, 0.05, pass));
                }
                out.write("moments.csv", csv.as_bytes())?;
            }
            "ito" => {
                let model = config.lift_model()?;
                let levels: Vec<usize> = config
                    .list_str("mc.ito.levels")?
                    .iter()
                    .map(|v| v.parse().map_err(|_| Error::Config(format!("mc.ito.levels: {v} is not a step count"))))
                    .collect::<Result<_>>()?;
                let r = ito_consistency_check(&model, &config.vol_function()?, &levels, n_paths, config.f64("integrate.tol")?)?;
                let mut csv = String::from("steps,rms,higher_order_rms\n");
                for l in &r.levels {
                    let _ = writeln!(csv, "{},{},{}", l.steps, l.rms, l.higher_order_rms);
                }
                out.write("ito.csv", csv.as_bytes())?;
                let (first, last) = (r.levels[0].rms, r.levels[r.levels.len() - 1].rms);
                let ratio = if first > 0.0 { last / first } else { 0.0 };
                let converged = last <= 1e-12 * (1.0 + first);
                let pass = converged || (r.decreasing && ratio <= 1.0);
                checks.push(check("ito_rms_ratio".into(), ratio, 0.0, f64::NAN, 1.0, pass));
            }
            "price" => {
                let model = config.model()?;
                let rows = price_and_implied_vol(
                    &model,
                    &config.list_f64("mc.strikes")?,
                    &config.list_f64("mc.maturities")?,
                    n_paths,
                )?;
                let mut csv = Vec::new();
                write_price_csv(&mut csv, &rows)?;
                out.write("prices.csv", &csv)?;
                let flat = match (model.f.family(), &model.sigma) {
                    (VolFamily::Constant { value: v }, Sigma::Linear { a, b }) if *a == 0.0 && *b == 1.0 => Some(*v),
                    _ => None,
                };
                match flat {
                    Some(v0) => {
                        for r in &rows {
                            let name = format!("implied_vol_K{}_T{}", r.strike, r.maturity);
                            let (iv, se) = (r.implied_vol.unwrap_or(f64::NAN), r.implied_vol_stderr.unwrap_or(f64::NAN));
                            checks.push(check(name, iv, v0, se, 3.0 * se, (iv - v0).abs() <= 3.0 * se));
                        }
                    }
                    None => warnings.push("price: no flat-smile oracle for this model; table only".into()),
                }
            }
            "tail" => {
                let model = config.model()?;
                let setup = TailSetup {
                    spec: model.lift.spec.clone(),
                    config: model.lift.config.clone(),
                    rho: model.lift.rho,
                    seed,
                    steps: config.usize("mc.tail.steps")?,
                    f: model.f.clone(),
                    sigma: model.sigma.clone(),
                    s0: model.s0,
                    tol: model.tol,
                    rate_cells: config.usize("rate.K")?,
                };
                let r = ldp_tail_check(&setup, config.f64("mc.tail.z")?, &config.list_f64("mc.tail.t_grid")?, n_paths)?;
                let mut csv = String::from("t,u,exceedances,probability\n");
                for row in &r.rows {
                    let _ = writeln!(csv, "{},{},{},{}", row.t, row.u, row.exceedances, row.probability);
                }
                out.write("tail.csv", csv.as_bytes())?;
                let tol = if model.lift.spec.hurst() == Some(0.5) { 0.1 } else { 0.3 };
                let pass = r.skipped || r.relative_error <= tol;
                checks.push(check("tail_slope".into(), r.slope, r.rate, f64::NAN, tol * r.rate, pass));
            }
            "scaling" => {
                let model = config.lift_model()?;
                let rows = scaling_check(&model, &config.list_f64("mc.scaling.eps")?, n_paths)?;
                let mut csv = String::from("epsilon,moment,difference,stderr,pass\n");
                for r in &rows {
                    let _ = writeln!(csv, "{},{},{},{},{}", r.epsilon, r.moment, r.difference, r.stderr, r.pass);
                    let name = format!("scaling_eps{}_k{}", r.epsilon, r.moment);
                    checks.push(check(name, r.difference, 0.0, r.stderr, 3.0 * r.stderr, r.pass));
                }
                out.write("scaling.csv", csv.as_bytes())?;
            }
            other => return Err(Error::Config(format!("mc.checks: unknown check {other}"))),
        }
    }
    let report = McReport { seed, n_paths, checks, warnings };
    let failed = report.checks.iter().filter(|c| !c.pass).count();
    out.json("mc.json", &report)?;
    Ok((failed > 0).then(|| format!("{failed} of {} checks failed; see mc.json", report.checks.len())))
}
