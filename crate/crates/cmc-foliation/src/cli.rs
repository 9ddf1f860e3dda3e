//! Command-line orchestration: strict TOML configuration, the
//! solve → trace → analyze → chart → report pipeline, and file emission.
//!
//! Outputs are deterministic for a fixed configuration: CSV files carry a
//! single timestamped comment line followed by a byte-reproducible body, and
//! JSON reports are serialized from the same structures the library tests pin
//! down. Every failure surfaces as one machine-readable JSON object on stderr
//! ({"module", "operation", "message"}) and a kind-specific exit code:
//! 0 ok, 2 configuration, 3 solver, 4 analysis.

use clap::{Parser, Subcommand};
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::ambient::{AmbientMetric, ExtrinsicData, InitialDataSet};
use crate::cmc_solver::{solve_cmc_with, trace_foliation, Foliation, SolveOptions, TracePolicy};
use crate::coordinate_builder::{build_chart, center_curve, eigenframe, flatness_verify, EigenFrame};
use crate::invariants::{foliation_properties, mass_report, momentum_report};
use crate::sphere_spectral::SphereGrid;
use crate::surface_geometry::{regularity_report, EmbeddedSphere, RegularityReport};
use crate::uniformization::{
    gauss_curvature_conformal, h2_norm, recover_conformal_factor, scalar_field_from_json,
};
use crate::{Error, ErrorKind, Result};

/// Environment variable overriding the configured worker count.
pub const WORKERS_ENV: &str = "CMCFOL_WORKERS";

#[derive(Parser, Debug)]
#[command(name = "cmcfol", version, about = "CMC-foliation toolkit: solve, trace, analyze, report")]
pub struct Cli {
    /// TOML configuration file; omitted means all defaults.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the configured one).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Progress lines on stderr.
    #[arg(long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    /// Solve a single CMC leaf at σ.
    SolveCmc,
    /// Trace the foliation over [σ_min, σ_max].
    Trace,
    /// Hawking and ADM mass tables with extrapolated limits.
    Masses,
    /// CMC vs ADM linear momentum (needs a [momentum] section).
    Momentum,
    /// Build asymptotic coordinates and verify the decay inequality.
    Coords,
    /// Foliation property residuals (eigenvalue, area, mass-derivative checks).
    Properties,
    /// Recover a conformal factor from a curvature field file.
    Uniformize,
    /// Aggregate report: trace + masses + properties + chart in one pass.
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::SolveCmc => "solve-cmc",
            Command::Trace => "trace",
            Command::Masses => "masses",
            Command::Momentum => "momentum",
            Command::Coords => "coords",
            Command::Properties => "properties",
            Command::Uniformize => "uniformize",
            Command::Report => "report",
        }
    }
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    metric: RawMetric,
    #[serde(default)]
    run: RawRun,
    momentum: Option<RawMomentum>,
    #[serde(default)]
    coords: RawCoords,
    #[serde(default)]
    uniformize: RawUniformize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMetric {
    family: Option<String>,
    mass: Option<f64>,
    center: Option<[f64; 3]>,
    amplitude: Option<f64>,
    tau: Option<f64>,
    omega: Option<f64>,
}

impl Default for RawMetric {
    fn default() -> Self {
        RawMetric { family: None, mass: None, center: None, amplitude: None, tau: None, omega: None }
    }
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawRun {
    l_max: Option<usize>,
    sigma: Option<f64>,
    sigma_min: Option<f64>,
    sigma_max: Option<f64>,
    tol: Option<f64>,
    workers: Option<usize>,
    out_dir: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMomentum {
    kind: Option<String>,
    a: Option<[f64; 3]>,
    p: Option<[f64; 3]>,
    adm_radius: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawCoords {
    eps: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawUniformize {
    curvature: Option<PathBuf>,
}

/// Momentum-run parameters: the extrinsic data and the reference flux radius.
#[derive(Clone, Debug)]
pub struct MomentumConfig {
    pub extrinsic: ExtrinsicData,
    pub adm_radius: f64,
}

/// Fully validated run configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub metric: AmbientMetric,
    pub l_max: usize,
    /// Leaf radius for single-leaf subcommands.
    pub sigma: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Newton tolerance factor (residual target is tol/σ²).
    pub tol: f64,
    pub workers: usize,
    pub out_dir: PathBuf,
    pub momentum: Option<MomentumConfig>,
    /// Decay exponent offset ε tested by `coords`.
    pub coords_eps: f64,
    /// Curvature-field JSON consumed by `uniformize`, resolved against the
    /// config file's directory.
    pub curvature: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            metric: AmbientMetric::Schwarzschild { mass: 1.0, center: [0.0; 3] },
            l_max: 24,
            sigma: 50.0,
            sigma_min: 20.0,
            sigma_max: 100.0,
            tol: 1e-9,
            workers: 1,
            out_dir: PathBuf::from("cmcfol-out"),
            momentum: None,
            coords_eps: 0.0,
            curvature: None,
        }
    }
}

/// Every key the configuration grammar knows, for near-miss suggestions.
const KNOWN_KEYS: &[&str] = &[
    "metric", "run", "momentum", "coords", "uniformize", "family", "mass", "center", "amplitude",
    "tau", "omega", "l_max", "sigma", "sigma_min", "sigma_max", "tol", "workers", "out_dir",
    "kind", "a", "p", "adm_radius", "eps", "curvature",
];

fn levenshtein(a: &str, b: &str) -> usize {
    let n = b.chars().count();
    let mut prev: Vec<usize> = (0..=n).collect();
    for (i, ca) in a.chars().enumerate() {
        let mut cur = vec![i + 1; n + 1];
        for (j, cb) in b.chars().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        prev = cur;
    }
    prev[n]
}

/// Append "did you mean …?" when a rejected key is a near miss of a known one.
fn suggest_key(message: &str) -> String {
    let Some(start) = message.find("unknown field `") else { return message.to_string() };
    let rest = &message[start + "unknown field `".len()..];
    let Some(end) = rest.find('`') else { return message.to_string() };
    let bad = &rest[..end];
    let best = KNOWN_KEYS
        .iter()
        .map(|k| (levenshtein(bad, k), *k))
        .min()
        .filter(|(d, _)| *d <= 2 && *d > 0);
    match best {
        Some((_, key)) => format!("{message}; did you mean `{key}`?"),
        None => message.to_string(),
    }
}

fn config_err(class: &str, message: impl Into<String>) -> Error {
    Error::config("cli", "parse_config", format!("{class} error: {}", message.into()))
}

/// Parse and validate a configuration file. Parsing is strict: unknown keys
/// are rejected by name (with a near-miss suggestion), and syntax, type and
/// range problems are distinguished in the message.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_err("io", format!("cannot read {}: {e}", path.display())))?;
    let raw: RawConfig = toml::from_str(&text).map_err(|e| {
        let msg = e.to_string();
        let class = if msg.contains("unknown field") {
            "unknown-key"
        } else if msg.contains("invalid type") {
            "type"
        } else {
            "syntax"
        };
        config_err(class, suggest_key(msg.trim()))
    })?;
    validate(raw, path.parent().unwrap_or(Path::new(".")))
}

fn validate(raw: RawConfig, base: &Path) -> Result<RunConfig> {
    let d = RunConfig::default();
    let m = raw.metric;
    let mass = m.mass.unwrap_or(1.0);
    let metric = match m.family.as_deref().unwrap_or("schwarzschild") {
        "euclidean" => AmbientMetric::Euclidean,
        "schwarzschild" => {
            AmbientMetric::Schwarzschild { mass, center: m.center.unwrap_or([0.0; 3]) }
        }
        "perturbed" => AmbientMetric::Perturbed {
            mass,
            amplitude: m.amplitude.unwrap_or(0.1),
            tau: m.tau.unwrap_or(1.0),
            omega: m.omega.unwrap_or(1.0),
        },
        other => {
            return Err(config_err(
                "range",
                format!("metric family `{other}` is not one of euclidean, schwarzschild, perturbed"),
            ))
        }
    };
    if let AmbientMetric::Perturbed { tau, .. } = metric {
        if !(tau > 0.0) {
            return Err(config_err("range", format!("tau = {tau} must be positive")));
        }
    }

    let r = raw.run;
    let l_max = r.l_max.unwrap_or(d.l_max);
    if !(4..=48).contains(&l_max) {
        return Err(config_err("range", format!("l_max = {l_max} outside the supported range 4..=48")));
    }
    let sigma_min = r.sigma_min.unwrap_or(d.sigma_min);
    let sigma_max = r.sigma_max.unwrap_or(d.sigma_max);
    if !(sigma_min > 0.0) {
        return Err(config_err("range", format!("sigma_min = {sigma_min} must be positive")));
    }
    if sigma_min > sigma_max {
        return Err(config_err(
            "range",
            format!("sigma_min = {sigma_min} exceeds sigma_max = {sigma_max}"),
        ));
    }
    let sigma = r.sigma.unwrap_or(0.5 * (sigma_min + sigma_max));
    if !(sigma > 0.0) {
        return Err(config_err("range", format!("sigma = {sigma} must be positive")));
    }
    let tol = r.tol.unwrap_or(d.tol);
    if !(tol > 0.0 && tol < 1e-2) {
        return Err(config_err("range", format!("tol = {tol} outside (0, 1e-2)")));
    }
    let workers = r.workers.unwrap_or(d.workers);
    if workers == 0 || workers > 256 {
        return Err(config_err("range", format!("workers = {workers} outside 1..=256")));
    }

    let momentum = match raw.momentum {
        None => None,
        Some(mom) => {
            let adm_radius = mom.adm_radius.unwrap_or(4.0 * sigma_max);
            if !(adm_radius > 0.0) {
                return Err(config_err("range", format!("adm_radius = {adm_radius} must be positive")));
            }
            let extrinsic = match mom.kind.as_deref().unwrap_or("linearized_flow") {
                "linearized_flow" => {
                    ExtrinsicData::LinearizedFlow { a: mom.a.unwrap_or([0.0, 0.0, 0.02]) }
                }
                "bowen_york" => ExtrinsicData::BowenYork { p: mom.p.unwrap_or([0.0, 0.0, 0.02]) },
                other => {
                    return Err(config_err(
                        "range",
                        format!("momentum kind `{other}` is not one of linearized_flow, bowen_york"),
                    ))
                }
            };
            Some(MomentumConfig { extrinsic, adm_radius })
        }
    };

    let curvature = raw.uniformize.curvature.map(|p| {
        if p.is_relative() {
            base.join(p)
        } else {
            p
        }
    });

    Ok(RunConfig {
        metric,
        l_max,
        sigma,
        sigma_min,
        sigma_max,
        tol,
        workers,
        out_dir: r.out_dir.unwrap_or(d.out_dir),
        momentum,
        coords_eps: raw.coords.eps.unwrap_or(0.0),
        curvature,
    })
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

struct Run {
    cfg: RunConfig,
    out: PathBuf,
    verbose: bool,
    pool: rayon::ThreadPool,
    written: Vec<PathBuf>,
}

impl Run {
    fn log(&self, msg: &str) {
        if self.verbose {
            eprintln!("[cmcfol] {msg}");
        }
    }

    fn grid(&self) -> Arc<SphereGrid> {
        SphereGrid::get(self.cfg.l_max)
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.out.join(name);
        std::fs::write(&path, contents)
            .map_err(|e| Error::config("cli", "run", format!("cannot write {}: {e}", path.display())))?;
        self.log(&format!("wrote {}", path.display()));
        self.written.push(path);
        Ok(())
    }

    /// CSV with a timestamped comment header and a deterministic body.
    fn write_csv(&mut self, name: &str, sub: Command, body: &str) -> Result<()> {
        let t = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        self.write(name, &format!("# cmcfol {} unix_time={t}\n{body}", sub.name()))
    }

    fn json<T: serde::Serialize>(value: &T) -> Result<String> {
        serde_json::to_string_pretty(value)
            .map_err(|e| Error::analysis("cli", "run", format!("serialization failed: {e}")))
    }

    fn trace(&self) -> Result<Foliation> {
        self.log(&format!(
            "tracing {} over [{}, {}] at l_max = {}",
            self.cfg.metric.id(),
            self.cfg.sigma_min,
            self.cfg.sigma_max,
            self.cfg.l_max
        ));
        let policy = TracePolicy {
            solve: SolveOptions { tol_factor: self.cfg.tol, ..SolveOptions::default() },
            ..TracePolicy::default()
        };
        let fol =
            trace_foliation(&self.cfg.metric, self.cfg.sigma_min, self.cfg.sigma_max, &policy, self.grid())?;
        if let Some(reason) = &fol.aborted {
            return Err(Error::solver(
                "cli",
                "trace",
                format!("continuation aborted at σ = {:.3}: {reason}", fol.leaves.last().map(|l| l.sigma).unwrap_or(f64::NAN)),
            ));
        }
        self.log(&format!("traced {} leaves", fol.leaves.len()));
        Ok(fol)
    }

    /// Per-leaf regularity diagnostics, fanned out over the worker pool.
    fn regularity(&self, fol: &Foliation) -> Result<Vec<RegularityReport>> {
        use rayon::prelude::*;
        let metric = &self.cfg.metric;
        self.pool.install(|| {
            fol.leaves
                .par_iter()
                .map(|leaf| regularity_report(metric, &leaf.sphere, 2.0))
                .collect::<Result<Vec<_>>>()
        })
    }

    fn chart_of(&self, fol: &Foliation) -> Result<(crate::coordinate_builder::Chart, crate::coordinate_builder::FlatnessReport)> {
        let mut frames: Vec<EigenFrame> = Vec::with_capacity(fol.leaves.len());
        for leaf in &fol.leaves {
            let f = eigenframe(leaf, frames.last())?;
            frames.push(f);
        }
        let centers = center_curve(fol, &frames)?;
        let chart = build_chart(fol, &frames, &centers)?;
        let report = flatness_verify(&chart, self.cfg.coords_eps)?;
        Ok((chart, report))
    }

    fn cmd_solve_cmc(&mut self) -> Result<()> {
        let guess = EmbeddedSphere::round(self.grid(), [0.0; 3], self.cfg.sigma)?;
        let opts = SolveOptions { tol_factor: self.cfg.tol, ..SolveOptions::default() };
        let leaf = solve_cmc_with(&self.cfg.metric, self.cfg.sigma, &guess, &opts)?;
        self.log(&format!(
            "σ = {}: {} Newton iterations, residual {:.3e}",
            leaf.sigma, leaf.newton_iters, leaf.residual
        ));
        self.write("leaf.json", &Self::json(&leaf.record())?)
    }

    fn cmd_trace(&mut self) -> Result<()> {
        let fol = self.trace()?;
        let mut jsonl = Vec::new();
        fol.write_jsonl(&mut jsonl)?;
        let jsonl = String::from_utf8(jsonl)
            .map_err(|e| Error::analysis("cli", "trace", format!("non-UTF8 record: {e}")))?;
        self.write("foliation.jsonl", &jsonl)?;
        self.write_csv("trace.csv", Command::Trace, &fol.csv_body())
    }

    fn cmd_masses(&mut self) -> Result<()> {
        let fol = self.trace()?;
        let radii: Vec<f64> = (0..4).map(|k| self.cfg.sigma_max * f64::powi(2.0, k)).collect();
        let report = mass_report(&self.cfg.metric, &fol, &radii, self.grid())?;
        self.write("masses.json", &Self::json(&report)?)?;
        self.write_csv("masses.csv", Command::Masses, &report.csv_body())
    }

    fn cmd_momentum(&mut self) -> Result<()> {
        let Some(mom) = self.cfg.momentum.clone() else {
            return Err(Error::config(
                "cli",
                "momentum",
                "a [momentum] section (kind, a or p, adm_radius) is required",
            ));
        };
        let fol = self.trace()?;
        let data = InitialDataSet { metric: self.cfg.metric.clone(), extrinsic: mom.extrinsic };
        let report = momentum_report(&data, &fol, mom.adm_radius)?;
        self.write("momentum.json", &Self::json(&report)?)?;
        self.write_csv("momentum.csv", Command::Momentum, &report.csv_body())
    }

    fn cmd_coords(&mut self) -> Result<()> {
        let fol = self.trace()?;
        let (chart, report) = self.chart_of(&fol)?;
        self.write("chart.jsonl", &chart.to_jsonl())?;
        self.write("flatness.json", &Self::json(&report)?)
    }

    fn cmd_properties(&mut self) -> Result<()> {
        let fol = self.trace()?;
        let report = foliation_properties(&fol)?;
        self.write("properties.json", &Self::json(&report)?)?;
        self.write_csv("properties.csv", Command::Properties, &report.csv_body())
    }

    fn cmd_uniformize(&mut self) -> Result<()> {
        let Some(path) = self.cfg.curvature.clone() else {
            return Err(Error::config(
                "cli",
                "uniformize",
                "a [uniformize] section with a `curvature` field file is required",
            ));
        };
        let text = std::fs::read_to_string(&path).map_err(|e| {
            Error::config("cli", "uniformize", format!("cannot read {}: {e}", path.display()))
        })?;
        let k_target = scalar_field_from_json(&text)?;
        let factor = recover_conformal_factor(&k_target)?;
        let residual = gauss_curvature_conformal(&factor.w).sub(&k_target).sup();
        self.log(&format!("recovered factor: curvature residual {residual:.3e}"));
        #[derive(serde::Serialize)]
        struct Summary {
            curvature_residual_sup: f64,
            h2_norm: f64,
            measure: f64,
            gauss_bonnet: f64,
        }
        let summary = Summary {
            curvature_residual_sup: residual,
            h2_norm: h2_norm(&factor.w),
            measure: factor.measure(),
            gauss_bonnet: factor.gauss_bonnet(),
        };
        self.write("factor.json", &factor.to_json())?;
        self.write("uniformize.json", &Self::json(&summary)?)
    }

    fn cmd_report(&mut self) -> Result<()> {
        let fol = self.trace()?;
        let regularity = self.regularity(&fol)?;
        let radii: Vec<f64> = (0..4).map(|k| self.cfg.sigma_max * f64::powi(2.0, k)).collect();
        let masses = mass_report(&self.cfg.metric, &fol, &radii, self.grid())?;
        let properties = foliation_properties(&fol)?;
        let (_, flatness) = self.chart_of(&fol)?;
        let momentum = match self.cfg.momentum.clone() {
            Some(mom) => {
                let data =
                    InitialDataSet { metric: self.cfg.metric.clone(), extrinsic: mom.extrinsic };
                Some(momentum_report(&data, &fol, mom.adm_radius)?)
            }
            None => None,
        };

        #[derive(serde::Serialize)]
        struct Aggregate {
            metric: &'static str,
            leaves: Vec<crate::cmc_solver::LeafRecord>,
            regularity: Vec<RegularityReport>,
            masses: crate::invariants::MassReport,
            properties: crate::invariants::PropertyResiduals,
            flatness: crate::coordinate_builder::FlatnessReport,
            momentum: Option<crate::invariants::MomentumReport>,
        }
        let aggregate = Aggregate {
            metric: self.cfg.metric.id(),
            leaves: fol.leaves.iter().map(|l| l.record()).collect(),
            regularity,
            masses,
            properties,
            flatness,
            momentum,
        };

        // Plot-ready long format: one (series, abscissa, value) row per line.
        let mut csv = String::from("series,at,value\n");
        for (leaf, reg) in aggregate.leaves.iter().zip(&aggregate.regularity) {
            csv.push_str(&format!("hawking,{},{}\n", leaf.sigma, leaf.hawking));
            csv.push_str(&format!("kring_sup,{},{}\n", leaf.sigma, reg.linf_tracefree));
            csv.push_str(&format!("lambda_min,{},{}\n", leaf.sigma, leaf.lambda_min));
            csv.push_str(&format!("lapse_mean,{},{}\n", leaf.sigma, leaf.lapse_mean));
        }
        for row in &aggregate.masses.adm_flux {
            csv.push_str(&format!("adm_flux,{},{}\n", row.at, row.value));
        }
        for row in &aggregate.masses.adm_ricci {
            csv.push_str(&format!("adm_ricci,{},{}\n", row.at, row.value));
        }
        for row in &aggregate.flatness.rows {
            csv.push_str(&format!("flatness_weighted,{},{}\n", row.sigma, row.weighted));
        }
        if let Some(mom) = &aggregate.momentum {
            for row in &mom.rows {
                csv.push_str(&format!("momentum_gap,{},{}\n", row.sigma, row.gap));
            }
        }

        self.write("report.json", &Self::json(&aggregate)?)?;
        self.write_csv("report.csv", Command::Report, &csv)
    }
}

/// Execute a parsed invocation; returns the files written.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let mut cfg = match &cli.config {
        Some(path) => parse_config(path)?,
        None => RunConfig::default(),
    };
    if let Ok(var) = std::env::var(WORKERS_ENV) {
        let n: usize = var.parse().map_err(|_| {
            Error::config("cli", "run", format!("range error: {WORKERS_ENV} = `{var}` is not a worker count"))
        })?;
        if n == 0 || n > 256 {
            return Err(Error::config("cli", "run", format!("range error: {WORKERS_ENV} = {n} outside 1..=256")));
        }
        cfg.workers = n;
    }
    let out = cli.out.clone().unwrap_or_else(|| cfg.out_dir.clone());
    std::fs::create_dir_all(&out)
        .map_err(|e| Error::config("cli", "run", format!("cannot create {}: {e}", out.display())))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::config("cli", "run", format!("worker pool: {e}")))?;
    let mut run = Run { cfg, out, verbose: cli.verbose, pool, written: Vec::new() };
    match cli.command {
        Command::SolveCmc => run.cmd_solve_cmc()?,
        Command::Trace => run.cmd_trace()?,
        Command::Masses => run.cmd_masses()?,
        Command::Momentum => run.cmd_momentum()?,
        Command::Coords => run.cmd_coords()?,
        Command::Properties => run.cmd_properties()?,
        Command::Uniformize => run.cmd_uniformize()?,
        Command::Report => run.cmd_report()?,
    }
    Ok(run.written)
}

/// Exit code of an error by kind: 2 config, 3 solver, 4 analysis.
pub fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Solver => 3,
        ErrorKind::Analysis => 4,
    }
}

/// Binary entry point: parse, run, emit error JSON on stderr, map exit codes.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(files) => {
            println!("ok {} files={}", cli.command.name(), files.len());
            0
        }
        Err(err) => {
            let json = serde_json::json!({
                "module": err.module,
                "operation": err.operation,
                "message": err.message,
            });
            eprintln!("{json}");
            exit_code(err.kind)
        }
    }
}
