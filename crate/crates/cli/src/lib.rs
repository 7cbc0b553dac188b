//! Command-line front end for the hyperboloid oscillator toolkit.
//!
//! The binary is a thin wrapper over [`run`]; every subcommand is also exposed as
//! a function so it can be driven from tests.

use std::collections::{BTreeMap, HashSet};
use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use hyposc_core::dynamics::{
    events_json, integrate, invariants_csv, measure_period, trajectory_csv, EventKind, IntegrationConfig, Trajectory,
};
use hyposc_core::figures::figure;
use hyposc_core::geometry::{ModelParams, PhaseState};
use hyposc_core::invariants::{check_identities, fit_hamiltonian_coefficients, HamiltonianMode, IdentityReport, InvariantSet};
use hyposc_core::orbits::{analytic_initial_state, classify, OrbitClassification};
use hyposc_core::poisson::{
    fit_df_coefficients, sample_states, verify_conservation, verify_df_algebra_tol, verify_so22_tol, BracketReport,
    CoefficientFit, DEFAULT_SEED,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

pub const DEFAULT_POINTS: usize = 1000;
pub const DEFAULT_VERIFY_TOL: f64 = 1e-6;
pub const THREADS_ENV: &str = "HYPOSC_THREADS";

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Self { code: EXIT_NUMERIC, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticSpec {
    pub e: f64,
    pub l_sq: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutputKind {
    TrajectoryCsv,
    InvariantsCsv,
    EventsJson,
    ReportJson,
    /// All nine figure data sets, written into the directory named by `path`.
    FigureSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub kind: OutputKind,
    pub path: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: ModelParams,
    pub mode: HamiltonianMode,
    #[serde(default)]
    pub initial: Option<PhaseState>,
    #[serde(default)]
    pub analytic: Option<AnalyticSpec>,
    #[serde(default)]
    pub integration: IntegrationConfig,
    #[serde(default)]
    pub outputs: Vec<OutputSpec>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::usage(format!("invalid run config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.params.validate().map_err(|e| CliError::usage(e.to_string()))?;
        self.integration.validate().map_err(|e| CliError::usage(e.to_string()))?;
        match (&self.initial, &self.analytic) {
            (Some(_), Some(_)) => return Err(CliError::usage("give either `initial` or `analytic`, not both")),
            (None, None) => return Err(CliError::usage("one of `initial` or `analytic` is required")),
            _ => {}
        }
        let mut seen = HashSet::new();
        for out in &self.outputs {
            if !seen.insert(&out.path) {
                return Err(CliError::usage(format!("output path {} is listed twice", out.path.display())));
            }
        }
        self.initial_state().map(|_| ())
    }

    /// The starting phase state, either given directly or built from (E, L²).
    pub fn initial_state(&self) -> CliResult<PhaseState> {
        if let Some(s) = self.initial {
            s.validate().map_err(|e| CliError::usage(e.to_string()))?;
            return Ok(s);
        }
        let a = self.analytic.expect("validated");
        if !(a.e.is_finite() && a.l_sq.is_finite()) {
            return Err(CliError::usage("analytic E and L^2 must be finite"));
        }
        if a.e < 0.0 && a.l_sq >= 0.0 {
            return Err(CliError::usage(format!("E = {} < 0 is only admissible for L^2 < 0", a.e)));
        }
        analytic_initial_state(a.e, a.l_sq, &self.params).map_err(|e| CliError::usage(e.to_string()))
    }
}

/// Writes `contents` to `path` through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    let io = |e: std::io::Error| CliError::usage(format!("cannot write {}: {e}", path.display()));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let name = path.file_name().ok_or_else(|| CliError::usage(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io)
}

fn resolve(out_dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        out_dir.join(p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub energy: f64,
    pub l_sq: f64,
    pub classification: OrbitClassification,
    pub measured_period: Option<f64>,
    pub samples: usize,
    pub chart_crossings: usize,
    pub turning_points: usize,
    pub period_closures: usize,
    pub max_constraint_residual: f64,
    pub drift: BTreeMap<String, f64>,
}

pub fn simulation_report(traj: &Trajectory) -> SimulationReport {
    let first = &traj.samples[0].invariants;
    let drift = first.scalars().into_iter().map(|(name, _)| (name.to_string(), traj.relative_drift(name, 1.0))).collect();
    SimulationReport {
        energy: first.hamiltonian,
        l_sq: first.l_squared,
        classification: classify(first.hamiltonian, first.l_squared, &traj.params),
        measured_period: measure_period(traj),
        samples: traj.samples.len(),
        chart_crossings: traj.events_of(EventKind::ChartCrossing).len(),
        turning_points: traj.events_of(EventKind::RadialTurningPoint).len(),
        period_closures: traj.events_of(EventKind::PeriodClosure).len(),
        max_constraint_residual: traj.max_constraint_residual(),
        drift,
    }
}

/// Integrates the configured orbit and writes the requested outputs under `out_dir`.
pub fn cmd_simulate(cfg: &RunConfig, out_dir: &Path) -> CliResult<(Trajectory, Vec<PathBuf>)> {
    cfg.validate()?;
    let start = cfg.initial_state()?;
    let traj = integrate(&start, &cfg.params, &cfg.integration, cfg.mode)
        .map_err(|e| CliError::numeric(format!("integration failed: {e}")))?;
    let mut written = Vec::new();
    for out in &cfg.outputs {
        let path = resolve(out_dir, &out.path);
        match out.kind {
            OutputKind::TrajectoryCsv => write_atomic(&path, trajectory_csv(&traj).as_bytes())?,
            OutputKind::InvariantsCsv => write_atomic(&path, invariants_csv(&traj).as_bytes())?,
            OutputKind::EventsJson => write_atomic(&path, events_json(&traj).as_bytes())?,
            OutputKind::ReportJson => {
                let json = serde_json::to_string_pretty(&simulation_report(&traj)).expect("report serializes");
                write_atomic(&path, json.as_bytes())?
            }
            OutputKind::FigureSet => {
                for id in 1..=9 {
                    written.extend(cmd_figure(id, &path)?);
                }
                continue;
            }
        }
        written.push(path);
    }
    Ok((traj, written))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOutput {
    pub e: f64,
    pub l_sq: f64,
    pub omega: f64,
    pub radius: f64,
    pub classification: OrbitClassification,
}

pub fn cmd_classify(e: f64, l_sq: f64, omega: f64, radius: f64) -> CliResult<ClassifyOutput> {
    if ![e, l_sq, omega, radius].iter().all(|v| v.is_finite()) {
        return Err(CliError::usage("classify needs finite inputs"));
    }
    let params = ModelParams::new(omega, radius).map_err(|e| CliError::usage(e.to_string()))?;
    Ok(ClassifyOutput { e, l_sq, omega, radius, classification: classify(e, l_sq, &params) })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    So22,
    #[value(name = "appendix_a")]
    AppendixA,
    Identities,
    All,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianFit {
    pub trace_coefficient: f64,
    pub l_sq_coefficient: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub suite: Suite,
    pub seed: u64,
    pub n_points: usize,
    pub so22: Option<BracketReport>,
    pub conservation: Option<BracketReport>,
    pub tensor_algebra: Option<BracketReport>,
    pub coefficient_fits: Vec<CoefficientFit>,
    pub identities: Option<IdentityReport>,
    pub hamiltonian_fit: Option<HamiltonianFit>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for (title, rep) in [
            ("so(2,2) brackets", &self.so22),
            ("conservation brackets", &self.conservation),
            ("tensor algebra", &self.tensor_algebra),
        ] {
            if let Some(rep) = rep {
                out.push_str(&format!("== {title} ==\n{}\n", rep.table()));
            }
        }
        if !self.coefficient_fits.is_empty() {
            out.push_str("== fitted coefficients ==\n");
            for f in &self.coefficient_fits {
                out.push_str(&format!("{}  fitted {:?}  residual {:.3e}\n", f.relation, f.fitted, f.residual));
            }
        }
        if let Some(rep) = &self.identities {
            out.push_str("== identities ==\n");
            for c in &rep.checks {
                let status = if c.pass { "ok" } else if c.flagged { "flagged" } else { "FAIL" };
                out.push_str(&format!("{:<48} {:>10.3e}  {status}\n", c.name, c.residual));
            }
        }
        if let Some(h) = &self.hamiltonian_fit {
            out.push_str(&format!(
                "H fit: {:.12} * trace + {:.12} * L^2/R^2  residual {:.3e}\n",
                h.trace_coefficient, h.l_sq_coefficient, h.residual
            ));
        }
        out.push_str(if self.passed { "verification passed\n" } else { "verification FAILED\n" });
        out
    }
}

/// Maximum identity residuals over the seeded sample states.
pub fn identity_report(params: &ModelParams, n_points: usize, seed: u64) -> (IdentityReport, HamiltonianFit) {
    let sets: Vec<InvariantSet> = sample_states(n_points, seed)
        .iter()
        .filter_map(|s| InvariantSet::from_state(s, params, HamiltonianMode::Oscillator).ok())
        .collect();
    let mut rep = IdentityReport::default();
    for inv in &sets {
        rep.merge(&check_identities(inv, params));
    }
    let (a, b, residual) = fit_hamiltonian_coefficients(&sets, params);
    (rep, HamiltonianFit { trace_coefficient: a, l_sq_coefficient: b, residual })
}

pub fn cmd_verify(suite: Suite, params: &ModelParams, seed: u64, n_points: usize, tol: f64) -> VerifyReport {
    let want = |s: Suite| suite == s || suite == Suite::All;
    let mut rep = VerifyReport {
        suite,
        seed,
        n_points,
        so22: None,
        conservation: None,
        tensor_algebra: None,
        coefficient_fits: Vec::new(),
        identities: None,
        hamiltonian_fit: None,
        passed: true,
    };
    if want(Suite::So22) {
        let so22 = verify_so22_tol(params, n_points, seed, tol);
        let cons = verify_conservation(params, n_points, seed);
        rep.passed &= so22.passed() && cons.passed();
        rep.so22 = Some(so22);
        rep.conservation = Some(cons);
    }
    if want(Suite::AppendixA) {
        let alg = verify_df_algebra_tol(params, n_points, seed, tol);
        let fits = fit_df_coefficients(n_points.min(400), seed);
        rep.passed &= alg.passed() && fits.iter().all(|f| f.residual < 1e-9);
        rep.tensor_algebra = Some(alg);
        rep.coefficient_fits = fits;
    }
    if want(Suite::Identities) {
        let (ids, fit) = identity_report(params, n_points, seed);
        rep.passed &= ids.passed() && fit.residual < 1e-9;
        rep.identities = Some(ids);
        rep.hamiltonian_fit = Some(fit);
    }
    rep
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub figure: u8,
    pub title: String,
    pub description: String,
    pub params: BTreeMap<String, f64>,
    pub columns: Vec<String>,
    pub rows: usize,
}

pub const MANIFEST: &str = "manifest.json";

/// Writes the data sets of one figure as CSV files and merges them into `manifest.json`.
pub fn cmd_figure(id: u8, out_dir: &Path) -> CliResult<Vec<PathBuf>> {
    let fig = figure(id).map_err(|e| CliError::usage(e.to_string()))?;
    let manifest_path = out_dir.join(MANIFEST);
    let mut manifest: BTreeMap<String, ManifestEntry> = match fs::read_to_string(&manifest_path) {
        Ok(text) => serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("unreadable manifest {}: {e}", manifest_path.display())))?,
        Err(_) => BTreeMap::new(),
    };
    manifest.retain(|_, m| m.figure != id);
    let mut written = Vec::new();
    for ds in &fig.datasets {
        let file = format!("{}.csv", ds.name);
        let path = out_dir.join(&file);
        write_atomic(&path, ds.to_csv().as_bytes())?;
        manifest.insert(
            ds.name.clone(),
            ManifestEntry {
                file,
                figure: id,
                title: fig.title.clone(),
                description: ds.description.clone(),
                params: ds.params.clone(),
                columns: ds.columns.clone(),
                rows: ds.rows.len(),
            },
        );
        written.push(path);
    }
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(&manifest_path, json.as_bytes())?;
    written.push(manifest_path);
    Ok(written)
}

#[derive(Parser, Debug)]
#[command(name = "hyposc", version, about = "Harmonic oscillator on the SO(2,2) hyperboloid")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Integrate an orbit described by a JSON run configuration.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Directory that relative output paths are resolved against.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Overrides the integrator's relative tolerance.
        #[arg(long)]
        tol: Option<f64>,
        /// Accepted for interface uniformity; simulations are deterministic.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the orbit classification of (E, L^2) as JSON.
    #[command(allow_negative_numbers = true)]
    Classify {
        #[arg(long)]
        energy: f64,
        #[arg(long)]
        l_sq: f64,
        #[arg(long, default_value_t = 1.0)]
        omega: f64,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
    },
    /// Check Poisson-bracket relations and algebraic identities on random states.
    Verify {
        #[arg(value_enum, default_value_t = Suite::All)]
        suite: Suite,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_POINTS)]
        n_points: usize,
        #[arg(long, default_value_t = DEFAULT_VERIFY_TOL)]
        tol: f64,
        #[arg(long, default_value_t = 1.0)]
        omega: f64,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        /// Also write verify_report.json into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Read model parameters from a run configuration.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Export the data behind one figure (1-9) or all of them.
    Figure {
        id: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn thread_pool() -> CliResult<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| CliError::usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| CliError::usage(format!("cannot start thread pool: {e}")))
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate { config, out, tol, seed: _ } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(tol) = tol {
                cfg.integration.rel_tol = tol;
            }
            let (traj, written) = cmd_simulate(&cfg, &out)?;
            let rep = simulation_report(&traj);
            println!("{}", serde_json::to_string_pretty(&rep).expect("report serializes"));
            for p in written {
                eprintln!("wrote {}", p.display());
            }
            Ok(())
        }
        Command::Classify { energy, l_sq, omega, radius } => {
            let out = cmd_classify(energy, l_sq, omega, radius)?;
            println!("{}", serde_json::to_string_pretty(&out).expect("classification serializes"));
            Ok(())
        }
        Command::Verify { suite, seed, n_points, tol, omega, radius, out, config } => {
            if n_points == 0 {
                return Err(CliError::usage("n_points must be positive"));
            }
            if !(tol > 0.0) {
                return Err(CliError::usage("tol must be positive"));
            }
            let params = match config {
                Some(path) => RunConfig::load(&path)?.params,
                None => ModelParams::new(omega, radius).map_err(|e| CliError::usage(e.to_string()))?,
            };
            let rep = cmd_verify(suite, &params, seed, n_points, tol);
            print!("{}", rep.summary());
            if let Some(dir) = out {
                let json = serde_json::to_string_pretty(&rep).expect("report serializes");
                write_atomic(&dir.join("verify_report.json"), json.as_bytes())?;
            }
            if rep.passed {
                Ok(())
            } else {
                Err(CliError::numeric("one or more relations failed"))
            }
        }
        Command::Figure { id, out } => {
            let ids: Vec<u8> = if id == "all" {
                (1..=9).collect()
            } else {
                vec![id.parse().map_err(|_| CliError::usage(format!("figure id must be 1-9 or `all`, got {id:?}")))?]
            };
            for id in ids {
                for p in cmd_figure(id, &out)? {
                    eprintln!("wrote {}", p.display());
                }
            }
            Ok(())
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = thread_pool().and_then(|pool| pool.install(|| execute(cli)));
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
