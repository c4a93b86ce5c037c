//! Command-line runner: kernel tables, simulation output and the acceptance suite.

mod output;
pub mod verify;

pub use output::{fmt_f64, to_json, Cell, Table};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::process::ExitCode;

use crate::diffspec::{besq_spec, BesselParams};
use crate::gibbs::{sample_gibbs, PsiBundle};
use crate::kernels::{
    besq_density, conditioned_density, entrance_density, laguerre_density, noncollision_prob, ChamberPoint,
    DriftSpectrum,
};
use crate::matproc::{drift_matrix, eval_matrix_process};
use crate::rng::{map_trials, StreamId, LANES};
use crate::sde::halfarray::row_len;
use crate::sde::{
    simulate_besq_lambda, simulate_conditioned, simulate_dual, simulate_edge, simulate_half_array, HalfArray, PathGrid,
    Reflection, SimConfig,
};

pub const VERSION: &str = concat!("besqkit ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, unreadable or invalid configuration.
    #[error("{0}")]
    Usage(String),
    /// A computation failed on valid input.
    #[error("{0}")]
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

fn run_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Run(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "besq", version, about = "Non-colliding squared Bessel processes with drifts")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalOpts {
    /// JSON configuration file; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base seed; trial k uses the stream (seed, k).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of trials (for verify: a cap on each criterion's trial count).
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Base time step.
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    /// Output file (stdout if absent).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Output format (default csv; json for verify).
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Worker threads for trial-level parallelism.
    #[arg(long, global = true, env = "BESQ_JOBS")]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate a transition density, entrance density or non-collision probability on a grid.
    KernelEval,
    /// Simulate paths and write the recorded states.
    Simulate {
        #[arg(value_enum)]
        target: Target,
    },
    /// Run the acceptance suite.
    Verify {
        /// Run only criteria whose number, name or tag matches (repeatable).
        #[arg(long)]
        only: Vec<String>,
        /// List the criteria and exit.
        #[arg(long)]
        list: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    Matrix,
    ConditionedSde,
    HalfArray,
    Edge,
    Besq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Besq,
    Conditioned,
    Laguerre,
    Entrance,
    Noncollision,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

/// Configuration of `kernel-eval`. Points are either listed or built from `grid`
/// as the strictly increasing tuples of a tensor grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelEvalConfig {
    pub kernel: KernelKind,
    pub nu: f64,
    pub mu: Vec<f64>,
    /// Eigenvalue parameters for `noncollision`; defaults to `mu / 2`.
    pub lambdas: Option<Vec<f64>>,
    pub t: f64,
    /// Starting point of transition densities.
    pub x: Vec<f64>,
    pub grid: Grid,
    pub points: Option<Vec<Vec<f64>>>,
    /// One-particle `conditioned` only: also tabulate the density with drift and
    /// starting point exchanged.
    pub symmetry_check: bool,
}

impl Default for KernelEvalConfig {
    fn default() -> Self {
        Self {
            kernel: KernelKind::Conditioned,
            nu: 1.0,
            mu: vec![1.0, 4.0],
            lambdas: None,
            t: 1.0,
            x: vec![1.0, 4.0],
            grid: Grid { lo: 0.25, hi: 10.0, n: 40 },
            points: None,
            symmetry_check: false,
        }
    }
}

/// Configuration of `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub nu: f64,
    pub mu: Vec<f64>,
    /// Starting point: the particles (`conditioned-sde`), the edge coordinates
    /// (`edge`) or a single value (`besq`).
    pub x0: Option<Vec<f64>>,
    /// Top row for a Gibbs-distributed initial array (`half-array`, `edge`).
    pub top: Option<Vec<f64>>,
    /// Explicit initial array for `half-array`.
    pub init: Option<Vec<Vec<f64>>>,
    /// Rows of the matrix (`matrix`); the index is `K − N`.
    pub k: usize,
    /// Drift parameter of the `besq` target.
    pub lambda: f64,
    /// `besq` target: simulate the dual diffusion instead.
    pub dual: bool,
    pub ref_point: f64,
    pub horizon: f64,
    pub dt: f64,
    pub trials: usize,
    pub seed: u64,
    pub record_every: usize,
    pub max_halvings: u32,
    pub boundary_guard: f64,
    pub pushes: bool,
    /// How reflected simulators put a coordinate back into its interval.
    pub reflection: Reflection,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        let s = SimConfig::new(1e-3, 1.0);
        Self {
            nu: 1.0,
            mu: vec![1.0, 4.0],
            x0: None,
            top: None,
            init: None,
            k: 3,
            lambda: 0.0,
            dual: false,
            ref_point: 1.0,
            horizon: s.horizon,
            dt: s.dt,
            trials: 1,
            seed: 0,
            record_every: 0,
            max_halvings: s.max_halvings,
            boundary_guard: 0.0,
            pushes: true,
            reflection: s.reflection,
        }
    }
}

impl SimulateConfig {
    fn sim_config(&self) -> Result<SimConfig, CliError> {
        let mut c = SimConfig::new(self.dt, self.horizon);
        c.seed = self.seed;
        c.trials = self.trials;
        c.record_every = self.record_every;
        c.max_halvings = self.max_halvings;
        c.boundary_guard = self.boundary_guard;
        c.pushes = self.pushes;
        c.reflection = self.reflection;
        c.validate().map_err(usage)?;
        if self.trials == 0 {
            return Err(CliError::Usage("trials must be at least 1".into()));
        }
        Ok(c)
    }
}

fn load_config<T: for<'de> Deserialize<'de> + Default>(path: &Option<PathBuf>) -> Result<T, CliError> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let s = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&s).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))
        }
    }
}

/// Runs `f` on a pool of `jobs` workers, or on the default pool.
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(run_err)?;
            Ok(pool.install(f))
        }
    }
}

fn tensor_points(g: &Grid, n: usize) -> Result<Vec<Vec<f64>>, CliError> {
    if !(g.lo.is_finite() && g.hi.is_finite() && g.lo < g.hi) || g.n < 2 {
        return Err(CliError::Usage(format!("bad grid {g:?}")));
    }
    let axis: Vec<f64> = (0..g.n).map(|i| g.lo + (g.hi - g.lo) * i as f64 / (g.n - 1) as f64).collect();
    let mut out = vec![];
    let mut idx = vec![0usize; n];
    loop {
        if idx.windows(2).all(|w| w[0] < w[1]) {
            out.push(idx.iter().map(|&i| axis[i]).collect());
        }
        let mut d = n;
        loop {
            if d == 0 {
                return Ok(out);
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < g.n {
                break;
            }
            idx[d] = 0;
        }
    }
}

/// Trapezoid weight of a grid point (product over coordinates).
fn trapezoid_weight(g: &Grid, p: &[f64]) -> f64 {
    let h = (g.hi - g.lo) / (g.n - 1) as f64;
    p.iter()
        .map(|&v| if (v - g.lo).abs() < 1e-12 * h || (v - g.hi).abs() < 1e-12 * h { 0.5 * h } else { h })
        .product()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelTable {
    pub version: &'static str,
    pub config: KernelEvalConfig,
    #[serde(flatten)]
    pub table: Table,
    /// Trapezoid-rule sum of the tabulated values over a `grid` (densities only).
    pub grid_total: Option<f64>,
}

/// Tabulates the configured kernel.
pub fn cmd_kernel_eval(cfg: &KernelEvalConfig) -> Result<KernelTable, CliError> {
    let params = BesselParams::from_nu(cfg.nu).map_err(usage)?;
    if !(cfg.t > 0.0) && cfg.kernel != KernelKind::Noncollision {
        return Err(CliError::Usage(format!("t must be positive, got {}", cfg.t)));
    }
    let n = match cfg.kernel {
        KernelKind::Besq => 1,
        KernelKind::Laguerre => cfg.x.len(),
        KernelKind::Noncollision => cfg.lambdas.as_ref().map_or(cfg.mu.len(), |l| l.len()),
        _ => cfg.mu.len(),
    };
    if n == 0 {
        return Err(CliError::Usage("need at least one particle".into()));
    }
    if cfg.symmetry_check && (cfg.kernel != KernelKind::Conditioned || n != 1) {
        return Err(CliError::Usage("symmetry_check needs the one-particle conditioned kernel".into()));
    }
    let points = match &cfg.points {
        Some(p) => p.clone(),
        None => tensor_points(&cfg.grid, n)?,
    };
    if let Some(p) = points.iter().find(|p| p.len() != n) {
        return Err(CliError::Usage(format!("point {p:?} should have {n} coordinates")));
    }
    let mu = || DriftSpectrum::new(cfg.mu.clone()).map_err(usage);
    let x = || ChamberPoint::new(cfg.x.clone()).map_err(usage);
    let value: Box<dyn Fn(&[f64]) -> Result<f64, CliError>> = match cfg.kernel {
        KernelKind::Besq => {
            let x0 = *cfg.x.first().ok_or_else(|| CliError::Usage("besq needs x".into()))?;
            Box::new(move |y| besq_density(params, cfg.t, x0, y[0]).map_err(run_err))
        }
        KernelKind::Conditioned => {
            let (mu, x) = (mu()?, x()?);
            if x.len() != n {
                return Err(CliError::Usage(format!("x has {} coordinates, mu has {n}", x.len())));
            }
            Box::new(move |y| conditioned_density(params, &mu, cfg.t, &x, &chamber(y)?).map_err(run_err))
        }
        KernelKind::Laguerre => {
            let x = x()?;
            Box::new(move |y| laguerre_density(params, cfg.t, &x, &chamber(y)?).map_err(run_err))
        }
        KernelKind::Entrance => {
            let mu = mu()?;
            Box::new(move |y| entrance_density(params, &mu, cfg.t, &chamber(y)?).map_err(run_err))
        }
        KernelKind::Noncollision => {
            let spec = besq_spec(params, 1.0).map_err(usage)?;
            let lambdas = cfg.lambdas.clone().unwrap_or_else(|| cfg.mu.iter().map(|m| 0.5 * m).collect());
            Box::new(move |p| noncollision_prob(&spec, &lambdas, &chamber(p)?).map_err(run_err))
        }
    };
    let var = if cfg.kernel == KernelKind::Noncollision { "x" } else { "y" };
    let mut cols: Vec<String> = (1..=n).map(|i| format!("{var}_{i}")).collect();
    cols.push(if cfg.kernel == KernelKind::Noncollision { "probability".into() } else { "density".into() });
    if cfg.symmetry_check {
        cols.push("swapped".into());
        cols.push("rel_diff".into());
    }
    let mut table = Table::new(cols);
    let mut total = 0.0;
    for p in &points {
        let v = value(p)?;
        let mut row: Vec<Cell> = p.iter().map(|&c| c.into()).collect();
        row.push(v.into());
        if cfg.symmetry_check {
            let swapped = conditioned_density(
                params,
                &DriftSpectrum::new(cfg.x.clone()).map_err(usage)?,
                cfg.t,
                &chamber(&cfg.mu)?,
                &chamber(p)?,
            )
            .map_err(run_err)?;
            row.push(swapped.into());
            row.push(((v - swapped).abs() / v.abs().max(f64::MIN_POSITIVE)).into());
        }
        table.push(row);
        total += trapezoid_weight(&cfg.grid, p) * v;
    }
    let grid_total = (cfg.points.is_none() && cfg.kernel != KernelKind::Noncollision).then_some(total);
    Ok(KernelTable { version: VERSION, config: cfg.clone(), table, grid_total })
}

fn chamber(v: &[f64]) -> Result<ChamberPoint, CliError> {
    ChamberPoint::new(v.to_vec()).map_err(usage)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationOutput {
    pub version: &'static str,
    pub target: Target,
    pub config: SimulateConfig,
    /// Row lengths of the flattened states of array targets.
    pub rows: Option<Vec<usize>>,
    pub trials: Vec<PathGrid>,
}

impl SimulationOutput {
    /// Long format: one line per (trial, time, coordinate).
    pub fn to_table(&self) -> Table {
        let array = self.rows.is_some();
        let mut t = if array {
            Table::new(["trial", "time", "row", "coord", "value"])
        } else {
            Table::new(["trial", "time", "coord", "value"])
        };
        for g in &self.trials {
            for (time, state) in g.times.iter().zip(&g.states) {
                if let Some(rows) = &self.rows {
                    let mut j = 0;
                    for (r, &len) in rows.iter().enumerate() {
                        for c in 0..len {
                            t.push(vec![g.trial.into(), (*time).into(), (r + 1).into(), (c + 1).into(), state[j].into()]);
                            j += 1;
                        }
                    }
                } else {
                    for (c, v) in state.iter().enumerate() {
                        t.push(vec![g.trial.into(), (*time).into(), (c + 1).into(), (*v).into()]);
                    }
                }
            }
        }
        t
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_table().to_csv(),
            Format::Json => to_json(self),
        }
    }
}

fn gibbs_start(
    params: BesselParams,
    mu: &DriftSpectrum,
    top: &[f64],
    ref_point: f64,
) -> Result<impl Fn(StreamId) -> Result<HalfArray, String> + Sync, CliError> {
    let bundle = PsiBundle::besq(params, mu, ref_point).map_err(usage)?;
    let top = chamber(top)?;
    if top.len() != mu.len() {
        return Err(CliError::Usage(format!("top has {} coordinates, mu has {}", top.len(), mu.len())));
    }
    // The last lane is never used by the simulators.
    Ok(move |s: StreamId| sample_gibbs(&bundle, &top, &mut s.rng(LANES - 1)).map_err(|e| e.to_string()))
}

/// Simulates `cfg.trials` independent trials. Trial `k` draws all its randomness
/// from the stream `(seed, k)`, so the output does not depend on the worker count.
pub fn cmd_simulate(target: Target, cfg: &SimulateConfig) -> Result<SimulationOutput, CliError> {
    let sim = cfg.sim_config()?;
    let n = cfg.mu.len();
    let mu = DriftSpectrum::new(cfg.mu.clone()).map_err(usage);
    let stream = |k: u64| StreamId::new(cfg.seed, k);
    let collect = |r: Vec<Result<PathGrid, String>>| -> Result<Vec<PathGrid>, CliError> {
        r.into_iter().enumerate().map(|(k, g)| g.map_err(|e| CliError::Run(format!("trial {k}: {e}")))).collect()
    };
    let mut rows = None;
    let trials = match target {
        Target::Matrix => {
            let m = drift_matrix(cfg.k, &cfg.mu).map_err(usage)?;
            collect(map_trials(cfg.trials, |k| {
                let ev = eval_matrix_process(&m, cfg.horizon, &mut stream(k).rng(0)).map_err(|e| e.to_string())?;
                Ok(PathGrid {
                    times: vec![cfg.horizon],
                    states: vec![ev],
                    dt: cfg.horizon,
                    seed: cfg.seed,
                    trial: k,
                    pushes: vec![],
                    absorbed_at: None,
                    halvings: 0,
                    capped_steps: 0,
                })
            }))?
        }
        Target::ConditionedSde => {
            let params = BesselParams::from_nu(cfg.nu).map_err(usage)?;
            let (mu, x0) = (mu?, chamber(cfg.x0.as_ref().or(cfg.top.as_ref()).unwrap_or(&cfg.mu))?);
            if x0.len() != n {
                return Err(CliError::Usage(format!("x0 has {} coordinates, mu has {n}", x0.len())));
            }
            collect(map_trials(cfg.trials, |k| {
                simulate_conditioned(params, &mu, &x0, &sim, stream(k)).map_err(|e| e.to_string())
            }))?
        }
        Target::HalfArray => {
            let params = BesselParams::from_nu(cfg.nu).map_err(usage)?;
            let mu = mu?;
            rows = Some((1..2 * n).map(row_len).collect());
            if let Some(init) = &cfg.init {
                let init = HalfArray::new(init.clone()).map_err(usage)?;
                collect(map_trials(cfg.trials, |k| {
                    simulate_half_array(params, &mu, &init, &sim, stream(k)).map_err(|e| e.to_string())
                }))?
            } else {
                let start = gibbs_start(params, &mu, cfg.top.as_ref().unwrap_or(&cfg.mu), cfg.ref_point)?;
                collect(map_trials(cfg.trials, |k| {
                    let init = start(stream(k))?;
                    simulate_half_array(params, &mu, &init, &sim, stream(k)).map_err(|e| e.to_string())
                }))?
            }
        }
        Target::Edge => {
            let params = BesselParams::from_nu(cfg.nu).map_err(usage)?;
            let mu = mu?;
            if let Some(x0) = &cfg.x0 {
                collect(map_trials(cfg.trials, |k| {
                    simulate_edge(params, &mu, x0, &sim, stream(k)).map_err(|e| e.to_string())
                }))?
            } else {
                let start = gibbs_start(params, &mu, cfg.top.as_ref().unwrap_or(&cfg.mu), cfg.ref_point)?;
                collect(map_trials(cfg.trials, |k| {
                    let init = start(stream(k))?;
                    simulate_edge(params, &mu, &init.edge(), &sim, stream(k)).map_err(|e| e.to_string())
                }))?
            }
        }
        Target::Besq => {
            let params = BesselParams::from_nu(cfg.nu).map_err(usage)?;
            let x0 = match cfg.x0.as_deref() {
                None => 1.0,
                Some([v]) => *v,
                Some(v) => return Err(CliError::Usage(format!("besq needs one starting value, got {v:?}"))),
            };
            collect(map_trials(cfg.trials, |k| {
                let r = if cfg.dual {
                    simulate_dual(params, cfg.lambda, x0, &sim, stream(k))
                } else {
                    simulate_besq_lambda(params, cfg.lambda, x0, &sim, stream(k))
                };
                r.map_err(|e| e.to_string())
            }))?
        }
    };
    Ok(SimulationOutput { version: VERSION, target, config: cfg.clone(), rows, trials })
}

fn write_out(path: &Option<PathBuf>, s: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, s).map_err(|e| CliError::Run(format!("{}: {e}", p.display()))),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(s.as_bytes()).map_err(run_err)
        }
    }
}

/// Executes a parsed command line and returns the process exit status.
pub fn run(cli: &Cli) -> Result<u8, CliError> {
    let g = &cli.global;
    match &cli.command {
        Command::KernelEval => {
            if g.seed.is_some() || g.trials.is_some() || g.dt.is_some() {
                return Err(CliError::Usage("kernel-eval takes no --seed, --trials or --dt".into()));
            }
            let cfg: KernelEvalConfig = load_config(&g.config)?;
            let t = cmd_kernel_eval(&cfg)?;
            let s = match g.format.unwrap_or(Format::Csv) {
                Format::Csv => t.table.to_csv(),
                Format::Json => to_json(&t),
            };
            write_out(&g.out, &s)?;
            Ok(0)
        }
        Command::Simulate { target } => {
            let mut cfg: SimulateConfig = load_config(&g.config)?;
            if let Some(s) = g.seed {
                cfg.seed = s;
            }
            if let Some(n) = g.trials {
                cfg.trials = n;
            }
            if let Some(dt) = g.dt {
                cfg.dt = dt;
            }
            let out = with_jobs(g.jobs, || cmd_simulate(*target, &cfg))??;
            write_out(&g.out, &out.render(g.format.unwrap_or(Format::Csv)))?;
            Ok(0)
        }
        Command::Verify { only, list } => {
            if *list {
                let mut s = String::new();
                for c in verify::criteria() {
                    s.push_str(&format!("{:>2}  {:<40} {}\n", c.id, c.name, c.tags.join(",")));
                }
                write_out(&g.out, &s)?;
                return Ok(0);
            }
            if g.config.is_some() || g.dt.is_some() {
                return Err(CliError::Usage("verify takes no --config or --dt".into()));
            }
            let opts = verify::VerifyOptions {
                seed: g.seed.unwrap_or(verify::DEFAULT_SEED),
                trial_cap: g.trials,
                only: only.clone(),
            };
            if verify::select(&opts).is_empty() {
                return Err(CliError::Usage(format!("no criterion matches {only:?}")));
            }
            let report = with_jobs(g.jobs, || {
                verify::run_verify(&opts, |r| eprintln!("{}", verify::summary_line(r)))
            })?;
            let s = match g.format.unwrap_or(Format::Json) {
                Format::Json => to_json(&report),
                Format::Csv => report.to_table().to_csv(),
            };
            write_out(&g.out, &s)?;
            Ok(if report.failed == 0 { 0 } else { 1 })
        }
    }
}

/// Entry point of the `besq` binary.
pub fn main_from_env() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
