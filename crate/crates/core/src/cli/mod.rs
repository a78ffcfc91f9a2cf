//! The `nilspec` command line: one subcommand per pipeline, every output
//! tagged with the tool version, the resolved configuration and the wall
//! time.
//!
//! Exit codes: 0 success, 1 usage/input/range/parse/io, 2 capability,
//! 3 solver non-convergence, 4 an identity check in `scdemo` failed.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

pub use config::{Config, Resolver};

use crate::error::{Error, Result};
use crate::grid::{
    adjudicate, convergence_study, eigensolve, write_eigenvectors, write_spectrum_csv, LanczosOptions, StudyOptions,
    Target, TwistedGrid, TwistedGridOperator,
};
use crate::group::GradedLieAlgebra;
use crate::report::{fmt_f64, line_chart, to_json, ChartSpec, Series};
use crate::semiclassical::{
    commutator_decomposition_check, dense_matrix, ergodic_report, hs_norm, op_norm_bound_check, parse_symbol,
    random_functions, random_symbol, trace, Separable, TorusSymbol, FLOW_SPEED,
};
use crate::spectra::{heisenberg_spectrum, power_spectrum, torus_spectrum, SpectralTable, FOUR_PI_SQ};
use crate::variance::{density_one_report, matrix_elements, EigenBasis, PositionObservable, VarianceReport};
use crate::weyl::{
    c0_heat_kernel_euclidean, c0_heisenberg_series, c0_power, c0_torus, default_time_grid, heisenberg_discrepancy,
    karamata_constant, log_grid, weyl_fit, WeylReport,
};

pub const EXIT_CHECK_FAILED: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
    /// Human-readable lines (scdemo only).
    Text,
}

#[derive(Debug, Parser)]
#[command(name = "nilspec", version, about = "Spectra, Weyl laws and quantum variance on compact nil-manifolds")]
pub struct Cli {
    /// Worker threads; 1 gives bit-reproducible output.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for random starts and random bases.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML file with defaults; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Output file (stdout when absent).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form spectrum up to a cutoff.
    Spectrum(SpectrumArgs),
    /// Weyl constants by every available route.
    Weyl(WeylArgs),
    /// Eigenvalues of the twisted grid Laplacian, or a refinement study.
    Eig(EigArgs),
    /// Quantum variance of an observable in an eigenbasis.
    Qvar(QvarArgs),
    /// Exact identities of the torus quantization.
    Scdemo(ScdemoArgs),
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    /// torus:n, heisenberg:n or power:l (power of the 2-torus spectrum).
    #[arg(long)]
    pub group: Option<String>,
    /// Spectral cutoff Λ.
    #[arg(long)]
    pub lambda_max: Option<f64>,
}

#[derive(Debug, Args)]
pub struct WeylArgs {
    /// torus:n, heisenberg:n or power:l.
    #[arg(long)]
    pub group: Option<String>,
    /// Upper end of the fit grid.
    #[arg(long)]
    pub lambda_max: Option<f64>,
    /// Lower end of the fit grid (default Λ/10).
    #[arg(long)]
    pub lambda_min: Option<f64>,
    /// Number of log-spaced fit points.
    #[arg(long)]
    pub points: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EigArgs {
    /// Grid size NXxNYxNT.
    #[arg(long, conflicts_with = "study")]
    pub grid: Option<String>,
    /// Comma-separated N for a refinement study on N x N x 2N grids.
    #[arg(long, value_delimiter = ',')]
    pub study: Option<Vec<usize>>,
    /// Only heisenberg:1 has a grid discretization.
    #[arg(long)]
    pub group: Option<String>,
    /// Compute every eigenvalue up to this value.
    #[arg(long, conflicts_with = "count")]
    pub lambda_max: Option<f64>,
    /// Compute this many lowest eigenvalues.
    #[arg(long)]
    pub count: Option<usize>,
    /// Residual tolerance relative to the operator scale.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Bound on operator applications per block.
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Twisted (true) or plain periodic (false) boundary conditions.
    #[arg(long)]
    pub twist: Option<bool>,
    /// Directory for binary eigenvectors.
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    /// Number of extrapolated values compared in a study.
    #[arg(long)]
    pub compare: Option<usize>,
}

#[derive(Debug, Args)]
pub struct QvarArgs {
    /// exponential, mixed or grid.
    #[arg(long)]
    pub basis: Option<String>,
    /// Comma-separated semiclassical parameters; the basis cutoff is ε⁻².
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub eps: Option<Vec<f64>>,
    /// Frequency p of the observable cos 2π(p·x).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub observable: Option<Vec<i64>>,
    /// Torus dimension for the exponential and mixed bases.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Grid size NXxNYxNT for the grid basis.
    #[arg(long)]
    pub grid: Option<String>,
    /// Threshold for the density-one report.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Eigensolver tolerance for the grid basis.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ScdemoArgs {
    /// all, hs, trace, commutator, norm or ergodic.
    #[arg(long)]
    pub check: Option<String>,
    /// Symbol file; built-in symbols are used when absent.
    #[arg(long)]
    pub symbol: Option<PathBuf>,
    /// Comma-separated semiclassical parameters.
    #[arg(long, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
    /// Random trials per ε in the commutator and norm checks.
    #[arg(long)]
    pub trials: Option<usize>,
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Errors go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("nilspec: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command; the `Ok` value is the exit code.
pub fn execute(cli: &Cli) -> Result<i32> {
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let name = match &cli.command {
        Command::Spectrum(_) => "spectrum",
        Command::Weyl(_) => "weyl",
        Command::Eig(_) => "eig",
        Command::Qvar(_) => "qvar",
        Command::Scdemo(_) => "scdemo",
    };
    let mut r = Resolver::new(&config, name);
    let threads = r.value("threads", cli.threads, 0usize)?;
    let seed = r.value("seed", cli.seed, 0u64)?;
    let format = r.optional("format", cli.format)?;
    let out = r.optional("out", cli.out.clone())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Input(format!("cannot start {threads} threads: {e}")))?;
    let ctx = Context { seed, out, start: Instant::now() };
    pool.install(|| match &cli.command {
        Command::Spectrum(a) => spectrum(a, r, &ctx, format.unwrap_or(Format::Csv)),
        Command::Weyl(a) => weyl(a, r, &ctx, format.unwrap_or(Format::Json)),
        Command::Eig(a) => eig(a, r, &ctx, format.unwrap_or(Format::Csv)),
        Command::Qvar(a) => qvar(a, r, &ctx, format.unwrap_or(Format::Csv)),
        Command::Scdemo(a) => scdemo(a, r, &ctx, format.unwrap_or(Format::Text)),
    })
}

struct Context {
    seed: u64,
    out: Option<PathBuf>,
    start: Instant,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: Value,
    wall_time_s: f64,
    notes: Vec<String>,
    result: T,
}

impl Context {
    fn write(&self, text: &str) -> Result<()> {
        match &self.out {
            Some(p) => {
                if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir)?;
                }
                std::fs::write(p, text)?;
            }
            None => {
                let mut s = std::io::stdout().lock();
                s.write_all(text.as_bytes())?;
                if !text.ends_with('\n') {
                    s.write_all(b"\n")?;
                }
            }
        }
        Ok(())
    }

    fn json<T: Serialize>(&self, command: &str, r: Resolver<'_>, notes: Vec<String>, result: T) -> Result<()> {
        let env = Envelope {
            tool: "nilspec",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config: r.echo(),
            wall_time_s: self.start.elapsed().as_secs_f64(),
            notes,
            result,
        };
        self.write(&to_json(&env))
    }
}

fn unsupported(command: &str, f: Format) -> Error {
    Error::Input(format!("{command} does not produce {f:?} output"))
}

/// A spectrum source named on the command line.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Group {
    Torus(usize),
    Heisenberg(usize),
    /// Power of the 2-torus spectrum.
    Power(u32),
}

impl Group {
    fn parse(s: &str) -> Result<Self> {
        let bad = || Error::Input(format!("group must be torus:n, heisenberg:n or power:l, got '{s}'"));
        let (kind, n) = s.trim().split_once(':').ok_or_else(bad)?;
        let n: usize = n.trim().parse().map_err(|_| bad())?;
        if n == 0 {
            return Err(bad());
        }
        match kind.trim() {
            "torus" => Ok(Group::Torus(n)),
            "heisenberg" => Ok(Group::Heisenberg(n)),
            "power" => Ok(Group::Power(u32::try_from(n).map_err(|_| bad())?)),
            _ => Err(bad()),
        }
    }

    fn table(self, lambda_max: f64) -> Result<SpectralTable> {
        match self {
            Group::Torus(n) => torus_spectrum(n, lambda_max),
            Group::Heisenberg(n) => heisenberg_spectrum(n, lambda_max),
            Group::Power(l) => {
                if !(lambda_max >= 0.0) {
                    return Err(Error::Input(format!("lambda_max must be nonnegative, got {lambda_max}")));
                }
                let mut t = power_spectrum(&torus_spectrum(2, lambda_max.powf(1.0 / l as f64))?, l)?;
                t.lambda_max = lambda_max;
                t.lines.retain(|line| line.value <= lambda_max * (1.0 + 1e-12));
                Ok(t)
            }
        }
    }

    /// Cutoff used by `weyl` when none is given.
    fn default_cutoff(self) -> f64 {
        match self {
            Group::Torus(n) if n <= 2 => FOUR_PI_SQ * 2500.0,
            Group::Torus(3) => FOUR_PI_SQ * 400.0,
            Group::Torus(_) => FOUR_PI_SQ * 64.0,
            Group::Heisenberg(1) => 2000.0,
            Group::Heisenberg(_) => 1000.0,
            Group::Power(l) => (FOUR_PI_SQ * 2500.0).powi(l as i32),
        }
    }
}

fn spectrum(a: &SpectrumArgs, mut r: Resolver<'_>, ctx: &Context, format: Format) -> Result<i32> {
    let group = r.value("group", a.group.clone(), "heisenberg:1".to_string())?;
    let lambda_max = r.value("lambda-max", a.lambda_max, 2000.0)?;
    let t = Group::parse(&group)?.table(lambda_max)?;
    match format {
        Format::Csv => ctx.write(&t.to_csv_string())?,
        Format::Json => ctx.json("spectrum", r, t.notes.clone(), &t)?,
        Format::Svg => {
            let mut points = Vec::new();
            let mut n = 0u64;
            for (v, m) in t.merged() {
                points.push((v, n as f64));
                n += m;
                points.push((v, n as f64));
            }
            points.push((lambda_max, n as f64));
            let spec = ChartSpec {
                title: format!("counting function of {}", t.manifold),
                x_label: "lambda".into(),
                y_label: "N(lambda)".into(),
                log_x: false,
                log_y: false,
            };
            ctx.write(&line_chart(&spec, &[Series { label: t.manifold.clone(), points }]))?;
        }
        f => return Err(unsupported("spectrum", f)),
    }
    Ok(0)
}

#[derive(Serialize)]
struct WeylResult {
    manifold: String,
    lambda_max: f64,
    volume: f64,
    nu: u32,
    homogeneous_dimension: u32,
    exponent: f64,
    fit: crate::weyl::WeylFit,
    karamata: Option<crate::weyl::KaramataEstimate>,
    routes: Vec<WeylReport>,
    discrepancy: Option<crate::weyl::HeisenbergDiscrepancy>,
}

fn weyl(a: &WeylArgs, mut r: Resolver<'_>, ctx: &Context, format: Format) -> Result<i32> {
    let group_name = r.value("group", a.group.clone(), "torus:2".to_string())?;
    let group = Group::parse(&group_name)?;
    let lambda_max = r.value("lambda-max", a.lambda_max, group.default_cutoff())?;
    let lambda_min = r.value("lambda-min", a.lambda_min, lambda_max / 10.0)?;
    let points = r.value("points", a.points, 40usize)?;
    if !(lambda_min > 0.0 && lambda_min < lambda_max) {
        return Err(Error::Input(format!("need 0 < lambda-min < lambda-max, got {lambda_min} and {lambda_max}")));
    }
    let t = group.table(lambda_max)?;
    let fit = weyl_fit(&t, &log_grid(lambda_min, lambda_max, points))?;
    let mut notes = Vec::new();
    let karamata = match karamata_constant(&t, &default_time_grid(&t)) {
        Ok(k) => Some(k),
        Err(Error::Range(m)) => {
            notes.push(format!("heat-trace route skipped: {m}"));
            None
        }
        Err(e) => return Err(e),
    };
    let mut routes = vec![WeylReport::from_fit(&t, &fit)];
    if let Some(k) = &karamata {
        routes.push(WeylReport::from_karamata(&t, k));
    }
    let mut discrepancy = None;
    match group {
        Group::Torus(n) => {
            routes.push(WeylReport::from_constant(t.volume, &c0_torus(n)?)?);
            routes.push(WeylReport::from_constant(t.volume, &c0_heat_kernel_euclidean(n)?)?);
        }
        Group::Power(l) => routes.push(WeylReport::from_constant(t.volume, &c0_power(&c0_torus(2)?, l)?)?),
        Group::Heisenberg(n) => {
            routes.push(WeylReport::from_constant(t.volume, &c0_heisenberg_series(n, 1e-10)?)?);
            let d = heisenberg_discrepancy(n, lambda_max)?;
            notes.extend(d.notes.iter().cloned());
            discrepancy = Some(d);
        }
    }
    for route in &routes[1..] {
        notes.push(format!(
            "{:?}: c1 = {:.6e}, counting fit / this route = {:.6}",
            route.route,
            route.c1,
            fit.fitted_constant / route.c1
        ));
    }
    let result = WeylResult {
        manifold: t.manifold.clone(),
        lambda_max,
        volume: t.volume,
        nu: t.nu,
        homogeneous_dimension: t.q,
        exponent: t.weyl_exponent(),
        fit,
        karamata,
        routes,
        discrepancy,
    };
    match format {
        Format::Json => ctx.json("weyl", r, notes, &result)?,
        Format::Csv => {
            let mut s = String::from("route,c0,c1,exponent,residual\n");
            let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
            for route in &result.routes {
                let name = serde_json::to_value(route.route).ok().and_then(|v| v.as_str().map(String::from));
                s.push_str(&format!(
                    "{},{},{},{},{}\n",
                    name.unwrap_or_default(),
                    opt(route.c0),
                    fmt_f64(route.c1),
                    opt(route.exponent),
                    opt(route.residual)
                ));
            }
            ctx.write(&s)?;
        }
        Format::Svg => {
            let p = result.exponent;
            let measured: Vec<(f64, f64)> = result.fit.samples.iter().map(|&(l, n)| (l, n as f64 * l.powf(-p))).collect();
            let mut series = vec![Series { label: "N(L) L^-p".into(), points: measured }];
            for route in &result.routes[1..] {
                series.push(Series {
                    label: format!("{:?}", route.route),
                    points: vec![(lambda_min, route.c1), (lambda_max, route.c1)],
                });
            }
            let spec = ChartSpec {
                title: format!("normalized counting function, {}", result.manifold),
                x_label: "lambda".into(),
                y_label: "N(lambda) lambda^(-Q/nu)".into(),
                log_x: true,
                log_y: false,
            };
            ctx.write(&line_chart(&spec, &series))?;
        }
        f => return Err(unsupported("weyl", f)),
    }
    Ok(0)
}

fn eig(a: &EigArgs, mut r: Resolver<'_>, ctx: &Context, format: Format) -> Result<i32> {
    let group = r.value("group", a.group.clone(), "heisenberg:1".to_string())?;
    let algebra = GradedLieAlgebra::resolve(&group)?;
    let tol = r.value("tol", a.tol, 1e-9)?;
    let twist = r.value("twist", a.twist, true)?;
    let max_iter = r.value("max-iter", a.max_iter, LanczosOptions::default().max_iter)?;
    let opts = LanczosOptions { tol, max_iter, seed: ctx.seed, ..LanczosOptions::default() };
    if let Some(ns) = r.optional("study", a.study.clone())? {
        let lambda_max = r.value("lambda-max", a.lambda_max, 105.0)?;
        let compare = r.value("compare", a.compare, 10usize)?;
        let grids = ns.iter().map(|&n| TwistedGrid::uniform(n)).collect::<Result<Vec<_>>>()?;
        let so = StudyOptions { lambda_max, twist, lanczos: opts, ..StudyOptions::default() };
        let report = convergence_study(&algebra, &grids, &so)?;
        let adj = if twist { Some(adjudicate(&report, compare)?) } else { None };
        let mut notes = report.notes.clone();
        if let Some(j) = &adj {
            notes.extend(j.notes.iter().cloned());
        }
        return match format {
            Format::Json => {
                #[derive(Serialize)]
                struct Study<'a> {
                    study: &'a crate::grid::ConvergenceReport,
                    adjudication: &'a Option<crate::grid::Adjudication>,
                }
                ctx.json("eig", r, notes, Study { study: &report, adjudication: &adj })?;
                Ok(0)
            }
            Format::Csv => {
                let mut s = String::from("frequency,cluster,multiplicity,extrapolated,error_bar,order\n");
                for b in &report.branches {
                    s.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        b.frequency,
                        b.cluster,
                        b.multiplicity.last().copied().unwrap_or(0),
                        fmt_f64(b.extrapolated),
                        fmt_f64(b.error_bar),
                        b.order.map(fmt_f64).unwrap_or_default()
                    ));
                }
                ctx.write(&s)?;
                Ok(0)
            }
            Format::Svg => {
                let series: Vec<Series> = report
                    .branches
                    .iter()
                    .take(12)
                    .map(|b| Series {
                        label: format!("k={} c={}", b.frequency, b.cluster),
                        points: report.grids.iter().zip(&b.values).map(|(g, &v)| (g.hx(), v)).collect(),
                    })
                    .collect();
                let spec = ChartSpec {
                    title: "eigenvalue branches under refinement".into(),
                    x_label: "h".into(),
                    y_label: "lambda".into(),
                    log_x: true,
                    log_y: false,
                };
                ctx.write(&line_chart(&spec, &series))?;
                Ok(0)
            }
            f => Err(unsupported("eig", f)),
        };
    }
    let grid = TwistedGrid::parse(&r.value("grid", a.grid.clone(), "16x16x32".to_string())?)?;
    let target = match (r.optional("count", a.count)?, a.lambda_max) {
        (Some(k), _) => Target::Count(k),
        (None, flag) => Target::Below(r.value("lambda-max", flag, 105.0)?),
    };
    let op = TwistedGridOperator::new(grid, &algebra, twist)?;
    let result = eigensolve(&op, target, &opts)?;
    let mut notes = vec![format!(
        "{} eigenpairs, max residual {:.3e}, orthonormality defect {:.3e}",
        result.pairs.len(),
        result.max_residual(),
        result.orthonormality_defect()
    )];
    if let Some(dir) = r.optional("vectors", a.vectors.clone())? {
        let files = write_eigenvectors(&result, &dir, "eigenvector")?;
        notes.push(format!("wrote {} files to {}", files.len(), dir.display()));
    }
    match format {
        Format::Csv => {
            let mut buf = Vec::new();
            write_spectrum_csv(&result, &mut buf)?;
            ctx.write(&String::from_utf8(buf).expect("csv is utf-8"))?;
        }
        Format::Json => ctx.json("eig", r, notes, &result)?,
        Format::Svg => {
            let points = result.pairs.iter().enumerate().map(|(i, p)| (i as f64, p.lambda)).collect();
            let spec = ChartSpec {
                title: format!("eigenvalues on {grid}"),
                x_label: "index".into(),
                y_label: "lambda".into(),
                log_x: false,
                log_y: false,
            };
            ctx.write(&line_chart(&spec, &[Series { label: format!("{grid}"), points }]))?;
        }
        f => return Err(unsupported("eig", f)),
    }
    Ok(0)
}

fn qvar(a: &QvarArgs, mut r: Resolver<'_>, ctx: &Context, format: Format) -> Result<i32> {
    let kind = r.value("basis", a.basis.clone(), "mixed".to_string())?;
    let grid_basis = kind == "grid";
    let default_eps = if grid_basis { vec![1.0 / 30f64.sqrt(), 1.0 / 55f64.sqrt()] } else { vec![0.2, 0.1, 0.05, 0.025] };
    let eps = r.value("eps", a.eps.clone(), default_eps)?;
    let dim = r.value("dim", a.dim, 2usize)?;
    let p = r.value("observable", a.observable.clone(), vec![1i64; dim])?;
    let delta = r.optional("delta", a.delta)?;
    if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::Input(format!("eps must be a nonempty list of positive numbers, got {eps:?}")));
    }
    if p.len() != dim {
        return Err(Error::Input(format!("observable has {} entries, dimension is {dim}", p.len())));
    }
    let lambda_max = eps.iter().map(|e| e.powi(-2)).fold(0.0, f64::max);
    let basis = match kind.as_str() {
        "exponential" => EigenBasis::torus_exponential(dim, lambda_max)?,
        "mixed" => EigenBasis::torus_mixed(dim, lambda_max, ctx.seed)?,
        "grid" => {
            if dim != 2 {
                return Err(Error::Input("the grid basis lives on the 3-dimensional Heisenberg quotient; use --dim 2".into()));
            }
            let grid = TwistedGrid::parse(&r.value("grid", a.grid.clone(), "24x24x48".to_string())?)?;
            let tol = r.value("tol", a.tol, 1e-9)?;
            let opts = LanczosOptions { tol, seed: ctx.seed, ..LanczosOptions::default() };
            EigenBasis::heisenberg_grid(grid, lambda_max, &opts)?
        }
        other => return Err(Error::Input(format!("basis must be exponential, mixed or grid, got '{other}'"))),
    };
    let obs = PositionObservable::cosine(&p);
    let report = VarianceReport::compute(&basis, &obs, &eps)?;
    let mut notes = vec![
        format!("{}; orthonormality defect {:.2e}", basis.describe(), basis.orthonormality_defect),
        format!("variance strictly decreasing in eps: {}", report.strictly_decreasing()),
    ];
    let density = match delta {
        Some(d) => {
            let elems = matrix_elements(&basis, &obs, lambda_max)?;
            let mut lambdas: Vec<f64> = eps.iter().map(|e| e.powi(-2)).collect();
            lambdas.sort_by(f64::total_cmp);
            let rep = density_one_report(&elems, obs.average(), &lambdas, d);
            if let Some(f) = rep.density.last() {
                notes.push(format!("fraction with |<a phi, phi> - offset| <= {d} at the largest cutoff: {f:.4}"));
            }
            Some(rep)
        }
        None => None,
    };
    match format {
        Format::Csv => {
            let mut buf = Vec::new();
            report.write_csv(&mut buf)?;
            ctx.write(&String::from_utf8(buf).expect("csv is utf-8"))?;
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Qvar<'a> {
                variance: &'a VarianceReport,
                density: Option<crate::variance::DensityReport>,
            }
            ctx.json("qvar", r, notes, Qvar { variance: &report, density })?;
        }
        Format::Svg => {
            let positive = report.variances.iter().all(|v| *v > 0.0);
            let points = report.epsilons.iter().copied().zip(report.variances.iter().copied()).collect();
            let spec = ChartSpec {
                title: format!("quantum variance, {}", report.basis),
                x_label: "epsilon".into(),
                y_label: "V(epsilon)".into(),
                log_x: true,
                log_y: positive,
            };
            ctx.write(&line_chart(&spec, &[Series { label: report.observable.clone(), points }]))?;
        }
        f => return Err(unsupported("qvar", f)),
    }
    Ok(0)
}

/// One line of the identity suite.
#[derive(Debug, Clone, Serialize)]
pub struct CheckLine {
    pub identity: String,
    pub statistic: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckLine {
    fn new(identity: &str, statistic: &str, value: f64, tolerance: f64) -> Self {
        CheckLine {
            identity: identity.into(),
            statistic: statistic.into(),
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }
}

const SCDEMO_SYMBOL: &str = "dim 2
mode 0 0 profile=gaussian(0,1)
mode 1 0 coef=0.5,0 profile=hermite(2,0.7)
mode -1 2 coef=0,0.25 profile=bump(1.5)";

/// Largest dense oracle the demo builds.
const DENSE_COLUMNS: usize = 2000;

fn dense_oracle(a: &TorusSymbol, eps: f64) -> Option<(f64, f64)> {
    let radius = (10.0 / eps).ceil() as i64;
    let cols = (2 * radius + 1).checked_pow(a.dim() as u32)? as usize;
    if cols > DENSE_COLUMNS {
        return None;
    }
    let (rows, cols, m) = dense_matrix(a, eps, radius);
    let hs = m.iter().map(|c| c.norm_sqr()).sum();
    let tr = cols
        .iter()
        .enumerate()
        .filter_map(|(j, c)| rows.iter().position(|r| r == c).map(|i| m[(i, j)].re))
        .sum();
    Some((hs, tr))
}

fn scdemo(a: &ScdemoArgs, mut r: Resolver<'_>, ctx: &Context, format: Format) -> Result<i32> {
    let check = r.value("check", a.check.clone(), "all".to_string())?;
    let eps = r.value("eps", a.eps.clone(), vec![0.5, 0.25, 0.125])?;
    let trials = r.value("trials", a.trials, 20usize)?;
    let symbol_path: Option<PathBuf> = r.optional("symbol", a.symbol.clone())?;
    let all = ["hs", "trace", "commutator", "norm", "ergodic"];
    let selected: Vec<&str> = match check.as_str() {
        "all" => all.to_vec(),
        c if all.contains(&c) => vec![c],
        other => return Err(Error::Input(format!("unknown check '{other}'; use all, {}", all.join(", ")))),
    };
    if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::Input(format!("eps must be a nonempty list of positive numbers, got {eps:?}")));
    }
    let user = symbol_path.as_deref().map(load_symbol).transpose()?;
    let symbol = match &user {
        Some(s) => s.clone(),
        None => parse_symbol(SCDEMO_SYMBOL)?,
    };
    let mut lines = Vec::new();
    let mut notes = Vec::new();
    let mut ergodic = None;
    for c in selected {
        match c {
            "hs" | "trace" => {
                for &e in &eps {
                    let dense = dense_oracle(&symbol, e);
                    if dense.is_none() {
                        notes.push(format!("{c}: dense oracle at eps={e} skipped, more than {DENSE_COLUMNS} columns"));
                    }
                    if c == "hs" {
                        let h = hs_norm(&symbol, e)?;
                        notes.push(format!("eps={e}: eps^n |Op|_HS^2 / |a|^2 = {:.12}", h.ratio));
                        if let Some((dense_hs, _)) = dense {
                            let dev = (h.hs_norm_sq - dense_hs).abs() / dense_hs.abs().max(1.0);
                            lines.push(CheckLine::new("hs", &format!("relative gap to dense matrix at eps={e}"), dev, 1e-10));
                        }
                    } else {
                        let t = trace(&symbol, e)?;
                        notes.push(format!("eps={e}: trace = {:.12e}, eps^-n int a = {:.12e}", t.trace.re, t.continuum.re));
                        if let Some((_, dense_tr)) = dense {
                            let dev = (t.trace.re - dense_tr).abs() / dense_tr.abs().max(1.0);
                            lines.push(CheckLine::new("trace", &format!("relative gap to dense matrix at eps={e}"), dev, 1e-10));
                        }
                    }
                }
            }
            "commutator" => {
                let dim = symbol.dim();
                let mut worst: f64 = 0.0;
                for k in 0..trials as u64 {
                    let s = ctx.seed.wrapping_add(k);
                    let b = if user.is_some() { symbol.clone() } else { random_symbol(dim, 5, s)? };
                    for &e in &eps {
                        worst = worst.max(commutator_decomposition_check(&b, e, &random_functions(dim, 5, 6, s)));
                    }
                }
                lines.push(CheckLine::new("commutator", "max relative deviation", worst, 1e-12));
            }
            "norm" => {
                // the A0 quadrature needs rapidly decaying kernels, so the
                // built-in case uses a Gaussian profile
                let a = match &user {
                    Some(s) => s.clone(),
                    None => TorusSymbol::single(&[1, 0], Arc::new(Separable::gaussian(2, 0.3, 0.8)))?,
                };
                let e = eps.iter().copied().fold(f64::INFINITY, f64::min);
                let n = op_norm_bound_check(&a, e, trials, ctx.seed)?;
                let excess = (n.max_quotient - n.a0_norm.upper()).max(0.0);
                lines.push(CheckLine::new("norm", "Rayleigh quotient above the A0 bound", excess, 0.0));
                notes.push(format!(
                    "A0 bound {:.12} (quadrature error {:.1e}); largest quotient {:.12}",
                    n.a0_norm.value, n.a0_norm.error, n.max_quotient
                ));
            }
            "ergodic" => {
                let a = match &user {
                    Some(s) => s.clone(),
                    None => TorusSymbol::single(&[1], Arc::new(Separable::gaussian(1, 0.0, 1.0)))?,
                };
                let samples: Vec<Vec<f64>> = [0.0, 0.013, 0.4, -1.7].iter().map(|&v| vec![v; a.dim()]).collect();
                let times: Vec<f64> = [10.0, 100.0, 1000.0].iter().map(|t| FLOW_SPEED * t).collect();
                let rep = ergodic_report(&a, &times, &samples)?;
                lines.push(CheckLine::new("ergodic", "closed form vs time quadrature", rep.quadrature_deviation, 1e-10));
                let worst_step = rep.distances.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
                let mut step = CheckLine::new("ergodic", "largest increase of the distance to Pa", worst_step, 0.0);
                step.passed = rep.strictly_decreasing;
                lines.push(step);
                ergodic = Some(rep);
            }
            _ => unreachable!(),
        }
    }
    let failed = lines.iter().any(|l| !l.passed);
    match format {
        Format::Text => {
            let mut s = String::new();
            for l in &lines {
                s.push_str(&format!(
                    "{} {:<10} {} = {:.3e} (tolerance {:.1e})\n",
                    if l.passed { "PASS" } else { "FAIL" },
                    l.identity,
                    l.statistic,
                    l.value,
                    l.tolerance
                ));
            }
            for n in &notes {
                s.push_str(&format!("# {n}\n"));
            }
            ctx.write(&s)?;
        }
        Format::Csv => {
            let mut s = String::from("identity,statistic,value,tolerance,passed\n");
            for l in &lines {
                s.push_str(&format!(
                    "{},\"{}\",{},{},{}\n",
                    l.identity,
                    l.statistic,
                    fmt_f64(l.value),
                    fmt_f64(l.tolerance),
                    l.passed
                ));
            }
            ctx.write(&s)?;
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Demo<'a> {
                checks: &'a [CheckLine],
                ergodic: &'a Option<crate::semiclassical::ErgodicReport>,
            }
            ctx.json("scdemo", r, notes, Demo { checks: &lines, ergodic: &ergodic })?;
        }
        Format::Svg => {
            let rep = ergodic.ok_or_else(|| Error::Input("svg output of scdemo plots the ergodic check; add --check ergodic".into()))?;
            let points = rep.times.iter().copied().zip(rep.distances.iter().copied()).collect();
            let spec = ChartSpec {
                title: "distance of the time average to the projection".into(),
                x_label: "flow time".into(),
                y_label: "L2 distance".into(),
                log_x: true,
                log_y: true,
            };
            ctx.write(&line_chart(&spec, &[Series { label: "|avg - Pa|".into(), points }]))?;
        }
    }
    Ok(if failed { EXIT_CHECK_FAILED } else { 0 })
}

fn load_symbol(path: &Path) -> Result<TorusSymbol> {
    parse_symbol(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_names() {
        assert_eq!(Group::parse("torus:2").unwrap(), Group::Torus(2));
        assert_eq!(Group::parse("heisenberg:1").unwrap(), Group::Heisenberg(1));
        assert_eq!(Group::parse("power:3").unwrap(), Group::Power(3));
        for bad in ["torus", "torus:0", "engel:1", "torus:x"] {
            assert!(Group::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn power_table_respects_the_cutoff() {
        let t = Group::Power(2).table(1e6).unwrap();
        assert_eq!(t.lambda_max, 1e6);
        assert!(t.lines.iter().all(|l| l.value <= 1e6));
        assert_eq!(t.nu, 4);
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["nilspec", "bogus"]), 1);
        assert_eq!(run(["nilspec", "spectrum", "--group", "klein:2"]), 1);
        assert_eq!(run(["nilspec", "--help"]), 0);
    }
}
