//! The `flatflow` command line.
//!
//! Every JSON output is an object `{schema, command, config, result}`; CSV
//! outputs start with `#` lines carrying the same schema, config and the
//! semantics (exact or estimate) of each column. Exit codes: 0 success,
//! 1 runtime failure, 2 invalid input, 3 budget exhausted, 64 usage.

use crate::closed::{enumerate_closed_geodesics, word_path, CanonicalKey, ClassFilter, ClosedGeodesic, GeodesicClass, DEFAULT_CYCLE_BUDGET};
use crate::construct::{
    glue_segments, periodic_approximation, similar_length_pair, ConstructError, GlueMode, LoopPair,
};
use crate::distance::{DistanceError, DEFAULT_DISTANCE_BUDGET};
use crate::geom::{Vec2, TOL_ANGLE, TOL_GEOM};
use crate::gsmetric::{gs_distance_upper, GsError};
use crate::lambda::{decompose, in_g_eta, ConfigError, HorizonError, LambdaConfig, Profile};
use crate::saddle::{build_concat_graph, enumerate_saddle_connections, ConcatGraph, SaddleError, DEFAULT_CHART_BUDGET};
use crate::surface::{cone_constants, load_surface, LoadError, Surface};
use crate::thermo::{equidistribution_series, pressure_estimate, pressure_gap_report, Ensemble, Potential, ThermoError};
use crate::tracer::{classify_window, parse_policy, trace, turning_signature, GeodesicPath, TraceError, TraceStart};
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use serde::Serialize;
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const SCHEMA: u32 = 1;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Invalid(String),
    Budget(String),
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 64,
            CliError::Invalid(_) => 2,
            CliError::Budget(_) => 3,
            CliError::Runtime(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Invalid(m) | CliError::Budget(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<LoadError> for CliError {
    fn from(e: LoadError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<SaddleError> for CliError {
    fn from(e: SaddleError) -> Self {
        match e {
            SaddleError::WorkLimitExceeded(_) => CliError::Budget(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<ThermoError> for CliError {
    fn from(e: ThermoError) -> Self {
        match e {
            ThermoError::Saddle(s) => s.into(),
            ThermoError::BadPotential(_) | ThermoError::UnknownPolygon(_) => CliError::Invalid(e.to_string()),
            ThermoError::BadGrid(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<ConstructError> for CliError {
    fn from(e: ConstructError) -> Self {
        match e {
            ConstructError::ConnectorNotFound(s) => s.into(),
            ConstructError::NotFoundWithinBudget { .. } => CliError::Budget(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<DistanceError> for CliError {
    fn from(e: DistanceError) -> Self {
        match e {
            DistanceError::CutoffTooLarge(_) => CliError::Budget(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

macro_rules! runtime_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Runtime(e.to_string())
            }
        }
    )*};
}
runtime_from!(TraceError, GsError, HorizonError);

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "flatflow", version, about = "Geodesic flow on flat surfaces with large-angle cone points")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Budget on unfolded triangle copies for saddle connection searches.
    #[arg(long, global = true, default_value_t = DEFAULT_CHART_BUDGET)]
    pub max_charts: usize,
    /// Budget on visited cycle prefixes for closed geodesic enumeration.
    #[arg(long, global = true, default_value_t = DEFAULT_CYCLE_BUDGET)]
    pub max_cycles: usize,
    /// Budget on unfolded triangle copies per distance query.
    #[arg(long, global = true, default_value_t = DEFAULT_DISTANCE_BUDGET)]
    pub max_distance_work: usize,
    /// λ scale s (default 0.49·ℓ0).
    #[arg(long, global = true)]
    pub s: Option<f64>,
    /// Threshold η (default 0.05·θ0/(2s)).
    #[arg(long, global = true)]
    pub eta: Option<f64>,
    /// Seed for randomized sampling.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Write the output here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Validate a surface file.
    Validate { surface: PathBuf },
    /// Genus, cone table, Gauss–Bonnet residual, η0, θ0, ℓ0.
    Invariants { surface: PathBuf },
    /// Trace a geodesic.
    Trace {
        surface: PathBuf,
        /// `poly:x:y`, or `random`.
        #[arg(long)]
        start: String,
        /// Direction angle in radians in the polygon's frame.
        #[arg(long, default_value_t = 0.0)]
        dir: f64,
        #[arg(long)]
        len: f64,
        /// `stop`, `+pi`, `-pi`, `bisect` or `angles:<csv>`.
        #[arg(long, default_value = "stop")]
        at_cone: String,
    },
    /// Upper bound on the distance of two traced geodesics in the space of geodesics.
    Gsdist {
        surface: PathBuf,
        /// `poly:x:y:dir[:policy]`, the state at time −T.
        #[arg(long)]
        trace_a: String,
        #[arg(long)]
        trace_b: String,
        #[arg(long = "T", default_value_t = 10.0)]
        big_t: f64,
    },
    /// Directed saddle connections up to a length.
    Saddles {
        surface: PathBuf,
        #[arg(long)]
        max_len: f64,
        #[arg(long, default_value = "csv")]
        out: Format,
    },
    /// Closed geodesics up to a period.
    Closed {
        surface: PathBuf,
        #[arg(long)]
        max_len: f64,
        /// `all`, `regular` or `singular`.
        #[arg(long, default_value = "all")]
        class: String,
        #[arg(long, default_value = "csv")]
        out: Format,
    },
    /// λ profile along a closed geodesic.
    Lambda {
        surface: PathBuf,
        /// Canonical key, e.g. `0.5.12`.
        #[arg(long)]
        closed: String,
        /// Length cap of the saddle connection table the key refers to.
        #[arg(long, default_value_t = 6.0)]
        graph_len: f64,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Write the sampled profile as CSV here.
        #[arg(long)]
        profile_out: Option<PathBuf>,
    },
    /// λ-decomposition of a window of a closed geodesic.
    Decompose {
        surface: PathBuf,
        #[arg(long)]
        closed: String,
        /// `a:b`.
        #[arg(long)]
        window: String,
        #[arg(long, default_value_t = 6.0)]
        graph_len: f64,
    },
    /// Specification constructions.
    #[command(subcommand)]
    Spec(SpecCmd),
    /// Pressure estimate from weighted sums over closed geodesics.
    Pressure {
        surface: PathBuf,
        #[command(flatten)]
        sums: SumArgs,
        /// `regular` or `singular`.
        #[arg(long, default_value = "regular")]
        class: String,
        #[arg(long, default_value = "json")]
        out: Format,
    },
    /// Regular against singular pressure.
    Gap {
        surface: PathBuf,
        #[command(flatten)]
        sums: SumArgs,
    },
    /// Weighted closed-geodesic averages of an observable.
    Equidist {
        surface: PathBuf,
        #[command(flatten)]
        sums: SumArgs,
        /// Observable, in the potential file format.
        #[arg(long)]
        f: PathBuf,
        #[arg(long, default_value = "csv")]
        out: Format,
    },
    /// Write an experiment bundle to a directory.
    Report {
        surface: PathBuf,
        #[arg(long, default_value = "flatflow-report")]
        dir: PathBuf,
        #[arg(long = "Q", default_value = "4:10:2")]
        q: String,
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
        /// Saddle counts are tabulated for lengths 1..=this.
        #[arg(long, default_value_t = 8)]
        saddle_len: u32,
    },
}

#[derive(Subcommand, Debug)]
pub enum SpecCmd {
    /// Glue segments into one closed geodesic.
    Glue {
        surface: PathBuf,
        /// JSON list of segments, each `{"word": [ids] | "closed": key, "window": [a, b]}`.
        #[arg(long)]
        segments: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        /// `weak` or `strong`.
        #[arg(long, default_value = "strong")]
        mode: String,
        #[command(flatten)]
        build: BuildArgs,
    },
    /// Closed geodesic through the middle of one segment.
    Periodic {
        surface: PathBuf,
        /// One segment object as for `glue`.
        #[arg(long)]
        segment: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
        #[command(flatten)]
        build: BuildArgs,
    },
}

#[derive(Args, Debug, Clone)]
pub struct BuildArgs {
    #[arg(long, default_value_t = 4.0)]
    pub graph_len: f64,
    /// Period cap when searching for two loops of similar length.
    #[arg(long, default_value_t = 6.0)]
    pub pair_q: f64,
}

#[derive(Args, Debug, Clone)]
pub struct SumArgs {
    /// Potential file; zero if absent.
    #[arg(long)]
    pub phi: Option<PathBuf>,
    /// `lo:hi:step` or a comma list.
    #[arg(long = "Q", default_value = "6:14:2")]
    pub q: String,
    #[arg(long, default_value_t = 0.5)]
    pub delta: f64,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Serialize)]
struct ConfigEcho {
    surface: String,
    tol_geom: f64,
    tol_angle: f64,
    max_charts: usize,
    max_cycles: usize,
    max_distance_work: usize,
    s: Option<f64>,
    eta: Option<f64>,
    seed: u64,
    args: Value,
}

struct Ctx {
    global: Global,
    echo: ConfigEcho,
}

impl Ctx {
    fn new(global: &Global, surface: &Path, args: Value) -> Self {
        Ctx {
            global: global.clone(),
            echo: ConfigEcho {
                surface: surface.display().to_string(),
                tol_geom: TOL_GEOM,
                tol_angle: TOL_ANGLE,
                max_charts: global.max_charts,
                max_cycles: global.max_cycles,
                max_distance_work: global.max_distance_work,
                s: global.s,
                eta: global.eta,
                seed: global.seed,
                args,
            },
        }
    }

    fn lambda_config(&mut self, s: &Surface) -> Result<LambdaConfig, CliError> {
        let base = LambdaConfig::for_surface(s);
        let sv = self.global.s.unwrap_or(base.s);
        let eta = self.global.eta.unwrap_or(0.05 * s.theta0() / (2.0 * sv));
        let cfg = LambdaConfig::checked(s, sv, eta)?;
        self.echo.s = Some(cfg.s);
        self.echo.eta = Some(cfg.eta);
        Ok(cfg)
    }

    fn json(&self, command: &str, result: Value) -> String {
        let v = json!({
            "schema": SCHEMA,
            "command": command,
            "config": self.echo,
            "result": result,
        });
        let mut out = serde_json::to_string_pretty(&v).expect("serializable");
        out.push('\n');
        out
    }

    fn csv(&self, command: &str, table: &Table) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# schema: {SCHEMA}");
        let _ = writeln!(out, "# command: {command}");
        let _ = writeln!(out, "# config: {}", serde_json::to_string(&self.echo).expect("serializable"));
        let sem: Vec<String> = table.header.iter().zip(&table.semantics).map(|(h, s)| format!("{h}={s}")).collect();
        let _ = writeln!(out, "# columns: {}", sem.join(","));
        let _ = writeln!(out, "{}", table.header.join(","));
        for r in &table.rows {
            let _ = writeln!(out, "{}", r.join(","));
        }
        out
    }
}

struct Table {
    header: Vec<&'static str>,
    semantics: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(cols: &[(&'static str, &'static str)]) -> Self {
        Table {
            header: cols.iter().map(|c| c.0).collect(),
            semantics: cols.iter().map(|c| c.1).collect(),
            rows: Vec::new(),
        }
    }
}

fn num(x: f64) -> String {
    // shortest round-trip form, as in the JSON outputs
    serde_json::to_string(&x).unwrap_or_else(|_| x.to_string())
}

/// Parse `lo:hi:step` or `a,b,c`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("bad grid {text:?}"));
    if text.contains(':') {
        let v: Vec<f64> = text.split(':').map(|x| x.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?;
        let [lo, hi, step] = v[..] else { return Err(bad()) };
        if !(step > 0.0 && hi >= lo) {
            return Err(bad());
        }
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        Ok((0..=n).map(|k| lo + step * k as f64).collect())
    } else {
        text.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect()
    }
}

fn parse_pair(text: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::Usage(format!("expected a:b, got {text:?}"));
    let (a, b) = text.split_once(':').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", path.display())))
}

fn potential(s: &Surface, path: Option<&Path>) -> Result<Potential, CliError> {
    let p = match path {
        Some(p) => Potential::from_json(&read(p)?)?,
        None => Potential::zero(),
    };
    p.check(s)?;
    Ok(p)
}

fn closed_by_key(g: &ConcatGraph, key: &str) -> Result<ClosedGeodesic, CliError> {
    let k = CanonicalKey::parse(key).ok_or_else(|| CliError::Usage(format!("bad key {key:?}")))?;
    if k.0.iter().any(|&i| i >= g.len()) {
        return Err(CliError::Invalid(format!("key {key} refers to connections beyond the table; raise --graph-len")));
    }
    ClosedGeodesic::from_word(g, &k.0).ok_or_else(|| CliError::Invalid(format!("{key} is not an admissible closed word")))
}

/// `poly:x:y` with `poly` a polygon id.
fn parse_start(s: &Surface, text: &str, dir: f64) -> Result<TraceStart, CliError> {
    let bad = || CliError::Usage(format!("expected poly:x:y, got {text:?}"));
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let id: usize = parts[0].parse().map_err(|_| bad())?;
    let polygon = s.polygon_index(id).ok_or_else(|| CliError::Invalid(format!("unknown polygon id {id}")))?;
    let x: f64 = parts[1].parse().map_err(|_| bad())?;
    let y: f64 = parts[2].parse().map_err(|_| bad())?;
    Ok(TraceStart {
        polygon,
        point: Vec2::new(x, y),
        dir: Vec2::from_angle(dir),
    })
}

fn random_start(s: &Surface, seed: u64) -> TraceStart {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let polygon = rng.gen_range(0..s.polygons.len());
    let poly = &s.polygons[polygon];
    let (mut lo, mut hi) = (poly.vertices[0], poly.vertices[0]);
    for v in &poly.vertices {
        lo = Vec2::new(lo.x.min(v.x), lo.y.min(v.y));
        hi = Vec2::new(hi.x.max(v.x), hi.y.max(v.y));
    }
    loop {
        let p = Vec2::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y));
        if poly.contains(p, -1e-6) {
            let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            return TraceStart {
                polygon,
                point: p,
                dir: Vec2::from_angle(a),
            };
        }
    }
}

fn path_json(s: &Surface, p: &GeodesicPath) -> Value {
    json!({
        "path": p,
        "signature": turning_signature(p),
        "class": format!("{:?}", classify_window(p, TOL_ANGLE)),
        "polygon_ids": p.segments.iter().map(|g| s.polygons[g.polygon].id).collect::<Vec<_>>(),
    })
}

fn invariants_json(s: &Surface) -> Value {
    let c = cone_constants(s);
    json!({
        "name": s.name,
        "genus": s.genus,
        "coneClasses": s.cone_classes().map(|k| json!({
            "id": k.id,
            "angle": k.total_angle,
            "excess": k.excess,
            "corners": k.corners.len(),
        })).collect::<Vec<_>>(),
        "gaussBonnetResidual": s.gauss_bonnet_residual(),
        "eta0": c.eta0,
        "theta0": c.theta0,
        "ell0": c.ell0,
    })
}

fn segment_from(g: &ConcatGraph, v: &Value) -> Result<(GeodesicPath, f64), CliError> {
    let bad = |m: &str| CliError::Invalid(format!("bad segment: {m}"));
    let w = v.get("window").and_then(|w| w.as_array()).ok_or_else(|| bad("missing window [a, b]"))?;
    let (a, b) = match w[..] {
        [ref a, ref b] => (a.as_f64().ok_or_else(|| bad("window"))?, b.as_f64().ok_or_else(|| bad("window"))?),
        _ => return Err(bad("window must have two entries")),
    };
    if !(b > a) {
        return Err(bad("empty window"));
    }
    let path = if let Some(word) = v.get("word") {
        let word: Vec<usize> = serde_json::from_value(word.clone()).map_err(|e| bad(&e.to_string()))?;
        if word.iter().any(|&i| i >= g.len()) {
            return Err(bad("letter beyond the table; raise --graph-len"));
        }
        let p = word_path(g, &word).ok_or_else(|| bad("word is not admissible"))?;
        if a < p.data.0 - 1e-12 || b > p.data.1 + 1e-12 {
            return Err(bad("window outside the word's time range"));
        }
        p
    } else if let Some(key) = v.get("closed").and_then(|k| k.as_str()) {
        closed_by_key(g, key)?.to_path(g)
    } else {
        return Err(bad("need \"word\" or \"closed\""));
    };
    Ok((path.with_window(a, b), b - a))
}

/// Parse `argv` and run; returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 64,
            };
            let _ = e.print();
            return code;
        }
    };
    configure_threads();
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("flatflow: {}", e.message());
            e.code()
        }
    }
}

/// Cap parallelism at `FLATFLOW_THREADS` when set.
fn configure_threads() {
    if let Some(n) = std::env::var("FLATFLOW_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn emit(global: &Global, text: &str) -> Result<(), CliError> {
    match &global.output {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let g = &cli.global;
    match &cli.cmd {
        Cmd::Validate { surface } => {
            let s = load_surface(surface)?;
            let ctx = Ctx::new(g, surface, json!({}));
            let res = json!({
                "valid": true,
                "name": s.name,
                "genus": s.genus,
                "coneClasses": s.cone_classes().map(|k| json!({"id": k.id, "angle": k.total_angle})).collect::<Vec<_>>(),
            });
            emit(g, &ctx.json("validate", res))
        }
        Cmd::Invariants { surface } => {
            let s = load_surface(surface)?;
            let ctx = Ctx::new(g, surface, json!({}));
            emit(g, &ctx.json("invariants", invariants_json(&s)))
        }
        Cmd::Trace { surface, start, dir, len, at_cone } => {
            let s = load_surface(surface)?;
            let ctx = Ctx::new(g, surface, json!({"start": start, "dir": dir, "len": len, "at_cone": at_cone}));
            let policy = parse_policy(at_cone).ok_or_else(|| CliError::Usage(format!("bad --at-cone {at_cone:?}")))?;
            let st = if start == "random" { random_start(&s, g.seed) } else { parse_start(&s, start, *dir)? };
            let p = trace(&s, st, *len, &policy)?;
            emit(g, &ctx.json("trace", path_json(&s, &p)))
        }
        Cmd::Gsdist { surface, trace_a, trace_b, big_t } => {
            let s = load_surface(surface)?;
            let ctx = Ctx::new(g, surface, json!({"trace_a": trace_a, "trace_b": trace_b, "T": big_t}));
            if !(*big_t > 0.0) {
                return Err(CliError::Usage("--T must be positive".into()));
            }
            let mk = |text: &str| -> Result<GeodesicPath, CliError> {
                let parts: Vec<&str> = text.splitn(5, ':').collect();
                if parts.len() < 4 {
                    return Err(CliError::Usage(format!("expected poly:x:y:dir[:policy], got {text:?}")));
                }
                let dir: f64 = parts[3].parse().map_err(|_| CliError::Usage(format!("bad direction in {text:?}")))?;
                let st = parse_start(&s, &parts[..3].join(":"), dir)?;
                let policy_text = parts.get(4).copied().unwrap_or("bisect");
                let policy = parse_policy(policy_text).ok_or_else(|| CliError::Usage(format!("bad policy {policy_text:?}")))?;
                Ok(trace(&s, st, 2.0 * big_t + 1.0, &policy)?.starting_at(-big_t))
            };
            let (a, b) = (mk(trace_a)?, mk(trace_b)?);
            let d = gs_distance_upper(&s, &a, &b, *big_t)?;
            emit(g, &ctx.json("gsdist", json!({"bound": d.bound, "tail": d.tail, "total": d.total(), "anchor": d.anchor, "estimate": "upper bound"})))
        }
        Cmd::Saddles { surface, max_len, out } => {
            let s = load_surface(surface)?;
            let ctx = Ctx::new(g, surface, json!({"max_len": max_len}));
            let scs = enumerate_saddle_connections(&s, *max_len, g.max_charts)?;
            match out {
                Format::Json => emit(g, &ctx.json("saddles", json!({"count": scs.len(), "connections": scs}))),
                Format::Csv => {
                    let mut t = Table::new(&[
                        ("id", "exact"),
                        ("start_class", "exact"),
                        ("end_class", "exact"),
                        ("length", "exact"),
                        ("holonomy_x", "exact"),
                        ("holonomy_y", "exact"),
                        ("start_pos", "exact"),
                        ("end_pos", "exact"),
                        ("reverse", "exact"),
                    ]);
                    for c in &scs {
                        t.rows.push(vec![
                            c.id.to_string(),
                            c.start_class.to_string(),
                            c.end_class.to_string(),
                            num(c.length),
                            num(c.holonomy.x),
                            num(c.holonomy.y),
                            num(c.start_pos),
                            num(c.end_pos),
                            c.reverse.to_string(),
                        ]);
                    }
                    emit(g, &ctx.csv("saddles", &t))
                }
            }
        }
        Cmd::Closed { surface, max_len, class, out } => {
            let s = load_surface(surface)?;
            let ctx = Ctx::new(g, surface, json!({"max_len": max_len, "class": class}));
            let filter = ClassFilter::parse(class).ok_or_else(|| CliError::Usage(format!("bad --class {class:?}")))?;
            let graph = build_concat_graph(&s, *max_len, g.max_charts)?;
            let all = enumerate_closed_geodesics(&graph, *max_len, filter, g.max_cycles)?;
            match out {
                Format::Json => emit(g, &ctx.json("closed", json!({"count": all.len(), "closed": all.iter().map(|c| json!({
                    "key": c.key().to_string(),
                    "period": c.period,
                    "class": c.class,
                    "joints": c.joints,
                })).collect::<Vec<_>>()}))),
                Format::Csv => {
                    let mut t = Table::new(&[
                        ("key", "exact"),
                        ("period", "exact"),
                        ("class", "exact"),
                        ("letters", "exact"),
                        ("excess_joints", "exact"),
                    ]);
                    for c in &all {
                        t.rows.push(vec![
                            c.key().to_string(),
                            num(c.period),
                            format!("{:?}", c.class).to_lowercase(),
                            c.word.len().to_string(),
                            c.joints.iter().filter(|j| !j.singular).count().to_string(),
                        ]);
                    }
                    emit(g, &ctx.csv("closed", &t))
                }
            }
        }
        Cmd::Lambda { surface, closed, graph_len, samples, profile_out } => {
            let s = load_surface(surface)?;
            let mut ctx = Ctx::new(g, surface, json!({"closed": closed, "graph_len": graph_len, "samples": samples}));
            let cfg = ctx.lambda_config(&s)?;
            let graph = build_concat_graph(&s, *graph_len, g.max_charts)?;
            let c = closed_by_key(&graph, closed)?;
            let p = c.to_path(&graph);
            let prof = Profile::of_path(&p);
            let n = (*samples).max(1);
            let mut t = Table::new(&[("t", "exact"), ("lambda", "exact"), ("lambda_uu", "exact"), ("lambda_ss", "exact")]);
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for k in 0..n {
                let x = c.period * k as f64 / n as f64;
                let (l, u, v) = (prof.lambda(x, cfg.s)?, prof.uu(x, cfg.s)?, prof.ss(x, cfg.s)?);
                lo = lo.min(l);
                hi = hi.max(l);
                t.rows.push(vec![num(x), num(l), num(u), num(v)]);
            }
            if let Some(path) = profile_out {
                std::fs::write(path, ctx.csv("lambda", &t)).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
            }
            let mean = prof.integral(0.0, c.period, cfg.s)? / c.period;
            let res = json!({
                "key": c.key().to_string(),
                "period": c.period,
                "class": c.class,
                "lambda_min_sampled": lo,
                "lambda_max_sampled": hi,
                "lambda_mean": mean,
                "excess_events": prof.events(),
                "in_g_eta_full_period": in_g_eta(&p.clone().with_window(0.0, c.period), c.period, &cfg)?,
            });
            emit(g, &ctx.json("lambda", res))
        }
        Cmd::Decompose { surface, closed, window, graph_len } => {
            let s = load_surface(surface)?;
            let mut ctx = Ctx::new(g, surface, json!({"closed": closed, "window": window, "graph_len": graph_len}));
            let cfg = ctx.lambda_config(&s)?;
            let (a, b) = parse_pair(window)?;
            if !(b >= a) {
                return Err(CliError::Usage("window must have a ≤ b".into()));
            }
            let graph = build_concat_graph(&s, *graph_len, g.max_charts)?;
            let c = closed_by_key(&graph, closed)?;
            let p = c.to_path(&graph).with_window(a, b);
            let d = decompose(&p, b - a, &cfg)?;
            let res = json!({
                "key": c.key().to_string(),
                "window": [a, b],
                "prefix": [0.0, d.p],
                "good": [d.p, d.q],
                "suffix": [d.q, d.t],
                "in_g_eta": in_g_eta(&p, b - a, &cfg)?,
            });
            emit(g, &ctx.json("decompose", res))
        }
        Cmd::Spec(SpecCmd::Glue { surface, segments, delta, mode, build }) => {
            let s = load_surface(surface)?;
            let mut ctx = Ctx::new(g, surface, json!({"segments": segments, "delta": delta, "mode": mode, "graph_len": build.graph_len, "pair_q": build.pair_q}));
            let cfg = ctx.lambda_config(&s)?;
            let mode = match mode.as_str() {
                "weak" => GlueMode::Weak,
                "strong" => GlueMode::Strong,
                _ => return Err(CliError::Usage(format!("bad --mode {mode:?}"))),
            };
            let graph = build_concat_graph(&s, build.graph_len, g.max_charts)?;
            let v: Value = serde_json::from_str(&read(segments)?).map_err(|e| CliError::Invalid(e.to_string()))?;
            let list = v.as_array().ok_or_else(|| CliError::Invalid("segments file must hold a JSON list".into()))?;
            let segs = list.iter().map(|x| segment_from(&graph, x)).collect::<Result<Vec<_>, _>>()?;
            let gap = if mode == GlueMode::Strong { delta / 4.0 } else { *delta };
            let (long, short) = similar_length_pair(&graph, gap, build.pair_q, g.max_cycles)?;
            let pair = LoopPair { long, short };
            let r = glue_segments(&s, &graph, &segs, *delta, mode, &cfg, &pair, None)?;
            emit(g, &ctx.json("spec glue", json!({"report": r, "key": r.closed.key().to_string()})))
        }
        Cmd::Spec(SpecCmd::Periodic { surface, segment, delta, build }) => {
            let s = load_surface(surface)?;
            let mut ctx = Ctx::new(g, surface, json!({"segment": segment, "delta": delta, "graph_len": build.graph_len, "pair_q": build.pair_q}));
            let cfg = ctx.lambda_config(&s)?;
            let graph = build_concat_graph(&s, build.graph_len, g.max_charts)?;
            let v: Value = serde_json::from_str(&read(segment)?).map_err(|e| CliError::Invalid(e.to_string()))?;
            let (p, t) = segment_from(&graph, &v)?;
            let (long, short) = similar_length_pair(&graph, *delta, build.pair_q, g.max_cycles)?;
            let pair = LoopPair { long, short };
            let r = periodic_approximation(&s, &graph, (&p, t), *delta, &cfg, &pair, None)?;
            emit(g, &ctx.json("spec periodic", json!({"approximation": r, "key": r.report.closed.key().to_string()})))
        }
        Cmd::Pressure { surface, sums, class, out } => {
            let s = load_surface(surface)?;
            let ctx = Ctx::new(g, surface, json!({"phi": sums.phi, "Q": sums.q, "delta": sums.delta, "class": class}));
            let filter = match class.as_str() {
                "regular" => GeodesicClass::Regular,
                "singular" => GeodesicClass::Singular,
                _ => return Err(CliError::Usage(format!("bad --class {class:?}"))),
            };
            let phi = potential(&s, sums.phi.as_deref())?;
            let grid = parse_grid(&sums.q)?;
            let qmax = grid.iter().copied().fold(0.0, f64::max);
            let graph = build_concat_graph(&s, qmax, g.max_charts)?;
            let ens = Ensemble::new(&s, &graph, g.max_cycles);
            let r = pressure_estimate(&ens, &phi, &grid, sums.delta, filter)?;
            match out {
                Format::Json => emit(g, &ctx.json("pressure", serde_json::to_value(&r).expect("serializable"))),
                Format::Csv => {
                    let mut t = Table::new(&[("Q", "exact"), ("count", "exact"), ("log_lambda", "exact"), ("fitted", "estimate")]);
                    for i in 0..r.q.len() {
                        t.rows.push(vec![num(r.q[i]), r.count[i].to_string(), num(r.log_lambda[i]), num(r.intercept + r.slope * r.q[i])]);
                    }
                    emit(g, &ctx.csv("pressure", &t))
                }
            }
        }
        Cmd::Gap { surface, sums } => {
            let s = load_surface(surface)?;
            let ctx = Ctx::new(g, surface, json!({"phi": sums.phi, "Q": sums.q, "delta": sums.delta}));
            let phi = potential(&s, sums.phi.as_deref())?;
            let grid = parse_grid(&sums.q)?;
            let qmax = grid.iter().copied().fold(0.0, f64::max);
            let graph = build_concat_graph(&s, qmax, g.max_charts)?;
            let ens = Ensemble::new(&s, &graph, g.max_cycles);
            let r = pressure_gap_report(&ens, &phi, &grid, sums.delta)?;
            emit(g, &ctx.json("gap", serde_json::to_value(&r).expect("serializable")))
        }
        Cmd::Equidist { surface, sums, f, out } => {
            let s = load_surface(surface)?;
            let ctx = Ctx::new(g, surface, json!({"phi": sums.phi, "f": f, "Q": sums.q, "delta": sums.delta}));
            let phi = potential(&s, sums.phi.as_deref())?;
            let obs = potential(&s, Some(f))?;
            let grid = parse_grid(&sums.q)?;
            let qmax = grid.iter().copied().fold(0.0, f64::max);
            let graph = build_concat_graph(&s, qmax, g.max_charts)?;
            let ens = Ensemble::new(&s, &graph, g.max_cycles);
            let r = equidistribution_series(&ens, &phi, &grid, sums.delta, &obs)?;
            match out {
                Format::Json => emit(g, &ctx.json("equidist", serde_json::to_value(&r).expect("serializable"))),
                Format::Csv => emit(g, &ctx.csv("equidist", &equidist_table(&r))),
            }
        }
        Cmd::Report { surface, dir, q, delta, saddle_len } => report(g, surface, dir, q, *delta, *saddle_len),
    }
}

fn equidist_table(r: &crate::thermo::EquidistributionSeries) -> Table {
    let mut t = Table::new(&[("Q", "exact"), ("mu", "estimate"), ("difference", "estimate")]);
    for i in 0..r.q.len() {
        let d = if i == 0 { String::new() } else { num(r.differences[i - 1]) };
        t.rows.push(vec![num(r.q[i]), num(r.value[i]), d]);
    }
    t
}

fn report(g: &Global, surface: &Path, dir: &Path, q: &str, delta: f64, saddle_len: u32) -> Result<(), CliError> {
    let s = load_surface(surface)?;
    let ctx = Ctx::new(g, surface, json!({"Q": q, "delta": delta, "saddle_len": saddle_len}));
    let grid = parse_grid(q)?;
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let mut files: Vec<&str> = Vec::new();
    let write = |name: &str, text: String| -> Result<(), CliError> {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", p.display())))
    };
    let manifest = |files: &[&str], failure: Option<&CliError>| {
        ctx.json(
            "report",
            json!({
                "files": files,
                "truncated": failure.is_some(),
                "error": failure.map(|e| e.message().to_string()),
            }),
        )
    };
    let body = |files: &mut Vec<&str>| -> Result<(), CliError> {
        write("invariants.json", ctx.json("invariants", invariants_json(&s)))?;
        files.push("invariants.json");

        let scs = enumerate_saddle_connections(&s, saddle_len as f64, g.max_charts)?;
        let mut t = Table::new(&[("L", "exact"), ("count", "exact")]);
        for l in 1..=saddle_len {
            let n = scs.iter().filter(|c| c.length <= l as f64 + TOL_GEOM).count();
            t.rows.push(vec![l.to_string(), n.to_string()]);
        }
        write("saddle_counts.csv", ctx.csv("saddles", &t))?;
        files.push("saddle_counts.csv");

        let qmax = grid.iter().copied().fold(0.0, f64::max);
        let graph = build_concat_graph(&s, qmax, g.max_charts)?;
        let ens = Ensemble::new(&s, &graph, g.max_cycles);
        let gap = pressure_gap_report(&ens, &Potential::zero(), &grid, delta)?;
        let mut t = Table::new(&[("Q", "exact"), ("regular", "exact"), ("singular", "exact")]);
        for i in 0..grid.len() {
            t.rows.push(vec![num(grid[i]), gap.regular.count[i].to_string(), gap.singular.count[i].to_string()]);
        }
        write("closed_counts.csv", ctx.csv("closed", &t))?;
        files.push("closed_counts.csv");
        write("gap.json", ctx.json("gap", serde_json::to_value(&gap).expect("serializable")))?;
        files.push("gap.json");

        let mut f = Potential::zero();
        f.per_polygon.insert(s.polygons[0].id, 1.0);
        let eq = equidistribution_series(&ens, &Potential::zero(), &grid, delta, &f)?;
        write("equidist.csv", ctx.csv("equidist", &equidist_table(&eq)))?;
        files.push("equidist.csv");
        Ok(())
    };
    let res = body(&mut files);
    write("manifest.json", manifest(&files, res.as_ref().err()))?;
    res
}
