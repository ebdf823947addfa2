//! `distlab` command line: scene → field → critical scan → level sets,
//! sweeps, reach, DC stationary values and the cone example.
//!
//! Exit codes: 0 ok, 2 bad input, 3 resources, 4 domain, 5 a property the
//! theory guarantees was falsified.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use distlab::cone::{critical_alpha, inequality_batch, obtuse_triple_search, ConeError};
use distlab::critical::{critical_scan, CriterionChoice, CriticalError, ScanParams};
use distlab::dc::{morse_sard_check, CellShape, DcBox, DcError, DEFAULT_CAP};
use distlab::field::FieldError;
use distlab::levelset::{boundary_vs_level, extract_level_set, lipschitz_graph_check, radius_sweep, LevelSetError};
use distlab::reach::{estimate_reach, ReachError, ReachParams};
use distlab::report::emit;
use distlab::scene::SceneError;
use distlab::{ClosedSet64, DCFunctionExact, DistanceField64, GridSpec64, Norm64, NormSpec, Vector64};
use num_rational::BigRational;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "distlab", version, about = "Distance functions to compact sets")]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0: one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Output path; the report goes to stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the distance field and write a binary dump plus JSON sidecar.
    Field {
        #[command(flatten)]
        source: Source,
        /// Also write one CSV line per vertex: coordinates, then value.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Classify grid vertices as regular or critical.
    Crit {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        scan: ScanArgs,
    },
    /// Extract and check the level set {d = r}.
    Levelset {
        #[command(flatten)]
        source: Source,
        /// Level to extract.
        #[arg(long)]
        r: f64,
        /// Mesh samples for the local graph check (0 skips it).
        #[arg(long, default_value_t = 50)]
        samples: usize,
        /// Radius of the ball around each sample that the graph check looks at.
        #[arg(long, default_value_t = 0.2)]
        window: f64,
        /// Also write the mesh as Wavefront OBJ.
        #[arg(long)]
        obj: Option<PathBuf>,
    },
    /// Critical scan followed by a sweep of level sets over a radius range.
    Sweep {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        scan: ScanArgs,
        /// Smallest radius of the sweep.
        #[arg(long)]
        rmin: f64,
        /// Largest radius of the sweep.
        #[arg(long)]
        rmax: f64,
        /// Evenly spaced radii, both ends included.
        #[arg(long, default_value_t = 50)]
        count: usize,
    },
    /// Reach of the superlevel set {d ≥ r}.
    Reach {
        #[command(flatten)]
        source: Source,
        /// Level whose superlevel set is tested.
        #[arg(long)]
        r: f64,
        /// Queries per boundary point.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
    /// Stationary values of a piecewise-affine DC function, in exact arithmetic.
    DcSard {
        /// JSON file {"dim", "plus", "minus"}; rows are gradient then offset.
        #[arg(long)]
        function: PathBuf,
        /// Working box: lo then hi per axis (x0,x1 or x0,y0,x1,y1).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        bbox: Vec<f64>,
        /// Interval length of the box-counting cover.
        #[arg(long, default_value_t = 1e-3)]
        delta: f64,
        /// Exponent of the premeasure.
        #[arg(long, default_value_t = 0.5)]
        s: f64,
    },
    /// Inequality chain and obtuse-triple search on the cone in ℝ⁴.
    Cone {
        /// Opening parameter, or `auto` for the critical value.
        #[arg(long, default_value = "auto", allow_hyphen_values = true)]
        alpha: String,
        /// Random triples in the obtuse search.
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        /// Random admissible pairs for the inequality chain.
        #[arg(long, default_value_t = 10_000)]
        pairs: usize,
    },
}

/// Where the field comes from: a dump, or a scene sampled on the spot.
#[derive(Args)]
struct Source {
    /// Field dump written by `distlab field`.
    #[arg(long, conflicts_with_all = ["bbox", "res"])]
    field: Option<PathBuf>,
    /// Scene JSON; with --field it is attached for exact queries.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// `euclid`, `lp:<p>` or `table:<path>`.
    #[arg(long, default_value = "euclid")]
    norm: String,
    /// Grid box: lo then hi per axis. Defaults to the scene's box grown by
    /// half its extent plus one.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    bbox: Option<Vec<f64>>,
    /// Vertices along the first axis.
    #[arg(long, default_value_t = 201)]
    res: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum CriterionArg {
    Auto,
    Hull,
    Directional,
}

#[derive(Args)]
struct ScanArgs {
    /// `auto` picks hull for the Euclidean norm with a scene, directional otherwise.
    #[arg(long, value_enum, default_value = "auto")]
    criterion: CriterionArg,
    /// Margin below which a vertex counts as critical.
    #[arg(long)]
    eta: Option<f64>,
    /// Neighbourhood radius of the directional test (default 4h).
    #[arg(long)]
    delta: Option<f64>,
    /// Evaluate the exact distance instead of interpolating.
    #[arg(long)]
    exact: bool,
}

impl ScanArgs {
    fn params(&self, seed: u64) -> Result<ScanParams, Failure> {
        let mut p = ScanParams { seed, exact: self.exact, delta: self.delta, ..Default::default() };
        p.criterion = match self.criterion {
            CriterionArg::Auto => CriterionChoice::Auto,
            CriterionArg::Hull => CriterionChoice::Hull,
            CriterionArg::Directional => CriterionChoice::Directional,
        };
        if let Some(eta) = self.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Failure::Input(format!("--eta must be positive, got {eta}")));
            }
            p.eta = eta;
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Failure::Input(format!("--delta must be positive, got {d}")));
            }
        }
        Ok(p)
    }
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Resource(String),
    Domain(String),
    Falsified(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Resource(_) => 3,
            Failure::Domain(_) => 4,
            Failure::Falsified(_) => 5,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Resource(m) | Failure::Domain(m) | Failure::Falsified(m) => m,
        }
    }
}

impl From<FieldError> for Failure {
    fn from(e: FieldError) -> Self {
        match e {
            FieldError::MemoryCap { .. } => Failure::Resource(e.to_string()),
            FieldError::OutOfBounds => Failure::Domain(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<SceneError> for Failure {
    fn from(e: SceneError) -> Self {
        match e {
            SceneError::OnSet { .. } => Failure::Domain(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<CriticalError> for Failure {
    fn from(e: CriticalError) -> Self {
        match e {
            CriticalError::Field(e) => e.into(),
            CriticalError::Scene(e) => e.into(),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<LevelSetError> for Failure {
    fn from(e: LevelSetError) -> Self {
        match e {
            LevelSetError::Field(e) => e.into(),
            _ => Failure::Domain(e.to_string()),
        }
    }
}

impl From<ReachError> for Failure {
    fn from(e: ReachError) -> Self {
        match e {
            ReachError::LevelSet(e) => e.into(),
            _ => Failure::Domain(e.to_string()),
        }
    }
}

impl From<DcError> for Failure {
    fn from(e: DcError) -> Self {
        match e {
            DcError::Overflow { .. } => Failure::Resource(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<ConeError> for Failure {
    fn from(e: ConeError) -> Self {
        Failure::Input(e.to_string())
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Input(format!("{}: {e}", path.display()))
}

fn parse_box(coords: &[f64], dim: usize) -> Result<(Vec<f64>, Vec<f64>), Failure> {
    if coords.len() != 2 * dim {
        return Err(Failure::Input(format!(
            "--bbox needs {} numbers for dimension {dim}, got {}",
            2 * dim,
            coords.len()
        )));
    }
    if coords.iter().any(|c| !c.is_finite()) {
        return Err(Failure::Input("--bbox must be finite".into()));
    }
    let (lo, hi) = coords.split_at(dim);
    if lo.iter().zip(hi).any(|(a, b)| a >= b) {
        return Err(Failure::Input("--bbox lower corner must lie below the upper one".into()));
    }
    Ok((lo.to_vec(), hi.to_vec()))
}

fn load_scene(path: &Path) -> Result<ClosedSet64, Failure> {
    ClosedSet64::load(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

impl Source {
    fn load(&self) -> Result<DistanceField64, Failure> {
        let scene = self.scene.as_deref().map(load_scene).transpose()?.map(Arc::new);
        if let Some(dump) = &self.field {
            let mut field = DistanceField64::read_dump(dump).map_err(|e| match e {
                FieldError::Io(io) => io_failure(dump, io),
                e => e.into(),
            })?;
            if let Some(scene) = scene {
                field.attach_scene(scene)?;
            }
            return Ok(field);
        }
        let scene = scene.ok_or_else(|| Failure::Input("either --field or --scene is required".into()))?;
        let spec: NormSpec = self.norm.parse().map_err(|e| Failure::Input(format!("--norm: {e}")))?;
        let norm = Norm64::from_spec(&spec, scene.dim()).map_err(|e| Failure::Input(format!("--norm: {e}")))?;
        let dim = scene.dim();
        let (lo, hi) = match &self.bbox {
            Some(c) => parse_box(c, dim)?,
            None => {
                let (lo, hi) = scene.bbox();
                let pad = 1.0 + 0.5 * (hi - lo).max_abs();
                (lo.coords().iter().map(|v| v - pad).collect(), hi.coords().iter().map(|v| v + pad).collect())
            }
        };
        let vec = |c: &[f64]| Vector64::from_slice(c).map_err(|e| Failure::Input(e.to_string()));
        let grid = GridSpec64::with_resolution(vec(&lo)?, vec(&hi)?, self.res)?;
        let mut field = DistanceField64::sample(scene, norm, grid)?;
        field.set_norm_spec(&spec.to_string());
        Ok(field)
    }
}

fn write_report(value: &Value, out: Option<&Path>) -> Result<(), Failure> {
    emit(value, out).map_err(|e| Failure::Resource(format!("cannot write report: {e}")))
}

fn cmd_field(cli: &Cli, source: &Source, csv: Option<&Path>) -> Result<(), Failure> {
    let out = cli.out.as_deref().ok_or_else(|| Failure::Input("field needs --out <dump.bin>".into()))?;
    if source.field.is_some() {
        return Err(Failure::Input("field samples a scene; pass --scene, not --field".into()));
    }
    let field = source.load()?;
    field.write_dump(out).map_err(|e| match e {
        FieldError::Io(io) => Failure::Resource(format!("{}: {io}", out.display())),
        e => e.into(),
    })?;
    if let Some(path) = csv {
        std::fs::write(path, field.to_csv()).map_err(|e| Failure::Resource(format!("{}: {e}", path.display())))?;
    }
    let lip = field.check_lipschitz();
    let summary = json!({
        "dump": out.display().to_string(),
        "sidecar": DistanceField64::sidecar_path(out).display().to_string(),
        "dims": field.grid().dims()[..field.dim()],
        "h": field.h(),
        "norm": field.norm_spec(),
        "scene_hash": field.scene_hash(),
        "min": field.min_value(),
        "max": field.max_value(),
        "lipschitz": {"pairs": lip.pairs, "violations": lip.violations, "max_excess": lip.max_excess, "holds": lip.holds()},
    });
    write_report(&summary, None)
}

fn cmd_crit(cli: &Cli, source: &Source, scan: &ScanArgs) -> Result<(), Failure> {
    let field = source.load()?;
    let report = critical_scan(&field, &scan.params(cli.seed)?)?;
    write_report(&report.to_json(), cli.out.as_deref())
}

fn cmd_levelset(
    cli: &Cli,
    source: &Source,
    r: f64,
    samples: usize,
    window: f64,
    obj: Option<&Path>,
) -> Result<(), Failure> {
    let field = source.load()?;
    let mesh = extract_level_set(&field, r)?;
    if let Some(path) = obj {
        std::fs::write(path, mesh.to_obj()).map_err(|e| Failure::Resource(format!("{}: {e}", path.display())))?;
    }
    let graph = match samples {
        0 => Value::Null,
        n => serde_json::to_value(lipschitz_graph_check(&field, &mesh, window, n)?).expect("plain data"),
    };
    let boundary = boundary_vs_level(&field, r)?;
    let report = json!({
        "mesh": mesh.to_json(),
        "measure": mesh.measure(),
        "graph_check": graph,
        "boundary_vs_level": {
            "hausdorff": boundary.hausdorff,
            "coincide": boundary.coincide,
            "level_points": boundary.level_points,
            "boundary_points": boundary.boundary_points,
        },
    });
    write_report(&report, cli.out.as_deref())
}

fn cmd_sweep(cli: &Cli, source: &Source, scan: &ScanArgs, rmin: f64, rmax: f64, count: usize) -> Result<(), Failure> {
    if rmin.is_nan() || rmax.is_nan() || rmin >= rmax || count < 2 {
        return Err(Failure::Input("sweep needs rmin < rmax and --count ≥ 2".into()));
    }
    let field = source.load()?;
    let (min, max) = (field.min_value(), field.max_value());
    if !(rmin > min && rmax < max) {
        return Err(Failure::Domain(format!(
            "radius range [{rmin}, {rmax}] outside the field's values ({min}, {max})"
        )));
    }
    let critical = critical_scan(&field, &scan.params(cli.seed)?)?;
    let sweep = radius_sweep(&field, rmin, rmax, count, Some(&critical))?;
    let report = json!({"critical": critical.to_json(), "sweep": sweep.to_json()});
    write_report(&report, cli.out.as_deref())
}

fn cmd_reach(cli: &Cli, source: &Source, r: f64, samples: usize) -> Result<(), Failure> {
    if samples == 0 {
        return Err(Failure::Input("--samples must be positive".into()));
    }
    let field = source.load()?;
    let params = ReachParams { samples, seed: cli.seed, ..Default::default() };
    let report = estimate_reach(&field, r, &params)?;
    write_report(&report.to_json(), cli.out.as_deref())
}

fn exact(v: &BigRational) -> Value {
    json!({"exact": v.to_string(), "approx": distlab::Exact::approx(v)})
}

fn cmd_dc_sard(cli: &Cli, function: &Path, bbox: &[f64], delta: f64, s: f64) -> Result<(), Failure> {
    if !(delta > 0.0 && delta.is_finite() && s > 0.0 && s.is_finite()) {
        return Err(Failure::Input("--delta and --s must be positive".into()));
    }
    let text = std::fs::read_to_string(function).map_err(|e| io_failure(function, e))?;
    let f = DCFunctionExact::from_json(&text)?;
    let (lo, hi) = parse_box(bbox, f.dim())?;
    let q =
        |v: &[f64]| v.iter().map(|&x| distlab::Exact::from_f64_exact(x).expect("finite")).collect::<Vec<BigRational>>();
    let bx = DcBox::new(q(&lo), q(&hi))?;
    let (cells, estimate) = morse_sard_check(&f, &bx, s, delta, DEFAULT_CAP)?;
    let mut values: Vec<BigRational> = cells.iter().map(|c| c.value.clone()).collect();
    values.sort();
    values.dedup();
    let cells: Vec<Value> = cells
        .iter()
        .map(|c| {
            let shape = match &c.shape {
                CellShape::Interval(a, b) => json!({"interval": [exact(a), exact(b)]}),
                CellShape::Polygon(p) => {
                    json!({"polygon": p.iter().map(|v| [exact(&v[0]), exact(&v[1])]).collect::<Vec<_>>()})
                }
            };
            json!({"shape": shape, "value": exact(&c.value)})
        })
        .collect();
    let report = json!({
        "dim": f.dim(),
        "stationary_cells": cells,
        "stationary_values": values.iter().map(exact).collect::<Vec<_>>(),
        "hausdorff": estimate.summary_json(),
    });
    write_report(&report, cli.out.as_deref())
}

fn cmd_cone(cli: &Cli, alpha: &str, samples: usize, pairs: usize) -> Result<(), Failure> {
    let ac = critical_alpha();
    let alpha = match alpha.trim() {
        "auto" => ac,
        a => a.parse::<f64>().map_err(|_| Failure::Input(format!("--alpha: expected a number or auto, got '{a}'")))?,
    };
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Failure::Input(format!("--alpha must be positive, got {alpha}")));
    }
    let claim_applies = alpha >= ac;
    let batch = if claim_applies { Some(inequality_batch(alpha, pairs, cli.seed)?) } else { None };
    let search = obtuse_triple_search(alpha, samples, cli.seed)?;
    let mut report = search.to_json();
    report["critical_alpha"] = json!(ac);
    report["claim_applies"] = json!(claim_applies);
    report["inequality"] = serde_json::to_value(&batch).expect("plain data");
    write_report(&report, cli.out.as_deref())?;
    if claim_applies && search.witness.is_some() {
        return Err(Failure::Falsified(format!("pairwise obtuse triple found at alpha = {alpha}")));
    }
    if batch.is_some_and(|b| b.violations > 0) {
        return Err(Failure::Falsified("inequality chain violated".into()));
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Field { source, csv } => cmd_field(cli, source, csv.as_deref()),
        Command::Crit { source, scan } => cmd_crit(cli, source, scan),
        Command::Levelset { source, r, samples, window, obj } => {
            cmd_levelset(cli, source, *r, *samples, *window, obj.as_deref())
        }
        Command::Sweep { source, scan, rmin, rmax, count } => cmd_sweep(cli, source, scan, *rmin, *rmax, *count),
        Command::Reach { source, r, samples } => cmd_reach(cli, source, *r, *samples),
        Command::DcSard { function, bbox, delta, s } => cmd_dc_sard(cli, function, bbox, *delta, *s),
        Command::Cone { alpha, samples, pairs } => cmd_cone(cli, alpha, *samples, *pairs),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(3);
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.code())
        }
    }
}
