//! Command-line entry point.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use super::render::{render, Overlays, Palette};
use super::report::{build_report, report_serialize, ErrorReport};
use crate::blaschke::{parabolic_blaschke, solve_b_for_multiplier, verify_triple_root, verify_triple_root_at, BlaschkeModel, TripleRootReport};
use crate::channel::{channel_diagram, mark};
use crate::exec::Executor;
use crate::newton::{build_newton_map, critical_points, fixed_points, NewtonMapSpec, FIXED_TOL};
use crate::orbits::{classify_grid_with, iterate, pcm_report, petal_directions, GridParams, Label, OrbitRecord, Viewport, DEFAULT_EPS_CONV, GRID_MAX_STEPS, POINT_MAX_STEPS};
use crate::polyalg::{parse_complex, ComplexPoly, C64};
use crate::sphere::{Cx, SpherePoint};
use crate::surgery::{surgery_check, surgery_pipeline_report, Marking, PipelineParams, SurgeryCheckParams};

/// Settings readable from `--config`; command-line flags take precedence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub p: Option<String>,
    pub q: Option<String>,
    pub viewport: Viewport,
    pub width: usize,
    pub height: usize,
    pub max_steps: usize,
    pub point_max_steps: usize,
    pub eps_conv: f64,
    pub max_resolution: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            p: None,
            q: None,
            viewport: Viewport::square(C64::new(0.0, 0.0), 2.0),
            width: 512,
            height: 512,
            max_steps: GRID_MAX_STEPS,
            point_max_steps: POINT_MAX_STEPS,
            eps_conv: DEFAULT_EPS_CONV,
            max_resolution: 8192,
        }
    }
}

impl RunConfig {
    fn validate(&self) -> Result<(), CliError> {
        if !(self.eps_conv > 0.0) {
            return Err(CliError::Usage("eps_conv must be positive".into()));
        }
        if self.width == 0 || self.height == 0 || self.width > self.max_resolution || self.height > self.max_resolution {
            return Err(CliError::Usage(format!("resolution must be between 1 and {}", self.max_resolution)));
        }
        let v = self.viewport;
        if !(v.re_max > v.re_min && v.im_max > v.im_min) {
            return Err(CliError::Usage("viewport is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(name = "newtonlab", version, about = "Newton maps of p(z)e^q(z)")]
struct Cli {
    /// JSON file with run settings
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the JSON report here instead of stdout
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct MapArgs {
    /// Ascending coefficients of p, e.g. "-1+0i,0+0i,1+0i"
    #[arg(long, allow_hyphen_values = true)]
    p: Option<String>,
    /// Ascending coefficients of q (default 0)
    #[arg(long, allow_hyphen_values = true)]
    q: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Construct the Newton map and list fixed and critical points
    Build(MapArgs),
    /// Iterate one starting point
    Orbit {
        #[command(flatten)]
        map: MapArgs,
        /// Starting point "re,im" or "inf"
        #[arg(long, allow_hyphen_values = true)]
        z0: String,
        #[arg(long)]
        max_steps: Option<usize>,
    },
    /// Postcritically-minimal heuristics
    PcmCheck(MapArgs),
    /// Classify a pixel grid and write a PPM image
    Render {
        #[command(flatten)]
        map: MapArgs,
        /// "re_min,re_max,im_min,im_max"
        #[arg(long, allow_hyphen_values = true)]
        viewport: Option<String>,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
        #[arg(long)]
        max_steps: Option<usize>,
        /// PPM output path
        #[arg(long)]
        image: Option<PathBuf>,
        /// Comma-separated subset of fixed,critical,rays,petals
        #[arg(long)]
        overlay: Option<String>,
        #[arg(long)]
        no_shading: bool,
        /// Worker count (overrides NEWTONLAB_THREADS)
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Blaschke disk model for a degree and multiplier
    Blaschke {
        #[arg(long)]
        k: usize,
        /// Multiplier at the attracting fixed point; omit for the parabolic member
        #[arg(long)]
        target_multiplier: Option<f64>,
    },
    /// Disk model, sector extension and area-tail checks
    SurgeryCheck {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        r: f64,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        mmax: Option<usize>,
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Surgery ingredients for marked basins of a polynomial Newton map
    SurgeryPipeline {
        #[command(flatten)]
        map: MapArgs,
        /// Basins to mark, "i,j,..." or "basin:ray,..."
        #[arg(long, allow_hyphen_values = true)]
        mark: Option<String>,
    },
    /// Fixed internal rays of the root basins
    Channel {
        #[command(flatten)]
        map: MapArgs,
        /// Rays to mark, "basin:ray,..."
        #[arg(long)]
        mark: Option<String>,
        /// Write ray polylines as CSV here
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Compute { kind: &'static str, message: String },
}

fn compute<E: std::fmt::Display>(kind: &'static str) -> impl Fn(E) -> CliError {
    move |e| CliError::Compute { kind, message: e.to_string() }
}

#[derive(Debug, Serialize)]
struct OrbitReport {
    p: String,
    q: String,
    z0: SpherePoint,
    record: OrbitRecord,
}

#[derive(Debug, Serialize)]
struct BlaschkeReport {
    #[serde(flatten)]
    model: BlaschkeModel,
    triple_root_check: TripleRootReport,
}

#[derive(Debug, Serialize)]
struct LabelCounts {
    roots: Vec<usize>,
    petals: Vec<usize>,
    cycle: usize,
    undecided: usize,
}

#[derive(Debug, Serialize)]
struct RenderReport {
    p: String,
    q: String,
    viewport: Viewport,
    width: usize,
    height: usize,
    roots: Vec<Cx>,
    petals: usize,
    counts: LabelCounts,
    image: Option<String>,
    bytes: usize,
}

/// Runs the CLI on `args` (including the program name) and returns the exit
/// code. Reports go to `out` (or `--out`), usage and errors to `err`.
pub fn run_cli_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if code == 0 { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(text) => {
            let written = match &cli.out {
                Some(path) => std::fs::write(path, text.as_bytes()).map_err(|e| e.to_string()),
                None => writeln!(out, "{text}").map_err(|e| e.to_string()),
            };
            match written {
                Ok(()) => 0,
                Err(e) => {
                    let _ = writeln!(err, "{}", report_serialize("error", &ErrorReport { error: "io".into(), message: e }));
                    1
                }
            }
        }
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}\n\nUsage: newtonlab <COMMAND> [OPTIONS]; see newtonlab --help");
            2
        }
        Err(CliError::Compute { kind, message }) => {
            let _ = writeln!(err, "{}", report_serialize("error", &ErrorReport { error: kind.into(), message }));
            1
        }
    }
}

pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_cli_with(args, &mut std::io::stdout(), &mut std::io::stderr())
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    let cfg = match path {
        None => RunConfig::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))?
        }
    };
    Ok(cfg)
}

fn parse_poly(s: &str) -> Result<ComplexPoly, CliError> {
    s.parse::<ComplexPoly>().map_err(|e| CliError::Usage(e.to_string()))
}

fn newton_map(args: &MapArgs, cfg: &RunConfig) -> Result<NewtonMapSpec, CliError> {
    let p = args.p.as_ref().or(cfg.p.as_ref()).ok_or_else(|| CliError::Usage("missing --p".into()))?;
    let q = args.q.as_ref().or(cfg.q.as_ref()).map_or("0", |s| s.as_str());
    build_newton_map(&parse_poly(p)?, &parse_poly(q)?).map_err(compute("newton"))
}

fn parse_point(s: &str) -> Result<SpherePoint, CliError> {
    if s.trim() == "inf" {
        return Ok(SpherePoint::Infinity);
    }
    let parts: Vec<&str> = s.split(',').collect();
    let bad = || CliError::Usage(format!("expected re,im or inf, got {s:?}"));
    match parts.as_slice() {
        [re, im] => Ok(SpherePoint::Finite(C64::new(re.trim().parse().map_err(|_| bad())?, im.trim().parse().map_err(|_| bad())?))),
        [one] => parse_complex(one).map(SpherePoint::Finite).map_err(|_| bad()),
        _ => Err(bad()),
    }
}

fn parse_viewport(s: &str) -> Result<Viewport, CliError> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("bad viewport {s:?}")))?;
    match v.as_slice() {
        &[re_min, re_max, im_min, im_max] => Ok(Viewport { re_min, re_max, im_min, im_max }),
        _ => Err(CliError::Usage("viewport needs four numbers".into())),
    }
}

fn parse_marks(s: &str) -> Result<Vec<(usize, Option<usize>)>, CliError> {
    let bad = || CliError::Usage(format!("bad marking {s:?}"));
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| match t.split_once(':') {
            Some((b, r)) => Ok((b.trim().parse().map_err(|_| bad())?, Some(r.trim().parse().map_err(|_| bad())?))),
            None => Ok((t.trim().parse().map_err(|_| bad())?, None)),
        })
        .collect()
}

fn dispatch(cli: &Cli) -> Result<String, CliError> {
    let mut cfg = load_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Build(map) => {
            let spec = newton_map(map, &cfg)?;
            Ok(report_serialize("build", &build_report(&spec).map_err(compute("newton"))?))
        }
        Command::Orbit { map, z0, max_steps } => {
            let spec = newton_map(map, &cfg)?;
            let z0 = parse_point(z0)?;
            let steps = max_steps.unwrap_or(cfg.point_max_steps);
            cfg.validate()?;
            let record = iterate(&spec, z0, steps, cfg.eps_conv);
            Ok(report_serialize("orbit", &OrbitReport { p: spec.p.to_string(), q: spec.q.to_string(), z0, record }))
        }
        Command::PcmCheck(map) => {
            let spec = newton_map(map, &cfg)?;
            Ok(report_serialize("pcm-check", &pcm_report(&spec).map_err(compute("orbits"))?))
        }
        Command::Render { map, viewport, width, height, max_steps, image, overlay, no_shading, threads } => {
            let spec = newton_map(map, &cfg)?;
            if let Some(v) = viewport {
                cfg.viewport = parse_viewport(v)?;
            }
            cfg.width = width.unwrap_or(cfg.width);
            cfg.height = height.unwrap_or(cfg.height);
            cfg.max_steps = max_steps.unwrap_or(cfg.max_steps);
            cfg.validate()?;
            let grid = GridParams { viewport: cfg.viewport, width: cfg.width, height: cfg.height, max_steps: cfg.max_steps, eps_conv: cfg.eps_conv };
            let exec = threads.map_or_else(Executor::from_env, Executor::with_threads);
            let raster = classify_grid_with(&spec, &grid, exec).map_err(compute("orbits"))?;
            let overlays = build_overlays(&spec, overlay.as_deref())?;
            let bytes = render(&raster, &Palette { shading: !no_shading }, &overlays);
            if let Some(path) = image {
                std::fs::write(path, &bytes).map_err(compute("io"))?;
            }
            let mut counts = LabelCounts { roots: vec![0; raster.roots.len()], petals: vec![0; raster.petals], cycle: 0, undecided: 0 };
            for l in &raster.labels {
                match *l {
                    Label::Root(i) => counts.roots[i as usize] += 1,
                    Label::Petal(j) => counts.petals[j as usize] += 1,
                    Label::Cycle => counts.cycle += 1,
                    Label::Undecided => counts.undecided += 1,
                }
            }
            Ok(report_serialize(
                "render",
                &RenderReport {
                    p: spec.p.to_string(),
                    q: spec.q.to_string(),
                    viewport: cfg.viewport,
                    width: cfg.width,
                    height: cfg.height,
                    roots: raster.roots.iter().map(|&z| z.into()).collect(),
                    petals: raster.petals,
                    counts,
                    image: image.as_ref().map(|p| p.display().to_string()),
                    bytes: bytes.len(),
                },
            ))
        }
        Command::Blaschke { k, target_multiplier } => {
            let (model, check) = match target_multiplier {
                Some(l) => {
                    let m = solve_b_for_multiplier(*k, *l).map_err(compute("blaschke"))?;
                    (m, verify_triple_root_at(*k, m.b))
                }
                None => (parabolic_blaschke(*k).map_err(compute("blaschke"))?, verify_triple_root(*k)),
            };
            Ok(report_serialize("blaschke", &BlaschkeReport { model, triple_root_check: check }))
        }
        Command::SurgeryCheck { k, r, lambda, theta, mmax, grid } => {
            let d = SurgeryCheckParams::default();
            let params = SurgeryCheckParams {
                k: *k,
                r: *r,
                lambda: lambda.unwrap_or(d.lambda),
                theta: theta.unwrap_or(d.theta),
                m_max: mmax.unwrap_or(d.m_max),
                grid: grid.unwrap_or(d.grid),
                ..d
            };
            Ok(report_serialize("surgery-check", &surgery_check(&params).map_err(compute("surgery"))?))
        }
        Command::SurgeryPipeline { map, mark } => {
            let spec = newton_map(map, &cfg)?;
            let marks: Vec<Marking> = match mark {
                Some(s) => parse_marks(s)?.into_iter().map(|(basin, ray)| Marking { basin, ray }).collect(),
                None => Vec::new(),
            };
            let report = surgery_pipeline_report(&spec, &marks, &PipelineParams::default()).map_err(compute("surgery"))?;
            Ok(report_serialize("surgery-pipeline", &report))
        }
        Command::Channel { map, mark: marks, csv } => {
            let spec = newton_map(map, &cfg)?;
            let mut diagram = channel_diagram(&spec).map_err(compute("channel"))?;
            if let Some(s) = marks {
                let sel = parse_marks(s)?
                    .into_iter()
                    .map(|(b, r)| r.map(|r| (b, r)).ok_or_else(|| CliError::Usage("channel markings need basin:ray".into())))
                    .collect::<Result<Vec<_>, _>>()?;
                diagram = mark(&diagram, &sel).map_err(compute("channel"))?;
            }
            if let Some(path) = csv {
                std::fs::write(path, diagram.to_csv()).map_err(compute("io"))?;
            }
            Ok(report_serialize("channel", &diagram))
        }
    }
}

fn build_overlays(spec: &NewtonMapSpec, which: Option<&str>) -> Result<Overlays, CliError> {
    let mut o = Overlays::default();
    let Some(which) = which else { return Ok(o) };
    for item in which.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item {
            "fixed" => {
                o.fixed_points = fixed_points(spec, FIXED_TOL).map_err(compute("newton"))?.iter().filter_map(|f| f.location.finite()).collect();
            }
            "critical" => {
                o.critical_points = critical_points(spec, FIXED_TOL).map_err(compute("newton"))?.iter().filter_map(|c| c.point.finite()).collect();
            }
            "rays" => {
                o.rays = channel_diagram(spec).map_err(compute("channel"))?.rays.iter().map(|r| r.points()).collect();
            }
            "petals" => {
                o.petal_directions = petal_directions(spec).map_err(compute("orbits"))?;
            }
            other => return Err(CliError::Usage(format!("unknown overlay {other:?}"))),
        }
    }
    Ok(o)
}
