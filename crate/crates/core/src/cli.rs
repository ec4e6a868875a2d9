//! Batch front end: parse a run configuration, dispatch one analysis, write a
//! JSON report or a CSV table, and map the verdict to an exit code.
//!
//! Exit codes: 0 when every check passes, 1 when any check fails, 2 on usage,
//! input or evaluation errors.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::Error;
use crate::gauge::{kappa, GaugeFunction, GaugeSpec};
use crate::limits::{
    check_content_inequalities, check_gauge_sandwich, check_gauge_two_sided,
    check_measurability_transfer, check_two_sided_transfer, dimension_estimate,
    surface_dimension_estimate, BracketConfig, CheckReport, DimensionMethod, Grid, SurfaceSource,
    VolumeSurface,
};
use crate::report::{counterexample_report, gauge_table, Check, Envelope, Table};
use crate::spectral::{geometric_x_grid, mwb_residual_scan};
use crate::strings::{string_content_harness, FractalString, HarnessConfig, StringSpec};
use crate::voxel::{
    analyze_set, box_count_dimension, io::load_mask, rasterize, AffineMap, IfsSpec, RasterOptions,
    Seed, VoxelConfig, VoxelGrid, VoxelReport, VoxelSample,
};

const SCHEMA_HELP: &str = "\
Input specs (--spec PATH, JSON unless the path ends in .pgm or .pbm):
  string:  {\"kind\":\"a_string\",\"a\":1.0} | {\"kind\":\"power\",\"L\":1.0,\"D\":0.5}
           | {\"kind\":\"cantor\",\"scale\":0.3333333333333333} | {\"kind\":\"explicit\",\"lengths\":[...]}
           optionally wrapped with a gauge: {\"string\":{...},\"gauge\":{...}}
  gauge:   {\"family\":\"power\",\"s\":0.5} | {\"family\":\"inverse_log\",\"c\":0.5199}
           | {\"family\":\"power_log\",\"s\":1.0,\"p\":1.0} | power_log_log | inverse_log_log
  voxel:   {\"preset\":\"sierpinski_carpet\"|\"cantor_dust\",\"depth\":7}
           | {\"maps\":[{\"a\":..,\"b\":..,\"c\":..,\"d\":..,\"e\":..,\"f\":..}],\"depth\":6,\"seed\":\"square\"}
           | {\"image\":\"mask.pgm\",\"padding\":0.25}
           optional: \"raster\":{\"resolution\":2187,\"padding\":0.25}, \"dimension\":s, \"gauge\":{...}
Tolerances (--tol NAME=VALUE): window oscillation trend zero infinity slack alpha_beta
  content dim bound_slack kneser density golden ratio identity spectral
Report: {\"schema\":\"minkowski-lab/1\",\"version\",\"command\",\"config\",\"pass\",\"checks\",\"report\"}
";

const TOLERANCE_NAMES: &[&str] = &[
    "window",
    "oscillation",
    "trend",
    "zero",
    "infinity",
    "slack",
    "alpha_beta",
    "content",
    "dim",
    "bound_slack",
    "kneser",
    "density",
    "golden",
    "ratio",
    "identity",
    "spectral",
];

#[derive(Debug, Parser)]
#[command(
    name = "minklab",
    version,
    about = "Minkowski contents, S-contents and parallel-set asymptotics",
    after_help = SCHEMA_HELP
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// Input spec file.
    #[arg(long, global = true)]
    spec: Option<PathBuf>,
    /// Smallest radius of the scan grid
    #[arg(long, global = true)]
    rmin: Option<f64>,
    /// Largest radius of the scan grid
    #[arg(long, global = true)]
    rmax: Option<f64>,
    /// Geometric grid ratio in (0, 1).
    #[arg(long, global = true)]
    ratio: Option<f64>,
    /// Grid points, at least 12.
    #[arg(long, global = true)]
    points: Option<usize>,
    /// Tolerance override, repeatable.
    #[arg(long = "tol", value_name = "NAME=VALUE", global = true, value_parser = parse_tol)]
    tol: Vec<(String, f64)>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
enum Command {
    /// Fractal strings.
    #[command(subcommand)]
    String(StringCommand),
    /// Piecewise-power Kneser constructions.
    #[command(subcommand)]
    Kneser(KneserCommand),
    /// Rasterized planar and spatial sets.
    #[command(subcommand)]
    Voxel(VoxelCommand),
    /// Run one of the content-transfer checks.
    Verify {
        #[arg(long = "theorem", value_enum)]
        claim: Claim,
    },
    /// Gauge-function tables.
    #[command(subcommand)]
    Gauge(GaugeCommand),
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
enum StringCommand {
    /// Contents, brackets and the bounded/measurable characterisation.
    Analyze,
    /// Packing defect against the eigenvalue count.
    Spectral {
        #[arg(long, default_value_t = 1e2)]
        xmin: f64,
        #[arg(long, default_value_t = 1e8)]
        xmax: f64,
    },
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
enum KneserCommand {
    /// Golden values along the breakpoints.
    Counterexample {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        which: u8,
        #[arg(long, default_value_t = 40)]
        imax: usize,
    },
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
enum VoxelCommand {
    /// Distance-transform analysis of a rasterized set.
    Analyze,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
enum GaugeCommand {
    /// `h`, `h'`, `g` and `r g'/g` on a grid.
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
enum Claim {
    /// Upper and lower content inequalities.
    #[value(name = "1.1", alias = "content-inequalities")]
    #[serde(rename = "1.1")]
    ContentInequalities,
    /// Two-sided bounds transfer from volume to surface; dimensions agree.
    #[value(name = "2.2", alias = "two-sided-transfer")]
    #[serde(rename = "2.2")]
    TwoSidedTransfer,
    /// Minkowski and S-measurability coincide.
    #[value(name = "2.4", alias = "measurability-transfer")]
    #[serde(rename = "2.4")]
    MeasurabilityTransfer,
    /// Gauge sandwich for a differentiable gauge.
    #[value(name = "3.2", alias = "gauge-sandwich")]
    #[serde(rename = "3.2")]
    GaugeSandwich,
    /// Two-sided transfer for a gauge `r^s g(r)`.
    #[value(name = "3.4", alias = "gauge-two-sided")]
    #[serde(rename = "3.4")]
    GaugeTwoSided,
    /// Bounded contents of a string versus its length asymptotics.
    #[value(name = "5.1a", alias = "string-bounded")]
    #[serde(rename = "5.1a")]
    StringBounded,
    /// Measurable contents of a string versus its length asymptotics.
    #[value(name = "5.1b", alias = "string-measurable")]
    #[serde(rename = "5.1b")]
    StringMeasurable,
}

fn parse_tol(s: &str) -> std::result::Result<(String, f64), String> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected NAME=VALUE, got {s}"))?;
    if !TOLERANCE_NAMES.contains(&name) {
        return Err(format!(
            "unknown tolerance {name}; known: {}",
            TOLERANCE_NAMES.join(", ")
        ));
    }
    let v: f64 = value.parse().map_err(|e| format!("{name}: {e}"))?;
    if !(v > 0.0 && v.is_finite()) {
        return Err(format!("tolerance {name} must be positive, got {v}"));
    }
    Ok((name.to_string(), v))
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::Parse(_) => Failure::Usage(e.to_string()),
            other => Failure::Run(other),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(Failure::Usage(msg.into()))
}

/// Echoed into every report; the output path is left out so that runs
/// written to different files produce identical bodies.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    subcommand: Command,
    spec: Option<PathBuf>,
    r_min: Option<f64>,
    r_max: Option<f64>,
    ratio: Option<f64>,
    points: Option<usize>,
    tolerances: BTreeMap<String, f64>,
    format: Format,
}

impl RunConfig {
    fn from_cli(cli: &Cli) -> CliResult<Self> {
        let c = &cli.common;
        if let (Some(lo), Some(hi)) = (c.rmin, c.rmax) {
            if !(lo > 0.0 && lo < hi) {
                return usage(format!("need 0 < rmin < rmax, got {lo}, {hi}"));
            }
        }
        for (name, v) in [("rmin", c.rmin), ("rmax", c.rmax)] {
            if v.is_some_and(|v| !(v > 0.0 && v.is_finite())) {
                return usage(format!("{name} must be positive"));
            }
        }
        if c.points.is_some_and(|p| p < 12) {
            return usage("points must be at least 12");
        }
        if c.ratio.is_some_and(|q| !(q > 0.0 && q < 1.0)) {
            return usage("ratio must lie in (0, 1)");
        }
        if c.ratio.is_some() && c.rmin.is_some() && c.points.is_some() {
            return usage("give at most two of --rmin, --ratio, --points");
        }
        Ok(Self {
            subcommand: cli.command.clone(),
            spec: c.spec.clone(),
            r_min: c.rmin,
            r_max: c.rmax,
            ratio: c.ratio,
            points: c.points,
            tolerances: c.tol.iter().cloned().collect(),
            format: c.format,
        })
    }

    fn tol(&self, name: &str, default: f64) -> f64 {
        self.tolerances.get(name).copied().unwrap_or(default)
    }

    fn bracket(&self, base: BracketConfig) -> BracketConfig {
        BracketConfig {
            window: self.tol("window", base.window).min(1.0),
            oscillation: self.tol("oscillation", base.oscillation),
            trend: self.tol("trend", base.trend),
            zero: self.tol("zero", base.zero),
            infinity: self.tol("infinity", base.infinity),
            slack: self.tol("slack", base.slack),
        }
    }

    /// Grid from `--rmin/--rmax/--ratio/--points` with the given defaults.
    fn grid(&self, r_min: f64, r_max: f64, points: usize) -> CliResult<Grid> {
        let hi = self.r_max.unwrap_or(r_max);
        let grid = match self.ratio {
            Some(q) => {
                let count = match (self.r_min, self.points) {
                    (Some(lo), _) => ((lo / hi).ln() / q.ln()).floor() as usize + 1,
                    (None, Some(p)) => p,
                    (None, None) => Grid::DEFAULT_COUNT,
                };
                if count < 12 {
                    return usage(format!("grid has {count} points, need at least 12"));
                }
                Grid::geometric(hi, q, count)
            }
            None => {
                let lo = self.r_min.unwrap_or(r_min);
                if !(lo < hi) {
                    return usage(format!("need rmin < rmax, got {lo}, {hi}"));
                }
                Grid::between(lo, hi, self.points.unwrap_or(points))
            }
        };
        grid.map_err(|e| Failure::Usage(e.to_string()))
    }

    fn spec_path(&self) -> CliResult<&Path> {
        match &self.spec {
            Some(p) => Ok(p),
            None => usage("this command needs --spec PATH"),
        }
    }
}

struct Outcome {
    checks: Vec<Check>,
    report: Value,
    table: Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
enum Preset {
    SierpinskiCarpet,
    CantorDust,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct VoxelSpec {
    preset: Option<Preset>,
    maps: Option<Vec<AffineMap>>,
    depth: Option<u32>,
    seed: Option<Seed>,
    image: Option<PathBuf>,
    /// Padding for images, as a fraction of the longer side.
    padding: Option<f64>,
    #[serde(default)]
    raster: RasterOptions,
    /// Target exponent; defaults to the similarity or box-counting dimension.
    dimension: Option<f64>,
    gauge: Option<GaugeSpec>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct StringInput {
    string: StringSpec,
    gauge: Option<GaugeSpec>,
}

enum Input {
    String(StringInput),
    Voxel(VoxelSpec, PathBuf),
}

fn read_json(path: &Path) -> CliResult<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn parse_as<T: for<'de> Deserialize<'de>>(v: Value, what: &str) -> CliResult<T> {
    serde_json::from_value(v).map_err(|e| Failure::Usage(format!("invalid {what} spec: {e}")))
}

fn load_input(path: &Path) -> CliResult<Input> {
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    if matches!(ext.as_deref(), Some("pgm" | "pbm")) {
        let spec = VoxelSpec {
            preset: None,
            maps: None,
            depth: None,
            seed: None,
            image: Some(path.to_path_buf()),
            padding: None,
            raster: RasterOptions::default(),
            dimension: None,
            gauge: None,
        };
        return Ok(Input::Voxel(spec, PathBuf::new()));
    }
    let v = read_json(path)?;
    if v.get("kind").is_some() {
        Ok(Input::String(StringInput {
            string: parse_as(v, "string")?,
            gauge: None,
        }))
    } else if v.get("string").is_some() {
        Ok(Input::String(parse_as(v, "string")?))
    } else {
        Ok(Input::Voxel(parse_as(v, "voxel")?, base))
    }
}

fn load_string(cfg: &RunConfig) -> CliResult<(StringInput, FractalString)> {
    match load_input(cfg.spec_path()?)? {
        Input::String(s) => {
            let built = s.string.build()?;
            Ok((s, built))
        }
        Input::Voxel(..) => usage("this command needs a string spec"),
    }
}

fn string_dimension(s: &FractalString) -> CliResult<f64> {
    match s.known_d() {
        Some(d) => Ok(d),
        None => Ok(s.estimate_dimension(HarnessConfig::default().j_max)?),
    }
}

fn build_voxel(spec: &VoxelSpec, base: &Path) -> CliResult<(VoxelGrid, f64, Vec<String>)> {
    let mut notes = Vec::new();
    let (grid, sim) = match (&spec.image, spec.preset, &spec.maps) {
        (Some(img), None, None) => {
            let p = if img.is_absolute() { img.clone() } else { base.join(img) };
            (load_mask(&p, spec.padding.unwrap_or(0.25))?, None)
        }
        (None, Some(preset), None) => {
            let depth = spec.depth.ok_or_else(|| Failure::Usage("preset needs a depth".into()))?;
            let ifs = match preset {
                Preset::SierpinskiCarpet => IfsSpec::sierpinski_carpet(depth),
                Preset::CantorDust => IfsSpec::cantor_dust(depth),
            };
            (rasterize(&ifs, &spec.raster)?, ifs.similarity_dimension())
        }
        (None, None, Some(maps)) => {
            let depth = spec.depth.ok_or_else(|| Failure::Usage("maps need a depth".into()))?;
            let ifs = IfsSpec {
                maps: maps.clone(),
                depth,
                seed: spec.seed.unwrap_or_default(),
            };
            (rasterize(&ifs, &spec.raster)?, ifs.similarity_dimension())
        }
        _ => return usage("voxel spec needs exactly one of image, preset, maps"),
    };
    let s = match (spec.dimension, sim) {
        (Some(s), _) => s,
        (None, Some(s)) => s,
        (None, None) => {
            let s = box_count_dimension(&grid)
                .ok_or_else(|| Failure::Usage("cannot estimate a dimension; give \"dimension\"".into()))?;
            notes.push(format!("target exponent {s:.4} from box counting"));
            s
        }
    };
    Ok((grid, s, notes))
}

fn voxel_config(cfg: &RunConfig) -> CliResult<VoxelConfig> {
    let base = VoxelConfig::default();
    let r_range = match (cfg.r_min, cfg.r_max) {
        (Some(lo), Some(hi)) => Some((lo, hi)),
        (None, None) => None,
        _ => return usage("voxel windows need both --rmin and --rmax"),
    };
    if cfg.ratio.is_some() {
        return usage("voxel analyses take --rmin/--rmax/--points, not --ratio");
    }
    Ok(VoxelConfig {
        r_range,
        points: cfg.points.unwrap_or(base.points),
        slack: cfg.tol("slack", base.slack),
        bound_slack: cfg.tol("bound_slack", base.bound_slack),
        kneser_slack: cfg.tol("kneser", base.kneser_slack),
        density_slack: cfg.tol("density", base.density_slack),
        dim_tol: cfg.tol("dim", base.dim_tol),
        bracket: cfg.bracket(base.bracket.clone()),
        ..base
    })
}

fn harness_config(cfg: &RunConfig) -> HarnessConfig {
    let base = HarnessConfig::default();
    HarnessConfig {
        bracket: cfg.bracket(base.bracket.clone()),
        alpha_beta_tol: cfg.tol("alpha_beta", base.alpha_beta_tol),
        content_tol: cfg.tol("content", base.content_tol),
        ..base
    }
}

fn ratio_table(samples: &[VoxelSample], d: f64, s: f64) -> Table {
    let mut t = Table::new(&["r", "V", "S", "V_ratio", "S_ratio"]);
    let k = kappa(d - s);
    for p in samples {
        let hv = k * p.r.powf(d - s);
        let hs = (d - s) * k * p.r.powf(d - 1.0 - s);
        t.push(vec![
            Some(p.r),
            Some(p.volume),
            Some(p.surface),
            Some(p.volume / hv),
            (d > s).then(|| p.surface / hs),
        ]);
    }
    t
}

fn string_samples(s: &FractalString, grid: &Grid) -> CliResult<Vec<VoxelSample>> {
    grid.radii()
        .iter()
        .map(|&r| {
            Ok(VoxelSample {
                r,
                volume: s.volume(r)?,
                surface: s.surface(r) as f64,
                contour: None,
            })
        })
        .collect()
}

fn to_value(v: &impl Serialize) -> CliResult<Value> {
    serde_json::to_value(v).map_err(|e| Failure::Run(e.into()))
}

fn check_list(rep: &CheckReport) -> Vec<Check> {
    if rep.assertions.is_empty() || !rep.hypothesis_met {
        return vec![Check::new(rep.check.clone(), rep.pass)];
    }
    rep.assertions
        .iter()
        .map(|a| Check::new(format!("{}.{}", rep.check, a.name), a.holds))
        .collect()
}

const STRING_GRID: (f64, f64, usize) = (1e-8, 1e-2, 400);

fn string_analyze(cfg: &RunConfig) -> CliResult<Outcome> {
    let (input, s) = load_string(cfg)?;
    let grid = cfg.grid(STRING_GRID.0, STRING_GRID.1, STRING_GRID.2)?;
    let hc = harness_config(cfg);
    let harness = string_content_harness(&s, &grid, &hc)?;
    let d = harness.d;
    let vol = |r: f64| s.volume(r);
    let sur = |r: f64| Ok(s.surface(r) as f64);
    let pair = VolumeSurface {
        volume: &vol,
        surface: &sur,
        source: SurfaceSource::Exact,
    };
    let ineq = check_content_inequalities(&pair, 1.0, d, true, &grid, &hc.bracket)?;
    let mut checks = vec![
        Check::new("bounded_conditions_agree", harness.part_a_consistent),
        Check::new("measurable_conditions_agree", harness.part_b_consistent),
    ];
    checks.extend(check_list(&ineq));
    let table = ratio_table(&string_samples(&s, &grid)?, 1.0, d);
    let report = json!({
        "input": to_value(&input.string)?,
        "characterisation": to_value(&harness)?,
        "content_inequalities": to_value(&ineq)?,
    });
    Ok(Outcome {
        checks,
        report,
        table,
    })
}

fn string_spectral(cfg: &RunConfig, xmin: f64, xmax: f64) -> CliResult<Outcome> {
    if !(xmin > 0.0 && xmin < xmax) {
        return usage(format!("need 0 < xmin < xmax, got {xmin}, {xmax}"));
    }
    let (input, s) = load_string(cfg)?;
    let xs = geometric_x_grid(xmin, xmax, cfg.points.unwrap_or(60));
    let rep = mwb_residual_scan(&s, &xs, 3)?;
    let id_tol = cfg.tol("identity", crate::spectral::IDENTITY_TOL);
    let dev_tol = cfg.tol("spectral", 0.01);
    let checks = vec![
        Check::new("identity", rep.max_identity_error <= id_tol),
        Check::new("deviation_shrinks", rep.trend_monotone),
        Check::new("final_deviation", rep.final_deviation.abs() <= dev_tol),
    ];
    let mut table = Table::new(&[
        "x",
        "lambda",
        "delta",
        "normalized",
        "relative_deviation",
        "identity_error",
        "count_residual",
    ]);
    for r in &rep.rows {
        table.push(vec![
            Some(r.x),
            Some(r.lambda),
            Some(r.delta),
            Some(r.normalized),
            Some(r.relative_deviation),
            Some(r.identity_error),
            Some(r.count_residual),
        ]);
    }
    let report = json!({"input": to_value(&input.string)?, "spectral": to_value(&rep)?});
    Ok(Outcome {
        checks,
        report,
        table,
    })
}

fn kneser_counterexample(cfg: &RunConfig, which: u8, imax: usize) -> CliResult<Outcome> {
    let rep = counterexample_report(which, imax, cfg.tol("golden", 1e-12), cfg.tol("ratio", 1e-9))
        .map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(Outcome {
        checks: rep.checks.clone(),
        table: rep.table(),
        report: to_value(&rep)?,
    })
}

fn voxel_checks(rep: &VoxelReport) -> Vec<Check> {
    let mut checks = vec![Check::new("volume_at_zero", rep.volume_at_zero_ok)];
    checks.extend(check_list(&rep.content));
    if let Some(b) = &rep.bound {
        checks.extend(check_list(b));
    }
    if let Some(a) = rep.dims_agree {
        checks.push(Check::new("dims_agree", a));
    }
    checks.push(Check::new("kneser_property", rep.kneser.pass));
    checks.push(Check::new("density_monotone", rep.density.pass));
    checks
}

fn load_voxel(cfg: &RunConfig) -> CliResult<(VoxelSpec, VoxelReport, Vec<String>)> {
    let (spec, base) = match load_input(cfg.spec_path()?)? {
        Input::Voxel(spec, base) => (spec, base),
        Input::String(_) => return usage("this command needs a voxel spec"),
    };
    let vc = voxel_config(cfg)?;
    let (grid, s, notes) = build_voxel(&spec, &base)?;
    let rep = analyze_set(&grid, s, &vc)?;
    Ok((spec, rep, notes))
}

fn voxel_analyze(cfg: &RunConfig) -> CliResult<Outcome> {
    let (spec, rep, notes) = load_voxel(cfg)?;
    let report = json!({"input": to_value(&spec)?, "notes": notes, "analysis": to_value(&rep)?});
    Ok(Outcome {
        checks: voxel_checks(&rep),
        table: ratio_table(&rep.samples, rep.d as f64, rep.s),
        report,
    })
}

fn gauge_command(cfg: &RunConfig) -> CliResult<Outcome> {
    let spec: GaugeSpec = parse_as(read_json(cfg.spec_path()?)?, "gauge")?;
    let h = spec.build().map_err(|e| Failure::Usage(e.to_string()))?;
    let grid = cfg.grid(1e-12, (0.5 * h.r_max()).min(0.1), 60)?;
    let t = gauge_table(&h, grid.radii())?;
    let mut checks = vec![
        Check::new("h_positive", t.h_positive),
        Check::new("h_nondecreasing", t.h_nondecreasing),
    ];
    if t.exponent.is_some_and(|s| s > 0.0) {
        checks.push(Check::new("g_nondecreasing", t.g_nondecreasing));
    }
    Ok(Outcome {
        checks,
        table: t.table(),
        report: json!({"input": to_value(&spec)?, "gauge_table": to_value(&t)?}),
    })
}

fn verify(cfg: &RunConfig, claim: Claim) -> CliResult<Outcome> {
    let input = load_input(cfg.spec_path()?)?;
    match input {
        Input::String(si) => verify_string(cfg, claim, si),
        Input::Voxel(..) => verify_voxel(cfg, claim),
    }
}

fn gauge_or(spec: &Option<GaugeSpec>, default: GaugeFunction) -> CliResult<GaugeFunction> {
    match spec {
        Some(g) => g.build().map_err(|e| Failure::Usage(e.to_string())),
        None => Ok(default),
    }
}

fn verify_string(cfg: &RunConfig, claim: Claim, si: StringInput) -> CliResult<Outcome> {
    let s = si.string.build()?;
    let grid = cfg.grid(STRING_GRID.0, STRING_GRID.1, STRING_GRID.2)?;
    let hc = harness_config(cfg);
    let bc = &hc.bracket;
    let table = ratio_table(&string_samples(&s, &grid)?, 1.0, string_dimension(&s)?);
    let input = to_value(&si)?;
    if let Claim::StringBounded | Claim::StringMeasurable = claim {
        let rep = string_content_harness(&s, &grid, &hc)?;
        let part = if claim == Claim::StringBounded {
            &rep.part_a
        } else {
            &rep.part_b
        };
        let checks = part.iter().map(|st| Check::new(st.name.clone(), st.holds)).collect();
        let report = json!({"input": input, "characterisation": to_value(&rep)?});
        return Ok(Outcome {
            checks,
            report,
            table,
        });
    }
    let d = string_dimension(&s)?;
    let vol = |r: f64| s.volume(r);
    let sur = |r: f64| Ok(s.surface(r) as f64);
    let pair = VolumeSurface {
        volume: &vol,
        surface: &sur,
        source: SurfaceSource::Exact,
    };
    let dim_tol = cfg.tol("dim", 0.05);
    let (checks, result) = match claim {
        Claim::ContentInequalities => {
            let r = check_content_inequalities(&pair, 1.0, d, true, &grid, bc)?;
            (check_list(&r), to_value(&r)?)
        }
        Claim::TwoSidedTransfer => {
            let r = check_two_sided_transfer(&pair, 1.0, 1.0 - d, &grid, bc)?;
            let dm = dimension_estimate(&vol, 1.0, &grid, bc, DimensionMethod::Regression)?;
            let ds = surface_dimension_estimate(&sur, 1.0, &grid, bc, DimensionMethod::Regression)?;
            let mut c = check_list(&r);
            c.push(Check::new("dims_agree", (dm.point - ds.point).abs() <= dim_tol));
            let v = json!({"transfer": to_value(&r)?, "dim_m": to_value(&dm)?, "dim_s": to_value(&ds)?});
            (c, v)
        }
        Claim::MeasurabilityTransfer => {
            let r = check_measurability_transfer(&pair, 1.0, d, &grid, bc)?;
            (check_list(&r), to_value(&r)?)
        }
        Claim::GaugeSandwich => {
            let h = gauge_or(&si.gauge, GaugeFunction::minkowski(1.0, d))?;
            let r = check_gauge_sandwich(&pair, &h, &grid, bc)?;
            (check_list(&r), to_value(&r)?)
        }
        Claim::GaugeTwoSided => {
            let h = gauge_or(&si.gauge, GaugeFunction::minkowski(1.0, d))?;
            let r = check_gauge_two_sided(&pair, &h, 1.0, &grid, bc)?;
            (check_list(&r), to_value(&r)?)
        }
        Claim::StringBounded | Claim::StringMeasurable => unreachable!("handled above"),
    };
    Ok(Outcome {
        checks,
        report: json!({"input": input, "dimension": d, "result": result}),
        table,
    })
}

fn verify_voxel(cfg: &RunConfig, claim: Claim) -> CliResult<Outcome> {
    if let Claim::StringBounded | Claim::StringMeasurable = claim {
        return usage("the string characterisation needs a string spec");
    }
    let (spec, rep, notes) = load_voxel(cfg)?;
    let d = rep.d as f64;
    let table = ratio_table(&rep.samples, d, rep.s);
    let samples = &rep.samples;
    let lookup = |r: f64, pick: fn(&VoxelSample) -> f64| {
        samples
            .binary_search_by(|p| r.total_cmp(&p.r))
            .map(|k| pick(&samples[k]))
            .map_err(|_| Error::Domain(format!("radius {r} is not a sample")))
    };
    let vol = |r: f64| lookup(r, |p| p.volume);
    let sur = |r: f64| lookup(r, |p| p.surface);
    let pair = VolumeSurface {
        volume: &vol,
        surface: &sur,
        source: rep.content.surface_source,
    };
    let grid = Grid::between(rep.grid.r_min, rep.grid.r_max, rep.grid.count)?;
    let bc = voxel_config(cfg)?.bracket;
    let (checks, result) = match claim {
        Claim::ContentInequalities => (check_list(&rep.content), to_value(&rep.content)?),
        Claim::TwoSidedTransfer => {
            let mut c = rep.bound.as_ref().map(check_list).unwrap_or_default();
            if let Some(a) = rep.dims_agree {
                c.push(Check::new("dims_agree", a));
            }
            let v = json!({"transfer": to_value(&rep.bound)?, "dim_m": to_value(&rep.dim_m)?, "dim_s": to_value(&rep.dim_s)?});
            (c, v)
        }
        Claim::MeasurabilityTransfer => {
            let r = check_measurability_transfer(&pair, d, rep.s, &grid, &bc)?;
            (check_list(&r), to_value(&r)?)
        }
        Claim::GaugeSandwich => {
            let h = gauge_or(&spec.gauge, GaugeFunction::minkowski(d, rep.s))?;
            let r = check_gauge_sandwich(&pair, &h, &grid, &bc)?;
            (check_list(&r), to_value(&r)?)
        }
        Claim::GaugeTwoSided => {
            let h = gauge_or(&spec.gauge, GaugeFunction::minkowski(d, rep.s))?;
            let r = check_gauge_two_sided(&pair, &h, d, &grid, &bc)?;
            (check_list(&r), to_value(&r)?)
        }
        Claim::StringBounded | Claim::StringMeasurable => unreachable!("rejected above"),
    };
    Ok(Outcome {
        checks,
        report: json!({"input": to_value(&spec)?, "notes": notes, "analysis": to_value(&rep)?, "result": result}),
        table,
    })
}

fn command_name(c: &Command) -> String {
    match c {
        Command::String(StringCommand::Analyze) => "string analyze",
        Command::String(StringCommand::Spectral { .. }) => "string spectral",
        Command::Kneser(_) => "kneser counterexample",
        Command::Voxel(_) => "voxel analyze",
        Command::Verify { .. } => "verify",
        Command::Gauge(_) => "gauge table",
    }
    .to_string()
}

fn dispatch(cfg: &RunConfig) -> CliResult<Outcome> {
    match &cfg.subcommand {
        Command::String(StringCommand::Analyze) => string_analyze(cfg),
        Command::String(StringCommand::Spectral { xmin, xmax }) => string_spectral(cfg, *xmin, *xmax),
        Command::Kneser(KneserCommand::Counterexample { which, imax }) => {
            kneser_counterexample(cfg, *which, *imax)
        }
        Command::Voxel(VoxelCommand::Analyze) => voxel_analyze(cfg),
        Command::Verify { claim } => verify(cfg, *claim),
        Command::Gauge(GaugeCommand::Table) => gauge_command(cfg),
    }
}

fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("MINKLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = match v.trim().parse() {
        Ok(n) if n >= 1 => n,
        _ => return usage(format!("MINKLAB_THREADS must be a positive integer, got {v:?}")),
    };
    // a pool that already exists (repeated in-process runs) is kept
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn execute(cli: &Cli) -> CliResult<bool> {
    configure_threads()?;
    let cfg = RunConfig::from_cli(cli)?;
    let outcome = dispatch(&cfg)?;
    let name = command_name(&cfg.subcommand);
    let env = Envelope::new(&name, &cfg, outcome.checks, &outcome.report)?;
    let text = match cfg.format {
        Format::Json => env.to_json()?,
        Format::Csv => outcome.table.to_csv()?,
    };
    match &cli.common.out {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?,
        None => print!("{text}"),
    }
    let failed: Vec<&str> = env
        .checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.name.as_str())
        .collect();
    if failed.is_empty() {
        eprintln!("{name}: {} checks passed", env.checks.len());
    } else {
        eprintln!("{name}: failed {}", failed.join(", "));
    }
    Ok(env.pass)
}

/// Run the command line `argv` (program name first) and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let _ = e.print();
            eprintln!("\n{SCHEMA_HELP}");
            return 2;
        }
    };
    match execute(&cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\n{SCHEMA_HELP}");
            2
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}
