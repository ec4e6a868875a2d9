//! Finite-window surrogates for `liminf`/`limsup` of `F(r)/h(r)` as `r -> 0`,
//! dimension estimates, and the generic volume/surface transfer checks.
//!
//! Every limit is approximated by the running minimum and maximum of the
//! ratio over the tail of a geometric grid `r_k = r_max ρ^k`, together with
//! an oscillation and trend diagnostic that decides whether the limit is
//! treated as existing.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gauge::GaugeFunction;

/// Scalar function of the radius.
pub type Eval<'a> = &'a (dyn Fn(f64) -> Result<f64> + Sync);

/// Decreasing geometric grid of radii.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    r: Vec<f64>,
    ratio: f64,
}

/// Serializable description of a [`Grid`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridInfo {
    pub r_max: f64,
    pub r_min: f64,
    pub ratio: f64,
    pub count: usize,
}

impl Grid {
    pub const DEFAULT_RATIO: f64 = 0.93;
    pub const DEFAULT_COUNT: usize = 400;

    /// `r_k = r_max ρ^k`, `k = 0..count`.
    pub fn geometric(r_max: f64, ratio: f64, count: usize) -> Result<Self> {
        if !(r_max > 0.0) || !(ratio > 0.0 && ratio < 1.0) || count < 2 {
            return Err(Error::Domain(format!(
                "grid needs r_max > 0, ratio in (0,1), count >= 2; got {r_max}, {ratio}, {count}"
            )));
        }
        let r = (0..count).map(|k| r_max * ratio.powi(k as i32)).collect();
        Ok(Self { r, ratio })
    }

    /// `count` geometrically spaced radii from `r_max` down to `r_min`.
    pub fn between(r_min: f64, r_max: f64, count: usize) -> Result<Self> {
        if !(r_min > 0.0 && r_min < r_max) || count < 2 {
            return Err(Error::Domain(format!(
                "grid needs 0 < r_min < r_max and count >= 2; got {r_min}, {r_max}, {count}"
            )));
        }
        let ratio = (r_min / r_max).powf(1.0 / (count - 1) as f64);
        let mut g = Self::geometric(r_max, ratio, count)?;
        *g.r.last_mut().expect("nonempty") = r_min;
        Ok(g)
    }

    pub fn radii(&self) -> &[f64] {
        &self.r
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn info(&self) -> GridInfo {
        GridInfo {
            r_max: self.r[0],
            r_min: *self.r.last().expect("nonempty"),
            ratio: self.ratio,
            count: self.r.len(),
        }
    }

    /// Number of grid points in the tail window of fraction `w`.
    pub fn tail_len(&self, w: f64) -> usize {
        ((w * self.r.len() as f64).ceil() as usize).clamp(1, self.r.len())
    }
}

/// Thresholds used to turn finite-window numbers into verdicts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BracketConfig {
    /// Tail fraction of the grid used for the bracket.
    pub window: f64,
    /// A limit "exists" when limsup/liminf is below this.
    pub oscillation: f64,
    /// ... and the fitted slope of `ln ratio` against `ln r` is below this.
    pub trend: f64,
    /// Brackets entirely below this are numerically zero.
    pub zero: f64,
    /// Brackets entirely above this are numerically infinite.
    pub infinity: f64,
    /// Relative slack for inequalities between brackets.
    pub slack: f64,
}

impl Default for BracketConfig {
    fn default() -> Self {
        Self {
            window: 0.35,
            oscillation: 1.02,
            trend: 0.02,
            zero: 1e-6,
            infinity: 1e6,
            slack: 0.05,
        }
    }
}

/// Something that divides `F(r)`.
pub trait Denominator: Sync {
    fn denom(&self, r: f64) -> Result<f64>;
    fn describe(&self) -> String;
}

impl Denominator for GaugeFunction {
    fn denom(&self, r: f64) -> Result<f64> {
        self.eval(r)
    }

    fn describe(&self) -> String {
        GaugeFunction::describe(self)
    }
}

/// `h'(r)`.
pub struct GaugeDerivative<'a>(pub &'a GaugeFunction);

impl Denominator for GaugeDerivative<'_> {
    fn denom(&self, r: f64) -> Result<f64> {
        self.0.eval_deriv(r)
    }

    fn describe(&self) -> String {
        format!("d/dr [{}]", self.0.describe())
    }
}

/// `h(r)/r`.
pub struct GaugeOverR<'a>(pub &'a GaugeFunction);

impl Denominator for GaugeOverR<'_> {
    fn denom(&self, r: f64) -> Result<f64> {
        Ok(self.0.eval(r)? / r)
    }

    fn describe(&self) -> String {
        format!("[{}]/r", self.0.describe())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    /// `limsup_est / liminf_est`.
    pub oscillation: f64,
    /// Least-squares slope of `ln(F/h)` against `ln r` over the window.
    pub trend_slope: f64,
    pub stable: bool,
    pub numerically_zero: bool,
    pub numerically_infinite: bool,
}

/// Bracket `[liminf_est, limsup_est]` for `F(r)/h(r)` as `r -> 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContentEstimate {
    pub liminf_est: f64,
    pub limsup_est: f64,
    pub grid: GridInfo,
    pub window: f64,
    pub tail_points: usize,
    pub diagnostics: Diagnostics,
    /// `(r, F(r)/h(r))` over the whole grid, in grid order.
    #[serde(skip)]
    pub samples: Vec<(f64, f64)>,
}

impl ContentEstimate {
    /// Midpoint of the bracket.
    pub fn value(&self) -> f64 {
        0.5 * (self.liminf_est + self.limsup_est)
    }

    /// `0 < liminf` and `limsup < ∞`, numerically.
    pub fn two_sided(&self) -> bool {
        !self.diagnostics.numerically_zero
            && !self.diagnostics.numerically_infinite
            && self.liminf_est > 0.0
            && self.limsup_est.is_finite()
    }

    /// Recompute the bracket over a different tail fraction.
    pub fn rewindow(&self, window: f64, cfg: &BracketConfig) -> ContentEstimate {
        summarize(self.samples.clone(), self.grid.clone(), window, cfg)
    }
}

fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

fn summarize(
    samples: Vec<(f64, f64)>,
    grid: GridInfo,
    window: f64,
    cfg: &BracketConfig,
) -> ContentEstimate {
    let n = samples.len();
    let m = ((window * n as f64).ceil() as usize).clamp(1, n);
    let tail = &samples[n - m..];
    let lo = tail.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let hi = tail.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let (lx, ly): (Vec<f64>, Vec<f64>) = tail
        .iter()
        .filter(|p| p.1 > 0.0)
        .map(|p| (p.0.ln(), p.1.ln()))
        .unzip();
    let slope = if lx.len() >= 2 {
        least_squares_slope(&lx, &ly)
    } else {
        0.0
    };
    let oscillation = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    let numerically_zero = hi < cfg.zero;
    let numerically_infinite = lo > cfg.infinity;
    let stable = oscillation < cfg.oscillation
        && slope.abs() <= cfg.trend
        && !numerically_zero
        && !numerically_infinite;
    ContentEstimate {
        liminf_est: lo,
        limsup_est: hi,
        grid,
        window,
        tail_points: m,
        diagnostics: Diagnostics {
            oscillation,
            trend_slope: slope,
            stable,
            numerically_zero,
            numerically_infinite,
        },
        samples,
    }
}

fn evaluate(f: Eval, grid: &Grid) -> Result<Vec<f64>> {
    grid.radii()
        .par_iter()
        .map(|&r| f(r).map_err(|e| Error::at(r, e)))
        .collect()
}

/// Bracket for `F(r)/h(r)` over the tail window of `grid`. Normalizing
/// constants belong in `h` (for instance through [`GaugeFunction::with_scale`]).
pub fn ratio_bracket(
    f: Eval,
    h: &dyn Denominator,
    grid: &Grid,
    cfg: &BracketConfig,
) -> Result<ContentEstimate> {
    let values = evaluate(f, grid)?;
    let samples = grid
        .radii()
        .iter()
        .zip(values)
        .map(|(&r, v)| Ok((r, v / h.denom(r).map_err(|e| Error::at(r, e))?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(samples, grid.info(), cfg.window, cfg))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DimensionMethod {
    Regression,
    Bisection,
}

/// Dimension bracket `0 <= lower <= upper <= d`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionEstimate {
    pub lower: f64,
    pub upper: f64,
    /// Estimate from the whole tail window.
    pub point: f64,
    pub method: DimensionMethod,
    /// Root-mean-square residual of the whole-window log-log fit.
    pub residual_rms: f64,
    pub windows: usize,
}

const MIN_FIT_POINTS: usize = 8;

/// Dimension from the power law `F(r) ~ r^{offset - dim}`: `offset = d` for
/// volumes and `d - 1` for surfaces. Sub-windows of a third of the tail
/// window slide across it; their extreme estimates give `lower`/`upper`.
fn dimension_from_samples(
    r: &[f64],
    v: &[f64],
    offset: f64,
    d: f64,
    method: DimensionMethod,
) -> Result<DimensionEstimate> {
    let pts: Vec<(f64, f64)> = r
        .iter()
        .zip(v)
        .filter(|p| *p.1 > 0.0 && p.1.is_finite())
        .map(|(&r, &v)| (r.ln(), v.ln()))
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::DegenerateFit(format!(
            "{} usable points, need {MIN_FIT_POINTS}",
            pts.len()
        )));
    }
    let estimate = |w: &[(f64, f64)]| -> f64 {
        let dim = match method {
            DimensionMethod::Regression => {
                let (x, y): (Vec<f64>, Vec<f64>) = w.iter().copied().unzip();
                offset - least_squares_slope(&x, &y)
            }
            DimensionMethod::Bisection => bisect_dimension(w, offset, d),
        };
        dim.clamp(0.0, d)
    };
    let point = estimate(&pts);
    let (x, y): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
    let slope = least_squares_slope(&x, &y);
    let mx = x.iter().sum::<f64>() / x.len() as f64;
    let my = y.iter().sum::<f64>() / y.len() as f64;
    let residual_rms = (x
        .iter()
        .zip(&y)
        .map(|(a, b)| {
            let e = b - (my + slope * (a - mx));
            e * e
        })
        .sum::<f64>()
        / x.len() as f64)
        .sqrt();
    let width = (pts.len() / 3).max(MIN_FIT_POINTS);
    let mut lower = f64::INFINITY;
    let mut upper = f64::NEG_INFINITY;
    let mut windows = 0;
    for w in pts.windows(width) {
        let e = estimate(w);
        lower = lower.min(e);
        upper = upper.max(e);
        windows += 1;
    }
    Ok(DimensionEstimate {
        lower,
        upper,
        point,
        method,
        residual_rms,
        windows,
    })
}

/// Find `t` at which `F(r)/r^{offset-t}` stops growing toward small `r`:
/// compare the geometric means of the ratio over the inner and outer halves
/// of the window.
fn bisect_dimension(w: &[(f64, f64)], offset: f64, d: f64) -> f64 {
    let half = w.len() / 2;
    let mean = |s: &[(f64, f64)], t: f64| -> f64 {
        s.iter().map(|(lr, lv)| lv - (offset - t) * lr).sum::<f64>() / s.len() as f64
    };
    // samples are ordered from large r to small r
    let (outer, inner) = w.split_at(half);
    let grows_inward = |t: f64| mean(inner, t) > mean(outer, t);
    let (mut lo, mut hi) = (-1.0, d + 1.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if grows_inward(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Minkowski-type dimension of a volume function in `R^d`.
pub fn dimension_estimate(
    f: Eval,
    d: f64,
    grid: &Grid,
    cfg: &BracketConfig,
    method: DimensionMethod,
) -> Result<DimensionEstimate> {
    let v = evaluate(f, grid)?;
    let m = grid.tail_len(cfg.window);
    let n = grid.len();
    dimension_from_samples(&grid.radii()[n - m..], &v[n - m..], d, d, method)
}

/// S-dimension of a surface function in `R^d` (`S ~ r^{d-1-dim}`).
pub fn surface_dimension_estimate(
    s: Eval,
    d: f64,
    grid: &Grid,
    cfg: &BracketConfig,
    method: DimensionMethod,
) -> Result<DimensionEstimate> {
    let v = evaluate(s, grid)?;
    let m = grid.tail_len(cfg.window);
    let n = grid.len();
    dimension_from_samples(&grid.radii()[n - m..], &v[n - m..], d - 1.0, d, method)
}

/// Dimension from precomputed samples (radii decreasing).
pub fn dimension_from_values(
    r: &[f64],
    v: &[f64],
    offset: f64,
    d: f64,
    method: DimensionMethod,
) -> Result<DimensionEstimate> {
    dimension_from_samples(r, v, offset, d, method)
}

/// Where the surface data came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceSource {
    /// Boundary measure computed directly.
    Exact,
    /// One-sided derivative of a closed-form volume function.
    OneSidedDerivative,
    /// Finite difference of sampled volumes.
    FiniteDifference,
    /// Level-set length of a digitized field.
    Contour,
}

/// A volume function together with its surface function.
pub struct VolumeSurface<'a> {
    pub volume: Eval<'a>,
    pub surface: Eval<'a>,
    pub source: SurfaceSource,
}

/// Forward difference of `v` over one step of a geometric grid with ratio
/// `ρ`: `(V(r/ρ) - V(r)) / (r/ρ - r)`.
pub fn forward_difference<'a>(
    v: Eval<'a>,
    ratio: f64,
) -> impl Fn(f64) -> Result<f64> + Sync + 'a {
    move |r| {
        let up = r / ratio;
        Ok((v(up)? - v(r)?) / (up - r))
    }
}

/// One inequality evaluated by a check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl Assertion {
    fn le(name: &str, lhs: f64, rhs: f64, slack: f64) -> Self {
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            holds: lhs <= rhs * (1.0 + slack),
        }
    }

    fn flag(name: &str, holds: bool) -> Self {
        Self {
            name: name.to_string(),
            lhs: holds as u8 as f64,
            rhs: 1.0,
            holds,
        }
    }
}

/// Outcome of a transfer check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub check: String,
    pub hypothesis_met: bool,
    /// Main inequality, `lhs <= rhs (1 + slack)`.
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    /// No assertion contradicted. Vacuously true when the hypothesis fails.
    pub pass: bool,
    pub grid: GridInfo,
    pub surface_source: SurfaceSource,
    pub assertions: Vec<Assertion>,
    pub brackets: BTreeMap<String, ContentEstimate>,
    pub diagnostics: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl CheckReport {
    fn new(check: &str, grid: &Grid, source: SurfaceSource, slack: f64) -> Self {
        Self {
            check: check.to_string(),
            hypothesis_met: true,
            lhs: f64::NAN,
            rhs: f64::NAN,
            slack,
            pass: true,
            grid: grid.info(),
            surface_source: source,
            assertions: Vec::new(),
            brackets: BTreeMap::new(),
            diagnostics: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    fn finish(mut self) -> Self {
        self.pass = !self.hypothesis_met || self.assertions.iter().all(|a| a.holds);
        self
    }

    pub fn assertion(&self, name: &str) -> Option<&Assertion> {
        self.assertions.iter().find(|a| a.name == name)
    }
}

/// With `V(r)/r^s` bounded above and below, `S(r)/r^{s-1}` is too, and
/// `limsup S/r^{s-1} <= d limsup V/r^s`. Here `s = d - D`.
pub fn check_two_sided_transfer(
    pair: &VolumeSurface,
    d: f64,
    s: f64,
    grid: &Grid,
    cfg: &BracketConfig,
) -> Result<CheckReport> {
    let mut rep = CheckReport::new("two_sided_transfer", grid, pair.source, cfg.slack);
    let hv = GaugeFunction::power(s);
    let hs = GaugeFunction::power(s - 1.0);
    let v = ratio_bracket(pair.volume, &hv, grid, cfg)?;
    let sb = ratio_bracket(pair.surface, &hs, grid, cfg)?;
    rep.hypothesis_met = v.two_sided();
    if !rep.hypothesis_met {
        rep.notes
            .push("V(r)/r^s is not two-sided on the grid; nothing is asserted".into());
    }
    rep.lhs = sb.limsup_est;
    rep.rhs = d * v.limsup_est;
    rep.assertions.push(Assertion::flag("surface_two_sided", sb.two_sided()));
    rep.assertions
        .push(Assertion::le("upper_bound", rep.lhs, rep.rhs, cfg.slack));
    if s > 0.0 {
        // S̲ <= s M̲ follows from V(r) = ∫ S
        rep.assertions.push(Assertion::le(
            "lower_sandwich",
            sb.liminf_est,
            s * v.liminf_est,
            cfg.slack,
        ));
    }
    rep.brackets.insert("volume".into(), v);
    rep.brackets.insert("surface".into(), sb);
    Ok(rep.finish())
}

/// Minkowski measurability and S-measurability of order `D` coincide;
/// when both contents stabilize they agree.
pub fn check_measurability_transfer(
    pair: &VolumeSurface,
    d: f64,
    dim: f64,
    grid: &Grid,
    cfg: &BracketConfig,
) -> Result<CheckReport> {
    let mut rep = CheckReport::new("measurability_transfer", grid, pair.source, cfg.slack);
    let m = ratio_bracket(pair.volume, &GaugeFunction::minkowski(d, dim), grid, cfg)?;
    let s = ratio_bracket(pair.surface, &GaugeFunction::surface(d, dim), grid, cfg)?;
    let (ms, ss) = (m.diagnostics.stable, s.diagnostics.stable);
    rep.lhs = (m.value() - s.value()).abs() / m.value();
    rep.rhs = cfg.slack;
    rep.notes.push(
        match (ms, ss) {
            (true, true) => "both contents exist",
            (false, false) => "both oscillate",
            (true, false) => "Minkowski content stabilizes but the S-content does not",
            (false, true) => "S-content stabilizes but the Minkowski content does not",
        }
        .into(),
    );
    rep.assertions
        .push(Assertion::flag("same_verdict", ms == ss));
    if ms && ss {
        rep.assertions.push(Assertion {
            name: "contents_agree".into(),
            lhs: rep.lhs,
            rhs: rep.rhs,
            holds: rep.lhs <= rep.rhs,
        });
    }
    rep.diagnostics.insert("minkowski_value".into(), m.value());
    rep.diagnostics.insert("s_value".into(), s.value());
    rep.diagnostics
        .insert("minkowski_oscillation".into(), m.diagnostics.oscillation);
    rep.diagnostics
        .insert("s_oscillation".into(), s.diagnostics.oscillation);
    rep.brackets.insert("minkowski".into(), m);
    rep.brackets.insert("s_content".into(), s);
    Ok(rep.finish())
}

/// `S̲(h') <= M̲(h) <= M̄(h) <= S̄(h')` for a differentiable gauge with
/// `V(0) = 0`.
pub fn check_gauge_sandwich(
    pair: &VolumeSurface,
    h: &GaugeFunction,
    grid: &Grid,
    cfg: &BracketConfig,
) -> Result<CheckReport> {
    let mut rep = CheckReport::new("gauge_sandwich", grid, pair.source, cfg.slack);
    let m = ratio_bracket(pair.volume, h, grid, cfg)?;
    let s = ratio_bracket(pair.surface, &GaugeDerivative(h), grid, cfg)?;
    rep.assertions
        .push(Assertion::le("lower", s.liminf_est, m.liminf_est, cfg.slack));
    rep.assertions
        .push(Assertion::le("middle", m.liminf_est, m.limsup_est, 0.0));
    rep.assertions
        .push(Assertion::le("upper", m.limsup_est, s.limsup_est, cfg.slack));
    rep.lhs = m.limsup_est;
    rep.rhs = s.limsup_est;
    rep.brackets.insert("volume_over_h".into(), m);
    rep.brackets.insert("surface_over_h_prime".into(), s);
    Ok(rep.finish())
}

/// For `h = r^s g` with `s > 0` and `g` nondecreasing: two-sided `V/h`
/// implies two-sided `S/(h/r)` with `limsup S/(h/r) <= d limsup V/h`; under
/// bounded `r g'/g` also two-sided `S/h'`.
pub fn check_gauge_two_sided(
    pair: &VolumeSurface,
    h: &GaugeFunction,
    d: f64,
    grid: &Grid,
    cfg: &BracketConfig,
) -> Result<CheckReport> {
    let mut rep = CheckReport::new("gauge_two_sided", grid, pair.source, cfg.slack);
    let v = ratio_bracket(pair.volume, h, grid, cfg)?;
    let s_over = ratio_bracket(pair.surface, &GaugeOverR(h), grid, cfg)?;
    let s_prime = ratio_bracket(pair.surface, &GaugeDerivative(h), grid, cfg)?;

    let exponent = h.exponent();
    let g_monotone = h.g_nondecreasing_on(grid.radii()).unwrap_or(false);
    let positive_s = matches!(exponent, Some(s) if s > 0.0);
    if !positive_s {
        rep.notes.push(format!(
            "gauge exponent s = {:?} is not positive; the transfer does not apply",
            exponent
        ));
    }
    if !g_monotone {
        rep.notes.push("g is not nondecreasing on the grid".into());
    }
    if !v.two_sided() {
        rep.notes.push("V/h is not two-sided on the grid".into());
    }
    rep.hypothesis_met = positive_s && g_monotone && v.two_sided();

    let m = grid.tail_len(cfg.window);
    let tail = &grid.radii()[grid.len() - m..];
    let reg = h.regularity_limsup(tail).ok();
    if let Some(reg) = reg {
        rep.diagnostics.insert("regularity_limsup".into(), reg);
    }
    rep.assertions
        .push(Assertion::flag("surface_over_h_by_r_two_sided", s_over.two_sided()));
    if reg.is_some_and(|x| x < cfg.infinity) {
        rep.assertions
            .push(Assertion::flag("surface_over_h_prime_two_sided", s_prime.two_sided()));
    }
    rep.lhs = s_over.limsup_est;
    rep.rhs = d * v.limsup_est;
    rep.assertions
        .push(Assertion::le("upper_bound", rep.lhs, rep.rhs, cfg.slack));
    rep.diagnostics
        .insert("surface_over_h_prime_liminf".into(), s_prime.liminf_est);
    rep.diagnostics
        .insert("surface_over_h_prime_limsup".into(), s_prime.limsup_est);
    rep.brackets.insert("volume_over_h".into(), v);
    rep.brackets.insert("surface_over_h_by_r".into(), s_over);
    rep.brackets.insert("surface_over_h_prime".into(), s_prime);
    Ok(rep.finish())
}

/// `(d-s)/d S̄^s <= M̄^s <= S̄^s` and `S̲^s <= M̲^s` for the normalized
/// contents of order `s`. The middle inequality needs `V(0) = 0`; at
/// `s = d` the S-content is zero by convention and nothing is asserted.
pub fn check_content_inequalities(
    pair: &VolumeSurface,
    d: f64,
    s: f64,
    volume_at_zero_vanishes: bool,
    grid: &Grid,
    cfg: &BracketConfig,
) -> Result<CheckReport> {
    let mut rep = CheckReport::new("content_inequalities", grid, pair.source, cfg.slack);
    let m = ratio_bracket(pair.volume, &GaugeFunction::minkowski(d, s), grid, cfg)?;
    rep.diagnostics.insert("minkowski_liminf".into(), m.liminf_est);
    rep.diagnostics.insert("minkowski_limsup".into(), m.limsup_est);
    if s >= d {
        rep.notes
            .push("s = d: the S-content vanishes by convention; S-checks skipped".into());
        rep.brackets.insert("minkowski".into(), m);
        return Ok(rep.finish());
    }
    let sc = ratio_bracket(pair.surface, &GaugeFunction::surface(d, s), grid, cfg)?;
    rep.diagnostics.insert("s_liminf".into(), sc.liminf_est);
    rep.diagnostics.insert("s_limsup".into(), sc.limsup_est);
    rep.lhs = (d - s) / d * sc.limsup_est;
    rep.rhs = m.limsup_est;
    rep.assertions
        .push(Assertion::le("upper_left", rep.lhs, rep.rhs, cfg.slack));
    if volume_at_zero_vanishes {
        rep.assertions.push(Assertion::le(
            "upper_right",
            m.limsup_est,
            sc.limsup_est,
            cfg.slack,
        ));
    } else {
        rep.notes
            .push("V(0) > 0: the comparison of upper contents is not asserted".into());
    }
    rep.assertions
        .push(Assertion::le("lower_left", sc.liminf_est, m.liminf_est, cfg.slack));
    rep.brackets.insert("minkowski".into(), m);
    rep.brackets.insert("s_content".into(), sc);
    Ok(rep.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> BracketConfig {
        BracketConfig::default()
    }

    #[test]
    fn grid_shapes() {
        let g = Grid::geometric(1.0, 0.5, 4).unwrap();
        assert_eq!(g.radii(), &[1.0, 0.5, 0.25, 0.125]);
        let g = Grid::between(1e-8, 1e-2, 61).unwrap();
        assert_eq!(g.radii()[0], 1e-2);
        assert_eq!(*g.radii().last().unwrap(), 1e-8);
        assert!((g.ratio() - 0.1f64.powf(0.1)).abs() < 1e-12);
        assert!(Grid::geometric(1.0, 1.5, 10).is_err());
        assert_eq!(g.tail_len(0.35), 22);
    }

    #[test]
    fn trivial_interval_bracket() {
        let g = Grid::geometric(1.0, 0.93, 400).unwrap();
        let f = |r: f64| Ok(2.0 * r + 1.0);
        let e = ratio_bracket(&f, &GaugeFunction::power(0.0), &g, &cfg()).unwrap();
        assert!((e.liminf_est - 1.0).abs() < 1e-10);
        assert!((e.limsup_est - 1.0).abs() < 1e-7);
        assert!(e.diagnostics.stable);
        let narrow = e.rewindow(0.1, &cfg());
        assert!(narrow.limsup_est - 1.0 <= e.limsup_est - 1.0);
    }

    #[test]
    fn zero_and_infinity_flags() {
        let g = Grid::geometric(1e-2, 0.9, 400).unwrap();
        let f = |r: f64| Ok(r);
        let e = ratio_bracket(&f, &GaugeFunction::power(0.5), &g, &cfg()).unwrap();
        assert!(e.diagnostics.numerically_zero);
        let e = ratio_bracket(&f, &GaugeFunction::power(1.5), &g, &cfg()).unwrap();
        assert!(e.diagnostics.numerically_infinite);
    }

    #[test]
    fn evaluation_errors_carry_radius() {
        let g = Grid::geometric(0.5, 0.5, 10).unwrap();
        let f = |r: f64| {
            if r < 0.01 {
                Err(Error::Domain("too small".into()))
            } else {
                Ok(r)
            }
        };
        match ratio_bracket(&f, &GaugeFunction::power(1.0), &g, &cfg()) {
            Err(Error::Evaluation { r, .. }) => assert!(r < 0.01),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn single_point_dimension() {
        let g = Grid::geometric(0.1, 0.93, 400).unwrap();
        let f = |r: f64| Ok(2.0 * r);
        for m in [DimensionMethod::Regression, DimensionMethod::Bisection] {
            let e = dimension_estimate(&f, 1.0, &g, &cfg(), m).unwrap();
            assert!(e.point.abs() < 1e-9 && e.upper.abs() < 1e-9, "{e:?}");
        }
    }

    #[test]
    fn power_law_dimension_both_methods() {
        let g = Grid::geometric(0.1, 0.93, 400).unwrap();
        let f = |r: f64| Ok(3.0 * r.powf(2.0 - 1.3));
        for m in [DimensionMethod::Regression, DimensionMethod::Bisection] {
            let e = dimension_estimate(&f, 2.0, &g, &cfg(), m).unwrap();
            assert!((e.point - 1.3).abs() < 1e-9, "{m:?} {e:?}");
            assert!((e.lower - 1.3).abs() < 1e-9 && (e.upper - 1.3).abs() < 1e-9);
        }
        let s = |r: f64| Ok(r.powf(1.0 - 1.3));
        let e = surface_dimension_estimate(&s, 2.0, &g, &cfg(), DimensionMethod::Regression)
            .unwrap();
        assert!((e.point - 1.3).abs() < 1e-9);
    }

    #[test]
    fn degenerate_fit() {
        let g = Grid::geometric(0.1, 0.5, 10).unwrap();
        let f = |r: f64| Ok(r);
        assert!(matches!(
            dimension_estimate(&f, 1.0, &g, &cfg(), DimensionMethod::Regression),
            Err(Error::DegenerateFit(_))
        ));
    }

    #[test]
    fn exact_power_transfer() {
        let g = Grid::geometric(0.5, 0.93, 400).unwrap();
        let s = 0.4;
        let v = move |r: f64| Ok(r.powf(s));
        let sf = move |r: f64| Ok(s * r.powf(s - 1.0));
        let pair = VolumeSurface {
            volume: &v,
            surface: &sf,
            source: SurfaceSource::Exact,
        };
        let rep = check_two_sided_transfer(&pair, 1.0, s, &g, &cfg()).unwrap();
        assert!(rep.pass && rep.hypothesis_met, "{rep:?}");
        assert!((rep.lhs - s).abs() < 1e-12 && (rep.rhs - 1.0).abs() < 1e-12);
        let rep = check_measurability_transfer(&pair, 1.0, 1.0 - s, &g, &cfg()).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn sandwich_with_equal_functions() {
        let g = Grid::geometric(0.5, 0.93, 400).unwrap();
        let h = GaugeFunction::power_log(0.5, 1.0);
        let hv = h.clone();
        let hd = h.clone();
        let v = move |r: f64| hv.eval(r);
        let s = move |r: f64| hd.eval_deriv(r);
        let pair = VolumeSurface {
            volume: &v,
            surface: &s,
            source: SurfaceSource::Exact,
        };
        let rep = check_gauge_sandwich(&pair, &h, &g, &cfg()).unwrap();
        assert!(rep.pass);
        for b in rep.brackets.values() {
            assert!((b.liminf_est - 1.0).abs() < 1e-12 && (b.limsup_est - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn power_log_surrogate_two_sided() {
        // V = r^{1/2}(1 + 1/|log r|), S = V'
        let g = Grid::geometric(0.3, 0.93, 400).unwrap();
        let v = |r: f64| Ok(r.sqrt() * (1.0 + 1.0 / (-r.ln())));
        let s = |r: f64| {
            let l = -r.ln();
            Ok(0.5 / r.sqrt() * (1.0 + 1.0 / l) + r.sqrt() / (r * l * l))
        };
        let pair = VolumeSurface {
            volume: &v,
            surface: &s,
            source: SurfaceSource::Exact,
        };
        let h = GaugeFunction::power(0.5);
        let rep = check_gauge_two_sided(&pair, &h, 1.0, &g, &cfg()).unwrap();
        assert!(rep.hypothesis_met && rep.pass, "{rep:?}");
        let h = GaugeFunction::power_log(0.5, 1.0);
        let rep = check_gauge_two_sided(&pair, &h, 1.0, &g, &cfg()).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn content_inequalities_for_a_disc_collar() {
        // r-neighbourhood of a unit segment in the plane: V = 2r + πr², S = 2 + 2πr
        let g = Grid::geometric(0.1, 0.93, 200).unwrap();
        let v = |r: f64| Ok(2.0 * r + std::f64::consts::PI * r * r);
        let s = |r: f64| Ok(2.0 + 2.0 * std::f64::consts::PI * r);
        let pair = VolumeSurface {
            volume: &v,
            surface: &s,
            source: SurfaceSource::Exact,
        };
        let rep = check_content_inequalities(&pair, 2.0, 1.0, true, &g, &cfg()).unwrap();
        assert!(rep.pass, "{rep:?}");
        // M^1 and S^1 both tend to the length 1
        assert!((rep.diagnostics["minkowski_liminf"] - 1.0).abs() < 1e-6);
        assert!((rep.diagnostics["s_liminf"] - 1.0).abs() < 1e-6);
        let bad = |r: f64| Ok(10.0 + 0.0 * r);
        let pair = VolumeSurface {
            volume: &v,
            surface: &bad,
            source: SurfaceSource::Exact,
        };
        let rep = check_content_inequalities(&pair, 2.0, 1.0, true, &g, &cfg()).unwrap();
        assert!(!rep.pass);
        assert!(!rep.assertion("upper_left").unwrap().holds);
        let rep = check_content_inequalities(&pair, 2.0, 2.0, true, &g, &cfg()).unwrap();
        assert!(rep.pass && rep.assertions.is_empty());
    }

    #[test]
    fn forward_difference_of_power() {
        let v = |r: f64| Ok(r * r);
        let s = forward_difference(&v, 0.999_999);
        assert!((s(0.1).unwrap() - 0.2).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn scale_equivariance(c in 0.01f64..100.0, s in 0.1f64..1.5) {
            let g = Grid::geometric(0.5, 0.9, 60).unwrap();
            let f = |r: f64| Ok(r.powf(0.7) * (2.0 + (5.0 * r.ln()).sin()));
            let cf = |r: f64| Ok(c * f(r)?);
            let h = GaugeFunction::power(s);
            let a = ratio_bracket(&f, &h, &g, &cfg()).unwrap();
            let b = ratio_bracket(&cf, &h, &g, &cfg()).unwrap();
            prop_assert!((b.liminf_est - c * a.liminf_est).abs() <= 1e-12 * b.liminf_est.abs());
            prop_assert!((b.limsup_est - c * a.limsup_est).abs() <= 1e-12 * b.limsup_est.abs());
            let hc = GaugeFunction::power(s).with_scale(c);
            let e = ratio_bracket(&f, &hc, &g, &cfg()).unwrap();
            prop_assert!((e.limsup_est - a.limsup_est / c).abs() <= 1e-12 * a.limsup_est / c);
        }

        #[test]
        fn window_nesting(w1 in 0.05f64..1.0, w2 in 0.05f64..1.0) {
            let g = Grid::geometric(0.5, 0.9, 80).unwrap();
            let f = |r: f64| Ok(r.powf(0.3) * (2.0 + (3.0 * r.ln()).cos()));
            let e = ratio_bracket(&f, &GaugeFunction::power(0.3), &g, &cfg()).unwrap();
            let (small, big) = if w1 < w2 { (w1, w2) } else { (w2, w1) };
            let a = e.rewindow(small, &cfg());
            let b = e.rewindow(big, &cfg());
            prop_assert!(b.liminf_est <= a.liminf_est && a.limsup_est <= b.limsup_est);
        }

        #[test]
        fn order_invariance(seed in 0u64..1000) {
            // evaluation order must not matter; compare against a sequential pass
            let g = Grid::geometric(0.5, 0.9, 64).unwrap();
            let f = move |r: f64| Ok(r.powf(0.5) * (1.5 + ((seed as f64) + 7.0 * r.ln()).sin()));
            let h = GaugeFunction::power(0.5);
            let e = ratio_bracket(&f, &h, &g, &cfg()).unwrap();
            let m = g.tail_len(0.35);
            let tail: Vec<f64> = g.radii()[g.len() - m..]
                .iter()
                .rev()
                .map(|&r| f(r).unwrap() / h.eval(r).unwrap())
                .collect();
            let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(lo, e.liminf_est);
            prop_assert_eq!(hi, e.limsup_est);
        }
    }
}
