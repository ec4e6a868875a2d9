//! Versioned JSON envelopes, flat CSV tables, and the report builders that
//! have no natural home in an analysis module.

use std::f64::consts::LN_2;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::gauge::{kappa, zeta, GaugeFunction};
use crate::kneser::{DensityReport, KneserFunction, KneserReport, SamplePlan};

pub const SCHEMA: &str = "minkowski-lab/1";

/// One named verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, pass: bool) -> Self {
        Self {
            name: name.into(),
            pass,
        }
    }
}

/// Top-level JSON document. Field order is fixed and no clock value is
/// recorded, so identical runs give identical bytes.
#[derive(Debug, Clone, Serialize)]
pub struct Envelope {
    pub schema: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: Value,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub report: Value,
}

impl Envelope {
    pub fn new(command: &str, config: &impl Serialize, checks: Vec<Check>, report: &impl Serialize) -> Result<Self> {
        Ok(Self {
            schema: SCHEMA,
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config: serde_json::to_value(config)?,
            pass: checks.iter().all(|c| c.pass),
            checks,
            report: serde_json::to_value(report)?,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Column-oriented numeric table for CSV output. Missing values are empty.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Option<f64>>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()))
                .map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }
}

/// Per-breakpoint comparison against closed forms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterexampleRow {
    pub i: usize,
    pub ln_r: f64,
    pub value: f64,
    pub golden: f64,
    pub value_rel_error: f64,
    pub value_match: bool,
    /// `f(r_i) / h(r_i)`
    pub value_ratio: f64,
    pub left_ratio: f64,
    pub left_expected: f64,
    pub left_match: bool,
    pub right_ratio: Option<f64>,
    pub ln_right_ratio: Option<f64>,
    /// From `f'(r_i+) = 2 a_{i-1} r_i`.
    pub right_expected: Option<f64>,
    pub right_match: Option<bool>,
    /// The alternative closed form with `i + 1` in place of `i - 1`.
    pub right_published: Option<f64>,
    pub right_matches_published: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterexampleReport {
    pub which: u8,
    pub construction: String,
    pub gauge: String,
    pub imax: usize,
    pub value_tol: f64,
    pub ratio_tol: f64,
    pub rows: Vec<CounterexampleRow>,
    pub kneser: KneserReport,
    pub density: DensityReport,
    pub checks: Vec<Check>,
    /// Finite-index thresholds, reported but not part of the verdict.
    pub targets: Vec<Check>,
    pub notes: Vec<String>,
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

/// `f(r_i)` of the second construction by direct summation of its series.
fn series_value_two(i: usize) -> f64 {
    let mut s = 0.0;
    let n = 4000;
    for j in i..i + n {
        let e = 2f64.powi(j.min(1000) as i32 + 1);
        let corr = if e < 1100.0 { 2f64.powf(-e) } else { 0.0 };
        s += (1.0 - corr) / (j as f64 * (j + 1) as f64);
    }
    s + 1.0 / (i + n) as f64
}

/// Golden-value scan of one of the two piecewise-quadratic constructions.
/// Checks use relative tolerances `value_tol` on `f(r_i)` and `ratio_tol`
/// on the derivative ratios.
pub fn counterexample_report(
    which: u8,
    imax: usize,
    value_tol: f64,
    ratio_tol: f64,
) -> Result<CounterexampleReport> {
    let (f, h, cap) = match which {
        1 => (
            KneserFunction::counterexample_one(),
            GaugeFunction::inverse_log(0.75 * LN_2),
            1000,
        ),
        2 => (
            KneserFunction::counterexample_two(),
            GaugeFunction::inverse_log_log(LN_2),
            60,
        ),
        _ => return Err(Error::Domain(format!("no construction {which}; use 1 or 2"))),
    };
    if !(2..=cap).contains(&imax) {
        return Err(Error::Domain(format!("imax must lie in [2, {cap}], got {imax}")));
    }
    let scan = f.derivative_ratio_scan(&h, 1..=imax)?;
    let mut rows = Vec::with_capacity(imax);
    let lnln2 = LN_2.ln();
    for row in scan {
        let i = row.i as f64;
        let (golden, left_expected, ln_right, ln_published) = if which == 1 {
            let c = 2.0 * LN_2 / 3.0;
            (
                0.75 / i,
                4.0 * c * i / (i + 1.0),
                (c * i / (i - 1.0)).ln(),
                (c * i / (i + 1.0)).ln(),
            )
        } else {
            // h' = ln2 / (r |ln r| (ln|ln r|)^2) with |ln r_i| = 2^i ln 2
            let ll = i * LN_2 + lnln2;
            let ln_hp = lnln2 + 2f64.powi(row.i as i32) * LN_2 - ll - 2.0 * ll.ln();
            let ln_left = (2f64.powi(row.i as i32) + 1.0) * LN_2 - (i * (i + 1.0)).ln();
            (
                series_value_two(row.i),
                (ln_left - ln_hp).exp(),
                (2.0 / ((i - 1.0) * i)).ln() - ln_hp,
                (2.0 / (i * (i + 1.0))).ln() - ln_hp,
            )
        };
        let value_rel_error = rel(row.value, golden);
        let left_match = if left_expected.is_finite() {
            rel(row.left_ratio, left_expected) <= ratio_tol
        } else {
            (row.ln_left_ratio - left_expected.ln()).abs() <= ratio_tol
        };
        let right = row.ln_right_ratio.map(|got| {
            (
                ln_right.exp(),
                (got - ln_right).abs() <= ratio_tol,
                ln_published.exp(),
                (got - ln_published).abs() <= ratio_tol,
            )
        });
        rows.push(CounterexampleRow {
            i: row.i,
            ln_r: row.ln_r,
            value: row.value,
            golden,
            value_rel_error,
            value_match: value_rel_error <= value_tol,
            value_ratio: row.value_ratio,
            left_ratio: row.left_ratio,
            left_expected,
            left_match,
            right_ratio: row.right_ratio,
            ln_right_ratio: row.ln_right_ratio,
            right_expected: right.map(|r| r.0),
            right_match: right.map(|r| r.1),
            right_published: right.map(|r| r.2),
            right_matches_published: right.map(|r| r.3),
        });
    }

    let k = imax.min(if which == 1 { 20 } else { 6 });
    let bps: Vec<f64> = (1..=k).map(|i| f.ln_r(i).exp()).collect();
    let lo = bps[k - 1].max(1e-19);
    let hi = f.r_1() / 2.0;
    let plan = SamplePlan::new(lo, hi).with_breakpoints(bps);
    let kneser = f.check_kneser_property(&plan);
    let q = (lo / hi).powf(1.0 / 199.0);
    let grid: Vec<f64> = (0..200).map(|n| hi * q.powi(n)).collect();
    let density = f.check_density_monotone(&grid, 1e-12);

    let all = |p: &dyn Fn(&CounterexampleRow) -> bool| rows.iter().all(p);
    let mut checks = vec![
        Check::new("golden_values", all(&|r| r.value_match)),
        Check::new("left_ratios", all(&|r| r.left_match)),
        Check::new("right_ratios", all(&|r| r.right_match.unwrap_or(true))),
        Check::new("kneser_property", kneser.pass),
        Check::new("density_monotone", density.pass),
    ];
    let mut targets = Vec::new();
    let mut notes = Vec::new();
    let published_agrees = all(&|r| r.right_matches_published.unwrap_or(true));
    if !published_agrees {
        notes.push(
            "right ratios follow (2 ln2/3) i/(i-1) from f'(r_i+) = 2 a_(i-1) r_i; the i/(i+1) form does not match"
                .into(),
        );
    }
    if which == 1 {
        let c = 2.0 * LN_2 / 3.0;
        notes.push(format!(
            "left ratios tend to {:.12}, right ratios to {:.12}",
            4.0 * c,
            c
        ));
    } else {
        let tail = &rows[2.min(rows.len() - 1)..];
        checks.push(Check::new(
            "value_ratio_tends_to_one",
            tail.windows(2)
                .all(|w| (w[1].value_ratio - 1.0).abs() < (w[0].value_ratio - 1.0).abs()),
        ));
        checks.push(Check::new(
            "left_ratio_increasing",
            rows[1..].windows(2).all(|w| w[1].left_ratio > w[0].left_ratio),
        ));
        checks.push(Check::new(
            "right_ratio_decreasing",
            rows[1..]
                .windows(2)
                .all(|w| w[1].ln_right_ratio < w[0].ln_right_ratio),
        ));
        let last = rows.last().expect("imax >= 2");
        targets.push(Check::new(
            format!("value_ratio_within_2pct_at_i{}", last.i),
            (last.value_ratio - 1.0).abs() <= 0.02,
        ));
        if let Some(r9) = rows.get(8) {
            targets.push(Check::new(
                "right_ratio_below_1e-3_at_i9",
                r9.ln_right_ratio.is_some_and(|v| v < 1e-3f64.ln()),
            ));
            targets.push(Check::new("left_ratio_above_1e3_at_i9", r9.left_ratio > 1e3));
        }
        notes.push(
            "f/h = 1 + ln ln 2/(i ln 2) + O(2^-2^i) approaches 1 slowly; left ratios grow and right ratios decay without bound"
                .into(),
        );
    }
    for t in targets.iter().filter(|t| !t.pass) {
        notes.push(format!("threshold {} not reached", t.name));
    }
    Ok(CounterexampleReport {
        which,
        construction: f.label().to_string(),
        gauge: h.describe(),
        imax,
        value_tol,
        ratio_tol,
        rows,
        kneser,
        density,
        checks,
        targets,
        notes,
    })
}

impl CounterexampleReport {
    pub fn table(&self) -> Table {
        let mut t = Table::new(&[
            "i",
            "ln_r",
            "value",
            "golden",
            "value_ratio",
            "left_ratio",
            "left_expected",
            "ln_right_ratio",
            "right_expected",
            "right_published",
        ]);
        for r in &self.rows {
            t.push(vec![
                Some(r.i as f64),
                Some(r.ln_r),
                Some(r.value),
                Some(r.golden),
                Some(r.value_ratio),
                Some(r.left_ratio),
                Some(r.left_expected),
                r.ln_right_ratio,
                r.right_expected,
                r.right_published,
            ]);
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaugeRow {
    pub r: f64,
    pub h: f64,
    pub h_prime: f64,
    pub g: f64,
    /// `r g'(r) / g(r)`
    pub regularity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaugeTable {
    pub gauge: String,
    pub exponent: Option<f64>,
    pub rows: Vec<GaugeRow>,
    pub h_positive: bool,
    pub h_nondecreasing: bool,
    pub g_nondecreasing: bool,
    pub regularity_limsup: f64,
    pub constants: Vec<(String, f64)>,
}

/// `h`, `h'`, `g` and the regularity ratio along `radii` (decreasing).
pub fn gauge_table(h: &GaugeFunction, radii: &[f64]) -> Result<GaugeTable> {
    let rows = radii
        .iter()
        .map(|&r| {
            Ok(GaugeRow {
                r,
                h: h.eval(r)?,
                h_prime: h.eval_deriv(r)?,
                g: h.g(r)?,
                regularity: h.regularity_ratio(r)?,
            })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| match e {
            Error::Domain(m) => Error::Domain(format!("{}: {m}", h.describe())),
            other => other,
        })?;
    let h_positive = rows.iter().all(|r| r.h > 0.0);
    let h_nondecreasing = rows.windows(2).all(|w| w[1].h <= w[0].h);
    let g_nondecreasing = h.g_nondecreasing_on(radii)?;
    let regularity_limsup = h.regularity_limsup(radii)?;
    let mut constants = Vec::new();
    for t in [0.0, 0.5, 1.0, 1.5, 2.0, 3.0] {
        constants.push((format!("kappa({t})"), kappa(t)));
    }
    for s in [0.25, 0.5, 0.75, 2.0] {
        constants.push((format!("zeta({s})"), zeta(s)?));
    }
    Ok(GaugeTable {
        gauge: h.describe(),
        exponent: h.exponent(),
        rows,
        h_positive,
        h_nondecreasing,
        g_nondecreasing,
        regularity_limsup,
        constants,
    })
}

impl GaugeTable {
    pub fn table(&self) -> Table {
        let mut t = Table::new(&["r", "h", "h_prime", "g", "regularity"]);
        for r in &self.rows {
            t.push(vec![Some(r.r), Some(r.h), Some(r.h_prime), Some(r.g), Some(r.regularity)]);
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_is_deterministic_and_versioned() {
        let cfg = serde_json::json!({"b": 1, "a": [1.5, null]});
        let e = Envelope::new("x", &cfg, vec![Check::new("c", true)], &vec![f64::NAN, 0.1]).unwrap();
        let j = e.to_json().unwrap();
        assert_eq!(j, e.to_json().unwrap());
        let v: Value = serde_json::from_str(&j).unwrap();
        assert_eq!(v["schema"], SCHEMA);
        assert_eq!(v["pass"], true);
        assert!(v["report"][0].is_null());
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        assert!(!keys.contains(&"timestamp"));
    }

    #[test]
    fn csv_projection() {
        let mut t = Table::new(&["r", "V"]);
        t.push(vec![Some(0.5), None]);
        t.push(vec![Some(1e-8), Some(2.0)]);
        assert_eq!(t.to_csv().unwrap(), "r,V\n0.5,\n0.00000001,2\n");
    }

    #[test]
    fn first_counterexample_matches_closed_forms() {
        let rep = counterexample_report(1, 40, 1e-12, 1e-9).unwrap();
        assert!(rep.checks.iter().all(|c| c.pass), "{:?}", rep.checks);
        assert_eq!(rep.rows.len(), 40);
        assert!(rep.rows[1..].iter().all(|r| r.right_matches_published == Some(false)));
        assert!((rep.rows[3].golden - 0.1875).abs() < 1e-16);
    }

    #[test]
    fn second_counterexample_trends() {
        let rep = counterexample_report(2, 12, 1e-12, 1e-9).unwrap();
        assert!(rep.checks.iter().all(|c| c.pass), "{:?}", rep.checks);
        assert!(!rep.targets.iter().all(|c| c.pass));
        assert!((rep.rows[0].value - 0.968_097_686_755_935_9).abs() < 1e-14);
    }

    #[test]
    fn counterexample_arguments() {
        assert!(counterexample_report(3, 10, 1e-12, 1e-9).is_err());
        assert!(counterexample_report(1, 1, 1e-12, 1e-9).is_err());
        assert!(counterexample_report(2, 61, 1e-12, 1e-9).is_err());
    }

    #[test]
    fn inverse_log_table() {
        let h = GaugeFunction::inverse_log(1.0);
        let radii: Vec<f64> = (1..30).map(|k| 0.5f64.powi(k)).collect();
        let t = gauge_table(&h, &radii).unwrap();
        assert!(t.h_positive && t.h_nondecreasing && t.g_nondecreasing);
        assert!((t.rows[0].h - 1.0 / LN_2).abs() < 1e-12);
        assert_eq!(t.table().rows.len(), 29);
        assert!(gauge_table(&h, &[2.0]).is_err());
    }
}
