//! Piecewise-power Kneser functions built from a breakpoint sequence
//! `r_1 > r_2 > ... -> 0` and nondecreasing coefficients `a_i`:
//!
//! ```text
//! f'(x) = d a_i x^{d-1}          on (r_{i+1}, r_i)
//! f(x)  = T_{i+1} + a_i (x^d - r_{i+1}^d)
//! T_i   = sum_{j >= i} a_j (r_j^d - r_{j+1}^d)
//! ```
//!
//! Breakpoints and coefficients are generated lazily in log-domain, so
//! constructions whose breakpoints fall far below `f64` underflow (for
//! example `r_i = 2^{-2^i}`) can be evaluated along the breakpoints.
//!
//! The scheme is stated for any integer order `d >= 1`; with `d = 2` it is the
//! classical planar construction.

use std::f64::consts::LN_2;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gauge::{GaugeFamily, GaugeFunction};

/// Index-to-value generator.
pub type SeqFn = Arc<dyn Fn(usize) -> f64 + Send + Sync>;

/// Number of leading terms inspected when validating a construction.
const VALIDATE_TERMS: usize = 64;
/// Hard cap on the breakpoint index reachable by search.
const MAX_INDEX: usize = 1 << 40;

/// How the tail sums `T_i` are obtained.
#[derive(Clone)]
pub enum TailSpec {
    /// Exact closed form `i -> T_i`.
    Closed(SeqFn),
    /// Sum the series, truncating once the geometric tail estimate falls
    /// below `1e-15 T_1`. Fails with a divergent-tail error if that does not
    /// happen within `max_terms`.
    Summed { max_terms: usize },
}

#[derive(Clone)]
enum Tail {
    Closed(SeqFn),
    Summed { max_terms: usize },
}

/// A Kneser function of order `d` given by the piecewise-power scheme.
#[derive(Clone)]
pub struct KneserFunction {
    d: u32,
    ln_r: SeqFn,
    ln_a: SeqFn,
    tail: Tail,
    label: String,
}

impl fmt::Debug for KneserFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KneserFunction")
            .field("label", &self.label)
            .field("d", &self.d)
            .finish()
    }
}

fn add_ln(x: f64, y: f64) -> f64 {
    // ln(e^x - e^y) for x > y
    x + (-(y - x).exp()).ln_1p()
}

impl KneserFunction {
    /// Build from log-domain generators `i -> ln r_i`, `i -> ln a_i` (indices
    /// start at 1).
    pub fn from_sequences(
        d: u32,
        ln_r: SeqFn,
        ln_a: SeqFn,
        tail: TailSpec,
        label: impl Into<String>,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::Domain("Kneser order must be at least 1".into()));
        }
        for i in 1..VALIDATE_TERMS {
            let (r0, r1) = (ln_r(i), ln_r(i + 1));
            if !(r1 < r0) || !r0.is_finite() && r0 != f64::NEG_INFINITY {
                return Err(Error::Monotonicity(format!(
                    "breakpoints not strictly decreasing at i = {i}: ln r = {r0}, {r1}"
                )));
            }
            let (a0, a1) = (ln_a(i), ln_a(i + 1));
            if a1 < a0 || a0.is_nan() {
                return Err(Error::Monotonicity(format!(
                    "coefficients decrease at i = {i}: ln a = {a0}, {a1}"
                )));
            }
        }
        if ln_r(1) > 0.0 && d as f64 * ln_r(1) > 700.0 {
            return Err(Error::Domain("first breakpoint too large".into()));
        }
        let tail = match tail {
            TailSpec::Closed(f) => Tail::Closed(f),
            TailSpec::Summed { max_terms } => {
                sum_tail(d, &ln_r, &ln_a, 1, max_terms)?;
                Tail::Summed { max_terms }
            }
        };
        Ok(Self {
            d,
            ln_r,
            ln_a,
            tail,
            label: label.into(),
        })
    }

    /// `r_i = 2^{-i}`, `a_i = 4^i / (i(i+1))`, order 2. Here `T_i = 3/(4i)`.
    pub fn counterexample_one() -> Self {
        Self::from_sequences(
            2,
            Arc::new(|i| -(i as f64) * LN_2),
            Arc::new(|i| 2.0 * i as f64 * LN_2 - ((i * (i + 1)) as f64).ln()),
            TailSpec::Closed(Arc::new(|i| 0.75 / i as f64)),
            "r_i = 2^-i, a_i = 4^i/(i(i+1))",
        )
        .expect("valid construction")
    }

    /// `r_i = 2^{-2^i}`, `a_i = 2^{2^{i+1}} / (i(i+1))`, order 2. Here
    /// `T_i = 1/i - sum_{j >= i} 2^{-2^{j+1}} / (j(j+1))`.
    pub fn counterexample_two() -> Self {
        Self::from_sequences(
            2,
            Arc::new(|i| -(2f64.powi(i as i32)) * LN_2),
            Arc::new(|i| 2f64.powi(i as i32 + 1) * LN_2 - ((i * (i + 1)) as f64).ln()),
            TailSpec::Closed(Arc::new(|i| {
                let mut corr = 0.0;
                for j in i..i + 12 {
                    let ln_t = -(2f64.powi(j as i32 + 1)) * LN_2 - ((j * (j + 1)) as f64).ln();
                    if ln_t < -745.0 {
                        break;
                    }
                    corr += ln_t.exp();
                }
                1.0 / i as f64 - corr
            })),
            "r_i = 2^-2^i, a_i = 2^2^(i+1)/(i(i+1))",
        )
        .expect("valid construction")
    }

    /// `r_i = 2^{-i}` with `a_i = 1`, which collapses to `f(x) = x^d`.
    pub fn constant_coefficients(d: u32) -> Self {
        let df = d as f64;
        Self::from_sequences(
            d,
            Arc::new(|i| -(i as f64) * LN_2),
            Arc::new(|_| 0.0),
            TailSpec::Closed(Arc::new(move |i| (-(i as f64) * LN_2 * df).exp())),
            "x^d",
        )
        .expect("valid construction")
    }

    pub fn order(&self) -> u32 {
        self.d
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn ln_r(&self, i: usize) -> f64 {
        (self.ln_r)(i)
    }

    pub fn ln_a(&self, i: usize) -> f64 {
        (self.ln_a)(i)
    }

    pub fn r_1(&self) -> f64 {
        self.ln_r(1).exp()
    }

    /// `T_i = f(r_i)`.
    pub fn tail(&self, i: usize) -> f64 {
        match &self.tail {
            Tail::Closed(f) => f(i),
            Tail::Summed { max_terms } => {
                sum_tail(self.d, &self.ln_r, &self.ln_a, i, *max_terms).unwrap_or(f64::NAN)
            }
        }
    }

    /// Index `i` with `ln x` in `(ln r_{i+1}, ln r_i]`.
    fn locate_left(&self, ln_x: f64) -> Result<usize> {
        let top = self.ln_r(1);
        if ln_x.is_nan() || ln_x > top {
            return Err(Error::OutOfRange {
                x: ln_x.exp(),
                max: top.exp(),
            });
        }
        // find hi with ln r_{hi+1} < ln x
        let mut lo = 1usize;
        let mut hi = 1usize;
        while self.ln_r(hi + 1) >= ln_x {
            lo = hi;
            hi *= 2;
            if hi > MAX_INDEX {
                return Err(Error::Domain(format!("ln x = {ln_x} below every breakpoint")));
            }
        }
        // invariant: ln r_lo >= ln x > ln r_{hi+1}
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if self.ln_r(mid + 1) >= ln_x {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        Ok(lo)
    }

    /// Snap `ln x` onto a breakpoint when they agree to rounding.
    fn breakpoint_at(&self, ln_x: f64, i: usize) -> bool {
        let lr = self.ln_r(i);
        (ln_x - lr).abs() <= 1e-14 * lr.abs().max(1.0)
    }

    /// `f(x)` for `x = exp(ln_x)`; usable far below `f64` underflow.
    pub fn eval_ln(&self, ln_x: f64) -> Result<f64> {
        let i = self.locate_left(ln_x)?;
        if self.breakpoint_at(ln_x, i) {
            return Ok(self.tail(i));
        }
        let d = self.d as f64;
        let ln_a = self.ln_a(i);
        let ln_lo = self.ln_r(i + 1);
        let grow = if ln_lo == f64::NEG_INFINITY {
            (ln_a + d * ln_x).exp()
        } else {
            (add_ln(ln_a + d * ln_x, ln_a + d * ln_lo)).exp()
        };
        Ok(self.tail(i + 1) + grow)
    }

    /// `f(x)` for `0 < x <= r_1`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::Domain(format!("Kneser function evaluated at {x}")));
        }
        self.eval_ln(x.ln()).map_err(|e| match e {
            Error::OutOfRange { .. } => Error::OutOfRange {
                x,
                max: self.r_1(),
            },
            other => other,
        })
    }

    /// `f(b) - f(a)` for `0 < a <= b <= r_1`, summed piece by piece so that
    /// small increments on top of a large `f(a)` keep their relative accuracy.
    pub fn increment(&self, a: f64, b: f64) -> Result<f64> {
        if !(a > 0.0) || b < a {
            return Err(Error::Domain(format!("increment over [{a}, {b}]")));
        }
        let (la, lb) = (a.ln(), b.ln());
        let ia = self.locate_left(la)?;
        let ib = self.locate_left(lb)?;
        let d = self.d as f64;
        let piece = |k: usize, lo: f64, hi: f64| -> f64 {
            if hi <= lo {
                0.0
            } else {
                add_ln(self.ln_a(k) + d * hi, self.ln_a(k) + d * lo).exp()
            }
        };
        if ia == ib {
            return Ok(piece(ia, la, lb));
        }
        // ib < ia: b sits in an outer piece
        let mut acc = piece(ib, self.ln_r(ib + 1), lb) + piece(ia, la, self.ln_r(ia));
        if ia - ib > 64 {
            acc += self.tail(ib + 1) - self.tail(ia);
        } else {
            for k in ib + 1..ia {
                acc += piece(k, self.ln_r(k + 1), self.ln_r(k));
            }
        }
        Ok(acc)
    }

    /// Kneser inequality on the triples of `plan`, using [`Self::increment`].
    pub fn check_kneser_property(&self, plan: &SamplePlan) -> KneserReport {
        match self.eval(plan.r_max) {
            Ok(scale) => check_kneser_increments(|a, b| self.increment(a, b), self.d, scale, plan),
            Err(e) => KneserReport::failed(e.to_string()),
        }
    }

    /// `ln f'_-(x)`; at a breakpoint `r_i` the inner coefficient `a_i` is used.
    pub fn ln_deriv_left(&self, ln_x: f64) -> Result<f64> {
        let i = self.locate_left(ln_x)?;
        let d = self.d as f64;
        Ok(d.ln() + self.ln_a(i) + (d - 1.0) * ln_x)
    }

    /// `ln f'_+(x)`; at a breakpoint `r_i` the outer coefficient `a_{i-1}` is
    /// used. Undefined at `r_1`.
    pub fn ln_deriv_right(&self, ln_x: f64) -> Result<f64> {
        let mut i = self.locate_left(ln_x)?;
        if self.breakpoint_at(ln_x, i) {
            if i == 1 {
                return Err(Error::OutOfRange {
                    x: ln_x.exp(),
                    max: self.r_1(),
                });
            }
            i -= 1;
        }
        let d = self.d as f64;
        Ok(d.ln() + self.ln_a(i) + (d - 1.0) * ln_x)
    }

    pub fn deriv_left(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::Domain(format!("derivative at {x}")));
        }
        Ok(self.ln_deriv_left(x.ln())?.exp())
    }

    pub fn deriv_right(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::Domain(format!("derivative at {x}")));
        }
        Ok(self.ln_deriv_right(x.ln())?.exp())
    }

    /// Ratios of one-sided derivatives and of the value to `h`, `h'` at each
    /// breakpoint `r_i`, computed as exponentials of log differences.
    pub fn derivative_ratio_scan(
        &self,
        h: &GaugeFunction,
        i_range: std::ops::RangeInclusive<usize>,
    ) -> Result<Vec<RatioRow>> {
        i_range
            .map(|i| {
                let lr = self.ln_r(i);
                let ln_hp = ln_gauge_deriv(h, lr)?;
                let ln_left = self.ln_deriv_left(lr)? - ln_hp;
                let ln_right = if i > 1 {
                    Some(self.ln_deriv_right(lr)? - ln_hp)
                } else {
                    None
                };
                let value = self.tail(i);
                let value_ratio = (value.ln() - ln_gauge(h, lr)?).exp();
                Ok(RatioRow {
                    i,
                    ln_r: lr,
                    value,
                    value_ratio,
                    left_ratio: ln_left.exp(),
                    right_ratio: ln_right.map(f64::exp),
                    ln_left_ratio: ln_left,
                    ln_right_ratio: ln_right,
                })
            })
            .collect()
    }

    /// Check that `f'_± (r) / r^{d-1}` is nonincreasing in `r` over `grid`
    /// and that `f'_+ <= f'_-` pointwise. Works with exact densities `d a_i`.
    pub fn check_density_monotone(&self, grid: &[f64], slack: f64) -> DensityReport {
        let d = self.d as f64;
        let mut pts: Vec<f64> = grid.to_vec();
        pts.sort_by(|a, b| a.total_cmp(b));
        let mut rows = Vec::with_capacity(pts.len());
        for &r in &pts {
            let lx = r.ln();
            let left = self.ln_deriv_left(lx).map(|v| v - (d - 1.0) * lx);
            let right = self.ln_deriv_right(lx).map(|v| v - (d - 1.0) * lx);
            match (left, right) {
                (Ok(l), Ok(rt)) => rows.push((r, l.exp(), rt.exp())),
                (Ok(l), Err(_)) => rows.push((r, l.exp(), l.exp())),
                (Err(e), _) => {
                    return DensityReport::failed(format!("evaluation at r = {r}: {e}"));
                }
            }
        }
        DensityReport::from_one_sided(&rows, slack)
    }
}

/// `T_i` by direct summation, stopping once the geometric remainder
/// estimate is below `1e-15` of the partial sum; the estimate is added back.
fn sum_tail(d: u32, ln_r: &SeqFn, ln_a: &SeqFn, i: usize, max_terms: usize) -> Result<f64> {
    let df = d as f64;
    let mut total = 0.0;
    let mut prev_q = f64::INFINITY;
    for j in i..i + max_terms {
        let ln_hi = ln_a(j) + df * ln_r(j);
        let ln_lo = ln_a(j) + df * ln_r(j + 1);
        let t = add_ln(ln_hi, ln_lo).exp();
        total += t;
        let next_mass = (ln_a(j + 1) + df * ln_r(j + 1)).exp();
        let q = next_mass / ln_hi.exp();
        if j > i && q < 1.0 && q <= prev_q * (1.0 + 1e-12) {
            let rest = t * q / (1.0 - q);
            if rest < 1e-15 * total || next_mass == 0.0 {
                return Ok(total + rest);
            }
        }
        prev_q = q;
    }
    Err(Error::DivergentTail(format!(
        "tail of sum a_i r_i^{d} from i = {i} not certified below 1e-15 within {max_terms} terms"
    )))
}

/// One breakpoint row of [`KneserFunction::derivative_ratio_scan`].
#[derive(Debug, Clone, Serialize)]
pub struct RatioRow {
    pub i: usize,
    pub ln_r: f64,
    /// `f(r_i)`
    pub value: f64,
    /// `f(r_i) / h(r_i)`
    pub value_ratio: f64,
    /// `f'(r_i-) / h'(r_i)`
    pub left_ratio: f64,
    /// `f'(r_i+) / h'(r_i)`; not defined at `i = 1`. Underflows to zero
    /// quickly for double-exponential breakpoints, see `ln_right_ratio`.
    pub right_ratio: Option<f64>,
    pub ln_left_ratio: f64,
    pub ln_right_ratio: Option<f64>,
}

fn gauge_log_args(h: &GaugeFunction, ln_r: f64) -> Result<f64> {
    if ln_r.is_nan() || ln_r >= h.r_max().ln() {
        return Err(Error::Domain(format!(
            "ln r = {ln_r} outside the domain of {}",
            h.describe()
        )));
    }
    Ok(-ln_r)
}

/// `ln h(r)` from `ln r`.
fn ln_gauge(h: &GaugeFunction, ln_r: f64) -> Result<f64> {
    let l = gauge_log_args(h, ln_r)?;
    let c = h.scale().ln();
    Ok(match h.family() {
        GaugeFamily::Power { s } => c + s * ln_r,
        GaugeFamily::PowerLog { s, p } => c + s * ln_r - p * l.ln(),
        GaugeFamily::PowerLogLog { s } => c + s * ln_r - l.ln().ln(),
        GaugeFamily::InverseLog => c - l.ln(),
        GaugeFamily::InverseLogLog => c - l.ln().ln(),
        GaugeFamily::Custom(_) => h.eval(ln_r.exp())?.ln(),
    })
}

/// `ln h'(r)` from `ln r`.
fn ln_gauge_deriv(h: &GaugeFunction, ln_r: f64) -> Result<f64> {
    let l = gauge_log_args(h, ln_r)?;
    let c = h.scale().ln();
    let v = match h.family() {
        GaugeFamily::Power { s } => (h.scale() * s).ln() + (s - 1.0) * ln_r,
        GaugeFamily::PowerLog { s, p } => {
            c + (s - 1.0) * ln_r - p * l.ln() + (s + p / l).ln()
        }
        GaugeFamily::PowerLogLog { s } => {
            let ll = l.ln();
            c + (s - 1.0) * ln_r - ll.ln() + (s + 1.0 / (l * ll)).ln()
        }
        GaugeFamily::InverseLog => c - ln_r - 2.0 * l.ln(),
        GaugeFamily::InverseLogLog => c - ln_r - l.ln() - 2.0 * l.ln().ln(),
        GaugeFamily::Custom(_) => h.eval_deriv(ln_r.exp())?.ln(),
    };
    if v.is_nan() {
        return Err(Error::Domain(format!(
            "h' is not positive at ln r = {ln_r} for {}",
            h.describe()
        )));
    }
    Ok(v)
}

/// A finite piecewise-power function with no monotonicity requirement on the
/// coefficients: `f' = d a_k x^{d-1}` on `(r_{k+1}, r_k]`, with the last piece
/// extending down to `0` and `f(0) = 0`. Useful for building functions that
/// are *not* Kneser.
#[derive(Debug, Clone)]
pub struct PiecewisePower {
    d: u32,
    breaks: Vec<f64>,
    coeffs: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewisePower {
    /// `breaks` strictly decreasing, one coefficient per piece.
    pub fn new(d: u32, breaks: Vec<f64>, coeffs: Vec<f64>) -> Result<Self> {
        if breaks.len() != coeffs.len() || breaks.is_empty() {
            return Err(Error::Domain("need one coefficient per breakpoint".into()));
        }
        if breaks.windows(2).any(|w| w[1] >= w[0]) || *breaks.last().unwrap() <= 0.0 {
            return Err(Error::Monotonicity("breakpoints must decrease".into()));
        }
        let d_f = d as f64;
        let n = breaks.len();
        let mut values = vec![0.0; n];
        let mut acc = 0.0;
        for k in (0..n).rev() {
            let lo = if k + 1 < n { breaks[k + 1] } else { 0.0 };
            acc += coeffs[k] * (breaks[k].powf(d_f) - lo.powf(d_f));
            values[k] = acc;
        }
        Ok(Self {
            d,
            breaks,
            coeffs,
            values,
        })
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) || x > self.breaks[0] {
            return Err(Error::OutOfRange {
                x,
                max: self.breaks[0],
            });
        }
        let d = self.d as f64;
        let n = self.breaks.len();
        let k = self.breaks.iter().rposition(|&b| b >= x).unwrap_or(0);
        let (lo, base) = if k + 1 < n {
            (self.breaks[k + 1], self.values[k + 1])
        } else {
            (0.0, 0.0)
        };
        Ok(base + self.coeffs[k] * (x.powf(d) - lo.powf(d)))
    }
}

/// Sampling plan for [`check_kneser_property`].
#[derive(Debug, Clone, Serialize)]
pub struct SamplePlan {
    pub r_min: f64,
    pub r_max: f64,
    /// Points of the geometric grid from which `a <= b` are drawn.
    pub grid_points: usize,
    pub lambdas: Vec<f64>,
    /// Known corners of `f`; triples straddling them are added.
    pub breakpoints: Vec<f64>,
    pub random_triples: usize,
    pub seed: u64,
    /// Additive slack as a fraction of `f(r_max)`.
    pub slack: f64,
}

impl SamplePlan {
    pub fn new(r_min: f64, r_max: f64) -> Self {
        Self {
            r_min,
            r_max,
            grid_points: 48,
            lambdas: vec![1.0, 1.01, 1.1, 2.0, 10.0],
            breakpoints: Vec::new(),
            random_triples: 2000,
            seed: 0x6b6e_6573,
            slack: 1e-12,
        }
    }

    pub fn with_breakpoints(mut self, b: Vec<f64>) -> Self {
        self.breakpoints = b;
        self
    }

    pub fn with_slack(mut self, slack: f64) -> Self {
        self.slack = slack;
        self
    }

    fn triples(&self) -> Vec<(f64, f64, f64)> {
        let n = self.grid_points.max(2);
        let ratio = (self.r_min / self.r_max).powf(1.0 / (n - 1) as f64);
        let grid: Vec<f64> = (0..n).map(|k| self.r_max * ratio.powi(k as i32)).collect();
        let mut out = Vec::new();
        for (ia, &a) in grid.iter().enumerate() {
            for &b in &grid[..=ia] {
                for &lam in &self.lambdas {
                    if lam * b <= self.r_max {
                        out.push((b.min(a), b.max(a), lam));
                    }
                }
            }
        }
        // straddle each corner, mapped onto neighbouring corners and arbitrary points
        for &c in &self.breakpoints {
            for eps in [1e-3, 1e-2, 0.1] {
                let (a, b) = (c * (1.0 - eps), c * (1.0 + eps));
                if a < self.r_min || b > self.r_max {
                    continue;
                }
                for &lam in &self.lambdas {
                    if lam * b <= self.r_max {
                        out.push((a, b, lam));
                    }
                }
                for &other in &self.breakpoints {
                    let lam = other / c;
                    if lam >= 1.0 && lam * b <= self.r_max {
                        out.push((a, b, lam));
                        out.push((a, c, lam));
                        out.push((c, b, lam));
                    }
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let span = (self.r_max / self.r_min).ln();
        for _ in 0..self.random_triples {
            let u: f64 = rng.gen();
            let v: f64 = rng.gen();
            let a = self.r_min * (span * u).exp();
            let b = self.r_min * (span * v).exp();
            let (a, b) = (a.min(b), a.max(b));
            let room = (self.r_max / b).ln().max(0.0);
            let lam = (room * rng.gen::<f64>()).exp();
            out.push((a, b, lam));
        }
        out
    }
}

/// Outcome of a Kneser-inequality scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KneserReport {
    pub pass: bool,
    pub triples: usize,
    /// Largest `[f(λb) - f(λa) - λ^d (f(b) - f(a))] / f(r_max)`.
    pub worst_violation: f64,
    /// `(a, b, λ)` attaining the worst violation.
    pub witness: Option<(f64, f64, f64)>,
    pub error: Option<String>,
}

impl KneserReport {
    fn failed(msg: String) -> Self {
        Self {
            pass: false,
            triples: 0,
            worst_violation: f64::NAN,
            witness: None,
            error: Some(msg),
        }
    }
}

/// Test `f(λb) - f(λa) <= λ^d (f(b) - f(a))` on the triples of `plan`.
///
/// Differences are taken in floating point, so when `f(b) - f(a)` is far
/// below the rounding of `f` itself prefer [`check_kneser_increments`].
pub fn check_kneser_property<F>(f: F, d: u32, plan: &SamplePlan) -> KneserReport
where
    F: Fn(f64) -> Result<f64>,
{
    match f(plan.r_max) {
        Ok(v) if v > 0.0 => check_kneser_increments(|a, b| Ok(f(b)? - f(a)?), d, v, plan),
        Ok(v) => KneserReport::failed(format!("f(r_max) = {v} is not positive")),
        Err(e) => KneserReport::failed(e.to_string()),
    }
}

/// Kneser inequality through an increment oracle `inc(a, b) = f(b) - f(a)`;
/// violations are measured relative to `scale` (normally `f(r_max)`).
pub fn check_kneser_increments<F>(inc: F, d: u32, scale: f64, plan: &SamplePlan) -> KneserReport
where
    F: Fn(f64, f64) -> Result<f64>,
{
    let triples = plan.triples();
    let mut worst = f64::NEG_INFINITY;
    let mut witness = None;
    for &(a, b, lam) in &triples {
        let v = (|| -> Result<f64> {
            let lhs = inc(lam * a, (lam * b).min(plan.r_max))?;
            let rhs = lam.powi(d as i32) * inc(a, b)?;
            Ok((lhs - rhs) / scale)
        })();
        match v {
            Ok(v) => {
                if v > worst {
                    worst = v;
                    witness = Some((a, b, lam));
                }
            }
            Err(e) => {
                return KneserReport {
                    pass: false,
                    triples: triples.len(),
                    worst_violation: worst,
                    witness: Some((a, b, lam)),
                    error: Some(e.to_string()),
                }
            }
        }
    }
    KneserReport {
        pass: worst <= plan.slack,
        triples: triples.len(),
        worst_violation: worst,
        witness,
        error: None,
    }
}

/// Result of a density-monotonicity scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityReport {
    pub pass: bool,
    pub points: usize,
    /// Largest relative increase of the density as `r` grows.
    pub worst_increase: f64,
    pub witness: Option<f64>,
    pub error: Option<String>,
}

impl DensityReport {
    fn failed(msg: String) -> Self {
        Self {
            pass: false,
            points: 0,
            worst_increase: f64::NAN,
            witness: None,
            error: Some(msg),
        }
    }

    /// Rows `(r, left density, right density)` sorted by increasing `r`.
    fn from_one_sided(rows: &[(f64, f64, f64)], slack: f64) -> Self {
        let mut worst = 0.0f64;
        let mut witness = None;
        let mut bump = |excess: f64, r: f64| {
            if excess > worst {
                worst = excess;
                witness = Some(r);
            }
        };
        for (i, &(r, left, right)) in rows.iter().enumerate() {
            bump(right / left - 1.0, r);
            if i > 0 {
                let (_, _, prev_right) = rows[i - 1];
                bump(left / prev_right - 1.0, r);
            }
        }
        Self {
            pass: worst <= slack,
            points: rows.len(),
            worst_increase: worst,
            witness,
            error: None,
        }
    }
}

/// Samples `(r_k, f(r_k))` of a function believed to be Kneser of order `d`
/// (typically a volume function), on a geometric grid.
#[derive(Debug, Clone, Serialize)]
pub struct SampledKneser {
    pub d: u32,
    /// Strictly decreasing radii.
    pub r: Vec<f64>,
    pub f: Vec<f64>,
    pub source: String,
}

impl SampledKneser {
    pub fn new(d: u32, r: Vec<f64>, f: Vec<f64>, source: impl Into<String>) -> Result<Self> {
        if r.len() != f.len() || r.len() < 3 {
            return Err(Error::Domain("need at least three matching samples".into()));
        }
        if r.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Monotonicity("sample radii must decrease".into()));
        }
        Ok(Self {
            d,
            r,
            f,
            source: source.into(),
        })
    }

    fn geometric_ratio(&self) -> Option<f64> {
        let q = self.r[1] / self.r[0];
        self.r
            .windows(2)
            .all(|w| ((w[1] / w[0]) / q - 1.0).abs() < 1e-9)
            .then_some(q)
    }

    /// Kneser inequality over index triples: with `λ = ρ^{-m}` the scaled
    /// points `λ r_k = r_{k-m}` are again samples.
    pub fn check_kneser_property(&self, slack: f64) -> KneserReport {
        let Some(q) = self.geometric_ratio() else {
            return KneserReport {
                pass: false,
                triples: 0,
                worst_violation: f64::NAN,
                witness: None,
                error: Some("sample grid is not geometric".into()),
            };
        };
        let n = self.r.len();
        let scale = self.f[0];
        let di = self.d as i32;
        let mut worst = f64::NEG_INFINITY;
        let mut witness = None;
        let mut count = 0usize;
        for m in 0..n {
            let lam_d = q.powi(-(m as i32) * di);
            // a = r_ka (smaller, larger index), b = r_kb
            for kb in m..n {
                for ka in kb..n {
                    let lhs = self.f[kb - m] - self.f[ka - m];
                    let rhs = lam_d * (self.f[kb] - self.f[ka]);
                    let v = (lhs - rhs) / scale;
                    count += 1;
                    if v > worst {
                        worst = v;
                        witness = Some((self.r[ka], self.r[kb], q.powi(-(m as i32))));
                    }
                }
            }
        }
        KneserReport {
            pass: worst <= slack,
            triples: count,
            worst_violation: worst,
            witness,
            error: None,
        }
    }

    /// Concavity of `f` as a function of `u = r^d`, which is the sampled form
    /// of `f'(r)/r^{d-1}` being nonincreasing: consecutive secant slopes in
    /// `u` must not increase with `r`.
    pub fn check_density_monotone(&self, slack: f64) -> DensityReport {
        let d = self.d as f64;
        let mut slopes = Vec::with_capacity(self.r.len() - 1);
        // iterate from small r to large r
        for k in (1..self.r.len()).rev() {
            let (r_lo, r_hi) = (self.r[k], self.r[k - 1]);
            let du = r_hi.powf(d) - r_lo.powf(d);
            slopes.push((0.5 * (r_lo + r_hi), (self.f[k - 1] - self.f[k]) / du));
        }
        let mut worst = 0.0f64;
        let mut witness = None;
        for w in slopes.windows(2) {
            let excess = (w[1].1 - w[0].1) / w[0].1.abs().max(f64::MIN_POSITIVE);
            if excess > worst {
                worst = excess;
                witness = Some(w[1].0);
            }
        }
        DensityReport {
            pass: worst <= slack,
            points: slopes.len(),
            worst_increase: worst,
            witness,
            error: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ce1_gauge() -> GaugeFunction {
        GaugeFunction::inverse_log(3.0 * LN_2 / 4.0)
    }

    #[test]
    fn counterexample_one_golden_values() {
        let f = KneserFunction::counterexample_one();
        for i in 1..=40 {
            let x = 2f64.powi(-i);
            let want = 3.0 / (4.0 * i as f64);
            let got = f.eval(x).unwrap();
            assert!(((got - want) / want).abs() <= 1e-12, "i={i}");
        }
        assert!((f.eval(2f64.powi(-5)).unwrap() - 0.15).abs() < 1e-15);
    }

    #[test]
    fn counterexample_one_left_derivative() {
        let f = KneserFunction::counterexample_one();
        for i in 1..=30 {
            let x = 2f64.powi(-i);
            let want = 2.0 * 2f64.powi(i) / (i * (i + 1)) as f64;
            let got = f.deriv_left(x).unwrap();
            assert!(((got - want) / want).abs() < 1e-12);
        }
    }

    #[test]
    fn counterexample_one_ratio_scan() {
        let f = KneserFunction::counterexample_one();
        let rows = f.derivative_ratio_scan(&ce1_gauge(), 1..=40).unwrap();
        for row in &rows {
            let i = row.i as f64;
            let want = 8.0 * LN_2 / 3.0 * i / (i + 1.0);
            assert!((row.left_ratio - want).abs() < 1e-9, "i={i}");
            if let Some(right) = row.right_ratio {
                // outer coefficient a_{i-1} at r_i
                let want = 2.0 * LN_2 / 3.0 * i / (i - 1.0);
                assert!((right - want).abs() < 1e-9, "i={i}");
            }
            assert!((row.value_ratio - 1.0).abs() < 1e-12);
        }
    }

    /// Direct summation of the defining series, with the telescoped tail of
    /// `1/(j(j+1))` beyond the cutoff added back.
    fn ce2_value_oracle(i: usize) -> f64 {
        let mut s = 0.0;
        for j in i..i + 200 {
            let corr = if j < 10 { 2f64.powf(-(2f64.powi(j as i32 + 1))) } else { 0.0 };
            s += (1.0 - corr) / (j * (j + 1)) as f64;
        }
        s + 1.0 / (i + 200) as f64
    }

    #[test]
    fn counterexample_two_values() {
        let f = KneserFunction::counterexample_two();
        for i in 1..=12 {
            let got = f.eval_ln(f.ln_r(i)).unwrap();
            assert!((got - ce2_value_oracle(i)).abs() < 1e-14, "i={i}");
        }
        assert!((f.tail(1) - 0.968_097_686_755_935_9).abs() < 1e-14);
    }

    #[test]
    fn counterexample_two_ratio_scan() {
        let f = KneserFunction::counterexample_two();
        let h = GaugeFunction::inverse_log_log(LN_2);
        let rows = f.derivative_ratio_scan(&h, 1..=12).unwrap();
        for w in rows.windows(2).skip(1) {
            assert!(w[1].left_ratio > w[0].left_ratio);
            assert!(w[1].ln_right_ratio.unwrap() < w[0].ln_right_ratio.unwrap());
        }
        // f'(r_i+) = 2 a_{i-1} r_i = 2 / ((i-1) i)
        for row in &rows[1..] {
            let i = row.i as f64;
            let want = 2.0 / ((i - 1.0) * i);
            let got = (f.ln_deriv_right(row.ln_r).unwrap()).exp();
            assert!(((got - want) / want).abs() < 1e-12);
        }
        assert!(rows[11].right_ratio.unwrap() < 1e-3);
        assert!(rows[11].left_ratio > 1e3);
        // value ratio approaches 1 like 1 + ln ln 2 / (i ln 2)
        for row in &rows[2..] {
            let i = row.i as f64;
            let want = 1.0 + LN_2.ln() / (i * LN_2);
            assert!((row.value_ratio - want).abs() < 0.02 / i);
        }
    }

    #[test]
    fn constant_coefficients_is_power() {
        let f = KneserFunction::constant_coefficients(2);
        assert!((f.eval(0.3).unwrap() - 0.09).abs() < 1e-15);
        for x in [0.49, 0.3, 0.01, 1e-6] {
            assert!((f.deriv_left(x).unwrap() - 2.0 * x).abs() < 1e-14 * x);
            assert!((f.deriv_right(x).unwrap() - 2.0 * x).abs() < 1e-14 * x);
        }
        let f3 = KneserFunction::constant_coefficients(3);
        assert!((f3.eval(0.2).unwrap() - 0.008).abs() < 1e-16);
    }

    #[test]
    fn out_of_range_above_first_breakpoint() {
        let f = KneserFunction::counterexample_one();
        assert!(matches!(f.eval(0.6), Err(Error::OutOfRange { .. })));
        assert!(f.eval(0.5).is_ok());
        assert!(f.deriv_left(0.5).is_ok());
        assert!(f.deriv_right(0.5).is_err());
    }

    #[test]
    fn construction_rejects_decreasing_coefficients() {
        let err = KneserFunction::from_sequences(
            2,
            Arc::new(|i| -(i as f64)),
            Arc::new(|i| -(i as f64)),
            TailSpec::Summed { max_terms: 1000 },
            "bad",
        );
        assert!(matches!(err, Err(Error::Monotonicity(_))));
    }

    #[test]
    fn summed_tail_matches_closed_form() {
        // a_i = 2^i, r_i = 2^-i: T_i = sum 2^j (4^-j - 4^-j-1) = (3/4) 2^{1-i}
        let f = KneserFunction::from_sequences(
            2,
            Arc::new(|i| -(i as f64) * LN_2),
            Arc::new(|i| i as f64 * LN_2),
            TailSpec::Summed { max_terms: 10_000 },
            "geometric",
        )
        .unwrap();
        for i in 1..30 {
            let want = 0.75 * 2f64.powi(1 - i as i32);
            assert!(((f.tail(i) - want) / want).abs() < 1e-13);
        }
    }

    #[test]
    fn divergent_tail_is_reported() {
        // a_i r_i^2 = 1/i: not summable
        let err = KneserFunction::from_sequences(
            2,
            Arc::new(|i| -(i as f64) * LN_2),
            Arc::new(|i| 2.0 * i as f64 * LN_2 - (i as f64).ln()),
            TailSpec::Summed { max_terms: 5000 },
            "harmonic",
        );
        assert!(matches!(err, Err(Error::DivergentTail(_))));
    }

    #[test]
    fn kneser_property_power() {
        let plan = SamplePlan::new(1e-4, 1.0);
        let rep = check_kneser_property(|x| Ok(x * x), 2, &plan);
        assert!(rep.pass, "{rep:?}");
        assert!(rep.worst_violation.abs() < 1e-15);
    }

    #[test]
    fn kneser_property_counterexamples() {
        let f1 = KneserFunction::counterexample_one();
        let bps: Vec<f64> = (1..=20).map(|i| 2f64.powi(-i)).collect();
        let plan = SamplePlan::new(2f64.powi(-20), 0.5).with_breakpoints(bps);
        let rep = f1.check_kneser_property(&plan);
        assert!(rep.pass, "{rep:?}");
        assert!(check_kneser_property(|x| f1.eval(x), 2, &plan).pass);

        let f2 = KneserFunction::counterexample_two();
        let bps: Vec<f64> = (1..=6).map(|i| f2.ln_r(i).exp()).collect();
        let plan = SamplePlan::new(1e-19, 0.25).with_breakpoints(bps);
        let rep = f2.check_kneser_property(&plan);
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn broken_construction_fails_with_witness() {
        let f = PiecewisePower::new(2, vec![1.0, 0.5], vec![2.0, 1.0]).unwrap();
        let plan = SamplePlan::new(1e-3, 1.0).with_breakpoints(vec![0.5]);
        let rep = check_kneser_property(|x| f.eval(x), 2, &plan);
        assert!(!rep.pass);
        let (a, b, lam) = rep.witness.unwrap();
        let lhs = f.eval(lam * b).unwrap() - f.eval(lam * a).unwrap();
        let rhs = lam * lam * (f.eval(b).unwrap() - f.eval(a).unwrap());
        assert!(lhs > rhs);
    }

    #[test]
    fn increments_match_values() {
        let f = KneserFunction::counterexample_one();
        for (a, b) in [(0.01, 0.02), (0.3, 0.3), (1e-6, 0.5), (0.126, 0.124f64.max(0.126))] {
            let want = f.eval(b).unwrap() - f.eval(a).unwrap();
            assert!((f.increment(a, b).unwrap() - want).abs() < 1e-15);
        }
        let f2 = KneserFunction::counterexample_two();
        let inc = f2.increment(1e-19, 1.5e-18).unwrap();
        let a5 = f2.ln_a(5).exp();
        assert!(((inc - a5 * (1.5e-18f64.powi(2) - 1e-38)) / inc).abs() < 1e-12);
    }

    #[test]
    fn piecewise_matches_scheme() {
        let f = PiecewisePower::new(2, vec![0.5, 0.25], vec![1.0, 1.0]).unwrap();
        for x in [0.1, 0.25, 0.3, 0.5] {
            assert!((f.eval(x).unwrap() - x * x).abs() < 1e-15);
        }
    }

    #[test]
    fn density_monotone() {
        let grid: Vec<f64> = (0..200).map(|k| 0.5 * 0.95f64.powi(k)).collect();
        let f1 = KneserFunction::counterexample_one();
        let rep = f1.check_density_monotone(&grid, 1e-9);
        assert!(rep.pass, "{rep:?}");
        let p = KneserFunction::constant_coefficients(3);
        assert!(p.check_density_monotone(&grid, 1e-9).pass);
        let p = KneserFunction::constant_coefficients(3);
        let bps: Vec<f64> = (1..=60).map(|i| 2f64.powi(-i)).collect();
        assert!(p.check_density_monotone(&bps, 1e-9).pass);
    }

    #[test]
    fn sampled_checks() {
        let r: Vec<f64> = (0..60).map(|k| 0.5 * 0.9f64.powi(k)).collect();
        let f1 = KneserFunction::counterexample_one();
        let f: Vec<f64> = r.iter().map(|&x| f1.eval(x).unwrap()).collect();
        let s = SampledKneser::new(2, r.clone(), f, "counterexample").unwrap();
        assert!(s.check_kneser_property(1e-12).pass);
        assert!(s.check_density_monotone(1e-9).pass);

        let bad = PiecewisePower::new(2, vec![0.5, 0.1], vec![3.0, 1.0]).unwrap();
        let f: Vec<f64> = r.iter().map(|&x| bad.eval(x).unwrap()).collect();
        let s = SampledKneser::new(2, r, f, "broken").unwrap();
        assert!(!s.check_kneser_property(1e-9).pass);
        assert!(!s.check_density_monotone(1e-6).pass);
    }

    /// Composite two-point Gauss rule; exact on each linear piece.
    fn gauss<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let off = 0.5 * h / 3f64.sqrt();
        (0..n)
            .map(|k| {
                let mid = a + (k as f64 + 0.5) * h;
                0.5 * h * (f(mid - off) + f(mid + off))
            })
            .sum()
    }

    proptest! {
        #[test]
        fn right_derivative_below_left(x in 1e-12f64..0.4999) {
            let f = KneserFunction::counterexample_one();
            prop_assert!(f.deriv_right(x).unwrap() <= f.deriv_left(x).unwrap() * (1.0 + 1e-15));
        }

        #[test]
        fn continuous_at_breakpoints(i in 2usize..30, eps in 1e-9f64..1e-4) {
            let f = KneserFunction::counterexample_one();
            let r = 2f64.powi(-(i as i32));
            let v = f.eval(r).unwrap();
            let slope = f.deriv_left(r).unwrap();
            for x in [r * (1.0 - eps), r * (1.0 + eps)] {
                prop_assert!((f.eval(x).unwrap() - v).abs() <= slope * r * eps * (1.0 + 1e-6));
            }
        }

        #[test]
        fn derivative_integrates_to_increment(i in 2usize..25, u in 0.0f64..1.0, w in 0.05f64..3.0) {
            // [a, b] spans at most three breakpoints
            let f = KneserFunction::counterexample_one();
            let a = 2f64.powi(-(i as i32)) * 2f64.powf(u);
            let b = (a * 2f64.powf(w)).min(0.5);
            let mut pieces = vec![a];
            for k in (1..=i).rev() {
                let r = 2f64.powi(-(k as i32));
                if r > a && r < b { pieces.push(r); }
            }
            pieces.push(b);
            let integral: f64 = pieces
                .windows(2)
                .map(|p| gauss(|x| f.deriv_left(x).unwrap(), p[0], p[1], 8))
                .sum();
            let diff = f.eval(b).unwrap() - f.eval(a).unwrap();
            prop_assert!(((integral - diff) / diff).abs() < 1e-8);
        }

        #[test]
        fn value_tracks_gauge(x in 2f64.powi(-40)..2f64.powi(-10)) {
            let f = KneserFunction::counterexample_one();
            let ratio = f.eval(x).unwrap() / ce1_gauge().eval(x).unwrap();
            prop_assert!((ratio - 1.0).abs() < 0.05);
        }
    }
}
