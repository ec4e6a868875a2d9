//! Fractal strings: nonincreasing summable gap lengths `l_1 >= l_2 >= ...` of
//! a compact set `F` of zero length on the line, the parallel volume
//! `V(r) = 2r (J(2r) + 1) + sum_{j > J(2r)} l_j` and boundary count
//! `2 + 2 J(2r)`, where `J(ε)` is the number of gaps of length at least `ε`.
//!
//! Lengths, tail sums and the total length are carried in double-double
//! arithmetic so that `x sum_j l_j` can be formed exactly enough for
//! `x ~ 1e8`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use twofloat::TwoFloat;

use crate::error::{Error, Result};
use crate::gauge::{kappa, GaugeFunction};
use crate::limits::{ratio_bracket, BracketConfig, ContentEstimate, Grid};

pub type LengthFn = Arc<dyn Fn(usize) -> f64 + Send + Sync>;

/// How the lengths are produced.
#[derive(Clone)]
pub enum Generator {
    /// Finitely many gaps, nonincreasing.
    Explicit(Vec<f64>),
    /// `l_j = L j^{-1/D}`.
    Power { l: f64, d: f64 },
    /// `l_j = j^{-a} - (j+1)^{-a}`.
    AString { a: f64 },
    /// Middle-gap Cantor construction with two branches of ratio `c`:
    /// level `n` holds `2^{n-1}` gaps of length `(1 - 2c) c^{n-1}`.
    Cantor { scale: f64 },
    /// User lengths with a certified tail `J -> sum_{j > J} l_j`.
    Custom { length: LengthFn, tail: LengthFn },
}

/// A fractal string with optional known dimension `D` and constant `L`.
#[derive(Clone)]
pub struct FractalString {
    gen: Generator,
    known_d: Option<f64>,
    known_l: Option<f64>,
}

impl fmt::Debug for FractalString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FractalString({})", self.describe())
    }
}

fn dd(x: f64) -> TwoFloat {
    TwoFloat::from(x)
}

fn dd_int(j: usize) -> TwoFloat {
    TwoFloat::from(j as f64)
}

/// `j^{-p}` for a positive integer exponent, exactly rounded in double-double.
fn dd_inv_pow(j: usize, p: i32) -> TwoFloat {
    crate::dd::recip(dd_int(j).powi(p))
}

const INTEGER_TOL: f64 = 1e-12;

fn as_small_integer(x: f64) -> Option<i32> {
    let k = x.round();
    ((x - k).abs() < INTEGER_TOL && (1.0..=16.0).contains(&k)).then_some(k as i32)
}

/// Euler-Maclaurin for `sum_{j >= m} j^{-p}`, `p > 1`, `m >= 32`.
fn power_tail_from(m: usize, p: f64) -> TwoFloat {
    let mf = dd_int(m);
    let (m_pow, m_p) = match as_small_integer(p) {
        Some(k) => (mf.powi(k), k as f64),
        None => (dd((m as f64).powf(p)), p),
    };
    let inv = crate::dd::recip(m_pow);
    // ∫_m^∞ x^{-p} dx + f(m)/2
    let mut s = mf * inv / (m_p - 1.0) + inv * 0.5;
    // B_{2k}/(2k)!
    const B: [f64; 6] = [
        1.0 / 12.0,
        -1.0 / 720.0,
        1.0 / 30240.0,
        -1.0 / 1209600.0,
        1.0 / 47900160.0,
        -691.0 / 1307674368000.0,
    ];
    let mut rising = m_p;
    let m2 = (m as f64) * (m as f64);
    let mut mpow = inv / (m as f64);
    for (k, c) in B.iter().enumerate() {
        s += mpow * (c * rising);
        let k2 = (2 * k + 2) as f64;
        rising *= (m_p + k2 - 1.0) * (m_p + k2);
        mpow /= m2;
    }
    s
}

/// Exact `(p, q)` with `l = p/q`, when available.
type Rational = (u64, u64);

impl FractalString {
    pub fn new(gen: Generator) -> Result<Self> {
        let (known_d, known_l) = match &gen {
            Generator::Explicit(v) => {
                if v.is_empty() || v.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                    return Err(Error::Domain("explicit lengths must be positive".into()));
                }
                if v.windows(2).any(|w| w[1] > w[0]) {
                    return Err(Error::Monotonicity("explicit lengths must be nonincreasing".into()));
                }
                (None, None)
            }
            Generator::Power { l, d } => {
                if !(*l > 0.0) || !(*d > 0.0 && *d < 1.0) {
                    return Err(Error::Domain(format!(
                        "power string needs L > 0 and D in (0,1), got L = {l}, D = {d}"
                    )));
                }
                (Some(*d), Some(*l))
            }
            Generator::AString { a } => {
                if !(*a > 0.0) || !a.is_finite() {
                    return Err(Error::Domain(format!("a-string needs a > 0, got {a}")));
                }
                // l_j ~ a j^{-a-1}
                (Some(1.0 / (1.0 + a)), Some(*a))
            }
            Generator::Cantor { scale } => {
                if !(*scale > 0.0 && *scale < 0.5) {
                    return Err(Error::Domain(format!(
                        "Cantor scale must lie in (0, 1/2), got {scale}"
                    )));
                }
                (Some(2f64.ln() / (1.0 / scale).ln()), None)
            }
            Generator::Custom { .. } => (None, None),
        };
        let s = Self {
            gen,
            known_d,
            known_l,
        };
        s.validate_prefix(256)?;
        Ok(s)
    }

    pub fn a_string(a: f64) -> Result<Self> {
        Self::new(Generator::AString { a })
    }

    pub fn power(l: f64, d: f64) -> Result<Self> {
        Self::new(Generator::Power { l, d })
    }

    pub fn cantor(scale: f64) -> Result<Self> {
        Self::new(Generator::Cantor { scale })
    }

    pub fn explicit(lengths: Vec<f64>) -> Result<Self> {
        Self::new(Generator::Explicit(lengths))
    }

    /// Attach or override the known dimension and constant.
    pub fn with_known(mut self, d: Option<f64>, l: Option<f64>) -> Self {
        self.known_d = d;
        self.known_l = l;
        self
    }

    pub fn known_d(&self) -> Option<f64> {
        self.known_d
    }

    pub fn known_l(&self) -> Option<f64> {
        self.known_l
    }

    pub fn generator(&self) -> &Generator {
        &self.gen
    }

    pub fn describe(&self) -> String {
        match &self.gen {
            Generator::Explicit(v) => format!("explicit({} gaps)", v.len()),
            Generator::Power { l, d } => format!("power(L={l}, D={d})"),
            Generator::AString { a } => format!("a_string(a={a})"),
            Generator::Cantor { scale } => format!("cantor(scale={scale})"),
            Generator::Custom { .. } => "custom".into(),
        }
    }

    fn validate_prefix(&self, n: usize) -> Result<()> {
        let mut prev = f64::INFINITY;
        for j in 1..=n {
            let l = self.length(j);
            if l > prev * (1.0 + 1e-15) {
                return Err(Error::Monotonicity(format!("l_{j} = {l} exceeds l_{} = {prev}", j - 1)));
            }
            if l < 0.0 || l.is_nan() {
                return Err(Error::Domain(format!("l_{j} = {l}")));
            }
            prev = l;
        }
        Ok(())
    }

    /// `1/c` when the Cantor scale is the reciprocal of an integer `k >= 3`.
    fn cantor_base(scale: f64) -> Option<u64> {
        let k = (1.0 / scale).round();
        ((k * scale - 1.0).abs() < 1e-15 && k >= 3.0).then_some(k as u64)
    }

    /// Level `n >= 1` of index `j` in the Cantor flattening.
    fn cantor_level(j: usize) -> u32 {
        usize::BITS - j.leading_zeros()
    }

    /// `l_j` as a fraction of integers, when the generator has one.
    pub(crate) fn rational(&self, j: usize) -> Option<Rational> {
        match &self.gen {
            Generator::AString { a } if *a == 1.0 => {
                let q = (j as u64).checked_mul(j as u64 + 1)?;
                Some((1, q))
            }
            Generator::Power { l, d } => {
                let p = as_small_integer(1.0 / d)?;
                let ln = l.round();
                if (l - ln).abs() > 0.0 || ln < 1.0 {
                    return None;
                }
                let q = (j as u64).checked_pow(p as u32)?;
                Some((ln as u64, q))
            }
            Generator::Cantor { scale } => {
                let k = Self::cantor_base(*scale)?;
                let n = Self::cantor_level(j);
                Some((k - 2, k.checked_pow(n)?))
            }
            _ => None,
        }
    }

    /// `l_j` in double-double.
    pub fn length_dd(&self, j: usize) -> TwoFloat {
        assert!(j >= 1, "string indices start at 1");
        if let Some((p, q)) = self.rational(j) {
            return dd(p as f64) / q as f64;
        }
        match &self.gen {
            Generator::Explicit(v) => dd(v.get(j - 1).copied().unwrap_or(0.0)),
            Generator::Power { l, d } => match as_small_integer(1.0 / d) {
                Some(p) => dd_inv_pow(j, p) * *l,
                None => dd(l * (j as f64).powf(-1.0 / d)),
            },
            Generator::AString { a } => {
                if *a == 1.0 {
                    dd(1.0) / j as f64 / (j + 1) as f64
                } else {
                    let jf = j as f64;
                    dd(jf.powf(-a) * (-(-a * (1.0 / jf).ln_1p()).exp_m1()))
                }
            }
            Generator::Cantor { scale } => {
                let n = Self::cantor_level(j) as i32;
                dd((1.0 - 2.0 * scale) * scale.powi(n - 1))
            }
            Generator::Custom { length, .. } => dd(length(j)),
        }
    }

    /// `l_j`.
    pub fn length(&self, j: usize) -> f64 {
        self.length_dd(j).hi()
    }

    /// `sum_{j > n} l_j` in double-double (`n = 0` gives the total length).
    pub fn tail_dd(&self, n: usize) -> Result<TwoFloat> {
        Ok(match &self.gen {
            Generator::Explicit(v) => {
                let mut s = dd(0.0);
                for &x in v.iter().skip(n).rev() {
                    s += x;
                }
                s
            }
            Generator::Power { l, d } => {
                const M: usize = 64;
                let p = 1.0 / d;
                let (mut s, start) = if n + 1 >= M {
                    (power_tail_from(n + 1, p), n + 1)
                } else {
                    (power_tail_from(M, p), M)
                };
                for j in (n + 1..start).rev() {
                    s += self.length_dd(j) / *l;
                }
                s * *l
            }
            Generator::AString { a } => {
                if *a == 1.0 {
                    dd(1.0) / (n + 1) as f64
                } else {
                    dd(((n + 1) as f64).powf(-a))
                }
            }
            Generator::Cantor { scale } => {
                if n == 0 {
                    return Ok(dd(1.0));
                }
                let level = Self::cantor_level(n);
                let last_of_level = (1usize << level) - 1;
                let len = self.length_dd(n);
                let rest_of_level = len * ((last_of_level - n) as f64);
                let deeper = match Self::cantor_base(*scale) {
                    Some(k) => (dd(2.0) / k as f64).powi(level as i32),
                    None => dd((2.0 * scale).powi(level as i32)),
                };
                rest_of_level + deeper
            }
            Generator::Custom { tail, .. } => {
                let t = tail(n);
                if !(t >= 0.0) || !t.is_finite() {
                    return Err(Error::DivergentTail(format!(
                        "custom tail after J = {n} is {t}"
                    )));
                }
                dd(t)
            }
        })
    }

    /// `sum_{j > n} l_j`.
    pub fn tail(&self, n: usize) -> Result<f64> {
        Ok(self.tail_dd(n)?.hi())
    }

    /// `|Ω| = sum_j l_j`.
    pub fn total_length(&self) -> Result<f64> {
        self.tail(0)
    }

    /// `J(ε) = max{j : l_j >= ε}` (0 when `l_1 < ε`).
    pub fn j_of(&self, eps: f64) -> usize {
        assert!(eps > 0.0, "J(eps) needs eps > 0");
        let at_least = |j: usize| self.length_dd(j) >= eps;
        if !at_least(1) {
            return 0;
        }
        if let Generator::Explicit(v) = &self.gen {
            return v.partition_point(|&x| x >= eps);
        }
        let mut lo = 1usize; // l_lo >= eps
        let mut hi = 2usize;
        while at_least(hi) {
            lo = hi;
            hi = hi.checked_mul(2).expect("J(eps) overflow");
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if at_least(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// Parallel volume in double-double.
    pub fn volume_dd(&self, r: f64) -> Result<TwoFloat> {
        if !(r > 0.0) {
            return Err(Error::Domain(format!("volume at r = {r}")));
        }
        let j = self.j_of(2.0 * r);
        Ok(dd(2.0 * r) * ((j + 1) as f64) + self.tail_dd(j)?)
    }

    /// `V(r) = 2r (J(2r) + 1) + sum_{j > J(2r)} l_j`.
    pub fn volume(&self, r: f64) -> Result<f64> {
        Ok(self.volume_dd(r)?.hi())
    }

    /// Boundary count `2 + 2 J(2r)` of the parallel set.
    pub fn surface(&self, r: f64) -> u64 {
        2 + 2 * self.j_of(2.0 * r) as u64
    }

    /// Tail liminf/limsup of `α_j = l_j j^{1/D}` over `j in [j_max/10, j_max]`,
    /// plus the variants restricted to jump indices `l_j > l_{j+1}`.
    pub fn alpha_beta(&self, j_max: usize) -> Result<StringAsymptotics> {
        let (d, estimated) = match self.known_d {
            Some(d) => (d, false),
            None => (self.estimate_dimension(j_max)?, true),
        };
        let start = (j_max / 10).max(1);
        let alpha = |j: usize| self.length(j) * (j as f64).powf(1.0 / d);
        let mut out = StringAsymptotics {
            d,
            d_estimated: estimated,
            j_range: (start, j_max),
            alpha: f64::INFINITY,
            beta: f64::NEG_INFINITY,
            alpha_witness: 0,
            beta_witness: 0,
            alpha_jump: f64::INFINITY,
            beta_jump: f64::NEG_INFINITY,
            jumps: 0,
        };
        let mut next = self.length(start);
        for j in start..=j_max {
            let cur = next;
            next = self.length(j + 1);
            let a = alpha(j);
            if a < out.alpha {
                out.alpha = a;
                out.alpha_witness = j;
            }
            if a > out.beta {
                out.beta = a;
                out.beta_witness = j;
            }
            if cur > next && next > 0.0 {
                out.jumps += 1;
                out.beta_jump = out.beta_jump.max(a);
                out.alpha_jump = out.alpha_jump.min(alpha(j + 1));
            }
        }
        Ok(out)
    }

    /// Box-counting exponent from `J(ε) ~ ε^{-D}` over the last decade of
    /// lengths up to `j_max`.
    pub fn estimate_dimension(&self, j_max: usize) -> Result<f64> {
        let lo = self.length(j_max);
        let hi = self.length((j_max / 10).max(1));
        if !(lo > 0.0) || !(hi > lo) {
            return Err(Error::DegenerateFit(
                "string lengths do not span a scaling range".into(),
            ));
        }
        let n = 32;
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for k in 0..n {
            let eps = hi * (lo / hi).powf(k as f64 / (n - 1) as f64);
            let x = eps.ln();
            let y = (self.j_of(eps).max(1) as f64).ln();
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        let nf = n as f64;
        Ok(-(nf * sxy - sx * sy) / (nf * sxx - sx * sx))
    }
}

/// `α`, `β` estimates over a tail window of indices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StringAsymptotics {
    pub d: f64,
    pub d_estimated: bool,
    pub j_range: (usize, usize),
    pub alpha: f64,
    pub beta: f64,
    pub alpha_witness: usize,
    pub beta_witness: usize,
    /// Over `{j : l_j > l_{j+1}}`: `min α_{j+1}`.
    pub alpha_jump: f64,
    /// Over `{j : l_j > l_{j+1}}`: `max α_j`.
    pub beta_jump: f64,
    pub jumps: usize,
}

/// `2^{1-D} / κ_{1-D} · L^D / (1 - D)`: the common value of the Minkowski
/// content and the S-content of a string with `l_j ~ L j^{-1/D}`.
pub fn content_formula(l: f64, d: f64) -> Result<f64> {
    if !(l > 0.0) || !(d > 0.0 && d < 1.0) {
        return Err(Error::Domain(format!(
            "content formula needs L > 0 and D in (0,1), got L = {l}, D = {d}"
        )));
    }
    Ok(2f64.powf(1.0 - d) / kappa(1.0 - d) * l.powf(d) / (1.0 - d))
}

/// JSON form of a string, e.g. `{"kind":"power","L":1.0,"D":0.5}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StringSpec {
    AString {
        a: f64,
    },
    Power {
        #[serde(rename = "L")]
        l: f64,
        #[serde(rename = "D")]
        d: f64,
    },
    Cantor {
        scale: f64,
    },
    Explicit {
        lengths: Vec<f64>,
    },
}

impl StringSpec {
    pub fn build(&self) -> Result<FractalString> {
        match self {
            StringSpec::AString { a } => FractalString::a_string(*a),
            StringSpec::Power { l, d } => FractalString::power(*l, *d),
            StringSpec::Cantor { scale } => FractalString::cantor(*scale),
            StringSpec::Explicit { lengths } => FractalString::explicit(lengths.clone()),
        }
    }
}

/// One statement of the equivalence, with its numeric evidence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Statement {
    pub name: String,
    pub holds: bool,
    pub detail: String,
}

/// The three equivalent conditions of each half of the 1-D characterisation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StringContentReport {
    pub string: String,
    pub d: f64,
    pub grid_r_min: f64,
    pub grid_r_max: f64,
    /// Bounded above and below: M, S two-sided and `0 < α <= β < ∞`.
    pub part_a: Vec<Statement>,
    /// Measurable: M, S stable and `α = β`.
    pub part_b: Vec<Statement>,
    pub part_a_consistent: bool,
    pub part_b_consistent: bool,
    pub minkowski: ContentEstimate,
    pub s_content: ContentEstimate,
    pub asymptotics: StringAsymptotics,
    /// `content_formula(L, D)`, with `L` known or `(α+β)/2`.
    pub formula_value: Option<f64>,
    /// Relative deviation of the measured contents from `formula_value`.
    pub minkowski_deviation: Option<f64>,
    pub s_deviation: Option<f64>,
    /// Fitted exponent of `r S(r)` against `r`; positive means `r S(r) -> 0`.
    pub r_surface_exponent: f64,
    pub notes: Vec<String>,
}

impl StringContentReport {
    pub fn part_a_holds(&self) -> bool {
        self.part_a.iter().all(|s| s.holds)
    }

    pub fn part_b_holds(&self) -> bool {
        self.part_b.iter().all(|s| s.holds)
    }
}

/// Settings for [`string_content_harness`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarnessConfig {
    pub bracket: BracketConfig,
    pub j_max: usize,
    /// Tolerance for `β/α - 1` when testing `α = β`.
    pub alpha_beta_tol: f64,
    /// Tolerance for agreement with the closed-form content.
    pub content_tol: f64,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            bracket: BracketConfig::default(),
            j_max: 1_000_000,
            alpha_beta_tol: 0.02,
            content_tol: 0.02,
        }
    }
}

/// Evaluate both halves of the characterisation of bounded / measurable
/// strings on one grid and compare the three conditions in each half.
pub fn string_content_harness(
    s: &FractalString,
    grid: &Grid,
    cfg: &HarnessConfig,
) -> Result<StringContentReport> {
    let ab = s.alpha_beta(cfg.j_max)?;
    let d = ab.d;
    if !(d > 0.0 && d < 1.0) {
        return Err(Error::Domain(format!("dimension {d} outside (0, 1)")));
    }
    let mut notes = Vec::new();
    if ab.d_estimated {
        notes.push(format!("D = {d} estimated from the counting function"));
    }
    let vol = |r: f64| s.volume(r);
    let sur = |r: f64| Ok(s.surface(r) as f64);
    let m = ratio_bracket(&vol, &GaugeFunction::minkowski(1.0, d), grid, &cfg.bracket)?;
    let sc = ratio_bracket(&sur, &GaugeFunction::surface(1.0, d), grid, &cfg.bracket)?;

    let ab_two_sided = ab.alpha > 0.0 && ab.beta.is_finite() && ab.alpha <= ab.beta;
    let ab_equal = ab_two_sided && ab.beta / ab.alpha - 1.0 <= cfg.alpha_beta_tol;
    let describe = |e: &ContentEstimate| {
        format!(
            "[{:.6}, {:.6}], oscillation {:.5}",
            e.liminf_est, e.limsup_est, e.diagnostics.oscillation
        )
    };
    let part_a = vec![
        Statement {
            name: "minkowski_two_sided".into(),
            holds: m.two_sided(),
            detail: describe(&m),
        },
        Statement {
            name: "s_content_two_sided".into(),
            holds: sc.two_sided(),
            detail: describe(&sc),
        },
        Statement {
            name: "alpha_beta_two_sided".into(),
            holds: ab_two_sided,
            detail: format!("alpha = {:.6}, beta = {:.6}", ab.alpha, ab.beta),
        },
    ];
    let mut part_b = vec![
        Statement {
            name: "minkowski_measurable".into(),
            holds: m.diagnostics.stable,
            detail: describe(&m),
        },
        Statement {
            name: "s_measurable".into(),
            holds: sc.diagnostics.stable,
            detail: describe(&sc),
        },
        Statement {
            name: "alpha_equals_beta".into(),
            holds: ab_equal,
            detail: format!("beta/alpha - 1 = {:.3e}", ab.beta / ab.alpha - 1.0),
        },
    ];
    let consistent = |v: &[Statement]| v.iter().all(|s| s.holds) || v.iter().all(|s| !s.holds);
    let part_a_consistent = consistent(&part_a);
    let part_b_consistent = consistent(&part_b);
    if !part_b[0].holds || !part_b[1].holds {
        notes.push("oscillation detected".into());
    }

    let l = s
        .known_l
        .or_else(|| ab_equal.then_some(0.5 * (ab.alpha + ab.beta)));
    let formula_value = l.map(|l| content_formula(l, d)).transpose()?;
    let (mut m_dev, mut s_dev) = (None, None);
    if let Some(c) = formula_value {
        m_dev = Some((m.value() - c).abs() / c);
        s_dev = Some((sc.value() - c).abs() / c);
        if part_b.iter().all(|s| s.holds) {
            part_b.push(Statement {
                name: "content_matches_formula".into(),
                holds: m_dev.unwrap() <= cfg.content_tol && s_dev.unwrap() <= cfg.content_tol,
                detail: format!(
                    "formula {c:.6}, minkowski dev {:.3e}, s dev {:.3e}",
                    m_dev.unwrap(),
                    s_dev.unwrap()
                ),
            });
        }
    }

    let tail = grid.tail_len(cfg.bracket.window);
    let radii = &grid.radii()[grid.len() - tail..];
    let (x, y): (Vec<f64>, Vec<f64>) = radii
        .iter()
        .map(|&r| (r.ln(), (r * s.surface(r) as f64).ln()))
        .unzip();
    let r_surface_exponent = slope(&x, &y);

    Ok(StringContentReport {
        string: s.describe(),
        d,
        grid_r_min: grid.info().r_min,
        grid_r_max: grid.info().r_max,
        part_a,
        part_b,
        part_a_consistent,
        part_b_consistent,
        minkowski: m,
        s_content: sc,
        asymptotics: ab,
        formula_value,
        minkowski_deviation: m_dev,
        s_deviation: s_dev,
        r_surface_exponent,
        notes,
    })
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kneser::{check_kneser_property, SamplePlan};
    use proptest::prelude::*;

    fn third() -> FractalString {
        FractalString::cantor(1.0 / 3.0).unwrap()
    }

    #[test]
    fn lengths() {
        let a = FractalString::a_string(1.0).unwrap();
        assert_eq!(a.length(3), 1.0 / 12.0);
        let p = FractalString::power(1.0, 0.5).unwrap();
        assert_eq!(p.length(4), 1.0 / 16.0);
        let c = third();
        let want = [1.0 / 3.0, 1.0 / 9.0, 1.0 / 9.0, 1.0 / 27.0, 1.0 / 27.0, 1.0 / 27.0, 1.0 / 27.0];
        for (j, w) in want.iter().enumerate() {
            assert!((c.length(j + 1) - w).abs() < 1e-17, "j={}", j + 1);
        }
        assert!((c.length(8) - 1.0 / 81.0).abs() < 1e-17);
    }

    #[test]
    fn a_string_general_exponent() {
        let s = FractalString::a_string(0.5).unwrap();
        for j in [1usize, 10, 1000, 100_000] {
            let jf = j as f64;
            let naive = jf.powf(-0.5) - (jf + 1.0).powf(-0.5);
            assert!(((s.length(j) - naive) / naive).abs() < 1e-9);
        }
        assert!((s.tail(99).unwrap() - 0.1).abs() < 1e-15);
        assert!((s.known_d().unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn j_of_examples() {
        let a = FractalString::a_string(1.0).unwrap();
        assert_eq!(a.j_of(0.01), 9);
        assert_eq!(a.j_of(0.6), 0);
        let p = FractalString::power(1.0, 0.5).unwrap();
        assert_eq!(p.j_of(1.0 / 16.0), 4);
        let c = third();
        assert_eq!(c.j_of(1.0 / 27.0), 7);
        assert_eq!(c.j_of(1.0 / 27.0 + 1e-12), 3);
        let e = FractalString::explicit(vec![0.5, 0.2, 0.2, 0.1]).unwrap();
        assert_eq!(e.j_of(0.2), 3);
        assert_eq!(e.j_of(0.01), 4);
    }

    #[test]
    fn j_of_matches_enumeration() {
        for s in [
            FractalString::a_string(1.0).unwrap(),
            FractalString::power(2.0, 0.7).unwrap(),
            third(),
            FractalString::cantor(0.2).unwrap(),
        ] {
            for k in 1..60 {
                let eps = 0.5 * 0.83f64.powi(k);
                let brute = (1..200_000).take_while(|&j| s.length(j) >= eps).count();
                if brute < 199_999 {
                    assert_eq!(s.j_of(eps), brute, "{} eps={eps}", s.describe());
                }
            }
        }
    }

    #[test]
    fn volume_examples() {
        let a = FractalString::a_string(1.0).unwrap();
        assert!((a.volume(0.005).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(a.surface(0.005), 20);
        assert_eq!(a.surface(0.3), 2);
        let one = FractalString::explicit(vec![1.0]).unwrap();
        assert!((one.volume(0.2).unwrap() - 0.8).abs() < 1e-15);
        assert!((one.volume(0.6).unwrap() - 2.2).abs() < 1e-15);
        let p = FractalString::power(1.0, 0.5).unwrap();
        assert_eq!(p.surface(1.0 / 32.0), 10);
    }

    /// Direct sums in double-double: the tails below are cross-checked against
    /// brute-force partial sums plus a crude integral bound.
    #[test]
    fn tails_against_direct_summation() {
        let p = FractalString::power(1.0, 0.5).unwrap();
        let total = p.total_length().unwrap();
        assert!((total - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-15);
        let p = FractalString::power(3.0, 0.7).unwrap();
        for n in [0usize, 10, 63, 64, 500] {
            let mut direct = dd(0.0);
            let top = 400_000usize;
            for j in (n + 1..=top).rev() {
                direct += p.length_dd(j);
            }
            // remainder beyond `top` by the integral ∫_{top+1/2}^∞ L x^{-1/D}
            let q = 1.0 / 0.7;
            let rest = 3.0 * (top as f64 + 0.5).powf(1.0 - q) / (q - 1.0);
            let got = p.tail(n).unwrap();
            let want = direct.hi() + rest;
            assert!(((got - want) / want).abs() < 1e-9, "n={n}: {got} vs {want}");
        }
        let c = third();
        assert_eq!(c.total_length().unwrap(), 1.0);
        for n in [1usize, 2, 3, 5, 100, 4095] {
            let mut direct = dd(0.0);
            for j in (n + 1..(1 << 22)).rev() {
                direct += c.length_dd(j);
            }
            let rest = (2.0f64 / 3.0).powi(22);
            assert!((c.tail(n).unwrap() - direct.hi() - rest).abs() < 1e-14, "n={n}");
        }
    }

    #[test]
    fn alpha_beta_values() {
        let p = FractalString::power(2.0, 0.7).unwrap();
        let ab = p.alpha_beta(10_000).unwrap();
        assert!((ab.alpha - 2.0).abs() < 1e-12 && (ab.beta - 2.0).abs() < 1e-12);
        let a = FractalString::a_string(1.0).unwrap();
        let ab = a.alpha_beta(1_000_000).unwrap();
        assert!((ab.alpha - 1.0).abs() < 1e-4 && ab.beta < 1.0);
        let ab = third().alpha_beta(1_000_000).unwrap();
        assert!((ab.alpha - 1.0 / 3.0).abs() < 1e-9);
        assert!(ab.beta > 0.99 && ab.beta < 1.0);
        assert!((ab.alpha_jump - 1.0 / 3.0).abs() < 1e-9);
        assert_eq!(ab.jumps, 3);
        // along j = 2^n and 2^n - 1
        let d = 2f64.ln() / 3f64.ln();
        for n in 5..20 {
            let j = 1usize << n;
            let lo = third().length(j) * (j as f64).powf(1.0 / d);
            assert!((lo - 1.0 / 3.0).abs() < 1e-9);
            let hi = third().length(j - 1) * ((j - 1) as f64).powf(1.0 / d);
            assert!(hi > 0.9 && hi < 1.0);
        }
    }

    #[test]
    fn estimated_dimension() {
        let p = FractalString::power(1.0, 0.6).unwrap().with_known(None, None);
        let d = p.estimate_dimension(100_000).unwrap();
        assert!((d - 0.6).abs() < 0.01, "{d}");
    }

    #[test]
    fn content_formula_values() {
        let c = content_formula(1.0, 0.5).unwrap();
        assert!((c - 2f64.powf(1.5) / kappa(0.5)).abs() < 1e-15);
        for l in [0.5, 2.0, 7.0] {
            let scaled = content_formula(3.0 * l, 0.7).unwrap();
            assert!((scaled - 3f64.powf(0.7) * content_formula(l, 0.7).unwrap()).abs() < 1e-12);
            assert!(content_formula(l * 1.1, 0.7).unwrap() > content_formula(l, 0.7).unwrap());
        }
        assert!(content_formula(1.0, 1.0).is_err());
    }

    #[test]
    fn spec_parsing() {
        let s: StringSpec = serde_json::from_str(r#"{"kind":"power","L":1.0,"D":0.5}"#).unwrap();
        assert_eq!(s, StringSpec::Power { l: 1.0, d: 0.5 });
        let s: StringSpec = serde_json::from_str(r#"{"kind":"a_string","a":1.0}"#).unwrap();
        assert!(s.build().is_ok());
        let s: StringSpec =
            serde_json::from_str(r#"{"kind":"cantor","scale":0.3333333333333333}"#).unwrap();
        assert_eq!(s.build().unwrap().rational(4), Some((1, 27)));
        let s: StringSpec = serde_json::from_str(r#"{"kind":"explicit","lengths":[0.5,0.25]}"#).unwrap();
        assert_eq!(s.build().unwrap().j_of(0.3), 1);
        assert!(FractalString::explicit(vec![0.1, 0.2]).is_err());
        assert!(FractalString::power(1.0, 1.2).is_err());
    }

    #[test]
    fn volume_is_kneser_of_order_one() {
        for s in [FractalString::a_string(1.0).unwrap(), third()] {
            let plan = SamplePlan::new(1e-7, 0.2).with_slack(1e-9);
            let rep = check_kneser_property(|r| s.volume(r), 1, &plan);
            assert!(rep.pass, "{} {rep:?}", s.describe());
        }
    }

    #[test]
    fn harness_a_string() {
        let s = FractalString::a_string(1.0).unwrap();
        let grid = Grid::between(1e-8, 1e-2, 400).unwrap();
        let rep = string_content_harness(&s, &grid, &HarnessConfig::default()).unwrap();
        assert!(rep.part_a_holds() && rep.part_b_holds(), "{rep:#?}");
        assert!(rep.part_a_consistent && rep.part_b_consistent);
        assert!(rep.r_surface_exponent > 0.4);
    }

    #[test]
    fn harness_cantor() {
        let grid = Grid::between(1e-8, 1e-2, 400).unwrap();
        let rep = string_content_harness(&third(), &grid, &HarnessConfig::default()).unwrap();
        assert!(rep.part_a_holds(), "{rep:#?}");
        assert!(rep.part_b.iter().all(|s| !s.holds), "{rep:#?}");
        assert!(rep.notes.iter().any(|n| n == "oscillation detected"));
    }

    proptest! {
        #[test]
        fn derivative_identity(r in 1e-7f64..0.1, which in 0usize..3) {
            let s = [FractalString::a_string(1.0).unwrap(), third(),
                     FractalString::power(1.0, 0.5).unwrap()][which].clone();
            let j = s.j_of(2.0 * r);
            // keep away from the breakpoints r = l_j / 2
            let gap = (s.length(j.max(1)) - 2.0 * r).abs().min((2.0 * r - s.length(j + 1)).abs());
            prop_assume!(gap > 1e-6 * r);
            let h = 1e-3 * gap;
            let fd = (s.volume_dd(r + h).unwrap() - s.volume_dd(r - h).unwrap()) / (2.0 * h);
            let sur = s.surface(r) as f64;
            prop_assert!(((fd.hi() - sur) / sur).abs() < 1e-9);
        }

        #[test]
        fn monotone_in_r(r in 1e-7f64..0.3, f in 1.0001f64..3.0) {
            let s = third();
            prop_assert!(s.volume(r * f).unwrap() >= s.volume(r).unwrap());
            prop_assert!(s.surface(r * f) <= s.surface(r));
        }

        #[test]
        fn saturation(extra in 0.0f64..5.0) {
            let s = FractalString::a_string(1.0).unwrap();
            let r = 0.25 + extra;
            prop_assert!((s.volume(r).unwrap() - (1.0 + 2.0 * r)).abs() < 1e-14);
        }
    }
}
