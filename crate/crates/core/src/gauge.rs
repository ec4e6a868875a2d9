//! Gauge functions `h(r) = r^s g(r)`, the ball-volume constants `κ_t`, and
//! the two special functions the rest of the crate needs (Gamma on
//! `[1, 2.5]`-ish arguments and the Riemann zeta function on the positive
//! real axis).

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shared scalar callable.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Smallest radius any gauge accepts. Below this, work in log-domain
/// (see [`crate::kneser`]).
pub const UNDERFLOW_GUARD: f64 = 1e-300;

/// User-supplied gauge. `g`/`g_prime` are optional, but without them the
/// regularity functional `r g'(r)/g(r)` cannot be evaluated.
#[derive(Clone)]
pub struct CustomGauge {
    pub label: String,
    pub h: ScalarFn,
    pub h_prime: ScalarFn,
    pub s: Option<f64>,
    pub g: Option<ScalarFn>,
    pub g_prime: Option<ScalarFn>,
    /// Open upper end of the domain.
    pub r_max: f64,
}

#[derive(Clone)]
pub enum GaugeFamily {
    /// `c r^s`
    Power { s: f64 },
    /// `c r^s |log r|^{-p}`
    PowerLog { s: f64, p: f64 },
    /// `c r^s / log|log r|`
    PowerLogLog { s: f64 },
    /// `c / |log r|`
    InverseLog,
    /// `c / log|log r|`
    InverseLogLog,
    Custom(CustomGauge),
}

/// A positive gauge function with closed-form value, derivative and (where
/// the family separates as `r^s g(r)`) the factor `g` and its derivative.
#[derive(Clone)]
pub struct GaugeFunction {
    family: GaugeFamily,
    scale: f64,
}

impl fmt::Debug for GaugeFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GaugeFunction({})", self.describe())
    }
}

impl GaugeFunction {
    pub fn power(s: f64) -> Self {
        Self {
            family: GaugeFamily::Power { s },
            scale: 1.0,
        }
    }

    pub fn power_log(s: f64, p: f64) -> Self {
        Self {
            family: GaugeFamily::PowerLog { s, p },
            scale: 1.0,
        }
    }

    pub fn power_log_log(s: f64) -> Self {
        Self {
            family: GaugeFamily::PowerLogLog { s },
            scale: 1.0,
        }
    }

    pub fn inverse_log(c: f64) -> Self {
        Self {
            family: GaugeFamily::InverseLog,
            scale: c,
        }
    }

    pub fn inverse_log_log(c: f64) -> Self {
        Self {
            family: GaugeFamily::InverseLogLog,
            scale: c,
        }
    }

    pub fn custom(custom: CustomGauge) -> Self {
        Self {
            family: GaugeFamily::Custom(custom),
            scale: 1.0,
        }
    }

    /// Minkowski normalization `κ_{d-D} r^{d-D}`.
    pub fn minkowski(d: f64, dim: f64) -> Self {
        Self::power(d - dim).with_scale(kappa(d - dim))
    }

    /// S-content normalization `(d-D) κ_{d-D} r^{d-1-D}`.
    pub fn surface(d: f64, dim: f64) -> Self {
        Self::power(d - 1.0 - dim).with_scale((d - dim) * kappa(d - dim))
    }

    /// Multiply the gauge by a positive constant.
    pub fn with_scale(mut self, c: f64) -> Self {
        self.scale *= c;
        self
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn family(&self) -> &GaugeFamily {
        &self.family
    }

    /// Exponent `s` in `h = r^s g`, when known.
    pub fn exponent(&self) -> Option<f64> {
        match &self.family {
            GaugeFamily::Power { s }
            | GaugeFamily::PowerLog { s, .. }
            | GaugeFamily::PowerLogLog { s } => Some(*s),
            GaugeFamily::InverseLog | GaugeFamily::InverseLogLog => Some(0.0),
            GaugeFamily::Custom(c) => c.s,
        }
    }

    /// Open upper end of the domain of definition.
    pub fn r_max(&self) -> f64 {
        match &self.family {
            GaugeFamily::Power { .. } => f64::INFINITY,
            GaugeFamily::PowerLog { .. } | GaugeFamily::InverseLog => 1.0,
            GaugeFamily::PowerLogLog { .. } | GaugeFamily::InverseLogLog => (-1.0f64).exp(),
            GaugeFamily::Custom(c) => c.r_max,
        }
    }

    /// Short human-readable formula.
    pub fn describe(&self) -> String {
        let c = self.scale;
        match &self.family {
            GaugeFamily::Power { s } => format!("{c}*r^{s}"),
            GaugeFamily::PowerLog { s, p } => format!("{c}*r^{s}*|log r|^-{p}"),
            GaugeFamily::PowerLogLog { s } => format!("{c}*r^{s}/log|log r|"),
            GaugeFamily::InverseLog => format!("{c}/|log r|"),
            GaugeFamily::InverseLogLog => format!("{c}/log|log r|"),
            GaugeFamily::Custom(g) => format!("{c}*custom({})", g.label),
        }
    }

    fn check_domain(&self, r: f64) -> Result<()> {
        if !r.is_finite() || r <= 0.0 {
            return Err(Error::Domain(format!("gauge evaluated at r = {r}")));
        }
        if r < UNDERFLOW_GUARD {
            return Err(Error::Domain(format!(
                "r = {r} below the underflow guard {UNDERFLOW_GUARD}; use log-domain evaluation"
            )));
        }
        let max = self.r_max();
        if r >= max {
            return Err(Error::Domain(format!(
                "r = {r} outside the domain (0, {max}) of {}",
                self.describe()
            )));
        }
        Ok(())
    }

    /// `h(r)`.
    pub fn eval(&self, r: f64) -> Result<f64> {
        self.check_domain(r)?;
        let c = self.scale;
        let v = match &self.family {
            GaugeFamily::Power { s } => c * r.powf(*s),
            GaugeFamily::PowerLog { s, p } => c * r.powf(*s) * (-r.ln()).powf(-p),
            GaugeFamily::PowerLogLog { s } => c * r.powf(*s) / (-r.ln()).ln(),
            GaugeFamily::InverseLog => c / (-r.ln()),
            GaugeFamily::InverseLogLog => c / (-r.ln()).ln(),
            GaugeFamily::Custom(g) => c * (g.h)(r),
        };
        Ok(v)
    }

    /// `h'(r)` in closed form.
    pub fn eval_deriv(&self, r: f64) -> Result<f64> {
        self.check_domain(r)?;
        let c = self.scale;
        let v = match &self.family {
            GaugeFamily::Power { s } => c * s * r.powf(s - 1.0),
            GaugeFamily::PowerLog { s, p } => {
                let l = -r.ln();
                c * r.powf(s - 1.0) * l.powf(-p) * (s + p / l)
            }
            GaugeFamily::PowerLogLog { s } => {
                let l = -r.ln();
                let ll = l.ln();
                c * r.powf(s - 1.0) / ll * (s + 1.0 / (l * ll))
            }
            GaugeFamily::InverseLog => {
                let l = -r.ln();
                c / (r * l * l)
            }
            GaugeFamily::InverseLogLog => {
                let l = -r.ln();
                let ll = l.ln();
                c / (r * l * ll * ll)
            }
            GaugeFamily::Custom(g) => c * (g.h_prime)(r),
        };
        Ok(v)
    }

    /// The factor `g` in `h = r^s g`.
    pub fn g(&self, r: f64) -> Result<f64> {
        self.check_domain(r)?;
        let c = self.scale;
        match &self.family {
            GaugeFamily::Power { .. } => Ok(c),
            GaugeFamily::PowerLog { p, .. } => Ok(c * (-r.ln()).powf(-p)),
            GaugeFamily::PowerLogLog { .. } | GaugeFamily::InverseLogLog => Ok(c / (-r.ln()).ln()),
            GaugeFamily::InverseLog => Ok(c / (-r.ln())),
            GaugeFamily::Custom(g) => match &g.g {
                Some(f) => Ok(c * f(r)),
                None => Err(Error::UnsupportedFamily(format!(
                    "custom gauge '{}' has no explicit g",
                    g.label
                ))),
            },
        }
    }

    /// `g'(r)`.
    pub fn g_deriv(&self, r: f64) -> Result<f64> {
        self.check_domain(r)?;
        let c = self.scale;
        match &self.family {
            GaugeFamily::Power { .. } => Ok(0.0),
            GaugeFamily::PowerLog { p, .. } => {
                let l = -r.ln();
                Ok(c * p * l.powf(-p - 1.0) / r)
            }
            GaugeFamily::PowerLogLog { .. } | GaugeFamily::InverseLogLog => {
                let l = -r.ln();
                let ll = l.ln();
                Ok(c / (r * l * ll * ll))
            }
            GaugeFamily::InverseLog => {
                let l = -r.ln();
                Ok(c / (r * l * l))
            }
            GaugeFamily::Custom(g) => match &g.g_prime {
                Some(f) => Ok(c * f(r)),
                None => Err(Error::UnsupportedFamily(format!(
                    "custom gauge '{}' has no explicit g'",
                    g.label
                ))),
            },
        }
    }

    /// The regularity functional `r g'(r) / g(r)`.
    pub fn regularity_ratio(&self, r: f64) -> Result<f64> {
        if let GaugeFamily::Custom(g) = &self.family {
            if g.s.is_none() {
                return Err(Error::UnsupportedFamily(format!(
                    "custom gauge '{}' does not declare its exponent s",
                    g.label
                )));
            }
        }
        self.check_domain(r)?;
        match &self.family {
            GaugeFamily::Power { .. } => Ok(0.0),
            GaugeFamily::PowerLog { p, .. } => Ok(p / (-r.ln())),
            GaugeFamily::PowerLogLog { .. } | GaugeFamily::InverseLogLog => {
                let l = -r.ln();
                Ok(1.0 / (l * l.ln()))
            }
            GaugeFamily::InverseLog => Ok(1.0 / (-r.ln())),
            GaugeFamily::Custom(_) => Ok(r * self.g_deriv(r)? / self.g(r)?),
        }
    }

    /// Largest value of the regularity functional over `radii`.
    pub fn regularity_limsup(&self, radii: &[f64]) -> Result<f64> {
        radii.iter().try_fold(f64::NEG_INFINITY, |acc, &r| {
            Ok(acc.max(self.regularity_ratio(r)?))
        })
    }

    /// Whether `g` is nondecreasing in `r` across the (unordered) radii.
    pub fn g_nondecreasing_on(&self, radii: &[f64]) -> Result<bool> {
        let mut pts = radii
            .iter()
            .map(|&r| Ok((r, self.g(r)?)))
            .collect::<Result<Vec<_>>>()?;
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(pts
            .windows(2)
            .all(|w| w[1].1 >= w[0].1 * (1.0 - 1e-12)))
    }
}

/// JSON form of a gauge, e.g. `{"family":"power","s":0.5}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum GaugeSpec {
    Power {
        s: f64,
        #[serde(default = "unit")]
        c: f64,
    },
    PowerLog {
        s: f64,
        p: f64,
        #[serde(default = "unit")]
        c: f64,
    },
    PowerLogLog {
        s: f64,
        #[serde(default = "unit")]
        c: f64,
    },
    InverseLog {
        #[serde(default = "unit")]
        c: f64,
    },
    InverseLogLog {
        #[serde(default = "unit")]
        c: f64,
    },
}

fn unit() -> f64 {
    1.0
}

impl GaugeSpec {
    pub fn build(&self) -> Result<GaugeFunction> {
        let positive = |c: f64| {
            if c > 0.0 && c.is_finite() {
                Ok(c)
            } else {
                Err(Error::Domain(format!("gauge scale must be positive, got {c}")))
            }
        };
        Ok(match *self {
            GaugeSpec::Power { s, c } => GaugeFunction::power(s).with_scale(positive(c)?),
            GaugeSpec::PowerLog { s, p, c } => {
                GaugeFunction::power_log(s, p).with_scale(positive(c)?)
            }
            GaugeSpec::PowerLogLog { s, c } => {
                GaugeFunction::power_log_log(s).with_scale(positive(c)?)
            }
            GaugeSpec::InverseLog { c } => GaugeFunction::inverse_log(positive(c)?),
            GaugeSpec::InverseLogLog { c } => GaugeFunction::inverse_log_log(positive(c)?),
        })
    }
}

// Lanczos approximation, g = 7, nine terms. Relative error below 2e-15 on
// [1, 2]; other arguments are reduced with Γ(x+1) = xΓ(x).
const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

fn gamma_lanczos(x: f64) -> f64 {
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}

/// Gamma function for positive arguments.
pub fn gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("gamma({x})")));
    }
    let mut x = x;
    let mut factor = 1.0;
    while x > 2.0 {
        x -= 1.0;
        factor *= x;
    }
    while x < 1.0 {
        factor /= x;
        x += 1.0;
    }
    Ok(factor * gamma_lanczos(x))
}

/// `κ_t = π^{t/2} / Γ(1 + t/2)`; the volume of the unit `t`-ball for integer `t`.
pub fn kappa(t: f64) -> f64 {
    assert!(t >= 0.0 && t.is_finite(), "kappa expects t >= 0, got {t}");
    PI.powf(t / 2.0) / gamma(1.0 + t / 2.0).expect("positive argument")
}

/// Euler-transform depth for the eta series.
const ETA_DEPTH: usize = 40;

/// Dirichlet eta `η(s) = Σ (-1)^{n-1} n^{-s}` for `s > 0`, with the partial
/// sums `S_depth ..= S_{2 depth}` averaged under binomial weights.
pub fn eta_with_depth(s: f64, depth: usize) -> f64 {
    let n = depth.max(1);
    let mut partial = 0.0;
    let mut sums = Vec::with_capacity(n + 1);
    for k in 1..=2 * n {
        let term = (k as f64).powf(-s);
        if k % 2 == 1 {
            partial += term;
        } else {
            partial -= term;
        }
        if k >= n {
            sums.push(partial);
        }
    }
    // Binomial weights C(n, i) / 2^n, built incrementally.
    let mut weight = 0.5f64.powi(n as i32);
    let mut acc = 0.0;
    for (i, s_i) in sums.iter().enumerate() {
        acc += weight * s_i;
        weight *= (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Riemann zeta on `(0, 1) ∪ (1, ∞)` via `ζ(s) = η(s) / (1 - 2^{1-s})`.
pub fn zeta(s: f64) -> Result<f64> {
    if s == 1.0 {
        return Err(Error::Pole);
    }
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Domain(format!("zeta({s}) needs s > 0")));
    }
    let denom = -(((1.0 - s) * std::f64::consts::LN_2).exp_m1());
    Ok(eta_with_depth(s, ETA_DEPTH) / denom)
}
