//! Dirichlet spectrum of a fractal string: the packing defect
//! `δ(x) = Σ {l_j x}`, the counting function `N(λ) = Σ ⌊l_j √λ / π⌋`, the
//! Weyl term `φ(λ) = |Ω| √λ / π` and the second-order residual
//! `δ(x) / x^D -> -ζ(D) L^D` for strings with `l_j ~ L j^{-1/D}`.
//!
//! `φ(λ) - N(λ) = δ(√λ/π)` holds exactly; both sides are evaluated along
//! different paths in double-double arithmetic and compared.

use rayon::prelude::*;
use serde::Serialize;
use twofloat::TwoFloat;

use crate::error::{Error, Result};
use crate::gauge::{kappa, zeta};
use crate::strings::{content_formula, FractalString};

/// Products `l_j x` at or beyond this are refused: their fractional part is
/// not representable.
const EXACT_LIMIT: f64 = 9_007_199_254_740_992.0; // 2^53

fn pi_dd() -> TwoFloat {
    twofloat::consts::PI
}

/// `x = √λ / π` in double-double.
pub fn x_of_lambda(lam: f64) -> TwoFloat {
    crate::dd::div(TwoFloat::from(lam).sqrt(), pi_dd())
}

/// Largest `j` with `l_j x >= 1`.
fn cutoff(s: &FractalString, x: TwoFloat) -> usize {
    let mut j = s.j_of(1.0 / x.hi());
    // the reciprocal was rounded; settle the boundary with the exact product
    while j > 0 && s.length_dd(j) * x < 1.0 {
        j -= 1;
    }
    while s.length_dd(j + 1) * x >= 1.0 {
        j += 1;
    }
    j
}

/// `(⌊l_j x⌋, {l_j x})`, exact when `l_j` is rational and `x` an integer.
fn floor_frac(s: &FractalString, j: usize, x: TwoFloat) -> Result<(f64, TwoFloat)> {
    let xi = x.hi();
    if x.lo() == 0.0 && xi.fract() == 0.0 && xi < EXACT_LIMIT {
        if let Some((p, q)) = s.rational(j) {
            let num = p as u128 * xi as u128;
            let (fl, rem) = (num / q as u128, num % q as u128);
            return Ok((
                fl as f64,
                TwoFloat::from(rem as f64) / q as f64,
            ));
        }
    }
    let prod = s.length_dd(j) * x;
    if prod.hi() >= EXACT_LIMIT {
        return Err(Error::Range(format!(
            "l_{j} x = {} exceeds 2^53; fractional part not representable",
            prod.hi()
        )));
    }
    let fl = prod.floor();
    Ok((fl.hi() + fl.lo(), prod - fl))
}

/// `δ(x)` in double-double: fractional parts below the cutoff `J(1/x)`, the
/// linear tail `x Σ_{j > J} l_j` above it.
pub fn delta_dd(s: &FractalString, x: TwoFloat) -> Result<TwoFloat> {
    if !(x.hi() > 0.0) {
        return Err(Error::Domain(format!("delta at x = {}", x.hi())));
    }
    let j = cutoff(s, x);
    let mut acc = TwoFloat::from(0.0);
    for k in (1..=j).rev() {
        acc += floor_frac(s, k, x)?.1;
    }
    Ok(acc + s.tail_dd(j)? * x)
}

/// `δ(x) = Σ_j {l_j x}`.
pub fn delta(s: &FractalString, x: f64) -> Result<f64> {
    Ok(delta_dd(s, TwoFloat::from(x))?.hi())
}

/// `N(λ) = Σ_j ⌊l_j √λ / π⌋`.
pub fn eigenvalue_count(s: &FractalString, lam: f64) -> Result<u64> {
    if !(lam > 0.0) {
        return Err(Error::Domain(format!("eigenvalue count at λ = {lam}")));
    }
    let x = x_of_lambda(lam);
    let j = cutoff(s, x);
    let mut n = 0u64;
    for k in 1..=j {
        n += floor_frac(s, k, x)?.0 as u64;
    }
    Ok(n)
}

/// `φ(λ) = |Ω| √λ / π` in double-double.
pub fn weyl_term_dd(s: &FractalString, lam: f64) -> Result<TwoFloat> {
    Ok(s.tail_dd(0)? * x_of_lambda(lam))
}

/// `φ(λ) = |Ω| √λ / π`.
pub fn weyl_term(s: &FractalString, lam: f64) -> Result<f64> {
    Ok(weyl_term_dd(s, lam)?.hi())
}

/// `c_{1,D} = 2^{D-1} π^{-D} κ_{1-D} (1-D) ζ(D)`; negative on `(0, 1)`.
pub fn c1d(d: f64) -> Result<f64> {
    if !(d > 0.0 && d < 1.0) {
        return Err(Error::Domain(format!("c_1,D needs D in (0,1), got {d}")));
    }
    Ok(2f64.powf(d - 1.0)
        * std::f64::consts::PI.powf(-d)
        * kappa(1.0 - d)
        * (1.0 - d)
        * zeta(d)?)
}

/// One point of [`mwb_residual_scan`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralRow {
    pub x: f64,
    pub lambda: f64,
    pub delta: f64,
    /// `δ(x) / x^D`
    pub normalized: f64,
    /// `normalized / target - 1`
    pub relative_deviation: f64,
    pub weyl: f64,
    pub count: u64,
    /// `|(φ(λ) - N(λ)) - δ(√λ/π)|`
    pub identity_error: f64,
    /// `(φ(λ) - N(λ)) / λ^{D/2}`
    pub count_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecadeStat {
    pub x_from: f64,
    pub x_to: f64,
    pub points: usize,
    /// Root-mean-square of the relative deviation over the decade.
    pub rms_deviation: f64,
}

/// Residual scan along a geometric `x` grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralReport {
    pub string: String,
    pub d: f64,
    pub l: f64,
    /// `-ζ(D) L^D`
    pub target: f64,
    pub c1d: f64,
    /// `content_formula(L, D)`
    pub content: f64,
    /// `|c_{1,D}| content`, the predicted limit of `count_residual`.
    pub predicted_count_residual: f64,
    pub rows: Vec<SpectralRow>,
    pub decades: Vec<DecadeStat>,
    pub max_identity_error: f64,
    pub identity_pass: bool,
    /// RMS deviation strictly decreasing over the last `trend_decades`.
    pub trend_decades: usize,
    pub trend_monotone: bool,
    pub final_deviation: f64,
    pub notes: Vec<String>,
}

/// Geometric grid of `count` points from `x_min` to `x_max` inclusive.
pub fn geometric_x_grid(x_min: f64, x_max: f64, count: usize) -> Vec<f64> {
    let q = (x_max / x_min).powf(1.0 / (count.max(2) - 1) as f64);
    let mut v: Vec<f64> = (0..count).map(|k| x_min * q.powi(k as i32)).collect();
    if let Some(last) = v.last_mut() {
        *last = x_max;
    }
    v
}

/// Absolute tolerance for the exact identity.
pub const IDENTITY_TOL: f64 = 1e-9;

/// Evaluate `δ(x)/x^D` against `-ζ(D) L^D` and the exact identity on every
/// grid point; in addition summarize the per-decade RMS deviation.
pub fn mwb_residual_scan(
    s: &FractalString,
    xs: &[f64],
    trend_decades: usize,
) -> Result<SpectralReport> {
    let d = s
        .known_d()
        .ok_or_else(|| Error::Domain("spectral scan needs a known dimension".into()))?;
    let l = s
        .known_l()
        .ok_or_else(|| Error::Domain("spectral scan needs a known constant L".into()))?;
    let z = zeta(d)?;
    let target = -z * l.powf(d);
    let c = c1d(d)?;
    let content = content_formula(l, d)?;
    let rows = xs
        .par_iter()
        .map(|&x| {
            let dl = delta(s, x)?;
            let normalized = dl / x.powf(d);
            let lam = (std::f64::consts::PI * x).powi(2);
            let lhs = weyl_term_dd(s, lam)? - eigenvalue_count(s, lam)? as f64;
            let rhs = delta_dd(s, x_of_lambda(lam))?;
            Ok(SpectralRow {
                x,
                lambda: lam,
                delta: dl,
                normalized,
                relative_deviation: normalized / target - 1.0,
                weyl: weyl_term(s, lam)?,
                count: eigenvalue_count(s, lam)?,
                identity_error: (lhs - rhs).abs().hi(),
                count_residual: lhs.hi() / lam.powf(d / 2.0),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut decades: Vec<DecadeStat> = Vec::new();
    if let (Some(first), Some(last)) = (xs.first(), xs.last()) {
        let (k0, k1) = (first.log10().floor() as i32, last.log10().ceil() as i32);
        for k in k0..k1 {
            let (lo, hi) = (10f64.powi(k), 10f64.powi(k + 1));
            let devs: Vec<f64> = rows
                .iter()
                .filter(|r| r.x >= lo && (r.x < hi || (k + 1 == k1 && r.x <= hi)))
                .map(|r| r.relative_deviation)
                .collect();
            if devs.is_empty() {
                continue;
            }
            let rms = (devs.iter().map(|v| v * v).sum::<f64>() / devs.len() as f64).sqrt();
            decades.push(DecadeStat {
                x_from: lo,
                x_to: hi,
                points: devs.len(),
                rms_deviation: rms,
            });
        }
    }
    let tail = &decades[decades.len().saturating_sub(trend_decades)..];
    let trend_monotone = tail.len() == trend_decades
        && tail
            .windows(2)
            .all(|w| w[1].rms_deviation < w[0].rms_deviation);
    let max_identity_error = rows.iter().map(|r| r.identity_error).fold(0.0, f64::max);
    let final_deviation = rows.last().map_or(f64::NAN, |r| r.relative_deviation);
    let notes = vec![format!(
        "c_1,D = {c:.10} is negative while φ - N = δ >= 0; the count residual is compared with |c_1,D| times the content"
    )];
    Ok(SpectralReport {
        string: s.describe(),
        d,
        l,
        target,
        c1d: c,
        content,
        predicted_count_residual: c.abs() * content,
        rows,
        decades,
        max_identity_error,
        identity_pass: max_identity_error <= IDENTITY_TOL,
        trend_decades,
        trend_monotone,
        final_deviation,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn a1() -> FractalString {
        FractalString::a_string(1.0).unwrap()
    }

    #[test]
    fn single_gap() {
        let one = FractalString::explicit(vec![1.0]).unwrap();
        assert!((delta(&one, 2.5).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(delta(&one, 3.0).unwrap(), 0.0);
        assert_eq!(eigenvalue_count(&one, 10.0).unwrap(), 1);
        assert_eq!(eigenvalue_count(&one, 9.0).unwrap(), 0);
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((weyl_term(&one, pi2).unwrap() - 1.0).abs() < 1e-15);
        assert!((weyl_term(&one, 4.0 * pi2).unwrap() - 2.0).abs() < 1e-15);
    }

    /// Exact rational fractional parts `(100 mod j(j+1)) / (j(j+1))`.
    #[test]
    fn a_string_at_100_against_rational_oracle() {
        let mut want = 0.0;
        for j in 1u64..=10_000 {
            let q = j * (j + 1);
            want += (100 % q) as f64 / q as f64;
        }
        // Σ_{j > 10^4} 100/(j(j+1)) = 100/10001
        want += 100.0 / 10_001.0;
        let got = delta(&a1(), 100.0).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        // first few terms: {50}, {16.67}, {8.33}, {5}, {3.33}
        let terms: Vec<f64> = (1..=5)
            .map(|j| floor_frac(&a1(), j, TwoFloat::from(100.0)).unwrap().1.hi())
            .collect();
        let fr = [0.0, 2.0 / 3.0, 1.0 / 3.0, 0.0, 1.0 / 3.0];
        for (t, f) in terms.iter().zip(fr) {
            assert!((t - f).abs() < 1e-15);
        }
    }

    #[test]
    fn weyl_of_a_string() {
        let lam = std::f64::consts::PI.powi(2) * 1e4;
        assert!((weyl_term(&a1(), lam).unwrap() - 100.0).abs() < 1e-12);
    }

    #[test]
    fn identity_at_fixed_lambda() {
        let lam = 1e4 * std::f64::consts::PI.powi(2);
        let lhs = weyl_term_dd(&a1(), lam).unwrap() - eigenvalue_count(&a1(), lam).unwrap() as f64;
        let rhs = delta_dd(&a1(), x_of_lambda(lam)).unwrap();
        assert!((lhs - rhs).abs().hi() < 1e-9);
    }

    #[test]
    fn c1d_properties() {
        for k in 2..=8 {
            assert!(c1d(k as f64 / 10.0).unwrap() < 0.0);
        }
        for d in [0.3, 0.5, 0.7] {
            let lhs = c1d(d).unwrap().abs() * content_formula(1.0, d).unwrap();
            let rhs = zeta(d).unwrap().abs() * std::f64::consts::PI.powf(-d);
            assert!((lhs - rhs).abs() < 1e-10);
        }
        let grid: Vec<f64> = (1..100).map(|k| k as f64 / 100.0).collect();
        for w in grid.windows(2) {
            let (a, b) = (c1d(w[0]).unwrap(), c1d(w[1]).unwrap());
            assert!((a - b).abs() < 0.1, "jump between {} and {}", w[0], w[1]);
        }
        assert!(c1d(1.0).is_err());
    }

    #[test]
    fn large_products_are_refused() {
        let one = FractalString::explicit(vec![1.0]).unwrap();
        assert!(matches!(delta(&one, 1e17), Err(Error::Range(_))));
    }

    #[test]
    fn scan_small() {
        let xs = geometric_x_grid(1e2, 1e5, 16);
        let rep = mwb_residual_scan(&a1(), &xs, 3).unwrap();
        assert!(rep.identity_pass, "{}", rep.max_identity_error);
        assert_eq!(rep.decades.len(), 3);
        assert!((rep.target - 1.460_354_508_809_586_8).abs() < 1e-10);
        assert!(rep.final_deviation.abs() < 0.05);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn identity_and_bounds(e in 2.0f64..7.0, which in 0usize..3) {
            let s = [a1(), FractalString::power(1.0, 0.5).unwrap(),
                     FractalString::cantor(1.0 / 3.0).unwrap()][which].clone();
            let lam = 10f64.powf(e);
            let x = x_of_lambda(lam);
            let lhs = weyl_term_dd(&s, lam).unwrap() - eigenvalue_count(&s, lam).unwrap() as f64;
            let rhs = delta_dd(&s, x).unwrap();
            prop_assert!((lhs - rhs).abs().hi() <= IDENTITY_TOL);
            let dv = rhs.hi();
            let j = cutoff(&s, x) as f64;
            prop_assert!(dv >= 0.0);
            prop_assert!(dv < j + 1.0 + x.hi() * s.tail(j as usize).unwrap());
        }

        #[test]
        fn count_is_monotone(e in 1.0f64..8.0, f in 1.0f64..2.0) {
            let s = a1();
            let lam = 10f64.powf(e);
            prop_assert!(eigenvalue_count(&s, lam * f).unwrap() >= eigenvalue_count(&s, lam).unwrap());
        }
    }
}
