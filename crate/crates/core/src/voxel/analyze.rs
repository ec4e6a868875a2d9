//! Content brackets, transfer inequalities and dimensions for a voxel set.

use rayon::prelude::*;
use serde::Serialize;

use super::{DistanceField, SurfaceMethod, VolumeEstimator, VoxelGrid};
use crate::error::{Error, Result};
use crate::kneser::{DensityReport, KneserReport, SampledKneser};
use crate::limits::{
    check_content_inequalities, check_two_sided_transfer, dimension_estimate,
    surface_dimension_estimate, BracketConfig, CheckReport, DimensionEstimate, DimensionMethod,
    Grid, GridInfo, SurfaceSource, VolumeSurface,
};

/// Settings for [`analyze_set`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VoxelConfig {
    /// Smallest radius, in cells.
    pub r_min_cells: f64,
    /// Largest radius as a fraction of the set's extent (also capped by the
    /// empty margin of the grid).
    pub r_max_fraction: f64,
    /// Explicit window, overriding the two settings above. Must lie inside
    /// the trustworthy window.
    pub r_range: Option<(f64, f64)>,
    pub points: usize,
    /// Fewer distinct volume levels than this is an error.
    pub min_usable: usize,
    /// Slack for the content inequalities.
    pub slack: f64,
    /// Slack for `limsup S/r^{d-s-1} <= d limsup V/r^{d-s}`.
    pub bound_slack: f64,
    /// The centre set must have measure below this fraction of `V(r_min)`.
    pub v0_fraction: f64,
    pub kneser_slack: f64,
    pub density_slack: f64,
    /// Allowed `|dim_M - dim_S|`.
    pub dim_tol: f64,
    pub volume: VolumeEstimator,
    pub surface: SurfaceMethod,
    /// Also compute the contour surface at every radius (2-D).
    pub contour_diagnostic: bool,
    pub dimension_method: DimensionMethod,
    /// Brackets and dimension fits use the small-`r` fraction `window` of
    /// the radii.
    pub bracket: BracketConfig,
}

impl Default for VoxelConfig {
    fn default() -> Self {
        Self {
            r_min_cells: 5.0,
            r_max_fraction: 0.2,
            r_range: None,
            points: 64,
            min_usable: 12,
            slack: 0.10,
            bound_slack: 0.10,
            v0_fraction: 0.01,
            kneser_slack: 1e-3,
            density_slack: 1e-2,
            dim_tol: 0.05,
            volume: VolumeEstimator::Coverage,
            surface: SurfaceMethod::Derivative,
            contour_diagnostic: false,
            dimension_method: DimensionMethod::Regression,
            bracket: BracketConfig {
                window: 0.5,
                slack: 0.10,
                ..BracketConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VoxelSample {
    pub r: f64,
    pub volume: f64,
    pub surface: f64,
    pub contour: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VoxelReport {
    pub d: usize,
    pub s: f64,
    pub dims: Vec<usize>,
    pub cell: f64,
    pub extent: f64,
    pub occupied_cells: usize,
    pub grid: GridInfo,
    pub usable_radii: usize,
    /// Measure of the centre set, zero.
    pub volume_at_zero: f64,
    pub volume_at_zero_ok: bool,
    /// Area of the occupied cells over `V(r_min)`; informational.
    pub mask_fraction: f64,
    pub volume_estimator: VolumeEstimator,
    pub surface_method: SurfaceMethod,
    pub samples: Vec<VoxelSample>,
    /// Upper and lower content inequalities.
    pub content: CheckReport,
    /// Surface-over-volume bound, absent at `s = d`.
    pub bound: Option<CheckReport>,
    pub dim_m: DimensionEstimate,
    pub dim_s: Option<DimensionEstimate>,
    /// `|dim_M - dim_S| <= dim_tol`, absent at `s = d`.
    pub dims_agree: Option<bool>,
    pub box_count_dimension: Option<f64>,
    pub kneser: KneserReport,
    pub density: DensityReport,
    pub pass: bool,
    pub notes: Vec<String>,
}

/// Box-counting dimension by least squares on `ln N` against `ln(1/side)`.
/// Sides run from 4 cells to a quarter of the extent, restricted to divisors
/// of the extent when there are at least three.
pub fn box_count_dimension(g: &VoxelGrid) -> Option<f64> {
    let (lo, hi) = g.bounding_box();
    let ext = lo.iter().zip(&hi).map(|(a, b)| b - a + 1).max()?;
    let nd = g.ndim();
    let dims = g.dims();
    let cells: Vec<Vec<usize>> = g
        .mask()
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(mut e, _)| {
            let mut c = vec![0; nd];
            for k in (0..nd).rev() {
                c[k] = e % dims[k] - lo[k];
                e /= dims[k];
            }
            c
        })
        .collect();
    // sides dividing the extent tile it exactly; otherwise a ratio-1.5 ladder
    let mut sizes: Vec<usize> = (4..=ext / 4).filter(|s| ext % s == 0).collect();
    if sizes.len() < 3 {
        sizes.clear();
        let mut s = 4.0f64;
        while s <= ext as f64 / 4.0 {
            let si = s.round() as usize;
            if sizes.last() != Some(&si) {
                sizes.push(si);
            }
            s *= 1.5;
        }
    }
    if sizes.len() < 3 {
        return None;
    }
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for &side in &sizes {
        let per = ext.div_ceil(side);
        let mut boxes: Vec<usize> = cells
            .iter()
            .map(|c| c.iter().fold(0, |acc, &v| acc * per + v / side))
            .collect();
        boxes.sort_unstable();
        boxes.dedup();
        x.push(-(side as f64).ln());
        y.push((boxes.len() as f64).ln());
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    Some(sxy / sxx)
}

fn window(g: &VoxelGrid, f: &DistanceField, cfg: &VoxelConfig) -> Result<(f64, f64)> {
    let h = g.spacing();
    let lo = cfg.r_min_cells * h;
    // keep r + max(2 cells, r/50) clear of the grid faces
    let room = (g.margin() - h).min(f.max_distance() - 3.0 * h);
    let hi = (cfg.r_max_fraction * g.extent()).min(room / 1.02).min(room - 2.0 * h);
    match cfg.r_range {
        None => Ok((lo, hi)),
        Some((a, b)) => {
            if a < lo * (1.0 - 1e-12) || b > hi * (1.0 + 1e-12) || !(a < b) {
                Err(Error::Range(format!(
                    "radii [{a}, {b}] leave the trustworthy window [{lo}, {hi}]"
                )))
            } else {
                Ok((a, b))
            }
        }
    }
}

/// Brackets, content inequalities, Minkowski and S-dimensions, the surface
/// bound and Kneser checks for the centre set of `g` at exponent `s`.
pub fn analyze_set(g: &VoxelGrid, s: f64, cfg: &VoxelConfig) -> Result<VoxelReport> {
    let d = g.ndim();
    let df = d as f64;
    if !(s >= 0.0 && s <= df) {
        return Err(Error::Domain(format!("target exponent {s} outside [0, {d}]")));
    }
    let field = g.distance_transform().with_estimator(cfg.volume);
    let (lo, hi) = window(g, &field, cfg)?;
    if !(hi > lo) {
        return Err(Error::WindowTooNarrow {
            usable: 0,
            needed: cfg.min_usable,
        });
    }
    let grid = Grid::between(lo, hi, cfg.points.max(2))?;
    let mut levels: Vec<f64> = grid
        .radii()
        .iter()
        .map(|&r| field.parallel_volume(r))
        .collect::<Result<_>>()?;
    levels.dedup();
    if levels.len() < cfg.min_usable {
        return Err(Error::WindowTooNarrow {
            usable: levels.len(),
            needed: cfg.min_usable,
        });
    }

    let mut notes = Vec::new();
    let samples = grid
        .radii()
        .par_iter()
        .map(|&r| {
            Ok(VoxelSample {
                r,
                volume: field.parallel_volume(r)?,
                surface: field.parallel_surface(r, cfg.surface)?,
                contour: if cfg.contour_diagnostic && d == 2 {
                    Some(field.parallel_surface(r, SurfaceMethod::Contour)?)
                } else {
                    None
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let vol: Vec<f64> = samples.iter().map(|p| p.volume).collect();
    // the checks below revisit the grid radii; serve them from the samples
    let lookup = |r: f64| {
        samples
            .binary_search_by(|p| r.total_cmp(&p.r))
            .ok()
            .map(|k| &samples[k])
    };
    let volume = |r: f64| match lookup(r) {
        Some(p) => Ok(p.volume),
        None => field.parallel_volume(r),
    };
    let surface = |r: f64| match lookup(r) {
        Some(p) => Ok(p.surface),
        None => field.parallel_surface(r, cfg.surface),
    };
    let pair = VolumeSurface {
        volume: &volume,
        surface: &surface,
        source: match cfg.surface {
            SurfaceMethod::Derivative => SurfaceSource::FiniteDifference,
            SurfaceMethod::Contour => SurfaceSource::Contour,
        },
    };

    let volume_at_zero = 0.0;
    let volume_at_zero_ok = volume_at_zero < cfg.v0_fraction * vol[vol.len() - 1];
    let mask_fraction =
        g.occupied() as f64 * g.spacing().powi(d as i32) / vol[vol.len() - 1];

    let bcfg = BracketConfig {
        slack: cfg.slack,
        ..cfg.bracket.clone()
    };
    let content = check_content_inequalities(&pair, df, s, volume_at_zero_ok, &grid, &bcfg)?;
    let dim_m = dimension_estimate(&volume, df, &grid, &bcfg, cfg.dimension_method)?;
    let (bound, dim_s, dims_agree) = if s < df {
        let b = check_two_sided_transfer(
            &pair,
            df,
            df - s,
            &grid,
            &BracketConfig {
                slack: cfg.bound_slack,
                ..bcfg.clone()
            },
        )?;
        let ds = surface_dimension_estimate(&surface, df, &grid, &bcfg, cfg.dimension_method)?;
        let agree = (dim_m.point - ds.point).abs() <= cfg.dim_tol;
        (Some(b), Some(ds), Some(agree))
    } else {
        notes.push("s = d: S-content checks and the S-dimension are skipped".into());
        (None, None, None)
    };

    let mut r_dec = grid.radii().to_vec();
    let mut v_dec = vol.clone();
    // Grid::between already runs from r_max down to r_min
    if r_dec.first() < r_dec.last() {
        r_dec.reverse();
        v_dec.reverse();
    }
    let sampled = SampledKneser::new(d as u32, r_dec, v_dec, "voxel volume function")?;
    let kneser = sampled.check_kneser_property(cfg.kneser_slack);
    let density = sampled.check_density_monotone(cfg.density_slack);

    let pass = content.pass
        && bound.as_ref().is_none_or(|b| b.pass)
        && dims_agree.unwrap_or(true)
        && kneser.pass
        && density.pass;
    Ok(VoxelReport {
        d,
        s,
        dims: g.dims().to_vec(),
        cell: g.spacing(),
        extent: g.extent(),
        occupied_cells: g.occupied(),
        grid: grid.info(),
        usable_radii: levels.len(),
        volume_at_zero,
        volume_at_zero_ok,
        mask_fraction,
        volume_estimator: cfg.volume,
        surface_method: cfg.surface,
        samples,
        content,
        bound,
        dim_m,
        dim_s,
        dims_agree,
        box_count_dimension: box_count_dimension(g),
        kneser,
        density,
        pass,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxel::{rasterize, IfsSpec, RasterOptions};

    #[test]
    fn solid_disc() {
        let n = 200;
        let c = (n as f64 - 1.0) / 2.0;
        let mask: Vec<bool> = (0..n * n)
            .map(|e| {
                let (i, j) = ((e / n) as f64, (e % n) as f64);
                (i - c).powi(2) + (j - c).powi(2) <= (0.5 * n as f64).powi(2)
            })
            .collect();
        let g = VoxelGrid::new(vec![n, n], 1.0 / n as f64, mask)
            .unwrap()
            .padded(50);
        let rep = analyze_set(&g, 2.0, &VoxelConfig::default()).unwrap();
        // the collar 2πRr keeps the fitted slope away from 0 inside the window
        assert!(rep.dim_m.point > 1.75 && rep.dim_m.point <= 2.0, "{:?}", rep.dim_m);
        assert!(rep.dim_s.is_none() && rep.bound.is_none() && rep.dims_agree.is_none());
        let m = &rep.content.brackets["minkowski"];
        let area = std::f64::consts::PI * 0.25;
        assert!(m.liminf_est > area && m.liminf_est < 1.15 * area, "{m:?}");
        assert!(rep.pass, "{:?} {:?} {:?}", rep.content.assertions, rep.kneser, rep.density);
    }

    #[test]
    fn too_narrow() {
        let g = rasterize(&IfsSpec::cantor_dust(3), &RasterOptions {
            resolution: 64,
            padding: 0.01,
            ..RasterOptions::default()
        })
        .unwrap();
        assert!(matches!(
            analyze_set(&g, 1.26, &VoxelConfig::default()),
            Err(Error::WindowTooNarrow { .. })
        ));
    }

    #[test]
    fn box_counting_of_the_dust() {
        let g = rasterize(&IfsSpec::cantor_dust(6), &RasterOptions {
            resolution: 729,
            ..RasterOptions::default()
        })
        .unwrap();
        let dim = box_count_dimension(&g).unwrap();
        assert!((dim - 4f64.ln() / 3f64.ln()).abs() < 0.02, "{dim}");
    }

    #[test]
    fn explicit_window_is_validated() {
        let g = rasterize(&IfsSpec::cantor_dust(5), &RasterOptions {
            resolution: 243,
            ..RasterOptions::default()
        })
        .unwrap();
        let cfg = VoxelConfig {
            r_range: Some((1.0 / 243.0, 0.1)),
            ..VoxelConfig::default()
        };
        assert!(matches!(analyze_set(&g, 1.26, &cfg), Err(Error::Range(_))));
    }
}
