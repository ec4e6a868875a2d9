//! Parallel sets of rasterized sets. The set `A` is the finite set of masked
//! cell centres; distances come from an exact Euclidean distance transform.

mod analyze;
mod contour;
pub mod edt;
pub mod ifs;
pub mod io;

pub use analyze::{analyze_set, box_count_dimension, VoxelConfig, VoxelReport, VoxelSample};
pub use ifs::{rasterize, AffineMap, IfsSpec, RasterOptions, Seed, DEFAULT_CELL_BUDGET};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary occupancy on a regular isotropic grid, row-major with the last axis
/// fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    dims: Vec<usize>,
    spacing: f64,
    origin: Vec<f64>,
    mask: Vec<bool>,
}

impl VoxelGrid {
    pub fn new(dims: Vec<usize>, spacing: f64, mask: Vec<bool>) -> Result<Self> {
        if !(2..=3).contains(&dims.len()) {
            return Err(Error::Domain(format!(
                "voxel grids are 2- or 3-dimensional, got {} axes",
                dims.len()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::Domain("grid extents must be positive".into()));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::Domain(format!("spacing must be positive, got {spacing}")));
        }
        let cells: usize = dims.iter().product();
        if mask.len() != cells {
            return Err(Error::Domain(format!(
                "mask has {} cells, extents need {cells}",
                mask.len()
            )));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::Domain("mask is empty".into()));
        }
        let origin = vec![0.0; dims.len()];
        Ok(Self {
            dims,
            spacing,
            origin,
            mask,
        })
    }

    /// Grid holding the given points, each in the cell containing it, with
    /// `padding` empty cells around their bounding box.
    pub fn from_points(points: &[Vec<f64>], spacing: f64, padding: usize) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::Domain("no points given".into()))?;
        let nd = first.len();
        if points.iter().any(|p| p.len() != nd) {
            return Err(Error::Domain("points of mixed dimension".into()));
        }
        let idx: Vec<Vec<i64>> = points
            .iter()
            .map(|p| p.iter().map(|x| (x / spacing).floor() as i64).collect())
            .collect();
        let lo: Vec<i64> = (0..nd).map(|k| idx.iter().map(|c| c[k]).min().unwrap()).collect();
        let hi: Vec<i64> = (0..nd).map(|k| idx.iter().map(|c| c[k]).max().unwrap()).collect();
        let dims: Vec<usize> = (0..nd)
            .map(|k| (hi[k] - lo[k]) as usize + 1 + 2 * padding)
            .collect();
        let mut mask = vec![false; dims.iter().product()];
        for c in &idx {
            let mut e = 0;
            for k in 0..nd {
                e = e * dims[k] + (c[k] - lo[k]) as usize + padding;
            }
            mask[e] = true;
        }
        let mut g = Self::new(dims, spacing, mask)?;
        g.origin = (0..nd)
            .map(|k| (lo[k] - padding as i64) as f64 * spacing)
            .collect();
        Ok(g)
    }

    pub fn with_origin(mut self, origin: Vec<f64>) -> Result<Self> {
        if origin.len() != self.dims.len() {
            return Err(Error::Domain("origin has the wrong dimension".into()));
        }
        self.origin = origin;
        Ok(self)
    }

    /// Surround the grid with `cells` empty cells on every side.
    pub fn padded(&self, cells: usize) -> Self {
        let dims: Vec<usize> = self.dims.iter().map(|n| n + 2 * cells).collect();
        let mut mask = vec![false; dims.iter().product()];
        for (e, &m) in self.mask.iter().enumerate() {
            if m {
                let c = self.coords(e);
                let mut t = 0;
                for k in 0..dims.len() {
                    t = t * dims[k] + c[k] + cells;
                }
                mask[t] = true;
            }
        }
        let origin = self
            .origin
            .iter()
            .map(|o| o - cells as f64 * self.spacing)
            .collect();
        Self {
            dims,
            spacing: self.spacing,
            origin,
            mask,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn cells(&self) -> usize {
        self.mask.len()
    }

    pub fn occupied(&self) -> usize {
        self.mask.par_iter().filter(|&&m| m).count()
    }

    fn coords(&self, mut e: usize) -> Vec<usize> {
        let mut c = vec![0; self.dims.len()];
        for k in (0..self.dims.len()).rev() {
            c[k] = e % self.dims[k];
            e /= self.dims[k];
        }
        c
    }

    /// Inclusive cell-index bounding box of the mask.
    pub fn bounding_box(&self) -> (Vec<usize>, Vec<usize>) {
        let nd = self.dims.len();
        let init = || (vec![usize::MAX; nd], vec![0usize; nd]);
        self.mask
            .par_iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .fold(init, |(mut lo, mut hi), (e, _)| {
                for (k, c) in self.coords(e).into_iter().enumerate() {
                    lo[k] = lo[k].min(c);
                    hi[k] = hi[k].max(c);
                }
                (lo, hi)
            })
            .reduce(init, |(a, b), (c, d)| {
                (
                    a.iter().zip(&c).map(|(x, y)| *x.min(y)).collect(),
                    b.iter().zip(&d).map(|(x, y)| *x.max(y)).collect(),
                )
            })
    }

    /// Largest side of the mask's bounding box, in length units.
    pub fn extent(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        let side = lo.iter().zip(&hi).map(|(a, b)| b - a + 1).max().unwrap_or(0);
        side as f64 * self.spacing
    }

    /// Distance from the mask's bounding box to the nearest grid face.
    pub fn margin(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        let m = (0..self.dims.len())
            .map(|k| lo[k].min(self.dims[k] - 1 - hi[k]))
            .min()
            .unwrap_or(0);
        m as f64 * self.spacing
    }

    pub fn distance_transform(&self) -> DistanceField {
        let sq = edt::squared_distance(&self.mask, &self.dims);
        let mut order: Vec<u32> = (0..sq.len() as u32).collect();
        order.par_sort_unstable_by_key(|&e| (sq[e as usize], e));
        let sorted = order.par_iter().map(|&e| sq[e as usize]).collect();
        DistanceField {
            dims: self.dims.clone(),
            spacing: self.spacing,
            sq,
            sorted,
            order,
            estimator: VolumeEstimator::CellCount,
        }
    }
}

/// Surface estimator for [`DistanceField::parallel_surface`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceMethod {
    /// Central difference of the volume over `max(2 cells, r/50)`.
    #[default]
    Derivative,
    /// Marching-squares length of the level set `{dist = r}` (2-D only).
    Contour,
}

/// How cells are turned into the volume of `{dist <= r}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VolumeEstimator {
    /// Cells with `dist <= r`, times the cell volume.
    #[default]
    CellCount,
    /// Each cell near the level `r` counts the fraction of its area where
    /// the distance, linearized with the local gradient, is at most `r`
    /// (in 3-D the gradient is taken along an axis). Continuous in `r`;
    /// straight edges advance smoothly instead of a whole row at a time.
    Coverage,
}

/// Distances to the nearest masked cell centre.
#[derive(Debug, Clone)]
pub struct DistanceField {
    dims: Vec<usize>,
    spacing: f64,
    /// Squared distances in cell units.
    sq: Vec<i64>,
    sorted: Vec<i64>,
    /// Cell indices in the order of `sorted`.
    order: Vec<u32>,
    estimator: VolumeEstimator,
}

/// Area of `{g·x <= t}` inside the unit cell centred at 0, for a unit
/// vector `g` with components of magnitude `a >= b`.
fn cell_fraction(t: f64, a: f64, b: f64) -> f64 {
    let (hi, lo) = (0.5 * (a + b), 0.5 * (a - b));
    if t <= -hi {
        0.0
    } else if t >= hi {
        1.0
    } else if t <= -lo {
        (t + hi).powi(2) / (2.0 * a * b)
    } else if t < lo {
        0.5 + t / a
    } else {
        1.0 - (hi - t).powi(2) / (2.0 * a * b)
    }
}

impl DistanceField {
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn with_estimator(mut self, estimator: VolumeEstimator) -> Self {
        self.estimator = estimator;
        self
    }

    pub fn estimator(&self) -> VolumeEstimator {
        self.estimator
    }

    /// Distance at flat index `e`.
    pub fn distance(&self, e: usize) -> f64 {
        (self.sq[e] as f64).sqrt() * self.spacing
    }

    /// Squared distances in cell units.
    pub fn squared_cells(&self) -> &[i64] {
        &self.sq
    }

    pub fn max_distance(&self) -> f64 {
        (*self.sorted.last().unwrap() as f64).sqrt() * self.spacing
    }

    /// Cells with squared distance at most `t^2` (cell units).
    fn count_within(&self, t: f64) -> usize {
        if t < 0.0 {
            return 0;
        }
        // guard against rounding just below an integer squared radius
        let k = (t * t * (1.0 + 1e-12)).floor() as i64;
        self.sorted.partition_point(|&x| x <= k)
    }

    fn volume_unchecked(&self, r: f64) -> f64 {
        let t = r / self.spacing;
        let cells = match self.estimator {
            VolumeEstimator::CellCount => self.count_within(t) as f64,
            VolumeEstimator::Coverage => {
                let w = if self.dims.len() == 2 {
                    std::f64::consts::FRAC_1_SQRT_2
                } else {
                    0.5
                };
                let full = self.count_within(t - w);
                let k = (t + w).powi(2);
                let end = self.sorted.partition_point(|&x| (x as f64) < k);
                let band: f64 = self.order[full..end]
                    .iter()
                    .map(|&e| self.coverage(e as usize, t))
                    .sum();
                full as f64 + band
            }
        };
        cells * self.spacing.powi(self.dims.len() as i32)
    }

    fn dist_cells(&self, e: usize) -> f64 {
        (self.sq[e] as f64).sqrt()
    }

    /// Fraction of cell `e` within distance `t` (cell units).
    fn coverage(&self, e: usize, t: f64) -> f64 {
        let dt = t - self.dist_cells(e);
        if self.dims.len() != 2 {
            return (0.5 + dt).clamp(0.0, 1.0);
        }
        let cols = self.dims[1];
        let (i, j) = (e / cols, e % cols);
        let diff = |lo: usize, hi: usize, span: usize| {
            (self.dist_cells(hi) - self.dist_cells(lo)) / span as f64
        };
        let gx = match (j > 0, j + 1 < cols) {
            (true, true) => diff(e - 1, e + 1, 2),
            (false, true) => diff(e, e + 1, 1),
            (true, false) => diff(e - 1, e, 1),
            _ => 0.0,
        };
        let gy = match (i > 0, i + 1 < self.dims[0]) {
            (true, true) => diff(e - cols, e + cols, 2),
            (false, true) => diff(e, e + cols, 1),
            (true, false) => diff(e - cols, e, 1),
            _ => 0.0,
        };
        let norm = gx.hypot(gy);
        if norm < 1e-12 {
            return (0.5 + dt).clamp(0.0, 1.0);
        }
        let (p, q) = ((gx / norm).abs(), (gy / norm).abs());
        let (a, b) = if p >= q { (p, q) } else { (q, p) };
        if b < 1e-9 {
            return (0.5 + dt / a).clamp(0.0, 1.0);
        }
        cell_fraction(dt, a, b)
    }

    /// `V(r)` from the field's [`VolumeEstimator`]; by default the number of
    /// cells within distance `r`, times the cell volume.
    pub fn parallel_volume(&self, r: f64) -> Result<f64> {
        let max = self.max_distance();
        if !(r > 0.0 && r < max) {
            return Err(Error::OutOfRange { x: r, max });
        }
        Ok(self.volume_unchecked(r))
    }

    /// Surface area of `{dist <= r}`. Needs `r` at least 3 cells away from
    /// 0 and from the field maximum.
    pub fn parallel_surface(&self, r: f64, method: SurfaceMethod) -> Result<f64> {
        let min = 3.0 * self.spacing;
        let max = self.max_distance();
        if !(r >= min) {
            return Err(Error::SubResolution { r, min });
        }
        if r > max - min {
            return Err(Error::OutOfRange { x: r, max: max - min });
        }
        match method {
            SurfaceMethod::Derivative => {
                let h = (2.0 * self.spacing).max(r / 50.0);
                Ok((self.volume_unchecked(r + h) - self.volume_unchecked(r - h)) / (2.0 * h))
            }
            SurfaceMethod::Contour => {
                if self.dims.len() != 2 {
                    return Err(Error::Domain("contour surfaces need a 2-D grid".into()));
                }
                Ok(contour::level_length(&self.sq, self.dims[0], self.dims[1], r / self.spacing)
                    * self.spacing)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn point(n: usize, h: f64) -> VoxelGrid {
        let mut mask = vec![false; n * n];
        mask[(n / 2) * n + n / 2] = true;
        VoxelGrid::new(vec![n, n], h, mask).unwrap()
    }

    #[test]
    fn validation() {
        assert!(VoxelGrid::new(vec![4, 4], 1.0, vec![false; 16]).is_err());
        assert!(VoxelGrid::new(vec![4, 4], 0.0, vec![true; 16]).is_err());
        assert!(VoxelGrid::new(vec![4, 4], 1.0, vec![true; 15]).is_err());
        assert!(VoxelGrid::new(vec![16], 1.0, vec![true; 16]).is_err());
    }

    #[test]
    fn single_point_disc_and_circle() {
        let h = 0.01;
        let f = point(129, h).distance_transform();
        let r = 10.0 * h;
        let v = f.parallel_volume(r).unwrap();
        // Gauss circle count: lattice points with i² + j² <= 100
        let mut count = 0;
        for i in -10i64..=10 {
            for j in -10i64..=10 {
                count += (i * i + j * j <= 100) as usize;
            }
        }
        assert_eq!(v, count as f64 * h * h);
        assert!((v / (PI * r * r) - 1.0).abs() < 0.05);
        let r = 20.0 * h;
        for m in [SurfaceMethod::Derivative, SurfaceMethod::Contour] {
            let s = f.parallel_surface(r, m).unwrap();
            assert!((s / (2.0 * PI * r) - 1.0).abs() < 0.05, "{m:?} {s}");
        }
        assert!(matches!(
            f.parallel_surface(2.0 * h, SurfaceMethod::Derivative),
            Err(Error::SubResolution { .. })
        ));
        assert!(f.parallel_volume(10.0).is_err());
    }

    #[test]
    fn full_square_steiner() {
        let (n, pad) = (200, 60);
        let g = VoxelGrid::new(vec![n, n], 1.0 / n as f64, vec![true; n * n])
            .unwrap()
            .padded(pad);
        let f = g.distance_transform();
        let side = 1.0;
        let mut last = 0.0;
        for k in [5.0, 10.0, 20.0, 40.0] {
            let r = k / n as f64;
            let v = f.parallel_volume(r).unwrap();
            assert!(v >= side * side && v >= last);
            last = v;
            for m in [SurfaceMethod::Derivative, SurfaceMethod::Contour] {
                let s = f.parallel_surface(r, m).unwrap();
                let want = 4.0 * side + 2.0 * PI * r;
                assert!((s / want - 1.0).abs() < 0.05, "{m:?} r={r} {s} vs {want}");
            }
        }
    }

    #[test]
    fn cell_fraction_is_a_distribution() {
        for (a, b) in [(1.0, 0.0001), (0.8, 0.6), (FRAC_1_SQRT_2, FRAC_1_SQRT_2)] {
            let mut last = 0.0;
            let n = 2000;
            let mut mean = 0.0;
            for k in 0..=n {
                let t = -1.0 + 2.0 * k as f64 / n as f64;
                let f = cell_fraction(t, a, b);
                assert!(f >= last - 1e-15 && (0.0..=1.0).contains(&f));
                mean += f / (n + 1) as f64;
                last = f;
            }
            // symmetric about t = 0
            assert!((cell_fraction(0.1, a, b) + cell_fraction(-0.1, a, b) - 1.0).abs() < 1e-12);
            assert!((mean - 0.5).abs() < 1e-3);
        }
    }

    #[test]
    fn coverage_volume() {
        let n = 100;
        let g = VoxelGrid::new(vec![n, n], 1.0, vec![true; n * n])
            .unwrap()
            .padded(30);
        let f = g.distance_transform().with_estimator(VolumeEstimator::Coverage);
        // straight edges grow linearly between integer radii
        let (a, b) = (f.parallel_volume(10.2).unwrap(), f.parallel_volume(10.7).unwrap());
        let perimeter = 400.0 + 2.0 * PI * 10.45;
        assert!(((b - a) / 0.5 / perimeter - 1.0).abs() < 0.02, "{a} {b}");
        let count = g.distance_transform();
        assert_eq!(count.parallel_volume(10.01), count.parallel_volume(10.04));
        let mut last = 0.0;
        for k in 1..200 {
            let v = f.parallel_volume(k as f64 * 0.1).unwrap();
            assert!(v >= last);
            last = v;
        }
        let p = point(129, 1.0).distance_transform().with_estimator(VolumeEstimator::Coverage);
        let r = 20.3;
        assert!((p.parallel_volume(r).unwrap() / (PI * r * r) - 1.0).abs() < 0.01);
    }

    #[test]
    fn two_far_points_are_disjoint_discs() {
        let h = 1.0;
        let pts = vec![vec![0.5, 0.5], vec![40.5, 0.5]];
        let g = VoxelGrid::from_points(&pts, h, 30).unwrap();
        assert_eq!(g.occupied(), 2);
        let f = g.distance_transform();
        let single = point(61, h).distance_transform();
        for r in [3.0, 7.5, 12.0, 19.9] {
            assert_eq!(
                f.parallel_volume(r).unwrap(),
                2.0 * single.parallel_volume(r).unwrap()
            );
        }
    }

    #[test]
    fn geometry_helpers() {
        let g = point(21, 0.5).padded(4);
        assert_eq!(g.dims(), &[29, 29]);
        assert_eq!(g.extent(), 0.5);
        assert_eq!(g.margin(), 14.0 * 0.5);
        assert_eq!(g.origin(), &[-2.0, -2.0]);
    }

    #[test]
    fn three_dimensional_ball() {
        let n = 41;
        let mut mask = vec![false; n * n * n];
        mask[(20 * n + 20) * n + 20] = true;
        let f = VoxelGrid::new(vec![n, n, n], 1.0, mask)
            .unwrap()
            .distance_transform();
        let r = 12.0;
        let v = f.parallel_volume(r).unwrap();
        assert!((v / (4.0 / 3.0 * PI * r.powi(3)) - 1.0).abs() < 0.02);
        let s = f.parallel_surface(r, SurfaceMethod::Derivative).unwrap();
        assert!((s / (4.0 * PI * r * r) - 1.0).abs() < 0.05);
    }
}
