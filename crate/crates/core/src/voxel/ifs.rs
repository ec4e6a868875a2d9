//! Planar iterated function systems, rasterized by depth-limited recursion.

use serde::{Deserialize, Serialize};

use super::VoxelGrid;
use crate::error::{Error, Result};

/// Refuse grids above this many cells (about 1 GB of working memory).
pub const DEFAULT_CELL_BUDGET: usize = 40_000_000;
/// Refuse recursions with more leaf images than this.
pub const LEAF_BUDGET: u64 = 200_000_000;

/// `(x, y) -> (a x + b y + e, c x + d y + f)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineMap {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

impl AffineMap {
    pub fn similarity(scale: f64, e: f64, f: f64) -> Self {
        Self {
            a: scale,
            b: 0.0,
            c: 0.0,
            d: scale,
            e,
            f,
        }
    }

    fn identity() -> Self {
        Self::similarity(1.0, 0.0, 0.0)
    }

    /// Largest singular value of the linear part.
    pub fn operator_norm(&self) -> f64 {
        let (a, b, c, d) = (self.a, self.b, self.c, self.d);
        let p = a * a + c * c;
        let q = a * b + c * d;
        let r = b * b + d * d;
        let mid = 0.5 * (p + r);
        let rad = (0.25 * (p - r).powi(2) + q * q).sqrt();
        (mid + rad).sqrt()
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.a * x + self.b * y + self.e,
            self.c * x + self.d * y + self.f,
        )
    }

    /// `self ∘ other`.
    fn then_inner(&self, other: &Self) -> Self {
        Self {
            a: self.a * other.a + self.b * other.c,
            b: self.a * other.b + self.b * other.d,
            c: self.c * other.a + self.d * other.c,
            d: self.c * other.b + self.d * other.d,
            e: self.a * other.e + self.b * other.f + self.e,
            f: self.c * other.e + self.d * other.f + self.f,
        }
    }
}

/// Shape whose iterated images are rasterized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Seed {
    /// The unit square `[0, 1]^2`.
    #[default]
    Square,
    Point([f64; 2]),
}

impl Seed {
    fn corners(&self) -> Vec<(f64, f64)> {
        match *self {
            Seed::Square => vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)],
            Seed::Point([x, y]) => vec![(x, y)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IfsSpec {
    pub maps: Vec<AffineMap>,
    pub depth: u32,
    #[serde(default)]
    pub seed: Seed,
}

impl IfsSpec {
    /// Eight maps of ratio 1/3, the centre omitted.
    pub fn sierpinski_carpet(depth: u32) -> Self {
        let mut maps = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                if (i, j) != (1, 1) {
                    maps.push(AffineMap::similarity(1.0 / 3.0, i as f64 / 3.0, j as f64 / 3.0));
                }
            }
        }
        Self {
            maps,
            depth,
            seed: Seed::Square,
        }
    }

    /// Product of two middle-thirds Cantor sets.
    pub fn cantor_dust(depth: u32) -> Self {
        let t = 2.0 / 3.0;
        let maps = [(0.0, 0.0), (t, 0.0), (0.0, t), (t, t)]
            .into_iter()
            .map(|(e, f)| AffineMap::similarity(1.0 / 3.0, e, f))
            .collect();
        Self {
            maps,
            depth,
            seed: Seed::Square,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.maps.is_empty() {
            return Err(Error::Domain("IFS without maps".into()));
        }
        for (index, m) in self.maps.iter().enumerate() {
            let norm = m.operator_norm();
            if !(norm < 1.0) {
                return Err(Error::Contraction { index, norm });
            }
        }
        Ok(())
    }

    /// Similarity dimension when every map is a similarity of one ratio.
    pub fn similarity_dimension(&self) -> Option<f64> {
        let r = self.maps.first()?.operator_norm();
        let uniform = self.maps.iter().all(|m| {
            (m.operator_norm() - r).abs() < 1e-12
                && ((m.a * m.d - m.b * m.c).abs() - r * r).abs() < 1e-12
        });
        uniform.then(|| (self.maps.len() as f64).ln() / (1.0 / r).ln())
    }

    fn for_each_leaf(&self, visit: &mut dyn FnMut(&AffineMap)) {
        fn rec(spec: &IfsSpec, acc: AffineMap, level: u32, visit: &mut dyn FnMut(&AffineMap)) {
            if level == spec.depth {
                visit(&acc);
                return;
            }
            for m in &spec.maps {
                rec(spec, acc.then_inner(m), level + 1, visit);
            }
        }
        rec(self, AffineMap::identity(), 0, visit);
    }

    fn leaf_bounds(&self, m: &AffineMap) -> [f64; 4] {
        let mut b = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
        for (x, y) in self.seed.corners() {
            let (u, v) = m.apply(x, y);
            b = [b[0].min(u), b[1].max(u), b[2].min(v), b[3].max(v)];
        }
        b
    }
}

/// Raster settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RasterOptions {
    /// Cells across the longer side of the attractor's bounding box.
    pub resolution: usize,
    /// Empty margin on each side, as a fraction of `resolution`, plus 4 cells.
    pub padding: f64,
    pub cell_budget: usize,
}

impl Default for RasterOptions {
    fn default() -> Self {
        Self {
            resolution: 2187,
            padding: 0.25,
            cell_budget: DEFAULT_CELL_BUDGET,
        }
    }
}

/// Mark every cell whose interior meets the bounding box of a leaf image;
/// images thinner than a cell mark the cell holding their centre.
pub fn rasterize(spec: &IfsSpec, opts: &RasterOptions) -> Result<VoxelGrid> {
    spec.validate()?;
    if opts.resolution < 64 {
        return Err(Error::Range(format!(
            "resolution must be at least 64 cells per axis, got {}",
            opts.resolution
        )));
    }
    let leaves = (spec.maps.len() as u64).checked_pow(spec.depth);
    if leaves.is_none_or(|n| n > LEAF_BUDGET) {
        return Err(Error::MemoryBudget {
            cells: leaves.unwrap_or(u64::MAX) as usize,
            budget: LEAF_BUDGET as usize,
        });
    }
    let mut bb = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
    spec.for_each_leaf(&mut |m| {
        let b = spec.leaf_bounds(m);
        bb = [bb[0].min(b[0]), bb[1].max(b[1]), bb[2].min(b[2]), bb[3].max(b[3])];
    });
    let side = (bb[1] - bb[0]).max(bb[3] - bb[2]);
    let side = if side > 0.0 { side } else { 1.0 };
    let res = opts.resolution;
    let pad = (opts.padding * res as f64).ceil() as usize + 4;
    let n = res + 2 * pad;
    let cells = n.saturating_mul(n);
    if cells > opts.cell_budget {
        return Err(Error::MemoryBudget {
            cells,
            budget: opts.cell_budget,
        });
    }
    let h = side / res as f64;
    let mut mask = vec![false; cells];
    let to_cells = |v: f64, lo: f64| (v - lo) / h;
    let eps = 1e-9;
    spec.for_each_leaf(&mut |m| {
        let b = spec.leaf_bounds(m);
        let (x0, x1) = (to_cells(b[0], bb[0]), to_cells(b[1], bb[0]));
        let (y0, y1) = (to_cells(b[2], bb[2]), to_cells(b[3], bb[2]));
        let span = |lo: f64, hi: f64| {
            let (a, z) = ((lo + eps).floor(), (hi - eps).ceil());
            if z > a {
                (a as usize, z as usize)
            } else {
                let c = (0.5 * (lo + hi)).floor().clamp(0.0, (res - 1) as f64) as usize;
                (c, c + 1)
            }
        };
        let (i0, i1) = span(y0, y1);
        let (j0, j1) = span(x0, x1);
        for i in i0..i1.min(res) {
            let row = (i + pad) * n + pad;
            mask[row + j0..row + j1.min(res)].fill(true);
        }
    });
    let origin = vec![bb[2] - pad as f64 * h, bb[0] - pad as f64 * h];
    VoxelGrid::new(vec![n, n], h, mask)?.with_origin(origin)
}
