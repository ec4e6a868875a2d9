use minklab::voxel::{
    analyze_set, rasterize, IfsSpec, RasterOptions, SurfaceMethod, VoxelConfig,
};

fn dust(depth: u32, resolution: usize) -> minklab::voxel::VoxelGrid {
    let opts = RasterOptions {
        resolution,
        ..RasterOptions::default()
    };
    rasterize(&IfsSpec::cantor_dust(depth), &opts).unwrap()
}

#[test]
fn derivative_and_contour_agree_on_the_dust() {
    let g = dust(6, 729);
    let f = g.distance_transform();
    // the surface jumps where gaps close (r = 3^-k / 2); sample between closures
    for r in [0.03, 0.05, 0.08, 0.1] {
        let a = f.parallel_surface(r, SurfaceMethod::Derivative).unwrap();
        let b = f.parallel_surface(r, SurfaceMethod::Contour).unwrap();
        assert!((a / b - 1.0).abs() < 0.05, "r = {r}: {a} vs {b}");
    }
}

#[test]
fn brackets_are_stable_under_refinement() {
    let s = 4f64.ln() / 3f64.ln();
    let cfg = VoxelConfig {
        r_range: Some((0.012, 0.15)),
        ..VoxelConfig::default()
    };
    let coarse = analyze_set(&dust(6, 729), s, &cfg).unwrap();
    let fine = analyze_set(&dust(6, 1458), s, &cfg).unwrap();
    for key in ["minkowski_liminf", "minkowski_limsup", "s_liminf", "s_limsup"] {
        let (a, b) = (coarse.content.diagnostics[key], fine.content.diagnostics[key]);
        assert!((b / a - 1.0).abs() < 0.10, "{key}: {a} -> {b}");
    }
}
