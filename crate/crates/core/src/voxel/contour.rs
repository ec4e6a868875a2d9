//! Marching-squares length of a level set of a 2-D distance field.

use rayon::prelude::*;

fn cross(a: f64, b: f64) -> f64 {
    a / (a - b)
}

/// Length, in cell units, of `{sqrt(sq) = t}` on the grid of cell centres.
/// Saddles are resolved by the value at the square's centre.
pub(crate) fn level_length(sq: &[i64], rows: usize, cols: usize, t: f64) -> f64 {
    let g = |i: usize, j: usize| (sq[i * cols + j] as f64).sqrt() - t;
    let per_row: Vec<f64> = (0..rows.saturating_sub(1))
        .into_par_iter()
        .map(|i| {
            let mut len = 0.0;
            for j in 0..cols - 1 {
                // corners counter-clockwise from (i, j)
                let v = [g(i, j), g(i, j + 1), g(i + 1, j + 1), g(i + 1, j)];
                let inside = v.map(|x| x < 0.0);
                let n_in = inside.iter().filter(|&&b| b).count();
                if n_in == 0 || n_in == 4 {
                    continue;
                }
                // crossing points on edges 0:(0,1) 1:(1,2) 2:(2,3) 3:(3,0), as (x, y)
                let corner = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
                let mut pts = Vec::with_capacity(4);
                for e in 0..4 {
                    let (a, b) = (e, (e + 1) % 4);
                    if inside[a] != inside[b] {
                        let u = cross(v[a], v[b]);
                        let (pa, pb) = (corner[a], corner[b]);
                        pts.push((e, (pa.0 + u * (pb.0 - pa.0), pa.1 + u * (pb.1 - pa.1))));
                    }
                }
                let dist = |p: (f64, f64), q: (f64, f64)| ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt();
                if pts.len() == 2 {
                    len += dist(pts[0].1, pts[1].1);
                } else {
                    // saddle: the corners agreeing with the centre are joined,
                    // the other two are cut off
                    let centre_in = v.iter().sum::<f64>() / 4.0 < 0.0;
                    let p: Vec<(f64, f64)> = pts.iter().map(|x| x.1).collect();
                    if inside[1] == centre_in {
                        len += dist(p[3], p[0]) + dist(p[1], p[2]);
                    } else {
                        len += dist(p[0], p[1]) + dist(p[2], p[3]);
                    }
                }
            }
            len
        })
        .collect();
    per_row.iter().sum()
}
