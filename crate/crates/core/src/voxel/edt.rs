//! Exact squared Euclidean distance transform (Felzenszwalb–Huttenlocher
//! lower envelope of parabolas), one separable pass per axis.

use rayon::prelude::*;

/// Marks cells with no finite distance yet.
pub(crate) const INF: i64 = i64::MAX / 4;

/// 1-D pass: `out[q] = min_p (q - p)^2 + f[p]` over finite `f[p]`.
fn envelope(f: &[i64], out: &mut [i64], v: &mut Vec<usize>, z: &mut Vec<f64>) {
    v.clear();
    z.clear();
    for (q, &fq) in f.iter().enumerate() {
        if fq >= INF {
            continue;
        }
        let yq = fq + (q * q) as i64;
        loop {
            let Some(&p) = v.last() else {
                v.push(q);
                z.push(f64::NEG_INFINITY);
                break;
            };
            let yp = f[p] + (p * p) as i64;
            let s = (yq - yp) as f64 / (2 * (q - p)) as f64;
            if s <= *z.last().unwrap() {
                v.pop();
                z.pop();
            } else {
                v.push(q);
                z.push(s);
                break;
            }
        }
    }
    if v.is_empty() {
        out.fill(INF);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while k + 1 < v.len() && z[k + 1] < q as f64 {
            k += 1;
        }
        let dq = q as i64 - v[k] as i64;
        *o = dq * dq + f[v[k]];
    }
}

fn pass_contiguous(data: &mut [i64], n: usize) {
    data.par_chunks_mut(n).for_each_init(
        || (Vec::new(), Vec::new(), vec![0i64; n]),
        |(v, z, buf), line| {
            envelope(line, buf, v, z);
            line.copy_from_slice(buf);
        },
    );
}

/// Pass along axis `k` of a row-major array: gather lines, transform, scatter.
fn pass_strided(data: &mut [i64], dims: &[usize], k: usize) {
    let n = dims[k];
    let inner: usize = dims[k + 1..].iter().product();
    let block = n * inner;
    let src: &[i64] = data;
    let mut lines = vec![0i64; src.len()];
    lines.par_chunks_mut(n).enumerate().for_each_init(
        || (Vec::new(), Vec::new(), vec![0i64; n]),
        |(v, z, gathered), (line, out)| {
            let base = (line / inner) * block + line % inner;
            for (p, g) in gathered.iter_mut().enumerate() {
                *g = src[base + p * inner];
            }
            envelope(gathered, out, v, z);
        },
    );
    data.par_iter_mut().enumerate().for_each(|(e, x)| {
        let (o, rem) = (e / block, e % block);
        let (pos, i) = (rem / inner, rem % inner);
        *x = lines[(o * inner + i) * n + pos];
    });
}

/// Squared distances, in cell units, from every cell to the nearest masked
/// cell. `INF` everywhere if the mask is empty.
pub fn squared_distance(mask: &[bool], dims: &[usize]) -> Vec<i64> {
    let mut data: Vec<i64> = mask.par_iter().map(|&m| if m { 0 } else { INF }).collect();
    let last = dims.len() - 1;
    pass_contiguous(&mut data, dims[last]);
    for k in (0..last).rev() {
        pass_strided(&mut data, dims, k);
    }
    data
}

/// `O(cells · mask)` reference transform.
pub fn brute_force(mask: &[bool], dims: &[usize]) -> Vec<i64> {
    let coords = |mut e: usize| {
        let mut c = vec![0i64; dims.len()];
        for k in (0..dims.len()).rev() {
            c[k] = (e % dims[k]) as i64;
            e /= dims[k];
        }
        c
    };
    let sites: Vec<Vec<i64>> = (0..mask.len()).filter(|&e| mask[e]).map(coords).collect();
    (0..mask.len())
        .into_par_iter()
        .map(|e| {
            let c = coords(e);
            sites
                .iter()
                .map(|s| s.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum())
                .min()
                .unwrap_or(INF)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn one_dimensional() {
        let mask = [false, true, false, false, false, true, false];
        assert_eq!(squared_distance(&mask, &[7]), vec![1, 0, 1, 4, 1, 0, 1]);
    }

    #[test]
    fn single_centre_cell_is_radial() {
        let mut mask = vec![false; 64 * 64];
        mask[32 * 64 + 32] = true;
        let d = squared_distance(&mask, &[64, 64]);
        for i in 0..64i64 {
            for j in 0..64i64 {
                assert_eq!(d[(i * 64 + j) as usize], (i - 32).pow(2) + (j - 32).pow(2));
            }
        }
        let mut two = mask.clone();
        two[3 * 64 + 60] = true;
        assert_eq!(squared_distance(&two, &[64, 64]), brute_force(&two, &[64, 64]));
    }

    #[test]
    fn full_and_empty() {
        assert!(squared_distance(&[true; 30], &[5, 6]).iter().all(|&x| x == 0));
        assert!(squared_distance(&[false; 30], &[5, 6]).iter().all(|&x| x == INF));
    }

    #[test]
    fn random_masks_up_to_96_match_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for (n, m, p) in [(96, 96, 0.002), (96, 96, 0.05), (17, 96, 0.3), (96, 5, 0.01)] {
            let mask: Vec<bool> = (0..n * m).map(|_| rng.gen_bool(p)).collect();
            assert_eq!(squared_distance(&mask, &[n, m]), brute_force(&mask, &[n, m]));
        }
    }

    #[test]
    fn three_dimensional() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let dims = [9, 13, 11];
        let mask: Vec<bool> = (0..9 * 13 * 11).map(|_| rng.gen_bool(0.02)).collect();
        assert_eq!(squared_distance(&mask, &dims), brute_force(&mask, &dims));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn matches_brute_force(n in 1usize..40, m in 1usize..40, seed in 0u64..1000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut mask: Vec<bool> = (0..n * m).map(|_| rng.gen_bool(0.05)).collect();
            mask[rng.gen_range(0..n * m)] = true;
            let fast = squared_distance(&mask, &[n, m]);
            prop_assert_eq!(&fast, &brute_force(&mask, &[n, m]));
            // zero exactly on the mask, 1-Lipschitz between neighbours
            for i in 0..n {
                for j in 0..m {
                    let e = i * m + j;
                    prop_assert_eq!(fast[e] == 0, mask[e]);
                    let de = (fast[e] as f64).sqrt();
                    if j + 1 < m {
                        prop_assert!((de - (fast[e + 1] as f64).sqrt()).abs() <= 1.0 + 1e-12);
                    }
                    if i + 1 < n {
                        prop_assert!((de - (fast[e + m] as f64).sqrt()).abs() <= 1.0 + 1e-12);
                    }
                }
            }
        }
    }
}
