//! Exact Euclidean distance transform (two-pass 1D parabola envelope).
//!
//! Squared distances on an integer grid stay integral, so the envelope
//! arithmetic is exact in f64 and the result matches the all-pairs brute
//! force bit for bit.

pub struct DistanceTransform {
    pub dist: Vec<f64>,
    /// True when the mask had no foreground; distances are then the image
    /// diagonal everywhere.
    pub empty: bool,
}

const INF: f64 = 1e20;

/// 1D squared-distance transform of a sampled function (lower envelope of
/// parabolas rooted at (i, f[i])).
fn dt_1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n]; // parabola roots
    let mut z = vec![0.0f64; n + 1]; // envelope boundaries
    let mut k = 0usize;
    v[0] = 0;
    z[0] = -INF;
    z[1] = INF;
    for q in 1..n {
        if f[q] >= INF {
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= z[k] {
                if k == 0 {
                    // replace the only parabola
                    v[0] = q;
                    z[0] = -INF;
                    z[1] = INF;
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = INF;
                break;
            }
        }
    }
    // handle the case where f[0] itself is INF but later cells are not: v[0]
    // may still be 0 with f=INF; guard by checking emptiness
    let mut kk = 0usize;
    for q in 0..n {
        while z[kk + 1] < q as f64 {
            kk += 1;
        }
        let p = v[kk];
        let d = q as f64 - p as f64;
        out[q] = d * d + f[p];
    }
}

/// Euclidean distance from each pixel to the nearest foreground pixel
/// (mask >= 0.5). Zero on foreground. An empty mask yields the image diagonal
/// everywhere, flagged.
pub fn distance_transform(mask: &[f64], width: usize, height: usize) -> DistanceTransform {
    assert_eq!(mask.len(), width * height);
    let any_fg = mask.iter().any(|&m| m >= 0.5);
    if !any_fg {
        let diag = ((width * width + height * height) as f64).sqrt();
        return DistanceTransform {
            dist: vec![diag; mask.len()],
            empty: true,
        };
    }
    // pass 1: per column, squared distance along y
    let mut g = vec![0.0f64; mask.len()];
    let mut col = vec![0.0f64; height];
    let mut out_col = vec![0.0f64; height];
    for x in 0..width {
        for y in 0..height {
            col[y] = if mask[y * width + x] >= 0.5 { 0.0 } else { INF };
        }
        if col.iter().all(|&c| c >= INF) {
            for y in 0..height {
                g[y * width + x] = INF;
            }
            continue;
        }
        dt_1d(&col, &mut out_col);
        for y in 0..height {
            g[y * width + x] = out_col[y];
        }
    }
    // pass 2: per row over the column results
    let mut dist = vec![0.0f64; mask.len()];
    let mut row = vec![0.0f64; width];
    let mut out_row = vec![0.0f64; width];
    for y in 0..height {
        row.copy_from_slice(&g[y * width..(y + 1) * width]);
        dt_1d(&row, &mut out_row);
        for x in 0..width {
            dist[y * width + x] = out_row[x].sqrt();
        }
    }
    DistanceTransform { dist, empty: false }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::rng::Rng;

    /// O(N^2) all-pairs oracle.
    fn brute(mask: &[f64], w: usize, h: usize) -> Vec<f64> {
        let fg: Vec<(i64, i64)> = (0..w * h)
            .filter(|&i| mask[i] >= 0.5)
            .map(|i| ((i % w) as i64, (i / w) as i64))
            .collect();
        (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as i64, (i / w) as i64);
                let best = fg
                    .iter()
                    .map(|&(fx, fy)| ((x - fx) * (x - fx) + (y - fy) * (y - fy)) as f64)
                    .fold(f64::INFINITY, f64::min);
                best.sqrt()
            })
            .collect()
    }

    #[test]
    fn all_foreground_is_zero() {
        let d = distance_transform(&vec![1.0; 16], 4, 4);
        assert!(!d.empty);
        assert!(d.dist.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_pixel_two_by_two() {
        let mask = vec![1.0, 0.0, 0.0, 0.0];
        let d = distance_transform(&mask, 2, 2);
        assert_eq!(d.dist[0], 0.0);
        assert_eq!(d.dist[1], 1.0);
        assert_eq!(d.dist[2], 1.0);
        assert_eq!(d.dist[3], 2f64.sqrt());
    }

    #[test]
    fn empty_mask_flags_and_fills_diagonal() {
        let d = distance_transform(&vec![0.0; 12], 4, 3);
        assert!(d.empty);
        let diag = (16.0f64 + 9.0).sqrt();
        assert!(d.dist.iter().all(|&x| x == diag));
    }

    #[test]
    fn exact_match_with_brute_force_on_random_masks() {
        for seed in 0..50 {
            let mut rng = Rng::new(seed);
            let density = rng.range(0.02, 0.5);
            let mask: Vec<f64> = (0..32 * 32)
                .map(|_| if rng.uniform() < density { 1.0 } else { 0.0 })
                .collect();
            if mask.iter().all(|&m| m < 0.5) {
                continue;
            }
            let d = distance_transform(&mask, 32, 32);
            let b = brute(&mask, 32, 32);
            for i in 0..mask.len() {
                assert_eq!(d.dist[i], b[i], "seed {} pixel {}", seed, i);
            }
        }
    }

    #[test]
    fn non_square_images() {
        let mut rng = Rng::new(404);
        let (w, h) = (17, 9);
        let mask: Vec<f64> = (0..w * h)
            .map(|_| if rng.uniform() < 0.1 { 1.0 } else { 0.0 })
            .collect();
        if mask.iter().any(|&m| m >= 0.5) {
            let d = distance_transform(&mask, w, h);
            let b = brute(&mask, w, h);
            assert_eq!(d.dist, b);
        }
    }
}
