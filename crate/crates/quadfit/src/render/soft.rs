//! Differentiable soft silhouette.
//!
//! Per (pixel, triangle): alpha = sigmoid(s * d^2 / sigma) where d is the NDC
//! distance from the pixel center to the nearest triangle edge and s is +1
//! inside / -1 outside; the pixel value is 1 - prod(1 - alpha). Saturated
//! contributions (|s d^2/sigma| >= 40, where the sigmoid rounds to 0 or 1 in
//! f64 anyway) are folded to constants, which keeps the band of taped nodes
//! thin around the silhouette boundary.

use super::{CameraBasis, RenderError};
use crate::autodiff::Real;
use crate::geometry::Mesh;

/// sigmoid(40) rounds to 1.0 in f64 and sigmoid(-40) is below f64 resolution
/// relative to the product accumulation, so this cutoff is value-exact.
const SATURATION: f64 = 40.0;

/// Squared distance from point p to segment (a, b) in 2D, on the caller's
/// scalar type.
fn seg_sqdist_2d<R: Real>(px: R, py: R, ax: R, ay: R, bx: R, by: R) -> R {
    let dx = bx - ax;
    let dy = by - ay;
    let dd = dx * dx + dy * dy;
    if dd.value() <= 1e-30 {
        let ux = px - ax;
        let uy = py - ay;
        return ux * ux + uy * uy;
    }
    let t = (((px - ax) * dx + (py - ay) * dy) / dd).clamp_r(0.0, 1.0);
    let cx = ax + dx * t;
    let cy = ay + dy * t;
    let ux = px - cx;
    let uy = py - cy;
    ux * ux + uy * uy
}

/// Soft coverage in (0,1) per pixel (0/1 exactly only where f64 saturates).
/// Differentiable with respect to the mesh vertices through `R`.
pub fn soft_silhouette<R: Real>(
    mesh: &Mesh<R>,
    cam: &CameraBasis,
    sigma_soft: f64,
) -> Result<Vec<R>, RenderError> {
    if !(sigma_soft > 0.0) {
        return Err(RenderError::NonPositiveSigma(sigma_soft));
    }
    let (w, h) = (cam.width, cam.height);
    let npix = w * h;
    // product of (1 - alpha) per pixel; saturated-inside pixels force value 1
    let mut miss_prod: Vec<R> = vec![R::lit(1.0); npix];
    let mut saturated = vec![false; npix];

    let proj: Vec<Option<(R, R, R)>> = mesh.vertices.iter().map(|&v| cam.project(v)).collect();
    let ndc = cam.ndc_scale();
    // band radius in pixels: beyond it |d^2/sigma| >= SATURATION
    let band_px = (SATURATION * sigma_soft).sqrt() / ndc;

    for f in &mesh.faces {
        let (Some(a), Some(b), Some(c)) = (proj[f[0]], proj[f[1]], proj[f[2]]) else {
            continue;
        };
        let (axv, ayv) = (a.0.value(), a.1.value());
        let (bxv, byv) = (b.0.value(), b.1.value());
        let (cxv, cyv) = (c.0.value(), c.1.value());
        let min_x = axv.min(bxv).min(cxv) - band_px;
        let max_x = axv.max(bxv).max(cxv) + band_px;
        let min_y = ayv.min(byv).min(cyv) - band_px;
        let max_y = ayv.max(byv).max(cyv) + band_px;
        let x0 = (min_x.floor().max(0.0)) as usize;
        let x1 = ((max_x.ceil() + 1.0).min(w as f64)).max(0.0) as usize;
        let y0 = (min_y.floor().max(0.0)) as usize;
        let y1 = ((max_y.ceil() + 1.0).min(h as f64)).max(0.0) as usize;
        let area2 = (bxv - axv) * (cyv - ayv) - (byv - ayv) * (cxv - axv);

        for y in y0..y1 {
            for x in x0..x1 {
                let idx = y * w + x;
                if saturated[idx] {
                    continue;
                }
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                // inside test in plain f64 (the discrete sign)
                let e0 = (bxv - axv) * (py - ayv) - (byv - ayv) * (px - axv);
                let e1 = (cxv - bxv) * (py - byv) - (cyv - byv) * (px - bxv);
                let e2 = (axv - cxv) * (py - cyv) - (ayv - cyv) * (px - cxv);
                let inside = if area2 == 0.0 {
                    false
                } else if area2 > 0.0 {
                    e0 >= 0.0 && e1 >= 0.0 && e2 >= 0.0
                } else {
                    e0 <= 0.0 && e1 <= 0.0 && e2 <= 0.0
                };
                let sign = if inside { 1.0 } else { -1.0 };

                // fast f64 distances decide saturation and pick the nearest
                // edge; only that edge is taped (the same subgradient branch a
                // taped three-way min would take)
                let sd = |ax: f64, ay: f64, bx: f64, by: f64| -> f64 {
                    seg_sqdist_2d(px, py, ax, ay, bx, by)
                };
                let d2s = [
                    sd(axv, ayv, bxv, byv),
                    sd(bxv, byv, cxv, cyv),
                    sd(cxv, cyv, axv, ayv),
                ];
                let mut emin = 0;
                if d2s[1] < d2s[emin] {
                    emin = 1;
                }
                if d2s[2] < d2s[emin] {
                    emin = 2;
                }
                let xarg = sign * d2s[emin] * ndc * ndc / sigma_soft;
                if xarg >= SATURATION {
                    saturated[idx] = true;
                    continue;
                }
                if xarg <= -SATURATION {
                    continue;
                }

                let pxr = R::lit(px);
                let pyr = R::lit(py);
                let (e0, e1) = match emin {
                    0 => ((a.0, a.1), (b.0, b.1)),
                    1 => ((b.0, b.1), (c.0, c.1)),
                    _ => ((c.0, c.1), (a.0, a.1)),
                };
                let dmin = seg_sqdist_2d(pxr, pyr, e0.0, e0.1, e1.0, e1.1).scale(ndc * ndc);
                let alpha = dmin.scale(sign / sigma_soft).sigmoid();
                miss_prod[idx] = miss_prod[idx] * (R::lit(1.0) - alpha);
            }
        }
    }

    let out = (0..npix)
        .map(|i| {
            if saturated[i] {
                R::lit(1.0)
            } else {
                R::lit(1.0) - miss_prod[i]
            }
        })
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{finite_diff_check, Real, ScalarFn, Tape};
    use crate::math::vec3;
    use crate::render::{rasterize_visibility, Camera};

    fn triangle() -> Mesh<f64> {
        Mesh {
            vertices: vec![vec3(-1.5, -1.0, 0.0), vec3(1.5, -1.0, 0.0), vec3(0.0, 1.4, 0.0)],
            faces: vec![[0, 1, 2]],
        }
    }

    #[test]
    fn deep_interior_pixel_saturates_to_one() {
        let cam = Camera::with_size(32, 32);
        let m = triangle();
        let s = soft_silhouette(&m, &cam.basis(), 1e-4).unwrap();
        let center = 16 * 32 + 16;
        assert!((s[center] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn sigma_to_zero_approaches_hard_mask() {
        let cam = Camera::with_size(32, 32);
        let m = triangle();
        let basis = cam.basis();
        let hard = rasterize_visibility(&m, &basis, 1);
        let sigmas = [1e-2, 1e-3, 1e-4, 1e-5];
        let mut prev_err = f64::INFINITY;
        for sg in sigmas {
            let s = soft_silhouette(&m, &basis, sg).unwrap();
            let err: f64 = s
                .iter()
                .zip(&hard.mask)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                / s.len() as f64;
            assert!(err <= prev_err + 1e-12, "not monotone: {} then {}", prev_err, err);
            prev_err = err;
        }
        assert!(prev_err < 5e-3, "final err {}", prev_err);
    }

    #[test]
    fn values_strictly_interior_at_moderate_sigma() {
        let cam = Camera::with_size(16, 16);
        let m = triangle();
        let s = soft_silhouette(&m, &cam.basis(), 0.5).unwrap();
        for v in &s {
            assert!(*v > 0.0 && *v < 1.0, "value {}", v);
        }
    }

    #[test]
    fn monotone_in_sigma_at_fixed_sign() {
        let cam = Camera::with_size(24, 24);
        let m = triangle();
        let basis = cam.basis();
        let hard = rasterize_visibility(&m, &basis, 1);
        let lo = soft_silhouette(&m, &basis, 0.01).unwrap();
        let hi = soft_silhouette(&m, &basis, 0.1).unwrap();
        for i in 0..lo.len() {
            if hard.mask[i] == 0.0 {
                // outside pixels gain mass as sigma grows
                assert!(hi[i] >= lo[i] - 1e-12);
            } else if lo[i] > 0.99 && lo[i] < 1.0 {
                // interior non-saturated pixels lose mass
                assert!(hi[i] <= lo[i] + 1e-12);
            }
        }
    }

    #[test]
    fn zero_sigma_is_an_error() {
        let cam = Camera::with_size(8, 8);
        assert!(soft_silhouette(&triangle(), &cam.basis(), 0.0).is_err());
        assert!(soft_silhouette(&triangle(), &cam.basis(), -1.0).is_err());
    }

    struct SilhouetteSum {
        faces: Vec<[usize; 3]>,
        cam: Camera,
        sigma: f64,
    }

    impl ScalarFn for SilhouetteSum {
        fn eval<R: Real>(&self, params: &[R]) -> R {
            let vertices = params
                .chunks(3)
                .map(|c| vec3(c[0], c[1], c[2]))
                .collect::<Vec<_>>();
            let mesh = Mesh {
                vertices,
                faces: self.faces.clone(),
            };
            let s = soft_silhouette(&mesh, &self.cam.basis(), self.sigma).unwrap();
            // weighted sum makes the gradient direction nontrivial
            let mut acc = R::lit(0.0);
            for (i, v) in s.into_iter().enumerate() {
                acc = acc + v.scale(((i % 7) as f64 + 1.0) / 7.0);
            }
            acc
        }
    }

    #[test]
    fn boundary_gradient_matches_finite_differences() {
        let m = triangle();
        let params: Vec<f64> = m
            .vertices
            .iter()
            .flat_map(|v| [v.x, v.y, v.z])
            .collect();
        let f = SilhouetteSum {
            faces: m.faces.clone(),
            cam: Camera::with_size(24, 24),
            sigma: 5e-3,
        };
        let r = finite_diff_check(&f, &params, 1e-5, None);
        assert!(
            r.max_rel_err < 1e-4,
            "max rel err {} at {:?}",
            r.max_rel_err,
            r.worst_coord
        );
    }

    #[test]
    fn gradient_flows_to_vertices() {
        let m = triangle();
        let tape = Tape::new();
        let params: Vec<f64> = m.vertices.iter().flat_map(|v| [v.x, v.y, v.z]).collect();
        let vars = tape.vars(&params);
        let f = SilhouetteSum {
            faces: m.faces.clone(),
            cam: Camera::with_size(24, 24),
            sigma: 5e-3,
        };
        let out = f.eval(&vars);
        let g = tape.backward(out);
        let total: f64 = vars.iter().map(|&v| g.wrt(v).abs()).sum();
        assert!(total > 1e-6, "no gradient reached the vertices");
    }
}
