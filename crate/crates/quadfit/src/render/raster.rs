//! Hard z-buffer rasterization in 16-row bands with perspective-correct
//! attribute interpolation.
//!
//! The visibility pass runs in plain f64 and records the winning face per
//! pixel; the attribute pass then rebuilds the interpolation for covered
//! pixels on the caller's scalar type, so gradients flow through barycentric
//! weights and attribute values while the pixel-to-face assignment stays
//! fixed.

use super::CameraBasis;
use crate::autodiff::Real;
use crate::geometry::{Mesh, VertexField};

pub const BAND_ROWS: usize = 16;

/// Per-pixel winner of the depth test. `face == u32::MAX` marks background.
pub struct Visibility {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
    pub face: Vec<u32>,
    pub mask: Vec<f64>,
}

#[derive(Clone, Copy)]
struct ProjTri {
    v: [[f64; 3]; 3], // (px, py, depth) per corner
    min_x: i64,
    max_x: i64,
    min_y: i64,
    max_y: i64,
}

fn edge(ax: f64, ay: f64, bx: f64, by: f64, px: f64, py: f64) -> f64 {
    (bx - ax) * (py - ay) - (by - ay) * (px - ax)
}

/// Depth of the triangle at a pixel center, or `None` when the pixel is
/// outside. Ties at edges follow the sign convention of the edge functions;
/// both windings are accepted (back faces are kept for masks).
fn sample_depth(t: &ProjTri, px: f64, py: f64) -> Option<f64> {
    let e0 = edge(t.v[1][0], t.v[1][1], t.v[2][0], t.v[2][1], px, py);
    let e1 = edge(t.v[2][0], t.v[2][1], t.v[0][0], t.v[0][1], px, py);
    let e2 = edge(t.v[0][0], t.v[0][1], t.v[1][0], t.v[1][1], px, py);
    let area = e0 + e1 + e2;
    if area == 0.0 {
        return None;
    }
    let inside = (e0 >= 0.0 && e1 >= 0.0 && e2 >= 0.0) || (e0 <= 0.0 && e1 <= 0.0 && e2 <= 0.0);
    if !inside {
        return None;
    }
    let l0 = e0 / area;
    let l1 = e1 / area;
    let l2 = e2 / area;
    let inv_depth = l0 / t.v[0][2] + l1 / t.v[1][2] + l2 / t.v[2][2];
    Some(1.0 / inv_depth)
}

fn project_faces(mesh: &Mesh<f64>, cam: &CameraBasis) -> Vec<Option<ProjTri>> {
    let proj: Vec<Option<(f64, f64, f64)>> = mesh.vertices.iter().map(|&v| cam.project(v)).collect();
    mesh.faces
        .iter()
        .map(|f| {
            let (a, b, c) = (proj[f[0]]?, proj[f[1]]?, proj[f[2]]?);
            let xs = [a.0, b.0, c.0];
            let ys = [a.1, b.1, c.1];
            Some(ProjTri {
                v: [[a.0, a.1, a.2], [b.0, b.1, b.2], [c.0, c.1, c.2]],
                min_x: xs.iter().cloned().fold(f64::INFINITY, f64::min).floor() as i64,
                max_x: xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max).ceil() as i64,
                min_y: ys.iter().cloned().fold(f64::INFINITY, f64::min).floor() as i64,
                max_y: ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max).ceil() as i64,
            })
        })
        .collect()
}

fn rasterize_band(
    tris: &[Option<ProjTri>],
    width: usize,
    row0: usize,
    depth: &mut [f64],
    face: &mut [u32],
) {
    let rows = depth.len() / width;
    for (fi, tri) in tris.iter().enumerate() {
        let Some(t) = tri else { continue };
        let y_lo = t.min_y.max(row0 as i64) as usize;
        let y_hi = (t.max_y + 1).min((row0 + rows) as i64);
        if y_hi <= y_lo as i64 {
            continue;
        }
        let x_lo = t.min_x.max(0) as usize;
        let x_hi = ((t.max_x + 1).min(width as i64)).max(0) as usize;
        for y in y_lo..y_hi as usize {
            for x in x_lo..x_hi {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                if let Some(d) = sample_depth(t, px, py) {
                    if d <= 0.0 {
                        continue;
                    }
                    let idx = (y - row0) * width + x;
                    // ties go to the lower face index regardless of face order
                    if d < depth[idx] || (d == depth[idx] && (fi as u32) < face[idx]) {
                        depth[idx] = d;
                        face[idx] = fi as u32;
                    }
                }
            }
        }
    }
}

/// Nearest-surface-per-pixel pass over 16-row bands. Bands write disjoint
/// output ranges, so any `jobs` count produces identical buffers.
pub fn rasterize_visibility(mesh: &Mesh<f64>, cam: &CameraBasis, jobs: usize) -> Visibility {
    let (width, height) = (cam.width, cam.height);
    let tris = project_faces(mesh, cam);
    let mut depth = vec![f64::INFINITY; width * height];
    let mut face = vec![u32::MAX; width * height];

    let band_count = height.div_ceil(BAND_ROWS);
    if jobs <= 1 || band_count <= 1 {
        for band in 0..band_count {
            let row0 = band * BAND_ROWS;
            let row1 = ((band + 1) * BAND_ROWS).min(height);
            let range = row0 * width..row1 * width;
            rasterize_band(&tris, width, row0, &mut depth[range.clone()], &mut face[range]);
        }
    } else {
        // chunk whole bands across threads; each chunk owns a disjoint slice
        let rows_per_chunk = ((band_count).div_ceil(jobs)) * BAND_ROWS;
        let mut depth_chunks: Vec<(usize, &mut [f64])> = Vec::new();
        let mut face_chunks: Vec<&mut [u32]> = Vec::new();
        {
            let mut drest: &mut [f64] = &mut depth;
            let mut frest: &mut [u32] = &mut face;
            let mut row = 0usize;
            while row < height {
                let take = rows_per_chunk.min(height - row);
                let (d0, d1) = drest.split_at_mut(take * width);
                let (f0, f1) = frest.split_at_mut(take * width);
                depth_chunks.push((row, d0));
                face_chunks.push(f0);
                drest = d1;
                frest = f1;
                row += take;
            }
        }
        std::thread::scope(|s| {
            for ((row0, dchunk), fchunk) in depth_chunks.into_iter().zip(face_chunks) {
                let tris = &tris;
                s.spawn(move || {
                    let rows = dchunk.len() / width;
                    for band_start in (0..rows).step_by(BAND_ROWS) {
                        let band_rows = BAND_ROWS.min(rows - band_start);
                        let range = band_start * width..(band_start + band_rows) * width;
                        rasterize_band(
                            tris,
                            width,
                            row0 + band_start,
                            &mut dchunk[range.clone()],
                            &mut fchunk[range],
                        );
                    }
                });
            }
        });
    }

    let mask: Vec<f64> = face.iter().map(|&f| if f == u32::MAX { 0.0 } else { 1.0 }).collect();
    Visibility {
        width,
        height,
        depth,
        face,
        mask,
    }
}

/// Dense H*W image of `dim`-channel values, pixel-major.
pub struct AttrImage<R = f64> {
    pub dim: usize,
    pub data: Vec<R>,
}

impl<R: Real> AttrImage<R> {
    pub fn zeros(dim: usize, npix: usize) -> Self {
        AttrImage {
            dim,
            data: vec![R::lit(0.0); dim * npix],
        }
    }

    pub fn from_data(dim: usize, data: Vec<R>) -> Self {
        AttrImage { dim, data }
    }

    pub fn row(&self, p: usize) -> &[R] {
        &self.data[p * self.dim..(p + 1) * self.dim]
    }

    pub fn row_mut(&mut self, p: usize) -> &mut [R] {
        &mut self.data[p * self.dim..(p + 1) * self.dim]
    }

    pub fn values(&self) -> AttrImage<f64> {
        AttrImage {
            dim: self.dim,
            data: self.data.iter().map(|x| x.value()).collect(),
        }
    }
}

/// Perspective-correct interpolation of vertex fields over the covered pixels
/// of a visibility pass.
pub fn interpolate_attrs<R: Real>(
    mesh: &Mesh<R>,
    vis: &Visibility,
    cam: &CameraBasis,
    attrs: &[&VertexField<R>],
) -> Vec<AttrImage<R>> {
    interpolate_attrs_where(mesh, vis, cam, attrs, None)
}

/// Same as [`interpolate_attrs`] but restricted to pixels where `filter` is
/// true (pixels a masked loss will actually read).
pub fn interpolate_attrs_where<R: Real>(
    mesh: &Mesh<R>,
    vis: &Visibility,
    cam: &CameraBasis,
    attrs: &[&VertexField<R>],
    filter: Option<&[bool]>,
) -> Vec<AttrImage<R>> {
    let npix = vis.width * vis.height;
    let mut out: Vec<AttrImage<R>> = attrs.iter().map(|a| AttrImage::zeros(a.dim, npix)).collect();
    // projected vertices on the caller's scalar type, computed once
    let proj: Vec<Option<(R, R, R)>> = mesh.vertices.iter().map(|&v| cam.project(v)).collect();
    for p in 0..npix {
        let f = vis.face[p];
        if f == u32::MAX {
            continue;
        }
        if let Some(keep) = filter {
            if !keep[p] {
                continue;
            }
        }
        let fv = mesh.faces[f as usize];
        let (Some(a), Some(b), Some(c)) = (proj[fv[0]], proj[fv[1]], proj[fv[2]]) else {
            continue;
        };
        let px = R::lit((p % vis.width) as f64 + 0.5);
        let py = R::lit((p / vis.width) as f64 + 0.5);
        let e0 = edge_r(b.0, b.1, c.0, c.1, px, py);
        let e1 = edge_r(c.0, c.1, a.0, a.1, px, py);
        let e2 = edge_r(a.0, a.1, b.0, b.1, px, py);
        let area = e0 + e1 + e2;
        let l0 = e0 / area;
        let l1 = e1 / area;
        let l2 = e2 / area;
        // perspective-correct weights
        let q0 = l0 / a.2;
        let q1 = l1 / b.2;
        let q2 = l2 / c.2;
        let qs = q0 + q1 + q2;
        let w0 = q0 / qs;
        let w1 = q1 / qs;
        let w2 = q2 / qs;
        for (ai, attr) in attrs.iter().enumerate() {
            let r0 = attr.row(fv[0]);
            let r1 = attr.row(fv[1]);
            let r2 = attr.row(fv[2]);
            let dst = out[ai].row_mut(p);
            for ch in 0..attr.dim {
                dst[ch] = r0[ch] * w0 + r1[ch] * w1 + r2[ch] * w2;
            }
        }
    }
    out
}

fn edge_r<R: Real>(ax: R, ay: R, bx: R, by: R, px: R, py: R) -> R {
    (bx - ax) * (py - ay) - (by - ay) * (px - ax)
}

/// Spec-shaped entry point: visibility plus interpolated buffers for an
/// arbitrary attribute list.
pub fn rasterize_attrs<R: Real>(
    mesh: &Mesh<R>,
    attrs: &[&VertexField<R>],
    cam: &CameraBasis,
    jobs: usize,
) -> (Visibility, Vec<AttrImage<R>>) {
    let vis = rasterize_visibility(&mesh.to_f64(), cam, jobs);
    let imgs = interpolate_attrs(mesh, &vis, cam, attrs);
    (vis, imgs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::rng::Rng;
    use crate::math::vec3;
    use crate::render::Camera;

    fn big_facing_triangle() -> Mesh<f64> {
        Mesh {
            vertices: vec![vec3(-20.0, -20.0, 0.0), vec3(20.0, -20.0, 0.0), vec3(0.0, 30.0, 0.0)],
            faces: vec![[0, 1, 2]],
        }
    }

    #[test]
    fn full_frame_triangle_covers_everything() {
        let cam = Camera::with_size(32, 32);
        let vis = rasterize_visibility(&big_facing_triangle(), &cam.basis(), 1);
        assert!(vis.mask.iter().all(|&m| m == 1.0));
        assert!(vis.depth.iter().all(|&d| (d - 10.0).abs() < 1e-9));
    }

    #[test]
    fn front_triangle_wins_depth_test() {
        let mut mesh = big_facing_triangle(); // depth 10
        let near = Mesh {
            vertices: vec![vec3(-20.0, -20.0, 5.0), vec3(20.0, -20.0, 5.0), vec3(0.0, 30.0, 5.0)],
            faces: vec![[0, 1, 2]],
        };
        let base = mesh.vertices.len();
        mesh.vertices.extend(near.vertices);
        mesh.faces.push([base, base + 1, base + 2]);
        let cam = Camera::with_size(16, 16);
        let vis = rasterize_visibility(&mesh, &cam.basis(), 1);
        assert!(vis.face.iter().all(|&f| f == 1));
        assert!(vis.depth.iter().all(|&d| (d - 5.0).abs() < 1e-9));
    }

    fn random_scene(rng: &mut Rng, tris: usize) -> Mesh<f64> {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        for _ in 0..tris {
            let cx = rng.range(-1.5, 1.5);
            let cy = rng.range(-1.5, 1.5);
            let cz = rng.range(-2.0, 2.0);
            let base = vertices.len();
            for _ in 0..3 {
                vertices.push(vec3(
                    cx + rng.range(-0.8, 0.8),
                    cy + rng.range(-0.8, 0.8),
                    cz + rng.range(-0.5, 0.5),
                ));
            }
            faces.push([base, base + 1, base + 2]);
        }
        Mesh { vertices, faces }
    }

    /// Brute-force reference: every pixel against every triangle, min depth,
    /// ties to the lower face index. Written independently of the band
    /// rasterizer (no shared sampling helper).
    fn brute_force(mesh: &Mesh<f64>, cam: &Camera) -> (Vec<f64>, Vec<u32>) {
        let b = cam.basis();
        let proj: Vec<Option<(f64, f64, f64)>> =
            mesh.vertices.iter().map(|&v| b.project(v)).collect();
        let mut depth = vec![f64::INFINITY; cam.width * cam.height];
        let mut face = vec![u32::MAX; cam.width * cam.height];
        for y in 0..cam.height {
            for x in 0..cam.width {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                for (fi, f) in mesh.faces.iter().enumerate() {
                    let (Some(a), Some(bb), Some(c)) = (proj[f[0]], proj[f[1]], proj[f[2]]) else {
                        continue;
                    };
                    let ef = |p0: (f64, f64, f64), p1: (f64, f64, f64)| -> f64 {
                        (p1.0 - p0.0) * (py - p0.1) - (p1.1 - p0.1) * (px - p0.0)
                    };
                    let e0 = ef(bb, c);
                    let e1 = ef(c, a);
                    let e2 = ef(a, bb);
                    let area = e0 + e1 + e2;
                    if area == 0.0 {
                        continue;
                    }
                    let pos = e0 >= 0.0 && e1 >= 0.0 && e2 >= 0.0;
                    let neg = e0 <= 0.0 && e1 <= 0.0 && e2 <= 0.0;
                    if !(pos || neg) {
                        continue;
                    }
                    let d = 1.0 / (e0 / area / a.2 + e1 / area / bb.2 + e2 / area / c.2);
                    if d <= 0.0 {
                        continue;
                    }
                    let idx = y * cam.width + x;
                    if d < depth[idx] || (d == depth[idx] && (fi as u32) < face[idx]) {
                        depth[idx] = d;
                        face[idx] = fi as u32;
                    }
                }
            }
        }
        (depth, face)
    }

    #[test]
    fn matches_brute_force_on_random_scenes() {
        let cam = Camera::with_size(64, 64);
        for seed in 0..25 {
            let mut rng = Rng::new(seed);
            let mesh = random_scene(&mut rng, 12);
            let vis = rasterize_visibility(&mesh, &cam.basis(), 1);
            let (bd, bf) = brute_force(&mesh, &cam);
            for i in 0..bd.len() {
                assert_eq!(vis.face[i], bf[i], "seed {} pixel {}", seed, i);
                if bf[i] != u32::MAX {
                    assert!((vis.depth[i] - bd[i]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn band_parallelism_is_schedule_independent() {
        let cam = Camera::with_size(64, 48);
        let mut rng = Rng::new(7);
        let mesh = random_scene(&mut rng, 30);
        let v1 = rasterize_visibility(&mesh, &cam.basis(), 1);
        let v4 = rasterize_visibility(&mesh, &cam.basis(), 4);
        assert_eq!(v1.face, v4.face);
        assert!(v1.depth.iter().zip(&v4.depth).all(|(a, b)| a == b));
    }

    #[test]
    fn face_order_invariance_with_exact_ties() {
        // two identical triangles -> exact depth ties everywhere; lower index wins
        let mesh = big_facing_triangle();
        let mut doubled = mesh.to_f64();
        doubled.vertices.extend(mesh.vertices.iter().cloned());
        doubled.faces.push([3, 4, 5]);
        let cam = Camera::with_size(16, 16);
        let vis = rasterize_visibility(&doubled, &cam.basis(), 1);
        assert!(vis.face.iter().all(|&f| f == 0));
        // swap face order: still the lower index (now the other geometry) wins
        doubled.faces.swap(0, 1);
        let vis2 = rasterize_visibility(&doubled, &cam.basis(), 1);
        assert!(vis2.face.iter().all(|&f| f == 0));
    }

    #[test]
    fn empty_mesh_renders_empty_buffers() {
        let mesh = Mesh {
            vertices: vec![],
            faces: vec![],
        };
        let cam = Camera::with_size(8, 8);
        let vis = rasterize_visibility(&mesh, &cam.basis(), 1);
        assert!(vis.mask.iter().all(|&m| m == 0.0));
        assert!(vis.depth.iter().all(|&d| d.is_infinite()));
    }

    #[test]
    fn perspective_correct_interpolation_matches_ray_cast_oracle() {
        // slanted quad, attribute linear in 3D over the surface: screen-space
        // interpolation must reproduce the 3D-linear value at the ray hit,
        // which affine screen interpolation does not
        let mesh = Mesh {
            vertices: vec![
                vec3(-3.0, -3.0, 2.0),
                vec3(3.0, -3.0, 2.0),
                vec3(3.0, 3.0, -2.0),
                vec3(-3.0, 3.0, -2.0),
            ],
            faces: vec![[0, 1, 2], [0, 2, 3]],
        };
        // attribute = t where y = -3 + 6t over the surface
        let mut attr = VertexField::zeros(1, 4);
        attr.row_mut(1)[0] = 0.0;
        attr.row_mut(2)[0] = 1.0;
        attr.row_mut(3)[0] = 1.0;
        let cam = Camera::with_size(64, 64);
        let basis = cam.basis();
        let (vis, imgs) = rasterize_attrs(&mesh, &[&attr], &basis, 1);
        // surface plane is 2y + 3z = 0 with normal (0,2,3)
        let origin = vec3(0.0, 0.0, 10.0);
        let mut checked = 0;
        for (px_i, py_i) in [(32, 32), (20, 40), (45, 12), (10, 50), (32, 8)] {
            let idx = py_i * 64 + px_i;
            if vis.face[idx] == u32::MAX {
                continue;
            }
            let (px, py) = (px_i as f64 + 0.5, py_i as f64 + 0.5);
            let dir = basis.forward
                + basis.right.scale((px - 32.0) / basis.focal_px)
                + basis.up.scale(-(py - 32.0) / basis.focal_px);
            let s = -(2.0 * origin.y + 3.0 * origin.z) / (2.0 * dir.y + 3.0 * dir.z);
            let hit = origin + dir.scale(s);
            let expect = (hit.y + 3.0) / 6.0;
            let got: f64 = imgs[0].row(idx)[0];
            assert!(
                (got - expect).abs() < 1e-9,
                "pixel ({},{}) got {} expect {}",
                px_i,
                py_i,
                got,
                expect
            );
            checked += 1;
        }
        assert!(checked >= 4);
    }
}
