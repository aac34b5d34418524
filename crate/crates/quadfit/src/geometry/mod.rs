//! Triangle meshes, per-vertex fields, normals, and bilateral symmetry.

mod obj;

pub use obj::{load_obj, save_obj, ObjError};

use crate::autodiff::Real;
use crate::math::{vec3, Vec3};

/// Matching tolerance for mirror-pair discovery, in model units.
pub const MIRROR_TOL: f64 = 1e-6;

#[derive(Debug)]
pub enum GeometryError {
    /// A vertex off the x=0 plane has no mirror partner within tolerance.
    UnpairedVertex { vertex: usize, position: Vec3<f64> },
    FaceIndexOutOfRange { face: usize, index: usize },
    NonFiniteCoordinate { vertex: usize },
    FieldSizeMismatch { expected: usize, got: usize },
}

impl std::fmt::Display for GeometryError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GeometryError::UnpairedVertex { vertex, position } => write!(
                f,
                "vertex {} at ({}, {}, {}) has no mirror partner across x=0",
                vertex, position.x, position.y, position.z
            ),
            GeometryError::FaceIndexOutOfRange { face, index } => {
                write!(f, "face {} references vertex {} out of range", face, index)
            }
            GeometryError::NonFiniteCoordinate { vertex } => {
                write!(f, "vertex {} has a non-finite coordinate", vertex)
            }
            GeometryError::FieldSizeMismatch { expected, got } => {
                write!(f, "vertex field has {} rows, mesh has {}", got, expected)
            }
        }
    }
}

impl std::error::Error for GeometryError {}

/// Triangle mesh in the canonical model frame (x = left/right symmetry axis,
/// y = up, z = front/back).
#[derive(Clone, Debug)]
pub struct Mesh<R = f64> {
    pub vertices: Vec<Vec3<R>>,
    pub faces: Vec<[usize; 3]>,
}

impl<R: Real> Mesh<R> {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn to_f64(&self) -> Mesh<f64> {
        Mesh {
            vertices: self.vertices.iter().map(|v| v.value()).collect(),
            faces: self.faces.clone(),
        }
    }

    pub fn lift<S: Real>(mesh: &Mesh<f64>) -> Mesh<S> {
        Mesh {
            vertices: mesh.vertices.iter().map(|&v| Vec3::from_f64(v)).collect(),
            faces: mesh.faces.clone(),
        }
    }
}

impl Mesh<f64> {
    /// Checks index ranges and coordinate finiteness.
    pub fn validate(&self) -> Result<(), GeometryError> {
        for (i, v) in self.vertices.iter().enumerate() {
            if !(v.x.is_finite() && v.y.is_finite() && v.z.is_finite()) {
                return Err(GeometryError::NonFiniteCoordinate { vertex: i });
            }
        }
        for (fi, f) in self.faces.iter().enumerate() {
            for &ix in f {
                if ix >= self.vertices.len() {
                    return Err(GeometryError::FaceIndexOutOfRange { face: fi, index: ix });
                }
            }
        }
        Ok(())
    }

    /// Axis-aligned bounds as (min, max).
    pub fn bounds(&self) -> (Vec3<f64>, Vec3<f64>) {
        let mut lo = vec3(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = vec3(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = vec3(lo.x.min(v.x), lo.y.min(v.y), lo.z.min(v.z));
            hi = vec3(hi.x.max(v.x), hi.y.max(v.y), hi.z.max(v.z));
        }
        (lo, hi)
    }

    pub fn centroid(&self) -> Vec3<f64> {
        let mut c = Vec3::zero();
        for v in &self.vertices {
            c = c + *v;
        }
        c.scale(1.0 / self.vertices.len().max(1) as f64)
    }
}

/// Dense per-vertex vectors of a declared dimension (3 for offsets/normals,
/// 16 for canonical features).
#[derive(Clone, Debug)]
pub struct VertexField<R = f64> {
    pub dim: usize,
    data: Vec<R>,
}

impl<R: Real> VertexField<R> {
    pub fn zeros(dim: usize, verts: usize) -> Self {
        VertexField {
            dim,
            data: vec![R::lit(0.0); dim * verts],
        }
    }

    pub fn from_rows(dim: usize, data: Vec<R>) -> Self {
        assert_eq!(data.len() % dim, 0, "field data not a multiple of dim");
        VertexField { dim, data }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[R] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [R] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn raw(&self) -> &[R] {
        &self.data
    }

    pub fn raw_mut(&mut self) -> &mut [R] {
        &mut self.data
    }

    pub fn vec3_row(&self, i: usize) -> Vec3<R> {
        debug_assert_eq!(self.dim, 3);
        let r = self.row(i);
        vec3(r[0], r[1], r[2])
    }

    pub fn set_vec3_row(&mut self, i: usize, v: Vec3<R>) {
        debug_assert_eq!(self.dim, 3);
        let r = self.row_mut(i);
        r[0] = v.x;
        r[1] = v.y;
        r[2] = v.z;
    }

    pub fn values(&self) -> VertexField<f64> {
        VertexField {
            dim: self.dim,
            data: self.data.iter().map(|x| x.value()).collect(),
        }
    }

    pub fn lift<S: Real>(src: &VertexField<f64>) -> VertexField<S> {
        VertexField {
            dim: src.dim,
            data: src.data.iter().map(|&x| S::lit(x)).collect(),
        }
    }
}

/// Per-vertex unit normals plus the vertices that had no non-degenerate
/// incident face (those fall back to (0,1,0)).
pub struct Normals<R = f64> {
    pub field: VertexField<R>,
    pub isolated: Vec<usize>,
}

/// Area-weighted vertex normals. Summing un-normalized face cross products is
/// the area weighting; zero-area faces contribute nothing.
pub fn compute_normals<R: Real>(mesh: &Mesh<R>) -> Normals<R> {
    let n = mesh.vertex_count();
    let mut acc: Vec<Vec3<R>> = vec![Vec3::zero(); n];
    let mut touched = vec![false; n];
    for f in &mesh.faces {
        let (a, b, c) = (mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]);
        let cr = (b - a).cross(c - a);
        let area2 = cr.norm().value();
        if area2 <= 1e-14 {
            continue;
        }
        for &vi in f {
            acc[vi] = acc[vi] + cr;
            touched[vi] = true;
        }
    }
    let mut field = VertexField::zeros(3, n);
    let mut isolated = Vec::new();
    for i in 0..n {
        if touched[i] && acc[i].norm().value() > 1e-14 {
            field.set_vec3_row(i, acc[i].normalized());
        } else {
            field.set_vec3_row(i, vec3(R::lit(0.0), R::lit(1.0), R::lit(0.0)));
            isolated.push(i);
        }
    }
    Normals { field, isolated }
}

/// Vertex pairing across the x=0 plane. `partner[i] == i` marks an on-plane
/// vertex.
#[derive(Clone, Debug)]
pub struct MirrorPairing {
    pub partner: Vec<usize>,
}

/// Nearest-mirror matching at `MIRROR_TOL`. Every vertex must either sit on
/// the plane or have a partner at its mirrored position.
pub fn mirror_pairing(mesh: &Mesh<f64>) -> Result<MirrorPairing, GeometryError> {
    let n = mesh.vertex_count();
    let mut partner = vec![usize::MAX; n];
    let tol2 = MIRROR_TOL * MIRROR_TOL;
    for i in 0..n {
        let v = mesh.vertices[i];
        let target = vec3(-v.x, v.y, v.z);
        let mut best = usize::MAX;
        let mut best_d = tol2;
        for j in 0..n {
            let d = (mesh.vertices[j] - target).norm_sq();
            if d <= best_d {
                best_d = d;
                best = j;
            }
        }
        if best == usize::MAX {
            return Err(GeometryError::UnpairedVertex {
                vertex: i,
                position: v,
            });
        }
        partner[i] = best;
    }
    Ok(MirrorPairing { partner })
}

/// Projects a dim-3 field onto the mirror-symmetric subspace: each pair is
/// replaced by the average of itself and its partner's mirror image, which
/// zeroes the x-component on the plane and is idempotent.
pub fn symmetrize_with<R: Real>(field: &VertexField<R>, pairing: &MirrorPairing) -> VertexField<R> {
    assert_eq!(field.dim, 3, "symmetrize expects a dim-3 field");
    assert_eq!(field.len(), pairing.partner.len());
    let mut out = VertexField::zeros(3, field.len());
    for i in 0..field.len() {
        let j = pairing.partner[i];
        let fi = field.vec3_row(i);
        let fj = field.vec3_row(j);
        let mirrored = vec3(-fj.x, fj.y, fj.z);
        out.set_vec3_row(i, (fi + mirrored).scale(0.5));
    }
    out
}

/// Convenience wrapper computing the pairing from the mesh.
pub fn symmetrize<R: Real>(
    field: &VertexField<R>,
    mesh: &Mesh<f64>,
) -> Result<VertexField<R>, GeometryError> {
    if field.len() != mesh.vertex_count() {
        return Err(GeometryError::FieldSizeMismatch {
            expected: mesh.vertex_count(),
            got: field.len(),
        });
    }
    let pairing = mirror_pairing(mesh)?;
    Ok(symmetrize_with(field, &pairing))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_cube() -> Mesh<f64> {
        // 8 corners, 12 triangles, CCW from outside
        let vs = [
            [-0.5, -0.5, -0.5],
            [0.5, -0.5, -0.5],
            [0.5, 0.5, -0.5],
            [-0.5, 0.5, -0.5],
            [-0.5, -0.5, 0.5],
            [0.5, -0.5, 0.5],
            [0.5, 0.5, 0.5],
            [-0.5, 0.5, 0.5],
        ];
        // faces split along the tetrahedral diagonals {0,2,5,7} so every
        // corner sees equal area from its three faces and the area-weighted
        // normal is exactly the corner diagonal
        let faces = [
            // -z
            [0, 2, 1],
            [0, 3, 2],
            // +z
            [4, 5, 7],
            [5, 6, 7],
            // -y
            [0, 1, 5],
            [0, 5, 4],
            // +y
            [3, 7, 2],
            [2, 7, 6],
            // -x
            [0, 4, 7],
            [0, 7, 3],
            // +x
            [1, 2, 5],
            [2, 6, 5],
        ];
        Mesh {
            vertices: vs.iter().map(|v| vec3(v[0], v[1], v[2])).collect(),
            faces: faces.to_vec(),
        }
    }

    #[test]
    fn cube_normals_are_corner_diagonals() {
        // hand oracle: each corner touches three unit-area... two triangles per
        // face; area-weighted average of the three axis normals at a corner is
        // the diagonal direction (+-1,+-1,+-1)/sqrt(3)
        let m = unit_cube();
        let normals = compute_normals(&m);
        assert!(normals.isolated.is_empty());
        for (i, v) in m.vertices.iter().enumerate() {
            let n = normals.field.vec3_row(i);
            let expect = vec3(v.x.signum(), v.y.signum(), v.z.signum()).scale(1.0 / 3f64.sqrt());
            assert!((n - expect).norm() < 1e-12, "vertex {}: {:?} vs {:?}", i, n, expect);
        }
    }

    #[test]
    fn planar_triangle_normal_is_plus_z() {
        let m = Mesh {
            vertices: vec![vec3(0.0, 0.0, 0.0), vec3(1.0, 0.0, 0.0), vec3(0.0, 1.0, 0.0)],
            faces: vec![[0, 1, 2]],
        };
        let n = compute_normals(&m);
        for i in 0..3 {
            let v = n.field.vec3_row(i);
            assert!((v - vec3(0.0, 0.0, 1.0)).norm() < 1e-15);
        }
    }

    fn icosphere() -> Mesh<f64> {
        // icosahedron, one subdivision, projected to the unit sphere
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut vs: Vec<Vec3<f64>> = vec![
            vec3(-1.0, t, 0.0),
            vec3(1.0, t, 0.0),
            vec3(-1.0, -t, 0.0),
            vec3(1.0, -t, 0.0),
            vec3(0.0, -1.0, t),
            vec3(0.0, 1.0, t),
            vec3(0.0, -1.0, -t),
            vec3(0.0, 1.0, -t),
            vec3(t, 0.0, -1.0),
            vec3(t, 0.0, 1.0),
            vec3(-t, 0.0, -1.0),
            vec3(-t, 0.0, 1.0),
        ]
        .into_iter()
        .map(|v| v.normalized())
        .collect();
        let faces0 = [
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        let mut midcache = std::collections::HashMap::new();
        let mut faces = Vec::new();
        let mut mid = |a: usize, b: usize, vs: &mut Vec<Vec3<f64>>| -> usize {
            let key = (a.min(b), a.max(b));
            *midcache.entry(key).or_insert_with(|| {
                let m = (vs[a] + vs[b]).scale(0.5).normalized();
                vs.push(m);
                vs.len() - 1
            })
        };
        for f in faces0 {
            let ab = mid(f[0], f[1], &mut vs);
            let bc = mid(f[1], f[2], &mut vs);
            let ca = mid(f[2], f[0], &mut vs);
            faces.push([f[0], ab, ca]);
            faces.push([f[1], bc, ab]);
            faces.push([f[2], ca, bc]);
            faces.push([ab, bc, ca]);
        }
        Mesh { vertices: vs, faces }
    }

    #[test]
    fn icosphere_normals_match_positions() {
        let m = icosphere();
        let n = compute_normals(&m);
        for i in 0..m.vertex_count() {
            let want = m.vertices[i].normalized();
            let got = n.field.vec3_row(i);
            assert!((want - got).norm() < 1e-6, "vertex {}", i);
        }
    }

    #[test]
    fn normals_unit_length_and_scale_invariant() {
        let m = unit_cube();
        let scaled = Mesh {
            vertices: m.vertices.iter().map(|v| v.scale(7.3)).collect(),
            faces: m.faces.clone(),
        };
        let n1 = compute_normals(&m);
        let n2 = compute_normals(&scaled);
        for i in 0..m.vertex_count() {
            assert!((n1.field.vec3_row(i).norm() - 1.0).abs() < 1e-9);
            assert!((n1.field.vec3_row(i) - n2.field.vec3_row(i)).norm() < 1e-12);
        }
    }

    #[test]
    fn degenerate_only_vertex_gets_flagged_default_normal() {
        let m = Mesh {
            vertices: vec![vec3(0.0, 0.0, 0.0), vec3(1.0, 0.0, 0.0), vec3(2.0, 0.0, 0.0)],
            faces: vec![[0, 1, 2]],
        };
        let n = compute_normals(&m);
        assert_eq!(n.isolated, vec![0, 1, 2]);
        assert!((n.field.vec3_row(0) - vec3(0.0, 1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn pairing_is_involution_on_cube() {
        let m = unit_cube();
        let p = mirror_pairing(&m).unwrap();
        for i in 0..m.vertex_count() {
            assert_eq!(p.partner[p.partner[i]], i);
            let v = m.vertices[i];
            let w = m.vertices[p.partner[i]];
            assert!((w - vec3(-v.x, v.y, v.z)).norm() < 1e-12);
        }
    }

    #[test]
    fn unpaired_vertex_is_an_error_naming_it() {
        let m = Mesh {
            vertices: vec![vec3(0.3, 0.0, 0.0)],
            faces: vec![],
        };
        match mirror_pairing(&m) {
            Err(GeometryError::UnpairedVertex { vertex, .. }) => assert_eq!(vertex, 0),
            other => panic!("expected UnpairedVertex, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn symmetrize_fixed_point_and_averaging() {
        let m = unit_cube();
        let pairing = mirror_pairing(&m).unwrap();
        // already symmetric: unchanged
        let mut f = VertexField::zeros(3, 8);
        for i in 0..8 {
            let v = m.vertices[i];
            f.set_vec3_row(i, vec3(0.2 * v.x.signum(), 0.1, -0.3));
        }
        let s = symmetrize_with(&f, &pairing);
        for i in 0..8 {
            assert!((s.vec3_row(i) - f.vec3_row(i)).norm() < 1e-15);
        }
        // pair (1,0,0) / (0,0,0) -> (0.5,0,0) and its mirror (-0.5,0,0)
        let mut g = VertexField::zeros(3, 8);
        g.set_vec3_row(0, vec3(1.0, 0.0, 0.0));
        let pcw = pairing.partner[0];
        let sg = symmetrize_with(&g, &pairing);
        assert!((sg.vec3_row(0) - vec3(0.5, 0.0, 0.0)).norm() < 1e-15);
        assert!((sg.vec3_row(pcw) - vec3(-0.5, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn symmetrize_zeroes_x_on_plane() {
        let m = Mesh {
            vertices: vec![vec3(0.0, 0.5, 0.2)],
            faces: vec![],
        };
        let mut f = VertexField::zeros(3, 1);
        f.set_vec3_row(0, vec3(0.3, 0.1, 0.2));
        let s = symmetrize(&f, &m).unwrap();
        assert!((s.vec3_row(0) - vec3(0.0, 0.1, 0.2)).norm() < 1e-15);
    }

    #[test]
    fn symmetrize_is_idempotent() {
        let m = unit_cube();
        let pairing = mirror_pairing(&m).unwrap();
        let mut f = VertexField::zeros(3, 8);
        for i in 0..8 {
            f.set_vec3_row(
                i,
                vec3(0.37 * i as f64, -0.2 * (i as f64).sin(), 0.11 * (i * i) as f64),
            );
        }
        let s1 = symmetrize_with(&f, &pairing);
        let s2 = symmetrize_with(&s1, &pairing);
        for i in 0..8 {
            assert!((s1.vec3_row(i) - s2.vec3_row(i)).norm() < 1e-15);
        }
        // mirror equivariance
        for i in 0..8 {
            let j = pairing.partner[i];
            let a = s1.vec3_row(i);
            let b = s1.vec3_row(j);
            assert!((a - vec3(-b.x, b.y, b.z)).norm() < 1e-15);
        }
    }
}
