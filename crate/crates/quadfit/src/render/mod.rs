//! Perspective camera, hard z-buffer rasterization, differentiable soft
//! silhouettes, attribute interpolation, and Lambertian shading.

mod raster;
mod soft;

pub use raster::{
    interpolate_attrs, interpolate_attrs_where, rasterize_attrs, rasterize_visibility, AttrImage,
    Visibility,
};
pub use soft::soft_silhouette;

use crate::autodiff::Real;
use crate::geometry::{Mesh, VertexField};
use crate::math::{vec3, Vec3};
use serde::{Deserialize, Serialize};

pub const FEATURE_DIM: usize = 16;

#[derive(Debug)]
pub enum RenderError {
    NonPositiveSigma(f64),
}

impl std::fmt::Display for RenderError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RenderError::NonPositiveSigma(s) => write!(f, "sigma_soft must be positive, got {}", s),
        }
    }
}

impl std::error::Error for RenderError {}

/// Pinhole camera. FOV applies across the image width; pixel coordinates are
/// continuous with (0,0) the top-left corner and y growing downward, so the
/// image center is (W/2, H/2).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Camera {
    pub fov_deg: f64,
    pub position: [f64; 3],
    pub look_at: [f64; 3],
    pub width: usize,
    pub height: usize,
}

impl Default for Camera {
    fn default() -> Self {
        Camera {
            fov_deg: 25.0,
            position: [0.0, 0.0, 10.0],
            look_at: [0.0, 0.0, 0.0],
            width: 256,
            height: 256,
        }
    }
}

/// Orthonormal camera frame derived once per camera.
#[derive(Clone, Copy, Debug)]
pub struct CameraBasis {
    pub right: Vec3<f64>,
    pub up: Vec3<f64>,
    pub forward: Vec3<f64>,
    pub position: Vec3<f64>,
    pub focal_px: f64,
    pub tan_half: f64,
    pub width: usize,
    pub height: usize,
}

pub const NEAR_PLANE: f64 = 1e-6;

impl Camera {
    pub fn with_size(width: usize, height: usize) -> Self {
        Camera {
            width,
            height,
            ..Camera::default()
        }
    }

    pub fn basis(&self) -> CameraBasis {
        let position = vec3(self.position[0], self.position[1], self.position[2]);
        let target = vec3(self.look_at[0], self.look_at[1], self.look_at[2]);
        let forward = (target - position).normalized();
        let world_up = vec3(0.0, 1.0, 0.0);
        let right = forward.cross(world_up).normalized();
        let up = right.cross(forward);
        let tan_half = (self.fov_deg.to_radians() / 2.0).tan();
        CameraBasis {
            right,
            up,
            forward,
            position,
            focal_px: self.width as f64 / 2.0 / tan_half,
            tan_half,
            width: self.width,
            height: self.height,
        }
    }
}

impl CameraBasis {
    /// Perspective projection to continuous pixel coordinates plus depth along
    /// the view axis. `None` when the point is at or behind the camera plane.
    pub fn project<R: Real>(&self, p: Vec3<R>) -> Option<(R, R, R)> {
        let d = p - Vec3::<R>::from_f64(self.position);
        let depth = d.dot(Vec3::from_f64(self.forward));
        if depth.value() <= NEAR_PLANE {
            return None;
        }
        let xc = d.dot(Vec3::from_f64(self.right));
        let yc = d.dot(Vec3::from_f64(self.up));
        let px = (xc / depth).scale(self.focal_px).add_const(self.width as f64 / 2.0);
        let py = (yc / depth).scale(-self.focal_px).add_const(self.height as f64 / 2.0);
        Some((px, py, depth))
    }

    /// Pixel -> normalized device coordinates where one unit is half the image
    /// width (the soft-silhouette distance metric).
    pub fn pixel_to_ndc(&self, px: f64, py: f64) -> (f64, f64) {
        let s = 2.0 / self.width as f64;
        ((px - self.width as f64 / 2.0) * s, (py - self.height as f64 / 2.0) * s)
    }

    pub fn ndc_scale(&self) -> f64 {
        2.0 / self.width as f64
    }
}

/// Directional light with ambient and diffuse intensities.
#[derive(Clone, Debug)]
pub struct Light<R = f64> {
    pub ambient: R,
    pub diffuse: R,
    pub direction: Vec3<R>,
}

impl<R: Real> Light<R> {
    pub fn new(ambient: R, diffuse: R, direction: Vec3<R>) -> Self {
        Light {
            ambient,
            diffuse,
            direction: direction.normalized(),
        }
    }
}

impl Light<f64> {
    pub fn lift<R: Real>(&self) -> Light<R> {
        Light {
            ambient: R::lit(self.ambient),
            diffuse: R::lit(self.diffuse),
            direction: Vec3::from_f64(self.direction),
        }
    }
}

/// All per-pixel render targets. The hard mask is 1 exactly where the depth is
/// finite; attribute planes are zero outside coverage.
pub struct RenderBuffers<R = f64> {
    pub width: usize,
    pub height: usize,
    pub mask: Vec<f64>,
    pub depth: Vec<f64>,
    pub face: Vec<u32>,
    pub albedo: AttrImage<R>,
    pub feature: AttrImage<R>,
    pub normal: AttrImage<R>,
    pub rgb: AttrImage<R>,
}

/// Rasterizes geometry plus the standard attribute set and applies shading.
pub fn render_scene<R: Real>(
    mesh: &Mesh<R>,
    albedo: &VertexField<R>,
    feature: &VertexField<R>,
    normals: &VertexField<R>,
    cam: &Camera,
    light: &Light<R>,
    jobs: usize,
) -> RenderBuffers<R> {
    let basis = cam.basis();
    let vis = rasterize_visibility(&mesh.to_f64(), &basis, jobs);
    let attrs = interpolate_attrs(mesh, &vis, &basis, &[albedo, feature, normals]);
    let mut it = attrs.into_iter();
    let albedo_img = it.next().unwrap();
    let feature_img = it.next().unwrap();
    let normal_img = it.next().unwrap();
    let rgb = shade_lambertian(&albedo_img, &normal_img, &vis, light);
    RenderBuffers {
        width: vis.width,
        height: vis.height,
        mask: vis.mask,
        depth: vis.depth,
        face: vis.face,
        albedo: albedo_img,
        feature: feature_img,
        normal: normal_img,
        rgb,
    }
}

/// Lambertian shading: per covered pixel,
/// (k_a + k_d * max{0, <l, n>}) * albedo, clamped into [0,1].
pub fn shade_lambertian<R: Real>(
    albedo: &AttrImage<R>,
    normal: &AttrImage<R>,
    vis: &Visibility,
    light: &Light<R>,
) -> AttrImage<R> {
    shade_lambertian_where(albedo, normal, vis, light, None)
}

/// Shading restricted to pixels where `filter` is true.
pub fn shade_lambertian_where<R: Real>(
    albedo: &AttrImage<R>,
    normal: &AttrImage<R>,
    vis: &Visibility,
    light: &Light<R>,
    filter: Option<&[bool]>,
) -> AttrImage<R> {
    assert_eq!(albedo.dim, 3);
    assert_eq!(normal.dim, 3);
    let npix = vis.width * vis.height;
    let mut out = AttrImage::zeros(3, npix);
    let l = light.direction.normalized();
    for p in 0..npix {
        if vis.face[p] == u32::MAX {
            continue;
        }
        if let Some(keep) = filter {
            if !keep[p] {
                continue;
            }
        }
        let nr = normal.row(p);
        let n = vec3(nr[0], nr[1], nr[2]);
        let nn = n.norm();
        // interpolated normals shrink; renormalize unless degenerate
        let n = if nn.value() > 1e-12 {
            vec3(n.x / nn, n.y / nn, n.z / nn)
        } else {
            n
        };
        let gain = light.ambient + light.diffuse * l.dot(n).relu();
        let a = albedo.row(p);
        let o = out.row_mut(p);
        for c in 0..3 {
            o[c] = (a[c] * gain).minr(R::lit(1.0)).maxr(R::lit(0.0));
        }
    }
    out
}
