use quadfit::autodiff::{finite_diff_check, Real, ScalarFn};
use quadfit::fit::view_rot;
use quadfit::geometry::{compute_normals, Mesh, VertexField};
use quadfit::harness::synth::{generate_views, synth_quadruped, SynthSpec, SynthScene};
use quadfit::math::{vec3, Vec3};
use quadfit::objective::{distance_transform, feature_loss, image_loss, mask_loss, L1Opts};
use quadfit::render::{interpolate_attrs_where, rasterize_visibility, shade_lambertian_where, soft_silhouette, Camera, FEATURE_DIM, Light};

struct F {
    scene: SynthScene,
    tmask: Vec<f64>, timg: Vec<f64>, tfeat: Vec<f64>, dt: Vec<f64>,
    cam: Camera, keep: Vec<bool>, term: usize,
}
impl ScalarFn for F {
    fn eval<R: Real>(&self, p: &[R]) -> R {
        let basis = self.cam.basis();
        let rot = view_rot(p[0], p[1], p[2]);
        let t = vec3(p[3], p[4], p[5]);
        let posed = Mesh {
            vertices: self.scene.rest_mesh.vertices.iter().map(|&q| rot.apply(Vec3::from_f64(q)) + t).collect(),
            faces: self.scene.rest_mesh.faces.clone(),
        };
        let soft = soft_silhouette(&posed, &basis, 4e-4).unwrap();
        let vis = rasterize_visibility(&posed.to_f64(), &basis, 1);
        let n = compute_normals(&posed);
        let albedo = VertexField::<f64>::lift(&self.scene.albedo);
        let feat = VertexField::<f64>::lift(&self.scene.feature);
        let imgs = interpolate_attrs_where(&posed, &vis, &basis, &[&albedo, &feat, &n.field], Some(&self.keep));
        let light = Light { ambient: p[6].sigmoid(), diffuse: p[7].sigmoid().scale(0.5).add_const(0.5), direction: vec3(p[8], p[9], p[10]).normalized() };
        let rgb = shade_lambertian_where(&imgs[0], &imgs[2], &vis, &light, Some(&self.keep));
        match self.term {
            0 => mask_loss(&soft, &self.tmask, &self.dt, 1.0, L1Opts::default()),
            1 => image_loss(&rgb.data, &self.timg, 3, &soft, &self.tmask, L1Opts::default()),
            _ => feature_loss(&imgs[1].data, &self.tfeat, FEATURE_DIM, &soft, &self.tmask),
        }
    }
}

fn main() {
    let scene = synth_quadruped(&SynthSpec::default());
    let cam = Camera::with_size(64, 64);
    let views = generate_views(&scene, &cam, 1, 0.0, 11, 1);
    let v = &views[0];
    let dt = distance_transform(&v.mask, 64, 64).dist;
    let keep: Vec<bool> = v.mask.iter().map(|&m| m > 0.0).collect();
    let off: f64 = std::env::args().nth(1).map(|a| a.parse().unwrap()).unwrap_or(0.0);
    let p = vec![(v.azimuth_deg - off).to_radians(), 12f64.to_radians(), 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.25, 0.9, 0.35];
    for term in 0..3 {
        let f = F { scene: synth_quadruped(&SynthSpec::default()), tmask: v.mask.clone(), timg: v.image.clone(), tfeat: v.feature.clone(), dt: dt.clone(), cam: cam.clone(), keep: keep.clone(), term };
        let r = finite_diff_check(&f, &p, 1e-5, None);
        println!("term {}: maxrel {:.2e} skipped {:?}", term, r.max_rel_err, r.skipped);
        println!("  analytic {:?}", r.analytic.iter().map(|x| (x*1e4).round()/1e4).collect::<Vec<_>>());
        println!("  numeric  {:?}", r.numeric.iter().map(|x| (x*1e4).round()/1e4).collect::<Vec<_>>());
    }
}
