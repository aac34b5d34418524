use quadfit::fit::view_rot;
use quadfit::geometry::{compute_normals, Mesh};
use quadfit::harness::synth::{generate_views, synth_quadruped, SynthSpec};
use quadfit::objective::{distance_transform, feature_loss, image_loss, mask_loss, L1Opts};
use quadfit::render::{interpolate_attrs, rasterize_visibility, soft_silhouette, Camera, FEATURE_DIM, Light};
use quadfit::math::vec3;

fn main() {
    let scene = synth_quadruped(&SynthSpec::default());
    let cam = Camera::with_size(64, 64);
    let views = generate_views(&scene, &cam, 1, 0.0, 11, 1);
    let v = &views[0];
    let dt = distance_transform(&v.mask, 64, 64).dist;
    let basis = cam.basis();
    let light = Light::new(scene.spec.ambient, scene.spec.diffuse, vec3(scene.spec.light_dir[0], scene.spec.light_dir[1], scene.spec.light_dir[2]));
    let evalp = |az_deg: f64| -> (f64, f64) {
        let rot = view_rot(az_deg.to_radians(), 12f64.to_radians(), 0.0);
        let posed = Mesh {
            vertices: scene.rest_mesh.vertices.iter().map(|&p| rot.apply(p)).collect(),
            faces: scene.rest_mesh.faces.clone(),
        };
        let soft = soft_silhouette(&posed, &basis, 4e-4).unwrap();
        let vis = rasterize_visibility(&posed, &basis, 1);
        let n = compute_normals(&posed);
        let imgs = interpolate_attrs(&posed, &vis, &basis, &[&scene.albedo, &scene.feature, &n.field]);
        let rgb = quadfit::render::shade_lambertian(&imgs[0], &imgs[2], &vis, &light);
        let lm: f64 = mask_loss(&soft, &v.mask, &dt, 1.0, L1Opts::default());
        let li: f64 = image_loss(&rgb.data, &v.image, 3, &soft, &v.mask, L1Opts::default());
        let lf: f64 = feature_loss(&imgs[1].data, &v.feature, FEATURE_DIM, &soft, &v.mask);
        (10.0*lm, 10.0*lm + li + 10.0*lf)
    };
    println!("gt az {:.2}", v.azimuth_deg);
    for k in -8..=8 {
        let az = v.azimuth_deg + k as f64 * 2.5;
        let (lm, rec) = evalp(az);
        println!("az {:+5.1}: mask {:.4} rec {:.4}", az - v.azimuth_deg, lm, rec);
    }
}
