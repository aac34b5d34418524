use quadfit::fit::view_rot;
use quadfit::geometry::Mesh;
use quadfit::harness::synth::{generate_views, synth_quadruped, SynthSpec};
use quadfit::objective::{distance_transform, mask_loss, L1Opts};
use quadfit::render::{rasterize_visibility, soft_silhouette, Camera};

fn main() {
    let scene = synth_quadruped(&SynthSpec::default());
    let cam = Camera::with_size(64, 64);
    let views = generate_views(&scene, &cam, 4, 0.0, 11, 1);
    let v = &views[3]; // gt 146.8 el 12
    let dt = distance_transform(&v.mask, 64, 64).dist;
    let basis = cam.basis();
    let lm = |az: f64, el: f64| -> f64 {
        let rot = view_rot(az.to_radians(), el.to_radians(), 0.0);
        let posed = Mesh {
            vertices: scene.rest_mesh.vertices.iter().map(|&p| rot.apply(p)).collect(),
            faces: scene.rest_mesh.faces.clone(),
        };
        let soft = soft_silhouette(&posed, &basis, 1e-4).unwrap();
        let _ = rasterize_visibility(&posed, &basis, 1);
        mask_loss(&soft, &v.mask, &dt, 1.0, L1Opts::default())
    };
    println!("gt az {:.1}", v.azimuth_deg);
    for (az, el) in [(146.8, 11.46), (146.25, 11.46), (146.25, 0.0), (146.25, 22.9), (151.875, 11.46), (140.6, 11.46), (180.0, -3.0), (177.0, 0.0), (174.4, 0.0), (174.4, 11.46)] {
        println!("az {:6.1} el {:5.1}: mask {:.4}", az, el, lm(az, el));
    }
}
