use quadfit::fit::view_rot;
use quadfit::geometry::Mesh;
use quadfit::harness::synth::{generate_views, synth_quadruped, SynthSpec};
use quadfit::objective::{distance_transform, mask_loss, L1Opts};
use quadfit::render::{rasterize_visibility, soft_silhouette, Camera};

fn main() {
    let scene = synth_quadruped(&SynthSpec::default());
    let cam = Camera::with_size(64, 64);
    let views = generate_views(&scene, &cam, 4, 0.0, 11, 1);
    let basis = cam.basis();
    for (vi, v) in views.iter().enumerate() {
        let dt = distance_transform(&v.mask, 64, 64).dist;
        let lm = |az_deg: f64, el_deg: f64| -> f64 {
            let rot = view_rot(az_deg.to_radians(), el_deg.to_radians(), 0.0);
            let posed = Mesh {
                vertices: scene.rest_mesh.vertices.iter().map(|&p| rot.apply(p)).collect(),
                faces: scene.rest_mesh.faces.clone(),
            };
            let soft = soft_silhouette(&posed, &basis, 4e-4).unwrap();
            let _ = rasterize_visibility(&posed, &basis, 1);
            mask_loss(&soft, &v.mask, &dt, 0.1, L1Opts::default())
        };
        let gt = v.azimuth_deg.rem_euclid(360.0);
        println!("view {} gt az {:.1}: Lm(gt,12)={:.4} Lm(gt,0)={:.4} Lm(mirror,12)={:.4}", vi, gt, lm(gt, 12.0), lm(gt, 0.0), lm(360.0-gt, 12.0));
        let line: Vec<String> = (0..24).map(|k| {
            let az = k as f64 * 15.0 + 7.5;
            format!("{:.0}:{:.3}", az, lm(az, 12.0))
        }).collect();
        println!("  el12: {}", line.join(" "));
    }
}
