use quadfit::fit::view_rot;
use quadfit::geometry::Mesh;
use quadfit::harness::metrics::eval_iou;
use quadfit::harness::synth::{generate_views, synth_quadruped, SynthSpec};
use quadfit::objective::{distance_transform, mask_loss, L1Opts};
use quadfit::render::{rasterize_visibility, Camera};

fn main() {
    let scene = synth_quadruped(&SynthSpec::default());
    let cam = Camera::with_size(64, 64);
    let views = generate_views(&scene, &cam, 4, 0.0, 11, 1);
    let v = &views[1];
    let dt = distance_transform(&v.mask, 64, 64).dist;
    let cases: [(f64, f64); 3] = [(v.azimuth_deg, 12.0), (178.9, -3.4), (178.9, 12.0)];
    for (az, el) in cases {
        let rot = view_rot(az.to_radians(), el.to_radians(), 0.0);
        let posed = Mesh {
            vertices: scene.rest_mesh.vertices.iter().map(|&p| rot.apply(p)).collect(),
            faces: scene.rest_mesh.faces.clone(),
        };
        let vis = rasterize_visibility(&posed, &cam.basis(), 1);
        let lm: f64 = mask_loss(&vis.mask, &v.mask, &dt, 0.1, L1Opts::hard());
        let iou = eval_iou(&vis.mask, &v.mask);
        let pred_area: f64 = vis.mask.iter().sum();
        let tgt_area: f64 = v.mask.iter().sum();
        println!("az {:.1} el {:.1}: hardLm {:.4} IoU {:.3} pred_area {} target_area {}", az, el, lm, iou, pred_area, tgt_area);
    }
}
