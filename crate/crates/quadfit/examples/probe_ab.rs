use quadfit::fit::view_rot;
use quadfit::geometry::Mesh;
use quadfit::harness::metrics::eval_iou;
use quadfit::harness::synth::{generate_views, synth_quadruped, SynthSpec, VIEW_ELEVATION_DEG};
use quadfit::render::{rasterize_visibility, Camera};

fn main() {
    let scene = synth_quadruped(&SynthSpec::default());
    let cam = Camera::with_size(64, 64);
    let views = generate_views(&scene, &cam, 2, 0.0, 11, 1);
    for v in &views {
        // fit-path render at exact GT params
        let rot = view_rot(
            v.azimuth_deg.to_radians(),
            VIEW_ELEVATION_DEG.to_radians(),
            0.0,
        );
        let posed = Mesh {
            vertices: scene.posed_mesh.vertices.iter().map(|&p| rot.apply(p)).collect(),
            faces: scene.posed_mesh.faces.clone(),
        };
        let vis = rasterize_visibility(&posed, &cam.basis(), 1);
        println!("az {:.1}: IoU(fit render, target) = {:.4}", v.azimuth_deg, eval_iou(&vis.mask, &v.mask));
        // also check rest pose assumption: posed_mesh includes gt articulation (0 here)
    }
}
