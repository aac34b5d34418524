use quadfit::fit::{fit_instance, FitConfig, FitSurfaces, ViewTarget};
use quadfit::render::Camera;
use quadfit::harness::synth::{generate_views, synth_quadruped, SynthSpec};
use quadfit::bank::SemanticBank;

fn main() {
    let scene = synth_quadruped(&SynthSpec::default());
    let cam = Camera::with_size(64, 64);
    let views = generate_views(&scene, &cam, 1, 0.0, 11, 1); // az 29.5
    let v = &views[0];
    println!("gt az {:.2} el 12", v.azimuth_deg);
    let targets = vec![ViewTarget {
        image: v.image.clone(), mask: v.mask.clone(), feature: v.feature.clone(), phi: Some(v.phi.clone()),
    }];
    let bank = SemanticBank::with_zero_offsets(scene.rest_mesh.clone(), 4, 2, 5);
    let surfaces = FitSurfaces { albedo: scene.albedo.clone(), feature: scene.feature.clone() };
    for (label, iters, lr, dtw) in [("lr1e-2 dt0.5", 400usize, 1e-2, 0.5), ("lr1e-2 dt1.0", 400, 1e-2, 1.0), ("lr3e-3 dt1.0", 400, 3e-3, 1.0), ("lr1e-2 dt2.0", 400, 1e-2, 2.0)] {
        let mut weights = quadfit::objective::LossWeights::default();
        weights.dt = dtw;
        let config = FitConfig {
            iterations: iters, batch: 1, camera: cam.clone(),
            stage2_start: 2.0, stage3_start: 2.0, disc_enabled: false,
            sigma_soft: 4e-4, optimize_bank_offsets: false, weights,
            lr_pose: lr, az_grid_every: 60, az_grid_points: 16, az_grid_until: 0.5,
            lr_decay_from: 0.6, lr_late_scale: 0.2,
            explore_until: 0.0, explore_floor: 0.0,
            lambda_switch: 0.5,
            seed: 3, ..Default::default()
        };
        let r = fit_instance(&targets, &bank, &surfaces, &config).unwrap();
        let vf = &r.views[0];
        println!("{}: az {:.2} (err {:.2}) el {:.2} roll {:.2} t {:?} iou {:.3} hardLm {:.2e}",
            label, vf.azimuth_deg, (vf.azimuth_deg - v.azimuth_deg).abs(), vf.elevation_deg, vf.roll_deg,
            vf.translation.map(|t| (t*100.0).round()/100.0), vf.iou, vf.hard_mask_loss);
    }
}
