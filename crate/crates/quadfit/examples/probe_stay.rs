use quadfit::fit::{fit_instance, FitConfig, FitSurfaces, ViewTarget};
use quadfit::render::Camera;
use quadfit::harness::synth::{generate_views, synth_quadruped, SynthSpec};
use quadfit::bank::SemanticBank;

fn main() {
    let scene = synth_quadruped(&SynthSpec::default());
    let cam = Camera::with_size(64, 64);
    let views = generate_views(&scene, &cam, 1, 0.0, 11, 1);
    let v = &views[0];
    let targets = vec![ViewTarget {
        image: v.image.clone(), mask: v.mask.clone(), feature: v.feature.clone(), phi: Some(v.phi.clone()),
    }];
    let bank = SemanticBank::with_zero_offsets(scene.rest_mesh.clone(), 4, 2, 5);
    let surfaces = FitSurfaces { albedo: scene.albedo.clone(), feature: scene.feature.clone() };
    // start exactly at GT: az 29.55 in quadrant 0 -> raw = logit(29.55/90)
    let frac: f64 = v.azimuth_deg / 90.0;
    let raw = (frac / (1.0 - frac)).ln();
    println!("gt az {:.3} raw {:.4}", v.azimuth_deg, raw);
    let mut weights = quadfit::objective::LossWeights::default();
    weights.dt = 1.0;
    let config = FitConfig {
        iterations: 200, batch: 1, camera: cam.clone(),
        stage2_start: 2.0, stage3_start: 2.0, disc_enabled: false,
        sigma_soft: 4e-4, optimize_bank_offsets: false, weights,
        lr_pose: 1e-2, az_grid_every: 0,
        lr_decay_from: 0.0, lr_late_scale: 1.0, // pure exploit at base lr
        explore_until: 0.0, explore_floor: 0.0,
        lambda_switch: 0.0, // late weights from the start (feat x1)
        seed: 3, ..Default::default()
    };
    // hack: pre-seed via one grid refresh? No — instead run fit_instance with
    // az_grid_every=1..so it seeds at iter 0 then never again? az_grid_until small.
    let mut config2 = config.clone();
    config2.az_grid_every = 1;
    config2.az_grid_until = 0.01; // only iteration 0 refresh
    config2.az_grid_points = 64;  // dense: seeds within 0.7 deg
    let r = fit_instance(&targets, &bank, &surfaces, &config2).unwrap();
    let vf = &r.views[0];
    println!("after: az {:.2} (gt {:.2}) el {:.2} roll {:.2} t {:?} iou {:.3}",
        vf.azimuth_deg, v.azimuth_deg, vf.elevation_deg, vf.roll_deg, vf.translation, vf.iou);
    for h in r.history.iter().step_by(20) {
        println!("it {:3} mask {:.4} img {:.4} feat {:.4} total {:.3}", h.iteration, h.mask, h.image, h.feature, h.total);
    }
}
