use quadfit::fit::{fit_instance, FitConfig};
use quadfit::render::Camera;
use quadfit::selftest::round_trip_setup;
use quadfit::harness::synth::SynthSpec;

fn main() {
    let t = std::time::Instant::now();
    let cam = Camera::with_size(64, 64);
    let setup = round_trip_setup(&SynthSpec::default(), &cam, 4, 0.0, 11);
    println!("gt azimuths: {:?}", setup.gt_azimuths.iter().map(|a| a.round()).collect::<Vec<_>>());
    let mut weights = quadfit::objective::LossWeights::default();
    weights.dt = 1.0;
    let config = FitConfig {
        weights,
        iterations: 1100,
        batch: 4,
        camera: cam,
        stage2_start: 2.0,
        stage3_start: 2.0,
        disc_enabled: false,
        lambda_switch: 0.6,
        az_grid_until: 1.0,
        lr_decay_from: 0.7,
        explore_until: 0.25,
        explore_floor: 0.4,
        disc_window: (0.5, 0.51),
        sigma_soft: 1e-4,
        optimize_bank_offsets: false,
        lr_pose: 3e-4,
        seed: 21,
        ..Default::default()
    };
    let r = fit_instance(&setup.targets, &setup.bank, &setup.surfaces, &config).unwrap();
    println!("elapsed {:.0}s", t.elapsed().as_secs_f64());
    for (i, v) in r.views.iter().enumerate() {
        let gt = setup.gt_azimuths[i];
        let d = (v.azimuth_deg - gt).rem_euclid(360.0);
        let err = d.min(360.0 - d);
        println!("view {}: az {:.1} gt {:.1} err {:.2} | el {:.1} roll {:.1} | hardLm {:.2e} iou {:.3} | hyp {:?} sc {:?}",
            i, v.azimuth_deg, gt, err, v.elevation_deg, v.roll_deg, v.hard_mask_loss, v.iou,
            v.hypothesis_azimuths.map(|a| a.round()), v.scores.map(|s| (s*100.0).round()/100.0));
    }
    for h in r.history.iter().step_by(200) {
        println!("it {} mask {:.4} img {:.4} feat {:.4} total {:.3}", h.iteration, h.mask, h.image, h.feature, h.total);
    }
}
