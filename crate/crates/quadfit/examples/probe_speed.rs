use quadfit::fit::{fit_instance, FitConfig};
use quadfit::render::Camera;
use quadfit::selftest::round_trip_setup;
use quadfit::harness::synth::SynthSpec;

fn run(label: &str, size: usize, sigma: f64, batch: usize) {
    let cam = Camera::with_size(size, size);
    let setup = round_trip_setup(&SynthSpec::default(), &cam, 4, 0.0, 11);
    let t = std::time::Instant::now();
    let config = FitConfig {
        iterations: 20, batch, camera: cam,
        stage2_start: 2.0, stage3_start: 2.0, disc_enabled: false,
        sigma_soft: sigma, seed: 21, ..Default::default()
    };
    let r = fit_instance(&setup.targets, &setup.bank, &setup.surfaces, &config).unwrap();
    println!("{}: {:.0} ms/iter (total loss {:.2})", label, t.elapsed().as_secs_f64()*50.0, r.history.last().unwrap().total);
}

fn main() {
    run("64px sigma 2e-3 batch4", 64, 2e-3, 4);
    run("64px sigma 4e-4 batch4", 64, 4e-4, 4);
    run("64px sigma 1e-4 batch4", 64, 1e-4, 4);
    run("48px sigma 4e-4 batch4", 48, 4e-4, 4);
    run("64px sigma 4e-4 batch2", 64, 4e-4, 2);
}
