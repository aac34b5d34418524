use quadfit::autodiff::{AdamParams, AdamState, Real, Tape};
use quadfit::fit::view_rot;
use quadfit::geometry::{compute_normals, Mesh, VertexField};
use quadfit::harness::synth::{generate_views, synth_quadruped, SynthSpec};
use quadfit::math::{vec3, Vec3};
use quadfit::objective::{distance_transform, feature_loss, image_loss, mask_loss, L1Opts};
use quadfit::render::{interpolate_attrs_where, rasterize_visibility, shade_lambertian_where, soft_silhouette, Camera, FEATURE_DIM, Light};

fn main() {
    let scene = synth_quadruped(&SynthSpec::default());
    let cam = Camera::with_size(64, 64);
    let views = generate_views(&scene, &cam, 1, 0.0, 11, 1);
    let v = &views[0];
    let dt = distance_transform(&v.mask, 64, 64).dist;
    let basis = cam.basis();
    let keep: Vec<bool> = v.mask.iter().map(|&m| m > 0.0).collect();
    // params: az, el, roll, tx, ty, tz, light(5)
    let off: f64 = std::env::args().nth(2).map(|a| a.parse().unwrap()).unwrap_or(0.0);
    let mut p = vec![(v.azimuth_deg - off).to_radians(), 12f64.to_radians(), 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.25, 0.9, 0.35];
    let mut adam = AdamState::new(p.len(), AdamParams::with_lr(3e-4));
    let sgd = std::env::args().nth(1).and_then(|a| a.parse::<f64>().ok());
    let iters: usize = std::env::args().nth(3).map(|a| a.parse().unwrap()).unwrap_or(120);
    for it in 0..iters {
        let tape = Tape::new();
        let vars = tape.vars(&p);
        let rot = view_rot(vars[0], vars[1], vars[2]);
        let t = vec3(vars[3], vars[4], vars[5]);
        let posed = Mesh {
            vertices: scene.rest_mesh.vertices.iter().map(|&q| rot.apply(Vec3::from_f64(q)) + t).collect(),
            faces: scene.rest_mesh.faces.clone(),
        };
        let soft = soft_silhouette(&posed, &basis, 4e-4).unwrap();
        let vis = rasterize_visibility(&posed.to_f64(), &basis, 1);
        let n = compute_normals(&posed);
        let albedo = VertexField::<f64>::lift(&scene.albedo);
        let feat = VertexField::<f64>::lift(&scene.feature);
        let imgs = interpolate_attrs_where(&posed, &vis, &basis, &[&albedo, &feat, &n.field], Some(&keep));
        let light = Light { ambient: vars[6].sigmoid(), diffuse: vars[7].sigmoid().scale(0.5).add_const(0.5), direction: vec3(vars[8], vars[9], vars[10]).normalized() };
        let rgb = shade_lambertian_where(&imgs[0], &imgs[2], &vis, &light, Some(&keep));
        let lm = mask_loss(&soft, &v.mask, &dt, 1.0, L1Opts::default());
        let li = image_loss(&rgb.data, &v.image, 3, &soft, &v.mask, L1Opts::default());
        let lf = feature_loss(&imgs[1].data, &v.feature, FEATURE_DIM, &soft, &v.mask);
        let total = lm.scale(10.0) + li + lf.scale(1.0);
        let g = tape.backward(total);
        let grads = g.wrt_slice(&vars);
        if it % 50 == 0 {
            println!("it {:3}: total {:.4} mask {:.4} az {:.2} el {:.2} roll {:.2} t ({:.3},{:.3},{:.3})",
                it, total.value(), lm.value(), p[0].to_degrees(), p[1].to_degrees(), p[2].to_degrees(), p[3], p[4], p[5]);
        }
        match sgd {
            Some(lr) => {
                for (pi, g) in p.iter_mut().zip(&grads) {
                    *pi -= lr * g;
                }
            }
            None => adam.step(&mut p, &grads),
        }
    }
    println!("final az {:.2} (gt {:.2}) el {:.2}", p[0].to_degrees(), v.azimuth_deg, p[1].to_degrees());
}
