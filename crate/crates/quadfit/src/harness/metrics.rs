//! Evaluation metrics: IoU, keypoint-transfer PCK, and the shared
//! linear-mapping PCK.

use crate::geometry::Mesh;
use crate::render::{rasterize_visibility, Camera};

/// One reconstructed view: the posed mesh in world space and its camera.
pub struct Recon {
    pub mesh: Mesh<f64>,
    pub camera: Camera,
}

/// Named 2D keypoints with visibility.
#[derive(Clone, Debug)]
pub struct KeypointSet {
    pub points: Vec<(String, [f64; 2], bool)>,
}

/// Intersection over union of binary masks (threshold 0.5).
pub fn eval_iou(pred: &[f64], target: &[f64]) -> f64 {
    assert_eq!(pred.len(), target.len());
    let mut inter = 0usize;
    let mut union = 0usize;
    for (p, t) in pred.iter().zip(target) {
        let p = *p >= 0.5;
        let t = *t >= 0.5;
        if p && t {
            inter += 1;
        }
        if p || t {
            union += 1;
        }
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Vertices that win the z-buffer within 1.5px of their projection.
pub fn visible_vertices(recon: &Recon) -> Vec<bool> {
    let basis = recon.camera.basis();
    let vis = rasterize_visibility(&recon.mesh, &basis, 1);
    let mut visible = vec![false; recon.mesh.vertex_count()];
    let proj: Vec<Option<(f64, f64, f64)>> =
        recon.mesh.vertices.iter().map(|&v| basis.project(v)).collect();
    for p in 0..vis.width * vis.height {
        let f = vis.face[p];
        if f == u32::MAX {
            continue;
        }
        let (cx, cy) = ((p % vis.width) as f64 + 0.5, (p / vis.width) as f64 + 0.5);
        for &vi in &recon.mesh.faces[f as usize] {
            if visible[vi] {
                continue;
            }
            if let Some((px, py, _)) = proj[vi] {
                let d2 = (px - cx) * (px - cx) + (py - cy) * (py - cy);
                if d2 <= 1.5 * 1.5 {
                    visible[vi] = true;
                }
            }
        }
    }
    visible
}

/// Keypoint transfer: map each source keypoint to its nearest visible source
/// vertex, project that vertex in the target reconstruction, and count it
/// correct within `threshold` * image size of the target keypoint.
pub fn eval_keypoint_transfer(
    source: &Recon,
    target: &Recon,
    source_kps: &KeypointSet,
    target_kps: &KeypointSet,
    threshold: f64,
) -> f64 {
    assert_eq!(source.mesh.vertex_count(), target.mesh.vertex_count());
    let vis = visible_vertices(source);
    let sbasis = source.camera.basis();
    let tbasis = target.camera.basis();
    let sproj: Vec<Option<(f64, f64, f64)>> =
        source.mesh.vertices.iter().map(|&v| sbasis.project(v)).collect();
    let img_size = target.camera.width.max(target.camera.height) as f64;
    let mut correct = 0usize;
    let mut total = 0usize;
    for ((_, skp, svis), (_, tkp, tviz)) in source_kps.points.iter().zip(&target_kps.points) {
        if !svis || !tviz {
            continue;
        }
        // nearest visible vertex in the source image
        let mut best: Option<(usize, f64)> = None;
        for (vi, ok) in vis.iter().enumerate() {
            if !ok {
                continue;
            }
            if let Some((px, py, _)) = sproj[vi] {
                let d2 = (px - skp[0]) * (px - skp[0]) + (py - skp[1]) * (py - skp[1]);
                if best.map_or(true, |(_, bd)| d2 < bd) {
                    best = Some((vi, d2));
                }
            }
        }
        let Some((vi, _)) = best else { continue };
        total += 1;
        if let Some((px, py, _)) = tbasis.project(target.mesh.vertices[vi]) {
            let d = ((px - tkp[0]) * (px - tkp[0]) + (py - tkp[1]) * (py - tkp[1])).sqrt();
            if d <= threshold * img_size {
                correct += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}

/// Cholesky solve of the ridge-regularized normal equations.
fn solve_least_squares(ata: &mut [Vec<f64>], atb: &[f64]) -> Vec<f64> {
    let n = atb.len();
    let ridge = 1e-10 * (1.0 + ata.iter().enumerate().map(|(i, r)| r[i]).sum::<f64>() / n as f64);
    for (i, row) in ata.iter_mut().enumerate() {
        row[i] += ridge;
    }
    // in-place Cholesky
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = ata[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                l[i][j] = s.max(1e-300).sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    // forward + back substitution
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = atb[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    x
}

/// Shared linear mapping from projected mesh vertices to keypoints: one
/// weight vector per keypoint, least-squares fit across all instances, then
/// PCK@threshold of the fitted predictions on `eval_instances` (defaults to
/// the training instances).
pub fn eval_pck_linear(
    recons: &[Recon],
    annotations: &[KeypointSet],
    threshold: f64,
    eval_split: Option<(&[Recon], &[KeypointSet])>,
) -> f64 {
    assert_eq!(recons.len(), annotations.len());
    assert!(!recons.is_empty());
    let nv = recons[0].mesh.vertex_count();
    let nk = annotations[0].points.len();
    // projected vertices per instance
    let proj: Vec<Vec<[f64; 2]>> = recons
        .iter()
        .map(|r| {
            let basis = r.camera.basis();
            r.mesh
                .vertices
                .iter()
                .map(|&v| match basis.project(v) {
                    Some((px, py, _)) => [px, py],
                    None => [0.0, 0.0],
                })
                .collect()
        })
        .collect();

    let mut weights_per_kp: Vec<Vec<f64>> = Vec::with_capacity(nk);
    for k in 0..nk {
        // accumulate normal equations over instances where the keypoint is visible
        let mut ata = vec![vec![0.0; nv]; nv];
        let mut atb = vec![0.0; nv];
        let mut rows = 0usize;
        for (inst, ann) in annotations.iter().enumerate() {
            let (_, kp, vis) = &ann.points[k];
            if !vis {
                continue;
            }
            rows += 1;
            let p = &proj[inst];
            for axis in 0..2 {
                for i in 0..nv {
                    let ai = p[i][axis];
                    if ai == 0.0 {
                        continue;
                    }
                    atb[i] += ai * kp[axis];
                    for j in i..nv {
                        ata[i][j] += ai * p[j][axis];
                    }
                }
            }
        }
        for i in 0..nv {
            for j in 0..i {
                ata[i][j] = ata[j][i];
            }
        }
        if rows == 0 {
            weights_per_kp.push(vec![0.0; nv]);
            continue;
        }
        weights_per_kp.push(solve_least_squares(&mut ata, &atb));
    }

    let (eval_recons, eval_anns) = eval_split.unwrap_or((recons, annotations));
    let eval_proj: Vec<Vec<[f64; 2]>> = eval_recons
        .iter()
        .map(|r| {
            let basis = r.camera.basis();
            r.mesh
                .vertices
                .iter()
                .map(|&v| match basis.project(v) {
                    Some((px, py, _)) => [px, py],
                    None => [0.0, 0.0],
                })
                .collect()
        })
        .collect();
    let mut correct = 0usize;
    let mut total = 0usize;
    for (inst, ann) in eval_anns.iter().enumerate() {
        let img_size = eval_recons[inst].camera.width.max(eval_recons[inst].camera.height) as f64;
        for (k, (_, kp, vis)) in ann.points.iter().enumerate() {
            if !vis {
                continue;
            }
            let w = &weights_per_kp[k];
            let mut pred = [0.0f64; 2];
            for i in 0..nv {
                pred[0] += w[i] * eval_proj[inst][i][0];
                pred[1] += w[i] * eval_proj[inst][i][1];
            }
            total += 1;
            let d = ((pred[0] - kp[0]).powi(2) + (pred[1] - kp[1]).powi(2)).sqrt();
            if d <= threshold * img_size {
                correct += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::rng::Rng;
    use crate::harness::synth::{generate_views, synth_quadruped, view_rotation, SynthSpec};

    #[test]
    fn iou_examples() {
        let a = vec![1.0, 1.0, 0.0, 0.0];
        assert_eq!(eval_iou(&a, &a), 1.0);
        let b = vec![0.0, 0.0, 1.0, 1.0];
        assert_eq!(eval_iou(&a, &b), 0.0);
        // half-overlap squares: |A ∩ B| = 1, |A ∪ B| = 3
        let c = vec![1.0, 1.0, 0.0, 0.0];
        let d = vec![0.0, 1.0, 1.0, 0.0];
        assert!((eval_iou(&c, &d) - 1.0 / 3.0).abs() < 1e-12);
    }

    fn recon_for_view(scene: &crate::harness::synth::SynthScene, cam: &Camera, az: f64, el: f64) -> Recon {
        let rot = view_rotation(az, el);
        Recon {
            mesh: crate::geometry::Mesh {
                vertices: scene.posed_mesh.vertices.iter().map(|&v| rot.apply(v)).collect(),
                faces: scene.posed_mesh.faces.clone(),
            },
            camera: cam.clone(),
        }
    }

    #[test]
    fn self_transfer_pck_is_one() {
        let scene = synth_quadruped(&SynthSpec::dense_legs());
        let cam = Camera::with_size(128, 128);
        let views = generate_views(&scene, &cam, 1, 1.0, 11, 1);
        let v = &views[0];
        let recon = recon_for_view(&scene, &cam, v.azimuth_deg, v.elevation_deg);
        let kps = KeypointSet {
            points: v.keypoints.clone(),
        };
        let pck = eval_keypoint_transfer(&recon, &recon, &kps, &kps, 0.1);
        assert_eq!(pck, 1.0);
    }

    #[test]
    fn cross_view_transfer_with_exact_reconstructions_is_one() {
        use crate::harness::synth::surface_keypoints;
        let scene = synth_quadruped(&SynthSpec::dense_legs());
        let cam = Camera::with_size(128, 128);
        let views = generate_views(&scene, &cam, 4, 0.0, 21, 1);
        let mut pcks = Vec::new();
        for i in 0..views.len() {
            for j in 0..views.len() {
                if i == j {
                    continue;
                }
                let (a, b) = (&views[i], &views[j]);
                let ra = recon_for_view(&scene, &cam, a.azimuth_deg, a.elevation_deg);
                let rb = recon_for_view(&scene, &cam, b.azimuth_deg, b.elevation_deg);
                let ka = surface_keypoints(&a.keypoints);
                let kb = surface_keypoints(&b.keypoints);
                pcks.push(eval_keypoint_transfer(&ra, &rb, &ka, &kb, 0.1));
            }
        }
        let mean = pcks.iter().sum::<f64>() / pcks.len() as f64;
        assert!(mean >= 0.999, "mean cross-view PCK {}", mean);
    }

    #[test]
    fn random_vertex_mapping_scores_poorly() {
        // Monte-Carlo floor: replacing nearest-vertex matching by a random
        // vertex must leave PCK well under 0.5 on the spread keypoint set
        let scene = synth_quadruped(&SynthSpec::default());
        let cam = Camera::with_size(64, 64);
        let views = generate_views(&scene, &cam, 2, 0.0, 31, 1);
        let (a, b) = (&views[0], &views[1]);
        let ra = recon_for_view(&scene, &cam, a.azimuth_deg, a.elevation_deg);
        let rb = recon_for_view(&scene, &cam, b.azimuth_deg, b.elevation_deg);
        let tbasis = rb.camera.basis();
        let mut rng = Rng::new(5);
        let mut correct = 0usize;
        let mut total = 0usize;
        for trial in 0..200 {
            let k = trial % a.keypoints.len();
            let (_, _, svis) = &a.keypoints[k];
            let (_, tkp, tviz) = &b.keypoints[k];
            if !svis || !tviz {
                continue;
            }
            let vi = rng.below(rb.mesh.vertex_count());
            if let Some((px, py, _)) = tbasis.project(rb.mesh.vertices[vi]) {
                total += 1;
                let d = ((px - tkp[0]).powi(2) + (py - tkp[1]).powi(2)).sqrt();
                if d <= 0.1 * 64.0 {
                    correct += 1;
                }
            }
        }
        let pck = correct as f64 / total.max(1) as f64;
        assert!(pck < 0.5, "random mapping PCK {}", pck);
    }

    #[test]
    fn pck_linear_exact_on_realizable_targets() {
        // keypoints that literally are projected vertices: the least-squares
        // fit can reach them exactly
        let scene = synth_quadruped(&SynthSpec::default());
        let cam = Camera::with_size(64, 64);
        let azimuths = [0.0, 40.0, 90.0, 160.0, 220.0, 300.0];
        let mut recons = Vec::new();
        let mut anns = Vec::new();
        for &az in &azimuths {
            let r = recon_for_view(&scene, &cam, az, 12.0);
            let basis = r.camera.basis();
            let picks = [3usize, 50, 120, 200];
            let points = picks
                .iter()
                .enumerate()
                .map(|(k, &vi)| {
                    let (px, py, _) = basis.project(r.mesh.vertices[vi]).unwrap();
                    (format!("kp{}", k), [px, py], true)
                })
                .collect();
            recons.push(r);
            anns.push(KeypointSet { points });
        }
        let pck = eval_pck_linear(&recons, &anns, 0.1, None);
        assert_eq!(pck, 1.0);
    }

    #[test]
    fn pck_linear_single_instance_interpolates() {
        let scene = synth_quadruped(&SynthSpec::default());
        let cam = Camera::with_size(64, 64);
        let views = generate_views(&scene, &cam, 1, 1.0, 51, 1);
        let v = &views[0];
        let recon = recon_for_view(&scene, &cam, v.azimuth_deg, v.elevation_deg);
        let anns = vec![KeypointSet {
            points: v.keypoints.clone(),
        }];
        let pck = eval_pck_linear(std::slice::from_ref(&recon), &anns, 0.1, None);
        assert_eq!(pck, 1.0);
    }

    #[test]
    fn held_out_split_scores_at_most_train() {
        // noisy targets: training interpolates them, the held-out split cannot
        let scene = synth_quadruped(&SynthSpec::default());
        let cam = Camera::with_size(64, 64);
        let views = generate_views(&scene, &cam, 8, 0.0, 61, 1);
        let mut rng = Rng::new(9);
        let mut recons = Vec::new();
        let mut anns = Vec::new();
        for v in &views {
            recons.push(recon_for_view(&scene, &cam, v.azimuth_deg, v.elevation_deg));
            let points = v
                .keypoints
                .iter()
                .map(|(n, kp, vis)| {
                    (
                        n.clone(),
                        [kp[0] + rng.normal_scaled(6.0), kp[1] + rng.normal_scaled(6.0)],
                        *vis,
                    )
                })
                .collect();
            anns.push(KeypointSet { points });
        }
        let (train_r, test_r) = recons.split_at(5);
        let (train_a, test_a) = anns.split_at(5);
        let train_pck = eval_pck_linear(train_r, train_a, 0.1, None);
        let heldout_pck = eval_pck_linear(train_r, train_a, 0.1, Some((test_r, test_a)));
        assert!(
            heldout_pck <= train_pck,
            "held-out {} > train {}",
            heldout_pck,
            train_pck
        );
    }
}
