//! Staged analysis-by-synthesis fitting: multi-hypothesis viewpoints, the
//! three-stage curriculum, and discriminator alternation.
//!
//! All of the paper pipeline's predictor networks are replaced by directly
//! optimized parameters: bank mixture logits (and offset fields), per-view
//! viewpoint hypotheses and bone rotations, a per-instance deformation field,
//! and lighting. Every iteration builds one tape over the sampled hypothesis,
//! backpropagates the total objective, and applies per-group Adam updates
//! followed by constraint projections (angle limits, translation box,
//! bilateral symmetry).

mod hypo;

pub use hypo::{explore_probability, sample_hypothesis, HypothesisSet};

use crate::autodiff::{AdamParams, AdamState, Real, Tape, Var};
use crate::bank::{blend_base, SemanticBank};
use crate::geometry::{
    compute_normals, mirror_pairing, symmetrize_with, Mesh, MirrorPairing, VertexField,
};
use crate::harness::rng::Rng;
use crate::math::{vec3, Mat3, Quat, Vec3};
use crate::objective::{
    def_regularizer, disc_loss, distance_transform, feature_loss, gen_adv_loss, hyp_loss,
    hypothesis_probs, image_loss, mask_loss, pool_mask, rec_loss, total_loss, DiscArch,
    Discriminator, L1Opts, LossParts, LossWeights,
};
use crate::render::{
    interpolate_attrs, rasterize_visibility, shade_lambertian, soft_silhouette, Camera, Light,
    FEATURE_DIM,
};
use crate::skeleton::{
    clamp_angles, instantiate_quadruped, lbs_pose, skinning_weights, AngleLimits, Pose, Skeleton,
    SkinWeights, ARTICULATED_BONES,
};
use serde::{Deserialize, Serialize};

#[derive(Debug)]
pub enum FitError {
    NanLoss { term: &'static str, iteration: usize },
    NoUsableViews,
    TargetSizeMismatch { expected: usize, got: usize },
    SurfaceSizeMismatch { expected: usize, got: usize },
    Bank(crate::bank::BankError),
    Skeleton(crate::skeleton::SkeletonError),
    Render(crate::render::RenderError),
}

impl std::fmt::Display for FitError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FitError::NanLoss { term, iteration } => {
                write!(f, "non-finite {} loss at iteration {}", term, iteration)
            }
            FitError::NoUsableViews => write!(f, "no usable target views (all masks empty?)"),
            FitError::TargetSizeMismatch { expected, got } => {
                write!(f, "target has {} pixels, camera expects {}", got, expected)
            }
            FitError::SurfaceSizeMismatch { expected, got } => {
                write!(f, "surface field has {} rows, template has {}", got, expected)
            }
            FitError::Bank(e) => write!(f, "bank: {}", e),
            FitError::Skeleton(e) => write!(f, "skeleton: {}", e),
            FitError::Render(e) => write!(f, "render: {}", e),
        }
    }
}

impl std::error::Error for FitError {}

impl From<crate::bank::BankError> for FitError {
    fn from(e: crate::bank::BankError) -> Self {
        FitError::Bank(e)
    }
}

impl From<crate::skeleton::SkeletonError> for FitError {
    fn from(e: crate::skeleton::SkeletonError) -> Self {
        FitError::Skeleton(e)
    }
}

impl From<crate::render::RenderError> for FitError {
    fn from(e: crate::render::RenderError) -> Self {
        FitError::Render(e)
    }
}

/// Everything the fit consumes per view: image (H*W*3), mask (H*W), feature
/// map (H*W*16), and optionally the instance embedding.
#[derive(Clone)]
pub struct ViewTarget {
    pub image: Vec<f64>,
    pub mask: Vec<f64>,
    pub feature: Vec<f64>,
    pub phi: Option<Vec<f64>>,
}

/// Canonical per-vertex surface fields over the bank template (the explicit
/// stand-ins for the paper's albedo and feature MLPs).
#[derive(Clone)]
pub struct FitSurfaces {
    pub albedo: VertexField<f64>,
    pub feature: VertexField<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub iterations: usize,
    pub batch: usize,
    pub seed: u64,
    pub camera: Camera,
    /// Stage fractions: articulation enables at `stage2_start`, the instance
    /// deformation field at `stage3_start`.
    pub stage2_start: f64,
    pub stage3_start: f64,
    /// Discriminator active inside this fraction window (within stage 2).
    pub disc_window: (f64, f64),
    /// Uniform hypothesis exploration until this fraction, then linear decay
    /// to `explore_floor` by the discriminator-window start.
    pub explore_until: f64,
    pub explore_floor: f64,
    /// Fraction at which lambda_feat and lambda_hyp switch to the late values.
    pub lambda_switch: f64,
    /// Hypothesis-probability temperature endpoints (end, start).
    pub tau_range: (f64, f64),
    pub weights: LossWeights,
    pub sigma_soft: f64,
    pub tau_skin: f64,
    pub huber_delta: f64,
    pub gp_coeff: f64,
    pub disc_resolution: usize,
    pub disc_enabled: bool,
    pub optimize_bank_offsets: bool,
    /// Bank offsets stay frozen until this fraction of the iterations, so the
    /// base shape cannot collapse while viewpoints are still exploring.
    pub bank_offsets_from: f64,
    pub lr_bank: f64,
    pub lr_pose: f64,
    pub lr_deform: f64,
    pub lr_disc: f64,
    pub translation_bound_xy: f64,
    pub translation_bound_z: f64,
    /// Componentwise bounds on the shared elevation/roll parameters
    /// (radians). Quadruped photos sit near the horizontal plane; azimuth
    /// carries the viewpoint variation.
    pub elevation_bound: f64,
    pub roll_bound: f64,
    /// Every this many iterations (0 = never), re-seed each viewpoint
    /// hypothesis at the best of a coarse azimuth grid inside its quadrant.
    /// The reconstruction loss is a needle in azimuth; gradient steps refine
    /// within the basin, the grid finds it.
    pub az_grid_every: usize,
    /// Grid points per quadrant.
    pub az_grid_points: usize,
    /// Stop grid refreshes after this fraction of the iterations.
    pub az_grid_until: f64,
    /// Scale the pose/angle/light learning rates by `lr_late_scale` after
    /// this fraction, to polish into the narrow optimum.
    pub lr_decay_from: f64,
    pub lr_late_scale: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            iterations: 2000,
            batch: 6,
            seed: 0,
            camera: Camera::default(),
            stage2_start: 0.025,
            stage3_start: 0.625,
            disc_window: (0.10, 0.375),
            explore_until: 0.0075,
            explore_floor: 0.2,
            lambda_switch: 0.375,
            tau_range: (0.01, 1.0),
            weights: LossWeights::default(),
            sigma_soft: 1e-4,
            tau_skin: 0.5,
            huber_delta: 1e-6,
            gp_coeff: 10.0,
            disc_resolution: 16,
            disc_enabled: true,
            optimize_bank_offsets: true,
            bank_offsets_from: 0.10,
            lr_bank: 1e-3,
            lr_pose: 1e-2,
            lr_deform: 1e-3,
            lr_disc: 1e-4,
            translation_bound_xy: 0.4,
            translation_bound_z: 1.0,
            elevation_bound: 0.7,
            roll_bound: 0.3,
            az_grid_every: 50,
            az_grid_points: 16,
            az_grid_until: 0.7,
            lr_decay_from: 0.7,
            lr_late_scale: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Base,
    Articulated,
    Deformed,
}

impl FitConfig {
    pub fn stage_at(&self, iteration: usize) -> Stage {
        let f = iteration as f64 / self.iterations.max(1) as f64;
        if f < self.stage2_start {
            Stage::Base
        } else if f < self.stage3_start {
            Stage::Articulated
        } else {
            Stage::Deformed
        }
    }

    pub fn disc_active(&self, iteration: usize) -> bool {
        if !self.disc_enabled {
            return false;
        }
        let f = iteration as f64 / self.iterations.max(1) as f64;
        f >= self.disc_window.0 && f < self.disc_window.1
    }

    pub fn late(&self, iteration: usize) -> bool {
        iteration as f64 / self.iterations.max(1) as f64 >= self.lambda_switch
    }

    pub fn tau_at(&self, iteration: usize) -> f64 {
        let f = (iteration as f64 / self.iterations.max(1) as f64).clamp(0.0, 1.0);
        let (end, start) = self.tau_range;
        start * (end / start).powf(f)
    }
}

/// Per-view optimization state.
#[derive(Clone, Debug)]
pub struct ViewState {
    pub hyp: HypothesisSet,
    pub elevation: f64,
    pub roll: f64,
    pub translation: [f64; 3],
    pub joint_angles: Vec<[f64; 3]>,
}

const VIEW_POSE_DIM: usize = 4 + 4 + 2 + 3; // az_raw, scores, el+roll, translation

impl ViewState {
    fn new(num_bones: usize) -> Self {
        ViewState {
            hyp: HypothesisSet::new(),
            elevation: 0.0,
            roll: 0.0,
            translation: [0.0; 3],
            joint_angles: vec![[0.0; 3]; num_bones],
        }
    }

    fn pack_pose(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(VIEW_POSE_DIM);
        out.extend_from_slice(&self.hyp.az_raw);
        out.extend_from_slice(&self.hyp.scores);
        out.push(self.elevation);
        out.push(self.roll);
        out.extend_from_slice(&self.translation);
        out
    }

    fn unpack_pose(&mut self, data: &[f64]) {
        self.hyp.az_raw.copy_from_slice(&data[0..4]);
        self.hyp.scores.copy_from_slice(&data[4..8]);
        self.elevation = data[8];
        self.roll = data[9];
        self.translation.copy_from_slice(&data[10..13]);
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HistoryRow {
    pub iteration: usize,
    pub stage: Stage,
    pub mask: f64,
    pub image: f64,
    pub feature: f64,
    pub hyp: f64,
    pub adv_gen: f64,
    pub art: f64,
    pub def: f64,
    pub total: f64,
    pub disc: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ViewFit {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub roll_deg: f64,
    pub translation: [f64; 3],
    pub scores: [f64; 4],
    pub probs: [f64; 4],
    pub hypothesis_azimuths: [f64; 4],
    pub joint_angles: Vec<[f64; 3]>,
    /// Eq.-2 mask loss of the final hard render against the target.
    pub hard_mask_loss: f64,
    /// Soft-path reconstruction loss at the selected hypothesis.
    pub rec_loss: f64,
    pub iou: f64,
    pub skipped: bool,
}

pub struct FitResult {
    pub bank_weights: Vec<f64>,
    pub support: Vec<usize>,
    pub views: Vec<ViewFit>,
    pub delta_v: VertexField<f64>,
    pub ambient: f64,
    pub diffuse: f64,
    pub light_dir: [f64; 3],
    pub history: Vec<HistoryRow>,
    pub base_mesh: Mesh<f64>,
    pub instance_mesh: Mesh<f64>,
    pub skeleton: Option<Skeleton>,
    pub skin: Option<SkinWeights>,
    pub posed_meshes: Vec<Mesh<f64>>,
    pub warnings: Vec<String>,
}

/// Rigid rotation from viewpoint parameters, matching the harness convention:
/// v -> R_x(elevation) R_y(azimuth) R_z(roll) v — the azimuth spins the body
/// about the up axis and the elevation tilts it in the camera frame.
pub fn view_rot<R: Real>(azimuth_rad: R, elevation_rad: R, roll_rad: R) -> Mat3<R> {
    Mat3::rot_x(elevation_rad)
        .matmul(&Mat3::rot_y(azimuth_rad))
        .matmul(&Mat3::rot_z(roll_rad))
}

/// Articulate (if a skeleton exists) and apply the rigid transform.
pub fn pose_mesh<R: Real>(
    instance: &Mesh<R>,
    skeleton: Option<&Skeleton>,
    skin: Option<&SkinWeights>,
    rot: Mat3<R>,
    translation: Vec3<R>,
    joint_angles: Option<&[Vec3<R>]>,
) -> Result<Mesh<R>, FitError> {
    let articulated = match (skeleton, skin, joint_angles) {
        (Some(skel), Some(sw), Some(angles)) => {
            let rest_rigid = Pose {
                rigid_rot: Quat::identity(),
                rigid_t: Vec3::zero(),
                joint_angles: angles.to_vec(),
            };
            lbs_pose(instance, skel, sw, &rest_rigid)?
        }
        _ => instance.clone(),
    };
    Ok(Mesh {
        vertices: articulated
            .vertices
            .iter()
            .map(|&v| rot.apply(v) + translation)
            .collect(),
        faces: articulated.faces,
    })
}

fn check_finite(value: f64, term: &'static str, iteration: usize) -> Result<(), FitError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(FitError::NanLoss { term, iteration })
    }
}

fn softmax_vars<'t>(logits: &[Var<'t>]) -> Vec<Var<'t>> {
    let m = logits
        .iter()
        .map(|v| v.value())
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<Var<'t>> = logits.iter().map(|&l| l.add_const(-m).exp()).collect();
    let sum = exps.iter().fold(Var::constant(0.0), |a, &b| a + b);
    exps.into_iter().map(|e| e / sum).collect()
}

fn softmax_f64(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn symmetric_fields<'t>(
    flat: &[Var<'t>],
    count: usize,
    nv: usize,
    pairing: &MirrorPairing,
) -> Vec<VertexField<Var<'t>>> {
    (0..count)
        .map(|si| {
            symmetrize_with(
                &VertexField::from_rows(3, flat[si * nv * 3..(si + 1) * nv * 3].to_vec()),
                pairing,
            )
        })
        .collect()
}

fn current_base(
    template: &Mesh<f64>,
    offsets_opt: &[f64],
    logits: &[f64],
    pairing: &MirrorPairing,
) -> Mesh<f64> {
    let nv = template.vertex_count();
    let count = logits.len();
    let w = softmax_f64(logits);
    let fields: Vec<VertexField<f64>> = (0..count)
        .map(|si| {
            symmetrize_with(
                &VertexField::from_rows(3, offsets_opt[si * nv * 3..(si + 1) * nv * 3].to_vec()),
                pairing,
            )
        })
        .collect();
    let refs: Vec<&VertexField<f64>> = fields.iter().collect();
    blend_base(template, &refs, &w)
}

fn apply_delta(base: &Mesh<f64>, delta_v: &[f64], pairing: &MirrorPairing) -> Mesh<f64> {
    let field = symmetrize_with(&VertexField::from_rows(3, delta_v.to_vec()), pairing);
    let mut out = base.clone();
    for i in 0..out.vertices.len() {
        out.vertices[i] = out.vertices[i] + field.vec3_row(i);
    }
    out
}

fn bank_phi_tilde(bank: &SemanticBank, support: &[usize], logits: &[f64]) -> Vec<f64> {
    let w = softmax_f64(logits);
    let mut full = vec![0.0; bank.len()];
    for (si, &s) in support.iter().enumerate() {
        full[s] = w[si];
    }
    bank.blend_values(&full)
}

struct ViewRender<'t> {
    soft_mask: Vec<Var<'t>>,
    rgb: Vec<Var<'t>>,
    feature: Vec<Var<'t>>,
}

/// Soft mask loss alone at explicit pose parameters (geometric alignment
/// score for the grid refresh; the masked photometric terms vanish with the
/// intersection and would reward non-overlap).
#[allow(clippy::too_many_arguments)]
fn eval_mask_f64(
    instance: &Mesh<f64>,
    skeleton: Option<&Skeleton>,
    skin: Option<&SkinWeights>,
    joint_angles: &[Vec3<f64>],
    az_rad: f64,
    elevation: f64,
    roll: f64,
    translation: [f64; 3],
    target: &ViewTarget,
    dt: &[f64],
    config: &FitConfig,
) -> Result<f64, FitError> {
    eval_mask_inner(
        instance, skeleton, skin, joint_angles, az_rad, elevation, roll, translation, target, dt,
        config, false,
    )
}

/// Mask score with the rendered silhouette centroid-aligned to the target
/// before comparison: ranks viewpoint candidates independently of the current
/// translation state, which would otherwise lock in whichever pose family the
/// translation was last matched to.
#[allow(clippy::too_many_arguments)]
fn eval_mask_aligned_f64(
    instance: &Mesh<f64>,
    skeleton: Option<&Skeleton>,
    skin: Option<&SkinWeights>,
    joint_angles: &[Vec3<f64>],
    az_rad: f64,
    elevation: f64,
    roll: f64,
    translation: [f64; 3],
    target: &ViewTarget,
    dt: &[f64],
    config: &FitConfig,
) -> Result<f64, FitError> {
    eval_mask_inner(
        instance, skeleton, skin, joint_angles, az_rad, elevation, roll, translation, target, dt,
        config, true,
    )
}

#[allow(clippy::too_many_arguments)]
fn eval_mask_inner(
    instance: &Mesh<f64>,
    skeleton: Option<&Skeleton>,
    skin: Option<&SkinWeights>,
    joint_angles: &[Vec3<f64>],
    az_rad: f64,
    elevation: f64,
    roll: f64,
    translation: [f64; 3],
    target: &ViewTarget,
    dt: &[f64],
    config: &FitConfig,
    align_centroid: bool,
) -> Result<f64, FitError> {
    let rot = view_rot(az_rad, elevation, roll);
    let angles_opt = skeleton.is_some().then_some(joint_angles);
    let posed = pose_mesh(
        instance,
        skeleton,
        skin,
        rot,
        vec3(translation[0], translation[1], translation[2]),
        angles_opt,
    )?;
    let basis = config.camera.basis();
    let mut soft = soft_silhouette(&posed, &basis, config.sigma_soft)?;
    if align_centroid {
        let w = config.camera.width;
        let h = config.camera.height;
        if let (Some((_, rcx, rcy, _)), Some((_, tcx, tcy, _))) =
            (mask_moments(&soft, w), mask_moments(&target.mask, w))
        {
            let dx = (tcx - rcx).round() as i64;
            let dy = (tcy - rcy).round() as i64;
            if dx != 0 || dy != 0 {
                soft = shift_image(&soft, w, h, dx, dy);
            }
        }
    }
    let l1 = L1Opts {
        huber_delta: config.huber_delta,
    };
    Ok(mask_loss(&soft, &target.mask, dt, config.weights.dt, l1))
}

/// Soft-path reconstruction loss at explicit pose parameters, plain f64.
/// Used by the azimuth grid refresh and the finalizer.
#[allow(clippy::too_many_arguments)]
fn eval_rec_f64(
    instance: &Mesh<f64>,
    skeleton: Option<&Skeleton>,
    skin: Option<&SkinWeights>,
    joint_angles: &[Vec3<f64>],
    az_rad: f64,
    elevation: f64,
    roll: f64,
    translation: [f64; 3],
    light: &Light<f64>,
    surfaces: &FitSurfaces,
    target: &ViewTarget,
    dt: &[f64],
    config: &FitConfig,
    late: bool,
) -> Result<f64, FitError> {
    let rot = view_rot(az_rad, elevation, roll);
    let angles_opt = skeleton.is_some().then_some(joint_angles);
    let posed = pose_mesh(
        instance,
        skeleton,
        skin,
        rot,
        vec3(translation[0], translation[1], translation[2]),
        angles_opt,
    )?;
    let basis = config.camera.basis();
    let soft = soft_silhouette(&posed, &basis, config.sigma_soft)?;
    let vis = rasterize_visibility(&posed, &basis, 1);
    let normals = compute_normals(&posed);
    let keep: Vec<bool> = target.mask.iter().map(|&m| m > 0.0).collect();
    let imgs = crate::render::interpolate_attrs_where(
        &posed,
        &vis,
        &basis,
        &[&surfaces.albedo, &surfaces.feature, &normals.field],
        Some(&keep),
    );
    let rgb = crate::render::shade_lambertian_where(&imgs[0], &imgs[2], &vis, light, Some(&keep));
    let l1 = L1Opts {
        huber_delta: config.huber_delta,
    };
    let lm = mask_loss(&soft, &target.mask, dt, config.weights.dt, l1);
    let li = image_loss(&rgb.data, &target.image, 3, &soft, &target.mask, l1);
    let lf = feature_loss(&imgs[1].data, &target.feature, FEATURE_DIM, &soft, &target.mask);
    Ok(rec_loss(lm, li, lf, &config.weights, late))
}

fn light_from_raw(light_raw: &[f64; 5]) -> Light<f64> {
    Light::new(
        crate::autodiff::stable_sigmoid(light_raw[0]),
        0.5 + 0.5 * crate::autodiff::stable_sigmoid(light_raw[1]),
        vec3(light_raw[2], light_raw[3], light_raw[4]),
    )
}

/// First and second silhouette moments: area, centroid, principal-axis angle.
fn mask_moments(mask: &[f64], width: usize) -> Option<(f64, f64, f64, f64)> {
    let mut area = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for (i, &m) in mask.iter().enumerate() {
        if m >= 0.5 {
            area += 1.0;
            cx += (i % width) as f64 + 0.5;
            cy += (i / width) as f64 + 0.5;
        }
    }
    if area < 4.0 {
        return None;
    }
    cx /= area;
    cy /= area;
    let (mut mxx, mut myy, mut mxy) = (0.0, 0.0, 0.0);
    for (i, &m) in mask.iter().enumerate() {
        if m >= 0.5 {
            let dx = (i % width) as f64 + 0.5 - cx;
            let dy = (i / width) as f64 + 0.5 - cy;
            mxx += dx * dx;
            myy += dy * dy;
            mxy += dx * dy;
        }
    }
    let theta = 0.5 * (2.0 * mxy).atan2(mxx - myy);
    Some((area, cx, cy, theta))
}

/// Compass score: hard Eq.-2 mask loss plus a soft tiebreak, with both masks
/// centroid-aligned to the target first — angle probes rank independently of
/// the translation state, whose sub-pixel part the moment pass restores.
#[allow(clippy::too_many_arguments)]
fn eval_compass_score(
    instance: &Mesh<f64>,
    skeleton: Option<&Skeleton>,
    skin: Option<&SkinWeights>,
    joint_angles: &[Vec3<f64>],
    az_rad: f64,
    elevation: f64,
    roll: f64,
    translation: [f64; 3],
    target: &ViewTarget,
    dt: &[f64],
    config: &FitConfig,
) -> Result<f64, FitError> {
    let rot = view_rot(az_rad, elevation, roll);
    let angles_opt = skeleton.is_some().then_some(joint_angles);
    let posed = pose_mesh(
        instance,
        skeleton,
        skin,
        rot,
        vec3(translation[0], translation[1], translation[2]),
        angles_opt,
    )?;
    let basis = config.camera.basis();
    let vis = rasterize_visibility(&posed, &basis, 1);
    let w = config.camera.width;
    let h = config.camera.height;
    let hard_mask = similarity_align(&vis.mask, w, h, &target.mask);
    let soft = soft_silhouette(&posed, &basis, config.sigma_soft)?;
    let soft = similarity_align(&soft, w, h, &target.mask);
    let l1 = L1Opts {
        huber_delta: config.huber_delta,
    };
    let hard = mask_loss(&hard_mask, &target.mask, dt, config.weights.dt, L1Opts::hard());
    let softl = mask_loss(&soft, &target.mask, dt, config.weights.dt, l1);
    Ok(hard + 0.1 * softl)
}

fn shift_image(img: &[f64], w: usize, h: usize, dx: i64, dy: i64) -> Vec<f64> {
    let mut out = vec![0.0; img.len()];
    for y in 0..h as i64 {
        let sy = y - dy;
        if sy < 0 || sy >= h as i64 {
            continue;
        }
        for x in 0..w as i64 {
            let sx = x - dx;
            if sx < 0 || sx >= w as i64 {
                continue;
            }
            out[(y * w as i64 + x) as usize] = img[(sy * w as i64 + sx) as usize];
        }
    }
    out
}

/// Similarity-aligns a rendered mask to the target: translate the centroid
/// onto the target's and rescale about it so the areas match (nearest
/// neighbor). Rankings over pose angles then ignore translation and depth,
/// which the moment pass restores afterwards.
fn similarity_align(img: &[f64], w: usize, h: usize, target: &[f64]) -> Vec<f64> {
    let (Some((ra, rcx, rcy, _)), Some((ta, tcx, tcy, _))) =
        (mask_moments(img, w), mask_moments(target, w))
    else {
        return img.to_vec();
    };
    let s = (ra / ta).sqrt(); // target-frame -> render-frame scale
    let mut out = vec![0.0; img.len()];
    for y in 0..h {
        let sy = rcy + ((y as f64 + 0.5) - tcy) * s;
        let syi = sy.floor() as i64;
        if syi < 0 || syi >= h as i64 {
            continue;
        }
        for x in 0..w {
            let sx = rcx + ((x as f64 + 0.5) - tcx) * s;
            let sxi = sx.floor() as i64;
            if sxi < 0 || sxi >= w as i64 {
                continue;
            }
            out[y * w + x] = img[(syi as usize) * w + sxi as usize];
        }
    }
    out
}

/// Derivative-free compass search over the best hypothesis's azimuth,
/// elevation, and roll under the centroid-aligned score; translation rides
/// on the moment matching between passes. The photometric terms are
/// pixel-scale ripply under the hard rasterizer, so the geometric pose is
/// refined by direct search; gradients keep handling the smooth parameters.
#[allow(clippy::too_many_arguments)]
fn pattern_search_view(
    vs: &mut ViewState,
    instance: &Mesh<f64>,
    skeleton: Option<&Skeleton>,
    skin: Option<&SkinWeights>,
    target: &ViewTarget,
    dt: &[f64],
    config: &FitConfig,
) -> Result<(), FitError> {
    let k = vs.hyp.best();
    let angles: Vec<Vec3<f64>> = vs.joint_angles.iter().map(|a| vec3(a[0], a[1], a[2])).collect();
    let score = |az_raw: f64, el: f64, roll: f64, t: [f64; 3]| -> Result<f64, FitError> {
        eval_compass_score(
            instance,
            skeleton,
            skin,
            &angles,
            HypothesisSet::azimuth_rad(k, az_raw),
            el,
            roll,
            t,
            target,
            dt,
            config,
        )
    };
    let mut best = score(vs.hyp.az_raw[k], vs.elevation, vs.roll, vs.translation)?;
    // fine 1D sweep along the azimuth needle first; each candidate is also
    // tried at the upright roll, which breaks azimuth-roll compensation traps
    let az_now = HypothesisSet::azimuth_rad(k, vs.hyp.az_raw[k]).to_degrees();
    for step in -8i32..=8 {
        let az_deg = az_now + step as f64 * 0.4;
        let frac = ((az_deg - 90.0 * k as f64) / 90.0).clamp(0.02, 0.98);
        let raw = (frac / (1.0 - frac)).ln();
        for roll in [vs.roll, 0.0] {
            let s = score(raw, vs.elevation, roll, vs.translation)?;
            if s < best {
                best = s;
                vs.hyp.az_raw[k] = raw;
                vs.roll = roll;
            }
        }
    }
    for scale in [0.15f64, 0.05, 0.015, 0.005] {
        for _round in 0..4 {
            let mut improved = false;
            for axis in 0..3 {
                for dir in [-1.0, 1.0] {
                    let mut az_raw = vs.hyp.az_raw[k];
                    let mut el = vs.elevation;
                    let mut roll = vs.roll;
                    match axis {
                        0 => az_raw += dir * scale,
                        1 => el = (el + dir * scale).clamp(-config.elevation_bound, config.elevation_bound),
                        _ => roll = (roll + dir * scale).clamp(-config.roll_bound, config.roll_bound),
                    }
                    let s = score(az_raw, el, roll, vs.translation)?;
                    if s < best {
                        best = s;
                        vs.hyp.az_raw[k] = az_raw;
                        vs.elevation = el;
                        vs.roll = roll;
                        improved = true;
                    }
                }
            }
            if !improved {
                break;
            }
        }
    }
    Ok(())
}

/// Classic silhouette registration by moments: align the rendered mask's
/// centroid, area, and principal axis to the target's by adjusting the
/// translation, depth, and roll directly (descent only polishes afterwards).
#[allow(clippy::too_many_arguments)]
fn moment_match_view(
    vs: &mut ViewState,
    instance: &Mesh<f64>,
    skeleton: Option<&Skeleton>,
    skin: Option<&SkinWeights>,
    target_mask: &[f64],
    config: &FitConfig,
) -> Result<(), FitError> {
    let Some((ta, tcx, tcy, tth)) = mask_moments(target_mask, config.camera.width) else {
        return Ok(());
    };
    let k = vs.hyp.best();
    let az = HypothesisSet::azimuth_rad(k, vs.hyp.az_raw[k]);
    let angles: Vec<Vec3<f64>> = vs.joint_angles.iter().map(|a| vec3(a[0], a[1], a[2])).collect();
    let rot = view_rot(az, vs.elevation, vs.roll);
    let posed = pose_mesh(
        instance,
        skeleton,
        skin,
        rot,
        vec3(vs.translation[0], vs.translation[1], vs.translation[2]),
        skeleton.is_some().then_some(&angles[..]),
    )?;
    let basis = config.camera.basis();
    let vis = rasterize_visibility(&posed, &basis, 1);
    let Some((ra, rcx, rcy, rth)) = mask_moments(&vis.mask, config.camera.width) else {
        return Ok(());
    };
    let _ = (tth, rth); // roll is searched directly; the axis estimate is
                        // unreliable on three-quarter silhouettes
    // translation from the centroid shift at the object's current depth
    // (camera at (0,0,10) looking down -z: depth of the object center is
    // 10 - t_z)
    let depth = (10.0 - vs.translation[2]).max(2.0);
    vs.translation[0] += (tcx - rcx) * depth / basis.focal_px;
    vs.translation[1] -= (tcy - rcy) * depth / basis.focal_px;
    // depth correction from the area ratio (the angle search is
    // scale-invariant, so depth is owned by this match)
    let depth_new = (depth * (ra / ta).sqrt())
        .clamp(10.0 - config.translation_bound_z, 10.0 + config.translation_bound_z);
    vs.translation[2] = 10.0 - depth_new;
    vs.translation[0] =
        vs.translation[0].clamp(-config.translation_bound_xy, config.translation_bound_xy);
    vs.translation[1] =
        vs.translation[1].clamp(-config.translation_bound_xy, config.translation_bound_xy);
    vs.translation[2] =
        vs.translation[2].clamp(-config.translation_bound_z, config.translation_bound_z);
    Ok(())
}

fn render_view_diff<'t>(
    posed: &Mesh<Var<'t>>,
    surfaces: &FitSurfaces,
    cam: &Camera,
    sigma_soft: f64,
    light: &Light<Var<'t>>,
    target_mask: &[f64],
) -> Result<ViewRender<'t>, FitError> {
    let basis = cam.basis();
    let soft_mask = soft_silhouette(posed, &basis, sigma_soft)?;
    let vis = rasterize_visibility(&posed.to_f64(), &basis, 1);
    let normals = compute_normals(posed);
    let albedo = VertexField::<f64>::lift::<Var<'t>>(&surfaces.albedo);
    let featf = VertexField::<f64>::lift::<Var<'t>>(&surfaces.feature);
    // the masked losses only read pixels inside the target mask; skip the rest
    let keep: Vec<bool> = target_mask.iter().map(|&m| m > 0.0).collect();
    let imgs = crate::render::interpolate_attrs_where(
        posed,
        &vis,
        &basis,
        &[&albedo, &featf, &normals.field],
        Some(&keep),
    );
    let mut it = imgs.into_iter();
    let albedo_img = it.next().unwrap();
    let feature_img = it.next().unwrap();
    let normal_img = it.next().unwrap();
    let rgb = crate::render::shade_lambertian_where(&albedo_img, &normal_img, &vis, light, Some(&keep));
    Ok(ViewRender {
        soft_mask,
        rgb: rgb.data,
        feature: feature_img.data,
    })
}

/// One alternating discriminator step; `None` outside the configured window.
#[allow(clippy::too_many_arguments)]
pub fn update_discriminator(
    disc: &mut Discriminator,
    adam: &mut AdamState,
    real_masks: &[Vec<f64>],
    fake_masks: &[Vec<f64>],
    phi_tilde: &[f64],
    iteration: usize,
    config: &FitConfig,
    rng: &mut Rng,
) -> Option<f64> {
    if !config.disc_active(iteration) || fake_masks.is_empty() || real_masks.is_empty() {
        return None;
    }
    let tape = Tape::new();
    let dvars = tape.vars(&disc.params);
    let loss = disc_loss(
        disc,
        &dvars,
        real_masks,
        fake_masks,
        phi_tilde,
        config.gp_coeff,
        1e-3,
        rng,
    );
    let g = tape.backward(loss);
    let grads = g.wrt_slice(&dvars);
    adam.step(&mut disc.params, &grads);
    Some(loss.value())
}

/// Runs the staged fit against the target views.
pub fn fit_instance(
    targets: &[ViewTarget],
    bank: &SemanticBank,
    surfaces: &FitSurfaces,
    config: &FitConfig,
) -> Result<FitResult, FitError> {
    let cam = &config.camera;
    let npix = cam.width * cam.height;
    let template = &bank.template;
    let nv = template.vertex_count();
    if surfaces.albedo.len() != nv || surfaces.feature.len() != nv {
        return Err(FitError::SurfaceSizeMismatch {
            expected: nv,
            got: surfaces.albedo.len(),
        });
    }

    let mut warnings = Vec::new();
    let mut usable = Vec::with_capacity(targets.len());
    for (i, t) in targets.iter().enumerate() {
        if t.mask.len() != npix || t.image.len() != npix * 3 || t.feature.len() != npix * FEATURE_DIM {
            return Err(FitError::TargetSizeMismatch {
                expected: npix,
                got: t.mask.len(),
            });
        }
        let ok = t.mask.iter().any(|&m| m >= 0.5);
        if !ok {
            warnings.push(format!("view {} skipped: empty target mask", i));
            eprintln!("warning: view {} skipped: empty target mask", i);
        }
        usable.push(ok);
    }
    let view_ids: Vec<usize> = (0..targets.len()).filter(|&i| usable[i]).collect();
    if view_ids.is_empty() {
        return Err(FitError::NoUsableViews);
    }

    // one bank query per fit from the batch-mean embedding; its support fixes
    // which slots stay optimizable (hard top-m truncation)
    let phis: Vec<Vec<f64>> = view_ids
        .iter()
        .filter_map(|&i| targets[i].phi.clone())
        .collect();
    let (support, mut bank_logits) = if phis.is_empty() {
        let m = bank.top_m.min(bank.len());
        ((0..m).collect::<Vec<_>>(), vec![0.0; m])
    } else {
        let q = bank.batch_mean_embedding(&phis)?;
        let mut support: Vec<usize> = (0..bank.len()).filter(|&i| q.weights[i] > 0.0).collect();
        if support.is_empty() {
            support = (0..bank.top_m.min(bank.len())).collect();
        }
        let logits = support.iter().map(|&i| q.weights[i].max(1e-6).ln()).collect();
        (support, logits)
    };
    let s_count = support.len();

    let pairing = mirror_pairing(template).map_err(|e| {
        FitError::Bank(crate::bank::BankError::Format(format!(
            "template not symmetric: {}",
            e
        )))
    })?;
    let mut offsets_opt: Vec<f64> = Vec::with_capacity(s_count * nv * 3);
    for &s in &support {
        offsets_opt.extend_from_slice(bank.offsets(s).raw());
    }
    let dts: Vec<Vec<f64>> = targets
        .iter()
        .map(|t| distance_transform(&t.mask, cam.width, cam.height).dist)
        .collect();

    let mut views: Vec<ViewState> = (0..targets.len())
        .map(|_| ViewState::new(ARTICULATED_BONES))
        .collect();
    let mut delta_v = vec![0.0f64; nv * 3];
    // light raw params: ambient logit, diffuse logit, direction
    let mut light_raw = [0.0f64, 0.0, 0.25, 0.9, 0.35];

    let l1 = L1Opts {
        huber_delta: config.huber_delta,
    };

    let mut adam_bank = AdamState::new(s_count + s_count * nv * 3, AdamParams::with_lr(config.lr_bank));
    let mut adam_pose = AdamState::new(targets.len() * VIEW_POSE_DIM, AdamParams::with_lr(config.lr_pose));
    let mut adam_angles = AdamState::new(
        targets.len() * ARTICULATED_BONES * 3,
        AdamParams::with_lr(config.lr_pose),
    );
    let mut adam_deform = AdamState::new(nv * 3, AdamParams::with_lr(config.lr_deform));
    let mut adam_light = AdamState::new(5, AdamParams::with_lr(config.lr_pose));

    let mut disc = Discriminator::init(DiscArch::for_resolution(config.disc_resolution), config.seed);
    let mut disc_adam = AdamState::new(disc.params.len(), AdamParams::with_lr(config.lr_disc));

    let mut skeleton: Option<Skeleton> = None;
    let mut skin: Option<SkinWeights> = None;
    let mut limits: Option<AngleLimits> = None;

    let mut rng = Rng::substream(config.seed, 0xF17);
    let mut history = Vec::with_capacity(config.iterations);
    let mut prev_stage = Stage::Base;

    for iter in 0..config.iterations {
        let stage = config.stage_at(iter);
        let late = config.late(iter);
        let lr_scale = if (iter as f64 / config.iterations.max(1) as f64) >= config.lr_decay_from {
            config.lr_late_scale
        } else {
            1.0
        };
        adam_pose.hp.lr = config.lr_pose * lr_scale;
        adam_angles.hp.lr = config.lr_pose * lr_scale;
        adam_light.hp.lr = config.lr_pose * lr_scale;
        adam_deform.hp.lr = config.lr_deform * lr_scale;
        if stage != prev_stage {
            // re-instantiate the skeleton on the then-current base shape,
            // frozen until the next transition
            if stage != Stage::Base {
                let base_now = current_base(template, &offsets_opt, &bank_logits, &pairing);
                let instance_now = apply_delta(&base_now, &delta_v, &pairing);
                let skel = instantiate_quadruped(&instance_now)?;
                let sw = skinning_weights(&instance_now, &skel, config.tau_skin);
                limits = Some(AngleLimits::quadruped_default(&skel));
                skeleton = Some(skel);
                skin = Some(sw);
            }
            prev_stage = stage;
        }

        // coarse viewpoint refresh: re-seed each hypothesis at the best grid
        // azimuth of its quadrant (jointly over a few elevations) under the
        // current shape and lights; the reconstruction loss is a needle in
        // azimuth, so gradient steps refine only within its basin
        if config.az_grid_every > 0
            && iter % config.az_grid_every == 0
            && (iter as f64 / config.iterations.max(1) as f64) < config.az_grid_until
        {
            let base_now = current_base(template, &offsets_opt, &bank_logits, &pairing);
            let instance_now = apply_delta(&base_now, &delta_v, &pairing);
            let light_now = light_from_raw(&light_raw);
            let el_bound = config.elevation_bound;
            let el_grid: Vec<f64> = [-0.4f64, -0.2, 0.0, 0.2, 0.4]
                .iter()
                .map(|e| e.clamp(-el_bound, el_bound))
                .collect();
            for &vid in &view_ids {
                // snapshot: the refresh must not make a view worse under the
                // compass score, or it is reverted (sigma seeds still update)
                let snapshot = views[vid].clone();
                let angles0: Vec<Vec3<f64>> = snapshot
                    .joint_angles
                    .iter()
                    .map(|a| vec3(a[0], a[1], a[2]))
                    .collect();
                let kb0 = snapshot.hyp.best();
                let score_before = eval_compass_score(
                    &instance_now,
                    skeleton.as_ref(),
                    skin.as_ref(),
                    &angles0,
                    HypothesisSet::azimuth_rad(kb0, snapshot.hyp.az_raw[kb0]),
                    snapshot.elevation,
                    snapshot.roll,
                    snapshot.translation,
                    &targets[vid],
                    &dts[vid],
                    config,
                )?;
                // silhouette moment registration first, so the grid searches
                // with aligned translation/scale/roll
                moment_match_view(
                    &mut views[vid],
                    &instance_now,
                    skeleton.as_ref(),
                    skin.as_ref(),
                    &targets[vid].mask,
                    config,
                )?;
                let angles: Vec<Vec3<f64>> = views[vid]
                    .joint_angles
                    .iter()
                    .map(|a| vec3(a[0], a[1], a[2]))
                    .collect();
                let mut overall_best = (f64::INFINITY, views[vid].elevation);
                for k in 0..4 {
                    // seed each quadrant at its best mask overlap (the masked
                    // photometric terms vanish with the intersection, so only
                    // the geometric term may rank across poses), then price
                    // the seed with one full rec evaluation: sigma_k becomes
                    // the realized reconstruction loss the paper's scores
                    // estimate, and argmin-sigma compares high-overlap seeds
                    // where the feature term discriminates mirror families
                    let cur_az = HypothesisSet::azimuth_rad(k, views[vid].hyp.az_raw[k]);
                    let mut candidates: Vec<(f64, f64, f64)> = Vec::new(); // (az, raw, el)
                    candidates.push((cur_az, views[vid].hyp.az_raw[k], views[vid].elevation));
                    for j in 0..config.az_grid_points {
                        let frac = (j as f64 + 0.5) / config.az_grid_points as f64;
                        let az_deg = 90.0 * k as f64 + 90.0 * frac;
                        let raw = (frac / (1.0 - frac)).ln();
                        for &el in &el_grid {
                            candidates.push((az_deg.to_radians(), raw, el));
                        }
                    }
                    let mut best = (f64::INFINITY, 0usize);
                    for (ci, &(az, _, el)) in candidates.iter().enumerate() {
                        let lm = eval_mask_aligned_f64(
                            &instance_now,
                            skeleton.as_ref(),
                            skin.as_ref(),
                            &angles,
                            az,
                            el,
                            views[vid].roll,
                            views[vid].translation,
                            &targets[vid],
                            &dts[vid],
                            config,
                        )?;
                        if lm < best.0 {
                            best = (lm, ci);
                        }
                    }
                    let (az, raw, el) = candidates[best.1];
                    let rec = eval_rec_f64(
                        &instance_now,
                        skeleton.as_ref(),
                        skin.as_ref(),
                        &angles,
                        az,
                        el,
                        views[vid].roll,
                        views[vid].translation,
                        &light_now,
                        surfaces,
                        &targets[vid],
                        &dts[vid],
                        config,
                        late,
                    )?;
                    views[vid].hyp.az_raw[k] = raw;
                    views[vid].hyp.scores[k] = rec;
                    if rec < overall_best.0 {
                        overall_best = (rec, el);
                    }
                }
                // elevation is shared across hypotheses: adopt the winner's
                views[vid].elevation = overall_best.1;
                // second moment pass + compass refinement of the best
                // hypothesis at the adopted elevation
                moment_match_view(
                    &mut views[vid],
                    &instance_now,
                    skeleton.as_ref(),
                    skin.as_ref(),
                    &targets[vid].mask,
                    config,
                )?;
                pattern_search_view(
                    &mut views[vid],
                    &instance_now,
                    skeleton.as_ref(),
                    skin.as_ref(),
                    &targets[vid],
                    &dts[vid],
                    config,
                )?;
                // the angle search ranked with aligned centroids; restore the
                // actual translation for the refined angles
                moment_match_view(
                    &mut views[vid],
                    &instance_now,
                    skeleton.as_ref(),
                    skin.as_ref(),
                    &targets[vid].mask,
                    config,
                )?;
                // accept the refresh only if the best hypothesis improved
                let kb = views[vid].hyp.best();
                let angles: Vec<Vec3<f64>> = views[vid]
                    .joint_angles
                    .iter()
                    .map(|a| vec3(a[0], a[1], a[2]))
                    .collect();
                let score_after = eval_compass_score(
                    &instance_now,
                    skeleton.as_ref(),
                    skin.as_ref(),
                    &angles,
                    HypothesisSet::azimuth_rad(kb, views[vid].hyp.az_raw[kb]),
                    views[vid].elevation,
                    views[vid].roll,
                    views[vid].translation,
                    &targets[vid],
                    &dts[vid],
                    config,
                )?;
                if score_after > score_before {
                    // revert, but keep the refreshed seeds of the quadrants
                    // other than the proven best
                    let refreshed = views[vid].clone();
                    views[vid] = snapshot;
                    for q in 0..4 {
                        if q != kb0 {
                            views[vid].hyp.az_raw[q] = refreshed.hyp.az_raw[q];
                            views[vid].hyp.scores[q] = refreshed.hyp.scores[q];
                        }
                    }
                }
                // re-price the standing best hypothesis
                let kb = views[vid].hyp.best();
                let angles: Vec<Vec3<f64>> = views[vid]
                    .joint_angles
                    .iter()
                    .map(|a| vec3(a[0], a[1], a[2]))
                    .collect();
                views[vid].hyp.scores[kb] = eval_rec_f64(
                    &instance_now,
                    skeleton.as_ref(),
                    skin.as_ref(),
                    &angles,
                    HypothesisSet::azimuth_rad(kb, views[vid].hyp.az_raw[kb]),
                    views[vid].elevation,
                    views[vid].roll,
                    views[vid].translation,
                    &light_now,
                    surfaces,
                    &targets[vid],
                    &dts[vid],
                    config,
                    late,
                )?;
            }
        }

        let offsets_live = config.optimize_bank_offsets
            && (iter as f64 / config.iterations.max(1) as f64) >= config.bank_offsets_from;
        let tape = Tape::new();
        let logits_v = tape.vars(&bank_logits);
        let offsets_v: Vec<Var> = if offsets_live {
            tape.vars(&offsets_opt)
        } else {
            offsets_opt.iter().map(|&x| Var::constant(x)).collect()
        };
        let light_v = tape.vars(&light_raw);
        let dv_vars: Option<Vec<Var>> = if stage == Stage::Deformed {
            Some(tape.vars(&delta_v))
        } else {
            None
        };

        let weights_v = softmax_vars(&logits_v);
        let offset_fields = symmetric_fields(&offsets_v, s_count, nv, &pairing);
        let refs: Vec<&VertexField<Var>> = offset_fields.iter().collect();
        let base_v = blend_base(template, &refs, &weights_v);
        let (instance_v, dv_field) = match &dv_vars {
            Some(dv) => {
                let field = symmetrize_with(&VertexField::from_rows(3, dv.clone()), &pairing);
                let mut m = base_v.clone();
                for i in 0..nv {
                    m.vertices[i] = m.vertices[i] + field.vec3_row(i);
                }
                (m, Some(field))
            }
            None => (base_v, None),
        };

        let light = Light {
            ambient: light_v[0].sigmoid(),
            diffuse: light_v[1].sigmoid().scale(0.5).add_const(0.5),
            direction: vec3(light_v[2], light_v[3], light_v[4]).normalized(),
        };

        // distinct round-robin batch
        let take = config.batch.min(view_ids.len());
        let start = (iter * take) % view_ids.len();
        let batch_ids: Vec<usize> = (0..take).map(|j| view_ids[(start + j) % view_ids.len()]).collect();
        let inv_batch = 1.0 / batch_ids.len() as f64;

        let mut pose_vars: Vec<(usize, Vec<Var>)> = Vec::new();
        let mut angle_vars: Vec<(usize, Vec<Var>)> = Vec::new();
        let mut l_mask = Var::constant(0.0);
        let mut l_image = Var::constant(0.0);
        let mut l_feat = Var::constant(0.0);
        let mut l_hyp = Var::constant(0.0);
        let mut l_adv = Var::constant(0.0);
        let mut fake_pool: Vec<Vec<f64>> = Vec::new();

        for &vid in &batch_ids {
            let packed = views[vid].pack_pose();
            let pv = tape.vars(&packed);
            let az_raw = &pv[0..4];
            let scores = &pv[4..8];
            let elevation = pv[8];
            let roll = pv[9];
            let translation = vec3(pv[10], pv[11], pv[12]);
            let k = sample_hypothesis(&views[vid].hyp, iter, config, &mut rng);
            let azimuth = HypothesisSet::azimuth_rad(k, az_raw[k]);
            let rot = view_rot(azimuth, elevation, roll);

            let angles_v: Option<Vec<Vec3<Var>>> = if stage != Stage::Base {
                let flat: Vec<f64> = views[vid].joint_angles.iter().flatten().cloned().collect();
                let av = tape.vars(&flat);
                let as_vec3 = av.chunks(3).map(|c| vec3(c[0], c[1], c[2])).collect();
                angle_vars.push((vid, av));
                Some(as_vec3)
            } else {
                None
            };

            let posed = pose_mesh(
                &instance_v,
                skeleton.as_ref(),
                skin.as_ref(),
                rot,
                translation,
                angles_v.as_deref(),
            )?;
            let render =
                render_view_diff(&posed, surfaces, cam, config.sigma_soft, &light, &targets[vid].mask)?;

            let t = &targets[vid];
            let lm = mask_loss(&render.soft_mask, &t.mask, &dts[vid], config.weights.dt, l1);
            let li = image_loss(&render.rgb, &t.image, 3, &render.soft_mask, &t.mask, l1);
            let lf = feature_loss(&render.feature, &t.feature, FEATURE_DIM, &render.soft_mask, &t.mask);
            check_finite(lm.value(), "mask", iter)?;
            check_finite(li.value(), "image", iter)?;
            check_finite(lf.value(), "feature", iter)?;
            let rec = rec_loss(lm, li, lf, &config.weights, late);
            let lh = hyp_loss(scores[k], rec);
            check_finite(lh.value(), "hypothesis", iter)?;
            l_mask = l_mask + lm.scale(inv_batch);
            l_image = l_image + li.scale(inv_batch);
            l_feat = l_feat + lf.scale(inv_batch);
            l_hyp = l_hyp + lh.scale(inv_batch);

            if config.disc_active(iter) {
                // random-viewpoint silhouette: rotate the predicted viewpoint
                // by a uniform azimuth
                let delta = rng.range(0.0, 360.0).to_radians();
                let rv_rot = Mat3::rot_y(Var::constant(delta)).matmul(&rot);
                let rv_posed = pose_mesh(
                    &instance_v,
                    skeleton.as_ref(),
                    skin.as_ref(),
                    rv_rot,
                    translation,
                    angles_v.as_deref(),
                )?;
                let rv_mask = soft_silhouette(&rv_posed, &cam.basis(), config.sigma_soft)?;
                let pooled = pool_mask(&rv_mask, cam.width, cam.height, config.disc_resolution);
                let phi_tilde = bank_phi_tilde(bank, &support, &bank_logits);
                let cond: Vec<Var> = phi_tilde.iter().map(|&x| Var::constant(x)).collect();
                let g = gen_adv_loss(&disc, std::slice::from_ref(&pooled), &cond);
                check_finite(g.value(), "adversarial", iter)?;
                l_adv = l_adv + g.scale(inv_batch);
                fake_pool.push(pooled.iter().map(|v| v.value()).collect());
            }

            pose_vars.push((vid, pv));
        }

        let l_art = if stage != Stage::Base && !angle_vars.is_empty() {
            let mut acc = Var::constant(0.0);
            for (_, av) in &angle_vars {
                let mut per = Var::constant(0.0);
                for a in av.iter() {
                    per = per + *a * *a;
                }
                acc = acc + per.scale(1.0 / ARTICULATED_BONES as f64 / angle_vars.len() as f64);
            }
            Some(acc)
        } else {
            None
        };
        let l_def = dv_field.as_ref().map(def_regularizer);

        let parts = LossParts {
            mask: l_mask,
            image: l_image,
            feat: l_feat,
            hyp: Some(l_hyp),
            adv_gen: if config.disc_active(iter) { Some(l_adv) } else { None },
            art: l_art,
            def: l_def,
        };
        let total = total_loss(&parts, &config.weights, late);
        check_finite(total.value(), "total", iter)?;
        let grads = tape.backward(total);

        // bank group: logits ++ offsets
        let mut bank_params: Vec<f64> = bank_logits
            .iter()
            .cloned()
            .chain(offsets_opt.iter().cloned())
            .collect();
        let mut bank_grads = Vec::with_capacity(bank_params.len());
        bank_grads.extend(logits_v.iter().map(|&v| grads.wrt(v)));
        bank_grads.extend(offsets_v.iter().map(|&v| grads.wrt(v)));
        adam_bank.step(&mut bank_params, &bank_grads);
        bank_logits.copy_from_slice(&bank_params[..s_count]);
        offsets_opt.copy_from_slice(&bank_params[s_count..]);
        // keep the stored offsets on the symmetric subspace
        let projected = symmetric_fields_f64(&offsets_opt, s_count, nv, &pairing);
        for (si, f) in projected.iter().enumerate() {
            offsets_opt[si * nv * 3..(si + 1) * nv * 3].copy_from_slice(f.raw());
        }

        // pose group
        let mut pose_params = vec![0.0; targets.len() * VIEW_POSE_DIM];
        let mut pose_grads = vec![0.0; targets.len() * VIEW_POSE_DIM];
        for (vid, vs) in views.iter().enumerate() {
            pose_params[vid * VIEW_POSE_DIM..(vid + 1) * VIEW_POSE_DIM]
                .copy_from_slice(&vs.pack_pose());
        }
        for (vid, pv) in &pose_vars {
            for (j, v) in pv.iter().enumerate() {
                pose_grads[vid * VIEW_POSE_DIM + j] += grads.wrt(*v);
            }
        }
        adam_pose.step(&mut pose_params, &pose_grads);
        for (vid, vs) in views.iter_mut().enumerate() {
            vs.unpack_pose(&pose_params[vid * VIEW_POSE_DIM..(vid + 1) * VIEW_POSE_DIM]);
            vs.translation[0] =
                vs.translation[0].clamp(-config.translation_bound_xy, config.translation_bound_xy);
            vs.translation[1] =
                vs.translation[1].clamp(-config.translation_bound_xy, config.translation_bound_xy);
            vs.translation[2] =
                vs.translation[2].clamp(-config.translation_bound_z, config.translation_bound_z);
            vs.elevation = vs.elevation.clamp(-config.elevation_bound, config.elevation_bound);
            vs.roll = vs.roll.clamp(-config.roll_bound, config.roll_bound);
        }

        // angle group
        if stage != Stage::Base {
            let nb3 = ARTICULATED_BONES * 3;
            let mut angle_params = vec![0.0; targets.len() * nb3];
            let mut angle_grads = vec![0.0; targets.len() * nb3];
            for (vid, vs) in views.iter().enumerate() {
                for (b, a) in vs.joint_angles.iter().enumerate() {
                    angle_params[vid * nb3 + b * 3..vid * nb3 + b * 3 + 3].copy_from_slice(a);
                }
            }
            for (vid, av) in &angle_vars {
                for (j, v) in av.iter().enumerate() {
                    angle_grads[vid * nb3 + j] += grads.wrt(*v);
                }
            }
            adam_angles.step(&mut angle_params, &angle_grads);
            let lim = limits.as_ref().unwrap();
            for (vid, vs) in views.iter_mut().enumerate() {
                for b in 0..ARTICULATED_BONES {
                    let at = vid * nb3 + b * 3;
                    vs.joint_angles[b] = [angle_params[at], angle_params[at + 1], angle_params[at + 2]];
                }
                let pose = Pose {
                    rigid_rot: Quat::identity(),
                    rigid_t: Vec3::zero(),
                    joint_angles: vs
                        .joint_angles
                        .iter()
                        .map(|a| vec3(a[0], a[1], a[2]))
                        .collect(),
                };
                let clamped = clamp_angles(&pose, lim);
                for (b, a) in clamped.joint_angles.iter().enumerate() {
                    vs.joint_angles[b] = [a.x, a.y, a.z];
                }
            }
        }

        // deformation group
        if let Some(dv) = &dv_vars {
            let dgrads: Vec<f64> = dv.iter().map(|&v| grads.wrt(v)).collect();
            adam_deform.step(&mut delta_v, &dgrads);
            let f = symmetrize_with(&VertexField::from_rows(3, delta_v.clone()), &pairing);
            delta_v.copy_from_slice(f.raw());
        }

        // light group
        let light_grads: Vec<f64> = light_v.iter().map(|&v| grads.wrt(v)).collect();
        adam_light.step(&mut light_raw, &light_grads);

        // discriminator alternation, one step per generator step
        let mut disc_val = 0.0;
        if config.disc_active(iter) && !fake_pool.is_empty() {
            let phi_tilde = bank_phi_tilde(bank, &support, &bank_logits);
            let mut real_pool = Vec::with_capacity(batch_ids.len());
            for _ in 0..batch_ids.len() {
                let pick = view_ids[rng.below(view_ids.len())];
                real_pool.push(pool_mask(
                    &targets[pick].mask,
                    cam.width,
                    cam.height,
                    config.disc_resolution,
                ));
            }
            if let Some(v) = update_discriminator(
                &mut disc,
                &mut disc_adam,
                &real_pool,
                &fake_pool,
                &phi_tilde,
                iter,
                config,
                &mut rng,
            ) {
                check_finite(v, "discriminator", iter)?;
                disc_val = v;
            }
        }

        history.push(HistoryRow {
            iteration: iter,
            stage,
            mask: l_mask.value(),
            image: l_image.value(),
            feature: l_feat.value(),
            hyp: l_hyp.value(),
            adv_gen: if config.disc_active(iter) { l_adv.value() } else { 0.0 },
            art: l_art.map(|a| a.value()).unwrap_or(0.0),
            def: l_def.map(|d| d.value()).unwrap_or(0.0),
            total: total.value(),
            disc: disc_val,
        });
    }

    finalize(FinalizeArgs {
        bank,
        config,
        surfaces,
        targets,
        usable: &usable,
        dts: &dts,
        pairing: &pairing,
        support: &support,
        bank_logits: &bank_logits,
        offsets_opt: &offsets_opt,
        delta_v: &delta_v,
        views: &views,
        light_raw: &light_raw,
        skeleton,
        skin,
        history,
        warnings,
    })
}

fn symmetric_fields_f64(
    flat: &[f64],
    count: usize,
    nv: usize,
    pairing: &MirrorPairing,
) -> Vec<VertexField<f64>> {
    (0..count)
        .map(|si| {
            symmetrize_with(
                &VertexField::from_rows(3, flat[si * nv * 3..(si + 1) * nv * 3].to_vec()),
                pairing,
            )
        })
        .collect()
}

struct FinalizeArgs<'a> {
    bank: &'a SemanticBank,
    config: &'a FitConfig,
    surfaces: &'a FitSurfaces,
    targets: &'a [ViewTarget],
    usable: &'a [bool],
    dts: &'a [Vec<f64>],
    pairing: &'a MirrorPairing,
    support: &'a [usize],
    bank_logits: &'a [f64],
    offsets_opt: &'a [f64],
    delta_v: &'a [f64],
    views: &'a [ViewState],
    light_raw: &'a [f64; 5],
    skeleton: Option<Skeleton>,
    skin: Option<SkinWeights>,
    history: Vec<HistoryRow>,
    warnings: Vec<String>,
}

fn finalize(args: FinalizeArgs<'_>) -> Result<FitResult, FitError> {
    let FinalizeArgs {
        bank,
        config,
        surfaces,
        targets,
        usable,
        dts,
        pairing,
        support,
        bank_logits,
        offsets_opt,
        delta_v,
        views,
        light_raw,
        skeleton,
        skin,
        history,
        warnings,
    } = args;
    let template = &bank.template;
    let base_mesh = current_base(template, offsets_opt, bank_logits, pairing);
    let instance_mesh = apply_delta(&base_mesh, delta_v, pairing);
    let w = softmax_f64(bank_logits);
    let mut bank_weights = vec![0.0; bank.len()];
    for (si, &s) in support.iter().enumerate() {
        bank_weights[s] = w[si];
    }
    let ambient = crate::autodiff::stable_sigmoid(light_raw[0]);
    let diffuse = 0.5 + 0.5 * crate::autodiff::stable_sigmoid(light_raw[1]);
    let ld = vec3(light_raw[2], light_raw[3], light_raw[4]).normalized();
    let light = Light::new(ambient, diffuse, ld);

    let cam = &config.camera;
    let tau = config.tau_at(config.iterations);
    let l1 = L1Opts {
        huber_delta: config.huber_delta,
    };
    let mut out_views = Vec::with_capacity(views.len());
    let mut posed_meshes = Vec::with_capacity(views.len());
    for (vid, vs) in views.iter().enumerate() {
        let probs = hypothesis_probs(&vs.hyp.scores, tau);
        let best = vs.hyp.best();
        let azimuths = vs.hyp.azimuth_degrees();
        let azimuth = azimuths[best];
        let rot = view_rot(azimuth.to_radians(), vs.elevation, vs.roll);
        let translation = vec3(vs.translation[0], vs.translation[1], vs.translation[2]);
        let angles: Vec<Vec3<f64>> = vs.joint_angles.iter().map(|a| vec3(a[0], a[1], a[2])).collect();
        let posed = pose_mesh(
            &instance_mesh,
            args_skel(&skeleton),
            args_skin(&skin),
            rot,
            translation,
            Some(&angles),
        )?;
        let basis = cam.basis();
        let vis = rasterize_visibility(&posed, &basis, 1);
        let t = &targets[vid];
        let hard_mask_loss = mask_loss(&vis.mask, &t.mask, &dts[vid], config.weights.dt, L1Opts::hard());
        let iou = crate::harness::metrics::eval_iou(&vis.mask, &t.mask);
        let soft = soft_silhouette(&posed, &basis, config.sigma_soft)?;
        let normals = compute_normals(&posed);
        let imgs = interpolate_attrs(
            &posed,
            &vis,
            &basis,
            &[&surfaces.albedo, &surfaces.feature, &normals.field],
        );
        let rgbimg = shade_lambertian(&imgs[0], &imgs[2], &vis, &light);
        let lm = mask_loss(&soft, &t.mask, &dts[vid], config.weights.dt, l1);
        let li = image_loss(&rgbimg.data, &t.image, 3, &soft, &t.mask, l1);
        let lf = feature_loss(&imgs[1].data, &t.feature, FEATURE_DIM, &soft, &t.mask);
        let rec = rec_loss(lm, li, lf, &config.weights, true);
        out_views.push(ViewFit {
            azimuth_deg: azimuth,
            elevation_deg: vs.elevation.to_degrees(),
            roll_deg: vs.roll.to_degrees(),
            translation: vs.translation,
            scores: vs.hyp.scores,
            probs,
            hypothesis_azimuths: azimuths,
            joint_angles: vs.joint_angles.clone(),
            hard_mask_loss,
            rec_loss: rec,
            iou,
            skipped: !usable[vid],
        });
        posed_meshes.push(posed);
    }

    let dv_field = symmetrize_with(&VertexField::from_rows(3, delta_v.to_vec()), pairing);
    Ok(FitResult {
        bank_weights,
        support: support.to_vec(),
        views: out_views,
        delta_v: dv_field,
        ambient,
        diffuse,
        light_dir: [ld.x, ld.y, ld.z],
        history,
        base_mesh,
        instance_mesh,
        skeleton,
        skin,
        posed_meshes,
        warnings,
    })
}

fn args_skel(s: &Option<Skeleton>) -> Option<&Skeleton> {
    s.as_ref()
}

fn args_skin(s: &Option<SkinWeights>) -> Option<&SkinWeights> {
    s.as_ref()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::synth::{generate_views, synth_quadruped, SynthSpec};

    fn tiny_targets(n_views: usize, image: usize) -> (Vec<ViewTarget>, SemanticBank, FitSurfaces, Camera) {
        let scene = synth_quadruped(&SynthSpec::default());
        let cam = Camera::with_size(image, image);
        let views = generate_views(&scene, &cam, n_views, 1.0, 7, 1);
        let targets: Vec<ViewTarget> = views
            .iter()
            .map(|v| ViewTarget {
                image: v.image.clone(),
                mask: v.mask.clone(),
                feature: v.feature.clone(),
                phi: Some(v.phi.clone()),
            })
            .collect();
        let bank = SemanticBank::with_zero_offsets(scene.rest_mesh.clone(), 4, 2, 5);
        let surfaces = FitSurfaces {
            albedo: scene.albedo.clone(),
            feature: scene.feature.clone(),
        };
        (targets, bank, surfaces, cam)
    }

    #[test]
    fn short_fit_runs_and_is_reproducible() {
        let (targets, bank, surfaces, cam) = tiny_targets(2, 32);
        let config = FitConfig {
            iterations: 12,
            batch: 2,
            camera: cam,
            disc_enabled: false,
            stage2_start: 0.5,
            stage3_start: 0.8,
            seed: 3,
            ..Default::default()
        };
        let r1 = fit_instance(&targets, &bank, &surfaces, &config).unwrap();
        let r2 = fit_instance(&targets, &bank, &surfaces, &config).unwrap();
        assert_eq!(r1.history.len(), 12);
        for (a, b) in r1.history.iter().zip(&r2.history) {
            assert_eq!(a.total, b.total, "iteration {}", a.iteration);
        }
        for (a, b) in r1.views.iter().zip(&r2.views) {
            assert_eq!(a.azimuth_deg, b.azimuth_deg);
        }
        let wsum: f64 = r1.bank_weights.iter().sum();
        assert!((wsum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn stage1_never_touches_angles_or_deformation() {
        let (targets, bank, surfaces, cam) = tiny_targets(2, 32);
        let config = FitConfig {
            iterations: 8,
            batch: 2,
            camera: cam,
            disc_enabled: false,
            stage2_start: 1.1, // never leaves stage 1
            stage3_start: 1.2,
            seed: 1,
            ..Default::default()
        };
        let r = fit_instance(&targets, &bank, &surfaces, &config).unwrap();
        for v in &r.views {
            for a in &v.joint_angles {
                assert_eq!(*a, [0.0, 0.0, 0.0]);
            }
        }
        assert!(r.delta_v.raw().iter().all(|&x| x == 0.0));
        assert!(r.skeleton.is_none());
    }

    #[test]
    fn stage_boundaries_are_exact_fractions() {
        let config = FitConfig {
            iterations: 1000,
            stage2_start: 0.025,
            stage3_start: 0.625,
            ..Default::default()
        };
        assert_eq!(config.stage_at(24), Stage::Base);
        assert_eq!(config.stage_at(25), Stage::Articulated);
        assert_eq!(config.stage_at(624), Stage::Articulated);
        assert_eq!(config.stage_at(625), Stage::Deformed);
        assert!(!config.disc_active(99));
        assert!(config.disc_active(100));
        assert!(config.disc_active(374));
        assert!(!config.disc_active(375));
    }

    #[test]
    fn empty_mask_view_is_skipped_with_warning() {
        let (mut targets, bank, surfaces, cam) = tiny_targets(2, 32);
        targets[1].mask.iter_mut().for_each(|m| *m = 0.0);
        let config = FitConfig {
            iterations: 4,
            batch: 2,
            camera: cam,
            disc_enabled: false,
            stage2_start: 1.1,
            stage3_start: 1.2,
            ..Default::default()
        };
        let r = fit_instance(&targets, &bank, &surfaces, &config).unwrap();
        assert_eq!(r.warnings.len(), 1);
        assert!(r.views[1].skipped);
        assert!(!r.views[0].skipped);
    }

    #[test]
    fn all_empty_masks_is_an_error() {
        let (mut targets, bank, surfaces, cam) = tiny_targets(2, 32);
        for t in &mut targets {
            t.mask.iter_mut().for_each(|m| *m = 0.0);
        }
        let config = FitConfig {
            iterations: 2,
            camera: cam,
            ..Default::default()
        };
        assert!(matches!(
            fit_instance(&targets, &bank, &surfaces, &config),
            Err(FitError::NoUsableViews)
        ));
    }

    #[test]
    fn discriminator_step_is_noop_outside_window() {
        let mut disc = Discriminator::init(DiscArch::for_resolution(8), 3);
        let before = disc.params.clone();
        let mut adam = AdamState::new(disc.params.len(), AdamParams::with_lr(1e-3));
        let config = FitConfig {
            iterations: 100,
            disc_window: (0.5, 0.6),
            ..Default::default()
        };
        let mut rng = Rng::new(1);
        let real = vec![vec![0.5; 64]];
        let fake = vec![vec![0.2; 64]];
        let out = update_discriminator(&mut disc, &mut adam, &real, &fake, &vec![0.0; 128], 10, &config, &mut rng);
        assert!(out.is_none());
        assert_eq!(disc.params, before);
        let out = update_discriminator(&mut disc, &mut adam, &real, &fake, &vec![0.0; 128], 55, &config, &mut rng);
        assert!(out.is_some());
        assert_ne!(disc.params, before);
    }
}
