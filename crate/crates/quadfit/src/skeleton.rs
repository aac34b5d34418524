//! Quadruped skeleton instantiation, skinning weights, linear blend skinning,
//! and articulation constraints.
//!
//! The skeleton is a fixed topology: a spine of 8 equal-length bones (two
//! chains of 4 sharing the mesh center) plus 4 legs of 3 equal-length bones
//! each, 20 articulated bones total. The global rigid transform is slot 1 of
//! the pose and is not a geometric bone.

use crate::autodiff::Real;
use crate::geometry::Mesh;
use crate::math::{vec3, Affine, Mat3, Quat, Vec3};
use serde::{Deserialize, Serialize};

pub const SPINE_BONES: usize = 8;
pub const LEG_BONES: usize = 3;
pub const NUM_LEGS: usize = 4;
pub const ARTICULATED_BONES: usize = SPINE_BONES + NUM_LEGS * LEG_BONES;

/// Fraction of total height below which vertices count as leg candidates.
const FOOT_BAND: f64 = 0.4;

#[derive(Debug)]
pub enum SkeletonError {
    DegenerateExtent { axis: char },
    MissingLeg { quadrant: &'static str },
    WeightMismatch { expected: usize, got: usize },
}

impl std::fmt::Display for SkeletonError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SkeletonError::DegenerateExtent { axis } => {
                write!(f, "mesh has zero extent along {}", axis)
            }
            SkeletonError::MissingLeg { quadrant } => {
                write!(f, "missing leg: no low vertices in quadrant {}", quadrant)
            }
            SkeletonError::WeightMismatch { expected, got } => {
                write!(f, "skin weights built for {} bones, skeleton has {}", got, expected)
            }
        }
    }
}

impl std::error::Error for SkeletonError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoneKind {
    Spine,
    UpperLeg,
    LowerLeg,
}

#[derive(Clone, Debug)]
pub struct Bone {
    /// Parent articulated bone; `None` roots the bone at the rigid transform.
    pub parent: Option<usize>,
    pub head: Vec3<f64>,
    pub tail: Vec3<f64>,
    pub kind: BoneKind,
}

#[derive(Clone, Debug)]
pub struct Skeleton {
    pub bones: Vec<Bone>,
}

impl Skeleton {
    pub fn num_bones(&self) -> usize {
        self.bones.len()
    }

    /// Rest joints as (head, tail) pairs, for keypoint ground truth.
    pub fn joints(&self) -> Vec<(Vec3<f64>, Vec3<f64>)> {
        self.bones.iter().map(|b| (b.head, b.tail)).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let bones: Vec<serde_json::Value> = self
            .bones
            .iter()
            .map(|b| {
                serde_json::json!({
                    "parent": b.parent,
                    "head": [b.head.x, b.head.y, b.head.z],
                    "tail": [b.tail.x, b.tail.y, b.tail.z],
                    "kind": match b.kind {
                        BoneKind::Spine => "spine",
                        BoneKind::UpperLeg => "upper_leg",
                        BoneKind::LowerLeg => "lower_leg",
                    },
                })
            })
            .collect();
        serde_json::json!({ "bones": bones })
    }

    pub fn from_json(v: &serde_json::Value) -> Option<Skeleton> {
        let arr = v.get("bones")?.as_array()?;
        let mut bones = Vec::new();
        for b in arr {
            let parent = match b.get("parent")? {
                serde_json::Value::Null => None,
                x => Some(x.as_u64()? as usize),
            };
            let rd = |key: &str| -> Option<Vec3<f64>> {
                let a = b.get(key)?.as_array()?;
                Some(vec3(a[0].as_f64()?, a[1].as_f64()?, a[2].as_f64()?))
            };
            let kind = match b.get("kind")?.as_str()? {
                "upper_leg" => BoneKind::UpperLeg,
                "lower_leg" => BoneKind::LowerLeg,
                _ => BoneKind::Spine,
            };
            bones.push(Bone {
                parent,
                head: rd("head")?,
                tail: rd("tail")?,
                kind,
            });
        }
        Some(Skeleton { bones })
    }
}

/// Rigid transform plus per-bone Euler XYZ rotations (radians, intrinsic).
#[derive(Clone, Debug)]
pub struct Pose<R = f64> {
    pub rigid_rot: Quat<R>,
    pub rigid_t: Vec3<R>,
    pub joint_angles: Vec<Vec3<R>>,
}

impl<R: Real> Pose<R> {
    pub fn rest(num_bones: usize) -> Self {
        Pose {
            rigid_rot: Quat::identity(),
            rigid_t: Vec3::zero(),
            joint_angles: vec![Vec3::zero(); num_bones],
        }
    }
}

impl Pose<f64> {
    pub fn lift<R: Real>(&self) -> Pose<R> {
        Pose {
            rigid_rot: Quat {
                w: R::lit(self.rigid_rot.w),
                x: R::lit(self.rigid_rot.x),
                y: R::lit(self.rigid_rot.y),
                z: R::lit(self.rigid_rot.z),
            },
            rigid_t: Vec3::from_f64(self.rigid_t),
            joint_angles: self.joint_angles.iter().map(|&a| Vec3::from_f64(a)).collect(),
        }
    }
}

/// Per-vertex, per-bone weight rows; each row is nonnegative and sums to 1.
#[derive(Clone, Debug)]
pub struct SkinWeights {
    pub num_bones: usize,
    data: Vec<f64>,
}

impl SkinWeights {
    pub fn row(&self, vertex: usize) -> &[f64] {
        &self.data[vertex * self.num_bones..(vertex + 1) * self.num_bones]
    }

    pub fn num_vertices(&self) -> usize {
        self.data.len() / self.num_bones
    }

    /// Max weight over vertices for each bone (which bones dominate anything).
    pub fn max_weight_per_bone(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.num_bones];
        for v in 0..self.num_vertices() {
            for (b, w) in self.row(v).iter().enumerate() {
                if *w > m[b] {
                    m[b] = *w;
                }
            }
        }
        m
    }
}

/// Per-bone componentwise rotation bounds (radians).
#[derive(Clone, Debug)]
pub struct AngleLimits {
    pub min: Vec<Vec3<f64>>,
    pub max: Vec<Vec3<f64>>,
}

impl AngleLimits {
    /// Constraint table: lower two leg segments frozen in y and z, upper leg
    /// segment y,z within +-10 degrees, spine z within +-6 degrees; all x-axis
    /// leg rotations free.
    pub fn quadruped_default(skel: &Skeleton) -> AngleLimits {
        let inf = f64::INFINITY;
        let deg = |d: f64| d.to_radians();
        let mut min = Vec::with_capacity(skel.num_bones());
        let mut max = Vec::with_capacity(skel.num_bones());
        for b in &skel.bones {
            let (lo, hi) = match b.kind {
                BoneKind::Spine => (vec3(-inf, -inf, -deg(6.0)), vec3(inf, inf, deg(6.0))),
                BoneKind::UpperLeg => (
                    vec3(-inf, -deg(10.0), -deg(10.0)),
                    vec3(inf, deg(10.0), deg(10.0)),
                ),
                BoneKind::LowerLeg => (vec3(-inf, 0.0, 0.0), vec3(inf, 0.0, 0.0)),
            };
            min.push(lo);
            max.push(hi);
        }
        AngleLimits { min, max }
    }
}

fn quadrant_name(qx: bool, qz: bool) -> &'static str {
    match (qx, qz) {
        (true, true) => "x>=0,z>=0",
        (true, false) => "x>=0,z<0",
        (false, true) => "x<0,z>=0",
        (false, false) => "x<0,z<0",
    }
}

/// Builds the quadruped skeleton on a rest-pose mesh.
///
/// Spine: two chains of 4 equal bones from the vertex centroid to the extreme
/// vertices along +z and -z. Feet: among vertices in the lower 40% of the
/// height, the centroid of that set defines an xz origin and the lowest vertex
/// of each quadrant around it becomes a foot joint. Each leg is a chain of 3
/// equal bones from the nearest spine joint down to the foot.
pub fn instantiate_quadruped(mesh: &Mesh<f64>) -> Result<Skeleton, SkeletonError> {
    let (lo, hi) = mesh.bounds();
    if !(hi.y - lo.y > 0.0) {
        return Err(SkeletonError::DegenerateExtent { axis: 'y' });
    }
    if !(hi.z - lo.z > 0.0) {
        return Err(SkeletonError::DegenerateExtent { axis: 'z' });
    }
    let center = mesh.centroid();

    let mut front = 0usize;
    let mut back = 0usize;
    for (i, v) in mesh.vertices.iter().enumerate() {
        if v.z > mesh.vertices[front].z {
            front = i;
        }
        if v.z < mesh.vertices[back].z {
            back = i;
        }
    }
    let front = mesh.vertices[front];
    let back = mesh.vertices[back];

    let mut bones: Vec<Bone> = Vec::with_capacity(ARTICULATED_BONES);
    // joint list for leg attachment: position + owning bone (tail of)
    let mut spine_joints: Vec<(Vec3<f64>, Option<usize>)> = vec![(center, None)];
    for (chain, extreme) in [(0usize, front), (1usize, back)] {
        for k in 0..4 {
            let head = center.lerp(extreme, k as f64 / 4.0);
            let tail = center.lerp(extreme, (k + 1) as f64 / 4.0);
            let parent = if k == 0 { None } else { Some(chain * 4 + k - 1) };
            bones.push(Bone {
                parent,
                head,
                tail,
                kind: BoneKind::Spine,
            });
            spine_joints.push((tail, Some(chain * 4 + k)));
        }
    }

    // foot joints from the lower-40% band
    let y_cut = lo.y + FOOT_BAND * (hi.y - lo.y);
    let low: Vec<usize> = (0..mesh.vertices.len())
        .filter(|&i| mesh.vertices[i].y <= y_cut)
        .collect();
    let mut origin = vec3(0.0, 0.0, 0.0);
    for &i in &low {
        origin = origin + mesh.vertices[i];
    }
    origin = origin.scale(1.0 / low.len().max(1) as f64);

    let mut feet = Vec::with_capacity(4);
    for (qx, qz) in [(true, true), (true, false), (false, true), (false, false)] {
        let mut best: Option<usize> = None;
        for &i in &low {
            let v = mesh.vertices[i];
            if ((v.x - origin.x) >= 0.0) == qx && ((v.z - origin.z) >= 0.0) == qz {
                let better = match best {
                    None => true,
                    Some(j) => v.y < mesh.vertices[j].y,
                };
                if better {
                    best = Some(i);
                }
            }
        }
        let foot = best.ok_or(SkeletonError::MissingLeg {
            quadrant: quadrant_name(qx, qz),
        })?;
        feet.push(mesh.vertices[foot]);
    }

    for foot in feet {
        let mut nearest = 0usize;
        let mut best_d = f64::INFINITY;
        for (j, (p, _)) in spine_joints.iter().enumerate() {
            let d = (*p - foot).norm_sq();
            if d < best_d {
                best_d = d;
                nearest = j;
            }
        }
        let (attach, attach_bone) = spine_joints[nearest];
        for k in 0..LEG_BONES {
            let head = attach.lerp(foot, k as f64 / LEG_BONES as f64);
            let tail = attach.lerp(foot, (k + 1) as f64 / LEG_BONES as f64);
            let parent = if k == 0 { attach_bone } else { Some(bones.len() - 1) };
            bones.push(Bone {
                parent,
                head,
                tail,
                kind: if k == 0 { BoneKind::UpperLeg } else { BoneKind::LowerLeg },
            });
        }
    }

    debug_assert_eq!(bones.len(), ARTICULATED_BONES);
    for (i, b) in bones.iter().enumerate() {
        debug_assert!(b.parent.map_or(true, |p| p < i));
    }
    Ok(Skeleton { bones })
}

/// Closed-form min over r in [0,1] of ||p - (r a + (1-r) b)||^2.
pub fn point_segment_sqdist<R: Real>(p: Vec3<R>, a: Vec3<R>, b: Vec3<R>) -> R {
    let d = b - a;
    let dd = d.norm_sq();
    if dd.value() <= 1e-24 {
        return (p - a).norm_sq();
    }
    let t = ((p - a).dot(d) / dd).clamp_r(0.0, 1.0);
    (p - (a + d * t)).norm_sq()
}

/// Softmax-over-bone-distance skinning: w_ib = exp(-d_ib/tau) / sum_k exp(-d_ik/tau),
/// with d_ib the squared point-segment distance to bone b.
pub fn skinning_weights(mesh: &Mesh<f64>, skel: &Skeleton, tau_s: f64) -> SkinWeights {
    let nb = skel.num_bones();
    let mut data = Vec::with_capacity(mesh.vertex_count() * nb);
    let mut d = vec![0.0f64; nb];
    for v in &mesh.vertices {
        for (b, bone) in skel.bones.iter().enumerate() {
            d[b] = point_segment_sqdist(*v, bone.head, bone.tail);
        }
        let dmin = d.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut sum = 0.0;
        let start = data.len();
        for &db in d.iter() {
            let w = (-(db - dmin) / tau_s).exp();
            data.push(w);
            sum += w;
        }
        for w in &mut data[start..] {
            *w /= sum;
        }
    }
    SkinWeights { num_bones: nb, data }
}

/// World transform of each bone under the pose: G_b = G_parent o g_b with
/// g_b rotating about the bone head offset; the rigid transform roots every
/// chain.
fn bone_world_transforms<R: Real>(skel: &Skeleton, pose: &Pose<R>) -> Vec<Affine<R>> {
    let rigid = Affine::new(pose.rigid_rot.to_mat3(), pose.rigid_t);
    let mut world: Vec<Affine<R>> = Vec::with_capacity(skel.num_bones());
    for (b, bone) in skel.bones.iter().enumerate() {
        let parent_head = match bone.parent {
            Some(p) => skel.bones[p].head,
            None => vec3(0.0, 0.0, 0.0),
        };
        let offset = Vec3::<R>::from_f64(bone.head - parent_head);
        let local = Affine::new(Mat3::from_euler_xyz(pose.joint_angles[b]), offset);
        let parent_world = match bone.parent {
            Some(p) => world[p],
            None => rigid,
        };
        world.push(parent_world.compose(&local));
    }
    world
}

/// Linear blend skinning: V_i = (sum_b w_ib G_b(xi) G_b(xi*)^{-1}) V_i.
///
/// Weights must have been built for this skeleton. Faces are unchanged.
pub fn lbs_pose<R: Real>(
    mesh: &Mesh<R>,
    skel: &Skeleton,
    weights: &SkinWeights,
    pose: &Pose<R>,
) -> Result<Mesh<R>, SkeletonError> {
    if weights.num_bones != skel.num_bones() {
        return Err(SkeletonError::WeightMismatch {
            expected: skel.num_bones(),
            got: weights.num_bones,
        });
    }
    let world = bone_world_transforms(skel, pose);
    // A_b = G_b(xi) * translate(-head_b): the rest chain is a pure translation
    // to the bone head.
    let post: Vec<Affine<R>> = world
        .iter()
        .zip(&skel.bones)
        .map(|(g, bone)| {
            let t = g.t - g.rot.apply(Vec3::<R>::from_f64(bone.head));
            Affine::new(g.rot, t)
        })
        .collect();

    let mut out = Vec::with_capacity(mesh.vertex_count());
    for (i, &v) in mesh.vertices.iter().enumerate() {
        let w = weights.row(i);
        let mut rot = [[R::lit(0.0); 3]; 3];
        let mut t = Vec3::<R>::zero();
        for (b, &wb) in w.iter().enumerate() {
            if wb == 0.0 {
                continue;
            }
            for r in 0..3 {
                for c in 0..3 {
                    rot[r][c] = rot[r][c] + post[b].rot.m[r][c].scale(wb);
                }
            }
            t = t + post[b].t.scale(wb);
        }
        let m = Mat3 { m: rot };
        out.push(m.apply(v) + t);
    }
    Ok(Mesh {
        vertices: out,
        faces: mesh.faces.clone(),
    })
}

/// Componentwise projection of joint angles into the limits.
pub fn clamp_angles(pose: &Pose<f64>, limits: &AngleLimits) -> Pose<f64> {
    let mut out = pose.clone();
    for (i, a) in out.joint_angles.iter_mut().enumerate() {
        a.x = a.x.clamp(limits.min[i].x, limits.max[i].x);
        a.y = a.y.clamp(limits.min[i].y, limits.max[i].y);
        a.z = a.z.clamp(limits.min[i].z, limits.max[i].z);
    }
    out
}

/// R_art: mean squared Euler-angle vector norm over articulated bones.
pub fn art_regularizer<R: Real>(pose: &Pose<R>) -> R {
    let n = pose.joint_angles.len().max(1);
    let mut acc = R::lit(0.0);
    for a in &pose.joint_angles {
        acc = acc + a.norm_sq();
    }
    acc.scale(1.0 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::rng::Rng;

    /// Box body with four cylinder-ish legs; vertices only (instantiate and
    /// skinning never read faces).
    fn quadruped_cloud(body_half_z: f64, leg_z: f64) -> Mesh<f64> {
        let mut vertices = Vec::new();
        // body shell
        let nz = 9;
        for iz in 0..nz {
            let z = -body_half_z + 2.0 * body_half_z * iz as f64 / (nz - 1) as f64;
            for (x, y) in [
                (-0.25, 0.0),
                (0.25, 0.0),
                (-0.25, 0.4),
                (0.25, 0.4),
                (0.0, 0.45),
                (0.0, -0.02),
            ] {
                vertices.push(vec3(x, y, z));
            }
        }
        // nose and tail tip give unique z extremes
        vertices.push(vec3(0.0, 0.2, body_half_z + 0.1));
        vertices.push(vec3(0.0, 0.2, -body_half_z - 0.1));
        // legs
        for (sx, sz) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
            let cx = 0.2 * sx;
            let cz = leg_z * sz;
            for iy in 0..5 {
                let y = -0.6 + 0.6 * iy as f64 / 4.0;
                vertices.push(vec3(cx - 0.05, y, cz));
                vertices.push(vec3(cx + 0.05, y, cz));
                vertices.push(vec3(cx, y, cz - 0.05));
                vertices.push(vec3(cx, y, cz + 0.05));
            }
        }
        Mesh {
            vertices,
            faces: vec![],
        }
    }

    #[test]
    fn sqdist_examples() {
        // dense-sampling oracle cross-check
        let sample = |p: Vec3<f64>, a: Vec3<f64>, b: Vec3<f64>| -> f64 {
            let mut best = f64::INFINITY;
            let n = 100_000;
            for i in 0..=n {
                let r = i as f64 / n as f64;
                let q = a.scale(r) + b.scale(1.0 - r);
                best = best.min((p - q).norm_sq());
            }
            best
        };
        let cases = [
            (vec3(0.0, 0.0, 0.0), vec3(1.0, 0.0, 0.0), vec3(1.0, 1.0, 0.0), 1.0),
            (vec3(0.0, 2.0, 0.0), vec3(-1.0, 0.0, 0.0), vec3(1.0, 0.0, 0.0), 4.0),
        ];
        for (p, a, b, want) in cases {
            let got = point_segment_sqdist(p, a, b);
            assert!((got - want).abs() < 1e-12);
            assert!((got - sample(p, a, b)).abs() < 1e-8);
        }
        // p on the segment
        let on = vec3(0.25, 0.25, 0.0);
        assert!(point_segment_sqdist(on, vec3(0.0, 0.0, 0.0), vec3(1.0, 1.0, 0.0)) < 1e-15);
        // degenerate segment
        let d = point_segment_sqdist(vec3(1.0, 1.0, 0.0), vec3(0.0, 0.0, 0.0), vec3(0.0, 0.0, 0.0));
        assert!((d - 2.0).abs() < 1e-15);
    }

    #[test]
    fn quadruped_has_twenty_bones_with_spine_at_extremes() {
        let mesh = quadruped_cloud(1.0, 0.8);
        let skel = instantiate_quadruped(&mesh).unwrap();
        assert_eq!(skel.num_bones(), 20);
        let spine: Vec<&Bone> = skel.bones.iter().filter(|b| b.kind == BoneKind::Spine).collect();
        assert_eq!(spine.len(), 8);
        let zmax = spine.iter().map(|b| b.tail.z).fold(f64::NEG_INFINITY, f64::max);
        let zmin = spine.iter().map(|b| b.tail.z).fold(f64::INFINITY, f64::min);
        assert!((zmax - 1.1).abs() < 1e-12, "front extreme {}", zmax);
        assert!((zmin + 1.1).abs() < 1e-12, "back extreme {}", zmin);
        // equal lengths within a chain
        for chain in 0..2 {
            let lens: Vec<f64> = (0..4)
                .map(|k| (skel.bones[chain * 4 + k].tail - skel.bones[chain * 4 + k].head).norm())
                .collect();
            for l in &lens {
                assert!((l - lens[0]).abs() < 1e-12);
            }
        }
        // parent ordering invariant
        for (i, b) in skel.bones.iter().enumerate() {
            assert!(b.parent.map_or(true, |p| p < i));
        }
    }

    #[test]
    fn mirrored_mesh_gives_mirrored_skeleton() {
        let mesh = quadruped_cloud(1.0, 0.8);
        let mirrored = Mesh {
            vertices: mesh.vertices.iter().map(|v| vec3(-v.x, v.y, v.z)).collect(),
            faces: vec![],
        };
        let a = instantiate_quadruped(&mesh).unwrap();
        let b = instantiate_quadruped(&mirrored).unwrap();
        // the joint set mirrors; match each bone of `a` to some bone of `b`
        for bone in &a.bones {
            let target = vec3(-bone.head.x, bone.head.y, bone.head.z);
            let found = b
                .bones
                .iter()
                .any(|ob| (ob.head - target).norm() < 1e-9 && ob.kind == bone.kind);
            assert!(found, "no mirror for bone at {:?}", bone.head);
        }
    }

    #[test]
    fn uniform_scale_equivariance() {
        let mesh = quadruped_cloud(1.0, 0.8);
        let scaled = Mesh {
            vertices: mesh.vertices.iter().map(|v| v.scale(3.0)).collect(),
            faces: vec![],
        };
        let a = instantiate_quadruped(&mesh).unwrap();
        let b = instantiate_quadruped(&scaled).unwrap();
        for (x, y) in a.bones.iter().zip(&b.bones) {
            assert_eq!(x.parent, y.parent);
            assert!((x.head.scale(3.0) - y.head).norm() < 1e-9);
            assert!((x.tail.scale(3.0) - y.tail).norm() < 1e-9);
        }
    }

    #[test]
    fn long_body_same_side_legs_still_found() {
        // all four feet at z > 0 while the tail stretches far back: naive
        // origin-centered quadrants would miss two legs
        let mut mesh = quadruped_cloud(1.0, 0.8);
        for v in &mut mesh.vertices {
            v.z += 1.2; // feet now at z in {0.4, 2.0}, tail at z approx -0.9
        }
        mesh.vertices.push(vec3(0.0, 0.3, -2.5));
        let skel = instantiate_quadruped(&mesh).unwrap();
        // feet = tails of terminal bones (no children)
        let mut has_child = vec![false; skel.num_bones()];
        for b in &skel.bones {
            if let Some(p) = b.parent {
                has_child[p] = true;
            }
        }
        let feet: Vec<Vec3<f64>> = skel
            .bones
            .iter()
            .enumerate()
            .filter(|(i, b)| b.kind == BoneKind::LowerLeg && !has_child[*i])
            .map(|(_, b)| b.tail)
            .collect();
        let unique_feet: std::collections::HashSet<String> = feet
            .iter()
            .map(|f| format!("{:.6},{:.6},{:.6}", f.x, f.y, f.z))
            .collect();
        assert_eq!(unique_feet.len(), 4, "feet {:?}", feet);
    }

    #[test]
    fn missing_leg_is_reported_with_quadrant() {
        // everything on one side in x
        let mesh = Mesh {
            vertices: vec![
                vec3(1.0, 0.0, 1.0),
                vec3(1.0, 0.0, -1.0),
                vec3(1.0, 1.0, 0.0),
                vec3(2.0, 0.5, 0.3),
            ],
            faces: vec![],
        };
        match instantiate_quadruped(&mesh) {
            Err(SkeletonError::MissingLeg { quadrant }) => {
                assert!(quadrant.contains('x'), "quadrant {}", quadrant)
            }
            other => panic!("expected MissingLeg, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn skinning_rows_sum_to_one_and_nearest_dominates() {
        let mesh = quadruped_cloud(1.0, 0.8);
        let skel = instantiate_quadruped(&mesh).unwrap();
        let w = skinning_weights(&mesh, &skel, 0.5);
        for v in 0..mesh.vertex_count() {
            let row = w.row(v);
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&x| x >= 0.0));
            // nearest bone is the row max
            let mut dmin = f64::INFINITY;
            let mut nearest = 0;
            for (b, bone) in skel.bones.iter().enumerate() {
                let d = point_segment_sqdist(mesh.vertices[v], bone.head, bone.tail);
                if d < dmin {
                    dmin = d;
                    nearest = b;
                }
            }
            let max_b = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert!((row[max_b] - row[nearest]).abs() < 1e-12);
        }
    }

    #[test]
    fn equidistant_two_bones_split_half() {
        let skel = Skeleton {
            bones: vec![
                Bone {
                    parent: None,
                    head: vec3(-10.0, 1.0, 0.0),
                    tail: vec3(-10.0, -1.0, 0.0),
                    kind: BoneKind::Spine,
                },
                Bone {
                    parent: None,
                    head: vec3(10.0, 1.0, 0.0),
                    tail: vec3(10.0, -1.0, 0.0),
                    kind: BoneKind::Spine,
                },
            ],
        };
        let mesh = Mesh {
            vertices: vec![vec3(0.0, 0.0, 0.0)],
            faces: vec![],
        };
        let w = skinning_weights(&mesh, &skel, 0.5);
        assert!((w.row(0)[0] - 0.5).abs() < 1e-6);
        assert!((w.row(0)[1] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn tiny_temperature_concentrates_on_nearest() {
        let mesh = quadruped_cloud(1.0, 0.8);
        let skel = instantiate_quadruped(&mesh).unwrap();
        let w = skinning_weights(&mesh, &skel, 1e-3);
        // spread-out vertices: pick the nose (far from everything but one bone)
        let nose = mesh
            .vertices
            .iter()
            .position(|v| v.z > 1.05)
            .unwrap();
        let row = w.row(nose);
        let max = row.iter().cloned().fold(0.0f64, f64::max);
        assert!(max > 0.999, "max weight {}", max);
    }

    #[test]
    fn single_bone_skeleton_gets_weight_one() {
        let skel = Skeleton {
            bones: vec![Bone {
                parent: None,
                head: vec3(0.0, 0.0, 0.0),
                tail: vec3(0.0, 1.0, 0.0),
                kind: BoneKind::Spine,
            }],
        };
        let mesh = Mesh {
            vertices: vec![vec3(5.0, 5.0, 5.0), vec3(-1.0, 0.0, 0.0)],
            faces: vec![],
        };
        let w = skinning_weights(&mesh, &skel, 0.5);
        assert_eq!(w.row(0), &[1.0]);
        assert_eq!(w.row(1), &[1.0]);
    }

    #[test]
    fn lbs_rest_pose_is_identity() {
        let mesh = quadruped_cloud(1.0, 0.8);
        let skel = instantiate_quadruped(&mesh).unwrap();
        let w = skinning_weights(&mesh, &skel, 0.5);
        let pose = Pose::rest(skel.num_bones());
        let out = lbs_pose(&mesh, &skel, &w, &pose).unwrap();
        for (a, b) in out.vertices.iter().zip(&mesh.vertices) {
            assert!((a.x - b.x).abs() <= 1e-12);
            assert!((a.y - b.y).abs() <= 1e-12);
            assert!((a.z - b.z).abs() <= 1e-12);
        }
    }

    #[test]
    fn pure_rigid_pose_is_an_isometry() {
        let mesh = quadruped_cloud(1.0, 0.8);
        let skel = instantiate_quadruped(&mesh).unwrap();
        let w = skinning_weights(&mesh, &skel, 0.5);
        let mut pose = Pose::rest(skel.num_bones());
        pose.rigid_rot = Quat::from_axis_angle(vec3(0.3, 1.0, -0.2), 0.9);
        pose.rigid_t = vec3(0.1, -0.2, 0.43);
        let out = lbs_pose(&mesh, &skel, &w, &pose).unwrap();
        let mut rng = Rng::new(1);
        for _ in 0..200 {
            let i = rng.below(mesh.vertex_count());
            let j = rng.below(mesh.vertex_count());
            let before = (mesh.vertices[i] - mesh.vertices[j]).norm();
            let after = (out.vertices[i] - out.vertices[j]).norm();
            assert!((before - after).abs() < 1e-9);
        }
    }

    /// Oracle computing each bone's world transform independently of the chain
    /// recursion: walk the ancestry explicitly and multiply 4x4 matrices.
    fn world_transform_oracle(skel: &Skeleton, pose: &Pose<f64>, b: usize) -> [[f64; 4]; 4] {
        let mut chain = vec![b];
        let mut cur = b;
        while let Some(p) = skel.bones[cur].parent {
            chain.push(p);
            cur = p;
        }
        chain.reverse();
        let mat4 = |rot: Mat3<f64>, t: Vec3<f64>| -> [[f64; 4]; 4] {
            let mut m = [[0.0; 4]; 4];
            for r in 0..3 {
                for c in 0..3 {
                    m[r][c] = rot.m[r][c];
                }
            }
            m[0][3] = t.x;
            m[1][3] = t.y;
            m[2][3] = t.z;
            m[3][3] = 1.0;
            m
        };
        let matmul4 = |a: [[f64; 4]; 4], b: [[f64; 4]; 4]| -> [[f64; 4]; 4] {
            let mut out = [[0.0; 4]; 4];
            for r in 0..4 {
                for c in 0..4 {
                    for k in 0..4 {
                        out[r][c] += a[r][k] * b[k][c];
                    }
                }
            }
            out
        };
        let mut acc = mat4(pose.rigid_rot.to_mat3(), pose.rigid_t);
        for &bb in &chain {
            let parent_head = match skel.bones[bb].parent {
                Some(p) => skel.bones[p].head,
                None => vec3(0.0, 0.0, 0.0),
            };
            let local = mat4(
                Mat3::from_euler_xyz(pose.joint_angles[bb]),
                skel.bones[bb].head - parent_head,
            );
            acc = matmul4(acc, local);
        }
        acc
    }

    #[test]
    fn lbs_matches_blended_transform_oracle() {
        let mesh = quadruped_cloud(1.0, 0.8);
        let skel = instantiate_quadruped(&mesh).unwrap();
        let w = skinning_weights(&mesh, &skel, 0.5);
        let mut rng = Rng::new(99);
        let mut pose = Pose::rest(skel.num_bones());
        pose.rigid_rot = Quat::from_axis_angle(vec3(0.1, 1.0, 0.0), 0.4);
        pose.rigid_t = vec3(0.05, -0.1, 0.2);
        for a in &mut pose.joint_angles {
            *a = vec3(rng.range(-0.4, 0.4), rng.range(-0.2, 0.2), rng.range(-0.2, 0.2));
        }
        let out = lbs_pose(&mesh, &skel, &w, &pose).unwrap();
        for i in (0..mesh.vertex_count()).step_by(7) {
            let v = mesh.vertices[i];
            let mut expect = vec3(0.0, 0.0, 0.0);
            for b in 0..skel.num_bones() {
                let wb = w.row(i)[b];
                if wb == 0.0 {
                    continue;
                }
                let g = world_transform_oracle(&skel, &pose, b);
                let h = skel.bones[b].head;
                // G * translate(-head) applied to v
                let p = vec3(v.x - h.x, v.y - h.y, v.z - h.z);
                let x = g[0][0] * p.x + g[0][1] * p.y + g[0][2] * p.z + g[0][3];
                let y = g[1][0] * p.x + g[1][1] * p.y + g[1][2] * p.z + g[1][3];
                let z = g[2][0] * p.x + g[2][1] * p.y + g[2][2] * p.z + g[2][3];
                expect = expect + vec3(x, y, z).scale(wb);
            }
            assert!(
                (out.vertices[i] - expect).norm() < 1e-9,
                "vertex {}: {:?} vs {:?}",
                i,
                out.vertices[i],
                expect
            );
        }
    }

    #[test]
    fn terminal_bone_rotation_moves_only_its_vertices() {
        let mesh = quadruped_cloud(1.0, 0.8);
        let skel = instantiate_quadruped(&mesh).unwrap();
        let w = skinning_weights(&mesh, &skel, 0.05); // sharp binding
        // last bone of the first leg
        let bone = SPINE_BONES + LEG_BONES - 1;
        let mut pose = Pose::rest(skel.num_bones());
        pose.joint_angles[bone] = vec3(std::f64::consts::FRAC_PI_2, 0.0, 0.0);
        let out = lbs_pose(&mesh, &skel, &w, &pose).unwrap();
        let head = skel.bones[bone].head;
        let rot = Mat3::rot_x(std::f64::consts::FRAC_PI_2);
        for i in 0..mesh.vertex_count() {
            let wb = w.row(i)[bone];
            let moved = (out.vertices[i] - mesh.vertices[i]).norm();
            if wb > 0.99 {
                let expect = rot.apply(mesh.vertices[i] - head) + head;
                assert!((out.vertices[i] - expect).norm() < 1e-6, "vertex {}", i);
            } else if wb < 1e-3 {
                // weight outside this bone: moves at most by the tiny leakage
                assert!(moved < 1e-3 + 2.0 * wb, "vertex {} moved {}", i, moved);
            }
        }
    }

    #[test]
    fn clamp_angle_examples() {
        let mesh = quadruped_cloud(1.0, 0.8);
        let skel = instantiate_quadruped(&mesh).unwrap();
        let limits = AngleLimits::quadruped_default(&skel);
        let lower = skel.bones.iter().position(|b| b.kind == BoneKind::LowerLeg).unwrap();
        let upper = skel.bones.iter().position(|b| b.kind == BoneKind::UpperLeg).unwrap();
        let mut pose = Pose::rest(skel.num_bones());
        pose.joint_angles[lower] = vec3(0.3, 0.2, -0.1);
        pose.joint_angles[upper] = vec3(0.0, 0.5, 0.0);
        let c = clamp_angles(&pose, &limits);
        assert!((c.joint_angles[lower] - vec3(0.3, 0.0, 0.0)).norm() < 1e-15);
        assert!((c.joint_angles[upper].y - 10f64.to_radians()).abs() < 1e-12);
        // idempotent, and a projection
        let c2 = clamp_angles(&c, &limits);
        for (a, b) in c.joint_angles.iter().zip(&c2.joint_angles) {
            assert!((*a - *b).norm() == 0.0);
        }
        for (orig, proj) in pose.joint_angles.iter().zip(&c.joint_angles) {
            assert!(proj.x.abs() <= orig.x.abs() + 1e-15);
            assert!(proj.y.abs() <= orig.y.abs() + 1e-15);
            assert!(proj.z.abs() <= orig.z.abs() + 1e-15);
        }
        // inside limits: unchanged
        let mut inside = Pose::rest(skel.num_bones());
        inside.joint_angles[upper] = vec3(0.3, 0.05, -0.05);
        let ci = clamp_angles(&inside, &limits);
        assert!((ci.joint_angles[upper] - inside.joint_angles[upper]).norm() == 0.0);
    }

    #[test]
    fn art_regularizer_examples() {
        let mut pose = Pose::rest(20);
        assert_eq!(art_regularizer(&pose), 0.0);
        for a in &mut pose.joint_angles {
            *a = vec3(0.1, 0.0, 0.0);
        }
        assert!((art_regularizer(&pose) - 0.01).abs() < 1e-15);
        let mut rng = Rng::new(4);
        for a in &mut pose.joint_angles {
            *a = vec3(rng.normal(), rng.normal(), rng.normal());
        }
        let mut brute = 0.0;
        for a in &pose.joint_angles {
            brute += a.x * a.x + a.y * a.y + a.z * a.z;
        }
        brute /= 20.0;
        assert!((art_regularizer(&pose) - brute).abs() < 1e-12);
    }

    #[test]
    fn skeleton_json_round_trip() {
        let mesh = quadruped_cloud(1.0, 0.8);
        let skel = instantiate_quadruped(&mesh).unwrap();
        let j = skel.to_json();
        let back = Skeleton::from_json(&j).unwrap();
        assert_eq!(back.num_bones(), skel.num_bones());
        for (a, b) in skel.bones.iter().zip(&back.bones) {
            assert_eq!(a.parent, b.parent);
            assert_eq!(a.kind, b.kind);
            assert!((a.head - b.head).norm() < 1e-12);
        }
    }
}
