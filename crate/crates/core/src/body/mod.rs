//! Procedural articulated body: ellipsoid segments on a kinematic tree,
//! rigidly skinned, with a 23-dimensional parameter vector.
//!
//! Canonical frame: +z up, the body faces +y, its right side is +x. The rest
//! pose (all joint angles zero) is a T-pose with the pelvis joint at the
//! translation.

mod jet;
mod template;

use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::mesh::{save_mesh, MeshFormat, TriMesh};

pub use jet::{Jet, Scalar};
pub use template::{Segment, Template};

pub const JOINT_COUNT: usize = 16;
pub const SHAPE_COUNT: usize = 3;
/// translation (3) + yaw (1) + joint angles + shape scales
pub const PARAM_DIM: usize = 4 + JOINT_COUNT + SHAPE_COUNT;

pub const TRANSLATION: usize = 0;
pub const YAW: usize = 3;
pub const JOINTS: usize = 4;
pub const SHAPE: usize = 4 + JOINT_COUNT;

/// Joint angle slots.
pub mod joint {
    pub const SPINE_FLEX: usize = 0;
    pub const SPINE_LATERAL: usize = 1;
    pub const L_HIP_FLEX: usize = 2;
    pub const L_HIP_ABD: usize = 3;
    pub const L_KNEE: usize = 4;
    pub const L_ANKLE: usize = 5;
    pub const R_HIP_FLEX: usize = 6;
    pub const R_HIP_ABD: usize = 7;
    pub const R_KNEE: usize = 8;
    pub const R_ANKLE: usize = 9;
    pub const L_SHOULDER_ABD: usize = 10;
    pub const L_SHOULDER_FLEX: usize = 11;
    pub const L_ELBOW: usize = 12;
    pub const R_SHOULDER_ABD: usize = 13;
    pub const R_SHOULDER_FLEX: usize = 14;
    pub const R_ELBOW: usize = 15;

    pub const NAMES: [&str; super::JOINT_COUNT] = [
        "spine_flex",
        "spine_lateral",
        "l_hip_flex",
        "l_hip_abd",
        "l_knee",
        "l_ankle",
        "r_hip_flex",
        "r_hip_abd",
        "r_knee",
        "r_ankle",
        "l_shoulder_abd",
        "l_shoulder_flex",
        "l_elbow",
        "r_shoulder_abd",
        "r_shoulder_flex",
        "r_elbow",
    ];
}

/// Shape scale slots.
pub mod shape {
    pub const HEIGHT: usize = 0;
    pub const GIRTH: usize = 1;
    pub const LIMB: usize = 2;
}

/// Anatomical joint ranges in radians, indexed like `joint_angles`.
pub const JOINT_LIMITS: [(f64, f64); JOINT_COUNT] = [
    (-1.7, 1.3),
    (-0.5, 0.5),
    (-0.6, 2.4),
    (-0.4, 0.9),
    (0.0, 2.5),
    (-0.9, 0.6),
    (-0.6, 2.4),
    (-0.4, 0.9),
    (0.0, 2.5),
    (-0.9, 0.6),
    (-0.6, 1.6),
    (-1.0, 2.2),
    (0.0, 2.5),
    (-0.6, 1.6),
    (-1.0, 2.2),
    (0.0, 2.5),
];

pub const SHAPE_LIMITS: (f64, f64) = (0.5, 2.0);

/// Ankles and elbows: the extremity joints weighted separately by the prior.
const DISTAL_JOINTS: [usize; 4] = [
    joint::L_ANKLE,
    joint::R_ANKLE,
    joint::L_ELBOW,
    joint::R_ELBOW,
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyParams {
    pub translation: Vec3,
    pub yaw: f64,
    pub joint_angles: [f64; JOINT_COUNT],
    pub shape_scale: [f64; SHAPE_COUNT],
}

impl Default for BodyParams {
    fn default() -> Self {
        BodyParams {
            translation: [0.0; 3],
            yaw: 0.0,
            joint_angles: [0.0; JOINT_COUNT],
            shape_scale: [1.0; SHAPE_COUNT],
        }
    }
}

impl BodyParams {
    pub fn to_vec(&self) -> [f64; PARAM_DIM] {
        let mut v = [0.0; PARAM_DIM];
        v[..3].copy_from_slice(&self.translation);
        v[YAW] = self.yaw;
        v[JOINTS..SHAPE].copy_from_slice(&self.joint_angles);
        v[SHAPE..].copy_from_slice(&self.shape_scale);
        v
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != PARAM_DIM {
            return Err(Error::Dimension {
                what: "body parameter vector",
                expected: PARAM_DIM,
                got: v.len(),
            });
        }
        let mut p = BodyParams::default();
        p.translation.copy_from_slice(&v[..3]);
        p.yaw = v[YAW];
        p.joint_angles.copy_from_slice(&v[JOINTS..SHAPE]);
        p.shape_scale.copy_from_slice(&v[SHAPE..]);
        Ok(p)
    }

    pub fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|v| v.is_finite())
    }

    /// Projects onto the joint and shape limits; returns whether anything
    /// moved.
    pub fn clamp(&mut self) -> bool {
        let mut moved = false;
        for (a, &(lo, hi)) in self.joint_angles.iter_mut().zip(JOINT_LIMITS.iter()) {
            let c = a.clamp(lo, hi);
            moved |= c != *a;
            *a = c;
        }
        for s in self.shape_scale.iter_mut() {
            let c = s.clamp(SHAPE_LIMITS.0, SHAPE_LIMITS.1);
            moved |= c != *s;
            *s = c;
        }
        moved
    }

    pub fn clamped(mut self) -> (Self, bool) {
        let moved = self.clamp();
        (self, moved)
    }
}

#[derive(Clone, Debug)]
pub struct BodyMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Arc<Vec<[u32; 3]>>,
    pub feet_mask: Arc<Vec<bool>>,
    /// Set when the input parameters were outside the limits and clamped.
    pub clamped: bool,
}

impl BodyMesh {
    pub fn to_trimesh(&self) -> TriMesh {
        TriMesh {
            vertices: self.vertices.clone(),
            faces: self.faces.as_ref().clone(),
            quality: None,
        }
    }

    pub fn feet_vertices(&self) -> Vec<Vec3> {
        self.vertices
            .iter()
            .zip(self.feet_mask.iter())
            .filter_map(|(v, &m)| m.then_some(*v))
            .collect()
    }
}

/// d vertex / d params, one `3 × PARAM_DIM` block per vertex.
pub type VertexJacobian = Vec<[[f64; PARAM_DIM]; 3]>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorWeights {
    /// Trunk, hips, knees and shoulders.
    pub pose: f64,
    /// Ankles and elbows.
    pub distal: f64,
    pub shape: f64,
}

impl Default for PriorWeights {
    fn default() -> Self {
        PriorWeights {
            pose: 1.0,
            distal: 1.0,
            shape: 1.0,
        }
    }
}

/// `Σ w·angle² + w_shape·Σ ln(scale)²` about the rest pose, with its gradient
/// in parameter-vector layout.
pub fn param_prior(params: &BodyParams, w: &PriorWeights) -> (f64, [f64; PARAM_DIM]) {
    let mut value = 0.0;
    let mut grad = [0.0; PARAM_DIM];
    for (j, &a) in params.joint_angles.iter().enumerate() {
        let wj = if DISTAL_JOINTS.contains(&j) {
            w.distal
        } else {
            w.pose
        };
        value += wj * a * a;
        grad[JOINTS + j] = 2.0 * wj * a;
    }
    for (k, &s) in params.shape_scale.iter().enumerate() {
        let l = s.ln();
        value += w.shape * l * l;
        grad[SHAPE + k] = 2.0 * w.shape * l / s;
    }
    (value, grad)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PoseCategory {
    Standing,
    Sitting,
    Lying,
}

impl PoseCategory {
    pub const ALL: [PoseCategory; 3] = [
        PoseCategory::Standing,
        PoseCategory::Sitting,
        PoseCategory::Lying,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PoseCategory::Standing => "standing",
            PoseCategory::Sitting => "sitting",
            PoseCategory::Lying => "lying",
        }
    }
}

impl std::str::FromStr for PoseCategory {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standing" => Ok(PoseCategory::Standing),
            "sitting" => Ok(PoseCategory::Sitting),
            "lying" => Ok(PoseCategory::Lying),
            _ => Err(Error::InvalidArgument(format!(
                "unknown pose category `{s}`"
            ))),
        }
    }
}

/// Seat height the sitting distribution is built around.
pub const NOMINAL_SEAT_HEIGHT: f64 = 0.45;
/// Clearance left between a resting body and its support.
pub const REST_MARGIN: f64 = 0.002;

#[derive(Clone, Debug)]
pub struct BodyModel {
    template: Arc<Template>,
}

impl Default for BodyModel {
    fn default() -> Self {
        Self::new()
    }
}

impl BodyModel {
    pub fn new() -> Self {
        BodyModel {
            template: Arc::new(Template::standard()),
        }
    }

    pub fn template(&self) -> &Template {
        &self.template
    }

    pub fn vertex_count(&self) -> usize {
        self.template.vertex_count()
    }

    pub fn faces(&self) -> &Arc<Vec<[u32; 3]>> {
        &self.template.faces
    }

    pub fn feet_mask(&self) -> &Arc<Vec<bool>> {
        &self.template.feet_mask
    }

    pub fn forward(&self, params: &BodyParams) -> BodyMesh {
        let (p, clamped) = params.clamped();
        let v = p.to_vec();
        let vertices = self.template.pose::<f64>(&v, |x, _| x);
        self.mesh(vertices, clamped)
    }

    /// Vertices together with their parameter Jacobian.
    pub fn forward_with_jacobian(&self, params: &BodyParams) -> (BodyMesh, VertexJacobian) {
        let (p, clamped) = params.clamped();
        let v = p.to_vec();
        let jets = self.template.pose::<Jet>(&v, Jet::variable);
        let vertices = jets.iter().map(|j| [j[0].v, j[1].v, j[2].v]).collect();
        let jac = jets.iter().map(|j| [j[0].d, j[1].d, j[2].d]).collect();
        (self.mesh(vertices, clamped), jac)
    }

    fn mesh(&self, vertices: Vec<Vec3>, clamped: bool) -> BodyMesh {
        BodyMesh {
            vertices,
            faces: self.template.faces.clone(),
            feet_mask: self.template.feet_mask.clone(),
            clamped,
        }
    }

    /// Writes the rest-pose template as OBJ plus a sidecar listing the
    /// segment vertex ranges and the feet mask.
    pub fn write_template(&self, obj_path: &Path) -> Result<()> {
        let mesh = self.forward(&BodyParams::default()).to_trimesh();
        save_mesh(&mesh, obj_path, MeshFormat::Obj)?;
        let side = obj_path.with_extension("segments.txt");
        let mut s = String::from("# segment first_vertex vertex_count\n");
        for seg in &self.template.segments {
            s.push_str(&format!(
                "segment {} {} {}\n",
                seg.name, seg.first_vertex, seg.vertex_count
            ));
        }
        s.push_str("feet");
        for (i, &m) in self.template.feet_mask.iter().enumerate() {
            if m {
                s.push_str(&format!(" {i}"));
            }
        }
        s.push('\n');
        std::fs::write(&side, s).map_err(|e| Error::io(&side, e))
    }

    /// Lowest z of any vertex.
    pub fn min_z(&self, params: &BodyParams) -> f64 {
        self.forward(params)
            .vertices
            .iter()
            .map(|v| v[2])
            .fold(f64::INFINITY, f64::min)
    }

    /// Deterministic draw from a per-category pose distribution. Standing and
    /// lying bodies rest on the plane z = 0; sitting bodies rest on a seat of
    /// height [`NOMINAL_SEAT_HEIGHT`]. The translation is otherwise at the
    /// origin with zero yaw.
    pub fn sample_pose(&self, category: PoseCategory, seed: u64) -> BodyParams {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed ^ 0x5bd1_e995_u64.wrapping_mul(category as u64 + 1));
        let mut g = |mean: f64, sd: f64| Normal::new(mean, sd).unwrap().sample(&mut rng);
        let mut p = BodyParams::default();
        p.shape_scale = [
            g(1.0, 0.04).clamp(0.92, 1.08),
            g(1.0, 0.06).clamp(0.88, 1.12),
            g(1.0, 0.03).clamp(0.95, 1.05),
        ];
        let a = &mut p.joint_angles;
        // arms hang beside the trunk in every category
        a[joint::L_SHOULDER_ABD] = g(1.25, 0.12);
        a[joint::R_SHOULDER_ABD] = g(1.25, 0.12);
        a[joint::L_SHOULDER_FLEX] = g(0.15, 0.2);
        a[joint::R_SHOULDER_FLEX] = g(0.15, 0.2);
        a[joint::L_ELBOW] = g(0.3, 0.2).abs();
        a[joint::R_ELBOW] = g(0.3, 0.2).abs();
        a[joint::SPINE_LATERAL] = g(0.0, 0.05);
        match category {
            PoseCategory::Standing => {
                a[joint::SPINE_FLEX] = g(0.05, 0.06);
                for (hip, abd, knee, ankle) in [
                    (
                        joint::L_HIP_FLEX,
                        joint::L_HIP_ABD,
                        joint::L_KNEE,
                        joint::L_ANKLE,
                    ),
                    (
                        joint::R_HIP_FLEX,
                        joint::R_HIP_ABD,
                        joint::R_KNEE,
                        joint::R_ANKLE,
                    ),
                ] {
                    a[hip] = g(0.02, 0.05);
                    a[abd] = g(0.04, 0.03);
                    a[knee] = g(0.04, 0.04).abs();
                    // keep the sole level
                    a[ankle] = a[knee] - a[hip];
                }
            }
            PoseCategory::Sitting => {
                a[joint::SPINE_FLEX] = g(0.1, 0.08);
                a[joint::L_ELBOW] = g(1.1, 0.2);
                a[joint::R_ELBOW] = g(1.1, 0.2);
                a[joint::L_SHOULDER_FLEX] = g(0.4, 0.15);
                a[joint::R_SHOULDER_FLEX] = g(0.4, 0.15);
                for (hip, abd, knee, ankle) in [
                    (
                        joint::L_HIP_FLEX,
                        joint::L_HIP_ABD,
                        joint::L_KNEE,
                        joint::L_ANKLE,
                    ),
                    (
                        joint::R_HIP_FLEX,
                        joint::R_HIP_ABD,
                        joint::R_KNEE,
                        joint::R_ANKLE,
                    ),
                ] {
                    // thighs horizontal so they rest flat on the seat
                    a[hip] = std::f64::consts::FRAC_PI_2;
                    a[abd] = g(0.08, 0.04);
                    a[knee] = g(1.45, 0.06);
                    a[ankle] = a[knee] - a[hip];
                }
            }
            PoseCategory::Lying => {
                a[joint::SPINE_FLEX] = -std::f64::consts::FRAC_PI_2;
                a[joint::SPINE_LATERAL] = 0.0;
                for (hip, abd, knee, ankle) in [
                    (
                        joint::L_HIP_FLEX,
                        joint::L_HIP_ABD,
                        joint::L_KNEE,
                        joint::L_ANKLE,
                    ),
                    (
                        joint::R_HIP_FLEX,
                        joint::R_HIP_ABD,
                        joint::R_KNEE,
                        joint::R_ANKLE,
                    ),
                ] {
                    a[hip] = std::f64::consts::FRAC_PI_2 + 0.1;
                    a[abd] = g(0.06, 0.04);
                    a[knee] = g(0.05, 0.03).abs();
                    // relaxed plantar flexion turns the soles toward the floor
                    a[ankle] = g(-0.8, 0.05);
                }
                a[joint::L_SHOULDER_ABD] = g(1.3, 0.1);
                a[joint::R_SHOULDER_ABD] = g(1.3, 0.1);
            }
        }
        p.clamp();
        p.translation = [0.0; 3];
        if category == PoseCategory::Lying {
            // lower the legs until the heels rest with the pelvis
            for _ in 0..40 {
                let mesh = self.forward(&p);
                let body = mesh
                    .vertices
                    .iter()
                    .map(|v| v[2])
                    .fold(f64::INFINITY, f64::min);
                let feet = mesh
                    .feet_vertices()
                    .iter()
                    .map(|v| v[2])
                    .fold(f64::INFINITY, f64::min);
                if feet - body < 0.01 {
                    break;
                }
                p.joint_angles[joint::L_HIP_FLEX] -= 0.01;
                p.joint_angles[joint::R_HIP_FLEX] -= 0.01;
            }
        }
        match category {
            PoseCategory::Sitting => {
                p.translation[2] = NOMINAL_SEAT_HEIGHT + REST_MARGIN - self.seat_contact_z(&p);
            }
            _ => {
                p.translation[2] = REST_MARGIN - self.min_z(&p);
            }
        }
        p
    }

    /// Lowest z over the pelvis and thighs, the vertices that rest on a seat.
    pub fn seat_contact_z(&self, params: &BodyParams) -> f64 {
        let v = self.forward(params).vertices;
        ["pelvis", "l_thigh", "r_thigh"]
            .iter()
            .flat_map(|n| self.template.segment_range(n).unwrap())
            .map(|i| v[i][2])
            .fold(f64::INFINITY, f64::min)
    }

    /// Centroids of the two shoulder landmark vertices (left, right).
    pub fn shoulder_landmarks(&self, vertices: &[Vec3]) -> (Vec3, Vec3) {
        let (l, r) = self.template.shoulder_landmarks;
        (vertices[l], vertices[r])
    }

    /// Rotates a mesh about the vertical axis through `pivot`.
    pub fn yaw_about(vertices: &[Vec3], pivot: Vec3, angle: f64) -> Vec<Vec3> {
        vertices
            .iter()
            .map(|&v| geom::add(pivot, geom::rot_z(geom::sub(v, pivot), angle)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_params(seed: u64) -> BodyParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = BodyParams {
            translation: [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.3..1.0),
            ],
            yaw: rng.gen_range(-3.0..3.0),
            ..Default::default()
        };
        for (a, &(lo, hi)) in p.joint_angles.iter_mut().zip(JOINT_LIMITS.iter()) {
            *a = rng.gen_range(lo + 0.05..hi - 0.05);
        }
        for s in p.shape_scale.iter_mut() {
            *s = rng.gen_range(0.85..1.15);
        }
        p
    }

    #[test]
    fn template_counts_and_watertight() {
        let m = BodyModel::new();
        assert_eq!(m.vertex_count(), 642);
        let mesh = m.forward(&BodyParams::default());
        assert!(mesh.to_trimesh().is_watertight());
        assert!(mesh.feet_mask.iter().filter(|&&f| f).count() >= 10);
        // topology is shared across poses
        let other = m.forward(&random_params(3));
        assert_eq!(other.vertices.len(), 642);
        assert!(Arc::ptr_eq(&mesh.faces, &other.faces));
    }

    #[test]
    fn rest_pose_geometry() {
        let m = BodyModel::new();
        let p = BodyParams {
            translation: [0.3, -0.2, 1.1],
            ..Default::default()
        };
        let mesh = m.forward(&p);
        let sole = mesh
            .feet_vertices()
            .iter()
            .map(|v| v[2])
            .fold(f64::INFINITY, f64::min);
        let leg = m.template().leg_length(&[1.0; 3]);
        assert!((sole - (1.1 - leg)).abs() < 1e-12, "{sole} {leg}");
    }

    #[test]
    fn translation_is_rigid_shift() {
        let m = BodyModel::new();
        let p = random_params(4);
        let mut q = p;
        q.translation[0] += 1.0;
        let (a, b) = (m.forward(&p), m.forward(&q));
        for (u, v) in a.vertices.iter().zip(&b.vertices) {
            assert!((v[0] - u[0] - 1.0).abs() < 1e-12);
            assert_eq!((u[1], u[2]), (v[1], v[2]));
        }
    }

    #[test]
    fn yaw_equivariance() {
        let m = BodyModel::new();
        let p = random_params(5);
        let mut q = p;
        q.yaw += 0.7;
        let rotated = BodyModel::yaw_about(&m.forward(&p).vertices, p.translation, 0.7);
        for (u, v) in rotated.iter().zip(&m.forward(&q).vertices) {
            assert!(geom::dist(*u, *v) < 1e-9);
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let m = BodyModel::new();
        let p = random_params(6);
        let (_, jac) = m.forward_with_jacobian(&p);
        let base = p.to_vec();
        let h = 1e-6;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let vi = rng.gen_range(0..642);
            for k in 0..PARAM_DIM {
                let mut a = base;
                let mut b = base;
                a[k] += h;
                b[k] -= h;
                let va = m.forward(&BodyParams::from_slice(&a).unwrap()).vertices[vi];
                let vb = m.forward(&BodyParams::from_slice(&b).unwrap()).vertices[vi];
                for c in 0..3 {
                    let fd = (va[c] - vb[c]) / (2.0 * h);
                    let an = jac[vi][c][k];
                    assert!(
                        (fd - an).abs() <= 1e-4 * an.abs().max(1e-3),
                        "vertex {vi} coord {c} param {k}: fd {fd} analytic {an}"
                    );
                }
            }
        }
    }

    #[test]
    fn out_of_range_angles_are_clamped_and_flagged() {
        let m = BodyModel::new();
        let mut p = BodyParams::default();
        p.joint_angles[joint::L_KNEE] = -1.0;
        let mesh = m.forward(&p);
        assert!(mesh.clamped);
        let mut q = p;
        q.joint_angles[joint::L_KNEE] = 0.0;
        assert_eq!(mesh.vertices, m.forward(&q).vertices);
        assert!(!m.forward(&q).clamped);
    }

    #[test]
    fn prior_properties() {
        let w = PriorWeights::default();
        assert_eq!(param_prior(&BodyParams::default(), &w).0, 0.0);
        let mut p = random_params(8);
        p.shape_scale = [1.0; 3];
        let base = param_prior(&p, &w).0;
        let mut d = p;
        for a in d.joint_angles.iter_mut() {
            *a *= 2.0;
        }
        assert!((param_prior(&d, &w).0 - 4.0 * base).abs() < 1e-12 * base.max(1.0));

        let p = random_params(9);
        let w = PriorWeights {
            pose: 0.02,
            distal: 0.01,
            shape: 0.01,
        };
        let (_, g) = param_prior(&p, &w);
        let v = p.to_vec();
        let h = 1e-6;
        for k in 0..PARAM_DIM {
            let mut a = v;
            let mut b = v;
            a[k] += h;
            b[k] -= h;
            let fd = (param_prior(&BodyParams::from_slice(&a).unwrap(), &w).0
                - param_prior(&BodyParams::from_slice(&b).unwrap(), &w).0)
                / (2.0 * h);
            assert!(
                (fd - g[k]).abs() <= 1e-6 * g[k].abs().max(1e-3),
                "param {k}"
            );
        }
    }

    #[test]
    fn sample_pose_contracts() {
        let m = BodyModel::new();
        for seed in 0..30 {
            let s = m.sample_pose(PoseCategory::Standing, seed);
            assert_eq!(s, m.sample_pose(PoseCategory::Standing, seed));
            let mesh = m.forward(&s);
            // each foot's sole touches the ground plane
            let half = mesh.vertices.len();
            let feet: Vec<(usize, Vec3)> = mesh
                .vertices
                .iter()
                .enumerate()
                .filter(|(i, _)| mesh.feet_mask[*i])
                .map(|(i, v)| (i, *v))
                .collect();
            let (lseg, rseg) = m.template().foot_ranges();
            for range in [lseg, rseg] {
                let low = feet
                    .iter()
                    .filter(|(i, _)| range.contains(i))
                    .map(|(_, v)| v[2])
                    .fold(f64::INFINITY, f64::min);
                assert!((0.0..=0.02).contains(&low), "seed {seed}: {low}");
            }
            assert!(half == 642);

            let sit = m.sample_pose(PoseCategory::Sitting, seed);
            assert!(
                (0.40..=0.55).contains(&sit.translation[2]),
                "{}",
                sit.translation[2]
            );
            let lie = m.sample_pose(PoseCategory::Lying, seed);
            assert!(m.min_z(&lie) > 0.0);
        }
    }
}
