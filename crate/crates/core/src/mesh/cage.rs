//! Virtual cage cropping and the cage ↔ unit-sphere ↔ world transforms.
//!
//! Three frames are involved:
//! * world: the scene's own coordinates (meters);
//! * cage: world rotated about +z by `world_yaw`, then translated so the cage
//!   center is the origin (meters). Scene BPS and body vertices live here;
//! * sphere: cage coordinates scaled so the cage inscribes the unit ball,
//!   rotated about +z by `rotation` and offset by `shift`. Distance features
//!   are measured here.

use serde::{Deserialize, Serialize};

use super::TriMesh;
use crate::error::{Error, Result};
use crate::geom::{self, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CageTransform {
    /// Cage center in the yaw-rotated world frame.
    pub cage_center: Vec3,
    pub cage_edge: f64,
    /// Cage → sphere scale. `2 / (edge·√3)` shrunk by `1 − |shift|` so the
    /// shifted cage still fits inside the unit ball.
    pub scale: f64,
    /// In-sphere z rotation (augmentation).
    pub rotation: f64,
    /// In-sphere offset (augmentation).
    pub shift: Vec3,
    /// World z rotation applied before cropping (augmentation).
    pub world_yaw: f64,
}

impl CageTransform {
    pub fn new(cage_center: Vec3, cage_edge: f64) -> Result<Self> {
        if !(cage_edge > 0.0) || !geom::is_finite(cage_center) {
            return Err(Error::InvalidArgument(format!(
                "cage edge must be positive and center finite (edge {cage_edge})"
            )));
        }
        Ok(CageTransform {
            cage_center,
            cage_edge,
            scale: Self::inscribed_scale(cage_edge),
            rotation: 0.0,
            shift: [0.0; 3],
            world_yaw: 0.0,
        })
    }

    /// Scale that puts the cage corners exactly on the unit sphere.
    pub fn inscribed_scale(cage_edge: f64) -> f64 {
        2.0 / (cage_edge * 3f64.sqrt())
    }

    /// Adds the in-sphere augmentation. `|shift|` must be below 1.
    pub fn with_augmentation(mut self, rotation: f64, shift: Vec3) -> Result<Self> {
        let s = geom::norm(shift);
        if !(s < 1.0) {
            return Err(Error::InvalidArgument(format!("in-sphere shift {s} ≥ 1")));
        }
        self.rotation = rotation;
        self.shift = shift;
        self.scale = Self::inscribed_scale(self.cage_edge) * (1.0 - s);
        Ok(self)
    }

    pub fn with_world_yaw(mut self, world_yaw: f64) -> Self {
        self.world_yaw = world_yaw;
        self
    }

    /// World point → cage frame (π⁻¹ restricted to the rigid part).
    pub fn world_to_cage(&self, p: Vec3) -> Vec3 {
        geom::sub(geom::rot_z(p, self.world_yaw), self.cage_center)
    }

    /// Cage frame → world point (π).
    pub fn cage_to_world(&self, q: Vec3) -> Vec3 {
        geom::rot_z(geom::add(q, self.cage_center), -self.world_yaw)
    }

    pub fn cage_to_sphere(&self, q: Vec3) -> Vec3 {
        geom::add(
            geom::rot_z(geom::scale(q, self.scale), self.rotation),
            self.shift,
        )
    }

    pub fn sphere_to_cage(&self, u: Vec3) -> Vec3 {
        geom::scale(
            geom::rot_z(geom::sub(u, self.shift), -self.rotation),
            1.0 / self.scale,
        )
    }

    /// Point in the cage-aligned (yaw-rotated) world frame → cage frame.
    pub fn aligned_to_cage(&self, p: Vec3) -> Vec3 {
        geom::sub(p, self.cage_center)
    }

    pub fn world_to_sphere(&self, p: Vec3) -> Vec3 {
        self.cage_to_sphere(self.world_to_cage(p))
    }

    pub fn sphere_to_world(&self, u: Vec3) -> Vec3 {
        self.cage_to_world(self.sphere_to_cage(u))
    }

    /// Rotates a cage-frame vector back into the world frame (no translation).
    pub fn cage_dir_to_world(&self, v: Vec3) -> Vec3 {
        geom::rot_z(v, -self.world_yaw)
    }

    /// Rotates a world-frame vector into the cage frame (no translation).
    pub fn world_dir_to_cage(&self, v: Vec3) -> Vec3 {
        geom::rot_z(v, self.world_yaw)
    }

    /// The 8 cage corners in the cage frame.
    pub fn corners(&self) -> [Vec3; 8] {
        let h = 0.5 * self.cage_edge;
        let mut out = [[0.0; 3]; 8];
        for (i, c) in out.iter_mut().enumerate() {
            *c = [
                if i & 1 == 0 { -h } else { h },
                if i & 2 == 0 { -h } else { h },
                if i & 4 == 0 { -h } else { h },
            ];
        }
        out
    }

    /// Whether a cage-frame point lies in the closed cage box.
    pub fn contains_cage_point(&self, q: Vec3) -> bool {
        let h = 0.5 * self.cage_edge;
        q.iter().all(|c| c.abs() <= h)
    }
}

#[derive(Clone, Debug)]
pub struct LocalScene {
    /// Scene vertices inside the cage, in the cage-aligned world frame.
    pub cropped_mesh: TriMesh,
    /// Ceiling and wall samples, same frame as `cropped_mesh`.
    pub cage_points: Vec<Vec3>,
    pub transform: CageTransform,
}

impl LocalScene {
    /// Cropped vertices followed by cage points; the order used for Stage-1
    /// selection and for `source_flags`.
    pub fn all_points(&self) -> Vec<Vec3> {
        let mut v = self.cropped_mesh.vertices.clone();
        v.extend_from_slice(&self.cage_points);
        v
    }

    pub fn scene_vertex_count(&self) -> usize {
        self.cropped_mesh.vertices.len()
    }
}

/// Regular grid of pitch `spacing` on the ceiling and four walls of an
/// axis-aligned cube (floor excluded). Shared edges appear once per face.
pub fn cage_wall_points(center: Vec3, edge: f64, spacing: f64) -> Vec<Vec3> {
    let h = 0.5 * edge;
    let n = (edge / spacing + 1e-9).floor() as usize + 1;
    let ticks: Vec<f64> = (0..n).map(|k| -h + k as f64 * spacing).collect();
    let mut pts = Vec::with_capacity(5 * n * n);
    // ceiling
    for &a in &ticks {
        for &b in &ticks {
            pts.push([a, b, h]);
        }
    }
    // walls x = ±h, y = ±h
    for side in [-h, h] {
        for &a in &ticks {
            for &b in &ticks {
                pts.push([side, a, b]);
            }
        }
    }
    for side in [-h, h] {
        for &a in &ticks {
            for &b in &ticks {
                pts.push([a, side, b]);
            }
        }
    }
    pts.into_iter().map(|p| geom::add(p, center)).collect()
}

/// Crops `scene` (cage-aligned frame) to the closed cube of edge `cage_edge`
/// around `cage_center` and samples the ceiling and wall points.
pub fn crop_local_scene(
    scene: &TriMesh,
    cage_center: Vec3,
    cage_edge: f64,
    wall_spacing: f64,
) -> Result<LocalScene> {
    if !(cage_edge > 0.0) || !(wall_spacing > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "cage edge {cage_edge} and wall spacing {wall_spacing} must be positive"
        )));
    }
    let transform = CageTransform::new(cage_center, cage_edge)?;
    let keep: Vec<bool> = scene
        .vertices
        .iter()
        .map(|&p| transform.contains_cage_point(transform.aligned_to_cage(p)))
        .collect();
    if !keep.iter().any(|&k| k) {
        return Err(Error::EmptyRegion(format!(
            "no scene vertex inside the {cage_edge} m cage at {cage_center:?}"
        )));
    }
    Ok(LocalScene {
        cropped_mesh: scene.filter_vertices(&keep),
        cage_points: cage_wall_points(cage_center, cage_edge, wall_spacing),
        transform,
    })
}

/// Normalizes the local scene (cropped vertices, then cage points) into the
/// unit sphere using the scene's transform.
pub fn to_unit_sphere(local: &LocalScene) -> (Vec<Vec3>, CageTransform) {
    let t = local.transform;
    let pts = local
        .all_points()
        .into_iter()
        .map(|p| t.cage_to_sphere(t.aligned_to_cage(p)))
        .collect();
    (pts, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn floor(extent: f64, step: f64) -> TriMesh {
        let n = (extent / step).round() as usize + 1;
        let mut v = Vec::new();
        for i in 0..n {
            for j in 0..n {
                v.push([
                    -extent / 2.0 + i as f64 * step,
                    -extent / 2.0 + j as f64 * step,
                    0.0,
                ]);
            }
        }
        let mut f = Vec::new();
        for i in 0..n - 1 {
            for j in 0..n - 1 {
                let a = (i * n + j) as u32;
                let b = a + n as u32;
                f.push([a, b, a + 1]);
                f.push([a + 1, b, b + 1]);
            }
        }
        TriMesh::new(v, f).unwrap()
    }

    #[test]
    fn wall_point_count_for_default_cage() {
        let local = crop_local_scene(&floor(4.0, 0.1), [0.0, 0.0, 1.0], 2.0, 0.25).unwrap();
        assert_eq!(local.cage_points.len(), 405);
        for p in &local.cage_points {
            let q = local.transform.aligned_to_cage(*p);
            let on_face = (q[2] - 1.0).abs() < 1e-12
                || (q[0].abs() - 1.0).abs() < 1e-12
                || (q[1].abs() - 1.0).abs() < 1e-12;
            assert!(on_face, "{q:?}");
            assert!(q[2] >= -1.0 - 1e-12);
        }
    }

    #[test]
    fn cage_above_scene_is_empty() {
        let err = crop_local_scene(&floor(4.0, 0.1), [0.0, 0.0, 5.0], 2.0, 0.25).unwrap_err();
        assert!(matches!(err, Error::EmptyRegion(_)));
    }

    #[test]
    fn boundary_vertex_included() {
        let m = TriMesh::point_cloud(vec![[1.0, 0.0, 0.0], [1.0 + 1e-6, 0.0, 0.0]]).unwrap();
        let local = crop_local_scene(&m, [0.0, 0.0, 0.0], 2.0, 0.5).unwrap();
        assert_eq!(local.cropped_mesh.vertices, vec![[1.0, 0.0, 0.0]]);
    }

    #[test]
    fn crop_is_idempotent_and_inside() {
        let scene = floor(4.0, 0.1);
        let a = crop_local_scene(&scene, [0.3, -0.2, 1.0], 2.0, 0.25).unwrap();
        for p in &a.cropped_mesh.vertices {
            let q = a.transform.aligned_to_cage(*p);
            assert!(q.iter().all(|c| c.abs() <= 1.0 + 1e-9));
        }
        let b = crop_local_scene(&a.cropped_mesh, [0.3, -0.2, 1.0], 2.0, 0.25).unwrap();
        assert_eq!(a.cropped_mesh, b.cropped_mesh);
    }

    #[test]
    fn corners_on_unit_sphere_and_center_at_origin() {
        let t = CageTransform::new([0.4, 2.0, 1.0], 2.0).unwrap();
        for c in t.corners() {
            assert!((geom::norm(t.cage_to_sphere(c)) - 1.0).abs() < 1e-9);
        }
        assert_eq!(t.world_to_sphere([0.4, 2.0, 1.0]), [0.0; 3]);
    }

    #[test]
    fn augmented_corners_stay_inside_ball() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let shift = [
                rng.gen_range(-0.03..0.03),
                rng.gen_range(-0.03..0.03),
                rng.gen_range(-0.03..0.03),
            ];
            let t = CageTransform::new([0.0, 0.0, 1.0], 2.0)
                .unwrap()
                .with_augmentation(rng.gen_range(0.0..std::f64::consts::TAU), shift)
                .unwrap();
            for c in t.corners() {
                assert!(geom::norm(t.cage_to_sphere(c)) <= 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn forward_inverse_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = CageTransform::new([1.5, -0.7, 1.0], 2.0)
            .unwrap()
            .with_augmentation(0.8, [0.02, -0.01, 0.03])
            .unwrap()
            .with_world_yaw(2.1);
        for _ in 0..1000 {
            let p = [
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(0.0..2.0),
            ];
            let back = t.sphere_to_world(t.world_to_sphere(p));
            assert!(geom::dist(p, back) < 1e-6);
        }
    }
}
