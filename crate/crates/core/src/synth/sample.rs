use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scene::SynthScene;
use crate::body::{BodyModel, BodyParams, PoseCategory};
use crate::bps::{encode_body_cage, encode_scene, BasisPointSet, SceneEncoding};
use crate::error::{Error, Result};
use crate::geom::{bounds, norm, Vec3};
use crate::mesh::{crop_local_scene, CageTransform};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CageConfig {
    pub edge: f64,
    pub wall_spacing: f64,
    /// Cage center height above the floor.
    pub center_z: f64,
    /// Horizontal cage-center jitter as a fraction of the half edge.
    pub center_jitter: f64,
    /// Radius of the in-sphere shift.
    pub shift_bound: f64,
}

impl Default for CageConfig {
    fn default() -> Self {
        CageConfig {
            edge: 2.0,
            wall_spacing: 0.25,
            center_z: 1.0,
            center_jitter: 1.0 / 3.0,
            shift_bound: 0.05,
        }
    }
}

/// One draw of the augmentation pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Augmentation {
    pub world_yaw: f64,
    /// Cage center offset from the body's bounding-box center, x and y.
    pub center_offset: [f64; 2],
    pub sphere_rotation: f64,
    pub sphere_shift: Vec3,
}

impl Augmentation {
    pub const IDENTITY: Augmentation = Augmentation {
        world_yaw: 0.0,
        center_offset: [0.0; 2],
        sphere_rotation: 0.0,
        sphere_shift: [0.0; 3],
    };

    pub fn draw(rng: &mut impl Rng, cfg: &CageConfig) -> Self {
        let r = 0.5 * cfg.edge * cfg.center_jitter;
        let shift = loop {
            let s = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            if norm(s) < 1.0 {
                break [
                    s[0] * cfg.shift_bound,
                    s[1] * cfg.shift_bound,
                    s[2] * cfg.shift_bound,
                ];
            }
        };
        Augmentation {
            world_yaw: rng.gen_range(0.0..TAU),
            center_offset: [rng.gen_range(-r..=r), rng.gen_range(-r..=r)],
            sphere_rotation: rng.gen_range(0.0..TAU),
            sphere_shift: shift,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

/// One ground-truth interaction: `{x_s, V_s, x_b, V_b}` plus what is needed
/// to map back to the scene.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSample {
    pub split: Split,
    pub scene_seed: u64,
    pub category: PoseCategory,
    pub params: BodyParams,
    pub transform: CageTransform,
    /// Scene feature, sphere units.
    pub x_s: Vec<f32>,
    /// Scene BPS, cage frame, flattened xyz.
    pub v_s: Vec<f32>,
    /// Body feature, sphere units.
    pub x_b: Vec<f32>,
    /// Body vertices, cage frame, flattened xyz.
    pub v_b: Vec<f32>,
}

fn unflatten(v: &[f32]) -> Vec<Vec3> {
    v.chunks(3)
        .map(|c| [c[0] as f64, c[1] as f64, c[2] as f64])
        .collect()
}

impl TrainSample {
    pub fn scene_bps(&self) -> Vec<Vec3> {
        unflatten(&self.v_s)
    }

    pub fn body_vertices(&self) -> Vec<Vec3> {
        unflatten(&self.v_b)
    }

    pub fn body_vertices_world(&self) -> Vec<Vec3> {
        self.body_vertices()
            .into_iter()
            .map(|q| self.transform.cage_to_world(q))
            .collect()
    }

    /// The stored Stage-1 result. Source flags are not stored and come back
    /// all false.
    pub fn scene_encoding(&self) -> SceneEncoding {
        SceneEncoding {
            scene_bps: self.scene_bps(),
            scene_feature: self.x_s.iter().map(|&v| v as f64).collect(),
            source_flags: vec![false; self.x_s.len()],
            transform: self.transform,
        }
    }
}

fn round_points(points: &[Vec3]) -> Vec<f32> {
    points
        .iter()
        .flat_map(|p| p.iter().map(|&c| c as f32))
        .collect()
}

/// Runs the encoding pipeline with an explicit augmentation.
#[allow(clippy::too_many_arguments)]
pub fn extract_sample_with(
    model: &BodyModel,
    scene: &SynthScene,
    params: &BodyParams,
    category: PoseCategory,
    aug: &Augmentation,
    basis: &BasisPointSet,
    cfg: &CageConfig,
    split: Split,
) -> Result<TrainSample> {
    let body_world = model.forward(params).vertices;
    let aligned: Vec<Vec3> = body_world
        .iter()
        .map(|&p| crate::geom::rot_z(p, aug.world_yaw))
        .collect();
    let (lo, hi) = bounds(&aligned);
    let center = [
        0.5 * (lo[0] + hi[0]) + aug.center_offset[0],
        0.5 * (lo[1] + hi[1]) + aug.center_offset[1],
        cfg.center_z,
    ];
    let h = 0.5 * cfg.edge;
    if aligned
        .iter()
        .any(|p| (0..3).any(|k| (p[k] - center[k]).abs() > h))
    {
        return Err(Error::Placement("body not fully inside the cage".into()));
    }
    let scene_aligned = scene.mesh.rotated_z(aug.world_yaw);
    let local = crop_local_scene(&scene_aligned, center, cfg.edge, cfg.wall_spacing)?;
    let transform = local
        .transform
        .with_world_yaw(aug.world_yaw)
        .with_augmentation(aug.sphere_rotation, aug.sphere_shift)?;
    let mut enc = encode_scene(basis, &local, &transform)?;
    let v_s = round_points(&enc.scene_bps);
    enc.scene_bps = unflatten(&v_s);
    let body_cage: Vec<Vec3> = body_world
        .iter()
        .map(|&p| transform.world_to_cage(p))
        .collect();
    let v_b = round_points(&body_cage);
    let x_b = encode_body_cage(&enc, &unflatten(&v_b))?;
    Ok(TrainSample {
        split,
        scene_seed: scene.seed,
        category,
        params: *params,
        transform,
        x_s: enc.scene_feature.iter().map(|&v| v as f32).collect(),
        v_s,
        x_b: x_b.values.iter().map(|&v| v as f32).collect(),
        v_b,
    })
}

/// Draws augmentations from `aug_seed` until the body fits the jittered
/// cage (bounded retries).
#[allow(clippy::too_many_arguments)]
pub fn extract_sample(
    model: &BodyModel,
    scene: &SynthScene,
    params: &BodyParams,
    category: PoseCategory,
    aug_seed: u64,
    basis: &BasisPointSet,
    cfg: &CageConfig,
    split: Split,
) -> Result<TrainSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(aug_seed);
    let mut last = None;
    for _ in 0..64 {
        let aug = Augmentation::draw(&mut rng, cfg);
        match extract_sample_with(model, scene, params, category, &aug, basis, cfg, split) {
            Ok(s) => return Ok(s),
            Err(e @ (Error::Placement(_) | Error::EmptyRegion(_))) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(Error::Placement(format!(
        "no cage fits the body after 64 draws: {}",
        last.map(|e| e.to_string()).unwrap_or_default()
    )))
}
