//! Two-stage basis point set encoding.
//!
//! Stage 1 selects, for every fixed basis point in the unit ball, its nearest
//! local-scene point (scene vertex or cage sample). The selected points form
//! the scene BPS and the distances the scene feature. Stage 2 measures, from
//! every scene BPS point, the distance to the nearest body vertex: the body
//! feature. Entry `i` of every array always refers to basis point `i`.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::mesh::{CageTransform, LocalScene};
use crate::spatial::PointIndex;

#[derive(Clone, Debug, PartialEq)]
pub struct BasisPointSet {
    pub points: Vec<Vec3>,
    pub seed: u64,
}

impl BasisPointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `n` points uniform in the open unit ball, by rejection from the cube.
pub fn make_basis(n: usize, seed: u64) -> Result<BasisPointSet> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "basis needs at least one point".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    while points.len() < n {
        let p = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        if geom::dot(p, p) < 1.0 {
            points.push(p);
        }
    }
    Ok(BasisPointSet { points, seed })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneEncoding {
    /// Selected local-scene points, cage frame (meters).
    pub scene_bps: Vec<Vec3>,
    /// Basis-to-scene distances, sphere frame.
    pub scene_feature: Vec<f64>,
    /// `true` where the selected point is a ceiling/wall sample.
    pub source_flags: Vec<bool>,
    pub transform: CageTransform,
}

impl SceneEncoding {
    pub fn len(&self) -> usize {
        self.scene_bps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scene_bps.is_empty()
    }

    /// Scene BPS in the sphere frame.
    pub fn bps_sphere(&self) -> Vec<Vec3> {
        self.scene_bps
            .iter()
            .map(|&q| self.transform.cage_to_sphere(q))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BodyFeature {
    pub values: Vec<f64>,
}

/// Stage 1 over a cropped scene. `transform` must share the local scene's
/// cage; it may add the in-sphere augmentation.
pub fn encode_scene(
    basis: &BasisPointSet,
    local: &LocalScene,
    transform: &CageTransform,
) -> Result<SceneEncoding> {
    let cage: Vec<Vec3> = local
        .all_points()
        .into_iter()
        .map(|p| transform.aligned_to_cage(p))
        .collect();
    let n_scene = local.scene_vertex_count();
    let flags: Vec<bool> = (0..cage.len()).map(|i| i >= n_scene).collect();
    encode_scene_points(basis, &cage, &flags, transform)
}

/// Stage 1 over explicit cage-frame points with their cage/scene flags.
pub fn encode_scene_points(
    basis: &BasisPointSet,
    cage_points: &[Vec3],
    is_cage_sample: &[bool],
    transform: &CageTransform,
) -> Result<SceneEncoding> {
    if cage_points.is_empty() {
        return Err(Error::Empty("local scene point set"));
    }
    if is_cage_sample.len() != cage_points.len() {
        return Err(Error::Dimension {
            what: "scene source flags",
            expected: cage_points.len(),
            got: is_cage_sample.len(),
        });
    }
    let sphere: Vec<Vec3> = cage_points
        .iter()
        .map(|&q| transform.cage_to_sphere(q))
        .collect();
    let index = PointIndex::build(sphere)?;
    let hits: Vec<(usize, f64)> = basis.points.par_iter().map(|&b| index.nearest(b)).collect();
    Ok(SceneEncoding {
        scene_bps: hits.iter().map(|&(i, _)| cage_points[i]).collect(),
        scene_feature: hits.iter().map(|&(_, d)| d).collect(),
        source_flags: hits.iter().map(|&(i, _)| is_cage_sample[i]).collect(),
        transform: *transform,
    })
}

/// Stage 2: distance from each scene BPS point to the nearest body vertex,
/// with both sets in the sphere frame.
pub fn encode_body(scene: &SceneEncoding, body_sphere: &[Vec3]) -> Result<BodyFeature> {
    if body_sphere.is_empty() {
        return Err(Error::Empty("body vertex set"));
    }
    let index = PointIndex::build(body_sphere.to_vec())?;
    let values = scene
        .bps_sphere()
        .par_iter()
        .map(|&s| index.nearest(s).1)
        .collect();
    Ok(BodyFeature { values })
}

/// Stage 2 for cage-frame body vertices.
pub fn encode_body_cage(scene: &SceneEncoding, body_cage: &[Vec3]) -> Result<BodyFeature> {
    let t = scene.transform;
    let sphere: Vec<Vec3> = body_cage.iter().map(|&q| t.cage_to_sphere(q)).collect();
    encode_body(scene, &sphere)
}

/// Body feature of world-frame vertices together with its subgradients.
#[derive(Clone, Debug)]
pub struct FeatureJacobian {
    pub feature: BodyFeature,
    /// Body vertex achieving each entry (lowest index on ties).
    pub argmin: Vec<usize>,
    /// Gradient of entry `i` with respect to world vertex `argmin[i]`.
    pub grad: Vec<Vec3>,
}

/// `f(π⁻¹(V))`: the body feature of world-frame vertices, differentiable in
/// the vertices. Zero-distance entries get a zero gradient.
pub fn feature_from_body(body_world: &[Vec3], scene: &SceneEncoding) -> Result<FeatureJacobian> {
    if body_world.is_empty() {
        return Err(Error::Empty("body vertex set"));
    }
    let t = scene.transform;
    let sphere: Vec<Vec3> = body_world.iter().map(|&p| t.world_to_sphere(p)).collect();
    let index = PointIndex::build(sphere.clone())?;
    let hits: Vec<(usize, f64)> = scene
        .bps_sphere()
        .iter()
        .map(|&s| index.nearest(s))
        .collect();
    let bps = scene.bps_sphere();
    let grad = hits
        .iter()
        .zip(&bps)
        .map(|(&(j, d), &s)| {
            if d > 0.0 {
                let e = geom::scale(geom::sub(sphere[j], s), 1.0 / d);
                // d/dv of |A v + b - s| for A = scale·Rz(rotation)·Rz(world_yaw)
                let e_cage = geom::rot_z(e, -t.rotation);
                geom::scale(t.cage_dir_to_world(e_cage), t.scale)
            } else {
                [0.0; 3]
            }
        })
        .collect();
    Ok(FeatureJacobian {
        feature: BodyFeature {
            values: hits.iter().map(|&(_, d)| d).collect(),
        },
        argmin: hits.iter().map(|&(j, _)| j).collect(),
        grad,
    })
}

/// Feature vector as `u32` count followed by little-endian `f32` values.
pub fn write_feature(values: &[f64], mut w: impl Write) -> std::io::Result<()> {
    w.write_all(&(values.len() as u32).to_le_bytes())?;
    for v in values {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_feature(mut r: impl Read) -> std::io::Result<Vec<f32>> {
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let n = u32::from_le_bytes(b4) as usize;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut b4)?;
        out.push(f32::from_le_bytes(b4));
    }
    Ok(out)
}
