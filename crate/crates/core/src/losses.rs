//! Body-scene geometry losses shared by training and fitting.

use crate::error::{Error, Result};
use crate::geom::{sub, Vec3};
use crate::spatial::{PointIndex, SdfField};

/// Default Geman-McClure scale, meters.
pub const CONTACT_SIGMA: f64 = 0.2;

/// What the geometry losses need to know about a scene.
#[derive(Clone, Debug)]
pub struct SceneGeometry {
    pub sdf: SdfField,
    pub vertices: PointIndex,
}

pub fn geman_mcclure(x: f64, sigma: f64) -> f64 {
    let x2 = x * x;
    x2 / (x2 + sigma * sigma)
}

/// `(1/V) Σ |min(sdf(v), 0)|` and its gradient with respect to each vertex.
pub fn collision_loss(vertices: &[Vec3], sdf: &SdfField) -> Result<(f64, Vec<Vec3>)> {
    if vertices.is_empty() {
        return Err(Error::Empty("collision loss vertices"));
    }
    let inv = 1.0 / vertices.len() as f64;
    let mut value = 0.0;
    let mut grad = vec![[0.0; 3]; vertices.len()];
    for (v, g) in vertices.iter().zip(grad.iter_mut()) {
        let d = sdf.eval(*v)?;
        if d < 0.0 {
            value -= d * inv;
            let n = sdf.gradient(*v)?;
            *g = [-n[0] * inv, -n[1] * inv, -n[2] * inv];
        }
    }
    Ok((value, grad))
}

/// `Σ_{feet} ρ(min_s |v - s|)` with Geman-McClure ρ, and its gradient.
pub fn contact_loss(
    vertices: &[Vec3],
    feet_mask: &[bool],
    scene: &PointIndex,
    sigma: f64,
) -> Result<(f64, Vec<Vec3>)> {
    if feet_mask.len() != vertices.len() {
        return Err(Error::Dimension {
            what: "feet mask",
            expected: vertices.len(),
            got: feet_mask.len(),
        });
    }
    if !feet_mask.iter().any(|&m| m) {
        return Err(Error::Empty("feet mask"));
    }
    let s2 = sigma * sigma;
    let mut value = 0.0;
    let mut grad = vec![[0.0; 3]; vertices.len()];
    for ((v, g), _) in vertices
        .iter()
        .zip(grad.iter_mut())
        .zip(feet_mask)
        .filter(|(_, &m)| m)
    {
        let (j, d2) = scene.nearest_sq(*v);
        value += d2 / (d2 + s2);
        // dρ/dv = 2σ²(v - s)/(d² + σ²)²
        let k = 2.0 * s2 / ((d2 + s2) * (d2 + s2));
        let r = sub(*v, scene.points()[j]);
        *g = [k * r[0], k * r[1], k * r[2]];
    }
    Ok((value, grad))
}
