use std::f64::consts::TAU;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scene::{Support, SynthScene};
use crate::body::{joint, BodyModel, BodyParams, PoseCategory, REST_MARGIN};
use crate::error::{Error, Result};
use crate::geom::{bounds, Vec3};
use crate::losses::collision_loss;

/// Largest accepted collision loss of a placed body.
pub const MAX_PLACEMENT_COLLISION: f64 = 1e-4;
/// Largest accepted gap between the support and its contact vertices.
pub const CONTACT_TOLERANCE: f64 = 0.02;
/// Pelvis joint distance from the back edge of a seat.
const SEAT_BACK_OFFSET: f64 = 0.13;
const ATTEMPTS: usize = 200;

struct Leg {
    hip: usize,
    knee: usize,
    ankle: usize,
    foot: Range<usize>,
}

fn min_z(v: &[Vec3], r: Range<usize>) -> f64 {
    v[r].iter().map(|p| p[2]).fold(f64::INFINITY, f64::min)
}

/// Bisects `f` (increasing in `x` on `[lo, hi]`) for the smallest
/// non-negative value; `None` if there is no sign change.
fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> Option<f64> {
    if f(lo) > 0.0 || f(hi) < 0.0 {
        return None;
    }
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(hi)
}

/// Adjusts knees (feet too low) or toe-down ankles (feet too high) so each
/// foot rests on the floor at the rest margin.
fn rest_feet_on_floor(model: &BodyModel, p: &mut BodyParams) -> Result<()> {
    let (lf, rf) = model.template().foot_ranges();
    let legs = [
        Leg {
            hip: joint::L_HIP_FLEX,
            knee: joint::L_KNEE,
            ankle: joint::L_ANKLE,
            foot: lf,
        },
        Leg {
            hip: joint::R_HIP_FLEX,
            knee: joint::R_KNEE,
            ankle: joint::R_ANKLE,
            foot: rf,
        },
    ];
    for leg in &legs {
        let gap =
            |q: &BodyParams| min_z(&model.forward(q).vertices, leg.foot.clone()) - REST_MARGIN;
        let g0 = gap(p);
        if (0.0..CONTACT_TOLERANCE - REST_MARGIN).contains(&g0) {
            continue;
        }
        let hip = p.joint_angles[leg.hip];
        let with_knee = |k: f64| {
            let mut q = *p;
            q.joint_angles[leg.knee] = k;
            q.joint_angles[leg.ankle] = k - hip;
            q
        };
        if g0 < 0.0 {
            // straighten the knee: less drop below the seat
            let k0 = p.joint_angles[leg.knee];
            let k = bisect(-k0, -0.7, |nk| gap(&with_knee(-nk)))
                .ok_or_else(|| Error::Placement("feet cannot clear the floor".into()))?;
            *p = with_knee(-k);
        } else {
            let a0 = p.joint_angles[leg.ankle];
            let with_ankle = |a: f64| {
                let mut q = *p;
                q.joint_angles[leg.ankle] = a;
                q
            };
            let a = bisect(-0.9, a0, |a| gap(&with_ankle(a)))
                .ok_or_else(|| Error::Placement("feet cannot reach the floor".into()))?;
            *p = with_ankle(a);
        }
    }
    Ok(())
}

/// Checks the placement contract: low collision, feet near the floor.
pub fn validate_placement(model: &BodyModel, scene: &SynthScene, p: &BodyParams) -> Result<()> {
    let mesh = model.forward(p);
    let (coll, _) = collision_loss(&mesh.vertices, &scene.sdf)?;
    if coll >= MAX_PLACEMENT_COLLISION {
        return Err(Error::Placement(format!("collision loss {coll:.2e}")));
    }
    let mut feet_gap = f64::INFINITY;
    for v in mesh.feet_vertices() {
        feet_gap = feet_gap.min(scene.sdf.eval(v)?);
    }
    if !(feet_gap <= CONTACT_TOLERANCE) {
        return Err(Error::Placement(format!(
            "feet {feet_gap:.3} m from support"
        )));
    }
    let (lo, hi) = bounds(&mesh.vertices);
    let [ex, ey] = scene.params.extent;
    if lo[0] < 0.0 || lo[1] < 0.0 || hi[0] > ex || hi[1] > ey {
        return Err(Error::Placement("body leaves the room".into()));
    }
    Ok(())
}

fn place_once(
    model: &BodyModel,
    scene: &SynthScene,
    category: PoseCategory,
    rng: &mut ChaCha8Rng,
) -> Result<BodyParams> {
    let mut p = model.sample_pose(category, rng.gen());
    match category {
        PoseCategory::Standing | PoseCategory::Lying => {
            let Some(Support::Floor { min, max }) = scene
                .supports
                .iter()
                .find(|s| matches!(s, Support::Floor { .. }))
            else {
                return Err(Error::Placement("scene has no floor".into()));
            };
            let m = 0.3;
            p.yaw = rng.gen_range(0.0..TAU);
            p.translation[0] = rng.gen_range(min[0] + m..max[0] - m);
            p.translation[1] = rng.gen_range(min[1] + m..max[1] - m);
        }
        PoseCategory::Sitting => {
            let seats: Vec<_> = scene.seats().collect();
            let (_, seat) = seats[rng.gen_range(0..seats.len())];
            let b = &seat.bounds;
            let f = seat.front;
            let center = [0.5 * (b.min[0] + b.max[0]), 0.5 * (b.min[1] + b.max[1])];
            let depth = if f[0] != 0.0 {
                b.max[0] - b.min[0]
            } else {
                b.max[1] - b.min[1]
            };
            let back = -0.5 * depth + SEAT_BACK_OFFSET;
            // the body faces +y at zero yaw
            p.yaw = (-f[0]).atan2(f[1]);
            p.translation[0] = center[0] + f[0] * back;
            p.translation[1] = center[1] + f[1] * back;
            p.translation[2] = 0.0;
            p.translation[2] = seat.height() + REST_MARGIN - model.seat_contact_z(&p);
            rest_feet_on_floor(model, &mut p)?;
        }
    }
    validate_placement(model, scene, &p)?;
    Ok(p)
}

/// Places a ground-truth body of `category` in `scene`, retrying pose and
/// location draws until the contact and collision contract holds.
pub fn place_body(
    model: &BodyModel,
    scene: &SynthScene,
    category: PoseCategory,
    seed: u64,
) -> Result<BodyParams> {
    if category == PoseCategory::Sitting && scene.seats().next().is_none() {
        return Err(Error::Placement("sitting requires a seat".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last = None;
    for _ in 0..ATTEMPTS {
        match place_once(model, scene, category, &mut rng) {
            Ok(p) => return Ok(p),
            Err(e @ Error::Placement(_)) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(Error::Placement(format!(
        "no valid {} placement after {ATTEMPTS} attempts: {}",
        category.name(),
        last.map(|e| e.to_string()).unwrap_or_default()
    )))
}
