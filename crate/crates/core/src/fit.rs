//! Interaction-based fitting: turns regressed vertices into body parameters.
//!
//! The objective is
//! `|π(V*) − V(θ)| + |x_b* − f(π⁻¹(V(θ)))| + λ1·collision + λ2·contact + prior`
//! minimized with Adam over the raw parameter vector. Vertex gradients are
//! pulled back through the forward-mode Jacobian of the body model.

use serde::{Deserialize, Serialize};

use crate::body::{
    param_prior, BodyModel, BodyParams, PoseCategory, PriorWeights, JOINT_COUNT, PARAM_DIM,
    SHAPE_COUNT, SHAPE_LIMITS,
};
use crate::bps::{feature_from_body, SceneEncoding};
use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::losses::{collision_loss, contact_loss, SceneGeometry, CONTACT_SIGMA};
use crate::nn::{Adam, Mat};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Data terms and priors only.
    SimOptim,
    /// Adds collision and contact.
    AdvOptim,
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "simoptim" => Ok(Variant::SimOptim),
            "advoptim" => Ok(Variant::AdvOptim),
            _ => Err(Error::InvalidArgument(format!(
                "unknown optimization variant `{s}`"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    /// Collision.
    pub lambda1: f64,
    /// Contact.
    pub lambda2: f64,
    /// Trunk, hip, knee and shoulder angles.
    pub lambda3: f64,
    /// Shape scales.
    pub lambda4: f64,
    /// Ankles and elbows.
    pub lambda5: f64,
    pub steps: usize,
    pub step_size: f64,
    pub contact_sigma: f64,
    pub variant: Variant,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lambda1: 8.0,
            lambda2: 0.5,
            lambda3: 0.02,
            lambda4: 0.01,
            lambda5: 0.01,
            steps: 300,
            step_size: 0.01,
            contact_sigma: CONTACT_SIGMA,
            variant: Variant::AdvOptim,
        }
    }
}

impl OptimConfig {
    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let w = [
            self.lambda1,
            self.lambda2,
            self.lambda3,
            self.lambda4,
            self.lambda5,
        ];
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config(format!(
                "loss weights must be non-negative, got {w:?}"
            )));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) || !(self.contact_sigma > 0.0) {
            return Err(Error::Config(
                "step_size and contact_sigma must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Collision and contact weights actually applied.
    pub fn geometry_weights(&self) -> (f64, f64) {
        match self.variant {
            Variant::SimOptim => (0.0, 0.0),
            Variant::AdvOptim => (self.lambda1, self.lambda2),
        }
    }

    /// Per-term weights: each group is averaged over its entries, matching
    /// the mean-reduced data terms.
    fn prior_weights(&self) -> PriorWeights {
        PriorWeights {
            pose: self.lambda3 / JOINT_COUNT as f64,
            distal: self.lambda5 / JOINT_COUNT as f64,
            shape: self.lambda4 / SHAPE_COUNT as f64,
        }
    }
}

/// Unweighted terms; `total` is the weighted objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitTerms {
    pub vertices: f64,
    pub feature: f64,
    pub collision: f64,
    pub contact: f64,
    /// Already weighted by λ3..λ5.
    pub prior: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimResult {
    pub params: BodyParams,
    pub final_losses: FitTerms,
    /// Total objective at every evaluated iterate, starting with the init.
    pub trajectory: Vec<f64>,
    pub best_step: usize,
}

/// What the fit needs from the scene: the encoding whose scene BPS and
/// transform define the feature term, and optionally the geometry for the
/// collision and contact terms.
#[derive(Clone, Copy, Debug)]
pub struct FitScene<'a> {
    pub encoding: &'a SceneEncoding,
    pub geometry: Option<&'a SceneGeometry>,
}

fn sign(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum()
    }
}

/// Objective and its parameter gradient at `params`.
pub fn objective(
    model: &BodyModel,
    target_world: &[Vec3],
    target_feature: &[f64],
    scene: &FitScene,
    cfg: &OptimConfig,
    params: &BodyParams,
) -> Result<(FitTerms, [f64; PARAM_DIM])> {
    let (mesh, jac) = model.forward_with_jacobian(params);
    let v = &mesh.vertices;
    let n = v.len();
    let mut dv = vec![[0.0; 3]; n];
    let mut t = FitTerms::default();

    let k = 1.0 / (3 * n) as f64;
    for ((p, q), g) in v.iter().zip(target_world).zip(dv.iter_mut()) {
        for c in 0..3 {
            let d = p[c] - q[c];
            t.vertices += d.abs() * k;
            g[c] += sign(d) * k;
        }
    }

    let fj = feature_from_body(v, scene.encoding)?;
    let kf = 1.0 / target_feature.len() as f64;
    for i in 0..target_feature.len() {
        let d = fj.feature.values[i] - target_feature[i];
        t.feature += d.abs() * kf;
        let g = &mut dv[fj.argmin[i]];
        for c in 0..3 {
            g[c] += sign(d) * kf * fj.grad[i][c];
        }
    }

    let (l1, l2) = cfg.geometry_weights();
    if let Some(geo) = scene.geometry {
        let (coll, gc) = collision_loss(v, &geo.sdf)?;
        let (cont, gn) = contact_loss(v, &mesh.feet_mask, &geo.vertices, cfg.contact_sigma)?;
        t.collision = coll;
        t.contact = cont;
        if l1 > 0.0 || l2 > 0.0 {
            for ((g, a), b) in dv.iter_mut().zip(&gc).zip(&gn) {
                for c in 0..3 {
                    g[c] += l1 * a[c] + l2 * b[c];
                }
            }
        }
    } else if l1 > 0.0 || l2 > 0.0 {
        return Err(Error::InvalidArgument(
            "collision/contact weights need scene geometry".into(),
        ));
    }

    let (prior, mut grad) = param_prior(params, &cfg.prior_weights());
    t.prior = prior;
    for (g, jv) in dv.iter().zip(&jac) {
        for c in 0..3 {
            if g[c] != 0.0 {
                for (out, j) in grad.iter_mut().zip(jv[c].iter()) {
                    *out += g[c] * j;
                }
            }
        }
    }
    t.total = t.vertices + t.feature + l1 * t.collision + l2 * t.contact + t.prior;
    Ok((t, grad))
}

/// Fits body parameters to cage-frame target vertices and a target body
/// feature. Returns the lowest-objective iterate.
pub fn fit_body(
    model: &BodyModel,
    target_vertices: &[Vec3],
    target_feature: &[f64],
    scene: &FitScene,
    cfg: &OptimConfig,
    init: &BodyParams,
) -> Result<OptimResult> {
    cfg.validate()?;
    if target_vertices.len() != model.vertex_count() {
        return Err(Error::Dimension {
            what: "target vertices",
            expected: model.vertex_count(),
            got: target_vertices.len(),
        });
    }
    if target_feature.len() != scene.encoding.len() {
        return Err(Error::Dimension {
            what: "target body feature",
            expected: scene.encoding.len(),
            got: target_feature.len(),
        });
    }
    if !init.is_finite() {
        return Err(Error::NonFinite("fit initialization".into()));
    }
    let tf = scene.encoding.transform;
    let target_world: Vec<Vec3> = target_vertices
        .iter()
        .map(|&q| tf.cage_to_world(q))
        .collect();

    let (start, _) = init.clamped();
    let mut x = vec![Mat::from_vec(1, PARAM_DIM, start.to_vec().to_vec())];
    let mut adam = Adam::new(&x, cfg.step_size, 0.9, 0.999);
    let mut trajectory = Vec::with_capacity(cfg.steps + 1);
    let mut best: Option<(BodyParams, FitTerms, usize)> = None;
    for step in 0..=cfg.steps {
        let p = BodyParams::from_slice(&x[0].data)?;
        let (terms, grad) = objective(model, &target_world, target_feature, scene, cfg, &p)?;
        trajectory.push(terms.total);
        if !terms.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "fit objective at step {step}; trajectory {trajectory:?}"
            )));
        }
        if best.as_ref().is_none_or(|b| terms.total < b.1.total) {
            best = Some((p, terms, step));
        }
        if step == cfg.steps {
            break;
        }
        adam.update(&mut x, &[Mat::from_vec(1, PARAM_DIM, grad.to_vec())]);
        let mut q = BodyParams::from_slice(&x[0].data)?;
        q.clamp();
        x[0].data.copy_from_slice(&q.to_vec());
    }
    let (params, final_losses, best_step) = best.expect("at least one iterate");
    Ok(OptimResult {
        params,
        final_losses,
        trajectory,
        best_step,
    })
}

/// Rough parameters for a world-frame target: rest pose, yaw from the
/// shoulder landmarks, one shape scale from the longest box extent, and the
/// translation that matches centroids.
pub fn init_from_vertices(model: &BodyModel, target: &[Vec3]) -> Result<BodyParams> {
    init_with_posture(model, target, &[0.0; JOINT_COUNT])
}

/// As [`init_from_vertices`] but starting from the given joint angles.
pub fn init_with_posture(
    model: &BodyModel,
    target: &[Vec3],
    joints: &[f64; JOINT_COUNT],
) -> Result<BodyParams> {
    if target.len() != model.vertex_count() {
        return Err(Error::Dimension {
            what: "target vertices",
            expected: model.vertex_count(),
            got: target.len(),
        });
    }
    if target.iter().any(|p| !geom::is_finite(*p)) {
        return Err(Error::NonFinite("init target".into()));
    }
    let (lo, hi) = geom::bounds(target);
    let extent = geom::sub(hi, lo);
    if extent.iter().any(|&e| !(e > 1e-9)) {
        return Err(Error::InvalidArgument(format!(
            "degenerate target extent {extent:?}"
        )));
    }
    let mut p = BodyParams {
        joint_angles: *joints,
        ..BodyParams::default()
    };
    p.clamp();
    let posed = model.forward(&p).vertices;
    let (rlo, rhi) = geom::bounds(&posed);
    let rest_len = geom::sub(rhi, rlo).iter().cloned().fold(0.0, f64::max);
    let len = extent.iter().cloned().fold(0.0, f64::max);
    // the box is a poor shape cue; stay close to the mean body
    let s = (len / rest_len).clamp(0.9_f64.max(SHAPE_LIMITS.0), 1.1_f64.min(SHAPE_LIMITS.1));
    p.shape_scale = [s; 3];
    let shoulder_angle = |v: &[Vec3]| {
        let (l, r) = model.shoulder_landmarks(v);
        let d = geom::sub(l, r);
        d[1].atan2(d[0])
    };
    let scaled = model.forward(&p).vertices;
    let yaw = shoulder_angle(target) - shoulder_angle(&scaled);
    p.yaw = yaw.sin().atan2(yaw.cos());
    let c0 = geom::rot_z(geom::centroid(&scaled), p.yaw);
    p.translation = geom::sub(geom::centroid(target), c0);
    Ok(p)
}

/// Tries the rest pose and one typical posture per pose category and keeps
/// the start closest to the target in mean vertex L1.
pub fn best_init(model: &BodyModel, target: &[Vec3]) -> Result<BodyParams> {
    let mut best = init_from_vertices(model, target)?;
    let mut best_err = vertex_l1(&model.forward(&best).vertices, target);
    for cat in PoseCategory::ALL {
        let joints = model.sample_pose(cat, 0).joint_angles;
        let p = init_with_posture(model, target, &joints)?;
        let err = vertex_l1(&model.forward(&p).vertices, target);
        if err < best_err {
            best = p;
            best_err = err;
        }
    }
    Ok(best)
}

/// Mean over vertices of the per-vertex L1 distance.
pub fn vertex_l1(a: &[Vec3], b: &[Vec3]) -> f64 {
    let s: f64 = a
        .iter()
        .zip(b)
        .map(|(p, q)| (p[0] - q[0]).abs() + (p[1] - q[1]).abs() + (p[2] - q[2]).abs())
        .sum();
    s / a.len().max(1) as f64
}

/// One row per iteration: `id,step,total`.
pub fn trajectories_csv<'a>(runs: impl IntoIterator<Item = (String, &'a OptimResult)>) -> String {
    let mut s = String::from("id,step,total\n");
    for (id, r) in runs {
        for (i, v) in r.trajectory.iter().enumerate() {
            s.push_str(&format!("{id},{i},{v}\n"));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::body::{PoseCategory, JOINT_LIMITS};
    use crate::bps::{encode_scene_points, make_basis};
    use crate::mesh::CageTransform;
    use crate::spatial::{PointIndex, SdfField};

    fn floor_scene(center: Vec3) -> (SceneEncoding, SceneGeometry) {
        let t = CageTransform::new(center, 2.0)
            .unwrap()
            .with_world_yaw(0.3)
            .with_augmentation(0.7, [0.01, -0.02, 0.0])
            .unwrap();
        let mut floor = Vec::new();
        for i in -40..=40 {
            for j in -40..=40 {
                floor.push([0.05 * i as f64, 0.05 * j as f64, 0.0]);
            }
        }
        let cage: Vec<Vec3> = floor.iter().map(|&p| t.world_to_cage(p)).collect();
        let flags = vec![false; cage.len()];
        let basis = make_basis(256, 3).unwrap();
        let enc = encode_scene_points(&basis, &cage, &flags, &t).unwrap();
        let geo = SceneGeometry {
            sdf: SdfField::floor_only(0.0),
            vertices: PointIndex::build(floor).unwrap(),
        };
        (enc, geo)
    }

    fn standing(model: &BodyModel, seed: u64) -> BodyParams {
        let mut p = model.sample_pose(PoseCategory::Standing, seed);
        p.yaw = 0.4;
        p.translation[0] += 0.1;
        p
    }

    fn cage_targets(
        model: &BodyModel,
        enc: &SceneEncoding,
        p: &BodyParams,
    ) -> (Vec<Vec3>, Vec<f64>) {
        let v = model.forward(p).vertices;
        let f = feature_from_body(&v, enc).unwrap().feature.values;
        (
            v.iter().map(|&w| enc.transform.world_to_cage(w)).collect(),
            f,
        )
    }

    #[test]
    fn init_recovers_rigid_placements() {
        let model = BodyModel::new();
        let rest = model.forward(&BodyParams::default()).vertices;
        let p = init_from_vertices(&model, &rest).unwrap();
        assert!(
            geom::norm(p.translation) < 1e-6 && p.yaw.abs() < 1e-6,
            "{p:?}"
        );
        assert_eq!(p.shape_scale, [1.0; 3]);
        let moved: Vec<Vec3> = rest
            .iter()
            .map(|&v| geom::add(v, [1.5, -2.0, 0.25]))
            .collect();
        let p = init_from_vertices(&model, &moved).unwrap();
        assert!(geom::dist(p.translation, [1.5, -2.0, 0.25]) < 1e-12);
        let turned = model
            .forward(&BodyParams {
                yaw: 2.5,
                ..BodyParams::default()
            })
            .vertices;
        let p = init_from_vertices(&model, &turned).unwrap();
        assert!((p.yaw - 2.5).abs() < 1e-9 && geom::norm(p.translation) < 1e-9);
    }

    #[test]
    fn init_stays_within_limits() {
        let model = BodyModel::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let mut p = BodyParams::default();
            for (a, &(lo, hi)) in p.joint_angles.iter_mut().zip(JOINT_LIMITS.iter()) {
                *a = rng.gen_range(lo..hi);
            }
            p.yaw = rng.gen_range(-3.0..3.0);
            p.shape_scale = [
                rng.gen_range(0.8..1.2),
                rng.gen_range(0.8..1.2),
                rng.gen_range(0.8..1.2),
            ];
            let init = init_from_vertices(&model, &model.forward(&p).vertices).unwrap();
            assert_eq!(init.clamped().0, init);
        }
        let flat = vec![[0.0, 0.0, 1.0]; model.vertex_count()];
        assert!(init_from_vertices(&model, &flat).is_err());
    }

    #[test]
    fn objective_gradient_matches_differences() {
        let model = BodyModel::new();
        let (enc, geo) = floor_scene([0.1, 0.0, 1.0]);
        let truth = standing(&model, 2);
        let (tc, tf) = cage_targets(&model, &enc, &truth);
        let tw: Vec<Vec3> = tc.iter().map(|&q| enc.transform.cage_to_world(q)).collect();
        // move every parameter so no coordinate ties with the target
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut x = truth.to_vec();
        for v in x.iter_mut() {
            *v += rng.gen_range(0.02..0.06) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
        }
        x[2] = truth.translation[2] - 0.03;
        let p = BodyParams::from_slice(&x).unwrap();
        let scene = FitScene {
            encoding: &enc,
            geometry: Some(&geo),
        };
        let cfg = OptimConfig::default();
        let (_, grad) = objective(&model, &tw, &tf, &scene, &cfg, &p).unwrap();
        let x0 = p.to_vec();
        let f = |x: &[f64]| {
            objective(
                &model,
                &tw,
                &tf,
                &scene,
                &cfg,
                &BodyParams::from_slice(x).unwrap(),
            )
            .unwrap()
            .0
            .total
        };
        let h = 1e-7;
        let mut checked = 0;
        for k in 0..PARAM_DIM {
            let (mut a, mut b) = (x0, x0);
            a[k] += h;
            b[k] -= h;
            let (fp, f0, fm) = (f(&a), f(&x0), f(&b));
            let (r, l) = ((fp - f0) / h, (f0 - fm) / h);
            if (r - l).abs() > 1e-4 * r.abs().max(l.abs()).max(1e-3) {
                continue;
            }
            let num = (fp - fm) / (2.0 * h);
            let rel = (grad[k] - num).abs() / grad[k].abs().max(num.abs()).max(1e-6);
            assert!(rel < 1e-3, "param {k}: {} vs {num}", grad[k]);
            checked += 1;
        }
        assert!(checked >= PARAM_DIM - 3, "only {checked} smooth parameters");
    }

    #[test]
    fn sim_optim_recovers_a_model_body() {
        let model = BodyModel::new();
        let (enc, geo) = floor_scene([0.1, 0.0, 1.0]);
        let truth = standing(&model, 9);
        let (tc, tf) = cage_targets(&model, &enc, &truth);
        let mut init = truth;
        init.translation[1] += 0.05;
        init.yaw += 0.1;
        for a in init.joint_angles.iter_mut() {
            *a += 0.1;
        }
        let scene = FitScene {
            encoding: &enc,
            geometry: Some(&geo),
        };
        let cfg = OptimConfig::default().with_variant(Variant::SimOptim);
        let r = fit_body(&model, &tc, &tf, &scene, &cfg, &init).unwrap();
        assert!(r.final_losses.total <= r.trajectory[0]);
        assert_eq!(r.trajectory.len(), cfg.steps + 1);
        assert!(r.trajectory.iter().all(|v| v.is_finite()));
        let got = model.forward(&r.params).vertices;
        let want: Vec<Vec3> = tc.iter().map(|&q| enc.transform.cage_to_world(q)).collect();
        assert!(vertex_l1(&got, &want) < 0.01, "{:?}", r.final_losses);
    }

    #[test]
    fn posture_candidates_start_sitting_targets_closer() {
        let model = BodyModel::new();
        let mut truth = model.sample_pose(PoseCategory::Sitting, 31);
        truth.yaw = -1.2;
        let v = model.forward(&truth).vertices;
        let rest = init_from_vertices(&model, &v).unwrap();
        let best = best_init(&model, &v).unwrap();
        let err = |p: &BodyParams| vertex_l1(&model.forward(p).vertices, &v);
        assert!(
            err(&best) < 0.5 * err(&rest),
            "{} vs {}",
            err(&best),
            err(&rest)
        );
    }

    #[test]
    fn adv_optim_resolves_floor_penetration() {
        let model = BodyModel::new();
        let (enc, geo) = floor_scene([0.1, 0.0, 1.0]);
        let mut sunk = standing(&model, 5);
        sunk.translation[2] -= 0.05;
        let (tc, tf) = cage_targets(&model, &enc, &sunk);
        let scene = FitScene {
            encoding: &enc,
            geometry: Some(&geo),
        };
        let before = collision_loss(&model.forward(&sunk).vertices, &geo.sdf)
            .unwrap()
            .0;
        let r = fit_body(&model, &tc, &tf, &scene, &OptimConfig::default(), &sunk).unwrap();
        assert!(
            r.final_losses.collision < before && r.final_losses.collision < 1e-4,
            "{before} -> {:?}",
            r.final_losses
        );
        let sim = fit_body(
            &model,
            &tc,
            &tf,
            &scene,
            &OptimConfig::default().with_variant(Variant::SimOptim),
            &sunk,
        )
        .unwrap();
        assert!(r.final_losses.collision <= sim.final_losses.collision);
    }

    #[test]
    fn rejects_bad_inputs() {
        let model = BodyModel::new();
        let (enc, _) = floor_scene([0.0, 0.0, 1.0]);
        let scene = FitScene {
            encoding: &enc,
            geometry: None,
        };
        let (tc, tf) = cage_targets(&model, &enc, &BodyParams::default());
        let cfg = OptimConfig::default();
        // geometry terms without geometry
        assert!(fit_body(&model, &tc, &tf, &scene, &cfg, &BodyParams::default()).is_err());
        let sim = cfg.with_variant(Variant::SimOptim);
        assert!(fit_body(&model, &tc[1..], &tf, &scene, &sim, &BodyParams::default()).is_err());
        let mut nan = BodyParams::default();
        nan.yaw = f64::NAN;
        assert!(fit_body(&model, &tc, &tf, &scene, &sim, &nan).is_err());
        let neg = OptimConfig {
            lambda3: -1.0,
            ..sim
        };
        assert!(fit_body(&model, &tc, &tf, &scene, &neg, &BodyParams::default()).is_err());
    }
}
