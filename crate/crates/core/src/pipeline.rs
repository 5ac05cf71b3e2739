//! The batch commands behind the CLI. Each writes its outputs plus the
//! resolved config (`run.conf`) into one directory.

use std::f64::consts::TAU;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::body::{BodyModel, BodyParams};
use crate::bps::{encode_scene, make_basis, BasisPointSet, SceneEncoding};
use crate::config::{OutputVariant, RunConfig};
use crate::error::{Error, Result};
use crate::eval::{contact_score, evaluate, non_collision_score, EvalReport};
use crate::fit::{
    best_init, fit_body, trajectories_csv, FitScene, FitTerms, OptimConfig, OptimResult, Variant,
};
use crate::geom::{bounds, rot_z, Vec3};
use crate::losses::SceneGeometry;
use crate::mesh::{crop_local_scene, load_mesh, save_mesh, CageTransform, MeshFormat, TriMesh};
use crate::nn::{
    gaussian, load_checkpoint, save_checkpoint, train, write_metrics_csv, Mat, Networks,
    TrainOutcome,
};
use crate::spatial::{read_grid, PointIndex, SdfField};
use crate::synth::{
    build_dataset, generate_scene, load_dataset, save_dataset, Dataset, SceneParams, Split,
};

pub const RESOLVED_CONFIG: &str = "run.conf";
pub const DATASET_FILE: &str = "dataset.bin";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SAMPLES_FILE: &str = "samples.json";
pub const MANIFEST_FILE: &str = "manifest.csv";
pub const TRAJECTORIES_FILE: &str = "trajectories.csv";

/// Where a scene comes from: a procedural room or a mesh on disk with a
/// grid SDF next to it (`<mesh path>.sdf`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SceneSource {
    Synth(u64),
    Mesh(PathBuf),
}

impl FromStr for SceneSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if let Some(seed) = s.strip_prefix("synth:") {
            let seed = seed.parse().map_err(|_| {
                Error::InvalidArgument(format!("bad synthetic scene seed in `{s}`"))
            })?;
            return Ok(SceneSource::Synth(seed));
        }
        if s.is_empty() {
            return Err(Error::InvalidArgument("empty scene source".into()));
        }
        Ok(SceneSource::Mesh(PathBuf::from(s)))
    }
}

impl fmt::Display for SceneSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SceneSource::Synth(s) => write!(f, "synth:{s}"),
            SceneSource::Mesh(p) => write!(f, "{}", p.display()),
        }
    }
}

pub struct LoadedScene {
    pub mesh: TriMesh,
    pub geometry: SceneGeometry,
}

pub fn sdf_sidecar(mesh_path: &Path) -> PathBuf {
    let mut s = mesh_path.as_os_str().to_owned();
    s.push(".sdf");
    PathBuf::from(s)
}

pub fn load_scene(source: &SceneSource, params: &SceneParams) -> Result<LoadedScene> {
    match source {
        SceneSource::Synth(seed) => {
            let s = generate_scene(*seed, params)?;
            let geometry = s.geometry()?;
            Ok(LoadedScene {
                mesh: s.mesh,
                geometry,
            })
        }
        SceneSource::Mesh(path) => {
            let format = MeshFormat::from_path(path).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "{}: expected an .obj or .ply scene",
                    path.display()
                ))
            })?;
            let mesh = load_mesh(path, format)?;
            let sdf_path = sdf_sidecar(path);
            let file = fs::File::open(&sdf_path).map_err(|e| Error::io(&sdf_path, e))?;
            let grid = read_grid(std::io::BufReader::new(file))?;
            let vertices = PointIndex::build(mesh.vertices.clone())?;
            Ok(LoadedScene {
                mesh,
                geometry: SceneGeometry {
                    sdf: SdfField::Grid(grid),
                    vertices,
                },
            })
        }
    }
}

/// The configured scene, or the first test scene of the dataset section.
pub fn scene_source(cfg: &RunConfig) -> Result<SceneSource> {
    if cfg.generate.scene.is_empty() {
        let seed = cfg.dataset.test_scene_seeds()[0];
        Ok(SceneSource::Synth(seed))
    } else {
        cfg.generate.scene.parse()
    }
}

fn create_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn gen_data(cfg: &RunConfig, out: &Path) -> Result<Dataset> {
    cfg.validate()?;
    create_out(out)?;
    let ds = build_dataset(&cfg.dataset)?;
    save_dataset(&ds, &out.join(DATASET_FILE))?;
    cfg.save(&out.join(RESOLVED_CONFIG))?;
    log::info!("{} samples written to {}", ds.samples.len(), out.display());
    Ok(ds)
}

/// Trains on the training split of a saved dataset. The resolved config
/// records the dataset's own settings.
pub fn train_model(cfg: &RunConfig, dataset: &Path, out: &Path) -> Result<TrainOutcome> {
    cfg.validate()?;
    let ds = load_dataset(dataset)?;
    create_out(out)?;
    let resolved = RunConfig {
        dataset: ds.config.clone(),
        ..cfg.clone()
    };
    resolved.save(&out.join(RESOLVED_CONFIG))?;
    let samples = ds.split(Split::Train);
    let scenes = ds.scene_geometry()?;
    let model = BodyModel::new();
    let outcome = train(
        &samples,
        &scenes,
        model.feet_mask(),
        ds.config.basis_seed,
        &cfg.train,
        |_| {},
    )?;
    save_checkpoint(&outcome.nets, &out.join(CHECKPOINT_FILE))?;
    write_metrics_csv(&outcome.history, &out.join(METRICS_FILE))?;
    Ok(outcome)
}

/// One generated body with everything needed to refit, score or visualize
/// it again.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSample {
    pub id: String,
    pub seed: u64,
    /// World frame.
    pub cage_center: Vec3,
    pub world_yaw: f64,
    pub transform: CageTransform,
    /// Cage frame.
    pub scene_bps: Vec<Vec3>,
    pub scene_feature: Vec<f64>,
    pub body_feature: Vec<f64>,
    /// Regressor output, cage frame.
    pub raw_vertices: Vec<Vec3>,
    pub variant: OutputVariant,
    /// Fitted parameters; for raw output the fit initialization.
    pub params: BodyParams,
    pub terms: Option<FitTerms>,
    pub trajectory: Vec<f64>,
    pub non_collision: f64,
    pub contact: f64,
}

impl GeneratedSample {
    pub fn scene_encoding(&self) -> SceneEncoding {
        SceneEncoding {
            scene_bps: self.scene_bps.clone(),
            scene_feature: self.scene_feature.clone(),
            source_flags: vec![false; self.scene_bps.len()],
            transform: self.transform,
        }
    }

    pub fn raw_world(&self) -> Vec<Vec3> {
        self.raw_vertices
            .iter()
            .map(|&q| self.transform.cage_to_world(q))
            .collect()
    }

    /// World-frame vertices of the kept output.
    pub fn output_vertices(&self, model: &BodyModel) -> Vec<Vec3> {
        match self.variant {
            OutputVariant::Raw => self.raw_world(),
            _ => model.forward(&self.params).vertices,
        }
    }

    pub fn output_mesh(&self, model: &BodyModel) -> TriMesh {
        TriMesh {
            vertices: self.output_vertices(model),
            faces: model.faces().as_ref().clone(),
            quality: None,
        }
    }

    fn as_optim_result(&self) -> Option<OptimResult> {
        Some(OptimResult {
            params: self.params,
            final_losses: self.terms?,
            trajectory: self.trajectory.clone(),
            best_step: 0,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRun {
    pub scene: String,
    pub variant: OutputVariant,
    pub samples: Vec<GeneratedSample>,
    /// Seeds that produced no body, with the reason.
    pub failures: Vec<(u64, String)>,
}

impl GenerationRun {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(SAMPLES_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.display().to_string(),
            line: e.line(),
            msg: e.to_string(),
        })
    }

    pub fn manifest_csv(&self) -> String {
        let mut s = String::from(
            "id,seed,variant,center_x,center_y,center_z,world_yaw,loss_vertices,loss_feature,loss_collision,loss_contact,loss_prior,loss_total,non_collision,contact\n",
        );
        for r in &self.samples {
            let terms = match r.terms {
                Some(t) => format!(
                    "{},{},{},{},{},{}",
                    t.vertices, t.feature, t.collision, t.contact, t.prior, t.total
                ),
                None => ",,,,,".into(),
            };
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.id,
                r.seed,
                r.variant.name(),
                r.cage_center[0],
                r.cage_center[1],
                r.cage_center[2],
                r.world_yaw,
                terms,
                r.non_collision,
                r.contact
            ));
        }
        s
    }

    /// Writes meshes, the manifest, trajectories and the sample records.
    pub fn write(&self, model: &BodyModel, out: &Path) -> Result<()> {
        create_out(out)?;
        for r in &self.samples {
            save_mesh(
                &r.output_mesh(model),
                out.join(format!("{}.obj", r.id)),
                MeshFormat::Obj,
            )?;
        }
        write_text(&out.join(MANIFEST_FILE), &self.manifest_csv())?;
        let fits: Vec<(String, OptimResult)> = self
            .samples
            .iter()
            .filter_map(|r| Some((r.id.clone(), r.as_optim_result()?)))
            .collect();
        if !fits.is_empty() {
            write_text(
                &out.join(TRAJECTORIES_FILE),
                &trajectories_csv(fits.iter().map(|(id, r)| (id.clone(), r))),
            )?;
        }
        let json = serde_json::to_string(self).map_err(|e| Error::Validation(e.to_string()))?;
        write_text(&out.join(SAMPLES_FILE), &json)
    }
}

/// What every sample of a run shares.
pub struct Generator<'a> {
    pub model: &'a BodyModel,
    pub nets: &'a Networks<f32>,
    pub basis: BasisPointSet,
    pub scene: &'a LoadedScene,
    pub cfg: &'a RunConfig,
}

fn round_points(points: &[Vec3]) -> Vec<Vec3> {
    points
        .iter()
        .map(|p| [p[0] as f32 as f64, p[1] as f32 as f64, p[2] as f32 as f64])
        .collect()
}

impl<'a> Generator<'a> {
    pub fn new(
        model: &'a BodyModel,
        nets: &'a Networks<f32>,
        scene: &'a LoadedScene,
        cfg: &'a RunConfig,
    ) -> Result<Self> {
        if nets.arch.vertices != model.vertex_count() {
            return Err(Error::Dimension {
                what: "checkpoint body vertices",
                expected: model.vertex_count(),
                got: nets.arch.vertices,
            });
        }
        Ok(Generator {
            model,
            nets,
            basis: make_basis(nets.arch.n, nets.basis_seed)?,
            scene,
            cfg,
        })
    }

    /// Random cage, scene encoding, decoded body feature and regressed
    /// vertices for one seed.
    pub fn sample_raw(&self, index: usize, seed: u64) -> Result<GeneratedSample> {
        let cage = &self.cfg.dataset.cage;
        let h = 0.5 * cage.edge;
        let (lo, hi) = bounds(&self.scene.mesh.vertices);
        if hi[0] - lo[0] < cage.edge || hi[1] - lo[1] < cage.edge {
            return Err(Error::Placement(format!(
                "scene extent {:.2}×{:.2} m is smaller than the {} m cage",
                hi[0] - lo[0],
                hi[1] - lo[1],
                cage.edge
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let center = [
            rng.gen_range(lo[0] + h..=hi[0] - h),
            rng.gen_range(lo[1] + h..=hi[1] - h),
            lo[2] + cage.center_z,
        ];
        let yaw = rng.gen_range(0.0..TAU);
        let aligned_mesh = self.scene.mesh.rotated_z(yaw);
        let local = crop_local_scene(
            &aligned_mesh,
            rot_z(center, yaw),
            cage.edge,
            cage.wall_spacing,
        )?;
        let transform = local.transform.with_world_yaw(yaw);
        let mut enc = encode_scene(&self.basis, &local, &transform)?;
        enc.scene_bps = round_points(&enc.scene_bps);

        let n = self.basis.len();
        let x_s = Mat::from_vec(1, n, enc.scene_feature.iter().map(|&v| v as f32).collect());
        let v_s = Mat::from_vec(
            1,
            3 * n,
            enc.scene_bps
                .iter()
                .flat_map(|p| p.map(|c| c as f32))
                .collect(),
        );
        let z = gaussian::<f32>(&mut rng, 1, self.nets.arch.d_z);
        let x_b = self.nets.cvae_sample(&x_s, &z)?;
        let (v, _) = self.nets.regress_body(&v_s, &x_b)?;
        let raw_vertices: Vec<Vec3> = v
            .data
            .chunks(3)
            .map(|c| [c[0] as f64, c[1] as f64, c[2] as f64])
            .collect();
        if raw_vertices.iter().any(|p| !crate::geom::is_finite(*p)) {
            return Err(Error::NonFinite(format!(
                "regressed vertices for seed {seed}"
            )));
        }

        let s = GeneratedSample {
            id: format!("sample_{index:04}"),
            seed,
            cage_center: center,
            world_yaw: yaw,
            transform,
            scene_bps: enc.scene_bps,
            scene_feature: x_s.data.iter().map(|&v| v as f64).collect(),
            body_feature: x_b.data.iter().map(|&v| v as f64).collect(),
            raw_vertices,
            variant: OutputVariant::Raw,
            params: BodyParams::default(),
            terms: None,
            trajectory: Vec::new(),
            non_collision: 0.0,
            contact: 0.0,
        };
        refine_sample(
            self.model,
            &self.scene.geometry,
            &self.cfg.optim,
            &s,
            OutputVariant::Raw,
        )
    }

    pub fn refine(&self, raw: &GeneratedSample, variant: OutputVariant) -> Result<GeneratedSample> {
        refine_sample(
            self.model,
            &self.scene.geometry,
            &self.cfg.optim,
            raw,
            variant,
        )
    }

    /// Samples `count` bodies with seeds `base_seed + i`, in parallel and in
    /// index order. Per-sample failures are logged and skipped.
    pub fn run(
        &self,
        count: usize,
        base_seed: u64,
        variant: OutputVariant,
        scene_name: &str,
    ) -> Result<GenerationRun> {
        let results: Vec<(u64, Result<GeneratedSample>)> = (0..count)
            .into_par_iter()
            .map(|i| {
                let seed = base_seed.wrapping_add(i as u64);
                let s = self.sample_raw(i, seed);
                (
                    seed,
                    if variant == OutputVariant::Raw {
                        s
                    } else {
                        s.and_then(|raw| self.refine(&raw, variant))
                    },
                )
            })
            .collect();
        collect_run(results, variant, scene_name)
    }
}

fn collect_run(
    results: Vec<(u64, Result<GeneratedSample>)>,
    variant: OutputVariant,
    scene_name: &str,
) -> Result<GenerationRun> {
    let mut run = GenerationRun {
        scene: scene_name.to_string(),
        variant,
        samples: Vec::new(),
        failures: Vec::new(),
    };
    for (seed, r) in results {
        match r {
            Ok(s) => run.samples.push(s),
            Err(e @ (Error::Placement(_) | Error::EmptyRegion(_) | Error::NonFinite(_))) => {
                log::warn!("seed {seed}: skipped: {e}");
                run.failures.push((seed, e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    if run.samples.is_empty() && !run.failures.is_empty() {
        return Err(Error::Placement(format!(
            "every sample failed; first: {}",
            run.failures[0].1
        )));
    }
    Ok(run)
}

/// Loads a checkpoint, samples bodies in the configured scene and writes
/// them to `out`.
pub fn generate(cfg: &RunConfig, checkpoint: &Path, out: &Path) -> Result<GenerationRun> {
    cfg.validate()?;
    let nets = load_checkpoint(checkpoint)?;
    let source = scene_source(cfg)?;
    let scene = load_scene(&source, &cfg.dataset.scene)?;
    let model = BodyModel::new();
    let g = Generator::new(&model, &nets, &scene, cfg)?;
    let run = g.run(
        cfg.generate.count,
        cfg.generate.seed,
        cfg.generate.variant,
        &source.to_string(),
    )?;
    run.write(&model, out)?;
    cfg.save(&out.join(RESOLVED_CONFIG))?;
    log::info!(
        "{} of {} samples written to {}",
        run.samples.len(),
        cfg.generate.count,
        out.display()
    );
    Ok(run)
}

/// Re-runs the fit on a previous generate run's samples. The scene comes
/// from that run.
pub fn optimize(cfg: &RunConfig, run_dir: &Path, out: &Path) -> Result<GenerationRun> {
    cfg.validate()?;
    let prev = GenerationRun::load(run_dir)?;
    let source: SceneSource = prev.scene.parse()?;
    let scene = load_scene(&source, &cfg.dataset.scene)?;
    let model = BodyModel::new();
    let first = prev
        .samples
        .first()
        .ok_or(Error::Empty("samples in the generate run"))?;
    if first.raw_vertices.len() != model.vertex_count() {
        return Err(Error::Dimension {
            what: "raw vertices",
            expected: model.vertex_count(),
            got: first.raw_vertices.len(),
        });
    }
    let variant = cfg.generate.variant;
    let results: Vec<(u64, Result<GeneratedSample>)> = prev
        .samples
        .par_iter()
        .map(|r| {
            (
                r.seed,
                refine_sample(&model, &scene.geometry, &cfg.optim, r, variant),
            )
        })
        .collect();
    let mut run = collect_run(results, variant, &prev.scene)?;
    run.failures.splice(0..0, prev.failures.iter().cloned());
    run.write(&model, out)?;
    cfg.save(&out.join(RESOLVED_CONFIG))?;
    Ok(run)
}

/// Fits and rescores one sample. Raw output only gets rescored.
pub fn refine_sample(
    model: &BodyModel,
    geometry: &SceneGeometry,
    optim: &OptimConfig,
    raw: &GeneratedSample,
    variant: OutputVariant,
) -> Result<GeneratedSample> {
    let mut s = raw.clone();
    s.variant = variant;
    let fit_variant = match variant {
        OutputVariant::Raw => None,
        OutputVariant::SimOptim => Some(Variant::SimOptim),
        OutputVariant::AdvOptim => Some(Variant::AdvOptim),
    };
    let raw_world = raw.raw_world();
    if let Some(v) = fit_variant {
        let ocfg = (*optim).with_variant(v);
        let enc = raw.scene_encoding();
        let scene = FitScene {
            encoding: &enc,
            geometry: Some(geometry),
        };
        let init = best_init(model, &raw_world)?;
        let r = fit_body(
            model,
            &raw.raw_vertices,
            &raw.body_feature,
            &scene,
            &ocfg,
            &init,
        )?;
        s.params = r.params;
        s.terms = Some(r.final_losses);
        s.trajectory = r.trajectory;
    } else {
        s.params = best_init(model, &raw_world)?;
        s.terms = None;
        s.trajectory.clear();
    }
    let v = s.output_vertices(model);
    s.non_collision = non_collision_score(&v, &geometry.sdf)?;
    s.contact = contact_score(&v, &geometry.sdf)?;
    Ok(s)
}

/// Scores a generate or optimize run.
pub fn eval_run(cfg: &RunConfig, run_dir: &Path, out: &Path) -> Result<EvalReport> {
    cfg.validate()?;
    let run = GenerationRun::load(run_dir)?;
    let source: SceneSource = run.scene.parse()?;
    let scene = load_scene(&source, &cfg.dataset.scene)?;
    let model = BodyModel::new();
    let bodies: Vec<(String, Vec<Vec3>)> = run
        .samples
        .iter()
        .map(|s| (s.id.clone(), s.output_vertices(&model)))
        .collect();
    let params: Vec<BodyParams> = run.samples.iter().map(|s| s.params).collect();
    let report = evaluate(
        &bodies,
        Some(&params),
        &scene.geometry.sdf,
        cfg.eval.clusters,
        cfg.eval.seed,
        cfg.eval.include_translation,
    )?;
    create_out(out)?;
    write_text(&out.join("eval.csv"), &report.to_csv())?;
    write_text(&out.join("eval.json"), &report.summary_json())?;
    cfg.save(&out.join(RESOLVED_CONFIG))?;
    Ok(report)
}

/// Min-max normalization to `[0, 1]`; a constant or non-finite range maps
/// to zeros.
pub fn normalize_quality(values: &[f64]) -> Vec<f32> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if !(range > 0.0) || !range.is_finite() {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| ((v - lo) / range) as f32).collect()
}

/// Scene BPS colored by the generated body feature, and the body mesh, both
/// as PLY in the world frame. Returns the two paths.
pub fn export_viz(
    sample: &GeneratedSample,
    model: &BodyModel,
    out: &Path,
) -> Result<(PathBuf, PathBuf)> {
    if sample.scene_bps.is_empty() || sample.body_feature.len() != sample.scene_bps.len() {
        return Err(Error::Dimension {
            what: "body feature vs scene BPS",
            expected: sample.scene_bps.len(),
            got: sample.body_feature.len(),
        });
    }
    create_out(out)?;
    let points: Vec<Vec3> = sample
        .scene_bps
        .iter()
        .map(|&q| sample.transform.cage_to_world(q))
        .collect();
    let cloud =
        TriMesh::point_cloud(points)?.with_quality(normalize_quality(&sample.body_feature))?;
    let bps_path = out.join(format!("{}_bps.ply", sample.id));
    let body_path = out.join(format!("{}_body.ply", sample.id));
    save_mesh(&cloud, &bps_path, MeshFormat::Ply)?;
    save_mesh(&sample.output_mesh(model), &body_path, MeshFormat::Ply)?;
    Ok((bps_path, body_path))
}

pub fn find_sample<'a>(run: &'a GenerationRun, id: &str) -> Result<&'a GeneratedSample> {
    run.samples
        .iter()
        .find(|s| s.id == id)
        .ok_or_else(|| Error::InvalidArgument(format!("no sample `{id}` in the run")))
}
