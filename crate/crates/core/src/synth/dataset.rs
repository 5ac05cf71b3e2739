use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::place::place_body;
use super::sample::{extract_sample, CageConfig, Split, TrainSample};
use super::scene::{generate_scene, SceneParams, SynthScene};
use crate::body::{BodyModel, BodyParams, PoseCategory, PARAM_DIM};
use crate::bps::{make_basis, BasisPointSet};
use crate::error::{Error, Result};
use crate::losses::SceneGeometry;
use crate::mesh::CageTransform;

const MAGIC: &[u8; 4] = b"PXDS";
const VERSION: u32 = 1;
/// Offset separating test scene seeds from training scene seeds.
pub const TEST_SCENE_OFFSET: u64 = 1 << 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub seed: u64,
    pub placements: usize,
    pub augmentations: usize,
    /// Every `test_every`-th placement goes to the test split.
    pub test_every: usize,
    pub train_scenes: usize,
    pub test_scenes: usize,
    pub basis_size: usize,
    pub basis_seed: u64,
    /// Relative frequency of standing, sitting and lying placements.
    pub category_weights: [f64; 3],
    pub scene: SceneParams,
    pub cage: CageConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            seed: 7,
            placements: 500,
            augmentations: 4,
            test_every: 5,
            train_scenes: 8,
            test_scenes: 2,
            basis_size: 1024,
            basis_seed: 2020,
            category_weights: [0.4, 0.4, 0.2],
            scene: SceneParams::default(),
            cage: CageConfig::default(),
        }
    }
}

impl DatasetConfig {
    pub fn train_scene_seeds(&self) -> Vec<u64> {
        (0..self.train_scenes as u64)
            .map(|i| self.seed.wrapping_mul(1000).wrapping_add(i))
            .collect()
    }

    pub fn test_scene_seeds(&self) -> Vec<u64> {
        (0..self.test_scenes as u64)
            .map(|i| {
                self.seed
                    .wrapping_mul(1000)
                    .wrapping_add(TEST_SCENE_OFFSET + i)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.placements == 0 || self.augmentations == 0 || self.basis_size == 0 {
            return Err(Error::Config(
                "placements, augmentations and basis_size must be positive".into(),
            ));
        }
        if self.train_scenes == 0 || self.test_scenes == 0 || self.test_every < 2 {
            return Err(Error::Config(
                "need at least one train and one test scene and test_every ≥ 2".into(),
            ));
        }
        if self.category_weights.iter().any(|w| !(*w >= 0.0))
            || self.category_weights.iter().sum::<f64>() <= 0.0
        {
            return Err(Error::Config(
                "category weights must be non-negative with a positive sum".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub config: DatasetConfig,
    pub vertex_count: usize,
    pub samples: Vec<TrainSample>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> Vec<&TrainSample> {
        self.samples.iter().filter(|s| s.split == split).collect()
    }

    pub fn basis(&self) -> Result<BasisPointSet> {
        make_basis(self.config.basis_size, self.config.basis_seed)
    }

    /// Regenerates every referenced scene.
    pub fn scenes(&self) -> Result<BTreeMap<u64, SynthScene>> {
        let mut seeds: Vec<u64> = self.samples.iter().map(|s| s.scene_seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        seeds
            .into_par_iter()
            .map(|s| Ok((s, generate_scene(s, &self.config.scene)?)))
            .collect()
    }

    pub fn scene_geometry(&self) -> Result<BTreeMap<u64, SceneGeometry>> {
        self.scenes()?
            .into_iter()
            .map(|(k, s)| Ok((k, s.geometry()?)))
            .collect()
    }
}

fn pick_category(rng: &mut ChaCha8Rng, w: &[f64; 3]) -> PoseCategory {
    let total: f64 = w.iter().sum();
    let mut u = rng.gen_range(0.0..total);
    for (c, &wi) in PoseCategory::ALL.iter().zip(w) {
        if u < wi {
            return *c;
        }
        u -= wi;
    }
    PoseCategory::Standing
}

/// Deterministic dataset: placements in parallel, assembled in placement
/// order.
pub fn build_dataset(cfg: &DatasetConfig) -> Result<Dataset> {
    cfg.validate()?;
    let model = BodyModel::new();
    let basis = make_basis(cfg.basis_size, cfg.basis_seed)?;
    let train_seeds = cfg.train_scene_seeds();
    let test_seeds = cfg.test_scene_seeds();
    let scenes: BTreeMap<u64, SynthScene> = train_seeds
        .iter()
        .chain(&test_seeds)
        .copied()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|s| Ok((s, generate_scene(s, &cfg.scene)?)))
        .collect::<Result<_>>()?;
    let per_placement: Vec<Vec<TrainSample>> = (0..cfg.placements)
        .into_par_iter()
        .map(|p| -> Result<Vec<TrainSample>> {
            let mut rng = ChaCha8Rng::seed_from_u64(
                cfg.seed ^ (p as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
            );
            let split = if p % cfg.test_every == cfg.test_every - 1 {
                Split::Test
            } else {
                Split::Train
            };
            let pool = if split == Split::Test {
                &test_seeds
            } else {
                &train_seeds
            };
            let scene = &scenes[&pool[p % pool.len()]];
            let mut category = pick_category(&mut rng, &cfg.category_weights);
            if category == PoseCategory::Sitting && scene.seats().next().is_none() {
                category = PoseCategory::Standing;
            }
            let params = place_body(&model, scene, category, rng.gen())?;
            (0..cfg.augmentations)
                .map(|_| {
                    extract_sample(
                        &model,
                        scene,
                        &params,
                        category,
                        rng.gen(),
                        &basis,
                        &cfg.cage,
                        split,
                    )
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(Dataset {
        config: cfg.clone(),
        vertex_count: model.vertex_count(),
        samples: per_placement.into_iter().flatten().collect(),
    })
}

fn put_u32(w: &mut impl Write, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}
fn put_u64(w: &mut impl Write, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}
fn put_f64s(w: &mut impl Write, v: &[f64]) -> std::io::Result<()> {
    v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))
}
fn put_f32s(w: &mut impl Write, v: &[f32]) -> std::io::Result<()> {
    v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.at + n > self.buf.len() {
            return Err(Error::Validation(format!(
                "dataset truncated at byte {}",
                self.at
            )));
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(8 * n)?
            .chunks(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        Ok(self
            .take(4 * n)?
            .chunks(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn category_code(c: PoseCategory) -> u8 {
    c as u8
}

/// Header (magic, version, N, V, sample count, config JSON) then one record
/// per sample.
pub fn write_dataset(ds: &Dataset, mut w: impl Write) -> Result<()> {
    let io = |e| Error::io("dataset stream", e);
    let n = ds.config.basis_size;
    w.write_all(MAGIC).map_err(io)?;
    put_u32(&mut w, VERSION).map_err(io)?;
    put_u32(&mut w, n as u32).map_err(io)?;
    put_u32(&mut w, ds.vertex_count as u32).map_err(io)?;
    put_u64(&mut w, ds.samples.len() as u64).map_err(io)?;
    let cfg = serde_json::to_vec(&ds.config).map_err(|e| Error::Config(e.to_string()))?;
    put_u32(&mut w, cfg.len() as u32).map_err(io)?;
    w.write_all(&cfg).map_err(io)?;
    for s in &ds.samples {
        w.write_all(&[(s.split == Split::Test) as u8, category_code(s.category)])
            .map_err(io)?;
        put_u64(&mut w, s.scene_seed).map_err(io)?;
        let t = &s.transform;
        put_f64s(
            &mut w,
            &[
                t.cage_center[0],
                t.cage_center[1],
                t.cage_center[2],
                t.cage_edge,
                t.scale,
                t.rotation,
                t.shift[0],
                t.shift[1],
                t.shift[2],
                t.world_yaw,
            ],
        )
        .map_err(io)?;
        put_f64s(&mut w, &s.params.to_vec()).map_err(io)?;
        put_f32s(&mut w, &s.v_s).map_err(io)?;
        put_f32s(&mut w, &s.x_s).map_err(io)?;
        put_f32s(&mut w, &s.v_b).map_err(io)?;
        put_f32s(&mut w, &s.x_b).map_err(io)?;
    }
    Ok(())
}

pub fn read_dataset(mut r: impl Read) -> Result<Dataset> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)
        .map_err(|e| Error::io("dataset stream", e))?;
    let mut rd = Reader { buf: &buf, at: 0 };
    if rd.take(4)? != MAGIC {
        return Err(Error::Validation("not a dataset file (bad magic)".into()));
    }
    let version = rd.u32()?;
    if version != VERSION {
        return Err(Error::Validation(format!(
            "unsupported dataset version {version}"
        )));
    }
    let n = rd.u32()? as usize;
    let v = rd.u32()? as usize;
    let count = rd.u64()? as usize;
    let cfg_len = rd.u32()? as usize;
    let config: DatasetConfig = serde_json::from_slice(rd.take(cfg_len)?)
        .map_err(|e| Error::Validation(format!("dataset config: {e}")))?;
    if config.basis_size != n {
        return Err(Error::Validation(format!(
            "header N {n} disagrees with config basis size {}",
            config.basis_size
        )));
    }
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let split = if rd.u8()? == 1 {
            Split::Test
        } else {
            Split::Train
        };
        let category = *PoseCategory::ALL
            .get(rd.u8()? as usize)
            .ok_or_else(|| Error::Validation("bad pose category code".into()))?;
        let scene_seed = rd.u64()?;
        let t = rd.f64s(10)?;
        let transform = CageTransform {
            cage_center: [t[0], t[1], t[2]],
            cage_edge: t[3],
            scale: t[4],
            rotation: t[5],
            shift: [t[6], t[7], t[8]],
            world_yaw: t[9],
        };
        let params = BodyParams::from_slice(&rd.f64s(PARAM_DIM)?)?;
        samples.push(TrainSample {
            split,
            scene_seed,
            category,
            params,
            transform,
            v_s: rd.f32s(3 * n)?,
            x_s: rd.f32s(n)?,
            v_b: rd.f32s(3 * v)?,
            x_b: rd.f32s(n)?,
        });
    }
    if rd.at != buf.len() {
        return Err(Error::Validation(format!(
            "{} trailing bytes after dataset records",
            buf.len() - rd.at
        )));
    }
    Ok(Dataset {
        config,
        vertex_count: v,
        samples,
    })
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    write_dataset(ds, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(std::io::BufReader::new(f))
}
