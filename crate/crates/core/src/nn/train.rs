use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::model::{loss_total, ArchConfig, Batch, LossTerms, LossWeights, Networks};
use super::tensor::{Mat, Real};
use crate::error::{Error, Result};
use crate::losses::SceneGeometry;
use crate::synth::TrainSample;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    pub d_z: usize,
    pub widths: [usize; 2],
    pub weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            seed: 1,
            d_z: 32,
            widths: [512, 256],
            weights: LossWeights::default(),
        }
    }
}

pub struct Adam<T> {
    m: Vec<Mat<T>>,
    v: Vec<Mat<T>>,
    step: i32,
    lr: f64,
    b1: f64,
    b2: f64,
}

impl<T: Real> Adam<T> {
    pub fn new(params: &[Mat<T>], lr: f64, b1: f64, b2: f64) -> Self {
        let z = || params.iter().map(|p| Mat::zeros(p.rows, p.cols)).collect();
        Adam {
            m: z(),
            v: z(),
            step: 0,
            lr,
            b1,
            b2,
        }
    }

    pub fn update(&mut self, params: &mut [Mat<T>], grads: &[Mat<T>]) {
        self.step += 1;
        let (b1, b2) = (T::lit(self.b1), T::lit(self.b2));
        let c1 = 1.0 - self.b1.powi(self.step);
        let c2 = 1.0 - self.b2.powi(self.step);
        let lr = T::lit(self.lr * c2.sqrt() / c1);
        let eps = T::lit(1e-8 * c2.sqrt());
        let one = T::one();
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = b1 * m.data[i] + (one - b1) * gi;
                v.data[i] = b2 * v.data[i] + (one - b2) * gi * gi;
                p.data[i] = p.data[i] - lr * m.data[i] / (v.data[i].sqrt() + eps);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Batch-mean loss terms over the epoch.
    pub terms: LossTerms,
    pub wall_seconds: f64,
}

pub struct TrainOutcome {
    pub nets: Networks<f32>,
    pub history: Vec<EpochMetrics>,
}

fn stack<T: Real>(rows: impl Iterator<Item = Vec<f32>>, cols: usize) -> Mat<T> {
    let data: Vec<T> = rows
        .flat_map(|r| r.into_iter().map(|v| T::lit(v as f64)))
        .collect();
    Mat::from_vec(data.len() / cols.max(1), cols, data)
}

/// Stacks samples into a batch; `scenes` may lack entries when the geometry
/// terms are inactive.
pub fn make_batch<'a, T: Real>(
    samples: &[&TrainSample],
    scenes: &'a BTreeMap<u64, SceneGeometry>,
    eps: Mat<T>,
) -> Batch<'a, T> {
    let n = samples[0].x_s.len();
    let v3 = samples[0].v_b.len();
    Batch {
        x_s: stack(samples.iter().map(|s| s.x_s.clone()), n),
        x_b: stack(samples.iter().map(|s| s.x_b.clone()), n),
        v_s: stack(samples.iter().map(|s| s.v_s.clone()), 3 * n),
        v_b: stack(samples.iter().map(|s| s.v_b.clone()), v3),
        eps,
        transforms: samples.iter().map(|s| s.transform).collect(),
        scenes: samples.iter().map(|s| scenes.get(&s.scene_seed)).collect(),
    }
}

pub fn gaussian<T: Real>(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat<T> {
    let data = (0..rows * cols)
        .map(|_| {
            let x: f64 = StandardNormal.sample(rng);
            T::lit(x)
        })
        .collect();
    Mat::from_vec(rows, cols, data)
}

/// Trains all networks jointly, single-threaded and deterministic in
/// `cfg.seed`.
pub fn train(
    samples: &[&TrainSample],
    scenes: &BTreeMap<u64, SceneGeometry>,
    feet_mask: &[bool],
    basis_seed: u64,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    if samples.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::Config(
            "epochs and batch_size must be positive".into(),
        ));
    }
    let arch = ArchConfig {
        n: samples[0].x_s.len(),
        vertices: samples[0].v_b.len() / 3,
        d_z: cfg.d_z,
        widths: cfg.widths,
    };
    if feet_mask.len() != arch.vertices {
        return Err(Error::Dimension {
            what: "feet mask",
            expected: arch.vertices,
            got: feet_mask.len(),
        });
    }
    let mut nets = Networks::<f32>::new(arch.clone(), basis_seed, cfg.seed);
    let mut adam = Adam::new(&nets.params.values, cfg.learning_rate, cfg.beta1, cfg.beta2);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let start = Instant::now();
    for epoch in 0..cfg.epochs {
        let fraction = epoch as f64 / cfg.epochs as f64;
        order.shuffle(&mut rng);
        let mut sum = LossTerms::default();
        let mut batches = 0usize;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let picked: Vec<&TrainSample> = chunk.iter().map(|&i| samples[i]).collect();
            let eps = gaussian(&mut rng, picked.len(), arch.d_z);
            let batch = make_batch(&picked, scenes, eps);
            let (terms, grads) = loss_total(&nets, &batch, &cfg.weights, fraction, feet_mask)
                .map_err(|e| match e {
                    Error::NonFinite(m) => {
                        Error::NonFinite(format!("epoch {epoch} batch {bi}: {m}"))
                    }
                    other => other,
                })?;
            adam.update(&mut nets.params.values, &grads);
            for (acc, v) in [
                (&mut sum.total, terms.total),
                (&mut sum.rec_scene, terms.rec_scene),
                (&mut sum.rec_body_feature, terms.rec_body_feature),
                (&mut sum.rec_vertices, terms.rec_vertices),
                (&mut sum.kl, terms.kl),
                (&mut sum.kl_charbonnier, terms.kl_charbonnier),
                (&mut sum.collision, terms.collision),
                (&mut sum.contact, terms.contact),
            ] {
                *acc += v;
            }
            batches += 1;
        }
        let k = 1.0 / batches as f64;
        let t = &mut sum;
        for v in [
            &mut t.total,
            &mut t.rec_scene,
            &mut t.rec_body_feature,
            &mut t.rec_vertices,
            &mut t.kl,
            &mut t.kl_charbonnier,
            &mut t.collision,
            &mut t.contact,
        ] {
            *v *= k;
        }
        if nets.params.values.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite(format!(
                "non-finite weights after epoch {epoch}; last terms {sum:?}"
            )));
        }
        let m = EpochMetrics {
            epoch: epoch + 1,
            terms: sum,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {:>3}: total {:.5} xs {:.5} xb {:.5} vb {:.5} kl {:.4} coll {:.2e} contact {:.3}",
            m.epoch,
            sum.total,
            sum.rec_scene,
            sum.rec_body_feature,
            sum.rec_vertices,
            sum.kl,
            sum.collision,
            sum.contact
        );
        on_epoch(&m);
        history.push(m);
    }
    Ok(TrainOutcome { nets, history })
}

pub fn write_metrics_csv(history: &[EpochMetrics], path: &Path) -> Result<()> {
    let mut out = String::from("epoch,total,rec_scene,rec_body_feature,rec_vertices,kl,kl_charbonnier,collision,contact,wall_seconds\n");
    for m in history {
        let t = &m.terms;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{:.3}\n",
            m.epoch,
            t.total,
            t.rec_scene,
            t.rec_body_feature,
            t.rec_vertices,
            t.kl,
            t.kl_charbonnier,
            t.collision,
            t.contact,
            m.wall_seconds
        ));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Body-feature reconstruction through the full cVAE with `z = mu`.
pub fn reconstruct_body_features(
    nets: &Networks<f32>,
    samples: &[&TrainSample],
) -> Result<Vec<Vec<f32>>> {
    let n = nets.arch.n;
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(64) {
        let xs: Mat<f32> = stack(chunk.iter().map(|s| s.x_s.clone()), n);
        let xb: Mat<f32> = stack(chunk.iter().map(|s| s.x_b.clone()), n);
        let (rec, _) = nets.cvae_forward(&xb, &xs, &Mat::zeros(chunk.len(), nets.arch.d_z))?;
        out.extend((0..rec.rows).map(|r| rec.row(r).to_vec()));
    }
    Ok(out)
}

/// Mean absolute error between predictions and the samples' body features.
pub fn body_feature_l1(pred: &[Vec<f32>], samples: &[&TrainSample]) -> f64 {
    let mut s = 0.0;
    let mut n = 0usize;
    for (p, t) in pred.iter().zip(samples) {
        for (a, b) in p.iter().zip(&t.x_b) {
            s += (*a as f64 - *b as f64).abs();
            n += 1;
        }
    }
    s / n.max(1) as f64
}

/// L1 of predicting the training-set mean body feature everywhere.
pub fn mean_predictor_l1(train: &[&TrainSample], test: &[&TrainSample]) -> f64 {
    let n = train[0].x_b.len();
    let mut mean = vec![0.0f64; n];
    for s in train {
        for (m, v) in mean.iter_mut().zip(&s.x_b) {
            *m += *v as f64;
        }
    }
    let inv = 1.0 / train.len() as f64;
    let mean: Vec<f32> = mean.iter().map(|m| (m * inv) as f32).collect();
    body_feature_l1(&vec![mean; test.len()], test)
}
