//! Physical plausibility scores and the k-means diversity measure.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::body::{BodyParams, PARAM_DIM};
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::spatial::SdfField;

/// Fraction of vertices with non-negative scene SDF.
pub fn non_collision_score(vertices: &[Vec3], sdf: &SdfField) -> Result<f64> {
    if vertices.is_empty() {
        return Err(Error::Empty("body vertices"));
    }
    let mut free = 0usize;
    for v in vertices {
        if sdf.eval(*v)? >= 0.0 {
            free += 1;
        }
    }
    Ok(free as f64 / vertices.len() as f64)
}

/// 1 when some vertex has non-positive SDF, else 0.
pub fn contact_score(vertices: &[Vec3], sdf: &SdfField) -> Result<f64> {
    if vertices.is_empty() {
        return Err(Error::Empty("body vertices"));
    }
    let mut hit = false;
    for v in vertices {
        hit |= sdf.eval(*v)? <= 0.0;
    }
    Ok(if hit { 1.0 } else { 0.0 })
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    /// Sum of squared distances to the assigned centroid.
    pub inertia: f64,
    pub iterations: usize,
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(c: &[Vec<f64>], p: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, cj) in c.iter().enumerate() {
        let d = sq(cj, p);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centers = vec![points[rng.gen_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq(p, &centers[0])).collect();
    while centers.len() < k {
        let next = match WeightedIndex::new(&d2) {
            Ok(w) => w.sample(rng),
            // every point already coincides with a center
            Err(_) => rng.gen_range(0..points.len()),
        };
        centers.push(points[next].clone());
        let c = centers.last().unwrap();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq(p, c));
        }
    }
    centers
}

fn lloyd(points: &[Vec<f64>], mut centers: Vec<Vec<f64>>, max_iter: usize) -> KMeans {
    let dim = points[0].len();
    let mut labels = vec![usize::MAX; points.len()];
    let mut iterations = 0;
    for it in 0..max_iter {
        iterations = it + 1;
        let mut changed = false;
        for (l, p) in labels.iter_mut().zip(points) {
            let j = nearest(&centers, p).0;
            changed |= *l != j;
            *l = j;
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (&l, p) in labels.iter().zip(points) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        for ((c, s), &n) in centers.iter_mut().zip(sums).zip(&counts) {
            // an emptied cluster keeps its centroid
            if n > 0 {
                *c = s.into_iter().map(|v| v / n as f64).collect();
            }
        }
    }
    let inertia = labels
        .iter()
        .zip(points)
        .map(|(&l, p)| sq(&centers[l], p))
        .sum();
    KMeans {
        centroids: centers,
        labels,
        inertia,
        iterations,
    }
}

/// k-means++ seeding and Lloyd iterations, best of `n_init` restarts.
pub fn kmeans(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
    n_init: usize,
    max_iter: usize,
) -> Result<KMeans> {
    if k == 0 || points.len() < k {
        return Err(Error::InvalidArgument(format!(
            "k-means needs at least k = {k} > 0 samples, got {}",
            points.len()
        )));
    }
    let dim = points[0].len();
    if points
        .iter()
        .any(|p| p.len() != dim || p.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::Validation(
            "k-means samples must be finite with equal dimension".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeans> = None;
    for _ in 0..n_init.max(1) {
        let run = lloyd(points, plus_plus(points, k, &mut rng), max_iter);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.unwrap())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diversity {
    /// Natural-log entropy of the cluster-ID histogram.
    pub entropy: f64,
    /// Mean distance of samples to their centroid.
    pub cluster_size: f64,
    pub k: usize,
}

pub const DIVERSITY_RESTARTS: usize = 10;
pub const DIVERSITY_MAX_ITER: usize = 300;

/// Clustering summary of arbitrary vectors.
pub fn diversity_of(points: &[Vec<f64>], k: usize, seed: u64) -> Result<Diversity> {
    let km = kmeans(points, k, seed, DIVERSITY_RESTARTS, DIVERSITY_MAX_ITER)?;
    let mut counts = vec![0usize; k];
    for &l in &km.labels {
        counts[l] += 1;
    }
    let n = points.len() as f64;
    let entropy = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum::<f64>()
        .max(0.0);
    let cluster_size = km
        .labels
        .iter()
        .zip(points)
        .map(|(&l, p)| sq(&km.centroids[l], p).sqrt())
        .sum::<f64>()
        / n;
    Ok(Diversity {
        entropy,
        cluster_size,
        k,
    })
}

/// Clustering vector of a body: yaw, joints and shape, plus the translation
/// when asked.
pub fn param_vector(p: &BodyParams, include_translation: bool) -> Vec<f64> {
    let v = p.to_vec();
    let start = if include_translation { 0 } else { 3 };
    v[start..PARAM_DIM].to_vec()
}

pub fn diversity(
    bodies: &[BodyParams],
    k: usize,
    seed: u64,
    include_translation: bool,
) -> Result<Diversity> {
    let pts: Vec<Vec<f64>> = bodies
        .iter()
        .map(|p| param_vector(p, include_translation))
        .collect();
    diversity_of(&pts, k, seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub id: String,
    pub non_collision: f64,
    pub contact: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub non_collision: f64,
    pub contact: f64,
    pub entropy: f64,
    pub cluster_size: f64,
    pub k: usize,
    /// `ln k`, the entropy ceiling.
    pub entropy_max: f64,
    pub samples: Vec<SampleScore>,
}

/// Scores every body against one SDF; diversity is skipped (NaN) when there
/// are fewer bodies than clusters or no parameters are given.
pub fn evaluate(
    bodies: &[(String, Vec<Vec3>)],
    params: Option<&[BodyParams]>,
    sdf: &SdfField,
    k: usize,
    seed: u64,
    include_translation: bool,
) -> Result<EvalReport> {
    if bodies.is_empty() {
        return Err(Error::Empty("bodies to evaluate"));
    }
    let samples = bodies
        .par_iter()
        .map(|(id, v)| {
            Ok(SampleScore {
                id: id.clone(),
                non_collision: non_collision_score(v, sdf)?,
                contact: contact_score(v, sdf)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = samples.len() as f64;
    let div = match params {
        Some(p) if p.len() >= k && k > 0 => Some(diversity(p, k, seed, include_translation)?),
        _ => None,
    };
    Ok(EvalReport {
        non_collision: samples.iter().map(|s| s.non_collision).sum::<f64>() / n,
        contact: samples.iter().map(|s| s.contact).sum::<f64>() / n,
        entropy: div.map_or(f64::NAN, |d| d.entropy),
        cluster_size: div.map_or(f64::NAN, |d| d.cluster_size),
        k,
        entropy_max: (k as f64).ln(),
        samples,
    })
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("id,non_collision,contact\n");
        for r in &self.samples {
            s.push_str(&format!("{},{},{}\n", r.id, r.non_collision, r.contact));
        }
        s
    }

    /// Summary without the per-sample rows.
    pub fn summary_json(&self) -> String {
        let v = serde_json::json!({
            "samples": self.samples.len(),
            "non_collision": self.non_collision,
            "contact": self.contact,
            "entropy": finite_or_null(self.entropy),
            "entropy_max": self.entropy_max,
            "cluster_size": finite_or_null(self.cluster_size),
            "k": self.k,
        });
        serde_json::to_string_pretty(&v).expect("plain json")
    }
}

fn finite_or_null(x: f64) -> serde_json::Value {
    if x.is_finite() {
        serde_json::json!(x)
    } else {
        serde_json::Value::Null
    }
}
