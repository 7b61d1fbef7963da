//! Penultimate-layer embeddings, t-SNE projection and cosine neighbors.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::VisualizationKind;
use crate::dataset::CropSample;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::raster::ImageF32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMeta {
    pub id: String,
    pub class: String,
    pub provenience: String,
    pub visualization: VisualizationKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub rows: Vec<Vec<f32>>,
    pub meta: Vec<EmbeddingMeta>,
    /// Which data the rows came from, e.g. `"test"` or `"all"`.
    pub source: String,
}

impl EmbeddingSet {
    pub fn new(rows: Vec<Vec<f32>>, meta: Vec<EmbeddingMeta>, source: impl Into<String>) -> Result<Self> {
        if rows.len() != meta.len() {
            return Err(Error::Shape {
                expected: format!("{} metadata rows", rows.len()),
                actual: meta.len().to_string(),
            });
        }
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Invalid("embedding rows differ in length".into()));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite embedding value".into()));
        }
        Ok(Self {
            rows,
            meta,
            source: source.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.meta.iter().position(|m| m.id == id)
    }

    /// CSV with columns `id,class,provenience,viz,f0..f{dim-1}`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["id".to_string(), "class".into(), "provenience".into(), "viz".into()];
        header.extend((0..self.dim()).map(|i| format!("f{i}")));
        w.write_record(&header)?;
        for (row, m) in self.rows.iter().zip(&self.meta) {
            let mut rec = vec![
                m.id.clone(),
                m.class.clone(),
                m.provenience.clone(),
                m.visualization.to_string(),
            ];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One feature row per sample, eval-mode preparation.
pub fn embed_dataset(model: &Model, samples: &[CropSample], source: &str) -> Result<EmbeddingSet> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset("embedding view".into()));
    }
    let crops: Vec<&ImageF32> = samples.iter().map(|s| &s.pixels).collect();
    let rows = model.features_of(&crops)?;
    let meta = samples
        .iter()
        .map(|s| EmbeddingMeta {
            id: s.meta.id.clone(),
            class: s.meta.class.clone(),
            provenience: s.meta.provenience.clone(),
            visualization: s.meta.visualization,
        })
        .collect();
    EmbeddingSet::new(rows, meta, source)
}

pub fn cosine_similarity(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        dot += x as f64 * y as f64;
        na += x as f64 * x as f64;
        nb += y as f64 * y as f64;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: String,
    pub similarity: f64,
}

/// The `k` rows most cosine-similar to `query_id`, excluding the query row.
/// Equal similarities are ordered by ascending id.
pub fn nearest_neighbors(set: &EmbeddingSet, query_id: &str, k: usize) -> Result<Vec<Neighbor>> {
    let q = set
        .index_of(query_id)
        .ok_or_else(|| Error::Invalid(format!("unknown embedding id {query_id}")))?;
    if k >= set.len() {
        return Err(Error::Invalid(format!(
            "k = {k} must be smaller than the {} embedded rows",
            set.len()
        )));
    }
    let mut scored: Vec<Neighbor> = set
        .rows
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != q)
        .map(|(i, r)| Neighbor {
            id: set.meta[i].id.clone(),
            similarity: cosine_similarity(&set.rows[q], r),
        })
        .collect();
    scored.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then_with(|| a.id.cmp(&b.id))
    });
    scored.truncate(k);
    Ok(scored)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iterations: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iterations: 250,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection2D {
    pub coords: Vec<[f64; 2]>,
    pub ids: Vec<String>,
    pub method: String,
    pub config: TsneConfig,
    pub source: String,
}

impl Projection2D {
    /// CSV with columns `id,class,provenience,x,y`.
    pub fn write_csv(&self, set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["id", "class", "provenience", "x", "y"])?;
        for (c, m) in self.coords.iter().zip(&set.meta) {
            w.write_record([
                m.id.clone(),
                m.class.clone(),
                m.provenience.clone(),
                c[0].to_string(),
                c[1].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn squared_distances(rows: &[Vec<f32>]) -> Vec<f64> {
    let n = rows.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let s: f64 = rows[i]
                .iter()
                .zip(&rows[j])
                .map(|(&a, &b)| {
                    let t = a as f64 - b as f64;
                    t * t
                })
                .sum();
            d[i * n + j] = s;
            d[j * n + i] = s;
        }
    }
    d
}

/// Row-conditional affinities with per-row bandwidth found by bisection so
/// that each row's entropy matches `log(perplexity)`.
fn conditional_affinities(dist: &[f64], n: usize, perplexity: f64) -> Vec<f64> {
    let target = perplexity.ln();
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        let row = &dist[i * n..(i + 1) * n];
        let (mut beta, mut lo, mut hi) = (1.0f64, 0.0f64, f64::INFINITY);
        let min_d = row
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &d)| d)
            .fold(f64::INFINITY, f64::min);
        for _ in 0..100 {
            let mut sum = 0.0;
            let mut weighted = 0.0;
            for (j, &d) in row.iter().enumerate() {
                if j == i {
                    continue;
                }
                let w = (-(d - min_d) * beta).exp();
                sum += w;
                weighted += w * (d - min_d);
            }
            let entropy = sum.ln() + beta * weighted / sum;
            if (entropy - target).abs() < 1e-6 {
                break;
            }
            if entropy > target {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
        let mut sum = 0.0;
        for (j, &d) in row.iter().enumerate() {
            if j != i {
                let w = (-(d - min_d) * beta).exp();
                p[i * n + j] = w;
                sum += w;
            }
        }
        for j in 0..n {
            p[i * n + j] /= sum;
        }
    }
    p
}

/// Exact t-SNE to two dimensions. Requires more than `3 * perplexity` rows.
pub fn project_2d(set: &EmbeddingSet, config: &TsneConfig) -> Result<Projection2D> {
    let n = set.len();
    if (n as f64) <= 3.0 * config.perplexity {
        return Err(Error::Invalid(format!(
            "t-SNE with perplexity {} needs more than {} points, got {n}",
            config.perplexity,
            3.0 * config.perplexity
        )));
    }
    let dist = squared_distances(&set.rows);
    let cond = conditional_affinities(&dist, n, config.perplexity);
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = ((cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64)).max(1e-12);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, 1e-4).expect("valid std");
    let mut y: Vec<[f64; 2]> = (0..n)
        .map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)])
        .collect();
    let mut update = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut num = vec![0.0; n * n];
    let mut grad = vec![[0.0f64; 2]; n];
    for it in 0..config.iterations {
        let exaggeration = if it < config.exaggeration_iterations {
            config.early_exaggeration
        } else {
            1.0
        };
        let momentum = if it < config.exaggeration_iterations { 0.5 } else { 0.8 };
        let mut sum_q = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                let q = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i * n + j] = q;
                num[j * n + i] = q;
                sum_q += 2.0 * q;
            }
        }
        for i in 0..n {
            let mut g = [0.0; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let q = num[i * n + j];
                let mult = (exaggeration * p[i * n + j] - (q / sum_q).max(1e-12)) * q;
                g[0] += 4.0 * mult * (y[i][0] - y[j][0]);
                g[1] += 4.0 * mult * (y[i][1] - y[j][1]);
            }
            grad[i] = g;
        }
        for i in 0..n {
            for d in 0..2 {
                let same_sign = (grad[i][d] > 0.0) == (update[i][d] > 0.0);
                gains[i][d] = if same_sign {
                    (gains[i][d] * 0.8).max(0.01)
                } else {
                    gains[i][d] + 0.2
                };
                update[i][d] = momentum * update[i][d] - config.learning_rate * gains[i][d] * grad[i][d];
                y[i][d] += update[i][d];
            }
        }
        let mean = [
            y.iter().map(|p| p[0]).sum::<f64>() / n as f64,
            y.iter().map(|p| p[1]).sum::<f64>() / n as f64,
        ];
        for p in &mut y {
            p[0] -= mean[0];
            p[1] -= mean[1];
        }
    }
    Ok(Projection2D {
        coords: y,
        ids: set.meta.iter().map(|m| m.id.clone()).collect(),
        method: "tsne-exact".into(),
        config: *config,
        source: set.source.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(rows: Vec<Vec<f32>>) -> EmbeddingSet {
        let meta = (0..rows.len())
            .map(|i| EmbeddingMeta {
                id: format!("r{i:03}"),
                class: "A".into(),
                provenience: "P".into(),
                visualization: VisualizationKind::SketchB,
            })
            .collect();
        EmbeddingSet::new(rows, meta, "test").unwrap()
    }

    #[test]
    fn duplicate_row_ranks_first() {
        let s = set(vec![
            vec![1.0, 2.0, 3.0],
            vec![-1.0, 0.5, 0.0],
            vec![1.0, 2.0, 3.0],
            vec![0.0, 0.0, 1.0],
        ]);
        let nn = nearest_neighbors(&s, "r000", 2).unwrap();
        assert_eq!(nn[0].id, "r002");
        assert!((nn[0].similarity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_rows_order_by_id() {
        let rows = (0..5)
            .map(|i| {
                let mut r = vec![0.0; 5];
                r[i] = 1.0;
                r
            })
            .collect();
        let s = set(rows);
        let nn = nearest_neighbors(&s, "r002", 4).unwrap();
        let ids: Vec<&str> = nn.iter().map(|n| n.id.as_str()).collect();
        assert_eq!(ids, ["r000", "r001", "r003", "r004"]);
        assert!(nn.iter().all(|n| n.similarity == 0.0));
        assert!(nearest_neighbors(&s, "r002", 5).is_err());
        assert!(nearest_neighbors(&s, "zzz", 1).is_err());
    }

    #[test]
    fn too_few_points_for_perplexity() {
        let s = set(vec![vec![0.0; 4]; 10]);
        assert!(project_2d(&s, &TsneConfig::default()).is_err());
    }

    #[test]
    fn mismatched_metadata_is_rejected() {
        assert!(EmbeddingSet::new(vec![vec![0.0]], vec![], "x").is_err());
        let meta = vec![EmbeddingMeta {
            id: "a".into(),
            class: "A".into(),
            provenience: "P".into(),
            visualization: VisualizationKind::Color00,
        }];
        assert!(EmbeddingSet::new(vec![vec![f32::NAN]], meta, "x").is_err());
    }
}
