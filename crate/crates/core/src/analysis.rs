//! Pairwise distances between persistence images and 2D embeddings of the
//! resulting metric space: classical MDS, Isomap and exact t-SNE.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vectorize::PersistenceImage;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("resolution mismatch: {0} vs {1}")]
    ResolutionMismatch(usize, usize),
    #[error("eigendecomposition did not converge (n = {n}, frobenius norm = {norm:e})")]
    EigenFailure { n: usize, norm: f64 },
    #[error("perplexity {perplexity} too large for {n} items (need n > 3 * perplexity)")]
    PerplexityTooLarge { perplexity: f64, n: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown embedding method {0:?}")]
    UnknownMethod(String),
}

/// Symmetric `n x n` matrix of distances, row-major, aligned with `item_ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
    item_ids: Vec<String>,
}

impl DistanceMatrix {
    /// Wraps a row-major matrix; checks shape, symmetry, zero diagonal and
    /// nonnegativity.
    pub fn from_row_major(item_ids: Vec<String>, d: Vec<f64>) -> Result<Self, AnalysisError> {
        let n = item_ids.len();
        if d.len() != n * n {
            return Err(AnalysisError::InvalidParameter(format!(
                "{} entries for {n} items",
                d.len()
            )));
        }
        for i in 0..n {
            if d[i * n + i] != 0.0 {
                return Err(AnalysisError::InvalidParameter(format!(
                    "nonzero diagonal at {i}"
                )));
            }
            for j in 0..i {
                let v = d[i * n + j];
                if v != d[j * n + i] || v < 0.0 || !v.is_finite() {
                    return Err(AnalysisError::InvalidParameter(format!(
                        "entry ({i}, {j}) is not a symmetric finite distance"
                    )));
                }
            }
        }
        Ok(Self { n, d, item_ids })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.d[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.d
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }
}

/// Euclidean distances between persistence images, one evaluation per
/// unordered pair.
pub fn distance_matrix(images: &[PersistenceImage]) -> Result<DistanceMatrix, AnalysisError> {
    if let Some(first) = images.first() {
        if let Some(bad) = images
            .iter()
            .find(|im| im.resolution != first.resolution || im.pixels.len() != first.pixels.len())
        {
            return Err(AnalysisError::ResolutionMismatch(
                first.resolution,
                bad.resolution,
            ));
        }
    }
    let n = images.len();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| {
                    images[i]
                        .pixels
                        .iter()
                        .zip(&images[j].pixels)
                        .map(|(p, q)| (p - q) * (p - q))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect()
        })
        .collect();
    let mut d = vec![0.0; n * n];
    for (i, row) in upper.iter().enumerate() {
        for (offset, &v) in row.iter().enumerate() {
            let j = i + 1 + offset;
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    Ok(DistanceMatrix {
        n,
        d,
        item_ids: images.iter().map(|im| im.item_id.clone()).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingMethod {
    Mds,
    Isomap,
    Tsne,
}

impl EmbeddingMethod {
    pub const ALL: [EmbeddingMethod; 3] = [Self::Mds, Self::Isomap, Self::Tsne];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Mds => "mds",
            Self::Isomap => "isomap",
            Self::Tsne => "tsne",
        }
    }
}

impl fmt::Display for EmbeddingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EmbeddingMethod {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mds" => Ok(Self::Mds),
            "isomap" => Ok(Self::Isomap),
            "tsne" => Ok(Self::Tsne),
            other => Err(AnalysisError::UnknownMethod(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum EmbeddingParams {
    Mds,
    Isomap { k: usize },
    Tsne(TsneParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub method: EmbeddingMethod,
    pub item_ids: Vec<String>,
    pub coords: Vec<[f64; 2]>,
    pub params: EmbeddingParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

const EMBED_DIM: usize = 2;
const EIGEN_TOL: f64 = 1e-10;

/// Classical (Torgerson) MDS of a distance matrix into the plane.
pub fn classical_mds(dist: &DistanceMatrix) -> Result<Embedding, AnalysisError> {
    let coords = mds_coords(dist.as_slice(), dist.len())?;
    Ok(Embedding {
        method: EmbeddingMethod::Mds,
        item_ids: dist.item_ids.clone(),
        coords,
        params: EmbeddingParams::Mds,
        seed: None,
    })
}

fn mds_coords(d: &[f64], n: usize) -> Result<Vec<[f64; 2]>, AnalysisError> {
    if n == 0 {
        return Ok(Vec::new());
    }
    // B = -1/2 J D^2 J, computed by double-centering the squared distances
    let sq: Vec<f64> = d.iter().map(|v| v * v).collect();
    let row_mean: Vec<f64> = (0..n)
        .map(|i| sq[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64)
        .collect();
    let grand_mean = row_mean.iter().sum::<f64>() / n as f64;
    let b = DMatrix::from_fn(n, n, |i, j| {
        -0.5 * (sq[i * n + j] - row_mean[i] - row_mean[j] + grand_mean)
    });
    let norm = b.norm();
    let eig = b
        .try_symmetric_eigen(f64::EPSILON, 100 * n.max(10))
        .ok_or(AnalysisError::EigenFailure { n, norm })?;

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &c| {
        eig.eigenvalues[c]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&c))
    });

    // eigenvalues within the solver tolerance of zero carry no geometry
    let cutoff = EIGEN_TOL * eig.eigenvalues[idx[0]].abs();
    let mut coords = vec![[0.0; 2]; n];
    for (axis, &k) in idx.iter().take(EMBED_DIM).enumerate() {
        let lambda = eig.eigenvalues[k];
        if lambda <= cutoff {
            continue;
        }
        let scale = lambda.sqrt();
        let mut column: Vec<f64> = eig
            .eigenvectors
            .column(k)
            .iter()
            .map(|v| v * scale)
            .collect();
        let mean = column.iter().sum::<f64>() / n as f64;
        column.iter_mut().for_each(|v| *v -= mean);
        let anchor = column.iter().enumerate().fold((0, 0.0f64), |best, (i, v)| {
            if v.abs() > best.1 {
                (i, v.abs())
            } else {
                best
            }
        });
        let sign = if column[anchor.0] < 0.0 { -1.0 } else { 1.0 };
        for (c, v) in coords.iter_mut().zip(column) {
            c[axis] = sign * v;
        }
    }
    Ok(coords)
}

/// Geodesic distances over the symmetric k-nearest-neighbour graph, plus the
/// edges added to join disconnected components.
#[derive(Debug, Clone, PartialEq)]
pub struct Geodesics {
    pub distances: Vec<f64>,
    pub repairs: Vec<(usize, usize)>,
}

struct DisjointSets(Vec<usize>);

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.0[hi] = lo;
        true
    }
}

pub fn geodesic_distances(dist: &DistanceMatrix, k: usize) -> Result<Geodesics, AnalysisError> {
    let n = dist.len();
    if k == 0 || n <= k {
        return Err(AnalysisError::InvalidParameter(format!(
            "isomap needs n > k >= 1 (n = {n}, k = {k})"
        )));
    }

    let mut adjacent = vec![false; n * n];
    for i in 0..n {
        let row = dist.row(i);
        let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
        for &j in others.iter().take(k) {
            adjacent[i * n + j] = true;
            adjacent[j * n + i] = true;
        }
    }

    let mut sets = DisjointSets::new(n);
    let mut components = n;
    for i in 0..n {
        for j in i + 1..n {
            if adjacent[i * n + j] && sets.union(i, j) {
                components -= 1;
            }
        }
    }
    let mut repairs = Vec::new();
    while components > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            for j in i + 1..n {
                if sets.find(i) != sets.find(j) {
                    let v = dist.get(i, j);
                    if best.is_none_or(|b| v < b.0) {
                        best = Some((v, i, j));
                    }
                }
            }
        }
        let (v, i, j) = best.expect("disconnected graph has an inter-component pair");
        log::info!("isomap: joined components with edge ({i}, {j}) of length {v}");
        adjacent[i * n + j] = true;
        adjacent[j * n + i] = true;
        sets.union(i, j);
        components -= 1;
        repairs.push((i, j));
    }

    // On a complete graph the metric's triangle inequality makes every direct
    // edge a shortest path.
    if adjacent
        .iter()
        .enumerate()
        .all(|(idx, &a)| a || idx / n == idx % n)
    {
        return Ok(Geodesics {
            distances: dist.as_slice().to_vec(),
            repairs,
        });
    }

    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| adjacent[i * n + j]).collect())
        .collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|source| dijkstra(dist, &neighbours, source))
        .collect();
    let mut distances = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            // both directions are computed; keep the matrix exactly symmetric
            let v = if i <= j { rows[i][j] } else { rows[j][i] };
            distances[i * n + j] = v;
        }
    }
    Ok(Geodesics { distances, repairs })
}

struct Tentative(f64);

impl PartialEq for Tentative {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}

impl Eq for Tentative {}

impl PartialOrd for Tentative {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Tentative {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

fn dijkstra(dist: &DistanceMatrix, neighbours: &[Vec<usize>], source: usize) -> Vec<f64> {
    let n = dist.len();
    let mut best = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    best[source] = 0.0;
    heap.push(Reverse((Tentative(0.0), source)));
    while let Some(Reverse((Tentative(d), u))) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        for &v in &neighbours[u] {
            let candidate = d + dist.get(u, v);
            if candidate < best[v] {
                best[v] = candidate;
                heap.push(Reverse((Tentative(candidate), v)));
            }
        }
    }
    best
}

/// Isomap: classical MDS of k-NN graph geodesics.
pub fn isomap(dist: &DistanceMatrix, k: usize) -> Result<Embedding, AnalysisError> {
    let geo = geodesic_distances(dist, k)?;
    let coords = mds_coords(&geo.distances, dist.len())?;
    Ok(Embedding {
        method: EmbeddingMethod::Isomap,
        item_ids: dist.item_ids.clone(),
        coords,
        params: EmbeddingParams::Isomap { k },
        seed: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneParams {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TsneParams {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            seed: 42,
        }
    }
}

const EXAGGERATION: f64 = 12.0;
const EXAGGERATION_ITERS: usize = 250;
const INITIAL_MOMENTUM: f64 = 0.5;
const FINAL_MOMENTUM: f64 = 0.8;
const MAX_BANDWIDTH_STEPS: usize = 50;
const PERPLEXITY_TOL: f64 = 1e-5;
const MIN_GAIN: f64 = 0.01;

/// Diagnostics of one t-SNE run.
#[derive(Debug, Clone, PartialEq)]
pub struct TsneRun {
    pub embedding: Embedding,
    /// Perplexity reached by each row's bandwidth search.
    pub row_perplexity: Vec<f64>,
    /// `(iteration, KL(P || Q))`, starting with the initial layout.
    pub kl_trace: Vec<(usize, f64)>,
}

/// Conditional neighbour distribution of one row, calibrated to `perplexity`.
/// Returns the row (zero on the diagonal) and the perplexity reached.
fn calibrate_row(sq_row: &[f64], i: usize, perplexity: f64) -> (Vec<f64>, f64) {
    let n = sq_row.len();
    let target = perplexity.ln();
    let min_sq = sq_row
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = sq_row.iter().map(|v| v - min_sq).collect();
    let mean = shifted.iter().sum::<f64>() / (n - 1) as f64;

    let mut p = vec![0.0; n];
    let entropy = |beta: f64, p: &mut [f64]| -> f64 {
        let mut z = 0.0;
        let mut weighted = 0.0;
        for j in 0..n {
            if j == i {
                p[j] = 0.0;
                continue;
            }
            let e = (-beta * shifted[j]).exp();
            p[j] = e;
            z += e;
            weighted += shifted[j] * e;
        }
        for v in p.iter_mut() {
            *v /= z;
        }
        z.ln() + beta * weighted / z
    };

    let mut beta = if mean > 0.0 { 1.0 / mean } else { 1.0 };
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut h = entropy(beta, &mut p);
    for _ in 0..MAX_BANDWIDTH_STEPS {
        if (h.exp() - perplexity).abs() <= PERPLEXITY_TOL * perplexity {
            break;
        }
        if h > target {
            lo = beta;
            beta = if hi.is_finite() {
                0.5 * (beta + hi)
            } else {
                beta * 2.0
            };
        } else {
            hi = beta;
            beta = 0.5 * (beta + lo);
        }
        h = entropy(beta, &mut p);
    }
    (p, h.exp())
}

fn joint_probabilities(dist: &DistanceMatrix, perplexity: f64) -> (Vec<f64>, Vec<f64>) {
    let n = dist.len();
    let rows: Vec<(Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let sq: Vec<f64> = dist.row(i).iter().map(|v| v * v).collect();
            calibrate_row(&sq, i, perplexity)
        })
        .collect();
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let v = (rows[i].0[j] + rows[j].0[i]) / (2.0 * n as f64);
                p[i * n + j] = v.max(1e-12);
            }
        }
    }
    (p, rows.into_iter().map(|r| r.1).collect())
}

/// Student-t affinities `1 / (1 + |y_i - y_j|^2)` (zero diagonal) and their sum.
fn student_affinities(y: &[[f64; 2]]) -> (Vec<f64>, f64) {
    let n = y.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        let dx = y[i][0] - y[j][0];
                        let dy = y[i][1] - y[j][1];
                        1.0 / (1.0 + dx * dx + dy * dy)
                    }
                })
                .collect()
        })
        .collect();
    let z: f64 = rows.iter().map(|r| r.iter().sum::<f64>()).sum();
    (rows.concat(), z)
}

fn kl_divergence(p: &[f64], num: &[f64], z: f64) -> f64 {
    p.iter()
        .zip(num)
        .filter(|(pv, _)| **pv > 0.0)
        .map(|(pv, nv)| {
            let q = (nv / z).max(1e-12);
            pv * (pv / q).ln()
        })
        .sum()
}

pub fn tsne(dist: &DistanceMatrix, params: &TsneParams) -> Result<Embedding, AnalysisError> {
    Ok(tsne_run(dist, params, None)?.embedding)
}

/// Seeded initial layout: independent `N(0, 1e-4^2)` coordinates, row by row.
pub fn tsne_initial_layout(n: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1e-4).expect("valid normal");
    (0..n)
        .map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)])
        .collect()
}

/// Exact t-SNE with optional explicit initial layout (defaults to the seeded
/// layout of [`tsne_initial_layout`]).
pub fn tsne_run(
    dist: &DistanceMatrix,
    params: &TsneParams,
    init: Option<Vec<[f64; 2]>>,
) -> Result<TsneRun, AnalysisError> {
    let n = dist.len();
    if params.perplexity.is_nan()
        || params.perplexity <= 0.0
        || params.learning_rate.is_nan()
        || params.learning_rate <= 0.0
    {
        return Err(AnalysisError::InvalidParameter(
            "perplexity and learning rate must be positive".into(),
        ));
    }
    if (n as f64) <= 3.0 * params.perplexity {
        return Err(AnalysisError::PerplexityTooLarge {
            perplexity: params.perplexity,
            n,
        });
    }
    let mut y = match init {
        Some(y) if y.len() == n => y,
        Some(y) => {
            return Err(AnalysisError::InvalidParameter(format!(
                "initial layout has {} rows for {n} items",
                y.len()
            )))
        }
        None => tsne_initial_layout(n, params.seed),
    };

    let (p, row_perplexity) = joint_probabilities(dist, params.perplexity);
    let mut update = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut kl_trace = Vec::new();

    for iter in 0..params.iterations {
        let (num, z) = student_affinities(&y);
        if iter == 0 {
            kl_trace.push((0, kl_divergence(&p, &num, z)));
        }
        let exaggeration = if iter < EXAGGERATION_ITERS {
            EXAGGERATION
        } else {
            1.0
        };
        let momentum = if iter < EXAGGERATION_ITERS {
            INITIAL_MOMENTUM
        } else {
            FINAL_MOMENTUM
        };
        let grad: Vec<[f64; 2]> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut g = [0.0; 2];
                for j in 0..n {
                    let nij = num[i * n + j];
                    let coeff = (exaggeration * p[i * n + j] - nij / z) * nij;
                    g[0] += coeff * (y[i][0] - y[j][0]);
                    g[1] += coeff * (y[i][1] - y[j][1]);
                }
                [4.0 * g[0], 4.0 * g[1]]
            })
            .collect();

        for i in 0..n {
            for d in 0..2 {
                gains[i][d] = if (grad[i][d] > 0.0) != (update[i][d] > 0.0) {
                    gains[i][d] + 0.2
                } else {
                    gains[i][d] * 0.8
                };
                gains[i][d] = gains[i][d].max(MIN_GAIN);
                update[i][d] =
                    momentum * update[i][d] - params.learning_rate * gains[i][d] * grad[i][d];
                y[i][d] += update[i][d];
            }
        }
        for d in 0..2 {
            let mean = y.iter().map(|r| r[d]).sum::<f64>() / n as f64;
            y.iter_mut().for_each(|r| r[d] -= mean);
        }
        if (iter + 1) % 50 == 0 || iter + 1 == params.iterations {
            let (num, z) = student_affinities(&y);
            kl_trace.push((iter + 1, kl_divergence(&p, &num, z)));
        }
    }
    if params.iterations == 0 {
        let (num, z) = student_affinities(&y);
        kl_trace.push((0, kl_divergence(&p, &num, z)));
    }

    Ok(TsneRun {
        embedding: Embedding {
            method: EmbeddingMethod::Tsne,
            item_ids: dist.item_ids.clone(),
            coords: y,
            params: EmbeddingParams::Tsne(params.clone()),
            seed: Some(params.seed),
        },
        row_perplexity,
        kl_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("i{i}")).collect()
    }

    fn from_points(points: &[[f64; 2]]) -> DistanceMatrix {
        let n = points.len();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                d[i * n + j] = ((points[i][0] - points[j][0]).powi(2)
                    + (points[i][1] - points[j][1]).powi(2))
                .sqrt();
            }
        }
        DistanceMatrix::from_row_major(ids(n), d).unwrap()
    }

    fn image(id: &str, pixels: Vec<f64>) -> PersistenceImage {
        PersistenceImage {
            item_id: id.into(),
            resolution: 2,
            pixels,
        }
    }

    fn reconstruction_error(dist: &DistanceMatrix, coords: &[[f64; 2]]) -> f64 {
        let n = dist.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let r = ((coords[i][0] - coords[j][0]).powi(2)
                    + (coords[i][1] - coords[j][1]).powi(2))
                .sqrt();
                worst = worst.max((r - dist.get(i, j)).abs());
            }
        }
        worst
    }

    #[test]
    fn distance_formula() {
        let x = image("x", vec![1.0, 2.0, 0.0, 0.0]);
        let y = image("y", vec![4.0, 6.0, 0.0, 0.0]);
        let z = image("z", vec![1.0, 2.0, 3.0, 0.0]);
        let d = distance_matrix(&[x.clone(), y, z, x]).unwrap();
        assert_eq!(d.get(0, 1), 5.0);
        assert_eq!(d.get(0, 2), 3.0);
        assert_eq!(d.get(0, 3), 0.0);
        assert_eq!(d.get(1, 0), 5.0);
        assert_eq!(d.item_ids(), &["x", "y", "z", "x"]);
        let bad = PersistenceImage {
            item_id: "b".into(),
            resolution: 3,
            pixels: vec![0.0; 9],
        };
        assert_eq!(
            distance_matrix(&[image("a", vec![0.0; 4]), bad]),
            Err(AnalysisError::ResolutionMismatch(2, 3))
        );
    }

    #[test]
    fn mds_single_point_and_collinear() {
        let one = DistanceMatrix::from_row_major(ids(1), vec![0.0]).unwrap();
        assert_eq!(classical_mds(&one).unwrap().coords, vec![[0.0, 0.0]]);

        let d = DistanceMatrix::from_row_major(
            ids(3),
            vec![0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0],
        )
        .unwrap();
        let e = classical_mds(&d).unwrap();
        assert!(reconstruction_error(&d, &e.coords) < 1e-9);
        let xs: Vec<f64> = e.coords.iter().map(|c| c[0]).collect();
        let expected = if xs[0] > 0.0 {
            [1.0, 0.0, -1.0]
        } else {
            [-1.0, 0.0, 1.0]
        };
        for (x, want) in xs.iter().zip(expected) {
            assert!((x - want).abs() < 1e-9);
        }
        assert!(e.coords.iter().all(|c| c[1] == 0.0));
    }

    #[test]
    fn mds_unit_square() {
        let d = from_points(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        let e = classical_mds(&d).unwrap();
        assert!(reconstruction_error(&d, &e.coords) < 1e-9);
        for axis in 0..2 {
            let mean: f64 = e.coords.iter().map(|c| c[axis]).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-9);
        }
    }

    #[test]
    fn isomap_collinear_k1() {
        let d = DistanceMatrix::from_row_major(
            ids(3),
            vec![0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0],
        )
        .unwrap();
        let geo = geodesic_distances(&d, 1).unwrap();
        assert_eq!(geo.distances[2], 2.0);
        assert!(geo.repairs.is_empty());
        let e = isomap(&d, 1).unwrap();
        assert_eq!(e.coords, classical_mds(&d).unwrap().coords);
        assert!(isomap(&d, 3).is_err());
        assert!(isomap(&d, 0).is_err());
    }

    #[test]
    fn isomap_repairs_disconnected_graph() {
        // two tight clusters far apart: k = 1 leaves them disconnected
        let pts = [[0.0, 0.0], [0.1, 0.0], [5.0, 0.0], [5.1, 0.0]];
        let d = from_points(&pts);
        let geo = geodesic_distances(&d, 1).unwrap();
        assert_eq!(geo.repairs, vec![(1, 2)]);
        assert!((geo.distances[3] - 5.1).abs() < 1e-12);
        assert!(geo.distances.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn tsne_rejects_large_perplexity() {
        let d = from_points(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        assert!(matches!(
            tsne(&d, &TsneParams::default()),
            Err(AnalysisError::PerplexityTooLarge { .. })
        ));
    }

    #[test]
    fn tsne_small_run_properties() {
        let pts: Vec<[f64; 2]> = (0..40)
            .map(|i| {
                let c = if i % 2 == 0 { 0.0 } else { 10.0 };
                [c + (i as f64 * 0.37).sin(), c + (i as f64 * 0.91).cos()]
            })
            .collect();
        let d = from_points(&pts);
        let params = TsneParams {
            perplexity: 5.0,
            iterations: 300,
            learning_rate: 10.0,
            ..TsneParams::default()
        };
        let run = tsne_run(&d, &params, None).unwrap();
        for p in &run.row_perplexity {
            assert!((p - 5.0).abs() <= 1e-5 * 5.0, "{p}");
        }
        let first = run.kl_trace.first().unwrap().1;
        let last = run.kl_trace.last().unwrap().1;
        assert!(last < first, "{first} -> {last}");
        let again = tsne_run(&d, &params, None).unwrap();
        assert_eq!(run.embedding, again.embedding);
        assert!(run
            .embedding
            .coords
            .iter()
            .all(|c| c[0].is_finite() && c[1].is_finite()));
    }

    #[test]
    fn method_names() {
        for m in EmbeddingMethod::ALL {
            assert_eq!(m.as_str().parse::<EmbeddingMethod>().unwrap(), m);
        }
        assert!("umap".parse::<EmbeddingMethod>().is_err());
    }

    fn planar_points() -> impl Strategy<Value = Vec<[f64; 2]>> {
        proptest::collection::vec(
            (-5.0f64..5.0, -5.0f64..5.0).prop_map(|(a, b)| [a, b]),
            3..12,
        )
    }

    proptest! {
        #[test]
        fn image_distances_are_metric(pix in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 4), 3..8)) {
            let imgs: Vec<PersistenceImage> = pix.into_iter().enumerate().map(|(i, p)| image(&i.to_string(), p)).collect();
            let d = distance_matrix(&imgs).unwrap();
            let n = d.len();
            for a in 0..n {
                prop_assert_eq!(d.get(a, a), 0.0);
                for b in 0..n {
                    prop_assert_eq!(d.get(a, b), d.get(b, a));
                    for c in 0..n {
                        prop_assert!(d.get(a, c) <= d.get(a, b) + d.get(b, c) + 1e-12);
                    }
                }
            }
        }

        #[test]
        fn geodesics_dominate_direct_distances(pts in planar_points()) {
            let d = from_points(&pts);
            let k = 1.max(pts.len() / 3);
            let geo = geodesic_distances(&d, k).unwrap();
            let n = d.len();
            for i in 0..n {
                for j in 0..n {
                    prop_assert!(geo.distances[i * n + j] >= d.get(i, j) - 1e-12);
                }
            }
        }

        #[test]
        fn mds_is_permutation_equivariant(pts in planar_points(), shift in 1usize..5) {
            let n = pts.len();
            let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
            let permuted: Vec<[f64; 2]> = perm.iter().map(|&i| pts[i]).collect();
            let a = classical_mds(&from_points(&pts)).unwrap();
            let b = classical_mds(&from_points(&permuted)).unwrap();
            // distances are what MDS pins down; rows must follow the permutation
            let da = from_points(&a.coords);
            let db = from_points(&b.coords);
            for i in 0..n {
                for j in 0..n {
                    prop_assert!((da.get(perm[i], perm[j]) - db.get(i, j)).abs() < 1e-7);
                }
            }
        }
    }
}
