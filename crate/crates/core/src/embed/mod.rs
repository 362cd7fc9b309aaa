//! Nystrom patch embedding.
//!
//! For a training patch set with kernel matrix `K` (P x P), `p` landmark
//! columns are sampled uniformly without replacement. With `C = K[:, L]`,
//! `W = K[L, L] = U diag(lambda) U^T`, the embedding is
//! `Q = C U_kept diag(lambda_kept)^(-1/2)`, so that `Q Q^T` approximates `K`
//! and is exact on the landmark block. Eigenvalues at or below
//! `1e-8 * lambda_max` are dropped and the corresponding columns of `Q` are
//! left at zero so every embedding has exactly `p` columns.
//!
//! An unseen patch `s` is embedded as `Q^+ v` where `v_r = k(s, patch_r)`
//! over all training patches.

mod io;

use std::collections::HashMap;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::LabeledGraph;
use crate::kernels::{FeatureMap, Featurizer, KernelSpec};
use crate::seed::{self, Stream};

/// Relative eigenvalue floor for the landmark block.
pub const EIGEN_FLOOR: f64 = 1e-8;
/// Relative singular-value cutoff for the pseudoinverse of `Q`.
pub const PINV_CUTOFF: f64 = 1e-10;
/// Rows sampled when measuring the approximation error of large fits.
pub const ERROR_SAMPLE_ROWS: usize = 256;

/// How unseen patches are mapped into the embedding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMode {
    /// `Q^+ v` with kernel values against every training patch.
    #[default]
    Full,
    /// `diag(lambda)^(-1/2) U^T v_L` with kernel values against the
    /// landmarks only.
    Landmark,
}

/// Quality of `Q Q^T` as a stand-in for `K`, measured at fit time on the
/// rows in `sampled_rows` (all rows when `exact`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxError {
    /// `||Q Q^T - K||_F / ||K||_F` over the sampled block.
    pub relative_frobenius: f64,
    /// Largest absolute entry of `Q Q^T - K` over the sampled block.
    pub max_abs: f64,
    pub sampled_rows: usize,
    pub exact: bool,
}

/// A fitted Nystrom embedding for one kernel channel.
#[derive(Debug)]
pub struct PatchEmbedding {
    featurizer: Featurizer,
    p: usize,
    landmarks: Vec<usize>,
    /// All `p` eigenvalues of the landmark block, descending.
    eigenvalues: Vec<f64>,
    /// Eigenvectors as columns, aligned with `eigenvalues`.
    eigen_basis: DMatrix<f64>,
    rank: usize,
    q: DMatrix<f64>,
    pinv_q: OnceLock<DMatrix<f64>>,
    training_maps: Vec<FeatureMap>,
    subgraph_index: Vec<(usize, usize)>,
    approx: ApproxError,
    projection: ProjectionMode,
}

/// Fits an embedding of `patches`; row `r` is indexed as `(0, r)`.
pub fn nystrom_fit(patches: &[LabeledGraph], spec: KernelSpec, p: usize, seed: u64) -> Result<PatchEmbedding> {
    let featurizer = Featurizer::new(spec);
    let refs: Vec<&LabeledGraph> = patches.iter().collect();
    let maps = featurizer.feature_maps(&refs);
    let index = (0..patches.len()).map(|r| (0, r)).collect();
    PatchEmbedding::fit(featurizer, maps, index, p, seed)
}

impl PatchEmbedding {
    /// Fits from precomputed feature maps. `subgraph_index[r]` names the
    /// (graph, patch) behind row `r`; the patches of one graph must be
    /// contiguous and in patch order.
    pub fn fit(
        featurizer: Featurizer,
        training_maps: Vec<FeatureMap>,
        subgraph_index: Vec<(usize, usize)>,
        p: usize,
        seed: u64,
    ) -> Result<Self> {
        let total = training_maps.len();
        if p == 0 || p > total {
            return Err(Error::invalid(format!(
                "embedding dimension {p} must lie in 1..={total} (number of training patches)"
            )));
        }
        if subgraph_index.len() != total {
            return Err(Error::invalid("subgraph index length differs from patch count"));
        }
        let mut rng = seed::rng(seed, Stream::Landmarks, &[]);
        let landmarks = sample(&mut rng, total, p).into_vec();

        let c_rows: Vec<Vec<f64>> = training_maps
            .par_iter()
            .map(|m| landmarks.iter().map(|&l| m.dot(&training_maps[l]) as f64).collect())
            .collect();
        let c = DMatrix::from_fn(total, p, |r, j| c_rows[r][j]);
        let w = DMatrix::from_fn(p, p, |i, j| c[(landmarks[i], j)]);

        let eig = w.symmetric_eigen();
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let eigen_basis = DMatrix::from_fn(p, p, |r, k| eig.eigenvectors[(r, order[k])]);

        let lambda_max = eigenvalues[0];
        let floor = EIGEN_FLOOR * lambda_max;
        let rank = eigenvalues.iter().take_while(|&&l| lambda_max > 0.0 && l > floor).count();
        if rank == 0 {
            return Err(Error::DegenerateKernel);
        }

        let mut scaled = eigen_basis.columns(0, rank).into_owned();
        for (k, lambda) in eigenvalues.iter().take(rank).enumerate() {
            scaled.column_mut(k).scale_mut(lambda.sqrt().recip());
        }
        let mut q = DMatrix::zeros(total, p);
        q.columns_mut(0, rank).copy_from(&(&c * scaled));

        let mut emb = Self {
            featurizer,
            p,
            landmarks,
            eigenvalues,
            eigen_basis,
            rank,
            q,
            pinv_q: OnceLock::new(),
            training_maps,
            subgraph_index,
            approx: ApproxError {
                relative_frobenius: 0.0,
                max_abs: 0.0,
                sampled_rows: 0,
                exact: true,
            },
            projection: ProjectionMode::Full,
        };
        emb.approx = emb.measure_error(seed);
        Ok(emb)
    }

    fn measure_error(&self, seed: u64) -> ApproxError {
        let total = self.num_patches();
        let (rows, exact) = if total <= ERROR_SAMPLE_ROWS {
            ((0..total).collect::<Vec<_>>(), true)
        } else {
            let mut rng = seed::rng(seed, Stream::ApproxSample, &[]);
            let mut rows = sample(&mut rng, total, ERROR_SAMPLE_ROWS).into_vec();
            rows.sort_unstable();
            (rows, false)
        };
        let per_row: Vec<(f64, f64, f64)> = rows
            .par_iter()
            .map(|&a| {
                let (mut diff2, mut k2, mut max_abs) = (0.0f64, 0.0f64, 0.0f64);
                for &b in &rows {
                    let exact = self.training_maps[a].dot(&self.training_maps[b]) as f64;
                    let approx = self.q.row(a).dot(&self.q.row(b));
                    let d = approx - exact;
                    diff2 += d * d;
                    k2 += exact * exact;
                    max_abs = max_abs.max(d.abs());
                }
                (diff2, k2, max_abs)
            })
            .collect();
        let diff2: f64 = per_row.iter().map(|r| r.0).sum();
        let k2: f64 = per_row.iter().map(|r| r.1).sum();
        let max_abs = per_row.iter().map(|r| r.2).fold(0.0, f64::max);
        ApproxError {
            relative_frobenius: if k2 > 0.0 { (diff2 / k2).sqrt() } else { 0.0 },
            max_abs,
            sampled_rows: rows.len(),
            exact,
        }
    }

    pub fn spec(&self) -> &KernelSpec {
        self.featurizer.spec()
    }

    pub fn featurizer(&self) -> &Featurizer {
        &self.featurizer
    }

    /// Embedding dimension `p`.
    pub fn dim(&self) -> usize {
        self.p
    }

    /// Number of training patches `P`.
    pub fn num_patches(&self) -> usize {
        self.q.nrows()
    }

    /// Number of retained eigen-directions (`<= p`).
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn landmarks(&self) -> &[usize] {
        &self.landmarks
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigen_basis(&self) -> &DMatrix<f64> {
        &self.eigen_basis
    }

    /// `Q`, one normalized patch per row.
    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn training_maps(&self) -> &[FeatureMap] {
        &self.training_maps
    }

    pub fn subgraph_index(&self) -> &[(usize, usize)] {
        &self.subgraph_index
    }

    pub fn approx_error(&self) -> &ApproxError {
        &self.approx
    }

    pub fn projection(&self) -> ProjectionMode {
        self.projection
    }

    pub fn set_projection(&mut self, mode: ProjectionMode) {
        self.projection = mode;
    }

    /// Graph ids whose patches were used in the fit.
    pub fn training_graphs(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.subgraph_index.iter().map(|e| e.0).collect();
        ids.dedup();
        ids
    }

    /// `Q^+`, computed on first use from the SVD of `Q`.
    pub fn pinv_q(&self) -> &DMatrix<f64> {
        self.pinv_q.get_or_init(|| {
            let svd = self.q.clone().svd(true, true);
            let sigma_max = svd.singular_values.max();
            let cutoff = PINV_CUTOFF * sigma_max;
            let u = svd.u.as_ref().expect("u requested");
            let v_t = svd.v_t.as_ref().expect("v_t requested");
            let mut pinv = DMatrix::zeros(self.q.ncols(), self.q.nrows());
            for (k, &s) in svd.singular_values.iter().enumerate() {
                if s > cutoff {
                    pinv += (v_t.row(k).transpose() / s) * u.column(k).transpose();
                }
            }
            pinv
        })
    }

    /// Row `r` of `Q` as a vector.
    pub fn row(&self, r: usize) -> Vec<f64> {
        self.q.row(r).iter().copied().collect()
    }

    /// Embeds an unseen patch.
    pub fn project(&self, s: &LabeledGraph) -> Vec<f64> {
        let map = self.featurizer.feature_map(s);
        self.project_map(&map)
    }

    /// Embeds a patch given its feature map (which must come from this
    /// embedding's featurizer).
    pub fn project_map(&self, map: &FeatureMap) -> Vec<f64> {
        match self.projection {
            ProjectionMode::Full => {
                let v: Vec<f64> = self.training_maps.iter().map(|t| map.dot(t) as f64).collect();
                self.project_kernel_vector(&v)
            }
            ProjectionMode::Landmark => {
                let v_l: Vec<f64> = self
                    .landmarks
                    .iter()
                    .map(|&l| map.dot(&self.training_maps[l]) as f64)
                    .collect();
                self.project_landmark_values(&v_l)
            }
        }
    }

    /// `Q^+ v` for an arbitrary kernel vector `v` of length `P`.
    pub fn project_kernel_vector(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.num_patches(), "kernel vector length");
        let z = self.pinv_q() * DVector::from_column_slice(v);
        z.iter().copied().collect()
    }

    /// `diag(lambda)^(-1/2) U^T v_L`, zero beyond the retained rank.
    pub fn project_landmark_values(&self, v_l: &[f64]) -> Vec<f64> {
        assert_eq!(v_l.len(), self.p, "landmark vector length");
        let mut z = vec![0.0; self.p];
        for (k, zk) in z.iter_mut().enumerate().take(self.rank) {
            let dot: f64 = (0..self.p).map(|i| self.eigen_basis[(i, k)] * v_l[i]).sum();
            *zk = dot / self.eigenvalues[k].sqrt();
        }
        z
    }
}

/// Patch vectors of one graph, `num_patches x channels x dim`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddedGraph {
    num_patches: usize,
    channels: usize,
    dim: usize,
    values: Vec<f64>,
}

impl EmbeddedGraph {
    pub fn new(num_patches: usize, channels: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if num_patches == 0 {
            return Err(Error::invalid("a graph needs at least one patch"));
        }
        if values.len() != num_patches * channels * dim {
            return Err(Error::invalid("patch tensor size mismatch"));
        }
        Ok(Self {
            num_patches,
            channels,
            dim,
            values,
        })
    }

    pub fn num_patches(&self) -> usize {
        self.num_patches
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// All channels of patch `j`, concatenated (`channels * dim` values).
    pub fn patch(&self, j: usize) -> &[f64] {
        let w = self.channels * self.dim;
        &self.values[j * w..(j + 1) * w]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Same graph with its patches reordered (`order[k]` = old index).
    pub fn reordered(&self, order: &[usize]) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for &j in order {
            values.extend_from_slice(self.patch(j));
        }
        Self {
            num_patches: order.len(),
            values,
            ..*self
        }
    }
}

/// Embeddings of many graphs plus the largest patch count among them.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddedDataset {
    pub graphs: Vec<EmbeddedGraph>,
    pub max_patches: usize,
}

/// Embeds each `(graph id, patches)` pair through every channel.
///
/// A graph whose patches were part of the fit (same id and patch count)
/// reuses its rows of `Q`; any other graph is projected patch by patch.
pub fn embed_dataset(graphs: &[(usize, &[LabeledGraph])], embs: &[PatchEmbedding]) -> Result<EmbeddedDataset> {
    let first = embs.first().ok_or_else(|| Error::invalid("no embedding channels"))?;
    for e in &embs[1..] {
        if e.dim() != first.dim() || e.subgraph_index() != first.subgraph_index() {
            return Err(Error::invalid(
                "embedding channels were fitted on different patch sets or dimensions",
            ));
        }
    }
    let channels = embs.len();
    let dim = first.dim();

    let mut rows_of: HashMap<usize, (usize, usize)> = HashMap::new();
    for (r, &(g, _)) in first.subgraph_index().iter().enumerate() {
        rows_of.entry(g).and_modify(|e| e.1 += 1).or_insert((r, 1));
    }

    let out: Vec<EmbeddedGraph> = graphs
        .par_iter()
        .map(|&(gid, patches)| {
            let mut values = Vec::with_capacity(patches.len() * channels * dim);
            let training_rows = rows_of.get(&gid).filter(|&&(_, n)| n == patches.len());
            for (j, patch) in patches.iter().enumerate() {
                for emb in embs {
                    match training_rows {
                        Some(&(start, _)) => values.extend(emb.q.row(start + j).iter()),
                        None => values.extend(emb.project(patch)),
                    }
                }
            }
            EmbeddedGraph::new(patches.len(), channels, dim, values)
        })
        .collect::<Result<_>>()?;
    let max_patches = out.iter().map(|g| g.num_patches()).max().unwrap_or(0);
    Ok(EmbeddedDataset {
        graphs: out,
        max_patches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star(leaves: usize, label: u32) -> LabeledGraph {
        LabeledGraph::new(leaves + 1, (1..=leaves).map(|l| (0, l)), vec![label; leaves + 1]).unwrap()
    }

    #[test]
    fn p_out_of_range() {
        let patches = vec![star(2, 0)];
        assert!(nystrom_fit(&patches, KernelSpec::shortest_path(), 2, 0).is_err());
        assert!(nystrom_fit(&patches, KernelSpec::shortest_path(), 0, 0).is_err());
    }

    #[test]
    fn all_single_nodes_degenerate_under_sp() {
        let patches = vec![LabeledGraph::uniform(1, []).unwrap(); 3];
        assert!(matches!(
            nystrom_fit(&patches, KernelSpec::shortest_path(), 2, 0),
            Err(Error::DegenerateKernel)
        ));
    }

    #[test]
    fn orthogonal_patches_give_orthogonal_q() {
        // each single edge with a distinct label pair has a disjoint SP feature
        let patches: Vec<LabeledGraph> = (0..4)
            .map(|i| LabeledGraph::new(2, [(0, 1)], vec![i, i]).unwrap())
            .collect();
        let emb = nystrom_fit(&patches, KernelSpec::shortest_path(), 4, 3).unwrap();
        let qqt = emb.q() * emb.q().transpose();
        assert!((qqt - DMatrix::<f64>::identity(4, 4)).norm() < 1e-12);
        let qtq = emb.q().transpose() * emb.q();
        assert!((qtq - DMatrix::<f64>::identity(4, 4)).norm() < 1e-12);
    }

    #[test]
    fn landmark_block_reproduced() {
        let patches: Vec<LabeledGraph> = (1..9).map(|k| star(k, (k % 3) as u32)).collect();
        let emb = nystrom_fit(&patches, KernelSpec::shortest_path(), 3, 11).unwrap();
        let maps = emb.training_maps();
        let (mut diff, mut norm) = (0.0, 0.0);
        for &a in emb.landmarks() {
            for &b in emb.landmarks() {
                let k = maps[a].dot(&maps[b]) as f64;
                let d = emb.q().row(a).dot(&emb.q().row(b)) - k;
                diff += d * d;
                norm += k * k;
            }
        }
        assert!((diff / norm).sqrt() < 1e-8);
    }

    #[test]
    fn rank_deficient_block_is_zero_padded() {
        // stars with identical label share one feature direction
        let patches: Vec<LabeledGraph> = (2..7).map(|k| star(k, 0)).collect();
        let emb = nystrom_fit(&patches, KernelSpec::shortest_path(), 5, 1).unwrap();
        assert_eq!(emb.rank(), 2);
        assert_eq!(emb.q().ncols(), 5);
        assert!(emb.q().columns(2, 3).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn empty_feature_map_projects_to_zero() {
        let patches: Vec<LabeledGraph> = (1..6).map(|k| star(k, k as u32)).collect();
        let emb = nystrom_fit(&patches, KernelSpec::shortest_path(), 3, 0).unwrap();
        let z = emb.project(&LabeledGraph::uniform(1, []).unwrap());
        assert!(z.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn embedded_graph_rejects_empty() {
        assert!(EmbeddedGraph::new(0, 1, 3, vec![]).is_err());
    }

    #[test]
    fn channel_mismatch_rejected() {
        let a: Vec<LabeledGraph> = (1..6).map(|k| star(k, k as u32)).collect();
        let e1 = nystrom_fit(&a, KernelSpec::shortest_path(), 3, 0).unwrap();
        let e2 = nystrom_fit(&a, KernelSpec::weisfeiler_lehman(1), 2, 0).unwrap();
        assert!(embed_dataset(&[(0, &a[..])], &[e1, e2]).is_err());
        assert!(embed_dataset(&[(0, &a[..])], &[]).is_err());
    }
}
