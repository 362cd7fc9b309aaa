//! Shortest-path and Weisfeiler-Lehman subtree kernels via explicit feature
//! maps.
//!
//! Both kernels are inner products of sparse count histograms, so a kernel
//! value is an exact integer and a Gram matrix costs one feature map per
//! patch plus one sparse dot product per entry.

mod codec;
mod gram;
mod shortest_path;
mod wl;

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::{Label, LabeledGraph};

pub use gram::{gram_from_maps, gram_matrix, GramMatrix};
pub(crate) use gram::{kind_code, kind_from_code};
pub use shortest_path::sp_feature_map;
pub use wl::{wl_feature_map, wl_feature_maps, WlLabelTable, WlSignature};

/// Default number of WL refinement iterations.
pub const DEFAULT_WL_ITERATIONS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    ShortestPath,
    WeisfeilerLehman,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// Refinement iterations `h`; ignored by the shortest-path kernel.
    pub wl_iterations: usize,
}

impl KernelSpec {
    pub fn shortest_path() -> Self {
        Self {
            kind: KernelKind::ShortestPath,
            wl_iterations: 0,
        }
    }

    pub fn weisfeiler_lehman(h: usize) -> Self {
        Self {
            kind: KernelKind::WeisfeilerLehman,
            wl_iterations: h,
        }
    }

    /// Short channel name: `sp` or `wl`.
    pub fn short_name(&self) -> &'static str {
        match self.kind {
            KernelKind::ShortestPath => "sp",
            KernelKind::WeisfeilerLehman => "wl",
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            KernelKind::ShortestPath => write!(f, "SP"),
            KernelKind::WeisfeilerLehman => write!(f, "WL(h={})", self.wl_iterations),
        }
    }
}

/// Key of one histogram bin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureKey {
    /// A vertex pair with endpoint labels `lo <= hi` at distance `length`.
    Path { lo: Label, hi: Label, length: u32 },
    /// A node carrying compressed label `label` after `iteration` refinements.
    Subtree { iteration: u32, label: u32 },
}

/// Sparse histogram: sorted by key, strictly positive counts.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FeatureMap {
    entries: Vec<(FeatureKey, u64)>,
}

impl FeatureMap {
    /// Builds a map from unordered `(key, count)` pairs; repeated keys are
    /// summed and zero counts dropped.
    pub fn from_counts(counts: impl IntoIterator<Item = (FeatureKey, u64)>) -> Self {
        let mut entries: Vec<(FeatureKey, u64)> = counts.into_iter().collect();
        entries.sort_unstable_by_key(|e| e.0);
        let mut merged: Vec<(FeatureKey, u64)> = Vec::with_capacity(entries.len());
        for (k, c) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == k => last.1 += c,
                _ => merged.push((k, c)),
            }
        }
        merged.retain(|e| e.1 > 0);
        Self { entries: merged }
    }

    pub fn entries(&self) -> &[(FeatureKey, u64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &FeatureKey) -> u64 {
        self.entries
            .binary_search_by_key(key, |e| e.0)
            .map_or(0, |i| self.entries[i].1)
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    /// Exact sparse inner product.
    pub fn dot(&self, other: &FeatureMap) -> u64 {
        let (a, b) = (&self.entries, &other.entries);
        let (mut i, mut j) = (0, 0);
        let mut acc = 0u64;
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn squared_norm(&self) -> u64 {
        self.entries.iter().map(|e| e.1 * e.1).sum()
    }
}

/// `k(a, b)` for two maps produced under the same `spec` (and, for WL, the
/// same label table).
pub fn kernel_value(_spec: &KernelSpec, a: &FeatureMap, b: &FeatureMap) -> f64 {
    a.dot(b) as f64
}

/// Computes feature maps for one kernel. WL featurizers own the label table
/// shared by every graph they see, so maps from one featurizer are mutually
/// comparable.
#[derive(Clone, Debug)]
pub struct Featurizer {
    spec: KernelSpec,
    table: Arc<WlLabelTable>,
}

impl Featurizer {
    pub fn new(spec: KernelSpec) -> Self {
        Self::with_table(spec, Arc::new(WlLabelTable::new()))
    }

    pub fn with_table(spec: KernelSpec, table: Arc<WlLabelTable>) -> Self {
        Self { spec, table }
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn table(&self) -> &Arc<WlLabelTable> {
        &self.table
    }

    pub fn feature_map(&self, g: &LabeledGraph) -> FeatureMap {
        match self.spec.kind {
            KernelKind::ShortestPath => sp_feature_map(g),
            KernelKind::WeisfeilerLehman => wl_feature_map(g, self.spec.wl_iterations, &self.table),
        }
    }

    /// Maps for many graphs. Output, including the ids a WL table assigns,
    /// does not depend on the worker pool size.
    pub fn feature_maps(&self, graphs: &[&LabeledGraph]) -> Vec<FeatureMap> {
        match self.spec.kind {
            KernelKind::ShortestPath => graphs.par_iter().map(|g| sp_feature_map(g)).collect(),
            KernelKind::WeisfeilerLehman => wl_feature_maps(graphs, self.spec.wl_iterations, &self.table),
        }
    }
}
