use std::collections::HashMap;
use std::sync::RwLock;

use rayon::prelude::*;

use super::{FeatureKey, FeatureMap};
use crate::graph::LabeledGraph;

/// A node's state before one refinement step: iteration number, current
/// label and the sorted multiset of neighbor labels.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct WlSignature {
    pub iteration: u32,
    pub label: u32,
    pub neighbors: Box<[u32]>,
}

/// Injective signature -> compressed label table, shared by every graph whose
/// WL features must be comparable.
///
/// `get_or_insert` is safe under concurrent use: a signature receives exactly
/// one id no matter how calls interleave. Which fresh id it receives does
/// depend on insertion order; kernel values never do.
#[derive(Debug, Default)]
pub struct WlLabelTable {
    ids: RwLock<HashMap<WlSignature, u32>>,
}

impl WlLabelTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_insert(&self, signature: WlSignature) -> u32 {
        if let Some(&id) = self.ids.read().expect("table lock").get(&signature) {
            return id;
        }
        let mut ids = self.ids.write().expect("table lock");
        let next = ids.len() as u32;
        *ids.entry(signature).or_insert(next)
    }

    pub fn get(&self, signature: &WlSignature) -> Option<u32> {
        self.ids.read().expect("table lock").get(signature).copied()
    }

    pub fn len(&self) -> usize {
        self.ids.read().expect("table lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All entries ordered by id.
    pub fn snapshot(&self) -> Vec<(WlSignature, u32)> {
        let ids = self.ids.read().expect("table lock");
        let mut entries: Vec<(WlSignature, u32)> = ids.iter().map(|(s, &i)| (s.clone(), i)).collect();
        entries.sort_unstable_by_key(|e| e.1);
        entries
    }

    /// Rebuilds a table from a [`snapshot`](Self::snapshot). Ids must be
    /// exactly `0..entries.len()`.
    pub fn from_entries(entries: Vec<(WlSignature, u32)>) -> Option<Self> {
        let n = entries.len();
        let mut seen = vec![false; n];
        let mut ids = HashMap::with_capacity(n);
        for (sig, id) in entries {
            let slot = seen.get_mut(id as usize)?;
            if *slot {
                return None;
            }
            *slot = true;
            if ids.insert(sig, id).is_some() {
                return None;
            }
        }
        Some(Self {
            ids: RwLock::new(ids),
        })
    }
}

fn signatures(adj: &[Vec<usize>], labels: &[u32], iteration: u32) -> Vec<WlSignature> {
    adj.iter()
        .enumerate()
        .map(|(u, ns)| {
            let mut neighbors: Vec<u32> = ns.iter().map(|&v| labels[v]).collect();
            neighbors.sort_unstable();
            WlSignature {
                iteration,
                label: labels[u],
                neighbors: neighbors.into_boxed_slice(),
            }
        })
        .collect()
}

fn add_histogram(counts: &mut HashMap<FeatureKey, u64>, labels: &[u32], iteration: u32) {
    for &label in labels {
        *counts.entry(FeatureKey::Subtree { iteration, label }).or_insert(0) += 1;
    }
}

/// WL subtree feature map of one graph: the label histograms of iterations
/// `0..=h`, keyed by iteration.
pub fn wl_feature_map(g: &LabeledGraph, h: usize, table: &WlLabelTable) -> FeatureMap {
    wl_feature_maps(&[g], h, table).pop().expect("one graph in, one map out")
}

/// WL feature maps of many graphs against one table.
///
/// Signatures are built in parallel, but new ids are handed out in graph and
/// node order, so the table contents are reproducible.
pub fn wl_feature_maps(graphs: &[&LabeledGraph], h: usize, table: &WlLabelTable) -> Vec<FeatureMap> {
    let adjs: Vec<Vec<Vec<usize>>> = graphs.par_iter().map(|g| g.adjacency()).collect();
    let mut labels: Vec<Vec<u32>> = graphs.iter().map(|g| g.node_labels().to_vec()).collect();
    let mut counts: Vec<HashMap<FeatureKey, u64>> = labels
        .iter()
        .map(|l| {
            let mut c = HashMap::new();
            add_histogram(&mut c, l, 0);
            c
        })
        .collect();

    for t in 1..=h as u32 {
        let sigs: Vec<Vec<WlSignature>> = adjs
            .par_iter()
            .zip(labels.par_iter())
            .map(|(adj, l)| signatures(adj, l, t))
            .collect();
        labels = sigs
            .into_iter()
            .map(|gs| gs.into_iter().map(|s| table.get_or_insert(s)).collect())
            .collect();
        for (c, l) in counts.iter_mut().zip(&labels) {
            add_histogram(c, l, t);
        }
    }
    counts.into_iter().map(FeatureMap::from_counts).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_edge_one_iteration() {
        let g = LabeledGraph::uniform(2, [(0, 1)]).unwrap();
        let table = WlLabelTable::new();
        let m = wl_feature_map(&g, 1, &table);
        let b = table
            .get(&WlSignature {
                iteration: 1,
                label: 0,
                neighbors: vec![0].into_boxed_slice(),
            })
            .unwrap();
        assert_eq!(
            m.entries(),
            &[
                (FeatureKey::Subtree { iteration: 0, label: 0 }, 2),
                (FeatureKey::Subtree { iteration: 1, label: b }, 2),
            ]
        );
        assert_eq!(m.dot(&m), 8);
    }

    #[test]
    fn zero_iterations_is_label_histogram() {
        let g = LabeledGraph::new(4, [(0, 1), (2, 3)], vec![1, 1, 2, 5]).unwrap();
        let m = wl_feature_map(&g, 0, &WlLabelTable::new());
        assert_eq!(m.len(), 3);
        assert_eq!(m.dot(&m), 4 + 1 + 1);
    }

    #[test]
    fn shared_table_aligns_graphs() {
        let table = WlLabelTable::new();
        let a = LabeledGraph::uniform(3, [(0, 1), (1, 2)]).unwrap();
        let b = LabeledGraph::uniform(2, [(0, 1)]).unwrap();
        let ma = wl_feature_map(&a, 2, &table);
        let mb = wl_feature_map(&b, 2, &table);
        // iteration 0: 3*2; iteration 1: the two leaves of a match b's nodes: 2*2
        assert_eq!(ma.dot(&mb), 6 + 4);
    }

    #[test]
    fn batch_and_single_agree() {
        let gs = [
            LabeledGraph::uniform(4, [(0, 1), (1, 2), (2, 3)]).unwrap(),
            LabeledGraph::new(3, [(0, 1), (0, 2)], vec![1, 2, 2]).unwrap(),
        ];
        let t1 = WlLabelTable::new();
        let batch = wl_feature_maps(&[&gs[0], &gs[1]], 3, &t1);
        let t2 = WlLabelTable::new();
        let single: Vec<FeatureMap> = gs.iter().map(|g| wl_feature_map(g, 3, &t2)).collect();
        assert_eq!(batch[0].dot(&batch[1]), single[0].dot(&single[1]));
        assert_eq!(batch[0].dot(&batch[0]), single[0].dot(&single[0]));
    }

    #[test]
    fn snapshot_round_trip() {
        let table = WlLabelTable::new();
        let g = LabeledGraph::uniform(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let before = wl_feature_map(&g, 3, &table);
        let copy = WlLabelTable::from_entries(table.snapshot()).unwrap();
        assert_eq!(copy.len(), table.len());
        assert_eq!(wl_feature_map(&g, 3, &copy), before);
    }

    #[test]
    fn concurrent_inserts_agree() {
        let table = WlLabelTable::new();
        let sig = |i: u32| WlSignature {
            iteration: 1,
            label: i % 17,
            neighbors: vec![i % 5].into_boxed_slice(),
        };
        let ids: Vec<u32> = (0..2000u32).into_par_iter().map(|i| table.get_or_insert(sig(i))).collect();
        for i in 0..2000u32 {
            assert_eq!(ids[i as usize], table.get(&sig(i)).unwrap());
        }
        assert!(table.len() <= 85);
    }
}
