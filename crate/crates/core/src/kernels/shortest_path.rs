use std::collections::{HashMap, VecDeque};

use super::{FeatureKey, FeatureMap};
use crate::graph::LabeledGraph;

/// Histogram of `(min label, max label, distance)` over unordered pairs of
/// distinct, mutually reachable vertices. Distances come from one BFS per
/// node.
pub fn sp_feature_map(g: &LabeledGraph) -> FeatureMap {
    let n = g.num_nodes();
    let adj = g.adjacency();
    let labels = g.node_labels();
    let mut counts: HashMap<FeatureKey, u64> = HashMap::new();
    let mut dist = vec![u32::MAX; n];
    let mut queue = VecDeque::with_capacity(n);

    for source in 0..n {
        dist.fill(u32::MAX);
        dist[source] = 0;
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if dist[v] == u32::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        for target in source + 1..n {
            if dist[target] == u32::MAX {
                continue;
            }
            let (a, b) = (labels[source], labels[target]);
            let key = FeatureKey::Path {
                lo: a.min(b),
                hi: a.max(b),
                length: dist[target],
            };
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    FeatureMap::from_counts(counts)
}
