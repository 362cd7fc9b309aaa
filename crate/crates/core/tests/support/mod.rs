//! Brute-force oracles and generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use kcnn::embed::EmbeddedGraph;
use kcnn::graph::LabeledGraph;
use kcnn::neural::{loss_and_gradients, GraphBatch, KcnnModel, ModelShape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Erdos-Renyi graph with labels drawn from `0..alphabet`.
pub fn random_graph(rng: &mut impl Rng, n: usize, p: f64, alphabet: u32) -> LabeledGraph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    let labels = (0..n).map(|_| rng.random_range(0..alphabet)).collect();
    LabeledGraph::new(n, edges, labels).unwrap()
}

pub fn clique_pair() -> LabeledGraph {
    let mut edges = Vec::new();
    for offset in [0, 5] {
        for u in 0..5 {
            for v in u + 1..5 {
                edges.push((u + offset, v + offset));
            }
        }
    }
    edges.push((4, 5));
    LabeledGraph::uniform(10, edges).unwrap()
}

/// All-pairs hop distances by Floyd-Warshall; `None` when unreachable.
pub fn floyd_warshall(g: &LabeledGraph) -> Vec<Vec<Option<u32>>> {
    let n = g.num_nodes();
    let mut d = vec![vec![None; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = Some(0);
    }
    for &(u, v) in g.edges() {
        d[u][v] = Some(1);
        d[v][u] = Some(1);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if let (Some(a), Some(b)) = (d[i][k], d[k][j]) {
                    if d[i][j].is_none_or(|c| a + b < c) {
                        d[i][j] = Some(a + b);
                    }
                }
            }
        }
    }
    d
}

/// Shortest-path kernel by comparing every vertex pair of `a` with every
/// vertex pair of `b`.
pub fn sp_oracle(a: &LabeledGraph, b: &LabeledGraph) -> u64 {
    let (da, db) = (floyd_warshall(a), floyd_warshall(b));
    let (la, lb) = (a.node_labels(), b.node_labels());
    let mut k = 0;
    for u in 0..a.num_nodes() {
        for v in u + 1..a.num_nodes() {
            let Some(d1) = da[u][v] else { continue };
            for x in 0..b.num_nodes() {
                for y in x + 1..b.num_nodes() {
                    let Some(d2) = db[x][y] else { continue };
                    let same_ends = (la[u] == lb[x] && la[v] == lb[y]) || (la[u] == lb[y] && la[v] == lb[x]);
                    if d1 == d2 && same_ends {
                        k += 1;
                    }
                }
            }
        }
    }
    k
}

/// WL labels as nested strings: `label(sorted neighbour labels)`.
pub fn wl_string_labels(g: &LabeledGraph, h: usize) -> Vec<Vec<String>> {
    let adj = g.adjacency();
    let mut current: Vec<String> = g.node_labels().iter().map(|l| l.to_string()).collect();
    let mut all = vec![current.clone()];
    for _ in 0..h {
        let next: Vec<String> = (0..g.num_nodes())
            .map(|v| {
                let mut ns: Vec<&str> = adj[v].iter().map(|&w| current[w].as_str()).collect();
                ns.sort_unstable();
                format!("{}({})", current[v], ns.join(","))
            })
            .collect();
        all.push(next.clone());
        current = next;
    }
    all
}

/// WL subtree kernel: matching node pairs summed over iterations `0..=h`.
pub fn wl_oracle(a: &LabeledGraph, b: &LabeledGraph, h: usize) -> u64 {
    let (la, lb) = (wl_string_labels(a, h), wl_string_labels(b, h));
    let mut k = 0;
    for i in 0..=h {
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for s in &la[i] {
            *counts.entry(s).or_default() += 1;
        }
        for s in &lb[i] {
            k += counts.get(s.as_str()).copied().unwrap_or(0);
        }
    }
    k
}

/// Random model with random biases and a random padded batch.
pub fn random_instance(seed: u64) -> (KcnnModel, GraphBatch) {
    let mut r = rng(seed);
    let shape = ModelShape {
        num_filters: r.random_range(1..6),
        channels: r.random_range(1..3),
        dim: r.random_range(1..5),
        dense_units: r.random_range(1..6),
        num_classes: r.random_range(2..4),
    };
    let dropout = if r.random_bool(0.5) { 0.0 } else { r.random_range(0.1..0.6) };
    let mut model = KcnnModel::new(shape, dropout, r.random()).unwrap();
    for b in model.dense_bias.iter_mut().chain(model.output_bias.iter_mut()) {
        *b = r.random_range(-0.3..0.3);
    }
    let size = r.random_range(1..5);
    let width = shape.channels * shape.dim;
    let graphs: Vec<EmbeddedGraph> = (0..size)
        .map(|_| {
            let n = r.random_range(1..5);
            let values = (0..n * width).map(|_| r.random_range(-1.0..1.0)).collect();
            EmbeddedGraph::new(n, shape.channels, shape.dim, values).unwrap()
        })
        .collect();
    let refs: Vec<&EmbeddedGraph> = graphs.iter().collect();
    let labels = (0..size).map(|_| r.random_range(0..shape.num_classes)).collect();
    let batch = GraphBatch::new(&refs, labels, Some(5)).unwrap();
    (model, batch)
}

/// Largest per-group relative error `|g - g_fd| / (|g| + |g_fd|)` between
/// analytic and central-difference gradients (same dropout mask for every
/// evaluation).
pub fn gradient_check(model: &KcnnModel, batch: &GraphBatch, mask_seed: u64, h: f64) -> f64 {
    let mut model = model.clone();
    let (_, grads) = loss_and_gradients(&model, batch, &mut rng(mask_seed)).unwrap();
    let mut worst: f64 = 0.0;
    for group in 0..5 {
        let analytic = grads.groups()[group].to_vec();
        let mut numeric = vec![0.0; analytic.len()];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let orig = model.params()[group][i];
            model.params_mut()[group][i] = orig + h;
            let up = loss_and_gradients(&model, batch, &mut rng(mask_seed)).unwrap().0;
            model.params_mut()[group][i] = orig - h;
            let down = loss_and_gradients(&model, batch, &mut rng(mask_seed)).unwrap().0;
            model.params_mut()[group][i] = orig;
            *slot = (up - down) / (2.0 * h);
        }
        let diff = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let scale = analytic.iter().map(|a| a * a).sum::<f64>().sqrt() + numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
        if scale > 1e-10 {
            worst = worst.max(diff / scale);
        }
    }
    worst
}

pub fn write_synthetic(dir: &std::path::Path, count: usize, seed: u64) {
    let ds = kcnn::graph::generate_synthetic(count, seed).unwrap();
    kcnn::graph::write_tu_dataset(&ds, dir).unwrap();
}
