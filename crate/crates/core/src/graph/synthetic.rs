//! Erdos-Renyi graphs with a planted 10-clique (class 0) or 10-star (class 1).

use rand::Rng;

use super::{GraphDataset, LabeledGraph, NodeLabelSource};
use crate::error::{Error, Result};
use crate::seed::{self, Stream};

/// Number of planted nodes; the star is one center plus nine leaves.
pub const PLANTED_SIZE: usize = 10;

const MIN_BACKGROUND: usize = 100;
const MAX_BACKGROUND: usize = 200;
const EDGE_PROB: f64 = 0.1;

/// Generates `count` graphs, alternating clique and star classes.
///
/// Graph `i` has `n` background nodes (`0..n`, `n` uniform in `100..=200`)
/// wired as G(n, 0.1), followed by the planted nodes `n..n + 10`. Every
/// (planted, background) pair is joined with probability 0.1. All nodes
/// carry label 0.
pub fn generate_synthetic(count: usize, seed: u64) -> Result<GraphDataset> {
    if count < 2 || !count.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "synthetic dataset size must be even and at least 2, got {count}"
        )));
    }
    let mut graphs = Vec::with_capacity(count);
    let mut classes = Vec::with_capacity(count);
    for i in 0..count {
        let class = i % 2;
        let mut rng = seed::rng(seed, Stream::Synthetic, &[i as u64]);
        graphs.push(planted_graph(&mut rng, class == 0)?);
        classes.push(class);
    }
    GraphDataset::new("SYNTHETIC", graphs, classes, NodeLabelSource::Given, seed)
}

fn planted_graph(rng: &mut impl Rng, clique: bool) -> Result<LabeledGraph> {
    let n = rng.random_range(MIN_BACKGROUND..=MAX_BACKGROUND);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.random_bool(EDGE_PROB) {
                edges.push((u, v));
            }
        }
    }
    let planted: Vec<usize> = (n..n + PLANTED_SIZE).collect();
    if clique {
        for (a, &u) in planted.iter().enumerate() {
            for &v in &planted[a + 1..] {
                edges.push((u, v));
            }
        }
    } else {
        for &leaf in &planted[1..] {
            edges.push((planted[0], leaf));
        }
    }
    for &p in &planted {
        for v in 0..n {
            if rng.random_bool(EDGE_PROB) {
                edges.push((v, p));
            }
        }
    }
    LabeledGraph::uniform(n + PLANTED_SIZE, edges)
}
