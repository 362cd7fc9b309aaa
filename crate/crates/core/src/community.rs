//! Louvain community detection and community-based patch extraction.
//!
//! The local-moving phase visits nodes in a seeded random order (reshuffled
//! every pass) and moves a node to the neighboring community with the largest
//! modularity gain. A move is only made when it improves modularity by more
//! than [`GAIN_TOLERANCE`]. Communities are then collapsed into a weighted
//! supergraph and the process repeats until a level brings no improvement.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{induced_subgraph, LabeledGraph};
use crate::seed::{self, Stream};

/// Minimum modularity improvement for a move or a level to count.
pub const GAIN_TOLERANCE: f64 = 1e-7;

/// Assignment of every node to exactly one community, ids `0..num_communities`.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    community_of: Vec<usize>,
    num_communities: usize,
    modularity: f64,
}

impl Partition {
    /// Builds a partition from arbitrary community ids, renumbering them
    /// contiguously in order of first appearance. Modularity is computed on
    /// `g` (0 for edgeless graphs).
    pub fn from_assignment(g: &LabeledGraph, assignment: &[usize]) -> Result<Self> {
        if assignment.len() != g.num_nodes() {
            return Err(Error::invalid(format!(
                "assignment covers {} of {} nodes",
                assignment.len(),
                g.num_nodes()
            )));
        }
        let (community_of, num_communities) = renumber(assignment);
        let modularity = match modularity_of(g, &community_of) {
            Ok(q) => q,
            Err(Error::UndefinedModularity) => 0.0,
            Err(e) => return Err(e),
        };
        Ok(Self {
            community_of,
            num_communities,
            modularity,
        })
    }

    pub fn community_of(&self) -> &[usize] {
        &self.community_of
    }

    pub fn num_communities(&self) -> usize {
        self.num_communities
    }

    pub fn modularity(&self) -> f64 {
        self.modularity
    }

    /// Member lists, each sorted ascending, indexed by community id.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.num_communities];
        for (v, &c) in self.community_of.iter().enumerate() {
            members[c].push(v);
        }
        members
    }

    /// Writes `node_id,community_id` rows.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("node_id,community_id\n");
        for (v, c) in self.community_of.iter().enumerate() {
            out.push_str(&format!("{v},{c}\n"));
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(out.as_bytes()))
            .map_err(|e| Error::io(path, e))
    }
}

fn renumber(assignment: &[usize]) -> (Vec<usize>, usize) {
    let mut map: BTreeMap<usize, usize> = BTreeMap::new();
    let out = assignment
        .iter()
        .map(|c| {
            let next = map.len();
            *map.entry(*c).or_insert(next)
        })
        .collect();
    (out, map.len())
}

/// Newman modularity with unit edge weights and resolution 1.
pub fn modularity(g: &LabeledGraph, part: &Partition) -> Result<f64> {
    modularity_of(g, part.community_of())
}

/// Modularity of a raw assignment vector (ids need not be contiguous).
pub fn modularity_of(g: &LabeledGraph, community_of: &[usize]) -> Result<f64> {
    if g.num_edges() == 0 {
        return Err(Error::UndefinedModularity);
    }
    if community_of.len() != g.num_nodes() {
        return Err(Error::invalid("assignment length differs from node count"));
    }
    let (ids, k) = renumber(community_of);
    let two_m = 2.0 * g.num_edges() as f64;
    let mut internal = vec![0.0; k];
    let mut total = vec![0.0; k];
    for &(u, v) in g.edges() {
        total[ids[u]] += 1.0;
        total[ids[v]] += 1.0;
        if ids[u] == ids[v] {
            internal[ids[u]] += 2.0;
        }
    }
    Ok(internal
        .iter()
        .zip(&total)
        .map(|(&inn, &tot)| inn / two_m - (tot / two_m) * (tot / two_m))
        .sum())
}

/// Symmetric weighted graph with self-loops, used at every Louvain level.
///
/// `self_loop[i]` is the adjacency diagonal `A_ii`, which counts each
/// internal edge of a collapsed community twice, so that
/// `degree[i] = A_ii + sum_j A_ij`.
#[derive(Clone, Debug)]
struct WeightedGraph {
    adj: Vec<Vec<(usize, f64)>>,
    self_loop: Vec<f64>,
    degree: Vec<f64>,
    two_m: f64,
}

impl WeightedGraph {
    fn from_graph(g: &LabeledGraph) -> Self {
        let adj: Vec<Vec<(usize, f64)>> = g
            .adjacency()
            .into_iter()
            .map(|ns| ns.into_iter().map(|v| (v, 1.0)).collect())
            .collect();
        Self::from_parts(adj, vec![0.0; g.num_nodes()])
    }

    fn from_parts(adj: Vec<Vec<(usize, f64)>>, self_loop: Vec<f64>) -> Self {
        let degree: Vec<f64> = adj
            .iter()
            .zip(&self_loop)
            .map(|(ns, &sl)| sl + ns.iter().map(|&(_, w)| w).sum::<f64>())
            .collect();
        let two_m = degree.iter().sum();
        Self {
            adj,
            self_loop,
            degree,
            two_m,
        }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    fn modularity(&self, community_of: &[usize], num_communities: usize) -> f64 {
        if self.two_m == 0.0 {
            return 0.0;
        }
        let mut internal = vec![0.0; num_communities];
        let mut total = vec![0.0; num_communities];
        for i in 0..self.len() {
            let c = community_of[i];
            total[c] += self.degree[i];
            internal[c] += self.self_loop[i];
            for &(j, w) in &self.adj[i] {
                if community_of[j] == c {
                    internal[c] += w;
                }
            }
        }
        internal
            .iter()
            .zip(&total)
            .map(|(&inn, &tot)| inn / self.two_m - (tot / self.two_m).powi(2))
            .sum()
    }

    /// Collapses communities (contiguous ids) into single nodes.
    fn aggregate(&self, community_of: &[usize], num_communities: usize) -> Self {
        let mut self_loop = vec![0.0; num_communities];
        let mut links: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); num_communities];
        for i in 0..self.len() {
            let ci = community_of[i];
            self_loop[ci] += self.self_loop[i];
            for &(j, w) in &self.adj[i] {
                let cj = community_of[j];
                if ci == cj {
                    self_loop[ci] += w;
                } else {
                    *links[ci].entry(cj).or_insert(0.0) += w;
                }
            }
        }
        let adj = links.into_iter().map(|m| m.into_iter().collect()).collect();
        Self::from_parts(adj, self_loop)
    }
}

/// One local-moving phase. Returns contiguous community ids and whether any
/// node moved.
fn local_moving(wg: &WeightedGraph, rng: &mut impl Rng) -> (Vec<usize>, usize, bool) {
    let n = wg.len();
    let mut community: Vec<usize> = (0..n).collect();
    if wg.two_m == 0.0 {
        return (community, n, false);
    }
    let mut total: Vec<f64> = wg.degree.clone();
    let mut link_weight = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    let mut moved_any = false;

    loop {
        order.shuffle(rng);
        let mut moved = false;
        for &i in &order {
            let ki = wg.degree[i];
            if ki == 0.0 {
                continue;
            }
            let current = community[i];
            for &(j, w) in &wg.adj[i] {
                let c = community[j];
                if link_weight[c] == 0.0 {
                    touched.push(c);
                }
                link_weight[c] += w;
            }
            total[current] -= ki;

            // Gain of inserting i into c, in units of 2/(2m) modularity.
            let gain = |c: usize, w_ic: f64| w_ic - total[c] * ki / wg.two_m;
            let stay_gain = gain(current, link_weight[current]);
            let mut best = current;
            let mut best_gain = stay_gain;
            for &c in &touched {
                if c == current {
                    continue;
                }
                let g = gain(c, link_weight[c]);
                if g > best_gain || (g == best_gain && best != current && c < best) {
                    best = c;
                    best_gain = g;
                }
            }
            let improvement = 2.0 * (best_gain - stay_gain) / wg.two_m;
            if best != current && improvement > GAIN_TOLERANCE {
                community[i] = best;
                moved = true;
                moved_any = true;
            }
            total[community[i]] += ki;

            for &c in &touched {
                link_weight[c] = 0.0;
            }
            touched.clear();
        }
        if !moved {
            break;
        }
    }
    let (ids, k) = renumber(&community);
    (ids, k, moved_any)
}

/// Per-level record of a Louvain run.
#[derive(Clone, Debug)]
pub struct LevelRecord {
    /// Modularity of the flat partition of the input graph after this level.
    pub flat_modularity: f64,
    /// Modularity of the same partition evaluated on the level's supergraph.
    pub supergraph_modularity: f64,
    /// Modularity of the aggregated graph with every supernode on its own,
    /// i.e. the starting point of the next level.
    pub aggregated_modularity: f64,
    pub num_communities: usize,
}

/// Result of [`louvain_with_levels`].
#[derive(Clone, Debug)]
pub struct LouvainRun {
    pub partition: Partition,
    pub levels: Vec<LevelRecord>,
}

/// Louvain partition of `g`; deterministic for fixed `seed`.
///
/// Isolated nodes stay singletons; an edgeless graph yields all singletons
/// with modularity 0.
pub fn louvain(g: &LabeledGraph, seed: u64) -> Partition {
    louvain_with_levels(g, seed).partition
}

pub fn louvain_with_levels(g: &LabeledGraph, seed: u64) -> LouvainRun {
    let mut rng = seed::rng(seed, Stream::Louvain, &[]);
    let mut wg = WeightedGraph::from_graph(g);
    let mut membership: Vec<usize> = (0..g.num_nodes()).collect();
    let mut levels = Vec::new();
    let mut current_q = wg.modularity(&(0..wg.len()).collect::<Vec<_>>(), wg.len());

    loop {
        let (community, k, moved) = local_moving(&wg, &mut rng);
        if !moved {
            break;
        }
        let supergraph_q = wg.modularity(&community, k);
        for m in membership.iter_mut() {
            *m = community[*m];
        }
        wg = wg.aggregate(&community, k);
        let aggregated_q = wg.modularity(&(0..k).collect::<Vec<_>>(), k);
        let flat_q = modularity_of(g, &membership).unwrap_or(0.0);
        levels.push(LevelRecord {
            flat_modularity: flat_q,
            supergraph_modularity: supergraph_q,
            aggregated_modularity: aggregated_q,
            num_communities: k,
        });
        let gain = supergraph_q - current_q;
        current_q = aggregated_q;
        if gain <= GAIN_TOLERANCE {
            break;
        }
    }

    let partition = Partition::from_assignment(g, &membership).expect("membership covers graph");
    LouvainRun { partition, levels }
}

/// Louvain communities of `g` as induced subgraphs, largest first, ties
/// broken by smallest member index.
pub fn extract_patches(g: &LabeledGraph, seed: u64) -> Vec<LabeledGraph> {
    patch_node_sets(g, seed)
        .iter()
        .map(|nodes| induced_subgraph(g, nodes).expect("communities are non-empty"))
        .collect()
}

/// Node sets of [`extract_patches`] in the same order.
pub fn patch_node_sets(g: &LabeledGraph, seed: u64) -> Vec<Vec<usize>> {
    let mut members = louvain(g, seed).members();
    members.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    members
}
