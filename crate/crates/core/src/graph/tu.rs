//! Reader and writer for the TU graph-benchmark text format.
//!
//! A dataset `NAME` in directory `dir` consists of
//!
//! * `NAME_A.txt`: one edge per line, `i, j`, 1-based global node ids;
//! * `NAME_graph_indicator.txt`: line `k` holds the 1-based graph id of node `k`;
//! * `NAME_graph_labels.txt`: line `g` holds the class of graph `g`;
//! * `NAME_node_labels.txt` (optional): line `k` holds the label of node `k`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{GraphDataset, Label, LabeledGraph, NodeLabelSource};
use crate::error::{Error, Result};

fn file_path(dir: &Path, name: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{name}_{suffix}.txt"))
}

fn read_required(path: &Path) -> Result<String> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Non-blank lines with their 1-based line numbers.
fn records(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, field: &str) -> Result<T> {
    field.trim().parse().map_err(|_| Error::Format {
        file: path.to_path_buf(),
        line,
        message: format!("cannot parse {:?}", field.trim()),
    })
}

fn format_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Format {
        file: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Loads `name` from `directory`.
///
/// Indices become 0-based, undirected edges are deduplicated and self-loops
/// dropped, class labels are remapped to `0..num_classes` in ascending order
/// of their original values. Without a node-label file every node is labeled
/// with its degree.
pub fn load_tu_dataset(directory: impl AsRef<Path>, name: &str) -> Result<GraphDataset> {
    let dir = directory.as_ref();
    let a_path = file_path(dir, name, "A");
    let ind_path = file_path(dir, name, "graph_indicator");
    let gl_path = file_path(dir, name, "graph_labels");
    let nl_path = file_path(dir, name, "node_labels");

    let indicator_text = read_required(&ind_path)?;
    let graph_labels_text = read_required(&gl_path)?;
    let edges_text = read_required(&a_path)?;

    let mut raw_classes: Vec<i64> = Vec::new();
    for (line, rec) in records(&graph_labels_text) {
        raw_classes.push(parse_field(&gl_path, line, rec)?);
    }
    let num_graphs = raw_classes.len();
    if num_graphs == 0 {
        return Err(format_err(&gl_path, 1, "no graph labels"));
    }

    // Global node k -> (graph, local index).
    let mut owner: Vec<(usize, usize)> = Vec::new();
    let mut sizes = vec![0usize; num_graphs];
    for (line, rec) in records(&indicator_text) {
        let gid: usize = parse_field(&ind_path, line, rec)?;
        if gid == 0 || gid > num_graphs {
            return Err(format_err(
                &ind_path,
                line,
                format!("graph id {gid} outside 1..={num_graphs}"),
            ));
        }
        owner.push((gid - 1, sizes[gid - 1]));
        sizes[gid - 1] += 1;
    }
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(format_err(
            &ind_path,
            0,
            format!("graph {} has no nodes", empty + 1),
        ));
    }
    let num_nodes = owner.len();

    let mut edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); num_graphs];
    for (line, rec) in records(&edges_text) {
        let mut parts = rec.split(',');
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(format_err(&a_path, line, "expected \"i, j\""));
        };
        let i: usize = parse_field(&a_path, line, a)?;
        let j: usize = parse_field(&a_path, line, b)?;
        for v in [i, j] {
            if v == 0 || v > num_nodes {
                return Err(format_err(
                    &a_path,
                    line,
                    format!("node {v} outside 1..={num_nodes}"),
                ));
            }
        }
        let (gi, li) = owner[i - 1];
        let (gj, lj) = owner[j - 1];
        if gi != gj {
            return Err(format_err(
                &a_path,
                line,
                format!("edge joins graphs {} and {}", gi + 1, gj + 1),
            ));
        }
        if li != lj {
            edges[gi].push((li, lj));
        }
    }

    let given_labels = if nl_path.is_file() {
        let text = fs::read_to_string(&nl_path).map_err(|e| Error::io(&nl_path, e))?;
        let mut labels: Vec<Label> = Vec::with_capacity(num_nodes);
        for (line, rec) in records(&text) {
            let first = rec.split(',').next().unwrap_or(rec);
            labels.push(parse_field(&nl_path, line, first)?);
        }
        if labels.len() != num_nodes {
            return Err(format_err(
                &nl_path,
                labels.len(),
                format!("{} node labels for {num_nodes} nodes", labels.len()),
            ));
        }
        Some(labels)
    } else {
        None
    };

    let mut per_graph_labels: Vec<Vec<Label>> = sizes.iter().map(|&s| Vec::with_capacity(s)).collect();
    if let Some(labels) = &given_labels {
        for (k, &(g, _)) in owner.iter().enumerate() {
            per_graph_labels[g].push(labels[k]);
        }
    }

    let mut graphs = Vec::with_capacity(num_graphs);
    for (g, list) in edges.into_iter().enumerate() {
        let labels = if given_labels.is_some() {
            std::mem::take(&mut per_graph_labels[g])
        } else {
            vec![0; sizes[g]]
        };
        let graph = LabeledGraph::new(sizes[g], list, labels)?;
        graphs.push(if given_labels.is_some() {
            graph
        } else {
            graph.with_degree_labels()
        });
    }

    let mut distinct = raw_classes.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let class_labels = raw_classes
        .iter()
        .map(|c| distinct.binary_search(c).expect("class present"))
        .collect();

    let source = if given_labels.is_some() {
        NodeLabelSource::Given
    } else {
        NodeLabelSource::Degree
    };
    GraphDataset::new(name, graphs, class_labels, source, 0)
}

/// Writes `dataset` in TU format under its own name.
///
/// Both directions of every edge are listed, as in the public benchmark
/// files. The node-label file is omitted for degree-labeled datasets so a
/// reload reproduces the same labels.
pub fn write_tu_dataset(dataset: &GraphDataset, directory: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = directory.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = &dataset.name;

    let a_path = file_path(dir, name, "A");
    let ind_path = file_path(dir, name, "graph_indicator");
    let gl_path = file_path(dir, name, "graph_labels");
    let nl_path = file_path(dir, name, "node_labels");

    let mut a = Vec::new();
    let mut ind = Vec::new();
    let mut nl = Vec::new();
    let mut offset = 0usize;
    for (g, graph) in dataset.graphs.iter().enumerate() {
        for &(u, v) in graph.edges() {
            writeln!(a, "{}, {}", u + offset + 1, v + offset + 1).expect("vec write");
            writeln!(a, "{}, {}", v + offset + 1, u + offset + 1).expect("vec write");
        }
        for &label in graph.node_labels() {
            writeln!(ind, "{}", g + 1).expect("vec write");
            writeln!(nl, "{label}").expect("vec write");
        }
        offset += graph.num_nodes();
    }
    let mut gl = Vec::new();
    for c in &dataset.class_labels {
        writeln!(gl, "{c}").expect("vec write");
    }

    let mut files = vec![(a_path, a), (ind_path, ind), (gl_path, gl)];
    if dataset.node_labels == NodeLabelSource::Given {
        files.push((nl_path, nl));
    } else if nl_path.exists() {
        fs::remove_file(&nl_path).map_err(|e| Error::io(&nl_path, e))?;
    }
    let mut written = Vec::new();
    for (path, bytes) in files {
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(&bytes).map_err(|e| Error::io(&path, e))?;
        w.flush().map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, file: &str, body: &str) {
        fs::write(dir.join(file), body).unwrap();
    }

    fn two_triangles(dir: &Path) {
        write(dir, "T_A.txt", "1, 2\n2, 1\n2, 3\n3, 2\n1, 3\n3, 1\n4, 5\n5, 6\n6, 4\n");
        write(dir, "T_graph_indicator.txt", "1\n1\n1\n2\n2\n2\n");
        write(dir, "T_graph_labels.txt", "-1\n1\n");
        write(dir, "T_node_labels.txt", "3\n3\n4\n0\n0\n0\n");
    }

    #[test]
    fn loads_two_triangles() {
        let tmp = tempfile::tempdir().unwrap();
        two_triangles(tmp.path());
        let ds = load_tu_dataset(tmp.path(), "T").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.num_classes, 2);
        assert_eq!(ds.class_labels, vec![0, 1]);
        for g in &ds.graphs {
            assert_eq!(g.num_nodes(), 3);
            assert_eq!(g.num_edges(), 3);
        }
        assert_eq!(ds.graphs[0].node_labels(), &[3, 3, 4]);
        assert_eq!(ds.node_labels, NodeLabelSource::Given);
    }

    #[test]
    fn degree_labels_without_node_label_file() {
        let tmp = tempfile::tempdir().unwrap();
        write(tmp.path(), "P_A.txt", "1, 2\n2, 3\n");
        write(tmp.path(), "P_graph_indicator.txt", "1\n1\n1\n1\n");
        write(tmp.path(), "P_graph_labels.txt", "0\n");
        let ds = load_tu_dataset(tmp.path(), "P").unwrap();
        // node 4 appears only in the indicator: isolated, degree 0
        assert_eq!(ds.graphs[0].node_labels(), &[1, 2, 1, 0]);
        assert_eq!(ds.node_labels, NodeLabelSource::Degree);
    }

    #[test]
    fn zero_index_is_a_format_error_with_line() {
        let tmp = tempfile::tempdir().unwrap();
        two_triangles(tmp.path());
        write(tmp.path(), "T_A.txt", "1, 2\n0, 1\n");
        match load_tu_dataset(tmp.path(), "T") {
            Err(Error::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_named() {
        let tmp = tempfile::tempdir().unwrap();
        two_triangles(tmp.path());
        fs::remove_file(tmp.path().join("T_graph_labels.txt")).unwrap();
        match load_tu_dataset(tmp.path(), "T") {
            Err(Error::MissingFile(p)) => assert!(p.ends_with("T_graph_labels.txt")),
            other => panic!("expected missing file, got {other:?}"),
        }
    }

    #[test]
    fn write_then_load_round_trips() {
        let tmp = tempfile::tempdir().unwrap();
        two_triangles(tmp.path());
        let ds = load_tu_dataset(tmp.path(), "T").unwrap();
        let out = tmp.path().join("out");
        write_tu_dataset(&ds, &out).unwrap();
        assert_eq!(load_tu_dataset(&out, "T").unwrap(), ds);
    }
}
