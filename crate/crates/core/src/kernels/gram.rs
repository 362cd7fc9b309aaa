use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{FeatureMap, Featurizer, KernelKind, KernelSpec};
use crate::error::{Error, Result};
use crate::graph::LabeledGraph;

const MAGIC: &[u8; 8] = b"KCNNGRAM";

/// Symmetric patch kernel matrix with a row -> (graph, patch) index.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    pub spec: KernelSpec,
    pub values: DMatrix<f64>,
    pub subgraph_index: Vec<(usize, usize)>,
}

impl GramMatrix {
    pub fn size(&self) -> usize {
        self.values.nrows()
    }

    fn index_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".index.csv");
        PathBuf::from(s)
    }

    /// Writes the binary matrix to `path` and the row index to
    /// `path.index.csv`.
    ///
    /// Layout: magic `KCNNGRAM`, `P: u64`, kind `u8` (0 = SP, 1 = WL),
    /// `h: u32`, then `P * P` row-major `f64`, all little-endian.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        let p = self.size();
        w.write_all(MAGIC).map_err(io)?;
        w.write_u64::<LittleEndian>(p as u64).map_err(io)?;
        w.write_u8(kind_code(self.spec.kind)).map_err(io)?;
        w.write_u32::<LittleEndian>(self.spec.wl_iterations as u32).map_err(io)?;
        for r in 0..p {
            for c in 0..p {
                w.write_f64::<LittleEndian>(self.values[(r, c)]).map_err(io)?;
            }
        }
        w.flush().map_err(io)?;

        let index_path = Self::index_path(path);
        let mut text = String::from("row,graph,patch\n");
        for (r, (g, j)) in self.subgraph_index.iter().enumerate() {
            text.push_str(&format!("{r},{g},{j}\n"));
        }
        std::fs::write(&index_path, text).map_err(|e| Error::io(&index_path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let mut r = BufReader::new(File::open(path).map_err(io)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(Error::corrupt(path, "not a gram matrix file"));
        }
        let p = r.read_u64::<LittleEndian>().map_err(io)? as usize;
        let kind = kind_from_code(r.read_u8().map_err(io)?).ok_or_else(|| Error::corrupt(path, "bad kernel kind"))?;
        let h = r.read_u32::<LittleEndian>().map_err(io)? as usize;
        let mut values = DMatrix::zeros(p, p);
        for row in 0..p {
            for col in 0..p {
                values[(row, col)] = r.read_f64::<LittleEndian>().map_err(io)?;
            }
        }

        let index_path = Self::index_path(path);
        let text = std::fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
        let mut subgraph_index = Vec::with_capacity(p);
        for (line, rec) in text.lines().enumerate().skip(1) {
            let fields: Vec<&str> = rec.split(',').collect();
            let parsed = match fields.as_slice() {
                [_, g, j] => g.parse().ok().zip(j.parse().ok()),
                _ => None,
            };
            let (g, j) = parsed.ok_or_else(|| Error::Format {
                file: index_path.clone(),
                line: line + 1,
                message: "expected row,graph,patch".into(),
            })?;
            subgraph_index.push((g, j));
        }
        if subgraph_index.len() != p {
            return Err(Error::corrupt(&index_path, "index length differs from matrix size"));
        }
        Ok(Self {
            spec: KernelSpec { kind, wl_iterations: h },
            values,
            subgraph_index,
        })
    }
}

pub(crate) fn kind_code(kind: KernelKind) -> u8 {
    match kind {
        KernelKind::ShortestPath => 0,
        KernelKind::WeisfeilerLehman => 1,
    }
}

pub(crate) fn kind_from_code(code: u8) -> Option<KernelKind> {
    match code {
        0 => Some(KernelKind::ShortestPath),
        1 => Some(KernelKind::WeisfeilerLehman),
        _ => None,
    }
}

/// Gram matrix over precomputed feature maps; rows are filled in parallel.
pub fn gram_from_maps(spec: KernelSpec, maps: &[FeatureMap], subgraph_index: Vec<(usize, usize)>) -> GramMatrix {
    let p = maps.len();
    let rows: Vec<Vec<f64>> = (0..p)
        .into_par_iter()
        .map(|r| (r..p).map(|c| maps[r].dot(&maps[c]) as f64).collect())
        .collect();
    let mut values = DMatrix::zeros(p, p);
    for (r, row) in rows.into_iter().enumerate() {
        for (offset, v) in row.into_iter().enumerate() {
            values[(r, r + offset)] = v;
            values[(r + offset, r)] = v;
        }
    }
    GramMatrix {
        spec,
        values,
        subgraph_index,
    }
}

/// Gram matrix of `patches` under `spec`; row `r` is indexed as `(0, r)`.
pub fn gram_matrix(spec: KernelSpec, patches: &[LabeledGraph]) -> Result<GramMatrix> {
    if patches.is_empty() {
        return Err(Error::invalid("gram matrix of an empty patch list"));
    }
    let featurizer = Featurizer::new(spec);
    let refs: Vec<&LabeledGraph> = patches.iter().collect();
    let maps = featurizer.feature_maps(&refs);
    let index = (0..patches.len()).map(|r| (0, r)).collect();
    Ok(gram_from_maps(spec, &maps, index))
}
