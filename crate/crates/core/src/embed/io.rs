//! Binary persistence of a fitted [`PatchEmbedding`].
//!
//! Little-endian layout:
//!
//! ```text
//! magic "KCNNEMB1"
//! P: u64, p: u64, kind: u8, h: u32, projection: u8, rank: u64
//! landmarks: [u64; p]
//! eigenvalues: [f64; p]
//! eigen_basis: [f64; p * p]      row-major
//! Q: [f64; P * p]                row-major
//! approx: rel_frobenius f64, max_abs f64, sampled_rows u64, exact u8
//! subgraph_index: [(u64, u64); P]
//! P feature maps
//! WL label table
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::{Arc, OnceLock};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::DMatrix;

use super::{ApproxError, PatchEmbedding, ProjectionMode};
use crate::error::{Error, Result};
use crate::kernels::{kind_code, kind_from_code, FeatureMap, Featurizer, KernelSpec, WlLabelTable};

const MAGIC: &[u8; 8] = b"KCNNEMB1";

fn write_matrix(w: &mut impl Write, m: &DMatrix<f64>) -> std::io::Result<()> {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            w.write_f64::<LittleEndian>(m[(r, c)])?;
        }
    }
    Ok(())
}

fn read_matrix(r: &mut impl Read, rows: usize, cols: usize) -> std::io::Result<DMatrix<f64>> {
    let mut buf = vec![0.0; rows * cols];
    r.read_f64_into::<LittleEndian>(&mut buf)?;
    Ok(DMatrix::from_row_slice(rows, cols, &buf))
}

impl PatchEmbedding {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        let spec = self.spec();
        w.write_all(MAGIC)?;
        w.write_u64::<LittleEndian>(self.num_patches() as u64)?;
        w.write_u64::<LittleEndian>(self.p as u64)?;
        w.write_u8(kind_code(spec.kind))?;
        w.write_u32::<LittleEndian>(spec.wl_iterations as u32)?;
        w.write_u8(match self.projection {
            ProjectionMode::Full => 0,
            ProjectionMode::Landmark => 1,
        })?;
        w.write_u64::<LittleEndian>(self.rank as u64)?;
        for &l in &self.landmarks {
            w.write_u64::<LittleEndian>(l as u64)?;
        }
        for &e in &self.eigenvalues {
            w.write_f64::<LittleEndian>(e)?;
        }
        write_matrix(w, &self.eigen_basis)?;
        write_matrix(w, &self.q)?;
        w.write_f64::<LittleEndian>(self.approx.relative_frobenius)?;
        w.write_f64::<LittleEndian>(self.approx.max_abs)?;
        w.write_u64::<LittleEndian>(self.approx.sampled_rows as u64)?;
        w.write_u8(self.approx.exact as u8)?;
        for &(g, j) in &self.subgraph_index {
            w.write_u64::<LittleEndian>(g as u64)?;
            w.write_u64::<LittleEndian>(j as u64)?;
        }
        for m in &self.training_maps {
            m.write_to(w)?;
        }
        self.featurizer.table().write_to(w)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        Self::read_from(&mut r).map_err(|e| match e.kind() {
            std::io::ErrorKind::InvalidData | std::io::ErrorKind::UnexpectedEof => {
                Error::corrupt(path, e.to_string())
            }
            _ => Error::io(path, e),
        })
    }

    fn read_from(r: &mut impl Read) -> std::io::Result<Self> {
        let bad = |m: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, m.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("not an embedding file"));
        }
        let total = r.read_u64::<LittleEndian>()? as usize;
        let p = r.read_u64::<LittleEndian>()? as usize;
        let kind = kind_from_code(r.read_u8()?).ok_or_else(|| bad("bad kernel kind"))?;
        let h = r.read_u32::<LittleEndian>()? as usize;
        let projection = match r.read_u8()? {
            0 => ProjectionMode::Full,
            1 => ProjectionMode::Landmark,
            _ => return Err(bad("bad projection mode")),
        };
        let rank = r.read_u64::<LittleEndian>()? as usize;
        if p == 0 || p > total || rank > p {
            return Err(bad("inconsistent shape header"));
        }
        let mut landmarks = Vec::with_capacity(p);
        for _ in 0..p {
            landmarks.push(r.read_u64::<LittleEndian>()? as usize);
        }
        let mut eigenvalues = vec![0.0; p];
        r.read_f64_into::<LittleEndian>(&mut eigenvalues)?;
        let eigen_basis = read_matrix(r, p, p)?;
        let q = read_matrix(r, total, p)?;
        let approx = ApproxError {
            relative_frobenius: r.read_f64::<LittleEndian>()?,
            max_abs: r.read_f64::<LittleEndian>()?,
            sampled_rows: r.read_u64::<LittleEndian>()? as usize,
            exact: r.read_u8()? != 0,
        };
        let mut subgraph_index = Vec::with_capacity(total);
        for _ in 0..total {
            let g = r.read_u64::<LittleEndian>()? as usize;
            let j = r.read_u64::<LittleEndian>()? as usize;
            subgraph_index.push((g, j));
        }
        let mut training_maps = Vec::with_capacity(total);
        for _ in 0..total {
            training_maps.push(FeatureMap::read_from(r)?);
        }
        let table = WlLabelTable::read_from(r)?;
        let spec = KernelSpec { kind, wl_iterations: h };
        Ok(Self {
            featurizer: Featurizer::with_table(spec, Arc::new(table)),
            p,
            landmarks,
            eigenvalues,
            eigen_basis,
            rank,
            q,
            pinv_q: OnceLock::new(),
            training_maps,
            subgraph_index,
            approx,
            projection,
        })
    }
}

#[cfg(test)]
mod tests {
    use crate::embed::nystrom_fit;
    use crate::graph::LabeledGraph;
    use crate::kernels::KernelSpec;

    use super::*;

    #[test]
    fn round_trip_preserves_projection() {
        let patches: Vec<LabeledGraph> = (2..10)
            .map(|k| LabeledGraph::new(k, (1..k).map(|l| (l - 1, l)), (0..k as u32).map(|x| x % 2).collect()).unwrap())
            .collect();
        let emb = nystrom_fit(&patches, KernelSpec::weisfeiler_lehman(2), 4, 5).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("e.bin");
        emb.write(&path).unwrap();
        let back = PatchEmbedding::read(&path).unwrap();
        assert_eq!(back.q(), emb.q());
        assert_eq!(back.landmarks(), emb.landmarks());
        assert_eq!(back.approx_error(), emb.approx_error());
        let probe = LabeledGraph::new(4, [(0, 1), (1, 2), (2, 3)], vec![0, 1, 0, 1]).unwrap();
        assert_eq!(back.project(&probe), emb.project(&probe));

        let path2 = tmp.path().join("e2.bin");
        back.write(&path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn missing_and_corrupt_files() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("nope.bin");
        assert!(matches!(PatchEmbedding::read(&path), Err(Error::MissingFile(_))));
        std::fs::write(&path, b"garbage!").unwrap();
        assert!(matches!(PatchEmbedding::read(&path), Err(Error::Corrupt { .. })));
    }
}
