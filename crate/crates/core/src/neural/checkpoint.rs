//! Model checkpoints.
//!
//! Little-endian layout:
//!
//! ```text
//! magic "KCNNCKP1"
//! F, C, p, H, K: u64
//! dropout: f64, seed: u64
//! filters [F x C*p], dense weights [H x F], dense bias [H],
//! output weights [K x H], output bias [K]      all f64, row-major
//! config: u64 length + JSON bytes
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{DMatrix, DVector};

use super::{KcnnModel, ModelShape, TrainConfig};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"KCNNCKP1";

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

pub fn write_checkpoint(path: impl AsRef<Path>, model: &KcnnModel, config: &TrainConfig) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    let s = model.shape;
    let body = (|| -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        for d in [s.num_filters, s.channels, s.dim, s.dense_units, s.num_classes] {
            w.write_u64::<LittleEndian>(d as u64)?;
        }
        w.write_f64::<LittleEndian>(model.dropout_rate)?;
        w.write_u64::<LittleEndian>(model.rng_seed)?;
        write_matrix(&mut w, &model.filters)?;
        write_matrix(&mut w, &model.dense_weights)?;
        for &b in model.dense_bias.iter() {
            w.write_f64::<LittleEndian>(b)?;
        }
        write_matrix(&mut w, &model.output_weights)?;
        for &b in model.output_bias.iter() {
            w.write_f64::<LittleEndian>(b)?;
        }
        let json = serde_json::to_vec(config).map_err(std::io::Error::other)?;
        w.write_u64::<LittleEndian>(json.len() as u64)?;
        w.write_all(&json)?;
        w.flush()
    })();
    body.map_err(io)
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<(KcnnModel, TrainConfig)> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut r = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    read_from(&mut r).map_err(|e| match e.kind() {
        std::io::ErrorKind::InvalidData | std::io::ErrorKind::UnexpectedEof => Error::corrupt(path, e.to_string()),
        _ => Error::io(path, e),
    })
}

fn read_from(r: &mut impl Read) -> std::io::Result<(KcnnModel, TrainConfig)> {
    let bad = |m: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, m.to_string());
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let mut dims = [0usize; 5];
    for d in &mut dims {
        *d = r.read_u64::<LittleEndian>()? as usize;
    }
    let [num_filters, channels, dim, dense_units, num_classes] = dims;
    if dims.iter().any(|&d| d == 0 || d > 1 << 24) {
        return Err(bad("implausible model shape"));
    }
    let shape = ModelShape {
        num_filters,
        channels,
        dim,
        dense_units,
        num_classes,
    };
    let dropout_rate = r.read_f64::<LittleEndian>()?;
    let rng_seed = r.read_u64::<LittleEndian>()?;
    let filters = read_matrix(r, num_filters, channels * dim)?;
    let dense_weights = read_matrix(r, dense_units, num_filters)?;
    let mut dense_bias = vec![0.0; dense_units];
    r.read_f64_into::<LittleEndian>(&mut dense_bias)?;
    let output_weights = read_matrix(r, num_classes, dense_units)?;
    let mut output_bias = vec![0.0; num_classes];
    r.read_f64_into::<LittleEndian>(&mut output_bias)?;
    let len = r.read_u64::<LittleEndian>()? as usize;
    if len > 1 << 20 {
        return Err(bad("config block too large"));
    }
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let config: TrainConfig = serde_json::from_slice(&json).map_err(|e| bad(&e.to_string()))?;
    let model = KcnnModel {
        shape,
        dropout_rate,
        rng_seed,
        filters,
        dense_weights,
        dense_bias: DVector::from_vec(dense_bias),
        output_weights,
        output_bias: DVector::from_vec(output_bias),
    };
    Ok((model, config))
}

/// Writes `epoch,loss` rows, epochs counted from 1.
pub fn write_loss_history(path: impl AsRef<Path>, losses: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::from("epoch,loss\n");
    for (e, l) in losses.iter().enumerate() {
        text.push_str(&format!("{},{l}\n", e + 1));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let shape = ModelShape {
            num_filters: 4,
            channels: 2,
            dim: 3,
            dense_units: 5,
            num_classes: 3,
        };
        let model = KcnnModel::new(shape, 0.5, 17).unwrap();
        let config = TrainConfig {
            num_filters: 4,
            dense_units: 5,
            ..Default::default()
        };
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("m.ckpt");
        write_checkpoint(&path, &model, &config).unwrap();
        let (back, cfg) = read_checkpoint(&path).unwrap();
        assert_eq!(back, model);
        assert_eq!(cfg, config);
    }

    #[test]
    fn corrupt_checkpoint() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("m.ckpt");
        assert!(matches!(read_checkpoint(&path), Err(Error::MissingFile(_))));
        std::fs::write(&path, b"KCNNCKP1\x01").unwrap();
        assert!(matches!(read_checkpoint(&path), Err(Error::Corrupt { .. })));
    }
}
