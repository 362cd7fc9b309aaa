//! Little-endian binary encoding of feature maps and WL label tables.

use std::io::{self, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{FeatureKey, FeatureMap, WlLabelTable, WlSignature};

fn invalid(msg: &str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg)
}

impl FeatureMap {
    /// `n: u64`, then per entry `tag: u8, a: u32, b: u32, c: u32, count: u64`.
    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_u64::<LittleEndian>(self.entries.len() as u64)?;
        for &(key, count) in &self.entries {
            let (tag, a, b, c) = match key {
                FeatureKey::Path { lo, hi, length } => (0u8, lo, hi, length),
                FeatureKey::Subtree { iteration, label } => (1u8, iteration, label, 0),
            };
            w.write_u8(tag)?;
            w.write_u32::<LittleEndian>(a)?;
            w.write_u32::<LittleEndian>(b)?;
            w.write_u32::<LittleEndian>(c)?;
            w.write_u64::<LittleEndian>(count)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> io::Result<Self> {
        let n = r.read_u64::<LittleEndian>()? as usize;
        let mut entries = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let tag = r.read_u8()?;
            let a = r.read_u32::<LittleEndian>()?;
            let b = r.read_u32::<LittleEndian>()?;
            let c = r.read_u32::<LittleEndian>()?;
            let count = r.read_u64::<LittleEndian>()?;
            let key = match tag {
                0 => FeatureKey::Path { lo: a, hi: b, length: c },
                1 => FeatureKey::Subtree { iteration: a, label: b },
                _ => return Err(invalid("unknown feature tag")),
            };
            entries.push((key, count));
        }
        let map = FeatureMap::from_counts(entries);
        if map.len() != n {
            return Err(invalid("feature map entries not unique or zero"));
        }
        Ok(map)
    }
}

impl WlLabelTable {
    /// `n: u64`, then entries in id order: `iteration: u32, label: u32,
    /// degree: u32, neighbors: [u32; degree]`.
    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        let entries = self.snapshot();
        w.write_u64::<LittleEndian>(entries.len() as u64)?;
        for (sig, _) in &entries {
            w.write_u32::<LittleEndian>(sig.iteration)?;
            w.write_u32::<LittleEndian>(sig.label)?;
            w.write_u32::<LittleEndian>(sig.neighbors.len() as u32)?;
            for &x in sig.neighbors.iter() {
                w.write_u32::<LittleEndian>(x)?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> io::Result<Self> {
        let n = r.read_u64::<LittleEndian>()? as usize;
        let mut entries = Vec::with_capacity(n.min(1 << 20));
        for id in 0..n {
            let iteration = r.read_u32::<LittleEndian>()?;
            let label = r.read_u32::<LittleEndian>()?;
            let degree = r.read_u32::<LittleEndian>()? as usize;
            let mut neighbors = vec![0u32; degree];
            r.read_u32_into::<LittleEndian>(&mut neighbors)?;
            entries.push((
                WlSignature {
                    iteration,
                    label,
                    neighbors: neighbors.into_boxed_slice(),
                },
                id as u32,
            ));
        }
        WlLabelTable::from_entries(entries).ok_or_else(|| invalid("duplicate WL signature"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::LabeledGraph;
    use crate::kernels::{sp_feature_map, wl_feature_map};

    #[test]
    fn maps_and_table_round_trip() {
        let g = LabeledGraph::new(5, [(0, 1), (1, 2), (2, 3), (1, 4)], vec![1, 2, 1, 3, 3]).unwrap();
        let table = WlLabelTable::new();
        let maps = [sp_feature_map(&g), wl_feature_map(&g, 3, &table), FeatureMap::default()];
        let mut buf = Vec::new();
        for m in &maps {
            m.write_to(&mut buf).unwrap();
        }
        table.write_to(&mut buf).unwrap();
        let mut r = buf.as_slice();
        for m in &maps {
            assert_eq!(&FeatureMap::read_from(&mut r).unwrap(), m);
        }
        let back = WlLabelTable::read_from(&mut r).unwrap();
        assert_eq!(back.snapshot(), table.snapshot());
        assert!(r.is_empty());
    }
}
