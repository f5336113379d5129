//! Versioned little-endian binary container for sampled subgraphs.
//!
//! Layout: magic `GGSUBG\0\0`, `u32` version, feature names, then one
//! record per subgraph. Floats are stored as raw IEEE bits, so a reload is
//! bit-exact including NaN payloads.

use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::graph::{write_atomic, EntityClass};
use super::sample::EgoSubgraph;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"GGSUBG\0\0";
pub const CACHE_VERSION: u32 = 1;

/// All subgraphs of one split, with the feature schema they share.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgraphCache {
    pub feature_names: Vec<String>,
    pub subgraphs: Vec<EgoSubgraph>,
}

fn encode(cache: &SubgraphCache) -> std::io::Result<Vec<u8>> {
    let mut w = Vec::new();
    w.write_all(MAGIC)?;
    w.write_u32::<LE>(CACHE_VERSION)?;
    w.write_u32::<LE>(cache.feature_names.len() as u32)?;
    for name in &cache.feature_names {
        w.write_u32::<LE>(name.len() as u32)?;
        w.write_all(name.as_bytes())?;
    }
    w.write_u64::<LE>(cache.subgraphs.len() as u64)?;
    for s in &cache.subgraphs {
        w.write_u64::<LE>(s.seed as u64)?;
        w.write_i32::<LE>(s.label.map_or(-1, |c| c.index() as i32))?;
        w.write_u32::<LE>(s.nodes.len() as u32)?;
        for &v in &s.nodes {
            w.write_u64::<LE>(v as u64)?;
        }
        for &h in &s.hop {
            w.write_u32::<LE>(h)?;
        }
        w.write_u32::<LE>(s.seed_index() as u32)?;
        w.write_u32::<LE>(s.edges.len() as u32)?;
        for &(a, b) in &s.edges {
            w.write_u32::<LE>(a)?;
            w.write_u32::<LE>(b)?;
        }
        for &x in &s.features {
            w.write_u64::<LE>(x.to_bits())?;
        }
    }
    Ok(w)
}

fn decode(bytes: &[u8]) -> std::io::Result<std::result::Result<SubgraphCache, String>> {
    let mut r = Cursor::new(bytes);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Ok(Err("not a subgraph cache".into()));
    }
    let version = r.read_u32::<LE>()?;
    if version != CACHE_VERSION {
        return Ok(Err(format!("unsupported cache version {version}")));
    }
    let n_names = r.read_u32::<LE>()? as usize;
    let mut feature_names = Vec::with_capacity(n_names);
    for _ in 0..n_names {
        let len = r.read_u32::<LE>()? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf)?;
        match String::from_utf8(buf) {
            Ok(s) => feature_names.push(s),
            Err(_) => return Ok(Err("feature name is not utf-8".into())),
        }
    }
    let dim = feature_names.len();
    let count = r.read_u64::<LE>()? as usize;
    let mut subgraphs = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let seed = r.read_u64::<LE>()? as usize;
        let label = match r.read_i32::<LE>()? {
            -1 => None,
            i => match EntityClass::from_index(i as usize) {
                Some(c) => Some(c),
                None => return Ok(Err(format!("bad label index {i}"))),
            },
        };
        let n = r.read_u32::<LE>()? as usize;
        let nodes = (0..n).map(|_| r.read_u64::<LE>().map(|v| v as usize)).collect::<std::io::Result<Vec<_>>>()?;
        let hop = (0..n).map(|_| r.read_u32::<LE>()).collect::<std::io::Result<Vec<_>>>()?;
        let seed_index = r.read_u32::<LE>()? as usize;
        if seed_index >= n.max(1) {
            return Ok(Err("seed index out of range".into()));
        }
        let e = r.read_u32::<LE>()? as usize;
        let mut edges = Vec::with_capacity(e);
        for _ in 0..e {
            let a = r.read_u32::<LE>()?;
            let b = r.read_u32::<LE>()?;
            if a as usize >= n || b as usize >= n {
                return Ok(Err("edge endpoint out of range".into()));
            }
            edges.push((a, b));
        }
        let features = (0..n * dim)
            .map(|_| r.read_u64::<LE>().map(f64::from_bits))
            .collect::<std::io::Result<Vec<_>>>()?;
        let mut seed_mask = vec![false; n];
        seed_mask[seed_index] = true;
        subgraphs.push(EgoSubgraph {
            seed,
            nodes,
            hop,
            edges,
            features,
            feature_dim: dim,
            seed_mask,
            label,
        });
    }
    if (r.position() as usize) != bytes.len() {
        return Ok(Err("trailing bytes".into()));
    }
    Ok(Ok(SubgraphCache {
        feature_names,
        subgraphs,
    }))
}

pub fn write_cache(path: &Path, cache: &SubgraphCache) -> Result<()> {
    let bytes = encode(cache).map_err(|e| Error::io(path, e))?;
    write_atomic(path, &bytes)
}

pub fn read_cache(path: &Path) -> Result<SubgraphCache> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    match decode(&bytes) {
        Ok(Ok(c)) => Ok(c),
        Ok(Err(msg)) => Err(Error::format(path.display().to_string(), msg)),
        Err(e) => Err(Error::format(path.display().to_string(), format!("truncated: {e}"))),
    }
}
