//! Binary model checkpoints.
//!
//! Layout: magic `GGCKPT\0\0`, `u32` version, config as JSON, input width,
//! then named tensors with raw `f64` bits.

use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::{Model, ModelConfig};
use crate::diffcore::{ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::graphstore::write_atomic;

const MAGIC: &[u8; 8] = b"GGCKPT\0\0";
pub const CHECKPOINT_VERSION: u32 = 1;

fn write_str(w: &mut Vec<u8>, s: &str) -> std::io::Result<()> {
    w.write_u32::<LE>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn read_str(r: &mut Cursor<&[u8]>) -> std::io::Result<String> {
    let len = r.read_u32::<LE>()? as usize;
    if len > r.get_ref().len() {
        return Err(std::io::ErrorKind::UnexpectedEof.into());
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

pub(crate) fn encode(model: &Model) -> Vec<u8> {
    let mut w = Vec::new();
    let config = serde_json::to_string(&model.config).expect("config serializes");
    (|| -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LE>(CHECKPOINT_VERSION)?;
        write_str(&mut w, &config)?;
        w.write_u64::<LE>(model.input_dim as u64)?;
        w.write_u32::<LE>(model.params.len() as u32)?;
        for (_, p) in model.params.iter() {
            write_str(&mut w, p.name())?;
            let shape = p.value().shape();
            w.write_u32::<LE>(shape.len() as u32)?;
            for &d in shape {
                w.write_u64::<LE>(d as u64)?;
            }
            for &x in p.value().data() {
                w.write_u64::<LE>(x.to_bits())?;
            }
        }
        Ok(())
    })()
    .expect("writing to memory");
    w
}

pub(crate) fn decode(bytes: &[u8]) -> Result<Model> {
    let bad = |d: String| Error::format("checkpoint", d);
    let mut r = Cursor::new(bytes);
    let body = (|| -> std::io::Result<std::result::Result<Model, String>> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Ok(Err("not a checkpoint".into()));
        }
        let version = r.read_u32::<LE>()?;
        if version != CHECKPOINT_VERSION {
            return Ok(Err(format!("unsupported checkpoint version {version}")));
        }
        let config: ModelConfig = match serde_json::from_str(&read_str(&mut r)?) {
            Ok(c) => c,
            Err(e) => return Ok(Err(format!("config: {e}"))),
        };
        let input_dim = r.read_u64::<LE>()? as usize;
        let count = r.read_u32::<LE>()?;
        let mut params = ParamStore::new();
        for _ in 0..count {
            let name = read_str(&mut r)?;
            let rank = r.read_u32::<LE>()? as usize;
            let mut shape = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                shape.push(r.read_u64::<LE>()? as usize);
            }
            let len: usize = shape.iter().product();
            if len * 8 > bytes.len() {
                return Err(std::io::ErrorKind::UnexpectedEof.into());
            }
            let mut data = Vec::with_capacity(len);
            for _ in 0..len {
                data.push(f64::from_bits(r.read_u64::<LE>()?));
            }
            let t = match Tensor::new(shape, data) {
                Ok(t) => t,
                Err(e) => return Ok(Err(e.to_string())),
            };
            if let Err(e) = params.insert(name, t) {
                return Ok(Err(e.to_string()));
            }
        }
        Ok(Ok(Model {
            config,
            input_dim,
            params,
        }))
    })();
    let model = match body {
        Ok(Ok(m)) => m,
        Ok(Err(d)) => return Err(bad(d)),
        Err(e) => return Err(bad(format!("truncated or corrupt: {e}"))),
    };
    if r.position() as usize != bytes.len() {
        return Err(bad("trailing bytes".into()));
    }
    model.config.validate()?;
    let reference = Model::new(model.config.clone(), model.input_dim, 0)?;
    let expected: Vec<(&str, &[usize])> = reference.params.iter().map(|(_, p)| (p.name(), p.value().shape())).collect();
    let found: Vec<(&str, &[usize])> = model.params.iter().map(|(_, p)| (p.name(), p.value().shape())).collect();
    if expected != found {
        return Err(bad("parameters do not match the stored configuration".into()));
    }
    Ok(model)
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    write_atomic(path, &encode(model))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
