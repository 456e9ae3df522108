//! Binary checkpoint format.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! file     := b"GWCKPT01" u32:entry_count entry*
//! entry    := u16:name_len name(utf8) u8:kind payload
//! kind 0   := network
//! kind 1   := vector  (u64:len f64*len)
//! network  := b"MLP1" u32:layer_count (u32:in u32:out u8:activation)*
//!             u64:param_count f64*param_count
//! activation tags: 0 = identity, 1 = tanh
//! ```
//!
//! Parameters are always stored as `f64`, whatever the in-memory scalar.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use super::{Activation, LayerShape, Mlp};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const FILE_MAGIC: &[u8; 8] = b"GWCKPT01";
const NET_MAGIC: &[u8; 4] = b"MLP1";

#[derive(Clone, Debug, PartialEq)]
pub enum Entry {
    Network(Mlp<f64>),
    Vector(Vec<f64>),
}

/// Named networks and raw vectors, kept in name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub entries: BTreeMap<String, Entry>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_network<T: Scalar>(&mut self, name: impl Into<String>, net: &Mlp<T>) {
        let params = net.params().iter().map(|p| p.to_f64_lossy()).collect();
        let converted = Mlp::from_parts(net.layers().to_vec(), params)
            .expect("shape already validated");
        self.entries.insert(name.into(), Entry::Network(converted));
    }

    pub fn insert_vector(&mut self, name: impl Into<String>, v: &[f64]) {
        self.entries.insert(name.into(), Entry::Vector(v.to_vec()));
    }

    pub fn network(&self, name: &str) -> Result<&Mlp<f64>> {
        match self.entries.get(name) {
            Some(Entry::Network(n)) => Ok(n),
            Some(_) => Err(Error::Checkpoint(format!("entry '{name}' is not a network"))),
            None => Err(Error::Checkpoint(format!("missing network '{name}'"))),
        }
    }

    pub fn vector(&self, name: &str) -> Result<&[f64]> {
        match self.entries.get(name) {
            Some(Entry::Vector(v)) => Ok(v),
            Some(_) => Err(Error::Checkpoint(format!("entry '{name}' is not a vector"))),
            None => Err(Error::Checkpoint(format!("missing vector '{name}'"))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(FILE_MAGIC);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, entry) in &self.entries {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            match entry {
                Entry::Network(net) => {
                    out.push(0);
                    write_network(&mut out, net);
                }
                Entry::Vector(v) => {
                    out.push(1);
                    out.extend_from_slice(&(v.len() as u64).to_le_bytes());
                    for x in v {
                        out.extend_from_slice(&x.to_le_bytes());
                    }
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != FILE_MAGIC {
            return Err(Error::Checkpoint("bad file magic".into()));
        }
        let count = read_u32(&mut r)?;
        let mut entries = BTreeMap::new();
        for _ in 0..count {
            let len = read_u16(&mut r)? as usize;
            let mut name = vec![0u8; len];
            read_exact(&mut r, &mut name)?;
            let name = String::from_utf8(name)
                .map_err(|_| Error::Checkpoint("entry name is not utf-8".into()))?;
            let entry = match read_u8(&mut r)? {
                0 => Entry::Network(read_network(&mut r)?),
                1 => {
                    let n = read_u64(&mut r)? as usize;
                    Entry::Vector(read_f64s(&mut r, n)?)
                }
                k => return Err(Error::Checkpoint(format!("unknown entry kind {k}"))),
            };
            entries.insert(name, entry);
        }
        if !r.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", r.len())));
        }
        Ok(Self { entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn write_network(out: &mut Vec<u8>, net: &Mlp<f64>) {
    out.extend_from_slice(NET_MAGIC);
    out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
    for l in net.layers() {
        out.extend_from_slice(&(l.inputs as u32).to_le_bytes());
        out.extend_from_slice(&(l.outputs as u32).to_le_bytes());
        out.push(l.activation.tag());
    }
    out.extend_from_slice(&(net.param_count() as u64).to_le_bytes());
    for p in net.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
}

fn read_network(r: &mut &[u8]) -> Result<Mlp<f64>> {
    let mut magic = [0u8; 4];
    read_exact(r, &mut magic)?;
    if &magic != NET_MAGIC {
        return Err(Error::Checkpoint("bad network magic".into()));
    }
    let n_layers = read_u32(r)? as usize;
    let mut layers = Vec::with_capacity(n_layers.min(64));
    for _ in 0..n_layers {
        let inputs = read_u32(r)? as usize;
        let outputs = read_u32(r)? as usize;
        let tag = read_u8(r)?;
        let activation = Activation::from_tag(tag)
            .ok_or_else(|| Error::Checkpoint(format!("unknown activation tag {tag}")))?;
        layers.push(LayerShape {
            inputs,
            outputs,
            activation,
        });
    }
    let n = read_u64(r)? as usize;
    let params = read_f64s(r, n)?;
    Mlp::from_parts(layers, params).map_err(|e| Error::Checkpoint(e.to_string()))
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Checkpoint("unexpected end of checkpoint".into()))
}

fn read_u8(r: &mut &[u8]) -> Result<u8> {
    let mut b = [0u8; 1];
    read_exact(r, &mut b)?;
    Ok(b[0])
}

fn read_u16(r: &mut &[u8]) -> Result<u16> {
    let mut b = [0u8; 2];
    read_exact(r, &mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut &[u8]) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s(r: &mut &[u8], n: usize) -> Result<Vec<f64>> {
    if r.len() < n.saturating_mul(8) {
        return Err(Error::Checkpoint("unexpected end of checkpoint".into()));
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut b = [0u8; 8];
        read_exact(r, &mut b)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}
