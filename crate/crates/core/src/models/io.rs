//! Versioned binary model files.
//!
//! Layout (little endian):
//! `b"LFMMODEL"`, version `u32`, kind `u8` (0 exact, 1 tree), shape `u8`
//! (0 cross, 1 square), span `u32`, cell count `u32`, then the body.
//!
//! Exact body: entry count `u64`, sample count `u64`, then per entry (sorted
//! by key) the key bytes, outcome count `u8` and per outcome tile `u8`,
//! count `u64`, first-seen `u64`.
//!
//! Tree body: node count `u32`, then per node in creation order attribute
//! `u16` (`0xFFFF` for leaves), label `u8`, branch count `u8` and per branch
//! value `u8`, child index `u32`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rustc_hash::FxHashMap;

use super::exact::Outcome;
use super::tree::{Node, FANOUT, LEAF, NO_CHILD};
use super::{AnyModel, ExactMatchModel, TreeModel};
use crate::engine::Tile;
use crate::patterns::{PatternSpec, Shape};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"LFMMODEL";
const VERSION: u32 = 1;

/// Serialises an exact or tree model. Baselines have no file form.
pub fn write_model<W: Write>(mut out: W, model: &AnyModel) -> Result<()> {
    let mut buf = Vec::new();
    let (kind, spec) = match model {
        AnyModel::Exact(m) => (0u8, m.spec()),
        AnyModel::Tree(m) => (1u8, m.spec()),
        other => {
            return Err(Error::InvalidArgument(format!(
                "{} models are not serialisable",
                super::ForwardModel::descriptor(other)
            )))
        }
    };
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(kind);
    buf.push(match spec.shape {
        Shape::Cross => 0,
        Shape::Square => 1,
    });
    buf.extend_from_slice(&spec.span.to_le_bytes());
    buf.extend_from_slice(&(spec.cell_count() as u32).to_le_bytes());
    match model {
        AnyModel::Exact(m) => {
            let mut entries: Vec<_> = m.entries().collect();
            entries.sort_unstable_by(|a, b| a.0.cmp(b.0));
            buf.extend_from_slice(&(entries.len() as u64).to_le_bytes());
            buf.extend_from_slice(&m.sample_count().to_le_bytes());
            for (key, outcomes) in entries {
                buf.extend_from_slice(key);
                buf.push(outcomes.len() as u8);
                for o in outcomes {
                    buf.push(o.tile.index());
                    buf.extend_from_slice(&o.count.to_le_bytes());
                    buf.extend_from_slice(&o.first_seen.to_le_bytes());
                }
            }
        }
        AnyModel::Tree(m) => {
            buf.extend_from_slice(&(m.node_count() as u32).to_le_bytes());
            for n in m.nodes() {
                buf.extend_from_slice(&n.attribute.to_le_bytes());
                buf.push(n.label.index());
                let branches: Vec<(usize, u32)> = n
                    .children
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c != NO_CHILD)
                    .map(|(v, &c)| (v, c))
                    .collect();
                buf.push(branches.len() as u8);
                for (v, c) in branches {
                    buf.push(v as u8);
                    buf.extend_from_slice(&c.to_le_bytes());
                }
            }
        }
        _ => unreachable!(),
    }
    out.write_all(&buf).map_err(|e| Error::io("<model>", e))
}

pub fn save_model(path: &Path, model: &AnyModel) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_model(&mut w, model)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<AnyModel> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(BufReader::new(file), &path.display().to_string())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
    source: &'a str,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(Error::format(self.source, "truncated model file"));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn tile(&mut self) -> Result<Tile> {
        let b = self.u8()?;
        Tile::from_index(b).ok_or_else(|| self.bad(format!("invalid tile {b}")))
    }

    fn bad(&self, msg: impl Into<String>) -> Error {
        Error::format(self.source, msg)
    }
}

/// Reads a model written by [`write_model`]; `source` names the input in errors.
pub fn read_model<R: Read>(mut input: R, source: &str) -> Result<AnyModel> {
    let mut data = Vec::new();
    input.read_to_end(&mut data).map_err(|e| Error::io(source, e))?;
    let mut c = Cursor {
        data: &data,
        pos: 0,
        source,
    };
    if c.take(MAGIC.len()).ok() != Some(&MAGIC[..]) {
        return Err(c.bad("not a model file"));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(c.bad(format!("unsupported model format version {version}")));
    }
    let kind = c.u8()?;
    let shape = match c.u8()? {
        0 => Shape::Cross,
        1 => Shape::Square,
        s => return Err(c.bad(format!("invalid shape {s}"))),
    };
    let spec = PatternSpec::new(shape, c.u32()?).map_err(|e| c.bad(e.to_string()))?;
    if c.u32()? as usize != spec.cell_count() {
        return Err(c.bad("cell count does not match shape and span"));
    }
    let stride = spec.cell_count() + 1;
    let model = match kind {
        0 => {
            let entries = c.u64()?;
            let samples = c.u64()?;
            let mut table = FxHashMap::default();
            let mut total = 0u64;
            for _ in 0..entries {
                let key = c.take(stride)?;
                if key[0] > 3 || key[1..].iter().any(|&t| Tile::from_index(t).is_none()) {
                    return Err(c.bad("invalid key"));
                }
                let n = c.u8()?;
                if n == 0 {
                    return Err(c.bad("empty outcome distribution"));
                }
                let mut outcomes = Vec::with_capacity(n as usize);
                for _ in 0..n {
                    let tile = c.tile()?;
                    let count = c.u64()?;
                    let first_seen = c.u64()?;
                    if count == 0 {
                        return Err(c.bad("zero outcome count"));
                    }
                    total += count;
                    outcomes.push(Outcome { tile, count, first_seen });
                }
                if table.insert(Box::<[u8]>::from(key), outcomes).is_some() {
                    return Err(c.bad("duplicate key"));
                }
            }
            if total != samples {
                return Err(c.bad("outcome counts do not sum to the sample count"));
            }
            AnyModel::Exact(ExactMatchModel::from_parts(spec, table, samples))
        }
        1 => {
            let n = c.u32()? as usize;
            if n == 0 {
                return Err(c.bad("tree has no nodes"));
            }
            let mut nodes = Vec::with_capacity(n.min(1 << 20));
            for i in 0..n {
                let attribute = c.u16()?;
                if attribute != LEAF && attribute as usize >= stride {
                    return Err(c.bad(format!("node {i}: attribute {attribute} out of range")));
                }
                let label = c.tile()?;
                let branches = c.u8()?;
                let mut children = [NO_CHILD; FANOUT];
                for _ in 0..branches {
                    let v = c.u8()? as usize;
                    let child = c.u32()?;
                    // children are created after their parent
                    if v >= FANOUT || child as usize >= n || child as usize <= i || attribute == LEAF {
                        return Err(c.bad(format!("node {i}: invalid branch")));
                    }
                    children[v] = child;
                }
                nodes.push(Node {
                    attribute,
                    label,
                    children,
                });
            }
            AnyModel::Tree(TreeModel::from_nodes(spec, nodes))
        }
        k => return Err(c.bad(format!("unknown model kind {k}"))),
    };
    if c.pos != data.len() {
        return Err(c.bad("trailing bytes after model"));
    }
    Ok(model)
}
