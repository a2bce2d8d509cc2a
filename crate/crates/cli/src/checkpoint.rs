//! Checkpoint file: the model description plus every parameter and buffer.
//!
//! ```text
//! "QNCK"  u32 version
//! u32 length, model TOML (UTF-8)
//! u32 entry count
//! per entry: u16 name length, name, u8 kind (0 param, 1 buffer), QT1 tensor
//! ```
//!
//! Integers are little-endian. Tensors are stored in single precision.

use std::path::Path;

use quatnet::network::Network;
use quatnet::{ModelSpec, QTensor, Real};

use crate::config::{model_from_toml, model_to_toml};
use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 4] = b"QNCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryKind {
    Param,
    Buffer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    /// `layer{i}.{kind}.{name}`.
    pub name: String,
    pub kind: EntryKind,
    pub value: QTensor<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelSpec,
    pub entries: Vec<Entry>,
}

fn corrupt(msg: impl Into<String>) -> CliError {
    CliError::Corrupt(msg.into())
}

fn take<'a>(r: &mut &'a [u8], n: usize) -> CliResult<&'a [u8]> {
    if r.len() < n {
        return Err(corrupt("truncated file"));
    }
    let (head, tail) = r.split_at(n);
    *r = tail;
    Ok(head)
}

fn read_u32(r: &mut &[u8]) -> CliResult<u32> {
    Ok(u32::from_le_bytes(take(r, 4)?.try_into().expect("four bytes")))
}

/// Reject a tensor header whose extents claim more data than remains, before
/// the reader allocates for it.
fn check_tensor_size(r: &[u8]) -> Result<(), &'static str> {
    let rank = *r.get(4).ok_or("truncated tensor header")? as usize;
    let dims = r.get(5..5 + 4 * rank).ok_or("truncated tensor header")?;
    let n = dims
        .chunks_exact(4)
        .try_fold(1usize, |acc, b| acc.checked_mul(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize))
        .and_then(|n| n.checked_mul(16))
        .ok_or("tensor extents overflow")?;
    if n > r.len() - 5 - 4 * rank {
        return Err("tensor extents exceed the file");
    }
    Ok(())
}

impl Checkpoint {
    pub fn from_network<T: Real>(net: &Network<T>) -> Self {
        let mut entries = Vec::new();
        for (i, layer) in net.layers().iter().enumerate() {
            let prefix = format!("layer{i}.{}", layer.kind());
            for p in layer.params() {
                entries.push(Entry {
                    name: format!("{prefix}.{}", p.name),
                    kind: EntryKind::Param,
                    value: p.value.cast(),
                });
            }
            for b in layer.buffers() {
                entries.push(Entry {
                    name: format!("{prefix}.{}", b.name),
                    kind: EntryKind::Buffer,
                    value: b.value.cast(),
                });
            }
        }
        Self {
            model: net.spec().clone(),
            entries,
        }
    }

    /// Build the network described by the checkpoint and load its values.
    pub fn to_network<T: Real>(&self) -> CliResult<Network<T>> {
        let mut net = Network::new(&self.model, 0).map_err(|e| CliError::Checkpoint(e.to_string()))?;
        let expected = Checkpoint::from_network(&net);
        let names: Vec<&str> = expected.entries.iter().map(|e| e.name.as_str()).collect();
        let stored: Vec<&str> = self.entries.iter().map(|e| e.name.as_str()).collect();
        if names != stored {
            return Err(CliError::Checkpoint(format!(
                "entries {stored:?} do not match the model's {names:?}"
            )));
        }
        let mut entries = self.entries.iter();
        for (i, layer) in net.layers_mut().iter_mut().enumerate() {
            for p in layer.params_mut() {
                let e = entries.next().expect("entry count checked");
                if e.value.shape() != p.value.shape() {
                    return Err(CliError::Checkpoint(format!(
                        "{} has shape {:?}, model expects {:?}",
                        e.name,
                        e.value.shape(),
                        p.value.shape()
                    )));
                }
                p.value = e.value.cast();
            }
            for b in layer.buffers() {
                let e = entries.next().expect("entry count checked");
                if e.value.shape() != b.value.shape() {
                    return Err(CliError::Checkpoint(format!("{} has the wrong shape", e.name)));
                }
                layer
                    .set_buffer(b.name, &e.value.cast())
                    .map_err(|err| CliError::Checkpoint(format!("layer {i}: {err}")))?;
            }
        }
        Ok(net)
    }

    pub fn to_bytes(&self) -> CliResult<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let model = model_to_toml(&self.model);
        out.extend_from_slice(&(model.len() as u32).to_le_bytes());
        out.extend_from_slice(model.as_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            let name = u16::try_from(e.name.len()).map_err(|_| corrupt("entry name too long"))?;
            out.extend_from_slice(&name.to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.push(match e.kind {
                EntryKind::Param => 0,
                EntryKind::Buffer => 1,
            });
            e.value.write_qt1(&mut out).map_err(|err| corrupt(err.to_string()))?;
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> CliResult<Self> {
        let mut r = bytes;
        if take(&mut r, 4)? != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(corrupt(format!("unsupported version {version}")));
        }
        let len = read_u32(&mut r)? as usize;
        let text = std::str::from_utf8(take(&mut r, len)?).map_err(|_| corrupt("model description is not UTF-8"))?;
        let model = model_from_toml(text).map_err(|e| corrupt(e.to_string()))?;
        let count = read_u32(&mut r)? as usize;
        let mut entries = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let n = u16::from_le_bytes(take(&mut r, 2)?.try_into().expect("two bytes")) as usize;
            let name = std::str::from_utf8(take(&mut r, n)?)
                .map_err(|_| corrupt("entry name is not UTF-8"))?
                .to_string();
            let kind = match take(&mut r, 1)?[0] {
                0 => EntryKind::Param,
                1 => EntryKind::Buffer,
                k => return Err(corrupt(format!("unknown entry kind {k}"))),
            };
            check_tensor_size(r).map_err(|e| corrupt(format!("{name}: {e}")))?;
            let value = QTensor::read_qt1(&mut r).map_err(|e| corrupt(format!("{name}: {e}")))?;
            entries.push(Entry { name, kind, value });
        }
        if !r.is_empty() {
            return Err(corrupt("trailing bytes"));
        }
        Ok(Self { model, entries })
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    /// A missing or unreadable file is reported as [`CliError::Checkpoint`],
    /// a malformed one as [`CliError::Corrupt`].
    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes =
            std::fs::read(path).map_err(|e| CliError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}
