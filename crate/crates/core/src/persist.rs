//! Binary tensor-record container shared by checkpoints and archives, plus
//! atomic file writes.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic[5] version:u8
//! meta:    u32 len, UTF-8 JSON
//! strings: u32 count, then (u32 len, UTF-8 bytes) each
//! tensors: u32 count, then (u32 name len, name, u32 ndim, u64 dims[ndim], f64 data[prod(dims)]) each
//! lists:   u32 count, then (u32 len, u32 values[len]) each
//! ```
//!
//! Trailing bytes after the last block are rejected.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nncore::Tensor;

pub const CONTAINER_VERSION: u8 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Container {
    pub meta: String,
    pub strings: Vec<String>,
    pub tensors: Vec<(String, Tensor)>,
    pub lists: Vec<Vec<u32>>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    let v = u32::try_from(v).expect("container field exceeds u32");
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

impl Container {
    pub fn encode(&self, magic: &[u8; 5]) -> Vec<u8> {
        let payload: usize = self.tensors.iter().map(|(_, t)| t.len() * 8).sum();
        let mut out = Vec::with_capacity(payload + 1024);
        out.extend_from_slice(magic);
        out.push(CONTAINER_VERSION);
        put_str(&mut out, &self.meta);
        put_u32(&mut out, self.strings.len());
        for s in &self.strings {
            put_str(&mut out, s);
        }
        put_u32(&mut out, self.tensors.len());
        for (name, t) in &self.tensors {
            put_str(&mut out, name);
            put_u32(&mut out, t.shape().len());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        put_u32(&mut out, self.lists.len());
        for l in &self.lists {
            put_u32(&mut out, l.len());
            for &v in l {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(magic: &[u8; 5], bytes: &[u8]) -> Result<Container> {
        let expected = String::from_utf8_lossy(magic);
        if bytes.len() < 5 || &bytes[..5] != magic {
            return Err(Error::Persistence(format!(
                "bad magic: expected {expected:?}, found {:?}",
                String::from_utf8_lossy(&bytes[..bytes.len().min(5)])
            )));
        }
        let mut r = Reader { bytes, pos: 5 };
        let version = r.take(1, "version")?[0];
        if version != CONTAINER_VERSION {
            return Err(Error::Persistence(format!(
                "unsupported {expected} version {version}, expected {CONTAINER_VERSION}"
            )));
        }
        let meta = r.string("metadata")?;
        let n = r.count(4, "string count")?;
        let mut strings = Vec::with_capacity(n);
        for _ in 0..n {
            strings.push(r.string("string")?);
        }
        let n = r.count(8, "tensor count")?;
        let mut tensors = Vec::with_capacity(n);
        for _ in 0..n {
            let name = r.string("tensor name")?;
            let ndim = r.count(8, "tensor rank")?;
            let mut shape = Vec::with_capacity(ndim);
            let mut len: usize = 1;
            for _ in 0..ndim {
                let d = u64::from_le_bytes(r.take(8, "tensor dim")?.try_into().unwrap());
                let d = usize::try_from(d)
                    .map_err(|_| Error::Persistence(format!("tensor {name}: dimension too large")))?;
                len = len
                    .checked_mul(d)
                    .ok_or_else(|| Error::Persistence(format!("tensor {name}: size overflows")))?;
                shape.push(d);
            }
            let raw = r.take(
                len.checked_mul(8)
                    .ok_or_else(|| Error::Persistence(format!("tensor {name}: size overflows")))?,
                "tensor data",
            )?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push((name, Tensor::new(shape, data)?));
        }
        let n = r.count(4, "list count")?;
        let mut lists = Vec::with_capacity(n);
        for _ in 0..n {
            let len = r.count(4, "list length")?;
            let raw = r.take(len * 4, "list data")?;
            lists.push(
                raw.chunks_exact(4)
                    .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            );
        }
        if r.pos != bytes.len() {
            return Err(Error::Persistence(format!(
                "{} trailing bytes after offset {}",
                bytes.len() - r.pos,
                r.pos
            )));
        }
        Ok(Container {
            meta,
            strings,
            tensors,
            lists,
        })
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Persistence(format!(
                "truncated {what} at offset {} (need {n} bytes, {} left)",
                self.pos,
                self.bytes.len() - self.pos
            ))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }

    /// A count whose items need at least `min_item` bytes each; rejects
    /// counts the remaining input cannot possibly hold.
    fn count(&mut self, min_item: usize, what: &str) -> Result<usize> {
        let at = self.pos;
        let n = self.u32(what)?;
        if n.saturating_mul(min_item) > self.bytes.len() - self.pos {
            return Err(Error::Persistence(format!(
                "{what} {n} at offset {at} exceeds remaining input"
            )));
        }
        Ok(n)
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u32(what)?;
        let at = self.pos;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| Error::Persistence(format!("{what} at offset {at} is not UTF-8")))
    }
}

/// Writes `bytes` to a temporary file next to `path`, then renames it into
/// place so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        let perms = std::fs::Permissions::from_mode(0o644);
        tmp.as_file().set_permissions(perms).map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
