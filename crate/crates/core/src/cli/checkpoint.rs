//! Parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  "PLFLCKPT"
//! version  u32      1
//! groups   u32
//! per group:
//!   name_len u32, name (UTF-8), rows u32, cols u32, rows*cols f64
//! ```

use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{ParamVector, Schema};

pub const MAGIC: &[u8; 8] = b"PLFLCKPT";
pub const VERSION: u32 = 1;

pub fn encode(params: &ParamVector) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let groups = params.schema().groups();
    out.extend_from_slice(&(groups.len() as u32).to_le_bytes());
    for g in groups {
        out.extend_from_slice(&(g.name.len() as u32).to_le_bytes());
        out.extend_from_slice(g.name.as_bytes());
        out.extend_from_slice(&(g.rows as u32).to_le_bytes());
        out.extend_from_slice(&(g.cols as u32).to_le_bytes());
        for v in &params.flatten()[g.range()] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::invalid(format!("checkpoint truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

pub fn decode(buf: &[u8]) -> Result<ParamVector> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::invalid("not a checkpoint (bad magic)"));
    }
    let version = r.u32()? as u32;
    if version != VERSION {
        return Err(Error::invalid(format!("unsupported checkpoint version {version}")));
    }
    let n = r.u32()?;
    let mut shapes = Vec::with_capacity(n);
    let mut data = Vec::new();
    for _ in 0..n {
        let len = r.u32()?;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::invalid("checkpoint group name is not UTF-8"))?
            .to_string();
        let (rows, cols) = (r.u32()?, r.u32()?);
        let bytes = r.take(rows * cols * 8)?;
        data.extend(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())));
        shapes.push((name, rows, cols));
    }
    if r.pos != buf.len() {
        return Err(Error::invalid(format!("{} trailing bytes after checkpoint", buf.len() - r.pos)));
    }
    ParamVector::from_flat(Arc::new(Schema::new(shapes)?), data)
}

pub fn save(params: &ParamVector, path: &Path) -> Result<()> {
    std::fs::write(path, encode(params)).map_err(|e| Error::File {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn load(path: &Path) -> Result<ParamVector> {
    let buf = std::fs::read(path).map_err(|e| Error::File {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    decode(&buf).map_err(|e| Error::File {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
