//! Named-tensor checkpoint files.
//!
//! Layout, all integers little-endian `u64`:
//! `b"FGCK"`, version, tensor count, then per tensor: name length, UTF-8
//! name, ndim, dims, and the row-major `f64` values (little-endian).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FGCK";
const VERSION: u64 = 1;

pub fn write_tensors(path: &Path, tensors: &[(&str, &Array2<f64>)]) -> Result<()> {
    let ctx = || format!("writing {}", path.display());
    let file = File::create(path).map_err(|e| Error::io(ctx(), e))?;
    let mut out = BufWriter::new(file);
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(tensors.len() as u64).to_le_bytes());
    for (name, t) in tensors {
        buf.extend_from_slice(&(name.len() as u64).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&2u64.to_le_bytes());
        buf.extend_from_slice(&(t.nrows() as u64).to_le_bytes());
        buf.extend_from_slice(&(t.ncols() as u64).to_le_bytes());
        for v in t.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf).map_err(|e| Error::io(ctx(), e))?;
    out.flush().map_err(|e| Error::io(ctx(), e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::validation(format!(
                "{}: truncated checkpoint at byte {}",
                self.path.display(),
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Reads every tensor. Only 2-d tensors are supported.
pub fn read_tensors(path: &Path) -> Result<Vec<(String, Array2<f64>)>> {
    let mut bytes = Vec::new();
    File::open(path)
        .map(BufReader::new)
        .and_then(|mut r| r.read_to_end(&mut bytes))
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let bad = |msg: String| Error::validation(format!("{}: {msg}", path.display()));
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
        path,
    };
    if cur.take(4)? != MAGIC {
        return Err(bad("not a checkpoint file".into()));
    }
    let version = cur.u64()?;
    if version != VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let count = cur.u64()?;
    let mut out = Vec::new();
    for _ in 0..count {
        let len = cur.u64()? as usize;
        let name = String::from_utf8(cur.take(len)?.to_vec())
            .map_err(|_| bad("tensor name is not UTF-8".into()))?;
        let ndim = cur.u64()?;
        if ndim != 2 {
            return Err(bad(format!("tensor `{name}` has {ndim} dims, expected 2")));
        }
        let rows = cur.u64()? as usize;
        let cols = cur.u64()? as usize;
        let count = rows
            .checked_mul(cols)
            .ok_or_else(|| bad(format!("tensor `{name}` is too large")))?;
        let raw = cur.take(count.checked_mul(8).ok_or_else(|| bad("overflow".into()))?)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Array2::from_shape_vec((rows, cols), values).expect("length checked");
        out.push((name, t));
    }
    Ok(out)
}
