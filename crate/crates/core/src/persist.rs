//! Little-endian binary containers with a magic header and version.
//!
//! Layout: 8-byte magic, `u32` version, then a sequence of fields written by
//! [`Writer`]. Floats are stored as raw IEEE bits.

use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const VERSION: u32 = 1;

pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 8]) -> Self {
        let mut buf = Vec::with_capacity(1024);
        buf.extend_from_slice(magic);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        Writer { buf }
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_bits().to_le_bytes());
    }

    pub fn scalar<T: Scalar>(&mut self, v: T) {
        v.write_le(&mut self.buf);
    }

    pub fn scalars<T: Scalar>(&mut self, vs: &[T]) {
        self.u64(vs.len() as u64);
        for v in vs {
            v.write_le(&mut self.buf);
        }
    }

    pub fn u64s(&mut self, vs: &[u64]) {
        self.u64(vs.len() as u64);
        for v in vs {
            self.u64(*v);
        }
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }

    pub fn write_to(self, path: &Path) -> Result<()> {
        std::fs::write(path, self.buf)?;
        Ok(())
    }
}

pub struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8], magic: &[u8; 8], what: &'static str) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..8] != magic {
            return Err(Error::Format(format!("{what}: bad magic header")));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Format(format!(
                "{what}: unsupported version {version} (expected {VERSION})"
            )));
        }
        Ok(Reader {
            bytes,
            pos: 12,
            what,
        })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format(format!("{}: truncated at byte {}", self.what, self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| Error::Format(format!("{}: length overflow", self.what)))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    pub fn scalar<T: Scalar>(&mut self) -> Result<T> {
        Ok(T::read_le(self.take(T::BYTES)?))
    }

    pub fn scalars<T: Scalar>(&mut self) -> Result<Vec<T>> {
        let n = self.usize()?;
        let raw = self.take(n.checked_mul(T::BYTES).ok_or_else(|| {
            Error::Format(format!("{}: length overflow", self.what))
        })?)?;
        Ok(raw.chunks_exact(T::BYTES).map(T::read_le).collect())
    }

    pub fn u64s(&mut self) -> Result<Vec<u64>> {
        let n = self.usize()?;
        let raw = self.take(n.checked_mul(8).ok_or_else(|| {
            Error::Format(format!("{}: length overflow", self.what))
        })?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn expect_len(&self, got: usize, want: usize, field: &str) -> Result<()> {
        if got != want {
            return Err(Error::Format(format!(
                "{}: field {field} has length {got}, expected {want}",
                self.what
            )));
        }
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format(format!(
                "{}: {} trailing bytes",
                self.what,
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    match std::fs::read(path) {
        Ok(b) => Ok(b),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Err(Error::MissingModel(path.to_path_buf()))
        }
        Err(e) => Err(e.into()),
    }
}
