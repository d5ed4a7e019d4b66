//! Little-endian binary readers/writers shared by all persisted artifacts
//! (index, tagger model, entailment model, retrieval cache).
//!
//! Every artifact starts with a 4-byte magic and a u32 format version.
//! Floats are stored as raw IEEE-754 bits so save/load round-trips are
//! bit-exact.

use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

pub struct BinWriter<W: Write> {
    w: W,
}

impl<W: Write> BinWriter<W> {
    pub fn new(mut w: W, magic: &[u8; 4], version: u32) -> std::io::Result<Self> {
        w.write_all(magic)?;
        w.write_all(&version.to_le_bytes())?;
        Ok(BinWriter { w })
    }

    pub fn u32(&mut self, v: u32) -> std::io::Result<()> {
        self.w.write_all(&v.to_le_bytes())
    }

    pub fn u64(&mut self, v: u64) -> std::io::Result<()> {
        self.w.write_all(&v.to_le_bytes())
    }

    pub fn f64(&mut self, v: f64) -> std::io::Result<()> {
        self.w.write_all(&v.to_bits().to_le_bytes())
    }

    pub fn bytes(&mut self, v: &[u8]) -> std::io::Result<()> {
        self.w.write_all(v)
    }

    pub fn str(&mut self, s: &str) -> std::io::Result<()> {
        self.u64(s.len() as u64)?;
        self.w.write_all(s.as_bytes())
    }

    pub fn f64_slice(&mut self, v: &[f64]) -> std::io::Result<()> {
        self.u64(v.len() as u64)?;
        for x in v {
            self.f64(*x)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> std::io::Result<()> {
        self.w.flush()
    }
}

pub struct BinReader<R: Read> {
    r: R,
    path: std::path::PathBuf,
}

impl<R: Read> BinReader<R> {
    /// Opens a reader and checks magic + version. `path` is only used for
    /// error messages.
    pub fn new(mut r: R, path: &Path, magic: &[u8; 4], version: u32) -> Result<Self> {
        let mut got = [0u8; 4];
        r.read_exact(&mut got)
            .map_err(|e| Error::persist(path, format!("missing header: {e}")))?;
        if &got != magic {
            return Err(Error::persist(
                path,
                format!("bad magic {:?}, expected {:?}", got, magic),
            ));
        }
        let mut reader = BinReader {
            r,
            path: path.to_path_buf(),
        };
        let got_version = reader.u32()?;
        if got_version != version {
            return Err(Error::persist(
                path,
                format!("unsupported format version {got_version}, expected {version}"),
            ));
        }
        Ok(reader)
    }

    fn fill(&mut self, buf: &mut [u8]) -> Result<()> {
        self.r
            .read_exact(buf)
            .map_err(|e| Error::persist(&self.path, format!("truncated file: {e}")))
    }

    pub fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.fill(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    pub fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.fill(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    pub fn f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.fill(&mut b)?;
        Ok(f64::from_bits(u64::from_le_bytes(b)))
    }

    pub fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut b = vec![0u8; n];
        self.fill(&mut b)?;
        Ok(b)
    }

    pub fn str(&mut self) -> Result<String> {
        let len = self.len_checked()?;
        let b = self.bytes(len)?;
        String::from_utf8(b).map_err(|e| Error::persist(&self.path, format!("bad utf-8: {e}")))
    }

    pub fn f64_vec(&mut self) -> Result<Vec<f64>> {
        let len = self.len_checked()?;
        let mut v = Vec::with_capacity(len);
        for _ in 0..len {
            v.push(self.f64()?);
        }
        Ok(v)
    }

    /// Length prefix with a sanity cap so corrupt files fail fast instead of
    /// attempting huge allocations.
    fn len_checked(&mut self) -> Result<usize> {
        let len = self.u64()?;
        if len > (1 << 33) {
            return Err(Error::persist(
                &self.path,
                format!("implausible length field {len}"),
            ));
        }
        Ok(len as usize)
    }

    pub fn error(&self, message: impl Into<String>) -> Error {
        Error::persist(&self.path, message)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_float_bits() {
        let mut buf = Vec::new();
        {
            let mut w = BinWriter::new(&mut buf, b"TEST", 1).unwrap();
            w.f64(0.1 + 0.2).unwrap();
            w.str("hello").unwrap();
            w.f64_slice(&[f64::MIN_POSITIVE, -0.0, 1.5e300]).unwrap();
            w.finish().unwrap();
        }
        let mut r = BinReader::new(&buf[..], Path::new("mem"), b"TEST", 1).unwrap();
        assert_eq!(r.f64().unwrap().to_bits(), (0.1f64 + 0.2).to_bits());
        assert_eq!(r.str().unwrap(), "hello");
        let v = r.f64_vec().unwrap();
        assert_eq!(v[0].to_bits(), f64::MIN_POSITIVE.to_bits());
        assert_eq!(v[1].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn bad_magic_is_a_persist_error() {
        let buf = b"NOPE\x01\x00\x00\x00".to_vec();
        let err = BinReader::new(&buf[..], Path::new("mem"), b"TEST", 1).unwrap_err();
        assert!(matches!(err, Error::Persist { .. }));
    }

    #[test]
    fn wrong_version_rejected() {
        let mut buf = Vec::new();
        BinWriter::new(&mut buf, b"TEST", 2).unwrap().finish().unwrap();
        let err = BinReader::new(&buf[..], Path::new("mem"), b"TEST", 1).unwrap_err();
        assert!(err.to_string().contains("version"));
    }
}
