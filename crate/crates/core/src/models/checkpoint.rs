//! Binary checkpoint format, all integers little-endian:
//!
//! ```text
//! "EAKD"  u32 version  u32 tensor_count
//! per tensor: u16 name_len, name (UTF-8), u8 rank, rank x u64 dims, f64 data (row-major)
//! ```

use std::fs;
use std::path::Path;

use super::ModelParams;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"EAKD";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint(params: &ModelParams) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(12 + params.parameter_count() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let count = u32::try_from(params.named().len())
        .map_err(|_| Error::contract("too many tensors for a checkpoint"))?;
    out.extend_from_slice(&count.to_le_bytes());
    for (name, t) in params.named() {
        let name_len = u16::try_from(name.len())
            .map_err(|_| Error::contract(format!("tensor name {name:?} too long")))?;
        let rank = u8::try_from(t.rank())
            .map_err(|_| Error::contract(format!("tensor {name} has too many dimensions")))?;
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(rank);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    let bytes = write_checkpoint(params)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes, &path.display().to_string())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    source: &'a str,
}

impl<'a> Reader<'a> {
    fn err(&self, at: usize, msg: impl Into<String>) -> Error {
        Error::format(self.source, at as u64, msg)
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.err(
                self.pos,
                format!("truncated while reading {what} ({n} bytes needed, {} left)", self.bytes.len() - self.pos),
            )),
        }
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }
}

pub fn read_checkpoint(bytes: &[u8], source: &str) -> Result<ModelParams> {
    let mut r = Reader { bytes, pos: 0, source };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(r.err(0, format!("bad magic {magic:02x?}, expected \"EAKD\"")));
    }
    let version = u32::from_le_bytes(r.array("version")?);
    if version != CHECKPOINT_VERSION {
        return Err(r.err(4, format!("unsupported version {version}, expected {CHECKPOINT_VERSION}")));
    }
    let count = u32::from_le_bytes(r.array("tensor count")?);
    let mut tensors = Vec::new();
    for _ in 0..count {
        let name_len = u16::from_le_bytes(r.array("name length")?) as usize;
        let name_at = r.pos;
        let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
            .map_err(|_| r.err(name_at, "tensor name is not UTF-8"))?
            .to_owned();
        let rank = r.array::<1>("rank")?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let at = r.pos;
            let d = u64::from_le_bytes(r.array("dimension")?);
            shape.push(usize::try_from(d).map_err(|_| r.err(at, format!("dimension {d} too large")))?);
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| r.err(r.pos, format!("tensor {name} is too large")))?;
        let raw = r.take(
            numel.checked_mul(8).ok_or_else(|| r.err(r.pos, "tensor too large"))?,
            &format!("data of {name}"),
        )?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        tensors.push((name, Tensor::new(shape, data)?));
    }
    if r.pos != bytes.len() {
        return Err(r.err(r.pos, format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(ModelParams::from_named(tensors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{init, MlpSpec};

    fn sample() -> ModelParams {
        init(&MlpSpec::new(3, vec![4], 2).unwrap(), 11)
    }

    #[test]
    fn round_trip_is_bitwise() {
        let mut p = sample();
        // awkward values survive too
        p.tensors_mut().next().unwrap().data_mut()[0] = -0.0;
        p.tensors_mut().next().unwrap().data_mut()[1] = f64::MIN_POSITIVE / 3.0;
        let bytes = write_checkpoint(&p).unwrap();
        let q = read_checkpoint(&bytes, "mem").unwrap();
        for ((na, a), (nb, b)) in p.named().iter().zip(q.named()) {
            assert_eq!(na, nb);
            assert_eq!(a.shape(), b.shape());
            let bits_a: Vec<u64> = a.data().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = b.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
    }

    #[test]
    fn header_layout() {
        let bytes = write_checkpoint(&sample()).unwrap();
        assert_eq!(&bytes[..4], b"EAKD");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &4u32.to_le_bytes());
        // first name: "layer0.weight"
        assert_eq!(&bytes[12..14], &13u16.to_le_bytes());
        assert_eq!(&bytes[14..27], b"layer0.weight");
        assert_eq!(bytes[27], 2);
        assert_eq!(&bytes[28..36], &3u64.to_le_bytes());
    }

    #[test]
    fn bad_magic() {
        let mut bytes = write_checkpoint(&sample()).unwrap();
        bytes[0] = b'X';
        let err = read_checkpoint(&bytes, "mem").unwrap_err();
        assert!(matches!(err, Error::Format { offset: 0, .. }), "{err}");
    }

    #[test]
    fn version_mismatch() {
        let mut bytes = write_checkpoint(&sample()).unwrap();
        bytes[4] = 9;
        let err = read_checkpoint(&bytes, "mem").unwrap_err();
        assert!(matches!(err, Error::Format { offset: 4, .. }), "{err}");
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = write_checkpoint(&sample()).unwrap();
        let cut = &bytes[..bytes.len() - 3];
        match read_checkpoint(cut, "mem").unwrap_err() {
            Error::Format { offset, message, .. } => {
                assert!(offset as usize <= cut.len());
                assert!(message.contains("truncated"), "{message}");
            }
            e => panic!("unexpected {e}"),
        }
        assert!(matches!(read_checkpoint(&[], "mem"), Err(Error::Format { offset: 0, .. })));
    }
}
