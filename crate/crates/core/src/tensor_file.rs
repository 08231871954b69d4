//! DIMT: a minimal little-endian tensor container.
//!
//! Layout (all integers little-endian):
//!
//! | field   | size          | value                              |
//! |---------|---------------|------------------------------------|
//! | magic   | 4             | `b"DIMT"`                          |
//! | version | 4 (u32)       | `1`                                |
//! | ndim    | 4 (u32)       | number of dimensions               |
//! | dims    | ndim × 8 (u64)| extent of each dimension           |
//! | dtype   | 1 (u8)        | `1` = f32, `2` = i32               |
//! | payload | 4 × Π dims    | row-major values                   |

use std::path::Path;

use ndarray::{ArrayD, IxDyn};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DIMT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum DType {
    F32 = 1,
    I32 = 2,
}

impl DType {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(DType::F32),
            2 => Some(DType::I32),
            _ => None,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TensorFileError {
    #[error("bad magic {0:02x?}, expected \"DIMT\"")]
    BadMagic([u8; 4]),
    #[error("unsupported version {found}, expected {VERSION}")]
    VersionMismatch { found: u32 },
    #[error("truncated: needed {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },
    #[error("unknown dtype code {0}")]
    UnknownDtype(u8),
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("element count overflows")]
    Overflow,
    #[error("expected dtype {expected:?}, file holds {found:?}")]
    DtypeMismatch { expected: DType, found: DType },
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(ArrayD<f32>),
    I32(ArrayD<i32>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::I32(_) => DType::I32,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            TensorData::F32(a) => a.shape(),
            TensorData::I32(a) => a.shape(),
        }
    }

    pub fn into_f32(self) -> Result<ArrayD<f32>, TensorFileError> {
        match self {
            TensorData::F32(a) => Ok(a),
            other => Err(TensorFileError::DtypeMismatch {
                expected: DType::F32,
                found: other.dtype(),
            }),
        }
    }

    pub fn into_i32(self) -> Result<ArrayD<i32>, TensorFileError> {
        match self {
            TensorData::I32(a) => Ok(a),
            other => Err(TensorFileError::DtypeMismatch {
                expected: DType::I32,
                found: other.dtype(),
            }),
        }
    }
}

impl From<ArrayD<f32>> for TensorData {
    fn from(a: ArrayD<f32>) -> Self {
        TensorData::F32(a)
    }
}

impl From<ArrayD<i32>> for TensorData {
    fn from(a: ArrayD<i32>) -> Self {
        TensorData::I32(a)
    }
}

pub fn encode(data: &TensorData) -> Vec<u8> {
    let shape = data.shape();
    let count: usize = shape.iter().product();
    let mut out = Vec::with_capacity(13 + 8 * shape.len() + 4 * count);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &d in shape {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    out.push(data.dtype().code());
    match data {
        TensorData::F32(a) => a.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        TensorData::I32(a) => a.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TensorFileError> {
        let end = self.pos.checked_add(n).ok_or(TensorFileError::Overflow)?;
        if end > self.bytes.len() {
            return Err(TensorFileError::Truncated {
                needed: end,
                found: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, TensorFileError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, TensorFileError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<TensorData, TensorFileError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if &magic != MAGIC {
        return Err(TensorFileError::BadMagic(magic));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(TensorFileError::VersionMismatch { found: version });
    }
    let ndim = r.u32()? as usize;
    let mut shape = Vec::with_capacity(ndim.min(64));
    for _ in 0..ndim {
        shape.push(usize::try_from(r.u64()?).map_err(|_| TensorFileError::Overflow)?);
    }
    let code = r.take(1)?[0];
    let dtype = DType::from_code(code).ok_or(TensorFileError::UnknownDtype(code))?;
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or(TensorFileError::Overflow)?;
    let payload = r.take(count.checked_mul(4).ok_or(TensorFileError::Overflow)?)?;
    if r.pos != bytes.len() {
        return Err(TensorFileError::TrailingBytes(bytes.len() - r.pos));
    }
    let words = payload.chunks_exact(4).map(|c| <[u8; 4]>::try_from(c).unwrap());
    let dim = IxDyn(&shape);
    Ok(match dtype {
        DType::F32 => TensorData::F32(
            ArrayD::from_shape_vec(dim, words.map(f32::from_le_bytes).collect()).unwrap(),
        ),
        DType::I32 => TensorData::I32(
            ArrayD::from_shape_vec(dim, words.map(i32::from_le_bytes).collect()).unwrap(),
        ),
    })
}

pub fn save_tensor_file(path: impl AsRef<Path>, data: &TensorData) -> Result<()> {
    std::fs::write(path, encode(data))?;
    Ok(())
}

pub fn load_tensor_file(path: impl AsRef<Path>) -> Result<TensorData> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    decode(&bytes).map_err(|source| Error::TensorFile {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_f32(path: impl AsRef<Path>) -> Result<ArrayD<f32>> {
    let path = path.as_ref();
    load_tensor_file(path)?
        .into_f32()
        .map_err(|source| Error::TensorFile {
            path: path.to_path_buf(),
            source,
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr2, Array};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_by_three_f32_layout() {
        let a = arr2(&[[1f32, 2., 3.], [4., 5., 6.]]).into_dyn();
        let bytes = encode(&a.clone().into());
        assert_eq!(bytes.len(), 4 + 4 + 4 + 2 * 8 + 1 + 24);
        assert_eq!(&bytes[..4], b"DIMT");
        assert_eq!(bytes[28], 1);
        assert_eq!(&bytes[29..33], &1f32.to_le_bytes());
        assert_eq!(decode(&bytes).unwrap(), TensorData::F32(a));
    }

    #[test]
    fn int32_zero_round_trip() {
        let a = ArrayD::<i32>::zeros(IxDyn(&[1, 1]));
        let bytes = encode(&a.clone().into());
        assert_eq!(bytes[4 + 4 + 4 + 16], 2);
        assert_eq!(decode(&bytes).unwrap().into_i32().unwrap(), a);
    }

    #[test]
    fn repeated_saves_are_byte_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Array::from_shape_fn((100, 56), |_| rng.gen::<f32>()).into_dyn();
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.dimt"), dir.path().join("b.dimt"));
        save_tensor_file(&p1, &a.clone().into()).unwrap();
        save_tensor_file(&p2, &a.clone().into()).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        assert_eq!(load_f32(&p1).unwrap(), a);
    }

    #[test]
    fn parse_errors_are_distinct() {
        let good = encode(&TensorData::F32(arr2(&[[1f32, 2.]]).into_dyn()));

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(TensorFileError::BadMagic(_))));

        let mut bad = good.clone();
        bad[4] = 2;
        assert_eq!(decode(&bad), Err(TensorFileError::VersionMismatch { found: 2 }));

        let bad = &good[..good.len() - 1];
        assert!(matches!(decode(bad), Err(TensorFileError::Truncated { .. })));
        assert!(matches!(decode(&good[..6]), Err(TensorFileError::Truncated { .. })));

        let mut bad = good.clone();
        bad[4 + 4 + 4 + 16] = 9;
        assert_eq!(decode(&bad), Err(TensorFileError::UnknownDtype(9)));

        let mut bad = good.clone();
        bad.push(0);
        assert_eq!(decode(&bad), Err(TensorFileError::TrailingBytes(1)));
    }

    #[test]
    fn nan_payload_preserves_bits() {
        let v = f32::from_bits(0x7fc0_1234);
        let a = ArrayD::from_shape_vec(IxDyn(&[1]), vec![v]).unwrap();
        let back = decode(&encode(&a.into())).unwrap().into_f32().unwrap();
        assert_eq!(back[[0]].to_bits(), 0x7fc0_1234);
    }
}
