//! RVL1 binary volume format.
//!
//! ```text
//! offset  size        field
//! 0       4           magic "RVL1"
//! 4       1           dtype (0 = f32, 1 = u8)
//! 5       1           ndim (2 or 3)
//! 6       4 * ndim    dims, u32 little-endian, slowest axis first
//! ...     payload     row-major voxels, f32 little-endian or u8
//! ```
//!
//! f32 payloads widen to f64 on read and narrow on write, so a file survives
//! a read/write cycle bit-exactly.

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Shape, Volume};

pub const MAGIC: [u8; 4] = *b"RVL1";
pub const DTYPE_F32: u8 = 0;
pub const DTYPE_U8: u8 = 1;

/// Decoded contents of an RVL1 file.
#[derive(Debug, Clone, PartialEq)]
pub enum RvlData {
    Scalar(Volume),
    Mask(BinaryMask),
}

impl RvlData {
    pub fn shape(&self) -> &Shape {
        match self {
            RvlData::Scalar(v) => v.shape(),
            RvlData::Mask(m) => m.shape(),
        }
    }

    /// Views the contents as a scalar volume, lifting masks to `{0, 1}`.
    pub fn into_volume(self) -> Volume {
        match self {
            RvlData::Scalar(v) => v,
            RvlData::Mask(m) => m.to_volume(),
        }
    }

    /// Views the contents as a mask; scalar volumes must already hold only 0 or 1.
    pub fn into_mask(self) -> Result<BinaryMask> {
        match self {
            RvlData::Mask(m) => Ok(m),
            RvlData::Scalar(v) => {
                let mut bits = Vec::with_capacity(v.len());
                for &x in v.data() {
                    match x {
                        x if x == 0.0 => bits.push(0),
                        x if x == 1.0 => bits.push(1),
                        _ => {
                            return Err(Error::InvalidConfig(format!(
                                "scalar volume value {x} cannot be read as a mask"
                            )))
                        }
                    }
                }
                BinaryMask::new(v.shape().clone(), bits)
            }
        }
    }
}

fn header(dtype: u8, shape: &Shape) -> Vec<u8> {
    let mut out = Vec::with_capacity(6 + 4 * shape.ndim());
    out.extend_from_slice(&MAGIC);
    out.push(dtype);
    out.push(shape.ndim() as u8);
    for &d in shape.dims() {
        let d = u32::try_from(d).expect("RVL1 dims are limited to u32");
        out.extend_from_slice(&d.to_le_bytes());
    }
    out
}

pub fn write_volume(volume: &Volume) -> Vec<u8> {
    let mut out = header(DTYPE_F32, volume.shape());
    out.reserve(volume.len() * 4);
    for &v in volume.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn write_mask(mask: &BinaryMask) -> Vec<u8> {
    let mut out = header(DTYPE_U8, mask.shape());
    out.extend_from_slice(mask.data());
    out
}

pub fn write(data: &RvlData) -> Vec<u8> {
    match data {
        RvlData::Scalar(v) => write_volume(v),
        RvlData::Mask(m) => write_mask(m),
    }
}

pub fn read_volume(bytes: &[u8]) -> Result<RvlData> {
    let fixed = bytes.get(..6).ok_or(Error::TruncatedPayload {
        expected: 6,
        actual: bytes.len(),
    })?;
    let magic: [u8; 4] = fixed[..4].try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let dtype = fixed[4];
    let elem = match dtype {
        DTYPE_F32 => 4,
        DTYPE_U8 => 1,
        other => return Err(Error::UnknownDtype(other)),
    };
    let ndim = fixed[5];
    if !(2..=3).contains(&ndim) {
        return Err(Error::BadDimensionality(ndim));
    }
    let header_len = 6 + 4 * ndim as usize;
    let dim_bytes = bytes.get(6..header_len).ok_or(Error::TruncatedPayload {
        expected: header_len,
        actual: bytes.len(),
    })?;
    let dims: Vec<usize> = dim_bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
        .collect();
    let shape = Shape::new(&dims)?;
    let payload = &bytes[header_len..];
    let expected = shape
        .len()
        .checked_mul(elem)
        .ok_or_else(|| Error::InvalidShape(dims.clone()))?;
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            actual: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::TrailingBytes(payload.len() - expected));
    }
    match dtype {
        DTYPE_F32 => {
            let data = payload
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
                .collect();
            Ok(RvlData::Scalar(Volume::new(shape, data)?))
        }
        _ => Ok(RvlData::Mask(BinaryMask::new(shape, payload.to_vec())?)),
    }
}
