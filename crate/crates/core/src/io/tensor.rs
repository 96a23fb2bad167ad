//! Binary tensor container: `RHTC`, version u16, rank u16, dims u64 each,
//! dtype u8 (0 = f32, 1 = f64, 2 = u8), then the row-major payload. All
//! integers and floats are little-endian.

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"RHTC";
pub const VERSION: u16 = 1;
pub const MAX_RANK: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U8(Vec<u8>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
            TensorData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn tag(&self) -> u8 {
        match self {
            TensorData::F32(_) => 0,
            TensorData::F64(_) => 1,
            TensorData::U8(_) => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorContainer {
    pub dims: Vec<u64>,
    pub data: TensorData,
}

fn parse_err(msg: impl Into<String>) -> Error {
    Error::Parse(format!("tensor container: {}", msg.into()))
}

impl TensorContainer {
    pub fn new(dims: Vec<u64>, data: TensorData) -> Result<Self> {
        if dims.len() > MAX_RANK {
            return Err(Error::invalid(format!("rank {} exceeds {MAX_RANK}", dims.len())));
        }
        let n = dims
            .iter()
            .try_fold(1u64, |a, d| a.checked_mul(*d))
            .ok_or_else(|| Error::invalid("tensor size overflows"))?;
        if n != data.len() as u64 {
            return Err(Error::DimensionMismatch {
                what: "tensor payload",
                expected: n as usize,
                got: data.len(),
            });
        }
        Ok(Self { dims, data })
    }

    pub fn f32(dims: &[usize], data: Vec<f32>) -> Result<Self> {
        Self::new(dims.iter().map(|d| *d as u64).collect(), TensorData::F32(data))
    }

    pub fn f64(dims: &[usize], data: Vec<f64>) -> Result<Self> {
        Self::new(dims.iter().map(|d| *d as u64).collect(), TensorData::F64(data))
    }

    pub fn u8(dims: &[usize], data: Vec<u8>) -> Result<Self> {
        Self::new(dims.iter().map(|d| *d as u64).collect(), TensorData::U8(data))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(9 + 8 * self.dims.len() + 8 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u16).to_le_bytes());
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.push(self.data.tag());
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::U8(v) => out.extend_from_slice(v),
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[0..4] != MAGIC {
            return Err(parse_err("bad magic"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(parse_err(format!("unsupported version {version}")));
        }
        let rank = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
        if rank > MAX_RANK {
            return Err(parse_err(format!("rank {rank} exceeds {MAX_RANK}")));
        }
        let dims_end = 8 + 8 * rank;
        if bytes.len() < dims_end + 1 {
            return Err(parse_err("truncated header"));
        }
        let dims: Vec<u64> = bytes[8..dims_end]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let n = dims
            .iter()
            .try_fold(1u64, |a, d| a.checked_mul(*d))
            .ok_or_else(|| parse_err("size overflows"))?;
        let tag = bytes[dims_end];
        let payload = &bytes[dims_end + 1..];
        let elem = match tag {
            0 => 4,
            1 => 8,
            2 => 1,
            t => return Err(parse_err(format!("unknown dtype tag {t}"))),
        };
        if n.checked_mul(elem) != Some(payload.len() as u64) {
            return Err(parse_err(format!("payload is {} bytes, header implies {n} elements", payload.len())));
        }
        let data = match tag {
            0 => TensorData::F32(payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()),
            1 => TensorData::F64(payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()),
            _ => TensorData::U8(payload.to_vec()),
        };
        Ok(Self { dims, data })
    }

    pub fn write(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }

    pub fn dims_usize(&self) -> Vec<usize> {
        self.dims.iter().map(|d| *d as usize).collect()
    }

    pub fn into_f64(self) -> Result<Vec<f64>> {
        match self.data {
            TensorData::F64(v) => Ok(v),
            _ => Err(Error::invalid("expected an f64 tensor")),
        }
    }

    pub fn into_f32(self) -> Result<Vec<f32>> {
        match self.data {
            TensorData::F32(v) => Ok(v),
            _ => Err(Error::invalid("expected an f32 tensor")),
        }
    }

    pub fn into_u8(self) -> Result<Vec<u8>> {
        match self.data {
            TensorData::U8(v) => Ok(v),
            _ => Err(Error::invalid("expected a u8 tensor")),
        }
    }
}
