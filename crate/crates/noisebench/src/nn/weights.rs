//! Checksummed binary weight container.
//!
//! Layout: magic `NRWT` | u32-LE version (1) | u32-LE tensor count | per
//! tensor: u16-LE name length, UTF-8 name, u8 dtype (0 = f32, 1 = f64),
//! u8 ndim, ndim u32-LE dims, row-major little-endian payload | u32-LE
//! CRC32 (IEEE) of every preceding byte. The checksum is verified before
//! any tensor is materialized.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result, WeightsError};
use crate::tensor::{Dtype, Scalar, Tensor};

const MAGIC: [u8; 4] = *b"NRWT";
const VERSION: u32 = 1;

/// CRC32 (IEEE 802.3, reflected, init/xorout 0xFFFFFFFF).
pub(crate) fn crc32(bytes: &[u8]) -> u32 {
    const TABLE: [u32; 256] = {
        let mut table = [0u32; 256];
        let mut i = 0;
        while i < 256 {
            let mut c = i as u32;
            let mut k = 0;
            while k < 8 {
                c = if c & 1 != 0 { 0xEDB8_8320 ^ (c >> 1) } else { c >> 1 };
                k += 1;
            }
            table[i] = c;
            i += 1;
        }
        table
    };
    let mut crc = 0xFFFF_FFFFu32;
    for &b in bytes {
        crc = TABLE[((crc ^ b as u32) & 0xFF) as usize] ^ (crc >> 8);
    }
    !crc
}

/// A tensor as stored on disk, before committing to a scalar type.
#[derive(Debug, Clone)]
pub struct RawTensor {
    pub name: String,
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    /// Raw little-endian payload, `dtype` wide per element.
    pub payload: Vec<u8>,
}

impl RawTensor {
    /// Decodes the payload, erroring when the stored dtype differs from
    /// `S`.
    pub fn decode<S: Scalar>(&self) -> Result<Tensor<S>> {
        if self.dtype != S::DTYPE {
            return Err(WeightsError::DtypeMismatch {
                name: self.name.clone(),
                found: self.dtype,
                expected: S::DTYPE,
            }
            .into());
        }
        let width = self.dtype.size();
        let data: Vec<S> = self.payload.chunks_exact(width).map(S::read_le).collect();
        Ok(Tensor::from_vec(&self.shape, data)?.with_name(&self.name))
    }
}

/// Serializes named tensors in map (lexicographic) order.
pub fn write_weight_file<S: Scalar>(
    path: &Path,
    tensors: &BTreeMap<String, Tensor<S>>,
) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, tensor) in tensors {
        if name.len() > u16::MAX as usize {
            return Err(Error::invalid(format!("tensor name too long: {} bytes", name.len())));
        }
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.push(S::DTYPE.byte());
        if tensor.shape().len() > u8::MAX as usize {
            return Err(Error::invalid("tensor rank exceeds format limit"));
        }
        buf.push(tensor.shape().len() as u8);
        for &d in tensor.shape() {
            if d > u32::MAX as usize {
                return Err(Error::invalid("tensor dimension exceeds format limit"));
            }
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in tensor.data() {
            v.write_le(&mut buf);
        }
    }
    let crc = crc32(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    fs::write(path, &buf).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], WeightsError> {
        if self.pos + n > self.bytes.len() {
            return Err(WeightsError::Truncated {
                offset: self.pos,
                needed: n,
                available: self.bytes.len() - self.pos,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self) -> std::result::Result<u16, WeightsError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> std::result::Result<u32, WeightsError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> std::result::Result<u8, WeightsError> {
        Ok(self.take(1)?[0])
    }
}

/// Reads every tensor in a weight file, in stored order.
pub fn read_weight_file(path: &Path) -> Result<Vec<RawTensor>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_weight_bytes(&bytes).map_err(Error::from)
}

fn parse_weight_bytes(bytes: &[u8]) -> std::result::Result<Vec<RawTensor>, WeightsError> {
    if bytes.len() < MAGIC.len() {
        return Err(WeightsError::Truncated {
            offset: 0,
            needed: MAGIC.len(),
            available: bytes.len(),
        });
    }
    if bytes[..4] != MAGIC {
        return Err(WeightsError::BadMagic { found: bytes[..4].try_into().unwrap() });
    }
    let mut cur = Cursor { bytes, pos: 4 };
    let version = cur.u32()?;
    if version != VERSION {
        return Err(WeightsError::UnsupportedVersion { found: version });
    }
    if bytes.len() < cur.pos + 4 {
        return Err(WeightsError::Truncated {
            offset: cur.pos,
            needed: 4,
            available: bytes.len() - cur.pos,
        });
    }
    let body_len = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[body_len..].try_into().unwrap());
    let computed = crc32(&bytes[..body_len]);
    if stored != computed {
        return Err(WeightsError::ChecksumMismatch { stored, computed });
    }
    let mut cur = Cursor { bytes: &bytes[..body_len], pos: cur.pos };
    let count = cur.u32()? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let name_offset = cur.pos;
        let name_len = cur.u16()? as usize;
        let name_bytes = cur.take(name_len)?;
        let name = std::str::from_utf8(name_bytes)
            .map_err(|_| WeightsError::BadName { offset: name_offset })?
            .to_string();
        let dtype = match Dtype::from_byte(cur.u8()?) {
            Some(d) => d,
            None => {
                return Err(WeightsError::BadDtype { name, found: bytes[cur.pos - 1] });
            }
        };
        let ndim = cur.u8()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(cur.u32()? as usize);
        }
        let elems: usize = shape.iter().product();
        let payload = cur.take(elems * dtype.size())?.to_vec();
        out.push(RawTensor { name, dtype, shape, payload });
    }
    if cur.pos != body_len {
        return Err(WeightsError::TrailingBytes { extra: body_len - cur.pos });
    }
    Ok(out)
}

/// Typed load: every stored tensor must match scalar type `S`.
pub(crate) fn load_params<S: Scalar>(path: &Path) -> Result<BTreeMap<String, Tensor<S>>> {
    let raw = read_weight_file(path)?;
    let mut out = BTreeMap::new();
    for rt in raw {
        let name = rt.name.clone();
        if out.insert(name.clone(), rt.decode::<S>()?).is_some() {
            return Err(Error::invalid(format!("duplicate tensor name {name:?} in weight file")));
        }
    }
    Ok(out)
}

impl<S: Scalar> crate::nn::Network<S> {
    /// Writes all parameters (buffers included) to a checksummed container.
    pub fn save_weights(&self, path: &Path) -> Result<()> {
        write_weight_file(path, self.params())
    }

    /// Replaces this network's parameters with the file's contents after
    /// validating names, shapes and dtype. On any error the network is
    /// left unchanged.
    pub fn load_weights(&mut self, path: &Path) -> Result<()> {
        let params = load_params::<S>(path)?;
        for (name, expected) in self.expected_param_shapes() {
            match params.get(&name) {
                None => return Err(WeightsError::MissingParam { name }.into()),
                Some(t) if t.shape() != expected.as_slice() => {
                    return Err(WeightsError::ShapeMismatch {
                        name,
                        found: t.shape().to_vec(),
                        expected,
                    }
                    .into())
                }
                Some(_) => {}
            }
        }
        if params.len() != self.params().len() {
            let name = params
                .keys()
                .find(|k| !self.params().contains_key(*k))
                .expect("length mismatch implies an unknown key")
                .clone();
            return Err(WeightsError::UnknownParam { name }.into());
        }
        *self.params_mut() = params;
        Ok(())
    }
}
