//! Named-tensor container.
//!
//! Layout (little-endian): magic `ASCKPT1\0`, vocabulary hash `u64`, element
//! width `u8` (4 or 8), tensor count `u32`, then per tensor: name length
//! `u32`, UTF-8 name, rank `u32`, dims as `u64`, data.

use std::io::{Read, Write};

use crate::error::{AutogradError, Result};
use crate::real::Real;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ASCKPT1\0";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<F> {
    pub vocab_hash: u64,
    pub tensors: Vec<(String, Tensor<F>)>,
}

pub fn write_checkpoint<F: Real, W: Write>(w: &mut W, ckpt: &Checkpoint<F>) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&ckpt.vocab_hash.to_le_bytes());
    buf.push(F::BYTES as u8);
    buf.extend_from_slice(&(ckpt.tensors.len() as u32).to_le_bytes());
    for (name, t) in &ckpt.tensors {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            v.write_le(&mut buf);
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(AutogradError::Checkpoint(format!(
                "truncated at byte {} (need {n} more)",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Reads a checkpoint, converting stored elements to `F`.
pub fn read_checkpoint<F: Real, R: Read>(r: &mut R) -> Result<Checkpoint<F>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    if c.take(8)? != CHECKPOINT_MAGIC {
        return Err(AutogradError::Checkpoint("bad magic".into()));
    }
    let vocab_hash = c.u64()?;
    let width = c.take(1)?[0] as usize;
    if width != 4 && width != 8 {
        return Err(AutogradError::Checkpoint(format!("element width {width}")));
    }
    let count = c.u32()? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let len = c.u32()? as usize;
        let name = String::from_utf8(c.take(len)?.to_vec())
            .map_err(|e| AutogradError::Checkpoint(e.to_string()))?;
        let rank = c.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(c.u64()? as usize);
        }
        let n: usize = shape.iter().product();
        let raw = c.take(n * width)?;
        let data = raw
            .chunks(width)
            .map(|b| match width {
                4 => F::from_f64(f32::read_le(b) as f64),
                _ => F::from_f64(f64::read_le(b)),
            })
            .collect();
        tensors.push((name, Tensor::new(shape, data)?));
    }
    if c.pos != bytes.len() {
        return Err(AutogradError::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - c.pos
        )));
    }
    Ok(Checkpoint {
        vocab_hash,
        tensors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_f32() {
        let ckpt = Checkpoint {
            vocab_hash: 0xdead_beef,
            tensors: vec![
                ("a".to_string(), Tensor::<f32>::matrix(2, 2, vec![1.0, -2.5, 3.25, 0.0]).unwrap()),
                ("b".to_string(), Tensor::<f32>::new(vec![3], vec![0.5, 0.25, 0.125]).unwrap()),
            ],
        };
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &ckpt).unwrap();
        assert_eq!(&buf[..8], CHECKPOINT_MAGIC);
        let back: Checkpoint<f32> = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(back, ckpt);
    }

    #[test]
    fn truncated_is_error() {
        let ckpt = Checkpoint {
            vocab_hash: 1,
            tensors: vec![("w".to_string(), Tensor::<f64>::scalar(1.0))],
        };
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &ckpt).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_checkpoint::<f64, _>(&mut buf.as_slice()).is_err());
    }
}
