//! Binary formats for feature tensors and parameter checkpoints.
//!
//! Features: `b"FTEN"`, u16 version, u16 rank, rank x u64 extents, then f32
//! values row-major. Checkpoints: `b"UFCK"`, u16 version, u32 record count,
//! then per record a u32 name length, UTF-8 name, u8 trainable flag, u16
//! rank, rank x u64 extents and f64 values. All integers and floats are
//! little-endian.

use std::io::{Read, Write};

use crate::frontends::{FeatureTensor, ParamSet};
use crate::tensor::Tensor;
use crate::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"FTEN";
pub const FEATURE_VERSION: u16 = 1;
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"UFCK";
pub const CHECKPOINT_VERSION: u16 = 1;

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| Error::Format(format!("truncated input: {e}")))?;
    Ok(b)
}

fn read_u16(r: &mut impl Read) -> Result<u16> {
    Ok(u16::from_le_bytes(read_array(r)?))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    Ok(u64::from_le_bytes(read_array(r)?))
}

fn write_shape(w: &mut impl Write, shape: &[usize]) -> Result<()> {
    w.write_all(&(shape.len() as u16).to_le_bytes())?;
    for &d in shape {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    Ok(())
}

fn read_shape(r: &mut impl Read) -> Result<Vec<usize>> {
    let rank = read_u16(r)? as usize;
    (0..rank)
        .map(|_| {
            let d = read_u64(r)?;
            usize::try_from(d).map_err(|_| Error::Format(format!("extent {d} does not fit in memory")))
        })
        .collect()
}

fn checked_numel(shape: &[usize]) -> Result<usize> {
    shape
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| Error::Format(format!("shape {shape:?} overflows")))
}

fn expect_magic(r: &mut impl Read, magic: &[u8; 4], version: u16) -> Result<()> {
    let m: [u8; 4] = read_array(r)?;
    if &m != magic {
        return Err(Error::Format(format!("bad magic {m:?}, expected {magic:?}")));
    }
    let v = read_u16(r)?;
    if v != version {
        return Err(Error::Format(format!("unsupported version {v}")));
    }
    Ok(())
}

pub fn write_features(w: &mut impl Write, f: &FeatureTensor) -> Result<()> {
    w.write_all(FEATURE_MAGIC)?;
    w.write_all(&FEATURE_VERSION.to_le_bytes())?;
    write_shape(w, f.values().shape())?;
    for &v in f.values().data() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

/// Reads a feature file back as a tensor of any rank.
pub fn read_feature_tensor(r: &mut impl Read) -> Result<Tensor> {
    expect_magic(r, FEATURE_MAGIC, FEATURE_VERSION)?;
    let shape = read_shape(r)?;
    let n = checked_numel(&shape)?;
    let mut data = Vec::with_capacity(n.min(1 << 24));
    for _ in 0..n {
        data.push(f32::from_le_bytes(read_array(r)?) as f64);
    }
    Tensor::new(&shape, data)
}

pub fn write_checkpoint(w: &mut impl Write, params: &ParamSet) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for p in params.iter() {
        let name = p.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&[u8::from(p.trainable)])?;
        write_shape(w, p.value.shape())?;
        for &v in p.value.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<ParamSet> {
    expect_magic(r, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
    let count = read_u32(r)?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let len = read_u32(r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(|e| Error::Format(format!("truncated name: {e}")))?;
        let name = String::from_utf8(name).map_err(|_| Error::Format("parameter name is not UTF-8".into()))?;
        let trainable = match read_array::<1>(r)?[0] {
            0 => false,
            1 => true,
            b => return Err(Error::Format(format!("bad trainable flag {b} for {name}"))),
        };
        let shape = read_shape(r)?;
        let n = checked_numel(&shape)?;
        let mut data = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            data.push(f64::from_le_bytes(read_array(r)?));
        }
        if params.get(&name).is_some() {
            return Err(Error::Format(format!("duplicate parameter {name}")));
        }
        params.add(name, Tensor::new(&shape, data)?, trainable);
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_header_layout() {
        let f = FeatureTensor::new(Tensor::new(&[2, 3], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.5]).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_features(&mut buf, &f).unwrap();
        assert_eq!(&buf[..4], b"FTEN");
        assert_eq!(&buf[4..8], &[1, 0, 2, 0]);
        assert_eq!(&buf[8..16], &2u64.to_le_bytes());
        assert_eq!(&buf[16..24], &3u64.to_le_bytes());
        assert_eq!(buf.len(), 24 + 6 * 4);
        assert_eq!(&buf[44..48], &5.5f32.to_le_bytes());
        let back = read_feature_tensor(&mut buf.as_slice()).unwrap();
        assert_eq!(back.data(), f.values().data());
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut p = ParamSet::new();
        p.add("a.weight", Tensor::new(&[2, 2], vec![0.1, -1e-300, 3.0, f64::MAX]).unwrap(), true);
        p.add("fb.weight", Tensor::new(&[1], vec![7.0]).unwrap(), false);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &p).unwrap();
        assert_eq!(read_checkpoint(&mut buf.as_slice()).unwrap(), p);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        assert!(matches!(read_checkpoint(&mut &b"NOPE\x01\x00"[..]), Err(Error::Format(_))));
        let mut p = ParamSet::new();
        p.add("w", Tensor::new(&[3], vec![1.0, 2.0, 3.0]).unwrap(), true);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &p).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_checkpoint(&mut buf.as_slice()), Err(Error::Format(_))));
    }
}
