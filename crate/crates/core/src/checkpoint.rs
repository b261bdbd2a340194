//! `RVWT` named-tensor container used for network and classifier-head weights.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "RVWT" | u32 spec code | u32 tensor count
//! per tensor: u16 name length | name bytes | u8 rank | rank x u32 dims | f32 payload
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const MAGIC: [u8; 4] = *b"RVWT";

/// Spec code written for classifier-head checkpoints.
pub const HEAD_SPEC_CODE: u32 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, data: Vec<f32>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        Self { name: name.into(), dims, data }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec_code: u32,
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Truncated(format!("missing tensor {name}")))
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&MAGIC)?;
        w.write_all(&self.spec_code.to_le_bytes())?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for t in &self.tensors {
            let name = t.name.as_bytes();
            let len = u16::try_from(name.len())
                .map_err(|_| Error::InvalidConfig(format!("tensor name too long: {}", t.name)))?;
            w.write_all(&len.to_le_bytes())?;
            w.write_all(name)?;
            w.write_all(&[t.dims.len() as u8])?;
            for &d in &t.dims {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            for &v in &t.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic, "header")?;
        if magic != MAGIC {
            return Err(Error::BadMagic { expected: MAGIC, found: magic });
        }
        let spec_code = read_u32(&mut r, "header")?;
        let count = read_u32(&mut r, "header")? as usize;
        let mut tensors = Vec::with_capacity(count.min(1 << 16));
        for i in 0..count {
            let ctx = format!("tensor {i}");
            let mut len = [0u8; 2];
            read_exact(&mut r, &mut len, &ctx)?;
            let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
            read_exact(&mut r, &mut name, &ctx)?;
            let name = String::from_utf8(name)
                .map_err(|_| Error::Truncated(format!("{ctx}: name is not utf-8")))?;
            let mut rank = [0u8; 1];
            read_exact(&mut r, &mut rank, &ctx)?;
            let dims = (0..rank[0])
                .map(|_| read_u32(&mut r, &ctx).map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = dims.iter().product();
            let mut bytes = vec![0u8; n * 4];
            read_exact(&mut r, &mut bytes, &ctx)?;
            let data = bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            tensors.push(Tensor { name, dims, data });
        }
        Ok(Self { spec_code, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        write_atomic(path, &buf)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], ctx: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Truncated(ctx.to_string()),
        _ => Error::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R, ctx: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, ctx)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_exact() {
        let ck = Checkpoint {
            spec_code: 34,
            tensors: vec![Tensor::new("w", vec![2], vec![1.0, -2.5])],
        };
        let mut bytes = Vec::new();
        ck.write(&mut bytes).unwrap();
        let mut expected = b"RVWT".to_vec();
        expected.extend(34u32.to_le_bytes());
        expected.extend(1u32.to_le_bytes());
        expected.extend(1u16.to_le_bytes());
        expected.push(b'w');
        expected.push(1);
        expected.extend(2u32.to_le_bytes());
        expected.extend(1.0f32.to_le_bytes());
        expected.extend((-2.5f32).to_le_bytes());
        assert_eq!(bytes, expected);
        assert_eq!(Checkpoint::read(bytes.as_slice()).unwrap(), ck);
    }

    #[test]
    fn bad_magic_and_truncation() {
        assert!(matches!(
            Checkpoint::read(&b"XXXX\0\0\0\0\0\0\0\0"[..]),
            Err(Error::BadMagic { .. })
        ));
        let ck = Checkpoint { spec_code: 0, tensors: vec![Tensor::new("a", vec![3], vec![0.0; 3])] };
        let mut bytes = Vec::new();
        ck.write(&mut bytes).unwrap();
        bytes.truncate(bytes.len() - 2);
        assert!(matches!(Checkpoint::read(bytes.as_slice()), Err(Error::Truncated(_))));
    }
}
