//! `HSRW` weight files: magic, `u32` version, `u32` tensor count, then per
//! tensor a `u32` name length, the UTF-8 name, a `u32` rank, `u32` dims and
//! little-endian `f32` values.

use crate::error::{Error, Result};
use crate::tensor::{ParamStore, Tensor};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"HSRW";
pub const WEIGHTS_VERSION: u32 = 1;
const MAX_RANK: u32 = 8;
const MAX_NAME: u32 = 4096;

pub fn write_weights(params: &ParamStore, mut w: impl Write) -> std::io::Result<()> {
    w.write_all(WEIGHTS_MAGIC)?;
    w.write_all(&WEIGHTS_VERSION.to_le_bytes())?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, t) in params.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(t.len() * 4);
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()
}

pub fn save_weights(params: &ParamStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_weights(params, BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| Error::Format(format!("weight file truncated while reading {what}")))?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_weights(mut r: impl Read) -> Result<ParamStore> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("weight file too short for its header".into()))?;
    if &magic != WEIGHTS_MAGIC {
        return Err(Error::Format(format!("bad weight file magic {magic:?}")));
    }
    let version = read_u32(&mut r, "version")?;
    if version != WEIGHTS_VERSION {
        return Err(Error::Format(format!("unsupported weight file version {version}")));
    }
    let count = read_u32(&mut r, "tensor count")?;
    let mut params = ParamStore::new();
    for i in 0..count {
        let len = read_u32(&mut r, &format!("name length of tensor {i}"))?;
        if len > MAX_NAME {
            return Err(Error::Format(format!("tensor {i} name length {len} is implausible")));
        }
        let mut name = vec![0u8; len as usize];
        r.read_exact(&mut name)
            .map_err(|_| Error::Format(format!("weight file truncated in name of tensor {i}")))?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Format(format!("tensor {i} name is not UTF-8")))?;
        let rank = read_u32(&mut r, &format!("rank of {name}"))?;
        if rank > MAX_RANK {
            return Err(Error::Format(format!("tensor {name} has implausible rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank as usize);
        for _ in 0..rank {
            shape.push(read_u32(&mut r, &format!("dims of {name}"))? as usize);
        }
        let n: usize = shape.iter().product();
        let mut bytes = vec![0u8; n * 4];
        r.read_exact(&mut bytes)
            .map_err(|_| Error::Format(format!("weight file truncated in data of tensor {name}")))?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let t = Tensor::new(shape, data)?;
        if params.insert(name.clone(), t).is_some() {
            return Err(Error::Format(format!("tensor {name} appears twice")));
        }
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra).map_err(|e| Error::Format(e.to_string()))? != 0 {
        return Err(Error::Format("trailing bytes after the last tensor".into()));
    }
    Ok(params)
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<ParamStore> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_weights(BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::refnet::{build_refnet, RefNetConfig};

    fn bytes(p: &ParamStore) -> Vec<u8> {
        let mut v = Vec::new();
        write_weights(p, &mut v).unwrap();
        v
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let net = build_refnet(&RefNetConfig::small(4, 2), 9).unwrap();
        let b = bytes(net.network.params());
        let back = read_weights(b.as_slice()).unwrap();
        assert_eq!(&back, net.network.params());
        assert_eq!(bytes(&back), b);
    }

    #[test]
    fn header_layout() {
        let mut p = ParamStore::new();
        p.insert("ab", Tensor::new(vec![2], vec![1.0, -2.0]).unwrap());
        let b = bytes(&p);
        let mut expect = b"HSRW".to_vec();
        for v in [1u32, 1, 2] {
            expect.extend_from_slice(&v.to_le_bytes());
        }
        expect.extend_from_slice(b"ab");
        for v in [1u32, 2] {
            expect.extend_from_slice(&v.to_le_bytes());
        }
        expect.extend_from_slice(&1f32.to_le_bytes());
        expect.extend_from_slice(&(-2f32).to_le_bytes());
        assert_eq!(b, expect);
    }

    #[test]
    fn rejects_corruption() {
        let net = build_refnet(&RefNetConfig::small(2, 1), 0).unwrap();
        let b = bytes(net.network.params());
        assert!(matches!(read_weights(&b[..b.len() - 3]), Err(Error::Format(_))));
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(matches!(read_weights(bad.as_slice()), Err(Error::Format(_))));
        let mut bad = b.clone();
        bad[4] = 2;
        assert!(matches!(read_weights(bad.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn shape_mismatch_names_tensor() {
        let mut small = build_refnet(&RefNetConfig::small(2, 1), 0).unwrap();
        let other = build_refnet(&RefNetConfig::small(3, 1), 0).unwrap();
        match small.network.load_params(other.network.params().clone()) {
            Err(Error::Format(m)) => assert!(m.contains("in.w"), "{m}"),
            r => panic!("{r:?}"),
        }
    }
}
