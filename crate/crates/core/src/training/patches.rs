//! Aligned reflectance patch pairs, the eight dihedral augmentations, and
//! the `HSRP` patch store.
//!
//! Store layout (little endian): magic `HSRP`, `u32` version, `u32` pair
//! count, `u32` LR patch size, `u32` HR patch size, `u32` source count and
//! the source names (`u32` length + UTF-8), then per pair a `(u32 source,
//! u32 augmentation)` index entry, then the raw `f32` data of every pair
//! (LR patch followed by HR patch).

use crate::error::{Error, Result};
use crate::image::Plane;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const LR_PATCH: usize = 48;
pub const HR_PATCH: usize = 96;
pub const LR_STRIDE: usize = 24;
pub const AUGMENTATIONS: u8 = 8;
pub const PATCH_STORE_MAGIC: &[u8; 4] = b"HSRP";
pub const PATCH_STORE_VERSION: u32 = 1;

/// Largest `f32` below 1; bounded reflectance is clamped to
/// `[-BOUND_LIMIT, BOUND_LIMIT]`.
pub const BOUND_LIMIT: f32 = 0.999_999_94;

/// Square LR/HR reflectance patches in the `tanh` domain.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchPair {
    pub r_ll: Vec<f32>,
    pub r_hh: Vec<f32>,
    pub source_id: u32,
    pub aug_id: u8,
}

/// Rotates an `n x n` row-major patch by `aug % 4` quarter turns
/// counter-clockwise, after a horizontal mirror when `aug >= 4`.
pub fn apply_dihedral(data: &[f32], n: usize, aug: u8) -> Vec<f32> {
    assert_eq!(data.len(), n * n, "patch is not {n}x{n}");
    let flip = aug >= 4;
    let turns = aug % 4;
    let mut out = vec![0f32; data.len()];
    for y in 0..n {
        for x in 0..n {
            // source of output pixel (y, x): undo the rotation, then the mirror
            let (mut sy, mut sx) = (y, x);
            for _ in 0..turns {
                // one counter-clockwise turn maps (r, c) -> (n-1-c, r)
                (sy, sx) = (sx, n - 1 - sy);
            }
            if flip {
                sx = n - 1 - sx;
            }
            out[y * n + x] = data[sy * n + sx];
        }
    }
    out
}

/// The augmentation that undoes `aug`.
pub fn inverse_dihedral(aug: u8) -> u8 {
    if aug >= 4 {
        aug
    } else {
        (4 - aug) % 4
    }
}

/// Top-left offsets of every whole `patch`-sized window on a `stride` grid.
pub fn grid_positions(len: usize, patch: usize, stride: usize) -> Vec<usize> {
    if len < patch || stride == 0 {
        return Vec::new();
    }
    (0..=(len - patch) / stride).map(|i| i * stride).collect()
}

/// Bounded reflectance as `f32`, clamped strictly inside `(-1, 1)`.
pub fn to_bounded_f32(plane: &Plane) -> Vec<f32> {
    plane
        .data()
        .iter()
        .map(|&v| (v as f32).clamp(-BOUND_LIMIT, BOUND_LIMIT))
        .collect()
}

fn crop_f32(plane: &Plane, y: usize, x: usize, n: usize) -> Result<Vec<f32>> {
    Ok(to_bounded_f32(&plane.crop(y, x, n, n)?))
}

/// Cuts aligned pairs from bounded LR and HR reflectance maps: an LR window
/// at `(y, x)` pairs with the HR window at `(2y, 2x)`. Pairs come out in
/// row-major grid order, eight augmentations each.
pub fn extract_patch_pairs(r_ll: &Plane, r_hh: &Plane, source_id: u32) -> Result<Vec<PatchPair>> {
    if r_hh.height() != 2 * r_ll.height() || r_hh.width() != 2 * r_ll.width() {
        return Err(Error::Shape(format!(
            "HR map {}x{} is not twice the LR map {}x{}",
            r_hh.height(),
            r_hh.width(),
            r_ll.height(),
            r_ll.width()
        )));
    }
    let mut out = Vec::new();
    for &y in &grid_positions(r_ll.height(), LR_PATCH, LR_STRIDE) {
        for &x in &grid_positions(r_ll.width(), LR_PATCH, LR_STRIDE) {
            let lr = crop_f32(r_ll, y, x, LR_PATCH)?;
            let hr = crop_f32(r_hh, 2 * y, 2 * x, HR_PATCH)?;
            for aug in 0..AUGMENTATIONS {
                out.push(PatchPair {
                    r_ll: apply_dihedral(&lr, LR_PATCH, aug),
                    r_hh: apply_dihedral(&hr, HR_PATCH, aug),
                    source_id,
                    aug_id: aug,
                });
            }
        }
    }
    Ok(out)
}

/// A set of patch pairs of one size, with the names of their source images.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchStore {
    lr_size: usize,
    hr_size: usize,
    sources: Vec<String>,
    pairs: Vec<PatchPair>,
}

impl PatchStore {
    pub fn new(lr_size: usize, hr_size: usize) -> Result<Self> {
        if lr_size == 0 || hr_size != 2 * lr_size {
            return Err(Error::Shape(format!("patch sizes {lr_size}/{hr_size} are not 1:2")));
        }
        Ok(Self { lr_size, hr_size, sources: Vec::new(), pairs: Vec::new() })
    }

    pub fn lr_size(&self) -> usize {
        self.lr_size
    }

    pub fn hr_size(&self) -> usize {
        self.hr_size
    }

    pub fn sources(&self) -> &[String] {
        &self.sources
    }

    pub fn pairs(&self) -> &[PatchPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Registers a source name and returns its id.
    pub fn add_source(&mut self, name: impl Into<String>) -> u32 {
        self.sources.push(name.into());
        (self.sources.len() - 1) as u32
    }

    pub fn push(&mut self, pair: PatchPair) -> Result<()> {
        if pair.r_ll.len() != self.lr_size * self.lr_size
            || pair.r_hh.len() != self.hr_size * self.hr_size
        {
            return Err(Error::Shape("patch pair does not match the store's patch sizes".into()));
        }
        if pair.source_id as usize >= self.sources.len() {
            return Err(Error::Data(format!("unknown source id {}", pair.source_id)));
        }
        if pair.aug_id >= AUGMENTATIONS {
            return Err(Error::Data(format!("augmentation id {} out of range", pair.aug_id)));
        }
        if let Some(v) = pair.r_ll.iter().chain(&pair.r_hh).find(|v| v.is_nan() || v.abs() >= 1.0) {
            return Err(Error::Range(format!("patch value {v} outside (-1, 1)")));
        }
        self.pairs.push(pair);
        Ok(())
    }

    pub fn write(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(PATCH_STORE_MAGIC)?;
        for v in [
            PATCH_STORE_VERSION,
            self.pairs.len() as u32,
            self.lr_size as u32,
            self.hr_size as u32,
            self.sources.len() as u32,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        for s in &self.sources {
            w.write_all(&(s.len() as u32).to_le_bytes())?;
            w.write_all(s.as_bytes())?;
        }
        for p in &self.pairs {
            w.write_all(&p.source_id.to_le_bytes())?;
            w.write_all(&(p.aug_id as u32).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity((self.lr_size.pow(2) + self.hr_size.pow(2)) * 4);
        for p in &self.pairs {
            buf.clear();
            for v in p.r_ll.iter().chain(&p.r_hh) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        w.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write(BufWriter::new(f)).map_err(|e| Error::io(path, e))
    }

    pub fn read(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Format("patch store too short for its header".into()))?;
        if &magic != PATCH_STORE_MAGIC {
            return Err(Error::Format(format!("bad patch store magic {magic:?}")));
        }
        let version = read_u32(&mut r, "version")?;
        if version != PATCH_STORE_VERSION {
            return Err(Error::Format(format!("unsupported patch store version {version}")));
        }
        let count = read_u32(&mut r, "pair count")? as usize;
        let lr = read_u32(&mut r, "LR size")? as usize;
        let hr = read_u32(&mut r, "HR size")? as usize;
        let nsrc = read_u32(&mut r, "source count")? as usize;
        let mut store = PatchStore::new(lr, hr).map_err(|e| Error::Format(e.to_string()))?;
        for i in 0..nsrc {
            let len = read_u32(&mut r, "source name length")? as usize;
            if len > 4096 {
                return Err(Error::Format(format!("source {i} name length {len} is implausible")));
            }
            let mut name = vec![0u8; len];
            r.read_exact(&mut name)
                .map_err(|_| Error::Format("patch store truncated in source names".into()))?;
            let name = String::from_utf8(name)
                .map_err(|_| Error::Format(format!("source {i} name is not UTF-8")))?;
            store.add_source(name);
        }
        let mut index = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let src = read_u32(&mut r, "index")?;
            let aug = read_u32(&mut r, "index")?;
            if aug >= AUGMENTATIONS as u32 {
                return Err(Error::Format(format!("augmentation id {aug} out of range")));
            }
            index.push((src, aug as u8));
        }
        let (nl, nh) = (lr * lr, hr * hr);
        let mut buf = vec![0u8; (nl + nh) * 4];
        for (i, (source_id, aug_id)) in index.into_iter().enumerate() {
            r.read_exact(&mut buf)
                .map_err(|_| Error::Format(format!("patch store truncated in pair {i}")))?;
            let vals: Vec<f32> = buf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let pair = PatchPair {
                r_ll: vals[..nl].to_vec(),
                r_hh: vals[nl..].to_vec(),
                source_id,
                aug_id,
            };
            store.push(pair).map_err(|e| Error::Format(format!("pair {i}: {e}")))?;
        }
        let mut extra = [0u8; 1];
        if r.read(&mut extra).map_err(|e| Error::Format(e.to_string()))? != 0 {
            return Err(Error::Format("trailing bytes after the last patch pair".into()));
        }
        Ok(store)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(f))
    }
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| Error::Format(format!("patch store truncated in {what}")))?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> Vec<f32> {
        (0..n * n).map(|i| i as f32).collect()
    }

    #[test]
    fn identity_and_quarter_turn() {
        let p = ramp(3);
        assert_eq!(apply_dihedral(&p, 3, 0), p);
        // [[0,1,2],[3,4,5],[6,7,8]] turned counter-clockwise
        assert_eq!(apply_dihedral(&p, 3, 1), vec![2., 5., 8., 1., 4., 7., 0., 3., 6.]);
        assert_eq!(apply_dihedral(&p, 3, 4), vec![2., 1., 0., 5., 4., 3., 8., 7., 6.]);
    }

    #[test]
    fn group_of_order_eight() {
        let p = ramp(4);
        let all: Vec<Vec<f32>> = (0..8).map(|a| apply_dihedral(&p, 4, a)).collect();
        for i in 0..8 {
            for j in i + 1..8 {
                assert_ne!(all[i], all[j], "{i} {j}");
            }
            let back = apply_dihedral(&all[i], 4, inverse_dihedral(i as u8));
            assert_eq!(back, p);
        }
    }

    #[test]
    fn grid() {
        assert_eq!(grid_positions(48, 48, 24), vec![0]);
        assert_eq!(grid_positions(72, 48, 24), vec![0, 24]);
        assert_eq!(grid_positions(95, 48, 24), vec![0, 24]);
        assert!(grid_positions(40, 48, 24).is_empty());
    }

    #[test]
    fn pair_counts() {
        let lr = Plane::filled(48, 48, 0.1);
        let hr = Plane::filled(96, 96, 0.2);
        assert_eq!(extract_patch_pairs(&lr, &hr, 0).unwrap().len(), 8);
        let lr = Plane::filled(72, 72, 0.1);
        let hr = Plane::filled(144, 144, 0.2);
        assert_eq!(extract_patch_pairs(&lr, &hr, 0).unwrap().len(), 32);
        assert!(extract_patch_pairs(&lr, &lr, 0).is_err());
    }

    #[test]
    fn bounded_values_stay_inside() {
        let p = Plane::new(1, 3, vec![1.0, -1.0, 0.5]).unwrap();
        let v = to_bounded_f32(&p);
        assert!(v.iter().all(|x| x.abs() < 1.0));
        assert_eq!(v[2], 0.5);
    }

    #[test]
    fn store_round_trip() {
        let mut s = PatchStore::new(2, 4).unwrap();
        let id = s.add_source("a");
        s.push(PatchPair { r_ll: vec![0.1; 4], r_hh: vec![-0.2; 16], source_id: id, aug_id: 3 }).unwrap();
        let mut b = Vec::new();
        s.write(&mut b).unwrap();
        let back = PatchStore::read(b.as_slice()).unwrap();
        assert_eq!(back, s);
        assert!(PatchStore::read(&b[..b.len() - 1]).is_err());
        b[0] = 0;
        assert!(PatchStore::read(b.as_slice()).is_err());
    }
}
