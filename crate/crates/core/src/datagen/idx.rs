//! IDX image/label files (big-endian headers, unsigned byte payloads).

use std::fs;
use std::path::Path;

use super::{DatagenError, ObjectPool};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
    file: &'static str,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DatagenError> {
        let end = self
            .offset
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.offset..end];
                self.offset = end;
                Ok(s)
            }
            None => Err(DatagenError::Truncated {
                file: self.file,
                offset: self.offset,
                needed: n - (self.bytes.len() - self.offset),
            }),
        }
    }

    fn u32(&mut self) -> Result<u32, DatagenError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn magic(&mut self, expected: u32) -> Result<(), DatagenError> {
        let found = self.u32()?;
        if found != expected {
            return Err(DatagenError::BadMagic {
                file: self.file,
                expected,
                found,
            });
        }
        Ok(())
    }
}

/// Images as rows of `rows·cols` features scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<Vec<f64>>, DatagenError> {
    let mut c = Cursor {
        bytes,
        offset: 0,
        file: "images",
    };
    c.magic(IMAGES_MAGIC)?;
    let n = c.u32()? as usize;
    let rows = c.u32()? as usize;
    let cols = c.u32()? as usize;
    let size = rows * cols;
    (0..n)
        .map(|_| Ok(c.take(size)?.iter().map(|&p| p as f64 / 255.0).collect()))
        .collect()
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, DatagenError> {
    let mut c = Cursor {
        bytes,
        offset: 0,
        file: "labels",
    };
    c.magic(LABELS_MAGIC)?;
    let n = c.u32()? as usize;
    Ok(c.take(n)?.to_vec())
}

pub fn encode_idx_images(rows: usize, cols: usize, pixels: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + pixels.len() * rows * cols);
    for v in [IMAGES_MAGIC, pixels.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for p in pixels {
        out.extend_from_slice(p);
    }
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// A pool with ids `0..n` and `k` = largest label + 1.
pub fn read_idx(images_path: &Path, labels_path: &Path) -> Result<ObjectPool, DatagenError> {
    let images = parse_idx_images(&fs::read(images_path)?)?;
    let labels = parse_idx_labels(&fs::read(labels_path)?)?;
    if images.len() != labels.len() {
        return Err(DatagenError::CountMismatch {
            images: images.len(),
            labels: labels.len(),
        });
    }
    let k = labels.iter().max().map_or(0, |&m| m as usize + 1);
    let ids = (0..images.len() as u64).collect();
    ObjectPool::new(k, ids, labels.iter().map(|&l| l as usize).collect(), images)
}
