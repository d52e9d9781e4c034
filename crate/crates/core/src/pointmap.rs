//! Per-pixel grids of camera-frame 3D points with confidences.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::grid::Grid;

/// H x W grid of camera-frame points. Invalid pixels carry confidence 0 and
/// a zero point; valid pixels have z > 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Pointmap {
    points: Grid<Vector3<f64>>,
    confidence: Grid<f64>,
    valid: Grid<bool>,
}

impl Pointmap {
    pub fn new_invalid(width: usize, height: usize) -> Self {
        Pointmap {
            points: Grid::filled(width, height, Vector3::zeros()),
            confidence: Grid::filled(width, height, 0.0),
            valid: Grid::filled(width, height, false),
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.points.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.points.height()
    }

    pub fn same_shape(&self, other: &Pointmap) -> bool {
        self.width() == other.width() && self.height() == other.height()
    }

    /// Mark pixel valid with the given point and confidence. Points with
    /// z <= 0 or non-positive confidence are rejected as invalid instead.
    pub fn set(&mut self, i: usize, j: usize, point: Vector3<f64>, confidence: f64) {
        if point.z > 0.0 && confidence > 0.0 && point.iter().all(|v| v.is_finite()) {
            *self.points.get_mut(i, j) = point;
            *self.confidence.get_mut(i, j) = confidence;
            *self.valid.get_mut(i, j) = true;
        } else {
            self.invalidate(i, j);
        }
    }

    pub fn invalidate(&mut self, i: usize, j: usize) {
        *self.points.get_mut(i, j) = Vector3::zeros();
        *self.confidence.get_mut(i, j) = 0.0;
        *self.valid.get_mut(i, j) = false;
    }

    #[inline]
    pub fn point(&self, i: usize, j: usize) -> &Vector3<f64> {
        self.points.get(i, j)
    }

    #[inline]
    pub fn confidence(&self, i: usize, j: usize) -> f64 {
        *self.confidence.get(i, j)
    }

    #[inline]
    pub fn is_valid(&self, i: usize, j: usize) -> bool {
        *self.valid.get(i, j)
    }

    #[inline]
    pub fn z(&self, i: usize, j: usize) -> f64 {
        self.points.get(i, j).z
    }

    pub fn valid_count(&self) -> usize {
        self.valid.as_slice().iter().filter(|v| **v).count()
    }

    /// Iterate (i, j, point, confidence) over valid pixels in row-major order.
    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, usize, &Vector3<f64>, f64)> {
        self.points.iter_pixels().filter_map(move |(i, j, p)| {
            if self.is_valid(i, j) {
                Some((i, j, p, self.confidence(i, j)))
            } else {
                None
            }
        })
    }

    /// Multiply every valid point by a positive scalar.
    pub fn scaled(&self, s: f64) -> Pointmap {
        let mut out = self.clone();
        for (idx, v) in out.valid.as_slice().iter().enumerate() {
            if *v {
                out.points.as_mut_slice()[idx] *= s;
            }
        }
        out
    }

    /// Median z over valid pixels; None when the map is entirely invalid.
    pub fn median_valid_z(&self) -> Option<f64> {
        let mut zs: Vec<f64> = self
            .iter_valid()
            .map(|(_, _, p, _)| p.z)
            .collect();
        if zs.is_empty() {
            return None;
        }
        zs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Some(zs[zs.len() / 2])
    }

    /// Binary pointmap file: 8-byte magic, u32 width, u32 height, then
    /// H*W*3 point components and H*W confidences as little-endian f32.
    pub fn write_file(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(16 + self.points.len() * 16);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(self.width() as u32).to_le_bytes());
        buf.extend_from_slice(&(self.height() as u32).to_le_bytes());
        for p in self.points.as_slice() {
            for c in p.iter() {
                buf.extend_from_slice(&(*c as f32).to_le_bytes());
            }
        }
        for c in self.confidence.as_slice() {
            buf.extend_from_slice(&(*c as f32).to_le_bytes());
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    pub fn read_file(path: &Path) -> Result<Pointmap> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        if bytes.len() < 16 || &bytes[0..8] != MAGIC {
            return Err(Error::ingestion(path, "bad pointmap magic"));
        }
        let w = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let h = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let expected = 16 + w * h * 16;
        if bytes.len() != expected {
            return Err(Error::ingestion(
                path,
                format!("expected {expected} bytes for {w}x{h}, got {}", bytes.len()),
            ));
        }
        let mut pm = Pointmap::new_invalid(w, h);
        let f32_at = |off: usize| -> f64 {
            f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64
        };
        let conf_base = 16 + w * h * 12;
        for idx in 0..w * h {
            let (i, j) = (idx % w, idx / w);
            let p = Vector3::new(
                f32_at(16 + idx * 12),
                f32_at(16 + idx * 12 + 4),
                f32_at(16 + idx * 12 + 8),
            );
            let c = f32_at(conf_base + idx * 4);
            if c > 0.0 && p.z > 0.0 {
                pm.set(i, j, p, c);
            }
        }
        Ok(pm)
    }
}

const MAGIC: &[u8; 8] = b"GSLPTMP1";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_rejects_nonpositive_depth() {
        let mut pm = Pointmap::new_invalid(2, 2);
        pm.set(0, 0, Vector3::new(1.0, 1.0, -0.5), 1.0);
        assert!(!pm.is_valid(0, 0));
        pm.set(0, 0, Vector3::new(1.0, 1.0, 0.5), 1.0);
        assert!(pm.is_valid(0, 0));
    }

    #[test]
    fn median_z() {
        let mut pm = Pointmap::new_invalid(3, 1);
        pm.set(0, 0, Vector3::new(0.0, 0.0, 3.0), 1.0);
        pm.set(1, 0, Vector3::new(0.0, 0.0, 1.0), 1.0);
        pm.set(2, 0, Vector3::new(0.0, 0.0, 2.0), 1.0);
        assert_eq!(pm.median_valid_z(), Some(2.0));
        assert_eq!(Pointmap::new_invalid(2, 2).median_valid_z(), None);
    }

    #[test]
    fn file_roundtrip_and_garbled_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut pm = Pointmap::new_invalid(4, 3);
        pm.set(1, 2, Vector3::new(0.25, -0.5, 2.0), 1.5);
        pm.set(0, 0, Vector3::new(0.0, 0.0, 1.0), 3.0);
        let path = dir.path().join("pm.bin");
        pm.write_file(&path).unwrap();
        let back = Pointmap::read_file(&path).unwrap();
        assert_eq!(back.width(), 4);
        assert!(back.is_valid(1, 2));
        assert!(!back.is_valid(2, 2));
        assert!((back.point(1, 2).z - 2.0).abs() < 1e-6);

        std::fs::write(dir.path().join("bad.bin"), b"not a pointmap").unwrap();
        assert!(matches!(
            Pointmap::read_file(&dir.path().join("bad.bin")),
            Err(Error::Ingestion { .. })
        ));
        assert!(matches!(
            Pointmap::read_file(&dir.path().join("missing.bin")),
            Err(Error::Io { .. })
        ));
    }
}
