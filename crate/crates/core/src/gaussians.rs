//! The 3D Gaussian map: primitive storage, covariance construction,
//! pointmap-seeded insertion, pruning, and checkpoint serialization.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Matrix3, Vector3, Vector4};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::pointmap::Pointmap;
use crate::se3::Pose;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

/// One anisotropic Gaussian. Scale is stored as log-scale and opacity as a
/// logit so unconstrained gradient steps keep them in range; the quaternion
/// is renormalized after each optimizer step by the owners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPrimitive {
    pub mean: Vector3<f64>,
    /// Unit quaternion (w, x, y, z).
    pub quat: Vector4<f64>,
    pub log_scale: Vector3<f64>,
    pub opacity_logit: f64,
    pub color: Vector3<f64>,
}

impl GaussianPrimitive {
    pub fn isotropic(mean: Vector3<f64>, scale: f64, opacity: f64, color: Vector3<f64>) -> Self {
        GaussianPrimitive {
            mean,
            quat: Vector4::new(1.0, 0.0, 0.0, 0.0),
            log_scale: Vector3::repeat(scale.max(1e-12).ln()),
            opacity_logit: logit(opacity),
            color,
        }
    }

    #[inline]
    pub fn scale(&self) -> Vector3<f64> {
        self.log_scale.map(f64::exp)
    }

    #[inline]
    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    /// Rotation matrix of the (normalized) quaternion.
    pub fn rotation(&self) -> Matrix3<f64> {
        let q = self.quat / self.quat.norm();
        let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    /// World-frame covariance R S S^T R^T.
    pub fn covariance(&self) -> Matrix3<f64> {
        let r = self.rotation();
        let s = self.scale();
        let v = Matrix3::from_columns(&[r.column(0) * s.x, r.column(1) * s.y, r.column(2) * s.z]);
        v * v.transpose()
    }

    pub fn normalize_quat(&mut self) {
        let n = self.quat.norm();
        if n > 1e-12 {
            self.quat /= n;
        } else {
            self.quat = Vector4::new(1.0, 0.0, 0.0, 0.0);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.mean.iter().all(|v| v.is_finite())
            && self.quat.iter().all(|v| v.is_finite())
            && self.log_scale.iter().all(|v| v.is_finite())
            && self.opacity_logit.is_finite()
            && self.color.iter().all(|v| v.is_finite())
    }
}

/// Bookkeeping the mapper needs for pruning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrimitiveMeta {
    pub id: u64,
    pub created_keyframe: u64,
    pub observations: u32,
}

#[derive(Debug, Clone, Default)]
pub struct GaussianMap {
    prims: Vec<GaussianPrimitive>,
    meta: Vec<PrimitiveMeta>,
    next_id: u64,
    revision: u64,
    bbox_min: Vector3<f64>,
    bbox_max: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InsertReport {
    pub inserted: usize,
    /// The source pointmap had no valid pixels; the call was a no-op.
    pub empty_input: bool,
}

impl GaussianMap {
    pub fn new() -> Self {
        GaussianMap {
            prims: Vec::new(),
            meta: Vec::new(),
            next_id: 0,
            revision: 0,
            bbox_min: Vector3::repeat(f64::INFINITY),
            bbox_max: Vector3::repeat(f64::NEG_INFINITY),
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.prims.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.prims.is_empty()
    }

    #[inline]
    pub fn revision(&self) -> u64 {
        self.revision
    }

    #[inline]
    pub fn prims(&self) -> &[GaussianPrimitive] {
        &self.prims
    }

    #[inline]
    pub fn meta(&self) -> &[PrimitiveMeta] {
        &self.meta
    }

    /// Mutable primitive access; bumps the revision so stale render caches
    /// are detected.
    pub fn prims_mut(&mut self) -> &mut [GaussianPrimitive] {
        self.revision += 1;
        &mut self.prims
    }

    /// Diagonal of the bounding box of all means; 1 for empty maps.
    pub fn extent(&self) -> f64 {
        if self.prims.is_empty() {
            return 1.0;
        }
        (self.bbox_max - self.bbox_min).norm().max(1e-6)
    }

    pub fn push(&mut self, prim: GaussianPrimitive, created_keyframe: u64) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        self.bbox_min = self.bbox_min.inf(&prim.mean);
        self.bbox_max = self.bbox_max.sup(&prim.mean);
        self.prims.push(prim);
        self.meta.push(PrimitiveMeta {
            id,
            created_keyframe,
            observations: 0,
        });
        self.revision += 1;
        id
    }

    pub fn mark_observed(&mut self, indices: &[usize]) {
        for &i in indices {
            self.meta[i].observations = self.meta[i].observations.saturating_add(1);
        }
    }

    /// Seed new primitives from a camera-frame pointmap taken at `pose`
    /// (world-to-camera). Selects floor(keep_fraction * valid) pixels
    /// uniformly at random (seeded, deterministic); each becomes an
    /// isotropic primitive at the world-transformed point with opacity 0.5,
    /// scale z/fx (a one-pixel footprint) and the pixel color.
    pub fn insert_from_pointmap(
        &mut self,
        pm: &Pointmap,
        pose: &Pose,
        colors: &Grid<Vector3<f64>>,
        k: &CameraIntrinsics,
        keep_fraction: f64,
        seed: u64,
        created_keyframe: u64,
    ) -> Result<InsertReport> {
        if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "keep_fraction must be in (0, 1], got {keep_fraction}"
            )));
        }
        if pm.width() != colors.width() || pm.height() != colors.height() {
            return Err(Error::InvalidArgument(
                "pointmap and color image dimensions differ".into(),
            ));
        }
        let mut valid: Vec<(usize, usize)> = pm.iter_valid().map(|(i, j, _, _)| (i, j)).collect();
        if valid.is_empty() {
            return Ok(InsertReport {
                inserted: 0,
                empty_input: true,
            });
        }
        let take = ((keep_fraction * valid.len() as f64).floor() as usize).min(valid.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        valid.shuffle(&mut rng);
        valid.truncate(take);
        // Shuffle order is deterministic but arbitrary; keep insertion order
        // tied to pixel order so downstream float reductions are stable.
        valid.sort_unstable();
        let cam_to_world = pose.inverse();
        for (i, j) in valid {
            let p_cam = pm.point(i, j);
            let world = cam_to_world.transform_point(p_cam);
            let scale = p_cam.z / k.fx;
            self.push(
                GaussianPrimitive::isotropic(world, scale, 0.5, *colors.get(i, j)),
                created_keyframe,
            );
        }
        Ok(InsertReport {
            inserted: take,
            empty_input: false,
        })
    }

    /// Remove primitives with opacity under `opacity_floor`, plus primitives
    /// created more than `age_window` keyframes before `current_keyframe`
    /// that were observed fewer than `min_observations` times.
    pub fn prune(
        &mut self,
        opacity_floor: f64,
        min_observations: u32,
        age_window: u64,
        current_keyframe: u64,
    ) -> usize {
        let before = self.prims.len();
        let mut keep_prims = Vec::with_capacity(before);
        let mut keep_meta = Vec::with_capacity(before);
        for (prim, meta) in self.prims.iter().zip(&self.meta) {
            let faint = prim.opacity() < opacity_floor;
            let stale = current_keyframe.saturating_sub(meta.created_keyframe) > age_window
                && meta.observations < min_observations;
            if !(faint || stale) {
                keep_prims.push(*prim);
                keep_meta.push(*meta);
            }
        }
        self.prims = keep_prims;
        self.meta = keep_meta;
        self.revision += 1;
        before - self.prims.len()
    }

    /// Checkpoint format: magic, u32 version, u32 count, then per primitive
    /// 14 little-endian f64 fields: mean(3), quaternion wxyz(4), scale(3),
    /// opacity, color(3).
    pub fn write_checkpoint(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(16 + self.prims.len() * 14 * 8);
        buf.extend_from_slice(MAP_MAGIC);
        buf.extend_from_slice(&1u32.to_le_bytes());
        buf.extend_from_slice(&(self.prims.len() as u32).to_le_bytes());
        for p in &self.prims {
            let s = p.scale();
            let fields = [
                p.mean.x,
                p.mean.y,
                p.mean.z,
                p.quat[0],
                p.quat[1],
                p.quat[2],
                p.quat[3],
                s.x,
                s.y,
                s.z,
                p.opacity(),
                p.color.x,
                p.color.y,
                p.color.z,
            ];
            for f in fields {
                buf.extend_from_slice(&f.to_le_bytes());
            }
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    pub fn read_checkpoint(path: &Path) -> Result<GaussianMap> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        if bytes.len() < 16 || &bytes[0..8] != MAP_MAGIC {
            return Err(Error::ingestion(path, "bad map checkpoint magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != 1 {
            return Err(Error::ingestion(path, format!("unknown version {version}")));
        }
        let count = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        if bytes.len() != 16 + count * 14 * 8 {
            return Err(Error::ingestion(path, "map checkpoint size mismatch"));
        }
        let mut map = GaussianMap::new();
        for n in 0..count {
            let base = 16 + n * 14 * 8;
            let f = |k: usize| -> f64 {
                f64::from_le_bytes(bytes[base + k * 8..base + k * 8 + 8].try_into().unwrap())
            };
            let prim = GaussianPrimitive {
                mean: Vector3::new(f(0), f(1), f(2)),
                quat: Vector4::new(f(3), f(4), f(5), f(6)),
                log_scale: Vector3::new(f(7).max(1e-300).ln(), f(8).max(1e-300).ln(), f(9).max(1e-300).ln()),
                opacity_logit: logit(f(10)),
                color: Vector3::new(f(11), f(12), f(13)),
            };
            if !prim.is_finite() {
                return Err(Error::ingestion(path, format!("non-finite primitive {n}")));
            }
            map.push(prim, 0);
        }
        Ok(map)
    }
}

const MAP_MAGIC: &[u8; 8] = b"GSLMAP01";
