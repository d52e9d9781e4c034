//! Pointmap sources standing in for a pre-trained pointmap network, plus
//! reciprocal nearest-neighbor matching between pointmaps.
//!
//! The oracle derives pointmaps from the dataset's ground-truth depth but
//! corrupts them the way a real predictor would: a per-pair multiplicative
//! scale factor that drifts over the sequence, per-pixel multiplicative
//! noise, confidence degraded at depth discontinuities, and dropout. Both
//! maps of a pair share one scale factor. Matching runs in a common frame
//! internally (the oracle knows the true relative transform; a network
//! emits pair-consistent maps the same way), but the returned maps are each
//! in their own camera frame.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::camera::{unproject, CameraIntrinsics};
use crate::error::{Error, Result};
use crate::pointmap::Pointmap;
use crate::se3::Pose;
use crate::sim::{load_gt_depth, FrameObservation};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    /// Multiplicative scale drift per frame (1.0 = none).
    pub scale_drift_per_frame: f64,
    /// Standard deviation of per-pixel multiplicative noise, as a fraction.
    pub noise_sigma_rel: f64,
    pub confidence_floor: f64,
    pub confidence_ceiling: f64,
    /// Fraction of valid pixels randomly dropped per map.
    pub dropout_fraction: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            scale_drift_per_frame: 1.01,
            noise_sigma_rel: 0.01,
            confidence_floor: 1.0,
            confidence_ceiling: 3.0,
            dropout_fraction: 0.05,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Oracle,
    File,
}

/// Pointmaps for a frame pair at one shared (provider-internal) scale, with
/// pixel correspondences between the two frames.
#[derive(Debug, Clone)]
pub struct PairPointmaps {
    /// Frame a's points in frame a's camera frame.
    pub pm_a: Pointmap,
    /// Frame b's points in frame b's camera frame.
    pub pm_b: Pointmap,
    /// ((i, j) in frame a) <-> ((u, v) in frame b), one-to-one.
    pub matches: Vec<((usize, usize), (usize, usize))>,
    pub provenance: Provenance,
}

pub trait PointmapProvider {
    fn provide(&self, a: &FrameObservation, b: &FrameObservation) -> Result<PairPointmaps>;
}

pub struct OracleProvider {
    dataset_dir: PathBuf,
    k: CameraIntrinsics,
    /// Ground-truth world-to-camera poses, used internally to express the
    /// pair in a common frame for matching (as a pair-trained network does).
    gt_poses: Vec<Pose>,
    pub config: OracleConfig,
    /// Confidence threshold for matching.
    pub match_threshold: f64,
}

impl OracleProvider {
    pub fn new(
        dataset_dir: &Path,
        k: CameraIntrinsics,
        config: OracleConfig,
        match_threshold: f64,
    ) -> Result<Self> {
        let gt = crate::sim::dataset::read_tum_trajectory(&dataset_dir.join("gt_traj.txt"))?
            .into_iter()
            .map(|cam_to_world| cam_to_world.inverse())
            .collect();
        Ok(OracleProvider {
            dataset_dir: dataset_dir.to_path_buf(),
            k,
            gt_poses: gt,
            config,
            match_threshold,
        })
    }

    /// Depth-derived confidence in [floor, ceiling]: high on smooth regions,
    /// degraded near depth discontinuities.
    fn confidence_map(&self, depth: &crate::grid::Grid<f64>) -> crate::grid::Grid<f64> {
        let (w, h) = (depth.width(), depth.height());
        let mut conf = crate::grid::Grid::filled(w, h, 0.0);
        let span = self.config.confidence_ceiling - self.config.confidence_floor;
        for j in 0..h {
            for i in 0..w {
                let d = *depth.get(i, j);
                if d <= 0.0 {
                    continue;
                }
                let mut rel_jump: f64 = 0.0;
                for (ni, nj) in [
                    (i.wrapping_sub(1), j),
                    (i + 1, j),
                    (i, j.wrapping_sub(1)),
                    (i, j + 1),
                ] {
                    if ni < w && nj < h {
                        let nd = *depth.get(ni, nj);
                        if nd > 0.0 {
                            rel_jump = rel_jump.max((nd - d).abs() / d);
                        } else {
                            rel_jump = 1.0;
                        }
                    }
                }
                let edge = (rel_jump / 0.2).min(1.0);
                *conf.get_mut(i, j) = self.config.confidence_ceiling - span * edge;
            }
        }
        conf
    }

    /// Scaled, noisy pointmap for one frame in its own camera frame.
    fn corrupt(
        &self,
        depth: &crate::grid::Grid<f64>,
        scale: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Pointmap> {
        let normal = Normal::new(0.0, 1.0).map_err(|e| Error::Numerical(e.to_string()))?;
        let clean = unproject(depth, &self.k)?;
        let conf = self.confidence_map(depth);
        let mut pm = Pointmap::new_invalid(depth.width(), depth.height());
        for j in 0..depth.height() {
            for i in 0..depth.width() {
                if !clean.is_valid(i, j) {
                    continue;
                }
                let noise = 1.0 + self.config.noise_sigma_rel * normal.sample(rng);
                let dropped = rng.random_bool(self.config.dropout_fraction.clamp(0.0, 1.0));
                if dropped || noise <= 0.0 {
                    continue;
                }
                pm.set(i, j, clean.point(i, j) * scale * noise, *conf.get(i, j));
            }
        }
        Ok(pm)
    }
}

fn pair_rng(seed: u64, ia: usize, ib: usize) -> ChaCha8Rng {
    let mixed = seed
        ^ (ia as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (ib as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    ChaCha8Rng::seed_from_u64(mixed)
}

impl PointmapProvider for OracleProvider {
    fn provide(&self, a: &FrameObservation, b: &FrameObservation) -> Result<PairPointmaps> {
        let depth_a = load_gt_depth(&self.dataset_dir, a.index)?;
        let depth_b = load_gt_depth(&self.dataset_dir, b.index)?;
        // One shared scale for the pair, compounding over the sequence.
        let steps = a.index.max(b.index) as i32;
        let scale = self.config.scale_drift_per_frame.powi(steps);
        let mut rng = pair_rng(self.config.seed, a.index, b.index);
        let pm_a = self.corrupt(&depth_a, scale, &mut rng)?;
        let pm_b = self.corrupt(&depth_b, scale, &mut rng)?;

        // Express b's points in a's frame to match in common coordinates.
        // The pair shares one scale, so the relative translation scales too.
        let t_a = self.gt_poses.get(a.index).ok_or_else(|| {
            Error::InvalidArgument(format!("frame {} has no ground truth pose", a.index))
        })?;
        let t_b = self.gt_poses.get(b.index).ok_or_else(|| {
            Error::InvalidArgument(format!("frame {} has no ground truth pose", b.index))
        })?;
        let rel = t_a.compose(&t_b.inverse());
        let rel_scaled = Pose::new(rel.rotation, rel.translation * scale);
        let mut pm_b_in_a = Pointmap::new_invalid(pm_b.width(), pm_b.height());
        for (i, j, p, c) in pm_b.iter_valid() {
            pm_b_in_a.set(i, j, rel_scaled.transform_point(p), c);
        }
        let matches = match_pointmaps(&pm_a, &pm_b_in_a, self.match_threshold);
        Ok(PairPointmaps {
            pm_a,
            pm_b,
            matches,
            provenance: Provenance::Oracle,
        })
    }
}

/// Reads per-frame pointmap files `pointmap_%06d.bin` written in the binary
/// format of [`Pointmap::write_file`]. Matching runs directly on the stored
/// maps, so files should share a consistent frame convention per pair.
pub struct FileProvider {
    dir: PathBuf,
    pub match_threshold: f64,
}

impl FileProvider {
    pub fn new(dir: &Path, match_threshold: f64) -> Self {
        FileProvider {
            dir: dir.to_path_buf(),
            match_threshold,
        }
    }

    pub fn frame_path(dir: &Path, index: usize) -> PathBuf {
        dir.join(format!("pointmap_{index:06}.bin"))
    }
}

impl PointmapProvider for FileProvider {
    fn provide(&self, a: &FrameObservation, b: &FrameObservation) -> Result<PairPointmaps> {
        let pm_a = Pointmap::read_file(&Self::frame_path(&self.dir, a.index))?;
        let pm_b = Pointmap::read_file(&Self::frame_path(&self.dir, b.index))?;
        let matches = match_pointmaps(&pm_a, &pm_b, self.match_threshold);
        Ok(PairPointmaps {
            pm_a,
            pm_b,
            matches,
            provenance: Provenance::File,
        })
    }
}

/// Reciprocal nearest-neighbor matching in 3D point space among pixels with
/// confidence >= threshold. One-to-one and symmetric by construction. Uses a
/// spatial hash grid above 5000 points, brute force below.
pub fn match_pointmaps(
    pm_a: &Pointmap,
    pm_b: &Pointmap,
    confidence_threshold: f64,
) -> Vec<((usize, usize), (usize, usize))> {
    let pts_a: Vec<((usize, usize), Vector3<f64>)> = pm_a
        .iter_valid()
        .filter(|(_, _, _, c)| *c >= confidence_threshold)
        .map(|(i, j, p, _)| ((i, j), *p))
        .collect();
    let pts_b: Vec<((usize, usize), Vector3<f64>)> = pm_b
        .iter_valid()
        .filter(|(_, _, _, c)| *c >= confidence_threshold)
        .map(|(i, j, p, _)| ((i, j), *p))
        .collect();
    if pts_a.is_empty() || pts_b.is_empty() {
        return Vec::new();
    }

    let nn_ab = nearest_neighbors(&pts_a, &pts_b);
    let nn_ba = nearest_neighbors(&pts_b, &pts_a);

    let mut out = Vec::new();
    for (ia, &nb) in nn_ab.iter().enumerate() {
        if nn_ba[nb] == ia {
            out.push((pts_a[ia].0, pts_b[nb].0));
        }
    }
    out
}

/// For each query point, the index of its nearest point in `targets`.
fn nearest_neighbors(
    queries: &[((usize, usize), Vector3<f64>)],
    targets: &[((usize, usize), Vector3<f64>)],
) -> Vec<usize> {
    if targets.len() <= 5000 {
        return queries
            .iter()
            .map(|(_, q)| {
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for (idx, (_, t)) in targets.iter().enumerate() {
                    let d = (q - t).norm_squared();
                    if d < best_d {
                        best_d = d;
                        best = idx;
                    }
                }
                best
            })
            .collect();
    }
    SpatialGrid::build(targets).queries(queries, targets)
}

/// Uniform hash grid over the target bounding box.
struct SpatialGrid {
    cell: f64,
    origin: Vector3<f64>,
    dims: (usize, usize, usize),
    cells: Vec<Vec<u32>>,
}

impl SpatialGrid {
    fn build(targets: &[((usize, usize), Vector3<f64>)]) -> Self {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for (_, p) in targets {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let diag = (hi - lo).norm().max(1e-9);
        // Aim for a few points per cell.
        let cell = (diag / (targets.len() as f64).cbrt() / 1.5).max(1e-9);
        let dims = (
            (((hi.x - lo.x) / cell).floor() as usize + 1).min(512),
            (((hi.y - lo.y) / cell).floor() as usize + 1).min(512),
            (((hi.z - lo.z) / cell).floor() as usize + 1).min(512),
        );
        let mut cells = vec![Vec::new(); dims.0 * dims.1 * dims.2];
        let grid = SpatialGrid {
            cell,
            origin: lo,
            dims,
            cells: Vec::new(),
        };
        for (idx, (_, p)) in targets.iter().enumerate() {
            let c = grid.cell_of(p);
            cells[c].push(idx as u32);
        }
        SpatialGrid { cells, ..grid }
    }

    fn cell_coords(&self, p: &Vector3<f64>) -> (usize, usize, usize) {
        let f = |v: f64, o: f64, n: usize| -> usize {
            (((v - o) / self.cell).floor().max(0.0) as usize).min(n - 1)
        };
        (
            f(p.x, self.origin.x, self.dims.0),
            f(p.y, self.origin.y, self.dims.1),
            f(p.z, self.origin.z, self.dims.2),
        )
    }

    fn cell_of(&self, p: &Vector3<f64>) -> usize {
        let (x, y, z) = self.cell_coords(p);
        (z * self.dims.1 + y) * self.dims.0 + x
    }

    fn queries(
        &self,
        queries: &[((usize, usize), Vector3<f64>)],
        targets: &[((usize, usize), Vector3<f64>)],
    ) -> Vec<usize> {
        queries
            .iter()
            .map(|(_, q)| {
                let (cx, cy, cz) = self.cell_coords(q);
                let mut best = usize::MAX;
                let mut best_d = f64::INFINITY;
                // Expand rings until a hit is found and the ring distance
                // already exceeds the best match.
                for ring in 0..self.dims.0.max(self.dims.1).max(self.dims.2) {
                    if best != usize::MAX {
                        let ring_dist = (ring as f64 - 1.0).max(0.0) * self.cell;
                        if ring_dist * ring_dist > best_d {
                            break;
                        }
                    }
                    let r = ring as isize;
                    for dz in -r..=r {
                        for dy in -r..=r {
                            for dx in -r..=r {
                                if dx.abs().max(dy.abs()).max(dz.abs()) != r {
                                    continue;
                                }
                                let (x, y, z) =
                                    (cx as isize + dx, cy as isize + dy, cz as isize + dz);
                                if x < 0
                                    || y < 0
                                    || z < 0
                                    || x >= self.dims.0 as isize
                                    || y >= self.dims.1 as isize
                                    || z >= self.dims.2 as isize
                                {
                                    continue;
                                }
                                let cell = (z as usize * self.dims.1 + y as usize) * self.dims.0
                                    + x as usize;
                                for &t_idx in &self.cells[cell] {
                                    let d =
                                        (q - targets[t_idx as usize].1).norm_squared();
                                    if d < best_d {
                                        best_d = d;
                                        best = t_idx as usize;
                                    }
                                }
                            }
                        }
                    }
                }
                best
            })
            .collect()
    }
}
