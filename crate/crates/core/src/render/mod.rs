//! CPU differentiable Gaussian-splat renderer.
//!
//! Forward: project every primitive to the image plane (EWA: the camera-frame
//! covariance is pushed through the perspective Jacobian), bin by tile, sort
//! front-to-back by camera z, alpha-blend color, depth and opacity. Depth is
//! blended with the same weights as color, so substituting z for color
//! reproduces the depth image exactly.
//!
//! Backward: per-pixel contributor lists retained from the forward pass are
//! replayed to produce analytic gradients of an arbitrary per-pixel loss with
//! respect to the camera pose tangent and every Gaussian parameter. All
//! reductions run over a fixed number of pixel bands and are folded in band
//! order, so results do not depend on thread scheduling.

mod backward;
mod forward;

pub use backward::{backward, backward_params, backward_pose, BackwardResult, ParamGrads, PixelGrads};

use nalgebra::{Vector2, Vector3};

use crate::camera::{unproject, CameraIntrinsics};
use crate::error::Result;
use crate::gaussians::GaussianMap;
use crate::grid::Grid;
use crate::pointmap::Pointmap;
use crate::se3::Pose;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderSettings {
    /// Screen-space blur added to the diagonal of the 2D covariance (px^2).
    pub blur: f64,
    /// Contributions with alpha below this are skipped. Together with the
    /// transmittance floor this bounds the deviation from an exact
    /// no-cutoff blend by well under 1e-6 per pixel.
    pub alpha_cutoff: f64,
    /// Front-to-back blending stops once transmittance drops below this.
    pub transmittance_floor: f64,
    /// A rendered pixel counts as valid when accumulated opacity reaches this.
    pub alpha_valid_threshold: f64,
    /// Rasterization tile edge in pixels.
    pub tile: usize,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings {
            blur: 0.3,
            alpha_cutoff: 1e-9,
            transmittance_floor: 1e-9,
            alpha_valid_threshold: 0.5,
            tile: 16,
        }
    }
}

/// Per-primitive projection cache kept by the forward pass.
#[derive(Debug, Clone)]
pub(crate) struct Projected {
    pub map_idx: u32,
    pub mean_cam: Vector3<f64>,
    pub mean2d: Vector2<f64>,
    /// Inverse 2D covariance (xx, xy, yy), blur included.
    pub conic: (f64, f64, f64),
    pub opacity: f64,
    pub color: Vector3<f64>,
    /// Mahalanobis-squared radius where alpha falls to the cutoff.
    pub q_max: f64,
    /// Inclusive pixel bounds.
    pub x0: i32,
    pub x1: i32,
    pub y0: i32,
    pub y1: i32,
}

/// One retained blending contribution: which projected primitive hit the
/// pixel, and with what alpha.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Entry {
    pub slot: u32,
    pub alpha: f64,
}

#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub color: Grid<Vector3<f64>>,
    /// Alpha-blended camera z (same weights as color, no normalization).
    pub depth: Grid<f64>,
    /// Accumulated opacity in [0, 1].
    pub alpha_sum: Grid<f64>,
    pub(crate) offsets: Vec<u32>,
    pub(crate) entries: Vec<Entry>,
    pub(crate) projected: Vec<Projected>,
    pub(crate) map_revision: u64,
    pub(crate) map_len: usize,
    pub(crate) pose: Pose,
    pub(crate) k: CameraIntrinsics,
    pub(crate) settings: RenderSettings,
}

impl RenderOutput {
    pub fn settings(&self) -> &RenderSettings {
        &self.settings
    }

    /// Depth grid with invalid (alpha_sum below threshold) pixels zeroed,
    /// ready for unprojection.
    pub fn masked_depth(&self) -> Grid<f64> {
        let mut depth = self.depth.clone();
        for (idx, a) in self.alpha_sum.as_slice().iter().enumerate() {
            if *a < self.settings.alpha_valid_threshold {
                depth.as_mut_slice()[idx] = 0.0;
            }
        }
        depth
    }

    /// Map indices of primitives whose blending weight (alpha times
    /// transmittance) exceeds `floor` at one or more pixels. Sorted, unique.
    pub fn visible_map_indices(&self, floor: f64) -> Vec<usize> {
        let mut seen = vec![false; self.projected.len()];
        let n_pixels = self.offsets.len() - 1;
        for px in 0..n_pixels {
            let mut t = 1.0;
            for e in &self.entries[self.offsets[px] as usize..self.offsets[px + 1] as usize] {
                if e.alpha * t > floor {
                    seen[e.slot as usize] = true;
                }
                t *= 1.0 - e.alpha;
            }
        }
        let mut out: Vec<usize> = seen
            .iter()
            .enumerate()
            .filter(|(_, s)| **s)
            .map(|(slot, _)| self.projected[slot].map_idx as usize)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Render color, depth and accumulated opacity from `pose` (world-to-camera).
pub fn render(
    map: &GaussianMap,
    pose: &Pose,
    k: &CameraIntrinsics,
    settings: &RenderSettings,
) -> RenderOutput {
    forward::forward(map, pose, k, settings)
}

/// Rendered pointmap: the blended depth unprojected through the intrinsics,
/// with pixels below the accumulation threshold marked invalid.
pub fn render_pointmap(
    map: &GaussianMap,
    pose: &Pose,
    k: &CameraIntrinsics,
    settings: &RenderSettings,
) -> Result<Pointmap> {
    let out = render(map, pose, k, settings);
    pointmap_from_output(&out)
}

/// Same as [`render_pointmap`], reusing an existing forward pass.
pub fn pointmap_from_output(out: &RenderOutput) -> Result<Pointmap> {
    unproject(&out.masked_depth(), &out.k)
}
