//! Monocular RGB-only SLAM on a 3D Gaussian-splat map.
//!
//! The engine tracks camera poses through 2D-3D correspondences anchored in
//! pointmaps rendered from the Gaussian map itself, so the pose scale always
//! matches the reconstructed scene. An external pointmap source (a synthetic
//! oracle or files on disk) supplies geometric priors; its scale is aligned
//! to the scene patch-by-patch before it is allowed to touch the map.
//!
//! Main pieces:
//! - [`camera`] / [`se3`] / [`pointmap`]: pinhole model, SE(3) algebra, pixel
//!   grids of camera-frame points.
//! - [`gaussians`] / [`render`]: the splat map and a CPU differentiable
//!   renderer (color, depth, opacity) with analytic pose/parameter gradients.
//! - [`provider`]: pointmap source plus reciprocal 3D matching.
//! - [`pnp`] / [`tracker`]: EPnP + RANSAC pose solving and photometric pose
//!   refinement.
//! - [`align`] / [`mapper`] / [`keyframe`]: patch-based scale alignment,
//!   pointmap replacement, keyframe window and joint map optimization.
//! - [`sim`] / [`eval`] / [`pipeline`]: synthetic dataset generation,
//!   metrics (ATE, PSNR, SSIM) and the frame loop binding it all together.

pub mod align;
pub mod camera;
pub mod error;
pub mod gaussians;
pub mod grid;
pub mod img;
pub mod keyframe;
pub mod pnp;
pub mod pointmap;
pub mod provider;
pub mod render;
pub mod se3;
pub mod sim;

pub use error::{Error, Result};
