//! Synthetic scenes, trajectories and dataset generation with exact ground
//! truth, plus dataset loading for the pipeline.
//!
//! Dataset layout: `frames/%06d.png`, `depth/%06d.f32`, `gt_traj.txt`
//! (TUM lines `t x y z qx qy qz qw`, camera-to-world), `intrinsics.txt`
//! (`fx fy cx cy width height`).

pub mod dataset;
mod scene;
mod trajectory;

pub use dataset::{generate, load, load_gt_depth, read_intrinsics, read_tum_trajectory,
    write_tum_trajectory, FrameObservation};
pub use scene::{SceneSpec, Surface, SyntheticScene};
pub use trajectory::{TrajectoryKind, TrajectorySpec};
