//! Camera trajectories over the synthetic scene. Poses come out
//! camera-to-world; the dataset writer stores them in TUM convention.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::se3::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryKind {
    Straight,
    Arc,
    SharpTurn,
    FigureEight,
}

impl TrajectoryKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "straight" => Ok(TrajectoryKind::Straight),
            "arc" => Ok(TrajectoryKind::Arc),
            "sharp-turn" => Ok(TrajectoryKind::SharpTurn),
            "figure-eight" => Ok(TrajectoryKind::FigureEight),
            other => Err(Error::InvalidArgument(format!(
                "unknown trajectory kind '{other}' (straight|arc|sharp-turn|figure-eight)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySpec {
    pub kind: TrajectoryKind,
    pub frames: usize,
    /// Units per frame.
    pub speed: f64,
    /// Total turn angle in degrees (ignored for straight runs).
    pub turn_angle_deg: f64,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        TrajectorySpec {
            kind: TrajectoryKind::SharpTurn,
            frames: 200,
            speed: 0.04,
            turn_angle_deg: 80.0,
        }
    }
}

/// Camera-to-world pose from position, heading (yaw about the vertical axis)
/// and a fixed downward pitch. Axes: x right, y down, z forward.
fn camera_to_world(pos: Vector3<f64>, yaw: f64, pitch: f64) -> Pose {
    let (sy, cy) = yaw.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let forward = Vector3::new(sy * cp, sp, cy * cp);
    let right = Vector3::new(cy, 0.0, -sy);
    let down = forward.cross(&right);
    Pose::new(Matrix3::from_columns(&[right, down, forward]), pos)
}

/// Per-frame yaw of each trajectory kind, radians.
fn yaw_profile(spec: &TrajectorySpec, frame: usize) -> f64 {
    let total = spec.turn_angle_deg.to_radians();
    let n = spec.frames.max(2) as f64;
    let t = frame as f64;
    match spec.kind {
        TrajectoryKind::Straight => 0.0,
        TrajectoryKind::Arc => total * t / (n - 1.0),
        TrajectoryKind::SharpTurn => {
            // Straight 40%, turn over the middle 25%, straight again.
            let turn_start = 0.40 * n;
            let turn_len = 0.25 * n;
            if t <= turn_start {
                0.0
            } else if t >= turn_start + turn_len {
                total
            } else {
                total * (t - turn_start) / turn_len
            }
        }
        TrajectoryKind::FigureEight => {
            total * (std::f64::consts::TAU * t / n).sin()
        }
    }
}

/// Generate camera-to-world poses. Enforces the per-frame motion limits
/// (rotation <= 10 degrees, translation <= 5% of the scene extent).
pub fn generate_poses(spec: &TrajectorySpec, extent: f64) -> Result<Vec<Pose>> {
    if spec.frames < 2 {
        return Err(Error::InvalidArgument("need at least 2 frames".into()));
    }
    let pitch = 10f64.to_radians();
    let start = Vector3::new(0.0, 0.0, 0.3);
    let mut poses = Vec::with_capacity(spec.frames);
    let mut pos = start;
    let mut prev_yaw = yaw_profile(spec, 0);
    poses.push(camera_to_world(pos, prev_yaw, pitch));
    for frame in 1..spec.frames {
        let yaw = yaw_profile(spec, frame);
        let step = (yaw - prev_yaw).abs();
        if step > 10f64.to_radians() + 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "per-frame rotation {:.2} deg exceeds 10 deg",
                step.to_degrees()
            )));
        }
        if spec.speed > 0.05 * extent {
            return Err(Error::InvalidArgument(format!(
                "per-frame translation {} exceeds 5% of extent {extent}",
                spec.speed
            )));
        }
        let dir = Vector3::new(yaw.sin(), 0.0, yaw.cos());
        pos += dir * spec.speed;
        poses.push(camera_to_world(pos, yaw, pitch));
        prev_yaw = yaw;
    }
    Ok(poses)
}
