//! Dataset generation and loading.

use std::path::{Path, PathBuf};

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rayon::prelude::*;

use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::img::{self, RgbImage};
use crate::se3::Pose;

use super::scene::{SceneSpec, SyntheticScene};
use super::trajectory::{generate_poses, TrajectorySpec};

/// One input frame as the tracker and mapper see it. The ground-truth pose,
/// when present, is carried for evaluation only; nothing in the SLAM loop
/// reads it.
#[derive(Debug, Clone)]
pub struct FrameObservation {
    pub index: usize,
    pub image: RgbImage,
    pub gt_pose: Option<Pose>,
}

fn frame_png(dir: &Path, index: usize) -> PathBuf {
    dir.join("frames").join(format!("{index:06}.png"))
}

fn depth_f32(dir: &Path, index: usize) -> PathBuf {
    dir.join("depth").join(format!("{index:06}.f32"))
}

/// Render the scene along the trajectory and write the dataset. Every frame
/// must see at least 30% textured coverage. Deterministic per (specs, seed).
pub fn generate(
    scene_spec: &SceneSpec,
    traj_spec: &TrajectorySpec,
    k: &CameraIntrinsics,
    out_dir: &Path,
) -> Result<()> {
    let scene = SyntheticScene::build(*scene_spec);
    let cam_to_world = generate_poses(traj_spec, scene_spec.extent)?;
    std::fs::create_dir_all(out_dir.join("frames")).map_err(|e| Error::io(out_dir, e))?;
    std::fs::create_dir_all(out_dir.join("depth")).map_err(|e| Error::io(out_dir, e))?;

    let rendered: Vec<(RgbImage, Grid<f64>, f64)> = cam_to_world
        .par_iter()
        .map(|pose| render_frame(&scene, pose, k))
        .collect();

    for (idx, ((image, depth, coverage), _pose)) in
        rendered.iter().zip(&cam_to_world).enumerate()
    {
        if *coverage < 0.3 {
            return Err(Error::InvalidArgument(format!(
                "frame {idx} sees only {:.0}% textured coverage",
                coverage * 100.0
            )));
        }
        img::save_png(image, &frame_png(out_dir, idx))?;
        img::write_f32_grid(depth, &depth_f32(out_dir, idx))?;
    }

    write_tum_trajectory(&out_dir.join("gt_traj.txt"), &cam_to_world, true)?;
    let intr = format!(
        "{} {} {} {} {} {}\n",
        k.fx, k.fy, k.cx, k.cy, k.width, k.height
    );
    std::fs::write(out_dir.join("intrinsics.txt"), intr)
        .map_err(|e| Error::io(out_dir.join("intrinsics.txt"), e))?;
    Ok(())
}

/// Ray-trace one frame: albedo image plus z-depth (0 where nothing is hit).
fn render_frame(
    scene: &SyntheticScene,
    cam_to_world: &Pose,
    k: &CameraIntrinsics,
) -> (RgbImage, Grid<f64>, f64) {
    let mut image = Grid::filled(k.width, k.height, Vector3::zeros());
    let mut depth = Grid::filled(k.width, k.height, 0.0);
    let origin = cam_to_world.translation;
    let mut hits = 0usize;
    for j in 0..k.height {
        for i in 0..k.width {
            // Direction with unit camera z, so the ray parameter is z-depth.
            let dir_cam = Vector3::new(
                (i as f64 - k.cx) / k.fx,
                (j as f64 - k.cy) / k.fy,
                1.0,
            );
            let dir_world = cam_to_world.rotation * dir_cam;
            if let Some(hit) = scene.trace(&origin, &dir_world) {
                *image.get_mut(i, j) = hit.color;
                *depth.get_mut(i, j) = hit.t;
                hits += 1;
            }
        }
    }
    let coverage = hits as f64 / (k.width * k.height) as f64;
    (image, depth, coverage)
}

/// TUM trajectory line: `t x y z qx qy qz qw`, camera-to-world.
pub fn write_tum_trajectory(path: &Path, cam_to_world: &[Pose], _gt: bool) -> Result<()> {
    let mut out = String::new();
    for (idx, pose) in cam_to_world.iter().enumerate() {
        let q = pose.to_quaternion();
        let t = pose.translation;
        out.push_str(&format!(
            "{} {} {} {} {} {} {} {}\n",
            idx, t.x, t.y, t.z, q.i, q.j, q.k, q.w
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_tum_trajectory(path: &Path) -> Result<Vec<Pose>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut poses = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<f64> = line
            .split_whitespace()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::ingestion(path, format!("line {}: {e}", ln + 1)))?;
        if fields.len() != 8 {
            return Err(Error::ingestion(
                path,
                format!("line {}: expected 8 fields, got {}", ln + 1, fields.len()),
            ));
        }
        let t = Vector3::new(fields[1], fields[2], fields[3]);
        let q = UnitQuaternion::from_quaternion(Quaternion::new(
            fields[7], fields[4], fields[5], fields[6],
        ));
        poses.push(Pose::from_quaternion_translation(&q, t));
    }
    Ok(poses)
}

pub fn read_intrinsics(path: &Path) -> Result<CameraIntrinsics> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let fields: Vec<f64> = text
        .split_whitespace()
        .map(|f| f.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::ingestion(path, format!("{e}")))?;
    if fields.len() != 6 {
        return Err(Error::ingestion(path, "expected 6 intrinsics fields"));
    }
    CameraIntrinsics::new(
        fields[0],
        fields[1],
        fields[2],
        fields[3],
        fields[4] as usize,
        fields[5] as usize,
    )
}

/// Load a dataset directory. Ground-truth poses attach (converted to
/// world-to-camera) when `gt_traj.txt` exists; they are for evaluation only.
pub fn load(dir: &Path) -> Result<(Vec<FrameObservation>, CameraIntrinsics)> {
    let k = read_intrinsics(&dir.join("intrinsics.txt"))?;
    let gt: Option<Vec<Pose>> = match read_tum_trajectory(&dir.join("gt_traj.txt")) {
        Ok(p) => Some(p),
        Err(Error::Io { .. }) => None,
        Err(e) => return Err(e),
    };
    let mut frames = Vec::new();
    loop {
        let idx = frames.len();
        let path = frame_png(dir, idx);
        if !path.exists() {
            break;
        }
        let image = img::load_png(&path)?;
        if image.width() != k.width || image.height() != k.height {
            return Err(Error::ingestion(path, "frame size does not match intrinsics"));
        }
        let gt_pose = gt
            .as_ref()
            .and_then(|g| g.get(idx))
            .map(|cam_to_world| cam_to_world.inverse());
        frames.push(FrameObservation {
            index: idx,
            image,
            gt_pose,
        });
    }
    if frames.is_empty() {
        return Err(Error::ingestion(dir, "no frames found"));
    }
    if let Some(g) = &gt {
        if g.len() != frames.len() {
            return Err(Error::ingestion(
                dir.join("gt_traj.txt"),
                format!("{} poses for {} frames", g.len(), frames.len()),
            ));
        }
    }
    Ok((frames, k))
}

/// Ground-truth depth for one frame; used only by the oracle pointmap
/// provider and by evaluation.
pub fn load_gt_depth(dir: &Path, index: usize) -> Result<Grid<f64>> {
    img::read_f32_grid(&depth_f32(dir, index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::TrajectoryKind;

    fn tiny_setup() -> (SceneSpec, TrajectorySpec, CameraIntrinsics) {
        let scene = SceneSpec::default();
        let traj = TrajectorySpec {
            kind: TrajectoryKind::Arc,
            frames: 4,
            speed: 0.05,
            turn_angle_deg: 10.0,
        };
        let k = CameraIntrinsics::new(40.0, 40.0, 16.0, 12.0, 32, 24).unwrap();
        (scene, traj, k)
    }

    #[test]
    fn generate_twice_is_byte_identical() {
        let (scene, traj, k) = tiny_setup();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        generate(&scene, &traj, &k, d1.path()).unwrap();
        generate(&scene, &traj, &k, d2.path()).unwrap();
        for rel in [
            "frames/000002.png",
            "depth/000002.f32",
            "gt_traj.txt",
            "intrinsics.txt",
        ] {
            let a = std::fs::read(d1.path().join(rel)).unwrap();
            let b = std::fs::read(d2.path().join(rel)).unwrap();
            assert_eq!(a, b, "{rel} differs between runs");
        }
    }

    #[test]
    fn load_roundtrips_generate() {
        let (scene, traj, k) = tiny_setup();
        let dir = tempfile::tempdir().unwrap();
        generate(&scene, &traj, &k, dir.path()).unwrap();
        let (frames, k2) = load(dir.path()).unwrap();
        assert_eq!(frames.len(), 4);
        assert_eq!(k2, k);
        assert!(frames.iter().all(|f| f.gt_pose.is_some()));
        // Reloading the PNG quantizes; spot-check one pixel value range.
        assert!(frames[0].image.as_slice().iter().all(|c| c.amax() <= 1.0));
        // Intrinsics parsed exactly field by field.
        assert_eq!(k2.fx, 40.0);
        assert_eq!(k2.cy, 12.0);
        assert_eq!(k2.width, 32);
    }

    #[test]
    fn missing_gt_loads_frames_without_poses() {
        let (scene, traj, k) = tiny_setup();
        let dir = tempfile::tempdir().unwrap();
        generate(&scene, &traj, &k, dir.path()).unwrap();
        std::fs::remove_file(dir.path().join("gt_traj.txt")).unwrap();
        let (frames, _) = load(dir.path()).unwrap();
        assert!(frames.iter().all(|f| f.gt_pose.is_none()));
    }

    #[test]
    fn gt_pose_roundtrip_through_tum() {
        let (scene, traj, k) = tiny_setup();
        let dir = tempfile::tempdir().unwrap();
        generate(&scene, &traj, &k, dir.path()).unwrap();
        let cam_to_world = generate_poses(&traj, scene.extent).unwrap();
        let loaded = read_tum_trajectory(&dir.path().join("gt_traj.txt")).unwrap();
        for (a, b) in cam_to_world.iter().zip(&loaded) {
            assert!((a.translation - b.translation).norm() < 1e-12);
            // acos conditioning near zero angle limits this comparison.
            assert!(a.rotation_distance(b) < 1e-6);
        }
    }

    /// Independent depth oracle: Cramer-rule solve for rects, bisection for
    /// ellipsoids, instead of the generator's normal-projection / quadratic
    /// formula path.
    fn oracle_depth(
        scene: &SyntheticScene,
        cam_to_world: &Pose,
        k: &CameraIntrinsics,
        i: usize,
        j: usize,
    ) -> f64 {
        use crate::sim::scene::Surface;
        let dir_cam = Vector3::new((i as f64 - k.cx) / k.fx, (j as f64 - k.cy) / k.fy, 1.0);
        let d = cam_to_world.rotation * dir_cam;
        let o = cam_to_world.translation;
        let mut best = f64::INFINITY;
        for surface in scene.surfaces() {
            match surface {
                Surface::Rect {
                    origin,
                    edge_u,
                    edge_v,
                } => {
                    let m = nalgebra::Matrix3::from_columns(&[*edge_u, *edge_v, -d]);
                    if let Some(inv) = m.try_inverse() {
                        let sol = inv * (o - origin);
                        let (u, v, t) = (sol.x, sol.y, sol.z);
                        if t >= 0.05 && (0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&v) {
                            best = best.min(t);
                        }
                    }
                }
                Surface::Ellipsoid { center, radii } => {
                    let g = |t: f64| -> f64 {
                        ((o + d * t - center).component_div(radii)).norm_squared() - 1.0
                    };
                    let mut prev_t = 0.05;
                    let mut prev_g = g(prev_t);
                    let mut t = prev_t;
                    while t < 40.0 {
                        t += 0.002;
                        let cur = g(t);
                        if prev_g > 0.0 && cur <= 0.0 {
                            // Bisection refine.
                            let (mut lo, mut hi) = (prev_t, t);
                            for _ in 0..60 {
                                let mid = 0.5 * (lo + hi);
                                if g(mid) > 0.0 {
                                    lo = mid;
                                } else {
                                    hi = mid;
                                }
                            }
                            best = best.min(0.5 * (lo + hi));
                            break;
                        }
                        prev_t = t;
                        prev_g = cur;
                    }
                }
            }
        }
        if best.is_finite() {
            best
        } else {
            0.0
        }
    }

    #[test]
    fn generated_depth_matches_independent_ray_oracle() {
        let (scene_spec, traj, k) = tiny_setup();
        let dir = tempfile::tempdir().unwrap();
        generate(&scene_spec, &traj, &k, dir.path()).unwrap();
        let scene = SyntheticScene::build(scene_spec);
        let poses = generate_poses(&traj, scene_spec.extent).unwrap();
        let depth = load_gt_depth(dir.path(), 1).unwrap();
        for j in (0..k.height).step_by(3) {
            for i in (0..k.width).step_by(3) {
                let reference = oracle_depth(&scene, &poses[1], &k, i, j);
                let got = *depth.get(i, j);
                if reference == 0.0 {
                    assert_eq!(got, 0.0, "pixel ({i},{j})");
                } else {
                    // f32 storage bounds the agreement.
                    assert!(
                        (got - reference).abs() < 1e-5 * reference.max(1.0),
                        "pixel ({i},{j}): {got} vs oracle {reference}"
                    );
                }
            }
        }
        // Generated depth is strictly positive on textured pixels.
        let img = img::load_png(&frame_png(dir.path(), 1)).unwrap();
        for (idx, d) in depth.as_slice().iter().enumerate() {
            if *d == 0.0 {
                assert_eq!(img.as_slice()[idx], Vector3::zeros());
            }
        }
    }
}
