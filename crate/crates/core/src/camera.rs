//! Pinhole camera model and pixel <-> camera-point conversions.
//!
//! Pixel convention: (i, j) = (column, row) with pixel centers at integer
//! coordinates, so a camera-frame point (x, y, z) projects to
//! (fx * x / z + cx, fy * y / z + cy).

use nalgebra::{Matrix2x3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::pointmap::Pointmap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        if !(cx > 0.0 && cx < width as f64 && cy > 0.0 && cy < height as f64) {
            return Err(Error::InvalidArgument(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        Ok(CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Project a camera-frame point to pixel coordinates. Fails for z <= 0.
    pub fn project(&self, point: &Vector3<f64>) -> Result<Vector2<f64>> {
        if point.z <= 0.0 {
            return Err(Error::BehindCamera(point.z));
        }
        Ok(Vector2::new(
            self.fx * point.x / point.z + self.cx,
            self.fy * point.y / point.z + self.cy,
        ))
    }

    /// Back-project pixel (i, j) at the given depth into the camera frame.
    #[inline]
    pub fn unproject_pixel(&self, i: f64, j: f64, depth: f64) -> Vector3<f64> {
        Vector3::new(
            (i * depth - self.cx * depth) / self.fx,
            (j * depth - self.cy * depth) / self.fy,
            depth,
        )
    }

    pub fn contains_pixel(&self, px: &Vector2<f64>) -> bool {
        px.x >= 0.0 && px.x <= (self.width - 1) as f64 && px.y >= 0.0 && px.y <= (self.height - 1) as f64
    }
}

/// Jacobian of the pinhole projection with respect to the camera-frame
/// point, evaluated at `m` (requires m.z > 0).
#[inline]
pub fn perspective_jacobian(k: &CameraIntrinsics, m: &Vector3<f64>) -> Matrix2x3<f64> {
    let z_inv = 1.0 / m.z;
    let z_inv2 = z_inv * z_inv;
    Matrix2x3::new(
        k.fx * z_inv,
        0.0,
        -k.fx * m.x * z_inv2,
        0.0,
        k.fy * z_inv,
        -k.fy * m.y * z_inv2,
    )
}

/// Back-project a full depth map into a camera-frame pointmap. Depth 0 marks
/// an invalid pixel; valid pixels get confidence 1.
pub fn unproject(depth: &Grid<f64>, k: &CameraIntrinsics) -> Result<Pointmap> {
    if depth.width() != k.width || depth.height() != k.height {
        return Err(Error::InvalidArgument(format!(
            "depth map {}x{} does not match intrinsics {}x{}",
            depth.width(),
            depth.height(),
            k.width,
            k.height
        )));
    }
    let mut pm = Pointmap::new_invalid(k.width, k.height);
    for (i, j, &d) in depth.iter_pixels() {
        if d > 0.0 {
            pm.set(i, j, k.unproject_pixel(i as f64, j as f64, d), 1.0);
        }
    }
    Ok(pm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn k100() -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 100.0, 50.0, 50.0, 101, 101).unwrap()
    }

    #[test]
    fn principal_point_ray() {
        let k = k100();
        let d = 2.5;
        let p = k.unproject_pixel(k.cx, k.cy, d);
        assert_eq!(p, Vector3::new(0.0, 0.0, d));
    }

    #[test]
    fn zero_depth_marks_invalid() {
        let k = CameraIntrinsics::new(10.0, 10.0, 2.0, 2.0, 4, 4).unwrap();
        let mut depth = Grid::filled(4, 4, 1.0);
        *depth.get_mut(1, 2) = 0.0;
        let pm = unproject(&depth, &k).unwrap();
        assert!(!pm.is_valid(1, 2));
        assert!(pm.is_valid(0, 0));
        assert_eq!(pm.confidence(1, 2), 0.0);
    }

    #[test]
    fn hand_evaluated_unprojection() {
        // Pixel (cx + fx, cy) at depth 2 with fx = 100 lands at (2, 0, 2).
        let k = k100();
        let p = k.unproject_pixel(k.cx + k.fx, k.cy, 2.0);
        assert_abs_diff_eq!(p, Vector3::new(2.0, 0.0, 2.0), epsilon = 1e-12);
    }

    #[test]
    fn hand_evaluated_projection() {
        let k = k100();
        let px = k.project(&Vector3::new(2.0, 0.0, 2.0)).unwrap();
        assert_abs_diff_eq!(px, Vector2::new(150.0, 50.0), epsilon = 1e-12);
    }

    #[test]
    fn optical_axis_projects_to_principal_point() {
        let k = k100();
        let px = k.project(&Vector3::new(0.0, 0.0, 3.7)).unwrap();
        assert_abs_diff_eq!(px, Vector2::new(k.cx, k.cy), epsilon = 1e-12);
    }

    #[test]
    fn behind_camera_is_an_error() {
        let k = k100();
        assert!(matches!(
            k.project(&Vector3::new(0.0, 0.0, -1.0)),
            Err(Error::BehindCamera(_))
        ));
        assert!(matches!(
            k.project(&Vector3::new(0.0, 0.0, 0.0)),
            Err(Error::BehindCamera(_))
        ));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let k = k100();
        let depth = Grid::filled(10, 10, 1.0);
        assert!(matches!(
            unproject(&depth, &k),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn project_unproject_roundtrip_random_depth() {
        let k = CameraIntrinsics::new(80.0, 95.0, 31.5, 23.5, 64, 48).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut depth = Grid::filled(64, 48, 0.0);
        for v in depth.as_mut_slice() {
            *v = rng.random_range(0.5..10.0);
        }
        let pm = unproject(&depth, &k).unwrap();
        for j in 0..48 {
            for i in 0..64 {
                let px = k.project(pm.point(i, j)).unwrap();
                assert_abs_diff_eq!(px.x, i as f64, epsilon = 1e-9);
                assert_abs_diff_eq!(px.y, j as f64, epsilon = 1e-9);
                // The z channel of the unprojection equals the depth exactly.
                assert_eq!(pm.point(i, j).z, *depth.get(i, j));
            }
        }
    }
}
