//! Perspective-n-point pose estimation: EPnP as the minimal/model solver
//! inside RANSAC, followed by a Gauss-Newton refit on all inliers.
//!
//! The recovered pose maps the 3D points' frame into the camera frame of the
//! pixels: `pixel = project(R * X + t)`.

use nalgebra::{
    DMatrix, Matrix3, Matrix6, SMatrix, SVector, Vector2, Vector3, Vector6,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::camera::{perspective_jacobian, CameraIntrinsics};
use crate::error::{Error, Result};
use crate::se3::{se3_exp, skew, Pose, Tangent};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacConfig {
    pub max_iters: usize,
    /// Inlier reprojection threshold in pixels.
    pub px_threshold: f64,
    /// Early-exit confidence for the adaptive iteration bound.
    pub confidence: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        RansacConfig {
            max_iters: 500,
            px_threshold: 2.0,
            confidence: 0.99,
            seed: 0,
        }
    }
}

/// EPnP on 4+ correspondences (camera-normalized formulation).
pub fn epnp(points: &[Vector3<f64>], pixels: &[Vector2<f64>], k: &CameraIntrinsics) -> Result<Pose> {
    let n = points.len();
    if n < 4 || pixels.len() != n {
        return Err(Error::DegenerateGeometry(format!(
            "EPnP needs >= 4 correspondences, got {n}"
        )));
    }

    // Control points: centroid plus principal axes of the point cloud.
    let centroid = points.iter().sum::<Vector3<f64>>() / n as f64;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    cov /= n as f64;
    let eig = cov.symmetric_eigen();
    let max_ev = eig.eigenvalues.amax().max(1e-12);
    let mut control_w = [centroid; 4];
    for i in 0..3 {
        // Thin point sets (near-planar quadruples) get a floored axis so the
        // control basis stays well conditioned.
        let ev = eig.eigenvalues[i].max(0.01 * max_ev);
        control_w[i + 1] = centroid + eig.eigenvectors.column(i) * ev.sqrt();
    }
    let basis = Matrix3::from_columns(&[
        control_w[1] - control_w[0],
        control_w[2] - control_w[0],
        control_w[3] - control_w[0],
    ]);
    let basis_inv = basis
        .try_inverse()
        .ok_or_else(|| Error::DegenerateGeometry("EPnP control basis is singular".into()))?;

    let mut alphas = Vec::with_capacity(n);
    for p in points {
        let c = basis_inv * (p - centroid);
        alphas.push([1.0 - c.x - c.y - c.z, c.x, c.y, c.z]);
    }

    // M^T M of the 2n x 12 system in normalized image coordinates.
    let mut m = DMatrix::<f64>::zeros(2 * n, 12);
    for (row, (a, px)) in alphas.iter().zip(pixels).enumerate() {
        let u = (px.x - k.cx) / k.fx;
        let v = (px.y - k.cy) / k.fy;
        for j in 0..4 {
            m[(2 * row, 3 * j)] = a[j];
            m[(2 * row, 3 * j + 2)] = -a[j] * u;
            m[(2 * row + 1, 3 * j + 1)] = a[j];
            m[(2 * row + 1, 3 * j + 2)] = -a[j] * v;
        }
    }
    let mtm = SMatrix::<f64, 12, 12>::from_iterator((m.transpose() * &m).iter().copied());
    let eig = mtm.symmetric_eigen();
    let mut order: Vec<usize> = (0..12).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let null: Vec<SVector<f64, 12>> = order
        .iter()
        .take(4)
        .map(|&i| eig.eigenvectors.column(i).into_owned())
        .collect();

    let dist_w: Vec<f64> = pairs()
        .iter()
        .map(|&(i, j)| (control_w[i] - control_w[j]).norm())
        .collect();

    // Candidate betas: closed forms for nullspace dimensions 1-3 plus one
    // start per nullspace axis. Each is polished by Gauss-Newton on the six
    // control-point distance constraints; with a 4-dimensional nullspace
    // (minimal samples) the closed forms alone are not reliable.
    let mut inits: Vec<[f64; 4]> = Vec::new();
    inits.push(beta_case_1(&null, &dist_w));
    if let Some(b) = beta_case_2(&null, &dist_w) {
        inits.push(b);
    }
    if let Some(b) = beta_case_3(&null, &dist_w) {
        inits.push(b);
    }
    for axis in 1..4 {
        let mut dir = [0.0; 4];
        dir[axis] = 1.0;
        inits.push(scaled_direction(&null, &dist_w, dir));
    }
    for (a, b, sign) in [(0, 1, 1.0), (0, 1, -1.0), (0, 2, 1.0), (1, 2, 1.0)] {
        let mut dir = [0.0; 4];
        dir[a] = 1.0;
        dir[b] = sign;
        inits.push(scaled_direction(&null, &dist_w, dir));
    }
    let mut candidates: Vec<([f64; 4], f64)> = inits
        .into_iter()
        .map(|b| {
            let betas = gauss_newton_betas(&null, &dist_w, b);
            (betas, distance_residual(&null, &dist_w, &betas))
        })
        .collect();
    candidates.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    candidates.truncate(4);
    let candidates: Vec<[f64; 4]> = candidates.into_iter().map(|(b, _)| b).collect();

    let mut best: Option<(f64, Pose)> = None;
    for betas in candidates {
        let mut control_c = [Vector3::zeros(); 4];
        for (ci, cc) in control_c.iter_mut().enumerate() {
            for (bi, beta) in betas.iter().enumerate() {
                *cc += null[bi].fixed_rows::<3>(3 * ci).into_owned() * *beta;
            }
        }
        let mut cam_pts: Vec<Vector3<f64>> = alphas
            .iter()
            .map(|a| {
                a.iter()
                    .zip(&control_c)
                    .map(|(w, c)| c * *w)
                    .sum::<Vector3<f64>>()
            })
            .collect();
        // The nullspace vector sign is arbitrary; flip to positive depth.
        let mean_z: f64 = cam_pts.iter().map(|p| p.z).sum::<f64>() / n as f64;
        if mean_z < 0.0 {
            for p in &mut cam_pts {
                *p = -*p;
            }
        }
        let Ok(pose) = rigid_fit(points, &cam_pts) else {
            continue;
        };
        // A few reprojection Gauss-Newton steps rescue candidates whose
        // betas landed in a shallow basin.
        let pose = refine_pose_gn(points, pixels, k, &pose, 10);
        let err = reprojection_sse(points, pixels, k, &pose);
        if best.as_ref().is_none_or(|(e, _)| err < *e) {
            best = Some((err, pose));
        }
    }
    best.map(|(_, pose)| pose)
        .ok_or_else(|| Error::DegenerateGeometry("EPnP produced no usable candidate".into()))
}

fn pairs() -> [(usize, usize); 6] {
    [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
}

fn delta(v: &SVector<f64, 12>, i: usize, j: usize) -> Vector3<f64> {
    v.fixed_rows::<3>(3 * i).into_owned() - v.fixed_rows::<3>(3 * j).into_owned()
}

fn beta_case_1(null: &[SVector<f64, 12>], dist_w: &[f64]) -> [f64; 4] {
    let mut num = 0.0;
    let mut den = 0.0;
    for (pi, &(i, j)) in pairs().iter().enumerate() {
        let d = delta(&null[0], i, j).norm();
        num += d * dist_w[pi];
        den += d * d;
    }
    [num / den.max(1e-300), 0.0, 0.0, 0.0]
}

fn beta_case_2(null: &[SVector<f64, 12>], dist_w: &[f64]) -> Option<[f64; 4]> {
    let mut a = DMatrix::<f64>::zeros(6, 3);
    let mut b = DMatrix::<f64>::zeros(6, 1);
    for (pi, &(i, j)) in pairs().iter().enumerate() {
        let d1 = delta(&null[0], i, j);
        let d2 = delta(&null[1], i, j);
        a[(pi, 0)] = d1.norm_squared();
        a[(pi, 1)] = 2.0 * d1.dot(&d2);
        a[(pi, 2)] = d2.norm_squared();
        b[(pi, 0)] = dist_w[pi] * dist_w[pi];
    }
    let sol = a.svd(true, true).solve(&b, 1e-12).ok()?;
    let (b11, b12, b22) = (sol[(0, 0)], sol[(1, 0)], sol[(2, 0)]);
    let beta1 = b11.abs().sqrt() * b11.signum();
    let beta2 = b22.abs().sqrt() * if b12 >= 0.0 { 1.0 } else { -1.0 } * b11.signum();
    Some([beta1, beta2, 0.0, 0.0])
}

fn beta_case_3(null: &[SVector<f64, 12>], dist_w: &[f64]) -> Option<[f64; 4]> {
    let mut a = DMatrix::<f64>::zeros(6, 6);
    let mut b = DMatrix::<f64>::zeros(6, 1);
    for (pi, &(i, j)) in pairs().iter().enumerate() {
        let d1 = delta(&null[0], i, j);
        let d2 = delta(&null[1], i, j);
        let d3 = delta(&null[2], i, j);
        a[(pi, 0)] = d1.norm_squared();
        a[(pi, 1)] = 2.0 * d1.dot(&d2);
        a[(pi, 2)] = d2.norm_squared();
        a[(pi, 3)] = 2.0 * d1.dot(&d3);
        a[(pi, 4)] = 2.0 * d2.dot(&d3);
        a[(pi, 5)] = d3.norm_squared();
        b[(pi, 0)] = dist_w[pi] * dist_w[pi];
    }
    let sol = a.svd(true, true).solve(&b, 1e-12).ok()?;
    let b11 = sol[(0, 0)];
    let beta1 = b11.abs().sqrt() * b11.signum();
    let beta2 = sol[(2, 0)].abs().sqrt() * if sol[(1, 0)] >= 0.0 { 1.0 } else { -1.0 } * b11.signum();
    let beta3 = sol[(5, 0)].abs().sqrt() * if sol[(3, 0)] >= 0.0 { 1.0 } else { -1.0 } * b11.signum();
    Some([beta1, beta2, beta3, 0.0])
}

/// Least-squares scale for a fixed beta direction.
fn scaled_direction(null: &[SVector<f64, 12>], dist_w: &[f64], dir: [f64; 4]) -> [f64; 4] {
    let mut num = 0.0;
    let mut den = 0.0;
    for (pi, &(i, j)) in pairs().iter().enumerate() {
        let mut d = Vector3::zeros();
        for (w, v) in dir.iter().zip(null) {
            d += delta(v, i, j) * *w;
        }
        let norm = d.norm();
        num += norm * dist_w[pi];
        den += norm * norm;
    }
    let s = num / den.max(1e-300);
    [dir[0] * s, dir[1] * s, dir[2] * s, dir[3] * s]
}

fn distance_residual(null: &[SVector<f64, 12>], dist_w: &[f64], betas: &[f64; 4]) -> f64 {
    let mut total = 0.0;
    for (pi, &(i, j)) in pairs().iter().enumerate() {
        let mut d = Vector3::zeros();
        for (b, v) in betas.iter().zip(null) {
            d += delta(v, i, j) * *b;
        }
        let r = d.norm_squared() - dist_w[pi] * dist_w[pi];
        total += r * r;
    }
    total
}

/// Gauss-Newton over the four betas, minimizing the squared mismatch of the
/// camera control-point distances against the known world distances.
fn gauss_newton_betas(
    null: &[SVector<f64, 12>],
    dist_w: &[f64],
    init: [f64; 4],
) -> [f64; 4] {
    let mut betas = init;
    for _ in 0..15 {
        let mut jtj = nalgebra::Matrix4::<f64>::zeros();
        let mut jtr = nalgebra::Vector4::<f64>::zeros();
        for (pi, &(i, j)) in pairs().iter().enumerate() {
            let mut diff = Vector3::zeros();
            let deltas: Vec<Vector3<f64>> = null.iter().map(|v| delta(v, i, j)).collect();
            for (b, d) in betas.iter().zip(&deltas) {
                diff += d * *b;
            }
            let r = diff.norm_squared() - dist_w[pi] * dist_w[pi];
            let grad =
                nalgebra::Vector4::from_fn(|kk, _| 2.0 * diff.dot(&deltas[kk]));
            jtj += grad * grad.transpose();
            jtr += grad * r;
        }
        let Some(step) = (jtj + nalgebra::Matrix4::identity() * 1e-10)
            .try_inverse()
            .map(|inv| -(inv * jtr))
        else {
            break;
        };
        for (b, s) in betas.iter_mut().zip(step.iter()) {
            *b += s;
        }
        if step.norm() < 1e-12 {
            break;
        }
    }
    betas
}

/// Kabsch: least-squares rigid transform with `cam = R * world + t`.
fn rigid_fit(world: &[Vector3<f64>], cam: &[Vector3<f64>]) -> Result<Pose> {
    let n = world.len() as f64;
    let cw = world.iter().sum::<Vector3<f64>>() / n;
    let cc = cam.iter().sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    for (pw, pc) in world.iter().zip(cam) {
        h += (pc - cc) * (pw - cw).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.ok_or_else(|| Error::Numerical("SVD failed in rigid fit".into()))?;
    let v_t = svd.v_t.ok_or_else(|| Error::Numerical("SVD failed in rigid fit".into()))?;
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    Ok(Pose::new(r, cc - r * cw))
}

fn reprojection_sse(
    points: &[Vector3<f64>],
    pixels: &[Vector2<f64>],
    k: &CameraIntrinsics,
    pose: &Pose,
) -> f64 {
    points
        .iter()
        .zip(pixels)
        .map(|(p, px)| {
            let c = pose.transform_point(p);
            match k.project(&c) {
                Ok(proj) => (proj - px).norm_squared(),
                Err(_) => 1e12,
            }
        })
        .sum()
}

/// Gauss-Newton (with Levenberg damping) on squared reprojection error over
/// the pose tangent.
pub fn refine_pose_gn(
    points: &[Vector3<f64>],
    pixels: &[Vector2<f64>],
    k: &CameraIntrinsics,
    init: &Pose,
    iterations: usize,
) -> Pose {
    let mut pose = *init;
    let mut lambda = 1e-8;
    let mut prev_err = reprojection_sse(points, pixels, k, &pose);
    for _ in 0..iterations {
        let mut jtj = Matrix6::<f64>::zeros();
        let mut jtr = Vector6::<f64>::zeros();
        for (p, px) in points.iter().zip(pixels) {
            let c = pose.transform_point(p);
            if c.z <= 1e-9 {
                continue;
            }
            let proj = Vector2::new(k.fx * c.x / c.z + k.cx, k.fy * c.y / c.z + k.cy);
            let r = proj - px;
            let jp = perspective_jacobian(k, &c);
            // d(cam point)/d(tangent) with [rot, trans] ordering.
            let mut jt = SMatrix::<f64, 2, 6>::zeros();
            let rot_block = jp * (-skew(&c));
            jt.fixed_view_mut::<2, 3>(0, 0).copy_from(&rot_block);
            jt.fixed_view_mut::<2, 3>(0, 3).copy_from(&jp);
            jtj += jt.transpose() * jt;
            jtr += jt.transpose() * r;
        }
        let damped = jtj + Matrix6::identity() * lambda;
        let Some(step) = damped.try_inverse().map(|inv| -(inv * jtr)) else {
            break;
        };
        let candidate = se3_exp(&Tangent(step)).compose(&pose);
        let err = reprojection_sse(points, pixels, k, &candidate);
        if err <= prev_err {
            pose = candidate;
            prev_err = err;
            lambda = (lambda * 0.5).max(1e-12);
            if step.norm() < 1e-14 {
                break;
            }
        } else {
            lambda = (lambda * 10.0).min(1e6);
        }
    }
    pose
}

/// RANSAC + EPnP + inlier refit. Returns the pose and the inlier mask.
pub fn solve_pnp_ransac(
    points: &[Vector3<f64>],
    pixels: &[Vector2<f64>],
    k: &CameraIntrinsics,
    cfg: &RansacConfig,
) -> Result<(Pose, Vec<bool>)> {
    let n = points.len();
    if n < 4 || pixels.len() != n {
        return Err(Error::DegenerateGeometry(format!(
            "RANSAC PnP needs >= 4 correspondences, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let thr2 = cfg.px_threshold * cfg.px_threshold;
    let mut best_pose: Option<Pose> = None;
    let mut best_inliers = 0usize;
    let mut best_err = f64::INFINITY;
    let mut needed = cfg.max_iters;

    for iter in 0..cfg.max_iters {
        if iter >= needed {
            break;
        }
        let sample = rand::seq::index::sample(&mut rng, n, 4).into_vec();
        let sp: Vec<Vector3<f64>> = sample.iter().map(|&i| points[i]).collect();
        let sx: Vec<Vector2<f64>> = sample.iter().map(|&i| pixels[i]).collect();
        let Ok(pose) = epnp(&sp, &sx, k) else {
            continue;
        };
        let mut inliers = 0usize;
        let mut err_sum = 0.0;
        for (p, px) in points.iter().zip(pixels) {
            let c = pose.transform_point(p);
            if c.z <= 1e-9 {
                continue;
            }
            let proj = Vector2::new(k.fx * c.x / c.z + k.cx, k.fy * c.y / c.z + k.cy);
            let e2 = (proj - px).norm_squared();
            if e2 < thr2 {
                inliers += 1;
                err_sum += e2;
            }
        }
        if inliers > best_inliers || (inliers == best_inliers && err_sum < best_err) {
            best_inliers = inliers;
            best_err = err_sum;
            best_pose = Some(pose);
            let w = inliers as f64 / n as f64;
            if w > 0.0 {
                let denom = (1.0 - w.powi(4)).max(1e-12).ln();
                let est = ((1.0 - cfg.confidence).ln() / denom).ceil();
                needed = (est.max(1.0) as usize).min(cfg.max_iters);
            }
        }
    }

    let Some(pose) = best_pose else {
        return Err(Error::DegenerateGeometry("no RANSAC model found".into()));
    };
    if best_inliers < 4 {
        return Err(Error::DegenerateGeometry(format!(
            "best RANSAC model has {best_inliers} inliers"
        )));
    }
    // Refit on the inliers, then refresh the mask under the refined pose and
    // refit once more so mask and pose are consistent.
    let mut refined = pose;
    let mut mask = vec![false; n];
    for _ in 0..2 {
        let mut in_pts = Vec::new();
        let mut in_px = Vec::new();
        for (idx, (p, px)) in points.iter().zip(pixels).enumerate() {
            let c = refined.transform_point(p);
            let inlier = c.z > 1e-9 && {
                let proj = Vector2::new(k.fx * c.x / c.z + k.cx, k.fy * c.y / c.z + k.cy);
                (proj - px).norm_squared() < thr2
            };
            mask[idx] = inlier;
            if inlier {
                in_pts.push(*p);
                in_px.push(*px);
            }
        }
        if in_pts.len() < 4 {
            return Err(Error::DegenerateGeometry(format!(
                "only {} inliers after refit",
                in_pts.len()
            )));
        }
        refined = refine_pose_gn(&in_pts, &in_px, k, &refined, 30);
    }
    Ok((refined, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(120.0, 115.0, 64.0, 48.0, 128, 96).unwrap()
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-1.5..1.5),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(2.0..7.0),
                )
            })
            .collect()
    }

    fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
        se3_exp(&Tangent::new(
            Vector3::new(
                rng.random_range(-0.15..0.15),
                rng.random_range(-0.15..0.15),
                rng.random_range(-0.15..0.15),
            ),
            Vector3::new(
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.3..0.3),
            ),
        ))
    }

    fn project_all(
        points: &[Vector3<f64>],
        pose: &Pose,
        k: &CameraIntrinsics,
    ) -> Vec<Vector2<f64>> {
        points
            .iter()
            .map(|p| k.project(&pose.transform_point(p)).unwrap())
            .collect()
    }

    #[test]
    fn epnp_recovers_pose_from_clean_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let kk = k();
        for _ in 0..20 {
            let pose = random_pose(&mut rng);
            let pts = random_points(&mut rng, 12);
            let px = project_all(&pts, &pose, &kk);
            let est = epnp(&pts, &px, &kk).unwrap();
            assert!(est.rotation_distance(&pose) < 1e-4);
            assert!((est.translation - pose.translation).norm() < 1e-4);
        }
    }

    #[test]
    fn ransac_zero_noise_recovers_pose_to_machine_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let kk = k();
        for trial in 0..10 {
            let pose = random_pose(&mut rng);
            let pts = random_points(&mut rng, 40);
            let px = project_all(&pts, &pose, &kk);
            let cfg = RansacConfig {
                seed: trial,
                ..RansacConfig::default()
            };
            let (est, mask) = solve_pnp_ransac(&pts, &px, &kk, &cfg).unwrap();
            assert!(mask.iter().all(|m| *m));
            assert!(
                est.rotation_distance(&pose) < 1e-6,
                "rotation err {}",
                est.rotation_distance(&pose)
            );
            assert!(
                (est.translation - pose.translation).norm() < 1e-6,
                "translation err {}",
                (est.translation - pose.translation).norm()
            );
        }
    }

    #[test]
    fn identity_data_gives_identity_pose() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let kk = k();
        let pts = random_points(&mut rng, 25);
        let px = project_all(&pts, &Pose::identity(), &kk);
        let (est, _) = solve_pnp_ransac(&pts, &px, &kk, &RansacConfig::default()).unwrap();
        assert!((est.rotation - Matrix3::identity()).norm() < 1e-7);
        assert!(est.translation.norm() < 1e-8);
    }

    #[test]
    fn ransac_rejects_injected_outliers() {
        let kk = k();
        let mut total_outliers = 0usize;
        let mut rejected = 0usize;
        for trial in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
            let pose = random_pose(&mut rng);
            let pts = random_points(&mut rng, 60);
            let mut px = project_all(&pts, &pose, &kk);
            // Corrupt 30% of the pixel measurements.
            let n_out = 18;
            let outlier_idx = rand::seq::index::sample(&mut rng, px.len(), n_out).into_vec();
            for &oi in &outlier_idx {
                px[oi] += Vector2::new(
                    rng.random_range(8.0..40.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
                    rng.random_range(8.0..40.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
                );
            }
            let cfg = RansacConfig {
                seed: trial,
                ..RansacConfig::default()
            };
            let (_, mask) = solve_pnp_ransac(&pts, &px, &kk, &cfg).unwrap();
            total_outliers += n_out;
            rejected += outlier_idx.iter().filter(|&&oi| !mask[oi]).count();
        }
        let frac = rejected as f64 / total_outliers as f64;
        assert!(frac >= 0.95, "only rejected {frac:.3} of outliers");
    }

    #[test]
    fn ransac_is_deterministic_for_fixed_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let kk = k();
        let pose = random_pose(&mut rng);
        let pts = random_points(&mut rng, 30);
        let mut px = project_all(&pts, &pose, &kk);
        for i in 0..6 {
            px[i] += Vector2::new(25.0, -14.0);
        }
        let cfg = RansacConfig {
            seed: 9,
            ..RansacConfig::default()
        };
        let (a, ma) = solve_pnp_ransac(&pts, &px, &kk, &cfg).unwrap();
        let (b, mb) = solve_pnp_ransac(&pts, &px, &kk, &cfg).unwrap();
        assert_eq!(ma, mb);
        assert_eq!(a.rotation, b.rotation);
        assert_eq!(a.translation, b.translation);
    }

    #[test]
    fn too_few_points_is_degenerate() {
        let kk = k();
        let pts = vec![Vector3::new(0.0, 0.0, 2.0); 3];
        let px = vec![Vector2::new(64.0, 48.0); 3];
        assert!(matches!(
            solve_pnp_ransac(&pts, &px, &kk, &RansacConfig::default()),
            Err(Error::DegenerateGeometry(_))
        ));
    }
}

