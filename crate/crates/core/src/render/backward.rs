//! Analytic gradients of the rendered image with respect to the camera pose
//! tangent and all Gaussian parameters.
//!
//! The pixel pass accumulates, per projected primitive, gradients of the loss
//! with respect to its screen-space quantities (2D mean, 2D covariance, camera
//! z, color, opacity). A per-primitive finalize pass then chains those through
//! the projection: perspective Jacobian, camera-frame covariance, the world
//! covariance factorization R S S^T R^T and the quaternion normalization.

use nalgebra::{Matrix2, Matrix3, Vector3, Vector4, Vector6};
use rayon::prelude::*;

use crate::camera::perspective_jacobian;
use crate::error::{Error, Result};
use crate::gaussians::GaussianMap;
use crate::grid::Grid;
use crate::se3::Tangent;

use super::RenderOutput;

/// Fixed pixel-band count; gradients are reduced in band order so results do
/// not depend on the thread pool.
const BANDS: usize = 8;

/// Per-pixel upstream gradients. Any grid left out contributes nothing.
#[derive(Debug, Clone, Copy, Default)]
pub struct PixelGrads<'a> {
    pub color: Option<&'a Grid<Vector3<f64>>>,
    pub depth: Option<&'a Grid<f64>>,
}

/// Gradients for every primitive in the map, indexed like `map.prims()`.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub mean: Vec<Vector3<f64>>,
    pub quat: Vec<Vector4<f64>>,
    pub log_scale: Vec<Vector3<f64>>,
    pub opacity_logit: Vec<f64>,
    pub color: Vec<Vector3<f64>>,
}

impl ParamGrads {
    fn zeros(n: usize) -> Self {
        ParamGrads {
            mean: vec![Vector3::zeros(); n],
            quat: vec![Vector4::zeros(); n],
            log_scale: vec![Vector3::zeros(); n],
            opacity_logit: vec![0.0; n],
            color: vec![Vector3::zeros(); n],
        }
    }
}

#[derive(Debug, Clone)]
pub struct BackwardResult {
    pub pose: Option<Tangent>,
    pub params: Option<ParamGrads>,
}

/// Screen-space accumulator layout per projected primitive:
/// [gm2.x, gm2.y, gSxx, gSxy, gSyy, gz, gc.r, gc.g, gc.b, g_opacity]
type ScreenAcc = [f64; 10];

pub fn backward_pose(out: &RenderOutput, map: &GaussianMap, grads: &PixelGrads) -> Result<Tangent> {
    Ok(backward(out, map, grads, true, false)?.pose.unwrap())
}

pub fn backward_params(
    out: &RenderOutput,
    map: &GaussianMap,
    grads: &PixelGrads,
) -> Result<ParamGrads> {
    Ok(backward(out, map, grads, false, true)?.params.unwrap())
}

pub fn backward(
    out: &RenderOutput,
    map: &GaussianMap,
    grads: &PixelGrads,
    want_pose: bool,
    want_params: bool,
) -> Result<BackwardResult> {
    if out.map_revision != map.revision() || out.map_len != map.len() {
        return Err(Error::ContractViolation(
            "render output is stale: the map changed since the forward pass".into(),
        ));
    }
    let (w, h) = (out.k.width, out.k.height);
    if let Some(g) = grads.color {
        if g.width() != w || g.height() != h {
            return Err(Error::InvalidArgument("color gradient shape mismatch".into()));
        }
    }
    if let Some(g) = grads.depth {
        if g.width() != w || g.height() != h {
            return Err(Error::InvalidArgument("depth gradient shape mismatch".into()));
        }
    }

    let n_proj = out.projected.len();
    let rows_per_band = h.div_ceil(BANDS).max(1);

    let band_accums: Vec<Vec<ScreenAcc>> = (0..BANDS)
        .into_par_iter()
        .map(|band| {
            let mut acc = vec![[0.0; 10]; n_proj];
            let mut transmittances: Vec<f64> = Vec::with_capacity(64);
            let j0 = band * rows_per_band;
            let j1 = ((band + 1) * rows_per_band).min(h);
            for j in j0..j1 {
                for i in 0..w {
                    let px = j * w + i;
                    let gc = grads
                        .color
                        .map(|g| g.as_slice()[px])
                        .unwrap_or_else(Vector3::zeros);
                    let gd = grads.depth.map(|g| g.as_slice()[px]).unwrap_or(0.0);
                    if gc == Vector3::zeros() && gd == 0.0 {
                        continue;
                    }
                    let es =
                        &out.entries[out.offsets[px] as usize..out.offsets[px + 1] as usize];
                    if es.is_empty() {
                        continue;
                    }
                    transmittances.clear();
                    let mut t = 1.0;
                    for e in es {
                        transmittances.push(t);
                        t *= 1.0 - e.alpha;
                    }
                    // Back-to-front with suffix sums of the later terms.
                    let mut s_color = Vector3::zeros();
                    let mut s_z = 0.0;
                    for idx in (0..es.len()).rev() {
                        let e = &es[idx];
                        let p = &out.projected[e.slot as usize];
                        let t_i = transmittances[idx];
                        let weight = e.alpha * t_i;
                        let a = &mut acc[e.slot as usize];
                        a[6] += gc.x * weight;
                        a[7] += gc.y * weight;
                        a[8] += gc.z * weight;
                        a[5] += gd * weight;
                        let one_minus = 1.0 - e.alpha;
                        let dc_dalpha = p.color * t_i - s_color / one_minus;
                        let dz_dalpha = p.mean_cam.z * t_i - s_z / one_minus;
                        let dl_dalpha = gc.dot(&dc_dalpha) + gd * dz_dalpha;
                        let gaussian = e.alpha / p.opacity;
                        a[9] += dl_dalpha * gaussian;
                        // alpha = opacity * exp(-q/2) with q the conic form.
                        let gg = dl_dalpha * e.alpha;
                        let dx = i as f64 - p.mean2d.x;
                        let dy = j as f64 - p.mean2d.y;
                        let vx = p.conic.0 * dx + p.conic.1 * dy;
                        let vy = p.conic.1 * dx + p.conic.2 * dy;
                        a[0] += gg * vx;
                        a[1] += gg * vy;
                        a[2] += 0.5 * gg * vx * vx;
                        a[3] += 0.5 * gg * vx * vy;
                        a[4] += 0.5 * gg * vy * vy;
                        s_color += p.color * weight;
                        s_z += p.mean_cam.z * weight;
                    }
                }
            }
            acc
        })
        .collect();

    let mut screen = vec![[0.0f64; 10]; n_proj];
    for band in band_accums {
        for (dst, src) in screen.iter_mut().zip(band) {
            for k in 0..10 {
                dst[k] += src[k];
            }
        }
    }

    let mut pose_grad = Vector6::zeros();
    let mut params = want_params.then(|| ParamGrads::zeros(map.len()));
    let w_rot = out.pose.rotation;

    for (slot, p) in out.projected.iter().enumerate() {
        let acc = &screen[slot];
        if acc.iter().all(|v| *v == 0.0) {
            continue;
        }
        let prim = &map.prims()[p.map_idx as usize];
        let gm2 = nalgebra::Vector2::new(acc[0], acc[1]);
        let g_sigma = Matrix2::new(acc[2], acc[3], acc[3], acc[4]);
        let jac = perspective_jacobian(&out.k, &p.mean_cam);
        let cov_world = prim.covariance();
        let cov_cam = w_rot * cov_world * w_rot.transpose();

        // Screen mean and z channel.
        let mut g_mean_cam = jac.transpose() * gm2;
        g_mean_cam.z += acc[5];

        // Covariance chain: Sigma2D = J M J^T + blur.
        let g_jac = 2.0 * g_sigma * jac * cov_cam;
        let (x, y, z) = (p.mean_cam.x, p.mean_cam.y, p.mean_cam.z);
        let z2 = z * z;
        let z3 = z2 * z;
        let (fx, fy) = (out.k.fx, out.k.fy);
        g_mean_cam.x += g_jac[(0, 2)] * (-fx / z2);
        g_mean_cam.y += g_jac[(1, 2)] * (-fy / z2);
        g_mean_cam.z += g_jac[(0, 0)] * (-fx / z2)
            + g_jac[(1, 1)] * (-fy / z2)
            + g_jac[(0, 2)] * (2.0 * fx * x / z3)
            + g_jac[(1, 2)] * (2.0 * fy * y / z3);
        let g_cov_cam = jac.transpose() * g_sigma * jac;

        if want_pose {
            pose_grad[3] += g_mean_cam.x;
            pose_grad[4] += g_mean_cam.y;
            pose_grad[5] += g_mean_cam.z;
            let cross = p.mean_cam.cross(&g_mean_cam);
            pose_grad[0] += cross.x;
            pose_grad[1] += cross.y;
            pose_grad[2] += cross.z;
            // Rotation also enters through the covariance: M = W Sigma_w W^T.
            let g_w = 2.0 * g_cov_cam * w_rot * cov_world;
            let c = g_w * w_rot.transpose();
            pose_grad[0] += c[(2, 1)] - c[(1, 2)];
            pose_grad[1] += c[(0, 2)] - c[(2, 0)];
            pose_grad[2] += c[(1, 0)] - c[(0, 1)];
        }

        if let Some(pg) = params.as_mut() {
            let mi = p.map_idx as usize;
            pg.color[mi] += Vector3::new(acc[6], acc[7], acc[8]);
            let o = p.opacity;
            pg.opacity_logit[mi] += acc[9] * o * (1.0 - o);
            pg.mean[mi] += w_rot.transpose() * g_mean_cam;
            // Sigma_w = V V^T with V = R diag(s).
            let g_sigma_w = w_rot.transpose() * g_cov_cam * w_rot;
            let rot = prim.rotation();
            let s = prim.scale();
            let v = Matrix3::from_columns(&[
                rot.column(0) * s.x,
                rot.column(1) * s.y,
                rot.column(2) * s.z,
            ]);
            let g_v = 2.0 * g_sigma_w * v;
            let mut g_rot = Matrix3::zeros();
            for c in 0..3 {
                let sc = s[c];
                let gv_col = g_v.column(c);
                // d/ds_c = R_col . gV_col, and d/d(log s_c) = s_c * d/ds_c.
                pg.log_scale[mi][c] += rot.column(c).dot(&gv_col) * sc;
                g_rot.column_mut(c).copy_from(&(gv_col * sc));
            }
            pg.quat[mi] += quat_grad(&prim.quat, &g_rot);
        }
    }

    Ok(BackwardResult {
        pose: want_pose.then(|| Tangent(pose_grad)),
        params,
    })
}

/// Chain a rotation-matrix gradient back to the raw quaternion, including the
/// normalization q / |q|.
fn quat_grad(quat: &Vector4<f64>, g_rot: &Matrix3<f64>) -> Vector4<f64> {
    let n = quat.norm();
    let q = quat / n;
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    let dw = Matrix3::new(0.0, -z, y, z, 0.0, -x, -y, x, 0.0) * 2.0;
    let dx = Matrix3::new(0.0, y, z, y, -2.0 * x, -w, z, w, -2.0 * x) * 2.0;
    let dy = Matrix3::new(-2.0 * y, x, w, x, 0.0, z, -w, z, -2.0 * y) * 2.0;
    let dz = Matrix3::new(-2.0 * z, -w, x, w, -2.0 * z, y, x, y, 0.0) * 2.0;
    let g_unit = Vector4::new(
        g_rot.dot(&dw),
        g_rot.dot(&dx),
        g_rot.dot(&dy),
        g_rot.dot(&dz),
    );
    (g_unit - q * q.dot(&g_unit)) / n
}
