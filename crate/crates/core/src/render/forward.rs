//! Forward rasterization: projection, tile binning, front-to-back blending.

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;

use crate::camera::{perspective_jacobian, CameraIntrinsics};
use crate::gaussians::GaussianMap;
use crate::grid::Grid;
use crate::se3::Pose;

use super::{Entry, Projected, RenderOutput, RenderSettings};

const Z_NEAR: f64 = 1e-6;

pub(crate) fn project_all(
    map: &GaussianMap,
    pose: &Pose,
    k: &CameraIntrinsics,
    settings: &RenderSettings,
) -> Vec<Projected> {
    let w = pose.rotation;
    map.prims()
        .par_iter()
        .enumerate()
        .filter_map(|(idx, prim)| {
            let mean_cam = pose.transform_point(&prim.mean);
            if mean_cam.z <= Z_NEAR {
                return None;
            }
            let opacity = prim.opacity();
            if opacity <= settings.alpha_cutoff {
                return None;
            }
            let mean2d = Vector2::new(
                k.fx * mean_cam.x / mean_cam.z + k.cx,
                k.fy * mean_cam.y / mean_cam.z + k.cy,
            );
            let jac = perspective_jacobian(k, &mean_cam);
            let cov_cam = w * prim.covariance() * w.transpose();
            let cov2 = jac * cov_cam * jac.transpose();
            let a = cov2[(0, 0)] + settings.blur;
            let b = cov2[(0, 1)];
            let c = cov2[(1, 1)] + settings.blur;
            let det = a * c - b * b;
            if det <= 0.0 || !det.is_finite() {
                return None;
            }
            let conic = (c / det, -b / det, a / det);
            let q_max = 2.0 * (opacity / settings.alpha_cutoff).ln();
            if q_max <= 0.0 {
                return None;
            }
            // Ellipse q(d) = q_max has axis-aligned extents sqrt(q_max * cov).
            let rx = (q_max * a).sqrt();
            let ry = (q_max * c).sqrt();
            let x0 = (mean2d.x - rx).floor().max(0.0) as i32;
            let x1 = (mean2d.x + rx).ceil().min((k.width - 1) as f64) as i32;
            let y0 = (mean2d.y - ry).floor().max(0.0) as i32;
            let y1 = (mean2d.y + ry).ceil().min((k.height - 1) as f64) as i32;
            if x0 > x1 || y0 > y1 || mean2d.x + rx < 0.0 || mean2d.y + ry < 0.0 {
                return None;
            }
            Some(Projected {
                map_idx: idx as u32,
                mean_cam,
                mean2d,
                conic,
                opacity,
                color: prim.color,
                q_max,
                x0,
                x1,
                y0,
                y1,
            })
        })
        .collect()
}

struct TileResult {
    tile: usize,
    color: Vec<Vector3<f64>>,
    depth: Vec<f64>,
    alpha: Vec<f64>,
    /// (pixel index local to the tile, slot, alpha) in raster order.
    entries: Vec<(u16, u32, f64)>,
}

pub(crate) fn forward(
    map: &GaussianMap,
    pose: &Pose,
    k: &CameraIntrinsics,
    settings: &RenderSettings,
) -> RenderOutput {
    let (w, h) = (k.width, k.height);
    let projected = project_all(map, pose, k, settings);

    let tile = settings.tile.max(1);
    let tiles_x = w.div_ceil(tile);
    let tiles_y = h.div_ceil(tile);
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); tiles_x * tiles_y];
    for (slot, p) in projected.iter().enumerate() {
        let tx0 = p.x0 as usize / tile;
        let tx1 = p.x1 as usize / tile;
        let ty0 = p.y0 as usize / tile;
        let ty1 = p.y1 as usize / tile;
        for ty in ty0..=ty1 {
            for tx in tx0..=tx1 {
                bins[ty * tiles_x + tx].push(slot as u32);
            }
        }
    }
    for bin in &mut bins {
        bin.sort_unstable_by(|&a, &b| {
            let za = projected[a as usize].mean_cam.z;
            let zb = projected[b as usize].mean_cam.z;
            za.partial_cmp(&zb).unwrap().then(a.cmp(&b))
        });
    }

    let results: Vec<TileResult> = bins
        .par_iter()
        .enumerate()
        .map(|(t, bin)| {
            let tx = t % tiles_x;
            let ty = t / tiles_x;
            let px0 = tx * tile;
            let py0 = ty * tile;
            let tw = tile.min(w - px0);
            let th = tile.min(h - py0);
            let mut res = TileResult {
                tile: t,
                color: vec![Vector3::zeros(); tw * th],
                depth: vec![0.0; tw * th],
                alpha: vec![0.0; tw * th],
                entries: Vec::new(),
            };
            if bin.is_empty() {
                return res;
            }
            for lj in 0..th {
                let j = (py0 + lj) as i32;
                for li in 0..tw {
                    let i = (px0 + li) as i32;
                    let local = lj * tw + li;
                    let (fx_px, fy_px) = (i as f64, j as f64);
                    let mut transmittance = 1.0;
                    let mut color = Vector3::zeros();
                    let mut depth = 0.0;
                    let mut alpha_sum = 0.0;
                    for &slot in bin {
                        let p = &projected[slot as usize];
                        if i < p.x0 || i > p.x1 || j < p.y0 || j > p.y1 {
                            continue;
                        }
                        let dx = fx_px - p.mean2d.x;
                        let dy = fy_px - p.mean2d.y;
                        let q = p.conic.0 * dx * dx
                            + 2.0 * p.conic.1 * dx * dy
                            + p.conic.2 * dy * dy;
                        if q > p.q_max {
                            continue;
                        }
                        let alpha = p.opacity * (-0.5 * q).exp();
                        if alpha < settings.alpha_cutoff {
                            continue;
                        }
                        let weight = alpha * transmittance;
                        color += p.color * weight;
                        depth += p.mean_cam.z * weight;
                        alpha_sum += weight;
                        res.entries.push((local as u16, slot, alpha));
                        transmittance *= 1.0 - alpha;
                        if transmittance < settings.transmittance_floor {
                            break;
                        }
                    }
                    res.color[local] = color;
                    res.depth[local] = depth;
                    res.alpha[local] = alpha_sum;
                }
            }
            res
        })
        .collect();

    // Stitch tile buffers into full grids and a CSR contributor table in
    // global pixel order.
    let mut color = Grid::filled(w, h, Vector3::zeros());
    let mut depth = Grid::filled(w, h, 0.0);
    let mut alpha_sum = Grid::filled(w, h, 0.0);
    let mut counts = vec![0u32; w * h];
    for res in &results {
        let tx = res.tile % tiles_x;
        let ty = res.tile / tiles_x;
        let px0 = tx * tile;
        let py0 = ty * tile;
        let tw = tile.min(w - px0);
        let th = tile.min(h - py0);
        for lj in 0..th {
            for li in 0..tw {
                let local = lj * tw + li;
                let global = (py0 + lj) * w + px0 + li;
                color.as_mut_slice()[global] = res.color[local];
                depth.as_mut_slice()[global] = res.depth[local];
                alpha_sum.as_mut_slice()[global] = res.alpha[local];
            }
        }
        for &(local, _, _) in &res.entries {
            let li = local as usize % tw;
            let lj = local as usize / tw;
            counts[(py0 + lj) * w + px0 + li] += 1;
        }
    }
    let mut offsets = vec![0u32; w * h + 1];
    for px in 0..w * h {
        offsets[px + 1] = offsets[px] + counts[px];
    }
    let mut entries = vec![
        Entry {
            slot: 0,
            alpha: 0.0
        };
        offsets[w * h] as usize
    ];
    let mut cursor: Vec<u32> = offsets[..w * h].to_vec();
    for res in &results {
        let tx = res.tile % tiles_x;
        let ty = res.tile / tiles_x;
        let px0 = tx * tile;
        let py0 = ty * tile;
        let tw = tile.min(w - px0);
        // Tile-local entries are already in front-to-back order per pixel;
        // scattering in order preserves that.
        for &(local, slot, alpha) in &res.entries {
            let li = local as usize % tw;
            let lj = local as usize / tw;
            let global = (py0 + lj) * w + px0 + li;
            entries[cursor[global] as usize] = Entry { slot, alpha };
            cursor[global] += 1;
        }
    }

    RenderOutput {
        color,
        depth,
        alpha_sum,
        offsets,
        entries,
        projected,
        map_revision: map.revision(),
        map_len: map.len(),
        pose: *pose,
        k: *k,
        settings: *settings,
    }
}
