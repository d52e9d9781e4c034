//! Patch-based scale alignment of an external pointmap to the rendered
//! scene scale, plus the adjacent-keyframe remedy path.
//!
//! The iteration: segment both depth maps into P x P patches, keep patches
//! whose mean/std statistics agree within relative tolerances, z-normalize
//! each candidate patch, collect pixels with small normalized residual as
//! "correct points", and rescale the external map by the ratio of means over
//! that set. Patch statistics, normalization, residuals and means all use
//! the z channel.
//!
//! The candidate gate is not scale-invariant, so each call bootstraps with
//! the ratio of valid-depth medians; that preliminary factor telescopes out
//! of the final scale, which always equals the measured ratio over the final
//! correct-point set.

use crate::error::{Error, Result};
use crate::pointmap::Pointmap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentConfig {
    /// Patch edge P in pixels.
    pub patch_size: usize,
    /// Relative tolerance on patch means.
    pub delta_mu: f64,
    /// Relative tolerance on patch standard deviations.
    pub delta_sigma: f64,
    /// Normalized-residual threshold for correct points.
    pub epsilon_r: f64,
    pub max_iter: usize,
    /// Minimum correct-point fraction of the full pixel count.
    pub tau: f64,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        AlignmentConfig {
            patch_size: 10,
            delta_mu: 0.3,
            delta_sigma: 0.3,
            epsilon_r: 0.1,
            max_iter: 3,
            tau: 0.01,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AlignmentResult {
    /// Total factor applied to the input map: aligned = scale * input.
    pub scale: f64,
    pub aligned: Pointmap,
    /// Pixels selected as correct points in the final iteration.
    pub correct_points: Vec<(usize, usize)>,
    pub used_remedy: bool,
    pub iterations_run: usize,
    /// Per-iteration debug record for the alignment log.
    pub trace: Vec<IterationRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub candidates: usize,
    pub correct_points: usize,
    pub sigma_step: f64,
}

#[derive(Debug, Clone)]
pub enum AlignOutcome {
    Aligned(AlignmentResult),
    /// Too few candidate patches or correct points; the caller should try
    /// the adjacent-keyframe remedy.
    RemedyNeeded { iterations_run: usize },
}

struct ZMaps {
    width: usize,
    height: usize,
    xr_z: Vec<f64>,
    xp_z: Vec<f64>,
    both: Vec<bool>,
}

fn extract(xr: &Pointmap, xp: &Pointmap) -> Result<ZMaps> {
    if !xr.same_shape(xp) {
        return Err(Error::InvalidArgument(format!(
            "pointmap shapes differ: {}x{} vs {}x{}",
            xr.width(),
            xr.height(),
            xp.width(),
            xp.height()
        )));
    }
    let (w, h) = (xr.width(), xr.height());
    let mut xr_z = vec![0.0; w * h];
    let mut xp_z = vec![0.0; w * h];
    let mut both = vec![false; w * h];
    for j in 0..h {
        for i in 0..w {
            let idx = j * w + i;
            if xr.is_valid(i, j) && xp.is_valid(i, j) {
                xr_z[idx] = xr.z(i, j);
                xp_z[idx] = xp.z(i, j);
                both[idx] = true;
            }
        }
    }
    Ok(ZMaps {
        width: w,
        height: h,
        xr_z,
        xp_z,
        both,
    })
}

struct IterationStats {
    candidates: usize,
    correct_points: Vec<(usize, usize)>,
    sigma_step: f64,
}

/// One alignment iteration at the current cumulative scale.
fn iteration(z: &ZMaps, cum: f64, cfg: &AlignmentConfig) -> IterationStats {
    let p = cfg.patch_size;
    let min_valid = (p * p).div_ceil(2);
    let mut correct_points = Vec::new();
    let mut candidates = 0usize;
    let mut sum_r = 0.0;
    let mut sum_p = 0.0;
    for pj in (0..z.height).step_by(p) {
        for pi in (0..z.width).step_by(p) {
            let i1 = (pi + p).min(z.width);
            let j1 = (pj + p).min(z.height);
            // Patch statistics over mutually valid pixels.
            let mut n = 0usize;
            let mut mr = 0.0;
            let mut mp = 0.0;
            for j in pj..j1 {
                for i in pi..i1 {
                    let idx = j * z.width + i;
                    if z.both[idx] {
                        n += 1;
                        mr += z.xr_z[idx];
                        mp += cum * z.xp_z[idx];
                    }
                }
            }
            if n < min_valid {
                continue;
            }
            mr /= n as f64;
            mp /= n as f64;
            let mut vr = 0.0;
            let mut vp = 0.0;
            for j in pj..j1 {
                for i in pi..i1 {
                    let idx = j * z.width + i;
                    if z.both[idx] {
                        vr += (z.xr_z[idx] - mr) * (z.xr_z[idx] - mr);
                        vp += (cum * z.xp_z[idx] - mp) * (cum * z.xp_z[idx] - mp);
                    }
                }
            }
            let sr = (vr / n as f64).sqrt();
            let sp = (vp / n as f64).sqrt();
            if (mr - mp).abs() >= cfg.delta_mu * mp || (sr - sp).abs() >= cfg.delta_sigma * sp {
                continue;
            }
            candidates += 1;
            if sr <= 0.0 || sp <= 0.0 {
                continue;
            }
            for j in pj..j1 {
                for i in pi..i1 {
                    let idx = j * z.width + i;
                    if !z.both[idx] {
                        continue;
                    }
                    let nr = (z.xr_z[idx] - mr) / sr;
                    let np = (cum * z.xp_z[idx] - mp) / sp;
                    if (nr - np).abs() < cfg.epsilon_r {
                        correct_points.push((i, j));
                        sum_r += z.xr_z[idx];
                        sum_p += cum * z.xp_z[idx];
                    }
                }
            }
        }
    }
    let sigma_step = if correct_points.is_empty() || sum_p <= 0.0 {
        1.0
    } else {
        sum_r / sum_p
    };
    IterationStats {
        candidates,
        correct_points,
        sigma_step,
    }
}

fn median_ratio(z: &ZMaps) -> Option<f64> {
    let mut rs: Vec<f64> = Vec::new();
    let mut ps: Vec<f64> = Vec::new();
    for idx in 0..z.both.len() {
        if z.both[idx] {
            rs.push(z.xr_z[idx]);
            ps.push(z.xp_z[idx]);
        }
    }
    if rs.is_empty() {
        return None;
    }
    rs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Some(rs[rs.len() / 2] / ps[ps.len() / 2])
}

/// Align `xp` to the scale of the rendered map `xr`. Signals `RemedyNeeded`
/// when an iteration finds no candidate patches or too few correct points.
pub fn align(xr: &Pointmap, xp: &Pointmap, cfg: &AlignmentConfig) -> Result<AlignOutcome> {
    let z = extract(xr, xp)?;
    let n_p = (z.width * z.height) as f64;
    let Some(prescale) = median_ratio(&z) else {
        return Ok(AlignOutcome::RemedyNeeded { iterations_run: 0 });
    };
    let mut cum = prescale;
    let mut last: Option<IterationStats> = None;
    let mut iterations_run = 0;
    let mut trace = Vec::new();
    for _ in 0..cfg.max_iter {
        let stats = iteration(&z, cum, cfg);
        iterations_run += 1;
        trace.push(IterationRecord {
            iteration: iterations_run,
            candidates: stats.candidates,
            correct_points: stats.correct_points.len(),
            sigma_step: stats.sigma_step,
        });
        if stats.candidates == 0 || (stats.correct_points.len() as f64) < cfg.tau * n_p {
            return Ok(AlignOutcome::RemedyNeeded { iterations_run });
        }
        cum *= stats.sigma_step;
        let step = stats.sigma_step;
        last = Some(stats);
        if (step - 1.0).abs() < 1e-4 {
            break;
        }
    }
    let last = last.expect("max_iter >= 1");
    Ok(AlignOutcome::Aligned(AlignmentResult {
        scale: cum,
        aligned: xp.scaled(cum),
        correct_points: last.correct_points,
        used_remedy: false,
        iterations_run,
        trace,
    }))
}

/// Remedy path: transfer scale from the adjacent keyframe's already-aligned
/// pointmap through matched pixels, then run one more alignment iteration.
/// If that iteration finds enough correct points its refinement is adopted;
/// otherwise the remedial factor stands on its own.
pub fn align_with_remedy(
    xr: &Pointmap,
    xp_n: &Pointmap,
    aligned_prev: &Pointmap,
    matches: &[((usize, usize), (usize, usize))],
    cfg: &AlignmentConfig,
) -> Result<AlignmentResult> {
    let mut sum_prev = 0.0;
    let mut sum_cur = 0.0;
    let mut used = 0usize;
    for ((ia, ja), (ib, jb)) in matches {
        if aligned_prev.is_valid(*ia, *ja) && xp_n.is_valid(*ib, *jb) {
            sum_prev += aligned_prev.z(*ia, *ja);
            sum_cur += xp_n.z(*ib, *jb);
            used += 1;
        }
    }
    if used == 0 || sum_cur <= 0.0 {
        return Err(Error::DegenerateGeometry(
            "scale remedy failed: no usable matches to the adjacent keyframe".into(),
        ));
    }
    let remedial = sum_prev / sum_cur;

    let z = extract(xr, xp_n)?;
    let n_p = (z.width * z.height) as f64;
    let stats = iteration(&z, remedial, cfg);
    let sufficient =
        stats.candidates > 0 && (stats.correct_points.len() as f64) >= cfg.tau * n_p;
    let scale = if sufficient {
        remedial * stats.sigma_step
    } else {
        remedial
    };
    let trace = vec![IterationRecord {
        iteration: 1,
        candidates: stats.candidates,
        correct_points: stats.correct_points.len(),
        sigma_step: stats.sigma_step,
    }];
    Ok(AlignmentResult {
        scale,
        aligned: xp_n.scaled(scale),
        correct_points: if sufficient {
            stats.correct_points
        } else {
            Vec::new()
        },
        used_remedy: true,
        iterations_run: 1,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::camera::{unproject, CameraIntrinsics};
    use crate::grid::Grid;

    fn k40() -> CameraIntrinsics {
        CameraIntrinsics::new(45.0, 45.0, 20.0, 15.0, 40, 30).unwrap()
    }

    /// Smooth positive depth field, no holes.
    fn smooth_map() -> Pointmap {
        let k = k40();
        let mut depth = Grid::filled(40, 30, 0.0);
        for j in 0..30 {
            for i in 0..40 {
                *depth.get_mut(i, j) = 3.0
                    + 0.8 * ((i as f64) / 7.0).sin()
                    + 0.6 * ((j as f64) / 5.0).cos()
                    + 0.02 * i as f64;
            }
        }
        unproject(&depth, &k).unwrap()
    }

    fn align_ok(xr: &Pointmap, xp: &Pointmap, cfg: &AlignmentConfig) -> AlignmentResult {
        match align(xr, xp, cfg).unwrap() {
            AlignOutcome::Aligned(r) => r,
            AlignOutcome::RemedyNeeded { .. } => panic!("unexpected remedy signal"),
        }
    }

    #[test]
    fn identity_input_gives_unit_scale_and_full_cp() {
        let xr = smooth_map();
        let res = align_ok(&xr, &xr.clone(), &AlignmentConfig::default());
        assert_eq!(res.scale, 1.0);
        assert_eq!(res.correct_points.len(), xr.valid_count());
        assert!(!res.used_remedy);
    }

    #[test]
    fn uniform_half_scale_recovers_two_exactly() {
        let xr = smooth_map();
        let xp = xr.scaled(0.5);
        let res = align_ok(&xr, &xp, &AlignmentConfig::default());
        assert_eq!(res.scale, 2.0);
        assert_eq!(res.correct_points.len(), xr.valid_count());
        for (i, j, p, _) in res.aligned.iter_valid() {
            assert!((p - xr.point(i, j)).norm() < 1e-12);
        }
    }

    /// Region mask covering roughly `fraction` of the image in contiguous
    /// blocks. Outliers in real pointmaps are regional (bad surfaces), and
    /// patch candidacy only has discriminative power when contamination is
    /// clustered rather than i.i.d. per pixel.
    fn outlier_blocks(
        rng: &mut ChaCha8Rng,
        width: usize,
        height: usize,
        fraction: f64,
    ) -> Grid<bool> {
        let mut mask = Grid::filled(width, height, false);
        let target = (fraction * (width * height) as f64) as usize;
        let mut covered = 0usize;
        while covered < target {
            let bw = rng.random_range(6..14).min(width);
            let bh = rng.random_range(6..14).min(height);
            let x0 = rng.random_range(0..=width - bw);
            let y0 = rng.random_range(0..=height - bh);
            for j in y0..y0 + bh {
                for i in x0..x0 + bw {
                    if !*mask.get(i, j) {
                        *mask.get_mut(i, j) = true;
                        covered += 1;
                    }
                }
            }
        }
        mask
    }

    /// Scaled + noisy + outlier-contaminated input: the recovered factor
    /// stays within one percent.
    #[test]
    fn noisy_outlier_recovery_within_one_percent() {
        let xr = smooth_map();
        let cfg = AlignmentConfig::default();
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = 1.3;
            let blocks = outlier_blocks(&mut rng, xr.width(), xr.height(), 0.10);
            let mut xp = Pointmap::new_invalid(xr.width(), xr.height());
            for (i, j, p, c) in xr.iter_valid() {
                let noise = 1.0 + 0.01 * rng.random_range(-1.0..1.0);
                let factor = if *blocks.get(i, j) { 5.0 } else { 1.0 };
                xp.set(i, j, p / s * noise * factor, c);
            }
            let res = align_ok(&xr, &xp, &cfg);
            assert!(
                (res.scale - s).abs() < 0.01 * s,
                "seed {seed}: recovered {} for true {s}",
                res.scale
            );
        }
    }

    #[test]
    fn homogeneity_aligned_output_ignores_input_scale() {
        let xr = smooth_map();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut xp = Pointmap::new_invalid(xr.width(), xr.height());
        for (i, j, p, c) in xr.iter_valid() {
            xp.set(i, j, p / 1.4 * (1.0 + 0.005 * rng.random_range(-1.0..1.0)), c);
        }
        let cfg = AlignmentConfig::default();
        let base = align_ok(&xr, &xp, &cfg);
        for k in [0.1, 10.0] {
            let scaled_in = xp.scaled(k);
            let res = align_ok(&xr, &scaled_in, &cfg);
            let rel = (res.scale - base.scale / k).abs() / (base.scale / k);
            assert!(rel < 1e-9, "k={k}: scale {} vs {}", res.scale, base.scale / k);
            for (i, j, p, _) in res.aligned.iter_valid() {
                let q = base.aligned.point(i, j);
                assert!((p - q).norm() <= 1e-9 * q.norm().max(1.0), "k={k} pixel ({i},{j})");
            }
            assert_eq!(res.correct_points, base.correct_points);
        }
    }

    #[test]
    fn aligning_an_aligned_map_returns_unit_scale() {
        let xr = smooth_map();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let blocks = outlier_blocks(&mut rng, xr.width(), xr.height(), 0.08);
        let mut xp = Pointmap::new_invalid(xr.width(), xr.height());
        for (i, j, p, c) in xr.iter_valid() {
            let f = if *blocks.get(i, j) { 4.0 } else { 1.0 };
            xp.set(
                i,
                j,
                p / 2.2 * (1.0 + 0.01 * rng.random_range(-1.0..1.0)) * f,
                c,
            );
        }
        let cfg = AlignmentConfig::default();
        let first = align_ok(&xr, &xp, &cfg);
        let second = align_ok(&xr, &first.aligned, &cfg);
        assert!(
            (second.scale - 1.0).abs() < 1e-6,
            "idempotent scale {}",
            second.scale
        );
    }

    #[test]
    fn positive_scale_always() {
        let xr = smooth_map();
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let s = rng.random_range(0.2..4.0);
            let mut xp = Pointmap::new_invalid(xr.width(), xr.height());
            for (i, j, p, c) in xr.iter_valid() {
                xp.set(i, j, p / s * (1.0 + 0.02 * rng.random_range(-1.0..1.0)), c);
            }
            if let AlignOutcome::Aligned(res) = align(&xr, &xp, &AlignmentConfig::default()).unwrap() {
                assert!(res.scale > 0.0);
            }
        }
    }

    #[test]
    fn correct_point_selection_is_symmetric_in_the_two_maps() {
        let xr = smooth_map();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut xp = Pointmap::new_invalid(xr.width(), xr.height());
        for (i, j, p, c) in xr.iter_valid() {
            xp.set(i, j, p * (1.0 + 0.03 * rng.random_range(-1.0..1.0)), c);
        }
        let za = extract(&xr, &xp).unwrap();
        let zb = extract(&xp, &xr).unwrap();
        let cfg = AlignmentConfig::default();
        let sa = iteration(&za, 1.0, &cfg);
        let sb = iteration(&zb, 1.0, &cfg);
        // The normalized-residual test |a - b| is symmetric, so with the
        // same candidate patches the CP sets coincide.
        let cp_a: std::collections::BTreeSet<_> = sa.correct_points.into_iter().collect();
        let cp_b: std::collections::BTreeSet<_> = sb.correct_points.into_iter().collect();
        assert_eq!(cp_a, cp_b);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let xr = smooth_map();
        let xp = Pointmap::new_invalid(10, 10);
        assert!(align(&xr, &xp, &AlignmentConfig::default()).is_err());
    }

    #[test]
    fn remedy_identity_motion_gives_unit_factor() {
        let xr = smooth_map();
        let xp_n = xr.clone();
        let aligned_prev = xr.clone();
        let matches: Vec<_> = xr.iter_valid().map(|(i, j, _, _)| ((i, j), (i, j))).collect();
        let res =
            align_with_remedy(&xr, &xp_n, &aligned_prev, &matches, &AlignmentConfig::default())
                .unwrap();
        assert!((res.scale - 1.0).abs() < 1e-12);
        assert!(res.used_remedy);
    }

    #[test]
    fn remedy_factor_is_ratio_of_matched_means() {
        let xr = smooth_map();
        let aligned_prev = xr.clone();
        let xp_n = xr.scaled(1.0 / 3.0);
        let matches: Vec<_> = xr.iter_valid().map(|(i, j, _, _)| ((i, j), (i, j))).collect();
        let res =
            align_with_remedy(&xr, &xp_n, &aligned_prev, &matches, &AlignmentConfig::default())
                .unwrap();
        assert!((res.scale - 3.0).abs() < 1e-9, "scale {}", res.scale);
    }

    #[test]
    fn corrupted_render_takes_remedy_path_and_recovers_scale() {
        let xr_clean = smooth_map();
        // Corrupt half the pixels of every patch of the rendered map.
        let mut xr = xr_clean.clone();
        for j in 0..xr_clean.height() {
            for i in 0..xr_clean.width() {
                if (i / 2 + j / 2) % 2 == 0 {
                    let p = *xr_clean.point(i, j);
                    xr.set(i, j, p * 5.0, 1.0);
                }
            }
        }
        let true_scale = 1.5;
        let xp_n = xr_clean.scaled(1.0 / true_scale);
        let cfg = AlignmentConfig::default();
        match align(&xr, &xp_n, &cfg).unwrap() {
            AlignOutcome::RemedyNeeded { .. } => {}
            AlignOutcome::Aligned(r) => panic!("expected remedy signal, got scale {}", r.scale),
        }
        let matches: Vec<_> = xr_clean
            .iter_valid()
            .map(|(i, j, _, _)| ((i, j), (i, j)))
            .collect();
        let res = align_with_remedy(&xr, &xp_n, &xr_clean, &matches, &cfg).unwrap();
        assert!(res.used_remedy);
        assert!(
            (res.scale - true_scale).abs() < 0.02 * true_scale,
            "remedied scale {}",
            res.scale
        );
    }

    #[test]
    fn remedy_without_matches_is_a_hard_failure() {
        let xr = smooth_map();
        let xp = xr.scaled(0.5);
        let err = align_with_remedy(&xr, &xp, &xr, &[], &AlignmentConfig::default());
        assert!(matches!(err, Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn trace_records_every_iteration() {
        let xr = smooth_map();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut xp = Pointmap::new_invalid(xr.width(), xr.height());
        for (i, j, p, c) in xr.iter_valid() {
            xp.set(i, j, p / 1.7 * (1.0 + 0.01 * rng.random_range(-1.0..1.0)), c);
        }
        let res = align_ok(&xr, &xp, &AlignmentConfig::default());
        assert_eq!(res.trace.len(), res.iterations_run);
        assert!(res.trace.iter().all(|r| r.sigma_step > 0.0));
        let _ = Vector3::<f64>::zeros();
    }
}
