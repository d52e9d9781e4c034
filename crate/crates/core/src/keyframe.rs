//! Covisibility-based keyframe selection and the local keyframe window.

use crate::gaussians::GaussianMap;
use crate::img::RgbImage;
use crate::pointmap::Pointmap;
use crate::render::RenderOutput;
use crate::se3::Pose;

/// Blending-weight floor above which a primitive counts as visible.
pub const VISIBILITY_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct Keyframe {
    pub frame_index: usize,
    pub pose: Pose,
    pub image: RgbImage,
    /// Scene-scale external pointmap, when alignment succeeded.
    pub aligned_pointmap: Option<Pointmap>,
    /// Sorted ids of Gaussians visible from this keyframe.
    pub visible: Vec<u64>,
    /// Median depth of the rendered pointmap at selection time.
    pub median_depth: f64,
    pub alignment_scale: Option<f64>,
    pub used_remedy: bool,
}

/// Ids of primitives whose blending weight exceeds the visibility floor in
/// the given forward pass.
pub fn visible_set(map: &GaussianMap, out: &RenderOutput) -> Vec<u64> {
    out.visible_map_indices(VISIBILITY_FLOOR)
        .into_iter()
        .map(|idx| map.meta()[idx].id)
        .collect()
}

fn intersection_count(a: &[u64], b: &[u64]) -> usize {
    let mut n = 0;
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Intersection over union of two visible-Gaussian id sets (sorted inputs).
pub fn iou_cov(a: &[u64], b: &[u64]) -> f64 {
    let inter = intersection_count(a, b);
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Overlap coefficient: intersection over the smaller set.
pub fn oc_cov(a: &[u64], b: &[u64]) -> f64 {
    let inter = intersection_count(a, b);
    let min = a.len().min(b.len());
    if min == 0 {
        0.0
    } else {
        inter as f64 / min as f64
    }
}

/// Keyframe test against the latest keyframe: low covisibility or a
/// translation larger than `k_dist` times the current frame's median depth.
pub fn should_add_keyframe(
    current_visible: &[u64],
    current_pose: &Pose,
    current_median_depth: f64,
    latest: &Keyframe,
    k_iou: f64,
    k_dist: f64,
) -> bool {
    let iou = iou_cov(current_visible, &latest.visible);
    let translation = current_pose
        .compose(&latest.pose.inverse())
        .translation
        .norm();
    iou < k_iou || translation > k_dist * current_median_depth
}

#[derive(Debug, Clone)]
pub struct KeyframeWindow {
    capacity: usize,
    /// Insertion order: oldest first, latest last.
    frames: Vec<Keyframe>,
}

impl KeyframeWindow {
    pub fn new(capacity: usize) -> Self {
        KeyframeWindow {
            capacity: capacity.max(1),
            frames: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn frames(&self) -> &[Keyframe] {
        &self.frames
    }

    pub fn frames_mut(&mut self) -> &mut [Keyframe] {
        &mut self.frames
    }

    pub fn latest(&self) -> Option<&Keyframe> {
        self.frames.last()
    }

    /// Insert a new keyframe, drop members whose overlap with it falls under
    /// `k_overlap`, and if still over capacity evict the lowest-overlap
    /// keyframe (oldest first on ties). The newest keyframe always stays.
    pub fn update(&mut self, new: Keyframe, k_overlap: f64) {
        let new_visible = new.visible.clone();
        self.frames.push(new);
        let last = self.frames.len() - 1;
        let mut keep: Vec<Keyframe> = Vec::with_capacity(self.frames.len());
        for (idx, kf) in self.frames.drain(..).enumerate() {
            if idx == last || oc_cov(&kf.visible, &new_visible) >= k_overlap {
                keep.push(kf);
            }
        }
        self.frames = keep;
        while self.frames.len() > self.capacity {
            let candidates = self.frames.len() - 1; // never evict the newest
            let mut evict = 0;
            let mut lowest = f64::INFINITY;
            for (idx, kf) in self.frames[..candidates].iter().enumerate() {
                let oc = oc_cov(&kf.visible, &new_visible);
                if oc < lowest {
                    lowest = oc;
                    evict = idx;
                }
            }
            self.frames.remove(evict);
        }
    }
}
