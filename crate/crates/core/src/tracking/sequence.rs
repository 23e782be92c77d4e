use crate::geometry::PoseSE3;

use super::{align_pair, build_pyramid, FramePyramid, PseudoRGBDFrame, TrackError, TrackingParams};

/// Frames whose index is a multiple of `alpha` are keyframes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KeyframeSchedule {
    alpha: usize,
}

impl KeyframeSchedule {
    pub fn new(alpha: usize) -> Option<Self> {
        (alpha >= 1).then_some(Self { alpha })
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }

    pub fn is_keyframe(&self, frame: usize) -> bool {
        frame.is_multiple_of(self.alpha)
    }

    /// Frame a given frame is aligned against; `None` for frame 0.
    pub fn reference(&self, frame: usize) -> Option<usize> {
        if frame == 0 {
            None
        } else if self.is_keyframe(frame) {
            Some(frame - self.alpha)
        } else {
            Some(frame - frame % self.alpha)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackedSequence {
    /// Camera-to-world, frame 0 at the origin.
    pub poses: Vec<PoseSE3>,
    pub references: Vec<Option<usize>>,
    pub iterations: Vec<usize>,
}

/// Tracks every frame against its keyframe and chains the keyframe poses.
pub fn track_sequence(
    frames: &[PseudoRGBDFrame],
    schedule: KeyframeSchedule,
    params: &TrackingParams,
) -> Result<TrackedSequence, TrackError> {
    if frames.is_empty() {
        return Err(TrackError::Empty);
    }
    let pyramids: Vec<FramePyramid> = frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            build_pyramid(f, params.pyramid_levels, params.pyramid_factor).map_err(|e| TrackError::InvalidFrame {
                frame: i,
                reason: e.to_string(),
            })
        })
        .collect::<Result<_, _>>()?;

    let mut out = TrackedSequence {
        poses: vec![PoseSE3::identity()],
        references: vec![None],
        iterations: vec![0],
    };
    for k in 1..frames.len() {
        let r = schedule.reference(k).expect("k > 0");
        let rel = align_pair(&pyramids[r], &pyramids[k], params).map_err(|source| TrackError::Lost {
            frame: k,
            reference: r,
            partial: out.poses.clone(),
            source,
        })?;
        if rel.flat_cost {
            log::warn!("frame {k}: no photometric gradient against frame {r}");
        }
        log::debug!("frame {k} vs {r}: {} iterations, cost {:.3e}", rel.iterations, rel.cost);
        out.poses.push(out.poses[r] * rel.pose);
        out.references.push(Some(r));
        out.iterations.push(rel.iterations);
    }
    Ok(out)
}
