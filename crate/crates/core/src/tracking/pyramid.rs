use crate::geometry::{CameraIntrinsics, DepthMap, ImageGray};

use super::{AlignError, PseudoRGBDFrame};

#[derive(Clone, Debug)]
pub struct PyramidLevel {
    pub image: ImageGray,
    pub depth: DepthMap,
    pub intrinsics: CameraIntrinsics,
}

/// `levels[0]` is the coarsest level, the last one the input resolution.
#[derive(Clone, Debug)]
pub struct FramePyramid {
    pub levels: Vec<PyramidLevel>,
}

impl FramePyramid {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn coarsest(&self) -> &PyramidLevel {
        &self.levels[0]
    }

    pub fn finest(&self) -> &PyramidLevel {
        self.levels.last().expect("pyramid is never empty")
    }
}

/// Coarse pixel `i` averages the fine pixels with `⌊x·factor⌋ = i`, so the
/// footprint is a 2×2 block for `factor = 0.5`. Depth takes the median of
/// the valid samples in the footprint.
pub fn build_pyramid(frame: &PseudoRGBDFrame, levels: usize, factor: f64) -> Result<FramePyramid, AlignError> {
    if levels == 0 || !(factor > 0.0 && factor < 1.0) {
        return Err(AlignError::Pyramid(format!("{levels} levels with factor {factor}")));
    }
    let min_side = (1.0 / factor).powi(levels as i32 - 1).ceil() as usize;
    let (w, h) = (frame.image.width(), frame.image.height());
    if w < min_side || h < min_side {
        return Err(AlignError::Pyramid(format!(
            "frame {} is {w}x{h}, need at least {min_side} pixels per side for {levels} levels",
            frame.index
        )));
    }
    let mut out = vec![PyramidLevel {
        image: frame.image.clone(),
        depth: frame.depth.clone(),
        intrinsics: frame.intrinsics,
    }];
    for _ in 1..levels {
        let fine = out.last().unwrap();
        out.push(downsample(fine, factor));
    }
    out.reverse();
    Ok(FramePyramid { levels: out })
}

/// Fine index range `[start, end)` mapping to coarse index `i`.
fn footprint(i: usize, factor: f64, fine_len: usize) -> (usize, usize) {
    let start = (i as f64 / factor).ceil() as usize;
    let end = (((i + 1) as f64 / factor).ceil() as usize).min(fine_len);
    (start.min(fine_len - 1), end.max(start + 1).min(fine_len))
}

fn downsample(fine: &PyramidLevel, factor: f64) -> PyramidLevel {
    let (fw, fh) = (fine.image.width(), fine.image.height());
    let cw = (fw as f64 * factor).ceil() as usize;
    let ch = (fh as f64 * factor).ceil() as usize;
    let mut img = Vec::with_capacity(cw * ch);
    let mut depth = Vec::with_capacity(cw * ch);
    let mut samples = Vec::with_capacity(8);
    for cy in 0..ch {
        let (y0, y1) = footprint(cy, factor, fh);
        for cx in 0..cw {
            let (x0, x1) = footprint(cx, factor, fw);
            let mut sum = 0.0;
            samples.clear();
            for y in y0..y1 {
                for x in x0..x1 {
                    sum += fine.image.get(x, y);
                    if let Some(z) = fine.depth.get(x, y) {
                        samples.push(z);
                    }
                }
            }
            img.push((sum / ((y1 - y0) * (x1 - x0)) as f64).clamp(0.0, 1.0));
            depth.push(median(&mut samples).unwrap_or(0.0));
        }
    }
    PyramidLevel {
        image: ImageGray::new(cw, ch, img).expect("averages stay in [0, 1]"),
        depth: DepthMap::from_values(cw, ch, depth).expect("sizes match"),
        intrinsics: fine.intrinsics.rescaled(factor, cw, ch),
    }
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}
