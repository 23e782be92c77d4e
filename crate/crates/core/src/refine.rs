//! Temporal refinement of per-frame depth: warp the previous refined map
//! along optical flow, smooth it edge-preservingly and blend it with the
//! current prediction.

use nalgebra::Vector2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{DepthMap, ImageGray};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RefineError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("expected {expected} {what}, got {found}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid bilateral parameters: {0}")]
    InvalidParams(String),
}

/// Dense displacement `(u, v)` in pixels from frame i−1 to frame i.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f64>,
    v: Vec<f64>,
    valid: Vec<bool>,
}

impl FlowField {
    /// Entries that are not finite are marked invalid.
    pub fn new(width: usize, height: usize, u: Vec<f64>, v: Vec<f64>) -> Result<Self, RefineError> {
        let n = width * height;
        if n == 0 || u.len() != n || v.len() != n {
            return Err(RefineError::DimensionMismatch(format!(
                "flow of {}/{} samples for {width}x{height}",
                u.len(),
                v.len()
            )));
        }
        let valid = u.iter().zip(&v).map(|(a, b)| a.is_finite() && b.is_finite()).collect();
        Ok(Self {
            width,
            height,
            u,
            v,
            valid,
        })
    }

    pub fn with_mask(
        width: usize,
        height: usize,
        u: Vec<f64>,
        v: Vec<f64>,
        mask: Vec<bool>,
    ) -> Result<Self, RefineError> {
        let mut flow = Self::new(width, height, u, v)?;
        if mask.len() != flow.valid.len() {
            return Err(RefineError::DimensionMismatch(format!(
                "mask of {} samples",
                mask.len()
            )));
        }
        for (valid, m) in flow.valid.iter_mut().zip(mask) {
            *valid &= m;
        }
        Ok(flow)
    }

    pub fn constant(width: usize, height: usize, u: f64, v: f64) -> Self {
        Self::new(width, height, vec![u; width * height], vec![v; width * height]).expect("sizes match")
    }

    pub fn zero(width: usize, height: usize) -> Self {
        Self::constant(width, height, 0.0, 0.0)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn mask(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<(f64, f64)> {
        let i = y * self.width + x;
        self.valid[i].then(|| (self.u[i], self.v[i]))
    }
}

/// Perceptual similarity of a frame pair, clamped into `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct SimilarityScore(f64);

impl SimilarityScore {
    /// NaN maps to 1 (no trust in the warp).
    pub fn new(value: f64) -> Self {
        if value.is_nan() {
            return Self(1.0);
        }
        Self(value.clamp(0.0, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Stand-in for a learned perceptual metric: mean absolute intensity
/// difference of the pair.
pub fn similarity_proxy(a: &ImageGray, b: &ImageGray) -> Result<SimilarityScore, RefineError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(RefineError::DimensionMismatch("image pair".into()));
    }
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum();
    Ok(SimilarityScore::new(sum / a.data().len() as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BilateralParams {
    /// Pixels.
    pub sigma_d: f64,
    /// Meters.
    pub sigma_r: f64,
    /// Pixels.
    pub radius: usize,
}

impl BilateralParams {
    pub fn new(sigma_d: f64, sigma_r: f64, radius: usize) -> Result<Self, RefineError> {
        let p = Self {
            sigma_d,
            sigma_r,
            radius,
        };
        p.validate()?;
        Ok(p)
    }

    /// `σ_r` relative to the median depth, radius `⌈3σ_d⌉`.
    pub fn for_median_depth(sigma_d: f64, sigma_r_fraction: f64, median_depth: f64) -> Result<Self, RefineError> {
        Self::new(
            sigma_d,
            sigma_r_fraction * median_depth,
            (3.0 * sigma_d).ceil() as usize,
        )
    }

    pub fn validate(&self) -> Result<(), RefineError> {
        if !(self.sigma_d > 0.0 && self.sigma_d.is_finite()) || !(self.sigma_r > 0.0) || self.radius == 0 {
            return Err(RefineError::InvalidParams(format!("{self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlendConvention {
    /// `S·warp + (1 − S)·mde`.
    AsWritten,
    /// `(1 − S)·warp + S·mde`: a low score keeps the warped map.
    #[default]
    Intent,
}

/// Inverse warp: `out(x) = D_prev(x − F(x))` sampled bilinearly.
pub fn warp_depth(prev: &DepthMap, flow: &FlowField) -> Result<DepthMap, RefineError> {
    let (w, h) = (prev.width(), prev.height());
    if flow.width != w || flow.height != h {
        return Err(RefineError::DimensionMismatch(format!(
            "depth {w}x{h}, flow {}x{}",
            flow.width, flow.height
        )));
    }
    let mut values = vec![0.0; w * h];
    let mut valid = vec![false; w * h];
    values
        .par_chunks_mut(w)
        .zip(valid.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (vals, oks))| {
            for x in 0..w {
                let Some((u, v)) = flow.get(x, y) else { continue };
                let src = Vector2::new(x as f64 - u, y as f64 - v);
                if let Some(z) = prev.sample(&src) {
                    if z > 0.0 {
                        vals[x] = z;
                        oks[x] = true;
                    }
                }
            }
        });
    Ok(DepthMap::from_parts_unchecked(w, h, values, valid))
}

/// Edge-preserving smoothing over valid pixels in a truncated window.
/// Invalid pixels stay invalid.
pub fn bilateral_filter(depth: &DepthMap, params: &BilateralParams) -> DepthMap {
    let (w, h) = (depth.width(), depth.height());
    let r = params.radius as isize;
    let inv_2d = 1.0 / (2.0 * params.sigma_d * params.sigma_d);
    let inv_2r = 1.0 / (2.0 * params.sigma_r * params.sigma_r);
    let spatial: Vec<f64> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (-((dx * dx + dy * dy) as f64) * inv_2d).exp()))
        .collect();
    let side = (2 * r + 1) as usize;

    let mut values = vec![0.0; w * h];
    let mut valid = vec![false; w * h];
    values
        .par_chunks_mut(w)
        .zip(valid.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (vals, oks))| {
            for x in 0..w {
                let Some(center) = depth.get(x, y) else { continue };
                let (mut num, mut den) = (0.0, 0.0);
                let y0 = (y as isize - r).max(0) as usize;
                let y1 = (y as isize + r).min(h as isize - 1) as usize;
                let x0 = (x as isize - r).max(0) as usize;
                let x1 = (x as isize + r).min(w as isize - 1) as usize;
                for yy in y0..=y1 {
                    let ky = (yy as isize - y as isize + r) as usize * side;
                    for xx in x0..=x1 {
                        let Some(d) = depth.get(xx, yy) else { continue };
                        let kx = (xx as isize - x as isize + r) as usize;
                        let diff = center - d;
                        let wgt = spatial[ky + kx] * (-diff * diff * inv_2r).exp();
                        num += wgt * diff;
                        den += wgt;
                    }
                }
                // Accumulated as offsets from the center so constant regions
                // are reproduced exactly. The center contributes weight 1.
                let out = center - num / den;
                if out > 0.0 && out.is_finite() {
                    vals[x] = out;
                    oks[x] = true;
                }
            }
        });
    DepthMap::from_parts_unchecked(w, h, values, valid)
}

/// Weighted per-pixel blend of the filtered warp and the current prediction.
pub fn blend(
    warped: &DepthMap,
    mde: &DepthMap,
    score: SimilarityScore,
    convention: BlendConvention,
) -> Result<DepthMap, RefineError> {
    if !warped.same_shape(mde) {
        return Err(RefineError::DimensionMismatch("blend inputs".into()));
    }
    let s = score.value();
    let w_warp = match convention {
        BlendConvention::AsWritten => s,
        BlendConvention::Intent => 1.0 - s,
    };
    let n = warped.len();
    let mut values = vec![0.0; n];
    let mut valid = vec![false; n];
    for i in 0..n {
        let out = match (warped.at(i), mde.at(i)) {
            (Some(a), Some(b)) => {
                // Exact endpoints: 1·a + 0·b can differ from a in the last bit.
                if w_warp == 1.0 {
                    a
                } else if w_warp == 0.0 {
                    b
                } else {
                    (w_warp * a + (1.0 - w_warp) * b).clamp(a.min(b), a.max(b))
                }
            }
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => continue,
        };
        values[i] = out;
        valid[i] = true;
    }
    Ok(DepthMap::from_parts_unchecked(
        warped.width(),
        warped.height(),
        values,
        valid,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineParams {
    pub sigma_d: f64,
    /// `σ_r` as a fraction of the warped map's median depth.
    pub sigma_r_fraction: f64,
    /// Overrides `⌈3σ_d⌉` when set.
    pub radius: Option<usize>,
    pub convention: BlendConvention,
}

impl Default for RefineParams {
    fn default() -> Self {
        Self {
            sigma_d: 3.0,
            sigma_r_fraction: 0.05,
            radius: None,
            convention: BlendConvention::Intent,
        }
    }
}

impl RefineParams {
    fn bilateral_for(&self, depth: &DepthMap) -> Option<BilateralParams> {
        let median = depth.median()?;
        let radius = self.radius.unwrap_or((3.0 * self.sigma_d).ceil() as usize);
        BilateralParams::new(self.sigma_d, self.sigma_r_fraction * median, radius).ok()
    }
}

/// Chains the refinement through the sequence, always warping the previous
/// refined map.
pub fn refine_sequence(
    depths: &[DepthMap],
    flows: &[FlowField],
    scores: &[SimilarityScore],
    params: &RefineParams,
) -> Result<Vec<DepthMap>, RefineError> {
    let expected = depths.len().saturating_sub(1);
    if flows.len() != expected {
        return Err(RefineError::LengthMismatch {
            what: "flow fields",
            expected,
            found: flows.len(),
        });
    }
    if scores.len() != expected {
        return Err(RefineError::LengthMismatch {
            what: "similarity scores",
            expected,
            found: scores.len(),
        });
    }
    let mut out: Vec<DepthMap> = Vec::with_capacity(depths.len());
    for (i, mde) in depths.iter().enumerate() {
        if i == 0 {
            out.push(mde.clone());
            continue;
        }
        let warped = warp_depth(&out[i - 1], &flows[i - 1])?;
        if !warped.same_shape(mde) {
            return Err(RefineError::DimensionMismatch(format!("frame {i}")));
        }
        let filtered = match params.bilateral_for(&warped) {
            Some(bp) => bilateral_filter(&warped, &bp),
            None => warped,
        };
        out.push(blend(&filtered, mde, scores[i - 1], params.convention)?);
    }
    Ok(out)
}
