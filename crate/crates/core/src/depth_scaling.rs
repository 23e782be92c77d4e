//! Recovery of a metric scale for per-frame disparity predictions.
//!
//! A single metrically scaled frame anchors a virtual stereo baseline `B`
//! so that every disparity map `d` converts to depth `f·B/d`.

use thiserror::Error;

use crate::geometry::{DepthMap, DisparityMap};
use crate::parallel::pairwise_sum;

/// Minimum number of pixels valid in both maps.
pub const MIN_VALID_PIXELS: usize = 100;
pub const DEFAULT_BASELINE_BOUNDS: (f64, f64) = (1e-5, 1.0);

const MAX_ITERATIONS: usize = 200;
const STEP_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScaleError {
    #[error("only {found} pixels are valid in both depth and disparity (need {MIN_VALID_PIXELS})")]
    TooFewValidPixels { found: usize },
    #[error("depth is {0}x{1} but disparity is {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("invalid baseline bounds [{0}, {1}]")]
    InvalidBounds(f64, f64),
    #[error("focal length must be positive, got {0}")]
    InvalidFocal(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaselineEstimate {
    /// Meters.
    pub baseline: f64,
    /// Objective value `Σ (D − f·B/d)²` at `baseline`.
    pub residual: f64,
    pub iterations: usize,
    /// The unconstrained minimizer lies outside the bounds and was clipped.
    pub at_bound: bool,
}

/// Least-squares objective over the pixels valid in both maps.
struct BaselineObjective {
    /// `a = f/d` per pixel.
    a: Vec<f64>,
    depth: Vec<f64>,
}

impl BaselineObjective {
    fn value(&self, b: f64) -> f64 {
        let terms: Vec<f64> = self
            .a
            .iter()
            .zip(&self.depth)
            .map(|(a, d)| {
                let r = d - a * b;
                r * r
            })
            .collect();
        pairwise_sum(&terms)
    }

    /// `dF/dB = −2 Σ a·(D − a·B)`.
    fn gradient(&self, b: f64) -> f64 {
        let terms: Vec<f64> = self.a.iter().zip(&self.depth).map(|(a, d)| a * (d - a * b)).collect();
        -2.0 * pairwise_sum(&terms)
    }
}

/// Fits the baseline minimizing `Σ (D₁ − f·B/d₁)²` with a projected
/// quasi-Newton iteration (secant curvature, Armijo backtracking) inside
/// `bounds`.
pub fn estimate_baseline(
    depth: &DepthMap,
    disparity: &DisparityMap,
    f_pred: f64,
    bounds: (f64, f64),
) -> Result<BaselineEstimate, ScaleError> {
    let (lo, hi) = bounds;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(ScaleError::InvalidBounds(lo, hi));
    }
    if !(f_pred > 0.0 && f_pred.is_finite()) {
        return Err(ScaleError::InvalidFocal(f_pred));
    }
    if !depth.same_shape(disparity) {
        return Err(ScaleError::DimensionMismatch(
            depth.width(),
            depth.height(),
            disparity.width(),
            disparity.height(),
        ));
    }
    let mut a = Vec::new();
    let mut dvals = Vec::new();
    for i in 0..depth.len() {
        if let (Some(z), Some(d)) = (depth.at(i), disparity.at(i)) {
            a.push(f_pred / d);
            dvals.push(z);
        }
    }
    if a.len() < MIN_VALID_PIXELS {
        return Err(ScaleError::TooFewValidPixels { found: a.len() });
    }
    let objective = BaselineObjective { a, depth: dvals };
    Ok(minimize_bounded(&objective, lo, hi))
}

fn minimize_bounded(obj: &BaselineObjective, lo: f64, hi: f64) -> BaselineEstimate {
    let clamp = |b: f64| b.clamp(lo, hi);
    let mut b = clamp((lo * hi).sqrt());
    let mut f = obj.value(b);
    let mut g = obj.gradient(b);
    // Inverse curvature estimate; the first step moves by about |b|.
    let mut inv_h = if g != 0.0 { b.abs() / g.abs() } else { 1.0 };
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let blocked = (b <= lo && g > 0.0) || (b >= hi && g < 0.0);
        if g == 0.0 || blocked {
            break;
        }
        let direction = -inv_h * g;
        let mut t = 1.0;
        let (mut b_new, mut f_new);
        loop {
            b_new = clamp(b + t * direction);
            f_new = obj.value(b_new);
            if f_new <= f + 1e-4 * g * (b_new - b) || t < 1e-20 {
                break;
            }
            t *= 0.5;
        }
        let step = b_new - b;
        let g_new = obj.gradient(b_new);
        let dy = g_new - g;
        if step * dy > 0.0 {
            inv_h = step / dy;
        }
        b = b_new;
        f = f_new;
        g = g_new;
        if step.abs() < STEP_TOLERANCE {
            break;
        }
    }

    let at_bound = (b <= lo && g > 0.0) || (b >= hi && g < 0.0);
    if at_bound {
        log::warn!("baseline clipped to bound {b} (objective gradient {g:e})");
    }
    BaselineEstimate {
        baseline: b,
        residual: f,
        iterations,
        at_bound,
    }
}

/// Per-pixel `f·B/d`; invalid pixels stay invalid.
///
/// # Panics
/// If `f` or `baseline` is not positive.
pub fn depth_from_disparity(disparity: &DisparityMap, f: f64, baseline: f64) -> DepthMap {
    assert!(
        f > 0.0 && baseline > 0.0,
        "focal {f} and baseline {baseline} must be positive"
    );
    let fb = f * baseline;
    let out = disparity.map_valid(|d| fb / d);
    DepthMap::from_parts_unchecked(out.width(), out.height(), out.values().to_vec(), out.mask().to_vec())
}

/// Ablation path that replaces the metric initialization with a fixed
/// multiplier: disparity is scaled by `k` before inversion, `depth = 1/(k·d)`.
///
/// # Panics
/// If `k` is not positive.
pub fn apply_fixed_scale(disparity: &DisparityMap, k: f64) -> DepthMap {
    assert!(k > 0.0, "scale factor must be positive, got {k}");
    let out = disparity.map_valid(|d| 1.0 / (k * d));
    DepthMap::from_parts_unchecked(out.width(), out.height(), out.values().to_vec(), out.mask().to_vec())
}
