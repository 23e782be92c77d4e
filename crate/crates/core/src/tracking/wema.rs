use serde::{Deserialize, Serialize};

use crate::geometry::{PoseSE3, Twist};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WemaParams {
    pub a: f64,
    pub b: f64,
    pub g: f64,
    /// Decay rate per frame.
    pub omega: f64,
}

impl Default for WemaParams {
    fn default() -> Self {
        Self {
            a: 0.5,
            b: 0.3,
            g: 0.2,
            omega: 0.05,
        }
    }
}

impl WemaParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.a < 0.0 || self.b < 0.0 || self.g < 0.0 {
            return Err(format!("weights must be non-negative: {self:?}"));
        }
        if (self.a + self.b + self.g - 1.0).abs() > 1e-12 {
            return Err(format!("weights sum to {}, expected 1", self.a + self.b + self.g));
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(format!("omega {} must be positive", self.omega));
        }
        Ok(())
    }

    /// `s = 1 − e^{−iω}`.
    pub fn blend_factor(&self, i: usize) -> f64 {
        -(-(i as f64) * self.omega).exp_m1()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WemaMode {
    #[default]
    Dynamic,
    /// `s = 1` for every frame.
    FixedBlend,
    Disabled,
}

/// Blends `x_i` towards the weighted tangent-space average of the last
/// three poses, taken at `x_i`, by the factor `s`.
pub fn wema_regularize(
    x_i: &PoseSE3,
    x_im1: &PoseSE3,
    x_im2: &PoseSE3,
    params: &WemaParams,
    i: usize,
    mode: WemaMode,
) -> PoseSE3 {
    let s = match mode {
        WemaMode::Disabled => return *x_i,
        WemaMode::FixedBlend => 1.0,
        WemaMode::Dynamic => params.blend_factor(i),
    };
    if s == 0.0 {
        return *x_i;
    }
    let inv = x_i.inverse();
    let (Ok(xi1), Ok(xi2)) = ((inv * *x_im1).log(), (inv * *x_im2).log()) else {
        log::warn!("frame {i}: pose too far from its predecessors to blend; left unregularized");
        return *x_i;
    };
    let eta = (xi1.0 * params.b + xi2.0 * params.g) * s;
    x_i.retract(&Twist(eta))
}

/// Regularizes every frame from the third on. The history is the raw
/// input sequence.
pub fn regularize_sequence(raw: &[PoseSE3], params: &WemaParams, mode: WemaMode) -> Vec<PoseSE3> {
    raw.iter()
        .enumerate()
        .map(|(i, x)| {
            if i < 2 {
                *x
            } else {
                wema_regularize(x, &raw[i - 1], &raw[i - 2], params, i, mode)
            }
        })
        .collect()
}
