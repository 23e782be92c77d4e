use std::f64::consts::TAU;

use endofuse_core::geometry::DepthMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerturbModel {
    /// Additive noise with standard deviation `sigma` meters.
    Gaussian {
        sigma: f64,
    },
    /// Multiplicative noise: `d · (1 + fraction · n)`.
    RelativeGaussian {
        fraction: f64,
    },
    Scale {
        k: f64,
    },
    /// `d · (1 + amplitude · sin(2πx/W + φ) · cos(2πy/H + ψ))` with random
    /// phases.
    LowFreqWarp {
        amplitude: f64,
    },
}

/// Deterministic for a given seed. Samples that would become non-positive
/// are marked invalid.
pub fn perturb_depth(depth: &DepthMap, model: PerturbModel, seed: u64) -> DepthMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (depth.width(), depth.height());
    let (phi, psi) = (rng.random::<f64>() * TAU, rng.random::<f64>() * TAU);
    let mut values = Vec::with_capacity(depth.len());
    let mut mask = Vec::with_capacity(depth.len());
    for i in 0..depth.len() {
        // Draw for every pixel so the noise field does not depend on the mask.
        let n: f64 = StandardNormal.sample(&mut rng);
        let Some(d) = depth.at(i) else {
            values.push(0.0);
            mask.push(false);
            continue;
        };
        let out = match model {
            PerturbModel::Gaussian { sigma } => d + sigma * n,
            PerturbModel::RelativeGaussian { fraction } => d * (1.0 + fraction * n),
            PerturbModel::Scale { k } => d * k,
            PerturbModel::LowFreqWarp { amplitude } => {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                d * (1.0 + amplitude * (TAU * x / w as f64 + phi).sin() * (TAU * y / h as f64 + psi).cos())
            }
        };
        let ok = out.is_finite() && out > 0.0;
        values.push(if ok { out } else { 0.0 });
        mask.push(ok);
    }
    DepthMap::with_mask(w, h, values, mask).expect("masked values are positive")
}
