//! Dense row-major rasters: intensity images and masked scalar maps.

use std::marker::PhantomData;

use nalgebra::Vector2;

use super::GeometryError;

/// Bilinear stencil: the four neighbor indices and their weights, plus the
/// fractional offsets inside the cell. `None` outside `[0, W−1] × [0, H−1]`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Stencil {
    pub idx: [usize; 4],
    pub w: [f64; 4],
    pub fx: f64,
    pub fy: f64,
}

#[inline]
pub(crate) fn stencil(width: usize, height: usize, q: &Vector2<f64>) -> Option<Stencil> {
    let (x, y) = (q.x, q.y);
    if !(x >= 0.0 && y >= 0.0 && x <= (width - 1) as f64 && y <= (height - 1) as f64) {
        return None;
    }
    let x0 = (x.floor() as usize).min(width.saturating_sub(2));
    let y0 = (y.floor() as usize).min(height.saturating_sub(2));
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    Some(Stencil {
        idx: [y0 * width + x0, y0 * width + x1, y1 * width + x0, y1 * width + x1],
        w: [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy],
        fx,
        fy,
    })
}

/// Grayscale intensity image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageGray {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageGray {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, GeometryError> {
        check_len(width, height, data.len())?;
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(GeometryError::InvalidValue(format!("intensity {bad} outside [0, 1]")));
        }
        Ok(Self { width, height, data })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value.clamp(0.0, 1.0); width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Bilinear interpolation; `None` outside the image.
    #[inline]
    pub fn sample(&self, q: &Vector2<f64>) -> Option<f64> {
        let s = stencil(self.width, self.height, q)?;
        Some(self.apply(&s))
    }

    #[inline]
    pub(crate) fn apply(&self, s: &Stencil) -> f64 {
        let d = &self.data;
        s.w[0] * d[s.idx[0]] + s.w[1] * d[s.idx[1]] + s.w[2] * d[s.idx[2]] + s.w[3] * d[s.idx[3]]
    }

    /// Value and gradient `(∂/∂u, ∂/∂v)` of the bilinear interpolant at `q`.
    ///
    /// The gradient is the exact derivative of [`ImageGray::sample`] inside
    /// the cell containing `q`, so analytic Jacobians built on it agree with
    /// finite differences of the sampled residuals.
    #[inline]
    pub fn sample_with_gradient(&self, q: &Vector2<f64>) -> Option<(f64, Vector2<f64>)> {
        let s = stencil(self.width, self.height, q)?;
        let d = &self.data;
        let (i00, i10, i01, i11) = (d[s.idx[0]], d[s.idx[1]], d[s.idx[2]], d[s.idx[3]]);
        let gx = (1.0 - s.fy) * (i10 - i00) + s.fy * (i11 - i01);
        let gy = (1.0 - s.fx) * (i01 - i00) + s.fx * (i11 - i10);
        Some((self.apply(&s), Vector2::new(gx, gy)))
    }
}

/// Unit marker for [`MaskedGrid`].
pub trait GridUnit: Clone + Copy + std::fmt::Debug + PartialEq + Send + Sync {}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Meters;
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pixels;
impl GridUnit for Meters {}
impl GridUnit for Pixels {}

/// Row-major scalar map with a validity mask. Valid entries are finite and
/// strictly positive; invalid entries carry no meaning.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedGrid<U: GridUnit> {
    width: usize,
    height: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
    _unit: PhantomData<U>,
}

/// Depth in meters along the optical axis.
pub type DepthMap = MaskedGrid<Meters>;
/// Disparity in pixels.
pub type DisparityMap = MaskedGrid<Pixels>;

impl<U: GridUnit> MaskedGrid<U> {
    /// Marks every finite, positive value valid.
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self, GeometryError> {
        check_len(width, height, values.len())?;
        let valid = values.iter().map(|v| v.is_finite() && *v > 0.0).collect();
        Ok(Self {
            width,
            height,
            values,
            valid,
            _unit: PhantomData,
        })
    }

    /// Uses `mask`; a masked-in entry that is not finite and positive is an error.
    pub fn with_mask(width: usize, height: usize, values: Vec<f64>, mask: Vec<bool>) -> Result<Self, GeometryError> {
        check_len(width, height, values.len())?;
        check_len(width, height, mask.len())?;
        for (i, (v, m)) in values.iter().zip(&mask).enumerate() {
            if *m && !(v.is_finite() && *v > 0.0) {
                return Err(GeometryError::InvalidValue(format!(
                    "valid entry at ({}, {}) is {v}",
                    i % width,
                    i / width
                )));
            }
        }
        Ok(Self {
            width,
            height,
            values,
            valid: mask,
            _unit: PhantomData,
        })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        Self::from_values(width, height, vec![value; width * height]).expect("length matches")
    }

    pub fn invalid(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
            valid: vec![false; width * height],
            _unit: PhantomData,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let i = y * self.width + x;
        self.valid[i].then(|| self.values[i])
    }

    #[inline]
    pub fn at(&self, i: usize) -> Option<f64> {
        self.valid[i].then(|| self.values[i])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Valid values in row-major order.
    pub fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values
            .iter()
            .zip(&self.valid)
            .filter(|(_, m)| **m)
            .map(|(v, _)| *v)
    }

    pub fn median(&self) -> Option<f64> {
        let mut v: Vec<f64> = self.valid_values().collect();
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

    /// Bilinear interpolation; `None` outside the grid or when any neighbor
    /// with nonzero weight is invalid.
    #[inline]
    pub fn sample(&self, q: &Vector2<f64>) -> Option<f64> {
        let s = stencil(self.width, self.height, q)?;
        let mut acc = 0.0;
        for k in 0..4 {
            if s.w[k] == 0.0 {
                continue;
            }
            if !self.valid[s.idx[k]] {
                return None;
            }
            acc += s.w[k] * self.values[s.idx[k]];
        }
        Some(acc)
    }

    /// Applies `f` to every valid value; results that are not finite and
    /// positive become invalid.
    pub fn map_valid(&self, f: impl Fn(f64) -> f64) -> Self {
        self.map_into(f)
    }

    /// [`map_valid`](Self::map_valid) into a grid of another unit.
    pub fn map_into<V: GridUnit>(&self, f: impl Fn(f64) -> f64) -> MaskedGrid<V> {
        let mut values = vec![0.0; self.values.len()];
        let mut valid = vec![false; self.values.len()];
        for i in 0..self.values.len() {
            if self.valid[i] {
                let v = f(self.values[i]);
                if v.is_finite() && v > 0.0 {
                    values[i] = v;
                    valid[i] = true;
                }
            }
        }
        MaskedGrid {
            width: self.width,
            height: self.height,
            values,
            valid,
            _unit: PhantomData,
        }
    }

    pub(crate) fn from_parts_unchecked(width: usize, height: usize, values: Vec<f64>, valid: Vec<bool>) -> Self {
        debug_assert_eq!(values.len(), width * height);
        Self {
            width,
            height,
            values,
            valid,
            _unit: PhantomData,
        }
    }

    pub fn same_shape<V: GridUnit>(&self, other: &MaskedGrid<V>) -> bool {
        self.width == other.width && self.height == other.height
    }
}

fn check_len(width: usize, height: usize, len: usize) -> Result<(), GeometryError> {
    if width == 0 || height == 0 || width * height != len {
        return Err(GeometryError::DimensionMismatch(format!(
            "{len} samples for a {width}x{height} grid"
        )));
    }
    Ok(())
}
