use endofuse_core::geometry::{CameraIntrinsics, DepthMap, ImageGray, PoseSE3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::SynthError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Surface {
    /// Seen from outside or, with the camera inside, as a cavity.
    Sphere { center: [f64; 3], radius: f64 },
    /// Points with `normal · X = offset`.
    Plane { normal: [f64; 3], offset: f64 },
    /// `z = offset + amplitude · sin(frequency·x) · sin(frequency·y)`.
    Heightfield {
        amplitude: f64,
        frequency: f64,
        offset: f64,
    },
}

/// Multi-octave value-noise albedo, evaluated at world positions so it
/// sticks to the surface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TextureSpec {
    pub seed: u64,
    pub octaves: u32,
    /// Cycles per meter of the coarsest octave.
    pub base_frequency: f64,
    /// Amplitude ratio between successive octaves.
    pub persistence: f64,
    /// Albedo range.
    pub min_albedo: f64,
    pub max_albedo: f64,
}

impl Default for TextureSpec {
    fn default() -> Self {
        Self {
            seed: 1,
            octaves: 5,
            base_frequency: 6.0,
            persistence: 0.6,
            min_albedo: 0.15,
            max_albedo: 0.9,
        }
    }
}

/// `I = albedo · (ambient + headlight · cosθ · (reference_distance / r)²)`,
/// with `r` the distance from the camera and θ the incidence angle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LightingSpec {
    pub ambient: f64,
    pub headlight: f64,
    pub reference_distance: f64,
}

impl Default for LightingSpec {
    fn default() -> Self {
        Self {
            ambient: 0.35,
            headlight: 0.65,
            reference_distance: 0.5,
        }
    }
}

impl LightingSpec {
    /// Brightness constant across views.
    pub fn ambient_only() -> Self {
        Self {
            ambient: 1.0,
            headlight: 0.0,
            reference_distance: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub surface: Surface,
    #[serde(default)]
    pub texture: TextureSpec,
    #[serde(default)]
    pub lighting: LightingSpec,
    /// Color tint applied to the gray intensity.
    #[serde(default = "default_tint")]
    pub tint: [f64; 3],
    /// Subsamples per pixel side for intensity (depth is taken at centers).
    #[serde(default = "default_supersample")]
    pub supersample: usize,
}

fn default_tint() -> [f64; 3] {
    [1.0, 0.72, 0.66]
}

fn default_supersample() -> usize {
    2
}

impl SceneSpec {
    pub fn new(surface: Surface) -> Self {
        Self {
            surface,
            texture: TextureSpec::default(),
            lighting: LightingSpec::default(),
            tint: default_tint(),
            supersample: default_supersample(),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        match &self.surface {
            Surface::Sphere { radius, .. } if !(*radius > 0.0) => return bad(format!("sphere radius {radius}")),
            Surface::Plane { normal, .. } if Vector3::from(*normal).norm() < 1e-12 => {
                return bad("zero plane normal".into())
            }
            Surface::Heightfield {
                frequency, amplitude, ..
            } if !(*frequency >= 0.0 && amplitude.is_finite()) => {
                return bad(format!("heightfield amplitude {amplitude}, frequency {frequency}"))
            }
            _ => {}
        }
        let t = &self.texture;
        if t.octaves == 0
            || !(t.base_frequency > 0.0)
            || !(0.0..=1.0).contains(&t.min_albedo)
            || t.max_albedo < t.min_albedo
        {
            return bad(format!("texture {t:?}"));
        }
        if self.supersample == 0 {
            return bad("supersample must be at least 1".into());
        }
        Ok(())
    }
}

/// One rendered view. `depth` is z-depth in meters, invalid where the ray
/// misses; intensities are in `[0, 1]`.
#[derive(Clone, Debug)]
pub struct RenderedFrame {
    pub gray: ImageGray,
    pub color: Vec<[f64; 3]>,
    pub depth: DepthMap,
}

impl RenderedFrame {
    pub fn coverage(&self) -> f64 {
        self.depth.valid_count() as f64 / self.depth.len() as f64
    }

    pub fn color_u8(&self) -> Vec<[u8; 3]> {
        self.color
            .iter()
            .map(|c| c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
            .collect()
    }
}

struct Hit {
    t: f64,
    point: Vector3<f64>,
    normal: Vector3<f64>,
}

impl Surface {
    /// Smallest positive `t` with `origin + t·dir` on the surface.
    fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
        match self {
            Surface::Sphere { center, radius } => {
                let c = Vector3::from(*center);
                let oc = origin - c;
                let a = dir.norm_squared();
                let b = oc.dot(dir);
                let disc = b * b - a * (oc.norm_squared() - radius * radius);
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                // Numerically stable roots of a·t² + 2b·t + c.
                let q = -(b + b.signum() * s);
                if q == 0.0 {
                    return None;
                }
                let (r0, r1) = (q / a, (oc.norm_squared() - radius * radius) / q);
                let t = [r0.min(r1), r0.max(r1)].into_iter().find(|t| *t > 1e-12)?;
                let point = origin + dir * t;
                Some(Hit {
                    t,
                    point,
                    normal: (point - c) / *radius,
                })
            }
            Surface::Plane { normal, offset } => {
                let n = Vector3::from(*normal).normalize();
                let scale = Vector3::from(*normal).norm();
                let denom = n.dot(dir);
                if denom.abs() < 1e-15 {
                    return None;
                }
                let t = (offset / scale - n.dot(origin)) / denom;
                (t > 1e-12).then(|| Hit {
                    t,
                    point: origin + dir * t,
                    normal: n,
                })
            }
            Surface::Heightfield {
                amplitude,
                frequency,
                offset,
            } => {
                let (a, f, z0) = (*amplitude, *frequency, *offset);
                let g = |t: f64| {
                    let p = origin + dir * t;
                    p.z - (z0 + a * (f * p.x).sin() * (f * p.y).sin())
                };
                // March through the slab |z − offset| <= |amplitude| to the
                // first sign change, then bisect.
                if dir.z.abs() < 1e-12 {
                    return None;
                }
                let (za, zb) = (z0 - a.abs() - 1e-9, z0 + a.abs() + 1e-9);
                let (ta, tb) = ((za - origin.z) / dir.z, (zb - origin.z) / dir.z);
                let (start, end) = (ta.min(tb).max(1e-9), ta.max(tb));
                if end <= start {
                    return None;
                }
                let travel = (end - start) * (dir.x.hypot(dir.y) * f + dir.z.abs() * 1e-3);
                let steps = ((travel * 8.0).ceil() as usize).clamp(4, 100_000);
                let dt = (end - start) / steps as f64;
                let mut t0 = start;
                let mut g0 = g(t0);
                let mut bracket = None;
                for k in 1..=steps {
                    let t1 = start + k as f64 * dt;
                    let g1 = g(t1);
                    if g0.signum() != g1.signum() {
                        bracket = Some((t0, t1));
                        break;
                    }
                    t0 = t1;
                    g0 = g1;
                }
                let (mut lo, mut hi) = bracket?;
                let glo = g(lo);
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if g(mid).signum() == glo.signum() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let t = 0.5 * (lo + hi);
                let p = origin + dir * t;
                let dx = a * f * (f * p.x).cos() * (f * p.y).sin();
                let dy = a * f * (f * p.x).sin() * (f * p.y).cos();
                Some(Hit {
                    t,
                    point: p,
                    normal: Vector3::new(-dx, -dy, 1.0).normalize(),
                })
            }
        }
    }
}

fn hash(seed: u64, x: i64, y: i64, z: i64) -> f64 {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for v in [x, y, z] {
        h ^= v as u64;
        // splitmix64 finalizer
        h = h.wrapping_add(0x9E37_79B9_7F4A_7C15);
        h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn quintic(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

fn value_noise(seed: u64, p: &Vector3<f64>) -> f64 {
    let base = p.map(f64::floor);
    let f = p - base;
    let (ix, iy, iz) = (base.x as i64, base.y as i64, base.z as i64);
    let (u, v, w) = (quintic(f.x), quintic(f.y), quintic(f.z));
    let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
    let corner = |dx, dy, dz| hash(seed, ix + dx, iy + dy, iz + dz);
    let x00 = lerp(corner(0, 0, 0), corner(1, 0, 0), u);
    let x10 = lerp(corner(0, 1, 0), corner(1, 1, 0), u);
    let x01 = lerp(corner(0, 0, 1), corner(1, 0, 1), u);
    let x11 = lerp(corner(0, 1, 1), corner(1, 1, 1), u);
    lerp(lerp(x00, x10, v), lerp(x01, x11, v), w)
}

impl TextureSpec {
    pub fn albedo(&self, p: &Vector3<f64>) -> f64 {
        let (mut sum, mut norm, mut amp, mut freq) = (0.0, 0.0, 1.0, self.base_frequency);
        for o in 0..self.octaves {
            sum += amp * value_noise(self.seed.wrapping_add(o as u64), &(p * freq));
            norm += amp;
            amp *= self.persistence;
            freq *= 2.0;
        }
        self.min_albedo + (self.max_albedo - self.min_albedo) * sum / norm
    }
}

/// Ray through pixel `(u, v)` in world coordinates, scaled so the camera
/// z-component is 1 (the hit parameter is then the z-depth).
fn pixel_ray(k: &CameraIntrinsics, pose: &PoseSE3, u: f64, v: f64) -> Vector3<f64> {
    pose.rotation().matrix() * Vector3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0)
}

impl SceneSpec {
    /// Gray intensity and z-depth along the ray through `(u, v)`.
    pub fn shade(&self, k: &CameraIntrinsics, pose: &PoseSE3, u: f64, v: f64) -> Option<(f64, f64)> {
        let dir = pixel_ray(k, pose, u, v);
        let hit = self.surface.intersect(pose.translation(), &dir)?;
        let r = (hit.point - pose.translation()).norm();
        let cos = hit.normal.dot(&dir).abs() / dir.norm();
        let l = &self.lighting;
        let light = l.ambient + l.headlight * cos * (l.reference_distance / r).powi(2);
        Some((self.texture.albedo(&hit.point) * light, hit.t))
    }

    /// Z-depth of the surface along the ray through `(u, v)`.
    pub fn depth_at(&self, k: &CameraIntrinsics, pose: &PoseSE3, q: &Vector2<f64>) -> Option<f64> {
        let dir = pixel_ray(k, pose, q.x, q.y);
        self.surface.intersect(pose.translation(), &dir).map(|h| h.t)
    }

    pub fn render(&self, k: &CameraIntrinsics, pose: &PoseSE3) -> RenderedFrame {
        let (w, h) = (k.width, k.height);
        let n = self.supersample;
        let mut gray = vec![0.0; w * h];
        let mut depth = vec![f64::NAN; w * h];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if let Some((_, z)) = self.shade(k, pose, x as f64, y as f64) {
                    depth[i] = z;
                }
                let mut acc = 0.0;
                for sy in 0..n {
                    for sx in 0..n {
                        let u = x as f64 - 0.5 + (sx as f64 + 0.5) / n as f64;
                        let v = y as f64 - 0.5 + (sy as f64 + 0.5) / n as f64;
                        acc += self.shade(k, pose, u, v).map_or(0.0, |s| s.0);
                    }
                }
                gray[i] = (acc / (n * n) as f64).clamp(0.0, 1.0);
            }
        }
        let tint_luma = 0.299 * self.tint[0] + 0.587 * self.tint[1] + 0.114 * self.tint[2];
        let color = gray
            .iter()
            .map(|g| self.tint.map(|t| (g * t / tint_luma).clamp(0.0, 1.0)))
            .collect();
        RenderedFrame {
            gray: ImageGray::new(w, h, gray).expect("sized buffer"),
            color,
            depth: DepthMap::from_values(w, h, depth).expect("sized buffer"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam() -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 100.0, 31.5, 23.5, 64, 48).unwrap()
    }

    #[test]
    fn sphere_depth_at_principal_point() {
        let scene = SceneSpec::new(Surface::Sphere {
            center: [0.0, 0.0, 1.3],
            radius: 0.4,
        });
        let d = scene
            .depth_at(&cam(), &PoseSE3::identity(), &Vector2::new(31.5, 23.5))
            .unwrap();
        assert!((d - 0.9).abs() < 1e-9, "{d}");
        // From inside the far wall is seen.
        let inside = PoseSE3::from_translation(Vector3::new(0.0, 0.0, 1.3));
        let d = scene.depth_at(&cam(), &inside, &Vector2::new(31.5, 23.5)).unwrap();
        assert!((d - 0.4).abs() < 1e-9, "{d}");
    }

    #[test]
    fn heightfield_hit_is_on_surface() {
        let s = Surface::Heightfield {
            amplitude: 0.05,
            frequency: 8.0,
            offset: 0.6,
        };
        let dir = Vector3::new(0.1, -0.05, 1.0);
        let hit = s.intersect(&Vector3::zeros(), &dir).unwrap();
        let p = hit.point;
        assert!((p.z - (0.6 + 0.05 * (8.0 * p.x).sin() * (8.0 * p.y).sin())).abs() < 1e-12);
    }

    #[test]
    fn plane_rendering_is_valid_and_textured() {
        let scene = SceneSpec::new(Surface::Plane {
            normal: [0.0, 0.0, 1.0],
            offset: 0.5,
        });
        let f = scene.render(&cam(), &PoseSE3::identity());
        assert_eq!(f.coverage(), 1.0);
        assert!(f.depth.valid_values().all(|d| (d - 0.5).abs() < 1e-12));
        let (lo, hi) = f
            .gray
            .data()
            .iter()
            .fold((1.0f64, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
        assert!(hi - lo > 0.1, "texture contrast {lo}..{hi}");
    }

    #[test]
    fn texture_is_deterministic_and_smooth() {
        let t = TextureSpec::default();
        let p = Vector3::new(0.123, -0.456, 0.789);
        assert_eq!(t.albedo(&p), t.albedo(&p));
        let q = p + Vector3::repeat(1e-7);
        assert!((t.albedo(&p) - t.albedo(&q)).abs() < 1e-4);
        let other = TextureSpec {
            seed: 2,
            ..Default::default()
        };
        assert_ne!(t.albedo(&p), other.albedo(&p));
    }
}
