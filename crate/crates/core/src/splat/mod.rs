//! Texel-aligned 3D Gaussians: construction from the posed mesh, network
//! output activations, EWA projection and alpha compositing.

mod render;

pub use render::{composite, project, screen_covariance, world_covariance, CompositeStats, Composited, ProjectedGaussian, SplatConfig};

use nalgebra::{Quaternion, UnitQuaternion};

use crate::error::{Error, Result};
use crate::geom::{interpolate, PosedMesh, TexelSurfaceMap, Vec3};
use crate::image::Image;

/// Network output channels per texel: δp (3), δs (3), rotation (4), opacity (1), color (3).
pub const PREDICTION_CHANNELS: usize = 14;
/// Exponent clamp for scale multipliers.
pub const SCALE_LOG_CLAMP: f64 = 2.0;

/// One Gaussian per valid texel, in texel (row-major) order.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianTexelSheet {
    pub width: usize,
    pub height: usize,
    /// Linear texel index of each Gaussian.
    pub texels: Vec<u32>,
    pub base_positions: Vec<Vec3>,
    pub base_scales: Vec<f64>,
    pub offsets: Vec<Vec3>,
    pub scale_multipliers: Vec<Vec3>,
    /// Unit quaternions `(w, x, y, z)`.
    pub rotations: Vec<[f64; 4]>,
    pub opacities: Vec<f64>,
    pub colors: Vec<[f64; 3]>,
    /// Bound on |δp| per axis.
    pub max_offset: f64,
}

impl GaussianTexelSheet {
    pub fn len(&self) -> usize {
        self.texels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texels.is_empty()
    }

    pub fn position(&self, i: usize) -> Vec3 {
        self.base_positions[i] + self.offsets[i]
    }

    pub fn scale(&self, i: usize) -> Vec3 {
        self.scale_multipliers[i] * self.base_scales[i]
    }

    pub fn rotation(&self, i: usize) -> UnitQuaternion<f64> {
        let [w, x, y, z] = self.rotations[i];
        UnitQuaternion::new_unchecked(Quaternion::new(w, x, y, z))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let lens = [
            self.base_positions.len(),
            self.base_scales.len(),
            self.offsets.len(),
            self.scale_multipliers.len(),
            self.rotations.len(),
            self.opacities.len(),
            self.colors.len(),
        ];
        if let Some(bad) = lens.iter().find(|l| **l != n) {
            return Err(Error::DimensionMismatch {
                what: "gaussian sheet arrays",
                expected: n,
                got: *bad,
            });
        }
        for i in 0..n {
            let q = self.rotations[i];
            let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(Error::invalid(format!("gaussian {i} rotation is not unit length")));
            }
            let s = self.scale(i);
            if s.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::invalid(format!("gaussian {i} has a non-positive scale")));
            }
            if !self.position(i).iter().all(|v| v.is_finite()) {
                return Err(Error::invalid(format!("gaussian {i} position is not finite")));
            }
            if !(0.0..=1.0).contains(&self.opacities[i]) || self.colors[i].iter().any(|c| !(*c >= 0.0)) {
                return Err(Error::invalid(format!("gaussian {i} opacity or color out of range")));
            }
        }
        Ok(())
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Base positions and isotropic scales from the posed mesh. Offsets start at
/// zero, multipliers at one, rotations at identity, opacity 1 and color 0.
pub fn init_sheet(mesh: &PosedMesh, map: &TexelSurfaceMap) -> Result<GaussianTexelSheet> {
    let (w, h) = (map.width, map.height);
    let mut pos = vec![None; w * h];
    for (i, s) in map.valid() {
        pos[i] = Some(interpolate(mesh, s).0);
    }
    let texels: Vec<u32> = (0..w * h).filter(|i| pos[*i].is_some()).map(|i| i as u32).collect();
    if texels.is_empty() {
        return Err(Error::invalid("surface map has no valid texels"));
    }
    let mut scales: Vec<Option<f64>> = Vec::with_capacity(texels.len());
    for &t in &texels {
        let (r, c) = (t as usize / w, t as usize % w);
        let p = pos[t as usize].unwrap();
        let mut sum = 0.0;
        let mut n = 0;
        let neighbors = [
            (r.wrapping_sub(1), c),
            (r + 1, c),
            (r, c.wrapping_sub(1)),
            (r, c + 1),
        ];
        for (rr, cc) in neighbors {
            if rr < h && cc < w {
                if let Some(q) = pos[rr * w + cc] {
                    sum += (q - p).norm();
                    n += 1;
                }
            }
        }
        scales.push((n > 0 && sum > 0.0).then(|| sum / n as f64));
    }
    let known: Vec<f64> = scales.iter().flatten().copied().collect();
    if known.is_empty() {
        return Err(Error::invalid("no texel has a valid neighbor to derive a scale from"));
    }
    let med = median(&known);
    let base_scales: Vec<f64> = scales.into_iter().map(|s| s.unwrap_or(med)).collect();
    let n = texels.len();
    Ok(GaussianTexelSheet {
        width: w,
        height: h,
        base_positions: texels.iter().map(|t| pos[*t as usize].unwrap()).collect(),
        max_offset: 2.0 * median(&base_scales),
        base_scales,
        texels,
        offsets: vec![Vec3::zeros(); n],
        scale_multipliers: vec![Vec3::repeat(1.0); n],
        rotations: vec![[1.0, 0.0, 0.0, 0.0]; n],
        opacities: vec![1.0; n],
        colors: vec![[0.0; 3]; n],
    })
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Unit quaternion from raw `(w, x, y, z)`; identity when the norm is below 1e-6.
pub fn normalize_quaternion(q: [f64; 4]) -> [f64; 4] {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n < 1e-6 {
        [1.0, 0.0, 0.0, 0.0]
    } else {
        q.map(|v| v / n)
    }
}

/// Applies output activations to a raw 14-channel UV map.
pub fn apply_prediction(base: &GaussianTexelSheet, raw: &Image) -> Result<GaussianTexelSheet> {
    if raw.channels != PREDICTION_CHANNELS {
        return Err(Error::DimensionMismatch {
            what: "prediction channels",
            expected: PREDICTION_CHANNELS,
            got: raw.channels,
        });
    }
    if raw.width != base.width || raw.height != base.height {
        return Err(Error::invalid("prediction map does not match the sheet resolution"));
    }
    let mut out = base.clone();
    for (i, &t) in base.texels.iter().enumerate() {
        let v = &raw.data[PREDICTION_CHANNELS * t as usize..PREDICTION_CHANNELS * (t as usize + 1)];
        out.offsets[i] = Vec3::new(v[0].tanh(), v[1].tanh(), v[2].tanh()) * base.max_offset;
        out.scale_multipliers[i] = Vec3::new(v[3], v[4], v[5]).map(|x| x.clamp(-SCALE_LOG_CLAMP, SCALE_LOG_CLAMP).exp());
        out.rotations[i] = normalize_quaternion([v[6], v[7], v[8], v[9]]);
        out.opacities[i] = sigmoid(v[10]);
        out.colors[i] = [softplus(v[11]), softplus(v[12]), softplus(v[13])];
    }
    Ok(out)
}

/// Writes per-Gaussian colors back into a 3-channel UV map.
pub fn colors_to_uv(sheet: &GaussianTexelSheet) -> Image {
    let mut img = Image::new(sheet.width, sheet.height, 3);
    for (i, &t) in sheet.texels.iter().enumerate() {
        img.data[3 * t as usize..3 * t as usize + 3].copy_from_slice(&sheet.colors[i]);
    }
    img
}
