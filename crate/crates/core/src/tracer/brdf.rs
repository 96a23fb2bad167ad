use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Vec2, Vec3};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BrdfModel {
    Lambert,
    LambertPhong,
}

/// Surface reflectance: a UV-space albedo texture plus an optional
/// energy-normalized Phong lobe.
#[derive(Debug, Clone, PartialEq)]
pub struct BrdfSpec {
    pub model: BrdfModel,
    pub albedo: Image,
    pub ks: f64,
    pub phong_exponent: f64,
}

impl BrdfSpec {
    pub fn lambert(albedo: Image) -> Result<Self> {
        Self::new(BrdfModel::Lambert, albedo, 0.0, 1.0)
    }

    pub fn new(model: BrdfModel, albedo: Image, ks: f64, phong_exponent: f64) -> Result<Self> {
        let b = Self {
            model,
            albedo,
            ks,
            phong_exponent,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.albedo.channels != 3 {
            return Err(Error::invalid("albedo texture must have 3 channels"));
        }
        if self.albedo.data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("albedo values must lie in [0, 1]"));
        }
        if !(self.ks >= 0.0) || !self.ks.is_finite() {
            return Err(Error::invalid(format!("specular strength {} must be finite and >= 0", self.ks)));
        }
        if !(self.phong_exponent >= 1.0) || !self.phong_exponent.is_finite() {
            return Err(Error::invalid(format!("phong exponent {} must be finite and >= 1", self.phong_exponent)));
        }
        Ok(())
    }

    pub fn albedo_at(&self, uv: &Vec2) -> [f64; 3] {
        let mut out = [0.0; 3];
        self.albedo.sample_uv(uv.x, uv.y, &mut out);
        out
    }

    /// Effective lobe strength; zero for pure lambert.
    pub fn specular_strength(&self) -> f64 {
        match self.model {
            BrdfModel::Lambert => 0.0,
            BrdfModel::LambertPhong => self.ks,
        }
    }

    /// Normalized Phong lobe value for light direction `wi`, view `wo`, normal `n`
    /// (without the ks factor).
    #[inline]
    pub fn phong_lobe(&self, wi: &Vec3, wo: &Vec3, n: &Vec3) -> f64 {
        let r = 2.0 * wi.dot(n) * n - wi;
        let c = r.dot(wo).max(0.0);
        (self.phong_exponent + 2.0) / (2.0 * std::f64::consts::PI) * c.powf(self.phong_exponent)
    }
}

/// Striped test albedo: horizontal color bands modulated by a few vertical
/// stripes, all values in `[0.1, 0.9]`.
pub fn striped_albedo(width: usize, height: usize, bands: usize) -> Image {
    const PALETTE: [[f64; 3]; 6] = [
        [0.8, 0.25, 0.2],
        [0.2, 0.6, 0.3],
        [0.25, 0.35, 0.85],
        [0.85, 0.75, 0.3],
        [0.6, 0.3, 0.7],
        [0.3, 0.75, 0.8],
    ];
    let bands = bands.max(1);
    let mut img = Image::new(width, height, 3);
    for r in 0..height {
        let band = r * bands / height;
        for c in 0..width {
            let base = PALETTE[band % PALETTE.len()];
            let stripe = if (c * 8 / width) % 2 == 0 { 1.0 } else { 0.7 };
            let px = img.pixel_mut(r, c);
            for k in 0..3 {
                px[k] = (base[k] * stripe).clamp(0.1, 0.9);
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        let img = Image::filled(4, 4, &[0.5; 3]);
        assert!(BrdfSpec::lambert(img.clone()).is_ok());
        assert!(BrdfSpec::new(BrdfModel::LambertPhong, img.clone(), -1.0, 10.0).is_err());
        assert!(BrdfSpec::new(BrdfModel::LambertPhong, img.clone(), 0.5, 0.5).is_err());
        assert!(BrdfSpec::lambert(Image::filled(4, 4, &[1.5; 3])).is_err());
        assert!(BrdfSpec::lambert(Image::filled(4, 4, &[0.5])).is_err());
    }

    #[test]
    fn phong_peak_on_mirror_direction() {
        let b = BrdfSpec::new(BrdfModel::LambertPhong, Image::filled(2, 2, &[0.5; 3]), 0.3, 20.0).unwrap();
        let n = Vec3::z();
        let wi = Vec3::new(1.0, 0.0, 1.0).normalize();
        let mirror = Vec3::new(-1.0, 0.0, 1.0).normalize();
        let peak = b.phong_lobe(&wi, &mirror, &n);
        assert!((peak - 22.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-12);
        assert!(b.phong_lobe(&wi, &Vec3::z(), &n) < peak);
    }

    #[test]
    fn striped_albedo_range() {
        let img = striped_albedo(64, 64, 6);
        assert!(img.data.iter().all(|v| (0.1..=0.9).contains(v)));
    }
}
