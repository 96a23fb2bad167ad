use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::image::Image;

pub const DEFAULT_ENV_ROWS: usize = 256;
pub const DEFAULT_ENV_COLS: usize = 512;

/// Equirectangular HDR radiance. Row 0 is the zenith (+Y); inclination grows
/// down the rows, azimuth grows along the columns starting at +X towards +Z.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentMap {
    image: Image,
}

impl EnvironmentMap {
    pub fn new(image: Image) -> Result<Self> {
        if image.channels != 3 {
            return Err(Error::invalid(format!("environment map needs 3 channels, got {}", image.channels)));
        }
        if image.width == 0 || image.height == 0 {
            return Err(Error::invalid("empty environment map"));
        }
        if let Some(v) = image.data.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::invalid(format!("environment radiance {v} is not finite and non-negative")));
        }
        Ok(Self { image })
    }

    pub fn constant(rows: usize, cols: usize, rgb: [f64; 3]) -> Self {
        Self {
            image: Image::filled(cols, rows, &rgb),
        }
    }

    pub fn rows(&self) -> usize {
        self.image.height
    }

    pub fn cols(&self) -> usize {
        self.image.width
    }

    pub fn image(&self) -> &Image {
        &self.image
    }

    pub fn into_image(self) -> Image {
        self.image
    }

    pub fn pixel(&self, row: usize, col: usize) -> [f64; 3] {
        let p = self.image.pixel(row, col);
        [p[0], p[1], p[2]]
    }

    /// Unit direction through the center of pixel `(row, col)`.
    pub fn direction(rows: usize, cols: usize, row: usize, col: usize) -> Vec3 {
        let theta = PI * (row as f64 + 0.5) / rows as f64;
        let phi = TAU * (col as f64 + 0.5) / cols as f64;
        Vec3::new(theta.sin() * phi.cos(), theta.cos(), theta.sin() * phi.sin())
    }

    /// Solid angle subtended by a pixel of `row`.
    pub fn pixel_solid_angle(rows: usize, cols: usize, row: usize) -> f64 {
        let t0 = PI * row as f64 / rows as f64;
        let t1 = PI * (row + 1) as f64 / rows as f64;
        (t0.cos() - t1.cos()) * TAU / cols as f64
    }

    /// Scaled sum of two maps, used by linearity checks.
    pub fn combine(&self, a: f64, other: &EnvironmentMap, b: f64) -> Result<Self> {
        if !self.image.same_shape(&other.image) {
            return Err(Error::invalid("environment maps differ in resolution"));
        }
        let data = self.image.data.iter().zip(&other.image.data).map(|(x, y)| a * x + b * y).collect();
        EnvironmentMap::new(Image::from_data(self.cols(), self.rows(), 3, data)?)
    }

    /// Synthetic indoor-style environment: a soft vertical gradient plus a few
    /// bright colored area lights, fully determined by `seed`.
    pub fn procedural(rows: usize, cols: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sky: [f64; 3] = [rng.gen_range(0.05..0.3), rng.gen_range(0.05..0.3), rng.gen_range(0.05..0.3)];
        let ground: [f64; 3] = [rng.gen_range(0.0..0.1), rng.gen_range(0.0..0.1), rng.gen_range(0.0..0.1)];
        let lights: Vec<(Vec3, f64, [f64; 3])> = (0..rng.gen_range(1..=4))
            .map(|_| {
                let z: f64 = rng.gen_range(-0.6..1.0);
                let phi: f64 = rng.gen_range(0.0..TAU);
                let s = (1.0 - z * z).sqrt();
                let dir = Vec3::new(s * phi.cos(), z, s * phi.sin());
                let width: f64 = rng.gen_range(0.12..0.45);
                let power: f64 = rng.gen_range(2.0..12.0);
                let tint = [rng.gen_range(0.4..1.0), rng.gen_range(0.4..1.0), rng.gen_range(0.4..1.0)];
                (dir, width, [tint[0] * power, tint[1] * power, tint[2] * power])
            })
            .collect();
        let mut image = Image::new(cols, rows, 3);
        for row in 0..rows {
            for col in 0..cols {
                let d = Self::direction(rows, cols, row, col);
                let t = 0.5 * (d.y + 1.0);
                let px = image.pixel_mut(row, col);
                for c in 0..3 {
                    px[c] = ground[c] * (1.0 - t) + sky[c] * t;
                }
                for (dir, width, rgb) in &lights {
                    let ang = d.dot(dir).clamp(-1.0, 1.0).acos();
                    let fall = (-0.5 * (ang / width).powi(2)).exp();
                    for c in 0..3 {
                        px[c] += rgb[c] * fall;
                    }
                }
            }
        }
        Self { image }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solid_angles_cover_the_sphere() {
        let (rows, cols) = (16, 32);
        let total: f64 = (0..rows).map(|r| EnvironmentMap::pixel_solid_angle(rows, cols, r) * cols as f64).sum();
        assert!((total - 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn zenith_row_points_up() {
        let d = EnvironmentMap::direction(256, 512, 0, 0);
        assert!(d.y > 0.99);
        assert!((d.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_negative_radiance() {
        let mut img = Image::new(4, 2, 3);
        img.data[5] = -1.0;
        assert!(EnvironmentMap::new(img).is_err());
    }

    #[test]
    fn procedural_is_seeded() {
        assert_eq!(EnvironmentMap::procedural(8, 16, 3), EnvironmentMap::procedural(8, 16, 3));
        assert_ne!(EnvironmentMap::procedural(8, 16, 3), EnvironmentMap::procedural(8, 16, 4));
    }
}
