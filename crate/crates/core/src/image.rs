//! Dense multi-channel images and UV maps.
//!
//! Storage is row-major, top row first, channels interleaved. The same type
//! backs camera renders (pixels) and UV-space feature maps (texels).

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn filled(width: usize, height: usize, value: &[f64]) -> Self {
        let mut img = Self::new(width, height, value.len());
        for px in img.data.chunks_exact_mut(value.len()) {
            px.copy_from_slice(value);
        }
        img
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::DimensionMismatch {
                what: "image data",
                expected: width * height * channels,
                got: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        (row * self.width + col) * self.channels
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let i = self.index(row, col);
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, row: usize, col: usize) -> &mut [f64] {
        let i = self.index(row, col);
        let c = self.channels;
        &mut self.data[i..i + c]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    /// Bilinear sample at continuous pixel coordinates, pixel centers at +0.5,
    /// clamped to the border.
    pub fn sample_bilinear(&self, x: f64, y: f64, out: &mut [f64]) {
        let fx = (x - 0.5).clamp(0.0, (self.width - 1) as f64);
        let fy = (y - 0.5).clamp(0.0, (self.height - 1) as f64);
        let x0 = fx.floor() as usize;
        let y0 = fy.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let tx = fx - x0 as f64;
        let ty = fy - y0 as f64;
        let (p00, p01, p10, p11) = (
            self.pixel(y0, x0),
            self.pixel(y0, x1),
            self.pixel(y1, x0),
            self.pixel(y1, x1),
        );
        for c in 0..self.channels {
            let top = p00[c] * (1.0 - tx) + p01[c] * tx;
            let bottom = p10[c] * (1.0 - tx) + p11[c] * tx;
            out[c] = top * (1.0 - ty) + bottom * ty;
        }
    }

    /// Bilinear sample at normalized UV coordinates in [0,1]², v = 0 on row 0.
    pub fn sample_uv(&self, u: f64, v: f64, out: &mut [f64]) {
        self.sample_bilinear(u * self.width as f64, v * self.height as f64, out);
    }

    /// Planar `[channels, height, width]` copy in f32, the layout used by tensors.
    pub fn to_planar_f32(&self) -> Vec<f32> {
        let plane = self.width * self.height;
        let mut out = vec![0.0f32; plane * self.channels];
        for (p, px) in self.data.chunks_exact(self.channels).enumerate() {
            for (c, v) in px.iter().enumerate() {
                out[c * plane + p] = *v as f32;
            }
        }
        out
    }

    pub fn from_planar(width: usize, height: usize, channels: usize, planar: &[f32]) -> Result<Self> {
        let plane = width * height;
        if planar.len() != plane * channels {
            return Err(Error::DimensionMismatch {
                what: "planar image",
                expected: plane * channels,
                got: planar.len(),
            });
        }
        let mut img = Image::new(width, height, channels);
        for p in 0..plane {
            for c in 0..channels {
                img.data[p * channels + c] = planar[c * plane + p] as f64;
            }
        }
        Ok(img)
    }
}

/// Per-texel validity flags for a UV map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            bits: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn intersect(&self, other: &Mask) -> Result<Mask> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::invalid("mask resolution mismatch"));
        }
        Ok(Mask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a && *b).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_hits_pixel_centers_exactly() {
        let mut img = Image::new(3, 2, 1);
        for (i, v) in img.data.iter_mut().enumerate() {
            *v = i as f64;
        }
        let mut out = [0.0];
        img.sample_bilinear(1.5, 1.5, &mut out);
        assert_eq!(out[0], 4.0);
        img.sample_bilinear(1.0, 0.5, &mut out);
        assert_eq!(out[0], 0.5);
    }

    #[test]
    fn planar_round_trip() {
        let img = Image::from_data(2, 2, 3, (0..12).map(|v| v as f64).collect()).unwrap();
        let planar = img.to_planar_f32();
        assert_eq!(planar[0..4], [0.0, 3.0, 6.0, 9.0]);
        assert_eq!(Image::from_planar(2, 2, 3, &planar).unwrap(), img);
    }
}
