use std::ops::Range;

use crate::error::{Error, Result};
use crate::image::{Image, Mask};

pub const FEATURE_CHANNELS: usize = 24;

/// Named channel ranges of the stack, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSlot {
    CoarseNormals,
    HfNormals,
    Position,
    Albedo,
    Diffuse,
    View,
}

impl FeatureSlot {
    pub const ALL: [FeatureSlot; 6] = [
        FeatureSlot::CoarseNormals,
        FeatureSlot::HfNormals,
        FeatureSlot::Position,
        FeatureSlot::Albedo,
        FeatureSlot::Diffuse,
        FeatureSlot::View,
    ];

    pub fn channels(self) -> Range<usize> {
        match self {
            FeatureSlot::CoarseNormals => 0..9,
            FeatureSlot::HfNormals => 9..12,
            FeatureSlot::Position => 12..15,
            FeatureSlot::Albedo => 15..18,
            FeatureSlot::Diffuse => 18..21,
            FeatureSlot::View => 21..24,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureSlot::CoarseNormals => "coarse_normals",
            FeatureSlot::HfNormals => "hf_normals",
            FeatureSlot::Position => "position",
            FeatureSlot::Albedo => "albedo",
            FeatureSlot::Diffuse => "diffuse",
            FeatureSlot::View => "view",
        }
    }
}

/// Interleaved 24-channel UV feature map with its validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    pub data: Image,
    pub mask: Mask,
}

impl FeatureStack {
    pub fn width(&self) -> usize {
        self.data.width
    }

    pub fn height(&self) -> usize {
        self.data.height
    }

    pub fn slice(&self, slot: FeatureSlot) -> Image {
        let range = slot.channels();
        let n = range.len();
        let mut out = Image::new(self.data.width, self.data.height, n);
        for (dst, src) in out.data.chunks_mut(n).zip(self.data.data.chunks(FEATURE_CHANNELS)) {
            dst.copy_from_slice(&src[range.clone()]);
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.channels != FEATURE_CHANNELS {
            return Err(Error::DimensionMismatch {
                what: "feature channels",
                expected: FEATURE_CHANNELS,
                got: self.data.channels,
            });
        }
        if self.mask.width != self.data.width || self.mask.height != self.data.height {
            return Err(Error::invalid("feature mask does not match the stack"));
        }
        if self.data.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature stack contains non-finite values"));
        }
        Ok(())
    }
}

/// Concatenates the six maps in slot order and zeroes texels outside `valid`.
pub fn assemble(
    coarse_normals: &Image,
    hf_normals: &Image,
    position: &Image,
    albedo: &Image,
    diffuse: &Image,
    view: &Image,
    valid: &Mask,
) -> Result<FeatureStack> {
    let parts = [coarse_normals, hf_normals, position, albedo, diffuse, view];
    let (w, h) = (valid.width, valid.height);
    for (img, slot) in parts.iter().zip(FeatureSlot::ALL) {
        if img.width != w || img.height != h {
            return Err(Error::invalid(format!(
                "{} map is {}x{}, expected {w}x{h}",
                slot.name(),
                img.width,
                img.height
            )));
        }
        if img.channels != slot.channels().len() {
            return Err(Error::DimensionMismatch {
                what: slot.name(),
                expected: slot.channels().len(),
                got: img.channels,
            });
        }
    }
    let mut data = Image::new(w, h, FEATURE_CHANNELS);
    for (i, dst) in data.data.chunks_mut(FEATURE_CHANNELS).enumerate() {
        if !valid.bits[i] {
            continue;
        }
        for (img, slot) in parts.iter().zip(FeatureSlot::ALL) {
            let n = img.channels;
            dst[slot.channels()].copy_from_slice(&img.data[n * i..n * (i + 1)]);
        }
    }
    let stack = FeatureStack {
        data,
        mask: valid.clone(),
    };
    stack.validate()?;
    Ok(stack)
}
