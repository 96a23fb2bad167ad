//! UV-space feature maps and the 24-channel network input stack.

mod inpaint;
mod stack;

pub use inpaint::pull_push;
pub use stack::{assemble, FeatureStack, FeatureSlot, FEATURE_CHANNELS};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::camera::CameraModel;
use crate::error::{Error, Result};
use crate::geom::{interpolate, PosedMesh, TexelSurfaceMap, Vec3};
use crate::image::{Image, Mask};
use crate::tracer::TracedMesh;

/// Per-camera radiance and camera-space normal images.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewImageSet {
    pub cameras: Vec<CameraModel>,
    pub images: Vec<Image>,
    pub normals: Vec<Image>,
}

impl ViewImageSet {
    pub fn validate(&self) -> Result<()> {
        if self.cameras.is_empty() {
            return Err(Error::invalid("view set needs at least one camera"));
        }
        if self.images.len() != self.cameras.len() || self.normals.len() != self.cameras.len() {
            return Err(Error::DimensionMismatch {
                what: "view images",
                expected: self.cameras.len(),
                got: self.images.len().min(self.normals.len()),
            });
        }
        for ((c, i), n) in self.cameras.iter().zip(&self.images).zip(&self.normals) {
            check_camera_image(c, i)?;
            check_camera_image(c, n)?;
        }
        Ok(())
    }
}

fn check_camera_image(cam: &CameraModel, img: &Image) -> Result<()> {
    if img.width != cam.width || img.height != cam.height {
        return Err(Error::invalid(format!(
            "image {}x{} does not match camera {}x{}",
            img.width, img.height, cam.width, cam.height
        )));
    }
    Ok(())
}

/// Result of averaging camera samples into UV space.
#[derive(Debug, Clone, PartialEq)]
pub struct Unprojected {
    pub map: Image,
    /// Valid texels seen by no camera.
    pub holes: Mask,
    /// Number of cameras averaged per texel.
    pub counts: Vec<u32>,
}

/// Mesh normals of three consecutive frames, 9 channels in time order.
pub fn coarse_normal_stack(meshes: &[&PosedMesh], map: &TexelSurfaceMap) -> Result<Image> {
    if meshes.len() != 3 {
        return Err(Error::DimensionMismatch {
            what: "coarse normal frames",
            expected: 3,
            got: meshes.len(),
        });
    }
    let mut out = Image::new(map.width, map.height, 9);
    for (i, s) in map.valid() {
        for (f, mesh) in meshes.iter().enumerate() {
            let (_, n) = interpolate(mesh, s);
            out.data[9 * i + 3 * f..9 * i + 3 * f + 3].copy_from_slice(n.as_slice());
        }
    }
    Ok(out)
}

/// Whether `camera` sees the surface point `p` with normal `n`; returns its
/// pixel coordinates when it does.
pub fn visible_pixel(traced: &TracedMesh, camera: &CameraModel, p: &Vec3, n: &Vec3) -> Option<(f64, f64)> {
    let to = camera.center() - p;
    let dist = to.norm();
    if dist <= 0.0 {
        return None;
    }
    let dir = to / dist;
    if n.dot(&dir) <= 0.0 {
        return None;
    }
    let px = camera.project(p)?;
    if !camera.contains(&px) {
        return None;
    }
    if traced.bvh.occluded(p, &dir, dist) {
        return None;
    }
    Some((px.x, px.y))
}

/// Visibility-masked mean of bilinear camera samples per texel.
pub fn unproject(images: &[Image], cameras: &[CameraModel], traced: &TracedMesh, map: &TexelSurfaceMap) -> Result<Unprojected> {
    unproject_with(images, cameras, traced, map, |_, v| v)
}

fn unproject_with<F>(images: &[Image], cameras: &[CameraModel], traced: &TracedMesh, map: &TexelSurfaceMap, transform: F) -> Result<Unprojected>
where
    F: Fn(usize, [f64; 3]) -> [f64; 3] + Sync,
{
    if cameras.is_empty() {
        return Err(Error::invalid("unprojection needs at least one camera"));
    }
    if images.len() != cameras.len() {
        return Err(Error::DimensionMismatch {
            what: "unprojection images",
            expected: cameras.len(),
            got: images.len(),
        });
    }
    for (c, i) in cameras.iter().zip(images) {
        check_camera_image(c, i)?;
        if i.channels != 3 {
            return Err(Error::invalid("unprojection expects 3-channel images"));
        }
    }
    let per_texel: Vec<([f64; 3], u32)> = map
        .texels
        .par_iter()
        .map(|t| {
            let Some(s) = t else {
                return ([0.0; 3], 0);
            };
            let (p, n) = interpolate(traced.mesh, s);
            let mut acc = [0.0; 3];
            let mut count = 0;
            for (ci, (cam, img)) in cameras.iter().zip(images).enumerate() {
                if let Some((x, y)) = visible_pixel(traced, cam, &p, &n) {
                    let mut v = [0.0; 3];
                    img.sample_bilinear(x, y, &mut v);
                    let v = transform(ci, v);
                    for k in 0..3 {
                        acc[k] += v[k];
                    }
                    count += 1;
                }
            }
            if count > 0 {
                for a in &mut acc {
                    *a /= count as f64;
                }
            }
            (acc, count)
        })
        .collect();
    let mut out = Image::new(map.width, map.height, 3);
    let mut holes = Mask::new(map.width, map.height, false);
    let mut counts = Vec::with_capacity(per_texel.len());
    for (i, (v, c)) in per_texel.into_iter().enumerate() {
        out.data[3 * i..3 * i + 3].copy_from_slice(&v);
        holes.bits[i] = map.texels[i].is_some() && c == 0;
        counts.push(c);
    }
    Ok(Unprojected {
        map: out,
        holes,
        counts,
    })
}

/// World-space image normals averaged in UV space; holes take the mesh normal.
pub fn hf_normal_feature(normal_images: &[Image], cameras: &[CameraModel], traced: &TracedMesh, map: &TexelSurfaceMap) -> Result<Unprojected> {
    let rots: Vec<_> = cameras.iter().map(|c| c.camera_to_world()).collect();
    let mut u = unproject_with(normal_images, cameras, traced, map, |ci, v| {
        let w = rots[ci] * Vec3::from(v);
        [w.x, w.y, w.z]
    })?;
    for (i, s) in map.valid() {
        let v = Vec3::from_column_slice(&u.map.data[3 * i..3 * i + 3]);
        let len = v.norm();
        let n = if u.counts[i] > 0 && len > 1e-9 {
            v / len
        } else {
            u.holes.bits[i] = true;
            interpolate(traced.mesh, s).1
        };
        u.map.data[3 * i..3 * i + 3].copy_from_slice(n.as_slice());
    }
    Ok(u)
}

/// World-space texel positions, zero outside the atlas.
pub fn position_map(mesh: &PosedMesh, map: &TexelSurfaceMap) -> Image {
    let mut out = Image::new(map.width, map.height, 3);
    for (i, s) in map.valid() {
        let (p, _) = interpolate(mesh, s);
        out.data[3 * i..3 * i + 3].copy_from_slice(p.as_slice());
    }
    out
}

/// Unprojected tracking-frame colors with holes filled by pull-push.
pub fn albedo_feature(images: &[Image], cameras: &[CameraModel], traced: &TracedMesh, map: &TexelSurfaceMap) -> Result<Image> {
    let u = unproject(images, cameras, traced, map)?;
    let known: Vec<bool> = (0..u.counts.len()).map(|i| u.counts[i] > 0).collect();
    if !known.iter().any(|k| *k) {
        return Err(Error::AllHoles);
    }
    let mut filled = pull_push(&u.map, &known)?;
    let valid = map.mask();
    for (i, v) in valid.bits.iter().enumerate() {
        if !*v {
            filled.data[3 * i..3 * i + 3].fill(0.0);
        }
    }
    Ok(filled)
}

/// Unit direction from each texel position toward `camera_center`. Texels at
/// the camera center get a zero vector and are flagged.
pub fn view_encoding(camera_center: &Vec3, positions: &Image, valid: &Mask) -> Result<(Image, Mask)> {
    if positions.channels != 3 || positions.width != valid.width || positions.height != valid.height {
        return Err(Error::invalid("position map does not match the validity mask"));
    }
    let mut out = Image::new(positions.width, positions.height, 3);
    let mut flags = Mask::new(positions.width, positions.height, false);
    for (i, ok) in valid.bits.iter().enumerate() {
        if !*ok {
            continue;
        }
        let p = Vec3::from_column_slice(&positions.data[3 * i..3 * i + 3]);
        let v = camera_center - p;
        let len = v.norm();
        if len > 1e-12 {
            out.data[3 * i..3 * i + 3].copy_from_slice((v / len).as_slice());
        } else {
            flags.bits[i] = true;
        }
    }
    Ok((out, flags))
}

/// Adds per-component Gaussian noise to foreground normals and renormalizes.
pub fn perturb_normals<R: Rng>(normals: &mut Image, foreground: &Mask, sigma: f64, rng: &mut R) -> Result<()> {
    if sigma <= 0.0 {
        return Ok(());
    }
    let dist = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    for (i, fg) in foreground.bits.iter().enumerate() {
        if !*fg {
            continue;
        }
        let px = &mut normals.data[3 * i..3 * i + 3];
        let v = Vec3::new(px[0] + dist.sample(rng), px[1] + dist.sample(rng), px[2] + dist.sample(rng));
        let len = v.norm();
        if len > 1e-12 {
            px.copy_from_slice((v / len).as_slice());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests;
