use std::f64::consts::PI;

use rayon::prelude::*;

use super::{BrdfSpec, Bvh};
use crate::camera::CameraModel;
use crate::envlight::{LedRig, RigLighting};
use crate::error::{Error, Result};
use crate::geom::{interpolate, sample_uv, PosedMesh, TexelSample, TexelSurfaceMap, Vec2, Vec3};
use crate::image::{Image, Mask};

/// A posed mesh with its UV layout and acceleration structure.
#[derive(Debug, Clone)]
pub struct TracedMesh<'a> {
    pub mesh: &'a PosedMesh,
    pub face_uvs: &'a [[Vec2; 3]],
    pub bvh: Bvh,
}

impl<'a> TracedMesh<'a> {
    pub fn new(mesh: &'a PosedMesh, face_uvs: &'a [[Vec2; 3]]) -> Self {
        Self {
            mesh,
            face_uvs,
            bvh: Bvh::build(mesh),
        }
    }

    pub fn surface_point(&self, s: &TexelSample) -> SurfacePoint {
        let (position, normal) = interpolate(self.mesh, s);
        SurfacePoint {
            position,
            normal,
            uv: sample_uv(self.face_uvs, s),
        }
    }

    /// First surface point along the primary ray through the pixel center.
    pub fn primary_hit(&self, camera: &CameraModel, row: usize, col: usize) -> Option<SurfacePoint> {
        let (o, d) = camera.ray(col as f64 + 0.5, row as f64 + 0.5);
        self.bvh.closest_hit(&o, &d, 0.0).map(|h| {
            self.surface_point(&TexelSample {
                face: h.face,
                bary: h.bary,
                dilated: false,
            })
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub position: Vec3,
    pub normal: Vec3,
    pub uv: Vec2,
}

/// Unshadowed, front-facing LED contribution at a surface point:
/// `g = V · max(⟨ω, n⟩, 0) · w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedTerm {
    pub led: u32,
    pub g: f64,
    pub wi: Vec3,
}

/// Per-point visibility-weighted LED terms, reusable across lightings.
#[derive(Debug, Clone)]
pub struct LightTransport {
    pub width: usize,
    pub height: usize,
    pub points: Vec<Option<(SurfacePoint, Vec<LedTerm>)>>,
}

/// Source of outgoing directions for texel-space radiance.
#[derive(Debug, Clone, Copy)]
pub enum ViewSource<'a> {
    /// Every texel looks toward this point (a camera center).
    Point(Vec3),
    /// Per-texel unit directions, 3 channels at the surface map resolution.
    Directions(&'a Image),
}

fn led_terms(bvh: &Bvh, rig: &LedRig, p: &SurfacePoint) -> Vec<LedTerm> {
    let mut out = Vec::new();
    for (i, (pos, w)) in rig.positions.iter().zip(&rig.weights).enumerate() {
        let to = Vec3::from(*pos) - p.position;
        let dist = to.norm();
        if dist <= 0.0 {
            continue;
        }
        let wi = to / dist;
        let cos = wi.dot(&p.normal);
        if cos <= 0.0 || bvh.occluded(&p.position, &wi, dist) {
            continue;
        }
        out.push(LedTerm {
            led: i as u32,
            g: cos * w,
            wi,
        });
    }
    out
}

impl LightTransport {
    pub fn texels(traced: &TracedMesh, map: &TexelSurfaceMap, rig: &LedRig) -> Self {
        let points = map
            .texels
            .par_iter()
            .map(|t| {
                t.as_ref().map(|s| {
                    let p = traced.surface_point(s);
                    (p, led_terms(&traced.bvh, rig, &p))
                })
            })
            .collect();
        Self {
            width: map.width,
            height: map.height,
            points,
        }
    }

    pub fn pixels(traced: &TracedMesh, camera: &CameraModel, rig: &LedRig) -> Self {
        let points = (0..camera.width * camera.height)
            .into_par_iter()
            .map(|i| {
                traced
                    .primary_hit(camera, i / camera.width, i % camera.width)
                    .map(|p| (p, led_terms(&traced.bvh, rig, &p)))
            })
            .collect();
        Self {
            width: camera.width,
            height: camera.height,
            points,
        }
    }

    pub fn mask(&self) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            bits: self.points.iter().map(Option::is_some).collect(),
        }
    }

    /// `d = Σ L · g` per channel; zero where there is no surface.
    pub fn diffuse(&self, lighting: &RigLighting) -> Image {
        let data = self
            .points
            .par_iter()
            .flat_map_iter(|pt| {
                let mut d = [0.0; 3];
                if let Some((_, terms)) = pt {
                    for t in terms {
                        let l = &lighting.intensities[t.led as usize];
                        for k in 0..3 {
                            d[k] += l[k] * t.g;
                        }
                    }
                }
                d
            })
            .collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 3,
            data,
        }
    }

    /// Outgoing radiance `ρ · (Σ L g / π + ks · Σ L g · lobe)` with the view
    /// direction per point given by `view(index, point)`.
    pub fn radiance<F>(&self, brdf: &BrdfSpec, lighting: &RigLighting, view: F) -> Image
    where
        F: Fn(usize, &SurfacePoint) -> Vec3 + Sync,
    {
        let ks = brdf.specular_strength();
        let data = self
            .points
            .par_iter()
            .enumerate()
            .flat_map_iter(|(i, pt)| {
                let mut out = [0.0; 3];
                if let Some((p, terms)) = pt {
                    let rho = brdf.albedo_at(&p.uv);
                    let mut d = [0.0; 3];
                    for t in terms {
                        let l = &lighting.intensities[t.led as usize];
                        for k in 0..3 {
                            d[k] += l[k] * t.g;
                        }
                    }
                    if ks > 0.0 {
                        let wo = view(i, p);
                        let mut s = [0.0; 3];
                        for t in terms {
                            let lobe = brdf.phong_lobe(&t.wi, &wo, &p.normal);
                            let l = &lighting.intensities[t.led as usize];
                            for k in 0..3 {
                                s[k] += l[k] * t.g * lobe;
                            }
                        }
                        for k in 0..3 {
                            out[k] = rho[k] * (d[k] / PI + ks * s[k]);
                        }
                    } else {
                        for k in 0..3 {
                            out[k] = rho[k] * (d[k] / PI);
                        }
                    }
                }
                out
            })
            .collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 3,
            data,
        }
    }
}

/// Linear RGB render together with the camera that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct RadianceImage {
    pub image: Image,
    pub camera: CameraModel,
}

/// Pre-integrated diffuse shading per texel.
pub fn diffuse_shading(traced: &TracedMesh, map: &TexelSurfaceMap, rig: &LedRig, lighting: &RigLighting) -> Result<Image> {
    lighting.validate(rig)?;
    Ok(LightTransport::texels(traced, map, rig).diffuse(lighting))
}

/// Direct-lighting render through `camera`; background pixels are zero.
pub fn render_oracle(
    traced: &TracedMesh,
    brdf: &BrdfSpec,
    rig: &LedRig,
    lighting: &RigLighting,
    camera: &CameraModel,
) -> Result<RadianceImage> {
    lighting.validate(rig)?;
    camera.validate()?;
    let transport = LightTransport::pixels(traced, camera, rig);
    Ok(render_from_transport(&transport, brdf, lighting, camera))
}

/// Render reusing precomputed pixel transport for `camera`.
pub fn render_from_transport(transport: &LightTransport, brdf: &BrdfSpec, lighting: &RigLighting, camera: &CameraModel) -> RadianceImage {
    let center = camera.center();
    let image = transport.radiance(brdf, lighting, |_, p| (center - p.position).normalize());
    RadianceImage {
        image,
        camera: camera.clone(),
    }
}

/// Texel-space evaluation of the same direct-lighting sum.
pub fn bake_oracle_texture(
    traced: &TracedMesh,
    map: &TexelSurfaceMap,
    brdf: &BrdfSpec,
    rig: &LedRig,
    lighting: &RigLighting,
    view: ViewSource,
) -> Result<Image> {
    lighting.validate(rig)?;
    let transport = LightTransport::texels(traced, map, rig);
    bake_from_transport(&transport, brdf, lighting, view)
}

pub fn bake_from_transport(transport: &LightTransport, brdf: &BrdfSpec, lighting: &RigLighting, view: ViewSource) -> Result<Image> {
    match view {
        ViewSource::Point(c) => Ok(transport.radiance(brdf, lighting, |_, p| {
            let v = c - p.position;
            let n = v.norm();
            if n > 0.0 {
                v / n
            } else {
                p.normal
            }
        })),
        ViewSource::Directions(dirs) => {
            if dirs.width != transport.width || dirs.height != transport.height || dirs.channels != 3 {
                return Err(Error::invalid("view direction map does not match the surface map"));
            }
            Ok(transport.radiance(brdf, lighting, |i, _| {
                let d = &dirs.data[3 * i..3 * i + 3];
                Vec3::new(d[0], d[1], d[2])
            }))
        }
    }
}

/// Camera-space unit normals of the visible surface and the foreground mask.
pub fn render_normals(traced: &TracedMesh, camera: &CameraModel) -> (Image, Mask) {
    let rot = camera.rotation_matrix();
    let hits: Vec<Option<Vec3>> = (0..camera.width * camera.height)
        .into_par_iter()
        .map(|i| {
            traced
                .primary_hit(camera, i / camera.width, i % camera.width)
                .map(|p| rot * p.normal)
        })
        .collect();
    let mut img = Image::new(camera.width, camera.height, 3);
    for (i, h) in hits.iter().enumerate() {
        if let Some(n) = h {
            img.data[3 * i..3 * i + 3].copy_from_slice(n.as_slice());
        }
    }
    let mask = Mask {
        width: camera.width,
        height: camera.height,
        bits: hits.iter().map(Option::is_some).collect(),
    };
    (img, mask)
}
