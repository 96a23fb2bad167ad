//! One-light-at-a-time superposition check of the oracle.

use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::envlight::{olat_basis, RigLighting};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::scene::Scene;
use crate::tracer::{render_from_transport, render_oracle, LightTransport, TracedMesh};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlatReport {
    pub leds: usize,
    pub max_abs_error: f64,
    /// `max_abs_error` over the largest direct-render value.
    pub max_rel_error: f64,
    pub reference_max: f64,
}

/// Renders `camera` under `lighting` directly and as the weighted sum of unit
/// OLAT renders, and compares the two.
pub fn olat_check(scene: &Scene, frame: usize, lighting: &RigLighting, camera: &CameraModel) -> Result<OlatReport> {
    let mesh = scene.mesh_at(frame)?;
    let traced = TracedMesh::new(&mesh, &scene.template.face_uvs);
    let direct = render_oracle(&traced, &scene.brdf, &scene.rig, lighting, camera)?.image;

    let transport = LightTransport::pixels(&traced, camera, &scene.rig);
    let mut sum = Image::new(camera.width, camera.height, 3);
    for (basis, weight) in olat_basis(&scene.rig, 1.0)?.iter().zip(&lighting.intensities) {
        let img = render_from_transport(&transport, &scene.brdf, basis, camera).image;
        for (px, v) in sum.data.chunks_exact_mut(3).zip(img.data.chunks_exact(3)) {
            for c in 0..3 {
                px[c] += weight[c] * v[c];
            }
        }
    }
    let max_abs_error = direct.data.iter().zip(&sum.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let reference_max = direct.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if reference_max <= 0.0 {
        return Err(Error::invalid("direct render is black; relative error undefined"));
    }
    Ok(OlatReport {
        leds: scene.rig.len(),
        max_abs_error,
        max_rel_error: max_abs_error / reference_max,
        reference_max,
    })
}
