use nalgebra::Matrix3;
use rayon::prelude::*;

use super::{SkinnedTemplate, Vec3};
use crate::error::{Error, Result};

const ORTHO_TOL: f64 = 1e-6;

/// Embedded-graph node transforms plus fine per-vertex offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationState {
    pub node_rotations: Vec<Matrix3<f64>>,
    pub node_translations: Vec<Vec3>,
    pub vertex_offsets: Vec<Vec3>,
}

impl DeformationState {
    pub fn identity(nodes: usize, vertices: usize) -> Self {
        Self {
            node_rotations: vec![Matrix3::identity(); nodes],
            node_translations: vec![Vec3::zeros(); nodes],
            vertex_offsets: vec![Vec3::zeros(); vertices],
        }
    }
}

pub fn is_rotation(m: &Matrix3<f64>) -> bool {
    let e = m.transpose() * m - Matrix3::identity();
    e.iter().all(|v| v.abs() <= ORTHO_TOL) && (m.determinant() - 1.0).abs() <= ORTHO_TOL
}

/// Embedded deformation: every vertex moves by the influence-weighted blend of
/// `R_k (v - g_k) + g_k + t_k`, then the per-vertex offset is added.
pub fn deform_canonical(template: &SkinnedTemplate, state: &DeformationState) -> Result<Vec<Vec3>> {
    let nodes = template.graph.node_positions.len();
    for (what, got) in [
        ("node rotations", state.node_rotations.len()),
        ("node translations", state.node_translations.len()),
    ] {
        if got != nodes {
            return Err(Error::DimensionMismatch {
                what,
                expected: nodes,
                got,
            });
        }
    }
    if state.vertex_offsets.len() != template.vertices.len() {
        return Err(Error::DimensionMismatch {
            what: "vertex offsets",
            expected: template.vertices.len(),
            got: state.vertex_offsets.len(),
        });
    }
    if let Some(k) = state.node_rotations.iter().position(|r| !is_rotation(r)) {
        return Err(Error::invalid(format!("node {k} rotation is not orthonormal")));
    }

    let out = template
        .vertices
        .par_iter()
        .zip(template.graph.influences.par_iter())
        .zip(state.vertex_offsets.par_iter())
        .map(|((v, infl), offset)| {
            let mut acc = Vec3::zeros();
            for &(k, w) in infl {
                let g = template.graph.node_positions[k];
                acc += w * (state.node_rotations[k] * (v - g) + g + state.node_translations[k]);
            }
            acc + offset
        })
        .collect();
    Ok(out)
}
