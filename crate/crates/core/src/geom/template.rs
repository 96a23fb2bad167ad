use nalgebra::{Matrix4, Rotation3, Translation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use super::{Vec2, Vec3};
use crate::error::{Error, Result};

const WEIGHT_TOL: f64 = 1e-6;

/// A joint with one rotational degree of freedom per axis, applied in order
/// at the joint origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    pub parent: Option<usize>,
    /// Rest offset from the parent joint (or world origin for roots).
    pub offset: [f64; 3],
    /// Rotation axes in the joint's local frame, one per DOF.
    #[serde(default)]
    pub axes: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    joints: Vec<Joint>,
    dof_offsets: Vec<usize>,
    rest_globals: Vec<Matrix4<f64>>,
    rest_inverses: Vec<Matrix4<f64>>,
}

impl Skeleton {
    /// Joints must be topologically ordered (parents before children).
    pub fn new(joints: Vec<Joint>) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::invalid("skeleton has no joints"));
        }
        let mut dof_offsets = Vec::with_capacity(joints.len());
        let mut dofs = 0;
        for (i, j) in joints.iter().enumerate() {
            if let Some(p) = j.parent {
                if p >= i {
                    return Err(Error::invalid(format!(
                        "joint {i} ({}) has parent {p}, joints must be ordered parent-first",
                        j.name
                    )));
                }
            }
            for a in &j.axes {
                let n = Vector3::from(*a).norm();
                if !n.is_finite() || n < 1e-9 {
                    return Err(Error::invalid(format!("joint {i} has a degenerate axis")));
                }
            }
            if j.offset.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("joint {i} offset is not finite")));
            }
            dof_offsets.push(dofs);
            dofs += j.axes.len();
        }
        let mut skel = Self {
            joints,
            dof_offsets,
            rest_globals: Vec::new(),
            rest_inverses: Vec::new(),
        };
        let zeros = vec![0.0; skel.dof_count()];
        skel.rest_globals = skel.global_transforms(&zeros);
        skel.rest_inverses = skel
            .rest_globals
            .iter()
            .map(|m| m.try_inverse().expect("rigid transforms are invertible"))
            .collect();
        Ok(skel)
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn dof_count(&self) -> usize {
        self.joints.iter().map(|j| j.axes.len()).sum()
    }

    /// Global joint transforms for the given joint angles (no root transform).
    pub fn global_transforms(&self, angles: &[f64]) -> Vec<Matrix4<f64>> {
        let mut globals: Vec<Matrix4<f64>> = Vec::with_capacity(self.joints.len());
        for (i, j) in self.joints.iter().enumerate() {
            let mut local = Translation3::from(Vector3::from(j.offset)).to_homogeneous();
            for (k, axis) in j.axes.iter().enumerate() {
                let axis = Unit::new_normalize(Vector3::from(*axis));
                let angle = angles[self.dof_offsets[i] + k];
                local *= Rotation3::from_axis_angle(&axis, angle).to_homogeneous();
            }
            let g = match j.parent {
                Some(p) => globals[p] * local,
                None => local,
            };
            globals.push(g);
        }
        globals
    }

    /// Skinning matrices `G_j(θ) · G_j(rest)⁻¹`.
    pub fn skinning_transforms(&self, angles: &[f64]) -> Vec<Matrix4<f64>> {
        self.global_transforms(angles)
            .iter()
            .zip(&self.rest_inverses)
            .map(|(g, inv)| g * inv)
            .collect()
    }
}

/// Sparse per-vertex weights, `(index, weight)` pairs.
pub type SparseWeights = Vec<Vec<(usize, f64)>>;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedGraph {
    pub node_positions: Vec<Vec3>,
    pub influences: SparseWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkinnedTemplate {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    pub face_uvs: Vec<[Vec2; 3]>,
    pub skeleton: Skeleton,
    pub skinning_weights: SparseWeights,
    pub graph: EmbeddedGraph,
}

fn check_weights(name: &str, weights: &SparseWeights, vertices: usize, targets: usize) -> Result<()> {
    if weights.len() != vertices {
        return Err(Error::DimensionMismatch {
            what: "per-vertex weights",
            expected: vertices,
            got: weights.len(),
        });
    }
    for (v, ws) in weights.iter().enumerate() {
        let mut sum = 0.0;
        for &(t, w) in ws {
            if t >= targets {
                return Err(Error::invalid(format!("{name}: vertex {v} references {t} (only {targets})")));
            }
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::invalid(format!("{name}: vertex {v} has weight {w}")));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::invalid(format!("{name}: weights of vertex {v} sum to {sum}")));
        }
    }
    Ok(())
}

impl SkinnedTemplate {
    /// Validates the weight and UV invariants. UV non-overlap is checked when
    /// the atlas is rasterized (see `bake_texel_surface_map`).
    pub fn new(
        vertices: Vec<Vec3>,
        faces: Vec<[usize; 3]>,
        face_uvs: Vec<[Vec2; 3]>,
        skeleton: Skeleton,
        skinning_weights: SparseWeights,
        graph: EmbeddedGraph,
    ) -> Result<Self> {
        if faces.len() != face_uvs.len() {
            return Err(Error::DimensionMismatch {
                what: "face UV corners",
                expected: faces.len(),
                got: face_uvs.len(),
            });
        }
        for (f, face) in faces.iter().enumerate() {
            if face.iter().any(|&i| i >= vertices.len()) {
                return Err(Error::invalid(format!("face {f} references a missing vertex")));
            }
        }
        for (f, uvs) in face_uvs.iter().enumerate() {
            for uv in uvs {
                if !(0.0..=1.0).contains(&uv.x) || !(0.0..=1.0).contains(&uv.y) {
                    return Err(Error::invalid(format!("face {f} has UV {uv:?} outside [0,1]²")));
                }
            }
        }
        if vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid("non-finite vertex position"));
        }
        check_weights("skinning", &skinning_weights, vertices.len(), skeleton.joints().len())?;
        check_weights(
            "embedded graph",
            &graph.influences,
            vertices.len(),
            graph.node_positions.len(),
        )?;
        Ok(Self {
            vertices,
            faces,
            face_uvs,
            skeleton,
            skinning_weights,
            graph,
        })
    }

    /// Length of the bounding-box diagonal, the scene scale for epsilons.
    pub fn diagonal(&self) -> f64 {
        bbox_diagonal(&self.vertices)
    }
}

pub fn bbox_diagonal(points: &[Vec3]) -> f64 {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (hi - lo).norm()
}
