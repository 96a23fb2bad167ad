use nalgebra::{Isometry3, Point3};
use rayon::prelude::*;

use super::{SkinnedTemplate, Vec3};
use crate::error::{Error, Result};

/// Faces with doubled area below this are treated as degenerate.
const DEGENERATE_AREA2: f64 = 1e-18;

#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub joint_angles: Vec<f64>,
    pub root_transform: Isometry3<f64>,
}

impl Pose {
    pub fn rest(dofs: usize) -> Self {
        Self {
            joint_angles: vec![0.0; dofs],
            root_transform: Isometry3::identity(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosedMesh {
    pub vertices: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    pub frame_index: usize,
}

impl PosedMesh {
    /// Builds a mesh with freshly computed area-weighted normals.
    pub fn from_geometry(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>, frame_index: usize) -> Result<Self> {
        let normals = vertex_normals(&vertices, &faces)?;
        Ok(Self {
            vertices,
            normals,
            faces,
            frame_index,
        })
    }

    pub fn face_normal(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.faces[f];
        let (a, b, c) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn diagonal(&self) -> f64 {
        super::template::bbox_diagonal(&self.vertices)
    }

    pub fn transformed(&self, iso: &Isometry3<f64>) -> PosedMesh {
        PosedMesh {
            vertices: self.vertices.iter().map(|v| iso.transform_point(&Point3::from(*v)).coords).collect(),
            normals: self.normals.iter().map(|n| iso.rotation * n).collect(),
            faces: self.faces.clone(),
            frame_index: self.frame_index,
        }
    }
}

/// Area-weighted vertex normals. Degenerate faces are skipped; vertices that
/// only touch degenerate faces get +Z.
pub fn vertex_normals(vertices: &[Vec3], faces: &[[usize; 3]]) -> Result<Vec<Vec3>> {
    let mut acc = vec![Vec3::zeros(); vertices.len()];
    let mut any = false;
    for &[a, b, c] in faces {
        // cross product length is twice the area, so summing it weights by area
        let n = (vertices[b] - vertices[a]).cross(&(vertices[c] - vertices[a]));
        if n.norm_squared() <= DEGENERATE_AREA2 {
            continue;
        }
        any = true;
        acc[a] += n;
        acc[b] += n;
        acc[c] += n;
    }
    if !any {
        return Err(Error::DegenerateMesh);
    }
    Ok(acc
        .into_iter()
        .map(|n| {
            let len = n.norm();
            if len > 0.0 {
                n / len
            } else {
                Vec3::z()
            }
        })
        .collect())
}

/// Linear blend skinning of canonical vertices.
pub fn skin(canonical: &[Vec3], pose: &Pose, template: &SkinnedTemplate, frame_index: usize) -> Result<PosedMesh> {
    let skel = &template.skeleton;
    if pose.joint_angles.len() != skel.dof_count() {
        return Err(Error::DimensionMismatch {
            what: "pose DOFs",
            expected: skel.dof_count(),
            got: pose.joint_angles.len(),
        });
    }
    if canonical.len() != template.vertices.len() {
        return Err(Error::DimensionMismatch {
            what: "canonical vertices",
            expected: template.vertices.len(),
            got: canonical.len(),
        });
    }
    let root = pose.root_transform.to_homogeneous();
    let transforms: Vec<_> = skel
        .skinning_transforms(&pose.joint_angles)
        .into_iter()
        .map(|m| root * m)
        .collect();

    let vertices: Vec<Vec3> = canonical
        .par_iter()
        .zip(template.skinning_weights.par_iter())
        .map(|(v, weights)| {
            let p = v.push(1.0);
            let mut out = Vec3::zeros();
            for &(j, w) in weights {
                out += w * (transforms[j] * p).xyz();
            }
            out
        })
        .collect();
    PosedMesh::from_geometry(vertices, template.faces.clone(), frame_index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::mannequin::{two_joint_bar, Mannequin};
    use nalgebra::{Rotation3, Translation3, UnitQuaternion, Vector3};
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn rest_pose_is_identity() {
        let m = Mannequin::default().build().unwrap();
        let posed = skin(&m.vertices, &Pose::rest(m.skeleton.dof_count()), &m, 0).unwrap();
        for (a, b) in posed.vertices.iter().zip(&m.vertices) {
            assert!((a - b).norm() < 1e-6);
        }
        for n in &posed.normals {
            assert!((n.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_joint_quarter_turn() {
        let t = two_joint_bar([1.0, 0.0]);
        // joint 0 sits at the origin with a Z hinge, joint 1 has all weight 0
        let mut pose = Pose::rest(t.skeleton.dof_count());
        pose.joint_angles[0] = FRAC_PI_2;
        let posed = skin(&t.vertices, &pose, &t, 0).unwrap();
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2);
        for (a, b) in posed.vertices.iter().zip(&t.vertices) {
            assert!((a - rot * b).norm() < 1e-12);
        }
    }

    #[test]
    fn half_half_weights_average_two_transforms() {
        let t = two_joint_bar([0.5, 0.5]);
        let mut pose = Pose::rest(t.skeleton.dof_count());
        pose.joint_angles[0] = 0.4;
        pose.joint_angles[1] = -0.9;
        let posed = skin(&t.vertices, &pose, &t, 0).unwrap();
        // explicit rigid transforms of each joint
        let g0 = Rotation3::from_axis_angle(&Vector3::z_axis(), 0.4);
        let j1 = Vector3::new(1.0, 0.0, 0.0);
        let g1_rot = Rotation3::from_axis_angle(&Vector3::z_axis(), 0.4 - 0.9);
        for (p, v) in posed.vertices.iter().zip(&t.vertices) {
            let a = g0 * v;
            // joint 1 rotates about its own origin, which is carried by joint 0
            let b = g0 * j1 + g1_rot * (v - j1);
            assert!((p - 0.5 * (a + b)).norm() < 1e-12);
        }
    }

    #[test]
    fn skin_commutes_with_rigid_transforms() {
        let m = Mannequin::default().build().unwrap();
        let mut pose = Pose::rest(m.skeleton.dof_count());
        for (i, a) in pose.joint_angles.iter_mut().enumerate() {
            *a = 0.3 * (i as f64 + 1.0);
        }
        let base = skin(&m.vertices, &pose, &m, 0).unwrap();
        let t = nalgebra::Isometry3::from_parts(
            Translation3::new(0.4, -1.0, 2.0),
            UnitQuaternion::from_euler_angles(0.2, -0.7, 1.1),
        );
        let mut moved_pose = pose.clone();
        moved_pose.root_transform = t * pose.root_transform;
        let moved = skin(&m.vertices, &moved_pose, &m, 0).unwrap();
        let expect = base.transformed(&t);
        for (a, b) in moved.vertices.iter().zip(&expect.vertices) {
            assert!((a - b).norm() < 1e-6);
        }
        for (a, b) in moved.normals.iter().zip(&expect.normals) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn degenerate_faces() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::new(2.0, 0.0, 0.0)];
        assert!(matches!(vertex_normals(&v, &[[0, 1, 3]]), Err(Error::DegenerateMesh)));
        let n = vertex_normals(&v, &[[0, 1, 3], [0, 1, 2]]).unwrap();
        assert_eq!(n[0], Vec3::z());
        assert_eq!(n[3], Vec3::z());
    }

    #[test]
    fn dof_mismatch_rejected() {
        let m = Mannequin::default().build().unwrap();
        let pose = Pose::rest(m.skeleton.dof_count() + 1);
        assert!(skin(&m.vertices, &pose, &m, 0).is_err());
    }
}
