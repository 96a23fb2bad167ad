//! Procedural templates: the desk-scale mannequin (capsule torso, sphere head
//! on a two-DOF neck) and small fixtures used throughout the tests.

use nalgebra::{Isometry3, Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use super::template::{EmbeddedGraph, Joint, Skeleton, SparseWeights};
use super::{DeformationState, Pose, SkinnedTemplate, Vec2, Vec3};
use crate::error::Result;

/// Triangulated surface of revolution around +Y with a rectangular UV chart.
pub struct Revolution {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    pub face_uvs: Vec<[Vec2; 3]>,
}

/// `profile` runs from the bottom pole to the top pole as (radius, y) pairs;
/// the first and last radii are treated as zero. `chart` is `[u0, v0, u1, v1]`.
pub fn revolve(profile: &[(f64, f64)], segments: usize, center: Vec3, chart: [f64; 4]) -> Revolution {
    assert!(profile.len() >= 3 && segments >= 3);
    let rings = &profile[1..profile.len() - 1];
    let mut arc = vec![0.0];
    for w in profile.windows(2) {
        let (r0, y0) = w[0];
        let (r1, y1) = w[1];
        arc.push(arc.last().unwrap() + ((r1 - r0).powi(2) + (y1 - y0).powi(2)).sqrt());
    }
    let total = *arc.last().unwrap();
    let [u0, v0, u1, v1] = chart;
    let v_at = |k: usize| v0 + (v1 - v0) * arc[k] / total;
    let u_at = |j: f64| u0 + (u1 - u0) * j / segments as f64;

    let mut vertices = vec![center + Vec3::new(0.0, profile[0].1, 0.0)];
    for &(r, y) in rings {
        for j in 0..segments {
            let phi = std::f64::consts::TAU * j as f64 / segments as f64;
            vertices.push(center + Vec3::new(r * phi.cos(), y, r * phi.sin()));
        }
    }
    let top = vertices.len();
    vertices.push(center + Vec3::new(0.0, profile[profile.len() - 1].1, 0.0));

    let ring = |k: usize, j: usize| 1 + k * segments + j % segments;
    let mut faces = Vec::new();
    let mut face_uvs = Vec::new();
    for j in 0..segments {
        faces.push([0, ring(0, j), ring(0, j + 1)]);
        face_uvs.push([
            Vec2::new(u_at(j as f64 + 0.5), v_at(0)),
            Vec2::new(u_at(j as f64), v_at(1)),
            Vec2::new(u_at(j as f64 + 1.0), v_at(1)),
        ]);
    }
    for k in 0..rings.len() - 1 {
        for j in 0..segments {
            let (a, b, c, d) = (ring(k, j), ring(k, j + 1), ring(k + 1, j + 1), ring(k + 1, j));
            let (ua, ub) = (u_at(j as f64), u_at(j as f64 + 1.0));
            let (va, vc) = (v_at(k + 1), v_at(k + 2));
            faces.push([a, d, c]);
            face_uvs.push([Vec2::new(ua, va), Vec2::new(ua, vc), Vec2::new(ub, vc)]);
            faces.push([a, c, b]);
            face_uvs.push([Vec2::new(ua, va), Vec2::new(ub, vc), Vec2::new(ub, va)]);
        }
    }
    let last = rings.len() - 1;
    for j in 0..segments {
        faces.push([ring(last, j), top, ring(last, j + 1)]);
        face_uvs.push([
            Vec2::new(u_at(j as f64), v_at(last + 1)),
            Vec2::new(u_at(j as f64 + 0.5), v_at(last + 2)),
            Vec2::new(u_at(j as f64 + 1.0), v_at(last + 1)),
        ]);
    }
    Revolution {
        vertices,
        faces,
        face_uvs,
    }
}

pub fn sphere_profile(radius: f64, rings: usize) -> Vec<(f64, f64)> {
    (0..=rings)
        .map(|k| {
            let theta = std::f64::consts::PI * (1.0 - k as f64 / rings as f64);
            (radius * theta.sin(), radius * theta.cos())
        })
        .collect()
}

/// Capsule profile: hemisphere, cylinder, hemisphere.
pub fn capsule_profile(radius: f64, half_length: f64, cap_rings: usize, body_rings: usize) -> Vec<(f64, f64)> {
    let mut p = Vec::new();
    for k in 0..=cap_rings {
        let a = std::f64::consts::FRAC_PI_2 * k as f64 / cap_rings as f64;
        p.push((radius * a.sin(), -half_length - radius * a.cos()));
    }
    for k in 1..body_rings {
        p.push((radius, -half_length + 2.0 * half_length * k as f64 / body_rings as f64));
    }
    for k in 0..=cap_rings {
        let a = std::f64::consts::FRAC_PI_2 * k as f64 / cap_rings as f64;
        p.push((radius * a.cos(), half_length + radius * a.sin()));
    }
    p
}

/// Template with a single root joint (no DOFs) and a single graph node.
pub fn rigid_template(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>, face_uvs: Vec<[Vec2; 3]>) -> SkinnedTemplate {
    let n = vertices.len();
    let centroid = vertices.iter().sum::<Vec3>() / n as f64;
    let skel = Skeleton::new(vec![Joint {
        name: "root".into(),
        parent: None,
        offset: [0.0; 3],
        axes: vec![],
    }])
    .expect("static skeleton");
    SkinnedTemplate::new(
        vertices,
        faces,
        face_uvs,
        skel,
        vec![vec![(0, 1.0)]; n],
        EmbeddedGraph {
            node_positions: vec![centroid],
            influences: vec![vec![(0, 1.0)]; n],
        },
    )
    .expect("fixture template is valid")
}

/// UV sphere centered at the origin whose lat-long chart fills the atlas.
pub fn sphere_mesh(radius: f64, segments: usize, rings: usize) -> SkinnedTemplate {
    let r = revolve(&sphere_profile(radius, rings), segments, Vec3::zeros(), [0.0, 0.0, 1.0, 1.0]);
    rigid_template(r.vertices, r.faces, r.face_uvs)
}

/// The two UV triangles of the unit square.
pub fn unit_quad_uvs() -> Vec<[Vec2; 3]> {
    vec![
        [Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0)],
        [Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(0.0, 1.0)],
    ]
}

/// Square grid in the plane z = 0 facing +Z, side `size`, centered at the
/// origin, with `n × n` cells and UV = normalized (x, y).
pub fn plane_template(size: f64, n: usize) -> SkinnedTemplate {
    let mut vertices = Vec::new();
    for i in 0..=n {
        for j in 0..=n {
            let (u, v) = (j as f64 / n as f64, i as f64 / n as f64);
            vertices.push(Vec3::new((u - 0.5) * size, (v - 0.5) * size, 0.0));
        }
    }
    let idx = |i: usize, j: usize| i * (n + 1) + j;
    let uv = |i: usize, j: usize| Vec2::new(j as f64 / n as f64, i as f64 / n as f64);
    let mut faces = Vec::new();
    let mut face_uvs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            faces.push([idx(i, j), idx(i, j + 1), idx(i + 1, j + 1)]);
            face_uvs.push([uv(i, j), uv(i, j + 1), uv(i + 1, j + 1)]);
            faces.push([idx(i, j), idx(i + 1, j + 1), idx(i + 1, j)]);
            face_uvs.push([uv(i, j), uv(i + 1, j + 1), uv(i + 1, j)]);
        }
    }
    rigid_template(vertices, faces, face_uvs)
}

/// Four-vertex tetrahedron with a three-node embedded graph.
pub fn tetra_template() -> SkinnedTemplate {
    let vertices = vec![
        Vec3::new(0.0, 0.0, 0.0),
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(0.0, 1.0, 0.0),
        Vec3::new(0.0, 0.0, 1.0),
    ];
    let faces = vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]];
    let face_uvs = vec![
        [Vec2::new(0.0, 0.0), Vec2::new(0.4, 0.0), Vec2::new(0.0, 0.4)],
        [Vec2::new(0.6, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.6, 0.4)],
        [Vec2::new(0.0, 0.6), Vec2::new(0.4, 0.6), Vec2::new(0.0, 1.0)],
        [Vec2::new(0.6, 0.6), Vec2::new(1.0, 0.6), Vec2::new(0.6, 1.0)],
    ];
    let mut t = rigid_template(vertices, faces, face_uvs);
    t.graph = EmbeddedGraph {
        node_positions: vec![
            Vec3::new(0.2, 0.2, 0.2),
            Vec3::new(0.8, 0.1, 0.0),
            Vec3::new(0.0, 0.5, 0.5),
        ],
        influences: vec![
            vec![(0, 0.7), (1, 0.3)],
            vec![(1, 0.6), (2, 0.4)],
            vec![(0, 0.2), (1, 0.3), (2, 0.5)],
            vec![(2, 1.0)],
        ],
    };
    t
}

/// Bar along +X with two Z-hinge joints (origin and x = 1); every vertex
/// carries `weights` over the two joints.
pub fn two_joint_bar(weights: [f64; 2]) -> SkinnedTemplate {
    let mut vertices = Vec::new();
    let mut face_uvs = Vec::new();
    let mut faces = Vec::new();
    for i in 0..=4 {
        vertices.push(Vec3::new(i as f64 * 0.5, 0.0, 0.0));
        vertices.push(Vec3::new(i as f64 * 0.5, 0.2, 0.1));
    }
    for i in 0..4 {
        let (a, b, c, d) = (2 * i, 2 * i + 2, 2 * i + 3, 2 * i + 1);
        faces.push([a, b, c]);
        faces.push([a, c, d]);
        let (u0, u1) = (i as f64 / 4.0, (i + 1) as f64 / 4.0);
        face_uvs.push([Vec2::new(u0, 0.0), Vec2::new(u1, 0.0), Vec2::new(u1, 1.0)]);
        face_uvs.push([Vec2::new(u0, 0.0), Vec2::new(u1, 1.0), Vec2::new(u0, 1.0)]);
    }
    let n = vertices.len();
    let mut t = rigid_template(vertices, faces, face_uvs);
    t.skeleton = Skeleton::new(vec![
        Joint {
            name: "a".into(),
            parent: None,
            offset: [0.0; 3],
            axes: vec![[0.0, 0.0, 1.0]],
        },
        Joint {
            name: "b".into(),
            parent: Some(0),
            offset: [1.0, 0.0, 0.0],
            axes: vec![[0.0, 0.0, 1.0]],
        },
    ])
    .unwrap();
    t.skinning_weights = vec![vec![(0, weights[0]), (1, weights[1])]; n];
    t
}

/// Geometry and motion parameters of the default desk scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Mannequin {
    pub torso_radius: f64,
    pub torso_half_length: f64,
    pub torso_center_y: f64,
    pub head_radius: f64,
    pub neck_gap: f64,
    pub torso_segments: usize,
    pub head_segments: usize,
    /// Peak neck swing in radians.
    pub neck_swing: f64,
    /// Peak whole-body yaw in radians.
    pub body_yaw: f64,
    /// Peak embedded-graph node displacement in meters.
    pub node_sway: f64,
    /// Peak radial breathing offset in meters.
    pub breathing: f64,
}

impl Default for Mannequin {
    fn default() -> Self {
        Self {
            torso_radius: 0.2,
            torso_half_length: 0.45,
            torso_center_y: 0.75,
            head_radius: 0.15,
            neck_gap: 0.03,
            torso_segments: 32,
            head_segments: 24,
            neck_swing: 0.6,
            body_yaw: 0.4,
            node_sway: 0.02,
            breathing: 0.004,
        }
    }
}

impl Mannequin {
    fn neck_y(&self) -> f64 {
        self.torso_center_y + self.torso_half_length + self.torso_radius + 0.5 * self.neck_gap
    }

    fn head_center(&self) -> Vec3 {
        Vec3::new(0.0, self.neck_y() + 0.5 * self.neck_gap + self.head_radius, 0.0)
    }

    pub fn build(&self) -> Result<SkinnedTemplate> {
        let torso = revolve(
            &capsule_profile(self.torso_radius, self.torso_half_length, 6, 10),
            self.torso_segments,
            Vec3::new(0.0, self.torso_center_y, 0.0),
            [0.02, 0.02, 0.98, 0.62],
        );
        let head = revolve(
            &sphere_profile(self.head_radius, 12),
            self.head_segments,
            self.head_center(),
            [0.02, 0.68, 0.98, 0.98],
        );
        let torso_n = torso.vertices.len();
        let mut vertices = torso.vertices;
        let mut faces = torso.faces;
        let mut face_uvs = torso.face_uvs;
        vertices.extend(head.vertices);
        faces.extend(head.faces.iter().map(|f| f.map(|i| i + torso_n)));
        face_uvs.extend(head.face_uvs);

        let skeleton = Skeleton::new(vec![
            Joint {
                name: "root".into(),
                parent: None,
                offset: [0.0; 3],
                axes: vec![[0.0, 1.0, 0.0]],
            },
            Joint {
                name: "neck".into(),
                parent: Some(0),
                offset: [0.0, self.neck_y(), 0.0],
                axes: vec![[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]],
            },
        ])?;
        let skinning: SparseWeights = (0..vertices.len())
            .map(|i| vec![(if i < torso_n { 0 } else { 1 }, 1.0)])
            .collect();

        let bottom = self.torso_center_y - self.torso_half_length;
        let mut nodes: Vec<Vec3> = (0..4)
            .map(|k| Vec3::new(0.0, bottom + 2.0 * self.torso_half_length * k as f64 / 3.0, 0.0))
            .collect();
        nodes.push(self.head_center());
        let influences = vertices
            .iter()
            .enumerate()
            .map(|(i, v)| {
                if i >= torso_n {
                    return vec![(4, 1.0)];
                }
                torso_influence(v, &nodes[..4])
            })
            .collect();

        SkinnedTemplate::new(
            vertices,
            faces,
            face_uvs,
            skeleton,
            skinning,
            EmbeddedGraph {
                node_positions: nodes,
                influences,
            },
        )
    }

    /// Scripted embedded-graph deformation at frame `t`.
    pub fn deformation(&self, template: &SkinnedTemplate, rest_normals: &[Vec3], t: usize) -> DeformationState {
        let phase = t as f64 * 0.21;
        let nodes = template.graph.node_positions.len();
        let node_rotations = (0..nodes)
            .map(|k| {
                let a = 0.05 * (phase + k as f64).sin();
                *Rotation3::from_axis_angle(&Vector3::y_axis(), a).matrix()
            })
            .collect::<Vec<Matrix3<f64>>>();
        let node_translations = (0..nodes)
            .map(|k| {
                let p = phase + 0.9 * k as f64;
                Vec3::new(p.sin(), 0.0, 0.5 * p.cos()) * self.node_sway
            })
            .collect();
        let breath = self.breathing * (0.5 * phase).sin();
        let vertex_offsets = rest_normals.iter().map(|n| n * breath).collect();
        DeformationState {
            node_rotations,
            node_translations,
            vertex_offsets,
        }
    }

    /// Scripted skeletal pose at frame `t`.
    pub fn pose(&self, t: usize) -> Pose {
        let phase = t as f64 * 0.17;
        Pose {
            joint_angles: vec![
                self.body_yaw * (0.5 * phase).sin(),
                self.neck_swing * phase.sin(),
                0.5 * self.neck_swing * (1.3 * phase + 0.4).sin(),
            ],
            root_transform: Isometry3::identity(),
        }
    }
}

/// Two nearest torso nodes, weights ∝ (1 - d / d_third)².
fn torso_influence(v: &Vec3, nodes: &[Vec3]) -> Vec<(usize, f64)> {
    let mut by_dist: Vec<(f64, usize)> = nodes.iter().enumerate().map(|(k, g)| ((v - g).norm(), k)).collect();
    by_dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let dmax = by_dist[2].0.max(1e-9);
    let raw: Vec<(usize, f64)> = by_dist[..2]
        .iter()
        .map(|&(d, k)| (k, (1.0 - d / dmax).max(0.0).powi(2) + 1e-6))
        .collect();
    let sum: f64 = raw.iter().map(|r| r.1).sum();
    let mut out: Vec<(usize, f64)> = raw.into_iter().map(|(k, w)| (k, w / sum)).collect();
    // force an exact unit sum
    let head: f64 = out[1..].iter().map(|r| r.1).sum();
    out[0].1 = 1.0 - head;
    out
}
