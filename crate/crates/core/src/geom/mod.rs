//! Canonical character representation, embedded deformation, skinning and the
//! texel ↔ surface correspondence.

mod deform;
pub mod mannequin;
mod skin;
pub mod template;
mod uvmap;

pub use deform::{deform_canonical, is_rotation, DeformationState};
pub use skin::{skin, vertex_normals, Pose, PosedMesh};
pub use template::{EmbeddedGraph, Joint, Skeleton, SkinnedTemplate, SparseWeights};
pub use uvmap::{
    bake_texel_surface_map, interpolate, rasterize_uv_atlas, sample_surface, sample_uv, TexelSample, TexelSurfaceMap,
};

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Vec2 = nalgebra::Vector2<f64>;
