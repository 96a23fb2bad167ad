mod brdf;
mod bvh;
mod shading;

pub use brdf::{striped_albedo, BrdfModel, BrdfSpec};
pub use bvh::{intersect_triangle, Aabb, Bvh, BvhNode, Hit};
pub use shading::{
    bake_from_transport, bake_oracle_texture, diffuse_shading, render_from_transport, render_normals, render_oracle,
    LedTerm, LightTransport, RadianceImage, SurfacePoint, TracedMesh, ViewSource,
};
