//! Texel ↔ surface correspondence.
//!
//! Texel `(row, col)` has its center at UV `((col + 0.5) / W, (row + 0.5) / H)`,
//! so row 0 is `v ≈ 0`. Coverage uses a texel-center inside test with a
//! top-left tie rule, then a one-texel dilation ring around every chart so
//! bilinear lookups near seams never read empty texels.

use super::{PosedMesh, SkinnedTemplate, Vec2, Vec3};
use crate::error::{Error, Result};
use crate::image::Mask;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TexelSample {
    pub face: u32,
    pub bary: [f64; 3],
    /// True for texels added by the boundary dilation ring.
    pub dilated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TexelSurfaceMap {
    pub width: usize,
    pub height: usize,
    pub texels: Vec<Option<TexelSample>>,
}

impl TexelSurfaceMap {
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Option<&TexelSample> {
        self.texels[row * self.width + col].as_ref()
    }

    pub fn valid_count(&self) -> usize {
        self.texels.iter().filter(|t| t.is_some()).count()
    }

    pub fn mask(&self) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            bits: self.texels.iter().map(|t| t.is_some()).collect(),
        }
    }

    /// Valid texels in row-major order as `(flat index, sample)`.
    pub fn valid(&self) -> impl Iterator<Item = (usize, &TexelSample)> {
        self.texels.iter().enumerate().filter_map(|(i, t)| t.as_ref().map(|s| (i, s)))
    }

    pub fn texel_center_uv(&self, row: usize, col: usize) -> Vec2 {
        Vec2::new(
            (col as f64 + 0.5) / self.width as f64,
            (row as f64 + 0.5) / self.height as f64,
        )
    }
}

pub fn bake_texel_surface_map(template: &SkinnedTemplate, width: usize, height: usize) -> Result<TexelSurfaceMap> {
    rasterize_uv_atlas(&template.face_uvs, width, height)
}

struct Tri {
    p: [Vec2; 3],
    area2: f64,
}

impl Tri {
    /// Positively oriented copy (in texel space) and the permutation applied.
    fn new(uvs: &[Vec2; 3], width: usize, height: usize) -> (Self, [usize; 3]) {
        let scale = |uv: &Vec2| Vec2::new(uv.x * width as f64, uv.y * height as f64);
        let p = [scale(&uvs[0]), scale(&uvs[1]), scale(&uvs[2])];
        let area2 = cross(p[1] - p[0], p[2] - p[0]);
        if area2 < 0.0 {
            (
                Tri {
                    p: [p[0], p[2], p[1]],
                    area2: -area2,
                },
                [0, 2, 1],
            )
        } else {
            (Tri { p, area2 }, [0, 1, 2])
        }
    }

    /// Edge function of the edge opposite vertex `i`.
    fn edge(&self, i: usize, q: Vec2) -> f64 {
        let a = self.p[(i + 1) % 3];
        let b = self.p[(i + 2) % 3];
        cross(b - a, q - a)
    }

    fn top_left(&self, i: usize) -> bool {
        let e = self.p[(i + 2) % 3] - self.p[(i + 1) % 3];
        e.y > 0.0 || (e.y == 0.0 && e.x < 0.0)
    }

    /// Barycentrics if `q` is covered under the top-left rule.
    fn cover(&self, q: Vec2) -> Option<[f64; 3]> {
        let mut w = [0.0; 3];
        for (i, wi) in w.iter_mut().enumerate() {
            let e = self.edge(i, q);
            if e < 0.0 || (e == 0.0 && !self.top_left(i)) {
                return None;
            }
            *wi = e;
        }
        let sum = w[0] + w[1] + w[2];
        Some([w[0] / sum, w[1] / sum, w[2] / sum])
    }

    /// Distance from `q` to the nearest edge line, for points inside.
    fn depth(&self, q: Vec2) -> f64 {
        (0..3)
            .map(|i| {
                let len = (self.p[(i + 2) % 3] - self.p[(i + 1) % 3]).norm();
                self.edge(i, q) / len
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Closest point of the triangle to `q`, as (distance², barycentrics).
    fn closest(&self, q: Vec2) -> (f64, [f64; 3]) {
        if let Some(b) = self.cover(q) {
            return (0.0, b);
        }
        let mut best = (f64::INFINITY, [0.0; 3]);
        for i in 0..3 {
            let a = self.p[i];
            let b = self.p[(i + 1) % 3];
            let ab = b - a;
            let t = ((q - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
            let d2 = (a + ab * t - q).norm_squared();
            if d2 < best.0 {
                let mut bary = [0.0; 3];
                bary[i] = 1.0 - t;
                bary[(i + 1) % 3] = t;
                best = (d2, bary);
            }
        }
        best
    }
}

fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

fn unpermute(bary: [f64; 3], perm: [usize; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (k, &p) in perm.iter().enumerate() {
        out[p] = bary[k];
    }
    out
}

/// Rasterizes per-face UV triangles into a texel map.
pub fn rasterize_uv_atlas(face_uvs: &[[Vec2; 3]], width: usize, height: usize) -> Result<TexelSurfaceMap> {
    if width < 8 || height < 8 {
        return Err(Error::invalid(format!("UV resolution {width}x{height} is below 8x8")));
    }
    let tris: Vec<(Tri, [usize; 3])> = face_uvs.iter().map(|uv| Tri::new(uv, width, height)).collect();
    let mut texels: Vec<Option<TexelSample>> = vec![None; width * height];
    let mut depth = vec![0.0f64; width * height];
    let mut overlaps = Vec::new();

    for (f, (tri, perm)) in tris.iter().enumerate() {
        if tri.area2 <= 1e-12 {
            continue;
        }
        let lo = tri.p.iter().fold(Vec2::repeat(f64::INFINITY), |m, p| m.inf(p));
        let hi = tri.p.iter().fold(Vec2::repeat(f64::NEG_INFINITY), |m, p| m.sup(p));
        // texel centers inside the bounding box
        let c0 = (lo.x - 0.5).ceil().max(0.0) as usize;
        let c1 = ((hi.x - 0.5).floor() + 1.0).clamp(0.0, width as f64) as usize;
        let r0 = (lo.y - 0.5).ceil().max(0.0) as usize;
        let r1 = ((hi.y - 0.5).floor() + 1.0).clamp(0.0, height as f64) as usize;
        for row in r0..r1 {
            for col in c0..c1 {
                let q = Vec2::new(col as f64 + 0.5, row as f64 + 0.5);
                let Some(bary) = tri.cover(q) else { continue };
                let d = tri.depth(q);
                let idx = row * width + col;
                match &texels[idx] {
                    Some(prev) => {
                        if d > 0.5 && depth[idx] > 0.5 {
                            overlaps.push((prev.face as usize, f));
                        }
                        if d > depth[idx] {
                            texels[idx] = Some(TexelSample {
                                face: f as u32,
                                bary: unpermute(bary, *perm),
                                dilated: false,
                            });
                            depth[idx] = d;
                        }
                    }
                    None => {
                        texels[idx] = Some(TexelSample {
                            face: f as u32,
                            bary: unpermute(bary, *perm),
                            dilated: false,
                        });
                        depth[idx] = d;
                    }
                }
            }
        }
    }
    if !overlaps.is_empty() {
        overlaps.sort_unstable();
        overlaps.dedup();
        return Err(Error::UvOverlap { pairs: overlaps });
    }

    // one-texel dilation from the original coverage
    let covered: Vec<bool> = texels.iter().map(|t| t.is_some()).collect();
    let mut dilated = texels.clone();
    for row in 0..height {
        for col in 0..width {
            if covered[row * width + col] {
                continue;
            }
            let q = Vec2::new(col as f64 + 0.5, row as f64 + 0.5);
            let mut best: Option<(f64, u32, [f64; 3])> = None;
            for dr in -1i32..=1 {
                for dc in -1i32..=1 {
                    let (r, c) = (row as i32 + dr, col as i32 + dc);
                    if r < 0 || c < 0 || r >= height as i32 || c >= width as i32 {
                        continue;
                    }
                    let Some(n) = &texels[r as usize * width + c as usize] else { continue };
                    let (tri, perm) = &tris[n.face as usize];
                    let (d2, b) = tri.closest(q);
                    let better = match best {
                        None => true,
                        Some((bd, bf, _)) => d2 < bd || (d2 == bd && n.face < bf),
                    };
                    if better {
                        best = Some((d2, n.face, unpermute(b, *perm)));
                    }
                }
            }
            if let Some((_, face, bary)) = best {
                dilated[row * width + col] = Some(TexelSample {
                    face,
                    bary,
                    dilated: true,
                });
            }
        }
    }

    Ok(TexelSurfaceMap {
        width,
        height,
        texels: dilated,
    })
}

/// Barycentric surface point and renormalized interpolated normal.
pub fn sample_surface(map: &TexelSurfaceMap, mesh: &PosedMesh, row: usize, col: usize) -> Result<(Vec3, Vec3)> {
    let s = map.get(row, col).ok_or(Error::InvalidTexel { row, col })?;
    Ok(interpolate(mesh, s))
}

#[inline]
pub fn interpolate(mesh: &PosedMesh, s: &TexelSample) -> (Vec3, Vec3) {
    let [a, b, c] = mesh.faces[s.face as usize];
    let [wa, wb, wc] = s.bary;
    let p = mesh.vertices[a] * wa + mesh.vertices[b] * wb + mesh.vertices[c] * wc;
    let n = mesh.normals[a] * wa + mesh.normals[b] * wb + mesh.normals[c] * wc;
    let len = n.norm();
    let n = if len > 1e-12 { n / len } else { mesh.face_normal(s.face as usize) };
    (p, n)
}

/// UV coordinate of a texel sample (the barycentric combination of its face's UVs).
pub fn sample_uv(face_uvs: &[[Vec2; 3]], s: &TexelSample) -> Vec2 {
    let uv = &face_uvs[s.face as usize];
    uv[0] * s.bary[0] + uv[1] * s.bary[1] + uv[2] * s.bary[2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::mannequin::{sphere_mesh, unit_quad_uvs};
    use crate::geom::{skin, Pose};

    #[test]
    fn big_triangle_covers_everything() {
        let tri = [[Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0), Vec2::new(0.0, 2.0)]];
        let map = rasterize_uv_atlas(&tri, 16, 16).unwrap();
        assert_eq!(map.valid_count(), 256);
        for (_, s) in map.valid() {
            assert!(s.bary.iter().all(|b| *b >= 0.0));
            assert!((s.bary.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_region_is_invalid() {
        let tri = [[Vec2::new(0.0, 0.0), Vec2::new(0.5, 0.0), Vec2::new(0.0, 0.5)]];
        let map = rasterize_uv_atlas(&tri, 32, 32).unwrap();
        assert!(map.get(31, 31).is_none());
        assert!(map.get(0, 0).is_some());
        assert!(sample_surface_invalid(&map));
    }

    fn sample_surface_invalid(map: &TexelSurfaceMap) -> bool {
        let mesh = PosedMesh::from_geometry(vec![Vec3::zeros(), Vec3::x(), Vec3::y()], vec![[0, 1, 2]], 0).unwrap();
        matches!(sample_surface(map, &mesh, 31, 31), Err(Error::InvalidTexel { .. }))
    }

    #[test]
    fn quad_coverage_matches_area() {
        let map = rasterize_uv_atlas(&unit_quad_uvs(), 64, 64).unwrap();
        let n = map.valid_count() as i64;
        assert!((n - 64 * 64).abs() <= 2 * 64, "{n}");
        // shared diagonal: top-left rule assigns every texel exactly once, no dilation needed
        assert!(map.valid().all(|(_, s)| !s.dilated));
    }

    #[test]
    fn half_quad_gets_dilated_ring() {
        let tri = [[Vec2::new(0.0, 0.0), Vec2::new(0.5, 0.0), Vec2::new(0.5, 1.0)]];
        let map = rasterize_uv_atlas(&tri, 32, 32).unwrap();
        let dilated = map.valid().filter(|(_, s)| s.dilated).count();
        assert!(dilated > 0);
        for (_, s) in map.valid() {
            assert!(s.bary.iter().all(|b| *b >= 0.0));
            assert!((s.bary.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn overlap_is_reported() {
        let a = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)];
        let b = [Vec2::new(0.1, 0.1), Vec2::new(0.9, 0.1), Vec2::new(0.1, 0.9)];
        match rasterize_uv_atlas(&[a, b], 32, 32) {
            Err(Error::UvOverlap { pairs }) => assert_eq!(pairs, vec![(0, 1)]),
            other => panic!("expected overlap, got {other:?}"),
        }
    }

    #[test]
    fn rejects_tiny_resolution() {
        assert!(rasterize_uv_atlas(&unit_quad_uvs(), 4, 64).is_err());
    }

    #[test]
    fn barycentric_vertex_and_centroid() {
        let mesh = PosedMesh::from_geometry(
            vec![Vec3::new(1.0, 2.0, 3.0), Vec3::new(2.0, 2.0, 3.0), Vec3::new(1.0, 3.0, 3.0)],
            vec![[0, 1, 2]],
            0,
        )
        .unwrap();
        let s = TexelSample {
            face: 0,
            bary: [1.0, 0.0, 0.0],
            dilated: false,
        };
        assert_eq!(interpolate(&mesh, &s).0, mesh.vertices[0]);
        let c = TexelSample {
            face: 0,
            bary: [1.0 / 3.0; 3],
            dilated: false,
        };
        let (p, n) = interpolate(&mesh, &c);
        assert!((p.z - 3.0).abs() < 1e-12);
        assert!((n - mesh.face_normal(0)).norm() < 1e-12);
    }

    #[test]
    fn sphere_samples_lie_near_the_analytic_surface() {
        let t = sphere_mesh(1.0, 24, 16);
        let map = bake_texel_surface_map(&t, 64, 64).unwrap();
        let mesh = skin(&t.vertices, &Pose::rest(t.skeleton.dof_count()), &t, 0).unwrap();
        let edge = t
            .faces
            .iter()
            .flat_map(|f| (0..3).map(move |i| (f[i], f[(i + 1) % 3])))
            .map(|(a, b)| (t.vertices[a] - t.vertices[b]).norm())
            .fold(0.0, f64::max);
        for (i, s) in map.valid() {
            let (p, n) = sample_surface(&map, &mesh, i / 64, i % 64).unwrap();
            assert!((p.norm() - 1.0).abs() <= edge);
            assert!((n.norm() - 1.0).abs() < 1e-12);
            // the sample is the barycentric combination of its face corners
            let [a, b, c] = mesh.faces[s.face as usize];
            let expect = mesh.vertices[a] * s.bary[0] + mesh.vertices[b] * s.bary[1] + mesh.vertices[c] * s.bary[2];
            assert!((p - expect).norm() < 1e-6);
        }
    }

    #[test]
    fn map_is_pose_independent() {
        let t = sphere_mesh(1.0, 12, 8);
        let a = bake_texel_surface_map(&t, 32, 32).unwrap();
        let b = bake_texel_surface_map(&t, 32, 32).unwrap();
        assert_eq!(a, b);
    }
}
