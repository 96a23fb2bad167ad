//! Bounding volume hierarchy over mesh triangles with any-hit and
//! closest-hit queries.

use crate::geom::{PosedMesh, Vec3};

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }


    pub fn contains(&self, other: &Aabb) -> bool {
        (0..3).all(|k| self.min[k] <= other.min[k] && self.max[k] >= other.max[k])
    }

    /// Slab test against `[t_min, t_max]`.
    #[inline]
    fn hit(&self, origin: &Vec3, inv_dir: &Vec3, t_min: f64, t_max: f64) -> bool {
        let mut t0 = t_min;
        let mut t1 = t_max;
        for k in 0..3 {
            let a = (self.min[k] - origin[k]) * inv_dir[k];
            let b = (self.max[k] - origin[k]) * inv_dir[k];
            let (near, far) = if a <= b { (a, b) } else { (b, a) };
            // NaN (0 * inf) means the ray lies in the slab plane: keep the interval
            if near > t0 {
                t0 = near;
            }
            if far < t1 {
                t1 = far;
            }
            if t0 > t1 {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BvhNode {
    pub bounds: Aabb,
    /// Leaf: first index into the primitive list. Inner: index of the left child
    /// (the right child is `left + 1`).
    pub first: u32,
    /// Number of primitives for leaves, 0 for inner nodes.
    pub count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub face: u32,
    /// Barycentrics of the hit point w.r.t. the face's three corners.
    pub bary: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct Bvh {
    pub nodes: Vec<BvhNode>,
    /// Face indices in leaf order.
    pub prims: Vec<u32>,
    tris: Vec<[Vec3; 3]>,
    /// Self-intersection offset along rays for occlusion tests.
    pub epsilon: f64,
}

/// Möller–Trumbore, two-sided. Returns `(t, u, v)` with barycentrics
/// `(1 - u - v, u, v)`.
#[inline]
pub fn intersect_triangle(origin: &Vec3, dir: &Vec3, tri: &[Vec3; 3]) -> Option<(f64, f64, f64)> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - tri[0];
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some((e2.dot(&q) * inv, u, v))
}

impl Bvh {
    /// Builds over `mesh` with the default epsilon of 1e-4 × scene diagonal.
    pub fn build(mesh: &PosedMesh) -> Self {
        let eps = 1e-4 * mesh.diagonal();
        Self::with_epsilon(mesh, eps)
    }

    pub fn with_epsilon(mesh: &PosedMesh, epsilon: f64) -> Self {
        let tris: Vec<[Vec3; 3]> = mesh
            .faces
            .iter()
            .map(|f| [mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]])
            .collect();
        let centroids: Vec<Vec3> = tris.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
        let mut prims: Vec<u32> = (0..tris.len() as u32).collect();
        let mut nodes = vec![BvhNode {
            bounds: Aabb::empty(),
            first: 0,
            count: 0,
        }];
        if !tris.is_empty() {
            Self::split(&mut nodes, 0, &mut prims, 0, &tris, &centroids);
        }
        Self {
            nodes,
            prims,
            tris,
            epsilon,
        }
    }

    fn split(nodes: &mut Vec<BvhNode>, node: usize, prims: &mut [u32], offset: usize, tris: &[[Vec3; 3]], centroids: &[Vec3]) {
        let mut bounds = Aabb::empty();
        let mut cbounds = Aabb::empty();
        for &p in prims.iter() {
            for v in &tris[p as usize] {
                bounds.grow(v);
            }
            cbounds.grow(&centroids[p as usize]);
        }
        nodes[node].bounds = bounds;
        let extent = cbounds.max - cbounds.min;
        if prims.len() <= LEAF_SIZE || extent.max() <= 0.0 {
            nodes[node].first = offset as u32;
            nodes[node].count = prims.len() as u32;
            return;
        }
        let axis = extent.imax();
        // median split; ties broken by face index for a deterministic layout
        prims.sort_by(|&a, &b| {
            centroids[a as usize][axis]
                .total_cmp(&centroids[b as usize][axis])
                .then(a.cmp(&b))
        });
        let mid = prims.len() / 2;
        let left = nodes.len();
        nodes.push(BvhNode {
            bounds: Aabb::empty(),
            first: 0,
            count: 0,
        });
        nodes.push(BvhNode {
            bounds: Aabb::empty(),
            first: 0,
            count: 0,
        });
        nodes[node].first = left as u32;
        nodes[node].count = 0;
        let (lo, hi) = prims.split_at_mut(mid);
        Self::split(nodes, left, lo, offset, tris, centroids);
        Self::split(nodes, left + 1, hi, offset + mid, tris, centroids);
    }

    pub fn triangle(&self, face: usize) -> &[Vec3; 3] {
        &self.tris[face]
    }

    pub fn triangle_count(&self) -> usize {
        self.tris.len()
    }

    /// True iff some triangle crosses the open segment
    /// `(origin + ε·dir, origin + max_dist·dir)`.
    pub fn occluded(&self, origin: &Vec3, dir: &Vec3, max_dist: f64) -> bool {
        let t_min = self.epsilon;
        if self.tris.is_empty() || max_dist <= t_min {
            return false;
        }
        let inv = dir.map(|d| 1.0 / d);
        let mut stack = [0u32; 64];
        let mut sp = 1;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            if !node.bounds.hit(origin, &inv, t_min, max_dist) {
                continue;
            }
            if node.count > 0 {
                let start = node.first as usize;
                for &p in &self.prims[start..start + node.count as usize] {
                    if let Some((t, _, _)) = intersect_triangle(origin, dir, &self.tris[p as usize]) {
                        if t > t_min && t < max_dist {
                            return true;
                        }
                    }
                }
            } else {
                stack[sp] = node.first;
                stack[sp + 1] = node.first + 1;
                sp += 2;
            }
        }
        false
    }

    /// Nearest hit with `t > t_min`. Ties go to the lower face index.
    pub fn closest_hit(&self, origin: &Vec3, dir: &Vec3, t_min: f64) -> Option<Hit> {
        if self.tris.is_empty() {
            return None;
        }
        let inv = dir.map(|d| 1.0 / d);
        let mut best: Option<Hit> = None;
        let mut t_max = f64::INFINITY;
        let mut stack = [0u32; 64];
        let mut sp = 1;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            if !node.bounds.hit(origin, &inv, t_min, t_max) {
                continue;
            }
            if node.count > 0 {
                let start = node.first as usize;
                for &p in &self.prims[start..start + node.count as usize] {
                    if let Some((t, u, v)) = intersect_triangle(origin, dir, &self.tris[p as usize]) {
                        let better = t > t_min
                            && match best {
                                None => true,
                                Some(b) => t < b.t || (t == b.t && p < b.face),
                            };
                        if better {
                            t_max = t;
                            best = Some(Hit {
                                t,
                                face: p,
                                bary: [1.0 - u - v, u, v],
                            });
                        }
                    }
                }
            } else {
                stack[sp] = node.first;
                stack[sp + 1] = node.first + 1;
                sp += 2;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::mannequin::sphere_mesh;
    use crate::geom::{skin, Pose};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sphere() -> PosedMesh {
        let t = sphere_mesh(1.0, 24, 16);
        skin(&t.vertices, &Pose::rest(0), &t, 0).unwrap()
    }

    fn brute_occluded(mesh: &PosedMesh, o: &Vec3, d: &Vec3, max: f64, eps: f64) -> bool {
        mesh.faces.iter().any(|f| {
            let tri = [mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]];
            matches!(intersect_triangle(o, d, &tri), Some((t, _, _)) if t > eps && t < max)
        })
    }

    fn brute_closest(mesh: &PosedMesh, o: &Vec3, d: &Vec3) -> Option<(f64, u32)> {
        let mut best: Option<(f64, u32)> = None;
        for (i, f) in mesh.faces.iter().enumerate() {
            let tri = [mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]];
            if let Some((t, _, _)) = intersect_triangle(o, d, &tri) {
                if t > 0.0 && best.map_or(true, |b| t < b.0) {
                    best = Some((t, i as u32));
                }
            }
        }
        best
    }

    #[test]
    fn structure_invariants() {
        let mesh = sphere();
        let bvh = Bvh::build(&mesh);
        let mut seen = vec![0; mesh.faces.len()];
        for node in &bvh.nodes {
            if node.count > 0 {
                for &p in &bvh.prims[node.first as usize..(node.first + node.count) as usize] {
                    seen[p as usize] += 1;
                }
            } else {
                for child in [node.first, node.first + 1] {
                    assert!(node.bounds.contains(&bvh.nodes[child as usize].bounds));
                }
            }
        }
        assert!(seen.iter().all(|&n| n == 1));
    }

    #[test]
    fn outward_and_through_rays() {
        let mesh = sphere();
        let bvh = Bvh::build(&mesh);
        let p = mesh.vertices[40];
        let n = mesh.normals[40];
        assert!(!bvh.occluded(&p, &n, 10.0));
        // from outside, straight through the center
        let o = Vec3::new(-3.0, 0.1, 0.05);
        assert!(bvh.occluded(&o, &Vec3::x(), 6.0));
        // stops short of the sphere
        assert!(!bvh.occluded(&o, &Vec3::x(), 1.5));
    }

    #[test]
    fn random_rays_match_brute_force() {
        let mesh = sphere();
        let bvh = Bvh::build(&mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let o = Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let d = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).normalize();
            let max = rng.gen_range(0.1..4.0);
            assert_eq!(
                bvh.occluded(&o, &d, max),
                brute_occluded(&mesh, &o, &d, max, bvh.epsilon)
            );
            let hit = bvh.closest_hit(&o, &d, 0.0).map(|h| (h.t, h.face));
            let brute = brute_closest(&mesh, &o, &d);
            match (hit, brute) {
                (None, None) => {}
                (Some(a), Some(b)) => assert!((a.0 - b.0).abs() < 1e-12),
                other => panic!("mismatch {other:?}"),
            }
        }
    }

    #[test]
    fn axis_aligned_rays_are_handled() {
        let mesh = sphere();
        let bvh = Bvh::build(&mesh);
        let o = Vec3::new(0.0, 0.0, -5.0);
        let hit = bvh.closest_hit(&o, &Vec3::z(), 0.0).unwrap();
        assert!((hit.t - 4.0).abs() < 0.05);
    }
}
