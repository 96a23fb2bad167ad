use super::*;
use crate::geom::mannequin::{plane_template, rigid_template, sphere_mesh};
use crate::geom::{bake_texel_surface_map, skin, Pose, SkinnedTemplate, Vec2};
use crate::tracer::render_normals;
use nalgebra::{Isometry3, Translation3, UnitQuaternion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn posed(t: &SkinnedTemplate) -> PosedMesh {
    skin(&t.vertices, &Pose::rest(t.skeleton.dof_count()), t, 0).unwrap()
}

fn front_camera(w: usize) -> CameraModel {
    CameraModel::look_at(Vec3::new(0.0, 0.0, 3.0), Vec3::zeros(), Vec3::y(), 0.6, w, w).unwrap()
}

fn constant(cam: &CameraModel, v: [f64; 3]) -> Image {
    Image::filled(cam.width, cam.height, &v)
}

/// Unit plane plus a small square occluder at z = 1 covering its center.
fn occluded_plane() -> SkinnedTemplate {
    let p = plane_template(1.0, 4);
    let o = plane_template(0.3, 1);
    let mut vertices = p.vertices.clone();
    let off = vertices.len();
    vertices.extend(o.vertices.iter().map(|v| v + Vec3::new(0.0, 0.0, 1.0)));
    let mut faces = p.faces.clone();
    faces.extend(o.faces.iter().map(|f| [f[0] + off, f[1] + off, f[2] + off]));
    let squash = |uv: &[Vec2; 3], u0: f64| uv.map(|u| Vec2::new(u0 + 0.5 * u.x, u.y));
    let mut face_uvs: Vec<[Vec2; 3]> = p.face_uvs.iter().map(|u| squash(u, 0.0)).collect();
    face_uvs.extend(o.face_uvs.iter().map(|u| squash(u, 0.5)));
    rigid_template(vertices, faces, face_uvs)
}

#[test]
fn coarse_stack_static_and_planar() {
    let t = plane_template(1.0, 3);
    let m = posed(&t);
    let map = bake_texel_surface_map(&t, 16, 16).unwrap();
    let s = coarse_normal_stack(&[&m, &m, &m], &map).unwrap();
    assert_eq!(s.channels, 9);
    for (i, _) in map.valid() {
        let px = &s.data[9 * i..9 * i + 9];
        assert_eq!(&px[0..3], &px[3..6]);
        assert_eq!(&px[0..3], &px[6..9]);
        assert!((px[2] - 1.0).abs() < 1e-12);
    }
    assert!(coarse_normal_stack(&[&m, &m], &map).is_err());
}

#[test]
fn coarse_normals_on_sphere_are_radial() {
    let t = sphere_mesh(1.0, 48, 32);
    let m = posed(&t);
    let map = bake_texel_surface_map(&t, 64, 64).unwrap();
    let s = coarse_normal_stack(&[&m, &m, &m], &map).unwrap();
    let p = position_map(&m, &map);
    let limit = 2f64.to_radians().cos();
    for (i, _) in map.valid() {
        let n = Vec3::from_column_slice(&s.data[9 * i..9 * i + 3]);
        let r = Vec3::from_column_slice(&p.data[3 * i..3 * i + 3]).normalize();
        assert!(n.dot(&r) >= limit);
    }
}

#[test]
fn single_view_constant_and_exact() {
    let t = plane_template(1.0, 4);
    let m = posed(&t);
    let traced = TracedMesh::new(&m, &t.face_uvs);
    let map = bake_texel_surface_map(&t, 32, 32).unwrap();
    let cam = front_camera(48);
    let u = unproject(&[constant(&cam, [0.3, 0.5, 0.7])], &[cam.clone()], &traced, &map).unwrap();
    assert_eq!(u.holes.count(), 0);
    for (i, _) in map.valid() {
        assert_eq!(u.counts[i], 1);
        for k in 0..3 {
            assert!((u.map.data[3 * i + k] - [0.3, 0.5, 0.7][k]).abs() < 1e-12);
        }
    }
    // random image: each texel equals the bilinear sample at its projection
    let mut img = Image::new(48, 48, 3);
    for (i, v) in img.data.iter_mut().enumerate() {
        *v = ((i * 7919) % 101) as f64 / 100.0;
    }
    let u = unproject(&[img.clone()], &[cam.clone()], &traced, &map).unwrap();
    for (i, s) in map.valid() {
        let (p, _) = interpolate(&m, s);
        let px = cam.project(&p).unwrap();
        let mut v = [0.0; 3];
        img.sample_bilinear(px.x, px.y, &mut v);
        assert_eq!(&u.map.data[3 * i..3 * i + 3], &v);
    }
}

#[test]
fn two_views_average() {
    let t = plane_template(1.0, 4);
    let m = posed(&t);
    let traced = TracedMesh::new(&m, &t.face_uvs);
    let map = bake_texel_surface_map(&t, 16, 16).unwrap();
    let c1 = CameraModel::look_at(Vec3::new(0.5, 0.0, 3.0), Vec3::zeros(), Vec3::y(), 0.7, 32, 32).unwrap();
    let c2 = CameraModel::look_at(Vec3::new(-0.5, 0.3, 3.0), Vec3::zeros(), Vec3::y(), 0.7, 32, 32).unwrap();
    let u = unproject(&[constant(&c1, [1.0; 3]), constant(&c2, [0.2; 3])], &[c1, c2], &traced, &map).unwrap();
    for (i, _) in map.valid() {
        assert_eq!(u.counts[i], 2);
        assert!((u.map.data[3 * i] - 0.6).abs() < 1e-12);
    }
}

#[test]
fn occluded_and_back_facing_texels_are_holes() {
    let t = occluded_plane();
    let m = posed(&t);
    let traced = TracedMesh::new(&m, &t.face_uvs);
    let map = bake_texel_surface_map(&t, 32, 32).unwrap();
    let cam = front_camera(64);
    let u = unproject(&[constant(&cam, [1.0; 3])], &[cam.clone()], &traced, &map).unwrap();
    let mut hidden = 0;
    for (i, s) in map.valid() {
        let (p, _) = interpolate(&m, s);
        let is_plane = (s.face as usize) < 32;
        let behind = is_plane && p.x.abs() < 0.1 && p.y.abs() < 0.1;
        if behind {
            assert!(u.holes.bits[i]);
            assert_eq!(u.counts[i], 0);
            hidden += 1;
        }
        if is_plane && (p.x.abs() > 0.25 || p.y.abs() > 0.25) {
            assert!(!u.holes.bits[i]);
        }
    }
    assert!(hidden > 0);
    // a camera behind the plane sees nothing
    let back = CameraModel::look_at(Vec3::new(0.0, 0.0, -3.0), Vec3::zeros(), Vec3::y(), 0.6, 32, 32).unwrap();
    let u = unproject(&[constant(&back, [1.0; 3])], &[back], &traced, &map).unwrap();
    assert_eq!(u.holes.count(), map.valid_count());
    assert!(unproject(&[], &[], &traced, &map).is_err());
}

#[test]
fn hf_normals_round_trip_and_fallback() {
    let t = plane_template(1.0, 4);
    let m = posed(&t).transformed(&Isometry3::from_parts(
        Translation3::new(0.1, -0.2, 0.0),
        UnitQuaternion::from_euler_angles(0.3, -0.2, 0.1),
    ));
    let traced = TracedMesh::new(&m, &t.face_uvs);
    let map = bake_texel_surface_map(&t, 32, 32).unwrap();
    let n_world = m.normals[0];
    let eye = Vec3::new(0.1, -0.2, 0.0) + n_world * 3.0;
    let cam = CameraModel::look_at(eye, Vec3::new(0.1, -0.2, 0.0), Vec3::y(), 0.7, 48, 48).unwrap();
    let (normals, _) = render_normals(&traced, &cam);
    let u = hf_normal_feature(&[normals], &[cam.clone()], &traced, &map).unwrap();
    for (i, _) in map.valid() {
        assert!(!u.holes.bits[i]);
        let v = Vec3::from_column_slice(&u.map.data[3 * i..3 * i + 3]);
        assert!((v - n_world).norm() <= 1e-5);
    }
    // synthesized directly as R_c^-1 n: constant image
    let nc = cam.rotation_matrix() * n_world;
    let img = constant(&cam, [nc.x, nc.y, nc.z]);
    let u = hf_normal_feature(&[img], &[cam], &traced, &map).unwrap();
    for (i, _) in map.valid() {
        let v = Vec3::from_column_slice(&u.map.data[3 * i..3 * i + 3]);
        assert!((v - n_world).norm() <= 1e-5);
    }
    // no view sees the surface: mesh normal with the hole flag
    let back = CameraModel::look_at(-eye, Vec3::new(0.1, -0.2, 0.0), Vec3::y(), 0.7, 16, 16).unwrap();
    let u = hf_normal_feature(&[constant(&back, [0.0, 0.0, 1.0])], &[back], &traced, &map).unwrap();
    for (i, _) in map.valid() {
        assert!(u.holes.bits[i]);
        let v = Vec3::from_column_slice(&u.map.data[3 * i..3 * i + 3]);
        assert!((v - n_world).norm() < 1e-12);
    }
}

#[test]
fn averaging_views_reduces_normal_noise() {
    let t = plane_template(1.0, 4);
    let m = posed(&t);
    let traced = TracedMesh::new(&m, &t.face_uvs);
    let map = bake_texel_surface_map(&t, 64, 64).unwrap();
    let eyes = [
        Vec3::new(0.8, 0.0, 2.5),
        Vec3::new(-0.8, 0.0, 2.5),
        Vec3::new(0.0, 0.8, 2.5),
        Vec3::new(0.0, -0.8, 2.5),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut cams = Vec::new();
    let mut imgs = Vec::new();
    for e in eyes {
        let cam = CameraModel::look_at(e, Vec3::zeros(), Vec3::y(), 0.7, 64, 64).unwrap();
        let (mut n, fg) = render_normals(&traced, &cam);
        perturb_normals(&mut n, &fg, 0.05, &mut rng).unwrap();
        cams.push(cam);
        imgs.push(n);
    }
    let one = hf_normal_feature(&imgs[..1], &cams[..1], &traced, &map).unwrap();
    let all = hf_normal_feature(&imgs, &cams, &traced, &map).unwrap();
    let (mut e1, mut e4, mut n) = (0.0, 0.0, 0);
    for (i, _) in map.valid() {
        if all.counts[i] != 4 || one.counts[i] != 1 {
            continue;
        }
        let angle = |img: &Image| Vec3::from_column_slice(&img.data[3 * i..3 * i + 3]).dot(&Vec3::z()).clamp(-1.0, 1.0).acos();
        e1 += angle(&one.map);
        e4 += angle(&all.map);
        n += 1;
    }
    assert!(n >= 1000, "only {n} texels seen by all views");
    assert!(e4 < e1, "four views {e4} vs one view {e1}");
}

#[test]
fn position_map_equivariance_and_sphere() {
    let t = sphere_mesh(1.0, 32, 20);
    let m = posed(&t);
    let map = bake_texel_surface_map(&t, 64, 64).unwrap();
    let p = position_map(&m, &map);
    let shift = Vec3::new(0.5, -1.0, 2.0);
    let moved = m.transformed(&Isometry3::translation(shift.x, shift.y, shift.z));
    let q = position_map(&moved, &map);
    let edge = (m.vertices[m.faces[0][0]] - m.vertices[m.faces[0][1]]).norm().max(0.2);
    for i in 0..map.width * map.height {
        let a = Vec3::from_column_slice(&p.data[3 * i..3 * i + 3]);
        let b = Vec3::from_column_slice(&q.data[3 * i..3 * i + 3]);
        if map.texels[i].is_some() {
            assert!((b - a - shift).norm() < 1e-12);
            assert!((a.norm() - 1.0).abs() <= edge);
        } else {
            assert_eq!(a, Vec3::zeros());
        }
    }
}

#[test]
fn albedo_constant_and_inpainted() {
    let t = occluded_plane();
    let m = posed(&t);
    let traced = TracedMesh::new(&m, &t.face_uvs);
    let map = bake_texel_surface_map(&t, 32, 32).unwrap();
    let cam = front_camera(64);
    let c = [0.4, 0.1, 0.8];
    let rho = albedo_feature(&[constant(&cam, c)], &[cam.clone()], &traced, &map).unwrap();
    for i in 0..map.width * map.height {
        for k in 0..3 {
            let expect = if map.texels[i].is_some() { c[k] } else { 0.0 };
            assert!((rho.data[3 * i + k] - expect).abs() < 1e-6);
        }
    }
    let back = CameraModel::look_at(Vec3::new(0.0, 0.0, -3.0), Vec3::zeros(), Vec3::y(), 0.6, 16, 16).unwrap();
    // the occluder's back faces away too, so nothing is seen
    assert!(matches!(
        albedo_feature(&[constant(&back, c)], &[back], &traced, &map),
        Err(Error::AllHoles)
    ));
}

#[test]
fn pull_push_half_atlas_and_gradient() {
    let (w, h) = (64, 64);
    let mut img = Image::new(w, h, 1);
    let known: Vec<bool> = (0..w * h).map(|i| i % w < w / 2).collect();
    for (i, v) in img.data.iter_mut().enumerate() {
        *v = if known[i] { 0.37 } else { 9.0 };
    }
    let out = pull_push(&img, &known).unwrap();
    assert!(out.data.iter().all(|v| (v - 0.37).abs() < 1e-6));

    let truth = |r: usize, c: usize| 0.2 + 0.5 * c as f64 / w as f64 + 0.2 * r as f64 / h as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let known: Vec<bool> = (0..w * h).map(|_| rng.gen::<f64>() >= 0.1).collect();
    let mut img = Image::new(w, h, 1);
    for r in 0..h {
        for c in 0..w {
            img.data[r * w + c] = if known[r * w + c] { truth(r, c) } else { 0.0 };
        }
    }
    let out = pull_push(&img, &known).unwrap();
    for r in 0..h {
        for c in 0..w {
            let t = truth(r, c);
            assert!((out.data[r * w + c] - t).abs() <= 0.05 * t);
        }
    }
}

#[test]
fn view_encoding_cases() {
    let mut p = Image::new(3, 1, 3);
    p.data[3..6].copy_from_slice(&[1.0, 2.0, -1.0]);
    p.data[6..9].copy_from_slice(&[0.0, 0.0, 10.0]);
    let valid = Mask::new(3, 1, true);
    let (g, flags) = view_encoding(&Vec3::new(0.0, 0.0, 10.0), &p, &valid).unwrap();
    assert_eq!(&g.data[0..3], &[0.0, 0.0, 1.0]);
    assert!((Vec3::from_column_slice(&g.data[3..6]).norm() - 1.0).abs() < 1e-6);
    assert_eq!(&g.data[6..9], &[0.0, 0.0, 0.0]);
    assert_eq!(flags.bits, vec![false, false, true]);
    // moving the camera along +x increases the x component
    let mut last = f64::NEG_INFINITY;
    for k in 0..20 {
        let (g, _) = view_encoding(&Vec3::new(-5.0 + 0.5 * k as f64, 1.0, 4.0), &p, &valid).unwrap();
        assert!(g.data[3] > last);
        last = g.data[3];
    }
}

#[test]
fn assemble_slices_and_zeroing() {
    let (w, h) = (8, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut rand_img = |c: usize| {
        let mut img = Image::new(w, h, c);
        for v in img.data.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        img
    };
    let parts = [rand_img(9), rand_img(3), rand_img(3), rand_img(3), rand_img(3), rand_img(3)];
    let valid = Mask::new(w, h, true);
    let s = assemble(&parts[0], &parts[1], &parts[2], &parts[3], &parts[4], &parts[5], &valid).unwrap();
    assert_eq!(s.data.channels, 24);
    for (slot, part) in FeatureSlot::ALL.iter().zip(&parts) {
        assert_eq!(&s.slice(*slot), part);
    }
    let zero = Image::new(w, h, 3);
    let z = assemble(&parts[0], &parts[1], &parts[2], &zero, &parts[4], &parts[5], &valid).unwrap();
    for (a, b) in s.data.data.chunks(24).zip(z.data.data.chunks(24)) {
        for ch in 0..24 {
            if FeatureSlot::Albedo.channels().contains(&ch) {
                assert_eq!(b[ch], 0.0);
            } else {
                assert_eq!(a[ch], b[ch]);
            }
        }
    }
    let mut partial = valid.clone();
    partial.bits[5] = false;
    let m = assemble(&parts[0], &parts[1], &parts[2], &parts[3], &parts[4], &parts[5], &partial).unwrap();
    assert!(m.data.pixel(0, 5).iter().all(|v| *v == 0.0));
    let small = Image::new(4, 4, 3);
    assert!(assemble(&parts[0], &parts[1], &small, &parts[3], &parts[4], &parts[5], &valid).is_err());
}
