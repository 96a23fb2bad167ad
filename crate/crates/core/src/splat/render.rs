use nalgebra::{Matrix2, Matrix2x3, Matrix3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::GaussianTexelSheet;
use crate::camera::CameraModel;
use crate::geom::{Vec2, Vec3};
use crate::image::Image;

const TILE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplatConfig {
    /// Added to the diagonal of every screen-space covariance (px²).
    pub covariance_floor: f64,
    pub alpha_clip: f64,
    /// Gaussians with view depth at or below this are culled.
    pub near: f64,
}

impl Default for SplatConfig {
    fn default() -> Self {
        Self {
            covariance_floor: 0.3,
            alpha_clip: 0.999,
            near: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedGaussian {
    /// Index into the sheet.
    pub index: usize,
    pub texel: u32,
    pub mean: Vec2,
    pub cov: Matrix2<f64>,
    pub depth: f64,
    pub color: [f64; 3],
    pub opacity: f64,
}

/// `J W Σ Wᵀ Jᵀ` for a world covariance at camera-space point `t`.
pub fn screen_covariance(cov_world: &Matrix3<f64>, camera: &CameraModel, t: &Vec3) -> Matrix2<f64> {
    let w = camera.rotation_matrix();
    let j = Matrix2x3::new(
        camera.fx / t.z,
        0.0,
        -camera.fx * t.x / (t.z * t.z),
        0.0,
        camera.fy / t.z,
        -camera.fy * t.y / (t.z * t.z),
    );
    let m = j * w;
    let s = m * cov_world * m.transpose();
    // exact symmetry
    let off = 0.5 * (s[(0, 1)] + s[(1, 0)]);
    Matrix2::new(s[(0, 0)], off, off, s[(1, 1)])
}

/// World covariance `R diag(s)² Rᵀ` of sheet entry `i`.
pub fn world_covariance(sheet: &GaussianTexelSheet, i: usize) -> Matrix3<f64> {
    let r = sheet.rotation(i).to_rotation_matrix().into_inner();
    let m = r * Matrix3::from_diagonal(&sheet.scale(i));
    m * m.transpose()
}

/// EWA projection of every Gaussian in front of the near plane.
pub fn project(sheet: &GaussianTexelSheet, camera: &CameraModel, config: &SplatConfig) -> Vec<ProjectedGaussian> {
    (0..sheet.len())
        .into_par_iter()
        .filter_map(|i| {
            let p = sheet.position(i);
            let t = camera.world_to_camera(&p);
            if t.z <= config.near {
                return None;
            }
            let mean = camera.project_camera(&t)?;
            let cov = screen_covariance(&world_covariance(sheet, i), camera, &t) + Matrix2::identity() * config.covariance_floor;
            Some(ProjectedGaussian {
                index: i,
                texel: sheet.texels[i],
                mean,
                cov,
                depth: t.z,
                color: sheet.colors[i],
                opacity: sheet.opacities[i],
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CompositeStats {
    /// Gaussians dropped because their covariance was singular or not finite.
    pub skipped: usize,
    pub drawn: usize,
}

/// Rendered splat image with per-pixel remaining transmittance.
#[derive(Debug, Clone, PartialEq)]
pub struct Composited {
    pub image: Image,
    pub transmittance: Image,
    pub stats: CompositeStats,
}

struct Prepared {
    mean: Vec2,
    inv: [f64; 3],
    bbox: [f64; 4],
    color: [f64; 3],
    opacity: f64,
}

/// Front-to-back alpha compositing sorted by view depth (ties by texel index).
pub fn composite(list: &[ProjectedGaussian], width: usize, height: usize, config: &SplatConfig) -> Composited {
    let mut order: Vec<usize> = (0..list.len()).collect();
    order.sort_by(|&a, &b| list[a].depth.total_cmp(&list[b].depth).then(list[a].texel.cmp(&list[b].texel)));
    let mut stats = CompositeStats::default();
    let mut prepared = Vec::with_capacity(list.len());
    for &k in &order {
        let g = &list[k];
        let (a, b, c) = (g.cov[(0, 0)], g.cov[(0, 1)], g.cov[(1, 1)]);
        let det = a * c - b * b;
        if !(det > 0.0) || !det.is_finite() || !g.mean.iter().all(|v| v.is_finite()) {
            stats.skipped += 1;
            continue;
        }
        let (rx, ry) = (3.0 * a.sqrt(), 3.0 * c.sqrt());
        prepared.push(Prepared {
            mean: g.mean,
            inv: [c / det, -b / det, a / det],
            bbox: [g.mean.x - rx, g.mean.x + rx, g.mean.y - ry, g.mean.y + ry],
            color: g.color,
            opacity: g.opacity,
        });
    }
    stats.drawn = prepared.len();

    let (tx, ty) = (width.div_ceil(TILE), height.div_ceil(TILE));
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); tx * ty];
    for (k, g) in prepared.iter().enumerate() {
        let [x0, x1, y0, y1] = g.bbox;
        if x1 < 0.0 || y1 < 0.0 || x0 > width as f64 || y0 > height as f64 {
            continue;
        }
        let c0 = (x0.max(0.0) as usize / TILE).min(tx - 1);
        let c1 = (x1.min(width as f64) as usize / TILE).min(tx - 1);
        let r0 = (y0.max(0.0) as usize / TILE).min(ty - 1);
        let r1 = (y1.min(height as f64) as usize / TILE).min(ty - 1);
        for r in r0..=r1 {
            for c in c0..=c1 {
                bins[r * tx + c].push(k as u32);
            }
        }
    }

    let tiles: Vec<(Vec<f64>, Vec<f64>)> = (0..tx * ty)
        .into_par_iter()
        .map(|t| {
            let (trow, tcol) = (t / tx, t % tx);
            let mut rgb = vec![0.0; TILE * TILE * 3];
            let mut trans = vec![1.0; TILE * TILE];
            for ly in 0..TILE {
                let row = trow * TILE + ly;
                if row >= height {
                    break;
                }
                let py = row as f64 + 0.5;
                for lx in 0..TILE {
                    let col = tcol * TILE + lx;
                    if col >= width {
                        break;
                    }
                    let px = col as f64 + 0.5;
                    let mut t_acc = 1.0;
                    let mut c = [0.0; 3];
                    for &k in &bins[t] {
                        let g = &prepared[k as usize];
                        if px < g.bbox[0] || px > g.bbox[1] || py < g.bbox[2] || py > g.bbox[3] {
                            continue;
                        }
                        let (dx, dy) = (px - g.mean.x, py - g.mean.y);
                        let q = g.inv[0] * dx * dx + 2.0 * g.inv[1] * dx * dy + g.inv[2] * dy * dy;
                        let alpha = (g.opacity * (-0.5 * q).exp()).clamp(0.0, config.alpha_clip);
                        if alpha <= 0.0 {
                            continue;
                        }
                        for ch in 0..3 {
                            c[ch] += g.color[ch] * alpha * t_acc;
                        }
                        t_acc *= 1.0 - alpha;
                    }
                    let i = ly * TILE + lx;
                    rgb[3 * i..3 * i + 3].copy_from_slice(&c);
                    trans[i] = t_acc;
                }
            }
            (rgb, trans)
        })
        .collect();

    let mut image = Image::new(width, height, 3);
    let mut transmittance = Image::new(width, height, 1);
    for (t, (rgb, trans)) in tiles.iter().enumerate() {
        let (trow, tcol) = (t / tx, t % tx);
        for ly in 0..TILE {
            let row = trow * TILE + ly;
            if row >= height {
                break;
            }
            for lx in 0..TILE {
                let col = tcol * TILE + lx;
                if col >= width {
                    break;
                }
                let i = ly * TILE + lx;
                image.pixel_mut(row, col).copy_from_slice(&rgb[3 * i..3 * i + 3]);
                transmittance.pixel_mut(row, col)[0] = trans[i];
            }
        }
    }
    Composited {
        image,
        transmittance,
        stats,
    }
}
