//! PSNR and SSIM on linear images.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

pub const PSNR_CAP_DB: f64 = 99.0;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_RADIUS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Psnr {
    pub db: f64,
    /// Set when the images are identical and `db` is the cap.
    pub capped: bool,
}

fn check_shapes(a: &Image, b: &Image) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::invalid(format!(
            "image shapes differ: {}x{}x{} vs {}x{}x{}",
            a.width, a.height, a.channels, b.width, b.height, b.channels
        )));
    }
    Ok(())
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    check_shapes(a, b)?;
    if a.data.is_empty() {
        return Err(Error::invalid("empty image"));
    }
    let s: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(s / a.data.len() as f64)
}

pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<Psnr> {
    if !(peak > 0.0) {
        return Err(Error::invalid("psnr peak must be positive"));
    }
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(Psnr {
            db: PSNR_CAP_DB,
            capped: true,
        });
    }
    let db = 10.0 * (peak * peak / m).log10();
    Ok(Psnr {
        db: db.min(PSNR_CAP_DB),
        capped: db >= PSNR_CAP_DB,
    })
}

fn gaussian_taps() -> [f64; 2 * SSIM_RADIUS + 1] {
    let mut k = [0.0; 2 * SSIM_RADIUS + 1];
    for (i, w) in k.iter_mut().enumerate() {
        let x = i as f64 - SSIM_RADIUS as f64;
        *w = (-0.5 * x * x / (SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|w| w / s)
}

/// Gaussian-filtered values at window centers that fit inside the image.
fn filter_valid(plane: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let n = taps.len();
    let (vw, vh) = (w + 1 - n, h + 1 - n);
    let mut rows = vec![0.0; vw * h];
    for r in 0..h {
        for c in 0..vw {
            rows[r * vw + c] = taps.iter().enumerate().map(|(k, t)| t * plane[r * w + c + k]).sum();
        }
    }
    let mut out = vec![0.0; vw * vh];
    for r in 0..vh {
        for c in 0..vw {
            out[r * vw + c] = taps.iter().enumerate().map(|(k, t)| t * rows[(r + k) * vw + c]).sum();
        }
    }
    out
}

/// Mean SSIM with an 11×11 Gaussian window (σ = 1.5), population
/// statistics, evaluated at window positions fully inside the image and
/// averaged over channels.
pub fn ssim(a: &Image, b: &Image, data_range: f64) -> Result<f64> {
    check_shapes(a, b)?;
    let win = 2 * SSIM_RADIUS + 1;
    if a.width < win || a.height < win {
        return Err(Error::invalid(format!("ssim needs images of at least {win}x{win}")));
    }
    if !(data_range > 0.0) {
        return Err(Error::invalid("ssim data range must be positive"));
    }
    let taps = gaussian_taps();
    let c1 = (SSIM_K1 * data_range).powi(2);
    let c2 = (SSIM_K2 * data_range).powi(2);
    let (w, h, ch) = (a.width, a.height, a.channels);
    let mut total = 0.0;
    for k in 0..ch {
        let x: Vec<f64> = a.data.iter().skip(k).step_by(ch).copied().collect();
        let y: Vec<f64> = b.data.iter().skip(k).step_by(ch).copied().collect();
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let ux = filter_valid(&x, w, h, &taps);
        let uy = filter_valid(&y, w, h, &taps);
        let uxx = filter_valid(&xx, w, h, &taps);
        let uyy = filter_valid(&yy, w, h, &taps);
        let uxy = filter_valid(&xy, w, h, &taps);
        let mut sum = 0.0;
        for i in 0..ux.len() {
            let vx = uxx[i] - ux[i] * ux[i];
            let vy = uyy[i] - uy[i] * uy[i];
            let vxy = uxy[i] - ux[i] * uy[i];
            let num = (2.0 * ux[i] * uy[i] + c1) * (2.0 * vxy + c2);
            let den = (ux[i] * ux[i] + uy[i] * uy[i] + c1) * (vx + vy + c2);
            sum += num / den;
        }
        total += sum / ux.len() as f64;
    }
    Ok(total / ch as f64)
}

/// Value at the given percentile (0..=100) of all samples, nearest rank.
pub fn percentile(values: &[f64], pct: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((pct / 100.0) * (v.len() - 1) as f64).round() as usize;
    v[rank.min(v.len() - 1)]
}

pub fn clamp_to_peak(img: &Image, peak: f64) -> Image {
    let mut out = img.clone();
    for v in &mut out.data {
        *v = v.clamp(0.0, peak);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub frame: usize,
    pub view: usize,
    pub psnr: Psnr,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub frames: Vec<FrameMetrics>,
    pub stride: usize,
    /// Means over frames whose index is a multiple of `stride`.
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub aggregated: usize,
}

impl MetricsReport {
    pub fn aggregate(frames: Vec<FrameMetrics>, stride: usize) -> Self {
        let stride = stride.max(1);
        let picked: Vec<&FrameMetrics> = frames.iter().filter(|f| f.frame % stride == 0).collect();
        let n = picked.len();
        let (mean_psnr, mean_ssim) = if n == 0 {
            (f64::NAN, f64::NAN)
        } else {
            (
                picked.iter().map(|f| f.psnr.db).sum::<f64>() / n as f64,
                picked.iter().map(|f| f.ssim).sum::<f64>() / n as f64,
            )
        };
        Self {
            frames,
            stride,
            mean_psnr,
            mean_ssim,
            aggregated: n,
        }
    }
}
