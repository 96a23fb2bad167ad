//! Texel-space training and warm-up objectives.

use serde::{Deserialize, Serialize};

use relit_core::splat::SCALE_LOG_CLAMP;

use crate::error::{NetError, NetResult};
use crate::graph::{Graph, Var};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub l1: f64,
    pub reg: f64,
    /// Perceptual term; must stay 0.
    pub perceptual: f64,
    pub scale: f64,
    pub translation: f64,
    pub opacity: f64,
    pub color: f64,
    pub default_opacity: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            l1: 2.7,
            reg: 1.2,
            perceptual: 0.0,
            scale: 1.0,
            translation: 0.1,
            opacity: 1.0,
            color: 1.0,
            default_opacity: 0.95,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> NetResult<()> {
        let all = [self.l1, self.reg, self.perceptual, self.scale, self.translation, self.opacity, self.color];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(NetError::Config("loss weights must be finite and non-negative".into()));
        }
        if self.perceptual != 0.0 {
            return Err(NetError::Config("perceptual loss is not available; its weight must be 0".into()));
        }
        if !(0.0..=1.0).contains(&self.default_opacity) {
            return Err(NetError::Config("default opacity must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Activated Gaussian attributes, each `[k, H, W]`.
#[derive(Debug, Clone, Copy)]
pub struct Heads {
    pub offset: Var,
    pub scale: Var,
    pub opacity: Var,
    pub color: Var,
}

/// Splits a raw `[14, H, W]` prediction and applies the output activations.
pub fn prediction_heads<R: Real>(g: &mut Graph<R>, raw: Var, max_offset: f64) -> NetResult<Heads> {
    let dp = g.slice_rows(raw, 0, 3)?;
    let dp = g.tanh(dp);
    let offset = g.scale(dp, R::of(max_offset));
    let ds = g.slice_rows(raw, 3, 3)?;
    let scale = g.exp_clamp(ds, R::of(-SCALE_LOG_CLAMP), R::of(SCALE_LOG_CLAMP));
    let o = g.slice_rows(raw, 10, 1)?;
    let opacity = g.sigmoid(o);
    let c = g.slice_rows(raw, 11, 3)?;
    let color = g.softplus(c);
    Ok(Heads {
        offset,
        scale,
        opacity,
        color,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct TrainTerms {
    pub total: Var,
    pub l1: Var,
    pub reg: Var,
}

/// `λ1·L1(c, target) + λ2·(‖δs−1‖² + ‖δp‖²)` averaged over masked texels.
pub fn train_loss<R: Real>(g: &mut Graph<R>, h: &Heads, target: &[R], mask: &[bool], w: &LossWeights) -> NetResult<TrainTerms> {
    let hw = mask.len();
    let l1 = g.masked_mean_abs(h.color, target.to_vec(), mask.to_vec())?;
    let s = g.masked_mean_sq(h.scale, vec![R::one(); 3 * hw], mask.to_vec())?;
    let p = g.masked_mean_sq(h.offset, vec![R::zero(); 3 * hw], mask.to_vec())?;
    let reg = g.weighted_sum(&[(s, R::one()), (p, R::one())])?;
    let total = g.weighted_sum(&[(l1, R::of(w.l1)), (reg, R::of(w.reg))])?;
    Ok(TrainTerms { total, l1, reg })
}

/// `λs‖s−1‖² + λt‖δp‖² + λo(o−o0)² + λc‖c−c_tem‖²` averaged over masked texels.
pub fn warmup_loss<R: Real>(g: &mut Graph<R>, h: &Heads, template: &[R], mask: &[bool], w: &LossWeights) -> NetResult<Var> {
    let hw = mask.len();
    let m = || mask.to_vec();
    let s = g.masked_mean_sq(h.scale, vec![R::one(); 3 * hw], m())?;
    let p = g.masked_mean_sq(h.offset, vec![R::zero(); 3 * hw], m())?;
    let o = g.masked_mean_sq(h.opacity, vec![R::of(w.default_opacity); hw], m())?;
    let c = g.masked_mean_sq(h.color, template.to_vec(), m())?;
    g.weighted_sum(&[
        (s, R::of(w.scale)),
        (p, R::of(w.translation)),
        (o, R::of(w.opacity)),
        (c, R::of(w.color)),
    ])
}

/// Weight of the train loss at iteration `i`: 0 before `w0`, 1 from `w1`,
/// linear in between.
pub fn blend_weight(i: usize, w0: usize, w1: usize) -> f64 {
    if i <= w0 {
        0.0
    } else if i >= w1 {
        1.0
    } else {
        (i - w0) as f64 / (w1 - w0) as f64
    }
}

/// Inverse of the color activation, for building raw maps in tests and tools.
pub fn softplus_inverse(c: f64) -> f64 {
    if c > 20.0 {
        c
    } else {
        c.exp_m1().ln()
    }
}

/// Inverse of the opacity activation.
pub fn logit(o: f64) -> f64 {
    (o / (1.0 - o)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    const HW: usize = 6;

    /// Raw map whose activations hit the given per-texel values.
    fn raw(color: &[f64; 3], opacity: f64) -> Tensor<f64> {
        let mut d = vec![0.0; 14 * HW];
        for i in 0..HW {
            d[10 * HW + i] = logit(opacity);
            for k in 0..3 {
                d[(11 + k) * HW + i] = softplus_inverse(color[k]);
            }
        }
        Tensor::from_f64(&[14, 2, 3], &d).unwrap()
    }

    fn mask() -> Vec<bool> {
        vec![true, true, false, true, true, true]
    }

    fn plane(c: &[f64; 3]) -> Vec<f64> {
        c.iter().flat_map(|v| std::iter::repeat(*v).take(HW)).collect()
    }

    #[test]
    fn train_loss_zero_at_target() {
        let w = LossWeights::default();
        let c = [0.2, 0.5, 0.9];
        let mut g = Graph::new();
        let r = g.input(raw(&c, 0.5));
        let h = prediction_heads(&mut g, r, 0.1).unwrap();
        let t = train_loss(&mut g, &h, &plane(&c), &mask(), &w).unwrap();
        assert!(g.value(t.total).data[0].abs() < 1e-12);
    }

    #[test]
    fn constant_color_error_is_weighted_abs() {
        let w = LossWeights::default();
        let c = [0.2, 0.5, 0.9];
        let e = 0.125;
        let mut g = Graph::new();
        let r = g.input(raw(&c.map(|v| v + e), 0.5));
        let h = prediction_heads(&mut g, r, 0.1).unwrap();
        let t = train_loss(&mut g, &h, &plane(&c), &mask(), &w).unwrap();
        assert!((g.value(t.total).data[0] - w.l1 * e).abs() < 1e-9);
    }

    #[test]
    fn empty_mask_is_an_error() {
        let w = LossWeights::default();
        let mut g = Graph::new();
        let r = g.input(raw(&[0.5; 3], 0.5));
        let h = prediction_heads(&mut g, r, 0.1).unwrap();
        assert!(matches!(
            train_loss(&mut g, &h, &plane(&[0.5; 3]), &[false; HW], &w),
            Err(NetError::EmptyMask)
        ));
    }

    #[test]
    fn warmup_zero_and_opacity_term() {
        let w = LossWeights::default();
        let tem = [0.3, 0.4, 0.6];
        let mut g = Graph::new();
        let r = g.input(raw(&tem, 0.95));
        let h = prediction_heads(&mut g, r, 0.1).unwrap();
        let l = warmup_loss(&mut g, &h, &plane(&tem), &mask(), &w).unwrap();
        assert!(g.value(l).data[0].abs() < 1e-12);

        let mut rw = raw(&tem, 0.5);
        for i in 0..HW {
            rw.data[10 * HW + i] = 60.0;
        }
        let r = g.input(rw);
        let h = prediction_heads(&mut g, r, 0.1).unwrap();
        let l = warmup_loss(&mut g, &h, &plane(&tem), &mask(), &w).unwrap();
        assert!((g.value(l).data[0] - w.opacity * 0.05f64.powi(2)).abs() < 1e-12);
    }

    #[test]
    fn blend_is_linear_in_window() {
        assert_eq!(blend_weight(0, 400, 500), 0.0);
        assert_eq!(blend_weight(400, 400, 500), 0.0);
        assert_eq!(blend_weight(425, 400, 500), 0.25);
        assert_eq!(blend_weight(450, 400, 500), 0.5);
        assert_eq!(blend_weight(500, 400, 500), 1.0);
        assert_eq!(blend_weight(9000, 400, 500), 1.0);
    }

    #[test]
    fn weights_validate() {
        LossWeights::default().validate().unwrap();
        assert!(LossWeights { perceptual: 0.1, ..Default::default() }.validate().is_err());
        assert!(LossWeights { reg: -1.0, ..Default::default() }.validate().is_err());
    }
}
