//! Multi-head self- and cross-attention over flattened UV feature maps.

use relit_core::envlight::{EnvTokens, TOKEN_DIMS};

use crate::error::{NetError, NetResult};
use crate::graph::{Graph, Var};
use crate::real::Real;
use crate::tensor::Tensor;

/// Projection weights: `wq` `[d, c]`, `wk`/`wv` `[d, source dims]`, `wo` `[c, d]`.
#[derive(Debug, Clone, Copy)]
pub struct AttentionVars {
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
    pub wo: Var,
}

#[derive(Debug, Clone)]
pub struct AttentionOutput {
    /// `x` plus the projected attention result, same shape as `x`.
    pub out: Var,
    /// Per head, the `[queries, keys]` softmax weights.
    pub weights: Vec<Var>,
}

/// Token rows sorted by their bit patterns, so any permutation of the same
/// (rgb, encoding) pairs yields the same matrix.
pub fn canonical_token_rows<R: Real>(rows: &[Vec<f64>]) -> NetResult<Tensor<R>> {
    let dims = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != dims) {
        return Err(NetError::Shape("token rows differ in length".into()));
    }
    let mut sorted: Vec<&Vec<f64>> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let data: Vec<f64> = sorted.into_iter().flatten().copied().collect();
    Tensor::from_f64(&[rows.len(), dims], &data)
}

/// `[tokens, 67]` matrix of `[rgb, positional encoding]` in canonical order.
pub fn env_token_tensor<R: Real>(tokens: &EnvTokens) -> NetResult<Tensor<R>> {
    let rows: Vec<Vec<f64>> = tokens
        .tokens
        .iter()
        .map(|t| t.rgb.iter().chain(t.pe.iter()).copied().collect())
        .collect();
    let t = canonical_token_rows(&rows)?;
    debug_assert!(t.shape[1] == TOKEN_DIMS);
    Ok(t)
}

/// Attention of the feature map `x` (`[C, H, W]`) over `source` rows
/// (`[m, dk]`), or over its own texels when `source` is `None`; residual add.
pub fn multi_head_attention<R: Real>(
    g: &mut Graph<R>,
    x: Var,
    source: Option<Var>,
    p: &AttentionVars,
    heads: usize,
) -> NetResult<AttentionOutput> {
    let (c, h, w) = match g.shape(x) {
        [c, h, w] => (*c, *h, *w),
        s => return Err(NetError::Shape(format!("attention input {s:?}"))),
    };
    let d = g.shape(p.wq)[0];
    if heads == 0 || d % heads != 0 {
        return Err(NetError::Shape(format!("projection dim {d} not divisible by {heads} heads")));
    }
    if g.shape(p.wq) != [d, c] || g.shape(p.wo) != [c, d] {
        return Err(NetError::Shape(format!("attention weights do not fit {c} channels")));
    }
    let xm = g.reshape(x, &[c, h * w])?;
    let q = g.matmul(xm, p.wq, true, true)?;
    let (k, v) = match source {
        None => (g.matmul(xm, p.wk, true, true)?, g.matmul(xm, p.wv, true, true)?),
        Some(s) => (g.matmul(s, p.wk, false, true)?, g.matmul(s, p.wv, false, true)?),
    };
    let dh = d / heads;
    let inv = R::of(1.0 / (dh as f64).sqrt());
    let mut outs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for hd in 0..heads {
        let qh = g.slice_cols(q, hd * dh, dh)?;
        let kh = g.slice_cols(k, hd * dh, dh)?;
        let vh = g.slice_cols(v, hd * dh, dh)?;
        let logits = g.matmul(qh, kh, false, true)?;
        let logits = g.scale(logits, inv);
        let att = g.softmax_rows(logits)?;
        weights.push(att);
        outs.push(g.matmul(att, vh, false, false)?);
    }
    let o = if outs.len() == 1 { outs[0] } else { g.concat_cols(&outs)? };
    let proj = g.matmul(p.wo, o, false, true)?;
    let proj = g.reshape(proj, &[c, h, w])?;
    Ok(AttentionOutput {
        out: g.add(x, proj)?,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_t(rng: &mut ChaCha8Rng, shape: &[usize], s: f64) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::from_f64(shape, &(0..n).map(|_| rng.gen_range(-s..s)).collect::<Vec<_>>()).unwrap()
    }

    fn vars(g: &mut Graph<f64>, rng: &mut ChaCha8Rng, c: usize, d: usize, dk: usize) -> AttentionVars {
        AttentionVars {
            wq: g.param(rand_t(rng, &[d, c], 0.5)),
            wk: g.param(rand_t(rng, &[d, dk], 0.5)),
            wv: g.param(rand_t(rng, &[d, dk], 0.5)),
            wo: g.param(rand_t(rng, &[c, d], 0.5)),
        }
    }

    #[test]
    fn weights_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut g = Graph::new();
        let x = g.input(rand_t(&mut rng, &[8, 3, 2], 1.0));
        let src = g.input(rand_t(&mut rng, &[5, 6], 1.0));
        let p = vars(&mut g, &mut rng, 8, 8, 6);
        let o = multi_head_attention(&mut g, x, Some(src), &p, 4).unwrap();
        for w in o.weights {
            for row in g.value(w).data.chunks(5) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
            }
        }
        let ps = vars(&mut g, &mut rng, 8, 8, 8);
        assert!(multi_head_attention(&mut g, x, None, &ps, 3).is_err());
    }

    #[test]
    fn identical_tokens_give_value_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut g = Graph::new();
        let x = g.input(rand_t(&mut rng, &[4, 2, 2], 1.0));
        let tok: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let src = g.input(Tensor::from_f64(&[6, 3], &tok.repeat(6)).unwrap());
        let p = vars(&mut g, &mut rng, 4, 4, 3);
        let o = multi_head_attention(&mut g, x, Some(src), &p, 2).unwrap();
        // every query attends to W_v·e; the output adds W_o·W_v·e to x
        let wv = &g.value(p.wv).data;
        let wo = &g.value(p.wo).data;
        let val: Vec<f64> = (0..4).map(|r| (0..3).map(|j| wv[r * 3 + j] * tok[j]).sum()).collect();
        let add: Vec<f64> = (0..4).map(|r| (0..4).map(|j| wo[r * 4 + j] * val[j]).sum()).collect();
        let xs = &g.value(x).data;
        let out = &g.value(o.out).data;
        for ch in 0..4 {
            for i in 0..4 {
                assert!((out[ch * 4 + i] - xs[ch * 4 + i] - add[ch]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_token_single_head_closed_form() {
        let mut g = Graph::<f64>::new();
        // one query texel with feature 1, identity projections
        let x = g.input(Tensor::from_f64(&[1, 1, 1], &[1.0]).unwrap());
        let src = g.input(Tensor::from_f64(&[2, 1], &[0.3, -1.2]).unwrap());
        let one = |g: &mut Graph<f64>| g.param(Tensor::from_f64(&[1, 1], &[1.0]).unwrap());
        let p = AttentionVars {
            wq: one(&mut g),
            wk: one(&mut g),
            wv: one(&mut g),
            wo: one(&mut g),
        };
        let o = multi_head_attention(&mut g, x, Some(src), &p, 1).unwrap();
        let (a, b) = (0.3f64.exp(), (-1.2f64).exp());
        let want = 1.0 + (0.3 * a - 1.2 * b) / (a + b);
        assert!((g.value(o.out).data[0] - want).abs() <= 1e-6);
    }

    #[test]
    fn permuted_tokens_are_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..7).map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let mut perm = rows.clone();
        perm.reverse();
        perm.swap(0, 3);
        let run = |r: &[Vec<f64>]| {
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let mut g = Graph::<f64>::new();
            let x = g.input(rand_t(&mut rng, &[4, 2, 2], 1.0));
            let src = g.input(canonical_token_rows(r).unwrap());
            let p = vars(&mut g, &mut rng, 4, 4, 5);
            let o = multi_head_attention(&mut g, x, Some(src), &p, 2).unwrap();
            g.value(o.out).data.clone()
        };
        assert_eq!(
            run(&rows).iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            run(&perm).iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}
