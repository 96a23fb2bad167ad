//! Randomized finite-difference checks over every differentiable op, the
//! attention block, both losses and a toy network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attention::{multi_head_attention, AttentionVars};
use crate::error::NetResult;
use crate::gradcheck::{gradcheck, GradCheckReport, DEFAULT_STEP};
use crate::graph::{Graph, Var};
use crate::loss::{prediction_heads, train_loss, warmup_loss, LossWeights};
use crate::model::{forward_graph, init_params, ParamSource, RelightNetConfig};
use crate::tensor::Tensor;

pub const TOLERANCE: f64 = 1e-3;
pub const SEEDS: [u64; 5] = [11, 12, 13, 14, 15];

#[derive(Debug, Clone)]
pub struct CaseResult {
    pub op: &'static str,
    pub seed: u64,
    pub report: GradCheckReport,
}

impl CaseResult {
    pub fn passed(&self) -> bool {
        self.report.checked > 0 && self.report.max_rel_error <= TOLERANCE
    }
}

pub type Group = fn(u64, &mut Vec<CaseResult>) -> NetResult<()>;

/// Named groups of cases; each runs once per seed.
pub const GROUPS: [(&str, Group); 9] = [
    ("conv2d", conv2d),
    ("pool_and_upsample", pool_and_upsample),
    ("concat_and_slice", concat_and_slice),
    ("elementwise", elementwise),
    ("matmul", matmul_all_layouts),
    ("softmax_rows", softmax_rows),
    ("reductions", reductions),
    ("attention", attention),
    ("losses", losses),
];

pub fn run_group(group: Group, seeds: &[u64]) -> NetResult<Vec<CaseResult>> {
    let mut out = Vec::new();
    for s in seeds {
        group(*s, &mut out)?;
    }
    Ok(out)
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rand_t(r: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| r.gen_range(lo..hi)).collect()).expect("shape matches data")
}

/// Random linear functional of `x`, so every output entry gets a distinct weight.
fn project(g: &mut Graph<f64>, x: Var, seed: u64) -> NetResult<Var> {
    let n = g.value(x).len();
    let mut r = rng(seed ^ 0xabcd);
    let flat = g.reshape(x, &[1, n])?;
    let w = g.input(rand_t(&mut r, &[n, 1], -1.0, 1.0));
    g.matmul(flat, w, false, false)
}

fn check<F>(out: &mut Vec<CaseResult>, op: &'static str, seed: u64, params: &[Tensor<f64>], f: F) -> NetResult<()>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> NetResult<Var>,
{
    let report = gradcheck(params, f, DEFAULT_STEP, 64)?;
    out.push(CaseResult { op, seed, report });
    Ok(())
}

fn conv2d(s: u64, out: &mut Vec<CaseResult>) -> NetResult<()> {
    let mut r = rng(s);
    let (ci, co, h, w) = (r.gen_range(1..4), r.gen_range(1..4), r.gen_range(2..6), r.gen_range(2..6));
    let k = if s % 2 == 0 { 1 } else { 3 };
    let p = [rand_t(&mut r, &[ci, h, w], -1.0, 1.0), rand_t(&mut r, &[co, ci, k, k], -1.0, 1.0), rand_t(&mut r, &[co], -1.0, 1.0)];
    check(out, "conv2d", s, &p, |g, v| {
        let y = g.conv2d(v[0], v[1], v[2])?;
        project(g, y, s)
    })
}

fn pool_and_upsample(s: u64, out: &mut Vec<CaseResult>) -> NetResult<()> {
    let mut r = rng(s);
    let (c, h, w) = (r.gen_range(1..4), 2 * r.gen_range(1..4), 2 * r.gen_range(1..4));
    let p = [rand_t(&mut r, &[c, h, w], -1.0, 1.0)];
    check(out, "avg_pool2", s, &p, |g, v| {
        let y = g.avg_pool2(v[0])?;
        project(g, y, s)
    })?;
    check(out, "upsample2", s, &p, |g, v| {
        let y = g.upsample2(v[0])?;
        project(g, y, s)
    })
}

fn concat_and_slice(s: u64, out: &mut Vec<CaseResult>) -> NetResult<()> {
    let mut r = rng(s);
    let (a, b, cols) = (r.gen_range(1..4), r.gen_range(1..4), r.gen_range(2..6));
    let p = [rand_t(&mut r, &[a, cols], -1.0, 1.0), rand_t(&mut r, &[b, cols], -1.0, 1.0)];
    check(out, "concat_rows", s, &p, |g, v| {
        let y = g.concat_rows(&[v[0], v[1]])?;
        let y = g.slice_rows(y, 1, a + b - 1)?;
        project(g, y, s)
    })?;
    let q = [rand_t(&mut r, &[cols, a], -1.0, 1.0), rand_t(&mut r, &[cols, b], -1.0, 1.0)];
    check(out, "concat_cols", s, &q, |g, v| {
        let y = g.concat_cols(&[v[0], v[1]])?;
        let y = g.slice_cols(y, 1, a + b - 1)?;
        project(g, y, s)
    })
}

fn elementwise(s: u64, out: &mut Vec<CaseResult>) -> NetResult<()> {
    let mut r = rng(s);
    let shape = [r.gen_range(1..4), r.gen_range(1..5)];
    let p = [rand_t(&mut r, &shape, -3.0, 3.0), rand_t(&mut r, &shape, -3.0, 3.0)];
    check(out, "add", s, &p, |g, v| {
        let y = g.add(v[0], v[1])?;
        project(g, y, s)
    })?;
    check(out, "scale", s, &p[..1], |g, v| {
        let y = g.scale(v[0], -1.7);
        project(g, y, s)
    })?;
    type Act = fn(&mut Graph<f64>, Var) -> Var;
    let acts: [(&str, Act); 4] = [
        ("silu", |g, x| g.silu(x)),
        ("tanh", |g, x| g.tanh(x)),
        ("sigmoid", |g, x| g.sigmoid(x)),
        ("softplus", |g, x| g.softplus(x)),
    ];
    for (name, f) in acts {
        check(out, name, s, &p[..1], |g, v| {
            let y = f(g, v[0]);
            project(g, y, s)
        })?;
    }
    // keep clear of the clamp corners, where the derivative jumps
    let mut e = rand_t(&mut r, &shape, -1.8, 1.8);
    e.data.iter_mut().step_by(3).for_each(|v| *v = v.signum() * (2.3 + v.abs() * 0.3));
    check(out, "exp_clamp", s, &[e], |g, v| {
        let y = g.exp_clamp(v[0], -2.0, 2.0);
        project(g, y, s)
    })
}

fn matmul_all_layouts(s: u64, out: &mut Vec<CaseResult>) -> NetResult<()> {
    let mut r = rng(s);
    let (m, n, k) = (r.gen_range(1..5), r.gen_range(1..5), r.gen_range(1..5));
    for ta in [false, true] {
        for tb in [false, true] {
            let a = if ta { [k, m] } else { [m, k] };
            let b = if tb { [n, k] } else { [k, n] };
            let p = [rand_t(&mut r, &a, -1.0, 1.0), rand_t(&mut r, &b, -1.0, 1.0)];
            check(out, "matmul", s, &p, |g, v| {
                let y = g.matmul(v[0], v[1], ta, tb)?;
                project(g, y, s)
            })?;
        }
    }
    Ok(())
}

fn softmax_rows(s: u64, out: &mut Vec<CaseResult>) -> NetResult<()> {
    let mut r = rng(s);
    let shape = [r.gen_range(1..4), r.gen_range(2..6)];
    let p = [rand_t(&mut r, &shape, -2.0, 2.0)];
    check(out, "softmax_rows", s, &p, |g, v| {
        let y = g.softmax_rows(v[0])?;
        project(g, y, s)
    })
}

fn reductions(s: u64, out: &mut Vec<CaseResult>) -> NetResult<()> {
    let mut r = rng(s);
    let (c, hw) = (r.gen_range(1..4), r.gen_range(2..8));
    let mut mask: Vec<bool> = (0..hw).map(|_| r.gen_bool(0.7)).collect();
    mask[0] = true;
    let x = rand_t(&mut r, &[c, hw], -1.0, 1.0);
    // targets 0.3 away keep |x - t| smooth
    let t: Vec<f64> = x.data.iter().map(|v| v + if r.gen_bool(0.5) { 0.3 } else { -0.3 }).collect();
    check(out, "masked_mean_abs", s, &[x.clone()], |g, v| g.masked_mean_abs(v[0], t.clone(), mask.clone()))?;
    check(out, "masked_mean_sq", s, &[x.clone()], |g, v| g.masked_mean_sq(v[0], t.clone(), mask.clone()))?;
    let p = [rand_t(&mut r, &[1], -1.0, 1.0), rand_t(&mut r, &[1], -1.0, 1.0)];
    check(out, "weighted_sum", s, &p, |g, v| g.weighted_sum(&[(v[0], 0.7), (v[1], -2.5)]))?;
    let q = [rand_t(&mut r, &[2, 3, 2], -1.0, 1.0)];
    check(out, "reshape", s, &q, |g, v| {
        let y = g.reshape(v[0], &[3, 4])?;
        project(g, y, s)
    })
}

fn attention_params(r: &mut ChaCha8Rng, c: usize, dk: usize, h: usize, w: usize) -> Vec<Tensor<f64>> {
    let m = r.gen_range(2..6);
    vec![
        rand_t(r, &[c, h, w], -1.0, 1.0),
        rand_t(r, &[c, c], -0.7, 0.7),
        rand_t(r, &[c, dk], -0.7, 0.7),
        rand_t(r, &[c, dk], -0.7, 0.7),
        rand_t(r, &[c, c], -0.7, 0.7),
        rand_t(r, &[m, dk], -1.0, 1.0),
    ]
}

fn attention(s: u64, out: &mut Vec<CaseResult>) -> NetResult<()> {
    let mut r = rng(s);
    let heads = [1, 2, 4][s as usize % 3];
    let c = heads * r.gen_range(1..3);
    let (h, w, dk) = (r.gen_range(1..4), r.gen_range(1..4), r.gen_range(2..6));
    let pc = attention_params(&mut r, c, dk, h, w);
    check(out, "cross_attention", s, &pc, |g, v| {
        let p = AttentionVars { wq: v[1], wk: v[2], wv: v[3], wo: v[4] };
        let y = multi_head_attention(g, v[0], Some(v[5]), &p, heads)?.out;
        project(g, y, s)
    })?;
    let ps = attention_params(&mut r, c, c, h, w);
    check(out, "self_attention", s, &ps[..5], |g, v| {
        let p = AttentionVars { wq: v[1], wk: v[2], wv: v[3], wo: v[4] };
        let y = multi_head_attention(g, v[0], None, &p, heads)?.out;
        project(g, y, s)
    })
}

fn losses(s: u64, out: &mut Vec<CaseResult>) -> NetResult<()> {
    let w = LossWeights::default();
    let mut r = rng(s);
    let (h, wd) = (r.gen_range(1..4), r.gen_range(2..4));
    let hw = h * wd;
    let raw = rand_t(&mut r, &[14, h, wd], -1.5, 1.5);
    let mut mask: Vec<bool> = (0..hw).map(|_| r.gen_bool(0.8)).collect();
    mask[hw - 1] = true;
    // colors sit in (0.2, 1.9); targets far from them
    let target: Vec<f64> = (0..3 * hw).map(|_| if r.gen_bool(0.5) { 0.05 } else { 2.5 }).collect();
    let tem: Vec<f64> = (0..3 * hw).map(|_| r.gen_range(0.0..1.0)).collect();
    check(out, "train_loss", s, &[raw.clone()], |g, v| {
        let heads = prediction_heads(g, v[0], 0.05)?;
        Ok(train_loss(g, &heads, &target, &mask, &w)?.total)
    })?;
    check(out, "warmup_loss", s, &[raw], |g, v| {
        let heads = prediction_heads(g, v[0], 0.05)?;
        warmup_loss(g, &heads, &tem, &mask, &w)
    })
}

/// Training loss of a 4×4 network through every block, checked on a few
/// entries of each parameter.
pub fn toy_network() -> NetResult<CaseResult> {
    let cfg = RelightNetConfig {
        uv_resolution: 4,
        token_rows: 1,
        token_cols: 3,
        seed: 21,
        ..Default::default()
    };
    let mut params = init_params::<f64>(&cfg)?;
    let mut r = rng(22);
    // a zero head would hide every upstream gradient
    if let Some(head) = params.get_mut("b18.head.w") {
        head.data.iter_mut().for_each(|v| *v = r.gen_range(-0.3..0.3));
    }
    let x = rand_t(&mut r, &[24, 4, 4], -1.0, 1.0);
    let tokens = rand_t(&mut r, &[3, 67], -1.0, 1.0);
    let target: Vec<f64> = (0..48).map(|i| if i % 2 == 0 { 0.01 } else { 3.0 }).collect();
    let mut mask = vec![true; 16];
    mask[5] = false;
    let tensors: Vec<Tensor<f64>> = params.entries.iter().map(|e| e.tensor.clone()).collect();
    let w = LossWeights::default();
    let report = gradcheck(
        &tensors,
        |g, v| {
            let xi = g.input(x.clone());
            let ti = g.input(tokens.clone());
            let mut src = ParamSource::bind_vars(&params, v);
            let raw = forward_graph(g, &mut src, &cfg, xi, ti)?;
            let heads = prediction_heads(g, raw, 0.05)?;
            Ok(train_loss(g, &heads, &target, &mask, &w)?.total)
        },
        DEFAULT_STEP,
        4,
    )?;
    Ok(CaseResult { op: "toy_network", seed: 21, report })
}
