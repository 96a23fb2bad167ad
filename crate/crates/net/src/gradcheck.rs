//! Central-difference gradient checks in f64.

use crate::error::{NetError, NetResult};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameter index and entry of the worst mismatch.
    pub worst: (usize, usize),
}

/// `|a - n| / max(|a|, |n|, 1e-6 + 1e-3·max|n|)`; the floor keeps entries
/// whose gradient vanishes from dominating.
pub fn relative_error(analytic: f64, numeric: f64, scale: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-6 + 1e-3 * scale);
    (analytic - numeric).abs() / denom
}

fn eval<F>(params: &[Tensor<f64>], build: &F) -> NetResult<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> NetResult<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
    let out = build(&mut g, &vars)?;
    match g.value(out).data.as_slice() {
        [v] => Ok(*v),
        _ => Err(NetError::Shape("gradcheck target must be scalar".into())),
    }
}

/// Compares the tape gradient of `build` with central differences on up to
/// `max_entries` evenly spaced entries of each parameter.
pub fn gradcheck<F>(params: &[Tensor<f64>], build: F, step: f64, max_entries: usize) -> NetResult<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> NetResult<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
    let out = build(&mut g, &vars)?;
    g.backward(out)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        worst: (0, 0),
    };
    let mut work = params.to_vec();
    for (pi, v) in vars.iter().enumerate() {
        let n = params[pi].len();
        let analytic = g.grad(*v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
        let stride = n.div_ceil(max_entries.max(1)).max(1);
        let mut numeric = Vec::new();
        for e in (0..n).step_by(stride) {
            let orig = work[pi].data[e];
            work[pi].data[e] = orig + step;
            let up = eval(&work, &build)?;
            work[pi].data[e] = orig - step;
            let down = eval(&work, &build)?;
            work[pi].data[e] = orig;
            numeric.push((e, (up - down) / (2.0 * step)));
        }
        let scale = numeric.iter().map(|(_, d)| d.abs()).fold(0.0, f64::max);
        for (e, d) in numeric {
            let r = relative_error(analytic[e], d, scale);
            report.checked += 1;
            if r > report.max_rel_error || r.is_nan() {
                report.max_rel_error = r;
                report.worst = (pi, e);
            }
        }
    }
    Ok(report)
}
