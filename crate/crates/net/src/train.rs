//! Texel-space training loop.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use relit_core::dataset::{Dataset, Sample};
use relit_core::envlight::{EnvTokens, EnvironmentMap};
use relit_core::featmaps::FeatureSlot;
use relit_core::scene::{Scene, Split};
use relit_core::splat::init_sheet;

use crate::attention::env_token_tensor;
use crate::checkpoint;
use crate::error::{NetError, NetResult};
use crate::graph::{sigmoid, softplus, Graph, Var};
use crate::loss::{blend_weight, prediction_heads, train_loss, warmup_loss, LossWeights};
use crate::model::{forward_graph, image_to_chw, init_params, ParamSource, RelightNetConfig, RelightNetParams};
use crate::optim::{Adam, AdamConfig};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Pure warm-up before `warmup_start`, pure train loss from `warmup_end`.
    pub warmup_start: usize,
    pub warmup_end: usize,
    pub adam: AdamConfig,
    pub loss: LossWeights,
    /// 0 disables periodic checkpoints.
    pub checkpoint_every: usize,
    pub log_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 6000,
            warmup_start: 400,
            warmup_end: 500,
            adam: AdamConfig::default(),
            loss: LossWeights::default(),
            checkpoint_every: 0,
            log_every: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> NetResult<()> {
        self.loss.validate()?;
        if self.warmup_start >= self.warmup_end {
            return Err(NetError::Config(format!(
                "warm-up window [{}, {}] is empty",
                self.warmup_start, self.warmup_end
            )));
        }
        let a = &self.adam;
        if !(a.learning_rate > 0.0) || !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return Err(NetError::Config("invalid Adam settings".into()));
        }
        Ok(())
    }
}

/// Network and training settings read from an experiment file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Experiment {
    pub net: RelightNetConfig,
    pub train: TrainConfig,
}

impl Experiment {
    pub fn parse(text: &str) -> NetResult<Self> {
        let e: Self = serde_json::from_str(text)?;
        e.net.validate()?;
        e.train.validate()?;
        Ok(e)
    }
}

/// One relit frame in channel-major form.
#[derive(Debug, Clone)]
pub struct TrainExample<R: Real> {
    pub frame: usize,
    pub env: usize,
    pub input: Tensor<R>,
    pub tokens: Tensor<R>,
    /// `[3, H, W]` baked radiance.
    pub target: Vec<R>,
    pub mask: Vec<bool>,
}

impl<R: Real> TrainExample<R> {
    pub fn from_sample(s: &Sample) -> NetResult<Self> {
        if s.target.channels != 3 || s.target.width != s.stack.width() || s.target.height != s.stack.height() {
            return Err(NetError::Shape("target does not match the feature stack".into()));
        }
        Ok(Self {
            frame: s.frame,
            env: s.env,
            input: image_to_chw(&s.stack.data)?,
            tokens: env_token_tensor(&s.tokens)?,
            target: image_to_chw::<R>(&s.target)?.data,
            mask: s.stack.mask.bits.clone(),
        })
    }

    fn plane(&self, slot: FeatureSlot) -> &[R] {
        let hw = self.mask.len();
        let r = slot.channels();
        &self.input.data[r.start * hw..r.end * hw]
    }
}

#[derive(Debug, Clone)]
pub struct TrainSet<R: Real> {
    pub examples: Vec<TrainExample<R>>,
    /// Tokens of the uniformly lit environment used during warm-up.
    pub uniform_tokens: Tensor<R>,
    /// Bound on Gaussian center offsets.
    pub max_offset: f64,
}

impl<R: Real> TrainSet<R> {
    pub fn new(examples: Vec<TrainExample<R>>, uniform: &EnvTokens, max_offset: f64) -> NetResult<Self> {
        if examples.is_empty() {
            return Err(NetError::Config("training set is empty".into()));
        }
        if !(max_offset > 0.0) {
            return Err(NetError::Config(format!("max offset {max_offset} must be positive")));
        }
        Ok(Self {
            examples,
            uniform_tokens: env_token_tensor(uniform)?,
            max_offset,
        })
    }

    /// Loads one split; the offset bound is twice the median base scale of
    /// the first frame's Gaussians.
    pub fn from_dataset(ds: &Dataset, split: Split) -> NetResult<Self> {
        let examples = ds
            .samples(split)?
            .iter()
            .map(TrainExample::from_sample)
            .collect::<NetResult<Vec<_>>>()?;
        let l = &ds.manifest.spec.lighting;
        let uniform = EnvironmentMap::constant(l.env_rows, l.env_cols, [l.uniform_radiance; 3]);
        let scene = Scene::build(ds.manifest.spec.clone())?;
        let sheet = init_sheet(&scene.mesh_at(0)?, &scene.map)?;
        Self::new(examples, &ds.tokens(&uniform)?, sheet.max_offset)
    }

    /// Per-texel mean albedo feature, the warm-up color target.
    pub fn template_colors(&self) -> Vec<R> {
        let n = self.examples[0].target.len();
        let mut acc = vec![0.0; n];
        for e in &self.examples {
            for (a, v) in acc.iter_mut().zip(e.plane(FeatureSlot::Albedo)) {
                *a += v.f64();
            }
        }
        let k = self.examples.len() as f64;
        acc.into_iter().map(|v| R::of(v / k)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub iteration: usize,
    pub loss: f64,
    pub blend: f64,
}

#[derive(Debug, Clone)]
pub struct TrainState<R: Real> {
    pub net: RelightNetConfig,
    pub config: TrainConfig,
    pub iteration: usize,
    pub params: RelightNetParams<R>,
    pub adam: Adam<R>,
    pub template: Vec<R>,
    pub max_offset: f64,
    pub log: Vec<LogEntry>,
}

impl<R: Real> TrainState<R> {
    pub fn new(net: RelightNetConfig, config: TrainConfig, set: &TrainSet<R>) -> NetResult<Self> {
        net.validate()?;
        config.validate()?;
        let params = init_params(&net)?;
        let adam = Adam::new(config.adam.clone(), &params);
        Ok(Self {
            net,
            adam,
            params,
            template: set.template_colors(),
            max_offset: set.max_offset,
            config,
            iteration: 0,
            log: Vec::new(),
        })
    }

    pub fn loss_curve(&self) -> Vec<f64> {
        self.log.iter().map(|e| e.loss).collect()
    }
}

fn branch<R: Real>(
    g: &mut Graph<R>,
    state: &TrainState<R>,
    input: Var,
    tokens: &Tensor<R>,
) -> NetResult<(Vec<Var>, crate::loss::Heads)> {
    let t = g.input(tokens.clone());
    let mut src = ParamSource::bind(&state.params, true);
    let raw = forward_graph(g, &mut src, &state.net, input, t)?;
    let heads = prediction_heads(g, raw, state.max_offset)?;
    Ok((src.vars().to_vec(), heads))
}

/// Objective at the state's current iteration for one example: warm-up with
/// uniform tokens, train loss with the example's tokens, or their blend.
pub fn objective<R: Real>(g: &mut Graph<R>, state: &TrainState<R>, set: &TrainSet<R>, ex: &TrainExample<R>) -> NetResult<(Var, Vec<Vec<Var>>)> {
    let c = &state.config;
    let w = blend_weight(state.iteration, c.warmup_start, c.warmup_end);
    let input = g.input(ex.input.clone());
    let mut terms = Vec::new();
    let mut vars = Vec::new();
    if w < 1.0 {
        let (v, h) = branch(g, state, input, &set.uniform_tokens)?;
        terms.push((warmup_loss(g, &h, &state.template, &ex.mask, &c.loss)?, R::of(1.0 - w)));
        vars.push(v);
    }
    if w > 0.0 {
        let (v, h) = branch(g, state, input, &ex.tokens)?;
        terms.push((train_loss(g, &h, &ex.target, &ex.mask, &c.loss)?.total, R::of(w)));
        vars.push(v);
    }
    Ok((g.weighted_sum(&terms)?, vars))
}

/// Example drawn at iteration `i`; independent of earlier draws so a
/// resumed run follows the same sequence.
pub fn example_index(seed: u64, i: usize, n: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng.gen_range(0..n)
}

/// Runs until `state.iteration == state.config.iterations`. A non-finite
/// loss writes a checkpoint (when `checkpoints` is set) and aborts.
pub fn train<R: Real>(state: &mut TrainState<R>, set: &TrainSet<R>, checkpoints: Option<&Path>) -> NetResult<()> {
    state.config.validate()?;
    if set.examples.is_empty() {
        return Err(NetError::Config("training set is empty".into()));
    }
    while state.iteration < state.config.iterations {
        let i = state.iteration;
        let ex = &set.examples[example_index(state.config.seed, i, set.examples.len())];
        let mut g = Graph::new();
        let (loss, branches) = objective(&mut g, state, set, ex)?;
        let value = g.value(loss).data[0].f64();
        if !value.is_finite() {
            if let Some(dir) = checkpoints {
                checkpoint::save(dir, state)?;
            }
            return Err(NetError::Diverged { iteration: i });
        }
        g.backward(loss)?;
        let grads: Vec<Vec<R>> = (0..state.params.entries.len())
            .map(|p| {
                let mut acc = vec![R::zero(); state.params.entries[p].tensor.len()];
                for vars in &branches {
                    if let Some(gr) = g.grad(vars[p]) {
                        acc.iter_mut().zip(gr).for_each(|(a, b)| *a += *b);
                    }
                }
                acc
            })
            .collect();
        let refs: Vec<Option<&[R]>> = grads.iter().map(|v| Some(v.as_slice())).collect();
        state.adam.update(&mut state.params, &refs)?;
        let blend = blend_weight(i, state.config.warmup_start, state.config.warmup_end);
        state.log.push(LogEntry {
            iteration: i,
            loss: value,
            blend,
        });
        state.iteration += 1;
        let c = &state.config;
        if c.log_every > 0 && state.iteration % c.log_every == 0 {
            log::info!("iteration {} loss {value:.6} blend {blend:.2}", state.iteration);
        }
        if let Some(dir) = checkpoints {
            if c.checkpoint_every > 0 && state.iteration % c.checkpoint_every == 0 {
                checkpoint::save(dir, state)?;
            }
        }
    }
    Ok(())
}

/// Raw `[14, H, W]` prediction.
pub fn predict<R: Real>(params: &RelightNetParams<R>, net: &RelightNetConfig, input: &Tensor<R>, tokens: &Tensor<R>) -> NetResult<Tensor<R>> {
    let mut g = Graph::new();
    let x = g.input(input.clone());
    let t = g.input(tokens.clone());
    let mut src = ParamSource::bind(params, false);
    let raw = forward_graph(&mut g, &mut src, net, x, t)?;
    Ok(g.value(raw).clone())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: usize,
    /// Mean masked L1 of predicted colors against the targets.
    pub model_l1: f64,
    /// Same for the diffuse-only prediction `albedo · d / π` from the stack.
    pub baseline_l1: f64,
    /// Mean opacity over masked texels.
    pub mean_opacity: f64,
}

/// `albedo · d / π` from an example's own features.
pub fn lambert_baseline<R: Real>(ex: &TrainExample<R>) -> Vec<f64> {
    ex.plane(FeatureSlot::Albedo)
        .iter()
        .zip(ex.plane(FeatureSlot::Diffuse))
        .map(|(a, d)| a.f64() * d.f64() / std::f64::consts::PI)
        .collect()
}

fn masked_l1(pred: &[f64], target: &[f64], mask: &[bool]) -> f64 {
    let hw = mask.len();
    let (mut s, mut n) = (0.0, 0usize);
    for c in 0..pred.len() / hw {
        for (i, m) in mask.iter().enumerate() {
            if *m {
                s += (pred[c * hw + i] - target[c * hw + i]).abs();
                n += 1;
            }
        }
    }
    s / n.max(1) as f64
}

pub fn evaluate<R: Real>(params: &RelightNetParams<R>, net: &RelightNetConfig, examples: &[TrainExample<R>]) -> NetResult<EvalReport> {
    if examples.is_empty() {
        return Err(NetError::Config("nothing to evaluate".into()));
    }
    let (mut model, mut base, mut opacity) = (0.0, 0.0, 0.0);
    for ex in examples {
        if !ex.mask.iter().any(|m| *m) {
            return Err(NetError::EmptyMask);
        }
        let raw = predict(params, net, &ex.input, &ex.tokens)?;
        let hw = ex.mask.len();
        let color: Vec<f64> = raw.data[11 * hw..14 * hw].iter().map(|v| softplus(*v).f64()).collect();
        let target: Vec<f64> = ex.target.iter().map(|v| v.f64()).collect();
        model += masked_l1(&color, &target, &ex.mask);
        base += masked_l1(&lambert_baseline(ex), &target, &ex.mask);
        let o: Vec<f64> = raw.data[10 * hw..11 * hw].iter().map(|v| sigmoid(*v).f64()).collect();
        opacity += masked_l1(&o, &vec![0.0; hw], &ex.mask);
    }
    let k = examples.len() as f64;
    Ok(EvalReport {
        samples: examples.len(),
        model_l1: model / k,
        baseline_l1: base / k,
        mean_opacity: opacity / k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_draws_are_stable() {
        let a: Vec<usize> = (0..50).map(|i| example_index(3, i, 7)).collect();
        let b: Vec<usize> = (0..50).map(|i| example_index(3, i, 7)).collect();
        assert_eq!(a, b);
        assert!(a.iter().all(|i| *i < 7));
        assert!(a.iter().any(|i| *i != a[0]));
    }

    #[test]
    fn window_must_be_ordered() {
        let c = TrainConfig {
            warmup_start: 10,
            warmup_end: 10,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        assert!(Experiment::parse(r#"{"train": {"iterations": 3}, "bogus": 1}"#).is_err());
        let e = Experiment::parse(r#"{"train": {"iterations": 3}}"#).unwrap();
        assert_eq!(e.train.iterations, 3);
    }
}
