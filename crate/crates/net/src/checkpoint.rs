//! Checkpoint directories: flat f64 containers plus a JSON manifest.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use relit_core::io::{TensorContainer, TensorData};

use crate::error::{NetError, NetResult};
use crate::model::{ParamEntry, RelightNetConfig, RelightNetParams};
use crate::optim::Adam;
use crate::real::Real;
use crate::tensor::Tensor;
use crate::train::{LogEntry, TrainConfig, TrainState};

pub const MANIFEST: &str = "manifest.json";
pub const PARAMS: &str = "params.rhtc";
pub const ADAM_M: &str = "adam_m.rhtc";
pub const ADAM_V: &str = "adam_v.rhtc";
pub const TEMPLATE: &str = "template.rhtc";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub version: u32,
    pub net: RelightNetConfig,
    pub train: TrainConfig,
    pub iteration: usize,
    pub adam_step: u64,
    pub max_offset: f64,
    pub params: Vec<ParamRecord>,
    pub log: Vec<LogEntry>,
}

fn flat<R: Real>(v: &[R]) -> NetResult<TensorContainer> {
    Ok(TensorContainer::f64(&[v.len()], v.iter().map(|x| x.f64()).collect())?)
}

fn read_flat<R: Real>(path: &Path, len: usize) -> NetResult<Vec<R>> {
    let t = TensorContainer::read(path)?;
    let TensorData::F64(v) = t.data else {
        return Err(NetError::Config(format!("{} is not an f64 container", path.display())));
    };
    if v.len() != len {
        return Err(NetError::Shape(format!("{} holds {} values, expected {len}", path.display(), v.len())));
    }
    Ok(v.into_iter().map(R::of).collect())
}

pub fn save<R: Real>(dir: &Path, state: &TrainState<R>) -> NetResult<()> {
    fs::create_dir_all(dir).map_err(|e| relit_core::Error::io(dir, e))?;
    let mut offset = 0;
    let params = state
        .params
        .entries
        .iter()
        .map(|e| {
            let r = ParamRecord {
                name: e.name.clone(),
                shape: e.tensor.shape.clone(),
                offset,
            };
            offset += e.tensor.len();
            r
        })
        .collect();
    flat(&state.params.flatten())?.write(&dir.join(PARAMS))?;
    flat(&state.adam.m)?.write(&dir.join(ADAM_M))?;
    flat(&state.adam.v)?.write(&dir.join(ADAM_V))?;
    flat(&state.template)?.write(&dir.join(TEMPLATE))?;
    let m = CheckpointManifest {
        version: CHECKPOINT_VERSION,
        net: state.net.clone(),
        train: state.config.clone(),
        iteration: state.iteration,
        adam_step: state.adam.step,
        max_offset: state.max_offset,
        params,
        log: state.log.clone(),
    };
    let path = dir.join(MANIFEST);
    fs::write(&path, serde_json::to_string_pretty(&m)?).map_err(|e| relit_core::Error::io(&path, e))?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> NetResult<CheckpointManifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| relit_core::Error::io(&path, e))?;
    let m: CheckpointManifest = serde_json::from_str(&text)?;
    if m.version != CHECKPOINT_VERSION {
        return Err(NetError::Config(format!("checkpoint version {} is not supported", m.version)));
    }
    m.net.validate()?;
    Ok(m)
}

fn unflatten<R: Real>(m: &CheckpointManifest, data: &[R]) -> NetResult<RelightNetParams<R>> {
    let mut entries = Vec::with_capacity(m.params.len());
    for r in &m.params {
        let n: usize = r.shape.iter().product();
        let slice = data
            .get(r.offset..r.offset + n)
            .ok_or_else(|| NetError::Shape(format!("parameter {} runs past the data", r.name)))?;
        entries.push(ParamEntry {
            name: r.name.clone(),
            tensor: Tensor::new(&r.shape, slice.to_vec())?,
        });
    }
    Ok(RelightNetParams { entries })
}

fn total(m: &CheckpointManifest) -> usize {
    m.params.iter().map(|r| r.shape.iter().product::<usize>()).sum()
}

/// Network config and parameters only, for inference.
pub fn load_params<R: Real>(dir: &Path) -> NetResult<(RelightNetConfig, RelightNetParams<R>)> {
    let m = read_manifest(dir)?;
    let data = read_flat(&dir.join(PARAMS), total(&m))?;
    Ok((m.net.clone(), unflatten(&m, &data)?))
}

/// Full training state, for resuming.
pub fn load<R: Real>(dir: &Path) -> NetResult<TrainState<R>> {
    let m = read_manifest(dir)?;
    let n = total(&m);
    let params = unflatten(&m, &read_flat(&dir.join(PARAMS), n)?)?;
    let template_len = 3 * m.net.uv_resolution * m.net.uv_resolution;
    Ok(TrainState {
        adam: Adam {
            config: m.train.adam.clone(),
            step: m.adam_step,
            m: read_flat(&dir.join(ADAM_M), n)?,
            v: read_flat(&dir.join(ADAM_V), n)?,
        },
        template: read_flat(&dir.join(TEMPLATE), template_len)?,
        params,
        net: m.net,
        config: m.train,
        iteration: m.iteration,
        max_offset: m.max_offset,
        log: m.log,
    })
}
