use std::fmt;
use std::path::Path;

use serde_json::json;

use relit_core::dataset::{gen_dataset, relit_features, Dataset};
use relit_core::envlight::{EnvironmentMap, FrameTag, RigLighting};
use relit_core::io::{image_to_tensor, read_pfm, write_pfm};
use relit_core::metrics::{clamp_to_peak, psnr, ssim};
use relit_core::olat::olat_check;
use relit_core::scene::{Scene, SceneSpec, Split};
use relit_core::splat::{apply_prediction, composite, init_sheet, project, SplatConfig};
use relit_core::tracer::{diffuse_shading, render_oracle, TracedMesh};
use relit_net::checkpoint;
use relit_net::{evaluate, forward, train, Experiment, NetError, RelightNetConfig, TrainSet, TrainState};

use crate::{Cli, Command, FrameArgs};

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<relit_core::Error> for CliError {
    fn from(e: relit_core::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl From<NetError> for CliError {
    fn from(e: NetError) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| relit_core::Error::io(path, e).into())
}

fn scene_spec(cli: &Cli) -> CliResult<SceneSpec> {
    let mut spec = match &cli.config {
        Some(p) => SceneSpec::load(p)?,
        None => SceneSpec::default(),
    };
    if let Some(s) = cli.seed {
        spec.seed = s;
    }
    Ok(spec)
}

fn experiment(cli: &Cli) -> CliResult<Experiment> {
    let mut e = match &cli.config {
        Some(p) => Experiment::parse(&read_text(p)?)?,
        None => Experiment::default(),
    };
    if let Some(s) = cli.seed {
        e.net.seed = s;
        e.train.seed = s;
    }
    Ok(e)
}

/// The environment map and rig lighting a frame is shown under.
fn frame_lighting(scene: &Scene, args: &FrameArgs) -> CliResult<(EnvironmentMap, RigLighting)> {
    let tag = scene.schedule.frames.get(args.frame).ok_or_else(|| {
        CliError::Validation(format!("frame {} is outside the {}-frame schedule", args.frame, scene.schedule.len()))
    })?;
    let env = match (args.env, tag) {
        (Some(id), _) | (None, &FrameTag::Relit { env: id, .. }) => {
            if id >= scene.spec.env_count() {
                return Err(CliError::Validation(format!("env {id} does not exist")));
            }
            id
        }
        (None, FrameTag::Tracking) => {
            let l = &scene.spec.lighting;
            let uniform = EnvironmentMap::constant(l.env_rows, l.env_cols, [l.uniform_radiance; 3]);
            return Ok((uniform, scene.uniform_lighting()));
        }
    };
    let map = scene.env(env)?;
    let lighting = scene.env_lighting(&map)?;
    Ok((map, lighting))
}

fn check_compatible(net: &RelightNetConfig, ds: &Dataset) -> CliResult<()> {
    let s = &ds.manifest.spec;
    if net.uv_resolution != s.uv_resolution {
        return Err(CliError::Validation(format!(
            "network expects {}² UV maps, dataset has {}²",
            net.uv_resolution, s.uv_resolution
        )));
    }
    if (net.token_rows, net.token_cols) != (s.lighting.token_rows, s.lighting.token_cols) {
        return Err(CliError::Validation(format!(
            "network expects a {}×{} token grid, dataset has {}×{}",
            net.token_rows, net.token_cols, s.lighting.token_rows, s.lighting.token_cols
        )));
    }
    Ok(())
}

fn print(v: serde_json::Value) {
    println!("{v}");
}

pub fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Validation("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    match &cli.command {
        Command::Gen { out } => {
            let scene = Scene::build(scene_spec(&cli)?)?;
            let m = gen_dataset(&scene, out)?;
            print(json!({
                "frames": m.frames.len(),
                "train": m.relit(Split::Train).count(),
                "heldout": m.relit(Split::Heldout).count(),
                "peak": m.peak,
                "valid_texels": m.valid_texels,
            }));
        }
        Command::Features { frame, out, target } => {
            let scene = Scene::build(scene_spec(&cli)?)?;
            let (env, _) = frame_lighting(&scene, frame)?;
            let b = relit_features(&scene, frame.frame, &env)?;
            image_to_tensor(&b.stack.data).write(out)?;
            if let Some(t) = target {
                image_to_tensor(&b.target).write(t)?;
            }
            print(json!({"frame": frame.frame, "channels": b.stack.data.channels, "valid_texels": b.stack.mask.count()}));
        }
        Command::Shade { frame, out } => {
            let scene = Scene::build(scene_spec(&cli)?)?;
            let (_, lighting) = frame_lighting(&scene, frame)?;
            let mesh = scene.mesh_at(frame.frame)?;
            let traced = TracedMesh::new(&mesh, &scene.template.face_uvs);
            let d = diffuse_shading(&traced, &scene.map, &scene.rig, &lighting)?;
            write_pfm(out, &d)?;
            print(json!({"frame": frame.frame, "max": d.max_value()}));
        }
        Command::Oracle { frame, camera, out } => {
            let scene = Scene::build(scene_spec(&cli)?)?;
            let cams = scene.all_cameras();
            let cam = cams
                .get(*camera)
                .ok_or_else(|| CliError::Validation(format!("camera {camera} does not exist ({} cameras)", cams.len())))?;
            let (_, lighting) = frame_lighting(&scene, frame)?;
            let mesh = scene.mesh_at(frame.frame)?;
            let traced = TracedMesh::new(&mesh, &scene.template.face_uvs);
            let img = render_oracle(&traced, &scene.brdf, &scene.rig, &lighting, cam)?.image;
            write_pfm(out, &img)?;
            print(json!({"frame": frame.frame, "camera": camera, "max": img.max_value()}));
        }
        Command::Train { dataset, out, resume } => {
            let exp = experiment(&cli)?;
            let ds = Dataset::open(dataset)?;
            let set = TrainSet::<f32>::from_dataset(&ds, Split::Train)?;
            let mut state = if *resume {
                let mut s = checkpoint::load::<f32>(out)?;
                s.config.iterations = exp.train.iterations.max(s.iteration);
                s
            } else {
                TrainState::new(exp.net.clone(), exp.train.clone(), &set)?
            };
            check_compatible(&state.net, &ds)?;
            train(&mut state, &set, Some(out))?;
            checkpoint::save(out, &state)?;
            let held = TrainSet::<f32>::from_dataset(&ds, Split::Heldout)?;
            let r = evaluate(&state.params, &state.net, &held.examples)?;
            print(json!({
                "iterations": state.iteration,
                "final_loss": state.log.last().map(|e| e.loss),
                "heldout_l1": r.model_l1,
                "baseline_l1": r.baseline_l1,
                "ratio": r.model_l1 / r.baseline_l1,
            }));
        }
        Command::Relight {
            dataset,
            checkpoint: ckpt,
            frame,
            env,
            camera,
            out,
            reference,
        } => {
            let ds = Dataset::open(dataset)?;
            let scene = Scene::build(ds.manifest.spec.clone())?;
            let (net, params) = checkpoint::load_params::<f32>(ckpt)?;
            let manifest = checkpoint::read_manifest(ckpt)?;
            check_compatible(&net, &ds)?;
            let args = FrameArgs { frame: *frame, env: *env };
            let (env_map, lighting) = frame_lighting(&scene, &args)?;
            let cams = scene.all_cameras();
            let n_input = scene.spec.cameras.input.len();
            let cam_index = camera.unwrap_or(n_input + scene.spec.cameras.target);
            let cam = cams
                .get(cam_index)
                .ok_or_else(|| CliError::Validation(format!("camera {cam_index} does not exist ({} cameras)", cams.len())))?;

            let bundle = relit_features(&scene, *frame, &env_map)?;
            let raw = forward(&params, &net, &bundle.stack, &ds.tokens(&env_map)?)?;
            let mesh = scene.mesh_at(*frame)?;
            let mut sheet = init_sheet(&mesh, &scene.map)?;
            sheet.max_offset = manifest.max_offset;
            let sheet = apply_prediction(&sheet, &raw)?;
            let cfg = SplatConfig::default();
            let img = composite(&project(&sheet, cam, &cfg), cam.width, cam.height, &cfg).image;
            write_pfm(out, &img)?;

            let traced = TracedMesh::new(&mesh, &scene.template.face_uvs);
            let oracle = render_oracle(&traced, &scene.brdf, &scene.rig, &lighting, cam)?.image;
            if let Some(r) = reference {
                write_pfm(r, &oracle)?;
            }
            let peak = ds.manifest.peak;
            let (a, b) = (clamp_to_peak(&img, peak), clamp_to_peak(&oracle, peak));
            let p = psnr(&a, &b, peak)?;
            print(json!({
                "frame": frame,
                "camera": cam_index,
                "psnr_db": p.db,
                "psnr_capped": p.capped,
                "ssim": ssim(&a, &b, peak)?,
            }));
        }
        Command::Metrics { a, b, peak } => {
            let (a, b) = (read_pfm(a)?, read_pfm(b)?);
            let (a, b) = (clamp_to_peak(&a, *peak), clamp_to_peak(&b, *peak));
            let p = psnr(&a, &b, *peak)?;
            print(json!({
                "psnr_db": p.db,
                "psnr_capped": p.capped,
                "ssim": ssim(&a, &b, *peak)?,
            }));
        }
        Command::OlatCheck {
            leds,
            frame,
            env,
            camera,
            tolerance,
        } => {
            let mut spec = scene_spec(&cli)?;
            if let Some(n) = leds {
                spec.rig.leds = *n;
            }
            let scene = Scene::build(spec)?;
            let cams = scene.all_cameras();
            let cam = cams
                .get(*camera)
                .ok_or_else(|| CliError::Validation(format!("camera {camera} does not exist")))?;
            let (_, lighting) = frame_lighting(&scene, &FrameArgs { frame: *frame, env: Some(*env) })?;
            let r = olat_check(&scene, *frame, &lighting, cam)?;
            print(serde_json::to_value(&r).map_err(|e| CliError::Runtime(e.to_string()))?);
            println!("max relative error {:.3e}", r.max_rel_error);
            if !(r.max_rel_error <= *tolerance) {
                return Err(CliError::Runtime(format!(
                    "recombination error {:.3e} exceeds {tolerance:.1e}",
                    r.max_rel_error
                )));
            }
        }
    }
    Ok(())
}
