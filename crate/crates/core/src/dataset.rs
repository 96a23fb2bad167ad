//! Dataset generation: oracle renders, target textures and feature stacks for
//! every frame of the capture schedule, plus the loader used for training.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::envlight::{env_tokens, EnvTokens, EnvironmentMap, FrameTag, RigLighting};
use crate::error::{Error, Result};
use crate::featmaps::{
    albedo_feature, assemble, coarse_normal_stack, hf_normal_feature, perturb_normals, position_map, view_encoding,
    FeatureStack, FEATURE_CHANNELS,
};
use crate::geom::PosedMesh;
use crate::image::{Image, Mask};
use crate::io::{
    image_from_tensor, image_to_tensor, mask_from_tensor, mask_to_tensor, read_pfm, save_template, surface_map_to_tensor,
    write_pfm, TensorContainer,
};
use crate::metrics::percentile;
use crate::scene::{Scene, SceneSpec, Split};
use crate::tracer::{bake_from_transport, render_from_transport, render_normals, LightTransport, TracedMesh, ViewSource};

pub const DATASET_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub index: usize,
    pub tag: FrameTag,
    /// Set on relit frames.
    pub split: Option<Split>,
    pub dir: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub spec: SceneSpec,
    pub frames: Vec<FrameRecord>,
    /// 99th percentile of the uniformly lit test-view foreground at frame 0.
    pub peak: f64,
    pub valid_texels: usize,
}

impl DatasetManifest {
    pub fn relit(&self, split: Split) -> impl Iterator<Item = &FrameRecord> {
        self.frames.iter().filter(move |f| f.split == Some(split))
    }
}

pub fn frame_dir(t: usize) -> String {
    format!("frames/{t:06}")
}

pub fn view_file(k: usize) -> String {
    format!("view_{k:02}.pfm")
}

pub fn normal_file(k: usize) -> String {
    format!("normal_{k:02}.pfm")
}

pub fn env_file(id: usize) -> String {
    format!("envs/env_{id:03}.pfm")
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Uniformly lit input views of a tracking frame.
pub struct TrackingCapture {
    pub mesh: PosedMesh,
    pub images: Vec<Image>,
    pub normals: Vec<Image>,
}

fn render_views(traced: &TracedMesh, scene: &Scene, cameras: &[CameraModel], lighting: &RigLighting) -> Vec<(Image, Mask)> {
    cameras
        .iter()
        .map(|cam| {
            let transport = LightTransport::pixels(traced, cam, &scene.rig);
            (render_from_transport(&transport, &scene.brdf, lighting, cam).image, transport.mask())
        })
        .collect()
}

fn noise_rng(seed: u64, frame: usize, view: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((frame as u64) << 16) | view as u64);
    rng
}

/// Feature stack and target texture of relit frame `t`.
pub struct RelitBundle {
    pub stack: FeatureStack,
    pub target: Image,
    pub lighting: RigLighting,
}

fn noisy_normals(traced: &TracedMesh, scene: &Scene, t: usize) -> Result<Vec<Image>> {
    let mut out = Vec::with_capacity(scene.spec.cameras.input.len());
    for (k, cam) in scene.spec.cameras.input.iter().enumerate() {
        let (mut n, mask) = render_normals(traced, cam);
        perturb_normals(&mut n, &mask, scene.spec.normal_noise, &mut noise_rng(scene.spec.seed, t, k))?;
        out.push(n);
    }
    Ok(out)
}

/// Re-renders the uniformly lit input views of frame `t`, as `gen_dataset` does.
pub fn capture_tracking(scene: &Scene, t: usize) -> Result<TrackingCapture> {
    let mesh = scene.mesh_at(t)?;
    let traced = TracedMesh::new(&mesh, &scene.template.face_uvs);
    let images = render_views(&traced, scene, &scene.spec.cameras.input, &scene.uniform_lighting())
        .into_iter()
        .map(|v| v.0)
        .collect();
    let normals = noisy_normals(&traced, scene, t)?;
    Ok(TrackingCapture { mesh, images, normals })
}

/// Features and target of frame `t` under `env`, with image-derived channels
/// taken from the frame's tracking capture.
pub fn relit_features(scene: &Scene, t: usize, env: &EnvironmentMap) -> Result<RelitBundle> {
    let tag = scene
        .schedule
        .frames
        .get(t)
        .ok_or_else(|| Error::invalid(format!("frame {t} is outside the {}-frame schedule", scene.schedule.len())))?;
    let tracking_frame = match tag {
        FrameTag::Relit { tracking_frame, .. } => *tracking_frame,
        FrameTag::Tracking => t,
    };
    let capture = capture_tracking(scene, tracking_frame)?;
    relit_bundle(scene, t, &scene.mesh_at(t)?, env, &capture)
}

fn relit_bundle(scene: &Scene, t: usize, mesh: &PosedMesh, env: &EnvironmentMap, tracking: &TrackingCapture) -> Result<RelitBundle> {
    let map = &scene.map;
    let valid = map.mask();
    let lighting = scene.env_lighting(env)?;
    let traced = TracedMesh::new(mesh, &scene.template.face_uvs);
    let transport = LightTransport::texels(&traced, map, &scene.rig);
    let diffuse = transport.diffuse(&lighting);
    let center = scene.target_camera().center();
    let target = bake_from_transport(&transport, &scene.brdf, &lighting, ViewSource::Point(center))?;

    let m2 = scene.mesh_at(t.saturating_sub(2))?;
    let m1 = scene.mesh_at(t.saturating_sub(1))?;
    let coarse = coarse_normal_stack(&[&m2, &m1, mesh], map)?;
    let prev = TracedMesh::new(&tracking.mesh, &scene.template.face_uvs);
    let inputs = &scene.spec.cameras.input;
    let hf = hf_normal_feature(&tracking.normals, inputs, &prev, map)?;
    let albedo = albedo_feature(&tracking.images, inputs, &prev, map)?;
    let p = position_map(mesh, map);
    let (gamma, _) = view_encoding(&center, &p, &valid)?;
    let stack = assemble(&coarse, &hf.map, &p, &albedo, &diffuse, &gamma, &valid)?;
    Ok(RelitBundle { stack, target, lighting })
}

/// Writes the dataset for `scene` into `out`. An `INCOMPLETE` marker stays in
/// place if generation fails part way.
pub fn gen_dataset(scene: &Scene, out: &Path) -> Result<DatasetManifest> {
    create_dir(out)?;
    let marker = out.join(INCOMPLETE_MARKER);
    std::fs::write(&marker, b"").map_err(|e| Error::io(&marker, e))?;
    create_dir(&out.join("scene"))?;
    create_dir(&out.join("envs"))?;

    write_json(&out.join("scene/spec.json"), &scene.spec)?;
    save_template(&scene.template, &out.join("scene/template.obj"), &out.join("scene/template.rig.json"))?;
    surface_map_to_tensor(&scene.map).write(&out.join("scene/surface_map.rhtc"))?;
    mask_to_tensor(&scene.map.mask()).write(&out.join("scene/mask.rhtc"))?;
    write_pfm(&out.join("scene/albedo.pfm"), &scene.brdf.albedo)?;
    for id in 0..scene.spec.env_count() {
        write_pfm(&out.join(env_file(id)), scene.env(id)?.image())?;
    }

    let cameras = scene.all_cameras();
    let n_input = scene.spec.cameras.input.len();
    let mut frames = Vec::with_capacity(scene.schedule.len());
    let mut tracking: Option<TrackingCapture> = None;
    let mut peak = None;
    for (t, tag) in scene.schedule.frames.iter().enumerate() {
        let dir = frame_dir(t);
        let abs = out.join(&dir);
        create_dir(&abs)?;
        let mesh = scene.mesh_at(t)?;
        let traced = TracedMesh::new(&mesh, &scene.template.face_uvs);
        let lighting = scene.lighting_for(tag)?;
        let views = render_views(&traced, scene, &cameras, &lighting);
        for (k, (img, _)) in views.iter().enumerate() {
            write_pfm(&abs.join(view_file(k)), img)?;
        }
        let split = match tag {
            FrameTag::Tracking => {
                if peak.is_none() {
                    let fg: Vec<f64> = views[n_input..]
                        .iter()
                        .flat_map(|(img, mask)| {
                            mask.bits
                                .iter()
                                .enumerate()
                                .filter(|(_, b)| **b)
                                .flat_map(move |(i, _)| img.data[3 * i..3 * i + 3].to_vec())
                        })
                        .collect();
                    peak = Some(percentile(&fg, 99.0));
                }
                let normals = noisy_normals(&traced, scene, t)?;
                for (k, n) in normals.iter().enumerate() {
                    write_pfm(&abs.join(normal_file(k)), n)?;
                }
                tracking = Some(TrackingCapture {
                    mesh,
                    images: views.into_iter().take(n_input).map(|v| v.0).collect(),
                    normals,
                });
                None
            }
            FrameTag::Relit { env, tracking_frame } => {
                let capture = tracking
                    .as_ref()
                    .filter(|c| c.mesh.frame_index == *tracking_frame)
                    .ok_or_else(|| Error::invalid(format!("relit frame {t} has no preceding tracking frame")))?;
                let bundle = relit_bundle(scene, t, &mesh, &scene.env(*env)?, capture)?;
                image_to_tensor(&bundle.stack.data).write(&abs.join("features.rhtc"))?;
                image_to_tensor(&bundle.target).write(&abs.join("target.rhtc"))?;
                write_json(&abs.join("lighting.json"), &bundle.lighting)?;
                Some(scene.split_of(*env))
            }
        };
        frames.push(FrameRecord {
            index: t,
            tag: *tag,
            split,
            dir,
        });
    }

    let manifest = DatasetManifest {
        version: DATASET_VERSION,
        spec: scene.spec.clone(),
        frames,
        peak: peak.unwrap_or(1.0).max(f64::MIN_POSITIVE),
        valid_texels: scene.map.valid_count(),
    };
    write_json(&out.join(MANIFEST), &manifest)?;
    std::fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
    Ok(manifest)
}

/// One relit frame ready for training or evaluation.
#[derive(Debug, Clone)]
pub struct Sample {
    pub frame: usize,
    pub env: usize,
    pub split: Split,
    pub stack: FeatureStack,
    pub target: Image,
    pub tokens: EnvTokens,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
    pub mask: Mask,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        if root.join(INCOMPLETE_MARKER).exists() {
            return Err(Error::invalid(format!("dataset at {} is incomplete", root.display())));
        }
        let path = root.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        if manifest.version != DATASET_VERSION {
            return Err(Error::invalid(format!("unsupported dataset version {}", manifest.version)));
        }
        let mask = mask_from_tensor(TensorContainer::read(&root.join("scene/mask.rhtc"))?)?;
        Ok(Self {
            root: root.to_path_buf(),
            manifest,
            mask,
        })
    }

    pub fn env(&self, id: usize) -> Result<EnvironmentMap> {
        EnvironmentMap::new(read_pfm(&self.root.join(env_file(id)))?)
    }

    pub fn tokens(&self, env: &EnvironmentMap) -> Result<EnvTokens> {
        let l = &self.manifest.spec.lighting;
        env_tokens(env, l.token_rows, l.token_cols)
    }

    pub fn frame(&self, t: usize) -> Result<&FrameRecord> {
        self.manifest
            .frames
            .get(t)
            .ok_or_else(|| Error::invalid(format!("frame {t} out of range")))
    }

    pub fn view_image(&self, t: usize, view: usize) -> Result<Image> {
        read_pfm(&self.root.join(&self.frame(t)?.dir).join(view_file(view)))
    }

    pub fn sample(&self, t: usize) -> Result<Sample> {
        let rec = self.frame(t)?;
        let (FrameTag::Relit { env, .. }, Some(split)) = (rec.tag, rec.split) else {
            return Err(Error::invalid(format!("frame {t} is not a relit frame")));
        };
        let dir = self.root.join(&rec.dir);
        let data = image_from_tensor(TensorContainer::read(&dir.join("features.rhtc"))?)?;
        if data.channels != FEATURE_CHANNELS {
            return Err(Error::invalid(format!("feature stack has {} channels", data.channels)));
        }
        let stack = FeatureStack {
            data,
            mask: self.mask.clone(),
        };
        stack.validate()?;
        let target = image_from_tensor(TensorContainer::read(&dir.join("target.rhtc"))?)?;
        let tokens = self.tokens(&self.env(env)?)?;
        Ok(Sample {
            frame: t,
            env,
            split,
            stack,
            target,
            tokens,
        })
    }

    pub fn samples(&self, split: Split) -> Result<Vec<Sample>> {
        self.manifest.relit(split).map(|r| self.sample(r.index)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featmaps::FeatureSlot;
    use crate::scene::default_cameras;

    fn tiny_spec() -> SceneSpec {
        let mut s = SceneSpec::default();
        s.uv_resolution = 16;
        s.rig.leds = 12;
        s.lighting.env_rows = 16;
        s.lighting.env_cols = 32;
        s.lighting.token_rows = 4;
        s.lighting.token_cols = 8;
        s.lighting.train_envs = 1;
        s.lighting.heldout_envs = 1;
        s.cameras = default_cameras(24).unwrap();
        s
    }

    fn files(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
        let mut out = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(d) = stack.pop() {
            for e in std::fs::read_dir(&d).unwrap() {
                let p = e.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    out.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
                }
            }
        }
        out.sort();
        out
    }

    #[test]
    fn four_frames_two_envs() {
        let dir = tempfile::tempdir().unwrap();
        let scene = Scene::build(tiny_spec()).unwrap();
        let m = gen_dataset(&scene, dir.path()).unwrap();
        assert_eq!(m.frames.len(), 4);
        assert!(!dir.path().join(INCOMPLETE_MARKER).exists());
        let tracking: Vec<_> = m.frames.iter().filter(|f| f.tag == FrameTag::Tracking).collect();
        assert_eq!(tracking.len(), 2);
        assert_eq!(m.relit(Split::Train).count(), 1);
        assert_eq!(m.relit(Split::Heldout).count(), 1);
        for f in &m.frames {
            let d = dir.path().join(&f.dir);
            match f.tag {
                FrameTag::Tracking => {
                    assert!(d.join(normal_file(0)).exists());
                    assert!(!d.join("features.rhtc").exists());
                }
                FrameTag::Relit { tracking_frame, .. } => {
                    assert_eq!(tracking_frame + 1, f.index);
                    assert!(d.join("features.rhtc").exists());
                }
            }
        }
        let ds = Dataset::open(dir.path()).unwrap();
        let s = ds.sample(1).unwrap();
        assert_eq!(s.stack.data.channels, FEATURE_CHANNELS);
        assert_eq!(s.tokens.tokens.len(), 32);
        assert!(ds.sample(0).is_err());
        assert!(m.peak > 0.0);

        // recomputing a frame outside the generator gives the stored stack
        let again = relit_features(&scene, 3, &scene.env(1).unwrap()).unwrap();
        assert_eq!(again.stack.data, ds.sample(3).unwrap().stack.data);
    }

    #[test]
    fn relit_features_come_from_the_previous_tracking_frame() {
        let scene = Scene::build(tiny_spec()).unwrap();
        let cams = &scene.spec.cameras.input;
        let capture_at = |t: usize| {
            let mesh = scene.mesh_at(t).unwrap();
            let traced = TracedMesh::new(&mesh, &scene.template.face_uvs);
            let images = render_views(&traced, &scene, cams, &scene.uniform_lighting())
                .into_iter()
                .map(|v| v.0)
                .collect();
            let normals = cams.iter().map(|c| render_normals(&traced, c).0).collect();
            TrackingCapture { mesh, images, normals }
        };
        let mesh3 = scene.mesh_at(3).unwrap();
        let env = scene.env(0).unwrap();
        let from2 = relit_bundle(&scene, 3, &mesh3, &env, &capture_at(2)).unwrap();
        let from0 = relit_bundle(&scene, 3, &mesh3, &env, &capture_at(0)).unwrap();
        let same = |slot| from2.stack.slice(slot) == from0.stack.slice(slot);
        assert!(!same(FeatureSlot::Albedo));
        assert!(!same(FeatureSlot::HfNormals));
        assert!(same(FeatureSlot::Diffuse));
        assert!(same(FeatureSlot::Position));
        assert!(same(FeatureSlot::CoarseNormals));
        assert_eq!(from2.target, from0.target);
    }

    #[test]
    fn generation_is_byte_reproducible() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let scene = Scene::build(tiny_spec()).unwrap();
        gen_dataset(&scene, a.path()).unwrap();
        gen_dataset(&scene, b.path()).unwrap();
        assert_eq!(files(a.path()), files(b.path()));
    }

    #[test]
    fn incomplete_dataset_refused() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(INCOMPLETE_MARKER), b"").unwrap();
        assert!(Dataset::open(dir.path()).is_err());
    }
}
