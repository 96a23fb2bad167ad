//! Scene description and the deterministic world it expands to.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::envlight::{CaptureSchedule, EnvironmentMap, FrameTag, LedRig, RigLighting, RigQuantizer};
use crate::error::{Error, Result};
use crate::geom::mannequin::Mannequin;
use crate::geom::{
    bake_texel_surface_map, deform_canonical, skin, vertex_normals, Pose, PosedMesh, SkinnedTemplate, TexelSurfaceMap, Vec3,
};
use crate::io::{load_template, read_pfm};
use crate::tracer::{striped_albedo, BrdfModel, BrdfSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateFiles {
    pub obj: PathBuf,
    pub rig: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeformationScript {
    /// Mannequin motion: graph sway, breathing, body yaw and neck swing.
    Scripted,
    /// Rest pose on every frame.
    Rest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BrdfConfig {
    pub model: BrdfModel,
    pub ks: f64,
    pub phong_exponent: f64,
    /// Stripe count of the procedural albedo; ignored when `albedo` is set.
    pub albedo_bands: usize,
    pub albedo: Option<PathBuf>,
}

impl Default for BrdfConfig {
    fn default() -> Self {
        Self {
            model: BrdfModel::LambertPhong,
            ks: 0.3,
            phong_exponent: 32.0,
            albedo_bands: 8,
            albedo: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RigConfig {
    pub leds: usize,
    pub radius: f64,
    pub center: [f64; 3],
}

impl Default for RigConfig {
    fn default() -> Self {
        Self {
            leds: crate::envlight::DEFAULT_LED_COUNT,
            radius: 2.5,
            center: [0.0, 0.9, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LightingConfig {
    pub env_rows: usize,
    pub env_cols: usize,
    pub token_rows: usize,
    pub token_cols: usize,
    pub train_envs: usize,
    pub heldout_envs: usize,
    pub env_seed: u64,
    /// Radiance of every LED on tracking frames.
    pub uniform_radiance: f64,
    /// Brightest LED channel after quantization, if set.
    pub cap: Option<f64>,
}

impl Default for LightingConfig {
    fn default() -> Self {
        Self {
            env_rows: 64,
            env_cols: 128,
            token_rows: 16,
            token_cols: 32,
            train_envs: 64,
            heldout_envs: 8,
            env_seed: 1000,
            uniform_radiance: 1.0,
            cap: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraConfig {
    pub input: Vec<CameraModel>,
    pub test: Vec<CameraModel>,
    /// Index into `test` of the view baked into target textures.
    pub target: usize,
}

impl Default for CameraConfig {
    fn default() -> Self {
        default_cameras(96).expect("default cameras are valid")
    }
}

/// Four input cameras on a ring around the mannequin and two test cameras
/// between them.
pub fn default_cameras(resolution: usize) -> Result<CameraConfig> {
    let target = Vec3::new(0.0, 0.92, 0.0);
    let ring = |deg: f64| {
        let a = deg.to_radians();
        CameraModel::look_at(
            Vec3::new(3.0 * a.sin(), 1.2, 3.0 * a.cos()),
            target,
            Vec3::new(0.0, 1.0, 0.0),
            45f64.to_radians(),
            resolution,
            resolution,
        )
    };
    Ok(CameraConfig {
        input: [0.0, 90.0, 180.0, 270.0].iter().map(|d| ring(*d)).collect::<Result<_>>()?,
        test: [45.0, 225.0].iter().map(|d| ring(*d)).collect::<Result<_>>()?,
        target: 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSpec {
    /// OBJ mesh plus rig JSON; the built-in mannequin when absent.
    pub template: Option<TemplateFiles>,
    pub mannequin: Mannequin,
    pub deformation: DeformationScript,
    pub brdf: BrdfConfig,
    pub rig: RigConfig,
    pub lighting: LightingConfig,
    pub fps: f64,
    /// Schedule length; two frames per environment when absent.
    pub frames: Option<usize>,
    pub cameras: CameraConfig,
    pub uv_resolution: usize,
    /// Per-component noise on camera-space normal images.
    pub normal_noise: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            template: None,
            mannequin: Mannequin::default(),
            deformation: DeformationScript::Scripted,
            brdf: BrdfConfig::default(),
            rig: RigConfig::default(),
            lighting: LightingConfig::default(),
            fps: 30.0,
            frames: None,
            cameras: CameraConfig::default(),
            uv_resolution: 64,
            normal_noise: 0.05,
            seed: 7,
        }
    }
}

impl SceneSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let spec: SceneSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec = Self::parse(&text)?;
        spec.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(spec)
    }

    /// Makes relative file references relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(t) = &mut self.template {
            fix(&mut t.obj);
            fix(&mut t.rig);
        }
        if let Some(a) = &mut self.brdf.albedo {
            fix(a);
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene spec serializes")
    }

    pub fn env_count(&self) -> usize {
        self.lighting.train_envs + self.lighting.heldout_envs
    }

    pub fn validate(&self) -> Result<()> {
        let l = &self.lighting;
        if self.cameras.input.is_empty() {
            return Err(Error::invalid("scene needs at least one input camera"));
        }
        if self.cameras.test.is_empty() || self.cameras.target >= self.cameras.test.len() {
            return Err(Error::invalid("target camera must index a test camera"));
        }
        for c in self.cameras.input.iter().chain(&self.cameras.test) {
            c.validate()?;
        }
        if self.env_count() == 0 {
            return Err(Error::invalid("scene needs at least one environment"));
        }
        if l.token_rows == 0 || l.token_cols == 0 || l.env_rows % l.token_rows != 0 || l.env_cols % l.token_cols != 0 {
            return Err(Error::invalid("token grid must divide the environment resolution"));
        }
        if self.uv_resolution < 2 {
            return Err(Error::invalid("uv resolution must be at least 2"));
        }
        if self.rig.leds == 0 || !(self.rig.radius > 0.0) {
            return Err(Error::invalid("rig needs LEDs and a positive radius"));
        }
        if !(self.normal_noise >= 0.0) || !(l.uniform_radiance >= 0.0) {
            return Err(Error::invalid("noise and radiance must be non-negative"));
        }
        if !(self.brdf.ks >= 0.0) || !(self.brdf.phong_exponent >= 0.0) {
            return Err(Error::invalid("brdf parameters must be non-negative"));
        }
        if let Some(n) = self.frames {
            if n < 2 {
                return Err(Error::invalid("schedule needs at least one tracking and one relit frame"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Heldout,
}

/// Everything a spec expands to, shared by dataset generation and the CLI.
#[derive(Debug, Clone)]
pub struct Scene {
    pub spec: SceneSpec,
    pub template: SkinnedTemplate,
    pub rest_normals: Vec<Vec3>,
    pub map: TexelSurfaceMap,
    pub brdf: BrdfSpec,
    pub rig: LedRig,
    pub quantizer: RigQuantizer,
    pub schedule: CaptureSchedule,
}

impl Scene {
    pub fn build(spec: SceneSpec) -> Result<Self> {
        spec.validate()?;
        let template = match &spec.template {
            Some(t) => load_template(&t.obj, &t.rig)?,
            None => spec.mannequin.build()?,
        };
        let rest_normals = vertex_normals(&template.vertices, &template.faces)?;
        let uv = spec.uv_resolution;
        let map = bake_texel_surface_map(&template, uv, uv)?;
        let albedo = match &spec.brdf.albedo {
            Some(p) => read_pfm(p)?,
            None => striped_albedo(uv, uv, spec.brdf.albedo_bands),
        };
        let brdf = BrdfSpec::new(spec.brdf.model, albedo, spec.brdf.ks, spec.brdf.phong_exponent)?;
        let rig = LedRig::fibonacci(spec.rig.leds, spec.rig.radius, Vec3::from(spec.rig.center))?;
        let quantizer = RigQuantizer::new(spec.lighting.env_rows, spec.lighting.env_cols, &rig);
        let env_ids: Vec<usize> = (0..spec.env_count()).collect();
        let frames = spec.frames.unwrap_or(2 * env_ids.len());
        let schedule = CaptureSchedule::with_frames(&env_ids, spec.fps, frames)?;
        let scene = Self {
            spec,
            template,
            rest_normals,
            map,
            brdf,
            rig,
            quantizer,
            schedule,
        };
        scene.mesh_at(0)?;
        Ok(scene)
    }

    pub fn mesh_at(&self, t: usize) -> Result<PosedMesh> {
        match self.spec.deformation {
            DeformationScript::Scripted => {
                let state = self.spec.mannequin.deformation(&self.template, &self.rest_normals, t);
                let canonical = deform_canonical(&self.template, &state)?;
                skin(&canonical, &self.spec.mannequin.pose(t), &self.template, t)
            }
            DeformationScript::Rest => skin(
                &self.template.vertices,
                &Pose::rest(self.template.skeleton.dof_count()),
                &self.template,
                t,
            ),
        }
    }

    pub fn env(&self, id: usize) -> Result<EnvironmentMap> {
        if id >= self.spec.env_count() {
            return Err(Error::invalid(format!("environment {id} out of range")));
        }
        let l = &self.spec.lighting;
        Ok(EnvironmentMap::procedural(l.env_rows, l.env_cols, l.env_seed + id as u64))
    }

    pub fn split_of(&self, env: usize) -> Split {
        if env < self.spec.lighting.train_envs {
            Split::Train
        } else {
            Split::Heldout
        }
    }

    pub fn uniform_lighting(&self) -> RigLighting {
        RigLighting::uniform(self.rig.len(), self.spec.lighting.uniform_radiance)
    }

    pub fn env_lighting(&self, env: &EnvironmentMap) -> Result<RigLighting> {
        self.quantizer.quantize(env, self.spec.lighting.cap)
    }

    pub fn lighting_for(&self, tag: &FrameTag) -> Result<RigLighting> {
        match tag {
            FrameTag::Tracking => Ok(self.uniform_lighting()),
            FrameTag::Relit { env, .. } => self.env_lighting(&self.env(*env)?),
        }
    }

    pub fn target_camera(&self) -> &CameraModel {
        &self.spec.cameras.test[self.spec.cameras.target]
    }

    /// Input cameras followed by test cameras.
    pub fn all_cameras(&self) -> Vec<CameraModel> {
        self.spec.cameras.input.iter().chain(&self.spec.cameras.test).cloned().collect()
    }
}
