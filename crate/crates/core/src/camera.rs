use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{is_rotation, Vec2, Vec3};

/// Pinhole camera. Camera space is x right, y down, z forward; pixel
/// `(col, row)` covers `[col, col+1) × [row, row+1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// World-to-camera rotation, row-major.
    pub rotation: [[f64; 3]; 3],
    /// World-to-camera translation.
    pub translation: [f64; 3],
}

impl CameraModel {
    /// Camera at `eye` looking at `target`, square pixels, principal point at
    /// the image center, horizontal field of view `fov_x` radians.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, fov_x: f64, width: usize, height: usize) -> Result<Self> {
        let z = (target - eye).normalize();
        let x = z.cross(&up);
        if x.norm() < 1e-9 {
            return Err(Error::invalid("camera up vector is parallel to the view direction"));
        }
        let x = x.normalize();
        let y = z.cross(&x);
        let r = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let t = -(r * eye);
        let f = 0.5 * width as f64 / (0.5 * fov_x).tan();
        let cam = Self {
            fx: f,
            fy: f,
            cx: 0.5 * width as f64,
            cy: 0.5 * height as f64,
            width,
            height,
            rotation: matrix_to_rows(&r),
            translation: t.into(),
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(Error::invalid("camera focal lengths must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("camera resolution must be nonzero"));
        }
        if !is_rotation(&self.rotation_matrix()) {
            return Err(Error::invalid("camera rotation is not orthonormal"));
        }
        Ok(())
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_row_slice(&self.rotation.concat())
    }

    /// Camera-to-world rotation (`R_c`, applied to camera-space normals).
    pub fn camera_to_world(&self) -> Matrix3<f64> {
        self.rotation_matrix().transpose()
    }

    pub fn center(&self) -> Vec3 {
        -(self.camera_to_world() * Vec3::from(self.translation))
    }

    pub fn world_to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation_matrix() * p + Vec3::from(self.translation)
    }

    /// Continuous pixel coordinates of a camera-space point in front of the camera.
    pub fn project_camera(&self, pc: &Vec3) -> Option<Vec2> {
        if pc.z <= 1e-9 {
            return None;
        }
        Some(Vec2::new(self.fx * pc.x / pc.z + self.cx, self.fy * pc.y / pc.z + self.cy))
    }

    pub fn project(&self, p: &Vec3) -> Option<Vec2> {
        self.project_camera(&self.world_to_camera(p))
    }

    /// World-space unit ray through continuous pixel coordinates.
    pub fn ray(&self, px: f64, py: f64) -> (Vec3, Vec3) {
        let d = Vec3::new((px - self.cx) / self.fx, (py - self.cy) / self.fy, 1.0);
        (self.center(), (self.camera_to_world() * d).normalize())
    }

    pub fn contains(&self, px: &Vec2) -> bool {
        px.x >= 0.0 && px.y >= 0.0 && px.x <= self.width as f64 && px.y <= self.height as f64
    }
}

pub fn matrix_to_rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [
        [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
        [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
        [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
    ]
}
