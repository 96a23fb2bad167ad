//! File formats: PFM images, the RHTC tensor container, OBJ meshes and rig JSON.

mod obj;
mod pfm;
mod rigfile;
mod tensor;

pub use obj::{parse_obj, write_obj, ObjMesh};
pub use pfm::{decode_pfm, encode_pfm, read_pfm, write_pfm};
pub use rigfile::{assemble_template, GraphFile, RigFile};
pub use tensor::{TensorContainer, TensorData, MAX_RANK};

use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{SkinnedTemplate, TexelSample, TexelSurfaceMap};
use crate::image::{Image, Mask};
use crate::splat::GaussianTexelSheet;

/// `[height, width, channels]` f64.
pub fn image_to_tensor(img: &Image) -> TensorContainer {
    TensorContainer::f64(&[img.height, img.width, img.channels], img.data.clone()).expect("image shape is consistent")
}

pub fn image_from_tensor(t: TensorContainer) -> Result<Image> {
    let dims = t.dims_usize();
    if dims.len() != 3 {
        return Err(Error::invalid(format!("expected a rank-3 image tensor, got rank {}", dims.len())));
    }
    let data = match t.data {
        TensorData::F64(v) => v,
        TensorData::F32(v) => v.into_iter().map(f64::from).collect(),
        TensorData::U8(_) => return Err(Error::invalid("image tensors must be floating point")),
    };
    Image::from_data(dims[1], dims[0], dims[2], data)
}

/// `[height, width]` u8 with 1 for set texels.
pub fn mask_to_tensor(mask: &Mask) -> TensorContainer {
    TensorContainer::u8(&[mask.height, mask.width], mask.bits.iter().map(|b| *b as u8).collect()).expect("mask shape is consistent")
}

pub fn mask_from_tensor(t: TensorContainer) -> Result<Mask> {
    let dims = t.dims_usize();
    if dims.len() != 2 {
        return Err(Error::invalid("expected a rank-2 mask tensor"));
    }
    let bits = t.into_u8()?.into_iter().map(|b| b != 0).collect();
    Ok(Mask {
        width: dims[1],
        height: dims[0],
        bits,
    })
}

/// `[height, width, 5]` f64: face index (-1 when invalid), three barycentrics,
/// dilation flag.
pub fn surface_map_to_tensor(map: &TexelSurfaceMap) -> TensorContainer {
    let mut data = Vec::with_capacity(map.texels.len() * 5);
    for t in &map.texels {
        match t {
            Some(s) => {
                data.push(s.face as f64);
                data.extend_from_slice(&s.bary);
                data.push(s.dilated as u8 as f64);
            }
            None => data.extend_from_slice(&[-1.0, 0.0, 0.0, 0.0, 0.0]),
        }
    }
    TensorContainer::f64(&[map.height, map.width, 5], data).expect("surface map shape is consistent")
}

pub fn surface_map_from_tensor(t: TensorContainer) -> Result<TexelSurfaceMap> {
    let dims = t.dims_usize();
    if dims.len() != 3 || dims[2] != 5 {
        return Err(Error::invalid("expected a [h, w, 5] surface map tensor"));
    }
    let data = t.into_f64()?;
    let texels = data
        .chunks_exact(5)
        .map(|c| {
            (c[0] >= 0.0).then(|| TexelSample {
                face: c[0] as u32,
                bary: [c[1], c[2], c[3]],
                dilated: c[4] != 0.0,
            })
        })
        .collect();
    Ok(TexelSurfaceMap {
        width: dims[1],
        height: dims[0],
        texels,
    })
}

/// `[n, 19]` f64 rows: texel, base position (3), base scale, offset (3),
/// scale multiplier (3), rotation wxyz (4), opacity, color (3).
pub fn sheet_to_tensor(sheet: &GaussianTexelSheet) -> TensorContainer {
    let mut data = Vec::with_capacity(sheet.len() * 19);
    for i in 0..sheet.len() {
        data.push(sheet.texels[i] as f64);
        data.extend_from_slice(sheet.base_positions[i].as_slice());
        data.push(sheet.base_scales[i]);
        data.extend_from_slice(sheet.offsets[i].as_slice());
        data.extend_from_slice(sheet.scale_multipliers[i].as_slice());
        data.extend_from_slice(&sheet.rotations[i]);
        data.push(sheet.opacities[i]);
        data.extend_from_slice(&sheet.colors[i]);
    }
    TensorContainer::f64(&[sheet.len(), 19], data).expect("sheet shape is consistent")
}

/// Loads a template from an OBJ file and its rig JSON.
pub fn load_template(obj_path: &Path, rig_path: &Path) -> Result<SkinnedTemplate> {
    let obj = std::fs::read_to_string(obj_path).map_err(|e| Error::io(obj_path, e))?;
    let rig = std::fs::read_to_string(rig_path).map_err(|e| Error::io(rig_path, e))?;
    assemble_template(&parse_obj(&obj)?, &RigFile::parse(&rig)?)
}

pub fn save_template(t: &SkinnedTemplate, obj_path: &Path, rig_path: &Path) -> Result<()> {
    std::fs::write(obj_path, write_obj(&t.vertices, &t.faces, &t.face_uvs)).map_err(|e| Error::io(obj_path, e))?;
    std::fs::write(rig_path, RigFile::from_template(t).to_json()).map_err(|e| Error::io(rig_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::bake_texel_surface_map;
    use crate::geom::mannequin::sphere_mesh;

    #[test]
    fn surface_map_round_trip() {
        let t = sphere_mesh(1.0, 12, 8);
        let map = bake_texel_surface_map(&t, 16, 16).unwrap();
        let back = surface_map_from_tensor(TensorContainer::decode(&surface_map_to_tensor(&map).encode()).unwrap()).unwrap();
        assert_eq!(back, map);
    }

    #[test]
    fn image_and_mask_round_trip() {
        let mut img = Image::new(3, 2, 24);
        for (i, v) in img.data.iter_mut().enumerate() {
            *v = (i as f64).sin() * 1e-3;
        }
        let back = image_from_tensor(TensorContainer::decode(&image_to_tensor(&img).encode()).unwrap()).unwrap();
        assert_eq!(back, img);
        let mask = Mask {
            width: 3,
            height: 2,
            bits: vec![true, false, true, true, false, false],
        };
        assert_eq!(mask_from_tensor(mask_to_tensor(&mask)).unwrap(), mask);
    }

    #[test]
    fn template_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let t = crate::geom::mannequin::Mannequin::default().build().unwrap();
        let (o, r) = (dir.path().join("m.obj"), dir.path().join("m.rig.json"));
        save_template(&t, &o, &r).unwrap();
        assert_eq!(load_template(&o, &r).unwrap(), t);
        assert!(matches!(load_template(&dir.path().join("nope.obj"), &r), Err(Error::Io { .. })));
    }
}
