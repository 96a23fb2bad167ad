use serde::{Deserialize, Serialize};

use super::obj::ObjMesh;
use crate::error::Result;
use crate::geom::{EmbeddedGraph, Joint, Skeleton, SkinnedTemplate, SparseWeights, Vec3};

/// Skeleton, skinning weights and embedded graph that accompany an OBJ mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigFile {
    pub joints: Vec<Joint>,
    /// Per vertex: `[joint, weight]` pairs.
    pub skinning: SparseWeights,
    pub graph: GraphFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub nodes: Vec<[f64; 3]>,
    /// Per vertex: `[node, weight]` pairs.
    pub influences: SparseWeights,
}

impl RigFile {
    pub fn from_template(t: &SkinnedTemplate) -> Self {
        Self {
            joints: t.skeleton.joints().to_vec(),
            skinning: t.skinning_weights.clone(),
            graph: GraphFile {
                nodes: t.graph.node_positions.iter().map(|p| [p.x, p.y, p.z]).collect(),
                influences: t.graph.influences.clone(),
            },
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("rig file serializes")
    }
}

/// Builds and validates a template from an OBJ mesh and its rig description.
pub fn assemble_template(mesh: &ObjMesh, rig: &RigFile) -> Result<SkinnedTemplate> {
    SkinnedTemplate::new(
        mesh.positions.clone(),
        mesh.vertex_faces(),
        mesh.face_uvs(),
        Skeleton::new(rig.joints.clone())?,
        rig.skinning.clone(),
        EmbeddedGraph {
            node_positions: rig.graph.nodes.iter().map(|p| Vec3::from(*p)).collect(),
            influences: rig.graph.influences.clone(),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::mannequin::Mannequin;
    use crate::io::obj::{parse_obj, write_obj};

    #[test]
    fn mannequin_round_trip() {
        let t = Mannequin::default().build().unwrap();
        let obj = parse_obj(&write_obj(&t.vertices, &t.faces, &t.face_uvs)).unwrap();
        let rig = RigFile::parse(&RigFile::from_template(&t).to_json()).unwrap();
        let back = assemble_template(&obj, &rig).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn invalid_weights_rejected() {
        let t = Mannequin::default().build().unwrap();
        let obj = parse_obj(&write_obj(&t.vertices, &t.faces, &t.face_uvs)).unwrap();
        let mut rig = RigFile::from_template(&t);
        rig.skinning[0][0].1 = 0.5;
        assert!(assemble_template(&obj, &rig).is_err());
        assert!(RigFile::parse("{\"joints\": []}").is_err());
    }
}
