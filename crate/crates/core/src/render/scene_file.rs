//! JSON scene files.
//!
//! ```json
//! {
//!   "mesh": { "kind": "sphere", "center": [0, 0, 0], "radius": 0.025, "slices": 64, "stacks": 32 },
//!   "camera": { "position": [0, 0, 0.1], "look_at": [0, 0, 0], "vfov_deg": 35, "width": 256, "height": 256 },
//!   "light": { "position": [0.06, 0.06, 0.06], "direction": [-1, -1, -1], "cone_angle_deg": 30, "intensity": [0.01, 0.01, 0.01] },
//!   "material": "Jade",
//!   "background": [0.02, 0.02, 0.02],
//!   "projection": "Spherical"
//! }
//! ```
//!
//! Mesh kinds are `sphere`, `standin` (the bundled low-poly model, optionally
//! scaled) and `inline` (explicit positions and triangles; normals are
//! computed when omitted). The material is a name resolved by the caller.

use super::{BoundMaterial, Camera, Mesh, Projection, SceneDescription, SpotLight};
use crate::geometry::Vec3;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MeshSource {
    Sphere { center: Vec3, radius: f64, slices: usize, stacks: usize },
    Standin {
        #[serde(default = "unit")]
        scale: f64,
    },
    Inline {
        positions: Vec<Vec3>,
        triangles: Vec<[u32; 3]>,
        #[serde(default)]
        normals: Option<Vec<Vec3>>,
    },
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub mesh: MeshSource,
    pub camera: Camera,
    pub light: SpotLight,
    #[serde(default)]
    pub material: Option<String>,
    #[serde(default)]
    pub background: [f64; 3],
    #[serde(default)]
    pub projection: Projection,
}

#[derive(Debug, thiserror::Error)]
pub enum SceneFileError {
    #[error("cannot read scene {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed scene file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid mesh: {0}")]
    Mesh(String),
}

impl MeshSource {
    pub fn build(&self) -> Result<Mesh, SceneFileError> {
        match self {
            MeshSource::Sphere { center, radius, slices, stacks } => {
                if *slices < 3 || *stacks < 2 || !(*radius > 0.0) {
                    return Err(SceneFileError::Mesh("sphere needs radius > 0, slices >= 3, stacks >= 2".into()));
                }
                Ok(Mesh::uv_sphere(*center, *radius, *slices, *stacks))
            }
            MeshSource::Standin { scale } => {
                if !(*scale > 0.0 && scale.is_finite()) {
                    return Err(SceneFileError::Mesh("standin scale must be positive".into()));
                }
                let mut m = Mesh::standin();
                m.positions.iter_mut().for_each(|p| *p = *p * *scale);
                Ok(m)
            }
            MeshSource::Inline { positions, triangles, normals } => {
                if let Some(t) = triangles.iter().flatten().find(|&&v| v as usize >= positions.len()) {
                    return Err(SceneFileError::Mesh(format!("vertex index {t} out of range")));
                }
                if positions.iter().any(|p| !p.is_finite()) {
                    return Err(SceneFileError::Mesh("non-finite vertex position".into()));
                }
                let mut m = Mesh { positions: positions.clone(), normals: Vec::new(), triangles: triangles.clone() };
                match normals {
                    Some(n) if n.len() == positions.len() => m.normals = n.iter().map(|v| v.normalized()).collect(),
                    Some(_) => return Err(SceneFileError::Mesh("normal count differs from position count".into())),
                    None => m.recompute_normals(),
                }
                Ok(m)
            }
        }
    }
}

impl SceneFile {
    pub fn parse(text: &str) -> Result<Self, SceneFileError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SceneFileError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| SceneFileError::Io { path: path.into(), source })?;
        Self::parse(&text)
    }

    pub fn into_scene(self, material: Option<Arc<BoundMaterial>>) -> Result<SceneDescription, SceneFileError> {
        Ok(SceneDescription {
            mesh: Arc::new(self.mesh.build()?),
            camera: self.camera,
            light: self.light,
            material,
            background: self.background,
            projection: self.projection,
        })
    }
}
