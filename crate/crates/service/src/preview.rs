//! Material selection and the preview render shared by the CLI and the
//! service, so both produce the same bytes for the same request.

use crate::config::ServiceConfig;
use gensss_core::ga::FitnessReport;
use gensss_core::material::MaterialType;
use gensss_core::pipeline::{MaterialEntry, MaterialLibrary, PipelineError, Preparer};
use gensss_core::render::{build_preview_scene, render, RenderError, RenderReport};

#[derive(Debug, thiserror::Error)]
pub enum PreviewError {
    #[error("unknown material `{0}`")]
    UnknownMaterial(String),
    #[error("no {1} variant of material `{0}`")]
    UnknownVariant(String, MaterialType),
    #[error("material `{0}` exists as both types; pass the type explicitly")]
    AmbiguousType(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Render(#[from] RenderError),
}

/// Finds `name`, optionally restricted to one material type.
pub fn select_entry<'a>(
    library: &'a MaterialLibrary,
    name: &str,
    material_type: Option<MaterialType>,
) -> Result<&'a MaterialEntry, PreviewError> {
    let candidates = library.by_name(name);
    if candidates.is_empty() {
        return Err(PreviewError::UnknownMaterial(name.into()));
    }
    match material_type {
        Some(t) => {
            candidates.into_iter().find(|e| e.descriptor.material_type == t).ok_or(PreviewError::UnknownVariant(name.into(), t))
        }
        None if candidates.len() == 1 => Ok(candidates[0]),
        None => Err(PreviewError::AmbiguousType(name.into())),
    }
}

/// Default preview seed for a `(material, type, k)` choice, so repeated
/// previews of the same choice are identical.
pub fn preview_seed(name: &str, material_type: MaterialType, k: usize) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in format!("{name}\u{0}{material_type}\u{0}{k}").bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn preparer(config: &ServiceConfig) -> Preparer {
    Preparer { ga: config.ga.clone(), cache_dir: Some(config.cache_dir()) }
}

#[derive(Debug, Clone)]
pub struct PreviewOutput {
    pub report: RenderReport,
    pub fitness: Option<FitnessReport>,
    pub storage_bytes: u64,
}

/// Compresses (or loads from cache) and renders the preview scene.
/// `progress` sees the render's completed fraction.
pub fn run_preview(
    entry: &MaterialEntry,
    k: usize,
    seed: u64,
    config: &ServiceConfig,
    progress: Option<&(dyn Fn(f64) + Sync)>,
) -> Result<PreviewOutput, PreviewError> {
    let prepared = preparer(config).prepare(entry, k)?;
    let storage_bytes = prepared.material.storage_bytes();
    let mut scene = build_preview_scene(Some(prepared.material));
    scene.camera.width = config.preview_size;
    scene.camera.height = config.preview_size;
    let report = render(&scene, &config.render, seed, progress)?;
    Ok(PreviewOutput { report, fitness: prepared.fitness, storage_bytes })
}
