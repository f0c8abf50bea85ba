//! From material files on disk to something the renderer can bind.
//!
//! A material directory holds `*.gpss` transport archives and `*.json` dipole
//! descriptors. Archives are compressed on demand with a GA-tuned transform
//! and the result is cached as a `*.gpsf` file keyed by the archive contents,
//! the rank and the GA configuration.

use crate::dipole::{DipoleError, DipoleMaterial};
use crate::factor::{compress, FactorError, FactoredBssrdf};
use crate::ga::{evolve, factored_fitness, Evolution, FitnessReport, GaConfig, GaConfigError};
use crate::material::{
    check_k_rule, decode_archive, load_dipole_descriptor, ArchiveError, DescriptorError, MaterialArchive,
    MaterialDescriptor, MaterialType, RgbTransport,
};
use crate::render::BoundMaterial;
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error(transparent)]
    Factor(#[from] FactorError),
    #[error(transparent)]
    Ga(#[from] GaConfigError),
    #[error(transparent)]
    Dipole(#[from] DipoleError),
    #[error("genetic search found no chromosome that compresses the data")]
    NoViableChromosome,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MaterialSource {
    Archive(PathBuf),
    Dipole(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialEntry {
    pub descriptor: MaterialDescriptor,
    pub source: MaterialSource,
}

impl MaterialEntry {
    pub fn path(&self) -> &Path {
        match &self.source {
            MaterialSource::Archive(p) | MaterialSource::Dipole(p) => p,
        }
    }

    /// Size of the source file in bytes.
    pub fn raw_bytes(&self) -> Result<u64, PipelineError> {
        let p = self.path();
        Ok(std::fs::metadata(p).map_err(|source| PipelineError::Io { path: p.into(), source })?.len())
    }
}

/// Materials found in a directory, sorted by name then type.
#[derive(Debug, Clone, Default)]
pub struct MaterialLibrary {
    entries: Vec<MaterialEntry>,
    /// Files that looked like materials but failed to parse.
    pub rejected: Vec<(PathBuf, String)>,
}

impl MaterialLibrary {
    pub fn scan(dir: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let dir = dir.as_ref();
        let read = std::fs::read_dir(dir).map_err(|source| PipelineError::Io { path: dir.into(), source })?;
        let mut paths: Vec<PathBuf> = read.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_file()).collect();
        paths.sort();
        let mut lib = MaterialLibrary::default();
        for path in paths {
            let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
            let entry = match ext.as_deref() {
                Some("gpss") => read_archive_descriptor(&path).map(|d| (d, MaterialSource::Archive(path.clone()))),
                Some("json") => load_dipole_descriptor(&path)
                    .map_err(PipelineError::from)
                    .map(|d| (d, MaterialSource::Dipole(path.clone()))),
                _ => continue,
            };
            match entry {
                Ok((descriptor, source)) => lib.entries.push(MaterialEntry { descriptor, source }),
                Err(e) => lib.rejected.push((path, e.to_string())),
            }
        }
        lib.entries.sort_by(|a, b| {
            (a.descriptor.name.as_str(), type_rank(a.descriptor.material_type))
                .cmp(&(b.descriptor.name.as_str(), type_rank(b.descriptor.material_type)))
                .then_with(|| a.path().cmp(b.path()))
        });
        Ok(lib)
    }

    pub fn from_entries(mut entries: Vec<MaterialEntry>) -> Self {
        entries.sort_by(|a, b| {
            (a.descriptor.name.as_str(), type_rank(a.descriptor.material_type))
                .cmp(&(b.descriptor.name.as_str(), type_rank(b.descriptor.material_type)))
        });
        Self { entries, rejected: Vec::new() }
    }

    pub fn entries(&self) -> &[MaterialEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn by_name(&self, name: &str) -> Vec<&MaterialEntry> {
        self.entries.iter().filter(|e| e.descriptor.name == name).collect()
    }

    pub fn find(&self, name: &str, material_type: MaterialType) -> Option<&MaterialEntry> {
        self.entries.iter().find(|e| e.descriptor.name == name && e.descriptor.material_type == material_type)
    }
}

fn type_rank(t: MaterialType) -> u8 {
    match t {
        MaterialType::Heterogeneous => 0,
        MaterialType::Homogeneous => 1,
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, PipelineError> {
    std::fs::read(path).map_err(|source| PipelineError::Io { path: path.into(), source })
}

fn read_archive_descriptor(path: &Path) -> Result<MaterialDescriptor, PipelineError> {
    let mut d = decode_archive(&read_file(path)?)?.descriptor;
    d.source = Some(path.to_path_buf());
    Ok(d)
}

/// Result of compressing transport with the GA-selected transform.
#[derive(Debug, Clone)]
pub struct Compressed {
    /// Already rounded through f32, i.e. identical to what `save` writes.
    pub bssrdf: FactoredBssrdf,
    pub evolution: Evolution,
    /// Error of `bssrdf` itself against the input transport.
    pub fitness: FitnessReport,
}

/// Search the transform range with the GA, then factor at rank `k` using the
/// best chromosome.
pub fn compress_with_ga(transport: &RgbTransport, k: usize, cfg: &GaConfig) -> Result<Compressed, PipelineError> {
    let evolution = evolve(transport, k, cfg)?;
    if evolution.best_fitness.is_worst() {
        return Err(PipelineError::NoViableChromosome);
    }
    let bssrdf = compress(transport, &evolution.best.params(), k)?.quantized();
    let fitness = factored_fitness(transport, &bssrdf);
    Ok(Compressed { bssrdf, evolution, fitness })
}

/// How materials are turned into bound render materials.
#[derive(Debug, Clone, Default)]
pub struct Preparer {
    pub ga: GaConfig,
    /// Where compressed archives are cached; `None` disables caching.
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub material: Arc<BoundMaterial>,
    /// Present for factored materials.
    pub fitness: Option<FitnessReport>,
    pub cache_hit: bool,
    pub cache_path: Option<PathBuf>,
}

impl Preparer {
    /// Bind `entry` at rank `k`. The K rule is checked against the entry's
    /// material type first.
    pub fn prepare(&self, entry: &MaterialEntry, k: usize) -> Result<Prepared, PipelineError> {
        check_k_rule(entry.descriptor.material_type, k)?;
        match &entry.source {
            MaterialSource::Dipole(_) => {
                let params = entry.descriptor.dipole_params.ok_or(DescriptorError::MissingDipole)?;
                let model = DipoleMaterial::new(params)?;
                Ok(Prepared {
                    material: Arc::new(BoundMaterial::Dipole { descriptor: entry.descriptor.clone(), model }),
                    fitness: None,
                    cache_hit: false,
                    cache_path: None,
                })
            }
            MaterialSource::Archive(path) => {
                let bytes = read_file(path)?;
                let mut archive: MaterialArchive = decode_archive(&bytes)?;
                archive.descriptor.source = Some(path.clone());
                self.prepare_archive(archive, &bytes, k)
            }
        }
    }

    fn prepare_archive(&self, archive: MaterialArchive, bytes: &[u8], k: usize) -> Result<Prepared, PipelineError> {
        let cache_path = self.cache_dir.as_ref().map(|d| d.join(self.cache_name(&archive.descriptor, bytes, k)));
        let mut cached = None;
        if let Some(p) = cache_path.as_ref().filter(|p| p.is_file()) {
            // A corrupt or mismatched cache entry is recomputed, not fatal.
            cached = FactoredBssrdf::load(p)
                .ok()
                .filter(|f| f.k() == k && f.n_i() == archive.samples.len() && f.n_o() == archive.samples.len());
        }
        let cache_hit = cached.is_some();
        let (bssrdf, fitness) = match cached {
            Some(f) => {
                let fit = factored_fitness(&archive.transport, &f);
                (f, fit)
            }
            None => {
                let c = compress_with_ga(&archive.transport, k, &self.ga)?;
                if let Some(p) = &cache_path {
                    if let Some(dir) = p.parent() {
                        std::fs::create_dir_all(dir).map_err(|source| PipelineError::Io { path: dir.into(), source })?;
                    }
                    c.bssrdf.save(p)?;
                }
                (c.bssrdf, c.fitness)
            }
        };
        let mut descriptor = archive.descriptor;
        descriptor.k_parameter = k;
        Ok(Prepared {
            material: Arc::new(BoundMaterial::Factored {
                descriptor,
                bssrdf: Arc::new(bssrdf),
                samples: Arc::new(archive.samples),
            }),
            fitness: Some(fitness),
            cache_hit,
            cache_path,
        })
    }

    fn cache_name(&self, d: &MaterialDescriptor, bytes: &[u8], k: usize) -> String {
        let mut h = Fnv64::default();
        h.write(bytes);
        h.write(&serde_json::to_vec(&self.ga).expect("GA config serializes"));
        h.write(&(k as u64).to_le_bytes());
        let slug: String =
            d.name.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' }).collect();
        format!("{slug}-{}-k{k}-{:016x}.gpsf", d.material_type.to_string().to_ascii_lowercase(), h.0)
    }
}

/// FNV-1a; stable across builds, which `std`'s hasher does not promise.
struct Fnv64(u64);

impl Default for Fnv64 {
    fn default() -> Self {
        Fnv64(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv64 {
    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::{save_material_archive, synthesize_heterogeneous, Pattern};

    fn quick_ga() -> GaConfig {
        GaConfig { population_size: 6, max_generations: 3, ..GaConfig::default() }
    }

    fn write_archive(dir: &Path, name: &str, t: MaterialType, k: usize) -> PathBuf {
        let (samples, transport) = synthesize_heterogeneous(16, Pattern::Chessboard4, 1).unwrap();
        let d = MaterialDescriptor { name: name.into(), material_type: t, k_parameter: k, source: None, dipole_params: None };
        let path = dir.join(format!("{name}-{t}.gpss"));
        save_material_archive(&d, &samples, &transport, &path).unwrap();
        path
    }

    #[test]
    fn scan_sorts_and_rejects() {
        let dir = tempfile::tempdir().unwrap();
        write_archive(dir.path(), "Jade", MaterialType::Homogeneous, 1);
        write_archive(dir.path(), "Jade", MaterialType::Heterogeneous, 10);
        write_archive(dir.path(), "Blue Wax", MaterialType::Heterogeneous, 5);
        std::fs::write(dir.path().join("broken.gpss"), b"nope").unwrap();
        std::fs::write(dir.path().join("notes.txt"), b"ignored").unwrap();
        let lib = MaterialLibrary::scan(dir.path()).unwrap();
        let names: Vec<_> = lib.entries().iter().map(|e| (e.descriptor.name.clone(), e.descriptor.material_type)).collect();
        assert_eq!(
            names,
            vec![
                ("Blue Wax".to_string(), MaterialType::Heterogeneous),
                ("Jade".to_string(), MaterialType::Heterogeneous),
                ("Jade".to_string(), MaterialType::Homogeneous),
            ]
        );
        assert_eq!(lib.rejected.len(), 1);
        assert_eq!(lib.by_name("Jade").len(), 2);
    }

    #[test]
    fn cache_round_trip_gives_identical_material() {
        let dir = tempfile::tempdir().unwrap();
        write_archive(dir.path(), "Jade", MaterialType::Heterogeneous, 5);
        let lib = MaterialLibrary::scan(dir.path()).unwrap();
        let prep = Preparer { ga: quick_ga(), cache_dir: Some(dir.path().join("cache")) };
        let entry = &lib.entries()[0];
        let first = prep.prepare(entry, 5).unwrap();
        let second = prep.prepare(entry, 5).unwrap();
        assert!(!first.cache_hit && second.cache_hit);
        match (first.material.as_ref(), second.material.as_ref()) {
            (BoundMaterial::Factored { bssrdf: a, .. }, BoundMaterial::Factored { bssrdf: b, .. }) => assert_eq!(a, b),
            _ => panic!("expected factored materials"),
        }
        assert_eq!(first.fitness, second.fitness);
    }

    #[test]
    fn k_rule_is_enforced() {
        let dir = tempfile::tempdir().unwrap();
        write_archive(dir.path(), "Wax", MaterialType::Homogeneous, 1);
        let lib = MaterialLibrary::scan(dir.path()).unwrap();
        let prep = Preparer { ga: quick_ga(), cache_dir: None };
        assert!(matches!(
            prep.prepare(&lib.entries()[0], 5),
            Err(PipelineError::Descriptor(DescriptorError::HomogeneousK(5)))
        ));
        assert!(prep.prepare(&lib.entries()[0], 1).is_ok());
    }
}
