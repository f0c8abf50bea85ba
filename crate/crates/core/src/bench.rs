//! Per-material benchmark records, group aggregates and chart CSVs.
//!
//! Chart files written by [`emit_chart_data`], one row per successful record
//! in suite order:
//!
//! | file | columns |
//! |------|---------|
//! | `times_by_material.csv` | `material,material_type,k,wall_time_s,bssrdf_eval_count` |
//! | `storage_by_material.csv` | `material,material_type,k,factored_storage_bytes,raw_storage_bytes` |
//! | `aggregates.csv` | `material_type,count,mean_wall_time_s,mean_bssrdf_eval_count,mean_factored_storage_bytes,mean_raw_storage_bytes` |
//!
//! `records.json` holds every record, failed ones included.

use crate::material::{
    save_material_archive, synthesize_with, MaterialDescriptor, MaterialType, Pattern, SynthError, SyntheticSpec,
};
use crate::pipeline::{MaterialEntry, Preparer};
use crate::render::{render, write_image, BoundMaterial, ImageFormat, RenderSettings, SceneDescription};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const TIMES_CSV: &str = "times_by_material.csv";
pub const STORAGE_CSV: &str = "storage_by_material.csv";
pub const AGGREGATES_CSV: &str = "aggregates.csv";
pub const RECORDS_JSON: &str = "records.json";

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("no successful {0} records to aggregate")]
    EmptyGroup(MaterialType),
    #[error("no successful records to aggregate")]
    NoRecords,
    #[error("i/o failure on {path}: {source}")]
    IoFailure { path: PathBuf, source: std::io::Error },
    #[error("csv error in {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("records json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Archive(#[from] crate::material::ArchiveError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecordStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub material: String,
    pub material_type: MaterialType,
    pub k: usize,
    pub status: RecordStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub wall_time: f64,
    pub bssrdf_eval_count: u64,
    pub factored_storage_bytes: u64,
    pub raw_storage_bytes: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fitness_rmse: Option<f64>,
}

impl BenchmarkRecord {
    fn failed(d: &MaterialDescriptor, k: usize, error: String) -> Self {
        Self {
            material: d.name.clone(),
            material_type: d.material_type,
            k,
            status: RecordStatus::Failed,
            error: Some(error),
            wall_time: 0.0,
            bssrdf_eval_count: 0,
            factored_storage_bytes: 0,
            raw_storage_bytes: 0,
            image_path: None,
            fitness_rmse: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == RecordStatus::Ok
    }
}

/// One material of the bundled synthetic suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteMaterial {
    pub name: &'static str,
    pub material_type: MaterialType,
    pub k: usize,
    pub spec: SyntheticSpec,
}

const SUITE_NAMES: [(&str, Pattern, u64, [f64; 3]); 8] = [
    ("Yellow Wax", Pattern::VeinedMarble, 11, [0.95, 0.85, 0.40]),
    ("Jade", Pattern::VeinedMarble, 12, [0.50, 0.85, 0.55]),
    ("Blue Wax", Pattern::VeinedMarble, 13, [0.45, 0.60, 0.95]),
    ("Artificial Stone", Pattern::VeinedMarble, 14, [0.70, 0.68, 0.62]),
    ("Chessboard (4x4)", Pattern::Chessboard4, 0, [0.90, 0.80, 0.70]),
    ("Chessboard (8x8)", Pattern::Chessboard8, 0, [0.90, 0.80, 0.70]),
    ("Marble (close up)", Pattern::VeinedMarble, 15, [0.92, 0.90, 0.88]),
    ("Densely Veined Marble", Pattern::VeinedMarble, 16, [0.85, 0.83, 0.80]),
];

/// Eight heterogeneous materials at K = 10 and their homogeneous (uniform,
/// K = 1) counterparts with the same names and albedos.
pub fn synthetic_suite() -> Vec<SuiteMaterial> {
    let hetero = SUITE_NAMES.iter().map(|&(name, pattern, seed, albedo)| SuiteMaterial {
        name,
        material_type: MaterialType::Heterogeneous,
        k: 10,
        spec: SyntheticSpec { pattern, seed, albedo },
    });
    let homo = SUITE_NAMES.iter().map(|&(name, _, seed, albedo)| SuiteMaterial {
        name,
        material_type: MaterialType::Homogeneous,
        k: 1,
        spec: SyntheticSpec { pattern: Pattern::Uniform, seed, albedo },
    });
    hetero.chain(homo).collect()
}

pub fn slug(name: &str) -> String {
    let s: String = name.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' }).collect();
    s.split('-').filter(|p| !p.is_empty()).collect::<Vec<_>>().join("-")
}

/// Writes the suite as `<slug>-<type>.gpss` archives with `n` samples each.
pub fn write_synthetic_suite(dir: impl AsRef<Path>, n: usize) -> Result<Vec<PathBuf>, BenchError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|source| BenchError::IoFailure { path: dir.into(), source })?;
    let mut paths = Vec::new();
    for m in synthetic_suite() {
        let (samples, transport) = synthesize_with(n, &m.spec)?;
        let d = MaterialDescriptor {
            name: m.name.to_string(),
            material_type: m.material_type,
            k_parameter: m.k,
            source: None,
            dipole_params: None,
        };
        let path = dir.join(format!("{}-{}.gpss", slug(m.name), m.material_type.to_string().to_ascii_lowercase()));
        save_material_archive(&d, &samples, &transport, &path)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Renders every material with the same scene, settings and seed, in order.
/// Each material is rendered at its descriptor's K. Failures become failed
/// records and the suite moves on. When `image_dir` is set a PNG per
/// material is written there.
pub fn run_benchmark_suite(
    materials: &[MaterialEntry],
    preparer: &Preparer,
    scene_template: &SceneDescription,
    settings: &RenderSettings,
    seed: u64,
    image_dir: Option<&Path>,
) -> Vec<BenchmarkRecord> {
    materials
        .iter()
        .map(|entry| {
            let k = entry.descriptor.k_parameter;
            bench_one(entry, k, preparer, scene_template, settings, seed, image_dir)
                .unwrap_or_else(|e| BenchmarkRecord::failed(&entry.descriptor, k, e))
        })
        .collect()
}

fn bench_one(
    entry: &MaterialEntry,
    k: usize,
    preparer: &Preparer,
    scene_template: &SceneDescription,
    settings: &RenderSettings,
    seed: u64,
    image_dir: Option<&Path>,
) -> Result<BenchmarkRecord, String> {
    let prepared = preparer.prepare(entry, k).map_err(|e| e.to_string())?;
    let raw_storage_bytes = entry.raw_bytes().map_err(|e| e.to_string())?;
    let factored_storage_bytes = match prepared.material.as_ref() {
        BoundMaterial::Factored { bssrdf, .. } => bssrdf.storage_bytes(),
        BoundMaterial::Dipole { .. } => 0,
    };
    let mut scene = scene_template.clone();
    scene.material = Some(prepared.material.clone());
    let report = render(&scene, settings, seed, None).map_err(|e| e.to_string())?;
    let image_path = match image_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
            let d = &entry.descriptor;
            let p = dir.join(format!("{}-{}-k{k}.png", slug(&d.name), d.material_type.to_string().to_ascii_lowercase()));
            write_image(&report.image, &p, ImageFormat::Png8Srgb).map_err(|e| e.to_string())?;
            Some(p)
        }
        None => None,
    };
    Ok(BenchmarkRecord {
        material: entry.descriptor.name.clone(),
        material_type: entry.descriptor.material_type,
        k,
        status: RecordStatus::Ok,
        error: None,
        wall_time: report.wall_time,
        bssrdf_eval_count: report.bssrdf_eval_count,
        factored_storage_bytes,
        raw_storage_bytes,
        image_path,
        fitness_rmse: prepared.fitness.map(|f| f.rmse),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAggregate {
    pub material_type: MaterialType,
    pub count: usize,
    pub mean_wall_time_s: f64,
    pub mean_bssrdf_eval_count: f64,
    pub mean_factored_storage_bytes: f64,
    pub mean_raw_storage_bytes: f64,
}

/// Means over the successful records of one material type.
pub fn aggregate_group(records: &[BenchmarkRecord], material_type: MaterialType) -> Result<GroupAggregate, BenchError> {
    let group: Vec<&BenchmarkRecord> = records.iter().filter(|r| r.is_ok() && r.material_type == material_type).collect();
    if group.is_empty() {
        return Err(BenchError::EmptyGroup(material_type));
    }
    let n = group.len() as f64;
    let mean = |f: &dyn Fn(&BenchmarkRecord) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / n;
    Ok(GroupAggregate {
        material_type,
        count: group.len(),
        mean_wall_time_s: mean(&|r| r.wall_time),
        mean_bssrdf_eval_count: mean(&|r| r.bssrdf_eval_count as f64),
        mean_factored_storage_bytes: mean(&|r| r.factored_storage_bytes as f64),
        mean_raw_storage_bytes: mean(&|r| r.raw_storage_bytes as f64),
    })
}

/// Aggregates for every material type that has successful records,
/// heterogeneous first.
pub fn aggregate(records: &[BenchmarkRecord]) -> Result<Vec<GroupAggregate>, BenchError> {
    let groups: Vec<GroupAggregate> = [MaterialType::Heterogeneous, MaterialType::Homogeneous]
        .into_iter()
        .filter_map(|t| aggregate_group(records, t).ok())
        .collect();
    if groups.is_empty() {
        return Err(BenchError::NoRecords);
    }
    Ok(groups)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeRow {
    pub material: String,
    pub material_type: MaterialType,
    pub k: usize,
    pub wall_time_s: f64,
    pub bssrdf_eval_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageRow {
    pub material: String,
    pub material_type: MaterialType,
    pub k: usize,
    pub factored_storage_bytes: u64,
    pub raw_storage_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChartData {
    pub times: Vec<TimeRow>,
    pub storage: Vec<StorageRow>,
    pub aggregates: Vec<GroupAggregate>,
}

impl ChartData {
    pub fn from_records(records: &[BenchmarkRecord]) -> Self {
        let ok = || records.iter().filter(|r| r.is_ok());
        Self {
            times: ok()
                .map(|r| TimeRow {
                    material: r.material.clone(),
                    material_type: r.material_type,
                    k: r.k,
                    wall_time_s: r.wall_time,
                    bssrdf_eval_count: r.bssrdf_eval_count,
                })
                .collect(),
            storage: ok()
                .map(|r| StorageRow {
                    material: r.material.clone(),
                    material_type: r.material_type,
                    k: r.k,
                    factored_storage_bytes: r.factored_storage_bytes,
                    raw_storage_bytes: r.raw_storage_bytes,
                })
                .collect(),
            aggregates: aggregate(records).unwrap_or_default(),
        }
    }

    /// Rebuilds successful records from the per-material rows, which must
    /// be parallel (same materials in the same order).
    pub fn records(&self) -> Vec<BenchmarkRecord> {
        self.times
            .iter()
            .zip(&self.storage)
            .map(|(t, s)| BenchmarkRecord {
                material: t.material.clone(),
                material_type: t.material_type,
                k: t.k,
                status: RecordStatus::Ok,
                error: None,
                wall_time: t.wall_time_s,
                bssrdf_eval_count: t.bssrdf_eval_count,
                factored_storage_bytes: s.factored_storage_bytes,
                raw_storage_bytes: s.raw_storage_bytes,
                image_path: None,
                fitness_rmse: None,
            })
            .collect()
    }
}

fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<(), BenchError> {
    let csv_err = |source| BenchError::Csv { path: path.into(), source };
    // Headers are written explicitly so an empty table still has them.
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|source| BenchError::IoFailure { path: path.into(), source })
}

fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, BenchError> {
    let csv_err = |source| BenchError::Csv { path: path.into(), source };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(csv_err)
}

pub const TIMES_HEADER: [&str; 5] = ["material", "material_type", "k", "wall_time_s", "bssrdf_eval_count"];
pub const STORAGE_HEADER: [&str; 5] = ["material", "material_type", "k", "factored_storage_bytes", "raw_storage_bytes"];
pub const AGGREGATES_HEADER: [&str; 6] = [
    "material_type",
    "count",
    "mean_wall_time_s",
    "mean_bssrdf_eval_count",
    "mean_factored_storage_bytes",
    "mean_raw_storage_bytes",
];

/// Writes the three chart CSVs plus `records.json` into `dir`; returns the
/// paths written.
pub fn emit_chart_data(records: &[BenchmarkRecord], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, BenchError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|source| BenchError::IoFailure { path: dir.into(), source })?;
    let data = ChartData::from_records(records);
    let paths = [dir.join(TIMES_CSV), dir.join(STORAGE_CSV), dir.join(AGGREGATES_CSV), dir.join(RECORDS_JSON)];
    write_csv(&paths[0], &TIMES_HEADER, &data.times)?;
    write_csv(&paths[1], &STORAGE_HEADER, &data.storage)?;
    write_csv(&paths[2], &AGGREGATES_HEADER, &data.aggregates)?;
    let json = serde_json::to_vec_pretty(records)?;
    std::fs::write(&paths[3], json).map_err(|source| BenchError::IoFailure { path: paths[3].clone(), source })?;
    Ok(paths.to_vec())
}

pub fn read_chart_data(dir: impl AsRef<Path>) -> Result<ChartData, BenchError> {
    let dir = dir.as_ref();
    Ok(ChartData {
        times: read_csv(&dir.join(TIMES_CSV))?,
        storage: read_csv(&dir.join(STORAGE_CSV))?,
        aggregates: read_csv(&dir.join(AGGREGATES_CSV))?,
    })
}

pub fn read_records(dir: impl AsRef<Path>) -> Result<Vec<BenchmarkRecord>, BenchError> {
    let path = dir.as_ref().join(RECORDS_JSON);
    let bytes = std::fs::read(&path).map_err(|source| BenchError::IoFailure { path, source })?;
    Ok(serde_json::from_slice(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(name: &str, t: MaterialType, k: usize, evals: u64, storage: u64) -> BenchmarkRecord {
        BenchmarkRecord {
            material: name.into(),
            material_type: t,
            k,
            status: RecordStatus::Ok,
            error: None,
            wall_time: 0.125 * evals as f64,
            bssrdf_eval_count: evals,
            factored_storage_bytes: storage,
            raw_storage_bytes: 2 * storage,
            image_path: None,
            fitness_rmse: None,
        }
    }

    #[test]
    fn suite_shape() {
        let s = synthetic_suite();
        assert_eq!(s.len(), 16);
        assert_eq!(s.iter().filter(|m| m.material_type == MaterialType::Heterogeneous && m.k == 10).count(), 8);
        assert_eq!(s.iter().filter(|m| m.material_type == MaterialType::Homogeneous && m.k == 1).count(), 8);
        assert_eq!(slug("Chessboard (4x4)"), "chessboard-4x4");
    }

    #[test]
    fn single_record_group_mean_is_the_record() {
        let r = rec("Jade", MaterialType::Homogeneous, 1, 7, 100);
        let g = aggregate_group(std::slice::from_ref(&r), MaterialType::Homogeneous).unwrap();
        assert_eq!(g.count, 1);
        assert_eq!(g.mean_bssrdf_eval_count, 7.0);
        assert_eq!(g.mean_wall_time_s, r.wall_time);
        assert!(matches!(aggregate_group(&[r], MaterialType::Heterogeneous), Err(BenchError::EmptyGroup(_))));
        assert!(matches!(aggregate(&[]), Err(BenchError::NoRecords)));
    }

    #[test]
    fn empty_records_give_header_only_csvs() {
        let dir = tempfile::tempdir().unwrap();
        emit_chart_data(&[], dir.path()).unwrap();
        for f in [TIMES_CSV, STORAGE_CSV, AGGREGATES_CSV] {
            let text = std::fs::read_to_string(dir.path().join(f)).unwrap();
            assert_eq!(text.lines().count(), 1, "{f}: {text}");
        }
        assert_eq!(read_chart_data(dir.path()).unwrap(), ChartData::default());
    }

    #[test]
    fn csv_round_trip_and_failed_records_are_excluded() {
        let dir = tempfile::tempdir().unwrap();
        let mut records = vec![
            rec("Jade", MaterialType::Heterogeneous, 10, 1000, 5000),
            rec("Jade", MaterialType::Homogeneous, 1, 100, 500),
            rec("Blue Wax", MaterialType::Heterogeneous, 10, 3, 7),
        ];
        records[2].wall_time = 0.1 + 0.2;
        let d = MaterialDescriptor {
            name: "Broken".into(),
            material_type: MaterialType::Heterogeneous,
            k_parameter: 10,
            source: None,
            dipole_params: None,
        };
        records.push(BenchmarkRecord::failed(&d, 10, "boom".into()));
        emit_chart_data(&records, dir.path()).unwrap();
        let back = read_chart_data(dir.path()).unwrap();
        assert_eq!(back, ChartData::from_records(&records));
        assert_eq!(back.times.len(), 3);
        assert_eq!(back.records(), records[..3].to_vec());
        assert_eq!(aggregate(&back.records()).unwrap(), back.aggregates);
        assert_eq!(read_records(dir.path()).unwrap(), records);
    }
}
