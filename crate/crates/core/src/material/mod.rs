//! Measured transport data and material metadata.
//!
//! A measured material is tabulated as a dense diffuse-transport matrix per
//! color channel over a discrete set of surface samples: entry `[i][j]` is
//! the transport density (1/m²) from incident sample `i` to exitant sample
//! `j`. Scene units are meters throughout.

mod archive;
mod synth;

pub use archive::{
    archive_byte_count, decode_archive, encode_archive, load_dipole_descriptor, load_material_archive,
    parse_dipole_descriptor, save_material_archive, ArchiveError, DipoleMaterialFile, MaterialArchive, ARCHIVE_MAGIC,
    ARCHIVE_VERSION,
};
pub use synth::{
    synthesize_heterogeneous, synthesize_with, Pattern, SynthError, SyntheticSpec, DEFAULT_ALBEDO, PATCH_SIZE_M,
    SIGMA_CHANNEL_SCALE,
};

use crate::geometry::Vec3;
use crate::linalg::Matrix;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::PathBuf;

/// K choices exposed to users for heterogeneous materials.
pub const ALLOWED_K: [usize; 3] = [1, 5, 10];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    R,
    G,
    B,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::R, Channel::G, Channel::B];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MaterialType {
    Homogeneous,
    Heterogeneous,
}

impl fmt::Display for MaterialType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaterialType::Homogeneous => "Homogeneous",
            MaterialType::Heterogeneous => "Heterogeneous",
        })
    }
}

impl std::str::FromStr for MaterialType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "homogeneous" => Ok(MaterialType::Homogeneous),
            "heterogeneous" => Ok(MaterialType::Heterogeneous),
            other => Err(format!("unknown material type `{other}`")),
        }
    }
}

/// Dipole coefficients, all in 1/m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipoleParams {
    pub sigma_s_prime: [f64; 3],
    pub sigma_a: [f64; 3],
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialDescriptor {
    pub name: String,
    pub material_type: MaterialType,
    pub k_parameter: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dipole_params: Option<DipoleParams>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DescriptorError {
    #[error("homogeneous materials always use K = 1 (got {0})")]
    HomogeneousK(usize),
    #[error("K must be one of 1, 5 or 10 (got {0})")]
    KNotAllowed(usize),
    #[error("dipole parameters are only valid for homogeneous materials without measured data")]
    UnexpectedDipole,
    #[error("homogeneous material without measured data needs dipole parameters")]
    MissingDipole,
    #[error("material name must not be empty")]
    EmptyName,
}

impl MaterialDescriptor {
    /// Checks the K and dipole rules. `has_measured_data` tells whether the
    /// descriptor is backed by a transport archive.
    pub fn validate(&self, has_measured_data: bool) -> Result<(), DescriptorError> {
        if self.name.trim().is_empty() {
            return Err(DescriptorError::EmptyName);
        }
        check_k_rule(self.material_type, self.k_parameter)?;
        let wants_dipole = self.material_type == MaterialType::Homogeneous && !has_measured_data;
        match (wants_dipole, self.dipole_params.is_some()) {
            (true, false) => Err(DescriptorError::MissingDipole),
            (false, true) => Err(DescriptorError::UnexpectedDipole),
            _ => Ok(()),
        }
    }

    /// Whether the user may pick K for this material.
    pub fn k_applicable(&self) -> bool {
        self.material_type == MaterialType::Heterogeneous
    }
}

/// The K rule in one place: homogeneous => 1, heterogeneous => {1, 5, 10}.
pub fn check_k_rule(material_type: MaterialType, k: usize) -> Result<(), DescriptorError> {
    match material_type {
        MaterialType::Homogeneous if k != 1 => Err(DescriptorError::HomogeneousK(k)),
        MaterialType::Heterogeneous if !ALLOWED_K.contains(&k) => Err(DescriptorError::KNotAllowed(k)),
        _ => Ok(()),
    }
}

/// Surface discretization the transport is tabulated over.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSampleSet {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub areas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SampleSetError {
    #[error("sample set is empty")]
    Empty,
    #[error("sample set field `{field}` has {found} entries, expected {expected}")]
    Length { field: &'static str, expected: usize, found: usize },
    #[error("normal {index} is not unit length (|n| = {length})")]
    NonUnitNormal { index: usize, length: f64 },
    #[error("area {index} must be strictly positive (got {value})")]
    NonPositiveArea { index: usize, value: f64 },
    #[error("point {index} is not finite")]
    NonFinitePoint { index: usize },
}

impl SurfaceSampleSet {
    pub fn new(points: Vec<Vec3>, normals: Vec<Vec3>, areas: Vec<f64>) -> Result<Self, SampleSetError> {
        let set = Self { points, normals, areas };
        set.validate()?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<(), SampleSetError> {
        let n = self.points.len();
        if n == 0 {
            return Err(SampleSetError::Empty);
        }
        if self.normals.len() != n {
            return Err(SampleSetError::Length { field: "normals", expected: n, found: self.normals.len() });
        }
        if self.areas.len() != n {
            return Err(SampleSetError::Length { field: "areas", expected: n, found: self.areas.len() });
        }
        for (index, p) in self.points.iter().enumerate() {
            if !p.is_finite() {
                return Err(SampleSetError::NonFinitePoint { index });
            }
        }
        for (index, nrm) in self.normals.iter().enumerate() {
            let length = nrm.length();
            if !((length - 1.0).abs() <= 1e-6) {
                return Err(SampleSetError::NonUnitNormal { index, length });
            }
        }
        for (index, &value) in self.areas.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(SampleSetError::NonPositiveArea { index, value });
            }
        }
        Ok(())
    }
}

/// One channel of tabulated transport. Entries are nonnegative and finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringMatrix {
    channel: Channel,
    values: Matrix,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MatrixError {
    #[error("scattering matrix must have at least one row and column")]
    Empty,
    #[error("entry ({row}, {col}) is negative: {value}")]
    Negative { row: usize, col: usize, value: f64 },
    #[error("entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
}

impl ScatteringMatrix {
    pub fn new(channel: Channel, values: Matrix) -> Result<Self, MatrixError> {
        if values.rows() == 0 || values.cols() == 0 {
            return Err(MatrixError::Empty);
        }
        for row in 0..values.rows() {
            for (col, &value) in values.row(row).iter().enumerate() {
                if !value.is_finite() {
                    return Err(MatrixError::NonFinite { row, col });
                }
                if value < 0.0 {
                    return Err(MatrixError::Negative { row, col, value });
                }
            }
        }
        Ok(Self { channel, values })
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn cols(&self) -> usize {
        self.values.cols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    /// Multiply every entry by a nonnegative factor.
    pub fn scaled(&self, factor: f64) -> Result<Self, MatrixError> {
        Self::new(self.channel, self.values.map(|x| x * factor))
    }
}

/// Transport for all three channels, indexed by `Channel::index()`.
pub type RgbTransport = [ScatteringMatrix; 3];

#[cfg(test)]
mod tests {
    use super::*;

    fn descriptor(t: MaterialType, k: usize) -> MaterialDescriptor {
        MaterialDescriptor { name: "Jade".into(), material_type: t, k_parameter: k, source: None, dipole_params: None }
    }

    #[test]
    fn k_rules() {
        assert!(descriptor(MaterialType::Heterogeneous, 10).validate(true).is_ok());
        assert!(descriptor(MaterialType::Heterogeneous, 5).validate(true).is_ok());
        assert_eq!(
            descriptor(MaterialType::Heterogeneous, 7).validate(true),
            Err(DescriptorError::KNotAllowed(7))
        );
        assert_eq!(
            descriptor(MaterialType::Homogeneous, 5).validate(true),
            Err(DescriptorError::HomogeneousK(5))
        );
        assert!(descriptor(MaterialType::Homogeneous, 1).validate(true).is_ok());
    }

    #[test]
    fn dipole_presence_rule() {
        let mut d = descriptor(MaterialType::Homogeneous, 1);
        assert_eq!(d.validate(false), Err(DescriptorError::MissingDipole));
        d.dipole_params = Some(DipoleParams { sigma_s_prime: [1.0; 3], sigma_a: [1.0; 3], eta: 1.3 });
        assert!(d.validate(false).is_ok());
        assert_eq!(d.validate(true), Err(DescriptorError::UnexpectedDipole));
    }

    #[test]
    fn matrix_rejects_negative_and_nan() {
        let mut m = Matrix::identity(2);
        m[(1, 0)] = -1.0;
        assert!(matches!(ScatteringMatrix::new(Channel::R, m.clone()), Err(MatrixError::Negative { row: 1, col: 0, .. })));
        m[(1, 0)] = f64::INFINITY;
        assert!(matches!(ScatteringMatrix::new(Channel::R, m), Err(MatrixError::NonFinite { .. })));
        assert_eq!(ScatteringMatrix::new(Channel::G, Matrix::zeros(0, 3)), Err(MatrixError::Empty));
    }

    #[test]
    fn sample_set_validation() {
        let p = vec![Vec3::ZERO];
        assert!(SurfaceSampleSet::new(p.clone(), vec![Vec3::new(0.0, 0.0, 1.0)], vec![1.0]).is_ok());
        assert!(matches!(
            SurfaceSampleSet::new(p.clone(), vec![Vec3::new(0.0, 0.0, 1.1)], vec![1.0]),
            Err(SampleSetError::NonUnitNormal { index: 0, .. })
        ));
        assert!(matches!(
            SurfaceSampleSet::new(p.clone(), vec![Vec3::new(0.0, 0.0, 1.0)], vec![0.0]),
            Err(SampleSetError::NonPositiveArea { .. })
        ));
        assert!(matches!(
            SurfaceSampleSet::new(p, vec![], vec![1.0]),
            Err(SampleSetError::Length { field: "normals", .. })
        ));
    }
}
