//! The `GPSS` material archive.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! offset  size          field
//! 0       4             magic "GPSS"
//! 4       2             format version (u16, currently 1)
//! 6       4             JSON header length H (u32)
//! 10      H             JSON header: descriptor fields + sample_count
//! 10+H    n*7*4         sample table, per sample f32 px py pz nx ny nz area
//! ...     3*n*n*4       R, G, B transport matrices, row-major f32
//! ```
//!
//! Values are stored as f32 and widened to f64 on load, so any data that is
//! f32-representable survives a save/load round trip bit-exactly.

use super::{
    Channel, DescriptorError, DipoleParams, MaterialDescriptor, MaterialType, RgbTransport, ScatteringMatrix,
    SurfaceSampleSet,
};
use crate::geometry::Vec3;
use crate::linalg::Matrix;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const ARCHIVE_MAGIC: &[u8; 4] = b"GPSS";
pub const ARCHIVE_VERSION: u16 = 1;
const PREAMBLE_LEN: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum ArchiveError {
    #[error("I/O failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header at byte {offset}: {reason}")]
    MalformedHeader { offset: usize, reason: String },
    #[error("unsupported archive version {found} at byte {offset}")]
    UnsupportedVersion { offset: usize, found: u16 },
    #[error("dimension mismatch in `{field}`: expected {expected}, found {found}")]
    DimensionMismatch { field: String, expected: usize, found: usize },
    #[error("negative transport entry {value} at byte {offset} (channel {channel:?}, row {row}, col {col})")]
    NegativeEntry { offset: usize, channel: Channel, row: usize, col: usize, value: f64 },
    #[error("non-finite value at byte {offset} in `{field}`")]
    NonFinite { offset: usize, field: String },
    #[error("invalid sample table: {0}")]
    InvalidSamples(#[from] super::SampleSetError),
    #[error("invalid descriptor field `{field}`: {reason}")]
    InvalidDescriptor { field: &'static str, reason: String },
}

impl From<DescriptorError> for ArchiveError {
    fn from(e: DescriptorError) -> Self {
        let field = match e {
            DescriptorError::HomogeneousK(_) | DescriptorError::KNotAllowed(_) => "k_parameter",
            DescriptorError::UnexpectedDipole | DescriptorError::MissingDipole => "dipole_params",
            DescriptorError::EmptyName => "name",
        };
        ArchiveError::InvalidDescriptor { field, reason: e.to_string() }
    }
}

/// Everything a `GPSS` file holds.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialArchive {
    pub descriptor: MaterialDescriptor,
    pub samples: SurfaceSampleSet,
    pub transport: RgbTransport,
}

#[derive(Serialize, Deserialize)]
struct ArchiveHeader {
    name: String,
    material_type: MaterialType,
    k_parameter: usize,
    sample_count: usize,
}

/// Total file size for a given JSON header length and sample count.
pub fn archive_byte_count(header_len: usize, n: usize) -> usize {
    PREAMBLE_LEN + header_len + n * 7 * 4 + 3 * n * n * 4
}

fn header_json(descriptor: &MaterialDescriptor, n: usize) -> Vec<u8> {
    let header = ArchiveHeader {
        name: descriptor.name.clone(),
        material_type: descriptor.material_type,
        k_parameter: descriptor.k_parameter,
        sample_count: n,
    };
    serde_json::to_vec(&header).expect("archive header serializes")
}

/// Serialize an archive to bytes, checking every invariant first.
pub fn encode_archive(
    descriptor: &MaterialDescriptor,
    samples: &SurfaceSampleSet,
    transport: &RgbTransport,
) -> Result<Vec<u8>, ArchiveError> {
    descriptor.validate(true)?;
    samples.validate()?;
    let n = samples.len();
    for (c, m) in transport.iter().enumerate() {
        if m.channel().index() != c {
            return Err(ArchiveError::InvalidDescriptor {
                field: "channels",
                reason: format!("matrix {c} is tagged {:?}", m.channel()),
            });
        }
        if m.rows() != n {
            return Err(ArchiveError::DimensionMismatch { field: format!("{:?}.rows", m.channel()), expected: n, found: m.rows() });
        }
        if m.cols() != n {
            return Err(ArchiveError::DimensionMismatch { field: format!("{:?}.cols", m.channel()), expected: n, found: m.cols() });
        }
    }

    let header = header_json(descriptor, n);
    let mut out = Vec::with_capacity(archive_byte_count(header.len(), n));
    out.extend_from_slice(ARCHIVE_MAGIC);
    out.extend_from_slice(&ARCHIVE_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for i in 0..n {
        let p = samples.points[i];
        let nrm = samples.normals[i];
        for x in [p.x, p.y, p.z, nrm.x, nrm.y, nrm.z, samples.areas[i]] {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    for m in transport {
        for &x in m.values().as_slice() {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Write an archive; returns the number of bytes written (the raw storage size).
pub fn save_material_archive(
    descriptor: &MaterialDescriptor,
    samples: &SurfaceSampleSet,
    transport: &RgbTransport,
    path: impl AsRef<Path>,
) -> Result<u64, ArchiveError> {
    let path = path.as_ref();
    let bytes = encode_archive(descriptor, samples, transport)?;
    std::fs::write(path, &bytes).map_err(|source| ArchiveError::IoFailure { path: path.to_path_buf(), source })?;
    Ok(bytes.len() as u64)
}

pub fn load_material_archive(path: impl AsRef<Path>) -> Result<MaterialArchive, ArchiveError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| ArchiveError::IoFailure { path: path.to_path_buf(), source })?;
    let mut archive = decode_archive(&bytes)?;
    archive.descriptor.source = Some(path.to_path_buf());
    Ok(archive)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8], ArchiveError> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            ArchiveError::MalformedHeader {
                offset: self.pos,
                reason: format!("file truncated while reading {what} ({len} bytes needed, {} left)", self.bytes.len() - self.pos),
            }
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn f32(&mut self, what: &str) -> Result<(usize, f64), ArchiveError> {
        let offset = self.pos;
        let b = self.take(4, what)?;
        Ok((offset, f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
    }
}

pub fn decode_archive(bytes: &[u8]) -> Result<MaterialArchive, ArchiveError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != ARCHIVE_MAGIC {
        return Err(ArchiveError::MalformedHeader { offset: 0, reason: format!("bad magic {magic:?}, expected \"GPSS\"") });
    }
    let v = r.take(2, "version")?;
    let version = u16::from_le_bytes([v[0], v[1]]);
    if version != ARCHIVE_VERSION {
        return Err(ArchiveError::UnsupportedVersion { offset: 4, found: version });
    }
    let h = r.take(4, "header length")?;
    let header_len = u32::from_le_bytes([h[0], h[1], h[2], h[3]]) as usize;
    let header_bytes = r.take(header_len, "JSON header")?;
    let header: ArchiveHeader = serde_json::from_slice(header_bytes)
        .map_err(|e| ArchiveError::MalformedHeader { offset: PREAMBLE_LEN, reason: e.to_string() })?;
    let n = header.sample_count;
    if n == 0 {
        return Err(ArchiveError::DimensionMismatch { field: "sample_count".into(), expected: 1, found: 0 });
    }

    let expected_len = archive_byte_count(header_len, n);
    if bytes.len() != expected_len {
        return Err(ArchiveError::DimensionMismatch { field: "file length".into(), expected: expected_len, found: bytes.len() });
    }

    let descriptor = MaterialDescriptor {
        name: header.name,
        material_type: header.material_type,
        k_parameter: header.k_parameter,
        source: None,
        dipole_params: None,
    };
    descriptor.validate(true)?;

    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    let mut areas = Vec::with_capacity(n);
    for i in 0..n {
        let mut vals = [0.0; 7];
        for (slot, v) in vals.iter_mut().enumerate() {
            let (offset, x) = r.f32("sample table")?;
            if !x.is_finite() {
                return Err(ArchiveError::NonFinite { offset, field: format!("samples[{i}][{slot}]") });
            }
            *v = x;
        }
        points.push(Vec3::new(vals[0], vals[1], vals[2]));
        normals.push(Vec3::new(vals[3], vals[4], vals[5]));
        areas.push(vals[6]);
    }
    let samples = SurfaceSampleSet::new(points, normals, areas)?;

    let mut read_channel = |channel: Channel| -> Result<ScatteringMatrix, ArchiveError> {
        let mut data = Vec::with_capacity(n * n);
        for row in 0..n {
            for col in 0..n {
                let (offset, x) = r.f32("transport matrix")?;
                if !x.is_finite() {
                    return Err(ArchiveError::NonFinite { offset, field: format!("{channel:?}[{row}][{col}]") });
                }
                if x < 0.0 {
                    return Err(ArchiveError::NegativeEntry { offset, channel, row, col, value: x });
                }
                data.push(x);
            }
        }
        Ok(ScatteringMatrix::new(channel, Matrix::from_vec(n, n, data)).expect("entries checked above"))
    };
    let transport = [read_channel(Channel::R)?, read_channel(Channel::G)?, read_channel(Channel::B)?];

    Ok(MaterialArchive { descriptor, samples, transport })
}

/// On-disk schema for dipole-only materials.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DipoleMaterialFile {
    pub name: String,
    pub sigma_s_prime: [f64; 3],
    pub sigma_a: [f64; 3],
    pub eta: f64,
    /// "1/m" (default) or "1/mm".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<String>,
}

/// Read a standalone dipole material JSON file into a homogeneous descriptor
/// with coefficients converted to 1/m.
pub fn load_dipole_descriptor(path: impl AsRef<Path>) -> Result<MaterialDescriptor, ArchiveError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ArchiveError::IoFailure { path: path.to_path_buf(), source })?;
    let mut d = parse_dipole_descriptor(&text)?;
    d.source = Some(path.to_path_buf());
    Ok(d)
}

pub fn parse_dipole_descriptor(text: &str) -> Result<MaterialDescriptor, ArchiveError> {
    let file: DipoleMaterialFile =
        serde_json::from_str(text).map_err(|e| ArchiveError::MalformedHeader { offset: 0, reason: e.to_string() })?;
    let scale = match file.units.as_deref() {
        None | Some("1/m") | Some("m^-1") => 1.0,
        Some("1/mm") | Some("mm^-1") => 1000.0,
        Some(other) => {
            return Err(ArchiveError::InvalidDescriptor { field: "units", reason: format!("unknown unit `{other}`") })
        }
    };
    let descriptor = MaterialDescriptor {
        name: file.name,
        material_type: MaterialType::Homogeneous,
        k_parameter: 1,
        source: None,
        dipole_params: Some(DipoleParams {
            sigma_s_prime: file.sigma_s_prime.map(|x| x * scale),
            sigma_a: file.sigma_a.map(|x| x * scale),
            eta: file.eta,
        }),
    };
    descriptor.validate(false)?;
    Ok(descriptor)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_archive(n: usize) -> MaterialArchive {
        let samples = SurfaceSampleSet::new(
            (0..n).map(|i| Vec3::new(i as f64 * 0.25, 0.0, 0.0)).collect(),
            vec![Vec3::new(0.0, 0.0, 1.0); n],
            vec![0.0625; n],
        )
        .unwrap();
        let transport = Channel::ALL.map(|c| ScatteringMatrix::new(c, Matrix::identity(n)).unwrap());
        MaterialArchive {
            descriptor: MaterialDescriptor {
                name: "Jade".into(),
                material_type: MaterialType::Heterogeneous,
                k_parameter: 10,
                source: None,
                dipole_params: None,
            },
            samples,
            transport,
        }
    }

    fn encode(a: &MaterialArchive) -> Vec<u8> {
        encode_archive(&a.descriptor, &a.samples, &a.transport).unwrap()
    }

    #[test]
    fn identity_round_trip() {
        let a = identity_archive(4);
        let back = decode_archive(&encode(&a)).unwrap();
        assert_eq!(back, a);
        assert_eq!(back.transport[0].rows(), 4);
        assert_eq!(back.transport[2].cols(), 4);
        assert_eq!(back.descriptor.name, "Jade");
        assert_eq!(back.descriptor.material_type, MaterialType::Heterogeneous);
        assert_eq!(back.descriptor.k_parameter, 10);
    }

    #[test]
    fn negative_entry_names_offset() {
        let a = identity_archive(4);
        let mut bytes = encode(&a);
        let header_len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        // G channel, row 1, col 2
        let offset = PREAMBLE_LEN + header_len + 4 * 28 + (16 + 4 + 2) * 4;
        bytes[offset..offset + 4].copy_from_slice(&(-1.0f32).to_le_bytes());
        match decode_archive(&bytes) {
            Err(ArchiveError::NegativeEntry { offset: o, channel: Channel::G, row: 1, col: 2, value }) => {
                assert_eq!(o, offset);
                assert_eq!(value, -1.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_errors() {
        let a = identity_archive(4);
        let good = encode(&a);

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_archive(&bad), Err(ArchiveError::MalformedHeader { offset: 0, .. })));

        let mut bad = good.clone();
        bad[4..6].copy_from_slice(&7u16.to_le_bytes());
        assert!(matches!(decode_archive(&bad), Err(ArchiveError::UnsupportedVersion { offset: 4, found: 7 })));

        let bad = &good[..good.len() - 4];
        assert!(matches!(decode_archive(bad), Err(ArchiveError::DimensionMismatch { .. })));

        let bad = &good[..8];
        assert!(matches!(decode_archive(bad), Err(ArchiveError::MalformedHeader { offset: 6, .. })));
    }

    #[test]
    fn mismatched_matrix_rejected_on_save() {
        let mut a = identity_archive(4);
        a.transport[1] = ScatteringMatrix::new(Channel::G, Matrix::identity(3)).unwrap();
        assert!(matches!(
            encode_archive(&a.descriptor, &a.samples, &a.transport),
            Err(ArchiveError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn dipole_json_unit_conversion() {
        let d = parse_dipole_descriptor(
            r#"{"name":"Placeholder","sigma_s_prime":[1.0,2.0,3.0],"sigma_a":[0.01,0.02,0.03],"eta":1.3,"units":"1/mm"}"#,
        )
        .unwrap();
        let p = d.dipole_params.unwrap();
        assert_eq!(p.sigma_s_prime, [1000.0, 2000.0, 3000.0]);
        assert_eq!(p.sigma_a, [10.0, 20.0, 30.0]);
        assert_eq!(d.material_type, MaterialType::Homogeneous);
        assert_eq!(d.k_parameter, 1);
        assert!(parse_dipole_descriptor(r#"{"name":"x","sigma_s_prime":[1,1,1],"sigma_a":[1,1,1],"eta":1.3,"units":"furlong"}"#).is_err());
    }
}
