//! Factored transport: an elementwise log-range transform followed by a
//! rank-K truncated SVD per color channel.
//!
//! Forward: `y = ln(1 + x / rho)`. Inverse: `x = rho * (e^y - 1)`, clamped at
//! zero because a truncated reconstruction can dip slightly negative. `rho`
//! is chosen per channel (by the genetic search in [`crate::ga`]).
//!
//! The `GPSF` archive stores the factors:
//!
//! ```text
//! offset  size   field
//! 0       4      magic "GPSF"
//! 4       2      version (u16 LE, currently 1)
//! 6       4      JSON header length H (u32 LE)
//! 10      H      JSON header {"format","k","n_i","n_o","transform"}
//! 10+H    ...    per channel R, G, B: rho, u (n_i x k), s (k), v (n_o x k)
//!                all f32 LE, matrices row-major
//! ```
//!
//! so a file is exactly `10 + H + 3 * (k * (n_i + n_o + 1) + 1) * 4` bytes.

use crate::linalg::{svd, Matrix, SvdError};
use crate::material::{Channel, RgbTransport, ScatteringMatrix};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const FACTORED_MAGIC: &[u8; 4] = b"GPSF";
pub const FACTORED_VERSION: u16 = 1;
const PREAMBLE_LEN: usize = 10;
const TRANSFORM_NAME: &str = "log1p";

#[derive(Debug, thiserror::Error)]
pub enum FactorError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("inverse transform overflowed (y = {y}, rho = {rho})")]
    Overflow { y: f64, rho: f64 },
    #[error("SVD did not converge after {iterations} sweeps")]
    ConvergenceFailure { iterations: usize },
    #[error("index ({i}, {j}) out of range for {n_i}x{n_o} transport")]
    IndexOutOfRange { i: usize, j: usize, n_i: usize, n_o: usize },
    #[error("I/O failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed factored archive at byte {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
}

impl From<SvdError> for FactorError {
    fn from(e: SvdError) -> Self {
        match e {
            SvdError::ConvergenceFailure { iterations } => FactorError::ConvergenceFailure { iterations },
            SvdError::NonFinite => FactorError::InvalidInput("matrix contains non-finite values".into()),
        }
    }
}

/// Admissible range for the transform parameter, in matrix-entry units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoBounds {
    pub min: f64,
    pub max: f64,
}

impl Default for RhoBounds {
    fn default() -> Self {
        Self { min: 1e-4, max: 1e4 }
    }
}

impl RhoBounds {
    pub fn validate(&self) -> Result<(), FactorError> {
        if self.min > 0.0 && self.min < self.max && self.max.is_finite() {
            Ok(())
        } else {
            Err(FactorError::InvalidInput(format!("rho bounds must satisfy 0 < min < max, got [{}, {}]", self.min, self.max)))
        }
    }

    pub fn contains(&self, rho: f64) -> bool {
        rho >= self.min && rho <= self.max
    }
}

/// Per-channel transform range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformParams {
    pub rho: [f64; 3],
}

impl TransformParams {
    pub fn uniform(rho: f64) -> Self {
        Self { rho: [rho; 3] }
    }

    pub fn validate(&self, bounds: &RhoBounds) -> Result<(), FactorError> {
        for (c, &r) in self.rho.iter().enumerate() {
            if !bounds.contains(r) {
                return Err(FactorError::InvalidInput(format!(
                    "rho[{c}] = {r} outside [{}, {}]",
                    bounds.min, bounds.max
                )));
            }
        }
        Ok(())
    }
}

fn check_rho(rho: f64) -> Result<(), FactorError> {
    if rho > 0.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(FactorError::InvalidInput(format!("rho must be positive and finite, got {rho}")))
    }
}

/// `y = ln(1 + x / rho)` elementwise.
pub fn forward_transform(m: &ScatteringMatrix, rho: f64) -> Result<Matrix, FactorError> {
    check_rho(rho)?;
    Ok(m.values().map(|x| (x / rho).ln_1p()))
}

/// Inverse transform of a whole matrix, with the number of entries clamped to zero.
pub fn inverse_transform(y: &Matrix, rho: f64) -> Result<(Matrix, usize), FactorError> {
    check_rho(rho)?;
    if !y.is_finite() {
        return Err(FactorError::InvalidInput("transformed matrix contains non-finite values".into()));
    }
    let mut clamped = 0;
    let mut out = y.clone();
    for v in out.as_mut_slice() {
        let (x, was_clamped) = inverse_scalar(*v, rho)?;
        clamped += was_clamped as usize;
        *v = x;
    }
    Ok((out, clamped))
}

#[inline]
fn inverse_scalar(y: f64, rho: f64) -> Result<(f64, bool), FactorError> {
    let x = rho * y.exp_m1();
    if !x.is_finite() {
        return Err(FactorError::Overflow { y, rho });
    }
    Ok(if x < 0.0 { (0.0, true) } else { (x, false) })
}

/// Leading `k` singular triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSvd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

impl TruncatedSvd {
    pub fn reconstruct(&self) -> Matrix {
        weighted(&self.u, &self.s).matmul(&self.v.transpose())
    }
}

/// Full decomposition, then keep the top `k` triplets.
pub fn truncated_svd(y: &Matrix, k: usize) -> Result<TruncatedSvd, FactorError> {
    let max_k = y.rows().min(y.cols());
    if k == 0 || k > max_k {
        return Err(FactorError::InvalidInput(format!("rank k = {k} must lie in 1..={max_k}")));
    }
    let full = svd(y)?;
    Ok(TruncatedSvd { u: full.u.leading_columns(k), s: full.s[..k].to_vec(), v: full.v.leading_columns(k) })
}

fn weighted(u: &Matrix, s: &[f64]) -> Matrix {
    Matrix::from_fn(u.rows(), u.cols(), |i, t| u[(i, t)] * s[t])
}

/// One channel of the factored representation.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredChannel {
    rho: f64,
    u: Matrix,
    s: Vec<f64>,
    v: Matrix,
    /// `u * diag(s)`, so one pair evaluation is exactly k multiply-adds.
    weighted_u: Matrix,
}

impl FactoredChannel {
    fn new(rho: f64, u: Matrix, s: Vec<f64>, v: Matrix) -> Self {
        let weighted_u = weighted(&u, &s);
        Self { rho, u, s, v, weighted_u }
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn u(&self) -> &Matrix {
        &self.u
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.s
    }

    pub fn v(&self) -> &Matrix {
        &self.v
    }

    /// Transformed-domain value at `(i, j)`.
    #[inline]
    fn transformed(&self, i: usize, j: usize) -> f64 {
        let a = self.weighted_u.row(i);
        let b = self.v.row(j);
        let mut acc = 0.0;
        for t in 0..a.len() {
            acc += a[t] * b[t];
        }
        acc
    }
}

/// Rank-k factored transport for three channels.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredBssrdf {
    k: usize,
    n_i: usize,
    n_o: usize,
    channels: [FactoredChannel; 3],
}

/// Reconstructed transport and how many entries had to be clamped to zero.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub transport: RgbTransport,
    pub clamped: [usize; 3],
}

impl Reconstruction {
    pub fn clamped_total(&self) -> usize {
        self.clamped.iter().sum()
    }
}

impl FactoredBssrdf {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_i(&self) -> usize {
        self.n_i
    }

    pub fn n_o(&self) -> usize {
        self.n_o
    }

    pub fn channel(&self, c: Channel) -> &FactoredChannel {
        &self.channels[c.index()]
    }

    pub fn params(&self) -> TransformParams {
        TransformParams { rho: [self.channels[0].rho, self.channels[1].rho, self.channels[2].rho] }
    }

    /// Checks orthonormality of the singular vectors (within `tol`) and the
    /// ordering and sign of the singular values.
    pub fn validate(&self, tol: f64) -> Result<(), FactorError> {
        if self.k == 0 || self.k > self.n_i.min(self.n_o) {
            return Err(FactorError::InvalidInput(format!("rank {} incompatible with {}x{}", self.k, self.n_i, self.n_o)));
        }
        for (c, ch) in self.channels.iter().enumerate() {
            check_rho(ch.rho)?;
            if ch.s.iter().any(|&x| !(x >= 0.0)) || ch.s.windows(2).any(|w| w[0] < w[1]) {
                return Err(FactorError::InvalidInput(format!("channel {c}: singular values not sorted nonnegative")));
            }
            for (name, m) in [("u", &ch.u), ("v", &ch.v)] {
                let gram = m.transpose().matmul(m);
                for a in 0..self.k {
                    for b in 0..self.k {
                        // A zero singular value leaves its vector pair arbitrary
                        // but the decomposition still returns unit vectors.
                        let expected = if a == b { 1.0 } else { 0.0 };
                        if (gram[(a, b)] - expected).abs() > tol {
                            return Err(FactorError::InvalidInput(format!(
                                "channel {c}: columns of {name} not orthonormal (gram[{a},{b}] = {})",
                                gram[(a, b)]
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Point evaluation of transport from incident sample `i` to exitant sample `j`.
    pub fn evaluate_pair(&self, i: usize, j: usize, channel: Channel) -> Result<f64, FactorError> {
        self.check_index(i, j)?;
        let ch = &self.channels[channel.index()];
        Ok(inverse_scalar(ch.transformed(i, j), ch.rho)?.0)
    }

    /// Like [`Self::evaluate_pair`], adding the number of multiply-accumulate
    /// terms performed to `terms`.
    pub fn evaluate_pair_counted(&self, i: usize, j: usize, channel: Channel, terms: &mut u64) -> Result<f64, FactorError> {
        self.check_index(i, j)?;
        let ch = &self.channels[channel.index()];
        let a = ch.weighted_u.row(i);
        let b = ch.v.row(j);
        let mut acc = 0.0;
        for t in 0..a.len() {
            acc += a[t] * b[t];
            *terms += 1;
        }
        Ok(inverse_scalar(acc, ch.rho)?.0)
    }

    /// All three channels at once; the renderer's hot path.
    #[inline]
    pub fn evaluate_rgb(&self, i: usize, j: usize) -> Result<[f64; 3], FactorError> {
        self.check_index(i, j)?;
        let mut out = [0.0; 3];
        for (o, ch) in out.iter_mut().zip(&self.channels) {
            *o = inverse_scalar(ch.transformed(i, j), ch.rho)?.0;
        }
        Ok(out)
    }

    #[inline]
    fn check_index(&self, i: usize, j: usize) -> Result<(), FactorError> {
        if i >= self.n_i || j >= self.n_o {
            return Err(FactorError::IndexOutOfRange { i, j, n_i: self.n_i, n_o: self.n_o });
        }
        Ok(())
    }

    /// Size of the JSON header in the `GPSF` encoding.
    pub fn header_bytes(&self) -> usize {
        self.header_json().len()
    }

    fn header_json(&self) -> Vec<u8> {
        let h = FactoredHeader {
            format: "gpsf".into(),
            k: self.k,
            n_i: self.n_i,
            n_o: self.n_o,
            transform: TRANSFORM_NAME.into(),
        };
        serde_json::to_vec(&h).expect("factored header serializes")
    }

    /// Exact serialized size of the factored archive in bytes.
    pub fn storage_bytes(&self) -> u64 {
        (PREAMBLE_LEN + self.header_bytes()) as u64 + factored_payload_bytes(self.k, self.n_i, self.n_o)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = self.header_json();
        let mut out = Vec::with_capacity(self.storage_bytes() as usize);
        out.extend_from_slice(FACTORED_MAGIC);
        out.extend_from_slice(&FACTORED_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        let mut put = |x: f64| out.extend_from_slice(&(x as f32).to_le_bytes());
        for ch in &self.channels {
            put(ch.rho);
            ch.u.as_slice().iter().for_each(|&x| put(x));
            ch.s.iter().for_each(|&x| put(x));
            ch.v.as_slice().iter().for_each(|&x| put(x));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FactorError> {
        let malformed = |offset: usize, reason: String| FactorError::Malformed { offset, reason };
        if bytes.len() < PREAMBLE_LEN {
            return Err(malformed(0, format!("file too short ({} bytes)", bytes.len())));
        }
        if &bytes[0..4] != FACTORED_MAGIC {
            return Err(malformed(0, "bad magic, expected \"GPSF\"".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FACTORED_VERSION {
            return Err(malformed(4, format!("unsupported version {version}")));
        }
        let header_len = u32::from_le_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]) as usize;
        let header_end = PREAMBLE_LEN
            .checked_add(header_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| malformed(6, "header length exceeds file".into()))?;
        let h: FactoredHeader = serde_json::from_slice(&bytes[PREAMBLE_LEN..header_end])
            .map_err(|e| malformed(PREAMBLE_LEN, e.to_string()))?;
        if h.transform != TRANSFORM_NAME {
            return Err(malformed(PREAMBLE_LEN, format!("unknown transform `{}`", h.transform)));
        }
        let (k, n_i, n_o) = (h.k, h.n_i, h.n_o);
        if k == 0 || n_i == 0 || n_o == 0 || k > n_i.min(n_o) {
            return Err(malformed(PREAMBLE_LEN, format!("inconsistent dims k={k}, n_i={n_i}, n_o={n_o}")));
        }
        let expected = header_end as u64 + factored_payload_bytes(k, n_i, n_o);
        if bytes.len() as u64 != expected {
            return Err(malformed(header_end, format!("payload size mismatch: file is {} bytes, expected {expected}", bytes.len())));
        }

        let mut pos = header_end;
        let mut next = || -> Result<f64, FactorError> {
            let x = f32::from_le_bytes([bytes[pos], bytes[pos + 1], bytes[pos + 2], bytes[pos + 3]]) as f64;
            if !x.is_finite() {
                return Err(FactorError::Malformed { offset: pos, reason: "non-finite value".into() });
            }
            pos += 4;
            Ok(x)
        };
        let mut read_channel = || -> Result<FactoredChannel, FactorError> {
            let rho = next()?;
            let u = (0..n_i * k).map(|_| next()).collect::<Result<Vec<_>, _>>()?;
            let s = (0..k).map(|_| next()).collect::<Result<Vec<_>, _>>()?;
            let v = (0..n_o * k).map(|_| next()).collect::<Result<Vec<_>, _>>()?;
            Ok(FactoredChannel::new(rho, Matrix::from_vec(n_i, k, u), s, Matrix::from_vec(n_o, k, v)))
        };
        let channels = [read_channel()?, read_channel()?, read_channel()?];
        let f = FactoredBssrdf { k, n_i, n_o, channels };
        // f32 storage loosens orthonormality slightly.
        f.validate(1e-4)?;
        Ok(f)
    }

    /// Write the `GPSF` archive; returns bytes written (equal to [`Self::storage_bytes`]).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<u64, FactorError> {
        let path = path.as_ref();
        let bytes = self.to_bytes();
        std::fs::write(path, &bytes).map_err(|source| FactorError::IoFailure { path: path.to_path_buf(), source })?;
        Ok(bytes.len() as u64)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FactorError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| FactorError::IoFailure { path: path.to_path_buf(), source })?;
        Self::from_bytes(&bytes)
    }

    /// Round every stored value through f32, giving exactly the model a
    /// `save` + `load` cycle would produce.
    pub fn quantized(&self) -> Self {
        let q = |m: &Matrix| m.map(|x| x as f32 as f64);
        let channels = self.channels.clone().map(|ch| {
            FactoredChannel::new(ch.rho as f32 as f64, q(&ch.u), ch.s.iter().map(|&x| x as f32 as f64).collect(), q(&ch.v))
        });
        Self { k: self.k, n_i: self.n_i, n_o: self.n_o, channels }
    }
}

#[derive(Serialize, Deserialize)]
struct FactoredHeader {
    format: String,
    k: usize,
    n_i: usize,
    n_o: usize,
    transform: String,
}

/// Payload bytes of a rank-k factored archive: `3 * (k * (n_i + n_o + 1) + 1) * 4`.
pub fn factored_payload_bytes(k: usize, n_i: usize, n_o: usize) -> u64 {
    3 * (k as u64 * (n_i as u64 + n_o as u64 + 1) + 1) * 4
}

/// Transform and factor every channel at rank `k`.
pub fn compress(transport: &RgbTransport, params: &TransformParams, k: usize) -> Result<FactoredBssrdf, FactorError> {
    let n_i = transport[0].rows();
    let n_o = transport[0].cols();
    if transport.iter().any(|m| m.rows() != n_i || m.cols() != n_o) {
        return Err(FactorError::InvalidInput("channel matrices differ in shape".into()));
    }
    if k == 0 || k > n_i.min(n_o) {
        return Err(FactorError::InvalidInput(format!("rank k = {k} must lie in 1..={}", n_i.min(n_o))));
    }
    let mut channels = Vec::with_capacity(3);
    for (m, &rho) in transport.iter().zip(&params.rho) {
        let y = forward_transform(m, rho)?;
        let t = truncated_svd(&y, k)?;
        channels.push(FactoredChannel::new(rho, t.u, t.s, t.v));
    }
    let channels: [FactoredChannel; 3] = channels.try_into().expect("three channels");
    Ok(FactoredBssrdf { k, n_i, n_o, channels })
}

/// Back to measured space: `inverse_transform(u diag(s) v^T)` per channel.
pub fn reconstruct(f: &FactoredBssrdf) -> Result<Reconstruction, FactorError> {
    let mut clamped = [0usize; 3];
    let mut mats = Vec::with_capacity(3);
    for (c, channel) in Channel::ALL.into_iter().enumerate() {
        let ch = &f.channels[c];
        let mut values = Matrix::zeros(f.n_i, f.n_o);
        for i in 0..f.n_i {
            for j in 0..f.n_o {
                let (x, was_clamped) = inverse_scalar(ch.transformed(i, j), ch.rho)?;
                clamped[c] += was_clamped as usize;
                values[(i, j)] = x;
            }
        }
        mats.push(ScatteringMatrix::new(channel, values).expect("clamped reconstruction is nonnegative"));
    }
    let transport: RgbTransport = mats.try_into().expect("three channels");
    Ok(Reconstruction { transport, clamped })
}
