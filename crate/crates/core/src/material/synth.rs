//! Synthetic stand-ins for measured materials.
//!
//! Samples lie on a regular grid over a flat square patch in the z = 0 plane.
//! Transport from incident sample `i` to exitant sample `j` is
//!
//! ```text
//! T_c[i][j] = albedo_c * sigma_c(x_i)^2 / (2 pi) * exp(-sigma_c(x_i) * |x_i - x_j|)
//! ```
//!
//! where `sigma_c(x) = sigma(x, pattern) * SIGMA_CHANNEL_SCALE[c]`. The
//! prefactor normalizes the planar integral of the kernel to `albedo_c`.
//! Every stored value is rounded to f32 so the data survives the archive
//! format bit-exactly.
//!
//! Decay rates per pattern (1/m): Uniform 50; Chessboard alternates 30 and 90;
//! VeinedMarble is 40 with 120 inside veins, where veins are the band
//! `|noise - 0.5| < VEIN_HALF_WIDTH` of seeded bilinear value noise.

use super::{Channel, RgbTransport, ScatteringMatrix, SurfaceSampleSet};
use crate::geometry::Vec3;
use crate::linalg::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Edge length of the synthetic sample patch in meters.
pub const PATCH_SIZE_M: f64 = 0.1;
pub const SIGMA_CHANNEL_SCALE: [f64; 3] = [0.8, 1.0, 1.25];
pub const DEFAULT_ALBEDO: [f64; 3] = [0.9, 0.8, 0.7];

const SIGMA_UNIFORM: f64 = 50.0;
const SIGMA_CHECKER_LIGHT: f64 = 30.0;
const SIGMA_CHECKER_DARK: f64 = 90.0;
const SIGMA_MARBLE_BASE: f64 = 40.0;
const SIGMA_MARBLE_VEIN: f64 = 120.0;
const NOISE_LATTICE: usize = 6;
const VEIN_HALF_WIDTH: f64 = 0.08;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pattern {
    Chessboard4,
    Chessboard8,
    VeinedMarble,
    Uniform,
}

impl std::str::FromStr for Pattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "chessboard4" => Ok(Pattern::Chessboard4),
            "chessboard8" => Ok(Pattern::Chessboard8),
            "veinedmarble" | "marble" => Ok(Pattern::VeinedMarble),
            "uniform" => Ok(Pattern::Uniform),
            other => Err(format!("unknown pattern `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("sample count {0} must be a perfect square >= 16")]
    BadSampleCount(usize),
    #[error("albedo must lie in (0, 1], got {0:?}")]
    BadAlbedo([f64; 3]),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub pattern: Pattern,
    pub seed: u64,
    pub albedo: [f64; 3],
}

impl SyntheticSpec {
    pub fn new(pattern: Pattern, seed: u64) -> Self {
        Self { pattern, seed, albedo: DEFAULT_ALBEDO }
    }
}

/// Generate a synthetic material with the default albedo.
pub fn synthesize_heterogeneous(
    n: usize,
    pattern: Pattern,
    seed: u64,
) -> Result<(SurfaceSampleSet, RgbTransport), SynthError> {
    synthesize_with(n, &SyntheticSpec::new(pattern, seed))
}

pub fn synthesize_with(n: usize, spec: &SyntheticSpec) -> Result<(SurfaceSampleSet, RgbTransport), SynthError> {
    let side = grid_side(n).ok_or(SynthError::BadSampleCount(n))?;
    if spec.albedo.iter().any(|&a| !(a > 0.0 && a <= 1.0)) {
        return Err(SynthError::BadAlbedo(spec.albedo));
    }

    let cell = PATCH_SIZE_M / side as f64;
    let area = round_f32(cell * cell);
    let mut points = Vec::with_capacity(n);
    let mut uv = Vec::with_capacity(n);
    for iy in 0..side {
        for ix in 0..side {
            let u = (ix as f64 + 0.5) / side as f64;
            let v = (iy as f64 + 0.5) / side as f64;
            uv.push((u, v));
            points.push(Vec3::new(round_f32(u * PATCH_SIZE_M), round_f32(v * PATCH_SIZE_M), 0.0));
        }
    }
    let samples = SurfaceSampleSet::new(points, vec![Vec3::new(0.0, 0.0, 1.0); n], vec![area; n])
        .expect("grid sample set is valid");

    let noise = ValueNoise::new(spec.seed);
    let sigma: Vec<f64> = uv.iter().map(|&(u, v)| decay_rate(spec.pattern, u, v, &noise)).collect();

    let transport = Channel::ALL.map(|channel| {
        let c = channel.index();
        let values = Matrix::from_fn(n, n, |i, j| {
            let s = sigma[i] * SIGMA_CHANNEL_SCALE[c];
            let d = samples.points[i].distance(samples.points[j]);
            round_f32(spec.albedo[c] * s * s / (2.0 * PI) * (-s * d).exp())
        });
        ScatteringMatrix::new(channel, values).expect("synthetic transport is nonnegative")
    });
    Ok((samples, transport))
}

fn grid_side(n: usize) -> Option<usize> {
    if n < 16 {
        return None;
    }
    let side = (n as f64).sqrt().round() as usize;
    (side * side == n).then_some(side)
}

fn round_f32(x: f64) -> f64 {
    x as f32 as f64
}

/// Base decay rate (1/m) at patch coordinates `(u, v)` in `[0, 1)^2`.
fn decay_rate(pattern: Pattern, u: f64, v: f64, noise: &ValueNoise) -> f64 {
    let checker = |cells: f64| {
        let parity = ((u * cells).floor() as i64 + (v * cells).floor() as i64).rem_euclid(2);
        if parity == 0 {
            SIGMA_CHECKER_LIGHT
        } else {
            SIGMA_CHECKER_DARK
        }
    };
    match pattern {
        Pattern::Uniform => SIGMA_UNIFORM,
        Pattern::Chessboard4 => checker(4.0),
        Pattern::Chessboard8 => checker(8.0),
        Pattern::VeinedMarble => {
            if (noise.sample(u, v) - 0.5).abs() < VEIN_HALF_WIDTH {
                SIGMA_MARBLE_VEIN
            } else {
                SIGMA_MARBLE_BASE
            }
        }
    }
}

/// Bilinear value noise on a seeded lattice with smoothstep interpolation.
struct ValueNoise {
    lattice: Vec<f64>,
}

impl ValueNoise {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let size = NOISE_LATTICE + 1;
        Self { lattice: (0..size * size).map(|_| rng.random::<f64>()).collect() }
    }

    fn at(&self, ix: usize, iy: usize) -> f64 {
        self.lattice[iy * (NOISE_LATTICE + 1) + ix]
    }

    fn sample(&self, u: f64, v: f64) -> f64 {
        let x = u.clamp(0.0, 1.0) * NOISE_LATTICE as f64;
        let y = v.clamp(0.0, 1.0) * NOISE_LATTICE as f64;
        let ix = (x.floor() as usize).min(NOISE_LATTICE - 1);
        let iy = (y.floor() as usize).min(NOISE_LATTICE - 1);
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        let fx = smooth(x - ix as f64);
        let fy = smooth(y - iy as f64);
        let top = self.at(ix, iy) * (1.0 - fx) + self.at(ix + 1, iy) * fx;
        let bottom = self.at(ix, iy + 1) * (1.0 - fx) + self.at(ix + 1, iy + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn distinct_rates(t: &ScatteringMatrix) -> Vec<f64> {
        // Diagonal entries are albedo * s^2 / 2pi, so they identify each row's rate.
        let mut diag: Vec<f64> = (0..t.rows()).map(|i| t.get(i, i)).collect();
        diag.sort_by(|a, b| a.partial_cmp(b).unwrap());
        diag.dedup();
        diag
    }

    #[test]
    fn bad_sample_counts() {
        assert_eq!(synthesize_heterogeneous(15, Pattern::Uniform, 0).unwrap_err(), SynthError::BadSampleCount(15));
        assert_eq!(synthesize_heterogeneous(9, Pattern::Uniform, 0).unwrap_err(), SynthError::BadSampleCount(9));
        assert_eq!(synthesize_heterogeneous(20, Pattern::Uniform, 0).unwrap_err(), SynthError::BadSampleCount(20));
        assert!(synthesize_heterogeneous(16, Pattern::Uniform, 0).is_ok());
    }

    #[test]
    fn chessboard4_has_two_rates_in_block_layout() {
        let (_, t) = synthesize_heterogeneous(64, Pattern::Chessboard4, 1).unwrap();
        assert_eq!(distinct_rates(&t[1]).len(), 2);
        // 8x8 grid, 4x4 checker => 2x2 sample blocks share a rate.
        let rate = |ix: usize, iy: usize| t[1].get(iy * 8 + ix, iy * 8 + ix);
        assert_eq!(rate(0, 0), rate(1, 1));
        assert_ne!(rate(0, 0), rate(2, 0));
        assert_eq!(rate(0, 0), rate(2, 2));
    }

    #[test]
    fn uniform_has_constant_rate() {
        let (_, t) = synthesize_heterogeneous(16, Pattern::Uniform, 7).unwrap();
        for m in &t {
            assert_eq!(distinct_rates(m).len(), 1);
        }
    }

    #[test]
    fn marble_has_veins_and_depends_on_seed() {
        let (_, a) = synthesize_heterogeneous(256, Pattern::VeinedMarble, 3).unwrap();
        let (_, b) = synthesize_heterogeneous(256, Pattern::VeinedMarble, 4).unwrap();
        assert_eq!(distinct_rates(&a[0]).len(), 2);
        assert_ne!(a, b);
        let (_, a2) = synthesize_heterogeneous(256, Pattern::VeinedMarble, 3).unwrap();
        assert_eq!(a, a2);
    }

    #[test]
    fn kernel_integrates_to_albedo() {
        // Planar integral of s^2/2pi exp(-s r) is 1; check the prefactor numerically.
        let s = 50.0;
        let steps = 200_000;
        let rmax = 2.0;
        let h = rmax / steps as f64;
        let total: f64 = (0..steps)
            .map(|k| {
                let r = (k as f64 + 0.5) * h;
                s * s / (2.0 * PI) * (-s * r).exp() * 2.0 * PI * r * h
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-6);
    }
}
