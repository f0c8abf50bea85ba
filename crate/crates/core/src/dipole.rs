//! Classical single-dipole diffusion model for homogeneous media.
//!
//! Per channel, with reduced scattering `s'`, absorption `a` and relative
//! index `eta`:
//!
//! ```text
//! s_t' = s' + a          alpha' = s' / s_t'        s_tr = sqrt(3 a s_t')
//! z_r = 1 / s_t'         z_v = z_r (1 + 4A/3)      A = (1 + F_dr) / (1 - F_dr)
//! R_d(r) = alpha'/(4 pi) [ z_r (1 + s_tr d_r) e^{-s_tr d_r} / d_r^3
//!                        + z_v (1 + s_tr d_v) e^{-s_tr d_v} / d_v^3 ]
//! ```
//!
//! with `d_r = sqrt(r^2 + z_r^2)` and `d_v = sqrt(r^2 + z_v^2)`. Coefficients
//! are in 1/m, so `R_d` is in 1/m².

use crate::linalg::Matrix;
use crate::material::{Channel, DipoleParams, RgbTransport, ScatteringMatrix, SurfaceSampleSet};
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DipoleError {
    #[error("relative index of refraction {0} outside (1, 3)")]
    DomainError(f64),
    #[error("`{field}` for channel {channel} must be positive and finite, got {value}")]
    InvalidCoefficient { field: &'static str, channel: usize, value: f64 },
}

/// Diffuse Fresnel reflectance, rational fit in `eta`.
pub fn fresnel_diffuse(eta: f64) -> Result<f64, DipoleError> {
    if !(eta > 1.0 && eta < 3.0) {
        return Err(DipoleError::DomainError(eta));
    }
    Ok(-1.440 / (eta * eta) + 0.710 / eta + 0.668 + 0.0636 * eta)
}

/// Derived per-channel dipole quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DipoleChannel {
    pub sigma_t_prime: f64,
    pub alpha_prime: f64,
    pub sigma_tr: f64,
    pub z_r: f64,
    pub z_v: f64,
}

impl DipoleChannel {
    fn new(sigma_s_prime: f64, sigma_a: f64, a_boundary: f64) -> Self {
        let sigma_t_prime = sigma_s_prime + sigma_a;
        let z_r = 1.0 / sigma_t_prime;
        Self {
            sigma_t_prime,
            alpha_prime: sigma_s_prime / sigma_t_prime,
            sigma_tr: (3.0 * sigma_a * sigma_t_prime).sqrt(),
            z_r,
            z_v: z_r * (1.0 + 4.0 * a_boundary / 3.0),
        }
    }

    #[inline]
    pub fn reflectance(&self, r: f64) -> f64 {
        let term = |z: f64| {
            let d = (r * r + z * z).sqrt();
            z * (1.0 + self.sigma_tr * d) * (-self.sigma_tr * d).exp() / (d * d * d)
        };
        self.alpha_prime / (4.0 * PI) * (term(self.z_r) + term(self.z_v))
    }

    /// Closed-form total diffuse reflectance `2 pi * int_0^inf R_d(r) r dr`.
    pub fn total_reflectance(&self, a_boundary: f64) -> f64 {
        let s = (3.0 * (1.0 - self.alpha_prime)).sqrt();
        self.alpha_prime / 2.0 * (1.0 + (-4.0 / 3.0 * a_boundary * s).exp()) * (-s).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DipoleMaterial {
    params: DipoleParams,
    fresnel: f64,
    boundary: f64,
    channels: [DipoleChannel; 3],
}

impl DipoleMaterial {
    pub fn new(params: DipoleParams) -> Result<Self, DipoleError> {
        for c in 0..3 {
            for (field, value) in [("sigma_s_prime", params.sigma_s_prime[c]), ("sigma_a", params.sigma_a[c])] {
                if !(value > 0.0 && value.is_finite()) {
                    return Err(DipoleError::InvalidCoefficient { field, channel: c, value });
                }
            }
        }
        let fresnel = fresnel_diffuse(params.eta)?;
        let boundary = (1.0 + fresnel) / (1.0 - fresnel);
        let channels = [0, 1, 2].map(|c| DipoleChannel::new(params.sigma_s_prime[c], params.sigma_a[c], boundary));
        Ok(Self { params, fresnel, boundary, channels })
    }

    pub fn params(&self) -> &DipoleParams {
        &self.params
    }

    pub fn fresnel(&self) -> f64 {
        self.fresnel
    }

    /// The boundary mismatch term `A`.
    pub fn boundary(&self) -> f64 {
        self.boundary
    }

    pub fn channel(&self, c: Channel) -> &DipoleChannel {
        &self.channels[c.index()]
    }

    /// `R_d(r)` per channel, 1/m².
    #[inline]
    pub fn diffuse_reflectance(&self, r: f64) -> [f64; 3] {
        [self.channels[0].reflectance(r), self.channels[1].reflectance(r), self.channels[2].reflectance(r)]
    }

    pub fn total_diffuse_reflectance(&self) -> [f64; 3] {
        self.channels.map(|ch| ch.total_reflectance(self.boundary))
    }

    /// `T[i][j] = R_d(|x_i - x_j|) * area_j`.
    pub fn as_scattering_matrix(&self, samples: &SurfaceSampleSet) -> RgbTransport {
        let n = samples.len();
        Channel::ALL.map(|channel| {
            let ch = &self.channels[channel.index()];
            let values = Matrix::from_fn(n, n, |i, j| {
                ch.reflectance(samples.points[i].distance(samples.points[j])) * samples.areas[j]
            });
            ScatteringMatrix::new(channel, values).expect("dipole transport is positive")
        })
    }
}
