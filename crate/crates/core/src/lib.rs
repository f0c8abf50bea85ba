//! Compression, evaluation and rendering of measured subsurface-scattering
//! transport.
//!
//! Measured transport is stored as a dense matrix per color channel
//! ([`material`]), compressed by a log-range transform plus rank-K truncated
//! SVD ([`factor`]) whose per-channel range is tuned by a real-coded genetic
//! algorithm ([`ga`]). A classical dipole model ([`dipole`]) serves as the
//! homogeneous baseline. [`render`] draws either model with a two-pass
//! irradiance-gathering renderer and [`bench`] collects per-material timing,
//! evaluation counts and storage sizes.

pub mod factor;
pub mod geometry;
pub mod linalg;
pub mod material;
pub mod ga;
pub mod dipole;
pub mod render;
pub mod pipeline;
pub mod bench;
