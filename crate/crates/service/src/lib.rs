//! Command-line and HTTP front ends for the material workflow: pick a
//! material and K, compress it, render a preview, benchmark a directory.

pub mod api;
pub mod config;
pub mod jobs;
pub mod preview;
