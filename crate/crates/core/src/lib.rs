//! Neural impulse-response fields.
//!
//! A coordinate MLP maps `(x, y, z, t)` to the `t`-th tap of the filter at
//! position `(x, y, z)`. Filters are fitted through the source convolution,
//! either with a waveform squared error or with a magnitude-spectrum loss that
//! jointly learns a stationary noise amplitude spectrum. Classical Wiener,
//! NLMS and grid interpolation baselines are included for comparison.

pub mod baselines;
pub mod dsp;
pub mod error;
pub mod gradcheck;
pub mod losses;
pub mod model_io;
pub mod nn;
pub mod noise;
pub mod render;
pub mod studies;
pub mod synth;
pub mod train;
pub mod wav;

pub use error::{Error, Result};
