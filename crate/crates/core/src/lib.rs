//! Building blocks for ISP-less vision pipelines on raw sensor data.
//!
//! * [`cfa`]: Bayer mosaicing, a bilinear demosaic baseline and the
//!   tile-level in-pixel demosaic.
//! * [`pixelsim`]: cycle-level model of the dual select-line pixel read-out
//!   that produces the in-pixel demosaic directly from the array.
//! * [`invisp`]: invertible ISP built from affine coupling layers and
//!   invertible channel mixing, with an analytic-gradient trainer.
//! * [`p2m`]: demosaic fused into a strided first convolution layer.
//! * [`analysis`]: intensity histograms, distribution-shift metrics and
//!   sensor-link bandwidth accounting.

pub mod analysis;
pub mod cfa;
pub mod error;
pub mod image;
pub mod invisp;
pub mod netpbm;
pub mod p2m;
pub mod pixelsim;
pub mod prng;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use image::{normalize, BayerImage, CfaPattern, Channel, RgbEncoding, RgbImage};
pub use netpbm::{load_image, save_image, AnyImage};
pub use prng::Prng;
pub use tensor::{DType, Real, Tensor};
