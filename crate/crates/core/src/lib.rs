//! End-to-end image steganalysis built from first principles.
//!
//! Two jointly trained sub-networks: a one-layer reconstruction network whose
//! residuals expose embedding noise, and a compact convolutional classifier
//! over the residual stack. Training minimizes a weighted joint loss
//! `J = (1 - lambda) * Jc + lambda * Jr` with SGD + momentum, so the residual
//! kernels receive gradients from both the reconstruction error and the
//! classifier.
//!
//! The crate also ships a seeded synthetic cover/stego pair generator
//! (LSB-matching embedder over procedural textures) so the whole pipeline can
//! be exercised and verified at desk scale, plus bit-exact PGM and checkpoint
//! I/O.
//!
//! All arithmetic runs through the [`Real`] alias (f64 by default; the `f32`
//! feature switches the whole crate to single precision). With the default
//! `parallel` feature the hot kernels are data-parallel via rayon; reductions
//! keep a fixed summation order so results are bit-identical regardless of
//! worker count.

pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod model;
pub mod ops;
pub mod pgm;
pub mod residual;
pub mod rng;
pub mod stegnet;
pub mod stegosim;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use model::ModelState;
pub use tensor::{Real, Tensor4};
