//! SMTT: graph-regularized joint-sparse particle tracking.
//!
//! Per frame, candidate target states (particles) are sampled around the
//! previous estimate; their image patches form an observation matrix that is
//! jointly coded over a combined appearance/occlusion dictionary. The code is
//! regularized by a mixed l_{p,q} norm and a graph-Laplacian smoothness term
//! built from particle feature similarity, and solved by accelerated proximal
//! gradient. Particle likelihoods come from the appearance-only residual;
//! the maximum-weight particle is the frame's output.

pub mod dictionary;
pub mod error;
pub mod graph;
pub mod image;
pub mod metrics;
pub mod particles;
pub mod seq_io;
pub mod solver;
pub mod synth;
pub mod tracker;

pub use error::{Result, SmttError};
pub use image::GrayImage;
pub use particles::TargetBox;
