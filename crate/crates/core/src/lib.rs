//! Two-stage MR→CT registration for thermal-ablation guidance, at desk
//! scale.
//!
//! The pipeline overlays a pre-procedural MR image onto an intra-procedural
//! CT image in two stages:
//! 1. pre-procedural: unpaired MR→CT synthesis turns the cross-modality
//!    problem into CT-CT, solved by classical rigid + deformable
//!    registration;
//! 2. intra-procedural: the ablation probe and its streak artifacts are
//!    inpainted away with a partial-convolution U-Net, then a fast
//!    unsupervised registration network aligns the planning CT with the
//!    inpainted CT.
//!
//! The two displacement fields are composed into a single transform.
//! Everything is validated end-to-end on synthetic phantoms with known
//! ground truth.

pub mod error;
pub mod grid;
mod interp;
pub mod metrics;
pub mod neural;
pub mod xform;

pub use error::{Error, Result};
