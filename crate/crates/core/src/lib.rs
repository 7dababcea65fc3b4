//! Label-flip uncertainty toolkit for brain-tumor segmentation outputs.
//!
//! Everything in this crate is a pure function of its inputs and runs without
//! `std` (an allocator is required). File formats, configuration files and
//! the command-line front end live in the `flipseg` crate.
//!
//! Modules, bottom-up:
//!
//! * [`volume`]: dense 3D grids, nonzero standardization, connected
//!   components, axis flips.
//! * [`losses`]: focal, BCE, KL and focal-KL losses, the label-flip loss and
//!   the λ-mixed combined loss, all with analytic gradients.
//! * [`ensemble`]: fusion of `(p, q)` pairs into a single probability.
//! * [`refine`]: confidence-gated re-thresholding of WT/TC/ET masks.
//! * [`uncertainty`]: 0–100 certainty maps and filtered-Dice evaluation.
//! * [`metrics`]: Dice and Hausdorff-95.
//! * [`survival`]: count features, capped OLS, random forest and the fused
//!   survival predictor.
//! * [`phantom`]: seeded nested-sphere phantoms used as a test substrate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod ensemble;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod phantom;
pub mod refine;
pub mod survival;
pub mod uncertainty;
pub mod volume;

mod linalg;
mod stats;

pub use error::{Error, Result};
pub use volume::{Axis, Connectivity, Grid, LabelMap, Mask3D, Volume3D, Voxel};
