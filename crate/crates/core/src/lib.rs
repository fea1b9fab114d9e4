//! Multi-view underwater color restoration.
//!
//! Pixels of a target image are tracked across every other posed view of
//! the scene using depth maps and camera poses. The tracked intensities,
//! observed at different distances, constrain a per-channel underwater
//! image formation model
//!
//! ```text
//! I = J * exp(-beta * z) + B * (1 - exp(-gamma * z))
//! ```
//!
//! whose parameters are fitted jointly with the unattenuated image `J` by
//! full-batch Adam on the sum of squared residuals.

pub mod diagnostics;
pub mod error;
pub mod geometry;
pub mod image;
pub mod ingest;
pub mod metrics;
pub mod optimizer;
pub mod pairing;
pub mod pfm;
pub mod report;
pub mod restore;
pub mod synth;
pub mod uifm;

pub use error::{Error, ErrorKind, Result};
pub use geometry::{CameraPose, DistanceMode, Intrinsics, PixelHomogeneous, Transform};
pub use image::{DepthMap, Image8, PosedImage, RgbImage};
pub use optimizer::{AdamConfig, FreezeSet, RestorationState};
pub use pairing::ObservationSet;
pub use restore::{RestoreOptions, RestoredImage};
pub use uifm::{ModelMode, UifmParams};
