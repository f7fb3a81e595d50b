//! Geometry, multi-mask view synthesis, losses and evaluation for self-supervised
//! monocular depth and ego-motion, plus a synthetic scene generator with a visibility
//! oracle.

// NaN-rejecting checks are written as negated comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod image;
pub mod io;
pub mod losses;
pub mod masks;
pub mod metrics;
pub mod refine;
pub mod synth;
pub mod warp;

pub use error::{Error, Result};
pub use geometry::{DepthMap, Intrinsics, PointCloud, PoseSE3, Twist};
pub use grid::{Grid, Mask};
pub use image::ImageBuffer;
pub use losses::{LossConfig, LossReport, LossWeights};
pub use masks::{MaskSet, TwoWayMasks};
pub use warp::ProjectionRecord;
