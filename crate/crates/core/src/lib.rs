//! Optical-flow-free video stabilization toolkit.
//!
//! The crate covers the full desk-scale pipeline: synthetic stable/unstable
//! pair generation ([`synth`]), iterative frame-interpolation smoothing
//! ([`interp`]), residual stabilization and refinement networks with
//! two-stage training ([`nn`], [`train`]), and the trajectory-based
//! stability / distortion / cropping evaluation suite ([`metrics`]).

pub mod error;
pub mod interp;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod signal;
pub mod synth;
pub mod train;
pub mod warp;

pub use error::{Error, Result};
pub use interp::{Interpolator, StabilizeConfig};
pub use io::{Frame, FrameSequence, Patch, SequenceManifest};
pub use metrics::{Homography, MetricsReport, PoseDecomposition, Spectrum};
pub use synth::{JitterSpec, RefinerSample, StabPair, Trajectory};
