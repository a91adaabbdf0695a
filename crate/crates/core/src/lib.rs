//! Projection-aware block-based motion estimation for circular fisheye video.
//!
//! The crate covers the full chain used to evaluate fisheye motion estimation:
//!
//! * [`geometry`]: radial projection functions, fisheye/perspective coordinate
//!   transforms, ultra wide-angle compensation and calibrated lookup tables.
//! * [`frames`]: luminance frames, image I/O, 1/8-pel cubic upscaling and the
//!   circular validity mask.
//! * [`blockmatch`]: exhaustive block matching (TME, EME+, CME+) and motion
//!   compensation.
//! * [`fruc`]: frame-rate up-conversion (repetition, linear average, motion
//!   compensated fetching and averaging) with central weighted median re-timing.
//! * [`metrics`]: PSNR and SSIM restricted to the fisheye disc.
//! * [`synth`]: synthetic fisheye sequences with known perspective-domain motion.
//! * [`cli`]: the command-line front end.
//!
//! Block- and pixel-level loops run on rayon when the `parallel` feature is
//! enabled (the default). Every result is independent of scheduling.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blockmatch;
pub mod cli;
pub mod exec;
pub mod frames;
pub mod fruc;
pub mod geometry;
pub mod metrics;
pub mod synth;

pub use blockmatch::{
    compensate, estimate, estimate_projected, estimate_tme, Method, Metric, MotionField,
    MotionVector, SearchConfig,
};
pub use exec::Execution;
pub use frames::{load_frame, save_frame, upscale, CircularMask, Frame, UpscaledFrame};
pub use geometry::{CameraGeometry, Lens, ProjectionModel, RadialMap};
