//! Adversarial frame filtering for video streams.
//!
//! The crate covers the whole loop: decode a Y4M video into PPM frames,
//! perturb them with the fast gradient sign method against a small seeded
//! CNN, extract multi-scale statistics per frame, score the frames with an
//! isolation forest, and report the results as metrics, SVG charts and
//! border-decorated frames.

pub mod attack;
pub mod cli;
pub mod eval;
pub mod features;
pub mod frame_io;
pub mod isoforest;
pub mod parallel;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod synth;
pub mod tinynet;

pub use frame_io::{DatasetManifest, Frame, ManifestEntry, Role};
