//! Heart-rate estimation from face video by remote photoplethysmography.
//!
//! The pipeline has four stages:
//!
//! 1. [`roi`]: forehead and cheek rectangles from a tracked face box;
//! 2. [`pulse::extract_traces`]: per-frame spatial means of each region;
//! 3. [`pulse::extract_pulse`]: normalization, detrending, bandpass
//!    filtering, channel combination and region fusion;
//! 4. [`spectral`]: one spectral-peak estimate per temporal window.
//!
//! [`eval`] scores the resulting series against 1 Hz groundtruth under a
//! session-average and a continuous-monitoring protocol, and [`synth`]
//! renders sessions with a known pulse for end-to-end checks.

pub mod error;
pub mod eval;
pub mod frame_io;
pub mod pipeline;
pub mod pulse;
pub mod roi;
pub mod spectral;
pub mod synth;

pub use error::{Error, Result};
pub use eval::{ChannelLabel, EvalReport, GroundTruth, SessionInput};
pub use frame_io::{open_session, Frame, FrameSource, FrameStream, PixelFormat, SessionManifest};
pub use pipeline::{estimate_session, PipelineConfig};
pub use pulse::{BandLimits, CombineMethod, PulseConfig, PulseSignal, RawTrace};
pub use roi::{FaceBox, RoiLayout, RoiSet};
pub use spectral::{HrEstimate, HrSeries, WindowSpec};
pub use synth::{HrProfile, SynthConfig};

/// Incremental mean; a run of identical values averages to exactly that
/// value.
pub(crate) fn running_mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut mean = 0.0;
    let mut n = 0usize;
    for v in values {
        n += 1;
        mean += (v - mean) / n as f64;
    }
    (n > 0).then_some(mean)
}
