//! End-to-end estimation: frames and boxes in, heart-rate series out.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame_io::{open_session, FrameSource, SessionManifest};
use crate::pulse::{extract_pulse, extract_traces, PulseConfig, PulseSignal, RawTrace};
use crate::roi::{load_box_track, FaceBox, RoiLayout};
use crate::spectral::{estimate_series, HrSeries, WindowSpec};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub pulse: PulseConfig,
    pub layout: RoiLayout,
    /// Window hop for sweeps; `None` means non-overlapping windows.
    pub hop_s: Option<f64>,
}

/// Opens a session, loads its box track and extracts the raw trace.
pub fn load_trace(manifest_path: &Path, layout: &RoiLayout) -> Result<(SessionManifest, RawTrace)> {
    let mut stream = open_session(manifest_path)?;
    let boxes_path = stream
        .manifest
        .boxes
        .clone()
        .ok_or_else(|| Error::MalformedManifest("manifest has no boxes entry".into()))?;
    let boxes = load_box_track(&boxes_path, stream.manifest.frame_count)?;
    let trace = extract_traces(&mut stream, &boxes, layout)?;
    Ok((stream.manifest, trace))
}

pub fn pulse_from_source<S: FrameSource + ?Sized>(
    source: &mut S,
    boxes: &[FaceBox],
    config: &PipelineConfig,
) -> Result<PulseSignal> {
    let format = source.info().pixel_format;
    let trace = extract_traces(source, boxes, &config.layout)?;
    extract_pulse(&trace, format, &config.pulse)
}

pub fn estimate_source<S: FrameSource + ?Sized>(
    source: &mut S,
    boxes: &[FaceBox],
    config: &PipelineConfig,
    spec: &WindowSpec,
) -> Result<HrSeries> {
    let pulse = pulse_from_source(source, boxes, config)?;
    estimate_series(&pulse, spec, &config.pulse.band)
}

/// Full pipeline on a session on disk.
pub fn estimate_session(
    manifest_path: &Path,
    config: &PipelineConfig,
    spec: &WindowSpec,
) -> Result<(SessionManifest, HrSeries)> {
    let (manifest, trace) = load_trace(manifest_path, &config.layout)?;
    let pulse = extract_pulse(&trace, manifest.pixel_format, &config.pulse)?;
    let series = estimate_series(&pulse, spec, &config.pulse.band)?;
    Ok((manifest, series))
}
