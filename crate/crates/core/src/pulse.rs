//! Raw trace extraction and pulse-signal conditioning.
//!
//! Each region's R, G and B spatial means are normalized by their mean,
//! detrended with a centered moving average, and bandpass filtered with a
//! zero-phase FIR. The three channels are then combined (green, intensity
//! or chrominance) and the three regions averaged into one pulse signal.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame_io::{Frame, FrameSource, PixelFormat};
use crate::roi::{derive_rois_with, FaceBox, Rect, RoiLayout, MIN_ROI_AREA};

pub const DEFAULT_F_LO: f64 = 0.7;
pub const DEFAULT_F_HI: f64 = 4.0;
pub const DEFAULT_DETREND_WINDOW_S: f64 = 1.5;

/// Number of facial regions (forehead, left cheek, right cheek).
pub const N_ROIS: usize = 3;

/// Pulse band in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandLimits {
    pub f_lo: f64,
    pub f_hi: f64,
}

impl Default for BandLimits {
    fn default() -> Self {
        Self {
            f_lo: DEFAULT_F_LO,
            f_hi: DEFAULT_F_HI,
        }
    }
}

impl BandLimits {
    pub fn new(f_lo: f64, f_hi: f64) -> Self {
        Self { f_lo, f_hi }
    }

    /// Checks `0 < f_lo < f_hi < fps / 2`.
    pub fn validate(&self, fps: f64) -> Result<()> {
        if self.f_lo > 0.0 && self.f_lo < self.f_hi && self.f_hi < fps / 2.0 {
            Ok(())
        } else {
            Err(Error::InvalidBand {
                f_lo: self.f_lo,
                f_hi: self.f_hi,
                fps,
            })
        }
    }

    pub fn bpm_range(&self) -> (f64, f64) {
        (60.0 * self.f_lo, 60.0 * self.f_hi)
    }
}

/// Per-frame spatial means, indexed `[frame][roi][channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrace {
    pub fps: f64,
    pub values: Vec<[[f64; 3]; N_ROIS]>,
    /// False where the frame's regions were degenerate; those entries hold
    /// values interpolated from valid neighbors.
    pub valid: Vec<bool>,
}

impl RawTrace {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn series(&self, roi: usize, channel: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[roi][channel]).collect()
    }

    /// Multiplies every stored value by `c`.
    pub fn scaled(&self, c: f64) -> RawTrace {
        RawTrace {
            fps: self.fps,
            values: self
                .values
                .iter()
                .map(|f| f.map(|roi| roi.map(|v| v * c)))
                .collect(),
            valid: self.valid.clone(),
        }
    }
}

/// Filtered, zero-mean pulse amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSignal {
    pub fps: f64,
    pub samples: Vec<f64>,
}

impl PulseSignal {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.fps
    }
}

/// Mean of each channel inside `roi`.
pub fn spatial_mean(frame: &Frame, roi: &Rect) -> Result<[f64; 3]> {
    if roi.area() < MIN_ROI_AREA || roi.x + roi.w > frame.width() || roi.y + roi.h > frame.height()
    {
        return Err(Error::DegenerateRoi(format!(
            "{roi:?} in a {}x{} frame",
            frame.width(),
            frame.height()
        )));
    }
    let area = roi.area() as f64;
    Ok(frame.channels.each_ref().map(|plane| {
        let sum: u64 = (roi.y..roi.y + roi.h)
            .map(|y| {
                plane.row(y)[roi.x..roi.x + roi.w]
                    .iter()
                    .map(|&v| v as u64)
                    .sum::<u64>()
            })
            .sum();
        sum as f64 / area
    }))
}

/// Reads every frame of `source` and records the spatial means of the
/// three regions derived from that frame's face box.
pub fn extract_traces<S: FrameSource + ?Sized>(
    source: &mut S,
    boxes: &[FaceBox],
    layout: &RoiLayout,
) -> Result<RawTrace> {
    let info = source.info();
    if boxes.len() != info.frame_count {
        return Err(Error::LengthMismatch(boxes.len(), info.frame_count));
    }
    let mut values = Vec::with_capacity(info.frame_count);
    let mut valid = Vec::with_capacity(info.frame_count);
    while let Some(frame) = source.next_frame()? {
        let Some(face) = boxes.get(frame.index) else {
            return Err(Error::LengthMismatch(boxes.len(), frame.index + 1));
        };
        match derive_rois_with(face, frame.width(), frame.height(), layout) {
            Ok(rois) => {
                let mut means = [[0.0; 3]; N_ROIS];
                for (slot, rect) in means.iter_mut().zip(rois.as_array()) {
                    *slot = spatial_mean(&frame, &rect)?;
                }
                values.push(means);
                valid.push(true);
            }
            Err(Error::DegenerateRoi(_)) => {
                values.push([[0.0; 3]; N_ROIS]);
                valid.push(false);
            }
            Err(e) => return Err(e),
        }
    }
    if values.len() != info.frame_count {
        return Err(Error::LengthMismatch(values.len(), info.frame_count));
    }
    fill_invalid(&mut values, &valid)?;
    Ok(RawTrace {
        fps: info.fps,
        values,
        valid,
    })
}

fn fill_invalid(values: &mut [[[f64; 3]; N_ROIS]], valid: &[bool]) -> Result<()> {
    let good: Vec<usize> = (0..valid.len()).filter(|&i| valid[i]).collect();
    let (Some(&first), Some(&last)) = (good.first(), good.last()) else {
        return Err(Error::AllFramesInvalid);
    };
    for i in 0..first {
        values[i] = values[first];
    }
    for i in last + 1..values.len() {
        values[i] = values[last];
    }
    for pair in good.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        for i in a + 1..b {
            let t = (i - a) as f64 / (b - a) as f64;
            let (va, vb) = (values[a], values[b]);
            for r in 0..N_ROIS {
                for c in 0..3 {
                    values[i][r][c] = va[r][c] + (vb[r][c] - va[r][c]) * t;
                }
            }
        }
    }
    Ok(())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn std_dev(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt()
}

/// `x / mean(x) - 1`.
pub fn normalize_segment(segment: &[f64]) -> Result<Vec<f64>> {
    if segment.len() < 2 {
        return Err(Error::EmptyInput);
    }
    let m = mean(segment);
    if !(m > 0.0) {
        return Err(Error::NonPositiveMean(m));
    }
    Ok(segment.iter().map(|v| v / m - 1.0).collect())
}

/// Subtracts a centered moving average spanning `2·⌊N/2⌋ + 1` samples,
/// `N = round(window_s · fps)`. Near the ends the average covers only the
/// available samples.
pub fn detrend(signal: &[f64], fps: f64, window_s: f64) -> Result<Vec<f64>> {
    let n_win = (window_s * fps).round();
    if !(n_win >= 3.0) {
        return Err(Error::WindowTooShort {
            samples: n_win.max(0.0) as usize,
        });
    }
    let half = n_win as usize / 2;
    let n = signal.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for v in signal {
        acc += v;
        prefix.push(acc);
    }
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            signal[i] - (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect())
}

/// Linear-phase windowed-sinc bandpass (Hamming window).
#[derive(Debug, Clone, PartialEq)]
pub struct FirBandpass {
    taps: Vec<f64>,
    fps: f64,
}

impl FirBandpass {
    /// Designs a filter of `round(4·fps/f_lo)` taps, bumped to the next odd
    /// count so the group delay is a whole number of samples.
    pub fn design(fps: f64, band: BandLimits) -> Result<Self> {
        band.validate(fps)?;
        let mut len = (4.0 * fps / band.f_lo).round() as usize;
        if len.is_multiple_of(2) {
            len += 1;
        }
        let len = len.max(3);
        let mid = (len - 1) / 2;
        // Indexed from the center so both halves are bitwise mirror images.
        let hamming: Vec<f64> = (0..len)
            .map(|k| 0.54 + 0.46 * (2.0 * PI * (k as f64 - mid as f64) / (len - 1) as f64).cos())
            .collect();
        // Unit-DC lowpass kernels; their difference has zero DC gain.
        let lowpass = |fc: f64| -> Vec<f64> {
            let wc = 2.0 * fc / fps;
            let mut h: Vec<f64> = (0..len)
                .map(|k| {
                    let m = k as f64 - mid as f64;
                    let sinc = if m == 0.0 {
                        wc
                    } else {
                        (PI * wc * m).sin() / (PI * m)
                    };
                    sinc * hamming[k]
                })
                .collect();
            let s: f64 = h.iter().sum();
            h.iter_mut().for_each(|v| *v /= s);
            h
        };
        let hi = lowpass(band.f_hi);
        let lo = lowpass(band.f_lo);
        let taps = hi.iter().zip(&lo).map(|(a, b)| a - b).collect();
        Ok(Self { taps, fps })
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn group_delay(&self) -> usize {
        (self.taps.len() - 1) / 2
    }

    /// Amplitude response at `f` Hz (real, since the taps are symmetric).
    pub fn response(&self, f: f64) -> f64 {
        let mid = self.group_delay();
        let w = 2.0 * PI * f / self.fps;
        self.taps[mid]
            + 2.0
                * (1..=mid)
                    .map(|m| self.taps[mid + m] * (w * m as f64).cos())
                    .sum::<f64>()
    }

    /// Filters with the group delay removed. Ends are extended by point
    /// reflection about the first and last samples, and any residual mean
    /// of the output is subtracted.
    pub fn apply(&self, signal: &[f64]) -> Result<Vec<f64>> {
        let len = self.taps.len();
        let n = signal.len();
        if n < len {
            return Err(Error::SignalTooShort { len: n, taps: len });
        }
        let mid = self.group_delay();
        let mut ext = Vec::with_capacity(n + 2 * mid);
        ext.extend((1..=mid).rev().map(|k| 2.0 * signal[0] - signal[k]));
        ext.extend_from_slice(signal);
        ext.extend((1..=mid).map(|k| 2.0 * signal[n - 1] - signal[n - 1 - k]));
        let mut out: Vec<f64> = (0..n)
            .map(|i| {
                ext[i..i + len]
                    .iter()
                    .zip(&self.taps)
                    .map(|(x, h)| x * h)
                    .sum()
            })
            .collect();
        let m = mean(&out);
        out.iter_mut().for_each(|v| *v -= m);
        Ok(out)
    }
}

pub fn bandpass(signal: &[f64], fps: f64, band: BandLimits) -> Result<Vec<f64>> {
    FirBandpass::design(fps, band)?.apply(signal)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CombineMethod {
    Green,
    Intensity,
    Chrom,
}

impl CombineMethod {
    /// Chrominance for color input; intensity for replicated mono, where
    /// chrominance cancels out.
    pub fn default_for(format: PixelFormat) -> Self {
        match format {
            PixelFormat::Rgb8Interleaved => CombineMethod::Chrom,
            PixelFormat::Gray8 => CombineMethod::Intensity,
        }
    }
}

impl std::str::FromStr for CombineMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "green" => Ok(CombineMethod::Green),
            "intensity" => Ok(CombineMethod::Intensity),
            "chrom" => Ok(CombineMethod::Chrom),
            other => Err(Error::InvalidConfig(format!(
                "unknown combine method {other:?}"
            ))),
        }
    }
}

/// Combines normalized R, G, B series into one.
pub fn combine_channels(
    r: &[f64],
    g: &[f64],
    b: &[f64],
    method: CombineMethod,
) -> Result<Vec<f64>> {
    if r.len() != g.len() {
        return Err(Error::LengthMismatch(r.len(), g.len()));
    }
    if r.len() != b.len() {
        return Err(Error::LengthMismatch(r.len(), b.len()));
    }
    if r.is_empty() {
        return Err(Error::EmptyInput);
    }
    let out = match method {
        CombineMethod::Green => g.to_vec(),
        CombineMethod::Intensity => (0..r.len()).map(|i| (r[i] + g[i] + b[i]) / 3.0).collect(),
        CombineMethod::Chrom => {
            let x: Vec<f64> = (0..r.len()).map(|i| 3.0 * r[i] - 2.0 * g[i]).collect();
            let y: Vec<f64> = (0..r.len())
                .map(|i| 1.5 * r[i] + g[i] - 1.5 * b[i])
                .collect();
            let (sx, sy) = (std_dev(&x), std_dev(&y));
            if sy == 0.0 {
                return Err(Error::ZeroVariance);
            }
            let alpha = sx / sy;
            let s: Vec<f64> = x.iter().zip(&y).map(|(x, y)| x - alpha * y).collect();
            // X and Y collinear (e.g. R = G = B): the projection is rounding noise.
            if std_dev(&s) <= 1e-9 * sx.max(sy) {
                return Err(Error::ZeroVariance);
            }
            s
        }
    };
    Ok(out)
}

/// Pointwise mean of the region signals, with its own mean removed.
pub fn fuse_rois(signals: &[Vec<f64>], fps: f64) -> Result<PulseSignal> {
    let first = signals.first().ok_or(Error::EmptyInput)?;
    if let Some(bad) = signals.iter().find(|s| s.len() != first.len()) {
        return Err(Error::LengthMismatch(first.len(), bad.len()));
    }
    let k = signals.len() as f64;
    let mut samples: Vec<f64> = (0..first.len())
        .map(|i| signals.iter().map(|s| s[i]).sum::<f64>() / k)
        .collect();
    let m = if samples.is_empty() {
        0.0
    } else {
        mean(&samples)
    };
    samples.iter_mut().for_each(|v| *v -= m);
    Ok(PulseSignal { fps, samples })
}

/// Whether regions are fused before or after channel combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionOrder {
    #[default]
    AfterCombine,
    BeforeCombine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseConfig {
    pub band: BandLimits,
    pub detrend_window_s: f64,
    /// `None` picks the default for the session's pixel format.
    pub combine: Option<CombineMethod>,
    pub fusion: FusionOrder,
}

impl Default for PulseConfig {
    fn default() -> Self {
        Self {
            band: BandLimits::default(),
            detrend_window_s: DEFAULT_DETREND_WINDOW_S,
            combine: None,
            fusion: FusionOrder::default(),
        }
    }
}

/// Normalize, detrend and bandpass one channel series.
pub fn condition_series(
    series: &[f64],
    fps: f64,
    filter: &FirBandpass,
    detrend_window_s: f64,
) -> Result<Vec<f64>> {
    let normalized = normalize_segment(series)?;
    let flat = detrend(&normalized, fps, detrend_window_s)?;
    filter.apply(&flat)
}

fn combine_with_fallback(channels: &[Vec<f64>; 3], method: CombineMethod) -> Result<Vec<f64>> {
    match combine_channels(&channels[0], &channels[1], &channels[2], method) {
        Err(Error::ZeroVariance) => combine_channels(
            &channels[0],
            &channels[1],
            &channels[2],
            CombineMethod::Intensity,
        ),
        other => other,
    }
}

/// Turns a raw trace into the fused pulse signal. Chrominance falls back
/// to intensity when its projection degenerates.
pub fn extract_pulse(
    trace: &RawTrace,
    format: PixelFormat,
    config: &PulseConfig,
) -> Result<PulseSignal> {
    if trace.is_empty() {
        return Err(Error::EmptyInput);
    }
    let fps = trace.fps;
    let filter = FirBandpass::design(fps, config.band)?;
    let method = config
        .combine
        .unwrap_or_else(|| CombineMethod::default_for(format));
    let condition = |s: &[f64]| condition_series(s, fps, &filter, config.detrend_window_s);
    match config.fusion {
        FusionOrder::AfterCombine => {
            let mut per_roi = Vec::with_capacity(N_ROIS);
            for roi in 0..N_ROIS {
                let channels = [
                    condition(&trace.series(roi, 0))?,
                    condition(&trace.series(roi, 1))?,
                    condition(&trace.series(roi, 2))?,
                ];
                per_roi.push(combine_with_fallback(&channels, method)?);
            }
            fuse_rois(&per_roi, fps)
        }
        FusionOrder::BeforeCombine => {
            let pooled = |c: usize| -> Vec<f64> {
                trace
                    .values
                    .iter()
                    .map(|v| v.iter().map(|roi| roi[c]).sum::<f64>() / N_ROIS as f64)
                    .collect()
            };
            let channels = [
                condition(&pooled(0))?,
                condition(&pooled(1))?,
                condition(&pooled(2))?,
            ];
            fuse_rois(&[combine_with_fallback(&channels, method)?], fps)
        }
    }
}
