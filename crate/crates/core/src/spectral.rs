//! Windowed spectral heart-rate estimation.
//!
//! The pulse signal is cut into fixed-length windows; each window's
//! Hann-windowed, zero-padded periodogram is searched for its strongest
//! in-band peak, which is refined by a three-point parabola and reported
//! in beats per minute.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pulse::{BandLimits, PulseSignal};

/// Zero-padding factor applied on top of the next power of two.
pub const PAD_FACTOR: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub length_s: f64,
    pub hop_s: f64,
}

impl WindowSpec {
    /// Non-overlapping windows of `length_s` seconds.
    pub fn new(length_s: f64) -> Self {
        Self {
            length_s,
            hop_s: length_s,
        }
    }

    pub fn with_hop(length_s: f64, hop_s: f64) -> Self {
        Self { length_s, hop_s }
    }

    pub fn validate(&self, fps: f64, band: &BandLimits) -> Result<()> {
        if !(self.hop_s > 0.0 && self.hop_s <= self.length_s) {
            return Err(Error::InvalidWindow(format!(
                "hop {} s must be in (0, length {} s]",
                self.hop_s, self.length_s
            )));
        }
        if (self.hop_s * fps).round() < 1.0 {
            return Err(Error::InvalidWindow(format!(
                "hop {} s is shorter than one frame at {fps} fps",
                self.hop_s
            )));
        }
        let min_len = 2.0 / band.f_lo;
        if self.length_s < min_len {
            return Err(Error::InvalidWindow(format!(
                "length {} s holds fewer than two cycles of {} Hz (need >= {min_len:.3} s)",
                self.length_s, band.f_lo
            )));
        }
        Ok(())
    }
}

/// Half-open sample ranges `[k·hop, k·hop + length)` that fit entirely in
/// `n_samples`; a partial trailing window is dropped.
pub fn partition_windows(
    n_samples: usize,
    fps: f64,
    spec: &WindowSpec,
) -> Result<Vec<(usize, usize)>> {
    let len = (spec.length_s * fps).round() as usize;
    let hop = (spec.hop_s * fps).round() as usize;
    if len == 0 || hop == 0 {
        return Err(Error::InvalidWindow(format!(
            "{spec:?} is empty at {fps} fps"
        )));
    }
    if n_samples < len {
        return Err(Error::SessionTooShort {
            duration_s: n_samples as f64 / fps,
            window_s: spec.length_s,
        });
    }
    let count = (n_samples - len) / hop + 1;
    Ok((0..count).map(|k| (k * hop, k * hop + len)).collect())
}

/// One-sided power spectrum on a uniform grid starting at 0 Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Bin spacing in Hz.
    pub df: f64,
    pub power: Vec<f64>,
}

impl Spectrum {
    pub fn frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.df
    }

    pub fn max_frequency(&self) -> f64 {
        self.frequency(self.power.len().saturating_sub(1))
    }
}

pub fn padded_len(n: usize) -> usize {
    PAD_FACTOR * n.max(1).next_power_of_two()
}

fn hann(n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![1.0; n];
    }
    let denom = (n - 1) as f64;
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / denom).cos())
        .collect()
}

/// Reuses FFT plans across windows of the same length.
struct Periodogram {
    planner: FftPlanner<f64>,
    plan: Option<(usize, Arc<dyn Fft<f64>>)>,
}

impl Periodogram {
    fn new() -> Self {
        Self {
            planner: FftPlanner::new(),
            plan: None,
        }
    }

    fn compute(&mut self, samples: &[f64], fps: f64) -> Spectrum {
        let n = samples.len();
        let padded = padded_len(n);
        let fft = match &self.plan {
            Some((len, fft)) if *len == padded => fft.clone(),
            _ => {
                let fft = self.planner.plan_fft_forward(padded);
                self.plan = Some((padded, fft.clone()));
                fft
            }
        };
        // The window mean is removed first so a DC offset cannot leak
        // through the Hann main lobe into the lowest pulse bins.
        let mean = if n == 0 {
            0.0
        } else {
            samples.iter().sum::<f64>() / n as f64
        };
        let mut buf = vec![Complex::new(0.0, 0.0); padded];
        for ((slot, x), w) in buf.iter_mut().zip(samples).zip(hann(n)) {
            slot.re = (x - mean) * w;
        }
        fft.process(&mut buf);
        Spectrum {
            df: fps / padded as f64,
            power: buf[..=padded / 2].iter().map(|c| c.norm_sqr()).collect(),
        }
    }
}

/// Mean-removed, Hann-windowed |DFT|² zero-padded to
/// `8 · next_power_of_two(n)` points.
pub fn periodogram(samples: &[f64], fps: f64) -> Spectrum {
    Periodogram::new().compute(samples, fps)
}

/// Strongest in-band peak in bpm, refined by a parabola through the peak
/// bin and its neighbors. Equal maxima resolve to the lower frequency.
pub fn peak_bpm(spectrum: &Spectrum, band: &BandLimits) -> Result<f64> {
    let p = &spectrum.power;
    let lo = (band.f_lo / spectrum.df).ceil() as usize;
    let hi = ((band.f_hi / spectrum.df).floor() as usize).min(p.len().saturating_sub(1));
    if p.is_empty() || lo > hi {
        return Err(Error::EmptyBand);
    }
    let mut best = lo;
    for k in lo + 1..=hi {
        if p[k] > p[best] {
            best = k;
        }
    }
    let mut offset = 0.0;
    if best > 0 && best + 1 < p.len() {
        let (a, b, c) = (p[best - 1], p[best], p[best + 1]);
        let denom = a - 2.0 * b + c;
        if denom < 0.0 {
            offset = (0.5 * (a - c) / denom).clamp(-0.5, 0.5);
        }
    }
    let f = ((best as f64 + offset) * spectrum.df).clamp(band.f_lo, band.f_hi);
    Ok(60.0 * f)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HrEstimate {
    pub window_start: f64,
    pub window_end: f64,
    pub bpm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HrSeries {
    pub estimates: Vec<HrEstimate>,
    pub window_spec: WindowSpec,
}

impl HrSeries {
    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }

    pub fn bpm(&self) -> Vec<f64> {
        self.estimates.iter().map(|e| e.bpm).collect()
    }

    pub fn intervals(&self) -> Vec<(f64, f64)> {
        self.estimates
            .iter()
            .map(|e| (e.window_start, e.window_end))
            .collect()
    }

    /// `window_start_s,window_end_s,bpm` rows at full precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("window_start_s,window_end_s,bpm\n");
        for e in &self.estimates {
            writeln!(out, "{},{},{}", e.window_start, e.window_end, e.bpm).unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Reads a series written by [`HrSeries::write_csv`]. The window spec
    /// is recovered from the first row's length and the spacing of the
    /// first two starts.
    pub fn load_csv(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            window_start_s: f64,
            window_end_s: f64,
            bpm: f64,
        }
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(file);
        let headers = reader.headers().map_err(|e| Error::csv(path, e))?;
        if headers.iter().collect::<Vec<_>>() != ["window_start_s", "window_end_s", "bpm"] {
            return Err(Error::csv(
                path,
                format!("expected header window_start_s,window_end_s,bpm, got {headers:?}"),
            ));
        }
        let mut estimates = Vec::new();
        for rec in reader.deserialize::<Row>() {
            let r = rec.map_err(|e| Error::csv(path, e))?;
            if !(r.window_end_s > r.window_start_s && r.bpm.is_finite()) {
                return Err(Error::csv(
                    path,
                    format!("row {}: invalid window or bpm", estimates.len()),
                ));
            }
            estimates.push(HrEstimate {
                window_start: r.window_start_s,
                window_end: r.window_end_s,
                bpm: r.bpm,
            });
        }
        let first = estimates.first().ok_or(Error::EmptySeries)?;
        let length_s = first.window_end - first.window_start;
        let hop_s = estimates
            .get(1)
            .map_or(length_s, |e| e.window_start - first.window_start);
        Ok(Self {
            estimates,
            window_spec: WindowSpec::with_hop(length_s, hop_s),
        })
    }
}

/// One heart-rate estimate per window of an already conditioned pulse
/// signal.
pub fn estimate_series(
    signal: &PulseSignal,
    spec: &WindowSpec,
    band: &BandLimits,
) -> Result<HrSeries> {
    band.validate(signal.fps)?;
    spec.validate(signal.fps, band)?;
    let windows = partition_windows(signal.samples.len(), signal.fps, spec)?;
    let mut pgram = Periodogram::new();
    let mut estimates = Vec::with_capacity(windows.len());
    for (start, end) in windows {
        let spectrum = pgram.compute(&signal.samples[start..end], signal.fps);
        estimates.push(HrEstimate {
            window_start: start as f64 / signal.fps,
            window_end: end as f64 / signal.fps,
            bpm: peak_bpm(&spectrum, band)?,
        });
    }
    Ok(HrSeries {
        estimates,
        window_spec: *spec,
    })
}

pub fn session_mean(series: &HrSeries) -> Result<f64> {
    crate::running_mean(series.estimates.iter().map(|e| e.bpm)).ok_or(Error::EmptySeries)
}
