//! Synthetic sessions with a known embedded pulse.
//!
//! The whole frame is treated as skin. Its green channel is modulated as
//! `G·(1 + a·sin φ(t))`, red and blue at 0.5× and 0.3× of that depth, then
//! a slow illumination drift and per-pixel Gaussian noise are applied and
//! the result is quantized to 8 bits (round half to even). Noise for frame
//! `i` comes from a ChaCha8 stream keyed by `(seed, i)`, so any frame can
//! be rendered independently and the bytes never depend on render order.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::GroundTruth;
use crate::frame_io::{
    decode_frame, Frame, FrameSource, PixelFormat, SessionManifest, SourceInfo, MANIFEST_FILE_NAME,
};
use crate::pulse::BandLimits;
use crate::roi::{write_static_track, FaceBox};

pub const FRAMES_FILE_NAME: &str = "frames.raw";
pub const BOXES_FILE_NAME: &str = "boxes.csv";
pub const GROUNDTRUTH_FILE_NAME: &str = "groundtruth.csv";

/// Pulse depth of R, G, B relative to the configured green depth.
pub const CHANNEL_DEPTH: [f64; 3] = [0.5, 1.0, 0.3];
/// Frequency of the illumination drift.
pub const DRIFT_HZ: f64 = 0.1;
/// Relative amplitude of the optional second harmonic.
pub const HARMONIC_RATIO: f64 = 0.3;
/// Fraction of each frame dimension covered by the face box.
pub const FACE_FRACTION: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HrProfile {
    Constant {
        bpm: f64,
    },
    /// `from` until `at_s`, then `to`.
    Step {
        from: f64,
        to: f64,
        at_s: f64,
    },
    /// Linear from `from` at t = 0 to `to` at the end of the session.
    Ramp {
        from: f64,
        to: f64,
    },
}

impl HrProfile {
    pub fn bpm_at(&self, t: f64, duration_s: f64) -> f64 {
        match *self {
            HrProfile::Constant { bpm } => bpm,
            HrProfile::Step { from, to, at_s } => {
                if t < at_s {
                    from
                } else {
                    to
                }
            }
            HrProfile::Ramp { from, to } => from + (to - from) * t / duration_s,
        }
    }

    fn rates(&self) -> Vec<f64> {
        match *self {
            HrProfile::Constant { bpm } => vec![bpm],
            HrProfile::Step { from, to, .. } | HrProfile::Ramp { from, to } => vec![from, to],
        }
    }
}

impl FromStr for HrProfile {
    type Err = Error;

    /// `constant:BPM`, `step:A,B,T` or `ramp:A,B`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::InvalidConfig(format!(
                "bad profile {s:?}; expected constant:BPM | step:A,B,T | ramp:A,B"
            ))
        };
        let (kind, args) = s.split_once(':').ok_or_else(bad)?;
        let nums: Vec<f64> = args
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?;
        match (kind, nums.as_slice()) {
            ("constant", [bpm]) => Ok(HrProfile::Constant { bpm: *bpm }),
            ("step", [from, to, at_s]) => Ok(HrProfile::Step {
                from: *from,
                to: *to,
                at_s: *at_s,
            }),
            ("ramp", [from, to]) => Ok(HrProfile::Ramp {
                from: *from,
                to: *to,
            }),
            _ => Err(bad()),
        }
    }
}

/// Pulse phase in radians, `2π ∫₀ᵗ bpm(τ)/60 dτ`, in closed form.
pub fn pulse_phase(t: f64, profile: &HrProfile, duration_s: f64) -> f64 {
    let cycles = match *profile {
        HrProfile::Constant { bpm } => bpm / 60.0 * t,
        HrProfile::Step { from, to, at_s } => {
            if t < at_s {
                from / 60.0 * t
            } else {
                from / 60.0 * at_s + to / 60.0 * (t - at_s)
            }
        }
        HrProfile::Ramp { from, to } => {
            let (fa, fb) = (from / 60.0, to / 60.0);
            fa * t + (fb - fa) * t * t / (2.0 * duration_s)
        }
    };
    2.0 * PI * cycles
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    pub duration_s: f64,
    pub base_color: [f64; 3],
    /// Pulse depth as a fraction of the base green level.
    pub pulse_amplitude: f64,
    pub profile: HrProfile,
    /// Per-pixel noise standard deviation, in 8-bit levels.
    pub noise_sigma: f64,
    /// Peak fractional amplitude of the illumination drift.
    pub illum_drift: f64,
    pub seed: u64,
    /// Emit a single-channel `gray8` session.
    pub mono: bool,
    /// Add a second harmonic at `HARMONIC_RATIO` of the fundamental.
    pub harmonic: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            fps: 30.0,
            duration_s: 60.0,
            base_color: [170.0, 120.0, 95.0],
            pulse_amplitude: 0.02,
            profile: HrProfile::Constant { bpm: 72.0 },
            noise_sigma: 0.0,
            illum_drift: 0.0,
            seed: 0,
            mono: false,
            harmonic: false,
        }
    }
}

impl SynthConfig {
    pub fn frame_count(&self) -> usize {
        (self.duration_s * self.fps).round() as usize
    }

    pub fn pixel_format(&self) -> PixelFormat {
        if self.mono {
            PixelFormat::Gray8
        } else {
            PixelFormat::Rgb8Interleaved
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.width < 16 || self.height < 16 {
            return fail(format!(
                "frame size {}x{} below 16x16",
                self.width, self.height
            ));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return fail(format!("fps {} must be positive", self.fps));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) || self.frame_count() == 0 {
            return fail(format!("duration {} s yields no frames", self.duration_s));
        }
        let (lo, hi) = BandLimits::default().bpm_range();
        for bpm in self.profile.rates() {
            if !(bpm > lo && bpm < hi) {
                return fail(format!("hr {bpm} bpm outside ({lo}, {hi})"));
            }
        }
        if let HrProfile::Step { at_s, .. } = self.profile {
            if !(0.0..=self.duration_s).contains(&at_s) {
                return fail(format!(
                    "step time {at_s} s outside [0, {}]",
                    self.duration_s
                ));
            }
        }
        if !(self.pulse_amplitude > 0.0 && self.pulse_amplitude <= 0.1) {
            return fail(format!(
                "pulse amplitude {} outside (0, 0.1]",
                self.pulse_amplitude
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return fail(format!("noise sigma {} must be >= 0", self.noise_sigma));
        }
        if !(0.0..1.0).contains(&self.illum_drift) {
            return fail(format!(
                "illumination drift {} outside [0, 1)",
                self.illum_drift
            ));
        }
        if self.base_color.iter().any(|c| !(0.0..=255.0).contains(c)) {
            return fail(format!("base color {:?} outside [0, 255]", self.base_color));
        }
        Ok(())
    }

    /// Static face box covering the central 60% of the frame.
    pub fn face_box(&self) -> FaceBox {
        let margin = (1.0 - FACE_FRACTION) / 2.0;
        FaceBox::new(
            0,
            (margin * self.width as f64).round(),
            (margin * self.height as f64).round(),
            (FACE_FRACTION * self.width as f64).round(),
            (FACE_FRACTION * self.height as f64).round(),
        )
    }

    /// Groundtruth sampled at 1 Hz over `[0, duration)`.
    pub fn groundtruth(&self) -> GroundTruth {
        let n = self.duration_s.ceil() as usize;
        let samples = (0..n)
            .map(|t| (t as f64, self.profile.bpm_at(t as f64, self.duration_s)))
            .collect();
        GroundTruth::new(samples).expect("profile rates are validated")
    }

    /// Noise-free level of each channel (one entry when mono) at time `t`.
    fn levels(&self, t: f64) -> Vec<f64> {
        let phase = pulse_phase(t, &self.profile, self.duration_s);
        let mut pulse = phase.sin();
        if self.harmonic {
            pulse += HARMONIC_RATIO * (2.0 * phase).sin();
        }
        let drift = 1.0 + self.illum_drift * (2.0 * PI * DRIFT_HZ * t).sin();
        let a = self.pulse_amplitude;
        if self.mono {
            let base = self.base_color.iter().sum::<f64>() / 3.0;
            vec![base * (1.0 + a * pulse) * drift]
        } else {
            (0..3)
                .map(|c| self.base_color[c] * (1.0 + CHANNEL_DEPTH[c] * a * pulse) * drift)
                .collect()
        }
    }

    /// Raw bytes of frame `index` in the session's on-disk layout.
    pub fn render_frame_bytes(&self, index: usize) -> Vec<u8> {
        let t = index as f64 / self.fps;
        let levels = self.levels(t);
        let pixels = self.width * self.height;
        if self.noise_sigma == 0.0 {
            let px: Vec<u8> = levels.iter().map(|&v| quantize(v)).collect();
            return px.repeat(pixels);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        let mut out = Vec::with_capacity(pixels * levels.len());
        for _ in 0..pixels {
            for &v in &levels {
                let z: f64 = StandardNormal.sample(&mut rng);
                out.push(quantize(v + self.noise_sigma * z));
            }
        }
        out
    }

    pub fn render_frame(&self, index: usize) -> Frame {
        decode_frame(
            &self.render_frame_bytes(index),
            index,
            self.fps,
            self.width,
            self.height,
            self.pixel_format(),
        )
        .expect("rendered frame has the configured size")
    }
}

fn quantize(v: f64) -> u8 {
    v.round_ties_even().clamp(0.0, 255.0) as u8
}

/// Renders frames on demand without touching the filesystem.
#[derive(Debug, Clone)]
pub struct SynthSource {
    config: SynthConfig,
    cursor: usize,
}

impl SynthSource {
    pub fn new(config: SynthConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, cursor: 0 })
    }
}

impl FrameSource for SynthSource {
    fn info(&self) -> SourceInfo {
        SourceInfo {
            width: self.config.width,
            height: self.config.height,
            fps: self.config.fps,
            frame_count: self.config.frame_count(),
            pixel_format: self.config.pixel_format(),
        }
    }

    fn next_frame(&mut self) -> Result<Option<Frame>> {
        if self.cursor >= self.config.frame_count() {
            return Ok(None);
        }
        let frame = self.config.render_frame(self.cursor);
        self.cursor += 1;
        Ok(Some(frame))
    }
}

/// Writes frames, a static box track, 1 Hz groundtruth and the manifest
/// into `out_dir`. Returns the manifest with paths resolved against
/// `out_dir`.
pub fn render_session(config: &SynthConfig, out_dir: &Path) -> Result<SessionManifest> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let frames_path = out_dir.join(FRAMES_FILE_NAME);
    let file = File::create(&frames_path).map_err(|e| Error::io(&frames_path, e))?;
    let mut writer = BufWriter::with_capacity(1 << 20, file);
    for i in 0..config.frame_count() {
        writer
            .write_all(&config.render_frame_bytes(i))
            .map_err(|e| Error::io(&frames_path, e))?;
    }
    writer.flush().map_err(|e| Error::io(&frames_path, e))?;

    write_static_track(&out_dir.join(BOXES_FILE_NAME), &config.face_box())?;
    config
        .groundtruth()
        .write_csv(&out_dir.join(GROUNDTRUTH_FILE_NAME))?;

    let manifest = SessionManifest {
        width: config.width,
        height: config.height,
        fps: config.fps,
        pixel_format: config.pixel_format(),
        frame_count: config.frame_count(),
        frames: FRAMES_FILE_NAME.into(),
        boxes: Some(BOXES_FILE_NAME.into()),
        groundtruth: Some(GROUNDTRUTH_FILE_NAME.into()),
    };
    manifest.save(&out_dir.join(MANIFEST_FILE_NAME))?;
    SessionManifest::load(&out_dir.join(MANIFEST_FILE_NAME))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame_io::open_session;

    #[test]
    fn phase_examples() {
        let c60 = HrProfile::Constant { bpm: 60.0 };
        assert!((pulse_phase(1.0, &c60, 60.0) - 2.0 * PI).abs() < 1e-12);
        let c72 = HrProfile::Constant { bpm: 72.0 };
        assert!((pulse_phase(5.0, &c72, 60.0) - 2.0 * PI * 6.0).abs() < 1e-12);
        let step = HrProfile::Step {
            from: 60.0,
            to: 120.0,
            at_s: 10.0,
        };
        assert!((pulse_phase(20.0, &step, 60.0) - 2.0 * PI * 30.0).abs() < 1e-12);
    }

    #[test]
    fn ramp_phase_matches_numeric_integral() {
        let ramp = HrProfile::Ramp {
            from: 60.0,
            to: 90.0,
        };
        let d = 40.0;
        let t = 27.3;
        let steps = 100_000;
        let h = t / steps as f64;
        // Midpoint rule is exact for a linear integrand.
        let cycles: f64 = (0..steps)
            .map(|i| ramp.bpm_at((i as f64 + 0.5) * h, d) / 60.0 * h)
            .sum();
        assert!((pulse_phase(t, &ramp, d) - 2.0 * PI * cycles).abs() < 1e-9);
    }

    #[test]
    fn profile_parsing() {
        assert_eq!(
            "constant:72".parse::<HrProfile>().unwrap(),
            HrProfile::Constant { bpm: 72.0 }
        );
        assert_eq!(
            "step:70,100,30".parse::<HrProfile>().unwrap(),
            HrProfile::Step {
                from: 70.0,
                to: 100.0,
                at_s: 30.0
            }
        );
        assert_eq!(
            "ramp:60,90".parse::<HrProfile>().unwrap(),
            HrProfile::Ramp {
                from: 60.0,
                to: 90.0
            }
        );
        assert!("step:70,100".parse::<HrProfile>().is_err());
        assert!("wobble:1".parse::<HrProfile>().is_err());
    }

    #[test]
    fn validation_names_the_bound() {
        let cfg = SynthConfig {
            profile: HrProfile::Constant { bpm: 500.0 },
            ..Default::default()
        };
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("500") && msg.contains("240"), "{msg}");
        let cfg = SynthConfig {
            pulse_amplitude: 0.2,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = SynthConfig {
            noise_sigma: -1.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn constant_groundtruth_rows() {
        let gt = SynthConfig::default().groundtruth();
        assert_eq!(gt.samples().len(), 60);
        assert!(gt.samples().iter().all(|s| s.bpm == 72.0));
    }

    #[test]
    fn step_groundtruth_switches_at_step() {
        let cfg = SynthConfig {
            profile: HrProfile::Step {
                from: 70.0,
                to: 100.0,
                at_s: 30.0,
            },
            ..Default::default()
        };
        let gt = cfg.groundtruth();
        for s in gt.samples() {
            assert_eq!(s.bpm, if s.t < 30.0 { 70.0 } else { 100.0 });
        }
        assert_eq!(gt.samples()[30].bpm, 100.0);
    }

    #[test]
    fn seeded_render_is_reproducible_and_order_free() {
        let cfg = SynthConfig {
            noise_sigma: 2.0,
            illum_drift: 0.05,
            seed: 9,
            duration_s: 2.0,
            ..Default::default()
        };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        render_session(&cfg, a.path()).unwrap();
        render_session(&cfg, b.path()).unwrap();
        let fa = std::fs::read(a.path().join(FRAMES_FILE_NAME)).unwrap();
        let fb = std::fs::read(b.path().join(FRAMES_FILE_NAME)).unwrap();
        assert_eq!(fa, fb);
        let per_frame = 64 * 64 * 3;
        assert_eq!(
            &fa[17 * per_frame..18 * per_frame],
            cfg.render_frame_bytes(17).as_slice()
        );
        let other = SynthConfig { seed: 10, ..cfg };
        assert_ne!(other.render_frame_bytes(17), cfg.render_frame_bytes(17));
    }

    #[test]
    fn rendered_session_reads_back_bit_exact() {
        for mono in [false, true] {
            let cfg = SynthConfig {
                noise_sigma: 1.5,
                duration_s: 1.0,
                mono,
                ..Default::default()
            };
            let dir = tempfile::tempdir().unwrap();
            let manifest = render_session(&cfg, dir.path()).unwrap();
            assert_eq!(manifest.frame_count, 30);
            let mut synth = SynthSource::new(cfg).unwrap();
            let stream = open_session(dir.path()).unwrap();
            for frame in stream {
                let frame = frame.unwrap();
                assert_eq!(Some(frame), synth.next_frame().unwrap());
            }
            assert!(synth.next_frame().unwrap().is_none());
        }
    }

    #[test]
    fn noise_free_frames_carry_the_modulation() {
        let cfg = SynthConfig {
            pulse_amplitude: 0.1,
            ..Default::default()
        };
        // Quarter period of 72 bpm: sin φ = 1.
        let t = 0.25 / 1.2;
        let expect: Vec<u8> = (0..3)
            .map(|c| {
                quantize(
                    cfg.base_color[c] * (1.0 + CHANNEL_DEPTH[c] * 0.1 * (2.0 * PI * 1.2 * t).sin()),
                )
            })
            .collect();
        let f = cfg.render_frame((t * 30.0).round() as usize);
        let got: Vec<u8> = f.channels.iter().map(|p| p.data[0]).collect();
        assert!(
            got.iter().zip(&expect).all(|(g, e)| g.abs_diff(*e) <= 1),
            "{got:?} vs {expect:?}"
        );
        assert!(f
            .channels
            .iter()
            .all(|p| p.data.iter().all(|&v| v == p.data[0])));
    }
}
