//! Error metrics against 1 Hz groundtruth and window-length sweeps.
//!
//! Two protocols are supported. The session-average protocol compares the
//! mean of all window estimates with the mean groundtruth; the continuous
//! protocol averages the per-window absolute errors. Per-session values
//! are combined into a dataset figure by an unweighted mean.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{load_trace, PipelineConfig};
use crate::pulse::extract_pulse;
use crate::running_mean;
use crate::spectral::{estimate_series, session_mean, HrSeries, WindowSpec};

/// Window lengths for the session-average protocol.
pub const SUB51_LENGTHS: [f64; 4] = [5.0, 10.0, 15.0, 20.0];
/// Window lengths for the continuous-monitoring protocol.
pub const SUB52_LENGTHS: [f64; 9] = [5.0, 7.0, 9.0, 11.0, 13.0, 15.0, 17.0, 19.0, 20.0];

/// Stated in every report.
pub const AGGREGATION: &str = "unweighted mean over sessions";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtSample {
    pub t: f64,
    pub bpm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    samples: Vec<GtSample>,
}

impl GroundTruth {
    /// Validates strictly increasing timestamps and bpm in (20, 250).
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        let samples: Vec<GtSample> = samples
            .into_iter()
            .map(|(t, bpm)| GtSample { t, bpm })
            .collect();
        for (i, s) in samples.iter().enumerate() {
            if !s.t.is_finite() {
                return Err(Error::InvalidGroundTruth(format!(
                    "row {i}: non-finite timestamp"
                )));
            }
            if !(s.bpm > 20.0 && s.bpm < 250.0) {
                return Err(Error::InvalidGroundTruth(format!(
                    "row {i}: {} bpm outside (20, 250)",
                    s.bpm
                )));
            }
            if i > 0 && samples[i - 1].t >= s.t {
                return Err(Error::InvalidGroundTruth(format!(
                    "row {i}: timestamp {} not after {}",
                    s.t,
                    samples[i - 1].t
                )));
            }
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[GtSample] {
        &self.samples
    }

    /// Reads a `t,bpm` CSV.
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(file);
        let headers = reader.headers().map_err(|e| Error::csv(path, e))?;
        if headers.iter().collect::<Vec<_>>() != ["t", "bpm"] {
            return Err(Error::csv(
                path,
                format!("expected header t,bpm, got {headers:?}"),
            ));
        }
        let mut rows = Vec::new();
        for rec in reader.deserialize::<GtSample>() {
            let s = rec.map_err(|e| Error::csv(path, e))?;
            rows.push((s.t, s.bpm));
        }
        Self::new(rows)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut text = String::from("t,bpm\n");
        for s in &self.samples {
            writeln!(text, "{},{}", s.t, s.bpm).unwrap();
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Mean groundtruth inside each half-open window `[start, end)` seconds.
pub fn align_groundtruth(gt: &GroundTruth, windows: &[(f64, f64)]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(windows.len());
    let mut empty = Vec::new();
    for (i, &(start, end)) in windows.iter().enumerate() {
        let inside = gt
            .samples
            .iter()
            .filter(|s| s.t >= start && s.t < end)
            .map(|s| s.bpm);
        match running_mean(inside) {
            Some(m) => out.push(m),
            None => empty.push(i),
        }
    }
    if empty.is_empty() {
        Ok(out)
    } else {
        Err(Error::EmptyWindowGt { windows: empty })
    }
}

/// Mean absolute difference.
pub fn mae(est: &[f64], gt: &[f64]) -> Result<f64> {
    if est.len() != gt.len() {
        return Err(Error::LengthMismatch(est.len(), gt.len()));
    }
    running_mean(est.iter().zip(gt).map(|(e, g)| (e - g).abs())).ok_or(Error::EmptyInput)
}

/// |mean estimate − mean windowed groundtruth| for one session.
pub fn sub51_error(series: &HrSeries, gt: &GroundTruth) -> Result<f64> {
    let aligned = align_groundtruth(gt, &series.intervals())?;
    let gt_mean = running_mean(aligned.iter().copied()).ok_or(Error::EmptySeries)?;
    Ok((session_mean(series)? - gt_mean).abs())
}

/// Mean per-window absolute error for one session.
pub fn sub52_mae(series: &HrSeries, gt: &GroundTruth) -> Result<f64> {
    let aligned = align_groundtruth(gt, &series.intervals())?;
    mae(&series.bpm(), &aligned)
}

pub fn dataset_aggregate(values: &[f64]) -> Result<f64> {
    running_mean(values.iter().copied()).ok_or(Error::EmptyInput)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelLabel {
    Rgb,
    Nir,
}

impl ChannelLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            ChannelLabel::Rgb => "rgb",
            ChannelLabel::Nir => "nir",
        }
    }
}

impl std::str::FromStr for ChannelLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rgb" => Ok(ChannelLabel::Rgb),
            "nir" => Ok(ChannelLabel::Nir),
            other => Err(Error::InvalidConfig(format!("unknown channel {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRow {
    pub session: String,
    pub channel: ChannelLabel,
    pub window_s: f64,
    pub sub51_bpm: f64,
    pub sub52_bpm: f64,
    pub n_windows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub channel: ChannelLabel,
    pub window_s: f64,
    pub sub51_mae_bpm: f64,
    pub sub52_mae_bpm: f64,
    pub n_sessions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedRow {
    pub session: String,
    pub channel: ChannelLabel,
    /// `None` when the session failed before any window length was tried.
    pub window_s: Option<f64>,
    pub error: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub aggregation: String,
    pub per_session: Vec<SessionRow>,
    pub dataset: Vec<DatasetRow>,
    pub excluded: Vec<ExcludedRow>,
}

/// Scores one session's series against its groundtruth.
pub fn evaluate_series(
    session: &str,
    channel: ChannelLabel,
    series: &HrSeries,
    gt: &GroundTruth,
) -> Result<SessionRow> {
    Ok(SessionRow {
        session: session.to_string(),
        channel,
        window_s: series.window_spec.length_s,
        sub51_bpm: sub51_error(series, gt)?,
        sub52_bpm: sub52_mae(series, gt)?,
        n_windows: series.len(),
    })
}

impl EvalReport {
    /// Sorts rows by (session, channel, window) and aggregates every
    /// (channel, window) group.
    pub fn from_rows(mut per_session: Vec<SessionRow>, mut excluded: Vec<ExcludedRow>) -> Self {
        per_session.sort_by(|a, b| {
            (&a.session, a.channel)
                .cmp(&(&b.session, b.channel))
                .then(a.window_s.total_cmp(&b.window_s))
        });
        excluded.sort_by(|a, b| {
            (&a.session, a.channel).cmp(&(&b.session, b.channel)).then(
                a.window_s
                    .unwrap_or(-1.0)
                    .total_cmp(&b.window_s.unwrap_or(-1.0)),
            )
        });
        let mut keys: Vec<(ChannelLabel, f64)> = per_session
            .iter()
            .map(|r| (r.channel, r.window_s))
            .collect();
        keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        keys.dedup();
        let dataset = keys
            .into_iter()
            .map(|(channel, window_s)| {
                let group: Vec<&SessionRow> = per_session
                    .iter()
                    .filter(|r| r.channel == channel && r.window_s == window_s)
                    .collect();
                let s51: Vec<f64> = group.iter().map(|r| r.sub51_bpm).collect();
                let s52: Vec<f64> = group.iter().map(|r| r.sub52_bpm).collect();
                DatasetRow {
                    channel,
                    window_s,
                    sub51_mae_bpm: dataset_aggregate(&s51).expect("group is non-empty"),
                    sub52_mae_bpm: dataset_aggregate(&s52).expect("group is non-empty"),
                    n_sessions: group.len(),
                }
            })
            .collect();
        Self {
            aggregation: AGGREGATION.to_string(),
            per_session,
            dataset,
            excluded,
        }
    }

    pub fn dataset_row(&self, channel: ChannelLabel, window_s: f64) -> Option<&DatasetRow> {
        self.dataset
            .iter()
            .find(|r| r.channel == channel && r.window_s == window_s)
    }

    /// Session rows, then a blank line and the dataset block, then (if any)
    /// the excluded sessions.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("session,channel,window_s,sub51_bpm,sub52_bpm,n_windows\n");
        for r in &self.per_session {
            writeln!(
                out,
                "{},{},{},{:.6},{:.6},{}",
                r.session,
                r.channel.as_str(),
                r.window_s,
                r.sub51_bpm,
                r.sub52_bpm,
                r.n_windows
            )
            .unwrap();
        }
        out.push_str("\naggregate,channel,window_s,sub51_mae_bpm,sub52_mae_bpm,n_sessions\n");
        for r in &self.dataset {
            writeln!(
                out,
                "dataset_unweighted_mean,{},{},{:.6},{:.6},{}",
                r.channel.as_str(),
                r.window_s,
                r.sub51_mae_bpm,
                r.sub52_mae_bpm,
                r.n_sessions
            )
            .unwrap();
        }
        if !self.excluded.is_empty() {
            out.push_str("\nexcluded,channel,window_s,error,reason\n");
            for r in &self.excluded {
                let window = r.window_s.map(|w| w.to_string()).unwrap_or_default();
                let reason = r.reason.replace('"', "'");
                writeln!(
                    out,
                    "{},{},{},{},\"{}\"",
                    r.session,
                    r.channel.as_str(),
                    window,
                    r.error,
                    reason
                )
                .unwrap();
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Dataset MAE laid out as a lengths × metric table for one channel:
    /// a `metric,channel,<T1>,<T2>,...` header, then sub51 and sub52 rows.
    pub fn sweep_table(&self, channel: ChannelLabel, lengths: &[f64]) -> String {
        let mut out = String::from("metric,channel");
        for t in lengths {
            write!(out, ",{t}").unwrap();
        }
        out.push('\n');
        for (name, pick) in [
            (
                "sub51_mae_bpm",
                (|r: &DatasetRow| r.sub51_mae_bpm) as fn(&DatasetRow) -> f64,
            ),
            ("sub52_mae_bpm", |r: &DatasetRow| r.sub52_mae_bpm),
        ] {
            write!(out, "{name},{}", channel.as_str()).unwrap();
            for &t in lengths {
                match self.dataset_row(channel, t) {
                    Some(r) => write!(out, ",{:.6}", pick(r)).unwrap(),
                    None => out.push_str(",NA"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, csv_path: &Path, json_path: &Path) -> Result<()> {
        std::fs::write(csv_path, self.to_csv()).map_err(|e| Error::io(csv_path, e))?;
        std::fs::write(json_path, self.to_json()).map_err(|e| Error::io(json_path, e))
    }
}

/// A session to evaluate: an identifier and its manifest (or directory).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionInput {
    pub id: String,
    pub path: PathBuf,
}

impl SessionInput {
    /// Uses the session directory name (or the manifest's parent
    /// directory name) as the identifier.
    pub fn from_path(path: &Path) -> Self {
        let dir = if path.is_dir() {
            Some(path)
        } else {
            path.parent()
        };
        let id = dir
            .and_then(|d| d.file_name())
            .or_else(|| path.file_stem())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        Self {
            id,
            path: path.to_path_buf(),
        }
    }
}

fn excluded(
    session: &SessionInput,
    channel: ChannelLabel,
    window_s: Option<f64>,
    e: &Error,
) -> ExcludedRow {
    ExcludedRow {
        session: session.id.clone(),
        channel,
        window_s,
        error: e.kind().to_string(),
        reason: e.to_string(),
    }
}

/// Runs every session at every window length. Failed sessions (or
/// session/length pairs) are recorded in `excluded` and left out of the
/// aggregates; the sweep itself never fails.
pub fn sweep(
    sessions: &[SessionInput],
    lengths: &[f64],
    channel: ChannelLabel,
    config: &PipelineConfig,
) -> EvalReport {
    let mut sorted: Vec<&SessionInput> = sessions.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for session in sorted {
        let prepared = load_trace(&session.path, &config.layout).and_then(|(manifest, trace)| {
            let gt_path = manifest.groundtruth.clone().ok_or_else(|| {
                Error::MalformedManifest("manifest has no groundtruth entry".into())
            })?;
            let gt = GroundTruth::load(&gt_path)?;
            let pulse = extract_pulse(&trace, manifest.pixel_format, &config.pulse)?;
            Ok((gt, pulse))
        });
        let (gt, pulse) = match prepared {
            Ok(p) => p,
            Err(e) => {
                skipped.push(excluded(session, channel, None, &e));
                continue;
            }
        };
        for &length in lengths {
            let spec = WindowSpec::with_hop(length, config.hop_s.unwrap_or(length));
            let result = estimate_series(&pulse, &spec, &config.pulse.band)
                .and_then(|series| evaluate_series(&session.id, channel, &series, &gt));
            match result {
                Ok(row) => rows.push(row),
                Err(e) => skipped.push(excluded(session, channel, Some(length), &e)),
            }
        }
    }
    EvalReport::from_rows(rows, skipped)
}
