use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
    #[error("frames file is {actual} bytes, manifest implies {expected}")]
    SizeMismatch { expected: u64, actual: u64 },
    #[error("i/o error at frame {frame}: {source}")]
    FrameIo {
        frame: usize,
        #[source]
        source: std::io::Error,
    },
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv {}: {reason}", path.display())]
    MalformedCsv { path: PathBuf, reason: String },
    #[error("plane is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    DimensionMismatch {
        want_w: usize,
        want_h: usize,
        got_w: usize,
        got_h: usize,
    },
    #[error("degenerate region of interest: {0}")]
    DegenerateRoi(String),
    #[error("face box track is empty")]
    EmptyTrack,
    #[error("box track indices are not strictly increasing at row {row} (frame {frame})")]
    NonMonotonicIndices { row: usize, frame: usize },
    #[error("no frame produced a valid region of interest")]
    AllFramesInvalid,
    #[error("segment mean is not positive ({0})")]
    NonPositiveMean(f64),
    #[error("detrend window of {samples} samples is shorter than 3")]
    WindowTooShort { samples: usize },
    #[error("signal of {len} samples is shorter than the {taps}-tap filter")]
    SignalTooShort { len: usize, taps: usize },
    #[error("invalid band {f_lo}-{f_hi} Hz at {fps} fps (need 0 < lo < hi < fps/2)")]
    InvalidBand { f_lo: f64, f_hi: f64, fps: f64 },
    #[error("chrominance projection has zero variance")]
    ZeroVariance,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    EmptyInput,
    #[error("invalid window spec: {0}")]
    InvalidWindow(String),
    #[error("session of {duration_s:.3} s is too short for a {window_s} s window")]
    SessionTooShort { duration_s: f64, window_s: f64 },
    #[error("no spectral bin inside the pulse band")]
    EmptyBand,
    #[error("heart-rate series is empty")]
    EmptySeries,
    #[error("no groundtruth samples in window(s) {windows:?}")]
    EmptyWindowGt { windows: Vec<usize> },
    #[error("invalid groundtruth: {0}")]
    InvalidGroundTruth(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// Variant name, used for machine-readable error reporting.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingFile(_) => "MissingFile",
            Error::MalformedManifest(_) => "MalformedManifest",
            Error::SizeMismatch { .. } => "SizeMismatch",
            Error::FrameIo { .. } => "IoError",
            Error::Io { .. } => "IoError",
            Error::MalformedCsv { .. } => "MalformedCsv",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::DegenerateRoi(_) => "DegenerateRoi",
            Error::EmptyTrack => "EmptyTrack",
            Error::NonMonotonicIndices { .. } => "NonMonotonicIndices",
            Error::AllFramesInvalid => "AllFramesInvalid",
            Error::NonPositiveMean(_) => "NonPositiveMean",
            Error::WindowTooShort { .. } => "WindowTooShort",
            Error::SignalTooShort { .. } => "SignalTooShort",
            Error::InvalidBand { .. } => "InvalidBand",
            Error::ZeroVariance => "ZeroVariance",
            Error::LengthMismatch(..) => "LengthMismatch",
            Error::EmptyInput => "EmptyInput",
            Error::InvalidWindow(_) => "InvalidWindow",
            Error::SessionTooShort { .. } => "SessionTooShort",
            Error::EmptyBand => "EmptyBand",
            Error::EmptySeries => "EmptySeries",
            Error::EmptyWindowGt { .. } => "EmptyWindowGt",
            Error::InvalidGroundTruth(_) => "InvalidGroundTruth",
            Error::InvalidConfig(_) => "InvalidConfig",
        }
    }

    /// True for errors caused by bad inputs or flags rather than by
    /// processing of otherwise well-formed data.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::MissingFile(_)
                | Error::MalformedManifest(_)
                | Error::SizeMismatch { .. }
                | Error::MalformedCsv { .. }
                | Error::DimensionMismatch { .. }
                | Error::EmptyTrack
                | Error::NonMonotonicIndices { .. }
                | Error::InvalidBand { .. }
                | Error::InvalidWindow(_)
                | Error::InvalidGroundTruth(_)
                | Error::InvalidConfig(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::MalformedCsv {
            path: path.into(),
            reason: reason.to_string(),
        }
    }
}
