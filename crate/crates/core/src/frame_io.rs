//! Raw frame streams with a JSON sidecar manifest.
//!
//! A session on disk is a headerless concatenation of 8-bit frames
//! (`rgb8`: interleaved R,G,B per pixel, row-major; `gray8`: one byte per
//! pixel, row-major) described by a manifest such as
//!
//! ```json
//! {"width": 64, "height": 64, "fps": 30, "pixel_format": "gray8",
//!  "frame_count": 90, "frames": "frames.raw", "boxes": "boxes.csv"}
//! ```
//!
//! Relative paths in the manifest are resolved against the manifest's
//! directory. Single-channel input is expanded into three identical planes
//! at ingest so every downstream stage sees R, G and B.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// File name looked up when a session directory is given instead of a
/// manifest path.
pub const MANIFEST_FILE_NAME: &str = "manifest.json";

const MIN_DIMENSION: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PixelFormat {
    #[serde(rename = "rgb8")]
    Rgb8Interleaved,
    #[serde(rename = "gray8")]
    Gray8,
}

impl PixelFormat {
    pub fn bytes_per_pixel(self) -> usize {
        match self {
            PixelFormat::Rgb8Interleaved => 3,
            PixelFormat::Gray8 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionManifest {
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    pub pixel_format: PixelFormat,
    pub frame_count: usize,
    pub frames: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boxes: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groundtruth: Option<PathBuf>,
}

impl SessionManifest {
    pub fn frame_bytes(&self) -> usize {
        self.width * self.height * self.pixel_format.bytes_per_pixel()
    }

    pub fn expected_file_len(&self) -> u64 {
        self.frame_bytes() as u64 * self.frame_count as u64
    }

    pub fn duration_s(&self) -> f64 {
        self.frame_count as f64 / self.fps
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < MIN_DIMENSION || self.height < MIN_DIMENSION {
            return Err(Error::MalformedManifest(format!(
                "frame size {}x{} below the {MIN_DIMENSION}x{MIN_DIMENSION} minimum",
                self.width, self.height
            )));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::MalformedManifest(format!(
                "fps must be positive, got {}",
                self.fps
            )));
        }
        if self.frame_count == 0 {
            return Err(Error::MalformedManifest(
                "frame_count must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Reads and validates a manifest, resolving relative file references
    /// against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: SessionManifest =
            serde_json::from_str(&text).map_err(|e| Error::MalformedManifest(e.to_string()))?;
        manifest.validate()?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        manifest.frames = base.join(&manifest.frames);
        manifest.boxes = manifest.boxes.map(|p| base.join(p));
        manifest.groundtruth = manifest.groundtruth.map(|p| base.join(p));
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Accepts either a manifest file or a session directory containing
/// `manifest.json`.
pub fn resolve_manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE_NAME)
    } else {
        path.to_path_buf()
    }
}

/// One 8-bit image plane, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Self {
        assert_eq!(
            data.len(),
            width * height,
            "plane data does not match dimensions"
        );
        Self {
            width,
            height,
            data,
        }
    }

    pub fn row(&self, y: usize) -> &[u8] {
        &self.data[y * self.width..(y + 1) * self.width]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: usize,
    pub timestamp: f64,
    /// R, G, B.
    pub channels: [Plane; 3],
}

impl Frame {
    pub fn width(&self) -> usize {
        self.channels[0].width
    }

    pub fn height(&self) -> usize {
        self.channels[0].height
    }
}

/// Expands a single plane into three bitwise-identical planes.
pub fn replicate_mono(plane: Plane, width: usize, height: usize) -> Result<[Plane; 3]> {
    if plane.width != width || plane.height != height || plane.data.len() != width * height {
        return Err(Error::DimensionMismatch {
            want_w: width,
            want_h: height,
            got_w: plane.width,
            got_h: plane.height,
        });
    }
    Ok([plane.clone(), plane.clone(), plane])
}

/// Decodes one raw frame buffer into planes.
pub fn decode_frame(
    bytes: &[u8],
    index: usize,
    fps: f64,
    width: usize,
    height: usize,
    format: PixelFormat,
) -> Result<Frame> {
    let pixels = width * height;
    if bytes.len() != pixels * format.bytes_per_pixel() {
        return Err(Error::SizeMismatch {
            expected: (pixels * format.bytes_per_pixel()) as u64,
            actual: bytes.len() as u64,
        });
    }
    let channels = match format {
        PixelFormat::Gray8 => {
            replicate_mono(Plane::new(width, height, bytes.to_vec()), width, height)?
        }
        PixelFormat::Rgb8Interleaved => {
            let mut r = Vec::with_capacity(pixels);
            let mut g = Vec::with_capacity(pixels);
            let mut b = Vec::with_capacity(pixels);
            for px in bytes.chunks_exact(3) {
                r.push(px[0]);
                g.push(px[1]);
                b.push(px[2]);
            }
            [
                Plane::new(width, height, r),
                Plane::new(width, height, g),
                Plane::new(width, height, b),
            ]
        }
    };
    Ok(Frame {
        index,
        timestamp: index as f64 / fps,
        channels,
    })
}

/// Interleaves the planes of a frame back into its on-disk layout.
pub fn encode_frame(frame: &Frame, format: PixelFormat) -> Vec<u8> {
    match format {
        PixelFormat::Gray8 => frame.channels[0].data.clone(),
        PixelFormat::Rgb8Interleaved => {
            let [r, g, b] = &frame.channels;
            let mut out = Vec::with_capacity(r.data.len() * 3);
            for i in 0..r.data.len() {
                out.extend_from_slice(&[r.data[i], g.data[i], b.data[i]]);
            }
            out
        }
    }
}

/// Static description of a frame source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceInfo {
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    pub frame_count: usize,
    pub pixel_format: PixelFormat,
}

/// Anything that yields frames in index order: files on disk, the
/// synthetic renderer, or in-memory test fixtures.
pub trait FrameSource {
    fn info(&self) -> SourceInfo;

    /// Next frame, or `None` once `frame_count` frames have been produced.
    fn next_frame(&mut self) -> Result<Option<Frame>>;
}

/// Sequential reader over a session's frames file.
#[derive(Debug)]
pub struct FrameStream {
    pub manifest: SessionManifest,
    cursor: usize,
    reader: BufReader<File>,
    buf: Vec<u8>,
}

/// Opens a session from its manifest (or its directory) and verifies the
/// frames file length eagerly.
pub fn open_session(manifest_path: &Path) -> Result<FrameStream> {
    let manifest = SessionManifest::load(&resolve_manifest_path(manifest_path))?;
    FrameStream::new(manifest)
}

impl FrameStream {
    pub fn new(manifest: SessionManifest) -> Result<Self> {
        manifest.validate()?;
        let file = File::open(&manifest.frames).map_err(|e| Error::io(&manifest.frames, e))?;
        let actual = file
            .metadata()
            .map_err(|e| Error::io(&manifest.frames, e))?
            .len();
        let expected = manifest.expected_file_len();
        if actual != expected {
            return Err(Error::SizeMismatch { expected, actual });
        }
        let buf = vec![0; manifest.frame_bytes()];
        Ok(Self {
            manifest,
            cursor: 0,
            reader: BufReader::with_capacity(1 << 20, file),
            buf,
        })
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }
}

impl FrameSource for FrameStream {
    fn info(&self) -> SourceInfo {
        SourceInfo {
            width: self.manifest.width,
            height: self.manifest.height,
            fps: self.manifest.fps,
            frame_count: self.manifest.frame_count,
            pixel_format: self.manifest.pixel_format,
        }
    }

    fn next_frame(&mut self) -> Result<Option<Frame>> {
        if self.cursor >= self.manifest.frame_count {
            return Ok(None);
        }
        let index = self.cursor;
        self.reader
            .read_exact(&mut self.buf)
            .map_err(|source| Error::FrameIo {
                frame: index,
                source,
            })?;
        let m = &self.manifest;
        let frame = decode_frame(&self.buf, index, m.fps, m.width, m.height, m.pixel_format)?;
        self.cursor += 1;
        Ok(Some(frame))
    }
}

impl Iterator for FrameStream {
    type Item = Result<Frame>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_frame().transpose()
    }
}

/// In-memory frame source, mostly for tests and for feeding transformed
/// frames back through the pipeline.
#[derive(Debug, Clone)]
pub struct MemorySource {
    info: SourceInfo,
    frames: std::vec::IntoIter<Frame>,
}

impl MemorySource {
    pub fn new(fps: f64, pixel_format: PixelFormat, frames: Vec<Frame>) -> Result<Self> {
        let first = frames.first().ok_or(Error::EmptyInput)?;
        let info = SourceInfo {
            width: first.width(),
            height: first.height(),
            fps,
            frame_count: frames.len(),
            pixel_format,
        };
        Ok(Self {
            info,
            frames: frames.into_iter(),
        })
    }
}

impl FrameSource for MemorySource {
    fn info(&self) -> SourceInfo {
        self.info
    }

    fn next_frame(&mut self) -> Result<Option<Frame>> {
        Ok(self.frames.next())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_session(
        dir: &Path,
        w: usize,
        h: usize,
        fmt: PixelFormat,
        n: usize,
        extra: isize,
    ) -> PathBuf {
        let manifest = SessionManifest {
            width: w,
            height: h,
            fps: 30.0,
            pixel_format: fmt,
            frame_count: n,
            frames: "frames.raw".into(),
            boxes: None,
            groundtruth: None,
        };
        let len = (manifest.expected_file_len() as isize + extra) as usize;
        let bytes: Vec<u8> = (0..len).map(|i| (i % 251) as u8).collect();
        std::fs::write(dir.join("frames.raw"), bytes).unwrap();
        let path = dir.join(MANIFEST_FILE_NAME);
        manifest.save(&path).unwrap();
        path
    }

    #[test]
    fn opens_gray_session_of_expected_length() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_session(dir.path(), 64, 64, PixelFormat::Gray8, 90, 0);
        let stream = open_session(&path).unwrap();
        assert_eq!(stream.manifest.expected_file_len(), 368_640);
        let frames: Vec<Frame> = stream.collect::<Result<_>>().unwrap();
        assert_eq!(frames.len(), 90);
        for (i, f) in frames.iter().enumerate() {
            assert_eq!(f.index, i);
            assert_eq!(f.channels[0], f.channels[1]);
            assert_eq!(f.channels[1], f.channels[2]);
        }
        assert!(frames.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
    }

    #[test]
    fn accepts_full_hd_rgb_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_session(dir.path(), 1280, 720, PixelFormat::Rgb8Interleaved, 1, 0);
        let mut stream = open_session(dir.path()).unwrap();
        assert_eq!(stream.manifest.frames, dir.path().join("frames.raw"));
        let f = stream.next_frame().unwrap().unwrap();
        assert_eq!((f.width(), f.height()), (1280, 720));
        assert!(stream.next_frame().unwrap().is_none());
        drop(path);
    }

    #[test]
    fn short_frames_file_is_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_session(dir.path(), 16, 16, PixelFormat::Gray8, 3, -1);
        match open_session(&path) {
            Err(Error::SizeMismatch { expected, actual }) => assert_eq!(expected, actual + 1),
            other => panic!("expected SizeMismatch, got {other:?}"),
        }
    }

    #[test]
    fn missing_and_malformed_manifests() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            open_session(&dir.path().join("nope.json")),
            Err(Error::MissingFile(_))
        ));
        let path = dir.path().join("m.json");
        std::fs::write(
            &path,
            r#"{"width":16,"height":16,"fps":30,"pixel_format":"gray8","frame_count":1,"frames":"f.raw","colour":"x"}"#,
        )
        .unwrap();
        assert!(matches!(
            open_session(&path),
            Err(Error::MalformedManifest(_))
        ));
        std::fs::write(
            &path,
            r#"{"width":8,"height":16,"fps":30,"pixel_format":"gray8","frame_count":1,"frames":"f.raw"}"#,
        )
        .unwrap();
        assert!(matches!(
            open_session(&path),
            Err(Error::MalformedManifest(_))
        ));
        std::fs::write(
            &path,
            r#"{"width":16,"height":16,"fps":30,"pixel_format":"gray8","frame_count":1,"frames":"f.raw"}"#,
        )
        .unwrap();
        assert!(matches!(open_session(&path), Err(Error::MissingFile(_))));
    }

    #[test]
    fn deinterleaves_rgb() {
        let f = decode_frame(
            &[10, 20, 30, 40, 50, 60],
            0,
            30.0,
            2,
            1,
            PixelFormat::Rgb8Interleaved,
        )
        .unwrap();
        assert_eq!(f.channels[0].data, [10, 40]);
        assert_eq!(f.channels[1].data, [20, 50]);
        assert_eq!(f.channels[2].data, [30, 60]);
        assert_eq!(
            encode_frame(&f, PixelFormat::Rgb8Interleaved),
            [10, 20, 30, 40, 50, 60]
        );
    }

    #[test]
    fn gray_pixel_is_replicated() {
        let f = decode_frame(&[7], 4, 30.0, 1, 1, PixelFormat::Gray8).unwrap();
        for c in &f.channels {
            assert_eq!(c.data, [7]);
        }
        assert_eq!(f.timestamp, 4.0 / 30.0);
    }

    #[test]
    fn replicate_mono_checks_dimensions() {
        let p = Plane::new(2, 2, vec![1, 2, 3, 4]);
        let planes = replicate_mono(p.clone(), 2, 2).unwrap();
        assert!(planes.iter().all(|q| *q == p));
        assert!(matches!(
            replicate_mono(p, 4, 1),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn mid_stream_io_error_reports_frame() {
        let dir = tempfile::tempdir().unwrap();
        // Larger than the reader's buffer so later frames hit the file.
        let path = write_session(dir.path(), 16, 16, PixelFormat::Gray8, 5000, 0);
        let mut stream = open_session(&path).unwrap();
        stream.next_frame().unwrap();
        // Truncate after the length check has passed.
        std::fs::OpenOptions::new()
            .write(true)
            .open(dir.path().join("frames.raw"))
            .unwrap()
            .set_len(300)
            .unwrap();
        let mut saw = None;
        for _ in 1..5000 {
            if let Err(e) = stream.next_frame() {
                saw = Some(e);
                break;
            }
        }
        match saw {
            Some(Error::FrameIo { frame, .. }) => assert!(frame >= 1),
            other => panic!("expected FrameIo, got {other:?}"),
        }
    }
}
