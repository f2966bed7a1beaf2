//! Forehead and cheek regions derived from a tracked face box.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum pixel area of a usable region.
pub const MIN_ROI_AREA: usize = 4;

/// Face bounding box for one frame, in pixels. Interpolated boxes carry
/// fractional coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceBox {
    pub frame_index: usize,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl FaceBox {
    pub fn new(frame_index: usize, x: f64, y: f64, w: f64, h: f64) -> Self {
        Self {
            frame_index,
            x,
            y,
            w,
            h,
        }
    }
}

/// Pixel rectangle, top-left origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn area(&self) -> usize {
        self.w * self.h
    }
}

/// Unclamped, sub-pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectF {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RoiSet {
    pub forehead: Rect,
    pub left_cheek: Rect,
    pub right_cheek: Rect,
}

impl RoiSet {
    pub fn as_array(&self) -> [Rect; 3] {
        [self.forehead, self.left_cheek, self.right_cheek]
    }
}

/// Placement of one region as fractions of the face box: offset from the
/// box's top-left corner, then size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiRatios {
    pub dx: f64,
    pub dy: f64,
    pub w: f64,
    pub h: f64,
}

impl RoiRatios {
    fn place(&self, b: &FaceBox) -> RectF {
        RectF {
            x: b.x + self.dx * b.w,
            y: b.y + self.dy * b.h,
            w: self.w * b.w,
            h: self.h * b.h,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiLayout {
    pub forehead: RoiRatios,
    pub left_cheek: RoiRatios,
    pub right_cheek: RoiRatios,
}

impl Default for RoiLayout {
    fn default() -> Self {
        Self {
            forehead: RoiRatios {
                dx: 0.25,
                dy: 0.05,
                w: 0.50,
                h: 0.15,
            },
            left_cheek: RoiRatios {
                dx: 0.15,
                dy: 0.50,
                w: 0.20,
                h: 0.20,
            },
            right_cheek: RoiRatios {
                dx: 0.65,
                dy: 0.50,
                w: 0.20,
                h: 0.20,
            },
        }
    }
}

/// Region geometry before any clamping: forehead, left cheek, right cheek.
pub fn roi_geometry(face: &FaceBox, layout: &RoiLayout) -> [RectF; 3] {
    [
        layout.forehead.place(face),
        layout.left_cheek.place(face),
        layout.right_cheek.place(face),
    ]
}

fn round_px(v: f64) -> f64 {
    (v + 0.5).floor()
}

/// Snaps a rectangle to the pixel grid and intersects it with the frame.
fn to_pixels(r: &RectF, width: usize, height: usize) -> Rect {
    let x0 = round_px(r.x).clamp(0.0, width as f64);
    let y0 = round_px(r.y).clamp(0.0, height as f64);
    let x1 = round_px(r.x + r.w).clamp(0.0, width as f64);
    let y1 = round_px(r.y + r.h).clamp(0.0, height as f64);
    Rect {
        x: x0 as usize,
        y: y0 as usize,
        w: (x1 - x0).max(0.0) as usize,
        h: (y1 - y0).max(0.0) as usize,
    }
}

pub fn derive_rois(face: &FaceBox, width: usize, height: usize) -> Result<RoiSet> {
    derive_rois_with(face, width, height, &RoiLayout::default())
}

/// Places the three regions inside the part of the face box that is
/// visible in the frame.
pub fn derive_rois_with(
    face: &FaceBox,
    width: usize,
    height: usize,
    layout: &RoiLayout,
) -> Result<RoiSet> {
    if !(face.w > 0.0 && face.h > 0.0) {
        return Err(Error::DegenerateRoi(format!(
            "face box at frame {} has non-positive size",
            face.frame_index
        )));
    }
    let x0 = face.x.max(0.0);
    let y0 = face.y.max(0.0);
    let x1 = (face.x + face.w).min(width as f64);
    let y1 = (face.y + face.h).min(height as f64);
    if x1 <= x0 || y1 <= y0 {
        return Err(Error::DegenerateRoi(format!(
            "face box at frame {} lies outside the frame",
            face.frame_index
        )));
    }
    let visible = FaceBox::new(face.frame_index, x0, y0, x1 - x0, y1 - y0);
    let [f, l, r] = roi_geometry(&visible, layout).map(|g| to_pixels(&g, width, height));
    for (name, rect) in [("forehead", f), ("left cheek", l), ("right cheek", r)] {
        if rect.area() < MIN_ROI_AREA {
            return Err(Error::DegenerateRoi(format!(
                "{name} at frame {} has area {} < {MIN_ROI_AREA}",
                face.frame_index,
                rect.area()
            )));
        }
    }
    Ok(RoiSet {
        forehead: f,
        left_cheek: l,
        right_cheek: r,
    })
}

#[derive(Debug, Deserialize)]
struct BoxRow {
    frame: String,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

/// Loads a `frame,x,y,w,h` track and expands it to one box per frame.
///
/// Gaps are filled by linear interpolation between the nearest annotated
/// frames; frames before the first or after the last annotation copy it.
/// A single row with frame `*` applies to every frame.
pub fn load_box_track(path: &Path, frame_count: usize) -> Result<Vec<FaceBox>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["frame", "x", "y", "w", "h"] {
        return Err(Error::csv(
            path,
            format!("expected header frame,x,y,w,h, got {headers:?}"),
        ));
    }
    let mut rows = Vec::new();
    for rec in reader.deserialize::<BoxRow>() {
        rows.push(rec.map_err(|e| Error::csv(path, e))?);
    }
    if rows.is_empty() {
        return Err(Error::EmptyTrack);
    }
    for (i, r) in rows.iter().enumerate() {
        if !(r.w > 0.0 && r.h > 0.0) || ![r.x, r.y].iter().all(|v| v.is_finite()) {
            return Err(Error::csv(
                path,
                format!("row {i}: box must have finite position and positive size"),
            ));
        }
    }

    if rows.iter().any(|r| r.frame == "*") {
        if rows.len() != 1 {
            return Err(Error::csv(path, "a '*' row must be the only row"));
        }
        let r = &rows[0];
        return Ok((0..frame_count)
            .map(|i| FaceBox::new(i, r.x, r.y, r.w, r.h))
            .collect());
    }

    let mut anchors: Vec<FaceBox> = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        let frame: usize = r
            .frame
            .parse()
            .map_err(|_| Error::csv(path, format!("row {i}: bad frame index {:?}", r.frame)))?;
        if frame >= frame_count {
            return Err(Error::csv(
                path,
                format!("row {i}: frame {frame} outside session of {frame_count} frames"),
            ));
        }
        if anchors.last().is_some_and(|a| a.frame_index >= frame) {
            return Err(Error::NonMonotonicIndices { row: i, frame });
        }
        anchors.push(FaceBox::new(frame, r.x, r.y, r.w, r.h));
    }
    Ok(fill_track(&anchors, frame_count))
}

/// Expands strictly increasing annotations to a dense per-frame track.
pub fn fill_track(anchors: &[FaceBox], frame_count: usize) -> Vec<FaceBox> {
    let mut out = Vec::with_capacity(frame_count);
    let mut next = 0;
    for i in 0..frame_count {
        while next < anchors.len() && anchors[next].frame_index < i {
            next += 1;
        }
        let b = if next == 0 {
            anchors[0]
        } else if next == anchors.len() {
            anchors[anchors.len() - 1]
        } else if anchors[next].frame_index == i {
            anchors[next]
        } else {
            let a = anchors[next - 1];
            let c = anchors[next];
            let t = (i - a.frame_index) as f64 / (c.frame_index - a.frame_index) as f64;
            let lerp = |p: f64, q: f64| p + (q - p) * t;
            FaceBox::new(
                i,
                lerp(a.x, c.x),
                lerp(a.y, c.y),
                lerp(a.w, c.w),
                lerp(a.h, c.h),
            )
        };
        out.push(FaceBox {
            frame_index: i,
            ..b
        });
    }
    out
}

/// Writes a one-row `*` track applying `face` to every frame.
pub fn write_static_track(path: &Path, face: &FaceBox) -> Result<()> {
    let text = format!(
        "frame,x,y,w,h\n*,{},{},{},{}\n",
        face.x, face.y, face.w, face.h
    );
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
