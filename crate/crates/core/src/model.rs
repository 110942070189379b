//! Frames, sequences, regions of interest and masks, plus the on-disk stack
//! and PGM mask formats.
//!
//! A stack directory holds `header.json` and `data.raw`. The raw file is the
//! frames concatenated in order, each frame row-major, every sample a 32-bit
//! little-endian IEEE-754 float. Values are widened to `f64` on load.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HEADER_FILE: &str = "header.json";
pub const DATA_FILE: &str = "data.raw";
pub const DTYPE_F32LE: &str = "f32le";
pub const LAYOUT_FRAME_MAJOR: &str = "frame_major_row_major";

/// One 2D intensity image, row-major `(y, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl Frame {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "frame must be at least 1x1, got {width}x{height}"
            )));
        }
        if values.len() != width * height {
            return Err(Error::Dimension(format!(
                "{width}x{height} frame needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite value at ({}, {})",
                i / width,
                i % width
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    /// Builds a frame by evaluating `f(y, x)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(y, x));
            }
        }
        Self::new(width, height, values)
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Internal constructor for values already known to be finite.
    pub(crate) fn from_parts(width: usize, height: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), width * height);
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self {
            width,
            height,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.values[y * self.width..(y + 1) * self.width]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn crop(&self, r: &Rect) -> Result<Frame> {
        r.check_inside(self.width, self.height)?;
        let mut values = Vec::with_capacity(r.w * r.h);
        for y in r.y0..r.y0 + r.h {
            values.extend_from_slice(&self.row(y)[r.x0..r.x0 + r.w]);
        }
        Ok(Frame::from_parts(r.w, r.h, values))
    }

    /// Applies `f` to every value; the result must stay finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Frame> {
        Frame::new(self.width, self.height, self.values.iter().map(|&v| f(v)).collect())
    }
}

/// Maps a frame onto [0, 1] by its own min and max. A constant frame maps to
/// all zeros.
pub fn normalize01_frame(f: &Frame) -> Frame {
    let (lo, hi) = f.min_max();
    let span = hi - lo;
    let values = if span > 0.0 {
        f.values.iter().map(|&v| ((v - lo) / span).clamp(0.0, 1.0)).collect()
    } else {
        vec![0.0; f.len()]
    };
    Frame::from_parts(f.width, f.height, values)
}

/// What the third axis of a sequence measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisKind {
    /// Seconds.
    Time,
    /// Hertz.
    Frequency,
    /// Dimensionless index.
    Coefficient,
}

impl AxisKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AxisKind::Time => "time",
            AxisKind::Frequency => "frequency",
            AxisKind::Coefficient => "coefficient",
        }
    }
}

/// Ordered stack of equally sized frames with a strictly increasing axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    frames: Vec<Frame>,
    axis_kind: AxisKind,
    axis_values: Vec<f64>,
}

impl Sequence {
    pub fn new(frames: Vec<Frame>, axis_kind: AxisKind, axis_values: Vec<f64>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::InvalidArgument("sequence needs at least one frame".into()))?;
        let (w, h) = (first.width, first.height);
        if let Some(i) = frames.iter().position(|f| f.width != w || f.height != h) {
            return Err(Error::Dimension(format!(
                "frame {i} is {}x{}, expected {w}x{h}",
                frames[i].width, frames[i].height
            )));
        }
        if axis_values.len() != frames.len() {
            return Err(Error::Dimension(format!(
                "{} axis values for {} frames",
                axis_values.len(),
                frames.len()
            )));
        }
        check_axis(&axis_values)?;
        Ok(Self {
            frames,
            axis_kind,
            axis_values,
        })
    }

    /// Sequence indexed 0, 1, 2, ... with a coefficient axis.
    pub fn indexed(frames: Vec<Frame>) -> Result<Self> {
        let axis = (0..frames.len()).map(|i| i as f64).collect();
        Self::new(frames, AxisKind::Coefficient, axis)
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frame(&self, i: usize) -> &Frame {
        &self.frames[i]
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }

    pub fn axis_kind(&self) -> AxisKind {
        self.axis_kind
    }

    pub fn axis_values(&self) -> &[f64] {
        &self.axis_values
    }

    /// Replaces every frame through `f`, keeping the axis.
    pub fn map_frames(&self, f: impl Fn(&Frame) -> Result<Frame>) -> Result<Sequence> {
        let frames = self.frames.iter().map(f).collect::<Result<Vec<_>>>()?;
        Sequence::new(frames, self.axis_kind, self.axis_values.clone())
    }
}

fn check_axis(axis: &[f64]) -> Result<()> {
    if let Some(i) = axis.iter().position(|v| !v.is_finite()) {
        return Err(Error::Format(format!("axis value {i} is not finite")));
    }
    if let Some(i) = axis.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::Format(format!(
            "axis is not strictly increasing at index {}: {} then {}",
            i + 1,
            axis[i],
            axis[i + 1]
        )));
    }
    Ok(())
}

/// Axis-aligned pixel rectangle: offset `(x0, y0)`, extent `w x h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn new(x0: usize, y0: usize, w: usize, h: usize) -> Self {
        Self { x0, y0, w, h }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self::new(0, 0, width, height)
    }

    pub fn check_inside(&self, width: usize, height: usize) -> Result<()> {
        if self.w == 0 || self.h == 0 || self.x0 + self.w > width || self.y0 + self.h > height {
            return Err(Error::OutOfBounds(format!(
                "rect ({}, {}, {}, {}) does not fit a {width}x{height} frame",
                self.x0, self.y0, self.w, self.h
            )));
        }
        Ok(())
    }

    /// The rect `inner`, given relative to `self`, in the coordinates `self` is
    /// expressed in.
    pub fn compose(&self, inner: &Rect) -> Rect {
        Rect::new(self.x0 + inner.x0, self.y0 + inner.y0, inner.w, inner.h)
    }

    pub fn contains(&self, y: usize, x: usize) -> bool {
        x >= self.x0 && x < self.x0 + self.w && y >= self.y0 && y < self.y0 + self.h
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.x0 < other.x0 + other.w
            && other.x0 < self.x0 + self.w
            && self.y0 < other.y0 + other.h
            && other.y0 < self.y0 + self.h
    }
}

impl std::str::FromStr for Rect {
    type Err = Error;

    /// Parses `x0,y0,w,h`.
    fn from_str(s: &str) -> Result<Self> {
        let parts = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Config(format!("bad rect {s:?}: {e}")))?;
        match parts[..] {
            [x0, y0, w, h] => Ok(Rect::new(x0, y0, w, h)),
            _ => Err(Error::Config(format!("rect {s:?} must be x0,y0,w,h"))),
        }
    }
}

/// Boolean image annotating a frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || bits.len() != width * height {
            return Err(Error::Dimension(format!(
                "{width}x{height} mask with {} bits",
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(y, x));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn from_rect(width: usize, height: usize, r: &Rect) -> Self {
        Self::from_fn(width, height, |y, x| r.contains(y, x))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn check_matches(&self, f: &Frame) -> Result<()> {
        if self.width != f.width() || self.height != f.height() {
            return Err(Error::Dimension(format!(
                "mask is {}x{}, frame is {}x{}",
                self.width,
                self.height,
                f.width(),
                f.height()
            )));
        }
        Ok(())
    }

    pub fn crop(&self, r: &Rect) -> Result<Mask> {
        r.check_inside(self.width, self.height)?;
        Ok(Mask::from_fn(r.w, r.h, |y, x| self.get(r.y0 + y, r.x0 + x)))
    }

    /// Writes a binary 8-bit PGM (P5); true pixels become 255.
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.bits.iter().map(|&b| if b { 255u8 } else { 0 }));
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Reads an 8-bit P5 PGM; any nonzero sample is true.
    pub fn read_pgm(path: &Path) -> Result<Mask> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        parse_pgm(&bytes).map_err(|msg| Error::Format(format!("{}: {msg}", path.display())))
    }
}

fn parse_pgm(bytes: &[u8]) -> std::result::Result<Mask, String> {
    let mut pos = 0;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|e| e.to_string())?);
    }
    if tokens[0] != "P5" {
        return Err(format!("expected P5 magic, found {:?}", tokens[0]));
    }
    let parse = |t: &str| t.parse::<usize>().map_err(|e| format!("bad header field {t:?}: {e}"));
    let (width, height, maxval) = (parse(tokens[1])?, parse(tokens[2])?, parse(tokens[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(format!("only 8-bit PGM supported, maxval {maxval}"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let n = width * height;
    let raster = bytes
        .get(pos..pos + n)
        .ok_or_else(|| format!("raster has {} bytes, expected {n}", bytes.len().saturating_sub(pos)))?;
    Mask::new(width, height, raster.iter().map(|&b| b != 0).collect()).map_err(|e| e.to_string())
}

/// Contents of `header.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackHeader {
    pub width: usize,
    pub height: usize,
    pub n_frames: usize,
    pub axis_kind: AxisKind,
    pub axis_values: Vec<f64>,
    pub dtype: String,
    pub layout: String,
}

pub fn load_sequence(dir: &Path) -> Result<Sequence> {
    let header_path = dir.join(HEADER_FILE);
    let text = fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?;
    let header: StackHeader = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", header_path.display())))?;
    if header.dtype != DTYPE_F32LE {
        return Err(Error::Format(format!("unsupported dtype {:?}", header.dtype)));
    }
    if header.layout != LAYOUT_FRAME_MAJOR {
        return Err(Error::Format(format!("unsupported layout {:?}", header.layout)));
    }
    if header.axis_values.len() != header.n_frames {
        return Err(Error::Format(format!(
            "n_frames is {} but axis_values has {} entries",
            header.n_frames,
            header.axis_values.len()
        )));
    }
    check_axis(&header.axis_values)?;

    let data_path = dir.join(DATA_FILE);
    let raw = fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
    let per_frame = header.width * header.height;
    let expected = per_frame * header.n_frames * 4;
    if raw.len() != expected {
        return Err(Error::Format(format!(
            "{} has {} bytes, expected {expected} ({}x{}x{} f32)",
            data_path.display(),
            raw.len(),
            header.width,
            header.height,
            header.n_frames
        )));
    }
    let frames = raw
        .chunks_exact(per_frame * 4)
        .map(|chunk| {
            let values = chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect();
            Frame::new(header.width, header.height, values)
        })
        .collect::<Result<Vec<_>>>()?;
    Sequence::new(frames, header.axis_kind, header.axis_values)
}

/// Writes `seq` as a stack directory, narrowing values to `f32`.
pub fn save_sequence(seq: &Sequence, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let header = StackHeader {
        width: seq.width(),
        height: seq.height(),
        n_frames: seq.len(),
        axis_kind: seq.axis_kind,
        axis_values: seq.axis_values.clone(),
        dtype: DTYPE_F32LE.into(),
        layout: LAYOUT_FRAME_MAJOR.into(),
    };
    let header_path = dir.join(HEADER_FILE);
    let text = serde_json::to_string_pretty(&header).expect("header serializes");
    fs::write(&header_path, text).map_err(|e| Error::io(&header_path, e))?;

    let data_path = dir.join(DATA_FILE);
    let file = fs::File::create(&data_path).map_err(|e| Error::io(&data_path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for frame in &seq.frames {
        for &v in &frame.values {
            out.write_all(&(v as f32).to_le_bytes())
                .map_err(|e| Error::io(&data_path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(&data_path, e))
}

pub fn crop_roi(seq: &Sequence, r: &Rect) -> Result<Sequence> {
    r.check_inside(seq.width(), seq.height())?;
    seq.map_frames(|f| f.crop(r))
}

/// Inclusive frame-index range `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeepRange {
    pub start: usize,
    pub end: usize,
}

impl KeepRange {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    /// Parses a comma-separated list of `a:b` ranges.
    pub fn parse_list(s: &str) -> Result<Vec<KeepRange>> {
        s.split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| {
                let (a, b) = p
                    .split_once(':')
                    .ok_or_else(|| Error::Config(format!("frame range {p:?} must be a:b")))?;
                let parse = |t: &str| {
                    t.trim()
                        .parse::<usize>()
                        .map_err(|e| Error::Config(format!("frame range {p:?}: {e}")))
                };
                Ok(KeepRange::new(parse(a)?, parse(b)?))
            })
            .collect()
    }
}

/// Keeps only frames inside the union of `keep`, preserving their order.
pub fn exclude_frames(seq: &Sequence, keep: &[KeepRange]) -> Result<Sequence> {
    let n = seq.len();
    let mut selected = vec![false; n];
    for r in keep {
        if r.start > r.end || r.end >= n {
            return Err(Error::OutOfBounds(format!(
                "frame range {}:{} outside [0, {n})",
                r.start, r.end
            )));
        }
        selected[r.start..=r.end].iter_mut().for_each(|s| *s = true);
    }
    let (frames, axis): (Vec<_>, Vec<_>) = seq
        .frames
        .iter()
        .zip(&seq.axis_values)
        .zip(&selected)
        .filter(|(_, &s)| s)
        .map(|((f, &a), _)| (f.clone(), a))
        .unzip();
    if frames.is_empty() {
        return Err(Error::InvalidArgument("frame exclusion leaves no frames".into()));
    }
    Sequence::new(frames, seq.axis_kind, axis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp_seq(w: usize, h: usize, n: usize) -> Sequence {
        let frames = (0..n)
            .map(|k| Frame::from_fn(w, h, |y, x| (k * 100 + y * w + x) as f64 * 0.25).unwrap())
            .collect();
        Sequence::new(frames, AxisKind::Time, (0..n).map(|k| k as f64 * 0.1).collect()).unwrap()
    }

    #[test]
    fn roundtrip_stack() {
        let dir = tempfile::tempdir().unwrap();
        let seq = Sequence::new(
            (0..3)
                .map(|k| Frame::new(2, 2, vec![k as f64, 1.5, -2.25, 1e3]).unwrap())
                .collect(),
            AxisKind::Time,
            vec![0.0, 0.1, 0.2],
        )
        .unwrap();
        save_sequence(&seq, dir.path()).unwrap();
        let back = load_sequence(dir.path()).unwrap();
        assert_eq!(back.axis_values(), &[0.0, 0.1, 0.2]);
        for (a, b) in back.frames().iter().zip(seq.frames()) {
            assert_eq!(a.values(), b.values());
        }
    }

    #[test]
    fn truncated_data_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_sequence(&ramp_seq(2, 2, 3), dir.path()).unwrap();
        let p = dir.path().join(DATA_FILE);
        let mut bytes = fs::read(&p).unwrap();
        bytes.pop();
        fs::write(&p, bytes).unwrap();
        let err = load_sequence(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Format(ref m) if m.contains("bytes")), "{err}");
    }

    #[test]
    fn non_monotone_axis_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_sequence(&ramp_seq(2, 2, 2), dir.path()).unwrap();
        let p = dir.path().join(HEADER_FILE);
        let text = fs::read_to_string(&p).unwrap();
        let mut header: StackHeader = serde_json::from_str(&text).unwrap();
        header.axis_values = vec![0.1, 0.1];
        fs::write(&p, serde_json::to_string(&header).unwrap()).unwrap();
        let err = load_sequence(dir.path()).unwrap_err();
        assert!(err.to_string().contains("strictly increasing"), "{err}");
    }

    #[test]
    fn missing_header_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_sequence(dir.path()), Err(Error::Io { .. })));
    }

    #[test]
    fn crop_examples() {
        let seq = ramp_seq(4, 4, 2);
        assert_eq!(crop_roi(&seq, &Rect::full(4, 4)).unwrap(), seq);
        let c = crop_roi(&seq, &Rect::new(1, 1, 2, 2)).unwrap();
        let f = seq.frame(1);
        assert_eq!(c.frame(1).values(), &[f.get(1, 1), f.get(1, 2), f.get(2, 1), f.get(2, 2)]);
        assert_eq!(c.axis_values(), seq.axis_values());
        assert!(matches!(crop_roi(&seq, &Rect::new(3, 3, 2, 2)), Err(Error::OutOfBounds(_))));
    }

    #[test]
    fn exclude_examples() {
        let seq = ramp_seq(2, 2, 10);
        assert_eq!(exclude_frames(&seq, &[KeepRange::new(0, 9)]).unwrap(), seq);
        let kept = exclude_frames(&seq, &[KeepRange::new(2, 9)]).unwrap();
        assert_eq!(kept.len(), 8);
        assert_eq!(kept.axis_values()[0], seq.axis_values()[2]);
        assert_eq!(kept.frame(0), seq.frame(2));
        assert!(exclude_frames(&seq, &[]).is_err());
        assert!(exclude_frames(&seq, &[KeepRange::new(5, 10)]).is_err());
    }

    #[test]
    fn keep_range_parsing() {
        assert_eq!(
            KeepRange::parse_list("2:9,12:15").unwrap(),
            vec![KeepRange::new(2, 9), KeepRange::new(12, 15)]
        );
        assert!(KeepRange::parse_list("2-9").is_err());
    }

    #[test]
    fn normalize_examples() {
        let f = Frame::new(3, 1, vec![2.0, 4.0, 6.0]).unwrap();
        assert_eq!(normalize01_frame(&f).values(), &[0.0, 0.5, 1.0]);
        let c = Frame::constant(3, 2, 7.5).unwrap();
        assert!(normalize01_frame(&c).values().iter().all(|&v| v == 0.0));
        let n = normalize01_frame(&f);
        assert_eq!(normalize01_frame(&n), n);
    }

    #[test]
    fn non_finite_frame_is_rejected() {
        assert!(matches!(Frame::new(2, 1, vec![1.0, f64::NAN]), Err(Error::Numeric(_))));
    }

    #[test]
    fn pgm_roundtrip_with_comment() {
        let dir = tempfile::tempdir().unwrap();
        let m = Mask::from_fn(5, 3, |y, x| (x + y) % 2 == 0);
        let p = dir.path().join("m.pgm");
        m.write_pgm(&p).unwrap();
        assert_eq!(Mask::read_pgm(&p).unwrap(), m);

        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend([0u8, 7]);
        fs::write(&p, bytes).unwrap();
        assert_eq!(Mask::read_pgm(&p).unwrap().bits(), &[false, true]);
    }

    proptest! {
        #[test]
        fn stack_roundtrip_is_bit_exact(vals in prop::collection::vec(-1e30f32..1e30f32, 12)) {
            let dir = tempfile::tempdir().unwrap();
            let frames = vals
                .chunks(6)
                .map(|c| Frame::new(3, 2, c.iter().map(|&v| v as f64).collect()).unwrap())
                .collect();
            let seq = Sequence::new(frames, AxisKind::Coefficient, vec![0.0, 1.0]).unwrap();
            save_sequence(&seq, dir.path()).unwrap();
            prop_assert_eq!(load_sequence(dir.path()).unwrap(), seq);
        }

        #[test]
        fn nested_crops_compose(ax in 0usize..4, ay in 0usize..4, aw in 3usize..6, ah in 3usize..6,
                                bx in 0usize..3, by in 0usize..3, bw in 1usize..3, bh in 1usize..3) {
            let seq = ramp_seq(10, 10, 2);
            let a = Rect::new(ax, ay, aw, ah);
            let b = Rect::new(bx, by, bw, bh);
            prop_assume!(bx + bw <= aw && by + bh <= ah);
            let twice = crop_roi(&crop_roi(&seq, &a).unwrap(), &b).unwrap();
            prop_assert_eq!(twice, crop_roi(&seq, &a.compose(&b)).unwrap());
        }

        #[test]
        fn normalize_is_affine_invariant(vals in prop::collection::vec(-50.0f64..50.0, 16),
                                         alpha in 0.01f64..100.0, beta in -100.0f64..100.0) {
            let f = Frame::new(4, 4, vals).unwrap();
            let g = f.map(|v| alpha * v + beta).unwrap();
            let (nf, ng) = (normalize01_frame(&f), normalize01_frame(&g));
            for (a, b) in nf.values().iter().zip(ng.values()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            prop_assert_eq!(normalize01_frame(&nf), nf);
        }
    }
}
