//! Event and camera types plus the on-disk formats they travel in.
//!
//! Two event encodings are supported:
//!
//! * CSV: whitespace separated `t x y p`, one event per line. Blank lines and
//!   lines starting with `#` are skipped.
//! * Binary: headerless 21-byte little-endian records, `t: f64`, `x: f32`,
//!   `y: f32`, `p: i8`.
//!
//! Polarity may be written as `{-1, +1}` or `{0, 1}`; `0` reads as negative.
//! Pixel coordinates are kept as `f32` in memory so that both encodings
//! round-trip bit-exactly.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BINARY_RECORD_LEN: usize = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn sign(self) -> f64 {
        match self {
            Polarity::Positive => 1.0,
            Polarity::Negative => -1.0,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Polarity::Positive => 1,
            Polarity::Negative => -1,
        }
    }

    /// Accepts both `{-1, +1}` and `{0, 1}` encodings.
    pub fn from_raw(raw: i64) -> Option<Self> {
        match raw {
            1 => Some(Polarity::Positive),
            0 | -1 => Some(Polarity::Negative),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub x: f32,
    pub y: f32,
    pub t: f64,
    pub p: Polarity,
}

impl Event {
    pub fn new(x: f32, y: f32, t: f64, p: Polarity) -> Self {
        Self { x, y, t, p }
    }
}

/// A time-sorted window of events.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventSlice {
    events: Vec<Event>,
    t0: f64,
    tn: f64,
    /// Non-fatal issues found while building the slice (e.g. re-sorting).
    pub warnings: Vec<String>,
}

impl EventSlice {
    /// Builds a slice, stably sorting by timestamp if needed.
    pub fn new(mut events: Vec<Event>) -> Self {
        let mut warnings = Vec::new();
        if events.windows(2).any(|w| w[1].t < w[0].t) {
            events.sort_by(|a, b| a.t.total_cmp(&b.t));
            warnings.push("timestamps were not sorted; events re-sorted by time".to_string());
        }
        let (t0, tn) = match (events.first(), events.last()) {
            (Some(first), Some(last)) => (first.t, last.t),
            _ => (0.0, 0.0),
        };
        Self {
            events,
            t0,
            tn,
            warnings,
        }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn tn(&self) -> f64 {
        self.tn
    }

    pub fn duration(&self) -> f64 {
        self.tn - self.t0
    }

    /// Keeps only the first `n` events.
    pub fn truncated(&self, n: usize) -> Self {
        if n >= self.events.len() {
            return self.clone();
        }
        let mut out = Self::new(self.events[..n].to_vec());
        out.warnings.extend(self.warnings.iter().cloned());
        out
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventFormat {
    Csv,
    Binary,
}

impl FromStr for EventFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" | "txt" => Ok(EventFormat::Csv),
            "bin" | "binary" => Ok(EventFormat::Binary),
            other => Err(Error::Validation(format!("unknown event format `{other}`"))),
        }
    }
}

impl fmt::Display for EventFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventFormat::Csv => f.write_str("csv"),
            EventFormat::Binary => f.write_str("binary"),
        }
    }
}

impl EventFormat {
    /// Guesses the format from a file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") | Some("evb") => EventFormat::Binary,
            _ => EventFormat::Csv,
        }
    }
}

pub fn load_events(path: impl AsRef<Path>, format: EventFormat) -> Result<EventSlice> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        EventFormat::Csv => read_csv(BufReader::new(file), path),
        EventFormat::Binary => read_binary(BufReader::new(file), path),
    }
}

pub fn save_events(path: impl AsRef<Path>, format: EventFormat, slice: &EventSlice) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    match format {
        EventFormat::Csv => write_csv(&mut out, slice.events()),
        EventFormat::Binary => write_binary(&mut out, slice.events()),
    }
    .and_then(|_| out.flush())
    .map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::ParseLine {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

pub(crate) fn read_csv<R: BufRead>(reader: R, path: &Path) -> Result<EventSlice> {
    let mut events = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(parse_err(
                path,
                lineno,
                format!("expected 4 fields `t x y p`, found {}", fields.len()),
            ));
        }
        let t: f64 = fields[0]
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad timestamp `{}`", fields[0])))?;
        let x: f32 = fields[1]
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad x `{}`", fields[1])))?;
        let y: f32 = fields[2]
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad y `{}`", fields[2])))?;
        let raw_p: i64 = fields[3]
            .trim_start_matches('+')
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad polarity `{}`", fields[3])))?;
        let p = Polarity::from_raw(raw_p).ok_or_else(|| {
            parse_err(path, lineno, format!("polarity {raw_p} outside {{-1, 0, 1}}"))
        })?;
        if !t.is_finite() || !x.is_finite() || !y.is_finite() {
            return Err(parse_err(path, lineno, "non-finite field"));
        }
        events.push(Event::new(x, y, t, p));
    }
    Ok(EventSlice::new(events))
}

pub(crate) fn read_binary<R: Read>(mut reader: R, path: &Path) -> Result<EventSlice> {
    let mut bytes = Vec::new();
    reader
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    let rec_err = |offset: usize, msg: String| Error::ParseRecord {
        path: path.to_path_buf(),
        offset: offset as u64,
        msg,
    };
    if bytes.len() % BINARY_RECORD_LEN != 0 {
        let offset = bytes.len() - bytes.len() % BINARY_RECORD_LEN;
        return Err(rec_err(
            offset,
            format!(
                "truncated record: {} trailing bytes",
                bytes.len() % BINARY_RECORD_LEN
            ),
        ));
    }
    let mut events = Vec::with_capacity(bytes.len() / BINARY_RECORD_LEN);
    for (i, rec) in bytes.chunks_exact(BINARY_RECORD_LEN).enumerate() {
        let offset = i * BINARY_RECORD_LEN;
        let t = f64::from_le_bytes(rec[0..8].try_into().unwrap());
        let x = f32::from_le_bytes(rec[8..12].try_into().unwrap());
        let y = f32::from_le_bytes(rec[12..16].try_into().unwrap());
        let raw_p = rec[16] as i8;
        // the last 4 bytes of the record are reserved padding
        let p = Polarity::from_raw(raw_p as i64)
            .ok_or_else(|| rec_err(offset, format!("polarity {raw_p} outside {{-1, 0, 1}}")))?;
        if !t.is_finite() || !x.is_finite() || !y.is_finite() {
            return Err(rec_err(offset, "non-finite field".into()));
        }
        events.push(Event::new(x, y, t, p));
    }
    Ok(EventSlice::new(events))
}

pub(crate) fn write_csv<W: Write>(out: &mut W, events: &[Event]) -> std::io::Result<()> {
    for e in events {
        // `{}` prints the shortest representation that parses back exactly
        writeln!(out, "{} {} {} {}", e.t, e.x, e.y, e.p.as_i8())?;
    }
    Ok(())
}

pub(crate) fn write_binary<W: Write>(out: &mut W, events: &[Event]) -> std::io::Result<()> {
    let mut rec = [0u8; BINARY_RECORD_LEN];
    for e in events {
        rec[0..8].copy_from_slice(&e.t.to_le_bytes());
        rec[8..12].copy_from_slice(&e.x.to_le_bytes());
        rec[12..16].copy_from_slice(&e.y.to_le_bytes());
        rec[16] = e.p.as_i8() as u8;
        rec[17..21].fill(0);
        out.write_all(&rec)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Intrinsics with the principal point at the image center.
    pub fn centered(focal: f64, width: usize, height: usize) -> Result<Self> {
        Self::new(
            focal,
            focal,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            width,
            height,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(Error::Validation(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::Validation("principal point must be finite".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Validation(format!(
                "resolution must be at least 1x1, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StereoRig {
    pub left: CameraIntrinsics,
    pub right: CameraIntrinsics,
    pub baseline_m: f64,
}

impl StereoRig {
    pub fn new(left: CameraIntrinsics, right: CameraIntrinsics, baseline_m: f64) -> Result<Self> {
        let rig = Self {
            left,
            right,
            baseline_m,
        };
        rig.validate()?;
        Ok(rig)
    }

    /// Both cameras share one set of intrinsics.
    pub fn symmetric(k: CameraIntrinsics, baseline_m: f64) -> Result<Self> {
        Self::new(k, k, baseline_m)
    }

    pub fn validate(&self) -> Result<()> {
        self.left.validate()?;
        self.right.validate()?;
        if !(self.baseline_m > 0.0) || !self.baseline_m.is_finite() {
            return Err(Error::Validation(format!(
                "baseline must be positive, got {}",
                self.baseline_m
            )));
        }
        Ok(())
    }
}

/// Result of reading a calibration file.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub rig: StereoRig,
    pub warnings: Vec<String>,
}

const CAMERA_KEYS: [&str; 6] = ["fx", "fy", "cx", "cy", "width", "height"];

/// Reads `key = value` lines.
///
/// Camera keys may be given bare (`fx = 200`, applies to both cameras) or
/// prefixed (`left.fx`, `right.fx`), where a prefixed key overrides the bare
/// one. `baseline` is required. A repeated key keeps its last value and
/// records a warning.
pub fn load_calibration(path: impl AsRef<Path>) -> Result<Calibration> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_calibration(&text, path)
}

pub(crate) fn parse_calibration(text: &str, path: &Path) -> Result<Calibration> {
    let mut values: BTreeMap<String, f64> = BTreeMap::new();
    let mut warnings = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| parse_err(path, idx + 1, "expected `key = value`"))?;
        let key = key.trim().to_ascii_lowercase();
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| parse_err(path, idx + 1, format!("bad number for `{key}`")))?;
        if let Some(prev) = values.insert(key.clone(), value) {
            if prev != value {
                warnings.push(format!(
                    "line {}: `{key}` redefined ({prev} -> {value}); last value wins",
                    idx + 1
                ));
            }
        }
    }

    let lookup = |side: &str, key: &str| -> Result<f64> {
        values
            .get(&format!("{side}.{key}"))
            .or_else(|| values.get(key))
            .copied()
            .ok_or_else(|| Error::MissingKey(format!("{side}.{key}")))
    };
    let camera = |side: &str| -> Result<CameraIntrinsics> {
        let v: Vec<f64> = CAMERA_KEYS
            .iter()
            .map(|k| lookup(side, k))
            .collect::<Result<_>>()?;
        for (name, dim) in [("width", v[4]), ("height", v[5])] {
            if dim < 1.0 || dim.fract() != 0.0 {
                return Err(Error::Validation(format!(
                    "{side}.{name} must be a positive integer, got {dim}"
                )));
            }
        }
        CameraIntrinsics::new(v[0], v[1], v[2], v[3], v[4] as usize, v[5] as usize)
    };
    let left = camera("left")?;
    let right = camera("right")?;
    let baseline = values
        .get("baseline")
        .copied()
        .ok_or_else(|| Error::MissingKey("baseline".into()))?;
    let rig = StereoRig::new(left, right, baseline)?;
    Ok(Calibration { rig, warnings })
}

pub fn save_calibration(path: impl AsRef<Path>, rig: &StereoRig) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for (side, k) in [("left", &rig.left), ("right", &rig.right)] {
        text.push_str(&format!("{side}.fx = {}\n", k.fx));
        text.push_str(&format!("{side}.fy = {}\n", k.fy));
        text.push_str(&format!("{side}.cx = {}\n", k.cx));
        text.push_str(&format!("{side}.cy = {}\n", k.cy));
        text.push_str(&format!("{side}.width = {}\n", k.width));
        text.push_str(&format!("{side}.height = {}\n", k.height));
    }
    text.push_str(&format!("baseline = {}\n", rig.baseline_m));
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
