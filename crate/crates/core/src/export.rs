//! File exports: flat volume binaries, PGM inspection images, color-coded
//! flow PNGs and JSON documents.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, RgbImage};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::voxel::EventVolume;
use crate::warp::FlowField;

/// Writes `B, H, W` as little-endian i32 followed by row-major f64 values.
pub fn write_volume(path: &Path, vol: &EventVolume) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    for dim in [vol.bins, vol.height, vol.width] {
        let d = i32::try_from(dim).map_err(|_| Error::Dimension(format!("{dim} exceeds i32")))?;
        put(&d.to_le_bytes())?;
    }
    for v in &vol.data {
        put(&v.to_le_bytes())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_volume(path: &Path) -> Result<EventVolume> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |msg: String| Error::ParseRecord {
        path: path.to_path_buf(),
        offset: 0,
        msg,
    };
    if bytes.len() < 12 {
        return Err(bad("truncated volume header".into()));
    }
    let dims: Vec<usize> = (0..3)
        .map(|i| i32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap()))
        .map(|d| usize::try_from(d).map_err(|_| bad(format!("negative dimension {d}"))))
        .collect::<Result<_>>()?;
    let n = dims[0] * dims[1] * dims[2];
    if bytes.len() != 12 + 8 * n {
        return Err(bad(format!(
            "expected {} bytes for {}x{}x{}, found {}",
            12 + 8 * n,
            dims[0],
            dims[1],
            dims[2],
            bytes.len()
        )));
    }
    let mut vol = EventVolume::zeros(dims[0], dims[1], dims[2]);
    for (v, chunk) in vol.data.iter_mut().zip(bytes[12..].chunks_exact(8)) {
        *v = f64::from_le_bytes(chunk.try_into().unwrap());
    }
    Ok(vol)
}

/// Linear min..max rescale to 8 bits; constant images map to 0.
pub fn to_gray8(values: &[f64]) -> Vec<u8> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    values
        .iter()
        .map(|&v| {
            if span > 0.0 {
                (255.0 * (v - lo) / span).round() as u8
            } else {
                0
            }
        })
        .collect()
}

fn write_gray(path: &Path, width: usize, height: usize, values: &[f64]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    PnmEncoder::new(&mut w)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(&to_gray8(values), width as u32, height as u32, ExtendedColorType::L8)
        .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_pgm(path: &Path, img: &Grid) -> Result<()> {
    write_gray(path, img.width, img.height, &img.data)
}

/// One PGM per bin, named `{prefix}_bin{b}.pgm`.
pub fn write_volume_pgms(prefix: &str, vol: &EventVolume) -> Result<Vec<PathBuf>> {
    (0..vol.bins)
        .map(|b| {
            let path = PathBuf::from(format!("{prefix}_bin{b}.pgm"));
            write_gray(&path, vol.width, vol.height, vol.plane(b))?;
            Ok(path)
        })
        .collect()
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let c = v * s;
    let x = c * (1.0 - ((h6 % 2.0) - 1.0).abs());
    let (r, g, b) = match h6 as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r, g, b].map(|ch| ((ch + m) * 255.0).round() as u8)
}

/// Hue encodes direction, saturation encodes magnitude relative to
/// `max_mag` (the field maximum when `None`).
pub fn flow_to_rgb(flow: &FlowField, max_mag: Option<f64>) -> RgbImage {
    let mags: Vec<f64> = flow.u.iter().zip(&flow.v).map(|(u, v)| u.hypot(*v)).collect();
    let scale = max_mag.unwrap_or_else(|| mags.iter().copied().fold(0.0, f64::max));
    let mut img = RgbImage::new(flow.width as u32, flow.height as u32);
    for (i, px) in img.pixels_mut().enumerate() {
        let hue = flow.v[i].atan2(flow.u[i]) / std::f64::consts::TAU;
        let sat = if scale > 0.0 { (mags[i] / scale).min(1.0) } else { 0.0 };
        px.0 = hsv_to_rgb(hue, sat, 1.0);
    }
    img
}

pub fn write_flow_png(path: &Path, flow: &FlowField, max_mag: Option<f64>) -> Result<()> {
    flow_to_rgb(flow, max_mag)
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

/// Pretty JSON with a trailing newline.
pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn load_flow(path: &Path) -> Result<FlowField> {
    let flow: FlowField = load_json(path)?;
    flow.validate()?;
    Ok(flow)
}
