//! File formats: PFM for float grids, 8-bit PNG for images and masks, JSON for
//! structured data, CSV for traces.

use std::fs;
use std::path::Path;

use image::{GrayImage, ImageBuffer as PngBuffer, Luma, Rgb, RgbImage};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::DepthMap;
use crate::grid::{Grid, Mask};
use crate::image::ImageBuffer;

fn pfm_err(reason: impl Into<String>) -> Error {
    Error::Format {
        format: "pfm",
        reason: reason.into(),
    }
}

/// Encodes a grayscale float grid as little-endian PFM. Rows are stored bottom to top.
pub fn encode_pfm(grid: &Grid<f32>) -> Vec<u8> {
    let (w, h) = grid.dims();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for j in (0..h).rev() {
        for i in 0..w {
            out.extend_from_slice(&grid.get(i, j).to_le_bytes());
        }
    }
    out
}

/// Splits off one whitespace-delimited header token, consuming exactly one trailing
/// whitespace byte.
fn header_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos || *pos >= bytes.len() {
        return Err(pfm_err("truncated header"));
    }
    let token =
        std::str::from_utf8(&bytes[start..*pos]).map_err(|_| pfm_err("non-ASCII header"))?;
    *pos += 1;
    Ok(token)
}

/// Decodes a grayscale (`Pf`) PFM. A negative scale means little-endian samples,
/// a positive one big-endian.
pub fn decode_pfm(bytes: &[u8]) -> Result<Grid<f32>> {
    let mut pos = 0;
    let magic = header_token(bytes, &mut pos)?;
    if magic != "Pf" {
        return Err(pfm_err(format!(
            "expected grayscale magic `Pf`, found `{magic}`"
        )));
    }
    let parse_dim = |s: &str| -> Result<usize> {
        match s.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(pfm_err(format!("bad dimension `{s}`"))),
        }
    };
    let w = parse_dim(header_token(bytes, &mut pos)?)?;
    let h = parse_dim(header_token(bytes, &mut pos)?)?;
    let scale_tok = header_token(bytes, &mut pos)?;
    let scale: f64 = scale_tok
        .parse()
        .map_err(|_| pfm_err(format!("bad scale `{scale_tok}`")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(pfm_err(format!("bad scale `{scale_tok}`")));
    }
    let little = scale < 0.0;
    let n = w
        .checked_mul(h)
        .ok_or_else(|| pfm_err("dimensions overflow"))?;
    let payload = &bytes[pos..];
    if payload.len() < n * 4 {
        return Err(pfm_err(format!(
            "truncated payload: expected {} bytes, found {}",
            n * 4,
            payload.len()
        )));
    }
    let mut data = vec![0.0f32; n];
    for (k, chunk) in payload[..n * 4].chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        let (row_from_bottom, i) = (k / w, k % w);
        data[(h - 1 - row_from_bottom) * w + i] = v;
    }
    Grid::from_vec(w, h, data)
}

pub fn write_depth_pfm(path: &Path, depth: &DepthMap) -> Result<()> {
    let grid = depth.grid().map(|&d| d as f32);
    fs::write(path, encode_pfm(&grid))?;
    Ok(())
}

pub fn read_depth_pfm(path: &Path) -> Result<DepthMap> {
    let grid = decode_pfm(&fs::read(path)?)?;
    DepthMap::new(grid.map(|&d| d as f64))
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a 1- or 3-channel image with intensities in `[0, 1]` as 8-bit PNG.
pub fn write_image_png(path: &Path, img: &ImageBuffer) -> Result<()> {
    let (w, h) = img.dims();
    let bytes: Vec<u8> = img.as_slice().iter().map(|&v| to_u8(v)).collect();
    match img.channels() {
        1 => GrayImage::from_raw(w as u32, h as u32, bytes)
            .expect("sized")
            .save(path)?,
        3 => RgbImage::from_raw(w as u32, h as u32, bytes)
            .expect("sized")
            .save(path)?,
        c => {
            return Err(Error::Image(format!(
                "cannot write {c}-channel image as PNG"
            )))
        }
    }
    Ok(())
}

/// Reads a PNG as grayscale when it has no color channels, RGB otherwise.
pub fn read_image_png(path: &Path) -> Result<ImageBuffer> {
    let dynamic = image::open(path)?;
    let (w, h) = (dynamic.width() as usize, dynamic.height() as usize);
    if dynamic.color().has_color() {
        let rgb: PngBuffer<Rgb<u8>, Vec<u8>> = dynamic.to_rgb8();
        ImageBuffer::new(
            w,
            h,
            3,
            rgb.into_raw()
                .into_iter()
                .map(|b| b as f64 / 255.0)
                .collect(),
        )
    } else {
        let gray: PngBuffer<Luma<u8>, Vec<u8>> = dynamic.to_luma8();
        ImageBuffer::new(
            w,
            h,
            1,
            gray.into_raw()
                .into_iter()
                .map(|b| b as f64 / 255.0)
                .collect(),
        )
    }
}

/// 0 ↦ 0, 1 ↦ 255.
pub fn write_mask_png(path: &Path, mask: &Mask) -> Result<()> {
    let (w, h) = mask.dims();
    GrayImage::from_raw(w as u32, h as u32, mask.to_bytes())
        .expect("sized")
        .save(path)?;
    Ok(())
}

/// Nonzero pixels are 1.
pub fn read_mask_png(path: &Path) -> Result<Mask> {
    let gray = image::open(path)?.to_luma8();
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    Mask::from_bits(w, h, gray.into_raw().into_iter().map(|b| b != 0).collect())
}

pub fn write_gray_png(path: &Path, grid: &Grid<u8>) -> Result<()> {
    let (w, h) = grid.dims();
    GrayImage::from_raw(w as u32, h as u32, grid.as_slice().to_vec())
        .expect("sized")
        .save(path)?;
    Ok(())
}

/// Significant digits kept for floats in JSON output.
pub const JSON_SIG_DIGITS: usize = 12;

fn round_sig(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{:.*e}", JSON_SIG_DIGITS - 1, v)
        .parse()
        .expect("formatted float")
}

fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64() {
                if let Some(r) = serde_json::Number::from_f64(round_sig(x)) {
                    *n = r;
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// Pretty JSON with every float rounded to [`JSON_SIG_DIGITS`] significant digits.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value)?;
    round_floats(&mut v);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json_string(value)?)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}
