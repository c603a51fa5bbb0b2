//! Grayscale image input and result output.
//!
//! Inputs are PGM (P2/P5) or PNG (8/16-bit gray or RGB), detected from the
//! file's magic bytes. Intensities are scaled to `[0, 1]` by the format's
//! maximum value; colour is reduced to Rec. 601 luma first.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Mask, ScalarField};

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";
const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Pgm,
    Png,
}

/// Format of an encoded image, from its leading bytes.
pub fn detect_format(bytes: &[u8]) -> Result<ImageFormat> {
    if bytes.starts_with(PNG_MAGIC) {
        Ok(ImageFormat::Png)
    } else if bytes.starts_with(b"P2") || bytes.starts_with(b"P5") {
        Ok(ImageFormat::Pgm)
    } else {
        let head: String = bytes.iter().take(8).map(|b| format!("{b:02x}")).collect();
        Err(Error::UnsupportedFormat(format!("unrecognised magic bytes {head}")))
    }
}

pub fn read_image(path: impl AsRef<Path>) -> Result<ScalarField> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| Error::Unreadable {
        path: path.to_path_buf(),
        source,
    })?;
    decode_image(&bytes)
}

pub fn decode_image(bytes: &[u8]) -> Result<ScalarField> {
    match detect_format(bytes)? {
        ImageFormat::Pgm => decode_pgm(bytes),
        ImageFormat::Png => decode_png(bytes),
    }
}

/// Whitespace/comment-aware header tokenizer for PNM files.
struct PnmHeader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PnmHeader<'a> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() && self.bytes[self.pos] != b'#' {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let tok = self
            .token()
            .ok_or_else(|| Error::Malformed(format!("PGM truncated before {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Malformed(format!("PGM {what} is not a number")))
    }
}

fn decode_pgm(bytes: &[u8]) -> Result<ScalarField> {
    let mut hdr = PnmHeader { bytes, pos: 0 };
    let magic = hdr.token().unwrap_or_default();
    let binary = magic == b"P5";
    let width = hdr.number("width")?;
    let height = hdr.number("height")?;
    let maxval = hdr.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::ZeroSize);
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Malformed(format!("PGM maxval {maxval} out of range")));
    }
    let scale = 1.0 / maxval as f64;
    let n = width * height;
    let mut data = Vec::with_capacity(n);

    if binary {
        // exactly one whitespace byte separates the header from the raster
        let start = hdr.pos + 1;
        let sample = if maxval < 256 { 1 } else { 2 };
        let raster = bytes
            .get(start..start + n * sample)
            .ok_or_else(|| Error::Malformed("PGM raster truncated".into()))?;
        for px in raster.chunks_exact(sample) {
            let v = if sample == 1 {
                px[0] as usize
            } else {
                (px[0] as usize) << 8 | px[1] as usize
            };
            data.push(v.min(maxval) as f64 * scale);
        }
    } else {
        for _ in 0..n {
            let v = hdr.number("pixel value")?;
            data.push(v.min(maxval) as f64 * scale);
        }
    }
    ScalarField::from_vec(width, height, data)
}

fn decode_png(bytes: &[u8]) -> Result<ScalarField> {
    let mut decoder = png::Decoder::new(bytes);
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| Error::Malformed(e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::Malformed(e.to_string()))?;
    let (width, height) = (info.width as usize, info.height as usize);
    if width == 0 || height == 0 {
        return Err(Error::ZeroSize);
    }
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => return Err(Error::UnsupportedFormat("indexed PNG".into())),
    };
    let (bytes_per_sample, max) = match info.bit_depth {
        png::BitDepth::Eight => (1, 255.0),
        png::BitDepth::Sixteen => (2, 65535.0),
        other => return Err(Error::UnsupportedFormat(format!("{other:?} PNG bit depth"))),
    };
    let sample = |px: &[u8], c: usize| -> f64 {
        let o = c * bytes_per_sample;
        if bytes_per_sample == 1 {
            px[o] as f64
        } else {
            u16::from_be_bytes([px[o], px[o + 1]]) as f64
        }
    };
    let stride = channels * bytes_per_sample;
    let data = buf[..info.buffer_size()]
        .chunks_exact(stride)
        .map(|px| {
            let v = if channels >= 3 {
                LUMA[0] * sample(px, 0) + LUMA[1] * sample(px, 1) + LUMA[2] * sample(px, 2)
            } else {
                sample(px, 0)
            };
            (v / max).clamp(0.0, 1.0)
        })
        .collect();
    ScalarField::from_vec(width, height, data)
}

fn is_pgm_path(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

fn write_png(path: &Path, width: usize, height: usize, depth: png::BitDepth, raster: &[u8]) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(file, width as u32, height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(depth);
    let mut writer = enc.write_header()?;
    writer.write_image_data(raster)?;
    writer.finish()?;
    Ok(())
}

/// Binary P5 encoding of a mask, foreground 255.
pub fn encode_mask_pgm(mask: &Mask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(mask.as_slice().iter().map(|&b| if b { 255u8 } else { 0 }));
    out
}

/// Writes an 8-bit mask, foreground 255 and background 0. A `.pgm`
/// extension selects binary PGM, anything else PNG.
pub fn write_mask(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if is_pgm_path(path) {
        let mut file = BufWriter::new(File::create(path)?);
        file.write_all(&encode_mask_pgm(mask))?;
        file.flush()?;
        Ok(())
    } else {
        let raster: Vec<u8> = mask.as_slice().iter().map(|&b| if b { 255 } else { 0 }).collect();
        write_png(path, mask.width(), mask.height(), png::BitDepth::Eight, &raster)
    }
}

/// Writes `u` as a 16-bit grayscale PNG with samples `round(65535 u)`.
/// Every value must lie in `[0, 1]`.
pub fn write_field(u: &ScalarField, path: impl AsRef<Path>) -> Result<()> {
    let mut raster = Vec::with_capacity(u.len() * 2);
    for j in 0..u.height() {
        for (i, &v) in u.row(j).iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::OutOfRange { i, j, value: v });
            }
            raster.extend_from_slice(&((v * 65535.0).round() as u16).to_be_bytes());
        }
    }
    write_png(path.as_ref(), u.width(), u.height(), png::BitDepth::Sixteen, &raster)
}

/// CSV text `iteration,energy` with one row per recorded energy. Values use
/// the shortest representation that parses back to the same `f64`.
pub fn format_energy_csv(trace: &[f64]) -> String {
    let mut out = String::from("iteration,energy\n");
    for (k, e) in trace.iter().enumerate() {
        out.push_str(&format!("{k},{e}\n"));
    }
    out
}

pub fn write_energy_csv(trace: &[f64], path: impl AsRef<Path>) -> Result<()> {
    if trace.is_empty() {
        return Err(Error::param("trace", "energy trace is empty"));
    }
    std::fs::write(path, format_energy_csv(trace))?;
    Ok(())
}
