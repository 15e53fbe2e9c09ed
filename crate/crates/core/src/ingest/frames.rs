//! Frame decoding and encoding: binary PGM, PNG, PFM and Y4M.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageFormat};

use super::IngestError;
use crate::model::{FrameImage, VideoSequence};

/// Frame file kinds recognised by extension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameFormat {
    Pgm,
    Png,
    Pfm,
    Y4m,
}

impl FrameFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "pgm" => Some(Self::Pgm),
            "png" => Some(Self::Png),
            "pfm" => Some(Self::Pfm),
            "y4m" => Some(Self::Y4m),
            _ => None,
        }
    }
}

/// Loads a directory of still frames (sorted by file name) or a single Y4M stream.
///
/// Inside a directory, files without a frame extension are ignored.
pub fn load_frames(path: &Path) -> Result<VideoSequence, IngestError> {
    let frames = if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| IngestError::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && matches!(FrameFormat::from_path(p), Some(f) if f != FrameFormat::Y4m))
            .collect();
        files.sort();
        files
            .iter()
            .enumerate()
            .map(|(i, f)| read_frame_file(f, i))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        match FrameFormat::from_path(path) {
            Some(FrameFormat::Y4m) => {
                let file = fs::File::open(path).map_err(|e| IngestError::io(path, e))?;
                read_y4m(BufReader::new(file)).map_err(|e| e.at(path))?
            }
            _ => return Err(IngestError::UnsupportedFormat(path.display().to_string())),
        }
    };
    sequence(frames)
}

/// Checks count and dimensions, reporting the first frame whose size differs.
pub fn sequence(frames: Vec<FrameImage>) -> Result<VideoSequence, IngestError> {
    if frames.len() < 2 {
        return Err(IngestError::FewerThanTwoFrames);
    }
    let (w, h) = (frames[0].width(), frames[0].height());
    if let Some(i) = frames.iter().position(|f| f.width() != w || f.height() != h) {
        return Err(IngestError::InconsistentDimensions(i));
    }
    Ok(VideoSequence::new(frames).expect("frame count and sizes checked"))
}

pub fn read_frame_file(path: &Path, frame_index: usize) -> Result<FrameImage, IngestError> {
    let bytes = fs::read(path).map_err(|e| IngestError::io(path, e))?;
    let frame = match FrameFormat::from_path(path) {
        Some(FrameFormat::Pgm) => read_pgm(bytes.as_slice(), frame_index),
        Some(FrameFormat::Png) => decode_png(&bytes, frame_index),
        Some(FrameFormat::Pfm) => read_pfm(bytes.as_slice(), frame_index),
        _ => return Err(IngestError::UnsupportedFormat(path.display().to_string())),
    };
    frame.map_err(|e| e.at(path))
}

fn decode_error(detail: impl Into<String>) -> IngestError {
    IngestError::Decode {
        path: None,
        detail: detail.into(),
    }
}

/// Reads whitespace-separated header tokens, skipping `#` comments, then exactly
/// one whitespace byte.
fn header_tokens<R: BufRead>(r: &mut R, count: usize) -> Result<Vec<String>, IngestError> {
    let mut tokens = Vec::with_capacity(count);
    let mut cur = String::new();
    let mut byte = [0u8; 1];
    while tokens.len() < count {
        r.read_exact(&mut byte).map_err(|_| decode_error("truncated header"))?;
        let c = byte[0];
        if c == b'#' && cur.is_empty() {
            let mut skip = Vec::new();
            r.read_until(b'\n', &mut skip).map_err(|_| decode_error("truncated header"))?;
        } else if c.is_ascii_whitespace() {
            if !cur.is_empty() {
                tokens.push(std::mem::take(&mut cur));
            }
        } else {
            cur.push(c as char);
        }
    }
    Ok(tokens)
}

fn parse_dim(s: &str) -> Result<usize, IngestError> {
    match s.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(decode_error(format!("bad dimension `{s}`"))),
    }
}

/// Binary PGM (`P5`); intensities are `sample / maxval`.
pub fn read_pgm<R: Read>(input: R, frame_index: usize) -> Result<FrameImage, IngestError> {
    let mut r = BufReader::new(input);
    let t = header_tokens(&mut r, 4)?;
    if t[0] != "P5" {
        return Err(decode_error(format!("expected P5 magic, found `{}`", t[0])));
    }
    let (w, h) = (parse_dim(&t[1])?, parse_dim(&t[2])?);
    let maxval: u32 = t[3]
        .parse()
        .ok()
        .filter(|m| (1..=65535).contains(m))
        .ok_or_else(|| decode_error(format!("bad maxval `{}`", t[3])))?;
    let wide = maxval > 255;
    let mut raw = vec![0u8; w * h * if wide { 2 } else { 1 }];
    r.read_exact(&mut raw).map_err(|_| decode_error("truncated pixel data"))?;
    let m = maxval as f32;
    let pixels: Vec<f32> = if wide {
        raw.chunks_exact(2)
            .map(|b| (u16::from_be_bytes([b[0], b[1]]) as f32 / m).min(1.0))
            .collect()
    } else {
        raw.iter().map(|&b| (b as f32 / m).min(1.0)).collect()
    };
    FrameImage::new(w, h, pixels, frame_index).map_err(|e| decode_error(e.to_string()))
}

/// 8-bit PGM with `round(255 * v)` samples.
pub fn write_pgm<W: Write>(mut out: W, frame: &FrameImage) -> std::io::Result<()> {
    write!(out, "P5\n{} {}\n255\n", frame.width(), frame.height())?;
    let bytes: Vec<u8> = frame.pixels().iter().map(|&v| to_byte(v)).collect();
    out.write_all(&bytes)
}

#[inline]
pub(crate) fn to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Single-channel PFM (`Pf`), bottom row first, byte order from the scale sign.
pub fn read_pfm<R: Read>(input: R, frame_index: usize) -> Result<FrameImage, IngestError> {
    let mut r = BufReader::new(input);
    let t = header_tokens(&mut r, 4)?;
    if t[0] != "Pf" {
        return Err(decode_error(format!("expected Pf magic, found `{}`", t[0])));
    }
    let (w, h) = (parse_dim(&t[1])?, parse_dim(&t[2])?);
    let scale: f32 = t[3]
        .parse()
        .ok()
        .filter(|s: &f32| *s != 0.0 && s.is_finite())
        .ok_or_else(|| decode_error(format!("bad scale `{}`", t[3])))?;
    let mut raw = vec![0u8; w * h * 4];
    r.read_exact(&mut raw).map_err(|_| decode_error("truncated pixel data"))?;
    let mut pixels = vec![0f32; w * h];
    for (i, b) in raw.chunks_exact(4).enumerate() {
        let b = [b[0], b[1], b[2], b[3]];
        let v = if scale < 0.0 { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (row, col) = (i / w, i % w);
        pixels[(h - 1 - row) * w + col] = v;
    }
    FrameImage::new(w, h, pixels, frame_index).map_err(|e| decode_error(e.to_string()))
}

/// Writes little-endian PFM; reading it back is bit-exact.
pub fn write_pfm<W: Write>(mut out: W, frame: &FrameImage) -> std::io::Result<()> {
    let (w, h) = (frame.width(), frame.height());
    write!(out, "Pf\n{w} {h}\n-1.0\n")?;
    let mut bytes = Vec::with_capacity(w * h * 4);
    for row in (0..h).rev() {
        for v in &frame.pixels()[row * w..(row + 1) * w] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&bytes)
}

/// `0.299 R + 0.587 G + 0.114 B` on normalised channels.
#[inline]
pub fn luma(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

/// Grayscale or RGB PNG at 8 or 16 bits; RGB is luma-converted.
pub fn decode_png(bytes: &[u8], frame_index: usize) -> Result<FrameImage, IngestError> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| decode_error(e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels: Vec<f32> = match img {
        DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(|v| v as f32 / 255.0).collect(),
        DynamicImage::ImageLuma16(b) => b.into_raw().into_iter().map(|v| v as f32 / 65535.0).collect(),
        DynamicImage::ImageRgb8(b) => b
            .into_raw()
            .chunks_exact(3)
            .map(|c| (luma(c[0] as f64, c[1] as f64, c[2] as f64) / 255.0).min(1.0) as f32)
            .collect(),
        DynamicImage::ImageRgb16(b) => b
            .into_raw()
            .chunks_exact(3)
            .map(|c| (luma(c[0] as f64, c[1] as f64, c[2] as f64) / 65535.0).min(1.0) as f32)
            .collect(),
        other => {
            return Err(IngestError::UnsupportedFormat(format!(
                "PNG color type {:?}",
                other.color()
            )))
        }
    };
    FrameImage::new(w, h, pixels, frame_index).map_err(|e| decode_error(e.to_string()))
}

pub fn encode_png_gray(frame: &FrameImage) -> Vec<u8> {
    let bytes: Vec<u8> = frame.pixels().iter().map(|&v| to_byte(v)).collect();
    let img = image::GrayImage::from_raw(frame.width() as u32, frame.height() as u32, bytes)
        .expect("buffer matches dimensions");
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).expect("in-memory PNG encode");
    out.into_inner()
}

pub fn encode_png_rgb(width: usize, height: usize, rgb: Vec<u8>) -> Vec<u8> {
    let img = image::RgbImage::from_raw(width as u32, height as u32, rgb)
        .expect("buffer matches dimensions");
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).expect("in-memory PNG encode");
    out.into_inner()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Chroma {
    C420,
    Mono,
}

/// Y4M with `C420*` or `Cmono` sampling; only the luma plane is kept (as `Y / 255`).
pub fn read_y4m<R: Read>(input: R) -> Result<Vec<FrameImage>, IngestError> {
    let mut r = BufReader::new(input);
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line).map_err(|e| decode_error(e.to_string()))?;
    let header = String::from_utf8_lossy(&line);
    let mut params = header.trim_end().split(' ');
    if params.next() != Some("YUV4MPEG2") {
        return Err(decode_error("missing YUV4MPEG2 signature"));
    }
    let (mut w, mut h, mut chroma) = (0, 0, Chroma::C420);
    for p in params {
        let (tag, val) = p.split_at(p.len().min(1));
        match tag {
            "W" => w = parse_dim(val)?,
            "H" => h = parse_dim(val)?,
            "C" => {
                chroma = if val.starts_with("420") {
                    Chroma::C420
                } else if val == "mono" {
                    Chroma::Mono
                } else {
                    return Err(IngestError::UnsupportedFormat(format!("Y4M colorspace C{val}")));
                }
            }
            _ => {}
        }
    }
    if w == 0 || h == 0 {
        return Err(decode_error("Y4M header lacks W or H"));
    }
    let chroma_len = match chroma {
        Chroma::C420 => 2 * w.div_ceil(2) * h.div_ceil(2),
        Chroma::Mono => 0,
    };
    let mut frames = Vec::new();
    loop {
        line.clear();
        let n = r.read_until(b'\n', &mut line).map_err(|e| decode_error(e.to_string()))?;
        if n == 0 {
            break;
        }
        if !line.starts_with(b"FRAME") {
            return Err(decode_error(format!("frame {}: missing FRAME marker", frames.len())));
        }
        let mut luma = vec![0u8; w * h];
        r.read_exact(&mut luma)
            .map_err(|_| decode_error(format!("frame {}: truncated luma plane", frames.len())))?;
        let mut skip = vec![0u8; chroma_len];
        r.read_exact(&mut skip)
            .map_err(|_| decode_error(format!("frame {}: truncated chroma planes", frames.len())))?;
        let pixels = luma.into_iter().map(|b| b as f32 / 255.0).collect();
        frames.push(FrameImage::new(w, h, pixels, frames.len()).map_err(|e| decode_error(e.to_string()))?);
    }
    Ok(frames)
}

/// Full-range BT.601 RGB to 4:2:0 Y4M, chroma averaged over 2x2 blocks.
pub fn write_y4m_rgb<W: Write>(
    mut out: W,
    width: usize,
    height: usize,
    frames: &[Vec<u8>],
) -> std::io::Result<()> {
    writeln!(out, "YUV4MPEG2 W{width} H{height} F25:1 Ip A1:1 C420jpeg")?;
    let (cw, ch) = (width.div_ceil(2), height.div_ceil(2));
    for rgb in frames {
        let px = |x: usize, y: usize| {
            let i = 3 * (y * width + x);
            (rgb[i] as f64, rgb[i + 1] as f64, rgb[i + 2] as f64)
        };
        let mut y_plane = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let (r, g, b) = px(x, y);
                y_plane.push(luma(r, g, b).round().clamp(0.0, 255.0) as u8);
            }
        }
        let mut u_plane = Vec::with_capacity(cw * ch);
        let mut v_plane = Vec::with_capacity(cw * ch);
        for cy in 0..ch {
            for cx in 0..cw {
                let (mut u, mut v, mut n) = (0.0, 0.0, 0.0);
                for y in 2 * cy..(2 * cy + 2).min(height) {
                    for x in 2 * cx..(2 * cx + 2).min(width) {
                        let (r, g, b) = px(x, y);
                        u += -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0;
                        v += 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0;
                        n += 1.0;
                    }
                }
                u_plane.push((u / n).round().clamp(0.0, 255.0) as u8);
                v_plane.push((v / n).round().clamp(0.0, 255.0) as u8);
            }
        }
        out.write_all(b"FRAME\n")?;
        out.write_all(&y_plane)?;
        out.write_all(&u_plane)?;
        out.write_all(&v_plane)?;
    }
    Ok(())
}
