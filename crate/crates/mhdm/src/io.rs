//! Image file I/O: binary PGM (P5) at 8 or 16 bits, grayscale PNG behind
//! the same interface, and JSON sidecars for run metadata.
//!
//! Pixels are stored as f64 intensities on the file's native range
//! (0..255 or 0..65535). Round trips are lossless at the stored bit
//! depth; writing clamps and rounds.

use crate::error::{Error, Result};
use crate::grid::ImageGrid;
use serde::{de::DeserializeOwned, Serialize};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn maxval(self) -> u32 {
        match self {
            BitDepth::Eight => 255,
            BitDepth::Sixteen => 65535,
        }
    }
}

/// Read one whitespace-delimited PGM header token, skipping comments.
fn read_token(r: &mut impl BufRead) -> Result<String> {
    let mut tok = String::new();
    let mut in_comment = false;
    loop {
        let mut byte = [0u8; 1];
        match r.read_exact(&mut byte) {
            Ok(()) => {}
            Err(e) => {
                if tok.is_empty() {
                    return Err(Error::Format(format!("truncated PGM header: {e}")));
                }
                return Ok(tok);
            }
        }
        let c = byte[0] as char;
        if in_comment {
            if c == '\n' {
                in_comment = false;
            }
            continue;
        }
        if c == '#' {
            in_comment = true;
            continue;
        }
        if c.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            return Ok(tok);
        }
        tok.push(c);
    }
}

/// Read a binary (P5) PGM file.
pub fn read_pgm(path: &Path) -> Result<(ImageGrid, BitDepth)> {
    let file = fs::File::open(path)?;
    let mut r = BufReader::new(file);
    let magic = read_token(&mut r)?;
    if magic != "P5" {
        return Err(Error::Format(format!(
            "{}: expected binary PGM magic P5, got {magic}",
            path.display()
        )));
    }
    let width: usize = read_token(&mut r)?
        .parse()
        .map_err(|_| Error::Format("bad PGM width".into()))?;
    let height: usize = read_token(&mut r)?
        .parse()
        .map_err(|_| Error::Format("bad PGM height".into()))?;
    let maxval: u32 = read_token(&mut r)?
        .parse()
        .map_err(|_| Error::Format("bad PGM maxval".into()))?;
    let depth = match maxval {
        255 => BitDepth::Eight,
        65535 => BitDepth::Sixteen,
        other => {
            return Err(Error::Format(format!(
                "unsupported PGM maxval {other} (need 255 or 65535)"
            )))
        }
    };
    let n = width * height;
    let mut data = Vec::with_capacity(n);
    match depth {
        BitDepth::Eight => {
            let mut buf = vec![0u8; n];
            r.read_exact(&mut buf)?;
            data.extend(buf.iter().map(|&b| b as f64));
        }
        BitDepth::Sixteen => {
            let mut buf = vec![0u8; 2 * n];
            r.read_exact(&mut buf)?;
            data.extend(
                buf.chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64),
            );
        }
    }
    Ok((ImageGrid::new(width, height, data)?, depth))
}

/// Write a binary (P5) PGM file, clamping and rounding to the bit depth.
pub fn write_pgm(path: &Path, img: &ImageGrid, depth: BitDepth) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "P5")?;
    writeln!(w, "{} {}", img.width(), img.height())?;
    writeln!(w, "{}", depth.maxval())?;
    let maxval = depth.maxval() as f64;
    match depth {
        BitDepth::Eight => {
            let buf: Vec<u8> = img
                .data()
                .iter()
                .map(|&v| v.clamp(0.0, maxval).round() as u8)
                .collect();
            w.write_all(&buf)?;
        }
        BitDepth::Sixteen => {
            let mut buf = Vec::with_capacity(2 * img.len());
            for &v in img.data() {
                buf.extend((v.clamp(0.0, maxval).round() as u16).to_be_bytes());
            }
            w.write_all(&buf)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read any supported grayscale image by extension (pgm or png).
pub fn read_image(path: &Path) -> Result<(ImageGrid, BitDepth)> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => read_pgm(path),
        Some("png") => read_png(path),
        other => Err(Error::Format(format!(
            "unsupported image extension {other:?} (need .pgm or .png)"
        ))),
    }
}

/// Write by extension (pgm or png).
pub fn write_image(path: &Path, img: &ImageGrid, depth: BitDepth) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => write_pgm(path, img, depth),
        Some("png") => write_png(path, img, depth),
        other => Err(Error::Format(format!(
            "unsupported image extension {other:?} (need .pgm or .png)"
        ))),
    }
}

pub fn read_png(path: &Path) -> Result<(ImageGrid, BitDepth)> {
    let dynimg = image::open(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    match dynimg {
        image::DynamicImage::ImageLuma8(img) => {
            let (w, h) = (img.width() as usize, img.height() as usize);
            let data = img.into_raw().iter().map(|&b| b as f64).collect();
            Ok((ImageGrid::new(w, h, data)?, BitDepth::Eight))
        }
        image::DynamicImage::ImageLuma16(img) => {
            let (w, h) = (img.width() as usize, img.height() as usize);
            let data = img.into_raw().iter().map(|&b| b as f64).collect();
            Ok((ImageGrid::new(w, h, data)?, BitDepth::Sixteen))
        }
        other => {
            // convert anything else to 8-bit grayscale
            let img = other.into_luma8();
            let (w, h) = (img.width() as usize, img.height() as usize);
            let data = img.into_raw().iter().map(|&b| b as f64).collect();
            Ok((ImageGrid::new(w, h, data)?, BitDepth::Eight))
        }
    }
}

pub fn write_png(path: &Path, img: &ImageGrid, depth: BitDepth) -> Result<()> {
    let maxval = depth.maxval() as f64;
    let (w, h) = (img.width() as u32, img.height() as u32);
    let res = match depth {
        BitDepth::Eight => {
            let buf: Vec<u8> = img
                .data()
                .iter()
                .map(|&v| v.clamp(0.0, maxval).round() as u8)
                .collect();
            image::GrayImage::from_raw(w, h, buf)
                .expect("buffer sized to image")
                .save(path)
        }
        BitDepth::Sixteen => {
            let buf: Vec<u16> = img
                .data()
                .iter()
                .map(|&v| v.clamp(0.0, maxval).round() as u16)
                .collect();
            image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(w, h, buf)
                .expect("buffer sized to image")
                .save(path)
        }
    };
    res.map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
