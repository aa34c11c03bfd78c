//! Binary 8-bit PGM (P5) reading and writing, and image directory listing.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::sift::GrayImage;

fn bad(path: &Path, msg: &str) -> Error {
    Error::Format(format!("{}: {msg}", path.display()))
}

/// Decodes P5 bytes into `(width, height, maxval, samples)`.
pub fn parse_pgm(bytes: &[u8], path: &Path) -> Result<(usize, usize, u8, Vec<u8>)> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(bad(path, "not a binary PGM (P5) file"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for f in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&c| c != b'\n') {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *f = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(path, "malformed header"))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(bad(path, "malformed header"));
    }
    pos += 1;
    let [w, h, maxval] = fields;
    if maxval == 0 || maxval > 255 {
        return Err(bad(path, "only 8-bit PGM (maxval 1..=255) is supported"));
    }
    let n = w
        .checked_mul(h)
        .ok_or_else(|| bad(path, "image too large"))?;
    if w == 0 || h == 0 {
        return Err(bad(path, "image has a zero dimension"));
    }
    let data = bytes
        .get(pos..pos + n)
        .ok_or_else(|| bad(path, "truncated pixel data"))?;
    Ok((w, h, maxval as u8, data.to_vec()))
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let (w, h, maxval, data) = parse_pgm(&bytes, path)?;
    if data.iter().any(|&s| s > maxval) {
        return Err(bad(path, "sample exceeds maxval"));
    }
    GrayImage::from_u8(w, h, &data, maxval)
}

pub fn encode_pgm(width: usize, height: usize, samples: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(samples);
    out
}

/// Writes an image, quantizing intensities to 8 bits.
pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    let samples: Vec<u8> = img
        .pixels()
        .iter()
        .map(|p| (p * 255.0).round() as u8)
        .collect();
    std::fs::write(path, encode_pgm(img.width(), img.height(), &samples))
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// `.pgm` files under `dir`, recursively, in sorted path order.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let rd = std::fs::read_dir(&d).map_err(|e| Error::io(d.display().to_string(), e))?;
        for entry in rd {
            let p = entry
                .map_err(|e| Error::io(d.display().to_string(), e))?
                .path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Immediate subdirectories of `dir` as `(name, path)`, sorted by name.
pub fn class_dirs(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let mut out = Vec::new();
    for entry in rd {
        let p = entry
            .map_err(|e| Error::io(dir.display().to_string(), e))?
            .path();
        if p.is_dir() {
            let name = p
                .file_name()
                .unwrap_or_default()
                .to_string_lossy()
                .into_owned();
            out.push((name, p));
        }
    }
    out.sort();
    Ok(out)
}
