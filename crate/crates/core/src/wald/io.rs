//! The `HSC1` cube format and PGM previews.
//!
//! `HSC1` layout, integers little-endian:
//!
//! ```text
//! "HSC1"  u32 H  u32 W  u32 S  u8 has_wavelengths
//! [S × f64 wavelengths in nm, when the flag is 1]
//! H·W·S × f32 values, pixel-major (all bands of pixel (0,0), then (0,1), …)
//! ```

use std::io::Write;
use std::path::Path;

use super::HyperCube;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"HSC1";
const HEADER: usize = 17;

pub fn write_cube<W: Write>(cube: &HyperCube, out: &mut W) -> std::io::Result<()> {
    let (h, w, s) = (cube.height(), cube.width(), cube.bands());
    let mut buf = Vec::with_capacity(HEADER + 8 * s + 4 * h * w * s);
    buf.extend_from_slice(MAGIC);
    for v in [h, w, s] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    match cube.wavelengths_nm() {
        Some(wl) => {
            buf.push(1);
            for v in wl {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        None => buf.push(0),
    }
    let n = h * w;
    let data = cube.values().data();
    for p in 0..n {
        for b in 0..s {
            buf.extend_from_slice(&data[b * n + p].to_le_bytes());
        }
    }
    out.write_all(&buf)
}

fn le_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

pub fn read_cube(bytes: &[u8]) -> Result<HyperCube> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::format(0, "bad magic, expected \"HSC1\""));
    }
    if bytes.len() < HEADER {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated header: {} of {HEADER} bytes", bytes.len()),
        ));
    }
    let (h, w, s) = (
        le_u32(bytes, 4) as usize,
        le_u32(bytes, 8) as usize,
        le_u32(bytes, 12) as usize,
    );
    if h == 0 || w == 0 || s == 0 {
        return Err(Error::format(4, format!("zero extent in {h}x{w}x{s}")));
    }
    let flag = bytes[16];
    if flag > 1 {
        return Err(Error::format(16, format!("wavelength flag must be 0 or 1, got {flag}")));
    }
    let wl_bytes = if flag == 1 { 8 * s } else { 0 };
    let count = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(s))
        .filter(|&n| n <= (u64::MAX / 8) as usize)
        .ok_or_else(|| Error::format(4, format!("shape {h}x{w}x{s} overflows")))?;
    let need = (HEADER as u64) + wl_bytes as u64 + 4 * count as u64;
    if (bytes.len() as u64) < need {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated: header declares {need} bytes, file has {}", bytes.len()),
        ));
    }
    if (bytes.len() as u64) > need {
        return Err(Error::format(need, "trailing bytes after cube data"));
    }
    let wavelengths = (flag == 1).then(|| {
        (0..s)
            .map(|i| f64::from_le_bytes(bytes[HEADER + 8 * i..][..8].try_into().expect("8 bytes")))
            .collect::<Vec<f64>>()
    });
    if let Some(wl) = &wavelengths {
        if let Some(i) = wl.windows(2).position(|p| !(p[1] > p[0])) {
            return Err(Error::format(
                (HEADER + 8 * (i + 1)) as u64,
                "wavelengths must be strictly increasing",
            ));
        }
    }
    let base = HEADER + wl_bytes;
    let n = h * w;
    let mut values = vec![0.0f32; count];
    for (i, chunk) in bytes[base..].chunks_exact(4).enumerate() {
        let (p, b) = (i / s, i % s);
        values[b * n + p] = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
    }
    HyperCube::new(h, w, s, values, wavelengths)
}

pub fn save_cube(cube: &HyperCube, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_cube(cube, &mut buf).expect("writing to memory");
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_cube(path: &Path) -> Result<HyperCube> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_cube(&bytes).map_err(|e| match e {
        Error::Format { offset, message } => Error::Format {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

/// Plain (`P2`) 8-bit PGM of an `h×w` plane; values are clamped to `[0,1]`,
/// scaled by 255 and rounded half to even.
pub fn write_pgm(path: &Path, height: usize, width: usize, values: &[f32]) -> Result<()> {
    if values.len() != height * width {
        return Err(Error::dim(format!(
            "{} values for a {height}x{width} image",
            values.len()
        )));
    }
    let mut text = format!("P2\n{width} {height}\n255\n");
    for row in values.chunks(width) {
        let line: Vec<String> = row
            .iter()
            .map(|&v| ((v as f64).clamp(0.0, 1.0) * 255.0).round_ties_even().to_string())
            .collect();
        text.push_str(&line.join(" "));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
