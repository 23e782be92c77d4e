//! Middlebury `.flo`: magic 202021.25, width and height as i32, then `(u, v)`
//! f32 pairs row by row, all little-endian. Components above 1e9 mark
//! unknown flow.

use std::path::Path;

use endofuse_core::refine::FlowField;

use crate::{read_bytes, write_bytes, IoError};

pub const MAGIC: f32 = 202021.25;
const UNKNOWN: f32 = 1e10;
const UNKNOWN_THRESHOLD: f32 = 1e9;

fn header(path: &Path, bytes: &[u8]) -> Result<(usize, usize), IoError> {
    if bytes.len() < 12 {
        return Err(IoError::format(
            path,
            format!("truncated: {} bytes, expected .flo magic {MAGIC}", bytes.len()),
        ));
    }
    let magic = f32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes"));
    if magic != MAGIC {
        return Err(IoError::format(
            path,
            format!("magic {magic}, expected .flo magic {MAGIC}"),
        ));
    }
    let w = i32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    let h = i32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if w <= 0 || h <= 0 {
        return Err(IoError::format(path, format!("bad dimensions {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    let expected = 12 + w * h * 8;
    if bytes.len() != expected {
        return Err(IoError::format(
            path,
            format!("{} bytes, expected {expected} for {w}x{h}", bytes.len()),
        ));
    }
    Ok((w, h))
}

/// Width and height after checking the magic and the file length.
pub fn probe(path: &Path) -> Result<(usize, usize), IoError> {
    header(path, &read_bytes(path)?)
}

pub fn read(path: &Path) -> Result<FlowField, IoError> {
    let bytes = read_bytes(path)?;
    let (w, h) = header(path, &bytes)?;
    let n = w * h;
    let (mut u, mut v, mut mask) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for pair in bytes[12..].chunks_exact(8) {
        let a = f32::from_le_bytes(pair[0..4].try_into().expect("4 bytes"));
        let b = f32::from_le_bytes(pair[4..8].try_into().expect("4 bytes"));
        let known = a.is_finite() && b.is_finite() && a.abs() <= UNKNOWN_THRESHOLD && b.abs() <= UNKNOWN_THRESHOLD;
        u.push(if known { a as f64 } else { 0.0 });
        v.push(if known { b as f64 } else { 0.0 });
        mask.push(known);
    }
    FlowField::with_mask(w, h, u, v, mask).map_err(|e| IoError::format(path, e.to_string()))
}

pub fn write(path: &Path, flow: &FlowField) -> Result<(), IoError> {
    let (w, h) = (flow.width(), flow.height());
    let mut bytes = Vec::with_capacity(12 + w * h * 8);
    bytes.extend_from_slice(&MAGIC.to_le_bytes());
    bytes.extend_from_slice(&(w as i32).to_le_bytes());
    bytes.extend_from_slice(&(h as i32).to_le_bytes());
    for i in 0..w * h {
        let (a, b) = if flow.mask()[i] {
            (flow.u()[i] as f32, flow.v()[i] as f32)
        } else {
            (UNKNOWN, UNKNOWN)
        };
        bytes.extend_from_slice(&a.to_le_bytes());
        bytes.extend_from_slice(&b.to_le_bytes());
    }
    write_bytes(path, &bytes)
}
