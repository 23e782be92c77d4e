//! Portable float maps. Written little-endian (scale −1), single channel,
//! rows bottom to top as the format requires. Reading accepts either byte
//! order and `PF` (three-channel) files.

use std::path::Path;

use endofuse_core::geometry::{GridUnit, MaskedGrid};

use crate::{read_bytes, write_bytes, IoError};

#[derive(Clone, Debug, PartialEq)]
pub struct Pfm {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Row-major, top row first, channels interleaved.
    pub data: Vec<f32>,
}

struct Header {
    width: usize,
    height: usize,
    channels: usize,
    little_endian: bool,
    offset: usize,
}

fn parse_header(path: &Path, bytes: &[u8]) -> Result<Header, IoError> {
    let bad = |m: &str| {
        IoError::format(
            path,
            format!("{m} (expected PFM header \"Pf\" or \"PF\", dimensions, scale)"),
        )
    };
    // Three whitespace-separated tokens after the magic, the last followed by
    // exactly one whitespace byte.
    let mut tokens = Vec::new();
    let mut i = 0;
    while tokens.len() < 4 {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i || i >= bytes.len() || i > 256 {
            return Err(bad("truncated header"));
        }
        tokens.push(std::str::from_utf8(&bytes[start..i]).map_err(|_| bad("non-ASCII header"))?);
    }
    let channels = match tokens[0] {
        "Pf" => 1,
        "PF" => 3,
        m => return Err(bad(&format!("bad magic {m:?}"))),
    };
    let width: usize = tokens[1].parse().map_err(|_| bad("bad width"))?;
    let height: usize = tokens[2].parse().map_err(|_| bad("bad height"))?;
    let scale: f64 = tokens[3].parse().map_err(|_| bad("bad scale"))?;
    if width == 0 || height == 0 {
        return Err(bad("zero dimension"));
    }
    if scale == 0.0 || !scale.is_finite() {
        return Err(bad("scale must be nonzero"));
    }
    Ok(Header {
        width,
        height,
        channels,
        little_endian: scale < 0.0,
        offset: i + 1,
    })
}

/// Width and height from the header alone.
pub fn probe(path: &Path) -> Result<(usize, usize), IoError> {
    use std::io::Read;
    let mut buf = vec![0u8; 512];
    let mut f = std::fs::File::open(path).map_err(|e| IoError::io(path, e))?;
    let n = f.read(&mut buf).map_err(|e| IoError::io(path, e))?;
    let h = parse_header(path, &buf[..n])?;
    let expected = h.offset + h.width * h.height * h.channels * 4;
    let len = f.metadata().map_err(|e| IoError::io(path, e))?.len() as usize;
    if len != expected {
        return Err(IoError::format(
            path,
            format!("{len} bytes, expected {expected} for {}x{}", h.width, h.height),
        ));
    }
    Ok((h.width, h.height))
}

pub fn read(path: &Path) -> Result<Pfm, IoError> {
    let bytes = read_bytes(path)?;
    let h = parse_header(path, &bytes)?;
    let n = h.width * h.height * h.channels;
    let body = &bytes[h.offset..];
    if body.len() != n * 4 {
        return Err(IoError::format(
            path,
            format!(
                "{} data bytes, expected {} for {}x{}",
                body.len(),
                n * 4,
                h.width,
                h.height
            ),
        ));
    }
    let row = h.width * h.channels;
    let mut data = vec![0f32; n];
    for (i, chunk) in body.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if h.little_endian {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (r, c) = (i / row, i % row);
        data[(h.height - 1 - r) * row + c] = v;
    }
    Ok(Pfm {
        width: h.width,
        height: h.height,
        channels: h.channels,
        data,
    })
}

/// Single-channel, `data` top row first.
pub fn write(path: &Path, width: usize, height: usize, data: &[f32]) -> Result<(), IoError> {
    assert_eq!(data.len(), width * height, "PFM data length");
    let mut bytes = format!("Pf\n{width} {height}\n-1.0\n").into_bytes();
    bytes.reserve(data.len() * 4);
    for r in (0..height).rev() {
        for v in &data[r * width..(r + 1) * width] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_bytes(path, &bytes)
}

/// Depth or disparity map; finite positive samples are valid.
pub fn read_map<U: GridUnit>(path: &Path) -> Result<MaskedGrid<U>, IoError> {
    let pfm = read(path)?;
    if pfm.channels != 1 {
        return Err(IoError::format(path, "expected a single-channel PFM"));
    }
    MaskedGrid::from_values(pfm.width, pfm.height, pfm.data.iter().map(|v| *v as f64).collect())
        .map_err(|e| IoError::format(path, e.to_string()))
}

/// Invalid samples are written as 0.
pub fn write_map<U: GridUnit>(path: &Path, map: &MaskedGrid<U>) -> Result<(), IoError> {
    let data: Vec<f32> = (0..map.len()).map(|i| map.at(i).map_or(0.0, |v| v as f32)).collect();
    write(path, map.width(), map.height(), &data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use endofuse_core::geometry::DepthMap;

    #[test]
    fn round_trip_and_orientation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pfm");
        let data: Vec<f32> = (0..6).map(|v| v as f32 + 0.5).collect();
        write(&p, 3, 2, &data).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"Pf\n3 2\n-1.0\n"));
        // Bottom row is stored first.
        assert_eq!(&bytes[12..16], &3.5f32.to_le_bytes());
        let back = read(&p).unwrap();
        assert_eq!(back.data, data);
        assert_eq!(probe(&p).unwrap(), (3, 2));
    }

    #[test]
    fn big_endian_and_color() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.pfm");
        let mut bytes = b"PF\n1 1\n1.0\n".to_vec();
        for v in [1.0f32, 2.0, 3.0] {
            bytes.extend_from_slice(&v.to_be_bytes());
        }
        std::fs::write(&p, bytes).unwrap();
        let pfm = read(&p).unwrap();
        assert_eq!((pfm.channels, pfm.data.clone()), (3, vec![1.0, 2.0, 3.0]));
        assert!(read_map::<endofuse_core::geometry::Meters>(&p).is_err());
    }

    #[test]
    fn rejects_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.pfm");
        std::fs::write(&p, b"P6\n1 1\n255\n\0\0\0").unwrap();
        let e = read(&p).unwrap_err().to_string();
        assert!(e.contains("c.pfm") && e.contains("magic"), "{e}");
        std::fs::write(&p, b"Pf\n2 2\n-1.0\n\0\0\0\0").unwrap();
        assert!(read(&p).is_err());
        assert!(probe(&p).is_err());
    }

    #[test]
    fn depth_map_masks_invalid() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.pfm");
        let d = DepthMap::with_mask(2, 2, vec![1.0, 2.0, 3.0, 4.0], vec![true, false, true, true]).unwrap();
        write_map(&p, &d).unwrap();
        let back: DepthMap = read_map(&p).unwrap();
        assert_eq!(back.mask(), d.mask());
        assert_eq!(back.get(0, 1), Some(3.0));
    }
}
