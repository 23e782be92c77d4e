//! PNG images and validity masks.

use std::io::Cursor;
use std::path::Path;

use endofuse_core::geometry::ImageGray;
use png::{BitDepth, ColorType, Transformations};

use crate::{read_bytes, write_bytes, IoError};

pub const SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', b'\r', b'\n', 0x1a, b'\n'];

/// Rec. 601 luma weights.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Clone, Debug, PartialEq)]
pub struct LoadedImage {
    /// Intensity in `[0, 1]`.
    pub gray: ImageGray,
    /// 8-bit color for color inputs, `None` for grayscale files.
    pub color: Option<Vec<[u8; 3]>>,
}

struct Decoded {
    width: usize,
    height: usize,
    channels: usize,
    /// Samples scaled to `[0, 1]`, alpha dropped.
    samples: Vec<f64>,
}

fn decode(path: &Path) -> Result<Decoded, IoError> {
    let bytes = read_bytes(path)?;
    if !bytes.starts_with(&SIGNATURE) {
        return Err(IoError::format(path, "missing PNG signature"));
    }
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(Transformations::EXPAND);
    let fail = |e: png::DecodingError| IoError::format(path, format!("PNG decode: {e}"));
    let mut reader = decoder.read_info().map_err(fail)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| IoError::format(path, "PNG too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(fail)?;
    let (width, height) = (info.width as usize, info.height as usize);
    let (stored, keep) = match info.color_type {
        ColorType::Grayscale => (1, 1),
        ColorType::GrayscaleAlpha => (2, 1),
        ColorType::Rgb => (3, 3),
        ColorType::Rgba => (4, 3),
        ColorType::Indexed => return Err(IoError::format(path, "unexpanded palette image")),
    };
    let raw: Vec<f64> = match info.bit_depth {
        BitDepth::Sixteen => buf[..info.buffer_size()]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / 65535.0)
            .collect(),
        BitDepth::Eight => buf[..info.buffer_size()].iter().map(|v| *v as f64 / 255.0).collect(),
        d => return Err(IoError::format(path, format!("unsupported bit depth {d:?}"))),
    };
    let samples = raw
        .chunks_exact(stored)
        .flat_map(|px| px[..keep].iter().copied())
        .collect();
    Ok(Decoded {
        width,
        height,
        channels: keep,
        samples,
    })
}

/// Width and height from the IHDR chunk.
pub fn probe(path: &Path) -> Result<(usize, usize), IoError> {
    use std::io::Read;
    let mut head = [0u8; 24];
    let mut f = std::fs::File::open(path).map_err(|e| IoError::io(path, e))?;
    f.read_exact(&mut head)
        .map_err(|_| IoError::format(path, "truncated before the PNG header"))?;
    if head[..8] != SIGNATURE {
        return Err(IoError::format(path, "missing PNG signature"));
    }
    if &head[12..16] != b"IHDR" {
        return Err(IoError::format(path, "first chunk is not IHDR"));
    }
    let w = u32::from_be_bytes(head[16..20].try_into().expect("4 bytes")) as usize;
    let h = u32::from_be_bytes(head[20..24].try_into().expect("4 bytes")) as usize;
    Ok((w, h))
}

pub fn read_image(path: &Path) -> Result<LoadedImage, IoError> {
    let d = decode(path)?;
    let (gray, color) = if d.channels == 1 {
        (d.samples, None)
    } else {
        let gray = d
            .samples
            .chunks_exact(3)
            .map(|c| LUMA[0] * c[0] + LUMA[1] * c[1] + LUMA[2] * c[2])
            .collect();
        let color = d
            .samples
            .chunks_exact(3)
            .map(|c| [0, 1, 2].map(|k| (c[k] * 255.0).round() as u8))
            .collect();
        (gray, Some(color))
    };
    let gray = ImageGray::new(d.width, d.height, gray).map_err(|e| IoError::format(path, e.to_string()))?;
    Ok(LoadedImage { gray, color })
}

fn encode(
    path: &Path,
    width: usize,
    height: usize,
    color: ColorType,
    depth: BitDepth,
    data: &[u8],
) -> Result<(), IoError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(depth);
        let fail = |e: png::EncodingError| IoError::format(path, format!("PNG encode: {e}"));
        let mut w = enc.write_header().map_err(fail)?;
        w.write_image_data(data).map_err(fail)?;
        w.finish().map_err(fail)?;
    }
    write_bytes(path, &out)
}

/// 8-bit grayscale, intensity clamped to `[0, 1]`.
pub fn write_gray8(path: &Path, image: &ImageGray) -> Result<(), IoError> {
    let data: Vec<u8> = image
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    encode(
        path,
        image.width(),
        image.height(),
        ColorType::Grayscale,
        BitDepth::Eight,
        &data,
    )
}

pub fn write_rgb8(path: &Path, width: usize, height: usize, rgb: &[[u8; 3]]) -> Result<(), IoError> {
    assert_eq!(rgb.len(), width * height, "RGB data length");
    encode(path, width, height, ColorType::Rgb, BitDepth::Eight, rgb.as_flattened())
}

/// 16-bit RGB from samples in `[0, 1]`.
pub fn write_rgb16(path: &Path, width: usize, height: usize, rgb: &[[f64; 3]]) -> Result<(), IoError> {
    assert_eq!(rgb.len(), width * height, "RGB data length");
    let data: Vec<u8> = rgb
        .iter()
        .flatten()
        .flat_map(|v| ((v.clamp(0.0, 1.0) * 65535.0).round() as u16).to_be_bytes())
        .collect();
    encode(path, width, height, ColorType::Rgb, BitDepth::Sixteen, &data)
}

/// 8-bit mask, 0 = invalid.
pub fn read_mask(path: &Path) -> Result<(usize, usize, Vec<bool>), IoError> {
    let d = decode(path)?;
    if d.channels != 1 {
        return Err(IoError::format(path, "mask must be single-channel"));
    }
    Ok((d.width, d.height, d.samples.iter().map(|v| *v > 0.0).collect()))
}

pub fn write_mask(path: &Path, width: usize, height: usize, mask: &[bool]) -> Result<(), IoError> {
    assert_eq!(mask.len(), width * height, "mask length");
    let data: Vec<u8> = mask.iter().map(|m| if *m { 255 } else { 0 }).collect();
    encode(path, width, height, ColorType::Grayscale, BitDepth::Eight, &data)
}
