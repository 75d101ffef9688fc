//! Binary PGM (`P5`) and PPM (`P6`) with a maxval of 255.
//!
//! The reader accepts any whitespace and `#` comments between header fields and
//! exactly one whitespace byte before the raster. The writer always emits the
//! canonical header `P5 <width> <height> 255\n`.

use std::path::Path;

use liplab_core::{BinaryMask, RasterImage};

use crate::error::{read_file, write_file, FormatError, IoError};

struct Header {
    channels: usize,
    width: usize,
    height: usize,
    /// Offset of the first raster byte.
    data_start: usize,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&b| b != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, field: &str) -> Result<usize, FormatError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(match self.bytes.get(start) {
                None => FormatError::at(start, format!("header ends before {field}")),
                Some(_) => FormatError::at(start, format!("expected {field}")),
            });
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| FormatError::at(start, format!("{field} out of range")))
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header, FormatError> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        Some([b'P', d]) if d.is_ascii_digit() => {
            return Err(FormatError::at(
                0,
                format!("unsupported format P{}", *d as char),
            ));
        }
        _ => return Err(FormatError::at(0, "not a binary PGM/PPM file")),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    if !cur.bytes.get(2).is_some_and(u8::is_ascii_whitespace) {
        return Err(FormatError::at(2, "expected whitespace after magic"));
    }
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval_at = {
        cur.skip_space_and_comments();
        cur.pos
    };
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(FormatError::at(
            maxval_at,
            format!("unsupported maxval {maxval}"),
        ));
    }
    if width == 0 || height == 0 {
        return Err(FormatError::at(2, "zero image dimension"));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => {}
        Some(_) => return Err(FormatError::at(cur.pos, "expected whitespace after maxval")),
        None => {
            return Err(FormatError::at(
                cur.pos,
                "truncated payload: no raster data",
            ))
        }
    }
    Ok(Header {
        channels,
        width,
        height,
        data_start: cur.pos + 1,
    })
}

/// Decodes a P5 or P6 image; the channel count follows the magic.
pub fn decode(bytes: &[u8]) -> Result<RasterImage, FormatError> {
    let h = parse_header(bytes)?;
    let len = h
        .width
        .checked_mul(h.height)
        .and_then(|n| n.checked_mul(h.channels))
        .ok_or_else(|| FormatError::at(2, "image dimensions overflow"))?;
    let raster = &bytes[h.data_start..];
    if raster.len() < len {
        return Err(FormatError::at(
            bytes.len(),
            format!(
                "truncated payload: expected {len} bytes, found {}",
                raster.len()
            ),
        ));
    }
    if raster.len() > len {
        return Err(FormatError::at(
            h.data_start + len,
            "trailing bytes after raster",
        ));
    }
    RasterImage::from_u8(h.height, h.width, h.channels, raster)
        .map_err(|e| FormatError::other(e.to_string()))
}

/// Encodes a 1-channel image as P5 or a 3-channel image as P6. Values are
/// rounded and clamped to `0..=255`.
pub fn encode(img: &RasterImage) -> Result<Vec<u8>, FormatError> {
    let magic = match img.channels() {
        1 => "P5",
        3 => "P6",
        c => {
            return Err(FormatError::other(format!(
                "cannot store {c} channels in PGM/PPM"
            )))
        }
    };
    let mut out = format!("{magic} {} {} 255\n", img.width(), img.height()).into_bytes();
    out.extend(img.to_u8());
    Ok(out)
}

fn read_channels(path: &Path, channels: usize) -> Result<RasterImage, IoError> {
    let img = decode(&read_file(path)?).map_err(|e| IoError::format(path, e))?;
    if img.channels() != channels {
        let want = if channels == 1 {
            "PGM (P5)"
        } else {
            "PPM (P6)"
        };
        return Err(IoError::format(
            path,
            FormatError::at(0, format!("expected a {want} file")),
        ));
    }
    Ok(img)
}

pub fn read_pgm(path: &Path) -> Result<RasterImage, IoError> {
    read_channels(path, 1)
}

pub fn read_ppm(path: &Path) -> Result<RasterImage, IoError> {
    read_channels(path, 3)
}

fn write_channels(path: &Path, img: &RasterImage, channels: usize) -> Result<(), IoError> {
    if img.channels() != channels {
        let msg = format!("expected {channels} channels, image has {}", img.channels());
        return Err(IoError::format(path, FormatError::other(msg)));
    }
    let bytes = encode(img).map_err(|e| IoError::format(path, e))?;
    write_file(path, &bytes)
}

pub fn write_pgm(path: &Path, img: &RasterImage) -> Result<(), IoError> {
    write_channels(path, img, 1)
}

pub fn write_ppm(path: &Path, img: &RasterImage) -> Result<(), IoError> {
    write_channels(path, img, 3)
}

/// Reads a PGM or PPM, whichever the magic says.
pub fn read_any(path: &Path) -> Result<RasterImage, IoError> {
    decode(&read_file(path)?).map_err(|e| IoError::format(path, e))
}

/// Reads a PGM mask; any nonzero pixel is foreground.
pub fn read_mask(path: &Path) -> Result<BinaryMask, IoError> {
    let img = read_pgm(path)?;
    Ok(BinaryMask::from_fn(img.height(), img.width(), |r, c| {
        img.get(r, c, 0) != 0.0
    }))
}

/// Writes a mask as PGM with foreground 255 and background 0.
pub fn write_mask(path: &Path, mask: &BinaryMask) -> Result<(), IoError> {
    let bytes: Vec<u8> = mask
        .data()
        .iter()
        .map(|&b| if b != 0 { 255 } else { 0 })
        .collect();
    let img = RasterImage::from_u8(mask.height(), mask.width(), 1, &bytes)
        .map_err(|e| IoError::format(path, FormatError::other(e.to_string())))?;
    write_pgm(path, &img)
}
