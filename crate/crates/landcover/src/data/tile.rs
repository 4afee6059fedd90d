//! Flat binary tile container ("LCT1").
//!
//! Layout, bit-exact:
//!   bytes 0..4    magic `LCT1`
//!   bytes 4..6    height, u16 little-endian
//!   bytes 6..8    width, u16 little-endian
//!   bytes 8..10   channels, u16 little-endian
//!   byte 10       dtype tag: 0 = u8, 1 = u16
//!   bytes 11..16  reserved, zero
//!   bytes 16..    payload, row-major channel-interleaved (H, W, C),
//!                 u16 values little-endian
//!
//! Image tiles are 4-channel u16 (Red, Green, Blue, NIR raw reflectance
//! counts); label tiles are 1-channel u8.

use std::fs;
use std::path::Path;

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"LCT1";
pub const HEADER_LEN: usize = 16;

/// Tile spatial edge expected by the networks.
pub const TILE_SIZE: usize = 256;
/// Image bands: Red, Green, Blue, NIR.
pub const IMAGE_CHANNELS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    U8 = 0,
    U16 = 1,
}

/// Decoded payload of one container file.
#[derive(Debug, Clone)]
pub enum TileData {
    /// (channels, height, width)
    U8(Array3<u8>),
    U16(Array3<u16>),
}

fn bad(path: &Path, reason: impl Into<String>) -> Error {
    Error::TileFormat {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn header(h: usize, w: usize, c: usize, dtype: Dtype) -> [u8; HEADER_LEN] {
    let mut buf = [0u8; HEADER_LEN];
    buf[0..4].copy_from_slice(MAGIC);
    buf[4..6].copy_from_slice(&(h as u16).to_le_bytes());
    buf[6..8].copy_from_slice(&(w as u16).to_le_bytes());
    buf[8..10].copy_from_slice(&(c as u16).to_le_bytes());
    buf[10] = dtype as u8;
    buf
}

/// Write a (C, H, W) u16 array as a container file.
pub fn write_u16(path: impl AsRef<Path>, data: &Array3<u16>) -> Result<()> {
    let path = path.as_ref();
    let (c, h, w) = data.dim();
    let mut bytes = Vec::with_capacity(HEADER_LEN + h * w * c * 2);
    bytes.extend_from_slice(&header(h, w, c, Dtype::U16));
    for i in 0..h {
        for j in 0..w {
            for k in 0..c {
                bytes.extend_from_slice(&data[[k, i, j]].to_le_bytes());
            }
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Write a (C, H, W) u8 array as a container file.
pub fn write_u8(path: impl AsRef<Path>, data: &Array3<u8>) -> Result<()> {
    let path = path.as_ref();
    let (c, h, w) = data.dim();
    let mut bytes = Vec::with_capacity(HEADER_LEN + h * w * c);
    bytes.extend_from_slice(&header(h, w, c, Dtype::U8));
    for i in 0..h {
        for j in 0..w {
            for k in 0..c {
                bytes.push(data[[k, i, j]]);
            }
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Convenience for single-channel u8 label maps.
pub fn write_labels_u8(path: impl AsRef<Path>, labels: &Array2<u8>) -> Result<()> {
    let (h, w) = labels.dim();
    let data = labels
        .to_owned()
        .into_shape_with_order((1, h, w))
        .expect("1xHxW reshape");
    write_u8(path, &data)
}

/// Single-channel u16 label maps (source-legend codes).
pub fn write_labels_u16(path: impl AsRef<Path>, labels: &Array2<u16>) -> Result<()> {
    let (h, w) = labels.dim();
    let data = labels
        .to_owned()
        .into_shape_with_order((1, h, w))
        .expect("1xHxW reshape");
    write_u16(path, &data)
}

pub fn read(path: impl AsRef<Path>) -> Result<TileData> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < HEADER_LEN {
        return Err(bad(path, "file shorter than the 16-byte header"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(bad(path, "bad magic, expected LCT1"));
    }
    let h = u16::from_le_bytes([bytes[4], bytes[5]]) as usize;
    let w = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    let c = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let dtype = bytes[10];
    let n = h * w * c;
    match dtype {
        0 => {
            if bytes.len() != HEADER_LEN + n {
                return Err(bad(
                    path,
                    format!("payload length {} != {}", bytes.len() - HEADER_LEN, n),
                ));
            }
            let mut out = Array3::<u8>::zeros((c, h, w));
            let mut idx = HEADER_LEN;
            for i in 0..h {
                for j in 0..w {
                    for k in 0..c {
                        out[[k, i, j]] = bytes[idx];
                        idx += 1;
                    }
                }
            }
            Ok(TileData::U8(out))
        }
        1 => {
            if bytes.len() != HEADER_LEN + 2 * n {
                return Err(bad(
                    path,
                    format!("payload length {} != {}", bytes.len() - HEADER_LEN, 2 * n),
                ));
            }
            let mut out = Array3::<u16>::zeros((c, h, w));
            let mut idx = HEADER_LEN;
            for i in 0..h {
                for j in 0..w {
                    for k in 0..c {
                        out[[k, i, j]] = u16::from_le_bytes([bytes[idx], bytes[idx + 1]]);
                        idx += 2;
                    }
                }
            }
            Ok(TileData::U16(out))
        }
        t => Err(bad(path, format!("unknown dtype tag {t}"))),
    }
}

/// Read a 4-channel u16 image tile, checking the generator input contract.
pub fn read_image(path: impl AsRef<Path>) -> Result<Array3<u16>> {
    let path = path.as_ref();
    match read(path)? {
        TileData::U16(a) => {
            let (c, h, w) = a.dim();
            if c != IMAGE_CHANNELS || h != TILE_SIZE || w != TILE_SIZE {
                return Err(bad(
                    path,
                    format!("image tile must be {IMAGE_CHANNELS}x{TILE_SIZE}x{TILE_SIZE}, got {c}x{h}x{w}"),
                ));
            }
            Ok(a)
        }
        TileData::U8(_) => Err(bad(path, "image tile must be u16")),
    }
}

/// Read a 1-channel u8 label tile (remapped target ids).
pub fn read_labels_u8(path: impl AsRef<Path>) -> Result<Array2<u8>> {
    let path = path.as_ref();
    match read(path)? {
        TileData::U8(a) => {
            let (c, h, w) = a.dim();
            if c != 1 {
                return Err(bad(path, format!("label tile must have 1 channel, got {c}")));
            }
            Ok(a.into_shape_with_order((h, w)).expect("HxW reshape"))
        }
        TileData::U16(_) => Err(bad(path, "target label tile must be u8")),
    }
}

/// Read a 1-channel label tile in either width; source-legend labels are u16.
pub fn read_labels_u16(path: impl AsRef<Path>) -> Result<Array2<u16>> {
    let path = path.as_ref();
    match read(path)? {
        TileData::U16(a) => {
            let (c, h, w) = a.dim();
            if c != 1 {
                return Err(bad(path, format!("label tile must have 1 channel, got {c}")));
            }
            Ok(a.into_shape_with_order((h, w)).expect("HxW reshape"))
        }
        TileData::U8(a) => {
            let (c, h, w) = a.dim();
            if c != 1 {
                return Err(bad(path, format!("label tile must have 1 channel, got {c}")));
            }
            Ok(a.mapv(u16::from).into_shape_with_order((h, w)).expect("HxW reshape"))
        }
    }
}
