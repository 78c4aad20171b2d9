//! IDX binary format (the MNIST-family container) plus a raw NCHW loader
//! for CIFAR-style RGB datasets.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use byteorder::{BigEndian, ByteOrder};

use crate::error::{Error, Result};

const MAGIC_IMAGES: u32 = 0x0000_0803;
const MAGIC_LABELS: u32 = 0x0000_0801;

fn read_u32s(path: &Path, buf: &[u8], n: usize) -> Result<Vec<u32>> {
    if buf.len() < 4 * n {
        return Err(Error::format(path, "truncated header"));
    }
    Ok((0..n).map(|i| BigEndian::read_u32(&buf[4 * i..])).collect())
}

/// Parses an IDX image file (magic `0x00000803`): big-endian count, rows,
/// cols, then `count·rows·cols` u8 pixels. Returns `(count, rows, cols, pixels)`.
pub fn load_idx_images(path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let header = read_u32s(path, &bytes, 4)?;
    if header[0] != MAGIC_IMAGES {
        return Err(Error::format(path, format!("bad magic {:#010x}", header[0])));
    }
    let (n, h, w) = (header[1] as usize, header[2] as usize, header[3] as usize);
    let payload = &bytes[16..];
    if payload.len() != n * h * w {
        return Err(Error::format(
            path,
            format!("payload {} bytes, header promises {}", payload.len(), n * h * w),
        ));
    }
    Ok((n, h, w, payload.to_vec()))
}

/// Parses an IDX label file (magic `0x00000801`): big-endian count, then
/// `count` u8 labels.
pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let header = read_u32s(path, &bytes, 2)?;
    if header[0] != MAGIC_LABELS {
        return Err(Error::format(path, format!("bad magic {:#010x}", header[0])));
    }
    let n = header[1] as usize;
    let payload = &bytes[8..];
    if payload.len() != n {
        return Err(Error::format(
            path,
            format!("payload {} bytes, header promises {}", payload.len(), n),
        ));
    }
    Ok(payload.to_vec())
}

/// Loads a raw NCHW u8 image blob with the channel/size geometry supplied by
/// the caller; the file length must be an exact multiple of `c·h·w`.
pub fn load_raw_nchw(path: &Path, c: usize, h: usize, w: usize) -> Result<(usize, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let image_size = c * h * w;
    if image_size == 0 || bytes.len() % image_size != 0 {
        return Err(Error::format(
            path,
            format!("{} bytes is not a multiple of {c}×{h}×{w}", bytes.len()),
        ));
    }
    Ok((bytes.len() / image_size, bytes))
}

/// Writes an IDX image file; the inverse of [`load_idx_images`]. Used to
/// build test fixtures and export subsets.
pub fn write_idx_images(path: &Path, n: usize, h: usize, w: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != n * h * w {
        return Err(Error::Invalid(format!(
            "write_idx_images: {} pixels for {n}×{h}×{w}",
            pixels.len()
        )));
    }
    let mut header = [0u8; 16];
    BigEndian::write_u32(&mut header[0..], MAGIC_IMAGES);
    BigEndian::write_u32(&mut header[4..], n as u32);
    BigEndian::write_u32(&mut header[8..], h as u32);
    BigEndian::write_u32(&mut header[12..], w as u32);
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&header).map_err(|e| Error::io(path, e))?;
    file.write_all(pixels).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Writes an IDX label file; the inverse of [`load_idx_labels`].
pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut header = [0u8; 8];
    BigEndian::write_u32(&mut header[0..], MAGIC_LABELS);
    BigEndian::write_u32(&mut header[4..], labels.len() as u32);
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&header).map_err(|e| Error::io(path, e))?;
    file.write_all(labels).map_err(|e| Error::io(path, e))?;
    Ok(())
}
