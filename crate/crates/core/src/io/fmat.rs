//! FMAT binary feature-matrix files: magic `"FMAT"`, little-endian u32 row
//! and column counts, then N·D little-endian f32 values.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

const MAGIC: &[u8; 4] = b"FMAT";

pub fn write_fmat(path: &Path, f: &FeatureMatrix) -> Result<()> {
    let mut bytes = Vec::with_capacity(12 + 4 * f.data.len());
    bytes.extend_from_slice(MAGIC);
    let mut dims = [0u8; 8];
    LittleEndian::write_u32(&mut dims[0..], f.n as u32);
    LittleEndian::write_u32(&mut dims[4..], f.d as u32);
    bytes.extend_from_slice(&dims);
    let mut payload = vec![0u8; 4 * f.data.len()];
    LittleEndian::write_f32_into(&f.data, &mut payload);
    bytes.extend_from_slice(&payload);
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_fmat(path: &Path) -> Result<FeatureMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(Error::format(path, "not an FMAT file"));
    }
    let n = LittleEndian::read_u32(&bytes[4..]) as usize;
    let d = LittleEndian::read_u32(&bytes[8..]) as usize;
    let payload = &bytes[12..];
    if payload.len() != 4 * n * d {
        return Err(Error::format(
            path,
            format!("payload {} bytes for {n}×{d} f32 matrix", payload.len()),
        ));
    }
    let mut data = vec![0.0f32; n * d];
    LittleEndian::read_f32_into(payload, &mut data);
    FeatureMatrix::new(n, d, data, "file")
}
