//! DCKP network checkpoints: magic `"DCKP"`, format version, the network
//! configuration as JSON, then named little-endian f32 tensor blobs
//! covering all parameters and batchnorm running statistics.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};

use crate::error::{Error, Result};
use crate::nn::{build_network, Network, NetworkConfig};

const MAGIC: &[u8; 4] = b"DCKP";
const VERSION: u32 = 1;

fn push_u32(bytes: &mut Vec<u8>, v: u32) {
    let mut buf = [0u8; 4];
    LittleEndian::write_u32(&mut buf, v);
    bytes.extend_from_slice(&buf);
}

pub fn save_checkpoint(path: &Path, net: &Network) -> Result<()> {
    let config = serde_json::to_vec(&net.config).expect("network config serializes");
    let mut bytes = Vec::new();
    bytes.extend_from_slice(MAGIC);
    push_u32(&mut bytes, VERSION);
    push_u32(&mut bytes, config.len() as u32);
    bytes.extend_from_slice(&config);
    let mut count = 0u32;
    net.visit_state(|_, _, _| count += 1);
    push_u32(&mut bytes, count);
    net.visit_state(|name, data, shape| {
        push_u32(&mut bytes, name.len() as u32);
        bytes.extend_from_slice(name.as_bytes());
        push_u32(&mut bytes, shape.len() as u32);
        for &dim in shape {
            push_u32(&mut bytes, dim as u32);
        }
        push_u32(&mut bytes, data.len() as u32);
        let mut payload = vec![0u8; 4 * data.len()];
        LittleEndian::write_f32_into(data, &mut payload);
        bytes.extend_from_slice(&payload);
    });
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(self.path, "truncated checkpoint"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(LittleEndian::read_u32(self.take(4)?))
    }
}

/// Reads a DCKP file, rebuilds the network it describes, and overwrites
/// every state tensor with the stored values. Tensor names, counts, and
/// lengths must match the rebuilt network exactly.
pub fn load_checkpoint(path: &Path) -> Result<Network> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor { path, bytes: &bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(Error::format(path, "not a DCKP checkpoint"));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(Error::format(path, format!("unsupported checkpoint version {version}")));
    }
    let config_len = cur.u32()? as usize;
    let config: NetworkConfig = serde_json::from_slice(cur.take(config_len)?)
        .map_err(|e| Error::format(path, format!("bad embedded config: {e}")))?;
    let mut net = build_network(&config, 0)?;
    let count = cur.u32()? as usize;
    let mut tensors: Vec<(String, Vec<f32>)> = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = cur.u32()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| Error::format(path, "tensor name is not UTF-8"))?
            .to_string();
        let ndim = cur.u32()? as usize;
        for _ in 0..ndim {
            cur.u32()?; // shape is advisory; lengths are checked below
        }
        let len = cur.u32()? as usize;
        let payload = cur.take(4 * len)?;
        let mut data = vec![0.0f32; len];
        LittleEndian::read_f32_into(payload, &mut data);
        tensors.push((name, data));
    }
    if cur.pos != bytes.len() {
        return Err(Error::format(path, "trailing bytes after last tensor"));
    }
    let mut idx = 0usize;
    let mut mismatch: Option<String> = None;
    net.visit_state_mut(|name, slot| {
        if mismatch.is_some() {
            return;
        }
        match tensors.get(idx) {
            Some((stored_name, data)) if stored_name == name && data.len() == slot.len() => {
                slot.copy_from_slice(data);
            }
            Some((stored_name, data)) => {
                mismatch = Some(format!(
                    "tensor {idx}: stored {stored_name} ({} values), network expects {name} ({} values)",
                    data.len(),
                    slot.len()
                ));
            }
            None => mismatch = Some(format!("checkpoint ends before tensor {name}")),
        }
        idx += 1;
    });
    if let Some(m) = mismatch {
        return Err(Error::format(path, m));
    }
    if idx != tensors.len() {
        return Err(Error::format(
            path,
            format!("checkpoint stores {} tensors, network has {idx}", tensors.len()),
        ));
    }
    Ok(net)
}
