//! `LSSCNET` parameter checkpoints.
//!
//! ```text
//! offset  size  field
//! 0       7     magic "LSSCNET"
//! 7       1     version (1)
//! 8       4     network count N (u32 LE)
//! then per network:
//!         4     layer count (u32 LE)
//!         9*n   per layer: input_dim u32, output_dim u32, activation u8 (0 none, 1 relu)
//!         ...   per layer: weights (output x input, row-major), then bias; binary32 LE
//! end-4   4     CRC-32 (IEEE) of every preceding byte, u32 LE
//! ```

use std::path::Path;

use super::network::{Activation, DenseLayer, DenseNetwork};
use super::NetError;

const MAGIC: &[u8; 7] = b"LSSCNET";
pub const CHECKPOINT_VERSION: u8 = 1;
const VERSION: u8 = CHECKPOINT_VERSION;

pub fn encode_checkpoint(nets: &[&DenseNetwork]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(nets.len() as u32).to_le_bytes());
    for net in nets {
        out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
        for l in net.layers() {
            out.extend_from_slice(&(l.input_dim as u32).to_le_bytes());
            out.extend_from_slice(&(l.output_dim as u32).to_le_bytes());
            out.push(match l.activation {
                Activation::None => 0,
                Activation::Relu => 1,
            });
        }
        for v in net.params() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NetError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| NetError::Checkpoint("truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize, NetError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Vec<DenseNetwork>, NetError> {
    let bad = |m: &str| NetError::Checkpoint(m.into());
    if bytes.len() < MAGIC.len() + 1 + 4 + 4 {
        return Err(bad("truncated"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    if &body[..7] != MAGIC {
        return Err(bad("bad magic"));
    }
    if body[7] != VERSION {
        return Err(NetError::Checkpoint(format!("unsupported version {}", body[7])));
    }
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(bad("checksum mismatch"));
    }
    let mut cur = Cursor { bytes: body, pos: 8 };
    let count = cur.u32()?;
    let mut nets = Vec::with_capacity(count.min(16));
    for _ in 0..count {
        let layer_count = cur.u32()?;
        let mut shapes = Vec::with_capacity(layer_count.min(64));
        for _ in 0..layer_count {
            let input_dim = cur.u32()?;
            let output_dim = cur.u32()?;
            let activation = match cur.take(1)?[0] {
                0 => Activation::None,
                1 => Activation::Relu,
                other => return Err(NetError::Checkpoint(format!("unknown activation {other}"))),
            };
            shapes.push((input_dim, output_dim, activation));
        }
        let mut layers = Vec::with_capacity(shapes.len());
        for (input_dim, output_dim, activation) in shapes {
            let mut read = |n: usize| -> Result<Vec<f64>, NetError> {
                let raw = cur.take(n.checked_mul(4).ok_or_else(|| bad("layer too large"))?)?;
                Ok(raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                    .collect())
            };
            let weights = read(input_dim.checked_mul(output_dim).ok_or_else(|| bad("layer too large"))?)?;
            let bias = read(output_dim)?;
            layers.push(DenseLayer {
                input_dim,
                output_dim,
                weights,
                bias,
                activation,
            });
        }
        nets.push(DenseNetwork::from_layers(layers)?);
    }
    if cur.pos != body.len() {
        return Err(bad("trailing bytes"));
    }
    Ok(nets)
}

pub fn save_checkpoint(path: impl AsRef<Path>, nets: &[&DenseNetwork]) -> Result<(), NetError> {
    std::fs::write(path, encode_checkpoint(nets))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Vec<DenseNetwork>, NetError> {
    decode_checkpoint(&std::fs::read(path)?)
}
