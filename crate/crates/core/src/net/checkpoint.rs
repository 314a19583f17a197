//! `MOLNET v1` checkpoints.
//!
//! Layout (all integers little-endian `u32`, all reals little-endian `f64`):
//! `"MOLNET v1\n"`, layer count, activation tag (0 ReLU, 1 leaky, 2 identity),
//! leaky slope, spectral height and width, then a shape table of
//! `(out, in, k)` per layer, then per layer the kernel, bias and persisted
//! power-iteration vector.

use std::path::Path;

use super::weights::{Activation, ConvLayer, NetworkWeights};
use crate::error::{MolError, Result};

pub const NET_MAGIC: &[u8; 10] = b"MOLNET v1\n";

fn bad<T>(reason: impl Into<String>) -> Result<T> {
    Err(MolError::Format {
        what: "MOLNET checkpoint",
        reason: reason.into(),
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return bad("truncated");
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| MolError::Format {
            what: "MOLNET checkpoint",
            reason: "size overflow".into(),
        })?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn encode_checkpoint(w: &NetworkWeights) -> Vec<u8> {
    let mut out = Vec::new();
    let put_u32 = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
    out.extend_from_slice(NET_MAGIC);
    put_u32(&mut out, w.num_layers());
    let (tag, slope) = match w.activation() {
        Activation::Relu => (0, 0.0),
        Activation::LeakyRelu(s) => (1, s),
        Activation::Identity => (2, 0.0),
    };
    put_u32(&mut out, tag);
    out.extend_from_slice(&slope.to_le_bytes());
    let (h, wd) = w.spectral_shape();
    put_u32(&mut out, h);
    put_u32(&mut out, wd);
    for l in w.layers() {
        put_u32(&mut out, l.out_ch);
        put_u32(&mut out, l.in_ch);
        put_u32(&mut out, l.k);
    }
    for (l, state) in w.layers().iter().zip(w.spectral_state()) {
        for v in l.kernel.iter().chain(&l.bias).chain(state) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<NetworkWeights> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(10)? != NET_MAGIC {
        return bad("bad magic");
    }
    let n_layers = r.u32()?;
    if n_layers == 0 || n_layers > 1024 {
        return bad(format!("implausible layer count {n_layers}"));
    }
    let tag = r.u32()?;
    let slope = r.f64()?;
    let activation = match tag {
        0 => Activation::Relu,
        1 => Activation::LeakyRelu(slope),
        2 => Activation::Identity,
        t => return bad(format!("unknown activation tag {t}")),
    };
    let h = r.u32()?;
    let w = r.u32()?;
    let mut shapes = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        shapes.push((r.u32()?, r.u32()?, r.u32()?));
    }
    let mut layers = Vec::with_capacity(n_layers);
    let mut states = Vec::with_capacity(n_layers);
    for (o, i, k) in shapes {
        let kernel = r.f64s(o * i * k * k)?;
        let bias = r.f64s(o)?;
        states.push(r.f64s(i * h * w)?);
        layers.push(ConvLayer::new(o, i, k, kernel, bias)?);
    }
    if r.pos != bytes.len() {
        return bad("trailing bytes");
    }
    NetworkWeights::from_parts(layers, activation, (h, w), states)
}

pub fn save_checkpoint(path: impl AsRef<Path>, w: &NetworkWeights) -> Result<()> {
    std::fs::write(path, encode_checkpoint(w))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<NetworkWeights> {
    decode_checkpoint(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetworkConfig;

    #[test]
    fn round_trip_is_bit_exact() {
        let cfg = NetworkConfig {
            num_layers: 3,
            channels: 4,
            kernel_size: 3,
            activation: Activation::LeakyRelu(0.1),
            image_shape: (5, 7),
        };
        let w = NetworkWeights::init(&cfg, 42).unwrap();
        let bytes = encode_checkpoint(&w);
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(encode_checkpoint(&back), bytes);
        for (a, b) in w.flatten().iter().zip(back.flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn rejects_truncated_and_bad_magic() {
        let w = NetworkWeights::scaled_identity(0.5, (2, 2));
        let bytes = encode_checkpoint(&w);
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut b2 = bytes.clone();
        b2[3] = b'?';
        assert!(decode_checkpoint(&b2).is_err());
        let mut b3 = bytes;
        b3.push(0);
        assert!(decode_checkpoint(&b3).is_err());
    }
}
