//! `MOLIMG v1` files: a 16-byte header followed by a row-major payload.
//!
//! Header layout: bytes 0..10 hold `"MOLIMG v1\n"`, then little-endian `u16`
//! height, `u16` width and `u16` payload kind (0 = complex `f64` re/im pairs,
//! 1 = 8-bit 0/1 mask entries).

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use super::image::ComplexImage;
use super::mask::MaskSpec;
use crate::error::{MolError, Result};

pub const IMAGE_MAGIC: &[u8; 10] = b"MOLIMG v1\n";
pub const HEADER_LEN: usize = 16;
const KIND_COMPLEX: u16 = 0;
const KIND_MASK: u16 = 1;

fn format_err<T>(reason: impl Into<String>) -> Result<T> {
    Err(MolError::Format {
        what: "MOLIMG file",
        reason: reason.into(),
    })
}

fn header(height: usize, width: usize, kind: u16) -> Result<[u8; HEADER_LEN]> {
    if height > u16::MAX as usize || width > u16::MAX as usize {
        return format_err(format!("dimensions {height}x{width} exceed 65535"));
    }
    let mut h = [0u8; HEADER_LEN];
    h[..10].copy_from_slice(IMAGE_MAGIC);
    h[10..12].copy_from_slice(&(height as u16).to_le_bytes());
    h[12..14].copy_from_slice(&(width as u16).to_le_bytes());
    h[14..16].copy_from_slice(&kind.to_le_bytes());
    Ok(h)
}

fn parse_header(bytes: &[u8]) -> Result<(usize, usize, u16)> {
    if bytes.len() < HEADER_LEN {
        return format_err("truncated header");
    }
    if &bytes[..10] != IMAGE_MAGIC {
        return format_err("bad magic");
    }
    let h = u16::from_le_bytes([bytes[10], bytes[11]]) as usize;
    let w = u16::from_le_bytes([bytes[12], bytes[13]]) as usize;
    let kind = u16::from_le_bytes([bytes[14], bytes[15]]);
    if h == 0 || w == 0 {
        return format_err("zero dimension");
    }
    Ok((h, w, kind))
}

pub fn encode_image(img: &ComplexImage) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * img.len());
    out.extend_from_slice(&header(img.height(), img.width(), KIND_COMPLEX)?);
    for z in img.data() {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_image(bytes: &[u8]) -> Result<ComplexImage> {
    let (h, w, kind) = parse_header(bytes)?;
    if kind != KIND_COMPLEX {
        return format_err(format!("expected complex payload, found kind {kind}"));
    }
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != 16 * h * w {
        return format_err(format!("payload is {} bytes, expected {}", payload.len(), 16 * h * w));
    }
    let data = payload
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect();
    ComplexImage::from_vec(h, w, data)
}

pub fn encode_mask(mask: &MaskSpec) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(HEADER_LEN + mask.pattern.len());
    out.extend_from_slice(&header(mask.height, mask.width, KIND_MASK)?);
    out.extend(mask.pattern.iter().map(|&b| b as u8));
    Ok(out)
}

pub fn decode_mask(bytes: &[u8]) -> Result<MaskSpec> {
    let (h, w, kind) = parse_header(bytes)?;
    if kind != KIND_MASK {
        return format_err(format!("expected mask payload, found kind {kind}"));
    }
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != h * w {
        return format_err("mask payload length mismatch");
    }
    let mut pattern = Vec::with_capacity(h * w);
    for &b in payload {
        match b {
            0 => pattern.push(false),
            1 => pattern.push(true),
            other => return format_err(format!("mask entry {other} is not 0/1")),
        }
    }
    MaskSpec::from_pattern(h, w, pattern)
}

pub fn write_image(path: impl AsRef<Path>, img: &ComplexImage) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_image(img)?)?;
    Ok(())
}

pub fn read_image(path: impl AsRef<Path>) -> Result<ComplexImage> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_image(&bytes)
}

pub fn write_mask(path: impl AsRef<Path>, mask: &MaskSpec) -> Result<()> {
    fs::write(path, encode_mask(mask)?)?;
    Ok(())
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<MaskSpec> {
    decode_mask(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::make_mask;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn image_round_trip_is_bit_exact(h in 1usize..6, w in 1usize..6, vals in proptest::collection::vec(any::<f64>(), 72)) {
            let data = (0..h * w).map(|i| Complex64::new(vals[2 * i], vals[2 * i + 1])).collect();
            let img = ComplexImage::from_vec(h, w, data).unwrap();
            let bytes = encode_image(&img).unwrap();
            prop_assert_eq!(bytes.len(), HEADER_LEN + 16 * h * w);
            let back = decode_image(&bytes).unwrap();
            for (a, b) in img.data().iter().zip(back.data()) {
                prop_assert_eq!(a.re.to_bits(), b.re.to_bits());
                prop_assert_eq!(a.im.to_bits(), b.im.to_bits());
            }
        }
    }

    #[test]
    fn mask_round_trip() {
        let m = make_mask((16, 12), 3.0, 2.0, 4).unwrap();
        let back = decode_mask(&encode_mask(&m).unwrap()).unwrap();
        assert_eq!(back.pattern, m.pattern);
    }

    #[test]
    fn header_is_sixteen_bytes_and_kind_checked() {
        let img = ComplexImage::zeros(2, 3);
        let bytes = encode_image(&img).unwrap();
        assert_eq!(&bytes[..10], IMAGE_MAGIC);
        assert!(decode_mask(&bytes).is_err());
        assert!(decode_image(&bytes[..20]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_image(&bad).is_err());
    }
}
