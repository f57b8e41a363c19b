//! Binary PGM (P5) and PPM (P6) readers and writers, maxval 255.
//!
//! Quantization is round-half-to-even on `v * 255`, so a write/read
//! round-trip reproduces the quantized tensor exactly.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::io::Write;
use std::path::Path;

/// Guard against absurd header dimensions before allocating.
const MAX_PIXELS: usize = 1 << 26;

fn quantize(v: f64) -> Result<u8> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Format(format!("pixel value {v} outside [0,1]")));
    }
    Ok((v * 255.0).round_ties_even() as u8)
}

/// Write a `[1,H,W]` tensor with values in [0,1] as binary PGM.
pub fn write_pgm(t: &Tensor, path: &Path) -> Result<()> {
    let shape = t.shape();
    if shape.len() != 3 || shape[0] != 1 {
        return Err(Error::ShapeMismatch {
            context: "write_pgm expects [1,H,W]",
            left: shape.to_vec(),
            right: vec![1],
        });
    }
    let (h, w) = (shape[1], shape[2]);
    let mut bytes = Vec::with_capacity(h * w + 32);
    bytes.extend_from_slice(format!("P5\n{w} {h}\n255\n").as_bytes());
    for &v in t.data() {
        bytes.push(quantize(v)?);
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&bytes)?;
    Ok(())
}

/// Write a `[3,H,W]` tensor with values in [0,1] as binary PPM
/// (interleaved RGB).
pub fn write_ppm(t: &Tensor, path: &Path) -> Result<()> {
    let shape = t.shape();
    if shape.len() != 3 || shape[0] != 3 {
        return Err(Error::ShapeMismatch {
            context: "write_ppm expects [3,H,W]",
            left: shape.to_vec(),
            right: vec![3],
        });
    }
    let (h, w) = (shape[1], shape[2]);
    let mut bytes = Vec::with_capacity(3 * h * w + 32);
    bytes.extend_from_slice(format!("P6\n{w} {h}\n255\n").as_bytes());
    let d = t.data();
    for i in 0..h * w {
        for c in 0..3 {
            bytes.push(quantize(d[c * h * w + i])?);
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&bytes)?;
    Ok(())
}

struct Header {
    width: usize,
    height: usize,
    payload_start: usize,
}

/// Parse "P5"/"P6", dimensions and maxval, tolerating `#` comments.
fn parse_header(bytes: &[u8], magic: &str) -> Result<Header> {
    if bytes.len() < 2 || &bytes[..2] != magic.as_bytes() {
        return Err(Error::Format(format!("missing {magic} magic")));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // skip whitespace and comments
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if pos == start {
            return Err(Error::Format("malformed header field".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse::<usize>()
            .map_err(|_| Error::Format("header dimension overflow".into()))?;
    }
    // exactly one whitespace byte separates maxval from the payload
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Format("missing separator before payload".into()));
    }
    pos += 1;
    let (width, height, maxval) = (fields[0], fields[1], fields[2]);
    if maxval != 255 {
        return Err(Error::Format(format!("unsupported maxval {maxval}, want 255")));
    }
    if width == 0 || height == 0 || width.saturating_mul(height) > MAX_PIXELS {
        return Err(Error::Format(format!("dimensions {width}x{height} out of range")));
    }
    Ok(Header {
        width,
        height,
        payload_start: pos,
    })
}

/// Read a binary PGM into a `[1,H,W]` tensor with values `q/255`.
pub fn read_pgm(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path)?;
    let hdr = parse_header(&bytes, "P5")?;
    let n = hdr.width * hdr.height;
    let payload = &bytes[hdr.payload_start..];
    if payload.len() < n {
        return Err(Error::Format(format!(
            "truncated payload: have {}, want {n}",
            payload.len()
        )));
    }
    let data = payload[..n].iter().map(|&b| b as f64 / 255.0).collect();
    Tensor::new(&[1, hdr.height, hdr.width], data)
}

/// Read a binary PPM into a `[3,H,W]` tensor with values `q/255`.
pub fn read_ppm(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path)?;
    let hdr = parse_header(&bytes, "P6")?;
    let n = hdr.width * hdr.height;
    let payload = &bytes[hdr.payload_start..];
    if payload.len() < 3 * n {
        return Err(Error::Format(format!(
            "truncated payload: have {}, want {}",
            payload.len(),
            3 * n
        )));
    }
    let mut data = vec![0.0; 3 * n];
    for i in 0..n {
        for c in 0..3 {
            data[c * n + i] = payload[3 * i + c] as f64 / 255.0;
        }
    }
    Tensor::new(&[3, hdr.height, hdr.width], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn tmp(name: &str) -> std::path::PathBuf {
        std::env::temp_dir().join(format!("focusnet_pnm_{}_{name}", std::process::id()))
    }

    #[test]
    fn zero_mask_roundtrips() {
        let path = tmp("zero.pgm");
        let t = Tensor::zeros(&[1, 4, 4]);
        write_pgm(&t, &path).unwrap();
        assert_eq!(read_pgm(&path).unwrap(), t);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn half_quantizes_to_128() {
        // 0.5 * 255 = 127.5, ties-to-even gives 128.
        assert_eq!(quantize(0.5).unwrap(), 128);
        assert_eq!(quantize(0.0).unwrap(), 0);
        assert_eq!(quantize(1.0).unwrap(), 255);
    }

    #[test]
    fn fixed_header_parses() {
        let path = tmp("fixed.pgm");
        let mut bytes = b"P5\n4 4\n255\n".to_vec();
        bytes.extend_from_slice(&[7u8; 16]);
        std::fs::write(&path, &bytes).unwrap();
        let t = read_pgm(&path).unwrap();
        assert_eq!(t.shape(), [1, 4, 4]);
        assert!((t.data()[0] - 7.0 / 255.0).abs() < 1e-15);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn roundtrip_is_exact_at_quantization() {
        let mut rng = Rng::new(55);
        let path = tmp("rt.ppm");
        let data: Vec<f64> = (0..3 * 25).map(|_| rng.next_f64()).collect();
        let t = Tensor::new(&[3, 5, 5], data).unwrap();
        write_ppm(&t, &path).unwrap();
        let back = read_ppm(&path).unwrap();
        let quantized = t.map(|v| (v * 255.0).round_ties_even() / 255.0);
        assert_eq!(back, quantized);
        // a second write/read cycle is the identity
        write_ppm(&back, &path).unwrap();
        assert_eq!(read_ppm(&path).unwrap(), back);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        let path = tmp("bad.pgm");
        std::fs::write(&path, b"P4\n2 2\n255\n....").unwrap();
        assert!(read_pgm(&path).is_err());
        std::fs::write(&path, b"P5\n2 2\n65535\n....").unwrap();
        assert!(read_pgm(&path).is_err());
        std::fs::write(&path, b"P5\n2 2\n255\n\x01").unwrap();
        match read_pgm(&path) {
            Err(Error::Format(msg)) => assert!(msg.contains("truncated"), "{msg}"),
            other => panic!("expected truncation, got {other:?}"),
        }
        std::fs::write(&path, b"P5\n999999 999999\n255\n").unwrap();
        assert!(read_pgm(&path).is_err());
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn out_of_range_pixels_refused_on_write() {
        let path = tmp("range.pgm");
        let t = Tensor::filled(&[1, 2, 2], 1.5);
        assert!(write_pgm(&t, &path).is_err());
    }
}
