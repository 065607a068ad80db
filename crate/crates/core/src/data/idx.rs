//! IDX container format (big-endian dimensions after a 4-byte magic).

use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

const MAX_ELEMENTS: usize = 1 << 31;

#[derive(Debug, Clone, PartialEq)]
pub enum IdxData {
    /// Pixels rescaled from `0..=255` to `[-1, 1]`, row-major per image.
    Images {
        count: usize,
        rows: usize,
        cols: usize,
        pixels: Vec<f32>,
    },
    Labels(Vec<u8>),
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| {
            Error::Format(format!(
                "header truncated: need {} bytes, stream has {}",
                at + 4,
                bytes.len()
            ))
        })
}

pub fn byte_to_pixel(b: u8) -> f32 {
    b as f32 / 255.0 * 2.0 - 1.0
}

pub fn pixel_to_byte(p: f32) -> u8 {
    ((p.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxData> {
    let magic = be_u32(bytes, 0)?;
    let ndim = match magic {
        IMAGE_MAGIC => 3,
        LABEL_MAGIC => 1,
        other => {
            return Err(Error::Format(format!(
                "unexpected IDX magic 0x{other:08x} (expected 0x{IMAGE_MAGIC:08x} or 0x{LABEL_MAGIC:08x})"
            )))
        }
    };
    let mut dims = Vec::with_capacity(ndim);
    for i in 0..ndim {
        let d = be_u32(bytes, 4 + 4 * i)? as usize;
        if d == 0 {
            return Err(Error::Format(format!("dimension {i} is zero")));
        }
        dims.push(d);
    }
    let header = 4 + 4 * ndim;
    let payload = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|&n| n <= MAX_ELEMENTS)
        .ok_or_else(|| Error::Format(format!("dimensions {dims:?} are implausibly large")))?;
    let found = bytes.len() - header;
    if found != payload {
        return Err(Error::Length {
            expected: payload,
            found,
        });
    }
    let body = &bytes[header..];
    Ok(match magic {
        IMAGE_MAGIC => IdxData::Images {
            count: dims[0],
            rows: dims[1],
            cols: dims[2],
            pixels: body.iter().map(|&b| byte_to_pixel(b)).collect(),
        },
        _ => IdxData::Labels(body.to_vec()),
    })
}

pub fn to_idx_bytes(data: &IdxData) -> Vec<u8> {
    let mut out = Vec::new();
    match data {
        IdxData::Images {
            count,
            rows,
            cols,
            pixels,
        } => {
            out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
            for d in [count, rows, cols] {
                out.extend_from_slice(&(*d as u32).to_be_bytes());
            }
            out.extend(pixels.iter().map(|&p| pixel_to_byte(p)));
        }
        IdxData::Labels(labels) => {
            out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
            out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
            out.extend_from_slice(labels);
        }
    }
    out
}

/// Reads a file, transparently inflating gzip streams.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_image_rescales_to_minus_one() {
        let mut bytes = vec![0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 28, 0, 0, 0, 28];
        bytes.extend(std::iter::repeat_n(0u8, 784));
        match parse_idx(&bytes).unwrap() {
            IdxData::Images {
                count,
                rows,
                cols,
                pixels,
            } => {
                assert_eq!((count, rows, cols), (1, 28, 28));
                assert!(pixels.iter().all(|&p| p == -1.0));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn labels_parse() {
        let bytes = [0, 0, 8, 1, 0, 0, 0, 3, 7, 0, 9];
        assert_eq!(parse_idx(&bytes).unwrap(), IdxData::Labels(vec![7, 0, 9]));
    }

    #[test]
    fn wrong_magic_is_a_format_error() {
        let bytes = [0, 0, 8, 5, 0, 0, 0, 1, 0];
        let err = parse_idx(&bytes).unwrap_err();
        assert!(
            matches!(err, Error::Format(ref m) if m.contains("0x00000805")),
            "{err}"
        );
    }

    #[test]
    fn truncated_payload_is_a_length_error() {
        let bytes = [0, 0, 8, 1, 0, 0, 0, 3, 7, 0];
        assert!(matches!(
            parse_idx(&bytes),
            Err(Error::Length {
                expected: 3,
                found: 2
            })
        ));
    }

    #[test]
    fn pixel_byte_round_trip_is_exact() {
        for b in 0..=255u8 {
            assert_eq!(pixel_to_byte(byte_to_pixel(b)), b);
        }
    }

    #[test]
    fn gzip_is_detected() {
        use flate2::{write::GzEncoder, Compression};
        use std::io::Write;
        let payload = [0u8, 0, 8, 1, 0, 0, 0, 2, 4, 2];
        let mut enc = GzEncoder::new(Vec::new(), Compression::fast());
        enc.write_all(&payload).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.gz");
        std::fs::write(&path, enc.finish().unwrap()).unwrap();
        assert_eq!(read_maybe_gz(&path).unwrap(), payload);
    }
}
