//! Single-channel PFM (`Pf`). Rows are stored bottom-up; a negative scale
//! marks little-endian data. Files are always written little-endian.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{DepthMap, Map2};

#[derive(Debug, Clone, PartialEq)]
pub struct PfmImage {
    pub width: usize,
    pub height: usize,
    /// Row-major, top row first.
    pub data: Vec<f32>,
}

/// Reads one whitespace-delimited header token, consuming exactly one
/// trailing whitespace byte after it.
fn token<'a>(bytes: &'a [u8], pos: &mut usize, path: &str) -> Result<&'a str> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::parse(path, line_of(bytes, start), "truncated header"));
    }
    let tok = std::str::from_utf8(&bytes[start..*pos])
        .map_err(|_| Error::parse(path, line_of(bytes, start), "header is not ASCII"))?;
    *pos += 1;
    Ok(tok)
}

fn line_of(bytes: &[u8], pos: usize) -> usize {
    1 + bytes[..pos.min(bytes.len())].iter().filter(|b| **b == b'\n').count()
}

pub fn decode_pfm(bytes: &[u8], path: &str) -> Result<PfmImage> {
    let mut pos = 0;
    match token(bytes, &mut pos, path)? {
        "Pf" => {}
        "PF" => return Err(Error::UnsupportedVariant("three-channel PFM (PF)".into())),
        other => return Err(Error::parse(path, 1, format!("bad magic {other:?}"))),
    }
    let mut dim = |what: &str| -> Result<usize> {
        let at = pos;
        let t = token(bytes, &mut pos, path)?;
        t.parse::<usize>()
            .ok()
            .filter(|v| *v > 0)
            .ok_or_else(|| Error::parse(path, line_of(bytes, at), format!("bad {what} {t:?}")))
    };
    let width = dim("width")?;
    let height = dim("height")?;
    let at = pos;
    let scale_tok = token(bytes, &mut pos, path)?;
    let scale: f64 = scale_tok
        .parse()
        .ok()
        .filter(|s: &f64| *s != 0.0 && s.is_finite())
        .ok_or_else(|| Error::parse(path, line_of(bytes, at), format!("bad scale {scale_tok:?}")))?;
    let little = scale < 0.0;
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::parse(path, 2, "dimensions overflow"))?;
    let payload = bytes.get(pos..).unwrap_or(&[]);
    if payload.len() < need {
        return Err(Error::parse(
            path,
            line_of(bytes, bytes.len()),
            format!("truncated payload: {} of {need} bytes", payload.len()),
        ));
    }
    let mut data = vec![0f32; width * height];
    for (i, chunk) in payload[..need].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (x, file_row) = (i % width, i / width);
        data[(height - 1 - file_row) * width + x] = v;
    }
    Ok(PfmImage { width, height, data })
}

pub fn encode_pfm(img: &PfmImage) -> Vec<u8> {
    let mut out = format!("Pf\n{} {}\n-1\n", img.width, img.height).into_bytes();
    out.reserve(img.data.len() * 4);
    for row in (0..img.height).rev() {
        for v in &img.data[row * img.width..(row + 1) * img.width] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn read_pfm_image(path: &Path) -> Result<PfmImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(&bytes, &path.display().to_string())
}

pub fn write_pfm_image(path: &Path, img: &PfmImage) -> Result<()> {
    fs::write(path, encode_pfm(img)).map_err(|e| Error::io(path, e))
}

/// Zero, negative and non-finite samples are read as invalid.
pub fn depth_from_pfm(img: &PfmImage) -> DepthMap {
    let valid: Vec<bool> = img.data.iter().map(|v| v.is_finite() && *v > 0.0).collect();
    let data = img
        .data
        .iter()
        .zip(&valid)
        .map(|(v, ok)| if *ok { *v as f64 } else { 0.0 })
        .collect();
    DepthMap {
        width: img.width,
        height: img.height,
        data,
        valid,
    }
}

/// Depths are narrowed to f32; invalid pixels are written as 0.
pub fn depth_to_pfm(depth: &DepthMap) -> PfmImage {
    PfmImage {
        width: depth.width,
        height: depth.height,
        data: depth
            .data
            .iter()
            .zip(&depth.valid)
            .map(|(d, ok)| if *ok { *d as f32 } else { 0.0 })
            .collect(),
    }
}

pub fn read_pfm(path: &Path) -> Result<DepthMap> {
    Ok(depth_from_pfm(&read_pfm_image(path)?))
}

pub fn write_pfm(path: &Path, depth: &DepthMap) -> Result<()> {
    write_pfm_image(path, &depth_to_pfm(depth))
}

pub fn write_map_pfm(path: &Path, map: &Map2) -> Result<()> {
    write_pfm_image(
        path,
        &PfmImage {
            width: map.width,
            height: map.height,
            data: map.data.iter().map(|v| *v as f32).collect(),
        },
    )
}

pub fn read_map_pfm(path: &Path) -> Result<Map2> {
    let img = read_pfm_image(path)?;
    Map2::from_vec(img.width, img.height, img.data.iter().map(|v| *v as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_by_two_round_trip() {
        let d = DepthMap::from_values(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let bytes = encode_pfm(&depth_to_pfm(&d));
        assert_eq!(&bytes[..10], b"Pf\n2 2\n-1\n");
        // bottom row first
        assert_eq!(&bytes[10..14], &3f32.to_le_bytes());
        let back = depth_from_pfm(&decode_pfm(&bytes, "x").unwrap());
        assert_eq!(back, d);
    }

    #[test]
    fn big_endian_is_swapped() {
        let mut bytes = b"Pf\n2 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&1.5f32.to_be_bytes());
        bytes.extend_from_slice(&(-2.25f32).to_be_bytes());
        let img = decode_pfm(&bytes, "x").unwrap();
        assert_eq!(img.data, vec![1.5, -2.25]);
        let d = depth_from_pfm(&img);
        assert_eq!(d.valid, vec![true, false]);
    }

    #[test]
    fn invalid_is_zero() {
        let d = DepthMap::new(2, 1, vec![5.0, 9.0], vec![true, false]).unwrap();
        let img = depth_to_pfm(&d);
        assert_eq!(img.data, vec![5.0, 0.0]);
        assert_eq!(depth_from_pfm(&img).data, vec![5.0, 0.0]);
    }

    #[test]
    fn errors() {
        let d = DepthMap::from_values(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let bytes = encode_pfm(&depth_to_pfm(&d));
        assert!(matches!(
            decode_pfm(&bytes[..bytes.len() - 1], "x"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            decode_pfm(b"PF\n1 1\n-1\n", "x"),
            Err(Error::UnsupportedVariant(_))
        ));
        assert!(matches!(decode_pfm(b"P5\n1 1\n-1\n", "x"), Err(Error::Parse { .. })));
        assert!(matches!(decode_pfm(b"Pf\n0 1\n-1\n", "x"), Err(Error::Parse { .. })));
        assert!(matches!(decode_pfm(b"Pf\n1 1\n", "x"), Err(Error::Parse { .. })));
    }

    proptest! {
        #[test]
        fn byte_exact_round_trip(w in 1usize..9, h in 1usize..9, seed in proptest::collection::vec(any::<u32>(), 64)) {
            let data: Vec<f32> = (0..w * h).map(|i| f32::from_bits(seed[i % 64].rotate_left(i as u32))).collect();
            let img = PfmImage { width: w, height: h, data };
            let bytes = encode_pfm(&img);
            let back = decode_pfm(&bytes, "x").unwrap();
            prop_assert_eq!(encode_pfm(&back), bytes);
        }
    }
}
