//! Binary little-endian PLY with `x y z` floats and `red green blue` bytes.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fusion::{CloudPoint, PointCloud};

const VERTEX_BYTES: usize = 15;

pub fn encode_ply(cloud: &PointCloud) -> Result<Vec<u8>> {
    cloud.validate()?;
    let header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        cloud.len()
    );
    let mut out = header.into_bytes();
    out.reserve(cloud.len() * VERTEX_BYTES);
    for p in &cloud.points {
        for v in p.position {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out.extend_from_slice(&p.color);
    }
    Ok(out)
}

/// Reads files in the layout written by [`encode_ply`]. View ids are not
/// stored and come back as 0.
pub fn decode_ply(bytes: &[u8], path: &str) -> Result<PointCloud> {
    let marker = b"end_header\n";
    let end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| Error::parse(path, 1, "missing end_header"))?;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::parse(path, 1, "header is not ASCII"))?;
    let expected = [
        "ply",
        "format binary_little_endian 1.0",
        "element vertex",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
    ];
    let lines: Vec<&str> = header
        .lines()
        .map(str::trim)
        .filter(|l| !l.starts_with("comment"))
        .collect();
    if lines.len() != expected.len() {
        return Err(Error::parse(
            path,
            lines.len().min(expected.len()) + 1,
            "unsupported PLY layout",
        ));
    }
    let mut count = 0;
    for (i, (got, want)) in lines.iter().zip(expected).enumerate() {
        if i == 2 {
            count = got
                .strip_prefix("element vertex ")
                .and_then(|n| n.trim().parse::<usize>().ok())
                .ok_or_else(|| Error::parse(path, i + 1, format!("bad vertex element {got:?}")))?;
        } else if *got != want {
            return Err(Error::parse(path, i + 1, format!("expected {want:?}, found {got:?}")));
        }
    }
    let body = &bytes[end + marker.len()..];
    if body.len() != count * VERTEX_BYTES {
        return Err(Error::parse(
            path,
            expected.len() + 1,
            format!("payload is {} bytes, expected {}", body.len(), count * VERTEX_BYTES),
        ));
    }
    let points = body
        .chunks_exact(VERTEX_BYTES)
        .map(|c| {
            let f = |k: usize| f32::from_le_bytes([c[4 * k], c[4 * k + 1], c[4 * k + 2], c[4 * k + 3]]) as f64;
            CloudPoint {
                position: [f(0), f(1), f(2)],
                color: [c[12], c[13], c[14]],
                view: 0,
            }
        })
        .collect();
    Ok(PointCloud { points })
}

pub fn write_ply(path: &Path, cloud: &PointCloud) -> Result<()> {
    fs::write(path, encode_ply(cloud)?).map_err(|e| Error::io(path, e))
}

pub fn read_ply(path: &Path) -> Result<PointCloud> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ply(&bytes, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn header_len(bytes: &[u8]) -> usize {
        bytes.windows(11).position(|w| w == b"end_header\n").unwrap() + 11
    }

    #[test]
    fn empty_cloud() {
        let bytes = encode_ply(&PointCloud::default()).unwrap();
        assert_eq!(header_len(&bytes), bytes.len());
        assert!(std::str::from_utf8(&bytes).unwrap().contains("element vertex 0\n"));
        assert!(decode_ply(&bytes, "x").unwrap().is_empty());
    }

    #[test]
    fn single_white_point() {
        let cloud = PointCloud {
            points: vec![CloudPoint {
                position: [1.0, 2.0, 3.0],
                color: [255; 3],
                view: 0,
            }],
        };
        let bytes = encode_ply(&cloud).unwrap();
        let payload = &bytes[header_len(&bytes)..];
        assert_eq!(payload.len(), 15);
        assert_eq!(&payload[..4], &1f32.to_le_bytes());
        assert_eq!(&payload[12..], &[255, 255, 255]);
        assert_eq!(decode_ply(&bytes, "x").unwrap(), cloud);
    }

    #[test]
    fn non_finite_rejected() {
        let cloud = PointCloud {
            points: vec![CloudPoint {
                position: [f64::NAN, 0.0, 0.0],
                color: [0; 3],
                view: 0,
            }],
        };
        assert!(matches!(encode_ply(&cloud), Err(Error::InvalidPoint(_))));
    }

    #[test]
    fn truncated_payload() {
        let cloud = PointCloud {
            points: vec![CloudPoint {
                position: [1.0, 2.0, 3.0],
                color: [1, 2, 3],
                view: 0,
            }],
        };
        let bytes = encode_ply(&cloud).unwrap();
        assert!(matches!(
            decode_ply(&bytes[..bytes.len() - 1], "x"),
            Err(Error::Parse { .. })
        ));
    }

    proptest! {
        #[test]
        fn byte_exact_round_trip(pts in proptest::collection::vec(
            (-1e4f32..1e4, -1e4f32..1e4, -1e4f32..1e4, any::<[u8; 3]>()), 0..40)
        ) {
            let cloud = PointCloud { points: pts.into_iter().map(|(x, y, z, color)| CloudPoint {
                position: [x as f64, y as f64, z as f64], color, view: 0 }).collect() };
            let bytes = encode_ply(&cloud).unwrap();
            let back = decode_ply(&bytes, "x").unwrap();
            prop_assert_eq!(&back, &cloud);
            prop_assert_eq!(encode_ply(&back).unwrap(), bytes);
        }
    }
}
