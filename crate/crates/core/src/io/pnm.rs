//! Binary 8-bit PGM (P5) and PPM (P6). Samples map to `[0, 1]`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Image;

pub fn decode_pnm(bytes: &[u8], path: &str) -> Result<Image> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse(path, 1, "truncated header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let channels = match fields[0].as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(Error::UnsupportedVariant(format!("image format {other:?}"))),
    };
    let num = |i: usize, what: &str| {
        fields[i]
            .parse::<usize>()
            .ok()
            .filter(|v| *v > 0)
            .ok_or_else(|| Error::parse(path, 1, format!("bad {what} {:?}", fields[i])))
    };
    let (width, height, maxval) = (num(1, "width")?, num(2, "height")?, num(3, "maxval")?);
    if maxval != 255 {
        return Err(Error::UnsupportedVariant(format!(
            "maxval {maxval}, only 8-bit images are read"
        )));
    }
    let need = width * height * channels;
    let raster = bytes.get(pos..).unwrap_or(&[]);
    if raster.len() < need {
        return Err(Error::parse(
            path,
            1,
            format!("truncated raster: {} of {need} bytes", raster.len()),
        ));
    }
    Image::from_vec(
        width,
        height,
        channels,
        raster[..need].iter().map(|b| *b as f64 / 255.0).collect(),
    )
}

/// Quantizes to 8 bits with rounding; values are clamped to `[0, 1]`.
pub fn encode_pnm(image: &Image) -> Result<Vec<u8>> {
    let magic = match image.channels {
        1 => "P5",
        3 => "P6",
        c => return Err(Error::UnsupportedVariant(format!("{c}-channel image"))),
    };
    let mut out = format!("{magic}\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend(image.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    Ok(out)
}

pub fn read_pnm(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes, &path.display().to_string())
}

pub fn write_pnm(path: &Path, image: &Image) -> Result<()> {
    fs::write(path, encode_pnm(image)?).map_err(|e| Error::io(path, e))
}
