//! Portable float map: `PF` (RGB) or `Pf` (gray) header, width/height, a
//! scale whose sign gives the byte order, then f32 rows bottom-up.

use crate::error::{Error, Result};
use crate::image::Image;

fn parse_err(msg: impl Into<String>) -> Error {
    Error::Parse(format!("pfm: {}", msg.into()))
}

/// Writes a little-endian PFM. Values are narrowed to f32.
pub fn encode_pfm(img: &Image) -> Result<Vec<u8>> {
    let tag = match img.channels {
        3 => "PF",
        1 => "Pf",
        c => return Err(Error::invalid(format!("pfm supports 1 or 3 channels, got {c}"))),
    };
    let header = format!("{tag}\n{} {}\n-1.0\n", img.width, img.height);
    let row_len = img.width * img.channels;
    let mut out = Vec::with_capacity(header.len() + 4 * img.data.len());
    out.extend_from_slice(header.as_bytes());
    for row in (0..img.height).rev() {
        for v in &img.data[row * row_len..(row + 1) * row_len] {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Reads one whitespace-delimited header token starting at `*pos`.
fn token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(parse_err("truncated header"));
    }
    std::str::from_utf8(&bytes[start..*pos]).map_err(|_| parse_err("header is not ASCII"))
}

pub fn decode_pfm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0;
    let channels = match token(bytes, &mut pos)? {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(parse_err(format!("unknown magic {other:?}"))),
    };
    let width: usize = token(bytes, &mut pos)?.parse().map_err(|_| parse_err("bad width"))?;
    let height: usize = token(bytes, &mut pos)?.parse().map_err(|_| parse_err("bad height"))?;
    let scale: f64 = token(bytes, &mut pos)?.parse().map_err(|_| parse_err("bad scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(parse_err("scale must be a nonzero number"));
    }
    // exactly one whitespace byte separates the header from the payload
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(parse_err("missing payload"));
    }
    pos += 1;
    let count = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| parse_err("dimensions overflow"))?;
    let payload = &bytes[pos..];
    if count.checked_mul(4) != Some(payload.len()) {
        return Err(parse_err(format!("expected {} payload bytes, found {}", count.saturating_mul(4), payload.len())));
    }
    if width == 0 || height == 0 {
        return Err(parse_err("empty image"));
    }
    let little = scale < 0.0;
    let row_len = width * channels;
    let mut data = vec![0.0; count];
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (file_row, k) = (i / row_len, i % row_len);
        data[(height - 1 - file_row) * row_len + k] = v as f64;
    }
    Image::from_data(width, height, channels, data)
}

pub fn write_pfm(path: &std::path::Path, img: &Image) -> Result<()> {
    std::fs::write(path, encode_pfm(img)?).map_err(|e| Error::io(path, e))
}

pub fn read_pfm(path: &std::path::Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(&bytes)
}
