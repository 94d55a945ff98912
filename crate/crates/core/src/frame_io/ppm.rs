//! Binary PPM (P6, maxval 255).

use super::{Frame, FrameIoError, Result};

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn skip_whitespace_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(FrameIoError::MalformedHeader(format!("missing {what}")));
        }
        // At most 10 digits fit in u32; anything longer is rejected by parse.
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| FrameIoError::MalformedHeader(format!("{what} out of range")))
    }
}

/// Decodes a P6 image. The returned frame has index 0.
pub fn read_ppm(bytes: &[u8]) -> Result<Frame> {
    if !bytes.starts_with(b"P6") {
        return Err(FrameIoError::MalformedHeader("missing P6 magic".into()));
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    if !cur
        .bytes
        .get(2)
        .is_some_and(|b| b.is_ascii_whitespace() || *b == b'#')
    {
        return Err(FrameIoError::MalformedHeader("missing P6 magic".into()));
    }
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(FrameIoError::MalformedHeader(format!(
            "dimensions must be positive, got {width}x{height}"
        )));
    }
    if maxval != 255 {
        return Err(FrameIoError::BadMaxval(maxval));
    }
    // Exactly one whitespace byte separates maxval from the raster.
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        Some(_) => return Err(FrameIoError::MalformedHeader("junk after maxval".into())),
        None => {
            return Err(FrameIoError::TruncatedPixelData {
                expected: width.saturating_mul(height).saturating_mul(3),
                found: 0,
            })
        }
    }
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| FrameIoError::MalformedHeader("dimensions overflow".into()))?;
    let raster = &bytes[cur.pos..];
    if raster.len() < expected {
        return Err(FrameIoError::TruncatedPixelData {
            expected,
            found: raster.len(),
        });
    }
    let pixels = raster[..expected]
        .iter()
        .map(|&b| b as f64 / 255.0)
        .collect();
    Ok(Frame {
        index: 0,
        width,
        height,
        pixels,
    })
}

/// Encodes a frame as a canonical P6 file (`P6\n<w> <h>\n255\n` + raster).
pub fn write_ppm(frame: &Frame) -> Vec<u8> {
    let header = format!("P6\n{} {}\n255\n", frame.width, frame.height);
    let mut out = Vec::with_capacity(header.len() + frame.pixels.len());
    out.extend_from_slice(header.as_bytes());
    out.extend(frame.pixels.iter().map(|&v| quantize(v)));
    out
}

#[inline]
pub(crate) fn quantize(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}
