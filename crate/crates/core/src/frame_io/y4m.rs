//! YUV4MPEG2 demuxing with BT.601 full-range conversion to RGB.

use std::io::{BufRead, Read};

use super::{Frame, FrameIoError, Result};

const MAGIC: &[u8] = b"YUV4MPEG2";
const FRAME_TAG: &[u8] = b"FRAME";
// Header lines longer than this are rejected rather than buffered.
const MAX_HEADER_LINE: usize = 4096;
const MAX_DIMENSION: usize = 1 << 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Colorspace {
    /// 4:2:0 in any of the accepted siting variants.
    C420,
    C444,
}

impl Colorspace {
    fn parse(tag: &str) -> Result<Self> {
        match tag {
            "420" | "420jpeg" | "420mpeg2" => Ok(Colorspace::C420),
            "444" => Ok(Colorspace::C444),
            other => Err(FrameIoError::UnsupportedColorspace(format!("C{other}"))),
        }
    }

    fn chroma_dims(self, width: usize, height: usize) -> (usize, usize) {
        match self {
            Colorspace::C420 => (width.div_ceil(2), height.div_ceil(2)),
            Colorspace::C444 => (width, height),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Y4mHeader {
    pub width: usize,
    pub height: usize,
    pub fps_num: u32,
    pub fps_den: u32,
    pub colorspace: Colorspace,
}

impl Y4mHeader {
    pub fn frame_payload_len(&self) -> usize {
        let (cw, ch) = self.colorspace.chroma_dims(self.width, self.height);
        self.width * self.height + 2 * cw * ch
    }

    fn parse(line: &[u8]) -> Result<Self> {
        let text = std::str::from_utf8(line)
            .map_err(|_| FrameIoError::MalformedHeader("header is not ASCII".into()))?;
        let mut tokens = text.split(' ');
        if tokens.next().map(str::as_bytes) != Some(MAGIC) {
            return Err(FrameIoError::MalformedHeader(
                "missing YUV4MPEG2 magic".into(),
            ));
        }
        let mut width = None;
        let mut height = None;
        let mut fps = None;
        let mut colorspace = Colorspace::C420;
        for token in tokens.filter(|t| !t.is_empty()) {
            let (tag, value) = token.split_at(1);
            match tag {
                "W" => width = Some(parse_dimension("W", value)?),
                "H" => height = Some(parse_dimension("H", value)?),
                "F" => fps = Some(parse_ratio("F", value)?),
                "C" => colorspace = Colorspace::parse(value)?,
                // Interlacing, aspect ratio and extensions do not affect decoding.
                "I" | "A" | "X" => {}
                _ => {
                    return Err(FrameIoError::MalformedHeader(format!(
                        "unknown header parameter `{token}`"
                    )))
                }
            }
        }
        let width = width.ok_or_else(|| FrameIoError::MalformedHeader("missing W".into()))?;
        let height = height.ok_or_else(|| FrameIoError::MalformedHeader("missing H".into()))?;
        let (fps_num, fps_den) =
            fps.ok_or_else(|| FrameIoError::MalformedHeader("missing F".into()))?;
        Ok(Self {
            width,
            height,
            fps_num,
            fps_den,
            colorspace,
        })
    }
}

fn parse_dimension(tag: &str, value: &str) -> Result<usize> {
    match value.parse::<usize>() {
        Ok(v) if v > 0 && v <= MAX_DIMENSION => Ok(v),
        _ => Err(FrameIoError::MalformedHeader(format!(
            "bad {tag} value `{value}`"
        ))),
    }
}

fn parse_ratio(tag: &str, value: &str) -> Result<(u32, u32)> {
    let bad = || FrameIoError::MalformedHeader(format!("bad {tag} value `{value}`"));
    let (num, den) = value.split_once(':').ok_or_else(bad)?;
    let num: u32 = num.parse().map_err(|_| bad())?;
    let den: u32 = den.parse().map_err(|_| bad())?;
    if num == 0 || den == 0 {
        return Err(bad());
    }
    Ok((num, den))
}

/// Reads a `\n`-terminated line of at most `MAX_HEADER_LINE` bytes.
/// Returns `None` on a clean EOF before any byte was read.
fn read_line<R: BufRead>(reader: &mut R) -> std::io::Result<Option<(Vec<u8>, bool)>> {
    let mut line = Vec::new();
    let n = reader
        .by_ref()
        .take(MAX_HEADER_LINE as u64 + 1)
        .read_until(b'\n', &mut line)?;
    if n == 0 {
        return Ok(None);
    }
    let terminated = line.last() == Some(&b'\n');
    if terminated {
        line.pop();
    }
    Ok(Some((line, terminated)))
}

/// Incremental Y4M reader yielding RGB frames in stream order.
pub struct Y4mDecoder<R> {
    reader: R,
    header: Y4mHeader,
    next_index: usize,
}

impl<R: BufRead> Y4mDecoder<R> {
    pub fn new(mut reader: R) -> Result<Self> {
        let to_err = |e: std::io::Error| FrameIoError::MalformedHeader(e.to_string());
        let (line, terminated) = read_line(&mut reader)
            .map_err(to_err)?
            .ok_or_else(|| FrameIoError::MalformedHeader("empty stream".into()))?;
        if !terminated {
            return Err(FrameIoError::MalformedHeader(
                "stream header is not newline-terminated".into(),
            ));
        }
        let header = Y4mHeader::parse(&line)?;
        Ok(Self {
            reader,
            header,
            next_index: 0,
        })
    }

    pub fn header(&self) -> &Y4mHeader {
        &self.header
    }

    /// Returns `Ok(None)` at a clean end of stream.
    pub fn next_frame(&mut self) -> Result<Option<Frame>> {
        let index = self.next_index;
        let expected = self.header.frame_payload_len();
        let line = read_line(&mut self.reader)
            .map_err(|e| FrameIoError::MalformedHeader(e.to_string()))?;
        let Some((line, terminated)) = line else {
            return Ok(None);
        };
        if !line.starts_with(FRAME_TAG)
            || (line.len() > FRAME_TAG.len() && line[FRAME_TAG.len()] != b' ')
        {
            if !terminated && FRAME_TAG.starts_with(&line) {
                return Err(FrameIoError::TruncatedFrame {
                    frame: index,
                    expected,
                    found: 0,
                });
            }
            return Err(FrameIoError::MalformedHeader(format!(
                "frame {index}: expected FRAME marker"
            )));
        }
        if !terminated {
            return Err(FrameIoError::TruncatedFrame {
                frame: index,
                expected,
                found: 0,
            });
        }
        // Grows with the data actually present, so a lying header cannot force
        // a huge allocation.
        let mut payload = Vec::new();
        self.reader
            .by_ref()
            .take(expected as u64)
            .read_to_end(&mut payload)
            .map_err(|e| FrameIoError::MalformedHeader(e.to_string()))?;
        if payload.len() < expected {
            return Err(FrameIoError::TruncatedFrame {
                frame: index,
                expected,
                found: payload.len(),
            });
        }
        self.next_index += 1;
        Ok(Some(decode_planes(&self.header, &payload, index)))
    }
}

impl<R: BufRead> Iterator for Y4mDecoder<R> {
    type Item = Result<Frame>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_frame().transpose()
    }
}

fn decode_planes(header: &Y4mHeader, payload: &[u8], index: usize) -> Frame {
    let (w, h) = (header.width, header.height);
    let (cw, ch) = header.colorspace.chroma_dims(w, h);
    let (luma, chroma) = payload.split_at(w * h);
    let (cb_plane, cr_plane) = chroma.split_at(cw * ch);
    let (sx, sy) = match header.colorspace {
        Colorspace::C420 => (2, 2),
        Colorspace::C444 => (1, 1),
    };
    let mut pixels = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            let c = (y / sy) * cw + x / sx;
            let (r, g, b) = ycbcr_to_rgb(luma[y * w + x], cb_plane[c], cr_plane[c]);
            pixels.extend_from_slice(&[r, g, b]);
        }
    }
    Frame {
        index,
        width: w,
        height: h,
        pixels,
    }
}

/// BT.601 full-range conversion, clamped to `[0, 1]`.
pub(crate) fn ycbcr_to_rgb(y: u8, cb: u8, cr: u8) -> (f64, f64, f64) {
    let y = y as f64;
    let cb = cb as f64 - 128.0;
    let cr = cr as f64 - 128.0;
    let r = y + 1.402 * cr;
    let g = y - 0.344136 * cb - 0.714136 * cr;
    let b = y + 1.772 * cb;
    let n = |v: f64| (v / 255.0).clamp(0.0, 1.0);
    (n(r), n(g), n(b))
}

/// Decodes a complete in-memory Y4M stream.
pub fn parse_y4m(bytes: &[u8]) -> Result<(Y4mHeader, Vec<Frame>)> {
    let mut decoder = Y4mDecoder::new(bytes)?;
    let mut frames = Vec::new();
    while let Some(frame) = decoder.next_frame()? {
        frames.push(frame);
    }
    Ok((decoder.header.clone(), frames))
}

/// Encodes frames as a Y4M stream (BT.601 full range). 4:2:0 chroma is the
/// mean of each 2x2 block, clipped at the right and bottom edges.
pub fn encode_y4m(frames: &[Frame], fps_num: u32, fps_den: u32, colorspace: Colorspace) -> Vec<u8> {
    let (w, h) = frames.first().map_or((0, 0), |f| (f.width, f.height));
    let tag = match colorspace {
        Colorspace::C420 => "420jpeg",
        Colorspace::C444 => "444",
    };
    let mut out = format!("YUV4MPEG2 W{w} H{h} F{fps_num}:{fps_den} Ip A1:1 C{tag}\n").into_bytes();
    let (cw, ch) = colorspace.chroma_dims(w, h);
    let (sx, sy) = match colorspace {
        Colorspace::C420 => (2, 2),
        Colorspace::C444 => (1, 1),
    };
    let byte = |v: f64| v.round().clamp(0.0, 255.0) as u8;
    for f in frames {
        assert_eq!((f.width, f.height), (w, h), "frames must share dimensions");
        out.extend_from_slice(b"FRAME\n");
        let rgb = |x: usize, y: usize| {
            let i = (y * w + x) * 3;
            (
                f.pixels[i] * 255.0,
                f.pixels[i + 1] * 255.0,
                f.pixels[i + 2] * 255.0,
            )
        };
        for y in 0..h {
            for x in 0..w {
                let (r, g, b) = rgb(x, y);
                out.push(byte(0.299 * r + 0.587 * g + 0.114 * b));
            }
        }
        let mut cb = Vec::with_capacity(cw * ch);
        let mut cr = Vec::with_capacity(cw * ch);
        for cy in 0..ch {
            for cx in 0..cw {
                let (mut sb, mut sr, mut n) = (0.0, 0.0, 0.0);
                for y in cy * sy..((cy + 1) * sy).min(h) {
                    for x in cx * sx..((cx + 1) * sx).min(w) {
                        let (r, g, b) = rgb(x, y);
                        sb += -0.168736 * r - 0.331264 * g + 0.5 * b;
                        sr += 0.5 * r - 0.418688 * g - 0.081312 * b;
                        n += 1.0;
                    }
                }
                cb.push(byte(128.0 + sb / n));
                cr.push(byte(128.0 + sr / n));
            }
        }
        out.extend_from_slice(&cb);
        out.extend_from_slice(&cr);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(header: &str, frames: &[Vec<u8>]) -> Vec<u8> {
        let mut out = format!("{header}\n").into_bytes();
        for f in frames {
            out.extend_from_slice(b"FRAME\n");
            out.extend_from_slice(f);
        }
        out
    }

    #[test]
    fn zero_bytes_c444_decode() {
        let data = stream("YUV4MPEG2 W4 H4 F10:1 C444", &[vec![0u8; 48]]);
        let (header, frames) = parse_y4m(&data).unwrap();
        assert_eq!(header.width, 4);
        assert_eq!((header.fps_num, header.fps_den), (10, 1));
        assert_eq!(frames.len(), 1);
        let f = &frames[0];
        assert_eq!((f.width(), f.height()), (4, 4));
        // Cb = Cr = 0 is far from neutral chroma: red and blue clamp to zero
        // while green picks up 0.344136*128 + 0.714136*128.
        let g = (0.344136 * 128.0 + 0.714136 * 128.0) / 255.0;
        for px in f.pixels().chunks(3) {
            assert_eq!(px[0], 0.0);
            assert!((px[1] - g).abs() < 1e-12);
            assert_eq!(px[2], 0.0);
        }
    }

    #[test]
    fn zero_luma_neutral_chroma_is_black() {
        let mut payload = vec![0u8; 16];
        payload.extend(vec![128u8; 32]);
        let data = stream("YUV4MPEG2 W4 H4 F10:1 C444", &[payload]);
        let (_, frames) = parse_y4m(&data).unwrap();
        assert!(frames[0].pixels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn short_payload_is_truncated_frame() {
        let data = stream("YUV4MPEG2 W4 H4 F10:1 C444", &[vec![0u8; 10]]);
        match parse_y4m(&data) {
            Err(FrameIoError::TruncatedFrame {
                frame: 0,
                expected: 48,
                found: 10,
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_errors() {
        assert!(matches!(
            parse_y4m(b"YUV4MPEG W4 H4 F1:1\n"),
            Err(FrameIoError::MalformedHeader(_))
        ));
        assert!(matches!(
            parse_y4m(b"YUV4MPEG2 W4 F1:1\n"),
            Err(FrameIoError::MalformedHeader(_))
        ));
        assert!(matches!(
            parse_y4m(b"YUV4MPEG2 W4 H4 F0:1\n"),
            Err(FrameIoError::MalformedHeader(_))
        ));
        assert!(matches!(
            parse_y4m(b"YUV4MPEG2 W4 H4 F1:1 C422\n"),
            Err(FrameIoError::UnsupportedColorspace(_))
        ));
        assert!(matches!(
            parse_y4m(b"YUV4MPEG2 W4 H4 F1:1 C420paldv\n"),
            Err(FrameIoError::UnsupportedColorspace(_))
        ));
    }

    #[test]
    fn c420_upsamples_nearest_neighbour() {
        // 4x2 luma, 2x1 chroma: left half neutral, right half strong red chroma.
        let mut payload = vec![100u8; 8];
        payload.extend([128, 128]);
        payload.extend([128, 255]);
        let data = stream("YUV4MPEG2 W4 H2 F25:1 C420jpeg", &[payload]);
        let (_, frames) = parse_y4m(&data).unwrap();
        let f = &frames[0];
        assert_eq!(f.get(0, 0, 0), f.get(1, 1, 0));
        assert_eq!(f.get(2, 0, 0), f.get(3, 1, 0));
        assert!(f.get(2, 0, 0) > f.get(1, 0, 0));
    }

    #[test]
    fn missing_colorspace_defaults_to_420() {
        let data = stream("YUV4MPEG2 W2 H2 F30000:1001", &[vec![16u8; 6]]);
        let (header, frames) = parse_y4m(&data).unwrap();
        assert_eq!(header.colorspace, Colorspace::C420);
        assert_eq!(frames.len(), 1);
    }

    #[test]
    fn encode_round_trip_is_close() {
        let f = Frame::from_fn(0, 6, 4, |x, y, c| {
            0.2 + 0.1 * c as f64 + 0.02 * (x + y) as f64
        })
        .unwrap();
        for cs in [Colorspace::C444, Colorspace::C420] {
            let bytes = encode_y4m(std::slice::from_ref(&f), 10, 1, cs);
            let (hdr, back) = parse_y4m(&bytes).unwrap();
            assert_eq!((hdr.width, hdr.height, hdr.colorspace), (6, 4, cs));
            let tol = if cs == Colorspace::C444 {
                4.0 / 255.0
            } else {
                0.1
            };
            for (a, b) in f.pixels.iter().zip(back[0].pixels()) {
                assert!((a - b).abs() <= tol, "{a} vs {b}");
            }
        }
    }
}
