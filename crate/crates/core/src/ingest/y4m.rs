//! YUV4MPEG2 reading and writing.
//!
//! Accepted colorspace tags: `420jpeg`, `420`, `420paldv`, `420mpeg2` (all
//! decoded as YUV420P8) and `mono` (GRAY8). A missing `C` tag means `420jpeg`.
//! High bit-depth and non-4:2:0 layouts are rejected.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{Frame, FrameRate, FrameStream, PixelFormat};
use crate::error::{Error, Result};

const STREAM_MAGIC: &[u8] = b"YUV4MPEG2";
const FRAME_MAGIC: &[u8] = b"FRAME";
const MAX_HEADER: usize = 64 * 1024;

pub fn open_y4m(path: impl AsRef<Path>) -> Result<FrameStream> {
    let file = File::open(path.as_ref())?;
    let reader = Y4mReader::new(BufReader::new(file))?;
    let rate = reader.frame_rate();
    Ok(FrameStream::new(rate, reader))
}

/// Decodes every frame of an in-memory or on-disk Y4M source.
pub fn read_y4m<R: BufRead + Send + 'static>(reader: R) -> Result<FrameStream> {
    let reader = Y4mReader::new(reader)?;
    let rate = reader.frame_rate();
    Ok(FrameStream::new(rate, reader))
}

pub struct Y4mReader<R> {
    reader: R,
    width: usize,
    height: usize,
    format: PixelFormat,
    frame_rate: Option<FrameRate>,
    next_index: usize,
    done: bool,
}

impl<R: BufRead> Y4mReader<R> {
    pub fn new(mut reader: R) -> Result<Self> {
        let header = match read_line(&mut reader, MAX_HEADER)? {
            Line::Complete(bytes) => bytes,
            Line::Eof => return Err(Error::Parse("empty file, missing YUV4MPEG2 header".into())),
            Line::Partial => return Err(Error::Parse("unterminated YUV4MPEG2 header".into())),
        };
        let header = std::str::from_utf8(&header)
            .map_err(|_| Error::Parse("header is not valid ASCII".into()))?;
        let mut tokens = header.split(' ').filter(|t| !t.is_empty());
        if tokens.next().map(str::as_bytes) != Some(STREAM_MAGIC) {
            return Err(Error::Parse("missing YUV4MPEG2 signature".into()));
        }

        let mut width = None;
        let mut height = None;
        let mut frame_rate = None;
        let mut format = PixelFormat::Yuv420p8;
        for token in tokens {
            let (tag, value) = token.split_at(1);
            match tag {
                "W" => width = Some(parse_dim(value, "width")?),
                "H" => height = Some(parse_dim(value, "height")?),
                "F" => frame_rate = Some(parse_rate(value)?),
                "C" => {
                    format = match value {
                        "420jpeg" | "420" | "420paldv" | "420mpeg2" => PixelFormat::Yuv420p8,
                        "mono" => PixelFormat::Gray8,
                        other => {
                            return Err(Error::Parse(format!("unsupported colorspace C{other}")))
                        }
                    }
                }
                // Interlacing, aspect ratio and extensions do not affect decoding.
                "I" | "A" | "X" => {}
                _ => return Err(Error::Parse(format!("unknown header token {token:?}"))),
            }
        }
        let width = width.ok_or_else(|| Error::Parse("header lacks W".into()))?;
        let height = height.ok_or_else(|| Error::Parse("header lacks H".into()))?;

        Ok(Y4mReader {
            reader,
            width,
            height,
            format,
            frame_rate,
            next_index: 0,
            done: false,
        })
    }

    pub fn frame_rate(&self) -> Option<FrameRate> {
        self.frame_rate
    }

    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn read_frame(&mut self) -> Result<Option<Frame>> {
        let index = self.next_index;
        let marker = match read_line(&mut self.reader, MAX_HEADER)? {
            Line::Eof => return Ok(None),
            Line::Partial => return Err(Error::TruncatedStream { frame: index }),
            Line::Complete(bytes) => bytes,
        };
        if !marker.starts_with(FRAME_MAGIC) {
            return Err(Error::Parse(format!(
                "expected FRAME marker before frame {index}"
            )));
        }

        let dims = self.format.plane_dims(self.width, self.height);
        let mut planes = Vec::with_capacity(dims.len());
        for (w, h) in dims {
            let mut plane = vec![0u8; w * h];
            read_full(&mut self.reader, &mut plane).map_err(|e| match e {
                Error::Io(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
                    Error::TruncatedStream { frame: index }
                }
                other => other,
            })?;
            planes.push(plane);
        }

        self.next_index += 1;
        let mut frame = Frame::new(self.width, self.height, self.format, planes)?.with_index(index);
        if let Some(rate) = self.frame_rate {
            frame = frame.with_timestamp(index as f64 / rate.fps());
        }
        Ok(Some(frame))
    }
}

impl<R: BufRead> Iterator for Y4mReader<R> {
    type Item = Result<Frame>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.read_frame() {
            Ok(Some(frame)) => Some(Ok(frame)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Writes frames as a Y4M stream. All frames must share the first frame's
/// size and be YUV420P8 (written as `C420jpeg`) or GRAY8 (written as `Cmono`).
pub fn write_y4m<W: Write>(mut writer: W, frames: &[Frame], rate: FrameRate) -> Result<()> {
    let first = frames
        .first()
        .ok_or_else(|| Error::EmptyInput("no frames to write".into()))?;
    let tag = match first.format() {
        PixelFormat::Yuv420p8 => "420jpeg",
        PixelFormat::Gray8 => "mono",
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "cannot write {other} as Y4M"
            )))
        }
    };
    writeln!(
        writer,
        "YUV4MPEG2 W{} H{} F{}:{} Ip A1:1 C{}",
        first.width(),
        first.height(),
        rate.num,
        rate.den,
        tag
    )?;
    for frame in frames {
        if frame.format() != first.format()
            || frame.width() != first.width()
            || frame.height() != first.height()
        {
            return Err(Error::DimensionMismatch {
                expected: (first.width(), first.height()),
                found: (frame.width(), frame.height()),
                context: format!("frame {} of Y4M output", frame.index),
            });
        }
        writer.write_all(b"FRAME\n")?;
        for plane in frame.planes() {
            writer.write_all(plane)?;
        }
    }
    writer.flush()?;
    Ok(())
}

enum Line {
    Eof,
    Partial,
    Complete(Vec<u8>),
}

fn read_line<R: BufRead>(reader: &mut R, limit: usize) -> Result<Line> {
    let mut buf = Vec::new();
    let n = reader
        .by_ref()
        .take(limit as u64)
        .read_until(b'\n', &mut buf)?;
    if n == 0 {
        return Ok(Line::Eof);
    }
    if buf.last() != Some(&b'\n') {
        if n >= limit {
            return Err(Error::Parse(format!("header line exceeds {limit} bytes")));
        }
        return Ok(Line::Partial);
    }
    buf.pop();
    Ok(Line::Complete(buf))
}

fn read_full<R: Read>(reader: &mut R, buf: &mut [u8]) -> Result<()> {
    reader.read_exact(buf)?;
    Ok(())
}

fn parse_dim(value: &str, what: &str) -> Result<usize> {
    match value.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(Error::Parse(format!("invalid {what} {value:?}"))),
    }
}

fn parse_rate(value: &str) -> Result<FrameRate> {
    let (num, den) = value
        .split_once(':')
        .ok_or_else(|| Error::Parse(format!("invalid frame rate {value:?}")))?;
    let num: u32 = num
        .parse()
        .map_err(|_| Error::Parse(format!("invalid frame rate {value:?}")))?;
    let den: u32 = den
        .parse()
        .map_err(|_| Error::Parse(format!("invalid frame rate {value:?}")))?;
    if num == 0 || den == 0 {
        return Err(Error::Parse(format!("invalid frame rate {value:?}")));
    }
    Ok(FrameRate { num, den })
}

#[cfg(test)]
mod tests {
    use std::io::Cursor;

    use super::*;

    fn fixture(header: &str, frames: usize, payload: usize) -> Vec<u8> {
        let mut bytes = header.as_bytes().to_vec();
        for i in 0..frames {
            bytes.extend_from_slice(b"FRAME\n");
            bytes.extend((0..payload).map(|j| (i * 31 + j) as u8));
        }
        bytes
    }

    fn decode(bytes: Vec<u8>) -> Result<Vec<Frame>> {
        read_y4m(Cursor::new(bytes))?.collect()
    }

    #[test]
    fn two_frame_fixture() {
        // 4x4 luma + two 2x2 chroma planes
        let frames = decode(fixture("YUV4MPEG2 W4 H4 F30:1 Ip A1:1\n", 2, 24)).unwrap();
        assert_eq!(frames.len(), 2);
        for (i, f) in frames.iter().enumerate() {
            assert_eq!((f.width(), f.height()), (4, 4));
            assert_eq!(f.format(), PixelFormat::Yuv420p8);
            assert_eq!(f.index, i);
        }
        assert_eq!(frames[1].timestamp, Some(1.0 / 30.0));
    }

    #[test]
    fn reports_frame_rate() {
        let stream = read_y4m(Cursor::new(fixture("YUV4MPEG2 W4 H4 F30000:1001\n", 0, 0))).unwrap();
        assert_eq!(stream.frame_rate(), Some(FrameRate::new(30000, 1001)));
    }

    #[test]
    fn c420jpeg_tag_is_accepted() {
        let frames = decode(fixture("YUV4MPEG2 W4 H4 F25:1 C420jpeg\n", 1, 24)).unwrap();
        assert_eq!(frames[0].format(), PixelFormat::Yuv420p8);
    }

    #[test]
    fn mono_tag_decodes_gray() {
        let frames = decode(fixture("YUV4MPEG2 W4 H2 F25:1 Cmono\n", 1, 8)).unwrap();
        assert_eq!(frames[0].format(), PixelFormat::Gray8);
    }

    #[test]
    fn header_without_frames_is_empty() {
        assert!(decode(fixture("YUV4MPEG2 W4 H4 F30:1\n", 0, 0))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn malformed_headers() {
        for header in [
            "",
            "YUV4MPEG W4 H4\n",
            "YUV4MPEG2 W4 F30:1\n",
            "YUV4MPEG2 W0 H4\n",
            "YUV4MPEG2 W4 H4 F30:0\n",
            "YUV4MPEG2 W4 H4 C444\n",
            "YUV4MPEG2 W4 H4 C420p10\n",
            "YUV4MPEG2 W4 H4",
        ] {
            let err = read_y4m(Cursor::new(header.as_bytes().to_vec())).unwrap_err();
            assert!(matches!(err, Error::Parse(_)), "{header:?} gave {err:?}");
        }
    }

    #[test]
    fn truncated_payload() {
        let mut bytes = fixture("YUV4MPEG2 W4 H4 F30:1\n", 2, 24);
        bytes.truncate(bytes.len() - 5);
        let frames: Vec<_> = read_y4m(Cursor::new(bytes)).unwrap().collect();
        assert_eq!(frames.len(), 2);
        assert!(frames[0].is_ok());
        assert!(matches!(
            frames[1],
            Err(Error::TruncatedStream { frame: 1 })
        ));
    }

    #[test]
    fn truncated_marker() {
        let mut bytes = fixture("YUV4MPEG2 W4 H4 F30:1\n", 1, 24);
        bytes.extend_from_slice(b"FRA");
        let err = decode(bytes).unwrap_err();
        assert!(matches!(err, Error::TruncatedStream { frame: 1 }));
    }

    #[test]
    fn garbage_instead_of_marker() {
        let mut bytes = fixture("YUV4MPEG2 W4 H4 F30:1\n", 1, 24);
        bytes.extend_from_slice(b"JUNK\n");
        assert!(matches!(decode(bytes).unwrap_err(), Error::Parse(_)));
    }

    #[test]
    fn gray_frames_round_trip() {
        let frames: Vec<Frame> = (0..3)
            .map(|i| {
                Frame::gray(3, 2, (0..6).map(|v| v * 40 + i).collect())
                    .unwrap()
                    .with_index(i as usize)
            })
            .collect();
        let mut out = Vec::new();
        write_y4m(&mut out, &frames, FrameRate::new(24, 1)).unwrap();
        let back = decode(out).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in frames.iter().zip(&back) {
            assert_eq!(a.planes(), b.planes());
        }
    }

    #[test]
    fn rgb_cannot_be_written() {
        let f = Frame::rgb_interleaved(1, 1, &[1, 2, 3]).unwrap();
        assert!(write_y4m(Vec::new(), &[f], FrameRate::new(1, 1)).is_err());
    }
}
