//! Grayscale frames, pixel rectangles and binary PGM (P5) I/O.

use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

/// Smallest legal frame side.
pub const MIN_FRAME_SIDE: usize = 16;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("frame {width}x{height} below minimum side {MIN_FRAME_SIDE}")]
    TooSmall { width: usize, height: usize },
    #[error("buffer holds {got} pixels, expected {expected}")]
    BadLength { expected: usize, got: usize },
    #[error("frame dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("malformed PGM: {0}")]
    Pgm(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Row-major 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, FrameError> {
        if width < MIN_FRAME_SIDE || height < MIN_FRAME_SIDE {
            return Err(FrameError::TooSmall { width, height });
        }
        if data.len() != width * height {
            return Err(FrameError::BadLength {
                expected: width * height,
                got: data.len(),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self, FrameError> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds a frame by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Result<Self, FrameError> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    pub fn same_dims(&self, other: &Frame) -> Result<(), FrameError> {
        if self.width != other.width || self.height != other.height {
            return Err(FrameError::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }

    pub fn full_rect(&self) -> Rect {
        Rect::new(0, 0, self.width, self.height)
    }

    /// Horizontally mirrors the content of `rect` in place.
    pub fn mirror_rect(&mut self, rect: Rect) {
        for y in rect.y..rect.y + rect.h {
            let row = &mut self.data[y * self.width + rect.x..y * self.width + rect.x + rect.w];
            row.reverse();
        }
    }

    pub fn write_pgm<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        out.write_all(&self.data)
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = io::BufWriter::new(file);
        self.write_pgm(&mut w)?;
        w.flush()
    }

    pub fn read_pgm<R: Read>(mut input: R) -> Result<Self, FrameError> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        Self::parse_pgm(&bytes)
    }

    pub fn load_pgm(path: impl AsRef<Path>) -> Result<Self, FrameError> {
        Self::parse_pgm(&std::fs::read(path)?)
    }

    pub fn parse_pgm(bytes: &[u8]) -> Result<Self, FrameError> {
        let mut pos = 0usize;
        let mut tokens = Vec::with_capacity(4);
        while tokens.len() < 4 {
            // skip whitespace and comments
            while pos < bytes.len() {
                match bytes[pos] {
                    b'#' => {
                        while pos < bytes.len() && bytes[pos] != b'\n' {
                            pos += 1;
                        }
                    }
                    c if c.is_ascii_whitespace() => pos += 1,
                    _ => break,
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
                pos += 1;
            }
            if start == pos {
                return Err(FrameError::Pgm("truncated header".into()));
            }
            tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        if tokens[0] != "P5" {
            return Err(FrameError::Pgm(format!("magic {:?}, expected P5", tokens[0])));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| FrameError::Pgm(format!("bad header number {s:?}")))
        };
        let (w, h, maxval) = (parse(&tokens[1])?, parse(&tokens[2])?, parse(&tokens[3])?);
        if maxval != 255 {
            return Err(FrameError::Pgm(format!("maxval {maxval}, expected 255")));
        }
        // exactly one whitespace byte separates header from raster
        pos += 1;
        let raster = bytes
            .get(pos..pos + w * h)
            .ok_or_else(|| FrameError::Pgm("truncated raster".into()))?;
        Self::new(w, h, raster.to_vec())
    }
}

/// Axis-aligned pixel rectangle, top-left origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub const fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn right(&self) -> usize {
        self.x + self.w
    }

    pub fn bottom(&self) -> usize {
        self.y + self.h
    }

    pub fn fits_in(&self, width: usize, height: usize) -> bool {
        self.right() <= width && self.bottom() <= height
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.right() && y >= self.y && y < self.bottom()
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.x < other.right()
            && other.x < self.right()
            && self.y < other.bottom()
            && other.y < self.bottom()
    }

    pub fn center(&self) -> (f64, f64) {
        (
            self.x as f64 + self.w as f64 / 2.0,
            self.y as f64 + self.h as f64 / 2.0,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_frames() {
        assert!(matches!(Frame::filled(15, 20, 0), Err(FrameError::TooSmall { .. })));
        assert!(matches!(
            Frame::new(16, 16, vec![0; 10]),
            Err(FrameError::BadLength { .. })
        ));
    }

    #[test]
    fn pgm_roundtrip_with_comment() {
        let f = Frame::from_fn(17, 16, |x, y| (x * 7 + y * 3) as u8).unwrap();
        let mut buf = Vec::new();
        f.write_pgm(&mut buf).unwrap();
        assert!(buf.starts_with(b"P5\n17 16\n255\n"));
        assert_eq!(Frame::parse_pgm(&buf).unwrap(), f);

        let mut commented = b"P5\n# made by hand\n17 16\n255\n".to_vec();
        commented.extend_from_slice(f.data());
        assert_eq!(Frame::parse_pgm(&commented).unwrap(), f);
    }

    #[test]
    fn pgm_rejects_ascii_and_truncation() {
        assert!(Frame::parse_pgm(b"P2\n16 16\n255\n0").is_err());
        assert!(Frame::parse_pgm(b"P5\n16 16\n255\n\x00\x01").is_err());
        assert!(Frame::parse_pgm(b"P5\n16 16\n65535\n").is_err());
    }

    #[test]
    fn mirror_rect_reverses_rows() {
        let mut f = Frame::from_fn(16, 16, |x, _| x as u8).unwrap();
        f.mirror_rect(Rect::new(2, 0, 4, 1));
        assert_eq!(&f.data()[..7], &[0, 1, 5, 4, 3, 2, 6]);
    }
}
