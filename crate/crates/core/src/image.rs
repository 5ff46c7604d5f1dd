//! Images, block partitioning and binary PGM/PPM I/O.
//!
//! Pixel layout is interleaved: pixels are stored row-major, and the
//! channels of one pixel are contiguous (R, G, B). Blocks and flattened
//! blocks use the same layout, so a 2x2 RGB block flattens to
//! `R00 G00 B00 R01 G01 B01 R10 G10 B10 R11 G11 B11`.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAX_VALUE: u8 = 255;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ImageTensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl ImageTensor {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidParameter(format!(
                "channel count must be 1 or 3, got {channels}"
            )));
        }
        let expected = channels * height * width;
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        Ok(ImageTensor {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Result<Self> {
        Self::new(channels, height, width, vec![0; channels * height * width])
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> u8,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(channels * height * width);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self::new(channels, height, width, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> u8 {
        self.data[self.index(y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: u8) {
        let i = self.index(y, x, c);
        self.data[i] = v;
    }

    /// Pixel slice of length `channels` at `(y, x)`.
    pub fn pixel(&self, y: usize, x: usize) -> &[u8] {
        let i = self.index(y, x, 0);
        &self.data[i..i + self.channels]
    }

    /// Values on the `[0, 1]` scale (`v / 255`).
    pub fn normalized(&self) -> FloatImage {
        FloatImage {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f64::from(v) / 255.0).collect(),
        }
    }

    pub fn same_shape(&self, other: &ImageTensor) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }
}

/// Real-valued image, same layout as [`ImageTensor`].
#[derive(Debug, Clone, PartialEq)]
pub struct FloatImage {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FloatImage {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        let expected = channels * height * width;
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        Ok(FloatImage {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Rounds `v * 255` to the nearest 8-bit value, clamping to `0..=255`.
    pub fn quantize(&self) -> ImageTensor {
        let data = self
            .data
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        ImageTensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data,
        }
    }
}

/// Non-overlapping `bx x by` tiling of an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockGrid {
    pub bx: usize,
    pub by: usize,
    pub cols: usize,
    pub rows: usize,
}

impl BlockGrid {
    /// Requires exact divisibility; remainder pixels are never dropped.
    pub fn new(width: usize, height: usize, bx: usize, by: usize) -> Result<Self> {
        if bx == 0 || by == 0 {
            return Err(Error::InvalidParameter(
                "block dimensions must be positive".into(),
            ));
        }
        if !width.is_multiple_of(bx) || !height.is_multiple_of(by) {
            return Err(Error::Dimension(format!(
                "{width}x{height} image is not divisible into {bx}x{by} blocks"
            )));
        }
        Ok(BlockGrid {
            bx,
            by,
            cols: width / bx,
            rows: height / by,
        })
    }

    pub fn for_image(img: &ImageTensor, bx: usize, by: usize) -> Result<Self> {
        Self::new(img.width(), img.height(), bx, by)
    }

    pub fn count(&self) -> usize {
        self.cols * self.rows
    }
}

/// Split into blocks in raster order.
pub fn partition(img: &ImageTensor, bx: usize, by: usize) -> Result<Vec<ImageTensor>> {
    let grid = BlockGrid::for_image(img, bx, by)?;
    let c = img.channels();
    let row_len = bx * c;
    let mut blocks = Vec::with_capacity(grid.count());
    for br in 0..grid.rows {
        for bc in 0..grid.cols {
            let mut data = Vec::with_capacity(by * row_len);
            for y in 0..by {
                let start = img.index(br * by + y, bc * bx, 0);
                data.extend_from_slice(&img.data[start..start + row_len]);
            }
            blocks.push(ImageTensor {
                channels: c,
                height: by,
                width: bx,
                data,
            });
        }
    }
    Ok(blocks)
}

/// Inverse of [`partition`] for the given grid.
pub fn reassemble(blocks: &[ImageTensor], grid: &BlockGrid) -> Result<ImageTensor> {
    if blocks.len() != grid.count() {
        return Err(Error::LengthMismatch {
            expected: grid.count(),
            actual: blocks.len(),
        });
    }
    let c = blocks.first().map(|b| b.channels()).unwrap_or(1);
    let mut img = ImageTensor::zeros(c, grid.rows * grid.by, grid.cols * grid.bx)?;
    let row_len = grid.bx * c;
    for (i, b) in blocks.iter().enumerate() {
        if b.channels() != c || b.width() != grid.bx || b.height() != grid.by {
            return Err(Error::Dimension(format!(
                "block {i} is {}x{}x{}, expected {}x{}x{c}",
                b.width(),
                b.height(),
                b.channels(),
                grid.bx,
                grid.by
            )));
        }
        let (br, bc) = (i / grid.cols, i % grid.cols);
        for y in 0..grid.by {
            let dst = img.index(br * grid.by + y, bc * grid.bx, 0);
            img.data[dst..dst + row_len].copy_from_slice(&b.data[y * row_len..(y + 1) * row_len]);
        }
    }
    Ok(img)
}

/// A block flattened to a vector of length `c * bx * by`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlatBlock(pub Vec<u8>);

pub fn flatten_block(block: &ImageTensor) -> FlatBlock {
    FlatBlock(block.data.clone())
}

pub fn unflatten_block(
    flat: FlatBlock,
    channels: usize,
    bx: usize,
    by: usize,
) -> Result<ImageTensor> {
    ImageTensor::new(channels, by, bx, flat.0)
}

fn skip_ws_and_comments(buf: &[u8], pos: &mut usize) {
    while *pos < buf.len() {
        match buf[*pos] {
            b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c => *pos += 1,
            b'#' => {
                while *pos < buf.len() && buf[*pos] != b'\n' {
                    *pos += 1;
                }
            }
            _ => break,
        }
    }
}

fn read_header_uint(buf: &[u8], pos: &mut usize, what: &str) -> Result<u32> {
    skip_ws_and_comments(buf, pos);
    let start = *pos;
    while *pos < buf.len() && buf[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format(format!("missing {what}")));
    }
    std::str::from_utf8(&buf[start..*pos])
        .unwrap()
        .parse()
        .map_err(|_| Error::Format(format!("{what} out of range")))
}

/// Parse a binary PGM (P5) or PPM (P6) with maxval 255.
pub fn decode_pnm(buf: &[u8]) -> Result<ImageTensor> {
    if buf.len() < 2 || buf[0] != b'P' {
        return Err(Error::Format("missing P5/P6 magic".into()));
    }
    let channels = match buf[1] {
        b'5' => 1,
        b'6' => 3,
        _ => {
            return Err(Error::Format(format!(
                "unsupported magic P{}",
                buf[1] as char
            )))
        }
    };
    let mut pos = 2;
    let width = read_header_uint(buf, &mut pos, "width")? as usize;
    let height = read_header_uint(buf, &mut pos, "height")? as usize;
    let maxval = read_header_uint(buf, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(Error::UnsupportedDepth(maxval));
    }
    if pos >= buf.len() || !buf[pos].is_ascii_whitespace() {
        return Err(Error::Format("missing whitespace after maxval".into()));
    }
    pos += 1;
    let expected = channels * width * height;
    let payload = &buf[pos..];
    if payload.len() < expected {
        return Err(Error::Truncated {
            expected,
            actual: payload.len(),
        });
    }
    ImageTensor::new(channels, height, width, payload[..expected].to_vec())
}

pub fn encode_pnm(img: &ImageTensor) -> Vec<u8> {
    let magic = if img.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    out
}

pub fn read_image(path: impl AsRef<Path>) -> Result<ImageTensor> {
    decode_pnm(&fs::read(path)?)
}

pub fn write_image(img: &ImageTensor, path: impl AsRef<Path>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_pnm(img))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(c: usize, h: usize, w: usize) -> ImageTensor {
        ImageTensor::from_fn(c, h, w, |y, x, ch| ((y * 31 + x * 7 + ch * 3) % 256) as u8).unwrap()
    }

    #[test]
    fn block_counts() {
        assert_eq!(BlockGrid::new(1024, 768, 16, 16).unwrap().count(), 3072);
        let img = ramp(3, 16, 16);
        let blocks = partition(&img, 16, 16).unwrap();
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0], img);
    }

    #[test]
    fn two_blocks_round_trip() {
        let img = ramp(3, 16, 32);
        let blocks = partition(&img, 16, 16).unwrap();
        assert_eq!(blocks.len(), 2);
        let grid = BlockGrid::for_image(&img, 16, 16).unwrap();
        assert_eq!(reassemble(&blocks, &grid).unwrap(), img);
    }

    #[test]
    fn non_divisible_rejected() {
        let img = ramp(1, 10, 12);
        assert!(matches!(partition(&img, 4, 4), Err(Error::Dimension(_))));
        assert!(matches!(
            partition(&img, 0, 5),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn flatten_trivial_and_rgb_order() {
        let one = ImageTensor::new(1, 1, 1, vec![7]).unwrap();
        assert_eq!(flatten_block(&one).0, vec![7]);

        // hand-enumerated: value = 100*y + 10*x + c
        let b = ImageTensor::from_fn(3, 2, 2, |y, x, c| (100 * y + 10 * x + c) as u8).unwrap();
        let expected = vec![0, 1, 2, 10, 11, 12, 100, 101, 102, 110, 111, 112];
        let flat = flatten_block(&b);
        assert_eq!(flat.0, expected);
        assert_eq!(unflatten_block(flat, 3, 2, 2).unwrap(), b);
        assert!(matches!(
            unflatten_block(FlatBlock(vec![1, 2, 3]), 3, 2, 2),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn pgm_single_black_pixel() {
        let img = decode_pnm(b"P5\n1 1\n255\n\0").unwrap();
        assert_eq!(img.channels(), 1);
        assert_eq!(img.data(), &[0]);
    }

    #[test]
    fn header_comments_accepted() {
        let img = decode_pnm(b"P6 # comment\n2 # w\n1\n255 \x01\x02\x03\x04\x05\x06").unwrap();
        assert_eq!(img.width(), 2);
        assert_eq!(img.pixel(0, 1), &[4, 5, 6]);
    }

    #[test]
    fn malformed_files_rejected() {
        assert!(matches!(
            decode_pnm(b"P5\n1 1\n65535\n\0\0"),
            Err(Error::UnsupportedDepth(65535))
        ));
        assert!(matches!(
            decode_pnm(b"P3\n1 1\n255\n0"),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            decode_pnm(b"P6\n2 2\n255\n\0\0\0"),
            Err(Error::Truncated { .. })
        ));
        assert!(matches!(decode_pnm(b"P5\n1\n"), Err(Error::Format(_))));
        assert!(matches!(decode_pnm(b""), Err(Error::Format(_))));
    }

    #[test]
    fn write_read_rgb_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.ppm");
        let img = ramp(3, 3, 5);
        write_image(&img, &path).unwrap();
        assert_eq!(read_image(&path).unwrap(), img);
    }

    #[test]
    fn quantize_normalized_is_identity() {
        let img = ramp(3, 4, 4);
        assert_eq!(img.normalized().quantize(), img);
    }
}
