//! Image containers, netpbm codecs and resampling primitives.
//!
//! Raw thermal frames travel as 16-bit binary PGM (`P5`, maxval 65535,
//! big-endian samples); RGB guides travel as binary PPM (`P6`, maxval 255).
//! Header tokens are separated by whitespace (with `#` comments allowed) and
//! exactly one whitespace byte separates the header from the payload.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("invalid dimensions {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },
    #[error("buffer length {actual} does not match {width}x{height}x{channels}")]
    LengthMismatch {
        width: usize,
        height: usize,
        channels: usize,
        actual: usize,
    },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("unsupported format: magic {magic:?}")]
    UnsupportedFormat { magic: String },
    #[error("malformed header at byte {offset}: {reason}")]
    MalformedHeader { offset: usize, reason: String },
    #[error("unsupported maxval {maxval} at byte {offset} (expected {expected})")]
    UnsupportedMaxval {
        offset: usize,
        maxval: u32,
        expected: u32,
    },
    /// `offset` counts payload bytes, i.e. where the sample data ran out.
    #[error("truncated payload at offset {offset} (expected {expected} bytes)")]
    Truncated { offset: usize, expected: usize },
    #[error("upsampling factor must be >= 1")]
    ZeroFactor,
    #[error("{width}x{height} is not divisible by factor {factor}")]
    NotDivisible {
        width: usize,
        height: usize,
        factor: usize,
    },
    #[error("image is empty")]
    Empty,
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, ImagingError>;

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(ImagingError::InvalidDimensions { width, height });
    }
    Ok(())
}

fn check_len(width: usize, height: usize, channels: usize, actual: usize) -> Result<()> {
    if width * height * channels != actual {
        return Err(ImagingError::LengthMismatch {
            width,
            height,
            channels,
            actual,
        });
    }
    Ok(())
}

/// Grid of raw sensor digital numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalFrame {
    width: usize,
    height: usize,
    dn: Vec<u16>,
    pub capture_id: String,
    pub timestamp: Option<f64>,
}

impl ThermalFrame {
    pub fn new(width: usize, height: usize, dn: Vec<u16>) -> Result<Self> {
        check_dims(width, height)?;
        check_len(width, height, 1, dn.len())?;
        Ok(Self {
            width,
            height,
            dn,
            capture_id: String::new(),
            timestamp: None,
        })
    }

    pub fn with_capture_id(mut self, id: impl Into<String>) -> Self {
        self.capture_id = id.into();
        self
    }

    pub fn with_timestamp(mut self, timestamp: f64) -> Self {
        self.timestamp = Some(timestamp);
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dn(&self) -> &[u16] {
        &self.dn
    }

    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.dn[y * self.width + x]
    }

    /// Digital numbers widened to `f64`, for matching and resampling.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            values: self.dn.iter().map(|&v| f64::from(v)).collect(),
        }
    }

    /// Copy of the `[x, x+w) × [y, y+h)` window. Panics when out of bounds.
    pub fn crop(&self, rect: Rect) -> ThermalFrame {
        assert!(rect.x + rect.width <= self.width && rect.y + rect.height <= self.height);
        let mut dn = Vec::with_capacity(rect.width * rect.height);
        for y in rect.y..rect.y + rect.height {
            let row = y * self.width;
            dn.extend_from_slice(&self.dn[row + rect.x..row + rect.x + rect.width]);
        }
        ThermalFrame {
            width: rect.width,
            height: rect.height,
            dn,
            capture_id: self.capture_id.clone(),
            timestamp: self.timestamp,
        }
    }
}

/// Interleaved 8-bit RGB image.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbFrame {
    width: usize,
    height: usize,
    rgb: Vec<u8>,
    pub capture_id: String,
}

impl RgbFrame {
    pub fn new(width: usize, height: usize, rgb: Vec<u8>) -> Result<Self> {
        check_dims(width, height)?;
        check_len(width, height, 3, rgb.len())?;
        Ok(Self {
            width,
            height,
            rgb,
            capture_id: String::new(),
        })
    }

    pub fn with_capture_id(mut self, id: impl Into<String>) -> Self {
        self.capture_id = id.into();
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn rgb(&self) -> &[u8] {
        &self.rgb
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    pub fn crop(&self, rect: Rect) -> RgbFrame {
        assert!(rect.x + rect.width <= self.width && rect.y + rect.height <= self.height);
        let mut rgb = Vec::with_capacity(3 * rect.width * rect.height);
        for y in rect.y..rect.y + rect.height {
            let start = 3 * (y * self.width + rect.x);
            rgb.extend_from_slice(&self.rgb[start..start + 3 * rect.width]);
        }
        RgbFrame {
            width: rect.width,
            height: rect.height,
            rgb,
            capture_id: self.capture_id.clone(),
        }
    }

    /// Translates the content by `(dx, dy)` pixels, replicating border pixels
    /// into the uncovered area. Output pixel `(x, y)` samples input
    /// `(x - dx, y - dy)`.
    pub fn shifted(&self, dx: i64, dy: i64) -> RgbFrame {
        let (w, h) = (self.width as i64, self.height as i64);
        let mut rgb = Vec::with_capacity(self.rgb.len());
        for y in 0..h {
            let sy = (y - dy).clamp(0, h - 1) as usize;
            for x in 0..w {
                let sx = (x - dx).clamp(0, w - 1) as usize;
                rgb.extend_from_slice(&self.pixel(sx, sy));
            }
        }
        RgbFrame {
            width: self.width,
            height: self.height,
            rgb,
            capture_id: self.capture_id.clone(),
        }
    }
}

/// Single-channel image of real intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        check_len(width, height, 1, values.len())?;
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(ImagingError::NonFinite { index });
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self::new(width, height, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Applies `f` to every value. Panics if `f` produces a non-finite value.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> GrayImage {
        let values: Vec<f64> = self.values.iter().map(|&v| f(v)).collect();
        assert!(values.iter().all(|v| v.is_finite()), "map produced non-finite value");
        GrayImage {
            width: self.width,
            height: self.height,
            values,
        }
    }

    pub fn crop(&self, rect: Rect) -> GrayImage {
        assert!(rect.x + rect.width <= self.width && rect.y + rect.height <= self.height);
        let mut values = Vec::with_capacity(rect.width * rect.height);
        for y in rect.y..rect.y + rect.height {
            let row = y * self.width;
            values.extend_from_slice(&self.values[row + rect.x..row + rect.x + rect.width]);
        }
        GrayImage {
            width: rect.width,
            height: rect.height,
            values,
        }
    }
}

/// Axis-aligned pixel rectangle `[x, x+width) × [y, y+height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, width: usize, height: usize) -> Self {
        Self {
            x,
            y,
            width,
            height,
        }
    }

    pub fn fits_in(&self, width: usize, height: usize) -> bool {
        self.x + self.width <= width && self.y + self.height <= height
    }
}

// ---------------------------------------------------------------------------
// netpbm codecs

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn magic(&mut self) -> Result<&'a [u8]> {
        if self.bytes.len() < 2 {
            return Err(ImagingError::MalformedHeader {
                offset: self.bytes.len(),
                reason: "missing magic number".into(),
            });
        }
        self.pos = 2;
        Ok(&self.bytes[..2])
    }

    fn number(&mut self, what: &str) -> Result<(usize, u32)> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(ImagingError::MalformedHeader {
                offset: start,
                reason: format!("expected {what}"),
            });
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii digits");
        let value = text.parse::<u32>().map_err(|_| ImagingError::MalformedHeader {
            offset: start,
            reason: format!("{what} out of range"),
        })?;
        Ok((start, value))
    }

    /// Consumes the single whitespace byte that terminates the header.
    fn end_of_header(&mut self) -> Result<usize> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => {
                self.pos += 1;
                Ok(self.pos)
            }
            _ => Err(ImagingError::MalformedHeader {
                offset: self.pos,
                reason: "expected single whitespace before payload".into(),
            }),
        }
    }
}

struct Header {
    width: usize,
    height: usize,
    payload_start: usize,
}

fn parse_header(bytes: &[u8], want_magic: &[u8; 2], want_maxval: u32) -> Result<Header> {
    let mut reader = HeaderReader { bytes, pos: 0 };
    let magic = reader.magic()?;
    if magic != want_magic {
        return Err(ImagingError::UnsupportedFormat {
            magic: String::from_utf8_lossy(magic).into_owned(),
        });
    }
    let (_, width) = reader.number("width")?;
    let (_, height) = reader.number("height")?;
    let (maxval_at, maxval) = reader.number("maxval")?;
    let (width, height) = (width as usize, height as usize);
    if width == 0 || height == 0 {
        return Err(ImagingError::InvalidDimensions { width, height });
    }
    if maxval != want_maxval {
        return Err(ImagingError::UnsupportedMaxval {
            offset: maxval_at,
            maxval,
            expected: want_maxval,
        });
    }
    let payload_start = reader.end_of_header()?;
    Ok(Header {
        width,
        height,
        payload_start,
    })
}

/// Decodes a `P5` 16-bit graymap from memory.
pub fn decode_pgm16(bytes: &[u8]) -> Result<ThermalFrame> {
    let header = parse_header(bytes, b"P5", 65535)?;
    let n = header.width * header.height;
    let payload = &bytes[header.payload_start..];
    if payload.len() < 2 * n {
        return Err(ImagingError::Truncated {
            offset: payload.len(),
            expected: 2 * n,
        });
    }
    let dn = payload[..2 * n]
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    ThermalFrame::new(header.width, header.height, dn)
}

pub fn encode_pgm16(frame: &ThermalFrame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", frame.width, frame.height).into_bytes();
    out.reserve(2 * frame.dn.len());
    for v in &frame.dn {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Reads a 16-bit PGM. The capture id is taken from the file stem.
pub fn load_pgm16(path: impl AsRef<Path>) -> Result<ThermalFrame> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    Ok(decode_pgm16(&bytes)?.with_capture_id(file_stem(path)))
}

pub fn save_pgm16(frame: &ThermalFrame, path: impl AsRef<Path>) -> Result<()> {
    check_dims(frame.width, frame.height)?;
    check_len(frame.width, frame.height, 1, frame.dn.len())?;
    fs::write(path, encode_pgm16(frame))?;
    Ok(())
}

/// Decodes a `P6` 8-bit pixmap from memory.
pub fn decode_ppm(bytes: &[u8]) -> Result<RgbFrame> {
    let header = parse_header(bytes, b"P6", 255)?;
    let n = 3 * header.width * header.height;
    let payload = &bytes[header.payload_start..];
    if payload.len() < n {
        return Err(ImagingError::Truncated {
            offset: payload.len(),
            expected: n,
        });
    }
    RgbFrame::new(header.width, header.height, payload[..n].to_vec())
}

pub fn encode_ppm(frame: &RgbFrame) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    out.extend_from_slice(&frame.rgb);
    out
}

pub fn load_ppm(path: impl AsRef<Path>) -> Result<RgbFrame> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    Ok(decode_ppm(&bytes)?.with_capture_id(file_stem(path)))
}

pub fn save_ppm(frame: &RgbFrame, path: impl AsRef<Path>) -> Result<()> {
    check_dims(frame.width, frame.height)?;
    check_len(frame.width, frame.height, 3, frame.rgb.len())?;
    fs::write(path, encode_ppm(frame))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// colour and resampling

pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// ITU-R BT.601 luma.
pub fn rgb_to_gray(frame: &RgbFrame) -> GrayImage {
    let values = frame
        .rgb
        .chunks_exact(3)
        .map(|p| {
            LUMA_WEIGHTS[0] * f64::from(p[0])
                + LUMA_WEIGHTS[1] * f64::from(p[1])
                + LUMA_WEIGHTS[2] * f64::from(p[2])
        })
        .collect();
    GrayImage {
        width: frame.width,
        height: frame.height,
        values,
    }
}

/// Bilinear resize to an explicit size using half-pixel centres
/// (`src = (dst + 0.5) * in / out - 0.5`) and clamped borders.
pub fn resize_bilinear(img: &GrayImage, out_width: usize, out_height: usize) -> Result<GrayImage> {
    check_dims(out_width, out_height)?;
    let sx = img.width as f64 / out_width as f64;
    let sy = img.height as f64 / out_height as f64;
    let taps = |ratio: f64, i: usize, len: usize| -> (usize, usize, f64) {
        let pos = ((i as f64 + 0.5) * ratio - 0.5).clamp(0.0, (len - 1) as f64);
        let i0 = pos.floor() as usize;
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, pos - i0 as f64)
    };
    let xs: Vec<_> = (0..out_width).map(|x| taps(sx, x, img.width)).collect();
    let mut values = Vec::with_capacity(out_width * out_height);
    for y in 0..out_height {
        let (y0, y1, fy) = taps(sy, y, img.height);
        for &(x0, x1, fx) in &xs {
            let top = img.get(x0, y0) * (1.0 - fx) + img.get(x1, y0) * fx;
            let bottom = img.get(x0, y1) * (1.0 - fx) + img.get(x1, y1) * fx;
            values.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    Ok(GrayImage {
        width: out_width,
        height: out_height,
        values,
    })
}

pub fn upsample_bilinear(img: &GrayImage, factor: usize) -> Result<GrayImage> {
    if factor == 0 {
        return Err(ImagingError::ZeroFactor);
    }
    if factor == 1 {
        return Ok(img.clone());
    }
    resize_bilinear(img, img.width * factor, img.height * factor)
}

/// Block-mean reduction by an integer factor.
pub fn downsample_area(img: &GrayImage, factor: usize) -> Result<GrayImage> {
    if factor == 0 {
        return Err(ImagingError::ZeroFactor);
    }
    if !img.width.is_multiple_of(factor) || !img.height.is_multiple_of(factor) {
        return Err(ImagingError::NotDivisible {
            width: img.width,
            height: img.height,
            factor,
        });
    }
    if factor == 1 {
        return Ok(img.clone());
    }
    let (ow, oh) = (img.width / factor, img.height / factor);
    let mut sums = vec![0.0; ow * oh];
    for y in 0..img.height {
        let row = (y / factor) * ow;
        for x in 0..img.width {
            sums[row + x / factor] += img.get(x, y);
        }
    }
    let norm = (factor * factor) as f64;
    Ok(GrayImage {
        width: ow,
        height: oh,
        values: sums.into_iter().map(|s| s / norm).collect(),
    })
}

/// Resizes to the requested size, using block means when the input is an
/// exact integer multiple of the output and bilinear sampling otherwise.
pub fn resize_to(img: &GrayImage, width: usize, height: usize) -> Result<GrayImage> {
    if img.dims() == (width, height) {
        return Ok(img.clone());
    }
    if width > 0
        && height > 0
        && img.width.is_multiple_of(width)
        && img.height.is_multiple_of(height)
        && img.width / width == img.height / height
    {
        return downsample_area(img, img.width / width);
    }
    resize_bilinear(img, width, height)
}

pub const HISTOGRAM_BINS: usize = 256;

fn bin_index(v: f64, lo: f64, width: f64) -> usize {
    if width <= 0.0 {
        return 0;
    }
    (((v - lo) / width).floor() as usize).min(HISTOGRAM_BINS - 1)
}

/// Monotone remapping of `source` intensities onto the distribution of
/// `reference`.
///
/// Source values are binned into 256 bins spanning the source range. A pixel
/// in bin `k` maps to the smallest reference sample whose empirical CDF
/// reaches the source CDF at `k`, so outputs are always actual reference
/// values. A constant source maps to the reference median.
pub fn histogram_match(source: &GrayImage, reference: &GrayImage) -> GrayImage {
    let mut sorted_ref = reference.values.clone();
    sorted_ref.sort_by(f64::total_cmp);
    let n_ref = sorted_ref.len();
    let n_src = source.values.len();

    let (lo, hi) = source.min_max();
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    if width <= 0.0 {
        let median = sorted_ref[(n_ref - 1) / 2];
        return GrayImage {
            width: source.width,
            height: source.height,
            values: vec![median; n_src],
        };
    }

    let mut counts = [0usize; HISTOGRAM_BINS];
    for &v in &source.values {
        counts[bin_index(v, lo, width)] += 1;
    }
    let mut lut = [0.0; HISTOGRAM_BINS];
    let mut cumulative = 0usize;
    for (k, &c) in counts.iter().enumerate() {
        cumulative += c;
        // smallest j with (j + 1) / n_ref >= cumulative / n_src
        let rank = (cumulative * n_ref).div_ceil(n_src);
        lut[k] = sorted_ref[rank.max(1) - 1];
    }
    GrayImage {
        width: source.width,
        height: source.height,
        values: source
            .values
            .iter()
            .map(|&v| lut[bin_index(v, lo, width)])
            .collect(),
    }
}
