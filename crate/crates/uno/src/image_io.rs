//! Grayscale image buffers, PGM (P2/P5) and PNG.

use std::path::Path;

use uno_core::pipeline::Crop;

use crate::atomic;
use crate::error::{io_err, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    /// Row-major.
    pixels: Vec<f64>,
    /// Nominal value range, `0..=maxval` for decoded files.
    pub lo: f64,
    pub hi: f64,
    pub source: String,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        Self::with_range(width, height, pixels, 0.0, 255.0, String::new())
    }

    pub fn with_range(
        width: usize,
        height: usize,
        pixels: Vec<f64>,
        lo: f64,
        hi: f64,
        source: String,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Invalid {
                what: "image",
                reason: "dimensions must be positive".into(),
            });
        }
        if pixels.len() != width * height {
            return Err(Error::Invalid {
                what: "image",
                reason: format!("{} pixels for {width}x{height}", pixels.len()),
            });
        }
        if pixels.iter().any(|p| !p.is_finite()) || !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Invalid {
                what: "image",
                reason: "pixels and range must be finite with lo < hi".into(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
            lo,
            hi,
            source,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.pixels.chunks_exact(self.width)
    }

    pub fn crop(&self, c: Crop) -> Result<Self> {
        let fits = c.width > 0
            && c.height > 0
            && c.x.checked_add(c.width).is_some_and(|r| r <= self.width)
            && c.y.checked_add(c.height).is_some_and(|b| b <= self.height);
        if !fits {
            return Err(Error::Invalid {
                what: "crop",
                reason: format!(
                    "{}x{}+{}+{} outside {}x{} image",
                    c.width, c.height, c.x, c.y, self.width, self.height
                ),
            });
        }
        let pixels = (c.y..c.y + c.height)
            .flat_map(|y| self.row(y)[c.x..c.x + c.width].iter().copied())
            .collect();
        Ok(Self {
            width: c.width,
            height: c.height,
            pixels,
            lo: self.lo,
            hi: self.hi,
            source: format!("{}[{}x{}+{}+{}]", self.source, c.width, c.height, c.x, c.y),
        })
    }

    /// `maxval` used when writing: `hi` if it is an integer in `1..=65535`.
    fn maxval(&self) -> u16 {
        if self.lo == 0.0 && self.hi.fract() == 0.0 && (1.0..=65535.0).contains(&self.hi) {
            self.hi as u16
        } else {
            255
        }
    }

    fn quantized(&self, maxval: u16) -> impl Iterator<Item = u16> + '_ {
        let scale = f64::from(maxval) / (self.hi - self.lo);
        let exact = self.lo == 0.0 && f64::from(maxval) == self.hi;
        self.pixels.iter().map(move |&p| {
            let v = if exact { p } else { (p - self.lo) * scale };
            v.round().clamp(0.0, f64::from(maxval)) as u16
        })
    }
}

struct Header {
    binary: bool,
    width: usize,
    height: usize,
    maxval: u16,
    data_start: usize,
}

fn parse_error(offset: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        what: "PGM",
        offset,
        reason: reason.into(),
    }
}

fn skip_space_and_comments(b: &[u8], mut pos: usize) -> usize {
    loop {
        while pos < b.len() && b[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < b.len() && b[pos] == b'#' {
            while pos < b.len() && b[pos] != b'\n' && b[pos] != b'\r' {
                pos += 1;
            }
        } else {
            return pos;
        }
    }
}

/// Reads one unsigned decimal token; returns (value, end).
fn number(b: &[u8], pos: usize, field: &str) -> Result<(u64, usize)> {
    let pos = skip_space_and_comments(b, pos);
    let end = pos + b[pos..].iter().take_while(|c| c.is_ascii_digit()).count();
    if end == pos {
        return Err(if pos >= b.len() {
            parse_error(pos, format!("truncated before {field}"))
        } else {
            parse_error(pos, format!("expected {field}"))
        });
    }
    let text = std::str::from_utf8(&b[pos..end]).expect("digits");
    let v = text
        .parse::<u64>()
        .map_err(|_| parse_error(pos, format!("{field} out of range")))?;
    Ok((v, end))
}

fn header(b: &[u8]) -> Result<Header> {
    if b.len() < 2 {
        return Err(parse_error(b.len(), "truncated magic"));
    }
    let binary = match &b[..2] {
        b"P2" => false,
        b"P5" => true,
        _ => return Err(parse_error(0, "expected P2 or P5")),
    };
    let (width, p) = number(b, 2, "width")?;
    let (height, p) = number(b, p, "height")?;
    let (maxval, p) = number(b, p, "maxval")?;
    if width == 0 || height == 0 {
        return Err(parse_error(p, "zero dimension"));
    }
    if !(1..=65535).contains(&maxval) {
        return Err(parse_error(p, format!("maxval {maxval} not in 1..=65535")));
    }
    let data_start = if binary {
        if p >= b.len() || !b[p].is_ascii_whitespace() {
            return Err(parse_error(p, "expected one whitespace byte before raster"));
        }
        p + 1
    } else {
        p
    };
    Ok(Header {
        binary,
        width: width as usize,
        height: height as usize,
        maxval: maxval as u16,
        data_start,
    })
}

pub fn decode_pgm(b: &[u8], source: &str) -> Result<ImageBuffer> {
    let h = header(b)?;
    let count = h
        .width
        .checked_mul(h.height)
        .ok_or_else(|| parse_error(0, "dimensions overflow"))?;
    let mut pixels = Vec::with_capacity(count);
    if h.binary {
        let bpp = if h.maxval > 255 { 2 } else { 1 };
        let need = count * bpp;
        let have = b.len() - h.data_start;
        if have < need {
            return Err(parse_error(
                b.len(),
                format!("truncated raster: need {need} bytes, found {have}"),
            ));
        }
        let raster = &b[h.data_start..h.data_start + need];
        if bpp == 1 {
            pixels.extend(raster.iter().map(|&v| f64::from(v)));
        } else {
            pixels.extend(
                raster
                    .chunks_exact(2)
                    .map(|c| f64::from(u16::from_be_bytes([c[0], c[1]]))),
            );
        }
        if let Some(i) = pixels.iter().position(|&v| v > f64::from(h.maxval)) {
            return Err(parse_error(h.data_start + i * bpp, "sample exceeds maxval"));
        }
    } else {
        let mut pos = h.data_start;
        for _ in 0..count {
            let (v, end) = number(b, pos, "sample")?;
            if v > u64::from(h.maxval) {
                return Err(parse_error(pos, "sample exceeds maxval"));
            }
            pixels.push(v as f64);
            pos = end;
        }
    }
    ImageBuffer::with_range(h.width, h.height, pixels, 0.0, f64::from(h.maxval), source.to_string())
}

/// Binary PGM with a minimal header. Pixels are mapped from `[lo, hi]` to
/// `0..=maxval`, rounded and clamped; integer images with `lo = 0` are
/// written unchanged.
pub fn encode_pgm(img: &ImageBuffer) -> Vec<u8> {
    let maxval = img.maxval();
    let mut out = format!("P5\n{} {}\n{}\n", img.width, img.height, maxval).into_bytes();
    if maxval > 255 {
        for v in img.quantized(maxval) {
            out.extend_from_slice(&v.to_be_bytes());
        }
    } else {
        out.extend(img.quantized(maxval).map(|v| v as u8));
    }
    out
}

/// Plain (ASCII) PGM, lines at most 70 characters.
pub fn encode_pgm_ascii(img: &ImageBuffer) -> Vec<u8> {
    let maxval = img.maxval();
    let mut out = format!("P2\n{} {}\n{}\n", img.width, img.height, maxval);
    let values: Vec<u16> = img.quantized(maxval).collect();
    for row in values.chunks(img.width) {
        let mut line = String::new();
        for v in row {
            let s = v.to_string();
            if !line.is_empty() && line.len() + 1 + s.len() > 70 {
                out.push_str(&line);
                out.push('\n');
                line.clear();
            }
            if !line.is_empty() {
                line.push(' ');
            }
            line.push_str(&s);
        }
        out.push_str(&line);
        out.push('\n');
    }
    out.into_bytes()
}

fn decode_png(bytes: &[u8], source: &str) -> Result<ImageBuffer> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let wide = matches!(
        img.color(),
        image::ColorType::L16 | image::ColorType::La16 | image::ColorType::Rgb16 | image::ColorType::Rgba16
    );
    if wide {
        let luma = img.into_luma16();
        let pixels = luma.into_raw().into_iter().map(f64::from).collect();
        ImageBuffer::with_range(w, h, pixels, 0.0, 65535.0, source.to_string())
    } else if matches!(
        img.color(),
        image::ColorType::L8 | image::ColorType::La8 | image::ColorType::Rgb8 | image::ColorType::Rgba8
    ) {
        let luma = img.into_luma8();
        let pixels = luma.into_raw().into_iter().map(f64::from).collect();
        ImageBuffer::with_range(w, h, pixels, 0.0, 255.0, source.to_string())
    } else {
        Err(Error::Unsupported(format!("PNG color type {:?}", img.color())))
    }
}

fn encode_png(img: &ImageBuffer) -> Result<Vec<u8>> {
    let maxval = img.maxval();
    let (w, h) = (img.width as u32, img.height as u32);
    let mut out = std::io::Cursor::new(Vec::new());
    if maxval > 255 {
        let scale = 65535.0 / f64::from(maxval);
        let raw: Vec<u16> = img
            .quantized(maxval)
            .map(|v| (f64::from(v) * scale).round() as u16)
            .collect();
        let buf = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(w, h, raw).expect("size matches");
        buf.write_to(&mut out, image::ImageFormat::Png)?;
    } else {
        let scale = 255.0 / f64::from(maxval);
        let raw: Vec<u8> = img
            .quantized(maxval)
            .map(|v| (f64::from(v) * scale).round() as u8)
            .collect();
        let buf = image::GrayImage::from_raw(w, h, raw).expect("size matches");
        buf.write_to(&mut out, image::ImageFormat::Png)?;
    }
    Ok(out.into_inner())
}

const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

/// Decodes PGM or PNG by content.
pub fn decode_image(bytes: &[u8], source: &str) -> Result<ImageBuffer> {
    if bytes.starts_with(PNG_SIGNATURE) {
        decode_png(bytes, source)
    } else if bytes.starts_with(b"P") {
        decode_pgm(bytes, source)
    } else {
        Err(Error::Unsupported("image format (expected PGM or PNG)".into()))
    }
}

pub fn load_image(path: &Path) -> Result<ImageBuffer> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    decode_image(&bytes, &path.display().to_string())
}

/// Writes PNG for a `.png` extension and binary PGM otherwise.
pub fn save_image(img: &ImageBuffer, path: &Path) -> Result<()> {
    let is_png = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let bytes = if is_png { encode_png(img)? } else { encode_pgm(img) };
    atomic::write_bytes(path, &bytes)
}
