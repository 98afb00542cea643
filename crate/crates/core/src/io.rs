//! Image files (binary PPM/PGM and PNG) and corpus preparation.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use crate::error::{invalid, Error, Result};
use crate::image::Image;
use crate::pyramid::lanczos_downsample;
use crate::train::U8Corpus;

/// An 8-bit image of any size, channels interleaved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub samples: Vec<u8>,
}

impl RawImage {
    pub fn new(width: usize, height: usize, channels: usize, samples: Vec<u8>) -> Result<RawImage> {
        if channels != 1 && channels != 3 {
            return Err(invalid(format!("unsupported channel count {channels}")));
        }
        if samples.len() != width * height * channels {
            return Err(invalid("sample count does not match image size"));
        }
        Ok(RawImage {
            width,
            height,
            channels,
            samples,
        })
    }

    /// Same picture with `channels` channels (gray is replicated).
    pub fn with_channels(&self, channels: usize) -> Result<RawImage> {
        match (self.channels, channels) {
            (a, b) if a == b => Ok(self.clone()),
            (1, 3) => RawImage::new(
                self.width,
                self.height,
                3,
                self.samples.iter().flat_map(|&v| [v, v, v]).collect(),
            ),
            (3, 1) => RawImage::new(
                self.width,
                self.height,
                1,
                self.samples
                    .chunks_exact(3)
                    .map(|p| ((p[0] as u32 * 299 + p[1] as u32 * 587 + p[2] as u32 * 114 + 500) / 1000) as u8)
                    .collect(),
            ),
            _ => Err(invalid(format!("cannot convert {} to {channels} channels", self.channels))),
        }
    }

    /// The `side x side` square whose top-left corner is `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, side: usize) -> Result<Image> {
        if x + side > self.width || y + side > self.height {
            return Err(invalid("crop window leaves the image"));
        }
        let ch = self.channels;
        Image::from_fn(side, ch, |c, r, col| {
            self.samples[((y + r) * self.width + x + col) * ch + c] as f32
        })
    }

    /// Centre crop to the largest power-of-two square, at least `min_side`.
    pub fn center_crop_pow2(&self, min_side: usize) -> Result<Image> {
        let short = self.width.min(self.height);
        if short == 0 {
            return Err(invalid("empty image"));
        }
        let side = 1usize << (usize::BITS - 1 - short.leading_zeros());
        if side < min_side {
            return Err(invalid(format!(
                "{}x{} image crops to {side}x{side}, below the {min_side}x{min_side} minimum",
                self.width, self.height
            )));
        }
        if side != self.width || side != self.height {
            log::warn!(
                "center-cropping {}x{} input to {side}x{side}",
                self.width,
                self.height
            );
        }
        self.crop((self.width - side) / 2, (self.height - side) / 2, side)
    }

    /// Centre crop, then halve with the codec's Lanczos filter down to `side`.
    pub fn fit_to(&self, side: usize) -> Result<Image> {
        let mut img = self.center_crop_pow2(side)?;
        while img.side() > side {
            img = lanczos_downsample(&img)?.quantized_u8();
        }
        Ok(img)
    }

    /// All `side x side` crops on a `stride` lattice, raster order.
    pub fn tiles(&self, side: usize, stride: usize) -> Result<Vec<Image>> {
        if stride == 0 {
            return Err(invalid("tile stride must be positive"));
        }
        let mut out = Vec::new();
        if self.width < side || self.height < side {
            return Ok(out);
        }
        for y in (0..=self.height - side).step_by(stride) {
            for x in (0..=self.width - side).step_by(stride) {
                out.push(self.crop(x, y, side)?);
            }
        }
        Ok(out)
    }
}

/// One of the eight rotations/reflections of a square image.
pub fn dihedral(img: &Image, k: usize) -> Image {
    let s = img.side();
    let m = s - 1;
    Image::from_fn(s, img.channels(), |c, y, x| {
        let (sy, sx) = match k % 8 {
            0 => (y, x),
            1 => (y, m - x),
            2 => (m - y, x),
            3 => (m - y, m - x),
            4 => (x, y),
            5 => (x, m - y),
            6 => (m - x, y),
            _ => (m - x, m - y),
        };
        img.get(c, sy, sx)
    })
    .expect("same shape")
}

fn skip_ws_and_comments(b: &[u8], mut i: usize) -> usize {
    loop {
        while i < b.len() && b[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < b.len() && b[i] == b'#' {
            while i < b.len() && b[i] != b'\n' {
                i += 1;
            }
        } else {
            return i;
        }
    }
}

fn header_number(b: &[u8], i: &mut usize) -> Result<usize> {
    *i = skip_ws_and_comments(b, *i);
    let start = *i;
    while *i < b.len() && b[*i].is_ascii_digit() {
        *i += 1;
    }
    std::str::from_utf8(&b[start..*i])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format("malformed PNM header".into()))
}

/// Binary PPM (`P6`) or PGM (`P5`) with maxval 255.
pub fn decode_pnm(bytes: &[u8]) -> Result<RawImage> {
    let channels = match bytes.get(..2) {
        Some(b"P6") => 3,
        Some(b"P5") => 1,
        _ => return Err(Error::Format("not a binary PPM/PGM file".into())),
    };
    let mut i = 2;
    let width = header_number(bytes, &mut i)?;
    let height = header_number(bytes, &mut i)?;
    let maxval = header_number(bytes, &mut i)?;
    if maxval != 255 {
        return Err(Error::Format(format!("only 8-bit PNM is supported (maxval {maxval})")));
    }
    if bytes.get(i).is_none_or(|b| !b.is_ascii_whitespace()) {
        return Err(Error::Format("malformed PNM header".into()));
    }
    i += 1;
    let n = width * height * channels;
    let data = bytes
        .get(i..i + n)
        .ok_or_else(|| Error::Format("PNM pixel data truncated".into()))?;
    RawImage::new(width, height, channels, data.to_vec())
}

pub fn encode_pnm(img: &Image) -> Vec<u8> {
    let magic = if img.channels() == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.side(), img.side()).into_bytes();
    out.extend(img.to_interleaved_u8());
    out
}

pub fn decode_png(bytes: &[u8]) -> Result<RawImage> {
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = dec.read_info().map_err(|e| Error::Format(format!("PNG: {e}")))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Format("PNG too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Format(format!("PNG: {e}")))?;
    buf.truncate(info.buffer_size());
    let (w, h) = (info.width as usize, info.height as usize);
    let samples: Vec<u8> = match info.color_type {
        png::ColorType::Grayscale => buf,
        png::ColorType::Rgb => buf,
        png::ColorType::GrayscaleAlpha => buf.chunks_exact(2).map(|p| p[0]).collect(),
        png::ColorType::Rgba => buf.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        png::ColorType::Indexed => return Err(Error::Format("unexpanded palette PNG".into())),
    };
    let channels = samples.len() / (w * h).max(1);
    RawImage::new(w, h, channels, samples)
}

pub fn encode_png(img: &Image) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let side = img.side() as u32;
        let mut enc = png::Encoder::new(&mut out, side, side);
        enc.set_color(if img.channels() == 3 {
            png::ColorType::Rgb
        } else {
            png::ColorType::Grayscale
        });
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc
            .write_header()
            .map_err(|e| Error::Format(format!("PNG: {e}")))?;
        w.write_image_data(&img.to_interleaved_u8())
            .map_err(|e| Error::Format(format!("PNG: {e}")))?;
    }
    Ok(out)
}

/// Reads a PPM, PGM or PNG file, sniffing the format from its content.
pub fn read_raw(path: &Path) -> Result<RawImage> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(b"\x89PNG") {
        decode_png(&bytes)
    } else {
        decode_pnm(&bytes)
    }
}

/// Reads an image and centre-crops it to a power-of-two square.
pub fn read_image(path: &Path, min_side: usize) -> Result<Image> {
    read_raw(path)?.center_crop_pow2(min_side)
}

/// Writes PNG for a `.png` extension, PPM/PGM otherwise.
pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    let is_png = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let bytes = if is_png { encode_png(img)? } else { encode_pnm(img) };
    fs::write(path, bytes)?;
    Ok(())
}

/// Image files (`.png`, `.ppm`, `.pgm`, `.pnm`) in `dir`, sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "ppm" | "pgm" | "pnm"))
        })
        .collect();
    out.sort();
    Ok(out)
}

/// How a directory of pictures becomes training images.
#[derive(Clone, Debug)]
pub struct CorpusOptions {
    pub side: usize,
    pub channels: usize,
    pub stride: usize,
    /// Number of dihedral variants per crop, 1 to 8.
    pub augment: usize,
}

impl CorpusOptions {
    pub fn new(side: usize, channels: usize) -> Self {
        CorpusOptions {
            side,
            channels,
            stride: side / 4,
            augment: 4,
        }
    }
}

pub fn load_corpus(dir: &Path, opts: &CorpusOptions) -> Result<U8Corpus> {
    if !(1..=8).contains(&opts.augment) {
        return Err(invalid("augment must be between 1 and 8"));
    }
    let mut corpus = U8Corpus::new(opts.side, opts.channels);
    for path in list_images(dir)? {
        let raw = read_raw(&path)?.with_channels(opts.channels)?;
        let tiles = raw.tiles(opts.side, opts.stride)?;
        log::debug!("{}: {} crops", path.display(), tiles.len());
        for t in &tiles {
            for k in 0..opts.augment {
                corpus.push(&dihedral(t, k))?;
            }
        }
    }
    Ok(corpus)
}
