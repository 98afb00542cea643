//! Encode and decode pipelines.
//!
//! Grids are coded coarse to fine. With feedback enabled the coding target
//! at grid `n` is `I_n - U(iDC_{n-1})`, which equals the grid's AC plus the
//! upsampled reconstruction error of the grid below. The decoder mirrors
//! the encoder's reconstruction `iDC_n = U(iDC_{n-1}) + decode_grid(code)`
//! operation for operation.

use crate::bitstream::{
    check_model, decode_section, encode_section, parse_stream, write_stream, SectionBits, StreamHeader,
};
use crate::error::{invalid, Result};
use crate::image::Image;
use crate::model::Model;
use crate::pyramid::{downsample_chain, lanczos_upsample, upsample_to};
use crate::ratecontrol::RDPoint;
use crate::vq::{decode_grid, encode_grid};

/// Per-grid encoder statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct GridReport {
    pub grid: u8,
    /// Mean square of the coding target.
    pub target_ms: f64,
    /// Mean square of the grid's reconstruction error `R_n`.
    pub residual_ms: f64,
    /// Indices coded per level, largest block first.
    pub coded: Vec<usize>,
    pub flags: usize,
}

#[derive(Clone, Debug)]
pub struct EncodeReport {
    pub stream: Vec<u8>,
    pub sections: Vec<SectionBits>,
    pub grids: Vec<GridReport>,
    /// Encoder-side reconstruction at the finest grid, unclamped.
    pub recon: Image,
    pub dc_bits: u64,
}

impl EncodeReport {
    pub fn payload_bits(&self) -> u64 {
        self.dc_bits + self.sections.iter().map(SectionBits::total).sum::<u64>()
    }

    pub fn bpp(&self) -> f64 {
        self.payload_bits() as f64 / (self.recon.side() * self.recon.side()) as f64
    }
}

fn check_input(model: &Model, img: &Image) -> Result<()> {
    let c = model.config();
    if img.side() != 1 << c.finest || img.channels() != c.channels {
        return Err(invalid(format!(
            "image is {0}x{0}x{1}, model expects {2}x{2}x{3}",
            img.side(),
            img.channels(),
            1usize << c.finest,
            c.channels
        )));
    }
    Ok(())
}

pub fn encode(model: &Model, img: &Image) -> Result<Vec<u8>> {
    Ok(encode_with_report(model, img)?.stream)
}

pub fn encode_with_report(model: &Model, img: &Image) -> Result<EncodeReport> {
    check_input(model, img)?;
    let cfg = model.config();
    let chain = downsample_chain(img, cfg.dc_grid)?;
    let dc_bytes = chain[0].to_interleaved_u8();
    let mut idc = Image::from_interleaved_u8(chain[0].side(), cfg.channels, &dc_bytes)?;
    let mut sections = Vec::new();
    let mut bits = Vec::new();
    let mut grids = Vec::new();
    for (step, n) in cfg.ac_grids().enumerate() {
        let fine = &chain[step + 1];
        let up = lanczos_upsample(&idc)?;
        let target = if cfg.feedback {
            let t = fine.sub(&up)?;
            debug_assert!({
                let ac = fine.sub(&lanczos_upsample(&chain[step])?)?;
                let fed = ac.add(&lanczos_upsample(&chain[step].sub(&idc)?)?)?;
                fed.max_abs_diff(&t)? < 1e-2
            });
            t
        } else {
            fine.sub(&lanczos_upsample(&chain[step])?)?
        };
        let books = model.grid_books(n);
        let enc = encode_grid(&target, &books, &model.grid_thresholds(n))?;
        let (section, sbits) = encode_section(&enc.code, &model.grid_tables(n), &model.grid_exps(n))?;
        idc = up.add(&enc.recon)?;
        let residual_ms = fine.mse(&idc)?;
        log::debug!(
            "G_{n}: target ms {:.3}, residual ms {residual_ms:.3}, {} bits",
            target.mean_square(),
            sbits.total()
        );
        grids.push(GridReport {
            grid: n,
            target_ms: target.mean_square(),
            residual_ms,
            coded: enc.code.indices.iter().map(Vec::len).collect(),
            flags: enc.code.tree.total_flags(),
        });
        sections.push(section);
        bits.push(sbits);
    }
    let header = StreamHeader {
        finest: cfg.finest,
        dc_grid: cfg.dc_grid,
        channels: cfg.channels as u8,
        model_id: model.id(),
    };
    let stream = write_stream(&header, &dc_bytes, &sections)?;
    Ok(EncodeReport {
        stream,
        sections: bits,
        grids,
        recon: idc,
        dc_bits: 8 * dc_bytes.len() as u64,
    })
}

/// Reconstruction at grid `max_grid` (all present sections when `None`),
/// upsampled to the finest grid, unclamped.
pub fn decode_float(model: &Model, bytes: &[u8], max_grid: Option<u8>) -> Result<Image> {
    let parsed = parse_stream(bytes)?;
    check_model(&parsed.header, model)?;
    let cfg = model.config();
    let limit = max_grid.unwrap_or(cfg.finest);
    if limit < cfg.dc_grid || limit > cfg.finest {
        return Err(invalid(format!(
            "max grid {limit} outside [{}, {}]",
            cfg.dc_grid, cfg.finest
        )));
    }
    let mut idc = Image::from_interleaved_u8(1 << cfg.dc_grid, cfg.channels, parsed.dc)?;
    for &(n, body) in &parsed.sections {
        if n > limit {
            break;
        }
        let books = model.grid_books(n);
        let (code, _) = decode_section(n, body, &model.grid_tables(n), &model.grid_exps(n), 1 << n)?;
        let recon = decode_grid(&code, &books)?;
        idc = lanczos_upsample(&idc)?.add(&recon)?;
    }
    upsample_to(&idc, 1 << cfg.finest)
}

/// Decoded image with samples rounded and clamped to `[0, 255]`.
pub fn decode(model: &Model, bytes: &[u8], max_grid: Option<u8>) -> Result<Image> {
    Ok(decode_float(model, bytes, max_grid)?.quantized_u8())
}

/// One rate-distortion point per decodable grid depth.
pub fn progressive_rd(model: &Model, img: &Image, bytes: &[u8]) -> Result<Vec<(u8, RDPoint)>> {
    let parsed = parse_stream(bytes)?;
    check_model(&parsed.header, model)?;
    let cfg = model.config();
    let pixels = (1u64 << (2 * cfg.finest)) as f64;
    let mut bits = 8 * parsed.dc.len() as u64;
    let mut out = Vec::new();
    let dc_img = decode(model, bytes, Some(cfg.dc_grid))?;
    out.push((cfg.dc_grid, RDPoint::new(bits as f64 / pixels, img.mse(&dc_img)?)));
    for &(n, body) in &parsed.sections {
        bits += 8 * (body.len() + crate::bitstream::SECTION_FRAMING) as u64;
        let dec = decode(model, bytes, Some(n))?;
        out.push((n, RDPoint::new(bits as f64 / pixels, img.mse(&dec)?)));
    }
    Ok(out)
}
