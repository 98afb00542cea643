//! Rate-distortion benchmark over a set of models and test images.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::bitstream::HEADER_LEN;
use crate::codec::{decode, encode};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::io::{list_images, read_raw};
use crate::model::Model;
use crate::ratecontrol::psnr;

pub const CSV_HEADER: [&str; 6] = ["image_id", "config_id", "bpp", "psnr", "encode_ms", "decode_ms"];

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub image_id: String,
    pub config_id: String,
    pub bpp: f64,
    pub psnr: f64,
    pub encode_ms: Option<f64>,
    pub decode_ms: Option<f64>,
}

/// Per-configuration averages.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchMean {
    pub config_id: String,
    pub images: usize,
    pub bpp: f64,
    pub psnr: f64,
    pub encode_ms: Option<f64>,
    pub decode_ms: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchReport {
    /// Sorted by image id, then config id.
    pub rows: Vec<BenchRow>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n.max(1) as f64
}

impl BenchReport {
    pub fn means(&self) -> Vec<BenchMean> {
        let mut ids: Vec<&str> = self.rows.iter().map(|r| r.config_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.into_iter()
            .map(|id| {
                let rows: Vec<&BenchRow> = self.rows.iter().filter(|r| r.config_id == id).collect();
                let timed = |f: fn(&BenchRow) -> Option<f64>| -> Option<f64> {
                    let v: Option<Vec<f64>> = rows.iter().map(|r| f(r)).collect();
                    v.map(|v| mean(v.into_iter()))
                };
                BenchMean {
                    config_id: id.to_string(),
                    images: rows.len(),
                    bpp: mean(rows.iter().map(|r| r.bpp)),
                    psnr: mean(rows.iter().map(|r| r.psnr)),
                    encode_ms: timed(|r| r.encode_ms),
                    decode_ms: timed(|r| r.decode_ms),
                }
            })
            .collect()
    }

    /// CSV with a header row and LF line endings. Timing cells are empty
    /// when timing was off.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        let fmt_ms = |v: Option<f64>| v.map(|v| format!("{v:.3}")).unwrap_or_default();
        let csv_err = |e: csv::Error| Error::Format(format!("csv: {e}"));
        w.write_record(CSV_HEADER).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.image_id.clone(),
                r.config_id.clone(),
                format!("{:.6}", r.bpp),
                format!("{:.4}", r.psnr),
                fmt_ms(r.encode_ms),
                fmt_ms(r.decode_ms),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn summary(&self) -> String {
        let mut s = format!("{:<16} {:>6} {:>9} {:>8} {:>10} {:>10}\n", "config", "images", "bpp", "psnr", "enc ms", "dec ms");
        let ms = |v: Option<f64>| v.map(|v| format!("{v:.1}")).unwrap_or_else(|| "-".into());
        for m in self.means() {
            s += &format!(
                "{:<16} {:>6} {:>9.4} {:>8.2} {:>10} {:>10}\n",
                m.config_id,
                m.images,
                m.bpp,
                m.psnr,
                ms(m.encode_ms),
                ms(m.decode_ms)
            );
        }
        s
    }
}

/// Encodes and decodes every image with every model. Rate comes from the
/// stream length and quality from the decoded image, so both reflect the
/// artifacts rather than encoder bookkeeping.
pub fn run_bench(models: &[(String, Model)], images: &[(String, Image)], timing: bool) -> Result<BenchReport> {
    let jobs: Vec<(&(String, Image), &(String, Model))> =
        images.iter().flat_map(|img| models.iter().map(move |m| (img, m))).collect();
    let mut rows = jobs
        .par_iter()
        .map(|((image_id, img), (config_id, model))| {
            let t = Instant::now();
            let stream = encode(model, img)?;
            let enc = t.elapsed();
            let t = Instant::now();
            let out = decode(model, &stream, None)?;
            let dec = t.elapsed();
            let pixels = (img.side() * img.side()) as f64;
            let row = BenchRow {
                image_id: image_id.clone(),
                config_id: config_id.clone(),
                bpp: 8.0 * (stream.len() - HEADER_LEN) as f64 / pixels,
                psnr: psnr(img.mse(&out)?),
                encode_ms: timing.then_some(enc.as_secs_f64() * 1e3),
                decode_ms: timing.then_some(dec.as_secs_f64() * 1e3),
            };
            log::debug!("{image_id} / {config_id}: {:.4} bpp, {:.2} dB", row.bpp, row.psnr);
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| (&a.image_id, &a.config_id).cmp(&(&b.image_id, &b.config_id)));
    Ok(BenchReport { rows })
}

/// Every image in `dir`, centre-cropped and halved down to `side`, keyed by
/// file stem.
pub fn load_test_images(dir: &Path, side: usize, channels: usize) -> Result<Vec<(String, Image)>> {
    list_images(dir)?
        .into_iter()
        .map(|path| {
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let img = read_raw(&path)?.with_channels(channels)?.fit_to(side)?;
            Ok((id, img))
        })
        .collect()
}
