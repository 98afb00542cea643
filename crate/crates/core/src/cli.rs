//! File-level commands behind the `mgbvq` binary.

use std::fs;
use std::path::{Path, PathBuf};

use crate::bench::{load_test_images, run_bench, BenchReport};
use crate::bitstream::{bit_accounting, BitAccounting};
use crate::codec::{decode, encode_with_report};
use crate::config::Config;
use crate::error::{invalid, Result};
use crate::image::Image;
use crate::io::{load_corpus, read_raw, write_image, CorpusOptions};
use crate::model::Model;
use crate::ratecontrol::psnr;
use crate::train::{train_model_with_report, ImageSource, TrainReport};

/// Reads an image and brings it to the model's geometry: channel
/// replication or averaging, centre crop, then Lanczos halving.
pub fn load_for_model(path: &Path, model: &Model) -> Result<Image> {
    let c = model.config();
    read_raw(path)?.with_channels(c.channels)?.fit_to(1 << c.finest)
}

pub fn cmd_train(corpus_dir: &Path, config_path: &Path, model_out: &Path, seed: Option<u64>) -> Result<TrainReport> {
    let mut config = Config::parse(&fs::read_to_string(config_path)?)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let corpus = load_corpus(corpus_dir, &CorpusOptions::new(1 << config.finest, config.channels))?;
    if corpus.count() == 0 {
        return Err(invalid(format!(
            "no {0}x{0} crops found in {1}",
            1usize << config.finest,
            corpus_dir.display()
        )));
    }
    log::info!("training on {} images", corpus.count());
    let (model, report) = train_model_with_report(&corpus, &config)?;
    model.save(model_out)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncodeSummary {
    pub bytes: usize,
    pub bpp: f64,
    pub psnr: f64,
}

pub fn cmd_encode(model_path: &Path, image_in: &Path, stream_out: &Path) -> Result<EncodeSummary> {
    let model = Model::load(model_path)?;
    let img = load_for_model(image_in, &model)?;
    let report = encode_with_report(&model, &img)?;
    fs::write(stream_out, &report.stream)?;
    Ok(EncodeSummary {
        bytes: report.stream.len(),
        bpp: report.bpp(),
        psnr: psnr(img.mse(&report.recon.quantized_u8())?),
    })
}

pub fn cmd_decode(model_path: &Path, stream_in: &Path, image_out: &Path, max_grid: Option<u8>) -> Result<Image> {
    let model = Model::load(model_path)?;
    let bytes = fs::read(stream_in)?;
    let img = decode(&model, &bytes, max_grid)?;
    write_image(image_out, &img)?;
    Ok(img)
}

/// Bit accounting of a stream, laid out as a grid-by-block-size table.
pub fn cmd_stats(model_path: &Path, stream_in: &Path) -> Result<BitAccounting> {
    let model = Model::load(model_path)?;
    let bytes = fs::read(stream_in)?;
    bit_accounting(&bytes, &model)
}

/// Benchmarks every model over the images in `test_dir`. Models are
/// labelled by file stem and must share one geometry.
pub fn cmd_bench(models: &[PathBuf], test_dir: &Path, csv_out: Option<&Path>, timing: bool) -> Result<BenchReport> {
    let loaded = models
        .iter()
        .map(|p| {
            let id = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok((id, Model::load(p)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let Some((_, first)) = loaded.first() else {
        return Err(invalid("no models given"));
    };
    let (finest, channels) = (first.config().finest, first.config().channels);
    if loaded
        .iter()
        .any(|(_, m)| m.config().finest != finest || m.config().channels != channels)
    {
        return Err(invalid("benchmarked models must share image size and channel count"));
    }
    let images = load_test_images(test_dir, 1 << finest, channels)?;
    if images.is_empty() {
        return Err(invalid(format!("no images in {}", test_dir.display())));
    }
    let report = run_bench(&loaded, &images, timing)?;
    if let Some(path) = csv_out {
        report.write_csv(fs::File::create(path)?)?;
    }
    Ok(report)
}
