//! Trains the 256x256 profile on the bundled corpus and reports the
//! rate-distortion point of Lena for each codeword count of the finest
//! 8x8 cell.
//!
//! `cargo run --release --example rd_bench`

use std::path::Path;
use std::time::Instant;

use mgbvq::bitstream::bit_accounting;
use mgbvq::config::{Config, SWEEP_CODEWORDS};
use mgbvq::io::{load_corpus, read_raw, CorpusOptions};
use mgbvq::ratecontrol::psnr;
use mgbvq::{decode, encode, train_model_sweep};

fn main() -> mgbvq::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let t = Instant::now();
    let corpus = load_corpus(&data.join("train"), &CorpusOptions::new(256, 3))?;
    println!("corpus: {} images ({:.1}s)", mgbvq::train::ImageSource::count(&corpus), t.elapsed().as_secs_f64());
    let lena = read_raw(&data.join("test/lena.png"))?.fit_to(256)?;

    let t = Instant::now();
    let models = train_model_sweep(&corpus, &Config::reference_256(64), &SWEEP_CODEWORDS)?;
    println!("trained {} models in {:.1}s", models.len(), t.elapsed().as_secs_f64());
    for (model, _) in &models {
        let bytes = encode(model, &lena)?;
        let out = decode(model, &bytes, None)?;
        let acc = bit_accounting(&bytes, model)?;
        let k = model.config().cells[&(8, 3)].codewords;
        println!("C_8,3 = {k:>3}: {:.4} bpp, {:.2} dB", acc.total_bpp(), psnr(lena.mse(&out)?));
    }
    let (model, _) = &models[3];
    println!("{}", bit_accounting(&encode(model, &lena)?, model)?.to_table());
    Ok(())
}
