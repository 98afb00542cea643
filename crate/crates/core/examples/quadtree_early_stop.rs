//! Encodes one picture at several early-termination thresholds and shows
//! how many blocks each level still codes and what that costs.
//!
//! `cargo run --release --example quadtree_early_stop [model]`

#[path = "common/mod.rs"]
mod common;

use mgbvq::bitstream::bit_accounting;
use mgbvq::encode_with_report;
use mgbvq::ratecontrol::psnr;

fn main() -> mgbvq::Result<()> {
    let model = common::model_from_args()?;
    let img = common::test_image(&model, "lena.png")?;
    let finest = model.config().finest;
    let exps = model.grid_exps(finest);

    println!("{:>6} {:>8} {:>8}  finest-grid blocks coded per level {exps:?}", "mseth", "bpp", "psnr");
    for mseth in [0.0, 10.0, 30.0, 70.0, 200.0] {
        let m = model.with_mseth(mseth)?;
        let report = encode_with_report(&m, &img)?;
        let quality = psnr(img.mse(&report.recon.quantized_u8())?);
        let last = report.grids.last().expect("at least one AC grid");
        println!("{mseth:>6.0} {:>8.4} {quality:>8.2}  {:?}", report.bpp(), last.coded);

        let acc = bit_accounting(&report.stream, &m)?;
        let m_small = *exps.last().expect("grid has cells");
        let count = *last.coded.last().unwrap_or(&0) as f64;
        let k = m.codebook(finest, m_small).expect("cell exists").len() as f64;
        let coded = acc.cell_bits(finest, m_small).unwrap_or(0) as f64;
        println!(
            "{:>24}  smallest blocks: {:.4} bpp entropy-coded vs {:.4} bpp fixed-length",
            "",
            acc.bpp(coded as u64),
            count * k.log2().ceil() / acc.pixels() as f64
        );
    }
    Ok(())
}
