//! Fits a multi-stage Saab transform on 8x8 colour blocks of an image and
//! prints how much block energy the leading coefficients capture.
//!
//! `cargo run --release --example saab_energy [image]`

use std::path::{Path, PathBuf};

use mgbvq::io::read_raw;
use mgbvq::saab::{default_keep_schedule, fit_saab, ContiguousBlocks, SaabFitParams};

fn main() -> mgbvq::Result<()> {
    let input = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("data/test/lena.png"));
    let img = read_raw(&input)?.with_channels(3)?.fit_to(512)?;

    // Every 8x8x3 block on a 4-pixel lattice, mean removed per block.
    let (side, step) = (8, 4);
    let len = img.block_len(side);
    let mut data = Vec::new();
    let mut block = vec![0.0f32; len];
    for y in (0..=img.side() - side).step_by(step) {
        for x in (0..=img.side() - side).step_by(step) {
            img.read_block(y, x, side, &mut block);
            let mean = block.iter().sum::<f32>() / len as f32;
            data.extend(block.iter().map(|v| v - mean));
        }
    }
    let blocks = ContiguousBlocks::new(&data, len)?;
    let keep = default_keep_schedule(3, 3, 64);
    println!("{} blocks, keep schedule {keep:?}", data.len() / len);
    let (t, report) = fit_saab(&blocks, side, 3, &SaabFitParams { keep, max_blocks: 40_000, seed: 1 })?;
    for r in &report.reductions {
        println!("stage {} kept {} of {} requested channels", r.stage, r.kept, r.requested);
    }

    let total: f64 = data.iter().map(|&v| (v as f64).powi(2)).sum();
    let mut captured = vec![0.0f64; t.output_dim()];
    for b in data.chunks_exact(len) {
        for (acc, c) in captured.iter_mut().zip(t.forward(b)?) {
            *acc += (c as f64).powi(2);
        }
    }
    let mut running = 0.0;
    for (i, e) in captured.iter().enumerate() {
        running += e;
        if [1, 2, 4, 8, 16, 32, 64].contains(&(i + 1)) {
            println!("first {:>2} coefficients: {:6.2}% of block energy", i + 1, 100.0 * running / total);
        }
    }
    let back = t.inverse(&t.forward(&data[..len])?)?;
    let err: f32 = back.iter().zip(&data[..len]).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
    println!("projection error of the first block: {err:.3}");
    Ok(())
}
