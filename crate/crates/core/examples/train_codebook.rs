//! Trains 4x4 codebooks of several sizes on the finest AC layer of an
//! image and shows the distortion curve of each k-means run.
//!
//! `cargo run --release --example train_codebook [image]`

use std::path::{Path, PathBuf};

use mgbvq::io::read_raw;
use mgbvq::kmeans::KMeansParams;
use mgbvq::pyramid::forward_decompose;
use mgbvq::vq::{train_codebook, Space};

fn main() -> mgbvq::Result<()> {
    let input = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("data/test/lena.png"));
    let img = read_raw(&input)?.with_channels(3)?.fit_to(256)?;
    let pyr = forward_decompose(&img, 2)?;
    let ac = pyr.ac(8).expect("finest AC layer");

    let side = 4;
    let len = ac.block_len(side);
    let mut samples = Vec::new();
    let mut block = vec![0.0f32; len];
    for y in (0..ac.side()).step_by(side) {
        for x in (0..ac.side()).step_by(side) {
            ac.read_block(y, x, side, &mut block);
            samples.extend_from_slice(&block);
        }
    }
    let n = samples.len() / len;
    let energy = ac.mean_square() * len as f64;
    println!("{n} blocks of {len} samples, mean block energy {energy:.1}");

    for k in [8, 32, 128] {
        let params = KMeansParams {
            max_iters: 30,
            ..KMeansParams::new(k, 7)
        };
        let (book, run) = train_codebook(8, 2, 3, Space::Spatial, &samples, k, &params)?;
        let run = run.expect("k > 1 trains centroids");
        let curve: Vec<String> = run
            .distortion
            .iter()
            .step_by(5)
            .map(|d| format!("{:.1}", d / n as f64))
            .collect();
        println!(
            "k = {k:>3}: {} codewords, {} iterations, per-block distortion {}",
            book.len(),
            run.iterations,
            curve.join(" > ")
        );
    }
    Ok(())
}
