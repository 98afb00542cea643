//! Splits an image into a DC thumbnail and per-grid AC layers, reports the
//! energy of each layer and checks that the pyramid reconstructs exactly.
//!
//! `cargo run --release --example pyramid_decompose [image] [out-dir]`

use std::path::{Path, PathBuf};

use mgbvq::io::{read_raw, write_image};
use mgbvq::pyramid::{forward_decompose, reconstruct_pyramid, upsample_to};

fn main() -> mgbvq::Result<()> {
    let mut args = std::env::args().skip(1);
    let input = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("data/test/lena.png"));
    let out_dir = args.next().map(PathBuf::from);
    let img = read_raw(&input)?.fit_to(256)?;

    let pyr = forward_decompose(&img, 2)?;
    println!("DC: {0}x{0}, mean square {1:.1}", pyr.dc().side(), pyr.dc().mean_square());
    for n in pyr.n_dc() + 1..=pyr.n_top() {
        let ac = pyr.ac(n).expect("grid in range");
        println!("AC G_{n}: {0:>3}x{0:<3} mean square {1:>9.3}", ac.side(), ac.mean_square());
    }
    let back = reconstruct_pyramid(&pyr, pyr.n_top())?;
    println!("max reconstruction error: {:.2e}", back.max_abs_diff(&img)?);

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(&dir)?;
        for n in pyr.n_dc()..=pyr.n_top() {
            let partial = upsample_to(&reconstruct_pyramid(&pyr, n)?, img.side())?.quantized_u8();
            write_image(&dir.join(format!("grid{n}.png")), &partial)?;
        }
        println!("wrote partial reconstructions to {}", dir.display());
    }
    Ok(())
}
