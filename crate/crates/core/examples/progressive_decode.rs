//! Decodes one stream at every grid depth and prints the rate-distortion
//! point of each prefix. Optionally writes each partial decode.
//!
//! `cargo run --release --example progressive_decode [model] [out-dir]`

#[path = "common/mod.rs"]
mod common;

use std::path::PathBuf;

use mgbvq::codec::progressive_rd;
use mgbvq::io::write_image;
use mgbvq::{decode, encode};

fn main() -> mgbvq::Result<()> {
    let model = common::model_from_args()?;
    let img = common::test_image(&model, "astronaut.png")?;
    let stream = encode(&model, &img)?;
    println!("{} byte stream", stream.len());
    for (n, p) in progressive_rd(&model, &img, &stream)? {
        println!("up to G_{n}: {:.4} bpp, {:.2} dB", p.bpp, p.psnr);
    }
    if let Some(dir) = std::env::args().nth(2).map(PathBuf::from) {
        std::fs::create_dir_all(&dir)?;
        let c = model.config();
        for n in c.dc_grid..=c.finest {
            write_image(&dir.join(format!("upto{n}.png")), &decode(&model, &stream, Some(n))?)?;
        }
        println!("wrote partial decodes to {}", dir.display());
    }
    Ok(())
}
