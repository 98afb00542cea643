//! Trains the full 256x256 colour profile on the bundled corpus, prints a
//! per-cell summary and writes the model file.
//!
//! `cargo run --release --example train_reference [model.mgbm] [codewords]`

use std::path::{Path, PathBuf};
use std::time::Instant;

use mgbvq::config::Config;
use mgbvq::io::{load_corpus, CorpusOptions};
use mgbvq::train::ImageSource;
use mgbvq::train_model_with_report;

fn main() -> mgbvq::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let out = args.next().map_or_else(|| PathBuf::from("reference_256.mgbm"), PathBuf::from);
    let spatial_codewords = args.next().and_then(|s| s.parse().ok()).unwrap_or(64);

    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/train");
    let corpus = load_corpus(&data, &CorpusOptions::new(256, 3))?;
    println!("corpus: {} images", corpus.count());

    let t = Instant::now();
    let (model, report) = train_model_with_report(&corpus, &Config::reference_256(spatial_codewords))?;
    println!("trained in {:.1}s\n", t.elapsed().as_secs_f64());
    println!("{:<7} {:>9} {:>10} {:>10} {:>6} {:>12}", "cell", "codewords", "components", "blocks", "iters", "distortion");
    for c in &report.cells {
        let comp = c.components.map_or("-".to_string(), |k| k.to_string());
        println!(
            "C_{},{:<3} {:>9} {:>10} {:>10} {:>6} {:>12.3}{}",
            c.grid,
            c.exp,
            c.codewords,
            comp,
            c.blocks,
            c.kmeans_iterations,
            c.distortion,
            c.degenerate.as_deref().map(|r| format!("  degenerate: {r}")).unwrap_or_default()
        );
    }
    model.save(&out)?;
    let id: String = model.id().iter().map(|b| format!("{b:02x}")).collect();
    println!("\nmodel {id} written to {}", out.display());
    Ok(())
}
