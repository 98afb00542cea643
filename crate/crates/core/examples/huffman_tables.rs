//! Builds canonical Huffman tables for a few index distributions and
//! compares their mean code length against the entropy bound.
//!
//! `cargo run --release --example huffman_tables`

use mgbvq::bitio::{BitReader, BitWriter};
use mgbvq::entropy::HuffmanTable;

fn entropy(freqs: &[u64]) -> f64 {
    let total: u64 = freqs.iter().sum();
    freqs
        .iter()
        .filter(|&&f| f > 0)
        .map(|&f| {
            let p = f as f64 / total as f64;
            -p * p.log2()
        })
        .sum()
}

fn main() -> mgbvq::Result<()> {
    let cases: [(&str, Vec<u64>); 3] = [
        ("uniform 16", vec![10; 16]),
        ("geometric 16", (0..16).map(|i| 1u64 << (15 - i)).collect()),
        ("zero-heavy 64", (0..64).map(|i| if i == 0 { 5000 } else { 64 - i as u64 }).collect()),
    ];
    for (name, freqs) in &cases {
        let table = HuffmanTable::build(freqs)?;
        let total: u64 = freqs.iter().sum();
        let mean: f64 = freqs
            .iter()
            .zip(table.lengths())
            .map(|(&f, &l)| f as f64 * l as f64)
            .sum::<f64>()
            / total as f64;
        println!(
            "{name:<14} entropy {:.3} bits, mean code {mean:.3} bits, longest code {}",
            entropy(freqs),
            table.lengths().iter().max().unwrap_or(&0)
        );
    }

    let table = HuffmanTable::build(&cases[2].1)?;
    let message: Vec<u32> = vec![0, 0, 3, 0, 1, 0, 0, 63, 0, 2];
    let mut w = BitWriter::new();
    table.encode(&message, &mut w)?;
    let bytes = w.into_bytes();
    let back = table.decode(&mut BitReader::new(&bytes), message.len())?;
    println!("{} symbols -> {} bytes, round trip ok: {}", message.len(), bytes.len(), back == message);
    for s in [0u32, 1, 63] {
        let (code, len) = table.code(s);
        println!("symbol {s:>2}: {code:0len$b}", len = len as usize);
    }
    Ok(())
}
