//! Prints the grid-by-block-size bit allocation of an encoded picture and
//! checks that it adds up to the stream length.
//!
//! `cargo run --release --example bit_accounting [model]`

#[path = "common/mod.rs"]
mod common;

use mgbvq::bitstream::{bit_accounting, HEADER_LEN};
use mgbvq::encode;

fn main() -> mgbvq::Result<()> {
    let model = common::model_from_args()?;
    let img = common::test_image(&model, "lena.png")?;
    let stream = encode(&model, &img)?;
    let acc = bit_accounting(&stream, &model)?;
    print!("{}", acc.to_table());
    let measured = 8 * (stream.len() - HEADER_LEN) as u64;
    println!("table total {} bits, stream payload {measured} bits", acc.total_bits());
    assert_eq!(acc.total_bits(), measured);
    Ok(())
}
