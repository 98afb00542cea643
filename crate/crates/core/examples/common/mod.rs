#![allow(dead_code)]

use std::path::{Path, PathBuf};

use mgbvq::io::{load_corpus, read_raw, CorpusOptions};
use mgbvq::{train_model, Config, Image, Model};

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data")
}

/// Four AC grids over 64x64 colour images; trains in seconds.
pub const QUICK_CONFIG: &str = "\
finest = 6
dc_grid = 2
channels = 3
seed = 11
C_3_3 = 16,8
C_3_2 = 32,-
C_4_4 = 16,8
C_4_3 = 32,-
C_4_2 = 64,-
C_5_5 = 16,8
C_5_4 = 32,16
C_5_3 = 64,-
C_5_2 = 128,-
C_6_6 = 16,8
C_6_5 = 32,16
C_6_4 = 64,16
C_6_3 = 128,-
C_6_2 = 128,-
";

/// Loads the model named on the command line, or trains the quick profile
/// on the bundled corpus.
pub fn model_from_args() -> mgbvq::Result<Model> {
    if let Some(path) = std::env::args().nth(1) {
        return Model::load(Path::new(&path));
    }
    let config = Config::parse(QUICK_CONFIG)?;
    let opts = CorpusOptions {
        stride: 64,
        augment: 1,
        ..CorpusOptions::new(64, 3)
    };
    let corpus = load_corpus(&data_dir().join("train"), &opts)?;
    println!("training the quick 64x64 profile on {} crops", mgbvq::train::ImageSource::count(&corpus));
    train_model(&corpus, &config)
}

/// A bundled test picture at the model's resolution.
pub fn test_image(model: &Model, name: &str) -> mgbvq::Result<Image> {
    let c = model.config();
    read_raw(&data_dir().join("test").join(name))?
        .with_channels(c.channels)?
        .fit_to(1 << c.finest)
}
