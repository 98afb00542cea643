pub mod bitio;
pub mod bench;
pub mod bitstream;
pub mod codec;
pub mod config;
pub mod entropy;
pub mod error;
pub mod image;
pub mod io;
pub mod kmeans;
pub mod model;
pub mod pyramid;
pub mod ratecontrol;
pub mod saab;
pub mod train;
pub mod cli;
pub mod vq;

pub use codec::{decode, decode_float, encode, encode_with_report};
pub use config::Config;
pub use error::{Error, Result};
pub use image::Image;
pub use model::Model;
pub use train::{train_model, train_model_sweep, train_model_with_report};
