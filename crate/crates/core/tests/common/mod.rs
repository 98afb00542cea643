#![allow(dead_code)]

pub mod golden;

use mgbvq::{Config, Image};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Smooth random texture: a few oriented sinusoids over a gradient, plus
/// mild noise, in `[0, 255]`.
pub fn synthetic(side: usize, channels: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<(f32, f32, f32, f32)> = (0..4)
        .map(|_| {
            (
                rng.random_range(0.5..6.0) / side as f32,
                rng.random_range(0.0..std::f32::consts::TAU),
                rng.random_range(0.0..std::f32::consts::TAU),
                rng.random_range(10.0..40.0),
            )
        })
        .collect();
    let base: Vec<f32> = (0..channels).map(|_| rng.random_range(60.0..190.0)).collect();
    let gx = rng.random_range(-40.0..40.0) / side as f32;
    let noise: Vec<f32> = (0..side * side * channels).map(|_| rng.random_range(-4.0..4.0)).collect();
    Image::from_fn(side, channels, |c, y, x| {
        let mut v = base[c] + gx * x as f32;
        for (k, &(f, dir, ph, amp)) in waves.iter().enumerate() {
            let t = (x as f32 * dir.cos() + y as f32 * dir.sin()) * f * std::f32::consts::TAU;
            v += amp * (t + ph + c as f32 * 0.3 * k as f32).sin();
        }
        (v + noise[(c * side + y) * side + x]).clamp(0.0, 255.0).round()
    })
    .unwrap()
}

pub fn synthetic_corpus(count: usize, side: usize, channels: usize, seed: u64) -> Vec<Image> {
    (0..count).map(|i| synthetic(side, channels, seed * 1000 + i as u64)).collect()
}

/// Three AC grids over 64x64 colour images.
pub fn small_config() -> Config {
    Config::parse(
        "finest = 6\n\
         dc_grid = 3\n\
         channels = 3\n\
         mseth = 20\n\
         seed = 5\n\
         kmeans_iters = 20\n\
         C_6_6 = 4,1\n\
         C_6_5 = 8,-\n\
         C_6_4 = 16,-\n\
         C_5_5 = 4,1\n\
         C_5_4 = 8,-\n\
         C_4_4 = 4,1\n\
         C_4_3 = 8,-\n",
    )
    .unwrap()
}

/// Published bit allocation for Lena 256x256 in bpp. Columns are grids 8
/// down to 2; rows are the quad-tree, the DC and block sides 2^8 down to
/// 2^2. `None` marks cells that carry no bits.
pub const REFERENCE_ALLOCATION: [[Option<f64>; 7]; 9] = {
    const N: Option<f64> = None;
    const fn s(v: f64) -> Option<f64> {
        Some(v)
    }
    [
        [s(4.0e-3), s(4.8e-3), s(1.3e-3), s(3.2e-4), s(7.6e-5), s(1.5e-5), N],
        [N, N, N, N, N, N, s(2.4e-4)],
        [s(1.5e-5), N, N, N, N, N, N],
        [s(9.1e-5), s(1.5e-5), N, N, N, N, N],
        [s(7.6e-4), s(1.5e-4), s(1.5e-5), N, N, N, N],
        [s(5.1e-3), s(1.2e-3), s(1.6e-5), s(7.6e-5), N, N, N],
        [s(0.0213), s(7.2e-3), s(1.7e-3), s(3.1e-4), s(6.1e-5), N, N],
        [s(0.0246), s(0.029), s(8.2e-3), s(2.1e-3), s(3.2e-4), s(7.6e-5), N],
        [N, s(0.073), s(0.0322), s(8.6e-3), s(1.5e-3), s(3.2e-4), N],
    ]
};

pub const REFERENCE_ROWS: [&str; 9] = ["QT", "DC", "C_*,8", "C_*,7", "C_*,6", "C_*,5", "C_*,4", "C_*,3", "C_*,2"];
