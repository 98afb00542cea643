//! Multi-grid DC/AC decomposition built on 2x Lanczos resampling.
//!
//! `D` halves the side of an image, `U` doubles it, and each grid keeps the
//! detail that a `U(D(.))` round trip loses:
//!
//! ```text
//! I_{n-1} = D(I_n)
//! AC_n    = I_n - U(I_{n-1})
//! ```
//!
//! Both resamplers use a Lanczos window with `a = 3`, replicate the border
//! pixels, and are phase aligned on pixel centers so that `U(D(x))` does not
//! drift. Taps are normalized to unit sum, so constants map to themselves.
//! Accumulation happens in `f64`; results are stored as `f32`.

use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::image::Image;

/// Lanczos window parameter.
pub const LANCZOS_A: f64 = 3.0;

/// Default upper bound on the side of an upsampled image.
pub const DEFAULT_MAX_SIDE: usize = 1 << 14;

/// Lanczos-3 kernel `sinc(x) * sinc(x / 3)` on `|x| < 3`.
pub fn lanczos3(x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    if x.abs() >= LANCZOS_A {
        return 0.0;
    }
    let px = PI * x;
    LANCZOS_A * px.sin() * (px / LANCZOS_A).sin() / (px * px)
}

/// One output sample: `(source index, weight)` pairs after edge clamping.
type Taps = Vec<(usize, f64)>;

fn normalized_taps(center: f64, scale: f64, src_len: usize) -> Taps {
    let radius = LANCZOS_A * scale;
    let lo = (center - radius).floor() as i64;
    let hi = (center + radius).ceil() as i64;
    let mut taps = Vec::with_capacity((hi - lo + 1) as usize);
    let mut sum = 0.0;
    for i in lo..=hi {
        let w = lanczos3((i as f64 - center) / scale);
        if w == 0.0 {
            continue;
        }
        let clamped = i.clamp(0, src_len as i64 - 1) as usize;
        taps.push((clamped, w));
        sum += w;
    }
    for t in &mut taps {
        t.1 /= sum;
    }
    taps
}

/// Filter taps for `D` along one axis of length `src_len`.
///
/// Output `j` sits at source coordinate `2j + 0.5`, midway between the two
/// pixels it replaces; the kernel is stretched by 2.
fn downsample_taps(src_len: usize) -> Vec<Taps> {
    (0..src_len / 2)
        .map(|j| normalized_taps(2.0 * j as f64 + 0.5, 2.0, src_len))
        .collect()
}

/// Filter taps for `U` along one axis of length `src_len`.
///
/// Output `i` sits at source coordinate `i / 2 - 0.25`.
fn upsample_taps(src_len: usize) -> Vec<Taps> {
    (0..src_len * 2)
        .map(|i| normalized_taps(i as f64 / 2.0 - 0.25, 1.0, src_len))
        .collect()
}

fn resample(img: &Image, out_side: usize, taps: &[Taps]) -> Image {
    let side = img.side();
    let channels = img.channels();
    let mut out = Image::zeros(out_side, channels).expect("power-of-two side");
    let mut rows = vec![0.0f64; side * out_side];
    for c in 0..channels {
        let plane = img.plane(c);
        // Horizontal pass: side rows x out_side columns.
        for y in 0..side {
            let src = &plane[y * side..(y + 1) * side];
            let dst = &mut rows[y * out_side..(y + 1) * out_side];
            for (d, t) in dst.iter_mut().zip(taps) {
                *d = t.iter().map(|&(i, w)| w * src[i] as f64).sum();
            }
        }
        // Vertical pass.
        let dst = out.plane_mut(c);
        for (oy, t) in taps.iter().enumerate() {
            let row = &mut dst[oy * out_side..(oy + 1) * out_side];
            for (x, d) in row.iter_mut().enumerate() {
                let v: f64 = t.iter().map(|&(i, w)| w * rows[i * out_side + x]).sum();
                *d = v as f32;
            }
        }
    }
    out
}

/// `D`: halves the side of `img`.
pub fn lanczos_downsample(img: &Image) -> Result<Image> {
    if img.side() < 4 {
        return Err(invalid(format!(
            "cannot downsample a {0}x{0} image, minimum is 4x4",
            img.side()
        )));
    }
    Ok(resample(img, img.side() / 2, &downsample_taps(img.side())))
}

/// `U`: doubles the side of `img`.
pub fn lanczos_upsample(img: &Image) -> Result<Image> {
    lanczos_upsample_limited(img, DEFAULT_MAX_SIDE)
}

pub fn lanczos_upsample_limited(img: &Image, max_side: usize) -> Result<Image> {
    let out_side = img.side() * 2;
    if out_side > max_side {
        return Err(Error::ResourceLimit(format!(
            "upsampled side {out_side} exceeds the limit of {max_side}"
        )));
    }
    Ok(resample(img, out_side, &upsample_taps(img.side())))
}

/// Applies `U` until the image reaches `side`.
pub fn upsample_to(img: &Image, side: usize) -> Result<Image> {
    let mut cur = img.clone();
    while cur.side() < side {
        cur = lanczos_upsample(&cur)?;
    }
    Ok(cur)
}

/// The DC chain `I_{n_dc}, ..., I_N` (coarsest first, input last).
pub fn downsample_chain(img: &Image, n_dc: u8) -> Result<Vec<Image>> {
    let top = img.grid();
    check_range(top, n_dc)?;
    let mut chain = vec![img.clone()];
    for _ in n_dc..top {
        let next = lanczos_downsample(chain.last().expect("non-empty"))?;
        chain.push(next);
    }
    chain.reverse();
    Ok(chain)
}

fn check_range(top: u8, n_dc: u8) -> Result<()> {
    if n_dc < 2 || n_dc >= top {
        return Err(invalid(format!(
            "DC grid {n_dc} must satisfy 2 <= n_dc < {top}"
        )));
    }
    Ok(())
}

/// Coarsest DC plus one AC layer for every finer grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPyramid {
    n_dc: u8,
    n_top: u8,
    dc: Image,
    /// `ac_layers[i]` is `AC_{n_dc + 1 + i}`.
    ac_layers: Vec<Image>,
}

impl GridPyramid {
    pub fn n_dc(&self) -> u8 {
        self.n_dc
    }

    pub fn n_top(&self) -> u8 {
        self.n_top
    }

    pub fn dc(&self) -> &Image {
        &self.dc
    }

    /// `AC_n`, for `n_dc < n <= n_top`.
    pub fn ac(&self, n: u8) -> Option<&Image> {
        if n <= self.n_dc || n > self.n_top {
            return None;
        }
        self.ac_layers.get((n - self.n_dc - 1) as usize)
    }

    pub fn ac_mut(&mut self, n: u8) -> Option<&mut Image> {
        if n <= self.n_dc || n > self.n_top {
            return None;
        }
        self.ac_layers.get_mut((n - self.n_dc - 1) as usize)
    }

    pub fn ac_layers(&self) -> &[Image] {
        &self.ac_layers
    }
}

/// Splits `img` into `DC_{n_dc}` and `AC_{n_dc+1} .. AC_N`.
pub fn forward_decompose(img: &Image, n_dc: u8) -> Result<GridPyramid> {
    let chain = downsample_chain(img, n_dc)?;
    let mut ac_layers = Vec::with_capacity(chain.len() - 1);
    for pair in chain.windows(2) {
        let up = lanczos_upsample(&pair[0])?;
        ac_layers.push(pair[1].sub(&up)?);
    }
    Ok(GridPyramid {
        n_dc,
        n_top: img.grid(),
        dc: chain.into_iter().next().expect("non-empty"),
        ac_layers,
    })
}

/// Rebuilds `I_{up_to}` by upsampling the DC and adding AC layers.
pub fn reconstruct_pyramid(pyr: &GridPyramid, up_to: u8) -> Result<Image> {
    if up_to < pyr.n_dc || up_to > pyr.n_top {
        return Err(invalid(format!(
            "grid {up_to} is outside [{}, {}]",
            pyr.n_dc, pyr.n_top
        )));
    }
    let mut cur = pyr.dc.clone();
    for n in pyr.n_dc + 1..=up_to {
        let ac = pyr.ac(n).expect("layer in range");
        cur = lanczos_upsample(&cur)?.add(ac)?;
    }
    Ok(cur)
}
