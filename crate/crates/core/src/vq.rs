//! Codebooks, nearest-codeword search and per-grid multi-block-size coding.

use crate::error::{corrupt, invalid, Error, Result};
use crate::image::Image;
use crate::kmeans::{kmeans, KMeansParams, KMeansResult};
use crate::ratecontrol::QuadTree;
use crate::saab::SaabTransform;

/// Index of the all-zero codeword present in every codebook.
pub const ZERO_INDEX: u32 = 0;

/// Where a codebook's centroids live.
#[derive(Clone, Debug, PartialEq)]
pub enum Space {
    /// Spectral vectors produced by a Saab transform.
    Spectral(SaabTransform),
    /// Raw pixel blocks.
    Spatial,
}

/// Codebook `C_{n,m}`: codewords for `2^m`-sided blocks at grid `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    grid: u8,
    exp: u8,
    channels: usize,
    space: Space,
    centroids: Vec<f32>,
    lut: Vec<f32>,
}

impl Codebook {
    /// Builds a codebook and its spatial look-up table. `centroids[0]` must
    /// be the zero codeword.
    pub fn new(grid: u8, exp: u8, channels: usize, space: Space, centroids: Vec<f32>) -> Result<Codebook> {
        let side = check_cell(grid, exp, channels)?;
        let block_len = side * side * channels;
        let dim = space_dim(&space, side, channels)?;
        if centroids.is_empty() || !centroids.len().is_multiple_of(dim) {
            return Err(invalid("centroid buffer is not a whole number of codewords"));
        }
        let lut = match &space {
            Space::Spatial => centroids.clone(),
            Space::Spectral(t) => {
                let mut lut = Vec::with_capacity(centroids.len() / dim * block_len);
                for c in centroids.chunks_exact(dim) {
                    lut.extend(t.inverse(c)?);
                }
                lut
            }
        };
        Codebook::with_lut(grid, exp, channels, space, centroids, lut)
    }

    /// Assembles a codebook from stored parts without recomputing the table.
    pub fn with_lut(
        grid: u8,
        exp: u8,
        channels: usize,
        space: Space,
        centroids: Vec<f32>,
        lut: Vec<f32>,
    ) -> Result<Codebook> {
        let side = check_cell(grid, exp, channels)?;
        let dim = space_dim(&space, side, channels)?;
        if centroids.is_empty() || !centroids.len().is_multiple_of(dim) {
            return Err(invalid("centroid buffer is not a whole number of codewords"));
        }
        let k = centroids.len() / dim;
        if lut.len() != k * side * side * channels {
            return Err(invalid("look-up table size does not match the codebook"));
        }
        if centroids[..dim].iter().any(|&v| v != 0.0) {
            return Err(invalid("codeword 0 must be the zero vector"));
        }
        Ok(Codebook {
            grid,
            exp,
            channels,
            space,
            centroids,
            lut,
        })
    }

    /// A codebook holding only the zero codeword.
    pub fn zero_only(grid: u8, exp: u8, channels: usize) -> Result<Codebook> {
        let side = check_cell(grid, exp, channels)?;
        Codebook::new(grid, exp, channels, Space::Spatial, vec![0.0; side * side * channels])
    }

    pub fn grid(&self) -> u8 {
        self.grid
    }

    pub fn exp(&self) -> u8 {
        self.exp
    }

    pub fn side(&self) -> usize {
        1 << self.exp
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn is_spectral(&self) -> bool {
        matches!(self.space, Space::Spectral(_))
    }

    pub fn block_len(&self) -> usize {
        self.side() * self.side() * self.channels
    }

    pub fn dim(&self) -> usize {
        self.centroids.len() / self.len()
    }

    /// Number of codewords, including the zero codeword.
    pub fn len(&self) -> usize {
        self.lut.len() / self.block_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn centroids(&self) -> &[f32] {
        &self.centroids
    }

    pub fn centroid(&self, i: usize) -> &[f32] {
        let d = self.dim();
        &self.centroids[i * d..(i + 1) * d]
    }

    pub fn lut(&self) -> &[f32] {
        &self.lut
    }

    pub fn lut_block(&self, i: usize) -> &[f32] {
        let b = self.block_len();
        &self.lut[i * b..(i + 1) * b]
    }

    /// Maps a spatial block into the codebook's search space.
    pub fn to_space(&self, block: &[f32]) -> Result<Vec<f32>> {
        match &self.space {
            Space::Spectral(t) => t.forward(block),
            Space::Spatial => {
                if block.len() != self.block_len() {
                    return Err(invalid("block shape does not match the codebook"));
                }
                Ok(block.to_vec())
            }
        }
    }

    /// Nearest codeword to `v` (already in the codebook's space); ties go
    /// to the lowest index.
    pub fn quantize(&self, v: &[f32]) -> Result<(u32, &[f32])> {
        if v.len() != self.dim() {
            return Err(invalid(format!(
                "vector has {} values, codebook space has {}",
                v.len(),
                self.dim()
            )));
        }
        let x: Vec<f64> = v.iter().map(|&a| a as f64).collect();
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, c) in self.centroids.chunks_exact(x.len()).enumerate() {
            let d = sq_dist_mixed(&x, c);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        Ok((best as u32, self.lut_block(best)))
    }

    /// Transforms and quantizes a spatial block.
    pub fn quantize_block(&self, block: &[f32]) -> Result<(u32, &[f32])> {
        let v = self.to_space(block)?;
        self.quantize(&v)
    }
}

fn check_cell(grid: u8, exp: u8, channels: usize) -> Result<usize> {
    if exp > grid || grid > 14 {
        return Err(invalid(format!("block exponent {exp} exceeds grid {grid}")));
    }
    if channels != 1 && channels != 3 {
        return Err(invalid(format!("unsupported channel count {channels}")));
    }
    Ok(1 << exp)
}

fn space_dim(space: &Space, side: usize, channels: usize) -> Result<usize> {
    match space {
        Space::Spatial => Ok(side * side * channels),
        Space::Spectral(t) => {
            if t.side() != side || t.channels() != channels {
                return Err(invalid("transform shape does not match the codebook cell"));
            }
            Ok(t.output_dim())
        }
    }
}

#[inline]
fn sq_dist_mixed(x: &[f64], c: &[f32]) -> f64 {
    let mut lanes = [0.0f64; 4];
    let mut xc = x.chunks_exact(4);
    let mut cc = c.chunks_exact(4);
    for (a, b) in (&mut xc).zip(&mut cc) {
        for l in 0..4 {
            let d = a[l] - b[l] as f64;
            lanes[l] += d * d;
        }
    }
    let mut s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    for (a, b) in xc.remainder().iter().zip(cc.remainder()) {
        let d = a - *b as f64;
        s += d * d;
    }
    s
}

/// Trains `k - 1` centroids on `samples` (vectors in `space`) and prepends
/// the zero codeword.
pub fn train_codebook(
    grid: u8,
    exp: u8,
    channels: usize,
    space: Space,
    samples: &[f32],
    k: usize,
    params: &KMeansParams,
) -> Result<(Codebook, Option<KMeansResult>)> {
    let side = check_cell(grid, exp, channels)?;
    let dim = space_dim(&space, side, channels)?;
    if k == 0 {
        return Err(invalid("codebook needs at least one codeword"));
    }
    let mut centroids = vec![0.0f32; dim];
    let mut result = None;
    if k > 1 {
        let p = KMeansParams {
            k: k - 1,
            ..params.clone()
        };
        let r = kmeans(samples, dim, &p).map_err(|e| match e {
            Error::Training { reason, .. } => Error::Training {
                cells: vec![(grid, exp)],
                reason,
            },
            other => other,
        })?;
        if r.centroids.chunks_exact(dim).any(|c| c.iter().all(|&v| v == 0.0)) {
            log::warn!("C_{grid},{exp}: a trained centroid coincides with the zero codeword");
        }
        centroids.extend_from_slice(&r.centroids);
        result = Some(r);
    }
    Ok((Codebook::new(grid, exp, channels, space, centroids)?, result))
}

/// Everything needed to rebuild one grid's quantized AC.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridCode {
    pub grid: u8,
    pub tree: QuadTree,
    /// Codeword indices per level, in visiting order.
    pub indices: Vec<Vec<u32>>,
}

#[derive(Clone, Debug)]
pub struct GridEncoding {
    pub code: GridCode,
    /// Sum of the chosen look-up-table blocks.
    pub recon: Image,
    /// What is left of the target after every quantization step.
    pub residual: Image,
}

fn check_suite(side: usize, channels: usize, books: &[&Codebook]) -> Result<()> {
    if books.is_empty() {
        return Err(Error::Config("grid has no codebooks".into()));
    }
    for (l, b) in books.iter().enumerate() {
        if b.side() != side >> l || b.channels() != channels {
            return Err(Error::Config(format!(
                "codebook for level {l} has side {} and {} channels, expected {} and {channels}",
                b.side(),
                b.channels(),
                side >> l
            )));
        }
    }
    Ok(())
}

/// Threshold used for flags at `level`; level 0 shares level 1's value.
pub(crate) fn level_threshold(thresholds: &[f64], level: usize) -> f64 {
    thresholds[level.max(1).min(thresholds.len() - 1)]
}

/// Codes `target` (a grid-sized AC field) with one codebook per level.
///
/// `books[l]` codes blocks of side `side >> l`; `thresholds[l]` is the
/// early-termination MSE for blocks at level `l`.
pub fn encode_grid(target: &Image, books: &[&Codebook], thresholds: &[f64]) -> Result<GridEncoding> {
    let side = target.side();
    let channels = target.channels();
    check_suite(side, channels, books)?;
    if thresholds.len() != books.len() {
        return Err(Error::Config("one threshold per level is required".into()));
    }
    let grid = books[0].grid();
    let depth = books.len();
    let mut residual = target.clone();
    let mut recon = Image::zeros(side, channels)?;
    let mut indices = vec![Vec::new(); depth];
    let mut levels = vec![Vec::new(); depth];
    let mut block = vec![0.0f32; residual.block_len(side)];

    residual.read_block(0, 0, side, &mut block);
    let (idx, lut) = books[0].quantize_block(&block)?;
    indices[0].push(idx);
    residual.sub_block(0, 0, side, lut);
    recon.add_block(0, 0, side, lut);
    let split = depth > 1 && residual.block_mean_square(0, 0, side) >= level_threshold(thresholds, 0);
    levels[0].push(split);

    let mut frontier = if split { vec![(0usize, 0usize)] } else { Vec::new() };
    for l in 1..depth {
        let s = side >> l;
        let th = level_threshold(thresholds, l);
        let mut next = Vec::new();
        block.resize(residual.block_len(s), 0.0);
        for &(py, px) in &frontier {
            for (dy, dx) in QUADRANTS {
                let (y, x) = (py + dy * s, px + dx * s);
                let flag = residual.block_mean_square(y, x, s) >= th;
                levels[l].push(flag);
                if !flag {
                    continue;
                }
                residual.read_block(y, x, s, &mut block);
                let (idx, lut) = books[l].quantize_block(&block)?;
                indices[l].push(idx);
                residual.sub_block(y, x, s, lut);
                recon.add_block(y, x, s, lut);
                if l + 1 < depth {
                    next.push((y, x));
                }
            }
        }
        frontier = next;
    }
    Ok(GridEncoding {
        code: GridCode {
            grid,
            tree: QuadTree::new(levels, side)?,
            indices,
        },
        recon,
        residual,
    })
}

/// Raster order: top-left, top-right, bottom-left, bottom-right.
const QUADRANTS: [(usize, usize); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];

/// Rebuilds the quantized AC of one grid.
pub fn decode_grid(code: &GridCode, books: &[&Codebook]) -> Result<Image> {
    let side = code.tree.base_side();
    let channels = books.first().map_or(1, |b| b.channels());
    check_suite(side, channels, books)?;
    let g = Some(code.grid);
    let depth = books.len();
    if code.tree.depth() != depth || code.indices.len() != depth {
        return Err(corrupt(g, "quad-tree depth does not match the codebook suite"));
    }
    for l in 0..depth {
        let want = if l == 0 { 1 } else { code.tree.ones(l) };
        if code.indices[l].len() != want {
            return Err(corrupt(
                g,
                format!("level {l} has {} indices, quad-tree implies {want}", code.indices[l].len()),
            ));
        }
        if let Some(&bad) = code.indices[l].iter().find(|&&i| i as usize >= books[l].len()) {
            return Err(corrupt(
                g,
                format!("index {bad} outside codebook of {} at level {l}", books[l].len()),
            ));
        }
    }
    if depth == 1 && code.tree.levels()[0][0] {
        return Err(corrupt(g, "root split flag set with no deeper level"));
    }

    let mut recon = Image::zeros(side, channels)?;
    recon.add_block(0, 0, side, books[0].lut_block(code.indices[0][0] as usize));
    let mut frontier = if code.tree.levels()[0][0] { vec![(0usize, 0usize)] } else { Vec::new() };
    for l in 1..depth {
        let s = side >> l;
        let flags = &code.tree.levels()[l];
        let mut f = 0;
        let mut k = 0;
        let mut next = Vec::new();
        for &(py, px) in &frontier {
            for (dy, dx) in QUADRANTS {
                let flag = flags[f];
                f += 1;
                if !flag {
                    continue;
                }
                let (y, x) = (py + dy * s, px + dx * s);
                recon.add_block(y, x, s, books[l].lut_block(code.indices[l][k] as usize));
                k += 1;
                if l + 1 < depth {
                    next.push((y, x));
                }
            }
        }
        frontier = next;
    }
    Ok(recon)
}
