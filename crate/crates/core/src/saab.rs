//! Cascaded channel-wise Saab transforms.
//!
//! A `2^m x 2^m x C` block is reduced to `K` spectral components by `m`
//! stages. Each stage groups non-overlapping 2x2 neighbourhoods of its input
//! map (all channels jointly), applies an orthonormal kernel matrix made of
//! one DC kernel plus the principal components of the patch AC part, and
//! keeps the highest-energy output channels. The last stage works on a 2x2
//! map, leaving a 1x1 map of `K` channels.
//!
//! Every stage has orthonormal rows, so the composed map `F` satisfies
//! `F F^T = I`; the inverse is `F^T` and `inverse(forward(x))` is the
//! orthogonal projection of `x` onto the kept subspace.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};

/// Read-only access to a set of equally sized sample blocks.
///
/// Blocks are laid out channel-major (`[c][y][x]`), as produced by
/// [`Image::read_block`](crate::image::Image::read_block).
pub trait BlockSource {
    fn count(&self) -> usize;
    fn block_len(&self) -> usize;
    fn read(&self, index: usize, out: &mut [f32]);
}

/// Blocks stored back to back in one buffer.
pub struct ContiguousBlocks<'a> {
    data: &'a [f32],
    block_len: usize,
}

impl<'a> ContiguousBlocks<'a> {
    pub fn new(data: &'a [f32], block_len: usize) -> Result<Self> {
        if block_len == 0 || !data.len().is_multiple_of(block_len) {
            return Err(invalid("buffer is not a whole number of blocks"));
        }
        Ok(ContiguousBlocks { data, block_len })
    }
}

impl BlockSource for ContiguousBlocks<'_> {
    fn count(&self) -> usize {
        self.data.len() / self.block_len
    }

    fn block_len(&self) -> usize {
        self.block_len
    }

    fn read(&self, index: usize, out: &mut [f32]) {
        out.copy_from_slice(&self.data[index * self.block_len..(index + 1) * self.block_len]);
    }
}

impl BlockSource for [Vec<f32>] {
    fn count(&self) -> usize {
        self.len()
    }

    fn block_len(&self) -> usize {
        self.first().map_or(0, Vec::len)
    }

    fn read(&self, index: usize, out: &mut [f32]) {
        out.copy_from_slice(&self[index]);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SaabStage {
    in_side: usize,
    in_channels: usize,
    /// `d x d` row-major with `d = 4 * in_channels`; row 0 is the DC kernel.
    kernels: Vec<f32>,
    energies: Vec<f64>,
    kept: Vec<usize>,
}

impl SaabStage {
    pub fn from_parts(
        in_side: usize,
        in_channels: usize,
        kernels: Vec<f32>,
        energies: Vec<f64>,
        kept: Vec<usize>,
    ) -> Result<SaabStage> {
        let d = 4 * in_channels;
        if in_side < 2 || !in_side.is_power_of_two() {
            return Err(invalid("stage input side must be a power of two >= 2"));
        }
        if kernels.len() != d * d || energies.len() != d {
            return Err(invalid("stage kernel matrix has the wrong size"));
        }
        if kept.is_empty() || kept.iter().any(|&k| k >= d) {
            return Err(invalid("stage kept-channel list is invalid"));
        }
        Ok(SaabStage {
            in_side,
            in_channels,
            kernels,
            energies,
            kept,
        })
    }

    pub fn in_side(&self) -> usize {
        self.in_side
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn patch_dim(&self) -> usize {
        4 * self.in_channels
    }

    pub fn kernels(&self) -> &[f32] {
        &self.kernels
    }

    pub fn kernel(&self, row: usize) -> &[f32] {
        let d = self.patch_dim();
        &self.kernels[row * d..(row + 1) * d]
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    pub fn out_channels(&self) -> usize {
        self.kept.len()
    }

    fn forward(&self, input: &[f64]) -> Vec<f64> {
        let s = self.in_side;
        let h = s / 2;
        let d = self.patch_dim();
        let mut out = vec![0.0; self.kept.len() * h * h];
        let mut patch = vec![0.0f64; d];
        for py in 0..h {
            for px in 0..h {
                gather_patch(input, self.in_channels, s, py, px, &mut patch);
                for (o, &row) in self.kept.iter().enumerate() {
                    out[(o * h + py) * h + px] = dot_f32_f64(self.kernel(row), &patch);
                }
            }
        }
        out
    }

    fn inverse(&self, input: &[f64]) -> Vec<f64> {
        let s = self.in_side;
        let h = s / 2;
        let d = self.patch_dim();
        let mut out = vec![0.0; self.in_channels * s * s];
        let mut patch = vec![0.0f64; d];
        for py in 0..h {
            for px in 0..h {
                patch.fill(0.0);
                for (o, &row) in self.kept.iter().enumerate() {
                    let coef = input[(o * h + py) * h + px];
                    for (p, &k) in patch.iter_mut().zip(self.kernel(row)) {
                        *p += coef * k as f64;
                    }
                }
                scatter_patch(&mut out, self.in_channels, s, py, px, &patch);
            }
        }
        out
    }
}

#[inline]
fn dot_f32_f64(k: &[f32], x: &[f64]) -> f64 {
    let mut lanes = [0.0f64; 4];
    let mut kc = k.chunks_exact(4);
    let mut xc = x.chunks_exact(4);
    for (a, b) in (&mut kc).zip(&mut xc) {
        for l in 0..4 {
            lanes[l] += a[l] as f64 * b[l];
        }
    }
    let mut s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    for (a, b) in kc.remainder().iter().zip(xc.remainder()) {
        s += *a as f64 * b;
    }
    s
}

/// Patch vector order is `[c][dy][dx]`.
#[inline]
fn gather_patch(map: &[f64], channels: usize, side: usize, py: usize, px: usize, out: &mut [f64]) {
    for c in 0..channels {
        let base = c * side * side + 2 * py * side + 2 * px;
        out[4 * c] = map[base];
        out[4 * c + 1] = map[base + 1];
        out[4 * c + 2] = map[base + side];
        out[4 * c + 3] = map[base + side + 1];
    }
}

#[inline]
fn scatter_patch(map: &mut [f64], channels: usize, side: usize, py: usize, px: usize, p: &[f64]) {
    for c in 0..channels {
        let base = c * side * side + 2 * py * side + 2 * px;
        map[base] = p[4 * c];
        map[base + 1] = p[4 * c + 1];
        map[base + side] = p[4 * c + 2];
        map[base + side + 1] = p[4 * c + 3];
    }
}

/// A fitted cascade mapping `side x side x channels` blocks to `K` values.
#[derive(Clone, Debug, PartialEq)]
pub struct SaabTransform {
    side: usize,
    channels: usize,
    stages: Vec<SaabStage>,
}

impl SaabTransform {
    pub fn from_stages(side: usize, channels: usize, stages: Vec<SaabStage>) -> Result<Self> {
        if side < 2 || !side.is_power_of_two() {
            return Err(invalid("block side must be a power of two >= 2"));
        }
        if stages.len() != side.trailing_zeros() as usize {
            return Err(invalid("stage count must equal log2(block side)"));
        }
        let mut s = side;
        let mut c = channels;
        for st in &stages {
            if st.in_side != s || st.in_channels != c {
                return Err(invalid("stage dimensions do not chain"));
            }
            s /= 2;
            c = st.out_channels();
        }
        Ok(SaabTransform {
            side,
            channels,
            stages,
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn stages(&self) -> &[SaabStage] {
        &self.stages
    }

    pub fn block_len(&self) -> usize {
        self.side * self.side * self.channels
    }

    /// Number of spectral components `K`.
    pub fn output_dim(&self) -> usize {
        self.stages.last().map_or(0, SaabStage::out_channels)
    }

    pub fn forward(&self, block: &[f32]) -> Result<Vec<f32>> {
        if block.len() != self.block_len() {
            return Err(invalid(format!(
                "block has {} samples, transform expects {}",
                block.len(),
                self.block_len()
            )));
        }
        let input: Vec<f64> = block.iter().map(|&v| v as f64).collect();
        Ok(self.forward_prefix(&input, self.stages.len()).into_iter().map(|v| v as f32).collect())
    }

    /// Runs the first `depth` stages on an `f64` block.
    fn forward_prefix(&self, block: &[f64], depth: usize) -> Vec<f64> {
        let mut cur = block.to_vec();
        for st in &self.stages[..depth] {
            cur = st.forward(&cur);
        }
        cur
    }

    pub fn inverse(&self, spectrum: &[f32]) -> Result<Vec<f32>> {
        if spectrum.len() != self.output_dim() {
            return Err(invalid(format!(
                "spectrum has {} values, transform produces {}",
                spectrum.len(),
                self.output_dim()
            )));
        }
        let mut cur: Vec<f64> = spectrum.iter().map(|&v| v as f64).collect();
        for st in self.stages.iter().rev() {
            cur = st.inverse(&cur);
        }
        Ok(cur.into_iter().map(|v| v as f32).collect())
    }
}

/// Geometric per-stage keep counts from `3 * channels` at stage 0 up to `k`
/// at the last stage, clipped to what each stage can produce.
pub fn default_keep_schedule(m: usize, channels: usize, k: usize) -> Vec<usize> {
    if m == 0 {
        return Vec::new();
    }
    let start = (3 * channels) as f64;
    let mut keep: Vec<usize> = (0..m)
        .map(|s| {
            if m == 1 {
                k
            } else {
                let t = s as f64 / (m - 1) as f64;
                (start * (k as f64 / start).powf(t)).round().max(1.0) as usize
            }
        })
        .collect();
    keep[m - 1] = k;
    // Later stages need enough input channels: keep_s <= 4 * keep_{s-1}.
    for s in (1..m).rev() {
        keep[s - 1] = keep[s - 1].max(keep[s].div_ceil(4));
    }
    let mut avail = 4 * channels;
    for v in keep.iter_mut() {
        *v = (*v).min(avail);
        avail = 4 * *v;
    }
    keep
}

/// A stage that kept fewer channels than requested because the data had
/// lower rank.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankReduction {
    pub stage: usize,
    pub requested: usize,
    pub kept: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SaabFitReport {
    pub blocks_used: usize,
    pub reductions: Vec<RankReduction>,
}

#[derive(Clone, Debug)]
pub struct SaabFitParams {
    /// Channels kept after each stage; the last entry is `K`.
    pub keep: Vec<usize>,
    /// Upper bound on blocks used for covariance estimation.
    pub max_blocks: usize,
    pub seed: u64,
}

/// Patches per stage used for covariance estimation. Stages whose blocks
/// hold many patches see a random subset of the chosen blocks.
pub const STAGE_PATCH_BUDGET: usize = 1 << 21;

/// Cap on `patches * d * d` per stage, so wide late stages of large blocks
/// stay cheap. Leaves about 300 patches per dimension at d = 192.
pub const STAGE_MOMENT_BUDGET: usize = 1 << 31;

/// Learns a transform from sample blocks of side `side`.
pub fn fit_saab(
    blocks: &(impl BlockSource + ?Sized),
    side: usize,
    channels: usize,
    params: &SaabFitParams,
) -> Result<(SaabTransform, SaabFitReport)> {
    if side < 2 || !side.is_power_of_two() {
        return Err(invalid("block side must be a power of two >= 2"));
    }
    let m = side.trailing_zeros() as usize;
    let keep = &params.keep;
    if keep.len() != m {
        return Err(invalid(format!("expected {m} keep counts, got {}", keep.len())));
    }
    if blocks.block_len() != side * side * channels {
        return Err(invalid("sample blocks do not match the block shape"));
    }
    let mut avail = 4 * channels;
    for &k in keep {
        if k == 0 || k > avail {
            return Err(invalid(format!(
                "keep count {k} is not feasible (stage has {avail} channels)"
            )));
        }
        avail = 4 * k;
    }
    let target_k = keep[m - 1];
    let n = blocks.count();
    if n < 10 * target_k {
        return Err(Error::Training {
            cells: Vec::new(),
            reason: format!("{n} sample blocks is fewer than 10 x K = {}", 10 * target_k),
        });
    }

    let chosen = choose_subset(n, params.max_blocks, params.seed);
    let mut report = SaabFitReport {
        blocks_used: chosen.len(),
        reductions: Vec::new(),
    };

    let mut transform = SaabTransform {
        side,
        channels,
        stages: Vec::with_capacity(m),
    };
    let mut buf = vec![0.0f32; blocks.block_len()];
    for s in 0..m {
        let in_side = side >> s;
        let in_channels = if s == 0 {
            channels
        } else {
            transform.stages[s - 1].out_channels()
        };
        let d = 4 * in_channels;
        let per_block = (in_side / 2) * (in_side / 2);
        let patches = STAGE_PATCH_BUDGET.min(STAGE_MOMENT_BUDGET / (d * d));
        let take = chosen.len().min((patches / per_block).max(1));
        let mut stage_blocks = chosen[..take].to_vec();
        stage_blocks.sort_unstable();
        let mut moments = Moments::new(d);
        for &i in &stage_blocks {
            blocks.read(i, &mut buf);
            let input: Vec<f64> = buf.iter().map(|&v| v as f64).collect();
            let map = transform.forward_prefix(&input, s);
            let h = in_side / 2;
            let mut patch = vec![0.0f64; d];
            for py in 0..h {
                for px in 0..h {
                    gather_patch(&map, in_channels, in_side, py, px, &mut patch);
                    moments.add(&patch);
                }
            }
        }
        let (stage, reduced) = moments.into_stage(in_side, in_channels, keep[s])?;
        if reduced < keep[s] {
            log::warn!(
                "saab stage {s}: data rank allows {reduced} channels, {} requested",
                keep[s]
            );
            report.reductions.push(RankReduction {
                stage: s,
                requested: keep[s],
                kept: reduced,
            });
        }
        transform.stages.push(stage);
    }
    Ok((transform, report))
}

/// Up to `max` distinct indices below `n`, in random order.
fn choose_subset(n: usize, max: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = if n <= max {
        (0..n).collect()
    } else {
        sample(&mut rng, n, max).into_vec()
    };
    idx.shuffle(&mut rng);
    idx
}

/// Second-moment accumulator for the AC part of 2x2 patches.
///
/// The AC part lives in the `d - 1` dimensional complement of the DC
/// direction, expressed in Helmert coordinates so the accumulated matrix is
/// full rank for generic data.
struct Moments {
    d: usize,
    ac: Vec<f64>,
    dc: f64,
    count: u64,
    coords: Vec<f64>,
}

impl Moments {
    fn new(d: usize) -> Moments {
        Moments {
            d,
            ac: vec![0.0; (d - 1) * (d - 1)],
            dc: 0.0,
            count: 0,
            coords: vec![0.0; d - 1],
        }
    }

    fn add(&mut self, patch: &[f64]) {
        let d = self.d;
        let sum: f64 = patch.iter().sum();
        self.dc += sum * sum / d as f64;
        let mean = sum / d as f64;
        // Helmert coordinate k (1-based): (sum_{j<k} x_j - k x_k) / sqrt(k(k+1)).
        let mut prefix = 0.0;
        for k in 1..d {
            prefix += patch[k - 1] - mean;
            let xk = patch[k] - mean;
            self.coords[k - 1] = (prefix - k as f64 * xk) / ((k * (k + 1)) as f64).sqrt();
        }
        let n = d - 1;
        for i in 0..n {
            let ci = self.coords[i];
            if ci == 0.0 {
                continue;
            }
            let row = &mut self.ac[i * n..(i + 1) * n];
            for j in i..n {
                row[j] += ci * self.coords[j];
            }
        }
        self.count += 1;
    }

    fn into_stage(self, in_side: usize, in_channels: usize, keep: usize) -> Result<(SaabStage, usize)> {
        let d = self.d;
        let n = d - 1;
        let inv = 1.0 / self.count.max(1) as f64;
        let mut mat = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = self.ac[i * n + j] * inv;
                mat[(i, j)] = v;
                mat[(j, i)] = v;
            }
        }
        let eig = SymmetricEigen::new(mat);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .partial_cmp(&eig.eigenvalues[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });

        let mut kernels = vec![0.0f32; d * d];
        let mut energies = vec![0.0f64; d];
        let dc_val = (1.0 / d as f64).sqrt() as f32;
        kernels[..d].fill(dc_val);
        energies[0] = self.dc * inv;
        for (r, &e) in order.iter().enumerate() {
            let v = eig.eigenvectors.column(e);
            let mut kernel = helmert_expand(v.as_slice(), d);
            // Deterministic sign: largest-magnitude entry positive.
            let mut pivot = 0;
            for (j, x) in kernel.iter().enumerate() {
                if x.abs() > kernel[pivot].abs() + 1e-12 {
                    pivot = j;
                }
            }
            if kernel[pivot] < 0.0 {
                kernel.iter_mut().for_each(|x| *x = -*x);
            }
            let row = r + 1;
            for (dst, &src) in kernels[row * d..(row + 1) * d].iter_mut().zip(&kernel) {
                *dst = src as f32;
            }
            energies[row] = eig.eigenvalues[e].max(0.0);
        }

        let mut ranked: Vec<usize> = (0..d).collect();
        ranked.sort_by(|&a, &b| {
            energies[b]
                .partial_cmp(&energies[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let max_e = energies[ranked[0]];
        let rank = ranked.iter().filter(|&&i| energies[i] > max_e * 1e-10).count();
        if rank == 0 {
            return Err(Error::Training {
                cells: Vec::new(),
                reason: "sample blocks carry no energy".into(),
            });
        }
        let kept_n = keep.min(rank);
        let kept = ranked[..kept_n].to_vec();
        Ok((
            SaabStage {
                in_side,
                in_channels,
                kernels,
                energies,
                kept,
            },
            kept_n,
        ))
    }
}

/// Maps Helmert coordinates back to the `d` dimensional patch space.
fn helmert_expand(v: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d];
    // Column k of Q: 1/sqrt(k(k+1)) on j < k, -k/sqrt(k(k+1)) on j = k.
    let mut tail = 0.0;
    for k in (1..d).rev() {
        let s = v[k - 1] / ((k * (k + 1)) as f64).sqrt();
        out[k] = tail - k as f64 * s;
        tail += s;
    }
    out[0] = tail;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_blocks(n: usize, len: usize, seed: u64) -> Vec<Vec<f32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..len).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    fn full_keep(m: usize, channels: usize) -> Vec<usize> {
        let mut v = Vec::new();
        let mut c = channels;
        for _ in 0..m {
            c *= 4;
            v.push(c);
        }
        v
    }

    fn params(keep: Vec<usize>) -> SaabFitParams {
        SaabFitParams {
            keep,
            max_blocks: 100_000,
            seed: 7,
        }
    }

    #[test]
    fn helmert_columns_are_orthonormal_and_dc_free() {
        let d = 12;
        for k in 0..d - 1 {
            let mut e = vec![0.0; d - 1];
            e[k] = 1.0;
            let q = helmert_expand(&e, d);
            assert!(q.iter().sum::<f64>().abs() < 1e-12);
            assert!((q.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn kernels_are_orthonormal() {
        let blocks = random_blocks(400, 8 * 8 * 3, 1);
        let (t, _) = fit_saab(&blocks[..], 8, 3, &params(vec![9, 20, 30])).unwrap();
        for st in t.stages() {
            let d = st.patch_dim();
            for a in 0..d {
                for b in 0..d {
                    let dot: f64 = st
                        .kernel(a)
                        .iter()
                        .zip(st.kernel(b))
                        .map(|(x, y)| *x as f64 * *y as f64)
                        .sum();
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-5, "stage gram ({a},{b}) = {dot}");
                }
            }
            let kept_e: Vec<f64> = st.kept().iter().map(|&k| st.energies()[k]).collect();
            assert!(kept_e.windows(2).all(|w| w[0] >= w[1]));
            let min_kept = kept_e.iter().cloned().fold(f64::INFINITY, f64::min);
            for (i, &e) in st.energies().iter().enumerate() {
                if !st.kept().contains(&i) {
                    assert!(e <= min_kept);
                }
            }
        }
        assert_eq!(t.output_dim(), 30);
    }

    #[test]
    fn constant_blocks_put_all_energy_in_dc() {
        let blocks: Vec<Vec<f32>> = (0..40).map(|i| vec![i as f32 + 1.0; 16]).collect();
        let (t, report) = fit_saab(&blocks[..], 4, 1, &params(vec![3, 2])).unwrap();
        let st0 = &t.stages()[0];
        assert!(st0.energies()[0] > 0.0);
        assert!(st0.energies()[1..].iter().all(|&e| e == 0.0));
        assert_eq!(st0.kept(), &[0]);
        assert!(!report.reductions.is_empty());
    }

    #[test]
    fn full_retention_is_lossless() {
        let blocks = random_blocks(200, 16, 3);
        let (t, report) = fit_saab(&blocks[..], 4, 1, &params(full_keep(2, 1))).unwrap();
        assert!(report.reductions.is_empty());
        assert_eq!(t.output_dim(), 16);
        for b in &blocks {
            let spec = t.forward(b).unwrap();
            let back = t.inverse(&spec).unwrap();
            for (x, y) in b.iter().zip(&back) {
                assert!((x - y).abs() < 1e-4);
            }
            let e_in: f64 = b.iter().map(|v| (*v as f64).powi(2)).sum();
            let e_out: f64 = spec.iter().map(|v| (*v as f64).powi(2)).sum();
            assert!((e_in - e_out).abs() <= 1e-4 * e_in);
        }
    }

    #[test]
    fn zero_maps_to_zero() {
        let blocks = random_blocks(300, 48, 4);
        let (t, _) = fit_saab(&blocks[..], 4, 3, &params(vec![9, 20])).unwrap();
        assert!(t.forward(&[0.0; 48]).unwrap().iter().all(|&v| v == 0.0));
        assert!(t.inverse(&[0.0; 20]).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn projection_is_idempotent() {
        let blocks = random_blocks(300, 64, 5);
        let (t, _) = fit_saab(&blocks[..], 8, 1, &params(vec![3, 6, 10])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let spec: Vec<f32> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
            let again = t.forward(&t.inverse(&spec).unwrap()).unwrap();
            for (a, b) in spec.iter().zip(&again) {
                assert!((a - b).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn unit_spectrum_round_trips() {
        let blocks = random_blocks(300, 64, 6);
        let (t, _) = fit_saab(&blocks[..], 8, 1, &params(vec![4, 8, 12])).unwrap();
        for k in 0..12 {
            let mut e = vec![0.0f32; 12];
            e[k] = 1.0;
            let got = t.forward(&t.inverse(&e).unwrap()).unwrap();
            for (a, b) in e.iter().zip(&got) {
                assert!((a - b).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let blocks = random_blocks(300, 64, 8);
        let (t, _) = fit_saab(&blocks[..], 8, 1, &params(vec![4, 8, 12])).unwrap();
        assert!(matches!(t.forward(&[0.0; 63]), Err(Error::InvalidInput(_))));
        assert!(matches!(t.inverse(&[0.0; 11]), Err(Error::InvalidInput(_))));
        // Too few samples for K.
        let few = random_blocks(100, 64, 9);
        assert!(matches!(
            fit_saab(&few[..], 8, 1, &params(vec![4, 8, 12])),
            Err(Error::Training { .. })
        ));
        // Infeasible keep counts.
        assert!(fit_saab(&blocks[..], 8, 1, &params(vec![4, 17, 12])).is_err());
        assert!(fit_saab(&blocks[..], 8, 1, &params(vec![4, 8])).is_err());
    }

    #[test]
    fn seeded_fit_is_deterministic() {
        let blocks = random_blocks(400, 48, 10);
        let p = SaabFitParams {
            keep: vec![9, 12],
            max_blocks: 150,
            seed: 3,
        };
        let (a, ra) = fit_saab(&blocks[..], 4, 3, &p).unwrap();
        let (b, _) = fit_saab(&blocks[..], 4, 3, &p).unwrap();
        assert_eq!(ra.blocks_used, 150);
        assert_eq!(a, b);
    }

    /// Cyclic Jacobi eigenvalue solver, independent of nalgebra.
    fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
        let n = a.len();
        for _ in 0..100 {
            let mut off = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        off += a[i][j] * a[i][j];
                    }
                }
            }
            if off < 1e-24 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k][p];
                        let akq = a[k][q];
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p][k];
                        let aqk = a[q][k];
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
        ev.sort_by(|x, y| y.partial_cmp(x).unwrap());
        ev
    }

    #[test]
    fn ac_energies_match_jacobi_oracle() {
        // Correlated data so the spectrum is far from flat.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let blocks: Vec<Vec<f32>> = (0..300)
            .map(|_| {
                let base: f32 = rng.random_range(0.0..100.0);
                let gx: f32 = rng.random_range(-5.0..5.0);
                let gy: f32 = rng.random_range(-5.0..5.0);
                (0..48)
                    .map(|i| {
                        let (c, y, x) = (i / 16, (i / 4) % 4, i % 4);
                        base + gx * x as f32 + gy * y as f32 + c as f32 * 3.0
                            + rng.random_range(-1.0..1.0)
                    })
                    .collect()
            })
            .collect();
        let (t, _) = fit_saab(&blocks[..], 4, 3, &params(vec![12, 20])).unwrap();
        let st = &t.stages()[0];
        let d = 12;
        // Direct d x d second moment of mean-removed patches.
        let mut m = vec![vec![0.0f64; d]; d];
        let mut dc = 0.0;
        let mut count = 0.0;
        for b in &blocks {
            for py in 0..2 {
                for px in 0..2 {
                    let mut p = vec![0.0f64; d];
                    for c in 0..3 {
                        for dy in 0..2 {
                            for dx in 0..2 {
                                p[4 * c + 2 * dy + dx] =
                                    b[c * 16 + (2 * py + dy) * 4 + 2 * px + dx] as f64;
                            }
                        }
                    }
                    let mean = p.iter().sum::<f64>() / d as f64;
                    dc += mean * mean * d as f64;
                    for i in 0..d {
                        for j in 0..d {
                            m[i][j] += (p[i] - mean) * (p[j] - mean);
                        }
                    }
                    count += 1.0;
                }
            }
        }
        m.iter_mut().flatten().for_each(|v| *v /= count);
        let oracle = jacobi_eigenvalues(m);
        let got = &st.energies()[1..];
        for (k, (a, b)) in got.iter().zip(&oracle).enumerate() {
            assert!((a - b).abs() <= 1e-8 * oracle[0].max(1.0), "eigenvalue {k}: {a} vs {b}");
        }
        assert!((st.energies()[0] - dc / count).abs() <= 1e-9 * dc / count);
    }

    #[test]
    fn keep_schedule_shape() {
        assert_eq!(default_keep_schedule(8, 3, 150), vec![9, 13, 20, 30, 45, 67, 100, 150]);
        let s = default_keep_schedule(3, 3, 12);
        assert_eq!(s[0], 9);
        assert_eq!(*s.last().unwrap(), 12);
        // Grayscale with a large K has to open up early stages.
        let s = default_keep_schedule(3, 1, 40);
        assert_eq!(s.last(), Some(&40));
        let mut avail = 4;
        for &k in &s {
            assert!(k <= avail);
            avail = 4 * k;
        }
        assert_eq!(default_keep_schedule(1, 3, 5), vec![5]);
    }
}
