//! Closed-loop model training.
//!
//! Grids are trained coarse to fine. At each grid every corpus image is
//! pushed through the same steps the encoder takes: the coding target is
//! formed (with feedback from the already-trained coarser grids), and then
//! level by level the blocks the encoder would code are collected, a
//! codebook is fitted to them, and they are quantized so the next level sees
//! real residuals. Index statistics for the Huffman tables come from the
//! same pass.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{CellSpec, Config};
use crate::entropy::HuffmanTable;
use crate::error::{invalid, Error, Result};
use crate::image::Image;
use crate::kmeans::KMeansParams;
use crate::model::Model;
use crate::pyramid::{downsample_chain, lanczos_upsample};
use crate::saab::{fit_saab, BlockSource, RankReduction, SaabFitParams};
use crate::vq::{level_threshold, train_codebook, Codebook, Space};

/// Random access to training images.
pub trait ImageSource: Sync {
    fn count(&self) -> usize;
    fn side(&self) -> usize;
    fn channels(&self) -> usize;
    fn image(&self, index: usize) -> Result<Image>;
}

impl ImageSource for [Image] {
    fn count(&self) -> usize {
        self.len()
    }

    fn side(&self) -> usize {
        self.first().map_or(0, Image::side)
    }

    fn channels(&self) -> usize {
        self.first().map_or(0, Image::channels)
    }

    fn image(&self, index: usize) -> Result<Image> {
        Ok(self[index].clone())
    }
}

/// Training images held as 8-bit samples.
#[derive(Clone, Debug, Default)]
pub struct U8Corpus {
    side: usize,
    channels: usize,
    images: Vec<Vec<u8>>,
}

impl U8Corpus {
    pub fn new(side: usize, channels: usize) -> Self {
        U8Corpus {
            side,
            channels,
            images: Vec::new(),
        }
    }

    pub fn push(&mut self, img: &Image) -> Result<()> {
        if img.side() != self.side || img.channels() != self.channels {
            return Err(invalid("corpus images must share one shape"));
        }
        self.images.push(img.to_interleaved_u8());
        Ok(())
    }
}

impl ImageSource for U8Corpus {
    fn count(&self) -> usize {
        self.images.len()
    }

    fn side(&self) -> usize {
        self.side
    }

    fn channels(&self) -> usize {
        self.channels
    }

    fn image(&self, index: usize) -> Result<Image> {
        Image::from_interleaved_u8(self.side, self.channels, &self.images[index])
    }
}

/// What happened while training one cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellReport {
    pub grid: u8,
    pub exp: u8,
    /// Blocks the encoder coded at this cell over the corpus.
    pub blocks: usize,
    pub codewords: usize,
    /// Spectral dimension actually used, `None` for spatial cells.
    pub components: Option<usize>,
    pub saab_reductions: Vec<RankReduction>,
    pub kmeans_iterations: usize,
    /// Mean squared quantization error per block sample.
    pub distortion: f64,
    pub degenerate: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub cells: Vec<CellReport>,
}

pub fn train_model(corpus: &(impl ImageSource + ?Sized), config: &Config) -> Result<Model> {
    Ok(train_model_with_report(corpus, config)?.0)
}

pub fn train_model_with_report(
    corpus: &(impl ImageSource + ?Sized),
    config: &Config,
) -> Result<(Model, TrainReport)> {
    let mut out = train_inner(corpus, config, &[])?;
    Ok(out.remove(0))
}

/// Trains once and derives one model per codeword count of the last cell
/// (smallest block at the finest grid). Every other cell is shared.
pub fn train_model_sweep(
    corpus: &(impl ImageSource + ?Sized),
    config: &Config,
    last_cell_codewords: &[usize],
) -> Result<Vec<(Model, TrainReport)>> {
    if last_cell_codewords.is_empty() {
        return Err(invalid("sweep needs at least one codeword count"));
    }
    train_inner(corpus, config, last_cell_codewords)
}

fn cell_seed(seed: u64, n: u8, m: u8, salt: u64) -> u64 {
    seed ^ (((n as u64) << 16 | (m as u64) << 8 | salt).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Residual blocks at recorded positions.
struct PositionBlocks<'a> {
    residuals: &'a [Image],
    pos: &'a [(u32, u16, u16)],
    side: usize,
}

impl BlockSource for PositionBlocks<'_> {
    fn count(&self) -> usize {
        self.pos.len()
    }

    fn block_len(&self) -> usize {
        self.residuals.first().map_or(0, |r| r.block_len(self.side))
    }

    fn read(&self, index: usize, out: &mut [f32]) {
        let (i, y, x) = self.pos[index];
        self.residuals[i as usize].read_block(y as usize, x as usize, self.side, out);
    }
}

struct CellFit {
    book: Codebook,
    report: CellReport,
}

fn fit_cell(
    config: &Config,
    n: u8,
    m: u8,
    spec: &CellSpec,
    blocks: &PositionBlocks,
) -> Result<CellFit> {
    let ch = config.channels;
    let s = 1usize << m;
    let k = spec.codewords;
    let mut report = CellReport {
        grid: n,
        exp: m,
        blocks: blocks.count(),
        codewords: k,
        components: None,
        saab_reductions: Vec::new(),
        kmeans_iterations: 0,
        distortion: 0.0,
        degenerate: None,
    };
    if blocks.count() == 0 {
        return Err(Error::Training {
            cells: vec![(n, m)],
            reason: "no blocks reach this cell".into(),
        });
    }
    let started = Instant::now();
    let space = match spec.components {
        Some(_) => {
            let keep = config.keep_schedule(n, m).expect("spectral cell has a schedule");
            let params = SaabFitParams {
                keep,
                max_blocks: config.saab_max_blocks,
                seed: cell_seed(config.seed, n, m, 1),
            };
            let (t, rep) = fit_saab(blocks, s, ch, &params).map_err(|e| match e {
                Error::Training { reason, .. } => Error::Training {
                    cells: vec![(n, m)],
                    reason,
                },
                other => other,
            })?;
            report.components = Some(t.output_dim());
            report.saab_reductions = rep.reductions;
            Space::Spectral(t)
        }
        None => Space::Spatial,
    };

    let cap = match config.kmeans_points_per_centroid {
        0 => usize::MAX,
        ppc => k.saturating_sub(1).max(1).saturating_mul(ppc),
    };
    let chosen: Vec<usize> = if blocks.count() > cap {
        let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(config.seed, n, m, 2));
        let mut v = sample(&mut rng, blocks.count(), cap).into_vec();
        v.sort_unstable();
        v
    } else {
        (0..blocks.count()).collect()
    };
    let fitted = started.elapsed();
    let probe = Codebook::zero_only(n, m, ch)?;
    let to_space = |b: &[f32]| -> Result<Vec<f32>> {
        match &space {
            Space::Spectral(t) => t.forward(b),
            Space::Spatial => probe.to_space(b),
        }
    };
    let mut buf = vec![0.0f32; blocks.block_len()];
    let mut samples = Vec::new();
    for &i in &chosen {
        blocks.read(i, &mut buf);
        samples.extend(to_space(&buf)?);
    }
    let params = KMeansParams {
        k,
        max_iters: config.kmeans_iters,
        seed: cell_seed(config.seed, n, m, 3),
        max_points_per_centroid: None,
    };
    let gathered = started.elapsed();
    let (book, km) = train_codebook(n, m, ch, space, &samples, k, &params)?;
    log::debug!(
        "C_{n},{m} k={k}: transform fit {:.1}s, samples {:.1}s, k-means {:.1}s",
        fitted.as_secs_f64(),
        (gathered - fitted).as_secs_f64(),
        (started.elapsed() - gathered).as_secs_f64()
    );
    if let Some(km) = km {
        report.kmeans_iterations = km.iterations;
    }
    Ok(CellFit { book, report })
}

fn train_inner(
    corpus: &(impl ImageSource + ?Sized),
    config: &Config,
    variants: &[usize],
) -> Result<Vec<(Model, TrainReport)>> {
    config.validate()?;
    let count = corpus.count();
    if count == 0 {
        return Err(Error::Training {
            cells: Vec::new(),
            reason: "empty corpus".into(),
        });
    }
    if corpus.side() != 1 << config.finest || corpus.channels() != config.channels {
        return Err(invalid(format!(
            "corpus images are {0}x{0}x{1}, configuration needs {2}x{2}x{3}",
            corpus.side(),
            corpus.channels(),
            1usize << config.finest,
            config.channels
        )));
    }
    let dc = config.dc_grid;
    let last_grid = config.finest;
    let last_exp = config.grid_levels(last_grid).last().expect("validated").0;
    let n_variants = variants.len().max(1);

    let mut books: BTreeMap<(u8, u8), Codebook> = BTreeMap::new();
    let mut counts: BTreeMap<(u8, u8), Vec<u64>> = BTreeMap::new();
    let mut last_books: Vec<Codebook> = Vec::new();
    let mut last_counts: Vec<Vec<u64>> = Vec::new();
    let mut last_reports: Vec<CellReport> = Vec::new();
    let mut reports: Vec<CellReport> = Vec::new();
    let mut failures: Vec<((u8, u8), String)> = Vec::new();

    // Decoder-side reconstruction of the previous grid for every image.
    let mut prev: Vec<Image> = Vec::with_capacity(count);
    for i in 0..count {
        let chain = downsample_chain(&corpus.image(i)?, dc)?;
        prev.push(chain[0].quantized_u8());
    }

    for n in config.ac_grids() {
        let side = 1usize << n;
        let step = (n - dc) as usize;
        let mut residual = Vec::with_capacity(count);
        for (i, p) in prev.iter().enumerate() {
            let chain = downsample_chain(&corpus.image(i)?, dc)?;
            let target = if config.feedback {
                chain[step].sub(&lanczos_upsample(p)?)?
            } else {
                chain[step].sub(&lanczos_upsample(&chain[step - 1])?)?
            };
            residual.push(target);
        }
        let keep_recon = n < last_grid;
        let mut recon: Vec<Image> = if keep_recon {
            (0..count).map(|_| Image::zeros(side, config.channels)).collect::<Result<_>>()?
        } else {
            Vec::new()
        };

        let levels = config.grid_levels(n);
        let thresholds: Vec<f64> = levels.iter().map(|&(m, _)| config.threshold(n, m)).collect();
        let depth = levels.len();
        let mut frontier: Vec<Vec<(u16, u16)>> = vec![Vec::new(); count];
        for (l, &(m, spec)) in levels.iter().enumerate() {
            let s = side >> l;
            let th = level_threshold(&thresholds, l);
            let mut pos: Vec<(u32, u16, u16)> = Vec::new();
            if l == 0 {
                pos.extend((0..count as u32).map(|i| (i, 0, 0)));
            } else {
                for (i, parents) in frontier.iter().enumerate() {
                    for &(py, px) in parents {
                        for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                            let (y, x) = (py as usize + dy * s, px as usize + dx * s);
                            if residual[i].block_mean_square(y, x, s) >= th {
                                pos.push((i as u32, y as u16, x as u16));
                            }
                        }
                    }
                }
            }

            let is_last = n == last_grid && m == last_exp;
            let ks: Vec<usize> = if is_last && !variants.is_empty() {
                variants.to_vec()
            } else {
                vec![spec.codewords]
            };
            log::info!("training C_{n},{m}: {} blocks, {} codebook(s)", pos.len(), ks.len());
            for (v, &k) in ks.iter().enumerate() {
                let vspec = CellSpec {
                    codewords: k,
                    components: spec.components,
                };
                let blocks = PositionBlocks {
                    residuals: &residual,
                    pos: &pos,
                    side: s,
                };
                let (book, mut report) = match fit_cell(config, n, m, &vspec, &blocks) {
                    Ok(fit) => (fit.book, fit.report),
                    Err(Error::Training { reason, .. }) => {
                        log::warn!("C_{n},{m} is degenerate: {reason}");
                        failures.push(((n, m), reason.clone()));
                        let report = CellReport {
                            grid: n,
                            exp: m,
                            blocks: pos.len(),
                            codewords: 1,
                            components: None,
                            saab_reductions: Vec::new(),
                            kmeans_iterations: 0,
                            distortion: 0.0,
                            degenerate: Some(reason),
                        };
                        (Codebook::zero_only(n, m, config.channels)?, report)
                    }
                    Err(e) => return Err(e),
                };
                let started = Instant::now();
                let mut hist = vec![0u64; book.len()];
                let mut err = 0.0f64;
                let mut buf = vec![0.0f32; residual[0].block_len(s)];
                // Every variant must see the same residual, so only the
                // last one updates it.
                let apply = v + 1 == ks.len();
                for &(i, y, x) in &pos {
                    let (i, y, x) = (i as usize, y as usize, x as usize);
                    residual[i].read_block(y, x, s, &mut buf);
                    let (idx, lut) = book.quantize_block(&buf)?;
                    hist[idx as usize] += 1;
                    err += buf
                        .iter()
                        .zip(lut)
                        .map(|(a, b)| ((a - b) as f64).powi(2))
                        .sum::<f64>();
                    if apply {
                        residual[i].sub_block(y, x, s, lut);
                        if keep_recon {
                            recon[i].add_block(y, x, s, lut);
                        }
                    }
                }
                log::debug!("C_{n},{m}: quantization pass {:.1}s", started.elapsed().as_secs_f64());
                report.distortion = if pos.is_empty() { 0.0 } else { err / (pos.len() * buf.len()) as f64 };
                if is_last {
                    last_books.push(book);
                    last_counts.push(hist);
                    last_reports.push(report);
                } else {
                    books.insert((n, m), book);
                    counts.insert((n, m), hist);
                    reports.push(report);
                }
            }

            let mut next: Vec<Vec<(u16, u16)>> = vec![Vec::new(); count];
            if l + 1 < depth {
                if l == 0 {
                    let th1 = level_threshold(&thresholds, 0);
                    for (i, nx) in next.iter_mut().enumerate() {
                        if residual[i].block_mean_square(0, 0, side) >= th1 {
                            nx.push((0, 0));
                        }
                    }
                } else {
                    for &(i, y, x) in &pos {
                        next[i as usize].push((y, x));
                    }
                }
            }
            frontier = next;
        }

        if keep_recon {
            for (p, r) in prev.iter_mut().zip(&recon) {
                *p = lanczos_upsample(p)?.add(r)?;
            }
        }
    }

    if !failures.is_empty() {
        failures.sort();
        failures.dedup_by(|a, b| a.0 == b.0);
        let cells = failures.iter().map(|f| f.0).collect();
        let reason = failures
            .iter()
            .map(|((n, m), r)| format!("C_{n},{m}: {r}"))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::Training { cells, reason });
    }

    let mut out = Vec::with_capacity(n_variants);
    for ((book, hist), last_report) in last_books.into_iter().zip(last_counts).zip(last_reports) {
        let mut cfg = config.clone();
        cfg.cells.insert(
            (last_grid, last_exp),
            CellSpec {
                codewords: last_report.codewords,
                components: cfg.cells[&(last_grid, last_exp)].components,
            },
        );
        let mut all_books = books.clone();
        let mut all_counts = counts.clone();
        all_books.insert((last_grid, last_exp), book);
        all_counts.insert((last_grid, last_exp), hist);
        let tables = all_counts
            .iter()
            .map(|(&key, h)| Ok((key, HuffmanTable::build(h)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let model = Model::new(cfg, all_books, tables)?;
        let mut cells = reports.clone();
        cells.push(last_report);
        out.push((model, TrainReport { cells }));
    }
    Ok(out)
}
