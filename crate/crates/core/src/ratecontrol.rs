//! Quad-tree bookkeeping for early termination, plus rate analytics.

use crate::bitio::{BitReader, BitWriter};
use crate::error::{corrupt, invalid, Result};

/// Per-level split flags in visiting order.
///
/// Level 0 holds a single flag telling whether the whole-grid block is
/// split. Level `L >= 1` holds one flag per quadrant of every flagged block
/// at level `L - 1`, quadrants in raster order. A set flag at level `L >= 1`
/// means the quadrant is coded at that level (and, below the last level,
/// split again).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuadTree {
    levels: Vec<Vec<bool>>,
    base_side: usize,
}

impl QuadTree {
    pub fn new(levels: Vec<Vec<bool>>, base_side: usize) -> Result<QuadTree> {
        if levels.is_empty() || levels[0].len() != 1 {
            return Err(invalid("quad-tree level 0 must hold exactly one flag"));
        }
        if !base_side.is_power_of_two() || base_side < 1 << (levels.len() - 1) {
            return Err(invalid("quad-tree is deeper than its base block allows"));
        }
        for l in 1..levels.len() {
            let want = 4 * count_ones(&levels[l - 1]);
            if levels[l].len() != want {
                return Err(invalid(format!(
                    "quad-tree level {l} has {} flags, expected {want}",
                    levels[l].len()
                )));
            }
        }
        Ok(QuadTree { levels, base_side })
    }

    /// A tree that stops after the mandatory level-0 block.
    pub fn terminated(depth: usize, base_side: usize) -> Result<QuadTree> {
        let mut levels = vec![vec![false]];
        levels.resize(depth.max(1), Vec::new());
        QuadTree::new(levels, base_side)
    }

    pub fn levels(&self) -> &[Vec<bool>] {
        &self.levels
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn base_side(&self) -> usize {
        self.base_side
    }

    pub fn total_flags(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    pub fn ones(&self, level: usize) -> usize {
        count_ones(&self.levels[level])
    }

    /// Raw flags in level order; the length equals [`total_flags`](Self::total_flags).
    pub fn serialize(&self, w: &mut BitWriter) {
        for level in &self.levels {
            for &f in level {
                w.write_bit(f);
            }
        }
    }

    pub fn deserialize(r: &mut BitReader, base_side: usize, depth: usize) -> Result<QuadTree> {
        if depth == 0 {
            return Err(invalid("quad-tree depth must be at least 1"));
        }
        let mut levels: Vec<Vec<bool>> = Vec::with_capacity(depth);
        let mut want = 1;
        for _ in 0..depth {
            let mut flags = Vec::with_capacity(want);
            for _ in 0..want {
                flags.push(
                    r.read_bit()
                        .ok_or_else(|| corrupt(None, "quad-tree flags truncated"))?,
                );
            }
            want = 4 * count_ones(&flags);
            levels.push(flags);
        }
        QuadTree::new(levels, base_side)
    }

    /// Block side at `level`.
    pub fn block_side(&self, level: usize) -> usize {
        self.base_side >> level
    }
}

fn count_ones(flags: &[bool]) -> usize {
    flags.iter().filter(|&&f| f).count()
}

/// bpp at grid `G_finest` of one bit per pixel spent at grid `G_n`: `4^(n - finest)`.
pub fn grid_cost_scale(n: u8, finest: u8) -> Result<f64> {
    if n > finest {
        return Err(invalid(format!("grid {n} is finer than the finest grid {finest}")));
    }
    Ok(0.25f64.powi((finest - n) as i32))
}

/// MSE reduction bought per bit per pixel.
pub fn bit_efficiency(delta_mse: f64, delta_bpp: f64) -> Result<f64> {
    if delta_bpp.is_nan() || delta_bpp <= 0.0 {
        return Err(invalid("bit efficiency needs a positive rate increment"));
    }
    Ok(delta_mse / delta_bpp)
}

/// PSNR in dB for 8-bit samples.
pub fn psnr(mse: f64) -> f64 {
    if mse <= 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0f64 * 255.0 / mse).log10()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RDPoint {
    pub bpp: f64,
    pub psnr: f64,
    pub mse: f64,
}

impl RDPoint {
    pub fn new(bpp: f64, mse: f64) -> RDPoint {
        RDPoint {
            bpp,
            psnr: psnr(mse),
            mse,
        }
    }
}
