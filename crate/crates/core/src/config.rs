//! Codec configuration as flat `key = value` text.
//!
//! ```text
//! finest = 8
//! dc_grid = 2
//! C_8_8 = 64,150      # codewords, spectral components
//! C_8_3 = 64,-        # "-" selects spatial VQ
//! MSETH_8_3 = 70      # per-cell early-termination threshold
//! KEEP_8_8 = 9,13,20,30,45,67,100,150
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::saab::default_keep_schedule;

pub const DEFAULT_MSETH: f64 = 70.0;

/// One codebook cell `C_{n,m}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellSpec {
    pub codewords: usize,
    /// Spectral component count; `None` selects spatial VQ.
    pub components: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub finest: u8,
    pub dc_grid: u8,
    pub channels: usize,
    pub mseth: f64,
    pub feedback: bool,
    pub seed: u64,
    pub kmeans_iters: usize,
    /// Subsampling cap for k-means; 0 disables it.
    pub kmeans_points_per_centroid: usize,
    pub saab_max_blocks: usize,
    pub cells: BTreeMap<(u8, u8), CellSpec>,
    pub mseth_overrides: BTreeMap<(u8, u8), f64>,
    pub keep_overrides: BTreeMap<(u8, u8), Vec<usize>>,
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl Config {
    /// Global settings with no cells.
    pub fn empty(finest: u8, dc_grid: u8, channels: usize) -> Config {
        Config {
            finest,
            dc_grid,
            channels,
            mseth: DEFAULT_MSETH,
            feedback: true,
            seed: 1,
            kmeans_iters: 100,
            kmeans_points_per_centroid: 256,
            saab_max_blocks: 8192,
            cells: BTreeMap::new(),
            mseth_overrides: BTreeMap::new(),
            keep_overrides: BTreeMap::new(),
        }
    }

    /// The published 256x256 parameter table; `spatial_codewords` is the
    /// codeword count of the spatial 8x8 cell at the finest grid.
    pub fn reference_256(spatial_codewords: usize) -> Config {
        let mut c = Config::empty(8, 2, 3);
        c.kmeans_iters = 25;
        for &(n, m, k, comp) in REFERENCE_CELLS {
            c.cells.insert((n, m), cell(k, comp));
        }
        c.cells.insert((8, 3), cell(spatial_codewords, 0));
        c
    }

    /// 512x512 profile: the 256 table with its finest column repeated one
    /// grid up, block sizes taken relative to the grid.
    pub fn reference_512(spatial_codewords: usize) -> Config {
        let mut c = Config::reference_256(64);
        c.finest = 9;
        let top: Vec<(u8, CellSpec)> = c
            .cells
            .iter()
            .filter(|((n, _), _)| *n == 8)
            .map(|(&(_, m), s)| (m, s.clone()))
            .collect();
        for (m, s) in top {
            c.cells.insert((9, m + 1), s);
        }
        c.cells.insert((9, 4), cell(spatial_codewords, 0));
        c
    }

    pub fn parse(text: &str) -> Result<Config> {
        let mut c = Config::empty(8, 2, 3);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| cfg_err(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let ctx = |e: String| cfg_err(format!("line {}: {key}: {e}", lineno + 1));
            match key {
                "finest" => c.finest = num(value).map_err(ctx)?,
                "dc_grid" => c.dc_grid = num(value).map_err(ctx)?,
                "channels" => c.channels = num(value).map_err(ctx)?,
                "mseth" => c.mseth = num(value).map_err(ctx)?,
                "feedback" => c.feedback = boolean(value).map_err(ctx)?,
                "seed" => c.seed = num(value).map_err(ctx)?,
                "kmeans_iters" => c.kmeans_iters = num(value).map_err(ctx)?,
                "kmeans_points_per_centroid" => c.kmeans_points_per_centroid = num(value).map_err(ctx)?,
                "saab_max_blocks" => c.saab_max_blocks = num(value).map_err(ctx)?,
                _ => {
                    let (prefix, cell_key) = split_cell_key(key).map_err(ctx)?;
                    match prefix {
                        "C" => {
                            let (k, comp) = value
                                .split_once(',')
                                .ok_or_else(|| ctx("expected codewords,components".into()))?;
                            let comp = comp.trim();
                            let components = if comp == "-" { None } else { Some(num(comp).map_err(ctx)?) };
                            c.cells.insert(
                                cell_key,
                                CellSpec {
                                    codewords: num(k.trim()).map_err(ctx)?,
                                    components,
                                },
                            );
                        }
                        "MSETH" => {
                            c.mseth_overrides.insert(cell_key, num(value).map_err(ctx)?);
                        }
                        "KEEP" => {
                            let keep = value
                                .split(',')
                                .map(|v| num(v.trim()))
                                .collect::<std::result::Result<Vec<usize>, String>>()
                                .map_err(ctx)?;
                            c.keep_overrides.insert(cell_key, keep);
                        }
                        _ => return Err(ctx("unknown key".into())),
                    }
                }
            }
        }
        c.validate()?;
        Ok(c)
    }

    /// Canonical text form; `parse(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "finest = {}", self.finest);
        let _ = writeln!(s, "dc_grid = {}", self.dc_grid);
        let _ = writeln!(s, "channels = {}", self.channels);
        let _ = writeln!(s, "mseth = {}", self.mseth);
        let _ = writeln!(s, "feedback = {}", self.feedback);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "kmeans_iters = {}", self.kmeans_iters);
        let _ = writeln!(s, "kmeans_points_per_centroid = {}", self.kmeans_points_per_centroid);
        let _ = writeln!(s, "saab_max_blocks = {}", self.saab_max_blocks);
        for (&(n, m), spec) in self.cells.iter().rev() {
            match spec.components {
                Some(k) => {
                    let _ = writeln!(s, "C_{n}_{m} = {},{k}", spec.codewords);
                }
                None => {
                    let _ = writeln!(s, "C_{n}_{m} = {},-", spec.codewords);
                }
            }
        }
        for (&(n, m), v) in self.mseth_overrides.iter().rev() {
            let _ = writeln!(s, "MSETH_{n}_{m} = {v}");
        }
        for (&(n, m), keep) in self.keep_overrides.iter().rev() {
            let list: Vec<String> = keep.iter().map(usize::to_string).collect();
            let _ = writeln!(s, "KEEP_{n}_{m} = {}", list.join(","));
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=13).contains(&self.dc_grid) || self.dc_grid >= self.finest || self.finest > 14 {
            return Err(cfg_err(format!(
                "grids must satisfy 2 <= dc_grid < finest <= 14 (got dc_grid {}, finest {})",
                self.dc_grid, self.finest
            )));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(cfg_err(format!("channels must be 1 or 3, got {}", self.channels)));
        }
        if !(self.mseth >= 0.0) {
            return Err(cfg_err("mseth must be non-negative"));
        }
        if self.kmeans_iters == 0 || self.saab_max_blocks == 0 {
            return Err(cfg_err("kmeans_iters and saab_max_blocks must be positive"));
        }
        for &(n, m) in self.cells.keys() {
            if n <= self.dc_grid || n > self.finest || m > n {
                return Err(cfg_err(format!("cell C_{n}_{m} is outside the grid range")));
            }
        }
        for n in self.dc_grid + 1..=self.finest {
            let levels = self.grid_levels(n);
            if levels.len() < 2 {
                return Err(cfg_err(format!("grid {n} needs cells C_{n}_{n} and C_{n}_{}", n - 1)));
            }
            let lowest = levels.last().expect("non-empty").0;
            if self.cells.keys().any(|&(g, m)| g == n && m < lowest) {
                return Err(cfg_err(format!("grid {n} cells must form a contiguous run from C_{n}_{n}")));
            }
            for (m, spec) in levels {
                if spec.codewords == 0 {
                    return Err(cfg_err(format!("C_{n}_{m} needs at least one codeword")));
                }
                if let Some(k) = spec.components {
                    let full = (1usize << (2 * m)) * self.channels;
                    if m == 0 || k == 0 || k > full {
                        return Err(cfg_err(format!(
                            "C_{n}_{m}: {k} components is not valid for {full}-sample blocks"
                        )));
                    }
                }
            }
        }
        for (&(n, m), &v) in &self.mseth_overrides {
            if !self.cells.contains_key(&(n, m)) || !(v >= 0.0) {
                return Err(cfg_err(format!("MSETH_{n}_{m} needs an existing cell and a value >= 0")));
            }
        }
        for (&(n, m), keep) in &self.keep_overrides {
            let spec = self
                .cells
                .get(&(n, m))
                .ok_or_else(|| cfg_err(format!("KEEP_{n}_{m} has no matching cell")))?;
            let k = spec
                .components
                .ok_or_else(|| cfg_err(format!("KEEP_{n}_{m} given for a spatial cell")))?;
            if keep.len() != m as usize || keep.last() != Some(&k) {
                return Err(cfg_err(format!(
                    "KEEP_{n}_{m} must list {m} counts ending in {k}"
                )));
            }
            let mut avail = 4 * self.channels;
            for &v in keep {
                if v == 0 || v > avail {
                    return Err(cfg_err(format!("KEEP_{n}_{m} is not feasible")));
                }
                avail = 4 * v;
            }
        }
        Ok(())
    }

    /// Cells of grid `n` from the largest block down, stopping at the first gap.
    pub fn grid_levels(&self, n: u8) -> Vec<(u8, &CellSpec)> {
        let mut out = Vec::new();
        let mut m = n as i32;
        while m >= 0 {
            match self.cells.get(&(n, m as u8)) {
                Some(spec) => out.push((m as u8, spec)),
                None => break,
            }
            m -= 1;
        }
        out
    }

    /// Early-termination threshold for blocks coded by `C_{n,m}`.
    pub fn threshold(&self, n: u8, m: u8) -> f64 {
        self.mseth_overrides.get(&(n, m)).copied().unwrap_or(self.mseth)
    }

    /// Per-stage Saab keep counts for a spectral cell.
    pub fn keep_schedule(&self, n: u8, m: u8) -> Option<Vec<usize>> {
        let k = self.cells.get(&(n, m))?.components?;
        Some(
            self.keep_overrides
                .get(&(n, m))
                .cloned()
                .unwrap_or_else(|| default_keep_schedule(m as usize, self.channels, k)),
        )
    }

    pub fn ac_grids(&self) -> std::ops::RangeInclusive<u8> {
        self.dc_grid + 1..=self.finest
    }
}

fn cell(k: usize, comp: usize) -> CellSpec {
    CellSpec {
        codewords: k,
        components: (comp > 0).then_some(comp),
    }
}

/// `(grid, block exponent, codewords, components)`, 0 components = spatial.
const REFERENCE_CELLS: &[(u8, u8, usize, usize)] = &[
    (8, 8, 64, 150),
    (8, 7, 128, 150),
    (8, 6, 512, 150),
    (8, 5, 512, 50),
    (8, 4, 512, 30),
    (8, 3, 64, 0),
    (7, 7, 64, 150),
    (7, 6, 128, 150),
    (7, 5, 512, 50),
    (7, 4, 512, 30),
    (7, 3, 512, 20),
    (7, 2, 128, 0),
    (6, 6, 64, 100),
    (6, 5, 128, 40),
    (6, 4, 512, 20),
    (6, 3, 512, 12),
    (6, 2, 512, 0),
    (5, 5, 64, 40),
    (5, 4, 128, 20),
    (5, 3, 512, 12),
    (5, 2, 512, 0),
    (4, 4, 64, 20),
    (4, 3, 32, 12),
    (4, 2, 64, 0),
    (3, 3, 64, 12),
    (3, 2, 32, 0),
];

/// Codeword counts for the spatial 8x8 cell that give the published RD points.
pub const SWEEP_CODEWORDS: [usize; 5] = [8, 16, 32, 64, 128];

fn split_cell_key(key: &str) -> std::result::Result<(&str, (u8, u8)), String> {
    let mut parts = key.split('_');
    let (Some(prefix), Some(n), Some(m), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
        return Err("unknown key".into());
    };
    Ok((prefix, (num(n)?, num(m)?)))
}

fn num<T: std::str::FromStr>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|_| format!("cannot parse {s:?}"))
}

fn boolean(s: &str) -> std::result::Result<bool, String> {
    match s {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("cannot parse {s:?} as a boolean")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_profile_has_26_coded_cells() {
        let c = Config::reference_256(64);
        c.validate().unwrap();
        assert_eq!(c.cells.len(), 26);
        let spatial = c.cells.values().filter(|s| s.components.is_none()).count();
        assert_eq!(spatial, 6);
        assert_eq!(c.grid_levels(8).len(), 6);
        assert_eq!(c.grid_levels(3).iter().map(|l| l.0).collect::<Vec<_>>(), vec![3, 2]);
        assert_eq!(c.threshold(7, 4), 70.0);
    }

    #[test]
    fn text_round_trip() {
        let mut c = Config::reference_256(16);
        c.mseth_overrides.insert((8, 3), 90.0);
        c.keep_overrides.insert((4, 3), vec![9, 12, 12]);
        c.feedback = false;
        let back = Config::parse(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.keep_schedule(4, 3), Some(vec![9, 12, 12]));
        assert_eq!(back.keep_schedule(8, 3), None);
    }

    #[test]
    fn profile_512_extends_one_grid() {
        let c = Config::reference_512(64);
        c.validate().unwrap();
        assert_eq!(c.finest, 9);
        assert_eq!(c.cells[&(9, 9)], CellSpec { codewords: 64, components: Some(150) });
        assert_eq!(c.cells[&(9, 4)].components, None);
        assert_eq!(c.grid_levels(9).len(), 6);
    }

    #[test]
    fn parse_errors() {
        let base = "finest = 4\ndc_grid = 2\nC_3_3 = 8,12\nC_3_2 = 8,-\nC_4_4 = 8,12\nC_4_3 = 8,-\n";
        Config::parse(base).unwrap();
        for bad in [
            "bogus = 1\n",
            "C_4_3 = 8\n",
            "C_5_5 = 8,1\n",
            "MSETH_4_1 = 3\n",
            "C_4_3 = 8,400\n",
            "feedback = maybe\n",
            "C_4_1 = 8,-\n",
            "KEEP_4_4 = 9,12\n",
        ] {
            let text = format!("{base}{bad}");
            assert!(matches!(Config::parse(&text), Err(Error::Config(_))), "{bad}");
        }
        assert!(Config::parse("finest = 4\ndc_grid = 2\nC_3_3 = 8,12\n").is_err());
    }
}
