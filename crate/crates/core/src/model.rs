//! Trained model: configuration, codebooks (with their transforms and
//! look-up tables) and Huffman tables, plus its binary file format.
//!
//! Layout, little-endian:
//!
//! ```text
//! "MGBM" | version u8 | config text (u32 length + UTF-8) | cell count u32
//! per cell: n u8 | m u8 | space u8 (0 spatial, 1 spectral) | channels u8
//!           | codewords u32 | dim u32
//!           | [spectral] stage count u8, per stage: in_side u32,
//!             in_channels u32, kept count u32, kept u32..., kernels f32...,
//!             energies f64...
//!           | centroids f32... | look-up table f32... | code lengths u8...
//! ```
//!
//! The model id is the first 8 bytes of the SHA-256 of the whole file.

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::entropy::HuffmanTable;
use crate::error::{Error, Result};
use crate::saab::{SaabStage, SaabTransform};
use crate::vq::{Codebook, Space};

pub const MODEL_MAGIC: &[u8; 4] = b"MGBM";
pub const MODEL_VERSION: u8 = 1;

pub type ModelId = [u8; 8];

#[derive(Clone, Debug)]
pub struct Model {
    config: Config,
    books: BTreeMap<(u8, u8), Codebook>,
    tables: BTreeMap<(u8, u8), HuffmanTable>,
    bytes: Vec<u8>,
    id: ModelId,
}

impl PartialEq for Model {
    fn eq(&self, other: &Model) -> bool {
        self.bytes == other.bytes
    }
}

impl Model {
    pub fn new(
        config: Config,
        books: BTreeMap<(u8, u8), Codebook>,
        tables: BTreeMap<(u8, u8), HuffmanTable>,
    ) -> Result<Model> {
        config.validate()?;
        for n in config.ac_grids() {
            for (m, _) in config.grid_levels(n) {
                let book = books
                    .get(&(n, m))
                    .ok_or_else(|| Error::Model(format!("no codebook for C_{n},{m}")))?;
                let table = tables
                    .get(&(n, m))
                    .ok_or_else(|| Error::Model(format!("no Huffman table for C_{n},{m}")))?;
                if book.grid() != n || book.exp() != m || book.channels() != config.channels {
                    return Err(Error::Model(format!("codebook for C_{n},{m} has the wrong shape")));
                }
                if table.alphabet_size() != book.len() {
                    return Err(Error::Model(format!(
                        "Huffman table for C_{n},{m} covers {} symbols, codebook has {}",
                        table.alphabet_size(),
                        book.len()
                    )));
                }
            }
        }
        if books.len() != config.cells.len() || tables.len() != config.cells.len() {
            return Err(Error::Model("model holds cells the configuration does not list".into()));
        }
        let bytes = encode_model(&config, &books, &tables);
        let id = content_id(&bytes);
        Ok(Model {
            config,
            books,
            tables,
            bytes,
            id,
        })
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    /// Same codebooks and tables with a different early-termination
    /// threshold everywhere. Per-cell overrides are dropped.
    pub fn with_mseth(&self, mseth: f64) -> Result<Model> {
        let mut config = self.config.clone();
        config.mseth = mseth;
        config.mseth_overrides.clear();
        Model::new(config, self.books.clone(), self.tables.clone())
    }

    pub fn id(&self) -> ModelId {
        self.id
    }

    pub fn to_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn codebook(&self, n: u8, m: u8) -> Option<&Codebook> {
        self.books.get(&(n, m))
    }

    pub fn table(&self, n: u8, m: u8) -> Option<&HuffmanTable> {
        self.tables.get(&(n, m))
    }

    pub fn codebooks(&self) -> &BTreeMap<(u8, u8), Codebook> {
        &self.books
    }

    /// Block exponents of grid `n`, largest first.
    pub fn grid_exps(&self, n: u8) -> Vec<u8> {
        self.config.grid_levels(n).into_iter().map(|(m, _)| m).collect()
    }

    /// Codebooks of grid `n`, largest block first.
    pub fn grid_books(&self, n: u8) -> Vec<&Codebook> {
        self.grid_exps(n).into_iter().map(|m| &self.books[&(n, m)]).collect()
    }

    pub fn grid_tables(&self, n: u8) -> Vec<&HuffmanTable> {
        self.grid_exps(n).into_iter().map(|m| &self.tables[&(n, m)]).collect()
    }

    pub fn grid_thresholds(&self, n: u8) -> Vec<f64> {
        self.grid_exps(n).into_iter().map(|m| self.config.threshold(n, m)).collect()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
        let mut r = Reader { data: bytes, pos: 0 };
        if r.take(4)? != MODEL_MAGIC {
            return Err(Error::Format("not a model file (bad magic)".into()));
        }
        let version = r.u8()?;
        if version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported model version {version}")));
        }
        let cfg_len = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(cfg_len)?)
            .map_err(|_| Error::Format("model config is not UTF-8".into()))?;
        let config = Config::parse(text)?;
        let cells = r.u32()?;
        let mut books = BTreeMap::new();
        let mut tables = BTreeMap::new();
        for _ in 0..cells {
            let n = r.u8()?;
            let m = r.u8()?;
            let tag = r.u8()?;
            let channels = r.u8()? as usize;
            let k = r.u32()? as usize;
            let dim = r.u32()? as usize;
            let side = 1usize << m.min(14);
            let space = match tag {
                0 => Space::Spatial,
                1 => {
                    let count = r.u8()? as usize;
                    let mut stages = Vec::with_capacity(count);
                    for _ in 0..count {
                        let in_side = r.u32()? as usize;
                        let in_channels = r.u32()? as usize;
                        let kept_n = r.u32()? as usize;
                        let kept = (0..kept_n).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
                        let d = 4usize.saturating_mul(in_channels);
                        let kernels = r.f32s(d.saturating_mul(d))?;
                        let energies = (0..d).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
                        stages.push(SaabStage::from_parts(in_side, in_channels, kernels, energies, kept)?);
                    }
                    Space::Spectral(SaabTransform::from_stages(side, channels, stages)?)
                }
                t => return Err(Error::Format(format!("unknown codebook space tag {t}"))),
            };
            let centroids = r.f32s(k.saturating_mul(dim))?;
            let lut = r.f32s(k.saturating_mul(side * side * channels))?;
            let book = Codebook::with_lut(n, m, channels, space, centroids, lut)?;
            let lengths = r.take(k)?.to_vec();
            tables.insert((n, m), HuffmanTable::from_lengths(lengths)?);
            books.insert((n, m), book);
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after model".into()));
        }
        let model = Model::new(config, books, tables)?;
        if model.bytes != bytes {
            return Err(Error::Format("model file is not in canonical form".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, &self.bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Model> {
        Model::from_bytes(&std::fs::read(path)?)
    }
}

pub fn content_id(bytes: &[u8]) -> ModelId {
    let digest = Sha256::digest(bytes);
    let mut id = [0u8; 8];
    id.copy_from_slice(&digest[..8]);
    id
}

fn encode_model(
    config: &Config,
    books: &BTreeMap<(u8, u8), Codebook>,
    tables: &BTreeMap<(u8, u8), HuffmanTable>,
) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.push(MODEL_VERSION);
    let text = config.to_text();
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    out.extend_from_slice(&(books.len() as u32).to_le_bytes());
    for (&(n, m), book) in books {
        out.push(n);
        out.push(m);
        out.push(book.is_spectral() as u8);
        out.push(book.channels() as u8);
        out.extend_from_slice(&(book.len() as u32).to_le_bytes());
        out.extend_from_slice(&(book.dim() as u32).to_le_bytes());
        if let Space::Spectral(t) = book.space() {
            out.push(t.stages().len() as u8);
            for st in t.stages() {
                out.extend_from_slice(&(st.in_side() as u32).to_le_bytes());
                out.extend_from_slice(&(st.in_channels() as u32).to_le_bytes());
                out.extend_from_slice(&(st.kept().len() as u32).to_le_bytes());
                for &k in st.kept() {
                    out.extend_from_slice(&(k as u32).to_le_bytes());
                }
                for &v in st.kernels() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                for &e in st.energies() {
                    out.extend_from_slice(&e.to_le_bytes());
                }
            }
        }
        for &v in book.centroids() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for &v in book.lut() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(tables[&(n, m)].lengths());
    }
    out
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| Error::Format("model file truncated".into()))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::Format("model file truncated".into()))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect())
    }
}
