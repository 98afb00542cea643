//! Progressive container format.
//!
//! ```text
//! header (16 bytes): "MGBV" | version u8 | finest u8 | dc_grid u8 | channels u8 | model id [8]
//! DC: channels * 4^dc_grid raw bytes, row-major, channels interleaved
//! per grid, coarse to fine: grid u8 | body length u32 | body
//! body: quad-tree flags (byte padded) | Huffman payload per level, largest
//!       block first (each byte padded) | CRC-32 of the preceding body bytes
//! ```
//!
//! Every section boundary is a valid truncation point.

use std::fmt::Write as _;

use crate::bitio::{BitReader, BitWriter};
use crate::entropy::HuffmanTable;
use crate::error::{corrupt, invalid, Error, Result};
use crate::model::{Model, ModelId};
use crate::ratecontrol::QuadTree;
use crate::vq::GridCode;

pub const STREAM_MAGIC: &[u8; 4] = b"MGBV";
pub const STREAM_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 16;
/// Grid byte plus length prefix.
pub const SECTION_FRAMING: usize = 5;
pub const CRC_LEN: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamHeader {
    pub finest: u8,
    pub dc_grid: u8,
    pub channels: u8,
    pub model_id: ModelId,
}

impl StreamHeader {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[..4].copy_from_slice(STREAM_MAGIC);
        b[4] = STREAM_VERSION;
        b[5] = self.finest;
        b[6] = self.dc_grid;
        b[7] = self.channels;
        b[8..].copy_from_slice(&self.model_id);
        b
    }

    pub fn parse(bytes: &[u8]) -> Result<StreamHeader> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format("stream shorter than its header".into()));
        }
        if &bytes[..4] != STREAM_MAGIC {
            return Err(Error::Format("not an MGBV stream (bad magic)".into()));
        }
        if bytes[4] != STREAM_VERSION {
            return Err(Error::Format(format!("unsupported stream version {}", bytes[4])));
        }
        let h = StreamHeader {
            finest: bytes[5],
            dc_grid: bytes[6],
            channels: bytes[7],
            model_id: bytes[8..16].try_into().expect("8 bytes"),
        };
        h.validate().map_err(|e| Error::Format(e.to_string()))?;
        Ok(h)
    }

    fn validate(&self) -> Result<()> {
        if self.dc_grid >= self.finest || self.finest > 14 {
            return Err(invalid(format!(
                "header grids invalid (dc {}, finest {})",
                self.dc_grid, self.finest
            )));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(invalid(format!("header channel count {} invalid", self.channels)));
        }
        Ok(())
    }

    pub fn dc_len(&self) -> usize {
        self.channels as usize * (1usize << (2 * self.dc_grid as usize))
    }

    pub fn pixels(&self) -> u64 {
        1u64 << (2 * self.finest as u32)
    }
}

/// One coded grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Section {
    pub grid: u8,
    /// Body including the trailing CRC.
    pub body: Vec<u8>,
}

/// Bit cost of one section.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SectionBits {
    pub grid: u8,
    /// Quad-tree flags, their padding, framing and CRC.
    pub qt_bits: u64,
    /// Payload bits per level including padding, with the block exponent.
    pub level_bits: Vec<(u8, u64)>,
}

impl SectionBits {
    pub fn total(&self) -> u64 {
        self.qt_bits + self.level_bits.iter().map(|l| l.1).sum::<u64>()
    }
}

/// Serializes a grid code with one Huffman table per level.
pub fn encode_section(code: &GridCode, tables: &[&HuffmanTable], exps: &[u8]) -> Result<(Section, SectionBits)> {
    if tables.len() != code.indices.len() || exps.len() != tables.len() {
        return Err(invalid("one Huffman table per level is required"));
    }
    let mut w = BitWriter::new();
    code.tree.serialize(&mut w);
    w.align();
    let qt_payload = w.bit_len() as u64;
    let mut level_bits = Vec::with_capacity(tables.len());
    for ((indices, table), &m) in code.indices.iter().zip(tables).zip(exps) {
        let before = w.bit_len();
        table.encode(indices, &mut w)?;
        w.align();
        level_bits.push((m, (w.bit_len() - before) as u64));
    }
    let mut body = w.into_bytes();
    let crc = crc32fast::hash(&body);
    body.extend_from_slice(&crc.to_le_bytes());
    let bits = SectionBits {
        grid: code.grid,
        qt_bits: qt_payload + 8 * (SECTION_FRAMING + CRC_LEN) as u64,
        level_bits,
    };
    Ok((Section { grid: code.grid, body }, bits))
}

/// Parses a section body back into a grid code.
pub fn decode_section(
    grid: u8,
    body: &[u8],
    tables: &[&HuffmanTable],
    exps: &[u8],
    base_side: usize,
) -> Result<(GridCode, SectionBits)> {
    let g = Some(grid);
    if body.len() < CRC_LEN {
        return Err(corrupt(g, "section shorter than its checksum"));
    }
    let (payload, crc) = body.split_at(body.len() - CRC_LEN);
    if crc32fast::hash(payload) != u32::from_le_bytes(crc.try_into().expect("4 bytes")) {
        return Err(corrupt(g, "checksum mismatch"));
    }
    let with_grid = |e: Error| match e {
        Error::CorruptStream { reason, .. } => corrupt(g, reason),
        other => other,
    };
    let mut r = BitReader::new(payload);
    let tree = QuadTree::deserialize(&mut r, base_side, tables.len()).map_err(with_grid)?;
    r.align();
    let qt_payload = r.bit_pos() as u64;
    let mut indices = Vec::with_capacity(tables.len());
    let mut level_bits = Vec::with_capacity(tables.len());
    for (l, (table, &m)) in tables.iter().zip(exps).enumerate() {
        let count = if l == 0 { 1 } else { tree.ones(l) };
        let before = r.bit_pos();
        indices.push(table.decode(&mut r, count).map_err(with_grid)?);
        r.align();
        level_bits.push((m, (r.bit_pos() - before) as u64));
    }
    if r.byte_pos() != payload.len() {
        return Err(corrupt(g, "unused bytes at the end of the section"));
    }
    let bits = SectionBits {
        grid,
        qt_bits: qt_payload + 8 * (SECTION_FRAMING + CRC_LEN) as u64,
        level_bits,
    };
    Ok((GridCode { grid, tree, indices }, bits))
}

/// Concatenates header, DC samples and sections.
pub fn write_stream(header: &StreamHeader, dc: &[u8], sections: &[Section]) -> Result<Vec<u8>> {
    header.validate()?;
    if dc.len() != header.dc_len() {
        return Err(invalid(format!("DC has {} bytes, header implies {}", dc.len(), header.dc_len())));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + dc.len() + sections.iter().map(|s| s.body.len() + 5).sum::<usize>());
    out.extend_from_slice(&header.to_bytes());
    out.extend_from_slice(dc);
    for (i, s) in sections.iter().enumerate() {
        let want = header.dc_grid + 1 + i as u8;
        if s.grid != want || s.grid > header.finest {
            return Err(invalid(format!("section for grid {} out of order (expected {want})", s.grid)));
        }
        let len = u32::try_from(s.body.len()).map_err(|_| invalid("section too large"))?;
        out.push(s.grid);
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&s.body);
    }
    Ok(out)
}

/// A stream split into its parts, bodies borrowed from the input.
#[derive(Clone, Debug)]
pub struct ParsedStream<'a> {
    pub header: StreamHeader,
    pub dc: &'a [u8],
    pub sections: Vec<(u8, &'a [u8])>,
}

pub fn parse_stream(bytes: &[u8]) -> Result<ParsedStream<'_>> {
    let header = StreamHeader::parse(bytes)?;
    let dc_end = HEADER_LEN + header.dc_len();
    if bytes.len() < dc_end {
        return Err(corrupt(Some(header.dc_grid), "DC samples truncated"));
    }
    let dc = &bytes[HEADER_LEN..dc_end];
    let mut sections = Vec::new();
    let mut pos = dc_end;
    let mut expect = header.dc_grid + 1;
    while pos < bytes.len() {
        let grid = bytes[pos];
        if grid != expect || grid > header.finest {
            return Err(corrupt(Some(grid), format!("unexpected section (expected grid {expect})")));
        }
        if bytes.len() < pos + SECTION_FRAMING {
            return Err(corrupt(Some(grid), "section length truncated"));
        }
        let len = u32::from_le_bytes(bytes[pos + 1..pos + 5].try_into().expect("4 bytes")) as usize;
        let start = pos + SECTION_FRAMING;
        let end = start
            .checked_add(len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| corrupt(Some(grid), "section body truncated"))?;
        sections.push((grid, &bytes[start..end]));
        pos = end;
        expect += 1;
    }
    Ok(ParsedStream { header, dc, sections })
}

/// Checks that a stream was written for `model`.
pub fn check_model(header: &StreamHeader, model: &Model) -> Result<()> {
    if header.model_id != model.id() {
        return Err(Error::Model(format!(
            "stream was coded with model {}, not {}",
            hex(&header.model_id),
            hex(&model.id())
        )));
    }
    let c = model.config();
    if header.finest != c.finest || header.dc_grid != c.dc_grid || header.channels as usize != c.channels {
        return Err(Error::Model("stream geometry differs from the model configuration".into()));
    }
    Ok(())
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Exact bit cost of a stream, split by grid and block size.
#[derive(Clone, Debug, PartialEq)]
pub struct BitAccounting {
    pub finest: u8,
    pub dc_grid: u8,
    pub dc_bits: u64,
    pub grids: Vec<SectionBits>,
}

impl BitAccounting {
    pub fn pixels(&self) -> u64 {
        1u64 << (2 * self.finest as u32)
    }

    /// Payload bits: everything after the header.
    pub fn total_bits(&self) -> u64 {
        self.dc_bits + self.grids.iter().map(SectionBits::total).sum::<u64>()
    }

    pub fn total_bpp(&self) -> f64 {
        self.total_bits() as f64 / self.pixels() as f64
    }

    pub fn bpp(&self, bits: u64) -> f64 {
        bits as f64 / self.pixels() as f64
    }

    /// Bits for blocks of side `2^m` at grid `n`, if that cell exists.
    pub fn cell_bits(&self, n: u8, m: u8) -> Option<u64> {
        self.grids
            .iter()
            .find(|g| g.grid == n)
            .and_then(|g| g.level_bits.iter().find(|l| l.0 == m).map(|l| l.1))
    }

    /// Table with one column per grid (finest first) and rows for the
    /// quad-tree, the DC and every block size.
    pub fn to_table(&self) -> String {
        let grids: Vec<u8> = (self.dc_grid..=self.finest).rev().collect();
        let fmt = |v: Option<u64>| match v {
            Some(b) => format!("{:.3e}", self.bpp(b)),
            None => "-".to_string(),
        };
        let mut s = String::new();
        let _ = write!(s, "{:<8}", "");
        for n in &grids {
            let _ = write!(s, " {:>10}", format!("G_{n}"));
        }
        s.push('\n');
        let _ = write!(s, "{:<8}", "QT");
        for &n in &grids {
            let v = self.grids.iter().find(|g| g.grid == n).map(|g| g.qt_bits);
            let _ = write!(s, " {:>10}", fmt(v));
        }
        s.push('\n');
        let _ = write!(s, "{:<8}", "DC");
        for &n in &grids {
            let v = (n == self.dc_grid).then_some(self.dc_bits);
            let _ = write!(s, " {:>10}", fmt(v));
        }
        s.push('\n');
        let max_m = self.grids.iter().flat_map(|g| g.level_bits.iter().map(|l| l.0)).max();
        let min_m = self.grids.iter().flat_map(|g| g.level_bits.iter().map(|l| l.0)).min();
        if let (Some(hi), Some(lo)) = (max_m, min_m) {
            for m in (lo..=hi).rev() {
                let _ = write!(s, "{:<8}", format!("C_*,{m}"));
                for &n in &grids {
                    let _ = write!(s, " {:>10}", fmt(self.cell_bits(n, m)));
                }
                s.push('\n');
            }
        }
        let _ = writeln!(s, "total {:.6} bpp ({} bits / {} pixels)", self.total_bpp(), self.total_bits(), self.pixels());
        s
    }
}

/// Parses every section of `bytes` against `model` and tallies its bits.
pub fn bit_accounting(bytes: &[u8], model: &Model) -> Result<BitAccounting> {
    let parsed = parse_stream(bytes)?;
    check_model(&parsed.header, model)?;
    let mut grids = Vec::with_capacity(parsed.sections.len());
    for &(n, body) in &parsed.sections {
        let tables = model.grid_tables(n);
        let exps = model.grid_exps(n);
        let (_, bits) = decode_section(n, body, &tables, &exps, 1 << n)?;
        grids.push(bits);
    }
    Ok(BitAccounting {
        finest: parsed.header.finest,
        dc_grid: parsed.header.dc_grid,
        dc_bits: 8 * parsed.dc.len() as u64,
        grids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> StreamHeader {
        StreamHeader {
            finest: 4,
            dc_grid: 2,
            channels: 3,
            model_id: [1, 2, 3, 4, 5, 6, 7, 8],
        }
    }

    fn sample_code() -> (GridCode, Vec<HuffmanTable>) {
        let tree = QuadTree::new(vec![vec![true], vec![true, false, true, false]], 8).unwrap();
        let code = GridCode { grid: 3, tree, indices: vec![vec![2], vec![0, 3]] };
        let tables = vec![HuffmanTable::build(&[1, 1, 9]).unwrap(), HuffmanTable::build(&[4, 0, 0, 2]).unwrap()];
        (code, tables)
    }

    #[test]
    fn header_round_trip_and_rejection() {
        let h = header();
        assert_eq!(StreamHeader::parse(&h.to_bytes()).unwrap(), h);
        let mut b = h.to_bytes();
        b[4] = 2;
        assert!(matches!(StreamHeader::parse(&b), Err(Error::Format(_))));
        let mut b = h.to_bytes();
        b[0] = b'X';
        assert!(matches!(StreamHeader::parse(&b), Err(Error::Format(_))));
        let mut b = h.to_bytes();
        b[6] = 4;
        assert!(StreamHeader::parse(&b).is_err());
    }

    #[test]
    fn section_round_trip() {
        let (code, tables) = sample_code();
        let refs: Vec<&HuffmanTable> = tables.iter().collect();
        let (sec, bits) = encode_section(&code, &refs, &[3, 2]).unwrap();
        assert_eq!(8 * (sec.body.len() + SECTION_FRAMING) as u64, bits.total());
        let (back, bits2) = decode_section(3, &sec.body, &refs, &[3, 2], 8).unwrap();
        assert_eq!(back, code);
        assert_eq!(bits, bits2);
    }

    #[test]
    fn damaged_section_names_the_grid() {
        let (code, tables) = sample_code();
        let refs: Vec<&HuffmanTable> = tables.iter().collect();
        let (sec, _) = encode_section(&code, &refs, &[3, 2]).unwrap();
        let mut body = sec.body.clone();
        body[0] ^= 0x40;
        assert!(matches!(
            decode_section(3, &body, &refs, &[3, 2], 8),
            Err(Error::CorruptStream { grid: Some(3), .. })
        ));
        assert!(matches!(
            decode_section(3, &body[..2], &refs, &[3, 2], 8),
            Err(Error::CorruptStream { grid: Some(3), .. })
        ));
    }

    #[test]
    fn stream_layout_and_prefixes() {
        let h = header();
        let dc: Vec<u8> = (0..48).collect();
        let s3 = Section { grid: 3, body: vec![9, 9, 9] };
        let s4 = Section { grid: 4, body: vec![7; 10] };
        let full = write_stream(&h, &dc, &[s3.clone(), s4.clone()]).unwrap();
        let short = write_stream(&h, &dc, std::slice::from_ref(&s3)).unwrap();
        assert_eq!(&full[..short.len()], &short[..]);
        assert_eq!(full.len(), HEADER_LEN + 48 + 5 + 3 + 5 + 10);
        let p = parse_stream(&full).unwrap();
        assert_eq!(p.dc, &dc[..]);
        assert_eq!(p.sections, vec![(3u8, &[9u8, 9, 9][..]), (4, &[7u8; 10][..])]);
        assert!(write_stream(&h, &dc, std::slice::from_ref(&s4)).is_err());
        assert!(write_stream(&h, &dc, &[s4, s3]).is_err());
        assert!(write_stream(&h, &dc[..47], &[]).is_err());
        // Cut inside the second section.
        assert!(matches!(
            parse_stream(&full[..full.len() - 1]),
            Err(Error::CorruptStream { grid: Some(4), .. })
        ));
        assert!(matches!(parse_stream(&full[..HEADER_LEN + 10]), Err(Error::CorruptStream { .. })));
    }

    #[test]
    fn dc_only_accounting() {
        let acc = BitAccounting { finest: 8, dc_grid: 2, dc_bits: 8 * 48, grids: vec![] };
        assert_eq!(acc.total_bpp(), 8.0 * 3.0 * 16.0 / 65536.0);
        assert!(acc.to_table().contains("DC"));
    }

    /// Entries of the published bit-allocation table for Lena 256x256.
    const TABLE_TWO: &[f64] = &[
        // QT row, G_8..G_3
        4.0e-3, 4.8e-3, 1.3e-3, 3.2e-4, 7.6e-5, 1.5e-5,
        // DC at G_2
        2.4e-4,
        // C_{*,8}..C_{*,2}
        1.5e-5,
        9.1e-5, 1.5e-5,
        7.6e-4, 1.5e-4, 1.5e-5,
        5.1e-3, 1.2e-3, 1.6e-5, 7.6e-5,
        0.0213, 7.2e-3, 1.7e-3, 3.1e-4, 6.1e-5,
        0.0246, 0.029, 8.2e-3, 2.1e-3, 3.2e-4, 7.6e-5,
        0.073, 0.0322, 8.6e-3, 1.5e-3, 3.2e-4,
    ];

    #[test]
    fn published_allocation_sums_to_caption_rate() {
        let total: f64 = TABLE_TWO.iter().sum();
        assert!((total - 0.2286).abs() <= 0.001, "sum {total}");
    }
}
