//! Canonical Huffman codes for codeword indices.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::bitio::{BitReader, BitWriter};
use crate::error::{corrupt, invalid, Error, Result};

/// Longest code the tables support.
pub const MAX_CODE_LEN: u8 = 64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HuffmanTable {
    lengths: Vec<u8>,
    codes: Vec<u64>,
    /// Symbols sorted by `(length, symbol)`.
    sorted: Vec<u32>,
    /// Per length: first canonical code and offset into `sorted`.
    first_code: Vec<u64>,
    first_index: Vec<usize>,
    count: Vec<usize>,
}

impl HuffmanTable {
    /// Optimal code for `freqs` after adding one to every count.
    pub fn build(freqs: &[u64]) -> Result<HuffmanTable> {
        if freqs.is_empty() {
            return Err(invalid("Huffman alphabet is empty"));
        }
        let n = freqs.len();
        if n == 1 {
            return HuffmanTable::from_lengths(vec![1]);
        }
        // Nodes 0..n are leaves; internal nodes follow. Ties merge by
        // (count, smallest symbol in the subtree).
        let mut parent = vec![usize::MAX; 2 * n - 1];
        let mut heap: BinaryHeap<Reverse<(u128, u32, usize)>> = freqs
            .iter()
            .enumerate()
            .map(|(s, &f)| Reverse((f as u128 + 1, s as u32, s)))
            .collect();
        let mut next = n;
        while heap.len() > 1 {
            let Reverse((ca, sa, a)) = heap.pop().expect("heap has two nodes");
            let Reverse((cb, sb, b)) = heap.pop().expect("heap has two nodes");
            parent[a] = next;
            parent[b] = next;
            heap.push(Reverse((ca + cb, sa.min(sb), next)));
            next += 1;
        }
        let root = next - 1;
        let mut depth = vec![0u32; 2 * n - 1];
        for node in (0..root).rev() {
            depth[node] = depth[parent[node]] + 1;
        }
        let lengths = depth[..n]
            .iter()
            .map(|&d| {
                if d > MAX_CODE_LEN as u32 {
                    Err(Error::ResourceLimit(format!("Huffman code length {d} exceeds 64")))
                } else {
                    Ok(d as u8)
                }
            })
            .collect::<Result<Vec<u8>>>()?;
        HuffmanTable::from_lengths(lengths)
    }

    /// Rebuilds the canonical table from code lengths.
    pub fn from_lengths(lengths: Vec<u8>) -> Result<HuffmanTable> {
        let n = lengths.len();
        if n == 0 {
            return Err(invalid("Huffman alphabet is empty"));
        }
        if lengths.iter().any(|&l| l == 0 || l > MAX_CODE_LEN) {
            return Err(invalid("Huffman code lengths must be in 1..=64"));
        }
        if n == 1 {
            if lengths[0] != 1 {
                return Err(invalid("single-symbol table must use length 1"));
            }
        } else {
            // Kraft sum scaled by 2^64 must equal exactly 2^64.
            let kraft: u128 = lengths.iter().map(|&l| 1u128 << (64 - l)).sum();
            if kraft != 1u128 << 64 {
                return Err(invalid("Huffman code lengths are not a complete prefix code"));
            }
        }
        let mut sorted: Vec<u32> = (0..n as u32).collect();
        sorted.sort_by_key(|&s| (lengths[s as usize], s));

        let max_len = MAX_CODE_LEN as usize;
        let mut count = vec![0usize; max_len + 1];
        for &l in &lengths {
            count[l as usize] += 1;
        }
        let mut first_code = vec![0u64; max_len + 1];
        let mut first_index = vec![0usize; max_len + 1];
        let mut code = 0u64;
        let mut index = 0usize;
        for len in 1..=max_len {
            first_code[len] = code;
            first_index[len] = index;
            index += count[len];
            code = code.wrapping_add(count[len] as u64);
            if len < max_len {
                code <<= 1;
            }
        }
        let mut codes = vec![0u64; n];
        for (pos, &s) in sorted.iter().enumerate() {
            let len = lengths[s as usize] as usize;
            codes[s as usize] = first_code[len] + (pos - first_index[len]) as u64;
        }
        Ok(HuffmanTable {
            lengths,
            codes,
            sorted,
            first_code,
            first_index,
            count,
        })
    }

    pub fn alphabet_size(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[u8] {
        &self.lengths
    }

    pub fn code(&self, symbol: u32) -> (u64, u8) {
        (self.codes[symbol as usize], self.lengths[symbol as usize])
    }

    /// Total bits needed for `symbols`.
    pub fn cost(&self, symbols: &[u32]) -> Result<u64> {
        symbols
            .iter()
            .map(|&s| {
                self.lengths
                    .get(s as usize)
                    .map(|&l| l as u64)
                    .ok_or_else(|| invalid(format!("symbol {s} outside alphabet")))
            })
            .sum()
    }

    pub fn encode(&self, symbols: &[u32], w: &mut BitWriter) -> Result<()> {
        for &s in symbols {
            if s as usize >= self.lengths.len() {
                return Err(invalid(format!(
                    "symbol {s} outside alphabet of {}",
                    self.lengths.len()
                )));
            }
            let (code, len) = self.code(s);
            w.write_bits(code, len as u32);
        }
        Ok(())
    }

    pub fn decode(&self, r: &mut BitReader, count: usize) -> Result<Vec<u32>> {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            out.push(self.decode_one(r)?);
        }
        Ok(out)
    }

    fn decode_one(&self, r: &mut BitReader) -> Result<u32> {
        let mut code = 0u64;
        for len in 1..=MAX_CODE_LEN as usize {
            let bit = r
                .read_bit()
                .ok_or_else(|| corrupt(None, "Huffman payload ended early"))?;
            code = (code << 1) | bit as u64;
            let n = self.count[len];
            if n > 0 && code >= self.first_code[len] && code - self.first_code[len] < n as u64 {
                return Ok(self.sorted[self.first_index[len] + (code - self.first_code[len]) as usize]);
            }
        }
        Err(corrupt(None, "invalid Huffman code"))
    }
}
