use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::IntervalMap;
use crate::math;
use crate::{Error, Result};

pub const GENERATING_PARTITION_CAVEAT: &str =
    "the sign partition {x < 0, x > 0} is assumed, not proved, to be generating for this map";

/// Minimum count for every observed block at the accepted block length.
pub const MIN_BLOCK_COUNT: u64 = 30;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct EntropyReport {
    pub requested_k: usize,
    /// Largest block length with no observed block below the count floor.
    pub k_used: usize,
    /// `H(k) - H(k-1)` for `k = 1..=k_used` (nats per symbol).
    pub differences: Vec<f64>,
    /// Block entropies `H(k)` for `k = 1..=k_used`.
    pub block_entropies: Vec<f64>,
    pub n: usize,
    pub warnings: Vec<String>,
    pub caveat: &'static str,
}

impl EntropyReport {
    /// The estimate at the accepted block length.
    pub fn estimate(&self) -> f64 {
        *self.differences.last().unwrap_or(&0.0)
    }
}

/// Sign itinerary of the orbit of `x0` (1 for `x > 0`).
pub fn itinerary<M: IntervalMap>(map: &M, x0: f64, n: usize) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(n);
    let mut x = x0;
    for k in 0..n {
        out.push(u8::from(x > 0.0));
        if k + 1 < n {
            x = map.apply(x).ok_or(Error::OrbitTerminated { laps: k as u64 })?;
        }
    }
    Ok(out)
}

fn block_entropy(symbols: &[u8], k: usize) -> (f64, u64) {
    let mut counts = vec![0u64; 1 << k];
    let mask = (1usize << k) - 1;
    let mut code = 0usize;
    for (i, &s) in symbols.iter().enumerate() {
        code = ((code << 1) | s as usize) & mask;
        if i + 1 >= k {
            counts[code] += 1;
        }
    }
    let total = (symbols.len() + 1 - k) as f64;
    let mut h = 0.0;
    let mut min_seen = u64::MAX;
    for &c in &counts {
        if c > 0 {
            let p = c as f64 / total;
            h -= p * math::ln(p);
            min_seen = min_seen.min(c);
        }
    }
    (h, min_seen)
}

/// Plug-in block entropy of a binary sequence.
pub fn entropy_plugin_estimate(symbols: &[u8], k: usize) -> Result<EntropyReport> {
    if k == 0 || k > 20 {
        return Err(Error::InvalidArgument(alloc::format!("block length must be in 1..=20, got {k}")));
    }
    if symbols.len() < 1_000_000 {
        return Err(Error::InvalidArgument(alloc::format!("need n >= 1e6 symbols, got {}", symbols.len())));
    }
    let mut warnings = Vec::new();
    let mut hs = Vec::new();
    let mut k_used = 0;
    for j in 1..=k {
        let (h, min_seen) = block_entropy(symbols, j);
        if min_seen < MIN_BLOCK_COUNT {
            warnings.push(alloc::format!(
                "block length {j} has an observed block with count {min_seen} < {MIN_BLOCK_COUNT}; using k = {}",
                j - 1
            ));
            break;
        }
        hs.push(h);
        k_used = j;
    }
    let mut diffs = Vec::with_capacity(hs.len());
    let mut prev = 0.0;
    for &h in &hs {
        diffs.push(h - prev);
        prev = h;
    }
    Ok(EntropyReport {
        requested_k: k,
        k_used,
        differences: diffs,
        block_entropies: hs,
        n: symbols.len(),
        warnings,
        caveat: GENERATING_PARTITION_CAVEAT,
    })
}
