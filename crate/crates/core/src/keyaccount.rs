//! Stage-3 sifting bookkeeping: per-pair raw key pools bucketed by path
//! noise class (repeater count), and the capacity estimates the dynamic
//! router steers by.

use std::collections::BTreeMap;

use rand::Rng;

use crate::entanglement::path_qber;
use crate::flow::FlowGraph;
use crate::postprocess::base_rate;

/// Sifted raw-key counts for one terminal pair, keyed by the repeater count
/// `k` of the path each bit came over. Counts only increase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawKeyPool {
    pair: (u8, u8),
    counts: BTreeMap<u32, u64>,
}

impl RawKeyPool {
    pub fn new(pair: (u8, u8)) -> Self {
        RawKeyPool { pair, counts: BTreeMap::new() }
    }

    pub fn pair(&self) -> (u8, u8) {
        self.pair
    }

    /// Adds one sifted bit of noise class `k`.
    pub fn record(&mut self, k: u32) {
        *self.counts.entry(k).or_insert(0) += 1;
    }

    /// Adds `n` sifted bits of noise class `k` at once, e.g. when reloading
    /// a recorded histogram.
    pub fn record_many(&mut self, k: u32, n: u64) {
        *self.counts.entry(k).or_insert(0) += n;
    }

    pub fn counts(&self) -> &BTreeMap<u32, u64> {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }
}

/// Basis sifting: the pair keeps the bit with probability 1/2. Returns
/// whether the bit was recorded.
pub fn sift_and_record(pool: &mut RawKeyPool, k: u32, rng: &mut impl Rng) -> bool {
    let kept = rng.gen_bool(0.5);
    if kept {
        pool.record(k);
    }
    kept
}

/// How many secret bits a pool is currently worth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityEstimate {
    pub pair: (u8, u8),
    pub secret_bits: f64,
}

/// Estimates the distillable secret bits in a pool. Segmented: each class
/// contributes `n_k * max(0, 1 - 2h(Q_k))`; pooled: the whole pool at its
/// average error rate. CAD is never assumed here.
pub fn estimate_capacity(pool: &RawKeyPool, decoherence: f64, segmented: bool) -> CapacityEstimate {
    let total = pool.total() as f64;
    let secret_bits = if total == 0.0 {
        0.0
    } else if segmented {
        pool.counts()
            .iter()
            .map(|(&k, &n)| n as f64 * base_rate(path_qber(decoherence, k)))
            .sum()
    } else {
        let avg_q = pool
            .counts()
            .iter()
            .map(|(&k, &n)| n as f64 * path_qber(decoherence, k))
            .sum::<f64>()
            / total;
        total * base_rate(avg_q)
    };
    CapacityEstimate { pair: pool.pair(), secret_bits }
}

/// Assembles the terminal-level flow graph from per-pair secret-key amounts
/// (estimates mid-run, exact pool sizes at the final stage). Missing pairs
/// get capacity zero.
pub fn build_flow_graph(
    n_terminals: usize,
    capacities: impl IntoIterator<Item = ((u8, u8), f64)>,
) -> FlowGraph<f64> {
    let mut g = FlowGraph::new(n_terminals);
    for ((i, j), c) in capacities {
        g.set_capacity(i, j, c);
    }
    g
}
