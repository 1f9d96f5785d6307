//! Final-stage secret-key extraction: maximum flow from Alice to Bob over
//! the trusted-node graph.
//!
//! Key material between a pair is usable in either direction, so each pair
//! capacity becomes two opposed arcs. Flow through a trusted node stands for
//! XOR relaying of that many key bits; only the bookkeeping is carried out.

use std::collections::{BTreeMap, VecDeque};

use crate::Scalar;

/// Terminal-level graph with nonnegative pair capacities. Terminal 0 is the
/// source (Alice), terminal `n-1` the sink (Bob); missing pairs mean zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowGraph<S> {
    n: usize,
    caps: BTreeMap<(u8, u8), S>,
}

impl<S: Scalar> FlowGraph<S> {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2, "a flow graph needs a source and a sink");
        FlowGraph { n, caps: BTreeMap::new() }
    }

    pub fn terminal_count(&self) -> usize {
        self.n
    }

    pub fn source(&self) -> u8 {
        0
    }

    pub fn sink(&self) -> u8 {
        (self.n - 1) as u8
    }

    pub fn set_capacity(&mut self, i: u8, j: u8, cap: S) {
        assert!(i != j, "no self-loops");
        assert!((i as usize) < self.n && (j as usize) < self.n);
        assert!(cap >= S::zero(), "capacities must be nonnegative");
        let key = if i < j { (i, j) } else { (j, i) };
        self.caps.insert(key, cap);
    }

    pub fn capacity(&self, i: u8, j: u8) -> S {
        let key = if i < j { (i, j) } else { (j, i) };
        self.caps.get(&key).copied().unwrap_or_else(S::zero)
    }

    pub fn edges(&self) -> impl Iterator<Item = ((u8, u8), S)> + '_ {
        self.caps.iter().map(|(&k, &v)| (k, v))
    }

    pub fn edge_count(&self) -> usize {
        self.caps.len()
    }
}

/// Value and per-pair net flows of a maximum flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult<S> {
    pub value: S,
    /// Net flow on each pair, signed from the lower to the higher terminal
    /// index.
    pub edge_flows: BTreeMap<(u8, u8), S>,
}

struct Arc<S> {
    to: usize,
    residual: S,
}

/// Shortest-augmenting-path maximum flow (BFS augmentation). Undirected
/// capacities are modeled as two opposed arcs that act as each other's
/// reverse.
pub fn max_flow<S: Scalar>(g: &FlowGraph<S>) -> FlowResult<S> {
    let n = g.terminal_count();
    let mut arcs: Vec<Arc<S>> = Vec::with_capacity(2 * g.edge_count());
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut keys = Vec::with_capacity(g.edge_count());
    let mut scale = S::zero();
    for ((i, j), c) in g.edges() {
        let (i, j) = (i as usize, j as usize);
        adj[i].push(arcs.len());
        arcs.push(Arc { to: j, residual: c });
        adj[j].push(arcs.len());
        arcs.push(Arc { to: i, residual: c });
        keys.push(((i as u8, j as u8), c));
        scale = scale.max(c);
    }
    // residuals below this are saturation dust, not capacity
    let eps = scale * S::epsilon().sqrt();

    let (source, sink) = (g.source() as usize, g.sink() as usize);
    let mut value = S::zero();
    let mut prev: Vec<Option<usize>> = vec![None; n];
    let mut queue = VecDeque::new();

    loop {
        prev.fill(None);
        queue.clear();
        queue.push_back(source);
        'bfs: while let Some(u) = queue.pop_front() {
            for &a in &adj[u] {
                let v = arcs[a].to;
                if v != source && prev[v].is_none() && arcs[a].residual > eps {
                    prev[v] = Some(a);
                    if v == sink {
                        break 'bfs;
                    }
                    queue.push_back(v);
                }
            }
        }
        let Some(mut a) = prev[sink] else { break };
        let mut bottleneck = arcs[a].residual;
        loop {
            bottleneck = bottleneck.min(arcs[a].residual);
            let from = arcs[a ^ 1].to;
            if from == source {
                break;
            }
            a = prev[from].expect("path reaches the source");
        }
        let mut a = prev[sink].unwrap();
        loop {
            arcs[a].residual = arcs[a].residual - bottleneck;
            arcs[a ^ 1].residual = arcs[a ^ 1].residual + bottleneck;
            let from = arcs[a ^ 1].to;
            if from == source {
                break;
            }
            a = prev[from].unwrap();
        }
        value = value + bottleneck;
    }

    // net flow i->j = cap - residual of the forward arc
    let mut edge_flows = BTreeMap::new();
    for (idx, &(key, cap)) in keys.iter().enumerate() {
        edge_flows.insert(key, cap - arcs[2 * idx].residual);
    }
    FlowResult { value, edge_flows }
}

/// End-to-end secret key rate: flow value over the number of rounds.
pub fn final_key_rate<S: Scalar>(flow_value: S, rounds: u64) -> S {
    assert!(rounds > 0, "rate needs at least one round");
    flow_value / S::from_u64(rounds).unwrap()
}

/// Leftover key material per pair (capacity minus |net flow|) and its total.
pub fn wasted_key<S: Scalar>(g: &FlowGraph<S>, flows: &FlowResult<S>) -> (BTreeMap<(u8, u8), S>, S) {
    let mut waste = BTreeMap::new();
    let mut total = S::zero();
    for (key, cap) in g.edges() {
        let used = flows.edge_flows.get(&key).copied().unwrap_or_else(S::zero);
        let left = (cap - used.abs()).max(S::zero());
        waste.insert(key, left);
        total = total + left;
    }
    (waste, total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, edges: &[((u8, u8), f64)]) -> FlowGraph<f64> {
        let mut g = FlowGraph::new(n);
        for &((i, j), c) in edges {
            g.set_capacity(i, j, c);
        }
        g
    }

    #[test]
    fn series_bottleneck() {
        let g = graph(3, &[((0, 1), 3.0), ((1, 2), 5.0)]);
        let f = max_flow(&g);
        assert_eq!(f.value, 3.0);
        let (waste, total) = wasted_key(&g, &f);
        assert_eq!(waste[&(1, 2)], 2.0);
        assert_eq!(total, 2.0);
    }

    #[test]
    fn parallel_addition() {
        let g = graph(3, &[((0, 1), 3.0), ((1, 2), 5.0), ((0, 2), 1.0)]);
        assert_eq!(max_flow(&g).value, 4.0);
    }

    #[test]
    fn saturating_flow_has_no_waste() {
        let g = graph(3, &[((0, 1), 2.0), ((1, 2), 2.0), ((0, 2), 7.0)]);
        let f = max_flow(&g);
        assert_eq!(f.value, 9.0);
        let (_, total) = wasted_key(&g, &f);
        assert_eq!(total, 0.0);
    }

    #[test]
    fn two_disjoint_relay_paths() {
        // A -> T1 -> B and A -> T2 -> B
        let g = graph(
            4,
            &[((0, 1), 4.0), ((1, 3), 2.0), ((0, 2), 1.0), ((2, 3), 6.0)],
        );
        let f = max_flow(&g);
        assert_eq!(f.value, 3.0);
    }

    #[test]
    fn undirected_edge_carries_flow_backwards() {
        // the (1, 2) edge must be usable in the 2 -> 1 direction
        let g = graph(
            4,
            &[((0, 2), 3.0), ((1, 2), 3.0), ((1, 3), 3.0)],
        );
        assert_eq!(max_flow(&g).value, 3.0);
    }

    #[test]
    fn rate_arithmetic() {
        assert_eq!(final_key_rate(0.0f64, 10), 0.0);
        assert!((final_key_rate(153_000.0f64, 1_000_000) - 0.153).abs() < 1e-12);
        assert_eq!(final_key_rate(42.0f64, 42), 1.0);
    }

    #[test]
    fn conservation_at_interior_nodes() {
        let g = graph(
            5,
            &[
                ((0, 1), 4.0),
                ((0, 2), 2.0),
                ((1, 2), 1.0),
                ((1, 3), 2.0),
                ((2, 3), 3.0),
                ((1, 4), 1.0),
                ((3, 4), 5.0),
            ],
        );
        let f = max_flow(&g);
        let mut net = [0.0f64; 5];
        for (&(i, j), &x) in &f.edge_flows {
            net[i as usize] -= x;
            net[j as usize] += x;
        }
        assert!((net[0] + f.value).abs() < 1e-9);
        assert!((net[4] - f.value).abs() < 1e-9);
        for t in [1, 2, 3] {
            assert!(net[t].abs() < 1e-9, "terminal {t} leaks {}", net[t]);
        }
    }
}
