//! Stage-2 path selection over the links established this round.
//!
//! Both policies repeatedly pick a globally shortest terminal-to-terminal
//! path whose interior nodes are all repeaters, remove its links, and repeat
//! until no pair is connected; equal-length candidates are chosen uniformly
//! at random. The dynamic policy first restricts the greedy loop to a
//! priority set of under-full pairs computed by surplus balancing, then
//! falls back to all pairs.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::entanglement::RoundLinkState;
use crate::flow::FlowGraph;
use crate::topology::Topology;

/// A terminal-to-terminal path through repeaters, with the links it consumes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidatePath {
    /// Endpoint terminal indices, lower first.
    pub pair: (u8, u8),
    /// Full node sequence from `T_i` to `T_j`.
    pub nodes: Vec<u16>,
    /// The `k+1` links consumed, in path order.
    pub links: Vec<u32>,
}

impl CandidatePath {
    /// Number of interior repeaters, `k = |links| - 1`.
    pub fn repeater_count(&self) -> u32 {
        self.links.len() as u32 - 1
    }

    pub fn hop_count(&self) -> usize {
        self.links.len()
    }
}

/// Terminal pairs to route before everything else this round.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PriorityList {
    pub pairs: BTreeSet<(u8, u8)>,
}

impl PriorityList {
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Surplus-balancing tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalancerParams {
    /// An edge is under-full when `(1+sigma) * c <= c_max`.
    pub sigma: f64,
    /// Under-full edges within `(1+delta)` of the minimum get priority.
    pub delta: f64,
    /// Pairs farther apart than `theta * dist(A, B)` are never prioritized.
    pub theta: f64,
}

impl Default for BalancerParams {
    fn default() -> Self {
        BalancerParams { sigma: 0.15, delta: 0.05, theta: 0.75 }
    }
}

/// Pathfinder with reusable scratch buffers; keep one per simulation.
#[derive(Debug)]
pub struct Router {
    nodes: usize,
    dist: Vec<Vec<u16>>,
    count: Vec<Vec<f64>>,
    queue: VecDeque<u16>,
}

impl Router {
    pub fn new(topo: &Topology) -> Self {
        Router {
            nodes: topo.node_count(),
            dist: Vec::new(),
            count: Vec::new(),
            queue: VecDeque::new(),
        }
    }

    fn ensure_slots(&mut self, n: usize) {
        while self.dist.len() < n {
            self.dist.push(vec![u16::MAX; self.nodes]);
            self.count.push(vec![0.0; self.nodes]);
        }
    }

    /// Layered BFS from `src` over established links, entering only
    /// repeaters (and `dst`). Fills the slot's distance and shortest-path
    /// count arrays; returns the hop distance to `dst` if connected.
    fn bfs(
        &mut self,
        slot: usize,
        state: &RoundLinkState,
        topo: &Topology,
        src: u16,
        dst: u16,
    ) -> Option<u16> {
        let dist = &mut self.dist[slot];
        let count = &mut self.count[slot];
        dist.fill(u16::MAX);
        count.fill(0.0);
        dist[src as usize] = 0;
        count[src as usize] = 1.0;
        self.queue.clear();
        self.queue.push_back(src);
        while let Some(u) = self.queue.pop_front() {
            let du = dist[u as usize];
            if dist[dst as usize] != u16::MAX && du >= dist[dst as usize] {
                break; // every shortest path into dst is already counted
            }
            for &(v, link) in topo.adjacent(u) {
                if !state.is_established(link) {
                    continue;
                }
                if v != dst && topo.is_terminal(v) {
                    continue;
                }
                let dv = &mut dist[v as usize];
                if *dv == u16::MAX {
                    *dv = du + 1;
                    count[v as usize] = count[u as usize];
                    if v != dst {
                        self.queue.push_back(v);
                    }
                } else if *dv == du + 1 {
                    count[v as usize] += count[u as usize];
                }
            }
        }
        (dist[dst as usize] != u16::MAX).then(|| dist[dst as usize])
    }

    /// Walks back from `dst`, choosing predecessors proportionally to their
    /// shortest-path counts: a uniform draw over all shortest paths.
    fn sample_from_slot(
        &self,
        slot: usize,
        pair: (u8, u8),
        state: &RoundLinkState,
        topo: &Topology,
        rng: &mut impl Rng,
    ) -> CandidatePath {
        let src = topo.terminals()[pair.0 as usize];
        let dst = topo.terminals()[pair.1 as usize];
        let dist = &self.dist[slot];
        let count = &self.count[slot];
        let mut nodes = vec![dst];
        let mut links = Vec::with_capacity(dist[dst as usize] as usize);
        let mut v = dst;
        while v != src {
            let dv = dist[v as usize];
            let preds = topo.adjacent(v).iter().filter(|&&(u, link)| {
                state.is_established(link) && dist[u as usize] != u16::MAX && dist[u as usize] + 1 == dv
            });
            let total: f64 = preds.clone().map(|&(u, _)| count[u as usize]).sum();
            debug_assert!(total > 0.0);
            let mut draw = rng.gen_range(0.0..total);
            let mut chosen = None;
            for &(u, link) in preds {
                draw -= count[u as usize];
                chosen = Some((u, link));
                if draw <= 0.0 {
                    break;
                }
            }
            let (u, link) = chosen.expect("predecessor exists on a shortest path");
            nodes.push(u);
            links.push(link);
            v = u;
        }
        nodes.reverse();
        links.reverse();
        CandidatePath { pair, nodes, links }
    }

    /// Shortest path for one pair, ties broken uniformly at random.
    pub fn shortest_path(
        &mut self,
        state: &RoundLinkState,
        topo: &Topology,
        pair: (u8, u8),
        rng: &mut impl Rng,
    ) -> Option<CandidatePath> {
        self.ensure_slots(1);
        let src = topo.terminals()[pair.0 as usize];
        let dst = topo.terminals()[pair.1 as usize];
        self.bfs(0, state, topo, src, dst)?;
        Some(self.sample_from_slot(0, pair, state, topo, rng))
    }

    /// The greedy loop over a fixed set of eligible pairs: repeatedly select
    /// a globally shortest path (pair ties uniform, then a uniform shortest
    /// path within the pair), consume its links, and repeat until nothing
    /// connects.
    fn greedy(
        &mut self,
        state: &mut RoundLinkState,
        topo: &Topology,
        pairs: &[(u8, u8)],
        rng: &mut impl Rng,
        out: &mut Vec<CandidatePath>,
    ) {
        if pairs.is_empty() {
            return;
        }
        self.ensure_slots(pairs.len());
        let terminals = topo.terminals();
        let mut found: Vec<Option<u16>> = vec![None; pairs.len()];
        loop {
            let mut best = u16::MAX;
            for (slot, &(i, j)) in pairs.iter().enumerate() {
                let d = self.bfs(slot, state, topo, terminals[i as usize], terminals[j as usize]);
                found[slot] = d;
                if let Some(d) = d {
                    best = best.min(d);
                }
            }
            if best == u16::MAX {
                return;
            }
            let contenders: Vec<usize> = found
                .iter()
                .enumerate()
                .filter(|(_, d)| **d == Some(best))
                .map(|(slot, _)| slot)
                .collect();
            let pick = contenders[rng.gen_range(0..contenders.len())];
            let path = self.sample_from_slot(pick, pairs[pick], state, topo, rng);
            for &link in &path.links {
                state.consume(link);
            }
            out.push(path);
        }
    }

    /// Static policy: greedy over every terminal pair.
    pub fn static_route(
        &mut self,
        state: &mut RoundLinkState,
        topo: &Topology,
        rng: &mut impl Rng,
    ) -> Vec<CandidatePath> {
        let pairs = topo.terminal_pairs();
        let mut out = Vec::new();
        self.greedy(state, topo, &pairs, rng, &mut out);
        out
    }

    /// Dynamic policy: exhaust the prioritized pairs first, then run the
    /// standard greedy loop over all pairs on the remaining links.
    pub fn dynamic_route(
        &mut self,
        state: &mut RoundLinkState,
        topo: &Topology,
        prio: &PriorityList,
        rng: &mut impl Rng,
    ) -> Vec<CandidatePath> {
        let mut out = Vec::new();
        if !prio.is_empty() {
            let first: Vec<(u8, u8)> = prio.pairs.iter().copied().collect();
            self.greedy(state, topo, &first, rng, &mut out);
        }
        let pairs = topo.terminal_pairs();
        self.greedy(state, topo, &pairs, rng, &mut out);
        out
    }
}

/// Surplus balancing: locate the fullest pair capacity, lay the shortest
/// Alice-Bob corridor through it in the terminal graph, and prioritize the
/// corridor edges that are under-full and close to the smallest of them.
pub fn compute_priorities(
    caps: &FlowGraph<f64>,
    topo: &Topology,
    params: &BalancerParams,
    rng: &mut impl Rng,
) -> PriorityList {
    let pairs = topo.terminal_pairs();
    debug_assert_eq!(caps.terminal_count(), topo.terminal_count());
    let alice = 0u8;
    let bob = (topo.terminal_count() - 1) as u8;

    let c_max = pairs
        .iter()
        .map(|&(i, j)| caps.capacity(i, j))
        .fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<(u8, u8)> = pairs
        .iter()
        .copied()
        .filter(|&(i, j)| caps.capacity(i, j) == c_max)
        .collect();
    let e_max = ties[rng.gen_range(0..ties.len())];

    // Manhattan weights with per-invocation tie-breaking perturbations,
    // far below one hop so they only separate exact ties.
    let mut weight = BTreeMap::new();
    for &(i, j) in &pairs {
        let eps: f64 = rng.gen_range(0.0..1e-3);
        weight.insert((i, j), topo.terminal_distance(i, j) as f64 - eps);
    }

    // Try both orientations of e_max and keep the cheaper corridor.
    let mut corridor: Option<(f64, Vec<(u8, u8)>)> = None;
    for (ti, tj) in [e_max, (e_max.1, e_max.0)] {
        let left = terminal_shortest(&weight, topo, alice, ti, &[tj, bob]);
        let right = terminal_shortest(&weight, topo, tj, bob, &[ti, alice]);
        let (Some(left), Some(right)) = (left, right) else { continue };
        let cost = left.0 + weight[&canon(e_max)] + right.0;
        if corridor.as_ref().is_none_or(|(c, _)| cost < *c) {
            let mut edges = left.1;
            edges.push(canon(e_max));
            edges.extend(right.1);
            corridor = Some((cost, edges));
        }
    }
    let Some((_, corridor)) = corridor else {
        return PriorityList::default();
    };

    let under_full: Vec<(u8, u8)> = corridor
        .iter()
        .copied()
        .filter(|&(i, j)| (1.0 + params.sigma) * caps.capacity(i, j) <= c_max)
        .collect();
    if under_full.is_empty() {
        return PriorityList::default();
    }
    let c_min = under_full
        .iter()
        .map(|&(i, j)| caps.capacity(i, j))
        .fold(f64::INFINITY, f64::min);

    let d_ab = topo.terminal_distance(alice, bob) as f64;
    let pairs = under_full
        .into_iter()
        .filter(|&(i, j)| caps.capacity(i, j) <= (1.0 + params.delta) * c_min)
        .filter(|&(i, j)| (topo.terminal_distance(i, j) as f64) < params.theta * d_ab)
        .collect();
    PriorityList { pairs }
}

fn canon(pair: (u8, u8)) -> (u8, u8) {
    if pair.0 < pair.1 { pair } else { (pair.1, pair.0) }
}

/// Dijkstra over the complete terminal graph with the given weights,
/// avoiding `excluded` nodes (endpoints always allowed). Returns the cost
/// and the edge list.
fn terminal_shortest(
    weight: &BTreeMap<(u8, u8), f64>,
    topo: &Topology,
    src: u8,
    dst: u8,
    excluded: &[u8],
) -> Option<(f64, Vec<(u8, u8)>)> {
    let n = topo.terminal_count() as u8;
    if src == dst {
        return Some((0.0, Vec::new()));
    }
    let blocked = |t: u8| t != src && t != dst && excluded.contains(&t);
    let mut cost = vec![f64::INFINITY; n as usize];
    let mut prev = vec![u8::MAX; n as usize];
    let mut done = vec![false; n as usize];
    cost[src as usize] = 0.0;
    while let Some(u) = (0..n)
        .filter(|&t| !done[t as usize] && cost[t as usize].is_finite() && !blocked(t))
        .min_by(|&a, &b| cost[a as usize].total_cmp(&cost[b as usize]))
    {
        if u == dst {
            break;
        }
        done[u as usize] = true;
        for v in 0..n {
            if v == u || done[v as usize] || blocked(v) {
                continue;
            }
            let c = cost[u as usize] + weight[&canon((u, v))];
            if c < cost[v as usize] {
                cost[v as usize] = c;
                prev[v as usize] = u;
            }
        }
    }
    if !cost[dst as usize].is_finite() {
        return None;
    }
    let mut edges = Vec::new();
    let mut v = dst;
    while v != src {
        let u = prev[v as usize];
        edges.push(canon((u, v)));
        v = u;
    }
    edges.reverse();
    Some((cost[dst as usize], edges))
}

/// Entanglement swapping: each path survives with probability `R^k`,
/// independently; failed paths are discarded whole.
pub fn attempt_swapping(
    paths: Vec<CandidatePath>,
    swap_prob: f64,
    rng: &mut impl Rng,
) -> Vec<CandidatePath> {
    assert!((0.0..=1.0).contains(&swap_prob));
    paths
        .into_iter()
        .filter(|p| rng.gen_bool(swap_prob.powi(p.repeater_count() as i32)))
        .collect()
}
