//! Grid network construction, trusted-node placement presets, and
//! distance/adjacency queries.
//!
//! The network is an `(S+2) x (S+2)` square lattice of nodes joined by
//! 4-neighbor links. Alice and Bob sit at opposite corners of the inner
//! `S x S` lattice, on the main diagonal; trusted nodes are placed from a
//! named preset or an explicit coordinate list. Everything else is a
//! quantum repeater.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Role of a node in the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Alice,
    Bob,
    Trusted,
    Repeater,
}

/// Grid position as (row, col).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pos {
    pub row: u8,
    pub col: u8,
}

impl Pos {
    pub const fn new(row: u8, col: u8) -> Self {
        Pos { row, col }
    }

    /// |Δrow| + |Δcol|.
    pub fn manhattan(self, other: Pos) -> u32 {
        let dr = (self.row as i32 - other.row as i32).unsigned_abs();
        let dc = (self.col as i32 - other.col as i32).unsigned_abs();
        dr + dc
    }
}

impl std::fmt::Display for Pos {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

impl From<(u8, u8)> for Pos {
    fn from((row, col): (u8, u8)) -> Self {
        Pos { row, col }
    }
}

/// Named trusted-node placements. Coordinates are resolved against the
/// lattice size at build time; the `diag-a-b-c` names encode the Manhattan
/// distances Alice→T1, T1→T2, T2→Bob along the diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlacementPreset {
    NoTn,
    OneTnIdeal,
    OffCenter,
    TwoTnIdeal,
    TwoTnCorner,
    Diag264,
    Diag426,
    OffDiag,
    Custom(Vec<Pos>),
}

impl PlacementPreset {
    /// All named presets, in display order.
    pub fn named() -> [PlacementPreset; 8] {
        use PlacementPreset::*;
        [
            NoTn, OneTnIdeal, OffCenter, TwoTnIdeal, TwoTnCorner, Diag264, Diag426, OffDiag,
        ]
    }

    pub fn name(&self) -> &'static str {
        use PlacementPreset::*;
        match self {
            NoTn => "no-tn",
            OneTnIdeal => "1tn-ideal",
            OffCenter => "off-center",
            TwoTnIdeal => "2tn-ideal",
            TwoTnCorner => "2tn-corner",
            Diag264 => "diag-2-6-4",
            Diag426 => "diag-4-2-6",
            OffDiag => "off-diag",
            Custom(_) => "custom",
        }
    }
}

impl std::fmt::Display for PlacementPreset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PlacementPreset {
    type Err = PlacementError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        use PlacementPreset::*;
        match s.to_ascii_lowercase().as_str() {
            "no-tn" | "notn" => Ok(NoTn),
            "1tn-ideal" => Ok(OneTnIdeal),
            "off-center" => Ok(OffCenter),
            "2tn-ideal" => Ok(TwoTnIdeal),
            "2tn-corner" => Ok(TwoTnCorner),
            "diag-2-6-4" => Ok(Diag264),
            "diag-4-2-6" => Ok(Diag426),
            "off-diag" => Ok(OffDiag),
            other => Err(PlacementError::UnknownPreset(other.to_string())),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PlacementError {
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("lattice size S must be at least 2, got {0}")]
    LatticeTooSmall(u8),
    #[error("preset `{preset}` does not fit lattice size S={size}")]
    PresetUnfit { preset: &'static str, size: u8 },
    #[error("trusted node at {0} is off the grid")]
    OffGrid(Pos),
    #[error("trusted node at {0} coincides with an end-user")]
    OnEndUser(Pos),
    #[error("duplicate trusted node at {0}")]
    Duplicate(Pos),
    #[error("link length must be positive, got {0}")]
    NonPositiveLength(f64),
    #[error("no link between {0} and {1}")]
    NoSuchLink(Pos, Pos),
}

/// One fiber link between 4-adjacent grid nodes.
#[derive(Debug, Clone, Copy)]
pub struct Link {
    pub a: u16,
    pub b: u16,
    pub km: f64,
}

/// Immutable network topology: node roles, links, and the ordered terminal
/// list `T_0 = Alice, T_1..T_n = trusted nodes, T_{n+1} = Bob`.
#[derive(Debug, Clone)]
pub struct Topology {
    side: u8,
    kinds: Vec<NodeKind>,
    links: Vec<Link>,
    adj: Vec<Vec<(u16, u32)>>,
    terminals: Vec<u16>,
}

/// Builds the `(S+2) x (S+2)` lattice with uniform link length and trusted
/// nodes placed per the preset.
pub fn build_topology(
    s: u8,
    preset: &PlacementPreset,
    link_km: f64,
) -> Result<Topology, PlacementError> {
    if s < 2 {
        return Err(PlacementError::LatticeTooSmall(s));
    }
    if link_km.is_nan() || link_km <= 0.0 {
        return Err(PlacementError::NonPositiveLength(link_km));
    }
    let side = s + 2;
    let alice = Pos::new(1, 1);
    let bob = Pos::new(s, s);
    let tns = preset_positions(s, preset)?;

    let mut seen = std::collections::BTreeSet::new();
    for &p in &tns {
        if p.row >= side || p.col >= side {
            return Err(PlacementError::OffGrid(p));
        }
        if p == alice || p == bob {
            return Err(PlacementError::OnEndUser(p));
        }
        if !seen.insert(p) {
            return Err(PlacementError::Duplicate(p));
        }
    }

    let n_nodes = side as usize * side as usize;
    let index = |p: Pos| -> u16 { p.row as u16 * side as u16 + p.col as u16 };

    let mut kinds = vec![NodeKind::Repeater; n_nodes];
    kinds[index(alice) as usize] = NodeKind::Alice;
    kinds[index(bob) as usize] = NodeKind::Bob;
    for &p in &tns {
        kinds[index(p) as usize] = NodeKind::Trusted;
    }

    let mut links = Vec::with_capacity(2 * side as usize * (side as usize - 1));
    let mut adj = vec![Vec::with_capacity(4); n_nodes];
    for row in 0..side {
        for col in 0..side {
            let here = index(Pos::new(row, col));
            if col + 1 < side {
                let right = index(Pos::new(row, col + 1));
                let id = links.len() as u32;
                links.push(Link { a: here, b: right, km: link_km });
                adj[here as usize].push((right, id));
                adj[right as usize].push((here, id));
            }
            if row + 1 < side {
                let down = index(Pos::new(row + 1, col));
                let id = links.len() as u32;
                links.push(Link { a: here, b: down, km: link_km });
                adj[here as usize].push((down, id));
                adj[down as usize].push((here, id));
            }
        }
    }

    let mut terminals = Vec::with_capacity(tns.len() + 2);
    terminals.push(index(alice));
    terminals.extend(tns.iter().map(|&p| index(p)));
    terminals.push(index(bob));

    Ok(Topology { side, kinds, links, adj, terminals })
}

/// Resolves a preset into trusted-node coordinates for lattice size `s`.
fn preset_positions(s: u8, preset: &PlacementPreset) -> Result<Vec<Pos>, PlacementError> {
    use PlacementPreset::*;
    let unfit = || PlacementError::PresetUnfit { preset: preset.name(), size: s };
    let on_diag = |dist_from_alice: u8| -> Result<Pos, PlacementError> {
        // a diagonal point at Manhattan distance d from Alice needs d even
        if !dist_from_alice.is_multiple_of(2) || 1 + dist_from_alice / 2 > s {
            return Err(unfit());
        }
        let c = 1 + dist_from_alice / 2;
        Ok(Pos::new(c, c))
    };
    match preset {
        NoTn => Ok(vec![]),
        OneTnIdeal => {
            // grid center, equal distance to Alice and Bob; needs odd S
            if s.is_multiple_of(2) {
                return Err(unfit());
            }
            Ok(vec![on_diag(s - 1)?])
        }
        OffCenter => Ok(vec![on_diag(4)?]),
        TwoTnIdeal => {
            // diagonal thirds: distances d-d-d with 3d = dist(A,B)
            let dab = 2 * (s as u32 - 1);
            if !dab.is_multiple_of(3) {
                return Err(unfit());
            }
            let d = (dab / 3) as u8;
            Ok(vec![on_diag(d)?, on_diag(2 * d)?])
        }
        TwoTnCorner => Ok(vec![Pos::new(1, s), Pos::new(s, 1)]),
        Diag264 => diag_triple(s, 2, 6, 4, unfit()),
        Diag426 => diag_triple(s, 4, 2, 6, unfit()),
        OffDiag => {
            // T1 on the diagonal near Alice; T2 just off the diagonal,
            // equidistant from T1 and Bob (both at distance S-2, on the
            // r+c = S+2 line).
            let t1 = on_diag(2)?;
            if s.is_multiple_of(2) {
                return Err(unfit());
            }
            let t2 = Pos::new(s.div_ceil(2), (s + 3) / 2);
            if t2.row == t2.col || t2.manhattan(t1) != t2.manhattan(Pos::new(s, s)) {
                return Err(unfit());
            }
            Ok(vec![t1, t2])
        }
        Custom(list) => Ok(list.clone()),
    }
}

fn diag_triple(
    s: u8,
    a: u8,
    b: u8,
    c: u8,
    unfit: PlacementError,
) -> Result<Vec<Pos>, PlacementError> {
    if (a + b + c) as u32 != 2 * (s as u32 - 1) || !a.is_multiple_of(2) || !b.is_multiple_of(2) {
        return Err(unfit);
    }
    let t1 = Pos::new(1 + a / 2, 1 + a / 2);
    let t2 = Pos::new(1 + (a + b) / 2, 1 + (a + b) / 2);
    Ok(vec![t1, t2])
}

impl Topology {
    /// Nodes per side (S + 2).
    pub fn side(&self) -> u8 {
        self.side
    }

    pub fn node_count(&self) -> usize {
        self.kinds.len()
    }

    pub fn node_index(&self, p: Pos) -> u16 {
        debug_assert!(p.row < self.side && p.col < self.side);
        p.row as u16 * self.side as u16 + p.col as u16
    }

    pub fn pos_of(&self, idx: u16) -> Pos {
        Pos::new((idx / self.side as u16) as u8, (idx % self.side as u16) as u8)
    }

    pub fn kind(&self, idx: u16) -> NodeKind {
        self.kinds[idx as usize]
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    /// Grid-adjacent neighbors of `u` (2 at corners, 3 on edges, 4 inside).
    pub fn neighbors(&self, u: Pos) -> Vec<Pos> {
        self.adj[self.node_index(u) as usize]
            .iter()
            .map(|&(v, _)| self.pos_of(v))
            .collect()
    }

    /// Adjacency with link ids, by node index.
    pub fn adjacent(&self, idx: u16) -> &[(u16, u32)] {
        &self.adj[idx as usize]
    }

    /// Overrides the length of the link between two adjacent positions.
    pub fn set_link_length(&mut self, a: Pos, b: Pos, km: f64) -> Result<(), PlacementError> {
        if km.is_nan() || km <= 0.0 {
            return Err(PlacementError::NonPositiveLength(km));
        }
        let (ia, ib) = (self.node_index(a), self.node_index(b));
        let id = self.adj[ia as usize]
            .iter()
            .find(|&&(v, _)| v == ib)
            .map(|&(_, id)| id)
            .ok_or(PlacementError::NoSuchLink(a, b))?;
        self.links[id as usize].km = km;
        Ok(())
    }

    /// Ordered terminals: Alice, trusted nodes, Bob.
    pub fn terminals(&self) -> &[u16] {
        &self.terminals
    }

    pub fn terminal_count(&self) -> usize {
        self.terminals.len()
    }

    pub fn terminal_pos(&self, t: u8) -> Pos {
        self.pos_of(self.terminals[t as usize])
    }

    /// Human label: A, T1..Tn, B.
    pub fn terminal_label(&self, t: u8) -> String {
        let last = self.terminals.len() - 1;
        match t as usize {
            0 => "A".to_string(),
            i if i == last => "B".to_string(),
            i => format!("T{i}"),
        }
    }

    /// All unordered terminal pairs (i, j) with i < j.
    pub fn terminal_pairs(&self) -> Vec<(u8, u8)> {
        let n = self.terminals.len() as u8;
        let mut pairs = Vec::with_capacity(n as usize * (n as usize - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                pairs.push((i, j));
            }
        }
        pairs
    }

    /// Manhattan distance between two terminals.
    pub fn terminal_distance(&self, i: u8, j: u8) -> u32 {
        self.terminal_pos(i).manhattan(self.terminal_pos(j))
    }

    pub fn is_terminal(&self, idx: u16) -> bool {
        self.kinds[idx as usize] != NodeKind::Repeater
    }
}

/// Manhattan distance between two grid positions.
pub fn manhattan_distance(u: Pos, v: Pos) -> u32 {
    u.manhattan(v)
}
