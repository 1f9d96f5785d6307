//! Round-loop orchestration: Stages 1-3 every round, distillation and
//! max-flow extraction at the end. One simulation is strictly sequential
//! and deterministic given its seed; sweeps parallelize across runs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entanglement::{sample_links, LinkModel};
use crate::flow::{final_key_rate, max_flow, wasted_key};
use crate::keyaccount::{build_flow_graph, estimate_capacity, sift_and_record, RawKeyPool};
use crate::postprocess::{distill, DistillationOptions};
use crate::rng::{substream, Component};
use crate::routing::{attempt_swapping, compute_priorities, BalancerParams, PriorityList, Router};
use crate::topology::{build_topology, PlacementError, PlacementPreset, Pos, Topology};

/// Routing policy for Stage 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Static,
    Dynamic,
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Policy::Static => "static",
            Policy::Dynamic => "dynamic",
        })
    }
}

impl std::str::FromStr for Policy {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "static" => Ok(Policy::Static),
            "dynamic" => Ok(Policy::Dynamic),
            other => Err(ConfigError::UnknownPolicy(other.to_string())),
        }
    }
}

/// Length override for a single link, by adjacent endpoint coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkOverride {
    pub a: (u8, u8),
    pub b: (u8, u8),
    pub km: f64,
}

/// Full description of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Inner lattice size S; the grid has S+2 nodes per side.
    pub size: u8,
    /// Placement preset name; `custom` reads `custom_tns`.
    pub preset: String,
    /// Trusted-node coordinates for the `custom` preset.
    pub custom_tns: Vec<(u8, u8)>,
    /// Fiber length per link in km.
    pub link_km: f64,
    /// Fiber loss coefficient in dB/km.
    pub alpha: f64,
    /// Explicit per-attempt link success probability; bypasses alpha/L.
    pub p_override: Option<f64>,
    /// Per-link decoherence probability D.
    pub decoherence: f64,
    /// Bell-state-measurement success probability R.
    pub swap_prob: f64,
    /// Network rounds N.
    pub rounds: u64,
    pub policy: Policy,
    /// Surplus-balancing tolerance: under-full when `(1+sigma) c <= c_max`.
    pub sigma: f64,
    /// Priority band above the minimum under-full capacity.
    pub delta: f64,
    /// Distance filter fraction of dist(A, B).
    pub theta: f64,
    /// Distill each path-length class separately.
    pub segmenting: bool,
    /// Apply CAD with per-pool optimal block size.
    pub cad: bool,
    /// Largest CAD level searched.
    pub cad_max: u32,
    /// Master RNG seed.
    pub seed: u64,
    /// Rounds between priority recomputations (dynamic policy).
    pub priority_cadence: u64,
    pub link_overrides: Vec<LinkOverride>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            size: 7,
            preset: "1tn-ideal".to_string(),
            custom_tns: Vec::new(),
            link_km: 1.0,
            alpha: 0.15,
            p_override: None,
            decoherence: 0.02,
            swap_prob: 0.85,
            rounds: 1_000_000,
            policy: Policy::Static,
            sigma: 0.15,
            delta: 0.05,
            theta: 0.75,
            segmenting: false,
            cad: false,
            cad_max: 8,
            seed: 1,
            priority_cadence: 1,
            link_overrides: Vec::new(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("rounds must be at least 1")]
    ZeroRounds,
    #[error("{field} must lie in [0, 1], got {value}")]
    ProbabilityRange { field: &'static str, value: f64 },
    #[error("alpha must be nonnegative, got {0}")]
    NegativeAlpha(f64),
    #[error("sigma and delta must be nonnegative, theta in (0, 1): got sigma={sigma}, delta={delta}, theta={theta}")]
    BalancerRange { sigma: f64, delta: f64, theta: f64 },
    #[error("cad_max must be at least 1")]
    ZeroCadMax,
    #[error("priority_cadence must be at least 1")]
    ZeroCadence,
    #[error("unknown policy `{0}` (expected `static` or `dynamic`)")]
    UnknownPolicy(String),
    #[error(transparent)]
    Placement(#[from] PlacementError),
}

impl SimConfig {
    pub fn balancer(&self) -> BalancerParams {
        BalancerParams { sigma: self.sigma, delta: self.delta, theta: self.theta }
    }

    pub fn distill_options(&self) -> DistillationOptions {
        DistillationOptions {
            segmenting: self.segmenting,
            cad: self.cad,
            cad_max: self.cad_max,
        }
    }

    /// Resolves the preset name (and custom coordinates) into a placement.
    pub fn placement(&self) -> Result<PlacementPreset, ConfigError> {
        if self.preset.eq_ignore_ascii_case("custom") {
            let tns = self.custom_tns.iter().map(|&(r, c)| Pos::new(r, c)).collect();
            return Ok(PlacementPreset::Custom(tns));
        }
        Ok(self.preset.parse::<PlacementPreset>()?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.rounds == 0 {
            return Err(ConfigError::ZeroRounds);
        }
        let prob = |field: &'static str, value: f64| {
            if (0.0..=1.0).contains(&value) {
                Ok(())
            } else {
                Err(ConfigError::ProbabilityRange { field, value })
            }
        };
        prob("decoherence", self.decoherence)?;
        prob("swap_prob", self.swap_prob)?;
        if let Some(p) = self.p_override {
            prob("p_override", p)?;
        }
        if self.alpha < 0.0 {
            return Err(ConfigError::NegativeAlpha(self.alpha));
        }
        if self.sigma < 0.0 || self.delta < 0.0 || !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(ConfigError::BalancerRange {
                sigma: self.sigma,
                delta: self.delta,
                theta: self.theta,
            });
        }
        if self.cad_max == 0 {
            return Err(ConfigError::ZeroCadMax);
        }
        if self.priority_cadence == 0 {
            return Err(ConfigError::ZeroCadence);
        }
        self.placement()?;
        Ok(())
    }

    fn build_network(&self) -> Result<Topology, ConfigError> {
        let mut topo = build_topology(self.size, &self.placement()?, self.link_km)?;
        for o in &self.link_overrides {
            topo.set_link_length(o.a.into(), o.b.into(), o.km)?;
        }
        Ok(topo)
    }
}

/// Raw-key histogram of one pair: (noise class k, sifted bits).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolRecord {
    pub pair: String,
    pub counts: Vec<(u32, u64)>,
}

/// One labeled per-pair quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairValue {
    pub pair: String,
    pub value: f64,
}

/// Deterministic outcome of one run. Wall time is measured by callers so
/// that identical (config, seed) runs serialize byte-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub config: SimConfig,
    /// Final secret key rate |SK(A,B)| / N.
    pub key_rate: f64,
    pub flow_value: f64,
    pub total_sifted: u64,
    pub pools: Vec<PoolRecord>,
    /// Distilled secret bits per pair.
    pub secret: Vec<PairValue>,
    /// Net flow magnitude per pair.
    pub flow: Vec<PairValue>,
    /// Leftover secret bits that could not be pushed to the end-users.
    pub waste: Vec<PairValue>,
    pub total_waste: f64,
}

/// Runs one simulation.
pub fn run(cfg: &SimConfig) -> Result<SimResult, ConfigError> {
    run_with_progress(cfg, |_| {})
}

/// Runs one simulation, reporting the round number to `progress` every
/// thousand rounds.
pub fn run_with_progress(
    cfg: &SimConfig,
    mut progress: impl FnMut(u64),
) -> Result<SimResult, ConfigError> {
    cfg.validate()?;
    let topo = cfg.build_network()?;
    let model = match cfg.p_override {
        Some(p) => LinkModel::with_uniform_p(&topo, p, cfg.decoherence),
        None => LinkModel::from_alpha(&topo, cfg.alpha, cfg.decoherence),
    };

    let pairs = topo.terminal_pairs();
    let pair_slot = |pair: (u8, u8)| pairs.iter().position(|&p| p == pair).expect("known pair");
    let mut pools: Vec<RawKeyPool> = pairs.iter().map(|&p| RawKeyPool::new(p)).collect();
    let mut router = Router::new(&topo);
    let mut priorities = PriorityList::default();
    let seed = cfg.seed;

    for round in 0..cfg.rounds {
        let mut state = sample_links(&topo, &model, &mut substream(seed, Component::Links, round));
        let paths = match cfg.policy {
            Policy::Static => {
                router.static_route(&mut state, &topo, &mut substream(seed, Component::Routing, round))
            }
            Policy::Dynamic => {
                if round % cfg.priority_cadence == 0 {
                    let caps = build_flow_graph(
                        topo.terminal_count(),
                        pools.iter().map(|pool| {
                            let est = estimate_capacity(pool, cfg.decoherence, true);
                            (pool.pair(), est.secret_bits)
                        }),
                    );
                    priorities = compute_priorities(
                        &caps,
                        &topo,
                        &cfg.balancer(),
                        &mut substream(seed, Component::Priorities, round),
                    );
                }
                router.dynamic_route(
                    &mut state,
                    &topo,
                    &priorities,
                    &mut substream(seed, Component::Routing, round),
                )
            }
        };
        let survivors = attempt_swapping(
            paths,
            cfg.swap_prob,
            &mut substream(seed, Component::Swapping, round),
        );
        let mut sift_rng = substream(seed, Component::Sifting, round);
        for path in &survivors {
            sift_and_record(&mut pools[pair_slot(path.pair)], path.repeater_count(), &mut sift_rng);
        }
        if (round + 1) % 1000 == 0 {
            progress(round + 1);
        }
    }

    // Stage 4 and the final flow extraction
    let secret_bits: Vec<f64> = pools
        .iter()
        .map(|pool| distill(pool, cfg.decoherence, &cfg.distill_options()))
        .collect();
    let graph = build_flow_graph(
        topo.terminal_count(),
        pairs.iter().copied().zip(secret_bits.iter().copied()),
    );
    let flow = max_flow(&graph);
    let (waste, total_waste) = wasted_key(&graph, &flow);
    let key_rate = final_key_rate(flow.value, cfg.rounds);

    let label = |&(i, j): &(u8, u8)| format!("{}-{}", topo.terminal_label(i), topo.terminal_label(j));
    Ok(SimResult {
        config: cfg.clone(),
        key_rate,
        flow_value: flow.value,
        total_sifted: pools.iter().map(|p| p.total()).sum(),
        pools: pairs
            .iter()
            .zip(&pools)
            .map(|(pair, pool)| PoolRecord {
                pair: label(pair),
                counts: pool.counts().iter().map(|(&k, &n)| (k, n)).collect(),
            })
            .collect(),
        secret: pairs
            .iter()
            .zip(&secret_bits)
            .map(|(pair, &value)| PairValue { pair: label(pair), value })
            .collect(),
        flow: pairs
            .iter()
            .map(|pair| PairValue {
                pair: label(pair),
                value: flow.edge_flows.get(pair).copied().unwrap_or(0.0).abs(),
            })
            .collect(),
        waste: pairs
            .iter()
            .map(|pair| PairValue {
                pair: label(pair),
                value: waste.get(pair).copied().unwrap_or(0.0),
            })
            .collect(),
        total_waste,
    })
}

/// Cartesian sweep over decoherence values, policies, and seeds; runs in
/// parallel, results ordered by (D, policy, seed).
pub fn sweep(
    base: &SimConfig,
    d_values: &[f64],
    policies: &[Policy],
    seeds: &[u64],
) -> Result<Vec<SimResult>, ConfigError> {
    let mut configs = Vec::new();
    for &d in d_values {
        for &policy in policies {
            for &seed in seeds {
                let mut cfg = base.clone();
                cfg.decoherence = d;
                cfg.policy = policy;
                cfg.seed = seed;
                cfg.validate()?;
                configs.push(cfg);
            }
        }
    }
    configs.par_iter().map(run).collect()
}

/// Default decoherence grid for sweeps, covering 0 to 0.04.
pub fn default_decoherence_grid() -> Vec<f64> {
    (0..=8).map(|i| i as f64 * 0.005).collect()
}
