//! Discrete-round simulator for quantum key distribution networks built from
//! quantum repeaters and a small number of trusted nodes.
//!
//! Each network round runs three stages: link-level entanglement generation
//! ([`entanglement`]), link-disjoint path selection with entanglement swapping
//! ([`routing`]), and sifting into per-pair raw key pools ([`keyaccount`]).
//! After all rounds, the raw pools are distilled into secret key material
//! ([`postprocess`]) and the end-to-end rate is extracted as a maximum flow
//! over the trusted-node graph ([`flow`]). [`sim`] orchestrates the loop and
//! owns the seed-derived RNG substreams ([`rng`]).

pub mod entanglement;
pub mod flow;
pub mod keyaccount;
pub mod postprocess;
pub mod rng;
pub mod routing;
pub mod sim;
pub mod topology;

/// Floating-point scalar for the analytic rate formulas: `f32` or `f64`.
pub trait Scalar: num_traits::Float + num_traits::FromPrimitive {}

impl<T: num_traits::Float + num_traits::FromPrimitive> Scalar for T {}

/// Concrete scalar used by the simulator itself.
pub type Real = f64;

/// Flow network over terminal-pair secret-key capacities, at simulator precision.
pub type KeyFlowGraph = flow::FlowGraph<Real>;
