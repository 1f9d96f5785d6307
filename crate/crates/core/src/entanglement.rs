//! Stage-1 link-level entanglement sampling and the closed-form path noise
//! model used by every later stage.
//!
//! A link attempt succeeds with probability `P = 10^(-alpha*L/10)`; a
//! successful pair decoheres to the fully mixed state with probability `D`
//! per link. Decoherence is never sampled per qubit: the parties cannot
//! observe it, so the simulator tracks it analytically through the repeater
//! count `k` of each path. A Monte-Carlo bit sampler is provided purely to
//! validate the closed form.

use rand::Rng;

use crate::topology::Topology;
use crate::Scalar;

/// Per-attempt success probability of a fiber link: `10^(-alpha*L/10)`.
pub fn link_success_prob<S: Scalar>(alpha_db_per_km: S, length_km: S) -> S {
    debug_assert!(alpha_db_per_km >= S::zero() && length_km > S::zero());
    let ten = S::from_u8(10).unwrap();
    ten.powf(-alpha_db_per_km * length_km / ten)
}

/// Bell-state weight of an end-to-end pair over `k+1` links: `(1-D)^(k+1)`.
pub fn path_fidelity<S: Scalar>(d: S, repeaters: u32) -> S {
    debug_assert!(d >= S::zero() && d <= S::one());
    (S::one() - d).powi(repeaters as i32 + 1)
}

/// Matched-basis error rate of the path state: the fully mixed component
/// errs with probability 1/2, so `Q = (1 - (1-D)^(k+1)) / 2`.
pub fn path_qber<S: Scalar>(d: S, repeaters: u32) -> S {
    let half = S::from_f64(0.5).unwrap();
    (S::one() - path_fidelity(d, repeaters)) * half
}

/// Link success/noise parameters resolved against a topology.
#[derive(Debug, Clone)]
pub struct LinkModel {
    success: Vec<f64>,
    /// Per-link decoherence probability (channel and memory combined).
    pub decoherence: f64,
}

impl LinkModel {
    /// Derives per-link success probabilities from the fiber loss
    /// coefficient and each link's length.
    pub fn from_alpha(topo: &Topology, alpha_db_per_km: f64, decoherence: f64) -> Self {
        let success = topo
            .links()
            .iter()
            .map(|l| link_success_prob(alpha_db_per_km, l.km))
            .collect();
        LinkModel { success, decoherence }
    }

    /// Uses an explicit per-attempt success probability, bypassing alpha/L.
    pub fn with_uniform_p(topo: &Topology, p: f64, decoherence: f64) -> Self {
        debug_assert!((0.0..=1.0).contains(&p));
        LinkModel { success: vec![p; topo.link_count()], decoherence }
    }

    pub fn success_prob(&self, link: u32) -> f64 {
        self.success[link as usize]
    }
}

/// The set of links whose entanglement attempt succeeded this round.
/// Routing consumes links out of it as paths are selected.
#[derive(Debug, Clone)]
pub struct RoundLinkState {
    established: Vec<bool>,
}

impl RoundLinkState {
    pub fn all(topo: &Topology) -> Self {
        RoundLinkState { established: vec![true; topo.link_count()] }
    }

    pub fn none(topo: &Topology) -> Self {
        RoundLinkState { established: vec![false; topo.link_count()] }
    }

    /// Manually sets one link, for constructing specific scenarios.
    pub fn set(&mut self, link: u32, up: bool) {
        self.established[link as usize] = up;
    }

    pub fn is_established(&self, link: u32) -> bool {
        self.established[link as usize]
    }

    /// Removes a link once a selected path has claimed its qubit pair.
    pub fn consume(&mut self, link: u32) {
        debug_assert!(self.established[link as usize], "link consumed twice");
        self.established[link as usize] = false;
    }

    pub fn established_count(&self) -> usize {
        self.established.iter().filter(|&&b| b).count()
    }
}

/// Samples one round of link-level entanglement attempts.
pub fn sample_links(topo: &Topology, model: &LinkModel, rng: &mut impl Rng) -> RoundLinkState {
    let established = (0..topo.link_count() as u32)
        .map(|id| rng.gen_bool(model.success_prob(id)))
        .collect();
    RoundLinkState { established }
}

/// Monte-Carlo sampler for one sifted bit over a `k`-repeater path: each of
/// the `k+1` links decoheres independently with probability `d`; a decohered
/// path yields an error with probability 1/2. Validation-only counterpart of
/// [`path_qber`].
pub fn sample_path_error(d: f64, repeaters: u32, rng: &mut impl Rng) -> bool {
    let mut mixed = false;
    for _ in 0..=repeaters {
        if rng.gen_bool(d) {
            mixed = true;
        }
    }
    mixed && rng.gen_bool(0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_topology, PlacementPreset};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn success_prob_values() {
        assert!((link_success_prob(0.15f64, 1.0) - 0.966051).abs() < 1e-6);
        assert_eq!(link_success_prob(0.0f64, 1.0), 1.0);
        assert!((link_success_prob(0.15f64, 10.0) - 0.707946).abs() < 1e-6);
        // generic over the scalar type
        assert!((link_success_prob(0.15f32, 1.0) - 0.966051).abs() < 1e-5);
    }

    #[test]
    fn fidelity_and_qber_values() {
        assert!((path_fidelity(0.02f64, 1) - 0.9604).abs() < 1e-12);
        assert!((path_fidelity(0.02f64, 3) - 0.92236816).abs() < 1e-9);
        assert_eq!(path_fidelity(0.0f64, 17), 1.0);
        assert!((path_qber(0.02f64, 1) - 0.0198).abs() < 1e-12);
        assert_eq!(path_qber(0.0f64, 5), 0.0);
        assert_eq!(path_qber(1.0f64, 0), 0.5);
    }

    #[test]
    fn qber_is_half_the_mixed_weight() {
        for k in [0u32, 1, 3, 9] {
            for d in [0.0f64, 0.01, 0.2, 0.7] {
                let q = path_qber(d, k);
                let f = path_fidelity(d, k);
                assert!((q - (1.0 - f) / 2.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn sampling_extremes() {
        let topo = build_topology(7, &PlacementPreset::NoTn, 1.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let sure = LinkModel::with_uniform_p(&topo, 1.0, 0.0);
        assert_eq!(
            sample_links(&topo, &sure, &mut rng).established_count(),
            topo.link_count()
        );
        let never = LinkModel::with_uniform_p(&topo, 0.0, 0.0);
        assert_eq!(sample_links(&topo, &never, &mut rng).established_count(), 0);
    }

    #[test]
    fn sampling_matches_binomial() {
        let topo = build_topology(2, &PlacementPreset::NoTn, 1.0).unwrap();
        let model = LinkModel::from_alpha(&topo, 0.15, 0.0);
        let p = model.success_prob(0);
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let trials = 100_000u32;
        let mut hits = 0u32;
        for _ in 0..trials {
            if sample_links(&topo, &model, &mut rng).is_established(0) {
                hits += 1;
            }
        }
        let sigma = (p * (1.0 - p) * trials as f64).sqrt();
        assert!((hits as f64 - p * trials as f64).abs() < 3.0 * sigma);
    }
}
