//! Asymptotic distillation math: binary entropy, the one-way E91 rate,
//! key-pool segmenting, and classical advantage distillation (CAD).
//!
//! All rates are per sifted bit and clamp at zero. CAD at block size `C`
//! keeps a block only when the receiver's `C` bits agree, shrinking the key
//! by the block-survival factor but lowering the effective error rate, which
//! extends the distillable range to higher noise.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entanglement::path_qber;
use crate::keyaccount::RawKeyPool;
use crate::Scalar;

/// `h(x) = -x log2 x - (1-x) log2 (1-x)`, with `h(0) = h(1) = 0`.
pub fn binary_entropy<S: Scalar>(x: S) -> S {
    assert!(
        x >= S::zero() && x <= S::one(),
        "binary entropy argument outside [0, 1]"
    );
    if x == S::zero() || x == S::one() {
        return S::zero();
    }
    let y = S::one() - x;
    -(x * x.log2()) - y * y.log2()
}

/// Standard one-way rate per sifted bit: `max(0, 1 - 2 h(Q))`.
pub fn base_rate<S: Scalar>(q: S) -> S {
    let two = S::from_u8(2).unwrap();
    (S::one() - two * binary_entropy(q)).max(S::zero())
}

#[derive(Debug, Error, PartialEq)]
pub enum PartitionError {
    #[error("segment fractions must sum to 1, got {0}")]
    FractionSum(f64),
    #[error("segment fraction must be nonnegative, got {0}")]
    NegativeFraction(f64),
    #[error("segment error rate must lie in [0, 0.5], got {0}")]
    ErrorRateRange(f64),
}

/// Rate of a key pool split into sub-pools of fraction `p_i` and error rate
/// `Q_i`, each distilled separately: `sum p_i * max(0, 1 - 2 h(Q_i))`.
pub fn segmented_rate<S: Scalar>(fractions: &[(S, S)]) -> Result<S, PartitionError> {
    let mut sum = S::zero();
    let half = S::from_f64(0.5).unwrap();
    for &(p, q) in fractions {
        if p < S::zero() {
            return Err(PartitionError::NegativeFraction(p.to_f64().unwrap_or(f64::NAN)));
        }
        if q < S::zero() || q > half {
            return Err(PartitionError::ErrorRateRange(q.to_f64().unwrap_or(f64::NAN)));
        }
        sum = sum + p;
    }
    let tol = S::from_f64(1e-9).unwrap();
    if (sum - S::one()).abs() > tol {
        return Err(PartitionError::FractionSum(sum.to_f64().unwrap_or(f64::NAN)));
    }
    let mut rate = S::zero();
    for &(p, q) in fractions {
        rate = rate + p * base_rate(q);
    }
    Ok(rate)
}

/// Distillable rate per post-CAD bit at block size `c`.
///
/// Level 1 forms no blocks and reduces to the standard one-way rate. For
/// `c >= 2` the surviving blocks have bit error `alpha = Q^C / (Q^C + (1-Q)^C)`
/// and the phase-error contribution is evaluated for the depolarizing pair
/// state, whose phase errors are uncorrelated with bit errors on erroneous
/// bits and carry conditional correlation `beta = (1-2Q)/(1-Q)` on correct
/// ones.
pub fn cad_rate<S: Scalar>(q: S, c: u32) -> S {
    let half = S::from_f64(0.5).unwrap();
    assert!(c >= 1, "CAD level must be at least 1");
    assert!(q >= S::zero() && q < half, "error rate outside [0, 0.5)");
    if c == 1 {
        return base_rate(q);
    }
    let one = S::one();
    let qc = q.powi(c as i32);
    let pc = (one - q).powi(c as i32);
    let alpha = qc / (qc + pc);
    let beta = (one - q - q) / (one - q);
    let phase_ok = (one - beta.powi(c as i32)) * half;
    // gamma = 0: erroneous bits carry maximal phase entropy, h(1/2) = 1
    let r = one - binary_entropy(alpha) - (one - alpha) * binary_entropy(phase_ok) - alpha;
    r.max(S::zero())
}

/// Fraction of blocks the receiver keeps: `Q^C + (1-Q)^C`.
pub fn cad_survival<S: Scalar>(q: S, c: u32) -> S {
    q.powi(c as i32) + (S::one() - q).powi(c as i32)
}

/// Rate per pre-CAD sifted bit: block survival times the per-bit rate,
/// divided by the block size.
pub fn cad_throughput<S: Scalar>(q: S, c: u32) -> S {
    cad_survival(q, c) / S::from_u32(c).unwrap() * cad_rate(q, c)
}

/// Best CAD level in `1..=c_max` by throughput; ties go to the smallest level.
pub fn optimize_cad<S: Scalar>(q: S, c_max: u32) -> (u32, S) {
    assert!(c_max >= 1);
    let mut best = (1, cad_throughput(q, 1));
    for c in 2..=c_max {
        let t = cad_throughput(q, c);
        if t > best.1 {
            best = (c, t);
        }
    }
    best
}

/// Which post-processing steps to run at the end of a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistillationOptions {
    /// Distill each path-length class separately instead of pooling.
    pub segmenting: bool,
    /// Apply CAD with the per-pool optimal block size.
    pub cad: bool,
    /// Largest CAD level searched.
    pub cad_max: u32,
}

impl Default for DistillationOptions {
    fn default() -> Self {
        DistillationOptions { segmenting: false, cad: false, cad_max: 8 }
    }
}

/// Secret bits distillable from a raw key pool under the given options.
///
/// With segmenting each class `k` contributes `n_k * rate(Q_k)`; without it
/// the whole pool is processed at its average error rate. The per-bit rate
/// is the CAD-optimized throughput when CAD is on, the standard rate
/// otherwise.
pub fn distill(pool: &RawKeyPool, decoherence: f64, opts: &DistillationOptions) -> f64 {
    let per_bit = |q: f64| -> f64 {
        if opts.cad {
            optimize_cad(q, opts.cad_max).1
        } else {
            base_rate(q)
        }
    };
    let total = pool.total() as f64;
    if total == 0.0 {
        return 0.0;
    }
    if opts.segmenting {
        pool.counts()
            .iter()
            .map(|(&k, &n)| n as f64 * per_bit(path_qber(decoherence, k)))
            .sum()
    } else {
        let avg_q: f64 = pool
            .counts()
            .iter()
            .map(|(&k, &n)| n as f64 * path_qber(decoherence, k))
            .sum::<f64>()
            / total;
        total * per_bit(avg_q)
    }
}
