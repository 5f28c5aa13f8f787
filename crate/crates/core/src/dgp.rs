//! Seeded simulation data-generating processes and the known target value.
//!
//! Covariates are Uniform(-1,1) via `2u - 1` from the generator's canonical
//! unit-interval output; Bernoulli draws are `u < p`. The generator is
//! ChaCha8 (a counter-based stream cipher), so a given seed always yields
//! the same draw sequence regardless of platform. Per-row draw order is
//! (w1, w2, a, y).

use crate::data::Dataset;
use crate::num::{expit, Scalar};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// The treatment mechanisms under study. The outcome mechanism is the same
/// for all three, so the true target value is 0.5 in every case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreatmentMechanism {
    Linear,
    Sinusoidal,
    Step,
}

impl TreatmentMechanism {
    pub const ALL: [TreatmentMechanism; 3] = [
        TreatmentMechanism::Linear,
        TreatmentMechanism::Sinusoidal,
        TreatmentMechanism::Step,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TreatmentMechanism::Linear => "linear",
            TreatmentMechanism::Sinusoidal => "sinusoidal",
            TreatmentMechanism::Step => "step",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Some(TreatmentMechanism::Linear),
            "sinusoidal" => Some(TreatmentMechanism::Sinusoidal),
            "step" => Some(TreatmentMechanism::Step),
            _ => None,
        }
    }
}

impl std::fmt::Display for TreatmentMechanism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DgpSpec {
    pub treatment_mechanism: TreatmentMechanism,
}

impl DgpSpec {
    pub fn new(treatment_mechanism: TreatmentMechanism) -> Self {
        Self {
            treatment_mechanism,
        }
    }

    /// The true treatment-specific mean, identical under every mechanism.
    pub fn true_psi<S: Scalar>(&self) -> S {
        S::cast(0.5)
    }
}

/// P(A=1 | W) under the given mechanism.
pub fn true_propensity<S: Scalar>(spec: &DgpSpec, w1: S, w2: S) -> S {
    let two = S::cast(2.0);
    let lp = match spec.treatment_mechanism {
        TreatmentMechanism::Linear => two * w2 + w1,
        TreatmentMechanism::Sinusoidal => {
            let r = (w1 * w1 + w2 * w2).sqrt();
            S::cast(3.0) * (S::cast(2.0 * std::f64::consts::PI) * r).cos()
        }
        TreatmentMechanism::Step => {
            let pos = w1 > S::zero() && w2 > S::zero();
            let neg = w1 < S::zero() && w2 < S::zero();
            if pos || neg {
                S::one()
            } else {
                S::zero()
            }
        }
    };
    expit(lp)
}

/// E[Y | A, W] = expit(w1 + 2 w2); the outcome mean does not depend on A.
pub fn true_outcome_mean<S: Scalar>(w1: S, w2: S) -> S {
    expit(w1 + S::cast(2.0) * w2)
}

/// Draws a dataset of size n. Pure function of (spec, n, seed).
pub fn generate<S: Scalar>(spec: &DgpSpec, n: usize, seed: u64) -> Dataset<S> {
    assert!(n >= 1, "n must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let w1 = S::cast(2.0 * rng.gen::<f64>() - 1.0);
        let w2 = S::cast(2.0 * rng.gen::<f64>() - 1.0);
        let g = true_propensity(spec, w1, w2);
        let ai = u8::from(S::cast(rng.gen::<f64>()) < g);
        let q = true_outcome_mean(w1, w2);
        let yi = u8::from(S::cast(rng.gen::<f64>()) < q);
        w.push([w1, w2]);
        a.push(ai);
        y.push(yi);
    }
    Dataset::new(w, a, y, seed).expect("generated data is valid by construction")
}
