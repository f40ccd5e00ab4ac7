//! Seeded random `P`-flow problems for timing `p_dot`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sol_core::valuegrad::{make_qbar, CostSpec, ValueParams};
use sol_core::{BasisSet, ModelCoefficients, QBar};

/// Library used for scaling runs: `5n + 1` features on `n` states.
pub const SCALING_BASIS: &str = "1,x,x^2,x^3,sin(x),cos(x)";

pub struct Problem {
    pub basis: BasisSet,
    pub model: ModelCoefficients,
    pub params: ValueParams,
    pub qbar: QBar,
    pub cost: CostSpec,
    pub x: DVector<f64>,
}

impl Problem {
    /// A single-input problem on `n` states with small random coefficients
    /// and a random symmetric `P`.
    pub fn random(n: usize, seed: u64) -> Problem {
        let basis = BasisSet::parse(SCALING_BASIS, n).expect("scaling basis parses");
        let p = basis.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut random = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.random_range(-0.1..0.1));
        let model = ModelCoefficients {
            w: random(n, p),
            w_inputs: vec![random(n, p)],
        };
        let half = random(p, p);
        let params = ValueParams {
            p: &half + half.transpose(),
            gamma: 0.0,
        };
        let cost = CostSpec {
            q: DMatrix::identity(n, n),
            r: DVector::from_element(1, 1.0),
            gamma: 0.0,
            x_ref: DVector::zeros(n),
        };
        let qbar = make_qbar(&cost.q, p).expect("identity weight is valid");
        let x = DVector::from_fn(n, |i, _| 0.1 * i as f64);
        Problem { basis, model, params, qbar, cost, x }
    }

    pub fn p(&self) -> usize {
        self.basis.len()
    }
}

/// Smallest state dimension whose scaling basis has at least `p` features.
pub fn states_for_features(p: usize) -> usize {
    p.saturating_sub(1).div_ceil(5).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use sol_core::valuegrad::p_dot;

    #[test]
    fn feature_counts_match_the_requested_sizes() {
        for (target, p) in [(20, 21), (40, 41), (80, 81)] {
            let prob = Problem::random(states_for_features(target), 0);
            assert_eq!(prob.p(), p);
            let d = p_dot(&prob.params, &prob.x, &prob.model, &prob.basis, &prob.qbar, &prob.cost).unwrap();
            assert!((&d - d.transpose()).abs().max() < 1e-12);
        }
    }
}
