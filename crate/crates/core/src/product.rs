//! Product-form tests behind the extraction lemma: when can adding a product
//! vector to an entangled vector produce a product vector.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, C64};
use crate::state::{self, Bipartition, PureState};
use crate::{EPS_PHASE, EPS_RANK};

/// Is `phi + λ·(psi0 ⊗ psi1)` product across `cut` for some real `λ ≠ 0`?
/// `psi0` lives on the joint space of `cut.side_a()` and `psi1` on
/// `cut.side_b()`, both in ascending site order.
#[derive(Clone, Debug)]
pub struct ProductQuery {
    pub phi: PureState,
    pub cut: Bipartition,
    pub psi0: PureState,
    pub psi1: PureState,
}

pub fn is_product(state: &PureState, cut: &Bipartition) -> Result<bool> {
    Ok(!state.is_entangled(cut)?)
}

/// Relative squared Schmidt mass beyond the leading term of an unnormalized
/// coefficient matrix; zero for the zero matrix.
pub fn relative_tail(m: &Matrix) -> f64 {
    let (c, _, _) = state::schmidt_factor(m);
    let total: f64 = c.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    c.iter().skip(1).sum::<f64>() / total
}

/// All nonzero real `λ` making the unnormalized sum product across the cut.
///
/// Every 2×2 minor of `Φ + λ·u vᵀ` is affine in `λ` (the quadratic terms of a
/// rank-one update cancel), so the product condition is a linear system
/// `a_r + b_r λ = 0` over all minors. Its real least-squares solution is the
/// only candidate, and it is accepted if the sum is product within
/// [`EPS_RANK`].
pub fn find_product_lambdas(q: &ProductQuery) -> Result<Vec<f64>> {
    let sys = q.phi.system();
    if q.cut.num_parties() != sys.num_parties() {
        return Err(Error::InvalidSubset("cut does not match the state's parties".into()));
    }
    let (da, db) = (sys.dim_of(q.cut.side_a()), sys.dim_of(q.cut.side_b()));
    if q.psi0.system().total_dim() != da || q.psi1.system().total_dim() != db {
        return Err(Error::SystemMismatch);
    }
    if is_product(&q.phi, &q.cut)? {
        return Err(Error::PreconditionViolated("phi is product across the cut".into()));
    }
    let phi = state::coefficient_matrix(sys.dims(), q.phi.amplitudes(), q.cut.side_a());
    let u = q.psi0.amplitudes();
    let v = q.psi1.amplitudes();
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..da {
        for j in i + 1..da {
            for k in 0..db {
                for l in k + 1..db {
                    let a = phi[(i, k)] * phi[(j, l)] - phi[(i, l)] * phi[(j, k)];
                    let b = phi[(i, k)] * u[j] * v[l] + u[i] * v[k] * phi[(j, l)]
                        - phi[(i, l)] * u[j] * v[k]
                        - u[i] * v[l] * phi[(j, k)];
                    num += (b.conj() * a).re;
                    den += b.norm_sqr();
                }
            }
        }
    }
    let mut found = Vec::new();
    if den > 0.0 {
        let lambda = -num / den;
        if lambda != 0.0 && relative_tail(&phi.add(&Matrix::outer_t(u, v).scale(C64::new(lambda, 0.0)))) <= EPS_RANK {
            found.push(lambda);
        }
    }
    if found.len() > 1 {
        return Err(Error::VerificationFailed("more than one product direction found".into()));
    }
    Ok(found)
}

/// `|<a|b>| = 1` within [`EPS_PHASE`].
pub fn phase_equivalent(a: &PureState, b: &PureState) -> Result<bool> {
    Ok(a.inner(b)?.norm() >= 1.0 - EPS_PHASE)
}

/// Truth of the implication "if `phi0⊗phi1 + λ·psi0⊗psi1` is product across
/// the first/second factor, then `phi0 ~ psi0` or `phi1 ~ psi1` up to phase".
pub fn claim1_witness(phi0: &PureState, phi1: &PureState, psi0: &PureState, psi1: &PureState, lambda: C64) -> Result<bool> {
    if phi0.system().total_dim() != psi0.system().total_dim() || phi1.system().total_dim() != psi1.system().total_dim() {
        return Err(Error::SystemMismatch);
    }
    let sum = Matrix::outer_t(phi0.amplitudes(), phi1.amplitudes())
        .add(&Matrix::outer_t(psi0.amplitudes(), psi1.amplitudes()).scale(lambda));
    if relative_tail(&sum) > EPS_RANK {
        return Ok(true);
    }
    Ok(phase_equivalent(phi0, psi0)? || phase_equivalent(phi1, psi1)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::PartySystem;
    use crate::linalg;
    use core::f64::consts::FRAC_1_SQRT_2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::vec;

    fn qubit(a: f64, b: f64) -> PureState {
        PureState::from_real(PartySystem::qubits(1), &[a, b]).unwrap()
    }

    fn bell() -> PureState {
        PureState::from_real(PartySystem::qubits(2), &[1., 0., 0., 1.]).unwrap()
    }

    fn cut01() -> Bipartition {
        Bipartition::new(&[0], 2).unwrap()
    }

    #[test]
    fn is_product_examples() {
        let zero_plus = qubit(1., 0.).tensor(&qubit(1., 1.));
        assert!(is_product(&zero_plus, &cut01()).unwrap());
        assert!(!is_product(&bell(), &cut01()).unwrap());
        let s = PureState::from_real(PartySystem::qubits(3), &[0., 1., 0., 0., 0., 0., 0., 1.]).unwrap();
        assert!(is_product(&s, &Bipartition::new(&[0, 1], 3).unwrap()).unwrap());
    }

    #[test]
    fn lambda_examples() {
        let q = ProductQuery { phi: bell(), cut: cut01(), psi0: qubit(1., 0.), psi1: qubit(1., 0.) };
        let l = find_product_lambdas(&q).unwrap();
        assert_eq!(l.len(), 1);
        assert!((l[0] + FRAC_1_SQRT_2).abs() < 1e-15);
        let q = ProductQuery { phi: bell(), cut: cut01(), psi0: qubit(1., 0.), psi1: qubit(0., 1.) };
        assert!(find_product_lambdas(&q).unwrap().is_empty());
        let q = ProductQuery { phi: qubit(1., 0.).tensor(&qubit(1., 0.)), cut: cut01(), psi0: qubit(1., 0.), psi1: qubit(0., 1.) };
        assert!(matches!(find_product_lambdas(&q), Err(Error::PreconditionViolated(_))));
    }

    #[test]
    fn lambda_on_larger_cut() {
        // phi = (x yᵀ − 0.8·u vᵀ)/‖·‖ across 3×4 has its root at 0.8/‖·‖
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = PureState::random(PartySystem::new(vec![3]).unwrap(), &mut rng);
        let y = PureState::random(PartySystem::new(vec![4]).unwrap(), &mut rng);
        let u = PureState::random(PartySystem::new(vec![3]).unwrap(), &mut rng);
        let v = PureState::random(PartySystem::new(vec![4]).unwrap(), &mut rng);
        let raw: Vec<C64> = x
            .tensor(&y)
            .amplitudes()
            .iter()
            .zip(u.tensor(&v).amplitudes())
            .map(|(a, b)| a - b * 0.8)
            .collect();
        let n = linalg::norm(&raw);
        let phi = PureState::normalized(PartySystem::new(vec![3, 4]).unwrap(), raw).unwrap();
        let l = find_product_lambdas(&ProductQuery { phi, cut: cut01(), psi0: u, psi1: v }).unwrap();
        assert_eq!(l.len(), 1);
        assert!((l[0] - 0.8 / n).abs() < 1e-10);
    }

    #[test]
    fn phase_examples() {
        let zero = qubit(1., 0.);
        let rotated = PureState::new(PartySystem::qubits(1), vec![C64::from_polar(1.0, core::f64::consts::PI / 7.0), C64::new(0., 0.)]).unwrap();
        assert!(phase_equivalent(&zero, &rotated).unwrap());
        assert!(!phase_equivalent(&zero, &qubit(0., 1.)).unwrap());
        assert!(!phase_equivalent(&qubit(1., 1.), &qubit(1., -1.)).unwrap());
        assert!(matches!(phase_equivalent(&zero, &bell()), Err(Error::SystemMismatch)));
    }

    #[test]
    fn claim1_examples() {
        let (z, o) = (qubit(1., 0.), qubit(0., 1.));
        assert!(claim1_witness(&z, &z, &z, &o, C64::new(1., 0.)).unwrap());
        assert!(claim1_witness(&z, &z, &o, &o, C64::new(1., 0.)).unwrap());
        // the antecedent really holds in the first case
        let sum = Matrix::outer_t(z.amplitudes(), z.amplitudes()).add(&Matrix::outer_t(z.amplitudes(), o.amplitudes()));
        assert!(relative_tail(&sum) <= EPS_RANK);
    }

    #[test]
    fn claim1_holds_on_random_collinear_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let d0 = rng.gen_range(1..4);
            let d1 = rng.gen_range(1..4);
            let s0 = PartySystem::new(vec![d0]).unwrap();
            let s1 = PartySystem::new(vec![d1]).unwrap();
            let phi0 = PureState::random(s0.clone(), &mut rng);
            let phi1 = PureState::random(s1.clone(), &mut rng);
            // sharing one factor forces the antecedent
            let psi0 = if rng.gen() { phi0.clone() } else { PureState::random(s0, &mut rng) };
            let psi1 = PureState::random(s1, &mut rng);
            let lambda = C64::from_polar(rng.gen_range(0.1..3.0), rng.gen_range(0.0..core::f64::consts::TAU));
            assert!(claim1_witness(&phi0, &phi1, &psi0, &psi1, lambda).unwrap());
        }
    }
}
