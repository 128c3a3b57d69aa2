use locc_core::linalg::{self, Matrix};
use locc_core::protocol::{simulate, LoccProtocol, MeasurementStep, Node, ProtocolTrace, SimulationOptions};
use locc_core::{PartySystem, PureState, C64};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_unitary(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<C64>> {
    let vs: Vec<Vec<C64>> = (0..n).map(|_| (0..n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()).collect();
    linalg::complete_basis(&vs, n)
}

/// Kraus operators cut from the first `d` columns of a random unitary on
/// `C^d ⊗ C^outcomes`.
fn random_measurement(rng: &mut ChaCha8Rng, site: usize, d: usize, outcomes: usize) -> MeasurementStep {
    let cols = random_unitary(rng, d * outcomes);
    let kraus = (0..outcomes).map(|k| Matrix::from_fn(d, d, |r, c| cols[c][k * d + r])).collect();
    MeasurementStep::new(vec![site], kraus)
}

fn random_tree(rng: &mut ChaCha8Rng, dims: &[usize], depth: usize) -> Node {
    if depth == 0 || rng.gen_bool(0.25) {
        return Node::Terminal;
    }
    let site = rng.gen_range(0..dims.len());
    let outcomes = rng.gen_range(1..=3);
    let step = random_measurement(rng, site, dims[site], outcomes);
    let branches = (0..outcomes).map(|_| random_tree(rng, dims, depth - 1)).collect();
    Node::Measure { step, branches }
}

fn same_trace(a: &ProtocolTrace, b: &ProtocolTrace) -> bool {
    a.branches.len() == b.branches.len()
        && a.branches.iter().zip(&b.branches).all(|(x, y)| {
            x.path == y.path && (x.probability - y.probability).abs() < 1e-12 && x.state.fidelity(&y.state).unwrap() > 1.0 - 1e-12
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn probability_is_conserved(seed in any::<u64>(), dims in prop::collection::vec(2usize..=3, 2..=3)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = PartySystem::new(dims.clone()).unwrap();
        let psi = PureState::random(sys.clone(), &mut rng);
        let protocol = LoccProtocol::new(sys.clone(), random_tree(&mut rng, &dims, 3));
        prop_assert!(protocol.validate(&sys).is_valid());
        let trace = simulate(&protocol, &psi, SimulationOptions::enumerate()).unwrap();
        prop_assert!((trace.total_probability() - 1.0).abs() < 1e-9);
        for b in &trace.branches {
            prop_assert!((linalg::norm(b.state.amplitudes()) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn measuring_one_party_does_not_signal(seed in any::<u64>(), da in 2usize..=3, db in 2usize..=3, outcomes in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = PartySystem::new(vec![da, db]).unwrap();
        let psi = PureState::random(sys.clone(), &mut rng);
        let step = random_measurement(&mut rng, 0, da, outcomes);
        let protocol = LoccProtocol::new(sys, Node::Measure { step, branches: vec![Node::Terminal; outcomes] });
        let trace = simulate(&protocol, &psi, SimulationOptions::enumerate()).unwrap();
        let before = psi.reduced_state(&[1]).unwrap();
        let mut after = Matrix::zeros(db, db);
        for b in &trace.branches {
            after = after.add(&b.state.reduced_state(&[1]).unwrap().scale(C64::new(b.probability, 0.0)));
        }
        prop_assert!(after.max_abs_diff(&before) < 1e-12);
    }

    #[test]
    fn composition_is_associative(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = [2usize, 3];
        let sys = PartySystem::new(dims.to_vec()).unwrap();
        let psi = PureState::random(sys.clone(), &mut rng);
        let p = LoccProtocol::new(sys.clone(), random_tree(&mut rng, &dims, 2));
        let q = LoccProtocol::new(sys.clone(), random_tree(&mut rng, &dims, 2));
        let r = LoccProtocol::new(sys, random_tree(&mut rng, &dims, 2));
        let left = p.then(&q).unwrap().then(&r).unwrap();
        let right = p.then(&q.then(&r).unwrap()).unwrap();
        let opts = SimulationOptions::enumerate();
        prop_assert!(same_trace(&simulate(&left, &psi, opts).unwrap(), &simulate(&right, &psi, opts).unwrap()));
    }

    #[test]
    fn sampling_picks_an_enumerated_branch(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = [2usize, 2, 2];
        let sys = PartySystem::new(dims.to_vec()).unwrap();
        let psi = PureState::random(sys.clone(), &mut rng);
        let p = LoccProtocol::new(sys, random_tree(&mut rng, &dims, 3));
        let all = simulate(&p, &psi, SimulationOptions::enumerate()).unwrap();
        let one = simulate(&p, &psi, SimulationOptions::sample(seed)).unwrap();
        prop_assert_eq!(one.branches.len(), 1);
        let b = &one.branches[0];
        let twin = all.branches.iter().find(|x| x.path == b.path).expect("sampled path is enumerated");
        prop_assert!(twin.state.fidelity(&b.state).unwrap() > 1.0 - 1e-12);
    }
}
