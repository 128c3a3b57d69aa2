//! Teleportation of qudit registers over ledger Bell pairs, entanglement
//! swapping, and planning of a star merge into one party.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::ledger::{BellLedger, PartyPair};
use crate::linalg::{self, Matrix, C64, ZERO};
use crate::math;
use crate::protocol::{BranchStyle, LocalOp, LoccProtocol, MeasurementStep, Node, Resource};
use crate::state::PartySystem;

/// Generalized Bell vector `(1/√D) Σ_j ω^{bj} |j>|j ⊕ a>`.
fn bell_vector(dim: usize, a: usize, b: usize) -> Vec<C64> {
    let mut v = vec![ZERO; dim * dim];
    let s = 1.0 / math::sqrt(dim as f64);
    for j in 0..dim {
        let phase = 2.0 * PI * ((b * j) % dim) as f64 / dim as f64;
        v[j * dim + (j + a) % dim] = C64::new(s * math::cos(phase), s * math::sin(phase));
    }
    v
}

/// `Z^b X^{-a}`, undoing the receiver's `X^a Z^{-b}` after outcome `(a, b)`.
fn pauli_correction(dim: usize, a: usize, b: usize) -> Matrix {
    Matrix::from_fn(dim, dim, |row, col| {
        if row == (col + dim - a) % dim {
            let phase = 2.0 * PI * ((b * row) % dim) as f64 / dim as f64;
            C64::new(math::cos(phase), math::sin(phase))
        } else {
            ZERO
        }
    })
}

/// Number of Bell pairs a `dim`-dimensional teleport consumes.
pub fn pairs_for_dim(dim: usize) -> u32 {
    math::ceil_log2(dim)
}

/// Moves site `data_site` from its owner to `receiver`, debiting
/// `⌈log₂ d⌉` pairs. The received register is appended as the last site; the
/// other sites keep their order.
pub fn teleport(system: &PartySystem, data_site: usize, receiver: &str, ledger: &mut BellLedger) -> Result<LoccProtocol> {
    teleport_with(system, data_site, receiver, ledger, BranchStyle::Branching)
}

pub fn teleport_with(
    system: &PartySystem,
    data_site: usize,
    receiver: &str,
    ledger: &mut BellLedger,
    style: BranchStyle,
) -> Result<LoccProtocol> {
    if data_site >= system.num_parties() {
        return Err(Error::InvalidArgument(format!("site {data_site} out of range")));
    }
    let holder = system.label(data_site);
    if holder == receiver {
        return Err(Error::InvalidArgument("teleport to the holding party itself".into()));
    }
    let k = pairs_for_dim(system.dims()[data_site]);
    ledger.debit(&PartyPair::new(holder, receiver), u64::from(k))?;
    let root = teleport_node(system, data_site, receiver, style, Node::Terminal);
    Ok(LoccProtocol::new(system.clone(), root))
}

fn teleport_node(system: &PartySystem, data_site: usize, receiver: &str, style: BranchStyle, next: Node) -> Node {
    let d = system.dims()[data_site];
    let holder = system.label(data_site).to_string();
    let n = system.num_parties();
    if d == 1 {
        // nothing to send; the receiver opens an empty register
        return Node::Attach {
            resource: Resource::Fresh { owner: receiver.to_string(), dim: 1 },
            next: Box::new(Node::Discard { sites: vec![data_site], next: Box::new(next) }),
        };
    }
    let k = pairs_for_dim(d);
    let big = 1usize << k;
    let (h, r) = (n, n + 1);
    let tail = |next: Node| {
        let restricted = if big > d { Node::Restrict { site: n - 1, dim: d, next: Box::new(next) } } else { next };
        Node::Discard { sites: vec![data_site, h], next: Box::new(restricted) }
    };
    let bells: Vec<(usize, usize, Vec<C64>)> =
        (0..big).flat_map(|a| (0..big).map(move |b| (a, b, bell_vector(big, a, b)))).collect();
    let step = MeasurementStep::new(
        vec![data_site, h],
        bells.iter().map(|(_, _, v)| Matrix::outer(v, v)).collect(),
    );
    let measured = match style {
        BranchStyle::Branching => Node::Measure {
            step,
            branches: bells
                .iter()
                .map(|(a, b, _)| Node::Measure {
                    step: MeasurementStep::unitary(vec![r], pauli_correction(big, *a, *b)),
                    branches: vec![tail(next.clone())],
                })
                .collect(),
        },
        BranchStyle::Converging => Node::Converge {
            step,
            corrections: bells
                .iter()
                .map(|(a, b, v)| {
                    vec![
                        LocalOp { sites: vec![r], unitary: pauli_correction(big, *a, *b) },
                        // return the holder's pair to |00> so the outcomes agree
                        LocalOp { sites: vec![data_site, h], unitary: linalg::unitary_with_first_column(v).adjoint() },
                    ]
                })
                .collect(),
            next: Box::new(tail(next)),
        },
    };
    let embedded = if big > d { Node::Embed { site: data_site, dim: big, next: Box::new(measured) } } else { measured };
    Node::Attach {
        resource: Resource::BellPairs { holder, receiver: receiver.to_string(), pairs: k },
        next: Box::new(embedded),
    }
}

/// Chains several teleports; `moves` are `(site, receiver)` in the system
/// current at each move.
pub fn teleport_sequence(
    system: &PartySystem,
    moves: &[(usize, String)],
    ledger: &mut BellLedger,
    style: BranchStyle,
) -> Result<(LoccProtocol, PartySystem)> {
    let mut needed: BTreeMap<PartyPair, u64> = BTreeMap::new();
    let mut sys = system.clone();
    let mut systems = Vec::with_capacity(moves.len());
    for (site, receiver) in moves {
        if *site >= sys.num_parties() || sys.label(*site) == receiver.as_str() {
            return Err(Error::InvalidArgument(format!("invalid teleport of site {site} to {receiver}")));
        }
        *needed.entry(PartyPair::new(sys.label(*site), receiver)).or_insert(0) += u64::from(pairs_for_dim(sys.dims()[*site]));
        systems.push(sys.clone());
        let mut labels = sys.labels().to_vec();
        let mut dims = sys.dims().to_vec();
        let d = dims.remove(*site);
        labels.remove(*site);
        dims.push(d);
        labels.push(receiver.clone());
        sys = PartySystem::with_labels(dims, labels)?;
    }
    for (pair, n) in &needed {
        let available = ledger.count(pair);
        if available < *n {
            return Err(Error::InsufficientEntanglement {
                a: pair.first().to_string(),
                b: pair.second().to_string(),
                needed: *n,
                available,
            });
        }
    }
    for (pair, n) in &needed {
        ledger.debit(pair, *n)?;
    }
    let mut node = Node::Terminal;
    for ((site, receiver), s) in moves.iter().zip(&systems).rev() {
        node = teleport_node(s, *site, receiver, style, node);
    }
    Ok((LoccProtocol::new(system.clone(), node), sys))
}

/// Swaps one `(a, b)` pair and one `(b, c)` pair into an `(a, c)` pair by
/// teleporting `b`'s half of the first through the second.
///
/// The protocol starts from an empty one-level register held by `b`; the
/// simulated result banks the `(a, c)` pair.
pub fn swap_entanglement(a: &str, b: &str, c: &str, ledger: &mut BellLedger) -> Result<LoccProtocol> {
    swap_entanglement_with(a, b, c, ledger, BranchStyle::Branching)
}

pub fn swap_entanglement_with(a: &str, b: &str, c: &str, ledger: &mut BellLedger, style: BranchStyle) -> Result<LoccProtocol> {
    if a == b || b == c {
        return Err(Error::InvalidArgument("swap inputs must join distinct parties".into()));
    }
    let ab = PartyPair::new(a, b);
    let bc = PartyPair::new(b, c);
    if ab == bc {
        let available = ledger.count(&ab);
        if available < 2 {
            return Err(Error::InsufficientEntanglement { a: ab.first().into(), b: ab.second().into(), needed: 2, available });
        }
        return Err(Error::InvalidArgument("swapping a pair with itself yields no new pair".into()));
    }
    for pair in [&ab, &bc] {
        let available = ledger.count(pair);
        if available < 1 {
            return Err(Error::InsufficientEntanglement { a: pair.first().into(), b: pair.second().into(), needed: 1, available });
        }
    }
    ledger.debit(&ab, 1)?;
    ledger.debit(&bc, 1)?;
    // sites after attaching: [vacuum(b), a, b]; b's half (site 2) travels to c
    // and lands last, next to a's half at site 1
    let after_attach = PartySystem::with_labels(vec![1, 2, 2], vec![b.into(), a.into(), b.into()])?;
    let bank = Node::Bank { sites_a: vec![1], sites_b: vec![2], pairs: 1, next: Box::new(Node::Terminal) };
    let root = Node::Attach {
        resource: Resource::BellPairs { holder: a.into(), receiver: b.into(), pairs: 1 },
        next: Box::new(teleport_node(&after_attach, 2, c, style, bank)),
    };
    ledger.credit(PartyPair::new(a, c), 1);
    Ok(LoccProtocol::new(PartySystem::with_labels(vec![1], vec![b.into()])?, root))
}

/// One remote party's route in a [`MergePlan`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MergeRoute {
    pub party: String,
    pub dim: usize,
    /// Pairs for moving the party's register in, and for sending its share
    /// of the prepared state back.
    pub merge_pairs: u64,
    pub distribution_pairs: u64,
}

/// Swap `(hub, via) + (via, to) → (hub, to)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SwapStep {
    pub hub: String,
    pub via: String,
    pub to: String,
}

/// A star merge into `root` and the swaps that supply missing direct pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MergePlan {
    pub root: String,
    pub routes: Vec<MergeRoute>,
    pub swaps: Vec<SwapStep>,
}

impl MergePlan {
    /// Pairs needed between `root` and each other party of `system`.
    pub fn requirements(system: &PartySystem, root: &str) -> Vec<MergeRoute> {
        let mut routes: Vec<MergeRoute> = Vec::new();
        for (label, &dim) in system.labels().iter().zip(system.dims()) {
            if label == root {
                continue;
            }
            let k = u64::from(pairs_for_dim(dim));
            match routes.iter_mut().find(|r| &r.party == label) {
                Some(r) => {
                    r.dim *= dim;
                    r.merge_pairs += k;
                    r.distribution_pairs += k;
                }
                None => routes.push(MergeRoute { party: label.clone(), dim, merge_pairs: k, distribution_pairs: k }),
            }
        }
        routes
    }

    /// Greedy plan on the current ledger: direct pairs first, then swap
    /// chains along shortest paths of the remaining pair graph. `None` when
    /// the ledger cannot cover every route.
    pub fn plan(system: &PartySystem, root: &str, ledger: &BellLedger) -> Option<MergePlan> {
        let routes = Self::requirements(system, root);
        let mut counts: BTreeMap<PartyPair, u64> = ledger.iter().map(|(p, n)| (p.clone(), n)).collect();
        let mut deficit: Vec<(String, u64)> = Vec::new();
        for r in &routes {
            let pair = PartyPair::new(root, &r.party);
            let need = r.merge_pairs + r.distribution_pairs;
            let have = counts.get(&pair).copied().unwrap_or(0);
            let used = have.min(need);
            if used > 0 {
                *counts.get_mut(&pair).expect("present") -= used;
            }
            if need > used {
                deficit.push((r.party.clone(), need - used));
            }
        }
        let mut swaps = Vec::new();
        for (party, missing) in deficit {
            for _ in 0..missing {
                let path = shortest_path(&counts, root, &party)?;
                for w in path.windows(2) {
                    let p = PartyPair::new(&w[0], &w[1]);
                    *counts.get_mut(&p).expect("edge on path") -= 1;
                }
                for i in 1..path.len() - 1 {
                    swaps.push(SwapStep { hub: root.into(), via: path[i].clone(), to: path[i + 1].clone() });
                }
            }
        }
        Some(MergePlan { root: root.into(), routes, swaps })
    }
}

fn shortest_path(counts: &BTreeMap<PartyPair, u64>, from: &str, to: &str) -> Option<Vec<String>> {
    let mut prev: BTreeMap<String, String> = BTreeMap::new();
    let mut queue = VecDeque::new();
    queue.push_back(from.to_string());
    prev.insert(from.to_string(), String::new());
    while let Some(u) = queue.pop_front() {
        if u == to {
            let mut path = vec![u.clone()];
            let mut cur = u;
            while cur != from {
                cur = prev[&cur].clone();
                path.push(cur.clone());
            }
            path.reverse();
            return Some(path);
        }
        for (pair, &n) in counts {
            if n == 0 {
                continue;
            }
            if let Some(v) = pair.other(&u) {
                if !prev.contains_key(v) {
                    prev.insert(v.to_string(), u.clone());
                    queue.push_back(v.to_string());
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{simulate, SimulationOptions};
    use crate::state::{Bipartition, PureState};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::vec;

    fn labelled(dims: Vec<usize>, labels: &[&str]) -> PartySystem {
        PartySystem::with_labels(dims, labels.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    fn ledger_with(pairs: &[(&str, &str, u64)]) -> BellLedger {
        let mut l = BellLedger::new();
        for (a, b, n) in pairs {
            l.credit(PartyPair::new(a, b), *n);
        }
        l
    }

    #[test]
    fn bell_basis_is_orthonormal_and_corrections_unitary() {
        for d in [2, 4] {
            let vs: Vec<Vec<C64>> = (0..d).flat_map(|a| (0..d).map(move |b| bell_vector(d, a, b))).collect();
            for (i, u) in vs.iter().enumerate() {
                for (j, v) in vs.iter().enumerate() {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((linalg::inner(u, v).norm() - expect).abs() < 1e-14);
                }
            }
            assert!(pauli_correction(d, 1, d - 1).is_unitary(1e-14));
        }
    }

    #[test]
    fn teleport_qubit_over_one_pair() {
        let sys = labelled(vec![2], &["A"]);
        let psi = PureState::from_real(sys.clone(), &[0.3f64.sqrt(), 0.7f64.sqrt()]).unwrap();
        for style in [BranchStyle::Branching, BranchStyle::Converging] {
            let mut ledger = ledger_with(&[("A", "B", 1)]);
            let p = teleport_with(&sys, 0, "B", &mut ledger, style).unwrap();
            assert!(ledger.is_empty());
            let t = simulate(&p, &psi, SimulationOptions::enumerate()).unwrap();
            let expected = if style == BranchStyle::Branching { 4 } else { 1 };
            assert_eq!(t.branches.len(), expected);
            for b in &t.branches {
                assert!((b.probability - 1.0 / expected as f64).abs() < 1e-14);
                assert_eq!(b.state.system().labels(), &["B".to_string()]);
                let received = PureState::new(sys.clone(), b.state.amplitudes().to_vec()).unwrap();
                assert!(received.fidelity(&psi).unwrap() > 1.0 - 1e-12);
            }
        }
    }

    #[test]
    fn teleport_qutrit_uses_two_pairs() {
        let sys = labelled(vec![3, 2], &["A", "C"]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let psi = PureState::random(sys.clone(), &mut rng);
        let mut ledger = ledger_with(&[("A", "B", 3)]);
        let p = teleport(&sys, 0, "B", &mut ledger).unwrap();
        assert_eq!(ledger.count(&PartyPair::new("A", "B")), 1);
        let t = simulate(&p, &psi, SimulationOptions::enumerate()).unwrap();
        assert_eq!(t.branches.len(), 16);
        let moved = psi.permute_parties(&[1, 0]).unwrap();
        for b in &t.branches {
            assert_eq!(b.state.system().dims(), &[2, 3]);
            assert!(b.state.fidelity(&moved).unwrap() > 1.0 - 1e-12);
        }
    }

    #[test]
    fn teleporting_half_a_bell_pair_moves_the_entanglement() {
        let sys = labelled(vec![2, 2], &["A", "B"]);
        let bell = PureState::from_real(sys.clone(), &[1., 0., 0., 1.]).unwrap();
        let mut ledger = ledger_with(&[("B", "C", 1)]);
        let p = teleport(&sys, 1, "C", &mut ledger).unwrap();
        let t = simulate(&p, &bell, SimulationOptions::enumerate()).unwrap();
        for b in &t.branches {
            assert_eq!(b.state.system().labels(), &["A".to_string(), "C".to_string()]);
            assert_eq!(b.state.schmidt(&Bipartition::new(&[0], 2).unwrap()).unwrap().rank, 2);
        }
    }

    #[test]
    fn insufficient_ledger_is_refused_without_change() {
        let sys = labelled(vec![4], &["A"]);
        let mut ledger = ledger_with(&[("A", "B", 1)]);
        assert!(matches!(teleport(&sys, 0, "B", &mut ledger), Err(Error::InsufficientEntanglement { needed: 2, .. })));
        assert_eq!(ledger.count(&PartyPair::new("A", "B")), 1);
    }

    #[test]
    fn swap_produces_end_pair() {
        let mut ledger = ledger_with(&[("P1", "P2", 1), ("P2", "P3", 1)]);
        let p = swap_entanglement("P1", "P2", "P3", &mut ledger).unwrap();
        assert_eq!(ledger.iter().collect::<Vec<_>>(), vec![(&PartyPair::new("P1", "P3"), 1)]);
        let start = PureState::basis(p.system().clone(), &[0]).unwrap();
        let t = simulate(&p, &start, SimulationOptions::enumerate()).unwrap();
        assert_eq!(t.branches.len(), 4);
        let r = t.resources().unwrap();
        assert_eq!(r.produced.get(&PartyPair::new("P1", "P3")), Some(&1));
        assert_eq!(r.consumed.values().sum::<u64>(), 2);
    }

    #[test]
    fn swap_chain_across_five_parties() {
        let names = ["P1", "P2", "P3", "P4", "P5"];
        let mut ledger = BellLedger::new();
        for w in names.windows(2) {
            ledger.credit(PartyPair::new(w[0], w[1]), 1);
        }
        for i in 1..4 {
            let p = swap_entanglement("P1", names[i], names[i + 1], &mut ledger).unwrap();
            let start = PureState::basis(p.system().clone(), &[0]).unwrap();
            let t = simulate(&p, &start, SimulationOptions::sample(i as u64)).unwrap();
            assert_eq!(t.branches.len(), 1);
        }
        assert_eq!(ledger.iter().collect::<Vec<_>>(), vec![(&PartyPair::new("P1", "P5"), 1)]);
        assert_eq!(ledger.total_credited() - ledger.total_debited(), ledger.total());
    }

    #[test]
    fn swap_with_itself_fails() {
        let mut ledger = ledger_with(&[("P1", "P2", 1)]);
        assert!(matches!(swap_entanglement("P1", "P2", "P1", &mut ledger), Err(Error::InsufficientEntanglement { .. })));
        assert_eq!(ledger.count(&PartyPair::new("P1", "P2")), 1);
    }

    #[test]
    fn merge_plan_uses_swaps_for_missing_pairs() {
        let sys = PartySystem::qubits(3);
        let ledger = ledger_with(&[("P1", "P3", 4), ("P2", "P3", 2)]);
        let plan = MergePlan::plan(&sys, "P1", &ledger).unwrap();
        assert_eq!(plan.swaps.len(), 2);
        assert!(plan.swaps.iter().all(|s| s.via == "P3" && s.to == "P2"));
        assert!(MergePlan::plan(&sys, "P1", &ledger_with(&[("P1", "P3", 3), ("P2", "P3", 2)])).is_none());
        let qutrits = PartySystem::new(vec![2, 3]).unwrap();
        assert_eq!(MergePlan::requirements(&qutrits, "P1")[0].merge_pairs, 2);
    }
}
