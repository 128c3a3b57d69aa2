//! Exact bipartite pure-state conversion: majorization, T-transform protocols
//! and concentration into Bell pairs.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, C64};
use crate::math;
use crate::protocol::{BranchStyle, LocalOp, LoccProtocol, MeasurementStep, Node};
use crate::state::{Bipartition, PureState};
use crate::EPS_NORM;

/// Slack on partial-sum comparisons; ties count as satisfied.
pub const MAJORIZATION_TOL: f64 = 1e-12;

/// Squared Schmidt coefficients, sorted descending and summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct SchmidtVector {
    values: Vec<f64>,
}

impl SchmidtVector {
    /// Sorts and renormalizes `values`, which must be nonnegative and sum to
    /// one within [`EPS_NORM`].
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite() || *v < -MAJORIZATION_TOL) {
            return Err(Error::InvalidArgument("Schmidt values must be finite and nonnegative".into()));
        }
        let sum: f64 = values.iter().sum();
        if math::abs(sum - 1.0) > EPS_NORM {
            return Err(Error::InvalidArgument(format!("Schmidt values sum to {sum}, not 1")));
        }
        for v in values.iter_mut() {
            *v = v.max(0.0) / sum;
        }
        values.sort_by(|a, b| b.total_cmp(a));
        Ok(Self { values })
    }

    pub fn from_state(state: &PureState, cut: &Bipartition) -> Result<Self> {
        Ok(Self { values: state.schmidt(cut)?.coefficients })
    }

    /// `n` equal entries.
    pub fn uniform(n: usize) -> Self {
        Self { values: vec![1.0 / n as f64; n] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values[0]
    }

    /// Number of entries above `eps`.
    pub fn rank(&self, eps: f64) -> usize {
        self.values.iter().filter(|&&v| v > eps).count()
    }

    fn padded(&self, n: usize) -> Vec<f64> {
        let mut v = self.values.clone();
        v.resize(n.max(v.len()), 0.0);
        v
    }
}

/// `x ≺ y`: every partial sum of `x` is at most that of `y` (shorter vector
/// zero-padded), so a state with spectrum `x` converts exactly to one with
/// spectrum `y`.
pub fn majorizes(x: &SchmidtVector, y: &SchmidtVector) -> bool {
    let n = x.len().max(y.len());
    let (xs, ys) = (x.padded(n), y.padded(n));
    let (mut sx, mut sy) = (0.0, 0.0);
    for t in 0..n {
        sx += xs[t];
        sy += ys[t];
        if sx > sy + MAJORIZATION_TOL {
            return false;
        }
    }
    math::abs(sx - sy) <= MAJORIZATION_TOL
}

/// Largest `k` with `x_max^copies ≤ 2^-k`.
pub fn bell_yield(x: &SchmidtVector, copies: usize) -> u32 {
    let m = x.max();
    if m >= 1.0 || copies == 0 {
        return 0;
    }
    let bits = -(copies as f64) * math::log2(m);
    // a relative slack of ~1e-12 keeps exact powers such as 2^-n stable
    // against rounding without exceeding the majorization tolerance
    math::floor(bits + 1e-12).max(0.0) as u32
}

/// One T-transform: `cur = t·next + (1 − t)·Q_{jk} next`.
#[derive(Clone, Debug, PartialEq)]
pub struct TStep {
    pub j: usize,
    pub k: usize,
    pub t: f64,
    pub cur: Vec<f64>,
    pub next: Vec<f64>,
}

/// T-transforms taking spectrum `x` up to `y` (with `x ≺ y`), in the order
/// they are applied to a state; at most `len − 1` steps.
pub fn t_transform_chain(x: &SchmidtVector, y: &SchmidtVector) -> Result<Vec<TStep>> {
    if !majorizes(x, y) {
        return Err(Error::NotTransformable);
    }
    let n = x.len().max(y.len());
    let target = x.padded(n);
    let mut v = y.padded(n);
    let mut steps = Vec::new();
    // walk from y down to x, each step matching at least one more entry
    for _ in 0..n {
        let Some(j) = (0..n).rev().find(|&i| v[i] - target[i] > MAJORIZATION_TOL) else {
            break;
        };
        let Some(k) = (j + 1..n).find(|&i| target[i] - v[i] > MAJORIZATION_TOL) else {
            break;
        };
        let delta = (v[j] - target[j]).min(target[k] - v[k]);
        let t = 1.0 - delta / (v[j] - v[k]);
        let mut w = v.clone();
        if v[j] - target[j] <= target[k] - v[k] {
            w[j] = target[j];
            w[k] = v[k] + delta;
        } else {
            w[j] = v[j] - delta;
            w[k] = target[k];
        }
        steps.push(TStep { j, k, t, cur: w.clone(), next: v });
        v = w;
    }
    steps.reverse();
    Ok(steps)
}

fn owner_sites<'a>(state: &'a PureState, sites: &[usize]) -> Result<&'a str> {
    let owner = state.system().label(sites[0]);
    if sites.iter().any(|&s| state.system().label(s) != owner) {
        return Err(Error::PreconditionViolated(format!(
            "cut side {sites:?} spans several parties; a bipartite conversion needs one party per side"
        )));
    }
    Ok(owner)
}

/// Protocol converting `source` to a state with Schmidt spectrum `target`
/// across `cut`, with side A measuring and side B correcting.
pub fn synthesize_conversion(source: &PureState, target: &SchmidtVector, cut: &Bipartition) -> Result<LoccProtocol> {
    synthesize_conversion_with(source, target, cut, BranchStyle::Branching)
}

pub fn synthesize_conversion_with(
    source: &PureState,
    target: &SchmidtVector,
    cut: &Bipartition,
    style: BranchStyle,
) -> Result<LoccProtocol> {
    if cut.num_parties() != source.num_parties() {
        return Err(Error::InvalidSubset("cut does not match the state's parties".into()));
    }
    let sa = owner_sites(source, cut.side_a())?;
    let sb = owner_sites(source, cut.side_b())?;
    if sa == sb {
        return Err(Error::PreconditionViolated("both sides of the cut belong to one party".into()));
    }
    let sd = source.schmidt(cut)?;
    let n = sd.coefficients.len();
    if target.values().iter().skip(n).any(|&v| v > MAJORIZATION_TOL) {
        return Err(Error::NotTransformable);
    }
    let x = SchmidtVector { values: sd.coefficients.clone() };
    let mut y = target.padded(n);
    y.truncate(n);
    let steps = t_transform_chain(&x, &SchmidtVector { values: y })?;

    let da = sd.basis_a.rows();
    let ops: Vec<(Matrix, Matrix, Matrix)> = steps.iter().map(|s| step_operators(s, &sd.basis_a, &sd.basis_b, da)).collect();
    let side_a = cut.side_a().to_vec();
    let side_b = cut.side_b().to_vec();
    let root = match style {
        BranchStyle::Branching => branching(&ops, &side_a, &side_b),
        BranchStyle::Converging => ops.iter().rev().fold(Node::Terminal, |next, (m1, m2, w)| Node::Converge {
            step: MeasurementStep::new(side_a.clone(), vec![m1.clone(), m2.clone()]),
            corrections: vec![Vec::new(), vec![LocalOp { sites: side_b.clone(), unitary: w.clone() }]],
            next: Box::new(next),
        }),
    };
    Ok(LoccProtocol::new(source.system().clone(), root))
}

fn branching(ops: &[(Matrix, Matrix, Matrix)], side_a: &[usize], side_b: &[usize]) -> Node {
    let Some((m1, m2, w)) = ops.first() else {
        return Node::Terminal;
    };
    let rest = branching(&ops[1..], side_a, side_b);
    let corrected = Node::Measure {
        step: MeasurementStep::unitary(side_b.to_vec(), w.clone()),
        branches: vec![rest.clone()],
    };
    Node::Measure {
        step: MeasurementStep::new(side_a.to_vec(), vec![m1.clone(), m2.clone()]),
        branches: vec![rest, corrected],
    }
}

/// Kraus pair on side A and the side-B correction for the second outcome.
fn step_operators(step: &TStep, basis_a: &Matrix, basis_b: &Matrix, da: usize) -> (Matrix, Matrix, Matrix) {
    let n = step.cur.len();
    let mut d1 = vec![math::sqrt(step.t); da];
    let mut d2 = vec![math::sqrt(1.0 - step.t); da];
    for i in 0..n {
        if step.cur[i] > 0.0 {
            let r = (step.t * step.next[i] / step.cur[i]).clamp(0.0, 1.0);
            d1[i] = math::sqrt(r);
            d2[i] = math::sqrt(1.0 - r);
        }
    }
    let swap_a = swap_perm(da, step.j, step.k);
    let m1 = basis_a.matmul(&Matrix::diag_real(&d1)).matmul(&basis_a.adjoint());
    let m2 = basis_a
        .matmul(&Matrix::permutation(&swap_a))
        .matmul(&Matrix::diag_real(&d2))
        .matmul(&basis_a.adjoint());
    let db = basis_b.rows();
    let w = basis_b.matmul(&Matrix::permutation(&swap_perm(db, step.j, step.k))).matmul(&basis_b.adjoint());
    (m1, m2, w)
}

fn swap_perm(n: usize, j: usize, k: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.swap(j, k);
    p
}

/// Concentrates `copies` copies of `source` into `k` Bell pairs' worth of
/// maximal entanglement across the copied cut, then banks them.
pub fn concentrate(source: &PureState, cut: &Bipartition, copies: usize) -> Result<(LoccProtocol, u32)> {
    if copies == 0 {
        return Err(Error::InvalidArgument("at least one copy is needed".into()));
    }
    let x = SchmidtVector::from_state(source, cut)?;
    let k = bell_yield(&x, copies);
    if k == 0 {
        return Err(Error::YieldZero);
    }
    let joint = source.tensor_power(copies);
    let m = source.num_parties();
    let side_a: Vec<usize> = (0..copies).flat_map(|c| cut.side_a().iter().map(move |&s| c * m + s)).collect();
    let joint_cut = Bipartition::new(&side_a, joint.num_parties())?;
    let protocol = concentrate_to(&joint, &joint_cut, k)?;
    Ok((protocol, k))
}

/// Concentrates a state that is already a joint register across `cut`.
pub fn concentrate_joint(state: &PureState, cut: &Bipartition) -> Result<(LoccProtocol, u32)> {
    let k = bell_yield(&SchmidtVector::from_state(state, cut)?, 1);
    if k == 0 {
        return Err(Error::YieldZero);
    }
    Ok((concentrate_to(state, cut, k)?, k))
}

fn concentrate_to(state: &PureState, cut: &Bipartition, k: u32) -> Result<LoccProtocol> {
    let target = SchmidtVector::uniform(1usize << k);
    let conversion = synthesize_conversion_with(state, &target, cut, BranchStyle::Converging)?;
    let bank = LoccProtocol::new(
        state.system().clone(),
        Node::Bank {
            sites_a: cut.side_a().to_vec(),
            sites_b: cut.side_b().to_vec(),
            pairs: k,
            next: Box::new(Node::Terminal),
        },
    );
    conversion.then(&bank)
}

/// The two-qubit state `Σ √x_i |i>|i>` on parties labelled `a`, `b`.
pub fn schmidt_state(x: &SchmidtVector, a: &str, b: &str) -> PureState {
    let n = x.len();
    let sys = crate::PartySystem::with_labels(vec![n, n], vec![a.into(), b.into()]).expect("two parties");
    let mut amps = vec![C64::new(0.0, 0.0); n * n];
    for (i, &v) in x.values().iter().enumerate() {
        amps[i * n + i] = C64::new(math::sqrt(v), 0.0);
    }
    PureState::normalized(sys, amps).expect("nonzero spectrum")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{simulate, SimulationOptions};
    use crate::state::PartySystem;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::vec;

    fn sv(v: &[f64]) -> SchmidtVector {
        SchmidtVector::new(v.to_vec()).unwrap()
    }

    fn cut() -> Bipartition {
        Bipartition::new(&[0], 2).unwrap()
    }

    #[test]
    fn majorization_examples() {
        assert!(majorizes(&sv(&[0.5, 0.5]), &sv(&[1.0])));
        assert!(majorizes(&sv(&[0.6, 0.4]), &sv(&[0.7, 0.3])));
        assert!(!majorizes(&sv(&[0.7, 0.3]), &sv(&[0.6, 0.4])));
        assert!(majorizes(&sv(&[0.5, 0.3, 0.2]), &sv(&[0.6, 0.3, 0.1])));
    }

    #[test]
    fn yield_examples() {
        for n in 1..10 {
            assert_eq!(bell_yield(&sv(&[0.5, 0.5]), n), n as u32);
        }
        assert_eq!(bell_yield(&sv(&[2.0 / 3.0, 1.0 / 3.0]), 2), 1);
        assert_eq!(bell_yield(&sv(&[0.9, 0.1]), 1), 0);
        assert_eq!(bell_yield(&sv(&[1.0]), 5), 0);
    }

    fn converted_spectra(source: &PureState, target: &SchmidtVector, style: BranchStyle) -> Vec<(f64, Vec<f64>)> {
        let p = synthesize_conversion_with(source, target, &cut(), style).unwrap();
        let t = simulate(&p, source, SimulationOptions::enumerate()).unwrap();
        t.branches.iter().map(|b| (b.probability, b.state.schmidt(&cut()).unwrap().coefficients)).collect()
    }

    #[test]
    fn conversion_examples() {
        let bell = schmidt_state(&sv(&[0.5, 0.5]), "P1", "P2");
        let p = synthesize_conversion(&bell, &sv(&[0.5, 0.5]), &cut()).unwrap();
        assert_eq!(p.root(), &Node::Terminal);

        let s64 = schmidt_state(&sv(&[0.6, 0.4]), "P1", "P2");
        for style in [BranchStyle::Branching, BranchStyle::Converging] {
            for (_, c) in converted_spectra(&s64, &sv(&[1.0]), style) {
                assert!((c[0] - 1.0).abs() < 1e-12);
            }
            let out = converted_spectra(&s64, &sv(&[0.7, 0.3]), style);
            assert!((out.iter().map(|b| b.0).sum::<f64>() - 1.0).abs() < 1e-12);
            for (_, c) in out {
                assert!((c[0] - 0.7).abs() < 1e-12 && (c[1] - 0.3).abs() < 1e-12);
            }
        }
        let s73 = schmidt_state(&sv(&[0.7, 0.3]), "P1", "P2");
        assert!(matches!(synthesize_conversion(&s73, &sv(&[0.6, 0.4]), &cut()), Err(Error::NotTransformable)));
    }

    #[test]
    fn conversion_in_rotated_bases() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let psi = PureState::random(PartySystem::new(vec![3, 4]).unwrap(), &mut rng);
        let x = SchmidtVector::from_state(&psi, &cut()).unwrap();
        let y = sv(&[x.values()[0] + x.values()[2], x.values()[1]]);
        for (_, c) in converted_spectra(&psi, &y, BranchStyle::Branching) {
            assert!((c[0] - y.values()[0]).abs() < 1e-10 && (c[1] - y.values()[1]).abs() < 1e-10);
        }
    }

    #[test]
    fn concentrate_examples() {
        let bell = schmidt_state(&sv(&[0.5, 0.5]), "P1", "P2");
        let (p, k) = concentrate(&bell, &cut(), 3).unwrap();
        assert_eq!(k, 3);
        let t = simulate(&p, &bell.tensor_power(3), SimulationOptions::enumerate()).unwrap();
        assert_eq!(t.resources().unwrap().produced.values().sum::<u64>(), 3);

        let w_cut = schmidt_state(&sv(&[2.0 / 3.0, 1.0 / 3.0]), "P1", "P2");
        let (p, k) = concentrate(&w_cut, &cut(), 2).unwrap();
        assert_eq!(k, 1);
        let t = simulate(&p, &w_cut.tensor_power(2), SimulationOptions::enumerate()).unwrap();
        assert_eq!(t.branches.len(), 1);
        assert!((t.branches[0].probability - 1.0).abs() < 1e-12);

        let weak = schmidt_state(&sv(&[0.9, 0.1]), "P1", "P2");
        assert!(matches!(concentrate(&weak, &cut(), 1), Err(Error::YieldZero)));
    }

    fn spectrum(len: usize) -> impl Strategy<Value = SchmidtVector> {
        proptest::collection::vec(0.001f64..1.0, len).prop_map(|v| {
            let s: f64 = v.iter().sum();
            SchmidtVector::new(v.into_iter().map(|x| x / s).collect()).unwrap()
        })
    }

    proptest! {
        #[test]
        fn majorization_is_a_preorder(x in spectrum(4), y in spectrum(4), z in spectrum(4)) {
            prop_assert!(majorizes(&x, &x));
            if majorizes(&x, &y) && majorizes(&y, &z) {
                prop_assert!(majorizes(&x, &z));
            }
            if majorizes(&x, &y) && majorizes(&y, &x) {
                for (a, b) in x.values().iter().zip(y.values()) {
                    prop_assert!((a - b).abs() < 1e-9);
                }
            }
            prop_assert!(majorizes(&SchmidtVector::uniform(4), &x));
        }

        #[test]
        fn chain_is_short_and_exact(x in spectrum(4), y in spectrum(4)) {
            let (lo, hi) = if majorizes(&x, &y) { (x, y) } else if majorizes(&y, &x) { (y, x) } else { return Ok(()) };
            let steps = t_transform_chain(&lo, &hi).unwrap();
            prop_assert!(steps.len() <= 3);
            for s in &steps {
                prop_assert!((0.0..=1.0).contains(&s.t));
                for i in 0..4 {
                    let q = if i == s.j { s.k } else if i == s.k { s.j } else { i };
                    prop_assert!((s.t * s.next[i] + (1.0 - s.t) * s.next[q] - s.cur[i]).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn yield_is_monotone_and_nearly_superadditive(x in spectrum(3), n1 in 1usize..12, n2 in 1usize..12) {
            prop_assert!(bell_yield(&x, n1 + 1) >= bell_yield(&x, n1));
            prop_assert!(bell_yield(&x, n1 + n2) + 1 >= bell_yield(&x, n1) + bell_yield(&x, n2));
        }
    }
}
