//! Reduction of a state entangled across a bipartition to a pure entangled
//! pair between one party on each side, by local measurements only.
//!
//! One round removes one party. With `p` the lowest party on a side holding
//! at least two parties and `R` the rest of that side, either some rank-one
//! projection on `p` leaves a state entangled across `R | other side`
//! (Case 1: measure `p` in a basis where every outcome does so), or no
//! projection does, in which case `R` factors out of the state altogether and
//! is dropped (Case 2).

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, C64, ONE, ZERO};
use crate::math;
use crate::product::relative_tail;
use crate::protocol::{self, LoccProtocol, MeasurementStep, Node, SimulationOptions};
use crate::state::{self, Bipartition, PureState};
use crate::{EPS_NORM, EPS_PRUNE, EPS_RANK};

const THETA_GRID: usize = 64;
const MAX_ROTATION_ATTEMPTS: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Case {
    /// Some projection on the measured party keeps the rest of its side
    /// entangled with the other side.
    Case1,
    /// The rest of the measured party's side factors out.
    Case2,
}

#[derive(Clone, Debug)]
pub struct ExtractedBranch {
    pub path: Vec<usize>,
    pub probability: f64,
    /// Original indices of the surviving parties, side A first.
    pub pair: (usize, usize),
    pub state: PureState,
}

#[derive(Clone, Debug)]
pub struct ExtractionResult {
    pub protocol: LoccProtocol,
    pub branches: Vec<ExtractedBranch>,
}

impl ExtractionResult {
    pub fn total_probability(&self) -> f64 {
        self.branches.iter().map(|b| b.probability).sum()
    }
}

/// `(<v|_p ⊗ I)|ψ>` as amplitudes over the remaining sites.
fn residual(state: &PureState, p: usize, v: &[C64]) -> Vec<C64> {
    let m = state::coefficient_matrix(state.system().dims(), state.amplitudes(), &[p]);
    let conj: Vec<C64> = v.iter().map(|x| x.conj()).collect();
    m.transpose().mul_vec(&conj)
}

/// Verdict on one projection outcome: `None` if it has (numerically) zero
/// weight, otherwise whether it is entangled across the cut.
fn outcome_entangled(state: &PureState, p: usize, rows: &[usize], v: &[C64]) -> Option<bool> {
    let r = residual(state, p, v);
    if linalg::norm_sqr(&r) < EPS_PRUNE {
        return None;
    }
    let dims = state.system().without(&[p]);
    let m = state::coefficient_matrix(dims.dims(), &r, rows);
    Some(relative_tail(&m) > EPS_RANK)
}

/// Positions of `side − {p}` after `p` is removed from the system.
fn rows_without(side: &[usize], p: usize) -> Vec<usize> {
    side.iter().filter(|&&s| s != p).map(|&s| if s > p { s - 1 } else { s }).collect()
}

fn probes(d: usize) -> Vec<Vec<C64>> {
    let h = 1.0 / math::sqrt(2.0);
    let mut out = Vec::new();
    for i in 0..d {
        let mut e = vec![ZERO; d];
        e[i] = ONE;
        out.push(e);
    }
    for i in 0..d {
        for j in i + 1..d {
            let mut plus = vec![ZERO; d];
            plus[i] = C64::new(h, 0.0);
            plus[j] = C64::new(h, 0.0);
            out.push(plus);
            let mut phase = vec![ZERO; d];
            phase[i] = C64::new(h, 0.0);
            phase[j] = C64::new(0.0, h);
            out.push(phase);
        }
    }
    out
}

fn check_round(state: &PureState, measured: usize, cut: &Bipartition) -> Result<Vec<usize>> {
    if cut.num_parties() != state.num_parties() {
        return Err(Error::PreconditionViolated("cut does not match the state's parties".into()));
    }
    if !cut.side_a().contains(&measured) || cut.side_a().len() < 2 {
        return Err(Error::PreconditionViolated(
            "measured party must lie on side A and side A must hold at least two parties".into(),
        ));
    }
    if !state.is_entangled(cut)? {
        return Err(Error::PreconditionViolated("state is product across the cut".into()));
    }
    Ok(rows_without(cut.side_a(), measured))
}

/// First probe vector whose outcome stays entangled, if any.
fn entangled_probe(state: &PureState, p: usize, rows: &[usize]) -> Option<Vec<C64>> {
    probes(state.system().dims()[p]).into_iter().find(|v| outcome_entangled(state, p, rows, v) == Some(true))
}

pub fn classify_case(state: &PureState, measured_party: usize, cut: &Bipartition) -> Result<Case> {
    let rows = check_round(state, measured_party, cut)?;
    Ok(if entangled_probe(state, measured_party, &rows).is_some() { Case::Case1 } else { Case::Case2 })
}

/// Orthonormal basis of the measured party such that every nonzero outcome
/// stays entangled across `(side A − measured) | side B`.
pub fn case1_basis(state: &PureState, measured_party: usize, cut: &Bipartition, seed: u64) -> Result<Vec<Vec<C64>>> {
    let rows = check_round(state, measured_party, cut)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    basis_search(state, measured_party, &rows, &mut rng)
}

fn basis_search(state: &PureState, p: usize, rows: &[usize], rng: &mut ChaCha8Rng) -> Result<Vec<Vec<C64>>> {
    let d = state.system().dims()[p];
    let computational = linalg::complete_basis(&[], d);
    let good = |v: &[C64]| outcome_entangled(state, p, rows, v) != Some(false);
    if computational.iter().all(|v| good(v)) {
        return Ok(computational);
    }
    let witness = entangled_probe(state, p, rows)
        .ok_or_else(|| Error::PreconditionViolated("no projection keeps the state entangled (Case 2)".into()))?;
    let mut basis = linalg::complete_basis(&[witness], d);
    let mut attempts = 0;
    loop {
        let verdicts: Vec<Option<bool>> = basis.iter().map(|v| outcome_entangled(state, p, rows, v)).collect();
        let Some(bad) = verdicts.iter().position(|&x| x == Some(false)) else {
            return Ok(basis);
        };
        let anchor = verdicts.iter().position(|&x| x == Some(true)).expect("the witness stays entangled");
        // rotate within span{anchor, bad}; each of the two new outcomes is
        // product for at most one angle
        loop {
            if attempts >= MAX_ROTATION_ATTEMPTS {
                return Err(Error::BasisSearchExhausted { attempts });
            }
            attempts += 1;
            let k = rng.gen_range(0..THETA_GRID);
            let theta = (k + 1) as f64 * FRAC_PI_2 / (THETA_GRID + 1) as f64;
            let (c, s) = (math::cos(theta), math::sin(theta));
            let a = &basis[anchor];
            let b = &basis[bad];
            let new_a: Vec<C64> = a.iter().zip(b).map(|(x, y)| x * c + y * s).collect();
            let new_b: Vec<C64> = a.iter().zip(b).map(|(x, y)| x * s - y * c).collect();
            if outcome_entangled(state, p, rows, &new_a) == Some(true) && good(&new_b) {
                basis[anchor] = new_a;
                basis[bad] = new_b;
                break;
            }
        }
    }
}

/// Builds and verifies the extraction protocol for `state` across `cut`.
pub fn extract_pair(state: &PureState, cut: &Bipartition, seed: u64) -> Result<ExtractionResult> {
    if cut.num_parties() != state.num_parties() {
        return Err(Error::PreconditionViolated("cut does not match the state's parties".into()));
    }
    if !state.system().labels_unique() {
        return Err(Error::PreconditionViolated("extraction needs distinct party labels".into()));
    }
    if !state.is_entangled(cut)? {
        return Err(Error::PreconditionViolated("state is product across the cut".into()));
    }
    let labels = state.system().labels();
    let side_a: Vec<String> = cut.side_a().iter().map(|&s| labels[s].clone()).collect();
    let side_b: Vec<String> = cut.side_b().iter().map(|&s| labels[s].clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let root = build_round(state, &side_a, &side_b, &mut rng)?;
    let protocol = LoccProtocol::new(state.system().clone(), root);
    let trace = protocol::simulate(&protocol, state, SimulationOptions::enumerate())?;

    let mut branches = Vec::with_capacity(trace.branches.len());
    for b in trace.branches {
        let sys = b.state.system();
        if sys.num_parties() != 2 {
            return Err(Error::VerificationFailed(format!("branch {:?} ended with {} parties", b.path, sys.num_parties())));
        }
        let a_site = if side_a.iter().any(|l| l == sys.label(0)) { 0 } else { 1 };
        let pair_cut = Bipartition::new(&[a_site], 2)?;
        if !b.state.is_entangled(&pair_cut)? {
            return Err(Error::VerificationFailed(format!("branch {:?} ended in a product state", b.path)));
        }
        let original = |site: usize| state.system().position(sys.label(site)).expect("label from the input");
        branches.push(ExtractedBranch {
            path: b.path,
            probability: b.probability,
            pair: (original(a_site), original(1 - a_site)),
            state: b.state,
        });
    }
    let result = ExtractionResult { protocol, branches };
    let total = result.total_probability();
    if math::abs(total - 1.0) > EPS_NORM {
        return Err(Error::VerificationFailed(format!("branch probabilities sum to {total}")));
    }
    Ok(result)
}

fn build_round(state: &PureState, side_a: &[String], side_b: &[String], rng: &mut ChaCha8Rng) -> Result<Node> {
    let (this, other) = if side_a.len() >= 2 {
        (side_a, side_b)
    } else if side_b.len() >= 2 {
        (side_b, side_a)
    } else {
        return Ok(Node::Terminal);
    };
    let sys = state.system();
    let pos = |l: &String| sys.position(l).expect("active label");
    let mut sites: Vec<usize> = this.iter().map(pos).collect();
    sites.sort_unstable();
    let p = sites[0];
    let rest: Vec<String> = this.iter().filter(|l| pos(l) != p).cloned().collect();
    let rows = rows_without(&sites, p);

    let continue_with = |next: &PureState, rng: &mut ChaCha8Rng, rest: &[String], keep: &[String]| {
        if side_a.len() >= 2 {
            build_round(next, rest, keep, rng)
        } else {
            build_round(next, keep, rest, rng)
        }
    };

    if entangled_probe(state, p, &rows).is_some() {
        let basis = basis_search(state, p, &rows, rng)?;
        let mut branches = Vec::with_capacity(basis.len());
        for v in &basis {
            let r = residual(state, p, v);
            let child = if linalg::norm_sqr(&r) < EPS_PRUNE {
                Node::Terminal
            } else {
                let next = PureState::normalized(sys.without(&[p]), r)?;
                continue_with(&next, rng, &rest, other)?
            };
            branches.push(Node::Discard { sites: vec![p], next: Box::new(child) });
        }
        Ok(Node::Measure { step: MeasurementStep::projective(vec![p], &basis), branches })
    } else {
        let dropped: Vec<usize> = sites[1..].to_vec();
        let next = protocol::discard(state, &dropped)?;
        let keep = [sys.label(p).into()];
        let child = continue_with(&next, rng, &keep, other)?;
        Ok(Node::Discard { sites: dropped, next: Box::new(child) })
    }
}
