//! LOCC protocol trees and the referee simulator that executes them.
//!
//! A protocol is a tree over a [`PartySystem`]. Every operation acts on sites
//! that share one owner label, so locality is checked structurally; classical
//! communication is free, and any child may act on any party.
//!
//! Outcome labels are the indices of the Kraus operators of a [`Node::Measure`]
//! step; a branch is identified by the concatenation of its labels. Nodes other
//! than `Measure` add no label.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ledger::PartyPair;
use crate::linalg::{self, Matrix, C64, ONE, ZERO};
use crate::math;
use crate::state::{self, PartySystem, PureState};
use crate::{EPS_KRAUS, EPS_PRUNE, EPS_RANK};

pub const DEFAULT_DEPTH_CAP: usize = 64;

/// Generalized measurement on the joint space of `sites`, one Kraus operator
/// per classical outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementStep {
    pub sites: Vec<usize>,
    pub kraus: Vec<Matrix>,
}

impl MeasurementStep {
    pub fn new(sites: Vec<usize>, kraus: Vec<Matrix>) -> Self {
        Self { sites, kraus }
    }

    /// A local unitary as a single-outcome step.
    pub fn unitary(sites: Vec<usize>, u: Matrix) -> Self {
        Self { sites, kraus: vec![u] }
    }

    /// Projective measurement onto the given (orthonormal) basis vectors.
    pub fn projective(sites: Vec<usize>, basis: &[Vec<C64>]) -> Self {
        Self { sites, kraus: basis.iter().map(|v| Matrix::outer(v, v)).collect() }
    }

    /// Computational-basis measurement of one site of dimension `dim`.
    pub fn computational(site: usize, dim: usize) -> Self {
        let basis: Vec<Vec<C64>> = (0..dim)
            .map(|i| {
                let mut e = vec![ZERO; dim];
                e[i] = ONE;
                e
            })
            .collect();
        Self::projective(vec![site], &basis)
    }

    /// Largest entry of `Σ K†K − I`.
    pub fn completeness_error(&self) -> f64 {
        let Some(first) = self.kraus.first() else {
            return f64::INFINITY;
        };
        let n = first.cols();
        let mut sum = Matrix::zeros(n, n);
        for k in &self.kraus {
            if k.rows() != n || k.cols() != n {
                return f64::INFINITY;
            }
            sum = sum.add(&k.adjoint().matmul(k));
        }
        sum.max_abs_diff(&Matrix::identity(n))
    }
}

/// A local unitary correction.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalOp {
    pub sites: Vec<usize>,
    pub unitary: Matrix,
}

/// Entanglement or ancillas appended to the system by a [`Node::Attach`].
#[derive(Clone, Debug, PartialEq)]
pub enum Resource {
    /// `pairs` Bell pairs drawn from the ledger, appended as a site of
    /// dimension `2^pairs` at `holder` followed by one at `receiver`, in the
    /// state `Σ_i |i>|i> / √(2^pairs)`.
    BellPairs { holder: String, receiver: String, pairs: u32 },
    /// A local register in `|0>`.
    Fresh { owner: String, dim: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Terminal,
    /// Measure and branch; one child per Kraus operator.
    Measure { step: MeasurementStep, branches: Vec<Node> },
    /// Measure, apply the outcome's local corrections, then forget the
    /// outcome. The simulator verifies that all corrected outcomes coincide up
    /// to phase.
    Converge { step: MeasurementStep, corrections: Vec<Vec<LocalOp>>, next: Box<Node> },
    /// Drop sites that are in a pure state uncorrelated with the rest.
    Discard { sites: Vec<usize>, next: Box<Node> },
    /// Isometric embedding of a site into a larger dimension (padding levels
    /// start unpopulated).
    Embed { site: usize, dim: usize, next: Box<Node> },
    /// Shrink a site whose support lies in its first `dim` levels.
    Restrict { site: usize, dim: usize, next: Box<Node> },
    /// Relabel site order: new site `k` is old site `order[k]`.
    Reorder { order: Vec<usize>, next: Box<Node> },
    Attach { resource: Resource, next: Box<Node> },
    /// Verify that `sites_a`/`sites_b` hold exactly `pairs` ebits of maximal
    /// entanglement and credit them as Bell pairs.
    Bank { sites_a: Vec<usize>, sites_b: Vec<usize>, pairs: u32, next: Box<Node> },
}

impl Node {
    /// Number of measurement rounds on the deepest path.
    pub fn depth(&self) -> usize {
        match self {
            Node::Terminal => 0,
            Node::Measure { branches, .. } => 1 + branches.iter().map(Node::depth).max().unwrap_or(0),
            Node::Converge { next, .. } => 1 + next.depth(),
            other => other.child().map_or(0, Node::depth),
        }
    }

    fn child(&self) -> Option<&Node> {
        match self {
            Node::Converge { next, .. }
            | Node::Discard { next, .. }
            | Node::Embed { next, .. }
            | Node::Restrict { next, .. }
            | Node::Reorder { next, .. }
            | Node::Attach { next, .. }
            | Node::Bank { next, .. } => Some(next),
            Node::Terminal | Node::Measure { .. } => None,
        }
    }

    fn child_mut(&mut self) -> Option<&mut Node> {
        match self {
            Node::Converge { next, .. }
            | Node::Discard { next, .. }
            | Node::Embed { next, .. }
            | Node::Restrict { next, .. }
            | Node::Reorder { next, .. }
            | Node::Attach { next, .. }
            | Node::Bank { next, .. } => Some(next),
            Node::Terminal | Node::Measure { .. } => None,
        }
    }

    /// Count of terminal leaves.
    pub fn leaf_count(&self) -> usize {
        match self {
            Node::Terminal => 1,
            Node::Measure { branches, .. } => branches.iter().map(Node::leaf_count).sum(),
            other => other.child().map_or(1, Node::leaf_count),
        }
    }
}

/// The system after a non-branching node, or a description of why the node
/// does not fit `system`.
fn system_after(node: &Node, system: &PartySystem) -> core::result::Result<PartySystem, String> {
    let n = system.num_parties();
    let in_range = |sites: &[usize]| -> core::result::Result<(), String> {
        for (i, &s) in sites.iter().enumerate() {
            if s >= n {
                return Err(format!("site {s} out of range for {n} sites"));
            }
            if sites[..i].contains(&s) {
                return Err(format!("site {s} repeated"));
            }
        }
        Ok(())
    };
    match node {
        Node::Terminal | Node::Measure { .. } | Node::Converge { .. } => Ok(system.clone()),
        Node::Discard { sites, .. } => {
            in_range(sites)?;
            if sites.is_empty() || sites.len() >= n {
                return Err("discard must drop a nonempty proper subset of sites".to_string());
            }
            Ok(system.without(sites))
        }
        Node::Embed { site, dim, .. } => {
            in_range(&[*site])?;
            if *dim < system.dims()[*site] {
                return Err(format!("embed of site {site} into smaller dimension {dim}"));
            }
            Ok(system.with_dim(*site, *dim))
        }
        Node::Restrict { site, dim, .. } => {
            in_range(&[*site])?;
            if *dim == 0 || *dim > system.dims()[*site] {
                return Err(format!("restrict of site {site} to dimension {dim}"));
            }
            Ok(system.with_dim(*site, *dim))
        }
        Node::Reorder { order, .. } => {
            in_range(order)?;
            if order.len() != n {
                return Err("reorder is not a permutation".to_string());
            }
            Ok(system.subsystem(order))
        }
        Node::Attach { resource, .. } => match resource {
            Resource::BellPairs { holder, receiver, pairs } => {
                if holder == receiver {
                    return Err("Bell pairs must join two different parties".to_string());
                }
                if *pairs == 0 || *pairs > 24 {
                    return Err(format!("unsupported Bell-pair bundle size {pairs}"));
                }
                let d = 1usize << pairs;
                let extra = PartySystem::with_labels(vec![d, d], vec![holder.clone(), receiver.clone()])
                    .map_err(|e| e.to_string())?;
                Ok(system.concat(&extra))
            }
            Resource::Fresh { owner, dim } => {
                let extra = PartySystem::with_labels(vec![*dim], vec![owner.clone()]).map_err(|e| e.to_string())?;
                Ok(system.concat(&extra))
            }
        },
        Node::Bank { sites_a, sites_b, pairs, .. } => {
            in_range(sites_a)?;
            in_range(sites_b)?;
            if sites_a.is_empty() || sites_b.is_empty() || sites_a.iter().any(|s| sites_b.contains(s)) {
                return Err("bank sides must be nonempty and disjoint".to_string());
            }
            let oa = single_owner(system, sites_a)?;
            let ob = single_owner(system, sites_b)?;
            if oa == ob {
                return Err("bank sides belong to the same party".to_string());
            }
            if *pairs == 0 || *pairs > 24 {
                return Err(format!("unsupported bank size {pairs}"));
            }
            let need = 1usize << pairs;
            if system.dim_of(sites_a) < need || system.dim_of(sites_b) < need {
                return Err("bank sides too small for the claimed pairs".to_string());
            }
            Ok(system.clone())
        }
    }
}

fn single_owner<'a>(system: &'a PartySystem, sites: &[usize]) -> core::result::Result<&'a str, String> {
    let owner = system.label(sites[0]);
    if sites.iter().any(|&s| system.label(s) != owner) {
        return Err(format!("operation spans several parties ({owner} and others)"));
    }
    Ok(owner)
}

fn check_step(step: &MeasurementStep, system: &PartySystem) -> core::result::Result<(), String> {
    if step.sites.is_empty() {
        return Err("measurement acts on no sites".to_string());
    }
    for (i, &s) in step.sites.iter().enumerate() {
        if s >= system.num_parties() || step.sites[..i].contains(&s) {
            return Err(format!("measurement site {s} out of range or repeated"));
        }
    }
    single_owner(system, &step.sites)?;
    if step.kraus.is_empty() {
        return Err("measurement has no Kraus operators".to_string());
    }
    let d = system.dim_of(&step.sites);
    if step.kraus.iter().any(|k| k.rows() != d || k.cols() != d) {
        return Err(format!("Kraus operators must be {d}x{d}"));
    }
    let err = step.completeness_error();
    if err > EPS_KRAUS {
        return Err(format!("Kraus completeness violated (max deviation {err:.3e})"));
    }
    Ok(())
}

fn check_op(op: &LocalOp, system: &PartySystem) -> core::result::Result<(), String> {
    check_step(&MeasurementStep::unitary(op.sites.clone(), op.unitary.clone()), system)
}

/// One problem found by [`LoccProtocol::validate`], located by outcome path.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub path: Vec<usize>,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub depth: usize,
    pub depth_cap: usize,
    pub truncated: bool,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            return write!(f, "valid (depth {})", self.depth);
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "at {:?}: {}", v.path, v.message)?;
        }
        Ok(())
    }
}

/// An LOCC protocol over a fixed input system.
#[derive(Clone, Debug, PartialEq)]
pub struct LoccProtocol {
    system: PartySystem,
    root: Node,
}

impl LoccProtocol {
    pub fn new(system: PartySystem, root: Node) -> Self {
        Self { system, root }
    }

    /// The protocol that does nothing.
    pub fn identity(system: PartySystem) -> Self {
        Self { system, root: Node::Terminal }
    }

    pub fn system(&self) -> &PartySystem {
        &self.system
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn into_root(self) -> Node {
        self.root
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn validate(&self, system: &PartySystem) -> ValidationReport {
        self.validate_with(system, DEFAULT_DEPTH_CAP)
    }

    /// Checks dimensions, locality, Kraus completeness and depth at every node.
    pub fn validate_with(&self, system: &PartySystem, depth_cap: usize) -> ValidationReport {
        let mut report = ValidationReport { depth_cap, ..Default::default() };
        if system != &self.system {
            report.violations.push(Violation {
                path: Vec::new(),
                message: "protocol was built for a different party system".to_string(),
            });
            return report;
        }
        report.depth = self.root.depth();
        if report.depth > depth_cap {
            report.truncated = true;
            report.violations.push(Violation {
                path: Vec::new(),
                message: format!("depth {} exceeds cap {depth_cap}", report.depth),
            });
        }
        let mut path = Vec::new();
        validate_node(&self.root, system, &mut path, &mut report.violations);
        report
    }

    /// Outcome paths of all leaves with the system each leaf ends on.
    pub fn leaves(&self) -> Result<Vec<(Vec<usize>, PartySystem)>> {
        let mut out = Vec::new();
        collect_leaves(&self.root, &self.system, &mut Vec::new(), &mut out)?;
        Ok(out)
    }

    /// Grafts `then[path]` onto the leaf with that outcome path; leaves not in
    /// the map stay terminal.
    pub fn compose(&self, then: &BTreeMap<Vec<usize>, LoccProtocol>) -> Result<LoccProtocol> {
        let mut root = self.root.clone();
        let mut used = 0usize;
        graft(&mut root, &self.system, &mut Vec::new(), &mut |path, sys| match then.get(path) {
            Some(p) if &p.system == sys => {
                used += 1;
                Ok(Some(p.root.clone()))
            }
            Some(_) => Err(Error::SystemMismatch),
            None => Ok(None),
        })?;
        if used != then.len() {
            return Err(Error::InvalidArgument("continuation keyed by a path that is not a leaf".to_string()));
        }
        Ok(LoccProtocol { system: self.system.clone(), root })
    }

    /// Grafts the same continuation onto every leaf.
    pub fn then(&self, next: &LoccProtocol) -> Result<LoccProtocol> {
        let mut root = self.root.clone();
        graft(&mut root, &self.system, &mut Vec::new(), &mut |_, sys| {
            if sys == &next.system {
                Ok(Some(next.root.clone()))
            } else {
                Err(Error::SystemMismatch)
            }
        })?;
        Ok(LoccProtocol { system: self.system.clone(), root })
    }
}

fn validate_node(node: &Node, system: &PartySystem, path: &mut Vec<usize>, out: &mut Vec<Violation>) {
    let mut push = |msg: String, path: &Vec<usize>| out.push(Violation { path: path.clone(), message: msg });
    match node {
        Node::Terminal => {}
        Node::Measure { step, branches } => {
            if let Err(msg) = check_step(step, system) {
                push(msg, path);
                return;
            }
            if branches.len() != step.kraus.len() {
                push(format!("{} branches for {} outcomes", branches.len(), step.kraus.len()), path);
                return;
            }
            for (k, b) in branches.iter().enumerate() {
                path.push(k);
                validate_node(b, system, path, out);
                path.pop();
            }
        }
        Node::Converge { step, corrections, next } => {
            if let Err(msg) = check_step(step, system) {
                push(msg, path);
                return;
            }
            if corrections.len() != step.kraus.len() {
                push("one correction slot per outcome is required".to_string(), path);
                return;
            }
            for op in corrections.iter().flatten() {
                if let Err(msg) = check_op(op, system) {
                    push(format!("correction: {msg}"), path);
                    return;
                }
            }
            validate_node(next, system, path, out);
        }
        other => match system_after(other, system) {
            Ok(next_sys) => validate_node(other.child().expect("non-branching node"), &next_sys, path, out),
            Err(msg) => push(msg, path),
        },
    }
}

fn collect_leaves(
    node: &Node,
    system: &PartySystem,
    path: &mut Vec<usize>,
    out: &mut Vec<(Vec<usize>, PartySystem)>,
) -> Result<()> {
    match node {
        Node::Terminal => out.push((path.clone(), system.clone())),
        Node::Measure { branches, .. } => {
            for (k, b) in branches.iter().enumerate() {
                path.push(k);
                collect_leaves(b, system, path, out)?;
                path.pop();
            }
        }
        other => {
            let next = system_after(other, system).map_err(Error::ProtocolInvalid)?;
            collect_leaves(other.child().expect("non-branching node"), &next, path, out)?;
        }
    }
    Ok(())
}

/// Replacement subtree for the leaf at a path, if any.
type Graft<'a> = dyn FnMut(&[usize], &PartySystem) -> Result<Option<Node>> + 'a;

fn graft(node: &mut Node, system: &PartySystem, path: &mut Vec<usize>, cont: &mut Graft<'_>) -> Result<()> {
    match node {
        Node::Terminal => {
            if let Some(n) = cont(path, system)? {
                *node = n;
            }
        }
        Node::Measure { branches, .. } => {
            for (k, b) in branches.iter_mut().enumerate() {
                path.push(k);
                graft(b, system, path, cont)?;
                path.pop();
            }
        }
        other => {
            let next = system_after(other, system).map_err(Error::ProtocolInvalid)?;
            graft(other.child_mut().expect("non-branching node"), &next, path, cont)?;
        }
    }
    Ok(())
}

/// How a multi-outcome step whose outcomes can be undone is emitted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BranchStyle {
    /// One child per outcome, each applying its correction.
    Branching,
    /// A [`Node::Converge`]: correct, forget the outcome, continue linearly.
    Converging,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SimulationMode {
    /// Expand every outcome with its exact probability.
    Enumerate,
    /// Follow one outcome path drawn from the seeded generator.
    Sample,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SimulationOptions {
    pub mode: SimulationMode,
    pub seed: u64,
    pub depth_cap: usize,
}

impl SimulationOptions {
    pub fn enumerate() -> Self {
        Self { mode: SimulationMode::Enumerate, seed: 0, depth_cap: DEFAULT_DEPTH_CAP }
    }

    pub fn sample(seed: u64) -> Self {
        Self { mode: SimulationMode::Sample, seed, depth_cap: DEFAULT_DEPTH_CAP }
    }

    pub fn with_mode(mode: SimulationMode, seed: u64) -> Self {
        Self { mode, seed, depth_cap: DEFAULT_DEPTH_CAP }
    }
}

/// Bell pairs drawn (by `Attach`) and produced (by `Bank`) along a branch.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ResourceTally {
    pub consumed: BTreeMap<PartyPair, u64>,
    pub produced: BTreeMap<PartyPair, u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceBranch {
    pub path: Vec<usize>,
    pub probability: f64,
    pub state: PureState,
    pub resources: ResourceTally,
}

/// Record of a simulated execution.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolTrace {
    pub branches: Vec<TraceBranch>,
}

impl ProtocolTrace {
    pub fn total_probability(&self) -> f64 {
        self.branches.iter().map(|b| b.probability).sum()
    }

    /// The resource tally when every branch agrees on it.
    pub fn resources(&self) -> Option<&ResourceTally> {
        let first = &self.branches.first()?.resources;
        self.branches.iter().all(|b| &b.resources == first).then_some(first)
    }
}

/// Runs `protocol` on `state`.
pub fn simulate(protocol: &LoccProtocol, state: &PureState, options: SimulationOptions) -> Result<ProtocolTrace> {
    if state.system() != protocol.system() {
        return Err(Error::SystemMismatch);
    }
    let report = protocol.validate_with(state.system(), options.depth_cap);
    if !report.is_valid() {
        return Err(Error::ProtocolInvalid(report.to_string()));
    }
    let mut sim = Simulator {
        mode: options.mode,
        rng: ChaCha8Rng::seed_from_u64(options.seed),
        branches: Vec::new(),
    };
    sim.walk(&protocol.root, state.clone(), &mut Vec::new(), 1.0, ResourceTally::default())?;
    Ok(ProtocolTrace { branches: sim.branches })
}

struct Simulator {
    mode: SimulationMode,
    rng: ChaCha8Rng,
    branches: Vec<TraceBranch>,
}

impl Simulator {
    fn walk(
        &mut self,
        node: &Node,
        state: PureState,
        path: &mut Vec<usize>,
        probability: f64,
        mut tally: ResourceTally,
    ) -> Result<()> {
        match node {
            Node::Terminal => {
                self.branches.push(TraceBranch { path: path.clone(), probability, state, resources: tally });
                Ok(())
            }
            Node::Measure { step, branches } => {
                let outcomes = outcomes(&state, step);
                let chosen: Vec<usize> = match self.mode {
                    SimulationMode::Enumerate => (0..outcomes.len()).filter(|&k| outcomes[k].0 >= EPS_PRUNE).collect(),
                    SimulationMode::Sample => vec![self.draw(&outcomes)],
                };
                for k in chosen {
                    let (p, amps) = &outcomes[k];
                    let next = PureState::normalized(state.system().clone(), amps.clone())?;
                    path.push(k);
                    self.walk(&branches[k], next, path, probability * p, tally.clone())?;
                    path.pop();
                }
                Ok(())
            }
            Node::Converge { step, corrections, next } => {
                let outcomes = outcomes(&state, step);
                let mut result: Option<(f64, PureState)> = None;
                for (k, (p, amps)) in outcomes.into_iter().enumerate() {
                    if p < EPS_PRUNE {
                        continue;
                    }
                    let amps = corrections[k]
                        .iter()
                        .fold(amps, |v, op| state::apply_local(state.system().dims(), &v, &op.sites, &op.unitary));
                    let candidate = PureState::normalized(state.system().clone(), amps)?;
                    match &result {
                        None => result = Some((p, candidate)),
                        Some((_, reference)) => {
                            let f = reference.fidelity(&candidate)?;
                            if f < 1.0 - EPS_KRAUS {
                                return Err(Error::VerificationFailed(format!(
                                    "converging outcome {k} differs from the first (fidelity {f})"
                                )));
                            }
                        }
                    }
                }
                let (_, next_state) = result.ok_or_else(|| Error::VerificationFailed("no outcome survives".to_string()))?;
                self.walk(next, next_state, path, probability, tally)
            }
            Node::Discard { sites, next } => {
                let rest = discard(&state, sites)?;
                self.walk(next, rest, path, probability, tally)
            }
            Node::Embed { site, dim, next } => {
                let sys = state.system().with_dim(*site, *dim);
                let old = state.system().dims();
                let mut amps = vec![ZERO; sys.total_dim()];
                let new_offsets = state::site_offsets(sys.dims(), &(0..sys.num_parties()).collect::<Vec<_>>());
                // map each old multi-index to the same digits in the new radix
                let strides_new = strides(sys.dims());
                for (idx, a) in state.amplitudes().iter().enumerate() {
                    let mut rem = idx;
                    let mut target = 0;
                    for s in (0..old.len()).rev() {
                        let digit = rem % old[s];
                        rem /= old[s];
                        target += digit * strides_new[s];
                    }
                    amps[target] = *a;
                }
                debug_assert_eq!(new_offsets.len(), amps.len());
                self.walk(next, PureState::from_parts_unchecked(sys, amps), path, probability, tally)
            }
            Node::Restrict { site, dim, next } => {
                let old = state.system().dims();
                let sys = state.system().with_dim(*site, *dim);
                let strides_new = strides(sys.dims());
                let mut amps = vec![ZERO; sys.total_dim()];
                let mut outside = 0.0;
                for (idx, a) in state.amplitudes().iter().enumerate() {
                    let mut rem = idx;
                    let mut target = 0;
                    let mut keep = true;
                    for s in (0..old.len()).rev() {
                        let digit = rem % old[s];
                        rem /= old[s];
                        if s == *site && digit >= *dim {
                            keep = false;
                        }
                        target += digit * strides_new[s];
                    }
                    if keep {
                        amps[target] = *a;
                    } else {
                        outside += a.norm_sqr();
                    }
                }
                if outside > EPS_RANK {
                    return Err(Error::VerificationFailed(format!(
                        "restricted site {site} carries weight {outside:.3e} outside its first {dim} levels"
                    )));
                }
                self.walk(next, PureState::normalized(sys, amps)?, path, probability, tally)
            }
            Node::Reorder { order, next } => {
                let s = state.permute_parties(order)?;
                self.walk(next, s, path, probability, tally)
            }
            Node::Attach { resource, next } => {
                let extra = match resource {
                    Resource::BellPairs { holder, receiver, pairs } => {
                        *tally.consumed.entry(PartyPair::new(holder, receiver)).or_insert(0) += u64::from(*pairs);
                        bell_bundle(holder, receiver, *pairs)
                    }
                    Resource::Fresh { owner, dim } => {
                        let sys = PartySystem::with_labels(vec![*dim], vec![owner.clone()])?;
                        PureState::basis(sys, &[0])?
                    }
                };
                self.walk(next, state.tensor(&extra), path, probability, tally)
            }
            Node::Bank { sites_a, sites_b, pairs, next } => {
                verify_maximally_entangled(&state, sites_a, sites_b, *pairs)?;
                let pair = PartyPair::new(state.system().label(sites_a[0]), state.system().label(sites_b[0]));
                *tally.produced.entry(pair).or_insert(0) += u64::from(*pairs);
                self.walk(next, state, path, probability, tally)
            }
        }
    }

    fn draw(&mut self, outcomes: &[(f64, Vec<C64>)]) -> usize {
        let live: Vec<usize> = (0..outcomes.len()).filter(|&k| outcomes[k].0 >= EPS_PRUNE).collect();
        let total: f64 = live.iter().map(|&k| outcomes[k].0).sum();
        let mut r = self.rng.gen::<f64>() * total;
        for &k in &live {
            r -= outcomes[k].0;
            if r < 0.0 {
                return k;
            }
        }
        *live.last().expect("a complete measurement has a live outcome")
    }
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

/// Unnormalized post-measurement vectors with their probabilities.
fn outcomes(state: &PureState, step: &MeasurementStep) -> Vec<(f64, Vec<C64>)> {
    step.kraus
        .iter()
        .map(|k| {
            let v = state::apply_local(state.system().dims(), state.amplitudes(), &step.sites, k);
            (linalg::norm_sqr(&v), v)
        })
        .collect()
}

/// `pairs` Bell pairs as one site per owner.
pub fn bell_bundle(holder: &str, receiver: &str, pairs: u32) -> PureState {
    let d = 1usize << pairs;
    let sys = PartySystem::with_labels(vec![d, d], vec![holder.to_string(), receiver.to_string()])
        .expect("bundle system");
    let amp = C64::new(1.0 / math::sqrt(d as f64), 0.0);
    let mut amps = vec![ZERO; d * d];
    for i in 0..d {
        amps[i * d + i] = amp;
    }
    PureState::from_parts_unchecked(sys, amps)
}

/// The state of the remaining sites after dropping `sites`, which must be
/// uncorrelated with the rest.
pub(crate) fn discard(state: &PureState, sites: &[usize]) -> Result<PureState> {
    let dims = state.system().dims();
    let m = state::coefficient_matrix(dims, state.amplitudes(), sites);
    let (c, u, _) = state::schmidt_factor(&m);
    let total: f64 = c.iter().sum();
    let tail: f64 = c.iter().skip(1).sum::<f64>() / total;
    if tail > EPS_RANK {
        return Err(Error::VerificationFailed(format!(
            "discarded sites {sites:?} are entangled with the rest (Schmidt tail {tail:.3e})"
        )));
    }
    let a0: Vec<C64> = u.column(0).iter().map(|x| x.conj()).collect();
    let rest = m.transpose().mul_vec(&a0);
    PureState::normalized(state.system().without(sites), rest)
}

/// Checks that `sites_a ∪ sites_b` factor from the rest and carry a uniform
/// Schmidt spectrum of length `2^pairs` between the two sides.
pub(crate) fn verify_maximally_entangled(state: &PureState, sites_a: &[usize], sites_b: &[usize], pairs: u32) -> Result<()> {
    let n = state.num_parties();
    let mut both: Vec<usize> = sites_a.to_vec();
    both.extend_from_slice(sites_b);
    let rest: Vec<usize> = state::complement(n, &both);
    let core_state = if rest.is_empty() { state.clone() } else { discard(state, &rest)? };
    // positions of the sides inside the reduced system
    let keep: Vec<usize> = state::complement(n, &rest);
    let side_a: Vec<usize> = sites_a.iter().map(|s| keep.iter().position(|k| k == s).expect("kept site")).collect();
    let dims = core_state.system().dims();
    let m = state::coefficient_matrix(dims, core_state.amplitudes(), &side_a);
    let (c, _, _) = state::schmidt_factor(&m);
    let levels = 1usize << pairs;
    let target = 1.0 / levels as f64;
    for (k, &ck) in c.iter().enumerate() {
        let expect = if k < levels { target } else { 0.0 };
        if math::abs(ck - expect) > 1e-9 {
            return Err(Error::VerificationFailed(format!(
                "banked state is not {pairs} ebits: Schmidt coefficient {k} is {ck}"
            )));
        }
    }
    if c.len() < levels {
        return Err(Error::VerificationFailed("banked sides are too small".to_string()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::Bipartition;
    use std::vec;

    fn ghz() -> PureState {
        PureState::from_real(PartySystem::qubits(3), &[1.0, 0., 0., 0., 0., 0., 0., 1.0]).unwrap()
    }

    fn bell() -> PureState {
        PureState::from_real(PartySystem::qubits(2), &[1., 0., 0., 1.]).unwrap()
    }

    fn measure_root(sys: PartySystem, step: MeasurementStep) -> LoccProtocol {
        let branches = vec![Node::Terminal; step.kraus.len()];
        LoccProtocol::new(sys, Node::Measure { step, branches })
    }

    #[test]
    fn validate_examples() {
        let sys = PartySystem::qubits(1);
        let p = measure_root(sys.clone(), MeasurementStep::computational(0, 2));
        assert!(p.validate(&sys).is_valid());
        let trivial = measure_root(sys.clone(), MeasurementStep::unitary(vec![0], Matrix::identity(2)));
        assert!(trivial.validate(&sys).is_valid());
        let partial = measure_root(sys.clone(), MeasurementStep::new(vec![0], vec![Matrix::diag_real(&[1.0, 0.0])]));
        let report = partial.validate(&sys);
        assert!(!report.is_valid());
        assert!(report.violations[0].message.contains("completeness"));
    }

    #[test]
    fn validate_flags_nonlocal_and_mismatched_steps() {
        let sys = PartySystem::qubits(2);
        let nonlocal = measure_root(sys.clone(), MeasurementStep::unitary(vec![0, 1], Matrix::identity(4)));
        assert!(nonlocal.validate(&sys).violations[0].message.contains("several parties"));
        let wrong_dim = measure_root(sys.clone(), MeasurementStep::unitary(vec![0], Matrix::identity(3)));
        assert!(!wrong_dim.validate(&sys).is_valid());
        let missing_branch = LoccProtocol::new(
            sys.clone(),
            Node::Measure { step: MeasurementStep::computational(0, 2), branches: vec![Node::Terminal] },
        );
        assert!(!missing_branch.validate(&sys).is_valid());
        assert!(!p_on(&sys).validate(&PartySystem::qubits(3)).is_valid());
    }

    fn p_on(sys: &PartySystem) -> LoccProtocol {
        LoccProtocol::identity(sys.clone())
    }

    #[test]
    fn depth_cap_reports_truncation() {
        let sys = PartySystem::qubits(1);
        let mut node = Node::Terminal;
        for _ in 0..5 {
            node = Node::Measure { step: MeasurementStep::unitary(vec![0], Matrix::identity(2)), branches: vec![node] };
        }
        let p = LoccProtocol::new(sys.clone(), node);
        assert_eq!(p.depth(), 5);
        let report = p.validate_with(&sys, 4);
        assert!(report.truncated && !report.is_valid());
        assert!(p.validate_with(&sys, 5).is_valid());
        let state = PureState::basis(sys, &[0]).unwrap();
        let opts = SimulationOptions { depth_cap: 4, ..SimulationOptions::enumerate() };
        assert!(matches!(simulate(&p, &state, opts), Err(Error::ProtocolInvalid(_))));
    }

    #[test]
    fn ghz_computational_measurement() {
        let g = ghz();
        let p = LoccProtocol::new(
            g.system().clone(),
            Node::Measure {
                step: MeasurementStep::computational(0, 2),
                branches: vec![
                    Node::Discard { sites: vec![0], next: Box::new(Node::Terminal) },
                    Node::Discard { sites: vec![0], next: Box::new(Node::Terminal) },
                ],
            },
        );
        let t = simulate(&p, &g, SimulationOptions::enumerate()).unwrap();
        assert_eq!(t.branches.len(), 2);
        for (k, b) in t.branches.iter().enumerate() {
            assert_eq!(b.path, vec![k]);
            assert!((b.probability - 0.5).abs() < 1e-15);
            let expect = PureState::basis(PartySystem::with_labels(vec![2, 2], vec!["P2".into(), "P3".into()]).unwrap(), &[k, k]).unwrap();
            assert_eq!(b.state.system(), expect.system());
            assert!((b.state.fidelity(&expect).unwrap() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn trivial_measurement_keeps_state() {
        let mut rng = <ChaCha8Rng as SeedableRng>::seed_from_u64(9);
        let psi = PureState::random(PartySystem::new(vec![2, 3]).unwrap(), &mut rng);
        let p = measure_root(psi.system().clone(), MeasurementStep::unitary(vec![1], Matrix::identity(3)));
        let t = simulate(&p, &psi, SimulationOptions::enumerate()).unwrap();
        assert_eq!(t.branches.len(), 1);
        assert!((t.branches[0].probability - 1.0).abs() < 1e-15);
        assert!((t.branches[0].state.fidelity(&psi).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn product_factor_carries_no_correlation() {
        let plus = PureState::from_real(PartySystem::qubits(1), &[1., 1.]).unwrap();
        let s = plus.tensor(&bell()).relabeled(vec!["P1".into(), "P2".into(), "P3".into()]).unwrap();
        let p = measure_root(s.system().clone(), MeasurementStep::computational(0, 2));
        let t = simulate(&p, &s, SimulationOptions::enumerate()).unwrap();
        assert_eq!(t.branches.len(), 2);
        let cut = Bipartition::new(&[1], 3).unwrap();
        for b in &t.branches {
            assert!((b.probability - 0.5).abs() < 1e-15);
            let sd = b.state.schmidt(&cut).unwrap();
            assert!((sd.coefficients[0] - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn chained_measurements_multiply_probabilities() {
        // measuring both halves of a Bell pair: chain-rule oracle gives
        // P(0,0) = 1/2 · 1, P(1,1) = 1/2 · 1, and the mixed outcomes vanish
        let b = bell();
        let first = measure_root(b.system().clone(), MeasurementStep::computational(0, 2));
        let second = measure_root(b.system().clone(), MeasurementStep::computational(1, 2));
        let composed = first.then(&second).unwrap();
        let t = simulate(&composed, &b, SimulationOptions::enumerate()).unwrap();
        let paths: Vec<_> = t.branches.iter().map(|x| x.path.clone()).collect();
        assert_eq!(paths, vec![vec![0, 0], vec![1, 1]]);
        assert!((t.total_probability() - 1.0).abs() < 1e-15);
        // in the Hadamard basis for the second step all four outcomes appear
        let s = core::f64::consts::FRAC_1_SQRT_2;
        let had = MeasurementStep::projective(
            vec![1],
            &[vec![C64::new(s, 0.0), C64::new(s, 0.0)], vec![C64::new(s, 0.0), C64::new(-s, 0.0)]],
        );
        let t = simulate(&first.then(&measure_root(b.system().clone(), had)).unwrap(), &b, SimulationOptions::enumerate()).unwrap();
        assert_eq!(t.branches.len(), 4);
        for br in &t.branches {
            assert!((br.probability - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn compose_with_trivial_continuations_is_identity() {
        let g = ghz();
        let p = measure_root(g.system().clone(), MeasurementStep::computational(1, 2));
        let mut conts = BTreeMap::new();
        for (path, sys) in p.leaves().unwrap() {
            conts.insert(path, LoccProtocol::identity(sys));
        }
        let c = p.compose(&conts).unwrap();
        assert_eq!(c, p);
        let bad: BTreeMap<_, _> = [(vec![0], LoccProtocol::identity(PartySystem::qubits(2)))].into_iter().collect();
        assert!(matches!(p.compose(&bad), Err(Error::SystemMismatch)));
        let stray: BTreeMap<_, _> = [(vec![7], LoccProtocol::identity(g.system().clone()))].into_iter().collect();
        assert!(p.compose(&stray).is_err());
    }

    #[test]
    fn sample_mode_is_seed_deterministic() {
        let g = ghz();
        let step = |s| MeasurementStep::computational(s, 2);
        let p = measure_root(g.system().clone(), step(0)).then(&measure_root(g.system().clone(), step(2))).unwrap();
        let a = simulate(&p, &g, SimulationOptions::sample(42)).unwrap();
        let b = simulate(&p, &g, SimulationOptions::sample(42)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.branches.len(), 1);
        let mut seen = [false; 2];
        for seed in 0..32 {
            let t = simulate(&p, &g, SimulationOptions::sample(seed)).unwrap();
            seen[t.branches[0].path[0]] = true;
        }
        assert!(seen[0] && seen[1]);
    }

    #[test]
    fn discard_refuses_entangled_sites() {
        let g = ghz();
        let p = LoccProtocol::new(g.system().clone(), Node::Discard { sites: vec![0], next: Box::new(Node::Terminal) });
        assert!(matches!(simulate(&p, &g, SimulationOptions::enumerate()), Err(Error::VerificationFailed(_))));
    }

    #[test]
    fn attach_and_bank_account_resources() {
        let sys = PartySystem::with_labels(vec![1], vec!["A".into()]).unwrap();
        let start = PureState::basis(sys.clone(), &[0]).unwrap();
        let root = Node::Attach {
            resource: Resource::BellPairs { holder: "A".into(), receiver: "B".into(), pairs: 2 },
            next: Box::new(Node::Bank { sites_a: vec![1], sites_b: vec![2], pairs: 2, next: Box::new(Node::Terminal) }),
        };
        let t = simulate(&LoccProtocol::new(sys, root), &start, SimulationOptions::enumerate()).unwrap();
        let r = t.resources().unwrap();
        assert_eq!(r.consumed.get(&PartyPair::new("A", "B")), Some(&2));
        assert_eq!(r.produced.get(&PartyPair::new("A", "B")), Some(&2));
    }

    #[test]
    fn embed_then_restrict_round_trips() {
        let mut rng = <ChaCha8Rng as SeedableRng>::seed_from_u64(1);
        let psi = PureState::random(PartySystem::new(vec![3, 2]).unwrap(), &mut rng);
        let root = Node::Embed { site: 0, dim: 4, next: Box::new(Node::Restrict { site: 0, dim: 3, next: Box::new(Node::Terminal) }) };
        let t = simulate(&LoccProtocol::new(psi.system().clone(), root), &psi, SimulationOptions::enumerate()).unwrap();
        assert!((t.branches[0].state.fidelity(&psi).unwrap() - 1.0).abs() < 1e-14);
    }
}
