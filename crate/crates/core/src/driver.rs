//! End-to-end conversion `ψ^⊗n → φ` for genuinely entangled `ψ`.
//!
//! The driver runs as a sequence of stages, each an LOCC protocol simulated
//! and verified on its own:
//!
//! 1. per copy of `ψ`, extract a bipartite pair (one sampled branch);
//! 2. pool the pairs per party pair and concentrate pools into Bell pairs,
//!    crediting the ledger;
//! 3. once the ledger supports a [`MergePlan`], run its swaps, then move
//!    fresh registers of every party into the root party, prepare `φ` there
//!    with one unitary, and teleport each share back out.
//!
//! Banked pairs are handed between stages through the [`BellLedger`]: a
//! verified maximally entangled register is equivalent, by local unitaries,
//! to the standard pairs that later stages attach.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bipartite::{self, SchmidtVector};
use crate::error::{Error, Result};
use crate::extract;
use crate::ledger::{BellLedger, PartyPair};
use crate::linalg::{self, Matrix};
use crate::math;
use crate::EPS_RANK;
use crate::protocol::{self, BranchStyle, LoccProtocol, MeasurementStep, Node, ProtocolTrace, SimulationMode, SimulationOptions};
use crate::state::{Bipartition, PureState};
use crate::teleport::{self, MergePlan, SwapStep};

/// Fidelity every final branch must reach.
pub const FINAL_FIDELITY: f64 = 1.0 - 1e-8;
/// Largest joint dimension per side of a concentration batch.
pub const BATCH_DIM_CAP: usize = 64;
/// Above this many final-stage leaves, teleports forget their outcomes.
const BRANCHING_LEAF_CAP: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DriverOptions {
    pub max_copies: usize,
    pub seed: u64,
    /// Simulation mode of the swap and distribution stages; extraction always
    /// samples one branch per copy.
    pub mode: SimulationMode,
}

impl DriverOptions {
    pub fn new(max_copies: usize, seed: u64) -> Self {
        Self { max_copies, seed, mode: SimulationMode::Sample }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum StageKind {
    Extract { copy: usize, cut: Bipartition, pair: PartyPair },
    /// Local rotation of an extracted pair onto its Schmidt support.
    Compress { pair: PartyPair, rank: usize },
    Concentrate { pair: PartyPair, batch: usize, pairs: u32 },
    Swap(SwapStep),
    /// Single-copy bipartite conversion followed by basis alignment.
    Direct,
    Distribute,
}

impl fmt::Display for StageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StageKind::Extract { copy, cut, pair } => {
                write!(f, "extract copy {copy} across {:?}|{:?} -> {pair}", cut.side_a(), cut.side_b())
            }
            StageKind::Compress { pair, rank } => write!(f, "compress {pair} to Schmidt rank {rank}"),
            StageKind::Concentrate { pair, batch, pairs } => write!(f, "concentrate {batch} states on {pair} -> {pairs} Bell pairs"),
            StageKind::Swap(s) => write!(f, "swap ({}, {}) + ({}, {}) -> ({}, {})", s.hub, s.via, s.via, s.to, s.hub, s.to),
            StageKind::Direct => f.write_str("direct bipartite conversion"),
            StageKind::Distribute => f.write_str("merge, prepare and distribute"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Stage {
    pub kind: StageKind,
    pub protocol: LoccProtocol,
    pub trace: ProtocolTrace,
}

/// The staged protocol, in execution order.
#[derive(Clone, Debug, Default)]
pub struct ProtocolSchedule {
    pub stages: Vec<Stage>,
}

impl ProtocolSchedule {
    pub fn total_depth(&self) -> usize {
        self.stages.iter().map(|s| s.protocol.depth()).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrialOutcome {
    pub seed: u64,
    pub n_used: Option<usize>,
    pub error: Option<String>,
}

/// Exact-conversion lower bound `m_produced / n_used` on the exchange rate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RateReport {
    pub n_used: usize,
    pub m_produced: usize,
    pub trials: Vec<TrialOutcome>,
}

impl RateReport {
    pub fn bound(&self) -> f64 {
        self.m_produced as f64 / self.n_used as f64
    }
}

impl fmt::Display for RateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n_used = {}, m_produced = {}, bound = {}/{}", self.n_used, self.m_produced, self.m_produced, self.n_used)
    }
}

#[derive(Clone, Debug)]
pub struct Harvest {
    pub schedule: ProtocolSchedule,
    pub ledger: BellLedger,
    pub copies: usize,
}

#[derive(Clone, Debug)]
pub struct Transformation {
    pub schedule: ProtocolSchedule,
    /// Trace of the final stage, whose branches end in `φ`.
    pub trace: ProtocolTrace,
    pub report: RateReport,
    pub plan: Option<MergePlan>,
    /// Ledger left over after distribution.
    pub ledger: BellLedger,
}

fn check_source(psi: &PureState) -> Result<()> {
    if psi.num_parties() < 2 {
        return Err(Error::PreconditionViolated("at least two parties are needed".into()));
    }
    if !psi.system().labels_unique() {
        return Err(Error::PreconditionViolated("party labels must be distinct".into()));
    }
    if !psi.is_genuinely_entangled() {
        return Err(Error::PreconditionViolated("source is not genuinely multipartite entangled".into()));
    }
    Ok(())
}

/// One way of extracting a pair: a cut taken with the non-root parties in a
/// rotated order, so that a different party is measured first.
struct Variant {
    source: PureState,
    /// The cut in original party indices.
    cut: Bipartition,
    protocol: LoccProtocol,
    /// Pair, probability and usable ebits per extraction branch.
    branches: Vec<(PartyPair, f64, f64)>,
}

impl Variant {
    fn new(psi: &PureState, order: &[usize], cut: &Bipartition, seed: u64) -> Result<Self> {
        let source = psi.permute_parties(order)?;
        let e = extract::extract_pair(&source, cut, seed)?;
        let labels = source.system().labels();
        let pair_cut = Bipartition::new(&[0], 2)?;
        let mut branches = Vec::with_capacity(e.branches.len());
        for b in &e.branches {
            let x = SchmidtVector::from_state(&b.state, &pair_cut)?;
            branches.push((PartyPair::new(&labels[b.pair.0], &labels[b.pair.1]), b.probability, usable_ebits(&x)));
        }
        let side: Vec<usize> = cut.side_a().iter().map(|&i| order[i]).collect();
        Ok(Self { source, cut: Bipartition::new(&side, psi.num_parties())?, protocol: e.protocol, branches })
    }
}

/// `−log2 x_max` if enough copies of the pair fit under the batch cap to
/// reach a Bell pair, else zero.
fn usable_ebits(x: &SchmidtVector) -> f64 {
    let rank = x.rank(EPS_RANK).max(2);
    let fit = math::floor(math::log2(BATCH_DIM_CAP as f64) / math::log2(rank as f64));
    let per_copy = -math::log2(x.max());
    if per_copy * fit >= 1.0 - 1e-12 {
        per_copy
    } else {
        0.0
    }
}

/// Every cut under each rotation of the parties after the first.
fn variants(psi: &PureState, seed: u64) -> Result<Vec<Variant>> {
    let m = psi.num_parties();
    let cuts = Bipartition::all(m);
    let mut out = Vec::new();
    for r in 0..(m - 1).max(1) {
        let order: Vec<usize> = core::iter::once(0).chain((0..m - 1).map(|k| 1 + (k + r) % (m - 1))).collect();
        for cut in &cuts {
            out.push(Variant::new(psi, &order, cut, seed)?);
        }
    }
    Ok(out)
}

struct Harvester {
    rng: ChaCha8Rng,
    variants: Vec<Variant>,
    /// Pending pairs with their largest Schmidt coefficient.
    pools: BTreeMap<PartyPair, Vec<(PureState, f64)>>,
    ledger: BellLedger,
    stages: Vec<Stage>,
    copies: usize,
}

impl Harvester {
    fn new(variants: Vec<Variant>, seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            variants,
            pools: BTreeMap::new(),
            ledger: BellLedger::new(),
            stages: Vec::new(),
            copies: 0,
        }
    }

    /// Banked plus pending Bell pairs on `pair`.
    fn supply(&self, pair: &PartyPair) -> f64 {
        let pending: f64 = self.pools.get(pair).map_or(0.0, |p| p.iter().map(|(_, x)| -math::log2(*x)).sum());
        self.ledger.count(pair) as f64 + pending
    }

    /// Expected usable ebits per copy, each pair type discounted by what is
    /// already supplied.
    fn value(&self, v: &Variant) -> f64 {
        v.branches.iter().map(|(pair, p, e)| p * e / (1.0 + self.supply(pair))).sum()
    }

    /// The most valuable variant; ties go to the first after `last` in
    /// round-robin order.
    fn next_variant(&self, last: usize) -> usize {
        let n = self.variants.len();
        let mut best = ((last + 1) % n, f64::NEG_INFINITY);
        for step in 1..=n {
            let i = (last + step) % n;
            let value = self.value(&self.variants[i]);
            if value > best.1 + 1e-12 {
                best = (i, value);
            }
        }
        best.0
    }

    fn harvest_copy(&mut self, v: usize) -> Result<()> {
        let variant = &self.variants[v];
        let copy_seed = self.rng.next_u64();
        let trace = protocol::simulate(&variant.protocol, &variant.source, SimulationOptions::sample(copy_seed))?;
        let branch = &trace.branches[0];
        let sys = branch.state.system();
        let pair = PartyPair::new(sys.label(0), sys.label(1));
        let state = if sys.label(0) == pair.first() { branch.state.clone() } else { branch.state.permute_parties(&[1, 0])? };
        self.stages.push(Stage {
            kind: StageKind::Extract { copy: self.copies, cut: variant.cut.clone(), pair: pair.clone() },
            protocol: variant.protocol.clone(),
            trace,
        });
        self.copies += 1;
        self.bank(pair, state)
    }

    /// Shrinks both sites of a pair to its Schmidt rank so that more copies
    /// fit under the batch cap.
    fn compress(&mut self, pair: &PartyPair, state: PureState) -> Result<PureState> {
        let s = state.schmidt(&Bipartition::new(&[0], 2)?)?;
        let rank = s.rank_with(EPS_RANK).max(1);
        let dims = state.system().dims();
        if dims[0] <= rank && dims[1] <= rank {
            return Ok(state);
        }
        let mut node = Node::Terminal;
        for (site, basis) in [(1, &s.basis_b), (0, &s.basis_a)] {
            if dims[site] > rank {
                node = Node::Restrict { site, dim: rank, next: Box::new(node) };
            }
            node = Node::Measure { step: MeasurementStep::unitary(vec![site], basis.adjoint()), branches: vec![node] };
        }
        let protocol = LoccProtocol::new(state.system().clone(), node);
        let trace = protocol::simulate(&protocol, &state, SimulationOptions::enumerate())?;
        let out = trace.branches[0].state.clone();
        self.stages.push(Stage { kind: StageKind::Compress { pair: pair.clone(), rank }, protocol, trace });
        Ok(out)
    }

    fn bank(&mut self, pair: PartyPair, state: PureState) -> Result<()> {
        let state = self.compress(&pair, state)?;
        let x_max = SchmidtVector::from_state(&state, &Bipartition::new(&[0], 2)?)?.max();
        let side = |s: &PureState| s.system().dims()[0].max(s.system().dims()[1]);
        let pool = self.pools.entry(pair.clone()).or_default();
        // keep the joint register within the cap by dropping the weakest member
        while !pool.is_empty() && pool.iter().map(|(s, _)| side(s)).product::<usize>() * side(&state) > BATCH_DIM_CAP {
            let weakest = (0..pool.len()).max_by(|&a, &b| pool[a].1.total_cmp(&pool[b].1)).expect("nonempty pool");
            pool.remove(weakest);
        }
        pool.push((state, x_max));
        let product: f64 = pool.iter().map(|(_, x)| x).product();
        if product > 0.5 + 1e-12 {
            return Ok(());
        }
        let batch = core::mem::take(pool);
        let mut joint = batch[0].0.clone();
        for (s, _) in &batch[1..] {
            joint = joint.tensor(s);
        }
        let side_a: Vec<usize> = (0..batch.len()).map(|i| 2 * i).collect();
        let cut = Bipartition::new(&side_a, joint.num_parties())?;
        let (protocol, k) = bipartite::concentrate_joint(&joint, &cut)?;
        let trace = protocol::simulate(&protocol, &joint, SimulationOptions::enumerate())?;
        let produced = trace.resources().and_then(|r| r.produced.get(&pair).copied()).unwrap_or(0);
        if produced != u64::from(k) {
            return Err(Error::VerificationFailed(format!("concentration banked {produced} pairs, expected {k}")));
        }
        self.ledger.credit(pair.clone(), u64::from(k));
        self.stages.push(Stage { kind: StageKind::Concentrate { pair, batch: batch.len(), pairs: k }, protocol, trace });
        Ok(())
    }
}

/// Harvests `copies` copies of `psi` across `{P1} | rest` into Bell pairs.
pub fn harvest(psi: &PureState, copies: usize, seed: u64) -> Result<Harvest> {
    check_source(psi)?;
    let cut = Bipartition::new(&[0], psi.num_parties())?;
    let order: Vec<usize> = (0..psi.num_parties()).collect();
    let mut h = Harvester::new(vec![Variant::new(psi, &order, &cut, seed)?], seed);
    for _ in 0..copies {
        h.harvest_copy(0)?;
    }
    Ok(Harvest { schedule: ProtocolSchedule { stages: h.stages }, ledger: h.ledger, copies })
}

/// Builds, simulates and verifies a protocol turning copies of `psi` into
/// `phi`.
pub fn transform(psi: &PureState, phi: &PureState, options: DriverOptions) -> Result<Transformation> {
    check_source(psi)?;
    if phi.system() != psi.system() {
        return Err(Error::SystemMismatch);
    }
    if options.max_copies == 0 {
        return Err(Error::InvalidArgument("max_copies must be at least 1".into()));
    }
    if psi.num_parties() == 2 {
        if let Some(t) = direct_conversion(psi, phi, options)? {
            return Ok(t);
        }
    }
    let root = psi.system().label(0).to_string();
    let mut h = Harvester::new(variants(psi, options.seed)?, options.seed);
    let mut last = h.variants.len() - 1;
    let plan = loop {
        if h.copies >= options.max_copies {
            return Err(Error::BudgetExhausted { copies: h.copies, ledger: h.ledger });
        }
        last = h.next_variant(last);
        h.harvest_copy(last)?;
        if let Some(plan) = MergePlan::plan(phi.system(), &root, &h.ledger) {
            break plan;
        }
    };
    let copies = h.copies;
    let mut ledger = h.ledger;
    let mut stages = h.stages;
    let mut sim_rng = ChaCha8Rng::seed_from_u64(options.seed ^ 0x005e_ed0f_d157);

    for swap in &plan.swaps {
        let protocol = teleport::swap_entanglement(&swap.hub, &swap.via, &swap.to, &mut ledger)?;
        let start = PureState::basis(protocol.system().clone(), &[0])?;
        let trace = protocol::simulate(&protocol, &start, SimulationOptions::with_mode(options.mode, sim_rng.next_u64()))?;
        stages.push(Stage { kind: StageKind::Swap(swap.clone()), protocol, trace });
    }

    let protocol = distribution_protocol(phi, &root, &mut ledger)?;
    let start = PureState::basis(phi.system().clone(), &vec![0; phi.num_parties()])?;
    let trace = protocol::simulate(&protocol, &start, SimulationOptions::with_mode(options.mode, sim_rng.next_u64()))?;
    verify_final(&trace, phi)?;
    stages.push(Stage { kind: StageKind::Distribute, protocol, trace: trace.clone() });

    let seed = options.seed;
    Ok(Transformation {
        schedule: ProtocolSchedule { stages },
        trace,
        report: RateReport { n_used: copies, m_produced: 1, trials: vec![TrialOutcome { seed, n_used: Some(copies), error: None }] },
        plan: Some(plan),
        ledger,
    })
}

fn verify_final(trace: &ProtocolTrace, phi: &PureState) -> Result<()> {
    for b in &trace.branches {
        if b.state.system() != phi.system() {
            return Err(Error::VerificationFailed(format!("branch {:?} ends on the wrong system", b.path)));
        }
        let f = b.state.fidelity(phi)?;
        if f < FINAL_FIDELITY {
            return Err(Error::VerificationFailed(format!("branch {:?} reaches fidelity {f}", b.path)));
        }
    }
    Ok(())
}

/// Fresh registers go to `root`, `φ` is prepared there, shares come back.
fn distribution_protocol(phi: &PureState, root: &str, ledger: &mut BellLedger) -> Result<LoccProtocol> {
    let sys = phi.system();
    let m = sys.num_parties();
    let remote: Vec<usize> = (0..m).filter(|&s| sys.label(s) != root).collect();
    let mut order: Vec<usize> = (0..m).collect();
    let mut moves_in = Vec::new();
    for &r in &remote {
        let pos = order.iter().position(|&o| o == r).expect("site present");
        moves_in.push((pos, root.to_string()));
        order.remove(pos);
        order.push(r);
    }
    let merged_order = order.clone();
    let mut moves_out = Vec::new();
    for &r in &remote {
        let pos = order.iter().position(|&o| o == r).expect("site present");
        moves_out.push((pos, sys.label(r).to_string()));
        order.remove(pos);
        order.push(r);
    }
    let leaves: usize = remote
        .iter()
        .map(|&r| {
            let d = 1usize << teleport::pairs_for_dim(sys.dims()[r]);
            (d * d).saturating_mul(d * d)
        })
        .fold(1usize, |acc, x| acc.saturating_mul(x));
    let style = if leaves <= BRANCHING_LEAF_CAP { BranchStyle::Branching } else { BranchStyle::Converging };

    let (inbound, merged) = teleport::teleport_sequence(sys, &moves_in, ledger, style)?;
    let target = phi.permute_parties(&merged_order)?;
    let all: Vec<usize> = (0..m).collect();
    let prepare = LoccProtocol::new(
        merged.clone(),
        Node::Measure {
            step: MeasurementStep::unitary(all, linalg::unitary_with_first_column(target.amplitudes())),
            branches: vec![Node::Terminal],
        },
    );
    let (outbound, spread) = teleport::teleport_sequence(&merged, &moves_out, ledger, style)?;
    let restore: Vec<usize> = (0..m).map(|k| order.iter().position(|&o| o == k).expect("site present")).collect();
    let reorder = LoccProtocol::new(spread, Node::Reorder { order: restore, next: Box::new(Node::Terminal) });
    inbound.then(&prepare)?.then(&outbound)?.then(&reorder)
}

/// Two parties whose single copy already majorizes the target: convert in
/// the Schmidt basis, then align bases with local unitaries.
fn direct_conversion(psi: &PureState, phi: &PureState, options: DriverOptions) -> Result<Option<Transformation>> {
    let cut = Bipartition::new(&[0], 2)?;
    let x = SchmidtVector::from_state(psi, &cut)?;
    let y = SchmidtVector::from_state(phi, &cut)?;
    if !bipartite::majorizes(&x, &y) {
        return Ok(None);
    }
    let conversion = bipartite::synthesize_conversion(psi, &y, &cut)?;
    let src = psi.schmidt(&cut)?;
    let dst = phi.schmidt(&cut)?;
    let ua: Matrix = dst.basis_a.matmul(&src.basis_a.adjoint());
    let ub: Matrix = dst.basis_b.matmul(&src.basis_b.adjoint());
    let align = LoccProtocol::new(
        psi.system().clone(),
        Node::Measure {
            step: MeasurementStep::unitary(vec![0], ua),
            branches: vec![Node::Measure { step: MeasurementStep::unitary(vec![1], ub), branches: vec![Node::Terminal] }],
        },
    );
    let protocol = conversion.then(&align)?;
    let trace = protocol::simulate(&protocol, psi, SimulationOptions::with_mode(options.mode, options.seed))?;
    verify_final(&trace, phi)?;
    Ok(Some(Transformation {
        schedule: ProtocolSchedule { stages: vec![Stage { kind: StageKind::Direct, protocol, trace: trace.clone() }] },
        trace,
        report: RateReport {
            n_used: 1,
            m_produced: 1,
            trials: vec![TrialOutcome { seed: options.seed, n_used: Some(1), error: None }],
        },
        plan: None,
        ledger: BellLedger::new(),
    }))
}

/// Seed of trial `index` in a rate estimate.
pub fn trial_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add(index as u64)
}

pub fn run_trial(psi: &PureState, phi: &PureState, options: DriverOptions, index: usize) -> Result<TrialOutcome> {
    let seed = trial_seed(options.seed, index);
    match transform(psi, phi, DriverOptions { seed, ..options }) {
        Ok(t) => Ok(TrialOutcome { seed, n_used: Some(t.report.n_used), error: None }),
        Err(e @ Error::BudgetExhausted { .. }) => Ok(TrialOutcome { seed, n_used: None, error: Some(e.to_string()) }),
        Err(e) => Err(e),
    }
}

/// Best bound over finished trials; errors if every trial ran out of copies.
pub fn summarize(trials: Vec<TrialOutcome>, max_copies: usize) -> Result<RateReport> {
    let best = trials.iter().filter_map(|t| t.n_used).min();
    match best {
        Some(n_used) => Ok(RateReport { n_used, m_produced: 1, trials }),
        None => Err(Error::BudgetExhausted { copies: max_copies, ledger: BellLedger::new() }),
    }
}

/// Best (largest) `1/n_used` over `trials` independently seeded runs.
pub fn rate_bound(psi: &PureState, phi: &PureState, trials: usize, options: DriverOptions) -> Result<RateReport> {
    check_source(psi)?;
    if phi.system() != psi.system() {
        return Err(Error::SystemMismatch);
    }
    let outcomes = (0..trials.max(1)).map(|i| run_trial(psi, phi, options, i)).collect::<Result<Vec<_>>>()?;
    summarize(outcomes, options.max_copies)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::PartySystem;

    fn ghz() -> PureState {
        PureState::from_real(PartySystem::qubits(3), &[1., 0., 0., 0., 0., 0., 0., 1.]).unwrap()
    }

    fn w() -> PureState {
        PureState::from_real(PartySystem::qubits(3), &[0., 1., 1., 0., 1., 0., 0., 0.]).unwrap()
    }

    #[test]
    fn harvest_ghz() {
        let h = harvest(&ghz(), 4, 1).unwrap();
        assert!(h.ledger.total() >= 4);
        assert!(h.ledger.iter().all(|(p, _)| p.contains("P1")));
    }

    #[test]
    fn harvest_w() {
        let h = harvest(&w(), 8, 3).unwrap();
        let n = h.ledger.count(&PartyPair::new("P1", "P2")) + h.ledger.count(&PartyPair::new("P1", "P3"));
        assert!(n > 0);
    }

    #[test]
    fn harvest_rejects_product() {
        let p = PureState::basis(PartySystem::qubits(3), &[0, 0, 0]).unwrap();
        assert!(matches!(harvest(&p, 2, 0), Err(Error::PreconditionViolated(_))));
    }

    #[test]
    fn ghz_to_ghz_generic_path() {
        let t = transform(&ghz(), &ghz(), DriverOptions::new(64, 5)).unwrap();
        assert!(t.report.n_used >= 1);
        assert!(t.trace.branches.iter().all(|b| b.state.fidelity(&ghz()).unwrap() > FINAL_FIDELITY));
    }

    #[test]
    fn ghz_to_w_enumerated() {
        let opts = DriverOptions { mode: SimulationMode::Enumerate, ..DriverOptions::new(64, 9) };
        let t = transform(&ghz(), &w(), opts).unwrap();
        assert!(t.trace.branches.len() > 1);
        assert!((t.trace.total_probability() - 1.0).abs() < 1e-9);
        for b in &t.trace.branches {
            assert!(b.state.fidelity(&w()).unwrap() >= FINAL_FIDELITY);
        }
    }

    #[test]
    fn bipartite_identity_has_unit_rate() {
        let s = PureState::from_real(PartySystem::qubits(2), &[0.8, 0., 0., 0.6]).unwrap();
        let r = rate_bound(&s, &s, 2, DriverOptions::new(8, 0)).unwrap();
        assert!(r.bound() >= 1.0);
    }

    #[test]
    fn not_genuinely_entangled_source_is_rejected() {
        let s = PureState::from_real(PartySystem::qubits(3), &[0., 1., 0., 0., 0., 0., 0., 1.]).unwrap();
        assert!(matches!(transform(&s, &w(), DriverOptions::new(8, 0)), Err(Error::PreconditionViolated(_))));
    }

    #[test]
    fn budget_exhaustion_reports_ledger() {
        match transform(&w(), &ghz(), DriverOptions::new(1, 0)) {
            Err(Error::BudgetExhausted { copies, .. }) => assert_eq!(copies, 1),
            other => panic!("expected budget exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn qutrit_party_is_teleported_over_two_pairs() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let sys = PartySystem::new(vec![3, 2, 2]).unwrap();
        let psi = PureState::random(sys.clone(), &mut rng);
        let phi = PureState::random(sys, &mut rng);
        let t = transform(&psi, &phi, DriverOptions::new(200, 2)).unwrap();
        assert!(t.trace.branches.iter().all(|b| b.state.fidelity(&phi).unwrap() >= FINAL_FIDELITY));
    }

    #[test]
    fn four_party_ghz_to_w() {
        let mut g = vec![0.0; 16];
        g[0] = 1.0;
        g[15] = 1.0;
        let mut w4 = vec![0.0; 16];
        for k in [1, 2, 4, 8] {
            w4[k] = 1.0;
        }
        let ghz4 = PureState::from_real(PartySystem::qubits(4), &g).unwrap();
        let w4 = PureState::from_real(PartySystem::qubits(4), &w4).unwrap();
        let t = transform(&ghz4, &w4, DriverOptions::new(64, 4)).unwrap();
        assert!(t.trace.branches.iter().all(|b| b.state.fidelity(&w4).unwrap() >= FINAL_FIDELITY));
    }
}
