use std::fmt::Write;
use std::path::Path;

use locc_core::bipartite::{self, SchmidtVector};
use locc_core::driver::{self, DriverOptions, StageKind};
use locc_core::linalg::Matrix;
use locc_core::product::{self, ProductQuery};
use locc_core::protocol::{simulate, ProtocolTrace, SimulationMode, SimulationOptions};
use locc_core::{extract, Bipartition, PartySystem, PureState, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cut::{format_cut, parse_cut};
use crate::error::{CliError, EXIT_FAILURE};
use crate::format::{read_state, LoadOptions};
use crate::trace::{export_trace, format_path, sig15};

#[derive(Clone, Copy, Debug)]
pub struct Settings {
    pub seed: u64,
    pub mode: Option<SimulationMode>,
    pub load: LoadOptions,
    pub tol_rank: f64,
    /// Worker threads for trial loops; 0 picks the default.
    pub threads: usize,
}

#[derive(Debug)]
pub struct Output {
    pub text: String,
    pub code: u8,
}

impl Output {
    fn ok(text: String) -> Self {
        Self { text, code: 0 }
    }
}

fn coefficients(c: &[f64], n: usize) -> String {
    let shown: Vec<String> = c.iter().take(n).map(|&x| sig15(x)).collect();
    let more = if c.len() > n { ", ..." } else { "" };
    format!("[{}{more}]", shown.join(", "))
}

fn mode_name(mode: SimulationMode) -> &'static str {
    match mode {
        SimulationMode::Enumerate => "enumerate",
        SimulationMode::Sample => "sample",
    }
}

fn pool(threads: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| CliError::Input(e.to_string()))
}

pub fn analyze_state(state: &PureState, tol_rank: f64) -> Result<String, CliError> {
    let sys = state.system();
    let m = sys.num_parties();
    if m < 2 {
        return Err(CliError::Input("no bipartitions exist for a single party".into()));
    }
    let mut out = String::new();
    writeln!(out, "parties {m}, dims {:?}, labels {}", sys.dims(), sys.labels().join(" ")).unwrap();
    let mut genuine = true;
    for cut in Bipartition::all(m) {
        let s = state.schmidt(&cut)?;
        let entangled = s.is_entangled_with(tol_rank);
        genuine &= entangled;
        writeln!(
            out,
            "cut {}: rank {}, coefficients {}, entangled {}",
            format_cut(&cut, sys),
            s.rank_with(tol_rank),
            coefficients(&s.coefficients, 4),
            if entangled { "yes" } else { "no (product)" }
        )
        .unwrap();
    }
    writeln!(out, "genuinely {m}-partite entangled: {}", if genuine { "yes" } else { "no" }).unwrap();
    Ok(out)
}

pub fn analyze(path: &Path, s: &Settings) -> Result<Output, CliError> {
    let state = read_state(path, s.load)?;
    Ok(Output::ok(analyze_state(&state, s.tol_rank)?))
}

fn random_qudit(rng: &mut ChaCha8Rng, d: usize, real: bool) -> PureState {
    let v: Vec<C64> = (0..d).map(|_| C64::new(rng.gen_range(-1.0..1.0), if real { 0.0 } else { rng.gen_range(-1.0..1.0) })).collect();
    PureState::normalized(PartySystem::new(vec![d]).unwrap(), v).expect("nonzero vector")
}

/// `(passed, found a product direction)`.
fn claim2_trial(seed: u64, index: usize) -> Result<(bool, bool), CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(driver::trial_seed(seed, index));
    let cut = Bipartition::new(&[0], 2)?;
    loop {
        let real = index % 3 == 1;
        let u = random_qudit(&mut rng, 2, real);
        let v = random_qudit(&mut rng, 2, real);
        let raw: Vec<C64> = if index % 3 == 2 {
            let x = random_qudit(&mut rng, 2, false).tensor(&random_qudit(&mut rng, 2, false));
            let c = rng.gen_range(-3.0..3.0);
            x.amplitudes().iter().zip(u.tensor(&v).amplitudes()).map(|(a, b)| a + b * c).collect()
        } else {
            (0..4).map(|_| C64::new(rng.gen_range(-1.0..1.0), if real { 0.0 } else { rng.gen_range(-1.0..1.0) })).collect()
        };
        let phi = PureState::normalized(PartySystem::qubits(2), raw)?;
        if !phi.is_entangled(&cut)? {
            continue;
        }
        let found = product::find_product_lambdas(&ProductQuery { phi: phi.clone(), cut, psi0: u.clone(), psi1: v.clone() })?;
        let all_product = found.iter().all(|&l| {
            let m = Matrix::from_row_major(2, 2, phi.amplitudes().to_vec()).add(&Matrix::outer_t(u.amplitudes(), v.amplitudes()).scale(C64::new(l, 0.0)));
            product::relative_tail(&m) <= 1e-9
        });
        return Ok((found.len() <= 1 && all_product, !found.is_empty()));
    }
}

/// `(passed, antecedent held)`.
fn claim1_trial(seed: u64, index: usize) -> Result<(bool, bool), CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(driver::trial_seed(seed, index) ^ 0x1);
    let (d0, d1) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
    let phi0 = random_qudit(&mut rng, d0, false);
    let phi1 = random_qudit(&mut rng, d1, false);
    let lambda = C64::from_polar(rng.gen_range(0.1..3.0), rng.gen_range(0.0..std::f64::consts::TAU));
    let (psi0, psi1) = match index % 3 {
        0 => (random_qudit(&mut rng, d0, false), random_qudit(&mut rng, d1, false)),
        1 => (phi0.clone(), random_qudit(&mut rng, d1, false)),
        _ => (random_qudit(&mut rng, d0, false), phi1.clone()),
    };
    let sum = Matrix::outer_t(phi0.amplitudes(), phi1.amplitudes()).add(&Matrix::outer_t(psi0.amplitudes(), psi1.amplitudes()).scale(lambda));
    let antecedent = product::relative_tail(&sum) <= locc_core::EPS_RANK;
    Ok((product::claim1_witness(&phi0, &phi1, &psi0, &psi1, lambda)?, antecedent))
}

pub fn claims(trials: usize, s: &Settings) -> Result<Output, CliError> {
    let run = |f: fn(u64, usize) -> Result<(bool, bool), CliError>| -> Result<Vec<(bool, bool)>, CliError> {
        pool(s.threads)?.install(|| (0..trials).into_par_iter().map(|i| f(s.seed, i)).collect())
    };
    let c1 = run(claim1_trial)?;
    let c2 = run(claim2_trial)?;
    let count = |v: &[(bool, bool)], pick: fn(&(bool, bool)) -> bool| v.iter().filter(|x| pick(x)).count();
    let mut out = String::new();
    writeln!(out, "seed {}, trials {trials}", s.seed).unwrap();
    let (p1, p2) = (count(&c1, |x| x.0), count(&c2, |x| x.0));
    writeln!(out, "claim 1: {p1}/{trials} passed, {} failed (antecedent held in {})", trials - p1, count(&c1, |x| x.1)).unwrap();
    writeln!(out, "claim 2: {p2}/{trials} passed, {} failed ({} with a product direction)", trials - p2, count(&c2, |x| x.1)).unwrap();
    let code = if p1 == trials && p2 == trials { 0 } else { EXIT_FAILURE };
    Ok(Output { text: out, code })
}

fn branch_report(out: &mut String, trace: &ProtocolTrace) -> Result<(), CliError> {
    for (i, b) in trace.branches.iter().enumerate() {
        let sys = b.state.system();
        let schmidt = if sys.num_parties() == 2 { coefficients(&b.state.schmidt(&Bipartition::new(&[0], 2)?)?.coefficients, 4) } else { "-".into() };
        writeln!(
            out,
            "branch {i}: path {}, probability {}, parties {}, coefficients {schmidt}",
            format_path(&b.path),
            sig15(b.probability),
            sys.labels().join(" ")
        )
        .unwrap();
    }
    Ok(())
}

pub fn extract(path: &Path, cut: &str, s: &Settings) -> Result<Output, CliError> {
    let state = read_state(path, s.load)?;
    let cut = parse_cut(cut, state.system())?;
    let mode = s.mode.unwrap_or(SimulationMode::Enumerate);
    let result = extract::extract_pair(&state, &cut, s.seed)?;
    let trace = simulate(&result.protocol, &state, SimulationOptions::with_mode(mode, s.seed))?;
    let mut out = String::new();
    writeln!(out, "cut {}, seed {}, mode {}", format_cut(&cut, state.system()), s.seed, mode_name(mode)).unwrap();
    writeln!(out, "protocol depth {}, leaves {}", result.protocol.depth(), result.protocol.root().leaf_count()).unwrap();
    branch_report(&mut out, &trace)?;
    writeln!(out, "\n{}", export_trace(&trace)).unwrap();
    Ok(Output::ok(out))
}

pub fn parse_schmidt(spec: &str) -> Result<SchmidtVector, CliError> {
    let values = spec
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| CliError::Input(format!("'{}' is not a number", t.trim()))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SchmidtVector::new(values)?)
}

pub fn convert(path: &Path, target: &str, cut: &str, s: &Settings) -> Result<Output, CliError> {
    let state = read_state(path, s.load)?;
    let cut = parse_cut(cut, state.system())?;
    let target = parse_schmidt(target)?;
    let source = SchmidtVector::from_state(&state, &cut)?;
    let mode = s.mode.unwrap_or(SimulationMode::Enumerate);
    let mut out = String::new();
    writeln!(out, "cut {}", format_cut(&cut, state.system())).unwrap();
    writeln!(out, "source coefficients {}", coefficients(source.values(), usize::MAX)).unwrap();
    writeln!(out, "target coefficients {}", coefficients(target.values(), usize::MAX)).unwrap();
    let steps = bipartite::t_transform_chain(&source, &target)?;
    writeln!(out, "majorization holds, {} T-transform steps", steps.len()).unwrap();
    let protocol = bipartite::synthesize_conversion(&state, &target, &cut)?;
    let trace = simulate(&protocol, &state, SimulationOptions::with_mode(mode, s.seed))?;
    let mut worst: f64 = 0.0;
    for b in &trace.branches {
        let got = b.state.schmidt(&cut)?.coefficients;
        for (i, t) in target.values().iter().enumerate() {
            worst = worst.max((got.get(i).copied().unwrap_or(0.0) - t).abs());
        }
    }
    writeln!(out, "protocol depth {}, leaves {}, mode {}", protocol.depth(), protocol.root().leaf_count(), mode_name(mode)).unwrap();
    writeln!(out, "branches {}, total probability {}, max coefficient deviation {}", trace.branches.len(), sig15(trace.total_probability()), sig15(worst)).unwrap();
    if worst > 1e-9 {
        return Err(locc_core::Error::VerificationFailed(format!("coefficients deviate by {worst}")).into());
    }
    Ok(Output::ok(out))
}

pub fn transform(source: &Path, target: &Path, max_copies: usize, s: &Settings, trace_out: Option<&Path>) -> Result<Output, CliError> {
    let psi = read_state(source, s.load)?;
    let phi = read_state(target, s.load)?;
    let mode = s.mode.unwrap_or(SimulationMode::Sample);
    let t = driver::transform(&psi, &phi, DriverOptions { max_copies, seed: s.seed, mode })?;
    let mut out = String::new();
    writeln!(out, "seed {}, mode {}, max copies {max_copies}", s.seed, mode_name(mode)).unwrap();
    writeln!(out, "stages {}", t.schedule.stages.len()).unwrap();
    for (i, stage) in t.schedule.stages.iter().enumerate() {
        let note = match stage.kind {
            StageKind::Extract { .. } => String::new(),
            _ => format!(" ({} branches)", stage.trace.branches.len()),
        };
        writeln!(out, "  {i}: {}{note}", stage.kind).unwrap();
    }
    writeln!(out, "ledger left {}", t.ledger).unwrap();
    let mut worst: f64 = 1.0;
    for b in &t.trace.branches {
        worst = worst.min(b.state.fidelity(&phi)?);
    }
    writeln!(out, "final branches {}, minimum fidelity {}", t.trace.branches.len(), sig15(worst)).unwrap();
    writeln!(out, "n_used {}", t.report.n_used).unwrap();
    writeln!(out, "m_produced {}", t.report.m_produced).unwrap();
    writeln!(out, "bound {}/{}", t.report.m_produced, t.report.n_used).unwrap();
    let trace = export_trace(&t.trace);
    match trace_out {
        Some(p) => std::fs::write(p, trace).map_err(|e| CliError::Io { path: p.display().to_string(), message: e.to_string() })?,
        None => writeln!(out, "\n{trace}").unwrap(),
    }
    Ok(Output::ok(out))
}

pub fn rate(source: &Path, target: &Path, trials: usize, max_copies: usize, s: &Settings) -> Result<Output, CliError> {
    let psi = read_state(source, s.load)?;
    let phi = read_state(target, s.load)?;
    if trials == 0 {
        return Err(CliError::Input("at least one trial is needed".into()));
    }
    let options = DriverOptions { max_copies, seed: s.seed, mode: s.mode.unwrap_or(SimulationMode::Sample) };
    let outcomes = pool(s.threads)?.install(|| (0..trials).into_par_iter().map(|i| driver::run_trial(&psi, &phi, options, i)).collect::<Result<Vec<_>, _>>())?;
    let mut out = String::new();
    writeln!(out, "trials {trials}, max copies {max_copies}, seed {}", s.seed).unwrap();
    writeln!(out, "trial  seed  n_used").unwrap();
    for (i, o) in outcomes.iter().enumerate() {
        let n = o.n_used.map_or("exhausted".to_string(), |n| n.to_string());
        writeln!(out, "{i:>5}  {}  {n}", o.seed).unwrap();
    }
    let report = driver::summarize(outcomes, max_copies)?;
    writeln!(out, "n_used {}", report.n_used).unwrap();
    writeln!(out, "m_produced {}", report.m_produced).unwrap();
    writeln!(out, "bound {}/{}", report.m_produced, report.n_used).unwrap();
    Ok(Output::ok(out))
}
