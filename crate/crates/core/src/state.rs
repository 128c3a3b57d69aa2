//! Pure states over a tensor product of party subsystems, bipartitions,
//! reduced states and Schmidt decompositions.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, C64, ONE, ZERO};
use crate::math;
use crate::{EPS_NORM, EPS_RANK};

/// Local dimensions and owner labels of the subsystems a state lives on.
///
/// Each entry is one tensor factor ("site"). Labels name the party that owns
/// the site; protocols may give several sites the same owner.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PartySystem {
    dims: Vec<usize>,
    labels: Vec<String>,
}

impl PartySystem {
    /// A system with default labels `P1..Pm`.
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        let labels = (1..=dims.len()).map(|i| format!("P{i}")).collect();
        Self::with_labels(dims, labels)
    }

    pub fn with_labels(dims: Vec<usize>, labels: Vec<String>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidSystem("at least one party is required".to_string()));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidSystem("every local dimension must be at least 1".to_string()));
        }
        if labels.len() != dims.len() {
            return Err(Error::InvalidSystem(format!(
                "{} labels for {} parties",
                labels.len(),
                dims.len()
            )));
        }
        if dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).is_none() {
            return Err(Error::InvalidSystem("total dimension overflows".to_string()));
        }
        Ok(Self { dims, labels })
    }

    /// `m` qubit parties labelled `P1..Pm`.
    pub fn qubits(m: usize) -> Self {
        Self::new(vec![2; m]).expect("qubit system")
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, site: usize) -> &str {
        &self.labels[site]
    }

    pub fn num_parties(&self) -> usize {
        self.dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    /// Product of the dimensions of `sites`.
    pub fn dim_of(&self, sites: &[usize]) -> usize {
        sites.iter().map(|&s| self.dims[s]).product()
    }

    /// Position of the site labelled `label`, if any.
    pub fn position(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn labels_unique(&self) -> bool {
        self.labels.iter().enumerate().all(|(i, l)| !self.labels[..i].contains(l))
    }

    /// The sites in the given order as a system of their own.
    pub fn subsystem(&self, sites: &[usize]) -> Self {
        Self {
            dims: sites.iter().map(|&s| self.dims[s]).collect(),
            labels: sites.iter().map(|&s| self.labels[s].clone()).collect(),
        }
    }

    pub fn concat(&self, other: &Self) -> Self {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        let mut labels = self.labels.clone();
        labels.extend(other.labels.iter().cloned());
        Self { dims, labels }
    }

    /// Same system with the dimension of `site` replaced.
    pub(crate) fn with_dim(&self, site: usize, dim: usize) -> Self {
        let mut out = self.clone();
        out.dims[site] = dim;
        out
    }

    /// Same system without `sites`.
    pub(crate) fn without(&self, sites: &[usize]) -> Self {
        let keep: Vec<usize> = (0..self.num_parties()).filter(|s| !sites.contains(s)).collect();
        self.subsystem(&keep)
    }
}

/// Offsets of every joint basis index of `sites` (in the given order, first
/// site most significant) inside the full amplitude vector.
pub(crate) fn site_offsets(dims: &[usize], sites: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    let mut offsets = vec![0usize];
    for &s in sites {
        let mut next = Vec::with_capacity(offsets.len() * dims[s]);
        for &o in &offsets {
            for digit in 0..dims[s] {
                next.push(o + digit * strides[s]);
            }
        }
        offsets = next;
    }
    offsets
}

/// Sites of `0..n` not in `sites`, ascending.
pub(crate) fn complement(n: usize, sites: &[usize]) -> Vec<usize> {
    (0..n).filter(|s| !sites.contains(s)).collect()
}

/// Applies `op` to the joint space of `sites` (identity elsewhere).
pub(crate) fn apply_local(dims: &[usize], amps: &[C64], sites: &[usize], op: &Matrix) -> Vec<C64> {
    let inner = site_offsets(dims, sites);
    let outer = site_offsets(dims, &complement(dims.len(), sites));
    let mut out = vec![ZERO; amps.len()];
    let mut block = vec![ZERO; inner.len()];
    for &base in &outer {
        for (b, &o) in block.iter_mut().zip(&inner) {
            *b = amps[base + o];
        }
        let image = op.mul_vec(&block);
        for (v, &o) in image.iter().zip(&inner) {
            out[base + o] = *v;
        }
    }
    out
}

/// Coefficient matrix with rows indexed by the joint basis of `rows` and
/// columns by the remaining sites in ascending order.
pub(crate) fn coefficient_matrix(dims: &[usize], amps: &[C64], rows: &[usize]) -> Matrix {
    let r = site_offsets(dims, rows);
    let c = site_offsets(dims, &complement(dims.len(), rows));
    Matrix::from_fn(r.len(), c.len(), |i, j| amps[r[i] + c[j]])
}

/// Factorization `m = Σ_k √c_k · u_k v_kᵀ` with `c` descending and summing to
/// `‖m‖²`; returns `(c, U, V)` where `U`, `V` are unitaries whose leading
/// columns are the `u_k`, `v_k`.
pub(crate) fn schmidt_factor(m: &Matrix) -> (Vec<f64>, Matrix, Matrix) {
    if m.rows() > m.cols() {
        let (c, v, u) = schmidt_factor(&m.transpose());
        return (c, u, v);
    }
    let rho = m.matmul(&m.adjoint());
    let (values, u) = linalg::hermitian_eigen(&rho);
    let coeffs: Vec<f64> = values.iter().map(|&x| x.max(0.0)).collect();
    let mt = m.transpose();
    let mut right = Vec::with_capacity(coeffs.len());
    for k in 0..coeffs.len() {
        let uk: Vec<C64> = u.column(k).iter().map(|x| x.conj()).collect();
        let w = mt.mul_vec(&uk);
        let n = linalg::norm(&w);
        if n <= 1e-10 {
            break;
        }
        right.push(w.into_iter().map(|x| x / n).collect());
    }
    let v = Matrix::from_columns(&linalg::complete_basis(&right, m.cols()));
    (coeffs, u, v)
}

/// A normalized pure state.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    system: PartySystem,
    amps: Vec<C64>,
}

impl PureState {
    /// Wraps amplitudes that are already normalized within [`EPS_NORM`].
    pub fn new(system: PartySystem, amps: Vec<C64>) -> Result<Self> {
        Self::with_norm_tolerance(system, amps, EPS_NORM)
    }

    pub fn with_norm_tolerance(system: PartySystem, amps: Vec<C64>, tol: f64) -> Result<Self> {
        check_len(&system, &amps)?;
        let norm = linalg::norm(&amps);
        if math::abs(norm - 1.0) > tol {
            return Err(Error::NotNormalized { norm });
        }
        Ok(Self { system, amps })
    }

    /// Rescales a nonzero amplitude vector to unit norm.
    pub fn normalized(system: PartySystem, amps: Vec<C64>) -> Result<Self> {
        check_len(&system, &amps)?;
        let norm = linalg::norm(&amps);
        if norm.is_nan() || norm <= 1e-150 {
            return Err(Error::ZeroState);
        }
        let amps = amps.into_iter().map(|a| a / norm).collect();
        Ok(Self { system, amps })
    }

    pub fn from_real(system: PartySystem, amps: &[f64]) -> Result<Self> {
        Self::normalized(system, amps.iter().map(|&a| C64::new(a, 0.0)).collect())
    }

    /// The computational basis state with the given per-party digits.
    pub fn basis(system: PartySystem, digits: &[usize]) -> Result<Self> {
        if digits.len() != system.num_parties() || digits.iter().zip(system.dims()).any(|(&d, &n)| d >= n) {
            return Err(Error::InvalidArgument("basis digits out of range".to_string()));
        }
        let index = digits.iter().zip(system.dims()).fold(0, |acc, (&d, &n)| acc * n + d);
        let mut amps = vec![ZERO; system.total_dim()];
        amps[index] = ONE;
        Ok(Self { system, amps })
    }

    /// Haar-random state drawn from complex Gaussian amplitudes.
    pub fn random<R: Rng + ?Sized>(system: PartySystem, rng: &mut R) -> Self {
        let amps = (0..system.total_dim()).map(|_| gaussian_pair(rng)).collect();
        Self::normalized(system, amps).expect("gaussian vector is nonzero")
    }

    pub fn system(&self) -> &PartySystem {
        &self.system
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn num_parties(&self) -> usize {
        self.system.num_parties()
    }

    pub fn into_parts(self) -> (PartySystem, Vec<C64>) {
        (self.system, self.amps)
    }

    pub(crate) fn from_parts_unchecked(system: PartySystem, amps: Vec<C64>) -> Self {
        Self { system, amps }
    }

    /// Same amplitudes under new labels.
    pub fn relabeled(&self, labels: Vec<String>) -> Result<Self> {
        let system = PartySystem::with_labels(self.system.dims.clone(), labels)?;
        Ok(Self { system, amps: self.amps.clone() })
    }

    pub fn tensor(&self, other: &Self) -> Self {
        let mut amps = Vec::with_capacity(self.amps.len() * other.amps.len());
        for a in &self.amps {
            for b in &other.amps {
                amps.push(a * b);
            }
        }
        Self { system: self.system.concat(&other.system), amps }
    }

    /// `n`-fold tensor power (`n >= 1`).
    pub fn tensor_power(&self, n: usize) -> Self {
        assert!(n >= 1, "tensor power needs at least one copy");
        (1..n).fold(self.clone(), |acc, _| acc.tensor(self))
    }

    /// Reorders parties so that new party `k` is old party `perm[k]`.
    pub fn permute_parties(&self, perm: &[usize]) -> Result<Self> {
        let m = self.num_parties();
        let mut seen = vec![false; m];
        if perm.len() != m || perm.iter().any(|&p| p >= m || core::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidPermutation { parties: m });
        }
        let offsets = site_offsets(self.system.dims(), perm);
        let amps = offsets.iter().map(|&o| self.amps[o]).collect();
        Ok(Self { system: self.system.subsystem(perm), amps })
    }

    /// Partial trace onto `keep` (joint basis in the given order).
    pub fn reduced_state(&self, keep: &[usize]) -> Result<Matrix> {
        self.check_subset(keep)?;
        let m = coefficient_matrix(self.system.dims(), &self.amps, keep);
        Ok(m.matmul(&m.adjoint()))
    }

    pub fn schmidt(&self, cut: &Bipartition) -> Result<SchmidtData> {
        self.check_cut(cut)?;
        let m = coefficient_matrix(self.system.dims(), &self.amps, cut.side_a());
        let (mut coeffs, basis_a, basis_b) = schmidt_factor(&m);
        let total: f64 = coeffs.iter().sum();
        for c in coeffs.iter_mut() {
            *c /= total;
        }
        let rank = coeffs.iter().filter(|&&c| c > EPS_RANK).count();
        Ok(SchmidtData {
            coefficients: coeffs,
            basis_a,
            basis_b,
            rank,
            side_a: cut.side_a().to_vec(),
            side_b: cut.side_b().to_vec(),
        })
    }

    /// Whether the squared Schmidt mass outside the leading coefficient
    /// exceeds [`EPS_RANK`].
    pub fn is_entangled(&self, cut: &Bipartition) -> Result<bool> {
        Ok(self.schmidt(cut)?.is_entangled_with(EPS_RANK))
    }

    /// Entangled across every bipartition (vacuously true for one party).
    pub fn is_genuinely_entangled(&self) -> bool {
        Bipartition::all(self.num_parties())
            .iter()
            .all(|cut| self.is_entangled(cut).expect("enumerated cut is valid"))
    }

    pub fn inner(&self, other: &Self) -> Result<C64> {
        if self.system.dims() != other.system.dims() {
            return Err(Error::SystemMismatch);
        }
        Ok(linalg::inner(&self.amps, &other.amps))
    }

    /// `|<a|b>|²`.
    pub fn fidelity(&self, other: &Self) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr().min(1.0))
    }

    fn check_subset(&self, sites: &[usize]) -> Result<()> {
        let m = self.num_parties();
        if sites.is_empty() {
            return Err(Error::InvalidSubset("subset is empty".to_string()));
        }
        for (i, &s) in sites.iter().enumerate() {
            if s >= m || sites[..i].contains(&s) {
                return Err(Error::InvalidSubset(format!("site {s} is out of range or repeated")));
            }
        }
        Ok(())
    }

    fn check_cut(&self, cut: &Bipartition) -> Result<()> {
        if cut.num_parties() != self.num_parties() {
            return Err(Error::SystemMismatch);
        }
        Ok(())
    }
}

fn check_len(system: &PartySystem, amps: &[C64]) -> Result<()> {
    if amps.len() != system.total_dim() {
        return Err(Error::LengthMismatch { expected: system.total_dim(), found: amps.len() });
    }
    Ok(())
}

fn gaussian_pair<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    // Box-Muller
    let u: f64 = 1.0 - rng.gen::<f64>();
    let v: f64 = rng.gen::<f64>();
    let r = math::sqrt(-2.0 * math::ln(u));
    let t = 2.0 * core::f64::consts::PI * v;
    C64::new(r * math::cos(t), r * math::sin(t))
}

/// A split of the parties into a nonempty proper subset and its complement.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bipartition {
    side_a: Vec<usize>,
    side_b: Vec<usize>,
}

impl Bipartition {
    pub fn new(side_a: &[usize], num_parties: usize) -> Result<Self> {
        let mut a = side_a.to_vec();
        a.sort_unstable();
        a.dedup();
        if a.len() != side_a.len() || a.iter().any(|&p| p >= num_parties) {
            return Err(Error::InvalidSubset("cut side has repeated or out-of-range parties".to_string()));
        }
        if a.is_empty() || a.len() == num_parties {
            return Err(Error::InvalidSubset("cut side must be a nonempty proper subset".to_string()));
        }
        let b = complement(num_parties, &a);
        Ok(Self { side_a: a, side_b: b })
    }

    /// Every bipartition of `num_parties` parties once, with party 0 on side A.
    pub fn all(num_parties: usize) -> Vec<Self> {
        if num_parties < 2 {
            return Vec::new();
        }
        let rest = num_parties - 1;
        (0..(1usize << rest) - 1)
            .map(|mask| {
                let mut a = vec![0];
                a.extend((0..rest).filter(|i| mask >> i & 1 == 1).map(|i| i + 1));
                Self::new(&a, num_parties).expect("enumerated cut")
            })
            .collect()
    }

    pub fn side_a(&self) -> &[usize] {
        &self.side_a
    }

    pub fn side_b(&self) -> &[usize] {
        &self.side_b
    }

    pub fn num_parties(&self) -> usize {
        self.side_a.len() + self.side_b.len()
    }

    /// The same split with the sides exchanged.
    pub fn mirrored(&self) -> Self {
        Self { side_a: self.side_b.clone(), side_b: self.side_a.clone() }
    }

    /// Orientation with party 0 on side A.
    pub fn canonical(&self) -> Self {
        if self.side_a.contains(&0) {
            self.clone()
        } else {
            self.mirrored()
        }
    }
}

/// Schmidt decomposition of a state across a bipartition.
///
/// `coefficients` are the squared Schmidt coefficients (length
/// `min(dim_a, dim_b)`), and the state's coefficient matrix equals
/// `Σ_k √c_k · a_k b_kᵀ` where `a_k`, `b_k` are the leading columns of
/// `basis_a`, `basis_b`.
#[derive(Clone, Debug)]
pub struct SchmidtData {
    pub coefficients: Vec<f64>,
    pub basis_a: Matrix,
    pub basis_b: Matrix,
    pub rank: usize,
    pub side_a: Vec<usize>,
    pub side_b: Vec<usize>,
}

impl SchmidtData {
    /// Squared Schmidt mass beyond the leading coefficient.
    pub fn tail(&self) -> f64 {
        self.coefficients.iter().skip(1).sum()
    }

    pub fn is_entangled_with(&self, eps_rank: f64) -> bool {
        self.tail() > eps_rank
    }

    pub fn rank_with(&self, eps_rank: f64) -> usize {
        self.coefficients.iter().filter(|&&c| c > eps_rank).count()
    }

    /// Coefficient matrix rebuilt from the decomposition.
    pub fn reconstruct(&self) -> Matrix {
        let (da, db) = (self.basis_a.rows(), self.basis_b.rows());
        let mut m = Matrix::zeros(da, db);
        for (k, &c) in self.coefficients.iter().enumerate() {
            let s = math::sqrt(c);
            for i in 0..da {
                for j in 0..db {
                    m[(i, j)] += self.basis_a[(i, k)] * self.basis_b[(j, k)] * s;
                }
            }
        }
        m
    }
}
