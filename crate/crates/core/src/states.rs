//! Dense quantum states: statevectors, density matrices and block-product states.

use crate::algebra::{
    gather_bits, hermitian_eig, scatter_bits, ComplexMatrix, HermitianOperator, C64, ONE, ZERO,
};
use crate::correlations::Partition;
use crate::error::{Error, Result};
use crate::estimation::PauliObservable;
use crate::povm::ProductPovm;

pub const DEFAULT_STATEVECTOR_LIMIT: usize = 14;
pub const DEFAULT_DENSITY_LIMIT: usize = 12;

/// Hard caps on dense representations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct DenseLimits {
    pub statevector: usize,
    pub density: usize,
}

impl Default for DenseLimits {
    fn default() -> Self {
        Self {
            statevector: DEFAULT_STATEVECTOR_LIMIT,
            density: DEFAULT_DENSITY_LIMIT,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    n: usize,
    amplitudes: Vec<C64>,
}

impl PureState {
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        let n = qubits_for_len(amplitudes.len())?;
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidState(format!("statevector norm {norm}")));
        }
        Ok(Self { n, amplitudes })
    }

    /// Normalizes the given amplitudes.
    pub fn normalized(mut amplitudes: Vec<C64>) -> Result<Self> {
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidState("zero or non-finite statevector".into()));
        }
        for a in &mut amplitudes {
            *a /= norm;
        }
        Self::new(amplitudes)
    }

    pub fn basis(n: usize, index: usize) -> Self {
        let mut amplitudes = vec![ZERO; 1 << n];
        amplitudes[index] = ONE;
        Self { n, amplitudes }
    }

    /// Tensor product of single-qubit kets, qubit 0 first.
    pub fn product(kets: &[[C64; 2]]) -> Result<Self> {
        let mut amps = vec![ONE];
        for k in kets {
            amps = amps.iter().flat_map(|a| [a * k[0], a * k[1]]).collect();
        }
        Self::normalized(amps)
    }

    pub fn bell() -> Self {
        let h = C64::new(0.5f64.sqrt(), 0.0);
        Self {
            n: 2,
            amplitudes: vec![h, ZERO, ZERO, h],
        }
    }

    pub fn ghz(n: usize) -> Self {
        let h = C64::new(0.5f64.sqrt(), 0.0);
        let mut amplitudes = vec![ZERO; 1 << n];
        amplitudes[0] = h;
        amplitudes[(1 << n) - 1] = h;
        Self { n, amplitudes }
    }

    /// `sqrt(1 - q^2)|00> + q|11>`.
    pub fn weighted_bell(q: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::InvalidState(format!("q = {q} outside [0, 1]")));
        }
        Self::new(vec![
            C64::new((1.0 - q * q).sqrt(), 0.0),
            ZERO,
            ZERO,
            C64::new(q, 0.0),
        ])
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix {
            n: self.n,
            matrix: HermitianOperator::projector(&self.amplitudes),
        }
    }

    pub fn expectation(&self, op: &ComplexMatrix) -> C64 {
        let applied = op.matvec(&self.amplitudes);
        inner(&self.amplitudes, &applied)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    n: usize,
    matrix: HermitianOperator,
}

impl DensityMatrix {
    pub fn new(matrix: HermitianOperator) -> Result<Self> {
        let n = matrix
            .num_qubits()
            .ok_or_else(|| Error::InvalidState("density matrix must be 2^n x 2^n".into()))?;
        let tr = matrix.real_trace();
        if (tr - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidState(format!("trace {tr}")));
        }
        let min = hermitian_eig(&matrix).values[0];
        if min < -1e-10 {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {min:.3e}"
            )));
        }
        Ok(Self { n, matrix })
    }

    pub fn maximally_mixed(n: usize) -> Self {
        Self {
            n,
            matrix: HermitianOperator::identity(1 << n).scale(1.0 / (1u64 << n) as f64),
        }
    }

    /// `(1 - q)|00><00| + q|11><11|`.
    pub fn classical_mixture(q: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::InvalidState(format!("q = {q} outside [0, 1]")));
        }
        Self::new(HermitianOperator::from_real_diagonal(&[
            1.0 - q,
            0.0,
            0.0,
            q,
        ]))
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &HermitianOperator {
        &self.matrix
    }

    pub fn purity(&self) -> f64 {
        self.matrix.trace_with(&self.matrix)
    }

    pub fn expectation(&self, op: &ComplexMatrix) -> C64 {
        op.trace_product(&self.matrix)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockProductState {
    partition: Partition,
    blocks: Vec<DensityMatrix>,
}

impl BlockProductState {
    pub fn new(partition: Partition, blocks: Vec<DensityMatrix>) -> Result<Self> {
        if partition.groups().len() != blocks.len() {
            return Err(Error::InvalidPartition(format!(
                "{} groups but {} blocks",
                partition.groups().len(),
                blocks.len()
            )));
        }
        for (g, b) in partition.groups().iter().zip(&blocks) {
            if g.len() != b.num_qubits() {
                return Err(Error::Dimension(format!(
                    "block of {} qubits for group {g:?}",
                    b.num_qubits()
                )));
            }
        }
        Ok(Self { partition, blocks })
    }

    pub fn num_qubits(&self) -> usize {
        self.partition.num_qubits()
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn blocks(&self) -> &[DensityMatrix] {
        &self.blocks
    }

    pub fn to_density(&self) -> Result<DensityMatrix> {
        let mut m = ComplexMatrix::identity(1);
        let mut order = Vec::new();
        for (g, b) in self.partition.groups().iter().zip(&self.blocks) {
            m = m.kron(b.matrix());
            order.extend_from_slice(g);
        }
        let matrix = HermitianOperator::new(m.permute_qubits(&order)?)?;
        Ok(DensityMatrix {
            n: self.num_qubits(),
            matrix,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum QuantumState {
    Pure(PureState),
    Mixed(DensityMatrix),
    Block(BlockProductState),
}

impl From<PureState> for QuantumState {
    fn from(s: PureState) -> Self {
        Self::Pure(s)
    }
}

impl From<DensityMatrix> for QuantumState {
    fn from(s: DensityMatrix) -> Self {
        Self::Mixed(s)
    }
}

impl From<BlockProductState> for QuantumState {
    fn from(s: BlockProductState) -> Self {
        Self::Block(s)
    }
}

impl QuantumState {
    pub fn num_qubits(&self) -> usize {
        match self {
            Self::Pure(s) => s.num_qubits(),
            Self::Mixed(s) => s.num_qubits(),
            Self::Block(s) => s.num_qubits(),
        }
    }

    pub fn check_limits(&self, limits: &DenseLimits) -> Result<()> {
        let n = self.num_qubits();
        let limit = match self {
            Self::Pure(_) => limits.statevector,
            Self::Mixed(_) => limits.density,
            Self::Block(b) => {
                let largest = b.partition().max_group_size();
                if largest > limits.density {
                    return Err(Error::TooLarge {
                        n: largest,
                        limit: limits.density,
                    });
                }
                return Ok(());
            }
        };
        if n > limit {
            return Err(Error::TooLarge { n, limit });
        }
        Ok(())
    }

    pub fn to_density(&self) -> Result<DensityMatrix> {
        match self {
            Self::Pure(s) => Ok(s.to_density()),
            Self::Mixed(s) => Ok(s.clone()),
            Self::Block(s) => s.to_density(),
        }
    }

    /// `Tr[rho (A_1 (x) A_2 (x) ...)]` where factor `A_j` acts on `groups[j]`.
    /// Groups must be disjoint; uncovered qubits carry the identity.
    pub fn expect_product(&self, factors: &[(&[usize], &ComplexMatrix)]) -> Result<C64> {
        let n = self.num_qubits();
        for (g, a) in factors {
            if let Some(&q) = g.iter().find(|&&q| q >= n) {
                return Err(Error::QubitOutOfRange { index: q, n });
            }
            if a.rows() != 1 << g.len() || !a.is_square() {
                return Err(Error::Dimension(format!(
                    "{}x{} factor on {} qubits",
                    a.rows(),
                    a.cols(),
                    g.len()
                )));
            }
        }
        match self {
            Self::Pure(s) => {
                let mut phi = s.amplitudes.clone();
                for (g, a) in factors {
                    phi = apply_on_qubits(a, g, n, &phi);
                }
                Ok(inner(&s.amplitudes, &phi))
            }
            Self::Mixed(s) => Ok(expect_product_dense(s.matrix(), n, factors)),
            Self::Block(b) => {
                let aligned = factors.iter().all(|(g, _)| {
                    b.partition
                        .groups()
                        .iter()
                        .any(|bg| g.iter().all(|q| bg.contains(q)))
                });
                if !aligned {
                    let dense = b.to_density()?;
                    return Ok(expect_product_dense(dense.matrix(), n, factors));
                }
                let mut value = ONE;
                for (bg, block) in b.partition.groups().iter().zip(&b.blocks) {
                    let local: Vec<(Vec<usize>, &ComplexMatrix)> = factors
                        .iter()
                        .filter(|(g, _)| !g.is_empty() && bg.contains(&g[0]))
                        .map(|(g, a)| {
                            let pos = g
                                .iter()
                                .map(|q| bg.iter().position(|x| x == q).unwrap())
                                .collect();
                            (pos, *a)
                        })
                        .collect();
                    if local.is_empty() {
                        continue;
                    }
                    let refs: Vec<(&[usize], &ComplexMatrix)> =
                        local.iter().map(|(p, a)| (p.as_slice(), *a)).collect();
                    value *= expect_product_dense(block.matrix(), bg.len(), &refs);
                }
                Ok(value)
            }
        }
    }
}

fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn qubits_for_len(len: usize) -> Result<usize> {
    if len == 0 || !len.is_power_of_two() {
        return Err(Error::InvalidState(format!(
            "length {len} is not a power of two"
        )));
    }
    Ok(len.trailing_zeros() as usize)
}

fn expect_product_dense(
    rho: &ComplexMatrix,
    n: usize,
    factors: &[(&[usize], &ComplexMatrix)],
) -> C64 {
    let dim = 1usize << n;
    let mut acc = ZERO;
    let mut column = vec![ZERO; dim];
    for j in 0..dim {
        for (i, c) in column.iter_mut().enumerate() {
            *c = rho[(i, j)];
        }
        let mut v = column.clone();
        for (g, a) in factors {
            v = apply_on_qubits(a, g, n, &v);
        }
        acc += v[j];
    }
    acc
}

/// Applies a `2^k x 2^k` operator acting on `targets` (in factor order) to an
/// `n`-qubit vector.
pub fn apply_on_qubits(op: &ComplexMatrix, targets: &[usize], n: usize, v: &[C64]) -> Vec<C64> {
    let k = targets.len();
    let sub = 1usize << k;
    let rest: Vec<usize> = (0..n).filter(|q| !targets.contains(q)).collect();
    let offsets: Vec<usize> = (0..sub).map(|a| scatter_bits(a, targets, n)).collect();
    let mut out = vec![ZERO; v.len()];
    let mut local = vec![ZERO; sub];
    for r in 0..(1usize << rest.len()) {
        let base = scatter_bits(r, &rest, n);
        for (a, slot) in local.iter_mut().enumerate() {
            *slot = v[base | offsets[a]];
        }
        for a in 0..sub {
            let row = op.row(a);
            out[base | offsets[a]] = row.iter().zip(&local).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// Born probability `Tr[Pi_m rho]` of a full outcome string, clamped to [0, 1].
pub fn outcome_probability(
    state: &QuantumState,
    povm: &ProductPovm,
    outcome: &[usize],
) -> Result<f64> {
    let n = state.num_qubits();
    if povm.num_qubits() != n || outcome.len() != n {
        return Err(Error::Dimension(format!(
            "state on {n} qubits, POVM on {}, outcome of length {}",
            povm.num_qubits(),
            outcome.len()
        )));
    }
    let effects: Vec<(Vec<usize>, &ComplexMatrix)> = outcome
        .iter()
        .enumerate()
        .map(|(q, &m)| Ok((vec![q], povm.local(q).effect(m)?.matrix())))
        .collect::<Result<_>>()?;
    let refs: Vec<(&[usize], &ComplexMatrix)> =
        effects.iter().map(|(g, a)| (g.as_slice(), *a)).collect();
    let p = state.expect_product(&refs)?.re;
    Ok(p.clamp(0.0, 1.0))
}

/// Reduced density matrix on `group`; factor `j` of the result is qubit `group[j]`.
pub fn reduced_density(state: &QuantumState, group: &[usize]) -> Result<DensityMatrix> {
    let n = state.num_qubits();
    check_group(group, n)?;
    let matrix = match state {
        QuantumState::Pure(s) => reduce_pure(s, group),
        QuantumState::Mixed(s) => reduce_dense(s.matrix(), group)?,
        QuantumState::Block(b) => {
            let mut m = ComplexMatrix::identity(1);
            let mut order = Vec::new();
            for (bg, block) in b.partition.groups().iter().zip(&b.blocks) {
                let local: Vec<usize> = (0..bg.len()).filter(|&j| group.contains(&bg[j])).collect();
                if local.is_empty() {
                    continue;
                }
                m = m.kron(&block.matrix().partial_trace(&local)?);
                order.extend(local.iter().map(|&j| bg[j]));
            }
            // order lists the qubits of each factor; map them to positions in `group`
            let positions: Vec<usize> = order
                .iter()
                .map(|q| group.iter().position(|g| g == q).unwrap())
                .collect();
            m.permute_qubits(&positions)?
        }
    };
    DensityMatrix::new(HermitianOperator::new(matrix)?)
}

fn check_group(group: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    for &q in group {
        if q >= n {
            return Err(Error::QubitOutOfRange { index: q, n });
        }
        if seen[q] {
            return Err(Error::InvalidPartition(format!("qubit {q} repeated")));
        }
        seen[q] = true;
    }
    Ok(())
}

fn reduce_pure(s: &PureState, group: &[usize]) -> ComplexMatrix {
    let n = s.n;
    let rest: Vec<usize> = (0..n).filter(|q| !group.contains(q)).collect();
    let kd = 1usize << group.len();
    let embed: Vec<usize> = (0..kd).map(|a| scatter_bits(a, group, n)).collect();
    let mut out = ComplexMatrix::zeros(kd, kd);
    for r in 0..(1usize << rest.len()) {
        let base = scatter_bits(r, &rest, n);
        for a in 0..kd {
            let x = s.amplitudes[base | embed[a]];
            if x == ZERO {
                continue;
            }
            for b in 0..kd {
                out[(a, b)] += x * s.amplitudes[base | embed[b]].conj();
            }
        }
    }
    out
}

fn reduce_dense(rho: &ComplexMatrix, group: &[usize]) -> Result<ComplexMatrix> {
    let mut sorted = group.to_vec();
    sorted.sort_unstable();
    let reduced = rho.partial_trace(&sorted)?;
    let positions: Vec<usize> = sorted
        .iter()
        .map(|q| group.iter().position(|g| g == q).unwrap())
        .collect();
    reduced.permute_qubits(&positions)
}

/// Product of the reduced states over the partition's groups.
pub fn grouped_product_state(
    state: &QuantumState,
    partition: &Partition,
) -> Result<BlockProductState> {
    if partition.num_qubits() != state.num_qubits() {
        return Err(Error::InvalidPartition(format!(
            "partition covers {} qubits, state has {}",
            partition.num_qubits(),
            state.num_qubits()
        )));
    }
    let blocks = partition
        .groups()
        .iter()
        .map(|g| reduced_density(state, g))
        .collect::<Result<Vec<_>>>()?;
    BlockProductState::new(partition.clone(), blocks)
}

/// Lowest eigenpair of the dense Hamiltonian.
pub fn ground_state(observable: &PauliObservable, limit: usize) -> Result<(f64, PureState)> {
    let n = observable.num_qubits();
    if n > limit {
        return Err(Error::TooLarge { n, limit });
    }
    let h = HermitianOperator::new(observable.to_matrix())?;
    let eig = hermitian_eig(&h);
    let state = PureState::normalized(eig.column(0))?;
    let energy = state.expectation(h.matrix()).re;
    Ok((energy, state))
}

/// Basis index helper: the outcome bits of `group` inside an `n`-qubit index.
pub fn group_bits(index: usize, group: &[usize], n: usize) -> usize {
    gather_bits(index, group, n)
}
