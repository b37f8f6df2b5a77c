//! Frame operators, dual frames and their local assembly.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{
    hermitian_eig, pauli_matrices, ComplexMatrix, HermitianOperator, SuperOperator, C64, ZERO,
};
use crate::correlations::{
    edge_order_partition, greedy_partition, mi_matrix, naive_partition, node_order_partition,
    ExactStatistics, OutcomeStatistics, Partition,
};
use crate::error::{Error, Result};
use crate::povm::{flatten_outcome, unflatten_outcome, ProductPovm};
use crate::sampling::{marginal_counts, Dataset};
use crate::states::{reduced_density, DensityMatrix, QuantumState};
use crate::tomography::{predicted_probabilities, reconstruct, TomographyBackend};

pub const DEFAULT_FLOOR: f64 = 1e-10;
pub const DEFAULT_MAX_CONDITION: f64 = 1e12;
pub const DUALITY_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct FrameOperator {
    pub matrix: SuperOperator,
    pub weights: Vec<f64>,
}

/// `F = sum_m w_m |Pi_m>><<Pi_m|`.
pub fn frame_operator(effects: &[HermitianOperator], weights: &[f64]) -> Result<FrameOperator> {
    frame_operator_checks(effects, weights)?;
    let d2 = effects[0].dim() * effects[0].dim();
    let mut f = ComplexMatrix::zeros(d2, d2);
    for (e, &w) in effects.iter().zip(weights) {
        outer_accumulate(&mut f, w, e.as_slice(), e.as_slice());
    }
    Ok(FrameOperator {
        matrix: f,
        weights: weights.to_vec(),
    })
}

/// `acc += w |a>><<b|` for vectorized operators.
fn outer_accumulate(acc: &mut ComplexMatrix, w: f64, a: &[C64], b: &[C64]) {
    let d2 = a.len();
    let data = acc.as_mut_slice();
    for (i, &x) in a.iter().enumerate() {
        if x == ZERO {
            continue;
        }
        let xw = x * w;
        let row = &mut data[i * d2..(i + 1) * d2];
        for (slot, y) in row.iter_mut().zip(b) {
            *slot += xw * y.conj();
        }
    }
}

impl FrameOperator {
    /// Pseudo-inverse via eigendecomposition, with the condition number.
    pub fn inverse(&self, max_condition: f64) -> Result<(SuperOperator, f64)> {
        let h = HermitianOperator::new(self.matrix.clone())?;
        let eig = hermitian_eig(&h);
        let top = eig.values.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let low = eig
            .values
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b.abs()));
        let condition = if low > 0.0 { top / low } else { f64::INFINITY };
        if !(condition <= max_condition) {
            return Err(Error::IllConditioned(condition));
        }
        let cutoff = top * 1e-12;
        let inv: Vec<f64> = eig
            .values
            .iter()
            .map(|&v| if v.abs() > cutoff { 1.0 / v } else { 0.0 })
            .collect();
        Ok((eig.reassemble(&inv), condition))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    Canonical,
    Optimal,
    KLocal { backend: String },
    ProductOptimized,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Canonical => write!(f, "canonical"),
            Self::Optimal => write!(f, "optimal"),
            Self::KLocal { backend } => write!(f, "klo-{backend}"),
            Self::ProductOptimized => write!(f, "product-optimized"),
        }
    }
}

/// Duals aligned with the group's flattened outcome order.
#[derive(Clone, Debug, PartialEq)]
pub struct DualFrame {
    group: Vec<usize>,
    duals: Vec<HermitianOperator>,
    provenance: Provenance,
    weights: Option<Vec<f64>>,
    residual: f64,
}

impl DualFrame {
    /// Verifies duality against `effects` before accepting.
    pub fn new(
        group: Vec<usize>,
        duals: Vec<HermitianOperator>,
        effects: &[HermitianOperator],
        provenance: Provenance,
        weights: Option<Vec<f64>>,
    ) -> Result<Self> {
        if group.is_empty() || duals.first().map(|d| d.dim()) != Some(1 << group.len()) {
            return Err(Error::Dimension(format!(
                "duals do not act on a group of {} qubits",
                group.len()
            )));
        }
        let residual = duality_residual(&duals, effects)?;
        if !(residual <= DUALITY_TOLERANCE) {
            return Err(Error::DualityViolated(residual));
        }
        Ok(Self {
            group,
            duals,
            provenance,
            weights,
            residual,
        })
    }

    pub fn group(&self) -> &[usize] {
        &self.group
    }

    pub fn duals(&self) -> &[HermitianOperator] {
        &self.duals
    }

    pub fn dual(&self, m: usize) -> &HermitianOperator {
        &self.duals[m]
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn num_outcomes(&self) -> usize {
        self.duals.len()
    }
}

/// `max |sum_m |D_m>><<Pi_m| - I|`.
pub fn duality_residual(duals: &[HermitianOperator], effects: &[HermitianOperator]) -> Result<f64> {
    if duals.len() != effects.len() || duals.is_empty() {
        return Err(Error::Dimension(format!(
            "{} duals for {} effects",
            duals.len(),
            effects.len()
        )));
    }
    if duals
        .iter()
        .chain(effects)
        .any(|x| x.dim() != effects[0].dim())
    {
        return Err(Error::Dimension(
            "duals and effects differ in dimension".into(),
        ));
    }
    let d2 = effects[0].dim() * effects[0].dim();
    let mut s = ComplexMatrix::zeros(d2, d2);
    for (d, e) in duals.iter().zip(effects) {
        outer_accumulate(&mut s, 1.0, d.as_slice(), e.as_slice());
    }
    Ok(s.max_abs_diff(&ComplexMatrix::identity(d2)))
}

/// `D_m = w_m F^{-1} |Pi_m>>`.
///
/// With `B = [sqrt(w_m) |Pi_m>>]` we have `F = B B^dag`, so the dual matrix is
/// `(B^dag)^+ W^{1/2} = R^{-1} Q^dag W^{1/2}` for the thin QR `B^dag = Q R`.
/// This avoids forming `F`, whose conditioning is the square of that of `B`
/// and becomes severe when floored probabilities put weights near `1 / floor`.
pub fn duals_from_weights(
    effects: &[HermitianOperator],
    weights: &[f64],
    provenance: Provenance,
    group: Vec<usize>,
) -> Result<DualFrame> {
    let dual_vectors = weighted_dual_vectors(effects, weights, DEFAULT_MAX_CONDITION)?;
    let dim = effects[0].dim();
    let duals = dual_vectors
        .into_iter()
        .map(|v| HermitianOperator::symmetrized(ComplexMatrix::from_vec(dim, dim, v)?))
        .collect::<Result<Vec<_>>>()?;
    DualFrame::new(group, duals, effects, provenance, Some(weights.to_vec()))
}

fn weighted_dual_vectors(
    effects: &[HermitianOperator],
    weights: &[f64],
    max_condition: f64,
) -> Result<Vec<Vec<C64>>> {
    frame_operator_checks(effects, weights)?;
    let d2 = effects[0].dim() * effects[0].dim();
    let m = effects.len();
    if m < d2 {
        return Err(Error::IllConditioned(f64::INFINITY));
    }
    let roots: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    // B^dag: row j is sqrt(w_j) <<Pi_j|
    let bt = DMatrix::from_fn(m, d2, |j, i| effects[j].as_slice()[i].conj() * roots[j]);
    let qr = bt.qr();
    let r = qr.r();
    let sv = r.singular_values();
    let top = sv.iter().fold(0.0f64, |a, &s| a.max(s));
    let low = sv.iter().fold(f64::INFINITY, |a, &s| a.min(s));
    let condition = if low > 0.0 {
        (top / low).powi(2)
    } else {
        f64::INFINITY
    };
    if !(condition <= max_condition) {
        return Err(Error::IllConditioned(condition));
    }
    let mut rhs = qr.q().adjoint();
    for (j, &s) in roots.iter().enumerate() {
        rhs.column_mut(j).scale_mut(s);
    }
    let d = r
        .solve_upper_triangular(&rhs)
        .ok_or(Error::IllConditioned(f64::INFINITY))?;
    Ok((0..m)
        .map(|j| d.column(j).iter().copied().collect())
        .collect())
}

fn frame_operator_checks(effects: &[HermitianOperator], weights: &[f64]) -> Result<()> {
    if effects.len() != weights.len() || effects.is_empty() {
        return Err(Error::Dimension(format!(
            "{} weights for {} effects",
            weights.len(),
            effects.len()
        )));
    }
    if let Some((index, &value)) = weights
        .iter()
        .enumerate()
        .find(|(_, w)| !(**w > 0.0 && w.is_finite()))
    {
        return Err(Error::NonPositiveWeight { index, value });
    }
    Ok(())
}

/// Canonical duals (weights `1 / Tr Pi_m`) as a bare operator list.
pub fn canonical_duals(effects: &[HermitianOperator]) -> Result<Vec<HermitianOperator>> {
    let weights: Vec<f64> = effects.iter().map(|e| 1.0 / e.real_trace()).collect();
    let dim = effects.first().map(|e| e.dim()).unwrap_or(0);
    let qubits = dim.trailing_zeros() as usize;
    Ok(duals_from_weights(
        effects,
        &weights,
        Provenance::Canonical,
        (0..qubits.max(1)).collect(),
    )?
    .duals)
}

pub fn canonical_frame(povm: &ProductPovm, group: &[usize]) -> Result<DualFrame> {
    let effects = povm.group_effects(group)?;
    let weights: Vec<f64> = effects.iter().map(|e| 1.0 / e.real_trace()).collect();
    duals_from_weights(&effects, &weights, Provenance::Canonical, group.to_vec())
}

/// Weights `1 / max(p_m, floor)`.
pub fn optimal_duals(
    probabilities: &[f64],
    effects: &[HermitianOperator],
    floor: f64,
    provenance: Provenance,
    group: Vec<usize>,
) -> Result<DualFrame> {
    let weights: Vec<f64> = probabilities.iter().map(|&p| 1.0 / p.max(floor)).collect();
    duals_from_weights(effects, &weights, provenance, group)
}

pub fn optimal_frame_for_state(
    sigma: &DensityMatrix,
    povm: &ProductPovm,
    group: &[usize],
    floor: f64,
) -> Result<DualFrame> {
    let effects = povm.group_effects(group)?;
    let p = predicted_probabilities(sigma.matrix(), &effects);
    optimal_duals(&p, &effects, floor, Provenance::Optimal, group.to_vec())
}

/// One dual frame per partition group; the global dual of an outcome string
/// is the tensor product of the group duals.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalDuals {
    partition: Partition,
    frames: Vec<DualFrame>,
}

impl GlobalDuals {
    pub fn new(partition: Partition, frames: Vec<DualFrame>) -> Result<Self> {
        if partition.groups().len() != frames.len()
            || partition
                .groups()
                .iter()
                .zip(&frames)
                .any(|(g, f)| g.as_slice() != f.group())
        {
            return Err(Error::InvalidPartition(
                "frame groups do not match the partition".into(),
            ));
        }
        Ok(Self { partition, frames })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn frames(&self) -> &[DualFrame] {
        &self.frames
    }

    pub fn num_qubits(&self) -> usize {
        self.partition.num_qubits()
    }

    /// Shared label when all frames agree, otherwise "mixed".
    pub fn provenance_label(&self) -> String {
        let first = self.frames[0].provenance().to_string();
        if self
            .frames
            .iter()
            .all(|f| f.provenance().to_string() == first)
        {
            first
        } else {
            "mixed".into()
        }
    }

    /// Dense global dual for a full outcome string (small systems only).
    pub fn global_dual(&self, outcome: &[usize]) -> Result<ComplexMatrix> {
        let mut m = ComplexMatrix::identity(1);
        let mut order = Vec::new();
        for (g, f) in self.partition.groups().iter().zip(&self.frames) {
            let idx: Vec<usize> = g.iter().map(|&q| outcome[q]).collect();
            let dims = vec![
                (f.num_outcomes() as f64).powf(1.0 / g.len() as f64).round() as usize;
                g.len()
            ];
            m = m.kron(f.dual(flatten_outcome(&idx, &dims)));
            order.extend_from_slice(g);
        }
        m.permute_qubits(&order)
    }
}

pub fn canonical_global(povm: &ProductPovm, partition: &Partition) -> Result<GlobalDuals> {
    let frames = partition
        .groups()
        .iter()
        .map(|g| canonical_frame(povm, g))
        .collect::<Result<Vec<_>>>()?;
    GlobalDuals::new(partition.clone(), frames)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Partitioner {
    Greedy,
    Naive,
    Node,
    Edge,
}

impl Partitioner {
    pub fn partition(&self, ds: &Dataset, k: usize) -> Result<Partition> {
        match self {
            Self::Greedy => greedy_partition(ds, k),
            Self::Naive => naive_partition(ds.num_qubits(), k),
            Self::Node => node_order_partition(&mi_matrix(ds)?, k),
            Self::Edge => edge_order_partition(&mi_matrix(ds)?, k),
        }
    }
}

/// Group duals from reconstructed local states of a dataset.
pub fn klo_duals_for_partition(
    ds: &Dataset,
    povm: &ProductPovm,
    partition: &Partition,
    backend: &TomographyBackend,
    floor: f64,
) -> Result<GlobalDuals> {
    if ds.num_shots() == 0 {
        return Err(Error::EmptyDataset);
    }
    let provenance = Provenance::KLocal {
        backend: backend.name().into(),
    };
    let frames = partition
        .groups()
        .par_iter()
        .map(|g| {
            let mt = marginal_counts(ds, g)?;
            let (rec, _) = reconstruct(&mt, povm, backend)?;
            let effects = povm.group_effects(g)?;
            optimal_duals(
                &rec.probabilities(&effects),
                &effects,
                floor,
                provenance.clone(),
                g.clone(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    GlobalDuals::new(partition.clone(), frames)
}

pub fn klo_duals(
    ds: &Dataset,
    povm: &ProductPovm,
    k: usize,
    backend: &TomographyBackend,
    partitioner: Partitioner,
    floor: f64,
) -> Result<GlobalDuals> {
    if ds.num_shots() == 0 {
        return Err(Error::EmptyDataset);
    }
    let partition = partitioner.partition(ds, k)?;
    klo_duals_for_partition(ds, povm, &partition, backend, floor)
}

/// Group-optimal duals built from the exact reduced states.
pub fn exact_local_duals(
    state: &QuantumState,
    povm: &ProductPovm,
    partition: &Partition,
    floor: f64,
) -> Result<GlobalDuals> {
    let frames = partition
        .groups()
        .par_iter()
        .map(|g| optimal_frame_for_state(&reduced_density(state, g)?, povm, g, floor))
        .collect::<Result<Vec<_>>>()?;
    GlobalDuals::new(partition.clone(), frames)
}

/// Greedy partition on exact statistics followed by exact local duals.
pub fn exact_klo_duals(
    state: &QuantumState,
    povm: &ProductPovm,
    k: usize,
    floor: f64,
) -> Result<GlobalDuals> {
    let partition = greedy_partition(&ExactStatistics { state, povm }, k)?;
    exact_local_duals(state, povm, &partition, floor)
}

/// `sum_m p_m Tr[D_m^2] - Tr[rho^2]` for a single frame.
pub fn state_mse(frame: &DualFrame, probabilities: &[f64], rho: &DensityMatrix) -> Result<f64> {
    if probabilities.len() != frame.num_outcomes() {
        return Err(Error::Dimension(format!(
            "{} probabilities for {} duals",
            probabilities.len(),
            frame.num_outcomes()
        )));
    }
    let second: f64 = frame
        .duals()
        .iter()
        .zip(probabilities)
        .map(|(d, &p)| p * d.frobenius_norm().powi(2))
        .sum();
    Ok(second - rho.purity())
}

/// MSE of product duals without enumerating outcome strings:
/// `E[prod_G Tr D_G^2] = Tr[rho (x)_G A_G]` with `A_G = sum_m Pi_m Tr[D_m^2]`.
pub fn global_state_mse(
    duals: &GlobalDuals,
    state: &QuantumState,
    povm: &ProductPovm,
) -> Result<f64> {
    let mut ops = Vec::new();
    for (g, f) in duals.partition().groups().iter().zip(duals.frames()) {
        let effects = povm.group_effects(g)?;
        let dim = 1 << g.len();
        let mut a = ComplexMatrix::zeros(dim, dim);
        for (e, d) in effects.iter().zip(f.duals()) {
            a.add_scaled(d.frobenius_norm().powi(2).into(), e);
        }
        ops.push((g.clone(), a));
    }
    let refs: Vec<(&[usize], &ComplexMatrix)> =
        ops.iter().map(|(g, a)| (g.as_slice(), a)).collect();
    let second = state.expect_product(&refs)?.re;
    Ok(second - state.to_density()?.purity())
}

/// Orthonormal Hermitian basis `P / sqrt(dim)` over Pauli strings.
fn hermitian_basis(qubits: usize) -> Vec<ComplexMatrix> {
    let paulis = pauli_matrices();
    let norm = 1.0 / ((1usize << qubits) as f64).sqrt();
    let mut out = vec![ComplexMatrix::identity(1)];
    for _ in 0..qubits {
        out = out
            .iter()
            .flat_map(|m| paulis.iter().map(move |p| m.kron(p)))
            .collect();
    }
    out.into_iter().map(|m| m.scale_real(norm)).collect()
}

pub const PRODUCT_OPTIMIZER_QUBIT_CAP: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct ProductOptimization {
    pub duals: GlobalDuals,
    /// Objective `sum_m p_m prod_G Tr[D^2]` after each sweep, starting value first.
    pub objective: Vec<f64>,
    pub mse: f64,
}

/// Alternating minimization of the state MSE over products of group-wise
/// valid dual frames. Starts from the group-optimal duals of the exact marginals.
pub fn optimize_product_duals(
    state: &QuantumState,
    povm: &ProductPovm,
    partition: &Partition,
    floor: f64,
) -> Result<ProductOptimization> {
    let n = state.num_qubits();
    if n > PRODUCT_OPTIMIZER_QUBIT_CAP {
        return Err(Error::CapExceeded {
            what: "product optimizer qubit",
            count: n,
            cap: PRODUCT_OPTIMIZER_QUBIT_CAP,
        });
    }
    let d = povm.uniform_outcomes().ok_or_else(|| {
        Error::InvalidPovm("product optimizer needs uniform outcome counts".into())
    })?;
    let start = exact_local_duals(state, povm, partition, floor)?;
    let groups = partition.groups().to_vec();

    // Joint outcome probabilities over the full register, flattened in qubit order.
    let total = d.pow(n as u32);
    let all: Vec<usize> = (0..n).collect();
    let probs: Vec<f64> = ExactStatistics { state, povm }.joint(&all)?;
    let dims = vec![d; n];
    let group_index: Vec<Vec<usize>> = (0..total)
        .map(|flat| {
            let idx = unflatten_outcome(flat, &dims);
            groups
                .iter()
                .map(|g| g.iter().fold(0, |acc, &q| acc * d + idx[q]))
                .collect()
        })
        .collect();

    struct Site {
        effects: Vec<HermitianOperator>,
        basis: Vec<ComplexMatrix>,
        null: DMatrix<f64>,
        coords: DMatrix<f64>,
    }
    let mut sites: Vec<Site> = Vec::new();
    for (g, f) in groups.iter().zip(start.frames()) {
        let effects = povm.group_effects(g)?;
        let basis = hermitian_basis(g.len());
        let m = effects.len();
        let t = DMatrix::from_fn(m, basis.len(), |r, c| {
            effects[r].trace_product(&basis[c]).re
        });
        let null = null_space(&t.transpose());
        let coords = DMatrix::from_fn(m, basis.len(), |r, c| f.dual(r).trace_product(&basis[c]).re);
        sites.push(Site {
            effects,
            basis,
            null,
            coords,
        });
    }

    let squared =
        |s: &Site| -> Vec<f64> { s.coords.row_iter().map(|r| r.norm_squared()).collect() };
    let objective = |sites: &[Site]| -> f64 {
        let sq: Vec<Vec<f64>> = sites.iter().map(squared).collect();
        probs
            .iter()
            .zip(&group_index)
            .map(|(p, gi)| p * gi.iter().zip(&sq).map(|(&m, s)| s[m]).product::<f64>())
            .sum()
    };

    let mut history = vec![objective(&sites)];
    for _ in 0..500 {
        for s in 0..sites.len() {
            let sq: Vec<Vec<f64>> = sites.iter().map(squared).collect();
            let m = sites[s].effects.len();
            let mut c = vec![0.0; m];
            for (p, gi) in probs.iter().zip(&group_index) {
                let others: f64 = gi
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != s)
                    .map(|(j, &mj)| sq[j][mj])
                    .product();
                c[gi[s]] += p * others;
            }
            let site = &mut sites[s];
            let w = DMatrix::from_diagonal(&DVector::from_vec(c));
            let nt_w = site.null.transpose() * &w;
            let normal = &nt_w * &site.null;
            for col in 0..site.coords.ncols() {
                let x = site.coords.column(col).into_owned();
                let rhs = -(&nt_w * &x);
                let y = normal
                    .clone()
                    .pseudo_inverse(1e-14)
                    .map_err(|e| Error::Format(e.to_string()))?
                    * rhs;
                let step = &site.null * y;
                site.coords.set_column(col, &(x + step));
            }
        }
        let value = objective(&sites);
        let prev = *history.last().unwrap();
        history.push(value);
        if prev - value < 1e-10 {
            break;
        }
    }

    let frames = groups
        .iter()
        .zip(&sites)
        .map(|(g, site)| {
            let dim = 1 << g.len();
            let duals = (0..site.effects.len())
                .map(|r| {
                    let mut m = ComplexMatrix::zeros(dim, dim);
                    for (c, b) in site.basis.iter().enumerate() {
                        m.add_scaled(site.coords[(r, c)].into(), b);
                    }
                    HermitianOperator::new(m)
                })
                .collect::<Result<Vec<_>>>()?;
            DualFrame::new(
                g.clone(),
                duals,
                &site.effects,
                Provenance::ProductOptimized,
                None,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let duals = GlobalDuals::new(partition.clone(), frames)?;
    let mse = history.last().unwrap() - state.to_density()?.purity();
    Ok(ProductOptimization {
        duals,
        objective: history,
        mse,
    })
}

/// Orthonormal basis (columns) of the null space of `a`.
fn null_space(a: &DMatrix<f64>) -> DMatrix<f64> {
    let cols = a.ncols();
    let ata = a.transpose() * a;
    let eig = ata.symmetric_eigen();
    let top = eig.eigenvalues.iter().fold(0.0f64, |x, &y| x.max(y.abs()));
    let keep: Vec<usize> = (0..cols)
        .filter(|&i| eig.eigenvalues[i].abs() <= top * 1e-12)
        .collect();
    DMatrix::from_fn(cols, keep.len(), |r, c| eig.eigenvectors[(r, keep[c])])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::ONE;
    use crate::povm::pauli6;
    use crate::states::PureState;

    fn pauli6_kets() -> Vec<[C64; 2]> {
        let h = 0.5f64.sqrt();
        vec![
            [ONE, ZERO],
            [ZERO, ONE],
            [C64::new(h, 0.0), C64::new(h, 0.0)],
            [C64::new(h, 0.0), C64::new(-h, 0.0)],
            [C64::new(h, 0.0), C64::new(0.0, h)],
            [C64::new(h, 0.0), C64::new(0.0, -h)],
        ]
    }

    #[test]
    fn canonical_frame_operator_on_paulis() {
        let p = pauli6();
        let f = frame_operator(p.effects(), &[3.0; 6]).unwrap();
        let [i, x, y, z] = pauli_matrices();
        for (op, s) in [(i, 1.0), (x, 1.0 / 3.0), (y, 1.0 / 3.0), (z, 1.0 / 3.0)] {
            let image = f.matrix.matvec(op.as_slice());
            let want: Vec<C64> = op.as_slice().iter().map(|v| v * s).collect();
            for (a, b) in image.iter().zip(want) {
                assert!((a - b).norm() < 1e-14);
            }
        }
        let opt = frame_operator(p.effects(), &[6.0; 6]).unwrap();
        assert!(opt.matrix.max_abs_diff(&f.matrix.scale_real(2.0)) < 1e-14);
    }

    #[test]
    fn non_ic_frame_is_rejected_at_inversion() {
        let effects = vec![
            HermitianOperator::from_real_diagonal(&[1.0, 0.0]),
            HermitianOperator::from_real_diagonal(&[0.0, 1.0]),
        ];
        let f = frame_operator(&effects, &[1.0, 1.0]).unwrap();
        assert!(matches!(
            f.inverse(DEFAULT_MAX_CONDITION),
            Err(Error::IllConditioned(_))
        ));
        assert!(matches!(
            frame_operator(&effects, &[1.0, 0.0]),
            Err(Error::NonPositiveWeight { index: 1, .. })
        ));
    }

    #[test]
    fn canonical_duals_are_shadow_inverses() {
        let p = pauli6();
        let duals = canonical_duals(p.effects()).unwrap();
        for (d, k) in duals.iter().zip(pauli6_kets()) {
            let want = HermitianOperator::projector(&k)
                .scale(3.0)
                .sub(&ComplexMatrix::identity(2));
            assert!(d.max_abs_diff(&want) < 1e-12);
        }
        assert!(duals[0].max_abs_diff(&ComplexMatrix::from_real_diagonal(&[2.0, -1.0])) < 1e-12);
    }

    #[test]
    fn canonical_group_duals_are_products() {
        let povm = ProductPovm::pauli6(2);
        let local = canonical_duals(pauli6().effects()).unwrap();
        let frame = canonical_frame(&povm, &[0, 1]).unwrap();
        for a in 0..6 {
            for b in 0..6 {
                let want = local[a].kron(&local[b]);
                assert!(frame.dual(a * 6 + b).max_abs_diff(&want) < 1e-11);
            }
        }
    }

    #[test]
    fn maximally_mixed_optimal_equals_canonical() {
        let p = pauli6();
        let opt = optimal_duals(
            &[1.0 / 6.0; 6],
            p.effects(),
            DEFAULT_FLOOR,
            Provenance::Optimal,
            vec![0],
        )
        .unwrap();
        let can = canonical_duals(p.effects()).unwrap();
        for (a, b) in opt.duals().iter().zip(&can) {
            assert!(a.max_abs_diff(b) < 1e-12);
        }
    }

    #[test]
    fn floored_weights_remain_valid() {
        let p = pauli6();
        let zero = DensityMatrix::new(HermitianOperator::from_real_diagonal(&[1.0, 0.0])).unwrap();
        let frame =
            optimal_frame_for_state(&zero, &ProductPovm::pauli6(1), &[0], DEFAULT_FLOOR).unwrap();
        assert!(frame.residual() <= DUALITY_TOLERANCE);
        let f = duality_residual(frame.duals(), p.effects()).unwrap();
        assert!(f <= DUALITY_TOLERANCE);
    }

    #[test]
    fn arbitrary_weights_remain_valid() {
        let povm = ProductPovm::pauli6(2);
        let effects = povm.group_effects(&[0, 1]).unwrap();
        let weights: Vec<f64> = (0..36).map(|i| 0.1 + ((i * 37) % 17) as f64).collect();
        let frame =
            duals_from_weights(&effects, &weights, Provenance::Optimal, vec![0, 1]).unwrap();
        assert!(frame.residual() <= DUALITY_TOLERANCE);
    }

    #[test]
    fn corrupted_duals_are_rejected() {
        let p = pauli6();
        let mut duals = canonical_duals(p.effects()).unwrap();
        duals[0] = duals[0].scale(1.01);
        assert!(matches!(
            DualFrame::new(vec![0], duals, p.effects(), Provenance::Canonical, None),
            Err(Error::DualityViolated(_))
        ));
    }

    #[test]
    fn single_qubit_mse_examples() {
        let povm = ProductPovm::pauli6(1);
        let can = canonical_frame(&povm, &[0]).unwrap();
        let mm = DensityMatrix::maximally_mixed(1);
        let mse = state_mse(&can, &[1.0 / 6.0; 6], &mm).unwrap();
        assert!((mse - 4.5).abs() < 1e-12);

        let rho = DensityMatrix::new(
            HermitianOperator::new(
                ComplexMatrix::from_vec(
                    2,
                    2,
                    vec![
                        C64::new(0.7, 0.0),
                        C64::new(0.1, -0.2),
                        C64::new(0.1, 0.2),
                        C64::new(0.3, 0.0),
                    ],
                )
                .unwrap(),
            )
            .unwrap(),
        )
        .unwrap();
        let probs = predicted_probabilities(rho.matrix(), pauli6().effects());
        let opt = optimal_frame_for_state(&rho, &povm, &[0], DEFAULT_FLOOR).unwrap();
        assert!(
            state_mse(&opt, &probs, &rho).unwrap()
                <= state_mse(&can, &probs, &rho).unwrap() + 1e-12
        );
    }

    #[test]
    fn product_state_mse_independent_of_grouping() {
        let h = 0.5f64.sqrt();
        let s: QuantumState =
            PureState::product(&[[ONE, ZERO], [C64::new(h, 0.0), C64::new(0.0, h)]])
                .unwrap()
                .into();
        let povm = ProductPovm::pauli6(2);
        let one = exact_local_duals(&s, &povm, &Partition::singletons(2), DEFAULT_FLOOR).unwrap();
        let two = exact_local_duals(&s, &povm, &Partition::single_group(2), DEFAULT_FLOOR).unwrap();
        let a = global_state_mse(&one, &s, &povm).unwrap();
        let b = global_state_mse(&two, &s, &povm).unwrap();
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }

    #[test]
    fn product_optimizer_on_maximally_mixed_stays_canonical() {
        let s: QuantumState = DensityMatrix::maximally_mixed(2).into();
        let povm = ProductPovm::pauli6(2);
        let out =
            optimize_product_duals(&s, &povm, &Partition::singletons(2), DEFAULT_FLOOR).unwrap();
        let can = canonical_duals(pauli6().effects()).unwrap();
        for f in out.duals.frames() {
            for (a, b) in f.duals().iter().zip(&can) {
                assert!(a.max_abs_diff(b) < 1e-8);
            }
        }
        assert!((out.mse - (4.5f64 + 0.5).powi(2) + 0.25).abs() < 1e-8);
    }

    #[test]
    fn product_optimizer_is_monotone_and_dominates_start() {
        let s: QuantumState = PureState::weighted_bell(0.6).unwrap().into();
        let povm = ProductPovm::pauli6(2);
        let part = Partition::singletons(2);
        let out = optimize_product_duals(&s, &povm, &part, DEFAULT_FLOOR).unwrap();
        for w in out.objective.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        let start = exact_local_duals(&s, &povm, &part, DEFAULT_FLOOR).unwrap();
        let start_mse = global_state_mse(&start, &s, &povm).unwrap();
        assert!(out.mse <= start_mse + 1e-10);
        let check = global_state_mse(&out.duals, &s, &povm).unwrap();
        assert!((check - out.mse).abs() < 1e-9);
    }

    #[test]
    fn global_dual_matches_kron() {
        let povm = ProductPovm::pauli6(3);
        let p = Partition::new(3, vec![vec![0, 2], vec![1]]).unwrap();
        let g = canonical_global(&povm, &p).unwrap();
        let local = canonical_duals(pauli6().effects()).unwrap();
        let dense = g.global_dual(&[1, 4, 2]).unwrap();
        let want = local[1].kron(&local[4]).kron(&local[2]);
        assert!(dense.max_abs_diff(&want) < 1e-11);
    }

    #[test]
    fn floored_ghz_groups_keep_tight_duality() {
        for n in [3usize, 4] {
            let s: QuantumState = PureState::ghz(n).into();
            let povm = ProductPovm::pauli6(n);
            let g =
                exact_local_duals(&s, &povm, &Partition::single_group(n), DEFAULT_FLOOR).unwrap();
            assert!(
                g.frames()[0].residual() < 1e-9,
                "n={n} residual {}",
                g.frames()[0].residual()
            );
        }
    }
}
