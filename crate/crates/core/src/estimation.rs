//! Pauli observables, shot coefficients, estimates and variances.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{pauli_matrices, ComplexMatrix};
use crate::error::{Error, Result};
use crate::frames::GlobalDuals;
use crate::povm::ProductPovm;
use crate::sampling::{sample_shots, Dataset};
use crate::states::QuantumState;

pub const DEFAULT_TERM_PAIR_CAP: usize = 1_000_000;

/// Real-weighted sum of Pauli strings; qubit 0 is the first letter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PauliObservable {
    n: usize,
    terms: Vec<(f64, String)>,
}

impl PauliObservable {
    /// Merges duplicate words, keeping first-appearance order.
    pub fn new(terms: Vec<(f64, String)>) -> Result<Self> {
        let n = terms
            .first()
            .map(|t| t.1.len())
            .ok_or_else(|| Error::Format("observable has no terms".into()))?;
        let mut merged: Vec<(f64, String)> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        for (c, w) in terms {
            if w.len() != n || n == 0 {
                return Err(Error::Format(format!(
                    "word {w:?} has length {} (expected {n})",
                    w.len()
                )));
            }
            if let Some(bad) = w.chars().find(|ch| !"IXYZ".contains(*ch)) {
                return Err(Error::Format(format!(
                    "invalid Pauli letter {bad:?} in {w:?}"
                )));
            }
            if !c.is_finite() {
                return Err(Error::Format(format!("non-finite coefficient for {w}")));
            }
            match index.get(&w) {
                Some(&i) => merged[i].0 += c,
                None => {
                    index.insert(w.clone(), merged.len());
                    merged.push((c, w));
                }
            }
        }
        Ok(Self { n, terms: merged })
    }

    pub fn parse_terms(terms: &[(f64, &str)]) -> Result<Self> {
        Self::new(terms.iter().map(|(c, w)| (*c, w.to_string())).collect())
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[(f64, String)] {
        &self.terms
    }

    pub fn identity_coefficient(&self) -> f64 {
        self.terms
            .iter()
            .filter(|(_, w)| is_identity(w))
            .map(|t| t.0)
            .sum()
    }

    /// Copy with the all-identity term removed.
    pub fn without_identity(&self) -> Self {
        Self {
            n: self.n,
            terms: self
                .terms
                .iter()
                .filter(|(_, w)| !is_identity(w))
                .cloned()
                .collect(),
        }
    }

    pub fn to_matrix(&self) -> ComplexMatrix {
        let dim = 1usize << self.n;
        let mut out = ComplexMatrix::zeros(dim, dim);
        for (c, w) in &self.terms {
            out.add_scaled((*c).into(), &word_matrix(w));
        }
        out
    }

    /// `Tr[rho O]`.
    pub fn expectation(&self, state: &QuantumState) -> Result<f64> {
        let paulis = pauli_matrices();
        let mut total = 0.0;
        for (c, w) in &self.terms {
            let ops: Vec<(Vec<usize>, &ComplexMatrix)> = w
                .bytes()
                .enumerate()
                .filter(|(_, b)| *b != b'I')
                .map(|(q, b)| (vec![q], &paulis[letter_index(b)]))
                .collect();
            let refs: Vec<(&[usize], &ComplexMatrix)> =
                ops.iter().map(|(g, a)| (g.as_slice(), *a)).collect();
            total += c * state.expect_product(&refs)?.re;
        }
        Ok(total)
    }
}

fn is_identity(w: &str) -> bool {
    w.bytes().all(|b| b == b'I')
}

fn letter_index(b: u8) -> usize {
    match b {
        b'I' => 0,
        b'X' => 1,
        b'Y' => 2,
        _ => 3,
    }
}

fn word_matrix(w: &str) -> ComplexMatrix {
    let paulis = pauli_matrices();
    w.bytes().fold(ComplexMatrix::identity(1), |m, b| {
        m.kron(&paulis[letter_index(b)])
    })
}

/// Per-group tables of `Tr[D_m P]` for every distinct substring.
#[derive(Clone, Debug)]
pub struct CoefficientCache {
    d: usize,
    groups: Vec<Vec<usize>>,
    /// `tables[g][s]` is indexed by the group's flattened outcome.
    tables: Vec<Vec<Vec<f64>>>,
    /// Per term: coefficient and one table index per group.
    terms: Vec<(f64, Vec<usize>)>,
}

impl CoefficientCache {
    pub fn new(duals: &GlobalDuals, obs: &PauliObservable) -> Result<Self> {
        if duals.num_qubits() != obs.num_qubits() {
            return Err(Error::Dimension(format!(
                "duals on {} qubits, observable on {}",
                duals.num_qubits(),
                obs.num_qubits()
            )));
        }
        let groups = duals.partition().groups().to_vec();
        let mut d = 0;
        let mut tables = Vec::new();
        let mut lookup: Vec<HashMap<String, usize>> = Vec::new();
        for (g, f) in groups.iter().zip(duals.frames()) {
            let outcomes = f.num_outcomes();
            d = (outcomes as f64).powf(1.0 / g.len() as f64).round() as usize;
            let mut subs: Vec<String> = Vec::new();
            let mut map = HashMap::new();
            for (_, w) in obs.terms() {
                let sub: String = g.iter().map(|&q| w.as_bytes()[q] as char).collect();
                if !map.contains_key(&sub) {
                    map.insert(sub.clone(), subs.len());
                    subs.push(sub);
                }
            }
            let table: Vec<Vec<f64>> = subs
                .par_iter()
                .map(|s| {
                    let p = word_matrix(s);
                    f.duals().iter().map(|dm| dm.trace_product(&p).re).collect()
                })
                .collect();
            tables.push(table);
            lookup.push(map);
        }
        let terms = obs
            .terms()
            .iter()
            .map(|(c, w)| {
                let idx = groups
                    .iter()
                    .zip(&lookup)
                    .map(|(g, map)| {
                        let sub: String = g.iter().map(|&q| w.as_bytes()[q] as char).collect();
                        map[&sub]
                    })
                    .collect();
                (*c, idx)
            })
            .collect();
        Ok(Self {
            d,
            groups,
            tables,
            terms,
        })
    }

    pub fn group_outcome(&self, g: usize, shot: &[u8]) -> usize {
        self.groups[g]
            .iter()
            .fold(0, |acc, &q| acc * self.d + shot[q] as usize)
    }

    pub fn omega(&self, shot: &[u8]) -> f64 {
        let mut flat = [0usize; 64];
        let flat: &mut [usize] = if self.groups.len() <= 64 {
            &mut flat[..self.groups.len()]
        } else {
            return self.omega_slow(shot);
        };
        for (g, slot) in flat.iter_mut().enumerate() {
            *slot = self.group_outcome(g, shot);
        }
        self.terms
            .iter()
            .map(|(c, idx)| {
                c * idx
                    .iter()
                    .enumerate()
                    .map(|(g, &s)| self.tables[g][s][flat[g]])
                    .product::<f64>()
            })
            .sum()
    }

    fn omega_slow(&self, shot: &[u8]) -> f64 {
        let flat: Vec<usize> = (0..self.groups.len())
            .map(|g| self.group_outcome(g, shot))
            .collect();
        self.terms
            .iter()
            .map(|(c, idx)| {
                c * idx
                    .iter()
                    .enumerate()
                    .map(|(g, &s)| self.tables[g][s][flat[g]])
                    .product::<f64>()
            })
            .sum()
    }
}

/// `omega = Tr[D_m O]` for one shot.
pub fn omega(shot: &[u8], duals: &GlobalDuals, obs: &PauliObservable) -> Result<f64> {
    Ok(CoefficientCache::new(duals, obs)?.omega(shot))
}

/// Fixed-shape pairwise summation; the result does not depend on scheduling.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 16 {
        return x.iter().sum();
    }
    let mid = x.len() / 2;
    pairwise_sum(&x[..mid]) + pairwise_sum(&x[mid..])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub mean: f64,
    pub sample_variance: f64,
    pub std_error: f64,
    pub shots: usize,
    pub provenance: String,
}

pub fn estimate(
    ds: &Dataset,
    duals: &GlobalDuals,
    obs: &PauliObservable,
) -> Result<EstimateReport> {
    if ds.num_shots() == 0 {
        return Err(Error::EmptyDataset);
    }
    if ds.num_qubits() != duals.num_qubits() {
        return Err(Error::Dimension(format!(
            "dataset on {} qubits, duals on {}",
            ds.num_qubits(),
            duals.num_qubits()
        )));
    }
    let cache = CoefficientCache::new(duals, obs)?;
    let n = ds.num_qubits();
    let omegas: Vec<f64> = ds.records().par_chunks(n).map(|s| cache.omega(s)).collect();
    let squares: Vec<f64> = omegas.par_iter().map(|w| w * w).collect();
    let s = omegas.len() as f64;
    let mean = pairwise_sum(&omegas) / s;
    let sample_variance = (pairwise_sum(&squares) / s - mean * mean).max(0.0);
    Ok(EstimateReport {
        mean,
        sample_variance,
        std_error: (sample_variance / s).sqrt(),
        shots: omegas.len(),
        provenance: duals.provenance_label(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub mean: f64,
    pub second_moment: f64,
    pub variance: f64,
}

/// Single-shot variance `E[omega^2] - E[omega]^2` from
/// `E[omega^2] = sum_{P,Q} c_P c_Q Tr[rho (x)_G A^G_{PQ}]`,
/// `A^G_{PQ} = sum_m Pi^G_m Tr[D^G_m P_G] Tr[D^G_m Q_G]`.
pub fn exact_variance(
    state: &QuantumState,
    povm: &ProductPovm,
    duals: &GlobalDuals,
    obs: &PauliObservable,
) -> Result<VarianceReport> {
    exact_variance_capped(state, povm, duals, obs, DEFAULT_TERM_PAIR_CAP)
}

pub fn exact_variance_capped(
    state: &QuantumState,
    povm: &ProductPovm,
    duals: &GlobalDuals,
    obs: &PauliObservable,
    pair_cap: usize,
) -> Result<VarianceReport> {
    let nt = obs.terms().len();
    let pairs = nt * (nt + 1) / 2;
    if pairs > pair_cap {
        return Err(Error::CapExceeded {
            what: "term pair",
            count: pairs,
            cap: pair_cap,
        });
    }
    if state.num_qubits() != duals.num_qubits() {
        return Err(Error::Dimension(format!(
            "state on {} qubits, duals on {}",
            state.num_qubits(),
            duals.num_qubits()
        )));
    }
    let cache = CoefficientCache::new(duals, obs)?;
    let groups = duals.partition().groups().to_vec();
    let effects: Vec<Vec<ComplexMatrix>> = groups
        .iter()
        .map(|g| {
            Ok(povm
                .group_effects(g)?
                .into_iter()
                .map(|e| e.into_matrix())
                .collect())
        })
        .collect::<Result<_>>()?;

    // A^G for every distinct (substring, substring) pair, keyed symmetric.
    let mut keys: Vec<(usize, usize, usize)> = Vec::new();
    for (_, a) in &cache.terms {
        for (_, b) in &cache.terms {
            for g in 0..groups.len() {
                let (x, y) = (a[g].min(b[g]), a[g].max(b[g]));
                keys.push((g, x, y));
            }
        }
    }
    keys.sort_unstable();
    keys.dedup();
    let blocks: Vec<ComplexMatrix> = keys
        .par_iter()
        .map(|&(g, x, y)| {
            let dim = 1usize << groups[g].len();
            let mut a = ComplexMatrix::zeros(dim, dim);
            let (tx, ty) = (&cache.tables[g][x], &cache.tables[g][y]);
            for ((e, u), v) in effects[g].iter().zip(tx).zip(ty) {
                let w = u * v;
                if w != 0.0 {
                    a.add_scaled(w.into(), e);
                }
            }
            a
        })
        .collect();
    let block_index: HashMap<(usize, usize, usize), usize> =
        keys.iter().enumerate().map(|(i, k)| (*k, i)).collect();

    let pair_list: Vec<(usize, usize)> =
        (0..nt).flat_map(|i| (i..nt).map(move |j| (i, j))).collect();
    let contributions = pair_list
        .par_iter()
        .map(|&(i, j)| {
            let (ci, a) = &cache.terms[i];
            let (cj, b) = &cache.terms[j];
            let ops: Vec<(&[usize], &ComplexMatrix)> = (0..groups.len())
                .map(|g| {
                    let key = (g, a[g].min(b[g]), a[g].max(b[g]));
                    (groups[g].as_slice(), &blocks[block_index[&key]])
                })
                .collect();
            let value = state.expect_product(&ops)?.re;
            let mult = if i == j { 1.0 } else { 2.0 };
            Ok(mult * ci * cj * value)
        })
        .collect::<Result<Vec<f64>>>()?;
    let second_moment = pairwise_sum(&contributions);
    let mean = obs.expectation(state)?;
    Ok(VarianceReport {
        mean,
        second_moment,
        variance: second_moment - mean * mean,
    })
}

/// Seed of repetition `r` in an RMSE run.
pub fn repetition_seed(seed: u64, r: u64) -> u64 {
    // splitmix64 finalizer over the combined input
    let mut z = seed ^ r.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmseReport {
    pub rmse: f64,
    pub truth: f64,
    pub repetitions: usize,
    pub shots: usize,
    pub means: Vec<f64>,
}

pub fn rmse_experiment(
    state: &QuantumState,
    povm: &ProductPovm,
    duals: &GlobalDuals,
    obs: &PauliObservable,
    repetitions: usize,
    shots: usize,
    seed: u64,
) -> Result<RmseReport> {
    let truth = obs.expectation(state)?;
    let means = (0..repetitions)
        .map(|r| {
            let ds = sample_shots(state, povm, shots, repetition_seed(seed, r as u64))?;
            Ok(estimate(&ds, duals, obs)?.mean)
        })
        .collect::<Result<Vec<f64>>>()?;
    let sq: Vec<f64> = means.iter().map(|m| (m - truth).powi(2)).collect();
    Ok(RmseReport {
        rmse: (pairwise_sum(&sq) / repetitions.max(1) as f64).sqrt(),
        truth,
        repetitions,
        shots,
        means,
    })
}
