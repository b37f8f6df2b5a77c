//! Seeded shot simulation and outcome count tables.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::algebra::{ComplexMatrix, C64, ZERO};
use crate::error::{Error, Result};
use crate::povm::{LocalPovm, ProductPovm};
use crate::states::{DenseLimits, QuantumState};

pub const DEFAULT_MARGINAL_CAP: usize = 8;

/// Shot records stored shot-major: `records[s * n + q]` is qubit `q` of shot `s`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    n: usize,
    d: usize,
    seed: u64,
    povm_id: String,
    records: Vec<u8>,
}

impl Dataset {
    pub fn new(
        n: usize,
        d: usize,
        seed: u64,
        povm_id: impl Into<String>,
        records: Vec<u8>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::Dimension("dataset with zero qubits".into()));
        }
        if d == 0 || d > u8::MAX as usize + 1 {
            return Err(Error::Dimension(format!("{d} outcomes per qubit")));
        }
        if records.len() % n != 0 {
            return Err(Error::Dimension(format!(
                "{} record bytes is not a multiple of n = {n}",
                records.len()
            )));
        }
        if let Some(&bad) = records.iter().find(|&&m| m as usize >= d) {
            return Err(Error::OutcomeOutOfRange {
                index: bad as usize,
                d,
            });
        }
        Ok(Self {
            n,
            d,
            seed,
            povm_id: povm_id.into(),
            records,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn outcomes_per_qubit(&self) -> usize {
        self.d
    }

    pub fn num_shots(&self) -> usize {
        self.records.len() / self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn povm_id(&self) -> &str {
        &self.povm_id
    }

    pub fn records(&self) -> &[u8] {
        &self.records
    }

    pub fn shot(&self, s: usize) -> &[u8] {
        &self.records[s * self.n..(s + 1) * self.n]
    }

    pub fn shots(&self) -> impl Iterator<Item = &[u8]> {
        self.records.chunks_exact(self.n)
    }
}

/// Counts of the joint outcome on `group`, flattened row-major in group order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MarginalTable {
    pub group: Vec<usize>,
    pub d: usize,
    pub counts: Vec<u64>,
    pub shots: u64,
}

impl MarginalTable {
    pub fn frequencies(&self) -> Vec<f64> {
        let s = self.shots.max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / s).collect()
    }

    /// Sums out every group member not listed in `keep` (given as qubit indices).
    pub fn marginalize(&self, keep: &[usize]) -> Result<MarginalTable> {
        let positions: Vec<usize> = keep
            .iter()
            .map(|q| {
                self.group
                    .iter()
                    .position(|g| g == q)
                    .ok_or(Error::QubitOutOfRange {
                        index: *q,
                        n: self.group.len(),
                    })
            })
            .collect::<Result<_>>()?;
        let k = self.group.len();
        let mut counts = vec![0u64; self.d.pow(keep.len() as u32)];
        let mut digits = vec![0usize; k];
        for (flat, &c) in self.counts.iter().enumerate() {
            let mut x = flat;
            for slot in digits.iter_mut().rev() {
                *slot = x % self.d;
                x /= self.d;
            }
            let j = positions.iter().fold(0, |acc, &p| acc * self.d + digits[p]);
            counts[j] += c;
        }
        Ok(MarginalTable {
            group: keep.to_vec(),
            d: self.d,
            counts,
            shots: self.shots,
        })
    }
}

pub fn marginal_counts(ds: &Dataset, group: &[usize]) -> Result<MarginalTable> {
    marginal_counts_capped(ds, group, DEFAULT_MARGINAL_CAP)
}

pub fn marginal_counts_capped(ds: &Dataset, group: &[usize], cap: usize) -> Result<MarginalTable> {
    if group.len() > cap {
        return Err(Error::GroupTooLarge {
            size: group.len(),
            cap,
        });
    }
    let n = ds.num_qubits();
    for (i, &q) in group.iter().enumerate() {
        if q >= n {
            return Err(Error::QubitOutOfRange { index: q, n });
        }
        if group[..i].contains(&q) {
            return Err(Error::InvalidPartition(format!("qubit {q} repeated")));
        }
    }
    let d = ds.outcomes_per_qubit();
    let mut counts = vec![0u64; d.pow(group.len() as u32)];
    for shot in ds.shots() {
        let j = group.iter().fold(0, |acc, &q| acc * d + shot[q] as usize);
        counts[j] += 1;
    }
    Ok(MarginalTable {
        group: group.to_vec(),
        d,
        counts,
        shots: ds.num_shots() as u64,
    })
}

/// Independent generator for shot `s`; identical regardless of scheduling.
pub fn shot_rng(seed: u64, s: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s);
    rng
}

pub fn sample_shots(
    state: &QuantumState,
    povm: &ProductPovm,
    shots: usize,
    seed: u64,
) -> Result<Dataset> {
    sample_shots_with_limits(state, povm, shots, seed, &DenseLimits::default())
}

pub fn sample_shots_with_limits(
    state: &QuantumState,
    povm: &ProductPovm,
    shots: usize,
    seed: u64,
    limits: &DenseLimits,
) -> Result<Dataset> {
    let n = state.num_qubits();
    if povm.num_qubits() != n {
        return Err(Error::Dimension(format!(
            "state on {n} qubits, POVM on {}",
            povm.num_qubits()
        )));
    }
    state.check_limits(limits)?;
    let d = povm
        .uniform_outcomes()
        .ok_or_else(|| Error::InvalidPovm("datasets require equal outcome counts".into()))?;
    let povm_id = povm
        .id()
        .ok_or_else(|| Error::InvalidPovm("datasets require one POVM on every qubit".into()))?
        .to_string();

    let pure_ok = (0..n).all(|q| {
        let l = povm.local(q);
        (0..l.num_outcomes()).all(|m| l.rank_one_vector(m).is_some())
    });
    let sampler: Box<dyn Fn(&mut ChaCha8Rng, &mut [u8]) -> Option<()> + Sync> = match state {
        QuantumState::Pure(s) if pure_ok => {
            let amps = s.amplitudes().to_vec();
            let locals: Vec<&LocalPovm> = (0..n).map(|q| povm.local(q)).collect();
            Box::new(move |rng, out| sample_pure(&amps, &locals, rng, out))
        }
        QuantumState::Block(b) => {
            let blocks: Vec<(Vec<usize>, ComplexMatrix, Vec<&LocalPovm>)> = b
                .partition()
                .groups()
                .iter()
                .zip(b.blocks())
                .map(|(g, rho)| {
                    (
                        g.clone(),
                        rho.matrix().matrix().clone(),
                        g.iter().map(|&q| povm.local(q)).collect(),
                    )
                })
                .collect();
            Box::new(move |rng, out| {
                let mut local = [0u8; 64];
                for (g, rho, locals) in &blocks {
                    let buf = &mut local[..g.len()];
                    sample_mixed(rho, locals, rng, buf)?;
                    for (&q, &m) in g.iter().zip(buf.iter()) {
                        out[q] = m;
                    }
                }
                Some(())
            })
        }
        other => {
            let rho = other.to_density()?.matrix().matrix().clone();
            let locals: Vec<&LocalPovm> = (0..n).map(|q| povm.local(q)).collect();
            Box::new(move |rng, out| sample_mixed(&rho, &locals, rng, out))
        }
    };

    let mut records = vec![0u8; shots * n];
    records
        .par_chunks_mut(n)
        .enumerate()
        .try_for_each(|(s, out)| {
            let mut rng = shot_rng(seed, s as u64);
            sampler(&mut rng, out).ok_or(Error::ZeroNormCollapse(s))
        })?;
    Dataset::new(n, d, seed, povm_id, records)
}

fn draw(probs: &[f64], rng: &mut ChaCha8Rng) -> Option<usize> {
    let total: f64 = probs.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return None;
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = None;
    for (m, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = Some(m);
        if u < acc {
            return last;
        }
    }
    last
}

fn qubit_probabilities(rho: [[C64; 2]; 2], local: &LocalPovm, probs: &mut Vec<f64>) {
    probs.clear();
    for e in local.effects() {
        let mut p = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                p += (e[(a, b)] * rho[b][a]).re;
            }
        }
        probs.push(p.max(0.0));
    }
}

/// Sequential measurement of a statevector; qubit order is the slice order of `locals`.
fn sample_pure(
    amps: &[C64],
    locals: &[&LocalPovm],
    rng: &mut ChaCha8Rng,
    out: &mut [u8],
) -> Option<()> {
    let mut psi = amps.to_vec();
    let mut probs = Vec::with_capacity(8);
    for (q, local) in locals.iter().enumerate() {
        let half = psi.len() / 2;
        let (lo, hi) = psi.split_at(half);
        let mut rho = [[ZERO; 2]; 2];
        for (x, y) in lo.iter().zip(hi) {
            rho[0][0] += x * x.conj();
            rho[0][1] += x * y.conj();
            rho[1][0] += y * x.conj();
            rho[1][1] += y * y.conj();
        }
        qubit_probabilities(rho, local, &mut probs);
        let m = draw(&probs, rng)?;
        out[q] = m as u8;
        let v = local.rank_one_vector(m)?;
        let (c0, c1) = (v[0].conj(), v[1].conj());
        let rest: Vec<C64> = lo.iter().zip(hi).map(|(x, y)| c0 * x + c1 * y).collect();
        let norm = rest.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 1e-300) {
            return None;
        }
        psi = rest.into_iter().map(|a| a / norm).collect();
    }
    Some(())
}

/// Sequential measurement of a density matrix; qubit order is the slice order of `locals`.
fn sample_mixed(
    rho: &ComplexMatrix,
    locals: &[&LocalPovm],
    rng: &mut ChaCha8Rng,
    out: &mut [u8],
) -> Option<()> {
    let mut cur = rho.clone();
    let mut probs = Vec::with_capacity(8);
    for (q, local) in locals.iter().enumerate() {
        let half = cur.rows() / 2;
        let mut red = [[ZERO; 2]; 2];
        for (a, row) in red.iter_mut().enumerate() {
            for (b, slot) in row.iter_mut().enumerate() {
                *slot = (0..half).map(|r| cur[(a * half + r, b * half + r)]).sum();
            }
        }
        qubit_probabilities(red, local, &mut probs);
        let m = draw(&probs, rng)?;
        out[q] = m as u8;
        let e = local.effects()[m].matrix();
        // Tr_q[(E (x) I) rho] / p
        let mut next = ComplexMatrix::zeros(half, half);
        for a in 0..2 {
            for b in 0..2 {
                let w = e[(b, a)];
                if w == ZERO {
                    continue;
                }
                for r in 0..half {
                    for c in 0..half {
                        next[(r, c)] += w * cur[(a * half + r, b * half + c)];
                    }
                }
            }
        }
        let p = next.trace().re;
        if !(p > 1e-300) {
            return None;
        }
        cur = next.scale_real(1.0 / p);
    }
    Some(())
}
