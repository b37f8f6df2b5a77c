//! Local POVMs and their products over qubit registers.

use crate::algebra::{hermitian_eig, ComplexMatrix, HermitianOperator, C64, ZERO};
use crate::error::{Error, Result};
use nalgebra::DMatrix;

pub const PAULI6_ID: &str = "pauli6";

/// Informationally complete single-qubit POVM.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalPovm {
    id: String,
    effects: Vec<HermitianOperator>,
    /// `Some(v)` when the effect is exactly `|v><v|`.
    rank_one: Vec<Option<[C64; 2]>>,
}

impl LocalPovm {
    pub fn new(id: impl Into<String>, effects: Vec<HermitianOperator>) -> Result<Self> {
        if effects.len() < 4 {
            return Err(Error::InvalidPovm(format!(
                "{} effects cannot span the qubit operator space",
                effects.len()
            )));
        }
        if let Some(e) = effects.iter().find(|e| e.dim() != 2) {
            return Err(Error::InvalidPovm(format!(
                "effect of dimension {} on a qubit",
                e.dim()
            )));
        }
        let mut total = ComplexMatrix::zeros(2, 2);
        for (m, e) in effects.iter().enumerate() {
            if hermitian_eig(e).values[0] < -1e-12 {
                return Err(Error::InvalidPovm(format!("effect {m} is not PSD")));
            }
            total = total.add(e);
        }
        let defect = total.max_abs_diff(&ComplexMatrix::identity(2));
        if defect > 1e-12 {
            return Err(Error::InvalidPovm(format!(
                "effects sum to identity only within {defect:.3e}"
            )));
        }
        let rank = completeness_rank(&effects);
        if rank != 4 {
            return Err(Error::InvalidPovm(format!(
                "effects span a space of dimension {rank}, not 4"
            )));
        }
        let rank_one = effects.iter().map(rank_one_factor).collect();
        Ok(Self {
            id: id.into(),
            effects,
            rank_one,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn num_outcomes(&self) -> usize {
        self.effects.len()
    }

    pub fn effects(&self) -> &[HermitianOperator] {
        &self.effects
    }

    pub fn effect(&self, m: usize) -> Result<&HermitianOperator> {
        self.effects.get(m).ok_or(Error::OutcomeOutOfRange {
            index: m,
            d: self.effects.len(),
        })
    }

    pub(crate) fn rank_one_vector(&self, m: usize) -> Option<&[C64; 2]> {
        self.rank_one.get(m).and_then(|v| v.as_ref())
    }
}

fn rank_one_factor(e: &HermitianOperator) -> Option<[C64; 2]> {
    let eig = hermitian_eig(e);
    if eig.values[0].abs() > 1e-14 {
        return None;
    }
    let v = eig.column(1);
    let s = eig.values[1].max(0.0).sqrt();
    Some([v[0] * s, v[1] * s])
}

/// Dimension of the real span of the vectorized effects (4 means IC for a qubit).
pub fn completeness_rank(effects: &[HermitianOperator]) -> usize {
    if effects.is_empty() {
        return 0;
    }
    let len = effects[0].as_slice().len();
    // Hermitian operators: real and imaginary parts give a real embedding.
    let m = DMatrix::from_fn(effects.len(), 2 * len, |r, c| {
        let x = effects[r].as_slice()[c % len];
        if c < len {
            x.re
        } else {
            x.im
        }
    });
    m.svd(false, false).rank(1e-10)
}

/// The six-outcome Pauli POVM, `{|0>,|1>,|+>,|->,|+i>,|-i>}` projectors scaled by 1/3.
pub fn pauli6() -> LocalPovm {
    let h = 1.0 / 2f64.sqrt();
    let r = |x: f64| C64::new(x, 0.0);
    let kets: [[C64; 2]; 6] = [
        [r(1.0), ZERO],
        [ZERO, r(1.0)],
        [r(h), r(h)],
        [r(h), r(-h)],
        [r(h), C64::new(0.0, h)],
        [r(h), C64::new(0.0, -h)],
    ];
    let effects = kets
        .iter()
        .map(|k| HermitianOperator::projector(k).scale(1.0 / 3.0))
        .collect();
    LocalPovm::new(PAULI6_ID, effects).expect("Pauli-6 is a valid IC POVM")
}

/// Tensor product of local POVMs, one per qubit.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductPovm {
    locals: Vec<LocalPovm>,
}

impl ProductPovm {
    pub fn new(locals: Vec<LocalPovm>) -> Self {
        Self { locals }
    }

    pub fn uniform(n: usize, local: LocalPovm) -> Self {
        Self {
            locals: vec![local; n],
        }
    }

    pub fn pauli6(n: usize) -> Self {
        Self::uniform(n, pauli6())
    }

    pub fn num_qubits(&self) -> usize {
        self.locals.len()
    }

    pub fn local(&self, q: usize) -> &LocalPovm {
        &self.locals[q]
    }

    /// Outcomes per qubit when uniform across qubits.
    pub fn uniform_outcomes(&self) -> Option<usize> {
        let d = self.locals.first()?.num_outcomes();
        self.locals
            .iter()
            .all(|l| l.num_outcomes() == d)
            .then_some(d)
    }

    /// Identifier shared by all qubits, if uniform.
    pub fn id(&self) -> Option<&str> {
        let id = self.locals.first()?.id();
        self.locals.iter().all(|l| l.id() == id).then_some(id)
    }

    pub fn group_outcome_count(&self, group: &[usize]) -> usize {
        group
            .iter()
            .map(|&q| self.locals[q].num_outcomes())
            .product()
    }

    fn check_group(&self, group: &[usize]) -> Result<()> {
        let n = self.num_qubits();
        if let Some(&q) = group.iter().find(|&&q| q >= n) {
            return Err(Error::QubitOutOfRange { index: q, n });
        }
        Ok(())
    }

    /// `Pi_{idx[0]} (x) Pi_{idx[1]} (x) ...` over the group, in group order.
    pub fn group_effect(&self, group: &[usize], idx: &[usize]) -> Result<HermitianOperator> {
        self.check_group(group)?;
        if group.len() != idx.len() {
            return Err(Error::Dimension(format!(
                "{} outcome indices for a group of {}",
                idx.len(),
                group.len()
            )));
        }
        let mut out = HermitianOperator::identity(1);
        for (&q, &m) in group.iter().zip(idx) {
            out = out.kron(self.locals[q].effect(m)?);
        }
        Ok(out)
    }

    /// All group effects in flattened row-major outcome order.
    pub fn group_effects(&self, group: &[usize]) -> Result<Vec<HermitianOperator>> {
        self.check_group(group)?;
        let mut out = vec![HermitianOperator::identity(1)];
        for &q in group {
            let local = &self.locals[q];
            out = out
                .iter()
                .flat_map(|prefix| local.effects().iter().map(move |e| prefix.kron(e)))
                .collect();
        }
        Ok(out)
    }
}

/// Splits a flattened group outcome into per-qubit indices (first qubit most significant).
pub fn unflatten_outcome(mut flat: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for (slot, &d) in out.iter_mut().zip(dims).rev() {
        *slot = flat % d;
        flat /= d;
    }
    out
}

pub fn flatten_outcome(idx: &[usize], dims: &[usize]) -> usize {
    idx.iter().zip(dims).fold(0, |acc, (&m, &d)| acc * d + m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pauli6_effects() {
        let p = pauli6();
        assert_eq!(p.num_outcomes(), 6);
        let e0 = ComplexMatrix::from_real_diagonal(&[1.0 / 3.0, 0.0]);
        assert!(p.effects()[0].max_abs_diff(&e0) < 1e-15);
        let mut total = ComplexMatrix::zeros(2, 2);
        for e in p.effects() {
            total = total.add(e);
            let ev = hermitian_eig(e).values;
            assert!(ev[0].abs() < 1e-14 && (ev[1] - 1.0 / 3.0).abs() < 1e-14);
        }
        assert!(total.max_abs_diff(&ComplexMatrix::identity(2)) < 1e-14);
    }

    #[test]
    fn pauli6_effects_are_rank_one() {
        let p = pauli6();
        for m in 0..6 {
            let v = p.rank_one_vector(m).unwrap();
            let rebuilt = HermitianOperator::projector(v);
            assert!(rebuilt.max_abs_diff(&p.effects()[m]) < 1e-14);
        }
    }

    #[test]
    fn completeness_ranks() {
        let p = pauli6();
        assert_eq!(completeness_rank(p.effects()), 4);
        let z_only = [
            HermitianOperator::from_real_diagonal(&[1.0, 0.0]),
            HermitianOperator::from_real_diagonal(&[0.0, 1.0]),
        ];
        assert_eq!(completeness_rank(&z_only), 2);
        let doubled: Vec<_> = p
            .effects()
            .iter()
            .chain(p.effects())
            .map(|e| e.scale(0.5))
            .collect();
        assert_eq!(completeness_rank(&doubled), 4);
    }

    #[test]
    fn non_ic_povm_is_rejected() {
        let z_basis = vec![
            HermitianOperator::from_real_diagonal(&[0.5, 0.0]),
            HermitianOperator::from_real_diagonal(&[0.5, 0.0]),
            HermitianOperator::from_real_diagonal(&[0.0, 0.5]),
            HermitianOperator::from_real_diagonal(&[0.0, 0.5]),
        ];
        assert!(matches!(
            LocalPovm::new("z", z_basis),
            Err(Error::InvalidPovm(_))
        ));
    }

    #[test]
    fn group_effects_match_definition() {
        let povm = ProductPovm::pauli6(3);
        let p = pauli6();
        assert_eq!(povm.group_effect(&[0], &[1]).unwrap(), p.effects()[1]);
        let e = povm.group_effect(&[0, 1], &[0, 2]).unwrap();
        assert!(e.max_abs_diff(&p.effects()[0].kron(&p.effects()[2])) < 1e-15);
        assert!((e.real_trace() - 1.0 / 9.0).abs() < 1e-15);
        assert!(matches!(
            povm.group_effect(&[0], &[6]),
            Err(Error::OutcomeOutOfRange { index: 6, d: 6 })
        ));
        assert!(povm.group_effect(&[3], &[0]).is_err());
    }

    #[test]
    fn group_effects_resolve_identity() {
        let povm = ProductPovm::pauli6(3);
        for k in 1..=3 {
            let group: Vec<usize> = (0..k).collect();
            let effects = povm.group_effects(&group).unwrap();
            assert_eq!(effects.len(), 6usize.pow(k as u32));
            let mut total = ComplexMatrix::zeros(1 << k, 1 << k);
            for e in &effects {
                assert!((e.real_trace() - 3f64.powi(-(k as i32))).abs() < 1e-14);
                total = total.add(e);
            }
            assert!(total.max_abs_diff(&ComplexMatrix::identity(1 << k)) < 1e-10);
        }
    }

    #[test]
    fn flattened_order_matches_group_effect() {
        let povm = ProductPovm::pauli6(2);
        let effects = povm.group_effects(&[0, 1]).unwrap();
        for (flat, e) in effects.iter().enumerate() {
            let idx = unflatten_outcome(flat, &[6, 6]);
            assert_eq!(flatten_outcome(&idx, &[6, 6]), flat);
            assert_eq!(*e, povm.group_effect(&[0, 1], &idx).unwrap());
        }
    }
}
