//! Small end-to-end experiments: the two-qubit ZZ toy sweep and exact
//! variance tables for a Hamiltonian across dual constructions.

use serde::{Deserialize, Serialize};

use crate::correlations::{greedy_partition, ExactStatistics, Partition};
use crate::error::Result;
use crate::estimation::{exact_variance, PauliObservable};
use crate::frames::{
    canonical_global, exact_local_duals, global_state_mse, optimize_product_duals, GlobalDuals,
};
use crate::povm::ProductPovm;
use crate::states::{DensityMatrix, PureState, QuantumState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ToyFamily {
    /// `sqrt(1 - q^2)|00> + q|11>`
    Pure,
    /// `(1 - q)|00><00| + q|11><11|`
    Mixed,
}

impl ToyFamily {
    pub fn state(&self, q: f64) -> Result<QuantumState> {
        Ok(match self {
            Self::Pure => PureState::weighted_bell(q)?.into(),
            Self::Mixed => DensityMatrix::classical_mixture(q)?.into(),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Pure => "pure",
            Self::Mixed => "mixed",
        }
    }
}

impl std::str::FromStr for ToyFamily {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pure" => Ok(Self::Pure),
            "mixed" => Ok(Self::Mixed),
            _ => Err(crate::Error::Format(format!(
                "unknown toy family {s:?} (pure, mixed)"
            ))),
        }
    }
}

/// Var[ZZ] and state MSE of one dual construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyValue {
    pub var_zz: f64,
    pub mse: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyPoint {
    pub q: f64,
    pub canonical: ToyValue,
    pub one_lo: ToyValue,
    pub optimized_one_local: ToyValue,
    pub two_lo: ToyValue,
}

pub fn toy_point(family: ToyFamily, q: f64, floor: f64) -> Result<ToyPoint> {
    let state = family.state(q)?;
    let povm = ProductPovm::pauli6(2);
    let zz = PauliObservable::parse_terms(&[(1.0, "ZZ")])?;
    let value = |duals: &GlobalDuals| -> Result<ToyValue> {
        Ok(ToyValue {
            var_zz: exact_variance(&state, &povm, duals, &zz)?.variance,
            mse: global_state_mse(duals, &state, &povm)?,
        })
    };
    let singles = Partition::singletons(2);
    let optimized = optimize_product_duals(&state, &povm, &singles, floor)?;
    Ok(ToyPoint {
        q,
        canonical: value(&canonical_global(&povm, &singles)?)?,
        one_lo: value(&exact_local_duals(&state, &povm, &singles, floor)?)?,
        optimized_one_local: value(&optimized.duals)?,
        two_lo: value(&exact_local_duals(
            &state,
            &povm,
            &Partition::single_group(2),
            floor,
        )?)?,
    })
}

/// `points` evenly spaced values of q over [0, 1], endpoints included.
pub fn toy_sweep(family: ToyFamily, points: usize, floor: f64) -> Result<Vec<ToyPoint>> {
    let steps = points.max(2) - 1;
    (0..=steps)
        .map(|i| toy_point(family, i as f64 / steps as f64, floor))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    /// "canonical" or "k-LO"
    pub method: String,
    pub k: usize,
    pub partition: Partition,
    /// Identity coefficient kept in the estimator.
    pub variance_with_identity: f64,
    pub variance_without_identity: f64,
}

/// Exact single-shot variances of `obs` on `state` with canonical duals and
/// with k-LO duals built from exact reduced states on greedy partitions.
pub fn benchmark(
    state: &QuantumState,
    obs: &PauliObservable,
    ks: &[usize],
    floor: f64,
) -> Result<Vec<BenchmarkRow>> {
    let n = state.num_qubits();
    let povm = ProductPovm::pauli6(n);
    let bare = obs.without_identity();
    let row = |method: String, k: usize, duals: GlobalDuals| -> Result<BenchmarkRow> {
        Ok(BenchmarkRow {
            method,
            k,
            partition: duals.partition().clone(),
            variance_with_identity: exact_variance(state, &povm, &duals, obs)?.variance,
            variance_without_identity: exact_variance(state, &povm, &duals, &bare)?.variance,
        })
    };
    let mut rows = vec![row(
        "canonical".into(),
        1,
        canonical_global(&povm, &Partition::singletons(n))?,
    )?];
    for &k in ks {
        let partition = greedy_partition(&ExactStatistics { state, povm: &povm }, k)?;
        rows.push(row(
            format!("{k}-LO"),
            k,
            exact_local_duals(state, &povm, &partition, floor)?,
        )?);
    }
    Ok(rows)
}
