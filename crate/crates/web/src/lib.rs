//! Browser bindings for the demo page in `www/`.

use kloshadow::algebra::{pauli_matrices, HermitianOperator, C64};
use kloshadow::correlations::{greedy_partition, mi_matrix, Partition};
use kloshadow::experiments::{toy_sweep, ToyFamily};
use kloshadow::frames::{canonical_frame, optimal_frame_for_state, state_mse, DualFrame};
use kloshadow::povm::ProductPovm;
use kloshadow::sampling::sample_shots;
use kloshadow::states::{BlockProductState, DensityMatrix, PureState, QuantumState};
use kloshadow::{Error, Result};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn js(r: Result<String>) -> std::result::Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

/// Var[ZZ] and MSE per dual construction over an even q grid.
#[wasm_bindgen]
pub fn toy_sweep_json(family: &str, points: usize) -> std::result::Result<String, JsError> {
    js(toy(family, points))
}

/// Canonical and optimal single-qubit duals for the state with Bloch vector (x, y, z).
#[wasm_bindgen]
pub fn qubit_duals_json(
    x: f64,
    y: f64,
    z: f64,
    floor: f64,
) -> std::result::Result<String, JsError> {
    js(qubit_duals(x, y, z, floor))
}

/// Samples `pairs` Bell pairs linking qubit `p` with `p + pairs` and learns a partition.
#[wasm_bindgen]
pub fn bell_partition_json(
    pairs: usize,
    shots: usize,
    seed: u32,
    k: usize,
) -> std::result::Result<String, JsError> {
    js(bell_partition(pairs, shots, seed as u64, k))
}

pub fn toy(family: &str, points: usize) -> Result<String> {
    let family: ToyFamily = family.parse()?;
    let rows: Vec<Value> = toy_sweep(
        family,
        points.clamp(2, 201),
        kloshadow::frames::DEFAULT_FLOOR,
    )?
    .into_iter()
    .map(|p| {
        json!({
            "q": p.q,
            "canonical": p.canonical,
            "one_lo": p.one_lo,
            "optimized_one_local": p.optimized_one_local,
            "two_lo": p.two_lo,
        })
    })
    .collect();
    Ok(Value::Array(rows).to_string())
}

fn frame_json(f: &DualFrame, probabilities: &[f64], rho: &DensityMatrix) -> Result<Value> {
    let duals: Vec<Value> = f
        .duals()
        .iter()
        .map(|d| {
            // Pauli components Tr[D P] / 2 are real for Hermitian D
            let p = pauli_matrices();
            Value::from(
                p.iter()
                    .map(|m| d.matrix().trace_product(m).re / 2.0)
                    .collect::<Vec<f64>>(),
            )
        })
        .collect();
    Ok(json!({
        "weights": f.weights(),
        "duals_pauli": duals,
        "mse": state_mse(f, probabilities, rho)?,
    }))
}

pub fn qubit_duals(x: f64, y: f64, z: f64, floor: f64) -> Result<String> {
    let r = (x * x + y * y + z * z).sqrt();
    if r > 1.0 + 1e-12 {
        return Err(Error::InvalidState(format!(
            "Bloch vector length {r} exceeds 1"
        )));
    }
    let [i, px, py, pz] = pauli_matrices();
    let mut m = i.scale_real(0.5);
    for (s, p) in [(x, px), (y, py), (z, pz)] {
        m.add_scaled(C64::new(s / 2.0, 0.0), &p);
    }
    let rho = DensityMatrix::new(HermitianOperator::symmetrized(m)?)?;
    let povm = ProductPovm::pauli6(1);
    let effects = povm.group_effects(&[0])?;
    let probabilities: Vec<f64> = effects.iter().map(|e| e.trace_with(rho.matrix())).collect();
    let canonical = canonical_frame(&povm, &[0])?;
    let optimal = optimal_frame_for_state(&rho, &povm, &[0], floor)?;
    Ok(json!({
        "probabilities": probabilities,
        "canonical": frame_json(&canonical, &probabilities, &rho)?,
        "optimal": frame_json(&optimal, &probabilities, &rho)?,
    })
    .to_string())
}

pub fn bell_partition(pairs: usize, shots: usize, seed: u64, k: usize) -> Result<String> {
    if !(1..=6).contains(&pairs) || !(1..=200_000).contains(&shots) {
        return Err(Error::Format(
            "pairs must be in 1..=6 and shots in 1..=200000".into(),
        ));
    }
    let n = 2 * pairs;
    let truth: Vec<Vec<usize>> = (0..pairs).map(|p| vec![p, p + pairs]).collect();
    let state: QuantumState = BlockProductState::new(
        Partition::new(n, truth.clone())?,
        vec![PureState::bell().to_density(); pairs],
    )?
    .into();
    let ds = sample_shots(&state, &ProductPovm::pauli6(n), shots, seed)?;
    let g = mi_matrix(&ds)?;
    let mi: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| g.weight(i, j)).collect())
        .collect();
    let learned = greedy_partition(&ds, k)?;
    Ok(json!({
        "n": n,
        "mi": mi,
        "truth": truth,
        "partition": learned.groups(),
    })
    .to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_rows() {
        let v: Value = serde_json::from_str(&toy("mixed", 3).unwrap()).unwrap();
        assert_eq!(v.as_array().unwrap().len(), 3);
        assert!((v[1]["q"].as_f64().unwrap() - 0.5).abs() < 1e-12);
        assert!(toy("other", 3).is_err());
    }

    #[test]
    fn optimal_never_worse_than_canonical() {
        let v: Value = serde_json::from_str(&qubit_duals(0.3, -0.2, 0.8, 1e-10).unwrap()).unwrap();
        let c = v["canonical"]["mse"].as_f64().unwrap();
        let o = v["optimal"]["mse"].as_f64().unwrap();
        assert!(o <= c + 1e-12);
        // canonical: Tr[D^2] = 5 for every outcome, minus Tr[rho^2] = (1 + |r|^2) / 2
        assert!((c - (5.0 - (1.0 + 0.77) / 2.0)).abs() < 1e-12);
        assert!(qubit_duals(1.0, 1.0, 0.0, 1e-10).is_err());
    }

    #[test]
    fn scattered_pairs_are_recovered() {
        let v: Value = serde_json::from_str(&bell_partition(3, 20_000, 1, 2).unwrap()).unwrap();
        assert_eq!(v["partition"], v["truth"]);
    }
}
