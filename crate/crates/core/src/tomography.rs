//! Reconstruction of group states from marginal counts.

use serde::{Deserialize, Serialize};

use crate::algebra::{project_to_density, ComplexMatrix, HermitianOperator};
use crate::error::{Error, Result};
use crate::frames::canonical_duals;
use crate::povm::ProductPovm;
use crate::sampling::MarginalTable;
use crate::states::DensityMatrix;

pub const DEFAULT_GROUP_CAP: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadOptions {
    pub max_iters: usize,
    /// Minimum best-residual improvement over one window.
    pub tolerance: f64,
    pub window: usize,
    /// Step size `eta0 / sqrt(t)`.
    pub eta0: f64,
}

impl Default for LadOptions {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            tolerance: 1e-7,
            window: 100,
            eta0: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TomographyBackend {
    FrequencyBias { s_bias: f64 },
    LinearInversionPsd,
    ConstrainedLad(LadOptions),
}

impl TomographyBackend {
    pub fn name(&self) -> &'static str {
        match self {
            Self::FrequencyBias { .. } => "bias",
            Self::LinearInversionPsd => "psd",
            Self::ConstrainedLad(_) => "lad",
        }
    }

    pub fn lad() -> Self {
        Self::ConstrainedLad(LadOptions::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    /// `sum_m |f_m - Tr[sigma Pi_m]|` (or against the returned vector).
    pub residual: f64,
    pub iterations: usize,
    pub backend: TomographyBackend,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Reconstruction {
    State(DensityMatrix),
    Probabilities(Vec<f64>),
}

impl Reconstruction {
    /// Outcome probabilities implied by the reconstruction.
    pub fn probabilities(&self, effects: &[HermitianOperator]) -> Vec<f64> {
        match self {
            Self::State(s) => predicted_probabilities(s.matrix(), effects),
            Self::Probabilities(p) => p.clone(),
        }
    }
}

/// `sum_m f_m D_m`; Hermitian with unit trace but not necessarily PSD.
pub fn linear_inversion(
    frequencies: &[f64],
    duals: &[HermitianOperator],
) -> Result<HermitianOperator> {
    if frequencies.len() != duals.len() || duals.is_empty() {
        return Err(Error::Dimension(format!(
            "{} frequencies for {} duals",
            frequencies.len(),
            duals.len()
        )));
    }
    let dim = duals[0].dim();
    let mut acc = ComplexMatrix::zeros(dim, dim);
    for (&f, d) in frequencies.iter().zip(duals) {
        if f != 0.0 {
            acc.add_scaled(f.into(), d);
        }
    }
    HermitianOperator::new(acc)
}

pub fn predicted_probabilities(
    sigma: &HermitianOperator,
    effects: &[HermitianOperator],
) -> Vec<f64> {
    effects.iter().map(|e| e.trace_with(sigma)).collect()
}

fn residual(frequencies: &[f64], predicted: &[f64]) -> f64 {
    frequencies
        .iter()
        .zip(predicted)
        .map(|(f, p)| (f - p).abs())
        .sum()
}

pub fn reconstruct(
    mt: &MarginalTable,
    povm: &ProductPovm,
    backend: &TomographyBackend,
) -> Result<(Reconstruction, ReconstructionReport)> {
    if mt.group.len() > DEFAULT_GROUP_CAP {
        return Err(Error::GroupTooLarge {
            size: mt.group.len(),
            cap: DEFAULT_GROUP_CAP,
        });
    }
    if mt.shots == 0 {
        return Err(Error::EmptyDataset);
    }
    let frequencies = mt.frequencies();
    match backend {
        TomographyBackend::FrequencyBias { s_bias } => {
            if !(s_bias.is_finite() && *s_bias >= 0.0) {
                return Err(Error::Format(format!("invalid S_bias {s_bias}")));
            }
            let m = mt.counts.len() as f64;
            let s = mt.shots as f64;
            let mixed: Vec<f64> = mt
                .counts
                .iter()
                .map(|&c| (c as f64 + s_bias / m) / (s + s_bias))
                .collect();
            let report = ReconstructionReport {
                residual: residual(&frequencies, &mixed),
                iterations: 0,
                backend: *backend,
                converged: true,
            };
            Ok((Reconstruction::Probabilities(mixed), report))
        }
        TomographyBackend::LinearInversionPsd => {
            let effects = povm.group_effects(&mt.group)?;
            let sigma = psd_estimate(&frequencies, &effects)?;
            let report = ReconstructionReport {
                residual: residual(&frequencies, &predicted_probabilities(&sigma, &effects)),
                iterations: 0,
                backend: *backend,
                converged: true,
            };
            Ok((Reconstruction::State(DensityMatrix::new(sigma)?), report))
        }
        TomographyBackend::ConstrainedLad(opts) => {
            let effects = povm.group_effects(&mt.group)?;
            let start = psd_estimate(&frequencies, &effects)?;
            let (sigma, mut report) = lad(&frequencies, &effects, start, opts)?;
            report.backend = *backend;
            Ok((Reconstruction::State(DensityMatrix::new(sigma)?), report))
        }
    }
}

fn psd_estimate(frequencies: &[f64], effects: &[HermitianOperator]) -> Result<HermitianOperator> {
    let duals = canonical_duals(effects)?;
    Ok(project_to_density(&linear_inversion(frequencies, &duals)?))
}

/// Projected subgradient descent on the least-absolute-deviation objective
/// over density matrices, keeping the best iterate seen.
pub fn lad(
    frequencies: &[f64],
    effects: &[HermitianOperator],
    start: HermitianOperator,
    opts: &LadOptions,
) -> Result<(HermitianOperator, ReconstructionReport)> {
    if !(opts.tolerance > 0.0) || opts.window == 0 {
        return Err(Error::Format(
            "LAD tolerance and window must be positive".into(),
        ));
    }
    let dim = start.dim();
    let mut sigma = start;
    let mut best = sigma.clone();
    let mut best_res = residual(frequencies, &predicted_probabilities(&sigma, effects));
    let mut history = vec![best_res];
    let mut converged = false;
    let mut iterations = 0;
    for t in 1..=opts.max_iters {
        iterations = t;
        let predicted = predicted_probabilities(&sigma, effects);
        let mut g = ComplexMatrix::zeros(dim, dim);
        for ((f, p), e) in frequencies.iter().zip(&predicted).zip(effects) {
            let s = (f - p).signum();
            if f != p {
                g.add_scaled(s.into(), e);
            }
        }
        // sigma - eta * subgradient, where the subgradient is -g
        let eta = opts.eta0 / (t as f64).sqrt();
        let mut next = sigma.matrix().clone();
        next.add_scaled(eta.into(), &g);
        sigma = project_to_density(&HermitianOperator::new(next)?);
        let res = residual(frequencies, &predicted_probabilities(&sigma, effects));
        if res < best_res {
            best_res = res;
            best = sigma.clone();
        }
        history.push(best_res);
        if t >= opts.window && history[t - opts.window] - best_res < opts.tolerance {
            converged = true;
            break;
        }
    }
    let report = ReconstructionReport {
        residual: best_res,
        iterations,
        backend: TomographyBackend::ConstrainedLad(*opts),
        converged,
    };
    Ok((best, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{C64, ONE, ZERO};
    use crate::povm::pauli6;

    fn table_from_probs(group: Vec<usize>, probs: &[f64], shots: u64) -> MarginalTable {
        // scaled so that frequencies reproduce `probs` to rounding
        let counts: Vec<u64> = probs
            .iter()
            .map(|p| (p * shots as f64).round() as u64)
            .collect();
        let total = counts.iter().sum();
        MarginalTable {
            group,
            d: 6,
            counts,
            shots: total,
        }
    }

    #[test]
    fn inversion_of_exact_probabilities() {
        let effects = ProductPovm::pauli6(2).group_effects(&[0, 1]).unwrap();
        let duals = canonical_duals(&effects).unwrap();
        let psi = [
            C64::new(0.6, 0.0),
            ZERO,
            C64::new(0.0, 0.48),
            C64::new(0.64, 0.0),
        ];
        let rho = HermitianOperator::projector(&psi);
        let probs = predicted_probabilities(&rho, &effects);
        let back = linear_inversion(&probs, &duals).unwrap();
        assert!(back.max_abs_diff(&rho) < 1e-10);
    }

    #[test]
    fn single_shot_inversion_is_not_psd() {
        let p = pauli6();
        let duals = canonical_duals(p.effects()).unwrap();
        let back = linear_inversion(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0], &duals).unwrap();
        assert!(back.max_abs_diff(&ComplexMatrix::from_real_diagonal(&[2.0, -1.0])) < 1e-12);
        let uniform = linear_inversion(&[1.0 / 6.0; 6], &duals).unwrap();
        assert!(uniform.max_abs_diff(&ComplexMatrix::from_real_diagonal(&[0.5, 0.5])) < 1e-12);
    }

    #[test]
    fn predicted_probability_examples() {
        let p = pauli6();
        let mm = HermitianOperator::from_real_diagonal(&[0.5, 0.5]);
        for x in predicted_probabilities(&mm, p.effects()) {
            assert!((x - 1.0 / 6.0).abs() < 1e-15);
        }
        let zero = HermitianOperator::from_real_diagonal(&[1.0, 0.0]);
        let want = [1.0 / 3.0, 0.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0];
        for (x, w) in predicted_probabilities(&zero, p.effects()).iter().zip(want) {
            assert!((x - w).abs() < 1e-15);
        }
    }

    #[test]
    fn lad_recovers_zero_state() {
        let povm = ProductPovm::pauli6(1);
        let mt = table_from_probs(
            vec![0],
            &[1.0 / 3.0, 0.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0],
            600,
        );
        let (rec, report) = reconstruct(&mt, &povm, &TomographyBackend::lad()).unwrap();
        let Reconstruction::State(s) = rec else {
            panic!()
        };
        assert!(report.residual <= 1e-6);
        assert!(
            s.matrix()
                .max_abs_diff(&ComplexMatrix::from_real_diagonal(&[1.0, 0.0]))
                < 1e-6
        );
    }

    #[test]
    fn lad_descends_from_a_poor_start() {
        let effects = pauli6().effects().to_vec();
        let target = HermitianOperator::projector(&[C64::new(0.8, 0.0), C64::new(0.0, 0.6)]);
        let f = predicted_probabilities(&target, &effects);
        let start = HermitianOperator::from_real_diagonal(&[0.5, 0.5]);
        let r0 = residual(&f, &predicted_probabilities(&start, &effects));
        let (sigma, report) = lad(&f, &effects, start, &LadOptions::default()).unwrap();
        assert!(report.residual < r0);
        assert!(report.residual < 1e-2, "{}", report.residual);
        assert!(sigma.max_abs_diff(&target) < 1e-2);
    }

    #[test]
    fn uniform_frequencies_give_maximally_mixed() {
        let povm = ProductPovm::pauli6(2);
        let mt = MarginalTable {
            group: vec![0, 1],
            d: 6,
            counts: vec![10; 36],
            shots: 360,
        };
        let mm = ComplexMatrix::identity(4).scale_real(0.25);
        for backend in [
            TomographyBackend::LinearInversionPsd,
            TomographyBackend::lad(),
        ] {
            let (rec, _) = reconstruct(&mt, &povm, &backend).unwrap();
            let Reconstruction::State(s) = rec else {
                panic!()
            };
            assert!(s.matrix().max_abs_diff(&mm) < 1e-10);
        }
        let (rec, _) = reconstruct(
            &mt,
            &povm,
            &TomographyBackend::FrequencyBias { s_bias: 1296.0 },
        )
        .unwrap();
        let Reconstruction::Probabilities(p) = rec else {
            panic!()
        };
        assert!(p.iter().all(|x| (x - 1.0 / 36.0).abs() < 1e-15));
    }

    #[test]
    fn frequency_bias_limits() {
        let povm = ProductPovm::pauli6(1);
        let mt = MarginalTable {
            group: vec![0],
            d: 6,
            counts: vec![5, 0, 1, 2, 1, 1],
            shots: 10,
        };
        let (rec, _) = reconstruct(
            &mt,
            &povm,
            &TomographyBackend::FrequencyBias { s_bias: 0.0 },
        )
        .unwrap();
        assert_eq!(rec, Reconstruction::Probabilities(mt.frequencies()));
        let (rec, _) = reconstruct(
            &mt,
            &povm,
            &TomographyBackend::FrequencyBias { s_bias: 1e15 },
        )
        .unwrap();
        let Reconstruction::Probabilities(p) = rec else {
            panic!()
        };
        assert!(p.iter().all(|x| (x - 1.0 / 6.0).abs() < 1e-12));
    }

    #[test]
    fn lad_never_worse_than_psd() {
        let povm = ProductPovm::pauli6(2);
        let mt = MarginalTable {
            group: vec![0, 1],
            d: 6,
            counts: (0..36u64).map(|i| (i * 7 + 3) % 11).collect(),
            shots: (0..36u64).map(|i| (i * 7 + 3) % 11).sum(),
        };
        let (_, psd) = reconstruct(&mt, &povm, &TomographyBackend::LinearInversionPsd).unwrap();
        let (_, lad) = reconstruct(&mt, &povm, &TomographyBackend::lad()).unwrap();
        assert!(lad.residual <= psd.residual);
    }

    #[test]
    fn exact_recovery_up_to_three_qubits() {
        for k in 1..=3usize {
            let povm = ProductPovm::pauli6(k);
            let group: Vec<usize> = (0..k).collect();
            let effects = povm.group_effects(&group).unwrap();
            let mut amps = vec![ZERO; 1 << k];
            amps[0] = ONE;
            amps[(1 << k) - 1] = C64::new(0.0, 1.0);
            let rho = HermitianOperator::projector(&amps).scale(0.5);
            let probs = predicted_probabilities(&rho, &effects);
            let start = project_to_density(
                &linear_inversion(&probs, &canonical_duals(&effects).unwrap()).unwrap(),
            );
            assert!(start.sub(&rho).frobenius_norm() < 1e-5);
            let (sigma, _) = lad(&probs, &effects, start, &LadOptions::default()).unwrap();
            assert!(sigma.sub(&rho).frobenius_norm() < 1e-5);
        }
    }
}
