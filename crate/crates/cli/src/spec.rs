//! State specifications accepted on the command line.

use std::path::Path;

use kloshadow::algebra::{C64, ONE, ZERO};
use kloshadow::correlations::Partition;
use kloshadow::states::{ground_state, BlockProductState, DensityMatrix, PureState, QuantumState};
use kloshadow::{io, Error, Result};

pub const STATE_HELP: &str = "bell | ghz:N | bell-pairs:N | product:WORD (letters 0 1 + - r l) | \
pure:Q | mixed:Q | maxmixed:N | ground-state-of:PATH";

fn ket(c: char) -> Result<[C64; 2]> {
    let h = 0.5f64.sqrt();
    Ok(match c {
        '0' => [ONE, ZERO],
        '1' => [ZERO, ONE],
        '+' => [C64::new(h, 0.0), C64::new(h, 0.0)],
        '-' => [C64::new(h, 0.0), C64::new(-h, 0.0)],
        'r' => [C64::new(h, 0.0), C64::new(0.0, h)],
        'l' => [C64::new(h, 0.0), C64::new(0.0, -h)],
        _ => return Err(Error::Format(format!("unknown product letter {c:?}"))),
    })
}

fn count(arg: &str, what: &str) -> Result<usize> {
    match arg.parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(Error::Format(format!(
            "{what}: expected a positive integer, got {arg:?}"
        ))),
    }
}

fn fraction(arg: &str) -> Result<f64> {
    arg.parse::<f64>()
        .map_err(|_| Error::Format(format!("expected a number, got {arg:?}")))
}

pub fn parse_state(spec: &str, statevector_limit: usize) -> Result<QuantumState> {
    let (name, arg) = spec.split_once(':').unwrap_or((spec, ""));
    Ok(match name {
        "bell" => PureState::bell().into(),
        "ghz" => PureState::ghz(count(arg, "ghz")?).into(),
        "bell-pairs" => {
            let pairs = count(arg, "bell-pairs")?;
            let groups = (0..pairs).map(|p| vec![2 * p, 2 * p + 1]).collect();
            let bell = PureState::bell().to_density();
            BlockProductState::new(Partition::new(2 * pairs, groups)?, vec![bell; pairs])?.into()
        }
        "product" => {
            let kets = arg.chars().map(ket).collect::<Result<Vec<_>>>()?;
            if kets.is_empty() {
                return Err(Error::Format(
                    "product state needs at least one letter".into(),
                ));
            }
            PureState::product(&kets)?.into()
        }
        "pure" => PureState::weighted_bell(fraction(arg)?)?.into(),
        "mixed" => DensityMatrix::classical_mixture(fraction(arg)?)?.into(),
        "maxmixed" => {
            let n = count(arg, "maxmixed")?;
            BlockProductState::new(
                Partition::singletons(n),
                vec![DensityMatrix::maximally_mixed(1); n],
            )?
            .into()
        }
        "ground-state-of" => {
            let text = std::fs::read_to_string(Path::new(arg))?;
            ground_state(&io::parse_hamiltonian(&text)?, statevector_limit)?
                .1
                .into()
        }
        _ => {
            return Err(Error::Format(format!(
                "unknown state {spec:?}; expected {STATE_HELP}"
            )))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_states() {
        assert_eq!(parse_state("bell", 14).unwrap().num_qubits(), 2);
        assert_eq!(parse_state("ghz:3", 14).unwrap().num_qubits(), 3);
        assert_eq!(parse_state("bell-pairs:2", 14).unwrap().num_qubits(), 4);
        assert_eq!(parse_state("product:0+r", 14).unwrap().num_qubits(), 3);
        assert_eq!(parse_state("maxmixed:4", 14).unwrap().num_qubits(), 4);
        assert!(parse_state("pure:0.5", 14).is_ok());
        assert!(parse_state("mixed:1.5", 14).is_err());
        assert!(parse_state("ghz:0", 14).is_err());
        assert!(parse_state("product:0x", 14).is_err());
        assert!(parse_state("nope", 14).is_err());
    }
}
