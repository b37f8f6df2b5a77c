//! File formats: Hamiltonian text, binary datasets, partitions, duals and RDMs.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::algebra::{ComplexMatrix, HermitianOperator, C64};
use crate::correlations::Partition;
use crate::error::{Error, Result};
use crate::estimation::PauliObservable;
use crate::frames::{DualFrame, GlobalDuals, Provenance};
use crate::povm::ProductPovm;
use crate::sampling::Dataset;
use crate::states::DensityMatrix;

pub const DATASET_MAGIC: &[u8; 4] = b"ICSD";
pub const DATASET_VERSION: u16 = 1;
pub const POVM_ID_BYTES: usize = 16;
/// Magic, version, n, d, S, seed.
pub const DATASET_HEADER_BYTES: usize = 4 + 2 + 2 + 2 + 8 + 8;

/// `<coefficient> <word>` per line; `#` starts a comment line.
pub fn parse_hamiltonian(text: &str) -> Result<PauliObservable> {
    let mut terms = Vec::new();
    let mut width = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = i + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(c), Some(w), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Parse {
                line: lineno,
                msg: "expected `<coefficient> <pauli word>`".into(),
            });
        };
        let c: f64 = c.parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("bad coefficient {c:?}"),
        })?;
        if !c.is_finite() {
            return Err(Error::Parse {
                line: lineno,
                msg: "coefficient is not finite".into(),
            });
        }
        if let Some(bad) = w.chars().find(|ch| !"IXYZ".contains(*ch)) {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("invalid Pauli letter {bad:?}"),
            });
        }
        match width {
            None => width = Some(w.len()),
            Some(n) if n != w.len() => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("word of length {} after words of length {n}", w.len()),
                })
            }
            _ => {}
        }
        terms.push((c, w.to_string()));
    }
    if terms.is_empty() {
        return Err(Error::Parse {
            line: 0,
            msg: "no terms".into(),
        });
    }
    PauliObservable::new(terms)
}

pub fn format_hamiltonian(obs: &PauliObservable) -> String {
    obs.terms()
        .iter()
        .map(|(c, w)| format!("{c:?} {w}\n"))
        .collect()
}

pub fn write_dataset<W: Write>(mut w: W, ds: &Dataset) -> Result<()> {
    let n = u16::try_from(ds.num_qubits()).map_err(|_| Error::Format("too many qubits".into()))?;
    let d = u16::try_from(ds.outcomes_per_qubit())
        .map_err(|_| Error::Format("too many outcomes".into()))?;
    let id = ds.povm_id().as_bytes();
    if id.len() > POVM_ID_BYTES {
        return Err(Error::Format(format!(
            "POVM id longer than {POVM_ID_BYTES} bytes"
        )));
    }
    let mut header = Vec::with_capacity(DATASET_HEADER_BYTES + POVM_ID_BYTES);
    header.extend_from_slice(DATASET_MAGIC);
    header.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    header.extend_from_slice(&n.to_le_bytes());
    header.extend_from_slice(&d.to_le_bytes());
    header.extend_from_slice(&(ds.num_shots() as u64).to_le_bytes());
    header.extend_from_slice(&ds.seed().to_le_bytes());
    let mut padded = [0u8; POVM_ID_BYTES];
    padded[..id.len()].copy_from_slice(id);
    header.extend_from_slice(&padded);
    w.write_all(&header)?;
    w.write_all(ds.records())?;
    Ok(())
}

pub fn read_dataset<R: Read>(mut r: R) -> Result<Dataset> {
    let mut header = [0u8; DATASET_HEADER_BYTES + POVM_ID_BYTES];
    r.read_exact(&mut header)
        .map_err(|_| Error::Format("truncated dataset header".into()))?;
    if &header[..4] != DATASET_MAGIC {
        return Err(Error::Format("bad dataset magic".into()));
    }
    let u16_at = |o: usize| u16::from_le_bytes([header[o], header[o + 1]]);
    let u64_at = |o: usize| u64::from_le_bytes(header[o..o + 8].try_into().unwrap());
    let version = u16_at(4);
    if version != DATASET_VERSION {
        return Err(Error::Format(format!(
            "unsupported dataset version {version}"
        )));
    }
    let n = u16_at(6) as usize;
    let d = u16_at(8) as usize;
    let shots = u64_at(10) as usize;
    let seed = u64_at(18);
    let id_bytes = &header[DATASET_HEADER_BYTES..];
    let id_len = id_bytes
        .iter()
        .position(|&b| b == 0)
        .unwrap_or(POVM_ID_BYTES);
    let povm_id = std::str::from_utf8(&id_bytes[..id_len])
        .map_err(|_| Error::Format("POVM id is not UTF-8".into()))?
        .to_string();
    let expected = shots
        .checked_mul(n)
        .ok_or_else(|| Error::Format("record size overflows".into()))?;
    let mut records = Vec::with_capacity(expected);
    r.read_to_end(&mut records)?;
    if records.len() != expected {
        return Err(Error::Format(format!(
            "expected {expected} record bytes, found {}",
            records.len()
        )));
    }
    Dataset::new(n, d, seed, povm_id, records)
}

/// One group per line, qubit indices separated by spaces.
pub fn format_partition(p: &Partition) -> String {
    p.groups()
        .iter()
        .map(|g| g.iter().map(usize::to_string).collect::<Vec<_>>().join(" ") + "\n")
        .collect()
}

pub fn parse_partition(text: &str, n: usize) -> Result<Partition> {
    let mut groups = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let g = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<usize>().map_err(|_| Error::Parse {
                    line: i + 1,
                    msg: format!("bad qubit index {t:?}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        groups.push(g);
    }
    Partition::new(n, groups)
}

/// Entries as `[re, im]` pairs in row-major order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub dim: usize,
    pub entries: Vec<[f64; 2]>,
}

impl MatrixRecord {
    pub fn from_matrix(m: &ComplexMatrix) -> Self {
        Self {
            dim: m.rows(),
            entries: m.as_slice().iter().map(|c| [c.re, c.im]).collect(),
        }
    }

    pub fn to_matrix(&self) -> Result<ComplexMatrix> {
        ComplexMatrix::from_vec(
            self.dim,
            self.dim,
            self.entries
                .iter()
                .map(|[re, im]| C64::new(*re, *im))
                .collect(),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub group: Vec<usize>,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    pub outcomes: usize,
    pub duals: Vec<MatrixRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualsFile {
    pub povm: String,
    pub partition: Partition,
    pub frames: Vec<FrameRecord>,
}

pub fn duals_to_file(duals: &GlobalDuals, povm_id: &str) -> DualsFile {
    DualsFile {
        povm: povm_id.to_string(),
        partition: duals.partition().clone(),
        frames: duals
            .frames()
            .iter()
            .map(|f| FrameRecord {
                group: f.group().to_vec(),
                provenance: f.provenance().clone(),
                weights: f.weights().map(<[f64]>::to_vec),
                outcomes: f.num_outcomes(),
                duals: f
                    .duals()
                    .iter()
                    .map(|d| MatrixRecord::from_matrix(d))
                    .collect(),
            })
            .collect(),
    }
}

/// Rebuilds duals and re-verifies duality against the POVM.
pub fn duals_from_file(file: &DualsFile, povm: &ProductPovm) -> Result<GlobalDuals> {
    if povm.id() != Some(file.povm.as_str()) {
        return Err(Error::Format(format!(
            "duals were built for POVM {:?}",
            file.povm
        )));
    }
    let frames = file
        .frames
        .iter()
        .map(|f| {
            let effects = povm.group_effects(&f.group)?;
            if f.outcomes != effects.len() || f.duals.len() != effects.len() {
                return Err(Error::Format(format!(
                    "group {:?}: {} duals for {} outcomes",
                    f.group,
                    f.duals.len(),
                    effects.len()
                )));
            }
            let duals = f
                .duals
                .iter()
                .map(|m| HermitianOperator::new(m.to_matrix()?))
                .collect::<Result<Vec<_>>>()?;
            DualFrame::new(
                f.group.clone(),
                duals,
                &effects,
                f.provenance.clone(),
                f.weights.clone(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    GlobalDuals::new(file.partition.clone(), frames)
}

pub fn write_duals<W: Write>(w: W, duals: &GlobalDuals, povm_id: &str) -> Result<()> {
    serde_json::to_writer_pretty(w, &duals_to_file(duals, povm_id))?;
    Ok(())
}

pub fn read_duals<R: Read>(r: R, povm: &ProductPovm) -> Result<GlobalDuals> {
    let file: DualsFile = serde_json::from_reader(r)?;
    duals_from_file(&file, povm)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdmRecord {
    pub group: Vec<usize>,
    pub backend: String,
    pub residual: f64,
    /// Absent for backends that only produce probabilities.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<MatrixRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdmFile {
    pub n: usize,
    pub groups: Vec<RdmRecord>,
}

impl RdmRecord {
    pub fn density(&self) -> Result<Option<DensityMatrix>> {
        self.state
            .as_ref()
            .map(|m| DensityMatrix::new(HermitianOperator::new(m.to_matrix()?)?))
            .transpose()
    }
}

pub fn read_lines<R: BufRead>(r: R) -> Result<String> {
    let mut out = String::new();
    for line in r.lines() {
        out.push_str(&line?);
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{canonical_global, exact_local_duals, DEFAULT_FLOOR};
    use crate::sampling::sample_shots;
    use crate::states::{PureState, QuantumState};

    #[test]
    fn hamiltonian_round_trip_and_errors() {
        let text = "# test\n0.5 XZ\n-1.25 II\n\n0.5 XZ\n";
        let h = parse_hamiltonian(text).unwrap();
        assert_eq!(h.terms(), &[(1.0, "XZ".into()), (-1.25, "II".into())]);
        assert_eq!(parse_hamiltonian(&format_hamiltonian(&h)).unwrap(), h);
        for (bad, line) in [
            ("0.5 XZ\n1 X\n", 2),
            ("abc XZ\n", 1),
            ("# c\n1 XQ\n", 2),
            ("1 XX YY\n", 1),
        ] {
            match parse_hamiltonian(bad) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{bad:?}"),
                other => panic!("{bad:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn dataset_round_trip_and_layout() {
        let s: QuantumState = PureState::ghz(3).into();
        let ds = sample_shots(&s, &ProductPovm::pauli6(3), 100, 42).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &ds).unwrap();
        assert_eq!(buf.len(), DATASET_HEADER_BYTES + POVM_ID_BYTES + 300);
        assert_eq!(&buf[..4], b"ICSD");
        assert_eq!(&buf[4..6], &[1, 0]);
        assert_eq!(&buf[6..8], &[3, 0]);
        assert_eq!(&buf[8..10], &[6, 0]);
        assert_eq!(&buf[10..18], &100u64.to_le_bytes());
        assert_eq!(&buf[18..26], &42u64.to_le_bytes());
        assert_eq!(&buf[26..32], b"pauli6");
        assert_eq!(read_dataset(buf.as_slice()).unwrap(), ds);

        let mut short = buf.clone();
        short.pop();
        assert!(read_dataset(short.as_slice()).is_err());
        let mut long = buf.clone();
        long.push(0);
        assert!(read_dataset(long.as_slice()).is_err());
        let mut bad = buf.clone();
        bad[DATASET_HEADER_BYTES + POVM_ID_BYTES + 5] = 9;
        assert!(read_dataset(bad.as_slice()).is_err());
        let mut magic = buf;
        magic[0] = b'X';
        assert!(read_dataset(magic.as_slice()).is_err());
    }

    #[test]
    fn partition_round_trip() {
        let p = Partition::new(5, vec![vec![0, 3], vec![1, 2, 4]]).unwrap();
        let text = format_partition(&p);
        assert_eq!(text, "0 3\n1 2 4\n");
        assert_eq!(parse_partition(&text, 5).unwrap(), p);
        assert!(parse_partition("0 1\n1 2\n", 3).is_err());
    }

    #[test]
    fn duals_round_trip_exactly() {
        let povm = ProductPovm::pauli6(3);
        let s: QuantumState = PureState::ghz(3).into();
        let p = Partition::new(3, vec![vec![0, 2], vec![1]]).unwrap();
        for duals in [
            canonical_global(&povm, &p).unwrap(),
            exact_local_duals(&s, &povm, &p, DEFAULT_FLOOR).unwrap(),
        ] {
            let mut buf = Vec::new();
            write_duals(&mut buf, &duals, "pauli6").unwrap();
            let back = read_duals(buf.as_slice(), &povm).unwrap();
            assert_eq!(back, duals);
        }
    }

    #[test]
    fn tampered_duals_are_rejected() {
        let povm = ProductPovm::pauli6(1);
        let duals = canonical_global(&povm, &Partition::singletons(1)).unwrap();
        let mut file = duals_to_file(&duals, "pauli6");
        file.frames[0].duals[0].entries[0][0] += 0.1;
        assert!(matches!(
            duals_from_file(&file, &povm),
            Err(Error::DualityViolated(_))
        ));
    }
}
