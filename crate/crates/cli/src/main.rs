//! `kloshadow`: sample, learn partitions, reconstruct, build duals and estimate.
//!
//! Exit codes: 0 success, 1 runtime or validation failure, 2 usage error.

mod spec;

use std::error::Error as StdError;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kloshadow::config::{BackendKind, IdentityMode, RunConfig};
use kloshadow::correlations::{mi_matrix, Partition};
use kloshadow::estimation::{estimate, exact_variance, rmse_experiment, PauliObservable};
use kloshadow::experiments::{benchmark, toy_point, toy_sweep, ToyFamily, ToyPoint};
use kloshadow::frames::{
    canonical_global, exact_local_duals, klo_duals_for_partition, optimal_duals, GlobalDuals,
    Partitioner, Provenance,
};
use kloshadow::io::{self, MatrixRecord, RdmFile, RdmRecord};
use kloshadow::povm::{ProductPovm, PAULI6_ID};
use kloshadow::sampling::{marginal_counts, sample_shots_with_limits, Dataset};
use kloshadow::states::{ground_state, DenseLimits, QuantumState};
use kloshadow::tomography::{reconstruct, Reconstruction};
use kloshadow::Error;

type CliResult<T> = std::result::Result<T, Box<dyn StdError>>;

#[derive(Parser)]
#[command(
    name = "kloshadow",
    version,
    about = "Observable estimation with locally optimal dual frames"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Pipeline settings; all of them enter the config hash written to CSV rows.
#[derive(Args, Clone, Debug)]
struct Pipeline {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1_000_000)]
    shots: usize,
    /// Maximum group size.
    #[arg(long, default_value_t = 4)]
    k: usize,
    /// greedy, naive, node or edge.
    #[arg(long, default_value = "greedy")]
    partitioner: Partitioner,
    /// bias, psd or lad.
    #[arg(long, default_value = "lad")]
    backend: BackendKind,
    /// Pseudo-counts for the bias backend; defaults to 6^k.
    #[arg(long)]
    s_bias: Option<f64>,
    /// Probability floor used when inverting weights.
    #[arg(long, default_value_t = kloshadow::frames::DEFAULT_FLOOR)]
    floor: f64,
    #[arg(long, default_value_t = kloshadow::states::DEFAULT_STATEVECTOR_LIMIT)]
    statevector_limit: usize,
    #[arg(long, default_value_t = kloshadow::states::DEFAULT_DENSITY_LIMIT)]
    density_limit: usize,
    /// Drop the identity term of Hamiltonians from the estimator.
    #[arg(long)]
    exclude_identity: bool,
}

impl Pipeline {
    fn config(&self) -> RunConfig {
        RunConfig {
            seed: self.seed,
            shots: self.shots,
            k: self.k,
            partitioner: self.partitioner,
            backend: self.backend,
            s_bias: self.s_bias,
            floor: self.floor,
            limits: self.limits(),
            identity: if self.exclude_identity {
                IdentityMode::Exclude
            } else {
                IdentityMode::Keep
            },
            ..RunConfig::default()
        }
    }

    fn limits(&self) -> DenseLimits {
        DenseLimits {
            statevector: self.statevector_limit,
            density: self.density_limit,
        }
    }

    fn observable(&self, path: &Path) -> CliResult<PauliObservable> {
        let obs = io::parse_hamiltonian(&std::fs::read_to_string(path)?)?;
        Ok(if self.exclude_identity {
            obs.without_identity()
        } else {
            obs
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate Pauli-6 measurements of a state and write a dataset file.
    Sample {
        #[arg(long, help = spec::STATE_HELP)]
        state: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        pipeline: Pipeline,
    },
    /// Pairwise mutual information of a dataset as CSV.
    Mi {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        pipeline: Pipeline,
    },
    /// Partition the qubits of a dataset into groups of at most k.
    Partition {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        pipeline: Pipeline,
    },
    /// Reconstruct group states; writes an RDM file and a residual CSV.
    Tomo {
        #[arg(long)]
        data: PathBuf,
        /// Partition file; learned from the data when absent.
        #[arg(long)]
        partition: Option<PathBuf>,
        #[arg(long)]
        rdm_out: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        pipeline: Pipeline,
    },
    /// Build dual frames and write them as JSON.
    Duals {
        /// Canonical duals on this many qubits.
        #[arg(long, group = "source")]
        canonical: Option<usize>,
        /// k-LO duals from a dataset.
        #[arg(long, group = "source")]
        data: Option<PathBuf>,
        /// k-LO duals from an RDM file.
        #[arg(long, group = "source")]
        rdm: Option<PathBuf>,
        /// Group-optimal duals from the exact reduced states of a state.
        #[arg(long, group = "source", help = spec::STATE_HELP)]
        exact_state: Option<String>,
        #[arg(long)]
        partition: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        pipeline: Pipeline,
    },
    /// Estimate a Hamiltonian from a dataset and duals.
    Estimate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        duals: PathBuf,
        #[arg(long)]
        hamiltonian: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        pipeline: Pipeline,
    },
    /// Exact single-shot variance of a Hamiltonian for a state and duals.
    ExactVariance {
        #[arg(long, help = spec::STATE_HELP)]
        state: String,
        /// Duals file; canonical duals when absent.
        #[arg(long)]
        duals: Option<PathBuf>,
        #[arg(long)]
        hamiltonian: PathBuf,
        #[command(flatten)]
        pipeline: Pipeline,
    },
    /// Exact variances with canonical and k-LO duals on a Hamiltonian's ground state.
    Benchmark {
        #[arg(long)]
        hamiltonian: PathBuf,
        /// State to evaluate; the Hamiltonian's ground state when absent.
        #[arg(long, help = spec::STATE_HELP)]
        state: Option<String>,
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 4])]
        ks: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        pipeline: Pipeline,
    },
    /// Root-mean-square error of repeated independent estimates.
    Rmse {
        #[arg(long)]
        hamiltonian: PathBuf,
        #[arg(long, help = spec::STATE_HELP)]
        state: Option<String>,
        /// Duals file; canonical duals when absent.
        #[arg(long)]
        duals: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        repetitions: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        pipeline: Pipeline,
    },
    /// Var[ZZ] and state MSE of the two-qubit toy families against q.
    Toy {
        /// pure or mixed.
        #[arg(long)]
        family: ToyFamily,
        /// Single value of q; otherwise an even sweep over [0, 1].
        #[arg(long)]
        q: Option<f64>,
        #[arg(long, default_value_t = 11)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        pipeline: Pipeline,
    },
}

fn csv_writer(out: Option<&Path>) -> CliResult<csv::Writer<Box<dyn Write>>> {
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    Ok(csv::Writer::from_writer(sink))
}

fn text_out(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn load_dataset(path: &Path) -> CliResult<Dataset> {
    let ds = io::read_dataset(BufReader::new(File::open(path)?))?;
    if ds.povm_id() != PAULI6_ID {
        return Err(Box::new(Error::Format(format!(
            "unsupported POVM {:?}",
            ds.povm_id()
        ))));
    }
    Ok(ds)
}

fn load_partition(path: &Path, n: usize) -> CliResult<Partition> {
    Ok(io::parse_partition(&std::fs::read_to_string(path)?, n)?)
}

fn load_duals(path: Option<&Path>, n: usize) -> CliResult<GlobalDuals> {
    let povm = ProductPovm::pauli6(n);
    Ok(match path {
        Some(p) => io::read_duals(BufReader::new(File::open(p)?), &povm)?,
        None => canonical_global(&povm, &Partition::singletons(n))?,
    })
}

fn state_or_ground(
    spec_arg: Option<&str>,
    obs: &PauliObservable,
    p: &Pipeline,
) -> CliResult<QuantumState> {
    Ok(match spec_arg {
        Some(s) => spec::parse_state(s, p.statevector_limit)?,
        None => ground_state(obs, p.statevector_limit)?.1.into(),
    })
}

fn inline_partition(p: &Partition) -> String {
    p.groups()
        .iter()
        .map(|g| g.iter().map(usize::to_string).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join("|")
}

fn observable_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Sample {
            state,
            out,
            pipeline,
        } => {
            let state = spec::parse_state(&state, pipeline.statevector_limit)?;
            let povm = ProductPovm::pauli6(state.num_qubits());
            let ds = sample_shots_with_limits(
                &state,
                &povm,
                pipeline.shots,
                pipeline.seed,
                &pipeline.limits(),
            )?;
            let mut w = BufWriter::new(File::create(&out)?);
            io::write_dataset(&mut w, &ds)?;
            w.flush()?;
        }
        Command::Mi {
            data,
            out,
            pipeline,
        } => {
            let ds = load_dataset(&data)?;
            let g = mi_matrix(&ds)?;
            let hash = pipeline.config().hash();
            let mut w = csv_writer(out.as_deref())?;
            w.write_record(["i", "j", "mi", "seed", "config_hash"])?;
            for i in 0..g.num_nodes() {
                for j in i + 1..g.num_nodes() {
                    w.write_record([
                        i.to_string(),
                        j.to_string(),
                        g.weight(i, j).to_string(),
                        ds.seed().to_string(),
                        hash.clone(),
                    ])?;
                }
            }
            w.flush()?;
        }
        Command::Partition {
            data,
            out,
            pipeline,
        } => {
            let ds = load_dataset(&data)?;
            let p = pipeline.partitioner.partition(&ds, pipeline.k)?;
            text_out(out.as_deref(), &io::format_partition(&p))?;
        }
        Command::Tomo {
            data,
            partition,
            rdm_out,
            out,
            pipeline,
        } => {
            let ds = load_dataset(&data)?;
            let n = ds.num_qubits();
            let p = match &partition {
                Some(path) => load_partition(path, n)?,
                None => pipeline.partitioner.partition(&ds, pipeline.k)?,
            };
            let povm = ProductPovm::pauli6(n);
            let config = pipeline.config();
            let backend = config.tomography_backend(6);
            let hash = config.hash();
            let mut w = csv_writer(out.as_deref())?;
            w.write_record([
                "group",
                "backend",
                "residual",
                "iterations",
                "converged",
                "seed",
                "config_hash",
            ])?;
            let mut records = Vec::new();
            for g in p.groups() {
                let (rec, report) = reconstruct(&marginal_counts(&ds, g)?, &povm, &backend)?;
                w.write_record([
                    g.iter().map(usize::to_string).collect::<Vec<_>>().join(" "),
                    backend.name().to_string(),
                    report.residual.to_string(),
                    report.iterations.to_string(),
                    report.converged.to_string(),
                    ds.seed().to_string(),
                    hash.clone(),
                ])?;
                let (state, probabilities) = match rec {
                    Reconstruction::State(s) => (Some(MatrixRecord::from_matrix(s.matrix())), None),
                    Reconstruction::Probabilities(v) => (None, Some(v)),
                };
                records.push(RdmRecord {
                    group: g.clone(),
                    backend: backend.name().to_string(),
                    residual: report.residual,
                    state,
                    probabilities,
                });
            }
            w.flush()?;
            let file = RdmFile { n, groups: records };
            std::fs::write(&rdm_out, serde_json::to_string_pretty(&file)? + "\n")?;
        }
        Command::Duals {
            canonical,
            data,
            rdm,
            exact_state,
            partition,
            out,
            pipeline,
        } => {
            let duals = if let Some(n) = canonical {
                let p = match &partition {
                    Some(path) => load_partition(path, n)?,
                    None => Partition::singletons(n),
                };
                canonical_global(&ProductPovm::pauli6(n), &p)?
            } else if let Some(path) = data {
                let ds = load_dataset(&path)?;
                let n = ds.num_qubits();
                let p = match &partition {
                    Some(path) => load_partition(path, n)?,
                    None => pipeline.partitioner.partition(&ds, pipeline.k)?,
                };
                let backend = pipeline.config().tomography_backend(6);
                klo_duals_for_partition(&ds, &ProductPovm::pauli6(n), &p, &backend, pipeline.floor)?
            } else if let Some(path) = rdm {
                duals_from_rdm(&path, pipeline.floor)?
            } else if let Some(s) = exact_state {
                let state = spec::parse_state(&s, pipeline.statevector_limit)?;
                let n = state.num_qubits();
                let povm = ProductPovm::pauli6(n);
                let p = match &partition {
                    Some(path) => load_partition(path, n)?,
                    None => kloshadow::correlations::greedy_partition(
                        &kloshadow::correlations::ExactStatistics {
                            state: &state,
                            povm: &povm,
                        },
                        pipeline.k,
                    )?,
                };
                exact_local_duals(&state, &povm, &p, pipeline.floor)?
            } else {
                return Err(
                    "one of --canonical, --data, --rdm or --exact-state is required".into(),
                );
            };
            let mut w = BufWriter::new(File::create(&out)?);
            io::write_duals(&mut w, &duals, PAULI6_ID)?;
            writeln!(w)?;
            w.flush()?;
        }
        Command::Estimate {
            data,
            duals,
            hamiltonian,
            out,
            pipeline,
        } => {
            let ds = load_dataset(&data)?;
            let duals = load_duals(Some(&duals), ds.num_qubits())?;
            let obs = pipeline.observable(&hamiltonian)?;
            let report = estimate(&ds, &duals, &obs)?;
            let mut w = csv_writer(out.as_deref())?;
            w.write_record([
                "observable",
                "provenance",
                "mean",
                "sample_variance",
                "std_error",
                "shots",
                "seed",
                "config_hash",
            ])?;
            w.write_record([
                observable_id(&hamiltonian),
                report.provenance,
                report.mean.to_string(),
                report.sample_variance.to_string(),
                report.std_error.to_string(),
                report.shots.to_string(),
                ds.seed().to_string(),
                pipeline.config().hash(),
            ])?;
            w.flush()?;
        }
        Command::ExactVariance {
            state,
            duals,
            hamiltonian,
            pipeline,
        } => {
            let state = spec::parse_state(&state, pipeline.statevector_limit)?;
            let n = state.num_qubits();
            let duals = load_duals(duals.as_deref(), n)?;
            let obs = pipeline.observable(&hamiltonian)?;
            let report = exact_variance(&state, &ProductPovm::pauli6(n), &duals, &obs)?;
            println!("{}", report.variance);
        }
        Command::Benchmark {
            hamiltonian,
            state,
            ks,
            out,
            pipeline,
        } => {
            let obs = io::parse_hamiltonian(&std::fs::read_to_string(&hamiltonian)?)?;
            let state = state_or_ground(state.as_deref(), &obs, &pipeline)?;
            let energy = obs.expectation(&state)?;
            let rows = benchmark(&state, &obs, &ks, pipeline.floor)?;
            let hash = pipeline.config().hash();
            let mut w = csv_writer(out.as_deref())?;
            w.write_record([
                "observable",
                "method",
                "partition",
                "variance_with_identity",
                "variance_without_identity",
                "energy",
                "seed",
                "config_hash",
            ])?;
            for r in rows {
                w.write_record([
                    observable_id(&hamiltonian),
                    r.method,
                    inline_partition(&r.partition),
                    r.variance_with_identity.to_string(),
                    r.variance_without_identity.to_string(),
                    energy.to_string(),
                    pipeline.seed.to_string(),
                    hash.clone(),
                ])?;
            }
            w.flush()?;
        }
        Command::Rmse {
            hamiltonian,
            state,
            duals,
            repetitions,
            out,
            pipeline,
        } => {
            let obs = pipeline.observable(&hamiltonian)?;
            let state = state_or_ground(state.as_deref(), &obs, &pipeline)?;
            let n = state.num_qubits();
            let povm = ProductPovm::pauli6(n);
            let duals = load_duals(duals.as_deref(), n)?;
            let report = rmse_experiment(
                &state,
                &povm,
                &duals,
                &obs,
                repetitions,
                pipeline.shots,
                pipeline.seed,
            )?;
            let variance = exact_variance(&state, &povm, &duals, &obs)?.variance;
            let predicted = (variance / pipeline.shots as f64).sqrt();
            let mut w = csv_writer(out.as_deref())?;
            w.write_record([
                "observable",
                "provenance",
                "repetitions",
                "shots",
                "truth",
                "rmse",
                "exact_variance",
                "predicted_rmse",
                "ratio",
                "seed",
                "config_hash",
            ])?;
            w.write_record([
                observable_id(&hamiltonian),
                duals.provenance_label(),
                report.repetitions.to_string(),
                report.shots.to_string(),
                report.truth.to_string(),
                report.rmse.to_string(),
                variance.to_string(),
                predicted.to_string(),
                (report.rmse / predicted).to_string(),
                pipeline.seed.to_string(),
                pipeline.config().hash(),
            ])?;
            w.flush()?;
        }
        Command::Toy {
            family,
            q,
            points,
            out,
            pipeline,
        } => {
            let sweep: Vec<ToyPoint> = match q {
                Some(q) => vec![toy_point(family, q, pipeline.floor)?],
                None => toy_sweep(family, points, pipeline.floor)?,
            };
            let hash = pipeline.config().hash();
            let mut w = csv_writer(out.as_deref())?;
            w.write_record([
                "family",
                "q",
                "method",
                "var_zz",
                "mse",
                "seed",
                "config_hash",
            ])?;
            for p in sweep {
                for (method, v) in [
                    ("canonical", p.canonical),
                    ("1-LO", p.one_lo),
                    ("optimized-1-local", p.optimized_one_local),
                    ("2-LO", p.two_lo),
                ] {
                    w.write_record([
                        family.name().to_string(),
                        p.q.to_string(),
                        method.to_string(),
                        v.var_zz.to_string(),
                        v.mse.to_string(),
                        pipeline.seed.to_string(),
                        hash.clone(),
                    ])?;
                }
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn duals_from_rdm(path: &Path, floor: f64) -> CliResult<GlobalDuals> {
    let file: RdmFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    let povm = ProductPovm::pauli6(file.n);
    let mut frames = Vec::new();
    for rec in &file.groups {
        let effects = povm.group_effects(&rec.group)?;
        let probs = match (rec.density()?, &rec.probabilities) {
            (Some(rho), _) => Reconstruction::State(rho).probabilities(&effects),
            (None, Some(p)) => p.clone(),
            (None, None) => {
                return Err(
                    format!("group {:?} has neither state nor probabilities", rec.group).into(),
                )
            }
        };
        let provenance = Provenance::KLocal {
            backend: rec.backend.clone(),
        };
        frames.push(optimal_duals(
            &probs,
            &effects,
            floor,
            provenance,
            rec.group.clone(),
        )?);
    }
    let partition = Partition::new(
        file.n,
        file.groups.iter().map(|r| r.group.clone()).collect(),
    )?;
    Ok(GlobalDuals::new(partition, frames)?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
