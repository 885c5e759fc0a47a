use std::fs;
use std::io::{self, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use polyset_core::analysis::{
    self, column_mean_product, continuity_probe, entry_sum, exact_representation_check,
    injectivity_sweep, max_row_norm, random_matrix, ClaimId, ClaimReport, CollisionOutcome,
};
use polyset_core::{
    decode_embedding, dims, encode, roundtrip_with, Arch, BankMode, Embedding, SetMatrix,
    ToleranceConfig, Weights,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

/// Injective sum-pooling set embeddings: encode, decode, verify.
#[derive(Debug, Parser)]
#[command(name = "polyset", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print widths of the construction and the reference interval.
    Dims {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        arch: Arch,
        #[command(flatten)]
        out: Output,
    },
    /// Encode a set matrix.
    Encode {
        #[arg(long)]
        arch: Arch,
        #[command(flatten)]
        bank: Bank,
        #[command(flatten)]
        io: Io,
    },
    /// Decode an embedding back to a set matrix.
    Decode {
        /// Re-encoding tolerance for verification.
        #[arg(long)]
        tol: Option<f64>,
        #[command(flatten)]
        io: Io,
    },
    /// Encode, decode and report the distance to the input.
    Roundtrip {
        #[arg(long)]
        arch: Arch,
        #[command(flatten)]
        bank: Bank,
        /// Largest accepted distance between input and recovered matrix.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[command(flatten)]
        io: Io,
    },
    /// Check one of the verifiable claims.
    Verify {
        claim: String,
        #[command(flatten)]
        params: ClaimParams,
        #[command(flatten)]
        io: Io,
    },
    /// Decode perturbed embeddings of a matrix and tabulate the drift.
    Probe {
        #[arg(long)]
        arch: Arch,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Trials per noise level.
        #[arg(long, default_value_t = 20)]
        budget: usize,
        #[command(flatten)]
        io: Io,
    },
    /// Amplification of power-sum inversion under small input noise.
    Conditioning {
        /// Largest multiset size.
        #[arg(long, default_value_t = 8)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: Output,
    },
}

#[derive(Debug, Args)]
struct Output {
    /// Write JSON here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Io {
    /// Input JSON file; stdin when absent or `-`.
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    out: Output,
}

#[derive(Debug, Args)]
struct Bank {
    /// `moment-curve` or `seeded-random`.
    #[arg(long, default_value = "moment-curve")]
    bank_mode: String,
    #[arg(long)]
    seed: Option<u64>,
}

impl Bank {
    fn mode(&self) -> anyhow::Result<BankMode> {
        let seed = match (self.bank_mode.as_str(), self.seed) {
            ("seeded-random", None) => Some(0),
            (_, s) => s,
        };
        Ok(BankMode::parse(&self.bank_mode, seed)?)
    }
}

#[derive(Debug, Args)]
struct ClaimParams {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    arch: Option<Arch>,
    /// Comma-separated grid values, e.g. `0,1,2`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    grid: Option<Vec<f64>>,
    /// Cap on classes searched, or samples drawn.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Set matrices are read either as `{"n", "d", "rows"}` or as a bare array
/// of rows.
#[derive(Deserialize)]
#[serde(untagged)]
enum MatrixInput {
    Full(SetMatrix),
    Rows(Vec<Vec<f64>>),
}

impl MatrixInput {
    fn into_matrix(self) -> anyhow::Result<SetMatrix> {
        match self {
            MatrixInput::Full(x) => Ok(x),
            MatrixInput::Rows(rows) => Ok(SetMatrix::from_rows(&rows)?),
        }
    }
}

#[derive(Serialize)]
struct RoundtripReport {
    report: polyset_core::DecodeReport,
    distance: f64,
    tol: f64,
    passed: bool,
}

fn read_input(io: &Io) -> anyhow::Result<String> {
    match &io.input {
        Some(p) if p.as_os_str() != "-" => {
            fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
        }
        _ => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s).context("reading stdin")?;
            Ok(s)
        }
    }
}

fn read_matrix(io: &Io) -> anyhow::Result<SetMatrix> {
    let text = read_input(io)?;
    let parsed: MatrixInput = serde_json::from_str(&text).context("parsing set matrix JSON")?;
    parsed.into_matrix()
}

fn write_json<T: Serialize>(out: &Output, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match &out.output {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn matrix_or_fixture(io: &Io) -> anyhow::Result<SetMatrix> {
    if io.input.is_some() {
        read_matrix(io)
    } else {
        Ok(SetMatrix::from_rows(&[[0.5, -1.0], [1.25, 0.75], [-0.3, 0.2]])?)
    }
}

fn verify(claim: ClaimId, params: &ClaimParams, io: &Io) -> anyhow::Result<ClaimReport> {
    let report = match claim {
        ClaimId::Counterexample => analysis::reproduce_counterexample(),
        ClaimId::LowerBound => {
            let budget = params.budget.unwrap_or(usize::MAX);
            if params.n.is_none() && params.d.is_none() && params.grid.is_none() {
                analysis::lower_bound_demo(budget)?
            } else {
                let n = params.n.unwrap_or(4);
                let d = params.d.unwrap_or(3);
                let grid = params.grid.clone().unwrap_or_else(|| vec![1.0, 2.0]);
                let eye: Vec<Vec<f64>> = (0..d)
                    .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                    .collect();
                let outcome = analysis::collision_search(n, d, &eye, &grid, budget)?;
                ClaimReport {
                    claim_id: ClaimId::LowerBound,
                    passed: matches!(outcome, CollisionOutcome::Found { .. }),
                    details: json!({ "n": n, "d": d, "weights": eye, "grid": grid, "search": outcome }),
                }
            }
        }
        ClaimId::InjectivitySweep => {
            let grid = params.grid.clone().unwrap_or_else(|| vec![0.0, 1.0, 2.0]);
            let n = params.n.unwrap_or(3);
            let d = params.d.unwrap_or(2);
            let archs = params.arch.map_or(vec![Arch::Lp, Arch::Le], |a| vec![a]);
            let reports = archs
                .into_iter()
                .map(|a| injectivity_sweep(n, d, &grid, a, BankMode::MomentCurve))
                .collect::<polyset_core::Result<Vec<_>>>()?;
            if reports.len() == 1 {
                reports.into_iter().next().expect("one report")
            } else {
                ClaimReport {
                    claim_id: ClaimId::InjectivitySweep,
                    passed: reports.iter().all(|r| r.passed),
                    details: json!(reports.iter().map(|r| &r.details).collect::<Vec<_>>()),
                }
            }
        }
        ClaimId::ExactRepresentation => {
            let archs = params.arch.map_or(vec![Arch::Lp, Arch::Le], |a| vec![a]);
            let fs: [(&str, TestFn); 3] = [
                ("entry_sum", entry_sum),
                ("max_row_norm", max_row_norm),
                ("column_mean_product", column_mean_product),
            ];
            let samples = params.budget.unwrap_or(100);
            let inputs: Vec<(Arch, SetMatrix)> = if io.input.is_some() {
                let x = read_matrix(io)?;
                archs.iter().map(|&a| (a, x.clone())).collect()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
                let mut xs = Vec::new();
                for &a in &archs {
                    let (max_n, range) = match a {
                        Arch::Lp => (5, 2.0),
                        Arch::Le => (4, 1.5),
                    };
                    for _ in 0..samples {
                        use rand::Rng;
                        let n = params.n.unwrap_or_else(|| rng.random_range(1..=max_n));
                        let d = params.d.unwrap_or_else(|| rng.random_range(1..=3));
                        xs.push((a, random_matrix(&mut rng, n, d, range)));
                    }
                }
                xs
            };
            let mut checks = Vec::new();
            let mut passed = true;
            for (name, f) in fs {
                let mut worst = 0.0f64;
                let mut ok = 0;
                for (a, x) in &inputs {
                    let r = exact_representation_check(f, x, *a, 1e-6)?;
                    if r.passed {
                        ok += 1;
                    }
                    worst = worst.max(r.details["abs_error"].as_f64().unwrap_or(f64::INFINITY));
                }
                passed &= ok == inputs.len();
                checks.push(json!({ "f": name, "passed": ok, "of": inputs.len(), "worst_abs_error": worst }));
            }
            ClaimReport {
                claim_id: ClaimId::ExactRepresentation,
                passed,
                details: json!({ "tol": 1e-6, "seed": params.seed, "checks": checks }),
            }
        }
        ClaimId::Continuity => {
            let x = matrix_or_fixture(io)?;
            probe(&x, params.arch.unwrap_or(Arch::Lp), params.budget.unwrap_or(20), params.seed)?
        }
        ClaimId::Conditioning => analysis::conditioning_report(params.n.unwrap_or(8), params.seed),
    };
    Ok(report)
}

const PROBE_EPSILONS: [f64; 9] = [0.0, 1e-12, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2, 1.0, 1e3];

fn probe(x: &SetMatrix, arch: Arch, trials: usize, seed: u64) -> anyhow::Result<ClaimReport> {
    Ok(continuity_probe(x, arch, &PROBE_EPSILONS, trials, seed)?)
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Dims { n, d, arch, out } => write_json(&out, &dims(n, d, arch)?)?,
        Command::Encode { arch, bank, io } => {
            let x = read_matrix(&io)?;
            let weights = Weights::build(arch, x.n_rows(), x.n_cols(), bank.mode()?)?;
            write_json(&io.out, &encode(&x, &weights)?)?;
        }
        Command::Decode { tol, io } => {
            let text = read_input(&io)?;
            let emb: Embedding = serde_json::from_str(&text).context("parsing embedding JSON")?;
            let mut cfg = ToleranceConfig::default();
            if let Some(t) = tol {
                cfg.verify_tol = t;
            }
            write_json(&io.out, &decode_embedding(&emb, &cfg)?)?;
        }
        Command::Roundtrip { arch, bank, tol, io } => {
            let x = read_matrix(&io)?;
            let weights = Weights::build(arch, x.n_rows(), x.n_cols(), bank.mode()?)?;
            let (report, distance) = roundtrip_with(&x, &weights, &ToleranceConfig::default())?;
            let passed = report.verified && distance <= tol;
            write_json(&io.out, &RoundtripReport { report, distance, tol, passed })?;
            if !passed {
                eprintln!("round trip distance {distance:.3e} exceeds {tol:.3e}");
                return Ok(ExitCode::from(3));
            }
        }
        Command::Verify { claim, params, io } => {
            let Ok(id) = claim.parse::<ClaimId>() else {
                let known: Vec<&str> = ClaimId::ALL.iter().map(ClaimId::as_str).collect();
                bail!("unknown claim '{claim}', expected one of {}", known.join(", "));
            };
            let report = verify(id, &params, &io)?;
            write_json(&io.out, &report)?;
            if !report.passed {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Probe { arch, seed, budget, io } => {
            let x = read_matrix(&io)?;
            write_json(&io.out, &probe(&x, arch, budget, seed)?)?;
        }
        Command::Conditioning { n, seed, out } => {
            write_json(&out, &analysis::conditioning_report(n, seed))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

type TestFn = fn(&SetMatrix) -> f64;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            let numerical = err
                .chain()
                .filter_map(|e| e.downcast_ref::<polyset_core::Error>())
                .any(polyset_core::Error::is_numerical);
            ExitCode::from(if numerical { 3 } else { 2 })
        }
    }
}
