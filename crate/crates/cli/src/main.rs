use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use entwitness::gme::{max_overlap, GmeConfig, OrderMTensor};
use entwitness::pipeline::{
    evaluate, export_latents, generate_dataset, load_checkpoint, read_state_file, score_dataset, train_on, Dataset,
    DatasetKind, GenerateOptions, StateInput, ThresholdSource, TrainConfig,
};
use entwitness::{Error, Result};

#[derive(Parser)]
#[command(name = "entwitness", version, about = "Entanglement detection with complex-valued pseudo-siamese networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ThresholdArg {
    Eer,
    Max,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset file.
    Gen {
        #[arg(long)]
        kind: String,
        #[arg(long)]
        count: usize,
        /// Qubit count (pure-state kinds; must match fixed-size kinds).
        #[arg(long)]
        qubits: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// GME restarts used to label entangled_pure samples.
        #[arg(long, default_value_t = entwitness::gme::DEFAULT_RESTARTS)]
        restarts: usize,
    },
    /// Train a model from a key = value config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's checkpoint path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a labeled test set.
    Eval {
        #[arg(long)]
        model: PathBuf,
        /// One or more labeled dataset files, evaluated together.
        #[arg(long, required = true, num_args = 1..)]
        test: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "eer")]
        threshold: ThresholdArg,
        /// Separable validation set for `--threshold max`.
        #[arg(long)]
        validation: Option<PathBuf>,
        /// JSON report path; defaults to the first test path with `.report.json`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Print anomaly scores for a text state file or a dataset file.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        state: PathBuf,
    },
    /// Maximal product-state overlap of a pure state.
    Gme {
        #[arg(long)]
        state: PathBuf,
        #[arg(long, default_value_t = entwitness::gme::DEFAULT_RESTARTS)]
        restarts: usize,
        #[arg(long, default_value_t = entwitness::gme::DEFAULT_TOL)]
        tol: f64,
        #[arg(long, default_value_t = entwitness::gme::DEFAULT_EPSILON)]
        epsilon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write latent vectors and scores as CSV.
    ExportLatents {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn is_dataset_file(path: &Path) -> Result<bool> {
    let mut magic = [0u8; 4];
    let mut f = File::open(path)?;
    let n = f.read(&mut magic)?;
    Ok(n == 4 && &magic == entwitness::pipeline::DATASET_MAGIC)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { kind, count, qubits, seed, out, restarts } => {
            let kind: DatasetKind = kind.parse()?;
            let n_qubits = match (kind.fixed_qubits(), qubits) {
                (Some(f), Some(q)) if f != q => {
                    return Err(Error::InvalidArgument(format!("this kind is fixed at {f} qubits")))
                }
                (Some(f), _) => f,
                (None, Some(q)) => q,
                (None, None) => return Err(Error::InvalidArgument("--qubits is required for this kind".into())),
            };
            let opts = GenerateOptions { n_qubits, gme: GmeConfig { restarts, ..GmeConfig::default() } };
            let data = generate_dataset(kind, count, seed, &opts)?;
            data.save(&out)?;
            println!("wrote {} records ({}×{}) to {}", data.len(), data.dim(), data.dim(), out.display());
        }
        Command::Train { config, out } => {
            let text = std::fs::read_to_string(&config)?;
            let mut cfg = TrainConfig::parse(&text)?;
            if out.is_some() {
                cfg.checkpoint = out;
            }
            if cfg.checkpoint.is_none() {
                return Err(Error::InvalidArgument("no checkpoint path (set checkpoint or pass --out)".into()));
            }
            let data_path =
                cfg.train_data.clone().ok_or_else(|| Error::InvalidArgument("train_data is not set".into()))?;
            let data = Dataset::load(&data_path)?;
            let outcome = train_on(&cfg, &data, |e, _| {
                println!(
                    "epoch {:>3}  lr {:.3e}  L1 {:.6}  L2 {:.6}  adv1 {:.6}  adv2 {:.6}  total {:.6}",
                    e.epoch, e.lr, e.l1, e.l2, e.adv1, e.adv2, e.total
                );
            })?;
            println!(
                "saved {}-qubit model ({} parameters) to {}",
                outcome.model.arch.n_qubits,
                outcome.model.n_params(),
                cfg.checkpoint.as_ref().expect("checked above").display()
            );
        }
        Command::Eval { model, test, threshold, validation, report } => {
            let model = load_checkpoint(&model, None)?;
            let parts = test.iter().map(|p| Dataset::load(p)).collect::<Result<Vec<_>>>()?;
            let data = Dataset::concat(&parts.iter().collect::<Vec<_>>())?;
            let val_scores = match validation {
                Some(p) => {
                    let v = Dataset::load(&p)?;
                    entwitness::pipeline::check_training_labels(&v)?;
                    Some(score_dataset(&model, &v)?)
                }
                None => None,
            };
            let source = match threshold {
                ThresholdArg::Eer => ThresholdSource::Eer,
                ThresholdArg::Max => ThresholdSource::MaxSeparable { validation: val_scores.as_deref() },
            };
            let r = evaluate(&model, &data, source)?;
            let path = report.unwrap_or_else(|| test[0].with_extension("report.json"));
            std::fs::write(&path, r.to_json()?)?;
            print!("{}", r.summary());
            println!("report       {}", path.display());
        }
        Command::Score { model, state } => {
            let model = load_checkpoint(&model, None)?;
            let scores = if is_dataset_file(&state)? {
                score_dataset(&model, &Dataset::load(&state)?)?
            } else {
                let rho = read_state_file(&state)?.density_matrix();
                model.anomaly_scores(&model.input_batch([rho.matrix()])?)?
            };
            for s in scores {
                println!("{s}");
            }
        }
        Command::Gme { state, restarts, tol, epsilon, seed } => {
            let psi = match read_state_file(&state)? {
                StateInput::Pure(p) => p,
                StateInput::Mixed(_) => {
                    return Err(Error::InvalidArgument("gme needs a pure state (one amplitude per line)".into()))
                }
            };
            let mut cfg = GmeConfig { restarts, epsilon, ..GmeConfig::default() };
            cfg.eigen.tol = tol;
            let r = max_overlap(&OrderMTensor::from_pure_state(&psi), &cfg, seed)?;
            let verdict = if r.best.lambda_a < 1.0 - epsilon { "entangled" } else { "separable" };
            println!("lambda_A {:.12}", r.best.lambda_a);
            println!("verdict  {verdict}");
            println!("restarts {} converged of {}", r.converged_restarts, restarts);
        }
        Command::ExportLatents { model, data, out } => {
            let model = load_checkpoint(&model, None)?;
            let rows = export_latents(&model, &Dataset::load(&data)?, &out)?;
            println!("wrote {rows} rows to {}", out.display());
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::Format(_) => 2,
        Error::Io(io) if matches!(io.kind(), std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
