//! `smooth-topk`: losses, gradient checks, stability sweeps, benchmarks,
//! top-k marginals and toy training from the command line.
//!
//! Output is `key=value` lines plus CSV tables. Exit status is 0 on success,
//! 1 on a data error or failed check and 2 on a usage error.

mod commands;
mod scorefile;

use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use smooth_topk::train::{LossKind, NoisySpec, TrainConfig};
use smooth_topk::{Error, ForwardAlgo, LossConfig, Precision, Result};

use commands::Output;
use scorefile::ScoreFile;

#[derive(Parser)]
#[command(name = "smooth-topk", version, about = "Smooth top-k losses and their tooling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct LossArgs {
    /// Rank k (at least 1, below the number of classes).
    #[arg(long)]
    k: usize,
    /// Temperature.
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Margin.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
}

impl LossArgs {
    fn config(&self) -> LossConfig {
        LossConfig::new(self.k).with_tau(self.tau).with_alpha(self.alpha)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Per-sample losses of a score file (`label,s_0,...` rows; `-` reads stdin).
    Loss {
        input: PathBuf,
        #[command(flatten)]
        loss: LossArgs,
        /// Use the hard (non-smooth) loss.
        #[arg(long)]
        hard: bool,
        #[arg(long, default_value = "f64")]
        precision: Precision,
    },
    /// Analytic gradients against central finite differences on random scores.
    Gradcheck {
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Largest accepted relative error.
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
        /// Finite-difference step.
        #[arg(long, default_value_t = 1e-6)]
        h: f64,
    },
    /// Finiteness of loss and gradient over a list of temperatures.
    Stability {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, value_delimiter = ',', default_value = "10,1,0.1,0.01,0.001,0.0001")]
        taus: Vec<f64>,
        #[arg(long, default_value = "f32")]
        precision: Precision,
        /// Scores are uniform in [-range, range].
        #[arg(long = "score-range", default_value_t = 20.0)]
        score_range: f64,
        #[arg(long, default_value_t = 128)]
        batch: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Evaluate the naive linear-space path instead of the log-space one.
        #[arg(long)]
        linear: bool,
    },
    /// Forward-pass timings as CSV (`n,algo,mean_ms,std_ms`).
    Bench {
        #[arg(long = "n-list", value_delimiter = ',', default_value = "1000,10000,100000")]
        n_list: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        batch: usize,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        /// Algorithms to time: dc, sum, or a comma-separated list.
        #[arg(long, value_delimiter = ',', default_value = "dc")]
        algo: Vec<ForwardAlgo>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Top-k marginal probabilities of each row of a score file (labels are ignored).
    Proba {
        input: PathBuf,
        #[arg(long)]
        k: usize,
        /// Average the marginals of all rows, as for several crops of one input.
        #[arg(long)]
        aggregate: bool,
    },
    /// Train a linear classifier on synthetic coarse/fine data.
    TrainToy {
        #[arg(long, default_value_t = 10)]
        coarse: usize,
        #[arg(long, default_value_t = 5)]
        fine: usize,
        #[arg(long, default_value_t = 20)]
        dim: usize,
        #[arg(long, default_value_t = 5000)]
        samples: usize,
        /// Probability of resampling a training label within its coarse class.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// ce or smooth.
        #[arg(long, default_value = "smooth")]
        loss: LossKind,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        /// Step size at epoch t is lr / (1 + lr_decay * t).
        #[arg(long = "lr-decay", default_value_t = 0.1)]
        lr_decay: f64,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, default_value_t = 1e-4)]
        lambda: f64,
    },
}

fn read_scores(path: &PathBuf) -> Result<ScoreFile> {
    if path.as_os_str() == "-" {
        return scorefile::parse(io::stdin().lock());
    }
    let file = File::open(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    scorefile::parse(file)
}

fn run(cli: Cli) -> Result<Output> {
    match cli.command {
        Command::Loss { input, loss, hard, precision } => {
            let cfg = loss.config().with_precision(precision);
            // flags are checked before the file is read
            cfg.validate(!hard)?;
            commands::loss(&read_scores(&input)?, &cfg, hard)
        }
        Command::Gradcheck { n, k, tau, alpha, trials, seed, tol, h } => {
            let cfg = LossConfig::new(k).with_tau(tau).with_alpha(alpha);
            commands::gradcheck_cmd(n, &cfg, trials, seed, h, tol)
        }
        Command::Stability { n, k, taus, precision, score_range, batch, seed, linear } => {
            commands::stability(n, k, &taus, precision, score_range, batch, seed, linear)
        }
        Command::Bench { n_list, k, batch, repeats, algo, seed } => {
            commands::bench(&n_list, k, batch, repeats, &algo, seed)
        }
        Command::Proba { input, k, aggregate } => {
            if k < 1 {
                return Err(Error::Usage(format!("k must be at least 1, got {k}")));
            }
            commands::proba(&read_scores(&input)?, k, aggregate)
        }
        Command::TrainToy {
            coarse,
            fine,
            dim,
            samples,
            noise,
            seed,
            loss,
            k,
            tau,
            alpha,
            epochs,
            lr,
            lr_decay,
            batch,
            lambda,
        } => {
            let spec = NoisySpec { coarse, fine_per_coarse: fine, dim, samples, noise, seed, sigma: 1.0 };
            let mut cfg = TrainConfig { epochs, lr, lr_decay, batch_size: batch, seed, ..TrainConfig::new(loss, k) };
            cfg.loss_cfg = cfg.loss_cfg.with_tau(tau).with_alpha(alpha);
            commands::train_toy(&spec, &cfg, lambda)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            let mut stdout = io::stdout().lock();
            if stdout.write_all(out.text.as_bytes()).and_then(|_| stdout.flush()).is_err() {
                return ExitCode::from(1);
            }
            if out.ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("smooth-topk: {e}");
            match e {
                Error::Usage(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
