//! Command-line front end. Subcommands `gen`, `train`, `eval`, `repro` run
//! the batch pipeline over a shared output directory; all randomness flows
//! from explicit seeds. Exit codes: 0 success, 1 runtime/validation failure,
//! 2 usage error.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Result;
use crate::pipeline::{self, RunConfig, Workspace};

#[derive(Parser, Debug)]
#[command(
    name = "facemimic",
    about = "Morphology-independent facial expression imitation pipeline",
    version
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug)]
pub struct GlobalArgs {
    /// Output directory holding all artifacts.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Master seed; every other seed is derived from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Overwrite existing artifacts.
    #[arg(long, global = true)]
    pub force: bool,

    /// Reuse existing artifacts instead of recomputing them.
    #[arg(long, global = true)]
    pub resume: bool,

    /// JSON file overriding any subset of the run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate artifacts (head model, datasets, rig, robot pairs).
    Gen {
        #[command(subcommand)]
        what: GenCommand,
    },
    /// Train models.
    Train {
        #[command(subcommand)]
        what: TrainCommand,
    },
    /// Produce evaluation reports.
    Eval {
        #[command(subcommand)]
        what: EvalCommand,
    },
    /// Run the whole pipeline (gen, train, eval) with one master seed and
    /// write a manifest of artifact hashes.
    Repro,
}

#[derive(Subcommand, Debug)]
pub enum GenCommand {
    /// Procedural head model.
    Model {
        #[arg(long)]
        n_vertices: Option<usize>,
        #[arg(long)]
        n_shape: Option<usize>,
        #[arg(long)]
        n_expr: Option<usize>,
        #[arg(long)]
        landmarks: Option<usize>,
    },
    /// Supervised face dataset.
    Dataset {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        sigma_e: Option<f64>,
        #[arg(long)]
        sigma_m: Option<f64>,
        #[arg(long)]
        pose_max: Option<f64>,
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Labeled expression-cluster corpus.
    Clusters {
        #[arg(long)]
        per_cluster: Option<usize>,
        #[arg(long)]
        spread: Option<f64>,
    },
    /// Simulated robot rig.
    Rig {
        #[arg(long)]
        actuators: Option<usize>,
    },
    /// Robot command/expression pairs (needs rig + trained edm).
    Pairs {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
    },
}

#[derive(Subcommand, Debug)]
pub enum TrainCommand {
    /// Expression decoupling encoder.
    Edm {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
    },
    /// Transfer decoder (commands -> expression).
    EtmDec {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
    },
    /// Transfer encoder (expression -> commands), against the frozen decoder.
    EtmEnc {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
    },
}

#[derive(Subcommand, Debug)]
pub enum EvalCommand {
    /// Per-category CV of landmark vs decoupled representations.
    Table1,
    /// Representation errors against the random-generation baseline.
    Table2,
    /// Command errors of all methods on the held-out robot corpus.
    Table3,
    /// End-to-end imitation with the reachability benchmark.
    Imitate {
        #[arg(long)]
        n: Option<usize>,
    },
    /// 2D PCA embeddings of both representations over the cluster corpus.
    Embed,
}

/// Resolves the run configuration: defaults, then the optional config file,
/// then explicit flags.
fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.global.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.global.seed {
        cfg.master_seed = seed;
    }
    match &cli.command {
        Command::Gen { what } => match what {
            GenCommand::Model { n_vertices, n_shape, n_expr, landmarks } => {
                set(&mut cfg.n_vertices, n_vertices);
                set(&mut cfg.n_shape, n_shape);
                set(&mut cfg.n_expr, n_expr);
                set(&mut cfg.n_landmarks, landmarks);
            }
            GenCommand::Dataset { n, sigma_e, sigma_m, pose_max, noise } => {
                set(&mut cfg.n_samples, n);
                set(&mut cfg.sigma_e, sigma_e);
                set(&mut cfg.sigma_m, sigma_m);
                set(&mut cfg.pose_max, pose_max);
                set(&mut cfg.noise_sigma, noise);
            }
            GenCommand::Clusters { per_cluster, spread } => {
                set(&mut cfg.per_cluster, per_cluster);
                set(&mut cfg.cluster_spread, spread);
            }
            GenCommand::Rig { actuators } => {
                set(&mut cfg.n_actuators, actuators);
            }
            GenCommand::Pairs { n, noise } => {
                set(&mut cfg.n_robot_samples, n);
                set(&mut cfg.noise_sigma, noise);
            }
        },
        Command::Train { what } => match what {
            TrainCommand::Edm { epochs, lr, batch } => {
                set(&mut cfg.edm_epochs, epochs);
                set(&mut cfg.edm_lr, lr);
                set(&mut cfg.edm_batch, batch);
            }
            TrainCommand::EtmDec { epochs, lr, batch } => {
                set(&mut cfg.etm_epochs, epochs);
                set(&mut cfg.etm_lr, lr);
                set(&mut cfg.etm_batch, batch);
            }
            TrainCommand::EtmEnc { epochs, lr, batch, lambda } => {
                set(&mut cfg.etm_epochs, epochs);
                set(&mut cfg.etm_lr, lr);
                set(&mut cfg.etm_batch, batch);
                set(&mut cfg.etm_lambda, lambda);
            }
        },
        Command::Eval { what } => {
            if let EvalCommand::Imitate { n } = what {
                set(&mut cfg.imitation_samples, n);
            }
        }
        Command::Repro => {}
    }
    Ok(cfg)
}

fn set<T: Copy>(slot: &mut T, value: &Option<T>) {
    if let Some(v) = value {
        *slot = *v;
    }
}

/// Executes a parsed invocation.
pub fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    let ws = Workspace::new(&cli.global.out);
    let force = cli.global.force;
    let resume = cli.global.resume;
    match &cli.command {
        Command::Gen { what } => match what {
            GenCommand::Model { .. } => {
                pipeline::gen_model(&cfg, &ws, force, resume)?;
            }
            GenCommand::Dataset { .. } => {
                pipeline::gen_dataset(&cfg, &ws, force, resume)?;
            }
            GenCommand::Clusters { .. } => {
                pipeline::gen_clusters(&cfg, &ws, force, resume)?;
            }
            GenCommand::Rig { .. } => {
                pipeline::gen_rig(&cfg, &ws, force, resume)?;
            }
            GenCommand::Pairs { .. } => {
                pipeline::gen_pairs(&cfg, &ws, force, resume)?;
            }
        },
        Command::Train { what } => match what {
            TrainCommand::Edm { .. } => {
                pipeline::train_edm_step(&cfg, &ws, force, resume)?;
            }
            TrainCommand::EtmDec { .. } => {
                pipeline::train_decoder_step(&cfg, &ws, force, resume)?;
            }
            TrainCommand::EtmEnc { .. } => {
                pipeline::train_encoder_step(&cfg, &ws, force, resume)?;
            }
        },
        Command::Eval { what } => match what {
            EvalCommand::Table1 => {
                pipeline::eval_table1(&cfg, &ws)?;
            }
            EvalCommand::Table2 => {
                pipeline::eval_table2(&cfg, &ws)?;
            }
            EvalCommand::Table3 => {
                pipeline::eval_table3(&cfg, &ws)?;
            }
            EvalCommand::Imitate { .. } => {
                pipeline::eval_imitate(&cfg, &ws)?;
            }
            EvalCommand::Embed => {
                pipeline::eval_embed(&cfg, &ws)?;
            }
        },
        Command::Repro => {
            pipeline::repro(&cfg, &ws, force, resume)?;
        }
    }
    Ok(())
}
