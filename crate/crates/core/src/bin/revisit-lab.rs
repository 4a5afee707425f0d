use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use revisit_lab::pipeline::{self, PipelineConfig};
use revisit_lab::Result;

/// Revisitation lab: synthetic logs, save/revisit attribution, perf
/// features, multi-task ranker training, offline evaluation and reports.
///
/// Every subcommand reads the same config file (generator keys at top level
/// plus [pipeline], [train] and [weights] sections) and writes into
/// `pipeline.out_dir`. Worker threads are capped by REVISIT_LAB_THREADS
/// (0 = automatic). Exit codes: 0 success, 1 runtime or config error,
/// 2 usage error.
#[derive(Parser)]
#[command(name = "revisit-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Config file; built-in defaults when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for every randomized stage (generator and training).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding `pipeline.out_dir`.
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct TrainFlags {
    /// Training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// SGD learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Mini-batch size.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Revisit utility as a multiple of the repin utility.
    #[arg(long)]
    u_rp_rv_ratio: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the event log and feature sidecar.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Join saves with revisits and write attributions and revisit labels.
    Attribute {
        #[command(flatten)]
        common: Common,
    },
    /// Compute the windowed per-pin perf feature tables.
    Features {
        #[command(flatten)]
        common: Common,
    },
    /// Extract action labels and assemble the train and eval datasets.
    Assemble {
        #[command(flatten)]
        common: Common,
    },
    /// Train the multi-task ranker on the train dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Evaluate a model; with --baseline compare two model files.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Cutoff for the @k metrics.
        #[arg(long)]
        k: Option<usize>,
        /// Model to evaluate (default: the trained model in the output dir).
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        /// Second model; the report then holds the lift of --model over it.
        #[arg(long, value_name = "PATH")]
        baseline: Option<PathBuf>,
        /// Dataset to rank (default: the eval dataset in the output dir).
        #[arg(long, value_name = "PATH")]
        dataset: Option<PathBuf>,
        /// Report path (default: eval_report.csv in the output dir).
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Write behavioral reports.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Cutoff for the per-topic repin volume.
        #[arg(long)]
        k: Option<usize>,
        /// Also write fig3a, fig3b, fig4, fig5, fig8, fig9 and table3 CSVs.
        #[arg(long)]
        plot_data: bool,
        /// Model whose eval-set feeds fill the per-topic model columns.
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
    },
    /// Run every enabled stage and write the manifest.
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        train: TrainFlags,
        /// Cutoff for the @k metrics.
        #[arg(long)]
        k: Option<usize>,
        /// Also write the per-figure CSVs.
        #[arg(long)]
        plot_data: bool,
    },
}

fn load(common: &Common) -> Result<PipelineConfig> {
    let mut config = match &common.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.set_seed(seed);
    }
    if let Some(dir) = &common.out_dir {
        config.pipeline.out_dir = dir.clone();
    }
    let dir = &config.pipeline.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| revisit_lab::Error::file(dir, e))?;
    Ok(config)
}

fn apply_train(config: &mut PipelineConfig, flags: &TrainFlags) {
    if let Some(e) = flags.epochs {
        config.train.epochs = e;
    }
    if let Some(lr) = flags.lr {
        config.train.learning_rate = lr;
    }
    if let Some(b) = flags.batch_size {
        config.train.batch_size = b;
    }
    if let Some(r) = flags.u_rp_rv_ratio {
        config.weights.u_rp_rv_ratio = Some(r);
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate { common } => {
            let c = load(&common)?;
            pipeline::stage_generate(
                &c.gen,
                &c.out_path(pipeline::EVENTS_FILE),
                &c.out_path(pipeline::SIDECAR_FILE),
            )
        }
        Command::Attribute { common } => {
            let c = load(&common)?;
            let events = c.events_path();
            let pairs = c.out_path(pipeline::ATTRIBUTIONS_FILE);
            pipeline::stage_revisit_join(&events, &pairs)?;
            pipeline::stage_revisit_labels(&events, &pairs, &c.out_path(pipeline::REVISIT_LABELS_FILE))
        }
        Command::Features { common } => {
            let c = load(&common)?;
            pipeline::stage_perf_features(&c.events_path(), &c.out_path(pipeline::PERF_FILE))
        }
        Command::Assemble { common } => {
            let c = load(&common)?;
            let events = c.events_path();
            let actions = c.out_path(pipeline::ACTION_LABELS_FILE);
            pipeline::stage_action_labels(&events, &actions)?;
            let sidecar = c.sidecar_path();
            if !sidecar.is_file() {
                pipeline::stage_sidecar(&c.gen, &events, &sidecar)?;
            }
            let inputs = pipeline::AssembleInputs {
                events: &events,
                sidecar: &sidecar,
                perf: &c.out_path(pipeline::PERF_FILE),
                action_labels: &actions,
                revisit_labels: &c.out_path(pipeline::REVISIT_LABELS_FILE),
            };
            pipeline::stage_assemble(
                &inputs,
                c.pipeline.eval_days,
                &c.out_path(pipeline::TRAIN_SET_FILE),
                &c.out_path(pipeline::EVAL_SET_FILE),
            )
        }
        Command::Train { common, train } => {
            let mut c = load(&common)?;
            apply_train(&mut c, &train);
            c.train.validate()?;
            let losses = pipeline::stage_train(
                &c.out_path(pipeline::TRAIN_SET_FILE),
                &c.train,
                &c.weights.loss_weights()?,
                &c.weights.utility_weights()?,
                &c.out_path(pipeline::MODEL_FILE),
            )?;
            for (epoch, loss) in losses.iter().enumerate() {
                println!("epoch {epoch}: loss {loss:.6}");
            }
            Ok(())
        }
        Command::Evaluate {
            common,
            k,
            model,
            baseline,
            dataset,
            out,
        } => {
            let c = load(&common)?;
            let k = k.unwrap_or(c.pipeline.k);
            let model = model.unwrap_or_else(|| c.model_path());
            let data = dataset.unwrap_or_else(|| c.out_path(pipeline::EVAL_SET_FILE));
            let out = out.unwrap_or_else(|| c.out_path(pipeline::EVAL_REPORT_FILE));
            match baseline {
                Some(b) => pipeline::compare_models(&model, &b, &data, k, &out),
                None => pipeline::stage_evaluate(&model, &data, k, &out),
            }
        }
        Command::Analyze {
            common,
            k,
            plot_data,
            model,
        } => {
            let c = load(&common)?;
            let eval_set = c.out_path(pipeline::EVAL_SET_FILE);
            let inputs = pipeline::AnalyzeInputs {
                events: &c.events_path(),
                revisit_labels: &c.out_path(pipeline::REVISIT_LABELS_FILE),
                model: model.as_deref().map(|m| (m, eval_set.as_path())),
            };
            let plot = plot_data || c.pipeline.plot_data;
            let dir = c.out_path(pipeline::ANALYSIS_DIR);
            pipeline::stage_analyze(&inputs, k.unwrap_or(c.pipeline.k), plot, &dir).map(|_| ())
        }
        Command::Pipeline {
            common,
            train,
            k,
            plot_data,
        } => {
            let mut c = load(&common)?;
            apply_train(&mut c, &train);
            if let Some(k) = k {
                c.pipeline.k = k;
            }
            c.pipeline.plot_data |= plot_data;
            let manifest = pipeline::run_pipeline(&c)?;
            for s in &manifest.stages {
                println!("{:<15} {:?}", s.name, s.status);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = revisit_lab::thread_pool().and_then(|pool| pool.install(|| run(cli.command)));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
