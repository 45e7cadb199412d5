use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use modalnet::checkpoint::Checkpoint;
use modalnet::config::{hex_string, RunConfig};
use modalnet::data::{self, SynthSpec};
use modalnet::error::Error;
use modalnet::gradcheck;
use modalnet::metrics::{metrics, EvalReport};
use modalnet::model::Model;
use modalnet::pattern::{format_pattern, parse_pattern};
use modalnet::train::{evaluate, Trainer};
use modalnet::Result;

#[derive(Parser)]
#[command(
    name = "modalnet",
    version,
    about = "Multimodal emotion classifier with a trainable prompt pool"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multimodal dataset directory
    GenData {
        /// TOML generation spec; defaults apply when omitted
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write a checkpoint
    Train {
        /// TOML run configuration; defaults apply when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset directory produced by gen-data
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint output path
        #[arg(long)]
        out: PathBuf,
        /// Which stages to run: 1, 2, both, or single (multimodal only,
        /// no pool transfer)
        #[arg(long, default_value = "both")]
        stage: String,
        /// Checkpoint to resume from (required for --stage 2)
        #[arg(long)]
        init: Option<PathBuf>,
        /// Print per-epoch progress to stderr
        #[arg(long)]
        verbose: bool,
    },
    /// Evaluate a checkpoint under a forced presence pattern
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Presence pattern, e.g. VAT, V-T, --T
        #[arg(long, default_value = "VAT", allow_hyphen_values = true)]
        pattern: String,
        /// Comma-separated class subset, e.g. 0,2,5
        #[arg(long)]
        classes: Option<String>,
        /// Write the JSON report here
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write the confusion matrix CSV here
        #[arg(long)]
        confusion: Option<PathBuf>,
        /// Dataset split to evaluate: train, val, or test
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Sweep prompt length, pool size, and top-k; compare single-stage
    /// against two-stage training
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// CSV output path
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify reverse-mode gradients against central differences
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        configs: usize,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn file_sha256(path: &Path) -> Result<String> {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(fs::read(path)?);
    Ok(hex_string(&hasher.finalize()))
}

fn cmd_gen_data(spec: &Option<PathBuf>, out: &Path) -> Result<()> {
    let spec = match spec {
        Some(p) => SynthSpec::from_toml(&fs::read_to_string(p)?)?,
        None => SynthSpec::default(),
    };
    let dataset = data::generate(&spec)?;
    data::save(&dataset, out)?;
    println!(
        "wrote {} train / {} val / {} test samples, {} classes, to {}",
        dataset.train.len(),
        dataset.val.len(),
        dataset.test.len(),
        dataset.num_classes,
        out.display()
    );
    Ok(())
}

fn cmd_train(
    config: &Option<PathBuf>,
    data_dir: &Path,
    out: &Path,
    stage: &str,
    init: &Option<PathBuf>,
    verbose: bool,
) -> Result<()> {
    let cfg = load_config(config)?;
    let dataset = data::load(data_dir)?;
    if dataset.dims != [cfg.model.d_v, cfg.model.d_a, cfg.model.d_t] {
        return Err(Error::Config(format!(
            "dataset channels {:?} do not match configured widths {:?}",
            dataset.dims,
            [cfg.model.d_v, cfg.model.d_a, cfg.model.d_t]
        )));
    }

    let (mut model, mut trainer) = match (stage, init) {
        ("2", Some(init_path)) => {
            let ckpt = Checkpoint::load_verified(init_path, &cfg.hash())?;
            let mut trainer = Trainer::new(&cfg.train)?;
            trainer.opt = ckpt.optimizer;
            trainer.state = ckpt.train_state;
            (ckpt.model, trainer)
        }
        ("2", None) => {
            return Err(Error::Config(
                "--stage 2 needs --init with a stage-1 checkpoint".into(),
            ))
        }
        _ => (
            Model::new(&cfg.model, dataset.num_classes, cfg.train.seed)?,
            Trainer::new(&cfg.train)?,
        ),
    };
    trainer.verbose = verbose;

    match stage {
        "1" => trainer.stage1(&mut model, &dataset)?,
        "2" => trainer.stage2(&mut model, &dataset)?,
        "both" => {
            trainer.stage1(&mut model, &dataset)?;
            trainer.stage2(&mut model, &dataset)?;
        }
        "single" => trainer.single_stage(&mut model, &dataset)?,
        other => {
            return Err(Error::Config(format!(
                "unknown --stage `{other}` (expected 1, 2, both, or single)"
            )))
        }
    }

    let epochs = trainer.state.history.len();
    Checkpoint::new(model, trainer.opt, trainer.state, cfg.hash()).save(out)?;
    println!("trained {epochs} epochs, checkpoint at {}", out.display());
    Ok(())
}

fn parse_classes(spec: &str) -> Result<Vec<usize>> {
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad class index `{s}`")))
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    ckpt_path: &Path,
    data_dir: &Path,
    pattern: &str,
    classes: &Option<String>,
    report_path: &Option<PathBuf>,
    confusion_path: &Option<PathBuf>,
    split: &str,
) -> Result<()> {
    let presence = parse_pattern(pattern)?;
    let subset = classes.as_deref().map(parse_classes).transpose()?;
    let ckpt_hash = file_sha256(ckpt_path)?;
    let mut model = Checkpoint::load(ckpt_path)?.model;
    let dataset = data::load(data_dir)?;
    let samples = match split {
        "train" => &dataset.train,
        "val" => &dataset.val,
        "test" => &dataset.test,
        other => {
            return Err(Error::Config(format!(
                "unknown --split `{other}` (expected train, val, or test)"
            )))
        }
    };

    let cm = evaluate(&mut model, samples, presence, subset.as_deref())?;
    let (war, uar, per_class_recall) = metrics(&cm)?;
    let report = EvalReport {
        war,
        uar,
        per_class_recall,
        presence_pattern: presence,
        class_subset: subset.clone(),
        checkpoint_hash: ckpt_hash,
        num_samples: cm.total(),
    };

    println!(
        "pattern {}  samples {}",
        format_pattern(presence),
        report.num_samples
    );
    print!("{}", report.to_table());

    if let Some(p) = report_path {
        fs::write(p, serde_json::to_vec_pretty(&report).map_err(Error::from)?)?;
    }
    if let Some(p) = confusion_path {
        let names: Vec<String> = match &subset {
            Some(s) => s.iter().map(|c| format!("class{c}")).collect(),
            None => (0..cm.num_classes()).map(|c| format!("class{c}")).collect(),
        };
        fs::write(p, cm.to_csv(&names))?;
    }
    Ok(())
}

fn cmd_ablate(config: &Option<PathBuf>, data_dir: &Path, out: &Path) -> Result<()> {
    let base = load_config(config)?;
    let dataset = data::load(data_dir)?;
    let mut csv = String::from(
        "prompt_len,pool_size,top_k,war_single_stage,war_two_stage,delta\n",
    );
    for prompt_len in [32usize, 64] {
        for pool_size in [8usize, 16, 32] {
            for top_k in [3usize, 5] {
                let mut cfg = base.clone();
                cfg.model.prompt_len = prompt_len;
                cfg.model.pool_size = pool_size;
                cfg.model.top_k = top_k;
                cfg.validate()?;

                let war_single = {
                    let mut model =
                        Model::new(&cfg.model, dataset.num_classes, cfg.train.seed)?;
                    let mut trainer = Trainer::new(&cfg.train)?;
                    trainer.single_stage(&mut model, &dataset)?;
                    let cm = evaluate(&mut model, &dataset.test, [true; 3], None)?;
                    metrics(&cm)?.0
                };
                let war_two = {
                    let mut model =
                        Model::new(&cfg.model, dataset.num_classes, cfg.train.seed)?;
                    let mut trainer = Trainer::new(&cfg.train)?;
                    trainer.stage1(&mut model, &dataset)?;
                    trainer.stage2(&mut model, &dataset)?;
                    let cm = evaluate(&mut model, &dataset.test, [true; 3], None)?;
                    metrics(&cm)?.0
                };
                csv.push_str(&format!(
                    "{prompt_len},{pool_size},{top_k},{war_single:.6},{war_two:.6},{:.6}\n",
                    war_two - war_single
                ));
                eprintln!(
                    "prompt_len {prompt_len:>2}  pool {pool_size:>2}  top_k {top_k}  \
                     single {war_single:.3}  two-stage {war_two:.3}"
                );
            }
        }
    }
    fs::write(out, csv)?;
    println!("ablation grid written to {}", out.display());
    Ok(())
}

fn cmd_gradcheck(seed: u64, configs: usize) -> Result<()> {
    let report = gradcheck::run_all(seed, configs)?;
    println!(
        "checked {} configs, {} probes ({} skipped), max relative error {:.3e}",
        report.configs, report.probes, report.skipped, report.max_rel_err
    );
    if report.max_rel_err >= gradcheck::DEFAULT_TOLERANCE {
        let worst = report.worst.expect("probes > 0");
        return Err(Error::Contract(format!(
            "gradient mismatch at {}[{}]: analytic {:.6e}, numeric {:.6e}",
            worst.param, worst.index, worst.analytic, worst.numeric
        )));
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.cmd {
        Command::GenData { spec, out } => cmd_gen_data(spec, out),
        Command::Train {
            config,
            data,
            out,
            stage,
            init,
            verbose,
        } => cmd_train(config, data, out, stage, init, *verbose),
        Command::Eval {
            ckpt,
            data,
            pattern,
            classes,
            report,
            confusion,
            split,
        } => cmd_eval(ckpt, data, pattern, classes, report, confusion, split),
        Command::Ablate { config, data, out } => cmd_ablate(config, data, out),
        Command::Gradcheck { seed, configs } => cmd_gradcheck(*seed, *configs),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
