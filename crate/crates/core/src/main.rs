use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use gsr_core::config::RunConfig;
use gsr_core::data::{save_matrix, to_f32};
use gsr_core::pipeline::{prepare_dataset, write_report, write_sweep, Pipeline, SweepAxis, Variant};
use gsr_core::pretrain::write_loss_history;
use gsr_core::refine::{load_plan, save_plan, score_pairs, write_score_table};

#[derive(Parser)]
#[command(name = "gsr", version, about = "Graph structure refinement with contrastive pretraining")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Run only this seed (repeatable); overrides `seeds`.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Output directory; overrides `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parallel jobs; overrides `jobs`.
    #[arg(long)]
    jobs: Option<usize>,
    /// Dataset manifest, directory or name; overrides `dataset.source`.
    #[arg(long)]
    dataset: Option<String>,
    /// Dotted `key=value` override, e.g. `pretrain.alpha=1.0` (repeatable).
    #[arg(long = "set")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Structural embeddings (one GSRM matrix per seed).
    Embed(Common),
    /// Contrastive pretraining: checkpoint and loss history per seed.
    Pretrain(Common),
    /// Edge scoring and selection: refinement plan per seed.
    Refine {
        #[command(flatten)]
        common: Common,
        /// Also write the full candidate score table.
        #[arg(long)]
        scores: bool,
    },
    /// Fine-tune and evaluate, optionally on a saved refinement plan.
    Finetune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// All stages for every seed, with an aggregated report.
    Pipeline(Common),
    /// Vary one parameter over a grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// m_plus, m_minus, alpha or beta_f.
        #[arg(long)]
        axis: String,
        /// Comma-separated grid values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Ablation variants (all by default).
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long = "variant", value_delimiter = ',')]
        variants: Vec<String>,
    },
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let mut overrides = c.set.clone();
    if let Some(d) = &c.dataset {
        overrides.push(format!("dataset.source={}", toml_string(d)));
    }
    let cfg = match &c.config {
        Some(path) => RunConfig::load(path, &overrides)?,
        None => RunConfig::from_toml("", &overrides)?,
    };
    let mut cfg = cfg;
    if !c.seeds.is_empty() {
        cfg.seeds = c.seeds.clone();
    }
    if let Some(out) = &c.out {
        cfg.out_dir = out.clone();
    }
    if let Some(j) = c.jobs {
        cfg.jobs = j;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn setup(c: &Common) -> Result<(RunConfig, Pipeline)> {
    let cfg = load_config(c).context("config")?;
    let data = prepare_dataset(&cfg.dataset).context("dataset")?;
    info!(
        "{}: {} nodes, {} edges, {} features",
        data.name,
        data.graph().num_nodes(),
        data.graph().num_edges(),
        data.features.cols()
    );
    std::fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let used = cfg.out_dir.join("config.toml");
    std::fs::write(&used, cfg.to_toml()).with_context(|| format!("writing {}", used.display()))?;
    Ok((cfg, Pipeline::new(data)))
}

fn seed_path(dir: &Path, stem: &str, seed: u64, ext: &str) -> PathBuf {
    dir.join(format!("{stem}_seed{seed}.{ext}"))
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Embed(c) => {
            let (cfg, p) = setup(&c)?;
            for &seed in &cfg.seeds {
                let s = p.structure_view(&cfg.deepwalk, seed)?;
                let path = seed_path(&cfg.out_dir, "structure", seed, "gsrm");
                save_matrix(&path, &to_f32(&s.embedding))?;
                println!("{}", path.display());
            }
        }
        Command::Pretrain(c) => {
            let (cfg, p) = setup(&c)?;
            for &seed in &cfg.seeds {
                let pre = p.pretrained(&cfg, seed)?;
                let ck = seed_path(&cfg.out_dir, "pretrained", seed, "ckpt");
                pre.model.to_checkpoint(&cfg.fingerprint()).save(&ck)?;
                write_loss_history(&seed_path(&cfg.out_dir, "loss", seed, "tsv"), &pre.history)?;
                println!("{}", ck.display());
            }
        }
        Command::Refine { common, scores } => {
            let (cfg, p) = setup(&common)?;
            let refine = cfg.refine.resolve(p.data.graph().num_edges());
            for &seed in &cfg.seeds {
                let pre = p.pretrained(&cfg, seed)?;
                if scores {
                    let table = score_pairs(&pre.embeddings, &refine, p.data.graph())?;
                    write_score_table(&seed_path(&cfg.out_dir, "scores", seed, "tsv"), &table)?;
                }
                let plan = p.plan(&pre, &refine)?;
                let path = seed_path(&cfg.out_dir, "plan", seed, "diff");
                save_plan(&path, &plan)?;
                println!("{} (+{} -{})", path.display(), plan.add.len(), plan.remove.len());
            }
        }
        Command::Finetune { common, plan } => {
            let (cfg, p) = setup(&common)?;
            let report = match plan {
                Some(path) => {
                    let plan = load_plan(&path)?;
                    let runs = cfg
                        .seeds
                        .iter()
                        .map(|&s| p.run_seed_with_plan(&cfg, s, &plan))
                        .collect::<gsr_core::Result<Vec<_>>>()?;
                    p.report_of(&cfg, "finetune", runs)
                }
                None => p.run(&cfg, "finetune")?,
            };
            write_report(&cfg.out_dir, &report)?;
            print!("{}", report.to_table());
        }
        Command::Pipeline(c) => {
            let (cfg, p) = setup(&c)?;
            let report = p.run(&cfg, "pipeline")?;
            write_report(&cfg.out_dir, &report)?;
            print!("{}", report.to_table());
        }
        Command::Sweep { common, axis, values } => {
            let (cfg, p) = setup(&common)?;
            let axis: SweepAxis = axis.parse()?;
            let sweep = p.run_sweep(&cfg, axis, &values)?;
            let path = write_sweep(&cfg.out_dir, &sweep)?;
            print!("{}", sweep.series());
            println!("{}", path.display());
        }
        Command::Ablate { common, variants } => {
            let (cfg, p) = setup(&common)?;
            let variants = if variants.is_empty() {
                Variant::ALL.to_vec()
            } else {
                variants.iter().map(|v| v.parse()).collect::<gsr_core::Result<Vec<Variant>>>()?
            };
            if variants.is_empty() {
                bail!("no variants selected");
            }
            for v in variants {
                let report = p.run_ablation(&cfg, v)?;
                write_report(&cfg.out_dir, &report)?;
                print!("{}", report.to_table());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
