use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use discourse_cca::config::RunConfig;
use discourse_cca::data::{self, RetrievalInstance};
use discourse_cca::io::{read_jsonl, write_atomic};
use discourse_cca::{pipeline, synth, Error};

#[derive(Parser)]
#[command(name = "dlu", version, about = "Discourse tokens via (deep) CCA for dialogue response selection")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set cca.reg_r=0`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    Overlap,
    Planted,
}

#[derive(Subcommand)]
enum Command {
    /// Write a deterministic synthetic corpus in TSV form.
    Synth {
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "overlap")]
        kind: SynthKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Load the corpus and write triples and retrieval instances.
    Ingest,
    /// Train a DCCA model on one utterance pair and save it.
    TrainDcca {
        #[arg(long)]
        utt1: String,
        #[arg(long)]
        utt2: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump the discourse tokens of one instance's context as JSON lines.
    ExtractDiscourse {
        #[arg(long)]
        instances: Option<PathBuf>,
        /// Instance id (defaults to the first instance).
        #[arg(long)]
        id: Option<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank every instance's candidates.
    Rank {
        #[arg(long)]
        instances: Option<PathBuf>,
    },
    /// Score rankings and write report.json / report.csv.
    Evaluate {
        #[arg(long)]
        rankings: Option<PathBuf>,
        #[arg(long)]
        instances: Option<PathBuf>,
    },
    /// Print a saved report.
    Report {
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Command::Synth { n, seed, kind, out } = &cli.cmd {
        let dialogues = match kind {
            SynthKind::Overlap => synth::synthetic_corpus(*n, *seed),
            SynthKind::Planted => synth::planted_truth_corpus(*n, *seed),
        };
        write_atomic(out, data::to_tsv(&dialogues).as_bytes())?;
        println!("wrote {} dialogues to {}", dialogues.len(), out.display());
        return Ok(());
    }

    let cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    let out_dir = cfg.output_dir.clone();
    let default_instances = out_dir.join(pipeline::INSTANCES_FILE);
    match cli.cmd {
        Command::Synth { .. } => unreachable!(),
        Command::Ingest => {
            let s = pipeline::ingest(&cfg)?;
            println!(
                "dialogues={} triples={} instances={} -> {}",
                s.dialogues,
                s.triples,
                s.instances,
                s.instances_path.display()
            );
        }
        Command::TrainDcca { utt1, utt2, out } => {
            let out = out.unwrap_or_else(|| out_dir.join("dcca_model.json"));
            let model = pipeline::train_pair(&cfg, &utt1, &utt2, &out)?;
            println!(
                "iterations={} objective={:.6} -> {}",
                model.train_log.len().saturating_sub(1),
                model.final_objective(),
                out.display()
            );
        }
        Command::ExtractDiscourse { instances, id, out } => {
            let path = instances.unwrap_or(default_instances);
            cfg.require_file(&path, "instances file")?;
            let all: Vec<RetrievalInstance> = read_jsonl(&path)?;
            let inst = match id {
                Some(id) => all.iter().find(|i| i.id == id),
                None => all.first(),
            }
            .with_context(|| format!("no matching instance in {}", path.display()))?;
            let out = out.unwrap_or_else(|| out_dir.join(format!("discourse_{}.jsonl", inst.id)));
            let state = pipeline::extract_discourse(&cfg, &inst.context, &out)?;
            println!("instance={} tokens={} -> {}", inst.id, state.len(), out.display());
        }
        Command::Rank { instances } => {
            let path = instances.unwrap_or(default_instances);
            let s = pipeline::rank(&cfg, &path)?;
            println!(
                "ranked={} failed={} -> {}",
                s.ranked,
                s.failed.len(),
                s.rankings_path.display()
            );
        }
        Command::Evaluate { rankings, instances } => {
            let rankings = rankings.unwrap_or_else(|| out_dir.join(pipeline::RANKINGS_FILE));
            let instances = instances.unwrap_or(default_instances);
            let report = pipeline::evaluate(&cfg, &rankings, &instances)?;
            print!("{}", pipeline::format_report(&report));
        }
        Command::Report { report } => {
            let path = report.unwrap_or_else(|| out_dir.join(pipeline::REPORT_JSON));
            cfg.require_file(&path, "report")?;
            print!("{}", pipeline::format_report(&pipeline::load_report(&path)?));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let validation = matches!(e.downcast_ref::<Error>(), Some(Error::InvalidConfig(_)));
            ExitCode::from(if validation { 1 } else { 2 })
        }
    }
}
