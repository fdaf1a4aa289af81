//! `snet`: train, run, evaluate and ensemble extraction-then-synthesis readers.
//!
//! Settings are resolved in this order, later winning: built-in defaults,
//! the `--config` file, `--set key=value` overrides, then the dedicated
//! flags (`--seed`, `--beam`, `--ablation`).

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use snet_core::checkpoint::{save_extractor, save_synthesis};
use snet_core::config::RunConfig;
use snet_core::pipeline;
use snet_core::{Error, Result};

#[derive(Parser)]
#[command(name = "snet", version, about = "Extraction-then-synthesis reading comprehension")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Train an evidence extraction model and save its checkpoint to --out.
    TrainExtract,
    /// Train the answer synthesis model and save its checkpoint to --out.
    TrainSynth,
    /// Answer every question in --data and write JSON lines to --out.
    Run,
    /// Score an answers file against --data.
    Eval,
    /// Greedily choose an ensemble from the --ckpt candidates on --data.
    EnsembleSelect,
    /// Write a synthetic corpus to --out.
    GenCorpus,
}

#[derive(Args)]
struct Common {
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Dataset in JSON-lines form.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Development dataset used for per-epoch metrics.
    #[arg(long, global = true)]
    dev: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Extraction checkpoint (repeatable for ensembles).
    #[arg(long, global = true)]
    ckpt: Vec<PathBuf>,
    /// Synthesis checkpoint for `run`; without it the span is the answer.
    #[arg(long, global = true)]
    synth: Option<PathBuf>,
    /// Answers file for `eval`.
    #[arg(long, global = true)]
    answers: Option<PathBuf>,
    #[arg(long, global = true)]
    beam: Option<usize>,
    /// no-ranking, rank-then-extract, no-position-features or categorical-ce (repeatable).
    #[arg(long, global = true)]
    ablation: Vec<String>,
    /// Require extracted-span synthesis pairs (needs --ckpt).
    #[arg(long, global = true)]
    part2: bool,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(b) = self.beam {
            cfg.beam = b;
        }
        for a in &self.ablation {
            cfg.apply_ablation(a)?;
        }
        if let Some(d) = &self.dev {
            cfg.dev_data = Some(d.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn required<'a>(flag: &str, value: &'a Option<PathBuf>) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Error::Usage(format!("missing required flag --{flag}")))
}

fn log(line: &str) {
    eprintln!("{line}");
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let c = &cli.common;
    let cfg = c.resolve()?;
    match cli.command {
        Command::GenCorpus => {
            let out = required("out", &c.out)?;
            let n = pipeline::cmd_gen_corpus(&cfg, out)?;
            log(&format!("stage=gen-corpus examples={n} out={}", out.display()));
        }
        Command::TrainExtract => {
            let data = required("data", &c.data)?;
            let out = required("out", &c.out)?;
            let model = pipeline::cmd_train_extract(&cfg, data, &mut log)?;
            save_extractor(&model, out)?;
            log(&format!("stage=extract saved={}", out.display()));
        }
        Command::TrainSynth => {
            let data = required("data", &c.data)?;
            let out = required("out", &c.out)?;
            let model = pipeline::cmd_train_synth(&cfg, data, &c.ckpt, c.part2, &mut log)?;
            save_synthesis(&model, out)?;
            log(&format!("stage=synth saved={}", out.display()));
        }
        Command::Run => {
            let data = required("data", &c.data)?;
            let out = required("out", &c.out)?;
            let records = pipeline::cmd_run(&cfg, data, &c.ckpt, c.synth.as_deref())?;
            pipeline::write_records(&records, out)?;
            log(&format!("stage=run questions={} out={}", records.len(), out.display()));
        }
        Command::Eval => {
            let answers = required("answers", &c.answers)?;
            let data = required("data", &c.data)?;
            let report = pipeline::cmd_eval(answers, data)?;
            let mut line = format!("stage=eval rouge={:.6} bleu_1={:.6}", report.rouge_l, report.bleu_1);
            if let Some(p) = report.precision_at_1 {
                line.push_str(&format!(" p_at_1={p:.6}"));
            }
            log(&line);
            let mut json = serde_json::to_string_pretty(&report).map_err(|e| Error::Data(e.to_string()))?;
            json.push('\n');
            write_output(c.out.as_deref(), &json)?;
        }
        Command::EnsembleSelect => {
            let data = required("data", &c.data)?;
            let kept = pipeline::cmd_ensemble_select(&c.ckpt, data, &mut log)?;
            let text: String = kept.iter().map(|p| format!("{}\n", p.display())).collect();
            write_output(c.out.as_deref(), &text)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
