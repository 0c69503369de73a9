use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use advreg::config;
use advreg::io::{read_embeddings, read_instances, read_sentences, write_embeddings, write_instances, write_sentences};
use advreg::runner::{cross_validate_parallel, threads_from_env};
use advreg::{Checkpoint, ResultFile};
use advreg_core::corpus::generate_unlabeled;
use advreg_core::gradsuite::{run_gradient_suite, SuiteConfig};
use advreg_core::harness::{evaluate, train, TrainConfig, TrainData};
use advreg_core::synth::{self, SyntheticConfig};
use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

/// Relation extraction with piecewise CNNs and (virtual) adversarial training.
#[derive(Parser)]
#[command(name = "advreg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Config file, `key = value` lines or JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training mode: baseline, at, at_multi, vat or vat_star.
    #[arg(long)]
    mode: Option<String>,
    /// Overrides one config key, e.g. `--set adv.epsilon=0.02`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut pairs = match &self.config {
            Some(p) => config::load(p)?,
            None => Vec::new(),
        };
        for kv in &self.set {
            let (k, v) = kv.split_once('=').with_context(|| format!("--set {kv:?}: expected KEY=VALUE"))?;
            pairs.push((k.trim().to_owned(), v.trim().to_owned()));
        }
        if let Some(m) = &self.mode {
            pairs.push(("mode".to_owned(), m.clone()));
        }
        config::build(TrainConfig::default(), &pairs)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a checkpoint.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        corpus: PathBuf,
        /// Unlabeled instances for `vat` mode.
        #[arg(long)]
        unlabeled: Option<PathBuf>,
        #[arg(long)]
        embeddings: PathBuf,
        /// Checkpoint path.
        #[arg(long)]
        out: PathBuf,
        /// Result file; defaults to the checkpoint path with `.result.json`.
        #[arg(long)]
        result: Option<PathBuf>,
    },
    /// Score a checkpoint on a labeled corpus.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "advreg-eval.json")]
        result: PathBuf,
    },
    /// Repeated k-fold cross-validation.
    Cv {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        unlabeled: Option<PathBuf>,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value = "advreg-cv.json")]
        result: PathBuf,
    },
    /// Expand entity-annotated sentences into unlabeled pair instances.
    GenUnlabeled {
        #[arg(long)]
        sentences: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        result: Option<PathBuf>,
    },
    /// Finite-difference check of every analytic gradient.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "advreg-gradcheck.json")]
        result: PathBuf,
    },
    /// Write a synthetic template corpus with matching embeddings.
    Synth {
        #[arg(long, default_value_t = 500)]
        instances: usize,
        #[arg(long, default_value_t = 50)]
        embedding_dim: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        /// Also write this many multi-entity sentences.
        #[arg(long, requires = "sentences_out")]
        sentences: Option<usize>,
        #[arg(long)]
        sentences_out: Option<PathBuf>,
    },
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_instances(path: &Path) -> Result<Vec<advreg_core::corpus::Instance>> {
    read_instances(path).map_err(|e| e.in_file(path))
}

fn finish(mut result: ResultFile, start: Instant, path: &Path) -> Result<()> {
    result.wall_clock_secs = start.elapsed().as_secs_f64();
    result.save(path)?;
    println!("result: {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    let start = Instant::now();
    match cli.command {
        Command::Train { cfg, corpus, unlabeled, embeddings, out, result } => {
            let cfg = cfg.resolve()?;
            let labeled = load_instances(&corpus)?;
            let pool = match &unlabeled {
                Some(p) => load_instances(p)?,
                None => Vec::new(),
            };
            let table = read_embeddings(&embeddings).map_err(|e| e.in_file(&embeddings))?;
            let data = TrainData { labeled: &labeled, unlabeled: &pool, ..TrainData::default() };
            let outcome = train(data, &table, &cfg)?;
            if outcome.skipped > 0 {
                log::warn!("{} instances skipped: an entity lies beyond max_sentence_len = {}", outcome.skipped, cfg.max_sentence_len);
            }
            for h in &outcome.history {
                log::info!("epoch {}: loss {:.6} lr {:.6}", h.epoch, h.mean_loss, h.lr);
            }
            Checkpoint::new(outcome.model, cfg.clone()).save(&out)?;
            let mut r = ResultFile::new("train").with_config(&cfg).with_input("corpus", &corpus)?.with_input("embeddings", &embeddings)?;
            if let Some(p) = &unlabeled {
                r = r.with_input("unlabeled", p)?;
            }
            r.details = serde_json::json!({ "instances": labeled.len(), "skipped": outcome.skipped, "steps": outcome.step_losses.len() });
            let last = outcome.history.last().map_or(f64::NAN, |h| h.mean_loss);
            r.history = outcome.history;
            println!("trained {} ({} epochs, final loss {last:.6}); model: {}", cfg.mode, cfg.epochs, out.display());
            finish(r, start, &result.unwrap_or_else(|| with_suffix(&out, ".result.json")))?;
        }
        Command::Eval { model, corpus, result } => {
            let ck = Checkpoint::load(&model)?;
            let test = load_instances(&corpus)?;
            let m = evaluate(&ck.model, &test)?;
            println!(
                "P {:.4}  R {:.4}  F {:.4}  (tp {} fp {} fn {} tn {})",
                m.precision, m.recall, m.fscore, m.tp, m.fp, m.fn_, m.tn
            );
            let mut r = ResultFile::new("eval").with_config(&ck.config).with_input("model", &model)?.with_input("corpus", &corpus)?;
            r.metrics = Some(m);
            finish(r, start, &result)?;
        }
        Command::Cv { cfg, corpus, unlabeled, embeddings, folds, repeats, result } => {
            let cfg = cfg.resolve()?;
            let labeled = load_instances(&corpus)?;
            let pool = match &unlabeled {
                Some(p) => load_instances(p)?,
                None => Vec::new(),
            };
            let table = read_embeddings(&embeddings).map_err(|e| e.in_file(&embeddings))?;
            let threads = threads_from_env()?;
            let report = cross_validate_parallel(&labeled, &pool, &table, &cfg, folds, repeats, threads)?;
            for (i, m) in report.per_repeat.iter().enumerate() {
                println!("repeat {i}: P {:.4}  R {:.4}  F {:.4}", m.precision, m.recall, m.fscore);
            }
            let a = report.mean;
            println!("mean over {repeats} x {folds}-fold: P {:.4}  R {:.4}  F {:.4}", a.precision, a.recall, a.fscore);
            let mut r = ResultFile::new("cv").with_config(&cfg).with_input("corpus", &corpus)?.with_input("embeddings", &embeddings)?;
            if let Some(p) = &unlabeled {
                r = r.with_input("unlabeled", p)?;
            }
            finish(r.with_cv(report), start, &result)?;
        }
        Command::GenUnlabeled { sentences, out, result } => {
            let s = read_sentences(&sentences).map_err(|e| e.in_file(&sentences))?;
            let generated = generate_unlabeled(&s);
            write_instances(&out, &generated)?;
            println!("{} sentences -> {} unlabeled instances: {}", s.len(), generated.len(), out.display());
            let mut r = ResultFile::new("gen-unlabeled").with_input("sentences", &sentences)?;
            r.details = serde_json::json!({ "sentences": s.len(), "instances": generated.len() });
            finish(r, start, &result.unwrap_or_else(|| with_suffix(&out, ".result.json")))?;
        }
        Command::Gradcheck { cases, seed, result } => {
            let report = run_gradient_suite(&SuiteConfig { cases, seed, ..SuiteConfig::default() });
            for c in &report.checks {
                let status = if c.passed { "ok" } else { "FAIL" };
                println!("{status:>4}  {:<26} cases {:>3}  max rel error {:.3e}", c.name, c.cases, c.max_rel_error);
            }
            let passed = report.passed();
            println!("{} (tolerance {:.0e})", if passed { "all gradients match" } else { "gradient check failed" }, report.tolerance);
            let mut r = ResultFile::new("gradcheck");
            r.seed = Some(seed);
            r.details = serde_json::to_value(&report)?;
            finish(r, start, &result)?;
            return Ok(passed);
        }
        Command::Synth { instances, embedding_dim, seed, corpus, embeddings, sentences, sentences_out } => {
            let scfg = SyntheticConfig { instances, embedding_dim, seed, ..SyntheticConfig::default() };
            let c = synth::generate(&scfg);
            write_instances(&corpus, &c.instances)?;
            write_embeddings(&embeddings, &c.embeddings)?;
            println!("{} instances: {}; embeddings: {}", c.instances.len(), corpus.display(), embeddings.display());
            if let (Some(n), Some(path)) = (sentences, sentences_out) {
                write_sentences(&path, &synth::sentences(&scfg, n))?;
                println!("{n} sentences: {}", path.display());
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
