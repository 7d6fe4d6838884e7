//! Command-line front end: train, evaluate, decode, gradcheck and stats.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mqan::check::{check_all, check_dims, Backward, TOLERANCE};
use mqan::config::RunConfig;
use mqan::data::tasks::lookup;
use mqan::data::{join_words, preprocess_eval, read_jsonl, Example, SyntheticKind, TaskSpec};
use mqan::metrics::{score, EvaluationReport, TaskScore};
use mqan::model::Mqan;
use mqan::trainer::{evaluate_task, load_checkpoint, train};

#[derive(Parser)]
#[command(name = "mqan", version, about = "Multitask question answering network")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for gradients and decoding.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the model described by --config.
    Train {
        /// Overrides the configured iteration count.
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Greedy-decode datasets and score them with each task's metric.
    Evaluate(EvaluateArgs),
    /// Answer one question about one context.
    Decode {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        context: String,
        #[arg(long)]
        question: String,
        /// Print the (γ, λ) switch values of every emitted token.
        #[arg(long)]
        show_switches: bool,
        #[arg(long, default_value_t = mqan::decoder::DEFAULT_MAX_LEN)]
        max_len: usize,
    },
    /// Compare analytic and numerical gradients on a tiny model.
    Gradcheck {
        /// Number of seeds, counted from --seed.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        /// Print every parameter, not only the per-block maxima.
        #[arg(long)]
        verbose: bool,
        #[arg(long, hide = true)]
        corrupt_backward: bool,
    },
    /// Mean switch usage (generate / copy context / copy question) per task.
    Stats {
        #[arg(long)]
        checkpoint: PathBuf,
        /// TASK=PATH of a JSON-lines dataset; repeatable. Without it the
        /// validation splits of --config are used.
        #[arg(long = "data", value_parser = parse_data)]
        data: Vec<(String, PathBuf)>,
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long, default_value_t = mqan::decoder::DEFAULT_MAX_LEN)]
        max_len: usize,
    },
    /// Print a configuration: --config resolved with defaults, or a profile.
    Config {
        /// Desk-scale profile for a synthetic task, or `mixed`.
        #[arg(long)]
        toy: Option<String>,
    },
}

#[derive(Args)]
struct EvaluateArgs {
    /// Checkpoint to decode with; defaults to the final checkpoint of the
    /// configured output directory.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// TASK=PATH of a JSON-lines dataset; repeatable. Without it the
    /// validation splits of --config are used.
    #[arg(long = "data", value_parser = parse_data)]
    data: Vec<(String, PathBuf)>,
    /// Score gold answers as predictions instead of decoding.
    #[arg(long)]
    oracle: bool,
    /// Merge previously saved reports instead of evaluating.
    #[arg(long, num_args = 1.., conflicts_with_all = ["data", "oracle", "checkpoint"])]
    merge: Vec<PathBuf>,
    /// Write the report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Decode at most this many examples per task.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long, default_value_t = mqan::decoder::DEFAULT_MAX_LEN)]
    max_len: usize,
}

fn parse_data(s: &str) -> Result<(String, PathBuf), String> {
    let (task, path) = s.split_once('=').ok_or("expected TASK=PATH")?;
    if lookup(task).is_none() {
        return Err(format!("unknown task `{task}`"));
    }
    Ok((task.to_string(), PathBuf::from(path)))
}

impl Cli {
    fn config(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(t) = self.threads {
            config.threads = t;
        }
        if let Some(d) = &self.output_dir {
            config.output_dir = d.clone();
        }
        Ok(config)
    }

    fn threads(&self) -> usize {
        self.threads.unwrap_or(1).max(1)
    }
}

/// Preprocessed evaluation examples per task, from explicit files or from
/// the configured validation splits.
fn eval_sets(cli: &Cli, data: &[(String, PathBuf)]) -> Result<Vec<(TaskSpec, Vec<Example>)>> {
    if data.is_empty() {
        if cli.config.is_none() {
            bail!("give --data TASK=PATH or a --config with validation splits");
        }
        let raw = cli.config()?.load_examples()?;
        return Ok(raw.into_iter().filter(|t| !t.valid.is_empty()).map(|t| (t.spec, t.valid)).collect());
    }
    data.iter()
        .map(|(task, path)| {
            let spec = lookup(task).expect("checked by the argument parser");
            let examples = read_jsonl(path)?
                .iter()
                .filter_map(|e| preprocess_eval(e, &spec).transpose())
                .collect::<mqan::Result<Vec<_>>>()?;
            Ok((spec, examples))
        })
        .collect()
}

fn load_model(path: &Path) -> Result<Mqan> {
    let ck = load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
    Ok(ck.into_model()?)
}

fn cmd_train(cli: &Cli, iterations: Option<usize>) -> Result<()> {
    if cli.config.is_none() {
        bail!("train needs --config");
    }
    let mut config = cli.config()?;
    if let Some(n) = iterations {
        config.iterations = n;
    }
    config.validate()?;
    let (mut model, tasks) = config.prepare()?;
    std::fs::create_dir_all(&config.output_dir)
        .with_context(|| format!("creating {}", config.output_dir.display()))?;
    config.save(config.output_dir.join("config.toml"))?;
    log::info!(
        "{} parameters, vocabulary of {}, {} task(s)",
        model.params.num_values(),
        model.vocab.len(),
        tasks.len()
    );
    let start = Instant::now();
    let outcome = train(&mut model, &tasks, &config.train_options())?;
    let secs = start.elapsed().as_secs_f64();
    match outcome.losses.last() {
        Some(loss) => println!("{} iterations in {secs:.1}s, last loss {loss:.4}", outcome.losses.len()),
        None => println!("no iterations run"),
    }
    println!("checkpoint: {}", config.output_dir.join("checkpoint.bin").display());
    Ok(())
}

fn cmd_evaluate(cli: &Cli, args: &EvaluateArgs) -> Result<()> {
    let report = if !args.merge.is_empty() {
        let parts = args
            .merge
            .iter()
            .map(|p| EvaluationReport::load(p).with_context(|| format!("reading {}", p.display())))
            .collect::<Result<Vec<_>>>()?;
        EvaluationReport::merge(&parts)?
    } else {
        let sets = eval_sets(cli, &args.data)?;
        let limit = args.limit.unwrap_or(usize::MAX);
        let model = if args.oracle {
            None
        } else {
            let path = match &args.checkpoint {
                Some(p) => p.clone(),
                None => cli.config()?.output_dir.join("checkpoint.bin"),
            };
            Some(load_model(&path)?)
        };
        let mut scores = Vec::new();
        for (spec, examples) in sets {
            let examples = &examples[..examples.len().min(limit)];
            let value = match &model {
                None => {
                    let gold: Vec<String> = examples.iter().map(|e| join_words(&e.answer_words())).collect();
                    let refs: Vec<Vec<String>> = gold.iter().map(|g| vec![g.clone()]).collect();
                    score(spec.metric, &gold, &refs)?
                }
                Some(m) => {
                    let encoded = examples.iter().map(|e| m.encode_example(e)).collect::<mqan::Result<Vec<_>>>()?;
                    evaluate_task(m, &spec, &encoded, args.max_len, cli.threads())?.value
                }
            };
            scores.push(TaskScore { task: spec.name, metric: value.metric, value: value.value, count: value.count });
        }
        EvaluationReport::new(scores)?
    };
    print!("{}", report.render());
    if let Some(p) = &args.report {
        report.save(p)?;
    }
    Ok(())
}

fn cmd_decode(checkpoint: &Path, context: &str, question: &str, show: bool, max_len: usize) -> Result<()> {
    let model = load_model(checkpoint)?;
    let (answer, decoded) = model.answer(context, question, max_len)?;
    println!("{answer}");
    if show {
        for (word, (gamma, lambda)) in decoded.words.iter().zip(&decoded.switches) {
            println!("{word}\tgamma={gamma:.6}\tlambda={lambda:.6}");
        }
    }
    Ok(())
}

fn cmd_gradcheck(cli: &Cli, seeds: u64, verbose: bool, corrupt: bool) -> Result<bool> {
    let configured = cli.config()?.model;
    let dims = if cli.config.is_some() && configured.d <= 8 { configured } else { check_dims() };
    let kind = if corrupt { Backward::Corrupted } else { Backward::Exact };
    let first = cli.seed.unwrap_or(0);
    let mut ok = true;
    for seed in first..first + seeds.max(1) {
        for block in check_all(dims, seed, kind)? {
            let worst = block.max_rel_error();
            let verdict = if worst <= TOLERANCE { "ok" } else { "FAIL" };
            ok &= worst <= TOLERANCE;
            println!("seed {seed} {:<8} max relative error {worst:.3e} {verdict}", block.block);
            if verbose || worst > TOLERANCE {
                for p in &block.report.per_param {
                    println!("    {:<28} {:.3e}", p.name, p.max_rel_error);
                }
            }
        }
    }
    Ok(ok)
}

fn cmd_stats(cli: &Cli, checkpoint: &Path, data: &[(String, PathBuf)], limit: Option<usize>, max_len: usize) -> Result<()> {
    let model = load_model(checkpoint)?;
    println!("{:<12} {:>10} {:>10} {:>10} {:>8}", "task", "generate", "context", "question", "tokens");
    for (spec, examples) in eval_sets(cli, data)? {
        let examples = &examples[..examples.len().min(limit.unwrap_or(usize::MAX))];
        let encoded = examples.iter().map(|e| model.encode_example(e)).collect::<mqan::Result<Vec<_>>>()?;
        let eval = evaluate_task(&model, &spec, &encoded, max_len, cli.threads())?;
        let tokens = eval.predictions.iter().map(|p| p.split_whitespace().count()).sum::<usize>();
        match eval.usage {
            Some((g, c, q)) => println!("{:<12} {g:>10.4} {c:>10.4} {q:>10.4} {tokens:>8}", spec.name),
            None => println!("{:<12} {:>10} {:>10} {:>10} {tokens:>8}", spec.name, "-", "-", "-"),
        }
    }
    Ok(())
}

fn cmd_config(cli: &Cli, toy: Option<&str>) -> Result<()> {
    let config = match toy {
        Some(name) => {
            let kind = SyntheticKind::from_task(name).with_context(|| format!("no toy profile named `{name}`"))?;
            let mut c = RunConfig::toy(kind);
            if let Some(s) = cli.seed {
                c.seed = s;
            }
            if let Some(d) = &cli.output_dir {
                c.output_dir = d.clone();
            }
            c
        }
        None => cli.config()?,
    };
    print!("{}", config.to_toml_string()?);
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Train { iterations } => cmd_train(cli, *iterations)?,
        Command::Evaluate(args) => cmd_evaluate(cli, args)?,
        Command::Decode { checkpoint, context, question, show_switches, max_len } => {
            cmd_decode(checkpoint, context, question, *show_switches, *max_len)?
        }
        Command::Gradcheck { seeds, verbose, corrupt_backward } => {
            return cmd_gradcheck(cli, *seeds, *verbose, *corrupt_backward)
        }
        Command::Stats { checkpoint, data, limit, max_len } => cmd_stats(cli, checkpoint, data, *limit, *max_len)?,
        Command::Config { toy } => cmd_config(cli, toy.as_deref())?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
