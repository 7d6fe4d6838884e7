//! Optimization, task scheduling, the training loop and checkpoints.

mod checkpoint;
mod optim;
mod schedule;

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{join_words, make_batches, shuffled_order, EncodedExample, TaskSpec};
use crate::decoder::{pointer_usage_stats, DEFAULT_MAX_LEN};
use crate::error::{Error, Result};
use crate::metrics::{score, MetricValue};
use crate::model::Mqan;
use crate::tensor::Mode;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, Header, ManifestEntry, FORMAT_VERSION};
pub use optim::{Adam, AdamConfig};
pub use schedule::{lr_at, next_task, CurriculumSpec, ScheduleSpec, Strategy};

/// Training and validation examples of one task.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub spec: TaskSpec,
    pub train: Vec<EncodedExample>,
    pub valid: Vec<EncodedExample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub iterations: usize,
    pub budget: usize,
    pub dropout: f64,
    pub schedule: ScheduleSpec,
    pub adam: AdamConfig,
    pub curriculum: CurriculumSpec,
    pub seed: u64,
    pub threads: usize,
    /// Validate (and checkpoint) every this many iterations; 0 disables.
    pub validate_every: usize,
    /// Upper bound on validation examples decoded per task.
    pub validation_limit: usize,
    pub max_len: usize,
    pub output_dir: Option<PathBuf>,
    /// Pretrained vector file recorded in checkpoints.
    pub embeddings: Option<String>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            iterations: 0,
            budget: 10_000,
            dropout: 0.2,
            schedule: ScheduleSpec::default(),
            adam: AdamConfig::default(),
            curriculum: CurriculumSpec::fully_joint(),
            seed: 0,
            threads: 1,
            validate_every: 500,
            validation_limit: usize::MAX,
            max_len: DEFAULT_MAX_LEN,
            output_dir: None,
            embeddings: None,
        }
    }
}

/// One line of the metric log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iter: usize,
    pub task: String,
    pub loss: Option<f64>,
    pub lr: f64,
    pub metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Mean per-example loss of each iteration's batch.
    pub losses: Vec<f64>,
    pub tasks: Vec<String>,
    pub validations: Vec<LogRecord>,
}

/// Cycles through one task's training examples in seeded-shuffle order,
/// packed into batches under the budget.
struct BatchStream {
    epoch: u64,
    seed: u64,
    queue: Vec<Vec<usize>>,
}

impl BatchStream {
    fn new(seed: u64) -> Self {
        BatchStream { epoch: 0, seed, queue: Vec::new() }
    }

    fn next(&mut self, data: &TaskData, model: &Mqan, budget: usize) -> Result<Vec<usize>> {
        if data.train.is_empty() {
            return Err(Error::Invalid(format!("task `{}` has no training examples", data.spec.name)));
        }
        if self.queue.is_empty() {
            let order = shuffled_order(data.train.len(), self.seed ^ self.epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            self.epoch += 1;
            let refs: Vec<&EncodedExample> = order.iter().map(|&i| &data.train[i]).collect();
            let batches = make_batches(&refs, budget, &model.vocab)?;
            self.queue = batches
                .into_iter()
                .rev()
                .map(|b| b.indices.iter().map(|&j| order[j]).collect())
                .collect();
        }
        Ok(self.queue.pop().expect("refilled above"))
    }
}

fn step_seed(seed: u64, iter: usize) -> u64 {
    seed.wrapping_mul(0x2545_F491_4F6C_DD1D)
        .wrapping_add((iter as u64).wrapping_mul(1_000_003))
}

/// Greedy-decodes examples and scores them with `spec`'s metric.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskEvaluation {
    pub value: MetricValue,
    pub predictions: Vec<String>,
    /// Mean (vocabulary, context, question) weight over emitted tokens.
    pub usage: Option<(f64, f64, f64)>,
}

pub fn evaluate_task(model: &Mqan, spec: &TaskSpec, examples: &[EncodedExample], max_len: usize, threads: usize) -> Result<TaskEvaluation> {
    let decode = |ex: &EncodedExample| model.greedy_decode(ex, max_len);
    let decoded = if threads <= 1 {
        examples.iter().map(decode).collect::<Result<Vec<_>>>()?
    } else {
        let chunk = examples.len().div_ceil(threads).max(1);
        std::thread::scope(|s| {
            let handles: Vec<_> = examples
                .chunks(chunk)
                .map(|part| s.spawn(move || part.iter().map(decode).collect::<Result<Vec<_>>>()))
                .collect();
            let mut all = Vec::with_capacity(examples.len());
            for h in handles {
                all.extend(h.join().expect("decode worker panicked")?);
            }
            Ok::<_, Error>(all)
        })?
    };
    let predictions: Vec<String> = decoded.iter().map(|d| join_words(&d.words)).collect();
    let references: Vec<Vec<String>> = examples.iter().map(|e| vec![join_words(&e.answer)]).collect();
    let value = score(spec.metric, &predictions, &references)?;
    let switches: Vec<(f64, f64)> = decoded.iter().flat_map(|d| d.switches.iter().copied()).collect();
    let usage = if switches.is_empty() { None } else { Some(pointer_usage_stats(&switches)?) };
    Ok(TaskEvaluation { value, predictions, usage })
}

struct Log(Option<File>);

impl Log {
    fn open(dir: Option<&Path>) -> Result<Self> {
        let Some(dir) = dir else { return Ok(Log(None)) };
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("metrics.jsonl");
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(Log(Some(file)))
    }

    fn write(&mut self, rec: &LogRecord) -> Result<()> {
        if let Some(f) = &mut self.0 {
            let line = serde_json::to_string(rec)?;
            writeln!(f, "{line}").map_err(|e| Error::io("metrics.jsonl", e))?;
        }
        Ok(())
    }
}

fn meta(model: &Mqan, iteration: usize, opts: &TrainOptions) -> CheckpointMeta {
    CheckpointMeta {
        dims: model.dims,
        vocab: model.vocab.clone(),
        iteration,
        embeddings: opts.embeddings.clone(),
    }
}

fn checkpoint(model: &Mqan, iteration: usize, opts: &TrainOptions, name: &str) -> Result<()> {
    if let Some(dir) = &opts.output_dir {
        save_checkpoint(dir.join(name), &model.params, &meta(model, iteration, opts))?;
    }
    Ok(())
}

/// Teacher-forced training with Adam. Writes `checkpoint-0.bin` before the
/// first update, a checkpoint at every validation, and `checkpoint.bin` at
/// the end. A non-finite loss or gradient aborts with `last-good.bin`.
pub fn train(model: &mut Mqan, tasks: &[TaskData], opts: &TrainOptions) -> Result<TrainOutcome> {
    opts.schedule.validate()?;
    if tasks.is_empty() {
        return Err(Error::Invalid("no tasks to train".into()));
    }
    if !(0.0..1.0).contains(&opts.dropout) {
        return Err(Error::Config { field: "dropout".into(), message: "must lie in [0, 1)".into() });
    }
    let specs: Vec<TaskSpec> = tasks.iter().map(|t| t.spec.clone()).collect();
    let mut log = Log::open(opts.output_dir.as_deref())?;
    checkpoint(model, 0, opts, "checkpoint-0.bin")?;

    let mut adam = Adam::new(&model.params, opts.adam);
    let mut streams: Vec<BatchStream> = (0..tasks.len())
        .map(|i| BatchStream::new(opts.seed.wrapping_add(i as u64 * 7919)))
        .collect();
    let mut outcome = TrainOutcome { losses: Vec::new(), tasks: Vec::new(), validations: Vec::new() };
    let mode = Mode::train(opts.dropout);

    for iter in 0..opts.iterations {
        let t = next_task(iter, &opts.curriculum, &specs)?;
        let idx = streams[t].next(&tasks[t], model, opts.budget)?;
        let batch: Vec<&EncodedExample> = idx.iter().map(|&i| &tasks[t].train[i]).collect();
        let lr = lr_at(iter + 1, &opts.schedule);
        let diverged = |model: &Mqan, loss: f64| -> Result<TrainOutcome> {
            checkpoint(model, iter, opts, "last-good.bin")?;
            Err(Error::Diverged { iteration: iter, loss })
        };
        let (loss, grads) = match model.batch_grads(&batch, mode, step_seed(opts.seed, iter), opts.threads) {
            Ok(r) => r,
            Err(Error::NonFinite(_)) => return diverged(model, f64::NAN),
            Err(e) => return Err(e),
        };
        if !loss.is_finite() {
            return diverged(model, loss);
        }
        match adam.step(&mut model.params, &grads, lr) {
            Ok(()) => {}
            Err(Error::NonFinite(_)) => return diverged(model, loss),
            Err(e) => return Err(e),
        }
        outcome.losses.push(loss);
        outcome.tasks.push(specs[t].name.clone());
        log.write(&LogRecord { iter: iter + 1, task: specs[t].name.clone(), loss: Some(loss), lr, metric: None })?;

        let done = iter + 1;
        if opts.validate_every > 0 && done % opts.validate_every == 0 {
            for task in tasks.iter().filter(|t| !t.valid.is_empty()) {
                let n = task.valid.len().min(opts.validation_limit);
                let eval = evaluate_task(model, &task.spec, &task.valid[..n], opts.max_len, opts.threads)?;
                log::info!("iter {done} {} {} = {:.2}", task.spec.name, task.spec.metric, eval.value.value);
                let rec = LogRecord { iter: done, task: task.spec.name.clone(), loss: None, lr, metric: Some(eval.value.value) };
                log.write(&rec)?;
                outcome.validations.push(rec);
            }
            checkpoint(model, done, opts, &format!("checkpoint-{done}.bin"))?;
        }
    }
    checkpoint(model, opts.iterations, opts, "checkpoint.bin")?;
    Ok(outcome)
}
