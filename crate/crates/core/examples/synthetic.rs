//! Trains a toy model on synthetic tasks and reports held-out EM and
//! pointer usage. `mixed` trains one model fully jointly on all three.
//!
//! cargo run --release -p mqan --example synthetic -- copy_span 2000

use std::time::Instant;

use mqan::config::RunConfig;
use mqan::data::SyntheticKind;
use mqan::trainer::{evaluate_task, train};

fn main() -> mqan::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let task = args.get(1).map(String::as_str).unwrap_or("copy_span");
    let kind = SyntheticKind::from_task(task).expect("unknown task");
    let mut cfg = RunConfig::toy(kind);
    if let Some(n) = args.get(2).and_then(|s| s.parse().ok()) {
        cfg.iterations = n;
    }
    cfg.output_dir = std::env::temp_dir().join("mqan-synthetic").join(task);
    let (mut model, data) = cfg.prepare()?;

    let start = Instant::now();
    let out = train(&mut model, &data, &cfg.train_options())?;
    let secs = start.elapsed().as_secs_f64();
    let k = out.losses.len();
    for i in (0..k).step_by((k / 10).max(1)) {
        println!("iter {:5} {:10} loss {:.4}", i + 1, out.tasks[i], out.losses[i]);
    }
    println!("{} iterations in {secs:.1}s", cfg.iterations);
    for d in &data {
        let eval = evaluate_task(&model, &d.spec, &d.valid, cfg.max_len, 1)?;
        println!("{}: EM {:.2}, usage {:?}", d.spec.name, eval.value.value, eval.usage);
    }
    Ok(())
}
