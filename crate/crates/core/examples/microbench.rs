//! Exploratory driver for the synthetic two-stream micro-benchmark.
//! Usage: microbench <temporal-kind> [key=value ...]

use spikestream::experiment::{run_experiment, ExperimentConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let kind = args.get(1).map(String::as_str).unwrap_or("frame-subtraction");
    let mut text = format!(
        "\
name = microbench
dataset.kind = synthetic
dataset.synthetic.classes = bar-left,bar-right,bar-up,bar-down
dataset.synthetic.per-class = 30
dataset.synthetic.seed = 9
temporal.kind = {kind}
layer.filters = 16
runs = 3
seeds = 1,2,3
"
    );
    for extra in args.iter().skip(2) {
        let line = extra.replace('=', " = ");
        text.push_str(&line);
        text.push('\n');
    }
    let config = ExperimentConfig::parse(&text).unwrap();
    let dir = std::env::temp_dir().join(format!(
        "microbench-{}",
        spikestream::experiment::content_key(&[&config.canonical()])
    ));
    let start = std::time::Instant::now();
    let report = run_experiment(&config, &dir).unwrap();
    eprintln!("elapsed: {:.1}s  dir: {}", start.elapsed().as_secs_f64(), dir.display());
    println!("{}", report.render());
}
