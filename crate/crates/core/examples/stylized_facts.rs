//! Runs every repetition of a configuration and prints per-run stylized
//! facts of the log-returns.
//!
//! ```text
//! cargo run --release -p abcem-core --example stylized_facts -- configs/cross.xml [repetitions]
//! ```

use abcem_core::analysis::{aggregate_runs, autocorrelation, excess_kurtosis, log_returns};
use abcem_core::{parse_config, run_repetitions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args.next().ok_or("usage: stylized_facts <config.xml> [repetitions]")?;
    let mut config = parse_config(&path)?;
    if let Some(n) = args.next() {
        config.run.repetitions = n.parse()?;
    }
    let (mut kurt, mut acf1, mut abs1, mut boundary) = (vec![], vec![], vec![], vec![]);
    for run in run_repetitions(&config) {
        let run = run?;
        let r = log_returns(&run.price_series)?;
        let abs: Vec<f64> = r.iter().map(|x| x.abs()).collect();
        let k = excess_kurtosis(&r).unwrap_or(f64::NAN);
        let a = autocorrelation(&r, 1).map(|v| v[1]).unwrap_or(f64::NAN);
        let b = autocorrelation(&abs, 1).map(|v| v[1]).unwrap_or(f64::NAN);
        let frac = match (run.counters.get("boundary_decisions"), run.counters.get("total_decisions")) {
            (Some(&bd), Some(&t)) if t > 0 => bd as f64 / t as f64,
            _ => f64::NAN,
        };
        println!(
            "run {:3}  kurtosis {k:9.4}  acf1 {a:8.4}  |r| acf1 {b:8.4}  boundary {frac:.4}  final price {:.6}  {:.2?}",
            run.seed_record.run_index,
            run.price_series.last().copied().unwrap_or(f64::NAN),
            run.wall_time
        );
        kurt.push(k);
        acf1.push(a);
        abs1.push(b);
        boundary.push(frac);
    }
    for (name, v) in [("kurtosis", kurt), ("acf1", acf1), ("|r| acf1", abs1), ("boundary", boundary)] {
        let v: Vec<f64> = v.into_iter().filter(|x| x.is_finite()).collect();
        if let Ok((m, se)) = aggregate_runs(&v) {
            println!("{name:>9}: {m:.4} ± {se:.4} ({} runs)", v.len());
        }
    }
    Ok(())
}
