use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use abcem_core::analysis::{aggregate_runs, autocorrelation, excess_kurtosis, histogram, log_returns, qq_points};
use abcem_core::config::{apply_seed_override, expand_sweep, load_config, OutputFormat, SweepAxis, SEED_ENV};
use abcem_core::engine::measure_runtime;
use abcem_core::output::{read_series, write_run};
use abcem_core::{parse_config_str, run_repetitions, ConfigError, SimulationConfig};

use crate::{CliError, Command, Format, Model, Stat};

pub fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run { config, seed, reps, out, format } => {
            let mut c = load_config(&config)?;
            apply_overrides(&mut c, seed, reps, out, format)?;
            execute(&c)
        }
        Command::Sweep { config, params, seed, reps, out, format } => sweep(&config, &params, seed, reps, out, format),
        Command::Analyze { path, stats, series, lags, bins } => analyze(&path, &stats, &series, lags, bins),
        Command::Bench { model, config, agents, steps, samples, out } => {
            bench(model, config.as_deref(), &agents, &steps, samples, out.as_deref())
        }
    }
}

fn apply_overrides(
    c: &mut SimulationConfig,
    seed: Option<u64>,
    reps: Option<usize>,
    out: Option<PathBuf>,
    format: Option<Format>,
) -> Result<(), CliError> {
    if let Some(seed) = seed {
        c.run.seed = seed;
    }
    if let Some(reps) = reps {
        c.run.repetitions = reps;
    }
    if let Some(out) = out {
        c.output.directory = out;
    }
    if let Some(format) = format {
        c.output.format = match format {
            Format::Csv => OutputFormat::Csv,
            Format::Container => OutputFormat::Container,
        };
    }
    c.validate()?;
    Ok(())
}

/// Runs all repetitions and writes them; one line per run on stdout.
fn execute(c: &SimulationConfig) -> Result<(), CliError> {
    for run in run_repetitions(c) {
        let run = run?;
        let path = write_run(&c.output, &run)?;
        println!("{}\t{:.3}s", path.display(), run.wall_time.as_secs_f64());
    }
    Ok(())
}

fn sweep(
    config: &Path,
    params: &[String],
    seed: Option<u64>,
    reps: Option<usize>,
    out: Option<PathBuf>,
    format: Option<Format>,
) -> Result<(), CliError> {
    let text = fs::read_to_string(config)
        .map_err(|e| ConfigError::Io { path: config.display().to_string(), message: e.to_string() })?;
    let axes = params.iter().map(|p| p.parse::<SweepAxis>()).collect::<Result<Vec<_>, _>>()?;
    let points = expand_sweep(&text, &axes)?;
    let mut configs = Vec::with_capacity(points.len());
    for point in &points {
        let mut c = parse_config_str(&point.xml)?;
        apply_seed_override(&mut c, std::env::var(SEED_ENV).ok().as_deref())?;
        apply_overrides(&mut c, seed, reps, out.clone(), format)?;
        configs.push(c);
    }
    let base = configs.first().map(|c| c.output.directory.clone()).unwrap_or_default();
    fs::create_dir_all(&base).map_err(|source| CliError::Io { path: base.clone(), source })?;
    let index = base.join("sweep.csv");
    let mut w = csv::Writer::from_path(&index).map_err(|e| csv_io(&index, e))?;
    w.write_record(["point", "directory", "parameters"]).map_err(|e| csv_io(&index, e))?;
    for (i, (point, c)) in points.iter().zip(&mut configs).enumerate() {
        let dir = format!("point_{i:03}");
        c.output.directory = base.join(&dir);
        w.write_record([i.to_string(), dir, point.label.clone()]).map_err(|e| csv_io(&index, e))?;
    }
    w.flush().map_err(|source| CliError::Io { path: index.clone(), source })?;
    for (point, c) in points.iter().zip(&configs) {
        eprintln!("# {}", point.label);
        execute(c)?;
    }
    Ok(())
}

fn csv_io(path: &Path, e: csv::Error) -> CliError {
    CliError::Io { path: path.to_path_buf(), source: e.into() }
}

/// A single run (CSV directory, `series.csv` or container) or a directory
/// holding `run_*` entries.
fn run_paths(path: &Path) -> Result<Vec<PathBuf>, CliError> {
    if path.is_file() || path.join("series.csv").is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let entries = fs::read_dir(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    let mut runs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("run_")))
        .collect();
    runs.sort();
    if runs.is_empty() {
        return Err(CliError::Usage(format!("{}: no run output found", path.display())));
    }
    Ok(runs)
}

fn analyze(path: &Path, stats: &[Stat], series: &str, lags: usize, bins: usize) -> Result<(), CliError> {
    let runs = run_paths(path)?;
    let stdout = std::io::stdout();
    let mut w = csv::Writer::from_writer(stdout.lock());
    let sink = PathBuf::from("<stdout>");
    w.write_record(["run", "stat", "x", "value"]).map_err(|e| csv_io(&sink, e))?;
    let mut row = |run: &str, stat: &str, x: String, value: f64| {
        w.write_record([run, stat, &x, &value.to_string()]).map_err(|e| csv_io(&sink, e))
    };
    let (mut kurt, mut acfs) = (Vec::new(), Vec::new());
    for run in &runs {
        let name = run.file_stem().and_then(|n| n.to_str()).unwrap_or("run").to_string();
        let mut all = read_series(run)?;
        let raw =
            all.remove(series).ok_or_else(|| CliError::Usage(format!("{}: no series `{series}`", run.display())))?;
        let data = if series == "price" { log_returns(&raw).map_err(abcem_core::Error::from)? } else { raw };
        for stat in stats {
            match stat {
                Stat::Kurtosis => {
                    let k = excess_kurtosis(&data).map_err(abcem_core::Error::from)?;
                    kurt.push(k);
                    row(&name, "kurtosis", String::new(), k)?;
                }
                Stat::Acf => {
                    let rho = autocorrelation(&data, lags).map_err(abcem_core::Error::from)?;
                    for (lag, v) in rho.iter().enumerate() {
                        row(&name, "acf", lag.to_string(), *v)?;
                    }
                    acfs.push(rho);
                }
                Stat::Qq => {
                    for (t, e) in qq_points(&data).map_err(abcem_core::Error::from)? {
                        row(&name, "qq", t.to_string(), e)?;
                    }
                }
                Stat::Hist => {
                    let h = histogram(&data, bins).map_err(abcem_core::Error::from)?;
                    for (edge, count) in h.edges.iter().zip(&h.counts) {
                        row(&name, "hist", edge.to_string(), *count as f64)?;
                    }
                }
            }
        }
    }
    if runs.len() > 1 {
        if let Ok((m, se)) = aggregate_runs(&kurt) {
            row("mean", "kurtosis", String::new(), m)?;
            row("stderr", "kurtosis", String::new(), se)?;
        }
        for lag in 0..=lags {
            let column: Vec<f64> = acfs.iter().map(|r| r[lag]).collect();
            if let Ok((m, se)) = aggregate_runs(&column) {
                row("mean", "acf", lag.to_string(), m)?;
                row("stderr", "acf", lag.to_string(), se)?;
            }
        }
    }
    w.flush().map_err(|source| CliError::Io { path: sink, source })
}

fn bench(
    model: Model,
    config: Option<&Path>,
    agents: &[usize],
    steps: &[usize],
    samples: usize,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let (name, base) = match (config, model) {
        (Some(path), _) => ("config", load_config(path)?),
        (None, Model::Cross) => ("cross", SimulationConfig::cross_basic()),
        (None, Model::Lls) => ("lls", SimulationConfig::lls_basic(0.2)),
        (None, Model::Harras) => ("harras", SimulationConfig::harras_basic()),
    };
    let mut body = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut body);
        let sink = PathBuf::from("<buffer>");
        w.write_record(["model", "agents", "steps", "seconds"]).map_err(|e| csv_io(&sink, e))?;
        for &n in agents {
            for &s in steps {
                let mut c = base.clone();
                c.set_agent_count(n)?;
                c.run.num_steps = s;
                let mut best = Duration::MAX;
                for _ in 0..samples.max(1) {
                    best = best.min(measure_runtime(&c)?);
                }
                eprintln!("# {name} agents={n} steps={s}: {:.4}s", best.as_secs_f64());
                w.write_record([name.to_string(), n.to_string(), s.to_string(), best.as_secs_f64().to_string()])
                    .map_err(|e| csv_io(&sink, e))?;
            }
        }
        w.flush().map_err(|source| CliError::Io { path: sink, source })?;
    }
    match out {
        Some(path) => fs::write(path, &body).map_err(|source| CliError::Io { path: path.to_path_buf(), source }),
        None => std::io::stdout().write_all(&body).map_err(|source| CliError::Io { path: "<stdout>".into(), source }),
    }
}
