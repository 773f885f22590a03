//! Persisting runs: a CSV directory or an HDF5 container per repetition.
//!
//! CSV layout of `run_NNN/`:
//! - `series.csv`: `step,price,excess_demand,<observables...>`
//! - `final.csv`: `name,index,value` (per-agent end state)
//! - `meta.csv`: `key,value` (seeds, wall time, counters)
//! - `config.xml`: the configuration text
//!
//! The container `run_NNN.h5` holds `/series/<name>`, `/final/<name>`,
//! `/counters/<name>`, `/meta/config`, `/meta/seed` (master, run index, run
//! seed) and `/meta/wall_time` (seconds).
//!
//! Values are written in shortest round-trip form, so reading a file back
//! reproduces the recorded doubles exactly.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{OutputFormat, OutputSpec};
use crate::engine::RunOutput;
use crate::error::{Error, Result};

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Output(format!("{}: {e}", path.display()))
}

/// All recorded series of a run under their file names, price first.
pub fn named_series(run: &RunOutput) -> Vec<(&str, &[f64])> {
    let mut out: Vec<(&str, &[f64])> = vec![("price", &run.price_series), ("excess_demand", &run.ed_series)];
    out.extend(run.observable_series.iter().map(|(k, v)| (k.as_str(), v.as_slice())));
    out
}

/// Writes `run` below `spec.directory`; returns the created path.
pub fn write_run(spec: &OutputSpec, run: &RunOutput) -> Result<PathBuf> {
    fs::create_dir_all(&spec.directory).map_err(|e| Error::io(&spec.directory, e))?;
    let stem = format!("run_{:03}", run.seed_record.run_index);
    match spec.format {
        OutputFormat::Csv => {
            let dir = spec.directory.join(stem);
            write_csv(&dir, run)?;
            Ok(dir)
        }
        OutputFormat::Container => {
            let file = spec.directory.join(format!("{stem}.h5"));
            write_container(&file, run)?;
            Ok(file)
        }
    }
}

pub fn write_csv(dir: &Path, run: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let path = dir.join("series.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    let series = named_series(run);
    let mut header = vec!["step"];
    header.extend(series.iter().map(|(n, _)| *n));
    w.write_record(&header).map_err(|e| csv_err(&path, e))?;
    for k in 0..run.price_series.len() {
        let mut row = vec![k.to_string()];
        row.extend(series.iter().map(|(_, s)| s.get(k).map_or_else(String::new, f64::to_string)));
        w.write_record(&row).map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("final.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    w.write_record(["name", "index", "value"]).map_err(|e| csv_err(&path, e))?;
    for (name, values) in &run.final_state {
        for (i, v) in values.iter().enumerate() {
            w.write_record([name.as_str(), &i.to_string(), &v.to_string()]).map_err(|e| csv_err(&path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("meta.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    let s = run.seed_record;
    let mut meta = vec![
        ("master_seed".to_string(), s.master.to_string()),
        ("run_index".to_string(), s.run_index.to_string()),
        ("run_seed".to_string(), s.run_seed.to_string()),
        ("wall_time_s".to_string(), run.wall_time.as_secs_f64().to_string()),
    ];
    meta.extend(run.counters.iter().map(|(k, v)| (k.clone(), v.to_string())));
    w.write_record(["key", "value"]).map_err(|e| csv_err(&path, e))?;
    for (k, v) in &meta {
        w.write_record([k, v]).map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("config.xml");
    fs::write(&path, &run.embedded_config).map_err(|e| Error::io(&path, e))
}

/// Reads the series of a run written by [`write_run`]: a CSV run directory
/// (or its `series.csv`) or a container file.
pub fn read_series(path: &Path) -> Result<BTreeMap<String, Vec<f64>>> {
    if path.is_dir() {
        return read_csv_series(&path.join("series.csv"));
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("h5" | "hdf5") => read_container_series(path),
        _ => read_csv_series(path),
    }
}

fn read_csv_series(path: &Path) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let names: Vec<String> = r.headers().map_err(|e| csv_err(path, e))?.iter().map(String::from).collect();
    let mut out: BTreeMap<String, Vec<f64>> = names.iter().skip(1).map(|n| (n.clone(), Vec::new())).collect();
    for record in r.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        for (name, field) in names.iter().zip(record.iter()).skip(1) {
            if field.is_empty() {
                continue;
            }
            let v = field
                .parse()
                .map_err(|_| Error::Output(format!("{}: column {name}: bad value `{field}`", path.display())))?;
            out.get_mut(name).expect("column exists").push(v);
        }
    }
    Ok(out)
}

#[cfg(feature = "hdf5")]
fn h5_err(path: &Path, e: hdf5_metno::Error) -> Error {
    Error::Output(format!("{}: {e}", path.display()))
}

#[cfg(feature = "hdf5")]
pub fn write_container(path: &Path, run: &RunOutput) -> Result<()> {
    use hdf5_metno::types::VarLenUnicode;
    let e = |err| h5_err(path, err);

    let file = hdf5_metno::File::create(path).map_err(e)?;
    let series = file.create_group("series").map_err(e)?;
    for (name, values) in named_series(run) {
        series.new_dataset_builder().with_data(values).create(name).map_err(e)?;
    }
    let fin = file.create_group("final").map_err(e)?;
    for (name, values) in &run.final_state {
        fin.new_dataset_builder().with_data(values.as_slice()).create(name.as_str()).map_err(e)?;
    }
    let counters = file.create_group("counters").map_err(e)?;
    for (name, v) in &run.counters {
        counters.new_dataset::<u64>().create(name.as_str()).map_err(e)?.write_scalar(v).map_err(e)?;
    }
    let meta = file.create_group("meta").map_err(e)?;
    let config: VarLenUnicode =
        run.embedded_config.parse().map_err(|err| Error::Output(format!("{}: config text: {err}", path.display())))?;
    meta.new_dataset::<VarLenUnicode>().create("config").map_err(e)?.write_scalar(&config).map_err(e)?;
    let s = run.seed_record;
    meta.new_dataset_builder().with_data(&[s.master, s.run_index, s.run_seed][..]).create("seed").map_err(e)?;
    meta.new_dataset::<f64>().create("wall_time").map_err(e)?.write_scalar(&run.wall_time.as_secs_f64()).map_err(e)?;
    file.close().map_err(e)
}

#[cfg(not(feature = "hdf5"))]
pub fn write_container(path: &Path, _run: &RunOutput) -> Result<()> {
    Err(Error::Output(format!("{}: built without HDF5 support", path.display())))
}

#[cfg(feature = "hdf5")]
fn read_container_series(path: &Path) -> Result<BTreeMap<String, Vec<f64>>> {
    let e = |err| h5_err(path, err);
    let file = hdf5_metno::File::open(path).map_err(e)?;
    let group = file.group("series").map_err(e)?;
    let mut out = BTreeMap::new();
    for name in group.member_names().map_err(e)? {
        out.insert(name.clone(), group.dataset(&name).map_err(e)?.read_raw::<f64>().map_err(e)?);
    }
    Ok(out)
}

#[cfg(not(feature = "hdf5"))]
fn read_container_series(path: &Path) -> Result<BTreeMap<String, Vec<f64>>> {
    Err(Error::Output(format!("{}: built without HDF5 support", path.display())))
}

/// Reads the embedded configuration text of a container.
#[cfg(feature = "hdf5")]
pub fn read_container_config(path: &Path) -> Result<String> {
    use hdf5_metno::types::VarLenUnicode;
    let e = |err| h5_err(path, err);
    let file = hdf5_metno::File::open(path).map_err(e)?;
    let text: VarLenUnicode = file.dataset("meta/config").map_err(e)?.read_scalar().map_err(e)?;
    Ok(text.as_str().to_string())
}
