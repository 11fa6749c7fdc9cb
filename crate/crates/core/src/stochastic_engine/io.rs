use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::ensemble::{PathEnsemble, PathField, INCREASING};
use crate::csv_io::{fmt_f64, parse_f64};
use crate::error::{Error, Result};
use crate::path_calculus::{GridSummary, TimeGrid};

pub const MANIFEST_FILE: &str = "ensemble.json";

/// Side-car description of a dumped ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub seed: u64,
    pub n_paths: usize,
    pub grid: GridSummary,
    pub points: Vec<f64>,
    pub processes: Vec<ProcessEntry>,
    pub a_stochastic: bool,
    /// Whatever produced the ensemble, typically the problem config.
    #[serde(default)]
    pub spec: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessEntry {
    pub name: String,
    pub dim: usize,
    pub file: String,
}

/// Writes `<name>.csv` (`path,t,v_1..v_d`) per process plus `ensemble.json`.
pub fn write_ensemble(dir: &Path, ens: &PathEnsemble, spec: serde_json::Value) -> Result<EnsembleManifest> {
    std::fs::create_dir_all(dir)?;
    let grid = ens.grid();
    let mut processes = Vec::new();
    for (name, field) in ens.processes() {
        let file = format!("{name}.csv");
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(dir.join(&file))?));
        let mut header = vec!["path".to_string(), "t".to_string()];
        header.extend((1..=field.dim()).map(|c| format!("v_{c}")));
        w.write_record(&header)?;
        for p in 0..field.n_paths() {
            for i in 0..grid.len() {
                let mut row = vec![p.to_string(), fmt_f64(grid.t(i))];
                row.extend(field.at(p, i).iter().map(|&v| fmt_f64(v)));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        processes.push(ProcessEntry {
            name: name.clone(),
            dim: field.dim(),
            file,
        });
    }
    let manifest = EnsembleManifest {
        seed: ens.seed(),
        n_paths: ens.n_paths(),
        grid: grid.summary(),
        points: grid.points().to_vec(),
        processes,
        a_stochastic: ens.a_is_stochastic(),
        spec,
    };
    let f = BufWriter::new(File::create(dir.join(MANIFEST_FILE))?);
    serde_json::to_writer_pretty(f, &manifest)?;
    Ok(manifest)
}

/// Inverse of [`write_ensemble`].
pub fn read_ensemble(dir: &Path) -> Result<(PathEnsemble, EnsembleManifest)> {
    let manifest: EnsembleManifest =
        serde_json::from_reader(BufReader::new(File::open(dir.join(MANIFEST_FILE))?))?;
    let mut grid = TimeGrid::from_points(manifest.points.clone())?;
    if let Some(d) = manifest.grid.delay {
        grid = grid.with_delay(d.delta)?;
    }
    let grid = Arc::new(grid);
    let mut ens = PathEnsemble::new(grid.clone(), manifest.n_paths, manifest.seed);
    for entry in &manifest.processes {
        let mut r = csv::Reader::from_reader(BufReader::new(File::open(dir.join(&entry.file))?));
        let mut data = Vec::with_capacity(manifest.n_paths * grid.len() * entry.dim);
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.len() != entry.dim + 2 {
                return Err(Error::Config {
                    path: format!("{}:{}", entry.file, row + 2),
                    message: format!("expected {} columns, got {}", entry.dim + 2, rec.len()),
                });
            }
            for c in 2..rec.len() {
                data.push(parse_f64(&rec[c], &format!("{}:{}", entry.file, row + 2))?);
            }
        }
        let field = PathField::from_data(grid.clone(), manifest.n_paths, entry.dim, data)?;
        ens.insert(&entry.name, field)?;
    }
    if ens.get(INCREASING).is_ok() {
        ens.set_a_stochastic(manifest.a_stochastic);
    }
    Ok((ens, manifest))
}
