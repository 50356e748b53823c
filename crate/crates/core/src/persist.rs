//! CSV and JSON output.
//!
//! CSV files start with the column header, then one row per record, then a
//! metadata trailer of `# key: value` lines. JSON files carry the metadata,
//! the full config and every result, and reload to bitwise-equal values.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{ScalingDataset, StoppingResult, SweepConfig, MIN_VALID_FOR_FIT};

pub const SCALING_COLUMNS: [&str; 8] = [
    "cell_id",
    "m",
    "b_min",
    "delta_omega",
    "x_value",
    "t_mean",
    "t_std",
    "n_valid",
];

/// Drive convention recorded with every run.
pub const B_EFF_CONVENTION: &str = "b_eff = B per register";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub version: String,
    pub seed_root: u64,
    pub units: String,
    pub entries: Vec<(String, String)>,
}

impl Metadata {
    pub fn new(seed_root: u64, units: &str) -> Self {
        Metadata {
            version: crate::VERSION.to_string(),
            seed_root,
            units: units.to_string(),
            entries: Vec::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn for_sweep(config: &SweepConfig) -> Self {
        Metadata::new(config.seed_root, config.units.label())
            .with("threshold", config.threshold)
            .with("statistic", format!("{:?}", config.statistic))
            .with("n_samples", config.n_samples)
            .with("omega_min", config.omega_min)
            .with("t_min_factor", config.time_grid.t_min_factor)
            .with("growth", config.time_grid.growth)
            .with("t_max_factor", config.time_grid.t_max_factor)
            .with("max_drive_ratio", config.max_drive_ratio)
            .with("min_valid_for_fit", MIN_VALID_FOR_FIT)
            .with("b_eff", B_EFF_CONVENTION)
            .with("time_unit", "s")
            .with("x_value_unit", "sqrt(rad/s)/(rad/s)^1.5")
    }

    fn lines(&self) -> Vec<String> {
        let mut out = vec![
            format!("# version: {}", self.version),
            format!("# seed_root: {}", self.seed_root),
            format!("# units: {}", self.units),
        ];
        out.extend(self.entries.iter().map(|(k, v)| format!("# {k}: {v}")));
        out
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let source = match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    };
    io_err(path, source)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Header, rows, metadata trailer. Every row must match the header width.
pub fn write_table_csv(path: &Path, header: &[&str], rows: &[Vec<String>], meta: &Metadata) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut buf = BufWriter::new(file);
    {
        let mut w = csv::WriterBuilder::new().from_writer(&mut buf);
        w.write_record(header).map_err(|e| csv_err(path, e))?;
        for row in rows {
            if row.len() != header.len() {
                return Err(Error::param(
                    "rows",
                    format!("row width {} != {}", row.len(), header.len()),
                ));
            }
            w.write_record(row).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| io_err(path, e))?;
    }
    for line in meta.lines() {
        writeln!(buf, "{line}").map_err(|e| io_err(path, e))?;
    }
    buf.flush().map_err(|e| io_err(path, e))
}

pub fn write_scaling_csv(path: &Path, dataset: &ScalingDataset, meta: &Metadata) -> Result<()> {
    let rows: Vec<Vec<String>> = dataset
        .rows
        .iter()
        .map(|r| {
            vec![
                r.cell_id.clone(),
                r.m.to_string(),
                r.b_min.to_string(),
                r.delta_omega.to_string(),
                r.x_value.to_string(),
                fmt_opt(r.t_mean),
                fmt_opt(r.t_std),
                r.n_valid.to_string(),
            ]
        })
        .collect();
    let mut meta = meta.clone();
    if let Some(fit) = &dataset.fit {
        meta = meta
            .with("fit_slope", fit.slope)
            .with("fit_intercept", fit.intercept)
            .with("fit_residual", fit.residual);
    }
    write_table_csv(path, &SCALING_COLUMNS, &rows, &meta)
}

/// Data rows of a CSV written by [`write_table_csv`], without header or trailer.
pub fn read_table_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let header = r
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<Vec<Vec<String>>, _>>()
        .map_err(|e| csv_err(path, e))?;
    Ok((header, rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepDocument {
    pub metadata: Metadata,
    pub config: SweepConfig,
    pub dataset: ScalingDataset,
    pub results: Vec<StoppingResult>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut buf = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut buf, value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    writeln!(buf).map_err(|e| io_err(path, e))?;
    buf.flush().map_err(|e| io_err(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    serde_json::from_reader(std::io::BufReader::new(file)).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_dataset_has_header_and_no_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_scaling_csv(&p, &ScalingDataset::empty(), &Metadata::new(1, "hz")).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().next().unwrap(), SCALING_COLUMNS.join(","));
        assert!(text.lines().skip(1).all(|l| l.starts_with('#')));
        let (h, rows) = read_table_csv(&p).unwrap();
        assert_eq!(h, SCALING_COLUMNS);
        assert!(rows.is_empty());
    }

    #[test]
    fn io_error_names_path() {
        let p = Path::new("/nonexistent-dir/x.json");
        let err = write_json(p, &1).unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/x.json"));
    }

    #[test]
    fn ragged_rows_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let rows = vec![vec!["1".to_string()]];
        assert!(write_table_csv(&p, &["a", "b"], &rows, &Metadata::new(0, "hz")).is_err());
    }
}
