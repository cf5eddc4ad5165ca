//! Dataset CSV files, metadata sidecars and group files.
//!
//! Numbers are written with 17 significant digits so that reading a file
//! back reproduces every `f64` exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::penalty::GroupPartition;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// `{:.16e}`: 17 significant digits, enough to round-trip any finite `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes the header `x1,...,xp,y` and one row per observation.
pub fn write_dataset<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::Format(format!("writing csv: {e}"));
    let mut header: Vec<String> = (1..=data.p()).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    out.write_record(&header).map_err(csv_err)?;
    let (x, y) = (data.design(), data.response());
    let mut record = Vec::with_capacity(data.p() + 1);
    for i in 0..data.n() {
        record.clear();
        record.extend(x.row(i).iter().map(|&v| format_value(v)));
        record.push(format_value(y[i]));
        out.write_record(&record).map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::Format(format!("writing csv: {e}")))
}

/// Reads a dataset whose header names a `y` column; every other column is a
/// predictor, in file order.
pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Format(format!("reading csv header: {e}")))?
        .clone();
    let names: Vec<&str> = header.iter().collect();
    let y_col = names
        .iter()
        .position(|h| *h == "y")
        .ok_or_else(|| Error::Format("csv header has no `y` column".into()))?;
    let p = names.len() - 1;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format(format!("csv row {}: {e}", r + 1)))?;
        if rec.len() != names.len() {
            return Err(Error::Format(format!(
                "csv row {} has {} fields, expected {}",
                r + 1,
                rec.len(),
                names.len()
            )));
        }
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::Format(format!(
                    "non-numeric value {field:?} at row {}, column {} ({})",
                    r + 1,
                    c + 1,
                    names[c]
                ))
            })?;
            if c == y_col {
                y.push(v);
            } else {
                x.push(v);
            }
        }
    }
    let n = y.len();
    let design = Array2::from_shape_vec((n, p), x).map_err(|e| Error::Shape(e.to_string()))?;
    Dataset::new(design, Array1::from(y))
}

/// Everything about a dataset that the CSV does not carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub n: usize,
    pub p: usize,
    #[serde(flatten)]
    pub meta: DatasetMeta,
    /// 0-based indices of the nonzero true coefficients.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth_support: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<Vec<usize>>>,
}

impl Sidecar {
    pub fn of(data: &Dataset) -> Self {
        Self {
            n: data.n(),
            p: data.p(),
            meta: data.meta().clone(),
            truth_support: data
                .truth()
                .map(|t| t.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, _)| j).collect()),
            truth: data.truth().map(|t| t.to_vec()),
            groups: data.groups().map(|g| g.blocks().to_vec()),
        }
    }

    /// Attaches metadata, truth and groups to `data` after checking sizes.
    pub fn apply(&self, data: Dataset) -> Result<Dataset> {
        if (self.n, self.p) != (data.n(), data.p()) {
            return Err(Error::Shape(format!(
                "metadata describes {}x{} data but the csv holds {}x{}",
                self.n,
                self.p,
                data.n(),
                data.p()
            )));
        }
        let mut data = data.with_meta(self.meta.clone());
        if let Some(t) = &self.truth {
            data = data.with_truth(Array1::from(t.clone()))?;
        }
        if let Some(g) = &self.groups {
            data = data.with_groups(GroupPartition::new(g.clone())?)?;
        }
        Ok(data)
    }
}

/// `data.csv` -> `data.meta.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

/// Writes the CSV and its sidecar; returns the sidecar path.
pub fn save_dataset(data: &Dataset, csv_path: &Path) -> Result<PathBuf> {
    let file = File::create(csv_path).map_err(io_err(csv_path))?;
    write_dataset(data, BufWriter::new(file))?;
    let meta_path = sidecar_path(csv_path);
    let json = serde_json::to_string_pretty(&Sidecar::of(data)).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(&meta_path, json + "\n").map_err(io_err(&meta_path))?;
    Ok(meta_path)
}

/// Reads a CSV and, when present next to it, its sidecar.
pub fn load_dataset(csv_path: &Path) -> Result<Dataset> {
    let file = File::open(csv_path).map_err(io_err(csv_path))?;
    let data = read_dataset(BufReader::new(file))
        .map_err(|e| Error::Format(format!("{}: {e}", csv_path.display())))?;
    let meta_path = sidecar_path(csv_path);
    if !meta_path.exists() {
        return Ok(data);
    }
    let text = std::fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
    let sidecar: Sidecar = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", meta_path.display())))?;
    sidecar.apply(data)
}

/// One line per group of space-separated 0-based indices; blank lines and
/// lines starting with `#` are skipped.
pub fn parse_groups<R: BufRead>(reader: R, p: usize) -> Result<GroupPartition> {
    let mut blocks = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Format(format!("groups line {}: {e}", k + 1)))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let block = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<usize>()
                    .map_err(|_| Error::Format(format!("groups line {}: bad index {tok:?}", k + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        blocks.push(block);
    }
    let groups = GroupPartition::new(blocks)?;
    if groups.dim() != p {
        return Err(Error::Shape(format!(
            "groups cover {} coefficients, data has {p}",
            groups.dim()
        )));
    }
    Ok(groups)
}

pub fn write_groups<W: Write>(groups: &GroupPartition, mut writer: W) -> Result<()> {
    let fmt_err = |e: std::io::Error| Error::Format(format!("writing groups: {e}"));
    for block in groups.blocks() {
        let line: Vec<String> = block.iter().map(|j| j.to_string()).collect();
        writeln!(writer, "{}", line.join(" ")).map_err(fmt_err)?;
    }
    Ok(())
}

pub fn load_groups(path: &Path, p: usize) -> Result<GroupPartition> {
    let file = File::open(path).map_err(io_err(path))?;
    parse_groups(BufReader::new(file), p).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}
