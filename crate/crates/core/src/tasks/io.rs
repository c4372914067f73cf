use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{DatasetSpec, Demonstration, TaskKind};

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Dims {
    action: usize,
    embed: usize,
}

/// First line of a dataset file. `count` lets readers detect truncation.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    kind: TaskKind,
    dims: Dims,
    frequencies: Vec<f64>,
    noise: f64,
    #[serde(rename = "H")]
    horizon: Option<usize>,
    sigma: f64,
    centers: Vec<Vec<f64>>,
    modes: Vec<usize>,
    count: usize,
}

fn stream_error(e: std::io::Error) -> Error {
    Error::io("<stream>", e)
}

/// Writes the header line followed by one JSON object per demonstration.
pub fn write_dataset(ds: &DatasetSpec, mut out: impl Write) -> Result<()> {
    let header = Header {
        kind: ds.kind,
        dims: Dims {
            action: ds.action_dim,
            embed: ds.embed_dim,
        },
        frequencies: ds.frequencies.clone(),
        noise: ds.mode_noise,
        horizon: ds.horizon,
        sigma: ds.path_noise,
        centers: ds.mode_centers.clone(),
        modes: ds.mode_of_condition.clone(),
        count: ds.records.len(),
    };
    let line = serde_json::to_string(&header).map_err(|e| Error::Contract(e.to_string()))?;
    writeln!(out, "{line}").map_err(stream_error)?;
    for r in &ds.records {
        let line = serde_json::to_string(r).map_err(|e| Error::Contract(e.to_string()))?;
        writeln!(out, "{line}").map_err(stream_error)?;
    }
    out.flush().map_err(stream_error)
}

/// Parses a dataset stream. Parse errors carry the 0-based line index
/// (0 is the header, `i` the `i`-th demonstration).
pub fn read_dataset(input: impl BufRead) -> Result<DatasetSpec> {
    let mut lines = input.lines();
    let first = lines
        .next()
        .transpose()
        .map_err(stream_error)?
        .ok_or_else(|| Error::Parse {
            record: 0,
            message: "missing header".into(),
        })?;
    let header: Header = serde_json::from_str(&first).map_err(|e| Error::Parse {
        record: 0,
        message: e.to_string(),
    })?;
    let mut records = Vec::with_capacity(header.count);
    for (i, line) in lines.enumerate() {
        let line = line.map_err(stream_error)?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Demonstration = serde_json::from_str(&line).map_err(|e| Error::Parse {
            record: i + 1,
            message: e.to_string(),
        })?;
        records.push(rec);
    }
    if records.len() != header.count {
        return Err(Error::Parse {
            record: records.len() + 1,
            message: format!(
                "header declares {} records, found {} (truncated file?)",
                header.count,
                records.len()
            ),
        });
    }
    let ds = DatasetSpec {
        kind: header.kind,
        action_dim: header.dims.action,
        embed_dim: header.dims.embed,
        frequencies: header.frequencies,
        mode_noise: header.noise,
        path_noise: header.sigma,
        horizon: header.horizon,
        mode_centers: header.centers,
        mode_of_condition: header.modes,
        records,
    };
    ds.validate().map_err(|e| match e {
        Error::Parse { record, message } => Error::Parse {
            record: record + 1,
            message,
        },
        other => Error::Parse {
            record: 0,
            message: other.to_string(),
        },
    })?;
    Ok(ds)
}

pub fn save_dataset(ds: &DatasetSpec, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset(ds, BufWriter::new(file)).map_err(|e| relabel(e, path))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<DatasetSpec> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(file)).map_err(|e| relabel(e, path))
}

fn relabel(e: Error, path: &Path) -> Error {
    match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    }
}
