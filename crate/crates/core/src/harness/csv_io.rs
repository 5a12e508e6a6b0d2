use std::fs::File;
use std::path::{Path, PathBuf};

use super::VerticalDataset;
use crate::error::{Error, Result};
use crate::numkit::{DenseMatrix, DenseVector};

fn parse_error(file: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads a headed numeric CSV into `(rows, cols, row-major values)`.
fn read_numeric(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let file = File::open(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| parse_error(path, 1, e.to_string()))?
        .clone();
    if header.is_empty() || header.iter().all(|h| h.trim().is_empty()) {
        return Err(parse_error(path, 1, "empty file: expected a header row"));
    }
    let cols = header.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != cols {
            return Err(parse_error(
                path,
                line,
                format!("expected {cols} fields, found {}", record.len()),
            ));
        }
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                parse_error(path, line, format!("column {} (`{}`): `{cell}` is not a number", c + 1, &header[c]))
            })?;
            if !v.is_finite() {
                return Err(parse_error(path, line, format!("column {}: non-finite value", c + 1)));
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(parse_error(path, 2, "no data rows after the header"));
    }
    Ok((rows, cols, values))
}

/// One headed CSV per party plus a single-column label file; row `i` of
/// every file is sample `i`. The last party holds the labels.
pub fn load_csv_vertical<P: AsRef<Path>>(paths: &[P], label_path: impl AsRef<Path>) -> Result<VerticalDataset> {
    if paths.is_empty() {
        return Err(Error::Config("no party feature files given".into()));
    }
    let label_path = label_path.as_ref();
    let (n, label_cols, labels) = read_numeric(label_path)?;
    if label_cols != 1 {
        return Err(parse_error(label_path, 1, format!("label file must have one column, found {label_cols}")));
    }
    let mut slices = Vec::with_capacity(paths.len());
    for p in paths {
        let p = p.as_ref();
        let (rows, cols, values) = read_numeric(p)?;
        if rows != n {
            let line = rows.min(n) as u64 + 2;
            return Err(parse_error(
                p,
                line,
                format!("{rows} data rows but the label file {} has {n}", label_path.display()),
            ));
        }
        slices.push(DenseMatrix::new(rows, cols, values)?);
    }
    VerticalDataset::new(slices, DenseVector::new(labels)?)
}

/// Writes `party_<k>.csv` for every party and `labels.csv` into `dir`;
/// returns the party paths and the label path.
pub fn write_csv_vertical(data: &VerticalDataset, dir: &Path) -> Result<(Vec<PathBuf>, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(data.parties());
    for (k, (slice, range)) in data.slices().iter().zip(data.feature_split()).enumerate() {
        let path = dir.join(format!("party_{k}.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(csv_io)?;
        w.write_record(range.clone().map(|c| format!("x{c}"))).map_err(csv_io)?;
        for i in 0..slice.rows() {
            w.write_record(slice.row(i).iter().map(|v| v.to_string())).map_err(csv_io)?;
        }
        w.flush()?;
        paths.push(path);
    }
    let label_path = dir.join("labels.csv");
    let mut w = csv::Writer::from_path(&label_path).map_err(csv_io)?;
    w.write_record(["y"]).map_err(csv_io)?;
    for y in data.labels().iter() {
        w.write_record([y.to_string()]).map_err(csv_io)?;
    }
    w.flush()?;
    Ok((paths, label_path))
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
