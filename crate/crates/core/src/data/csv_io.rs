use std::fs::File;
use std::io::Write;
use std::path::Path;

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Writes `label,f0,f1,...` with one sample per line. Values use the shortest
/// representation that parses back to the same bits.
pub fn write_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("label");
    for j in 0..ds.dim() {
        out.push_str(&format!(",f{j}"));
    }
    out.push('\n');
    for (row, label) in ds.features().rows().zip(ds.labels()) {
        out.push_str(&label.to_string());
        for v in row {
            out.push(',');
            out.push_str(&format!("{v:?}"));
        }
        out.push('\n');
    }
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Reads the CSV written by [`write_csv`]. Without `class_count` the count is
/// inferred as one more than the largest label (at least 2).
pub fn read_csv(path: &Path, split: Split, class_count: Option<usize>) -> Result<Dataset> {
    let source = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::record(&source, 0, format!("{other:?}")),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::record(&source, 0, e.to_string()))?
        .clone();
    if headers.get(0) != Some("label") {
        return Err(Error::record(&source, 0, "header must start with `label`"));
    }
    for (j, h) in headers.iter().skip(1).enumerate() {
        if h != format!("f{j}") {
            return Err(Error::record(&source, 0, format!("column {} must be f{j}, found {h:?}", j + 1)));
        }
    }
    let dim = headers.len() - 1;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| Error::record(&source, line, e.to_string()))?;
        if rec.len() != dim + 1 {
            return Err(Error::record(
                &source,
                line,
                format!("{} fields, header has {}", rec.len(), dim + 1),
            ));
        }
        let label: usize = rec[0]
            .trim()
            .parse()
            .map_err(|_| Error::record(&source, line, format!("bad label {:?}", &rec[0])))?;
        labels.push(label);
        for field in rec.iter().skip(1) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::record(&source, line, format!("bad number {field:?}")))?;
            features.push(v);
        }
    }
    if labels.is_empty() {
        return Err(Error::record(&source, 1, "no samples"));
    }
    let class_count = class_count.unwrap_or_else(|| labels.iter().max().map_or(2, |&m| (m + 1).max(2)));
    let n = labels.len();
    Dataset::new(Tensor::matrix(n, dim, features)?, labels, class_count, split)
        .map_err(|e| Error::record(&source, 0, e.to_string()))
}
