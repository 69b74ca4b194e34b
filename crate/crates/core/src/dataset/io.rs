//! JSON-lines and delimited-text dataset files.
//!
//! JSON lines: one object per line with `id`, `features`, `label`, and the
//! optional `gold_label` and `provenance` (`"human"` or `"auto"`, default
//! auto). Delimited text: header `id,label,f0,...,f{d-1}`; `gold_label` and
//! `provenance` may appear as extra named columns.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetError, Example, ExampleId, Provenance};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    JsonLines,
    DelimitedText,
}

impl Format {
    /// `.csv`/`.tsv`/`.txt` map to delimited text, anything else to JSON lines.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") | Some("tsv") | Some("txt") => Format::DelimitedText,
            _ => Format::JsonLines,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    id: ExampleId,
    features: Vec<f64>,
    label: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gold_label: Option<usize>,
    #[serde(default)]
    provenance: Option<Provenance>,
}

/// Load a dataset file. When `num_classes` is `None` it is inferred as one
/// more than the largest label present.
pub fn load_dataset(
    path: impl AsRef<Path>,
    format: Format,
    num_classes: Option<usize>,
) -> Result<Dataset, DatasetError> {
    let file = File::open(path.as_ref())?;
    read_dataset(BufReader::new(file), format, num_classes)
}

pub fn read_dataset<R: Read>(
    reader: R,
    format: Format,
    num_classes: Option<usize>,
) -> Result<Dataset, DatasetError> {
    let rows = match format {
        Format::JsonLines => read_jsonl(reader)?,
        Format::DelimitedText => read_delimited(reader)?,
    };
    if rows.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    let dim = rows[0].1.features.len();
    for (line, r) in &rows {
        if r.features.len() != dim {
            return Err(DatasetError::Schema { line: *line, expected: dim, found: r.features.len() });
        }
        if let Some(bad) = r.features.iter().find(|v| !v.is_finite()) {
            return Err(DatasetError::Parse {
                line: *line,
                message: format!("non-finite feature value {bad}"),
            });
        }
    }
    let k = num_classes.unwrap_or_else(|| {
        rows.iter()
            .flat_map(|(_, r)| std::iter::once(r.label).chain(r.gold_label))
            .max()
            .map_or(1, |m| m + 1)
    });
    let examples = rows
        .into_iter()
        .map(|(_, r)| Example {
            id: r.id,
            features: r.features,
            assigned_label: r.label,
            provenance: r.provenance.unwrap_or(Provenance::Auto),
            gold_label: r.gold_label,
        })
        .collect();
    Dataset::new(examples, k)
}

fn read_jsonl<R: Read>(reader: R) -> Result<Vec<(usize, Record)>, DatasetError> {
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line)
            .map_err(|e| DatasetError::Parse { line: i + 1, message: e.to_string() })?;
        rows.push((i + 1, record));
    }
    Ok(rows)
}

fn read_delimited<R: Read>(reader: R) -> Result<Vec<(usize, Record)>, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| DatasetError::Parse { line: 1, message: e.to_string() })?
        .clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let parse_err = |message: String| DatasetError::Parse { line: 1, message };
    let id_col = col("id").ok_or_else(|| parse_err("missing `id` column".into()))?;
    let label_col = col("label").ok_or_else(|| parse_err("missing `label` column".into()))?;
    let gold_col = col("gold_label");
    let prov_col = col("provenance");
    let mut feature_cols = Vec::new();
    while let Some(c) = col(&format!("f{}", feature_cols.len())) {
        feature_cols.push(c);
    }
    let known = 2 + feature_cols.len() + gold_col.is_some() as usize + prov_col.is_some() as usize;
    if known != header.len() {
        return Err(parse_err("unexpected column in header".into()));
    }

    let mut rows = Vec::new();
    for result in rdr.records() {
        let rec = result.map_err(|e| DatasetError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let err = |message: String| DatasetError::Parse { line, message };
        let field = |c: usize| rec.get(c).unwrap_or("");
        let id = field(id_col).parse().map_err(|e| err(format!("id: {e}")))?;
        let label = field(label_col).parse().map_err(|e| err(format!("label: {e}")))?;
        let gold_label = match gold_col.map(field) {
            None | Some("") => None,
            Some(s) => Some(s.parse().map_err(|e| err(format!("gold_label: {e}")))?),
        };
        let provenance = match prov_col.map(field) {
            None | Some("") => None,
            Some(s) => Some(s.parse().map_err(err)?),
        };
        let features = feature_cols
            .iter()
            .map(|&c| field(c).parse::<f64>().map_err(|e| err(format!("f{c}: {e}"))))
            .collect::<Result<_, _>>()?;
        rows.push((line, Record { id, features, label, gold_label, provenance }));
    }
    Ok(rows)
}

pub fn save_dataset(d: &Dataset, path: impl AsRef<Path>, format: Format) -> Result<(), DatasetError> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    write_dataset(d, &mut w, format)?;
    w.flush()?;
    Ok(())
}

pub fn write_dataset<W: Write>(d: &Dataset, mut w: W, format: Format) -> Result<(), DatasetError> {
    match format {
        Format::JsonLines => {
            for e in d.examples() {
                let record = Record {
                    id: e.id,
                    features: e.features.clone(),
                    label: e.assigned_label,
                    gold_label: e.gold_label,
                    provenance: Some(e.provenance),
                };
                serde_json::to_writer(&mut w, &record).map_err(std::io::Error::from)?;
                w.write_all(b"\n")?;
            }
        }
        Format::DelimitedText => {
            write!(w, "id,label,gold_label,provenance")?;
            for i in 0..d.dim() {
                write!(w, ",f{i}")?;
            }
            writeln!(w)?;
            for e in d.examples() {
                let gold = e.gold_label.map(|g| g.to_string()).unwrap_or_default();
                write!(w, "{},{},{},{}", e.id, e.assigned_label, gold, e.provenance.as_str())?;
                for v in &e.features {
                    write!(w, ",{v:?}")?;
                }
                writeln!(w)?;
            }
        }
    }
    Ok(())
}
