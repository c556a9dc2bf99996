//! CSV ingestion and output helpers.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use ckpca::DataMatrix;

use crate::error::{CliError, CliResult};

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Parses comma-separated numeric rows. A first row containing any
/// non-numeric cell is treated as a header and skipped.
pub fn parse_csv(text: &str) -> CliResult<DataMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (k, record) in reader.records().enumerate() {
        let line = k + 1;
        let record = record.map_err(|e| CliError::Parse {
            row: line,
            column: 0,
            message: e.to_string(),
        })?;
        if record.iter().all(|c| c.is_empty()) {
            continue;
        }
        let parsed: Vec<Result<f64, _>> = record.iter().map(|c| c.parse::<f64>()).collect();
        if k == 0 && parsed.iter().any(|v| v.is_err()) {
            width = Some(record.len());
            continue;
        }
        let mut row = Vec::with_capacity(record.len());
        for (j, (cell, value)) in record.iter().zip(parsed).enumerate() {
            match value {
                Ok(v) if v.is_finite() => row.push(v),
                _ => {
                    return Err(CliError::Parse {
                        row: line,
                        column: j + 1,
                        message: format!("`{cell}` is not a finite number"),
                    })
                }
            }
        }
        if let Some(w) = width {
            if w != row.len() {
                return Err(CliError::Parse {
                    row: line,
                    column: row.len().min(w) + 1,
                    message: format!("expected {w} columns, found {}", row.len()),
                });
            }
        }
        width = Some(row.len());
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Parse {
            row: 1,
            column: 1,
            message: "no numeric rows".into(),
        });
    }
    DataMatrix::from_rows(&rows).map_err(CliError::from)
}

pub fn read_csv(path: &Path) -> CliResult<DataMatrix> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(io_err(path))?;
    parse_csv(&text)
}

/// Writes a header line plus one line per row.
pub fn write_table(
    path: &Path,
    header: &[String],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> CliResult<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| CliError::Io {
        path: path.display().to_string(),
        source: io::Error::other(e),
    };
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_matrix(path: &Path, x: &DataMatrix, prefix: &str) -> CliResult<()> {
    let header: Vec<String> = (1..=x.ncols()).map(|j| format!("{prefix}{j}")).collect();
    write_table(
        path,
        &header,
        x.rows().map(|r| r.iter().map(|v| v.to_string()).collect()),
    )
}

/// Pretty JSON to `path`, or stdout when no path is given.
pub fn write_json(path: Option<&Path>, value: &serde_json::Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("json values serialize");
    text.push('\n');
    match path {
        Some(p) => std::fs::write(p, text).map_err(io_err(p)),
        None => io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(io_err(Path::new("<stdout>"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_detection() {
        let x = parse_csv("a,b\n1,2\n3,4\n").unwrap();
        assert_eq!((x.nrows(), x.ncols()), (2, 2));
        let y = parse_csv("1,2\n3, 4\n").unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn bad_cell_names_position() {
        match parse_csv("x,y\n1,2\n3,oops\n") {
            Err(CliError::Parse { row, column, .. }) => assert_eq!((row, column), (3, 2)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_csv("1,2\n3\n"),
            Err(CliError::Parse { row: 2, .. })
        ));
        assert!(matches!(parse_csv("a,b\n"), Err(CliError::Parse { .. })));
        assert!(matches!(
            parse_csv("1,nan\n"),
            Err(CliError::Parse {
                row: 1,
                column: 2,
                ..
            })
        ));
    }
}
