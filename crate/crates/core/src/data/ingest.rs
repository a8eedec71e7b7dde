use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::dataset::RawTable;
use crate::error::{Error, Result};

/// Literal token marking a missing cell. Empty cells are missing as well.
pub const MISSING_TOKEN: &str = "NA";

/// Read a CSV file with a header row of variable names.
pub fn read_csv(path: &Path) -> Result<RawTable> {
    let file = File::open(path)?;
    parse_csv(file)
}

/// Write a table with `NA` for missing cells. Values use Rust's shortest
/// round-trip formatting, so reading the file back is lossless.
pub fn write_csv<W: Write>(table: &RawTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::Csv { line: 0, message: e.to_string() };
    w.write_record(table.schema.names()).map_err(csv_err)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|c| match c {
            Some(v) => v.to_string(),
            None => MISSING_TOKEN.to_string(),
        }))
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Parse CSV text: one column per variable, `NA` or empty means missing.
/// Variable kinds are inferred (0/1 columns are binary).
pub fn parse_csv<R: Read>(reader: R) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Csv {
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(Error::Csv {
            line: 1,
            message: "empty header".into(),
        });
    }

    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Csv {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let mut cells = Vec::with_capacity(names.len());
        for (j, cell) in record.iter().enumerate() {
            if cell.is_empty() || cell == MISSING_TOKEN {
                cells.push(None);
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => cells.push(Some(v)),
                _ => {
                    return Err(Error::Csv {
                        line,
                        message: format!(
                            "cell `{cell}` in column `{}` is neither a number nor `{MISSING_TOKEN}`",
                            names[j]
                        ),
                    })
                }
            }
        }
        rows.push(cells);
    }
    RawTable::with_inferred_kinds(names, rows)
}
