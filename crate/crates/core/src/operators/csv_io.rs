//! Dense matrices stored as CSV: a `rows,cols` header record followed by the
//! entries in row-major order, one matrix row per record.
//!
//! The header may be given either as the two dimensions directly or as the
//! literal line `rows,cols` followed by the dimensions.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::Matrix;

pub fn read_dense_csv(path: impl AsRef<Path>) -> Result<Matrix> {
    read_dense_csv_from(File::open(path)?)
}

pub fn read_dense_csv_from<R: Read>(reader: R) -> Result<Matrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut records = rdr.records();
    let mut header = next_record(&mut records, "missing header")?;
    if header.len() == 2 && &header[0] == "rows" && &header[1] == "cols" {
        header = next_record(&mut records, "missing dimensions after header")?;
    }
    if header.len() != 2 {
        return Err(Error::InvalidConfig(format!(
            "matrix header must be `rows,cols`, found {} fields",
            header.len()
        )));
    }
    let rows = parse_dim(&header[0])?;
    let cols = parse_dim(&header[1])?;
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let record = next_record(&mut records, &format!("missing matrix row {r}"))?;
        if record.len() != cols {
            return Err(Error::DimensionMismatch {
                context: format!("matrix row {r}"),
                expected: cols,
                found: record.len(),
            });
        }
        for field in record.iter() {
            data.push(
                field
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidConfig(format!("bad matrix entry {field:?} in row {r}: {e}")))?,
            );
        }
    }
    if let Some(extra) = records.next() {
        let extra = extra?;
        if !(extra.len() == 1 && extra[0].is_empty()) {
            return Err(Error::InvalidConfig(format!(
                "matrix file has more than the declared {rows} rows"
            )));
        }
    }
    Ok(Matrix::from_row_slice(rows, cols, &data))
}

pub fn write_dense_csv(path: impl AsRef<Path>, matrix: &Matrix) -> Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    writeln!(out, "{},{}", matrix.nrows(), matrix.ncols())?;
    for r in 0..matrix.nrows() {
        let row: Vec<String> = matrix.row(r).iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

fn next_record<R: Read>(records: &mut csv::StringRecordsIter<'_, R>, what: &str) -> Result<csv::StringRecord> {
    match records.next() {
        Some(r) => Ok(r?),
        None => Err(Error::InvalidConfig(format!("matrix file: {what}"))),
    }
}

fn parse_dim(field: &str) -> Result<usize> {
    match field.parse::<usize>() {
        Ok(d) if d > 0 => Ok(d),
        _ => Err(Error::InvalidConfig(format!(
            "matrix dimensions must be positive integers, found {field:?}"
        ))),
    }
}
