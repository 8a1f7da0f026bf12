//! CSV ingestion. Lines starting with `#` are comments; the first
//! remaining line is a header.

use std::io::Read;

use crate::dist::ContingencyTable;
use crate::error::{Error, Result};

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(input)
}

fn parse_number(field: &str, line: u64, column: usize) -> Result<f64> {
    field.parse::<f64>().map_err(|_| Error::Parse {
        line: line as usize,
        column,
        message: format!("'{field}' is not a number"),
    })
}

/// Two-way table: header `corner,col1,..,colJ`, then `label,v1,..,vJ` rows.
pub fn read_table<R: Read>(input: R) -> Result<ContingencyTable> {
    let mut rdr = reader(input);
    let header = rdr.headers()?.clone();
    if header.is_empty() {
        return Err(Error::EmptyInput);
    }
    if header.len() < 2 {
        return Err(Error::InvalidInput("a table needs a label column and at least one value column".into()));
    }
    let col_labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut row_labels = Vec::new();
    let mut entries = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        row_labels.push(rec[0].to_string());
        let row = rec
            .iter()
            .enumerate()
            .skip(1)
            .map(|(c, f)| parse_number(f, line, c + 1))
            .collect::<Result<Vec<f64>>>()?;
        entries.push(row);
    }
    if entries.is_empty() {
        return Err(Error::EmptyInput);
    }
    ContingencyTable::new(entries, row_labels, col_labels)
}

/// Column selector: a header name or a 1-based position.
fn resolve(header: &csv::StringRecord, sel: &str) -> Result<usize> {
    if let Some(i) = header.iter().position(|h| h == sel) {
        return Ok(i);
    }
    match sel.parse::<usize>() {
        Ok(i) if i >= 1 && i <= header.len() => Ok(i - 1),
        _ => Err(Error::InvalidInput(format!("no column '{sel}'"))),
    }
}

/// Numeric columns picked by `selectors`. With no selectors, every column.
pub fn read_columns<R: Read>(input: R, selectors: &[String]) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = reader(input);
    let header = rdr.headers()?.clone();
    if header.is_empty() {
        return Err(Error::EmptyInput);
    }
    let idx: Vec<usize> = if selectors.is_empty() {
        (0..header.len()).collect()
    } else {
        selectors.iter().map(|s| resolve(&header, s)).collect::<Result<_>>()?
    };
    let names = idx.iter().map(|&i| header[i].to_string()).collect();
    let mut cols = vec![Vec::new(); idx.len()];
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        for (c, &i) in idx.iter().enumerate() {
            cols[c].push(parse_number(&rec[i], line, i + 1)?);
        }
    }
    if cols.iter().all(Vec::is_empty) {
        return Err(Error::EmptyInput);
    }
    Ok((names, cols))
}
