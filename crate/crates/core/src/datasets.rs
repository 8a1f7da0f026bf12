//! Reference datasets shipped with the crate.

use crate::dist::ContingencyTable;
use crate::error::Result;
use crate::io::{read_columns, read_table};

pub const FISHER_CSV: &str = include_str!("../data/fisher.csv");
pub const FISHER_PROBS_CSV: &str = include_str!("../data/fisher_probs.csv");
pub const WAIS_CSV: &str = include_str!("../data/wais.csv");
pub const LP_MOMENTS_CSV: &str = include_str!("../data/lp_moments.csv");
pub const NORMAL_COMOMENTS_CSV: &str = include_str!("../data/normal_comoments.csv");

/// Bundled files by name.
pub fn bundled(name: &str) -> Option<&'static str> {
    match name {
        "fisher.csv" => Some(FISHER_CSV),
        "fisher_probs.csv" => Some(FISHER_PROBS_CSV),
        "wais.csv" => Some(WAIS_CSV),
        "lp_moments.csv" => Some(LP_MOMENTS_CSV),
        "normal_comoments.csv" => Some(NORMAL_COMOMENTS_CSV),
        _ => None,
    }
}

/// Eye by hair colour counts, `n = 5387`.
pub fn fisher() -> ContingencyTable {
    read_table(FISHER_CSV.as_bytes()).expect("bundled table")
}

/// The same table as joint proportions rounded to three decimals.
pub fn fisher_probs() -> ContingencyTable {
    read_table(FISHER_PROBS_CSV.as_bytes()).expect("bundled table")
}

/// Age group by intelligence score rank, 15 subjects.
pub fn wais() -> ContingencyTable {
    read_table(WAIS_CSV.as_bytes()).expect("bundled table")
}

/// `(law, [LP1..LP6])` rounded to three decimals.
pub fn lp_moments_table() -> Vec<(String, [f64; 6])> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(LP_MOMENTS_CSV.as_bytes());
    rdr.records()
        .map(|r| {
            let r = r.expect("bundled table");
            let mut v = [0.0; 6];
            for (j, slot) in v.iter_mut().enumerate() {
                *slot = r[j + 1].parse().expect("bundled number");
            }
            (r[0].to_string(), v)
        })
        .collect()
}

/// `(rho, 4 x 4 comoment matrix)` rounded to two decimals.
pub fn normal_comoments_table() -> Result<Vec<(f64, Vec<Vec<f64>>)>> {
    let (_, cols) = read_columns(NORMAL_COMOMENTS_CSV.as_bytes(), &[])?;
    let mut out: Vec<(f64, Vec<Vec<f64>>)> = Vec::new();
    for r in 0..cols[0].len() {
        let rho = cols[0][r];
        let row: Vec<f64> = (2..6).map(|c| cols[c][r]).collect();
        match out.last_mut() {
            Some((last, m)) if *last == rho => m.push(row),
            _ => out.push((rho, vec![row])),
        }
    }
    Ok(out)
}
