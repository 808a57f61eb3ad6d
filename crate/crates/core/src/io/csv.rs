//! Parameter-grid CSV export (heatmap data).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Write `beta_1,...,beta_d,value` rows. Floats use the shortest
/// representation that round-trips.
pub fn export_grid_csv(rows: &[(Vec<f64>, f64)], path: impl AsRef<Path>) -> Result<()> {
    export_grid_csv_with_meta(rows, &[], path)
}

/// Like [`export_grid_csv`], preceded by `# key=value` comment lines.
pub fn export_grid_csv_with_meta(
    rows: &[(Vec<f64>, f64)],
    meta: &[(&str, String)],
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_grid_csv(&mut out, rows, meta)?;
    out.flush()?;
    Ok(())
}

pub fn write_grid_csv(out: &mut impl Write, rows: &[(Vec<f64>, f64)], meta: &[(&str, String)]) -> Result<()> {
    let d = rows.first().map_or(0, |(b, _)| b.len());
    if rows.iter().any(|(b, _)| b.len() != d) {
        return Err(Error::Consistency("grid rows differ in parameter dimension".into()));
    }
    for (k, v) in meta {
        writeln!(out, "# {k}={v}")?;
    }
    let mut header: Vec<String> = (1..=d).map(|i| format!("beta_{i}")).collect();
    header.push("value".into());
    writeln!(out, "{}", header.join(","))?;
    for (beta, value) in rows {
        let mut fields: Vec<String> = beta.iter().map(|v| v.to_string()).collect();
        fields.push(value.to_string());
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}
