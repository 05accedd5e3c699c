//! CSV and JSON output.
//!
//! CSV files have a header row, LF line endings and every number written
//! with 16 significant digits, so equal inputs give byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use aggdiff_core::{RadialField, SimTrace};
use serde::Serialize;

/// One value in scientific notation with 16 significant digits.
pub fn format_number(x: f64) -> String {
    format!("{x:.15e}")
}

/// Renders a table; every row must have as many entries as the header.
pub fn csv_string<I>(header: &[&str], rows: I) -> String
where
    I: IntoIterator,
    I::Item: AsRef<[f64]>,
{
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let row = row.as_ref();
        debug_assert_eq!(row.len(), header.len());
        for (k, x) in row.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            let _ = write!(out, "{x:.15e}");
        }
        out.push('\n');
    }
    out
}

/// `r,<column>` at the cell centres.
pub fn field_csv(field: &RadialField, column: &str) -> String {
    let grid = field.grid();
    csv_string(&["r", column], field.values().iter().enumerate().map(|(i, &v)| [grid.center(i), v]))
}

pub const TRACE_HEADER: [&str; 8] = ["t", "mass", "lm", "linf", "F", "m2", "dissipation", "dt"];

pub fn trace_csv(trace: &SimTrace) -> String {
    csv_string(
        &TRACE_HEADER,
        trace.records.iter().map(|r| {
            [r.t, r.mass, r.lm_norm, r.linf, r.free_energy, r.second_moment, r.dissipation, r.dt]
        }),
    )
}

pub fn write_text(path: &Path, text: &str) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)
}

/// Pretty-printed, with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    write_text(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use aggdiff_core::RadialGrid;

    #[test]
    fn numbers_keep_sixteen_digits() {
        assert_eq!(format_number(0.1), "1.000000000000000e-1");
        let x = std::f64::consts::PI;
        let back: f64 = format_number(x).parse().unwrap();
        assert!((back - x).abs() <= 4.0 * f64::EPSILON * x);
    }

    #[test]
    fn field_table_layout() {
        let f = RadialField::new(RadialGrid::new(2, 1.0).unwrap(), vec![2.0, 0.0]).unwrap();
        let text = field_csv(&f, "u");
        assert_eq!(text, "r,u\n2.500000000000000e-1,2.000000000000000e0\n7.500000000000000e-1,0.000000000000000e0\n");
        assert!(!text.contains('\r'));
    }
}
