//! Command line and HTTP front end for seedsketch.

pub mod server;

use std::io::Write;

use serde::Serialize;

/// Writes `rows` as CSV with a header taken from the row's field names.
pub fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
