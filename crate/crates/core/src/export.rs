//! CSV helpers shared by the report writers.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

pub(crate) fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Writes `header` followed by one serialized record per row. The header is
/// written even when there are no rows.
pub fn write_table<T: Serialize>(out: impl Write, header: &[&str], rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(header).map_err(csv_error)?;
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}
