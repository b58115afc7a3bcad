use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{validate_dataset, RawTable, Result, TabularDataset};

fn read_raw<R: Read>(reader: R) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok(RawTable { header, rows })
}

pub fn read_raw_str(text: &str) -> Result<RawTable> {
    read_raw(text.as_bytes())
}

pub fn read_raw_path(path: &Path) -> Result<RawTable> {
    read_raw(File::open(path)?)
}

/// Reads a CSV (RFC 4180 quoting, header row first) and validates it.
pub fn read_csv_path(path: impl AsRef<Path>) -> Result<TabularDataset> {
    validate_dataset(&read_raw_path(path.as_ref())?)
}

pub fn read_csv_str(text: &str) -> Result<TabularDataset> {
    validate_dataset(&read_raw_str(text)?)
}

pub fn to_csv_string(dataset: &TabularDataset) -> String {
    let mut out = Vec::new();
    write_csv(dataset, &mut out).expect("writing to memory");
    String::from_utf8(out).expect("csv output is utf-8")
}

pub fn write_csv_path(dataset: &TabularDataset, path: impl AsRef<Path>) -> Result<()> {
    let f = File::create(path)?;
    write_csv(dataset, f)
}

fn write_csv<W: Write>(dataset: &TabularDataset, w: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().from_writer(w);
    wtr.write_record(dataset.columns().iter().map(|c| c.name.as_str()))?;
    for row in dataset.rows() {
        wtr.write_record(row.iter().map(|c| c.render()))?;
    }
    wtr.flush()?;
    Ok(())
}
