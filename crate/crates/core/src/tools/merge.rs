//! Vertical merge of several source tables.

use std::collections::HashSet;

use crate::dataset::{validate_dataset, Cell, RawTable, TabularDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ValueType {
    Number,
    Text,
    Mixed,
    Empty,
}

fn value_type(d: &TabularDataset, c: usize) -> ValueType {
    let (mut num, mut text) = (false, false);
    for cell in d.column_cells(c) {
        match cell {
            Cell::Num(_) => num = true,
            Cell::Text(_) => text = true,
            Cell::Missing => {}
        }
    }
    match (num, text) {
        (true, false) => ValueType::Number,
        (false, true) => ValueType::Text,
        (true, true) => ValueType::Mixed,
        (false, false) => ValueType::Empty,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeSummary {
    pub rows_per_source: Vec<usize>,
    pub duplicates_dropped: usize,
}

/// Union schema (first-appearance column order), absent cells missing,
/// exact duplicate rows dropped, kinds re-inferred on the merged table.
/// A column holding only numbers in one source and only text in another
/// is a conflict.
pub fn merge_files(sources: &[&TabularDataset]) -> Result<(TabularDataset, MergeSummary), String> {
    if sources.len() < 2 {
        return Err("merge needs at least two datasets".into());
    }
    let mut header: Vec<String> = Vec::new();
    for s in sources {
        for name in s.column_names() {
            if !header.iter().any(|h| h == name) {
                header.push(name.to_string());
            }
        }
    }
    for name in &header {
        let types: Vec<ValueType> = sources
            .iter()
            .filter_map(|s| s.column_index(name).map(|c| value_type(s, c)))
            .collect();
        if types.contains(&ValueType::Number) && types.contains(&ValueType::Text) {
            return Err(format!("column '{name}' is numeric in one file and text in another"));
        }
    }
    let mut seen = HashSet::new();
    let mut rows = Vec::new();
    let mut dropped = 0;
    for s in sources {
        let idx: Vec<Option<usize>> = header.iter().map(|h| s.column_index(h)).collect();
        for r in 0..s.row_count() {
            let row: Vec<String> = idx.iter().map(|c| c.map(|c| s.cell(r, c).render()).unwrap_or_default()).collect();
            if seen.insert(row.clone()) {
                rows.push(row);
            } else {
                dropped += 1;
            }
        }
    }
    let merged = validate_dataset(&RawTable { header, rows }).map_err(|e| e.to_string())?;
    Ok((merged, MergeSummary { rows_per_source: sources.iter().map(|s| s.row_count()).collect(), duplicates_dropped: dropped }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::read_csv_str;

    #[test]
    fn identical_files_collapse() {
        let a = read_csv_str("x,y\n1.5,a\n2.5,b\n").unwrap();
        let (m, s) = merge_files(&[&a, &a]).unwrap();
        assert_eq!(m.row_count(), 2);
        assert_eq!(s.duplicates_dropped, 2);
    }

    #[test]
    fn disjoint_schemas_union() {
        let a = read_csv_str("x\n1.5\n").unwrap();
        let b = read_csv_str("z\n2.5\n").unwrap();
        let (m, _) = merge_files(&[&a, &b]).unwrap();
        assert_eq!(m.column_names(), vec!["x", "z"]);
        assert_eq!(m.total_missing(), 2);
    }

    #[test]
    fn kind_conflict() {
        let a = read_csv_str("x\n1.5\n").unwrap();
        let b = read_csv_str("x\nabc\n").unwrap();
        assert!(merge_files(&[&a, &b]).unwrap_err().contains("'x'"));
    }
}
