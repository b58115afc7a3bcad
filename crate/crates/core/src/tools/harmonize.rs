//! Value harmonization: case-insensitive recoding and unit rescaling.

use std::collections::{BTreeMap, BTreeSet};

use crate::dataset::{parse_number, Cell, ColumnKind, TabularDataset};
use crate::stats;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Harmonization {
    /// Recoding table; keys match case-insensitively against rendered cells.
    pub mapping: BTreeMap<String, String>,
    pub scale: Option<f64>,
    pub offset: Option<f64>,
    /// Restricts rescaling to these rows.
    pub rows: Option<Vec<usize>>,
    /// Restricts rescaling to values at or above this threshold.
    pub min_value: Option<f64>,
    pub round_digits: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarmonizeSummary {
    pub changed: usize,
    pub unmapped: Vec<String>,
}

pub fn harmonize_values(
    dataset: &TabularDataset,
    column: &str,
    h: &Harmonization,
) -> Result<(TabularDataset, HarmonizeSummary), String> {
    let c = dataset.column_index(column).ok_or_else(|| format!("column '{column}' not found"))?;
    let kind = dataset.columns()[c].kind;
    let lookup: BTreeMap<String, &String> = h.mapping.iter().map(|(k, v)| (k.to_lowercase(), v)).collect();
    let row_filter: Option<BTreeSet<usize>> = h.rows.as_ref().map(|r| r.iter().copied().collect());
    if let Some(rows) = &row_filter {
        if let Some(bad) = rows.iter().find(|&&r| r >= dataset.row_count()) {
            return Err(format!("row {bad} out of range"));
        }
    }
    let rescale = h.scale.is_some() || h.offset.is_some();
    if rescale && kind != ColumnKind::Numeric && dataset.column_cells(c).any(|x| matches!(x, Cell::Text(_))) {
        return Err(format!("column '{column}' holds text; it cannot be rescaled"));
    }

    let mut cells = Vec::with_capacity(dataset.row_count());
    let mut changed = 0;
    let mut unmapped = BTreeSet::new();
    for (r, cell) in dataset.column_cells(c).enumerate() {
        let mut out = cell.clone();
        if !cell.is_missing() && !lookup.is_empty() {
            match lookup.get(&cell.render().to_lowercase()) {
                Some(v) => {
                    out = match (kind, parse_number(v)) {
                        (_, Some(x)) if kind != ColumnKind::Text => Cell::Num(x),
                        (ColumnKind::Numeric, None) => return Err(format!("cannot map numeric column '{column}' to text '{v}'")),
                        _ => Cell::Text((*v).clone()),
                    };
                }
                None => {
                    unmapped.insert(cell.render());
                }
            }
        }
        if rescale {
            if let Cell::Num(x) = out {
                let in_rows = row_filter.as_ref().is_none_or(|s| s.contains(&r));
                let above = h.min_value.is_none_or(|m| x >= m);
                if in_rows && above {
                    let mut y = x * h.scale.unwrap_or(1.0) + h.offset.unwrap_or(0.0);
                    if let Some(d) = h.round_digits {
                        y = stats::round_to(y, d);
                    }
                    out = Cell::Num(y);
                }
            }
        }
        if !out.identical(cell) {
            changed += 1;
        }
        cells.push(out);
    }
    let out = dataset.with_column(c, cells, None).map_err(|e| e.to_string())?;
    Ok((out, HarmonizeSummary { changed, unmapped: unmapped.into_iter().collect() }))
}

/// Groups of distinct values that differ only by case or surrounding whitespace.
pub fn case_variants(dataset: &TabularDataset, col: usize) -> Vec<Vec<String>> {
    let mut groups: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for cell in dataset.column_cells(col) {
        if let Cell::Text(s) = cell {
            groups.entry(s.trim().to_lowercase()).or_default().insert(s.clone());
        }
    }
    groups.into_values().filter(|g| g.len() > 1).map(|g| g.into_iter().collect()).collect()
}

/// Maps every case variant to its most frequent spelling (ties: smallest).
pub fn canonical_case_mapping(dataset: &TabularDataset, col: usize) -> BTreeMap<String, String> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for cell in dataset.column_cells(col) {
        if let Cell::Text(s) = cell {
            *counts.entry(s.clone()).or_default() += 1;
        }
    }
    let mut mapping = BTreeMap::new();
    for group in case_variants(dataset, col) {
        let canon = group
            .iter()
            .max_by(|a, b| counts[*a].cmp(&counts[*b]).then(b.cmp(a)))
            .cloned()
            .unwrap_or_default();
        for v in group {
            mapping.insert(v, canon.clone());
        }
    }
    mapping
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::read_csv_str;

    #[test]
    fn unifies_case_variants() {
        let d = read_csv_str("sex\nMale\nmale\nF\nMALE\n").unwrap();
        let h = Harmonization { mapping: BTreeMap::from([("male".to_string(), "M".to_string())]), ..Default::default() };
        let (out, s) = harmonize_values(&d, "sex", &h).unwrap();
        let vals: Vec<String> = out.column_cells(0).map(Cell::render).collect();
        assert_eq!(vals, vec!["M", "M", "F", "M"]);
        assert_eq!(s.unmapped, vec!["F".to_string()]);
    }

    #[test]
    fn scale_converts_grams() {
        let d = read_csv_str("w\n1500\n72250\n").unwrap();
        let h = Harmonization { scale: Some(0.001), ..Default::default() };
        let (out, _) = harmonize_values(&d, "w", &h).unwrap();
        assert_eq!(out.numeric_column(0), vec![Some(1.5), Some(72.25)]);
    }

    #[test]
    fn empty_mapping_is_identity() {
        let d = read_csv_str("sex\nMale\nmale\n").unwrap();
        let (out, _) = harmonize_values(&d, "sex", &Harmonization::default()).unwrap();
        assert_eq!(out.fingerprint(), d.fingerprint());
    }

    #[test]
    fn canonical_spelling_is_majority() {
        let d = read_csv_str("g\nHigh\nHigh\nhigh\nLow\n").unwrap();
        let m = canonical_case_mapping(&d, 0);
        assert_eq!(m.get("high").map(String::as_str), Some("High"));
        assert!(!m.contains_key("Low"));
    }
}
