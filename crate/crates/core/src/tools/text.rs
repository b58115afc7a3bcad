//! Regex feature extraction from free-text columns.

use std::collections::BTreeMap;

use regex::RegexBuilder;

use crate::dataset::{Cell, ColumnKind, TabularDataset};

/// Appends one 0/1 column per pattern (1 iff the regex matches the cell;
/// missing cells give 0). Patterns apply case-insensitively when asked.
pub fn extract_text_features(
    dataset: &TabularDataset,
    column: &str,
    patterns: &BTreeMap<String, String>,
    case_insensitive: bool,
) -> Result<(TabularDataset, BTreeMap<String, usize>), String> {
    let c = dataset.column_index(column).ok_or_else(|| format!("column '{column}' not found"))?;
    let kind = dataset.columns()[c].kind;
    if !matches!(kind, ColumnKind::Text | ColumnKind::Categorical) || dataset.column_cells(c).any(|x| matches!(x, Cell::Num(_))) {
        return Err(format!("column '{column}' is not a text column"));
    }
    let mut out = dataset.clone();
    let mut hits = BTreeMap::new();
    for (name, pattern) in patterns {
        if out.column_index(name).is_some() {
            return Err(format!("pattern name '{name}' collides with an existing column"));
        }
        let re = RegexBuilder::new(pattern)
            .case_insensitive(case_insensitive)
            .build()
            .map_err(|e| format!("invalid regex for '{name}': {e}"))?;
        let cells: Vec<Cell> = dataset
            .column_cells(c)
            .map(|cell| Cell::Num(if cell.as_str().is_some_and(|s| re.is_match(s)) { 1.0 } else { 0.0 }))
            .collect();
        hits.insert(name.clone(), cells.iter().filter(|x| x.as_f64() == Some(1.0)).count());
        out = out.push_column(name, ColumnKind::Categorical, cells).map_err(|e| e.to_string())?;
    }
    Ok((out, hits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::read_csv_str;

    fn notes() -> TabularDataset {
        read_csv_str("note\nex-smoker with cough\nno complaints today\n").unwrap()
    }

    #[test]
    fn match_and_no_match() {
        let p = BTreeMap::from([("smoker".to_string(), "smok".to_string())]);
        let (out, _) = extract_text_features(&notes(), "note", &p, true).unwrap();
        assert_eq!(out.numeric_column(1), vec![Some(1.0), Some(0.0)]);
        assert_eq!(out.column_count(), 2);
    }

    #[test]
    fn collisions_and_bad_regex() {
        let p = BTreeMap::from([("note".to_string(), "x".to_string())]);
        assert!(extract_text_features(&notes(), "note", &p, true).is_err());
        let p = BTreeMap::from([("f".to_string(), "(".to_string())]);
        assert!(extract_text_features(&notes(), "note", &p, true).unwrap_err().contains("invalid regex"));
    }
}
