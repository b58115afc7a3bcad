use std::collections::HashSet;

use super::{parse_number, ColumnKind};

const CATEGORICAL_MAX_UNIQUE: usize = 20;
const CATEGORICAL_MAX_FRACTION: f64 = 0.05;

/// Empty string, `NA`, `NaN`, `null` (any case, surrounding whitespace ignored).
pub fn is_missing_marker(raw: &str) -> bool {
    let t = raw.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan") || t.eq_ignore_ascii_case("null")
}

/// `id`, `*_id`, `* id`, or a camel-case `...Id`/`...ID` suffix.
pub fn is_identifier_name(name: &str) -> bool {
    let lower = name.trim().to_ascii_lowercase();
    lower == "id"
        || lower.ends_with("_id")
        || lower.ends_with(" id")
        || lower.ends_with("-id")
        || (name.len() > 2 && (name.ends_with("Id") || name.ends_with("ID")))
}

/// Infers a column's kind from its raw string values.
///
/// Integer-valued columns with few distinct values (<20, or <5% of the
/// non-missing count) are categorical; other numbers are numeric. An
/// all-distinct integer column whose name looks like a key is an identifier.
/// Non-numeric columns are categorical under the same cardinality rule and
/// text otherwise.
pub fn infer_column_kind(name: &str, values: &[&str]) -> ColumnKind {
    let present: Vec<&str> = values.iter().copied().filter(|v| !is_missing_marker(v)).collect();
    if present.is_empty() {
        return ColumnKind::Numeric;
    }
    let n = present.len();
    let parsed: Option<Vec<f64>> = present.iter().map(|v| parse_number(v)).collect();
    let low_cardinality = |unique: usize| unique < CATEGORICAL_MAX_UNIQUE || (unique as f64) / (n as f64) < CATEGORICAL_MAX_FRACTION;

    match parsed {
        Some(nums) => {
            let integer = nums.iter().all(|v| v.fract() == 0.0);
            let unique = nums.iter().map(|v| v.to_bits()).collect::<HashSet<_>>().len();
            if integer && unique == n && n > 1 && is_identifier_name(name) {
                ColumnKind::Identifier
            } else if integer && low_cardinality(unique) {
                ColumnKind::Categorical
            } else {
                ColumnKind::Numeric
            }
        }
        None => {
            let unique = present.iter().collect::<HashSet<_>>().len();
            if unique == n && n > 1 && is_identifier_name(name) {
                ColumnKind::Identifier
            } else if low_cardinality(unique) {
                ColumnKind::Categorical
            } else {
                ColumnKind::Text
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(v: impl IntoIterator<Item = String>) -> Vec<String> {
        v.into_iter().collect()
    }

    fn kind(name: &str, vals: &[String]) -> ColumnKind {
        let refs: Vec<&str> = vals.iter().map(String::as_str).collect();
        infer_column_kind(name, &refs)
    }

    #[test]
    fn binary_integers_are_categorical() {
        let v = strings((0..100).map(|i| (i % 2).to_string()));
        assert_eq!(kind("smoker", &v), ColumnKind::Categorical);
    }

    #[test]
    fn distinct_reals_are_numeric() {
        let v = strings((0..100).map(|i| format!("{}.5", i)));
        assert_eq!(kind("bmi", &v), ColumnKind::Numeric);
    }

    #[test]
    fn id_column_is_identifier() {
        let v = strings((1..=100).map(|i| i.to_string()));
        assert_eq!(kind("id", &v), ColumnKind::Identifier);
        assert_eq!(kind("patient_id", &v), ColumnKind::Identifier);
        // Same values under a non-key name are plain numbers.
        assert_eq!(kind("count", &v), ColumnKind::Numeric);
    }

    #[test]
    fn five_percent_rule() {
        // 25 distinct integers among 1000 values: 2.5% < 5%.
        let v = strings((0..1000).map(|i| (i % 25).to_string()));
        assert_eq!(kind("grade", &v), ColumnKind::Categorical);
        // 25 distinct among 100 values: neither rule holds.
        let v = strings((0..100).map(|i| (i % 25).to_string()));
        assert_eq!(kind("grade", &v), ColumnKind::Numeric);
    }

    #[test]
    fn free_text_is_text() {
        let v = strings((0..50).map(|i| format!("note number {i}")));
        assert_eq!(kind("notes", &v), ColumnKind::Text);
        let v = strings((0..50).map(|i| if i % 2 == 0 { "Male".into() } else { "Female".into() }));
        assert_eq!(kind("sex", &v), ColumnKind::Categorical);
    }

    #[test]
    fn missing_markers() {
        for m in ["", " ", "NA", "na", "NaN", "nan", "NULL", "null"] {
            assert!(is_missing_marker(m), "{m:?}");
        }
        assert!(!is_missing_marker("0"));
        assert!(!is_missing_marker("none"));
    }

    #[test]
    fn all_missing_column_defaults_numeric() {
        assert_eq!(infer_column_kind("x", &["", "NA"]), ColumnKind::Numeric);
    }

    #[test]
    fn row_order_does_not_change_kind() {
        let mut v = strings((0..60).map(|i| (i % 3).to_string()));
        let a = kind("c", &v);
        v.reverse();
        assert_eq!(a, kind("c", &v));
    }
}
