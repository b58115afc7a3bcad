use sha2::{Digest, Sha256};

use super::{format_number, Cell, ColumnMeta, TabularDataset};

/// Hex SHA-256 over the canonical serialization of a dataset.
pub fn dataset_fingerprint(dataset: &TabularDataset) -> String {
    compute(dataset.columns(), dataset.rows())
}

// Canonical form: length-prefixed column names and kinds in order, then
// cells row-major. Numbers use shortest round-trip decimal, text is
// length-prefixed, missing has its own tag.
pub(super) fn compute(columns: &[ColumnMeta], rows: &[Vec<Cell>]) -> String {
    let mut h = Sha256::new();
    h.update(b"curate-dataset-v1\n");
    h.update((columns.len() as u64).to_le_bytes());
    for c in columns {
        put_str(&mut h, &c.name);
        put_str(&mut h, c.kind.tag());
    }
    h.update((rows.len() as u64).to_le_bytes());
    for row in rows {
        for cell in row {
            match cell {
                Cell::Num(v) => {
                    h.update(b"n");
                    put_str(&mut h, &format_number(*v));
                }
                Cell::Text(s) => {
                    h.update(b"s");
                    put_str(&mut h, s);
                }
                Cell::Missing => h.update(b"m"),
            }
        }
    }
    hex::encode(h.finalize())
}

fn put_str(h: &mut Sha256, s: &str) {
    h.update((s.len() as u64).to_le_bytes());
    h.update(s.as_bytes());
}

#[cfg(test)]
mod tests {
    use super::super::{ColumnKind, TabularDataset};
    use super::*;
    use proptest::prelude::*;

    fn sample() -> TabularDataset {
        TabularDataset::new(
            vec![("a".into(), ColumnKind::Numeric), ("b".into(), ColumnKind::Categorical)],
            vec![
                vec![Cell::Num(1.0), Cell::Text("x".into())],
                vec![Cell::Missing, Cell::Text("y".into())],
            ],
        )
        .unwrap()
    }

    #[test]
    fn copies_share_fingerprint() {
        let d = sample();
        assert_eq!(d.fingerprint(), d.clone().fingerprint());
        assert_eq!(dataset_fingerprint(&d), d.fingerprint());
        assert_eq!(d.fingerprint().len(), 64);
    }

    #[test]
    fn missing_differs_from_empty_text() {
        let a = TabularDataset::new(vec![("t".into(), ColumnKind::Text)], vec![vec![Cell::Missing]]).unwrap();
        let b = TabularDataset::new(vec![("t".into(), ColumnKind::Text)], vec![vec![Cell::Text(String::new())]]).unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn kind_is_part_of_identity() {
        let a = TabularDataset::new(vec![("t".into(), ColumnKind::Numeric)], vec![vec![Cell::Num(1.0)]]).unwrap();
        let b = TabularDataset::new(vec![("t".into(), ColumnKind::Categorical)], vec![vec![Cell::Num(1.0)]]).unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn cell_boundaries_are_unambiguous() {
        let mk = |x: &str, y: &str| {
            TabularDataset::new(
                vec![("a".into(), ColumnKind::Text), ("b".into(), ColumnKind::Text)],
                vec![vec![Cell::Text(x.into()), Cell::Text(y.into())]],
            )
            .unwrap()
        };
        assert_ne!(mk("ab", "c").fingerprint(), mk("a", "bc").fingerprint());
    }

    fn grid() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1usize..6, 1usize..8).prop_flat_map(|(w, h)| {
            prop::collection::vec(prop::collection::vec(-1e6f64..1e6, w), h)
        })
    }

    proptest! {
        #[test]
        fn single_cell_edit_changes_fingerprint(vals in grid(), r in 0usize..8, c in 0usize..6, delta in 1e-9f64..1e3) {
            let w = vals[0].len();
            let schema: Vec<_> = (0..w).map(|i| (format!("c{i}"), ColumnKind::Numeric)).collect();
            let rows: Vec<Vec<Cell>> = vals.iter().map(|r| r.iter().map(|v| Cell::Num(*v)).collect()).collect();
            let base = TabularDataset::new(schema.clone(), rows.clone()).unwrap();
            let (r, c) = (r % rows.len(), c % w);
            let mut edited = rows.clone();
            let old = edited[r][c].as_f64().unwrap();
            let new = old + delta.max(old.abs() * 1e-12);
            prop_assume!(new != old);
            edited[r][c] = Cell::Num(new);
            let changed = TabularDataset::new(schema.clone(), edited).unwrap();
            prop_assert_ne!(base.fingerprint(), changed.fingerprint());
            let mut blanked = rows;
            blanked[r][c] = Cell::Missing;
            let blank = TabularDataset::new(schema, blanked).unwrap();
            prop_assert_ne!(base.fingerprint(), blank.fingerprint());
        }
    }
}
