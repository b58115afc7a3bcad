//! Fold assignment, optionally keeping every group inside one fold.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ModelError;
use crate::dataset::TabularDataset;

/// Fold index per row. With a group column, groups (in first-appearance
/// order) are shuffled and dealt round-robin, so fold sizes differ by at
/// most one group. Without one, rows are dealt the same way.
pub fn split_grouped(
    dataset: &TabularDataset,
    group_col: Option<&str>,
    folds: usize,
    seed: u64,
) -> Result<Vec<usize>, ModelError> {
    if folds < 2 {
        return Err(ModelError::TooFewFolds(folds));
    }
    let n = dataset.row_count();
    let keys: Vec<String> = match group_col {
        Some(g) => {
            let c = dataset.column_index(g).ok_or_else(|| ModelError::MissingFeature(g.to_string()))?;
            let mut keys = Vec::with_capacity(n);
            for (r, cell) in dataset.column_cells(c).enumerate() {
                if cell.is_missing() {
                    return Err(ModelError::MissingGroupId(r));
                }
                keys.push(cell.render());
            }
            keys
        }
        None => (0..n).map(|i| i.to_string()).collect(),
    };
    assign_groups(&keys, folds, seed)
}

/// Same as [`split_grouped`] over explicit group keys.
pub fn assign_groups(keys: &[String], folds: usize, seed: u64) -> Result<Vec<usize>, ModelError> {
    if folds < 2 {
        return Err(ModelError::TooFewFolds(folds));
    }
    let mut groups: Vec<&str> = Vec::new();
    let mut seen = std::collections::HashMap::new();
    for k in keys {
        if !seen.contains_key(k.as_str()) {
            seen.insert(k.as_str(), groups.len());
            groups.push(k);
        }
    }
    if groups.len() < folds {
        return Err(ModelError::TooFewGroups { groups: groups.len(), folds });
    }
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of_group = vec![0; groups.len()];
    for (pos, &g) in order.iter().enumerate() {
        fold_of_group[g] = pos % folds;
    }
    Ok(keys.iter().map(|k| fold_of_group[seen[k.as_str()]]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_groups_five_folds() {
        let keys: Vec<String> = (0..30).map(|i| (i % 10).to_string()).collect();
        let f = assign_groups(&keys, 5, 3).unwrap();
        for fold in 0..5 {
            let groups: std::collections::BTreeSet<&String> =
                keys.iter().zip(&f).filter(|(_, &x)| x == fold).map(|(k, _)| k).collect();
            assert_eq!(groups.len(), 2);
        }
    }

    #[test]
    fn fewer_groups_than_folds() {
        let keys: Vec<String> = vec!["a".into(), "b".into()];
        assert_eq!(assign_groups(&keys, 3, 0), Err(ModelError::TooFewGroups { groups: 2, folds: 3 }));
        assert_eq!(assign_groups(&keys, 1, 0), Err(ModelError::TooFewFolds(1)));
    }
}
