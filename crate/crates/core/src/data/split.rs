use std::collections::HashMap;

use super::ResponseDataset;
use crate::error::{Error, Result};

/// Chronological per-student hold-out: the last `ceil(fraction * n)` records
/// of each student's log go to the test set. Students with a single record
/// stay wholly in train, and every student keeps at least one train record.
///
/// The split is a pure function of its inputs; record order within each
/// output follows the input.
pub fn split_dataset(
    dataset: &ResponseDataset,
    test_fraction: f64,
) -> Result<(ResponseDataset, ResponseDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidFraction(test_fraction));
    }
    let mut orders: HashMap<usize, Vec<usize>> = HashMap::new();
    for r in &dataset.records {
        orders.entry(r.student).or_default().push(r.order_index);
    }
    // First order_index that belongs to the test side, per student.
    let cutoffs: HashMap<usize, usize> = orders
        .into_iter()
        .filter_map(|(student, mut idx)| {
            let n = idx.len();
            if n < 2 {
                return None;
            }
            idx.sort_unstable();
            let n_test = ((test_fraction * n as f64).ceil() as usize).min(n - 1);
            Some((student, idx[n - n_test]))
        })
        .collect();

    let (test, train): (Vec<_>, Vec<_>) = dataset.records.iter().partition(|r| {
        cutoffs
            .get(&r.student)
            .is_some_and(|&cut| r.order_index >= cut)
    });
    Ok((dataset.with_records(train), dataset.with_records(test)))
}
