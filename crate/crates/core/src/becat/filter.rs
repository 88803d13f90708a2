use std::collections::BTreeSet;

use crate::data::{KnowledgeGraph, QMatrix};

/// Narrows `pool` to items that practise a weak knowledge point
/// (mastery below `threshold`) or a direct prerequisite of one. Falls back
/// to the whole pool when nothing qualifies.
pub fn filter_candidates(
    q: &QMatrix,
    graph: &KnowledgeGraph,
    mastery_row: &[f64],
    threshold: f64,
    pool: &[usize],
) -> Vec<usize> {
    let weak: BTreeSet<usize> = mastery_row
        .iter()
        .enumerate()
        .filter(|(_, &m)| m < threshold)
        .map(|(k, _)| k)
        .collect();
    let mut target = weak.clone();
    for &k in &weak {
        target.extend(graph.prerequisites_of(k));
    }
    let kept: Vec<usize> = pool
        .iter()
        .copied()
        .filter(|&item| q.row(item).iter().any(|k| target.contains(k)))
        .collect();
    if kept.is_empty() {
        pool.to_vec()
    } else {
        kept
    }
}
