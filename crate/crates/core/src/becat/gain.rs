use super::weights::WeightMatrix;
use crate::error::{Error, Result};

fn positions(weight: &WeightMatrix, items: &[usize]) -> Result<Vec<bool>> {
    let mut in_set = vec![false; weight.len()];
    for &item in items {
        in_set[weight.position(item)?] = true;
    }
    Ok(in_set)
}

/// Best weight from each pool member to the selected set. Holds enough to
/// evaluate the coverage score of `S` and of `S ∪ {q}` for any `q`.
#[derive(Debug, Clone)]
pub struct Coverage {
    in_set: Vec<bool>,
    /// `max_{j ∈ S} w[i][j]`; `None` while `S` is empty.
    best: Vec<Option<f64>>,
}

impl Coverage {
    pub fn new(weight: &WeightMatrix, selected: &[usize]) -> Result<Self> {
        let in_set = positions(weight, selected)?;
        let members: Vec<usize> = (0..in_set.len()).filter(|&j| in_set[j]).collect();
        let best = (0..in_set.len())
            .map(|i| members.iter().map(|&j| weight.get(i, j)).reduce(f64::max))
            .collect();
        Ok(Coverage { in_set, best })
    }

    /// `F(S) = Σ_{i ∉ S} max_{j ∈ S} w[i][j]`, zero for the empty set.
    pub fn score(&self) -> f64 {
        self.best
            .iter()
            .zip(&self.in_set)
            .filter(|(_, &s)| !s)
            .map(|(b, _)| b.unwrap_or(0.0))
            .sum()
    }

    /// `F(S ∪ {pos})`, summing in the same order as [`Coverage::score`].
    pub fn score_with(&self, weight: &WeightMatrix, pos: usize) -> f64 {
        (0..self.best.len())
            .filter(|&i| !self.in_set[i] && i != pos)
            .map(|i| {
                let w = weight.get(i, pos);
                self.best[i].map_or(w, |b| b.max(w))
            })
            .sum()
    }

    pub fn contains(&self, pos: usize) -> bool {
        self.in_set[pos]
    }

    /// `F(S ∪ {pos}) − F(S)`.
    pub fn gain(&self, weight: &WeightMatrix, pos: usize) -> f64 {
        self.score_with(weight, pos) - self.score()
    }
}

/// Coverage of the unselected pool by `selected` (item ids).
pub fn info_score(weight: &WeightMatrix, selected: &[usize]) -> Result<f64> {
    Ok(Coverage::new(weight, selected)?.score())
}

/// Score increment from adding `item` to `selected`. Can be negative: the
/// new member stops contributing its own coverage term.
pub fn marginal_gain(weight: &WeightMatrix, selected: &[usize], item: usize) -> Result<f64> {
    let pos = weight.position(item)?;
    let cov = Coverage::new(weight, selected)?;
    if cov.contains(pos) {
        return Err(Error::AlreadySelected(item));
    }
    Ok(cov.gain(weight, pos))
}
