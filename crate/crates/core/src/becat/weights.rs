use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::emc::{dloss_dlogit, probe, AbilityProbe};
use crate::data::QMatrix;
use crate::error::{Error, Result};
use crate::ncd::{Matrix, NcdModel};
use crate::par;

/// Symmetric non-negative similarity over a candidate pool.
/// Rows and columns follow `candidate_ids`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix {
    pub w: Matrix,
    /// Offset that makes every entry non-negative; also the diagonal value.
    pub c: f64,
    pub candidate_ids: Vec<usize>,
}

impl WeightMatrix {
    pub fn len(&self) -> usize {
        self.candidate_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidate_ids.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w.get(i, j)
    }

    /// Position of `item` in the pool.
    pub fn position(&self, item: usize) -> Result<usize> {
        self.candidate_ids
            .iter()
            .position(|&c| c == item)
            .ok_or(Error::NotACandidate(item))
    }
}

/// Estimates `W[i][j] = C − E‖∇_θ loss_i − ∇_θ loss_j‖₂` by Monte Carlo.
///
/// Sample `t` draws one uniform `u_t` from a ChaCha8 stream seeded with
/// `seed`, and every item's response is `u_t < p_i`. Sharing the draw
/// across items keeps each marginal Bernoulli(`p_i`) while identical items
/// always answer alike. `C` is the largest estimated distance, so the
/// smallest weight is exactly zero.
pub fn weight_matrix(
    model: &NcdModel,
    ability: &[f64],
    candidates: &[usize],
    q: &QMatrix,
    n_samples: usize,
    seed: u64,
) -> Result<WeightMatrix> {
    if candidates.is_empty() {
        return Err(Error::Empty("weight matrix needs at least one candidate"));
    }
    if n_samples == 0 {
        return Err(Error::InvalidConfig("n_samples must be positive".into()));
    }
    let probes: Vec<AbilityProbe> = candidates
        .iter()
        .map(|&item| probe(model, ability, item, q.get(item)?))
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<f64> = (0..n_samples).map(|_| rng.random::<f64>()).collect();

    // Loss-gradient coefficient under (incorrect, correct).
    let coef: Vec<[f64; 2]> = probes
        .iter()
        .map(|p| [dloss_dlogit(p.p, 0.0), dloss_dlogit(p.p, 1.0)])
        .collect();

    let m = candidates.len();
    let upper: Vec<Vec<f64>> = par::map_range(m, |i| {
        ((i + 1)..m)
            .map(|j| {
                let mut dist = [[0.0; 2]; 2];
                for (yi, row) in dist.iter_mut().enumerate() {
                    for (yj, cell) in row.iter_mut().enumerate() {
                        let (ci, cj) = (coef[i][yi], coef[j][yj]);
                        *cell = probes[i]
                            .logit_grad
                            .iter()
                            .zip(&probes[j].logit_grad)
                            .map(|(gi, gj)| {
                                let diff = ci * gi - cj * gj;
                                diff * diff
                            })
                            .sum::<f64>()
                            .sqrt();
                    }
                }
                let total: f64 = draws
                    .iter()
                    .map(|&u| {
                        let yi = usize::from(u < probes[i].p);
                        let yj = usize::from(u < probes[j].p);
                        dist[yi][yj]
                    })
                    .sum();
                total / n_samples as f64
            })
            .collect()
    });

    let mut dist = Matrix::zeros(m, m);
    for (i, row) in upper.iter().enumerate() {
        for (off, &d) in row.iter().enumerate() {
            let j = i + 1 + off;
            dist.set(i, j, d);
            dist.set(j, i, d);
        }
    }
    let c = dist.as_slice().iter().copied().fold(0.0, f64::max);
    let w = Matrix::from_fn(m, m, |i, j| c - dist.get(i, j));
    Ok(WeightMatrix {
        w,
        c,
        candidate_ids: candidates.to_vec(),
    })
}
