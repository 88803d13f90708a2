//! Reference computations written straight from the model definitions,
//! sharing nothing with the library beyond its public data types.
#![allow(dead_code)]

use eduloop_core::becat::WeightMatrix;
use eduloop_core::data::{QMatrix, ResponseDataset, ResponseRecord};
use eduloop_core::ncd::{train_epoch, NcdModel, Optimizer, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sig(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Dense forward pass. Returns the probability and `∇_θ logit`.
pub fn forward(model: &NcdModel, ability: &[f64], item: usize, q: &QMatrix) -> (f64, Vec<f64>) {
    let d = ability.len();
    let alpha = model.alpha_raw[item].exp().ln_1p();
    let mut mask = vec![0.0; d];
    for &k in q.row(item) {
        mask[k] = 1.0;
    }
    let beta = model.beta.row(item);
    let x: Vec<f64> = (0..d)
        .map(|k| alpha * mask[k] * (sig(ability[k]) - sig(beta[k])))
        .collect();

    let n = model.mlp.len();
    let mut acts = vec![x];
    let mut logit = 0.0;
    for (l, layer) in model.mlp.iter().enumerate() {
        let input = acts.last().unwrap();
        let z: Vec<f64> = (0..layer.bias.len())
            .map(|j| {
                let mut s = layer.bias[j];
                for (i, &v) in input.iter().enumerate() {
                    s += layer.weights.get(j, i) * v;
                }
                s
            })
            .collect();
        if l + 1 == n {
            logit = z[0];
        } else {
            acts.push(z.into_iter().map(sig).collect());
        }
    }

    // d logit / d (layer input), walking back from the output.
    let mut up = vec![1.0];
    for l in (0..n).rev() {
        let layer = &model.mlp[l];
        let width_in = acts[l].len();
        let mut down = vec![0.0; width_in];
        for (j, &u) in up.iter().enumerate() {
            for (i, dv) in down.iter_mut().enumerate() {
                *dv += u * layer.weights.get(j, i);
            }
        }
        if l > 0 {
            for (dv, &h) in down.iter_mut().zip(&acts[l]) {
                *dv *= h * (1.0 - h);
            }
        }
        up = down;
    }
    let grad = (0..d)
        .map(|k| {
            let u = sig(ability[k]);
            up[k] * alpha * mask[k] * u * (1.0 - u)
        })
        .collect();
    (sig(logit), grad)
}

/// `∇_θ` of the cross-entropy for one answer.
pub fn loss_gradient(
    model: &NcdModel,
    ability: &[f64],
    item: usize,
    q: &QMatrix,
    correct: bool,
) -> Vec<f64> {
    let (p, g) = forward(model, ability, item, q);
    let r = if correct { 1.0 } else { 0.0 };
    g.iter().map(|v| (p - r) * v).collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Copies the model, writes `ability` into `student`'s row, runs one real
/// SGD step on the single answer and measures how far that row moved.
pub fn stepped_change(
    model: &NcdModel,
    student: usize,
    ability: &[f64],
    item: usize,
    q: &QMatrix,
    correct: bool,
    lr: f64,
) -> f64 {
    let mut m = model.clone();
    m.theta.row_mut(student).copy_from_slice(ability);
    let data = ResponseDataset {
        records: vec![ResponseRecord {
            student,
            item,
            correct,
            order_index: 0,
        }],
        n_students: model.theta.rows(),
        n_items: model.beta.rows(),
        n_knowledge: ability.len(),
    };
    let cfg = TrainConfig {
        learning_rate: lr,
        batch_size: 1,
        optimizer: Optimizer::Sgd,
        ..TrainConfig::default()
    };
    train_epoch(&mut m, &data, q, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    dist(m.theta.row(student), ability)
}

/// Clone-and-step expected model change.
pub fn emc(
    model: &NcdModel,
    student: usize,
    ability: &[f64],
    item: usize,
    q: &QMatrix,
    lr: f64,
) -> f64 {
    let (p, _) = forward(model, ability, item, q);
    p * stepped_change(model, student, ability, item, q, true, lr)
        + (1.0 - p) * stepped_change(model, student, ability, item, q, false, lr)
}

/// Entry by entry Monte Carlo estimate of the item similarity matrix.
pub fn weights(
    model: &NcdModel,
    ability: &[f64],
    candidates: &[usize],
    q: &QMatrix,
    n_samples: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u: Vec<f64> = (0..n_samples).map(|_| rng.random::<f64>()).collect();
    let m = candidates.len();
    let mut d = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let (pi, _) = forward(model, ability, candidates[i], q);
            let (pj, _) = forward(model, ability, candidates[j], q);
            let mut total = 0.0;
            for &ut in &u {
                let gi = loss_gradient(model, ability, candidates[i], q, ut < pi);
                let gj = loss_gradient(model, ability, candidates[j], q, ut < pj);
                total += dist(&gi, &gj);
            }
            d[i][j] = total / n_samples as f64;
        }
    }
    let c = d.iter().flatten().copied().fold(0.0, f64::max);
    d.iter()
        .map(|row| row.iter().map(|v| c - v).collect())
        .collect()
}

/// Coverage objective from its definition, over pool positions.
pub fn coverage(w: &WeightMatrix, set: &[usize]) -> f64 {
    if set.is_empty() {
        return 0.0;
    }
    (0..w.len())
        .filter(|i| !set.contains(i))
        .map(|i| {
            set.iter()
                .map(|&j| w.get(i, j))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum()
}

/// Brute-force greedy: at each step the unselected position maximizing the
/// coverage of the enlarged set, ties to the smaller item id.
pub fn greedy_exhaustive(w: &WeightMatrix, steps: usize) -> Vec<usize> {
    let mut chosen: Vec<usize> = Vec::new();
    for _ in 0..steps.min(w.len()) {
        let base = coverage(w, &chosen);
        let mut best: Option<(usize, f64)> = None;
        for p in 0..w.len() {
            if chosen.contains(&p) {
                continue;
            }
            let mut with = chosen.clone();
            with.push(p);
            let gain = coverage(w, &with) - base;
            let take = match best {
                None => true,
                Some((b, g)) => gain > g || (gain == g && w.candidate_ids[p] < w.candidate_ids[b]),
            };
            if take {
                best = Some((p, gain));
            }
        }
        chosen.push(best.unwrap().0);
    }
    chosen.iter().map(|&p| w.candidate_ids[p]).collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}
