#![allow(dead_code)]

use eduloop_core::data::{QMatrix, ResponseDataset, ResponseRecord};
use eduloop_core::ncd::{fit, Dims, NcdModel, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Untrained model with weights large enough to make every path matter.
pub fn random_model(seed: u64, n_students: usize, n_items: usize, d: usize) -> (NcdModel, QMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = QMatrix::from_rows(
        (0..n_items)
            .map(|_| {
                let a = rng.random_range(0..d);
                let b = rng.random_range(0..d);
                if rng.random_bool(0.4) && a != b {
                    vec![a.min(b), a.max(b)]
                } else {
                    vec![a]
                }
            })
            .collect(),
        d,
    )
    .unwrap();
    let dims = Dims {
        n_students,
        n_items,
        n_knowledge: d,
        hidden_sizes: vec![8, 4],
    };
    let mut model = NcdModel::init(dims, 1.0, &mut rng);
    for v in model.theta.as_mut_slice() {
        *v = rng.random_range(-2.0..2.0);
    }
    (model, q)
}

pub fn random_ability(seed: u64, d: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()
}

/// Logistic ground truth over a random Q-matrix.
pub fn toy_data(seed: u64) -> (ResponseDataset, QMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n_students, n_items, d) = (80, 50, 6);
    let q = QMatrix::from_rows(
        (0..n_items)
            .map(|i| {
                if i % 4 == 0 {
                    vec![i % d, (i + 1) % d]
                } else {
                    vec![i % d]
                }
            })
            .map(|mut r| {
                r.sort_unstable();
                r
            })
            .collect(),
        d,
    )
    .unwrap();
    let skill: Vec<Vec<f64>> = (0..n_students)
        .map(|_| {
            let g: f64 = rng.random_range(-1.5..1.5);
            (0..d).map(|_| g + rng.random_range(-0.7..0.7)).collect()
        })
        .collect();
    let difficulty: Vec<f64> = (0..n_items).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut records = Vec::new();
    for (s, sk) in skill.iter().enumerate() {
        for t in 0..30 {
            let item = rng.random_range(0..n_items);
            let m = q.row(item).iter().map(|&k| sk[k]).sum::<f64>() / q.row(item).len() as f64;
            let p = 1.0 / (1.0 + (-(1.5 * (m - difficulty[item]))).exp());
            records.push(ResponseRecord {
                student: s,
                item,
                correct: rng.random_bool(p),
                order_index: t,
            });
        }
    }
    (
        ResponseDataset {
            records,
            n_students,
            n_items,
            n_knowledge: d,
        },
        q,
    )
}

pub fn toy_trained(seed: u64) -> (NcdModel, ResponseDataset, QMatrix) {
    let (data, q) = toy_data(seed);
    let cfg = TrainConfig {
        epochs: 8,
        learning_rate: 0.02,
        batch_size: 32,
        hidden_sizes: vec![16, 8],
        seed,
        ..TrainConfig::default()
    };
    let (model, _) = fit(&data, None, &q, &cfg).unwrap();
    (model, data, q)
}
